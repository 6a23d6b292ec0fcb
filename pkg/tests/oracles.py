"""Independent reference computations used as test oracles.

Nothing here calls into the package's evaluation code; each routine is a
direct, slow transcription of the underlying definition.
"""
import numpy as np

from holefill.geom import BSplineSurface, KnotVector


def cox_de_boor(knots, p, i, u):
    """N_{i,p}(u) by the textbook recursion with half-open spans; the right
    domain end is closed by evaluating just inside it."""
    t = np.asarray(knots, dtype=float)
    if u == t[-1]:
        u = np.nextafter(u, -np.inf)
    if p == 0:
        return 1.0 if t[i] <= u < t[i + 1] else 0.0
    out = 0.0
    if t[i + p] > t[i]:
        out += (u - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, p - 1, i, u)
    if t[i + p + 1] > t[i + 1]:
        out += (t[i + p + 1] - u) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, p - 1, i + 1, u)
    return out


def cox_de_boor_row(knots, p, u):
    n = len(knots) - p - 1
    return np.array([cox_de_boor(knots, p, i, u) for i in range(n)])


def greville_points(knots: KnotVector):
    t, p = knots.values, knots.degree
    return np.array([t[i + 1:i + p + 1].mean() for i in range(knots.n_basis)])


def random_interior(rng, count=4, gap=0.1):
    while True:
        k = np.sort(rng.uniform(0.05, 0.95, count))
        if np.all(np.diff(np.r_[0.0, k, 1.0]) > gap):
            return k


def random_surface(rng, n=8, amplitude=0.3):
    """Clamped cubic surface with random interior knots: a flat sheet
    (control points at the Greville abscissae) displaced by a smooth random
    trigonometric field."""
    ku = KnotVector.from_interior(random_interior(rng, n - 4))
    kv = KnotVector.from_interior(random_interior(rng, n - 4))
    cp = flat_surface(n, ku, kv).control_points
    x, y = cp[..., 0], cp[..., 1]
    for c in range(3):
        fx, fy = rng.uniform(0.5, 2.0, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        cp[..., c] += amplitude * np.sin(fx * np.pi * x + px) * np.cos(fy * np.pi * y + py)
    return BSplineSurface(ku, kv, cp)


def flat_surface(n=8, ku=None, kv=None):
    """Control points at the Greville abscissae, so S(u, v) = (u, v, 0)."""
    ku = ku or KnotVector.uniform(n)
    kv = kv or KnotVector.uniform(n)
    x, y = np.meshgrid(greville_points(ku), greville_points(kv), indexing="ij")
    cp = np.stack([x, y, np.zeros_like(x)], axis=-1)
    return BSplineSurface(ku, kv, cp)


def central_difference(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


JET_SLOTS = {(1, 0): "S_u", (0, 1): "S_v", (2, 0): "S_uu", (1, 1): "S_uv",
             (0, 2): "S_vv", (3, 0): "S_uuu", (2, 1): "S_uuv", (1, 2): "S_uvv",
             (0, 3): "S_vvv"}


def jet_fd_failures(surface, u, v, h=1e-5):
    """Jet slots that disagree with a central difference of the slot one
    order below: relative error >= 1e-6, or absolute >= 1e-8 when the true
    value is below 1 in norm. Returns {slot: error}."""
    from holefill.geom import surface_jet
    jet = surface_jet(surface, u, v)
    bad = {}
    for (a, b), name in JET_SLOTS.items():
        if a > 0:
            lower = JET_SLOTS.get((a - 1, b), "position")
            f = lambda x: getattr(surface_jet(surface, x, v), lower)
            fd = (f(u + h) - f(u - h)) / (2 * h)
        else:
            lower = JET_SLOTS.get((a, b - 1), "position")
            f = lambda y: getattr(surface_jet(surface, u, y), lower)
            fd = (f(v + h) - f(v - h)) / (2 * h)
        an = getattr(jet, name)
        err, mag = np.linalg.norm(fd - an), np.linalg.norm(an)
        if (mag >= 1.0 and err / mag >= 1e-6) or (mag < 1.0 and err >= 1e-8):
            bad[name] = err
    return bad


def jet_away_from_knots(rng, surface, margin=1e-3):
    """Random (u, v) whose difference stencil stays inside one knot span
    (third derivatives jump across knots)."""
    while True:
        u, v = rng.uniform(0.01, 0.99, 2)
        if (np.min(np.abs(surface.knots_u.interior - u)) > margin
                and np.min(np.abs(surface.knots_v.interior - v)) > margin):
            return u, v


def midpoint_fairness(surface: BSplineSurface, m=400):
    """Bending plus rate-of-change-of-bending energy by an m x m midpoint rule.

    The integrand is assembled from the surface's own derivative tables at
    the cell midpoints (these are checked separately against finite
    differences).

    The cells are laid out span by span (about m in total per direction),
    so no cell straddles a knot where the third derivatives jump; a plain
    uniform grid would lose its second-order accuracy there.
    """
    gu, wu = _span_midpoints(surface.knots_u, m)
    gv, wv = _span_midpoints(surface.knots_v, m)
    D = surface.evaluate_grid(gu, gv, order=3)
    sq = lambda a, b: np.sum(D[:, :, a, b] ** 2, axis=-1)
    integrand = (sq(2, 0) + 2 * sq(1, 1) + sq(0, 2)
                 + sq(3, 0) + 3 * sq(2, 1) + 3 * sq(1, 2) + sq(0, 3))
    return float(wu @ integrand @ wv)


def _span_midpoints(knots, m):
    brk = np.unique(knots.values)
    pts, wts = [], []
    for a, b in zip(brk[:-1], brk[1:]):
        k = max(1, round(m * (b - a) / (brk[-1] - brk[0])))
        pts.append(a + (b - a) * (np.arange(k) + 0.5) / k)
        wts.append(np.full(k, (b - a) / k))
    return np.concatenate(pts), np.concatenate(wts)


def segments_cross_bruteforce(uv):
    """All-pairs intersection test of a closed polyline, one pair at a time,
    with exact orientation predicates."""
    n = len(uv)
    segs = [(uv[i], uv[(i + 1) % n]) for i in range(n)]

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return int(v > 0) - int(v < 0)

    def on(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    def hit(p1, p2, q1, q2):
        o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
        o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
        if o1 * o2 < 0 and o3 * o4 < 0:
            return True
        return ((o1 == 0 and on(p1, p2, q1)) or (o2 == 0 and on(p1, p2, q2))
                or (o3 == 0 and on(q1, q2, p1)) or (o4 == 0 and on(q1, q2, p2)))

    pairs = []
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if hit(*segs[i], *segs[j]):
                pairs.append((i, j))
    return pairs
