"""An N-sided hole around an extraordinary vertex.

Catmull-Clark subdivision of a cube keeps its eight corners at valence 3,
and no single tensor-product patch covers the neighbourhood of such a
vertex. Cutting the faces around one corner out of a twice-subdivided cube
leaves a six-sided hole whose boundary lies on the smooth limit surface.
We fill that hole with the two parameterization baselines.

Run:  python demos/04_subdivision_hole.py [output_dir]
"""
import sys
from pathlib import Path

import numpy as np

from holefill.geom import QuadMesh, catmull_clark_subdivide, limit_positions, write_obj
from holefill.param import HoleBoundary
from holefill.pipeline import RunConfig, export_mesh, run_fill

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

cube = QuadMesh(
    [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
    [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]])
mesh = catmull_clark_subdivide(catmull_clark_subdivide(cube))
corner = 0
print(f"subdivided cube: {len(mesh.vertices)} vertices, {len(mesh.faces)} quads, "
      f"valence of vertex {corner}: {mesh.valence()[corner]}")

# two rings of faces around the corner
ring = {corner}
for _ in range(2):
    ring |= {v for f in mesh.faces if set(f) & ring for v in f}
hole = [f for f in mesh.faces if corner in f or sum(v in ring for v in f) == 4]
hole = [f for f in hole if all(v in ring for v in f)]

# directed boundary edges of the removed region, chained into one loop
count = {}
for f in hole:
    for a, b in zip(f, f[1:] + f[:1]):
        key = (min(a, b), max(a, b))
        count[key] = count.get(key, 0) + 1
nxt = {a: b for f in hole for a, b in zip(f, f[1:] + f[:1])
       if count[(min(a, b), max(a, b))] == 1}
loop = [next(iter(nxt))]
while nxt[loop[-1]] != loop[0]:
    loop.append(nxt[loop[-1]])
print(f"removed {len(hole)} quads; boundary loop has {len(loop)} mesh vertices")

limit = limit_positions(mesh)
rest = [f for f in mesh.faces if f not in hole]
write_obj(QuadMesh(mesh.vertices, rest), out / "cube_with_hole.obj")

# densify the loop along its polygon before handing it to the pipeline
pts = limit[loop]
dense = np.vstack([a + t * (b - a) for a, b in zip(pts, np.roll(pts, -1, axis=0))
                   for t in np.linspace(0, 1, 8, endpoint=False)])
boundary = HoleBoundary(dense)

for method in ("np", "mvc"):
    filled, pcurve, row = run_fill(RunConfig(method=method), boundary)
    print(f"{method:<4} status {row['status']:<6} G0 {row['g0_err']:.2e}  "
          f"G1 {row['g1_err']:.2e}  self-intersecting pcurve: {row['self_intersecting']}")
    if filled is not None:
        export_mesh(filled, pcurve, 30, out / f"cube_fill_{method}.obj")
print(f"meshes written to {out}/")
