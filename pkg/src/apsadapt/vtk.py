"""Legacy ASCII VTK export of triangle meshes with point and cell fields."""

import numpy as np

VTK_TRIANGLE = 5


def _check_field(name, values, n, where):
    a = np.asarray(values, dtype=float)
    if a.ndim not in (1, 2) or a.shape[0] != n or (a.ndim == 2 and a.shape[1] not in (2, 3)):
        raise ValueError(f"{where} field {name!r} has shape {a.shape}, expected ({n},) or ({n}, 2|3)")
    if " " in name or not name:
        raise ValueError(f"field name {name!r} must be non-empty without spaces")
    return a


def _write_fields(fh, fields):
    for name, a in fields.items():
        if a.ndim == 1:
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.17g}" for v in a))
        else:
            if a.shape[1] == 2:
                a = np.column_stack([a, np.zeros(len(a))])
            fh.write(f"VECTORS {name} double\n")
            fh.write("\n".join(" ".join(f"{v:.17g}" for v in row) for row in a))
        fh.write("\n")


def write_vtk(mesh, path, point_data=None, cell_data=None, title="apsadapt"):
    """Write ``mesh`` as an UNSTRUCTURED_GRID; fields are 1-D scalars or
    (n, 2)/(n, 3) vectors keyed by name."""
    pd = {k: _check_field(k, v, mesh.nv, "point") for k, v in (point_data or {}).items()}
    cd = {k: _check_field(k, v, mesh.nt, "cell") for k, v in (cell_data or {}).items()}
    title = title.replace("\n", " ")[:255]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.nv} double\n")
        fh.write("\n".join(f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices))
        fh.write(f"\nCELLS {mesh.nt} {4 * mesh.nt}\n")
        fh.write("\n".join(f"3 {a} {b} {c}" for a, b, c in mesh.triangles))
        fh.write(f"\nCELL_TYPES {mesh.nt}\n")
        fh.write("\n".join([str(VTK_TRIANGLE)] * mesh.nt))
        fh.write("\n")
        if pd:
            fh.write(f"POINT_DATA {mesh.nv}\n")
            _write_fields(fh, pd)
        if cd:
            fh.write(f"CELL_DATA {mesh.nt}\n")
            _write_fields(fh, cd)


def read_vtk(path):
    """Parse a file written by :func:`write_vtk`. Returns
    ``(points, triangles, point_data, cell_data)``."""
    tokens = open(path, encoding="ascii").read().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    words = " ".join(tokens[2:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        out = words[pos:pos + n]
        pos += n
        return out

    if take(1) != ["ASCII"] or take(2) != ["DATASET", "UNSTRUCTURED_GRID"]:
        raise ValueError("expected ASCII UNSTRUCTURED_GRID")
    _, n, _ = take(3)
    pts = np.array(take(3 * int(n)), dtype=float).reshape(-1, 3)[:, :2]
    _, nc, _ = take(3)
    cells = np.array(take(4 * int(nc)), dtype=np.int64).reshape(-1, 4)
    if np.any(cells[:, 0] != 3):
        raise ValueError("only triangles are supported")
    take(2 + int(nc))
    data = {"POINT_DATA": {}, "CELL_DATA": {}}
    section = None
    count = 0
    while pos < len(words):
        key = take(1)[0]
        if key in data:
            section, count = key, int(take(1)[0])
        elif key == "SCALARS":
            name = take(3)[0]
            take(2)
            data[section][name] = np.array(take(count), dtype=float)
        elif key == "VECTORS":
            name = take(2)[0]
            data[section][name] = np.array(take(3 * count), dtype=float).reshape(-1, 3)
        else:
            raise ValueError(f"unexpected token {key!r}")
    return pts, cells[:, 1:], data["POINT_DATA"], data["CELL_DATA"]
