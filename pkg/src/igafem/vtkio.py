"""Legacy ASCII VTK export of meshes and nodal/cell fields."""

import numpy as np

VTK_CELL_TYPES = {
    "T3": 5,
    "Q4": 9,
    "T6": 22,
    "Q9": 28,
    "edge2": 3,
    "edge3": 21,
    "line": 3,
}


def write_vtk(path, mesh, point_data=None, cell_data=None, element_ids=None,
              extra_lines=None, title="igafem output"):
    """Unstructured-grid VTK file with optional point and cell fields.

    point_data: {name: (n_nodes,) or (n_nodes, k) array}; vectors of 2
    components are padded to 3D.  cell_data: {name: (n_cells,) array} over
    the written cells.  `element_ids` restricts the bulk cells written (flat
    ids); `extra_lines` appends (conn(2,), value-dict) line cells.
    """
    point_data = point_data or {}
    cell_data = dict(cell_data or {})
    cells = []
    types = []
    keep = None
    if element_ids is not None:
        keep = set(int(i) for i in np.asarray(element_ids).ravel())
    offs = mesh.block_offsets()
    for b, (etype, conn) in enumerate(mesh.blocks):
        if etype not in VTK_CELL_TYPES or etype in ("edge2", "edge3"):
            continue
        for row_i, row in enumerate(conn):
            if keep is not None and offs[b] + row_i not in keep:
                continue
            cells.append([int(n) for n in row])
            types.append(VTK_CELL_TYPES[etype])
    nlines = 0
    if extra_lines:
        for conn, _ in extra_lines:
            cells.append([int(n) for n in conn])
            types.append(VTK_CELL_TYPES["line"])
            nlines += 1
        for name in set().union(*(v.keys() for _, v in extra_lines)):
            base = cell_data.get(name, np.zeros(len(cells) - nlines))
            vals = np.concatenate([base, [v.get(name, 0.0) for _, v in extra_lines]])
            cell_data[name] = vals

    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.num_nodes} double")
    for x, y in mesh.nodes:
        lines.append(f"{x:.15g} {y:.15g} 0")
    total = sum(len(c) + 1 for c in cells)
    lines.append(f"CELLS {len(cells)} {total}")
    for c in cells:
        lines.append(f"{len(c)} " + " ".join(str(n) for n in c))
    lines.append(f"CELL_TYPES {len(cells)}")
    lines.extend(str(t) for t in types)

    if point_data:
        lines.append(f"POINT_DATA {mesh.num_nodes}")
        for name, vals in point_data.items():
            vals = np.asarray(vals)
            if vals.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.15g}" for v in vals)
            else:
                lines.append(f"VECTORS {name} double")
                for row in vals:
                    vx, vy = row[0], row[1] if vals.shape[1] > 1 else 0.0
                    vz = row[2] if vals.shape[1] > 2 else 0.0
                    lines.append(f"{vx:.15g} {vy:.15g} {vz:.15g}")
    if cell_data:
        lines.append(f"CELL_DATA {len(cells)}")
        for name, vals in cell_data.items():
            vals = np.asarray(vals, dtype=float)
            if vals.size != len(cells):
                raise ValueError(f"cell field '{name}' has {vals.size} values for {len(cells)} cells")
            if np.allclose(vals, np.round(vals)):
                lines.append(f"SCALARS {name} int 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(str(int(round(v))) for v in vals)
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.15g}" for v in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def von_mises(stress):
    """Plane-stress von Mises from (sxx, syy, sxy) columns."""
    sxx, syy, sxy = stress[:, 0], stress[:, 1], stress[:, 2]
    return np.sqrt(sxx**2 - sxx * syy + syy**2 + 3 * sxy**2)
