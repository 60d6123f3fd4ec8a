"""Unstructured-grid field output, legacy ASCII by default, XML optional.

All floats print through repr-exact %.17g so identical fields produce
identical files. Data dicts map a name to a per-point or per-cell array;
arrays with a trailing dimension of 3 become vector fields.
"""

import numpy as np

HEXAHEDRON = 12


def _fmt(values):
    return " ".join("%.17g" % v for v in np.asarray(values).ravel())


def _lines(values):
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    return "\n".join(_fmt(row) for row in arr)


def write_legacy(path, points, cells, point_data=None, cell_data=None,
                 title="porosgp fields"):
    """Legacy ASCII unstructured grid of hexahedral cells."""
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n, m = points.shape[0], cells.shape[0]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        fh.write(_lines(points) + "\n")
        fh.write(f"CELLS {m} {m * 9}\n")
        for row in cells:
            fh.write("8 " + " ".join(str(c) for c in row) + "\n")
        fh.write(f"CELL_TYPES {m}\n")
        fh.write("\n".join([str(HEXAHEDRON)] * m) + "\n")
        for label, count, data in (("POINT_DATA", n, point_data),
                                   ("CELL_DATA", m, cell_data)):
            if not data:
                continue
            fh.write(f"{label} {count}\n")
            for name, values in data.items():
                values = np.asarray(values, dtype=float)
                if values.ndim == 2 and values.shape[1] == 3:
                    fh.write(f"VECTORS {name} double\n")
                    fh.write(_lines(values) + "\n")
                else:
                    fh.write(f"SCALARS {name} double 1\n")
                    fh.write("LOOKUP_TABLE default\n")
                    fh.write(_lines(values.reshape(-1, 1)) + "\n")


def write_xml(path, points, cells, point_data=None, cell_data=None,
              title="porosgp fields"):
    """XML (.vtu) variant with inline ascii data arrays."""
    points = np.asarray(points, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    n, m = points.shape[0], cells.shape[0]

    def data_arrays(data):
        out = []
        for name, values in (data or {}).items():
            values = np.asarray(values, dtype=float)
            ncomp = 3 if values.ndim == 2 and values.shape[1] == 3 else 1
            out.append(
                f'        <DataArray type="Float64" Name="{name}" '
                f'NumberOfComponents="{ncomp}" format="ascii">\n'
                f"          {_fmt(values)}\n        </DataArray>\n")
        return "".join(out)

    with open(path, "w") as fh:
        fh.write('<?xml version="1.0"?>\n')
        fh.write(f"<!-- {title} -->\n")
        fh.write('<VTKFile type="UnstructuredGrid" version="0.1" '
                 'byte_order="LittleEndian">\n  <UnstructuredGrid>\n')
        fh.write(f'    <Piece NumberOfPoints="{n}" NumberOfCells="{m}">\n')
        fh.write('      <Points>\n        <DataArray type="Float64" '
                 'NumberOfComponents="3" format="ascii">\n')
        fh.write(f"          {_fmt(points)}\n        </DataArray>\n"
                 "      </Points>\n")
        fh.write("      <Cells>\n")
        fh.write('        <DataArray type="Int64" Name="connectivity" '
                 'format="ascii">\n          '
                 + " ".join(str(c) for c in cells.ravel())
                 + "\n        </DataArray>\n")
        fh.write('        <DataArray type="Int64" Name="offsets" '
                 'format="ascii">\n          '
                 + " ".join(str(8 * (i + 1)) for i in range(m))
                 + "\n        </DataArray>\n")
        fh.write('        <DataArray type="UInt8" Name="types" '
                 'format="ascii">\n          '
                 + " ".join([str(HEXAHEDRON)] * m)
                 + "\n        </DataArray>\n")
        fh.write("      </Cells>\n")
        fh.write("      <PointData>\n" + data_arrays(point_data)
                 + "      </PointData>\n")
        fh.write("      <CellData>\n" + data_arrays(cell_data)
                 + "      </CellData>\n")
        fh.write("    </Piece>\n  </UnstructuredGrid>\n</VTKFile>\n")
