//! Legacy-format VTK unstructured grids of the leaves.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Topology};
use crate::stats::broadcast;

/// Our octant vertex order mapped to VTK's hexahedron order.
const VTK_HEX: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];
const VTK_HEXAHEDRON: u8 = 12;

/// A named cell field, sized either to the leaves or to the base columns.
pub struct Field<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub fn render(mesh: &Mesh, topo: &Topology, fields: &[Field]) -> Result<String> {
    let n = topo.n_leaves();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\niqles leaves\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", 8 * n);
    for id in &topo.leaves {
        let hex = &mesh.cell(*id).vertices;
        for v in VTK_HEX {
            let p = hex[v];
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
        }
    }
    let _ = writeln!(out, "CELLS {} {}", n, 9 * n);
    for c in 0..n {
        let b = 8 * c;
        let _ = writeln!(
            out,
            "8 {} {} {} {} {} {} {} {}",
            b,
            b + 1,
            b + 2,
            b + 3,
            b + 4,
            b + 5,
            b + 6,
            b + 7
        );
    }
    let _ = writeln!(out, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(out, "{VTK_HEXAHEDRON}");
    }
    if fields.is_empty() {
        return Ok(out);
    }
    let _ = writeln!(out, "CELL_DATA {n}");
    for f in fields {
        if f.name.is_empty() || f.name.contains(char::is_whitespace) {
            return Err(Error::Format(format!("field name `{}` is not a valid VTK name", f.name)));
        }
        let values = if f.values.len() == n {
            f.values.to_vec()
        } else if f.values.len() == topo.n_columns {
            broadcast(f.values, topo)
        } else {
            return Err(Error::Format(format!(
                "field `{}` has {} values; expected {n} leaves or {} columns",
                f.name,
                f.values.len(),
                topo.n_columns
            )));
        };
        let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
        for v in values {
            let _ = writeln!(out, "{v}");
        }
    }
    Ok(out)
}

pub fn export_vtk(mesh: &Mesh, topo: &Topology, fields: &[Field], path: &Path) -> Result<()> {
    let text = render(mesh, topo, fields)?;
    super::write_file(path, text.as_bytes())
}
