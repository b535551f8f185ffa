//! Text output: node fields as CSV and legacy-VTK, matrices, reports.

use std::fmt::Write as _;
use std::path::Path;

use faer::{c64, MatRef};

use crate::error::{Error, Result};
use crate::geometry::MeshedCell;
use crate::interior::{CellField, CellId, Diagnostics};

pub const FIELD_CSV_HEADER: &str = "cell,sector,p,q,node,x,y,re,im";

fn id_columns(id: CellId) -> String {
    match id {
        CellId::Interior => "interior,,,".into(),
        CellId::Exterior { sector, p, q } => format!("exterior,{sector},{p},{q}"),
    }
}

/// One row per node per cell.
pub fn fields_csv(fields: &[CellField]) -> String {
    let mut s = String::from(FIELD_CSV_HEADER);
    s.push('\n');
    for f in fields {
        let id = id_columns(f.id);
        for (j, (x, v)) in f.points.iter().zip(&f.values).enumerate() {
            let _ = writeln!(s, "{id},{j},{:.17e},{:.17e},{:.17e},{:.17e}", x.x, x.y, v.re, v.im);
        }
    }
    s
}

/// Legacy VTK unstructured grid; every cell carries its own copy of the shared
/// local topology of `cell`.
pub fn fields_vtk(fields: &[CellField], cell: &MeshedCell) -> Result<String> {
    let n = cell.node_count();
    if fields.iter().any(|f| f.points.len() != n || f.values.len() != n) {
        return Err(Error::Config("field does not match the cell mesh".into()));
    }
    let tris = cell.triangles();
    let total = n * fields.len();
    let ntri = tris.len() * fields.len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nhexdtn field v1\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {total} double");
    for f in fields {
        for x in &f.points {
            let _ = writeln!(s, "{:.17e} {:.17e} 0", x.x, x.y);
        }
    }
    let _ = writeln!(s, "CELLS {ntri} {}", 4 * ntri);
    for c in 0..fields.len() {
        for t in tris {
            let o = c * n;
            let _ = writeln!(s, "3 {} {} {}", t[0] + o, t[1] + o, t[2] + o);
        }
    }
    let _ = writeln!(s, "CELL_TYPES {ntri}");
    for _ in 0..ntri {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {total}");
    for (name, part) in [("re_u", 0), ("im_u", 1)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for f in fields {
            for v in &f.values {
                let _ = writeln!(s, "{:.17e}", if part == 0 { v.re } else { v.im });
            }
        }
    }
    Ok(s)
}

/// Dense complex matrix: header line, then `i j re im` per entry, row-major.
pub fn matrix_text(name: &str, m: MatRef<'_, c64>) -> String {
    let mut s = format!("# hexdtn matrix v1 {name} {} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let _ = writeln!(s, "{i} {j} {:.17e} {:.17e}", m[(i, j)].re, m[(i, j)].im);
        }
    }
    s
}

pub fn diagnostics_text(d: &Diagnostics, config_hash: &str) -> String {
    let mut s = String::from("# hexdtn diagnostics v1\n");
    let rows: [(&str, String); 17] = [
        ("config_hash", config_hash.to_string()),
        ("n_t", d.n_t.to_string()),
        ("n_k", d.n_k.to_string()),
        ("interior_nodes", d.interior_nodes.to_string()),
        ("max_riccati_residual", format!("{:.6e}", d.max_riccati_residual)),
        ("max_spectral_radius", format!("{:.12}", d.max_spectral_radius)),
        ("max_kernel_condition", format!("{:.6e}", d.max_kernel_condition)),
        ("dtd_residual_nystrom", format!("{:.6e}", d.dtd_residual_nystrom)),
        ("dtd_residual_constraint", format!("{:.6e}", d.dtd_residual_constraint)),
        ("dtd_residual_spoke", format!("{:.6e}", d.dtd_residual_spoke)),
        ("energy_absorption", format!("{:.12e}", d.energy.absorption)),
        ("energy_boundary", format!("{:.12e}", d.energy.boundary)),
        ("energy_source", format!("{:.12e}", d.energy.source)),
        ("energy_defect", format!("{:.6e}", d.energy.defect)),
        ("symmetry_defect", format!("{:.6e}", d.symmetry_defect)),
        ("lambda_symmetry_defect", format!("{:.6e}", d.lambda_symmetry_defect)),
        ("conventions", crate::config::CONVENTIONS_VERSION.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
