//! Artifact writers: JSON manifests, CSV tables and legacy VTK.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::cq::FieldTrace;
use crate::error::{Error, Result};
use crate::geometry::SurfaceMesh;
use crate::trace_spaces::{CVec3, SpaceRole, TraceSpaces};
use crate::transmission::Side;
use crate::C64;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Exterior => "exterior",
        Side::Interior => "interior",
    }
}

/// `t, point_id, Ex_re, Ex_im, Ey_re, Ey_im, Ez_re, Ez_im, side`, one row per step and probe.
pub fn trace_csv(times: &[f64], traces: &[Vec<FieldTrace>]) -> String {
    let mut out = String::from("t,point_id,Ex_re,Ex_im,Ey_re,Ey_im,Ez_re,Ez_im,side\n");
    for (t, row) in times.iter().zip(traces) {
        for (k, f) in row.iter().enumerate() {
            let _ = writeln!(out, "{t:.17e},{k},{:.17e},0,{:.17e},0,{:.17e},0,{}", f.e[0], f.e[1], f.e[2], side_name(f.side));
        }
    }
    out
}

/// Laplace-domain probe values in the same column layout (`t` column holds 0).
pub fn probe_csv(values: &[(Side, CVec3)]) -> String {
    let mut out = String::from("t,point_id,Ex_re,Ex_im,Ey_re,Ey_im,Ez_re,Ez_im,side\n");
    for (k, (side, e)) in values.iter().enumerate() {
        let _ = writeln!(out, "0,{k},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}", e[0].re, e[0].im, e[1].re, e[1].im, e[2].re, e[2].im, side_name(*side));
    }
    out
}

/// Generic CSV table with a header row.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.10e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Mean magnitude of a discrete field on each panel (value at the centroid).
pub fn panel_magnitudes(spaces: &TraceSpaces, role: SpaceRole, coeffs: &[C64]) -> Vec<f64> {
    (0..spaces.mesh.num_triangles()).map(|t| spaces.field(role, coeffs, t, &spaces.mesh.centroid(t)).norm()).collect()
}

/// Legacy ASCII VTK polydata with named per-panel scalars.
pub fn vtk_polydata(mesh: &SurfaceMesh, cell_data: &[(&str, Vec<f64>)]) -> Result<String> {
    let nt = mesh.num_triangles();
    let mut out = String::from("# vtk DataFile Version 3.0\ntdbem surface\nASCII\nDATASET POLYDATA\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", v.x, v.y, v.z);
    }
    let _ = writeln!(out, "POLYGONS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    if !cell_data.is_empty() {
        let _ = writeln!(out, "CELL_DATA {nt}");
    }
    for (name, values) in cell_data {
        if values.len() != nt {
            return Err(Error::InvalidInput(format!("cell data `{name}` has {} values for {nt} panels", values.len())));
        }
        if name.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("cell data name `{name}` contains whitespace")));
        }
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(out, "{v:.10e}");
        }
    }
    Ok(out)
}
