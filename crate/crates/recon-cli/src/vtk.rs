//! Legacy ASCII VTK output for triangle meshes with one scalar field:
//! P0 data lands in CELL_DATA, P1 data in POINT_DATA.

use std::fmt::Write as _;
use std::path::Path;

use recon_core::{Error, Result, TriMesh};

/// Field attachment for [`emit_field_vtk`].
pub enum VtkField<'a> {
    PerTriangle(&'a [f64]),
    PerNode(&'a [f64]),
}

pub fn vtk_string(mesh: &TriMesh, field: &VtkField<'_>, name: &str) -> Result<String> {
    match field {
        VtkField::PerTriangle(v) if v.len() != mesh.n_triangles() => {
            return Err(Error::invalid("cell field length does not match triangle count"))
        }
        VtkField::PerNode(v) if v.len() != mesh.n_nodes() => {
            return Err(Error::invalid("point field length does not match node count"))
        }
        _ => {}
    }
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{name}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles());
    for tri in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_triangles());
    for _ in 0..mesh.n_triangles() {
        s.push_str("5\n");
    }
    match field {
        VtkField::PerTriangle(values) => {
            let _ = writeln!(s, "CELL_DATA {}", mesh.n_triangles());
            let _ = writeln!(s, "SCALARS {name} double 1");
            s.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                let _ = writeln!(s, "{v}");
            }
        }
        VtkField::PerNode(values) => {
            let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
            let _ = writeln!(s, "SCALARS {name} double 1");
            s.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                let _ = writeln!(s, "{v}");
            }
        }
    }
    Ok(s)
}

pub fn emit_field_vtk(
    mesh: &TriMesh,
    field: &VtkField<'_>,
    name: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, vtk_string(mesh, field, name)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use recon_core::mesh::{build_disk_mesh, build_square_mesh};

    #[test]
    fn cell_data_layout() {
        let mesh = build_square_mesh(0.0, 1.0, 0.0, 1.0, 1).unwrap();
        let text = vtk_string(&mesh, &VtkField::PerTriangle(&[1.0, 2.0]), "alpha").unwrap();
        assert!(text.contains("CELL_DATA 2"));
        assert!(text.contains("POINTS 4 double"));
        assert!(text.lines().last().unwrap().contains('2'));
        assert!(text.contains("SCALARS alpha double 1"));
    }

    #[test]
    fn point_count_matches_declaration() {
        let mesh = build_disk_mesh([0.0, 0.0], 1.0, 2).unwrap();
        let values = vec![0.5; mesh.n_nodes()];
        let text = vtk_string(&mesh, &VtkField::PerNode(&values), "u").unwrap();
        let declared: usize = text
            .lines()
            .find(|l| l.starts_with("POINTS"))
            .and_then(|l| l.split_whitespace().nth(1))
            .and_then(|n| n.parse().ok())
            .unwrap();
        let coords = text
            .lines()
            .skip_while(|l| !l.starts_with("POINTS"))
            .skip(1)
            .take_while(|l| !l.starts_with("CELLS"))
            .count();
        assert_eq!(declared, mesh.n_nodes());
        assert_eq!(coords, declared);
    }

    // The target 1 + 0.5 x y has range [0.75, 1.25] on the unit disk; the
    // written nodal values stay inside a slightly padded interval.
    #[test]
    fn nodal_dump_respects_analytic_range() {
        let mesh = build_disk_mesh([0.0, 0.0], 1.0, 8).unwrap();
        let values: Vec<f64> =
            mesh.nodes.iter().map(|p| 1.0 + 0.5 * p[0] * p[1]).collect();
        let text = vtk_string(&mesh, &VtkField::PerNode(&values), "alpha_star").unwrap();
        let data: Vec<f64> = text
            .lines()
            .skip_while(|l| !l.starts_with("LOOKUP_TABLE"))
            .skip(1)
            .filter_map(|l| l.parse().ok())
            .collect();
        assert_eq!(data.len(), mesh.n_nodes());
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo >= 0.74 && hi <= 1.26, "range [{lo}, {hi}]");
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let mesh = build_square_mesh(0.0, 1.0, 0.0, 1.0, 1).unwrap();
        assert!(vtk_string(&mesh, &VtkField::PerTriangle(&[1.0]), "x").is_err());
        assert!(vtk_string(&mesh, &VtkField::PerNode(&[1.0]), "x").is_err());
    }
}
