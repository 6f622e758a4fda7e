//! Plain-text mesh format:
//!
//! ```text
//! tri-mesh v1
//! nodes N
//! x y                (N lines)
//! triangles T
//! i j k region       (T lines)
//! boundary B
//! i j label          (B lines)
//! ```
//!
//! Whitespace-separated, 0-based indices, decimal floating point. Node
//! coordinates round-trip exactly (shortest-representation formatting).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, BoundaryGeometry, TriMesh};

pub fn write_mesh_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("tri-mesh v1\n");
    let _ = writeln!(s, "nodes {}", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], mesh.region_of_triangle[t]);
    }
    let _ = writeln!(s, "boundary {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.label);
    }
    s
}

pub fn mesh_io_write(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh_string(mesh))?;
    Ok(())
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.iter.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Some((idx + 1, trimmed));
            }
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn expect_section(tok: Option<(usize, &str)>, name: &str) -> Result<(usize, usize)> {
    let (line, text) = tok.ok_or_else(|| parse_err(0, format!("missing '{name}' section")))?;
    let mut parts = text.split_whitespace();
    let head = parts.next().unwrap_or("");
    if head != name {
        return Err(parse_err(line, format!("expected '{name}' section, found '{head}'")));
    }
    let count: usize = parts
        .next()
        .ok_or_else(|| parse_err(line, format!("'{name}' missing a count")))?
        .parse()
        .map_err(|_| parse_err(line, format!("'{name}' count is not an integer")))?;
    Ok((line, count))
}

pub fn read_mesh_string(text: &str) -> Result<TriMesh> {
    let mut lines = Lines { iter: text.lines().enumerate() };

    let (hline, header) =
        lines.next_content().ok_or_else(|| parse_err(0, "empty file"))?;
    if header != "tri-mesh v1" {
        return Err(parse_err(hline, format!("unknown header '{header}'")));
    }

    let (_, n_nodes) = expect_section(lines.next_content(), "nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (lno, text) =
            lines.next_content().ok_or_else(|| parse_err(0, "truncated node section"))?;
        let mut parts = text.split_whitespace();
        let mut coord = || -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| parse_err(lno, "node line needs two coordinates"))?
                .parse()
                .map_err(|_| parse_err(lno, "bad coordinate"))
        };
        nodes.push([coord()?, coord()?]);
    }

    let (tline, n_tris) = expect_section(lines.next_content(), "triangles")?;
    if n_tris == 0 {
        return Err(parse_err(tline, "mesh declares zero triangles"));
    }
    let mut triangles = Vec::with_capacity(n_tris);
    let mut region_of_triangle = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (lno, text) =
            lines.next_content().ok_or_else(|| parse_err(0, "truncated triangle section"))?;
        let mut parts = text.split_whitespace();
        let mut field = |what: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| parse_err(lno, format!("triangle line missing {what}")))?
                .parse()
                .map_err(|_| parse_err(lno, format!("bad {what}")))
        };
        let tri = [field("node index")?, field("node index")?, field("node index")?];
        let region = field("region id")?;
        for &i in &tri {
            if i >= nodes.len() {
                return Err(parse_err(lno, format!("node index {i} out of range")));
            }
        }
        triangles.push(tri);
        region_of_triangle.push(region);
    }

    let (_, n_bnd) = expect_section(lines.next_content(), "boundary")?;
    let mut boundary_edges = Vec::with_capacity(n_bnd);
    for _ in 0..n_bnd {
        let (lno, text) =
            lines.next_content().ok_or_else(|| parse_err(0, "truncated boundary section"))?;
        let mut parts = text.split_whitespace();
        let mut field = |what: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| parse_err(lno, format!("boundary line missing {what}")))?
                .parse()
                .map_err(|_| parse_err(lno, format!("bad {what}")))
        };
        let i = field("node index")?;
        let j = field("node index")?;
        let label = field("label")? as u32;
        if i >= nodes.len() || j >= nodes.len() {
            return Err(parse_err(lno, "boundary node index out of range"));
        }
        boundary_edges.push(BoundaryEdge { nodes: [i, j], label });
    }

    let mesh = TriMesh {
        nodes,
        triangles,
        boundary_edges,
        region_of_triangle,
        geometry: BoundaryGeometry::Polygonal,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn mesh_io_read(path: impl AsRef<Path>) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    read_mesh_string(&text)
}
