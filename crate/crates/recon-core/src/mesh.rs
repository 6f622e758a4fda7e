//! 2D conforming triangular meshes of the model domains (squares and disks),
//! with boundary-edge labels and per-triangle subregion ids.
//!
//! Conventions:
//! - triangles are counter-clockwise (strictly positive signed area);
//! - boundary edges are oriented so the domain lies on their left;
//! - subregion ids are small consecutive integers assigned per triangle.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// One labelled edge of the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub label: u32,
}

/// Shape information used when refinement needs to place new boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryGeometry {
    /// Straight-sided domain; midpoints stay on the boundary by construction.
    Polygonal,
    /// Circular boundary; new boundary nodes are projected back to the circle.
    Circle { center: [f64; 2], radius: f64 },
}

/// Conforming triangulation with boundary labels and subregion ids.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub region_of_triangle: Vec<usize>,
    pub geometry: BoundaryGeometry,
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `t` (positive for CCW orientation).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = self.nodes[a];
        let q = self.nodes[b];
        let r = self.nodes[c];
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.signed_area(t).abs()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let p = self.nodes[a];
        let q = self.nodes[b];
        let r = self.nodes[c];
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Constant gradients of the three P1 basis functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        let p = self.nodes[a];
        let q = self.nodes[b];
        let r = self.nodes[c];
        let inv2a = 1.0 / (2.0 * self.signed_area(t));
        [
            [(q[1] - r[1]) * inv2a, (r[0] - q[0]) * inv2a],
            [(r[1] - p[1]) * inv2a, (p[0] - r[0]) * inv2a],
            [(p[1] - q[1]) * inv2a, (q[0] - p[0]) * inv2a],
        ]
    }

    /// Sorted list of distinct node indices lying on the boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .boundary_edges
            .iter()
            .flat_map(|e| e.nodes.iter().copied())
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    /// Boundary edges chained into closed loops, following edge orientation.
    pub fn boundary_loops(&self) -> Result<Vec<Vec<usize>>> {
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in &self.boundary_edges {
            if next.insert(e.nodes[0], e.nodes[1]).is_some() {
                return Err(Error::invalid(format!(
                    "boundary node {} starts two edges; boundary is not a 1-manifold",
                    e.nodes[0]
                )));
            }
        }
        let mut visited: HashMap<usize, bool> = next.keys().map(|&k| (k, false)).collect();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut loops = Vec::new();
        for start in starts {
            if visited[&start] {
                continue;
            }
            let mut cur = start;
            let mut chain = Vec::new();
            loop {
                chain.push(cur);
                visited.insert(cur, true);
                cur = *next
                    .get(&cur)
                    .ok_or_else(|| Error::invalid("open boundary chain"))?;
                if cur == start {
                    break;
                }
                if chain.len() > self.boundary_edges.len() {
                    return Err(Error::invalid("boundary loop does not close"));
                }
            }
            loops.push(chain);
        }
        Ok(loops)
    }

    /// Longest edge over all triangles.
    pub fn max_edge_length(&self) -> f64 {
        let mut h = 0.0f64;
        for tri in &self.triangles {
            for k in 0..3 {
                let a = self.nodes[tri[k]];
                let b = self.nodes[tri[(k + 1) % 3]];
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Index of a triangle containing `p` (inclusive of edges), if any.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let tol = -1e-12 * self.max_edge_length().powi(2);
        (0..self.n_triangles()).find(|&t| {
            let [a, b, c] = self.triangles[t];
            let pa = self.nodes[a];
            let pb = self.nodes[b];
            let pc = self.nodes[c];
            let cross = |u: [f64; 2], v: [f64; 2]| {
                (v[0] - u[0]) * (p[1] - u[1]) - (p[0] - u[0]) * (v[1] - u[1])
            };
            cross(pa, pb) >= tol && cross(pb, pc) >= tol && cross(pc, pa) >= tol
        })
    }

    /// Structural validity: orientation, index ranges, edge-manifold property,
    /// closed boundary loops, and region array length.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.region_of_triangle.len() != self.n_triangles() {
            return Err(Error::invalid(format!(
                "region array has {} entries for {} triangles",
                self.region_of_triangle.len(),
                self.n_triangles()
            )));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::invalid(format!("triangle {t} repeats a node")));
            }
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("triangle {t} references a missing node")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(Error::invalid(format!(
                    "triangle {t} has non-positive signed area {}",
                    self.signed_area(t)
                )));
            }
        }
        // Count how many triangles use each undirected edge.
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                let key = (i.min(j), i.max(j));
                *edge_count.entry(key).or_insert(0) += 1;
            }
        }
        for (&(i, j), &cnt) in &edge_count {
            if cnt > 2 {
                return Err(Error::invalid(format!(
                    "edge ({i},{j}) is shared by {cnt} triangles"
                )));
            }
        }
        for e in &self.boundary_edges {
            if e.nodes[0] >= n || e.nodes[1] >= n {
                return Err(Error::invalid("boundary edge references a missing node"));
            }
            let key = (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1]));
            match edge_count.get(&key) {
                Some(1) => {}
                Some(c) => {
                    return Err(Error::invalid(format!(
                        "boundary edge ({},{}) is a face of {c} triangles",
                        e.nodes[0], e.nodes[1]
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "boundary edge ({},{}) is not an edge of any triangle",
                        e.nodes[0], e.nodes[1]
                    )))
                }
            }
        }
        // Every mesh edge used once must be declared as a boundary edge.
        let declared: std::collections::HashSet<(usize, usize)> = self
            .boundary_edges
            .iter()
            .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
            .collect();
        for (&key, &cnt) in &edge_count {
            if cnt == 1 && !declared.contains(&key) {
                return Err(Error::invalid(format!(
                    "edge ({},{}) lies on the boundary but carries no label",
                    key.0, key.1
                )));
            }
        }
        self.boundary_loops()?;
        Ok(())
    }

    /// Number of distinct undirected edges (used by Euler-characteristic checks).
    pub fn n_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(3 * self.n_triangles());
        for tri in &self.triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                edges.push((i.min(j), i.max(j)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }
}

/// Side labels used by [`build_square_mesh`]: bottom 0, right 1, top 2, left 3.
pub const SIDE_BOTTOM: u32 = 0;
pub const SIDE_RIGHT: u32 = 1;
pub const SIDE_TOP: u32 = 2;
pub const SIDE_LEFT: u32 = 3;

/// Structured triangulation of `[xmin,xmax] x [ymin,ymax]` with `n x n` cells,
/// each split into two CCW triangles.
pub fn build_square_mesh(
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    n_cells_per_side: usize,
) -> Result<TriMesh> {
    if !(xmax > xmin) || !(ymax > ymin) {
        return Err(Error::invalid(format!(
            "degenerate extents [{xmin},{xmax}] x [{ymin},{ymax}]"
        )));
    }
    if n_cells_per_side == 0 {
        return Err(Error::invalid("n_cells_per_side must be at least 1"));
    }
    let n = n_cells_per_side;
    let hx = (xmax - xmin) / n as f64;
    let hy = (ymax - ymin) / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;

    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // Endpoints are set exactly so boundary coordinates do not drift.
            let x = if i == n { xmax } else { xmin + i as f64 * hx };
            let y = if j == n { ymax } else { ymin + j as f64 * hy };
            nodes.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = idx(i, j);
            let v10 = idx(i + 1, j);
            let v01 = idx(i, j + 1);
            let v11 = idx(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_edges.push(BoundaryEdge { nodes: [idx(i, 0), idx(i + 1, 0)], label: SIDE_BOTTOM });
    }
    for j in 0..n {
        boundary_edges.push(BoundaryEdge { nodes: [idx(n, j), idx(n, j + 1)], label: SIDE_RIGHT });
    }
    for i in (0..n).rev() {
        boundary_edges.push(BoundaryEdge { nodes: [idx(i + 1, n), idx(i, n)], label: SIDE_TOP });
    }
    for j in (0..n).rev() {
        boundary_edges.push(BoundaryEdge { nodes: [idx(0, j + 1), idx(0, j)], label: SIDE_LEFT });
    }

    let region_of_triangle = vec![0; triangles.len()];
    Ok(TriMesh {
        nodes,
        triangles,
        boundary_edges,
        region_of_triangle,
        geometry: BoundaryGeometry::Polygonal,
    })
}

/// Concentric-ring triangulation of a disk. Ring `k` (1-based) carries `6k`
/// equally spaced nodes at radius `k * radius / n_rings`; consecutive rings are
/// joined by a fan of `6(2k-1)` triangles, giving `6 n^2` triangles in total.
pub fn build_disk_mesh(center: [f64; 2], radius: f64, n_rings: usize) -> Result<TriMesh> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    if n_rings == 0 {
        return Err(Error::invalid("n_rings must be at least 1"));
    }
    let n = n_rings;
    let mut nodes = vec![center];
    // ring_start[k] = index of the first node of ring k (ring 0 is the center).
    let mut ring_start = vec![0usize; n + 1];
    for k in 1..=n {
        ring_start[k] = nodes.len();
        let m = 6 * k;
        let r = radius * k as f64 / n as f64;
        for s in 0..m {
            let theta = 2.0 * std::f64::consts::PI * s as f64 / m as f64;
            nodes.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
        }
    }

    let mut triangles = Vec::with_capacity(6 * n * n);
    // Innermost fan around the center node.
    for s in 0..6 {
        triangles.push([0, ring_start[1] + s, ring_start[1] + (s + 1) % 6]);
    }
    // Annulus between ring k-1 (6(k-1) nodes) and ring k (6k nodes): per
    // 60-degree sector a strip of k outer-base and k-1 inner-base triangles.
    for k in 2..=n {
        let inner = ring_start[k - 1];
        let outer = ring_start[k];
        let mi = 6 * (k - 1);
        let mo = 6 * k;
        for sector in 0..6 {
            let iv = |j: usize| inner + (sector * (k - 1) + j) % mi;
            let ov = |j: usize| outer + (sector * k + j) % mo;
            for j in 0..k {
                triangles.push([ov(j), ov(j + 1), iv(j)]);
            }
            for j in 0..k - 1 {
                triangles.push([iv(j + 1), iv(j), ov(j + 1)]);
            }
        }
    }

    let mut boundary_edges = Vec::with_capacity(6 * n);
    let m = 6 * n;
    for s in 0..m {
        boundary_edges.push(BoundaryEdge {
            nodes: [ring_start[n] + s, ring_start[n] + (s + 1) % m],
            label: 0,
        });
    }

    let region_of_triangle = vec![0; triangles.len()];
    let mesh = TriMesh {
        nodes,
        triangles,
        boundary_edges,
        region_of_triangle,
        geometry: BoundaryGeometry::Circle { center, radius },
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Red refinement: every triangle is split into four congruent children via
/// edge midpoints. Boundary labels and region ids are inherited; on circular
/// domains the new boundary midpoints are projected back onto the circle.
pub fn refine_uniform(mesh: &TriMesh) -> TriMesh {
    let mut nodes = mesh.nodes.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let boundary_keys: std::collections::HashSet<(usize, usize)> = mesh
        .boundary_edges
        .iter()
        .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
        .collect();

    let mut mid = |i: usize, j: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
        let key = (i.min(j), i.max(j));
        if let Some(&m) = midpoint.get(&key) {
            return m;
        }
        let a = nodes[i];
        let b = nodes[j];
        let mut p = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if let BoundaryGeometry::Circle { center, radius } = mesh.geometry {
            if boundary_keys.contains(&key) {
                let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                p = [
                    center[0] + (p[0] - center[0]) * radius / d,
                    center[1] + (p[1] - center[1]) * radius / d,
                ];
            }
        }
        let m = nodes.len();
        nodes.push(p);
        midpoint.insert(key, m);
        m
    };

    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut region_of_triangle = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let mab = mid(a, b, &mut nodes);
        let mbc = mid(b, c, &mut nodes);
        let mca = mid(c, a, &mut nodes);
        let children = [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mab, mbc, mca]];
        let region = mesh.region_of_triangle[t];
        for ch in children {
            triangles.push(ch);
            region_of_triangle.push(region);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [i, j] = e.nodes;
        let m = mid(i, j, &mut nodes);
        boundary_edges.push(BoundaryEdge { nodes: [i, m], label: e.label });
        boundary_edges.push(BoundaryEdge { nodes: [m, j], label: e.label });
    }

    TriMesh {
        nodes,
        triangles,
        boundary_edges,
        region_of_triangle,
        geometry: mesh.geometry,
    }
}

/// How the domain is partitioned into subregions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    WholeDomain,
    /// Region 0: `x[axis] < threshold`; region 1: the rest.
    HalfPlaneSplit { axis: usize, threshold: f64 },
    /// Regions 0..3 are the quadrants Q1 (+,+), Q2 (-,+), Q3 (-,-), Q4 (+,-).
    Quadrants,
    /// Region 0: inside the circle; region 1: left of its center outside;
    /// region 2: right of its center outside.
    DiskPlusHalves { radius: f64, center: [f64; 2] },
}

/// A partition together with one sampling point per subregion, used by the
/// pick-a-point restriction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub sample_points: Vec<[f64; 2]>,
}

impl PartitionSpec {
    pub fn whole_domain(sample_point: [f64; 2]) -> Self {
        PartitionSpec { kind: PartitionKind::WholeDomain, sample_points: vec![sample_point] }
    }

    /// Left/right split of the square at `x = 0`, sampled at `(-0.95, 0)` and
    /// `(0.95, 0)`.
    pub fn two_subregions() -> Self {
        PartitionSpec {
            kind: PartitionKind::HalfPlaneSplit { axis: 0, threshold: 0.0 },
            sample_points: vec![[-0.95, 0.0], [0.95, 0.0]],
        }
    }

    /// Central disk of radius `r` plus left/right exteriors, sampled at
    /// `(0,0)`, `(-0.95,0)`, `(0.95,0)`.
    pub fn three_subregions(r: f64) -> Self {
        PartitionSpec {
            kind: PartitionKind::DiskPlusHalves { radius: r, center: [0.0, 0.0] },
            sample_points: vec![[0.0, 0.0], [-0.95, 0.0], [0.95, 0.0]],
        }
    }

    /// Four quadrants sampled at `(±xi, ±xi)` in the order Q1..Q4.
    pub fn four_quadrants(xi: f64) -> Self {
        PartitionSpec {
            kind: PartitionKind::Quadrants,
            sample_points: vec![[xi, xi], [-xi, xi], [-xi, -xi], [xi, -xi]],
        }
    }

    pub fn n_regions(&self) -> usize {
        match self.kind {
            PartitionKind::WholeDomain => 1,
            PartitionKind::HalfPlaneSplit { .. } => 2,
            PartitionKind::Quadrants => 4,
            PartitionKind::DiskPlusHalves { .. } => 3,
        }
    }

    /// Subregion containing the point `p`.
    pub fn region_of_point(&self, p: [f64; 2]) -> usize {
        match self.kind {
            PartitionKind::WholeDomain => 0,
            PartitionKind::HalfPlaneSplit { axis, threshold } => {
                usize::from(p[axis] >= threshold)
            }
            PartitionKind::Quadrants => match (p[0] >= 0.0, p[1] >= 0.0) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            },
            PartitionKind::DiskPlusHalves { radius, center } => {
                let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                if d2 <= radius * radius {
                    0
                } else if p[0] < center[0] {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Checks that each sample point sits in its own subregion.
    pub fn validate(&self) -> Result<()> {
        if self.sample_points.len() != self.n_regions() {
            return Err(Error::config(format!(
                "partition declares {} regions but has {} sample points",
                self.n_regions(),
                self.sample_points.len()
            )));
        }
        for (r, &p) in self.sample_points.iter().enumerate() {
            let actual = self.region_of_point(p);
            if actual != r {
                return Err(Error::config(format!(
                    "sample point ({}, {}) for region {r} lies in region {actual}",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }
}

/// Assigns every triangle the subregion containing its centroid.
/// Fails if some declared region captures no triangle.
pub fn assign_regions(mesh: &TriMesh, spec: &PartitionSpec) -> Result<TriMesh> {
    spec.validate()?;
    let mut out = mesh.clone();
    let mut counts = vec![0usize; spec.n_regions()];
    for t in 0..mesh.n_triangles() {
        let r = spec.region_of_point(mesh.centroid(t));
        out.region_of_triangle[t] = r;
        counts[r] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::config(format!(
            "region {empty} captures no triangle; refine the mesh or adjust the partition"
        )));
    }
    Ok(out)
}
