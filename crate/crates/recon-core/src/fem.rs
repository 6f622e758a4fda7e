//! P1 finite-element assembly and sparse linear algebra.
//!
//! All element integrals use closed-form P1 formulas, so assembly is exact for
//! the polynomial data handled here. Sparse solves are direct LU
//! factorizations with a relative-residual contract of `1e-10`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexNodalField, RealNodalField};
use crate::field::CoefficientField;
use crate::mesh::TriMesh;

pub const RESIDUAL_CONTRACT: f64 = 1e-10;

/// Scalar types supported by the sparse backend.
pub trait SolveScalar:
    Copy
    + PartialEq
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn norm_sqr(self) -> f64;
    fn is_finite(self) -> bool;
    /// Direct sparse LU solve through the backend.
    fn lu_solve(matrix: &CsrMatrix<Self>, rhs: &[Self]) -> Result<Vec<Self>>;
}

/// Compressed sparse row matrix over `f64` or `Complex64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: SolveScalar> CsrMatrix<T> {
    /// Builds a square CSR matrix from (row, col, value) triplets; duplicate
    /// positions are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| (self.col_idx[k], self.values[k]))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// `x^T A y` (no conjugation; the quadratic form of the discrete operators).
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let ay = self.matvec(y);
        let mut acc = T::zero();
        for i in 0..self.n {
            acc += x[i] * ay[i];
        }
        acc
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.values {
            *v = *v * s;
        }
    }

    /// Entrywise sum assuming both matrices share the same dimension.
    pub fn add(&self, other: &CsrMatrix<T>) -> CsrMatrix<T> {
        assert_eq!(self.n, other.n);
        let mut triplets: Vec<(usize, usize, T)> = self.entries().collect();
        triplets.extend(other.entries());
        CsrMatrix::from_triplets(self.n, triplets)
    }

    /// Largest entrywise difference `max |a_ij - b_ij|` over the union pattern.
    pub fn max_abs_diff(&self, other: &CsrMatrix<T>) -> f64 {
        let mut diff = 0.0f64;
        let mut b: std::collections::HashMap<(usize, usize), T> =
            other.entries().map(|(i, j, v)| ((i, j), v)).collect();
        for (i, j, v) in self.entries() {
            let w = b.remove(&(i, j)).unwrap_or_else(T::zero);
            diff = diff.max((v - w).norm_sqr().sqrt());
        }
        for (_, w) in b {
            diff = diff.max(w.norm_sqr().sqrt());
        }
        diff
    }
}

impl CsrMatrix<f64> {
    /// Lifts a real matrix into a complex one scaled by `s`.
    pub fn to_complex_scaled(&self, s: Complex64) -> CsrMatrix<Complex64> {
        CsrMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| s * v).collect(),
        }
    }
}

impl SolveScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn lu_solve(matrix: &CsrMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
        use faer::linalg::solvers::Solve;
        // The backend panics on numerically singular pivots; surface that as
        // a solver error instead.
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<Vec<f64>> {
            let triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = matrix
                .entries()
                .map(|(i, j, v)| faer::sparse::Triplet::new(i, j, v))
                .collect();
            let a =
                faer::sparse::SparseColMat::try_new_from_triplets(matrix.n, matrix.n, &triplets)
                    .map_err(|e| Error::solver(format!("sparse build failed: {e:?}")))?;
            let lu = a
                .sp_lu()
                .map_err(|e| Error::solver(format!("LU factorization failed: {e:?}")))?;
            let b = faer::Mat::from_fn(matrix.n, 1, |i, _| rhs[i]);
            let x = lu.solve(&b);
            Ok((0..matrix.n).map(|i| x[(i, 0)]).collect())
        }))
        .unwrap_or_else(|_| Err(Error::solver("LU factorization hit a singular pivot")))
    }
}

impl SolveScalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn lu_solve(matrix: &CsrMatrix<Complex64>, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        use faer::linalg::solvers::Solve;
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<Vec<Complex64>> {
            let triplets: Vec<faer::sparse::Triplet<usize, usize, faer::c64>> = matrix
                .entries()
                .map(|(i, j, v)| faer::sparse::Triplet::new(i, j, faer::c64::new(v.re, v.im)))
                .collect();
            let a =
                faer::sparse::SparseColMat::try_new_from_triplets(matrix.n, matrix.n, &triplets)
                    .map_err(|e| Error::solver(format!("sparse build failed: {e:?}")))?;
            let lu = a
                .sp_lu()
                .map_err(|e| Error::solver(format!("LU factorization failed: {e:?}")))?;
            let b = faer::Mat::from_fn(matrix.n, 1, |i, _| faer::c64::new(rhs[i].re, rhs[i].im));
            let x = lu.solve(&b);
            Ok((0..matrix.n).map(|i| Complex64::new(x[(i, 0)].re, x[(i, 0)].im)).collect())
        }))
        .unwrap_or_else(|_| Err(Error::solver("LU factorization hit a singular pivot")))
    }
}

/// A square sparse system `A x = rhs`.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
}

impl<T: SolveScalar> SparseSystem<T> {
    pub fn new(matrix: CsrMatrix<T>, rhs: Vec<T>) -> Self {
        assert_eq!(matrix.dim(), rhs.len());
        SparseSystem { matrix, rhs }
    }
}

fn vec_norm<T: SolveScalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Direct solve with the relative-residual contract
/// `||A x - rhs||_2 <= 1e-10 ||rhs||_2` (zero right-hand side returns zero).
pub fn solve_sparse<T: SolveScalar>(system: &SparseSystem<T>) -> Result<Vec<T>> {
    let rhs_norm = vec_norm(&system.rhs);
    if rhs_norm == 0.0 {
        return Ok(vec![T::zero(); system.rhs.len()]);
    }
    let x = T::lu_solve(&system.matrix, &system.rhs)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::solver("solution contains non-finite entries".to_string()));
    }
    let ax = system.matrix.matvec(&x);
    let mut res = 0.0f64;
    for i in 0..x.len() {
        res += (ax[i] - system.rhs[i]).norm_sqr();
    }
    let rel = res.sqrt() / rhs_norm;
    if rel > RESIDUAL_CONTRACT {
        return Err(Error::solver(format!(
            "relative residual {rel:.3e} above contract {RESIDUAL_CONTRACT:.1e} (dim {})",
            x.len()
        )));
    }
    Ok(x)
}

/// Reaction coefficient `c`: constant or nodal P1 data.
#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    Constant(f64),
    PerNode(Vec<f64>),
}

impl Reaction {
    pub fn is_zero(&self) -> bool {
        match self {
            Reaction::Constant(c) => *c == 0.0,
            Reaction::PerNode(v) => v.iter().all(|&c| c == 0.0),
        }
    }
}

/// Advection field `b`: constant vector or per-triangle constant vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Advection {
    Constant([f64; 2]),
    PerTriangle(Vec<[f64; 2]>),
}

impl Advection {
    pub fn on_triangle(&self, t: usize) -> [f64; 2] {
        match self {
            Advection::Constant(b) => *b,
            Advection::PerTriangle(v) => v[t],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Advection::Constant(b) => b[0] == 0.0 && b[1] == 0.0,
            Advection::PerTriangle(v) => v.iter().all(|b| b[0] == 0.0 && b[1] == 0.0),
        }
    }
}

/// Stiffness matrix of `(alpha grad u, grad v)`; rows sum to zero.
pub fn assemble_stiffness(mesh: &TriMesh, alpha: &CoefficientField) -> CsrMatrix<f64> {
    assert_eq!(alpha.values.len(), mesh.n_triangles());
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles[t];
        let grads = mesh.basis_gradients(t);
        let coef = alpha.values[t] * mesh.area(t);
        for i in 0..3 {
            for j in 0..3 {
                let v = coef * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                triplets.push((tri[i], tri[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), triplets)
}

/// Mass matrix of `(c u, v)`. Constant `c` uses the area/12 element matrix;
/// nodal `c` uses the exact cubic formula.
pub fn assemble_mass(mesh: &TriMesh, c: &Reaction) -> CsrMatrix<f64> {
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles[t];
        let area = mesh.area(t);
        match c {
            Reaction::Constant(c) => {
                let a12 = c * area / 12.0;
                for i in 0..3 {
                    for j in 0..3 {
                        let v = if i == j { 2.0 * a12 } else { a12 };
                        triplets.push((tri[i], tri[j], v));
                    }
                }
            }
            Reaction::PerNode(cv) => {
                let cl = [cv[tri[0]], cv[tri[1]], cv[tri[2]]];
                let csum = cl[0] + cl[1] + cl[2];
                for i in 0..3 {
                    for j in 0..3 {
                        // Exact integral of c phi_i phi_j with P1 nodal c:
                        // distinct node k contributes area/60, shared ones area/30,
                        // and the diagonal self-term area/10.
                        let v = if i == j {
                            area * (cl[i] / 10.0 + (csum - cl[i]) / 30.0)
                        } else {
                            let other = csum - cl[i] - cl[j];
                            area * ((cl[i] + cl[j]) / 30.0 + other / 60.0)
                        };
                        triplets.push((tri[i], tri[j], v));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), triplets)
}

/// Boundary mass matrix of `<u, v>_Gamma`; nonzero only on boundary nodes.
pub fn assemble_boundary_mass(mesh: &TriMesh) -> CsrMatrix<f64> {
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [i, j] = e.nodes;
        let a = mesh.nodes[i];
        let b = mesh.nodes[j];
        let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        triplets.push((i, i, len / 3.0));
        triplets.push((j, j, len / 3.0));
        triplets.push((i, j, len / 6.0));
        triplets.push((j, i, len / 6.0));
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), triplets)
}

/// Convection matrix of `(b . grad u, v)`; generally nonsymmetric.
pub fn assemble_convection(mesh: &TriMesh, b: &Advection) -> CsrMatrix<f64> {
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles[t];
        let grads = mesh.basis_gradients(t);
        let bt = b.on_triangle(t);
        let third = mesh.area(t) / 3.0;
        for j in 0..3 {
            let v = third * (bt[0] * grads[j][0] + bt[1] * grads[j][1]);
            for i in 0..3 {
                triplets.push((tri[i], tri[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_nodes(), triplets)
}

/// Load vector `(Q, v)` for nodal `Q`: the unit mass matrix applied to `Q`.
pub fn assemble_load(mesh: &TriMesh, q_nodal: &[f64]) -> Vec<f64> {
    assert_eq!(q_nodal.len(), mesh.n_nodes());
    assemble_mass(mesh, &Reaction::Constant(1.0)).matvec(q_nodal)
}

/// Boundary load `<values, v>_Gamma` for values attached to boundary nodes.
pub fn assemble_boundary_load(
    mesh: &TriMesh,
    nodes: &[usize],
    values: &[f64],
) -> Result<Vec<f64>> {
    if nodes.len() != values.len() {
        return Err(Error::invalid("boundary node and value counts differ"));
    }
    let boundary: std::collections::HashSet<usize> =
        mesh.boundary_nodes().into_iter().collect();
    let mut full = vec![0.0; mesh.n_nodes()];
    for (&i, &v) in nodes.iter().zip(values) {
        if !boundary.contains(&i) {
            return Err(Error::invalid(format!(
                "node {i} carries boundary data but is not a boundary node"
            )));
        }
        full[i] = v;
    }
    Ok(assemble_boundary_mass(mesh).matvec(&full))
}

/// Symmetric elimination of Dirichlet constraints: constrained columns move to
/// the right-hand side, constrained rows become identity rows with the
/// prescribed value, so the solution matches the data exactly.
pub fn apply_dirichlet<T: SolveScalar>(
    system: &SparseSystem<T>,
    nodes: &[usize],
    values: &[T],
) -> SparseSystem<T> {
    assert_eq!(nodes.len(), values.len());
    let n = system.matrix.dim();
    let mut constrained: Vec<Option<T>> = vec![None; n];
    for (&i, &v) in nodes.iter().zip(values) {
        constrained[i] = Some(v);
    }
    let mut rhs = system.rhs.clone();
    let mut triplets = Vec::with_capacity(system.matrix.nnz());
    for i in 0..n {
        if let Some(v) = constrained[i] {
            triplets.push((i, i, T::one()));
            rhs[i] = v;
            continue;
        }
        for (j, a) in system.matrix.row(i) {
            if let Some(v) = constrained[j] {
                rhs[i] = rhs[i] - a * v;
            } else {
                triplets.push((i, j, a));
            }
        }
    }
    SparseSystem::new(CsrMatrix::from_triplets(n, triplets), rhs)
}

/// Solves a pure-Neumann system with the discrete boundary-mean constraint
/// `1^T M_Gamma u = 0` enforced through one Lagrange multiplier.
pub fn solve_neumann_mean_zero(
    system: &SparseSystem<f64>,
    boundary_mass: &CsrMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = system.matrix.dim();
    let ones = vec![1.0; n];
    let m = boundary_mass.matvec(&ones);
    let mut triplets: Vec<(usize, usize, f64)> = system.matrix.entries().collect();
    for (i, &mi) in m.iter().enumerate() {
        if mi != 0.0 {
            triplets.push((i, n, mi));
            triplets.push((n, i, mi));
        }
    }
    let mut rhs = system.rhs.clone();
    rhs.push(0.0);
    let aug = SparseSystem::new(CsrMatrix::from_triplets(n + 1, triplets), rhs);
    let mut sol = solve_sparse(&aug)?;
    sol.truncate(n);
    let mean: f64 = m.iter().zip(&sol).map(|(a, b)| a * b).sum();
    let scale = vec_norm(&sol).max(1.0);
    if mean.abs() > RESIDUAL_CONTRACT * scale {
        return Err(Error::solver(format!(
            "boundary-mean constraint violated: {mean:.3e}"
        )));
    }
    Ok(sol)
}

/// Discrete norms of a nodal field, from exact P1 quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
    pub boundary_l2: f64,
}

fn norms_from_parts(l2sq: f64, semisq: f64, bsq: f64) -> Norms {
    Norms {
        l2: l2sq.max(0.0).sqrt(),
        h1_semi: semisq.max(0.0).sqrt(),
        h1: (l2sq + semisq).max(0.0).sqrt(),
        boundary_l2: bsq.max(0.0).sqrt(),
    }
}

pub fn norms(field: &RealNodalField, mesh: &TriMesh) -> Norms {
    let u = &field.values;
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let k = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
    let mg = assemble_boundary_mass(mesh);
    norms_from_parts(m.bilinear(u, u), k.bilinear(u, u), mg.bilinear(u, u))
}

pub fn norms_complex(field: &ComplexNodalField, mesh: &TriMesh) -> Norms {
    let re = field.real_part();
    let im = field.imag_part();
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let k = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
    let mg = assemble_boundary_mass(mesh);
    let quad = |a: &CsrMatrix<f64>| a.bilinear(&re.values, &re.values) + a.bilinear(&im.values, &im.values);
    norms_from_parts(quad(&m), quad(&k), quad(&mg))
}
