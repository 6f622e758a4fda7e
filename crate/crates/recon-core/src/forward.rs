//! Forward solves: the complex-Robin state, the Dirichlet/Neumann baseline
//! states, the adjoint, synthetic Cauchy-data generation on a fine mesh, and
//! the multiplicative noise model.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_load, assemble_boundary_mass, assemble_convection, assemble_load,
    assemble_mass, assemble_stiffness, apply_dirichlet, solve_neumann_mean_zero, solve_sparse,
    Advection, CsrMatrix, Reaction, SparseSystem,
};
use crate::field::{CoefficientField, ComplexNodalField, RealNodalField};
use crate::mesh::TriMesh;

/// PDE data shared by all formulations: advection `b`, reaction `c`, source `Q`.
#[derive(Debug, Clone)]
pub struct ScalarData {
    pub advection: Advection,
    pub reaction: Reaction,
    /// Nodal values of the volumetric source.
    pub source: Vec<f64>,
}

impl ScalarData {
    /// The paper's standing setup: `b = 0`, `c = 1`, with a nodal source.
    pub fn diffusion_reaction(mesh: &TriMesh, q: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarData {
            advection: Advection::Constant([0.0, 0.0]),
            reaction: Reaction::Constant(1.0),
            source: mesh.nodes.iter().map(|&p| q(p)).collect(),
        }
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        if self.source.len() != mesh.n_nodes() {
            return Err(Error::invalid(format!(
                "source has {} values for {} nodes",
                self.source.len(),
                mesh.n_nodes()
            )));
        }
        if let Reaction::PerNode(c) = &self.reaction {
            if c.len() != mesh.n_nodes() {
                return Err(Error::invalid("reaction length does not match node count"));
            }
        }
        if let Advection::PerTriangle(b) = &self.advection {
            if b.len() != mesh.n_triangles() {
                return Err(Error::invalid("advection length does not match triangle count"));
            }
        }
        Ok(())
    }
}

/// Paired Dirichlet trace and Neumann flux sampled at the boundary nodes of a
/// mesh, in the order returned by [`TriMesh::boundary_nodes`].
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub noise_level: f64,
    pub seed: u64,
}

impl CauchyData {
    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        let nb = mesh.boundary_nodes().len();
        if self.f.len() != nb || self.g.len() != nb {
            return Err(Error::invalid(format!(
                "Cauchy data sized {}/{} for {nb} boundary nodes",
                self.f.len(),
                self.g.len()
            )));
        }
        if self.noise_level < 0.0 {
            return Err(Error::invalid("negative noise level"));
        }
        Ok(())
    }
}

/// States produced while evaluating one coefficient; fields are present when
/// the owning formulation computed them.
#[derive(Debug, Clone, Default)]
pub struct StateBundle {
    pub u: Option<ComplexNodalField>,
    pub u_d: Option<RealNodalField>,
    pub u_n: Option<RealNodalField>,
    pub p: Option<ComplexNodalField>,
    pub alpha: Vec<f64>,
}

/// Real part of the CCBM operator: `K_alpha + C_b + M_c`.
pub fn interior_operator(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
) -> CsrMatrix<f64> {
    let mut a = assemble_stiffness(mesh, alpha).add(&assemble_mass(mesh, &data.reaction));
    if !data.advection.is_zero() {
        a = a.add(&assemble_convection(mesh, &data.advection));
    }
    a
}

/// Complex CCBM system matrix `K_alpha + C_b + M_c + i M_Gamma`.
pub fn ccbm_matrix(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
) -> CsrMatrix<Complex64> {
    let s = interior_operator(mesh, alpha, data).to_complex_scaled(Complex64::new(1.0, 0.0));
    let mg = assemble_boundary_mass(mesh).to_complex_scaled(Complex64::new(0.0, 1.0));
    s.add(&mg)
}

fn solver_context(err: Error, alpha: &CoefficientField) -> Error {
    match err {
        Error::Solver(msg) => Error::Solver(format!(
            "{msg} (alpha range [{:.6e}, {:.6e}])",
            alpha.min(),
            alpha.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        )),
        other => other,
    }
}

/// Solves the complex-Robin state problem
/// `L u = Q` in the domain, `alpha du/dn + i u = g + i f` on the boundary.
pub fn solve_ccbm_state(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
) -> Result<ComplexNodalField> {
    data.validate(mesh)?;
    cauchy.validate(mesh)?;
    let bnodes = mesh.boundary_nodes();
    let a = ccbm_matrix(mesh, alpha, data);
    let lq = assemble_load(mesh, &data.source);
    let lg = assemble_boundary_load(mesh, &bnodes, &cauchy.g)?;
    let lf = assemble_boundary_load(mesh, &bnodes, &cauchy.f)?;
    let rhs: Vec<Complex64> = (0..mesh.n_nodes())
        .map(|i| Complex64::new(lq[i] + lg[i], lf[i]))
        .collect();
    let x = solve_sparse(&SparseSystem::new(a, rhs)).map_err(|e| solver_context(e, alpha))?;
    Ok(ComplexNodalField { values: x })
}

/// Solves the Dirichlet baseline state: `L u = Q`, `u = f` on the boundary.
pub fn solve_dirichlet_state(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    f: &[f64],
) -> Result<RealNodalField> {
    data.validate(mesh)?;
    let bnodes = mesh.boundary_nodes();
    if f.len() != bnodes.len() {
        return Err(Error::invalid("Dirichlet data length does not match boundary"));
    }
    let a = interior_operator(mesh, alpha, data);
    let rhs = assemble_load(mesh, &data.source);
    let sys = apply_dirichlet(&SparseSystem::new(a, rhs), &bnodes, f);
    let x = solve_sparse(&sys).map_err(|e| solver_context(e, alpha))?;
    Ok(RealNodalField { values: x })
}

/// Solves the Neumann baseline state: `L u = Q`, `alpha du/dn = g`. The
/// boundary-mean constraint engages only for the singular pure-Neumann case
/// (`c = 0`, `b = 0`), where compatibility of the data is also required.
pub fn solve_neumann_state(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    g: &[f64],
) -> Result<RealNodalField> {
    data.validate(mesh)?;
    let bnodes = mesh.boundary_nodes();
    if g.len() != bnodes.len() {
        return Err(Error::invalid("Neumann data length does not match boundary"));
    }
    let a = interior_operator(mesh, alpha, data);
    let lq = assemble_load(mesh, &data.source);
    let lg = assemble_boundary_load(mesh, &bnodes, g)?;
    let rhs: Vec<f64> = lq.iter().zip(&lg).map(|(a, b)| a + b).collect();
    let sys = SparseSystem::new(a, rhs);
    let x = if data.reaction.is_zero() && data.advection.is_zero() {
        let imbalance: f64 = sys.rhs.iter().sum();
        let scale = sys.rhs.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        if imbalance.abs() > 1e-10 * scale {
            return Err(Error::WellPosedness(format!(
                "pure-Neumann data incompatible: sum of loads {imbalance:.3e}"
            )));
        }
        solve_neumann_mean_zero(&sys, &assemble_boundary_mass(mesh))
    } else {
        solve_sparse(&sys)
    }
    .map_err(|e| solver_context(e, alpha))?;
    Ok(RealNodalField { values: x })
}

/// Solves the CCBM adjoint
/// `B*(p, v) = w0 (u_i, v) + w1 (grad u_i, grad v)` for all `v`.
pub fn solve_ccbm_adjoint(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    u_imag: &RealNodalField,
    w0: f64,
    w1: f64,
) -> Result<ComplexNodalField> {
    data.validate(mesh)?;
    let adjoint_matrix = adjoint_ccbm_matrix(mesh, alpha, data);
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let k1 = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
    let mu = m.matvec(&u_imag.values);
    let ku = k1.matvec(&u_imag.values);
    let rhs: Vec<Complex64> = (0..mesh.n_nodes())
        .map(|i| Complex64::new(w0 * mu[i] + w1 * ku[i], 0.0))
        .collect();
    let x = solve_sparse(&SparseSystem::new(adjoint_matrix, rhs))
        .map_err(|e| solver_context(e, alpha))?;
    Ok(ComplexNodalField { values: x })
}

/// Adjoint matrix `K_alpha + C_b^T + M_c - i M_Gamma`; for `b = 0` it is the
/// entrywise conjugate (equivalently conjugate transpose) of the state matrix.
pub fn adjoint_ccbm_matrix(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
) -> CsrMatrix<Complex64> {
    let mut s = assemble_stiffness(mesh, alpha).add(&assemble_mass(mesh, &data.reaction));
    if !data.advection.is_zero() {
        let c = assemble_convection(mesh, &data.advection);
        let transposed: Vec<(usize, usize, f64)> =
            c.entries().map(|(i, j, v)| (j, i, v)).collect();
        s = s.add(&CsrMatrix::from_triplets(mesh.n_nodes(), transposed));
    }
    let s = s.to_complex_scaled(Complex64::new(1.0, 0.0));
    let mg = assemble_boundary_mass(mesh).to_complex_scaled(Complex64::new(0.0, -1.0));
    s.add(&mg)
}

/// Ratio of fine to coarse triangle counts demanded by the inverse-crime
/// guard: two uniform refinement levels.
const REFINEMENT_GAP_FACTOR: usize = 16;

/// Generates Cauchy data for the inversion: solves the Neumann problem with
/// the target coefficient on the fine mesh, takes the Dirichlet trace as `f`,
/// and transfers it to the coarse boundary by arc-length interpolation along
/// the fine boundary polyline. `g` is the imposed flux sampled at coarse
/// boundary nodes.
pub fn synthesize_cauchy_data(
    alpha_star: &CoefficientField,
    data: &ScalarData,
    g_input: impl Fn([f64; 2]) -> f64,
    fine_mesh: &TriMesh,
    coarse_mesh: &TriMesh,
    allow_inverse_crime: bool,
) -> Result<CauchyData> {
    synthesize_cauchy_data_detailed(
        alpha_star,
        data,
        g_input,
        fine_mesh,
        coarse_mesh,
        allow_inverse_crime,
    )
    .map(|(cauchy, _)| cauchy)
}

/// Like [`synthesize_cauchy_data`] but also returns the fine-mesh state, whose
/// sup norm feeds the noise model.
pub fn synthesize_cauchy_data_detailed(
    alpha_star: &CoefficientField,
    data: &ScalarData,
    g_input: impl Fn([f64; 2]) -> f64,
    fine_mesh: &TriMesh,
    coarse_mesh: &TriMesh,
    allow_inverse_crime: bool,
) -> Result<(CauchyData, RealNodalField)> {
    if !allow_inverse_crime
        && fine_mesh.n_triangles() < REFINEMENT_GAP_FACTOR * coarse_mesh.n_triangles()
    {
        return Err(Error::config(format!(
            "inverse-crime guard: fine mesh has {} triangles for {} coarse; need at least \
             two refinement levels (factor {REFINEMENT_GAP_FACTOR})",
            fine_mesh.n_triangles(),
            coarse_mesh.n_triangles()
        )));
    }
    let fine_bnodes = fine_mesh.boundary_nodes();
    let g_fine: Vec<f64> = fine_bnodes.iter().map(|&i| g_input(fine_mesh.nodes[i])).collect();
    let u_star = solve_neumann_state(fine_mesh, alpha_star, data, &g_fine)?;

    let f_coarse = transfer_boundary_trace(fine_mesh, &u_star, coarse_mesh)?;
    let g_coarse: Vec<f64> = coarse_mesh
        .boundary_nodes()
        .iter()
        .map(|&i| g_input(coarse_mesh.nodes[i]))
        .collect();
    Ok((CauchyData { f: f_coarse, g: g_coarse, noise_level: 0.0, seed: 0 }, u_star))
}

/// Sup norm of the fine-mesh state, used as the noise standard deviation.
pub fn nodal_sup_norm(field: &RealNodalField) -> f64 {
    field.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Arc-length linear interpolation of a nodal trace from the fine boundary
/// polyline onto the coarse boundary nodes. Coarse nodes that coincide with
/// fine nodes (the refinement pipeline guarantees this) are exact lookups.
fn transfer_boundary_trace(
    fine_mesh: &TriMesh,
    fine_field: &RealNodalField,
    coarse_mesh: &TriMesh,
) -> Result<Vec<f64>> {
    let loops = fine_mesh.boundary_loops()?;
    // Precompute cumulative arc lengths per loop.
    struct Polyline {
        points: Vec<[f64; 2]>,
        values: Vec<f64>,
    }
    let polylines: Vec<Polyline> = loops
        .iter()
        .map(|chain| {
            let points: Vec<[f64; 2]> = chain.iter().map(|&i| fine_mesh.nodes[i]).collect();
            let values: Vec<f64> = chain.iter().map(|&i| fine_field.values[i]).collect();
            Polyline { points, values }
        })
        .collect();

    let mut out = Vec::new();
    for &ci in &coarse_mesh.boundary_nodes() {
        let p = coarse_mesh.nodes[ci];
        // Nearest point over all fine boundary segments.
        let mut best = (f64::INFINITY, 0usize, 0usize, 0.0f64);
        for (li, pl) in polylines.iter().enumerate() {
            let m = pl.points.len();
            for k in 0..m {
                let a = pl.points[k];
                let b = pl.points[(k + 1) % m];
                let ab = [b[0] - a[0], b[1] - a[1]];
                let ap = [p[0] - a[0], p[1] - a[1]];
                let len2 = ab[0] * ab[0] + ab[1] * ab[1];
                let s = if len2 > 0.0 {
                    ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if d2 < best.0 {
                    best = (d2, li, k, s);
                }
            }
        }
        let (_, li, k, s) = best;
        let pl = &polylines[li];
        let m = pl.points.len();
        out.push(pl.values[k] * (1.0 - s) + pl.values[(k + 1) % m] * s);
    }
    Ok(out)
}

/// Multiplicative measurement noise on the Dirichlet trace:
/// `f_k <- (1 + delta eta_k) f_k` with `eta_k` i.i.d. Gaussian of mean zero
/// and standard deviation `u_star_sup`. The imposed flux `g` stays clean.
///
/// Deviates come from a ChaCha8 stream keyed by the 64-bit seed, so runs are
/// reproducible across platforms.
pub fn add_noise(
    cauchy: &CauchyData,
    u_star_sup: f64,
    delta: f64,
    seed: u64,
) -> Result<CauchyData> {
    if delta < 0.0 {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(CauchyData { noise_level: 0.0, seed, ..cauchy.clone() });
    }
    if !(u_star_sup > 0.0) {
        return Err(Error::invalid("u_star_sup must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = cauchy
        .f
        .iter()
        .map(|&v| {
            let gauss: f64 = StandardNormal.sample(&mut rng);
            (1.0 + delta * gauss * u_star_sup) * v
        })
        .collect();
    Ok(CauchyData { f, g: cauchy.g.clone(), noise_level: delta, seed })
}
