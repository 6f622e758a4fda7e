//! The four cost functionals (modified complex-boundary misfit,
//! Kohn-Vogelius, Dirichlet tracking, Neumann tracking) with a shared
//! Tikhonov term, and their per-triangle L2 gradient densities computed
//! through adjoint states.
//!
//! Every misfit carries a 1/2 factor and the regularization is
//! `rho/2 ||alpha||_0^2`, so gradients are directly comparable across
//! formulations.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, assemble_load, assemble_mass, assemble_stiffness, apply_dirichlet,
    solve_neumann_mean_zero, solve_sparse, CsrMatrix, Reaction, SparseSystem,
};
use crate::field::{CoefficientField, RealNodalField};
use crate::forward::{
    interior_operator, solve_ccbm_adjoint, solve_ccbm_state, solve_dirichlet_state,
    solve_neumann_state, CauchyData, ScalarData, StateBundle,
};
use crate::mesh::{PartitionSpec, TriMesh};

/// Misfit weights and Tikhonov parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub w0: f64,
    pub w1: f64,
    pub rho: f64,
}

impl Weights {
    pub fn new(w0: f64, w1: f64, rho: f64) -> Self {
        Weights { w0, w1, rho }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub misfit: f64,
    pub regularization: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(misfit: f64, regularization: f64) -> Self {
        CostBreakdown { misfit, regularization, total: misfit + regularization }
    }
}

/// P0 gradient density of misfit + regularization with respect to alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDensity {
    pub values: Vec<f64>,
}

impl GradientDensity {
    /// `L2(domain)` pairing of two P0 fields.
    pub fn inner(&self, direction: &[f64], mesh: &TriMesh) -> f64 {
        self.values
            .iter()
            .zip(direction)
            .enumerate()
            .map(|(t, (d, dir))| d * dir * mesh.area(t))
            .sum()
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ccbm,
    Kv,
    Td,
    Tn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ccbm, Method::Kv, Method::Td, Method::Tn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ccbm => "ccbm",
            Method::Kv => "kv",
            Method::Td => "td",
            Method::Tn => "tn",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccbm" => Ok(Method::Ccbm),
            "kv" => Ok(Method::Kv),
            "td" => Ok(Method::Td),
            "tn" => Ok(Method::Tn),
            other => Err(Error::config(format!("unknown method '{other}'"))),
        }
    }
}

/// One evaluation of a functional at a coefficient: cost, optional gradient
/// density (misfit + Tikhonov), and the states that produced them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: CostBreakdown,
    pub density: Option<GradientDensity>,
    pub states: StateBundle,
}

fn tikhonov(alpha: &CoefficientField, mesh: &TriMesh, rho: f64) -> f64 {
    0.5 * rho * alpha.l2_norm_squared(mesh)
}

fn add_tikhonov_density(density: &mut [f64], alpha: &CoefficientField, rho: f64) {
    for (d, a) in density.iter_mut().zip(&alpha.values) {
        *d += rho * a;
    }
}

fn require_no_advection(data: &ScalarData) -> Result<()> {
    if !data.advection.is_zero() {
        return Err(Error::NotImplemented(
            "gradient densities are derived for b = 0; assemble-only support exists for b != 0"
                .to_string(),
        ));
    }
    Ok(())
}

fn grad_dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Evaluates one formulation at `alpha`.
pub fn evaluate(
    method: Method,
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
    with_gradient: bool,
) -> Result<Evaluation> {
    if with_gradient {
        require_no_advection(data)?;
    }
    match method {
        Method::Ccbm => evaluate_ccbm(mesh, alpha, data, cauchy, weights, with_gradient),
        Method::Kv => evaluate_kv(mesh, alpha, data, cauchy, weights, with_gradient),
        Method::Td => evaluate_td(mesh, alpha, data, cauchy, weights, with_gradient),
        Method::Tn => evaluate_tn(mesh, alpha, data, cauchy, weights, with_gradient),
    }
}

pub fn cost_ccbm(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<CostBreakdown> {
    Ok(evaluate(Method::Ccbm, mesh, alpha, data, cauchy, weights, false)?.cost)
}

pub fn grad_ccbm(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<GradientDensity> {
    Ok(evaluate(Method::Ccbm, mesh, alpha, data, cauchy, weights, true)?
        .density
        .expect("gradient requested"))
}

pub fn cost_kv(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<CostBreakdown> {
    Ok(evaluate(Method::Kv, mesh, alpha, data, cauchy, weights, false)?.cost)
}

pub fn grad_kv(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<GradientDensity> {
    Ok(evaluate(Method::Kv, mesh, alpha, data, cauchy, weights, true)?
        .density
        .expect("gradient requested"))
}

pub fn cost_td(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<CostBreakdown> {
    Ok(evaluate(Method::Td, mesh, alpha, data, cauchy, weights, false)?.cost)
}

pub fn grad_td(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<GradientDensity> {
    Ok(evaluate(Method::Td, mesh, alpha, data, cauchy, weights, true)?
        .density
        .expect("gradient requested"))
}

pub fn cost_tn(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<CostBreakdown> {
    Ok(evaluate(Method::Tn, mesh, alpha, data, cauchy, weights, false)?.cost)
}

pub fn grad_tn(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
) -> Result<GradientDensity> {
    Ok(evaluate(Method::Tn, mesh, alpha, data, cauchy, weights, true)?
        .density
        .expect("gradient requested"))
}

fn evaluate_ccbm(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
    with_gradient: bool,
) -> Result<Evaluation> {
    if weights.w0 + weights.w1 <= 0.0 {
        return Err(Error::config("CCBM needs w0 + w1 > 0"));
    }
    let u = solve_ccbm_state(mesh, alpha, data, cauchy)?;
    let u_im = u.imag_part();
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let k1 = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
    let l2sq = m.bilinear(&u_im.values, &u_im.values);
    let semisq = k1.bilinear(&u_im.values, &u_im.values);
    let misfit = 0.5 * (weights.w0 * l2sq + weights.w1 * semisq);
    let cost = CostBreakdown::new(misfit, tikhonov(alpha, mesh, weights.rho));

    let mut states = StateBundle { alpha: alpha.values.clone(), ..Default::default() };
    let density = if with_gradient {
        let p = solve_ccbm_adjoint(mesh, alpha, data, &u_im, weights.w0, weights.w1)?;
        let u_re = u.real_part();
        let p_re = p.real_part();
        let p_im = p.imag_part();
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let gur = u_re.gradient_on(mesh, t);
            let gui = u_im.gradient_on(mesh, t);
            let gpr = p_re.gradient_on(mesh, t);
            let gpi = p_im.gradient_on(mesh, t);
            values.push(grad_dot(gur, gpi) - grad_dot(gui, gpr));
        }
        add_tikhonov_density(&mut values, alpha, weights.rho);
        states.p = Some(p);
        Some(GradientDensity { values })
    } else {
        None
    };
    states.u = Some(u);
    Ok(Evaluation { cost, density, states })
}

/// Solves the Neumann-type adjoint `A p = rhs`, mirroring the constraint kind
/// of the corresponding state solve (mean-zero only for pure-Neumann data).
fn solve_neumann_type(
    mesh: &TriMesh,
    a: CsrMatrix<f64>,
    rhs: Vec<f64>,
    data: &ScalarData,
) -> Result<Vec<f64>> {
    let sys = SparseSystem::new(a, rhs);
    if data.reaction.is_zero() && data.advection.is_zero() {
        solve_neumann_mean_zero(&sys, &assemble_boundary_mass(mesh))
    } else {
        solve_sparse(&sys)
    }
}

fn evaluate_kv(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
    with_gradient: bool,
) -> Result<Evaluation> {
    let u_d = solve_dirichlet_state(mesh, alpha, data, &cauchy.f)?;
    let u_n = solve_neumann_state(mesh, alpha, data, &cauchy.g)?;
    let e: Vec<f64> =
        u_d.values.iter().zip(&u_n.values).map(|(a, b)| a - b).collect();
    let k_alpha = assemble_stiffness(mesh, alpha);
    let mg = assemble_boundary_mass(mesh);
    let misfit = 0.5 * k_alpha.bilinear(&e, &e) + 0.5 * mg.bilinear(&e, &e);
    let cost = CostBreakdown::new(misfit, tikhonov(alpha, mesh, weights.rho));

    let mut states =
        StateBundle { alpha: alpha.values.clone(), ..Default::default() };
    let density = if with_gradient {
        let a = interior_operator(mesh, alpha, data);
        let ke = k_alpha.matvec(&e);
        let mge = mg.matvec(&e);
        // Dirichlet adjoint: interior rows of A p_D = K_alpha e, p_D = 0 on the boundary.
        let bnodes = mesh.boundary_nodes();
        let zeros = vec![0.0; bnodes.len()];
        let sys_d =
            apply_dirichlet(&SparseSystem::new(a.clone(), ke.clone()), &bnodes, &zeros);
        let p_d = RealNodalField { values: solve_sparse(&sys_d)? };
        // Neumann adjoint: A p_N = K_alpha e + M_Gamma e on all rows.
        let rhs_n: Vec<f64> = ke.iter().zip(&mge).map(|(x, y)| x + y).collect();
        let p_n = RealNodalField { values: solve_neumann_type(mesh, a, rhs_n, data)? };

        let e_field = RealNodalField { values: e };
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let ge = e_field.gradient_on(mesh, t);
            let gud = u_d.gradient_on(mesh, t);
            let gun = u_n.gradient_on(mesh, t);
            let gpd = p_d.gradient_on(mesh, t);
            let gpn = p_n.gradient_on(mesh, t);
            values.push(0.5 * grad_dot(ge, ge) - grad_dot(gud, gpd) + grad_dot(gun, gpn));
        }
        add_tikhonov_density(&mut values, alpha, weights.rho);
        Some(GradientDensity { values })
    } else {
        None
    };
    states.u_d = Some(u_d);
    states.u_n = Some(u_n);
    Ok(Evaluation { cost, density, states })
}

fn evaluate_td(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
    with_gradient: bool,
) -> Result<Evaluation> {
    let v = solve_neumann_state(mesh, alpha, data, &cauchy.g)?;
    let bnodes = mesh.boundary_nodes();
    let mut resid = vec![0.0; mesh.n_nodes()];
    for (k, &i) in bnodes.iter().enumerate() {
        resid[i] = v.values[i] - cauchy.f[k];
    }
    let mg = assemble_boundary_mass(mesh);
    let misfit = 0.5 * mg.bilinear(&resid, &resid);
    let cost = CostBreakdown::new(misfit, tikhonov(alpha, mesh, weights.rho));

    let mut states = StateBundle { alpha: alpha.values.clone(), ..Default::default() };
    let density = if with_gradient {
        let a = interior_operator(mesh, alpha, data);
        let rhs = mg.matvec(&resid);
        let p = RealNodalField { values: solve_neumann_type(mesh, a, rhs, data)? };
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            values.push(-grad_dot(v.gradient_on(mesh, t), p.gradient_on(mesh, t)));
        }
        add_tikhonov_density(&mut values, alpha, weights.rho);
        Some(GradientDensity { values })
    } else {
        None
    };
    states.u_n = Some(v);
    Ok(Evaluation { cost, density, states })
}

/// Weak recovery of the boundary flux `alpha du/dn` at boundary nodes:
/// `<flux, phi_i>_Gamma = a(u, phi_i) - (Q, phi_i)` for boundary test
/// functions, inverted through the boundary mass matrix.
pub fn recover_weak_flux(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    u: &RealNodalField,
) -> Result<Vec<f64>> {
    let a = interior_operator(mesh, alpha, data);
    let au = a.matvec(&u.values);
    let lq = assemble_load(mesh, &data.source);
    let bnodes = mesh.boundary_nodes();
    let index_of: std::collections::HashMap<usize, usize> =
        bnodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    // Boundary-restricted edge mass matrix.
    let nb = bnodes.len();
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [i, j] = e.nodes;
        let pa = mesh.nodes[i];
        let pb = mesh.nodes[j];
        let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
        let (bi, bj) = (index_of[&i], index_of[&j]);
        triplets.push((bi, bi, len / 3.0));
        triplets.push((bj, bj, len / 3.0));
        triplets.push((bi, bj, len / 6.0));
        triplets.push((bj, bi, len / 6.0));
    }
    let mgb = CsrMatrix::from_triplets(nb, triplets);
    let rhs: Vec<f64> = bnodes.iter().map(|&i| au[i] - lq[i]).collect();
    solve_sparse(&SparseSystem::new(mgb, rhs))
}

fn evaluate_tn(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    cauchy: &CauchyData,
    weights: &Weights,
    with_gradient: bool,
) -> Result<Evaluation> {
    let u = solve_dirichlet_state(mesh, alpha, data, &cauchy.f)?;
    let flux = recover_weak_flux(mesh, alpha, data, &u)?;
    let bnodes = mesh.boundary_nodes();
    let r: Vec<f64> = flux.iter().zip(&cauchy.g).map(|(t, g)| t - g).collect();
    let mut r_full = vec![0.0; mesh.n_nodes()];
    for (k, &i) in bnodes.iter().enumerate() {
        r_full[i] = r[k];
    }
    let mg = assemble_boundary_mass(mesh);
    let misfit = 0.5 * mg.bilinear(&r_full, &r_full);
    let cost = CostBreakdown::new(misfit, tikhonov(alpha, mesh, weights.rho));

    let mut states = StateBundle { alpha: alpha.values.clone(), ..Default::default() };
    let density = if with_gradient {
        // Adjoint: interior rows of A p = 0 with p = r on the boundary.
        let a = interior_operator(mesh, alpha, data);
        let sys = apply_dirichlet(
            &SparseSystem::new(a, vec![0.0; mesh.n_nodes()]),
            &bnodes,
            &r,
        );
        let p = RealNodalField { values: solve_sparse(&sys)? };
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            values.push(grad_dot(u.gradient_on(mesh, t), p.gradient_on(mesh, t)));
        }
        add_tikhonov_density(&mut values, alpha, weights.rho);
        Some(GradientDensity { values })
    } else {
        None
    };
    states.u_d = Some(u);
    Ok(Evaluation { cost, density, states })
}

/// Reconstruction error report against a reference coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetrics {
    pub l2: f64,
    pub relative_l2: f64,
    pub regions: Option<RegionErrors>,
}

/// Per-subregion reconstructed values and errors, Table-style.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionErrors {
    pub values: Vec<f64>,
    pub exact: Vec<f64>,
    pub abs: Vec<f64>,
    pub rel: Vec<f64>,
    pub avg_abs: f64,
    pub avg_rel: f64,
}

/// Compares a reconstruction against the reference P0 coefficient; with a
/// partition, also reports area-weighted per-region values and errors.
pub fn error_metrics(
    alpha: &CoefficientField,
    alpha_star: &CoefficientField,
    mesh: &TriMesh,
    partition: Option<&PartitionSpec>,
) -> Result<ErrorMetrics> {
    if alpha.values.len() != alpha_star.values.len() {
        return Err(Error::invalid("coefficient fields have different lengths"));
    }
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.area(t);
        diff2 += (alpha.values[t] - alpha_star.values[t]).powi(2) * area;
        ref2 += alpha_star.values[t].powi(2) * area;
    }
    let l2 = diff2.sqrt();
    let relative_l2 = if ref2 > 0.0 { l2 / ref2.sqrt() } else { l2 };

    let regions = match partition {
        None => None,
        Some(spec) => {
            let nr = spec.n_regions();
            if mesh.region_of_triangle.iter().any(|&r| r >= nr) {
                return Err(Error::invalid(
                    "mesh subregion ids exceed the partition's region count",
                ));
            }
            let mut area_sum = vec![0.0; nr];
            let mut val_sum = vec![0.0; nr];
            let mut exact_sum = vec![0.0; nr];
            for t in 0..mesh.n_triangles() {
                let r = mesh.region_of_triangle[t];
                let area = mesh.area(t);
                area_sum[r] += area;
                val_sum[r] += alpha.values[t] * area;
                exact_sum[r] += alpha_star.values[t] * area;
            }
            if area_sum.iter().any(|&a| a == 0.0) {
                return Err(Error::invalid("a partition region captures no triangle"));
            }
            let values: Vec<f64> =
                val_sum.iter().zip(&area_sum).map(|(v, a)| v / a).collect();
            let exact: Vec<f64> =
                exact_sum.iter().zip(&area_sum).map(|(v, a)| v / a).collect();
            let abs: Vec<f64> =
                values.iter().zip(&exact).map(|(v, e)| (v - e).abs()).collect();
            let rel: Vec<f64> = abs
                .iter()
                .zip(&exact)
                .map(|(a, e)| if *e != 0.0 { a / e.abs() } else { *a })
                .collect();
            let avg_abs = abs.iter().sum::<f64>() / nr as f64;
            let avg_rel = rel.iter().sum::<f64>() / nr as f64;
            Some(RegionErrors { values, exact, abs, rel, avg_abs, avg_rel })
        }
    };
    Ok(ErrorMetrics { l2, relative_l2, regions })
}

/// Discrete duality pairing used by the gradient tests:
/// `B(u', p)` on the left against `conj(l*(u'))` on the right.
pub fn ccbm_duality_gap(
    mesh: &TriMesh,
    alpha: &CoefficientField,
    data: &ScalarData,
    u_prime: &[Complex64],
    p: &[Complex64],
    u_imag: &RealNodalField,
    w0: f64,
    w1: f64,
) -> f64 {
    let a = crate::forward::ccbm_matrix(mesh, alpha, data);
    let au = a.matvec(u_prime);
    let mut left = Complex64::new(0.0, 0.0);
    for i in 0..u_prime.len() {
        left += p[i].conj() * au[i];
    }
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let k1 = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
    let mu = m.matvec(&u_imag.values);
    let ku = k1.matvec(&u_imag.values);
    let mut right = Complex64::new(0.0, 0.0);
    for i in 0..u_prime.len() {
        right += u_prime[i] * (w0 * mu[i] + w1 * ku[i]);
    }
    (left - right).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_boundary_mass, assemble_stiffness, norms};
    use crate::forward::synthesize_cauchy_data;
    use crate::mesh::{assign_regions, build_disk_mesh, build_square_mesh, refine_uniform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Same-mesh consistent Cauchy data for a given target coefficient
    /// (deliberate inverse crime, test only).
    fn consistent_data(
        mesh: &crate::mesh::TriMesh,
        alpha_star: &CoefficientField,
        data: &ScalarData,
        g_fn: impl Fn([f64; 2]) -> f64,
    ) -> CauchyData {
        let mut c =
            synthesize_cauchy_data(alpha_star, data, &g_fn, mesh, mesh, true).unwrap();
        c.noise_level = 0.0;
        c
    }

    fn disk_scenario() -> (crate::mesh::TriMesh, CoefficientField, ScalarData, CauchyData) {
        let mesh = build_disk_mesh([0.0, 0.0], 1.0, 4).unwrap();
        let alpha_star = CoefficientField::from_fn(&mesh, |p| 1.0 + 0.5 * p[0] * p[1]);
        let data = ScalarData::diffusion_reaction(&mesh, |_| 1.0);
        let cauchy = consistent_data(&mesh, &alpha_star, &data, |_| 1.0);
        (mesh, alpha_star, data, cauchy)
    }

    #[test]
    fn all_misfits_vanish_at_the_target() {
        let (mesh, alpha_star, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 1.0, 0.0);
        let c_ccbm = cost_ccbm(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        let scale = {
            let u = crate::forward::solve_ccbm_state(&mesh, &alpha_star, &data, &cauchy).unwrap();
            let n = crate::fem::norms(&u.real_part(), &mesh).h1;
            1.0 + n * n
        };
        assert!(c_ccbm.misfit <= 1e-16 * scale, "ccbm misfit {}", c_ccbm.misfit);
        let c_kv = cost_kv(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        assert!(c_kv.misfit <= 1e-12, "kv misfit {}", c_kv.misfit);
        let c_td = cost_td(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        assert!(c_td.misfit <= 1e-8, "td misfit {}", c_td.misfit);
        let c_tn = cost_tn(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        assert!(c_tn.misfit <= 1e-8, "tn misfit {}", c_tn.misfit);
    }

    #[test]
    fn misfit_is_positive_away_from_the_target() {
        let (mesh, alpha_star, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 1.0, 0.0);
        let bumped = CoefficientField {
            values: alpha_star.values.iter().map(|v| v + 0.3).collect(),
        };
        let c = cost_ccbm(&mesh, &bumped, &data, &cauchy, &w).unwrap();
        assert!(c.misfit > 1e-8, "perturbed misfit only {}", c.misfit);
    }

    #[test]
    fn ccbm_misfit_matches_quadratic_form() {
        let (mesh, alpha_star, data, cauchy) = disk_scenario();
        let alpha = CoefficientField::constant(1.3, &mesh);
        let w = Weights::new(1.0, 0.0, 0.0);
        let cost = cost_ccbm(&mesh, &alpha, &data, &cauchy, &w).unwrap();
        let u = crate::forward::solve_ccbm_state(&mesh, &alpha, &data, &cauchy).unwrap();
        let ui = u.imag_part();
        let m = crate::fem::assemble_mass(&mesh, &crate::fem::Reaction::Constant(1.0));
        let direct = 0.5 * m.bilinear(&ui.values, &ui.values);
        assert!((cost.misfit - direct).abs() <= 1e-14 * direct.max(1.0));
    }

    #[test]
    fn ccbm_misfit_controls_h1_norm() {
        let (mesh, _, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 0.7, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let alpha = CoefficientField {
                values: (0..mesh.n_triangles()).map(|_| rng.gen_range(0.5..2.0)).collect(),
            };
            let cost = cost_ccbm(&mesh, &alpha, &data, &cauchy, &w).unwrap();
            let u = crate::forward::solve_ccbm_state(&mesh, &alpha, &data, &cauchy).unwrap();
            let h1 = norms(&u.imag_part(), &mesh).h1;
            assert!(cost.misfit + 1e-15 >= 0.5 * w.w0.min(w.w1) * h1 * h1);
        }
    }

    #[test]
    fn cost_breakdown_totals_and_regularization() {
        let (mesh, alpha_star, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 1.0, 0.01);
        let c = cost_ccbm(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        assert!((c.total - (c.misfit + c.regularization)).abs() <= 1e-14 * c.total);
        let direct = 0.5 * 0.01 * alpha_star.l2_norm_squared(&mesh);
        assert!((c.regularization - direct).abs() <= 1e-14);
    }

    #[test]
    fn density_reduces_to_tikhonov_term_at_the_target() {
        let (mesh, alpha_star, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 1.0, 0.02);
        let density = grad_ccbm(&mesh, &alpha_star, &data, &cauchy, &w).unwrap();
        for (t, d) in density.values.iter().enumerate() {
            assert!((d - 0.02 * alpha_star.values[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn density_misfit_part_scales_with_weights() {
        let (mesh, _, data, cauchy) = disk_scenario();
        let alpha = CoefficientField::constant(1.4, &mesh);
        let w1 = Weights::new(1.0, 0.5, 0.0);
        let w2 = Weights::new(2.0, 1.0, 0.0);
        let d1 = grad_ccbm(&mesh, &alpha, &data, &cauchy, &w1).unwrap();
        let d2 = grad_ccbm(&mesh, &alpha, &data, &cauchy, &w2).unwrap();
        let scale: f64 =
            d1.values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-30);
        for (a, b) in d1.values.iter().zip(&d2.values) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn kv_misfit_formula_on_interior_gap() {
        // With a zero boundary trace and alpha = 1, the KV energy gap is the
        // H1 seminorm squared over two.
        let mesh = build_square_mesh(-1.0, 1.0, -1.0, 1.0, 6).unwrap();
        let alpha = CoefficientField::constant(1.0, &mesh);
        let boundary: std::collections::HashSet<usize> =
            mesh.boundary_nodes().into_iter().collect();
        let e = crate::field::RealNodalField {
            values: (0..mesh.n_nodes())
                .map(|i| if boundary.contains(&i) { 0.0 } else { (i % 5) as f64 - 2.0 })
                .collect(),
        };
        let k = assemble_stiffness(&mesh, &alpha);
        let mg = assemble_boundary_mass(&mesh);
        let misfit = 0.5 * k.bilinear(&e.values, &e.values) + 0.5 * mg.bilinear(&e.values, &e.values);
        let semi = norms(&e, &mesh).h1_semi;
        assert!((misfit - 0.5 * semi * semi).abs() < 1e-12 * misfit.max(1.0));
    }

    // Manufactured linear solution: u = x1 with alpha = 1, c = 1, Q = x1.
    // The recovered weak flux approximates n_x away from the corners.
    #[test]
    fn weak_flux_matches_linear_solution_normals() {
        let mesh = build_square_mesh(-1.0, 1.0, -1.0, 1.0, 16).unwrap();
        let alpha = CoefficientField::constant(1.0, &mesh);
        let data = ScalarData::diffusion_reaction(&mesh, |p| p[0]);
        let u = crate::field::RealNodalField {
            values: mesh.nodes.iter().map(|p| p[0]).collect(),
        };
        let flux = recover_weak_flux(&mesh, &alpha, &data, &u).unwrap();
        let bnodes = mesh.boundary_nodes();
        for (k, &i) in bnodes.iter().enumerate() {
            let p = mesh.nodes[i];
            // Skip nodes within two edges of a corner.
            if (p[0].abs() > 0.8 && p[1].abs() > 0.8) {
                continue;
            }
            let exact = if (p[0] - 1.0).abs() < 1e-12 {
                1.0
            } else if (p[0] + 1.0).abs() < 1e-12 {
                -1.0
            } else {
                0.0
            };
            assert!(
                (flux[k] - exact).abs() < 0.05,
                "flux at ({}, {}) = {} vs {exact}",
                p[0],
                p[1],
                flux[k]
            );
        }
    }

    #[test]
    fn gradient_with_advection_is_rejected() {
        let (mesh, alpha, data, cauchy) = disk_scenario();
        let mut with_b = data;
        with_b.advection = crate::fem::Advection::Constant([0.5, 0.0]);
        let res = grad_ccbm(&mesh, &alpha, &with_b, &cauchy, &Weights::new(1.0, 1.0, 0.0));
        assert!(matches!(res, Err(crate::error::Error::NotImplemented(_))));
    }

    #[test]
    fn misfit_is_invariant_under_triangle_relabeling() {
        let (mesh, alpha, data, cauchy) = disk_scenario();
        let w = Weights::new(1.0, 1.0, 0.001);
        let c0 = cost_ccbm(&mesh, &alpha, &data, &cauchy, &w).unwrap();
        // Reverse the triangle ordering (and everything indexed by it).
        let mut permuted = mesh.clone();
        permuted.triangles.reverse();
        permuted.region_of_triangle.reverse();
        let alpha_p = CoefficientField {
            values: alpha.values.iter().rev().copied().collect(),
        };
        let c1 = cost_ccbm(&permuted, &alpha_p, &data, &cauchy, &w).unwrap();
        assert!((c0.total - c1.total).abs() <= 1e-12 * c0.total.max(1.0));
    }

    #[test]
    fn error_metrics_at_exact_coefficient_are_zero() {
        let mesh = build_square_mesh(-1.0, 1.0, -1.0, 1.0, 4).unwrap();
        let spec = crate::mesh::PartitionSpec::two_subregions();
        let mesh = assign_regions(&mesh, &spec).unwrap();
        let star = CoefficientField::from_region_values(&mesh, &[0.75, 0.5]).unwrap();
        let m = error_metrics(&star, &star, &mesh, Some(&spec)).unwrap();
        assert_eq!(m.l2, 0.0);
        let r = m.regions.unwrap();
        assert!(r.avg_abs == 0.0 && r.avg_rel == 0.0);
    }

    // Frozen reference rows: the three-subregion table row at zero noise and
    // a four-quadrant row, reproduced through the metric conventions.
    #[test]
    fn error_metrics_reproduce_reference_rows() {
        let mesh = build_square_mesh(-1.0, 1.0, -1.0, 1.0, 16).unwrap();
        let spec = crate::mesh::PartitionSpec::three_subregions(0.5);
        let mesh3 = assign_regions(&mesh, &spec).unwrap();
        let alpha = CoefficientField::from_region_values(
            &mesh3,
            &[1.128213, 0.740086, 0.528290],
        )
        .unwrap();
        let star =
            CoefficientField::from_region_values(&mesh3, &[1.5, 0.75, 0.5]).unwrap();
        let m = error_metrics(&alpha, &star, &mesh3, Some(&spec)).unwrap();
        let r = m.regions.unwrap();
        assert!((r.avg_abs - 0.136664).abs() < 1e-6, "avg abs {}", r.avg_abs);

        let specq = crate::mesh::PartitionSpec::four_quadrants(0.9);
        let mesh4 = assign_regions(&mesh, &specq).unwrap();
        let alpha = CoefficientField::from_region_values(
            &mesh4,
            &[0.2046, 0.2459, 0.7180, 1.0057],
        )
        .unwrap();
        let star = CoefficientField::from_region_values(&mesh4, &[0.25, 0.5, 0.75, 1.0])
            .unwrap();
        let m = error_metrics(&alpha, &star, &mesh4, Some(&specq)).unwrap();
        let r = m.regions.unwrap();
        assert!((r.avg_rel - 0.1846).abs() < 1e-4, "avg rel {}", r.avg_rel);
    }

    #[test]
    fn error_metrics_reject_region_mismatch() {
        let mesh = build_square_mesh(-1.0, 1.0, -1.0, 1.0, 4).unwrap();
        let spec4 = crate::mesh::PartitionSpec::four_quadrants(0.9);
        let mesh4 = assign_regions(&mesh, &spec4).unwrap();
        let alpha = CoefficientField::constant(1.0, &mesh4);
        let spec2 = crate::mesh::PartitionSpec::two_subregions();
        assert!(error_metrics(&alpha, &alpha, &mesh4, Some(&spec2)).is_err());
    }

    #[test]
    fn refined_consistency_transfers_to_quarter_mesh() {
        // Sanity guard for the shared helper: consistent data stays
        // consistent after refining the scenario mesh.
        let mesh = build_disk_mesh([0.0, 0.0], 1.0, 2).unwrap();
        let fine = refine_uniform(&mesh);
        assert_eq!(fine.n_triangles(), 4 * mesh.n_triangles());
    }
}
