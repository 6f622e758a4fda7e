//! Sobolev-gradient descent: mu-weighted H1 smoothing of the gradient
//! density, the three update rules, Armijo backtracking, the balancing
//! principle for the Tikhonov parameter, the pick-a-point piecewise-constant
//! restriction, and run orchestration.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_mass, assemble_mass, assemble_stiffness, norms, solve_sparse, Reaction,
    SparseSystem,
};
use crate::field::{CoefficientField, RealNodalField};
use crate::forward::{CauchyData, ScalarData};
use crate::mesh::{PartitionSpec, TriMesh};
use crate::objectives::{evaluate, CostBreakdown, GradientDensity, Method, Weights};

/// Which of the gradient-update variants drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// Smooth the full regularized density (misfit + Tikhonov) in H1.
    SmoothedFull,
    /// Smooth only the misfit density; apply the Tikhonov term raw.
    SmoothedMisfitPlusRawTikhonov,
    /// Conventional L2 update: no H1 smoothing, raw Tikhonov term.
    L2Conventional,
}

/// Sign convention for the raw Tikhonov term in the separated updates. The
/// printed formulas carry a plus sign; the default minus descends on the
/// regularized functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TikhonovSign {
    Minus,
    PaperPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    Fixed { t: f64 },
    Armijo { c1: f64, shrink: f64, t_init: f64, t_min: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoSchedule {
    Constant { rho: f64 },
    /// Refit `rho = (gamma - 1) J / R` after every accepted step.
    Balancing { gamma: f64, rho0: f64 },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DescentConfig {
    pub method: Method,
    pub update_rule: UpdateRule,
    pub mu: f64,
    pub step: StepRule,
    pub rho: RhoSchedule,
    pub w0: f64,
    pub w1: f64,
    pub k_max: usize,
    pub projection: Option<PartitionSpec>,
    pub tikhonov_sign: TikhonovSign,
    pub bounds: Option<[f64; 2]>,
    pub seed: u64,
    /// Optional early stop on the smoothed-gradient H1 norm; off by default.
    pub grad_tol: Option<f64>,
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu < 0.0 {
            return Err(Error::config("mu must be nonnegative"));
        }
        if self.w0 < 0.0 || self.w1 < 0.0 {
            return Err(Error::config("misfit weights must be nonnegative"));
        }
        if let StepRule::Armijo { c1, shrink, t_init, t_min } = self.step {
            if !(0.0..1.0).contains(&c1) || !(0.0..1.0).contains(&shrink) || shrink == 0.0 {
                return Err(Error::config("Armijo parameters must lie in (0,1)"));
            }
            if !(t_init > 0.0) || !(t_min > 0.0) || t_min > t_init {
                return Err(Error::config("Armijo step bounds must satisfy 0 < t_min <= t_init"));
            }
        }
        if let StepRule::Fixed { t } = self.step {
            if !(t > 0.0) {
                return Err(Error::config("fixed step must be positive"));
            }
        }
        match self.rho {
            RhoSchedule::Constant { rho } if rho < 0.0 => {
                return Err(Error::config("rho must be nonnegative"))
            }
            RhoSchedule::Balancing { gamma, .. } if gamma <= 1.0 => {
                return Err(Error::config("balancing needs gamma > 1"))
            }
            _ => {}
        }
        if let Some([lo, hi]) = self.bounds {
            if lo >= hi {
                return Err(Error::config("bounds must satisfy lower < upper"));
            }
        }
        if let Some(p) = &self.projection {
            p.validate()?;
        }
        Ok(())
    }

    fn initial_rho(&self) -> f64 {
        match self.rho {
            RhoSchedule::Constant { rho } => rho,
            RhoSchedule::Balancing { rho0, .. } => rho0,
        }
    }
}

/// One row of the run history.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: CostBreakdown,
    /// H1 norm of the smoothed gradient.
    pub grad_norm: f64,
    pub step: f64,
    pub rho: f64,
    /// `R(alpha) = ||alpha||_0^2` at this iterate (the balancing-principle R).
    pub alpha_l2_squared: f64,
    pub region_values: Option<Vec<f64>>,
    pub region_errors: Option<Vec<f64>>,
    pub avg_error: Option<f64>,
    pub stalled: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub alpha: CoefficientField,
    pub history: Vec<IterationRecord>,
    /// Set when the run stopped on an unrecoverable solver failure.
    pub failure: Option<String>,
}

/// Riesz representative of a P0 density in the mu-weighted H1 inner product:
/// solves `mu (grad G, grad phi) + (G, phi) = (density, phi)` for all P1 test
/// functions. `mu = 0` degenerates to the nodal L2 projection.
pub fn sobolev_smooth(
    mesh: &TriMesh,
    density: &GradientDensity,
    mu: f64,
) -> Result<RealNodalField> {
    if mu < 0.0 {
        return Err(Error::invalid("mu must be nonnegative"));
    }
    let m = assemble_mass(mesh, &Reaction::Constant(1.0));
    let a = if mu == 0.0 {
        m
    } else {
        let mut k = assemble_stiffness(mesh, &CoefficientField::constant(1.0, mesh));
        k.scale(mu);
        k.add(&m)
    };
    // Exact rhs for P0 density: each triangle sends area/3 of its value to
    // its three vertices.
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for t in 0..mesh.n_triangles() {
        let w = density.values[t] * mesh.area(t) / 3.0;
        for &i in &mesh.triangles[t] {
            rhs[i] += w;
        }
    }
    let g = solve_sparse(&SparseSystem::new(a, rhs))?;
    Ok(RealNodalField { values: g })
}

/// Per-triangle coefficient update
/// `alpha_T <- alpha_T - t G(centroid_T) -/+ t rho alpha_T`,
/// with the raw Tikhonov term present only for the separated rules.
pub fn descent_step(
    alpha: &CoefficientField,
    smoothed: &RealNodalField,
    mesh: &TriMesh,
    t: f64,
    rho: f64,
    rule: UpdateRule,
    sign: TikhonovSign,
    bounds: Option<[f64; 2]>,
) -> CoefficientField {
    let mut out = alpha.clone();
    for (tri, v) in out.values.iter_mut().enumerate() {
        let g = smoothed.centroid_value(mesh, tri);
        let tikhonov = match rule {
            UpdateRule::SmoothedFull => 0.0,
            UpdateRule::SmoothedMisfitPlusRawTikhonov | UpdateRule::L2Conventional => {
                match sign {
                    TikhonovSign::Minus => -t * rho * *v,
                    TikhonovSign::PaperPlus => t * rho * *v,
                }
            }
        };
        *v = *v - t * g + tikhonov;
    }
    if let Some([lo, hi]) = bounds {
        out.clamp(lo, hi);
    }
    out
}

/// Pick-a-point restriction: for each subregion, read the P0 value of the
/// triangle containing the sample point and broadcast it over the subregion.
pub fn project_piecewise_constant(
    alpha: &CoefficientField,
    partition: &PartitionSpec,
    mesh: &TriMesh,
) -> Result<CoefficientField> {
    partition.validate()?;
    let mut picked = Vec::with_capacity(partition.sample_points.len());
    for (r, &p) in partition.sample_points.iter().enumerate() {
        let t = mesh.locate(p).ok_or_else(|| {
            Error::config(format!(
                "sample point ({}, {}) for region {r} lies outside the mesh",
                p[0], p[1]
            ))
        })?;
        picked.push(alpha.values[t]);
    }
    let mut out = alpha.clone();
    for (t, v) in out.values.iter_mut().enumerate() {
        *v = picked[mesh.region_of_triangle[t]];
    }
    Ok(out)
}

/// Balancing-principle refit `rho = (gamma - 1) J / R`.
/// A nonpositive `R` keeps the previous value (reported through the record).
pub fn update_rho_balancing(misfit: f64, r_value: f64, gamma: f64, previous: f64) -> f64 {
    if r_value <= 0.0 {
        return previous;
    }
    (gamma - 1.0) * misfit / r_value
}

/// Residual of the balancing identity `(gamma - 1) J - rho R`, evaluated in
/// the factored form `((gamma - 1) J / R - rho) R` so that a rho produced by
/// [`update_rho_balancing`] yields an exact zero in floating point.
pub fn balancing_residual(misfit: f64, r_value: f64, gamma: f64, rho: f64) -> f64 {
    ((gamma - 1.0) * misfit / r_value - rho) * r_value
}

/// Backtracking line search on the sufficient-decrease condition
/// `J(alpha + t d) <= J(alpha) - c1 t |<grad, d>|`.
///
/// `slope` is the L2 pairing of the gradient density with the direction;
/// candidate steps whose forward solve fails are rejected and shrunk. If the
/// search reaches `t_min` without acceptance it reports a stall and the
/// iterate stays put.
pub struct ArmijoOutcome {
    pub t: f64,
    pub cost: Option<CostBreakdown>,
    pub alpha: Option<CoefficientField>,
    pub stalled: bool,
}

pub fn armijo_search(
    cost0: f64,
    slope: f64,
    c1: f64,
    shrink: f64,
    t_init: f64,
    t_min: f64,
    mut trial: impl FnMut(f64) -> Option<(CostBreakdown, CoefficientField)>,
) -> ArmijoOutcome {
    let mut t = t_init;
    let decrease = slope.abs();
    loop {
        if let Some((cost, alpha)) = trial(t) {
            if cost.total <= cost0 - c1 * t * decrease {
                return ArmijoOutcome { t, cost: Some(cost), alpha: Some(alpha), stalled: false };
            }
        }
        t *= shrink;
        if t < t_min {
            return ArmijoOutcome { t: t_min, cost: None, alpha: None, stalled: true };
        }
    }
}

/// Full descent run: state, adjoint, density, smoothing, step, optional
/// projection, per the configured update rule. Returns the final coefficient
/// and the complete per-iteration history; deterministic for a fixed config.
pub fn run_inversion(
    mesh: &TriMesh,
    data: &ScalarData,
    cauchy: &CauchyData,
    alpha0: &CoefficientField,
    config: &DescentConfig,
    alpha_star: Option<&CoefficientField>,
) -> Result<RunResult> {
    config.validate()?;
    let mut alpha = alpha0.clone();
    if let Some(partition) = &config.projection {
        // Iterates live in the piecewise-constant set from the start.
        alpha = project_piecewise_constant(&alpha, partition, mesh)?;
    }
    let mut rho = config.initial_rho();
    let mut history = Vec::with_capacity(config.k_max);
    let mut failure = None;

    // All evaluations run with rho = 0; the Tikhonov parts are assembled
    // here so the balancing refit can pair J and R at the same iterate.
    let misfit_weights = Weights::new(config.w0, config.w1, 0.0);
    let regularized_cost = |misfit: f64, rho: f64, a: &CoefficientField| -> CostBreakdown {
        let reg = 0.5 * rho * a.l2_norm_squared(mesh);
        CostBreakdown { misfit, regularization: reg, total: misfit + reg }
    };

    for k in 0..config.k_max {
        let eval =
            match evaluate(config.method, mesh, &alpha, data, cauchy, &misfit_weights, true) {
                Ok(e) => e,
                Err(Error::Solver(msg)) => {
                    failure = Some(format!("iteration {k}: {msg}"));
                    break;
                }
                Err(other) => return Err(other),
            };
        let misfit_density = eval.density.expect("gradient requested");

        // Balancing refit against the current iterate, before stepping.
        let r_now = alpha.l2_norm_squared(mesh);
        if let RhoSchedule::Balancing { gamma, .. } = config.rho {
            rho = update_rho_balancing(eval.cost.misfit, r_now, gamma, rho);
        }
        let cost_now = regularized_cost(eval.cost.misfit, rho, &alpha);

        // Rule-appropriate density: the full update smooths misfit + Tikhonov,
        // the separated updates smooth the misfit part only.
        let density = match config.update_rule {
            UpdateRule::SmoothedFull => {
                let mut d = misfit_density;
                for (v, a) in d.values.iter_mut().zip(&alpha.values) {
                    *v += rho * a;
                }
                d
            }
            UpdateRule::SmoothedMisfitPlusRawTikhonov | UpdateRule::L2Conventional => {
                misfit_density
            }
        };
        let mu = match config.update_rule {
            UpdateRule::L2Conventional => 0.0,
            _ => config.mu,
        };
        let smoothed = sobolev_smooth(mesh, &density, mu)?;
        let grad_norm = norms(&smoothed, mesh).h1;

        // Candidate steps: update + optional projection, costed after both.
        let make_candidate = |t: f64| -> Result<CoefficientField> {
            let stepped = descent_step(
                &alpha,
                &smoothed,
                mesh,
                t,
                rho,
                config.update_rule,
                config.tikhonov_sign,
                config.bounds,
            );
            match &config.projection {
                Some(partition) => project_piecewise_constant(&stepped, partition, mesh),
                None => Ok(stepped),
            }
        };
        let cost_of = |a: &CoefficientField| -> Result<CostBreakdown> {
            let e = evaluate(config.method, mesh, a, data, cauchy, &misfit_weights, false)?;
            Ok(regularized_cost(e.cost.misfit, rho, a))
        };

        let mut record = IterationRecord {
            k,
            cost: cost_now,
            grad_norm,
            step: 0.0,
            rho,
            alpha_l2_squared: r_now,
            region_values: None,
            region_errors: None,
            avg_error: None,
            stalled: false,
        };
        fill_region_info(&mut record, &alpha, alpha_star, mesh, config.projection.as_ref());

        let mut solver_failure = None;
        match config.step {
            StepRule::Fixed { t } => {
                record.step = t;
                let next = make_candidate(t)?;
                match cost_of(&next) {
                    Ok(_) => alpha = next,
                    Err(Error::Solver(msg)) => {
                        solver_failure = Some(format!("iteration {k}: {msg}"))
                    }
                    Err(other) => return Err(other),
                }
            }
            StepRule::Armijo { c1, shrink, t_init, t_min } => {
                // Slope of the actual P0 step direction.
                let direction: Vec<f64> = (0..mesh.n_triangles())
                    .map(|t| -smoothed.centroid_value(mesh, t))
                    .collect();
                let slope = density.inner(&direction, mesh);
                let outcome =
                    armijo_search(cost_now.total, slope, c1, shrink, t_init, t_min, |t| {
                        let next = make_candidate(t).ok()?;
                        let cost = cost_of(&next).ok()?;
                        Some((cost, next))
                    });
                record.step = outcome.t;
                record.stalled = outcome.stalled;
                if let Some(next) = outcome.alpha {
                    alpha = next;
                }
            }
        }

        history.push(record);
        if let Some(msg) = solver_failure {
            failure = Some(msg);
            break;
        }
        if let Some(tol) = config.grad_tol {
            if grad_norm <= tol {
                break;
            }
        }
    }

    Ok(RunResult { alpha, history, failure })
}

fn fill_region_info(
    record: &mut IterationRecord,
    alpha: &CoefficientField,
    alpha_star: Option<&CoefficientField>,
    mesh: &TriMesh,
    partition: Option<&PartitionSpec>,
) {
    let Some(spec) = partition else { return };
    let nr = spec.n_regions();
    let mut area = vec![0.0; nr];
    let mut vsum = vec![0.0; nr];
    for t in 0..mesh.n_triangles() {
        let r = mesh.region_of_triangle[t];
        area[r] += mesh.area(t);
        vsum[r] += alpha.values[t] * mesh.area(t);
    }
    let values: Vec<f64> = vsum.iter().zip(&area).map(|(v, a)| v / a).collect();
    if let Some(star) = alpha_star {
        if let Ok(metrics) =
            crate::objectives::error_metrics(alpha, star, mesh, Some(spec))
        {
            if let Some(regions) = metrics.regions {
                record.region_errors = Some(regions.abs);
                record.avg_error = Some(regions.avg_abs);
            }
        }
    }
    record.region_values = Some(values);
}

/// History CSV with the schema
/// `k,cost_total,cost_misfit,cost_reg,grad_norm,step,rho[,alpha_region_0..n][,err_region_0..n,avg_err]`.
pub fn history_csv(history: &[IterationRecord]) -> String {
    let mut out = String::new();
    let n_regions = history
        .first()
        .and_then(|r| r.region_values.as_ref())
        .map_or(0, |v| v.len());
    let with_errors = history.first().map_or(false, |r| r.region_errors.is_some());
    out.push_str("k,cost_total,cost_misfit,cost_reg,grad_norm,step,rho");
    for r in 0..n_regions {
        out.push_str(&format!(",alpha_region_{r}"));
    }
    if with_errors {
        for r in 0..n_regions {
            out.push_str(&format!(",err_region_{r}"));
        }
        out.push_str(",avg_err");
    }
    out.push('\n');
    for rec in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            rec.k,
            rec.cost.total,
            rec.cost.misfit,
            rec.cost.regularization,
            rec.grad_norm,
            rec.step,
            rec.rho
        ));
        if let Some(values) = &rec.region_values {
            for v in values {
                out.push_str(&format!(",{v}"));
            }
        }
        if with_errors {
            if let Some(errors) = &rec.region_errors {
                for e in errors {
                    out.push_str(&format!(",{e}"));
                }
            }
            out.push_str(&format!(",{}", rec.avg_error.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

/// Boundary-mass weights are part of the spec'd mean-zero machinery; expose a
/// convenience for tests that need the discrete boundary mean.
pub fn boundary_mean(mesh: &TriMesh, field: &RealNodalField) -> f64 {
    let mg = assemble_boundary_mass(mesh);
    let ones = vec![1.0; mesh.n_nodes()];
    mg.bilinear(&ones, &field.values)
}

/// L2 Riesz representative of a P0 density (no smoothing): used by the
/// conventional update and handy for comparisons in tests.
pub fn l2_riesz(mesh: &TriMesh, density: &GradientDensity) -> Result<RealNodalField> {
    sobolev_smooth(mesh, density, 0.0)
}
