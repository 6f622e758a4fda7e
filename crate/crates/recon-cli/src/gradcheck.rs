//! User-facing finite-difference gradient audit: compares each configured
//! method's adjoint directional derivatives against central differences on a
//! coarsened version of the config's scenario.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recon_core::forward::synthesize_cauchy_data;
use recon_core::mesh::refine_uniform;
use recon_core::objectives::{evaluate, Method};
use recon_core::{CoefficientField, Result, ScalarData, Weights};

use crate::config::ExperimentConfig;
use crate::presets::Domain;

pub struct GradCheckReport {
    pub method: Method,
    pub max_rel_err: f64,
    pub pass: bool,
}

const TOLERANCE: f64 = 1e-3;
const DIRECTIONS: usize = 5;
const MAX_TRIANGLES: usize = 500;

pub fn run_gradcheck(config: &ExperimentConfig) -> Result<Vec<GradCheckReport>> {
    let mut spec = config.resolve_scenario()?;
    // Coarsen to at most MAX_TRIANGLES triangles.
    spec.mesh_resolution = match spec.domain {
        Domain::Square { .. } => {
            // 2 n^2 triangles
            let cap = ((MAX_TRIANGLES / 2) as f64).sqrt().floor() as usize;
            spec.mesh_resolution.min(cap.max(1))
        }
        Domain::Disk { .. } => {
            // 6 n^2 triangles
            let cap = ((MAX_TRIANGLES / 6) as f64).sqrt().floor() as usize;
            spec.mesh_resolution.min(cap.max(1))
        }
    };
    let mesh = spec.build_mesh(spec.mesh_resolution)?;
    assert!(mesh.n_triangles() <= MAX_TRIANGLES);
    let fine = refine_uniform(&refine_uniform(&mesh));
    let q = spec.source;
    let g = spec.g_input;
    let cauchy = synthesize_cauchy_data(
        &spec.alpha_star_on(&fine)?,
        &ScalarData::diffusion_reaction(&fine, |p| q.eval(p)),
        |p| g.eval(p),
        &fine,
        &mesh,
        false,
    )?;
    let data = ScalarData::diffusion_reaction(&mesh, |p| q.eval(p));
    // Audit point away from the target so the misfit gradient is alive.
    let alpha = CoefficientField::from_fn(&mesh, |p| 1.2 + 0.3 * p[0].sin() * p[1].cos());
    let weights = Weights::new(spec.w0, spec.w1, 0.0);

    let mut reports = Vec::new();
    for &method in &config.methods {
        let eval_grad = evaluate(method, &mesh, &alpha, &data, &cauchy, &weights, true)?;
        let density = eval_grad.density.expect("gradient requested");
        let cost_at = |a: &CoefficientField| -> Result<f64> {
            Ok(evaluate(method, &mesh, a, &data, &cauchy, &weights, false)?.cost.total)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut max_rel: f64 = 0.0;
        for _ in 0..DIRECTIONS {
            let direction: Vec<f64> =
                (0..mesh.n_triangles()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let predicted = density.inner(&direction, &mesh);
            let mut best = f64::INFINITY;
            for h in [1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
                let shift = |s: f64| CoefficientField {
                    values: alpha
                        .values
                        .iter()
                        .zip(&direction)
                        .map(|(a, d)| a + s * d)
                        .collect(),
                };
                let fd = (cost_at(&shift(h))? - cost_at(&shift(-h))?) / (2.0 * h);
                let rel =
                    (fd - predicted).abs() / predicted.abs().max(fd.abs()).max(1e-300);
                best = best.min(rel);
            }
            max_rel = max_rel.max(best);
        }
        reports.push(GradCheckReport { method, max_rel_err: max_rel, pass: max_rel <= TOLERANCE });
    }
    Ok(reports)
}
