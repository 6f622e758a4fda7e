//! Orchestrates one experiment configuration: synthesizes data, sweeps
//! (method, noise, seed) runs, and emits history/measurement/field/table
//! artifacts. Individual run failures are recorded without aborting the
//! sweep.

use std::path::{Path, PathBuf};

use recon_core::forward::{add_noise, nodal_sup_norm, synthesize_cauchy_data_detailed};
use recon_core::inversion::{history_csv, run_inversion, RunResult};
use recon_core::mesh::refine_uniform;
use recon_core::objectives::{error_metrics, Method};
use recon_core::{CauchyData, CoefficientField, Error, Result, ScalarData, TriMesh};

use crate::config::ExperimentConfig;
use crate::presets::ScenarioSpec;
use crate::table::ComparisonTable;
use crate::vtk::{emit_field_vtk, VtkField};

/// Scenario data shared by every run of a sweep.
pub struct PreparedScenario {
    pub spec: ScenarioSpec,
    pub mesh: TriMesh,
    pub data: ScalarData,
    pub clean: CauchyData,
    pub u_star_sup: f64,
    pub alpha_star: CoefficientField,
}

/// Builds the coarse mesh, synthesizes clean Cauchy data on the refined fine
/// mesh, and samples the target coefficient for error reporting.
pub fn prepare_scenario(config: &ExperimentConfig) -> Result<PreparedScenario> {
    let spec = config.resolve_scenario()?;
    let mesh = spec.build_mesh(spec.mesh_resolution)?;
    let mut fine = mesh.clone();
    for _ in 0..config.fine_refinements {
        fine = refine_uniform(&fine);
    }
    let alpha_star_fine = spec.alpha_star_on(&fine)?;
    let q = spec.source;
    let fine_data = ScalarData::diffusion_reaction(&fine, |p| q.eval(p));
    let g = spec.g_input;
    let (clean, u_star) = synthesize_cauchy_data_detailed(
        &alpha_star_fine,
        &fine_data,
        |p| g.eval(p),
        &fine,
        &mesh,
        false,
    )?;
    let u_star_sup = nodal_sup_norm(&u_star);
    let data = ScalarData::diffusion_reaction(&mesh, |p| q.eval(p));
    let alpha_star = spec.alpha_star_on(&mesh)?;
    Ok(PreparedScenario { spec, mesh, data, clean, u_star_sup, alpha_star })
}

/// One completed cell of a sweep.
pub struct RunOutcome {
    pub method: Method,
    pub delta: f64,
    pub seed: u64,
    pub result: RunResult,
    pub region_values: Option<Vec<f64>>,
}

pub fn run_single(
    config: &ExperimentConfig,
    prepared: &PreparedScenario,
    method: Method,
    delta: f64,
    seed: u64,
) -> Result<RunOutcome> {
    let cauchy = add_noise(&prepared.clean, prepared.u_star_sup.max(1e-300), delta, seed)?;
    let descent = config.descent_config(&prepared.spec, method, seed);
    let alpha0 = CoefficientField::constant(prepared.spec.alpha0, &prepared.mesh);
    let result = run_inversion(
        &prepared.mesh,
        &prepared.data,
        &cauchy,
        &alpha0,
        &descent,
        Some(&prepared.alpha_star),
    )?;
    let region_values = match &prepared.spec.partition {
        Some(partition) => {
            let metrics =
                error_metrics(&result.alpha, &prepared.alpha_star, &prepared.mesh, Some(partition))?;
            metrics.regions.map(|r| r.values)
        }
        None => None,
    };
    Ok(RunOutcome { method, delta, seed, result, region_values })
}

/// Summary of a sweep: artifact paths and any per-run failures.
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub runs: usize,
    pub failures: Vec<String>,
    pub table_path: Option<PathBuf>,
}

fn run_tag(method: Method, delta: f64, seed: u64) -> String {
    format!("{}_d{}_s{}", method.name(), delta, seed)
}

fn write_measurement_csv(
    mesh: &TriMesh,
    cauchy: &CauchyData,
    path: &Path,
) -> Result<()> {
    let mut s = String::from("node_index,x,y,f,g\n");
    for (k, &i) in mesh.boundary_nodes().iter().enumerate() {
        let p = mesh.nodes[i];
        s.push_str(&format!("{i},{},{},{},{}\n", p[0], p[1], cauchy.f[k], cauchy.g[k]));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn write_alpha_csv(mesh: &TriMesh, alpha: &CoefficientField, path: &Path) -> Result<()> {
    let mut s = String::from("triangle,region,value\n");
    for (t, v) in alpha.values.iter().enumerate() {
        s.push_str(&format!("{t},{},{v}\n", mesh.region_of_triangle[t]));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Runs the full sweep. `jobs` caps the worker threads (1 = sequential).
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<ExperimentReport> {
    std::fs::create_dir_all(out_dir)?;
    let prepared = prepare_scenario(config)?;

    // Measurement CSVs per (noise, seed): the data every method shares.
    for &delta in &config.noise_levels {
        for &seed in &config.seeds {
            let noisy =
                add_noise(&prepared.clean, prepared.u_star_sup.max(1e-300), delta, seed)?;
            let path = out_dir.join(format!("measurement_d{delta}_s{seed}.csv"));
            write_measurement_csv(&prepared.mesh, &noisy, &path)?;
        }
    }
    // Reference coefficient for external visualization.
    emit_field_vtk(
        &prepared.mesh,
        &VtkField::PerTriangle(&prepared.alpha_star.values),
        "alpha_star",
        out_dir.join("alpha_star.vtk"),
    )?;

    let mut grid = Vec::new();
    for &method in &config.methods {
        for &delta in &config.noise_levels {
            for &seed in &config.seeds {
                grid.push((method, delta, seed));
            }
        }
    }

    let execute = |&(method, delta, seed): &(Method, f64, u64)| -> Result<RunOutcome> {
        let outcome = run_single(config, &prepared, method, delta, seed)?;
        let tag = run_tag(method, delta, seed);
        std::fs::write(
            out_dir.join(format!("history_{tag}.csv")),
            history_csv(&outcome.result.history),
        )?;
        write_alpha_csv(
            &prepared.mesh,
            &outcome.result.alpha,
            &out_dir.join(format!("alpha_{tag}.csv")),
        )?;
        emit_field_vtk(
            &prepared.mesh,
            &VtkField::PerTriangle(&outcome.result.alpha.values),
            "alpha",
            out_dir.join(format!("alpha_{tag}.vtk")),
        )?;
        Ok(outcome)
    };

    let outcomes: Vec<Result<RunOutcome>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            grid.par_iter().map(execute).collect()
        })
    } else {
        grid.iter().map(execute).collect()
    };

    let mut failures = Vec::new();
    let mut table = prepared
        .spec
        .region_targets()
        .map(|exact| ComparisonTable::new(config.methods.clone(), exact.to_vec()));
    for (cell, outcome) in grid.iter().zip(outcomes) {
        let (method, delta, seed) = *cell;
        match outcome {
            Ok(run) => {
                if let Some(msg) = &run.result.failure {
                    failures.push(format!("{}: {msg}", run_tag(method, delta, seed)));
                }
                if let (Some(table), Some(values)) = (table.as_mut(), run.region_values) {
                    table.insert_run(method, delta, seed, &values)?;
                }
            }
            Err(e) => failures.push(format!("{}: {e}", run_tag(method, delta, seed))),
        }
    }

    let table_path = match table {
        Some(table) => {
            table.verify_errors()?;
            let path = out_dir.join("table.csv");
            std::fs::write(&path, table.to_csv())?;
            Some(path)
        }
        None => None,
    };

    Ok(ExperimentReport { out_dir: out_dir.to_path_buf(), runs: grid.len(), failures, table_path })
}
