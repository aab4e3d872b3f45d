use asymdiv::fmt::g12;
use asymdiv::sensitivity::{self, Direction};
use asymdiv::ModelParams;
use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::modes::solve_spectral;
use crate::output::{Manifest, OutputDir};
use crate::CliError;

pub const SWEEP_HEADER: &str = "axis_value,alpha,eps,theta,lambda,dl_deps_formula,dl_deps_fd,dl_dalpha,dl_dtheta";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Theta,
    Eps,
    Alpha,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Theta => "theta",
            Axis::Eps => "eps",
            Axis::Alpha => "alpha",
        }
    }

    fn apply(self, base: &ModelParams, v: f64) -> asymdiv::Result<ModelParams> {
        match self {
            Axis::Theta => base.with_theta(v),
            Axis::Eps => base.with_epsilon(v),
            Axis::Alpha => base.with_alpha(v),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub params: ModelParams,
    pub lambda: f64,
    pub dl_deps_formula: f64,
    pub dl_deps_fd: f64,
    pub dl_dalpha: f64,
    pub dl_dtheta: f64,
    pub leakage: f64,
}

fn solve_point(cfg: &ExperimentConfig, axis_value: f64, params: ModelParams) -> Result<SweepPoint, CliError> {
    let rate = cfg.rate.build()?;
    let sec = cfg.spectral_section();
    let t = solve_spectral(cfg, &params, rate.as_ref())?;
    let f = sensitivity::dlambda_formulas(&t, &params, rate.as_ref())?;
    let step = cfg.fd_step() * Direction::Epsilon.scale(&params);
    let fd = sensitivity::dlambda_finite_diff(&params, rate.as_ref(), &t.grid, Direction::Epsilon, step, &sec.solver)?;
    Ok(SweepPoint {
        axis_value,
        params,
        lambda: t.lambda,
        dl_deps_formula: f.dl_deps,
        dl_deps_fd: fd,
        dl_dalpha: f.dl_dalpha,
        dl_dtheta: f.dl_dtheta,
        leakage: t.diagnostics.leakage,
    })
}

/// Solves at every value of `axis`, writing one JSON file per point and the
/// merged CSV in the order the values were given.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    out: &mut OutputDir,
    man: &mut Manifest,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("--values must list at least one value".into()));
    }
    let points: Vec<ModelParams> = values
        .iter()
        .map(|&v| {
            axis.apply(&cfg.params, v)
                .map_err(|e| CliError::Config(format!("{} = {v} is not admissible: {e}", axis.name())))
        })
        .collect::<Result<_, _>>()?;
    log::info!("sweeping {} over {} values", axis.name(), values.len());
    let results: Vec<SweepPoint> = values
        .par_iter()
        .zip(points)
        .map(|(&v, p)| solve_point(cfg, v, p))
        .collect::<Result<_, _>>()?;

    let width = values.len().to_string().len();
    for (k, r) in results.iter().enumerate() {
        out.write_json(&format!("points/{}_{k:0width$}.json", axis.name()), r)?;
    }
    out.write_with("sweep.csv", |w| {
        writeln!(w, "{SWEEP_HEADER}")?;
        for r in &results {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                g12(r.axis_value),
                g12(r.params.alpha()),
                g12(r.params.epsilon()),
                g12(r.params.theta()),
                g12(r.lambda),
                g12(r.dl_deps_formula),
                g12(r.dl_deps_fd),
                g12(r.dl_dalpha),
                g12(r.dl_dtheta)
            )?;
        }
        Ok(())
    })?;
    let lambdas: Vec<f64> = results.iter().map(|r| r.lambda).collect();
    man.results = json!({
        "axis": axis.name(),
        "points": results.len(),
        "lambda_min": lambdas.iter().copied().fold(f64::INFINITY, f64::min),
        "lambda_max": lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    man.diagnostics = json!({
        "max_leakage": results.iter().map(|r| r.leakage).fold(0.0, f64::max),
    });
    Ok(())
}
