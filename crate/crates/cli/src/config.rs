use std::path::{Path, PathBuf};

use asymdiv::closedform::SeriesConfig;
use asymdiv::spectral::{EigenOptions, GridSpec, Interpolation, Transport};
use asymdiv::{CellTrait, ModelParams, RateSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ASYMDIV_OUTPUT_DIR";

const FALLBACK_OUTPUT_DIR: &str = "asymdiv-output";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Spectral,
    Closedform,
    Sensitivity,
    Crossval,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Spectral => "spectral",
            Mode::Closedform => "closedform",
            Mode::Sensitivity => "sensitivity",
            Mode::Crossval => "crossval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub replicas: usize,
    pub horizon: f64,
    /// Explicit snapshot times; alternatively `snapshot_count` equispaced times.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub snapshot_count: Option<usize>,
    #[serde(default)]
    pub population_cap: Option<usize>,
    #[serde(default)]
    pub thinning_window: Option<f64>,
    #[serde(default)]
    pub founders: Option<Vec<CellTrait>>,
    #[serde(default)]
    pub record_events: bool,
    #[serde(default)]
    pub record_snapshots: bool,
    /// Number of log-spaced size bins for the pooled trait histogram.
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_bins() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    #[serde(default = "default_nodes")]
    pub n: usize,
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    /// 1 (linear) or 3 (clipped cubic).
    #[serde(default = "default_order")]
    pub interpolation_order: u32,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default)]
    pub solver: EigenOptions,
}

fn default_nodes() -> usize {
    512
}

fn default_order() -> u32 {
    1
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            n: default_nodes(),
            x_min: None,
            x_max: None,
            interpolation_order: default_order(),
            transport: Transport::default(),
            solver: EigenOptions::default(),
        }
    }
}

impl SpectralSection {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { n: self.n, x_min: self.x_min, x_max: self.x_max }
    }

    pub fn interpolation(&self) -> Result<Interpolation, CliError> {
        Interpolation::from_order(self.interpolation_order).map_err(CliError::from)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedformSection {
    #[serde(default)]
    pub series: SeriesConfig,
    /// Highest moment order in the moment table.
    #[serde(default = "default_moment_order")]
    pub moment_order: usize,
    /// One-column file of sizes at which to evaluate the series.
    #[serde(default)]
    pub x_file: Option<PathBuf>,
}

fn default_moment_order() -> usize {
    6
}

impl Default for ClosedformSection {
    fn default() -> Self {
        ClosedformSection { series: SeriesConfig::default(), moment_order: default_moment_order(), x_file: None }
    }
}

/// Tolerances of the cross-validation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossvalSection {
    #[serde(default = "default_lambda_tol")]
    pub lambda_rel_tol: f64,
    #[serde(default = "default_moment_tol")]
    pub moment_rel_tol: f64,
    #[serde(default = "default_deriv_tol")]
    pub derivative_rel_tol: f64,
    #[serde(default = "default_density_tol")]
    pub density_l1_tol: f64,
}

fn default_lambda_tol() -> f64 {
    0.05
}

fn default_moment_tol() -> f64 {
    1e-2
}

fn default_deriv_tol() -> f64 {
    0.05
}

fn default_density_tol() -> f64 {
    2e-2
}

impl Default for CrossvalSection {
    fn default() -> Self {
        CrossvalSection {
            lambda_rel_tol: default_lambda_tol(),
            moment_rel_tol: default_moment_tol(),
            derivative_rel_tol: default_deriv_tol(),
            density_l1_tol: default_density_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub params: ModelParams,
    #[serde(default, alias = "B")]
    pub rate: RateSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub spectral: Option<SpectralSection>,
    #[serde(default)]
    pub closedform: Option<ClosedformSection>,
    /// Relative finite-difference step.
    #[serde(default)]
    pub fd_step: Option<f64>,
    #[serde(default)]
    pub crossval: Option<CrossvalSection>,
}

impl ExperimentConfig {
    /// Reads and parses a JSON config, reporting the offending field and
    /// position on failure.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            let path = e.path().to_string();
            CliError::Config(format!("line {}, column {}, at `{path}`: {inner}", inner.line(), inner.column()))
        })
    }

    /// Checks that the sections the mode needs are present and consistent.
    pub fn validate(&self) -> Result<(), CliError> {
        self.rate.build()?;
        if let Some(s) = self.fd_step {
            if !(s.is_finite() && s > 0.0) {
                return Err(CliError::Config(format!("fd_step must be positive, got {s}")));
            }
        }
        let spectral = self.spectral_section();
        spectral.interpolation()?;
        spectral.grid_spec().build(&self.params)?;
        match self.mode {
            Mode::Simulate => {
                self.sim_config()?;
            }
            Mode::Closedform => self.require_symmetric_identity()?,
            Mode::Crossval => {
                self.sim_config()?;
            }
            Mode::Spectral | Mode::Sensitivity => {}
        }
        if let Some(c) = &self.closedform {
            c.series.validate()?;
        }
        Ok(())
    }

    pub fn require_symmetric_identity(&self) -> Result<(), CliError> {
        if !self.rate.is_identity() {
            return Err(CliError::Config("closed forms require the identity division rate".into()));
        }
        if self.params.epsilon() != 0.0 {
            return Err(CliError::Config(format!(
                "closed forms hold at epsilon = 0, got epsilon = {}",
                self.params.epsilon()
            )));
        }
        Ok(())
    }

    pub fn closed_forms_apply(&self) -> bool {
        self.require_symmetric_identity().is_ok()
    }

    pub fn spectral_section(&self) -> SpectralSection {
        self.spectral.clone().unwrap_or_default()
    }

    pub fn closedform_section(&self) -> ClosedformSection {
        self.closedform.clone().unwrap_or_default()
    }

    pub fn crossval_section(&self) -> CrossvalSection {
        self.crossval.clone().unwrap_or_default()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step.unwrap_or(asymdiv::sensitivity::DEFAULT_FD_STEP)
    }

    /// Builds the simulator settings; the top-level seed is used.
    pub fn sim_config(&self) -> Result<(asymdiv::simulator::SimConfig, usize), CliError> {
        let s = self
            .simulation
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("mode {} needs a `simulation` section", self.mode.as_str())))?;
        let mut cfg = match (&s.snapshot_times, s.snapshot_count) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either snapshot_times or snapshot_count, not both".into()))
            }
            (Some(times), None) => {
                let mut c = asymdiv::simulator::SimConfig::with_uniform_snapshots(s.horizon, 1, self.seed);
                c.snapshot_times = times.clone();
                c
            }
            (None, Some(k)) => asymdiv::simulator::SimConfig::with_uniform_snapshots(s.horizon, k, self.seed),
            (None, None) => return Err(CliError::Config("simulation needs snapshot_times or snapshot_count".into())),
        };
        if let Some(cap) = s.population_cap {
            cfg.population_cap = cap;
        }
        cfg.thinning_window = s.thinning_window;
        if let Some(f) = &s.founders {
            cfg.founders = f.clone();
        }
        cfg.record_events = s.record_events;
        cfg.record_snapshots = s.record_snapshots;
        cfg.validate().map_err(|e| CliError::Config(format!("simulation: {e}")))?;
        if s.replicas < 2 {
            return Err(CliError::Config(format!("need at least 2 replicas, got {}", s.replicas)));
        }
        if s.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be positive".into()));
        }
        Ok((cfg, s.replicas))
    }

    /// Output directory: command-line override, then the config, then the
    /// environment, then a fixed fallback.
    pub fn resolve_output_dir(&self, cli: Option<&Path>) -> PathBuf {
        cli.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(extra: &str) -> String {
        format!(r#"{{"mode": "spectral", "params": {{"alpha": 1.0, "epsilon": 0.0, "theta": 0.7}}{extra}}}"#)
    }

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::parse(&base("")).unwrap();
        assert_eq!(c.mode, Mode::Spectral);
        assert!(c.rate.is_identity());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_field_names_its_path() {
        let err = ExperimentConfig::parse(&base(r#", "spectral": {"nodes": 4}"#)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("spectral") && msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn bad_params_are_rejected_at_parse() {
        let text = r#"{"mode": "spectral", "params": {"alpha": 1.0, "epsilon": 2.0, "theta": 0.7}}"#;
        assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))));
    }

    #[test]
    fn simulate_needs_snapshots() {
        let text = r#"{"mode": "simulate", "params": {"alpha": 1.0, "epsilon": 0.0, "theta": 0.7},
            "simulation": {"replicas": 10, "horizon": 1.0, "snapshot_times": []}}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn rate_alias() {
        let c = ExperimentConfig::parse(&base(r#", "B": {"kind": "power", "exponent": 0.5}"#)).unwrap();
        assert!(!c.rate.is_identity());
    }

    #[test]
    fn closedform_requires_symmetric_point() {
        let text = r#"{"mode": "closedform", "params": {"alpha": 1.0, "epsilon": 0.1, "theta": 0.7}}"#;
        let c = ExperimentConfig::parse(text).unwrap();
        assert!(c.validate().is_err());
    }
}
