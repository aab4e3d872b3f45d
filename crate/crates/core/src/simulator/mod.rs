//! Exact path-wise simulation of the branching process.
//!
//! Each replica starts from a set of founders and is advanced event by event:
//! every individual draws its division time at birth from its own random
//! stream, keyed by the run seed, the replica index and its label, so a run is
//! reproducible regardless of how replicas are scheduled over threads.

mod export;
mod label;
mod population;
mod sampling;

pub use export::{write_csv, CsvRow, EventKind};
pub use label::Label;
pub use population::{split_size, stream_seed, DivisionEvent, Individual, PopulationState, Step};
pub use sampling::{default_window, sample_division_time, thinning_division_time};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CellTrait, ModelParams, Status};
use crate::rate::DivisionRate;
use crate::stats;
use crate::{Error, Result};

fn default_cap() -> usize {
    1_000_000
}

fn default_founders() -> Vec<CellTrait> {
    vec![CellTrait::new(1.0, Status::Old).expect("valid founder")]
}

/// Run settings shared by all replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
    #[serde(default)]
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    /// Thinning lookahead; `None` means `0.1 / alpha`.
    #[serde(default)]
    pub thinning_window: Option<f64>,
    #[serde(default = "default_founders")]
    pub founders: Vec<CellTrait>,
    /// Keep every division event of every replica.
    #[serde(default)]
    pub record_events: bool,
    /// Keep the alive traits at each snapshot.
    #[serde(default)]
    pub record_snapshots: bool,
}

impl SimConfig {
    /// Configuration with `snapshots` equispaced snapshot times in `(0, horizon]`.
    pub fn with_uniform_snapshots(horizon: f64, snapshots: usize, seed: u64) -> Self {
        let snapshot_times = (1..=snapshots).map(|k| horizon * k as f64 / snapshots as f64).collect();
        SimConfig {
            horizon,
            population_cap: default_cap(),
            seed,
            snapshot_times,
            thinning_window: None,
            founders: default_founders(),
            record_events: false,
            record_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.snapshot_times.is_empty() {
            return Err(Error::Parameter("snapshot_times must not be empty".into()));
        }
        if self.snapshot_times.iter().any(|t| !(0.0..=self.horizon).contains(t)) {
            return Err(Error::Parameter("snapshot times must lie in [0, horizon]".into()));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("snapshot times must be sorted".into()));
        }
        if self.population_cap < 1 {
            return Err(Error::Parameter("population_cap must be at least 1".into()));
        }
        if let Some(w) = self.thinning_window {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Parameter(format!("thinning_window must be positive, got {w}")));
            }
        }
        if self.founders.is_empty() {
            return Err(Error::Parameter("at least one founder is required".into()));
        }
        Ok(())
    }

    fn window(&self, params: &ModelParams) -> f64 {
        self.thinning_window.unwrap_or_else(|| default_window(params))
    }
}

/// Observations from one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaRun {
    pub replica: u64,
    /// Alive count at each snapshot time.
    pub counts: Vec<f64>,
    /// Sum of alive sizes at each snapshot time.
    pub total_sizes: Vec<f64>,
    /// Alive traits at each snapshot, when requested.
    pub snapshots: Option<Vec<Vec<CellTrait>>>,
    pub events: Option<Vec<DivisionEvent>>,
    /// Time at which the cap stopped the replica; later snapshots repeat the
    /// frozen state.
    pub capped_at: Option<f64>,
    pub event_count: usize,
}

/// Simulates one replica up to the horizon, recording every snapshot.
pub fn run_replica<R: DivisionRate + ?Sized>(params: &ModelParams, rate: &R, cfg: &SimConfig, replica: u64) -> Result<ReplicaRun> {
    cfg.validate()?;
    let mut state = PopulationState::new(
        &cfg.founders,
        params,
        rate,
        cfg.seed,
        replica,
        cfg.window(params),
        cfg.record_events,
    )?;
    let n = cfg.snapshot_times.len();
    let mut run = ReplicaRun {
        replica,
        counts: Vec::with_capacity(n),
        total_sizes: Vec::with_capacity(n),
        snapshots: cfg.record_snapshots.then(Vec::new),
        events: None,
        capped_at: None,
        event_count: 0,
    };
    let mut frozen: Option<(f64, f64, Vec<CellTrait>)> = None;
    for &t in &cfg.snapshot_times {
        if frozen.is_none() {
            match state.advance_to(params, rate, t, cfg.population_cap) {
                Ok(k) => run.event_count += k,
                Err(Error::PopulationCap { time, .. }) => {
                    log::debug!("replica {replica} capped at t = {time}");
                    run.capped_at = Some(time);
                    frozen = Some((
                        state.alive_count() as f64,
                        state.total_size(params),
                        if cfg.record_snapshots { state.traits(params) } else { Vec::new() },
                    ));
                }
                Err(e) => return Err(e),
            }
        }
        match &frozen {
            Some((c, s, traits)) => {
                run.counts.push(*c);
                run.total_sizes.push(*s);
                if let Some(snaps) = run.snapshots.as_mut() {
                    snaps.push(traits.clone());
                }
            }
            None => {
                run.counts.push(state.alive_count() as f64);
                run.total_sizes.push(state.total_size(params));
                if let Some(snaps) = run.snapshots.as_mut() {
                    snaps.push(state.traits(params));
                }
            }
        }
    }
    // Events past the last snapshot are not needed.
    run.events = state.take_event_log();
    Ok(run)
}

/// Runs `replicas` independent replicas in parallel; results are in replica order.
pub fn run_replicas<R: DivisionRate + ?Sized>(
    params: &ModelParams,
    rate: &R,
    cfg: &SimConfig,
    replicas: usize,
) -> Result<Vec<ReplicaRun>> {
    cfg.validate()?;
    (0..replicas as u64).into_par_iter().map(|r| run_replica(params, rate, cfg, r)).collect()
}

/// Monte-Carlo estimate of the Malthusian parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub stderr: f64,
    pub times: Vec<f64>,
    pub mean_counts: Vec<f64>,
    /// Snapshot index from which the fit starts.
    pub fit_start: usize,
    pub replicas: usize,
    pub capped_replicas: usize,
    /// Some replica hit the cap, so late counts are truncated from below.
    pub biased: bool,
}

fn fit_slope(times: &[f64], means: &[f64]) -> Result<f64> {
    if means.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::EstimationFailed("empty mean population at a fitted snapshot".into()));
    }
    let logs: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    Ok(stats::linear_fit(times, &logs)?.slope)
}

/// Fits the slope of `ln E[N_t]` over the second half of the snapshots.
pub fn estimate_lambda_from_runs(times: &[f64], runs: &[ReplicaRun], horizon: f64) -> Result<LambdaEstimate> {
    let replicas = runs.len();
    if replicas < 2 {
        return Err(Error::Parameter(format!("need at least 2 replicas, got {replicas}")));
    }
    let fit_start = times.len() / 2;
    if times.len() - fit_start < 3 {
        return Err(Error::Parameter(format!(
            "need at least 3 snapshots in the fitted second half, got {}",
            times.len() - fit_start
        )));
    }
    let capped: Vec<f64> = runs.iter().filter_map(|r| r.capped_at).collect();
    if capped.len() == replicas && capped.iter().all(|&t| t < 0.5 * horizon) {
        return Err(Error::EstimationFailed("every replica hit the population cap before half the horizon".into()));
    }
    let mean_over = |skip: Option<std::ops::Range<usize>>| -> Vec<f64> {
        let mut acc = vec![0.0; times.len()];
        let mut n = 0usize;
        for (i, r) in runs.iter().enumerate() {
            if skip.as_ref().is_some_and(|s| s.contains(&i)) {
                continue;
            }
            n += 1;
            for (a, c) in acc.iter_mut().zip(&r.counts) {
                *a += c;
            }
        }
        acc.iter().map(|a| a / n as f64).collect()
    };
    let mean_counts = mean_over(None);
    let t_fit = &times[fit_start..];
    let lambda = fit_slope(t_fit, &mean_counts[fit_start..])?;

    let blocks = replicas.min(20);
    let mut loo = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let range = (b * replicas / blocks)..((b + 1) * replicas / blocks);
        let m = mean_over(Some(range));
        loo.push(fit_slope(t_fit, &m[fit_start..])?);
    }
    let stderr = stats::jackknife_stderr(&loo);
    Ok(LambdaEstimate {
        lambda,
        stderr,
        times: times.to_vec(),
        mean_counts,
        fit_start,
        replicas,
        capped_replicas: capped.len(),
        biased: !capped.is_empty(),
    })
}

/// Simulates `replicas` replicas and estimates the growth rate from the mean
/// population size.
pub fn estimate_lambda_mc<R: DivisionRate + ?Sized>(
    params: &ModelParams,
    rate: &R,
    cfg: &SimConfig,
    replicas: usize,
) -> Result<LambdaEstimate> {
    if replicas < 2 {
        return Err(Error::Parameter(format!("need at least 2 replicas, got {replicas}")));
    }
    let light = SimConfig { record_events: false, record_snapshots: false, ..cfg.clone() };
    let runs = run_replicas(params, rate, &light, replicas)?;
    estimate_lambda_from_runs(&cfg.snapshot_times, &runs, cfg.horizon)
}

/// Pooled histogram of alive traits over size bins and status.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraitHistogram {
    /// Bin edges; bin `k` is `[edges[k], edges[k+1])`.
    pub edges: Vec<f64>,
    /// Fraction of the pool in each bin, indexed `[status][bin]`.
    pub mass: [Vec<f64>; 2],
    /// Fraction of the pool outside `[edges[0], edges[last])`.
    pub outside: f64,
    pub pooled: usize,
    /// Pooled raw size moments `E[x^p]`, `p = 0..=4`, over both statuses.
    pub moments: [f64; 5],
    /// Pooled share of status-1 individuals.
    pub status1_share: f64,
}

impl TraitHistogram {
    /// Density with respect to size, per status.
    pub fn density(&self, status: Status) -> Vec<f64> {
        self.mass[status.index()]
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, e)| m / (e[1] - e[0]))
            .collect()
    }
}

/// Normalized histogram of the traits pooled over all given populations.
pub fn empirical_trait_distribution(pools: &[Vec<CellTrait>], edges: &[f64]) -> Result<TraitHistogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("histogram edges must be increasing with at least two entries".into()));
    }
    let total: usize = pools.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::EmptyPopulation("no individuals in the pooled snapshots".into()));
    }
    let nb = edges.len() - 1;
    let mut counts = [vec![0usize; nb], vec![0usize; nb]];
    let mut outside = 0usize;
    let mut moments = [0.0; 5];
    let mut status1 = 0usize;
    for t in pools.iter().flatten() {
        let x = t.size();
        let mut xp = 1.0;
        for m in moments.iter_mut() {
            *m += xp;
            xp *= x;
        }
        if t.status() == Status::New {
            status1 += 1;
        }
        if x < edges[0] || x >= edges[nb] {
            outside += 1;
            continue;
        }
        let k = edges.partition_point(|&e| e <= x) - 1;
        counts[t.status().index()][k] += 1;
    }
    let n = total as f64;
    Ok(TraitHistogram {
        edges: edges.to_vec(),
        mass: counts.map(|c| c.into_iter().map(|k| k as f64 / n).collect()),
        outside: outside as f64 / n,
        pooled: total,
        moments: moments.map(|m| m / n),
        status1_share: status1 as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{Linear, NoDivision};

    #[test]
    fn validation_rules() {
        let mut c = SimConfig::with_uniform_snapshots(3.0, 6, 1);
        assert!(c.validate().is_ok());
        c.snapshot_times.clear();
        assert!(c.validate().is_err());
        let mut c = SimConfig::with_uniform_snapshots(3.0, 6, 1);
        c.snapshot_times.push(4.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_division_gives_zero_slope() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let cfg = SimConfig::with_uniform_snapshots(4.0, 8, 5);
        let est = estimate_lambda_mc(&p, &NoDivision, &cfg, 4).unwrap();
        assert_eq!(est.lambda, 0.0);
        assert!(est.mean_counts.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn point_mass_histogram() {
        let pool = vec![vec![CellTrait::new(1.0, Status::Old).unwrap()]];
        let edges = [0.5, 0.9, 1.1, 2.0];
        let h = empirical_trait_distribution(&pool, &edges).unwrap();
        assert_eq!(h.mass[0], vec![0.0, 1.0, 0.0]);
        assert_eq!(h.mass[1], vec![0.0; 3]);
        assert!(empirical_trait_distribution(&[vec![]], &edges).is_err());
    }

    #[test]
    fn replicas_are_reproducible() {
        let p = ModelParams::new(1.0, 0.2, 0.7).unwrap();
        let mut cfg = SimConfig::with_uniform_snapshots(2.0, 4, 42);
        cfg.record_events = true;
        let a = run_replica(&p, &Linear, &cfg, 3).unwrap();
        let b = run_replica(&p, &Linear, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = run_replica(&p, &Linear, &cfg, 4).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn capped_replicas_are_flagged() {
        let p = ModelParams::new(1.0, 0.0, 0.5).unwrap();
        let mut cfg = SimConfig::with_uniform_snapshots(6.0, 12, 8);
        cfg.population_cap = 100;
        let est = estimate_lambda_mc(&p, &Linear, &cfg, 4).unwrap();
        assert!(est.biased);
        assert!(est.mean_counts.iter().all(|&c| c <= 100.0));
    }
}
