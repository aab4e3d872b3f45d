use asymdiv::closedform::{self, SeriesU};
use asymdiv::fmt::g12;
use asymdiv::sensitivity::{self, Agreement, Direction};
use asymdiv::simulator::{self, CsvRow};
use asymdiv::spectral::{self, EigenMetadata, EigenTriple, Grid, GridSpec};
use asymdiv::{DivisionRate, ModelParams, Status};
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Mode};
use crate::output::{Manifest, OutputDir};
use crate::CliError;

/// Absolute difference below which two derivative estimates count as equal.
const DERIVATIVE_ABS_FLOOR: f64 = 1e-6;

pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    let rate = cfg.rate.build()?;
    match cfg.mode {
        Mode::Simulate => simulate(cfg, rate.as_ref(), out, man),
        Mode::Spectral => spectral_mode(cfg, rate.as_ref(), out, man),
        Mode::Closedform => closedform_mode(cfg, rate.as_ref(), out, man),
        Mode::Sensitivity => sensitivity_mode(cfg, rate.as_ref(), out, man),
        Mode::Crossval => crossval(cfg, rate.as_ref(), out, man),
    }
}

/// Solves the eigenproblem with the configured grid and discretization.
pub fn solve_spectral(cfg: &ExperimentConfig, params: &ModelParams, rate: &dyn DivisionRate) -> Result<EigenTriple, CliError> {
    let sec = cfg.spectral_section();
    let grid = sec.grid_spec().build(params)?;
    solve_on(cfg, &grid, params, rate)
}

fn solve_on(cfg: &ExperimentConfig, grid: &Grid, params: &ModelParams, rate: &dyn DivisionRate) -> Result<EigenTriple, CliError> {
    let sec = cfg.spectral_section();
    let op = spectral::assemble_operator(grid, params, rate, sec.interpolation()?, sec.transport)?;
    Ok(spectral::solve(&op, &sec.solver)?)
}

fn simulate(cfg: &ExperimentConfig, rate: &dyn DivisionRate, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    let (sim, replicas) = cfg.sim_config()?;
    let params = &cfg.params;
    log::info!("simulating {replicas} replicas to t = {}", sim.horizon);
    let runs = simulator::run_replicas(params, rate, &sim, replicas)?;

    out.write_with("counts.csv", |w| {
        writeln!(w, "replica,time,count,total_size")?;
        for r in &runs {
            for (k, t) in sim.snapshot_times.iter().enumerate() {
                writeln!(w, "{},{},{},{}", r.replica, g12(*t), g12(r.counts[k]), g12(r.total_sizes[k]))?;
            }
        }
        Ok(())
    })?;
    if sim.record_events {
        out.write_with("events.csv", |w| {
            let rows: Vec<CsvRow> = runs
                .iter()
                .flat_map(|r| r.events.iter().flatten().map(move |e| CsvRow::division(r.replica, e)))
                .collect();
            simulator::write_csv(w, &rows)
        })?;
    }
    let mut histogram = None;
    if sim.record_snapshots {
        out.write_with("snapshots.csv", |w| {
            let mut rows = Vec::new();
            for r in &runs {
                for (k, pop) in r.snapshots.iter().flatten().enumerate() {
                    rows.extend(pop.iter().map(|c| CsvRow::snapshot(r.replica, sim.snapshot_times[k], c)));
                }
            }
            simulator::write_csv(w, &rows)
        })?;
        let finals: Vec<_> = runs.iter().filter_map(|r| r.snapshots.as_ref().and_then(|s| s.last().cloned())).collect();
        let bins = cfg.simulation.as_ref().map_or(60, |s| s.histogram_bins);
        let (lo, hi) = spectral::default_domain(params);
        let edges: Vec<f64> = (0..=bins).map(|k| lo * (hi / lo).powf(k as f64 / bins as f64)).collect();
        match simulator::empirical_trait_distribution(&finals, &edges) {
            Ok(h) => {
                out.write_with("histogram.csv", |w| {
                    writeln!(w, "x_lo,x_hi,density0,density1")?;
                    let (d0, d1) = (h.density(Status::Old), h.density(Status::New));
                    for k in 0..bins {
                        writeln!(w, "{},{},{},{}", g12(h.edges[k]), g12(h.edges[k + 1]), g12(d0[k]), g12(d1[k]))?;
                    }
                    Ok(())
                })?;
                histogram = Some(json!({
                    "pooled": h.pooled,
                    "outside": h.outside,
                    "moments": h.moments,
                    "status1_share": h.status1_share,
                }));
            }
            Err(e) => man.warn(format!("no trait histogram: {e}")),
        }
    }

    let estimate = match simulator::estimate_lambda_from_runs(&sim.snapshot_times, &runs, sim.horizon) {
        Ok(est) => {
            if est.biased {
                man.warn(format!("{} replicas hit the population cap; lambda is biased low", est.capped_replicas));
            }
            Some(est)
        }
        Err(asymdiv::Error::Parameter(msg)) => {
            man.warn(format!("lambda not estimated: {msg}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    out.write_json("lambda.json", &estimate)?;
    let events: usize = runs.iter().map(|r| r.event_count).sum();
    man.results = json!({
        "lambda": estimate.as_ref().map(|e| e.lambda),
        "lambda_stderr": estimate.as_ref().map(|e| e.stderr),
        "replicas": replicas,
        "histogram": histogram,
    });
    man.diagnostics = json!({ "division_events": events, "capped_replicas": runs.iter().filter(|r| r.capped_at.is_some()).count() });
    Ok(())
}

fn eigen_diagnostics(t: &EigenTriple) -> serde_json::Value {
    json!({
        "right_iterations": t.diagnostics.right_iterations,
        "left_iterations": t.diagnostics.left_iterations,
        "right_residual": t.diagnostics.right_residual,
        "left_residual": t.diagnostics.left_residual,
        "lambda_left": t.diagnostics.lambda_left,
        "leakage": t.diagnostics.leakage,
        "upper_tail_mass": t.diagnostics.upper_tail_mass,
    })
}

fn spectral_mode(cfg: &ExperimentConfig, rate: &dyn DivisionRate, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    let sec = cfg.spectral_section();
    let t = solve_spectral(cfg, &cfg.params, rate)?;
    out.write_with("eigen.csv", |w| spectral::write_eigen_csv(w, &t))?;
    out.write_json("eigen.json", &EigenMetadata::new(&cfg.params, &t, sec.interpolation_order))?;
    for w in &t.diagnostics.warnings {
        man.warn(w.clone());
    }
    let mut results = json!({ "lambda": t.lambda, "mass": t.moment(0), "first_moment": t.moment(1) });
    if cfg.closed_forms_apply() {
        results["lambda_minus_alpha"] = json!(t.lambda - cfg.params.alpha());
        results["h_linear_deviation"] = json!(t.linear_h_deviation());
    }
    man.results = results;
    man.diagnostics = eigen_diagnostics(&t);
    Ok(())
}

#[derive(Serialize)]
struct ClosedformSummary {
    alpha: f64,
    theta: f64,
    normalization_k: f64,
    dlambda_deps: f64,
    dlambda_deps_on_grid: f64,
    moments_recursion: Vec<f64>,
    moments_quadrature: Vec<f64>,
    log_moments_recursion: Vec<f64>,
    log_moments_quadrature: Vec<f64>,
    published_l0: f64,
    published_l1: f64,
}

fn closedform_mode(cfg: &ExperimentConfig, rate: &dyn DivisionRate, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    cfg.require_symmetric_identity()?;
    let sec = cfg.closedform_section();
    let (alpha, theta) = (cfg.params.alpha(), cfg.params.theta());
    let order = sec.moment_order.max(2);
    let series = SeriesU::new(alpha, theta, sec.series)?;
    let m_quad = (0..=order).map(|p| series.moment(p as i32)).collect::<asymdiv::Result<Vec<_>>>()?;
    let l_quad = (0..=order).map(|p| series.log_moment(p as i32)).collect::<asymdiv::Result<Vec<_>>>()?;
    let table = closedform::moments(alpha, theta, order)?;
    let table = closedform::log_moments(&table, order, (l_quad[1], l_quad[2]))?;
    let (pub_l0, pub_l1) = closedform::published_log_moments(alpha, theta)?;
    out.write_with("moments.csv", |w| {
        writeln!(w, "p,m_recursion,m_quadrature,l_recursion,l_quadrature")?;
        for p in 0..=order {
            writeln!(w, "{p},{},{},{},{}", g12(table.m[p]), g12(m_quad[p]), g12(table.l[p]), g12(l_quad[p]))?;
        }
        Ok(())
    })?;

    let grid = cfg.spectral_section().grid_spec().build(&cfg.params)?;
    let u = series.on_nodes(grid.nodes());
    let (g0, g1) = closedform::transform_u_to_gamma(&u, alpha, theta, rate, &grid)?;
    out.write_with("series.csv", |w| {
        writeln!(w, "x,U,gamma0,gamma1")?;
        for (i, x) in grid.nodes().iter().enumerate() {
            writeln!(w, "{},{},{},{}", g12(*x), g12(u[i]), g12(g0[i]), g12(g1[i]))?;
        }
        Ok(())
    })?;
    if let Some(path) = &sec.x_file {
        let xs = read_x_file(path)?;
        out.write_with("series_points.csv", |w| {
            writeln!(w, "x,U,tail_bound")?;
            for &x in &xs {
                let (v, tail) = series.density_with_tail(x);
                writeln!(w, "{},{},{}", g12(x), g12(v), g12(tail))?;
            }
            Ok(())
        })?;
    }

    let summary = ClosedformSummary {
        alpha,
        theta,
        normalization_k: series.k(),
        dlambda_deps: closedform::dlambda_deps_series(&series)?,
        dlambda_deps_on_grid: closedform::dlambda_deps_integral(alpha, theta, &u, rate, &grid)?,
        moments_recursion: table.m.clone(),
        moments_quadrature: m_quad,
        log_moments_recursion: table.l.clone(),
        log_moments_quadrature: l_quad.clone(),
        published_l0: pub_l0,
        published_l1: pub_l1,
    };
    if (pub_l0 - l_quad[0]).abs() > 1e-6 || (pub_l1 - l_quad[1]).abs() > 1e-6 {
        man.warn(format!(
            "quoted closed forms l0 = {pub_l0}, l1 = {pub_l1} differ from quadrature l0 = {}, l1 = {}",
            l_quad[0], l_quad[1]
        ));
    }
    out.write_json("closedform.json", &summary)?;
    man.results = serde_json::to_value(&summary).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(())
}

fn read_x_file(path: &std::path::Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut xs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line == "x") {
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), k + 1)))?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(CliError::Config(format!("{}:{}: size must be positive, got {x}", path.display(), k + 1)));
        }
        xs.push(x);
    }
    Ok(xs)
}

fn sensitivity_mode(cfg: &ExperimentConfig, rate: &dyn DivisionRate, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    let sec = cfg.spectral_section();
    if sec.interpolation_order != 1 || sec.transport != spectral::Transport::default() {
        man.warn("sensitivity uses linear interpolation and upwind transport in x; the configured discretization is ignored");
    }
    let grid = sec.grid_spec().build(&cfg.params)?;
    let report = sensitivity::sensitivity_report(&cfg.params, rate, &grid, cfg.fd_step(), &sec.solver)?;
    out.write_json("sensitivity.json", &report)?;
    out.write_with("sensitivity.csv", |w| {
        writeln!(w, "direction,formula,finite_difference,abs_diff,rel_diff")?;
        let (f, d) = (report.formulas(), report.finite_differences());
        for (k, dir) in Direction::ALL.iter().enumerate() {
            let a = &report.agreement[k];
            let name = serde_json::to_value(dir).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            writeln!(w, "{name},{},{},{},{}", g12(f.get(*dir)), g12(d.get(*dir)), g12(a.absolute), g12(a.relative))?;
        }
        Ok(())
    })?;
    man.results = serde_json::to_value(&report).map_err(|e| CliError::Output(e.to_string()))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementRow {
    pub quantity: String,
    pub method_a: &'static str,
    pub value_a: f64,
    pub method_b: &'static str,
    pub value_b: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl AgreementRow {
    fn new(quantity: impl Into<String>, a: (&'static str, f64), b: (&'static str, f64), tolerance: f64) -> Self {
        Self::with_floor(quantity, a, b, tolerance, 0.0)
    }

    fn with_floor(quantity: impl Into<String>, a: (&'static str, f64), b: (&'static str, f64), tolerance: f64, floor: f64) -> Self {
        let ag = Agreement::new(a.1, b.1);
        AgreementRow {
            quantity: quantity.into(),
            method_a: a.0,
            value_a: a.1,
            method_b: b.0,
            value_b: b.1,
            abs_diff: ag.absolute,
            rel_diff: ag.relative,
            tolerance,
            pass: ag.within(tolerance, floor),
        }
    }

    /// A row whose `rel_diff` is a distance computed elsewhere.
    fn distance(quantity: impl Into<String>, a: &'static str, b: &'static str, d: f64, tolerance: f64) -> Self {
        AgreementRow {
            quantity: quantity.into(),
            method_a: a,
            value_a: f64::NAN,
            method_b: b,
            value_b: f64::NAN,
            abs_diff: d,
            rel_diff: d,
            tolerance,
            pass: d <= tolerance,
        }
    }
}

fn crossval(cfg: &ExperimentConfig, rate: &dyn DivisionRate, out: &mut OutputDir, man: &mut Manifest) -> Result<(), CliError> {
    let tol = cfg.crossval_section();
    let params = &cfg.params;
    let (sim, replicas) = cfg.sim_config()?;
    let sec = cfg.spectral_section();
    let grid = sec.grid_spec().build(params)?;
    let coarse = GridSpec { n: sec.n / 2, ..sec.grid_spec() }.build(params)?;

    let (mc, (fine, half)) = rayon::join(
        || simulator::estimate_lambda_mc(params, rate, &sim, replicas),
        || rayon::join(|| solve_on(cfg, &grid, params, rate), || solve_on(cfg, &coarse, params, rate)),
    );
    let (mc, t, half) = (mc?, fine?, half?);
    if mc.biased {
        man.warn(format!("{} replicas hit the population cap; Monte-Carlo lambda is biased low", mc.capped_replicas));
    }
    let mut rows = vec![AgreementRow::new("lambda", ("spectral", t.lambda), ("monte_carlo", mc.lambda), tol.lambda_rel_tol)];

    let formulas = sensitivity::dlambda_formulas(&t, params, rate)?;
    let step = cfg.fd_step() * Direction::Epsilon.scale(params);
    let fd = sensitivity::dlambda_finite_diff(params, rate, &grid, Direction::Epsilon, step, &sec.solver)?;
    rows.push(AgreementRow::with_floor(
        "dlambda_deps",
        ("formula", formulas.dl_deps),
        ("finite_difference", fd),
        tol.derivative_rel_tol,
        DERIVATIVE_ABS_FLOOR,
    ));

    if cfg.closed_forms_apply() {
        let (alpha, theta) = (params.alpha(), params.theta());
        rows.push(AgreementRow::new("lambda", ("spectral", t.lambda), ("closed_form", alpha), 1e-3));
        let table = closedform::moments(alpha, theta, 4)?;
        for k in 0..=4 {
            let extrapolated = 2.0 * t.moment(k as i32) - half.moment(k as i32);
            rows.push(AgreementRow::new(
                format!("m{k}"),
                ("spectral_extrapolated", extrapolated),
                ("closed_form", table.m[k]),
                tol.moment_rel_tol,
            ));
        }
        let series = SeriesU::new(alpha, theta, cfg.closedform_section().series)?;
        let u = series.on_nodes(grid.nodes());
        let g_integral = closedform::dlambda_deps_integral(alpha, theta, &u, rate, &grid)?;
        rows.push(AgreementRow::with_floor(
            "dlambda_deps",
            ("formula", formulas.dl_deps),
            ("g_integral", g_integral),
            tol.derivative_rel_tol,
            DERIVATIVE_ABS_FLOOR,
        ));
        let (g0, g1) = closedform::transform_u_to_gamma(&u, alpha, theta, rate, &grid)?;
        let w = grid.weights();
        for (s, mine) in [(Status::Old, &g0), (Status::New, &g1)] {
            let d: f64 = t.gamma_status(s).iter().zip(mine).zip(w).map(|((a, b), w)| (a - b).abs() * w).sum();
            rows.push(AgreementRow::distance(
                format!("gamma{}_l1", s.index()),
                "spectral",
                "transform",
                d,
                tol.density_l1_tol,
            ));
        }
    } else {
        man.warn("closed-form rows skipped: they need the identity rate and epsilon = 0");
    }

    out.write_with("agreement.csv", |w| {
        writeln!(w, "quantity,method_a,value_a,method_b,value_b,abs_diff,rel_diff,tolerance,pass")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.quantity,
                r.method_a,
                g12(r.value_a),
                r.method_b,
                g12(r.value_b),
                g12(r.abs_diff),
                g12(r.rel_diff),
                g12(r.tolerance),
                r.pass
            )?;
        }
        Ok(())
    })?;
    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| format!("{} ({} vs {})", r.quantity, r.method_a, r.method_b)).collect();
    man.results = json!({
        "lambda_spectral": t.lambda,
        "lambda_monte_carlo": mc.lambda,
        "lambda_monte_carlo_stderr": mc.stderr,
        "rows": rows,
        "all_pass": failed.is_empty(),
    });
    man.diagnostics = eigen_diagnostics(&t);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Disagreement(failed.join(", ")))
    }
}
