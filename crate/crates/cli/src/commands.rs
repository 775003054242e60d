//! The four subcommands.

use std::io::Write;

use rayon::prelude::*;
use rk_variational::del_solver::{self, StepConfig, StepDiagnostics};
use rk_variational::geometry;
use rk_variational::model::State;
use rk_variational::problems;
use serde::Serialize;

use crate::config::{steps_to, RunConfig};
use crate::CliError;

/// Step of the reference solution in `converge`.
pub const REFERENCE_STEP: f64 = 1e-4;

pub const SYMPLECTICITY_THRESHOLD: f64 = 1e-5;
pub const DEL_THRESHOLD: f64 = 1e-8;
pub const MOMENTUM_THRESHOLD: f64 = 1e-8;
pub const REVERSAL_THRESHOLD: f64 = 1e-9;
/// Steps checked against the discrete Euler–Lagrange equations in `diagnose`.
const DEL_CHECK_STEPS: usize = 5;

/// Round-trip formatting: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct StepRecord<'a> {
    problem: &'a str,
    tableau: &'a str,
    h: f64,
    alpha_minus: f64,
    alpha_plus: f64,
    variant: &'a str,
    q: Vec<f64>,
    v: Vec<f64>,
    diagnostics: DiagnosticsRecord,
}

#[derive(Serialize)]
struct DiagnosticsRecord {
    iterations: usize,
    residual_norm: f64,
    position_violation: f64,
    velocity_violation: f64,
    update_history: Vec<f64>,
}

impl From<&StepDiagnostics> for DiagnosticsRecord {
    fn from(d: &StepDiagnostics) -> Self {
        Self {
            iterations: d.iterations,
            residual_norm: d.residual_norm,
            position_violation: d.position_violation,
            velocity_violation: d.velocity_violation,
            update_history: d.update_history.clone(),
        }
    }
}

pub fn step(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.problem;
    let (w2, diag) = del_solver::step(p.spec.as_ref(), &config.step, &p.default_state)?;
    let record = StepRecord {
        problem: p.name,
        tableau: config.step.layer.tableau.name(),
        h: config.step.h,
        alpha_minus: config.step.bias.alpha_minus(),
        alpha_plus: config.step.bias.alpha_plus(),
        variant: config.step.variant.name(),
        q: w2.q.iter().copied().collect(),
        v: w2.v.iter().copied().collect(),
        diagnostics: (&diag).into(),
    };
    let text = toml::to_string(&record).expect("step record serializes");
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn header(config: &RunConfig) -> Vec<String> {
    let n = config.problem.spec.dim();
    let mut cols = vec!["step".to_string(), "t".to_string()];
    cols.extend((0..n).map(|i| format!("q{i}")));
    cols.extend((0..n).map(|i| format!("v{i}")));
    cols.push("energy".into());
    cols.push("g_norm".into());
    if let Some(action) = &config.problem.symmetry {
        cols.extend(action.names().iter().map(|name| format!("J_{name}")));
    }
    cols.push("iterations".into());
    cols.push("residual".into());
    cols
}

fn row(config: &RunConfig, k: usize, w: &State, diag: Option<&StepDiagnostics>) -> Result<Vec<String>, CliError> {
    let p = &config.problem;
    let spec = p.spec.as_ref();
    let mut cols = vec![k.to_string(), num(k as f64 * config.step.h)];
    cols.extend(w.q.iter().map(|&x| num(x)));
    cols.extend(w.v.iter().map(|&x| num(x)));
    cols.push(num(geometry::energy(spec, w)));
    cols.push(num(spec.constraint(&w.q).amax()));
    if let Some(action) = &p.symmetry {
        for i in 0..action.len() {
            cols.push(num(geometry::discrete_momentum(spec, &config.step, w, action, i)?));
        }
    }
    cols.push(diag.map_or(0, |d| d.iterations).to_string());
    cols.push(num(diag.map_or(0.0, |d| d.residual_norm)));
    Ok(cols)
}

/// Rows are flushed as they are produced, so a run that stops early leaves
/// the trajectory up to the failure behind.
pub fn simulate(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = &config.problem;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(header(config))?;
    csv.write_record(row(config, 0, &p.default_state, None)?)?;
    let mut failure = None;
    let run = del_solver::simulate_with(p.spec.as_ref(), &config.step, &p.default_state, config.n_steps, |k, w, d| {
        if failure.is_some() {
            return;
        }
        let written = row(config, k, w, Some(d)).and_then(|r| csv.write_record(r).map_err(CliError::from));
        if let Err(e) = written {
            failure = Some(e);
        }
    });
    csv.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    run?;
    Ok(())
}

/// Least-squares slope of `log error` against `log h`.
pub fn fitted_slope(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Global error at the final time for every step size, in the given order.
fn study_errors(config: &RunConfig) -> Result<Vec<(f64, usize, f64)>, CliError> {
    let p = &config.problem;
    let spec = p.spec.as_ref();
    let t = config.study_time;
    let reference = problems::reference_solution(spec, &p.default_state, t, REFERENCE_STEP)?;
    let runs: Vec<(f64, usize, StepConfig)> = config
        .h_list
        .iter()
        .map(|&h| {
            let n = steps_to("h_list", t, h)?;
            let step = StepConfig { h, ..config.step.clone() };
            Ok((h, n, step))
        })
        .collect::<Result<_, CliError>>()?;
    runs.into_par_iter()
        .map(|(h, n, step)| {
            let end = del_solver::simulate_with(spec, &step, &p.default_state, n, |_, _, _| {})?;
            Ok((h, n, end.max_abs_diff(&reference)))
        })
        .collect()
}

/// Returns the fitted slope.
pub fn converge(config: &RunConfig, out: &mut dyn Write) -> Result<f64, CliError> {
    let rows = study_errors(config)?;
    let hs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let slope = fitted_slope(&hs, &errors);
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["h", "steps", "error", "local_slope", "fitted_slope"])?;
    for (i, &(h, n, e)) in rows.iter().enumerate() {
        let local = if i == 0 {
            String::new()
        } else {
            let (h0, e0) = (rows[i - 1].0, rows[i - 1].2);
            num((e0 / e).ln() / (h0 / h).ln())
        };
        csv.write_record([num(h), n.to_string(), num(e), local, num(slope)])?;
    }
    csv.flush()?;
    Ok(slope)
}

struct Check {
    name: String,
    measured: f64,
    threshold: f64,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
        }
    }

    fn passed(&self) -> bool {
        self.measured <= self.threshold
    }
}

fn run_checks(config: &RunConfig) -> Result<Vec<Check>, CliError> {
    let p = &config.problem;
    let spec = p.spec.as_ref();
    let step = &config.step;
    let w0 = &p.default_state;
    let mut checks = Vec::new();

    let defect = geometry::symplecticity_defect(spec, step, w0, config.fd_step)?;
    checks.push(Check::new("symplecticity_defect", defect, SYMPLECTICITY_THRESHOLD));

    let traj = del_solver::simulate(spec, step, w0, config.n_steps).into_result()?;
    let mut del: f64 = 0.0;
    for pair in traj.states.windows(2).take(DEL_CHECK_STEPS) {
        del = del.max(geometry::del_residual_check(spec, step, &pair[0], &pair[1])?);
    }
    checks.push(Check::new("del_residual", del, DEL_THRESHOLD));

    if let Some(action) = &p.symmetry {
        for i in 0..action.len() {
            let j0 = geometry::discrete_momentum(spec, step, w0, action, i)?;
            let mut drift: f64 = 0.0;
            for w in &traj.states {
                drift = drift.max((geometry::discrete_momentum(spec, step, w, action, i)? - j0).abs());
            }
            checks.push(Check::new(
                format!("momentum_drift_{}", action.names()[i]),
                drift,
                MOMENTUM_THRESHOLD,
            ));
        }
    }

    let reversible = StepConfig::self_adjoint(step.h, step.layer.tableau.clone()).with_variant(step.variant);
    let (w1, _) = del_solver::step(spec, &reversible, w0)?;
    let (back, _) = del_solver::step(spec, &reversible.reversed(), &w1)?;
    checks.push(Check::new("time_reversal", back.max_abs_diff(w0), REVERSAL_THRESHOLD));
    Ok(checks)
}

/// Returns whether every check passed.
pub fn diagnose(config: &RunConfig, out: &mut dyn Write) -> Result<bool, CliError> {
    let checks = run_checks(config)?;
    writeln!(
        out,
        "# {} h={} tableau={} steps={}",
        config.problem.name,
        config.step.h,
        config.step.layer.tableau.name(),
        config.n_steps
    )?;
    writeln!(out, "{:<36} {:>24} {:>24}  result", "check", "measured", "threshold")?;
    for c in &checks {
        writeln!(
            out,
            "{:<36} {:>24} {:>24}  {}",
            c.name,
            num(c.measured),
            num(c.threshold),
            if c.passed() { "PASS" } else { "FAIL" }
        )?;
    }
    Ok(checks.iter().all(Check::passed))
}
