//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};

use clap::Args;
use rk_variational::boundary::Bias;
use rk_variational::del_solver::{ApproximateVariant, StepConfig};
use rk_variational::problems::{self, NamedProblem};
use rk_variational::standard_layer::{BackwardMode, ButcherTableau, StandardLayer};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_PROBLEM: &str = "sphere-pendulum";
pub const DEFAULT_TABLEAU: &str = "rk4";
pub const DEFAULT_H: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 100;
/// Final time of the order study when neither `T` nor `steps` is given.
pub const DEFAULT_STUDY_TIME: f64 = 1.0;
pub const DEFAULT_H_LIST: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Settings as given, before defaults and validation. The same keys are
/// accepted on the command line (with dashes) and in the file (with
/// underscores); flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Catalog problem name
    #[arg(long)]
    pub problem: Option<String>,
    /// euler, midpoint, heun or rk4
    #[arg(long)]
    pub tableau: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_minus: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_plus: Option<f64>,
    /// Step size
    #[arg(long)]
    pub h: Option<f64>,
    /// Number of steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Final time (alternative to --steps)
    #[arg(long = "T", id = "T")]
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    /// Fixed-point tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// Fixed-point iteration cap
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// as-printed or alpha-corrected
    #[arg(long)]
    pub variant: Option<String>,
    /// How the layer runs for negative times: direct or adjoint
    #[arg(long)]
    pub backward: Option<String>,
    /// Comma-separated step sizes for the order study
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub h_list: Option<Vec<f64>>,
    /// Finite-difference step for the symplecticity check
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Output file (standard output when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with default values for every other key
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl Settings {
    /// Values from `self`, falling back to `file` key by key.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            problem: self.problem.or(file.problem),
            tableau: self.tableau.or(file.tableau),
            alpha_minus: self.alpha_minus.or(file.alpha_minus),
            alpha_plus: self.alpha_plus.or(file.alpha_plus),
            h: self.h.or(file.h),
            steps: self.steps.or(file.steps),
            t_final: self.t_final.or(file.t_final),
            tol: self.tol.or(file.tol),
            max_iter: self.max_iter.or(file.max_iter),
            variant: self.variant.or(file.variant),
            backward: self.backward.or(file.backward),
            h_list: self.h_list.or(file.h_list),
            fd_step: self.fd_step.or(file.fd_step),
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

pub fn read_file(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::ConfigFile {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: NamedProblem,
    pub step: StepConfig,
    pub n_steps: usize,
    /// Final time of the order study.
    pub study_time: f64,
    pub h_list: Vec<f64>,
    pub fd_step: f64,
    pub out: Option<PathBuf>,
}

fn invalid(key: &'static str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key,
        message: message.into(),
    }
}

/// The message of a library configuration error, without its prefix.
fn reason(e: rk_variational::Error) -> String {
    match e {
        rk_variational::Error::InvalidConfig(message) => message,
        other => other.to_string(),
    }
}

fn positive(key: &'static str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format!("must be a positive number, got {x}")))
    }
}

/// Number of steps of size `h` that reach `t`, if `t` is a whole multiple of `h`.
pub fn steps_to(key: &'static str, t: f64, h: f64) -> Result<usize, CliError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(key, format!("must be a finite non-negative time, got {t}")));
    }
    let n = (t / h).round();
    if (n * h - t).abs() > 1e-9 * t.max(h) {
        return Err(invalid(key, format!("{t} is not a whole number of steps of size {h}")));
    }
    Ok(n as usize)
}

impl RunConfig {
    /// Load the file named by `flags.config` (if any), apply the flags on
    /// top, and validate everything.
    pub fn load(flags: Settings) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => read_file(path)?,
            None => Settings::default(),
        };
        Self::resolve(flags.over(file))
    }

    pub fn resolve(s: Settings) -> Result<Self, CliError> {
        let problem = problems::by_name(s.problem.as_deref().unwrap_or(DEFAULT_PROBLEM))
            .map_err(|e| invalid("problem", reason(e)))?;
        let tableau = ButcherTableau::by_name(s.tableau.as_deref().unwrap_or(DEFAULT_TABLEAU))
            .map_err(|e| invalid("tableau", reason(e)))?;
        let default_bias = Bias::default();
        let bias = Bias::new(
            s.alpha_minus.unwrap_or(default_bias.alpha_minus()),
            s.alpha_plus.unwrap_or(default_bias.alpha_plus()),
        )
        .map_err(|e| invalid("alpha_minus/alpha_plus", reason(e)))?;
        let h = positive("h", s.h.unwrap_or(DEFAULT_H))?;
        let variant = match &s.variant {
            Some(v) => v.parse::<ApproximateVariant>().map_err(|e| invalid("variant", reason(e)))?,
            None => ApproximateVariant::default(),
        };
        let backward = match s.backward.as_deref() {
            None | Some("direct") => BackwardMode::Direct,
            Some("adjoint") => BackwardMode::Adjoint,
            Some(other) => {
                return Err(invalid(
                    "backward",
                    format!("unknown mode {other:?} (expected direct or adjoint)"),
                ))
            }
        };

        let mut step = StepConfig::new(h)
            .with_bias(bias)
            .with_layer(StandardLayer::new(tableau).with_backward(backward))
            .with_variant(variant);
        if let Some(tol) = s.tol {
            step.tol_fixed_point = positive("tol", tol)?;
        }
        if let Some(max_iter) = s.max_iter {
            if max_iter == 0 {
                return Err(invalid("max_iter", "must be at least 1"));
            }
            step.max_iter = max_iter;
        }

        let (n_steps, study_time) = match (s.steps, s.t_final) {
            (Some(_), Some(_)) => return Err(invalid("T", "give either steps or T, not both")),
            (Some(n), None) => (n, n as f64 * h),
            (None, Some(t)) => (steps_to("T", t, h)?, t),
            (None, None) => (DEFAULT_STEPS, DEFAULT_STUDY_TIME),
        };

        let h_list = s.h_list.unwrap_or_else(|| DEFAULT_H_LIST.to_vec());
        if h_list.len() < 2 {
            return Err(invalid("h_list", "needs at least two step sizes"));
        }
        for &x in &h_list {
            positive("h_list", x)?;
        }
        let fd_step = positive("fd_step", s.fd_step.unwrap_or(DEFAULT_FD_STEP))?;

        Ok(Self {
            problem,
            step,
            n_steps,
            study_time,
            h_list,
            fd_step,
            out: s.out,
        })
    }
}
