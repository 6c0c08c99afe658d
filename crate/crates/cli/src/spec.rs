//! Command-line flags, the optional JSON config file, and their merge.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(
    name = "lazymc",
    version,
    about = "Lazy Metropolis integration on the unit ball with explicit error bounds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Plan,
    Integrate,
    Verify,
    Sweep,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the step radius, conductance bounds, burn-in, error bound and cost.
    Plan(Flags),
    /// Run the lazy Metropolis ball walk and report the estimate (and error over replications).
    Integrate(Flags),
    /// Run the exact discrete oracle suite.
    Verify(Flags),
    /// Tabulate plans over a grid of dimensions and Lipschitz constants.
    Sweep(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Plan(f) => (CommandKind::Plan, f),
            Command::Integrate(f) => (CommandKind::Integrate, f),
            Command::Verify(f) => (CommandKind::Verify, f),
            Command::Sweep(f) => (CommandKind::Sweep, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Accepts plain integers and integral scientific notation (`1e6`).
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(64) => Ok(v as u64),
        _ => Err(format!("'{s}' is not a non-negative integer")),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Dimension d of the unit ball.
    #[arg(short = 'd', long = "dim")]
    pub dim: Option<usize>,
    /// Lipschitz constant alpha of log rho.
    #[arg(short = 'a', long)]
    pub alpha: Option<f64>,
    /// Target root-mean-square error.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Number of averaged states.
    #[arg(short = 'n', value_parser = parse_count)]
    pub n: Option<u64>,
    /// Burn-in steps (default: the certified ball-walk burn-in).
    #[arg(long, value_parser = parse_count)]
    pub n0: Option<u64>,
    /// Density: uniform | explin:a1,...,ad | gauss:c.
    #[arg(long)]
    pub rho: Option<String>,
    /// Integrand: one | coord:k | coord2:k | halfspace:k,t (k is 1-based).
    #[arg(long = "f")]
    pub f: Option<String>,
    /// Independent replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step radius override; disables the certified bound.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output file (default: stdout). CSV output to a file appends.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// JSON file with any of these settings; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated dimensions for sweep.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Comma-separated alphas for sweep.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Bound on sup |f| used by plan and sweep.
    #[arg(long)]
    pub f_sup: Option<f64>,
    /// Add a non-lazy chain to the PSD check (it must be reported).
    #[arg(long)]
    pub inject_non_lazy: bool,
}

/// The config file: the same settings as the flags, by long name.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct ConfigFile {
    #[serde(alias = "d")]
    pub dim: Option<usize>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub n: Option<u64>,
    pub n0: Option<u64>,
    pub rho: Option<String>,
    pub f: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub jobs: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    #[serde(alias = "f-sup")]
    pub f_sup: Option<f64>,
    #[serde(alias = "inject-non-lazy")]
    pub inject_non_lazy: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub dim: Option<usize>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub n: Option<u64>,
    pub n0: Option<u64>,
    pub rho: Option<String>,
    pub f: Option<String>,
    pub reps: usize,
    pub seed: u64,
    pub delta: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub jobs: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
    pub f_sup: f64,
    pub inject_non_lazy: bool,
}

impl RunSpec {
    pub fn resolve(command: CommandKind, flags: Flags) -> anyhow::Result<Self> {
        let cfg = match &flags.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let default_format = match command {
            CommandKind::Sweep => Format::Csv,
            _ => Format::Json,
        };
        let spec = Self {
            command,
            dim: flags.dim.or(cfg.dim),
            alpha: flags.alpha.or(cfg.alpha),
            eps: flags.eps.or(cfg.eps),
            n: flags.n.or(cfg.n),
            n0: flags.n0.or(cfg.n0),
            rho: flags.rho.or(cfg.rho),
            f: flags.f.or(cfg.f),
            reps: flags.reps.or(cfg.reps).unwrap_or(1),
            seed: flags.seed.or(cfg.seed).unwrap_or(0),
            delta: flags.delta.or(cfg.delta),
            output: flags.output.or(cfg.output),
            format: flags.format.or(cfg.format).unwrap_or(default_format),
            jobs: flags.jobs.or(cfg.jobs),
            dims: flags.dims.or(cfg.dims),
            alphas: flags.alphas.or(cfg.alphas),
            f_sup: flags.f_sup.or(cfg.f_sup).unwrap_or(1.0),
            inject_non_lazy: flags.inject_non_lazy || cfg.inject_non_lazy.unwrap_or(false),
        };
        if spec.reps == 0 {
            return Err(usage("--reps must be at least 1"));
        }
        if spec.jobs == Some(0) {
            return Err(usage("--jobs must be at least 1"));
        }
        if !(spec.f_sup > 0.0 && spec.f_sup.is_finite()) {
            return Err(usage("--f-sup must be positive and finite"));
        }
        Ok(spec)
    }

    pub fn require_dim(&self) -> anyhow::Result<usize> {
        match self.dim {
            Some(0) => Err(usage("--dim must be at least 1")),
            Some(d) => Ok(d),
            None => Err(usage("missing --dim")),
        }
    }

    pub fn require_alpha(&self) -> anyhow::Result<f64> {
        match self.alpha {
            Some(a) if a >= 0.0 && a.is_finite() => Ok(a),
            Some(a) => Err(usage(format!("--alpha must be finite and >= 0, got {a}"))),
            None => Err(usage("missing --alpha")),
        }
    }

    pub fn require_eps(&self) -> anyhow::Result<Option<f64>> {
        match self.eps {
            Some(e) if !(e > 0.0 && e.is_finite()) => {
                Err(usage(format!("--eps must be positive, got {e}")))
            }
            e => Ok(e),
        }
    }
}

/// Invalid or missing arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// A verification suite found violations; exits with status 1.
#[derive(Debug)]
pub struct VerificationFailed(pub u64);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s) found", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1000000"), Ok(1_000_000));
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"dim": 4, "alpha": 1.5, "seed": 9, "format": "csv"}"#,
        )
        .unwrap();
        let flags = Flags {
            dim: Some(2),
            config: Some(path),
            ..Flags::default()
        };
        let spec = RunSpec::resolve(CommandKind::Plan, flags).unwrap();
        assert_eq!(spec.dim, Some(2));
        assert_eq!(spec.alpha, Some(1.5));
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.format, Format::Csv);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"dimension": 4}"#).unwrap();
        let err = ConfigFile::load(&path).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
