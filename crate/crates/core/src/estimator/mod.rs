//! The averaging estimator `S_{n,n0}(f) = (1/n) sum_{j=1}^n f(X_{n0+j})` and
//! its mean-square error.
//!
//! The chain starts at `X_0`, drawn uniformly on the ball; `n0` lazy
//! Metropolis steps are discarded and the next `n` states are averaged, so a
//! run takes `n + n0` transitions. [`exact`] computes the same error exactly
//! for finite-state chains.

pub mod exact;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds;
use crate::density::{DensityOracle, Integrand};
use crate::error::{out_of_range, Error, Result};
use crate::metropolis::{delta_choice, lazy_metro_step, replication_seed, ChainState, WalkConfig};

pub use exact::{exact_mse_discrete, mse_decomposition, ExactMseTable, MseDecomposition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub n: u64,
    pub n0: u64,
    /// Step radius; `None` uses [`delta_choice`].
    pub delta: Option<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(n: u64, n0: u64, seed: u64) -> Self {
        Self {
            n,
            n0,
            delta: None,
            seed,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    fn walk(&self, rho: &DensityOracle, seed: u64) -> Result<WalkConfig> {
        match self.delta {
            Some(delta) => WalkConfig::new(rho.dimension(), delta, seed),
            None => Ok(WalkConfig::for_density(rho, seed)),
        }
    }

    /// Whether the step radius is the one the conductance bound certifies.
    fn uses_certified_delta(&self, rho: &DensityOracle) -> bool {
        self.delta
            .is_none_or(|d| d == delta_choice(rho.dimension(), rho.alpha()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRun {
    pub estimate: f64,
    pub n: u64,
    pub n0: u64,
    pub seed: u64,
    pub steps_total: u64,
    pub rho_evaluations: u64,
    pub dimension: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub empirical_rmse: f64,
    /// Delta-method standard error of `empirical_rmse`.
    pub rmse_std_error: f64,
    pub mean_estimate: f64,
    pub estimate_std_error: f64,
    pub reference_value: f64,
    pub replications: usize,
    /// General-start error bound with the certified lazy conductance and
    /// `M = exp(2 alpha)`; `None` when the step radius was overridden.
    pub theoretical_bound: Option<f64>,
    pub phi_lower: f64,
    pub density_bound: f64,
    /// `theoretical_bound - empirical_rmse`.
    pub margin: Option<f64>,
    /// `margin >= -3 rmse_std_error`.
    pub within_bound: Option<bool>,
}

/// Runs one chain: uniform start, `n0` discarded lazy Metropolis steps, then
/// the mean of `f` over the next `n` states. Deterministic in `cfg.seed`.
pub fn run_chain(rho: &DensityOracle, f: &Integrand, cfg: &RunConfig) -> Result<ChainRun> {
    if cfg.n == 0 {
        return Err(out_of_range("n", 0.0, "n >= 1"));
    }
    if let Some(k) = f.coordinate() {
        if k >= rho.dimension() {
            return Err(Error::DimensionMismatch {
                expected: rho.dimension(),
                found: k + 1,
            });
        }
    }
    let walk = cfg.walk(rho, cfg.seed)?;
    let mut rng = walk.rng();
    let mut state = ChainState::uniform_start(rho, &mut rng)?;
    for _ in 0..cfg.n0 {
        lazy_metro_step(&mut state, rho, &walk, &mut rng)?;
    }
    let mut sum = 0.0;
    for _ in 0..cfg.n {
        lazy_metro_step(&mut state, rho, &walk, &mut rng)?;
        let v = f.eval(state.position());
        if !v.is_finite() {
            return Err(Error::Integrand {
                step: state.step_count(),
            });
        }
        sum += v;
    }
    Ok(ChainRun {
        estimate: sum / cfg.n as f64,
        n: cfg.n,
        n0: cfg.n0,
        seed: cfg.seed,
        steps_total: state.step_count(),
        rho_evaluations: state.density_evaluations(),
        dimension: rho.dimension(),
        delta: walk.delta(),
    })
}

/// Runs `replications` independent chains (seeds `seed + r`) in parallel and
/// compares their root-mean-square deviation from `reference` to the error
/// bound. Runs are returned in replication order.
pub fn empirical_mse(
    rho: &DensityOracle,
    f: &Integrand,
    cfg: &RunConfig,
    replications: usize,
    reference: f64,
) -> Result<(MseReport, Vec<ChainRun>)> {
    if replications < 2 {
        return Err(Error::TooFewReplications(replications));
    }
    let runs = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = RunConfig {
                seed: replication_seed(cfg.seed, r),
                ..*cfg
            };
            run_chain(rho, f, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let report = summarize(rho, f, cfg, &runs, reference)?;
    Ok((report, runs))
}

fn summarize(
    rho: &DensityOracle,
    f: &Integrand,
    cfg: &RunConfig,
    runs: &[ChainRun],
    reference: f64,
) -> Result<MseReport> {
    let r = runs.len() as f64;
    let sq: Vec<f64> = runs
        .iter()
        .map(|c| (c.estimate - reference).powi(2))
        .collect();
    let mse = sq.iter().sum::<f64>() / r;
    let rmse = mse.sqrt();
    let sq_var = sq.iter().map(|e| (e - mse).powi(2)).sum::<f64>() / (r - 1.0);
    let mse_se = (sq_var / r).sqrt();
    let rmse_std_error = if rmse > 0.0 {
        mse_se / (2.0 * rmse)
    } else {
        0.0
    };

    let mean_estimate = runs.iter().map(|c| c.estimate).sum::<f64>() / r;
    let est_var = runs
        .iter()
        .map(|c| (c.estimate - mean_estimate).powi(2))
        .sum::<f64>()
        / (r - 1.0);

    let phi_lower = bounds::lazification_conductance(bounds::ball_walk_conductance_lower(
        rho.dimension(),
        rho.alpha(),
    ))?;
    let density_bound = (2.0 * rho.alpha()).exp();
    let theoretical_bound = if cfg.uses_certified_delta(rho) {
        Some(
            bounds::error_bound(phi_lower, cfg.n, cfg.n0, density_bound, f.sup_norm())?.error_bound,
        )
    } else {
        None
    };
    let margin = theoretical_bound.map(|b| b - rmse);
    Ok(MseReport {
        empirical_rmse: rmse,
        rmse_std_error,
        mean_estimate,
        estimate_std_error: (est_var / r).sqrt(),
        reference_value: reference,
        replications: runs.len(),
        theoretical_bound,
        phi_lower,
        density_bound,
        margin,
        within_bound: margin.map(|m| m >= -3.0 * rmse_std_error),
    })
}
