//! Closed-form conductance, mixing, error, burn-in and cost bounds.
//!
//! Notation used throughout: `phi` is the conductance of a lazy reversible
//! chain, `M = ||d nu / d pi||_inf >= 1` bounds the density of the start
//! distribution, `n` is the number of averaged states and `n0` the burn-in.
//! All bounds are root-mean-square errors unless a name says otherwise.

use serde::Serialize;

use crate::chain::{DiscreteKernel, ProbabilityVector};
use crate::error::{out_of_range, Error, Result};
use crate::metropolis::delta_choice;
use crate::IDENTITY_TOL;

/// Largest state space for which [`conductance_exact`] enumerates subsets.
pub const MAX_ENUMERATION_STATES: usize = 20;

/// Sets with `pi(A) <= 1/2 + HALF_MASS_TOL` count as "at most half".
const HALF_MASS_TOL: f64 = 1e-12;

/// Leading constant of the ball-walk conductance lower bound.
pub const BALL_WALK_CONDUCTANCE_CONSTANT: f64 = 0.0025;
/// Burn-in constant of the ball-walk plan.
pub const BALL_PLAN_BURN_IN_CONSTANT: f64 = 1_280_000.0;
/// Error constant of the ball-walk plan.
pub const BALL_PLAN_ERROR_CONSTANT: f64 = 8000.0;
/// Sampling-cost constant of the ball-walk plan (`8000^2`).
pub const BALL_PLAN_COST_CONSTANT: f64 = 64_000_000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConductanceValue {
    pub phi: f64,
    /// Set attaining the minimum; `None` for a single-state chain.
    pub witness_set: Option<Vec<usize>>,
    /// Set when no set with `0 < pi(A) <= 1/2` exists and `phi = 1` by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub phi: f64,
    pub density_bound: f64,
    pub n0: u64,
    pub n: u64,
    /// `24 sqrt(M) exp(-n0 phi^2 / 2)`.
    pub start_penalty: f64,
    pub error_bound: f64,
    pub cost_total: u64,
}

/// Steps needed for a target error: burn-in plus averaged states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cost {
    pub burn_in: u64,
    pub samples: u64,
}

impl Cost {
    pub fn total(&self) -> u64 {
        self.burn_in + self.samples
    }
}

/// Everything the ball-walk integrator needs for a given `(d, alpha, n)`.
///
/// `raw_error_bound` uses the published constants (8000 and 1 280 000);
/// `composed` evaluates the general error bound with the certified lazy
/// conductance and `M = exp(2 alpha)` at the same burn-in. Both are per unit
/// `||f||_inf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallPlan {
    pub dimension: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Conductance lower bound of the Metropolis ball walk before lazification.
    pub phi_metropolis: f64,
    /// Certified conductance of the lazy chain actually run.
    pub phi_lazy: f64,
    pub density_bound: f64,
    pub n0: u64,
    pub n: u64,
    pub raw_error_bound: f64,
    pub composed: BoundReport,
    pub cost_total: u64,
}

/// Ceiling that snaps values within `1e-9` (relative) of an integer onto it,
/// so `log(e^4) / 0.25` is 16 and not 17.
pub fn ceil_count(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(out_of_range("phi", phi, "0 <= phi <= 1"));
    }
    Ok(())
}

fn check_positive_phi(phi: f64) -> Result<()> {
    check_phi(phi)?;
    if phi == 0.0 {
        return Err(Error::ZeroConductance);
    }
    Ok(())
}

fn check_density_bound(m: f64) -> Result<f64> {
    // M = max nu_i / pi_i may land a rounding error below 1.
    if !m.is_finite() || m < 1.0 - 1e-12 {
        return Err(out_of_range("density_bound", m, "M >= 1"));
    }
    Ok(m.max(1.0))
}

/// Exact conductance by enumerating every subset of states.
///
/// `phi = min { Q(A, A^c) / pi(A) : 0 < pi(A) <= 1/2 }` with
/// `Q(A, A^c) = sum_{i in A, j not in A} pi_i K[i][j]`. Among sets attaining the
/// minimum the lexicographically smallest index list is reported.
pub fn conductance_exact(
    kernel: &DiscreteKernel,
    pi: &ProbabilityVector,
) -> Result<ConductanceValue> {
    let s = kernel.size();
    if pi.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: pi.len(),
        });
    }
    if s > MAX_ENUMERATION_STATES {
        return Err(Error::TooManyStates {
            states: s,
            max: MAX_ENUMERATION_STATES,
        });
    }
    let residual = kernel.stationarity_residual(pi)?;
    if residual > IDENTITY_TOL {
        return Err(Error::NotStationary { residual });
    }

    let flow: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|j| pi[i] * kernel.get(i, j)).collect())
        .collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1u32 << s) {
        let mass: f64 = (0..s).filter(|i| mask >> i & 1 == 1).map(|i| pi[i]).sum();
        if mass <= 0.0 || mass > 0.5 + HALF_MASS_TOL {
            continue;
        }
        let mut leaving = 0.0;
        for i in (0..s).filter(|i| mask >> i & 1 == 1) {
            for j in (0..s).filter(|j| mask >> j & 1 == 0) {
                leaving += flow[i][j];
            }
        }
        let ratio = leaving / mass;
        let replace = match &best {
            None => true,
            Some((b, _)) if ratio < *b => true,
            Some((b, set)) if ratio == *b => {
                let members: Vec<usize> = (0..s).filter(|i| mask >> i & 1 == 1).collect();
                members < *set
            }
            _ => false,
        };
        if replace {
            best = Some((ratio, (0..s).filter(|i| mask >> i & 1 == 1).collect()));
        }
    }

    Ok(match best {
        Some((phi, set)) => ConductanceValue {
            phi: phi.clamp(0.0, 1.0),
            witness_set: Some(set),
            degenerate: false,
        },
        None => ConductanceValue {
            phi: 1.0,
            witness_set: None,
            degenerate: true,
        },
    })
}

/// Certified conductance of `K/2 + I/2` given the conductance of `K`.
pub fn lazification_conductance(phi: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok(phi / 2.0)
}

/// `sqrt(M) (1 - phi^2/2)^j`, the distance to stationarity after `j` steps.
pub fn mixing_bound(phi: f64, density_bound: f64, j: u64) -> Result<f64> {
    check_phi(phi)?;
    let m = check_density_bound(density_bound)?;
    Ok(m.sqrt() * contraction(phi).powf(j as f64))
}

/// `sqrt(M) exp(-j phi^2 / 2)`, which dominates [`mixing_bound`].
pub fn mixing_bound_relaxed(phi: f64, density_bound: f64, j: u64) -> Result<f64> {
    check_phi(phi)?;
    let m = check_density_bound(density_bound)?;
    Ok(m.sqrt() * (-(j as f64) * phi * phi / 2.0).exp())
}

/// `(1 - phi^2/2)^j ||g||_2^2`, the bound on `<P^j g, g>` for mean-zero `g`.
pub fn cheeger_bound(phi: f64, j: u64, g_norm_sq: f64) -> Result<f64> {
    check_phi(phi)?;
    if g_norm_sq < 0.0 || !g_norm_sq.is_finite() {
        return Err(out_of_range("g_norm_sq", g_norm_sq, "finite and >= 0"));
    }
    Ok(contraction(phi).powf(j as f64) * g_norm_sq)
}

fn contraction(phi: f64) -> f64 {
    1.0 - phi * phi / 2.0
}

/// Root-mean-square error bound `2 ||f||_2 / (phi sqrt(n))` for a chain started
/// at stationarity.
pub fn stationary_error_bound(phi: f64, n: u64, f_l2_norm: f64) -> Result<f64> {
    check_positive_phi(phi)?;
    check_n(n)?;
    Ok(2.0 * f_l2_norm / (phi * (n as f64).sqrt()))
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(out_of_range("n", 0.0, "n >= 1"));
    }
    Ok(())
}

/// `2 sqrt(1 + 24 sqrt(M) exp(-n0 phi^2/2)) / (phi sqrt(n)) ||f||_inf`.
pub fn error_bound(
    phi: f64,
    n: u64,
    n0: u64,
    density_bound: f64,
    f_sup_norm: f64,
) -> Result<BoundReport> {
    check_positive_phi(phi)?;
    check_n(n)?;
    let m = check_density_bound(density_bound)?;
    let start_penalty = 24.0 * m.sqrt() * (-(n0 as f64) * phi * phi / 2.0).exp();
    let error_bound = 2.0 * (1.0 + start_penalty).sqrt() / (phi * (n as f64).sqrt()) * f_sup_norm;
    Ok(BoundReport {
        phi,
        density_bound: m,
        n0,
        n,
        start_penalty,
        error_bound,
        cost_total: n + n0,
    })
}

/// `ceil(log(M) / phi^2)`. With this burn-in the error is at most
/// `10 ||f||_inf / (phi sqrt(n))`.
pub fn burn_in(density_bound: f64, phi: f64) -> Result<u64> {
    check_positive_phi(phi)?;
    let m = check_density_bound(density_bound)?;
    Ok(ceil_count(m.ln() / (phi * phi)))
}

/// `ceil(log(M) / phi^2) + ceil(100 ||f||_inf^2 / (phi^2 eps^2))`.
pub fn cost(density_bound: f64, phi: f64, f_sup_norm: f64, eps: f64) -> Result<Cost> {
    if !(eps > 0.0) {
        return Err(out_of_range("eps", eps, "eps > 0"));
    }
    let burn_in = burn_in(density_bound, phi)?;
    let samples = ceil_count(100.0 * f_sup_norm * f_sup_norm / (phi * phi * eps * eps));
    Ok(Cost { burn_in, samples })
}

/// `0.0025 / sqrt(d+1) * min(1/sqrt(d+1), 1/alpha)`, the conductance lower
/// bound of the (non-lazy) Metropolis ball walk on the unit ball for
/// densities in the class with log-Lipschitz constant `alpha`. `1/0 = inf`.
pub fn ball_walk_conductance_lower(d: usize, alpha: f64) -> f64 {
    assert!(d >= 1, "dimension must be at least 1");
    let root = ((d + 1) as f64).sqrt();
    BALL_WALK_CONDUCTANCE_CONSTANT / root * delta_choice(d, alpha)
}

fn ball_shape(d: usize, alpha: f64) -> f64 {
    let dp1 = (d + 1) as f64;
    dp1 * dp1.max(alpha * alpha)
}

/// `ceil(1 280 000 alpha (d+1) max(d+1, alpha^2))`.
pub fn ball_burn_in(d: usize, alpha: f64) -> u64 {
    ceil_count(BALL_PLAN_BURN_IN_CONSTANT * alpha * ball_shape(d, alpha))
}

/// `8000 sqrt(d+1) max(sqrt(d+1), alpha) / sqrt(n)` per unit `||f||_inf`.
pub fn ball_error_bound(d: usize, alpha: f64, n: u64) -> f64 {
    let root = ((d + 1) as f64).sqrt();
    BALL_PLAN_ERROR_CONSTANT * root * root.max(alpha) / (n as f64).sqrt()
}

/// Ball-walk cost for target error `eps` (per unit `||f||_inf`): the burn-in
/// plus `ceil(64 000 000 (d+1) max(d+1, alpha^2) / eps^2)` averaged states.
pub fn ball_cost(d: usize, alpha: f64, eps: f64) -> Result<Cost> {
    check_ball_args(d, alpha)?;
    if !(eps > 0.0) {
        return Err(out_of_range("eps", eps, "eps > 0"));
    }
    Ok(Cost {
        burn_in: ball_burn_in(d, alpha),
        samples: ceil_count(BALL_PLAN_COST_CONSTANT * ball_shape(d, alpha) / (eps * eps)),
    })
}

fn check_ball_args(d: usize, alpha: f64) -> Result<()> {
    if d == 0 {
        return Err(out_of_range("d", 0.0, "d >= 1"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(out_of_range("alpha", alpha, "finite and >= 0"));
    }
    Ok(())
}

pub fn ball_plan(d: usize, alpha: f64, n: u64) -> Result<BallPlan> {
    check_ball_args(d, alpha)?;
    check_n(n)?;
    let phi_metropolis = ball_walk_conductance_lower(d, alpha);
    let phi_lazy = lazification_conductance(phi_metropolis)?;
    let density_bound = (2.0 * alpha).exp();
    let n0 = ball_burn_in(d, alpha);
    let composed = error_bound(phi_lazy, n, n0, density_bound, 1.0)?;
    Ok(BallPlan {
        dimension: d,
        alpha,
        delta: delta_choice(d, alpha),
        phi_metropolis,
        phi_lazy,
        density_bound,
        n0,
        n,
        raw_error_bound: ball_error_bound(d, alpha, n),
        composed,
        cost_total: n + n0,
    })
}
