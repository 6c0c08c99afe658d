//! Lazy Metropolis ball walk on the closed unit ball `B^d`.
//!
//! One lazy step from `x`:
//!
//! 1. with probability 1/2 (`rand() < 1/2`) stay at `x`;
//! 2. otherwise draw `y` uniformly from `B(x, delta)`; if `||y|| > 1` stay;
//! 3. otherwise accept `y` iff `rho(y)/rho(x) >= rand()`, else stay.
//!
//! Randomness is consumed in exactly that order: the laziness coin, then the
//! proposal (`d` normals and one uniform), then the acceptance uniform. The
//! acceptance uniform is drawn even when `rho(y) >= rho(x)` so the stream
//! position depends only on the branch taken, never on density values.
//!
//! Streams are [`ChaCha8Rng`] seeded with `seed_from_u64`; replication `r` of
//! a run with seed `s` uses `s.wrapping_add(r)` (see [`replication_seed`]).

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chain::DiscreteKernel;
use crate::density::DensityOracle;
use crate::error::{out_of_range, Error, Result};

/// The single named stream of one chain.
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of replication `r`: `seed + r` with wrap-around.
pub fn replication_seed(seed: u64, replication: u64) -> u64 {
    seed.wrapping_add(replication)
}

/// `min(1/sqrt(d+1), 1/alpha)` with `1/0 = inf`.
pub fn delta_choice(d: usize, alpha: f64) -> f64 {
    let local = 1.0 / ((d + 1) as f64).sqrt();
    if alpha > 0.0 {
        local.min(1.0 / alpha)
    } else {
        local
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    dimension: usize,
    delta: f64,
    seed: u64,
}

impl WalkConfig {
    pub fn new(dimension: usize, delta: f64, seed: u64) -> Result<Self> {
        if dimension == 0 {
            return Err(out_of_range("dimension", 0.0, "d >= 1"));
        }
        if !(delta > 0.0 && delta <= 2.0) {
            return Err(out_of_range("delta", delta, "0 < delta <= 2"));
        }
        Ok(Self {
            dimension,
            delta,
            seed,
        })
    }

    /// Step size from [`delta_choice`] for the oracle's dimension and alpha.
    pub fn for_density(rho: &DensityOracle, seed: u64) -> Self {
        Self {
            dimension: rho.dimension(),
            delta: delta_choice(rho.dimension(), rho.alpha()),
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self) -> ChaCha8Rng {
        chain_rng(self.seed)
    }
}

/// Current point of a chain plus the memoized `log rho` there.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    position: Vec<f64>,
    log_density: f64,
    step_count: u64,
    density_evaluations: u64,
    scratch: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// The laziness coin kept the chain in place.
    Lazy,
    /// The proposal left the ball.
    OutsideBall,
    Rejected,
    Accepted,
}

impl StepOutcome {
    pub fn moved(self) -> bool {
        self == Self::Accepted
    }
}

impl ChainState {
    /// Starts at `position`, evaluating `rho` there once.
    pub fn new(position: Vec<f64>, rho: &DensityOracle) -> Result<Self> {
        if position.len() != rho.dimension() {
            return Err(Error::DimensionMismatch {
                expected: rho.dimension(),
                found: position.len(),
            });
        }
        let norm_sq: f64 = position.iter().map(|v| v * v).sum();
        if norm_sq > 1.0 {
            return Err(out_of_range(
                "||x||",
                norm_sq.sqrt(),
                "start inside the unit ball",
            ));
        }
        let log_density = rho.checked_log_eval(&position, 0)?;
        let d = position.len();
        Ok(Self {
            position,
            log_density,
            step_count: 0,
            density_evaluations: 1,
            scratch: vec![0.0; d],
        })
    }

    /// Starts uniformly on the ball.
    pub fn uniform_start<R: Rng + ?Sized>(rho: &DensityOracle, rng: &mut R) -> Result<Self> {
        Self::new(uniform_ball_sample(rho.dimension(), rng), rho)
    }

    pub fn position(&self) -> &[f64] {
        &self.position
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn density_evaluations(&self) -> u64 {
        self.density_evaluations
    }
}

/// Uniform point in the closed unit ball: a normalized Gaussian direction
/// scaled by `U^{1/d}`.
pub fn uniform_ball_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; d];
    fill_uniform_ball(&mut out, rng);
    out
}

fn fill_uniform_ball<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    let d = out.len();
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm_sq += *v * *v;
        }
        if norm_sq > 0.0 {
            let u: f64 = rng.random();
            let scale = u.powf(1.0 / d as f64) / norm_sq.sqrt();
            out.iter_mut().for_each(|v| *v *= scale);
            return;
        }
    }
}

/// Writes `x + delta * u` with `u` uniform in the unit ball into `out`.
/// Returns whether the point lies in the closed unit ball.
fn propose_into<R: Rng + ?Sized>(x: &[f64], delta: f64, out: &mut [f64], rng: &mut R) -> bool {
    fill_uniform_ball(out, rng);
    let mut norm_sq = 0.0;
    for (o, xi) in out.iter_mut().zip(x) {
        *o = xi + delta * *o;
        norm_sq += *o * *o;
    }
    norm_sq <= 1.0
}

/// One draw from the ball-walk proposal `Q_delta(x, .)`: a uniform point of
/// `B(x, delta)` if it lies in the unit ball, otherwise `x` itself.
pub fn ball_walk_propose<R: Rng + ?Sized>(x: &[f64], cfg: &WalkConfig, rng: &mut R) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    if propose_into(x, cfg.delta, &mut y, rng) {
        y
    } else {
        x.to_vec()
    }
}

/// One Metropolis step with the ball-walk proposal. `rho` is evaluated once,
/// at the proposal, and only when the proposal lies in the ball.
pub fn metro_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    rho: &DensityOracle,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    state.step_count += 1;
    let ChainState {
        position, scratch, ..
    } = state;
    if !propose_into(position, cfg.delta, scratch, rng) {
        return Ok(StepOutcome::OutsideBall);
    }
    let log_y = rho.checked_log_eval(&state.scratch, state.step_count)?;
    state.density_evaluations += 1;
    let u: f64 = rng.random();
    // gamma >= u  <=>  log gamma >= log u; log 0 = -inf accepts.
    if log_y - state.log_density >= u.ln() {
        std::mem::swap(&mut state.position, &mut state.scratch);
        state.log_density = log_y;
        Ok(StepOutcome::Accepted)
    } else {
        Ok(StepOutcome::Rejected)
    }
}

/// Lazy Metropolis step: holds with probability 1/2 before any proposal
/// randomness is drawn, otherwise delegates to [`metro_step`].
pub fn lazy_metro_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    rho: &DensityOracle,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let coin: f64 = rng.random();
    if coin < 0.5 {
        state.step_count += 1;
        return Ok(StepOutcome::Lazy);
    }
    metro_step(state, rho, cfg, rng)
}

/// Discrete Metropolis kernel `K_rho` for proposal `Q`:
/// `K[i][j] = min(1, rho_j / rho_i) Q[i][j]` off the diagonal, with the
/// rejected mass on the diagonal.
pub fn build_metropolis_kernel(proposal: &DiscreteKernel, rho: &[f64]) -> Result<DiscreteKernel> {
    let s = proposal.size();
    if rho.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            found: rho.len(),
        });
    }
    if let Some(&bad) = rho.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(out_of_range("rho_i", bad, "rho_i > 0"));
    }
    let mut m = DMatrix::zeros(s, s);
    for i in 0..s {
        let mut moved = 0.0;
        for j in (0..s).filter(|&j| j != i) {
            let theta = (rho[j] / rho[i]).min(1.0);
            m[(i, j)] = theta * proposal.get(i, j);
            moved += m[(i, j)];
        }
        m[(i, i)] = (1.0 - moved).max(0.0);
    }
    DiscreteKernel::new(m)
}
