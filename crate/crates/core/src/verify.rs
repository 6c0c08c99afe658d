//! Exact-oracle verification suite over random finite-state chains.
//!
//! Every check draws its own instances from a stream derived from the suite
//! seed, evaluates both sides of an identity or inequality exactly (matrix
//! powers, subset enumeration, exact mean-square errors) and records the
//! worst slack. A violation keeps the offending chain as a
//! [`KernelDocument`] so it can be replayed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds;
use crate::chain::{DiscreteKernel, KernelDocument, Norm, ProbabilityVector, StateFunction};
use crate::error::Result;
use crate::estimator::{mse_decomposition, ExactMseTable};
use crate::metropolis::build_metropolis_kernel;
use crate::random::{self, ReversiblePair};
use crate::IDENTITY_TOL;

/// Tolerance for the discrete Metropolis identities, which involve only a
/// handful of floating-point operations per entry.
pub const METROPOLIS_TOL: f64 = 1e-12;

/// Reproducers kept per check.
const MAX_REPRODUCERS: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub max_states: usize,
    /// Reversible chains for the identity, contraction and PSD checks.
    pub chains: usize,
    /// Lazy chains for the Cheeger and mixing checks.
    pub spectral_chains: usize,
    pub max_j: u64,
    pub functions_per_chain: usize,
    /// Lazy chains for the stationary-start error check.
    pub stationary_chains: usize,
    pub stationary_max_n: usize,
    /// (chain, nu, f) instances for the general-start error and burn-in checks.
    pub general_instances: usize,
    pub general_max_n: usize,
    pub general_max_n0: usize,
    pub decomposition_instances: usize,
    pub metropolis_instances: usize,
    /// Adds the (non-lazy) flip chain to the PSD check, which must then fail.
    pub inject_non_lazy: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_states: 8,
            chains: 200,
            spectral_chains: 200,
            max_j: 50,
            functions_per_chain: 20,
            stationary_chains: 60,
            stationary_max_n: 200,
            general_instances: 120,
            general_max_n: 100,
            general_max_n0: 50,
            decomposition_instances: 60,
            metropolis_instances: 200,
            inject_non_lazy: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub instance: KernelDocument,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub instances: usize,
    pub comparisons: u64,
    pub violations: u64,
    /// Largest `lhs - rhs` seen (for identities, the largest `|lhs - rhs|`).
    pub worst_slack: f64,
    pub reproducers: Vec<Violation>,
}

impl CheckReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            instances: 0,
            comparisons: 0,
            violations: 0,
            worst_slack: f64::NEG_INFINITY,
            reproducers: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Records `lhs <= rhs + tol`.
    fn le(
        &mut self,
        lhs: f64,
        rhs: f64,
        tol: f64,
        instance: impl FnOnce() -> (KernelDocument, String),
    ) {
        self.comparisons += 1;
        let slack = lhs - rhs;
        self.worst_slack = self.worst_slack.max(slack);
        if !(slack <= tol) {
            self.fail(instance);
        }
    }

    /// Records `|lhs - rhs| <= tol`.
    fn eq(
        &mut self,
        lhs: f64,
        rhs: f64,
        tol: f64,
        instance: impl FnOnce() -> (KernelDocument, String),
    ) {
        self.comparisons += 1;
        let gap = (lhs - rhs).abs();
        self.worst_slack = self.worst_slack.max(gap);
        if !(gap <= tol) {
            self.fail(instance);
        }
    }

    fn fail(&mut self, instance: impl FnOnce() -> (KernelDocument, String)) {
        self.violations += 1;
        if self.reproducers.len() < MAX_REPRODUCERS {
            let (instance, detail) = instance();
            self.reproducers.push(Violation { instance, detail });
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }
}

/// Stream for check number `id`, independent of the other checks.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    random::rng_from_seed(seed ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn doc(pair: &ReversiblePair) -> KernelDocument {
    KernelDocument::new(&pair.kernel, Some(&pair.pi))
}

fn lazy_pair(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> ReversiblePair {
    random::reversible_pair(cfg.max_states, rng).lazify()
}

fn conductance(pair: &ReversiblePair) -> Result<f64> {
    Ok(bounds::conductance_exact(&pair.kernel, &pair.pi)?.phi)
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let checks = vec![
        check_swap_identity(cfg)?,
        check_stationary_average(cfg)?,
        check_lp_contraction(cfg)?,
        check_operator_psd(cfg)?,
        check_cheeger(cfg)?,
        check_mixing(cfg)?,
        check_stationary_error(cfg)?,
        check_general_error(cfg)?,
        check_burn_in(cfg)?,
        check_decomposition(cfg)?,
        check_metropolis_reversibility(cfg)?,
        check_lazification_order(cfg)?,
        check_conductance_halving(cfg)?,
    ];
    Ok(SuiteReport {
        seed: cfg.seed,
        checks,
    })
}

/// `sum pi_i K^n_ij F(i,j) = sum pi_i K^n_ij F(j,i)` for reversible pairs.
pub fn check_swap_identity(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("swap_identity");
    let mut rng = stream(cfg.seed, 1);
    for _ in 0..cfg.chains {
        let pair = random::reversible_pair(cfg.max_states, &mut rng);
        let s = pair.kernel.size();
        let f = DMatrix::from_fn(s, s, |_, _| 2.0 * rng.random::<f64>() - 1.0);
        rep.instances += 1;
        for n in [1, 2, 3, 7] {
            let kn = pair.kernel.n_step(n)?;
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for i in 0..s {
                for j in 0..s {
                    let w = pair.pi[i] * kn.get(i, j);
                    lhs += w * f[(i, j)];
                    rhs += w * f[(j, i)];
                }
            }
            rep.eq(lhs, rhs, IDENTITY_TOL, || {
                (doc(&pair), format!("n = {n}: {lhs} vs {rhs}"))
            });
        }
    }
    Ok(rep)
}

/// Random doubly stochastic, generally non-reversible kernel: a mixture of
/// three random permutation matrices. Uniform pi is stationary for it.
fn doubly_stochastic(size: usize, rng: &mut ChaCha8Rng) -> Result<DiscreteKernel> {
    let mut m = DMatrix::zeros(size, size);
    let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = w.iter().sum();
    for wk in &w {
        let mut perm: Vec<usize> = (0..size).collect();
        perm.shuffle(rng);
        for (i, &j) in perm.iter().enumerate() {
            m[(i, j)] += wk / total;
        }
    }
    DiscreteKernel::new(m)
}

/// `S(f) = sum_{i,j} pi_i K_ij f(j)` for stationary pi, reversible or not.
pub fn check_stationary_average(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("stationary_average");
    let mut rng = stream(cfg.seed, 2);
    for _ in 0..cfg.chains {
        let pair = random::reversible_pair(cfg.max_states, &mut rng);
        let s = pair.kernel.size();
        let ds = ReversiblePair {
            kernel: doubly_stochastic(s, &mut rng)?,
            pi: ProbabilityVector::uniform(s),
        };
        for inst in [&pair, &ds] {
            rep.instances += 1;
            for _ in 0..3 {
                let f = random::state_function(s, 5.0, &mut rng);
                let lhs = f.mean(&inst.pi);
                let rhs = inst.kernel.apply_operator(&f)?.mean(&inst.pi);
                rep.eq(lhs, rhs, IDENTITY_TOL, || {
                    (doc(inst), format!("{lhs} vs {rhs}"))
                });
            }
        }
    }
    Ok(rep)
}

/// `||P^n f||_p <= ||f||_p` in `L_p(pi)` for `p = 1, 2, inf`.
pub fn check_lp_contraction(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("lp_contraction");
    let mut rng = stream(cfg.seed, 3);
    for _ in 0..cfg.chains {
        let pair = random::reversible_pair(cfg.max_states, &mut rng);
        let s = pair.kernel.size();
        rep.instances += 1;
        for _ in 0..3 {
            let f = random::state_function(s, 3.0, &mut rng);
            let mut pf = f.clone();
            for n in 1..=10 {
                pf = pair.kernel.apply_operator(&pf)?;
                for norm in [Norm::L1, Norm::L2, Norm::Sup] {
                    let lhs = pf.norm(&pair.pi, norm);
                    let rhs = f.norm(&pair.pi, norm);
                    rep.le(lhs, rhs, IDENTITY_TOL, || {
                        (doc(&pair), format!("{norm:?}, n = {n}: {lhs} > {rhs}"))
                    });
                }
            }
        }
    }
    Ok(rep)
}

/// The Markov operator of a lazy reversible chain is positive semidefinite.
pub fn check_operator_psd(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("operator_psd");
    let mut rng = stream(cfg.seed, 4);
    let mut pairs: Vec<ReversiblePair> =
        (0..cfg.chains).map(|_| lazy_pair(cfg, &mut rng)).collect();
    if cfg.inject_non_lazy {
        pairs.push(ReversiblePair {
            kernel: DiscreteKernel::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?,
            pi: ProbabilityVector::uniform(2),
        });
    }
    for pair in &pairs {
        rep.instances += 1;
        let min_eig = pair.kernel.spectrum(&pair.pi)?[0];
        rep.le(-min_eig, 0.0, IDENTITY_TOL, || {
            (doc(pair), format!("smallest eigenvalue {min_eig}"))
        });
    }
    Ok(rep)
}

/// `<P^j g, g> <= (1 - phi^2/2)^j <g, g>` for mean-zero `g`, `j <= max_j`.
pub fn check_cheeger(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("cheeger");
    let mut rng = stream(cfg.seed, 5);
    for _ in 0..cfg.spectral_chains {
        let pair = lazy_pair(cfg, &mut rng);
        let phi = conductance(&pair)?;
        let s = pair.kernel.size();
        rep.instances += 1;
        for _ in 0..cfg.functions_per_chain {
            let g = random::state_function(s, 1.0, &mut rng).centered(&pair.pi);
            let norm_sq = g.inner(&g, &pair.pi);
            let mut pg = g.clone();
            for j in 0..=cfg.max_j {
                if j > 0 {
                    pg = pair.kernel.apply_operator(&pg)?;
                }
                let lhs = pg.inner(&g, &pair.pi);
                let rhs = bounds::cheeger_bound(phi, j, norm_sq)?;
                rep.le(lhs, rhs, IDENTITY_TOL, || {
                    (doc(&pair), format!("j = {j}, phi = {phi}: {lhs} > {rhs}"))
                });
            }
        }
    }
    Ok(rep)
}

/// `max_A |nu K^j (A) - pi(A)| <= sqrt(M) (1 - phi^2/2)^j` over all subsets.
pub fn check_mixing(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("mixing");
    let mut rng = stream(cfg.seed, 6);
    for _ in 0..cfg.spectral_chains {
        let pair = lazy_pair(cfg, &mut rng);
        let phi = conductance(&pair)?;
        let s = pair.kernel.size();
        let nu = random::start_distribution(s, &mut rng);
        let m = nu.density_bound(&pair.pi)?;
        rep.instances += 1;
        let mut law = nu.weights().to_vec();
        for j in 0..=cfg.max_j {
            if j > 0 {
                law = pair.kernel.push_forward(&law)?;
            }
            let worst = (1u32..(1 << s))
                .map(|mask| {
                    (0..s)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| law[i] - pair.pi[i])
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
            let rhs = bounds::mixing_bound(phi, m, j)?;
            rep.le(worst, rhs, IDENTITY_TOL, || {
                (
                    doc(&pair),
                    format!("nu = {:?}, j = {j}: {worst} > {rhs}", nu.weights()),
                )
            });
        }
    }
    Ok(rep)
}

/// Stationary start: `sqrt(E|S_n f - S f|^2) <= 2 ||f||_2 / (phi sqrt(n))`.
pub fn check_stationary_error(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("stationary_error");
    let mut rng = stream(cfg.seed, 7);
    for _ in 0..cfg.stationary_chains {
        let pair = lazy_pair(cfg, &mut rng);
        let phi = conductance(&pair)?;
        let s = pair.kernel.size();
        rep.instances += 1;
        for _ in 0..cfg.functions_per_chain {
            let f = random::state_function(s, 2.0, &mut rng);
            let table = ExactMseTable::new(
                &pair.kernel,
                &pair.pi,
                &pair.pi,
                &f,
                cfg.stationary_max_n,
                0,
            )?;
            let l2 = f.norm(&pair.pi, Norm::L2);
            for (idx, mse) in table.mse_over_n(0).into_iter().enumerate() {
                let n = idx as u64 + 1;
                let lhs = mse.sqrt();
                let rhs = bounds::stationary_error_bound(phi, n, l2)?;
                rep.le(lhs, rhs, IDENTITY_TOL, || {
                    (
                        doc(&pair),
                        format!("f = {:?}, n = {n}: {lhs} > {rhs}", f.values()),
                    )
                });
            }
        }
    }
    Ok(rep)
}

struct GeneralInstance {
    pair: ReversiblePair,
    phi: f64,
    nu: ProbabilityVector,
    density_bound: f64,
    f: StateFunction,
}

fn general_instances(cfg: &SuiteConfig, id: u64) -> Result<Vec<GeneralInstance>> {
    let mut rng = stream(cfg.seed, id);
    (0..cfg.general_instances)
        .map(|_| {
            let pair = lazy_pair(cfg, &mut rng);
            let phi = conductance(&pair)?;
            let s = pair.kernel.size();
            let nu = random::start_distribution(s, &mut rng);
            let density_bound = nu.density_bound(&pair.pi)?;
            let f = random::state_function(s, 1.5, &mut rng);
            Ok(GeneralInstance {
                pair,
                phi,
                nu,
                density_bound,
                f,
            })
        })
        .collect()
}

/// General start: exact RMSE below the general error bound for every
/// `n <= general_max_n`, `n0 <= general_max_n0`.
pub fn check_general_error(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("general_error");
    for inst in general_instances(cfg, 8)? {
        rep.instances += 1;
        let table = ExactMseTable::new(
            &inst.pair.kernel,
            &inst.pair.pi,
            &inst.nu,
            &inst.f,
            cfg.general_max_n,
            cfg.general_max_n0,
        )?;
        let sup = inst.f.norm(&inst.pair.pi, Norm::Sup);
        for n0 in 0..=cfg.general_max_n0 {
            for (idx, mse) in table.mse_over_n(n0).into_iter().enumerate() {
                let n = idx as u64 + 1;
                let lhs = mse.sqrt();
                let rhs = bounds::error_bound(inst.phi, n, n0 as u64, inst.density_bound, sup)?
                    .error_bound;
                rep.le(lhs, rhs, IDENTITY_TOL, || {
                    (
                        doc(&inst.pair),
                        format!(
                            "nu = {:?}, f = {:?}, n = {n}, n0 = {n0}: {lhs} > {rhs}",
                            inst.nu.weights(),
                            inst.f.values()
                        ),
                    )
                });
            }
        }
    }
    Ok(rep)
}

/// With `n0 = ceil(log M / phi^2)`: exact RMSE `<= 10 ||f||_inf / (phi sqrt(n))`.
pub fn check_burn_in(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("burn_in");
    for inst in general_instances(cfg, 9)? {
        rep.instances += 1;
        let n0 = bounds::burn_in(inst.density_bound, inst.phi)?;
        // The law after burn-in, nu K^{n0}, by matrix power.
        let burned = if n0 == 0 {
            inst.nu.clone()
        } else {
            let kn = inst.pair.kernel.n_step(n0 as usize)?;
            ProbabilityVector::from_unnormalized(
                kn.push_forward(inst.nu.weights())?
                    .iter()
                    .map(|v| v.max(0.0))
                    .collect(),
            )?
        };
        let table = ExactMseTable::new(
            &inst.pair.kernel,
            &inst.pair.pi,
            &burned,
            &inst.f,
            cfg.general_max_n,
            0,
        )?;
        let sup = inst.f.norm(&inst.pair.pi, Norm::Sup);
        for (idx, mse) in table.mse_over_n(0).into_iter().enumerate() {
            let n = (idx + 1) as f64;
            let lhs = mse.sqrt();
            let rhs = 10.0 * sup / (inst.phi * n.sqrt());
            rep.le(lhs, rhs, IDENTITY_TOL, || {
                (
                    doc(&inst.pair),
                    format!("n0 = {n0}, n = {n}: {lhs} > {rhs}"),
                )
            });
        }
    }
    Ok(rep)
}

/// The stationary-plus-corrections decomposition reproduces the exact error.
pub fn check_decomposition(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("mse_decomposition");
    let mut rng = stream(cfg.seed, 10);
    for idx in 0..cfg.decomposition_instances {
        let base = random::reversible_pair(cfg.max_states, &mut rng);
        let pair = if idx % 2 == 0 { base.lazify() } else { base };
        let s = pair.kernel.size();
        let nu = random::start_distribution(s, &mut rng);
        let f = random::state_function(s, 2.0, &mut rng);
        rep.instances += 1;
        for _ in 0..4 {
            let n = rng.random_range(1..=40);
            let n0 = rng.random_range(0..=20);
            let exact = ExactMseTable::new(&pair.kernel, &pair.pi, &nu, &f, n, n0)?.mse(n, n0);
            let parts = mse_decomposition(&pair.kernel, &pair.pi, &nu, &f, n, n0)?;
            let total = parts.total();
            rep.eq(exact, total, IDENTITY_TOL, || {
                (
                    doc(&pair),
                    format!("n = {n}, n0 = {n0}: {exact} vs {total}"),
                )
            });
        }
    }
    Ok(rep)
}

struct MetropolisInstance {
    proposal: ReversiblePair,
    rho: Vec<f64>,
}

fn metropolis_instances(cfg: &SuiteConfig, id: u64) -> Vec<MetropolisInstance> {
    let mut rng = stream(cfg.seed, id);
    (0..cfg.metropolis_instances)
        .map(|_| {
            let proposal = random::reversible_pair(cfg.max_states, &mut rng);
            let rho = random::positive_density(proposal.kernel.size(), &mut rng);
            MetropolisInstance { proposal, rho }
        })
        .collect()
}

fn weighted_target(mu: &ProbabilityVector, rho: &[f64]) -> Result<ProbabilityVector> {
    ProbabilityVector::from_unnormalized(mu.weights().iter().zip(rho).map(|(m, r)| m * r).collect())
}

/// `K_rho` is reversible with respect to `mu_rho ~ mu rho`.
pub fn check_metropolis_reversibility(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("metropolis_reversibility");
    for inst in metropolis_instances(cfg, 11) {
        rep.instances += 1;
        let k = build_metropolis_kernel(&inst.proposal.kernel, &inst.rho)?;
        let target = weighted_target(&inst.proposal.pi, &inst.rho)?;
        let residual = k.reversibility_residual(&target)?;
        rep.le(residual, 0.0, METROPOLIS_TOL, || {
            (
                KernelDocument::new(&k, Some(&target)),
                format!("rho = {:?}: detailed-balance residual {residual}", inst.rho),
            )
        });
    }
    Ok(rep)
}

/// Metropolis over a lazy proposal equals the lazy Metropolis kernel.
pub fn check_lazification_order(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("lazification_order");
    for inst in metropolis_instances(cfg, 12) {
        rep.instances += 1;
        let a = build_metropolis_kernel(&inst.proposal.kernel.lazify(), &inst.rho)?;
        let b = build_metropolis_kernel(&inst.proposal.kernel, &inst.rho)?.lazify();
        let gap = (a.matrix() - b.matrix()).amax();
        rep.le(gap, 0.0, METROPOLIS_TOL, || {
            (
                doc(&inst.proposal),
                format!("rho = {:?}: max entry gap {gap}", inst.rho),
            )
        });
    }
    Ok(rep)
}

/// `phi(K/2 + I/2) = phi(K) / 2` exactly: the identity part never leaves a set.
pub fn check_conductance_halving(cfg: &SuiteConfig) -> Result<CheckReport> {
    let mut rep = CheckReport::new("conductance_halving");
    let mut rng = stream(cfg.seed, 13);
    for _ in 0..cfg.chains {
        let pair = random::reversible_pair(cfg.max_states, &mut rng);
        rep.instances += 1;
        let phi = conductance(&pair)?;
        let lazy = conductance(&pair.lazify())?;
        rep.eq(lazy, phi / 2.0, METROPOLIS_TOL, || {
            (doc(&pair), format!("{lazy} vs {}", phi / 2.0))
        });
        // And the certified lower bound never exceeds the truth.
        let certified = bounds::lazification_conductance(phi)?;
        rep.le(certified, lazy, METROPOLIS_TOL, || {
            (doc(&pair), format!("lower bound {certified} above {lazy}"))
        });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SuiteConfig {
        SuiteConfig {
            seed: 5,
            chains: 20,
            spectral_chains: 10,
            stationary_chains: 5,
            general_instances: 8,
            decomposition_instances: 6,
            metropolis_instances: 20,
            ..SuiteConfig::default()
        }
    }

    #[test]
    fn small_suite_passes() {
        let report = run_suite(&small()).unwrap();
        for c in &report.checks {
            assert!(c.passed(), "{}: {:?}", c.name, c.reproducers);
            assert!(c.instances > 0 && c.comparisons > 0, "{}", c.name);
        }
    }

    #[test]
    fn injected_flip_chain_fails_psd() {
        let cfg = SuiteConfig {
            inject_non_lazy: true,
            ..small()
        };
        let rep = check_operator_psd(&cfg).unwrap();
        assert_eq!(rep.violations, 1);
        let v = &rep.reproducers[0];
        assert_eq!(v.instance.matrix, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(v.detail.contains("-1"), "{}", v.detail);
    }

    #[test]
    fn suite_is_deterministic() {
        let a = serde_json::to_string(&run_suite(&small()).unwrap()).unwrap();
        let b = serde_json::to_string(&run_suite(&small()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
