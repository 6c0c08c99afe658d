//! Independent oracles: path enumeration and direct simulation for the exact
//! error, and Monte Carlo checks of the ball walk.

use rand::Rng;

use lazymc_core::estimator::{empirical_mse, exact_mse_discrete, run_chain, RunConfig};
use lazymc_core::metropolis::{chain_rng, lazy_metro_step, StepOutcome};
use lazymc_core::random::{self, rng_from_seed};
use lazymc_core::{
    ChainState, DensityOracle, DiscreteKernel, Integrand, ProbabilityVector, StateFunction,
    WalkConfig,
};

/// `E|S_{n,n0} f - S f|^2` by summing over every path `x_0 .. x_{n0+n}`.
fn mse_by_paths(
    k: &DiscreteKernel,
    pi: &ProbabilityVector,
    nu: &ProbabilityVector,
    f: &StateFunction,
    n: usize,
    n0: usize,
) -> f64 {
    let s = k.size();
    let target = f.mean(pi);
    let steps = n0 + n;
    let mut total = 0.0;
    let mut path = vec![0usize; steps + 1];
    let paths = s.pow(steps as u32 + 1);
    for code in 0..paths {
        let mut c = code;
        for x in path.iter_mut() {
            *x = c % s;
            c /= s;
        }
        let mut prob = nu[path[0]];
        for w in path.windows(2) {
            prob *= k.get(w[0], w[1]);
        }
        if prob == 0.0 {
            continue;
        }
        let avg = path[n0 + 1..].iter().map(|&x| f[x]).sum::<f64>() / n as f64;
        total += prob * (avg - target).powi(2);
    }
    total
}

#[test]
fn exact_error_matches_path_enumeration() {
    let mut rng = rng_from_seed(77);
    for _ in 0..30 {
        let size = rng.random_range(2..=3);
        let p = random::reversible_pair_of_size(size, &mut rng);
        let p = if rng.random::<bool>() { p.lazify() } else { p };
        let nu = random::start_distribution(size, &mut rng);
        let f = random::state_function(size, 2.0, &mut rng);
        for (n, n0) in [(1, 0), (2, 1), (3, 0), (3, 2), (4, 1), (5, 0)] {
            let exact = exact_mse_discrete(&p.kernel, &p.pi, &nu, &f, n, n0).unwrap();
            let brute = mse_by_paths(&p.kernel, &p.pi, &nu, &f, n, n0);
            assert!(
                (exact - brute).abs() <= 1e-12 * (1.0 + brute),
                "n={n} n0={n0}: {exact} vs {brute}"
            );
        }
    }
}

/// Mean and standard error of `(S_{n,n0} f - S f)^2` over simulated paths.
fn simulated_mse(
    k: &DiscreteKernel,
    pi: &ProbabilityVector,
    nu: &ProbabilityVector,
    f: &StateFunction,
    (n, n0): (usize, usize),
    paths: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = chain_rng(seed);
    let target = f.mean(pi);
    let sample = |w: &[f64], rng: &mut rand_chacha::ChaCha8Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        w.len() - 1
    };
    let rows = k.rows();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..paths {
        let mut x = sample(nu.weights(), &mut rng);
        for _ in 0..n0 {
            x = sample(&rows[x], &mut rng);
        }
        let mut avg = 0.0;
        for _ in 0..n {
            x = sample(&rows[x], &mut rng);
            avg += f[x];
        }
        let e = (avg / n as f64 - target).powi(2);
        sum += e;
        sum_sq += e * e;
    }
    let m = sum / paths as f64;
    let var = (sum_sq / paths as f64 - m * m).max(0.0);
    (m, (var / paths as f64).sqrt())
}

#[test]
fn exact_error_matches_simulation() {
    let two = DiscreteKernel::from_rows(&[vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
    let two_pi = ProbabilityVector::new(vec![0.25, 0.75]).unwrap();
    let mut rng = rng_from_seed(5);
    let four = random::reversible_pair_of_size(4, &mut rng).lazify();
    let cases = [
        (
            two.clone(),
            two_pi.clone(),
            ProbabilityVector::point_mass(2, 0),
            StateFunction::new(vec![1.0, -1.0]).unwrap(),
        ),
        (
            four.kernel.clone(),
            four.pi.clone(),
            random::start_distribution(4, &mut rng),
            random::state_function(4, 1.0, &mut rng),
        ),
    ];
    for (i, (k, pi, nu, f)) in cases.iter().enumerate() {
        let (n, n0) = (10, 3);
        let exact = exact_mse_discrete(k, pi, nu, f, n, n0).unwrap();
        let (sim, se) = simulated_mse(k, pi, nu, f, (n, n0), 1_000_000, 900 + i as u64);
        assert!(
            (exact - sim).abs() <= 3.0 * se,
            "case {i}: exact {exact}, simulated {sim} +- {se}"
        );
    }
}

#[test]
fn start_density_ratio_within_class_bound() {
    // For rho in the class, rho(x) / rho(y) <= exp(alpha |x - y|) <= exp(2 alpha)
    // on the unit ball, which bounds the density of the uniform start.
    let mut rng = rng_from_seed(8);
    let oracles = [
        DensityOracle::exp_linear(vec![1.0, -0.5, 0.25]).unwrap(),
        DensityOracle::gaussian(3, 0.8).unwrap(),
        DensityOracle::uniform(3).unwrap(),
    ];
    for rho in &oracles {
        let pts: Vec<Vec<f64>> = (0..2000)
            .map(|_| lazymc_core::metropolis::uniform_ball_sample(3, &mut rng))
            .collect();
        let logs: Vec<f64> = pts.iter().map(|x| rho.log_eval(x)).collect();
        let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi - lo <= 2.0 * rho.alpha() + 1e-12, "{}", rho.label());
    }
}

#[test]
fn lazy_walk_holds_at_least_half_the_time() {
    let rho = DensityOracle::exp_linear(vec![2.0, 0.0]).unwrap();
    let walk = WalkConfig::for_density(&rho, 31);
    let mut rng = walk.rng();
    let mut state = ChainState::uniform_start(&rho, &mut rng).unwrap();
    let steps = 400_000;
    let (mut lazy, mut held) = (0u64, 0u64);
    for _ in 0..steps {
        let out = lazy_metro_step(&mut state, &rho, &walk, &mut rng).unwrap();
        lazy += (out == StepOutcome::Lazy) as u64;
        held += (!out.moved()) as u64;
    }
    let lazy_rate = lazy as f64 / steps as f64;
    assert!((lazy_rate - 0.5).abs() < 0.005, "{lazy_rate}");
    assert!(held as f64 / steps as f64 > 0.5);
}

#[test]
fn uniform_disk_second_moment() {
    let rho = DensityOracle::uniform(2).unwrap();
    let run = run_chain(
        &rho,
        &Integrand::Coord2(0),
        &RunConfig::new(1_000_000, 0, 2024),
    )
    .unwrap();
    assert!((run.estimate - 0.25).abs() < 0.005, "{}", run.estimate);
    assert_eq!(run.steps_total, 1_000_000);
}

#[test]
fn rmse_halves_when_n_quadruples() {
    let rho = DensityOracle::uniform(2).unwrap();
    let f = Integrand::Coord(0);
    let (a, _) = empirical_mse(&rho, &f, &RunConfig::new(20_000, 0, 10), 100, 0.0).unwrap();
    let (b, _) = empirical_mse(&rho, &f, &RunConfig::new(80_000, 0, 20), 100, 0.0).unwrap();
    let ratio = a.empirical_rmse / b.empirical_rmse;
    assert!((1.6..=2.5).contains(&ratio), "{ratio}");
    assert_eq!(a.within_bound, Some(true));
}
