//! Random reversible chains, start distributions and state functions for the
//! exact-oracle test suites.
//!
//! Reversible pairs are built from a symmetric nonnegative weight matrix `W`:
//! `K[i][j] = W[i][j] / w_i` with `w_i = sum_j W[i][j]` and `pi_i = w_i / sum(W)`.
//! Then `pi_i K[i][j] = W[i][j] / sum(W)` is symmetric in `(i, j)`. The edges
//! `(i, i + 1)` always carry weight, so the chain is irreducible and its
//! conductance is positive.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{DiscreteKernel, ProbabilityVector, StateFunction};
use crate::error::Result;

/// A kernel together with a distribution it is reversible with respect to.
#[derive(Debug, Clone)]
pub struct ReversiblePair {
    pub kernel: DiscreteKernel,
    pub pi: ProbabilityVector,
}

impl ReversiblePair {
    pub fn lazify(&self) -> Self {
        Self {
            kernel: self.kernel.lazify(),
            pi: self.pi.clone(),
        }
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric weights with a guaranteed path `0 - 1 - ... - (s-1)` and roughly a
/// third of the remaining off-diagonal entries zeroed.
pub fn symmetric_weights<R: Rng + ?Sized>(size: usize, rng: &mut R) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(size, size);
    for i in 0..size {
        // Skewed magnitudes so pi is far from uniform.
        w[(i, i)] = rng.random::<f64>().powi(2);
        for j in (i + 1)..size {
            let v = if j == i + 1 || rng.random::<f64>() < 0.66 {
                0.05 + rng.random::<f64>() * rng.random::<f64>() * 3.0
            } else {
                0.0
            };
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

pub fn reversible_from_weights(w: &DMatrix<f64>) -> Result<ReversiblePair> {
    let s = w.nrows();
    let row_sums: Vec<f64> = (0..s).map(|i| w.row(i).sum()).collect();
    let mut m = DMatrix::from_fn(s, s, |i, j| w[(i, j)] / row_sums[i]);
    // Put the rounding slack on the diagonal so every row sums to 1.
    for i in 0..s {
        let off: f64 = (0..s).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
        m[(i, i)] = (1.0 - off).max(0.0);
    }
    Ok(ReversiblePair {
        kernel: DiscreteKernel::new(m)?,
        pi: ProbabilityVector::from_unnormalized(row_sums)?,
    })
}

/// Random reversible pair with `2 <= s <= max_size` states.
pub fn reversible_pair<R: Rng + ?Sized>(max_size: usize, rng: &mut R) -> ReversiblePair {
    let s = rng.random_range(2..=max_size.max(2));
    reversible_pair_of_size(s, rng)
}

pub fn reversible_pair_of_size<R: Rng + ?Sized>(size: usize, rng: &mut R) -> ReversiblePair {
    let w = symmetric_weights(size, rng);
    reversible_from_weights(&w).expect("weights from symmetric_weights give a valid chain")
}

/// Random start distribution: alternately a point mass, a spread-out
/// distribution, or a mixture of the two.
pub fn start_distribution<R: Rng + ?Sized>(size: usize, rng: &mut R) -> ProbabilityVector {
    match rng.random_range(0..3) {
        0 => ProbabilityVector::point_mass(size, rng.random_range(0..size)),
        1 => {
            let w: Vec<f64> = (0..size).map(|_| rng.random::<f64>() + 1e-3).collect();
            ProbabilityVector::from_unnormalized(w).expect("positive weights")
        }
        _ => {
            let hot = rng.random_range(0..size);
            let w: Vec<f64> = (0..size)
                .map(|i| {
                    if i == hot {
                        5.0
                    } else {
                        rng.random::<f64>() * 0.2
                    }
                })
                .collect();
            ProbabilityVector::from_unnormalized(w).expect("positive weights")
        }
    }
}

/// Values uniform in `[-scale, scale]`.
pub fn state_function<R: Rng + ?Sized>(size: usize, scale: f64, rng: &mut R) -> StateFunction {
    StateFunction::new(
        (0..size)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect(),
    )
    .expect("finite values")
}

/// Strictly positive unnormalized density on states, spanning a few orders of
/// magnitude.
pub fn positive_density<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<f64> {
    (0..size)
        .map(|_| (rng.random::<f64>() * 6.0 - 3.0).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::IDENTITY_TOL;

    #[test]
    fn generated_pairs_are_reversible_and_stationary() {
        let mut rng = rng_from_seed(1);
        for _ in 0..200 {
            let p = reversible_pair(8, &mut rng);
            assert!(p.kernel.check_reversibility(&p.pi, IDENTITY_TOL).unwrap());
            assert!(p.kernel.check_stationarity(&p.pi, IDENTITY_TOL).unwrap());
            p.pi.require_positive().unwrap();
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let a = reversible_pair(8, &mut rng_from_seed(9));
        let b = reversible_pair(8, &mut rng_from_seed(9));
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.pi, b.pi);
    }
}
