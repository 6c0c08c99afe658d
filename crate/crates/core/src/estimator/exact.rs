//! Exact mean-square error of `S_{n,n0}` for finite-state chains.
//!
//! With `X_0 ~ nu` and `g = f - S(f)`,
//!
//! ```text
//! E|S_{n,n0}(f) - S(f)|^2 = (1/n^2) sum_{i,j=1}^n E[g(X_{n0+i}) g(X_{n0+j})]
//! E[g(X_a) g(X_b)] = sum_x (nu K^a)(x) g(x) (K^{b-a} g)(x),   a <= b.
//! ```
//!
//! [`ExactMseTable`] tabulates `C[a][m] = sum_x (nu K^a)(x) g(x) (K^m g)(x)`
//! once, after which the error for any `(n, n0)` in range is a sum over the
//! table. [`mse_decomposition`] evaluates the same quantity through a
//! different route (stationary error plus start-distribution corrections,
//! via the density `d nu / d pi`) and is used as a cross-check.

use crate::chain::{DiscreteKernel, ProbabilityVector, StateFunction};
use crate::error::{Error, Result};
use crate::IDENTITY_TOL;

#[derive(Debug, Clone)]
pub struct ExactMseTable {
    max_n: usize,
    max_n0: usize,
    /// `cov[a - 1][m]` for `a = 1..=max_n0 + max_n`, `m = 0..max_n`.
    cov: Vec<Vec<f64>>,
}

fn check_inputs(
    kernel: &DiscreteKernel,
    pi: &ProbabilityVector,
    nu: &ProbabilityVector,
    f: &StateFunction,
) -> Result<()> {
    let s = kernel.size();
    for found in [pi.len(), nu.len(), f.len()] {
        if found != s {
            return Err(Error::DimensionMismatch { expected: s, found });
        }
    }
    let residual = kernel.stationarity_residual(pi)?;
    if residual > IDENTITY_TOL {
        return Err(Error::NotStationary { residual });
    }
    Ok(())
}

fn dot3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

impl ExactMseTable {
    pub fn new(
        kernel: &DiscreteKernel,
        pi: &ProbabilityVector,
        nu: &ProbabilityVector,
        f: &StateFunction,
        max_n: usize,
        max_n0: usize,
    ) -> Result<Self> {
        check_inputs(kernel, pi, nu, f)?;
        if max_n == 0 {
            return Err(Error::OutOfRange {
                name: "n",
                value: 0.0,
                expected: "n >= 1",
            });
        }
        let g = f.centered(pi);

        let mut powers_g = Vec::with_capacity(max_n);
        powers_g.push(g.clone());
        for m in 1..max_n {
            let next = kernel.apply_operator(&powers_g[m - 1])?;
            powers_g.push(next);
        }

        let mut cov = Vec::with_capacity(max_n0 + max_n);
        let mut law = nu.weights().to_vec();
        for _ in 0..(max_n0 + max_n) {
            law = kernel.push_forward(&law)?;
            cov.push(
                powers_g
                    .iter()
                    .map(|h| dot3(&law, g.values(), h.values()))
                    .collect(),
            );
        }
        Ok(Self { max_n, max_n0, cov })
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn max_n0(&self) -> usize {
        self.max_n0
    }

    /// `E[g(X_a) g(X_{a+m})]`.
    fn c(&self, a: usize, m: usize) -> f64 {
        self.cov[a - 1][m]
    }

    /// Exact mean-square error for `1 <= n <= max_n`, `n0 <= max_n0`.
    pub fn mse(&self, n: usize, n0: usize) -> f64 {
        assert!(
            n >= 1 && n <= self.max_n && n0 <= self.max_n0,
            "(n, n0) outside the table"
        );
        let mut total = 0.0;
        for j in 1..=n {
            total += self.c(n0 + j, 0);
            for k in (j + 1)..=n {
                total += 2.0 * self.c(n0 + j, k - j);
            }
        }
        (total / (n * n) as f64).max(0.0)
    }

    /// Exact mean-square errors for `n = 1..=max_n` at burn-in `n0`.
    pub fn mse_over_n(&self, n0: usize) -> Vec<f64> {
        assert!(n0 <= self.max_n0, "n0 outside the table");
        let mut out = Vec::with_capacity(self.max_n);
        let mut total = 0.0;
        for n in 1..=self.max_n {
            // Adding X_{n0+n}: its variance and its covariance with each earlier sample.
            total += self.c(n0 + n, 0);
            for j in 1..n {
                total += 2.0 * self.c(n0 + j, n - j);
            }
            out.push((total / (n * n) as f64).max(0.0));
        }
        out
    }
}

/// Exact `E_{nu,K} |S_{n,n0}(f) - S(f)|^2`.
pub fn exact_mse_discrete(
    kernel: &DiscreteKernel,
    pi: &ProbabilityVector,
    nu: &ProbabilityVector,
    f: &StateFunction,
    n: usize,
    n0: usize,
) -> Result<f64> {
    Ok(ExactMseTable::new(kernel, pi, nu, f, n, n0)?.mse(n, n0))
}

/// The error split into the stationary-start error and the two corrections
/// caused by starting from `nu` instead of `pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseDecomposition {
    /// `E_{pi,K} |S_n(f) - S(f)|^2`.
    pub stationary: f64,
    /// `(1/n^2) sum_j <p_{n0+j}, g^2>_pi`.
    pub diagonal: f64,
    /// `(2/n^2) sum_{j<k} <p_{n0+j}, g P^{k-j} g>_pi`.
    pub cross: f64,
}

impl MseDecomposition {
    pub fn total(&self) -> f64 {
        self.stationary + self.diagonal + self.cross
    }
}

/// Evaluates the decomposition with `p_i(x) = (P^i (d nu/d pi))(x) - 1`.
/// Requires a reversible pair with `pi > 0`.
pub fn mse_decomposition(
    kernel: &DiscreteKernel,
    pi: &ProbabilityVector,
    nu: &ProbabilityVector,
    f: &StateFunction,
    n: usize,
    n0: usize,
) -> Result<MseDecomposition> {
    check_inputs(kernel, pi, nu, f)?;
    pi.require_positive()?;
    let residual = kernel.reversibility_residual(pi)?;
    if residual > IDENTITY_TOL {
        return Err(Error::NotReversible { residual });
    }
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "n",
            value: 0.0,
            expected: "n >= 1",
        });
    }
    let nn = (n * n) as f64;
    let g = f.centered(pi);

    // P^m g for m = 0..n-1.
    let mut pg = vec![g.clone()];
    for m in 1..n {
        let next = kernel.apply_operator(&pg[m - 1])?;
        pg.push(next);
    }

    let mut stationary = n as f64 * g.inner(&g, pi);
    for (k, h) in pg.iter().enumerate().skip(1) {
        stationary += 2.0 * (n - k) as f64 * h.inner(&g, pi);
    }
    stationary /= nn;

    let ratio: Vec<f64> = nu
        .weights()
        .iter()
        .zip(pi.weights())
        .map(|(a, b)| a / b)
        .collect();
    let mut density = StateFunction::new(ratio)?;
    for _ in 0..n0 {
        density = kernel.apply_operator(&density)?;
    }

    let g_sq: Vec<f64> = g.values().iter().map(|v| v * v).collect();
    let mut diagonal = 0.0;
    let mut cross = 0.0;
    for j in 1..=n {
        density = kernel.apply_operator(&density)?;
        let p: Vec<f64> = density.values().iter().map(|v| v - 1.0).collect();
        diagonal += dot3(&p, &g_sq, pi.weights());
        // sum_{k > j} P^{k-j} g
        let mut tail = vec![0.0; g.len()];
        for h in &pg[1..=(n - j)] {
            tail.iter_mut().zip(h.values()).for_each(|(t, v)| *t += v);
        }
        let gt: Vec<f64> = g.values().iter().zip(&tail).map(|(a, b)| a * b).collect();
        cross += 2.0 * dot3(&p, &gt, pi.weights());
    }
    Ok(MseDecomposition {
        stationary,
        diagonal: diagonal / nn,
        cross: cross / nn,
    })
}
