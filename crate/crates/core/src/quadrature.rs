//! Reference values of `S(f) = int f rho / int rho` over the unit ball.
//!
//! For `d <= 3` the ball is sliced along the coordinate the integrand reads
//! (`x_k = sin u`), which makes both the ball's boundary and a half-space cut
//! `x_k <= t` coordinate-aligned; the remaining cross-section is a segment
//! (`d = 2`) or a disk in polar coordinates (`d = 3`). Composite
//! Gauss-Legendre rules are refined by doubling the panel count until two
//! successive values agree. Larger dimensions use plain uniform Monte Carlo
//! with a ratio-estimator standard error.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{DensityOracle, Integrand};
use crate::error::{Error, Result};
use crate::metropolis::{chain_rng, uniform_ball_sample};

/// Gauss-Legendre order used on every panel.
const PANEL_ORDER: usize = 16;
/// Successive refinements must agree to this relative tolerance.
const QUADRATURE_RTOL: f64 = 1e-7;
pub const MONTE_CARLO_DRAWS: u64 = 10_000_000;
pub const MONTE_CARLO_SEED: u64 = 0x5eed_ba11;
const MONTE_CARLO_CHUNK: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceValue {
    pub value: f64,
    pub method: ReferenceMethod,
    /// Difference between the last two refinements (quadrature) or the
    /// standard error (Monte Carlo).
    pub error_estimate: f64,
    pub converged: bool,
    pub evaluations: u64,
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(x) and P_{n-1}(x).
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    fn composite(
        a: f64,
        b: f64,
        panels: usize,
        split: Option<f64>,
        base: &(Vec<f64>, Vec<f64>),
    ) -> Self {
        let mut rule = Rule {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        match split {
            Some(c) if c > a && c < b => {
                rule.push_panels(a, c, panels, base);
                rule.push_panels(c, b, panels, base);
            }
            _ => rule.push_panels(a, b, panels, base),
        }
        rule
    }

    fn push_panels(&mut self, a: f64, b: f64, panels: usize, (xs, ws): &(Vec<f64>, Vec<f64>)) {
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in xs.iter().zip(ws) {
                self.nodes.push(mid + 0.5 * h * x);
                self.weights.push(0.5 * h * w);
            }
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }
}

/// `S(f)` for the density and integrand, by quadrature when `d <= 3`.
pub fn reference_integral(rho: &DensityOracle, f: &Integrand) -> Result<ReferenceValue> {
    if let Some(k) = f.coordinate() {
        if k >= rho.dimension() {
            return Err(Error::DimensionMismatch {
                expected: rho.dimension(),
                found: k + 1,
            });
        }
    }
    if let Integrand::Constant(c) = *f {
        return Ok(ReferenceValue {
            value: c,
            method: ReferenceMethod::Quadrature,
            error_estimate: 0.0,
            converged: true,
            evaluations: 0,
        });
    }
    match rho.dimension() {
        1..=3 => quadrature(rho, f),
        _ => reference_integral_monte_carlo(rho, f, MONTE_CARLO_DRAWS, MONTE_CARLO_SEED),
    }
}

fn quadrature(rho: &DensityOracle, f: &Integrand) -> Result<ReferenceValue> {
    let d = rho.dimension();
    let max_panels = match d {
        1 => 1024,
        2 => 128,
        _ => 16,
    };
    // rho / exp(shift) lies in [exp(-2 alpha), 1] on the ball.
    let shift = rho.log_eval(&vec![0.0; d]) + rho.alpha();
    let base = gauss_legendre(PANEL_ORDER);

    let mut evaluations = 0u64;
    let mut previous: Option<f64> = None;
    let mut panels = 1;
    loop {
        let (value, evals) = tensor_quadrature(rho, f, shift, panels, &base)?;
        evaluations += evals;
        if let Some(prev) = previous {
            let diff = (value - prev).abs();
            let scale = value.abs().max(1e-3 * f.sup_norm()).max(f64::MIN_POSITIVE);
            let converged = diff <= QUADRATURE_RTOL * scale;
            if converged || panels >= max_panels {
                return Ok(ReferenceValue {
                    value,
                    method: ReferenceMethod::Quadrature,
                    error_estimate: diff,
                    converged,
                    evaluations,
                });
            }
        }
        previous = Some(value);
        panels *= 2;
    }
}

fn tensor_quadrature(
    rho: &DensityOracle,
    f: &Integrand,
    shift: f64,
    panels: usize,
    base: &(Vec<f64>, Vec<f64>),
) -> Result<(f64, u64)> {
    let d = rho.dimension();
    let axis = f.coordinate().unwrap_or(0);
    let cut = f.discontinuity();

    let weight_of = |x: &[f64]| -> Result<(f64, f64)> {
        let l = rho.log_eval(x);
        if !l.is_finite() {
            return Err(Error::OutOfRange {
                name: "log rho",
                value: l,
                expected: "finite (rho positive)",
            });
        }
        let r = (l - shift).exp();
        Ok((f.eval(x) * r, r))
    };

    let (mut num, mut den) = (0.0, 0.0);
    let mut evals = 0u64;
    match d {
        1 => {
            let rule = Rule::composite(-1.0, 1.0, panels, cut, base);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let (a, b) = weight_of(&[*x])?;
                num += w * a;
                den += w * b;
            }
            evals += rule.len() as u64;
        }
        2 => {
            let outer = slice_rule(panels, cut, base);
            let inner = Rule::composite(-1.0, 1.0, panels, None, base);
            let mut x = [0.0; 2];
            for (u, wu) in outer.nodes.iter().zip(&outer.weights) {
                let (s, c) = u.sin_cos();
                let (mut n_row, mut d_row) = (0.0, 0.0);
                for (t, wt) in inner.nodes.iter().zip(&inner.weights) {
                    x[axis] = s;
                    x[1 - axis] = c * t;
                    let (a, b) = weight_of(&x)?;
                    n_row += wt * a;
                    d_row += wt * b;
                }
                let jac = c * c;
                num += wu * jac * n_row;
                den += wu * jac * d_row;
            }
            evals += (outer.len() * inner.len()) as u64;
        }
        3 => {
            let outer = slice_rule(panels, cut, base);
            let radial = Rule::composite(0.0, 1.0, panels, None, base);
            let angular = Rule::composite(0.0, 2.0 * PI, panels, None, base);
            let others: Vec<usize> = (0..3).filter(|&i| i != axis).collect();
            let mut x = [0.0; 3];
            for (u, wu) in outer.nodes.iter().zip(&outer.weights) {
                let (s, c) = u.sin_cos();
                let (mut n_slice, mut d_slice) = (0.0, 0.0);
                for (r, wr) in radial.nodes.iter().zip(&radial.weights) {
                    for (th, wt) in angular.nodes.iter().zip(&angular.weights) {
                        let (st, ct) = th.sin_cos();
                        x[axis] = s;
                        x[others[0]] = c * r * ct;
                        x[others[1]] = c * r * st;
                        let (a, b) = weight_of(&x)?;
                        n_slice += wr * wt * r * a;
                        d_slice += wr * wt * r * b;
                    }
                }
                let jac = c * c * c;
                num += wu * jac * n_slice;
                den += wu * jac * d_slice;
            }
            evals += (outer.len() * radial.len() * angular.len()) as u64;
        }
        _ => unreachable!("quadrature handles d <= 3"),
    }
    Ok((num / den, evals))
}

/// Rule in `u` on `[-pi/2, pi/2]` for `x_k = sin u`, split where `x_k = t`.
fn slice_rule(panels: usize, cut: Option<f64>, base: &(Vec<f64>, Vec<f64>)) -> Rule {
    let split = cut.filter(|t| t.abs() < 1.0).map(f64::asin);
    Rule::composite(-FRAC_PI_2, FRAC_PI_2, panels, split, base)
}

/// Ratio estimate `sum f rho / sum rho` over `draws` uniform points of the
/// ball, in fixed chunks with seeds `seed + chunk` so the result does not
/// depend on thread scheduling.
pub fn reference_integral_monte_carlo(
    rho: &DensityOracle,
    f: &Integrand,
    draws: u64,
    seed: u64,
) -> Result<ReferenceValue> {
    if draws < 2 {
        return Err(Error::OutOfRange {
            name: "draws",
            value: draws as f64,
            expected: "draws >= 2",
        });
    }
    let d = rho.dimension();
    let shift = rho.log_eval(&vec![0.0; d]) + rho.alpha();
    let chunks = draws.div_ceil(MONTE_CARLO_CHUNK);
    let sums = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(seed.wrapping_add(c));
            let count = MONTE_CARLO_CHUNK.min(draws - c * MONTE_CARLO_CHUNK);
            let mut acc = [0.0f64; 5];
            for _ in 0..count {
                let x = uniform_ball_sample(d, &mut rng);
                let l = rho.log_eval(&x);
                if !l.is_finite() {
                    return Err(Error::OutOfRange {
                        name: "log rho",
                        value: l,
                        expected: "finite (rho positive)",
                    });
                }
                let w = (l - shift).exp();
                let y = f.eval(&x) * w;
                acc[0] += w;
                acc[1] += y;
                acc[2] += w * w;
                acc[3] += y * y;
                acc[4] += w * y;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tot = [0.0f64; 5];
    for s in &sums {
        tot.iter_mut().zip(s).for_each(|(t, v)| *t += v);
    }
    let n = draws as f64;
    let value = tot[1] / tot[0];
    let resid_sq = (tot[3] - 2.0 * value * tot[4] + value * value * tot[2]) / n;
    let mean_w = tot[0] / n;
    let std_error = (resid_sq.max(0.0) / n).sqrt() / mean_w;
    Ok(ReferenceValue {
        value,
        method: ReferenceMethod::MonteCarlo,
        error_estimate: std_error,
        converged: true,
        evaluations: draws,
    })
}
