//! Unnormalized target densities and integrands on the closed unit ball.
//!
//! Densities are handled in log space: an oracle returns `log rho(x)`, and
//! the sampler only ever uses differences of log-densities. The text forms
//! accepted by [`DensityOracle::parse`] and [`Integrand::parse`] are
//!
//! | spec | meaning | alpha |
//! |------|---------|-------|
//! | `uniform` | `rho = 1` | 0 |
//! | `explin:a1,...,ad` | `rho = exp(a . x)` | `||a||_2` |
//! | `gauss:c` | `rho = exp(-c ||x||^2)` | `2c` |
//!
//! and `one`, `coord:k` (`x_k`), `coord2:k` (`x_k^2`), `halfspace:k,t`
//! (indicator of `x_k <= t`) with 1-based coordinate indices.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{out_of_range, Error, Result};
use crate::metropolis::uniform_ball_sample;

/// Slack allowed in the log-Lipschitz and midpoint-concavity checks.
pub const CLASS_CHECK_SLACK: f64 = 1e-9;

type LogDensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct DensityOracle {
    dimension: usize,
    alpha: f64,
    logconcave_claimed: bool,
    label: String,
    log_density: Arc<LogDensityFn>,
}

impl fmt::Debug for DensityOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityOracle")
            .field("label", &self.label)
            .field("dimension", &self.dimension)
            .field("alpha", &self.alpha)
            .field("logconcave_claimed", &self.logconcave_claimed)
            .finish()
    }
}

impl DensityOracle {
    /// Wraps a log-density. `alpha` is the declared Lipschitz constant of
    /// `log rho`; it is trusted, see [`verify_density_class`] for a spot check.
    pub fn from_log_fn<F>(
        dimension: usize,
        alpha: f64,
        logconcave_claimed: bool,
        log_density: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dimension == 0 {
            return Err(out_of_range("dimension", 0.0, "d >= 1"));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(out_of_range("alpha", alpha, "finite and >= 0"));
        }
        Ok(Self {
            dimension,
            alpha,
            logconcave_claimed,
            label: "custom".into(),
            log_density: Arc::new(log_density),
        })
    }

    /// Wraps a positive density; values are logged on every call.
    pub fn from_fn<F>(
        dimension: usize,
        alpha: f64,
        logconcave_claimed: bool,
        rho: F,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::from_log_fn(dimension, alpha, logconcave_claimed, move |x| rho(x).ln())
    }

    pub fn uniform(dimension: usize) -> Result<Self> {
        Ok(Self::from_log_fn(dimension, 0.0, true, |_| 0.0)?.labeled("uniform"))
    }

    /// `rho(x) = exp(a . x)` with `alpha = ||a||_2`.
    pub fn exp_linear(a: Vec<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse("explin coefficients must be finite".into()));
        }
        let alpha = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let label = format!(
            "explin:{}",
            a.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let d = a.len();
        Ok(Self::from_log_fn(d, alpha, true, move |x| {
            x.iter().zip(&a).map(|(xi, ai)| xi * ai).sum()
        })?
        .labeled(label))
    }

    /// `rho(x) = exp(-c ||x||^2)`; on the unit ball `alpha = 2|c|`. Logconcave
    /// only for `c >= 0`.
    pub fn gaussian(dimension: usize, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Parse("gauss coefficient must be finite".into()));
        }
        Ok(
            Self::from_log_fn(dimension, 2.0 * c.abs(), c >= 0.0, move |x| {
                -c * x.iter().map(|v| v * v).sum::<f64>()
            })?
            .labeled(format!("gauss:{c}")),
        )
    }

    pub fn parse(spec: &str, dimension: usize) -> Result<Self> {
        let spec = spec.trim();
        let (head, tail) = match spec.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t)),
            None => (spec, None),
        };
        let oracle = match (head, tail) {
            ("uniform", None) => Self::uniform(dimension)?,
            ("explin", Some(t)) => {
                let a = parse_list(t)?;
                if a.len() != dimension {
                    return Err(Error::Parse(format!(
                        "explin needs {dimension} coefficients, got {}",
                        a.len()
                    )));
                }
                Self::exp_linear(a)?
            }
            ("gauss", Some(t)) => Self::gaussian(dimension, parse_number(t)?)?,
            _ => return Err(Error::Parse(format!("unknown density spec '{spec}'"))),
        };
        Ok(oracle)
    }

    fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn logconcave_claimed(&self) -> bool {
        self.logconcave_claimed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `log rho(x)`, unchecked.
    pub fn log_eval(&self, x: &[f64]) -> f64 {
        (self.log_density)(x)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.log_eval(x).exp()
    }

    /// `log rho(x)`, rejecting values that do not come from a positive finite
    /// density. `step` is only used in the error.
    pub fn checked_log_eval(&self, x: &[f64], step: u64) -> Result<f64> {
        let v = self.log_eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Density {
                step,
                log_density: v,
            })
        }
    }
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("'{s}' is not a finite number")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

fn parse_index(s: &str, dimension: usize) -> Result<usize> {
    let k: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("'{s}' is not a coordinate index")))?;
    if k == 0 || k > dimension {
        return Err(Error::Parse(format!(
            "coordinate index {k} outside 1..={dimension}"
        )));
    }
    Ok(k - 1)
}

/// Bounded integrands on the unit ball. Coordinate indices are 0-based here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Integrand {
    Constant(f64),
    Coord(usize),
    Coord2(usize),
    HalfSpace { coord: usize, threshold: f64 },
}

impl Integrand {
    pub fn parse(spec: &str, dimension: usize) -> Result<Self> {
        let spec = spec.trim();
        let (head, tail) = match spec.split_once(':') {
            Some((h, t)) => (h.trim(), Some(t)),
            None => (spec, None),
        };
        match (head, tail) {
            ("one", None) => Ok(Self::Constant(1.0)),
            ("coord", Some(t)) => Ok(Self::Coord(parse_index(t, dimension)?)),
            ("coord2", Some(t)) => Ok(Self::Coord2(parse_index(t, dimension)?)),
            ("halfspace", Some(t)) => {
                let (k, thr) = t
                    .split_once(',')
                    .ok_or_else(|| Error::Parse("halfspace needs 'k,t'".into()))?;
                Ok(Self::HalfSpace {
                    coord: parse_index(k, dimension)?,
                    threshold: parse_number(thr)?,
                })
            }
            _ => Err(Error::Parse(format!("unknown integrand spec '{spec}'"))),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Self::Constant(c) => c,
            Self::Coord(k) => x[k],
            Self::Coord2(k) => x[k] * x[k],
            Self::HalfSpace { coord, threshold } => {
                if x[coord] <= threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `sup |f|` over the unit ball.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            Self::Constant(c) => c.abs(),
            Self::Coord(_) | Self::Coord2(_) => 1.0,
            Self::HalfSpace { threshold, .. } => {
                if threshold < -1.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Largest coordinate index the integrand reads, if any.
    pub fn coordinate(&self) -> Option<usize> {
        match *self {
            Self::Constant(_) => None,
            Self::Coord(k) | Self::Coord2(k) | Self::HalfSpace { coord: k, .. } => Some(k),
        }
    }

    /// Where the integrand jumps along [`Self::coordinate`], if it does.
    pub fn discontinuity(&self) -> Option<f64> {
        match *self {
            Self::HalfSpace { threshold, .. } => Some(threshold),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassViolationKind {
    /// `|log rho(x) - log rho(y)| > alpha ||x - y||`.
    Lipschitz,
    /// `log rho((x+y)/2) < (log rho(x) + log rho(y)) / 2`.
    Concavity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassViolation {
    pub kind: ClassViolationKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Amount by which the inequality fails.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCheck {
    pub holds: bool,
    pub pairs_checked: usize,
    pub violation: Option<ClassViolation>,
}

/// Spot check of the declared class: log-Lipschitz with constant `alpha` and,
/// when claimed, midpoint logconcavity.
///
/// Before the `pairs` random pairs, every coordinate axis is probed with the
/// antipodal pair `(-e_k/2, e_k/2)`, which catches densities that are too steep
/// along an axis. Passing is a necessary condition only.
pub fn verify_density_class<R: Rng + ?Sized>(
    rho: &DensityOracle,
    pairs: usize,
    rng: &mut R,
) -> Result<ClassCheck> {
    if pairs == 0 {
        return Err(out_of_range("pairs", 0.0, "pairs >= 1"));
    }
    let d = rho.dimension();
    let mut checked = 0;
    let axis_pairs = (0..d).map(|k| {
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        x[k] = -0.5;
        y[k] = 0.5;
        (x, y)
    });
    let random_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| (uniform_ball_sample(d, rng), uniform_ball_sample(d, rng)))
        .collect();

    for (x, y) in axis_pairs.chain(random_pairs) {
        checked += 1;
        let lx = finite_log(rho, &x)?;
        let ly = finite_log(rho, &y)?;
        let dist = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let excess = (lx - ly).abs() - rho.alpha() * dist;
        if excess > CLASS_CHECK_SLACK {
            return Ok(ClassCheck {
                holds: false,
                pairs_checked: checked,
                violation: Some(ClassViolation {
                    kind: ClassViolationKind::Lipschitz,
                    x,
                    y,
                    excess,
                }),
            });
        }
        if rho.logconcave_claimed() {
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let lm = finite_log(rho, &mid)?;
            let excess = 0.5 * (lx + ly) - lm;
            if excess > CLASS_CHECK_SLACK {
                return Ok(ClassCheck {
                    holds: false,
                    pairs_checked: checked,
                    violation: Some(ClassViolation {
                        kind: ClassViolationKind::Concavity,
                        x,
                        y,
                        excess,
                    }),
                });
            }
        }
    }
    Ok(ClassCheck {
        holds: true,
        pairs_checked: checked,
        violation: None,
    })
}

fn finite_log(rho: &DensityOracle, x: &[f64]) -> Result<f64> {
    let v = rho.log_eval(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OutOfRange {
            name: "log rho",
            value: v,
            expected: "finite (rho positive)",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    #[test]
    fn parse_densities() {
        let u = DensityOracle::parse("uniform", 3).unwrap();
        assert_eq!((u.dimension(), u.alpha()), (3, 0.0));
        assert_eq!(u.log_eval(&[0.1, 0.2, 0.3]), 0.0);

        let e = DensityOracle::parse("explin:3,4", 2).unwrap();
        assert_eq!(e.alpha(), 5.0);
        assert_eq!(e.log_eval(&[1.0, 1.0]), 7.0);

        let g = DensityOracle::parse("gauss:1.5", 4).unwrap();
        assert_eq!(g.alpha(), 3.0);
        assert_eq!(g.log_eval(&[1.0, 0.0, 1.0, 0.0]), -3.0);

        for bad in [
            "",
            "explin:1",
            "explin:1,x",
            "gauss",
            "gauss:inf",
            "normal:1",
            "uniform:2",
        ] {
            assert!(DensityOracle::parse(bad, 2).is_err(), "{bad}");
        }
    }

    #[test]
    fn parse_integrands() {
        assert_eq!(
            Integrand::parse("one", 2).unwrap(),
            Integrand::Constant(1.0)
        );
        assert_eq!(Integrand::parse("coord:2", 2).unwrap(), Integrand::Coord(1));
        assert_eq!(
            Integrand::parse("coord2:1", 2).unwrap(),
            Integrand::Coord2(0)
        );
        assert_eq!(
            Integrand::parse("halfspace:1,0.25", 3).unwrap(),
            Integrand::HalfSpace {
                coord: 0,
                threshold: 0.25
            }
        );
        for bad in ["coord:0", "coord:3", "coord2", "halfspace:1", "two"] {
            assert!(Integrand::parse(bad, 2).is_err(), "{bad}");
        }
        let h = Integrand::parse("halfspace:2,0", 2).unwrap();
        assert_eq!(h.eval(&[0.9, -0.1]), 1.0);
        assert_eq!(h.eval(&[0.9, 0.1]), 0.0);
        assert_eq!(Integrand::Coord2(1).eval(&[0.5, -0.5]), 0.25);
    }

    #[test]
    fn non_positive_density_is_reported() {
        let rho = DensityOracle::from_fn(1, 0.0, true, |x: &[f64]| x[0]).unwrap();
        assert!(matches!(
            rho.checked_log_eval(&[-0.5], 17),
            Err(Error::Density { step: 17, .. })
        ));
        assert!(rho.checked_log_eval(&[0.5], 0).is_ok());
    }

    #[test]
    fn class_check_examples() {
        let mut rng = rng_from_seed(3);
        let flat = DensityOracle::uniform(3).unwrap();
        assert!(verify_density_class(&flat, 500, &mut rng).unwrap().holds);

        let tilted = DensityOracle::exp_linear(vec![1.0, -2.0, 0.5]).unwrap();
        assert!(verify_density_class(&tilted, 2000, &mut rng).unwrap().holds);

        let steep = DensityOracle::from_log_fn(2, 1.0, true, |x: &[f64]| 2.0 * x[0]).unwrap();
        let check = verify_density_class(&steep, 10, &mut rng).unwrap();
        assert!(!check.holds);
        let v = check.violation.unwrap();
        assert_eq!(v.kind, ClassViolationKind::Lipschitz);
        // The first probe is the x1 axis.
        assert_eq!((v.x, v.y), (vec![-0.5, 0.0], vec![0.5, 0.0]));
        assert!((v.excess - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_check_detects_non_concavity() {
        let mut rng = rng_from_seed(4);
        // log rho = ||x||^2 is convex, Lipschitz with constant 2 on the ball.
        let bowl = DensityOracle::gaussian(2, -1.0).unwrap();
        assert!(!bowl.logconcave_claimed());
        assert!(verify_density_class(&bowl, 200, &mut rng).unwrap().holds);

        let lying = DensityOracle::from_log_fn(2, 2.0, true, |x: &[f64]| x[0] * x[0] + x[1] * x[1])
            .unwrap();
        let check = verify_density_class(&lying, 200, &mut rng).unwrap();
        assert_eq!(check.violation.unwrap().kind, ClassViolationKind::Concavity);
    }

    #[test]
    fn class_check_rejects_non_finite_values() {
        let mut rng = rng_from_seed(5);
        let broken = DensityOracle::from_fn(1, 0.0, true, |_: &[f64]| 0.0).unwrap();
        assert!(verify_density_class(&broken, 5, &mut rng).is_err());
        assert!(verify_density_class(&DensityOracle::uniform(1).unwrap(), 0, &mut rng).is_err());
    }
}
