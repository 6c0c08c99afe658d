//! Finite-state Markov kernels.
//!
//! A [`DiscreteKernel`] is a row-stochastic matrix: row `i` is the law of the
//! next state given the current state `i`. Distributions are row vectors
//! ([`ProbabilityVector`]) and functions on states are column vectors
//! ([`StateFunction`]); the Markov operator acts on the latter,
//! `(Pf)(i) = sum_j K[i][j] f(j)`.
//!
//! Inner products and norms of state functions are weighted by a
//! distribution `pi`, so `<f, g>_pi = sum_i pi_i f(i) g(i)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{IDENTITY_TOL, STOCHASTIC_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: Vec<f64>,
}

/// Which pi-weighted norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    /// Essential supremum over states with positive pi mass.
    Sup,
}

impl DiscreteKernel {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let s = matrix.nrows();
        if s == 0 {
            return Err(Error::InvalidKernel(
                "kernel needs at least one state".into(),
            ));
        }
        if matrix.ncols() != s {
            return Err(Error::InvalidKernel(format!(
                "matrix is {}x{}, expected square",
                s,
                matrix.ncols()
            )));
        }
        for i in 0..s {
            let mut sum = 0.0;
            for j in 0..s {
                let p = matrix[(i, j)];
                if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p) {
                    return Err(Error::InvalidKernel(format!(
                        "entry ({i}, {j}) = {p} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidKernel(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != s) {
            return Err(Error::InvalidKernel(format!(
                "row {i} has {} entries, expected {s}",
                row.len()
            )));
        }
        Self::new(DMatrix::from_fn(s, s, |i, j| rows[i][j]))
    }

    pub fn identity(size: usize) -> Self {
        assert!(size >= 1, "kernel needs at least one state");
        Self {
            matrix: DMatrix::identity(size, size),
        }
    }

    /// The kernel whose every row equals `pi` (independent sampling).
    pub fn product(pi: &ProbabilityVector) -> Self {
        let s = pi.len();
        Self {
            matrix: DMatrix::from_fn(s, s, |_, j| pi[j]),
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Matrix power `K^n` by repeated squaring.
    pub fn n_step(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroPower);
        }
        Self::new(matrix_power(&self.matrix, n))
    }

    /// `K/2 + I/2`. Every diagonal entry of the result is at least 1/2.
    pub fn lazify(&self) -> Self {
        let s = self.size();
        let mut m = &self.matrix * 0.5;
        for i in 0..s {
            m[(i, i)] += 0.5;
        }
        Self { matrix: m }
    }

    pub fn is_lazy(&self) -> bool {
        (0..self.size()).all(|i| self.matrix[(i, i)] >= 0.5)
    }

    pub fn apply_operator(&self, f: &StateFunction) -> Result<StateFunction> {
        self.check_dim(f.len())?;
        let v = &self.matrix * DVector::from_column_slice(&f.values);
        Ok(StateFunction {
            values: v.iter().copied().collect(),
        })
    }

    /// One step of a distribution: `(nu K)_j = sum_i nu_i K[i][j]`.
    pub fn push_forward(&self, nu: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(nu.len())?;
        let s = self.size();
        let mut out = vec![0.0; s];
        for (i, &w) in nu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += w * self.matrix[(i, j)];
            }
        }
        Ok(out)
    }

    /// `max_j |(pi K)_j - pi_j|`.
    pub fn stationarity_residual(&self, pi: &ProbabilityVector) -> Result<f64> {
        let moved = self.push_forward(&pi.weights)?;
        Ok(moved
            .iter()
            .zip(&pi.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn check_stationarity(&self, pi: &ProbabilityVector, tol: f64) -> Result<bool> {
        Ok(self.stationarity_residual(pi)? <= tol)
    }

    /// `max_{i,j} |pi_i K[i][j] - pi_j K[j][i]|`.
    pub fn reversibility_residual(&self, pi: &ProbabilityVector) -> Result<f64> {
        self.check_dim(pi.len())?;
        let s = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..s {
            for j in (i + 1)..s {
                let r = (pi[i] * self.matrix[(i, j)] - pi[j] * self.matrix[(j, i)]).abs();
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }

    pub fn check_reversibility(&self, pi: &ProbabilityVector, tol: f64) -> Result<bool> {
        Ok(self.reversibility_residual(pi)? <= tol)
    }

    /// `D^{1/2} K D^{-1/2}` with `D = diag(pi)`, symmetrized to remove rounding
    /// asymmetry. Requires a reversible pair with strictly positive `pi`.
    pub fn symmetrized(&self, pi: &ProbabilityVector) -> Result<DMatrix<f64>> {
        self.check_dim(pi.len())?;
        pi.require_positive()?;
        let residual = self.reversibility_residual(pi)?;
        if residual > IDENTITY_TOL {
            return Err(Error::NotReversible { residual });
        }
        let s = self.size();
        let root: Vec<f64> = pi.weights.iter().map(|p| p.sqrt()).collect();
        let a = DMatrix::from_fn(s, s, |i, j| root[i] * self.matrix[(i, j)] / root[j]);
        Ok((&a + a.transpose()) * 0.5)
    }

    /// Eigenvalues of the Markov operator on `L_2(pi)`, ascending.
    pub fn spectrum(&self, pi: &ProbabilityVector) -> Result<Vec<f64>> {
        let sym = self.symmetrized(pi)?;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        Ok(ev)
    }

    /// True iff `<Pf, f>_pi >= -tol ||f||^2` for all `f`, i.e. the smallest
    /// eigenvalue of the symmetrized operator is at least `-tol`.
    pub fn check_operator_psd(&self, pi: &ProbabilityVector, tol: f64) -> Result<bool> {
        Ok(self.spectrum(pi)?[0] >= -tol)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found,
            });
        }
        Ok(())
    }
}

pub(crate) fn matrix_power(m: &DMatrix<f64>, mut n: usize) -> DMatrix<f64> {
    let s = m.nrows();
    let mut result = DMatrix::identity(s, s);
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidDistribution(format!("weight {i} = {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size >= 1);
        Self {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, state: usize) -> Self {
        let mut weights = vec![0.0; size];
        weights[state] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self, states: impl IntoIterator<Item = usize>) -> f64 {
        states.into_iter().map(|i| self.weights[i]).sum()
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.weights.iter().position(|&w| w <= 0.0) {
            Some(state) => Err(Error::NullState { state }),
            None => Ok(()),
        }
    }

    /// `||d nu / d pi||_inf = max_i nu_i / pi_i`, never below 1.
    pub fn density_bound(&self, pi: &ProbabilityVector) -> Result<f64> {
        if self.len() != pi.len() {
            return Err(Error::DimensionMismatch {
                expected: pi.len(),
                found: self.len(),
            });
        }
        pi.require_positive()?;
        let m = self
            .weights
            .iter()
            .zip(&pi.weights)
            .map(|(n, p)| n / p)
            .fold(0.0, f64::max);
        Ok(m.max(1.0))
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidFunction("empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction(format!("value {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(size: usize, c: f64) -> Self {
        Self {
            values: vec![c; size],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `S(f) = sum_i pi_i f(i)`.
    pub fn mean(&self, pi: &ProbabilityVector) -> f64 {
        self.values
            .iter()
            .zip(pi.weights())
            .map(|(f, p)| f * p)
            .sum()
    }

    /// `g = f - S(f)`, the mean-zero part.
    pub fn centered(&self, pi: &ProbabilityVector) -> Self {
        let m = self.mean(pi);
        Self {
            values: self.values.iter().map(|v| v - m).collect(),
        }
    }

    pub fn inner(&self, other: &StateFunction, pi: &ProbabilityVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(pi.weights())
            .map(|((a, b), p)| p * a * b)
            .sum()
    }

    pub fn norm(&self, pi: &ProbabilityVector, norm: Norm) -> f64 {
        let pairs = self.values.iter().zip(pi.weights());
        match norm {
            Norm::L1 => pairs.map(|(v, p)| p * v.abs()).sum(),
            Norm::L2 => pairs.map(|(v, p)| p * v * v).sum::<f64>().sqrt(),
            Norm::Sup => pairs
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| v.abs())
                .fold(0.0, f64::max),
        }
    }
}

impl std::ops::Index<usize> for StateFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// JSON exchange form `{"matrix": [[...]], "pi": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

impl KernelDocument {
    pub fn new(kernel: &DiscreteKernel, pi: Option<&ProbabilityVector>) -> Self {
        Self {
            matrix: kernel.rows(),
            pi: pi.map(|p| p.weights().to_vec()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn kernel(&self) -> Result<DiscreteKernel> {
        DiscreteKernel::from_rows(&self.matrix)
    }

    pub fn distribution(&self) -> Result<Option<ProbabilityVector>> {
        self.pi.clone().map(ProbabilityVector::new).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(rows: &[&[f64]]) -> DiscreteKernel {
        DiscreteKernel::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &DiscreteKernel, b: &DiscreteKernel, tol: f64) -> bool {
        (a.matrix() - b.matrix()).amax() <= tol
    }

    #[test]
    fn validation_rejects_bad_kernels() {
        assert!(DiscreteKernel::from_rows(&[]).is_err());
        assert!(DiscreteKernel::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(DiscreteKernel::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(DiscreteKernel::from_rows(&[vec![1.0, 0.0]]).is_err());
        assert!(DiscreteKernel::from_rows(&[vec![1.0]]).is_ok());
    }

    #[test]
    fn n_step_examples() {
        let id = DiscreteKernel::identity(3);
        assert_eq!(id.n_step(5).unwrap(), id);

        let flip = k(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(flip.n_step(2).unwrap(), DiscreteKernel::identity(2));

        let sym = k(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let expect = k(&[&[0.625, 0.375], &[0.375, 0.625]]);
        assert!(close(&sym.n_step(2).unwrap(), &expect, 1e-15));

        assert!(matches!(sym.n_step(0), Err(Error::ZeroPower)));
    }

    #[test]
    fn n_step_matches_naive_product() {
        let kk = k(&[&[0.2, 0.3, 0.5], &[0.1, 0.6, 0.3], &[0.4, 0.4, 0.2]]);
        let mut naive = kk.matrix().clone();
        for n in 1..=9 {
            assert!((kk.n_step(n).unwrap().matrix() - &naive).amax() < 1e-14);
            naive = &naive * kk.matrix();
        }
    }

    #[test]
    fn stationarity_examples() {
        let id = DiscreteKernel::identity(2);
        let pi = ProbabilityVector::new(vec![0.3, 0.7]).unwrap();
        assert!(id.check_stationarity(&pi, 1e-12).unwrap());

        let kk = k(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let third = ProbabilityVector::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(kk.check_stationarity(&third, 1e-12).unwrap());

        let half = ProbabilityVector::uniform(2);
        assert!(!kk.check_stationarity(&half, 1e-12).unwrap());
        let r = kk.stationarity_residual(&half).unwrap();
        // pi K = (3/8, 5/8)
        assert_eq!(r, 0.125);

        assert!(matches!(
            kk.check_stationarity(&ProbabilityVector::uniform(3), 1e-12),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reversibility_examples() {
        let sym = k(&[&[0.2, 0.3, 0.5], &[0.3, 0.4, 0.3], &[0.5, 0.3, 0.2]]);
        assert!(sym
            .check_reversibility(&ProbabilityVector::uniform(3), 1e-12)
            .unwrap());

        let cyc = k(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let u = ProbabilityVector::uniform(3);
        assert!(!cyc.check_reversibility(&u, 1e-12).unwrap());
        assert!((cyc.reversibility_residual(&u).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let kk = k(&[&[0.5, 0.5], &[0.25, 0.75]]);
        let third = ProbabilityVector::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(kk.check_reversibility(&third, 1e-12).unwrap());
    }

    #[test]
    fn lazify_examples() {
        assert_eq!(
            DiscreteKernel::identity(2).lazify(),
            DiscreteKernel::identity(2)
        );
        let flip = k(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(flip.lazify(), k(&[&[0.5, 0.5], &[0.5, 0.5]]));
        let kk = k(&[&[0.5, 0.5], &[0.25, 0.75]]);
        assert_eq!(kk.lazify(), k(&[&[0.75, 0.25], &[0.125, 0.875]]));
        assert!(kk.lazify().is_lazy());
        assert!(!flip.is_lazy());
    }

    #[test]
    fn operator_examples() {
        let f = StateFunction::new(vec![1.0, -1.0]).unwrap();
        assert_eq!(DiscreteKernel::identity(2).apply_operator(&f).unwrap(), f);

        let pi = ProbabilityVector::new(vec![0.25, 0.75]).unwrap();
        let avg = DiscreteKernel::product(&pi).apply_operator(&f).unwrap();
        assert_eq!(avg.values(), &[-0.5, -0.5]);

        let sym = k(&[&[0.75, 0.25], &[0.25, 0.75]]);
        assert_eq!(sym.apply_operator(&f).unwrap().values(), &[0.5, -0.5]);
    }

    #[test]
    fn psd_examples() {
        let u = ProbabilityVector::uniform(2);
        let pi = ProbabilityVector::new(vec![0.4, 0.6]).unwrap();
        assert!(DiscreteKernel::identity(2)
            .check_operator_psd(&pi, 1e-12)
            .unwrap());

        let flip = k(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(!flip.check_operator_psd(&u, 1e-12).unwrap());
        let ev = flip.spectrum(&u).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);

        let lazy = flip.lazify();
        assert!(lazy.check_operator_psd(&u, 1e-12).unwrap());
        let ev = lazy.spectrum(&u).unwrap();
        assert!(ev[0].abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);

        let cyc = k(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert!(matches!(
            cyc.check_operator_psd(&ProbabilityVector::uniform(3), 1e-12),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn null_states_are_rejected_for_symmetrization() {
        let pi = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            DiscreteKernel::identity(2).spectrum(&pi),
            Err(Error::NullState { state: 1 })
        ));
    }

    #[test]
    fn weighted_norms() {
        let pi = ProbabilityVector::new(vec![0.5, 0.25, 0.25]).unwrap();
        let f = StateFunction::new(vec![2.0, -4.0, 0.0]).unwrap();
        assert_eq!(f.norm(&pi, Norm::L1), 2.0);
        assert_eq!(f.norm(&pi, Norm::L2), 6.0f64.sqrt());
        assert_eq!(f.norm(&pi, Norm::Sup), 4.0);
        assert_eq!(f.mean(&pi), 0.0);
        let q = ProbabilityVector::new(vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(f.norm(&q, Norm::Sup), 2.0);
    }

    #[test]
    fn document_round_trip() {
        let text = r#"{"matrix": [[0.5, 0.5], [0.25, 0.75]], "pi": [0.3333333333333333, 0.6666666666666666]}"#;
        let doc = KernelDocument::from_json(text).unwrap();
        let kernel = doc.kernel().unwrap();
        let pi = doc.distribution().unwrap().unwrap();
        assert!(kernel.check_reversibility(&pi, 1e-12).unwrap());
        let again =
            KernelDocument::from_json(&KernelDocument::new(&kernel, Some(&pi)).to_json().unwrap())
                .unwrap();
        assert_eq!(again, doc);

        let bare = KernelDocument::from_json(r#"{"matrix": [[1.0]]}"#).unwrap();
        assert!(bare.distribution().unwrap().is_none());
        assert!(!bare.to_json().unwrap().contains("pi"));
    }
}
