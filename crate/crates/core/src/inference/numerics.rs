// SPDX-License-Identifier: Apache-2.0

//! Importance-weighted moments and small dense linear algebra.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::mcmc::SampleSet;

/// `log((1/M) Σ exp(a_i))`.
pub fn log_mean_exp(a: &[f64]) -> f64 {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = a.iter().map(|v| (v - max).exp()).sum();
    max + (s / a.len() as f64).ln()
}

/// Sample statistics as an `M x q` matrix with every row shifted by `-center`.
#[derive(Clone, Debug)]
pub struct Centered {
    rows: DMatrix<f64>,
}

impl Centered {
    pub fn new(sample: &SampleSet, center: &[f64]) -> Self {
        let q = sample.dim();
        let rows = DMatrix::from_fn(sample.len(), q, |i, k| sample.row(i)[k] - center[k]);
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Per-coordinate minimum and maximum.
    pub fn range(&self, k: usize) -> (f64, f64) {
        let c = self.rows.column(k);
        (c.min(), c.max())
    }

    /// Log-mean-exp of `delta · row_i` together with the tilted mean and
    /// covariance under weights `w_i ∝ exp(delta · row_i)`.
    pub fn tilt(&self, delta: &DVector<f64>) -> Tilt {
        let a = &self.rows * delta;
        let lme = log_mean_exp(a.as_slice());
        let max = a.max();
        let mut w = a.map(|v| (v - max).exp());
        let total = w.sum();
        w /= total;
        let mean = self.rows.tr_mul(&w);
        let q = self.dim();
        let mut cov = DMatrix::zeros(q, q);
        for (i, row) in self.rows.row_iter().enumerate() {
            let d = row.transpose() - &mean;
            cov.ger(w[i], &d, &d, 1.0);
        }
        let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
        Tilt { lme, mean, cov, ess }
    }
}

/// Mean of a chain and the estimated covariance of that mean by batch means.
#[derive(Clone, Debug)]
pub struct BatchMeans {
    pub mean: DVector<f64>,
    pub var: DMatrix<f64>,
    pub batches: usize,
}

impl Centered {
    /// Batch-means estimate of the sampling covariance of the row mean,
    /// using `floor(sqrt(M))` batches of consecutive rows.
    pub fn batch_means(&self) -> BatchMeans {
        let m = self.len();
        let q = self.dim();
        let b = ((m as f64).sqrt().floor() as usize).max(2).min(m);
        let size = m / b;
        let used = size * b;
        let mut means = DMatrix::zeros(b, q);
        for i in 0..used {
            for k in 0..q {
                means[(i / size, k)] += self.rows[(i, k)] / size as f64;
            }
        }
        let mean = DVector::from_fn(q, |k, _| means.column(k).mean());
        let mut var = DMatrix::zeros(q, q);
        for r in means.row_iter() {
            let d = r.transpose() - &mean;
            var.ger(1.0 / ((b - 1) as f64 * b as f64), &d, &d, 1.0);
        }
        BatchMeans { mean, var, batches: b }
    }
}

/// p-value of a Hotelling test that `diff` is zero, given the estimated
/// covariance `var` of `diff` from `batches` batch means.
///
/// Directions where `var` is numerically zero are dropped from the test.
/// Uses the F reference when `batches` exceeds the rank, chi-square otherwise.
pub fn hotelling_p(diff: &DVector<f64>, var: &DMatrix<f64>, batches: usize) -> f64 {
    let sym = (var + var.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return if diff.iter().all(|&d| d == 0.0) { 1.0 } else { 0.0 };
    }
    let mut t2 = 0.0;
    let mut rank = 0usize;
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 1e-12 * top {
            t2 += eig.eigenvectors.column(k).dot(diff).powi(2) / l;
            rank += 1;
        }
    }
    let r = rank as f64;
    if batches > rank + 1 {
        let n = batches as f64;
        let f = t2 * (n - r) / (r * (n - 1.0));
        let dist = FisherSnedecor::new(r, n - r).expect("positive degrees of freedom");
        dist.sf(f)
    } else {
        ChiSquared::new(r).expect("positive degrees of freedom").sf(t2)
    }
}

#[derive(Clone, Debug)]
pub struct Tilt {
    pub lme: f64,
    /// Weighted mean of the centred rows.
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Kish effective sample size of the weights.
    pub ess: f64,
}

/// Floors the eigenvalues of a symmetric matrix at `floor`.
///
/// Returns the repaired matrix and whether any eigenvalue was below `floor`.
pub fn floor_eigen(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return (sym, false);
    }
    let vals = eig.eigenvalues.map(|l| l.max(floor));
    let fixed = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (fixed, true)
}

/// Inverse of an information matrix and the square roots of its diagonal.
///
/// Non-positive-definite input is repaired by eigenvalue flooring first; the
/// flag reports whether that happened.
pub fn invert_information(info: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, bool) {
    let (fixed, floored) = floor_eigen(info, 1e-8);
    let inv = match fixed.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => fixed.pseudo_inverse(1e-12).expect("symmetric matrix"),
    };
    let se = (0..inv.nrows()).map(|k| inv[(k, k)].max(0.0).sqrt()).collect();
    (inv, se, floored)
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
