// SPDX-License-Identifier: Apache-2.0

//! Maximisation of a sampled log-likelihood ratio inside a trust region.
//!
//! The region is the unit ball of a norm `N`, so radial scaling maps any
//! point onto it.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of an objective at a point.
pub struct Eval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Step {
    pub delta: DVector<f64>,
    pub value: f64,
    /// The maximiser sits on the trust-region boundary.
    pub clipped: bool,
}

fn project(v: DVector<f64>, norm: &impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    let r = norm(&v);
    if r > 1.0 {
        v / r
    } else {
        v
    }
}

/// Central-difference gradient of `norm` at `v`.
fn norm_gradient(v: &DVector<f64>, norm: &impl Fn(&DVector<f64>) -> f64) -> DVector<f64> {
    let h = 1e-7 * v.amax().max(1e-3);
    DVector::from_fn(v.len(), |k, _| {
        let mut hi = v.clone();
        let mut lo = v.clone();
        hi[k] += h;
        lo[k] -= h;
        (norm(&hi) - norm(&lo)) / (2.0 * h)
    })
}

/// Maximises `f(delta)` over `norm(delta) ≤ 1`, starting from `delta = 0`.
///
/// Tries a Newton step when `-H` is positive definite and a gradient step to
/// the boundary otherwise or when the Newton step fails. On the boundary the
/// gradient's tangential part is tried too, since radial scaling alone cannot
/// move along it. Each candidate is scaled back into the region and
/// backtracked until the objective increases.
pub fn maximize_in_region(dim: usize, norm: impl Fn(&DVector<f64>) -> f64, f: impl Fn(&DVector<f64>) -> Eval) -> Step {
    let mut delta = DVector::zeros(dim);
    let mut cur = f(&delta);
    for _ in 0..200 {
        if cur.grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let mut dirs = Vec::with_capacity(2);
        if let Some(ch) = (-&cur.hess).cholesky() {
            dirs.push(ch.solve(&cur.grad));
        }
        dirs.push(&cur.grad / norm(&cur.grad));
        if norm(&delta) >= 1.0 - 1e-7 {
            let n = norm_gradient(&delta, &norm);
            let nn = n.norm_squared();
            if nn > 0.0 {
                let tangent = &cur.grad - &n * (cur.grad.dot(&n) / nn);
                let size = norm(&tangent);
                if size > 0.0 {
                    dirs.push(tangent / size);
                }
            }
        }
        let mut accepted = None;
        'dirs: for dir in &dirs {
            let mut t = 1.0;
            while t > 1e-12 {
                let cand = project(&delta + dir * t, &norm);
                let e = f(&cand);
                if e.value.is_finite() && e.value > cur.value {
                    accepted = Some((cand, e));
                    break 'dirs;
                }
                t *= 0.5;
            }
        }
        let Some((cand, e)) = accepted else { break };
        let gain = e.value - cur.value;
        let moved = (&cand - &delta).norm();
        delta = cand;
        cur = e;
        if gain < 1e-13 || moved < 1e-12 {
            break;
        }
    }
    let clipped = norm(&delta) >= 1.0 - 1e-7;
    Step {
        delta,
        value: cur.value,
        clipped,
    }
}
