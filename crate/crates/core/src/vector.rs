//! Dense real vectors exchanged between workers and the server.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

/// A d-dimensional gradient (honest, crafted or aggregated).
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn zeros(dim: usize) -> Self {
        GradVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for GradVector {
    fn from(v: Vec<f64>) -> Self {
        GradVector(v)
    }
}

impl Deref for GradVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for GradVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

const LANES: usize = 8;

/// Sum of `term(a_i, b_i)` over eight independent accumulators so the loop
/// vectorizes; the lanes are combined in a fixed order.
#[inline(always)]
fn lane_sum(a: &[f64], b: &[f64], term: impl Fn(f64, f64) -> f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] += term(x[k], y[k]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += term(*x, *y);
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |x, y| x * y)
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// Squared Euclidean distance.
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |x, y| (x - y) * (x - y))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Checks that every vector in `grads` has the same dimension and returns it.
pub(crate) fn common_dim(grads: &[GradVector]) -> Result<usize> {
    let first = grads.first().ok_or(Error::Empty("gradient list"))?;
    let dim = first.dim();
    for g in &grads[1..] {
        if g.dim() != dim {
            return Err(Error::DimMismatch { expected: dim, got: g.dim() });
        }
    }
    Ok(dim)
}

/// Arithmetic mean, summed in list order.
pub(crate) fn mean_in_order(grads: &[GradVector]) -> Result<GradVector> {
    let dim = common_dim(grads)?;
    let mut acc = vec![0.0; dim];
    for g in grads {
        for (a, v) in acc.iter_mut().zip(g.iter()) {
            *a += v;
        }
    }
    let n = grads.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(GradVector(acc))
}
