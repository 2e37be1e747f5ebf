//! Dense vector primitives, the stream matrix, seeded randomness and the
//! offline spectral oracle shared by every other module.
//!
//! Eigenvalues throughout the crate refer to the unnormalized Gram matrix
//! `XᵀX`, not the sample covariance `XᵀX / n`. Divide by `n` to convert.

mod eigen;
mod quantize;
mod rng;

pub use eigen::{
    default_max_iters, deflated_norm, random_unit, sigma_pair, sin2_error, top_eigenpair,
    top_two_eigs, top_two_eigs_op, DenseSym, Eigenpair, SpectralSummary, SymOperator, DEFAULT_TOL,
    DEGENERATE_GAP,
};
pub use quantize::{quantize, quantize_scalar, FULL_PRECISION};
pub use rng::Prng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm2(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Removes the component along the unit vector `dir` in place.
#[inline]
pub fn project_out(dir: &[f64], v: &mut [f64]) {
    let c = dot(dir, v);
    axpy(-c, dir, v);
}

/// A vector on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVec(Vec<f64>);

impl UnitVec {
    pub const TOLERANCE: f64 = 1e-12;

    /// Wraps a vector that is already unit length to within [`Self::TOLERANCE`].
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        check_finite(&v)?;
        let n = norm(&v);
        if (n - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::NotUnit { norm: n });
        }
        Ok(UnitVec(v))
    }

    pub fn normalize(mut v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        check_finite(&v)?;
        let n = norm(&v);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        v.iter_mut().for_each(|c| *c /= n);
        Ok(UnitVec(v))
    }

    pub fn basis(d: usize, i: usize) -> Self {
        assert!(i < d, "basis index {i} out of range for dimension {d}");
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        UnitVec(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Flips the sign so the first coordinate of non-negligible magnitude is
    /// positive. Coordinates below `1e-8` are treated as zero so round-off
    /// cannot decide the sign.
    pub fn canonical_sign(mut self) -> Self {
        if let Some(&c) = self.0.iter().find(|c| c.abs() > 1e-8) {
            if c < 0.0 {
                scale(-1.0, &mut self.0);
            }
        }
        self
    }
}

impl TryFrom<Vec<f64>> for UnitVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVec::new(v)
    }
}

impl From<UnitVec> for Vec<f64> {
    fn from(u: UnitVec) -> Self {
        u.0
    }
}

impl AsRef<[f64]> for UnitVec {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// An ordered sequence of `n` rows in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl StreamMatrix {
    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "stream needs n >= 1 and d >= 1 (got n = {n}, d = {d})"
            )));
        }
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(StreamMatrix { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(rows.len(), d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn max_row_norm2(&self) -> f64 {
        self.rows().map(norm2).fold(0.0, f64::max)
    }

    pub fn frobenius2(&self) -> f64 {
        norm2(&self.data)
    }

    /// First `m` rows.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidParameter(format!(
                "prefix length {m} outside 1..={}",
                self.n
            )));
        }
        Ok(StreamMatrix {
            n: m,
            d: self.d,
            data: self.data[..m * self.d].to_vec(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        StreamMatrix {
            n: self.n,
            d: self.d,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// Rows in the given order; `order` must be a permutation of `0..n`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.n);
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        StreamMatrix {
            n: self.n,
            d: self.d,
            data,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &StreamMatrix) -> Result<Self> {
        if other.d != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(StreamMatrix {
            n: self.n + other.n,
            d: self.d,
            data,
        })
    }

    /// Dense `XᵀX`, row-major `d × d`.
    pub fn gram(&self) -> DenseSym {
        let d = self.d;
        let mut g = vec![0.0; d * d];
        for r in self.rows() {
            for (i, &ri) in r.iter().enumerate() {
                if ri == 0.0 {
                    continue;
                }
                axpy(ri, r, &mut g[i * d..(i + 1) * d]);
            }
        }
        DenseSym::from_row_major(d, g)
    }
}
