use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::la::StreamMatrix;

/// Both sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    #[serde(with = "crate::format::sig17")]
    pub lhs: f64,
    #[serde(with = "crate::format::sig17")]
    pub rhs: f64,
}

impl Inequality {
    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// `∑ aᵢ b_{i-1} ≤ b_n - 1` with `bᵢ = exp(a₁ + … + aᵢ)`, `b₀ = 1`.
pub fn check_prodab(a: &[f64]) -> Result<Inequality> {
    if let Some(i) = a.iter().position(|&v| v.is_nan() || v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "entry {i} is negative or NaN: {}",
            a[i]
        )));
    }
    let mut prefix = 0.0f64;
    let mut lhs = 0.0;
    for &ai in a {
        lhs += ai * prefix.exp();
        prefix += ai;
    }
    Ok(Inequality {
        lhs,
        rhs: prefix.exp_m1(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxaCheck {
    pub sides: Inequality,
    /// Share `a² / (a² + b²)` at which the left side reaches the right.
    #[serde(with = "crate::format::sig17")]
    pub equality_point: f64,
}

/// `A a² + B a b ≤ (a² + b²)/2 · (A + √(A² + B²))` for `A, B > 0`.
pub fn check_maxa(big_a: f64, big_b: f64, a: f64, b: f64) -> Result<MaxaCheck> {
    if !(big_a > 0.0 && big_b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coefficients must be positive, got {big_a} and {big_b}"
        )));
    }
    let hyp = big_a.hypot(big_b);
    Ok(MaxaCheck {
        sides: Inequality {
            lhs: big_a * a * a + big_b * a * b,
            rhs: 0.5 * (a * a + b * b) * (big_a + hyp),
        },
        equality_point: 0.5 * (1.0 + big_a / hyp),
    })
}

fn columns(a: &StreamMatrix) -> Vec<Vec<f64>> {
    (0..a.d())
        .map(|j| a.rows().map(|r| r[j]).collect())
        .collect()
}

fn dist2(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn require_zero_first_column(a: &StreamMatrix) -> Result<()> {
    if a.rows().any(|r| r[0] != 0.0) {
        return Err(Error::InvalidParameter("first column must be zero".into()));
    }
    Ok(())
}

/// Dyadic sampling bound for a matrix whose column 0 is zero.
///
/// `lhs = ∑ᵢ maxⱼ Aᵢⱼ²`. For each level `k` the columns `0, 2ᵏ, 2·2ᵏ, …`
/// (while in range) form a chain; `rhs` is `1 + ⌈log₂ m⌉` times the total
/// squared increment over all chains, `m` the number of nonzero-index
/// columns. Columns are never reordered.
pub fn check_matsample(a: &StreamMatrix) -> Result<Inequality> {
    require_zero_first_column(a)?;
    let lhs = a
        .rows()
        .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v * v)))
        .sum();
    let last = a.d() - 1;
    if last == 0 {
        return Ok(Inequality { lhs, rhs: 0.0 });
    }
    let cols = columns(a);
    let levels = usize::BITS - last.leading_zeros();
    let mut total = 0.0;
    for k in 0..levels {
        let step = 1usize << k;
        let mut prev = 0;
        let mut j = step;
        while j <= last {
            total += dist2(&cols[j], &cols[prev]);
            prev = j;
            j += step;
        }
    }
    let factor = 1.0 + (last as f64).log2().ceil();
    Ok(Inequality {
        lhs,
        rhs: factor * total,
    })
}

/// Largest `∑ₜ ‖col(jₜ) - col(jₜ₋₁)‖²` over increasing column chains
/// starting at column 0. `O(m²·rows)`.
pub fn max_subsequence_sum(a: &StreamMatrix) -> Result<f64> {
    require_zero_first_column(a)?;
    let cols = columns(a);
    let mut best = vec![0.0f64; cols.len()];
    for j in 1..cols.len() {
        best[j] = (0..j)
            .into_par_iter()
            .map(|i| best[i] + dist2(&cols[j], &cols[i]))
            .reduce(|| f64::NEG_INFINITY, f64::max);
    }
    Ok(best.into_iter().fold(0.0, f64::max))
}
