//! Offline spectral oracle: matrix-free power iteration on `XᵀX` and its
//! deflation `P XᵀX P`, `P = I - v*v*ᵀ`.

use serde::{Deserialize, Serialize};

use super::{dot, norm, project_out, scale, Prng, StreamMatrix, UnitVec};
use crate::error::{Error, Result};

/// Default relative eigen-residual.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Relative gap `(λ₁ - λ₂) / λ₁` below which the top eigenvector is treated
/// as undefined.
pub const DEGENERATE_GAP: f64 = 1e-6;

/// Seed of the fixed starting vector. Keeps the oracle a pure function.
const START_SEED: u64 = 0x05ee_d0f0_ac1e;

/// Residuals below this multiple of machine epsilon times the operator
/// scale are rounding noise and count as converged.
const ROUNDING_FLOOR: f64 = 1e3 * f64::EPSILON;

pub fn default_max_iters(d: usize) -> usize {
    let d = d as f64;
    (10.0 * d * d.ln()).ceil() as usize + 10_000
}

/// A symmetric positive semidefinite linear map applied without forming it.
pub trait SymOperator {
    fn dim(&self) -> usize;

    /// `out = A v`; `out` is overwritten.
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

/// `v ↦ Xᵀ(Xv)`.
impl SymOperator for StreamMatrix {
    fn dim(&self) -> usize {
        self.d()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for r in self.rows() {
            let c = dot(r, v);
            if c != 0.0 {
                super::axpy(c, r, out);
            }
        }
    }
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    d: usize,
    data: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(d: usize) -> Self {
        DenseSym {
            d,
            data: vec![0.0; d * d],
        }
    }

    pub fn from_row_major(d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), d * d);
        DenseSym { d, data }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    /// `self += alpha * x xᵀ`
    pub fn rank_one_update(&mut self, alpha: f64, x: &[f64]) {
        let d = self.d;
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                super::axpy(alpha * xi, x, &mut self.data[i * d..(i + 1) * d]);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}

impl SymOperator for DenseSym {
    fn dim(&self) -> usize {
        self.d
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.d)) {
            *o = dot(row, v);
        }
    }
}

/// `P A P` with `P` projecting away from a unit direction.
struct Deflated<'a, O: ?Sized> {
    op: &'a O,
    dir: &'a [f64],
}

impl<O: SymOperator + ?Sized> SymOperator for Deflated<'_, O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let mut pv = v.to_vec();
        project_out(self.dir, &mut pv);
        self.op.apply(&pv, out);
        project_out(self.dir, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
}

enum Iterated {
    Converged(Eigenpair),
    /// The operator annihilated the iterate: its top eigenvalue is zero at
    /// the given scale.
    Zero,
    Stalled {
        iters: usize,
        residual: f64,
    },
}

/// Plain power iteration with a Rayleigh-quotient residual test.
///
/// Stops when `‖Av - λv‖ ≤ max(tol·λ, floor)` where `floor` is rounding
/// noise relative to `scale` (the largest eigenvalue of the undeflated
/// operator, or `λ` itself when that is not known yet).
fn power_iterate<O: SymOperator + ?Sized>(
    op: &O,
    mut v: Vec<f64>,
    tol: f64,
    max_iters: usize,
    scale_hint: Option<f64>,
) -> Iterated {
    let d = op.dim();
    let nv = norm(&v);
    if nv == 0.0 {
        return Iterated::Zero;
    }
    scale(1.0 / nv, &mut v);
    let mut w = vec![0.0; d];
    let mut residual = f64::INFINITY;
    for it in 0..max_iters {
        op.apply(&v, &mut w);
        let wn = norm(&w);
        let scale_ref = scale_hint.unwrap_or(wn);
        if wn <= ROUNDING_FLOOR * scale_ref || wn == 0.0 {
            return Iterated::Zero;
        }
        let lambda = dot(&v, &w);
        let r: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        residual = r / lambda.abs().max(f64::MIN_POSITIVE);
        if r <= tol * lambda.abs() || r <= ROUNDING_FLOOR * scale_ref {
            return Iterated::Converged(Eigenpair {
                value: lambda,
                vector: v,
                iterations: it + 1,
            });
        }
        v.copy_from_slice(&w);
        scale(1.0 / wn, &mut v);
    }
    Iterated::Stalled {
        iters: max_iters,
        residual,
    }
}

fn start_vector(d: usize) -> Vec<f64> {
    Prng::new(START_SEED).gaussian_vec(d)
}

/// Top eigenpair of a symmetric PSD operator.
pub fn top_eigenpair<O: SymOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iters: usize,
) -> Result<Eigenpair> {
    assert!(tol > 0.0, "tol must be positive");
    match power_iterate(op, start_vector(op.dim()), tol, max_iters, None) {
        Iterated::Converged(mut p) => {
            p.vector = UnitVec::normalize(p.vector)?.canonical_sign().into_inner();
            Ok(p)
        }
        Iterated::Zero => Err(Error::ZeroMatrix),
        Iterated::Stalled { iters, residual } => Err(Error::NoConvergence { iters, residual }),
    }
}

/// `‖P A P‖` for `P = I - dir dirᵀ`, by deflated power iteration. `scale` is
/// the top eigenvalue of `A`; results below rounding noise relative to it
/// are reported as zero.
pub fn deflated_norm<O: SymOperator + ?Sized>(
    op: &O,
    dir: &[f64],
    scale: f64,
    tol: f64,
    max_iters: usize,
) -> Result<f64> {
    let deflated = Deflated { op, dir };
    let mut start = start_vector(op.dim());
    project_out(dir, &mut start);
    match power_iterate(&deflated, start, tol, max_iters, Some(scale)) {
        Iterated::Converged(p) => Ok(p.value.max(0.0)),
        Iterated::Zero => Ok(0.0),
        Iterated::Stalled { iters, residual } => Err(Error::NoConvergence { iters, residual }),
    }
}

/// Ground truth for one stream: the top two eigenvalues of `XᵀX`, the top
/// eigenvector and the spectral ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda1: f64,
    pub lambda2: f64,
    pub vstar: UnitVec,
    /// `λ₁ / λ₂`, infinite when `λ₂ = 0`.
    #[serde(with = "crate::format::float_or_inf")]
    pub ratio: f64,
}

impl SpectralSummary {
    /// `λ₁ / n`, the top eigenvalue of the sample covariance.
    pub fn covariance_lambda1(&self, n: usize) -> f64 {
        self.lambda1 / n as f64
    }

    pub fn covariance_lambda2(&self, n: usize) -> f64 {
        self.lambda2 / n as f64
    }
}

pub fn top_two_eigs_op<O: SymOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iters: usize,
) -> Result<SpectralSummary> {
    let top = top_eigenpair(op, tol, max_iters)?;
    let lambda1 = top.value;
    let lambda2 = deflated_norm(op, &top.vector, lambda1, tol, max_iters)?;
    if (lambda1 - lambda2) / lambda1 < DEGENERATE_GAP {
        return Err(Error::DegenerateGap { lambda1, lambda2 });
    }
    let ratio = if lambda2 == 0.0 {
        f64::INFINITY
    } else {
        lambda1 / lambda2
    };
    Ok(SpectralSummary {
        lambda1,
        lambda2,
        vstar: UnitVec::new(top.vector)?,
        ratio,
    })
}

/// Top two eigenvalues and the top eigenvector of `XᵀX`, matrix-free.
///
/// Fails with [`Error::ZeroMatrix`] on an all-zero stream and with
/// [`Error::DegenerateGap`] when `λ₁` and `λ₂` agree to a relative `1e-6`.
/// The returned eigenvector has its first non-negligible coordinate positive.
pub fn top_two_eigs(x: &StreamMatrix, tol: f64, max_iters: usize) -> Result<SpectralSummary> {
    if x.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    top_two_eigs_op(x, tol, max_iters)
}

/// `(σ₁, σ₂) = (η λ₁, η ‖P XᵀX P‖)` with `P` built from `summary.vstar`.
///
/// `summary` may come from a longer stream than `x`; `P` is then the full
/// stream's projection, which is what the lemma monitors need.
pub fn sigma_pair(
    x: &StreamMatrix,
    eta: f64,
    summary: &SpectralSummary,
    tol: f64,
) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    if summary.vstar.dim() != x.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            got: summary.vstar.dim(),
        });
    }
    let max_iters = default_max_iters(x.d());
    let residual = deflated_norm(x, summary.vstar.as_slice(), summary.lambda1, tol, max_iters)?;
    Ok((eta * summary.lambda1, eta * residual))
}

/// `1 - ⟨v, w⟩²`, the squared sine of the angle between two unit vectors.
pub fn sin2_error(v: &UnitVec, w: &UnitVec) -> f64 {
    assert_eq!(v.dim(), w.dim(), "dimension mismatch");
    let c = dot(v.as_slice(), w.as_slice());
    (1.0 - c * c).clamp(0.0, 1.0)
}

/// Uniform point on `S^{d-1}`: a normalized standard Gaussian vector.
pub fn random_unit(d: usize, rng: &mut Prng) -> UnitVec {
    assert!(d >= 1, "dimension must be at least 1");
    loop {
        if let Ok(u) = UnitVec::normalize(rng.gaussian_vec(d)) {
            return u;
        }
    }
}
