//! Seeded stream constructions with ground-truth metadata: the spiked
//! Gaussian model, adversarial orderings, the two hard instances and the
//! tight matrix for the dyadic sampling inequality.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la::{dot, random_unit, Prng, StreamMatrix, UnitVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSpec {
    Spiked {
        d: usize,
        n: usize,
        #[serde(with = "crate::format::sig17")]
        lambda1_over_n: f64,
        #[serde(with = "crate::format::sig17")]
        lambda2_over_n: f64,
        seed: u64,
    },
    Commutative {
        d: usize,
        counts: Vec<usize>,
    },
    EndRotation {
        d: usize,
        n_bulk: usize,
        #[serde(with = "crate::format::sig17")]
        eta: f64,
        #[serde(with = "crate::format::sig17")]
        sigma2_target: f64,
        seed: u64,
    },
    PartialDuplicate {
        d: usize,
        n: usize,
        k: usize,
        seed: u64,
    },
    MergeableHard {
        d: usize,
        p: usize,
        seed: u64,
    },
    MatsampleTight {
        n: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aux {
    None,
    /// Unit direction of the second-half vector `y`.
    PartialDuplicate {
        #[serde(with = "crate::format::unit_vec")]
        y: UnitVec,
    },
    /// First row of each block and the absolute row index of each planted copy.
    MergeableHard {
        block_starts: Vec<usize>,
        planted_rows: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: Option<UnitVec>,
    pub aux: Aux,
}

impl GroundTruth {
    fn none() -> Self {
        GroundTruth {
            planted: None,
            aux: Aux::None,
        }
    }
}

/// Ground-truth sidecar contents: the spec that produced the stream plus
/// whatever it planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: StreamSpec,
    pub truth: GroundTruth,
    #[serde(default)]
    pub shuffled: Option<u64>,
}

impl StreamSpec {
    pub fn generate(&self) -> Result<(StreamMatrix, GroundTruth)> {
        match *self {
            StreamSpec::Spiked {
                d,
                n,
                lambda1_over_n,
                lambda2_over_n,
                seed,
            } => gen_spiked(d, n, lambda1_over_n, lambda2_over_n, seed),
            StreamSpec::Commutative { d, ref counts } => {
                Ok((gen_commutative(d, counts)?, GroundTruth::none()))
            }
            StreamSpec::EndRotation {
                d,
                n_bulk,
                eta,
                sigma2_target,
                ..
            } => gen_end_rotation(d, n_bulk, eta, sigma2_target),
            StreamSpec::PartialDuplicate { d, n, k, seed } => gen_partial_duplicate(d, n, k, seed),
            StreamSpec::MergeableHard { d, p, seed } => gen_mergeable_hard(d, p, seed),
            StreamSpec::MatsampleTight { n } => Ok((gen_matsample_tight(n)?, GroundTruth::none())),
        }
    }
}

/// Iid rows `N(0, λ₁' v*v*ᵀ + λ₂'(I - v*v*ᵀ))` with a seeded uniform `v*`.
pub fn gen_spiked(
    d: usize,
    n: usize,
    lambda1_over_n: f64,
    lambda2_over_n: f64,
    seed: u64,
) -> Result<(StreamMatrix, GroundTruth)> {
    if !(lambda2_over_n >= 0.0 && lambda1_over_n > lambda2_over_n && lambda1_over_n.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need lambda1 > lambda2 >= 0, got {lambda1_over_n} and {lambda2_over_n}"
        )));
    }
    if d == 0 || n == 0 {
        return Err(Error::InvalidParameter("need d >= 1 and n >= 1".into()));
    }
    let base = Prng::new(seed);
    let vstar = random_unit(d, &mut base.fork(0));
    let mut rng = base.fork(1);
    let (s1, s2) = (lambda1_over_n.sqrt(), lambda2_over_n.sqrt());
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = rng.gaussian_vec(d);
        let c = (s1 - s2) * dot(&z, vstar.as_slice());
        data.extend(
            z.iter()
                .zip(vstar.as_slice())
                .map(|(zi, vi)| s2 * zi + c * vi),
        );
    }
    Ok((
        StreamMatrix::from_flat(n, d, data)?,
        GroundTruth {
            planted: Some(vstar),
            aux: Aux::None,
        },
    ))
}

/// Standard basis rows with the given multiplicities, emitted round-robin.
pub fn gen_commutative(d: usize, counts: &[usize]) -> Result<StreamMatrix> {
    if counts.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: counts.len(),
        });
    }
    let n: usize = counts.iter().sum();
    let mut left = counts.to_vec();
    let mut data = Vec::with_capacity(n * d);
    while left.iter().any(|&c| c > 0) {
        for (j, c) in left.iter_mut().enumerate() {
            if *c > 0 {
                *c -= 1;
                data.extend((0..d).map(|i| if i == j { 1.0 } else { 0.0 }));
            }
        }
    }
    StreamMatrix::from_flat(n, d, data)
}

/// `n_bulk` copies of `e₁`, then `⌈1/η⌉` copies of `e₁ + √σ₂ e₂`.
///
/// The planted direction is the top eigenvector of the resulting `XᵀX`,
/// which lives in `span{e₁, e₂}`.
pub fn gen_end_rotation(
    d: usize,
    n_bulk: usize,
    eta: f64,
    sigma2_target: f64,
) -> Result<(StreamMatrix, GroundTruth)> {
    if d < 2 {
        return Err(Error::InvalidParameter("end rotation needs d >= 2".into()));
    }
    if !(0.0..1.0).contains(&sigma2_target) {
        return Err(Error::InvalidParameter(format!(
            "sigma2 target must be in [0, 1), got {sigma2_target}"
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) || (1.0 / eta).ceil() > n_bulk as f64 {
        return Err(Error::InvalidParameter(format!(
            "need eta > 0 with 1/eta <= n_bulk, got eta = {eta}, n_bulk = {n_bulk}"
        )));
    }
    let tail = (1.0 / eta).ceil() as usize;
    let lift = sigma2_target.sqrt();
    let mut data = Vec::with_capacity((n_bulk + tail) * d);
    let mut row = vec![0.0; d];
    row[0] = 1.0;
    for _ in 0..n_bulk {
        data.extend_from_slice(&row);
    }
    row[1] = lift;
    for _ in 0..tail {
        data.extend_from_slice(&row);
    }
    // XᵀX on span{e₁, e₂} is [[n_bulk + m, m t], [m t, m t²]].
    let (m, t) = (tail as f64, lift);
    let (a, b, c) = (n_bulk as f64 + m, m * t, m * t * t);
    let lambda = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt();
    let mut v = vec![0.0; d];
    if b == 0.0 {
        v[0] = 1.0;
    } else {
        v[0] = b;
        v[1] = lambda - a;
    }
    Ok((
        StreamMatrix::from_flat(n_bulk + tail, d, data)?,
        GroundTruth {
            planted: Some(UnitVec::normalize(v)?.canonical_sign()),
            aux: Aux::None,
        },
    ))
}

/// Default random-block height for the partial-duplicate instance.
pub fn partial_duplicate_default_n(d: usize, k: usize) -> usize {
    d / (9 * k)
}

/// Rows: `x + y`, then `k` copies of `x`, then `n` uniform `±1` rows. `x`
/// and `y` are uniform `±1` on the first and second half of the
/// coordinates and zero elsewhere.
pub fn gen_partial_duplicate(
    d: usize,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(StreamMatrix, GroundTruth)> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "d must be even and positive, got {d}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let half = d / 2;
    let mut rng = Prng::new(seed);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    x[..half].iter_mut().for_each(|v| *v = rng.sign());
    y[half..].iter_mut().for_each(|v| *v = rng.sign());
    let rows = k + n + 1;
    let mut data = Vec::with_capacity(rows * d);
    data.extend(x.iter().zip(&y).map(|(a, b)| a + b));
    for _ in 0..k {
        data.extend_from_slice(&x);
    }
    for _ in 0..n * d {
        data.push(rng.sign());
    }
    Ok((
        StreamMatrix::from_flat(rows, d, data)?,
        GroundTruth {
            planted: Some(UnitVec::normalize(x)?),
            aux: Aux::PartialDuplicate {
                y: UnitVec::normalize(y)?,
            },
        },
    ))
}

/// `p` blocks of `d/p` iid `N(0, I_d)` rows; one shared Gaussian `v*`
/// replaces a uniformly chosen row in every block.
pub fn gen_mergeable_hard(d: usize, p: usize, seed: u64) -> Result<(StreamMatrix, GroundTruth)> {
    if p < 2 || d == 0 || !d.is_multiple_of(p) {
        return Err(Error::InvalidParameter(format!(
            "need p >= 2 dividing d, got d = {d}, p = {p}"
        )));
    }
    let k = d / p;
    let base = Prng::new(seed);
    let vstar = base.fork(0).gaussian_vec(d);
    let mut rng = base.fork(1);
    let mut data = Vec::with_capacity(d * d);
    let mut block_starts = Vec::with_capacity(p);
    let mut planted_rows = Vec::with_capacity(p);
    for blk in 0..p {
        let start = blk * k;
        let j = rng.below(k);
        block_starts.push(start);
        planted_rows.push(start + j);
        for r in 0..k {
            if r == j {
                data.extend_from_slice(&vstar);
            } else {
                data.extend(rng.gaussian_vec(d));
            }
        }
    }
    Ok((
        StreamMatrix::from_flat(d, d, data)?,
        GroundTruth {
            planted: Some(UnitVec::normalize(vstar)?),
            aux: Aux::MergeableHard {
                block_starts,
                planted_rows,
            },
        },
    ))
}

/// `A[i][j] = ln(n / (1 + |i - j|))` for `i, j < n`, with a zero column
/// prepended: `n` rows and `n + 1` columns.
pub fn gen_matsample_tight(n: usize) -> Result<StreamMatrix> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "n must be a power of two >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let mut data = Vec::with_capacity(n * (n + 1));
    for i in 0..n {
        data.push(0.0);
        data.extend((0..n).map(|j| (nf / (1.0 + i.abs_diff(j) as f64)).ln()));
    }
    StreamMatrix::from_flat(n, n + 1, data)
}

/// Uniformly random row order; returns the permuted stream and the order.
pub fn shuffle_rows(x: &StreamMatrix, seed: u64) -> (StreamMatrix, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.n()).collect();
    order.shuffle(&mut Prng::new(seed));
    (x.permuted(&order), order)
}
