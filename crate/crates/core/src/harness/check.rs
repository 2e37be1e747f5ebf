use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{
    gen_matsample_tight, gen_mergeable_hard, gen_partial_duplicate, gen_spiked,
    partial_duplicate_default_n, Aux,
};
use crate::la::{
    default_max_iters, deflated_norm, dot, sigma_pair, sin2_error, top_eigenpair, top_two_eigs,
    Prng, SpectralSummary, StreamMatrix, UnitVec, DEFAULT_TOL, FULL_PRECISION,
};
use crate::lemmas::{
    check_matsample, check_maxa, check_prodab, max_subsequence_sum, monitor_growth_correctness,
    monitor_movement, MonitorReport, DEFAULT_MONITOR_TOL, QUANTIZED_MONITOR_TOL,
};
use crate::oja::{oja_run_from, OjaState};

/// Generic outcome for the command-line `check` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub lemma: String,
    pub passed: bool,
    pub details: serde_json::Value,
}

impl CheckReport {
    pub fn new<T: Serialize>(lemma: &str, passed: bool, details: &T) -> Result<Self> {
        let details = serde_json::to_value(details).map_err(|e| Error::Format(e.to_string()))?;
        Ok(CheckReport {
            lemma: lemma.to_string(),
            passed,
            details,
        })
    }
}

/// `min(52, ⌈4 log₂(nd)⌉)` mantissa bits.
pub fn precision_bits(n: usize, d: usize) -> u32 {
    let b = (4.0 * ((n * d) as f64).log2()).ceil() as u32;
    b.clamp(1, FULL_PRECISION)
}

/// Spiked-stream family used by the trace monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorSetup {
    pub d: usize,
    pub n: usize,
    /// `λ₁/λ₂` of the generating covariance.
    pub ratio: f64,
    /// The learning rate targets `σ₁ = sigma1_factor · ln d`, capped so that
    /// every row has `η‖x‖² ≤ 1`.
    pub sigma1_factor: f64,
    pub mantissa_bits: u32,
}

impl Default for MonitorSetup {
    fn default() -> Self {
        MonitorSetup {
            d: 32,
            n: 1024,
            ratio: 200.0,
            sigma1_factor: 20.0,
            mantissa_bits: FULL_PRECISION,
        }
    }
}

impl MonitorSetup {
    fn tolerance(&self) -> f64 {
        if self.mantissa_bits < FULL_PRECISION {
            QUANTIZED_MONITOR_TOL
        } else {
            DEFAULT_MONITOR_TOL
        }
    }
}

/// A spiked stream with its oracle and a learning rate satisfying
/// `η‖xᵢ‖² ≤ 1` for every row.
pub fn conforming_spiked(
    d: usize,
    n: usize,
    ratio: f64,
    sigma1_factor: f64,
    seed: u64,
) -> Result<(StreamMatrix, SpectralSummary, f64)> {
    let (x, _) = gen_spiked(d, n, ratio, 1.0, seed)?;
    let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d))?;
    let eta = (sigma1_factor * (d as f64).ln() / s.lambda1).min(1.0 / x.max_row_norm2());
    Ok((x, s, eta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorBatch {
    pub setup: MonitorSetup,
    pub trials: usize,
    pub failed: usize,
    pub inapplicable: usize,
    #[serde(with = "crate::format::sig17")]
    pub max_violation: f64,
    pub n_checks: usize,
    /// Trials whose final log-norm fell below `σ₁/8`; growth batches only.
    pub growth_floor_misses: usize,
    /// Smallest `s_n - σ₁/8` over the batch; growth batches only.
    #[serde(with = "crate::format::opt_sig17")]
    pub min_growth_margin: Option<f64>,
    pub passed: bool,
    /// Reports of failing trials only.
    pub failures: Vec<(u64, MonitorReport)>,
}

fn batch<F>(setup: MonitorSetup, trials: usize, seed0: u64, one: F) -> Result<MonitorBatch>
where
    F: Fn(u64) -> Result<(MonitorReport, Option<f64>)> + Sync,
{
    let runs = (0..trials as u64)
        .into_par_iter()
        .map(|t| one(seed0 + t).map(|r| (seed0 + t, r)))
        .collect::<Result<Vec<_>>>()?;
    let margins: Vec<f64> = runs.iter().filter_map(|(_, (_, m))| *m).collect();
    let growth_floor_misses = margins.iter().filter(|&&m| m < 0.0).count();
    let min_growth_margin = margins.iter().copied().reduce(f64::min);
    let reports: Vec<(u64, MonitorReport)> = runs.into_iter().map(|(s, (r, _))| (s, r)).collect();
    let failed: Vec<_> = reports
        .iter()
        .filter(|(_, r)| r.status == crate::lemmas::CheckStatus::Fail)
        .cloned()
        .collect();
    let inapplicable = reports
        .iter()
        .filter(|(_, r)| r.status == crate::lemmas::CheckStatus::Inapplicable)
        .count();
    let max_violation = reports
        .iter()
        .map(|(_, r)| r.max_violation)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MonitorBatch {
        setup,
        trials,
        failed: failed.len(),
        inapplicable,
        max_violation,
        n_checks: reports.iter().map(|(_, r)| r.n_checks).sum(),
        growth_floor_misses,
        min_growth_margin,
        passed: failed.is_empty() && inapplicable == 0 && growth_floor_misses == 0,
        failures: failed,
    })
}

/// Off-axis bound over `trials` spiked streams from uniform random starts,
/// plus the final growth floor `s_n ≥ σ₁/8`.
pub fn check_growth(setup: MonitorSetup, trials: usize, seed0: u64) -> Result<MonitorBatch> {
    batch(setup, trials, seed0, |seed| {
        let (x, s, eta) =
            conforming_spiked(setup.d, setup.n, setup.ratio, setup.sigma1_factor, seed)?;
        let (sigma1, sigma2) = sigma_pair(&x, eta, &s, DEFAULT_TOL)?;
        let start = crate::la::random_unit(setup.d, &mut Prng::new(seed).fork(99));
        let c = dot(start.as_slice(), s.vstar.as_slice());
        let pv0 = (1.0 - c * c).max(0.0).sqrt();
        let st = OjaState::from_start(start, eta, setup.mantissa_bits)?;
        let trace = oja_run_from(st, &x, true)?.trace.expect("trace requested");
        let final_log_norm = trace.steps.last().map_or(0.0, |t| t.log_norm);
        let report = monitor_growth_correctness(&trace, &s.vstar, sigma2, pv0, setup.tolerance());
        Ok((report, Some(final_log_norm - sigma1 / 8.0)))
    })
}

/// Movement bound over `trials` spiked streams started at the top eigenvector.
pub fn check_movement(
    setup: MonitorSetup,
    trials: usize,
    seed0: u64,
    pair_sample: usize,
) -> Result<MonitorBatch> {
    batch(setup, trials, seed0, |seed| {
        let (x, s, eta) =
            conforming_spiked(setup.d, setup.n, setup.ratio, setup.sigma1_factor, seed)?;
        let (_, sigma2) = sigma_pair(&x, eta, &s, DEFAULT_TOL)?;
        let st = OjaState::from_start(s.vstar.clone(), eta, setup.mantissa_bits)?;
        let trace = oja_run_from(st, &x, true)?.trace.expect("trace requested");
        let report = monitor_movement(
            &trace,
            &s.vstar,
            sigma2,
            pair_sample,
            &mut Prng::new(seed).fork(98),
            setup.tolerance(),
        );
        Ok((report, None))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzReport {
    pub cases: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen.
    #[serde(with = "crate::format::sig17")]
    pub min_slack: f64,
    pub passed: bool,
}

fn fuzz(cases: usize, mut one: impl FnMut(usize) -> Result<(f64, f64, f64)>) -> Result<FuzzReport> {
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for i in 0..cases {
        let (lhs, rhs, tol) = one(i)?;
        min_slack = min_slack.min(rhs - lhs);
        if lhs > rhs + tol {
            violations += 1;
        }
    }
    Ok(FuzzReport {
        cases,
        violations,
        min_slack,
        passed: violations == 0,
    })
}

/// Random nonnegative sequences of length up to 64.
pub fn check_prodab_fuzz(cases: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = Prng::new(seed);
    fuzz(cases, |_| {
        let len = rng.below(65);
        let scale = 4.0 * rng.uniform() / (len.max(1) as f64).sqrt();
        let a: Vec<f64> = (0..len).map(|_| scale * rng.uniform()).collect();
        let c = check_prodab(&a)?;
        Ok((c.lhs, c.rhs, 1e-9 + 1e-12 * c.rhs))
    })
}

/// Log-uniform coefficients and Gaussian `(a, b)`.
pub fn check_maxa_fuzz(cases: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = Prng::new(seed);
    fuzz(cases, |_| {
        let big_a = 10f64.powf(6.0 * rng.uniform() - 3.0);
        let big_b = 10f64.powf(6.0 * rng.uniform() - 3.0);
        let (a, b) = (rng.gaussian(), rng.gaussian());
        let c = check_maxa(big_a, big_b, a, b)?.sides;
        Ok((c.lhs, c.rhs, 1e-12 * c.rhs.abs().max(1.0)))
    })
}

/// Random Gaussian matrices with a zero first column, up to
/// `max_rows × (max_cols + 1)`.
pub fn check_matsample_fuzz(
    cases: usize,
    max_rows: usize,
    max_cols: usize,
    seed: u64,
) -> Result<FuzzReport> {
    let mut rng = Prng::new(seed);
    fuzz(cases, |_| {
        let rows = 1 + rng.below(max_rows);
        let cols = 1 + rng.below(max_cols);
        let mut data = Vec::with_capacity(rows * (cols + 1));
        for _ in 0..rows {
            data.push(0.0);
            data.extend(rng.gaussian_vec(cols));
        }
        let c = check_matsample(&StreamMatrix::from_flat(rows, cols + 1, data)?)?;
        Ok((c.lhs, c.rhs, 1e-9 * c.rhs.max(1.0)))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatsampleTightReport {
    pub n: usize,
    #[serde(with = "crate::format::sig17")]
    pub lhs: f64,
    #[serde(with = "crate::format::sig17")]
    pub rhs: f64,
    /// Largest squared-increment sum over increasing column chains.
    #[serde(with = "crate::format::sig17")]
    pub max_chain_sum: f64,
    #[serde(with = "crate::format::sig17")]
    pub lhs_over_chain: f64,
    /// `lhs_over_chain / ln² n`.
    #[serde(with = "crate::format::sig17")]
    pub normalized_ratio: f64,
    #[serde(with = "crate::format::sig17")]
    pub rhs_over_lhs: f64,
    pub passed: bool,
}

/// The tight matrix: the bound holds with `rhs/lhs ∈ [1, 30]` and
/// `lhs / B ≥ 0.05 ln² n`.
pub fn check_matsample_tight(n: usize) -> Result<MatsampleTightReport> {
    let a = gen_matsample_tight(n)?;
    let c = check_matsample(&a)?;
    let b = max_subsequence_sum(&a)?;
    let ln2 = (n as f64).ln().powi(2);
    let lhs_over_chain = c.lhs / b;
    let rhs_over_lhs = c.rhs / c.lhs;
    Ok(MatsampleTightReport {
        n,
        lhs: c.lhs,
        rhs: c.rhs,
        max_chain_sum: b,
        lhs_over_chain,
        normalized_ratio: lhs_over_chain / ln2,
        rhs_over_lhs,
        passed: c.holds(1e-9 * c.rhs)
            && (1.0..=30.0).contains(&rhs_over_lhs)
            && lhs_over_chain >= 0.05 * ln2,
    })
}

/// Frequency band: `hits` of `trials` met the per-trial criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub name: String,
    pub trials: usize,
    pub hits: usize,
    pub required: usize,
    #[serde(with = "crate::format::sig17")]
    pub threshold: f64,
    #[serde(with = "crate::format::sig17")]
    pub min: f64,
    #[serde(with = "crate::format::sig17")]
    pub median: f64,
    pub passed: bool,
}

impl BandReport {
    /// `values[i] ≥ threshold` (or `≤` when `upper` is set) counts as a hit.
    fn from_values(
        name: &str,
        values: &[f64],
        threshold: f64,
        upper: bool,
        required_fraction: f64,
    ) -> Self {
        let hits = values
            .iter()
            .filter(|&&v| {
                if upper {
                    v <= threshold
                } else {
                    v >= threshold
                }
            })
            .count();
        let required = (required_fraction * values.len() as f64).ceil() as usize;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        BandReport {
            name: name.to_string(),
            trials: values.len(),
            hits,
            required,
            threshold,
            min: sorted.first().copied().unwrap_or(f64::NAN),
            median: crate::harness::sweep::median(&sorted).unwrap_or(f64::NAN),
            passed: hits >= required,
        }
    }
}

/// Spectral gap and `y`-overlap of the partial-duplicate instance.
///
/// Bands: `λ₁/λ₂ ≥ k/20`, `|⟨v*, y⟩|·k/√d ≥ 0.2` with `y` the unnormalized
/// `±1` vector, and `|⟨v*, ŷ⟩|·k ≥ 0.2`.
pub fn check_partial_duplicate_band(
    d: usize,
    k: usize,
    n: Option<usize>,
    trials: usize,
    seed0: u64,
    required_fraction: f64,
) -> Result<Vec<BandReport>> {
    let n = n.unwrap_or_else(|| partial_duplicate_default_n(d, k));
    let stats = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (x, truth) = gen_partial_duplicate(d, n, k, seed0 + t)?;
            let Aux::PartialDuplicate { y } = truth.aux else {
                unreachable!("partial duplicate always carries y")
            };
            let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d))?;
            let b = dot(s.vstar.as_slice(), y.as_slice()).abs();
            Ok((s.ratio, b))
        })
        .collect::<Result<Vec<_>>>()?;
    let kf = k as f64;
    let gaps: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let scaled: Vec<f64> = stats
        .iter()
        .map(|s| s.1 * (d as f64 / 2.0).sqrt() * kf / (d as f64).sqrt())
        .collect();
    let overlap: Vec<f64> = stats.iter().map(|s| s.1 * kf).collect();
    Ok(vec![
        BandReport::from_values("spectral_gap", &gaps, kf / 20.0, false, required_fraction),
        BandReport::from_values("y_overlap_scaled", &scaled, 0.2, false, required_fraction),
        BandReport::from_values("y_overlap_times_k", &overlap, 0.2, false, required_fraction),
    ])
}

/// Bands for the mergeable-summary instance: the planted-direction ratio
/// `‖X v̂*‖² / max_{w ⊥ v̂*} ‖Xw‖² ≥ 0.1 p`, and `sin²(v̂*, v*) ≤ 0.05`
/// against the oracle eigenvector.
pub fn check_mergeable_band(
    d: usize,
    p: usize,
    trials: usize,
    seed0: u64,
    required_fraction: f64,
) -> Result<Vec<BandReport>> {
    let stats = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (x, truth) = gen_mergeable_hard(d, p, seed0 + t)?;
            let planted: UnitVec = truth
                .planted
                .expect("mergeable instance plants a direction");
            let along: f64 = x.rows().map(|r| dot(r, planted.as_slice()).powi(2)).sum();
            let iters = default_max_iters(d);
            let top = top_eigenpair(&x, 1e-8, iters)?;
            // Loose residual: only the eigenvalue is needed, and its error
            // is quadratic in the residual.
            let rest = deflated_norm(&x, planted.as_slice(), top.value, 1e-5, iters)?;
            let vstar = UnitVec::new(top.vector)?;
            Ok((along / rest, sin2_error(&planted, &vstar)))
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let sin2: Vec<f64> = stats.iter().map(|s| s.1).collect();
    Ok(vec![
        BandReport::from_values(
            "planted_ratio",
            &ratios,
            0.1 * p as f64,
            false,
            required_fraction,
        ),
        BandReport::from_values("planted_sin2", &sin2, 0.05, true, required_fraction),
    ])
}

/// `‖X̃‖ ≤ 3√d` for the mergeable instance with its planted rows removed.
pub fn mergeable_residual_norm(d: usize, p: usize, seed: u64) -> Result<f64> {
    let (x, truth) = gen_mergeable_hard(d, p, seed)?;
    let Aux::MergeableHard { planted_rows, .. } = truth.aux else {
        unreachable!("mergeable instance records planted rows")
    };
    let rows: Vec<&[f64]> = x
        .rows()
        .enumerate()
        .filter(|(i, _)| !planted_rows.contains(i))
        .map(|(_, r)| r)
        .collect();
    let rest = StreamMatrix::from_rows(&rows)?;
    let top = top_eigenpair(&rest, 1e-6, default_max_iters(d))?;
    Ok(top.value.sqrt())
}
