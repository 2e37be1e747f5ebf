use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::format::fmt17;
use crate::generators::{gen_spiked, StreamSpec};
use crate::la::FULL_PRECISION;

use super::run::{
    oracle_summary, run_with_oracle, Algo, EtaChoice, RunConfig, DEFAULT_SIGMA1_FACTOR,
};

pub const CSV_HEADER: &str = "ratio,algo,trials,median_sin2,abstention_rate,space_bytes";

fn full_precision() -> u32 {
    FULL_PRECISION
}

/// Grid of spiked-stream experiments. `ratios` are `λ₁/λ₂` of the
/// generating covariance (`λ₂ = 1` per row).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub d: usize,
    pub n: usize,
    pub ratios: Vec<f64>,
    pub trials: usize,
    pub algos: Vec<Algo>,
    #[serde(default)]
    pub seed: u64,
    /// Sketch rows for `fd`.
    pub ell: Option<usize>,
    /// Fixed bit bound for `grid`; prescan when absent.
    pub b: Option<u32>,
    #[serde(default = "full_precision")]
    pub mantissa_bits: u32,
    /// Fixed learning rate for `oja`; oracle-assisted when absent.
    pub eta: Option<f64>,
    pub sigma1_factor: Option<f64>,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("sweep config: {m}")));
        if self.ratios.is_empty() {
            return bad("ratios must not be empty");
        }
        if self.algos.is_empty() {
            return bad("algos must not be empty");
        }
        if self.trials == 0 || self.d == 0 || self.n == 0 {
            return bad("d, n and trials must be positive");
        }
        if self.ratios.iter().any(|&r| !(r > 1.0 && r.is_finite())) {
            return bad("every ratio must be a finite number above 1");
        }
        if self.algos.contains(&Algo::Fd) && self.ell.is_none() {
            return bad("fd needs ell");
        }
        if !(1..=FULL_PRECISION).contains(&self.mantissa_bits) {
            return bad("mantissa_bits must be in 1..=52");
        }
        Ok(())
    }

    fn stream_seed(&self, ratio_index: usize, trial: usize) -> u64 {
        self.seed
            .wrapping_add(ratio_index as u64 * 1_000_003)
            .wrapping_add(trial as u64)
    }
}

/// One CSV line: aggregate of `trials` runs of `algo` at `ratio`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub algo: Algo,
    pub trials: usize,
    /// Median over answered trials; `None` when every trial abstained.
    pub median_sin2: Option<f64>,
    pub abstention_rate: f64,
    /// Largest algorithm state over the trials.
    pub space_bytes: Option<usize>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt17(self.ratio),
            self.algo.name(),
            self.trials,
            self.median_sin2.map(fmt17).unwrap_or_default(),
            fmt17(self.abstention_rate),
            self.space_bytes.map(|s| s.to_string()).unwrap_or_default(),
        )
    }
}

pub(crate) fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Outcome of one algorithm on one stream: `(sin²` if answered, space).
type Cell = Vec<(Option<f64>, Option<usize>)>;

fn run_cell(cfg: &SweepConfig, ratio_index: usize, trial: usize) -> Result<Cell> {
    let ratio = cfg.ratios[ratio_index];
    let seed = cfg.stream_seed(ratio_index, trial);
    let (x, _) = gen_spiked(cfg.d, cfg.n, ratio, 1.0, seed)?;
    let oracle = oracle_summary(&x)?;
    let spec = StreamSpec::Spiked {
        d: cfg.d,
        n: cfg.n,
        lambda1_over_n: ratio,
        lambda2_over_n: 1.0,
        seed,
    };
    cfg.algos
        .iter()
        .map(|&algo| {
            let mut rc = RunConfig::new(algo);
            rc.seed = seed;
            rc.b = cfg.b;
            rc.ell = cfg.ell;
            rc.mantissa_bits = cfg.mantissa_bits;
            rc.eta = Some(match cfg.eta {
                Some(eta) => EtaChoice::Fixed(eta),
                None => EtaChoice::OracleAssisted {
                    sigma1_target: cfg.sigma1_factor.unwrap_or(DEFAULT_SIGMA1_FACTOR)
                        * (cfg.d as f64).ln(),
                },
            });
            let r = run_with_oracle(&x, &rc, Some(spec.clone()), oracle.as_ref())?;
            Ok((r.answer_sin2, r.space_bytes_peak))
        })
        .collect()
}

/// Runs every `(ratio, trial)` cell, each on one generated stream shared by
/// all algorithms, and aggregates per `(ratio, algo)`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.ratios.len())
        .flat_map(|r| (0..cfg.trials).map(move |t| (r, t)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(r, t)| run_cell(cfg, r, t))
        .collect::<Result<Vec<Cell>>>()?;
    let mut rows = Vec::new();
    for (ri, &ratio) in cfg.ratios.iter().enumerate() {
        let mine: Vec<&Cell> = cells
            .iter()
            .zip(&results)
            .filter(|((r, _), _)| *r == ri)
            .map(|(_, c)| c)
            .collect();
        for (ai, &algo) in cfg.algos.iter().enumerate() {
            let mut answered: Vec<f64> = mine.iter().filter_map(|c| c[ai].0).collect();
            answered.sort_by(f64::total_cmp);
            let abstained = cfg.trials - answered.len();
            rows.push(SweepRow {
                ratio,
                algo,
                trials: cfg.trials,
                median_sin2: median(&answered),
                abstention_rate: abstained as f64 / cfg.trials as f64,
                space_bytes: mine.iter().filter_map(|c| c[ai].1).max(),
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}
