use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::FdSketch;
use crate::error::{Error, Result};
use crate::generators::StreamSpec;
use crate::grid::{required_bits, RateGridState};
use crate::la::{
    default_max_iters, sin2_error, top_two_eigs, top_two_eigs_op, Prng, SpectralSummary,
    StreamMatrix, UnitVec, DEFAULT_TOL, FULL_PRECISION,
};
use crate::oja::{oja_run, PcaResult};

/// `--eta auto` aims for `σ₁ = DEFAULT_SIGMA1_FACTOR · ln d`.
pub const DEFAULT_SIGMA1_FACTOR: f64 = 20.0;

const BYTES_PER_REAL: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Oja,
    Grid,
    Fd,
    Oracle,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Oja => "oja",
            Algo::Grid => "grid",
            Algo::Fd => "fd",
            Algo::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oja" => Ok(Algo::Oja),
            "grid" => Ok(Algo::Grid),
            "fd" => Ok(Algo::Fd),
            "oracle" => Ok(Algo::Oracle),
            _ => Err(Error::InvalidParameter(format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    /// `η = target / λ₁(XᵀX)` from the offline oracle.
    OracleAssisted {
        sigma1_target: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algo: Algo,
    pub eta: Option<EtaChoice>,
    /// Bit bound for the grid; `None` runs a prescan.
    pub b: Option<u32>,
    pub ell: Option<usize>,
    pub mantissa_bits: u32,
    pub seed: u64,
    pub timing: bool,
}

impl RunConfig {
    pub fn new(algo: Algo) -> Self {
        RunConfig {
            algo,
            eta: None,
            b: None,
            ell: None,
            mantissa_bits: FULL_PRECISION,
            seed: 0,
            timing: false,
        }
    }
}

/// Oracle fields of a report. Eigenvalues are of `XᵀX`; the `covariance_`
/// fields divide by `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDigest {
    #[serde(with = "crate::format::sig17")]
    pub lambda1: f64,
    #[serde(with = "crate::format::sig17")]
    pub lambda2: f64,
    #[serde(with = "crate::format::float_or_inf")]
    pub ratio: f64,
    #[serde(with = "crate::format::sig17")]
    pub covariance_lambda1: f64,
    #[serde(with = "crate::format::sig17")]
    pub covariance_lambda2: f64,
    pub vstar: UnitVec,
}

impl OracleDigest {
    fn new(s: &SpectralSummary, n: usize) -> Self {
        OracleDigest {
            lambda1: s.lambda1,
            lambda2: s.lambda2,
            ratio: s.ratio,
            covariance_lambda1: s.covariance_lambda1(n),
            covariance_lambda2: s.covariance_lambda2(n),
            vstar: s.vstar.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub algo: Algo,
    pub spec: Option<StreamSpec>,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// `"answer"` or `"bottom"`.
    pub result: &'static str,
    #[serde(with = "crate::format::opt_sig17")]
    pub answer_sin2: Option<f64>,
    pub answer: Option<UnitVec>,
    pub oracle: Option<OracleDigest>,
    #[serde(with = "crate::format::opt_sig17")]
    pub sigma1: Option<f64>,
    #[serde(with = "crate::format::opt_sig17")]
    pub sigma2: Option<f64>,
    #[serde(with = "crate::format::opt_sig17")]
    pub eta_chosen: Option<f64>,
    /// `"given"`, `"oracle_assisted"` or `"grid"`.
    pub eta_source: Option<&'static str>,
    pub b: Option<u32>,
    pub b_source: Option<&'static str>,
    pub grid_size: Option<usize>,
    pub heavy_row: Option<bool>,
    pub ell: Option<usize>,
    pub mantissa_bits: u32,
    pub space_bytes_peak: Option<usize>,
    #[serde(with = "crate::format::opt_sig17")]
    pub wall_ms: Option<f64>,
}

impl RunReport {
    pub fn is_bottom(&self) -> bool {
        self.result == "bottom"
    }
}

/// Offline ground truth. `Ok(None)` for an all-zero stream.
///
/// Tall streams iterate on the formed `d × d` Gram matrix, which is the
/// same operator at a lower cost per iteration.
pub fn oracle_summary(x: &StreamMatrix) -> Result<Option<SpectralSummary>> {
    if x.is_zero() {
        return Ok(None);
    }
    let iters = default_max_iters(x.d());
    let found = if x.n() >= 2 * x.d() {
        top_two_eigs_op(&x.gram(), DEFAULT_TOL, iters)
    } else {
        top_two_eigs(x, DEFAULT_TOL, iters)
    };
    match found {
        Ok(s) => Ok(Some(s)),
        Err(Error::ZeroMatrix) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs one algorithm on `x` and fills the report from the oracle.
pub fn run_algorithm(
    x: &StreamMatrix,
    cfg: &RunConfig,
    spec: Option<StreamSpec>,
) -> Result<RunReport> {
    let oracle = oracle_summary(x)?;
    run_with_oracle(x, cfg, spec, oracle.as_ref())
}

/// [`run_algorithm`] with a precomputed oracle for `x`.
pub fn run_with_oracle(
    x: &StreamMatrix,
    cfg: &RunConfig,
    spec: Option<StreamSpec>,
    oracle: Option<&SpectralSummary>,
) -> Result<RunReport> {
    let mut report = RunReport {
        algo: cfg.algo,
        spec,
        n: x.n(),
        d: x.d(),
        seed: cfg.seed,
        result: "bottom",
        answer_sin2: None,
        answer: None,
        oracle: oracle.map(|s| OracleDigest::new(s, x.n())),
        sigma1: None,
        sigma2: None,
        eta_chosen: None,
        eta_source: None,
        b: None,
        b_source: None,
        grid_size: None,
        heavy_row: None,
        ell: None,
        mantissa_bits: cfg.mantissa_bits,
        space_bytes_peak: None,
        wall_ms: None,
    };
    let started = Instant::now();
    let result = match cfg.algo {
        Algo::Oja => {
            let (eta, source) = match cfg.eta {
                Some(EtaChoice::Fixed(eta)) => (eta, "given"),
                Some(EtaChoice::OracleAssisted { sigma1_target }) => {
                    let s = oracle.ok_or(Error::ZeroMatrix)?;
                    (sigma1_target / s.lambda1, "oracle_assisted")
                }
                None => {
                    return Err(Error::InvalidParameter("oja needs a learning rate".into()));
                }
            };
            let out = oja_run(x, eta, cfg.mantissa_bits, &mut Prng::new(cfg.seed), false)?;
            report.eta_chosen = Some(eta);
            report.eta_source = Some(source);
            report.space_bytes_peak = Some(out.state.state_reals() * BYTES_PER_REAL);
            out.result
        }
        Algo::Grid => {
            let (b, source) = match cfg.b {
                Some(b) => (b, "given"),
                None => (required_bits(x), "prescan"),
            };
            let mut st =
                RateGridState::init(x.d(), x.n(), b, cfg.mantissa_bits, &Prng::new(cfg.seed))?;
            st.run_stream(x)?;
            let out = st.finalize();
            report.b = Some(b);
            report.b_source = Some(source);
            report.grid_size = Some(st.entries().len());
            report.space_bytes_peak = Some(st.state_reals() * BYTES_PER_REAL);
            report.eta_chosen = out.diagnostics.chosen_eta();
            report.eta_source = report.eta_chosen.map(|_| "grid");
            report.heavy_row = Some(out.diagnostics.heavy_row);
            out.result
        }
        Algo::Fd => {
            let ell = cfg
                .ell
                .ok_or_else(|| Error::InvalidParameter("fd needs a sketch size".into()))?;
            let mut sk = FdSketch::new(ell, x.d())?;
            for r in x.rows() {
                sk.update(r)?;
            }
            report.ell = Some(ell);
            report.space_bytes_peak = Some(sk.state_reals() * BYTES_PER_REAL);
            match sk.top_direction() {
                Ok(v) => PcaResult::Answer(v),
                Err(Error::ZeroSketch) => PcaResult::Bottom,
                Err(e) => return Err(e),
            }
        }
        Algo::Oracle => {
            let s = oracle.ok_or(Error::ZeroMatrix)?;
            PcaResult::Answer(s.vstar.clone())
        }
    };
    if cfg.timing {
        report.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    if let (Some(s), Some(eta)) = (oracle, report.eta_chosen) {
        report.sigma1 = Some(eta * s.lambda1);
        report.sigma2 = Some(eta * s.lambda2);
    }
    if let PcaResult::Answer(v) = result {
        report.result = "answer";
        report.answer_sin2 = oracle.map(|s| sin2_error(&v, &s.vstar));
        report.answer = Some(v);
    }
    Ok(report)
}
