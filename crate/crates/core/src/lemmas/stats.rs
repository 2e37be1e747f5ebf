use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la::{dot, norm, top_eigenpair, Prng, StreamMatrix};

pub const MIN_TRIALS: usize = 100;

/// Empirical failure rate may exceed the claimed probability by this factor.
const MONTE_CARLO_SLACK: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "claim", rename_all = "snake_case")]
pub enum StatClaim {
    /// With `a ~ N(0,1)`, `‖a u + v‖ ≥ δ √(π/2) ‖u‖` fails with probability at most `δ`.
    GaussianVecNorm {
        u: Vec<f64>,
        v: Vec<f64>,
        delta: f64,
    },
    /// For uniform `±1` `X ∈ ℝ^{n×d}` and a fixed unit `u`,
    /// `|‖Xu‖² - n| ≤ 10(√(n ln(1/δ)) + ln(1/δ))` fails with probability at most `δ`.
    SubgammaSum { n: usize, d: usize, delta: f64 },
    /// A uniform `±1` matrix with `rows ≤ cols` has `‖A‖ ≥ multiplier·√cols`
    /// with probability at most `δ`.
    RudelsonOpnorm {
        rows: usize,
        cols: usize,
        multiplier: f64,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatReport {
    pub claim: StatClaim,
    pub trials: usize,
    pub failures: usize,
    #[serde(with = "crate::format::sig17")]
    pub frequency: f64,
    #[serde(with = "crate::format::sig17")]
    pub allowed: f64,
    pub passed: bool,
}

fn sign_matrix(rows: usize, cols: usize, rng: &mut Prng) -> Result<StreamMatrix> {
    StreamMatrix::from_flat(rows, cols, (0..rows * cols).map(|_| rng.sign()).collect())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Runs `trials` independent draws of the claim's random experiment and
/// compares the failure frequency with `1.5·δ`.
pub fn stat_check(claim: &StatClaim, trials: usize, rng: &mut Prng) -> Result<StatReport> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let (delta, failures) = match claim {
        StatClaim::GaussianVecNorm { u, v, delta } => {
            check_delta(*delta)?;
            if u.len() != v.len() || u.is_empty() {
                return Err(Error::DimensionMismatch {
                    expected: u.len(),
                    got: v.len(),
                });
            }
            let bound = delta * (std::f64::consts::PI / 2.0).sqrt() * norm(u);
            let fails = (0..trials)
                .filter(|_| {
                    let a = rng.gaussian();
                    let w: Vec<f64> = u.iter().zip(v).map(|(ui, vi)| a * ui + vi).collect();
                    norm(&w) < bound
                })
                .count();
            (*delta, fails)
        }
        StatClaim::SubgammaSum { n, d, delta } => {
            check_delta(*delta)?;
            let u = crate::la::random_unit(*d, rng);
            let nf = *n as f64;
            let l = (1.0 / delta).ln();
            let band = 10.0 * ((nf * l).sqrt() + l);
            let mut fails = 0;
            for _ in 0..trials {
                let x = sign_matrix(*n, *d, rng)?;
                let s: f64 = x.rows().map(|r| dot(r, u.as_slice()).powi(2)).sum();
                if (s - nf).abs() > band {
                    fails += 1;
                }
            }
            (*delta, fails)
        }
        StatClaim::RudelsonOpnorm {
            rows,
            cols,
            multiplier,
            delta,
        } => {
            check_delta(*delta)?;
            if rows > cols {
                return Err(Error::InvalidParameter("need rows <= cols".into()));
            }
            let threshold = multiplier * (*cols as f64).sqrt();
            let mut fails = 0;
            for _ in 0..trials {
                let a = sign_matrix(*rows, *cols, rng)?;
                // The Rayleigh quotient is a lower bound on ‖A‖², accurate to
                // 1e-6 relative at convergence.
                let top = top_eigenpair(&a, 1e-6, 100_000)?;
                if top.value.sqrt() >= threshold {
                    fails += 1;
                }
            }
            (*delta, fails)
        }
    };
    let frequency = failures as f64 / trials as f64;
    let allowed = MONTE_CARLO_SLACK * delta;
    Ok(StatReport {
        claim: claim.clone(),
        trials,
        failures,
        frequency,
        allowed,
        passed: frequency <= allowed,
    })
}
