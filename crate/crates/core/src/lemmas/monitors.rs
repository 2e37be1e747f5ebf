use rand::seq::index::sample;
use serde::Serialize;

use crate::la::{dot, norm2, Prng, UnitVec};
use crate::oja::OjaTrace;

/// Absolute slack for full-precision traces.
pub const DEFAULT_MONITOR_TOL: f64 = 1e-6;
/// Absolute slack for quantized traces.
pub const QUANTIZED_MONITOR_TOL: f64 = 1e-3;

const MAX_DETAILS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The trace does not meet the precondition of the bound.
    Inapplicable,
}

/// One checked instance: the steps it compares and both sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitorEntry {
    pub from: usize,
    pub to: usize,
    #[serde(with = "crate::format::sig17")]
    pub lhs: f64,
    #[serde(with = "crate::format::sig17")]
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub status: CheckStatus,
    /// Largest `lhs - rhs` seen; negative means every check had slack.
    #[serde(with = "crate::format::sig17")]
    pub max_violation: f64,
    pub n_checks: usize,
    pub tolerance: f64,
    /// Violations beyond the tolerance, capped at 64, plus the tightest check.
    pub details: Vec<MonitorEntry>,
    pub note: Option<String>,
}

impl MonitorReport {
    fn inapplicable(note: String, tolerance: f64) -> Self {
        MonitorReport {
            status: CheckStatus::Inapplicable,
            max_violation: f64::NEG_INFINITY,
            n_checks: 0,
            tolerance,
            details: Vec::new(),
            note: Some(note),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

struct Collector {
    tol: f64,
    worst: Option<MonitorEntry>,
    violations: Vec<MonitorEntry>,
    n: usize,
}

impl Collector {
    fn new(tol: f64) -> Self {
        Collector {
            tol,
            worst: None,
            violations: Vec::new(),
            n: 0,
        }
    }

    fn push(&mut self, e: MonitorEntry) {
        self.n += 1;
        if self.worst.is_none_or(|w| e.lhs - e.rhs > w.lhs - w.rhs) {
            self.worst = Some(e);
        }
        if e.lhs > e.rhs + self.tol && self.violations.len() < MAX_DETAILS {
            self.violations.push(e);
        }
    }

    fn finish(self) -> MonitorReport {
        let max_violation = self.worst.map_or(f64::NEG_INFINITY, |w| w.lhs - w.rhs);
        let status = if max_violation <= self.tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        let mut details = self.violations;
        if let Some(w) = self.worst {
            if !details.contains(&w) {
                details.push(w);
            }
        }
        MonitorReport {
            status,
            max_violation,
            n_checks: self.n,
            tolerance: self.tol,
            details,
            note: None,
        }
    }
}

/// `‖P v‖ / ‖v‖` for `P = I - v*v*ᵀ`.
fn off_axis(v: &[f64], vstar: &[f64]) -> f64 {
    let c = dot(v, vstar);
    let r: f64 = v
        .iter()
        .zip(vstar)
        .map(|(vi, wi)| (vi - c * wi).powi(2))
        .sum();
    (r / norm2(v)).sqrt()
}

fn rate_precondition(trace: &OjaTrace, tol: f64) -> Option<MonitorReport> {
    (trace.max_eta_norm2 > 1.0).then(|| {
        MonitorReport::inapplicable(
            format!("max η‖x‖² = {} exceeds 1", trace.max_eta_norm2),
            tol,
        )
    })
}

/// Checks `‖P v̂ᵢ‖ ≤ √σ₂ + ‖P v₀‖·e^{-sᵢ}` at every step of the trace.
///
/// `sigma2` and `vstar` must come from the full stream.
pub fn monitor_growth_correctness(
    trace: &OjaTrace,
    vstar: &UnitVec,
    sigma2: f64,
    pv0_norm: f64,
    tol: f64,
) -> MonitorReport {
    if let Some(r) = rate_precondition(trace, tol) {
        return r;
    }
    let root = sigma2.max(0.0).sqrt();
    let mut c = Collector::new(tol);
    for (i, (s, v)) in trace.iterate().enumerate() {
        c.push(MonitorEntry {
            from: 0,
            to: i,
            lhs: off_axis(v, vstar.as_slice()),
            rhs: root + pv0_norm * (-s).exp(),
        });
    }
    c.finish()
}

/// Checks `‖P v̂_b - P v̂_a‖² ≤ 4σ₂(s_b - s_a)` on every adjacent pair and
/// on `pair_sample` random pairs `a < b`. The trace must start on `±v*`.
pub fn monitor_movement(
    trace: &OjaTrace,
    vstar: &UnitVec,
    sigma2: f64,
    pair_sample: usize,
    rng: &mut Prng,
    tol: f64,
) -> MonitorReport {
    if let Some(r) = rate_precondition(trace, tol) {
        return r;
    }
    let start_off = off_axis(&trace.start, vstar.as_slice());
    if start_off > 1e-9 {
        return MonitorReport::inapplicable(
            format!("start is {start_off} away from the top eigenvector"),
            tol,
        );
    }
    let w = vstar.as_slice();
    let projected: Vec<(f64, Vec<f64>)> = trace
        .iterate()
        .map(|(s, v)| {
            let n = norm2(v).sqrt();
            let c = dot(v, w);
            let p = v.iter().zip(w).map(|(vi, wi)| (vi - c * wi) / n).collect();
            (s, p)
        })
        .collect();
    let check = |a: usize, b: usize| {
        let (sa, pa) = &projected[a];
        let (sb, pb) = &projected[b];
        let lhs: f64 = pa.iter().zip(pb).map(|(x, y)| (y - x).powi(2)).sum();
        MonitorEntry {
            from: a,
            to: b,
            lhs,
            rhs: 4.0 * sigma2 * (sb - sa),
        }
    };
    let mut c = Collector::new(tol);
    let len = projected.len();
    for a in 0..len.saturating_sub(1) {
        c.push(check(a, a + 1));
    }
    if len >= 2 {
        for _ in 0..pair_sample {
            let mut ab = sample(rng, len, 2).into_vec();
            ab.sort_unstable();
            c.push(check(ab[0], ab[1]));
        }
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la::{default_max_iters, sigma_pair, top_two_eigs, StreamMatrix, DEFAULT_TOL};
    use crate::oja::{oja_run, oja_run_from, OjaState};

    fn traced(x: &StreamMatrix, start: UnitVec, eta: f64) -> OjaTrace {
        let st = OjaState::from_start(start, eta, 52).unwrap();
        oja_run_from(st, x, true).unwrap().trace.unwrap()
    }

    fn small_spiked(seed: u64) -> StreamMatrix {
        let mut rng = Prng::new(seed);
        let v = UnitVec::normalize(vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                let z = rng.gaussian_vec(4);
                let c = 3.0 * rng.gaussian();
                z.iter()
                    .zip(v.as_slice())
                    .map(|(zi, vi)| 0.3 * zi + c * vi)
                    .collect()
            })
            .collect();
        StreamMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn start_on_top_eigenvector_keeps_within_sqrt_sigma2() {
        let x = small_spiked(1);
        let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(4)).unwrap();
        let eta = 0.5 / x.max_row_norm2();
        let (_, sigma2) = sigma_pair(&x, eta, &s, DEFAULT_TOL).unwrap();
        let t = traced(&x, s.vstar.clone(), eta);
        let r = monitor_growth_correctness(&t, &s.vstar, sigma2, 0.0, DEFAULT_MONITOR_TOL);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.n_checks, x.n() + 1);
        let m = monitor_movement(
            &t,
            &s.vstar,
            sigma2,
            500,
            &mut Prng::new(2),
            DEFAULT_MONITOR_TOL,
        );
        assert!(m.passed(), "{m:?}");
        assert_eq!(m.n_checks, x.n() + 500);
    }

    #[test]
    fn rows_along_vstar_never_move_off_axis() {
        let v = UnitVec::normalize(vec![1.0, 1.0, 0.0]).unwrap();
        let rows: Vec<Vec<f64>> = (1..40)
            .map(|i| v.as_slice().iter().map(|c| c * (i % 3) as f64).collect())
            .collect();
        let x = StreamMatrix::from_rows(&rows).unwrap();
        let start = UnitVec::normalize(vec![1.0, 0.0, 1.0]).unwrap();
        let t = traced(&x, start, 0.1);
        let offs: Vec<f64> = t
            .iterate()
            .map(|(_, u)| off_axis(u, v.as_slice()))
            .collect();
        assert!(offs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        let r = monitor_growth_correctness(&t, &v, 0.0, offs[0], DEFAULT_MONITOR_TOL);
        assert!(r.passed());

        let t = traced(&x, v.clone(), 0.1);
        let m = monitor_movement(&t, &v, 0.0, 50, &mut Prng::new(1), DEFAULT_MONITOR_TOL);
        assert!(m.passed(), "{m:?}");
        assert!(m.details.iter().all(|e| e.lhs <= 1e-24 && e.rhs >= 0.0));
    }

    #[test]
    fn precondition_violations_are_inapplicable() {
        let x = StreamMatrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let t = oja_run(&x, 1.0, 52, &mut Prng::new(1), true)
            .unwrap()
            .trace
            .unwrap();
        let v = UnitVec::basis(2, 0);
        let r = monitor_growth_correctness(&t, &v, 0.0, 1.0, DEFAULT_MONITOR_TOL);
        assert_eq!(r.status, CheckStatus::Inapplicable);

        let x = StreamMatrix::from_rows(&[vec![0.5, 0.0]]).unwrap();
        let t = traced(&x, UnitVec::basis(2, 1), 1.0);
        let m = monitor_movement(&t, &v, 0.0, 5, &mut Prng::new(1), DEFAULT_MONITOR_TOL);
        assert_eq!(m.status, CheckStatus::Inapplicable);
    }

    #[test]
    fn a_wrong_sigma2_is_caught() {
        let x = small_spiked(4);
        let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(4)).unwrap();
        let eta = 0.5 / x.max_row_norm2();
        let t = traced(&x, s.vstar.clone(), eta);
        let m = monitor_movement(&t, &s.vstar, 0.0, 0, &mut Prng::new(1), DEFAULT_MONITOR_TOL);
        assert_eq!(m.status, CheckStatus::Fail);
        assert!(m.max_violation > DEFAULT_MONITOR_TOL);
    }
}
