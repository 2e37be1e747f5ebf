//! Unknown learning rate: run the growth-checked Oja in parallel at every
//! `η = 2^i`, `|i| ≤ 4b + ⌈ln(n d²)⌉ + 2`, and track the row of largest norm.
//!
//! At the end the smallest non-abstaining rate `η_{i*}` wins, unless a single
//! row is heavy enough that `η_{i*}‖x̄‖² ≥ 1`; then `x̄/‖x̄‖` is returned.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::la::{norm2, Prng, StreamMatrix, UnitVec};
use crate::oja::{OjaState, PcaResult};

/// Constant slack added to the exponent range.
pub const GRID_SLACK: i64 = 2;

/// Largest `|i|` in the grid.
pub fn grid_half_width(d: usize, n: usize, b: u32) -> i64 {
    let nd2 = n as f64 * (d as f64) * (d as f64);
    4 * b as i64 + nd2.ln().ceil() as i64 + GRID_SLACK
}

pub fn grid_size(d: usize, n: usize, b: u32) -> usize {
    (2 * grid_half_width(d, n, b) + 1) as usize
}

/// `b ≥ 1` and `b > ln(dn)`.
pub fn check_bit_bound(d: usize, n: usize, b: u32) -> Result<()> {
    let floor = (d as f64 * n as f64).ln();
    if b == 0 || (b as f64) <= floor {
        return Err(Error::InvalidParameter(format!(
            "bit bound b = {b} must exceed ln(dn) = {floor:.3}"
        )));
    }
    Ok(())
}

/// Every entry is 0 or has magnitude in `[2^-b, 2^b]`.
pub fn check_row_range(row: &[f64], b: u32, row_index: usize) -> Result<()> {
    let lo = 2f64.powi(-(b as i32));
    let hi = 2f64.powi(b as i32);
    for (col, &v) in row.iter().enumerate() {
        let m = v.abs();
        if v != 0.0 && !(lo..=hi).contains(&m) {
            return Err(Error::OutOfRange {
                row: row_index,
                col,
                value: v,
                bits: b,
            });
        }
    }
    Ok(())
}

/// Smallest `b` that covers every entry and exceeds `ln(dn)`. Needs a
/// separate pass over the data.
pub fn required_bits(x: &StreamMatrix) -> u32 {
    let mut need = 1i64;
    for &v in x.as_flat() {
        if v != 0.0 {
            let m = v.abs();
            // smallest integer b with 2^-b <= m <= 2^b
            let up = m.log2().ceil() as i64;
            let down = (-m.log2()).ceil() as i64;
            need = need.max(up).max(down);
        }
    }
    let floor = (x.d() as f64 * x.n() as f64).ln().floor() as i64 + 1;
    let mut b = need.max(floor).max(1) as u32;
    // log2 rounding can be off by one at exact powers of two
    while x
        .rows()
        .enumerate()
        .any(|(i, r)| check_row_range(r, b, i).is_err())
    {
        b += 1;
    }
    b
}

#[derive(Debug, Clone)]
pub struct GridEntry {
    pub exponent: i64,
    pub state: OjaState,
}

impl GridEntry {
    pub fn eta(&self) -> f64 {
        self.state.eta()
    }
}

#[derive(Debug, Clone)]
pub struct RateGridState {
    b: u32,
    entries: Vec<GridEntry>,
    xbar: Vec<f64>,
    xbar_norm2: f64,
    xbar_index: Option<usize>,
    rows_seen: usize,
}

/// Outcome of one grid rate at finalize time.
#[derive(Debug, Clone, PartialEq)]
pub struct RateOutcome {
    pub exponent: i64,
    pub eta: f64,
    pub log_norm: f64,
    pub abstained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDiagnostics {
    pub b: u32,
    pub outcomes: Vec<RateOutcome>,
    /// Position of `i*` in `outcomes`.
    pub chosen: Option<usize>,
    pub xbar_norm2: f64,
    pub xbar_index: Option<usize>,
    /// True when the heavy-row branch produced the answer.
    pub heavy_row: bool,
}

impl GridDiagnostics {
    pub fn chosen_eta(&self) -> Option<f64> {
        self.chosen.map(|i| self.outcomes[i].eta)
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub result: PcaResult,
    pub diagnostics: GridDiagnostics,
}

impl RateGridState {
    /// One independently initialized Oja state per grid rate. The start
    /// vector of grid position `k` comes from `rng.fork(k)`.
    pub fn init(d: usize, n: usize, b: u32, mantissa_bits: u32, rng: &Prng) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidParameter("need d >= 1 and n >= 1".into()));
        }
        check_bit_bound(d, n, b)?;
        let w = grid_half_width(d, n, b);
        if w > 1000 {
            return Err(Error::InvalidParameter(format!(
                "grid exponent range ±{w} exceeds the binary64 range"
            )));
        }
        let entries = (-w..=w)
            .enumerate()
            .map(|(k, exponent)| {
                let eta = 2f64.powi(exponent as i32);
                let mut r = rng.fork(k as u64);
                OjaState::init(d, eta, mantissa_bits, &mut r)
                    .map(|state| GridEntry { exponent, state })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RateGridState {
            b,
            entries,
            xbar: vec![0.0; d],
            xbar_norm2: 0.0,
            xbar_index: None,
            rows_seen: 0,
        })
    }

    pub fn entries(&self) -> &[GridEntry] {
        &self.entries
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.xbar.len()
    }

    pub fn xbar(&self) -> Option<&[f64]> {
        self.xbar_index.map(|_| self.xbar.as_slice())
    }

    pub fn xbar_norm2(&self) -> f64 {
        self.xbar_norm2
    }

    /// Reals held: `d + 2` per grid state plus `x̄` and `‖x̄‖²`.
    pub fn state_reals(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.state.state_reals())
            .sum::<usize>()
            + self.xbar.len()
            + 1
    }

    fn ingest(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        crate::la::check_finite(x)?;
        check_row_range(x, self.b, self.rows_seen)?;
        let nx = norm2(x);
        if self.xbar_index.is_none() || nx > self.xbar_norm2 {
            self.xbar.copy_from_slice(x);
            self.xbar_norm2 = nx;
            self.xbar_index = Some(self.rows_seen);
        }
        self.rows_seen += 1;
        Ok(())
    }

    /// Feeds one row to every grid state and updates `x̄` (strictly larger
    /// norm replaces; the earliest row wins ties).
    pub fn step(&mut self, x: &[f64]) -> Result<()> {
        self.ingest(x)?;
        for e in &mut self.entries {
            e.state.step(x)?;
        }
        Ok(())
    }

    /// Feeds a whole stream. Grid states run concurrently, each consuming
    /// the rows in order.
    pub fn run_stream(&mut self, x: &StreamMatrix) -> Result<()> {
        for row in x.rows() {
            self.ingest(row)?;
        }
        self.entries
            .par_iter_mut()
            .try_for_each(|e| x.rows().try_for_each(|r| e.state.step(r).map(|_| ())))
    }

    pub fn finalize(&self) -> GridOutcome {
        let outcomes: Vec<RateOutcome> = self
            .entries
            .iter()
            .map(|e| RateOutcome {
                exponent: e.exponent,
                eta: e.eta(),
                log_norm: e.state.log_norm(),
                abstained: e.state.finalize().is_bottom(),
            })
            .collect();
        let chosen = outcomes.iter().position(|o| !o.abstained);
        let mut diagnostics = GridDiagnostics {
            b: self.b,
            outcomes,
            chosen,
            xbar_norm2: self.xbar_norm2,
            xbar_index: self.xbar_index,
            heavy_row: false,
        };
        let result = match chosen {
            None => PcaResult::Bottom,
            Some(k) => {
                let eta = self.entries[k].eta();
                // Squared norm, matching the η‖x‖² ≤ 1 condition of the
                // single-rate guarantee.
                if eta * self.xbar_norm2 >= 1.0 {
                    match UnitVec::normalize(self.xbar.clone()) {
                        Ok(v) => {
                            diagnostics.heavy_row = true;
                            PcaResult::Answer(v)
                        }
                        Err(_) => self.entries[k].state.finalize(),
                    }
                } else {
                    self.entries[k].state.finalize()
                }
            }
        };
        GridOutcome {
            result,
            diagnostics,
        }
    }
}

/// One pass of the full algorithm over `x` with bit bound `b`.
pub fn grid_run(x: &StreamMatrix, b: u32, mantissa_bits: u32, rng: &Prng) -> Result<GridOutcome> {
    let mut st = RateGridState::init(x.d(), x.n(), b, mantissa_bits, rng)?;
    st.run_stream(x)?;
    Ok(st.finalize())
}
