//! Reference algorithms: the FrequentDirections sketch and the exact `d × d`
//! covariance accumulator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::la::{
    check_finite, default_max_iters, top_eigenpair, DenseSym, SymOperator, UnitVec, DEFAULT_TOL,
};

/// FrequentDirections with `ell` sketch rows.
///
/// A full buffer is shrunk by its smallest squared singular value, which
/// zeroes one row and keeps `‖XᵀX - BᵀB‖₂ ≤ ‖X‖_F² / ell`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdSketch {
    ell: usize,
    d: usize,
    /// `ell × d`, row-major; rows `filled..` are zero.
    rows: Vec<f64>,
    filled: usize,
    shrink_total: f64,
}

impl FdSketch {
    pub fn new(ell: usize, d: usize) -> Result<Self> {
        if ell == 0 || d == 0 {
            return Err(Error::InvalidParameter("need ell >= 1 and d >= 1".into()));
        }
        Ok(FdSketch {
            ell,
            d,
            rows: vec![0.0; ell * d],
            filled: 0,
            shrink_total: 0.0,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Sum of all shrink amounts; bounds `‖XᵀX - BᵀB‖₂` from above.
    pub fn shrink_total(&self) -> f64 {
        self.shrink_total
    }

    pub fn state_reals(&self) -> usize {
        self.rows.len() + 1
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.d)
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        check_finite(x)?;
        if self.filled == self.ell {
            self.shrink();
        }
        let i = self.filled;
        self.rows[i * self.d..(i + 1) * self.d].copy_from_slice(x);
        self.filled += 1;
        Ok(())
    }

    fn svd(&self) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
        let b = DMatrix::from_row_slice(self.filled, self.d, &self.rows[..self.filled * self.d]);
        b.svd(false, true)
    }

    /// Rewrites the buffer as `diag(√(σ² - δ)) Vᵀ`, sorted by σ.
    fn shrink(&mut self) {
        let svd = self.svd();
        let vt = svd.v_t.as_ref().expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let k = order.len();
        // Fewer singular values than rows: the buffer compacts without loss.
        let delta = if k < self.ell {
            0.0
        } else {
            svd.singular_values[order[k - 1]].powi(2)
        };
        self.rows.fill(0.0);
        let mut kept = 0;
        for &j in &order {
            let s2 = svd.singular_values[j].powi(2) - delta;
            if s2 <= 0.0 {
                continue;
            }
            let s = s2.sqrt();
            let dst = &mut self.rows[kept * self.d..(kept + 1) * self.d];
            for (c, out) in dst.iter_mut().enumerate() {
                *out = s * vt[(j, c)];
            }
            kept += 1;
        }
        self.filled = kept;
        self.shrink_total += delta;
    }

    /// `BᵀB`.
    pub fn gram(&self) -> DenseSym {
        let mut g = DenseSym::zeros(self.d);
        for r in self.rows().take(self.filled) {
            g.rank_one_update(1.0, r);
        }
        g
    }

    /// Top right singular vector of `B`, sign-canonicalized.
    pub fn top_direction(&self) -> Result<UnitVec> {
        if self.rows[..self.filled * self.d].iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroSketch);
        }
        let svd = self.svd();
        let vt = svd.v_t.as_ref().expect("right singular vectors requested");
        let top = svd.singular_values.imax();
        let v: Vec<f64> = (0..self.d).map(|c| vt[(top, c)]).collect();
        Ok(UnitVec::normalize(v)?.canonical_sign())
    }

    /// Sketch of the union of both inputs: the other sketch's rows are
    /// inserted into this one.
    pub fn merge(&mut self, other: &FdSketch) -> Result<()> {
        if other.d != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        for r in other.rows().take(other.filled) {
            self.update(r)?;
        }
        self.shrink_total += other.shrink_total;
        Ok(())
    }
}

/// Running `G = XᵀX`, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct CovAccumulator {
    g: DenseSym,
}

impl CovAccumulator {
    pub fn new(d: usize) -> Self {
        CovAccumulator {
            g: DenseSym::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        check_finite(x)?;
        self.g.rank_one_update(1.0, x);
        Ok(())
    }

    pub fn gram(&self) -> &DenseSym {
        &self.g
    }

    pub fn state_reals(&self) -> usize {
        self.g.as_slice().len()
    }

    pub fn top(&self) -> Result<UnitVec> {
        if self.g.is_zero() {
            return Err(Error::ZeroMatrix);
        }
        let p = top_eigenpair(&self.g, DEFAULT_TOL, default_max_iters(self.dim()))?;
        UnitVec::new(p.vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la::{sin2_error, top_two_eigs, Prng, StreamMatrix};
    use nalgebra::SymmetricEigen;

    fn e(d: usize, i: usize) -> Vec<f64> {
        UnitVec::basis(d, i).into_inner()
    }

    fn dense(g: &DenseSym) -> DMatrix<f64> {
        DMatrix::from_row_slice(g.dim(), g.dim(), g.as_slice())
    }

    fn spectral_norm(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(m.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    fn sign_matrix(n: usize, d: usize, seed: u64) -> StreamMatrix {
        let mut rng = Prng::new(seed);
        let data = (0..n * d).map(|_| rng.sign()).collect();
        StreamMatrix::from_flat(n, d, data).unwrap()
    }

    fn fd_of(x: &StreamMatrix, ell: usize) -> FdSketch {
        let mut sk = FdSketch::new(ell, x.d()).unwrap();
        for r in x.rows() {
            sk.update(r).unwrap();
        }
        sk
    }

    #[test]
    fn single_row_is_stored_exactly() {
        let x = [1.0, -2.0, 0.5];
        let mut sk = FdSketch::new(2, 3).unwrap();
        sk.update(&x).unwrap();
        let mut want = DenseSym::zeros(3);
        want.rank_one_update(1.0, &x);
        assert_eq!(sk.gram(), want);
    }

    #[test]
    fn exact_when_ell_covers_the_stream() {
        let d = 6;
        let x = sign_matrix(2 * d, d, 11);
        let sk = fd_of(&x, 2 * d);
        let diff = dense(&x.gram()) - dense(&sk.gram());
        assert!(diff.amax() == 0.0);
        assert_eq!(sk.shrink_total(), 0.0);
    }

    #[test]
    fn deterministic_guarantee_on_sign_matrix() {
        let x = sign_matrix(256, 32, 5);
        let ell = 16;
        let sk = fd_of(&x, ell);
        let err = spectral_norm(&(dense(&x.gram()) - dense(&sk.gram())));
        assert!(err <= x.frobenius2() / ell as f64, "{err}");
        assert!(err <= sk.shrink_total() * (1.0 + 1e-9));
    }

    #[test]
    fn ell_larger_than_d_compacts_losslessly() {
        let x = sign_matrix(40, 4, 3);
        let sk = fd_of(&x, 6);
        let diff = dense(&x.gram()) - dense(&sk.gram());
        assert!(diff.amax() <= 1e-9 * x.frobenius2());
    }

    #[test]
    fn top_direction_diagonal_case() {
        let sk = fd_of(
            &StreamMatrix::from_rows(&[e(3, 0), e(3, 0), e(3, 1)]).unwrap(),
            4,
        );
        assert_eq!(sk.top_direction().unwrap(), UnitVec::basis(3, 0));
    }

    #[test]
    fn top_direction_single_row() {
        let x = vec![0.0, 3.0, -4.0];
        let sk = fd_of(
            &StreamMatrix::from_rows(std::slice::from_ref(&x)).unwrap(),
            2,
        );
        let v = sk.top_direction().unwrap();
        assert!(sin2_error(&v, &UnitVec::normalize(x).unwrap()) <= 1e-15);
        assert!(v.as_slice()[1] > 0.0);
    }

    #[test]
    fn top_direction_matches_oracle_in_exact_regime() {
        let x = sign_matrix(40, 16, 8);
        let sk = fd_of(&x, 40);
        let oracle = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(16)).unwrap();
        assert!(sin2_error(&sk.top_direction().unwrap(), &oracle.vstar) <= 1e-8);
    }

    #[test]
    fn empty_sketch_errors() {
        assert_eq!(
            FdSketch::new(4, 3).unwrap().top_direction(),
            Err(Error::ZeroSketch)
        );
    }

    #[test]
    fn merge_keeps_guarantee() {
        let x = sign_matrix(200, 24, 2);
        let (a, b) = (
            x.prefix(120).unwrap(),
            StreamMatrix::from_rows(&x.rows().skip(120).collect::<Vec<_>>()).unwrap(),
        );
        let ell = 12;
        let mut sa = fd_of(&a, ell);
        sa.merge(&fd_of(&b, ell)).unwrap();
        let err = spectral_norm(&(dense(&x.gram()) - dense(&sa.gram())));
        assert!(err <= 2.0 * x.frobenius2() / ell as f64);
    }

    #[test]
    fn covariance_accumulator_trio() {
        let diag = StreamMatrix::from_rows(&[e(3, 0), e(3, 0), e(3, 1)]).unwrap();
        let mut acc = CovAccumulator::new(3);
        for r in diag.rows() {
            acc.update(r).unwrap();
        }
        assert!(sin2_error(&acc.top().unwrap(), &UnitVec::basis(3, 0)) <= 1e-15);

        let mut acc = CovAccumulator::new(2);
        acc.update(&[3.0, 4.0]).unwrap();
        assert!(
            sin2_error(
                &acc.top().unwrap(),
                &UnitVec::normalize(vec![3.0, 4.0]).unwrap()
            ) <= 1e-15
        );

        let x = sign_matrix(64, 16, 7);
        let mut acc = CovAccumulator::new(16);
        for r in x.rows() {
            acc.update(r).unwrap();
        }
        let oracle = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(16)).unwrap();
        assert!(sin2_error(&acc.top().unwrap(), &oracle.vstar) <= 1e-8);
        assert_eq!(acc.state_reals(), 256);
    }

    #[test]
    fn zero_accumulator_errors() {
        assert_eq!(CovAccumulator::new(3).top(), Err(Error::ZeroMatrix));
    }
}
