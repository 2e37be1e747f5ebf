use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use streampca::baselines::FdSketch;
use streampca::generators::{
    gen_mergeable_hard, gen_partial_duplicate, gen_spiked, Aux, StreamSpec,
};
use streampca::grid::{grid_half_width, grid_run, required_bits};
use streampca::la::{
    default_max_iters, dot, norm2, sin2_error, top_two_eigs, DEFAULT_TOL, FULL_PRECISION,
};
use streampca::oja::{default_threshold, oja_run, OjaState, PcaResult};
use streampca::{Prng, StreamMatrix, UnitVec};

fn dense_gram(x: &StreamMatrix) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(x.n(), x.d(), x.as_flat());
    m.transpose() * m
}

fn top_two_dense(g: DMatrix<f64>) -> (f64, f64) {
    let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    (ev[0], ev.get(1).copied().unwrap_or(0.0).max(0.0))
}

fn gaussian_stream(n: usize, d: usize, seed: u64) -> StreamMatrix {
    StreamMatrix::from_flat(n, d, Prng::new(seed).gaussian_vec(n * d)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn oracle_matches_dense_eigensolver(d in 1usize..=32, n in 1usize..80, seed in any::<u64>()) {
        let x = gaussian_stream(n, d, seed);
        let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d)).unwrap();
        let (l1, l2) = top_two_dense(dense_gram(&x));
        prop_assert!((s.lambda1 - l1).abs() <= 1e-8 * l1);
        prop_assert!((s.lambda2 - l2).abs() <= 1e-8 * l1);
    }

    #[test]
    fn growth_step_lower_bound(d in 2usize..12, n in 1usize..60, seed in any::<u64>(), load in 0.01f64..1.0) {
        let x = gaussian_stream(n, d, seed);
        let eta = load / x.max_row_norm2();
        let mut st = OjaState::init(d, eta, FULL_PRECISION, &mut Prng::new(seed ^ 1)).unwrap();
        for r in x.rows() {
            let before = st.vhat().to_vec();
            let inc = st.step(r).unwrap();
            let proj = dot(r, &before);
            prop_assert!(inc >= 0.5 * eta * proj * proj * (1.0 - 1e-12));
        }
    }

    #[test]
    fn answers_respect_residual_bound(
        d in 3usize..24,
        n in 64usize..600,
        ratio in 1.5f64..300.0,
        factor in 2.0f64..40.0,
        seed in any::<u64>(),
    ) {
        let (x, _) = gen_spiked(d, n, ratio, 1.0, seed).unwrap();
        let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d)).unwrap();
        let eta = (factor * (d as f64).ln() / s.lambda1).min(1.0 / x.max_row_norm2());
        let out = oja_run(&x, eta, FULL_PRECISION, &mut Prng::new(seed ^ 7), false).unwrap();
        if let PcaResult::Answer(v) = &out.result {
            prop_assert!(out.state.log_norm() > default_threshold(d));
            let bound = (eta * s.lambda2).sqrt() + 1e-6 + (d as f64).powi(-9);
            prop_assert!(sin2_error(v, &s.vstar).sqrt() <= bound);
        }
    }

    #[test]
    fn grid_selection_and_rate_coverage(
        d in 2usize..10,
        n in 8usize..120,
        ratio in 2.0f64..500.0,
        seed in any::<u64>(),
    ) {
        let (x, _) = gen_spiked(d, n, ratio, 1.0, seed).unwrap();
        let b = required_bits(&x);
        let out = grid_run(&x, b, FULL_PRECISION, &Prng::new(seed)).unwrap();
        let diag = &out.diagnostics;
        let half = grid_half_width(d, n, b);
        prop_assert_eq!(diag.outcomes.len() as i64, 2 * half + 1);

        // i* is the first answering index.
        let first = diag.outcomes.iter().position(|o| !o.abstained);
        prop_assert_eq!(diag.chosen, first);

        // Some grid rate puts η λ₁ inside [10 ln d, 20 ln d].
        let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d)).unwrap();
        let target = 10.0 * (d as f64).ln();
        let covered = diag
            .outcomes
            .iter()
            .any(|o| (target..=2.0 * target).contains(&(o.eta * s.lambda1)));
        prop_assert!(covered);
    }

    #[test]
    fn heavy_row_answer_is_accurate(
        d in 3usize..10,
        n in 200usize..400,
        spike in 100f64..10_000.0,
        at in 0usize..200,
        seed in any::<u64>(),
    ) {
        let (base, truth) = gen_spiked(d, n, 50.0, 1.0, seed).unwrap();
        let planted = truth.planted.unwrap();
        let heavy: Vec<f64> = planted.as_slice().iter().map(|v| v * spike).collect();
        let mut rows: Vec<Vec<f64>> = base.rows().map(<[f64]>::to_vec).collect();
        rows.insert(at, heavy);
        let x = StreamMatrix::from_rows(&rows).unwrap();
        let b = required_bits(&x);
        let out = grid_run(&x, b, FULL_PRECISION, &Prng::new(seed)).unwrap();
        let diag = &out.diagnostics;
        if diag.heavy_row {
            let s = top_two_eigs(&x, DEFAULT_TOL, default_max_iters(d)).unwrap();
            let eta = diag.chosen_eta().unwrap();
            let v = out.result.answer().unwrap();
            let limit = 2.0 * 10.0 * (d as f64).ln() / (s.ratio * eta * diag.xbar_norm2) + 1e-6;
            prop_assert!(sin2_error(v, &s.vstar) <= limit);
        }
    }

    #[test]
    fn fd_spectral_error_within_frobenius_budget(
        d in 2usize..=64,
        n in 1usize..200,
        ell in 1usize..20,
        seed in any::<u64>(),
    ) {
        let x = gaussian_stream(n, d, seed);
        let mut sk = FdSketch::new(ell, d).unwrap();
        for r in x.rows() {
            sk.update(r).unwrap();
        }
        let b = DMatrix::from_row_slice(d, d, sk.gram().as_slice());
        let diff = dense_gram(&x) - b;
        let err = SymmetricEigen::new(diff)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(err <= x.frobenius2() / ell as f64 * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn generators_are_pure(seed in any::<u64>(), d in 2usize..16, n in 1usize..50) {
        let spec = StreamSpec::Spiked { d, n, lambda1_over_n: 9.0, lambda2_over_n: 1.0, seed };
        prop_assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        let spec = StreamSpec::PartialDuplicate { d: 2 * d, n, k: 3, seed };
        prop_assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
    }

    #[test]
    fn partial_duplicate_halves(half in 1usize..64, k in 1usize..6, n in 0usize..8, seed in any::<u64>()) {
        let d = 2 * half;
        let (x, _) = gen_partial_duplicate(d, n, k, seed).unwrap();
        let (first, dup) = (x.row(0), x.row(1));
        let y: Vec<f64> = first.iter().zip(dup).map(|(a, b)| a - b).collect();
        prop_assert_eq!(norm2(dup), half as f64);
        prop_assert_eq!(norm2(&y), half as f64);
        prop_assert!((1..=k).all(|i| x.row(i) == dup));
    }

    #[test]
    fn mergeable_one_planted_row_per_block(p in 2usize..6, blocks in 1usize..8, seed in any::<u64>()) {
        let d = p * blocks * 4;
        let (x, truth) = gen_mergeable_hard(d, p, seed).unwrap();
        let Aux::MergeableHard { block_starts, planted_rows } = truth.aux else {
            panic!("mergeable instance records its blocks");
        };
        let mut ends = block_starts[1..].to_vec();
        ends.push(x.n());
        for (start, end) in block_starts.iter().zip(&ends) {
            let hits = planted_rows.iter().filter(|&&r| (*start..*end).contains(&r)).count();
            prop_assert_eq!(hits, 1);
        }
        let planted = truth.planted.unwrap();
        for &r in &planted_rows {
            let row = UnitVec::normalize(x.row(r).to_vec()).unwrap();
            prop_assert!(sin2_error(&row, &planted) <= 1e-12);
        }
    }
}
