use knee_motion::dynamics::ModelParams;
use knee_motion::gait::{synth_gait, SynthProfile, DEFAULT_SMOOTHING_WINDOW};
use knee_motion::inertial::{analyze_trial, DEFAULT_SUBSTEPS};
use knee_motion::synergy::{
    contribution_ratios, cumulative, decompose, fit_a, knee_samples, synergy_map, DataMatrix, LinearKneeMap,
};
use knee_motion::Error;
use nalgebra::{DMatrix, Matrix2x5};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn random_data_reconstructs() {
    let x = DataMatrix::from_raw(random_matrix(6, 200, 1)).unwrap();
    let n = x.n() as f64;
    for row in x.x.row_iter() {
        assert!(row.sum().abs() < 1e-9 * n);
    }
    let m = decompose(&x).unwrap();
    assert!((m.reconstruct(6) - &x.x).amax() < 1e-9);
    assert!((m.u.transpose() * m.u - nalgebra::Matrix6::identity()).amax() < 1e-9);
    assert!((m.v.transpose() * &m.v - DMatrix::identity(6, 6)).amax() < 1e-9);
    for k in 1..6 {
        assert!(m.s[k - 1] >= m.s[k]);
    }
}

#[test]
fn rank_one_is_recovered() {
    let u = nalgebra::Vector6::new(0.1, -0.7, 0.2, 0.4, -0.3, 0.45).normalize();
    let mut v: nalgebra::DVector<f64> = nalgebra::DVector::from_fn(50, |i, _| ((i as f64) * 0.3).sin());
    v -= nalgebra::DVector::repeat(50, v.mean());
    v.normalize_mut();
    let x = DataMatrix::from_raw(DMatrix::from_column_slice(6, 50, (u * v.transpose() * 3.5).as_slice())).unwrap();
    let m = decompose(&x).unwrap();
    assert!((m.s[0] - 3.5).abs() < 1e-10);
    assert!(m.s.iter().skip(1).all(|&s| s < 1e-10));
    // sign convention puts the largest entry (−0.7) positive
    assert!((m.u.column(0) + u).amax() < 1e-10);
    assert!((m.v.column(0) + &v).amax() < 1e-10);
}

#[test]
fn exact_rank_four_map_reproduces_training() {
    // intact states span 4 dimensions and the knee is a fixed linear function of them
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let intact = DMatrix::from_fn(4, 60, |_, _| rng.random_range(-1.0..1.0));
    let w = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-2.0..2.0));
    let offset = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let mut raw = DMatrix::zeros(6, 60);
    raw.rows_mut(0, 4).copy_from(&intact);
    raw.rows_mut(4, 2).copy_from(&(&w * &intact));
    for (i, mut row) in raw.row_iter_mut().enumerate() {
        row.add_scalar_mut(offset[i]);
    }
    let m = decompose(&DataMatrix::from_raw(raw.clone()).unwrap())
        .unwrap()
        .with_rank(4)
        .unwrap();
    for c in 0..60 {
        let k = synergy_map(&m, [raw[(0, c)], raw[(1, c)], raw[(2, c)], raw[(3, c)]]).unwrap();
        assert!((k.q3 - raw[(4, c)]).abs() < 1e-8);
        assert!((k.q3dot - raw[(5, c)]).abs() < 1e-8);
    }
}

#[test]
fn full_rank_map_agrees_with_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 80;
    let raw = DMatrix::from_fn(6, n, |i, _| rng.random_range(-1.0..1.0) * (1.0 + i as f64));
    let m = decompose(&DataMatrix::from_raw(raw.clone()).unwrap())
        .unwrap()
        .with_rank(6)
        .unwrap();
    let samples: Vec<_> = (0..n)
        .map(|c| {
            (
                [raw[(0, c)], raw[(1, c)], raw[(2, c)], raw[(3, c)], 1.0],
                [raw[(4, c)], raw[(5, c)]],
            )
        })
        .collect();
    let fit = fit_a(&samples).unwrap();
    for (th, _) in &samples {
        let a = synergy_map(&m, [th[0], th[1], th[2], th[3]]).unwrap();
        let b = fit.map.predict(th);
        assert!((a.q3 - b.q3).abs() < 1e-9 && (a.q3dot - b.q3dot).abs() < 1e-9);
    }
}

#[test]
fn deficient_intact_block_is_reported() {
    // q̇1 duplicates q1: the intact block has rank 3
    let mut raw = random_matrix(6, 30, 5);
    let q1 = raw.row(0).clone_owned();
    raw.set_row(1, &q1);
    let m = decompose(&DataMatrix::from_raw(raw).unwrap())
        .unwrap()
        .with_rank(4)
        .unwrap();
    assert!(matches!(synergy_map(&m, [0.0; 4]), Err(Error::RankDeficient { .. })));
}

type Samples = Vec<([f64; 5], [f64; 2])>;

fn planted(seed: u64) -> (Matrix2x5<f64>, Samples) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix2x5::from_fn(|_, _| rng.random_range(-3.0..3.0));
    let samples = (0..40)
        .map(|_| {
            let th = [
                rng.random_range(1.0..2.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(2.5..4.0),
                rng.random_range(-5.0..5.0),
                1.0,
            ];
            let y = LinearKneeMap::new(a).predict(&th);
            (th, [y.q3, y.q3dot])
        })
        .collect();
    (a, samples)
}

#[test]
fn fit_a_exact_recovery_and_duplicates() {
    let (a, samples) = planted(11);
    let fit = fit_a(&samples).unwrap();
    assert!((fit.map.a - a).amax() <= 1e-8);
    assert!(fit.rms[0] < 1e-10 && fit.rms[1] < 1e-10);
    let doubled: Vec<_> = samples.iter().chain(samples.iter()).copied().collect();
    let fit2 = fit_a(&doubled).unwrap();
    assert!((fit2.map.a - fit.map.a).amax() <= 1e-12);
}

#[test]
fn fit_a_needs_rank_five() {
    let samples: Vec<_> = (0..10).map(|i| ([1.0, 0.0, 3.0, 0.0, 1.0], [i as f64, 0.0])).collect();
    assert!(matches!(fit_a(&samples), Err(Error::RankDeficient { .. })));
}

proptest! {
    #[test]
    fn ratios_are_a_distribution(s in proptest::collection::vec(0.0f64..10.0, 6)) {
        prop_assume!(s.iter().any(|&v| v > 1e-6));
        let mut s = s;
        s.sort_by(|a, b| b.total_cmp(a));
        let r = contribution_ratios(&s).unwrap();
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 1..6 {
            prop_assert!(r[k] >= 0.0 && r[k] <= r[k - 1]);
        }
        let c = cumulative(&r);
        prop_assert!((c[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_a_is_equivariant_to_knee_units(d0 in 0.1f64..10.0, d1 in 0.1f64..10.0, seed in 0u64..50) {
        let (_, samples) = planted(seed);
        let fit = fit_a(&samples).unwrap().map.a;
        let scaled: Vec<_> = samples.iter().map(|(th, y)| (*th, [d0 * y[0], d1 * y[1]])).collect();
        let fit2 = fit_a(&scaled).unwrap().map.a;
        let d = nalgebra::Matrix2::new(d0, 0.0, 0.0, d1);
        prop_assert!((fit2 - d * fit).amax() < 1e-9 * (1.0 + fit.amax() * d0.max(d1)));
    }

    #[test]
    fn predict_is_linear(a in proptest::array::uniform10(-2.0f64..2.0),
                         x in proptest::array::uniform5(-2.0f64..2.0),
                         y in proptest::array::uniform5(-2.0f64..2.0),
                         s in -3.0f64..3.0) {
        let m = LinearKneeMap::new(Matrix2x5::from_row_slice(&a));
        let mut z = [0.0; 5];
        for i in 0..5 { z[i] = s * x[i] + y[i]; }
        let (px, py, pz) = (m.predict(&x), m.predict(&y), m.predict(&z));
        prop_assert!((pz.q3 - (s * px.q3 + py.q3)).abs() < 1e-12);
        prop_assert!((pz.q3dot - (s * px.q3dot + py.q3dot)).abs() < 1e-12);
    }
}

#[test]
fn synthetic_suite_has_four_synergies() {
    let p = ModelParams::default();
    for &cadence in &[85.0, 100.0, 115.0, 130.0] {
        let analyses: Vec<_> = (0..5)
            .map(|k| {
                let t = synth_gait(cadence, &SynthProfile::default(), 100 + k).unwrap();
                analyze_trial(&p, &t, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS).unwrap()
            })
            .collect();
        let x = DataMatrix::pooled(analyses.iter().map(|a| (&a.derived, a.trajectory()))).unwrap();
        let m = decompose(&x).unwrap();
        let c = cumulative(&m.contribution_ratios().unwrap());
        println!("{cadence} bpm cumulative {:?}", c);
        assert!(c[3] >= 0.99, "{cadence} bpm: r = 4 explains {:.5}", c[3]);

        let samples: Vec<_> = analyses
            .iter()
            .flat_map(|a| knee_samples(&a.derived, a.trajectory()).unwrap())
            .collect();
        let fit = fit_a(&samples).unwrap();
        println!("{cadence} bpm fit rms {:?}", fit.rms);
        assert!(fit.rms[0] < 0.15);
    }
}
