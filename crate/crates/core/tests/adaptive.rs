mod common;

use knee_motion::adaptive::{
    adaptive_rms, coeff_trend_r2, fit_adaptive, fit_cadence, AdaptiveRegressor, CadenceEstimator, FitMode,
    TrainingTrial,
};
use knee_motion::gait::GaitCondition;
use knee_motion::synergy::{fit_a, LinearKneeMap};
use knee_motion::Error;
use nalgebra::Matrix2x5;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_theta(rng: &mut ChaCha8Rng) -> [f64; 5] {
    [
        rng.random_range(1.2..1.9),
        rng.random_range(-3.0..1.0),
        rng.random_range(2.8..4.0),
        rng.random_range(-6.0..6.0),
        1.0,
    ]
}

/// Trials whose knee is exactly `A(θTO)·θ12` for the planted β.
fn planted(seed: u64, trials: usize) -> (AdaptiveRegressor, Vec<TrainingTrial>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = [[[0.0; 5]; 5]; 2];
    for v in beta.iter_mut().flatten().flatten() {
        *v = rng.random_range(-1.0..1.0);
    }
    let truth = AdaptiveRegressor { beta, cadences: vec![] };
    let data = (0..trials)
        .map(|k| {
            let theta_to = random_theta(&mut rng);
            let a = truth.realize_a(&theta_to);
            let samples = (0..30)
                .map(|_| {
                    let th = random_theta(&mut rng);
                    let y = a.predict(&th);
                    (th, [y.q3, y.q3dot])
                })
                .collect();
            TrainingTrial {
                cadence: [85.0, 100.0, 115.0, 130.0][k % 4],
                theta_to,
                samples,
            }
        })
        .collect();
    (truth, data)
}

fn max_beta_diff(a: &AdaptiveRegressor, b: &AdaptiveRegressor) -> f64 {
    a.beta
        .iter()
        .flatten()
        .flatten()
        .zip(b.beta.iter().flatten().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn joint_fit_recovers_planted_beta() {
    let (truth, data) = planted(1, 12);
    let fit = fit_adaptive(&data, FitMode::Joint).unwrap();
    assert!(max_beta_diff(&fit, &truth) <= 1e-7, "{}", max_beta_diff(&fit, &truth));
    assert_eq!(fit.cadences, vec![85.0, 100.0, 115.0, 130.0]);
    for t in &data {
        let rms = adaptive_rms(&fit, t);
        assert!(rms[0] <= 1e-7 && rms[1] <= 1e-7);
        // realized A equals the per-trial least-squares A
        let per_trial = fit_a(&t.samples).unwrap().map;
        assert!((fit.realize_a(&t.theta_to).a - per_trial.a).amax() < 1e-7);
    }
    let two = fit_adaptive(&data, FitMode::TwoStage).unwrap();
    assert!(max_beta_diff(&two, &truth) <= 1e-7);
}

#[test]
fn single_cadence_is_rejected() {
    let (_, mut data) = planted(2, 8);
    for t in &mut data {
        t.cadence = 100.0;
    }
    assert!(fit_adaptive(&data, FitMode::Joint).is_err());
}

#[test]
fn shared_toe_off_state_is_rank_deficient() {
    let (_, mut data) = planted(3, 8);
    let shared = data[0].theta_to;
    for t in &mut data {
        t.theta_to = shared;
    }
    assert!(matches!(
        fit_adaptive(&data, FitMode::Joint),
        Err(Error::RankDeficient { .. })
    ));
}

#[test]
fn toe_off_independent_knee_reduces_to_fit_a() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = LinearKneeMap::new(Matrix2x5::from_fn(|_, _| rng.random_range(-2.0..2.0)));
    let data: Vec<TrainingTrial> = (0..10)
        .map(|k| TrainingTrial {
            cadence: 80.0 + 10.0 * k as f64,
            theta_to: random_theta(&mut rng),
            samples: (0..25)
                .map(|_| {
                    let th = random_theta(&mut rng);
                    let y = a.predict(&th);
                    (th, [y.q3, y.q3dot])
                })
                .collect(),
        })
        .collect();
    let fit = fit_adaptive(&data, FitMode::Joint).unwrap();
    let pooled: Vec<_> = data.iter().flat_map(|t| t.samples.clone()).collect();
    let direct = fit_a(&pooled).unwrap().map;
    for _ in 0..5 {
        let th = random_theta(&mut rng);
        assert!((fit.realize_a(&th).a - direct.a).amax() < 1e-7);
    }
    // only the constant slot of each β is active
    for bij in fit.beta.iter().flatten() {
        assert!(bij[..4].iter().all(|v| v.abs() < 1e-7));
    }
}

#[test]
fn cadence_estimator_recovers_planted_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = [30.0, -12.0, 8.0, 4.5, 60.0];
    let truth = CadenceEstimator { c };
    let pairs: Vec<_> = (0..12)
        .map(|_| {
            let th = random_theta(&mut rng);
            (th, truth.estimate(&th))
        })
        .collect();
    let fit = fit_cadence(&pairs).unwrap();
    for (f, c) in fit.c.iter().zip(&c) {
        assert!((f - c).abs() <= 1e-8);
    }
    for (th, v) in &pairs {
        assert!((fit.estimate(th) - v).abs() < 1e-8);
    }
}

#[test]
fn identical_toe_off_states_cannot_fit_cadence() {
    let pairs = vec![([1.5, -1.0, 3.2, 2.0, 1.0], 100.0); 6];
    assert!(fit_cadence(&pairs).is_err());
    let mut mixed = pairs.clone();
    mixed[0].1 = 90.0;
    assert!(matches!(fit_cadence(&mixed), Err(Error::RankDeficient { .. })));
}

proptest! {
    #[test]
    fn realize_a_and_estimate_are_linear(seed in 0u64..100, s in -2.0f64..2.0) {
        let (truth, _) = planted(seed, 0);
        let e = CadenceEstimator { c: [1.0, -2.0, 0.5, 3.0, 7.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        let x = random_theta(&mut rng);
        let y = random_theta(&mut rng);
        let mut z = [0.0; 5];
        for i in 0..5 { z[i] = s * x[i] + y[i]; }
        let lhs = truth.realize_a(&z).a;
        let rhs = truth.realize_a(&x).a * s + truth.realize_a(&y).a;
        prop_assert!((lhs - rhs).amax() < 1e-12);
        prop_assert!((e.estimate(&z) - (s * e.estimate(&x) + e.estimate(&y))).abs() < 1e-10);
    }
}

#[test]
fn synthetic_suite_bands() {
    let suite = common::suite(1000, GaitCondition::Steady);
    let train = common::training(&suite);
    let reg = fit_adaptive(&train, FitMode::Joint).unwrap();
    for t in &train {
        assert!(adaptive_rms(&reg, t)[0] <= 0.15);
    }
    let restored = AdaptiveRegressor::from_text(&reg.to_text()).unwrap();
    assert_eq!(restored, reg);

    let pairs: Vec<_> = train.iter().map(|t| (t.theta_to, t.cadence)).collect();
    let est = fit_cadence(&pairs).unwrap();
    let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let ss_res: f64 = pairs.iter().map(|(th, v)| (est.estimate(th) - v).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(_, v)| (v - mean).powi(2)).sum();
    assert!(1.0 - ss_res / ss_tot >= 0.99);

    let per_cadence: Vec<(f64, LinearKneeMap)> = [85.0, 100.0, 115.0, 130.0]
        .iter()
        .map(|&c| {
            let s: Vec<_> = train
                .iter()
                .filter(|t| t.cadence == c)
                .flat_map(|t| t.samples.clone())
                .collect();
            (c, fit_a(&s).unwrap().map)
        })
        .collect();
    let rep = coeff_trend_r2("synthetic", &per_cadence).unwrap();
    assert!(rep.r2.iter().flatten().all(|&r| (0.0..=1.0).contains(&r)));
}
