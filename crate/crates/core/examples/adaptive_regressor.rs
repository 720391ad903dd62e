//! Toe-off-adaptive knee regressor and cadence estimator trained on four
//! cadences, then evaluated on cadences it has not seen.

use knee_motion::adaptive::{adaptive_rms, fit_adaptive, fit_cadence, FitMode, TrainingTrial, TRAINING_CADENCES};
use knee_motion::dynamics::ModelParams;
use knee_motion::gait::{synth_gait, SynthProfile, DEFAULT_SMOOTHING_WINDOW};
use knee_motion::inertial::{analyze_trial, DEFAULT_SUBSTEPS};

fn trial(p: &ModelParams, cadence: f64, seed: u64) -> knee_motion::Result<TrainingTrial> {
    let t = synth_gait(cadence, &SynthProfile::default(), seed)?;
    TrainingTrial::from_analysis(
        &analyze_trial(p, &t, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS)?,
        cadence,
    )
}

fn main() -> knee_motion::Result<()> {
    let p = ModelParams::default();
    let mut train = Vec::new();
    for &c in &TRAINING_CADENCES {
        for k in 0..5 {
            train.push(trial(&p, c, 10 * c as u64 + k)?);
        }
    }
    let mode = std::env::args()
        .nth(1)
        .map(|m| m.parse())
        .transpose()?
        .unwrap_or(FitMode::Joint);
    let reg = fit_adaptive(&train, mode)?;
    let pairs: Vec<_> = train.iter().map(|t| (t.theta_to, t.cadence)).collect();
    let est = fit_cadence(&pairs)?;

    println!("mode {mode:?}");
    for c in [80.0, 92.0, 108.0, 122.0, 135.0] {
        let t = trial(&p, c, 7)?;
        let rms = adaptive_rms(&reg, &t);
        println!(
            "{c:>5} bpm  estimated {:6.1}  knee RMS {:.4} rad, {:.4} rad/s",
            est.estimate(&t.theta_to),
            rms[0],
            rms[1]
        );
    }
    Ok(())
}
