//! Zero-torque knee motion for one trial: T0 grid search, per-phase error
//! and a generated-against-reference chart.

use knee_motion::dynamics::ModelParams;
use knee_motion::gait::{synth_gait, SynthProfile, DEFAULT_SMOOTHING_WINDOW, PHASE_NAMES};
use knee_motion::inertial::{analyze_trial, DEFAULT_SUBSTEPS};
use knee_motion::plot::{LineChart, Series};

fn main() -> knee_motion::Result<()> {
    let cadence: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100.0);
    let p = ModelParams::default();
    let trial = synth_gait(cadence, &SynthProfile::default(), 1)?;
    let a = analyze_trial(&p, &trial, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS)?;

    println!(
        "T0 = {:.4} s, cost {:.3e}, {} candidates",
        a.search.t0,
        a.search.cost,
        a.search.candidates.len()
    );
    for (name, e) in PHASE_NAMES.iter().zip(a.phase_errors) {
        println!("{name:>9}: mean |error| {e:.4} rad");
    }

    let t = trial.times();
    let chart = LineChart::new(format!("Knee angle at {cadence} bpm"), "time (s)", "q3 (rad)")
        .with(Series::line("reference", &t, trial.q3()))
        .with(Series::line("inertial", &t, &a.trajectory().angles()).dashed())
        .vline(a.events.max_flexion, "t1")
        .vline(a.events.max_ext_velocity, "t2");
    let path = std::env::temp_dir().join("inertial_motion.svg");
    std::fs::write(&path, chart.to_svg()).map_err(|e| knee_motion::Error::io("writing chart", e))?;
    println!("chart: {}", path.display());
    Ok(())
}
