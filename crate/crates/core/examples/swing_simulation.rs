//! Closed-loop swing with the adaptive regressor: steady walking at four
//! cadences, then a first step from standing with the same regressor and
//! with a map fitted on first steps.

use knee_motion::adaptive::{fit_adaptive, FitMode, TrainingTrial, TRAINING_CADENCES};
use knee_motion::dynamics::ModelParams;
use knee_motion::gait::{differentiate, synth_gait, GaitCondition, SynthProfile, DEFAULT_SMOOTHING_WINDOW};
use knee_motion::inertial::{analyze_trial, KneeState, DEFAULT_SUBSTEPS};
use knee_motion::plot::stick_figure;
use knee_motion::simulate::{
    final_knee_angle, min_clearance, simulate_swing, torque_phase_stats, ControllerGains, DampingParams, DesiredSource,
    SimResult,
};
use knee_motion::synergy::{fit_a, knee_samples};

fn run(
    p: &ModelParams,
    cond: GaitCondition,
    cadence: f64,
    seed: u64,
    source: &DesiredSource,
) -> knee_motion::Result<(SimResult, f64)> {
    let t = synth_gait(cadence, &SynthProfile::with_condition(cond), seed)?;
    let d = differentiate(&t, DEFAULT_SMOOTHING_WINDOW)?;
    let ic = KneeState::new(d.base.q3()[0], d.qdot[2][0]);
    let r = simulate_swing(
        p,
        &d,
        source,
        &ControllerGains::default(),
        &DampingParams::default(),
        ic,
        d.base.dt / 10.0,
    )?;
    let clearance = min_clearance(&r, p, &d);
    if let Ok(stats) = r.events(&d).and_then(|ev| torque_phase_stats(&r, &ev)) {
        println!(
            "    peak |tau| initial {:.2}, mid {:.2}, terminal {:.2} N m",
            stats[0].peak, stats[1].peak, stats[2].peak
        );
    }
    if cond == GaitCondition::Steady && cadence == 100.0 {
        let q: Vec<[f64; 3]> = (0..r.len())
            .map(|i| [d.base.q[0][i], d.base.q[1][i], r.states[i].q3])
            .collect();
        let path = std::env::temp_dir().join("swing_stick.svg");
        std::fs::write(&path, stick_figure(p, &q, 10, "Swing at 100 bpm"))
            .map_err(|e| knee_motion::Error::io("writing stick figure", e))?;
        println!("    stick figure: {}", path.display());
    }
    Ok((r, clearance))
}

fn main() -> knee_motion::Result<()> {
    let p = ModelParams::default();
    let mut train = Vec::new();
    for &c in &TRAINING_CADENCES {
        for k in 0..5 {
            let t = synth_gait(c, &SynthProfile::default(), 1000 + 10 * c as u64 + k)?;
            let a = analyze_trial(&p, &t, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS)?;
            train.push(TrainingTrial::from_analysis(&a, c)?);
        }
    }
    let adaptive = DesiredSource::Adaptive(fit_adaptive(&train, FitMode::Joint)?);

    for &c in &TRAINING_CADENCES {
        println!("steady {c} bpm");
        let (r, clear) = run(&p, GaitCondition::Steady, c, 9, &adaptive)?;
        println!(
            "    clearance {clear:.4} m, final knee {:.4} rad, locked at {:?}",
            final_knee_angle(&r),
            r.lock_time
        );
    }

    let first_steps: Vec<_> = (0..5)
        .map(|k| {
            let t = synth_gait(100.0, &SynthProfile::with_condition(GaitCondition::Initiation), 300 + k)?;
            let a = analyze_trial(&p, &t, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SUBSTEPS)?;
            knee_samples(&a.derived, a.trajectory())
        })
        .collect::<knee_motion::Result<Vec<_>>>()?
        .concat();
    let own = DesiredSource::Fixed(fit_a(&first_steps)?.map);
    for (name, source) in [("adaptive", &adaptive), ("first-step map", &own)] {
        println!("initiation, {name}");
        let (r, clear) = run(&p, GaitCondition::Initiation, 100.0, 7, source)?;
        println!("    clearance {clear:.4} m, final knee {:.4} rad", final_knee_angle(&r));
    }
    Ok(())
}
