//! Synthetic swing phases at several cadences: events, phase boundaries and
//! a CSV round trip.

use knee_motion::gait::{
    detect_events, differentiate, load_csv, synth_gait, write_csv, write_meta, GaitCondition, SynthProfile,
    DEFAULT_SMOOTHING_WINDOW, PHASE_NAMES,
};

fn main() -> knee_motion::Result<()> {
    let dir = std::env::temp_dir().join("knee-motion-gait");
    std::fs::create_dir_all(&dir).map_err(|e| knee_motion::Error::io("creating output directory", e))?;

    for cond in [
        GaitCondition::Steady,
        GaitCondition::Termination,
        GaitCondition::Initiation,
    ] {
        for cadence in [85.0, 115.0] {
            let trial = synth_gait(cadence, &SynthProfile::with_condition(cond), 3)?;
            let d = differentiate(&trial, DEFAULT_SMOOTHING_WINDOW)?;
            let ev = detect_events(&d)?;
            print!("{cond:<11} {cadence:>5} bpm  {} samples", trial.len());
            for (name, (a, b)) in PHASE_NAMES.iter().zip(ev.phases()) {
                print!("  {name} {a:.3}-{b:.3}");
            }
            println!();

            let path = dir.join(format!("{cond}_{cadence}.csv"));
            write_csv(&trial, &path)?;
            write_meta(&trial, &path)?;
            let back = load_csv(&path)?;
            assert_eq!(back.cadence, trial.cadence);
        }
    }
    println!("trials written to {}", dir.display());
    Ok(())
}
