//! Synergy analysis per cadence: contribution ratios, the rank-4 map from
//! intact-limb states to the knee, and the least-squares knee map.

use knee_motion::dynamics::ModelParams;
use knee_motion::gait::{synth_gait, SynthProfile, DEFAULT_SMOOTHING_WINDOW};
use knee_motion::inertial::{analyze_trial, DEFAULT_SUBSTEPS};
use knee_motion::synergy::{cumulative, decompose, fit_a, knee_samples, synergy_map, DataMatrix};

fn main() -> knee_motion::Result<()> {
    let p = ModelParams::default();
    for cadence in [85.0, 100.0, 115.0, 130.0] {
        let analyses = (0..5)
            .map(|k| {
                analyze_trial(
                    &p,
                    &synth_gait(cadence, &SynthProfile::default(), 40 + k)?,
                    DEFAULT_SMOOTHING_WINDOW,
                    DEFAULT_SUBSTEPS,
                )
            })
            .collect::<knee_motion::Result<Vec<_>>>()?;
        let x = DataMatrix::pooled(analyses.iter().map(|a| (&a.derived, a.trajectory())))?;
        let model = decompose(&x)?.with_rank(4)?;
        let ratios = model.contribution_ratios()?;
        let cum = cumulative(&ratios);
        println!(
            "{cadence} bpm  ratios {:.4?}  cumulative at 4: {:.5}",
            ratios.map(|r| (r * 1e4).round() / 1e4),
            cum[3]
        );

        // knee angle predicted from the intact limbs over the first trial
        let d = &analyses[0].derived;
        let target = analyses[0].trajectory().states();
        let mut sq = 0.0;
        for (i, want) in target.iter().enumerate().take(d.len()) {
            let th = d.theta12(i);
            let k = synergy_map(&model, [th[0], th[1], th[2], th[3]])?;
            sq += (k.q3 - want.q3).powi(2);
        }
        println!(
            "    rank-4 synergy map RMS: angle {:.4} rad",
            (sq / d.len() as f64).sqrt()
        );

        let samples: Vec<_> = analyses
            .iter()
            .map(|a| knee_samples(&a.derived, a.trajectory()))
            .collect::<knee_motion::Result<Vec<_>>>()?
            .concat();
        let fit = fit_a(&samples)?;
        println!(
            "    linear map RMS: angle {:.4} rad, velocity {:.4} rad/s",
            fit.rms[0], fit.rms[1]
        );
    }
    Ok(())
}
