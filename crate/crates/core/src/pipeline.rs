//! End-to-end runs: synthesis, inertial fitting, synergy analysis, regressor
//! fitting and closed-loop simulation, writing CSV, model and SVG files.
//!
//! Output layout under the output directory:
//!
//! ```text
//! trials/{steady,termination,initiation}/*.csv   trial files with .meta sidecars
//! inertial/                                      inertial knee per trial, phase errors
//! synergy/                                       models and contribution ratios
//! fit/                                           knee map, adaptive regressor, cadence estimator
//! simulate/<condition>/                          closed-loop runs and summaries
//! report.txt                                     config hash, seed and headline numbers
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{
    adaptive_rms, coeff_trend_r2, fit_adaptive, fit_cadence, AdaptiveRegressor, FitMode, TrainingTrial, TREND_HEADER,
};
use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::gait::{
    fmt17, load_csv, synth_gait, write_csv, GaitCondition, GaitTrial, SynthProfile, DEFAULT_SMOOTHING_WINDOW,
    MAX_CADENCE, MIN_CADENCE, PHASE_NAMES,
};
use crate::inertial::{analyze_trial, TrialAnalysis};
use crate::plot::{stick_figure, LineChart, Series};
use crate::simulate::{
    final_knee_angle, min_clearance, simulate_swing, torque_phase_stats, ControllerGains, DampingParams, DesiredSource,
    SimResult,
};
use crate::synergy::{cumulative, decompose, fit_a, knee_samples, DataMatrix, LinearKneeMap};

/// Terminal knee angles below `limit − EXTENSION_MARGIN` count as failed extension.
pub const EXTENSION_MARGIN: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Model parameter file; built-in defaults when absent.
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// RK4 step (s); a tenth of the sample interval when absent.
    pub dt: Option<f64>,
    pub smoothing_window: usize,
    pub synth: SynthConfig,
    pub fit: FitConfig,
    pub simulate: SimConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Existing trials (`steady/`, `termination/`, `initiation/` subdirectories,
    /// or CSV files directly for steady walking) used instead of synthesis.
    pub data_dir: Option<PathBuf>,
    pub cadences: Vec<f64>,
    pub trials_per_cadence: usize,
    /// Termination and initiation trials per condition.
    pub fixture_trials: usize,
    pub fixture_cadence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub training_cadences: Vec<f64>,
    /// `joint` or `two-stage`.
    pub mode: String,
    pub rank: usize,
    pub zscore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub conditions: Vec<GaitCondition>,
    pub gains: ControllerGains,
    pub damping: DampingParams,
    /// Frames between stick-figure poses.
    pub stick_every: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            model: None,
            out_dir: PathBuf::from("out"),
            dt: None,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            synth: SynthConfig::default(),
            fit: FitConfig::default(),
            simulate: SimConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            cadences: crate::adaptive::TRAINING_CADENCES.to_vec(),
            trials_per_cadence: 5,
            fixture_trials: 5,
            fixture_cadence: 100.0,
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            training_cadences: crate::adaptive::TRAINING_CADENCES.to_vec(),
            mode: "joint".into(),
            rank: crate::synergy::DEFAULT_RANK,
            zscore: false,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            conditions: vec![
                GaitCondition::Steady,
                GaitCondition::Termination,
                GaitCondition::Initiation,
            ],
            gains: ControllerGains::default(),
            damping: DampingParams::default(),
            stick_every: 10,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format {
            context: "pipeline config".into(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                context: path.display().to_string(),
                reason,
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &c in &self.synth.cadences {
            if !(MIN_CADENCE..=MAX_CADENCE).contains(&c) {
                return Err(Error::param(
                    "synth.cadences",
                    format!("{c} bpm is outside [{MIN_CADENCE}, {MAX_CADENCE}]"),
                ));
            }
        }
        if !(MIN_CADENCE..=MAX_CADENCE).contains(&self.synth.fixture_cadence) {
            return Err(Error::param(
                "synth.fixture_cadence",
                "outside the supported cadence range",
            ));
        }
        if self.synth.trials_per_cadence == 0 {
            return Err(Error::param("synth.trials_per_cadence", "must be at least 1"));
        }
        if self.smoothing_window.is_multiple_of(2) {
            return Err(Error::param("smoothing_window", "must be odd"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::param("dt", "must be positive"));
            }
        }
        if self.fit.training_cadences.is_empty() {
            return Err(Error::param("fit.training_cadences", "empty"));
        }
        if self.fit.rank == 0 || self.fit.rank > 6 {
            return Err(Error::param("fit.rank", "must be in 1..=6"));
        }
        self.fit.mode.parse::<FitMode>()?;
        self.simulate.gains.validate()?;
        self.simulate.damping.validate()?;
        if let Some(m) = &self.model {
            let m = self.resolve(m);
            if !m.exists() {
                return Err(Error::param("model", format!("{} does not exist", m.display())));
            }
        }
        if let Some(d) = &self.synth.data_dir {
            let d = self.resolve(d);
            if !d.is_dir() {
                return Err(Error::param(
                    "synth.data_dir",
                    format!("{} is not a directory", d.display()),
                ));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A validated configuration with its model and provenance hash.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: PipelineConfig,
    pub params: ModelParams,
    /// SHA-256 of the configuration (without the output directory) and model file.
    pub config_hash: String,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let (params, model_text) = match &config.model {
            Some(m) => {
                let path = config.resolve(m);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                (ModelParams::load(&path)?, text)
            }
            None => {
                let p = ModelParams::default();
                (p, p.to_config_string())
            }
        };
        let mut hashed = config.clone();
        hashed.out_dir = PathBuf::new();
        hashed.model = None;
        hashed.synth.data_dir = None;
        let mut material = hashed.to_toml();
        material.push_str(&model_text);
        let config_hash = sha256_hex(material.as_bytes());
        let out = config.resolve(&config.out_dir);
        Ok(Self {
            config,
            params,
            config_hash,
            out,
        })
    }

    fn short_hash(&self) -> &str {
        &self.config_hash[..16]
    }

    /// Integration step for a trial sampled at `sample_dt`.
    pub fn substeps(&self, sample_dt: f64) -> usize {
        match self.config.dt {
            Some(dt) => ((sample_dt / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize,
            None => crate::inertial::DEFAULT_SUBSTEPS,
        }
    }

    fn dt_for(&self, sample_dt: f64) -> f64 {
        sample_dt / self.substeps(sample_dt) as f64
    }

    pub fn trials_dir(&self) -> PathBuf {
        match &self.config.synth.data_dir {
            Some(d) => self.config.resolve(d),
            None => self.out.join("trials"),
        }
    }

    /// Trial files of one condition, sorted by name.
    pub fn trial_paths(&self, condition: GaitCondition) -> Result<Vec<PathBuf>> {
        let root = self.trials_dir();
        let dir = root.join(condition.to_string());
        let mut found = csv_files(&dir)?;
        if found.is_empty() && condition == GaitCondition::Steady && self.config.synth.data_dir.is_some() {
            found = csv_files(&root)?;
        }
        Ok(found)
    }

    /// Writes a file below the output directory and records it.
    fn write(&self, written: &mut Vec<PathBuf>, rel: impl AsRef<Path>, contents: &str) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        written.push(path);
        Ok(())
    }

    fn provenance(&self, stage: &str) -> String {
        format!(
            "stage = {stage}\nconfig_hash = {}\nseed = {}\n",
            self.config_hash, self.config.seed
        )
    }
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Seed of one synthetic trial.
pub fn trial_seed(seed: u64, condition: GaitCondition, cadence: f64, k: usize) -> u64 {
    let cond = match condition {
        GaitCondition::Steady => 1u64,
        GaitCondition::Termination => 2,
        GaitCondition::Initiation => 3,
    };
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(cond.to_le_bytes());
    h.update(cadence.to_bits().to_le_bytes());
    h.update((k as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Synthesizes steady trials for every configured cadence and the
/// termination and initiation fixtures.
pub fn cmd_synth(run: &Run) -> Result<Vec<PathBuf>> {
    let cfg = &run.config.synth;
    let mut jobs: Vec<(GaitCondition, f64, usize)> = Vec::new();
    for &c in &cfg.cadences {
        for k in 0..cfg.trials_per_cadence {
            jobs.push((GaitCondition::Steady, c, k));
        }
    }
    for cond in [GaitCondition::Termination, GaitCondition::Initiation] {
        for k in 0..cfg.fixture_trials {
            jobs.push((cond, cfg.fixture_cadence, k));
        }
    }
    let trials: Vec<(String, GaitTrial)> = jobs
        .par_iter()
        .map(|&(cond, c, k)| {
            let mut t = synth_gait(
                c,
                &SynthProfile::with_condition(cond),
                trial_seed(run.config.seed, cond, c, k),
            )?;
            let name = format!("{cond}/{cond}_c{:03}_t{k:02}", c.round() as i64);
            t.meta.subject_id = Some("synthetic".into());
            t.meta.trial_id = Some(stem(Path::new(&name)));
            Ok((name, t))
        })
        .collect::<Result<_>>()?;

    let mut written = Vec::new();
    for (name, t) in &trials {
        let path = run.out.join("trials").join(format!("{name}.csv"));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
        write_csv(t, &path)?;
        let mut meta = String::new();
        if let Some(c) = t.cadence {
            let _ = writeln!(meta, "cadence_bpm = {c}");
        }
        let _ = writeln!(meta, "subject_id = synthetic");
        let _ = writeln!(meta, "trial_id = {}", t.meta.trial_id.as_deref().unwrap_or(""));
        let _ = writeln!(meta, "seed = {}", run.config.seed);
        let _ = writeln!(meta, "config_hash = {}", run.config_hash);
        let meta_path = path.with_extension("meta");
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(format!("writing {}", meta_path.display()), e))?;
        written.push(path);
        written.push(meta_path);
    }
    Ok(written)
}

/// A loaded and analyzed trial.
#[derive(Debug, Clone)]
pub struct AnalyzedTrial {
    pub name: String,
    pub cadence: Option<f64>,
    pub subject: Option<String>,
    pub analysis: TrialAnalysis,
}

/// Loads and analyzes trials in parallel, keeping the input order.
pub fn analyze_paths(run: &Run, paths: &[PathBuf]) -> Result<Vec<AnalyzedTrial>> {
    paths
        .par_iter()
        .map(|path| {
            let name = stem(path);
            let trial = load_csv(path)?;
            let analysis = analyze_trial(&run.params, &trial, run.config.smoothing_window, run.substeps(trial.dt))
                .map_err(|e| e.context(format!("trial {name}")))?;
            Ok(AnalyzedTrial {
                name,
                cadence: trial.cadence,
                subject: trial.meta.subject_id.clone(),
                analysis,
            })
        })
        .collect()
}

/// Per-trial inertial fit results.
#[derive(Debug, Clone, PartialEq)]
pub struct InertialRow {
    pub trial: String,
    pub cadence: Option<f64>,
    pub t0: f64,
    pub phase_errors: [f64; 3],
}

/// Fits the inertial knee motion of every trial.
pub fn cmd_inertial(run: &Run, paths: &[PathBuf]) -> Result<(Vec<InertialRow>, Vec<PathBuf>)> {
    let analyzed = analyze_paths(run, paths)?;
    let mut written = Vec::new();
    let mut table = String::from("trial,cadence,phase,start,end,error,t0\n");
    let mut rows = Vec::new();
    for a in &analyzed {
        let an = &a.analysis;
        let generated = an.trajectory().to_gait_trial(&an.derived.base)?;
        let rel = PathBuf::from("inertial").join(format!("{}.csv", a.name));
        let path = run.out.join(&rel);
        std::fs::create_dir_all(path.parent().expect("has parent"))
            .map_err(|e| Error::io("creating inertial output directory", e))?;
        write_csv(&generated, &path)?;
        written.push(path);

        let t = an.derived.base.times();
        let chart = LineChart::new(format!("Knee angle, {}", a.name), "time (s)", "q3 (rad)")
            .with(Series::line("reference", &t, an.derived.base.q3()))
            .with(Series::line("inertial", &t, &an.trajectory().angles()).dashed())
            .vline(an.events.max_flexion, "t1")
            .vline(an.events.max_ext_velocity, "t2")
            .vline(an.search.t0, "T0");
        run.write(
            &mut written,
            PathBuf::from("inertial").join(format!("{}.svg", a.name)),
            &chart.to_svg(),
        )?;

        for (k, (s, e)) in an.events.phases().into_iter().enumerate() {
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                a.name,
                a.cadence.map(fmt17).unwrap_or_default(),
                PHASE_NAMES[k],
                fmt17(s),
                fmt17(e),
                fmt17(an.phase_errors[k]),
                fmt17(an.search.t0)
            );
        }
        rows.push(InertialRow {
            trial: a.name.clone(),
            cadence: a.cadence,
            t0: an.search.t0,
            phase_errors: an.phase_errors,
        });
    }
    run.write(&mut written, "inertial/phase_errors.csv", &table)?;

    // mean error per phase against cadence
    let mut by_cadence: BTreeMap<i64, Vec<[f64; 3]>> = BTreeMap::new();
    for r in &rows {
        if let Some(c) = r.cadence {
            by_cadence.entry(c.round() as i64).or_default().push(r.phase_errors);
        }
    }
    if !by_cadence.is_empty() {
        let xs: Vec<f64> = by_cadence.keys().map(|&c| c as f64).collect();
        let mut chart = LineChart::new(
            "Inertial motion error by phase",
            "cadence (steps/min)",
            "mean |error| (rad)",
        );
        for (k, name) in PHASE_NAMES.iter().enumerate() {
            let ys: Vec<f64> = by_cadence
                .values()
                .map(|v| v.iter().map(|e| e[k]).sum::<f64>() / v.len() as f64)
                .collect();
            chart = chart.with(Series::line(*name, &xs, &ys));
        }
        run.write(&mut written, "inertial/phase_errors.svg", &chart.to_svg())?;
    }
    run.write(&mut written, "inertial/provenance.txt", &run.provenance("inertial"))?;
    Ok((rows, written))
}

/// Cumulative contribution ratios per group.
#[derive(Debug, Clone, PartialEq)]
pub struct SynergyRow {
    pub group: String,
    pub cumulative: [f64; 6],
}

fn cadence_label(c: f64) -> String {
    format!("c{:03}", c.round() as i64)
}

/// Synergy analysis per cadence and over all trials together.
pub fn cmd_synergy(run: &Run, paths: &[PathBuf]) -> Result<(Vec<SynergyRow>, Vec<PathBuf>)> {
    let analyzed = analyze_paths(run, paths)?;
    let mut groups: BTreeMap<String, Vec<&AnalyzedTrial>> = BTreeMap::new();
    for a in &analyzed {
        if let Some(c) = a.cadence {
            groups.entry(cadence_label(c)).or_default().push(a);
        }
    }
    groups.insert("all".into(), analyzed.iter().collect());

    let mut written = Vec::new();
    let mut table = String::from("group,component,ratio,cumulative\n");
    let mut rows = Vec::new();
    let mut chart = LineChart::new(
        "Cumulative contribution ratio",
        "number of synergies",
        "cumulative ratio",
    );
    for (label, members) in &groups {
        let mut x = DataMatrix::pooled(members.iter().map(|a| (&a.analysis.derived, a.analysis.trajectory())))?;
        if run.config.fit.zscore {
            x = x.zscored();
        }
        let model = decompose(&x)
            .map_err(|e| e.context(format!("synergy group {label}")))?
            .with_rank(run.config.fit.rank)?;
        let ratios = model.contribution_ratios()?;
        let cum = cumulative(&ratios);
        for k in 0..6 {
            let _ = writeln!(table, "{label},{},{},{}", k + 1, fmt17(ratios[k]), fmt17(cum[k]));
        }
        run.write(&mut written, format!("synergy/model_{label}.txt"), &model.to_text())?;
        let xs: Vec<f64> = (1..=6).map(f64::from).collect();
        chart = chart.with(Series::line(label.clone(), &xs, &cum));

        // temporal coordination of the leading synergies for the first trial of the group
        let n0 = members[0].analysis.derived.len();
        let t = members[0].analysis.derived.base.times();
        let mut vc = LineChart::new(format!("Synergy time courses, {label}"), "time (s)", "v_i");
        for k in 0..run.config.fit.rank.min(4) {
            let v: Vec<f64> = (0..n0).map(|i| model.v[(i, k)]).collect();
            vc = vc.with(Series::line(format!("v{}", k + 1), &t, &v));
        }
        run.write(&mut written, format!("synergy/synergies_{label}.svg"), &vc.to_svg())?;
        rows.push(SynergyRow {
            group: label.clone(),
            cumulative: cum,
        });
    }
    run.write(&mut written, "synergy/contribution.csv", &table)?;
    run.write(&mut written, "synergy/contribution.svg", &chart.to_svg())?;
    run.write(&mut written, "synergy/provenance.txt", &run.provenance("synergy"))?;
    Ok((rows, written))
}

/// Headline numbers of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    /// `(cadence, mean RMS, SD RMS, trials)` of the adaptive knee angle.
    pub rms: Vec<(f64, f64, f64, usize)>,
    /// R² of estimated against labeled cadence.
    pub cadence_r2: f64,
    pub regressor: AdaptiveRegressor,
    pub map: LinearKneeMap,
}

fn training_set(run: &Run, analyzed: &[AnalyzedTrial]) -> Result<Vec<(String, Option<String>, TrainingTrial)>> {
    let mut out = Vec::new();
    for a in analyzed {
        let c = a.cadence.ok_or_else(|| {
            Error::param(
                "cadence_bpm",
                format!("trial {} has no cadence label (.meta sidecar)", a.name),
            )
        })?;
        if run.config.fit.training_cadences.iter().any(|&t| (t - c).abs() < 0.5) {
            out.push((
                a.name.clone(),
                a.subject.clone(),
                TrainingTrial::from_analysis(&a.analysis, c)?,
            ));
        }
    }
    if out.is_empty() {
        return Err(Error::param(
            "fit.training_cadences",
            "no trial matches the training cadences",
        ));
    }
    Ok(out)
}

/// Fits the linear knee map, the adaptive regressor and the cadence estimator.
pub fn cmd_fit(run: &Run, paths: &[PathBuf]) -> Result<(FitSummary, Vec<PathBuf>)> {
    let analyzed = analyze_paths(run, paths)?;
    let set = training_set(run, &analyzed)?;
    let trials: Vec<TrainingTrial> = set.iter().map(|s| s.2.clone()).collect();
    let mode: FitMode = run.config.fit.mode.parse()?;
    let mut written = Vec::new();

    let pooled: Vec<_> = trials.iter().flat_map(|t| t.samples.iter().copied()).collect();
    let map = fit_a(&pooled)?.map;
    run.write(&mut written, "fit/linear_map.txt", &map.to_text())?;

    let regressor = fit_adaptive(&trials, mode)?;
    run.write(&mut written, "fit/adaptive.txt", &regressor.to_text())?;

    let pairs: Vec<([f64; 5], f64)> = trials.iter().map(|t| (t.theta_to, t.cadence)).collect();
    let estimator = fit_cadence(&pairs)?;
    run.write(&mut written, "fit/cadence.txt", &estimator.to_text())?;

    let mut scatter = String::from("trial,cadence,estimated\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (name, _, t) in &set {
        let est = estimator.estimate(&t.theta_to);
        let _ = writeln!(scatter, "{name},{},{}", fmt17(t.cadence), fmt17(est));
        xs.push(t.cadence);
        ys.push(est);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss_tot: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).powi(2)).sum();
    let cadence_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    run.write(&mut written, "fit/cadence_scatter.csv", &scatter)?;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let chart = LineChart::new(
        "Estimated against labeled cadence",
        "labeled (steps/min)",
        "estimated (steps/min)",
    )
    .with(Series::line("trials", &xs, &ys).markers())
    .with(Series::line("identity", &[lo, hi], &[lo, hi]).dashed());
    run.write(&mut written, "fit/cadence_scatter.svg", &chart.to_svg())?;

    // RMS of the adaptive knee angle per training cadence
    let mut by_cadence: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for t in &trials {
        by_cadence
            .entry(t.cadence.round() as i64)
            .or_default()
            .push(adaptive_rms(&regressor, t)[0]);
    }
    let mut rms_csv = String::from("cadence,trials,rms_mean,rms_sd\n");
    let mut rms = Vec::new();
    for (c, v) in &by_cadence {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let _ = writeln!(rms_csv, "{c},{},{},{}", v.len(), fmt17(m), fmt17(sd));
        rms.push((*c as f64, m, sd, v.len()));
    }
    run.write(&mut written, "fit/rms.csv", &rms_csv)?;

    // per-cadence A and its trend, grouped by subject
    type Samples = Vec<([f64; 5], [f64; 2])>;
    let mut groups: BTreeMap<String, BTreeMap<i64, Samples>> = BTreeMap::new();
    for (_, subject, t) in &set {
        groups
            .entry(subject.clone().unwrap_or_else(|| "all".into()))
            .or_default()
            .entry(t.cadence.round() as i64)
            .or_default()
            .extend(t.samples.iter().copied());
    }
    let mut r2_csv = format!("{TREND_HEADER}\n");
    let mut coeffs = String::from("group,cadence,output,a1,a2,a3,a4,a5\n");
    for (group, per) in &groups {
        let maps: Vec<(f64, LinearKneeMap)> = per
            .iter()
            .map(|(c, s)| {
                fit_a(s)
                    .map(|f| (*c as f64, f.map))
                    .map_err(|e| e.context(format!("{group} at {c} bpm")))
            })
            .collect::<Result<_>>()?;
        for (c, m) in &maps {
            for (i, name) in ["q3d", "q3d_dot"].iter().enumerate() {
                let vals: Vec<String> = (0..5).map(|j| fmt17(m.a[(i, j)])).collect();
                let _ = writeln!(coeffs, "{group},{c},{name},{}", vals.join(","));
            }
        }
        if maps.len() >= 3 {
            r2_csv.push_str(&coeff_trend_r2(group, &maps)?.to_csv());
        }
        if group == "all" || groups.len() == 1 {
            let cs: Vec<f64> = maps.iter().map(|m| m.0).collect();
            let mut chart = LineChart::new(
                format!("Knee-angle coefficients, {group}"),
                "cadence (steps/min)",
                "a_1j",
            );
            for j in 0..5 {
                let ys: Vec<f64> = maps.iter().map(|m| m.1.a[(0, j)]).collect();
                chart = chart.with(Series::line(format!("a1{}", j + 1), &cs, &ys));
            }
            run.write(&mut written, format!("fit/coefficients_{group}.svg"), &chart.to_svg())?;
        }
    }
    run.write(&mut written, "fit/coeff_r2.csv", &r2_csv)?;
    run.write(&mut written, "fit/coefficients.csv", &coeffs)?;
    run.write(&mut written, "fit/provenance.txt", &run.provenance("fit"))?;
    Ok((
        FitSummary {
            rms,
            cadence_r2,
            regressor,
            map,
        },
        written,
    ))
}

/// Metrics of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub trial: String,
    pub cadence: Option<f64>,
    pub source: String,
    pub min_clearance: f64,
    pub final_knee_angle: f64,
    pub lock_time: Option<f64>,
    /// Peak |τ| per phase, when the simulated knee has detectable events.
    pub peak_torque: Option<[f64; 3]>,
    pub rms_torque: Option<[f64; 3]>,
}

impl SimSummary {
    pub fn collision(&self) -> bool {
        self.min_clearance <= 0.0
    }

    pub fn extended(&self, limit: f64) -> bool {
        self.final_knee_angle >= limit - EXTENSION_MARGIN
    }
}

pub const SUMMARY_HEADER: &str = "trial,cadence,source,min_clearance,final_knee_angle,lock_time,collision,extension_failure,peak_initial,peak_mid,peak_terminal,rms_initial,rms_mid,rms_terminal";

/// Closed-loop runs of one condition with the adaptive regressor, plus a
/// map fitted on the condition's own trials for initiation.
pub fn cmd_simulate(
    run: &Run,
    regressor: &AdaptiveRegressor,
    paths: &[PathBuf],
    condition: GaitCondition,
) -> Result<(Vec<SimSummary>, Vec<PathBuf>)> {
    let analyzed = analyze_paths(run, paths)?;
    let mut sources: Vec<(String, DesiredSource)> =
        vec![("adaptive".into(), DesiredSource::Adaptive(regressor.clone()))];
    if condition == GaitCondition::Initiation {
        let samples: Vec<_> = analyzed
            .iter()
            .map(|a| knee_samples(&a.analysis.derived, a.analysis.trajectory()))
            .collect::<Result<Vec<_>>>()?
            .concat();
        let own = fit_a(&samples)
            .map_err(|e| e.context("initiation-specific knee map"))?
            .map;
        sources.push(("initiation-fit".into(), DesiredSource::Fixed(own)));
    }
    let cfg = &run.config.simulate;
    let jobs: Vec<(usize, usize)> = (0..analyzed.len())
        .flat_map(|i| (0..sources.len()).map(move |s| (i, s)))
        .collect();
    let results: Vec<(SimSummary, SimResult)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let a = &analyzed[i];
            let d = &a.analysis.derived;
            let ic = crate::inertial::KneeState::new(d.base.q3()[0], d.qdot[2][0]);
            let r = simulate_swing(
                &run.params,
                d,
                &sources[s].1,
                &cfg.gains,
                &cfg.damping,
                ic,
                run.dt_for(d.base.dt),
            )
            .map_err(|e| e.context(format!("trial {}", a.name)))?;
            let stats = r.events(d).and_then(|ev| torque_phase_stats(&r, &ev)).ok();
            Ok((
                SimSummary {
                    trial: a.name.clone(),
                    cadence: a.cadence,
                    source: sources[s].0.clone(),
                    min_clearance: min_clearance(&r, &run.params, d),
                    final_knee_angle: final_knee_angle(&r),
                    lock_time: r.lock_time,
                    peak_torque: stats.map(|s| s.map(|x| x.peak)),
                    rms_torque: stats.map(|s| s.map(|x| x.rms)),
                },
                r,
            ))
        })
        .collect::<Result<_>>()?;

    let mut written = Vec::new();
    let dir = PathBuf::from("simulate").join(condition.to_string());
    let mut table = format!("{SUMMARY_HEADER}\n");
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for (k, (sum, r)) in results.iter().enumerate() {
        let (i, _) = jobs[k];
        let a = &analyzed[i];
        let d = &a.analysis.derived;
        let base = format!("{}_{}", sum.trial, sum.source);
        run.write(&mut written, dir.join(format!("{base}.csv")), &r.to_csv())?;
        let t = &r.times;
        let angle = LineChart::new(format!("Knee angle, {base}"), "time (s)", "q3 (rad)")
            .with(Series::line("simulated", t, &r.angles()))
            .with(Series::line("desired", t, &r.desired.iter().map(|s| s.q3).collect::<Vec<_>>()).dashed())
            .with(Series::line("reference", t, d.base.q3()).dashed());
        run.write(&mut written, dir.join(format!("{base}_angle.svg")), &angle.to_svg())?;
        let torque = LineChart::new(format!("Knee torque, {base}"), "time (s)", "torque (N·m)")
            .with(Series::line("tau", t, &r.torque))
            .with(Series::line("f_damp", t, &r.damping).dashed());
        run.write(&mut written, dir.join(format!("{base}_torque.svg")), &torque.to_svg())?;
        let q: Vec<[f64; 3]> = (0..r.len())
            .map(|i| [d.base.q[0][i], d.base.q[1][i], r.states[i].q3])
            .collect();
        run.write(
            &mut written,
            dir.join(format!("{base}_stick.svg")),
            &stick_figure(&run.params, &q, cfg.stick_every, &format!("Swing, {base}")),
        )?;

        let p3 = |v: Option<[f64; 3]>| match v {
            Some(x) => x.map(fmt17).join(","),
            None => ",,".into(),
        };
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{},{}",
            sum.trial,
            opt(sum.cadence),
            sum.source,
            fmt17(sum.min_clearance),
            fmt17(sum.final_knee_angle),
            opt(sum.lock_time),
            u8::from(sum.collision()),
            u8::from(!sum.extended(cfg.damping.limit)),
            p3(sum.peak_torque),
            p3(sum.rms_torque)
        );
    }
    run.write(&mut written, dir.join("summary.csv"), &table)?;
    run.write(&mut written, dir.join("provenance.txt"), &run.provenance("simulate"))?;
    Ok((results.into_iter().map(|r| r.0).collect(), written))
}

/// Whether a stage ran or was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Cached,
}

/// Stage names and statuses of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub stages: Vec<(String, StageStatus)>,
    pub report: PathBuf,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(sha256_hex(&bytes))
}

/// Content-hash cache of stage outputs under `<out>/.cache`.
struct StageCache<'a> {
    run: &'a Run,
}

impl StageCache<'_> {
    fn manifest(&self, stage: &str) -> PathBuf {
        self.run.out.join(".cache").join(format!("{stage}.manifest"))
    }

    fn key(&self, stage: &str, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(self.run.config_hash.as_bytes());
        for p in inputs {
            h.update(
                p.file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
                    .as_bytes(),
            );
            h.update(file_digest(p)?.as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    fn fresh(&self, stage: &str, key: &str) -> bool {
        let Ok(text) = std::fs::read_to_string(self.manifest(stage)) else {
            return false;
        };
        let mut lines = text.lines();
        if lines.next() != Some(key) {
            return false;
        }
        lines.all(|l| match l.split_once(' ') {
            Some((digest, rel)) => file_digest(&self.run.out.join(rel)).is_ok_and(|d| d == digest),
            None => false,
        })
    }

    fn store(&self, stage: &str, key: &str, outputs: &[PathBuf]) -> Result<()> {
        let mut text = format!("{key}\n");
        for p in outputs {
            let rel = p.strip_prefix(&self.run.out).unwrap_or(p);
            let _ = writeln!(text, "{} {}", file_digest(p)?, rel.display());
        }
        let path = self.manifest(stage);
        std::fs::create_dir_all(path.parent().expect("has parent"))
            .map_err(|e| Error::io("creating cache directory", e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Runs `f` unless the stage's inputs and outputs are unchanged.
    fn stage(&self, stage: &str, inputs: &[PathBuf], f: impl FnOnce() -> Result<Vec<PathBuf>>) -> Result<StageStatus> {
        let key = self.key(stage, inputs)?;
        if self.fresh(stage, &key) {
            return Ok(StageStatus::Cached);
        }
        let outputs = f().map_err(|e| e.context(format!("stage {stage}")))?;
        self.store(stage, &key, &outputs)?;
        Ok(StageStatus::Ran)
    }
}

/// synth → inertial → synergy → fit → simulate → report.
pub fn cmd_pipeline(run: &Run) -> Result<PipelineOutcome> {
    let cache = StageCache { run };
    let mut stages = Vec::new();
    if run.config.synth.data_dir.is_none() {
        stages.push(("synth".to_string(), cache.stage("synth", &[], || cmd_synth(run))?));
    }
    let steady = run.trial_paths(GaitCondition::Steady)?;
    if steady.is_empty() {
        return Err(Error::param("synth.data_dir", "no steady-walking trials found"));
    }
    stages.push((
        "inertial".into(),
        cache.stage("inertial", &steady, || cmd_inertial(run, &steady).map(|r| r.1))?,
    ));
    stages.push((
        "synergy".into(),
        cache.stage("synergy", &steady, || cmd_synergy(run, &steady).map(|r| r.1))?,
    ));
    stages.push((
        "fit".into(),
        cache.stage("fit", &steady, || cmd_fit(run, &steady).map(|r| r.1))?,
    ));
    let regressor_path = run.out.join("fit/adaptive.txt");
    for &cond in &run.config.simulate.conditions {
        let paths = run.trial_paths(cond)?;
        if paths.is_empty() {
            continue;
        }
        let mut inputs = paths.clone();
        inputs.push(regressor_path.clone());
        let name = format!("simulate-{cond}");
        let status = cache.stage(&name, &inputs, || {
            let reg = AdaptiveRegressor::load(&regressor_path)?;
            cmd_simulate(run, &reg, &paths, cond).map(|r| r.1)
        })?;
        stages.push((name, status));
    }
    let report = write_report(run)?;
    Ok(PipelineOutcome { stages, report })
}

fn read_table(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format {
        context: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format {
            context: path.display().to_string(),
            reason: e.to_string(),
        })?
        .clone();
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::Format {
                context: path.display().to_string(),
                reason: e.to_string(),
            })?;
            Ok(headers
                .iter()
                .map(String::from)
                .zip(r.iter().map(String::from))
                .collect())
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

/// Summarizes the stage outputs on disk into `report.txt`.
pub fn write_report(run: &Run) -> Result<PathBuf> {
    let mut r = String::new();
    let _ = writeln!(r, "knee-motion pipeline report");
    let _ = writeln!(r, "config_hash = {}", run.config_hash);
    let _ = writeln!(r, "seed = {}", run.config.seed);
    let _ = writeln!(r, "run_id = {}", run.short_hash());

    let pe = run.out.join("inertial/phase_errors.csv");
    if pe.exists() {
        let rows = read_table(&pe)?;
        let _ = writeln!(r, "\n[inertial] mean |error| per phase (rad)");
        for phase in PHASE_NAMES {
            let v: Vec<f64> = rows
                .iter()
                .filter(|x| x["phase"] == phase)
                .map(|x| num(x, "error"))
                .collect();
            let _ = writeln!(
                r,
                "{phase:>9}: {:.5} over {} trials",
                v.iter().sum::<f64>() / v.len().max(1) as f64,
                v.len()
            );
        }
    }
    let sy = run.out.join("synergy/contribution.csv");
    if sy.exists() {
        let _ = writeln!(r, "\n[synergy] cumulative contribution at r = {}", run.config.fit.rank);
        for row in read_table(&sy)?
            .iter()
            .filter(|x| x["component"] == run.config.fit.rank.to_string())
        {
            let _ = writeln!(r, "{:>9}: {:.5}", row["group"], num(row, "cumulative"));
        }
    }
    let rms = run.out.join("fit/rms.csv");
    if rms.exists() {
        let _ = writeln!(r, "\n[fit] adaptive knee-angle RMS (rad)");
        for row in read_table(&rms)? {
            let _ = writeln!(
                r,
                "{:>9}: {:.5} ({:.5})",
                row["cadence"],
                num(&row, "rms_mean"),
                num(&row, "rms_sd")
            );
        }
    }
    for cond in &run.config.simulate.conditions {
        let path = run.out.join(format!("simulate/{cond}/summary.csv"));
        if !path.exists() {
            continue;
        }
        let rows = read_table(&path)?;
        let mut sources: Vec<&str> = rows.iter().map(|x| x["source"].as_str()).collect();
        sources.sort();
        sources.dedup();
        for s in sources {
            let sel: Vec<_> = rows.iter().filter(|x| x["source"] == s).collect();
            let n = sel.len();
            let collisions = sel.iter().filter(|x| x["collision"] == "1").count();
            let failures = sel.iter().filter(|x| x["extension_failure"] == "1").count();
            let min_clear = sel
                .iter()
                .map(|x| num(x, "min_clearance"))
                .fold(f64::INFINITY, f64::min);
            let finals: Vec<f64> = sel.iter().map(|x| num(x, "final_knee_angle")).collect();
            let mean_final = finals.iter().sum::<f64>() / n.max(1) as f64;
            let _ = writeln!(
                r,
                "\n[simulate {cond}, {s}] {n} runs, {collisions} collisions, {failures} extension failures, min clearance {min_clear:.4} m, mean final knee angle {mean_final:.4} rad"
            );
        }
    }
    let path = run.out.join("report.txt");
    std::fs::create_dir_all(&run.out).map_err(|e| Error::io(format!("creating {}", run.out.display()), e))?;
    std::fs::write(&path, r).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}
