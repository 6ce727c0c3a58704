//! JSON run configuration. Every field has a default so a config file only
//! needs the keys it changes; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::experiments::{EvalSettings, InitSampler, DEFAULT_MARGINS, MIN_ORACLE_SAMPLES};
use crate::gaussian_optics::SqueezedSourceSpec;
use crate::trainer::{ClassifierMode, Hyperplane, SpsaConfig, DEFAULT_V_MIN};
use crate::transduction::{Interval, TaskKind, TaskSpec, MIN_ACCEPTANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Evaluate,
    SweepMargin,
    McDistance,
    NoiseReport,
    Oracle,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Evaluate => "evaluate",
            Experiment::SweepMargin => "sweep-margin",
            Experiment::McDistance => "mc-distance",
            Experiment::NoiseReport => "noise-report",
            Experiment::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Slaen,
    Classical,
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub margin: f64,
    /// Only for `general_hyperplane`; normalized on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<Interval>>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::RfDirection2d,
            margin: 0.6,
            w_t: None,
            b_t: None,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Mean photon number of the squeezed source (total over all sensors).
    pub n_s: f64,
    pub eta: f64,
    pub v_min: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            n_s: 3.3,
            eta: 0.53,
            v_min: DEFAULT_V_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_test: usize,
    pub reps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let d = EvalSettings::default();
        Self {
            n_test: d.n_test,
            reps: d.reps,
        }
    }
}

impl From<EvalConfig> for EvalSettings {
    fn from(c: EvalConfig) -> Self {
        EvalSettings {
            n_test: c.n_test,
            reps: c.reps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_trials: usize,
    pub init_sampler: InitSampler,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_trials: 200,
            init_sampler: InitSampler::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_mc: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { n_mc: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseReportConfig {
    pub n_s_total: f64,
    pub eta: f64,
    pub sensors: usize,
}

impl Default for NoiseReportConfig {
    fn default() -> Self {
        Self {
            n_s_total: 3.3,
            eta: 0.53,
            sensors: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, the subcommand must agree with it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub task: TaskConfig,
    pub modes: Vec<ModeKind>,
    pub physics: PhysicsConfig,
    pub spsa: SpsaConfig,
    /// Initial hyperplanes; modes left out use the task's default.
    pub init: BTreeMap<ModeKind, Hyperplane>,
    /// Fixed hyperplanes for `evaluate`, `sweep-margin`; modes left out are
    /// trained first.
    pub hyperplanes: BTreeMap<ModeKind, Hyperplane>,
    /// Defaults to 20 for 2D tasks and 30 otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_stride: Option<usize>,
    pub evaluation: EvalConfig,
    pub margins: Vec<f64>,
    pub mc: McConfig,
    pub oracle: OracleConfig,
    pub noise_report: NoiseReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            output_dir: None,
            task: TaskConfig::default(),
            modes: vec![ModeKind::Slaen, ModeKind::Classical],
            physics: PhysicsConfig::default(),
            spsa: SpsaConfig::default(),
            init: BTreeMap::new(),
            hyperplanes: BTreeMap::new(),
            checkpoint_stride: None,
            evaluation: EvalConfig::default(),
            margins: DEFAULT_MARGINS.to_vec(),
            mc: McConfig::default(),
            oracle: OracleConfig::default(),
            noise_report: NoiseReportConfig::default(),
        }
    }
}

fn bad(path: &str, message: impl Into<String>) -> SimError {
    SimError::config(path, message)
}

fn check_hyperplane(path: &str, h: &Hyperplane, dim: usize) -> Result<()> {
    if h.dim() != dim {
        return Err(bad(
            path,
            format!("expected {dim} weights, got {}", h.dim()),
        ));
    }
    if !h
        .w
        .iter()
        .chain(std::iter::once(&h.b))
        .all(|x| x.is_finite())
    {
        return Err(bad(path, "entries must be finite"));
    }
    Ok(())
}

fn check_acceptance(path: &str, task: &TaskSpec) -> Result<()> {
    let acc = task.pilot_acceptance();
    if acc < MIN_ACCEPTANCE {
        return Err(bad(
            path,
            format!("margin {} leaves acceptance rate {acc:.2e}", task.margin()),
        ));
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let task = self.task()?;
        check_acceptance("task.margin", &task)?;
        let m = task.dim();
        let p = self.physics;
        if !(p.n_s >= 0.0 && p.n_s.is_finite()) {
            return Err(bad("physics.n_s", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&p.eta) {
            return Err(bad("physics.eta", "must lie in [0, 1]"));
        }
        if !(p.v_min >= 0.0 && p.v_min * m as f64 <= 1.0) {
            return Err(bad("physics.v_min", format!("must lie in [0, 1/{m}]")));
        }
        self.spsa.validate()?;
        if self.modes.is_empty() {
            return Err(bad("modes", "at least one mode is required"));
        }
        for (i, a) in self.modes.iter().enumerate() {
            if self.modes[..i].contains(a) {
                return Err(bad(&format!("modes[{i}]"), "duplicate mode"));
            }
        }
        for (k, h) in &self.init {
            check_hyperplane(&format!("init.{}", mode_key(*k)), h, m)?;
        }
        for (k, h) in &self.hyperplanes {
            check_hyperplane(&format!("hyperplanes.{}", mode_key(*k)), h, m)?;
        }
        if self.checkpoint_stride == Some(0) {
            return Err(bad("checkpoint_stride", "must be at least 1"));
        }
        if self.evaluation.n_test == 0 {
            return Err(bad("evaluation.n_test", "must be at least 1"));
        }
        if self.evaluation.reps == 0 {
            return Err(bad("evaluation.reps", "must be at least 1"));
        }
        if self.margins.is_empty() {
            return Err(bad("margins", "at least one margin is required"));
        }
        for (i, e) in self.margins.iter().enumerate() {
            if !(*e >= 0.0 && e.is_finite()) {
                return Err(bad(&format!("margins[{i}]"), "must be finite and >= 0"));
            }
            check_acceptance(&format!("margins[{i}]"), &task.with_margin(*e)?)?;
        }
        if self.mc.n_trials < 2 {
            return Err(bad("mc.n_trials", "need at least 2 trials"));
        }
        match &self.mc.init_sampler {
            InitSampler::OrthantSphere { b_lo, b_hi } => {
                if !(b_lo.is_finite() && b_hi.is_finite() && b_lo <= b_hi) {
                    return Err(bad("mc.init_sampler", "need finite b_lo <= b_hi"));
                }
            }
            InitSampler::Fixed { w, b } => {
                let h = Hyperplane::new(w.clone(), *b)
                    .map_err(|e| bad("mc.init_sampler", e.to_string()))?;
                check_hyperplane("mc.init_sampler", &h, m)?;
            }
        }
        if self.oracle.n_mc < MIN_ORACLE_SAMPLES {
            return Err(bad(
                "oracle.n_mc",
                format!("must be at least {MIN_ORACLE_SAMPLES}"),
            ));
        }
        let nr = self.noise_report;
        if !(nr.n_s_total >= 0.0 && nr.n_s_total.is_finite()) {
            return Err(bad("noise_report.n_s_total", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&nr.eta) {
            return Err(bad("noise_report.eta", "must lie in [0, 1]"));
        }
        if nr.sensors == 0 {
            return Err(bad("noise_report.sensors", "must be at least 1"));
        }
        Ok(())
    }

    /// Builds the task at the configured margin.
    pub fn task(&self) -> Result<TaskSpec> {
        let t = &self.task;
        let base = match t.kind {
            TaskKind::RfDirection2d | TaskKind::MeanAmplitude3d => {
                if t.w_t.is_some() || t.b_t.is_some() {
                    return Err(bad("task.w_t", "only allowed for general_hyperplane"));
                }
                if t.kind == TaskKind::RfDirection2d {
                    TaskSpec::rf_direction_2d(t.margin)
                } else {
                    TaskSpec::mean_amplitude_3d(t.margin)
                }
            }
            TaskKind::GeneralHyperplane => {
                let w = t
                    .w_t
                    .clone()
                    .ok_or_else(|| bad("task.w_t", "required for general_hyperplane"))?;
                TaskSpec::general(w, t.b_t.unwrap_or(0.0), t.margin)
            }
        }
        .map_err(|e| bad("task", e.to_string()))?;
        match &t.bounds {
            None => Ok(base),
            Some(bounds) => {
                if bounds.len() != base.dim() {
                    return Err(bad(
                        "task.bounds",
                        format!("expected {} intervals, got {}", base.dim(), bounds.len()),
                    ));
                }
                TaskSpec::with_bounds(
                    base.kind(),
                    base.w_t().to_vec(),
                    base.b_t(),
                    base.margin(),
                    bounds.clone(),
                )
                .map_err(|e| bad("task.bounds", e.to_string()))
            }
        }
    }

    pub fn classifier(&self, kind: ModeKind, dim: usize) -> Result<ClassifierMode> {
        let p = self.physics;
        Ok(match kind {
            ModeKind::Slaen => ClassifierMode::Slaen {
                source: SqueezedSourceSpec::new(p.n_s)?,
                eta: p.eta,
                v_min: p.v_min,
            },
            ModeKind::Classical => ClassifierMode::ClassicalCoherent { eta: p.eta },
            ModeKind::Separable => ClassifierMode::SeparableSqueezed {
                n_s_per_sensor: p.n_s / dim as f64,
                eta: p.eta,
            },
        })
    }

    pub fn initial_hyperplane(&self, kind: ModeKind) -> Hyperplane {
        self.init
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| default_init(self.task.kind, kind))
    }

    pub fn stride(&self) -> usize {
        self.checkpoint_stride.unwrap_or(match self.task.kind {
            TaskKind::RfDirection2d => 20,
            _ => 30,
        })
    }
}

pub fn mode_key(kind: ModeKind) -> &'static str {
    match kind {
        ModeKind::Slaen => "slaen",
        ModeKind::Classical => "classical",
        ModeKind::Separable => "separable",
    }
}

/// Initial hyperplanes used in the reported experiments. The 2D task uses
/// separate starts for the entangled and the classical run; the 3D tasks
/// share one start across modes.
pub fn default_init(task: TaskKind, mode: ModeKind) -> Hyperplane {
    let (w, b) = match (task, mode) {
        (TaskKind::RfDirection2d, ModeKind::Slaen) => (vec![0.5f64.sqrt(), 0.5f64.sqrt()], 0.70),
        (TaskKind::RfDirection2d, _) => (vec![0.67, 0.74], 0.39),
        (TaskKind::MeanAmplitude3d, _) => (vec![0.9044, 0.3152, 0.2876], 0.53),
        (TaskKind::GeneralHyperplane, _) => (vec![0.60, 0.566, 0.566], 0.45),
    };
    Hyperplane { w, b }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "experiment": "mc-distance",
            "seed": 17,
            "task": {"kind": "general_hyperplane", "margin": 0.4, "w_t": [2, 1, 1], "b_t": 0.1},
            "modes": ["slaen", "separable"],
            "spsa": {"n_steps": 390, "lambda": 0.0},
            "init": {"slaen": {"w": [0.6, 0.566, 0.566], "b": 0.45}},
            "checkpoint_stride": 30,
            "margins": [0.2, 1.0],
            "mc": {"n_trials": 50, "init_sampler": {"kind": "orthant_sphere", "b_lo": -0.5, "b_hi": 0.5}}
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.spsa.n_steps, 390);
        assert_eq!(cfg.spsa.a, 1.0);
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.to_json(), again.to_json());
    }

    fn err_path(text: &str) -> String {
        match RunConfig::from_json(text) {
            Err(SimError::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        assert_eq!(err_path(r#"{"sede": 1}"#), "sede");
        assert_eq!(err_path(r#"{"spsa": {"alfa": 0.6}}"#), "spsa.alfa");
        assert_eq!(err_path(r#"{"physics": {"eta": "high"}}"#), "physics.eta");
    }

    #[test]
    fn ranges_are_checked() {
        assert_eq!(err_path(r#"{"physics": {"eta": 1.5}}"#), "physics.eta");
        assert_eq!(err_path(r#"{"physics": {"v_min": 0.6}}"#), "physics.v_min");
        assert_eq!(err_path(r#"{"modes": []}"#), "modes");
        assert_eq!(err_path(r#"{"modes": ["slaen", "slaen"]}"#), "modes[1]");
        assert_eq!(
            err_path(r#"{"init": {"slaen": {"w": [1, 0, 0], "b": 0}}}"#),
            "init.slaen"
        );
        assert_eq!(err_path(r#"{"margins": [0.2, 100.0]}"#), "margins[1]");
        assert_eq!(err_path(r#"{"oracle": {"n_mc": 10}}"#), "oracle.n_mc");
        assert_eq!(err_path(r#"{"task": {"w_t": [1, 0]}}"#), "task.w_t");
        assert_eq!(
            err_path(r#"{"task": {"kind": "general_hyperplane"}}"#),
            "task.w_t"
        );
        assert_eq!(err_path(r#"{"spsa": {"n_steps": 0}}"#), "spsa.n_steps");
        assert_eq!(
            err_path(r#"{"evaluation": {"reps": 0}}"#),
            "evaluation.reps"
        );
    }

    #[test]
    fn task_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.stride(), 20);
        let h = cfg.initial_hyperplane(ModeKind::Classical);
        assert_eq!((h.w.clone(), h.b), (vec![0.67, 0.74], 0.39));
        let cfg = RunConfig::from_json(r#"{"task": {"kind": "mean_amplitude_3d"}}"#).unwrap();
        assert_eq!(cfg.stride(), 30);
        assert_eq!(cfg.task().unwrap().dim(), 3);
        let sep = cfg.classifier(ModeKind::Separable, 3).unwrap();
        assert_eq!(
            sep,
            ClassifierMode::SeparableSqueezed {
                n_s_per_sensor: 3.3 / 3.0,
                eta: 0.53
            }
        );
    }
}
