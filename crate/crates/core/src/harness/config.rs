use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{IdleCounting, DEFAULT_MAX_TICKS, DEFAULT_WINDOW};
use crate::criteria::{BackwardConfig, ContrastMode, ForwardConfig};
use crate::decoder::DEFAULT_LAMBDA;
use crate::error::{BidError, Result};

pub const DEFAULT_CHUNK_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Diagnostic,
    Bimodal,
    Drift,
    Scaling,
    Ablation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Diagnostic,
        ExperimentKind::Bimodal,
        ExperimentKind::Drift,
        ExperimentKind::Scaling,
        ExperimentKind::Ablation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Diagnostic => "diagnostic",
            ExperimentKind::Bimodal => "bimodal",
            ExperimentKind::Drift => "drift",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Ablation => "ablation",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExperimentKind {
    type Err = BidError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| BidError::Config(format!("unknown experiment kind '{s}'")))
    }
}

/// How actions are chosen at each replanning point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// One random sample per tick, first action executed.
    Vanilla,
    /// One random sample per tick, blended with the previous decision.
    Ema,
    /// Bidirectional decoding.
    Bid,
    /// Bidirectional decoding followed by moving-average blending.
    BidEma,
    /// One random sample executed in full before replanning.
    OpenLoop,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 5] =
        [DecoderKind::Vanilla, DecoderKind::Ema, DecoderKind::Bid, DecoderKind::BidEma, DecoderKind::OpenLoop];

    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::Vanilla => "vanilla",
            DecoderKind::Ema => "ema",
            DecoderKind::Bid => "bid",
            DecoderKind::BidEma => "bid_ema",
            DecoderKind::OpenLoop => "open_loop",
        }
    }
}

impl FromStr for DecoderKind {
    type Err = BidError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| BidError::Config(format!("unknown decoder '{s}'")))
    }
}

/// Decoder hyperparameters and the decoder conditions to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSettings {
    /// Samples drawn from each policy per tick (N).
    pub samples: usize,
    /// Size of the positive and negative reference sets (K).
    pub mode_size: usize,
    pub rho: f64,
    pub lambda: f64,
    pub chunk_len: usize,
    /// Decoders compared by the bimodal and drift experiments.
    pub decoders: Vec<DecoderKind>,
    /// Forward-contrast variants compared by the ablation experiment.
    pub contrast: Vec<ContrastMode>,
    /// Sample counts swept by the scaling experiment.
    pub sample_counts: Vec<usize>,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        DecoderSettings {
            samples: ForwardConfig::DEFAULT_BATCH,
            mode_size: ForwardConfig::DEFAULT_MODE,
            rho: BackwardConfig::DEFAULT_RHO,
            lambda: DEFAULT_LAMBDA,
            chunk_len: DEFAULT_CHUNK_LEN,
            decoders: vec![DecoderKind::Vanilla, DecoderKind::Ema, DecoderKind::Bid],
            contrast: ContrastMode::ALL.to_vec(),
            sample_counts: vec![1, 5, 15, 30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticSettings {
    pub deltas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub demos: usize,
    pub max_ticks: usize,
    pub idle_counting: IdleCounting,
    pub expert_window: usize,
    /// Directory holding pre-generated demonstrations; generated on the fly if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demo_cache: Option<PathBuf>,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        DiagnosticSettings {
            deltas: vec![0.0, 0.4, 0.8],
            horizons: vec![1, 3, 5, 7, 10],
            demos: 2000,
            max_ticks: DEFAULT_MAX_TICKS,
            idle_counting: IdleCounting::Chosen,
            expert_window: DEFAULT_WINDOW,
            demo_cache: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Two parallel constant-velocity lanes; no goal.
    Lanes,
    /// Two mirrored arcs around a central obstacle to a goal.
    Arcs,
    /// Two user-supplied mode tables; no goal.
    Table,
}

/// Settings for the bimodal and ablation experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BimodalSettings {
    pub geometry: Geometry,
    pub ticks: usize,
    pub sigma: f64,
    pub mode_prob: f64,
    /// Lateral distance between the lanes, per step.
    pub separation: f64,
    pub speed: f64,
    pub goal_distance: f64,
    pub arc_height: f64,
    pub arc_duration: usize,
    pub obstacle_radius: f64,
    pub goal_tolerance: f64,
    pub max_step: f64,
    /// Probability that the strong policy emits a mode-averaged plan.
    pub collapse_prob: f64,
    pub weak_blur: f64,
    pub weak_extra_sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_a_table: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_b_table: Option<PathBuf>,
}

impl Default for BimodalSettings {
    fn default() -> Self {
        BimodalSettings {
            geometry: Geometry::Arcs,
            ticks: 60,
            sigma: 0.05,
            mode_prob: 0.5,
            separation: 0.5,
            speed: 0.5,
            goal_distance: 20.0,
            arc_height: 6.0,
            arc_duration: 40,
            obstacle_radius: 3.0,
            goal_tolerance: 1.0,
            max_step: 2.0,
            collapse_prob: 0.0,
            weak_blur: 0.5,
            weak_extra_sigma: 0.1,
            mode_a_table: None,
            mode_b_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSettings {
    pub ticks: usize,
    pub drift_speed: f64,
    pub tolerance: f64,
    pub max_step: f64,
    pub start_distance: f64,
    /// Spread of the planner's sideways bend, as a fraction of the distance.
    pub curve_sigma: f64,
    pub sigma: f64,
    pub weak_curve_scale: f64,
    pub weak_extra_sigma: f64,
}

impl Default for DriftSettings {
    fn default() -> Self {
        DriftSettings {
            ticks: 40,
            drift_speed: 0.4,
            tolerance: 0.5,
            max_step: 1.0,
            start_distance: 25.0,
            curve_sigma: 0.3,
            sigma: 0.1,
            weak_curve_scale: 3.0,
            weak_extra_sigma: 0.3,
        }
    }
}

/// A complete experiment description. Every field has a default, so a config
/// file only needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Experiment id written to every result row; defaults to the kind.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub episodes: usize,
    /// Independent repeats; repeat `r` uses master seed `seed + r`.
    pub replicates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Record per-row wall time. Off by default so output files are reproducible.
    pub wall_time: bool,
    pub decoder: DecoderSettings,
    pub diagnostic: DiagnosticSettings,
    pub bimodal: BimodalSettings,
    pub drift: DriftSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Diagnostic,
            name: None,
            seed: 0,
            episodes: 2000,
            replicates: 1,
            output: None,
            wall_time: false,
            decoder: DecoderSettings::default(),
            diagnostic: DiagnosticSettings::default(),
            bimodal: BimodalSettings::default(),
            drift: DriftSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig { kind, ..Default::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BidError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BidError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn experiment_id(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.label().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BidError::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        let d = &self.decoder;
        ForwardConfig::new(d.mode_size, d.samples)?;
        BackwardConfig::new(d.rho)?;
        if !(d.lambda > 0.0 && d.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", d.lambda));
        }
        if d.chunk_len == 0 {
            return bad("chunk_len must be positive".into());
        }
        match self.kind {
            ExperimentKind::Diagnostic => {
                let g = &self.diagnostic;
                nonempty("diagnostic.deltas", &g.deltas)?;
                nonempty("diagnostic.horizons", &g.horizons)?;
                if let Some(&x) = g.deltas.iter().find(|x| !(0.0..1.0).contains(*x)) {
                    return bad(format!("delta must lie in [0, 1), got {x}"));
                }
                if g.horizons.contains(&0) {
                    return bad("horizons must be positive".into());
                }
                if g.demos == 0 || g.max_ticks == 0 || g.expert_window == 0 {
                    return bad("demos, max_ticks and expert_window must be positive".into());
                }
            }
            ExperimentKind::Bimodal | ExperimentKind::Ablation => {
                if self.kind == ExperimentKind::Bimodal {
                    nonempty("decoder.decoders", &d.decoders)?;
                } else {
                    nonempty("decoder.contrast", &d.contrast)?;
                }
                let b = &self.bimodal;
                if b.ticks < 2 {
                    return bad("bimodal.ticks must be at least 2".into());
                }
                for (name, v) in [("mode_prob", b.mode_prob), ("collapse_prob", b.collapse_prob), ("weak_blur", b.weak_blur)] {
                    if !(0.0..=1.0).contains(&v) {
                        return bad(format!("bimodal.{name} must lie in [0, 1], got {v}"));
                    }
                }
                for (name, v) in [
                    ("sigma", b.sigma),
                    ("weak_extra_sigma", b.weak_extra_sigma),
                    ("arc_height", b.arc_height),
                ] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return bad(format!("bimodal.{name} must be non-negative, got {v}"));
                    }
                }
                for (name, v) in [
                    ("max_step", b.max_step),
                    ("goal_distance", b.goal_distance),
                    ("goal_tolerance", b.goal_tolerance),
                    ("obstacle_radius", b.obstacle_radius),
                ] {
                    if !(v > 0.0 && v.is_finite()) {
                        return bad(format!("bimodal.{name} must be positive, got {v}"));
                    }
                }
                if b.arc_duration == 0 {
                    return bad("bimodal.arc_duration must be positive".into());
                }
                if b.geometry == Geometry::Table && (b.mode_a_table.is_none() || b.mode_b_table.is_none()) {
                    return bad("table geometry needs mode_a_table and mode_b_table".into());
                }
            }
            ExperimentKind::Drift | ExperimentKind::Scaling => {
                if self.kind == ExperimentKind::Drift {
                    nonempty("decoder.decoders", &d.decoders)?;
                } else {
                    nonempty("decoder.sample_counts", &d.sample_counts)?;
                    if d.sample_counts.contains(&0) {
                        return bad("sample counts must be positive".into());
                    }
                }
                let r = &self.drift;
                if r.ticks == 0 {
                    return bad("drift.ticks must be positive".into());
                }
                for (name, v) in [
                    ("drift_speed", r.drift_speed),
                    ("start_distance", r.start_distance),
                    ("curve_sigma", r.curve_sigma),
                    ("sigma", r.sigma),
                    ("weak_curve_scale", r.weak_curve_scale),
                    ("weak_extra_sigma", r.weak_extra_sigma),
                ] {
                    if !(v >= 0.0 && v.is_finite()) {
                        return bad(format!("drift.{name} must be non-negative, got {v}"));
                    }
                }
                for (name, v) in [("tolerance", r.tolerance), ("max_step", r.max_step)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return bad(format!("drift.{name} must be positive, got {v}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Narrows a config to the single condition described by `labels`, as
    /// written in result rows. Running the result reproduces that condition's rows.
    pub fn restrict(&self, labels: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = self.clone();
        for (key, value) in labels {
            let parse_err = || BidError::Config(format!("bad value '{value}' for condition '{key}'"));
            match key.as_str() {
                "delta" => cfg.diagnostic.deltas = vec![value.parse().map_err(|_| parse_err())?],
                "h" => cfg.diagnostic.horizons = vec![value.parse().map_err(|_| parse_err())?],
                "decoder" => cfg.decoder.decoders = vec![value.parse()?],
                "contrast" => cfg.decoder.contrast = vec![value.parse()?],
                "samples" => {
                    let n: usize = value.parse().map_err(|_| parse_err())?;
                    if cfg.kind == ExperimentKind::Scaling {
                        cfg.decoder.sample_counts = vec![n];
                    } else {
                        cfg.decoder.samples = n;
                    }
                }
                other => return Err(BidError::Config(format!("unknown condition label '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn nonempty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(BidError::Config(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}
