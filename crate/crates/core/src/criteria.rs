//! Scoring criteria for candidate chunks: backward coherence against the
//! previous decision, forward contrast against strong/weak reference sets,
//! and mode trimming of those reference sets.

use serde::{Deserialize, Serialize};

use crate::chunk::{check_adjacent, l2, ActionChunk};
use crate::error::{BidError, Result};

/// Decay applied per overlap step in the backward coherence sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardConfig {
    pub rho: f64,
}

impl BackwardConfig {
    pub const DEFAULT_RHO: f64 = 0.9;

    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(BidError::Config(format!("rho must lie in [0, 1], got {rho}")));
        }
        Ok(BackwardConfig { rho })
    }
}

impl Default for BackwardConfig {
    fn default() -> Self {
        BackwardConfig { rho: Self::DEFAULT_RHO }
    }
}

/// Which sums of the forward contrast are active. Disabling one gives the
/// positives-only / negatives-only ablations; disabling both removes the
/// criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastMode {
    #[default]
    Full,
    PositivesOnly,
    NegativesOnly,
    Off,
}

impl ContrastMode {
    pub const ALL: [ContrastMode; 4] =
        [ContrastMode::Full, ContrastMode::PositivesOnly, ContrastMode::NegativesOnly, ContrastMode::Off];

    pub fn uses_positives(self) -> bool {
        matches!(self, ContrastMode::Full | ContrastMode::PositivesOnly)
    }

    pub fn uses_negatives(self) -> bool {
        matches!(self, ContrastMode::Full | ContrastMode::NegativesOnly)
    }

    pub fn label(self) -> &'static str {
        match self {
            ContrastMode::Full => "full",
            ContrastMode::PositivesOnly => "positives-only",
            ContrastMode::NegativesOnly => "negatives-only",
            ContrastMode::Off => "off",
        }
    }
}

impl std::str::FromStr for ContrastMode {
    type Err = BidError;

    fn from_str(s: &str) -> Result<Self> {
        ContrastMode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| BidError::Config(format!("unknown contrast mode '{s}'")))
    }
}

/// Batch size N (samples per policy) and mode size K (reference set size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardConfig {
    pub mode_size: usize,
    pub batch_size: usize,
    pub contrast: ContrastMode,
}

impl ForwardConfig {
    pub const DEFAULT_BATCH: usize = 30;
    pub const DEFAULT_MODE: usize = 10;

    pub fn new(mode_size: usize, batch_size: usize) -> Result<Self> {
        if mode_size == 0 || mode_size > batch_size {
            return Err(BidError::Config(format!(
                "mode size K={mode_size} must satisfy 1 <= K <= N={batch_size}"
            )));
        }
        Ok(ForwardConfig { mode_size, batch_size, contrast: ContrastMode::Full })
    }

    pub fn with_contrast(mut self, contrast: ContrastMode) -> Self {
        self.contrast = contrast;
        self
    }
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            mode_size: Self::DEFAULT_MODE,
            batch_size: Self::DEFAULT_BATCH,
            contrast: ContrastMode::Full,
        }
    }
}

/// Decayed sum of per-step distances between `cand` and the previous decision
/// over their overlapping ticks. The first overlap step has weight 1 even when
/// `rho == 0`.
pub fn backward_coherence(cand: &ActionChunk, prev: &ActionChunk, cfg: &BackwardConfig) -> Result<f64> {
    check_adjacent(prev, cand)?;
    let mut weight = 1.0;
    let mut total = 0.0;
    for (c, p) in cand.actions().iter().zip(prev.actions().iter().skip(1)) {
        total += weight * l2(c.values(), p.values());
        weight *= cfg.rho;
    }
    Ok(total)
}

/// Backward coherence for each sample, or all zeros when there is no
/// previous decision yet.
pub fn backward_losses(
    samples: &[ActionChunk],
    prev: Option<&ActionChunk>,
    cfg: &BackwardConfig,
) -> Result<Vec<f64>> {
    match prev {
        None => Ok(vec![0.0; samples.len()]),
        Some(p) => samples.iter().map(|s| backward_coherence(s, p, cfg)).collect(),
    }
}

/// Indices of the `k` smallest losses, ties to the lower index, returned in
/// ascending index order.
pub fn smallest_k_indices(losses: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > losses.len() {
        return Err(BidError::Config(format!(
            "mode size {k} exceeds the {} available samples",
            losses.len()
        )));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Keeps the `k` samples closest to the previous decision under backward
/// coherence. Without a previous decision the first `k` samples are kept.
pub fn trim_to_mode(
    samples: &[ActionChunk],
    prev: Option<&ActionChunk>,
    k: usize,
    cfg: &BackwardConfig,
) -> Result<Vec<ActionChunk>> {
    if samples.is_empty() {
        return Err(BidError::Empty("no samples to trim".into()));
    }
    let losses = backward_losses(samples, prev, cfg)?;
    Ok(smallest_k_indices(&losses, k)?.into_iter().map(|i| samples[i].clone()).collect())
}

/// Sum over every step of the per-step distance between two chunks planned
/// for the same ticks.
pub fn chunk_distance(a: &ActionChunk, b: &ActionChunk) -> Result<f64> {
    if a.start_time() != b.start_time() || a.len() != b.len() {
        return Err(BidError::Alignment(format!(
            "chunks cover different ticks: [{}, {}] vs [{}, {}]",
            a.start_time(),
            a.end_time(),
            b.start_time(),
            b.end_time()
        )));
    }
    if a.dim() != b.dim() {
        return Err(BidError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(a.actions().iter().zip(b.actions()).map(|(x, y)| l2(x.values(), y.values())).sum())
}

/// Mean distance to the positive set minus mean distance to the negative
/// set, both normalised by the configured batch size. The caller is
/// responsible for removing `cand` from its own positive set.
pub fn forward_contrast(
    cand: &ActionChunk,
    positives: &[ActionChunk],
    negatives: &[ActionChunk],
    cfg: &ForwardConfig,
) -> Result<f64> {
    let mut pos = 0.0;
    if cfg.contrast.uses_positives() {
        for p in positives {
            pos += chunk_distance(cand, p)?;
        }
    }
    let mut neg = 0.0;
    if cfg.contrast.uses_negatives() {
        for n in negatives {
            neg += chunk_distance(cand, n)?;
        }
    }
    Ok((pos - neg) / cfg.batch_size as f64)
}

/// Backward coherence (zero without a previous decision) plus forward contrast.
pub fn total_loss(
    cand: &ActionChunk,
    prev: Option<&ActionChunk>,
    positives: &[ActionChunk],
    negatives: &[ActionChunk],
    cfg_b: &BackwardConfig,
    cfg_f: &ForwardConfig,
) -> Result<f64> {
    let backward = match prev {
        Some(p) => backward_coherence(cand, p, cfg_b)?,
        None => 0.0,
    };
    Ok(backward + forward_contrast(cand, positives, negatives, cfg_f)?)
}

/// Index of the minimum, ties to the lower index.
pub fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)))
        .map(|(i, _)| i)
}
