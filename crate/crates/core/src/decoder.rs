//! Decoding strategies and the rollout loops that drive them.
//!
//! [`BidDecoder`] implements bidirectional decoding: draw `N` chunks from a
//! strong and a weak sampler, score every strong candidate by backward
//! coherence with the previous decision plus forward contrast against the
//! mode-trimmed strong (positive) and weak (negative) sets, and keep the
//! minimiser. [`VanillaDecoder`] executes a single random sample and
//! [`EmaDecoder`] blends each new sample with the previous decision.

use rand::RngCore;
use serde::Serialize;

use crate::chunk::{check_adjacent, Action, ActionChunk, ChunkSampler, DecisionMemory, ObservationHistory, SourceTag};
use crate::criteria::{
    argmin, backward_losses, forward_contrast, smallest_k_indices, BackwardConfig, ForwardConfig,
};
use crate::error::{BidError, Result};

/// Per-tick scoring details kept for analysis and ablations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickDiagnostics {
    pub tick: usize,
    /// Backward coherence of each strong candidate (zeros on the first tick).
    pub backward: Vec<f64>,
    /// Forward contrast of each strong candidate.
    pub forward: Vec<f64>,
    /// Indices of the strong samples kept as positives.
    pub positives: Vec<usize>,
    /// Indices of the weak samples kept as negatives.
    pub negatives: Vec<usize>,
    pub chosen: usize,
}

impl TickDiagnostics {
    pub fn total(&self, i: usize) -> f64 {
        self.backward[i] + self.forward[i]
    }
}

/// The chunk a decoder commits to at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chunk: ActionChunk,
    pub diagnostics: Option<TickDiagnostics>,
}

/// A decoding strategy invoked once per replanning tick.
pub trait Decoder {
    fn select(&mut self, history: &ObservationHistory, rng: &mut dyn RngCore) -> Result<Selection>;

    /// Forgets the decision memory, e.g. between episodes.
    fn reset(&mut self) {}
}

fn sample_checked(
    sampler: &dyn ChunkSampler,
    history: &ObservationHistory,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<ActionChunk>> {
    let chunks = sampler.sample(history, n, rng)?;
    if chunks.len() != n {
        return Err(BidError::Sampler(format!("requested {n} chunks, got {}", chunks.len())));
    }
    let first = &chunks[0];
    for c in &chunks {
        if c.start_time() != history.tick() {
            return Err(BidError::Sampler(format!(
                "chunk starts at {} but the current tick is {}",
                c.start_time(),
                history.tick()
            )));
        }
        if c.len() != first.len() || c.dim() != first.dim() {
            return Err(BidError::Sampler("sampled chunks differ in length or dimension".into()));
        }
    }
    Ok(chunks)
}

/// Executes the first sample of each call.
pub struct VanillaDecoder<S> {
    sampler: S,
}

impl<S: ChunkSampler> VanillaDecoder<S> {
    pub fn new(sampler: S) -> Self {
        VanillaDecoder { sampler }
    }
}

/// One randomly sampled chunk.
pub fn vanilla_select(
    history: &ObservationHistory,
    sampler: &dyn ChunkSampler,
    rng: &mut dyn RngCore,
) -> Result<ActionChunk> {
    Ok(sample_checked(sampler, history, 1, rng)?.remove(0))
}

impl<S: ChunkSampler> Decoder for VanillaDecoder<S> {
    fn select(&mut self, history: &ObservationHistory, rng: &mut dyn RngCore) -> Result<Selection> {
        Ok(Selection { chunk: vanilla_select(history, &self.sampler, rng)?, diagnostics: None })
    }
}

/// Replaces each overlapping step of `new` with `lambda * new + (1 - lambda) * previous`.
/// Steps past the end of `previous` are left as sampled.
pub fn ema_blend(new: &ActionChunk, previous: &ActionChunk, lambda: f64) -> Result<ActionChunk> {
    check_adjacent(previous, new)?;
    let mut out = new.clone();
    for (step, old) in out.actions_mut().iter_mut().zip(previous.actions().iter().skip(1)) {
        let mixed = step
            .values()
            .iter()
            .zip(old.values())
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        *step = Action::from_vec_unchecked(mixed);
    }
    Ok(out)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BidError::Config(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    Ok(())
}

/// Default weight of the fresh sample in moving-average blending.
pub const DEFAULT_LAMBDA: f64 = 0.75;

/// Temporal ensembling by exponential moving average over overlapping steps.
pub struct EmaDecoder<S> {
    sampler: S,
    lambda: f64,
    memory: DecisionMemory,
}

impl<S: ChunkSampler> EmaDecoder<S> {
    pub fn new(sampler: S, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(EmaDecoder { sampler, lambda, memory: DecisionMemory::new() })
    }

    pub fn memory(&self) -> &DecisionMemory {
        &self.memory
    }
}

impl<S: ChunkSampler> Decoder for EmaDecoder<S> {
    fn select(&mut self, history: &ObservationHistory, rng: &mut dyn RngCore) -> Result<Selection> {
        let chunk = ema_select(history, &self.sampler, self.lambda, &mut self.memory, rng)?;
        Ok(Selection { chunk, diagnostics: None })
    }

    fn reset(&mut self) {
        self.memory.clear();
    }
}

/// Samples one chunk and blends it with the remembered decision.
pub fn ema_select(
    history: &ObservationHistory,
    sampler: &dyn ChunkSampler,
    lambda: f64,
    memory: &mut DecisionMemory,
    rng: &mut dyn RngCore,
) -> Result<ActionChunk> {
    let fresh = vanilla_select(history, sampler, rng)?;
    let blended = match memory.reference_for(history.tick()) {
        Some(prev) => ema_blend(&fresh, prev, lambda)?,
        None => fresh,
    };
    memory.update(blended.clone());
    Ok(blended)
}

/// Bidirectional decoding over a strong and a weak sampler.
pub struct BidDecoder<S, W> {
    strong: S,
    weak: W,
    cfg_b: BackwardConfig,
    cfg_f: ForwardConfig,
    memory: DecisionMemory,
    ema_lambda: Option<f64>,
}

impl<S: ChunkSampler, W: ChunkSampler> BidDecoder<S, W> {
    pub fn new(strong: S, weak: W, cfg_b: BackwardConfig, cfg_f: ForwardConfig) -> Result<Self> {
        // re-validate in case the configs were built by hand
        BackwardConfig::new(cfg_b.rho)?;
        ForwardConfig::new(cfg_f.mode_size, cfg_f.batch_size)?;
        Ok(BidDecoder { strong, weak, cfg_b, cfg_f, memory: DecisionMemory::new(), ema_lambda: None })
    }

    /// Stacks moving-average blending on top of the selection. The decision
    /// memory then holds the blended chunk, i.e. the one actions are executed from.
    pub fn with_ema(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.ema_lambda = Some(lambda);
        Ok(self)
    }

    pub fn memory(&self) -> &DecisionMemory {
        &self.memory
    }

    pub fn backward_config(&self) -> &BackwardConfig {
        &self.cfg_b
    }

    pub fn forward_config(&self) -> &ForwardConfig {
        &self.cfg_f
    }
}

/// Selects among pre-drawn strong and weak samples. This is the sampling-free
/// core of [`bid_select`]: `prev` is the previous decision (if any).
pub fn bid_choose(
    strong: &[ActionChunk],
    weak: &[ActionChunk],
    prev: Option<&ActionChunk>,
    cfg_b: &BackwardConfig,
    cfg_f: &ForwardConfig,
) -> Result<TickDiagnostics> {
    if strong.is_empty() {
        return Err(BidError::Empty("no strong candidates".into()));
    }
    let k = cfg_f.mode_size;
    let lb_strong = backward_losses(strong, prev, cfg_b)?;
    let lb_weak = backward_losses(weak, prev, cfg_b)?;
    let positives = smallest_k_indices(&lb_strong, k.min(strong.len()))?;
    let negatives = smallest_k_indices(&lb_weak, k.min(weak.len()))?;
    let negative_set: Vec<ActionChunk> = negatives.iter().map(|&i| weak[i].clone()).collect();

    let mut forward = Vec::with_capacity(strong.len());
    for (i, cand) in strong.iter().enumerate() {
        let pos: Vec<ActionChunk> =
            positives.iter().filter(|&&j| j != i).map(|&j| strong[j].clone()).collect();
        forward.push(forward_contrast(cand, &pos, &negative_set, cfg_f)?);
    }
    let totals: Vec<f64> = lb_strong.iter().zip(&forward).map(|(b, f)| b + f).collect();
    let chosen = argmin(&totals).expect("non-empty");
    Ok(TickDiagnostics {
        tick: strong[0].start_time(),
        backward: lb_strong,
        forward,
        positives,
        negatives,
        chosen,
    })
}

/// One step of bidirectional decoding: sample, score, select, update memory.
pub fn bid_select<S: ChunkSampler, W: ChunkSampler>(
    history: &ObservationHistory,
    dec: &mut BidDecoder<S, W>,
    rng: &mut dyn RngCore,
) -> Result<Selection> {
    let n = dec.cfg_f.batch_size;
    let strong = sample_checked(&dec.strong, history, n, rng)?;
    let weak: Vec<ActionChunk> = sample_checked(&dec.weak, history, n, rng)?
        .into_iter()
        .map(|c| c.with_source(SourceTag::Weak))
        .collect();
    if weak[0].len() != strong[0].len() || weak[0].dim() != strong[0].dim() {
        return Err(BidError::Sampler("strong and weak samplers disagree on chunk shape".into()));
    }
    let prev = dec.memory.reference_for(history.tick());
    let diag = bid_choose(&strong, &weak, prev, &dec.cfg_b, &dec.cfg_f)?;
    let mut chosen = strong[diag.chosen].clone();
    if let (Some(lambda), Some(p)) = (dec.ema_lambda, prev) {
        chosen = ema_blend(&chosen, p, lambda)?;
    }
    dec.memory.update(chosen.clone());
    Ok(Selection { chunk: chosen, diagnostics: Some(diag) })
}

impl<S: ChunkSampler, W: ChunkSampler> Decoder for BidDecoder<S, W> {
    fn select(&mut self, history: &ObservationHistory, rng: &mut dyn RngCore) -> Result<Selection> {
        bid_select(history, self, rng)
    }

    fn reset(&mut self) {
        self.memory.clear();
    }
}

impl<D: Decoder + ?Sized> Decoder for Box<D> {
    fn select(&mut self, history: &ObservationHistory, rng: &mut dyn RngCore) -> Result<Selection> {
        (**self).select(history, rng)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub terminal: bool,
}

/// An environment driven one action per tick.
pub trait Environment {
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn step(&mut self, action: &Action, rng: &mut dyn RngCore) -> Result<Step>;
}

/// Everything that happened during one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RolloutRecord {
    /// Observation before each executed action, followed by the final observation.
    pub states: Vec<Vec<f64>>,
    pub executed_actions: Vec<Vec<f64>>,
    /// Chunks obtained at replanning ticks, in order.
    pub selected_chunks: Vec<ActionChunk>,
    /// For each executed action, the index into `selected_chunks` it came from.
    pub chunk_of_tick: Vec<usize>,
    pub diagnostics: Vec<Option<TickDiagnostics>>,
    /// The environment reported a terminal state.
    pub terminated: bool,
    /// Set when the episode stopped early because of an error.
    pub aborted: Option<String>,
}

impl RolloutRecord {
    pub fn ticks(&self) -> usize {
        self.executed_actions.len()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }
}

/// Replans every tick and executes only the first action of each selected chunk.
pub fn closed_loop_rollout(
    env: &mut dyn Environment,
    decoder: &mut dyn Decoder,
    horizon: usize,
    context: usize,
    rng: &mut dyn RngCore,
) -> Result<RolloutRecord> {
    let mut record = RolloutRecord::default();
    if horizon == 0 {
        return Ok(record);
    }
    decoder.reset();
    let obs = env.reset(rng);
    let mut history = ObservationHistory::new(context, obs.clone())?;
    record.states.push(obs);
    for _ in 0..horizon {
        let selection = match decoder.select(&history, rng) {
            Ok(s) => s,
            Err(e) => {
                record.aborted = Some(e.to_string());
                break;
            }
        };
        let action = selection.chunk.first_action().clone();
        record.selected_chunks.push(selection.chunk);
        record.diagnostics.push(selection.diagnostics);
        if !execute(env, &action, &mut history, &mut record, rng)? {
            break;
        }
    }
    Ok(record)
}

/// Executes one action; returns whether the episode continues.
fn execute(
    env: &mut dyn Environment,
    action: &Action,
    history: &mut ObservationHistory,
    record: &mut RolloutRecord,
    rng: &mut dyn RngCore,
) -> Result<bool> {
    match env.step(action, rng) {
        Ok(step) => {
            record.executed_actions.push(action.values().to_vec());
            record.chunk_of_tick.push(record.selected_chunks.len() - 1);
            history.push(step.observation.clone())?;
            record.states.push(step.observation);
            if step.terminal {
                record.terminated = true;
                return Ok(false);
            }
            Ok(true)
        }
        Err(e) => {
            record.aborted = Some(e.to_string());
            Ok(false)
        }
    }
}

/// Replans every `action_horizon` ticks and executes that many consecutive
/// actions of each sampled chunk. The last chunk is truncated at `horizon`.
pub fn open_loop_rollout(
    env: &mut dyn Environment,
    sampler: &dyn ChunkSampler,
    action_horizon: usize,
    horizon: usize,
    context: usize,
    rng: &mut dyn RngCore,
) -> Result<RolloutRecord> {
    if action_horizon == 0 {
        return Err(BidError::Config("action horizon must be >= 1".into()));
    }
    let mut record = RolloutRecord::default();
    if horizon == 0 {
        return Ok(record);
    }
    let obs = env.reset(rng);
    let mut history = ObservationHistory::new(context, obs.clone())?;
    record.states.push(obs);
    'episode: while record.ticks() < horizon {
        let chunk = match vanilla_select(&history, sampler, rng) {
            Ok(c) => c,
            Err(e) => {
                record.aborted = Some(e.to_string());
                break;
            }
        };
        if action_horizon > chunk.len() {
            return Err(BidError::Config(format!(
                "action horizon {action_horizon} exceeds chunk length {}",
                chunk.len()
            )));
        }
        let actions: Vec<Action> = chunk.actions()[..action_horizon].to_vec();
        record.selected_chunks.push(chunk);
        record.diagnostics.push(None);
        for action in &actions {
            if record.ticks() >= horizon || !execute(env, action, &mut history, &mut record, rng)? {
                break 'episode;
            }
        }
    }
    Ok(record)
}
