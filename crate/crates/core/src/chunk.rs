//! Actions, action chunks, observation histories and the sampler interface.
//!
//! A chunk starting at tick `t` holds the actions planned for ticks
//! `t, t+1, ..., t+len-1`. Two chunks are *adjacent* when the newer one starts
//! exactly one tick after the older one; their overlap is then `len - 1` steps.
//! The harness uses chunk length 16 (the prediction horizon) throughout.

use std::collections::VecDeque;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{BidError, Result};

/// A single continuous action vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action(Vec<f64>);

impl Action {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(BidError::InvalidValue("action must have dimension >= 1".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(BidError::InvalidValue(format!("non-finite action entry {bad}")));
        }
        Ok(Action(values))
    }

    /// Builds an action without the finiteness check. Callers guarantee finite input.
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Action(values)
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Which sampler population a chunk was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    #[default]
    Strong,
    Weak,
}

/// A time-stamped sequence of actions produced by one sampler call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    start_time: usize,
    actions: Vec<Action>,
    source: SourceTag,
    /// Latent mode the sampler drew this chunk from. Evaluation bookkeeping
    /// only; no scoring criterion or decoder reads it.
    latent_mode: Option<u8>,
}

impl ActionChunk {
    pub fn new(start_time: usize, actions: Vec<Action>) -> Result<Self> {
        let first = actions
            .first()
            .ok_or_else(|| BidError::InvalidValue("chunk must hold at least one action".into()))?;
        let dim = first.dim();
        if let Some(bad) = actions.iter().find(|a| a.dim() != dim) {
            return Err(BidError::DimensionMismatch { expected: dim, got: bad.dim() });
        }
        Ok(ActionChunk { start_time, actions, source: SourceTag::Strong, latent_mode: None })
    }

    /// Convenience constructor from raw rows, one row per tick.
    pub fn from_rows(start_time: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let actions = rows.into_iter().map(Action::new).collect::<Result<Vec<_>>>()?;
        Self::new(start_time, actions)
    }

    pub fn with_source(mut self, source: SourceTag) -> Self {
        self.source = source;
        self
    }

    pub fn with_latent_mode(mut self, mode: Option<u8>) -> Self {
        self.latent_mode = mode;
        self
    }

    pub fn start_time(&self) -> usize {
        self.start_time
    }

    /// Absolute tick of the last planned action.
    pub fn end_time(&self) -> usize {
        self.start_time + self.actions.len() - 1
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions[0].dim()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn latent_mode(&self) -> Option<u8> {
        self.latent_mode
    }

    /// Action planned for absolute tick `t`, if the chunk covers it.
    pub fn action_at(&self, t: usize) -> Option<&Action> {
        t.checked_sub(self.start_time).and_then(|i| self.actions.get(i))
    }

    pub fn first_action(&self) -> &Action {
        &self.actions[0]
    }

    pub(crate) fn actions_mut(&mut self) -> &mut [Action] {
        &mut self.actions
    }
}

/// Euclidean distance between two actions.
pub fn step_distance(a: &Action, b: &Action) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(BidError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(l2(a.values(), b.values()))
}

#[inline]
pub(crate) fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairs each action of `cand` with the action of `prev` planned for the same
/// absolute tick. `cand` must start exactly one tick after `prev`.
///
/// Returned pairs are `(cand action, prev action)` in increasing time order.
pub fn overlap_pairs<'a>(
    prev: &'a ActionChunk,
    cand: &'a ActionChunk,
) -> Result<Vec<(&'a Action, &'a Action)>> {
    check_adjacent(prev, cand)?;
    Ok(cand.actions.iter().zip(prev.actions.iter().skip(1)).collect())
}

pub(crate) fn check_adjacent(prev: &ActionChunk, cand: &ActionChunk) -> Result<()> {
    if cand.start_time != prev.start_time + 1 {
        return Err(BidError::Alignment(format!(
            "candidate starts at {} but previous decision starts at {}",
            cand.start_time, prev.start_time
        )));
    }
    if cand.dim() != prev.dim() {
        return Err(BidError::DimensionMismatch { expected: prev.dim(), got: cand.dim() });
    }
    Ok(())
}

/// The most recent states seen by a policy, newest last, capped at the
/// context length.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationHistory {
    states: VecDeque<Vec<f64>>,
    capacity: usize,
    tick: usize,
}

impl ObservationHistory {
    /// Starts a history at tick 0 with an initial observation.
    pub fn new(capacity: usize, initial: Vec<f64>) -> Result<Self> {
        if capacity == 0 {
            return Err(BidError::Config("context length must be >= 1".into()));
        }
        if initial.is_empty() {
            return Err(BidError::InvalidValue("state must have dimension >= 1".into()));
        }
        let mut states = VecDeque::with_capacity(capacity);
        states.push_back(initial);
        Ok(ObservationHistory { states, capacity, tick: 0 })
    }

    /// Appends the observation for the next tick, dropping the oldest state
    /// once the context length is reached.
    pub fn push(&mut self, state: Vec<f64>) -> Result<()> {
        let dim = self.state_dim();
        if state.len() != dim {
            return Err(BidError::DimensionMismatch { expected: dim, got: state.len() });
        }
        if self.states.len() == self.capacity {
            self.states.pop_front();
        }
        self.states.push_back(state);
        self.tick += 1;
        Ok(())
    }

    /// Tick of the most recent observation; chunks sampled now start here.
    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn current(&self) -> &[f64] {
        self.states.back().expect("history is never empty")
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + DoubleEndedIterator {
        self.states.iter().map(|s| s.as_slice())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn state_dim(&self) -> usize {
        self.current().len()
    }
}

/// The chunk selected at the previous tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionMemory {
    previous: Option<ActionChunk>,
}

impl DecisionMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reference chunk for a decision at tick `now`. A stored chunk that is
    /// not from tick `now - 1` is stale and ignored.
    pub fn reference_for(&self, now: usize) -> Option<&ActionChunk> {
        self.previous.as_ref().filter(|p| p.start_time() + 1 == now)
    }

    pub fn previous(&self) -> Option<&ActionChunk> {
        self.previous.as_ref()
    }

    pub fn update(&mut self, chunk: ActionChunk) {
        self.previous = Some(chunk);
    }

    pub fn clear(&mut self) {
        self.previous = None;
    }
}

/// Anything that turns an observation history into independently sampled
/// action chunks.
///
/// Implementations must be deterministic for a fixed rng state and history,
/// and every returned chunk must start at `history.tick()` and share one length.
pub trait ChunkSampler: Send + Sync {
    fn sample(
        &self,
        history: &ObservationHistory,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<ActionChunk>>;
}

impl<S: ChunkSampler + ?Sized> ChunkSampler for Box<S> {
    fn sample(
        &self,
        history: &ObservationHistory,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<ActionChunk>> {
        (**self).sample(history, n, rng)
    }
}

impl<S: ChunkSampler + ?Sized> ChunkSampler for std::sync::Arc<S> {
    fn sample(
        &self,
        history: &ObservationHistory,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<ActionChunk>> {
        (**self).sample(history, n, rng)
    }
}

/// A sampler that always returns copies of one fixed plan, shifted to the
/// current tick. Useful as a deterministic policy in tests and tools.
#[derive(Debug, Clone)]
pub struct FixedSampler {
    rows: Vec<Vec<f64>>,
}

impl FixedSampler {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        ActionChunk::from_rows(0, rows.clone())?;
        Ok(FixedSampler { rows })
    }
}

impl ChunkSampler for FixedSampler {
    fn sample(
        &self,
        history: &ObservationHistory,
        n: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<ActionChunk>> {
        (0..n).map(|_| ActionChunk::from_rows(history.tick(), self.rows.clone())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chunk(start: usize, rows: &[f64]) -> ActionChunk {
        ActionChunk::from_rows(start, rows.iter().map(|v| vec![*v]).collect()).unwrap()
    }

    #[test]
    fn overlap_aligns_absolute_time() {
        let prev = chunk(4, &[1.0, 2.0, 3.0]);
        let cand = chunk(5, &[9.0, 8.0, 7.0]);
        let pairs = overlap_pairs(&prev, &cand).unwrap();
        let got: Vec<(f64, f64)> = pairs.iter().map(|(c, p)| (c.values()[0], p.values()[0])).collect();
        assert_eq!(got, vec![(9.0, 2.0), (8.0, 3.0)]);
    }

    #[test]
    fn overlap_empty_for_single_step_chunks() {
        let prev = chunk(0, &[1.0]);
        let cand = chunk(1, &[2.0]);
        assert!(overlap_pairs(&prev, &cand).unwrap().is_empty());
    }

    #[test]
    fn overlap_rejects_non_adjacent() {
        let prev = chunk(3, &[1.0, 2.0]);
        let cand = chunk(5, &[1.0, 2.0]);
        assert!(matches!(overlap_pairs(&prev, &cand), Err(BidError::Alignment(_))));
    }

    #[test]
    fn overlap_rejects_dimension_mismatch() {
        let prev = chunk(3, &[1.0, 2.0]);
        let cand = ActionChunk::from_rows(4, vec![vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert!(matches!(overlap_pairs(&prev, &cand), Err(BidError::DimensionMismatch { .. })));
    }

    #[test]
    fn overlap_pairs_by_time_tag() {
        // each action stores its own absolute tick, so pairs must match exactly
        let l = 6;
        let prev = ActionChunk::from_rows(10, (10..10 + l).map(|t| vec![t as f64]).collect()).unwrap();
        let cand = ActionChunk::from_rows(11, (11..11 + l).map(|t| vec![t as f64]).collect()).unwrap();
        let pairs = overlap_pairs(&prev, &cand).unwrap();
        assert_eq!(pairs.len(), l - 1);
        for (c, p) in pairs {
            assert_eq!(c, p);
        }
    }

    #[test]
    fn step_distance_examples() {
        let a = Action::new(vec![0.0, 0.0]).unwrap();
        let b = Action::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(step_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(step_distance(&a, &a).unwrap(), 0.0);
        let c = Action::scalar(1.0).unwrap();
        let d = Action::scalar(-1.0).unwrap();
        assert_eq!(step_distance(&c, &d).unwrap(), 2.0);
        assert!(step_distance(&a, &c).is_err());
    }

    #[test]
    fn action_rejects_non_finite() {
        assert!(Action::new(vec![f64::NAN]).is_err());
        assert!(Action::new(vec![f64::INFINITY, 0.0]).is_err());
        assert!(Action::new(vec![]).is_err());
    }

    #[test]
    fn chunk_rejects_mixed_dimensions() {
        let r = ActionChunk::from_rows(0, vec![vec![1.0], vec![1.0, 2.0]]);
        assert!(matches!(r, Err(BidError::DimensionMismatch { .. })));
        assert!(ActionChunk::new(0, vec![]).is_err());
    }

    #[test]
    fn history_caps_at_context_length() {
        let mut h = ObservationHistory::new(3, vec![0.0]).unwrap();
        for i in 1..6 {
            h.push(vec![i as f64]).unwrap();
        }
        assert_eq!(h.len(), 3);
        assert_eq!(h.tick(), 5);
        let got: Vec<f64> = h.states().map(|s| s[0]).collect();
        assert_eq!(got, vec![3.0, 4.0, 5.0]);
        assert!(h.push(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn memory_ignores_stale_reference() {
        let mut m = DecisionMemory::new();
        m.update(chunk(3, &[1.0, 2.0]));
        assert!(m.reference_for(4).is_some());
        assert!(m.reference_for(5).is_none());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, dim)
    }

    proptest! {
        #[test]
        fn step_distance_is_a_metric(
            (a, b, c) in (1usize..5).prop_flat_map(|d| (vec_strategy(d), vec_strategy(d), vec_strategy(d)))
        ) {
            let (a, b, c) = (Action::new(a).unwrap(), Action::new(b).unwrap(), Action::new(c).unwrap());
            let ab = step_distance(&a, &b).unwrap();
            let ba = step_distance(&b, &a).unwrap();
            let bc = step_distance(&b, &c).unwrap();
            let ac = step_distance(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(step_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ac <= ab + bc + 1e-9);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
