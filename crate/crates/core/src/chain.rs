//! One-dimensional chain diagnostic: an 11-state corridor with a pausing
//! expert, tabular action-chunk learners and idle-count distributions.
//!
//! States are `0..=10`; state 10 is the absorbing goal. A forward move
//! succeeds with probability `1 - delta`, idling always stays put. The expert
//! moves forward everywhere except at state 5, where it idles until its
//! memory window (the last `window` visited states, current included) holds
//! only state 5.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::chunk::{Action, ActionChunk, ChunkSampler, ObservationHistory};
use crate::decoder::{open_loop_rollout, Environment, Step};
use crate::error::{BidError, Result};

pub const GOAL: usize = 10;
pub const PAUSE_STATE: usize = 5;
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_MAX_TICKS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChainAction {
    Forward,
    Idle,
}

impl ChainAction {
    pub fn to_action(self) -> Action {
        Action::from_vec_unchecked(vec![match self {
            ChainAction::Forward => 1.0,
            ChainAction::Idle => 0.0,
        }])
    }

    /// Continuous actions above 0.5 count as forward moves.
    pub fn from_action(a: &Action) -> Self {
        if a.values()[0] > 0.5 {
            ChainAction::Forward
        } else {
            ChainAction::Idle
        }
    }

    fn symbol(self) -> char {
        match self {
            ChainAction::Forward => 'F',
            ChainAction::Idle => 'I',
        }
    }
}

/// What counts as an idle tick in an episode's idle histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IdleCounting {
    /// Ticks on which the idle action was chosen.
    #[default]
    Chosen,
    /// Ticks on which the agent did not advance: chosen idles plus failed
    /// forward moves.
    Stalled,
}

impl FromStr for IdleCounting {
    type Err = BidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chosen" => Ok(IdleCounting::Chosen),
            "stalled" => Ok(IdleCounting::Stalled),
            other => Err(BidError::Config(format!("unknown idle counting '{other}'"))),
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&delta) {
        return Err(BidError::Config(format!("delta must lie in [0, 1), got {delta}")));
    }
    Ok(())
}

/// The chain environment. Tracks the last `window` visited states for the expert.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    delta: f64,
    current: usize,
    window: VecDeque<usize>,
    window_len: usize,
}

impl ChainEnv {
    pub fn new(delta: f64) -> Result<Self> {
        Self::with_window(delta, DEFAULT_WINDOW)
    }

    pub fn with_window(delta: f64, window_len: usize) -> Result<Self> {
        check_delta(delta)?;
        if window_len == 0 {
            return Err(BidError::Config("expert window must hold at least one state".into()));
        }
        let mut env = ChainEnv { delta, current: 0, window: VecDeque::new(), window_len };
        env.restart();
        Ok(env)
    }

    fn restart(&mut self) {
        self.current = 0;
        self.window = std::iter::repeat_n(0, self.window_len).collect();
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn window(&self) -> &VecDeque<usize> {
        &self.window
    }

    pub fn is_terminal(&self) -> bool {
        self.current == GOAL
    }

    /// Applies one action and returns the new state index.
    pub fn step(&mut self, action: ChainAction, rng: &mut dyn RngCore) -> Result<usize> {
        if self.is_terminal() {
            return Err(BidError::Environment("step on terminal state".into()));
        }
        if action == ChainAction::Forward && !rng.random_bool(self.delta) {
            self.current += 1;
        }
        self.window.pop_front();
        self.window.push_back(self.current);
        Ok(self.current)
    }
}

impl Environment for ChainEnv {
    fn reset(&mut self, _rng: &mut dyn RngCore) -> Vec<f64> {
        self.restart();
        vec![0.0]
    }

    fn step(&mut self, action: &Action, rng: &mut dyn RngCore) -> Result<Step> {
        let s = ChainEnv::step(self, ChainAction::from_action(action), rng)?;
        Ok(Step { observation: vec![s as f64], terminal: s == GOAL })
    }
}

/// Expert decision from its memory window, oldest state first, current last.
pub fn expert_action(window: &[usize]) -> ChainAction {
    match window.last() {
        Some(&PAUSE_STATE) if !window.iter().all(|&s| s == PAUSE_STATE) => ChainAction::Idle,
        _ => ChainAction::Forward,
    }
}

/// The pausing expert as a chunk sampler: one-action chunks decided from the
/// last `window` observed states, padded with state 0 at episode start.
#[derive(Debug, Clone, Copy)]
pub struct ExpertPolicy {
    pub window: usize,
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        ExpertPolicy { window: DEFAULT_WINDOW }
    }
}

impl ExpertPolicy {
    pub fn act(&self, history: &ObservationHistory) -> ChainAction {
        let seen: Vec<usize> = history.states().map(|s| s[0].round() as usize).collect();
        let mut window = vec![0; self.window.saturating_sub(seen.len())];
        window.extend(seen.iter().skip(seen.len().saturating_sub(self.window)));
        expert_action(&window)
    }
}

impl ChunkSampler for ExpertPolicy {
    fn sample(&self, history: &ObservationHistory, n: usize, _rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        let a = self.act(history).to_action();
        (0..n).map(|_| ActionChunk::new(history.tick(), vec![a.clone()])).collect()
    }
}

/// One expert episode as (state, action) pairs, ending when the goal is reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub steps: Vec<(usize, ChainAction)>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn idle_count(&self) -> usize {
        self.steps.iter().filter(|(_, a)| *a == ChainAction::Idle).count()
    }

    /// Ticks on which the agent did not advance.
    pub fn stall_count(&self) -> usize {
        let mut stalls = 0;
        for (i, (s, _)) in self.steps.iter().enumerate() {
            let next = self.steps.get(i + 1).map(|(n, _)| *n).unwrap_or(GOAL);
            if next == *s {
                stalls += 1;
            }
        }
        stalls
    }

    pub fn count(&self, counting: IdleCounting) -> usize {
        match counting {
            IdleCounting::Chosen => self.idle_count(),
            IdleCounting::Stalled => self.stall_count(),
        }
    }

    /// Checks that the episode starts at 0, ends at the goal and only moves by
    /// chain dynamics.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(BidError::InvalidValue(format!("demonstration {msg}")));
        match self.steps.first() {
            None => return bad("is empty"),
            Some((s, _)) if *s != 0 => return bad("does not start at state 0"),
            _ => {}
        }
        for (i, (s, a)) in self.steps.iter().enumerate() {
            let next = self.steps.get(i + 1).map(|(n, _)| *n).unwrap_or(GOAL);
            let ok = match a {
                ChainAction::Idle => next == *s,
                ChainAction::Forward => next == *s || next == s + 1,
            };
            if !ok || *s >= GOAL {
                return bad(&format!("has an impossible transition at step {i}"));
            }
        }
        Ok(())
    }

    /// Parses one line of the demonstration cache format.
    pub fn parse_line(line: &str, lineno: usize) -> Result<Self> {
        let err = |msg: String| BidError::Parse { line: lineno, msg };
        let mut steps = Vec::new();
        for tok in line.split_whitespace() {
            let (s, a) = tok.split_once(':').ok_or_else(|| err(format!("expected state:action, got '{tok}'")))?;
            let s: usize = s.parse().map_err(|_| err(format!("bad state '{s}'")))?;
            let a = match a {
                "F" => ChainAction::Forward,
                "I" => ChainAction::Idle,
                other => return Err(err(format!("bad action '{other}'"))),
            };
            steps.push((s, a));
        }
        let demo = Demonstration { steps };
        demo.validate().map_err(|e| err(e.to_string()))?;
        Ok(demo)
    }
}

/// Line format: whitespace-separated `state:action` tokens, action `F` or `I`.
impl fmt::Display for Demonstration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, a)) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}:{}", a.symbol())?;
        }
        Ok(())
    }
}

pub fn write_demos(demos: &[Demonstration]) -> String {
    let mut out = String::new();
    for d in demos {
        out.push_str(&d.to_string());
        out.push('\n');
    }
    out
}

pub fn read_demos(text: &str) -> Result<Vec<Demonstration>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| Demonstration::parse_line(l, i + 1))
        .collect()
}

/// Runs one expert episode to the goal.
pub fn expert_episode(delta: f64, window: usize, rng: &mut dyn RngCore) -> Result<Demonstration> {
    let mut env = ChainEnv::with_window(delta, window)?;
    let mut steps = Vec::new();
    while !env.is_terminal() {
        let window: Vec<usize> = env.window().iter().copied().collect();
        let a = expert_action(&window);
        steps.push((env.current(), a));
        env.step(a, rng)?;
    }
    Ok(Demonstration { steps })
}

pub fn generate_demos(delta: f64, episodes: usize, rng: &mut dyn RngCore) -> Result<Vec<Demonstration>> {
    generate_demos_with_window(delta, DEFAULT_WINDOW, episodes, rng)
}

pub fn generate_demos_with_window(
    delta: f64,
    window: usize,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Demonstration>> {
    if episodes == 0 {
        return Err(BidError::Config("at least one demonstration episode is required".into()));
    }
    (0..episodes).map(|_| expert_episode(delta, window, rng)).collect()
}

/// Empirical distribution over the next `h` actions for each state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularChunkPolicy {
    horizon: usize,
    rows: BTreeMap<usize, Row>,
}

#[derive(Debug, Clone, PartialEq)]
struct Row {
    sequences: Vec<(Vec<ChainAction>, u64)>,
    total: u64,
}

impl TabularChunkPolicy {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Observed states.
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    /// Raw window counts for a state, sequences in lexicographic order.
    pub fn counts(&self, state: usize) -> Option<&[(Vec<ChainAction>, u64)]> {
        self.rows.get(&state).map(|r| r.sequences.as_slice())
    }

    /// Probability of each observed sequence at `state`.
    pub fn distribution(&self, state: usize) -> Option<Vec<(&[ChainAction], f64)>> {
        self.rows.get(&state).map(|r| {
            r.sequences.iter().map(|(s, c)| (s.as_slice(), *c as f64 / r.total as f64)).collect()
        })
    }

    pub fn probability(&self, state: usize, seq: &[ChainAction]) -> f64 {
        self.rows
            .get(&state)
            .and_then(|r| r.sequences.iter().find(|(s, _)| s == seq).map(|(_, c)| *c as f64 / r.total as f64))
            .unwrap_or(0.0)
    }

    pub fn sample_sequence(&self, state: usize, rng: &mut dyn RngCore) -> Result<&[ChainAction]> {
        let row = self
            .rows
            .get(&state)
            .ok_or_else(|| BidError::Sampler(format!("state {state} never observed in demonstrations")))?;
        let mut pick = rng.random_range(0..row.total);
        for (seq, c) in &row.sequences {
            if pick < *c {
                return Ok(seq);
            }
            pick -= c;
        }
        unreachable!("counts sum to total")
    }
}

impl ChunkSampler for TabularChunkPolicy {
    fn sample(&self, history: &ObservationHistory, n: usize, rng: &mut dyn RngCore) -> Result<Vec<ActionChunk>> {
        let state = history.current()[0].round() as usize;
        (0..n)
            .map(|_| {
                let seq = self.sample_sequence(state, rng)?;
                ActionChunk::new(history.tick(), seq.iter().map(|a| a.to_action()).collect())
            })
            .collect()
    }
}

/// Counts every length-`h` action window that starts at each visited state.
/// Windows running past the end of an episode are padded with forward moves.
pub fn train_tabular(demos: &[Demonstration], h: usize) -> Result<TabularChunkPolicy> {
    if demos.is_empty() {
        return Err(BidError::Empty("no demonstrations".into()));
    }
    if h == 0 {
        return Err(BidError::Config("action horizon must be >= 1".into()));
    }
    let mut counts: BTreeMap<usize, BTreeMap<Vec<ChainAction>, u64>> = BTreeMap::new();
    for demo in demos {
        let actions: Vec<ChainAction> = demo.steps.iter().map(|(_, a)| *a).collect();
        for (i, (s, _)) in demo.steps.iter().enumerate() {
            let window: Vec<ChainAction> = (i..i + h)
                .map(|j| actions.get(j).copied().unwrap_or(ChainAction::Forward))
                .collect();
            *counts.entry(*s).or_default().entry(window).or_default() += 1;
        }
    }
    let rows = counts
        .into_iter()
        .map(|(s, seqs)| {
            let total = seqs.values().sum();
            (s, Row { sequences: seqs.into_iter().collect(), total })
        })
        .collect();
    Ok(TabularChunkPolicy { horizon: h, rows })
}

/// Outcome bin of an episode: its idle count, or overflow when the episode
/// hit the tick cap or could not be continued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdleBin {
    Count(usize),
    Overflow,
}

/// Probability of each idle count per episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IdleHistogram {
    probs: BTreeMap<IdleBin, f64>,
}

impl IdleHistogram {
    pub fn from_counts(counts: &BTreeMap<IdleBin, u64>) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(BidError::Empty("histogram has no episodes".into()));
        }
        Ok(IdleHistogram {
            probs: counts.iter().map(|(k, c)| (*k, *c as f64 / total as f64)).collect(),
        })
    }

    /// Builds a histogram from explicit probabilities; they must sum to 1.
    pub fn from_probs(probs: BTreeMap<IdleBin, f64>) -> Result<Self> {
        let h = IdleHistogram { probs };
        h.check_normalized()?;
        Ok(h)
    }

    pub fn point_mass(count: usize) -> Self {
        IdleHistogram { probs: BTreeMap::from([(IdleBin::Count(count), 1.0)]) }
    }

    pub fn get(&self, bin: IdleBin) -> f64 {
        self.probs.get(&bin).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (IdleBin, f64)> + '_ {
        self.probs.iter().map(|(k, v)| (*k, *v))
    }

    pub fn overflow(&self) -> f64 {
        self.get(IdleBin::Overflow)
    }

    pub fn mean_count(&self) -> f64 {
        let mass: f64 = self.probs.iter().filter(|(k, _)| **k != IdleBin::Overflow).map(|(_, p)| p).sum();
        self.probs
            .iter()
            .filter_map(|(k, p)| match k {
                IdleBin::Count(c) => Some(*c as f64 * p),
                IdleBin::Overflow => None,
            })
            .sum::<f64>()
            / mass
    }

    fn check_normalized(&self) -> Result<()> {
        let sum: f64 = self.probs.values().sum();
        if self.probs.values().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(BidError::InvalidValue(format!("histogram is not normalized (sum {sum})")));
        }
        Ok(())
    }
}

/// Half the L1 distance between two normalized histograms.
pub fn total_variation(p: &IdleHistogram, q: &IdleHistogram) -> Result<f64> {
    p.check_normalized()?;
    q.check_normalized()?;
    // walk the union of supports in bin order
    let support: BTreeSet<IdleBin> = p.probs.keys().chain(q.probs.keys()).copied().collect();
    let sum: f64 = support.into_iter().map(|k| (p.get(k) - q.get(k)).abs()).sum();
    Ok((0.5 * sum).min(1.0))
}

/// Settings shared by learner and expert evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainEval {
    pub delta: f64,
    pub max_ticks: usize,
    pub counting: IdleCounting,
    pub window: usize,
}

impl ChainEval {
    pub fn new(delta: f64) -> Self {
        ChainEval { delta, max_ticks: DEFAULT_MAX_TICKS, counting: IdleCounting::default(), window: DEFAULT_WINDOW }
    }
}

/// Idle count of one learner episode, executed open loop with horizon `h`
/// and the current state as the only context.
pub fn learner_episode(policy: &TabularChunkPolicy, eval: &ChainEval, rng: &mut dyn RngCore) -> Result<IdleBin> {
    let mut env = ChainEnv::with_window(eval.delta, eval.window)?;
    let rec = open_loop_rollout(&mut env, policy, policy.horizon(), eval.max_ticks, 1, rng)?;
    if !rec.terminated {
        return Ok(IdleBin::Overflow);
    }
    let count = match eval.counting {
        IdleCounting::Chosen => rec.executed_actions.iter().filter(|a| a[0] <= 0.5).count(),
        IdleCounting::Stalled => rec.states.windows(2).filter(|w| w[0] == w[1]).count(),
    };
    Ok(IdleBin::Count(count))
}

pub fn rollout_learner(
    policy: &TabularChunkPolicy,
    eval: &ChainEval,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<IdleHistogram> {
    if episodes == 0 {
        return Err(BidError::Empty("no evaluation episodes".into()));
    }
    let mut counts = BTreeMap::new();
    for _ in 0..episodes {
        *counts.entry(learner_episode(policy, eval, rng)?).or_insert(0u64) += 1;
    }
    IdleHistogram::from_counts(&counts)
}

/// Monte Carlo idle histogram of the expert itself.
pub fn expert_idle_oracle(eval: &ChainEval, episodes: usize, rng: &mut dyn RngCore) -> Result<IdleHistogram> {
    if episodes == 0 {
        return Err(BidError::Empty("no evaluation episodes".into()));
    }
    check_delta(eval.delta)?;
    let mut counts = BTreeMap::new();
    for _ in 0..episodes {
        let mut env = ChainEnv::with_window(eval.delta, eval.window)?;
        let mut idles = 0;
        let mut ticks = 0;
        while !env.is_terminal() && ticks < eval.max_ticks {
            let window: Vec<usize> = env.window().iter().copied().collect();
            let a = expert_action(&window);
            let before = env.current();
            let after = env.step(a, rng)?;
            idles += match eval.counting {
                IdleCounting::Chosen => (a == ChainAction::Idle) as usize,
                IdleCounting::Stalled => (after == before) as usize,
            };
            ticks += 1;
        }
        let bin = if env.is_terminal() { IdleBin::Count(idles) } else { IdleBin::Overflow };
        *counts.entry(bin).or_insert(0u64) += 1;
    }
    IdleHistogram::from_counts(&counts)
}

/// Exact expert idle distribution by forward propagation of the
/// (state, window, idle count) Markov chain for `max_ticks` ticks.
pub fn expert_idle_exact(eval: &ChainEval) -> Result<IdleHistogram> {
    check_delta(eval.delta)?;
    type Key = (usize, Vec<usize>, usize);
    let mut frontier: BTreeMap<Key, f64> = BTreeMap::from([((0, vec![0; eval.window], 0), 1.0)]);
    let mut done: BTreeMap<IdleBin, f64> = BTreeMap::new();
    for _ in 0..eval.max_ticks {
        let mut next: BTreeMap<Key, f64> = BTreeMap::new();
        for ((s, window, idles), p) in frontier {
            let a = expert_action(&window);
            let outcomes: &[(bool, f64)] = match a {
                ChainAction::Idle => &[(false, 1.0)],
                ChainAction::Forward => &[(true, 1.0 - eval.delta), (false, eval.delta)],
            };
            for &(moved, q) in outcomes {
                if q == 0.0 {
                    continue;
                }
                let s2 = s + moved as usize;
                let counted = match eval.counting {
                    IdleCounting::Chosen => a == ChainAction::Idle,
                    IdleCounting::Stalled => !moved,
                };
                let idles2 = idles + counted as usize;
                if s2 == GOAL {
                    *done.entry(IdleBin::Count(idles2)).or_default() += p * q;
                } else {
                    let mut w2 = window[1..].to_vec();
                    w2.push(s2);
                    *next.entry((s2, w2, idles2)).or_default() += p * q;
                }
            }
        }
        frontier = next;
    }
    let rest: f64 = frontier.values().sum();
    if rest > 0.0 {
        *done.entry(IdleBin::Overflow).or_default() += rest;
    }
    renormalize(done)
}

/// Exact idle distribution of an open-loop tabular learner, propagating
/// (state, remaining chunk, idle count) for `max_ticks` ticks. Unobserved
/// states send their mass to overflow.
pub fn learner_idle_exact(policy: &TabularChunkPolicy, eval: &ChainEval) -> Result<IdleHistogram> {
    check_delta(eval.delta)?;
    // pending = actions left in the current chunk; empty means replan
    type Key = (usize, Vec<ChainAction>, usize);
    let mut frontier: BTreeMap<Key, f64> = BTreeMap::from([((0, Vec::new(), 0), 1.0)]);
    let mut done: BTreeMap<IdleBin, f64> = BTreeMap::new();
    for _ in 0..eval.max_ticks {
        let mut next: BTreeMap<Key, f64> = BTreeMap::new();
        for ((s, pending, idles), p) in frontier {
            let plans: Vec<(Vec<ChainAction>, f64)> = if pending.is_empty() {
                match policy.distribution(s) {
                    Some(d) => d.into_iter().map(|(seq, q)| (seq.to_vec(), q)).collect(),
                    None => {
                        *done.entry(IdleBin::Overflow).or_default() += p;
                        continue;
                    }
                }
            } else {
                vec![(pending, 1.0)]
            };
            for (plan, q) in plans {
                let a = plan[0];
                let rest = plan[1..].to_vec();
                let outcomes: &[(bool, f64)] = match a {
                    ChainAction::Idle => &[(false, 1.0)],
                    ChainAction::Forward => &[(true, 1.0 - eval.delta), (false, eval.delta)],
                };
                for &(moved, r) in outcomes {
                    if r == 0.0 {
                        continue;
                    }
                    let s2 = s + moved as usize;
                    let counted = match eval.counting {
                        IdleCounting::Chosen => a == ChainAction::Idle,
                        IdleCounting::Stalled => !moved,
                    };
                    let idles2 = idles + counted as usize;
                    let mass = p * q * r;
                    if s2 == GOAL {
                        *done.entry(IdleBin::Count(idles2)).or_default() += mass;
                    } else {
                        *next.entry((s2, rest.clone(), idles2)).or_default() += mass;
                    }
                }
            }
        }
        frontier = next;
    }
    let rest: f64 = frontier.values().sum();
    if rest > 0.0 {
        *done.entry(IdleBin::Overflow).or_default() += rest;
    }
    renormalize(done)
}

fn renormalize(mut probs: BTreeMap<IdleBin, f64>) -> Result<IdleHistogram> {
    let sum: f64 = probs.values().sum();
    for v in probs.values_mut() {
        *v /= sum;
    }
    IdleHistogram::from_probs(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::decoder::{closed_loop_rollout, VanillaDecoder};

    use ChainAction::{Forward as F, Idle as I};

    #[test]
    fn env_step_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = ChainEnv::new(0.0).unwrap();
        for _ in 0..3 {
            env.step(F, &mut rng).unwrap();
        }
        assert_eq!(env.step(F, &mut rng).unwrap(), 4);

        let mut env = ChainEnv::new(0.9).unwrap();
        env.current = 5;
        for _ in 0..20 {
            assert_eq!(env.step(I, &mut rng).unwrap(), 5);
        }
        env.current = GOAL;
        assert!(env.step(F, &mut rng).is_err());
        assert!(ChainEnv::new(1.0).is_err());
        assert!(ChainEnv::new(-0.1).is_err());
    }

    #[test]
    fn forward_success_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut ok = 0;
        for _ in 0..n {
            let mut env = ChainEnv::new(0.8).unwrap();
            ok += env.step(F, &mut rng).unwrap();
        }
        assert!((ok as f64 / n as f64 - 0.2).abs() <= 0.005);
    }

    #[test]
    fn expert_rule() {
        assert_eq!(expert_action(&[1, 2, 3, 4, 5]), I);
        assert_eq!(expert_action(&[5, 5, 5, 5, 5]), F);
        assert_eq!(expert_action(&[3, 4, 5, 6, 7]), F);
        assert_eq!(expert_action(&[4, 5, 5, 5, 5]), I);
    }

    #[test]
    fn deterministic_demos_have_four_idles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let demos = generate_demos(0.0, 100, &mut rng).unwrap();
        for d in &demos {
            assert_eq!(d.len(), 14);
            assert_eq!(d.idle_count(), 4);
            assert_eq!(d.steps.iter().filter(|(_, a)| *a == F).count(), 10);
            assert_eq!(d, &demos[0]);
            d.validate().unwrap();
        }
        assert!(generate_demos(0.0, 0, &mut rng).is_err());
    }

    #[test]
    fn noisy_demos_are_longer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let demos = generate_demos(0.4, 2000, &mut rng).unwrap();
        let mean = demos.iter().map(|d| d.len() as f64).sum::<f64>() / demos.len() as f64;
        assert!(mean > 14.0);
        for d in &demos {
            d.validate().unwrap();
        }
    }

    #[test]
    fn demo_line_format() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let demos = generate_demos(0.5, 20, &mut rng).unwrap();
        let text = write_demos(&demos);
        assert_eq!(read_demos(&text).unwrap(), demos);
        assert!(text.starts_with("0:F 1:F"));
        assert!(matches!(read_demos("0:F 1:X"), Err(BidError::Parse { line: 1, .. })));
        assert!(read_demos("0:F 2:F").is_err());
        assert!(read_demos("1:F").is_err());
    }

    #[test]
    fn tabular_h1_pause_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let demos = generate_demos(0.0, 10, &mut rng).unwrap();
        let pol = train_tabular(&demos, 1).unwrap();
        assert!((pol.probability(5, &[I]) - 0.8).abs() < 1e-12);
        assert!((pol.probability(5, &[F]) - 0.2).abs() < 1e-12);
        for s in (0..GOAL).filter(|&s| s != 5) {
            assert_eq!(pol.probability(s, &[F]), 1.0);
        }
        for s in pol.states() {
            let total: f64 = pol.distribution(s).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tabular_h10_is_point_mass_at_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let demos = generate_demos(0.0, 50, &mut rng).unwrap();
        let pol = train_tabular(&demos, 10).unwrap();
        let d = pol.distribution(0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, &[F, F, F, F, F, I, I, I, I, F]);
        assert_eq!(d[0].1, 1.0);
        // windows near the goal are padded with forward moves
        assert_eq!(pol.distribution(9).unwrap()[0].0, &[F; 10]);
    }

    #[test]
    fn tabular_rejects_bad_input() {
        assert!(train_tabular(&[], 1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let demos = generate_demos(0.0, 1, &mut rng).unwrap();
        assert!(train_tabular(&demos, 0).is_err());
    }

    #[test]
    fn recount_from_serialized_demos_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let demos = generate_demos(0.6, 300, &mut rng).unwrap();
        for h in [1, 3, 7] {
            let a = train_tabular(&demos, h).unwrap();
            let b = train_tabular(&read_demos(&write_demos(&demos)).unwrap(), h).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn expert_sampler_reaches_goal_closed_loop() {
        let mut env = ChainEnv::new(0.0).unwrap();
        let mut dec = VanillaDecoder::new(ExpertPolicy::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rec = closed_loop_rollout(&mut env, &mut dec, 100, DEFAULT_WINDOW, &mut rng).unwrap();
        assert!(rec.terminated);
        assert_eq!(rec.final_state(), Some(&[10.0][..]));
        assert_eq!(rec.ticks(), 14);
    }

    #[test]
    fn learner_h10_matches_expert_when_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let demos = generate_demos(0.0, 20, &mut rng).unwrap();
        let pol = train_tabular(&demos, 10).unwrap();
        let eval = ChainEval::new(0.0);
        let h = rollout_learner(&pol, &eval, 500, &mut rng).unwrap();
        assert_eq!(h, IdleHistogram::point_mass(4));
        assert!(rollout_learner(&pol, &eval, 0, &mut rng).is_err());
    }

    #[test]
    fn learner_h1_idle_is_geometric() {
        // closed-form oracle: at s5 each tick idles w.p. 0.8, so the idle
        // count is geometric with P(k) = 0.2 * 0.8^k
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let demos = generate_demos(0.0, 20, &mut rng).unwrap();
        let pol = train_tabular(&demos, 1).unwrap();
        let eval = ChainEval::new(0.0);
        let exact = learner_idle_exact(&pol, &eval).unwrap();
        for k in 0..30 {
            let expected = 0.2 * 0.8f64.powi(k as i32);
            assert!((exact.get(IdleBin::Count(k)) - expected).abs() < 1e-12, "k={k}");
        }
        let mc = rollout_learner(&pol, &eval, 20_000, &mut rng).unwrap();
        assert!(total_variation(&mc, &exact).unwrap() < 0.03);
        assert!(mc.get(IdleBin::Count(0)) > 0.15);
    }

    #[test]
    fn expert_exact_is_point_mass_when_deterministic() {
        let exact = expert_idle_exact(&ChainEval::new(0.0)).unwrap();
        assert_eq!(exact, IdleHistogram::point_mass(4));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mc = expert_idle_oracle(&ChainEval::new(0.0), 100, &mut rng).unwrap();
        assert_eq!(mc, IdleHistogram::point_mass(4));
    }

    #[test]
    fn expert_oracle_normalized_for_any_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for delta in [0.1, 0.5, 0.9] {
            for counting in [IdleCounting::Chosen, IdleCounting::Stalled] {
                let eval = ChainEval { counting, ..ChainEval::new(delta) };
                let h = expert_idle_oracle(&eval, 500, &mut rng).unwrap();
                let sum: f64 = h.iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tvd_examples() {
        let p = IdleHistogram::point_mass(3);
        assert_eq!(total_variation(&p, &p).unwrap(), 0.0);
        assert_eq!(total_variation(&p, &IdleHistogram::point_mass(4)).unwrap(), 1.0);
        let a = IdleHistogram::from_probs(BTreeMap::from([(IdleBin::Count(0), 0.8), (IdleBin::Count(1), 0.2)])).unwrap();
        let b = IdleHistogram::from_probs(BTreeMap::from([(IdleBin::Count(0), 0.5), (IdleBin::Count(1), 0.5)])).unwrap();
        assert!((total_variation(&a, &b).unwrap() - 0.3).abs() < 1e-12);
        let bad = IdleHistogram { probs: BTreeMap::from([(IdleBin::Count(0), 0.5)]) };
        assert!(total_variation(&bad, &a).is_err());
    }
}
