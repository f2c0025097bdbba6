use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DecoderKind, ExperimentConfig, ExperimentKind, Geometry};
use super::output::ResultRow;
use super::{condition_key, episode_seed, mix};
use crate::chain::{
    expert_idle_exact, generate_demos_with_window, learner_episode, read_demos, total_variation, train_tabular,
    write_demos, ChainEval, Demonstration, IdleBin, IdleHistogram,
};
use crate::chunk::ChunkSampler;
use crate::criteria::{BackwardConfig, ContrastMode, ForwardConfig};
use crate::decoder::{
    closed_loop_rollout, open_loop_rollout, BidDecoder, Decoder, EmaDecoder, Environment, RolloutRecord,
    VanillaDecoder,
};
use crate::error::{BidError, Result};
use crate::synthetic::{
    mode_switch_rate, weaken, BimodalChunkSampler, Disk, DriftEnv, ModeTrajectory, PlanarEnv, PursuitSampler,
    WeakenedSampler,
};

/// Stream index reserved for demonstration generation.
const DEMO_STREAM: u64 = u64::MAX;

/// What a single condition runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Diagnostic { delta: f64, horizon: usize },
    Decoding { decoder: DecoderKind, samples: usize, contrast: ContrastMode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub labels: BTreeMap<String, String>,
    pub setting: Setting,
}

fn labels(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// The condition grid of a config, in execution order.
pub fn conditions(cfg: &ExperimentConfig) -> Vec<Condition> {
    let d = &cfg.decoder;
    let decoding = |decoder, samples, contrast, l| Condition {
        labels: l,
        setting: Setting::Decoding { decoder, samples, contrast },
    };
    match cfg.kind {
        ExperimentKind::Diagnostic => {
            let mut out = Vec::new();
            for &delta in &cfg.diagnostic.deltas {
                for &horizon in &cfg.diagnostic.horizons {
                    out.push(Condition {
                        labels: labels(&[("delta", delta.to_string()), ("h", horizon.to_string())]),
                        setting: Setting::Diagnostic { delta, horizon },
                    });
                }
            }
            out
        }
        ExperimentKind::Bimodal | ExperimentKind::Drift => d
            .decoders
            .iter()
            .map(|&k| decoding(k, d.samples, ContrastMode::Full, labels(&[("decoder", k.label().to_string())])))
            .collect(),
        ExperimentKind::Scaling => d
            .sample_counts
            .iter()
            .map(|&n| decoding(DecoderKind::Bid, n, ContrastMode::Full, labels(&[("samples", n.to_string())])))
            .collect(),
        ExperimentKind::Ablation => d
            .contrast
            .iter()
            .map(|&c| decoding(DecoderKind::Bid, d.samples, c, labels(&[("contrast", c.label().to_string())])))
            .collect(),
    }
}

/// Seed used to generate the demonstrations for one noise level.
pub fn demo_seed(master: u64, delta: f64) -> u64 {
    mix(mix(master, condition_key(&labels(&[("delta", delta.to_string())]))), DEMO_STREAM)
}

pub fn cached_demos_path(dir: &Path, cfg: &ExperimentConfig, master: u64, delta: f64) -> PathBuf {
    let g = &cfg.diagnostic;
    dir.join(format!("demos_seed{master}_delta{delta}_n{}_w{}.txt", g.demos, g.expert_window))
}

fn make_demos(cfg: &ExperimentConfig, master: u64, delta: f64) -> Result<Vec<Demonstration>> {
    let mut rng = ChaCha8Rng::seed_from_u64(demo_seed(master, delta));
    generate_demos_with_window(delta, cfg.diagnostic.expert_window, cfg.diagnostic.demos, &mut rng)
}

fn demos_for(cfg: &ExperimentConfig, master: u64, delta: f64) -> Result<Vec<Demonstration>> {
    if let Some(dir) = &cfg.diagnostic.demo_cache {
        let path = cached_demos_path(dir, cfg, master, delta);
        if path.exists() {
            let demos = read_demos(&std::fs::read_to_string(&path)?)?;
            if demos.len() != cfg.diagnostic.demos {
                return Err(BidError::Config(format!(
                    "{} holds {} demonstrations, expected {}",
                    path.display(),
                    demos.len(),
                    cfg.diagnostic.demos
                )));
            }
            return Ok(demos);
        }
    }
    make_demos(cfg, master, delta)
}

/// Writes the demonstrations a diagnostic run would generate into `dir`.
/// Returns the files written.
pub fn ensure_demo_cache(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    if cfg.kind != ExperimentKind::Diagnostic {
        return Err(BidError::Config("demonstrations exist only for the diagnostic experiment".into()));
    }
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in 0..cfg.replicates as u64 {
        let master = cfg.seed.wrapping_add(r);
        for &delta in &cfg.diagnostic.deltas {
            let path = cached_demos_path(dir, cfg, master, delta);
            std::fs::write(&path, write_demos(&make_demos(cfg, master, delta)?))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs every condition and returns all rows.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    run_experiment_with(cfg, &mut |r| {
        rows.push(r.clone());
        Ok(())
    })?;
    Ok(rows)
}

/// Runs every condition, handing each row to `sink` as soon as its condition
/// finishes. Episodes run on the current rayon pool; output order does not
/// depend on the number of threads.
pub fn run_experiment_with(cfg: &ExperimentConfig, sink: &mut dyn FnMut(&ResultRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let grid = conditions(cfg);
    let task = Task::build(cfg)?;
    for r in 0..cfg.replicates as u64 {
        let master = cfg.seed.wrapping_add(r);
        let mut demos: BTreeMap<u64, (Vec<Demonstration>, IdleHistogram)> = BTreeMap::new();
        for cond in &grid {
            let started = Instant::now();
            let key = condition_key(&cond.labels);
            let metrics = match cond.setting {
                Setting::Diagnostic { delta, horizon } => {
                    let (d, expert) = match demos.entry(delta.to_bits()) {
                        Entry::Occupied(e) => e.into_mut(),
                        Entry::Vacant(e) => {
                            let eval = chain_eval(cfg, delta);
                            e.insert((demos_for(cfg, master, delta)?, expert_idle_exact(&eval)?))
                        }
                    };
                    diagnostic_condition(cfg, master, key, delta, horizon, d, expert)?
                }
                Setting::Decoding { decoder, samples, contrast } => {
                    decoding_condition(cfg, &task, master, key, decoder, samples, contrast)?
                }
            };
            let wall = cfg.wall_time.then(|| started.elapsed().as_secs_f64());
            for (metric, value, episodes) in metrics {
                sink(&ResultRow {
                    experiment: cfg.experiment_id(),
                    seed: master,
                    conditions: cond.labels.clone(),
                    metric: metric.to_string(),
                    value,
                    episodes,
                    wall_time: wall,
                })?;
            }
        }
    }
    Ok(())
}

type Metrics = Vec<(&'static str, f64, usize)>;

fn chain_eval(cfg: &ExperimentConfig, delta: f64) -> ChainEval {
    let g = &cfg.diagnostic;
    ChainEval { delta, max_ticks: g.max_ticks, counting: g.idle_counting, window: g.expert_window }
}

fn diagnostic_condition(
    cfg: &ExperimentConfig,
    master: u64,
    key: u64,
    delta: f64,
    horizon: usize,
    demos: &[Demonstration],
    expert: &IdleHistogram,
) -> Result<Metrics> {
    let eval = chain_eval(cfg, delta);
    let policy = train_tabular(demos, horizon)?;
    let bins = (0..cfg.episodes as u64)
        .into_par_iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(master, key, e));
            learner_episode(&policy, &eval, &mut rng)
        })
        .collect::<Result<Vec<IdleBin>>>()?;
    let mut counts = BTreeMap::new();
    for b in bins {
        *counts.entry(b).or_insert(0u64) += 1;
    }
    let learner = IdleHistogram::from_counts(&counts)?;
    let n = cfg.episodes;
    Ok(vec![
        ("tvd", total_variation(&learner, expert)?, n),
        ("overflow_rate", learner.overflow(), n),
        ("mean_idles", learner.mean_count(), n),
    ])
}

/// Samplers and environment template for a decoding experiment.
enum Task {
    None,
    Planar { strong: BimodalChunkSampler, weak: WeakenedSampler, env: PlanarEnv, ticks: usize },
    Drift { strong: PursuitSampler, weak: PursuitSampler, env: DriftEnv, ticks: usize },
}

impl Task {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let l = cfg.decoder.chunk_len;
        match cfg.kind {
            ExperimentKind::Diagnostic => Ok(Task::None),
            ExperimentKind::Bimodal | ExperimentKind::Ablation => {
                let b = &cfg.bimodal;
                let mut env = PlanarEnv::new([0.0, 0.0], b.max_step)?;
                let mut strong = match b.geometry {
                    Geometry::Lanes => BimodalChunkSampler::lanes(b.speed, b.separation, b.sigma, l)?,
                    Geometry::Arcs => {
                        let goal = [b.goal_distance, 0.0];
                        env = env
                            .with_goal(goal, b.goal_tolerance)?
                            .with_obstacle(Disk { center: [b.goal_distance / 2.0, 0.0], radius: b.obstacle_radius })?;
                        BimodalChunkSampler::arcs([0.0, 0.0], goal, b.arc_height, b.arc_duration, b.sigma, l)?
                    }
                    Geometry::Table => {
                        let load = |p: &Option<PathBuf>| ModeTrajectory::load(p.as_deref().expect("validated"));
                        BimodalChunkSampler::new(load(&b.mode_a_table)?, load(&b.mode_b_table)?, b.mode_prob, b.sigma, l)?
                    }
                };
                if strong.dim() != 2 {
                    return Err(BidError::Config(format!("mode tables must be 2-D, got {}-D", strong.dim())));
                }
                strong.mode_prob = b.mode_prob;
                let strong = strong.with_collapse_prob(b.collapse_prob)?;
                let weak = weaken(&strong, b.weak_blur, b.weak_extra_sigma)?;
                Ok(Task::Planar { strong, weak, env, ticks: b.ticks })
            }
            ExperimentKind::Drift | ExperimentKind::Scaling => {
                let r = &cfg.drift;
                let strong = PursuitSampler::new(r.max_step, r.curve_sigma, r.sigma, l)?;
                let weak = strong.weakened(r.weak_curve_scale, r.weak_extra_sigma)?;
                let env = DriftEnv::new(r.drift_speed, r.tolerance, r.max_step, r.start_distance)?;
                Ok(Task::Drift { strong, weak, env, ticks: r.ticks })
            }
        }
    }
}

struct Outcome {
    switch_rate: Option<f64>,
    success: Option<bool>,
    final_error: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn rollout<S, W>(
    cfg: &ExperimentConfig,
    env: &mut dyn Environment,
    strong: &S,
    weak: &W,
    decoder: DecoderKind,
    samples: usize,
    contrast: ContrastMode,
    ticks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutRecord>
where
    S: ChunkSampler + Clone + 'static,
    W: ChunkSampler + Clone + 'static,
{
    let d = &cfg.decoder;
    let bid = || -> Result<BidDecoder<S, W>> {
        let fwd = ForwardConfig::new(d.mode_size.min(samples), samples)?.with_contrast(contrast);
        BidDecoder::new(strong.clone(), weak.clone(), BackwardConfig::new(d.rho)?, fwd)
    };
    let mut dec: Box<dyn Decoder> = match decoder {
        DecoderKind::OpenLoop => return open_loop_rollout(env, strong, d.chunk_len, ticks, 1, rng),
        DecoderKind::Vanilla => Box::new(VanillaDecoder::new(strong.clone())),
        DecoderKind::Ema => Box::new(EmaDecoder::new(strong.clone(), d.lambda)?),
        DecoderKind::Bid => Box::new(bid()?),
        DecoderKind::BidEma => Box::new(bid()?.with_ema(d.lambda)?),
    };
    closed_loop_rollout(env, dec.as_mut(), ticks, 1, rng)
}

fn decoding_condition(
    cfg: &ExperimentConfig,
    task: &Task,
    master: u64,
    key: u64,
    decoder: DecoderKind,
    samples: usize,
    contrast: ContrastMode,
) -> Result<Metrics> {
    let outcomes = (0..cfg.episodes as u64)
        .into_par_iter()
        .map(|e| -> Result<Outcome> {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(master, key, e));
            let (record, success, final_error) = match task {
                Task::Planar { strong, weak, env, ticks } => {
                    let mut env = env.clone();
                    let rec = rollout(cfg, &mut env, strong, weak, decoder, samples, contrast, *ticks, &mut rng)?;
                    let goal = env.goal.is_some();
                    (rec, goal.then(|| env.success()), env.goal_distance())
                }
                Task::Drift { strong, weak, env, ticks } => {
                    let mut env = env.clone();
                    let rec = rollout(cfg, &mut env, strong, weak, decoder, samples, contrast, *ticks, &mut rng)?;
                    (rec, Some(env.success()), Some(env.distance()))
                }
                Task::None => unreachable!("decoding condition without a task"),
            };
            if let Some(msg) = record.aborted {
                return Err(BidError::Environment(format!("episode {e} aborted: {msg}")));
            }
            let switch_rate = match task {
                Task::Planar { .. } => mode_switch_rate(&record).ok(),
                _ => None,
            };
            Ok(Outcome { switch_rate, success, final_error })
        })
        .collect::<Result<Vec<Outcome>>>()?;

    let mut metrics = Metrics::new();
    let mut mean_of = |name: &'static str, values: Vec<f64>| {
        if !values.is_empty() {
            let n = values.len();
            metrics.push((name, values.iter().sum::<f64>() / n as f64, n));
        }
    };
    mean_of("switch_rate", outcomes.iter().filter_map(|o| o.switch_rate).collect());
    mean_of(
        "success_rate",
        outcomes.iter().filter_map(|o| o.success).map(|s| if s { 1.0 } else { 0.0 }).collect(),
    );
    mean_of("final_error", outcomes.iter().filter_map(|o| o.final_error).collect());
    Ok(metrics)
}
