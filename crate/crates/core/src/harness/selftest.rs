use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, ExperimentKind};
use super::run::run_experiment;
use crate::chain::{
    expert_idle_exact, expert_idle_oracle, generate_demos, total_variation, train_tabular, ChainAction, ChainEval,
    IdleBin, IdleHistogram,
};
use crate::chunk::ActionChunk;
use crate::criteria::{backward_coherence, forward_contrast, BackwardConfig, ForwardConfig};
use crate::decoder::ema_blend;
use crate::error::Result;

/// Outcome of one self-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn c1(start: usize, vals: &[f64]) -> ActionChunk {
    ActionChunk::from_rows(start, vals.iter().map(|v| vec![*v]).collect()).expect("finite rows")
}

fn close(name: &'static str, got: Result<f64>, want: f64, tol: f64) -> Check {
    match got {
        Ok(v) => Check { name, passed: (v - want).abs() <= tol, detail: format!("got {v}, want {want}") },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

fn truth(name: &'static str, r: Result<(bool, String)>) -> Check {
    match r {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

/// Fast invariant checks over every module. Takes a few seconds.
pub fn run_selftest() -> Vec<Check> {
    let mut out = Vec::new();

    out.push(close(
        "backward_coherence hand example",
        BackwardConfig::new(0.5).and_then(|cfg| backward_coherence(&c1(1, &[2.0, 2.0, 3.0, 9.0]), &c1(0, &[0.0, 1.0, 2.0, 3.0]), &cfg)),
        1.0,
        1e-12,
    ));
    out.push(close(
        "forward_contrast hand example",
        ForwardConfig::new(1, 1).and_then(|cfg| forward_contrast(&c1(0, &[0.0, 0.0]), &[c1(0, &[0.0, 0.0])], &[c1(0, &[1.0, 1.0])], &cfg)),
        -2.0,
        1e-12,
    ));
    out.push(close(
        "ema blend hand example",
        ema_blend(&c1(1, &[4.0, 9.0]), &c1(0, &[7.0, 0.0]), 0.75).map(|c| c.actions()[0].values()[0]),
        3.0,
        1e-12,
    ));
    out.push(close(
        "total variation hand example",
        IdleHistogram::from_probs([(IdleBin::Count(0), 0.8), (IdleBin::Count(1), 0.2)].into()).and_then(|p| {
            let q = IdleHistogram::from_probs([(IdleBin::Count(0), 0.5), (IdleBin::Count(1), 0.5)].into())?;
            total_variation(&p, &q)
        }),
        0.3,
        1e-12,
    ));

    out.push(truth("noiseless expert demonstrations", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let demos = generate_demos(0.0, 20, &mut rng)?;
        let ok = demos.iter().all(|d| d.len() == 14 && d.idle_count() == 4);
        let p = train_tabular(&demos, 1)?.probability(5, &[ChainAction::Idle]);
        Ok((ok && (p - 0.8).abs() < 1e-12, format!("P(idle | s5) = {p}")))
    })()));

    out.push(truth("expert Monte Carlo matches dynamic programming", (|| {
        let eval = ChainEval::new(0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mc = expert_idle_oracle(&eval, 20_000, &mut rng)?;
        let tvd = total_variation(&mc, &expert_idle_exact(&eval)?)?;
        Ok((tvd <= 0.02, format!("tvd {tvd:.4}")))
    })()));

    out.push(truth("config round trip", (|| {
        let mut ok = true;
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::new(kind);
            ok &= ExperimentConfig::from_toml(&c.to_toml()?)? == c;
        }
        Ok((ok, String::new()))
    })()));

    out.push(truth("pipeline determinism", (|| {
        let mut c = ExperimentConfig::new(ExperimentKind::Diagnostic);
        c.episodes = 200;
        c.diagnostic.demos = 200;
        let a = run_experiment(&c)?;
        let b = run_experiment(&c)?;
        let h10: BTreeMap<String, String> =
            [("delta".to_string(), "0".to_string()), ("h".to_string(), "10".to_string())].into();
        let zero = a.iter().any(|r| r.conditions == h10 && r.metric == "tvd" && r.value == 0.0);
        Ok((a == b && zero, format!("{} rows, identical {}, zero tvd {zero}", a.len(), a == b)))
    })()));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_selfchecks_pass() {
        for c in run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
