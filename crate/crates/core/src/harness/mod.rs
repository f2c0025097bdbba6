//! Experiment configuration, orchestration and result files.

mod config;
mod output;
mod run;
mod selftest;

pub use config::{
    BimodalSettings, DecoderKind, DecoderSettings, DiagnosticSettings, DriftSettings, ExperimentConfig,
    ExperimentKind, Geometry, DEFAULT_CHUNK_LEN,
};
pub use output::{
    canonical_labels, read_rows, summarize, write_summary_csv, ResultRow, RowWriter, SummaryRow, PARTIAL_SUFFIX,
};
pub use run::{
    cached_demos_path, conditions, demo_seed, ensure_demo_cache, run_experiment, run_experiment_with, Condition,
    Setting,
};
pub use selftest::{run_selftest, Check};

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two 64-bit values into one well-mixed seed.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Identifies a condition by its labels rather than its position, so a
/// condition keeps its seeds when run alone. 64-bit FNV-1a of the canonical
/// `k=v;k=v` label string.
pub fn condition_key(labels: &std::collections::BTreeMap<String, String>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical_labels(labels).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for episode `episode` of a condition: `mix(mix(master, condition), episode)`.
pub fn episode_seed(master: u64, condition: u64, episode: u64) -> u64 {
    mix(mix(master, condition), episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn fnv_reference_value() {
        let empty = BTreeMap::new();
        assert_eq!(condition_key(&empty), 0xcbf2_9ce4_8422_2325);
        let one: BTreeMap<String, String> = [("a".to_string(), "".to_string())].into();
        // FNV-1a("a=") computed by hand from the published constants
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in *b"a=" {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
        assert_eq!(condition_key(&one), h);
    }

    #[test]
    fn seeds_differ_across_streams() {
        let mut seen = std::collections::HashSet::new();
        for c in 0..20u64 {
            for e in 0..50u64 {
                assert!(seen.insert(episode_seed(7, c, e)));
            }
        }
    }
}
