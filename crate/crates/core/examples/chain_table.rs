//! Exact (Monte Carlo free) TVD table for the chain task.
//!
//! `cargo run --release --example chain_table -- [chosen|stalled] [window] [demos]`

use bid_core::chain::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let counting: IdleCounting = args.get(1).map(|s| s.parse().unwrap()).unwrap_or_default();
    let window: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(5);
    let demos_n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for delta in [0.0, 0.4, 0.8] {
        let eval = ChainEval { counting, window, ..ChainEval::new(delta) };
        let demos = generate_demos_with_window(delta, window, demos_n, &mut rng).unwrap();
        let expert = expert_idle_exact(&eval).unwrap();
        let row: Vec<String> = [1, 3, 5, 7, 10]
            .iter()
            .map(|&h| {
                let pol = train_tabular(&demos, h).unwrap();
                let exact = learner_idle_exact(&pol, &eval).unwrap();
                format!("{:.3}", total_variation(&exact, &expert).unwrap())
            })
            .collect();
        println!("delta={delta} exact tvd: {}", row.join(" "));
    }
}
