//! How often encryption swaps the order of two database points relative to
//! an anchor, as a function of how far apart their distances are.

use pprag::eval::{run_flip_rate, FlipConfig, Pairing};

fn main() -> pprag::Result<()> {
    for pairing in [Pairing::DbDb, Pairing::QueryDb] {
        for margin_factor in [1.01, 1.25, 1.5, 2.0] {
            let r = run_flip_rate(&FlipConfig {
                dim: 16,
                margin_factor,
                trials: 20_000,
                beta: 0.2,
                pairing,
                seed: 9,
            })?;
            println!(
                "{pairing:?} margin {margin_factor:.2}*beta: {} flips / {} ({:.4})",
                r.flips, r.trials, r.rate
            );
        }
    }
    Ok(())
}
