//! Vector-analysis attack: an adversary holding the encrypted database
//! guesses a record's plaintext neighbours from ciphertext distances.
//! Lower success means less leakage.

use pprag::eval::{run_asr, AsrConfig};

fn main() -> pprag::Result<()> {
    println!("dim  asr_caprise  asr_adcpe  asr_plain");
    for dim in [32, 128] {
        let r = run_asr(&AsrConfig {
            dim,
            m: 5_000,
            k: 10,
            trials: 100,
            beta: 0.2,
            seed: 5,
        })?;
        println!(
            "{:<4} {:>11.3} {:>10.3} {:>10.3}",
            r.dim, r.asr_caprise, r.asr_adcpe, r.asr_plain
        );
    }
    Ok(())
}
