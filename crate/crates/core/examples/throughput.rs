//! Single-threaded encryption and decryption rates.

use pprag::eval::run_throughput;

fn main() -> pprag::Result<()> {
    let report = run_throughput(&[192, 384, 768, 1536], 1_000, 5, 0)?;
    println!("{}", report.methodology);
    for r in &report.rows {
        println!(
            "dim {:>4}: enc_db {:>9.0}/s  enc_q {:>9.0}/s  dec_db {:>9.0}/s",
            r.dim, r.enc_db_vectors_per_sec, r.enc_q_vectors_per_sec, r.dec_db_vectors_per_sec
        );
    }
    Ok(())
}
