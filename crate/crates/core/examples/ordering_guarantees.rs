//! Distances between ciphertexts, divided by the scale, stay within a
//! small additive slack of the plaintext distances. Pairs separated by
//! more than that slack keep their order.

use pprag::eval::random_unit_vectors;
use pprag::scheme::{SchemeKey, DEFAULT_SCALE_RANGE};
use pprag::store::squared_l2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pprag::Result<()> {
    let beta = 0.2;
    let key = SchemeKey::generate(128, beta, DEFAULT_SCALE_RANGE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points = random_unit_vectors(&mut rng, 200, 48);
    let query = &points[0];

    let cq = key.enc_q(query)?;
    let mut worst: f64 = 0.0;
    let mut dists = Vec::new();
    for p in &points[1..] {
        let cp = key.enc_db(p)?;
        let plain = squared_l2(query, p).sqrt();
        let enc = squared_l2(&cq.c, &cp.c).sqrt() / key.scale();
        worst = worst.max((enc - plain).abs());
        dists.push((plain, enc));
    }
    println!(
        "query/db pairs: max |d_enc/s - d| = {worst:.4}, slack = beta/2 = {:.4}",
        beta / 2.0
    );

    let mut preserved = 0;
    let mut eligible = 0;
    for i in 0..dists.len() {
        for j in 0..dists.len() {
            if dists[j].0 - dists[i].0 > beta / 2.0 {
                eligible += 1;
                preserved += usize::from(dists[i].1 < dists[j].1);
            }
        }
    }
    println!("pairs separated by > beta/2: {eligible}, order preserved in {preserved}");
    Ok(())
}
