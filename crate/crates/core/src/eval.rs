//! Desk-scale experiments: vector-analysis attack success rate, database
//! ordering flips, encryption throughput, and k' expansion tables.
//!
//! Every experiment takes a seed and is bit-reproducible under it. Trials
//! run in parallel but draw all randomness up front, so results do not
//! depend on the thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry;
use crate::scheme::{NoiseKind, Nonce, SchemeKey, DEFAULT_SCALE_RANGE};
use crate::store::squared_l2;

/// Normalized Gaussian vectors: uniform on the unit sphere.
pub fn random_unit_vectors<R: Rng + ?Sized>(
    rng: &mut R,
    count: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    (0..count).map(|_| random_unit_vector(rng, dim)).collect()
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// What the attacker sees of the database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AsrScheme {
    Caprise,
    Adcpe,
    /// Identity "encryption"; ASR is 1 by construction.
    Plaintext,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsrConfig {
    pub dim: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsrReport {
    pub dim: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub beta: f64,
    pub asr_caprise: f64,
    pub asr_adcpe: f64,
    pub asr_plain: f64,
}

/// Indices of the `k` smallest entries of `dists`, skipping `exclude`.
fn topk_indices(dists: &[f64], k: usize, exclude: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dists.len()).filter(|&i| i != exclude).collect();
    let cmp = |a: &usize, b: &usize| dists[*a].total_cmp(&dists[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

fn encrypt_database(
    key: &SchemeKey,
    kind: NoiseKind,
    db: &[Vec<f64>],
    nonces: &[Nonce],
) -> Vec<Vec<f64>> {
    db.par_iter()
        .zip(nonces)
        .map(|(e, n)| {
            key.encrypt_with_nonce(kind, e, *n)
                .expect("finite unit vector")
                .c
        })
        .collect()
}

fn asr_against(truth: &[Vec<usize>], queries: &[usize], space: &[Vec<f64>], k: usize) -> f64 {
    let total: usize = queries
        .par_iter()
        .zip(truth)
        .map(|(&q, true_top)| {
            let dists: Vec<f64> = space.iter().map(|v| squared_l2(v, &space[q])).collect();
            let found = topk_indices(&dists, k, q);
            found.iter().filter(|i| true_top.contains(i)).count()
        })
        .sum();
    total as f64 / (queries.len() * k) as f64
}

/// Vector-analysis attack: the server ranks database ciphertexts around a
/// database ciphertext and we measure how much of the plaintext top-`k`
/// it recovers. ASR is the mean top-`k` overlap fraction.
pub fn run_asr(cfg: &AsrConfig) -> Result<AsrReport> {
    if cfg.k == 0 || cfg.m <= cfg.k {
        return Err(Error::Param(format!(
            "need 1 <= k < m, got k={}, m={}",
            cfg.k, cfg.m
        )));
    }
    if cfg.trials == 0 || cfg.dim == 0 {
        return Err(Error::Param("trials and dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let db = random_unit_vectors(&mut rng, cfg.m, cfg.dim);
    let key = SchemeKey::generate_with(&mut rng, 128, cfg.beta, DEFAULT_SCALE_RANGE)?;
    let nonces_caprise: Vec<Nonce> = (0..cfg.m).map(|_| Nonce::random_with(&mut rng)).collect();
    let nonces_adcpe: Vec<Nonce> = (0..cfg.m).map(|_| Nonce::random_with(&mut rng)).collect();
    let queries: Vec<usize> = (0..cfg.trials)
        .map(|_| rng.random_range(0..cfg.m))
        .collect();

    let truth: Vec<Vec<usize>> = queries
        .par_iter()
        .map(|&q| {
            let d: Vec<f64> = db.iter().map(|v| squared_l2(v, &db[q])).collect();
            topk_indices(&d, cfg.k, q)
        })
        .collect();

    let caprise = encrypt_database(&key, NoiseKind::Database, &db, &nonces_caprise);
    let adcpe = encrypt_database(&key, NoiseKind::Adcpe, &db, &nonces_adcpe);

    Ok(AsrReport {
        dim: cfg.dim,
        m: cfg.m,
        k: cfg.k,
        trials: cfg.trials,
        beta: cfg.beta,
        asr_caprise: asr_against(&truth, &queries, &caprise, cfg.k),
        asr_adcpe: asr_against(&truth, &queries, &adcpe, cfg.k),
        asr_plain: asr_against(&truth, &queries, &db, cfg.k),
    })
}

/// Which encryptions the flip experiment compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Anchor, near and far points all database-encrypted.
    DbDb,
    /// Anchor query-encrypted, the other two database-encrypted.
    QueryDb,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlipConfig {
    pub dim: usize,
    /// Far distance minus near distance, in units of β.
    pub margin_factor: f64,
    pub trials: usize,
    pub beta: f64,
    pub pairing: Pairing,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlipReport {
    pub flips: usize,
    pub trials: usize,
    pub rate: f64,
}

/// Builds triples `(e1, e2, e3)` with `‖e1-e3‖ - ‖e1-e2‖ = margin·β`,
/// encrypts them, and counts encrypted orderings that no longer put `e2`
/// strictly closer to `e1` than `e3`.
pub fn run_flip_rate(cfg: &FlipConfig) -> Result<FlipReport> {
    if cfg.margin_factor.is_nan() || cfg.margin_factor <= 1.0 {
        return Err(Error::Param(format!(
            "margin factor must exceed 1, got {}",
            cfg.margin_factor
        )));
    }
    if cfg.dim == 0 || cfg.trials == 0 {
        return Err(Error::Param("dim and trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let key = SchemeKey::generate_with(&mut rng, 128, cfg.beta, DEFAULT_SCALE_RANGE)?;
    let anchor_kind = match cfg.pairing {
        Pairing::DbDb => NoiseKind::Database,
        Pairing::QueryDb => NoiseKind::Query,
    };
    let margin = cfg.margin_factor * cfg.beta;
    let mut flips = 0;
    for _ in 0..cfg.trials {
        let e1 = random_unit_vector(&mut rng, cfg.dim);
        let near = rng.random_range(0.0..1.0) * cfg.beta;
        let u1 = random_unit_vector(&mut rng, cfg.dim);
        let u2 = random_unit_vector(&mut rng, cfg.dim);
        let e2: Vec<f64> = e1.iter().zip(&u1).map(|(a, u)| a + near * u).collect();
        let e3: Vec<f64> = e1
            .iter()
            .zip(&u2)
            .map(|(a, u)| a + (near + margin) * u)
            .collect();
        let c1 = key.encrypt_with_nonce(anchor_kind, &e1, Nonce::random_with(&mut rng))?;
        let c2 = key.encrypt_with_nonce(NoiseKind::Database, &e2, Nonce::random_with(&mut rng))?;
        let c3 = key.encrypt_with_nonce(NoiseKind::Database, &e3, Nonce::random_with(&mut rng))?;
        if squared_l2(&c1.c, &c2.c) >= squared_l2(&c1.c, &c3.c) {
            flips += 1;
        }
    }
    Ok(FlipReport {
        flips,
        trials: cfg.trials,
        rate: flips as f64 / cfg.trials as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputRow {
    pub dim: usize,
    pub enc_db_vectors_per_sec: f64,
    pub enc_q_vectors_per_sec: f64,
    pub dec_db_vectors_per_sec: f64,
    /// Embedding components encrypted per second by `enc_db`.
    pub enc_db_elements_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub batch: usize,
    pub repeats: usize,
    pub methodology: String,
    pub rows: Vec<ThroughputRow>,
}

/// Fewest timed runs used for a median.
pub const MIN_REPEATS: usize = 5;

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_rate(batch: usize, repeats: usize, mut run: impl FnMut()) -> f64 {
    run(); // warm-up
    let rates = (0..repeats)
        .map(|_| {
            let t = Instant::now();
            run();
            batch as f64 / t.elapsed().as_secs_f64()
        })
        .collect();
    median(rates)
}

/// Single-threaded encryption/decryption throughput per dimension.
pub fn run_throughput(
    dims: &[usize],
    batch: usize,
    repeats: usize,
    seed: u64,
) -> Result<ThroughputReport> {
    if batch == 0 || dims.contains(&0) {
        return Err(Error::Param("batch and dims must be positive".into()));
    }
    let repeats = repeats.max(MIN_REPEATS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = SchemeKey::generate_with(&mut rng, 128, 0.2, DEFAULT_SCALE_RANGE)?;
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let data: Vec<Vec<f32>> = random_unit_vectors(&mut rng, batch, dim)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x as f32).collect())
            .collect();
        let cts: Vec<_> = data
            .iter()
            .map(|e| key.enc_db(&e[..]))
            .collect::<Result<_>>()?;
        let enc_db = time_rate(batch, repeats, || {
            for e in &data {
                std::hint::black_box(key.enc_db(&e[..]).expect("encrypt"));
            }
        });
        let enc_q = time_rate(batch, repeats, || {
            for e in &data {
                std::hint::black_box(key.enc_q(&e[..]).expect("encrypt"));
            }
        });
        let dec_db = time_rate(batch, repeats, || {
            for c in &cts {
                std::hint::black_box(key.dec_db(c).expect("decrypt"));
            }
        });
        rows.push(ThroughputRow {
            dim,
            enc_db_vectors_per_sec: enc_db,
            enc_q_vectors_per_sec: enc_q,
            dec_db_vectors_per_sec: dec_db,
            enc_db_elements_per_sec: enc_db * dim as f64,
        });
    }
    Ok(ThroughputReport {
        batch,
        repeats,
        methodology: format!(
            "single thread, one warm-up pass, median of {repeats} timed passes over {batch} vectors"
        ),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPrimeRow {
    pub n: usize,
    pub m: usize,
    pub r: f64,
    pub k: usize,
    pub delta_alpha: f64,
    pub k_prime: usize,
    pub ratio: f64,
}

pub const KPRIME_CSV_HEADER: &str = "n,m,r,k,delta_alpha,k_prime,k_prime_over_k";

impl KPrimeRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.9},{},{:.4}",
            self.n, self.m, self.r, self.k, self.delta_alpha, self.k_prime, self.ratio
        )
    }
}

/// k' for every `(n, r, k)` combination, in that nesting order.
pub fn run_kprime_table(
    ns: &[usize],
    rs: &[f64],
    ks: &[usize],
    m: usize,
) -> Result<Vec<KPrimeRow>> {
    let mut rows = Vec::with_capacity(ns.len() * rs.len() * ks.len());
    for &n in ns {
        for &r in rs {
            let delta_alpha = geometry::delta_alpha_of_radius(r)?;
            for &k in ks {
                let plan = geometry::k_prime(k, m, n, delta_alpha)?;
                rows.push(KPrimeRow {
                    n,
                    m,
                    r,
                    k,
                    delta_alpha,
                    k_prime: plan.k_prime,
                    ratio: plan.ratio(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn kprime_csv(rows: &[KPrimeRow]) -> String {
    let mut out = String::from(KPRIME_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// One JSON line recording an experiment's name, seed and parameters.
pub fn manifest_line<P: Serialize>(experiment: &str, seed: Option<u64>, params: &P) -> String {
    serde_json::json!({
        "experiment": experiment,
        "seed": seed,
        "params": params,
    })
    .to_string()
}
