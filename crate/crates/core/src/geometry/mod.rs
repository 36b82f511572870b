//! Hyperspherical cap geometry and query perturbation.
//!
//! Under the model where database directions are uniform on the unit
//! sphere in `R^n`, the `k`-th nearest neighbour of a query sits at the
//! angle `α_k` whose cap holds a `k/m` fraction of the sphere. Perturbing
//! the query by at most `Δα` means every true top-`k` result lies inside
//! the cap of angle `α_k + Δα` around the perturbed query, so retrieving
//!
//! ```text
//! k' = m * (F(α_k + Δα) - F(α_k)) + k
//! ```
//!
//! candidates (with `F` the cap fraction) retains the true top-`k`.
//!
//! Cap fractions go through the regularized incomplete beta function:
//! `F(α) = ½ I_{sin²α}((n-1)/2, ½)` for `α ≤ π/2`, reflected above. Direct
//! quadrature of `sin^(n-2)` underflows at embedding dimensions.

pub mod special;

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scheme::Plaintext;

/// Fraction-space tolerance for [`alpha_of_fraction`].
pub const BISECTION_TOLERANCE: f64 = 1e-12;
pub const BISECTION_MAX_ITER: usize = 200;

/// ln Ω_n(π), the log surface area of the unit sphere in `R^n`.
pub fn surface_area_log(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Param(format!(
            "sphere dimension must be >= 2, got {n}"
        )));
    }
    let half = n as f64 / 2.0;
    Ok(std::f64::consts::LN_2 + half * PI.ln() - special::ln_gamma(half))
}

/// Fraction of the unit sphere in `R^n` within angle `alpha` of a pole.
pub fn cap_fraction(alpha: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Param(format!(
            "sphere dimension must be >= 2, got {n}"
        )));
    }
    if !(0.0..=PI).contains(&alpha) {
        return Err(Error::Param(format!("cap angle {alpha} outside [0, pi]")));
    }
    Ok(cap_fraction_unchecked(alpha, n))
}

fn cap_fraction_unchecked(alpha: f64, n: usize) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    if alpha == PI {
        return 1.0;
    }
    let a = (n as f64 - 1.0) / 2.0;
    let (sin, cos) = alpha.sin_cos();
    let half = 0.5 * special::beta_reg_xy(a, 0.5, sin * sin, cos * cos);
    if alpha <= FRAC_PI_2 {
        half
    } else {
        1.0 - half
    }
}

/// Inverts [`cap_fraction`] by bisection.
pub fn alpha_of_fraction(fraction: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Param(format!(
            "sphere dimension must be >= 2, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Param(format!(
            "cap fraction {fraction} outside [0, 1]"
        )));
    }
    if fraction == 0.0 {
        return Ok(0.0);
    }
    if fraction == 1.0 {
        return Ok(PI);
    }
    let (mut lo, mut hi) = (0.0f64, PI);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = cap_fraction_unchecked(mid, n);
        if f == fraction {
            return Ok(mid);
        }
        if f < fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The loop runs to f64 resolution in angle, which is finer than the
    // fraction tolerance everywhere the density is non-negligible.
    Ok(0.5 * (lo + hi))
}

/// Angle of the `k`-th nearest neighbour among `m` uniform directions.
pub fn alpha_of_k(k: usize, m: usize, n: usize) -> Result<f64> {
    if k == 0 || k > m {
        return Err(Error::Param(format!("need 1 <= k <= m, got k={k}, m={m}")));
    }
    alpha_of_fraction(k as f64 / m as f64, n)
}

/// Angular widening used to size k': the angle subtended by a chord of
/// length `radius`. The exact worst-case displacement of a unit vector
/// under noise of norm `radius` is `asin(radius)`, larger by about r^3/8.
pub fn delta_alpha_of_radius(radius: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&radius) {
        return Err(Error::Param(format!(
            "perturbation radius {radius} outside [0, 1)"
        )));
    }
    Ok(2.0 * (radius / 2.0).asin())
}

/// Result of sizing the expanded candidate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionPlan {
    pub k: usize,
    pub k_prime: usize,
    /// Angular threshold of the k-th neighbour (radians).
    pub alpha_k: f64,
    /// Widening applied to `alpha_k` (radians).
    pub delta_alpha: f64,
    pub n: usize,
    pub m: usize,
    /// `alpha_k + delta_alpha` exceeded π and was clamped; `k_prime == m`.
    pub saturated: bool,
}

impl ExpansionPlan {
    pub fn alpha_k_prime(&self) -> f64 {
        (self.alpha_k + self.delta_alpha).min(PI)
    }

    pub fn ratio(&self) -> f64 {
        self.k_prime as f64 / self.k as f64
    }
}

/// Sizes the top-`k'` retrieval that keeps the true top-`k` after a query
/// moved by `delta_alpha`.
pub fn k_prime(k: usize, m: usize, n: usize, delta_alpha: f64) -> Result<ExpansionPlan> {
    if !(delta_alpha.is_finite() && delta_alpha >= 0.0) {
        return Err(Error::Param(format!(
            "angular widening must be >= 0, got {delta_alpha}"
        )));
    }
    let alpha_k = alpha_of_k(k, m, n)?;
    let widened = alpha_k + delta_alpha;
    if widened > PI {
        return Ok(ExpansionPlan {
            k,
            k_prime: m,
            alpha_k,
            delta_alpha,
            n,
            m,
            saturated: true,
        });
    }
    let extra = cap_fraction_unchecked(widened, n) - cap_fraction_unchecked(alpha_k, n);
    let k_prime = (m as f64 * extra + k as f64).ceil();
    let k_prime = (k_prime as usize).clamp(k, m);
    Ok(ExpansionPlan {
        k,
        k_prime,
        alpha_k,
        delta_alpha,
        n,
        m,
        saturated: false,
    })
}

/// Convenience: [`k_prime`] with the widening derived from a perturbation radius.
pub fn k_prime_for_radius(k: usize, m: usize, n: usize, radius: f64) -> Result<ExpansionPlan> {
    k_prime(k, m, n, delta_alpha_of_radius(radius)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationParams {
    /// L2 norm of the noise added to the unit-normalized query.
    pub radius: f64,
    /// Deterministic seed; `None` draws from the thread-local CSPRNG.
    pub seed: Option<u64>,
}

impl PerturbationParams {
    pub fn new(radius: f64) -> Result<Self> {
        delta_alpha_of_radius(radius)?;
        Ok(Self { radius, seed: None })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Returns `e / ‖e‖`, rejecting zero and non-finite vectors.
pub fn normalize<P: Plaintext + ?Sized>(e: &P) -> Result<Vec<f64>> {
    let v: Vec<f64> = (0..e.dim()).map(|i| e.component(i)).collect();
    if v.is_empty() {
        return Err(Error::Input("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite vector component".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Input("cannot normalize a zero vector".into()));
    }
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Normalizes the query, adds noise uniform on the sphere of radius
/// `params.radius`, and renormalizes.
pub fn perturb_query<P: Plaintext + ?Sized>(
    e: &P,
    params: &PerturbationParams,
) -> Result<Vec<f64>> {
    match params.seed {
        Some(seed) => perturb_query_with(e, params.radius, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => perturb_query_with(e, params.radius, &mut rand::rng()),
    }
}

pub fn perturb_query_with<P: Plaintext + ?Sized, R: Rng + ?Sized>(
    e: &P,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    delta_alpha_of_radius(radius)?;
    let mut q = normalize(e)?;
    if radius == 0.0 {
        return Ok(q);
    }
    let dir = loop {
        let g: Vec<f64> = (0..q.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            break g.into_iter().map(|x| x / norm).collect::<Vec<_>>();
        }
    };
    for (qi, di) in q.iter_mut().zip(&dir) {
        *qi += radius * di;
    }
    // ‖q + noise‖ >= 1 - radius > 0
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    q.iter_mut().for_each(|x| *x /= norm);
    Ok(q)
}

/// Angle between two vectors, clamped against rounding.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}
