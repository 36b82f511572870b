use std::f64::consts::PI;

use pprag::geometry::{
    alpha_of_fraction, alpha_of_k, angle_between, cap_fraction, k_prime, normalize, perturb_query,
    surface_area_log, PerturbationParams,
};

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Cap fraction as a ratio of integrals of the polar-angle density.
fn cap_by_quadrature(alpha: f64, n: usize) -> f64 {
    let density = |t: f64| t.sin().powi(n as i32 - 2);
    simpson(density, 0.0, alpha, 20_000) / simpson(density, 0.0, PI, 20_000)
}

/// ln of 2 pi^(n/2) / Gamma(n/2) using factorial identities only.
fn log_sphere_area_oracle(n: usize) -> f64 {
    let ln_gamma_half_n = if n.is_multiple_of(2) {
        (1..n / 2).map(|i| (i as f64).ln()).sum::<f64>()
    } else {
        // Gamma(j + 1/2) = sqrt(pi) (2j)! / (4^j j!)
        let j = (n - 1) / 2;
        0.5 * PI.ln() + (j + 1..=2 * j).map(|i| (i as f64).ln()).sum::<f64>() - j as f64 * 4f64.ln()
    };
    2f64.ln() + n as f64 / 2.0 * PI.ln() - ln_gamma_half_n
}

#[test]
fn cap_fraction_agrees_with_quadrature() {
    for n in [3usize, 4, 5, 10, 32, 64] {
        for alpha in [0.05, 0.4, 1.0, PI / 2.0, 2.0, 2.9] {
            let got = cap_fraction(alpha, n).unwrap();
            let want = cap_by_quadrature(alpha, n);
            assert!(
                (got - want).abs() < 1e-9,
                "n={n} alpha={alpha}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn cap_fraction_closed_forms() {
    // Circle: uniform angle.
    for alpha in [0.1, 1.0, 3.0] {
        assert!((cap_fraction(alpha, 2).unwrap() - alpha / PI).abs() < 1e-12);
    }
    // R^4: (alpha - sin(alpha)cos(alpha)) / pi.
    for alpha in [0.2f64, 1.3, 2.5] {
        let want = (alpha - alpha.sin() * alpha.cos()) / PI;
        assert!((cap_fraction(alpha, 4).unwrap() - want).abs() < 1e-12);
    }
    for n in [3, 64, 768, 1536] {
        assert!((cap_fraction(PI / 2.0, n).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(cap_fraction(0.0, n).unwrap(), 0.0);
        assert_eq!(cap_fraction(PI, n).unwrap(), 1.0);
    }
}

#[test]
fn sphere_area_matches_factorial_oracle() {
    for n in [2usize, 3, 4, 7, 64, 65, 768, 1536] {
        let got = surface_area_log(n).unwrap();
        let want = log_sphere_area_oracle(n);
        assert!(
            (got - want).abs() < 1e-9 * want.abs().max(1.0),
            "n={n}: {got} vs {want}"
        );
    }
    // 4 pi for the ordinary sphere.
    assert!((surface_area_log(3).unwrap() - (4.0 * PI).ln()).abs() < 1e-14);
}

#[test]
fn fraction_inversion_round_trips() {
    for n in [3usize, 64, 768, 1536] {
        for f in [1e-6, 5e-5, 0.01, 0.3, 0.5, 0.9] {
            let a = alpha_of_fraction(f, n).unwrap();
            let back = cap_fraction(a, n).unwrap();
            assert!(
                (back - f).abs() <= 1e-12 * f.max(1e-3),
                "n={n} f={f}: {back}"
            );
        }
    }
}

#[test]
fn k_prime_properties() {
    let (m, n) = (100_000, 768);
    assert_eq!(k_prime(5, m, n, 0.0).unwrap().k_prime, 5);
    let mut prev = 0;
    for da in [0.0, 0.005, 0.01, 0.02, 0.04] {
        let kp = k_prime(10, m, n, da).unwrap().k_prime;
        assert!(kp >= prev);
        prev = kp;
    }
    let mut prev = 0;
    for k in [1, 5, 20, 100] {
        let kp = k_prime(k, m, n, 0.02).unwrap().k_prime;
        assert!(kp >= prev && kp >= k);
        prev = kp;
    }
    let mut prev = 0;
    for mm in [1_000, 10_000, 100_000] {
        let kp = k_prime(5, mm, n, 0.02).unwrap().k_prime;
        assert!(kp >= prev);
        prev = kp;
    }
    let sat = k_prime(5, 1000, 3, 3.1).unwrap();
    assert!(sat.saturated);
    assert_eq!(sat.k_prime, 1000);
    assert!(k_prime(0, 10, 3, 0.1).is_err());
    assert!(k_prime(11, 10, 3, 0.1).is_err());
    assert!(k_prime(1, 10, 3, -0.1).is_err());
}

#[test]
fn alpha_of_k_is_the_empirical_neighbour_angle() {
    // The k-th smallest angle among m uniform directions concentrates at alpha_of_k.
    use rand::SeedableRng;
    let (m, n, k) = (20_000, 8, 200);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let pts = pprag::eval::random_unit_vectors(&mut rng, m, n);
    let pole = pprag::eval::random_unit_vector(&mut rng, n);
    let mut angles: Vec<f64> = pts.iter().map(|p| angle_between(&pole, p)).collect();
    angles.sort_by(f64::total_cmp);
    let predicted = alpha_of_k(k, m, n).unwrap();
    assert!(
        (angles[k - 1] - predicted).abs() < 0.05,
        "{} vs {predicted}",
        angles[k - 1]
    );
}

#[test]
fn perturbation_stays_within_widening() {
    let q = normalize(&[1.0f64, 2.0, 3.0, 4.0, 5.0][..]).unwrap();
    for seed in 0..200 {
        for r in [0.01, 0.1, 0.5] {
            let p =
                perturb_query(&q, &PerturbationParams::new(r).unwrap().with_seed(seed)).unwrap();
            assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            let moved = angle_between(&q, &p);
            assert!(moved <= r.asin() + 1e-12);
        }
    }
    let same = perturb_query(&q, &PerturbationParams::new(0.0).unwrap()).unwrap();
    assert_eq!(same, q);
}
