//! Perturbing a query embedding before encryption: the perturbed vector
//! stays on the unit sphere and moves by a bounded angle.

use pprag::geometry::{
    angle_between, delta_alpha_of_radius, normalize, perturb_query, PerturbationParams,
};

fn main() -> pprag::Result<()> {
    let q = normalize(&[0.3f64, -0.1, 0.9, 0.2, 0.05, -0.4][..])?;
    for radius in [0.0, 0.01, 0.05, 0.2] {
        let params = PerturbationParams::new(radius)?.with_seed(42);
        let p = perturb_query(&q, &params)?;
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!(
            "r={radius:<5} angle moved {:.5} rad (limit {:.5}), |q'| = {norm:.12}",
            angle_between(&q, &p),
            delta_alpha_of_radius(radius)?
        );
    }
    Ok(())
}
