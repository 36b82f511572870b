//! How many extra candidates a perturbed query needs (k') to still contain
//! the true top-k, over a grid of dimensions, radii and k.

use pprag::eval::{kprime_csv, run_kprime_table};
use pprag::geometry::{alpha_of_k, cap_fraction, delta_alpha_of_radius};

fn main() -> pprag::Result<()> {
    let m = 100_000;
    let rows = run_kprime_table(&[768, 1536], &[0.033, 0.1], &[5, 20], m)?;
    print!("{}", kprime_csv(&rows));

    let n = 768;
    let alpha = alpha_of_k(5, m, n)?;
    println!(
        "\nn={n}: top-5 of {m} lies within {:.4} rad, cap fraction {:.3e}",
        alpha,
        cap_fraction(alpha, n)?
    );
    println!(
        "r=0.033 widens that cone by {:.4} rad",
        delta_alpha_of_radius(0.033)?
    );
    Ok(())
}
