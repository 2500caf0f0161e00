//! Two small Gaussian moment lemmas used throughout the bound machinery:
//! `E|X₁⋯Xₙ| ≤ sqrt(perm Σ)` and the conditional-variance
//! change-of-variables identity.
//!
//! Run with: `cargo run --release --example gaussian_lemmas`

use nalgebra::DMatrix;
use roughflow::averaging::{
    conditional_variance_identity_check, gaussian_product_moment_check, permanent,
};

fn main() -> roughflow::Result<()> {
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 1.2]);
    println!("perm(Sigma) = {:.6}", permanent(&sigma)?);
    let check = gaussian_product_moment_check(&sigma, 50_000, 42)?;
    println!(
        "E|X1 X2 X3| = {:.5} (se {:.5}) <= sqrt(perm) = {:.5}  [{}]",
        check.mc_estimate,
        check.std_err,
        check.sqrt_permanent,
        if check.pass { "holds" } else { "VIOLATED" }
    );

    let g = |v: f64| (-0.25 * v * v).exp();
    for sigma in [
        DMatrix::from_row_slice(1, 1, &[1.3]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]),
    ] {
        let n = sigma.nrows();
        let check = conditional_variance_identity_check(&sigma, &g)?;
        println!(
            "conditional-variance identity n={n}: lhs {:.8}, rhs {:.8}, |diff| {:.2e}",
            check.lhs, check.rhs, check.abs_diff
        );
    }
    Ok(())
}
