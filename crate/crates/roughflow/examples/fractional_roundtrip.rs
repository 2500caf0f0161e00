//! Round-trip accuracy of the fractional operators on a uniform grid:
//! `D^α I^α f ≈ f` and `K_H⁻¹ (K_H ψ) ≈ ψ`.
//!
//! Run with: `cargo run --release --example fractional_roundtrip`

use roughflow::fraccalc::{kh_apply, kh_inverse_ac, rl_derivative, rl_integral, Side};
use roughflow::grid::{GridFunction, TimeGrid};

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn main() -> roughflow::Result<()> {
    let n = 2048;
    let grid = TimeGrid::uniform(1.0, n)?;
    let f = GridFunction::from_fn(grid.clone(), f64::sin);

    println!("D^a I^a sin - sin, sup norm on [0,1], N = {n}:");
    for &alpha in &[0.2, 0.5, 0.8] {
        let integ = rl_integral(alpha, Side::Left, &f)?;
        let back = rl_derivative(alpha, Side::Left, &integ)?;
        println!("  alpha = {alpha}: {:.3e}", sup_diff(f.values(), back.values()));
    }

    println!("K_H^-1 (K_H psi) - psi, sup norm away from the origin:");
    let psi = GridFunction::from_fn(grid.clone(), |x| 0.5 + x * (1.0 - 0.5 * x));
    for &h in &[0.1, 0.3] {
        let phi = kh_apply(h, &psi)?;
        let back = kh_inverse_ac(h, &phi, None)?;
        let lo = n / 8;
        println!(
            "  H = {h}: {:.3e}",
            sup_diff(&psi.values()[lo..], &back.values()[lo..])
        );
    }
    Ok(())
}
