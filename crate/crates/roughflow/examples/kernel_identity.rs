//! Verify the kernel-covariance identity
//! `∫_0^{s∧t} K_H(t,u) K_H(s,u) du = R_H(t,s)` by graded quadrature.
//!
//! Run with: `cargo run --release --example kernel_identity`

use roughflow::fbm::{kernel_cov_quadrature, rh_cov};

fn main() -> roughflow::Result<()> {
    println!(
        "{:>6} {:>5} {:>5} {:>14} {:>14} {:>10}",
        "H", "t", "s", "quadrature", "closed form", "rel err"
    );
    for &h in &[0.05, 0.1, 0.2, 0.3, 0.45] {
        for &(t, s) in &[(1.0, 0.4), (0.8, 0.8), (0.6, 0.1), (1.0, 0.95)] {
            let q = kernel_cov_quadrature(h, t, s, 1e-8)?;
            let c = rh_cov(h, t, s)?;
            let rel = (q - c).abs() / c.abs();
            println!("{h:>6} {t:>5} {s:>5} {q:>14.8} {c:>14.8} {rel:>10.2e}");
        }
    }
    Ok(())
}
