//! Products of iterated simplex integrals expand into single simplex
//! integrals over shuffle permutations; the Gamma-function Dirichlet
//! formula bounds the weighted versions.
//!
//! Run with: `cargo run --release --example shuffle_identity`

use roughflow::shuffle::{
    dirichlet_gamma_bound, enumerate_shuffles, shuffle_identity_check, BoundParams,
};

fn main() -> roughflow::Result<()> {
    // Cardinalities |S(m1,...,mk)| = multinomial coefficient.
    for blocks in [vec![2usize, 3], vec![3, 3, 2], vec![1, 4, 2]] {
        let set = enumerate_shuffles(&blocks)?;
        println!(
            "|S{blocks:?}| = {} (multinomial {})",
            set.perms.len(),
            set.multinomial()
        );
    }

    // Identity: product of two simplex integrals = sum over shuffles.
    let f0 = |x: f64| 1.0 + x;
    let f1 = |x: f64| x;
    let f2 = |x: f64| x * x - 0.5;
    let factors: Vec<&(dyn Fn(f64) -> f64 + Sync)> = vec![&f0, &f1, &f2, &f0];
    for &(m1, m2) in &[(1usize, 1usize), (1, 2), (2, 2)] {
        let id = shuffle_identity_check(&factors[..m1 + m2], m1, m2, 0.2, 1.0)?;
        println!(
            "shuffle identity m1={m1} m2={m2}: lhs {:.8}, rhs {:.8}, |diff| {:.2e}",
            id.lhs, id.rhs, id.abs_diff
        );
    }

    // Weighted Dirichlet closed form (no kernel-difference factors:
    // this is the classical Gamma-product formula).
    let h = 0.1;
    let params = BoundParams::new(h, h, h / 5.0, vec![false, false], vec![0.3, 0.2])?;
    let v = dirichlet_gamma_bound(&params, 0.0, 0.2, 1.0)?;
    println!("Dirichlet closed form, w = [0.3, 0.2] on (0.2, 1): {v:.8}");
    Ok(())
}
