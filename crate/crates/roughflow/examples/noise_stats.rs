//! Sample the combined regularizing noise and compare its Monte Carlo
//! variance with the closed-form level sum `Σ λ_n² t^{2H_n}`.
//!
//! Run with: `cargo run --release --example noise_stats`

use roughflow::grid::TimeGrid;
use roughflow::regnoise::{default_lambda, sample_combined, RegularizingSpec};

fn main() -> roughflow::Result<()> {
    let hurst = vec![0.45, 0.35, 0.25, 0.15, 0.08, 0.04];
    let lambda = default_lambda(hurst.len(), &vec![0.0; hurst.len()])?;
    let spec = RegularizingSpec::new(hurst, lambda, 1)?;
    let grid = TimeGrid::uniform(1.0, 128)?;
    let n_paths = 20_000;
    let paths = sample_combined(&spec, &grid, n_paths, 42, 0)?;

    println!("{:>6} {:>12} {:>12} {:>10}", "t", "mc var", "closed form", "z-score");
    for &t in &[0.25f64, 0.5, 1.0] {
        let idx = (t * 128.0).round() as usize;
        let vals: Vec<f64> = paths.iter().map(|p| p[idx]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (vals.len() - 1) as f64;
        let predicted = spec.variance_at(t);
        // Gaussian sampling error of a sample variance.
        let se = predicted * (2.0 / (n_paths as f64 - 1.0)).sqrt();
        println!(
            "{t:>6} {var:>12.6} {predicted:>12.6} {:>10.2}",
            (var - predicted) / se
        );
    }
    Ok(())
}
