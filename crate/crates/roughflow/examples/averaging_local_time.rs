//! The averaging operator `T_t(b)(x) = ∫_0^t b(x + B_s) ds` and its dual
//! formulation against the occupation density (local time):
//! `T_t(b)(x) = ∫ b(x + z) L_t(z) dz`.
//!
//! Run with: `cargo run --release --example averaging_local_time`

use std::sync::Arc;

use roughflow::averaging::{averaging_operator, occupation_density};
use roughflow::grid::TimeGrid;
use roughflow::regnoise::{sample_combined, RegularizingSpec};
use roughflow::sde::{DriftField, Trajectory};

fn main() -> roughflow::Result<()> {
    let spec = RegularizingSpec::new(vec![0.3], vec![1.0], 1)?;
    let grid = TimeGrid::uniform(1.0, 2048)?;
    let paths = sample_combined(&spec, &grid, 200, 42, 0)?;
    let trajectories: Vec<Trajectory> = paths
        .into_iter()
        .map(|vals| Trajectory { grid: grid.clone(), values: vec![vals] })
        .collect();

    // A step field: rough drift the averaging operator smooths in x.
    let step = DriftField::new(
        1,
        1e6,
        Arc::new(|_t, x: &[f64], out: &mut [f64]| {
            out[0] = if x[0] >= 0.0 { 1.0 } else { 0.0 }
        }),
    )?;

    let xs: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
    let res = averaging_operator(&step, &trajectories, 1.0, &xs)?;

    // Duality on the first path.
    let vals0 = &trajectories[0].values[0];
    let z: Vec<f64> = (0..=1600).map(|i| -8.0 + 0.01 * i as f64).collect();
    let occ = occupation_density(&grid, vals0, 1.0, Some(0.03), &z)?;

    println!(
        "{:>6} {:>12} {:>10} {:>14} {:>14}",
        "x", "mean T(b)(x)", "std err", "pathwise(0)", "duality(0)"
    );
    for (i, &x) in xs.iter().enumerate() {
        let dual = occ.integrate_against(&|zv: f64| if x + zv >= 0.0 { 1.0 } else { 0.0 });
        println!(
            "{x:>6} {:>12.4} {:>10.4} {:>14.4} {:>14.4}",
            res.mean[i], res.std_err[i], res.per_path[0][i], dual
        );
    }
    println!("(the mean column is a smooth, monotone profile of the hard step)");
    Ok(())
}
