//! Fractional Brownian motion: covariance, Volterra kernel, samplers and
//! conditional variances.
//!
//! Throughout, `B^H` is centered Gaussian with covariance
//! `R_H(t,s) = ½ (t^{2H} + s^{2H} - |t-s|^{2H})`. For `H < 1/2` the process
//! also admits the Volterra representation `B_t = ∫_0^t K_H(t,s) dW_s`
//! against a standard Brownian motion, with an explicit kernel `K_H` that
//! is singular both at `s → 0` and `s → t`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::beta::beta;

use crate::grid::TimeGrid;
use crate::quad;
use crate::rng::{stream, StreamId};
use crate::{Error, Result};

/// Largest grid size (excluding the origin) accepted by the dense methods
/// (covariance assembly, Cholesky, Volterra weights). Larger grids are
/// rejected explicitly rather than silently slow.
pub const MAX_DENSE_GRID: usize = 4096;

fn check_hurst_open_unit(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0 && h.is_finite()) {
        return Err(Error::invalid(format!("Hurst index must lie in (0,1), got {h}")));
    }
    Ok(())
}

fn check_hurst_rough(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::invalid(format!(
            "Hurst index must lie in (0, 1/2) for the Volterra kernel, got {h}"
        )));
    }
    Ok(())
}

/// Covariance `R_H(t,s) = ½ (t^{2H} + s^{2H} - |t-s|^{2H})` of fBm,
/// valid for any `H ∈ (0,1)` and `t, s ≥ 0`.
pub fn rh_cov(h: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst_open_unit(h)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::invalid("times must be nonnegative"));
    }
    let two_h = 2.0 * h;
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Normalizing constant `c_H = sqrt( 2H / ((1-2H) B(1-2H, H+1/2)) )` of
/// the Volterra kernel, for `H ∈ (0, 1/2)`.
pub fn kernel_normalizer(h: f64) -> Result<f64> {
    check_hurst_rough(h)?;
    Ok((2.0 * h / ((1.0 - 2.0 * h) * beta(1.0 - 2.0 * h, h + 0.5))).sqrt())
}

/// Volterra kernel `K_H(t,s)` for `0 < s < t` and `H ∈ (0, 1/2)`:
///
/// ```text
/// K_H(t,s) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2}
///                  + (1/2-H) s^{1/2-H} ∫_s^t u^{H-3/2} (u-s)^{H-1/2} du ]
/// ```
///
/// The inner integral is evaluated after the graded substitution
/// `u = s + (t-s) v^{1/(H+1/2)}`, which absorbs the `(u-s)^{H-1/2}`
/// endpoint singularity exactly and leaves a smooth integrand on `[0,1]`.
pub fn kernel_kh(h: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst_rough(h)?;
    if !(0.0 < s && s < t) {
        return Err(Error::invalid(format!(
            "kernel requires 0 < s < t (got t={t}, s={s})"
        )));
    }
    let c = kernel_normalizer(h)?;
    let hm = h - 0.5;
    let first = (t / s).powf(hm) * (t - s).powf(hm);
    // ∫_s^t u^{H-3/2} (u-s)^{H-1/2} du
    //   = p (t-s)^{H+1/2} ∫_0^1 (s + (t-s) v^p)^{H-3/2} dv,  p = 1/(H+1/2).
    let p = 1.0 / (h + 0.5);
    let g = |v: f64| (s + (t - s) * v.powf(p)).powf(h - 1.5);
    // For s ≪ t the transformed integrand concentrates in a narrow spike
    // near v = 0, so control the relative (not absolute) error.
    let inner = quad::adaptive_relative(&g, 0.0, 1.0, 1e-12, 1e-300)?;
    let second = (0.5 - h) * s.powf(0.5 - h) * p * (t - s).powf(h + 0.5) * inner;
    Ok(c * (first + second))
}

/// Quadrature evaluation of `∫_0^{s∧t} K_H(t,u) K_H(s,u) du` (which the
/// kernel construction makes equal to `R_H(t,s)`). The integrand carries
/// algebraic singularities `u^{2H-1}` at the origin and `(s-u)^{H-1/2}`
/// at the upper limit; both are absorbed by the graded endpoint rule.
pub fn kernel_cov_quadrature(h: f64, t: f64, s: f64, tol: f64) -> Result<f64> {
    check_hurst_rough(h)?;
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    if lo <= 0.0 {
        return Err(Error::invalid("times must be strictly positive"));
    }
    if lo == hi {
        // Diagonal case: both kernels are singular at the upper limit, so
        // the combined endpoint behaviour is (t-u)^{2H-1}.
        let smooth = |u: f64| {
            let k = kernel_kh(h, hi, u).unwrap();
            k * k * u.powf(1.0 - 2.0 * h) * (lo - u).powf(1.0 - 2.0 * h)
        };
        return quad::integrate_power_endpoints(&smooth, 0.0, lo, 2.0 * h - 1.0, 2.0 * h - 1.0, tol);
    }
    let smooth = |u: f64| {
        kernel_kh(h, hi, u).unwrap()
            * kernel_kh(h, lo, u).unwrap()
            * u.powf(1.0 - 2.0 * h)
            * (lo - u).powf(0.5 - h)
    };
    quad::integrate_power_endpoints(&smooth, 0.0, lo, 2.0 * h - 1.0, h - 0.5, tol)
}

/// Dense covariance matrix `R_H(t_i, t_j)` over strictly positive,
/// strictly increasing times.
pub fn covariance_matrix(h: f64, times: &[f64]) -> Result<DMatrix<f64>> {
    check_hurst_open_unit(h)?;
    if times.is_empty() {
        return Err(Error::invalid("need at least one time"));
    }
    if times.len() > MAX_DENSE_GRID {
        return Err(Error::invalid(format!(
            "grid of {} points exceeds the dense-method cap of {MAX_DENSE_GRID}",
            times.len()
        )));
    }
    for w in times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("times must be strictly increasing"));
        }
    }
    if times[0] <= 0.0 {
        return Err(Error::invalid("covariance times must be strictly positive"));
    }
    let n = times.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        rh_cov(h, times[i], times[j]).unwrap()
    }))
}

/// Cholesky factorization with one diagonal-jitter retry
/// (`1e-12 · trace / N` added on failure).
pub fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    let jitter = 1e-12 * m.trace() / n as f64;
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let mut j = m;
            for i in 0..n {
                j[(i, i)] += jitter;
            }
            Cholesky::new(j).ok_or_else(|| {
                Error::Factorization(format!(
                    "covariance matrix ({n}×{n}) not positive definite even after jitter {jitter:.3e}"
                ))
            })
        }
    }
}

/// Exact-law fBm sampling by Cholesky factorization of the grid
/// covariance.
///
/// Returns `n_paths` paths sampled on `grid` (origin included, with
/// `B_0 = 0` exactly). The `component` label keeps the random stream
/// distinct from other noise sources in the same run.
pub fn sample_fbm_cholesky(
    h: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    component: u64,
) -> Result<Vec<Vec<f64>>> {
    let times = &grid.points()[1..];
    let cov = covariance_matrix(h, times)?;
    let chol = cholesky_with_jitter(cov)?;
    let l = chol.l();
    let n = times.len();
    let paths: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed, StreamId::new(p, component));
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &l * z;
            let mut path = Vec::with_capacity(n + 1);
            path.push(0.0);
            path.extend(x.iter().copied());
            path
        })
        .collect();
    Ok(paths)
}

/// Lower-triangular Volterra weights `A[(i-1, k)] = K_H(t_i, m_k)` for
/// midpoints `m_k = (t_k + t_{k+1})/2 < t_i`.
///
/// Evaluating the kernel at interval midpoints avoids the `s → t`
/// blow-up of the first kernel term. The resulting matrix maps driver
/// increments to path values: `B_{t_i} = Σ_{k<i} A[(i-1,k)] ΔW_k`.
pub fn volterra_weight_matrix(h: f64, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    check_hurst_rough(h)?;
    let n = grid.len() - 1;
    if n > MAX_DENSE_GRID {
        return Err(Error::invalid(format!(
            "grid of {n} steps exceeds the dense-method cap of {MAX_DENSE_GRID}"
        )));
    }
    let pts = grid.points();
    // Rows are independent; fill them in parallel.
    let rows: Vec<Vec<f64>> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let t = pts[i];
            (0..n)
                .map(|k| {
                    if k < i {
                        let mid = 0.5 * (pts[k] + pts[k + 1]);
                        kernel_kh(h, t, mid).unwrap()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            a[(i, k)] = v;
        }
    }
    Ok(a)
}

/// Applies precomputed Volterra weights to one vector of driver
/// increments; returns the path including the origin.
pub fn volterra_path(weights: &DMatrix<f64>, dw: &[f64]) -> Result<Vec<f64>> {
    let n = weights.nrows();
    if dw.len() != n {
        return Err(Error::invalid(format!(
            "driver has {} increments, weights expect {n}",
            dw.len()
        )));
    }
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    for i in 0..n {
        let mut acc = 0.0;
        for k in 0..i + 1 {
            acc += weights[(i, k)] * dw[k];
        }
        path.push(acc);
    }
    Ok(path)
}

/// Kernel-based (Volterra) fBm sampling: Gaussian driver increments
/// pushed through [`volterra_weight_matrix`].
pub fn sample_fbm_volterra(
    h: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    component: u64,
) -> Result<Vec<Vec<f64>>> {
    let weights = volterra_weight_matrix(h, grid)?;
    let n = grid.len() - 1;
    let steps: Vec<f64> = (0..n).map(|k| grid.step(k)).collect();
    let paths: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed, StreamId::new(p, component));
            let dw: Vec<f64> = steps
                .iter()
                .map(|&dt| dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            volterra_path(&weights, &dw).unwrap()
        })
        .collect();
    Ok(paths)
}

/// `Var[B_{t_i} | B_{t_j}, j ∈ cond]` via the Schur complement of the
/// covariance matrix on positive times `times`.
pub fn conditional_variance(h: f64, times: &[f64], target: usize, cond: &[usize]) -> Result<f64> {
    if target >= times.len() {
        return Err(Error::invalid("target index out of range"));
    }
    if cond.contains(&target) {
        return Err(Error::invalid("target index must not be conditioned on"));
    }
    let var = rh_cov(h, times[target], times[target])?;
    if cond.is_empty() {
        return Ok(var);
    }
    for &j in cond {
        if j >= times.len() {
            return Err(Error::invalid(format!("conditioning index {j} out of range")));
        }
    }
    let m = cond.len();
    let sigma = DMatrix::from_fn(m, m, |a, b| {
        rh_cov(h, times[cond[a]], times[cond[b]]).unwrap()
    });
    let r = DVector::from_fn(m, |a, _| rh_cov(h, times[target], times[cond[a]]).unwrap());
    let chol = cholesky_with_jitter(sigma).map_err(|_| {
        Error::Factorization(format!(
            "conditioning block on indices {cond:?} is numerically singular"
        ))
    })?;
    let w = chol.solve(&r);
    Ok(var - r.dot(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_reduces_to_brownian_at_h_half() {
        // At H = 1/2 the formula collapses to min(t, s).
        assert_relative_eq!(rh_cov(0.5, 0.7, 0.3).unwrap(), 0.3, max_relative = 1e-14);
        assert_relative_eq!(rh_cov(0.5, 0.2, 0.9).unwrap(), 0.2, max_relative = 1e-14);
    }

    #[test]
    fn covariance_diagonal_and_symmetry() {
        for &h in &[0.05, 0.1, 0.3, 0.45] {
            assert_relative_eq!(rh_cov(h, 1.0, 1.0).unwrap(), 1.0, max_relative = 1e-14);
            assert_relative_eq!(
                rh_cov(h, 0.8, 0.8).unwrap(),
                0.8f64.powf(2.0 * h),
                max_relative = 1e-14
            );
            assert_relative_eq!(
                rh_cov(h, 0.4, 0.9).unwrap(),
                rh_cov(h, 0.9, 0.4).unwrap(),
                max_relative = 1e-14
            );
        }
        assert!(rh_cov(0.0, 1.0, 1.0).is_err());
        assert!(rh_cov(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(kernel_kh(0.6, 1.0, 0.5).is_err());
        assert!(kernel_kh(0.3, 0.5, 0.5).is_err());
        assert!(kernel_kh(0.3, 0.5, 0.7).is_err());
        assert!(kernel_kh(0.3, 0.5, 0.0).is_err());
    }

    /// Independent oracle for the kernel-covariance identity
    /// `∫_0^s K(t,u) K(s,u) du = R_H(t,s)`: the integrand has algebraic
    /// singularities `u^{2H-1}` at the origin and `(s-u)^{H-1/2}` at the
    /// upper limit, handled by the graded endpoint quadrature.
    fn kernel_cov_quadrature(h: f64, t: f64, s: f64, tol: f64) -> f64 {
        let smooth = |u: f64| {
            kernel_kh(h, t, u).unwrap()
                * kernel_kh(h, s, u).unwrap()
                * u.powf(1.0 - 2.0 * h)
                * (s - u).powf(0.5 - h)
        };
        quad::integrate_power_endpoints(&smooth, 0.0, s, 2.0 * h - 1.0, h - 0.5, tol).unwrap()
    }

    #[test]
    fn kernel_reproduces_covariance_pointwise() {
        for &(h, t, s) in &[(0.3, 1.0, 0.6), (0.1, 0.9, 0.4)] {
            let lhs = kernel_cov_quadrature(h, t, s, 1e-8);
            let rhs = rh_cov(h, t, s).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-5);
        }
    }

    #[test]
    fn kernel_variance_identity_on_diagonal() {
        // ∫_0^t K(t,u)^2 du = t^{2H}; the squared kernel has endpoint
        // exponents 2H-1 at u=0 and 2H-1 at u=t.
        for &(h, t) in &[(0.2, 1.0), (0.4, 0.7)] {
            let smooth = |u: f64| {
                let k = kernel_kh(h, t, u).unwrap();
                k * k * u.powf(1.0 - 2.0 * h) * (t - u).powf(1.0 - 2.0 * h)
            };
            let v = quad::integrate_power_endpoints(
                &smooth,
                0.0,
                t,
                2.0 * h - 1.0,
                2.0 * h - 1.0,
                1e-8,
            )
            .unwrap();
            assert_relative_eq!(v, t.powf(2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn cholesky_sampler_starts_at_zero_and_is_reproducible() {
        let grid = TimeGrid::uniform(1.0, 16).unwrap();
        let a = sample_fbm_cholesky(0.3, &grid, 4, 42, 0).unwrap();
        let b = sample_fbm_cholesky(0.3, &grid, 4, 42, 0).unwrap();
        assert_eq!(a, b);
        for path in &a {
            assert_eq!(path[0], 0.0);
            assert_eq!(path.len(), grid.len());
        }
        let c = sample_fbm_cholesky(0.3, &grid, 4, 43, 0).unwrap();
        assert_ne!(a[0], c[0]);
    }

    #[test]
    fn cholesky_sampler_variance_sanity() {
        // Coarse MC sanity band; the tight 4·SE statistical checks live in
        // the acceptance suite.
        let grid = TimeGrid::uniform(1.0, 32).unwrap();
        let paths = sample_fbm_cholesky(0.3, &grid, 4000, 7, 0).unwrap();
        let last: Vec<f64> = paths.iter().map(|p| *p.last().unwrap()).collect();
        let var = last.iter().map(|x| x * x).sum::<f64>() / last.len() as f64;
        // SE of the variance estimate ≈ sqrt(2/n) ≈ 0.022.
        assert!((var - 1.0).abs() < 5.0 * (2.0 / 4000.0f64).sqrt(), "var={var}");
    }

    #[test]
    fn volterra_zero_driver_gives_zero_path() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let w = volterra_weight_matrix(0.2, &grid).unwrap();
        let path = volterra_path(&w, &[0.0; 8]).unwrap();
        assert!(path.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn volterra_unit_driver_equals_row_sums() {
        // All-increments-one driver: path value at t_i must equal the
        // direct sum Σ_{k<i} K(t_i, m_k), computed here independently of
        // the matrix code path.
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let h = 0.25;
        let w = volterra_weight_matrix(h, &grid).unwrap();
        let path = volterra_path(&w, &[1.0; 8]).unwrap();
        let pts = grid.points();
        for i in 1..pts.len() {
            let direct: f64 = (0..i)
                .map(|k| kernel_kh(h, pts[i], 0.5 * (pts[k] + pts[k + 1])).unwrap())
                .sum();
            assert_relative_eq!(path[i], direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn conditional_variance_brownian_oracle() {
        // For H = 1/2 (independent increments): Var[B_t | B_s] = t - s.
        let times = [0.25, 0.5, 1.0];
        let v = conditional_variance(0.5, &times, 2, &[1]).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-10);
        // Conditioning on the past adds nothing more for BM.
        let v2 = conditional_variance(0.5, &times, 2, &[0, 1]).unwrap();
        assert_relative_eq!(v2, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn conditional_variance_monotone_in_conditioning_set() {
        let times: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
        for &h in &[0.1, 0.3, 0.45] {
            let mut prev = conditional_variance(h, &times, 7, &[]).unwrap();
            for m in 1..7 {
                let cond: Vec<usize> = (0..m).collect();
                let v = conditional_variance(h, &times, 7, &cond).unwrap();
                assert!(
                    v <= prev + 1e-12,
                    "H={h}: variance increased from {prev} to {v} with |S|={m}"
                );
                prev = v;
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let times: Vec<f64> = (1..=MAX_DENSE_GRID + 1).map(|k| k as f64).collect();
        assert!(matches!(
            covariance_matrix(0.3, &times),
            Err(Error::InvalidParameter(_))
        ));
    }
}
