//! Shuffle-permutation combinatorics, iterated simplex quadrature, the
//! Gamma-product evaluation of weighted Dirichlet integrals, and the
//! kernel-difference bound checks they feed.
//!
//! A shuffle of blocks of sizes `(m₁,…,m_k)` is a permutation of
//! `{1,…,m₁+⋯+m_k}` that is increasing on each block's index range;
//! summing iterated integrals over all shuffles converts a product of
//! simplex integrals into a single higher-dimensional simplex integral.

use std::cell::RefCell;

use statrs::function::gamma::gamma;

use crate::fbm;
use crate::quad;
use crate::{Error, Result};

/// Hard cap on the total block size for exhaustive enumeration.
pub const MAX_SHUFFLE_SIZE: usize = 12;

/// The set of shuffle permutations of blocks `(m₁,…,m_k)`.
#[derive(Debug, Clone)]
pub struct ShuffleSet {
    pub block_sizes: Vec<usize>,
    /// Each permutation maps original index `i` (blocks concatenated,
    /// 0-based) to its position in the merged word; every permutation is
    /// increasing on each block's index range.
    pub perms: Vec<Vec<usize>>,
}

impl ShuffleSet {
    pub fn total_size(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// `(m₁+⋯+m_k)! / (m₁!⋯m_k!)` — the exact cardinality.
    pub fn multinomial(&self) -> u64 {
        multinomial(&self.block_sizes)
    }

    /// For each permutation, the factor assignment: `assignment[p][j]`
    /// is the original factor index placed at merged position `j`.
    pub fn assignments(&self) -> Vec<Vec<usize>> {
        let m = self.total_size();
        self.perms
            .iter()
            .map(|perm| {
                let mut a = vec![0usize; m];
                for (orig, &pos) in perm.iter().enumerate() {
                    a[pos] = orig;
                }
                a
            })
            .collect()
    }
}

fn multinomial(block_sizes: &[usize]) -> u64 {
    let mut value: u64 = 1;
    let mut placed: u64 = 0;
    for &m in block_sizes {
        for i in 1..=m as u64 {
            placed += 1;
            // value * C(placed, i) built incrementally: multiply by
            // placed, divide by i (always exact at this point).
            value = value * placed / i;
        }
    }
    value
}

/// Exhaustively enumerates all shuffle permutations of the given blocks.
pub fn enumerate_shuffles(block_sizes: &[usize]) -> Result<ShuffleSet> {
    if block_sizes.is_empty() || block_sizes.iter().any(|&m| m == 0) {
        return Err(Error::invalid("block sizes must be positive"));
    }
    let m: usize = block_sizes.iter().sum();
    if m > MAX_SHUFFLE_SIZE {
        return Err(Error::invalid(format!(
            "total block size {m} exceeds the enumeration budget {MAX_SHUFFLE_SIZE}"
        )));
    }
    // Enumerate words over block labels with the given multiplicities;
    // each word corresponds to exactly one shuffle permutation.
    let k = block_sizes.len();
    let mut remaining = block_sizes.to_vec();
    let mut word = Vec::with_capacity(m);
    let mut words: Vec<Vec<usize>> = Vec::new();
    fn rec(
        remaining: &mut [usize],
        word: &mut Vec<usize>,
        m: usize,
        words: &mut Vec<Vec<usize>>,
    ) {
        if word.len() == m {
            words.push(word.clone());
            return;
        }
        for b in 0..remaining.len() {
            if remaining[b] > 0 {
                remaining[b] -= 1;
                word.push(b);
                rec(remaining, word, m, words);
                word.pop();
                remaining[b] += 1;
            }
        }
    }
    rec(&mut remaining, &mut word, m, &mut words);
    // Block b's c-th element sits at the position of the c-th occurrence
    // of b in the word; this is automatically increasing within blocks.
    let mut offsets = vec![0usize; k];
    for b in 1..k {
        offsets[b] = offsets[b - 1] + block_sizes[b - 1];
    }
    let perms = words
        .iter()
        .map(|w| {
            let mut perm = vec![0usize; m];
            let mut seen = vec![0usize; k];
            for (pos, &b) in w.iter().enumerate() {
                perm[offsets[b] + seen[b]] = pos;
                seen[b] += 1;
            }
            perm
        })
        .collect();
    let set = ShuffleSet { block_sizes: block_sizes.to_vec(), perms };
    assert_eq!(
        set.perms.len() as u64,
        set.multinomial(),
        "enumeration does not match the multinomial cardinality"
    );
    Ok(set)
}

/// The restricted shuffle set: permutations of `S(m₁,…,m_k)` that fix
/// every index `l` with `m_{1:i} + j_i ≤ l ≤ m_{1:i+1}` (1-based) for
/// `i = 1,…,k−1`, where `1 ≤ j_i ≤ m_{i+1}`.
pub fn restricted_shuffles(block_sizes: &[usize], js: &[usize]) -> Result<ShuffleSet> {
    let full = enumerate_shuffles(block_sizes)?;
    let k = block_sizes.len();
    if js.len() != k - 1 {
        return Err(Error::invalid("need one index per block after the first"));
    }
    for (i, &j) in js.iter().enumerate() {
        if j == 0 || j > block_sizes[i + 1] {
            return Err(Error::invalid("restriction index out of range"));
        }
    }
    let mut prefix = vec![0usize; k + 1];
    for b in 0..k {
        prefix[b + 1] = prefix[b] + block_sizes[b];
    }
    let perms: Vec<Vec<usize>> = full
        .perms
        .into_iter()
        .filter(|perm| {
            (1..k).all(|i| {
                // 1-based l in [m_{1:i} + j_i, m_{1:i+1}] must be fixed.
                let lo = prefix[i] + js[i - 1];
                let hi = prefix[i + 1];
                (lo..=hi).all(|l| perm[l - 1] == l - 1)
            })
        })
        .collect();
    Ok(ShuffleSet { block_sizes: block_sizes.to_vec(), perms })
}

/// Integrand over the simplex `θ < s₁ < ⋯ < s_m < t`:
/// `Π_j f_j(s_j) |s_j − s_{j−1}|^{w_j}` with `s₀ = θ`.
pub struct SimplexIntegrand<'a> {
    pub factors: Vec<&'a (dyn Fn(f64) -> f64 + Sync)>,
    /// Consecutive-gap exponents `w_j` (each > −1).
    pub gap_exponents: Vec<f64>,
    /// Known power behavior of `f_j` near `θ` (`f_j(s) ~ c (s−θ)^order`);
    /// 0 for factors smooth at `θ`. Informs the graded substitutions.
    pub singular_orders: Vec<f64>,
    pub theta: f64,
    pub t: f64,
}

impl<'a> SimplexIntegrand<'a> {
    /// Smooth factors with gap weights.
    pub fn new(
        factors: Vec<&'a (dyn Fn(f64) -> f64 + Sync)>,
        gap_exponents: Vec<f64>,
        theta: f64,
        t: f64,
    ) -> Result<Self> {
        let orders = vec![0.0; factors.len()];
        SimplexIntegrand::with_singular_orders(factors, gap_exponents, orders, theta, t)
    }

    pub fn with_singular_orders(
        factors: Vec<&'a (dyn Fn(f64) -> f64 + Sync)>,
        gap_exponents: Vec<f64>,
        singular_orders: Vec<f64>,
        theta: f64,
        t: f64,
    ) -> Result<Self> {
        let m = factors.len();
        if m == 0 || gap_exponents.len() != m || singular_orders.len() != m {
            return Err(Error::invalid("factor, exponent and order counts must agree"));
        }
        if gap_exponents.iter().any(|&w| !(w > -1.0)) {
            return Err(Error::invalid("gap exponents must exceed -1"));
        }
        if !(theta < t) || !theta.is_finite() || !t.is_finite() {
            return Err(Error::invalid("need θ < t finite"));
        }
        Ok(SimplexIntegrand { factors, gap_exponents, singular_orders, theta, t })
    }

    pub fn dimension(&self) -> usize {
        self.factors.len()
    }
}

/// Per-level absolute quadrature tolerance.
const SIMPLEX_LEVEL_TOL: f64 = 1e-9;
/// Iterated-quadrature dimension budget.
pub const MAX_SIMPLEX_DIM: usize = 5;

/// Iterated 1D quadrature of a simplex integrand, innermost variable
/// out, with graded substitutions at the power endpoints of every level.
pub fn simplex_quad(ig: &SimplexIntegrand) -> Result<f64> {
    simplex_quad_tol(ig, SIMPLEX_LEVEL_TOL)
}

/// [`simplex_quad`] with an explicit per-level absolute tolerance. The
/// nested levels multiply the work of the adaptive quadrature, so a
/// looser tolerance buys a large speedup when only a few digits are
/// needed (e.g. checking an analytic bound with a generous margin).
pub fn simplex_quad_tol(ig: &SimplexIntegrand, level_tol: f64) -> Result<f64> {
    let m = ig.dimension();
    if m > MAX_SIMPLEX_DIM {
        return Err(Error::invalid(format!(
            "simplex dimension {m} exceeds the iterated-quadrature budget {MAX_SIMPLEX_DIM}"
        )));
    }
    // Lower-endpoint exponents per level: level j (0-based) integrates
    // s_{j+1}; its integrand behaves like (s−θ)^{alpha[j]} at θ and
    // carries the next gap weight (s_up−s)^{beta[j]} at the top.
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m];
    let mut rho = 0.0; // exponent of the inner value at θ after level j
    for j in 0..m {
        let own = ig.singular_orders[j] + if j == 0 { ig.gap_exponents[0] } else { rho };
        alpha[j] = own;
        beta[j] = if j + 1 < m { ig.gap_exponents[j + 1] } else { 0.0 };
        if !(alpha[j] > -1.0) {
            return Err(Error::Quadrature(format!(
                "level {} has non-integrable endpoint exponent {}",
                j + 1,
                alpha[j]
            )));
        }
        rho = alpha[j] + beta[j] + 1.0;
    }
    let failure: RefCell<Option<(usize, Error)>> = RefCell::new(None);
    let value = level_integral(ig, m - 1, ig.t, &alpha, &beta, level_tol, &failure);
    if let Some((lvl, err)) = failure.into_inner() {
        return Err(Error::Quadrature(format!(
            "iterated quadrature failed at level {lvl}: {err}"
        )));
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("simplex quadrature produced a non-finite value".into()));
    }
    Ok(value)
}

/// `∫_θ^{s_up} inner_{j-1}(s) f_j(s) (s−θ)^{w₁ if j=0} (s_up−s)^{β_j} ds`
/// with the power factors handled by the graded quadrature.
fn level_integral(
    ig: &SimplexIntegrand,
    j: usize,
    s_up: f64,
    alpha: &[f64],
    beta: &[f64],
    level_tol: f64,
    failure: &RefCell<Option<(usize, Error)>>,
) -> f64 {
    let theta = ig.theta;
    // Smooth remainder: full integrand divided by the power factors the
    // graded quadrature supplies itself.
    let smooth = |s: f64| {
        if failure.borrow().is_some() {
            return 0.0;
        }
        let inner = if j == 0 {
            1.0
        } else {
            level_integral(ig, j - 1, s, alpha, beta, level_tol, failure)
        };
        let d = s - theta;
        // Peel the declared power behavior off f_j, and (for j > 0) the
        // accumulated power ρ_{j-1} = alpha_j − σ_j off the inner value,
        // so the graded quadrature sees only the smooth remainder.
        let f_val = (ig.factors[j])(s) * d.powf(-ig.singular_orders[j]);
        let inner_pow = if j == 0 { 0.0 } else { alpha[j] - ig.singular_orders[j] };
        inner * f_val * d.powf(-inner_pow)
    };
    match quad::integrate_power_endpoints(&smooth, theta, s_up, alpha[j], beta[j], level_tol) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert((j + 1, e));
            0.0
        }
    }
}

/// Verifies the product-to-shuffle identity for two blocks of smooth
/// factors: the product of the two simplex integrals against the sum of
/// merged simplex integrals over all shuffles.
pub struct ShuffleIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
}

pub fn shuffle_identity_check(
    factors: &[&(dyn Fn(f64) -> f64 + Sync)],
    m1: usize,
    m2: usize,
    theta: f64,
    t: f64,
) -> Result<ShuffleIdentity> {
    if m1 + m2 > 6 {
        return Err(Error::invalid("m₁+m₂ ≤ 6 for the identity check"));
    }
    if factors.len() != m1 + m2 {
        return Err(Error::invalid("need one factor per block slot"));
    }
    let block1 = SimplexIntegrand::new(factors[..m1].to_vec(), vec![0.0; m1], theta, t)?;
    let block2 = SimplexIntegrand::new(factors[m1..].to_vec(), vec![0.0; m2], theta, t)?;
    let lhs = simplex_quad(&block1)? * simplex_quad(&block2)?;
    let shuffles = enumerate_shuffles(&[m1, m2])?;
    let m = m1 + m2;
    let mut rhs = 0.0;
    for assignment in shuffles.assignments() {
        let ordered: Vec<&(dyn Fn(f64) -> f64 + Sync)> =
            assignment.iter().map(|&orig| factors[orig]).collect();
        let merged = SimplexIntegrand::new(ordered, vec![0.0; m], theta, t)?;
        rhs += simplex_quad(&merged)?;
    }
    Ok(ShuffleIdentity { lhs, rhs, abs_diff: (lhs - rhs).abs() })
}

/// Parameters of the weighted Dirichlet bound: kernel roughness, Hölder
/// split, which factors carry a kernel difference (`eps`), and the gap
/// exponents.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub h: f64,
    pub h_r0: f64,
    pub gamma: f64,
    pub eps: Vec<bool>,
    pub w: Vec<f64>,
    /// Frozen calibration constant for each kernel-difference factor
    /// (enters as `constant^{Σ eps}` so the classical case is exact).
    pub constant: f64,
}

impl BoundParams {
    pub fn new(h: f64, h_r0: f64, gamma: f64, eps: Vec<bool>, w: Vec<f64>) -> Result<Self> {
        let p = BoundParams { h, h_r0, gamma, eps, w, constant: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_constant(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("calibration constant must be positive"));
        }
        self.constant = c;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h < 0.5 && self.h_r0 > 0.0 && self.h_r0 < 0.5) {
            return Err(Error::invalid("roughness parameters must lie in (0, 1/2)"));
        }
        if !(self.gamma > 0.0 && self.gamma < self.h_r0) {
            return Err(Error::invalid("need γ ∈ (0, H_{r₀})"));
        }
        let m = self.eps.len();
        if m == 0 || self.w.len() != m {
            return Err(Error::invalid("eps flags and exponents must have equal, positive length"));
        }
        let shift = self.h_r0 - 0.5 - self.gamma;
        for (j, (&w, &e)) in self.w.iter().zip(&self.eps).enumerate() {
            let eff = w + if e { shift } else { 0.0 };
            if !(eff > -1.0) {
                return Err(Error::invalid(format!(
                    "integrability violated at slot {}: effective exponent {eff}",
                    j + 1
                )));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.eps.len()
    }
}

/// Evaluates the closed-form Gamma-product bound for the weighted
/// Dirichlet integral over the simplex `θ < s₁ < ⋯ < s_m < t` whose
/// `eps`-flagged factors are kernel differences at mollification points
/// `θ′ < θ`:
///
/// `C^{Σeps} ((θ−θ′)/(θθ′))^{γΣeps} θ^{(H−1/2−γ)Σeps} Π_γ(m) (t−θ)^{Σw+(H−1/2−γ)Σeps+m}`
///
/// where `Π_γ(m)` is the exact iterated Beta-function product, so with
/// no flagged factors the value is the classical Dirichlet integral.
pub fn dirichlet_gamma_bound(
    params: &BoundParams,
    theta_prime: f64,
    theta: f64,
    t: f64,
) -> Result<f64> {
    params.validate()?;
    let needs_prime = params.eps.iter().any(|&e| e);
    if needs_prime && !(0.0 < theta_prime && theta_prime < theta) {
        return Err(Error::invalid("need 0 < θ′ < θ when kernel differences are flagged"));
    }
    if !(theta < t) || (!needs_prime && theta < 0.0) {
        return Err(Error::invalid("need θ < t (and θ ≥ 0)"));
    }
    let m = params.dimension();
    let shift = params.h_r0 - 0.5 - params.gamma;
    let eps_sum: f64 = params.eps.iter().map(|&e| if e { 1.0 } else { 0.0 }).sum();
    // Iterated exact Beta factors: integrate s₁ out to s_m; `e` tracks
    // the running exponent of (s−θ).
    let mut factor = 1.0;
    let mut e = params.w[0] + if params.eps[0] { shift } else { 0.0 };
    for j in 1..m {
        let w_next = params.w[j];
        let (a1, a2) = (e + 1.0, w_next + 1.0);
        if a1 <= 0.0 || a2 <= 0.0 {
            return Err(Error::invalid(format!(
                "Gamma argument non-positive at slot {} (hypothesis violated)",
                j + 1
            )));
        }
        factor *= gamma(a1) * gamma(a2) / gamma(a1 + a2);
        e += w_next + 1.0 + if params.eps[j] { shift } else { 0.0 };
    }
    if e + 1.0 <= 0.0 {
        return Err(Error::invalid("final Gamma argument non-positive"));
    }
    factor /= e + 1.0;
    let prefactor = if needs_prime {
        params.constant.powf(eps_sum)
            * ((theta - theta_prime) / (theta * theta_prime)).powf(params.gamma * eps_sum)
            * theta.powf(shift * eps_sum)
    } else {
        1.0
    };
    Ok(prefactor * factor * (t - theta).powf(e + 1.0))
}

/// One kernel-difference bound evaluation plus the constant fitted on a
/// deterministic reference sweep.
#[derive(Debug, Clone)]
pub struct KernelDiffCheck {
    /// `K_H(t,t₀) − K_H(t,t₀′)` at the requested pair.
    pub lhs: f64,
    /// `((t₀−t₀′)/(t₀t₀′))^γ t₀^{H−1/2−γ} (t−t₀)^{H−1/2−γ}`.
    pub rhs_shape: f64,
    /// `max |lhs|/shape` over the reference sweep, normalized per unit
    /// horizon: the kernel's self-similarity makes the raw sweep maximum
    /// scale exactly like `t^{1/2−H+3γ}`, so that factor is divided out
    /// and the envelope at horizon `t` is `fitted_c · t^{1/2−H+3γ} · shape`.
    pub fitted_c: f64,
}

fn kernel_diff_shape(h: f64, gamma: f64, t: f64, t0: f64, t0p: f64) -> f64 {
    ((t0 - t0p) / (t0 * t0p)).powf(gamma)
        * t0.powf(h - 0.5 - gamma)
        * (t - t0).powf(h - 0.5 - gamma)
}

/// Compares the kernel increment in its second argument against the
/// Hölder-in-`t₀` envelope and fits the envelope constant on a sweep.
pub fn kernel_diff_bound_check(
    h: f64,
    gamma: f64,
    t: f64,
    t0: f64,
    t0p: f64,
) -> Result<KernelDiffCheck> {
    if !(0.0 < t0p && t0p <= t0 && t0 < t) {
        return Err(Error::invalid("need 0 < t₀′ ≤ t₀ < t"));
    }
    if !(gamma > 0.0 && gamma < h) {
        return Err(Error::invalid("need γ ∈ (0, H)"));
    }
    let lhs = if t0 == t0p {
        0.0
    } else {
        fbm::kernel_kh(h, t, t0)? - fbm::kernel_kh(h, t, t0p)?
    };
    let rhs_shape = if t0 == t0p { 0.0 } else { kernel_diff_shape(h, gamma, t, t0, t0p) };
    // Deterministic reference sweep t₀ = u·t, t₀′ = v·t₀.
    let mut fitted_c: f64 = 0.0;
    for iu in 1..=9 {
        let u = iu as f64 / 10.0;
        let a = u * t;
        let ka = fbm::kernel_kh(h, t, a)?;
        for iv in 1..=9 {
            let v = iv as f64 / 10.0;
            let b = v * a;
            let diff = (ka - fbm::kernel_kh(h, t, b)?).abs();
            fitted_c = fitted_c.max(diff / kernel_diff_shape(h, gamma, t, a, b));
        }
    }
    fitted_c /= t.powf(0.5 - h + 3.0 * gamma);
    Ok(KernelDiffCheck { lhs, rhs_shape, fitted_c })
}

/// `∫₀^t ∫₀^t (K_H(t,t₀)−K_H(t,t₀′))² / |t₀−t₀′|^{1+2β} dt₀′ dt₀` by
/// graded nested quadrature (finite for small enough `γ`, `β`; the
/// integrand is symmetric so only the ordered half is integrated).
pub fn kernel_diff_double_integral(h: f64, gamma: f64, beta: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < h && beta > 0.0 && 2.0 * gamma - 2.0 * beta > 0.0) {
        return Err(Error::invalid("need 0 < β < γ < H"));
    }
    // Tabulate K_H(t, ·) once with the (t−s)^{H-1/2} blow-up peeled off;
    // `ψ(s) = K_H(t,s)(t−s)^{1/2−H}` is bounded and continuous on [0,t].
    let n_tab = 4000usize;
    let mut psi = vec![0.0; n_tab + 1];
    for (i, p) in psi.iter_mut().enumerate().skip(1).take(n_tab - 1) {
        let s = t * i as f64 / n_tab as f64;
        *p = fbm::kernel_kh(h, t, s)? * (t - s).powf(0.5 - h);
    }
    psi[n_tab] = psi[n_tab - 1];
    let kern = |s: f64| {
        let u = (s / t * n_tab as f64).clamp(0.0, n_tab as f64 - 1e-9);
        let i = u as usize;
        let frac = u - i as f64;
        let p = psi[i] * (1.0 - frac) + psi[i + 1] * frac;
        p * (t - s).powf(h - 0.5)
    };
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    // Actual endpoint behavior: the inner integrand is bounded at both
    // ends (the kernel is C¹ in its second argument on the interior and
    // vanishes at 0); the outer integrand blows up like (t−t₀)^{2H−1}
    // as t₀ → t because K_H(t,t₀) itself does.
    let outer_hi = 2.0 * h - 1.0;
    let outer_f = |t0: f64| {
        if failure.borrow().is_some() {
            return 0.0;
        }
        // Keep t₀ off the upper endpoint where (t−t₀)^{H−1/2} overflows;
        // the graded outer quadrature weights such points negligibly.
        let t0 = t0.min(t * (1.0 - 1e-12));
        let k_t0 = kern(t0);
        let inner_f = |t0p: f64| {
            let diff = k_t0 - kern(t0p);
            diff * diff * (t0 - t0p).powf(-1.0 - 2.0 * beta)
        };
        let inner = match quad::adaptive_relative(&inner_f, 0.0, t0, 1e-5, 1e-12) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                return 0.0;
            }
        };
        inner * (t - t0).powf(-outer_hi)
    };
    let half = quad::integrate_power_endpoints(&outer_f, 0.0, t, 0.0, outer_hi, 1e-4)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !half.is_finite() {
        return Err(Error::NonFinite("double integral diverged".into()));
    }
    Ok(2.0 * half)
}
