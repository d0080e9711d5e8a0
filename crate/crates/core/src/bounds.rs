//! Closed-form finite-size security quantities.
//!
//! `log` is base 2 throughout; `ln` appears only in the Hoeffding-derived
//! quantities (`ñ` and Bob's abort threshold).

use serde::Serialize;
use thiserror::Error;

use crate::stats::{log_sum_exp, LogFactorials};
use crate::wse::WseParams;

/// `1/2 + 1/(2√2)`.
pub const P_MAX: f64 = 0.853_553_390_593_273_8;
/// Smallest `p` where the radicand of ζ is nonnegative.
pub const P_MIN: f64 = 1.0 - P_MAX;
/// Gradients are refused this close to `P_MAX`, where `ζ′` diverges.
pub const ENDPOINT_GUARD: f64 = 1e-6;
/// Largest `n` accepted by the O(n²) exact abort sums.
pub const EXACT_ABORT_MAX_N: usize = 5000;
/// Offset below `1 + 1/log 7` used when the optimal α is inadmissible.
pub const ALPHA_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("{name} = {value} outside {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("p is undefined when q_⊥ = 1")]
    UndefinedP,
    #[error("frequency sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("no finite round count: delta = {delta} is not below p = {p}")]
    NoFiniteRounds { delta: f64, p: f64 },
    #[error("rates must be positive (alpha = {alpha}, C = {c})")]
    NonPositiveRate { alpha: f64, c: f64 },
    #[error("exact abort sum limited to n ≤ {EXACT_ABORT_MAX_N}, got {0}")]
    TooManyRounds(usize),
}

fn domain(name: &'static str, value: f64, range: &'static str) -> BoundsError {
    BoundsError::Domain { name, value, range }
}

fn check_open_unit(name: &'static str, v: f64) -> Result<(), BoundsError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(domain(name, v, "(0, 1)"))
    }
}

fn check_threshold(delta: f64) -> Result<(), BoundsError> {
    if delta > 0.75 && delta < P_MAX {
        Ok(())
    } else {
        Err(domain("delta", delta, "(0.75, 0.8535533906)"))
    }
}

fn radicand(p: f64) -> f64 {
    16.0 * p * (1.0 - p) - 2.0
}

/// Effective anti-commutator bound `(4p−2)·√(16p(1−p)−2)`.
pub fn zeta(p: f64) -> Result<f64, BoundsError> {
    // Rounding can leave the radicand a hair below zero at the endpoints.
    let tol = 1e-12;
    if !(p >= P_MIN - tol && p <= P_MAX + tol) {
        return Err(domain("p", p, "[0.1464466094, 0.8535533906]"));
    }
    Ok((4.0 * p - 2.0) * radicand(p).max(0.0).sqrt())
}

/// `dζ/dp`, finite only strictly inside the domain.
pub fn zeta_derivative(p: f64) -> Result<f64, BoundsError> {
    if !(p > P_MIN && p < P_MAX) {
        return Err(domain("p", p, "(0.1464466094, 0.8535533906)"));
    }
    let r = radicand(p);
    Ok(4.0 * r.sqrt() + (4.0 * p - 2.0) * (16.0 - 32.0 * p) / (2.0 * r.sqrt()))
}

/// Empirical distribution of `C` over `{0, 1, ⊥}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Frequency {
    pub q0: f64,
    pub q1: f64,
    pub q_bot: f64,
}

impl Frequency {
    pub fn new(q0: f64, q1: f64, q_bot: f64) -> Result<Self, BoundsError> {
        for (name, v) in [("q0", q0), ("q1", q1), ("q_bot", q_bot)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(domain(name, v, "[0, 1]"));
            }
        }
        let s = q0 + q1 + q_bot;
        if (s - 1.0).abs() > 1e-12 {
            return Err(BoundsError::NotNormalized(s));
        }
        Ok(Frequency { q0, q1, q_bot })
    }

    pub fn from_counts(zeros: usize, ones: usize, bots: usize) -> Result<Self, BoundsError> {
        let n = (zeros + ones + bots) as f64;
        if n == 0.0 {
            return Err(BoundsError::NotNormalized(0.0));
        }
        Self::new(zeros as f64 / n, ones as f64 / n, bots as f64 / n)
    }

    /// Win fraction among tested rounds, `q1/(1−q_⊥)`.
    pub fn p(&self) -> Result<f64, BoundsError> {
        if self.q_bot >= 1.0 {
            return Err(BoundsError::UndefinedP);
        }
        Ok(self.q1 / (1.0 - self.q_bot))
    }
}

/// `(1−μ)(1−ζ(p))/2` with `ζ` taken as 1 below `p = 3/4`.
pub fn tradeoff_f_at_p(p: f64, mu: f64) -> Result<f64, BoundsError> {
    let z = if p < 0.75 { 1.0 } else { zeta(p)? };
    Ok((1.0 - mu) * (1.0 - z) / 2.0)
}

/// Min-tradeoff function evaluated on a frequency of `C`.
pub fn tradeoff_f(q: &Frequency, mu: f64) -> Result<f64, BoundsError> {
    tradeoff_f_at_p(q.p()?, mu)
}

/// Tradeoff value at the honest frequency with win fraction `δ`. Accepts the
/// closed interval so the endpoints can be probed.
pub fn threshold_tradeoff(delta: f64, mu: f64) -> Result<f64, BoundsError> {
    if !(0.75..=P_MAX).contains(&delta) {
        return Err(domain("delta", delta, "[0.75, 0.8535533906]"));
    }
    tradeoff_f_at_p(delta, mu)
}

/// Tangent plane of the tradeoff function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AffineTradeoff {
    /// Partial derivatives in `q0, q1, q_⊥` order.
    pub gradient: [f64; 3],
    pub intercept: f64,
    pub point: Frequency,
}

impl AffineTradeoff {
    pub fn eval(&self, q: &Frequency) -> f64 {
        self.intercept
            + self.gradient[0] * q.q0
            + self.gradient[1] * q.q1
            + self.gradient[2] * q.q_bot
    }
}

/// Point expected from honest devices winning a fraction `δ` of tests:
/// `(μ(1−δ), μδ, 1−μ)`, so that `p = δ`.
pub fn honest_frequency(delta: f64, mu: f64) -> Frequency {
    Frequency {
        q0: mu * (1.0 - delta),
        q1: mu * delta,
        q_bot: 1.0 - mu,
    }
}

/// First-order expansion of the tradeoff function at [`honest_frequency`].
pub fn affine_tradeoff_at(delta: f64, mu: f64) -> Result<AffineTradeoff, BoundsError> {
    check_threshold(delta)?;
    check_open_unit("mu", mu)?;
    if delta > P_MAX - ENDPOINT_GUARD {
        return Err(domain("delta", delta, "at least 1e-6 below 0.8535533906"));
    }
    let point = honest_frequency(delta, mu);
    let dz = zeta_derivative(delta)?;
    // p = q1/(1−q⊥): ∂p/∂q1 = 1/μ, ∂p/∂q⊥ = δ/μ at the tangent point.
    let df_dp = -(1.0 - mu) * dz / 2.0;
    let gradient = [0.0, df_dp / mu, df_dp * delta / mu];
    let value = tradeoff_f_at_p(delta, mu)?;
    let intercept =
        value - gradient[0] * point.q0 - gradient[1] * point.q1 - gradient[2] * point.q_bot;
    Ok(AffineTradeoff {
        gradient,
        intercept,
        point,
    })
}

/// `‖∇f̄‖∞` at the tangent point.
pub fn grad_inf_norm(delta: f64, mu: f64) -> Result<f64, BoundsError> {
    let a = affine_tradeoff_at(delta, mu)?;
    Ok(a.gradient.iter().fold(0.0, |m: f64, g| m.max(g.abs())))
}

/// `1 − √(1−(ε/4)²)` without cancellation.
pub fn smoothing_gap(eps: f64) -> f64 {
    let e2 = (eps / 4.0).powi(2);
    e2 / (1.0 + (1.0 - e2).sqrt())
}

/// EAT second-order penalty
/// `2(log(1+2·d_A·d_C) + ⌈g⌉)·√(1 − 2·log(ε·p_Ω))`.
pub fn eat_penalty_v(
    eps: f64,
    p_omega: f64,
    grad_norm: f64,
    d_a: u64,
    d_c: u64,
) -> Result<f64, BoundsError> {
    check_open_unit("eps", eps)?;
    if !(p_omega > 0.0 && p_omega <= 1.0) {
        return Err(domain("p_omega", p_omega, "(0, 1]"));
    }
    if d_a == 0 || d_c == 0 {
        return Err(domain("d", 0.0, "[1, ∞)"));
    }
    if !(grad_norm >= 0.0 && grad_norm.is_finite()) {
        return Err(domain("grad_norm", grad_norm, "[0, ∞)"));
    }
    let lead = (1.0 + 2.0 * (d_a * d_c) as f64).log2() + grad_norm.ceil();
    Ok(2.0 * lead * (1.0 - 2.0 * (eps * p_omega).log2()).sqrt())
}

/// Coefficient of `√n` in [`hmax_bound`]: `2·log 7·√(−log(p_Ω²·g(ε)))`.
pub fn hmax_sqrt_coefficient(eps: f64, p_omega: f64) -> f64 {
    2.0 * 7f64.log2() * (-(p_omega * p_omega * smoothing_gap(eps)).log2()).sqrt()
}

/// Full second-order term with `p_Ω` left free.
pub fn vbar_with(eps: f64, p_omega: f64, delta: f64, mu: f64) -> Result<f64, BoundsError> {
    let g = grad_inf_norm(delta, mu)?;
    Ok(eat_penalty_v(eps, p_omega, g, 3, 3)? + hmax_sqrt_coefficient(eps, p_omega))
}

/// `v̄(ε)`: [`vbar_with`] at `p_Ω = ε`.
pub fn vbar(eps: f64, delta: f64, mu: f64) -> Result<f64, BoundsError> {
    vbar_with(eps, eps, delta, mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HmaxBound {
    pub value: f64,
    pub alpha: f64,
    /// The unconstrained optimum violated `α < 1 + 1/log 7`.
    pub alpha_clamped: bool,
}

/// Upper bound on the smooth max-entropy of the test register.
pub fn hmax_bound(n: usize, mu: f64, eps: f64, p_omega: f64) -> Result<HmaxBound, BoundsError> {
    if n == 0 {
        return Err(domain("n", 0.0, "[1, ∞)"));
    }
    check_open_unit("mu", mu)?;
    check_open_unit("eps", eps)?;
    if !(p_omega > 0.0 && p_omega <= 1.0) {
        return Err(domain("p_omega", p_omega, "(0, 1]"));
    }
    let nf = n as f64;
    let log7 = 7f64.log2();
    let l = -(p_omega * p_omega * smoothing_gap(eps)).log2();
    let alpha_opt = 1.0 + (l / (nf * log7 * log7)).sqrt();
    let alpha_cap = 1.0 + 1.0 / log7;
    if alpha_opt < alpha_cap {
        Ok(HmaxBound {
            value: mu * nf + 2.0 * nf.sqrt() * log7 * l.sqrt(),
            alpha: alpha_opt,
            alpha_clamped: false,
        })
    } else {
        let alpha = alpha_cap - ALPHA_MARGIN;
        Ok(HmaxBound {
            value: mu * nf + nf * (alpha - 1.0) * log7 * log7 + l / (alpha - 1.0),
            alpha,
            alpha_clamped: true,
        })
    }
}

/// `μn + √(n·ln(1/ε)/2)`.
pub fn bob_abort_threshold(n: usize, mu: f64, eps: f64) -> f64 {
    let nf = n as f64;
    mu * nf + (nf * (1.0 / eps).ln() / 2.0).sqrt()
}

/// `ñ = (1−μ)n − √(n·ln(1/ε)/2)`.
pub fn n_tilde(n: usize, mu: f64, eps: f64) -> f64 {
    let nf = n as f64;
    (1.0 - mu) * nf - (nf * (1.0 / eps).ln() / 2.0).sqrt()
}

fn abort_rate(mu: f64, delta: f64, p: f64) -> f64 {
    mu * (1.0 - (-2.0 * (p - delta).powi(2)).exp())
}

/// `(1 − μ(1 − e^{−2(p−δ)²}))ⁿ`; 1 when `p ≤ δ`.
pub fn alice_abort_bound(n: usize, mu: f64, delta: f64, p: f64) -> f64 {
    if p <= delta {
        return 1.0;
    }
    (n as f64 * (-abort_rate(mu, delta, p)).ln_1p()).exp()
}

fn check_exact_inputs(n: usize, mu: f64, p: f64) -> Result<(), BoundsError> {
    if n > EXACT_ABORT_MAX_N {
        return Err(BoundsError::TooManyRounds(n));
    }
    check_open_unit("mu", mu)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(domain("p", p, "[0, 1]"));
    }
    Ok(())
}

fn mixture_over_tests(
    n: usize,
    mu: f64,
    p: f64,
    inner_max: impl Fn(usize) -> Option<usize>,
) -> f64 {
    let lf = LogFactorials::new(n);
    let terms = (0..=n).map(|k| {
        let outer = lf.ln_pmf(n, k, mu);
        let inner = match inner_max(k) {
            None => 0.0,
            Some(jmax) => lf.lower_tail(k, jmax, p).ln(),
        };
        outer + inner
    });
    log_sum_exp(terms).exp().min(1.0)
}

/// `Σ_k C(n,k)μᵏ(1−μ)^{n−k} Σ_{j ≤ δk} C(k,j)pʲ(1−p)^{k−j}`, the exact
/// probability that the win fraction is at most `δ`.
pub fn alice_abort_exact(n: usize, mu: f64, delta: f64, p: f64) -> Result<f64, BoundsError> {
    check_exact_inputs(n, mu, p)?;
    Ok(mixture_over_tests(n, mu, p, |k| {
        Some((delta * k as f64 + 1e-9).floor() as usize)
    }))
}

/// Exact probability of the abort rule actually run by the simulator:
/// `ω < δ`, with zero tests counting as an abort.
pub fn alice_abort_exact_strict(n: usize, mu: f64, delta: f64, p: f64) -> Result<f64, BoundsError> {
    check_exact_inputs(n, mu, p)?;
    Ok(mixture_over_tests(n, mu, p, |k| {
        if k == 0 {
            return Some(0);
        }
        let c = (delta * k as f64 - 1e-9).ceil() as usize;
        c.checked_sub(1)
    }))
}

/// `⌈ln ε / ln(1 − μ(1 − e^{−2(p−δ)²}))⌉`.
pub fn min_rounds_for_correctness(
    eps: f64,
    mu: f64,
    delta: f64,
    p: f64,
) -> Result<usize, BoundsError> {
    check_open_unit("eps", eps)?;
    check_open_unit("mu", mu)?;
    if delta >= p {
        return Err(BoundsError::NoFiniteRounds { delta, p });
    }
    let raw = eps.ln() / (-abort_rate(mu, delta, p)).ln_1p();
    Ok(raw.ceil() as usize)
}

/// `−log Σ_k max_x p(x,k)` for a table indexed `joint[x][k]`.
pub fn classical_min_entropy(joint: &[Vec<f64>]) -> Result<f64, BoundsError> {
    let cols = joint.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for row in joint {
        if row.len() != cols {
            return Err(BoundsError::NotNormalized(f64::NAN));
        }
        for &v in row {
            if v.is_nan() || v < 0.0 {
                return Err(domain("p(x,k)", v, "[0, 1]"));
            }
            total += v;
        }
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(BoundsError::NotNormalized(total));
    }
    let guess: f64 = (0..cols)
        .map(|k| joint.iter().map(|row| row[k]).fold(0.0, f64::max))
        .sum();
    Ok(-guess.log2())
}

/// `h₂(x) = −x log x − (1−x) log(1−x)`.
pub fn binary_entropy(x: f64) -> f64 {
    let term = |t: f64| if t <= 0.0 { 0.0 } else { -t * t.log2() };
    term(x) + term(1.0 - x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShannonBounds {
    pub loose: f64,
    pub tight: f64,
}

/// Lower bounds on `H(X|ΘK)` given an anti-commutator bound `ζ`.
pub fn shannon_lower_from_zeta(zeta: f64) -> Result<ShannonBounds, BoundsError> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(domain("zeta", zeta, "[0, 1]"));
    }
    Ok(ShannonBounds {
        loose: (1.0 - zeta) / 2.0,
        tight: 0.5 * binary_entropy((1.0 + zeta.sqrt()) / 2.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PvCheatBound {
    pub bound: f64,
    /// Every `κ` strictly below this is an admissible decay rate.
    pub kappa_sup: f64,
}

/// `2^{−min(α, C)·n + 1}`.
pub fn pv_cheat_bound(
    n: usize,
    alpha_decay: f64,
    hmin_rate: f64,
) -> Result<PvCheatBound, BoundsError> {
    if !(alpha_decay > 0.0 && hmin_rate > 0.0) {
        return Err(BoundsError::NonPositiveRate {
            alpha: alpha_decay,
            c: hmin_rate,
        });
    }
    let kappa_sup = alpha_decay.min(hmin_rate);
    Ok(PvCheatBound {
        bound: (-kappa_sup * n as f64 + 1.0).exp2(),
        kappa_sup,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PvComposition {
    pub eps: f64,
    pub lambda: f64,
    pub cheat: PvCheatBound,
}

/// Feeds the min-entropy rate at `ε = 2^{−αn}` into [`pv_cheat_bound`].
pub fn compose_pv_bound(
    n: usize,
    mu: f64,
    delta: f64,
    d: u64,
    alpha_decay: f64,
) -> Result<PvComposition, BoundsError> {
    let eps = (-alpha_decay * n as f64).exp2();
    let params = WseParams {
        n,
        mu,
        delta,
        eps,
        d,
    };
    let report = lambda_rate(&params)?;
    let cheat = pv_cheat_bound(n, alpha_decay, report.lambda)?;
    Ok(PvComposition {
        eps,
        lambda: report.lambda,
        cheat,
    })
}

/// All analytic quantities for one parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub params: WseParams,
    pub h: f64,
    pub grad_inf_norm: f64,
    pub vbar: f64,
    pub lambda: f64,
    pub n_tilde: f64,
    pub hmax_bound: f64,
    pub hmax_alpha: f64,
    pub hmax_alpha_clamped: bool,
    /// Evaluated for honest devices, `p = 1/2 + 1/(2√2)`.
    pub alice_abort_bound: f64,
    pub bob_abort_bound: f64,
    pub bob_threshold: f64,
    pub min_n_correctness: usize,
    pub min_entropy_bound_bits: f64,
}

impl RateReport {
    /// `λ` rebuilt from the stored components.
    pub fn recomputed_lambda(&self) -> f64 {
        let p = &self.params;
        let n = p.n as f64;
        self.h - p.mu - self.vbar / n.sqrt()
            + (3.0 * smoothing_gap(p.eps).log2() - (p.d as f64).log2()) / n
    }
}

/// `λ = h − μ − v̄/√n + (3·log g(ε) − log d)/n` plus the companion bounds.
pub fn lambda_rate(params: &WseParams) -> Result<RateReport, BoundsError> {
    let &WseParams {
        n,
        mu,
        delta,
        eps,
        d,
    } = params;
    if n == 0 {
        return Err(domain("n", 0.0, "[1, ∞)"));
    }
    check_open_unit("mu", mu)?;
    check_open_unit("eps", eps)?;
    check_threshold(delta)?;
    if d == 0 {
        return Err(domain("d", 0.0, "[1, ∞)"));
    }
    let nf = n as f64;
    let h = threshold_tradeoff(delta, mu)?;
    let grad = grad_inf_norm(delta, mu)?;
    let vb = vbar(eps, delta, mu)?;
    let tail = 3.0 * smoothing_gap(eps).log2() - (d as f64).log2();
    let lambda = h - mu - vb / nf.sqrt() + tail / nf;
    let hmax = hmax_bound(n, mu, eps, eps)?;
    Ok(RateReport {
        params: *params,
        h,
        grad_inf_norm: grad,
        vbar: vb,
        lambda,
        n_tilde: n_tilde(n, mu, eps),
        hmax_bound: hmax.value,
        hmax_alpha: hmax.alpha,
        hmax_alpha_clamped: hmax.alpha_clamped,
        alice_abort_bound: alice_abort_bound(n, mu, delta, P_MAX),
        bob_abort_bound: eps,
        bob_threshold: bob_abort_threshold(n, mu, eps),
        min_n_correctness: min_rounds_for_correctness(eps, mu, delta, P_MAX)?,
        min_entropy_bound_bits: (h - mu) * nf - vb * nf.sqrt() + tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_anchors() {
        assert!(zeta(P_MAX).unwrap().abs() < 1e-7);
        assert!((zeta(0.75).unwrap() - 1.0).abs() < 1e-15);
        assert!((zeta(0.8).unwrap() - 0.897_997_772_825_745_9).abs() < 1e-14);
        assert!(zeta(0.9).is_err());
        assert!(zeta(0.1).is_err());
    }

    #[test]
    fn tradeoff_anchors() {
        let f = tradeoff_f_at_p(0.8, 0.1).unwrap();
        assert!((f - 0.045_901_002_228_414_33).abs() < 1e-14);
        assert_eq!(tradeoff_f_at_p(0.7, 0.3).unwrap(), 0.0);
        assert!((threshold_tradeoff(P_MAX, 0.0).unwrap() - 0.5).abs() < 1e-7);
        assert_eq!(threshold_tradeoff(0.75, 0.4).unwrap(), 0.0);
        let q = Frequency::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(tradeoff_f(&q, 0.1), Err(BoundsError::UndefinedP));
    }

    #[test]
    fn frequency_validation() {
        assert!(Frequency::new(0.5, 0.6, 0.0).is_err());
        assert!(Frequency::new(-0.1, 0.6, 0.5).is_err());
        let q = Frequency::from_counts(1, 3, 6).unwrap();
        assert!((q.p().unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn affine_is_tangent() {
        let a = affine_tradeoff_at(0.8, 0.2).unwrap();
        assert_eq!(a.gradient[0], 0.0);
        let at = tradeoff_f(&a.point, 0.2).unwrap();
        assert!((a.eval(&a.point) - at).abs() < 1e-14);
        assert!((a.point.p().unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn grad_norm_anchors() {
        assert!((grad_inf_norm(0.8, 0.2).unwrap() - 9.407_595_715_317_338).abs() < 1e-9);
        assert!((grad_inf_norm(0.76, 0.5).unwrap() - 0.340_591_819_420_910_3).abs() < 1e-12);
        assert!(grad_inf_norm(P_MAX - 1e-7, 0.2).is_err());
    }

    #[test]
    fn eat_penalty_example() {
        let v = eat_penalty_v(0.01, 0.01, 2.5, 3, 3).unwrap();
        assert!((v - 76.121_080_174_526_04).abs() < 1e-9);
    }

    #[test]
    fn smoothing_gap_stable_for_tiny_eps() {
        let e = 1e-12;
        let g = smoothing_gap(e);
        assert!((g / (e * e / 32.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vbar_decomposes() {
        let (e, d, m) = (0.05, 0.8, 0.2);
        let g = grad_inf_norm(d, m).unwrap();
        let lhs = vbar(e, d, m).unwrap();
        let rhs = eat_penalty_v(e, e, g, 3, 3).unwrap() + hmax_sqrt_coefficient(e, e);
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((lhs - 148.366_994_161_895_9).abs() < 1e-9);
    }

    #[test]
    fn hmax_example_and_fallback() {
        let h = hmax_bound(10_000, 0.2, 0.05, 0.05).unwrap();
        assert!(!h.alpha_clamped);
        assert!((h.value - 4_650.693_517_557_985).abs() < 1e-8);
        assert!((h.alpha - 1.016_816_471_518_371).abs() < 1e-12);
        let small = hmax_bound(1, 0.2, 1e-6, 1e-6).unwrap();
        assert!(small.alpha_clamped);
        assert!(small.alpha < 1.0 + 1.0 / 7f64.log2());
        assert!(small.value >= 0.2);
    }

    #[test]
    fn thresholds() {
        assert!((bob_abort_threshold(100, 0.2, 0.01) - 35.174_271_293_851_46).abs() < 1e-12);
        assert!((bob_abort_threshold(100, 0.2, 1.0 - 1e-15) - 20.0).abs() < 1e-6);
        assert_eq!(alice_abort_bound(100, 0.2, 0.8, 0.8), 1.0);
    }

    #[test]
    fn min_rounds_examples() {
        assert_eq!(
            min_rounds_for_correctness(0.01, 0.2, 0.8, 0.853553).unwrap(),
            4024
        );
        assert_eq!(
            min_rounds_for_correctness(0.05, 0.2, 0.8, P_MAX).unwrap(),
            2618
        );
        assert!(
            min_rounds_for_correctness(0.01, 0.4, 0.8, P_MAX).unwrap()
                < min_rounds_for_correctness(0.01, 0.2, 0.8, P_MAX).unwrap()
        );
        assert!(matches!(
            min_rounds_for_correctness(0.01, 0.2, 0.86, P_MAX),
            Err(BoundsError::NoFiniteRounds { .. })
        ));
    }

    #[test]
    fn exact_abort_value() {
        let v = alice_abort_exact(200, 0.2, 0.8, 0.853553).unwrap();
        assert!((v - 0.180_439_648_561_366_12).abs() < 1e-10, "{v}");
        let s = alice_abort_exact_strict(200, 0.2, 0.8, 0.853553).unwrap();
        assert!(s <= v);
        assert!(alice_abort_exact(6000, 0.2, 0.8, 0.85).is_err());
    }

    #[test]
    fn min_entropy_examples() {
        let uniform: Vec<Vec<f64>> = (0..8).map(|_| vec![1.0 / 16.0; 2]).collect();
        assert!((classical_min_entropy(&uniform).unwrap() - 3.0).abs() < 1e-12);
        let copy: Vec<Vec<f64>> = (0..4)
            .map(|x| (0..4).map(|k| if x == k { 0.25 } else { 0.0 }).collect())
            .collect();
        assert!(classical_min_entropy(&copy).unwrap().abs() < 1e-12);
        assert!(classical_min_entropy(&[vec![0.5, 0.4]]).is_err());
    }

    #[test]
    fn shannon_bounds() {
        let b0 = shannon_lower_from_zeta(0.0).unwrap();
        assert!((b0.loose - 0.5).abs() < 1e-15 && (b0.tight - 0.5).abs() < 1e-15);
        let b1 = shannon_lower_from_zeta(1.0).unwrap();
        assert_eq!((b1.loose, b1.tight), (0.0, 0.0));
        let b = shannon_lower_from_zeta(0.25).unwrap();
        assert!((b.tight - 0.405_639_062_229_566_5).abs() < 1e-12);
        assert_eq!(b.loose, 0.375);
        assert!(shannon_lower_from_zeta(1.1).is_err());
    }

    #[test]
    fn pv_bound_examples() {
        let b = pv_cheat_bound(100, 0.1, 0.1).unwrap();
        assert!((b.bound - 2f64.powi(-9)).abs() < 1e-18);
        assert!(pv_cheat_bound(10, 0.0, 1.0).is_err());
    }

    #[test]
    fn lambda_anchor_and_consistency() {
        let p = WseParams {
            n: 10_000,
            mu: 0.2,
            delta: 0.8,
            eps: 0.05,
            d: 2,
        };
        let r = lambda_rate(&p).unwrap();
        assert!((r.h - 0.040_800_890_869_701_63).abs() < 1e-14);
        assert!((r.lambda - (-1.647_062_190_698_616_7)).abs() < 1e-9);
        assert!((r.recomputed_lambda() - r.lambda).abs() < 1e-9);
        let q = WseParams {
            n: 1_000_000,
            mu: 0.01,
            delta: 0.85,
            eps: 1e-6,
            d: 2,
        };
        let r = lambda_rate(&q).unwrap();
        assert!((r.lambda - (-33.941_884_745_4)).abs() < 1e-8);
    }
}
