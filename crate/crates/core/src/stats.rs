//! Tail bounds, exact binomial tails, Monte Carlo estimation and plug-in
//! conditional entropy.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::qcore::RngStream;
use crate::symbols::Trit;

/// Bootstrap resamples used by [`empirical_conditional_entropy`].
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Multiple of the bootstrap standard error reported as the half-width.
pub const BOOTSTRAP_SIGMAS: f64 = 3.0;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("confidence {0} outside (0, 1)")]
    Confidence(f64),
    #[error("trial {index} returned {value}, outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateWithCI {
    pub point: f64,
    pub half_width: f64,
    pub confidence: f64,
    pub sample_count: usize,
    /// Standard error of `point` (sample or bootstrap), for σ-based checks.
    pub std_error: f64,
}

impl EstimateWithCI {
    pub fn lower(&self) -> f64 {
        self.point - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.point + self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }
}

/// `exp(−2t²n)`.
pub fn hoeffding_tail(n: u64, t: f64) -> f64 {
    (-2.0 * t * t * n as f64).exp()
}

/// Two-sided Hoeffding half-width for the mean of `trials` values in `[0, 1]`.
pub fn hoeffding_half_width(trials: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * trials as f64)).sqrt()
}

/// Numerically stable `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Table of `ln k!` for repeated binomial work.
#[derive(Clone, Debug)]
pub struct LogFactorials(Vec<f64>);

impl LogFactorials {
    pub fn new(max: usize) -> Self {
        let mut t = Vec::with_capacity(max + 1);
        t.push(0.0);
        for k in 1..=max {
            t.push(t[k - 1] + (k as f64).ln());
        }
        LogFactorials(t)
    }

    pub fn max(&self) -> usize {
        self.0.len() - 1
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }

    /// `ln Pr[Bin(n, p) = k]`, with `ln 0 = −∞`.
    pub fn ln_pmf(&self, n: usize, k: usize, p: f64) -> f64 {
        let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
        let b = if k == n {
            0.0
        } else {
            (n - k) as f64 * (-p).ln_1p()
        };
        self.ln_choose(n, k) + a + b
    }

    /// `Pr[Bin(n, p) ≤ k]`. Requires `n ≤ self.max()`.
    pub fn lower_tail(&self, n: usize, k: usize, p: f64) -> f64 {
        if k >= n || p == 0.0 {
            return 1.0;
        }
        if p == 1.0 {
            return 0.0;
        }
        let ln = log_sum_exp((0..=k).map(|j| self.ln_pmf(n, j, p)));
        ln.exp().min(1.0)
    }
}

/// `Pr[Bin(n, p) ≤ k]`, summed in log space.
pub fn binomial_tail_exact(n: usize, k: usize, p: f64) -> f64 {
    LogFactorials::new(n).lower_tail(n, k, p)
}

/// Runs `trials` independent experiments with outputs in `[0, 1]` and
/// returns their mean with a Hoeffding interval. Trial `i` draws from
/// `rng.child(i)`, so the result does not depend on thread count.
pub fn monte_carlo<F>(
    trials: usize,
    confidence: f64,
    rng: &RngStream,
    experiment: F,
) -> Result<EstimateWithCI, StatsError>
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    if trials == 0 {
        return Err(StatsError::Empty);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Confidence(confidence));
    }
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| experiment(&mut rng.child(i as u64)))
        .collect();
    mean_with_ci(&values, confidence)
}

/// Mean of values in `[0, 1]` with a Hoeffding interval.
pub fn mean_with_ci(values: &[f64], confidence: f64) -> Result<EstimateWithCI, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Confidence(confidence));
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(StatsError::OutOfRange { index, value });
    }
    let trials = values.len();
    let n = trials as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(EstimateWithCI {
        point: mean,
        half_width: hoeffding_half_width(trials, confidence),
        confidence,
        sample_count: trials,
        std_error: (var / n).sqrt(),
    })
}

/// [`mean_with_ci`] over indicator values.
pub fn fraction_with_ci(flags: &[bool], confidence: f64) -> Result<EstimateWithCI, StatsError> {
    let v: Vec<f64> = flags.iter().map(|&b| f64::from(u8::from(b))).collect();
    mean_with_ci(&v, confidence)
}

fn entropy_term(count: usize, total: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        let c = count as f64;
        -c / total * (c / total).log2()
    }
}

/// Miller–Madow corrected plug-in `H(X|S)` from a contingency table.
fn corrected_conditional_entropy(joint: &[[usize; 3]], total: usize) -> f64 {
    let n = total as f64;
    let mut h_joint = 0.0;
    let mut h_side = 0.0;
    let (mut m_joint, mut m_side) = (0usize, 0usize);
    for row in joint {
        let s: usize = row.iter().sum();
        if s == 0 {
            continue;
        }
        m_side += 1;
        h_side += entropy_term(s, n);
        for &c in row {
            if c > 0 {
                m_joint += 1;
                h_joint += entropy_term(c, n);
            }
        }
    }
    h_joint - h_side + (m_joint as f64 - m_side as f64) / (2.0 * n * LN_2)
}

/// Plug-in estimate of `H(X|S)` in bits with the Miller–Madow correction.
///
/// The half-width is three bootstrap standard errors
/// ([`BOOTSTRAP_RESAMPLES`] resamples); `std_error` holds one. The estimate
/// is clamped to `[0, log₂|observed X support|]`.
pub fn empirical_conditional_entropy<S: Ord + Clone>(
    samples: &[(Trit, S)],
) -> Result<EstimateWithCI, StatsError> {
    empirical_conditional_entropy_with(samples, &RngStream::new(BOOTSTRAP_SEED))
}

pub fn empirical_conditional_entropy_with<S: Ord + Clone>(
    samples: &[(Trit, S)],
    rng: &RngStream,
) -> Result<EstimateWithCI, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut ids: BTreeMap<S, usize> = BTreeMap::new();
    let coded: Vec<(usize, usize)> = samples
        .iter()
        .map(|(x, s)| {
            let next = ids.len();
            let id = *ids.entry(s.clone()).or_insert(next);
            (x.index(), id)
        })
        .collect();
    let m = ids.len();
    let total = coded.len();

    let table = |picks: &mut dyn Iterator<Item = (usize, usize)>| {
        let mut joint = vec![[0usize; 3]; m];
        for (x, s) in picks {
            joint[s][x] += 1;
        }
        joint
    };
    let mut support = [false; 3];
    for &(x, _) in &coded {
        support[x] = true;
    }
    let cap = (support.iter().filter(|&&b| b).count() as f64).log2();
    let clamp = |h: f64| h.clamp(0.0, cap);

    let point = clamp(corrected_conditional_entropy(
        &table(&mut coded.iter().copied()),
        total,
    ));
    let boots: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.child(b as u64);
            let mut picks = (0..total).map(|_| {
                let i = ((r.uniform() * total as f64) as usize).min(total - 1);
                coded[i]
            });
            clamp(corrected_conditional_entropy(&table(&mut picks), total))
        })
        .collect();
    let mean = boots.iter().sum::<f64>() / boots.len() as f64;
    let sigma =
        (boots.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    Ok(EstimateWithCI {
        point,
        half_width: BOOTSTRAP_SIGMAS * sigma,
        confidence: 0.997,
        sample_count: total,
        std_error: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_values() {
        assert!((hoeffding_tail(100, 0.1) - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(hoeffding_tail(100, 0.0), 1.0);
    }

    #[test]
    fn binomial_tail_edges() {
        assert_eq!(binomial_tail_exact(10, 10, 0.3), 1.0);
        assert_eq!(binomial_tail_exact(10, 0, 0.0), 1.0);
        assert_eq!(binomial_tail_exact(10, 9, 1.0), 0.0);
        // 638/1024, summed exactly.
        assert!((binomial_tail_exact(10, 5, 0.5) - 0.623_046_875).abs() < 1e-14);
        assert!((binomial_tail_exact(5, 0, 0.5) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_handles_empty_and_large() {
        assert_eq!(log_sum_exp(Vec::new()), f64::NEG_INFINITY);
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + LN_2)).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_constant_and_deterministic() {
        let rng = RngStream::new(4);
        let one = monte_carlo(100, 0.99, &rng, |_| 1.0).unwrap();
        assert_eq!(one.point, 1.0);
        assert!(one.contains(1.0));
        let a = monte_carlo(1000, 0.99, &rng, |r| r.bit() as f64).unwrap();
        let b = monte_carlo(1000, 0.99, &rng, |r| r.bit() as f64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_rejects_bad_inputs() {
        let rng = RngStream::new(0);
        assert_eq!(monte_carlo(0, 0.9, &rng, |_| 0.0), Err(StatsError::Empty));
        assert!(matches!(
            monte_carlo(3, 1.0, &rng, |_| 0.0),
            Err(StatsError::Confidence(_))
        ));
        assert!(matches!(
            monte_carlo(3, 0.9, &rng, |_| 2.0),
            Err(StatsError::OutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn entropy_deterministic_given_side_is_zero() {
        let samples: Vec<(Trit, u8)> = (0..1000)
            .map(|i| (Trit::from_bit((i % 2) as u8), (i % 2) as u8))
            .collect();
        let e = empirical_conditional_entropy(&samples).unwrap();
        assert_eq!(e.point, 0.0);
    }

    #[test]
    fn entropy_uniform_trit_near_log3() {
        let mut r = RngStream::new(9);
        let samples: Vec<(Trit, u8)> = (0..30_000)
            .map(|_| {
                let u = r.uniform();
                let x = if u < 1.0 / 3.0 {
                    Trit::Zero
                } else if u < 2.0 / 3.0 {
                    Trit::One
                } else {
                    Trit::Bot
                };
                (x, r.bit())
            })
            .collect();
        let e = empirical_conditional_entropy(&samples).unwrap();
        assert!(e.point <= 3f64.log2());
        assert!((e.point - 3f64.log2()).abs() < 0.01, "{e:?}");
    }

    #[test]
    fn entropy_rejects_empty() {
        let s: Vec<(Trit, u8)> = Vec::new();
        assert_eq!(empirical_conditional_entropy(&s), Err(StatsError::Empty));
    }
}
