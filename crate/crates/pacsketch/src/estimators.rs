//! Threshold, mean lower bound and verification estimators.
//!
//! All three rest on the mistake budget `k`: the largest number of
//! violations `h` for which the binomial lower tail
//! `sum_{i<=h} C(n,i) eps^i (1-eps)^(n-i)` stays at or below `delta`.
//! The tail is evaluated in log space from log-gamma based binomial
//! coefficients, so no raw coefficient is ever formed.

use crate::Real;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("{name} = {value} must lie strictly between 0 and 1")]
    Probability { name: &'static str, value: f64 },
    #[error("tail index h = {h} exceeds sample size n = {n}")]
    TailIndex { n: u64, h: u64 },
    #[error("score sample contains NaN")]
    NaN,
    #[error("the estimator needs at least one sample")]
    EmptySample,
}

fn check_probability(name: &'static str, value: f64) -> Result<(), EstimatorError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(EstimatorError::Probability { name, value })
    }
}

/// Ordered list of extended-real scores. NaN is rejected on construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSample<T> {
    values: Vec<T>,
}

impl<T: Real> ScoreSample<T> {
    pub fn new(values: Vec<T>) -> Result<Self, EstimatorError> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(EstimatorError::NaN);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values sorted in descending order; the sort is stable.
    pub fn sorted_descending(&self) -> Vec<T> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.partial_cmp(a).expect("NaN excluded on construction"));
        v
    }
}

impl<T: Real> TryFrom<Vec<T>> for ScoreSample<T> {
    type Error = EstimatorError;

    fn try_from(values: Vec<T>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

/// Sample of binary outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitSample {
    values: Vec<bool>,
}

impl BitSample {
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.values.iter().filter(|b| **b).count()
    }

    pub fn zeros(&self) -> usize {
        self.len() - self.ones()
    }
}

impl From<Vec<bool>> for BitSample {
    fn from(values: Vec<bool>) -> Self {
        Self::new(values)
    }
}

impl FromIterator<bool> for BitSample {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Largest tolerated violation count, or `NotExists` when even zero
/// violations are too likely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MistakeBudget {
    Exists(u64),
    NotExists,
}

impl MistakeBudget {
    pub fn k(self) -> Option<u64> {
        match self {
            MistakeBudget::Exists(k) => Some(k),
            MistakeBudget::NotExists => None,
        }
    }
}

/// Margin added to the selected order statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicy {
    /// Half the gap to the next strictly larger sample value, falling back
    /// to [`GammaPolicy::Minimal`] when there is no finite larger value.
    #[default]
    HalfGap,
    /// `1e-9 * (1 + |z|)`, widened to the scalar's machine epsilon when that
    /// is coarser.
    Minimal,
}

/// How the mistake budget is derived from `(n, eps, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    /// Largest `h` whose binomial tail is at most `delta`.
    #[default]
    Binomial,
    /// Baseline that tolerates no violations: `k = 0` when
    /// `(1-eps)^n <= delta`, otherwise no budget.
    ZeroMistakes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub gamma_policy: GammaPolicy,
    #[serde(default)]
    pub budget_rule: BudgetRule,
}

impl EstimatorConfig {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, EstimatorError> {
        check_probability("epsilon", epsilon)?;
        check_probability("delta", delta)?;
        Ok(Self {
            epsilon,
            delta,
            gamma_policy: GammaPolicy::default(),
            budget_rule: BudgetRule::default(),
        })
    }

    pub fn with_gamma_policy(mut self, policy: GammaPolicy) -> Self {
        self.gamma_policy = policy;
        self
    }

    pub fn with_budget_rule(mut self, rule: BudgetRule) -> Self {
        self.budget_rule = rule;
        self
    }

    pub fn mistake_budget(&self, n: u64) -> MistakeBudget {
        match self.budget_rule {
            BudgetRule::Binomial => {
                compute_k(n, self.epsilon, self.delta).expect("validated on construction")
            }
            BudgetRule::ZeroMistakes => {
                if n == 0 {
                    return MistakeBudget::NotExists;
                }
                let log_tail = log_binom_term(n, 0, self.epsilon);
                if log_tail <= self.delta.ln() {
                    MistakeBudget::Exists(0)
                } else {
                    MistakeBudget::NotExists
                }
            }
        }
    }
}

fn log_binom_term(n: u64, i: u64, eps: f64) -> f64 {
    let log_coeff = ln_binomial(n, i);
    let succ = if i == 0 { 0.0 } else { i as f64 * eps.ln() };
    let fail = if i == n { 0.0 } else { (n - i) as f64 * (-eps).ln_1p() };
    log_coeff + succ + fail
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Natural log of the binomial lower tail `P[Bin(n, eps) <= h]`.
pub fn binom_tail_log(n: u64, h: u64, eps: f64) -> Result<f64, EstimatorError> {
    check_probability("eps", eps)?;
    if h > n {
        return Err(EstimatorError::TailIndex { n, h });
    }
    let terms: Vec<f64> = (0..=h).map(|i| log_binom_term(n, i, eps)).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).min(0.0))
}

/// Mistake budget `k` by linear scan from `h = 0`, capped at `n - 1`.
pub fn compute_k(n: u64, eps: f64, delta: f64) -> Result<MistakeBudget, EstimatorError> {
    check_probability("eps", eps)?;
    check_probability("delta", delta)?;
    let log_delta = delta.ln();
    let mut log_tail = f64::NEG_INFINITY;
    let mut best = MistakeBudget::NotExists;
    for h in 0..n {
        log_tail = log_add_exp(log_tail, log_binom_term(n, h, eps));
        if log_tail <= log_delta {
            best = MistakeBudget::Exists(h);
        } else {
            break;
        }
    }
    Ok(best)
}

/// Number of samples strictly greater than `t`.
pub fn empirical_loss<T: Real>(z: &ScoreSample<T>, t: T) -> usize {
    z.values().iter().filter(|v| **v > t).count()
}

fn minimal_margin<T: Real>(z: T) -> T {
    let scale = T::from_f64(1e-9).unwrap().max(T::epsilon() * T::from_f64(2.0).unwrap());
    scale * (T::one() + z.abs())
}

/// Threshold `t` such that `P(z <= t) >= 1 - eps` with probability at least
/// `1 - delta` over the sample: the `(k+1)`-th largest value plus a margin,
/// or `+inf` when no budget exists or the sample is too short.
pub fn threshold_estimate<T: Real>(z: &ScoreSample<T>, cfg: &EstimatorConfig) -> T {
    let n = z.len();
    let k = match cfg.mistake_budget(n as u64) {
        MistakeBudget::Exists(k) => k as usize,
        MistakeBudget::NotExists => return T::infinity(),
    };
    if k + 1 > n {
        return T::infinity();
    }
    let sorted = z.sorted_descending();
    let pivot = sorted[k];
    if pivot.is_infinite() {
        // -inf + gamma = -inf and +inf + gamma = +inf for any finite gamma.
        return pivot;
    }
    let next_larger = sorted[..k].iter().rev().copied().find(|v| *v > pivot);
    let gamma = match (cfg.gamma_policy, next_larger) {
        (GammaPolicy::HalfGap, Some(next)) if next.is_finite() => {
            (next - pivot) / T::from_f64(2.0).unwrap()
        }
        _ => minimal_margin(pivot),
    };
    let t = pivot + gamma;
    if t > pivot {
        t
    } else {
        // Gap below the scalar's resolution: the pivot itself is still
        // empirically sound because the loss counts strict exceedances.
        pivot
    }
}

/// Hoeffding lower confidence bound on the mean of `z`, clamped at zero.
pub fn lower_bound_estimate<T: Real>(z: &BitSample, delta: f64) -> Result<T, EstimatorError> {
    check_probability("delta", delta)?;
    if z.is_empty() {
        return Err(EstimatorError::EmptySample);
    }
    let n = T::from_usize(z.len()).unwrap();
    let mean = T::from_usize(z.ones()).unwrap() / n;
    let two = T::from_f64(2.0).unwrap();
    let correction = (T::from_f64((1.0 / delta).ln()).unwrap() / (two * n)).sqrt();
    Ok((mean - correction).max(T::zero()))
}

/// Accepts when the number of zero bits is within the mistake budget.
pub fn verify_indicator(z: &BitSample, eps: f64, delta: f64) -> Result<bool, EstimatorError> {
    match compute_k(z.len() as u64, eps, delta)? {
        MistakeBudget::Exists(k) => Ok(z.zeros() as u64 <= k),
        MistakeBudget::NotExists => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_bigint::BigUint;
    use num_traits::{One, ToPrimitive, Zero};
    use proptest::prelude::*;

    /// Natural log of a positive big integer, accurate to f64 precision.
    fn ln_big(x: &BigUint) -> (f64, u64) {
        let bits = x.bits();
        let shift = bits.saturating_sub(64);
        let top = (x >> shift).to_f64().unwrap();
        (top.ln(), shift)
    }

    /// Exact oracle for the binomial lower tail with a rational `eps = p/q`,
    /// summing `C(n,i) p^i (q-p)^(n-i)` over `q^n` in big integers.
    fn exact_tail_log(n: u64, h: u64, p: u64, q: u64) -> f64 {
        let mut term = BigUint::from(q - p).pow(n as u32);
        let mut sum = BigUint::zero();
        for i in 0..=h {
            sum += &term;
            if i < n {
                term = term * BigUint::from(n - i) * BigUint::from(p)
                    / (BigUint::from(i + 1) * BigUint::from(q - p));
            }
        }
        let den = BigUint::from(q).pow(n as u32);
        let (ln_num, s_num) = ln_big(&sum);
        let (ln_den, s_den) = ln_big(&den);
        ln_num - ln_den + (s_num as f64 - s_den as f64) * std::f64::consts::LN_2
    }

    #[test]
    fn tail_of_full_support_is_one() {
        assert_relative_eq!(binom_tail_log(1, 1, 0.5).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tail_frozen_values() {
        // Values from a 40-digit summation.
        assert_relative_eq!(
            binom_tail_log(100, 0, 0.05).unwrap(),
            -5.129_329_438_755_053,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            binom_tail_log(100, 1, 0.05).unwrap(),
            -3.294_644_924_809_964,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            binom_tail_log(100, 2, 0.05).unwrap().exp(),
            0.118_262_981_185_120_9,
            max_relative = 1e-10
        );
    }

    #[test]
    fn tail_matches_exact_oracle_up_to_ten_thousand() {
        let cases = [
            (100, 1, 1, 20),
            (500, 16, 1, 20),
            (500, 38, 1, 10),
            (2_000, 80, 1, 20),
            (10_000, 450, 1, 20),
            (10_000, 500, 1, 20),
            (10_000, 20, 1, 100),
            (10_000, 5_000, 1, 2),
            (7, 7, 3, 4),
        ];
        for (n, h, p, q) in cases {
            let eps = p as f64 / q as f64;
            let ours = binom_tail_log(n, h, eps).unwrap();
            let exact = exact_tail_log(n, h, p, q);
            let rel = ((ours - exact).exp() - 1.0).abs();
            assert!(rel < 1e-9, "n={n} h={h} eps={eps}: rel err {rel:e}");
        }
    }

    #[test]
    fn tail_domain_errors() {
        assert!(binom_tail_log(10, 11, 0.1).is_err());
        assert!(binom_tail_log(10, 1, 0.0).is_err());
        assert!(binom_tail_log(10, 1, 1.0).is_err());
    }

    #[test]
    fn compute_k_examples() {
        assert_eq!(compute_k(100, 0.05, 0.05).unwrap(), MistakeBudget::Exists(1));
        assert_eq!(compute_k(0, 0.3, 0.05).unwrap(), MistakeBudget::NotExists);
        // 0.99^10 = 0.904 > 0.05
        assert_eq!(compute_k(10, 0.01, 0.05).unwrap(), MistakeBudget::NotExists);
        assert_eq!(compute_k(500, 0.05, 0.05).unwrap(), MistakeBudget::Exists(16));
        assert_eq!(compute_k(300, 0.05, 0.05).unwrap(), MistakeBudget::Exists(8));
        assert_eq!(compute_k(500, 0.1, 0.05).unwrap(), MistakeBudget::Exists(38));
    }

    #[test]
    fn zero_mistake_rule() {
        let cfg = EstimatorConfig::new(0.05, 0.05)
            .unwrap()
            .with_budget_rule(BudgetRule::ZeroMistakes);
        assert_eq!(cfg.mistake_budget(100), MistakeBudget::Exists(0));
        assert_eq!(cfg.mistake_budget(50), MistakeBudget::NotExists);
    }

    #[test]
    fn empirical_loss_examples() {
        let z = ScoreSample::new(vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(empirical_loss(&z, 0.5), 1);
        assert_eq!(empirical_loss(&ScoreSample::<f64>::default(), 3.0), 0);
        let z = ScoreSample::new(vec![0.9, 0.9]).unwrap();
        assert_eq!(empirical_loss(&z, f64::INFINITY), 0);
    }

    #[test]
    fn nan_rejected() {
        assert_eq!(ScoreSample::new(vec![0.1, f64::NAN]), Err(EstimatorError::NaN));
    }

    #[test]
    fn threshold_picks_second_largest_when_k_is_one() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let z = ScoreSample::new(values).unwrap();
        let cfg = EstimatorConfig::new(0.05, 0.05).unwrap();
        let t = threshold_estimate(&z, &cfg);
        // second largest is 0.98, next larger 0.99: half gap 0.005
        assert_relative_eq!(t, 0.985, epsilon = 1e-12);
        assert_eq!(empirical_loss(&z, t), 1);
    }

    #[test]
    fn threshold_fallbacks() {
        let cfg = EstimatorConfig::new(0.05, 0.05).unwrap();
        assert_eq!(threshold_estimate(&ScoreSample::<f64>::default(), &cfg), f64::INFINITY);
        let tiny_delta = EstimatorConfig::new(0.05, 1e-300).unwrap();
        let z = ScoreSample::new(vec![0.5; 100]).unwrap();
        assert_eq!(threshold_estimate(&z, &tiny_delta), f64::INFINITY);
    }

    #[test]
    fn threshold_with_sentinels_and_ties() {
        let cfg = EstimatorConfig::new(0.05, 0.05).unwrap();
        let mut v = vec![f64::NEG_INFINITY; 98];
        v.push(0.7);
        v.push(0.7);
        let z = ScoreSample::new(v).unwrap();
        // k = 1: pivot 0.7 tied with the largest value, minimal margin applies
        let t = threshold_estimate(&z, &cfg);
        assert!(t > 0.7 && t < 0.7 + 1e-8);
        assert_eq!(empirical_loss(&z, t), 0);
        let z = ScoreSample::new(vec![f64::NEG_INFINITY; 100]).unwrap();
        assert_eq!(threshold_estimate(&z, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn threshold_works_in_single_precision() {
        let values: Vec<f32> = (0..100).map(|i| i as f32 * 10.0).collect();
        let z = ScoreSample::new(values).unwrap();
        let cfg = EstimatorConfig::new(0.05, 0.05).unwrap();
        let t = threshold_estimate(&z, &cfg);
        assert_eq!(t, 985.0);
        let same = ScoreSample::new(vec![1.0e6_f32; 100]).unwrap();
        let t = threshold_estimate(&same, &cfg);
        assert!(t > 1.0e6);
        assert_eq!(empirical_loss(&same, t), 0);
    }

    #[test]
    fn lower_bound_examples() {
        let z: BitSample = (0..200).map(|i| i < 190).collect();
        let nu: f64 = lower_bound_estimate(&z, 0.05).unwrap();
        assert_relative_eq!(nu, 0.863_459_080_869_885_7, epsilon = 1e-12);
        let z: BitSample = (0..10).map(|i| i == 0).collect();
        assert_eq!(lower_bound_estimate::<f64>(&z, 0.05).unwrap(), 0.0);
        let z = BitSample::new(vec![true; 20_000]);
        let nu: f64 = lower_bound_estimate(&z, 0.5).unwrap();
        assert_relative_eq!(nu, 1.0 - (2f64.ln() / 40_000.0).sqrt(), epsilon = 1e-12);
        assert_eq!(
            lower_bound_estimate::<f64>(&BitSample::default(), 0.05),
            Err(EstimatorError::EmptySample)
        );
        let nu32: f32 = lower_bound_estimate(&(0..200).map(|i| i < 190).collect(), 0.05).unwrap();
        assert!((nu32 - 0.863_459).abs() < 1e-5);
    }

    #[test]
    fn verify_indicator_examples() {
        let one_zero: BitSample = (0..100).map(|i| i != 0).collect();
        assert!(verify_indicator(&one_zero, 0.05, 0.05).unwrap());
        let two_zeros: BitSample = (0..100).map(|i| i > 1).collect();
        assert!(!verify_indicator(&two_zeros, 0.05, 0.05).unwrap());
        assert!(!verify_indicator(&BitSample::default(), 0.05, 0.05).unwrap());
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![
                8 => -100.0..100.0f64,
                1 => Just(f64::NEG_INFINITY),
                1 => (0..5i32).prop_map(|x| x as f64),
            ],
            0..300,
        )
    }

    proptest! {
        #[test]
        fn empirical_soundness(values in scores(), eps in 0.01..0.5f64, delta in 0.01..0.5f64) {
            let z = ScoreSample::new(values).unwrap();
            let cfg = EstimatorConfig::new(eps, delta).unwrap();
            let t = threshold_estimate(&z, &cfg);
            if let MistakeBudget::Exists(k) = cfg.mistake_budget(z.len() as u64) {
                prop_assert!(empirical_loss(&z, t) as u64 <= k);
            } else {
                prop_assert_eq!(t, f64::INFINITY);
            }
        }

        #[test]
        fn zero_mistake_baseline_is_never_lower(values in scores(), eps in 0.01..0.5f64, delta in 0.01..0.5f64) {
            let z = ScoreSample::new(values).unwrap();
            let full = EstimatorConfig::new(eps, delta).unwrap();
            let zero = full.with_budget_rule(BudgetRule::ZeroMistakes);
            prop_assert!(threshold_estimate(&z, &zero) >= threshold_estimate(&z, &full));
        }

        #[test]
        fn tail_is_monotone_in_h(n in 1u64..400, eps in 0.001..0.999f64) {
            let mut prev = f64::NEG_INFINITY;
            for h in 0..=n.min(60) {
                let t = binom_tail_log(n, h, eps).unwrap();
                prop_assert!(t >= prev - 1e-12);
                prev = t;
            }
        }

        #[test]
        fn budget_is_below_n(n in 0u64..2000, eps in 0.001..0.999f64, delta in 0.001..0.999f64) {
            if let MistakeBudget::Exists(k) = compute_k(n, eps, delta).unwrap() {
                prop_assert!(k < n);
                prop_assert!(binom_tail_log(n, k, eps).unwrap() <= delta.ln() + 1e-12);
                if k + 1 < n {
                    prop_assert!(binom_tail_log(n, k + 1, eps).unwrap() > delta.ln());
                }
            }
        }

        #[test]
        fn removing_the_largest_sample_never_raises_a_finite_threshold(values in scores(), eps in 0.02..0.3f64) {
            let cfg = EstimatorConfig::new(eps, 0.1).unwrap();
            let z = ScoreSample::new(values).unwrap();
            let mut sorted = z.sorted_descending();
            prop_assume!(!sorted.is_empty());
            sorted.remove(0);
            let fewer = threshold_estimate(&ScoreSample::new(sorted).unwrap(), &cfg);
            if fewer != f64::INFINITY {
                prop_assert!(fewer <= threshold_estimate(&z, &cfg));
            }
        }

        #[test]
        fn raising_one_sample_never_lowers_the_threshold(values in scores(), pick in any::<prop::sample::Index>(), bump in 0.0..50.0f64) {
            prop_assume!(!values.is_empty());
            let cfg = EstimatorConfig::new(0.1, 0.1).unwrap();
            let mut raised = values.clone();
            let i = pick.index(raised.len());
            raised[i] = if raised[i] == f64::NEG_INFINITY { -200.0 } else { raised[i] + bump };
            let before = threshold_estimate(&ScoreSample::new(values).unwrap(), &cfg);
            let after = threshold_estimate(&ScoreSample::new(raised).unwrap(), &cfg);
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn one_and_zero_helpers() {
        let z = BitSample::new(vec![true, false, true]);
        assert_eq!((z.ones(), z.zeros()), (2, 1));
        assert!(BigUint::one() > BigUint::zero());
    }
}
