//! Frequency estimation for η-balanced datasets.
//!
//! A uniform sample `W` (with replacement) of size `m` is counted by feature
//! equality; seen values get `count / m`, unseen records the smallest seen
//! estimate. The planner sizes `m` for an (ε, δ) cleaning guarantee, and the
//! Goodman estimator plus a variance bound give a data-driven lower bound on
//! η from a separate without-replacement sample.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;
use crate::sampler::ProbabilityMap;

pub const SOURCE: &str = "balanced";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancedPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub universal_a: f64,
    /// Entity count used in the formula (given, or `⌈1/η⌉`).
    pub entity_count: u64,
    pub m: u64,
}

fn unit_interval(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{x} is not in (0, 1)")))
    }
}

/// Sample size `⌈a/(ε²η²) · (ln|E| · ln(ln|E|/(εη)) + ln(1/δ))⌉`.
///
/// Without an entity count, `⌈1/η⌉` is used (η-balance bounds `|E| ≤ 1/η`).
/// A negative inner logarithm (tiny `|E|`) is clamped to zero.
pub fn plan_sample_size(
    epsilon: f64,
    delta: f64,
    eta: f64,
    entity_count: Option<u64>,
    universal_a: f64,
) -> Result<BalancedPlan> {
    unit_interval("epsilon", epsilon)?;
    unit_interval("delta", delta)?;
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::param("eta", format!("{eta} is not in (0, 1]")));
    }
    if !(universal_a > 0.0 && universal_a.is_finite()) {
        return Err(Error::param("a", format!("{universal_a} is not positive")));
    }
    let e = entity_count.unwrap_or_else(|| (1.0 / eta).ceil() as u64);
    if e == 0 {
        return Err(Error::param("entity_count", "must be at least 1"));
    }
    let log_e = (e as f64).ln();
    let inner = if log_e > 0.0 {
        (log_e / (epsilon * eta)).ln().max(0.0)
    } else {
        0.0
    };
    let raw = universal_a / (epsilon * epsilon * eta * eta) * (log_e * inner + (1.0 / delta).ln());
    let m = raw.ceil().max(1.0);
    if !m.is_finite() || m > u64::MAX as f64 {
        return Err(Error::param("epsilon", "sample size overflows"));
    }
    Ok(BalancedPlan {
        epsilon,
        delta,
        eta,
        universal_a,
        entity_count: e,
        m: m as u64,
    })
}

/// Counts of each feature class in a with-replacement sample of size `m`.
///
/// Small samples are drawn record by record. Once `m` exceeds the number of
/// records the per-class counts are drawn directly from their multinomial
/// law, which has the same distribution at `O(classes)` cost.
pub(crate) fn sample_class_counts(data: &Dataset, m: u64, rng: &mut rng::Rng) -> Vec<u64> {
    let keys = data.value_keys();
    let mut counts = vec![0u64; data.value_key_count()];
    let n = data.len();
    if m <= n as u64 {
        for _ in 0..m {
            counts[keys[rng.random_range(0..n)] as usize] += 1;
        }
        return counts;
    }
    let mut class_sizes = vec![0u64; data.value_key_count()];
    for &k in keys {
        class_sizes[k as usize] += 1;
    }
    let mut remaining_draws = m;
    let mut remaining_records = n as u64;
    for (c, &size) in counts.iter_mut().zip(&class_sizes) {
        if remaining_draws == 0 {
            break;
        }
        let p = size as f64 / remaining_records as f64;
        let draw = if p >= 1.0 {
            remaining_draws
        } else {
            Binomial::new(remaining_draws, p)
                .expect("probability in [0, 1]")
                .sample(rng)
        };
        *c = draw;
        remaining_draws -= draw;
        remaining_records -= size;
    }
    counts
}

/// Estimates per-record probabilities from a uniform with-replacement sample
/// of size `m`. Records are grouped by feature equality, never by labels.
pub fn estimate_probs_balanced(data: &Dataset, m: u64, seed: u64) -> Result<ProbabilityMap> {
    if m == 0 {
        return Err(Error::param("m", "sample size must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut rng = rng::rng(seed);
    let counts = sample_class_counts(data, m, &mut rng);
    let seen_min = counts
        .iter()
        .filter(|&&c| c > 0)
        .min()
        .copied()
        .expect("m >= 1 draws");
    if counts.iter().filter(|&&c| c > 0).count() == 1 {
        warn!("balanced sample saw a single distinct value; the probability map is degenerate");
    }
    let m_f = m as f64;
    let floor = seen_min as f64 / m_f;
    let phat = data
        .value_keys()
        .iter()
        .map(|&k| match counts[k as usize] {
            0 => floor,
            c => c as f64 / m_f,
        })
        .collect();
    ProbabilityMap::new(phat, SOURCE)
}

/// Frequency fingerprint of a sample: `f[i]` values were seen exactly `i` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintStats {
    m: u64,
    r: u64,
    f: BTreeMap<u64, u64>,
}

impl FingerprintStats {
    pub fn new(m: u64, r: u64, f: BTreeMap<u64, u64>) -> Result<Self> {
        let distinct: u64 = f.values().sum();
        let total: u64 = f.iter().map(|(i, c)| i * c).sum();
        if f.contains_key(&0) {
            return Err(Error::param("f", "f_0 is not part of a fingerprint"));
        }
        if distinct != r {
            return Err(Error::param("f", format!("Σ f_i = {distinct} but r = {r}")));
        }
        if total != m {
            return Err(Error::param("f", format!("Σ i·f_i = {total} but m = {m}")));
        }
        Ok(FingerprintStats { m, r, f })
    }

    /// Fingerprint of a sample given as class labels.
    pub fn from_sample<T: std::hash::Hash + Eq>(sample: impl IntoIterator<Item = T>) -> Self {
        let mut counts: HashMap<T, u64> = HashMap::new();
        let mut m = 0;
        for s in sample {
            *counts.entry(s).or_insert(0) += 1;
            m += 1;
        }
        let mut f = BTreeMap::new();
        for &c in counts.values() {
            *f.entry(c).or_insert(0) += 1;
        }
        FingerprintStats {
            m,
            r: counts.len() as u64,
            f,
        }
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn f(&self) -> &BTreeMap<u64, u64> {
        &self.f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoodmanEstimate {
    pub value: f64,
    /// Largest absolute term of the alternating sum.
    pub max_term: f64,
    /// Set when `max_term` exceeds the configured magnitude relative to
    /// `value`; cancellation has then likely destroyed precision.
    pub unstable: bool,
}

/// Terms larger than this multiple of the result flag the estimate.
pub const GOODMAN_INSTABILITY_RATIO: f64 = 1e10;

/// Goodman's unbiased estimate of the number of distinct classes in a
/// population of size `n`, from a without-replacement sample fingerprint.
///
/// Unbiasedness holds when the sample size is at least the largest class
/// frequency in the population.
pub fn goodman_estimate(stats: &FingerprintStats, n: u64) -> Result<GoodmanEstimate> {
    let m = stats.m;
    if m == 0 || m >= n {
        return Err(Error::param("m", format!("need 1 <= m < n, got m = {m}, n = {n}")));
    }
    let (n_f, m_f) = (n as f64, m as f64);
    // ln[(n-m+i-1)! (m-i)! / ((n-m-1)! m!)]
    let base = ln_gamma(n_f - m_f) + ln_gamma(m_f + 1.0);
    let mut terms: Vec<f64> = stats
        .f
        .iter()
        .filter(|(_, &fi)| fi > 0)
        .map(|(&i, &fi)| {
            let i_f = i as f64;
            let log_ratio = ln_gamma(n_f - m_f + i_f) + ln_gamma(m_f - i_f + 1.0) - base;
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            sign * fi as f64 * log_ratio.exp()
        })
        .collect();
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let max_term = terms.first().map_or(0.0, |t| t.abs());
    let value = stats.r as f64 + terms.iter().sum::<f64>();
    // Outside [r, n − m + r] the estimate cannot be a class count.
    let plausible = value >= stats.r as f64 && value <= (n - m + stats.r) as f64;
    let unstable = !value.is_finite()
        || !plausible
        || max_term > GOODMAN_INSTABILITY_RATIO * value.abs().max(1.0);
    Ok(GoodmanEstimate {
        value,
        max_term,
        unstable,
    })
}

/// Lower bound `1/Ê − (1 − 1/Ê)·σ_c·√(2r)` on η, floored at `1/n`.
///
/// `c_values` are the observed per-distinct-value sample fractions; `σ_c` is
/// their population standard deviation.
pub fn eta_lower_bound(stats: &FingerprintStats, n: u64, c_values: &[f64]) -> Result<f64> {
    if stats.r < 2 {
        return Err(Error::param("r", "need at least two distinct values"));
    }
    let e_hat = goodman_estimate(stats, n)?.value;
    eta_bound_from(e_hat, stats.r, n, c_values)
}

fn eta_bound_from(e_hat: f64, r: u64, n: u64, c_values: &[f64]) -> Result<f64> {
    if !(e_hat > 1.0) {
        return Err(Error::param("E_hat", format!("{e_hat} <= 1 leaves the bound undefined")));
    }
    if c_values.is_empty() {
        return Err(Error::param("c_values", "empty"));
    }
    let k = c_values.len() as f64;
    let mean = c_values.iter().sum::<f64>() / k;
    let var = (c_values.iter().map(|c| c * c).sum::<f64>() / k - mean * mean).max(0.0);
    let bound = 1.0 / e_hat - (1.0 - 1.0 / e_hat) * var.sqrt() * (2.0 * r as f64).sqrt();
    Ok(bound.max(1.0 / n as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaEstimate {
    pub fingerprint: FingerprintStats,
    pub goodman: GoodmanEstimate,
    /// Goodman value clamped to the feasible range `[r, n − m + r]`.
    pub e_hat: f64,
    pub eta_lower_bound: f64,
}

/// Draws a without-replacement sample of size `m` (independent of any
/// estimation sample), and returns the Goodman estimate and η lower bound.
pub fn estimate_eta(data: &Dataset, m: usize, seed: u64) -> Result<EtaEstimate> {
    let n = data.len();
    if m == 0 || m >= n {
        return Err(Error::param("m", format!("need 1 <= m < n = {n}")));
    }
    let mut rng = rng::rng(seed);
    let keys = data.value_keys();
    let picks = index::sample(&mut rng, n, m);
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for i in picks.iter() {
        *counts.entry(keys[i]).or_insert(0) += 1;
    }
    let mut f = BTreeMap::new();
    for &c in counts.values() {
        *f.entry(c).or_insert(0) += 1;
    }
    let fingerprint = FingerprintStats::new(m as u64, counts.len() as u64, f)?;
    let goodman = goodman_estimate(&fingerprint, n as u64)?;
    let mut c_values: Vec<f64> = counts.values().map(|&c| c as f64 / m as f64).collect();
    c_values.sort_by(f64::total_cmp);
    let r = fingerprint.r as f64;
    let e_hat = goodman.value.clamp(r, (n - m) as f64 + r);
    if goodman.unstable {
        log::warn!(
            "Goodman estimate {:.3} is unstable; using {e_hat} clamped to [{r}, {}]",
            goodman.value,
            (n - m) as f64 + r
        );
    }
    let eta_lower_bound = if fingerprint.r >= 2 {
        eta_bound_from(e_hat, fingerprint.r, n as u64, &c_values)?
    } else {
        return Err(Error::param("r", "sample contains a single distinct value"));
    };
    Ok(EtaEstimate {
        fingerprint,
        goodman,
        e_hat,
        eta_lower_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityLabels;

    fn fp(m: u64, pairs: &[(u64, u64)]) -> FingerprintStats {
        let f: BTreeMap<u64, u64> = pairs.iter().copied().collect();
        FingerprintStats::new(m, f.values().sum(), f).unwrap()
    }

    fn repeated(freqs: &[usize]) -> Dataset {
        let mut data = Vec::new();
        for (e, &c) in freqs.iter().enumerate() {
            data.extend(std::iter::repeat_n(e as f64, c));
        }
        let n = data.len();
        Dataset::from_vectors(1, data, vec![0.0; n]).unwrap()
    }

    #[test]
    fn plan_golden_value() {
        // 1e4 · (ln 10 · ln(ln 10 / 0.01) + ln 10), evaluated independently.
        let plan = plan_sample_size(0.1, 0.1, 0.1, Some(10), 1.0).unwrap();
        assert_eq!(plan.m, 148_269);
    }

    #[test]
    fn plan_fallback_uses_inverse_eta() {
        let a = plan_sample_size(0.1, 0.1, 0.1, None, 1.0).unwrap();
        assert_eq!(a.entity_count, 10);
        assert_eq!(a.m, 148_269);
    }

    #[test]
    fn plan_monotonicity() {
        let base = plan_sample_size(0.2, 0.1, 0.05, Some(20), 1.0).unwrap().m as f64;
        let half = plan_sample_size(0.1, 0.1, 0.05, Some(20), 1.0).unwrap().m as f64;
        // quadrupled, plus the growth of the inner log term
        assert!(half >= 4.0 * base - 4.0);
        assert!(half < 5.0 * base);
        let tighter = plan_sample_size(0.2, 0.01, 0.05, Some(20), 1.0).unwrap().m as f64;
        assert!(tighter > base);
        let a2 = plan_sample_size(0.2, 0.1, 0.05, Some(20), 2.0).unwrap().m as f64;
        assert!((a2 - 2.0 * base).abs() <= 2.0);
    }

    #[test]
    fn plan_delta_limit_drops_confidence_term() {
        let (e, eta) = (0.1f64, 0.1f64);
        let log_e = 10f64.ln();
        let without = 1.0 / (e * e * eta * eta) * log_e * (log_e / (e * eta)).ln();
        let plan = plan_sample_size(e, 1.0 - 1e-12, eta, Some(10), 1.0).unwrap();
        assert!((plan.m as f64 - without).abs() <= 1.0);
    }

    #[test]
    fn plan_rejects_out_of_range() {
        assert!(plan_sample_size(0.0, 0.1, 0.1, None, 1.0).is_err());
        assert!(plan_sample_size(0.1, 1.0, 0.1, None, 1.0).is_err());
        assert!(plan_sample_size(0.1, 0.1, 0.0, None, 1.0).is_err());
        assert!(plan_sample_size(0.1, 0.1, 0.1, None, -1.0).is_err());
    }

    #[test]
    fn exhaustive_sample_recovers_probabilities() {
        let d = repeated(&[5, 3, 2]);
        let map = estimate_probs_balanced(&d, 10_000_000, 4).unwrap();
        for (i, &k) in d.value_keys().iter().enumerate() {
            let exact = [0.5, 0.3, 0.2][k as usize];
            assert!((map.values()[i] - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn seen_values_sum_to_one_and_unseen_share_min() {
        let d = repeated(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 1, 1, 1, 1]);
        for seed in 0..20 {
            let map = estimate_probs_balanced(&d, 12, seed).unwrap();
            let counts = sample_class_counts(&d, 12, &mut rng::rng(seed));
            let mut seen_sum = 0.0;
            for (k, &c) in counts.iter().enumerate() {
                let i = d.value_keys().iter().position(|&x| x == k as u32).unwrap();
                if c > 0 {
                    seen_sum += map.values()[i];
                } else {
                    assert_eq!(map.values()[i], map.floor());
                }
            }
            assert!((seen_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_value_example() {
        // X = {a, a, b, b}, W = (a, b) ⇒ p̂ = 0.5 for both.
        let d = repeated(&[2, 2]);
        let mut found = false;
        for seed in 0..64 {
            let map = estimate_probs_balanced(&d, 2, seed).unwrap();
            if map.values().iter().all(|&p| p == 0.5) {
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn single_value_sample_is_legal() {
        let d = repeated(&[3]);
        let map = estimate_probs_balanced(&d, 5, 0).unwrap();
        assert!(map.values().iter().all(|&p| p == 1.0));
        assert!(estimate_probs_balanced(&d, 0, 0).is_err());
    }

    #[test]
    fn labels_are_not_consulted() {
        let d = repeated(&[2, 2]);
        let labeled = d
            .clone()
            .with_labels(EntityLabels::from_indices(vec![0, 1, 2, 3]))
            .unwrap();
        assert_eq!(
            estimate_probs_balanced(&d, 100, 1).unwrap(),
            estimate_probs_balanced(&labeled, 100, 1).unwrap()
        );
    }

    #[test]
    fn goodman_single_draw() {
        for n in [2u64, 5, 100, 10_000] {
            let g = goodman_estimate(&fp(1, &[(1, 1)]), n).unwrap();
            assert!((g.value - n as f64).abs() < 1e-9 * n as f64, "{n}: {}", g.value);
        }
    }

    #[test]
    fn goodman_exhaustive_n6() {
        // Population with frequencies (3, 2, 1); all C(6, 3) = 20 subsets.
        let pop = [0u8, 0, 0, 1, 1, 2];
        let mut total = 0.0;
        let mut count = 0;
        for a in 0..6 {
            for b in a + 1..6 {
                for c in b + 1..6 {
                    let stats = FingerprintStats::from_sample([pop[a], pop[b], pop[c]]);
                    total += goodman_estimate(&stats, 6).unwrap().value;
                    count += 1;
                }
            }
        }
        assert_eq!(count, 20);
        assert!((total / count as f64 - 3.0).abs() < 1e-9);
    }

    #[test]
    fn goodman_domain() {
        assert!(goodman_estimate(&fp(3, &[(1, 3)]), 3).is_err());
        let inconsistent: BTreeMap<u64, u64> = [(1, 2), (2, 1)].into_iter().collect();
        assert!(FingerprintStats::new(5, 3, inconsistent).is_err());
    }

    #[test]
    fn goodman_flags_cancellation() {
        // Huge population, tiny sample with repeats: terms explode.
        let g = goodman_estimate(&fp(40, &[(1, 10), (2, 5), (20, 1)]), 1_000_000_000).unwrap();
        assert!(g.unstable);
        let g = goodman_estimate(&fp(3, &[(1, 3)]), 6).unwrap();
        assert!(!g.unstable);
    }

    #[test]
    fn eta_bound_zero_variance_case() {
        let b = eta_bound_from(4.0, 4, 1000, &[0.25; 4]).unwrap();
        assert!((b - 0.25).abs() < 1e-15);
        assert!(eta_bound_from(1.0, 4, 1000, &[0.25; 4]).is_err());
        assert!(eta_lower_bound(&fp(3, &[(3, 1)]), 10, &[1.0]).is_err());
    }

    #[test]
    fn eta_bound_floors_at_inverse_n() {
        let b = eta_bound_from(10.0, 10, 50, &[0.9, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.02])
            .unwrap();
        assert_eq!(b, 1.0 / 50.0);
    }

    #[test]
    fn eta_bound_is_valid_on_balanced_population() {
        // 10 entities, min probability exactly 0.1 ⇒ η = 0.1.
        let d = repeated(&[30; 10]);
        let n = d.len();
        let mut ok = 0;
        for seed in 0..100 {
            let est = estimate_eta(&d, n / 2, seed).unwrap();
            if est.eta_lower_bound <= 0.1 + 1e-12 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}/100");
    }
}
