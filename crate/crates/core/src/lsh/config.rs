use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashFamily {
    /// MinHash over character 3-gram sets; collides with probability
    /// `1 − Jaccard distance`.
    MinHash,
    /// Signed random projections; collides with probability `1 − θ/π`.
    RandomHyperplane,
}

/// Banding parameters: `s` bands of `r` hash functions each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshConfig {
    pub lambda: f64,
    pub delta: f64,
    pub r: usize,
    pub s: usize,
    pub hash_family: HashFamily,
}

impl LshConfig {
    pub fn hash_count(&self) -> usize {
        self.r * self.s
    }

    /// Probability that two records at distance `d` share at least one band.
    pub fn collision_probability(&self, d: f64) -> f64 {
        1.0 - (1.0 - (1.0 - d).powi(self.r as i32)).powi(self.s as i32)
    }

    pub fn with_family(mut self, family: HashFamily) -> Self {
        self.hash_family = family;
        self
    }
}

/// Smallest integer `r` in `(1/(2λ), 1/(−ln(1−λ)))` and `s = ⌈2.2 ln(1/δ)⌉`.
///
/// Pairs within distance `λ` then share a band with probability above
/// `1 − δ`.
pub fn choose_bands_rows(lambda: f64, delta: f64) -> Result<LshConfig> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::param("lambda", format!("{lambda} is not in (0, 1)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param("delta", format!("{delta} is not in (0, 1)")));
    }
    let low = 1.0 / (2.0 * lambda);
    let high = 1.0 / -(1.0 - lambda).ln();
    let r = low.floor() + 1.0;
    if r >= high {
        return Err(Error::EmptyBandInterval { low, high });
    }
    let s = (2.2 * (1.0 / delta).ln()).ceil().max(1.0);
    Ok(LshConfig {
        lambda,
        delta,
        r: r as usize,
        s: s as usize,
        hash_family: HashFamily::MinHash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_examples() {
        let c = choose_bands_rows(0.2, 0.1).unwrap();
        assert_eq!((c.r, c.s), (3, 6));
        let c = choose_bands_rows(0.1, 0.05).unwrap();
        assert_eq!((c.r, c.s), (6, 7));
        assert!(matches!(
            choose_bands_rows(0.5, 0.1),
            Err(Error::EmptyBandInterval { .. })
        ));
    }

    #[test]
    fn guarantee_holds_at_threshold() {
        for (lambda, delta) in [(0.2, 0.1), (0.1, 0.05), (0.05, 0.01), (0.3, 0.2)] {
            let c = choose_bands_rows(lambda, delta).unwrap();
            assert!(c.collision_probability(lambda) > 1.0 - delta, "{lambda} {delta}");
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(choose_bands_rows(0.0, 0.1).is_err());
        assert!(choose_bands_rows(0.2, 1.0).is_err());
    }
}
