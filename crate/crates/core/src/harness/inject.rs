use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, EntityLabels, Features};
use crate::rng;

/// How many extra copies a selected record receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DupProfile {
    /// One copy 80% of the time, two 15%, three 5%.
    #[default]
    Tpch,
    /// One, two or three copies with equal probability.
    Uniform,
    /// Seeded random weights over one to ten copies.
    Arbitrary,
}

/// Largest copy count of the arbitrary profile.
pub const ARBITRARY_MAX_COPIES: usize = 10;

impl DupProfile {
    /// Probability of `1..=len` extra copies.
    pub fn copy_weights(&self, seed: u64) -> Vec<f64> {
        match self {
            DupProfile::Tpch => vec![0.8, 0.15, 0.05],
            DupProfile::Uniform => vec![1.0 / 3.0; 3],
            DupProfile::Arbitrary => {
                let mut r = rng::derive_rng(seed, u64::MAX - 1);
                let w: Vec<f64> = (0..ARBITRARY_MAX_COPIES).map(|_| r.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            }
        }
    }

    /// Expected extra copies per selected record.
    pub fn mean_copies(&self, seed: u64) -> f64 {
        self.copy_weights(seed)
            .iter()
            .enumerate()
            .map(|(i, w)| (i + 1) as f64 * w)
            .sum()
    }
}

/// Selects `round(rate·n)` records uniformly without replacement and appends
/// copies of each according to `profile`. Copies keep the entity label and
/// feature class of their source, so the entity table of the result counts
/// the same entities as `data`.
pub fn inject_duplicates(data: &Dataset, rate: f64, profile: DupProfile, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param("rate", format!("{rate} is not in [0, 1)")));
    }
    let n = data.len();
    let selected = (rate * n as f64).round() as usize;
    if selected == 0 {
        return Ok(data.clone());
    }
    let mut r = rng::rng(seed);
    let picks = index::sample(&mut r, n, selected).into_vec();
    let copies = WeightedIndex::new(profile.copy_weights(seed)).expect("valid weights");
    let mut sources = Vec::with_capacity(selected * 2);
    for &i in &picks {
        let c = copies.sample(&mut r) + 1;
        sources.extend(std::iter::repeat_n(i, c));
    }
    Ok(append_copies(data, &sources))
}

/// `data` followed by one copy of every record in `sources`.
pub(crate) fn append_copies(data: &Dataset, sources: &[usize]) -> Dataset {
    let features = match data.features() {
        Features::Vectors { dim, data: coords } => {
            let mut out = coords.clone();
            out.reserve(sources.len() * dim);
            for &i in sources {
                out.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
            }
            Features::Vectors { dim: *dim, data: out }
        }
        Features::Text { texts, shingles } => {
            let mut t = texts.clone();
            let mut s = shingles.clone();
            for &i in sources {
                t.push(texts[i].clone());
                s.push(shingles[i].clone());
            }
            Features::Text { texts: t, shingles: s }
        }
    };
    let mut values = data.values().to_vec();
    values.extend(sources.iter().map(|&i| data.values()[i]));
    let ids = data.ids().map(|ids| {
        let mut out = ids.to_vec();
        let mut serial = vec![0u32; ids.len()];
        for &i in sources {
            serial[i] += 1;
            out.push(format!("{}~{}", ids[i], serial[i]));
        }
        out
    });
    let labels = data.labels().map(|l| {
        let mut of_record = l.of_record.clone();
        of_record.extend(sources.iter().map(|&i| l.of_record[i]));
        EntityLabels {
            of_record,
            names: l.names.clone(),
        }
    });
    let mut keys = data.value_keys().to_vec();
    keys.extend(sources.iter().map(|&i| data.value_keys()[i]));
    Dataset::assemble(features, values, ids, labels, keys, data.value_key_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synthetic::tpch_lineitem;

    #[test]
    fn zero_rate_is_identity() {
        let d = tpch_lineitem(200, 1);
        let out = inject_duplicates(&d, 0.0, DupProfile::Tpch, 3).unwrap();
        assert_eq!(out.len(), 200);
        assert_eq!(out.values(), d.values());
        let tiny = inject_duplicates(&d, 0.001, DupProfile::Tpch, 3).unwrap();
        assert_eq!(tiny.len(), 200);
    }

    #[test]
    fn twenty_percent_tpch_protocol() {
        let d = tpch_lineitem(10_000, 2);
        let out = inject_duplicates(&d, 0.2, DupProfile::Tpch, 5).unwrap();
        assert_eq!(out.entity_count(), 10_000);
        let dup_entities = out.entity_counts().iter().filter(|&&c| c > 1).count();
        assert_eq!(dup_entities, 2_000);
        let extra: Vec<u64> = out.entity_counts().iter().filter(|&&c| c > 1).map(|c| c - 1).collect();
        let share = |k| extra.iter().filter(|&&c| c == k).count() as f64 / 2_000.0;
        assert!((share(1) - 0.8).abs() < 0.04);
        assert!((share(2) - 0.15).abs() < 0.03);
        assert!((share(3) - 0.05).abs() < 0.02);
    }

    #[test]
    fn added_records_match_expectation() {
        let n = 2_000;
        let rate = 0.1;
        let d = tpch_lineitem(n, 0);
        let selected = (rate * n as f64).round();
        let mean = 0.8 + 0.15 * 2.0 + 0.05 * 3.0;
        let var = 0.8 + 0.15 * 4.0 + 0.05 * 9.0 - mean * mean;
        let seeds = 100;
        let added: f64 = (0..seeds)
            .map(|s| (inject_duplicates(&d, rate, DupProfile::Tpch, s).unwrap().len() - n) as f64)
            .sum::<f64>()
            / seeds as f64;
        let expected = n as f64 * rate * mean;
        let sigma = (selected * var / seeds as f64).sqrt();
        assert!((added - expected).abs() <= 3.0 * sigma, "{added} vs {expected} ± {sigma}");
    }

    #[test]
    fn clean_mean_is_preserved() {
        let d = tpch_lineitem(5_000, 9);
        for profile in [DupProfile::Tpch, DupProfile::Uniform, DupProfile::Arbitrary] {
            let out = inject_duplicates(&d, 0.3, profile, 4).unwrap();
            assert_eq!(out.entity_mean(), d.entity_mean());
        }
    }

    #[test]
    fn labels_and_ids_follow_copies() {
        let d = crate::harness::synthetic::publications_like(30, 0.0, 1);
        let out = inject_duplicates(&d, 0.5, DupProfile::Uniform, 2).unwrap();
        assert_eq!(out.entity_count(), d.entity_count());
        for i in d.len()..out.len() {
            let id = out.record_id(i);
            let src = id.split('~').next().unwrap();
            let j = (0..d.len()).find(|&j| d.record_id(j) == src).unwrap();
            assert_eq!(out.entities()[i], d.entities()[j]);
            assert_eq!(out.text(i), d.text(j));
        }
    }

    #[test]
    fn arbitrary_profile_is_seeded() {
        let a = DupProfile::Arbitrary.copy_weights(3);
        assert_eq!(a, DupProfile::Arbitrary.copy_weights(3));
        assert_ne!(a, DupProfile::Arbitrary.copy_weights(4));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
