//! Two-stage cleaning: given estimated selection probabilities, draw records
//! uniformly and accept each with probability `floor / p̂(v)`.
//!
//! Accepted records are approximately uniform over entities when `p̂` tracks
//! the entity frequencies. [`exact_induced_distribution`] gives the limit
//! distribution in closed form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, DiscreteDistribution};
use crate::rng;

/// Default cap on draws, as a multiple of the requested sample size.
pub const DEFAULT_TRIAL_FACTOR: u64 = 10_000;

/// Per-record estimated selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    phat: Vec<f64>,
    floor: f64,
    source: String,
}

impl ProbabilityMap {
    pub fn new(phat: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if phat.is_empty() {
            return Err(Error::InvalidMap("empty map".into()));
        }
        if let Some((i, p)) = phat
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::InvalidMap(format!("p̂ = {p} for record {i}")));
        }
        let floor = phat.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ProbabilityMap {
            phat,
            floor,
            source: source.into(),
        })
    }

    /// Exact per-record entity probabilities `freq(e) / n`.
    pub fn exact(data: &Dataset) -> Result<Self> {
        let counts = data.entity_counts();
        let n = data.len() as f64;
        let phat = data
            .entities()
            .iter()
            .map(|&e| counts[e as usize] as f64 / n)
            .collect();
        Self::new(phat, "exact")
    }

    pub fn get(&self, record: usize) -> Option<f64> {
        self.phat.get(record).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.phat
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.phat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phat.is_empty()
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.phat.iter().map(|p| p * c).collect(), self.source.clone())
    }

    /// Acceptance probability of record `i`.
    pub fn acceptance(&self, i: usize) -> f64 {
        (self.floor / self.phat[i]).min(1.0)
    }

    fn check_covers(&self, data: &Dataset) -> Result<()> {
        if self.phat.len() < data.len() {
            return Err(Error::Coverage(self.phat.len()));
        }
        if self.phat.len() > data.len() {
            return Err(Error::InvalidMap(format!(
                "map has {} entries for {} records",
                self.phat.len(),
                data.len()
            )));
        }
        Ok(())
    }

    /// Two-column CSV: `record_id,phat`.
    pub fn write_csv<W: Write>(&self, data: &Dataset, writer: W) -> Result<()> {
        self.check_covers(data)?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["record_id", "phat"])?;
        for (i, p) in self.phat.iter().enumerate() {
            w.write_record([data.record_id(i).as_ref(), &format!("{p:e}")])?;
        }
        w.flush().map_err(|e| Error::io("<map output>", e))?;
        Ok(())
    }

    /// Reads a map written by [`ProbabilityMap::write_csv`], matching rows to
    /// records of `data` by id.
    pub fn read_csv<R: Read>(data: &Dataset, reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut by_id: BTreeMap<String, f64> = BTreeMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::MalformedRow {
                row,
                message: e.to_string(),
            })?;
            let (id, p) = match (rec.get(0), rec.get(1)) {
                (Some(id), Some(p)) => (id, p),
                _ => {
                    return Err(Error::MalformedRow {
                        row,
                        message: "expected record_id,phat".into(),
                    })
                }
            };
            let p: f64 = p.trim().parse().map_err(|_| Error::MalformedRow {
                row,
                message: format!("`{p}` is not a number"),
            })?;
            by_id.insert(id.to_string(), p);
        }
        let phat = (0..data.len())
            .map(|i| by_id.get(data.record_id(i).as_ref()).copied().ok_or(Error::Coverage(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(phat, "file")
    }

    pub fn read_csv_file(data: &Dataset, path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(data, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResult {
    /// Record indices, in acceptance order.
    pub accepted: Vec<usize>,
    pub trials: u64,
    /// Accepted count per entity index.
    pub per_entity_counts: BTreeMap<u32, u64>,
}

impl SampleResult {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.len() as f64 / self.trials as f64
    }

    pub fn mean_trials_per_accept(&self) -> f64 {
        self.trials as f64 / self.accepted.len() as f64
    }

    /// Mean of the value column over the accepted records.
    pub fn value_mean(&self, data: &Dataset) -> f64 {
        let v = data.values();
        self.accepted.iter().map(|&i| v[i]).sum::<f64>() / self.accepted.len() as f64
    }
}

/// Rejection sampler; the trial cap defaults to `DEFAULT_TRIAL_FACTOR × p`.
#[derive(Debug, Clone, Copy)]
pub struct Sampler {
    pub trial_factor: u64,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler {
            trial_factor: DEFAULT_TRIAL_FACTOR,
        }
    }
}

impl Sampler {
    pub fn sample(&self, data: &Dataset, phat: &ProbabilityMap, p: usize, seed: u64) -> Result<SampleResult> {
        if p == 0 {
            return Err(Error::param("p", "sample size must be at least 1"));
        }
        if data.is_empty() {
            return Err(Error::Config("cannot sample from an empty dataset".into()));
        }
        phat.check_covers(data)?;
        if !(phat.floor > 0.0) {
            return Err(Error::InvalidMap(format!("floor {} is not positive", phat.floor)));
        }
        let cap = self.trial_factor.saturating_mul(p as u64);
        let n = data.len();
        let entities = data.entities();
        let mut rng = rng::rng(seed);
        let mut accepted = Vec::with_capacity(p);
        let mut per_entity_counts = BTreeMap::new();
        let mut trials = 0u64;
        while accepted.len() < p {
            if trials >= cap {
                return Err(Error::TrialCap {
                    cap,
                    accepted: accepted.len(),
                });
            }
            trials += 1;
            let v = rng.random_range(0..n);
            let a: f64 = rng.random();
            if a < phat.floor / phat.phat[v] {
                accepted.push(v);
                *per_entity_counts.entry(entities[v]).or_insert(0) += 1;
            }
        }
        Ok(SampleResult {
            accepted,
            trials,
            per_entity_counts,
        })
    }
}

/// Draws `p` records by rejection with the default trial cap.
pub fn sample_clean(data: &Dataset, phat: &ProbabilityMap, p: usize, seed: u64) -> Result<SampleResult> {
    Sampler::default().sample(data, phat, p, seed)
}

/// Unnormalized limit weight of every entity: `Σ_{v ∈ e} (1/n) · floor/p̂(v)`.
pub fn induced_entity_weights(data: &Dataset, phat: &ProbabilityMap) -> Result<Vec<f64>> {
    phat.check_covers(data)?;
    let n = data.len() as f64;
    let mut w = vec![0.0; data.entity_count()];
    for (i, &e) in data.entities().iter().enumerate() {
        w[e as usize] += phat.acceptance(i) / n;
    }
    Ok(w)
}

/// The entity distribution [`sample_clean`] converges to.
pub fn exact_induced_distribution(data: &Dataset, phat: &ProbabilityMap) -> Result<DiscreteDistribution> {
    let w = induced_entity_weights(data, phat)?;
    DiscreteDistribution::from_weights(data.entity_names().into_iter().zip(w))
}

/// Total variation between the induced distribution and the uniform
/// distribution over entities, without materializing labels.
pub fn induced_tv_to_uniform(data: &Dataset, phat: &ProbabilityMap) -> Result<f64> {
    let w = induced_entity_weights(data, phat)?;
    let total: f64 = w.iter().sum();
    let u = 1.0 / w.len() as f64;
    Ok(0.5 * w.iter().map(|x| (x / total - u).abs()).sum::<f64>())
}

/// `1 / Σ_v (1/n) · floor/p̂(v)`.
pub fn expected_trials_per_accept(data: &Dataset, phat: &ProbabilityMap) -> Result<f64> {
    phat.check_covers(data)?;
    let n = data.len() as f64;
    let rate: f64 = (0..data.len()).map(|i| phat.acceptance(i) / n).sum();
    Ok(1.0 / rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tv_distance, EntityLabels};

    fn dataset(labels: &[&str]) -> Dataset {
        let n = labels.len();
        Dataset::from_vectors(1, (0..n).map(|i| i as f64).collect(), vec![0.0; n])
            .unwrap()
            .with_labels(EntityLabels::from_names(labels))
            .unwrap()
    }

    #[test]
    fn exact_map_gives_uniform() {
        let d = dataset(&["a", "a", "b"]);
        let m = ProbabilityMap::exact(&d).unwrap();
        assert!((m.acceptance(0) - 0.5).abs() < 1e-15);
        assert_eq!(m.acceptance(2), 1.0);
        let dist = exact_induced_distribution(&d, &m).unwrap();
        assert!((dist.mass("a") - 0.5).abs() < 1e-15);
        assert!((dist.mass("b") - 0.5).abs() < 1e-15);
        assert!((expected_trials_per_accept(&d, &m).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn distinct_records_always_accept() {
        let d = dataset(&["a", "b", "c", "d"]);
        let m = ProbabilityMap::exact(&d).unwrap();
        let r = sample_clean(&d, &m, 100, 3).unwrap();
        assert_eq!(r.trials, 100);
        assert_eq!(expected_trials_per_accept(&d, &m).unwrap(), 1.0);
        let u = d.entity_table().uniform();
        assert!(tv_distance(&exact_induced_distribution(&d, &m).unwrap(), &u) < 1e-15);
    }

    #[test]
    fn hand_enumerated_induced_masses() {
        // a×3, b×1 with p̂ = (0.5, 0.25): weights 0.75·0.5 and 0.25·1.
        let d = dataset(&["a", "a", "a", "b"]);
        let m = ProbabilityMap::new(vec![0.5, 0.5, 0.5, 0.25], "test").unwrap();
        let dist = exact_induced_distribution(&d, &m).unwrap();
        assert!((dist.mass("a") - 0.6).abs() < 1e-12);
        assert!((dist.mass("b") - 0.4).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance_is_exact() {
        let d = dataset(&["a", "a", "a", "b", "c", "c"]);
        let m = ProbabilityMap::new(vec![0.3, 0.4, 0.5, 0.1, 0.2, 0.25], "test").unwrap();
        let base = exact_induced_distribution(&d, &m).unwrap();
        for c in [0.5, 2.0, 1e-3] {
            let scaled = exact_induced_distribution(&d, &m.scaled(c).unwrap()).unwrap();
            for (k, v) in base.iter() {
                assert!((scaled.mass(k) - v).abs() <= 1e-15, "{k}: {} vs {v}", scaled.mass(k));
            }
        }
    }

    #[test]
    fn invalid_maps() {
        assert!(ProbabilityMap::new(vec![0.5, 0.0], "x").is_err());
        assert!(ProbabilityMap::new(vec![], "x").is_err());
        let d = dataset(&["a", "b"]);
        let short = ProbabilityMap::new(vec![0.5], "x").unwrap();
        assert!(matches!(sample_clean(&d, &short, 1, 0), Err(Error::Coverage(1))));
        assert!(sample_clean(&d, &ProbabilityMap::exact(&d).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn trial_cap_is_an_error() {
        let names: Vec<String> = (0..1000).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let d = dataset(&refs);
        let mut phat = vec![1.0; 1000];
        phat[0] = 1e-12;
        let m = ProbabilityMap::new(phat, "x").unwrap();
        let s = Sampler { trial_factor: 3 };
        assert!(matches!(
            s.sample(&d, &m, 10, 1),
            Err(Error::TrialCap { cap: 30, .. })
        ));
    }

    #[test]
    fn map_csv_round_trip() {
        let d = dataset(&["a", "a", "b"]);
        let m = ProbabilityMap::new(vec![0.25, 0.5, 1.0 / 3.0], "x").unwrap();
        let mut buf = Vec::new();
        m.write_csv(&d, &mut buf).unwrap();
        let back = ProbabilityMap::read_csv(&d, buf.as_slice()).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.floor(), 0.25);
        let missing = "record_id,phat\n0,0.5\n";
        assert!(matches!(
            ProbabilityMap::read_csv(&d, missing.as_bytes()),
            Err(Error::Coverage(1))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let d = dataset(&["a", "a", "b", "c", "c", "c"]);
        let m = ProbabilityMap::exact(&d).unwrap();
        assert_eq!(sample_clean(&d, &m, 50, 9).unwrap(), sample_clean(&d, &m, 50, 9).unwrap());
    }
}
