//! Datasets, ground-truth entity bookkeeping and distribution utilities.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use log::warn;

use crate::error::{Error, Result};

/// Shingle width used for text records.
pub const SHINGLE_WIDTH: usize = 3;

/// Record representation shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Row-major `n × dim` matrix.
    Vectors { dim: usize, data: Vec<f64> },
    /// One string per record, compared through character 3-gram sets.
    Text {
        texts: Vec<String>,
        shingles: Vec<Vec<u64>>,
    },
}

impl Features {
    pub fn vectors(dim: usize, data: Vec<f64>) -> Self {
        Features::Vectors { dim, data }
    }

    pub fn text(texts: Vec<String>) -> Self {
        let shingles = texts.iter().map(|t| shingle_set(t, SHINGLE_WIDTH)).collect();
        Features::Text { texts, shingles }
    }

    fn len(&self) -> usize {
        match self {
            Features::Vectors { dim, data } => {
                if *dim == 0 {
                    0
                } else {
                    data.len() / dim
                }
            }
            Features::Text { texts, .. } => texts.len(),
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, Features::Text { .. })
    }
}

/// Sorted, deduplicated hashes of the lowercase character `width`-grams of
/// `text`. Strings shorter than `width` contribute themselves as one gram.
pub fn shingle_set(text: &str, width: usize) -> Vec<u64> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out: Vec<u64> = if chars.len() <= width {
        vec![hash_chars(&chars)]
    } else {
        chars.windows(width).map(hash_chars).collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

fn hash_chars(chars: &[char]) -> u64 {
    // FNV-1a, stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in chars {
        for b in (*c as u32).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Jaccard distance between two sorted, deduplicated sets.
pub fn jaccard_distance(a: &[u64], b: &[u64]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    1.0 - inter as f64 / union as f64
}

/// Ground-truth entity assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityLabels {
    pub of_record: Vec<u32>,
    /// Display names; `None` means entities are named `e<index>`.
    pub names: Option<Vec<String>>,
}

impl EntityLabels {
    pub fn from_names<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut names = Vec::new();
        let of_record = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l).or_insert_with(|| {
                    names.push(l.to_string());
                    (names.len() - 1) as u32
                })
            })
            .collect();
        EntityLabels {
            of_record,
            names: Some(names),
        }
    }

    /// Labels given directly as dense indices `0..count`.
    pub fn from_indices(of_record: Vec<u32>) -> Self {
        EntityLabels {
            of_record,
            names: None,
        }
    }

    fn count(&self) -> usize {
        match &self.names {
            Some(n) => n.len(),
            None => self.of_record.iter().map(|&e| e as usize + 1).max().unwrap_or(0),
        }
    }
}

/// An immutable set of records.
///
/// Entities are given by ground-truth labels when present; otherwise two
/// records are the same entity exactly when their features are equal.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Features,
    values: Vec<f64>,
    ids: Option<Vec<String>>,
    labels: Option<EntityLabels>,
    value_keys: Vec<u32>,
    value_key_count: usize,
    entity_count: usize,
    label_conflicts: usize,
}

impl Dataset {
    pub fn new(
        features: Features,
        values: Vec<f64>,
        ids: Option<Vec<String>>,
        labels: Option<EntityLabels>,
    ) -> Result<Self> {
        let n = features.len();
        if let Features::Vectors { dim, data } = &features {
            if *dim == 0 && !data.is_empty() {
                return Err(Error::Config("vector dimension must be positive".into()));
            }
            if *dim > 0 && data.len() % dim != 0 {
                return Err(Error::Config(format!(
                    "feature buffer of length {} is not a multiple of dimension {dim}",
                    data.len()
                )));
            }
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("features must be finite".into()));
            }
        }
        if values.len() != n {
            return Err(Error::Config(format!(
                "{} values for {n} records",
                values.len()
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::Config(format!("{} ids for {n} records", ids.len())));
            }
        }
        if let Some(l) = &labels {
            if l.of_record.len() != n {
                return Err(Error::Config(format!(
                    "{} entity labels for {n} records",
                    l.of_record.len()
                )));
            }
        }
        let (value_keys, value_key_count) = feature_classes(&features);
        Ok(Self::assemble(features, values, ids, labels, value_keys, value_key_count))
    }

    /// Constructor for callers that already know the feature-equality classes.
    pub(crate) fn assemble(
        features: Features,
        values: Vec<f64>,
        ids: Option<Vec<String>>,
        labels: Option<EntityLabels>,
        value_keys: Vec<u32>,
        value_key_count: usize,
    ) -> Self {
        let entity_count = labels
            .as_ref()
            .map_or(value_key_count, EntityLabels::count);
        let label_conflicts = labels
            .as_ref()
            .map_or(0, |l| count_conflicts(&value_keys, value_key_count, &l.of_record));
        if label_conflicts > 0 {
            warn!(
                "{label_conflicts} groups of identical feature vectors carry more than one entity label"
            );
        }
        Dataset {
            features,
            values,
            ids,
            labels,
            value_keys,
            value_key_count,
            entity_count,
            label_conflicts,
        }
    }

    pub fn from_vectors(dim: usize, data: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(Features::vectors(dim, data), values, None, None)
    }

    pub fn with_labels(self, labels: EntityLabels) -> Result<Self> {
        Self::new(self.features, self.values, self.ids, Some(labels))
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::Config(format!(
                "{} ids for {} records",
                ids.len(),
                self.len()
            )));
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.features {
            Features::Vectors { dim, .. } => Some(*dim),
            Features::Text { .. } => None,
        }
    }

    /// Feature vector of record `i`; `None` for text datasets.
    pub fn vector(&self, i: usize) -> Option<&[f64]> {
        match &self.features {
            Features::Vectors { dim, data } => Some(&data[i * dim..(i + 1) * dim]),
            Features::Text { .. } => None,
        }
    }

    pub fn text(&self, i: usize) -> Option<&str> {
        match &self.features {
            Features::Text { texts, .. } => Some(&texts[i]),
            Features::Vectors { .. } => None,
        }
    }

    pub fn shingles(&self, i: usize) -> Option<&[u64]> {
        match &self.features {
            Features::Text { shingles, .. } => Some(&shingles[i]),
            Features::Vectors { .. } => None,
        }
    }

    /// Euclidean distance for vectors, 3-gram Jaccard distance for text.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.features {
            Features::Vectors { dim, data } => {
                let a = &data[i * dim..(i + 1) * dim];
                let b = &data[j * dim..(j + 1) * dim];
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            }
            Features::Text { shingles, .. } => jaccard_distance(&shingles[i], &shingles[j]),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn record_id(&self, i: usize) -> Cow<'_, str> {
        match &self.ids {
            Some(ids) => Cow::Borrowed(&ids[i]),
            None => Cow::Owned(i.to_string()),
        }
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn labels(&self) -> Option<&EntityLabels> {
        self.labels.as_ref()
    }

    /// Feature-equality class of every record. Estimators that must not see
    /// ground truth work from these.
    pub fn value_keys(&self) -> &[u32] {
        &self.value_keys
    }

    pub fn value_key_count(&self) -> usize {
        self.value_key_count
    }

    /// Entity index of every record.
    pub fn entities(&self) -> &[u32] {
        match &self.labels {
            Some(l) => &l.of_record,
            None => &self.value_keys,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    /// Number of identical-feature groups that span several entity labels.
    pub fn label_conflicts(&self) -> usize {
        self.label_conflicts
    }

    pub fn entity_name(&self, e: u32) -> String {
        match &self.labels {
            Some(EntityLabels {
                names: Some(names), ..
            }) => names[e as usize].clone(),
            Some(_) => format!("e{e}"),
            None => {
                // Name a feature class after its first record.
                let first = self
                    .value_keys
                    .iter()
                    .position(|&k| k == e)
                    .expect("entity index in range");
                self.record_id(first).into_owned()
            }
        }
    }

    /// Names for all entities, indexed by entity.
    pub fn entity_names(&self) -> Vec<String> {
        match &self.labels {
            Some(EntityLabels {
                names: Some(names), ..
            }) => names.clone(),
            Some(_) => (0..self.entity_count).map(|e| format!("e{e}")).collect(),
            None => {
                let mut names = vec![String::new(); self.entity_count];
                let mut seen = vec![false; self.entity_count];
                for (i, &k) in self.value_keys.iter().enumerate() {
                    if !seen[k as usize] {
                        seen[k as usize] = true;
                        names[k as usize] = self.record_id(i).into_owned();
                    }
                }
                names
            }
        }
    }

    /// Per-entity record counts, indexed by entity.
    pub fn entity_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.entity_count];
        for &e in self.entities() {
            counts[e as usize] += 1;
        }
        counts
    }

    pub fn entity_table(&self) -> EntityTable {
        EntityTable::new(self.entity_names(), self.entity_counts())
    }

    /// Mean of the value column over distinct entities (each entity's value
    /// is taken from its first record).
    pub fn entity_mean(&self) -> f64 {
        let mut seen = vec![false; self.entity_count];
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, &e) in self.entities().iter().enumerate() {
            if !seen[e as usize] {
                seen[e as usize] = true;
                sum += self.values[i];
                count += 1;
            }
        }
        sum / count as f64
    }
}

fn feature_classes(features: &Features) -> (Vec<u32>, usize) {
    let n = features.len();
    let mut keys = Vec::with_capacity(n);
    // hash -> list of (representative record, class)
    let mut buckets: HashMap<u64, Vec<(usize, u32)>> = HashMap::with_capacity(n);
    let mut count = 0u32;
    for i in 0..n {
        let h = record_hash(features, i);
        let bucket = buckets.entry(h).or_default();
        let key = match bucket
            .iter()
            .find(|(rep, _)| records_equal(features, *rep, i))
        {
            Some(&(_, k)) => k,
            None => {
                bucket.push((i, count));
                count += 1;
                count - 1
            }
        };
        keys.push(key);
    }
    (keys, count as usize)
}

fn record_hash(features: &Features, i: usize) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    match features {
        Features::Vectors { dim, data } => {
            for x in &data[i * dim..(i + 1) * dim] {
                // +0.0 and -0.0 compare equal
                let x = if *x == 0.0 { 0.0f64 } else { *x };
                x.to_bits().hash(&mut h);
            }
        }
        Features::Text { texts, .. } => texts[i].hash(&mut h),
    }
    h.finish()
}

fn records_equal(features: &Features, a: usize, b: usize) -> bool {
    match features {
        Features::Vectors { dim, data } => data[a * dim..(a + 1) * dim] == data[b * dim..(b + 1) * dim],
        Features::Text { texts, .. } => texts[a] == texts[b],
    }
}

fn count_conflicts(value_keys: &[u32], key_count: usize, labels: &[u32]) -> usize {
    let mut first: Vec<Option<u32>> = vec![None; key_count];
    let mut conflicted = vec![false; key_count];
    for (&k, &l) in value_keys.iter().zip(labels) {
        match first[k as usize] {
            None => first[k as usize] = Some(l),
            Some(f) if f != l => conflicted[k as usize] = true,
            Some(_) => {}
        }
    }
    conflicted.iter().filter(|&&c| c).count()
}

/// Distinct entities with their frequencies and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityTable {
    pub entities: Vec<String>,
    pub freq: Vec<u64>,
    pub prob: Vec<f64>,
}

impl EntityTable {
    pub fn new(entities: Vec<String>, freq: Vec<u64>) -> Self {
        let n: u64 = freq.iter().sum();
        let prob = freq.iter().map(|&f| f as f64 / n as f64).collect();
        EntityTable {
            entities,
            freq,
            prob,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.freq.iter().sum()
    }

    pub fn prob_of(&self, entity: &str) -> Option<f64> {
        self.entities
            .iter()
            .position(|e| e == entity)
            .map(|i| self.prob[i])
    }

    /// Balance parameter: the smallest entity probability.
    pub fn eta(&self) -> f64 {
        self.prob.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest entity probability.
    pub fn eta_max(&self) -> f64 {
        self.prob.iter().copied().fold(0.0, f64::max)
    }

    /// Uniform distribution over the entities.
    pub fn uniform(&self) -> DiscreteDistribution {
        DiscreteDistribution::uniform(self.entities.iter().cloned())
    }
}

/// A probability distribution over a finite set of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    mass: BTreeMap<String, f64>,
}

impl DiscreteDistribution {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(mass: BTreeMap<String, f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some((k, v)) = mass.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("mass {v} at `{k}`")));
        }
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > Self::TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {total}"
            )));
        }
        Ok(DiscreteDistribution { mass })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights<I, S>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut mass = BTreeMap::new();
        for (k, w) in weights {
            *mass.entry(k.into()).or_insert(0.0) += w;
        }
        let total: f64 = mass.values().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        for v in mass.values_mut() {
            *v /= total;
        }
        Self::new(mass)
    }

    pub fn uniform<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let w = 1.0 / labels.len() as f64;
        DiscreteDistribution {
            mass: labels.into_iter().map(|l| (l, w)).collect(),
        }
    }

    pub fn mass(&self, label: &str) -> f64 {
        self.mass.get(label).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &str> {
        self.mass.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.mass.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }
}

/// Total variation distance, computed as half the L1 distance over the
/// union of the supports.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut l1 = 0.0;
    for (k, v) in &p.mass {
        l1 += (v - q.mass(k)).abs();
    }
    for (k, v) in &q.mass {
        if !p.mass.contains_key(k) {
            l1 += v;
        }
    }
    (0.5 * l1).min(1.0)
}

/// `|real - estimate| / |real|`.
pub fn relative_error(real_avg: f64, est_avg: f64) -> Result<f64> {
    if real_avg == 0.0 || !real_avg.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "relative error against a real average of {real_avg}"
        )));
    }
    Ok((real_avg - est_avg).abs() / real_avg.abs())
}

pub fn empirical_distribution<I, S>(sample: I) -> Result<DiscreteDistribution>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for s in sample {
        *counts.entry(s.into()).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::InvalidDistribution("empty sample".into()));
    }
    let mass = counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect();
    DiscreteDistribution::new(mass)
}
