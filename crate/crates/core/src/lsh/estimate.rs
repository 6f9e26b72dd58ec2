use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::blocking::Blocking;
use super::kmeans::{regularized_kmeans_matrix, singleton_prefilter, Clustering, KMeansOptions, SquaredDistances};
use super::ssc::{ssc_select, OnExhaustion, PairSampling, SameClusterOracle, SscInstance, DEFAULT_MU_WEIGHT};
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::derive_seed;
use crate::sampler::ProbabilityMap;

pub const SOURCE: &str = "lsh";

/// Blocks above this size get a warning: clustering is quadratic in memory.
const LARGE_BLOCK: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KRanges {
    Global { k_min: usize, k_max: usize },
    /// One `(k_min, k_max)` per block, in block order.
    PerBlock(Vec<(usize, usize)>),
}

impl KRanges {
    fn get(&self, block: usize) -> Result<(usize, usize)> {
        let (lo, hi) = match self {
            KRanges::Global { k_min, k_max } => (*k_min, *k_max),
            KRanges::PerBlock(v) => *v.get(block).ok_or_else(|| {
                Error::Config(format!("no k range for block {block} ({} given)", v.len()))
            })?,
        };
        if lo > hi {
            return Err(Error::param("k_ranges", format!("block {block}: {lo} > {hi}")));
        }
        Ok((lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetSplit {
    /// `m/q` pairs per block.
    #[default]
    Equal,
    /// Pairs proportional to block size.
    Proportional,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LshOptions {
    pub k_ranges: KRanges,
    pub mu_radius: f64,
    pub mu_weight: f64,
    /// Total pair budget; `None` queries every pair inside each block.
    pub budget: Option<u64>,
    pub split: BudgetSplit,
    pub kmeans: KMeansOptions,
}

impl LshOptions {
    pub fn new(k_ranges: KRanges, mu_radius: f64) -> Self {
        LshOptions {
            k_ranges,
            mu_radius,
            mu_weight: DEFAULT_MU_WEIGHT,
            budget: None,
            split: BudgetSplit::Equal,
            kmeans: KMeansOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockOutcome {
    pub block: usize,
    pub size: usize,
    pub k: usize,
    pub candidates: usize,
    pub queries: u64,
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LshEstimate {
    pub map: ProbabilityMap,
    /// Global cluster id of every record; garbage records get their own id.
    pub cluster_of: Vec<usize>,
    pub blocks: Vec<BlockOutcome>,
}

impl LshEstimate {
    pub fn cluster_count(&self) -> usize {
        self.cluster_of.iter().max().map_or(0, |m| m + 1)
    }

    pub fn total_queries(&self) -> u64 {
        self.blocks.iter().map(|b| b.queries).sum()
    }
}

/// Clusters each block for every `k` in its range, keeps the SSC winner and
/// sets `p̂(record) = |cluster| / n`.
pub fn estimate_probs_lsh(
    data: &Dataset,
    blocking: &Blocking,
    opts: &LshOptions,
    oracle: &dyn SameClusterOracle,
    seed: u64,
) -> Result<LshEstimate> {
    let n = data.len();
    if n == 0 {
        return Err(Error::param("data", "empty dataset"));
    }
    let covered: usize = blocking.blocks.iter().map(Vec::len).sum();
    if covered != n {
        return Err(Error::Config(format!(
            "blocking covers {covered} records, dataset has {n}"
        )));
    }
    let q = blocking.q();
    let results: Vec<(Clustering, BlockOutcome)> = blocking
        .blocks
        .par_iter()
        .enumerate()
        .map(|(b, block)| {
            let pairs = opts.budget.map(|m| match opts.split {
                BudgetSplit::Equal => (m / q as u64).max(1) as usize,
                BudgetSplit::Proportional => {
                    ((m as f64 * block.len() as f64 / n as f64).round() as usize).max(1)
                }
            });
            cluster_block(data, b, block, opts, pairs, oracle, derive_seed(seed, b as u64))
        })
        .collect::<Result<_>>()?;

    let mut cluster_of = vec![usize::MAX; n];
    let mut next = 0;
    let mut phat = vec![0.0; n];
    let mut blocks = Vec::with_capacity(q);
    for (clustering, outcome) in results {
        for group in clustering.groups() {
            let p = group.len() as f64 / n as f64;
            for &i in &group {
                cluster_of[i] = next;
                phat[i] = p;
            }
            next += 1;
        }
        blocks.push(outcome);
    }
    Ok(LshEstimate {
        map: ProbabilityMap::new(phat, SOURCE)?,
        cluster_of,
        blocks,
    })
}

fn cluster_block(
    data: &Dataset,
    b: usize,
    block: &[usize],
    opts: &LshOptions,
    pairs: Option<usize>,
    oracle: &dyn SameClusterOracle,
    seed: u64,
) -> Result<(Clustering, BlockOutcome)> {
    let mut outcome = BlockOutcome {
        block: b,
        size: block.len(),
        k: 0,
        candidates: 0,
        queries: 0,
        loss: None,
    };
    if block.len() < 2 {
        return Ok((Clustering::all_garbage(block), outcome));
    }
    if block.len() > LARGE_BLOCK {
        log::warn!("block {b} holds {} records; consider a smaller lambda", block.len());
    }
    let d2 = SquaredDistances::from_dataset(data, block);
    let retained = singleton_prefilter(&d2, opts.mu_radius)
        .iter()
        .filter(|&&g| !g)
        .count();
    let to_records = |c: Clustering| {
        Clustering::new(
            c.clusters.iter().map(|cl| cl.iter().map(|&i| block[i]).collect()).collect(),
            c.garbage.iter().map(|&i| block[i]).collect(),
        )
    };
    if retained == 0 {
        return Ok((Clustering::all_garbage(block), outcome));
    }
    let (k_min, k_max) = opts.k_ranges.get(b)?;
    let lo = k_min.max(1).min(retained);
    let hi = k_max.min(retained).max(lo);
    let kopts = KMeansOptions {
        seed: derive_seed(seed, 0),
        ..opts.kmeans
    };
    let candidates: Vec<Clustering> = (lo..=hi)
        .map(|k| regularized_kmeans_matrix(&d2, k, opts.mu_radius, &kopts).map(to_records))
        .collect::<Result<_>>()?;
    outcome.candidates = candidates.len();
    if candidates.len() == 1 {
        let only = candidates.into_iter().next().expect("one candidate");
        outcome.k = only.k();
        return Ok((only, outcome));
    }
    let sampling = match pairs {
        Some(m_pairs) => PairSampling::Sampled { m_pairs },
        None => PairSampling::Exhaustive,
    };
    let mut inst = SscInstance::new(block.to_vec(), candidates, sampling, oracle);
    inst.mu_weight = opts.mu_weight;
    inst.on_exhaustion = OnExhaustion::UsePartial;
    let out = ssc_select(&inst, derive_seed(seed, 1))?;
    outcome.k = out.clustering.k();
    outcome.queries = out.queries;
    outcome.loss = Some(out.losses[out.index]);
    Ok((out.clustering, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsh::ssc::LabelOracle;
    use crate::model::EntityLabels;
    use crate::sampler::induced_tv_to_uniform;

    fn planted() -> (Dataset, Blocking) {
        // three far-apart blocks; entities of sizes 1..=3 inside each
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        let mut blocks = Vec::new();
        let mut e = 0u32;
        for b in 0..3 {
            let mut members = Vec::new();
            for (j, size) in [1usize, 2, 3, 2].iter().enumerate() {
                for t in 0..*size {
                    members.push(coords.len() / 2);
                    coords.push(100.0 * b as f64 + 10.0 * j as f64 + 0.1 * t as f64);
                    coords.push(0.0);
                    labels.push(e);
                }
                e += 1;
            }
            blocks.push(members);
        }
        let n = labels.len();
        let data = Dataset::from_vectors(2, coords, vec![1.0; n])
            .unwrap()
            .with_labels(EntityLabels::from_indices(labels))
            .unwrap();
        (data, Blocking::new(blocks))
    }

    #[test]
    fn planted_blocks_recover_exact_probabilities() {
        let (data, blocking) = planted();
        let oracle = LabelOracle::new(&data).unwrap();
        let opts = LshOptions::new(KRanges::Global { k_min: 1, k_max: 4 }, 1.0);
        let est = estimate_probs_lsh(&data, &blocking, &opts, &oracle, 9).unwrap();
        let exact = ProbabilityMap::exact(&data).unwrap();
        for i in 0..data.len() {
            assert!((est.map.get(i).unwrap() - exact.get(i).unwrap()).abs() < 1e-15);
        }
        assert!(induced_tv_to_uniform(&data, &est.map).unwrap() < 1e-12);
        assert_eq!(est.cluster_count(), 12);
    }

    #[test]
    fn no_duplicates_gives_uniform_map() {
        let coords: Vec<f64> = (0..20).flat_map(|i| [i as f64 * 5.0, 0.0]).collect();
        let labels = EntityLabels::from_indices((0..20).collect());
        let data = Dataset::from_vectors(2, coords, vec![0.0; 20])
            .unwrap()
            .with_labels(labels)
            .unwrap();
        let oracle = LabelOracle::new(&data).unwrap();
        let mut opts = LshOptions::new(KRanges::Global { k_min: 1, k_max: 3 }, 1.0);
        opts.budget = Some(50);
        let est = estimate_probs_lsh(&data, &Blocking::single(20), &opts, &oracle, 0).unwrap();
        assert!(est.map.values().iter().all(|&p| (p - 0.05).abs() < 1e-15));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let (data, blocking) = planted();
        let oracle = LabelOracle::new(&data).unwrap();
        let mut opts = LshOptions::new(KRanges::Global { k_min: 1, k_max: 4 }, 1.0);
        opts.budget = Some(30);
        let a = estimate_probs_lsh(&data, &blocking, &opts, &oracle, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| estimate_probs_lsh(&data, &blocking, &opts, &oracle, 5))
            .unwrap();
        assert_eq!(a.map.values(), b.map.values());
        assert_eq!(a.cluster_of, b.cluster_of);
    }

    #[test]
    fn cluster_mass_sums_to_one() {
        let (data, blocking) = planted();
        let oracle = LabelOracle::new(&data).unwrap();
        let opts = LshOptions::new(KRanges::PerBlock(vec![(2, 2), (3, 3), (1, 9)]), 1.0);
        let est = estimate_probs_lsh(&data, &blocking, &opts, &oracle, 1).unwrap();
        let mut mass = vec![0.0; est.cluster_count()];
        for (i, &c) in est.cluster_of.iter().enumerate() {
            mass[c] = est.map.get(i).unwrap();
        }
        assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
