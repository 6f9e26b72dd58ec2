//! Banded LSH blocking: records that agree on every hash of at least one
//! band end up in the same block (transitively).

use std::collections::{BTreeMap, HashMap};

use petgraph::unionfind::UnionFind;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::config::{HashFamily, LshConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, Features};
use crate::rng::{self, mix64};

/// Partition of record indices into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Blocking {
    /// Members sorted ascending; blocks ordered by their smallest member.
    pub blocks: Vec<Vec<usize>>,
}

impl Blocking {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Self {
        blocks.retain(|b| !b.is_empty());
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        Blocking { blocks }
    }

    /// Everything in one block.
    pub fn single(n: usize) -> Self {
        Blocking::new(vec![(0..n).collect()])
    }

    pub fn q(&self) -> usize {
        self.blocks.len()
    }

    /// Block index of every record.
    pub fn block_of(&self, n: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n];
        for (b, members) in self.blocks.iter().enumerate() {
            for &i in members {
                out[i] = b;
            }
        }
        out
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.blocks
            .iter()
            .any(|blk| blk.binary_search(&a).is_ok() && blk.binary_search(&b).is_ok())
    }

    /// Number of blocks of each size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for b in &self.blocks {
            *h.entry(b.len()).or_insert(0) += 1;
        }
        h
    }

    pub fn report(&self) -> BlockingReport {
        BlockingReport {
            q: self.q(),
            records: self.blocks.iter().map(Vec::len).sum(),
            largest: self.blocks.iter().map(Vec::len).max().unwrap_or(0),
            size_histogram: self.size_histogram(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockingReport {
    pub q: usize,
    pub records: usize,
    pub largest: usize,
    pub size_histogram: BTreeMap<usize, usize>,
}

/// `r·s` i.i.d. hash functions from the configured family.
enum Hasher {
    MinHash { seeds: Vec<u64> },
    Hyperplane { dim: usize, normals: Vec<f64> },
}

impl Hasher {
    fn sample(cfg: &LshConfig, data: &Dataset, seed: u64) -> Result<Self> {
        let k = cfg.hash_count();
        let mut rng = rng::rng(seed);
        match (cfg.hash_family, data.features()) {
            (HashFamily::MinHash, Features::Text { .. }) => Ok(Hasher::MinHash {
                seeds: (0..k).map(|j| rng::derive_seed(seed, j as u64)).collect(),
            }),
            (HashFamily::RandomHyperplane, Features::Vectors { dim, .. }) => Ok(Hasher::Hyperplane {
                dim: *dim,
                normals: (0..k * dim).map(|_| StandardNormal.sample(&mut rng)).collect(),
            }),
            (HashFamily::MinHash, _) => Err(Error::Representation(
                "minhash needs text records".into(),
            )),
            (HashFamily::RandomHyperplane, _) => Err(Error::Representation(
                "random hyperplanes need vector records".into(),
            )),
        }
    }

    fn signature(&self, data: &Dataset, i: usize, out: &mut Vec<u64>) {
        out.clear();
        match self {
            Hasher::MinHash { seeds } => {
                let grams = data.shingles(i).expect("text record");
                out.extend(seeds.iter().map(|&s| {
                    grams
                        .iter()
                        .map(|&g| mix64(g ^ s))
                        .min()
                        .unwrap_or(u64::MAX)
                }));
            }
            Hasher::Hyperplane { dim, normals } => {
                let x = data.vector(i).expect("vector record");
                out.extend(normals.chunks_exact(*dim).map(|w| {
                    let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                    u64::from(dot >= 0.0)
                }));
            }
        }
    }
}

/// Hashes every record with `r·s` functions and merges records that share
/// any complete band signature.
pub fn lsh_partition(data: &Dataset, cfg: &LshConfig, seed: u64) -> Result<Blocking> {
    let n = data.len();
    let hasher = Hasher::sample(cfg, data, seed)?;
    let mut uf = UnionFind::<usize>::new(n);
    let mut buckets: Vec<HashMap<Vec<u64>, usize>> = vec![HashMap::new(); cfg.s];
    let mut sig = Vec::with_capacity(cfg.hash_count());
    for i in 0..n {
        hasher.signature(data, i, &mut sig);
        for (band, bucket) in buckets.iter_mut().enumerate() {
            let key = sig[band * cfg.r..(band + 1) * cfg.r].to_vec();
            match bucket.get(&key) {
                Some(&first) => {
                    uf.union(first, i);
                }
                None => {
                    bucket.insert(key, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    Ok(Blocking::new(groups.into_values().collect()))
}
