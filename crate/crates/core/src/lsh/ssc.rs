//! Model selection among candidate clusterings from same-cluster queries.
//!
//! Pairs of points are drawn uniformly (distinct unordered pairs) and routed
//! by an oracle into positive (same entity) and negative sets. Each candidate
//! is scored by `μ·pl + (1−μ)·nl`, where `pl` is the fraction of positive
//! pairs it separates and `nl` the fraction of negative pairs it joins.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use super::kmeans::Clustering;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;

/// Answers "are these two records the same entity?".
pub trait SameClusterOracle: Sync {
    fn same(&self, a: usize, b: usize) -> bool;
}

/// Oracle backed by ground-truth entity labels.
#[derive(Debug, Clone, Copy)]
pub struct LabelOracle<'a> {
    entities: &'a [u32],
}

impl<'a> LabelOracle<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        match data.labels() {
            Some(l) => Ok(LabelOracle {
                entities: &l.of_record,
            }),
            None => Err(Error::Config(
                "the label oracle needs an entity column".into(),
            )),
        }
    }

    pub fn from_entities(entities: &'a [u32]) -> Self {
        LabelOracle { entities }
    }
}

impl SameClusterOracle for LabelOracle<'_> {
    fn same(&self, a: usize, b: usize) -> bool {
        self.entities[a] == self.entities[b]
    }
}

impl<F: Fn(usize, usize) -> bool + Sync> SameClusterOracle for F {
    fn same(&self, a: usize, b: usize) -> bool {
        self(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairSampling {
    /// Query every pair once.
    Exhaustive,
    /// Draw pairs until both sets hold `m_pairs` pairs.
    Sampled { m_pairs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum OnExhaustion {
    #[default]
    Fail,
    /// Score with whatever pairs were collected; an empty set contributes 0.
    UsePartial,
}

pub const DEFAULT_MU_WEIGHT: f64 = 0.5;
/// Answers used to estimate the positive rate for the query cap.
pub const GAMMA_WARMUP: u64 = 100;

pub struct SscInstance<'a> {
    /// Record indices the candidates partition.
    pub points: Vec<usize>,
    pub candidates: Vec<Clustering>,
    pub mu_weight: f64,
    pub sampling: PairSampling,
    pub oracle: &'a dyn SameClusterOracle,
    pub on_exhaustion: OnExhaustion,
}

impl<'a> SscInstance<'a> {
    pub fn new(
        points: Vec<usize>,
        candidates: Vec<Clustering>,
        sampling: PairSampling,
        oracle: &'a dyn SameClusterOracle,
    ) -> Self {
        SscInstance {
            points,
            candidates,
            mu_weight: DEFAULT_MU_WEIGHT,
            sampling,
            oracle,
            on_exhaustion: OnExhaustion::Fail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SscOutcome {
    pub index: usize,
    pub clustering: Clustering,
    pub losses: Vec<f64>,
    pub queries: u64,
    pub positives: usize,
    pub negatives: usize,
    /// Positive rate estimated from the warm-up answers (Laplace-smoothed).
    pub gamma_hat: Option<f64>,
    pub query_cap: Option<u64>,
    pub exhausted: bool,
}

/// Pair budget per set so every candidate's empirical loss is within `eps`
/// of its true loss with probability `1 − delta`.
pub fn plan_pair_budget(eps: f64, delta: f64, candidates: usize, a: f64) -> Result<usize> {
    check_unit("epsilon", eps)?;
    check_unit("delta", delta)?;
    if candidates == 0 {
        return Err(Error::param("candidates", "at least one candidate is needed"));
    }
    if !(a > 0.0) {
        return Err(Error::param("a", format!("{a} is not positive")));
    }
    let m = a * ((candidates as f64).ln() + (2.0 / delta).ln()) / (eps * eps);
    Ok(m.ceil().max(1.0) as usize)
}

/// Total pair budget over `q` blocks so every block selects a clustering
/// within `alpha` of its best candidate with probability `1 − delta`.
pub fn plan_lsh_budget(alpha: f64, delta: f64, candidates: usize, q: usize, a: f64) -> Result<u64> {
    check_unit("alpha", alpha)?;
    check_unit("delta", delta)?;
    if candidates == 0 || q == 0 {
        return Err(Error::param("candidates", "need at least one block and candidate"));
    }
    let qf = q as f64;
    let m = a * qf * ((candidates as f64).ln() + (2.0 * qf / delta).ln()) / (alpha * alpha);
    Ok(m.ceil().max(1.0) as u64)
}

/// Query cap for collecting `m` pairs of each kind at positive rate `gamma`.
pub fn query_cap(m: usize, gamma: f64) -> u64 {
    let m = m as f64;
    (2.0 * (m / gamma + m / (1.0 - gamma))).ceil() as u64
}

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("{x} is not in (0, 1)")))
    }
}

/// Draws distinct unordered pairs of `0..n` uniformly.
struct PairStream {
    n: usize,
    total: u64,
    drawn: u64,
    listed: Option<Vec<(u32, u32)>>,
    seen: HashSet<(u32, u32)>,
}

const LISTED_PAIRS: u64 = 1 << 20;

impl PairStream {
    fn new(n: usize) -> Self {
        let total = (n as u64) * (n as u64).saturating_sub(1) / 2;
        let listed = (total <= LISTED_PAIRS).then(|| {
            let mut v = Vec::with_capacity(total as usize);
            for a in 0..n as u32 {
                for b in a + 1..n as u32 {
                    v.push((a, b));
                }
            }
            v
        });
        PairStream {
            n,
            total,
            drawn: 0,
            listed,
            seen: HashSet::new(),
        }
    }

    fn next(&mut self, rng: &mut rng::Rng) -> Option<(usize, usize)> {
        if self.drawn == self.total {
            return None;
        }
        let pair = match &mut self.listed {
            Some(v) => {
                // incremental Fisher-Yates
                let i = self.drawn as usize;
                let j = rng.random_range(i..v.len());
                v.swap(i, j);
                v[i]
            }
            None => loop {
                let a = rng.random_range(0..self.n as u32);
                let b = rng.random_range(0..self.n as u32);
                if a == b {
                    continue;
                }
                let p = (a.min(b), a.max(b));
                if self.seen.insert(p) {
                    break p;
                }
            },
        };
        self.drawn += 1;
        Some((pair.0 as usize, pair.1 as usize))
    }
}

/// Group id per point for fast pair tests.
fn group_index(c: &Clustering) -> HashMap<usize, usize> {
    c.assignment().into_iter().collect()
}

/// Fractions of positive pairs separated and negative pairs joined.
fn pair_fractions(
    groups: &HashMap<usize, usize>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> (f64, f64) {
    let split = |&(a, b): &(usize, usize)| groups.get(&a) != groups.get(&b) || !groups.contains_key(&a);
    let pl = if pos.is_empty() {
        0.0
    } else {
        pos.iter().filter(|p| split(p)).count() as f64 / pos.len() as f64
    };
    let nl = if neg.is_empty() {
        0.0
    } else {
        neg.iter().filter(|p| !split(p)).count() as f64 / neg.len() as f64
    };
    (pl, nl)
}

/// Loss of `candidate` against the oracle over every pair of `points`.
pub fn true_loss(
    candidate: &Clustering,
    points: &[usize],
    oracle: &dyn SameClusterOracle,
    mu_weight: f64,
) -> f64 {
    let (pos, neg) = all_pairs(points, oracle);
    let (pl, nl) = pair_fractions(&group_index(candidate), &pos, &neg);
    mu_weight * pl + (1.0 - mu_weight) * nl
}

type PairSets = (Vec<(usize, usize)>, Vec<(usize, usize)>);

fn all_pairs(points: &[usize], oracle: &dyn SameClusterOracle) -> PairSets {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &a) in points.iter().enumerate() {
        for &b in &points[i + 1..] {
            if oracle.same(a, b) {
                pos.push((a, b));
            } else {
                neg.push((a, b));
            }
        }
    }
    (pos, neg)
}

/// Empirical risk minimization over `inst.candidates`; ties go to the
/// candidate with fewer clusters, then to the earlier candidate.
pub fn ssc_select(inst: &SscInstance<'_>, seed: u64) -> Result<SscOutcome> {
    if inst.candidates.is_empty() {
        return Err(Error::param("candidates", "no candidate clusterings"));
    }
    if !(0.0..=1.0).contains(&inst.mu_weight) {
        return Err(Error::param("mu_weight", format!("{} is not in [0, 1]", inst.mu_weight)));
    }
    let mut queries = 0u64;
    let mut gamma_hat = None;
    let mut cap = None;
    let mut exhausted = false;
    let (pos, neg) = match inst.sampling {
        PairSampling::Exhaustive => {
            let sets = all_pairs(&inst.points, inst.oracle);
            queries = (sets.0.len() + sets.1.len()) as u64;
            sets
        }
        PairSampling::Sampled { m_pairs } => {
            if m_pairs == 0 {
                return Err(Error::param("m_pairs", "pair budget must be at least 1"));
            }
            let mut rng = rng::rng(seed);
            let mut stream = PairStream::new(inst.points.len());
            let mut pos = Vec::with_capacity(m_pairs);
            let mut neg = Vec::with_capacity(m_pairs);
            let mut warm_pos = 0u64;
            while pos.len() < m_pairs || neg.len() < m_pairs {
                if let Some(c) = cap {
                    if queries >= c {
                        exhausted = true;
                        break;
                    }
                }
                let Some((i, j)) = stream.next(&mut rng) else {
                    exhausted = true;
                    break;
                };
                let (a, b) = (inst.points[i], inst.points[j]);
                let same = inst.oracle.same(a, b);
                queries += 1;
                if queries <= GAMMA_WARMUP && same {
                    warm_pos += 1;
                }
                if queries == GAMMA_WARMUP {
                    let g = (warm_pos as f64 + 1.0) / (GAMMA_WARMUP as f64 + 2.0);
                    gamma_hat = Some(g);
                    cap = Some(query_cap(m_pairs, g));
                }
                if same {
                    if pos.len() < m_pairs {
                        pos.push((a, b));
                    }
                } else if neg.len() < m_pairs {
                    neg.push((a, b));
                }
            }
            if gamma_hat.is_none() && queries > 0 {
                gamma_hat = Some((warm_pos as f64 + 1.0) / (queries as f64 + 2.0));
            }
            (pos, neg)
        }
    };
    if exhausted && inst.on_exhaustion == OnExhaustion::Fail {
        return Err(Error::OracleExhausted {
            queries,
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    if exhausted {
        log::debug!(
            "pair sampling exhausted after {queries} queries ({} positive, {} negative)",
            pos.len(),
            neg.len()
        );
    }

    let losses: Vec<f64> = inst
        .candidates
        .iter()
        .map(|c| {
            let (pl, nl) = pair_fractions(&group_index(c), &pos, &neg);
            inst.mu_weight * pl + (1.0 - inst.mu_weight) * nl
        })
        .collect();
    let index = (0..losses.len())
        .min_by(|&a, &b| {
            losses[a]
                .total_cmp(&losses[b])
                .then(inst.candidates[a].k().cmp(&inst.candidates[b].k()))
                .then(a.cmp(&b))
        })
        .expect("nonempty");
    Ok(SscOutcome {
        index,
        clustering: inst.candidates[index].clone(),
        losses,
        queries,
        positives: pos.len(),
        negatives: neg.len(),
        gamma_hat,
        query_cap: cap,
        exhausted,
    })
}

/// Random relabelling of a clustering's cluster order, for invariance checks.
pub fn shuffled_labels(c: &Clustering, seed: u64) -> Clustering {
    let mut clusters = c.clusters.clone();
    clusters.shuffle(&mut rng::rng(seed));
    Clustering {
        clusters,
        garbage: c.garbage.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // two entities {0,1,2} and {3,4,5}
    const TRUTH: [u32; 6] = [0, 0, 0, 1, 1, 1];

    fn star() -> Clustering {
        Clustering::new(vec![vec![0, 1, 2], vec![3, 4, 5]], vec![])
    }

    fn merged() -> Clustering {
        Clustering::new(vec![(0..6).collect()], vec![])
    }

    #[test]
    fn exhaustive_pairs_pick_the_truth() {
        let oracle = LabelOracle::from_entities(&TRUTH);
        let inst = SscInstance::new(
            (0..6).collect(),
            vec![merged(), star()],
            PairSampling::Exhaustive,
            &oracle,
        );
        let out = ssc_select(&inst, 0).unwrap();
        assert_eq!(out.index, 1);
        assert_eq!(out.losses[1], 0.0);
        assert_eq!(out.queries, 15);
    }

    #[test]
    fn hand_computed_fractions() {
        // 6 positive pairs, 9 negative; merged joins all 9 negatives.
        let oracle = LabelOracle::from_entities(&TRUTH);
        let inst = SscInstance::new(
            (0..6).collect(),
            vec![merged()],
            PairSampling::Exhaustive,
            &oracle,
        );
        let out = ssc_select(&inst, 0).unwrap();
        assert_eq!(out.positives, 6);
        assert_eq!(out.negatives, 9);
        assert!((out.losses[0] - 0.5).abs() < 1e-15);

        // {0,1} {2,3} {4,5}: separates 4 of 6 positives, joins 1 of 9 negatives
        let odd = Clustering::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]], vec![]);
        let l = true_loss(&odd, &[0, 1, 2, 3, 4, 5], &oracle, 0.5);
        assert!((l - (0.5 * 4.0 / 6.0 + 0.5 * 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn ties_prefer_fewer_clusters() {
        let oracle = LabelOracle::from_entities(&TRUTH);
        let a = Clustering::new(vec![vec![0, 1, 2], vec![3, 4, 5]], vec![]);
        let b = Clustering::new(vec![vec![0, 1, 2], vec![3, 4], vec![5]], vec![]);
        let mut inst = SscInstance::new((0..6).collect(), vec![b, a], PairSampling::Exhaustive, &oracle);
        inst.mu_weight = 0.0; // only negatives count, both score 0
        let out = ssc_select(&inst, 0).unwrap();
        assert_eq!(out.index, 1);
    }

    #[test]
    fn no_duplicates_exhausts() {
        let distinct: Vec<u32> = (0..10).collect();
        let oracle = LabelOracle::from_entities(&distinct);
        let inst = SscInstance::new(
            (0..10).collect(),
            vec![Clustering::all_garbage(&(0..10).collect::<Vec<_>>())],
            PairSampling::Sampled { m_pairs: 3 },
            &oracle,
        );
        assert!(matches!(ssc_select(&inst, 1), Err(Error::OracleExhausted { .. })));
        let mut partial = inst;
        partial.on_exhaustion = OnExhaustion::UsePartial;
        let out = ssc_select(&partial, 1).unwrap();
        assert!(out.exhausted);
        assert_eq!(out.positives, 0);
        assert_eq!(out.losses, vec![0.0]);
    }

    #[test]
    fn relabelling_does_not_change_losses() {
        let labels: Vec<u32> = (0..30).map(|i| i / 4).collect();
        let oracle = LabelOracle::from_entities(&labels);
        let c = Clustering::new(
            (0..6).map(|g| (g * 5..g * 5 + 5).collect()).collect(),
            vec![],
        );
        let pts: Vec<usize> = (0..30).collect();
        for seed in 0..10 {
            let d = shuffled_labels(&c, seed);
            let a = SscInstance::new(pts.clone(), vec![c.clone()], PairSampling::Sampled { m_pairs: 20 }, &oracle);
            let b = SscInstance::new(pts.clone(), vec![d], PairSampling::Sampled { m_pairs: 20 }, &oracle);
            assert_eq!(ssc_select(&a, seed).unwrap().losses, ssc_select(&b, seed).unwrap().losses);
        }
    }

    #[test]
    fn planners() {
        assert_eq!(plan_pair_budget(0.1, 0.1, 1, 1.0).unwrap(), 300);
        assert!(plan_pair_budget(0.05, 0.1, 3, 1.0).unwrap() > 4 * plan_pair_budget(0.1, 0.1, 3, 1.0).unwrap() - 4);
        assert!(plan_lsh_budget(0.2, 0.1, 3, 10, 1.0).unwrap() > plan_lsh_budget(0.2, 0.1, 3, 1, 1.0).unwrap());
        assert_eq!(query_cap(10, 0.5), 80);
    }

    #[test]
    fn closure_oracle() {
        let oracle = |a: usize, b: usize| a / 3 == b / 3;
        let inst = SscInstance::new(
            (0..6).collect(),
            vec![merged(), star()],
            PairSampling::Sampled { m_pairs: 4 },
            &oracle,
        );
        assert_eq!(ssc_select(&inst, 3).unwrap().index, 1);
    }
}
