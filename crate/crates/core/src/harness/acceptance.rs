//! End-to-end acceptance checks with pinned tolerances and seeds.
//!
//! Every criterion is a list of clauses. A criterion passes when all of its
//! clauses pass and it finishes inside its time budget. Clauses that cannot
//! hold in general carry a `known_limit` note; the acceptance target reports
//! them as failures but does not abort on them.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::experiment::{run_experiment, DataSource, ExperimentSpec, Method};
use super::inject::DupProfile;
use super::synthetic::{self, XiGmmSpec};
use crate::balanced::{estimate_probs_balanced, goodman_estimate, plan_sample_size, FingerprintStats};
use crate::error::{Error, Result};
use crate::gmm::{em_fit, estimate_probs_gmm, fit_from_sample, gmm_density, plan_gmm, EmOptions, MixtureModel};
use crate::lsh::kmeans::{kmeans_cost, regularized_kmeans_matrix, SquaredDistances};
use crate::lsh::ssc::true_loss;
use crate::lsh::{
    choose_bands_rows, lsh_partition, plan_pair_budget, ssc_select, Clustering, HashFamily, KMeansOptions,
    PairSampling, SameClusterOracle, SscInstance,
};
use crate::model::{jaccard_distance, shingle_set, tv_distance, Dataset, Features, SHINGLE_WIDTH};
use crate::rng::{derive_seed, rng, Rng};
use crate::sampler::{exact_induced_distribution, expected_trials_per_accept, induced_tv_to_uniform, sample_clean, ProbabilityMap};

pub const CRITERIA: [u8; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

/// Base seed of every criterion; each derives its own streams from it.
pub const SEED: u64 = 20_240_601;

pub mod tol {
    pub const EXACT_TV: f64 = 1e-12;
    pub const EXACT_MAX_ENTITIES: usize = 10_000;

    pub const BALANCED_EPS: f64 = 0.1;
    pub const BALANCED_DELTA: f64 = 0.1;
    pub const BALANCED_A: f64 = 1.0;
    pub const BALANCED_ENTITIES: usize = 50;
    pub const BALANCED_ETA: f64 = 0.01;
    pub const BALANCED_N: u64 = 10_000;
    pub const BALANCED_SEEDS: usize = 50;
    pub const BALANCED_MIN_PASS: usize = 45;

    pub const TABLE_ROWS: usize = 1_000_000;
    pub const TABLE_DUPS: [f64; 2] = [0.1, 0.3];
    pub const TABLE_FRACTIONS: [f64; 6] = [0.01, 0.02, 0.04, 0.06, 0.08, 0.1];
    pub const TABLE_REPEATS: usize = 100;
    /// First row of the reference table, duplication 0.1.
    pub const TABLE_REFERENCE: [f64; 6] = [2.12e-3, 1.64e-3, 1.41e-3, 1.23e-3, 1.11e-3, 1.16e-3];
    pub const TABLE_FACTOR: f64 = 5.0;

    pub const LSH_LAMBDA: f64 = 0.2;
    pub const LSH_DELTA: f64 = 0.1;
    pub const LSH_TRIALS: usize = 1_000;
    pub const LSH_MIN_RATE: f64 = 0.9;

    pub const KMEANS_INSTANCES: usize = 200;
    pub const KMEANS_MAX_POINTS: usize = 9;
    pub const KMEANS_REL_TOL: f64 = 1e-9;
    pub const PLANTED_SEEDS: usize = 20;
    pub const PLANTED_SIZE: usize = 50;
    pub const PLANTED_SEPARATION: f64 = 4.0;
    pub const PLANTED_MU: f64 = 1.0;
    pub const PLANTED_MIN_PASS: usize = 18;

    pub const SSC_EXHAUSTIVE_INSTANCES: usize = 100;
    pub const SSC_ALPHA: f64 = 0.2;
    pub const SSC_DELTA: f64 = 0.1;
    pub const SSC_SAMPLED_SEEDS: usize = 50;
    pub const SSC_MIN_RATE: f64 = 0.9;

    pub const EM_N: usize = 10_000;
    pub const EM_SEEDS: usize = 20;
    pub const EM_PARAM_TOL: f64 = 0.1;
    pub const EM_MIN_PASS: usize = 18;
    /// Relative slack for "non-decreasing" in floating point.
    pub const EM_MONOTONE_SLACK: f64 = 1e-12;

    pub const GMM_XI: f64 = 0.05;
    pub const GMM_TRUE_SLACK: f64 = 0.02;
    pub const GMM_EPS: f64 = 0.1;
    pub const GMM_DELTA: f64 = 0.1;
    pub const GMM_SEEDS: usize = 50;
    pub const GMM_MIN_PASS: usize = 45;

    pub const GOODMAN_MAX_N: usize = 8;
    pub const GOODMAN_TOL: f64 = 1e-9;

    pub const TRIALS_RATIOS: [u64; 3] = [1, 5, 10];
    pub const TRIALS_DRAWS: usize = 20_000;
    pub const TRIALS_REL_TOL: f64 = 0.1;

    /// Wall-clock budget of each criterion, seconds.
    pub const BUDGET_SECS: [f64; 10] = [1.0, 10.0, 600.0, 60.0, 120.0, 120.0, 60.0, 300.0, 60.0, 60.0];
}

#[derive(Debug, Clone)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub known_limit: Option<&'static str>,
}

impl Clause {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Clause {
            name,
            passed,
            detail,
            known_limit: None,
        }
    }

    fn limited(mut self, why: &'static str) -> Self {
        self.known_limit = Some(why);
        self
    }
}

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub clauses: Vec<Clause>,
    pub elapsed_secs: f64,
    pub budget_secs: f64,
    pub passed: bool,
}

impl CriterionOutcome {
    /// True when every failing clause is a documented limitation and the
    /// budget held.
    pub fn only_known_failures(&self) -> bool {
        self.elapsed_secs <= self.budget_secs
            && self.clauses.iter().all(|c| c.passed || c.known_limit.is_some())
    }
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {} ({:.2}s of {:.0}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.elapsed_secs,
            self.budget_secs
        )?;
        for c in &self.clauses {
            write!(f, "\n    [{}] {}: {}", if c.passed { "ok" } else { "x" }, c.name, c.detail)?;
            if let (false, Some(why)) = (c.passed, c.known_limit) {
                write!(f, " (known limit: {why})")?;
            }
        }
        Ok(())
    }
}

pub fn run_criterion(id: u8) -> Result<CriterionOutcome> {
    let (title, run): (&'static str, fn() -> Result<Vec<Clause>>) = match id {
        1 => ("exact probabilities give the uniform entity law", exact_uniformity),
        2 => ("balanced estimator at planned m", balanced_cleanability),
        3 => ("error table trend", table_trend),
        4 => ("minhash co-blocking of near duplicates", lsh_recall),
        5 => ("regularized k-means against brute force", clustering_oracle),
        6 => ("clustering selection by pair loss", ssc_correctness),
        7 => ("EM parameter recovery", em_recovery),
        8 => ("mixture-density sampler", gmm_sampler),
        9 => ("Goodman estimator unbiasedness", goodman_unbiased),
        10 => ("trials per accepted draw", acceptance_time),
        _ => return Err(Error::param("criterion", format!("{id} is not in 1..=10"))),
    };
    let start = Instant::now();
    let clauses = run()?;
    let elapsed_secs = start.elapsed().as_secs_f64();
    let budget_secs = tol::BUDGET_SECS[id as usize - 1];
    let passed = elapsed_secs <= budget_secs && clauses.iter().all(|c| c.passed);
    Ok(CriterionOutcome {
        id,
        title,
        clauses,
        elapsed_secs,
        budget_secs,
        passed,
    })
}

fn at_least(name: &'static str, hits: usize, total: usize, need: usize) -> Clause {
    Clause::new(name, hits >= need, format!("{hits}/{total} (need {need})"))
}

fn exact_uniformity() -> Result<Vec<Clause>> {
    let sizes = [1, 2, 10, 100, 1_000, 5_000, tol::EXACT_MAX_ENTITIES, tol::EXACT_MAX_ENTITIES];
    let mut worst: f64 = 0.0;
    for (i, &e) in sizes.iter().enumerate() {
        let mut r = rng(derive_seed(SEED, i as u64));
        let counts: Vec<u64> = (0..e).map(|_| r.random_range(1..=10)).collect();
        let data = synthetic::population(&counts, derive_seed(SEED, 100 + i as u64));
        let map = ProbabilityMap::exact(&data)?;
        let induced = exact_induced_distribution(&data, &map)?;
        worst = worst.max(tv_distance(&induced, &data.entity_table().uniform()));
    }
    Ok(vec![Clause::new(
        "TV to uniform",
        worst <= tol::EXACT_TV,
        format!("worst {worst:.2e} over {} datasets (limit {:.0e})", sizes.len(), tol::EXACT_TV),
    )])
}

fn balanced_cleanability() -> Result<Vec<Clause>> {
    let plan = plan_sample_size(
        tol::BALANCED_EPS,
        tol::BALANCED_DELTA,
        tol::BALANCED_ETA,
        Some(tol::BALANCED_ENTITIES as u64),
        tol::BALANCED_A,
    )?;
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for s in 0..tol::BALANCED_SEEDS as u64 {
        let seed = derive_seed(SEED ^ 2, s);
        let counts =
            synthetic::eta_balanced_counts(tol::BALANCED_ENTITIES, tol::BALANCED_ETA, tol::BALANCED_N, seed)?;
        let data = synthetic::population(&counts, seed);
        let map = estimate_probs_balanced(&data, plan.m, derive_seed(seed, 1))?;
        let tv = tv_distance(&exact_induced_distribution(&data, &map)?, &data.entity_table().uniform());
        worst = worst.max(tv);
        if tv <= tol::BALANCED_EPS {
            hits += 1;
        }
    }
    let mut c = at_least("TV <= epsilon", hits, tol::BALANCED_SEEDS, tol::BALANCED_MIN_PASS);
    c.detail += &format!(", m = {}, worst TV {worst:.4}", plan.m);
    Ok(vec![c])
}

fn table_trend() -> Result<Vec<Clause>> {
    let mut spec = ExperimentSpec::new(
        DataSource::Tpch { n: tol::TABLE_ROWS },
        Method::Balanced,
        tol::TABLE_FRACTIONS.to_vec(),
        tol::TABLE_DUPS.to_vec(),
    );
    spec.profile = DupProfile::Uniform;
    spec.repeats = tol::TABLE_REPEATS;
    spec.seed = SEED;
    let report = run_experiment(&spec)?;
    let mut clauses = Vec::new();

    clauses.push(Clause::new(
        "no failed runs",
        report.total_failures() == 0,
        format!("{} failures", report.total_failures()),
    ));

    let trend: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("dup {}: rho {}", r.dup_rate, r.spearman.map_or("n/a".into(), |x| format!("{x:.3}"))))
        .collect();
    clauses.push(Clause::new(
        "error decreases with sample size",
        report.rows.iter().all(|r| r.spearman.is_some_and(|x| x < 0.0)),
        trend.join(", "),
    ));

    let (lo, hi) = (tol::TABLE_DUPS[0], tol::TABLE_DUPS[1]);
    let mut dominated = 0;
    let mut pairs = Vec::new();
    for &f in &tol::TABLE_FRACTIONS {
        let a = report.cell(lo, f).map_or(f64::NAN, |c| c.mean_error);
        let b = report.cell(hi, f).map_or(f64::NAN, |c| c.mean_error);
        if b > a {
            dominated += 1;
        }
        pairs.push(format!("{f}: {a:.2e}/{b:.2e}"));
    }
    clauses.push(
        Clause::new(
            "higher duplication has higher error at every fraction",
            dominated == tol::TABLE_FRACTIONS.len(),
            format!("{dominated}/{} fractions; {}", tol::TABLE_FRACTIONS.len(), pairs.join(", ")),
        )
        .limited("random copies add bias far below the sampling error at these sample sizes"),
    );

    let mut within = 0;
    let mut ratios = Vec::new();
    for (&f, &reference) in tol::TABLE_FRACTIONS.iter().zip(&tol::TABLE_REFERENCE) {
        let e = report.cell(lo, f).map_or(f64::NAN, |c| c.mean_error);
        let ratio = e / reference;
        if (1.0 / tol::TABLE_FACTOR..=tol::TABLE_FACTOR).contains(&ratio) {
            within += 1;
        }
        ratios.push(format!("{ratio:.2}"));
    }
    clauses.push(Clause::new(
        "dup 0.1 errors within factor 5 of reference",
        within == tol::TABLE_FRACTIONS.len(),
        format!("ratios {}", ratios.join(", ")),
    ));
    Ok(clauses)
}

fn random_text(r: &mut Rng) -> String {
    let words = r.random_range(6..=10);
    (0..words)
        .map(|_| {
            let len = r.random_range(3..=8);
            (0..len).map(|_| r.random_range(b'a'..=b'z') as char).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A copy of `base` at 3-gram Jaccard distance in `(lambda/2, lambda]`, if
/// single-character edits can land there.
fn near_duplicate(base: &str, lambda: f64, r: &mut Rng) -> Option<(String, f64)> {
    let grams = shingle_set(base, SHINGLE_WIDTH);
    for _ in 0..100 {
        let mut copy = base.to_string();
        loop {
            copy = synthetic::perturb(&copy, r);
            let d = jaccard_distance(&grams, &shingle_set(&copy, SHINGLE_WIDTH));
            if d > lambda {
                break;
            }
            if d > lambda / 2.0 {
                return Some((copy, d));
            }
        }
    }
    None
}

fn lsh_recall() -> Result<Vec<Clause>> {
    let cfg = choose_bands_rows(tol::LSH_LAMBDA, tol::LSH_DELTA)?.with_family(HashFamily::MinHash);
    let mut hits = 0;
    let mut dist_sum = 0.0;
    for t in 0..tol::LSH_TRIALS as u64 {
        let mut r = rng(derive_seed(SEED ^ 4, t));
        let (base, copy, d) = loop {
            let base = random_text(&mut r);
            if let Some((copy, d)) = near_duplicate(&base, tol::LSH_LAMBDA, &mut r) {
                break (base, copy, d);
            }
        };
        dist_sum += d;
        let mut texts = vec![base, copy];
        texts.extend((0..8).map(|_| random_text(&mut r)));
        let n = texts.len();
        let data = Dataset::new(Features::text(texts), vec![0.0; n], None, None)?;
        let blocking = lsh_partition(&data, &cfg, derive_seed(SEED ^ 40, t))?;
        if blocking.same_block(0, 1) {
            hits += 1;
        }
    }
    let rate = hits as f64 / tol::LSH_TRIALS as f64;
    Ok(vec![Clause::new(
        "co-blocking rate",
        rate >= tol::LSH_MIN_RATE,
        format!(
            "{rate:.3} (need {}), r = {}, s = {}, mean distance {:.3}",
            tol::LSH_MIN_RATE,
            cfg.r,
            cfg.s,
            dist_sum / tol::LSH_TRIALS as f64
        ),
    )])
}

fn centroid_cost(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let mut sum = vec![[0.0; 2]; k];
    let mut size = vec![0.0; k];
    for (p, &l) in points.iter().zip(labels) {
        sum[l][0] += p[0];
        sum[l][1] += p[1];
        size[l] += 1.0;
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let c = [sum[l][0] / size[l], sum[l][1] / size[l]];
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
        })
        .sum()
}

/// Minimum centroid cost over every partition into exactly `k` parts.
fn enumerate_optimum(points: &[[f64; 2]], k: usize) -> f64 {
    fn go(i: usize, parts: usize, k: usize, labels: &mut Vec<usize>, points: &[[f64; 2]], best: &mut f64) {
        if i == points.len() {
            if parts == k {
                *best = best.min(centroid_cost(points, labels, k));
            }
            return;
        }
        for l in 0..=parts.min(k - 1) {
            labels[i] = l;
            go(i + 1, parts.max(l + 1), k, labels, points, best);
        }
    }
    let mut best = f64::INFINITY;
    go(0, 0, k, &mut vec![0; points.len()], points, &mut best);
    best
}

fn sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn unit_ball(r: &mut Rng) -> [f64; 2] {
    loop {
        let p = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        if p[0] * p[0] + p[1] * p[1] <= 1.0 {
            return p;
        }
    }
}

fn clustering_oracle() -> Result<Vec<Clause>> {
    let mut matched = 0;
    let mut worst_gap: f64 = 0.0;
    for t in 0..tol::KMEANS_INSTANCES as u64 {
        let mut r = rng(derive_seed(SEED ^ 5, t));
        // a lone point is always discarded, so start at two
        let n = r.random_range(2..=tol::KMEANS_MAX_POINTS);
        let k = r.random_range(1..=n);
        let points: Vec<[f64; 2]> = (0..n).map(|_| [r.random_range(0.0..10.0), r.random_range(0.0..10.0)]).collect();
        let d2 = SquaredDistances::from_fn(n, |a, b| sq(points[a], points[b]).sqrt());
        // radius wide enough that nothing is discarded
        let c = regularized_kmeans_matrix(&d2, k, 100.0, &KMeansOptions::default())?;
        let mut labels = vec![0; n];
        for (l, members) in c.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = l;
            }
        }
        let solver = centroid_cost(&points, &labels, k);
        let pairwise = kmeans_cost(&d2, &labels, k);
        let optimum = enumerate_optimum(&points, k);
        let gap = (solver - optimum).abs().max((pairwise - optimum).abs()) / optimum.max(1e-300);
        let ok = c.garbage.is_empty() && c.k() == k && (gap <= tol::KMEANS_REL_TOL || (solver - optimum).abs() < 1e-12);
        if ok {
            matched += 1;
        }
        if optimum > 0.0 {
            worst_gap = worst_gap.max(gap);
        }
    }

    let mut recovered = 0;
    for s in 0..tol::PLANTED_SEEDS as u64 {
        let mut r = rng(derive_seed(SEED ^ 55, s));
        let centers = [[0.0, 0.0], [tol::PLANTED_SEPARATION, 0.0]];
        let mut points = Vec::new();
        let mut truth = vec![Vec::new(), Vec::new()];
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..tol::PLANTED_SIZE {
                let u = unit_ball(&mut r);
                truth[c].push(points.len());
                points.push([center[0] + u[0], center[1] + u[1]]);
            }
        }
        let outliers = [[-8.0, 8.0], [12.0, 8.0], [-8.0, -8.0], [12.0, -8.0]];
        let mut garbage = Vec::new();
        for o in outliers {
            let u = unit_ball(&mut r);
            garbage.push(points.len());
            points.push([o[0] + u[0], o[1] + u[1]]);
        }
        let planted = Clustering::new(truth, garbage);
        let d2 = SquaredDistances::from_fn(points.len(), |a, b| sq(points[a], points[b]).sqrt());
        let opts = KMeansOptions {
            seed: derive_seed(SEED ^ 56, s),
            ..KMeansOptions::default()
        };
        let got = regularized_kmeans_matrix(&d2, 2, tol::PLANTED_MU, &opts)?;
        if got.clusters == planted.clusters && got.garbage == planted.garbage {
            recovered += 1;
        }
    }

    let mut a = Clause::new(
        "objective equals enumerated optimum",
        matched == tol::KMEANS_INSTANCES,
        format!("{matched}/{} instances, worst relative gap {worst_gap:.1e}", tol::KMEANS_INSTANCES),
    );
    a.passed &= worst_gap <= tol::KMEANS_REL_TOL;
    Ok(vec![
        a,
        at_least("planted clusters and garbage recovered", recovered, tol::PLANTED_SEEDS, tol::PLANTED_MIN_PASS),
    ])
}

fn from_labels(labels: &[usize]) -> Clustering {
    let groups = labels.iter().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); groups];
    for (i, &l) in labels.iter().enumerate() {
        clusters[l].push(i);
    }
    clusters.retain(|c| !c.is_empty());
    Clustering::new(clusters, Vec::new())
}

/// Candidate clusterings around `truth`: merges, splits, moved points and
/// a random labelling, all different from `truth`.
fn perturbations(truth: &[usize], groups: usize, count: usize, r: &mut Rng) -> Vec<Clustering> {
    let target = from_labels(truth);
    let mut out: Vec<Clustering> = Vec::new();
    let n = truth.len();
    let mut attempts = 0;
    while out.len() < count && attempts < 1_000 {
        attempts += 1;
        let mut labels = truth.to_vec();
        match out.len() % 4 {
            0 => {
                let (a, b) = (r.random_range(0..groups), r.random_range(0..groups));
                labels.iter_mut().filter(|l| **l == b).for_each(|l| *l = a);
            }
            1 => {
                let g = r.random_range(0..groups);
                for l in labels.iter_mut().filter(|l| **l == g) {
                    if r.random::<bool>() {
                        *l = groups;
                    }
                }
            }
            2 => {
                let moves = r.random_range(1..=3);
                for _ in 0..moves {
                    let i = r.random_range(0..n);
                    labels[i] = r.random_range(0..groups);
                }
            }
            _ => labels.iter_mut().for_each(|l| *l = r.random_range(0..groups)),
        }
        let c = from_labels(&labels);
        if !c.same_partition(&target) && !out.iter().any(|o| o.same_partition(&c)) {
            out.push(c);
        }
    }
    out
}

fn ssc_correctness() -> Result<Vec<Clause>> {
    let mut exact = 0;
    for t in 0..tol::SSC_EXHAUSTIVE_INSTANCES as u64 {
        let mut r = rng(derive_seed(SEED ^ 6, t));
        let n = r.random_range(12..=30);
        let groups = r.random_range(2..=5);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..groups)).collect();
        let target = from_labels(&truth);
        let mut candidates = perturbations(&truth, groups, 6, &mut r);
        candidates.push(target.clone());
        candidates.shuffle(&mut r);
        let oracle = |a: usize, b: usize| truth[a] == truth[b];
        let inst = SscInstance::new((0..n).collect(), candidates, PairSampling::Exhaustive, &oracle);
        if ssc_select(&inst, t)?.clustering.same_partition(&target) {
            exact += 1;
        }
    }

    let eps = tol::SSC_ALPHA / 2.0;
    let mut good = 0;
    let mut within_cap = 0;
    let mut budget = 0;
    let mut worst_use: f64 = 0.0;
    for s in 0..tol::SSC_SAMPLED_SEEDS as u64 {
        let mut r = rng(derive_seed(SEED ^ 66, s));
        let groups = 4;
        let n = 80;
        let mut truth: Vec<usize> = (0..n).map(|i| i % groups).collect();
        truth.shuffle(&mut r);
        let target = from_labels(&truth);
        let mut candidates = perturbations(&truth, groups, 7, &mut r);
        candidates.push(target);
        candidates.shuffle(&mut r);
        budget = plan_pair_budget(eps, tol::SSC_DELTA, candidates.len(), 1.0)?;
        let oracle = |a: usize, b: usize| truth[a] == truth[b];
        let inst = SscInstance::new(
            (0..n).collect(),
            candidates,
            PairSampling::Sampled { m_pairs: budget },
            &oracle,
        );
        let out = ssc_select(&inst, derive_seed(SEED ^ 67, s))?;
        let points: Vec<usize> = (0..n).collect();
        if true_loss(&out.clustering, &points, &oracle as &dyn SameClusterOracle, inst.mu_weight) <= tol::SSC_ALPHA {
            good += 1;
        }
        let pairs = n * (n - 1) / 2;
        let positive = (0..n).map(|a| (a + 1..n).filter(|&b| truth[a] == truth[b]).count()).sum::<usize>();
        let gamma = positive as f64 / pairs as f64;
        let m = budget as f64;
        let cap = 2.0 * (m / gamma + m / (1.0 - gamma));
        worst_use = worst_use.max(out.queries as f64 / cap);
        if out.queries as f64 <= cap {
            within_cap += 1;
        }
    }
    let need = (tol::SSC_MIN_RATE * tol::SSC_SAMPLED_SEEDS as f64).ceil() as usize;
    let mut b = at_least("sampled winner within alpha", good, tol::SSC_SAMPLED_SEEDS, need);
    b.detail += &format!(", {budget} pairs per set");
    Ok(vec![
        at_least(
            "exhaustive pairs pick the truth",
            exact,
            tol::SSC_EXHAUSTIVE_INSTANCES,
            tol::SSC_EXHAUSTIVE_INSTANCES,
        ),
        b,
        Clause::new(
            "query count within bound",
            within_cap == tol::SSC_SAMPLED_SEEDS,
            format!("{within_cap}/{} runs, worst use {:.2} of bound", tol::SSC_SAMPLED_SEEDS, worst_use),
        ),
    ])
}

fn em_recovery() -> Result<Vec<Clause>> {
    let weights = [0.35, 0.65];
    let means = [-4.0, 4.0];
    let variances: [f64; 2] = [1.0, 1.5];
    let mut recovered = 0;
    let mut monotone = 0;
    let mut worst: f64 = 0.0;
    for s in 0..tol::EM_SEEDS as u64 {
        let mut r = rng(derive_seed(SEED ^ 7, s));
        let xs: Vec<f64> = (0..tol::EM_N)
            .map(|_| {
                let c = usize::from(r.random::<f64>() >= weights[0]);
                Normal::new(means[c], variances[c].sqrt()).expect("positive variance").sample(&mut r)
            })
            .collect();
        let data = Dataset::from_vectors(1, xs.clone(), xs)?;
        let fit = em_fit(&data, 2, 500, 1e-8, derive_seed(SEED ^ 77, s))?;
        let mut order = [0, 1];
        order.sort_by(|&a, &b| fit.model.means[a][0].total_cmp(&fit.model.means[b][0]));
        let err = order
            .iter()
            .enumerate()
            .map(|(t, &c)| {
                let m = &fit.model;
                (m.weights[c] - weights[t])
                    .abs()
                    .max((m.means[c][0] - means[t]).abs())
                    .max((m.variances[c] - variances[t]).abs())
            })
            .fold(0.0, f64::max);
        worst = worst.max(err);
        if err <= tol::EM_PARAM_TOL {
            recovered += 1;
        }
        if fit.is_monotone(tol::EM_MONOTONE_SLACK) {
            monotone += 1;
        }
    }
    let mut a = at_least("parameter error <= 0.1", recovered, tol::EM_SEEDS, tol::EM_MIN_PASS);
    a.detail += &format!(", worst {worst:.4}");
    Ok(vec![
        a,
        at_least("log-likelihood never decreases", monotone, tol::EM_SEEDS, tol::EM_SEEDS),
    ])
}

fn gmm_sampler() -> Result<Vec<Clause>> {
    let model = MixtureModel::new(vec![0.5, 0.5], vec![vec![-5.0], vec![5.0]], vec![1.0, 1.0])?;
    let mut true_ok = 0;
    let mut fitted_ok = 0;
    let mut worst_true: f64 = 0.0;
    let mut worst_fit: f64 = 0.0;
    let mut planned_m = 0;
    for s in 0..tol::GMM_SEEDS as u64 {
        let spec = XiGmmSpec {
            model: model.clone(),
            spacing: 0.1,
            half_width: 3.5,
            scale: 1e5,
            xi: tol::GMM_XI,
        };
        let data = synthetic::xi_gmm_grid(&spec, derive_seed(SEED ^ 8, s))?;
        let tv = induced_tv_to_uniform(&data, &estimate_probs_gmm(&data, &model)?)?;
        worst_true = worst_true.max(tv);
        if tv <= tol::GMM_XI + tol::GMM_TRUE_SLACK {
            true_ok += 1;
        }

        let tau = (0..data.len())
            .map(|i| gmm_density(&model, data.vector(i).expect("vector record")))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let eta_min = model.weights.iter().copied().fold(f64::INFINITY, f64::min);
        let plan = plan_gmm(tol::GMM_EPS, tol::GMM_DELTA, tau, eta_min, 1, 2, 1.0, 1.0)?;
        planned_m = plan.m;
        let fit = fit_from_sample(&data, plan.m, &EmOptions::new(2, derive_seed(SEED ^ 88, s)))?;
        let tv = induced_tv_to_uniform(&data, &estimate_probs_gmm(&data, &fit.model)?)?;
        worst_fit = worst_fit.max(tv);
        if tv <= tol::GMM_EPS + tol::GMM_XI {
            fitted_ok += 1;
        }
    }
    let mut b = at_least("fitted model TV <= eps + xi", fitted_ok, tol::GMM_SEEDS, tol::GMM_MIN_PASS);
    b.detail += &format!(", planned m = {planned_m}, worst TV {worst_fit:.4}");
    Ok(vec![
        Clause::new(
            "true model TV <= xi + 0.02",
            true_ok == tol::GMM_SEEDS,
            format!("{true_ok}/{} seeds, worst TV {worst_true:.4}", tol::GMM_SEEDS),
        ),
        b,
    ])
}

/// Integer partitions of `n` in non-increasing order.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            cur.push(part);
            go(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, n, &mut Vec::new(), &mut out);
    out
}

fn goodman_unbiased() -> Result<Vec<Clause>> {
    let (mut in_cases, mut in_ok) = (0, 0);
    let (mut out_cases, mut out_ok) = (0, 0);
    let mut worst_in: f64 = 0.0;
    let mut worst_out: f64 = 0.0;
    for n in 2..=tol::GOODMAN_MAX_N {
        for sizes in partitions(n) {
            let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
            let classes = sizes.len() as f64;
            let largest = sizes[0];
            for m in 1..n {
                let mut sum = 0.0;
                let mut subsets = 0u64;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != m {
                        continue;
                    }
                    let sample = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| labels[i]);
                    let stats = FingerprintStats::from_sample(sample);
                    sum += goodman_estimate(&stats, n as u64)?.value;
                    subsets += 1;
                }
                let dev = (sum / subsets as f64 - classes).abs();
                let ok = dev <= tol::GOODMAN_TOL;
                if m >= largest {
                    in_cases += 1;
                    in_ok += usize::from(ok);
                    worst_in = worst_in.max(dev);
                } else {
                    out_cases += 1;
                    out_ok += usize::from(ok);
                    worst_out = worst_out.max(dev);
                }
            }
        }
    }
    Ok(vec![
        Clause::new(
            "unbiased when the sample is at least the largest class",
            in_ok == in_cases,
            format!("{in_ok}/{in_cases} cases exact, worst deviation {worst_in:.1e}"),
        ),
        Clause::new(
            "unbiased for every m < n",
            out_ok == out_cases,
            format!("{out_ok}/{out_cases} smaller-sample cases exact, worst deviation {worst_out:.3}"),
        )
        .limited("the estimator is unbiased only when m is at least the largest class frequency"),
    ])
}

fn acceptance_time() -> Result<Vec<Clause>> {
    let mut clauses = Vec::new();
    for (i, &ratio) in tol::TRIALS_RATIOS.iter().enumerate() {
        let data = synthetic::population(&synthetic::ratio_counts(20, ratio, 50), derive_seed(SEED ^ 10, i as u64));
        let map = ProbabilityMap::exact(&data)?;
        let expected = expected_trials_per_accept(&data, &map)?;
        let got = sample_clean(&data, &map, tol::TRIALS_DRAWS, derive_seed(SEED ^ 11, i as u64))?;
        let measured = got.mean_trials_per_accept();
        let rel = (measured / expected - 1.0).abs();
        clauses.push(Clause::new(
            match ratio {
                1 => "ratio 1",
                5 => "ratio 5",
                _ => "ratio 10",
            },
            rel <= tol::TRIALS_REL_TOL,
            format!("measured {measured:.4}, expected {expected:.4}, off by {:.2}%", 100.0 * rel),
        ));
    }
    Ok(clauses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partitions_of_small_n() {
        assert_eq!(partitions(4).len(), 5);
        assert_eq!(partitions(8).len(), 22);
    }

    #[test]
    fn enumeration_matches_pairwise_brute_force() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [6.0, 5.0], [3.0, 9.0]];
        let d2 = SquaredDistances::from_fn(5, |a, b| sq(pts[a], pts[b]).sqrt());
        let (_, cost) = crate::lsh::kmeans::brute_force(&d2, 3);
        assert!((cost - enumerate_optimum(&pts, 3)).abs() < 1e-12);
    }

    #[test]
    fn near_duplicates_fall_in_band() {
        let mut r = rng(1);
        for _ in 0..50 {
            let base = random_text(&mut r);
            let Some((_, d)) = near_duplicate(&base, 0.2, &mut r) else {
                continue;
            };
            assert!(d > 0.1 && d <= 0.2);
        }
    }

    #[test]
    fn unknown_criterion() {
        assert!(run_criterion(11).is_err());
    }
}
