//! Regularized k-means with a garbage cluster.
//!
//! Points with no neighbour within `mu_radius` are discarded into the
//! garbage cluster. The rest are split into exactly `k` clusters minimizing
//! the k-means cost, written in its pairwise form
//! `Σ_C (1/|C|) Σ_{x<y ∈ C} d²(x, y)` so that the same code serves vectors
//! (where it equals the centroid form) and Jaccard distances on text.
//!
//! Small instances are solved exhaustively. Larger ones use Lloyd-style
//! alternating minimization on the squared-distance matrix with k-means++
//! seeding and restarts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng;

/// Output of regularized k-means over a set of record indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Vec<usize>>,
    pub garbage: Vec<usize>,
}

impl Clustering {
    /// Canonical form: members sorted, clusters ordered by smallest member.
    pub fn new(mut clusters: Vec<Vec<usize>>, mut garbage: Vec<usize>) -> Self {
        clusters.retain(|c| !c.is_empty());
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        garbage.sort_unstable();
        Clustering { clusters, garbage }
    }

    pub fn all_garbage(points: &[usize]) -> Self {
        Clustering::new(Vec::new(), points.to_vec())
    }

    /// Number of non-garbage clusters.
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        self.clusters.iter().flatten().chain(&self.garbage).copied()
    }

    /// Group id of each point: clusters first, then one singleton group per
    /// garbage point. Returned as sorted `(point, group)` pairs.
    pub fn assignment(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (c, members) in self.clusters.iter().enumerate() {
            out.extend(members.iter().map(|&p| (p, c)));
        }
        let k = self.clusters.len();
        out.extend(self.garbage.iter().enumerate().map(|(j, &p)| (p, k + j)));
        out.sort_unstable();
        out
    }

    /// All groups, garbage points as singletons.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = self.clusters.clone();
        out.extend(self.garbage.iter().map(|&g| vec![g]));
        out
    }

    /// Whether two points share a (non-garbage) cluster.
    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        a == b
            || self
                .clusters
                .iter()
                .any(|c| c.binary_search(&a).is_ok() && c.binary_search(&b).is_ok())
    }

    /// Same partition of the same points, ignoring labels.
    pub fn same_partition(&self, other: &Clustering) -> bool {
        let mut a = self.groups();
        let mut b = other.groups();
        for g in a.iter_mut().chain(b.iter_mut()) {
            g.sort_unstable();
        }
        a.sort();
        b.sort();
        a == b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    /// Instances with at most this many retained points are solved exactly.
    pub brute_force_cap: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            brute_force_cap: 9,
            restarts: 32,
            max_iter: 100,
            seed: 0,
        }
    }
}

/// Squared-distance matrix over a point list.
#[derive(Debug, Clone)]
pub struct SquaredDistances {
    n: usize,
    d2: Vec<f64>,
}

impl SquaredDistances {
    pub fn from_dataset(data: &Dataset, points: &[usize]) -> Self {
        let n = points.len();
        let mut d2 = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d = data.distance(points[a], points[b]);
                d2[a * n + b] = d * d;
                d2[b * n + a] = d * d;
            }
        }
        SquaredDistances { n, d2 }
    }

    /// `dist` returns plain distances; they are squared here.
    pub fn from_fn(n: usize, dist: impl Fn(usize, usize) -> f64) -> Self {
        let mut d2 = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let d = dist(a, b);
                d2[a * n + b] = d * d;
                d2[b * n + a] = d * d;
            }
        }
        SquaredDistances { n, d2 }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.d2[a * self.n + b]
    }

    fn restricted(&self, keep: &[usize]) -> SquaredDistances {
        let n = keep.len();
        let mut d2 = vec![0.0; n * n];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                d2[a * n + b] = self.get(i, j);
            }
        }
        SquaredDistances { n, d2 }
    }
}

/// k-means cost of a labelling (labels in `0..k`), pairwise form.
pub fn kmeans_cost(d2: &SquaredDistances, labels: &[usize], k: usize) -> f64 {
    let mut within = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for a in 0..labels.len() {
        sizes[labels[a]] += 1;
        for b in a + 1..labels.len() {
            if labels[a] == labels[b] {
                within[labels[a]] += d2.get(a, b);
            }
        }
    }
    within
        .iter()
        .zip(&sizes)
        .filter(|(_, &s)| s > 0)
        .map(|(w, &s)| w / s as f64)
        .sum()
}

/// Indices (into the point list) with no other point within `mu_radius`.
pub fn singleton_prefilter(d2: &SquaredDistances, mu_radius: f64) -> Vec<bool> {
    let r2 = mu_radius * mu_radius;
    (0..d2.len())
        .map(|a| !(0..d2.len()).any(|b| b != a && d2.get(a, b) <= r2))
        .collect()
}

/// Regularized k-means on the records `block` of `data`.
pub fn regularized_kmeans(
    data: &Dataset,
    block: &[usize],
    k: usize,
    mu_radius: f64,
    opts: &KMeansOptions,
) -> Result<Clustering> {
    let d2 = SquaredDistances::from_dataset(data, block);
    let local = regularized_kmeans_matrix(&d2, k, mu_radius, opts)?;
    Ok(Clustering::new(
        local
            .clusters
            .iter()
            .map(|c| c.iter().map(|&i| block[i]).collect())
            .collect(),
        local.garbage.iter().map(|&i| block[i]).collect(),
    ))
}

/// As [`regularized_kmeans`], over point indices `0..d2.len()`.
pub fn regularized_kmeans_matrix(
    d2: &SquaredDistances,
    k: usize,
    mu_radius: f64,
    opts: &KMeansOptions,
) -> Result<Clustering> {
    if !(mu_radius > 0.0) {
        return Err(Error::param("mu_radius", format!("{mu_radius} is not positive")));
    }
    let isolated = singleton_prefilter(d2, mu_radius);
    let keep: Vec<usize> = (0..d2.len()).filter(|&i| !isolated[i]).collect();
    let garbage: Vec<usize> = (0..d2.len()).filter(|&i| isolated[i]).collect();
    if keep.is_empty() {
        return Ok(Clustering::new(Vec::new(), garbage));
    }
    if k == 0 || k > keep.len() {
        return Err(Error::param(
            "k",
            format!("{k} clusters requested for {} retained points", keep.len()),
        ));
    }
    let sub = d2.restricted(&keep);
    let labels = if keep.len() <= opts.brute_force_cap {
        brute_force(&sub, k).0
    } else {
        lloyd(&sub, k, opts).0
    };
    let mut clusters = vec![Vec::new(); k];
    for (a, &l) in labels.iter().enumerate() {
        clusters[l].push(keep[a]);
    }
    Ok(Clustering::new(clusters, garbage))
}

/// Exact minimizer over all partitions into exactly `k` non-empty parts.
/// Ties keep the first partition in restricted-growth order.
pub fn brute_force(d2: &SquaredDistances, k: usize) -> (Vec<usize>, f64) {
    let n = d2.len();
    assert!(k >= 1 && k <= n, "k = {k} for {n} points");
    let mut labels = vec![0usize; n];
    let mut best = (labels.clone(), f64::INFINITY);
    // Restricted growth strings: labels[i] <= 1 + max(labels[..i]).
    fn rec(
        i: usize,
        used: usize,
        k: usize,
        labels: &mut Vec<usize>,
        d2: &SquaredDistances,
        best: &mut (Vec<usize>, f64),
    ) {
        let n = labels.len();
        if n - i < k - used {
            return;
        }
        if i == n {
            let c = kmeans_cost(d2, labels, k);
            if c < best.1 {
                *best = (labels.clone(), c);
            }
            return;
        }
        for l in 0..(used + 1).min(k) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), k, labels, d2, best);
        }
    }
    rec(0, 0, k, &mut labels, d2, &mut best);
    best
}

/// Alternating minimization with k-means++ seeding, best of `opts.restarts`.
pub fn lloyd(d2: &SquaredDistances, k: usize, opts: &KMeansOptions) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = rng::derive_rng(opts.seed, restart as u64);
        let labels = lloyd_once(d2, k, opts.max_iter, &mut rng);
        let cost = kmeans_cost(d2, &labels, k);
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((labels, cost));
        }
    }
    best.expect("at least one restart")
}

fn lloyd_once(d2: &SquaredDistances, k: usize, max_iter: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let n = d2.len();
    // k-means++ seeds
    let mut seeds = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| d2.get(i, seeds[0])).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            // all remaining points coincide with a seed
            (0..n).find(|i| !seeds.contains(i)).expect("k <= n")
        };
        seeds.push(next);
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(d2.get(i, next));
        }
    }
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            (0..k)
                .min_by(|&a, &b| d2.get(i, seeds[a]).total_cmp(&d2.get(i, seeds[b])))
                .expect("k >= 1")
        })
        .collect();
    for &s in seeds.iter() {
        // a seed always belongs to its own cluster
        labels[s] = seeds.iter().position(|&x| x == s).expect("seed");
    }

    for _ in 0..max_iter {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        // (1/|C|²) Σ_{y,z ∈ C} d²(y, z) / 2 = squared spread of C around its mean
        let spread: Vec<f64> = members
            .iter()
            .map(|m| {
                if m.is_empty() {
                    return 0.0;
                }
                let mut s = 0.0;
                for (a, &y) in m.iter().enumerate() {
                    for &z in &m[a + 1..] {
                        s += d2.get(y, z);
                    }
                }
                s / (m.len() * m.len()) as f64
            })
            .collect();
        let to_cluster = |i: usize, c: usize| -> f64 {
            let m = &members[c];
            if m.is_empty() {
                return f64::INFINITY;
            }
            m.iter().map(|&y| d2.get(i, y)).sum::<f64>() / m.len() as f64 - spread[c]
        };
        let mut next: Vec<usize> = (0..n)
            .map(|i| {
                let mut best = labels[i];
                let mut best_d = to_cluster(i, best);
                for c in 0..k {
                    let d = to_cluster(i, c);
                    if d < best_d - 1e-12 {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect();
        // refill emptied clusters with the worst-fitting point
        let mut sizes = vec![0usize; k];
        for &l in &next {
            sizes[l] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                let worst = (0..n)
                    .filter(|&i| sizes[next[i]] > 1)
                    .max_by(|&a, &b| to_cluster(a, next[a]).total_cmp(&to_cluster(b, next[b])))
                    .expect("k <= n");
                sizes[next[worst]] -= 1;
                next[worst] = c;
                sizes[c] = 1;
            }
        }
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}
