//! Synthetic stand-ins for the evaluation datasets, plus planted instances
//! with known ground truth.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{gmm_density, MixtureModel};
use crate::model::{Dataset, EntityLabels, Features};
use crate::rng;

/// Line-item-shaped table: one record per distinct line, unlabeled (copies
/// are recognized by identical features). Feature is the line key; value is
/// `quantity × unit price` with quantity in `1..=50` and price in
/// `[900, 2100)`.
pub fn tpch_lineitem(n: usize, seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let keys: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let values: Vec<f64> = (0..n)
        .map(|_| r.random_range(1..=50) as f64 * r.random_range(900.0..2100.0))
        .collect();
    Dataset::from_vectors(1, keys, values).expect("well-formed columns")
}

/// Labeled population with `counts[e]` identical records of entity `e`.
/// Entity `e` sits at feature `e` and carries a value in `[0, 100)`.
pub fn population(counts: &[u64], seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let entity_values: Vec<f64> = counts.iter().map(|_| r.random_range(0.0..100.0)).collect();
    let mut coords = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (e, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            coords.push(e as f64);
            values.push(entity_values[e]);
            labels.push(e as u32);
        }
    }
    let n = labels.len();
    Dataset::from_vectors(1, coords, values)
        .and_then(|d| d.with_labels(EntityLabels::from_indices(labels)))
        .and_then(|d| d.with_ids((0..n).map(|i| format!("r{i}")).collect()))
        .expect("well-formed columns")
}

/// `entities` entities over `n` records with every probability at least
/// `eta`: each entity gets `⌈eta·n⌉` records and the remainder is spread
/// uniformly at random.
pub fn eta_balanced_counts(entities: usize, eta: f64, n: u64, seed: u64) -> Result<Vec<u64>> {
    let base = (eta * n as f64).ceil() as u64;
    if entities == 0 || base * entities as u64 > n {
        return Err(Error::param(
            "eta",
            format!("{entities} entities at eta = {eta} need more than {n} records"),
        ));
    }
    let mut counts = vec![base; entities];
    let mut r = rng::rng(seed);
    for _ in 0..n - base * entities as u64 {
        counts[r.random_range(0..entities)] += 1;
    }
    Ok(counts)
}

/// Counts whose largest-to-smallest entity probability ratio is `ratio`:
/// even entities get `ratio·base` records, odd ones `base`.
pub fn ratio_counts(entities: usize, ratio: u64, base: u64) -> Vec<u64> {
    (0..entities)
        .map(|e| if e % 2 == 0 { ratio * base } else { base })
        .collect()
}

const CONSONANTS: &[u8] = b"bcdfghklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn word(r: &mut rng::Rng) -> String {
    let syllables = r.random_range(2..4);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[r.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[r.random_range(0..VOWELS.len())] as char);
    }
    w
}

fn phrase(r: &mut rng::Rng, words: usize) -> String {
    (0..words).map(|_| word(r)).collect::<Vec<_>>().join(" ")
}

/// One random character edit (substitute, delete, or swap neighbours).
pub fn perturb(text: &str, r: &mut rng::Rng) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    if chars.len() < 2 {
        return format!("{text}x");
    }
    let i = r.random_range(0..chars.len() - 1);
    match r.random_range(0..3) {
        0 => chars[i] = VOWELS[r.random_range(0..VOWELS.len())] as char,
        1 => {
            chars.remove(i);
        }
        _ => chars.swap(i, i + 1),
    }
    chars.into_iter().collect()
}

fn text_corpus(
    entities: usize,
    dup_rate: f64,
    seed: u64,
    make: impl Fn(&mut rng::Rng) -> String,
    value: impl Fn(&mut rng::Rng) -> f64,
) -> Dataset {
    let mut r = rng::rng(seed);
    let mut texts = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for e in 0..entities {
        let t = make(&mut r);
        let v = value(&mut r);
        let copies = if r.random::<f64>() < dup_rate { 2 } else { 1 };
        for c in 0..copies {
            texts.push(if c == 0 { t.clone() } else { perturb(&t, &mut r) });
            values.push(v);
            labels.push(format!("p{e}"));
        }
    }
    let n = texts.len();
    Dataset::new(
        Features::text(texts),
        values,
        Some((0..n).map(|i| format!("r{i}")).collect()),
        Some(EntityLabels::from_names(&labels)),
    )
    .expect("well-formed columns")
}

/// Bibliographic-style records (title, authors, venue); a `dup_rate`
/// fraction of entities gets a second record one character edit away.
/// Values are citation counts.
pub fn publications_like(entities: usize, dup_rate: f64, seed: u64) -> Dataset {
    text_corpus(
        entities,
        dup_rate,
        seed,
        |r| format!("{}. {} {}. {}", phrase(r, 6), word(r), word(r), phrase(r, 2)),
        |r| r.random_range(0..500) as f64,
    )
}

/// Restaurant-guide-style records: 752 entities, 112 with a second record.
pub fn restaurants_like(seed: u64) -> Dataset {
    let mut r = rng::derive_rng(seed, 1);
    let mut dup = vec![false; 752];
    for i in rand::seq::index::sample(&mut r, 752, 112) {
        dup[i] = true;
    }
    let base = text_corpus(
        752,
        0.0,
        seed,
        |r| format!("{} {} st {} {}", phrase(r, 2), r.random_range(1..999), word(r), word(r)),
        |r| r.random_range(10.0..80.0),
    );
    let sources: Vec<usize> = (0..752).filter(|&i| dup[i]).collect();
    let with = super::inject::append_copies(&base, &sources);
    // perturb the appended copies so they are near, not exact, duplicates
    let texts: Vec<String> = (0..with.len())
        .map(|i| {
            let t = with.text(i).expect("text record");
            if i >= 752 {
                perturb(t, &mut r)
            } else {
                t.to_string()
            }
        })
        .collect();
    Dataset::new(
        Features::text(texts),
        with.values().to_vec(),
        with.ids().map(<[String]>::to_vec),
        with.labels().cloned(),
    )
    .expect("well-formed columns")
}

/// Readings from a mixture rounded to `resolution`; equal rounded readings
/// are the same entity. Record multiplicities then follow the density.
pub fn sensor_like(model: &MixtureModel, n: usize, resolution: f64, seed: u64) -> Dataset {
    let mut r = rng::rng(seed);
    let d = model.dim();
    let mut coords = Vec::with_capacity(n * d);
    let cum: Vec<f64> = model
        .weights
        .iter()
        .scan(0.0, |s, w| {
            *s += w;
            Some(*s)
        })
        .collect();
    for _ in 0..n {
        let u: f64 = r.random();
        let c = cum.iter().position(|&x| u < x).unwrap_or(model.k() - 1);
        let normal = Normal::new(0.0, model.variances[c].sqrt()).expect("positive variance");
        for j in 0..d {
            let x = model.means[c][j] + normal.sample(&mut r);
            coords.push((x / resolution).round() * resolution);
        }
    }
    let values = (0..n).map(|i| coords[i * d]).collect();
    Dataset::from_vectors(d, coords, values).expect("well-formed columns")
}

/// Parameters of a planted ξ-GMM grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiGmmSpec {
    pub model: MixtureModel,
    /// Grid step along every axis.
    pub spacing: f64,
    /// Grid points farther than this many standard deviations from every
    /// mean are dropped.
    pub half_width: f64,
    /// Records per unit of density.
    pub scale: f64,
    pub xi: f64,
}

/// Entities on a grid; entity `e` gets `round(scale·N(e)·(1+u))` identical
/// records with `u` uniform in `[−0.8ξ, 0.8ξ]`, adjusted so the count stays
/// within relative `ξ` of `scale·N(e)`. Values are the first coordinate.
pub fn xi_gmm_grid(spec: &XiGmmSpec, seed: u64) -> Result<Dataset> {
    let m = &spec.model;
    let d = m.dim();
    if !(spec.spacing > 0.0 && spec.half_width > 0.0 && spec.scale > 0.0) {
        return Err(Error::param("spec", "spacing, half width and scale must be positive"));
    }
    if !(spec.xi > 0.0 && spec.xi < 1.0) {
        return Err(Error::param("xi", format!("{} is not in (0, 1)", spec.xi)));
    }
    let sd: Vec<f64> = m.variances.iter().map(|v| v.sqrt()).collect();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for (mean, s) in m.means.iter().zip(&sd) {
        for j in 0..d {
            lo[j] = lo[j].min(mean[j] - spec.half_width * s);
            hi[j] = hi[j].max(mean[j] + spec.half_width * s);
        }
    }
    let steps: Vec<i64> = (0..d)
        .map(|j| ((hi[j] - lo[j]) / spec.spacing).floor() as i64 + 1)
        .collect();
    let total: i64 = steps.iter().product();
    let mut r = rng::rng(seed);
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut entity = 0u32;
    let mut point = vec![0.0; d];
    for flat in 0..total {
        let mut rest = flat;
        for j in 0..d {
            point[j] = lo[j] + (rest % steps[j]) as f64 * spec.spacing;
            rest /= steps[j];
        }
        let near = m.means.iter().zip(&sd).any(|(mean, s)| {
            let sq: f64 = mean.iter().zip(&point).map(|(a, b)| (a - b) * (a - b)).sum();
            sq.sqrt() <= spec.half_width * s
        });
        if !near {
            continue;
        }
        let ideal = spec.scale * gmm_density(m, &point)?;
        let low = (ideal * (1.0 - spec.xi)).ceil().max(1.0);
        let high = (ideal * (1.0 + spec.xi)).floor();
        if low > high {
            return Err(Error::param(
                "scale",
                format!("too small to keep counts within xi at density {:.3e}", ideal / spec.scale),
            ));
        }
        let u = r.random_range(-0.8 * spec.xi..=0.8 * spec.xi);
        let count = (ideal * (1.0 + u)).round().clamp(low, high) as usize;
        for _ in 0..count {
            coords.extend_from_slice(&point);
            labels.push(entity);
        }
        entity += 1;
    }
    let n = labels.len();
    let values = (0..n).map(|i| coords[i * d]).collect();
    Dataset::from_vectors(d, coords, values)?.with_labels(EntityLabels::from_indices(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::jaccard_distance;

    #[test]
    fn eta_counts_respect_the_floor() {
        let c = eta_balanced_counts(50, 0.01, 10_000, 3).unwrap();
        assert_eq!(c.iter().sum::<u64>(), 10_000);
        assert!(c.iter().all(|&x| x >= 100));
        assert!(eta_balanced_counts(200, 0.01, 10_000, 3).is_err());
        let d = population(&c, 0);
        assert!(d.entity_table().eta() >= 0.01);
    }

    #[test]
    fn near_duplicates_are_close() {
        let d = publications_like(200, 1.0, 4);
        assert_eq!(d.len(), 400);
        for i in (0..400).step_by(2) {
            let dist = jaccard_distance(d.shingles(i).unwrap(), d.shingles(i + 1).unwrap());
            assert!(dist <= 0.2, "{dist}: {:?} / {:?}", d.text(i), d.text(i + 1));
        }
    }

    #[test]
    fn restaurants_shape() {
        let d = restaurants_like(0);
        assert_eq!(d.len(), 864);
        assert_eq!(d.entity_count(), 752);
    }

    #[test]
    fn xi_grid_counts_stay_within_xi() {
        let model = MixtureModel::new(vec![0.5, 0.5], vec![vec![-5.0], vec![5.0]], vec![1.0, 1.0]).unwrap();
        let spec = XiGmmSpec {
            model: model.clone(),
            spacing: 0.1,
            half_width: 3.5,
            scale: 2e5,
            xi: 0.05,
        };
        let d = xi_gmm_grid(&spec, 1).unwrap();
        let counts = d.entity_counts();
        for (e, &c) in counts.iter().enumerate() {
            let i = d.entities().iter().position(|&x| x == e as u32).unwrap();
            let ideal = spec.scale * gmm_density(&model, d.vector(i).unwrap()).unwrap();
            assert!((c as f64 - ideal).abs() <= spec.xi * ideal + 1e-9);
        }
        assert_eq!(d.entity_count(), 142);
    }

    #[test]
    fn sensor_readings_collapse_to_entities() {
        let model = MixtureModel::new(vec![1.0], vec![vec![20.0, 40.0]], vec![1.0]).unwrap();
        let d = sensor_like(&model, 5_000, 0.5, 2);
        assert!(d.entity_count() < 5_000);
        assert_eq!(d.dim(), Some(2));
    }

    #[test]
    fn ratio_counts_have_the_ratio() {
        let c = ratio_counts(10, 5, 20);
        assert_eq!(c.iter().max().unwrap() / c.iter().min().unwrap(), 5);
    }
}
