use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds;
use super::inject::{inject_duplicates, DupProfile};
use super::loaders::RealDataset;
use super::stats::{mean, spearman, std_error};
use super::synthetic;
use crate::balanced::estimate_probs_balanced;
use crate::error::{Error, Result};
use crate::gmm::{estimate_probs_gmm, fit_from_sample, EmOptions, MixtureModel};
use crate::ingest::{ingest_csv, Schema};
use crate::lsh::{
    choose_bands_rows, estimate_probs_lsh, lsh_partition, BudgetSplit, HashFamily, KRanges,
    LabelOracle, LshOptions,
};
use crate::model::{relative_error, Dataset};
use crate::rng::derive_seed;
use crate::sampler::{induced_tv_to_uniform, sample_clean, ProbabilityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Balanced,
    Lsh,
    Gmm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Balanced => "balanced",
            Method::Lsh => "lsh",
            Method::Gmm => "gmm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Csv { path: PathBuf, schema: Schema },
    Real { dataset: RealDataset, path: PathBuf },
    Tpch { n: usize },
    Publications { entities: usize, dup_rate: f64 },
    Restaurants,
    Sensor { model: MixtureModel, n: usize, resolution: f64 },
}

impl DataSource {
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Csv { path, schema } => ingest_csv(path, schema),
            DataSource::Real { dataset, path } => dataset.load(path),
            DataSource::Tpch { n } => Ok(synthetic::tpch_lineitem(*n, seed)),
            DataSource::Publications { entities, dup_rate } => {
                Ok(synthetic::publications_like(*entities, *dup_rate, seed))
            }
            DataSource::Restaurants => Ok(synthetic::restaurants_like(seed)),
            DataSource::Sensor { model, n, resolution } => {
                model.validate()?;
                Ok(synthetic::sensor_like(model, *n, *resolution, seed))
            }
        }
    }
}

/// Estimator settings; only those of the chosen method are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Confidence used for the theoretical-bound columns.
    pub delta: f64,
    pub universal_a: f64,
    pub lambda: f64,
    pub lsh_delta: f64,
    pub k_min: usize,
    pub k_max: usize,
    /// Prefilter radius; defaults to `lambda` for text and 1 for vectors.
    pub mu_radius: Option<f64>,
    pub split: BudgetSplit,
    pub gmm_k: usize,
    pub em_iters: usize,
    pub em_tol: f64,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            delta: 0.1,
            universal_a: 1.0,
            lambda: 0.2,
            lsh_delta: 0.1,
            k_min: 1,
            k_max: 8,
            mu_radius: None,
            split: BudgetSplit::Equal,
            gmm_k: 2,
            em_iters: 500,
            em_tol: 1e-6,
        }
    }
}

fn default_repeats() -> usize {
    100
}

/// One experiment matrix: every duplication rate crossed with every sample
/// fraction, each cell repeated `repeats` times. Sample fractions are
/// fractions of the injected dataset size and set both the estimation budget
/// and the number of accepted samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DataSource,
    pub method: Method,
    pub sweep: Vec<f64>,
    pub dup_rates: Vec<f64>,
    #[serde(default)]
    pub profile: DupProfile,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: MethodParams,
    /// CSV with `dup_rate,fraction,baseline_error` from an external method.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(dataset: DataSource, method: Method, sweep: Vec<f64>, dup_rates: Vec<f64>) -> Self {
        ExperimentSpec {
            dataset,
            method,
            sweep,
            dup_rates,
            profile: DupProfile::default(),
            repeats: default_repeats(),
            seed: 0,
            params: MethodParams::default(),
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::param("repeats", "must be at least 1"));
        }
        if let Some(f) = self.sweep.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::param("sweep", format!("fraction {f} is not in (0, 1)")));
        }
        if let Some(r) = self.dup_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::param("dup_rates", format!("rate {r} is not in [0, 1)")));
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ExperimentSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of one repeat of one cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub error: f64,
    pub acceptance_rate: f64,
    pub trials_per_accept: f64,
    pub tv: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub dup_rate: f64,
    pub fraction: f64,
    pub runs: usize,
    pub failures: usize,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub std_error: f64,
    pub accuracy: f64,
    pub mean_acceptance_rate: f64,
    pub mean_trials_per_accept: f64,
    pub mean_tv: f64,
    pub bound: Option<f64>,
    pub baseline_error: Option<f64>,
    pub failure_messages: Vec<String>,
    pub elapsed_secs: f64,
}

impl CellReport {
    fn from_runs(dup_rate: f64, fraction: f64, results: Vec<std::result::Result<RunOutcome, String>>, elapsed_secs: f64) -> Self {
        let mut ok = Vec::new();
        let mut failure_messages: Vec<String> = Vec::new();
        let mut failures = 0;
        for r in results {
            match r {
                Ok(o) => ok.push(o),
                Err(msg) => {
                    failures += 1;
                    if !failure_messages.contains(&msg) {
                        failure_messages.push(msg);
                    }
                }
            }
        }
        let errors: Vec<f64> = ok.iter().map(|o| o.error).collect();
        let avg = |f: fn(&RunOutcome) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                mean(&ok.iter().map(f).collect::<Vec<_>>())
            }
        };
        let bounds: Vec<f64> = ok.iter().filter_map(|o| o.bound).collect();
        let mean_error = if errors.is_empty() { f64::NAN } else { mean(&errors) };
        CellReport {
            dup_rate,
            fraction,
            runs: ok.len(),
            failures,
            std_error: std_error(&errors),
            accuracy: 1.0 - mean_error,
            mean_error,
            errors,
            mean_acceptance_rate: avg(|o| o.acceptance_rate),
            mean_trials_per_accept: avg(|o| o.trials_per_accept),
            mean_tv: avg(|o| o.tv),
            bound: (!bounds.is_empty()).then(|| mean(&bounds)),
            baseline_error: None,
            failure_messages,
            elapsed_secs,
        }
    }
}

/// Trend of one duplication-rate row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowTrend {
    pub dup_rate: f64,
    /// Spearman correlation of fraction against per-repeat error.
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleReport {
    pub spec: ExperimentSpec,
    pub clean_mean: f64,
    pub records: usize,
    pub entities: usize,
    pub cells: Vec<CellReport>,
    pub rows: Vec<RowTrend>,
    pub elapsed_secs: f64,
}

impl SampleReport {
    pub fn cell(&self, dup_rate: f64, fraction: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.dup_rate == dup_rate && c.fraction == fraction)
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures).sum()
    }
}

/// Loads the dataset and runs every cell.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SampleReport> {
    spec.validate()?;
    let data = spec.dataset.load(derive_seed(spec.seed, u64::MAX))?;
    run_experiment_on(&data, spec)
}

/// Runs every cell on an already loaded clean dataset.
pub fn run_experiment_on(data: &Dataset, spec: &ExperimentSpec) -> Result<SampleReport> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let start = Instant::now();
    let clean_mean = data.entity_mean();
    let baseline = match &spec.baseline {
        Some(p) => read_baseline(p)?,
        None => Vec::new(),
    };
    // One injected dataset per (rate, repeat), shared by the fractions.
    let jobs: Vec<(usize, usize)> = (0..spec.dup_rates.len())
        .flat_map(|d| (0..spec.repeats).map(move |r| (d, r)))
        .collect();
    let per_job: Vec<Vec<(std::result::Result<RunOutcome, String>, f64)>> = jobs
        .par_iter()
        .map(|&(d, r)| {
            let rate = spec.dup_rates[d];
            let inject_seed = derive_seed(derive_seed(spec.seed, d as u64), r as u64);
            let injected = inject_duplicates(data, rate, spec.profile, inject_seed);
            spec.sweep
                .iter()
                .enumerate()
                .map(|(f, &fraction)| {
                    let t = Instant::now();
                    let cell_index = (d * spec.sweep.len() + f) as u64;
                    let seed = derive_seed(derive_seed(spec.seed ^ 0x5eed, cell_index), r as u64);
                    let out = match &injected {
                        Ok(inj) => run_once(inj, clean_mean, fraction, spec, seed).map_err(|e| e.to_string()),
                        Err(e) => Err(e.to_string()),
                    };
                    (out, t.elapsed().as_secs_f64())
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for (d, &rate) in spec.dup_rates.iter().enumerate() {
        for (f, &fraction) in spec.sweep.iter().enumerate() {
            let mut results = Vec::with_capacity(spec.repeats);
            let mut elapsed = 0.0;
            for r in 0..spec.repeats {
                let (out, secs) = &per_job[d * spec.repeats + r][f];
                elapsed += secs;
                results.push(out.clone());
            }
            let mut cell = CellReport::from_runs(rate, fraction, results, elapsed);
            cell.baseline_error = baseline
                .iter()
                .find(|(r, f, _)| (r - rate).abs() < 1e-9 && (f - fraction).abs() < 1e-9)
                .map(|b| b.2);
            if cell.failures > 0 {
                log::warn!(
                    "dup {rate}, fraction {fraction}: {} of {} runs failed: {}",
                    cell.failures,
                    spec.repeats,
                    cell.failure_messages.join("; ")
                );
            }
            cells.push(cell);
        }
    }
    let rows = spec
        .dup_rates
        .iter()
        .map(|&rate| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for c in cells.iter().filter(|c| c.dup_rate == rate) {
                xs.extend(std::iter::repeat_n(c.fraction, c.errors.len()));
                ys.extend_from_slice(&c.errors);
            }
            RowTrend {
                dup_rate: rate,
                spearman: spearman(&xs, &ys),
            }
        })
        .collect();
    Ok(SampleReport {
        spec: spec.clone(),
        clean_mean,
        records: data.len(),
        entities: data.entity_count(),
        cells,
        rows,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_once(data: &Dataset, clean_mean: f64, fraction: f64, spec: &ExperimentSpec, seed: u64) -> Result<RunOutcome> {
    let n = data.len();
    let m = ((fraction * n as f64).round() as u64).max(1);
    let p = m as usize;
    let params = &spec.params;
    let (map, bound) = estimate(data, m, spec.method, params, seed)?;
    let result = sample_clean(data, &map, p, derive_seed(seed, 1))?;
    let error = relative_error(clean_mean, result.value_mean(data))?;
    Ok(RunOutcome {
        error,
        acceptance_rate: result.acceptance_rate(),
        trials_per_accept: result.mean_trials_per_accept(),
        tv: induced_tv_to_uniform(data, &map)?,
        bound,
    })
}

/// Estimates `p̂` with a budget of `m` and returns the planner bound at `m`.
pub fn estimate(
    data: &Dataset,
    m: u64,
    method: Method,
    params: &MethodParams,
    seed: u64,
) -> Result<(ProbabilityMap, Option<f64>)> {
    match method {
        Method::Balanced => {
            let map = estimate_probs_balanced(data, m, seed)?;
            // ground-truth η and |E| feed only the reported bound
            let table_eta = data.entity_counts().iter().copied().min().unwrap_or(1) as f64 / data.len() as f64;
            let bound = bounds::balanced_epsilon(
                m as f64,
                params.delta,
                table_eta,
                data.entity_count() as f64,
                params.universal_a,
            );
            Ok((map, Some(bound)))
        }
        Method::Lsh => {
            let oracle = LabelOracle::new(data)?;
            let family = if data.features().is_text() {
                HashFamily::MinHash
            } else {
                HashFamily::RandomHyperplane
            };
            let cfg = choose_bands_rows(params.lambda, params.lsh_delta)?.with_family(family);
            let blocking = lsh_partition(data, &cfg, derive_seed(seed, 2))?;
            let mu = params.mu_radius.unwrap_or(if data.features().is_text() {
                params.lambda
            } else {
                1.0
            });
            let mut opts = LshOptions::new(
                KRanges::Global {
                    k_min: params.k_min,
                    k_max: params.k_max,
                },
                mu,
            );
            opts.budget = Some(m);
            opts.split = params.split;
            let est = estimate_probs_lsh(data, &blocking, &opts, &oracle, derive_seed(seed, 3))?;
            let candidates = (params.k_max.saturating_sub(params.k_min) + 1) as f64;
            let bound = bounds::lsh_alpha(
                m as f64,
                params.delta,
                candidates,
                blocking.q() as f64,
                params.universal_a,
            );
            Ok((est.map, Some(bound)))
        }
        Method::Gmm => {
            let opts = EmOptions {
                max_iter: params.em_iters,
                tol: params.em_tol,
                ..EmOptions::new(params.gmm_k, seed)
            };
            let fit = fit_from_sample(data, m, &opts)?;
            let map = estimate_probs_gmm(data, &fit.model)?;
            let eta_min = fit.model.weights.iter().copied().fold(f64::INFINITY, f64::min);
            let bound = bounds::gmm_epsilon(
                m as f64,
                params.delta,
                map.floor(),
                eta_min,
                fit.model.dim() as f64,
                fit.model.k() as f64,
                1.0,
                1.0,
            );
            Ok((map, Some(bound)))
        }
    }
}

/// `(dup_rate, fraction, baseline_error)` rows.
pub fn read_baseline(path: &std::path::Path) -> Result<Vec<(f64, f64, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        dup_rate: f64,
        fraction: f64,
        baseline_error: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push((row.dup_rate, row.fraction, row.baseline_error));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: Method) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(DataSource::Tpch { n: 2_000 }, method, vec![0.05, 0.1], vec![0.1, 0.3]);
        spec.repeats = 4;
        spec.seed = 11;
        spec
    }

    #[test]
    fn balanced_cells_have_the_right_shape() {
        let report = run_experiment(&small(Method::Balanced)).unwrap();
        assert_eq!(report.cells.len(), 4);
        for c in &report.cells {
            assert_eq!(c.runs, 4);
            assert!(c.errors.iter().all(|e| *e >= 0.0));
            assert!((c.accuracy - (1.0 - c.mean_error)).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_specs_give_identical_cells() {
        let a = run_experiment(&small(Method::Balanced)).unwrap();
        let b = run_experiment(&small(Method::Balanced)).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.errors, y.errors);
        }
    }

    #[test]
    fn method_mismatch_is_reported_per_cell() {
        // lsh needs labels, gmm needs a well-posed mixture; tpch has no labels
        let report = run_experiment(&small(Method::Lsh)).unwrap();
        assert!(report.cells.iter().all(|c| c.failures == 4 && c.runs == 0));
        assert!(report.total_failures() > 0);
    }

    #[test]
    fn lsh_runs_on_labeled_text() {
        let mut spec = ExperimentSpec::new(
            DataSource::Publications {
                entities: 150,
                dup_rate: 0.3,
            },
            Method::Lsh,
            vec![0.3],
            vec![0.0],
        );
        spec.repeats = 2;
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.cells[0].runs, 2, "{:?}", report.cells[0].failure_messages);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = small(Method::Balanced);
        spec.sweep = vec![1.5];
        assert!(run_experiment(&spec).is_err());
        let mut spec = small(Method::Balanced);
        spec.repeats = 0;
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = small(Method::Gmm);
        let text = serde_json::to_string(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let minimal: ExperimentSpec = serde_json::from_str(
            r#"{"dataset":{"kind":"tpch","n":100},"method":"balanced","sweep":[0.1],"dup_rates":[0.1]}"#,
        )
        .unwrap();
        assert_eq!(minimal.repeats, 100);
    }
}
