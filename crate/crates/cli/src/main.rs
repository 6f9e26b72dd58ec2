mod oracle;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entity_sampler::balanced::{estimate_eta, estimate_probs_balanced, plan_sample_size};
use entity_sampler::gmm::{estimate_probs_gmm, fit_from_sample, separation_check, EmOptions, MixtureModel};
use entity_sampler::harness::acceptance;
use entity_sampler::harness::{emit_report, inject_duplicates, run_experiment, DupProfile, ExperimentSpec, SampleReport};
use entity_sampler::ingest::{ingest_csv, write_csv, Schema};
use entity_sampler::lsh::{
    choose_bands_rows, estimate_probs_lsh, lsh_partition, BudgetSplit, HashFamily, KRanges, LabelOracle, LshOptions,
    SameClusterOracle,
};
use entity_sampler::rng::derive_seed;
use entity_sampler::{expected_trials_per_accept, Dataset, ProbabilityMap, Sampler};

use oracle::InteractiveOracle;

#[derive(Parser)]
#[command(name = "entity-sampler", version, about = "Uniform sampling over distinct entities of a dataset with duplicates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a CSV and write it back in canonical layout, with a summary on stdout.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Append duplicate copies of randomly chosen records.
    Inject {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        rate: f64,
        #[arg(long, value_enum, default_value_t = ProfileArg::Tpch)]
        profile: ProfileArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Estimate per-record probabilities and write them as a map CSV.
    Estimate(EstimateArgs),
    /// Draw an entity-uniform sample with a map or a mixture model.
    Sample {
        #[command(flatten)]
        data: DataArgs,
        /// Map CSV written by `estimate`.
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        map: Option<PathBuf>,
        /// Mixture model JSON written by `estimate --method gmm`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = entity_sampler::sampler::DEFAULT_TRIAL_FACTOR)]
        trial_factor: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Statistics JSON; printed to stdout when omitted.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run an experiment matrix, or the acceptance checks.
    Bench {
        /// Experiment spec (JSON).
        #[arg(long, required_unless_present = "acceptance")]
        spec: Option<PathBuf>,
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Acceptance criteria to run (1-10); `all` runs every one.
        #[arg(long, num_args = 1.., conflicts_with = "spec")]
        acceptance: Option<Vec<String>>,
    },
    /// Re-render report files from a `summary.json`.
    Report {
        summary: PathBuf,
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, short)]
    input: PathBuf,
    /// Column roles as JSON; overrides the column flags.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Numeric feature columns.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Text columns, joined with a space.
    #[arg(long, value_delimiter = ',')]
    text: Vec<String>,
    #[arg(long)]
    id: Option<String>,
    /// Ground-truth entity column.
    #[arg(long)]
    entity: Option<String>,
    /// Numeric column aggregated by the error metric.
    #[arg(long)]
    value: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: String,
}

impl DataArgs {
    fn schema(&self) -> Result<Schema> {
        if let Some(path) = &self.schema {
            return Schema::from_json_file(path).with_context(|| format!("reading schema {}", path.display()));
        }
        if self.features.is_empty() && self.text.is_empty() {
            return self.canonical_schema();
        }
        let mut s = Schema {
            features: self.features.clone(),
            text: self.text.clone(),
            ..Schema::default()
        };
        s.id = self.id.clone();
        s.entity = self.entity.clone();
        s.value = self.value.clone();
        s.delimiter = parse_delimiter(&self.delimiter)?;
        Ok(s)
    }

    /// Without column flags the file is assumed to be in the layout the
    /// `ingest` and `inject` commands write.
    fn canonical_schema(&self) -> Result<Schema> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(parse_delimiter(&self.delimiter)?)
            .from_path(&self.input)
            .with_context(|| format!("opening {}", self.input.display()))?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let has = |c: &str| header.iter().any(|h| h == c);
        let mut s = if has("text") {
            Schema::text(["text"])
        } else {
            let f: Vec<String> = header
                .iter()
                .filter(|h| h.starts_with('f') && h[1..].parse::<usize>().is_ok())
                .cloned()
                .collect();
            if f.is_empty() {
                bail!("no column flags given and {} is not in canonical layout", self.input.display());
            }
            Schema::vectors(f)
        };
        s.delimiter = parse_delimiter(&self.delimiter)?;
        for (col, slot) in [("id", &mut s.id), ("entity", &mut s.entity), ("value", &mut s.value)] {
            if has(col) {
                *slot = Some(col.to_string());
            }
        }
        Ok(s)
    }

    fn load(&self) -> Result<Dataset> {
        let schema = self.schema()?;
        ingest_csv(&self.input, &schema).with_context(|| format!("loading {}", self.input.display()))
    }
}

fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 => Ok(s.as_bytes()[0]),
        _ => bail!("delimiter must be a single byte, got `{s}`"),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Tpch,
    Uniform,
    Arbitrary,
}

impl From<ProfileArg> for DupProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Tpch => DupProfile::Tpch,
            ProfileArg::Uniform => DupProfile::Uniform,
            ProfileArg::Arbitrary => DupProfile::Arbitrary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Balanced,
    Lsh,
    Gmm,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Labels,
    Interactive,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Equal,
    Proportional,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Where to write the map CSV.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Sample size (balanced and gmm). For balanced, overrides the planner.
    #[arg(long)]
    m: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Lower bound on the smallest entity's mass.
    #[arg(long)]
    eta: Option<f64>,
    /// Estimate η from a without-replacement sample of this size instead.
    #[arg(long)]
    eta_sample: Option<usize>,
    /// Entity count for the planner; defaults to ⌈1/η⌉.
    #[arg(long)]
    entities: Option<u64>,
    /// Universal constant of the sample-size bounds.
    #[arg(long, default_value_t = 1.0)]
    a: f64,

    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    /// CSV of `block,k_min,k_max`; replaces the global range.
    #[arg(long)]
    k_file: Option<PathBuf>,
    /// Total number of pair queries; all pairs when omitted.
    #[arg(long)]
    pair_budget: Option<u64>,
    #[arg(long, value_enum, default_value_t = SplitArg::Equal)]
    split: SplitArg,
    #[arg(long, value_enum, default_value_t = OracleArg::Labels)]
    oracle: OracleArg,
    /// Garbage radius of the clustering step; defaults to λ for text and 1 for vectors.
    #[arg(long)]
    mu: Option<f64>,
    /// Blocking and clustering report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,

    /// Mixture components.
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Use this model instead of fitting one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Where to save the fitted model.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DatasetSummary {
    records: usize,
    feature_classes: usize,
    entities: Option<usize>,
    eta: Option<f64>,
    label_conflicts: Option<usize>,
}

fn summarize(data: &Dataset) -> DatasetSummary {
    let labeled = data.has_labels();
    DatasetSummary {
        records: data.len(),
        feature_classes: data.value_key_count(),
        entities: labeled.then(|| data.entity_count()),
        eta: labeled.then(|| data.entity_table().eta()),
        label_conflicts: labeled.then(|| data.label_conflicts()),
    }
}

fn write_dataset(data: &Dataset, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let w = create(p)?;
            write_csv(data, w)?;
        }
        None => write_csv(data, std::io::stdout().lock())?,
    }
    Ok(())
}

fn read_k_file(path: &Path) -> Result<KRanges> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec.with_context(|| format!("reading {}", path.display()))?);
    }
    rows.sort_unstable();
    let mut ranges = Vec::with_capacity(rows.len());
    for (i, (block, lo, hi)) in rows.into_iter().enumerate() {
        if block != i {
            bail!("{}: blocks must be numbered 0..q without gaps", path.display());
        }
        ranges.push((lo, hi));
    }
    Ok(KRanges::PerBlock(ranges))
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let data = args.data.load()?;
    let map = match args.method {
        MethodArg::Balanced => {
            let m = match args.m {
                Some(m) => m,
                None => {
                    let eta = match (args.eta, args.eta_sample) {
                        (Some(eta), _) => eta,
                        (None, Some(size)) => {
                            let est = estimate_eta(&data, size, derive_seed(args.seed, 7))?;
                            log::info!("estimated entity count {:.1}, η ≥ {:.3e}", est.e_hat, est.eta_lower_bound);
                            est.eta_lower_bound
                        }
                        (None, None) => bail!("balanced estimation needs --m, --eta or --eta-sample"),
                    };
                    let plan = plan_sample_size(args.epsilon, args.delta, eta, args.entities, args.a)?;
                    log::info!("planned sample size {}", plan.m);
                    plan.m
                }
            };
            estimate_probs_balanced(&data, m, args.seed)?
        }
        MethodArg::Lsh => {
            let family = if data.features().is_text() {
                HashFamily::MinHash
            } else {
                HashFamily::RandomHyperplane
            };
            let cfg = choose_bands_rows(args.lambda, args.delta)?.with_family(family);
            let blocking = lsh_partition(&data, &cfg, derive_seed(args.seed, 2))?;
            let k_ranges = match &args.k_file {
                Some(p) => read_k_file(p)?,
                None => KRanges::Global {
                    k_min: args.k_min,
                    k_max: args.k_max,
                },
            };
            let mu = args.mu.unwrap_or(if data.features().is_text() { args.lambda } else { 1.0 });
            let mut opts = LshOptions::new(k_ranges, mu);
            opts.budget = args.pair_budget;
            opts.split = match args.split {
                SplitArg::Equal => BudgetSplit::Equal,
                SplitArg::Proportional => BudgetSplit::Proportional,
            };
            let label_oracle;
            let interactive;
            let oracle: &dyn SameClusterOracle = match args.oracle {
                OracleArg::Labels => {
                    label_oracle = LabelOracle::new(&data)?;
                    &label_oracle
                }
                OracleArg::Interactive => {
                    interactive = InteractiveOracle::stdio(&data);
                    &interactive
                }
            };
            let est = estimate_probs_lsh(&data, &blocking, &opts, oracle, derive_seed(args.seed, 3))?;
            #[derive(Serialize)]
            struct LshReport<'a> {
                config: entity_sampler::lsh::LshConfig,
                blocking: entity_sampler::lsh::BlockingReport,
                clusters: usize,
                queries: u64,
                blocks: &'a [entity_sampler::lsh::BlockOutcome],
            }
            let report = LshReport {
                config: cfg,
                blocking: blocking.report(),
                clusters: est.cluster_count(),
                queries: est.total_queries(),
                blocks: &est.blocks,
            };
            write_json(&report, args.report.as_deref())?;
            est.map
        }
        MethodArg::Gmm => {
            let model = match &args.model {
                Some(p) => MixtureModel::load_json(p)?,
                None => {
                    let opts = EmOptions {
                        max_iter: args.iters,
                        tol: args.tol,
                        ..EmOptions::new(args.k, args.seed)
                    };
                    let m = args.m.unwrap_or(data.len() as u64);
                    let fit = fit_from_sample(&data, m, &opts)?;
                    if !fit.converged {
                        log::warn!("EM stopped after {} iterations without converging", fit.iterations);
                    }
                    fit.model
                }
            };
            separation_check(&model);
            if let Some(p) = &args.model_out {
                model.save_json(p)?;
            }
            estimate_probs_gmm(&data, &model)?
        }
    };
    let w = create(&args.output)?;
    map.write_csv(&data, w)?;
    Ok(())
}

#[derive(Serialize)]
struct SampleStats {
    requested: usize,
    trials: u64,
    acceptance_rate: f64,
    mean_trials_per_accept: f64,
    expected_trials_per_accept: f64,
    distinct_entities: usize,
    value_mean: f64,
}

#[allow(clippy::too_many_arguments)]
fn sample(
    data: &DataArgs,
    map: Option<&Path>,
    model: Option<&Path>,
    p: usize,
    seed: u64,
    trial_factor: u64,
    output: Option<&Path>,
    stats: Option<&Path>,
) -> Result<()> {
    let data = data.load()?;
    let phat = match (map, model) {
        (Some(path), _) => ProbabilityMap::read_csv_file(&data, path)?,
        (None, Some(path)) => estimate_probs_gmm(&data, &MixtureModel::load_json(path)?)?,
        (None, None) => bail!("pass --map or --model"),
    };
    let result = Sampler { trial_factor }.sample(&data, &phat, p, seed)?;
    let mut w: Box<dyn Write> = match output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    {
        let mut out = csv::Writer::from_writer(&mut w);
        let names = data.has_labels().then(|| data.entity_names());
        let mut header = vec!["draw", "record_id"];
        if names.is_some() {
            header.push("entity");
        }
        header.push("value");
        out.write_record(&header)?;
        for (draw, &i) in result.accepted.iter().enumerate() {
            let mut row = vec![draw.to_string(), data.record_id(i).into_owned()];
            if let Some(names) = &names {
                row.push(names[data.entities()[i] as usize].clone());
            }
            row.push(data.values()[i].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
    }
    w.flush()?;
    drop(w);
    let stats_block = SampleStats {
        requested: p,
        trials: result.trials,
        acceptance_rate: result.acceptance_rate(),
        mean_trials_per_accept: result.mean_trials_per_accept(),
        expected_trials_per_accept: expected_trials_per_accept(&data, &phat)?,
        distinct_entities: result.per_entity_counts.len(),
        value_mean: result.value_mean(&data),
    };
    match (stats, output) {
        (Some(path), _) => write_json(&stats_block, Some(path)),
        // the sample went to stdout, keep it clean
        (None, None) => {
            serde_json::to_writer_pretty(std::io::stderr().lock(), &stats_block)?;
            eprintln!();
            Ok(())
        }
        (None, Some(_)) => write_json(&stats_block, None),
    }
}

fn bench_spec(spec: &Path, out: &Path, repeats: Option<usize>, seed: Option<u64>) -> Result<ExitCode> {
    let mut spec = ExperimentSpec::from_json_file(spec).with_context(|| format!("reading {}", spec.display()))?;
    if let Some(r) = repeats {
        spec.repeats = r;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    let report = run_experiment(&spec)?;
    let files = emit_report(&report, out)?;
    for f in &files {
        println!("{}", f.display());
    }
    print_failures(&report);
    Ok(if report.total_failures() > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_failures(report: &SampleReport) {
    for c in report.cells.iter().filter(|c| c.failures > 0) {
        eprintln!(
            "cell dup={} fraction={}: {} of {} runs failed",
            c.dup_rate,
            c.fraction,
            c.failures,
            c.failures + c.runs
        );
        for m in c.failure_messages.iter().take(3) {
            eprintln!("  {m}");
        }
    }
}

fn bench_acceptance(which: &[String]) -> Result<ExitCode> {
    let ids: Vec<u8> = if which.iter().any(|w| w == "all") {
        acceptance::CRITERIA.to_vec()
    } else {
        which
            .iter()
            .map(|w| w.parse::<u8>().with_context(|| format!("`{w}` is not a criterion number")))
            .collect::<Result<_>>()?
    };
    let mut failed = 0;
    for id in ids {
        let outcome = acceptance::run_criterion(id)?;
        println!("{outcome}");
        if !outcome.passed {
            failed += 1;
        }
    }
    Ok(if failed > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { data, output } => {
            let d = data.load()?;
            write_dataset(&d, output.as_deref())?;
            if output.is_some() {
                write_json(&summarize(&d), None)?;
            }
        }
        Command::Inject {
            data,
            rate,
            profile,
            seed,
            output,
        } => {
            let d = data.load()?;
            let injected = inject_duplicates(&d, rate, profile.into(), seed)?;
            write_dataset(&injected, Some(&output))?;
            write_json(&summarize(&injected), None)?;
        }
        Command::Estimate(args) => estimate(&args)?,
        Command::Sample {
            data,
            map,
            model,
            p,
            seed,
            trial_factor,
            output,
            stats,
        } => sample(
            &data,
            map.as_deref(),
            model.as_deref(),
            p,
            seed,
            trial_factor,
            output.as_deref(),
            stats.as_deref(),
        )?,
        Command::Bench {
            spec,
            out,
            repeats,
            seed,
            acceptance,
        } => {
            return match (spec, acceptance) {
                (_, Some(which)) => bench_acceptance(&which),
                (Some(spec), None) => bench_spec(&spec, &out, repeats, seed),
                (None, None) => bail!("pass --spec or --acceptance"),
            }
        }
        Command::Report { summary, out } => {
            let text = std::fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?;
            let report: SampleReport = serde_json::from_str(&text)?;
            for f in emit_report(&report, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
