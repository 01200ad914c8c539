//! Batch CLI for survey-estimation experiments: generate populations and
//! nonprobability scenarios, run one-shot estimates, Monte Carlo grids and
//! sample-size plans. Every command is bit-reproducible from its seed and
//! writes a `manifest.json` recording inputs (with digests), outputs and the
//! resolved configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use madi::config::{parse_grid, parse_strategies, ExperimentSpec, NpdSource, PopulationSource};
use madi::design::{draw_srs, Frame, Sample};
use madi::estimators::EstimateStatus;
use madi::manifest::RunManifest;
use madi::npd::{generate_npd, Scenario};
use madi::population::{fmt_f64, Partition, Population};
use madi::rng::{stream, StreamDomain};
use madi::simulation::{
    estimate_once, fit_strategy_model, run_grid, sample_size_greg, sample_size_ht,
    sample_size_madi, CvDenominator, SimulationConfig, Strategy,
};

#[derive(Parser)]
#[command(
    name = "madi",
    version,
    about = "Design-based survey estimation with nonprobability data integration"
)]
struct Cli {
    /// Master seed; every seeded command is bit-reproducible.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory outputs are written into.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic register-like population CSV.
    GenPop {
        /// Number of units.
        #[arg(long)]
        n: usize,
        /// Auxiliary dimension (at least 2).
        #[arg(long)]
        p: usize,
        /// Output population CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a nonprobability subset for a scenario: partition CSV plus,
    /// for propensity scenarios, a propensity CSV.
    GenNpd {
        /// Population CSV.
        #[arg(long)]
        pop: PathBuf,
        /// sim1 or k1..k8.
        #[arg(long)]
        scenario: String,
        /// Target share of the population allocated to A, in (0, 1).
        #[arg(long)]
        fraction: f64,
        /// Prefix for output files: <prefix>_partition.csv etc.
        #[arg(long)]
        out_prefix: String,
    },
    /// One-shot estimation of the population total on a supplied or drawn
    /// sample.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo grid from a config file; flags override file keys.
    Simulate {
        /// Experiment config file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Override: comma-separated strategies (or `all`).
        #[arg(long)]
        strategies: Option<String>,
        /// Override: grid as comma list or start:stop:step.
        #[arg(long)]
        grid: Option<String>,
        /// Override: replicates per cell.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override: confidence level.
        #[arg(long)]
        level: Option<f64>,
        /// Override: enumeration mode on.
        #[arg(long)]
        enumeration: bool,
    },
    /// Required sample sizes for a target coefficient of variation.
    SampleSize {
        /// Population CSV.
        #[arg(long)]
        pop: PathBuf,
        /// Partition CSV (needed by the model-assisted strategies).
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Target coefficient of variation, e.g. 0.01.
        #[arg(long)]
        cv: f64,
        /// Comma-separated strategies with a planning formula:
        /// srs_u_ht, srs_u_greg, srs_b_madi_ols, srs_b_madi_rf.
        #[arg(long)]
        strategies: String,
        /// Total the model-assisted CV is measured against: yb or y.
        #[arg(long, default_value = "yb")]
        cv_denominator: String,
        /// Scenario label echoed into the output CSV.
        #[arg(long, default_value = "")]
        scenario_label: String,
        /// Register-share label echoed into the output CSV.
        #[arg(long, default_value = "")]
        l_label: String,
        /// Output CSV (default sample_size.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EstimateArgs {
    /// Population CSV.
    #[arg(long)]
    pop: PathBuf,
    /// Partition CSV; required by the B-frame strategies.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Sample CSV (single `id` column) to evaluate.
    #[arg(long, conflicts_with = "draw")]
    sample: Option<PathBuf>,
    /// Draw a fresh sample of this size instead.
    #[arg(long)]
    draw: Option<usize>,
    /// Strategy id, e.g. srs_b_madi_rf.
    #[arg(long)]
    strategy: String,
    /// Confidence level for the reported interval.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Output CSV row (default estimate.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the fitted register model as JSON (model-assisted strategies).
    #[arg(long)]
    dump_model: Option<PathBuf>,
    /// Trees in forest models.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Minimum leaf size in tree models.
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
    Status(EstimateStatus),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::Status(EstimateStatus::SingularModel) => 3,
            CliError::Status(EstimateStatus::InsufficientSample) => 4,
            CliError::Status(EstimateStatus::Ok) => 0,
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        let mut message = e.to_string();
        let mut source = e.source();
        while let Some(s) = source {
            message.push_str(&format!(": {s}"));
            source = s.source();
        }
        CliError::Runtime(message)
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match &err {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Runtime(m) => eprintln!("error: {m}"),
                CliError::Status(s) => eprintln!("no estimate: status {}", s.label()),
            }
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create out dir: {e}")))?;
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::GenPop { n, p, out } => gen_pop(&cli.out_dir, seed, n, p, &out),
        Command::GenNpd {
            pop,
            scenario,
            fraction,
            out_prefix,
        } => gen_npd(&cli.out_dir, seed, &pop, &scenario, fraction, &out_prefix),
        Command::Estimate(args) => estimate(&cli.out_dir, seed, args),
        Command::Simulate {
            config,
            strategies,
            grid,
            replicates,
            level,
            enumeration,
        } => simulate(
            &cli.out_dir,
            cli.seed,
            &config,
            strategies.as_deref(),
            grid.as_deref(),
            replicates,
            level,
            enumeration,
        ),
        Command::SampleSize {
            pop,
            partition,
            cv,
            strategies,
            cv_denominator,
            scenario_label,
            l_label,
            out,
        } => sample_size(
            &cli.out_dir,
            seed,
            &pop,
            partition.as_deref(),
            cv,
            &strategies,
            &cv_denominator,
            &scenario_label,
            &l_label,
            out.as_deref(),
        ),
    }
}

fn load_population(path: &Path, manifest: &mut RunManifest) -> Result<Population, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    manifest.record_input_bytes(path, &bytes);
    Ok(Population::from_csv_reader(bytes.as_slice())?)
}

fn load_partition(
    path: &Path,
    pop: &Population,
    manifest: &mut RunManifest,
) -> Result<Partition, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    manifest.record_input_bytes(path, &bytes);
    Ok(Partition::from_csv_reader(bytes.as_slice(), pop)?)
}

fn write_output(
    out_dir: &Path,
    rel: &Path,
    contents: &str,
    manifest: &mut RunManifest,
) -> Result<PathBuf, CliError> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    manifest.record_output(&path);
    Ok(path)
}

fn finish(manifest: RunManifest, out_dir: &Path) -> Result<(), CliError> {
    manifest
        .finish_to_path(&out_dir.join("manifest.json"))
        .map_err(|e| CliError::Runtime(format!("manifest: {e}")))
}

fn gen_pop(out_dir: &Path, seed: u64, n: usize, p: usize, out: &Path) -> Result<(), CliError> {
    if p < 2 {
        return Err(usage(format!("--p must be at least 2, got {p}")));
    }
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let mut manifest = RunManifest::start("gen-pop", seed);
    manifest.echo("n", n);
    manifest.echo("p", p);
    let pop = Population::synthetic(seed, n, p)?;
    let path = write_output(out_dir, out, &pop.to_csv_string(), &mut manifest)?;
    println!("wrote {} ({} units, {} auxiliaries)", path.display(), n, p);
    finish(manifest, out_dir)
}

fn gen_npd(
    out_dir: &Path,
    seed: u64,
    pop_path: &Path,
    scenario_text: &str,
    fraction: f64,
    out_prefix: &str,
) -> Result<(), CliError> {
    let scenario = Scenario::parse(scenario_text).map_err(|e| usage(e.to_string()))?;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(usage(format!(
            "--fraction must be inside (0, 1), got {fraction}"
        )));
    }
    let mut manifest = RunManifest::start("gen-npd", seed);
    manifest.echo("scenario", scenario.label());
    manifest.echo("fraction", fraction);
    let pop = load_population(pop_path, &mut manifest)?;
    let (partition, propensity) = generate_npd(&pop, scenario, fraction, seed)?;

    let mut buf = Vec::new();
    partition.save_csv_writer(&mut buf, &pop)?;
    let partition_rel = PathBuf::from(format!("{out_prefix}_partition.csv"));
    let path = write_output(
        out_dir,
        &partition_rel,
        &String::from_utf8(buf).unwrap(),
        &mut manifest,
    )?;
    println!("wrote {}", path.display());

    if let Some(prop) = &propensity {
        let mut buf = Vec::new();
        prop.save_csv_writer(&mut buf, &pop)?;
        let rel = PathBuf::from(format!("{out_prefix}_propensity.csv"));
        let path = write_output(
            out_dir,
            &rel,
            &String::from_utf8(buf).unwrap(),
            &mut manifest,
        )?;
        println!("wrote {}", path.display());
    }

    let (mean_a, mean_b) = partition.mean_y(&pop);
    let mean_a = mean_a.map(fmt_f64).unwrap_or_default();
    let mean_b = mean_b.map(fmt_f64).unwrap_or_default();
    println!(
        "scenario={} n_a={} n_b={} mean_y_a={mean_a} mean_y_b={mean_b}",
        scenario.label(),
        partition.n_a(),
        partition.n_b()
    );
    manifest.echo("n_a", partition.n_a());
    manifest.echo("mean_y_a", mean_a);
    manifest.echo("mean_y_b", mean_b);
    finish(manifest, out_dir)
}

fn read_sample_ids(
    path: &Path,
    pop: &Population,
    frame: &Frame,
    manifest: &mut RunManifest,
) -> Result<Sample, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    manifest.record_input_bytes(path, &bytes);
    let text = String::from_utf8_lossy(&bytes);
    let mut rows = Vec::new();
    let in_frame: std::collections::HashSet<u32> = frame.rows().iter().copied().collect();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if index == 0 {
            if line != "id" {
                return Err(usage(format!(
                    "sample file must start with an `id` header, got {line:?}"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let id: u64 = line
            .parse()
            .map_err(|_| usage(format!("sample line {}: bad id {line:?}", index + 1)))?;
        let row = pop
            .row_of(id)
            .ok_or_else(|| usage(format!("sample id {id} not in population")))?;
        if !in_frame.contains(&(row as u32)) {
            return Err(usage(format!(
                "sample id {id} is outside the strategy's frame"
            )));
        }
        rows.push(row as u32);
    }
    Sample::new(frame.kind(), frame.len(), rows).map_err(|e| usage(e.to_string()))
}

fn estimate(out_dir: &Path, seed: u64, args: EstimateArgs) -> Result<(), CliError> {
    let strategy = Strategy::parse(&args.strategy).map_err(|e| usage(e.to_string()))?;
    let mut manifest = RunManifest::start("estimate", seed);
    manifest.echo("strategy", strategy.id());
    manifest.echo("level", args.level);
    let pop = load_population(&args.pop, &mut manifest)?;
    let partition = match &args.partition {
        Some(path) => Some(load_partition(path, &pop, &mut manifest)?),
        None => None,
    };
    if strategy.needs_partition() && partition.is_none() {
        return Err(usage(format!(
            "strategy {} requires --partition",
            strategy.id()
        )));
    }

    let frame = match strategy.frame_kind() {
        madi::design::FrameKind::Population => Frame::population(&pop),
        madi::design::FrameKind::Complement => Frame::complement(partition.as_ref().unwrap()),
    };

    let mut config = SimulationConfig {
        master_seed: seed,
        level: args.level,
        ..Default::default()
    };
    config.forest.n_trees = args.trees;
    config.forest.min_leaf = args.min_leaf;

    let sample = match (&args.sample, args.draw) {
        (Some(path), None) => read_sample_ids(path, &pop, &frame, &mut manifest)?,
        (None, Some(n)) => {
            if n == 0 || n > frame.len() {
                return Err(usage(format!(
                    "--draw {n} out of range 1..={} for frame {}",
                    frame.len(),
                    frame.kind().label()
                )));
            }
            let mut rng = stream(
                seed,
                StreamDomain::Sampling,
                strategy.stream_index(),
                n as u64,
                0,
            );
            let sample = draw_srs(&frame, n, &mut rng)?;
            // export the drawn ids for audit
            let mut text = String::from("id\n");
            for id in sample.ids(&pop) {
                text.push_str(&format!("{id}\n"));
            }
            let path = write_output(out_dir, Path::new("sample.csv"), &text, &mut manifest)?;
            println!("wrote {}", path.display());
            sample
        }
        _ => return Err(usage("exactly one of --sample or --draw is required")),
    };
    manifest.echo("n", sample.n());

    if let Some(dump) = &args.dump_model {
        match fit_strategy_model(strategy, &config, &pop, partition.as_ref())? {
            Some(model) => {
                let json = serde_json::to_string_pretty(&model.to_json()).expect("json");
                let path = write_output(out_dir, dump, &json, &mut manifest)?;
                println!("wrote {}", path.display());
            }
            None => {
                return Err(usage(format!(
                    "strategy {} has no register-trained model to dump",
                    strategy.id()
                )))
            }
        }
    }

    let single = estimate_once(strategy, &config, &pop, partition.as_ref(), &sample)?;
    let row = single.result.csv_row(strategy.id(), sample.n());
    let out_rel = args.out.unwrap_or_else(|| PathBuf::from("estimate.csv"));
    let csv = format!("strategy,n,point,var_est,status\n{row}\n");
    let path = write_output(out_dir, &out_rel, &csv, &mut manifest)?;
    println!("wrote {}", path.display());

    println!("status: {}", single.result.status().label());
    if let Some(point) = single.result.point() {
        println!("point: {}", fmt_f64(point));
    }
    if let Some(variance) = single.result.variance() {
        println!("variance: {}", fmt_f64(variance));
    }
    if let Some((lo, hi)) = single.interval {
        println!("ci{}: [{}, {}]", args.level, fmt_f64(lo), fmt_f64(hi));
    }
    finish(manifest, out_dir)?;
    match single.result.status() {
        EstimateStatus::Ok => Ok(()),
        status => Err(CliError::Status(status)),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    out_dir: &Path,
    seed_flag: Option<u64>,
    config_path: &Path,
    strategies: Option<&str>,
    grid: Option<&str>,
    replicates: Option<usize>,
    level: Option<f64>,
    enumeration: bool,
) -> Result<(), CliError> {
    let (mut spec, config_bytes) = ExperimentSpec::from_path(config_path)
        .map_err(|e| usage(format!("{}: {e}", config_path.display())))?;
    if let Some(text) = strategies {
        spec.simulation.strategies = parse_strategies(text).map_err(usage)?;
    }
    if let Some(text) = grid {
        spec.simulation.grid = parse_grid(text).map_err(usage)?;
    }
    if let Some(m) = replicates {
        spec.simulation.replicates = m;
    }
    if let Some(l) = level {
        spec.simulation.level = l;
    }
    if enumeration {
        spec.simulation.enumeration = true;
    }
    if let Some(seed) = seed_flag {
        spec.simulation.master_seed = seed;
    }

    let mut manifest = RunManifest::start("simulate", spec.simulation.master_seed);
    manifest.record_input_bytes(config_path, &config_bytes);

    let pop = match &spec.population {
        PopulationSource::File(path) => load_population(path, &mut manifest)?,
        PopulationSource::Synthetic { seed, n, p } => {
            manifest.echo("pop_seed", seed);
            manifest.echo("pop_n", n);
            manifest.echo("pop_p", p);
            Population::synthetic(*seed, *n, *p)?
        }
    };

    let mut propensity = None;
    let partition = match &spec.npd {
        None => None,
        Some(NpdSource::File(path)) => Some(load_partition(path, &pop, &mut manifest)?),
        Some(NpdSource::Generated {
            scenario,
            fraction,
            seed,
        }) => {
            manifest.echo("scenario", scenario.label());
            manifest.echo("fraction", *fraction);
            manifest.echo("npd_seed", *seed);
            let (part, prop) = generate_npd(&pop, *scenario, *fraction, *seed)?;
            propensity = prop;
            Some(part)
        }
    };

    manifest.echo("strategies", {
        let ids: Vec<&str> = spec.simulation.strategies.iter().map(|s| s.id()).collect();
        ids.join(",")
    });
    manifest.echo("grid", {
        let ns: Vec<String> = spec.simulation.grid.iter().map(|n| n.to_string()).collect();
        ns.join(",")
    });
    manifest.echo("replicates", spec.simulation.replicates);
    manifest.echo("level", spec.simulation.level);
    manifest.echo("enumeration", spec.simulation.enumeration);

    let report = run_grid(&spec.simulation, &pop, partition.as_ref())?;

    let path = write_output(
        out_dir,
        Path::new("report.csv"),
        &report.to_csv(),
        &mut manifest,
    )?;
    println!("wrote {}", path.display());
    for metric in ["bias", "rmse", "coverage"] {
        let rel = PathBuf::from(format!("plot_{metric}.csv"));
        let path = write_output(out_dir, &rel, &report.plot_csv(metric), &mut manifest)?;
        println!("wrote {}", path.display());
    }
    if spec.simulation.dump_replicates {
        let path = write_output(
            out_dir,
            Path::new("replicates.csv"),
            &report.replicates_csv(),
            &mut manifest,
        )?;
        println!("wrote {}", path.display());
    }
    if let Some(prop) = &propensity {
        // scatter data: the study value against its selection propensity
        let mut text = String::from("id,y,theta\n");
        for row in 0..pop.len() {
            text.push_str(&format!(
                "{},{},{}\n",
                pop.id_at(row),
                fmt_f64(pop.y_at(row)),
                fmt_f64(prop.theta()[row])
            ));
        }
        let path = write_output(
            out_dir,
            Path::new("scatter_y_theta.csv"),
            &text,
            &mut manifest,
        )?;
        println!("wrote {}", path.display());
    }
    println!("t_y = {}", fmt_f64(report.t_y));
    finish(manifest, out_dir)
}

#[allow(clippy::too_many_arguments)]
fn sample_size(
    out_dir: &Path,
    seed: u64,
    pop_path: &Path,
    partition_path: Option<&Path>,
    cv: f64,
    strategies_text: &str,
    cv_denominator: &str,
    scenario_label: &str,
    l_label: &str,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if cv.is_nan() || cv <= 0.0 {
        return Err(usage(format!("--cv must be positive, got {cv}")));
    }
    let denominator = CvDenominator::parse(cv_denominator).map_err(|e| usage(e.to_string()))?;
    let strategies = parse_strategies(strategies_text).map_err(usage)?;
    for s in &strategies {
        if !matches!(
            s,
            Strategy::SrsUHt | Strategy::SrsUGreg | Strategy::SrsBMadiOls | Strategy::SrsBMadiRf
        ) {
            return Err(usage(format!(
                "strategy {} has no planning formula",
                s.id()
            )));
        }
    }

    let mut manifest = RunManifest::start("sample-size", seed);
    manifest.echo("cv", cv);
    manifest.echo("cv_denominator", denominator.label());
    let pop = load_population(pop_path, &mut manifest)?;
    let partition = match partition_path {
        Some(path) => Some(load_partition(path, &pop, &mut manifest)?),
        None => None,
    };

    let config = SimulationConfig {
        master_seed: seed,
        ..Default::default()
    };

    let mut csv = String::from("strategy,scenario,l,required_n\n");
    for strategy in &strategies {
        let required = match strategy {
            Strategy::SrsUHt => sample_size_ht(&pop, cv)?,
            Strategy::SrsUGreg => sample_size_greg(&pop, cv)?,
            Strategy::SrsBMadiOls | Strategy::SrsBMadiRf => {
                let part = partition.as_ref().ok_or_else(|| {
                    usage(format!("strategy {} requires --partition", strategy.id()))
                })?;
                let model = fit_strategy_model(*strategy, &config, &pop, Some(part))?
                    .expect("model-assisted strategies have a model");
                sample_size_madi(&pop, part, &model, cv, denominator)?
            }
            _ => unreachable!("filtered above"),
        };
        println!("{}: required n = {required}", strategy.id());
        csv.push_str(&format!(
            "{},{scenario_label},{l_label},{required}\n",
            strategy.id()
        ));
    }
    let out_rel = out.unwrap_or(Path::new("sample_size.csv"));
    let path = write_output(out_dir, out_rel, &csv, &mut manifest)?;
    println!("wrote {}", path.display());
    finish(manifest, out_dir)
}
