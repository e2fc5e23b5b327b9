mod config_file;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use cupcf::evaluate::{fmt_metric, DEFAULT_FOLDS, DEFAULT_SEED};
use cupcf::prediction::DEFAULT_K_NEIGHBORS;
use cupcf::recommend::RECOMMENDATION_CSV_HEADER;
use cupcf::{
    build_similarity_matrix, check_bands, load_external_folds, load_ratings, merge_lists,
    run_experiment, run_on_folds, Averaging, EvalReport, ExperimentConfig, Format, Measure, Method,
    NeighborPolicy, PredictConfig, Predictor64, RankingMode, RatingsMatrix, RecommendationList,
    SimilarityMatrix64, SplitSource,
};

/// Environment variable naming a directory against which relative input
/// and split paths are resolved.
const DATA_DIR_ENV: &str = "CUPCF_DATA_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "cupcf",
    version,
    about = "Collaborative filtering with combined NHSM and Pearson neighbourhoods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a ratings file and print its size and density.
    Validate(DataArgs),
    /// Dump a user-user similarity matrix (upper triangle) as CSV.
    Similarity {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "nhsm")]
        measure: Measure,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Predict ratings for one user (all unrated items, or a single item).
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        user: u32,
        #[arg(long)]
        item: Option<u32>,
    },
    /// Print the Top-N recommendations of one user as CSV.
    Recommend {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        user: u32,
        #[arg(short = 'n', long = "top-n", default_value_t = 10,
              value_parser = clap::value_parser!(u64).range(1..))]
        top_n: u64,
        #[arg(long, default_value = "cup")]
        ranking: RankingMode,
    },
    /// Run the cross-validated evaluation and write JSON and Markdown reports.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Ratings file.
    #[arg(short, long)]
    input: PathBuf,
    /// movielens (tab separated) or csv.
    #[arg(long, default_value = "movielens")]
    format: Format,
    /// key=value file supplying any of the long options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value_t = DEFAULT_K_NEIGHBORS)]
    k_neighbors: usize,
    /// Do not clip predictions into the rating scale.
    #[arg(long)]
    no_clamp: bool,
    /// cupcf, nhsm-only or pearson-only.
    #[arg(long, default_value = "cupcf")]
    method: Method,
    /// top-k-then-rated or rated-then-top-k.
    #[arg(long, default_value = "top-k-then-rated")]
    neighbors: NeighborPolicy,
}

impl ModelArgs {
    fn predict_config(&self) -> PredictConfig {
        PredictConfig {
            k_neighbors: self.k_neighbors,
            clamp: !self.no_clamp,
            neighbors: self.neighbors,
        }
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory holding u1.base/u1.test … instead of random folds.
    #[arg(long)]
    splits_dir: Option<PathBuf>,
    /// Comma-separated Top-N sizes.
    #[arg(long, default_value = "5,10,15,20,30")]
    n_values: String,
    /// Comma-separated relevance thresholds.
    #[arg(long, default_value = "3,4")]
    thresholds: String,
    /// cup (rank by predicted score) or merged (merge per-measure lists).
    #[arg(long, default_value = "cup")]
    ranking: RankingMode,
    /// micro or macro.
    #[arg(long, default_value = "micro")]
    averaging: Averaging,
    #[arg(long, default_value = "reports")]
    output_dir: PathBuf,
    /// json, markdown or both.
    #[arg(long, default_value = "both")]
    output_format: String,
    /// Exit non-zero unless the MovieLens 100K expected bands hold.
    #[arg(long)]
    check_bands: bool,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| anyhow::anyhow!("invalid {what} '{x}'"))
        })
        .collect()
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load(data: &DataArgs) -> Result<RatingsMatrix> {
    let path = resolve(&data.input);
    load_ratings(&path, data.format).with_context(|| format!("loading {}", path.display()))
}

fn init_workers(data: &DataArgs) -> Result<()> {
    if let Some(n) = data.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn cmd_validate(data: &DataArgs) -> Result<()> {
    let m = load(data)?;
    println!(
        "{} users, {} items, {} ratings, density {:.6}",
        m.n_users(),
        m.n_items(),
        m.len(),
        m.density()
    );
    Ok(())
}

fn cmd_similarity(data: &DataArgs, measure: Measure, output: Option<&Path>) -> Result<()> {
    let m = load(data)?;
    let sim: SimilarityMatrix64 = build_similarity_matrix(&m, measure);
    match output {
        Some(path) => sim.write_csv(BufWriter::new(fs::File::create(path)?))?,
        None => sim.write_csv(BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

fn similarities(m: &RatingsMatrix, user: u32) -> Result<(SimilarityMatrix64, SimilarityMatrix64)> {
    if m.user_index(user).is_none() {
        bail!("unknown user {user}");
    }
    Ok(rayon::join(
        || build_similarity_matrix(m, Measure::Nhsm),
        || build_similarity_matrix(m, Measure::Pearson),
    ))
}

fn cmd_predict(data: &DataArgs, model: &ModelArgs, user: u32, item: Option<u32>) -> Result<()> {
    let m = load(data)?;
    let (nhsm, pearson) = similarities(&m, user)?;
    let predictor = Predictor64::for_users(&m, &nhsm, &pearson, model.predict_config(), &[user])?;
    let predictions = match item {
        Some(i) => vec![predictor.predict(user, i)?],
        None => predictor.predict_all_unrated(user)?,
    };
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(
        out,
        "user,item,score,nhsm,pearson,nhsm_fellback,pearson_fellback"
    )?;
    let clamp = !model.no_clamp;
    for p in predictions {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            p.user,
            p.item,
            p.score(model.method, clamp),
            p.nhsm_component,
            p.pearson_component,
            p.nhsm_fellback,
            p.pearson_fellback
        )?;
    }
    Ok(())
}

fn cmd_recommend(
    data: &DataArgs,
    model: &ModelArgs,
    user: u32,
    n: usize,
    ranking: RankingMode,
) -> Result<()> {
    let m = load(data)?;
    let (nhsm, pearson) = similarities(&m, user)?;
    let predictor = Predictor64::for_users(&m, &nhsm, &pearson, model.predict_config(), &[user])?;
    let predictions = predictor.predict_all_unrated(user)?;
    let clamp = !model.no_clamp;
    let ranked = |method: Method| {
        RecommendationList::from_scores(
            user,
            predictions.iter().map(|p| (p.item, p.score(method, clamp))),
            n,
        )
    };
    let list = match ranking {
        RankingMode::Cup => ranked(model.method)?,
        RankingMode::Merged => {
            merge_lists(&ranked(Method::NhsmOnly)?, &ranked(Method::PearsonOnly)?, n)?
        }
    };
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "{RECOMMENDATION_CSV_HEADER}")?;
    list.write_csv_rows(&mut out)?;
    Ok(())
}

fn print_summary(report: &EvalReport) {
    for fold in &report.folds {
        let top5 = fold.cell(5, 3);
        println!(
            "fold {}: MAE {}  Top-5 T=3 accuracy {} precision {} recall {}",
            fold.fold,
            fmt_metric(Some(fold.mae)),
            fmt_metric(top5.and_then(|c| c.accuracy)),
            fmt_metric(top5.and_then(|c| c.precision)),
            fmt_metric(top5.and_then(|c| c.recall)),
        );
    }
}

/// Returns whether every band check passed (always true when not requested).
fn cmd_evaluate(args: &EvaluateArgs) -> Result<bool> {
    let (write_json, write_md) = match args.output_format.as_str() {
        "json" => (true, false),
        "markdown" | "md" => (false, true),
        "both" => (true, true),
        other => bail!("unknown output format '{other}'"),
    };
    let config = ExperimentConfig {
        k_folds: args.folds,
        seed: args.seed,
        predict: args.model.predict_config(),
        n_values: parse_list(&args.n_values, "N value")?,
        thresholds: parse_list(&args.thresholds, "threshold")?,
        method: args.model.method,
        ranking_mode: args.ranking,
        averaging: args.averaging,
    };
    config.validate()?;
    let m = load(&args.data)?;
    let report = match &args.splits_dir {
        None => run_experiment::<f64>(&m, &config)?,
        Some(dir) => {
            let dir = resolve(dir);
            let folds = load_external_folds(&dir, args.data.format)?;
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            run_on_folds::<f64>(
                &folds,
                SplitSource::External { name },
                m.checksum(),
                &config,
            )?
        }
    };

    fs::create_dir_all(&args.output_dir)
        .with_context(|| format!("creating {}", args.output_dir.display()))?;
    if write_json {
        let path = args.output_dir.join("report.json");
        fs::write(&path, report.to_json() + "\n")?;
        println!("wrote {}", path.display());
    }
    if write_md {
        let path = args.output_dir.join("report.md");
        fs::write(&path, report.to_markdown())?;
        println!("wrote {}", path.display());
    }
    print_summary(&report);

    if !args.check_bands {
        return Ok(true);
    }
    let checks = check_bands(&report);
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Validate(data) => {
            init_workers(data)?;
            cmd_validate(data)?
        }
        Command::Similarity {
            data,
            measure,
            output,
        } => {
            init_workers(data)?;
            cmd_similarity(data, *measure, output.as_deref())?
        }
        Command::Predict {
            data,
            model,
            user,
            item,
        } => {
            init_workers(data)?;
            cmd_predict(data, model, *user, *item)?
        }
        Command::Recommend {
            data,
            model,
            user,
            top_n,
            ranking,
        } => {
            init_workers(data)?;
            cmd_recommend(data, model, *user, *top_n as usize, *ranking)?
        }
        Command::Evaluate(args) => {
            init_workers(&args.data)?;
            return cmd_evaluate(args);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let command = Cli::command();
    let args = match config_file::expand(&command, std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&command.get_matches_from(args)) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more acceptance bands failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<cupcf::Error>() {
                Some(cupcf::Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
