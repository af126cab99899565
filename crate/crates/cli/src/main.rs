use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use melime::blackbox::{BlackBox, BridgeModel, ClassProbability, ModelFile};
use melime::experiments::{run_demo, DEMOS};
use melime::generators::{
    EmbeddingTable, KdeModel, KdePcaGenerator, LinearAutoencoder, NeighborhoodGenerator, PcaModel, PcaSize,
    VaeGenerator,
};
use melime::local_models::SurrogateFamily;
use melime::{explain, BlackBoxError, Dataset, EngineConfig, Error, ExplainedInput, Instance, TokenInstance, Transform};

const EXIT_USAGE: u8 = 2;
const EXIT_NEIGHBORHOOD: u8 = 3;
const EXIT_BRIDGE: u8 = 4;
const MAX_DOUBLINGS: usize = 3;

#[derive(Parser)]
#[command(name = "melime", version, about = "Local explanations from a meaningful neighbourhood")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled experiment and check its expected outcome.
    Demo {
        /// spiral, iris or text
        name: String,
        #[arg(long, env = "MELIME_SEED", default_value_t = 0)]
        seed: u64,
        /// Report path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a bar chart of the importances.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Explain one prediction of a black box.
    Explain(ExplainArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Kde,
    Kdepca,
    Vae,
    Word2vec,
}

#[derive(Clone, Copy, ValueEnum)]
enum LocalModel {
    Linear,
    Tree,
    Stats,
}

#[derive(clap::Args)]
struct ExplainArgs {
    /// Training CSV with a header row; non-numeric columns are dropped.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Bridge peer: a shell command or tcp://host:port.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    bridge: Option<String>,
    /// Built-in model file (JSON).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Comma-separated feature values, or the sentence for word2vec.
    #[arg(long, allow_hyphen_values = true)]
    instance: String,
    #[arg(long, value_enum, default_value = "kde")]
    generator: GeneratorKind,
    #[arg(long, value_enum, default_value = "linear")]
    local_model: LocalModel,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 200)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon_c: f64,
    #[arg(long, default_value_t = 100)]
    max_batches: usize,
    #[arg(long, env = "MELIME_SEED", default_value_t = 0)]
    seed: u64,
    /// KDE bandwidth (default: Scott's rule).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Latent size for kdepca and vae (default: all components).
    #[arg(long)]
    components: Option<usize>,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 5)]
    min_samples_leaf: usize,
    /// Class whose probability is explained (classifiers only).
    #[arg(long)]
    target_class: Option<String>,
    /// Embedding table for word2vec (`n m` header, then `token v1 .. vm`).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Bridge response timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Report path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
    fn other(message: impl std::fmt::Display) -> Self {
        Self::new(1, message.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NeighborhoodEmpty { r, min_distance } => Failure::new(
                EXIT_NEIGHBORHOOD,
                format!(
                    "no training point within r = {r} of the instance; nearest is {min_distance:.6} away \
                     (try --r {})",
                    min_distance * 1.01
                ),
            ),
            Error::BlackBox { .. } => Failure::new(EXIT_BRIDGE, e.to_string()),
            other => Failure::other(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo { name, seed, out, svg } => cmd_demo(&name, seed, out.as_deref(), svg.as_deref()),
        Command::Explain(args) => cmd_explain(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("melime: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::other(format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(Failure::other),
    }
}

fn cmd_demo(name: &str, seed: u64, out: Option<&Path>, svg: Option<&Path>) -> Result<u8, Failure> {
    if !DEMOS.contains(&name) {
        return Err(Failure::usage(format!(
            "unknown demo {name:?}\nusage: melime demo <{}> [--seed N] [--out FILE] [--svg FILE]",
            DEMOS.join("|")
        )));
    }
    let report = run_demo(name, seed)?;
    emit(out, &report.to_json_string())?;
    if let Some(path) = svg {
        fs::write(path, report.to_svg()).map_err(|e| Failure::other(format!("{}: {e}", path.display())))?;
    }
    for c in &report.checks {
        eprintln!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn read_csv(path: &Path) -> Result<Dataset, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers().map_err(Failure::other)?.iter().map(str::to_owned).collect();
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let first = records.first().ok_or_else(|| Failure::usage(format!("{}: no rows", path.display())))?;
    let keep: Vec<usize> = (0..headers.len())
        .filter(|&j| first.get(j).is_some_and(|c| c.trim().parse::<f64>().is_ok()))
        .collect();
    for j in (0..headers.len()).filter(|j| !keep.contains(j)) {
        eprintln!("melime: dropping non-numeric column {:?}", headers[j]);
    }
    let rows = records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            keep.iter()
                .map(|&j| {
                    let cell = rec.get(j).unwrap_or("").trim();
                    cell.parse::<f64>()
                        .map_err(|_| Failure::usage(format!("row {}: {:?} is not a number", i + 1, cell)))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>, Failure>>()?;
    let names = keep.iter().map(|&j| headers[j].clone()).collect();
    Dataset::from_rows_named(rows, names).map_err(Failure::from)
}

fn parse_values(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Failure::usage(format!("bad instance value {v:?}"))))
        .collect()
}

fn pca_size(args: &ExplainArgs, d: usize) -> PcaSize {
    PcaSize::Components(args.components.unwrap_or(d))
}

fn surrogate(args: &ExplainArgs) -> SurrogateFamily {
    match args.local_model {
        LocalModel::Linear => SurrogateFamily::linear(),
        LocalModel::Tree => SurrogateFamily::Tree {
            max_depth: args.max_depth,
            min_samples_leaf: args.min_samples_leaf,
        },
        LocalModel::Stats => SurrogateFamily::Stats,
    }
}

fn engine_config(args: &ExplainArgs) -> EngineConfig {
    EngineConfig {
        r: args.r,
        batch_size: args.batch_size,
        sigma: args.sigma,
        epsilon_c: args.epsilon_c,
        max_batches: args.max_batches,
        seed: args.seed,
    }
}

/// Runs the engine, doubling `r` after each empty neighbourhood.
fn explain_with_retry<I, F, G>(
    f: &F,
    x: &I,
    generator: &G,
    transform: &Transform,
    args: &ExplainArgs,
) -> Result<String, Failure>
where
    I: ExplainedInput,
    F: BlackBox<I> + ?Sized,
    G: NeighborhoodGenerator<I> + ?Sized,
{
    let mut cfg = engine_config(args);
    let mut attempt = 0;
    loop {
        match explain(f, x, generator, transform, surrogate(args), &cfg) {
            Ok(ex) => {
                if cfg.r != args.r {
                    eprintln!("melime: explained with r = {} (requested {})", cfg.r, args.r);
                }
                if ex.truncated {
                    eprintln!("melime: stopped at max_batches = {} before converging", cfg.max_batches);
                }
                let mut s = serde_json::to_string_pretty(&ex.to_json()).map_err(Failure::other)?;
                s.push('\n');
                return Ok(s);
            }
            Err(Error::NeighborhoodEmpty { .. }) if attempt < MAX_DOUBLINGS && cfg.r > 0.0 && cfg.r.is_finite() => {
                attempt += 1;
                eprintln!("melime: empty neighbourhood at r = {}, retrying with r = {}", cfg.r, 2.0 * cfg.r);
                cfg.r *= 2.0;
            }
            Err(e) => return Err(e.into()),
        }
    }
}

fn bridge_failure(e: BlackBoxError) -> Failure {
    match e {
        BlackBoxError::UnknownClass(_) => Failure::usage(e.to_string()),
        other => Failure::new(EXIT_BRIDGE, format!("bridge: {other}")),
    }
}

/// A black box over numeric rows from either source.
fn tabular_black_box(args: &ExplainArgs) -> Result<Box<dyn BlackBox<Instance>>, Failure> {
    let class = args.target_class.as_deref();
    if let Some(target) = &args.bridge {
        let timeout = Duration::from_secs_f64(args.timeout);
        let model = BridgeModel::connect_with_timeout(target, timeout).map_err(bridge_failure)?;
        return Ok(Box::new(model.into_black_box(class).map_err(bridge_failure)?));
    }
    match load_model(args)? {
        ModelFile::KnnRegressor(m) => match class {
            None => Ok(Box::new(m)),
            Some(_) => Err(Failure::usage("--target-class given for a regression model")),
        },
        ModelFile::KnnClassifier(m) => {
            let class = class.ok_or_else(|| Failure::usage("classifier models need --target-class"))?;
            Ok(Box::new(
                ClassProbability::new::<Instance>(m, class).map_err(|e| Failure::usage(e.to_string()))?,
            ))
        }
        ModelFile::NaiveBayesText(_) => Err(Failure::usage("text models need --generator word2vec")),
    }
}

fn load_model(args: &ExplainArgs) -> Result<ModelFile, Failure> {
    let path = args.model.as_ref().ok_or_else(|| Failure::usage("one of --bridge or --model is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    ModelFile::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn cmd_explain(args: &ExplainArgs) -> Result<u8, Failure> {
    let report = match args.generator {
        GeneratorKind::Word2vec => explain_text(args)?,
        kind => explain_tabular(args, kind)?,
    };
    emit(args.out.as_deref(), &report)?;
    Ok(0)
}

fn explain_tabular(args: &ExplainArgs, kind: GeneratorKind) -> Result<String, Failure> {
    let path = args.data.as_ref().ok_or_else(|| Failure::usage("--data is required for tabular generators"))?;
    let train = read_csv(path)?;
    let values = parse_values(&args.instance)?;
    if values.len() != train.d() {
        return Err(Failure::usage(format!(
            "instance has {} values, training data has {} features",
            values.len(),
            train.d()
        )));
    }
    let x = Instance::with_names(values, train.feature_names().to_vec())?;
    let f = tabular_black_box(args)?;
    let generator: Box<dyn NeighborhoodGenerator<Instance>> = match kind {
        GeneratorKind::Kde => Box::new(KdeModel::fit(Arc::new(train.clone()), args.bandwidth)?),
        GeneratorKind::Kdepca => Box::new(KdePcaGenerator::fit(&train, pca_size(args, train.d()), args.bandwidth)?),
        GeneratorKind::Vae => {
            let pca = PcaModel::fit(&train, pca_size(args, train.d()))?;
            Box::new(VaeGenerator::new(LinearAutoencoder::from_pca(&pca)))
        }
        GeneratorKind::Word2vec => unreachable!(),
    };
    explain_with_retry(f.as_ref(), &x, generator.as_ref(), &Transform::Identity, args)
}

fn explain_text(args: &ExplainArgs) -> Result<String, Failure> {
    let path = args
        .embeddings
        .as_ref()
        .ok_or_else(|| Failure::usage("--generator word2vec needs --embeddings"))?;
    let file = fs::File::open(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let table = EmbeddingTable::read_text(BufReader::new(file))?;
    let x = TokenInstance::from_sentence(&args.instance)?;
    if args.bridge.is_some() {
        return Err(Failure::usage("the bridge carries numeric rows only; use --model for text"));
    }
    let nb = match load_model(args)? {
        ModelFile::NaiveBayesText(m) => m,
        _ => return Err(Failure::usage("--generator word2vec needs a naive_bayes_text model")),
    };
    let class = args
        .target_class
        .as_deref()
        .ok_or_else(|| Failure::usage("text models need --target-class"))?;
    let f = ClassProbability::new::<TokenInstance>(nb, class).map_err(|e| Failure::usage(e.to_string()))?;
    let transform = Transform::TokenPositionIndicator { original: x.clone() };
    explain_with_retry(&f, &x, &table, &transform, args)
}
