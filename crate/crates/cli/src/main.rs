use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcne::cluster::DbscanParams;
use dcne::evalbench::{EvalConfig, DEFAULT_THRESHOLDS};
use dcne::io::read_ppm;
use dcne::net::{load_network_file, NetworkSpec};
use dcne::pipeline::{
    cmd_clusterize, cmd_evaluate, cmd_explain_dataset, cmd_explain_images, cmd_render, cmd_sweep, cmd_synth,
    write_eval_report, ClusterizeConfig, Dataset, ExplainConfig, SweepSpec, SyntheticSpec,
};
use dcne::relprop::SelectionMode;

#[derive(Parser)]
#[command(name = "dcne", version, about = "Concise neuron-conditional explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional maps, base sets and concise sets for images
    Explain(ExplainArgs),
    /// Cluster concise maps of a class across images
    Clusterize(ClusterizeArgs),
    /// Score method output directories against feature masks
    Evaluate(EvaluateArgs),
    /// Mean IoU over a grid of component counts and base sizes
    Sweep(SweepArgs),
    /// Generate the synthetic dataset and its detector network
    Synth(SynthArgs),
    /// Overlay raw maps or concise sets on an image
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    PerImageSum,
    ClassMean,
}

impl From<Mode> for SelectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PerImageSum => SelectionMode::PerImageSum,
            Mode::ClassMean => SelectionMode::ClassMean,
        }
    }
}

#[derive(Args)]
struct Factorize {
    /// Concise maps per image (z)
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// Conditional maps selected before factorizing (n)
    #[arg(long = "base-size", default_value_t = 300)]
    base_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExplainArgs {
    /// Network JSON; defaults to the manifest's network
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long, conflicts_with = "images")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Restrict a manifest run to one class
    #[arg(long, requires = "manifest")]
    class: Option<String>,
    /// Target logit for standalone images; defaults to the prediction
    #[arg(long, conflicts_with = "manifest")]
    target: Option<usize>,
    /// Defaults to class-mean with a manifest, per-image-sum otherwise
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[command(flatten)]
    factorize: Factorize,
    /// Standalone PPM images
    images: Vec<PathBuf>,
}

#[derive(Args)]
struct ClusterizeArgs {
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    class: Option<String>,
    #[arg(long, value_enum, default_value = "class-mean")]
    mode: Mode,
    #[arg(long, default_value_t = dcne::cluster::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long = "min-points", default_value_t = dcne::cluster::DEFAULT_MIN_POINTS)]
    min_points: usize,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u8>>,
    #[command(flatten)]
    factorize: Factorize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u8>>,
    /// Seed of the held-out split
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Method directories laid out as <dir>/<class>/<image>/*.f32
    #[arg(required = true)]
    methods: Vec<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    class: Option<String>,
    /// Comma-separated component counts
    #[arg(long, value_delimiter = ',', default_value = "10")]
    components: Vec<usize>,
    /// Comma-separated base sizes
    #[arg(long = "base-size", value_delimiter = ',', default_value = "300")]
    base_size: Vec<usize>,
    #[arg(long, value_enum, default_value = "class-mean")]
    mode: Mode,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u8>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON spec; the built-in two-class suite otherwise
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RenderArgs {
    /// Background PPM image
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Raw maps (.f32) or concise sets (.dcs)
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn network(net: Option<&Path>, dataset: Option<&Dataset>) -> Result<NetworkSpec> {
    let path = match (net, dataset.and_then(Dataset::network_path)) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => p,
        (None, None) => return Err("no network: pass --net or list one in the manifest".into()),
    };
    Ok(load_network_file(&path)?)
}

fn eval_config(thresholds: Option<Vec<u8>>, seed: u64) -> EvalConfig {
    EvalConfig {
        thresholds: thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()),
        seed,
        ..Default::default()
    }
}

fn explain_config(f: &Factorize, mode: SelectionMode) -> ExplainConfig {
    let mut cfg = ExplainConfig {
        mode,
        base_size: f.base_size,
        ..Default::default()
    };
    cfg.factorization.components = f.components;
    cfg.factorization.seed = f.seed;
    cfg
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain(a) => {
            if let Some(manifest) = &a.manifest {
                let dataset = Dataset::load(manifest)?;
                let net = network(a.net.as_deref(), Some(&dataset))?;
                let mode = a.mode.map_or(SelectionMode::ClassMean, Into::into);
                let index = cmd_explain_dataset(&net, &dataset, a.class.as_deref(), &explain_config(&a.factorize, mode), &a.out)?;
                println!("explained {} image set(s) into {}", index.entries.len(), a.out.display());
            } else {
                if a.images.is_empty() {
                    return Err("pass --manifest or at least one image".into());
                }
                let net = network(a.net.as_deref(), None)?;
                let images = a
                    .images
                    .iter()
                    .map(|p| Ok((image_id(p), read_ppm(p)?)))
                    .collect::<Result<Vec<_>>>()?;
                let mode = a.mode.map_or(SelectionMode::PerImageSum, Into::into);
                let index = cmd_explain_images(&net, &images, a.target, &explain_config(&a.factorize, mode), &a.out)?;
                println!("explained {} image set(s) into {}", index.entries.len(), a.out.display());
            }
        }
        Command::Clusterize(a) => {
            let dataset = Dataset::load(&a.manifest)?;
            let net = network(a.net.as_deref(), Some(&dataset))?;
            let cfg = ClusterizeConfig {
                explain: explain_config(&a.factorize, a.mode.into()),
                dbscan: DbscanParams {
                    epsilon: a.epsilon,
                    min_points: a.min_points,
                },
                eval: eval_config(a.thresholds, a.factorize.seed),
                ..Default::default()
            };
            for outcome in cmd_clusterize(&net, &dataset, a.class.as_deref(), &cfg, &a.out)? {
                for w in &outcome.warnings {
                    eprintln!("warning: {w}");
                }
                println!(
                    "{}: {} cluster(s), {} noise row(s), threshold {}",
                    outcome.class_id,
                    outcome.report.clusters.len(),
                    outcome.report.noise_count(),
                    outcome.report.threshold.unwrap_or_default()
                );
            }
        }
        Command::Evaluate(a) => {
            let dataset = Dataset::load(&a.manifest)?;
            let report = cmd_evaluate(&dataset, &a.methods, &eval_config(a.thresholds, a.seed))?;
            write_eval_report(&report, &a.out)?;
            for s in &report.summary {
                println!(
                    "{}: mean IoU {} over features, {} maps per image",
                    s.method,
                    s.mean_over_features.map_or("n/a".into(), |v| format!("{v:.4}")),
                    s.complexity_per_image
                );
            }
        }
        Command::Sweep(a) => {
            let dataset = Dataset::load(&a.manifest)?;
            let net = network(a.net.as_deref(), Some(&dataset))?;
            let spec = SweepSpec {
                component_counts: a.components,
                base_sizes: a.base_size,
                mode: a.mode.into(),
                seed: a.seed,
                eval: eval_config(a.thresholds, a.seed),
                ..Default::default()
            };
            let table = cmd_sweep(&net, &dataset, a.class.as_deref(), &spec)?;
            table.write(&a.out)?;
            print!("{}", table.to_csv()?);
        }
        Command::Synth(a) => {
            let mut spec = match &a.spec {
                Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let data = cmd_synth(&spec, &a.out)?;
            let masks: usize = data.images.iter().map(|i| i.masks.iter().flatten().count()).sum();
            println!(
                "wrote {} images, {masks} masks and a network with {} conditions to {}",
                data.images.len(),
                data.network.condition_count(),
                a.out.display()
            );
        }
        Command::Render(a) => {
            let image = read_ppm(&a.image)?;
            for path in cmd_render(&image, &a.inputs, &a.out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
