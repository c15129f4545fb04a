use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scma_aud::harness::{self, Cache, ExperimentConfig, FigureId, HarnessError, RunOptions};
use scma_aud::metrics;
use scma_aud::nn::save_model;

#[derive(Parser)]
#[command(name = "scma-aud", version, about = "Grant-free SCMA active user detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `data.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Neither read nor write cached corpora and models.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training corpora and write them to the output directory.
    GenData(Common),
    /// Train the configured networks.
    Train(Common),
    /// Run the full pipeline and write results and plot data.
    Sweep(Common),
    /// Rebuild plot data from an existing results.csv.
    PlotData {
        #[command(flatten)]
        common: Common,
        /// Figures to emit (default: all the results cover).
        #[arg(long, value_delimiter = ',')]
        figure: Vec<String>,
    },
    /// Noiseless identifiability check of the exhaustive search and LS-BOMP.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
    }
    if let Some(out) = &common.out {
        if cfg.cache_dir.is_none() {
            cfg.cache_dir = Some(out.join("cache"));
        }
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    harness::sweep::ensure_dir(&cfg.output_dir)?;
    Ok(cfg)
}

fn cache(cfg: &ExperimentConfig, common: &Common) -> Cache {
    Cache::new(cfg.cache_dir(), !common.no_cache)
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = load(&common)?;
            let sys = harness::build_system(&cfg)?;
            for corpus in harness::build_corpora(&cfg, &sys, &cache(&cfg, &common))? {
                for (part, ds) in [("train", Some(&corpus.train)), ("val", Some(&corpus.val)), ("test", corpus.test.as_ref())] {
                    let Some(ds) = ds else { continue };
                    let path = cfg.output_dir.join(format!("data_m{}_{part}.bin", corpus.m));
                    ds.save(&path).map_err(|e| HarnessError::Stage(e.to_string()))?;
                    announce(&path);
                }
            }
        }
        Command::Train(common) => {
            let cfg = load(&common)?;
            let sys = harness::build_system(&cfg)?;
            let cache = cache(&cfg, &common);
            let corpora = harness::build_corpora(&cfg, &sys, &cache)?;
            let (models, files) = harness::train_all(&cfg, &corpora, &cache, &cfg.output_dir)?;
            for t in &models {
                let path = cfg.output_dir.join(format!("model_{}.bin", t.slug()));
                save_model(&t.model, &path).map_err(|e| HarnessError::Stage(e.to_string()))?;
                announce(&path);
            }
            files.iter().for_each(|p| announce(p));
        }
        Command::Sweep(common) => {
            let cfg = load(&common)?;
            let report = harness::run_experiment(&cfg, RunOptions { use_cache: !common.no_cache })?;
            log::info!(
                "{} corpus and {} model cache hits",
                report.corpus_cache_hits,
                report.model_cache_hits
            );
            report.files.iter().for_each(|p| announce(p));
        }
        Command::PlotData { common, figure } => {
            let cfg = load(&common)?;
            let path = cfg.output_dir.join("results.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let rows = metrics::parse_csv(&text)
                .ok_or_else(|| HarnessError::Stage(format!("{} is not a results file", path.display())))?;
            let figures = if figure.is_empty() {
                cfg.figures()
            } else {
                figure
                    .iter()
                    .map(|f| FigureId::parse(f).ok_or_else(|| HarnessError::Config(format!("unknown figure {f}"))))
                    .collect::<Result<_, _>>()?
            };
            for fig in figures {
                announce(&harness::write_plot_data(&rows, fig, &cfg.output_dir)?);
            }
        }
        Command::OracleCheck { common, frames } => {
            let cfg = load(&common)?;
            if frames == 0 {
                return Err(HarnessError::Config("--frames must be at least 1".into()));
            }
            let sys = harness::build_system(&cfg)?;
            let seed = scma_aud::rng::derive_seed(cfg.data.seed, &[scma_aud::rng::stream::ORACLE]);
            let rows = harness::oracle_check(&sys.phi, &cfg.sweep.m, frames, seed)?;
            let text = harness::oracle_check_csv(&rows);
            print!("{text}");
            let path = cfg.output_dir.join("oracle_check.csv");
            std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
            announce(&path);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
