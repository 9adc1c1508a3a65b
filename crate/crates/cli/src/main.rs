use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use framecast::config::PipelineConfig;
use framecast::dataset::Dataset;
use framecast::frame::Frame;
use framecast::io::write_atomic;
use framecast::model::{predict, ModelConfig, ModelParams};
use framecast::numerics::Rng;
use framecast::preprocess::{prepare_dataset, prepare_episode};
use framecast::scene::{generate_dataset, generate_episodes};
use framecast::train::{all_frames, evaluate, pretrain_dense, train};
use framecast::{Error, Result};

/// Frame prediction with an action-conditioned LSTM autoencoder.
///
/// Exit codes: 0 success, 1 usage or configuration, 2 i/o, 3 file format,
/// 4 shape mismatch, 5 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "framecast", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for generation, initialization and shuffling. Beats FRAMECAST_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threads for training gradient fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate trials and write a dataset.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "trials")]
        episodes: Option<usize>,
        /// Simulate exactly this many trials instead of filling an episode count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        t_in: Option<usize>,
        #[arg(long)]
        t_out: Option<usize>,
    },
    /// Train the embedding layers as a frame autoencoder; writes a checkpoint.
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the sequence model; writes a checkpoint and a loss report.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from this checkpoint (usually the pretrain output).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Report path; `.txt` and `.csv` versions are written.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write predicted and ground-truth frames of one episode as PGM.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print prediction error per horizon next to the baselines.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score every episode instead of the held-out split.
        #[arg(long)]
        all: bool,
    },
    /// Export dataset frames as PGM.
    Dump {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        /// Export every episode.
        #[arg(long)]
        all: bool,
    },
    /// Print the resolved configuration.
    Config,
}

fn resolve(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env()?;
    for item in &common.set {
        cfg.set_assignment(item)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(w) = common.workers {
        cfg.optim.workers = w;
    }
    Ok(cfg)
}

fn load_dataset(path: &Path, model: &ModelConfig) -> Result<Dataset> {
    let data = Dataset::load(path)?;
    let got = (data.rows, data.cols, data.t_in, data.t_out);
    let want = (model.frame_rows, model.frame_cols, model.t_in, model.t_out);
    if got != want {
        return Err(Error::Shape(format!(
            "{} holds {}x{} frames in {}+{} windows, configuration expects {}x{} in {}+{}",
            path.display(),
            got.0,
            got.1,
            got.2,
            got.3,
            want.0,
            want.1,
            want.2,
            want.3
        )));
    }
    if data.is_empty() {
        return Err(Error::Format(format!("{} holds no episodes", path.display())));
    }
    Ok(data)
}

fn load_model(path: &Path, cfg: &PipelineConfig) -> Result<ModelParams> {
    let model = ModelParams::load(path)?;
    if model.config != cfg.model {
        return Err(Error::Shape(format!(
            "{} was built for {:?}, configuration asks for {:?}",
            path.display(),
            model.config,
            cfg.model
        )));
    }
    Ok(model)
}

fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    write_atomic(path, &frame.to_pgm())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn with_suffix(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli.common)?;
    if let Command::Gen {
        episodes, t_in, t_out, ..
    } = &cli.command
    {
        if let Some(n) = episodes {
            cfg.episodes = *n;
        }
        if let Some(t) = t_in {
            cfg.model.t_in = *t;
        }
        if let Some(t) = t_out {
            cfg.model.t_out = *t;
        }
    }
    cfg.validate()?;
    info!("resolved configuration:\n{}", cfg.to_text().trim_end());

    match cli.command {
        Command::Config => print!("{}", cfg.to_text()),
        Command::Gen { out, trials, .. } => {
            let (data, stats) = match trials {
                Some(n) => generate_dataset(&cfg.world, n, cfg.model.t_in, cfg.model.t_out)?,
                None => generate_episodes(&cfg.world, cfg.episodes, cfg.model.t_in, cfg.model.t_out)?,
            };
            data.save(&out)?;
            println!(
                "wrote {} episodes ({} input frames) from {} trials ({} too short) to {}",
                data.len(),
                data.len() * data.t_in,
                stats.trials,
                stats.skipped,
                out.display()
            );
        }
        Command::Pretrain { data, out } => {
            let ds = load_dataset(&data, &cfg.model)?;
            let prepared = prepare_dataset(&ds.train_split(), &cfg.preprocess)?;
            let frames = all_frames(&prepared);
            info!("pretraining on {} frames", frames.len());
            let ae = pretrain_dense(&frames, cfg.model.feature_dim, cfg.init, &cfg.pretrain_optim())?;
            let mut model = ModelParams::init(&cfg.model, cfg.init, &mut Rng::new(cfg.optim.seed))?;
            ae.install(&mut model)?;
            model.save(&out)?;
            println!(
                "frame autoencoder mse {:.6e} after {} epochs; wrote {}",
                ae.losses.last().copied().unwrap_or(f64::NAN),
                ae.losses.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            out,
            init,
            report,
        } => {
            let ds = load_dataset(&data, &cfg.model)?;
            let model = match &init {
                Some(path) => load_model(path, &cfg)?,
                None => ModelParams::init(&cfg.model, cfg.init, &mut Rng::new(cfg.optim.seed))?,
            };
            let prepared = prepare_dataset(&ds, &cfg.preprocess)?;
            let (trained, rep) = train(&model, &prepared, &cfg.optim)?;
            trained.save(&out)?;
            if let Some(path) = report {
                write_atomic(&with_suffix(&path, "txt"), rep.to_text().as_bytes())?;
                write_atomic(&with_suffix(&path, "csv"), rep.to_csv().as_bytes())?;
            }
            let last = rep.epochs.last().map_or(f64::NAN, |e| e.train_loss);
            println!("final training loss {last:.6e}; wrote {}", out.display());
        }
        Command::Predict {
            model,
            data,
            episode,
            out,
        } => {
            let params = load_model(&model, &cfg)?;
            let ds = load_dataset(&data, &cfg.model)?;
            let ep = ds
                .episodes
                .get(episode)
                .ok_or_else(|| Error::Invalid(format!("episode {episode} out of range ({} episodes)", ds.len())))?;
            let prepared = prepare_episode(ep, &cfg.preprocess)?;
            let cache = predict(&params, &prepared)?;
            let (rows, cols) = (cfg.model.frame_rows, cfg.model.frame_cols);
            ensure_dir(&out)?;
            let mut predicted = Vec::new();
            let mut truth = Vec::new();
            for (k, (p, t)) in cache.prediction().iter().zip(&prepared.targets).enumerate() {
                let pf = Frame::from_unit(rows, cols, p)?;
                let tf = Frame::from_unit(rows, cols, t)?;
                write_pgm(&out.join(format!("pred_{}.pgm", k + 1)), &pf)?;
                write_pgm(&out.join(format!("truth_{}.pgm", k + 1)), &tf)?;
                predicted.push(pf);
                truth.push(tf);
            }
            let strip = Frame::vstack(
                &[Frame::hstack(&predicted, 1, 255)?, Frame::hstack(&truth, 1, 255)?],
                1,
                255,
            )?;
            write_pgm(&out.join("strip.pgm"), &strip)?;
            println!(
                "episode {episode}: prediction mse {:.6e}; wrote {} frame pairs and strip.pgm to {}",
                cache.pred_mse,
                predicted.len(),
                out.display()
            );
        }
        Command::Eval { model, data, all } => {
            let params = load_model(&model, &cfg)?;
            let ds = load_dataset(&data, &cfg.model)?;
            let subset = if all || ds.validation().is_empty() {
                ds
            } else {
                ds.validation()
            };
            let prepared = prepare_dataset(&subset, &cfg.preprocess)?;
            print!("{}", evaluate(&params, &prepared)?.table());
        }
        Command::Dump {
            data,
            out,
            episode,
            all,
        } => {
            let ds = Dataset::load(&data)?;
            let range = if all {
                0..ds.len()
            } else if episode < ds.len() {
                episode..episode + 1
            } else {
                return Err(Error::Invalid(format!(
                    "episode {episode} out of range ({} episodes)",
                    ds.len()
                )));
            };
            ensure_dir(&out)?;
            let mut n = 0;
            for i in range {
                let ep = &ds.episodes[i];
                for (k, f) in ep.input_frames.iter().enumerate() {
                    write_pgm(&out.join(format!("ep{i:05}_in{}.pgm", k + 1)), f)?;
                    n += 1;
                }
                for (k, f) in ep.target_frames.iter().enumerate() {
                    write_pgm(&out.join(format!("ep{i:05}_out{}.pgm", k + 1)), f)?;
                    n += 1;
                }
            }
            println!("wrote {n} frames to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
