use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use pugcn::geometry::io::{read_off, read_xyz, write_off, write_xyz};
use pugcn::metrics::{evaluate, MetricsReport};
use pugcn::model::{init_params, load_checkpoint, param_count};
use pugcn::pipeline::{
    generate_dataset, load_patch_pairs, run_selfcheck, shapes, upsample_cloud, DatasetConfig, PatchConfig, Settings,
};
use pugcn::train::train;
use pugcn::upsample::UpsamplerKind;
use pugcn::Error;

#[derive(Parser)]
#[command(name = "pugcn", version, about = "Graph-convolutional point cloud upsampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut training patch pairs and test pairs from OFF meshes
    GenData {
        /// Directory of .off meshes
        #[arg(long)]
        meshes: PathBuf,
        /// Output directory for clouds and manifest.json
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// First write this many synthetic meshes into the mesh directory
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        patches_per_mesh: Option<usize>,
    },
    /// Train a model on the pairs listed in a manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint to write
        #[arg(long)]
        out: PathBuf,
        /// `key = value` settings file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        upsampler: Option<UpsamplerKind>,
        /// Disable rotation, scaling and jitter
        #[arg(long)]
        no_augment: bool,
        /// Write `epoch,mean_cd` here
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Upsample an XYZ cloud with a trained checkpoint
    Upsample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// A power of the model's ratio; larger ratios chain passes
        #[arg(long, default_value_t = 4)]
        ratio: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted cloud with ground truth
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Ground-truth mesh for point-to-surface distance
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Report the size and forward time of this model too
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Append a CSV row here (header written for new files)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the parameter count of a configuration
    Params {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        upsampler: Option<UpsamplerKind>,
    },
    /// Run the built-in oracle and gradient checks
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn settings(config: Option<&Path>) -> pugcn::Result<Settings> {
    match config {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

fn run(cmd: Command) -> pugcn::Result<u8> {
    match cmd {
        Command::GenData {
            meshes,
            out,
            seed,
            synthetic,
            patches_per_mesh,
        } => {
            if let Some(n) = synthetic {
                fs::create_dir_all(&meshes)?;
                for (name, mesh) in shapes::synthetic_pack(n)? {
                    write_off(meshes.join(format!("{name}.off")), &mesh)?;
                }
            }
            let mut cfg = DatasetConfig::default();
            if let Some(p) = patches_per_mesh {
                cfg.patches_per_mesh = p;
            }
            let m = generate_dataset(&meshes, &out, &cfg, seed)?;
            println!("meshes={}", m.meshes.len());
            println!("patch_pairs={}", m.patch_count());
            println!("test_pairs={}", m.meshes.len());
            Ok(0)
        }
        Command::Train {
            manifest,
            out,
            config,
            epochs,
            batch_size,
            seed,
            upsampler,
            no_augment,
            loss_log,
            checkpoint_every,
        } => {
            let mut s = settings(config.as_deref())?;
            if let Some(e) = epochs {
                s.train.epochs = e;
            }
            if let Some(b) = batch_size {
                s.train.batch_size = b;
            }
            if let Some(v) = seed {
                s.train.seed = v;
            }
            if let Some(u) = upsampler {
                s.model.upsampler = u;
            }
            if no_augment {
                s.train.augment = pugcn::geometry::AugmentConfig::OFF;
            }
            s.train.loss_log_path = loss_log;
            s.train.checkpoint_every = checkpoint_every.or(s.train.checkpoint_every);
            s.train.checkpoint_path = Some(out.clone());
            let pairs = load_patch_pairs(&manifest)?;
            info!("training on {} pairs", pairs.len());
            let result = train(&pairs, &s.model, &s.train)?;
            if let Some(last) = result.losses.last() {
                println!("final_mean_cd={last:e}");
            }
            println!("checkpoint={}", out.display());
            Ok(0)
        }
        Command::Upsample {
            input,
            ckpt,
            ratio,
            out,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let r = ck.model.ratio();
            let mut passes = 0;
            let mut total = 1;
            while total < ratio && r > 1 {
                total *= r;
                passes += 1;
            }
            if total != ratio && !(ratio == 1 && r == 1) {
                return Err(Error::Argument(format!(
                    "ratio {ratio} is not a power of the model ratio {r}"
                )));
            }
            let mut cloud = read_xyz(&input)?;
            for _ in 0..passes.max(1) {
                cloud = upsample_cloud(&ck.model, &ck.params, &cloud, &PatchConfig::default())?.cloud;
            }
            write_xyz(&out, &cloud)?;
            println!("points={}", cloud.len());
            Ok(0)
        }
        Command::Eval {
            pred,
            gt,
            mesh,
            ckpt,
            csv,
        } => {
            let p = read_xyz(&pred)?;
            let g = read_xyz(&gt)?;
            let m = mesh.map(read_off).transpose()?;
            let ck = ckpt.map(load_checkpoint).transpose()?;
            let report = evaluate(&p, &g, m.as_ref(), ck.as_ref().map(|c| (&c.model, &c.params)))?;
            print!("{report}");
            if let Some(path) = csv {
                let mut text = if path.exists() {
                    fs::read_to_string(&path)?
                } else {
                    format!("{}\n", MetricsReport::CSV_HEADER)
                };
                text.push_str(&report.csv_row());
                text.push('\n');
                fs::write(&path, text)?;
            }
            Ok(0)
        }
        Command::Params { config, upsampler } => {
            let mut s = settings(config.as_deref())?;
            if let Some(u) = upsampler {
                s.model.upsampler = u;
            }
            let (_, params) = init_params(&s.model, 0)?;
            println!("{}", param_count(&params));
            Ok(0)
        }
        Command::Selfcheck { seed } => {
            let results = run_selfcheck(seed);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", results.len());
            Ok(if failed == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
