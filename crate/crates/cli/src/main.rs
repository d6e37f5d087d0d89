//! `edgeconnect`: edge detection, masks, two-stage inference, evaluation and
//! σ sweeps from the command line.
//!
//! Exit codes: 0 success, 2 configuration or parameter error, 3 I/O error,
//! 4 shape or weight mismatch.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use edgeconnect::edge::{canny, to_grayscale};
use edgeconnect::mask::{augment_mask, coverage_class, load_mask};
use edgeconnect::networks::{build_network, inspect_archive, save_weights, NetworkKind};
use edgeconnect::pipeline::{
    list_images, load_image, load_items, run_inference, save_edges, sigma_sweep, ImageItem, MaskPlan, Models,
    PipelineConfig, Preprocess,
};
use edgeconnect::Error;

#[derive(Parser, Debug)]
#[command(name = "edgeconnect", version, about = "Edge-guided two-stage image inpainting")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// One flag per configuration key; each overrides the file value.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, global = true, value_name = "SIGMA")]
    sigma: Option<String>,
    #[arg(long = "low_ratio", alias = "low-ratio", global = true, value_name = "R")]
    low_ratio: Option<String>,
    #[arg(long = "high_ratio", alias = "high-ratio", global = true, value_name = "R")]
    high_ratio: Option<String>,
    #[arg(long = "mask_ratio", alias = "mask-ratio", global = true, value_name = "R")]
    mask_ratio: Option<String>,
    #[arg(long = "mask_placement", alias = "mask-placement", global = true, value_name = "centered|random")]
    mask_placement: Option<String>,
    #[arg(long = "mask_dir", alias = "mask-dir", global = true, value_name = "DIR")]
    mask_dir: Option<String>,
    #[arg(long = "g1_weights", alias = "g1-weights", global = true, value_name = "FILE")]
    g1_weights: Option<String>,
    #[arg(long = "g2_weights", alias = "g2-weights", global = true, value_name = "FILE")]
    g2_weights: Option<String>,
    #[arg(long, global = true, value_name = "BOOL")]
    fid: Option<String>,
    #[arg(long = "edge_tolerance", alias = "edge-tolerance", global = true, value_name = "PIXELS")]
    edge_tolerance: Option<String>,
    #[arg(long = "output_dir", alias = "output-dir", global = true, value_name = "DIR")]
    output_dir: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true, value_name = "BOOL")]
    composited: Option<String>,
    #[arg(long, global = true, value_name = "none|celeba|psv")]
    preprocess: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("sigma", &self.sigma),
            ("low_ratio", &self.low_ratio),
            ("high_ratio", &self.high_ratio),
            ("mask_ratio", &self.mask_ratio),
            ("mask_placement", &self.mask_placement),
            ("mask_dir", &self.mask_dir),
            ("g1_weights", &self.g1_weights),
            ("g2_weights", &self.g2_weights),
            ("fid", &self.fid),
            ("edge_tolerance", &self.edge_tolerance),
            ("output_dir", &self.output_dir),
            ("seed", &self.seed),
            ("composited", &self.composited),
            ("preprocess", &self.preprocess),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Canny edge map of an image.
    Canny {
        input: PathBuf,
        output: PathBuf,
    },
    /// Square mask covering `mask_ratio` of the image (placement and seed from the config).
    Mask {
        output: PathBuf,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        /// Also write the eight rotations/flips as `<stem>_<k>.png`.
        #[arg(long)]
        augment: bool,
    },
    /// Two-stage inpainting of one image; writes every intermediate to `output_dir`.
    Infer {
        image: PathBuf,
        /// Mask PNG; defaults to the configured mask source.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Metrics per coverage bucket over images or directories of PNGs.
    Eval {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV destination; defaults to `<output_dir>/metrics.csv`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Edge density (and optionally metrics) across Canny σ values.
    Sweep {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f32>,
        /// Also run both generators at every σ.
        #[arg(long)]
        with_models: bool,
        /// CSV destination; defaults to `<output_dir>/sweep.csv`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Weight archive utilities.
    #[command(subcommand)]
    Weights(WeightsCommand),
}

#[derive(Subcommand, Debug)]
enum WeightsCommand {
    /// List the tensors in an archive.
    Inspect { archive: PathBuf },
    /// Write freshly initialised weights for one network.
    Init {
        #[arg(long, value_enum)]
        network: NetworkArg,
        #[arg(long, default_value_t = 0)]
        init_seed: u64,
        output: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NetworkArg {
    G1,
    G2,
    D1,
    D2,
}

impl From<NetworkArg> for NetworkKind {
    fn from(a: NetworkArg) -> Self {
        match a {
            NetworkArg::G1 => NetworkKind::G1,
            NetworkArg::G2 => NetworkKind::G2,
            NetworkArg::D1 => NetworkKind::D1,
            NetworkArg::D2 => NetworkKind::D2,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for (key, value) in cli.overrides.pairs() {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Files as given; directories expand to their PNGs in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn items_or_fail(paths: &[PathBuf], preprocess: Preprocess) -> Result<(Vec<ImageItem>, usize)> {
    let (items, skipped) = load_items(paths, preprocess);
    if items.is_empty() {
        return Err(Error::Parameter(format!("no readable images among {} inputs", paths.len())).into());
    }
    Ok((items, skipped))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Canny { input, output } => {
            let img = load_image(&input)?;
            let edges = canny(&to_grayscale(&img)?, &cfg.canny)?;
            save_edges(&edges, &output)?;
            println!("{}: {} edge pixels ({:.4})", output.display(), edges.edge_count(), edges.density());
        }
        Command::Mask {
            output,
            height,
            width,
            augment,
        } => {
            let m = MaskPlan::from_config(&cfg)?.mask_for(0, height, width)?;
            m.save(&output)?;
            println!("{}: coverage {:.4} ({})", output.display(), m.coverage(), coverage_class(&m));
            if augment {
                let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let dir = output.parent().unwrap_or(Path::new(""));
                for (k, v) in augment_mask(&m)?.iter().enumerate() {
                    v.save(dir.join(format!("{stem}_{k}.png")))?;
                }
            }
        }
        Command::Infer { image, mask } => {
            let models = Models::from_config(&cfg)?;
            let (items, _) = items_or_fail(std::slice::from_ref(&image), cfg.preprocess)?;
            let fixed = mask.as_ref().map(load_mask).transpose()?;
            let plan = match fixed {
                Some(m) => MaskPlan::Fixed(vec![m]),
                None => MaskPlan::from_config(&cfg)?,
            };
            for (i, item) in items.iter().enumerate() {
                let m = plan.mask_for(i, item.image.h(), item.image.w())?;
                let out = run_inference(&models, &cfg.canny, &item.image, &m)?;
                let written = out.save(&cfg.output_dir, &item.id)?;
                m.save(cfg.output_dir.join(format!("{}_mask.png", item.id)))?;
                for p in written {
                    println!("{}", p.display());
                }
            }
        }
        Command::Eval { inputs, report } => {
            let models = Models::from_config(&cfg)?;
            let paths = expand_inputs(&inputs)?;
            let (items, unreadable) = items_or_fail(&paths, cfg.preprocess)?;
            let plan = MaskPlan::from_config(&cfg)?;
            let mut rep = edgeconnect::pipeline::evaluate_items(&cfg, &models, &items, &plan)?;
            rep.skipped += unreadable;
            let dest = report.unwrap_or_else(|| cfg.output_dir.join("metrics.csv"));
            rep.write_csv(create(&dest)?)?;
            for b in rep.buckets.iter().chain(std::iter::once(&rep.overall)) {
                let label = b.bucket.map_or_else(|| "all".to_string(), |k| k.to_string());
                println!(
                    "{label:>8}  n={:<4} rel_l1={:.3}%  ssim={:.4}  psnr={:.2}  precision={:.4}  recall={:.4}",
                    b.count,
                    100.0 * b.rel_l1,
                    b.ssim,
                    b.psnr,
                    b.precision,
                    b.recall
                );
            }
            if rep.skipped > 0 {
                eprintln!("skipped {} inputs", rep.skipped);
            }
            println!("{}", dest.display());
        }
        Command::Sweep {
            inputs,
            sigmas,
            with_models,
            report,
        } => {
            let paths = expand_inputs(&inputs)?;
            let (items, _) = items_or_fail(&paths, cfg.preprocess)?;
            let models = with_models.then(|| Models::from_config(&cfg)).transpose()?;
            let plan = MaskPlan::from_config(&cfg)?;
            let rep = sigma_sweep(&cfg, models.as_ref(), &items, &plan, &sigmas)?;
            let dest = report.unwrap_or_else(|| cfg.output_dir.join("sweep.csv"));
            rep.write_csv(create(&dest)?)?;
            for r in &rep.rows {
                println!("sigma={:<5} edge_density={:.5}", r.sigma, r.edge_density);
            }
            println!("{}", dest.display());
        }
        Command::Weights(WeightsCommand::Inspect { archive }) => {
            let entries = inspect_archive(&archive)?;
            let total: usize = entries.iter().map(|e| e.data.len()).sum();
            for e in &entries {
                println!("{:<24} {:?}", e.name, e.dims);
            }
            println!("{} tensors, {} values", entries.len(), total);
        }
        Command::Weights(WeightsCommand::Init {
            network,
            init_seed,
            output,
        }) => {
            let net = build_network(network.into(), init_seed);
            save_weights(&net, &output)?;
            println!("{}: {} parameters", output.display(), net.parameter_count());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Parameter(_) | Error::Degenerate(_) | Error::Unsupported(_) => 2,
                Error::Io { .. } | Error::Image { .. } | Error::Csv(_) => 3,
                Error::Dimension { .. } | Error::Shape(_) | Error::Format(_) | Error::WeightMismatch(_) => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
