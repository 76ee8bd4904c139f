use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use makeitso::editing::{load_bank_for, save_bank, EditBank};
use makeitso::generator::{load_checkpoint, save_checkpoint, GeneratorParams};
use makeitso::harness::{emit_report, run_benchmark, toy_bank, toy_generator, BenchmarkSpec, Method, ReportFormat};

use crate::error::{Result, ServiceError};
use crate::images::{encode_png, ingest};
use crate::results::{run_invert, InvertOptions, ResultSnapshot};

#[derive(Debug, Parser)]
#[command(name = "makeitso", version, about = "Noise-space GAN inversion with generator fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the toy generator checkpoint and a random edit bank for it.
    Init(InitArgs),
    /// Invert a target image and write a result directory.
    Invert(InvertArgs),
    /// Render an edit of an inverted result.
    Edit(EditArgs),
    /// Run an inversion/edit-quality benchmark and write reports.
    Evaluate(ReportArgs),
    /// Run an ablation benchmark and write reports.
    Ablate(ReportArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub directions: usize,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Generator checkpoint; the toy generator when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// PNG or JPEG image to invert.
    #[arg(long)]
    pub target: PathBuf,
    /// Edit bank used for anchors and later edits; the toy bank when omitted.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// 500 and 1000 select the named presets.
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    /// EMA decay of the anchored model [preset: 0.9999]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Iterations between EMA blends [preset: iters / 5]
    #[arg(long)]
    pub ema_interval: Option<usize>,
    /// Support images per replay batch [preset: 4]
    #[arg(long)]
    pub replay_n: Option<usize>,
    /// Seeds the initial latent and replay sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl InvertArgs {
    pub fn options(&self) -> InvertOptions {
        InvertOptions {
            iters: Some(self.iters),
            beta: self.beta,
            ema_interval: self.ema_interval,
            replay_n: self.replay_n,
            seed: Some(self.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Result directory written by `invert`.
    #[arg(long)]
    pub result: PathBuf,
    /// Direction name from the result's bank.
    #[arg(long)]
    pub direction: String,
    /// Must lie in the direction's strength range.
    #[arg(long, allow_negative_numbers = true)]
    pub strength: f64,
    /// PNG to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<out stem>.neg.png` rendered at the negated strength.
    #[arg(long)]
    pub sweep: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Make It So against PTI and the frozen-generator baselines.
    Tab1Toy,
    /// Full method, leave-one-out rows and PTI.
    Tab2Toy,
    /// Optimized variable in Z, W and W+.
    Fig8Toy,
}

impl Preset {
    pub fn methods(self) -> Vec<Method> {
        match self {
            Preset::Tab1Toy => vec![
                Method::MakeItSo,
                Method::Pti,
                Method::LatentZ,
                Method::LatentW,
                Method::LatentWPlus,
            ],
            Preset::Tab2Toy => vec![
                Method::MakeItSo,
                Method::WithoutSupport,
                Method::WithoutAnchor,
                Method::WithoutEma,
                Method::WithoutExtended,
                Method::Pti,
            ],
            Preset::Fig8Toy => vec![
                Method::MakeItSo,
                Method::MakeItSoW,
                Method::MakeItSoWPlus,
                Method::LatentZ,
                Method::LatentW,
                Method::LatentWPlus,
            ],
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Preset::Tab1Toy => "Inversion and edit quality",
            Preset::Tab2Toy => "Leave-one-out ablation",
            Preset::Fig8Toy => "Latent-space ablation",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Defaults to tab1-toy for `evaluate` and tab2-toy for `ablate`.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Comma-separated method ids replacing the preset's rows.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Directory receiving report.json, report.csv and report.md.
    #[arg(long)]
    pub out: PathBuf,
    /// Any of json, csv, md.
    #[arg(long, value_delimiter = ',', default_value = "json,csv,md")]
    pub format: Vec<String>,
    /// Benchmark generator; the toy generator when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Edit bank; the toy bank when omitted.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Number of seeds, counted from 0.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Inversion targets per seed [default: 10]
    #[arg(long)]
    pub targets: Option<usize>,
    /// Latents per seed for edit deviation [default: 16]
    #[arg(long)]
    pub edit_samples: Option<usize>,
    /// Bank directions used for edits [default: 8]
    #[arg(long)]
    pub directions: Option<usize>,
    /// Make It So iterations per target [default: 100]
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Defaults to $MAKEITSO_DATA_ROOT, then ./makeitso-data.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
}

/// Parse arguments. Help and version requests come back as `Ok(None)`
/// after printing.
pub fn parse<I, T>(args: I) -> Result<Option<Cli>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(Some(cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            Ok(None)
        }
        Err(e) => {
            let flag = match e.get(ContextKind::InvalidArg) {
                Some(ContextValue::String(s)) => Some(s.clone()),
                Some(ContextValue::Strings(v)) => Some(v.join(", ")),
                _ => None,
            };
            let message = e.render().to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            Err(ServiceError::Usage { message, flag })
        }
    }
}

fn existing(path: &Path, flag: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ServiceError::flag(flag, format!("--{flag}: no such file {}", path.display())))
    }
}

/// Generator and bank from optional files, falling back to the toy pair.
pub fn load_world(checkpoint: Option<&Path>, bank: Option<&Path>, directions: usize) -> Result<(GeneratorParams, EditBank)> {
    let generator = match checkpoint {
        Some(p) => {
            existing(p, "checkpoint")?;
            load_checkpoint(p)?
        }
        None => toy_generator()?,
    };
    let bank = match bank {
        Some(p) => {
            existing(p, "bank")?;
            load_bank_for(p, &generator)?
        }
        None => toy_bank(&generator, directions)?,
    };
    Ok((generator, bank))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init(a) => {
            let g = toy_generator()?;
            save_checkpoint(&g, &a.checkpoint)?;
            save_bank(&toy_bank(&g, a.directions)?, &a.bank)?;
            println!("{}", serde_json::json!({ "checkpoint": a.checkpoint, "bank": a.bank }));
            Ok(())
        }
        Command::Invert(a) => invert(&a),
        Command::Edit(a) => edit(&a),
        Command::Evaluate(a) => report(&a, Preset::Tab1Toy),
        Command::Ablate(a) => report(&a, Preset::Tab2Toy),
        Command::Serve(a) => {
            let root = a
                .data_root
                .or_else(|| std::env::var_os("MAKEITSO_DATA_ROOT").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("makeitso-data"));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::api::serve(a.addr, root))
        }
    }
}

pub fn invert(a: &InvertArgs) -> Result<()> {
    existing(&a.target, "target")?;
    let cfg = a.options().config()?;
    let (generator, bank) = load_world(a.checkpoint.as_deref(), a.bank.as_deref(), 8)?;
    let target = ingest(&std::fs::read(&a.target)?, generator.resolution())?;
    let manifest = run_invert(&generator, &bank, &target, &cfg, &a.out, |_, _| {})?;
    println!(
        "{}",
        serde_json::json!({
            "out": a.out,
            "final_mse": manifest.final_mse,
            "ema_iterations": manifest.ema_iterations,
        })
    );
    Ok(())
}

pub fn edit(a: &EditArgs) -> Result<()> {
    let snap = ResultSnapshot::load(&a.result)?;
    std::fs::write(&a.out, snap.render_edit_png(&a.direction, a.strength)?)?;
    let mut written = vec![a.out.clone()];
    if a.sweep {
        let neg = a.out.with_extension("neg.png");
        std::fs::write(&neg, encode_png(&snap.render_edit(&a.direction, -a.strength)?)?)?;
        written.push(neg);
    }
    println!("{}", serde_json::json!({ "written": written }));
    Ok(())
}

fn report(a: &ReportArgs, default: Preset) -> Result<()> {
    let preset = a.preset.unwrap_or(default);
    let methods = if a.methods.is_empty() {
        preset.methods()
    } else {
        a.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>, _>>()?
    };
    let formats = a
        .format
        .iter()
        .map(|f| f.parse::<ReportFormat>().map_err(|e| ServiceError::flag("format", e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = BenchmarkSpec::toy().with_methods(&methods);
    if let Some(n) = a.seeds {
        spec.seeds = (0..n).collect();
    }
    spec.n_inversion_targets = a.targets.unwrap_or(spec.n_inversion_targets);
    spec.n_edit_samples = a.edit_samples.unwrap_or(spec.n_edit_samples);
    spec.n_directions = a.directions.unwrap_or(spec.n_directions);
    spec.iters = a.iters.unwrap_or(spec.iters);
    spec.validate()?;
    let (generator, bank) = load_world(a.checkpoint.as_deref(), a.bank.as_deref(), spec.n_directions)?;
    let report = run_benchmark(&spec, &generator, &bank, preset.title(), |c| {
        eprintln!("{} seed {} target {}: edit mse {:.4e}", c.method, c.seed, c.target, c.edit.mse);
    })?;
    std::fs::create_dir_all(&a.out)?;
    let mut written = Vec::new();
    for f in formats {
        let name = match f {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
        };
        emit_report(&report, a.out.join(name), f)?;
        written.push(a.out.join(name));
    }
    println!("{}", serde_json::json!({ "written": written, "failures": report.failures.len() }));
    Ok(())
}
