//! `remn` — synthetic video-object-segmentation benchmark CLI.

use clap::{Parser, Subcommand};
use remn_core::benchmark::{run_benchmark, Policy};
use remn_core::config::{parse_size, RunConfig};
use remn_core::error::{Error, Result};
use remn_core::metrics::{default_f_tolerance, metric_f, metric_j};
use remn_core::pnm::{read_mask_dir, write_pgm, write_ppm};
use remn_core::synth::{generate_synthetic_video, ScenarioKind, ScenarioSpec};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "remn", about = "video object segmentation benchmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario as PPM frames and PGM ground-truth masks.
    Synth {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        frames: usize,
        /// Frame size as HxW, e.g. 128x128.
        #[arg(long)]
        size: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Replay factor (long scenario only).
        #[arg(long, default_value_t = 3)]
        replay: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the segmentation benchmark described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// dynamic | unbounded | interval:k
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        no_frm: bool,
        #[arg(long)]
        no_asm: bool,
        #[arg(long)]
        no_rrm: bool,
        /// json | csv
        #[arg(long, default_value = "json")]
        report: String,
        /// Directory for the report and predicted masks; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted masks against ground truth (directories of PGM files).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

fn cmd_synth(
    scenario: &str,
    frames: usize,
    size: &str,
    seed: u64,
    replay: usize,
    out: &Path,
) -> Result<()> {
    let kind: ScenarioKind = scenario.parse()?;
    let (height, width) = parse_size(size)?;
    let spec = ScenarioSpec { kind, frames, height, width, replay_factor: replay, seed };
    let (video, masks) = generate_synthetic_video(&spec)?;

    let frame_dir = out.join("frames");
    let mask_dir = out.join("masks");
    fs::create_dir_all(&frame_dir)?;
    fs::create_dir_all(&mask_dir)?;
    for (t, (frame, mask)) in video.iter().zip(&masks).enumerate() {
        write_ppm(&frame_dir.join(format!("{:06}.ppm", t)), frame)?;
        write_pgm(&mask_dir.join(format!("{:06}.pgm", t)), mask)?;
    }
    println!("wrote {} frames to {}", video.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Path,
    policy: Option<&str>,
    no_frm: bool,
    no_asm: bool,
    no_rrm: bool,
    report_kind: &str,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = RunConfig::from_file(config)?;
    if no_frm {
        cfg.pipeline.frm_enabled = false;
    }
    if no_asm {
        cfg.pipeline.asm_enabled = false;
    }
    if no_rrm {
        cfg.pipeline.rrm_enabled = false;
    }
    let policy = match policy {
        Some(p) => p.parse::<Policy>()?,
        None if cfg.pipeline.asm_enabled => Policy::Dynamic,
        None => Policy::Interval(cfg.pipeline.interval),
    };
    // explicit ablation flags win over the policy's defaults
    let mut run_cfg = remn_core::benchmark::apply_policy(&cfg, policy);
    if no_asm {
        run_cfg.pipeline.asm_enabled = false;
    }
    if no_rrm {
        run_cfg.pipeline.rrm_enabled = false;
    }

    let run = run_benchmark(&run_cfg, policy)?;
    let rendered = match report_kind {
        "json" => run.report.to_json(),
        "csv" => run.report.to_csv(),
        other => return Err(Error::argument(format!("unknown report format '{}'", other))),
    };

    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let name = if report_kind == "csv" { "report.csv" } else { "report.json" };
            fs::write(dir.join(name), &rendered)?;
            let mask_dir = dir.join("masks");
            fs::create_dir_all(&mask_dir)?;
            for (t, result) in run.results.iter().enumerate() {
                write_pgm(&mask_dir.join(format!("{:06}.pgm", t)), &result.mask)?;
            }
            println!("wrote {} and {} masks", dir.join(name).display(), run.results.len());
        }
        None => println!("{}", rendered.trim_end_matches('\n')),
    }
    Ok(())
}

fn cmd_eval(pred: &Path, gt: &Path) -> Result<()> {
    let pred = read_mask_dir(pred)?;
    let gt = read_mask_dir(gt)?;
    if pred.is_empty() {
        return Err(Error::argument("no predicted masks found"));
    }
    let tolerance = default_f_tolerance(gt[0].height(), gt[0].width());
    let j = metric_j(&pred, &gt)?;
    let f = metric_f(&pred, &gt, tolerance)?;
    println!(
        "{{\"j_mean\": {}, \"f_mean\": {}, \"jf_mean\": {}}}",
        j,
        f,
        (j + f) / 2.0
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scenario, frames, size, seed, replay, out } => {
            cmd_synth(&scenario, frames, &size, seed, replay, &out)
        }
        Command::Run { config, policy, no_frm, no_asm, no_rrm, report, out } => cmd_run(
            &config,
            policy.as_deref(),
            no_frm,
            no_asm,
            no_rrm,
            &report,
            out.as_deref(),
        ),
        Command::Eval { pred, gt } => cmd_eval(&pred, &gt),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
