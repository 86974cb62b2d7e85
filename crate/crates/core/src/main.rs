use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eventsr::commands::{self, parse_override, DemoSettings, RunSpec};
use eventsr::{Error, Result};

/// Event-camera simulation, stacking, phase-to-phase training and evaluation.
///
/// EVENTSR_THREADS sets the worker count (default 1, which keeps runs
/// bitwise reproducible).
#[derive(Parser)]
#[command(name = "eventsr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn spec(&self, command: &str) -> Result<RunSpec> {
        Ok(RunSpec {
            command: command.into(),
            config: self.config.clone(),
            overrides: self
                .set
                .iter()
                .map(|s| parse_override(s))
                .collect::<Result<_>>()?,
            out: self.out.clone(),
            seed: self.seed,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic moving scene into a frame directory.
    GenScene {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        #[arg(long, default_value_t = commands::DEFAULT_DT_US)]
        dt_us: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate events and build a dataset from frame directories.
    Simulate {
        /// Frame directory, one per sequence; repeatable.
        #[arg(long, required = true)]
        video: Vec<PathBuf>,
        /// Dataset role, e.g. ESIM-data, ESIM-RW, Ev-RW, SR-RW.
        #[arg(long)]
        role: Option<String>,
        #[arg(long)]
        scale: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Cut an EVT1 stream into TNS1 event stacks.
    Stack {
        #[arg(long)]
        events: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train one phase and write a checkpoint directory.
    Train {
        #[arg(long)]
        phase: u8,
        /// Previous phase's checkpoint.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        scale: Option<usize>,
        /// Event dataset manifest; repeatable.
        #[arg(long)]
        data: Vec<PathBuf>,
        /// Target manifest or image directory.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Clean a dataset's APS frames with a checkpoint's G_r.
    CleanAps {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Phase 1 or 2 images from events.
    Reconstruct {
        #[arg(long)]
        init: PathBuf,
        /// EVT1 file or dataset manifest.
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        phase: Option<u8>,
        #[command(flatten)]
        common: Common,
    },
    /// Phase 3 super-resolved images from events.
    Superresolve {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a run's reconstructions against a dataset manifest.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The whole pipeline on synthetic data at 32x32.
    Demo {
        #[arg(long)]
        iters: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene {
            out,
            size,
            frames,
            dt_us,
            seed,
        } => {
            commands::cmd_gen_scene(&out, size, frames, dt_us, seed)?;
        }
        Command::Simulate {
            video,
            role,
            scale,
            common,
        } => {
            let mut spec = common.spec("simulate")?;
            if let Some(r) = role {
                spec = spec.with_set("role", r);
            }
            if let Some(s) = scale {
                spec = spec.with_set("scale", s);
            }
            let m = commands::cmd_simulate(&video, &spec)?;
            eprintln!(
                "{}: {} assets in {}",
                m.role,
                m.assets.len(),
                spec.out.display()
            );
        }
        Command::Stack { events, common } => {
            let out = commands::cmd_stack(&events, &common.spec("stack")?)?;
            eprintln!("{} stacks", out.len());
        }
        Command::Train {
            phase,
            init,
            iters,
            scale,
            data,
            targets,
            common,
        } => {
            let mut spec = common.spec("train")?;
            if let Some(s) = scale {
                spec = spec.with_set("scale", s);
            }
            if !data.is_empty() {
                let joined: Vec<String> = data.iter().map(|p| p.display().to_string()).collect();
                spec = spec.with_set("data", joined.join(","));
            }
            if let Some(t) = targets {
                spec = spec.with_set("targets", t.display());
            }
            let ckpt = commands::cmd_train(&spec, Some(phase), init.as_deref(), iters, |r| {
                if (r.step + 1) % 50 == 0 {
                    eprintln!(
                        "phase {phase} step {}: total {:.5} (adv {:.4} sim {:.4} id {:.4} var {:.4})",
                        r.step + 1,
                        r.total,
                        r.adv,
                        r.sim,
                        r.id,
                        r.var
                    );
                }
            })?;
            eprintln!("phase {} checkpoint in {}", ckpt.phase, spec.out.display());
        }
        Command::CleanAps { init, data, common } => {
            let out = commands::cmd_clean_aps(&init, &data, &common.spec("clean-aps")?)?;
            eprintln!("{} cleaned frames", out.len());
        }
        Command::Reconstruct {
            init,
            events,
            phase,
            common,
        } => {
            let out =
                commands::cmd_reconstruct(&init, &events, phase, &common.spec("reconstruct")?)?;
            eprintln!("{} images", out.len());
        }
        Command::Superresolve {
            init,
            events,
            common,
        } => {
            let out = commands::cmd_superresolve(&init, &events, &common.spec("superresolve")?)?;
            eprintln!("{} images", out.len());
        }
        Command::Eval { run, data, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            let report = commands::cmd_eval(&run, &data, &out)?;
            for (phase, s) in &report.summary {
                println!(
                    "{phase}: {} pairs, PSNR {:.3} ± {:.3} dB, SSIM {:.4} ± {:.4}",
                    s.pairs, s.psnr.mean, s.psnr.std, s.ssim.mean, s.ssim.std
                );
            }
        }
        Command::Demo { iters, common } => {
            let spec = common.spec("demo")?;
            let mut settings = DemoSettings::default();
            if let Some(n) = iters {
                settings.iterations = n;
            }
            let outcome = commands::cmd_demo(&spec, &settings, |stage| eprintln!("demo: {stage}"))?;
            for (k, log) in outcome.logs.iter().enumerate() {
                if let Some((first, last)) = commands::loss_trend(log, 50) {
                    eprintln!("phase {}: mean total loss {first:.5} -> {last:.5}", k + 1);
                }
            }
            for (phase, s) in &outcome.report.summary {
                println!(
                    "{phase}: {} pairs, PSNR {:.3} ± {:.3} dB, SSIM {:.4} ± {:.4}",
                    s.pairs, s.psnr.mean, s.psnr.std, s.ssim.mean, s.ssim.std
                );
            }
        }
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    let n = match std::env::var("EVENTSR_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "EVENTSR_THREADS must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
