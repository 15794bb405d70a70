use clap::{Args, Parser, Subcommand};
use mpnn_harness::config::{DetectorKind, ExperimentConfig};
use mpnn_harness::experiments::{run_ber_turbo, run_nmse_study, run_ser_sweep, trace_frames, RunOutput};
use mpnn_harness::report::to_csv;
use mpnn_harness::selftest;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_SELFTEST: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mpnn-sim", version, about = "Monte-Carlo simulations of the MP-NN MIMO detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uncoded symbol error rate sweep.
    Ser(RunArgs),
    /// Held-out modelling error of the network and polynomial models.
    Nmse(RunArgs),
    /// Coded bit error rate with the turbo receiver.
    Ber(RunArgs),
    /// Built-in consistency checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Detector to run; repeat to select several. Overrides the config.
    #[arg(long = "detector")]
    detectors: Vec<DetectorKind>,
    /// Writes a per-iteration detector trace of the first frames here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Number of frames to trace.
    #[arg(long, default_value_t = 10)]
    trace_frames: usize,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.detectors.is_empty() {
        cfg.detectors = args.detectors.clone();
    }
    if args.jobs == 0 {
        return Err("--jobs must be positive".into());
    }
    Ok(cfg)
}

fn run(cmd: &Command) -> Result<(), (u8, String)> {
    let usage = |m: String| (EXIT_USAGE, m);
    let (args, which) = match cmd {
        Command::Selftest => {
            let checks = selftest::run_all();
            let mut ok = true;
            for c in &checks {
                println!("{} {} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            return if ok {
                Ok(())
            } else {
                Err((EXIT_SELFTEST, "self test failed".into()))
            };
        }
        Command::Ser(a) => (a, "ser"),
        Command::Nmse(a) => (a, "nmse"),
        Command::Ber(a) => (a, "ber"),
    };
    let mut cfg = load(args).map_err(usage)?;
    if which == "ber" {
        cfg.coded = true;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    if let Some(path) = &args.trace {
        let text = trace_frames(&cfg, args.trace_frames).map_err(|e| (EXIT_NUMERICAL, e))?;
        std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let out: RunOutput = match which {
        "ser" => run_ser_sweep(&cfg, args.jobs),
        "nmse" => run_nmse_study(&cfg, args.jobs),
        _ => run_ber_turbo(&cfg, args.jobs),
    };
    let csv = to_csv(&out.rows);
    match &args.out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| usage(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    for (det, snr, m, n) in &out.frame_failures {
        eprintln!("warning: {det} at {snr} dB, {m} pilots: {n} frames aborted and scored as errors");
    }
    for f in &out.failures {
        eprintln!(
            "excluded: {} at {} dB, {} pilots, realization {}: {}",
            f.detector, f.snr_db, f.pilot_len, f.realization, f.message
        );
    }
    if out.failures.len() > cfg.max_failures {
        return Err((
            EXIT_NUMERICAL,
            format!("{} realizations failed (tolerance {})", out.failures.len(), cfg.max_failures),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            if code == EXIT_USAGE {
                eprintln!("usage: mpnn-sim <ser|nmse|ber> --config <PATH> [--seed N] [--out PATH] [--jobs N] [--detector NAME]...");
            }
            ExitCode::from(code)
        }
    }
}
