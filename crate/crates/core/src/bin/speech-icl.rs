use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use speech_icl::acoustics::{flatten_pitch, measure, read_wav, scale_intensity, time_stretch, write_wav};
use speech_icl::error::{Error, Result};
use speech_icl::harness::Run;

#[derive(Parser)]
#[command(name = "speech-icl", version, about = "Toy text/speech-unit in-context learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML configuration; defaults to the run's config.toml, then built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave wall-clock timestamps out of the manifest.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the lexicon, training corpus and eval grid.
    GenCorpus(RunArgs),
    /// Train the model on the run's corpus.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Evaluate the trained model over the eval grid.
    Eval(RunArgs),
    /// Score heads and select head groups.
    ScoreHeads(RunArgs),
    /// Evaluate with each head group ablated.
    Ablate(RunArgs),
    /// Write one CSV per figure plus a summary.
    Report(RunArgs),
    /// Measure or manipulate a WAV file.
    Audio {
        #[command(subcommand)]
        op: AudioOp,
    },
}

#[derive(Subcommand)]
enum AudioOp {
    /// Print duration, pitch and intensity as JSON.
    Measure {
        input: PathBuf,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scale to a target mean intensity in dB.
    Scale {
        input: PathBuf,
        #[arg(long)]
        target_db: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Change duration by `factor` (2 halves the duration) keeping pitch.
    Stretch {
        input: PathBuf,
        #[arg(long)]
        factor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flatten the pitch contour to its mean.
    Flatten {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn open(args: &RunArgs, steps: Option<u64>) -> Result<Run> {
    let mut config = Run::resolve_config(&args.out, args.config.as_deref())?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.deterministic {
        config.deterministic = true;
    }
    if let Some(s) = steps {
        config.train.steps = s;
    }
    Run::open(&args.out, config)
}

fn audio(op: AudioOp) -> Result<()> {
    let transform = |input: &Path, out: &Path, f: &dyn Fn(&speech_icl::acoustics::Waveform) -> Result<speech_icl::acoustics::Waveform>| {
        let wav = read_wav(input)?;
        write_wav(out, &f(&wav)?)
    };
    match op {
        AudioOp::Measure { input, out } => {
            let m = measure(&read_wav(&input)?)?;
            let text = serde_json::to_string_pretty(&m)?;
            match out {
                Some(p) => std::fs::write(p, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        AudioOp::Scale { input, target_db, out } => transform(&input, &out, &|w| scale_intensity(w, target_db)),
        AudioOp::Stretch { input, factor, out } => transform(&input, &out, &|w| time_stretch(w, factor)),
        AudioOp::Flatten { input, out } => transform(&input, &out, &flatten_pitch),
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let done = |run: &Run, stage: &str| {
        println!("{stage}: complete in {}", run.dir.display());
    };
    match cmd {
        Command::GenCorpus(a) => {
            let mut run = open(&a, None)?;
            run.gen_corpus()?;
            done(&run, "corpus");
        }
        Command::Train { run: a, steps } => {
            let mut run = open(&a, steps)?;
            run.train()?;
            done(&run, "train");
        }
        Command::Eval(a) => {
            let mut run = open(&a, None)?;
            run.eval()?;
            done(&run, "eval");
        }
        Command::ScoreHeads(a) => {
            let mut run = open(&a, None)?;
            run.score_heads()?;
            done(&run, "scores");
        }
        Command::Ablate(a) => {
            let mut run = open(&a, None)?;
            run.ablate()?;
            done(&run, "ablation");
        }
        Command::Report(a) => {
            let mut run = open(&a, None)?;
            run.report()?;
            done(&run, "report");
        }
        Command::Audio { op } => audio(op)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
