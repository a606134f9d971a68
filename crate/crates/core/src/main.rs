use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spy_arena::dataset::{write_dataset, PairKind};
use spy_arena::harness::jsonl::{read_jsonl, JsonlWriter};
use spy_arena::harness::{
    eval_winrate, export_batch, play, verify_trace, HarnessError, MetricsLine, PolicyKind,
    RunConfig,
};
use spy_arena::scene::DEFAULT_MARGIN;
use spy_arena::scheduler::{replay, BatchMetrics, SchedulerConfig};

#[derive(Parser)]
#[command(
    name = "arena",
    version,
    about = "Self-play arena for the spy-finding visual game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of scene pairs or chart pairs.
    GenData(GenData),
    /// Run the training loop and write episode, sample and metrics logs.
    Play(Play),
    /// Head-to-head win rate of policy A against reference policy B.
    EvalWinrate(EvalWinrate),
    /// Convert an episode log into training samples.
    ExportBatch(ExportBatch),
    /// Run the stage scheduler over a metric stream.
    ScheduleSim(ScheduleSim),
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "clevr")]
    kind: KindArg,
    #[arg(long = "n", default_value_t = 2000)]
    n_pairs: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Clevr,
    Chart,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON). Flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        cfg.episode.rng_seed = self.seed;
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct Play {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Args)]
struct EvalWinrate {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    a: PolicyKind,
    #[arg(long, value_enum, default_value = "scripted")]
    b: PolicyKind,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportBatch {
    /// Episode log written by `play`.
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScheduleSim {
    /// Run configuration supplying scheduler settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Metrics log from `play` to replay and verify.
    #[arg(long, conflicts_with_all = ["acc", "na", "steps"])]
    metrics: Option<PathBuf>,
    /// Constant batch accuracy.
    #[arg(long, default_value_t = 1.0)]
    acc: f64,
    /// Constant batch abstention rate.
    #[arg(long, default_value_t = 0.0)]
    na: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn write_file(path: &Path, body: &str) -> Result<(), HarnessError> {
    std::fs::write(path, body).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData(g) => {
            let kind = match g.kind {
                KindArg::Clevr => PairKind::Clevr,
                KindArg::Chart => PairKind::Chart,
            };
            let manifest = write_dataset(&g.out, kind, g.n_pairs, g.seed)?;
            eprintln!(
                "wrote {} {:?} pairs to {} (margin {DEFAULT_MARGIN})",
                manifest.pairs.len(),
                kind,
                g.out.display()
            );
        }
        Command::Play(p) => {
            let mut cfg = p.run.load()?;
            if let Some(out) = p.out {
                cfg.out_dir = out;
            }
            if let Some(n) = p.iterations {
                cfg.iterations = n;
            }
            if let Some(b) = p.batch_size {
                cfg.batch_size = b;
            }
            print_json(&play(&cfg, None)?);
        }
        Command::EvalWinrate(e) => {
            let cfg = e.run.load()?;
            let report = eval_winrate(&cfg, e.a, e.b, e.rounds)?;
            if let Some(out) = &e.out {
                write_file(
                    out,
                    &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
                )?;
            }
            print_json(&report);
        }
        Command::ExportBatch(x) => {
            let n = export_batch(&x.episodes, &x.out)?;
            eprintln!("wrote {n} samples to {}", x.out.display());
        }
        Command::ScheduleSim(s) => {
            let cfg = match &s.config {
                Some(path) => RunConfig::from_file(path)?.episode.scheduler,
                None => SchedulerConfig::default(),
            };
            cfg.validate().map_err(HarnessError::Config)?;
            let steps = match &s.metrics {
                Some(path) => {
                    let lines: Vec<MetricsLine> = read_jsonl(path, None, |_| Ok(()))?;
                    verify_trace(&cfg, &lines)?;
                    eprintln!("trace of {} evaluations matches replay", lines.len());
                    lines.into_iter().map(|l| l.step).collect()
                }
                None => {
                    if !(0.0..=1.0).contains(&s.acc)
                        || !(0.0..=1.0).contains(&s.na)
                        || s.acc + s.na > 1.0
                    {
                        return Err(HarnessError::Config(
                            "acc and na must be fractions with acc + na <= 1".into(),
                        ));
                    }
                    let m = BatchMetrics {
                        acc: s.acc,
                        na: s.na,
                    };
                    replay(&cfg, std::iter::repeat_n(m, s.steps))
                }
            };
            match &s.out {
                Some(path) => {
                    let mut w = JsonlWriter::create(path)?;
                    for step in &steps {
                        w.append(step)?;
                    }
                    w.finish()?;
                }
                None => {
                    for step in steps.iter().filter(|st| st.switched) {
                        println!("{}", serde_json::to_string(step).expect("step serializes"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
