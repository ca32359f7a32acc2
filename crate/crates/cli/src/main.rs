mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::EngineConfig;
use error::{CliError, CliResult};

/// Learned sparse retrieval: encode, index, search, evaluate, benchmark.
#[derive(Parser, Debug)]
#[command(name = "laconic", version, about)]
struct Cli {
    /// `key = value` config file; flags override its settings.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an index from a sparse-vector JSONL corpus.
    Index(IndexArgs),
    /// Search an index and write a TREC run file.
    Search(SearchArgs),
    /// Score a TREC run against qrels.
    Eval(EvalArgs),
    /// Measure throughput and latency of an index.
    Bench(BenchArgs),
    /// Train the toy encoder on token triplets.
    TrainToy(TrainArgs),
    /// Encode token-id JSONL into sparse-vector JSONL with trained parameters.
    Encode(EncodeArgs),
}

#[derive(Args, Debug, Default)]
struct ApproxArgs {
    /// `exact` or `approx`.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Documents per block, or `unbounded`.
    #[arg(long)]
    block_size: Option<String>,
    #[arg(long)]
    summary_levels: Option<String>,
    #[arg(long)]
    heap_factor: Option<String>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output index path.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Vocabulary size; inferred from the corpus when absent.
    #[arg(long)]
    vocab: Option<String>,
    #[command(flatten)]
    approx: ApproxArgs,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Output run path.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<String>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Optional qrels; adds nDCG@k to the CSV row.
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(short, long)]
    k: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    warmup_iters: Option<String>,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV file to append a row to.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training config file (same format as --config).
    config_file: Option<PathBuf>,
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[arg(long)]
    params_out: Option<PathBuf>,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Trained parameter JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Token-id JSONL: one `{"id": ..., "tokens": [...]}` per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sparse-vector JSONL output.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Collects `(key, value)` overrides from flags that were given.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn s(&mut self, key: &'static str, v: Option<String>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v));
        }
        self
    }

    fn p(&mut self, key: &'static str, v: Option<PathBuf>) -> &mut Self {
        self.s(key, v.map(|p| p.to_string_lossy().into_owned()))
    }

    fn approx(&mut self, a: ApproxArgs) -> &mut Self {
        self.s("kind", a.kind)
            .s("alpha", a.alpha)
            .s("block_size", a.block_size)
            .s("summary_levels", a.summary_levels)
            .s("heap_factor", a.heap_factor)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = EngineConfig::default();
    let mut flags = Overrides::default();
    let mut config_file = cli.config;
    let action: fn(&EngineConfig) -> CliResult<()> = match cli.command {
        Command::Index(a) => {
            flags.p("corpus", a.corpus).p("index", a.index).s("vocab", a.vocab).approx(a.approx);
            commands::index
        }
        Command::Search(a) => {
            flags
                .p("index", a.index)
                .p("queries", a.queries)
                .p("run", a.run)
                .s("k", a.k)
                .s("threads", a.threads);
            commands::search
        }
        Command::Eval(a) => {
            flags.p("run", a.run).p("qrels", a.qrels).s("k", a.k);
            commands::eval
        }
        Command::Bench(a) => {
            flags
                .p("index", a.index)
                .p("queries", a.queries)
                .p("qrels", a.qrels)
                .s("k", a.k)
                .s("threads", a.threads)
                .s("warmup_iters", a.warmup_iters)
                .p("report", a.report)
                .p("csv", a.csv)
                .s("label", a.label);
            commands::bench
        }
        Command::TrainToy(a) => {
            if a.config_file.is_some() {
                config_file = a.config_file;
            }
            flags
                .p("triplets", a.triplets)
                .p("params_out", a.params_out)
                .p("metrics_out", a.metrics_out)
                .s("epochs", a.epochs)
                .s("seed", a.seed)
                .s("lambda", a.lambda);
            commands::train_toy_cmd
        }
        Command::Encode(a) => {
            flags.p("params", a.params).p("input", a.input).p("output", a.output);
            commands::encode
        }
    };
    if let Some(path) = &config_file {
        cfg.apply_file(path)?;
    }
    for (key, value) in &flags.0 {
        cfg.apply(key, value)?;
    }
    cfg.apply_overrides(&cli.set)?;
    action(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                eprintln!("error: {}", first.trim_start_matches("error: "));
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {}", single_line(&e));
            ExitCode::from(code as u8)
        }
    }
}

fn single_line(e: &CliError) -> String {
    e.to_string().lines().collect::<Vec<_>>().join(" ")
}
