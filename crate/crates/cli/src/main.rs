use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bayesdrop::harness::{
    render_report, run_experiment, DataSource, ExperimentConfig, Method, ReportFormat,
};
use bayesdrop::Execution;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bayesdrop", version, about = "Bayesian dropout experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dropout and ridge coefficient paths
    Shrinkage(Common),
    /// Ridge against dropout on simulated regression designs
    Generalization(Common),
    /// Logistic regression with junk features, scored by test AUC
    Logreg(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    ClosedForm,
    Hmc,
    Svb,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Paper,
}

#[derive(Args)]
struct Common {
    /// Dropout rates, comma separated
    #[arg(long = "f", value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Junk-feature counts, comma separated
    #[arg(long, value_delimiter = ',')]
    junk: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    lambda0: Option<f64>,
    #[arg(long = "gamma-a")]
    gamma_a: Option<f64>,
    #[arg(long = "gamma-b")]
    gamma_b: Option<f64>,
    /// CSV input instead of the built-in generator
    #[arg(long)]
    data: Option<PathBuf>,
    /// Label column: header name or 0-based index
    #[arg(long, default_value = "y")]
    label: String,
    /// The CSV has no header row
    #[arg(long)]
    no_header: bool,
    /// Synthetic table shape for logreg (australian, german, heart, pima, ripley)
    #[arg(long)]
    shape: Option<String>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Run on the calling thread only
    #[arg(long)]
    sequential: bool,
}

fn build_config(command: &Command) -> ExperimentConfig {
    let (mut cfg, c) = match command {
        Command::Shrinkage(c) => (ExperimentConfig::shrinkage(), c),
        Command::Generalization(c) => (ExperimentConfig::generalization(), c),
        Command::Logreg(c) => (ExperimentConfig::logreg(Method::Hmc), c),
    };
    if c.preset.is_some() {
        cfg = cfg.with_paper_preset();
    }
    if let Some(r) = &c.rates {
        cfg.rates = r.clone();
    }
    if let Some(j) = &c.junk {
        cfg.junk = j.clone();
    }
    if let Some(n) = c.replicates {
        cfg.replicates = n;
    }
    cfg.seed = c.seed;
    if let Some(m) = c.method {
        cfg.method = match m {
            MethodArg::ClosedForm => Method::ClosedForm,
            MethodArg::Hmc => Method::Hmc,
            MethodArg::Svb => Method::Svb,
        };
    }
    if let Some(l) = c.lambda0 {
        cfg.lambda0 = l;
    }
    if let Some(a) = c.gamma_a {
        cfg.gamma_a = a;
    }
    if let Some(b) = c.gamma_b {
        cfg.gamma_b = b;
    }
    if let Some(path) = &c.data {
        cfg.source = DataSource::Csv {
            path: path.clone(),
            label: c.label.clone(),
            header: !c.no_header,
        };
    } else if let Some(shape) = &c.shape {
        cfg.source = DataSource::Synthetic {
            name: shape.clone(),
        };
    }
    if c.sequential {
        cfg.exec = Execution::Sequential;
        cfg.svb.exec = Execution::Sequential;
    }
    cfg.out = c.out.clone();
    cfg
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Shrinkage(c) | Command::Generalization(c) | Command::Logreg(c) => c,
    }
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn run(cli: &Cli) -> bayesdrop::Result<()> {
    let cfg = build_config(&cli.command);
    let format = match common(&cli.command).format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let report = run_experiment(&cfg)?;
    let text = render_report(&report, format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
