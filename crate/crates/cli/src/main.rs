//! `qfdm` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use qfdm::config::{QaeModeName, RunConfig};
use qfdm::operator::AssemblyOptions;
use qfdm::pipeline::{run_complexity, run_pricing, StageError};
use qfdm::pricer::PricingReport;
use qfdm::verify::{run_suite, Suite, VerifyOptions};
use qfdm::ErrorCategory;

#[derive(Parser)]
#[command(name = "qfdm", version, about = "Finite-difference barrier pricer with an emulated quantum readout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Overrides {
    /// Absolute pricing tolerance.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_parser = parse_qae)]
    qae_mode: Option<QaeModeName>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_gr: Option<usize>,
    #[arg(long)]
    t_ter: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Price one configuration and emit the JSON report.
    Price {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the pricing over one parameter and emit a CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in property suites.
    Verify {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Evaluate the query-count formulas for a configuration.
    Complexity {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    #[value(name = "n_gr")]
    NGr,
    K,
    Eps,
    Eps1,
    Eps2,
    #[value(name = "t_ter")]
    TTer,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::NGr => "n_gr",
            Axis::K => "k",
            Axis::Eps => "eps",
            Axis::Eps1 => "eps1",
            Axis::Eps2 => "eps2",
            Axis::TTer => "t_ter",
        }
    }

    fn apply(self, cfg: &mut RunConfig, raw: &str) -> Result<(), String> {
        let p = &mut cfg.pipeline;
        let float = || raw.trim().parse::<f64>().map_err(|e| format!("bad value '{raw}': {e}"));
        let int = || raw.trim().parse::<usize>().map_err(|e| format!("bad value '{raw}': {e}"));
        match self {
            Axis::NGr => p.n_gr = Some(int()?),
            Axis::K => p.k = Some(int()?),
            Axis::Eps => p.eps = Some(float()?),
            Axis::Eps1 => p.eps1 = Some(float()?),
            Axis::Eps2 => p.eps2 = Some(float()?),
            Axis::TTer => p.t_ter = Some(float()?),
        }
        Ok(())
    }
}

fn parse_qae(s: &str) -> Result<QaeModeName, String> {
    QaeModeName::parse(s).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        let code = match e.error.category() {
            ErrorCategory::Validation => 2,
            ErrorCategory::Capacity => 3,
            ErrorCategory::Numeric => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 2, message: format!("[config] {}: {e}", path.display()) }
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| Failure { code: 2, message: format!("[config] {e}") })?;
    let p = &mut cfg.pipeline;
    p.eps = o.eps.or(p.eps);
    p.qae_mode = o.qae_mode.unwrap_or(p.qae_mode);
    p.seed = o.seed.unwrap_or(p.seed);
    p.n_gr = o.n_gr.or(p.n_gr);
    p.t_ter = o.t_ter.or(p.t_ter);
    p.gamma = o.gamma.or(p.gamma);
    Ok(cfg)
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| io_failure(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .map_err(|e| Failure { code: 1, message: format!("stdout: {e}") })
        }
    }
}

fn price(config: &Path, o: &Overrides, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config, o)?;
    let out = out.or_else(|| cfg.output.report.clone());
    let report = run_pricing(&cfg)?;
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    emit(out.as_deref(), &body)
}

const SWEEP_HEADER: [&str; 14] = [
    "axis",
    "value",
    "status",
    "omega",
    "v0_classical",
    "v0_baseline",
    "baseline_std_error",
    "classical_vs_baseline",
    "omega_vs_classical",
    "berry_rel_gap",
    "readout_queries",
    "complexity_c",
    "complexity_d",
    "message",
];

fn sweep_row(axis: Axis, value: &str, res: Result<PricingReport, String>) -> Vec<String> {
    let f = |v: f64| format!("{v:e}");
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    match res {
        Ok(r) => vec![
            axis.name().into(),
            value.into(),
            "ok".into(),
            f(r.omega),
            f(r.v0_classical),
            opt(r.v0_baseline.map(|b| b.value)),
            opt(r.v0_baseline.and_then(|b| b.std_error)),
            opt(r.error_budget.classical_vs_baseline),
            f(r.error_budget.omega_vs_classical),
            f(r.diagnostics.berry_rel_gap),
            r.diagnostics.readout_queries.to_string(),
            f(r.complexity.c_state),
            f(r.complexity.d_total),
            r.warnings.join(" | "),
        ],
        Err(msg) => {
            let mut row = vec![axis.name().to_string(), value.to_string(), "error".to_string()];
            row.extend(std::iter::repeat_n(String::new(), SWEEP_HEADER.len() - 4));
            row.push(msg);
            row
        }
    }
}

fn sweep(config: &Path, axis: Axis, values: &[String], o: &Overrides, out: Option<PathBuf>) -> Result<(), Failure> {
    let base = load(config, o)?;
    let out = out.or_else(|| base.output.table.clone());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for raw in values {
        let mut cfg = base.clone();
        let res = axis
            .apply(&mut cfg, raw)
            .and_then(|_| run_pricing(&cfg).map_err(|e| e.to_string()));
        if let Err(msg) = &res {
            eprintln!("{}={raw}: {msg}", axis.name());
        }
        w.write_record(sweep_row(axis, raw, res)).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    emit(out.as_deref(), &String::from_utf8(bytes).expect("csv is utf-8"))
}

fn verify(suite: Option<String>, seed: u64, inject_fault: bool) -> Result<(), Failure> {
    let suites = match suite {
        Some(name) => vec![Suite::parse(&name).map_err(|e| Failure { code: 2, message: e.to_string() })?],
        None => Suite::ALL.to_vec(),
    };
    let opts = VerifyOptions {
        seed,
        fault: AssemblyOptions { flip_second_difference: inject_fault },
        ..Default::default()
    };
    let mut failed = Vec::new();
    for s in suites {
        let res = run_suite(s, &opts).map_err(|e| Failure { code: 4, message: format!("[verify] {e}") })?;
        if res.passed() {
            println!("PASS {} ({} checks)", s.name(), res.checks);
        } else {
            println!("FAIL {} ({} of {} checks)", s.name(), res.failures.len(), res.checks);
            for f in res.failures.iter().take(5) {
                println!("    {f}");
            }
            failed.push(s.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: 1, message: format!("failing suites: {}", failed.join(", ")) })
    }
}

fn complexity(config: &Path, o: &Overrides, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config, o)?;
    let report = run_complexity(&cfg)?;
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    emit(out.as_deref(), &body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Price { config, overrides, out } => price(&config, &overrides, out),
        Command::Sweep { config, axis, values, overrides, out } => sweep(&config, axis, &values, &overrides, out),
        Command::Verify { suite, seed, inject_fault } => verify(suite, seed, inject_fault),
        Command::Complexity { config, overrides, out } => complexity(&config, &overrides, out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
