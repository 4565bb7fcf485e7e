mod config;
mod ops;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{parse_experiment, CheckOutcome};

#[derive(Parser)]
#[command(name = "driftlab", version, about = "Experiments on diffusions with singular drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        /// Operation name; overrides `op` in the config.
        op: Option<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "DRIFTLAB_OUT_DIR")]
        out_dir: Option<PathBuf>,
        #[arg(long, env = "DRIFTLAB_THREADS")]
        threads: Option<usize>,
    },
    /// Print the catalog of drift, diffusion and scalar families as CSV.
    ListCatalog,
    /// List the available operations.
    ListOps,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListCatalog => match list_catalog() {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
        Command::ListOps => {
            for o in ops::OPS {
                println!("{:<24} {}", o.name, o.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            op,
            config,
            out_dir,
            threads,
        } => match run(op, &config, out_dir, threads) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(2),
            Err(e) => fail(&e),
        },
    }
}

fn fail(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn list_catalog() -> Result<(), String> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["family", "kind", "params", "citation"])
        .map_err(|e| e.to_string())?;
    for e in driftlab::fields::catalog() {
        w.write_record([e.family, e.kind, e.params, e.citation])
            .map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn run(op: Option<String>, path: &Path, out_dir: Option<PathBuf>, threads: Option<usize>) -> Result<bool, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let exp = parse_experiment(&text).map_err(|e| e.0)?;
    let name = op
        .or_else(|| exp.op.clone())
        .ok_or("no operation given on the command line or as `op` in the config")?;
    let info = ops::find(&name).ok_or_else(|| format!("unknown operation `{name}` (see `driftlab list-ops`)"))?;

    if let Some(n) = threads {
        if n == 0 {
            return Err("--threads must be positive".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }

    let output = info.run(&exp.params).map_err(|e| e.to_string())?;
    let checks: Vec<CheckOutcome> = exp.checks.iter().map(|c| c.evaluate(&output.result)).collect();
    let checks_pass = checks.iter().all(|c| c.pass);
    let diagnostic_ok = output.verdict.is_none_or(|v| v == exp.expect_diagnostic);
    let verdict = diagnostic_ok && checks_pass;

    let report = json!({
        "op": info.name,
        "config": exp.params,
        "result": output.result,
        "checks": checks,
        "verdict": {
            "pass": verdict,
            "diagnostic": output.verdict,
            "expect_diagnostic": exp.expect_diagnostic,
            "checks": checks_pass,
        },
    });

    let dir = out_dir.or(exp.out_dir.clone());
    match dir {
        Some(dir) => write_outputs(&dir, &report, &output)?,
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?),
    }
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {} (found {})", c.pointer, c.found.as_ref().unwrap_or(&Value::Null));
    }
    Ok(verdict)
}

fn write_outputs(dir: &Path, report: &Value, output: &ops::Output) -> Result<(), String> {
    let io = |e: std::io::Error| format!("{}: {e}", dir.display());
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut text = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text).map_err(io)?;
    for t in &output.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name))).map_err(|e| e.to_string())?;
        w.write_record(&t.header).map_err(|e| e.to_string())?;
        for r in &t.rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(io)?;
    }
    for (name, bytes) in &output.files {
        std::fs::write(dir.join(name), bytes).map_err(io)?;
    }
    Ok(())
}
