use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qhypercube_cli::commands;
use qhypercube_cli::{CliError, CliResult, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "qhc", version, about = "Inequality checks on the quantum hypercube")]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long = "n-cap", global = true)]
    n_cap: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run every configured check on every instance.
    Verify,
    /// Estimate the constant of each configured check per ensemble.
    Constants,
    /// Print the spectral profile of an observable JSON file.
    Spectrum { file: PathBuf },
    /// Search for instances maximizing a check's ratio.
    Witness { check: String },
    /// Run the built-in regressions.
    Selftest,
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => return Err(CliError::Config("--config is required".into())),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        jobs: cli.jobs,
        n_cap: cli.n_cap,
    });
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<u8> {
    match &cli.verb {
        Verb::Verify => {
            let o = commands::verify(&load(cli)?)?;
            println!("{} records, {} unconditional violations", o.records, o.failures);
            Ok(o.exit_code())
        }
        Verb::Constants => {
            let (o, rows) = commands::constants(&load(cli)?)?;
            for r in &rows {
                println!(
                    "{} {} n={} sup_ratio={} witness={} status={}",
                    r.check_id,
                    r.ensemble,
                    r.n,
                    qhypercube_cli::report::real(r.sup_ratio),
                    r.witness,
                    r.status
                );
            }
            Ok(o.exit_code())
        }
        Verb::Spectrum { file } => {
            let v = commands::spectrum_file(file)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
            Ok(0)
        }
        Verb::Witness { check } => {
            for w in commands::witness(&load(cli)?, check)? {
                match &w.result {
                    Some(r) => println!(
                        "{} {} n={} best_ratio={:.16e} start={} initial={:.16e} accepted={}",
                        w.check_id, w.ensemble, w.n, r.ratio, r.start, r.initial_ratio, r.accepted
                    ),
                    None => println!("{} {} n={} no admissible instance", w.check_id, w.ensemble, w.n),
                }
            }
            Ok(0)
        }
        Verb::Selftest => {
            let items = commands::selftest();
            for i in &items {
                println!("{} {}: {}", if i.pass { "PASS" } else { "FAIL" }, i.name, i.detail);
            }
            Ok(u8::from(items.iter().any(|i| !i.pass)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("qhc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
