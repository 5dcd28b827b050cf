use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use repfactor_core::harness::{generate_random_instance, parse_instance, read_raw, run_verification, sample_spec};
use repfactor_core::prodsys::{discrete_product_system, verify_associativity};
use repfactor_core::{Error, Instance, Method, RandomSpec, Result, VerificationConfig, DEFAULT_TOL};

/// Factor unital homomorphisms between algebras of adjointable operators
/// through correspondences, and certify the results.
#[derive(Debug, Parser)]
#[command(name = "repfactor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load an instance and check every invariant of its data.
    Validate {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run a single construction and write its report.
    Factorize {
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Include the matrix of each certified unitary in the report.
        #[arg(long)]
        emit_unitaries: bool,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every applicable construction, all comparisons and the oracle check.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Print the JSON report instead of the text summary.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Record wall-clock timings (makes reports non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Generate a seeded instance with a known factorizing correspondence.
    Random {
        /// Block data as JSON; sampled from the seed when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Ambient dimension bound for sampled specs.
        #[arg(long, default_value_t = 12)]
        max_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the discrete product system of an endomorphism and check associativity.
    ProductSystem {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        threshold: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_lenient(path: &Path, tol: f64) -> Result<Instance> {
    Instance::from_raw_lenient(&read_raw(path)?, tol)
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { file, tol } => {
            let inst = if tol == DEFAULT_TOL {
                parse_instance(&file)?
            } else {
                Instance::from_raw(&read_raw(&file)?, tol)?
            };
            println!(
                "{}: G={} H={} dim E={} L={} K={} dim F={} dim K(E)={} oracle={}",
                inst.name.as_deref().unwrap_or("instance"),
                inst.e.dim_g(),
                inst.e.dim_h(),
                inst.e.dim(),
                inst.f.dim_g(),
                inst.f.dim_h(),
                inst.f.dim(),
                inst.theta.domain().dim(),
                if inst.oracle.is_some() { "yes" } else { "no" },
            );
            println!("valid");
            Ok(ExitCode::SUCCESS)
        }
        Command::Factorize {
            method,
            instance,
            tol,
            emit_unitaries,
            report,
        } => {
            let inst = load_lenient(&instance, tol)?;
            let cfg = VerificationConfig {
                tol,
                emit_unitaries,
                only: Some(method),
                ..Default::default()
            };
            let rep = run_verification(&inst, &cfg);
            write(&report, &rep.to_json())?;
            print!("{}", rep.render_text());
            Ok(status(rep.pass))
        }
        Command::Verify {
            instance,
            tol,
            json,
            report,
            timings,
        } => {
            let inst = load_lenient(&instance, tol)?;
            let cfg = VerificationConfig {
                tol,
                timings,
                ..Default::default()
            };
            let rep = run_verification(&inst, &cfg);
            let text = rep.to_json();
            if let Some(path) = report {
                write(&path, &text)?;
            }
            if json {
                println!("{text}");
            } else {
                print!("{}", rep.render_text());
            }
            Ok(status(rep.pass))
        }
        Command::Random {
            spec,
            seed,
            max_dim,
            out,
        } => {
            let spec: RandomSpec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| Error::Parse {
                        location: format!("{}: line {}, column {}", path.display(), e.line(), e.column()),
                        message: e.to_string(),
                    })?
                }
                None => sample_spec(seed, max_dim),
            };
            let inst = generate_random_instance(&spec, seed)?;
            write(&out, &inst.to_json())?;
            println!(
                "wrote {}: dim E={} dim F={} dim K(E)={}",
                out.display(),
                inst.e.dim(),
                inst.f.dim(),
                inst.theta.domain().dim()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ProductSystem {
            instance,
            steps,
            tol,
            threshold,
            report,
        } => {
            let inst = Instance::from_raw(&read_raw(&instance)?, tol)?;
            let ps = discrete_product_system(&inst.e, &inst.theta, steps, tol)?;
            let rep = verify_associativity(&ps)?;
            if let Some(path) = report {
                write(&path, &serde_json::to_string_pretty(&rep).expect("report serializes"))?;
            }
            for m in &rep.members {
                println!(
                    "  E_{}: dim {} on C^{} (θ^{} residual {:.3e})",
                    m.t, m.dim_module, m.dim_space, m.t, m.theta_residual
                );
            }
            let worst_mult = rep.multiplication.iter().map(|m| m.2).fold(0.0, f64::max);
            let worst_assoc = rep
                .triple
                .iter()
                .chain(&rep.module)
                .map(|a| a.residual)
                .fold(0.0, f64::max);
            println!(
                "  multiplication unitaries: {} (max residual {worst_mult:.3e})",
                rep.multiplication.len()
            );
            println!(
                "  associativity: {} triples (max residual {worst_assoc:.3e})",
                rep.triple.len() + rep.module.len()
            );
            let pass = rep.max_residual <= threshold;
            println!(
                "{}",
                if pass {
                    "all checks passed"
                } else {
                    "some checks failed"
                }
            );
            Ok(status(pass))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
