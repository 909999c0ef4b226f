//! Command-line entry point: canonicalization, script verification,
//! the built-in reduction replay, the coupling solver, and numeric
//! oracle runs. Exit code 0 means every assertion passed, 1 means an
//! assertion failed, 2 means a usage, parse, or i/o error.

use crate::canon::{canonicalize, cyclic_rewrite};
use crate::coeff::Coeff;
use crate::derivation::{lambda_solve, parse_script, run_script_in, RunOptions, Session};
use crate::ir::SymbolTable;
use crate::oracle::{oracle_check, SampleMode};
use crate::parse::{parse_declarations, parse_expr, print_expr};
use crate::suite::{run_builtin_suite, Mutation};
use clap::{Parser, Subcommand, ValueEnum};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "covar",
    about = "Symbolic tensor calculus and derivation replay for first-order wave systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the canonical form of an expression file.
    Canon {
        /// File containing one expression.
        expr_file: PathBuf,
        /// Optional declaration file (tensor/scalar lines). Standard
        /// geometry symbols and M, e, mu are always available.
        #[arg(long)]
        decls: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        dimension: u32,
        /// Also apply declared vanishing-cyclic-sum rewrites.
        #[arg(long)]
        bianchi: bool,
    },
    /// Run a derivation script and report each step.
    Verify {
        script: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        dimension: u32,
        /// Sample curvature without the cyclic projection.
        #[arg(long)]
        no_cyclic: bool,
    },
    /// Replay the built-in reduction suite.
    PaperSuite {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        dimension: u32,
        #[arg(long)]
        no_cyclic: bool,
        /// Corrupt one term to demonstrate failure detection
        /// (flip-ricci-sign | drop-ricci).
        #[arg(long)]
        mutate: Option<String>,
    },
    /// Print an exact coupling-constant assignment.
    SolveLambdas {
        /// Pivot choices, e.g. --choice lam1=2 --choice mu=0.
        #[arg(long = "choice")]
        choices: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Numerically check a registered equation over random samples.
    Oracle {
        /// Equation name (from the built-in suite unless --script).
        eq: String,
        /// Script that defines the equation; defaults to the built-in suite.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        dimension: u32,
        /// Flat neutral background.
        #[arg(long)]
        flat: bool,
        #[arg(long)]
        no_cyclic: bool,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn emit_report(report: &crate::derivation::Report, format: Format) {
    match format {
        Format::Text => print!("{}", report.render_text()),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serialization")
        ),
    }
}

fn run_inner() -> Result<i32, String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Canon {
            expr_file,
            decls,
            dimension,
            bianchi,
        } => {
            let mut table = SymbolTable::with_geometry(dimension);
            if let Some(d) = decls {
                let text = read(&d)?;
                parse_declarations(&text, &mut table).map_err(|e| e.to_string())?;
            }
            let text = read(&expr_file)?;
            let expr = parse_expr(text.trim(), &table).map_err(|e| e.to_string())?;
            let canon = if bianchi {
                cyclic_rewrite(&expr, &table).map_err(|e| e.to_string())?
            } else {
                canonicalize(&expr, &table).map_err(|e| e.to_string())?
            };
            println!("{}", print_expr(canon.expr(), &table));
            Ok(0)
        }
        Cmd::Verify {
            script,
            format,
            seed,
            trials,
            dimension,
            no_cyclic,
        } => {
            let text = read(&script)?;
            let parsed = parse_script(&text).map_err(|e| e.to_string())?;
            let options = RunOptions {
                dimension,
                seed,
                trials,
                no_cyclic,
                format_json: format == Format::Json,
            };
            let mut session = Session::new(options);
            let report = run_script_in(&mut session, &parsed).map_err(|e| e.to_string())?;
            emit_report(&report, format);
            Ok(if report.passed { 0 } else { 1 })
        }
        Cmd::PaperSuite {
            format,
            seed,
            trials,
            dimension,
            no_cyclic,
            mutate,
        } => {
            let mutation = match &mutate {
                None => None,
                Some(m) => Some(
                    Mutation::parse(m)
                        .ok_or_else(|| format!("unknown mutation `{m}` (flip-ricci-sign | drop-ricci)"))?,
                ),
            };
            let options = RunOptions {
                dimension,
                seed,
                trials,
                no_cyclic,
                format_json: format == Format::Json,
            };
            let (report, _session) =
                run_builtin_suite(options, mutation).map_err(|e| e.to_string())?;
            emit_report(&report, format);
            Ok(if report.passed { 0 } else { 1 })
        }
        Cmd::SolveLambdas { choices, format } => {
            let mut table = SymbolTable::new(4);
            for s in ["M", "e", "mu"] {
                table.declare_scalar(s).map_err(|e| e.to_string())?;
            }
            let mut map = HashMap::new();
            // Choices are parsed after the coupling names exist.
            lambda_solve(&mut table, &HashMap::new()).map_err(|e| e.to_string())?;
            for choice in &choices {
                let (k, v) = choice
                    .split_once('=')
                    .ok_or_else(|| format!("choice `{choice}` is not key=value"))?;
                let expr = parse_expr(v, &table).map_err(|e| e.to_string())?;
                let mut acc = Coeff::zero();
                for t in &expr.terms {
                    if !t.factors.is_empty() {
                        return Err(format!("choice `{choice}` is not a scalar"));
                    }
                    acc = acc.add(&t.coeff);
                }
                map.insert(k.to_string(), acc);
            }
            let assignment = lambda_solve(&mut table, &map).map_err(|e| e.to_string())?;
            let names = |id| table.scalar_name(id).to_string();
            let mut lines: Vec<(String, String)> = assignment
                .values
                .iter()
                .map(|(id, c)| (table.scalar_name(*id).to_string(), c.display(&names).to_string()))
                .collect();
            let value_of = |name: &str| -> Coeff {
                assignment
                    .values
                    .iter()
                    .find(|(id, _)| table.scalar_name(*id) == name)
                    .map(|(_, c)| c.clone())
                    .expect("assignment covers all couplings")
            };
            let c1 = value_of("lam1")
                .mul(&value_of("lam4"))
                .add(&value_of("lam2").mul(&value_of("lam6")));
            let c2 = value_of("lam3")
                .mul(&value_of("lam7"))
                .add(&value_of("lam5").mul(&value_of("lam8")));
            lines.push(("lam1*lam4+lam2*lam6".into(), c1.display(&names).to_string()));
            lines.push(("lam3*lam7+lam5*lam8".into(), c2.display(&names).to_string()));
            lines.push((
                "product".into(),
                c1.mul(&c2).display(&names).to_string(),
            ));
            match format {
                Format::Text => {
                    for (k, v) in &lines {
                        println!("{k} = {v}");
                    }
                }
                Format::Json => {
                    let map: serde_json::Map<String, serde_json::Value> = lines
                        .into_iter()
                        .map(|(k, v)| (k, serde_json::Value::String(v)))
                        .collect();
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&serde_json::Value::Object(map))
                            .expect("json")
                    );
                }
            }
            Ok(0)
        }
        Cmd::Oracle {
            eq,
            script,
            trials,
            seed,
            dimension,
            flat,
            no_cyclic,
        } => {
            let options = RunOptions {
                dimension,
                seed,
                trials,
                no_cyclic,
                format_json: false,
            };
            let session = match script {
                Some(path) => {
                    let text = read(&path)?;
                    let parsed = parse_script(&text).map_err(|e| e.to_string())?;
                    let mut session = Session::new(options);
                    let report =
                        run_script_in(&mut session, &parsed).map_err(|e| e.to_string())?;
                    if !report.passed {
                        return Err("script assertions failed before the oracle run".into());
                    }
                    session
                }
                None => {
                    let (report, session) =
                        run_builtin_suite(options, None).map_err(|e| e.to_string())?;
                    if !report.passed {
                        return Err("built-in suite failed before the oracle run".into());
                    }
                    session
                }
            };
            let equation = session.equation(&eq).map_err(|e| e.to_string())?;
            let canon =
                canonicalize(&equation.lhs, &session.table).map_err(|e| e.to_string())?;
            let mode = SampleMode { flat, no_cyclic };
            let result = oracle_check(
                canon.expr(),
                &session.table,
                trials,
                seed,
                mode,
                &HashMap::new(),
            )
            .map_err(|e| e.to_string())?;
            if result.pass {
                println!("oracle: {eq}: {} trials, all components exactly zero", result.trials);
                Ok(0)
            } else {
                for f in &result.failures {
                    println!(
                        "oracle: {eq}: trial {} FAILED: {}",
                        f.trial,
                        f.witness.as_deref().unwrap_or("nonzero component")
                    );
                }
                Ok(1)
            }
        }
    }
}

/// CLI entry; returns the process exit code.
pub fn run() -> i32 {
    match run_inner() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    }
}
