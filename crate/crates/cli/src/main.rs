//! `proofreg`: generation, certification, classification, regularization and
//! checking experiments with JSON reports.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::Report;

#[derive(Parser, Debug)]
#[command(name = "proofreg", version, about = "Restrictions, expanders and proof regularization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exhaustive,
    Sampled,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Boundary,
    Weak,
    Both,
}

/// Expansion parameters and checking modes.
#[derive(Args, Debug, Clone, Serialize)]
pub struct ExpansionArgs {
    /// Expansion parameters `r,Δ,c` with `c` an exact fraction `p/q`.
    #[arg(long)]
    pub params: String,
    /// Require certified expansion and the width bound.
    #[arg(long, conflicts_with = "permissive")]
    pub strict: bool,
    /// Skip certification and record deviations instead.
    #[arg(long)]
    pub permissive: bool,
}

/// Resource limits shared by the heavier commands.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Budgets {
    /// Largest truth-table support enumerated.
    #[arg(long, default_value_t = proofreg::formula::DEFAULT_MAX_SUPPORT)]
    pub budget_support: usize,
    /// Largest candidate set searched exhaustively in closures.
    #[arg(long, default_value_t = 20)]
    pub budget_exhaustive: usize,
    /// Search nodes per closure computation.
    #[arg(long, default_value_t = 5_000_000)]
    pub budget_nodes: u64,
    /// Subsets visited by an exhaustive expansion check.
    #[arg(long, default_value_t = proofreg::graph::DEFAULT_SUBSET_BUDGET)]
    pub budget_subsets: u64,
    /// Steps per regularization phase.
    #[arg(long, default_value_t = 10_000)]
    pub budget_steps: usize,
    /// Widest equation translated to clauses.
    #[arg(long, default_value_t = 16)]
    pub budget_width: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ThresholdArgs {
    /// Number of phases; thresholds follow the schedule for the system size.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Explicit threshold vector `1,d_1,...,d_k`, overriding `--depth`.
    #[arg(long)]
    pub thresholds: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random 3-CNF and its XOR translation.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes `<out>.cnf` and `<out>.xor`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tseitin system of a random regular graph with one odd vertex.
    Tseitin {
        /// Number of vertices.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Translates a 3-CNF into a 3-XOR system.
    Cnf2xor {
        cnf: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certifies boundary or weak expansion of an XOR system.
    Certify {
        xor: PathBuf,
        #[arg(long)]
        params: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Exhaustive)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = KindArg::Both)]
        kind: KindArg,
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = proofreg::graph::DEFAULT_SUBSET_BUDGET)]
        budget_subsets: u64,
    },
    /// Closure and extension of a set of variables.
    Closure {
        xor: PathBuf,
        #[arg(long)]
        params: String,
        /// Comma-separated variable names.
        #[arg(long)]
        vars: String,
        #[command(flatten)]
        budgets: Budgets,
    },
    /// Classifies a formula as live or forced.
    Classify {
        xor: PathBuf,
        #[arg(long)]
        formula: String,
        #[command(flatten)]
        expansion: ExpansionArgs,
        #[command(flatten)]
        budgets: Budgets,
        /// Writes the forced-value certificate as a semantic derivation.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks a proof file, optionally against the clause encoding of a system.
    CheckProof {
        proof: PathBuf,
        #[arg(long)]
        xor: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        budget_width: usize,
    },
    /// Builds a refutation of an unsatisfiable XOR system.
    Refute {
        xor: PathBuf,
        /// Re-derive every n-th line through a detour (0 disables).
        #[arg(long, default_value_t = 0)]
        detours: usize,
        #[arg(long, default_value_t = 16)]
        budget_width: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regularizes a proof of an XOR system's encoding.
    Regularize {
        proof: PathBuf,
        xor: PathBuf,
        #[command(flatten)]
        expansion: ExpansionArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        budgets: Budgets,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output prefix; writes `<out>.rho.json` and `<out>.sigma.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transforms a proof under a formula assignment into a semantic derivation.
    Transform {
        proof: PathBuf,
        #[arg(long)]
        sigma: PathBuf,
        /// Variable assignment applied first.
        #[arg(long)]
        rho: Option<PathBuf>,
        #[arg(long)]
        xor: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        budget_width: usize,
        #[arg(long, default_value_t = proofreg::formula::DEFAULT_MAX_SUPPORT)]
        budget_support: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Width-bounded resolution saturation.
    Saturate {
        /// DIMACS CNF, or an XOR system with `--xor-input`.
        input: PathBuf,
        #[arg(long)]
        xor_input: bool,
        /// Single width to test; otherwise every width up to `--max-width`.
        #[arg(long)]
        width: Option<usize>,
        #[arg(long, default_value_t = 8)]
        max_width: usize,
        #[arg(long, default_value_t = 16)]
        budget_width: usize,
    },
    /// Check, regularize, transform and probe widths in one run.
    Pipeline {
        proof: PathBuf,
        xor: PathBuf,
        #[command(flatten)]
        expansion: ExpansionArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[command(flatten)]
        budgets: Budgets,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest width probed by saturation.
        #[arg(long, default_value_t = 6)]
        probe_width: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = run(cli.command);
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    let _ = writeln!(std::io::stdout(), "{text}");
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(report.exit_code as u8)
}

fn run(cmd: Command) -> Report {
    use commands::*;
    match cmd {
        Command::Gen { n, density, seed, out } => gen(n, density, seed, &out),
        Command::Tseitin { n, degree, seed, out } => tseitin(n, degree, seed, &out),
        Command::Cnf2xor { cnf, out } => cnf2xor(&cnf, &out),
        Command::Certify { xor, params, mode, kind, samples, seed, budget_subsets } => {
            certify(&xor, &params, mode, kind, samples, seed, budget_subsets)
        }
        Command::Closure { xor, params, vars, budgets } => closure(&xor, &params, &vars, &budgets),
        Command::Classify { xor, formula, expansion, budgets, out } => {
            classify(&xor, &formula, &expansion, &budgets, out.as_deref())
        }
        Command::CheckProof { proof, xor, budget_width } => check_proof(&proof, xor.as_deref(), budget_width),
        Command::Refute { xor, detours, budget_width, out } => refute(&xor, detours, budget_width, &out),
        Command::Regularize { proof, xor, expansion, thresholds, budgets, seed, out } => {
            regularize(&proof, &xor, &expansion, &thresholds, &budgets, seed, out.as_deref())
        }
        Command::Transform { proof, sigma, rho, xor, budget_width, budget_support, out } => {
            transform(&proof, &sigma, rho.as_deref(), xor.as_deref(), budget_width, budget_support, out.as_deref())
        }
        Command::Saturate { input, xor_input, width, max_width, budget_width } => {
            saturate(&input, xor_input, width, max_width, budget_width)
        }
        Command::Pipeline { proof, xor, expansion, thresholds, budgets, seed, probe_width } => {
            pipeline(&proof, &xor, &expansion, &thresholds, &budgets, seed, probe_width)
        }
    }
}
