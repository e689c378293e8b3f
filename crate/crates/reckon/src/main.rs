use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use reckon::gadgets::{build_gadget_set, rank_controllable_callsites};
use reckon::model::validate;
use reckon::modelio::{generate_synthetic, parse_model, save_model, LoadError, SynthSpec};
use reckon::policies::{Assessor, PolicyFilter, PolicyId, TargetSet};
use reckon::report::{
    build_assess, build_rank, render_assess, render_gadgets, render_rank, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "reckon",
    version,
    about = "Static CFI policy assessment over program models"
)]
struct Cli {
    /// Output format for reports.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file against the hierarchy definition clauses.
    Validate { model: PathBuf },
    /// Compute per-callsite target sets and aggregates for one or all policies.
    Assess {
        model: PathBuf,
        /// Policy id or "all".
        #[arg(long, default_value = "all")]
        policy: String,
        /// Keep only virtual targets.
        #[arg(long)]
        virtual_targets_only: bool,
        /// Keep only gadget-annotated targets.
        #[arg(long)]
        gadget_targets_only: bool,
        /// Keep only targets expecting at most this many parameters.
        #[arg(long)]
        max_params: Option<usize>,
        /// Count all hierarchy members passing the filters instead of the
        /// policy's legitimate set.
        #[arg(long)]
        whole_hierarchy: bool,
    },
    /// Rank all eight policies by normalized average target count.
    Rank { model: PathBuf },
    /// List controllable callsites that can reach a usable dispatcher gadget.
    Gadgets {
        model: PathBuf,
        /// Policy whose target counts order the rows.
        #[arg(long, default_value = "sub-hierarchy")]
        rank_policy: String,
    },
    /// Generate a seeded synthetic model in canonical format.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        classes: u32,
        #[arg(long, default_value_t = 2)]
        max_bases: u32,
        #[arg(long, default_value_t = 4)]
        members: u32,
        #[arg(long, default_value_t = 0.1)]
        gadget_density: f64,
        #[arg(long, default_value_t = 10)]
        callsites: u32,
    },
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("RECKON_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn read_model_file(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    match run(cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("{msg}");
            code
        }
    }
}

const USAGE: u8 = 2;
const DOMAIN: u8 = 1;

type CmdResult = Result<ExitCode, (ExitCode, String)>;

fn usage_err(msg: impl Into<String>) -> (ExitCode, String) {
    (ExitCode::from(USAGE), msg.into())
}

fn domain_err(msg: impl Into<String>) -> (ExitCode, String) {
    (ExitCode::from(DOMAIN), msg.into())
}

fn load_for_analysis(path: &PathBuf) -> Result<reckon::model::ProgramModel, (ExitCode, String)> {
    let text = read_model_file(path).map_err(usage_err)?;
    match reckon::modelio::load_model(&text) {
        Ok(m) => Ok(m),
        Err(LoadError::Invalid(vs)) => {
            let list: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
            Err(domain_err(list.join("\n")))
        }
        Err(e) => Err(usage_err(e.to_string())),
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { model } => {
            let text = read_model_file(&model).map_err(usage_err)?;
            let parsed = parse_model(&text).map_err(|e| usage_err(e.to_string()))?;
            let violations = validate(&parsed);
            if violations.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                let mut listing = String::new();
                for v in &violations {
                    listing.push_str(&v.to_string());
                    listing.push('\n');
                }
                emit(&cli.out, &listing).map_err(usage_err)?;
                Ok(ExitCode::from(DOMAIN))
            }
        }
        Command::Assess {
            model,
            policy,
            virtual_targets_only,
            gadget_targets_only,
            max_params,
            whole_hierarchy,
        } => {
            let policies: Vec<PolicyId> = if policy == "all" {
                PolicyId::ALL.to_vec()
            } else {
                vec![policy.parse().map_err(usage_err)?]
            };
            let filter = PolicyFilter {
                virtual_targets_only,
                gadget_targets_only,
                max_params,
                whole_hierarchy,
            };
            let m = load_for_analysis(&model)?;
            let assessor = Assessor::new(&m);
            let report = build_assess(&assessor, &policies, &filter);
            let text = render_assess(&report, &m, cli.format);
            emit(&cli.out, &text).map_err(usage_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank { model } => {
            let m = load_for_analysis(&model)?;
            let assessor = Assessor::new(&m);
            let report = build_rank(&assessor).map_err(|e| domain_err(e.to_string()))?;
            let text = render_rank(&report, cli.format);
            emit(&cli.out, &text).map_err(usage_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gadgets { model, rank_policy } => {
            let rank_policy: PolicyId = rank_policy.parse().map_err(usage_err)?;
            let m = load_for_analysis(&model)?;
            let assessor = Assessor::new(&m);
            let per_policy: std::collections::BTreeMap<PolicyId, Vec<TargetSet>> = PolicyId::ALL
                .par_iter()
                .map(|&p| (p, assessor.assess(p, &PolicyFilter::default())))
                .collect::<Vec<_>>()
                .into_iter()
                .collect();
            let gs = build_gadget_set(&m).map_err(|vs| {
                let list: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                domain_err(list.join("\n"))
            })?;
            let rows = rank_controllable_callsites(&m, &per_policy, &gs, rank_policy);
            let text = render_gadgets(&rows, cli.format);
            emit(&cli.out, &text).map_err(usage_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen {
            seed,
            classes,
            max_bases,
            members,
            gadget_density,
            callsites,
        } => {
            if !(0.0..=1.0).contains(&gadget_density) {
                return Err(usage_err(format!(
                    "--gadget-density must be within [0, 1], got {gadget_density}"
                )));
            }
            let spec = SynthSpec {
                class_count: classes,
                max_bases,
                max_members: members,
                gadget_density,
                callsite_count: callsites,
            };
            let model = generate_synthetic(seed, &spec);
            let text = save_model(&model);
            match &cli.out {
                Some(path) => {
                    fs::write(path, &text)
                        .map_err(|e| usage_err(format!("cannot write {}: {e}", path.display())))?;
                    println!("{}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
