//! Command-line front end: model checking, abstraction, counterexamples,
//! validity checking, the refinement loop and DOT export.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pcegar::cegar::{IterationOutcome, InvalidityWitness};
use pcegar::dot::{cex_to_dot, mdp_to_dot, quotient_to_dot};
use pcegar::io::{print_mdp, print_partition, print_relation, read_cex_dir, read_mdp, read_partition, write_cex_dir};
use pcegar::onthefly::{otf_check_traced, RoundSummary};
use pcegar::{
    cegar_loop, check, check_validity, gen_min_cex, max_prob, parse_formula, quotient, CegarConfig, CexOptions,
    EdgeOrder, Formula, Mdp, OtfOptions, OtfVerdict, Partition, ProbOp, Validity, Verdict,
};

const SEED_VAR: &str = "PCEGAR_SEED";

/// Exit status: holds or valid.
const EXIT_OK: u8 = 0;
/// Exit status: violated or invalid.
const EXIT_NEGATIVE: u8 = 1;
/// Exit status: usage or input error.
const EXIT_ERROR: u8 = 2;
/// Exit status: a depth or iteration limit was hit.
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "pcegar", version, about = "Abstraction refinement for MDPs against safe PCTL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model check a formula at the initial state.
    Check { model: PathBuf, formula: String },
    /// Print the quotient of a model under a partition.
    Abstract {
        model: PathBuf,
        partition: PathBuf,
        /// Write the abstract model here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a minimal counterexample from the (abstracted) model.
    Cex {
        model: PathBuf,
        formula: String,
        /// Abstract the model first; defaults to the identity partition.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Edge deletion order: default, reverse, random or random:SEED.
        #[arg(long, default_value = "default")]
        order: String,
        /// Start from the DTMC of an optimal scheduler when possible.
        #[arg(long)]
        scheduler_init: bool,
        /// Counterexample directory to write.
        #[arg(long, default_value = "cex")]
        out: PathBuf,
    },
    /// Decide whether a counterexample is simulated by the concrete model.
    Validate {
        model: PathBuf,
        partition: PathBuf,
        cexdir: PathBuf,
    },
    /// Run the abstraction-refinement loop.
    Cegar {
        model: PathBuf,
        formula: String,
        /// Initial partition; defaults to grouping states by labels.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, default_value = "default")]
        order: String,
        /// Write the partition, abstract model and counterexample of every
        /// iteration into this directory.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Depth-bounded on-the-fly validity check for weak safety formulas.
    Otf {
        model: PathBuf,
        partition: PathBuf,
        cexdir: PathBuf,
        formula: String,
        #[arg(long, default_value_t = 1_000_000)]
        max_depth: usize,
        /// Recompute only states whose successors changed.
        #[arg(long)]
        delta: bool,
        /// Print one summary line per round.
        #[arg(long)]
        trace: bool,
    },
    /// Graphviz export of a model, a quotient or a counterexample directory.
    Dot {
        /// Model file or counterexample directory.
        path: PathBuf,
        /// For a model: draw its quotient. For a counterexample: the
        /// partition of the abstract model given by `--model`.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// Concrete model the counterexample was extracted from.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_order(text: &str) -> Result<EdgeOrder> {
    Ok(match text {
        "default" => EdgeOrder::Default,
        "reverse" => EdgeOrder::Reverse,
        "random" => {
            let seed = match std::env::var(SEED_VAR) {
                Ok(v) => v.parse().with_context(|| format!("{SEED_VAR}={v} is not an integer"))?,
                Err(_) => 0,
            };
            EdgeOrder::Random(seed)
        }
        other => match other.strip_prefix("random:") {
            Some(seed) => EdgeOrder::Random(seed.parse().with_context(|| format!("bad seed `{seed}`"))?),
            None => bail!("unknown edge order `{other}` (default, reverse, random, random:SEED)"),
        },
    })
}

fn load_model(path: &Path) -> Result<Mdp> {
    read_mdp(path).with_context(|| format!("reading model {}", path.display()))
}

fn load_partition(path: &Path, m: &Mdp) -> Result<Partition> {
    read_partition(path, m).with_context(|| format!("reading partition {}", path.display()))
}

/// The partition at `path`, or `fallback` when none is given.
fn partition_or(path: Option<&Path>, m: &Mdp, fallback: impl FnOnce(&Mdp) -> Partition) -> Result<Partition> {
    path.map_or_else(|| Ok(fallback(m)), |p| load_partition(p, m))
}

fn load_formula(text: &str) -> Result<Formula> {
    parse_formula(text).with_context(|| format!("parsing formula `{text}`"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Probability bounds reachable from the root through `&` and `|`.
fn top_bounds(f: &Formula, out: &mut Vec<(bool, ProbOp)>) {
    match f {
        Formula::And(a, b) | Formula::Or(a, b) => {
            top_bounds(a, out);
            top_bounds(b, out);
        }
        Formula::Prob(op) => out.push((false, op.clone())),
        Formula::NotProb(op) => out.push((true, op.clone())),
        _ => {}
    }
}

fn verdict_code(holds: bool) -> u8 {
    if holds {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    }
}

fn describe_witness(w: &InvalidityWitness, e: &Mdp, m: &Mdp) -> String {
    let names = |set: &std::collections::BTreeSet<pcegar::StateId>| {
        set.iter().map(|s| m.name(*s)).collect::<Vec<_>>().join(" ")
    };
    format!(
        "invalid at {} choice {}: failing {{{}}}, R_old {{{}}}",
        e.name(w.state),
        w.choice_index,
        names(&w.failing),
        names(w.r_old.image(w.state))
    )
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Check { model, formula } => {
            let m = load_model(&model)?;
            let psi = load_formula(&formula)?;
            let holds = check(&m, &psi);
            let mut bounds = Vec::new();
            top_bounds(&psi, &mut bounds);
            for (negated, op) in bounds {
                let value = &max_prob(&m, &op.path)[m.init().0];
                let bang = if negated { "!" } else { "" };
                println!("{bang}P{}{}[{}]: max={value}", op.cmp, op.bound, op.path);
            }
            println!("{}", if holds { "holds" } else { "violated" });
            Ok(verdict_code(holds))
        }
        Command::Abstract { model, partition, out } => {
            let m = load_model(&model)?;
            let part = load_partition(&partition, &m)?;
            let q = quotient(&m, &part)?;
            eprintln!("{} states -> {} blocks", m.num_states(), part.num_blocks());
            emit(out.as_deref(), &print_mdp(&q.abs))?;
            Ok(EXIT_OK)
        }
        Command::Cex {
            model,
            formula,
            partition,
            order,
            scheduler_init,
            out,
        } => {
            let m = load_model(&model)?;
            let psi = load_formula(&formula)?;
            let part = partition_or(partition.as_deref(), &m, |m| Partition::identity(m.num_states()))?;
            let q = quotient(&m, &part)?;
            if check(&q.abs, &psi) {
                println!("holds");
                return Ok(EXIT_OK);
            }
            let opts = CexOptions {
                order: parse_order(&order)?,
                scheduler_init,
            };
            let cex = gen_min_cex(&q.abs, &psi, &opts)?;
            write_cex_dir(&out, &cex, &q.abs)?;
            println!(
                "counterexample: {} states, {} edges, size {} -> {}",
                cex.e.num_states(),
                cex.e.edge_count(),
                cex.size(),
                out.display()
            );
            Ok(EXIT_NEGATIVE)
        }
        Command::Validate {
            model,
            partition,
            cexdir,
        } => {
            let m = load_model(&model)?;
            let part = load_partition(&partition, &m)?;
            let q = quotient(&m, &part)?;
            let cex = read_cex_dir(&cexdir, &q.abs).with_context(|| format!("reading {}", cexdir.display()))?;
            match check_validity(&m, &part, &cex)? {
                Validity::Valid(r) => {
                    println!("valid");
                    print!("{}", print_relation(&r, &cex.e, &m));
                    Ok(EXIT_OK)
                }
                Validity::Invalid(w) => {
                    println!("{}", describe_witness(&w, &cex.e, &m));
                    Ok(EXIT_NEGATIVE)
                }
            }
        }
        Command::Cegar {
            model,
            formula,
            partition,
            max_iters,
            order,
            trace,
        } => {
            let m = load_model(&model)?;
            let psi = load_formula(&formula)?;
            let init = partition_or(partition.as_deref(), &m, pcegar::coarsest_compatible)?;
            let cfg = CegarConfig {
                cex: CexOptions {
                    order: parse_order(&order)?,
                    scheduler_init: false,
                },
                max_iters,
            };
            let result = cegar_loop(&m, &psi, &init, &cfg)?;
            for rec in &result.trace {
                println!("{rec}");
                if let (IterationOutcome::Invalid(w), Some(cex)) = (&rec.outcome, &rec.cex) {
                    println!("  {}", describe_witness(w, &cex.e, &m));
                }
                if let Some(dir) = &trace {
                    let it = dir.join(format!("iter-{}", rec.iteration));
                    fs::create_dir_all(&it).with_context(|| format!("creating {}", it.display()))?;
                    fs::write(it.join("partition.part"), print_partition(&rec.partition, &m))?;
                    fs::write(it.join("abstract.mdp"), print_mdp(&rec.quotient.abs))?;
                    if let Some(cex) = &rec.cex {
                        write_cex_dir(&it.join("cex"), cex, &rec.quotient.abs)?;
                    }
                }
            }
            println!("{}", result.verdict.label());
            Ok(match result.verdict {
                Verdict::Holds => EXIT_OK,
                Verdict::Violated { .. } => EXIT_NEGATIVE,
                Verdict::IterationLimit => EXIT_INCONCLUSIVE,
            })
        }
        Command::Otf {
            model,
            partition,
            cexdir,
            formula,
            max_depth,
            delta,
            trace,
        } => {
            let m = load_model(&model)?;
            let part = load_partition(&partition, &m)?;
            let q = quotient(&m, &part)?;
            let cex = read_cex_dir(&cexdir, &q.abs).with_context(|| format!("reading {}", cexdir.display()))?;
            let psi = load_formula(&formula)?;
            let opts = OtfOptions { max_depth, delta };
            let verdict = otf_check_traced(&m, &part, &cex, &psi, opts, |c| {
                if trace {
                    println!("{}", RoundSummary(c));
                }
            })?;
            Ok(match verdict {
                OtfVerdict::SafetyViolated(k) => {
                    println!("safety-violated at depth {k}");
                    EXIT_OK
                }
                OtfVerdict::NotSimulated(k) => {
                    println!("not-simulated at depth {k}");
                    EXIT_NEGATIVE
                }
                OtfVerdict::DepthExceeded(k) => {
                    println!("depth-exceeded at depth {k}");
                    EXIT_INCONCLUSIVE
                }
            })
        }
        Command::Dot {
            path,
            partition,
            model,
            out,
        } => {
            let text = if path.is_dir() {
                match model {
                    Some(model) => {
                        let m = load_model(&model)?;
                        let part =
                            partition_or(partition.as_deref(), &m, |m| Partition::identity(m.num_states()))?;
                        let q = quotient(&m, &part)?;
                        let cex = read_cex_dir(&path, &q.abs)?;
                        cex_to_dot(&cex, &q.abs)
                    }
                    None => mdp_to_dot(&load_model(&path.join("cex.mdp"))?),
                }
            } else {
                let m = load_model(&path)?;
                match partition {
                    Some(p) => {
                        let part = load_partition(&p, &m)?;
                        quotient_to_dot(&quotient(&m, &part)?, &m)
                    }
                    None => mdp_to_dot(&m),
                }
            };
            emit(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
