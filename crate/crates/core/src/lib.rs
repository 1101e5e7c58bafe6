//! CEGAR for finite Markov decision processes against the safety fragment
//! of PCTL.
//!
//! The pipeline: build the quotient of a model under a partition, model
//! check it, extract a minimal counterexample, check whether the concrete
//! model simulates it, and split blocks when it does not.

pub mod abstraction;
pub mod cegar;
pub mod dot;
pub mod formula;
pub mod io;
pub mod mdp;
pub mod modelcheck;
pub mod onthefly;
pub mod simulation;

pub use abstraction::{coarsest_compatible, lift, quotient, refinement_relation, Partition, Quotient};
pub use cegar::{
    cegar_loop, check_validity, gen_min_cex, refine, CegarConfig, CegarRun, CexOptions, CounterExample, EdgeOrder,
    InvalidityWitness, Validity, Verdict,
};
pub use formula::{classify, negate, parse_formula, Cmp, Formula, FormulaError, FragmentClass, PathFormula, ProbOp};
pub use mdp::{Edge, Mdp, MdpBuilder, MdpError, Prob, StateId, SubDistribution};
pub use modelcheck::{check, max_prob, sat_states, Scheduler};
pub use onthefly::{otf_check, OtfOptions, OtfVerdict};
pub use simulation::{compute_simulation, dist_leq, dist_leq_blockwise, is_canonical_simulation, SimRelation};
