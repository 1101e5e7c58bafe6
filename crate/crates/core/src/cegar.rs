//! Minimal counterexample generation, validity checking, refinement and the
//! CEGAR loop that ties them together.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abstraction::{quotient, AbstractionError, Partition, Quotient};
use crate::formula::{require_safety, Formula, FormulaError};
use crate::mdp::{bar_copy, Edge, Mdp, StateId, SubDistribution};
use crate::modelcheck::{check, extract_scheduler, induced_dtmc};
use crate::simulation::{is_canonical_simulation, SimRelation};

#[derive(Debug, Error)]
pub enum CegarError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Abstraction(#[from] AbstractionError),
    #[error("the abstract model satisfies the formula; there is no counterexample")]
    NoViolation,
    #[error("counterexample relation is not an injection into the abstract states")]
    NotInjShaped,
    #[error("witness does not match the current partition")]
    StaleWitness,
    #[error("refinement at iteration {0} did not split any block")]
    NoProgress(usize),
    #[error("validating relation failed the simulation re-check")]
    Unsound,
}

/// Order in which [`gen_min_cex`] tries to delete edges.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum EdgeOrder {
    /// State, then choice, then target, ascending.
    #[default]
    Default,
    Reverse,
    /// Seeded shuffle of the default order.
    Random(u64),
    /// The listed edges first, then the remaining ones in default order.
    Explicit(Vec<Edge>),
}

impl EdgeOrder {
    pub fn arrange(&self, m: &Mdp) -> Vec<Edge> {
        let mut edges = m.edges();
        match self {
            EdgeOrder::Default => {}
            EdgeOrder::Reverse => edges.reverse(),
            EdgeOrder::Random(seed) => edges.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed)),
            EdgeOrder::Explicit(first) => {
                let present: BTreeSet<Edge> = edges.iter().copied().collect();
                let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
                let mut taken = BTreeSet::new();
                for e in first {
                    if present.contains(e) && taken.insert(*e) {
                        out.push(*e);
                    }
                }
                out.extend(edges.into_iter().filter(|e| !taken.contains(e)));
                edges = out;
            }
        }
        edges
    }
}

/// A counterexample `(E, R)`: `E` violates the property and `R` relates its
/// states to the abstract model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterExample {
    pub e: Mdp,
    pub r: SimRelation,
}

impl CounterExample {
    /// The abstract state each counterexample state copies, if `r` is an
    /// injection.
    pub fn origins(&self) -> Option<Vec<StateId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(self.r.left_len());
        for a in self.e.states() {
            let img = self.r.image(a);
            if img.len() != 1 {
                return None;
            }
            let b = *img.iter().next().expect("one element");
            if !seen.insert(b) {
                return None;
            }
            out.push(b);
        }
        Some(out)
    }

    /// `|E| + |R|`.
    pub fn size(&self) -> u64 {
        crate::mdp::mdp_size(&self.e) + self.r.len() as u64
    }
}

#[derive(Clone, Debug, Default)]
pub struct CexOptions {
    pub order: EdgeOrder,
    /// Start from the DTMC induced by an optimal scheduler when the formula
    /// is a single probability bound over propositional operands.
    pub scheduler_init: bool,
}

/// Greedy edge deletion on the renamed copy of `abs`: an edge is zeroed when
/// the model still violates `psi` without it. Unreachable states are then
/// dropped, as are choices left with no edges.
pub fn gen_min_cex(abs: &Mdp, psi: &Formula, opts: &CexOptions) -> Result<CounterExample, CegarError> {
    require_safety(psi, false)?;
    if check(abs, psi) {
        return Err(CegarError::NoViolation);
    }
    let (mut cur, inj) = bar_copy(abs);
    if opts.scheduler_init {
        if let Some(path) = psi.flat_path().filter(|_| matches!(psi, Formula::Prob(_))) {
            let sched = extract_scheduler(&cur, path).expect("flat path");
            let dtmc = induced_dtmc(&cur, &sched).expect("scheduler fits");
            if !check(&dtmc, psi) {
                cur = dtmc;
            }
        }
    }
    for edge in opts.order.arrange(&cur) {
        let candidate = cur.with_edge_removed(edge);
        if !check(&candidate, psi) {
            cur = candidate;
        }
    }
    let reachable = cur.reachable();
    let (e, map) = cur.restrict(&reachable);
    let e = e.without_zero_choices();
    let mut r = SimRelation::empty(e.num_states(), abs.num_states());
    for (old, new) in map.iter().enumerate() {
        if let Some(new) = new {
            for b in inj.image(StateId(old)) {
                r.insert(*new, *b);
            }
        }
    }
    Ok(CounterExample { e, r })
}

/// Tuple returned when validity checking fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvalidityWitness {
    /// Invalidating counterexample state `ā`.
    pub state: StateId,
    /// Index of the invalidating choice in `δ_E(ā)`.
    pub choice_index: usize,
    pub choice: SubDistribution,
    pub r_old: SimRelation,
    pub r_new: SimRelation,
    /// States of `R_old(ā)` with no choice matching the invalidating one
    /// under `R_old`. Equals `R_old(ā) ∖ R(ā)` when `ā` has one choice.
    pub failing: BTreeSet<StateId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Validity {
    /// Validating simulation from the counterexample into the concrete model.
    Valid(SimRelation),
    Invalid(InvalidityWitness),
}

/// Lifts every choice of `q` onto counterexample states through the owner
/// map of `R_old`, so the blockwise test becomes a pointwise comparison.
struct LiftCache {
    lifted: Vec<Option<Vec<SubDistribution>>>,
    owner: Vec<Option<StateId>>,
}

impl LiftCache {
    fn new(r_old: &SimRelation) -> Self {
        LiftCache {
            lifted: vec![None; r_old.right_len()],
            owner: r_old.owners(),
        }
    }

    fn get(&mut self, m: &Mdp, q: StateId) -> &[SubDistribution] {
        let owner = &self.owner;
        self.lifted[q.0].get_or_insert_with(|| {
            m.choices(q)
                .iter()
                .map(|nu| {
                    SubDistribution::new(nu.iter().filter_map(|(t, p)| owner[t.0].map(|a| (a, p.clone()))))
                        .expect("pushforward keeps mass")
                })
                .collect()
        })
    }
}

fn pointwise_leq(mu: &SubDistribution, lifted: &SubDistribution) -> bool {
    mu.iter().all(|(a, p)| lifted.get(a).is_some_and(|x| p <= x))
}

fn matches_some(mu: &SubDistribution, lifted: &[SubDistribution]) -> bool {
    lifted.iter().any(|nu| pointwise_leq(mu, nu))
}

/// `{(ā, q) | q ∈ γ(a)}` for an injection-shaped counterexample.
pub fn initial_relation(m: &Mdp, part: &Partition, cex: &CounterExample) -> Result<SimRelation, CegarError> {
    let origins = cex.origins().ok_or(CegarError::NotInjShaped)?;
    if cex.r.right_len() != part.num_blocks() || part.num_states() != m.num_states() {
        return Err(CegarError::NotInjShaped);
    }
    let mut r = SimRelation::empty(cex.e.num_states(), m.num_states());
    for (a, b) in origins.iter().enumerate() {
        r.set_image(StateId(a), part.block(b.0).iter().copied().collect());
    }
    Ok(r)
}

/// Decides whether `cex` is valid and consistent for `(m, part)` by shrinking
/// `R` from `γ∘inj` until it is a simulation or some state loses all its
/// partners. Each sweep compares against the relation `R_old` as it stood
/// when the sweep began.
pub fn check_validity(m: &Mdp, part: &Partition, cex: &CounterExample) -> Result<Validity, CegarError> {
    let mut r = initial_relation(m, part, cex)?;
    let e = &cex.e;
    let q_init = m.init();
    loop {
        let r_old = r.clone();
        let mut cache = LiftCache::new(&r_old);
        for a in e.states() {
            for (i, mu) in e.choices(a).iter().enumerate() {
                let keep: BTreeSet<StateId> = r
                    .image(a)
                    .iter()
                    .copied()
                    .filter(|q| matches_some(mu, cache.get(m, *q)))
                    .collect();
                r.set_image(a, keep);
                let dropped_init = a == e.init() && !r.contains(a, q_init);
                if r.image(a).is_empty() || dropped_init {
                    let failing = r_old
                        .image(a)
                        .iter()
                        .copied()
                        .filter(|q| !matches_some(mu, cache.get(m, *q)))
                        .collect();
                    return Ok(Validity::Invalid(InvalidityWitness {
                        state: a,
                        choice_index: i,
                        choice: mu.clone(),
                        r_old,
                        r_new: r,
                        failing,
                    }));
                }
            }
        }
        if r == r_old {
            assert!(r.contains(e.init(), q_init), "fixpoint relates the initial states");
            return Ok(Validity::Valid(r));
        }
    }
}

/// Splits the blocks named by the witness: the invalidating state's block
/// into the states failing the invalidating choice and the rest, and every
/// other successor's block into `R_old(b̄)` and the rest.
pub fn refine(part: &Partition, cex: &CounterExample, w: &InvalidityWitness) -> Result<Partition, CegarError> {
    let origins = cex.origins().ok_or(CegarError::NotInjShaped)?;
    let block_of = |a: StateId| origins.get(a.0).map(|b| b.0);
    let a_block = block_of(w.state).ok_or(CegarError::StaleWitness)?;
    if a_block >= part.num_blocks() {
        return Err(CegarError::StaleWitness);
    }
    let in_block = |set: &BTreeSet<StateId>, b: usize| set.iter().all(|q| q.0 < part.num_states() && part.block_of(*q) == b);
    if !in_block(&w.failing, a_block) {
        return Err(CegarError::StaleWitness);
    }
    let mut splits = vec![(a_block, w.failing.clone())];
    for b in w.choice.support().filter(|b| *b != w.state) {
        let b_block = block_of(b).ok_or(CegarError::StaleWitness)?;
        let img = w.r_old.image(b).clone();
        if b_block >= part.num_blocks() || !in_block(&img, b_block) {
            return Err(CegarError::StaleWitness);
        }
        splits.push((b_block, img));
    }
    Ok(part.split(&splits))
}

#[derive(Clone, Debug, Default)]
pub struct CegarConfig {
    pub cex: CexOptions,
    /// Defaults to the number of concrete states.
    pub max_iters: Option<usize>,
}


#[derive(Clone, Debug)]
pub enum Verdict {
    Holds,
    /// A valid counterexample with its validating simulation into `m`.
    Violated { cex: CounterExample, r: SimRelation },
    IterationLimit,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated { .. } => "violated",
            Verdict::IterationLimit => "iteration-limit",
        }
    }
}

#[derive(Clone, Debug)]
pub enum IterationOutcome {
    AbstractHolds,
    Valid,
    Invalid(InvalidityWitness),
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub partition: Partition,
    pub quotient: Quotient,
    pub cex: Option<CounterExample>,
    pub outcome: IterationOutcome,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.outcome {
            IterationOutcome::AbstractHolds => "holds",
            IterationOutcome::Valid => "valid",
            IterationOutcome::Invalid(_) => "invalid",
        };
        write!(
            f,
            "iter={} blocks={} cex_states={} verdict={}",
            self.iteration,
            self.partition.num_blocks(),
            self.cex.as_ref().map_or(0, |c| c.e.num_states()),
            verdict
        )
    }
}

#[derive(Clone, Debug)]
pub struct CegarRun {
    pub verdict: Verdict,
    pub trace: Vec<IterationRecord>,
}

/// Abstract, check, generate a counterexample, validate, refine; repeat.
pub fn cegar_loop(m: &Mdp, psi: &Formula, init: &Partition, cfg: &CegarConfig) -> Result<CegarRun, CegarError> {
    require_safety(psi, false)?;
    init.check_compatible(m)?;
    let max_iters = cfg.max_iters.unwrap_or(m.num_states()).max(1);
    let mut part = init.clone();
    let mut trace = Vec::new();
    for iteration in 1..=max_iters {
        let q = quotient(m, &part)?;
        if check(&q.abs, psi) {
            trace.push(IterationRecord {
                iteration,
                partition: part.clone(),
                quotient: q,
                cex: None,
                outcome: IterationOutcome::AbstractHolds,
            });
            return Ok(CegarRun {
                verdict: Verdict::Holds,
                trace,
            });
        }
        let cex = gen_min_cex(&q.abs, psi, &cfg.cex)?;
        match check_validity(m, &part, &cex)? {
            Validity::Valid(r) => {
                if !is_canonical_simulation(&cex.e, m, &r) || check(&cex.e, psi) {
                    return Err(CegarError::Unsound);
                }
                trace.push(IterationRecord {
                    iteration,
                    partition: part.clone(),
                    quotient: q,
                    cex: Some(cex.clone()),
                    outcome: IterationOutcome::Valid,
                });
                return Ok(CegarRun {
                    verdict: Verdict::Violated { cex, r },
                    trace,
                });
            }
            Validity::Invalid(w) => {
                let next = refine(&part, &cex, &w)?;
                if next.num_blocks() <= part.num_blocks() {
                    return Err(CegarError::NoProgress(iteration));
                }
                trace.push(IterationRecord {
                    iteration,
                    partition: part.clone(),
                    quotient: q,
                    cex: Some(cex),
                    outcome: IterationOutcome::Invalid(w),
                });
                part = next;
            }
        }
    }
    Ok(CegarRun {
        verdict: Verdict::IterationLimit,
        trace,
    })
}
