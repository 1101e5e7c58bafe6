//! Depth-incremental checking of counterexamples for weak safety formulas.
//!
//! The counterexample is unrolled implicitly: round `k` maintains
//! `R_k = R_I ∩ ≼_k`, the strict-liveness subformulas satisfied by each
//! counterexample state in its depth-`k` unrolling, and the maximal
//! probabilities of the path subformulas there.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::abstraction::Partition;
use crate::cegar::{initial_relation, CegarError, CounterExample};
use crate::formula::{negate, require_safety, sub_and_path_formulas, Formula, FormulaError, PathFormula};
use crate::mdp::{Mdp, Prob, StateId, SubDistribution};
use crate::simulation::SimRelation;

#[derive(Debug, Error)]
pub enum OtfError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Cegar(#[from] CegarError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OtfVerdict {
    /// Some counterexample state lost all concrete partners at this depth.
    NotSimulated(usize),
    /// The concrete initial state satisfies the negated formula within this
    /// depth, so the concrete model violates the weak safety formula.
    SafetyViolated(usize),
    DepthExceeded(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OtfOptions {
    pub max_depth: usize,
    /// Recompute only states whose successors changed in the last round.
    pub delta: bool,
}

impl Default for OtfOptions {
    fn default() -> Self {
        OtfOptions {
            max_depth: 1_000_000,
            delta: false,
        }
    }
}

/// `R_k`, `Sat_k` and `MaxProb_k` at depth `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OtfState {
    pub k: usize,
    pub r_curr: SimRelation,
    /// Per counterexample state, membership per state subformula.
    pub sat_curr: Vec<Vec<bool>>,
    /// Per counterexample state, value per path subformula.
    pub maxprob_curr: Vec<Vec<Prob>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Path(usize),
    State(usize),
}

/// Driver for the on-the-fly check. [`OtfChecker::status`] evaluates the
/// exit tests for the current depth and [`OtfChecker::step`] advances one
/// round.
pub struct OtfChecker<'a> {
    m: &'a Mdp,
    e: &'a Mdp,
    states: Vec<Formula>,
    paths: Vec<PathFormula>,
    state_index: BTreeMap<Formula, usize>,
    path_index: BTreeMap<PathFormula, usize>,
    order: Vec<Item>,
    top: usize,
    delta: bool,
    r_dirty: Vec<bool>,
    v_dirty: Vec<bool>,
    cur: OtfState,
}

impl<'a> OtfChecker<'a> {
    pub fn new(
        m: &'a Mdp,
        part: &Partition,
        cex: &'a CounterExample,
        psi_ws: &Formula,
        delta: bool,
    ) -> Result<Self, OtfError> {
        require_safety(psi_ws, true)?;
        let psi_sl = negate(psi_ws)?;
        let (states, paths) = sub_and_path_formulas(&psi_sl)?;
        let r = initial_relation(m, part, cex)?;
        let state_index: BTreeMap<Formula, usize> =
            states.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        let path_index: BTreeMap<PathFormula, usize> =
            paths.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        let mut order: Vec<(usize, Item)> = states
            .iter()
            .enumerate()
            .map(|(i, f)| (f.size(), Item::State(i)))
            .chain(paths.iter().enumerate().map(|(i, p)| (p.size(), Item::Path(i))))
            .collect();
        order.sort();
        let e = &cex.e;
        let n = e.num_states();
        let mut checker = OtfChecker {
            m,
            e,
            top: state_index[&psi_sl],
            states,
            paths,
            state_index,
            path_index,
            order: order.into_iter().map(|(_, it)| it).collect(),
            delta,
            r_dirty: vec![true; n],
            v_dirty: vec![true; n],
            cur: OtfState {
                k: 0,
                r_curr: r,
                sat_curr: Vec::new(),
                maxprob_curr: Vec::new(),
            },
        };
        // depth 0: every measure is zero, so the previous values are empty
        let empty_sat = vec![vec![false; checker.states.len()]; n];
        let zero_prob = vec![vec![Prob::zero(); checker.paths.len()]; n];
        let (sat, prob): (Vec<_>, Vec<_>) = e
            .states()
            .map(|a| checker.compute(a, &empty_sat, &zero_prob, true))
            .unzip();
        checker.cur.sat_curr = sat;
        checker.cur.maxprob_curr = prob;
        Ok(checker)
    }

    /// State subformulas of the negated formula, indexed as in `sat_curr`.
    pub fn subformulas(&self) -> &[Formula] {
        &self.states
    }

    /// Path subformulas, indexed as in `maxprob_curr`.
    pub fn path_formulas(&self) -> &[PathFormula] {
        &self.paths
    }

    pub fn state(&self) -> &OtfState {
        &self.cur
    }

    /// Maximal probability at the counterexample's initial state of the
    /// largest path subformula.
    pub fn maxprob_init(&self) -> Option<&Prob> {
        self.cur.maxprob_curr[self.e.init().0].last()
    }

    pub fn sat_init(&self) -> bool {
        self.cur.sat_curr[self.e.init().0][self.top]
    }

    /// Exit tests at the top of a round.
    pub fn status(&self) -> Option<OtfVerdict> {
        if !self.cur.r_curr.contains(self.e.init(), self.m.init()) {
            return Some(OtfVerdict::NotSimulated(self.cur.k));
        }
        if self.sat_init() {
            return Some(OtfVerdict::SafetyViolated(self.cur.k));
        }
        None
    }

    /// Advances from depth `k` to `k + 1`. Returns `NotSimulated(k + 1)` if
    /// some counterexample state loses every partner.
    pub fn step(&mut self) -> Option<OtfVerdict> {
        let e = self.e;
        let n = e.num_states();
        let full = !self.delta || self.cur.k == 0;
        let touched = |dirty: &[bool], a: StateId| e.successors(a).iter().any(|b| dirty[b.0]);

        let mut r_next = self.cur.r_curr.clone();
        let owners = self.cur.r_curr.owners();
        for a in e.states() {
            if !full && !touched(&self.r_dirty, a) {
                continue;
            }
            let keep = self
                .cur
                .r_curr
                .image(a)
                .iter()
                .copied()
                .filter(|q| {
                    let lifted: Vec<SubDistribution> = self
                        .m
                        .choices(*q)
                        .iter()
                        .map(|nu| push_forward(nu, &owners))
                        .collect();
                    e.choices(a)
                        .iter()
                        .all(|mu| lifted.iter().any(|nu| pointwise_leq(mu, nu)))
                })
                .collect();
            r_next.set_image(a, keep);
            if r_next.image(a).is_empty() {
                return Some(OtfVerdict::NotSimulated(self.cur.k + 1));
            }
        }

        let mut sat_next = self.cur.sat_curr.clone();
        let mut prob_next = self.cur.maxprob_curr.clone();
        for a in e.states() {
            if !full && !touched(&self.v_dirty, a) {
                continue;
            }
            let (s, p) = self.compute(a, &self.cur.sat_curr, &self.cur.maxprob_curr, false);
            sat_next[a.0] = s;
            prob_next[a.0] = p;
        }

        let mut r_changed = vec![false; n];
        let mut v_changed = vec![false; n];
        for a in e.states() {
            debug_assert!(r_next.image(a).is_subset(self.cur.r_curr.image(a)));
            debug_assert!(self.cur.sat_curr[a.0].iter().zip(&sat_next[a.0]).all(|(x, y)| !*x || *y));
            debug_assert!(self.cur.maxprob_curr[a.0].iter().zip(&prob_next[a.0]).all(|(x, y)| x <= y));
            r_changed[a.0] = r_next.image(a) != self.cur.r_curr.image(a);
            v_changed[a.0] =
                sat_next[a.0] != self.cur.sat_curr[a.0] || prob_next[a.0] != self.cur.maxprob_curr[a.0];
        }
        self.r_dirty = r_changed;
        self.v_dirty = v_changed;
        self.cur = OtfState {
            k: self.cur.k + 1,
            r_curr: r_next,
            sat_curr: sat_next,
            maxprob_curr: prob_next,
        };
        None
    }

    /// COMPUTE: subformulas and path formulas of `ā` in the next unrolling,
    /// from the previous depth's values of its successors.
    fn compute(&self, a: StateId, sat_prev: &[Vec<bool>], prob_prev: &[Vec<Prob>], depth0: bool) -> (Vec<bool>, Vec<Prob>) {
        let e = self.e;
        let mut sat = vec![false; self.states.len()];
        let mut prob = vec![Prob::zero(); self.paths.len()];
        let choices: &[SubDistribution] = if depth0 { &[] } else { e.choices(a) };
        for item in &self.order {
            match *item {
                Item::State(i) => {
                    sat[i] = match &self.states[i] {
                        Formula::True => true,
                        Formula::False => false,
                        Formula::Prop(p) => e.has_label(a, p),
                        Formula::NotProp(p) => !e.has_label(a, p),
                        Formula::Or(x, y) => sat[self.state_index[x.as_ref()]] || sat[self.state_index[y.as_ref()]],
                        Formula::And(x, y) => sat[self.state_index[x.as_ref()]] && sat[self.state_index[y.as_ref()]],
                        Formula::NotProb(op) => prob[self.path_index[op.path.as_ref()]] > op.bound,
                        Formula::Prob(_) => unreachable!("strict liveness has no positive bounds"),
                    };
                }
                Item::Path(i) => {
                    prob[i] = match &self.paths[i] {
                        PathFormula::Next(f) => {
                            let j = self.state_index[f];
                            choices
                                .iter()
                                .map(|mu| mu.mass_where(|b| sat_prev[b.0][j]))
                                .max()
                                .unwrap_or_else(Prob::zero)
                        }
                        PathFormula::Until(x, y) => {
                            if sat[self.state_index[y]] {
                                Prob::one()
                            } else if !sat[self.state_index[x]] {
                                Prob::zero()
                            } else {
                                choices
                                    .iter()
                                    .map(|mu| {
                                        mu.iter().fold(Prob::zero(), |acc, (b, p)| acc + p * &prob_prev[b.0][i])
                                    })
                                    .max()
                                    .unwrap_or_else(Prob::zero)
                            }
                        }
                    };
                }
            }
        }
        (sat, prob)
    }
}

fn push_forward(nu: &SubDistribution, owners: &[Option<StateId>]) -> SubDistribution {
    SubDistribution::new(nu.iter().filter_map(|(t, p)| owners[t.0].map(|a| (a, p.clone()))))
        .expect("pushforward keeps mass")
}

fn pointwise_leq(mu: &SubDistribution, lifted: &SubDistribution) -> bool {
    mu.iter().all(|(a, p)| lifted.get(a).is_some_and(|x| p <= x))
}

/// One trace line per round.
pub struct RoundSummary<'c, 'a>(pub &'c OtfChecker<'a>);

impl fmt::Display for RoundSummary<'_, '_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.0;
        write!(
            f,
            "k={} |R|={} sat_init={} maxprob_init={}",
            c.cur.k,
            c.cur.r_curr.len(),
            c.sat_init(),
            c.maxprob_init().map_or_else(|| "-".to_string(), |p| p.to_string())
        )
    }
}

/// Runs rounds until a verdict or `max_depth`.
pub fn otf_check(
    m: &Mdp,
    part: &Partition,
    cex: &CounterExample,
    psi_ws: &Formula,
    opts: OtfOptions,
) -> Result<OtfVerdict, OtfError> {
    otf_check_traced(m, part, cex, psi_ws, opts, |_| {})
}

/// [`otf_check`] calling `observe` at the top of every round.
pub fn otf_check_traced(
    m: &Mdp,
    part: &Partition,
    cex: &CounterExample,
    psi_ws: &Formula,
    opts: OtfOptions,
    mut observe: impl FnMut(&OtfChecker<'_>),
) -> Result<OtfVerdict, OtfError> {
    let mut c = OtfChecker::new(m, part, cex, psi_ws, opts.delta)?;
    loop {
        observe(&c);
        if let Some(v) = c.status() {
            return Ok(v);
        }
        if c.state().k >= opts.max_depth {
            return Ok(OtfVerdict::DepthExceeded(c.state().k));
        }
        if let Some(v) = c.step() {
            return Ok(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cegar::{gen_min_cex, CexOptions};
    use crate::formula::parse_formula;
    use crate::mdp::{ratio, MdpBuilder};

    fn chain() -> Mdp {
        let mut b = MdpBuilder::new();
        let q1 = b.add_state("q1", Vec::<String>::new()).unwrap();
        let q2 = b.add_state("q2", Vec::<String>::new()).unwrap();
        b.add_state("q3", ["P"]).unwrap();
        b.set_init(q1);
        b.add_choice_named(q1, &[("q2", ratio(1, 1))]).unwrap();
        b.add_choice_named(q2, &[("q1", ratio(1, 2)), ("q3", ratio(1, 2))]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn chain_violation_depth() {
        let m = chain();
        let psi = parse_formula("P<=3/4[true U P]").unwrap();
        let part = Partition::identity(3);
        let cex = gen_min_cex(&m, &psi, &CexOptions::default()).unwrap();
        let mut seen = Vec::new();
        let v = otf_check_traced(&m, &part, &cex, &psi, OtfOptions::default(), |c| {
            seen.push(c.maxprob_init().unwrap().clone());
        })
        .unwrap();
        assert_eq!(v, OtfVerdict::SafetyViolated(6));
        let expected = [(0, 1), (0, 1), (1, 2), (1, 2), (3, 4), (3, 4), (7, 8)];
        assert_eq!(seen, expected.iter().map(|(n, d)| ratio(*n, *d)).collect::<Vec<_>>());
    }

    #[test]
    fn depth_zero_is_exceeded() {
        let m = chain();
        let psi = parse_formula("P<=3/4[true U P]").unwrap();
        let cex = gen_min_cex(&m, &psi, &CexOptions::default()).unwrap();
        let opts = OtfOptions {
            max_depth: 0,
            delta: false,
        };
        assert_eq!(
            otf_check(&m, &Partition::identity(3), &cex, &psi, opts).unwrap(),
            OtfVerdict::DepthExceeded(0)
        );
    }

    #[test]
    fn delta_cache_matches_plain() {
        let m = chain();
        let psi = parse_formula("P<=3/4[true U P]").unwrap();
        let part = Partition::identity(3);
        let cex = gen_min_cex(&m, &psi, &CexOptions::default()).unwrap();
        let mut plain = OtfChecker::new(&m, &part, &cex, &psi, false).unwrap();
        let mut delta = OtfChecker::new(&m, &part, &cex, &psi, true).unwrap();
        for _ in 0..10 {
            assert_eq!(plain.state(), delta.state());
            plain.step();
            delta.step();
        }
    }

    #[test]
    fn rejects_strict_bounds() {
        let m = chain();
        let psi = parse_formula("P<1[true U P]").unwrap();
        let cex = gen_min_cex(&m, &psi, &CexOptions::default()).unwrap();
        assert!(matches!(
            otf_check(&m, &Partition::identity(3), &cex, &psi, OtfOptions::default()),
            Err(OtfError::Formula(_))
        ));
    }
}
