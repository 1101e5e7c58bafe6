//! Exact model checking of fragment formulas: Sat-set labeling, maximal
//! probabilities for next/until, and memoryless scheduler extraction.
//!
//! Until probabilities are computed by graph precomputation of the value-0
//! and value-1 states followed by policy iteration with exact rational
//! linear solves on the remaining states.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::formula::{Cmp, Formula, PathFormula, ProbOp};
use crate::mdp::{Mdp, MdpBuilder, Prob, StateId, SubDistribution};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelCheckError {
    #[error("path formula `{0}` has non-propositional operands")]
    NonFlat(String),
    #[error("scheduler has {got} entries for {expected} states")]
    SchedulerShape { expected: usize, got: usize },
    #[error("scheduler picks choice {choice} at state {state}, which has {available}")]
    SchedulerChoice {
        state: usize,
        choice: usize,
        available: usize,
    },
}

/// Memoryless scheduler: one choice index per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scheduler(pub Vec<usize>);

impl Scheduler {
    pub fn choice(&self, s: StateId) -> usize {
        self.0[s.0]
    }

    pub fn validate(&self, m: &Mdp) -> Result<(), ModelCheckError> {
        if self.0.len() != m.num_states() {
            return Err(ModelCheckError::SchedulerShape {
                expected: m.num_states(),
                got: self.0.len(),
            });
        }
        for s in m.states() {
            let available = m.choices(s).len();
            if self.0[s.0] >= available {
                return Err(ModelCheckError::SchedulerChoice {
                    state: s.0,
                    choice: self.0[s.0],
                    available,
                });
            }
        }
        Ok(())
    }
}

/// Memoized satisfaction sets of state formulas over one model.
#[derive(Debug)]
pub struct SatTable<'m> {
    m: &'m Mdp,
    sets: BTreeMap<Formula, Vec<bool>>,
}

impl<'m> SatTable<'m> {
    pub fn new(m: &'m Mdp) -> Self {
        SatTable {
            m,
            sets: BTreeMap::new(),
        }
    }

    /// Characteristic vector of `Sat(f)`.
    pub fn sat(&mut self, f: &Formula) -> Vec<bool> {
        if let Some(v) = self.sets.get(f) {
            return v.clone();
        }
        let n = self.m.num_states();
        let v = match f {
            Formula::True => vec![true; n],
            Formula::False => vec![false; n],
            Formula::Prop(p) => self.m.states().map(|s| self.m.has_label(s, p)).collect(),
            Formula::NotProp(p) => self.m.states().map(|s| !self.m.has_label(s, p)).collect(),
            Formula::And(a, b) => {
                let (x, y) = (self.sat(a), self.sat(b));
                x.iter().zip(&y).map(|(p, q)| *p && *q).collect()
            }
            Formula::Or(a, b) => {
                let (x, y) = (self.sat(a), self.sat(b));
                x.iter().zip(&y).map(|(p, q)| *p || *q).collect()
            }
            Formula::Prob(op) => self.prob_op(op),
            Formula::NotProb(op) => self.prob_op(op).into_iter().map(|b| !b).collect(),
        };
        self.sets.insert(f.clone(), v.clone());
        v
    }

    fn prob_op(&mut self, op: &ProbOp) -> Vec<bool> {
        if let PathFormula::Until(a, b) = op.path.as_ref() {
            let (left, right) = (self.sat(a), self.sat(b));
            // qualitative bounds need only the graph precomputation
            if op.cmp == Cmp::Le && op.bound.is_zero() {
                return prob0_max(self.m, &left, &right);
            }
            if op.cmp == Cmp::Lt && op.bound.is_one() {
                let (one, _) = prob1_max(self.m, &left, &right);
                return one.into_iter().map(|b| !b).collect();
            }
        }
        let values = self.max_prob(&op.path);
        values.iter().map(|v| op.cmp.holds(v, &op.bound)).collect()
    }

    /// Maximal probability of `path` from every state.
    pub fn max_prob(&mut self, path: &PathFormula) -> Vec<Prob> {
        match path {
            PathFormula::Next(f) => {
                let target = self.sat(f);
                max_prob_next(self.m, &target).0
            }
            PathFormula::Until(a, b) => {
                let (left, right) = (self.sat(a), self.sat(b));
                max_prob_until(self.m, &left, &right).0
            }
        }
    }
}

fn measure(mu: &SubDistribution, set: &[bool]) -> Prob {
    mu.mass_where(|t| set[t.0])
}

fn expectation(mu: &SubDistribution, values: &[Prob]) -> Prob {
    mu.iter().fold(Prob::zero(), |acc, (t, p)| acc + p * &values[t.0])
}

/// Maximal probability of `X target`, with the lowest-index maximizing
/// choice per state.
pub fn max_prob_next(m: &Mdp, target: &[bool]) -> (Vec<Prob>, Scheduler) {
    let mut values = Vec::with_capacity(m.num_states());
    let mut sched = Vec::with_capacity(m.num_states());
    for s in m.states() {
        let mut best = (0, measure(&m.choices(s)[0], target));
        for (i, mu) in m.choices(s).iter().enumerate().skip(1) {
            let v = measure(mu, target);
            if v > best.1 {
                best = (i, v);
            }
        }
        sched.push(best.0);
        values.push(best.1);
    }
    (values, Scheduler(sched))
}

/// States where the maximal probability of `left U right` is 0.
pub fn prob0_max(m: &Mdp, left: &[bool], right: &[bool]) -> Vec<bool> {
    let n = m.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in m.states() {
        for t in m.successors(s) {
            preds[t.0].push(s.0);
        }
    }
    let mut reach = right.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| right[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !reach[s] && left[s] {
                reach[s] = true;
                queue.push_back(s);
            }
        }
    }
    reach.into_iter().map(|r| !r).collect()
}

/// States where the maximal probability of `left U right` is 1, together
/// with a choice per such state that attains it (attractor order).
pub fn prob1_max(m: &Mdp, left: &[bool], right: &[bool]) -> (Vec<bool>, Vec<usize>) {
    let n = m.num_states();
    let mut u = vec![true; n];
    let mut strategy = vec![0; n];
    loop {
        let mut r = right.to_vec();
        let mut changed = true;
        while changed {
            changed = false;
            for s in m.states() {
                if r[s.0] || !left[s.0] || !u[s.0] {
                    continue;
                }
                let good = m.choices(s).iter().position(|mu| {
                    mu.mass().is_one() && mu.support().all(|t| u[t.0]) && mu.support().any(|t| r[t.0])
                });
                if let Some(i) = good {
                    r[s.0] = true;
                    strategy[s.0] = i;
                    changed = true;
                }
            }
        }
        if r == u {
            for s in 0..n {
                if !u[s] || right[s] {
                    strategy[s] = 0;
                }
            }
            return (u, strategy);
        }
        u = r;
    }
}

/// Maximal probability of `left U right` from every state and a memoryless
/// scheduler attaining it everywhere.
pub fn max_prob_until(m: &Mdp, left: &[bool], right: &[bool]) -> (Vec<Prob>, Scheduler) {
    let n = m.num_states();
    let zero = prob0_max(m, left, right);
    let (one, one_strategy) = prob1_max(m, left, right);
    let maybe: Vec<bool> = (0..n).map(|s| !zero[s] && !one[s]).collect();

    let mut values: Vec<Prob> = (0..n)
        .map(|s| if one[s] { Prob::one() } else { Prob::zero() })
        .collect();
    let mut policy = one_strategy;
    if !maybe.iter().any(|&b| b) {
        return (values, Scheduler(policy));
    }

    // Proper initial policy: each undecided state moves one step closer to
    // the value-1 region with positive probability.
    let mut done: Vec<bool> = one.clone();
    let mut frontier = true;
    while frontier {
        frontier = false;
        let snapshot = done.clone();
        for s in m.states() {
            if !maybe[s.0] || done[s.0] {
                continue;
            }
            if let Some(i) = m
                .choices(s)
                .iter()
                .position(|mu| mu.support().any(|t| snapshot[t.0] || (right[t.0])))
            {
                policy[s.0] = i;
                done[s.0] = true;
                frontier = true;
            }
        }
    }
    debug_assert!((0..n).all(|s| !maybe[s] || done[s]));

    let index: Vec<Option<usize>> = {
        let mut next = 0;
        maybe
            .iter()
            .map(|&b| {
                b.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let states: Vec<StateId> = (0..n).filter(|&s| maybe[s]).map(StateId).collect();

    loop {
        let solution = solve_policy(m, &policy, &states, &index, &one);
        for (k, s) in states.iter().enumerate() {
            values[s.0] = solution[k].clone();
        }
        let mut improved = false;
        for s in &states {
            let current = values[s.0].clone();
            let mut best: Option<(usize, Prob)> = None;
            for (i, mu) in m.choices(*s).iter().enumerate() {
                let v = expectation(mu, &values);
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((i, v));
                }
            }
            let (i, v) = best.expect("nonempty choices");
            if v > current {
                policy[s.0] = i;
                improved = true;
            }
        }
        if !improved {
            return (values, Scheduler(policy));
        }
    }
}

/// Solves `x = P_policy x + b` on the undecided states.
fn solve_policy(
    m: &Mdp,
    policy: &[usize],
    states: &[StateId],
    index: &[Option<usize>],
    one: &[bool],
) -> Vec<Prob> {
    let k = states.len();
    let mut a: Vec<Vec<Prob>> = vec![vec![Prob::zero(); k + 1]; k];
    for (row, s) in states.iter().enumerate() {
        a[row][row] = Prob::one();
        for (t, p) in m.choices(*s)[policy[s.0]].iter() {
            if let Some(col) = index[t.0] {
                a[row][col] -= p;
            } else if one[t.0] {
                a[row][k] += p;
            }
        }
    }
    gauss_solve(a)
}

/// Gaussian elimination over the rationals on an augmented `k x (k+1)`
/// matrix. The matrix must be nonsingular.
pub(crate) fn gauss_solve(mut a: Vec<Vec<Prob>>) -> Vec<Prob> {
    let k = a.len();
    for col in 0..k {
        let pivot = (col..k)
            .find(|&r| !a[r][col].is_zero())
            .expect("singular system in policy evaluation");
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col][col..].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                if !p.is_zero() {
                    *x -= &factor * p;
                }
            }
        }
    }
    a.into_iter().map(|mut row| row.pop().expect("augmented column")).collect()
}

/// Maximal probability of `path` from every state.
pub fn max_prob(m: &Mdp, path: &PathFormula) -> Vec<Prob> {
    SatTable::new(m).max_prob(path)
}

/// States satisfying `f`.
pub fn sat_states(m: &Mdp, f: &Formula) -> BTreeSet<StateId> {
    SatTable::new(m)
        .sat(f)
        .into_iter()
        .enumerate()
        .filter_map(|(i, b)| b.then_some(StateId(i)))
        .collect()
}

/// `m ⊨ f`, judged at the initial state.
pub fn check(m: &Mdp, f: &Formula) -> bool {
    check_at(m, f, m.init())
}

pub fn check_at(m: &Mdp, f: &Formula, s: StateId) -> bool {
    SatTable::new(m).sat(f)[s.0]
}

/// A memoryless scheduler attaining the maximal probability of a path
/// formula with propositional operands at every state.
pub fn extract_scheduler(m: &Mdp, path: &PathFormula) -> Result<Scheduler, ModelCheckError> {
    let mut table = SatTable::new(m);
    match path {
        PathFormula::Next(f) if f.is_propositional() => {
            let target = table.sat(f);
            Ok(max_prob_next(m, &target).1)
        }
        PathFormula::Until(a, b) if a.is_propositional() && b.is_propositional() => {
            let (left, right) = (table.sat(a), table.sat(b));
            Ok(max_prob_until(m, &left, &right).1)
        }
        _ => Err(ModelCheckError::NonFlat(path.to_string())),
    }
}

/// The DTMC `m^S` keeping only the scheduled choice at every state.
pub fn induced_dtmc(m: &Mdp, sched: &Scheduler) -> Result<Mdp, ModelCheckError> {
    sched.validate(m)?;
    let mut b = MdpBuilder::new();
    for s in m.states() {
        b.add_state(m.name(s), m.labels(s).iter().cloned())
            .expect("names are unique in the source");
    }
    for p in m.alphabet() {
        b.declare_proposition(p);
    }
    b.set_init(m.init());
    for s in m.states() {
        b.add_choice(s, m.choices(s)[sched.choice(s)].clone())
            .expect("choice valid in the source");
    }
    Ok(b.build().expect("source model is well formed"))
}

/// Value iteration in floating point; a cross-check oracle only.
pub fn value_iteration_until(m: &Mdp, left: &[bool], right: &[bool], eps: f64) -> Vec<f64> {
    use num_traits::ToPrimitive;
    let n = m.num_states();
    let choices: Vec<Vec<Vec<(usize, f64)>>> = m
        .states()
        .map(|s| {
            m.choices(s)
                .iter()
                .map(|mu| mu.iter().map(|(t, p)| (t.0, p.to_f64().unwrap_or(0.0))).collect())
                .collect()
        })
        .collect();
    let mut v: Vec<f64> = (0..n).map(|s| if right[s] { 1.0 } else { 0.0 }).collect();
    for _ in 0..1_000_000 {
        let mut delta: f64 = 0.0;
        let mut next = v.clone();
        for s in 0..n {
            if right[s] || !left[s] {
                continue;
            }
            let best = choices[s]
                .iter()
                .map(|mu| mu.iter().map(|(t, p)| p * v[*t]).sum::<f64>())
                .fold(0.0, f64::max);
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if delta < eps {
            break;
        }
    }
    v
}
