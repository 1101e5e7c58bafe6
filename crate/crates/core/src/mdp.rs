//! Finite Markov decision processes with exact rational sub-probability
//! measures, plus the structural constructions the rest of the engine is
//! built from: unrolling, direct sum, renamed copies and containment.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::simulation::SimRelation;

/// Exact probability value.
pub type Prob = num_rational::BigRational;

/// Set of atomic propositions holding in a state.
pub type LabelSet = BTreeSet<String>;

/// Dense, 0-based state index within one [`Mdp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MdpError {
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("negative probability {0}")]
    NegativeProbability(Prob),
    #[error("total mass {0} exceeds 1")]
    MassExceedsOne(Prob),
    #[error("no initial state declared")]
    MissingInit,
    #[error("MDP has no states")]
    Empty,
}

/// Sparse sub-probability measure over state indices.
///
/// Entries are kept sorted by state, every stored value is strictly positive
/// and the total mass never exceeds one. `BigRational` keeps values reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SubDistribution {
    entries: Vec<(StateId, Prob)>,
}

impl SubDistribution {
    /// The all-zero measure.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(state: StateId) -> Self {
        Self {
            entries: vec![(state, Prob::one())],
        }
    }

    /// Builds a measure, summing repeated targets and dropping zeros.
    pub fn new<I>(entries: I) -> Result<Self, MdpError>
    where
        I: IntoIterator<Item = (StateId, Prob)>,
    {
        let mut merged: Vec<(StateId, Prob)> = Vec::new();
        let mut sorted: Vec<(StateId, Prob)> = entries.into_iter().collect();
        sorted.sort_by_key(|a| a.0);
        for (s, p) in sorted {
            if p.is_negative() {
                return Err(MdpError::NegativeProbability(p));
            }
            match merged.last_mut() {
                Some((last, acc)) if *last == s => *acc += p,
                _ => merged.push((s, p)),
            }
        }
        merged.retain(|(_, p)| !p.is_zero());
        let dist = Self { entries: merged };
        let mass = dist.mass();
        if mass > Prob::one() {
            return Err(MdpError::MassExceedsOne(mass));
        }
        Ok(dist)
    }

    /// Probability assigned to `state` (zero if absent).
    pub fn prob(&self, state: StateId) -> Prob {
        self.get(state).cloned().unwrap_or_else(Prob::zero)
    }

    pub fn get(&self, state: StateId) -> Option<&Prob> {
        self.entries
            .binary_search_by(|(s, _)| s.cmp(&state))
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn mass(&self) -> Prob {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Measure of the set of states satisfying `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(StateId) -> bool) -> Prob {
        self.entries
            .iter()
            .filter(|(s, _)| pred(*s))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, &Prob)> + '_ {
        self.entries.iter().map(|(s, p)| (*s, p))
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy of this measure with the mass on `state` removed.
    pub fn without(&self, state: StateId) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(s, _)| *s != state)
                .cloned()
                .collect(),
        }
    }

    /// Pushforward along `f`; mass is preserved.
    pub fn map_states(&self, mut f: impl FnMut(StateId) -> StateId) -> Self {
        Self::new(self.entries.iter().map(|(s, p)| (f(*s), p.clone())))
            .expect("pushforward preserves mass")
    }

    /// Pushforward along a partial map; mass on unmapped states is dropped.
    pub fn filter_map_states(&self, mut f: impl FnMut(StateId) -> Option<StateId>) -> Self {
        Self::new(
            self.entries
                .iter()
                .filter_map(|(s, p)| f(*s).map(|t| (t, p.clone()))),
        )
        .expect("restriction cannot increase mass")
    }
}

/// `post(mu)`: the support of a measure.
pub fn post(mu: &SubDistribution) -> BTreeSet<StateId> {
    mu.support().collect()
}

/// A labeled edge of the underlying graph: target `target` of the
/// `choice`-th measure of `state`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub state: StateId,
    pub choice: usize,
    pub target: StateId,
}

/// Labeled underlying graph: one edge family per choice position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    pub vertices: usize,
    pub families: Vec<BTreeSet<(StateId, StateId)>>,
}

impl LabeledGraph {
    pub fn edge_count(&self) -> usize {
        self.families.iter().map(BTreeSet::len).sum()
    }

    /// The unlabeled graph `∪ E_i`.
    pub fn unlabeled(&self) -> BTreeSet<(StateId, StateId)> {
        self.families.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct StateInfo {
    name: String,
    labels: LabelSet,
}

/// Finite MDP `(Q, q_I, δ, L)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mdp {
    states: Vec<StateInfo>,
    init: StateId,
    choices: Vec<Vec<SubDistribution>>,
    alphabet: BTreeSet<String>,
    by_name: HashMap<String, StateId>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn init(&self) -> StateId {
        self.init
    }

    pub fn name(&self, s: StateId) -> &str {
        &self.states[s.0].name
    }

    pub fn labels(&self, s: StateId) -> &LabelSet {
        &self.states[s.0].labels
    }

    pub fn has_label(&self, s: StateId, prop: &str) -> bool {
        self.states[s.0].labels.contains(prop)
    }

    /// Nonempty list of measures available at `s`.
    pub fn choices(&self, s: StateId) -> &[SubDistribution] {
        &self.choices[s.0]
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.by_name.get(name).copied()
    }

    /// True when every state has exactly one choice.
    pub fn is_dtmc(&self) -> bool {
        self.choices.iter().all(|c| c.len() == 1)
    }

    pub fn max_choices(&self) -> usize {
        self.choices.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// All labeled edges ordered by (state, choice, target).
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for s in self.states() {
            for (ci, mu) in self.choices(s).iter().enumerate() {
                out.extend(mu.support().map(|t| Edge {
                    state: s,
                    choice: ci,
                    target: t,
                }));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.choices
            .iter()
            .flatten()
            .map(SubDistribution::support_len)
            .sum()
    }

    pub fn labeled_graph(&self) -> LabeledGraph {
        let mut families = vec![BTreeSet::new(); self.max_choices()];
        for e in self.edges() {
            families[e.choice].insert((e.state, e.target));
        }
        LabeledGraph {
            vertices: self.num_states(),
            families,
        }
    }

    /// Distinct successors of `s` over all choices.
    pub fn successors(&self, s: StateId) -> BTreeSet<StateId> {
        self.choices(s).iter().flat_map(|mu| mu.support()).collect()
    }

    /// Reachability from the initial state in the unlabeled graph.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack = vec![self.init];
        seen[self.init.0] = true;
        while let Some(s) = stack.pop() {
            for t in self.choices(s).iter().flat_map(|mu| mu.support()) {
                if !seen[t.0] {
                    seen[t.0] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    /// Sub-MDP on the states with `keep[s]`, renumbered densely in index
    /// order. Mass on dropped states is discarded. Returns the map from old
    /// to new indices. The initial state must be kept.
    pub fn restrict(&self, keep: &[bool]) -> (Mdp, Vec<Option<StateId>>) {
        assert!(keep[self.init.0], "restriction must keep the initial state");
        let mut map = vec![None; self.num_states()];
        let mut b = MdpBuilder::new();
        for s in self.states().filter(|s| keep[s.0]) {
            let id = b
                .add_state(self.name(s), self.labels(s).iter().cloned())
                .expect("names are unique");
            map[s.0] = Some(id);
        }
        for p in &self.alphabet {
            b.declare_proposition(p);
        }
        for s in self.states().filter(|s| keep[s.0]) {
            for mu in self.choices(s) {
                b.add_choice(map[s.0].unwrap(), mu.filter_map_states(|t| map[t.0]))
                    .expect("states exist");
            }
        }
        b.set_init(map[self.init.0].unwrap());
        (b.build().expect("restriction is well formed"), map)
    }

    /// Copy with the edge's target zeroed in the edge's choice.
    pub fn with_edge_removed(&self, e: Edge) -> Mdp {
        let mut out = self.clone();
        let mu = &mut out.choices[e.state.0][e.choice];
        *mu = mu.without(e.target);
        out
    }

    /// Copy where state `s` only keeps the choice at `index`.
    pub fn with_single_choice(&self, s: StateId, index: usize) -> Mdp {
        let mut out = self.clone();
        let kept = out.choices[s.0][index].clone();
        out.choices[s.0] = vec![kept];
        out
    }

    /// Copy with the choice at `index` of state `s` deleted (a deleted last
    /// choice is replaced by the all-zero measure).
    pub fn with_choice_deleted(&self, s: StateId, index: usize) -> Mdp {
        let mut out = self.clone();
        out.choices[s.0].remove(index);
        if out.choices[s.0].is_empty() {
            out.choices[s.0].push(SubDistribution::zero());
        }
        out
    }

    /// Copy where all-zero choices are dropped at states that have a nonzero
    /// choice, and collapsed to one zero choice elsewhere.
    pub fn without_zero_choices(&self) -> Mdp {
        let mut out = self.clone();
        for c in &mut out.choices {
            c.retain(|mu| !mu.is_zero());
            if c.is_empty() {
                c.push(SubDistribution::zero());
            }
        }
        out
    }

    /// Same MDP with a different initial state.
    pub fn with_init(&self, init: StateId) -> Mdp {
        assert!(init.0 < self.num_states());
        let mut out = self.clone();
        out.init = init;
        out
    }
}

/// Incremental constructor for [`Mdp`].
#[derive(Debug, Default)]
pub struct MdpBuilder {
    states: Vec<StateInfo>,
    by_name: HashMap<String, StateId>,
    choices: Vec<Vec<SubDistribution>>,
    alphabet: BTreeSet<String>,
    init: Option<StateId>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state<I, S>(&mut self, name: &str, labels: I) -> Result<StateId, MdpError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if self.by_name.contains_key(name) {
            return Err(MdpError::DuplicateState(name.to_string()));
        }
        let labels: LabelSet = labels.into_iter().map(Into::into).collect();
        self.alphabet.extend(labels.iter().cloned());
        let id = StateId(self.states.len());
        self.states.push(StateInfo {
            name: name.to_string(),
            labels,
        });
        self.by_name.insert(name.to_string(), id);
        self.choices.push(Vec::new());
        Ok(id)
    }

    pub fn declare_proposition(&mut self, prop: &str) {
        self.alphabet.insert(prop.to_string());
    }

    pub fn state(&self, name: &str) -> Option<StateId> {
        self.by_name.get(name).copied()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_choices(&self, s: StateId) -> usize {
        self.choices[s.0].len()
    }

    pub fn set_init(&mut self, s: StateId) {
        self.init = Some(s);
    }

    pub fn add_choice(&mut self, s: StateId, mu: SubDistribution) -> Result<(), MdpError> {
        let n = self.states.len();
        if s.0 >= n {
            return Err(MdpError::StateOutOfRange(s.0));
        }
        if let Some(t) = mu.support().find(|t| t.0 >= n) {
            return Err(MdpError::StateOutOfRange(t.0));
        }
        self.choices[s.0].push(mu);
        Ok(())
    }

    /// Convenience: add a choice given as `(target name, probability)` pairs.
    pub fn add_choice_named(&mut self, s: StateId, entries: &[(&str, Prob)]) -> Result<(), MdpError> {
        let mut resolved = Vec::with_capacity(entries.len());
        for (name, p) in entries {
            let t = self
                .state(name)
                .ok_or_else(|| MdpError::UnknownState(name.to_string()))?;
            resolved.push((t, p.clone()));
        }
        self.add_choice(s, SubDistribution::new(resolved)?)
    }

    /// Finishes the MDP. States without choices get the all-zero measure.
    pub fn build(mut self) -> Result<Mdp, MdpError> {
        if self.states.is_empty() {
            return Err(MdpError::Empty);
        }
        let init = self.init.ok_or(MdpError::MissingInit)?;
        for c in &mut self.choices {
            if c.is_empty() {
                c.push(SubDistribution::zero());
            }
        }
        Ok(Mdp {
            states: self.states,
            init,
            choices: self.choices,
            alphabet: self.alphabet,
            by_name: self.by_name,
        })
    }
}

/// The `k`-th unrolling of `m` rooted at `root`.
///
/// State `0` is `(root, k)`; state `1 + j·|Q| + i` is `(q_i, j)` for
/// `0 ≤ j < k`. Every level-`j+1` measure is the original one shifted onto
/// level `j`; level-0 measures are all zero. Choice positions are kept, so
/// level-0 states carry one zero measure per original choice.
pub fn unroll(m: &Mdp, root: StateId, k: usize) -> Mdp {
    let n = m.num_states();
    let level_state = |q: StateId, j: usize| StateId(1 + j * n + q.0);
    let mut b = MdpBuilder::new();
    b.add_state(&format!("{}@{}", m.name(root), k), m.labels(root).iter().cloned())
        .expect("fresh");
    for j in 0..k {
        for q in m.states() {
            b.add_state(&format!("{}@{}", m.name(q), j), m.labels(q).iter().cloned())
                .expect("fresh");
        }
    }
    for p in m.alphabet() {
        b.declare_proposition(p);
    }
    let shift = |mu: &SubDistribution, j: usize| -> SubDistribution {
        if j == 0 {
            SubDistribution::zero()
        } else {
            mu.map_states(|t| level_state(t, j - 1))
        }
    };
    for mu in m.choices(root) {
        b.add_choice(StateId(0), shift(mu, k)).expect("in range");
    }
    for j in 0..k {
        for q in m.states() {
            for mu in m.choices(q) {
                b.add_choice(level_state(q, j), shift(mu, j)).expect("in range");
            }
        }
    }
    b.set_init(StateId(0));
    b.build().expect("unrolling is well formed")
}

/// Which summand holds the initial state of a direct sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left(StateId),
    Right(StateId),
}

/// Direct sum `(M + M')` with states `Q×{0} ∪ Q'×{1}`: left state `i` keeps
/// index `i`, right state `j` becomes `|Q| + j`. Names get `.0`/`.1` tags.
pub fn direct_sum(left: &Mdp, right: &Mdp, init: Side) -> Mdp {
    let offset = left.num_states();
    let mut b = MdpBuilder::new();
    for s in left.states() {
        b.add_state(&format!("{}.0", left.name(s)), left.labels(s).iter().cloned())
            .expect("tagged names are unique");
    }
    for s in right.states() {
        b.add_state(&format!("{}.1", right.name(s)), right.labels(s).iter().cloned())
            .expect("tagged names are unique");
    }
    for p in left.alphabet().iter().chain(right.alphabet()) {
        b.declare_proposition(p);
    }
    for s in left.states() {
        for mu in left.choices(s) {
            b.add_choice(s, mu.clone()).expect("in range");
        }
    }
    for s in right.states() {
        for mu in right.choices(s) {
            b.add_choice(StateId(offset + s.0), mu.map_states(|t| StateId(offset + t.0)))
                .expect("in range");
        }
    }
    b.set_init(match init {
        Side::Left(s) => s,
        Side::Right(s) => StateId(offset + s.0),
    });
    b.build().expect("direct sum is well formed")
}

/// Isomorphic copy `M̄` with fresh names `~q`, together with the injection
/// `{(q̄, q)}` relating each copy state to its original.
pub fn bar_copy(m: &Mdp) -> (Mdp, SimRelation) {
    let mut b = MdpBuilder::new();
    for s in m.states() {
        b.add_state(&format!("~{}", m.name(s)), m.labels(s).iter().cloned())
            .expect("fresh names");
    }
    for p in m.alphabet() {
        b.declare_proposition(p);
    }
    for s in m.states() {
        for mu in m.choices(s) {
            b.add_choice(s, mu.clone()).expect("in range");
        }
    }
    b.set_init(m.init());
    let copy = b.build().expect("copy is well formed");
    let inj = SimRelation::identity(m.num_states());
    (copy, inj)
}

/// Containment `sub ⊆ sup`: states of `sub` are states of `sup` (by name)
/// with equal labels, and each state's choices map injectively to choices of
/// the same state in `sup` such that every positive entry of a `sub` measure
/// is reproduced exactly by its image.
pub fn is_contained(sub: &Mdp, sup: &Mdp) -> bool {
    let mut to_sup = Vec::with_capacity(sub.num_states());
    for s in sub.states() {
        match sup.state_by_name(sub.name(s)) {
            Some(t) if sup.labels(t) == sub.labels(s) => to_sup.push(t),
            _ => return false,
        }
    }
    sub.states().all(|s| {
        let t = to_sup[s.0];
        let left = sub.choices(s);
        let right = sup.choices(t);
        let compatible = |mu: &SubDistribution, nu: &SubDistribution| {
            mu.iter().all(|(q, p)| nu.get(to_sup[q.0]) == Some(p))
        };
        has_injective_matching(left.len(), right.len(), |i, j| compatible(&left[i], &right[j]))
    })
}

/// Bipartite matching saturating the left side (augmenting paths).
fn has_injective_matching(
    left: usize,
    right: usize,
    compatible: impl Fn(usize, usize) -> bool,
) -> bool {
    if left > right {
        return false;
    }
    let adj: Vec<Vec<usize>> = (0..left)
        .map(|i| (0..right).filter(|&j| compatible(i, j)).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; right];
    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none() || augment(owner[j].unwrap(), adj, owner, seen) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    (0..left).all(|i| augment(i, &adj, &mut owner, &mut vec![false; right]))
}

/// Bits needed to write `|n|` in binary (at least one).
pub fn bit_length(n: &BigInt) -> u64 {
    n.bits().max(1)
}

/// Size of a probability: numerator bits plus denominator bits, lowest terms.
pub fn number_size(p: &Prob) -> u64 {
    bit_length(p.numer()) + bit_length(p.denom())
}

/// `|M|`: vertices plus labeled edges plus the size of every positive entry.
pub fn mdp_size(m: &Mdp) -> u64 {
    let numbers: u64 = m
        .states()
        .flat_map(|s| m.choices(s).iter())
        .flat_map(|mu| mu.iter())
        .map(|(_, p)| number_size(p))
        .sum();
    m.num_states() as u64 + m.edge_count() as u64 + numbers
}

/// Parses `a/b`, an integer, or a decimal like `0.75` into an exact rational.
pub fn parse_prob(text: &str) -> Option<Prob> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((n, d)) = text.split_once('/') {
        let n: BigInt = parse_digits(n)?;
        let d: BigInt = parse_digits(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(Prob::new(n, d));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        let int_part = if int.is_empty() { BigInt::zero() } else { parse_digits(int)? };
        let frac_part = if frac.is_empty() { BigInt::zero() } else { parse_digits(frac)? };
        let scale = num_traits::pow(BigInt::from(10u8), frac.len());
        return Some(Prob::new(int_part * &scale + frac_part, scale));
    }
    Some(Prob::from_integer(parse_digits(text)?))
}

fn parse_digits(s: &str) -> Option<BigInt> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Shorthand for `n/d`.
pub fn ratio(n: i64, d: i64) -> Prob {
    Prob::new(BigInt::from(n), BigInt::from(d))
}
