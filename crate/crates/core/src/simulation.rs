//! Canonical simulation relations between disjoint MDPs.
//!
//! A relation `R ⊆ Q × Q'` stands for the preorder `id_Q ∪ R ∪ id_Q'` on the
//! direct sum. The distribution ordering `μ ≼_R μ'` is decided without ever
//! enumerating `R`-closed sets: in general through an exact max-flow, and
//! through a per-state mass comparison when the images of `R` are disjoint.

use std::collections::{BTreeSet, VecDeque};

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::mdp::{Mdp, Prob, StateId, SubDistribution};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("relation images overlap at right state {0}")]
    OverlappingImages(StateId),
}

/// Relation between the states of a left and a right state space.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SimRelation {
    right_len: usize,
    images: Vec<BTreeSet<StateId>>,
}

impl SimRelation {
    pub fn empty(left_len: usize, right_len: usize) -> Self {
        Self {
            right_len,
            images: vec![BTreeSet::new(); left_len],
        }
    }

    /// `{(i, i)}` over `n` states on both sides.
    pub fn identity(n: usize) -> Self {
        let mut r = Self::empty(n, n);
        for i in 0..n {
            r.images[i].insert(StateId(i));
        }
        r
    }

    pub fn full(left_len: usize, right_len: usize) -> Self {
        let all: BTreeSet<StateId> = (0..right_len).map(StateId).collect();
        Self {
            right_len,
            images: vec![all; left_len],
        }
    }

    pub fn from_pairs(
        left_len: usize,
        right_len: usize,
        pairs: impl IntoIterator<Item = (StateId, StateId)>,
    ) -> Self {
        let mut r = Self::empty(left_len, right_len);
        for (a, b) in pairs {
            r.insert(a, b);
        }
        r
    }

    /// Relation given by a function `left → right`.
    pub fn from_fn(left_len: usize, right_len: usize, f: impl Fn(StateId) -> StateId) -> Self {
        Self::from_pairs(left_len, right_len, (0..left_len).map(|i| (StateId(i), f(StateId(i)))))
    }

    pub fn left_len(&self) -> usize {
        self.images.len()
    }

    pub fn right_len(&self) -> usize {
        self.right_len
    }

    pub fn insert(&mut self, a: StateId, b: StateId) {
        assert!(a.0 < self.images.len() && b.0 < self.right_len, "pair out of range");
        self.images[a.0].insert(b);
    }

    pub fn remove(&mut self, a: StateId, b: StateId) -> bool {
        self.images[a.0].remove(&b)
    }

    pub fn contains(&self, a: StateId, b: StateId) -> bool {
        self.images[a.0].contains(&b)
    }

    /// `R(a)`.
    pub fn image(&self, a: StateId) -> &BTreeSet<StateId> {
        &self.images[a.0]
    }

    pub fn set_image(&mut self, a: StateId, image: BTreeSet<StateId>) {
        assert!(image.iter().all(|b| b.0 < self.right_len));
        self.images[a.0] = image;
    }

    pub fn pairs(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        self.images
            .iter()
            .enumerate()
            .flat_map(|(a, img)| img.iter().map(move |b| (StateId(a), *b)))
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.images.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.images.iter().all(BTreeSet::is_empty)
    }

    pub fn is_subset(&self, other: &SimRelation) -> bool {
        self.images.len() == other.images.len()
            && self
                .images
                .iter()
                .zip(&other.images)
                .all(|(a, b)| a.is_subset(b))
    }

    /// `next ∘ self`: pairs `(a, c)` with `a self b` and `b next c`.
    pub fn then(&self, next: &SimRelation) -> SimRelation {
        assert_eq!(self.right_len, next.left_len(), "relations do not compose");
        let mut out = SimRelation::empty(self.left_len(), next.right_len);
        for (a, img) in self.images.iter().enumerate() {
            for b in img {
                out.images[a].extend(next.image(*b).iter().copied());
            }
        }
        out
    }

    /// Every left state has at least one image.
    pub fn is_total(&self) -> bool {
        self.images.iter().all(|i| !i.is_empty())
    }

    /// Every left state has at most one image.
    pub fn is_functional(&self) -> bool {
        self.images.iter().all(|i| i.len() <= 1)
    }

    /// Images of distinct left states never share a right state.
    pub fn has_disjoint_images(&self) -> bool {
        self.overlap().is_none()
    }

    fn overlap(&self) -> Option<StateId> {
        let mut owner = vec![false; self.right_len];
        for img in &self.images {
            for b in img {
                if owner[b.0] {
                    return Some(*b);
                }
                owner[b.0] = true;
            }
        }
        None
    }

    /// For a disjoint-image relation: the left state whose image holds each
    /// right state.
    pub(crate) fn owners(&self) -> Vec<Option<StateId>> {
        let mut owner = vec![None; self.right_len];
        for (a, img) in self.images.iter().enumerate() {
            for b in img {
                owner[b.0] = Some(StateId(a));
            }
        }
        owner
    }
}

/// Decides `μ ≼_R μ'` for `μ` over the left space and `μ'` over the right
/// space: a flow network routes each `μ(a)` along `R`-edges into capacities
/// `μ'(b)`; the ordering holds iff the maximum flow carries all of `μ`.
pub fn dist_leq(mu: &SubDistribution, mu2: &SubDistribution, r: &SimRelation) -> bool {
    if mu.is_zero() {
        return true;
    }
    if mu.mass() > mu2.mass() {
        return false;
    }
    let lefts: Vec<(StateId, &Prob)> = mu.iter().collect();
    let rights: Vec<(StateId, &Prob)> = mu2.iter().collect();
    // nodes: 0 = source, 1..=L lefts, L+1..=L+R rights, L+R+1 = sink
    let source = 0;
    let sink = lefts.len() + rights.len() + 1;
    let mut net = FlowNetwork::new(sink + 1);
    let total = mu.mass();
    for (i, (a, p)) in lefts.iter().enumerate() {
        net.add_edge(source, 1 + i, (*p).clone());
        for (j, (b, _)) in rights.iter().enumerate() {
            if r.contains(*a, *b) {
                net.add_edge(1 + i, 1 + lefts.len() + j, total.clone());
            }
        }
    }
    for (j, (_, p)) in rights.iter().enumerate() {
        net.add_edge(1 + lefts.len() + j, sink, (*p).clone());
    }
    net.max_flow(source, sink) == total
}

/// `μ ≼_R μ'` when the images of `R` are pairwise disjoint: compare
/// `μ(a) ≤ μ'(R(a))` state by state.
pub fn dist_leq_blockwise(
    mu: &SubDistribution,
    mu2: &SubDistribution,
    r: &SimRelation,
) -> Result<bool, SimError> {
    if let Some(b) = r.overlap() {
        return Err(SimError::OverlappingImages(b));
    }
    Ok(blockwise_unchecked(mu, mu2, r))
}

pub(crate) fn blockwise_unchecked(mu: &SubDistribution, mu2: &SubDistribution, r: &SimRelation) -> bool {
    mu.iter().all(|(a, p)| {
        let img = r.image(a);
        let covered: Prob = mu2.mass_where(|b| img.contains(&b));
        *p <= covered
    })
}

/// Checks that `r` is a canonical simulation of `left` by `right`.
pub fn is_canonical_simulation(left: &Mdp, right: &Mdp, r: &SimRelation) -> bool {
    if r.left_len() != left.num_states() || r.right_len() != right.num_states() {
        return false;
    }
    if !r.contains(left.init(), right.init()) {
        return false;
    }
    r.pairs().all(|(a, b)| pair_is_matched(left, right, r, a, b))
}

fn pair_is_matched(left: &Mdp, right: &Mdp, r: &SimRelation, a: StateId, b: StateId) -> bool {
    left.labels(a) == right.labels(b)
        && left
            .choices(a)
            .iter()
            .all(|mu| right.choices(b).iter().any(|nu| dist_leq(mu, nu, r)))
}

/// All pairs of label-equal states.
pub fn label_equal_pairs(left: &Mdp, right: &Mdp) -> SimRelation {
    SimRelation::from_pairs(
        left.num_states(),
        right.num_states(),
        left.states().flat_map(|a| {
            right
                .states()
                .filter(move |b| left.labels(a) == right.labels(*b))
                .map(move |b| (a, b))
        }),
    )
}

/// Greatest canonical simulation contained in `seed` (all label-equal pairs
/// when `None`), or `None` if it does not relate the initial states.
pub fn compute_simulation(left: &Mdp, right: &Mdp, seed: Option<&SimRelation>) -> Option<SimRelation> {
    let mut r = match seed {
        Some(s) => {
            let mut s = s.clone();
            for (a, b) in s.clone().pairs() {
                if left.labels(a) != right.labels(b) {
                    s.remove(a, b);
                }
            }
            s
        }
        None => label_equal_pairs(left, right),
    };
    loop {
        let stale: Vec<(StateId, StateId)> = r
            .pairs()
            .filter(|&(a, b)| !pair_is_matched(left, right, &r, a, b))
            .collect();
        if stale.is_empty() {
            break;
        }
        for (a, b) in stale {
            r.remove(a, b);
        }
    }
    r.contains(left.init(), right.init()).then_some(r)
}

/// Exact rational max-flow (Edmonds–Karp).
struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<Prob>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, c: Prob) {
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(Prob::zero());
    }

    fn max_flow(&mut self, s: usize, t: usize) -> Prob {
        let mut flow = Prob::zero();
        loop {
            let mut via: Vec<Option<usize>> = vec![None; self.adj.len()];
            let mut queue = VecDeque::from([s]);
            let mut reached = false;
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if v != s && via[v].is_none() && self.cap[e].is_positive() {
                        via[v] = Some(e);
                        if v == t {
                            reached = true;
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                return flow;
            }
            let mut bottleneck: Option<Prob> = None;
            let mut v = t;
            while let Some(e) = via[v] {
                bottleneck = Some(match bottleneck {
                    Some(b) if b <= self.cap[e] => b,
                    _ => self.cap[e].clone(),
                });
                v = self.to[e ^ 1];
            }
            let push = bottleneck.expect("path has an edge");
            let mut v = t;
            while let Some(e) = via[v] {
                self.cap[e] -= &push;
                self.cap[e ^ 1] += &push;
                v = self.to[e ^ 1];
            }
            flow += push;
        }
    }
}
