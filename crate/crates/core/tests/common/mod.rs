//! Seeded random generators shared by the integration suites.

#![allow(dead_code)]

use pcegar::mdp::ratio;
use pcegar::{Cmp, Formula, Mdp, MdpBuilder, Partition, PathFormula, Prob, StateId, SubDistribution};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const PROPS: [&str; 2] = ["a", "b"];

#[derive(Clone, Copy, Debug)]
pub struct MdpShape {
    pub max_states: usize,
    pub max_choices: usize,
    pub max_support: usize,
    /// Chance that a measure loses some mass.
    pub sub_stochastic: f64,
}

impl Default for MdpShape {
    fn default() -> Self {
        MdpShape {
            max_states: 5,
            max_choices: 2,
            max_support: 2,
            sub_stochastic: 0.2,
        }
    }
}

pub fn random_measure(rng: &mut TestRng, n: usize, max_support: usize, sub: f64) -> SubDistribution {
    let k = rng.gen_range(1..=max_support.min(n));
    let mut targets: Vec<usize> = (0..n).collect();
    targets.shuffle(rng);
    targets.truncate(k);
    let weights: Vec<i64> = (0..k).map(|_| rng.gen_range(1..=3)).collect();
    let mut denom: i64 = weights.iter().sum();
    if rng.gen_bool(sub) {
        denom += rng.gen_range(1..=2);
    }
    SubDistribution::new(
        targets
            .into_iter()
            .zip(weights)
            .map(|(t, w)| (StateId(t), ratio(w, denom))),
    )
    .expect("mass at most one")
}

pub fn random_mdp(rng: &mut TestRng, shape: MdpShape) -> Mdp {
    let n = rng.gen_range(1..=shape.max_states);
    let mut b = MdpBuilder::new();
    for p in PROPS {
        b.declare_proposition(p);
    }
    for i in 0..n {
        let labels: Vec<&str> = PROPS.iter().copied().filter(|_| rng.gen_bool(0.35)).collect();
        b.add_state(&format!("s{i}"), labels).unwrap();
    }
    for i in 0..n {
        let c = rng.gen_range(1..=shape.max_choices);
        for _ in 0..c {
            let mu = random_measure(rng, n, shape.max_support, shape.sub_stochastic);
            b.add_choice(StateId(i), mu).unwrap();
        }
    }
    b.set_init(StateId(0));
    b.build().unwrap()
}

/// Random partition whose blocks only merge states with equal labels.
pub fn random_partition(rng: &mut TestRng, m: &Mdp) -> Partition {
    let coarse = pcegar::coarsest_compatible(m);
    let mut assignment = vec![0; m.num_states()];
    let mut next = 0;
    for block in coarse.blocks() {
        let pieces = rng.gen_range(1..=block.len());
        for s in block {
            assignment[s.0] = next + rng.gen_range(0..pieces);
        }
        next += pieces;
    }
    Partition::from_assignment(&assignment)
}

pub const BOUNDS: [(i64, i64); 6] = [(0, 1), (1, 4), (1, 3), (1, 2), (3, 4), (1, 1)];

fn bound(rng: &mut TestRng) -> Prob {
    let (n, d) = *BOUNDS.choose(rng).unwrap();
    ratio(n, d)
}

fn literal(rng: &mut TestRng) -> Formula {
    match rng.gen_range(0..6) {
        0 => Formula::True,
        1 => Formula::False,
        2 | 3 => Formula::prop(PROPS.choose(rng).unwrap()),
        _ => Formula::NotProp(PROPS.choose(rng).unwrap().to_string()),
    }
}

fn cmp(rng: &mut TestRng, weak: bool) -> Cmp {
    if weak || rng.gen_bool(0.5) {
        Cmp::Le
    } else {
        Cmp::Lt
    }
}

fn path(rng: &mut TestRng, depth: usize, weak: bool) -> PathFormula {
    if rng.gen_bool(0.4) {
        PathFormula::Next(liveness(rng, depth, weak))
    } else {
        PathFormula::Until(liveness(rng, depth, weak), liveness(rng, depth, weak))
    }
}

/// Safety formula of nesting depth at most `depth`; `weak` restricts the
/// comparisons to `<=`.
pub fn safety(rng: &mut TestRng, depth: usize, weak: bool) -> Formula {
    if depth == 0 {
        return literal(rng);
    }
    match rng.gen_range(0..10) {
        0 | 1 => Formula::and(safety(rng, depth - 1, weak), safety(rng, depth - 1, weak)),
        2 | 3 => Formula::or(safety(rng, depth - 1, weak), safety(rng, depth - 1, weak)),
        4 => literal(rng),
        _ => Formula::prob(cmp(rng, weak), bound(rng), path(rng, depth - 1, weak)),
    }
}

pub fn liveness(rng: &mut TestRng, depth: usize, weak: bool) -> Formula {
    if depth == 0 {
        return literal(rng);
    }
    match rng.gen_range(0..10) {
        0 | 1 => Formula::and(liveness(rng, depth - 1, weak), liveness(rng, depth - 1, weak)),
        2 | 3 => Formula::or(liveness(rng, depth - 1, weak), liveness(rng, depth - 1, weak)),
        4 | 5 => literal(rng),
        _ => Formula::not_prob(cmp(rng, weak), bound(rng), path(rng, depth - 1, weak)),
    }
}

/// Safety formula whose top connective is a probability bound.
pub fn top_level_safety(rng: &mut TestRng, depth: usize, weak: bool) -> Formula {
    Formula::prob(cmp(rng, weak), bound(rng), path(rng, depth.saturating_sub(1), weak))
}

/// `m` with every listed edge zeroed.
pub fn without_edges(m: &Mdp, edges: impl IntoIterator<Item = pcegar::Edge>) -> Mdp {
    edges.into_iter().fold(m.clone(), |acc, e| acc.with_edge_removed(e))
}
