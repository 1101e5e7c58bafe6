//! Partitions compatible with an MDP, lifting of measures, quotient
//! (abstract) MDPs and the abstraction, concretization and refinement
//! relations between them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::mdp::{Mdp, MdpBuilder, StateId, SubDistribution};
use crate::simulation::SimRelation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("state {0} appears in more than one block")]
    Overlap(usize),
    #[error("state {0} is out of range")]
    OutOfRange(usize),
    #[error("block contains an empty set")]
    EmptyBlock,
    #[error("states {0} and {1} share a block but have different labels")]
    Incompatible(String, String),
    #[error("partition covers {got} states, model has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("fine block containing state {0} is not inside one coarse block")]
    NotRefinement(usize),
}

/// Equivalence relation on `0..n`, stored as disjoint blocks.
///
/// Blocks are kept in canonical order (ascending minimum member), so two
/// partitions describing the same equivalence are equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    blocks: Vec<Vec<StateId>>,
    block_of: Vec<usize>,
}

impl Partition {
    /// Builds a partition of `0..n` from the given blocks; states listed in
    /// no block become singletons.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<StateId>>) -> Result<Self, AbstractionError> {
        let mut seen = vec![false; n];
        let mut all = Vec::with_capacity(blocks.len());
        for block in blocks {
            if block.is_empty() {
                return Err(AbstractionError::EmptyBlock);
            }
            for s in &block {
                if s.0 >= n {
                    return Err(AbstractionError::OutOfRange(s.0));
                }
                if seen[s.0] {
                    return Err(AbstractionError::Overlap(s.0));
                }
                seen[s.0] = true;
            }
            all.push(block);
        }
        for (i, covered) in seen.iter().enumerate() {
            if !covered {
                all.push(vec![StateId(i)]);
            }
        }
        Ok(Self::canonical(n, all))
    }

    fn canonical(n: usize, mut blocks: Vec<Vec<StateId>>) -> Self {
        for b in &mut blocks {
            b.sort();
            b.dedup();
        }
        blocks.sort_by_key(|b| b[0]);
        let mut block_of = vec![usize::MAX; n];
        for (i, b) in blocks.iter().enumerate() {
            for s in b {
                block_of[s.0] = i;
            }
        }
        Partition { blocks, block_of }
    }

    /// All singletons.
    pub fn identity(n: usize) -> Self {
        Self::canonical(n, (0..n).map(|i| vec![StateId(i)]).collect())
    }

    /// Groups states by block index given per state.
    pub fn from_assignment(assignment: &[usize]) -> Self {
        let mut groups: BTreeMap<usize, Vec<StateId>> = BTreeMap::new();
        for (s, &k) in assignment.iter().enumerate() {
            groups.entry(k).or_default().push(StateId(s));
        }
        Self::canonical(assignment.len(), groups.into_values().collect())
    }

    pub fn num_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<StateId>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[StateId] {
        &self.blocks[i]
    }

    /// Index of the block containing `s`.
    pub fn block_of(&self, s: StateId) -> usize {
        self.block_of[s.0]
    }

    pub fn same_block(&self, a: StateId, b: StateId) -> bool {
        self.block_of[a.0] == self.block_of[b.0]
    }

    /// Checks that all states of a block carry the same labels.
    pub fn check_compatible(&self, m: &Mdp) -> Result<(), AbstractionError> {
        if m.num_states() != self.num_states() {
            return Err(AbstractionError::SizeMismatch {
                expected: m.num_states(),
                got: self.num_states(),
            });
        }
        for b in &self.blocks {
            let first = b[0];
            if let Some(other) = b.iter().find(|s| m.labels(**s) != m.labels(first)) {
                return Err(AbstractionError::Incompatible(
                    m.name(first).to_string(),
                    m.name(*other).to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_compatible(&self, m: &Mdp) -> bool {
        self.check_compatible(m).is_ok()
    }

    /// Every block of `self` lies inside a block of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        self.num_states() == coarse.num_states()
            && self
                .blocks
                .iter()
                .all(|b| b.iter().all(|s| coarse.same_block(*s, b[0])))
    }

    /// Splits blocks by the given sets: each `(block, set)` replaces the block
    /// by its intersection with `set` and the remainder. Empty halves are
    /// dropped; several splits of one block compose.
    pub fn split(&self, splits: &[(usize, BTreeSet<StateId>)]) -> Partition {
        let mut parts: Vec<Vec<Vec<StateId>>> = self.blocks.iter().map(|b| vec![b.clone()]).collect();
        for (block, set) in splits {
            let pieces = std::mem::take(&mut parts[*block]);
            for piece in pieces {
                let (inside, outside): (Vec<StateId>, Vec<StateId>) =
                    piece.into_iter().partition(|s| set.contains(s));
                parts[*block].extend([inside, outside].into_iter().filter(|p| !p.is_empty()));
            }
        }
        Self::canonical(self.num_states(), parts.into_iter().flatten().collect())
    }
}

/// Blocks are the label-equality classes.
pub fn coarsest_compatible(m: &Mdp) -> Partition {
    let mut ids: BTreeMap<&BTreeSet<String>, usize> = BTreeMap::new();
    let assignment: Vec<usize> = m
        .states()
        .map(|s| {
            let next = ids.len();
            *ids.entry(m.labels(s)).or_insert(next)
        })
        .collect();
    Partition::from_assignment(&assignment)
}

/// `[μ]_≡`: push `mu` forward onto block indices.
pub fn lift(mu: &SubDistribution, part: &Partition) -> SubDistribution {
    SubDistribution::new(mu.iter().map(|(s, p)| (StateId(part.block_of(s)), p.clone())))
        .expect("lifting preserves mass")
}

/// Abstract MDP together with `α_≡` (concrete → abstract) and `γ_≡`
/// (abstract → concrete).
#[derive(Clone, Debug)]
pub struct Quotient {
    pub abs: Mdp,
    pub alpha: SimRelation,
    pub gamma: SimRelation,
    pub partition: Partition,
}

/// Display name of a block: the member name for singletons, `[a|b|c]`
/// otherwise.
pub fn block_name(m: &Mdp, block: &[StateId]) -> String {
    if let [single] = block {
        m.name(*single).to_string()
    } else {
        let names: Vec<&str> = block.iter().map(|s| m.name(*s)).collect();
        format!("[{}]", names.join("|"))
    }
}

/// `M/≡`. Abstract choices at a block are the distinct liftings of its
/// members' choices, ordered by first producer (member index, choice index).
pub fn quotient(m: &Mdp, part: &Partition) -> Result<Quotient, AbstractionError> {
    part.check_compatible(m)?;
    let k = part.num_blocks();
    let mut b = MdpBuilder::new();
    let mut used: HashSet<String> = HashSet::new();
    for block in part.blocks() {
        let mut name = block_name(m, block);
        while used.contains(&name) {
            name.push('\'');
        }
        used.insert(name.clone());
        b.add_state(&name, m.labels(block[0]).iter().cloned())
            .expect("names made unique");
    }
    for p in m.alphabet() {
        b.declare_proposition(p);
    }
    for (i, block) in part.blocks().iter().enumerate() {
        let mut seen: HashSet<SubDistribution> = HashSet::new();
        for s in block {
            for mu in m.choices(*s) {
                let lifted = lift(mu, part);
                if seen.insert(lifted.clone()) {
                    b.add_choice(StateId(i), lifted).expect("in range");
                }
            }
        }
    }
    b.set_init(StateId(part.block_of(m.init())));
    let abs = b.build().expect("quotient is well formed");
    let alpha = SimRelation::from_fn(m.num_states(), k, |s| StateId(part.block_of(s)));
    let gamma = SimRelation::from_pairs(
        k,
        m.num_states(),
        part.blocks()
            .iter()
            .enumerate()
            .flat_map(|(i, bl)| bl.iter().map(move |s| (StateId(i), *s))),
    );
    Ok(Quotient {
        abs,
        alpha,
        gamma,
        partition: part.clone(),
    })
}

/// `α_{≃,≡}`: maps each block of `fine` to the block of `coarse` containing
/// it.
pub fn refinement_relation(fine: &Partition, coarse: &Partition) -> Result<SimRelation, AbstractionError> {
    if fine.num_states() != coarse.num_states() {
        return Err(AbstractionError::SizeMismatch {
            expected: coarse.num_states(),
            got: fine.num_states(),
        });
    }
    if let Some(b) = fine
        .blocks()
        .iter()
        .find(|b| b.iter().any(|s| !coarse.same_block(*s, b[0])))
    {
        return Err(AbstractionError::NotRefinement(b[0].0));
    }
    Ok(SimRelation::from_fn(fine.num_blocks(), coarse.num_blocks(), |i| {
        StateId(coarse.block_of(fine.block(i.0)[0]))
    }))
}
