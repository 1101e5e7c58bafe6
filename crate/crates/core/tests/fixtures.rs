//! Worked examples on the bundled model files.

use std::collections::BTreeSet;

use pcegar::abstraction::{coarsest_compatible, refinement_relation};
use pcegar::cegar::{check_validity, gen_min_cex, refine, CegarConfig, CexOptions, IterationOutcome, Validity};
use pcegar::dot::mdp_to_dot;
use pcegar::formula::sub_and_path_formulas;
use pcegar::io::{parse_mdp, parse_partition};
use pcegar::mdp::{bar_copy, direct_sum, is_contained, mdp_size, post, ratio, unroll, Side};
use pcegar::modelcheck::extract_scheduler;
use pcegar::simulation::SimRelation;
use pcegar::{
    cegar_loop, check, classify, compute_simulation, dist_leq, is_canonical_simulation, lift, max_prob, parse_formula,
    quotient, Cmp, Formula, Mdp, Partition, PathFormula, StateId, Verdict,
};

const NO_DTMC: &str = include_str!("../../../models/no_dtmc.mdp");
const CHAIN: &str = include_str!("../../../models/chain.mdp");
const KRIPKE: &str = include_str!("../../../models/kripke.mdp");
const KRIPKE_PART: &str = include_str!("../../../models/kripke.part");

const TWO_SIDED_NEXT: &str = "P<3/4[X (P1 & !P2)] | P<3/4[X (!P1 & P2)]";

fn no_dtmc() -> Mdp {
    parse_mdp(NO_DTMC).unwrap()
}

fn chain() -> Mdp {
    parse_mdp(CHAIN).unwrap()
}

fn kripke() -> (Mdp, Partition) {
    let m = parse_mdp(KRIPKE).unwrap();
    let p = parse_partition(KRIPKE_PART, &m).unwrap();
    (m, p)
}

fn id(m: &Mdp, name: &str) -> StateId {
    m.state_by_name(name).unwrap()
}

fn is_acyclic(m: &Mdp) -> bool {
    // Kahn's algorithm on the successor graph
    let mut indeg = vec![0usize; m.num_states()];
    for s in m.states() {
        for t in m.successors(s) {
            indeg[t.0] += 1;
        }
    }
    let mut ready: Vec<StateId> = m.states().filter(|s| indeg[s.0] == 0).collect();
    let mut seen = 0;
    while let Some(s) = ready.pop() {
        seen += 1;
        for t in m.successors(s) {
            indeg[t.0] -= 1;
            if indeg[t.0] == 0 {
                ready.push(t);
            }
        }
    }
    seen == m.num_states()
}

#[test]
fn no_dtmc_model_shape() {
    let m = no_dtmc();
    assert_eq!(m.num_states(), 3);
    assert_eq!(m.choices(m.init()).len(), 2);
    let mu1 = &m.choices(id(&m, "q0"))[0];
    assert_eq!(post(mu1), BTreeSet::from([id(&m, "q1"), id(&m, "q2")]));
    assert_eq!(mdp_size(&m), 25);
    let dot = mdp_to_dot(&m);
    assert_eq!(dot.matches("shape=circle").count() + dot.matches("shape=doublecircle").count(), 3);
    assert_eq!(dot.matches("shape=point").count(), 2);
    assert_eq!(dot.matches("[label=\"").count(), 4);
}

#[test]
fn no_dtmc_containment_and_copy() {
    let m = no_dtmc();
    let q0 = id(&m, "q0");
    assert!(is_contained(&m.with_choice_deleted(q0, 1), &m));
    assert!(!is_contained(&m, &m.with_choice_deleted(q0, 1)));
    let (copy, inj) = bar_copy(&m);
    assert!(is_canonical_simulation(&copy, &m, &inj));
    let back = SimRelation::from_pairs(m.num_states(), copy.num_states(), inj.pairs().map(|(a, b)| (b, a)));
    assert!(is_canonical_simulation(&m, &copy, &back));
}

#[test]
fn no_dtmc_formula_and_values() {
    let m = no_dtmc();
    let psi = parse_formula(TWO_SIDED_NEXT).unwrap();
    assert!(matches!(psi, Formula::Or(..)));
    let c = classify(&psi);
    assert!(c.safety && !c.weak_safety);
    assert!(!check(&m, &psi));
    let Formula::Or(left, _) = &psi else { unreachable!() };
    let path = left.flat_path().unwrap();
    assert_eq!(max_prob(&m, path)[0], ratio(3, 4));
    assert_eq!(extract_scheduler(&m, path).unwrap().choice(id(&m, "q0")), 0);
}

#[test]
fn no_dtmc_distributions() {
    let m = no_dtmc();
    let q0 = id(&m, "q0");
    let (mu1, mu2) = (&m.choices(q0)[0], &m.choices(q0)[1]);
    let identity = SimRelation::identity(3);
    assert!(!dist_leq(mu1, mu2, &identity));
    assert!(dist_leq(mu1, mu1, &identity));
    let part = coarsest_compatible(&m);
    let q = quotient(&m, &part).unwrap();
    assert!(dist_leq(mu1, &lift(mu1, &part), &q.alpha));
}

#[test]
fn no_dtmc_counterexample_keeps_both_choices() {
    let m = no_dtmc();
    let psi = parse_formula(TWO_SIDED_NEXT).unwrap();
    let cex = gen_min_cex(&m, &psi, &CexOptions::default()).unwrap();
    assert_eq!(cex.e.choices(cex.e.init()).len(), 2);
    assert_eq!(cex.size(), mdp_size(&cex.e) + cex.r.len() as u64);
    let run = cegar_loop(&m, &psi, &coarsest_compatible(&m), &CegarConfig::default()).unwrap();
    assert!(matches!(run.verdict, Verdict::Violated { .. }));
    assert_eq!(run.trace.len(), 1);
}

#[test]
fn chain_values_and_unrolling() {
    let m = chain();
    let reach = parse_formula("P<1[true U P]").unwrap();
    let c = classify(&reach);
    assert!(c.safety && !c.weak_safety);
    assert_eq!(max_prob(&m, reach.flat_path().unwrap())[id(&m, "q1").0], ratio(1, 1));
    assert!(!check(&m, &reach));
    let u = unroll(&m, id(&m, "q1"), 2);
    assert_eq!(u.num_states(), 7);
    assert!(is_acyclic(&u));
    assert!(compute_simulation(&u, &m, None).is_some());
}

#[test]
fn chain_direct_sum() {
    let m = chain();
    let sum = direct_sum(&m, &m, Side::Left(m.init()));
    let q1 = id(&m, "q1");
    let mu = &m.choices(id(&m, "q2"))[0];
    let shifted = &sum.choices(id(&m, "q2"))[0];
    assert_eq!(shifted.prob(q1), mu.prob(q1));
    assert_eq!(shifted.prob(StateId(q1.0 + m.num_states())), ratio(0, 1));
}

#[test]
fn nested_path_formulas() {
    let f = parse_formula("!P<=1/2[p U !P<=0[X q]]").unwrap();
    assert!(classify(&f).strict_liveness);
    let (_, paths) = sub_and_path_formulas(&f).unwrap();
    let next_q = PathFormula::Next(Formula::prop("q"));
    let inner = Formula::not_prob(Cmp::Le, ratio(0, 1), next_q.clone());
    let until = PathFormula::Until(Formula::prop("p"), inner);
    assert_eq!(paths, vec![next_q, until]);
}

#[test]
fn kripke_quotient() {
    let (m, part) = kripke();
    assert_eq!(part.num_blocks(), 8);
    let q = quotient(&m, &part).unwrap();
    assert_eq!(q.abs.num_states(), 8);
    assert!(is_canonical_simulation(&m, &q.abs, &q.alpha));
    let q2 = id(&m, "q2");
    let lifted = lift(&m.choices(q2)[0], &part);
    assert_eq!(lifted, pcegar::SubDistribution::dirac(StateId(part.block_of(id(&m, "q9")))));
    let names: BTreeSet<&str> = q.abs.states().map(|s| q.abs.name(s)).collect();
    for block in ["[q0|q1|q3]", "q2", "q4", "[q5|q6]", "[q7|q8]", "q9", "q10", "q11"] {
        assert!(names.contains(block), "{block}");
    }
    let coarse = coarsest_compatible(&m);
    assert_eq!(coarse.num_blocks(), 2);
    assert!(coarse.blocks().contains(&vec![id(&m, "q11")]));
    assert!(!check(&m, &parse_formula("P<=0[true U P]").unwrap()));
}

#[test]
fn kripke_split_relation() {
    let (m, part) = kripke();
    let b = part.block_of(id(&m, "q5"));
    let fine = part.split(&[(b, BTreeSet::from([id(&m, "q6")]))]);
    assert_eq!(fine.num_blocks(), 9);
    let rel = refinement_relation(&fine, &part).unwrap();
    let q5 = StateId(fine.block_of(id(&m, "q5")));
    let q6 = StateId(fine.block_of(id(&m, "q6")));
    assert_eq!(rel.image(q5), rel.image(q6));
    assert_eq!(rel.image(q5), &BTreeSet::from([StateId(b)]));
}

#[test]
fn kripke_default_run() {
    let (m, part) = kripke();
    let psi = parse_formula("P<=0[true U P]").unwrap();
    let run = cegar_loop(&m, &psi, &part, &CegarConfig::default()).unwrap();
    assert!(matches!(run.verdict, Verdict::Violated { .. }));
    assert!(run.trace.len() >= 2 && run.trace.len() <= m.num_states());
    // the first invalid counterexample fails at the initial block itself
    let IterationOutcome::Invalid(w) = &run.trace[0].outcome else {
        panic!("first counterexample should be spurious")
    };
    let cex = run.trace[0].cex.as_ref().unwrap();
    assert_eq!(w.state, cex.e.init());
    let next = refine(&part, cex, w).unwrap();
    let (q0, q1, q3) = (id(&m, "q0"), id(&m, "q1"), id(&m, "q3"));
    assert!(next.blocks().contains(&vec![q0, q1]));
    assert!(next.blocks().contains(&vec![q3]));
    assert_eq!(&run.trace[1].partition, &next);
    // each spurious counterexample is rejected by the offline check too
    for rec in &run.trace {
        if let (Some(cex), IterationOutcome::Invalid(_)) = (&rec.cex, &rec.outcome) {
            assert!(matches!(check_validity(&m, &rec.partition, cex).unwrap(), Validity::Invalid(_)));
        }
    }
}
