//! Graphviz export. Each state is a node labeled with its propositions and
//! each nonzero choice an intermediate point node; probability edges carry
//! exact rationals.

use std::fmt::Write as _;

use crate::abstraction::Quotient;
use crate::cegar::CounterExample;
use crate::mdp::Mdp;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn body(out: &mut String, m: &Mdp, prefix: &str) {
    for s in m.states() {
        let labels: Vec<&str> = m.labels(s).iter().map(String::as_str).collect();
        let shape = if s == m.init() { "doublecircle" } else { "circle" };
        let _ = writeln!(
            out,
            "  \"{prefix}{}\" [shape={shape}, label=\"{}\\n{{{}}}\"];",
            escape(m.name(s)),
            escape(m.name(s)),
            escape(&labels.join(","))
        );
    }
    for s in m.states() {
        let name = escape(m.name(s));
        for (i, mu) in m.choices(s).iter().enumerate() {
            if mu.is_zero() {
                continue;
            }
            let c = format!("{prefix}{name}/{i}");
            let _ = writeln!(out, "  \"{c}\" [shape=point];");
            let _ = writeln!(out, "  \"{prefix}{name}\" -> \"{c}\" [arrowhead=none];");
            for (t, p) in mu.iter() {
                let _ = writeln!(out, "  \"{c}\" -> \"{prefix}{}\" [label=\"{p}\"];", escape(m.name(t)));
            }
        }
    }
}

pub fn mdp_to_dot(m: &Mdp) -> String {
    let mut out = String::from("digraph mdp {\n");
    body(&mut out, m, "");
    out.push_str("}\n");
    out
}

/// The counterexample and the abstract model side by side, with the
/// relation drawn as dashed edges.
pub fn cex_to_dot(cex: &CounterExample, abs: &Mdp) -> String {
    let mut out = String::from("digraph cex {\n  subgraph cluster_e {\n  label=\"E\";\n");
    body(&mut out, &cex.e, "E:");
    out.push_str("  }\n  subgraph cluster_abs {\n  label=\"abstract\";\n");
    body(&mut out, abs, "A:");
    out.push_str("  }\n");
    for (a, b) in cex.r.pairs() {
        let _ = writeln!(
            out,
            "  \"E:{}\" -> \"A:{}\" [style=dashed, constraint=false];",
            escape(cex.e.name(a)),
            escape(abs.name(b))
        );
    }
    out.push_str("}\n");
    out
}

/// The abstract model, each node annotated with its block.
pub fn quotient_to_dot(q: &Quotient, concrete: &Mdp) -> String {
    let mut out = String::from("digraph quotient {\n");
    body(&mut out, &q.abs, "");
    for (i, block) in q.partition.blocks().iter().enumerate() {
        let names: Vec<&str> = block.iter().map(|s| concrete.name(*s)).collect();
        let _ = writeln!(
            out,
            "  \"{}\" [tooltip=\"{}\"];",
            escape(q.abs.name(crate::mdp::StateId(i))),
            escape(&names.join(" "))
        );
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_mdp;

    #[test]
    fn counts_nodes_and_edges() {
        let m = parse_mdp("mdp\nstate q0 init\nstate q1 labels {P1}\nstate q2 labels {P2}\nchoice q0 -> q1:3/4, q2:1/4\nchoice q0 -> q1:1/4, q2:3/4\n").unwrap();
        let dot = mdp_to_dot(&m);
        assert_eq!(dot.matches("shape=circle").count() + dot.matches("shape=doublecircle").count(), 3);
        assert_eq!(dot.matches("shape=point").count(), 2);
        assert_eq!(dot.matches("[label=\"").count(), 4);
        assert!(dot.contains("[label=\"3/4\"]"));
        assert_eq!(dot, mdp_to_dot(&m));
    }

    #[test]
    fn single_state() {
        let m = parse_mdp("mdp\nstate s init\n").unwrap();
        let dot = mdp_to_dot(&m);
        assert_eq!(dot.matches("shape=point").count(), 0);
        assert_eq!(dot.matches("->").count(), 0);
    }
}
