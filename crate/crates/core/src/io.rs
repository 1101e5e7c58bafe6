//! Text formats: models, partitions, relations and counterexample
//! directories.
//!
//! Model files are line oriented with `#` comments:
//!
//! ```text
//! mdp
//! state q0 init labels {}
//! state q1 labels {P1}
//! state q2 labels {P2}
//! choice q0 -> q1:3/4, q2:1/4
//! choice q0 -> q1:1/4, q2:3/4
//! ```
//!
//! A `dtmc` header allows at most one choice per state. States without
//! `choice` lines get the all-zero measure. Partition files hold one
//! `block s1 s2 ...` line per block; unlisted states become singletons.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::abstraction::{AbstractionError, Partition};
use crate::cegar::CounterExample;
use crate::mdp::{parse_prob, Mdp, MdpBuilder, MdpError, StateId, SubDistribution};
use crate::simulation::SimRelation;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown state `{name}`")]
    UnknownState { line: usize, name: String },
    #[error("line {line}: duplicate state `{name}`")]
    DuplicateState { line: usize, name: String },
    #[error("line {line}: bad probability `{text}`")]
    BadProbability { line: usize, text: String },
    #[error("line {line}: {source}")]
    Measure { line: usize, source: MdpError },
    #[error("line {line}: second initial state `{name}`")]
    DuplicateInit { line: usize, name: String },
    #[error("no initial state declared")]
    MissingInit,
    #[error("model declares no states")]
    Empty,
    #[error("line {line}: dtmc state `{name}` has more than one choice")]
    DtmcChoices { line: usize, name: String },
    #[error("line {line}: state `{name}` already belongs to a block")]
    Overlap { line: usize, name: String },
    #[error("partition: {0}")]
    Partition(#[from] AbstractionError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

/// Strips a `#` comment and surrounding whitespace.
fn content(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

fn is_name(tok: &str) -> bool {
    !tok.is_empty() && !tok.contains([':', ',', '{', '}']) && !tok.chars().any(char::is_whitespace)
}

fn parse_labels(line: usize, text: &str) -> Result<Vec<String>, ParseError> {
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| syntax(line, "labels must be written `{a, b}`"))?;
    Ok(inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect())
}

struct ChoiceLine<'t> {
    line: usize,
    source: &'t str,
    targets: Vec<(&'t str, &'t str)>,
}

/// Parses the model format.
pub fn parse_mdp(text: &str) -> Result<Mdp, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, content(l))).filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(ParseError::Empty)?;
    let dtmc = match header {
        "mdp" => false,
        "dtmc" => true,
        other => return Err(syntax(hline, format!("expected `mdp` or `dtmc`, found `{other}`"))),
    };
    let mut b = MdpBuilder::new();
    let mut init: Option<StateId> = None;
    let mut choices: Vec<ChoiceLine<'_>> = Vec::new();
    for (line, l) in lines {
        let (kw, rest) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
        match kw {
            "state" => {
                let rest = rest.trim();
                let (name, mut tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
                if !is_name(name) {
                    return Err(syntax(line, format!("bad state name `{name}`")));
                }
                let mut is_init = false;
                let mut labels = Vec::new();
                loop {
                    tail = tail.trim_start();
                    if tail.is_empty() {
                        break;
                    }
                    if let Some(t) = tail.strip_prefix("init") {
                        if !t.is_empty() && !t.starts_with(char::is_whitespace) {
                            return Err(syntax(line, format!("unexpected `{tail}`")));
                        }
                        is_init = true;
                        tail = t;
                    } else if let Some(t) = tail.strip_prefix("labels") {
                        let end = t.find('}').ok_or_else(|| syntax(line, "unterminated label set"))?;
                        labels = parse_labels(line, &t[..=end])?;
                        tail = &t[end + 1..];
                    } else {
                        return Err(syntax(line, format!("unexpected `{tail}`")));
                    }
                }
                let id = b.add_state(name, labels).map_err(|_| ParseError::DuplicateState {
                    line,
                    name: name.to_string(),
                })?;
                if is_init {
                    if init.is_some() {
                        return Err(ParseError::DuplicateInit {
                            line,
                            name: name.to_string(),
                        });
                    }
                    init = Some(id);
                }
            }
            "choice" => {
                let (source, targets) = rest
                    .split_once("->")
                    .ok_or_else(|| syntax(line, "expected `choice NAME -> T:p, ...`"))?;
                let mut parsed = Vec::new();
                for entry in targets.split(',').map(str::trim).filter(|e| !e.is_empty()) {
                    let (t, p) = entry
                        .rsplit_once(':')
                        .ok_or_else(|| syntax(line, format!("expected `target:probability`, found `{entry}`")))?;
                    parsed.push((t.trim(), p.trim()));
                }
                choices.push(ChoiceLine {
                    line,
                    source: source.trim(),
                    targets: parsed,
                });
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    let lookup = |b: &MdpBuilder, line: usize, name: &str| {
        b.state(name).ok_or_else(|| ParseError::UnknownState {
            line,
            name: name.to_string(),
        })
    };
    for c in choices {
        let s = lookup(&b, c.line, c.source)?;
        let mut entries = Vec::with_capacity(c.targets.len());
        for (t, p) in c.targets {
            let t = lookup(&b, c.line, t)?;
            let p = parse_prob(p).ok_or_else(|| ParseError::BadProbability {
                line: c.line,
                text: p.to_string(),
            })?;
            entries.push((t, p));
        }
        let mu = SubDistribution::new(entries).map_err(|source| ParseError::Measure { line: c.line, source })?;
        if dtmc && b.num_choices(s) > 0 {
            return Err(ParseError::DtmcChoices {
                line: c.line,
                name: c.source.to_string(),
            });
        }
        b.add_choice(s, mu).expect("states resolved");
    }
    b.set_init(init.ok_or(ParseError::MissingInit)?);
    b.build().map_err(|e| match e {
        MdpError::Empty => ParseError::Empty,
        _ => ParseError::MissingInit,
    })
}

/// Prints `m` in the model format; `dtmc` if every state has one choice.
/// All-zero choices are omitted unless a state has other choices.
pub fn print_mdp(m: &Mdp) -> String {
    let mut out = String::new();
    out.push_str(if m.is_dtmc() { "dtmc\n" } else { "mdp\n" });
    for s in m.states() {
        let labels: Vec<&str> = m.labels(s).iter().map(String::as_str).collect();
        let init = if s == m.init() { " init" } else { "" };
        let _ = writeln!(out, "state {}{} labels {{{}}}", m.name(s), init, labels.join(", "));
    }
    for s in m.states() {
        let cs = m.choices(s);
        if cs.len() == 1 && cs[0].is_zero() {
            continue;
        }
        for mu in cs {
            let entries: Vec<String> = mu.iter().map(|(t, p)| format!("{}:{}", m.name(t), p)).collect();
            let sep = if entries.is_empty() { "" } else { " " };
            let _ = writeln!(out, "choice {} ->{}{}", m.name(s), sep, entries.join(", "));
        }
    }
    out
}

/// Parses `block` lines against `m` and checks label compatibility.
pub fn parse_partition(text: &str, m: &Mdp) -> Result<Partition, ParseError> {
    let mut blocks = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = content(raw);
        if l.is_empty() {
            continue;
        }
        let mut toks = l.split_whitespace();
        if toks.next() != Some("block") {
            return Err(syntax(line, "expected `block NAME ...`"));
        }
        let mut block = Vec::new();
        for name in toks {
            let s = m.state_by_name(name).ok_or_else(|| ParseError::UnknownState {
                line,
                name: name.to_string(),
            })?;
            if !seen.insert(s) {
                return Err(ParseError::Overlap {
                    line,
                    name: name.to_string(),
                });
            }
            block.push(s);
        }
        if block.is_empty() {
            return Err(syntax(line, "empty block"));
        }
        blocks.push(block);
    }
    let p = Partition::from_blocks(m.num_states(), blocks)?;
    p.check_compatible(m)?;
    Ok(p)
}

/// One `block` line per block, singletons included.
pub fn print_partition(p: &Partition, m: &Mdp) -> String {
    let mut out = String::new();
    for b in p.blocks() {
        let names: Vec<&str> = b.iter().map(|s| m.name(*s)).collect();
        let _ = writeln!(out, "block {}", names.join(" "));
    }
    out
}

/// Tab-separated `left<TAB>right` name pairs.
pub fn print_relation(r: &SimRelation, left: &Mdp, right: &Mdp) -> String {
    let mut out = String::new();
    for (a, b) in r.pairs() {
        let _ = writeln!(out, "{}\t{}", left.name(a), right.name(b));
    }
    out
}

pub fn parse_relation(text: &str, left: &Mdp, right: &Mdp) -> Result<SimRelation, ParseError> {
    let mut r = SimRelation::empty(left.num_states(), right.num_states());
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = content(raw);
        if l.is_empty() {
            continue;
        }
        let (a, b) = l
            .split_once('\t')
            .ok_or_else(|| syntax(line, "expected `left<TAB>right`"))?;
        let resolve = |m: &Mdp, name: &str| {
            m.state_by_name(name.trim()).ok_or_else(|| ParseError::UnknownState {
                line,
                name: name.trim().to_string(),
            })
        };
        r.insert(resolve(left, a)?, resolve(right, b)?);
    }
    Ok(r)
}

fn read(path: &Path) -> Result<String, ParseError> {
    fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), ParseError> {
    fs::write(path, text).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_mdp(path: &Path) -> Result<Mdp, ParseError> {
    parse_mdp(&read(path)?)
}

pub fn read_partition(path: &Path, m: &Mdp) -> Result<Partition, ParseError> {
    parse_partition(&read(path)?, m)
}

/// Writes `cex.mdp` and `rel.tsv` into `dir`, creating it if needed.
pub fn write_cex_dir(dir: &Path, cex: &CounterExample, abs: &Mdp) -> Result<(), ParseError> {
    fs::create_dir_all(dir).map_err(|source| ParseError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write(&dir.join("cex.mdp"), &print_mdp(&cex.e))?;
    write(&dir.join("rel.tsv"), &print_relation(&cex.r, &cex.e, abs))
}

/// Reads a counterexample directory; relation names resolve against `abs`.
pub fn read_cex_dir(dir: &Path, abs: &Mdp) -> Result<CounterExample, ParseError> {
    let e = read_mdp(&dir.join("cex.mdp"))?;
    let r = parse_relation(&read(&dir.join("rel.tsv"))?, &e, abs)?;
    Ok(CounterExample { e, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ratio;

    const NO_DTMC: &str = "mdp
state q0 init labels {}
state q1 labels {P1}
state q2 labels {P2}
choice q0 -> q1:3/4, q2:1/4
choice q0 -> q1:1/4, q2:3/4
";

    #[test]
    fn parses_reference_model() {
        let m = parse_mdp(NO_DTMC).unwrap();
        assert_eq!(m.num_states(), 3);
        assert_eq!(m.choices(StateId(0)).len(), 2);
        assert_eq!(m.choices(StateId(0))[0].prob(StateId(1)), ratio(3, 4));
        assert!(m.choices(StateId(1))[0].is_zero());
        assert_eq!(print_mdp(&m), NO_DTMC);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let bad_mass = "mdp\nstate q0 init\nstate q1\nstate q2\nchoice q0 -> q1:3/4, q2:3/4\n";
        let err = parse_mdp(bad_mass).unwrap_err();
        assert!(matches!(err, ParseError::Measure { line: 5, .. }), "{err}");
        assert!(err.to_string().contains("3/2"));
        assert!(matches!(parse_mdp("mdp\nstate q0\n"), Err(ParseError::MissingInit)));
        assert!(matches!(
            parse_mdp("mdp\nstate a init\nstate a\n"),
            Err(ParseError::DuplicateState { line: 3, .. })
        ));
        assert!(matches!(
            parse_mdp("mdp\nstate a init\nchoice a -> b:1\n"),
            Err(ParseError::UnknownState { line: 3, .. })
        ));
        assert!(matches!(
            parse_mdp("mdp\nstate a init\nchoice a -> a:x\n"),
            Err(ParseError::BadProbability { line: 3, .. })
        ));
        assert!(matches!(
            parse_mdp("dtmc\nstate a init\nchoice a -> a:1\nchoice a -> a:1/2\n"),
            Err(ParseError::DtmcChoices { line: 4, .. })
        ));
        assert!(matches!(parse_mdp("# nothing\n"), Err(ParseError::Empty)));
    }

    #[test]
    fn comments_and_decimals() {
        let m = parse_mdp("mdp # header\n\nstate a init labels {x, y}\nchoice a -> a:0.5 # loop\n").unwrap();
        assert_eq!(m.choices(StateId(0))[0].prob(StateId(0)), ratio(1, 2));
        assert_eq!(m.labels(StateId(0)).len(), 2);
    }

    #[test]
    fn partitions() {
        let m = parse_mdp(NO_DTMC).unwrap();
        assert_eq!(parse_partition("", &m).unwrap(), Partition::identity(3));
        assert!(matches!(parse_partition("block q1 q2\n", &m), Err(ParseError::Partition(_))));
        assert!(matches!(
            parse_partition("block q0\nblock q0\n", &m),
            Err(ParseError::Overlap { line: 2, .. })
        ));
        assert!(matches!(
            parse_partition("block zz\n", &m),
            Err(ParseError::UnknownState { line: 1, .. })
        ));
        let p = Partition::identity(3);
        assert_eq!(parse_partition(&print_partition(&p, &m), &m).unwrap(), p);
    }

    #[test]
    fn cex_dir_round_trip() {
        let m = parse_mdp(NO_DTMC).unwrap();
        let (copy, inj) = crate::mdp::bar_copy(&m);
        let cex = CounterExample { e: copy, r: inj };
        let dir = std::env::temp_dir().join(format!("pcegar-io-{}", std::process::id()));
        write_cex_dir(&dir, &cex, &m).unwrap();
        let back = read_cex_dir(&dir, &m).unwrap();
        assert_eq!(back.r, cex.r);
        assert_eq!(print_mdp(&back.e), print_mdp(&cex.e));
        fs::remove_dir_all(&dir).unwrap();
    }
}
