//! Safety and liveness fragments of PCTL: AST, parser, classification and
//! dualization.
//!
//! Concrete syntax:
//!
//! ```text
//! formula := orExpr
//! orExpr  := andExpr { "|" andExpr }
//! andExpr := unary { "&" unary }
//! unary   := "!" unary | atom
//! atom    := "true" | "false" | IDENT | probOp | "(" formula ")"
//! probOp  := "P" ("<" | "<=") RATIONAL "[" path "]"
//! path    := "X" formula | formula "U" formula | "F" formula
//! ```
//!
//! Negation is pushed onto propositions and probability operators while
//! parsing, so the AST only ever carries negation in those two positions.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Signed};
use thiserror::Error;

use crate::mdp::{parse_prob, Prob};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    Lt,
    Le,
}

impl Cmp {
    pub fn holds(self, value: &Prob, bound: &Prob) -> bool {
        match self {
            Cmp::Lt => value < bound,
            Cmp::Le => value <= bound,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathFormula {
    Next(Formula),
    Until(Formula, Formula),
}

impl PathFormula {
    pub fn size(&self) -> usize {
        match self {
            PathFormula::Next(f) => 1 + f.size(),
            PathFormula::Until(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// `◊f`, i.e. `true U f`.
    pub fn eventually(f: Formula) -> Self {
        PathFormula::Until(Formula::True, f)
    }
}

/// `P_{cmp bound}[path]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProbOp {
    pub cmp: Cmp,
    pub bound: Prob,
    pub path: Box<PathFormula>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Prop(String),
    NotProp(String),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Prob(ProbOp),
    NotProb(ProbOp),
}

impl Formula {
    pub fn prop(name: &str) -> Self {
        Formula::Prop(name.to_string())
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn prob(cmp: Cmp, bound: Prob, path: PathFormula) -> Self {
        Formula::Prob(ProbOp {
            cmp,
            bound,
            path: Box::new(path),
        })
    }

    pub fn not_prob(cmp: Cmp, bound: Prob, path: PathFormula) -> Self {
        Formula::NotProb(ProbOp {
            cmp,
            bound,
            path: Box::new(path),
        })
    }

    /// Number of AST nodes, path nodes included.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) | Formula::NotProp(_) => 1,
            Formula::And(a, b) | Formula::Or(a, b) => 1 + a.size() + b.size(),
            Formula::Prob(op) | Formula::NotProb(op) => 1 + op.path.size(),
        }
    }

    /// Propositions mentioned anywhere in the formula.
    pub fn propositions(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_props(&mut out);
        out
    }

    fn collect_props(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Prop(p) | Formula::NotProp(p) => {
                out.insert(p.clone());
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_props(out);
                b.collect_props(out);
            }
            Formula::Prob(op) | Formula::NotProb(op) => match op.path.as_ref() {
                PathFormula::Next(f) => f.collect_props(out),
                PathFormula::Until(a, b) => {
                    a.collect_props(out);
                    b.collect_props(out);
                }
            },
        }
    }

    /// Boolean combination of propositions (no probability operator).
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) | Formula::NotProp(_) => true,
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            Formula::Prob(_) | Formula::NotProb(_) => false,
        }
    }

    /// `P[φ]` or `¬P[φ]` whose path operands are propositional.
    pub fn flat_path(&self) -> Option<&PathFormula> {
        match self {
            Formula::Prob(op) | Formula::NotProb(op) => {
                let flat = match op.path.as_ref() {
                    PathFormula::Next(f) => f.is_propositional(),
                    PathFormula::Until(a, b) => a.is_propositional() && b.is_propositional(),
                };
                flat.then_some(op.path.as_ref())
            }
            _ => None,
        }
    }

    fn negated(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Prop(p) => Formula::NotProp(p.clone()),
            Formula::NotProp(p) => Formula::Prop(p.clone()),
            Formula::And(a, b) => Formula::or(a.negated(), b.negated()),
            Formula::Or(a, b) => Formula::and(a.negated(), b.negated()),
            Formula::Prob(op) => Formula::NotProb(op.clone()),
            Formula::NotProb(op) => Formula::Prob(op.clone()),
        }
    }
}

/// Fragment membership. A propositional formula is in all four fragments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FragmentClass {
    pub safety: bool,
    pub weak_safety: bool,
    pub liveness: bool,
    pub strict_liveness: bool,
}

impl FragmentClass {
    pub fn is_outside(&self) -> bool {
        !self.safety && !self.liveness
    }

    /// The class of the negated formula.
    pub fn dual(self) -> Self {
        FragmentClass {
            safety: self.liveness,
            weak_safety: self.strict_liveness,
            liveness: self.safety,
            strict_liveness: self.weak_safety,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fragment {
    Safety,
    Liveness,
}

fn in_fragment(f: &Formula, frag: Fragment, only_le: bool) -> bool {
    match f {
        Formula::True | Formula::False | Formula::Prop(_) | Formula::NotProp(_) => true,
        Formula::And(a, b) | Formula::Or(a, b) => {
            in_fragment(a, frag, only_le) && in_fragment(b, frag, only_le)
        }
        Formula::Prob(op) => frag == Fragment::Safety && operands_live(op, only_le),
        Formula::NotProb(op) => frag == Fragment::Liveness && operands_live(op, only_le),
    }
}

fn operands_live(op: &ProbOp, only_le: bool) -> bool {
    if only_le && op.cmp != Cmp::Le {
        return false;
    }
    match op.path.as_ref() {
        PathFormula::Next(f) => in_fragment(f, Fragment::Liveness, only_le),
        PathFormula::Until(a, b) => {
            in_fragment(a, Fragment::Liveness, only_le) && in_fragment(b, Fragment::Liveness, only_le)
        }
    }
}

pub fn classify(f: &Formula) -> FragmentClass {
    FragmentClass {
        safety: in_fragment(f, Fragment::Safety, false),
        weak_safety: in_fragment(f, Fragment::Safety, true),
        liveness: in_fragment(f, Fragment::Liveness, false),
        strict_liveness: in_fragment(f, Fragment::Liveness, true),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("probability bound {0} outside [0,1]")]
    BoundOutOfRange(String),
    #[error("formula `{formula}` is outside the {expected} fragment: {reason}")]
    WrongFragment {
        formula: String,
        expected: &'static str,
        reason: String,
    },
}

/// Dual formula: `q ⊨ f` iff `q ⊭ negate(f)`. Defined on the safety and
/// liveness fragments, where operands of probability operators are left in
/// place.
pub fn negate(f: &Formula) -> Result<Formula, FormulaError> {
    if classify(f).is_outside() {
        return Err(FormulaError::WrongFragment {
            formula: f.to_string(),
            expected: "safety or liveness",
            reason: outside_reason(f),
        });
    }
    Ok(f.negated())
}

/// Human-readable reason a formula misses both fragments.
pub fn outside_reason(f: &Formula) -> String {
    fn find(f: &Formula, frag: Fragment) -> Option<String> {
        match f {
            Formula::And(a, b) | Formula::Or(a, b) => find(a, frag).or_else(|| find(b, frag)),
            Formula::Prob(op) | Formula::NotProb(op) => {
                let here = match (f, frag) {
                    (Formula::Prob(_), Fragment::Liveness) => {
                        return Some(format!("`{f}` is a positive probability bound inside a liveness position"))
                    }
                    (Formula::NotProb(_), Fragment::Safety) => {
                        return Some(format!("`{f}` is a negated probability bound inside a safety position"))
                    }
                    _ => op,
                };
                match here.path.as_ref() {
                    PathFormula::Next(g) => find(g, Fragment::Liveness),
                    PathFormula::Until(a, b) => {
                        find(a, Fragment::Liveness).or_else(|| find(b, Fragment::Liveness))
                    }
                }
            }
            _ => None,
        }
    }
    find(f, Fragment::Safety)
        .or_else(|| find(f, Fragment::Liveness))
        .unwrap_or_else(|| "it mixes safety and liveness operators".to_string())
}

/// Checks that `f` lies in the safety fragment (weak safety if `weak`).
pub fn require_safety(f: &Formula, weak: bool) -> Result<(), FormulaError> {
    let c = classify(f);
    let ok = if weak { c.weak_safety } else { c.safety };
    if ok {
        return Ok(());
    }
    let reason = if c.safety {
        "it uses a strict `<` bound".to_string()
    } else {
        outside_reason(&f.clone())
    };
    Err(FormulaError::WrongFragment {
        formula: f.to_string(),
        expected: if weak { "weak safety" } else { "safety" },
        reason,
    })
}

/// State and path subformulas of a strict-liveness formula, each
/// deduplicated and sorted by size (ties broken by printed form).
pub fn sub_and_path_formulas(f: &Formula) -> Result<(Vec<Formula>, Vec<PathFormula>), FormulaError> {
    if !classify(f).strict_liveness {
        return Err(FormulaError::WrongFragment {
            formula: f.to_string(),
            expected: "strict liveness",
            reason: if classify(f).liveness {
                "it uses a strict `<` bound".to_string()
            } else {
                outside_reason(f)
            },
        });
    }
    let mut states = BTreeSet::new();
    let mut paths = BTreeSet::new();
    collect_subformulas(f, &mut states, &mut paths);
    let mut states: Vec<Formula> = states.into_iter().collect();
    let mut paths: Vec<PathFormula> = paths.into_iter().collect();
    states.sort_by_cached_key(|g| (g.size(), g.to_string()));
    paths.sort_by_cached_key(|g| (g.size(), g.to_string()));
    Ok((states, paths))
}

fn collect_subformulas(f: &Formula, states: &mut BTreeSet<Formula>, paths: &mut BTreeSet<PathFormula>) {
    states.insert(f.clone());
    match f {
        Formula::True | Formula::False | Formula::Prop(_) | Formula::NotProp(_) => {}
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_subformulas(a, states, paths);
            collect_subformulas(b, states, paths);
        }
        Formula::Prob(op) | Formula::NotProb(op) => {
            paths.insert(op.path.as_ref().clone());
            match op.path.as_ref() {
                PathFormula::Next(g) => collect_subformulas(g, states, paths),
                PathFormula::Until(a, b) => {
                    collect_subformulas(a, states, paths);
                    collect_subformulas(b, states, paths);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// printing

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(self, 0, f)
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(g) => {
                f.write_str("X ")?;
                write_formula(g, 3, f)
            }
            PathFormula::Until(a, b) => {
                write_formula(a, 3, f)?;
                f.write_str(" U ")?;
                write_formula(b, 3, f)
            }
        }
    }
}

impl fmt::Display for ProbOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}{}[{}]", self.cmp, self.bound, self.path)
    }
}

// precedence: 1 = or, 2 = and, 3 = unary/atom
fn write_formula(g: &Formula, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let (prec, paren) = match g {
        Formula::Or(..) => (1, min_prec > 1),
        Formula::And(..) => (2, min_prec > 2),
        _ => (3, false),
    };
    if paren {
        f.write_str("(")?;
    }
    match g {
        Formula::True => f.write_str("true")?,
        Formula::False => f.write_str("false")?,
        Formula::Prop(p) => f.write_str(p)?,
        Formula::NotProp(p) => write!(f, "!{p}")?,
        Formula::Or(a, b) | Formula::And(a, b) => {
            write_formula(a, prec, f)?;
            f.write_str(if prec == 1 { " | " } else { " & " })?;
            write_formula(b, prec + 1, f)?;
        }
        Formula::Prob(op) => write!(f, "{op}")?,
        Formula::NotProb(op) => write!(f, "!{op}")?,
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Le,
    Slash,
    Diamond,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '!' | '¬' => Some(Tok::Not),
            '&' | '∧' => Some(Tok::And),
            '|' | '∨' => Some(Tok::Or),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '/' => Some(Tok::Slash),
            '◊' => Some(Tok::Diamond),
            '≤' => Some(Tok::Le),
            _ => None,
        };
        if let Some(t) = single {
            out.push((pos, t));
            i += 1;
            continue;
        }
        if c == '<' {
            if chars.get(i + 1).map(|x| x.1) == Some('=') {
                out.push((pos, Tok::Le));
                i += 2;
            } else {
                out.push((pos, Tok::Lt));
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|x| x.1).collect();
            out.push((pos, Tok::Number(s)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|x| x.1).collect();
            out.push((pos, Tok::Ident(s)));
            continue;
        }
        return Err(FormulaError::Syntax {
            pos,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

const RESERVED: [&str; 5] = ["true", "false", "X", "U", "F"];

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

/// Raw parse tree; negation may appear anywhere until normalization.
enum Raw {
    True,
    False,
    Prop(String),
    Not(Box<Raw>),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Prob(Cmp, Prob, Box<RawPath>),
}

enum RawPath {
    Next(Raw),
    Until(Raw, Raw),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            pos: self.offset(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Raw, FormulaError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let rhs = self.and_expr()?;
            lhs = Raw::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Raw, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Raw::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw, FormulaError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Raw::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Raw, FormulaError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                if name == "P" && matches!(self.peek_at(1), Some(Tok::Lt | Tok::Le)) {
                    return self.prob_op();
                }
                match name.as_str() {
                    "true" => {
                        self.pos += 1;
                        Ok(Raw::True)
                    }
                    "false" => {
                        self.pos += 1;
                        Ok(Raw::False)
                    }
                    "X" | "U" | "F" => self.err(format!("`{name}` is reserved for path operators")),
                    _ => {
                        self.pos += 1;
                        Ok(Raw::Prop(name))
                    }
                }
            }
            Some(t) => self.err(format!("unexpected token {t:?}")),
            None => self.err("unexpected end of input"),
        }
    }

    fn prob_op(&mut self) -> Result<Raw, FormulaError> {
        self.pos += 1; // P
        let cmp = match self.peek() {
            Some(Tok::Lt) => Cmp::Lt,
            Some(Tok::Le) => Cmp::Le,
            _ => return self.err("expected `<` or `<=`"),
        };
        self.pos += 1;
        let bound = self.rational()?;
        self.expect(Tok::LBracket, "`[`")?;
        let path = self.path()?;
        self.expect(Tok::RBracket, "`]`")?;
        Ok(Raw::Prob(cmp, bound, Box::new(path)))
    }

    fn rational(&mut self) -> Result<Prob, FormulaError> {
        let start = self.offset();
        let mut text = match self.peek().cloned() {
            Some(Tok::Number(n)) => n,
            _ => return self.err("expected a probability bound"),
        };
        self.pos += 1;
        if self.peek() == Some(&Tok::Slash) {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Tok::Number(d)) => {
                    text = format!("{text}/{d}");
                    self.pos += 1;
                }
                _ => return self.err("expected a denominator"),
            }
        }
        let p = parse_prob(&text).ok_or(FormulaError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })?;
        if p.is_negative() || p > Prob::one() {
            return Err(FormulaError::BoundOutOfRange(text));
        }
        Ok(p)
    }

    fn path(&mut self) -> Result<RawPath, FormulaError> {
        match self.peek() {
            Some(Tok::Ident(k)) if k == "X" => {
                self.pos += 1;
                Ok(RawPath::Next(self.formula()?))
            }
            Some(Tok::Ident(k)) if k == "F" => {
                self.pos += 1;
                Ok(RawPath::Until(Raw::True, self.formula()?))
            }
            Some(Tok::Diamond) => {
                self.pos += 1;
                Ok(RawPath::Until(Raw::True, self.formula()?))
            }
            _ => {
                let lhs = self.formula()?;
                match self.peek() {
                    Some(Tok::Ident(k)) if k == "U" => {
                        self.pos += 1;
                        Ok(RawPath::Until(lhs, self.formula()?))
                    }
                    _ => self.err("expected `U`"),
                }
            }
        }
    }
}

fn normalize(raw: Raw, negate: bool) -> Formula {
    match (raw, negate) {
        (Raw::True, false) | (Raw::False, true) => Formula::True,
        (Raw::True, true) | (Raw::False, false) => Formula::False,
        (Raw::Prop(p), false) => Formula::Prop(p),
        (Raw::Prop(p), true) => Formula::NotProp(p),
        (Raw::Not(inner), n) => normalize(*inner, !n),
        (Raw::And(a, b), false) => Formula::and(normalize(*a, false), normalize(*b, false)),
        (Raw::And(a, b), true) => Formula::or(normalize(*a, true), normalize(*b, true)),
        (Raw::Or(a, b), false) => Formula::or(normalize(*a, false), normalize(*b, false)),
        (Raw::Or(a, b), true) => Formula::and(normalize(*a, true), normalize(*b, true)),
        (Raw::Prob(cmp, bound, path), n) => {
            let path = match *path {
                RawPath::Next(f) => PathFormula::Next(normalize(f, false)),
                RawPath::Until(a, b) => PathFormula::Until(normalize(a, false), normalize(b, false)),
            };
            let op = ProbOp {
                cmp,
                bound,
                path: Box::new(path),
            };
            if n {
                Formula::NotProb(op)
            } else {
                Formula::Prob(op)
            }
        }
    }
}

/// Parses a formula in the concrete syntax above.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let raw = p.formula()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(normalize(raw, false))
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

/// Identifiers usable as proposition names.
pub fn is_valid_proposition(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && !RESERVED.contains(&name)
}
