//! Continuous-logic formulas over a metric `d`, the predicate `P` and extra
//! relation symbols: prefix syntax, exact evaluation on finite structures,
//! linear inverse moduli, the weighted slot metric on structures and constant
//! substitution for predicate atoms.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigInt, BigRational, One, Zero};
use rand::Rng;
use thiserror::Error;

use crate::dk::{dk_distance, TupleStructure};
use crate::metric::FiniteMetricSpace;
use crate::rational::{format_rat, parse_rat, Q01, Rat};

/// Name of the platform predicate relation.
pub const PREDICATE: &str = "P";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("unbound variable {0:?}")]
    UnboundVariable(String),
    #[error("{0} expects {1} arguments, got {2}")]
    ArityMismatch(String, usize, usize),
    #[error("unknown relation symbol {0:?}")]
    UnknownRelation(String),
    #[error("parse error at token {0}: {1}")]
    Parse(usize, String),
    #[error("table for {0} has {1} entries, expected {2}")]
    TableSize(String, usize, usize),
    #[error("table for {symbol} breaks slope {slope} between tuples {left:?} and {right:?}")]
    SlopeViolation { symbol: String, slope: Rat, left: Vec<usize>, right: Vec<usize> },
    #[error("invalid slope {0} for {1}")]
    InvalidSlope(Rat, String),
    #[error("structures or scheme do not match: {0}")]
    SchemeMismatch(String),
    #[error("expected {0} predicate-atom constants, got {1}")]
    OccurrenceMismatch(usize, usize),
    #[error("predicate atom {0} has a quantified argument")]
    QuantifiedOccurrence(usize),
    #[error("constant for predicate atom {0} is more than epsilon from the anchor value")]
    ConstantTooFar(usize),
    #[error("tuple lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty value range: {0} >= {1}")]
    EmptyRange(Q01, Q01),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Const(Q01),
    Dist(String, String),
    Rel(String, Vec<String>),
    /// `1 - φ`
    Neg(Box<Formula>),
    /// `φ ∸ ψ = max(0, φ - ψ)`
    Sub(Box<Formula>, Box<Formula>),
    Min(Vec<Formula>),
    Max(Vec<Formula>),
    /// `min(1, q·φ)`
    Scale(Rat, Box<Formula>),
    Sup(String, Box<Formula>),
    Inf(String, Box<Formula>),
}

impl Formula {
    pub fn dist(x: &str, y: &str) -> Formula {
        Formula::Dist(x.into(), y.into())
    }

    pub fn rel(symbol: &str, args: &[&str]) -> Formula {
        Formula::Rel(symbol.into(), args.iter().map(|s| s.to_string()).collect())
    }

    pub fn p(x: &str) -> Formula {
        Formula::rel(PREDICATE, &[x])
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Const(_) | Formula::Dist(..) | Formula::Rel(..) => 0,
            Formula::Neg(a) | Formula::Scale(_, a) | Formula::Sup(_, a) | Formula::Inf(_, a) => 1 + a.depth(),
            Formula::Sub(a, b) => 1 + a.depth().max(b.depth()),
            Formula::Min(v) | Formula::Max(v) => 1 + v.iter().map(Formula::depth).max().unwrap_or(0),
        }
    }

    /// Free variables in order of first occurrence.
    pub fn free_vars(&self) -> Vec<String> {
        fn go(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<String>) {
            let mut note = |v: &String, bound: &Vec<String>| {
                if !bound.contains(v) && !out.contains(v) {
                    out.push(v.clone());
                }
            };
            match f {
                Formula::Const(_) => {}
                Formula::Dist(x, y) => {
                    note(x, bound);
                    note(y, bound);
                }
                Formula::Rel(_, args) => args.iter().for_each(|a| note(a, bound)),
                Formula::Neg(a) | Formula::Scale(_, a) => go(a, bound, out),
                Formula::Sub(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Formula::Min(v) | Formula::Max(v) => v.iter().for_each(|a| go(a, bound, out)),
                Formula::Sup(x, a) | Formula::Inf(x, a) => {
                    bound.push(x.clone());
                    go(a, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = vec![];
        go(self, &mut vec![], &mut out);
        out
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::Const(_) | Formula::Dist(..) | Formula::Rel(..) => true,
            Formula::Neg(a) | Formula::Scale(_, a) => a.is_quantifier_free(),
            Formula::Sub(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            Formula::Min(v) | Formula::Max(v) => v.iter().all(Formula::is_quantifier_free),
            Formula::Sup(..) | Formula::Inf(..) => false,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Const(q) => write!(f, "{q}"),
            Formula::Dist(x, y) => write!(f, "(d {x} {y})"),
            Formula::Rel(r, args) => write!(f, "({r} {})", args.join(" ")),
            Formula::Neg(a) => write!(f, "(neg {a})"),
            Formula::Sub(a, b) => write!(f, "(sub {a} {b})"),
            Formula::Min(v) | Formula::Max(v) => {
                write!(f, "({}", if matches!(self, Formula::Min(_)) { "min" } else { "max" })?;
                for a in v {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
            Formula::Scale(q, a) => write!(f, "(scale {} {a})", format_rat(q)),
            Formula::Sup(x, a) => write!(f, "(sup {x} {a})"),
            Formula::Inf(x, a) => write!(f, "(inf {x} {a})"),
        }
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.replace('(', " ( ").replace(')', " ) ").split_whitespace().map(str::to_string).collect()
}

fn is_number(t: &str) -> bool {
    t.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-')
}

fn is_ident(t: &str) -> bool {
    t.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && t.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
}

struct Parser {
    tokens: Vec<String>,
    pos: usize,
}

impl Parser {
    fn err<T>(&self, msg: &str) -> Result<T, FormulaError> {
        Err(FormulaError::Parse(self.pos, msg.to_string()))
    }

    fn next(&mut self) -> Result<String, FormulaError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn var(&mut self) -> Result<String, FormulaError> {
        let t = self.next()?;
        if is_ident(&t) {
            Ok(t)
        } else {
            self.pos -= 1;
            self.err("expected a variable")
        }
    }

    fn close(&mut self) -> Result<(), FormulaError> {
        match self.next()?.as_str() {
            ")" => Ok(()),
            _ => {
                self.pos -= 1;
                self.err("expected ')'")
            }
        }
    }

    fn formula(&mut self) -> Result<Formula, FormulaError> {
        let t = self.next()?;
        if t != "(" {
            if is_number(&t) {
                return match parse_rat(&t).ok().and_then(|r| Q01::new(r).ok()) {
                    Some(q) => Ok(Formula::Const(q)),
                    None => {
                        self.pos -= 1;
                        self.err("constant must be a canonical rational in [0,1]")
                    }
                };
            }
            self.pos -= 1;
            return self.err("expected '(' or a constant");
        }
        let head = self.next()?;
        let f = match head.as_str() {
            "d" => {
                let x = self.var()?;
                let y = self.var()?;
                Formula::Dist(x, y)
            }
            "neg" => Formula::Neg(Box::new(self.formula()?)),
            "sub" => {
                let a = self.formula()?;
                let b = self.formula()?;
                Formula::Sub(Box::new(a), Box::new(b))
            }
            "min" | "max" => {
                let mut args = vec![];
                while self.peek() != Some(")") {
                    args.push(self.formula()?);
                }
                if args.is_empty() {
                    return self.err("min/max need at least one argument");
                }
                if head == "min" {
                    Formula::Min(args)
                } else {
                    Formula::Max(args)
                }
            }
            "scale" => {
                let t = self.next()?;
                let q = match parse_rat(&t) {
                    Ok(q) if q >= Rat::zero() => q,
                    _ => {
                        self.pos -= 1;
                        return self.err("scale factor must be a nonnegative canonical rational");
                    }
                };
                Formula::Scale(q, Box::new(self.formula()?))
            }
            "sup" | "inf" => {
                let x = self.var()?;
                let a = Box::new(self.formula()?);
                if head == "sup" {
                    Formula::Sup(x, a)
                } else {
                    Formula::Inf(x, a)
                }
            }
            r if is_ident(r) => {
                let mut args = vec![];
                while self.peek() != Some(")") {
                    args.push(self.var()?);
                }
                Formula::Rel(r.to_string(), args)
            }
            _ => {
                self.pos -= 1;
                return self.err("unknown form");
            }
        };
        self.close()?;
        Ok(f)
    }
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { tokens: tokenize(s), pos: 0 };
        let f = p.formula()?;
        if p.pos != p.tokens.len() {
            return p.err("trailing input");
        }
        Ok(f)
    }
}

/// Relation symbols with arity and declared linear inverse-modulus slope.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Signature {
    relations: BTreeMap<String, (usize, Rat)>,
}

impl Signature {
    /// The signature `{P}` with slope 1.
    pub fn predicate_only() -> Self {
        let mut s = Signature::default();
        s.add(PREDICATE, 1, None).unwrap();
        s
    }

    /// Adds a symbol; the slope defaults to the arity.
    pub fn add(&mut self, symbol: &str, arity: usize, slope: Option<Rat>) -> Result<(), FormulaError> {
        let slope = slope.unwrap_or_else(|| Rat::from_integer(arity as i64));
        if arity == 0 || slope <= Rat::zero() || symbol == "d" {
            return Err(FormulaError::InvalidSlope(slope, symbol.to_string()));
        }
        self.relations.insert(symbol.to_string(), (arity, slope));
        Ok(())
    }

    pub fn get(&self, symbol: &str) -> Option<(usize, Rat)> {
        self.relations.get(symbol).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&String, &(usize, Rat))> {
        self.relations.iter()
    }
}

/// A relation interpreted on all `arity`-tuples of a base space; tuples are
/// indexed lexicographically with the first coordinate most significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTable {
    pub arity: usize,
    pub slope: Rat,
    pub values: Vec<Q01>,
}

fn tuple_index(tuple: &[usize], n: usize) -> usize {
    tuple.iter().fold(0, |acc, &i| acc * n + i)
}

fn index_tuple(mut idx: usize, arity: usize, n: usize) -> Vec<usize> {
    let mut t = vec![0; arity];
    for slot in t.iter_mut().rev() {
        *slot = idx % n;
        idx /= n;
    }
    t
}

/// A finite base space with interpretations of relation symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionStructure {
    base: FiniteMetricSpace,
    relations: BTreeMap<String, RelationTable>,
}

impl ExpansionStructure {
    pub fn new(base: FiniteMetricSpace) -> Self {
        ExpansionStructure { base, relations: BTreeMap::new() }
    }

    /// The structure `(base, d, P)`.
    pub fn with_predicate(base: FiniteMetricSpace, p: &[Q01]) -> Result<Self, FormulaError> {
        let mut m = ExpansionStructure::new(base);
        m.insert(PREDICATE, RelationTable { arity: 1, slope: Rat::one(), values: p.to_vec() })?;
        Ok(m)
    }

    /// Adds a table after checking its size and, exhaustively over pairs of
    /// tuples, its declared slope.
    pub fn insert(&mut self, symbol: &str, table: RelationTable) -> Result<(), FormulaError> {
        let n = self.base.len();
        let expected = n.pow(table.arity as u32);
        if table.values.len() != expected {
            return Err(FormulaError::TableSize(symbol.into(), table.values.len(), expected));
        }
        if table.arity == 0 || table.slope <= Rat::zero() || symbol == "d" {
            return Err(FormulaError::InvalidSlope(table.slope, symbol.into()));
        }
        let tuples: Vec<Vec<usize>> = (0..expected).map(|i| index_tuple(i, table.arity, n)).collect();
        for (i, a) in tuples.iter().enumerate() {
            for (j, b) in tuples.iter().enumerate().skip(i + 1) {
                let dist = a.iter().zip(b).map(|(&x, &y)| self.base.d(x, y)).max().unwrap_or(Q01::ZERO);
                if table.values[i].abs_diff(table.values[j]).value() > table.slope * dist.value() {
                    return Err(FormulaError::SlopeViolation {
                        symbol: symbol.into(),
                        slope: table.slope,
                        left: a.clone(),
                        right: b.clone(),
                    });
                }
            }
        }
        self.relations.insert(symbol.into(), table);
        Ok(())
    }

    pub fn base(&self) -> &FiniteMetricSpace {
        &self.base
    }

    pub fn relation(&self, symbol: &str) -> Option<&RelationTable> {
        self.relations.get(symbol)
    }

    pub fn signature(&self) -> Signature {
        Signature {
            relations: self.relations.iter().map(|(k, t)| (k.clone(), (t.arity, t.slope))).collect(),
        }
    }

    /// `R(tuple)`; `"d"` reads the metric.
    pub fn value(&self, symbol: &str, tuple: &[usize]) -> Result<Q01, FormulaError> {
        if symbol == "d" {
            if tuple.len() != 2 {
                return Err(FormulaError::ArityMismatch("d".into(), 2, tuple.len()));
            }
            return Ok(self.base.d(tuple[0], tuple[1]));
        }
        let t = self.relations.get(symbol).ok_or_else(|| FormulaError::UnknownRelation(symbol.into()))?;
        if t.arity != tuple.len() {
            return Err(FormulaError::ArityMismatch(symbol.into(), t.arity, tuple.len()));
        }
        Ok(t.values[tuple_index(tuple, self.base.len())])
    }

    /// The image `g·M` of the structure under a base isometry `g` (given as a
    /// point permutation): `(g·M).R(ā) = R^M(g⁻¹ā)`. The caller guarantees
    /// that `g` preserves the metric, so slopes stay valid.
    pub fn transported(&self, g: &[usize]) -> ExpansionStructure {
        let n = self.base.len();
        let mut inv = vec![0; n];
        for (x, &y) in g.iter().enumerate() {
            inv[y] = x;
        }
        let relations = self
            .relations
            .iter()
            .map(|(k, t)| {
                let values = (0..t.values.len())
                    .map(|i| {
                        let pre: Vec<usize> = index_tuple(i, t.arity, n).iter().map(|&x| inv[x]).collect();
                        t.values[tuple_index(&pre, n)]
                    })
                    .collect();
                (k.clone(), RelationTable { arity: t.arity, slope: t.slope, values })
            })
            .collect();
        ExpansionStructure { base: self.base.clone(), relations }
    }

    /// The platform predicate values, when present.
    pub fn predicate(&self) -> Option<&[Q01]> {
        self.relations.get(PREDICATE).filter(|t| t.arity == 1).map(|t| t.values.as_slice())
    }
}

/// Variable assignment; later bindings shadow earlier ones.
pub type Assignment = Vec<(String, usize)>;

pub fn assignment(vars: &[String], points: &[usize]) -> Assignment {
    vars.iter().cloned().zip(points.iter().copied()).collect()
}

fn lookup(env: &Assignment, v: &str) -> Result<usize, FormulaError> {
    env.iter().rev().find(|(k, _)| k == v).map(|(_, i)| *i).ok_or_else(|| FormulaError::UnboundVariable(v.into()))
}

/// Exact value of `φ` under `env`; quantifiers range over the base points.
pub fn eval(phi: &Formula, m: &ExpansionStructure, env: &Assignment) -> Result<Q01, FormulaError> {
    let mut env = env.clone();
    eval_in(phi, m, &mut env)
}

fn eval_in(phi: &Formula, m: &ExpansionStructure, env: &mut Assignment) -> Result<Q01, FormulaError> {
    Ok(match phi {
        Formula::Const(q) => *q,
        Formula::Dist(x, y) => m.base.d(lookup(env, x)?, lookup(env, y)?),
        Formula::Rel(r, args) => {
            let t = args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
            m.value(r, &t)?
        }
        Formula::Neg(a) => eval_in(a, m, env)?.complement(),
        Formula::Sub(a, b) => eval_in(a, m, env)?.tsub(eval_in(b, m, env)?),
        Formula::Min(v) => {
            let mut acc = Q01::ONE;
            for a in v {
                acc = acc.min(eval_in(a, m, env)?);
            }
            acc
        }
        Formula::Max(v) => {
            let mut acc = Q01::ZERO;
            for a in v {
                acc = acc.max(eval_in(a, m, env)?);
            }
            acc
        }
        Formula::Scale(q, a) => eval_in(a, m, env)?.scale(*q),
        Formula::Sup(x, a) | Formula::Inf(x, a) => {
            let sup = matches!(phi, Formula::Sup(..));
            let mut acc = if sup { Q01::ZERO } else { Q01::ONE };
            for p in 0..m.base.len() {
                env.push((x.clone(), p));
                let v = eval_in(a, m, env);
                env.pop();
                let v = v?;
                acc = if sup { acc.max(v) } else { acc.min(v) };
            }
            acc
        }
    })
}

/// A slope `k` with `|φ(ā) - φ(b̄)| <= k · max_i d(a_i, b_i)` over the free
/// variables, by structural recursion. Truncated subtraction adds the slopes
/// of its operands.
pub fn inverse_modulus(phi: &Formula, sig: &Signature) -> Result<Rat, FormulaError> {
    Ok(match phi {
        Formula::Const(_) => Rat::zero(),
        Formula::Dist(x, y) => {
            if x == y {
                Rat::zero()
            } else {
                Rat::from_integer(2)
            }
        }
        Formula::Rel(r, args) => {
            let (arity, slope) = sig.get(r).ok_or_else(|| FormulaError::UnknownRelation(r.clone()))?;
            if arity != args.len() {
                return Err(FormulaError::ArityMismatch(r.clone(), arity, args.len()));
            }
            slope
        }
        Formula::Neg(a) | Formula::Sup(_, a) | Formula::Inf(_, a) => inverse_modulus(a, sig)?,
        Formula::Scale(q, a) => *q * inverse_modulus(a, sig)?,
        Formula::Sub(a, b) => inverse_modulus(a, sig)? + inverse_modulus(b, sig)?,
        Formula::Min(v) | Formula::Max(v) => {
            let mut k = Rat::zero();
            for a in v {
                k = k.max(inverse_modulus(a, sig)?);
            }
            k
        }
    })
}

/// An ordered list of `(symbol, tuple)` slots; slot `i` (from 1) has weight `2^-i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumerationScheme {
    slots: Vec<(String, Vec<usize>)>,
}

impl EnumerationScheme {
    pub fn new(slots: Vec<(String, Vec<usize>)>) -> Result<Self, FormulaError> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &slots {
            if !seen.insert(s.clone()) {
                return Err(FormulaError::SchemeMismatch(format!("slot {s:?} repeated")));
            }
        }
        Ok(EnumerationScheme { slots })
    }

    /// All tuples of each relation symbol of `m` (then `d`), symbol by symbol
    /// in name order.
    pub fn standard(m: &ExpansionStructure) -> Self {
        let n = m.base.len();
        let mut slots = vec![];
        for (sym, t) in &m.relations {
            for i in 0..n.pow(t.arity as u32) {
                slots.push((sym.clone(), index_tuple(i, t.arity, n)));
            }
        }
        for x in 0..n {
            for y in 0..n {
                slots.push(("d".into(), vec![x, y]));
            }
        }
        EnumerationScheme { slots }
    }

    pub fn slots(&self) -> &[(String, Vec<usize>)] {
        &self.slots
    }
}

/// Enclosure `[lower, upper]` of the weighted slot distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaInterval {
    pub lower: BigRational,
    pub upper: BigRational,
}

/// Partial sum over the first `cutoff` slots of `2^-i |R^M(s) - R^N(s)|`,
/// enclosed with the tail bound `2^-cutoff`.
pub fn delta_seq(
    m: &ExpansionStructure,
    n: &ExpansionStructure,
    scheme: &EnumerationScheme,
    cutoff: usize,
) -> Result<DeltaInterval, FormulaError> {
    if cutoff == 0 {
        return Err(FormulaError::SchemeMismatch("cutoff must be at least 1".into()));
    }
    if m.base.len() != n.base.len() {
        return Err(FormulaError::SchemeMismatch("bases differ in size".into()));
    }
    if m.signature() != n.signature() {
        return Err(FormulaError::SchemeMismatch("signatures differ".into()));
    }
    let big = |r: Rat| BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()));
    let mut weight = BigRational::one();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut sum = BigRational::zero();
    for (i, (sym, tuple)) in scheme.slots.iter().enumerate() {
        weight = &weight * &half;
        if i >= cutoff {
            break;
        }
        let a = m.value(sym, tuple).map_err(|e| FormulaError::SchemeMismatch(e.to_string()))?;
        let b = n.value(sym, tuple).map_err(|e| FormulaError::SchemeMismatch(e.to_string()))?;
        sum += &weight * big(a.abs_diff(b).value());
    }
    let tail = BigRational::new(BigInt::one(), BigInt::from(2).pow(cutoff as u32));
    Ok(DeltaInterval { upper: &sum + tail, lower: sum })
}

/// Arguments of each predicate atom, in left-to-right order.
pub fn predicate_occurrences(phi: &Formula) -> Vec<Vec<String>> {
    fn go(f: &Formula, out: &mut Vec<Vec<String>>) {
        match f {
            Formula::Rel(r, args) if r == PREDICATE => out.push(args.clone()),
            Formula::Const(_) | Formula::Dist(..) | Formula::Rel(..) => {}
            Formula::Neg(a) | Formula::Scale(_, a) | Formula::Sup(_, a) | Formula::Inf(_, a) => go(a, out),
            Formula::Sub(a, b) => {
                go(a, out);
                go(b, out);
            }
            Formula::Min(v) | Formula::Max(v) => v.iter().for_each(|a| go(a, out)),
        }
    }
    let mut out = vec![];
    go(phi, &mut out);
    out
}

/// Values of the predicate atoms of a quantifier-free `φ` under `env`.
pub fn predicate_atom_values(phi: &Formula, m: &ExpansionStructure, env: &Assignment) -> Result<Vec<Q01>, FormulaError> {
    predicate_occurrences(phi)
        .iter()
        .map(|args| {
            let t = args.iter().map(|a| lookup(env, a)).collect::<Result<Vec<_>, _>>()?;
            m.value(PREDICATE, &t)
        })
        .collect()
}

/// Replaces the predicate atoms of `φ`, in order, by the given constants.
/// Each constant must lie within `ε` of the corresponding anchor value, and
/// no replaced atom may mention a quantified variable.
pub fn substitute_theta_eps(
    phi: &Formula,
    constants: &[Q01],
    epsilon: Q01,
    anchor_values: &[Q01],
) -> Result<Formula, FormulaError> {
    let count = predicate_occurrences(phi).len();
    if constants.len() != count || anchor_values.len() != count {
        return Err(FormulaError::OccurrenceMismatch(count, constants.len().min(anchor_values.len())));
    }
    if let Some(i) = (0..count).find(|&i| constants[i].abs_diff(anchor_values[i]) > epsilon) {
        return Err(FormulaError::ConstantTooFar(i));
    }
    fn go(f: &Formula, c: &[Q01], next: &mut usize, bound: &mut Vec<String>) -> Result<Formula, FormulaError> {
        Ok(match f {
            Formula::Rel(r, args) if r == PREDICATE => {
                let i = *next;
                *next += 1;
                if args.iter().any(|a| bound.contains(a)) {
                    return Err(FormulaError::QuantifiedOccurrence(i));
                }
                Formula::Const(c[i])
            }
            Formula::Const(_) | Formula::Dist(..) | Formula::Rel(..) => f.clone(),
            Formula::Neg(a) => Formula::Neg(Box::new(go(a, c, next, bound)?)),
            Formula::Scale(q, a) => Formula::Scale(*q, Box::new(go(a, c, next, bound)?)),
            Formula::Sub(a, b) => {
                let a = go(a, c, next, bound)?;
                Formula::Sub(Box::new(a), Box::new(go(b, c, next, bound)?))
            }
            Formula::Min(v) => Formula::Min(v.iter().map(|a| go(a, c, next, bound)).collect::<Result<_, _>>()?),
            Formula::Max(v) => Formula::Max(v.iter().map(|a| go(a, c, next, bound)).collect::<Result<_, _>>()?),
            Formula::Sup(x, a) | Formula::Inf(x, a) => {
                bound.push(x.clone());
                let inner = go(a, c, next, bound);
                bound.pop();
                let inner = Box::new(inner?);
                if matches!(f, Formula::Sup(..)) {
                    Formula::Sup(x.clone(), inner)
                } else {
                    Formula::Inf(x.clone(), inner)
                }
            }
        })
    }
    go(phi, constants, &mut 0, &mut vec![])
}

/// Lipschitz constant of `φ` as a function of the values of its predicate
/// atoms (all other atoms held fixed).
pub fn predicate_atom_sensitivity(phi: &Formula) -> Rat {
    match phi {
        Formula::Rel(r, _) if r == PREDICATE => Rat::one(),
        Formula::Const(_) | Formula::Dist(..) | Formula::Rel(..) => Rat::zero(),
        Formula::Neg(a) | Formula::Sup(_, a) | Formula::Inf(_, a) => predicate_atom_sensitivity(a),
        Formula::Scale(q, a) => *q * predicate_atom_sensitivity(a),
        Formula::Sub(a, b) => predicate_atom_sensitivity(a) + predicate_atom_sensitivity(b),
        Formula::Min(v) | Formula::Max(v) => v.iter().map(predicate_atom_sensitivity).max().unwrap_or_else(Rat::zero),
    }
}

/// Bound on `|φ(b̄) - θ_ε(b̄)|` for assignments `b̄` within `radius` of the
/// anchor: every predicate atom is off by at most `ε + radius`.
pub fn theta_eps_bound(phi: &Formula, epsilon: Q01, radius: Q01) -> Q01 {
    Q01::clamp(predicate_atom_sensitivity(phi) * (epsilon.value() + radius.value()))
}

/// `min(1, (φ ∸ r1) / (r2 - r1))`: values at most `r1` go to 0 and values at
/// least `r2` go to 1.
pub fn normalize(phi: &Formula, r1: Q01, r2: Q01) -> Result<Formula, FormulaError> {
    if r1 >= r2 {
        return Err(FormulaError::EmptyRange(r1, r2));
    }
    let shifted = Formula::Sub(Box::new(phi.clone()), Box::new(Formula::Const(r1)));
    Ok(Formula::Scale((r2.value() - r1.value()).recip(), Box::new(shifted)))
}

/// Quantifier-free type distance, computed as `d^𝒦` between the induced
/// `(d, P)` tuple structures. A proxy for the full type distance.
pub fn qf_type_distance(a: &TupleStructure, b: &TupleStructure) -> Result<Q01, FormulaError> {
    if a.len() != b.len() {
        return Err(FormulaError::LengthMismatch(a.len(), b.len()));
    }
    dk_distance(a, b).map(|c| c.value).map_err(|e| FormulaError::SchemeMismatch(e.to_string()))
}

/// The `(d, P)` structure induced on a tuple of `m`'s base points.
pub fn induced_structure(m: &ExpansionStructure, tuple: &[usize]) -> TupleStructure {
    let p = m.predicate().map_or_else(|| vec![Q01::ZERO; tuple.len()], |p| tuple.iter().map(|&i| p[i]).collect());
    TupleStructure { d: tuple.iter().map(|&i| tuple.iter().map(|&j| m.base.d(i, j)).collect()).collect(), p }
}

/// A random formula of depth at most `depth` whose free variables come from
/// `vars` and whose relation atoms come from `sig`.
pub fn random_formula<R: Rng>(rng: &mut R, sig: &Signature, vars: &[String], depth: usize) -> Formula {
    let symbols: Vec<(String, usize)> = sig.symbols().map(|(k, (a, _))| (k.clone(), *a)).collect();
    let pick_var = |rng: &mut R, pool: &[String]| pool[rng.gen_range(0..pool.len())].clone();
    fn go<R: Rng>(
        rng: &mut R,
        symbols: &[(String, usize)],
        pool: &mut Vec<String>,
        depth: usize,
        fresh: &mut usize,
        pick_var: &impl Fn(&mut R, &[String]) -> String,
    ) -> Formula {
        let leaf = depth == 0 || rng.gen_ratio(1, 4);
        if leaf {
            return match rng.gen_range(0..4) {
                0 => Formula::Const(Q01::frac(rng.gen_range(0..=4), 4)),
                1 if !symbols.is_empty() => {
                    let (s, a) = symbols[rng.gen_range(0..symbols.len())].clone();
                    Formula::Rel(s, (0..a).map(|_| pick_var(rng, pool)).collect())
                }
                _ => Formula::Dist(pick_var(rng, pool), pick_var(rng, pool)),
            };
        }
        let sub = |rng: &mut R, pool: &mut Vec<String>, fresh: &mut usize| {
            Box::new(go(rng, symbols, pool, depth - 1, fresh, pick_var))
        };
        match rng.gen_range(0..7) {
            0 => Formula::Neg(sub(rng, pool, fresh)),
            1 => {
                let a = sub(rng, pool, fresh);
                Formula::Sub(a, sub(rng, pool, fresh))
            }
            2 | 3 => {
                let k = rng.gen_range(1..=3);
                let v = (0..k).map(|_| *sub(rng, pool, fresh)).collect();
                if rng.gen_bool(0.5) {
                    Formula::Min(v)
                } else {
                    Formula::Max(v)
                }
            }
            4 => {
                let q = Rat::new(rng.gen_range(1..=6), rng.gen_range(1..=4));
                Formula::Scale(q, sub(rng, pool, fresh))
            }
            _ => {
                let x = format!("q{fresh}");
                *fresh += 1;
                pool.push(x.clone());
                let body = sub(rng, pool, fresh);
                pool.pop();
                if rng.gen_bool(0.5) {
                    Formula::Sup(x, body)
                } else {
                    Formula::Inf(x, body)
                }
            }
        }
    }
    let mut pool = vars.to_vec();
    go(rng, &symbols, &mut pool, depth, &mut 0, &pick_var)
}

/// A random table on `arity`-tuples of `space` respecting `slope`, built
/// tuple by tuple from the interval left open by the earlier values
/// (off-grid upper end of the interval when it holds no grid point).
pub fn random_table<R: Rng>(rng: &mut R, space: &FiniteMetricSpace, arity: usize, slope: Rat, denominator: i64) -> RelationTable {
    let n = space.len();
    let mut values: Vec<Q01> = vec![];
    for i in 0..n.pow(arity as u32) {
        let a = index_tuple(i, arity, n);
        let (mut lo, mut hi) = (Rat::zero(), Rat::one());
        for (j, v) in values.iter().enumerate() {
            let b = index_tuple(j, arity, n);
            let dist = a.iter().zip(&b).map(|(&x, &y)| space.d(x, y)).max().unwrap_or(Q01::ZERO).value();
            lo = lo.max(v.value() - slope * dist);
            hi = hi.min(v.value() + slope * dist);
        }
        let grid: Vec<Q01> = Q01::grid(denominator).into_iter().filter(|q| q.value() >= lo && q.value() <= hi).collect();
        if grid.is_empty() {
            values.push(Q01::clamp(hi));
        } else {
            values.push(grid[rng.gen_range(0..grid.len())]);
        }
    }
    RelationTable { arity, slope, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order_space() -> FiniteMetricSpace {
        let l = |s: &str| s.to_string();
        FiniteMetricSpace::from_pairs(
            vec![l("s1"), l("s2"), l("t1"), l("t2")],
            &[
                (l("s1"), l("t2"), Q01::frac(1, 4)),
                (l("s1"), l("t1"), Q01::frac(3, 4)),
                (l("s2"), l("t1"), Q01::frac(3, 4)),
                (l("s2"), l("t2"), Q01::frac(3, 4)),
                (l("s1"), l("s2"), Q01::frac(1, 2)),
                (l("t1"), l("t2"), Q01::frac(1, 2)),
            ],
        )
        .unwrap()
    }

    fn env(pairs: &[(&str, usize)]) -> Assignment {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn eval_examples() {
        let m = ExpansionStructure::with_predicate(order_space(), &[Q01::frac(1, 4); 4]).unwrap();
        assert_eq!(eval(&Formula::dist("x", "y"), &m, &env(&[("x", 2), ("y", 2)])).unwrap(), Q01::ZERO);
        let neg: Formula = "(neg (P x))".parse().unwrap();
        assert_eq!(eval(&neg, &m, &env(&[("x", 0)])).unwrap(), Q01::frac(3, 4));
        let sup: Formula = "(sup y (d x y))".parse().unwrap();
        assert_eq!(eval(&sup, &m, &env(&[("x", 0)])).unwrap(), Q01::frac(3, 4));
        assert_eq!(eval(&sup, &m, &env(&[])), Err(FormulaError::UnboundVariable("x".into())));
        let bad: Formula = "(P x y)".parse().unwrap();
        assert!(matches!(eval(&bad, &m, &env(&[("x", 0), ("y", 1)])), Err(FormulaError::ArityMismatch(..))));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["(max (d x y) (P x))", "(scale 3/2 (sub (P x) 1/4))", "(inf z (min (d x z) (neg (R x z)) 1))", "0"] {
            let f: Formula = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("(d x)".parse::<Formula>().is_err());
        assert!("(max)".parse::<Formula>().is_err());
        assert!("2/4".parse::<Formula>().is_err());
        assert!("(d x y) extra".parse::<Formula>().is_err());
    }

    #[test]
    fn modulus_examples() {
        let sig = Signature::predicate_only();
        let k = |s: &str| inverse_modulus(&s.parse().unwrap(), &sig).unwrap();
        assert_eq!(k("(P x)"), Rat::one());
        assert_eq!(k("(d x y)"), Rat::from_integer(2));
        assert_eq!(k("(min (P x) (P y))"), Rat::one());
        assert_eq!(k("(sub (P x) (P y))"), Rat::from_integer(2));
        assert_eq!(k("(scale 1/2 (d x y))"), Rat::one());
    }

    #[test]
    fn delta_examples() {
        let base = order_space();
        let m = ExpansionStructure::with_predicate(base.clone(), &[Q01::frac(1, 4); 4]).unwrap();
        let mut p = vec![Q01::frac(1, 4); 4];
        p[0] = Q01::frac(1, 2);
        let n = ExpansionStructure::with_predicate(base, &p).unwrap();
        let scheme = EnumerationScheme::standard(&m);
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        let same = delta_seq(&m, &m, &scheme, 3).unwrap();
        assert_eq!((same.lower, same.upper), (r(0, 1), r(1, 8)));
        let d = delta_seq(&m, &n, &scheme, 4).unwrap();
        assert_eq!(d.lower, r(1, 8));
        assert_eq!(d, delta_seq(&n, &m, &scheme, 4).unwrap());
    }

    #[test]
    fn theta_examples() {
        let phi: Formula = "(max (d x y) (P x))".parse().unwrap();
        let tenth = Q01::frac(1, 10);
        let t = substitute_theta_eps(&phi, &[Q01::frac(3, 10)], tenth, &[Q01::frac(3, 10)]).unwrap();
        assert_eq!(t.to_string(), "(max (d x y) 3/10)");
        assert_eq!(
            substitute_theta_eps(&phi, &[Q01::frac(1, 2)], tenth, &[Q01::frac(3, 10)]),
            Err(FormulaError::ConstantTooFar(0))
        );
        let plain: Formula = "(d x y)".parse().unwrap();
        assert_eq!(substitute_theta_eps(&plain, &[], tenth, &[]).unwrap(), plain);
        let q: Formula = "(sup y (P y))".parse().unwrap();
        assert_eq!(substitute_theta_eps(&q, &[Q01::ZERO], Q01::ONE, &[Q01::ZERO]), Err(FormulaError::QuantifiedOccurrence(0)));
    }

    #[test]
    fn qf_distance_examples() {
        let one = |p| TupleStructure { d: vec![vec![Q01::ZERO]], p: vec![p] };
        assert_eq!(qf_type_distance(&one(Q01::frac(1, 4)), &one(Q01::frac(1, 2))).unwrap(), Q01::frac(1, 4));
        assert_eq!(qf_type_distance(&one(Q01::frac(1, 4)), &one(Q01::frac(1, 4))).unwrap(), Q01::ZERO);
    }

    #[test]
    fn slope_checked_on_insert() {
        let mut m = ExpansionStructure::new(order_space());
        let mut values = vec![Q01::ZERO; 4];
        values[2] = Q01::ONE;
        let t = RelationTable { arity: 1, slope: Rat::one(), values };
        assert!(matches!(m.insert("R", t), Err(FormulaError::SlopeViolation { .. })));
    }
}
