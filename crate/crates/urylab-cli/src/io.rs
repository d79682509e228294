//! JSON file formats. Every rational is a canonical `"p/q"` string.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use urylab::formula::{ExpansionStructure, RelationTable};
use urylab::grey::GreySubset;
use urylab::metric::FiniteMetricSpace;
use urylab::rational::{format_rat, parse_rat, Q01, Rat, RationalError};
use urylab::stage::{LogEntry, Stage};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("non-canonical rational {0:?}")]
    NonCanonicalRational(String),
    #[error("invalid rational {0:?}: {1}")]
    BadRational(String, String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}: {1}")]
    Read(String, String),
}

pub fn rational(s: &str) -> Result<Rat, IoError> {
    parse_rat(s).map_err(|e| match e {
        RationalError::NonCanonical(_) => IoError::NonCanonicalRational(s.into()),
        other => IoError::BadRational(s.into(), other.to_string()),
    })
}

pub fn unit(s: &str) -> Result<Q01, IoError> {
    Q01::new(rational(s)?).map_err(|e| IoError::BadRational(s.into(), e.to_string()))
}

fn units(v: &[String]) -> Result<Vec<Q01>, IoError> {
    v.iter().map(|s| unit(s)).collect()
}

fn strings(v: &[Q01]) -> Vec<String> {
    v.iter().map(|q| q.to_string()).collect()
}

/// Parses JSON text, reporting the position of syntax and shape errors.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: path.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Reads a file, returning its text and SHA-256 digest.
pub fn read(path: &Path) -> Result<(String, String), IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::Read(path.display().to_string(), e.to_string()))?;
    let digest = digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| IoError::Read(path.display().to_string(), e.to_string()))?;
    Ok((text, digest))
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// A space, optionally with a predicate aligned with `points`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub points: Vec<String>,
    /// `[x, y, d(x,y)]` for every unordered pair.
    pub d: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Vec<String>>,
}

impl SpaceFile {
    pub fn emit(space: &FiniteMetricSpace, predicate: Option<&[Q01]>) -> Self {
        SpaceFile {
            points: space.labels().to_vec(),
            d: space.pairs().into_iter().map(|(i, j, v)| (space.label(i).into(), space.label(j).into(), v.to_string())).collect(),
            predicate: predicate.map(strings),
        }
    }

    pub fn space(&self) -> Result<FiniteMetricSpace, IoError> {
        let pairs = self.d.iter().map(|(a, b, v)| Ok((a.clone(), b.clone(), unit(v)?))).collect::<Result<Vec<_>, IoError>>()?;
        FiniteMetricSpace::from_pairs(self.points.clone(), &pairs).map_err(|e| IoError::Invalid(e.to_string()))
    }

    pub fn predicate(&self) -> Result<Option<Vec<Q01>>, IoError> {
        self.predicate.as_deref().map(units).transpose()
    }

    pub fn require_predicate(&self) -> Result<Vec<Q01>, IoError> {
        self.predicate()?.ok_or_else(|| IoError::Invalid("a predicate is required".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogFile {
    pub round: usize,
    pub label: String,
    pub katetov: Vec<String>,
}

/// A stage: the full space plus the log of added points (the seed is the
/// initial segment of `points` not named in the log).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFile {
    pub points: Vec<String>,
    pub d: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Vec<String>>,
    pub log: Vec<LogFile>,
    pub denominator_bound: i64,
}

impl StageFile {
    pub fn emit(stage: &Stage) -> Self {
        let s = SpaceFile::emit(stage.space(), stage.predicate());
        StageFile {
            points: s.points,
            d: s.d,
            predicate: s.predicate,
            log: stage
                .log()
                .iter()
                .map(|e| LogFile { round: e.round, label: e.label.clone(), katetov: strings(&e.katetov) })
                .collect(),
            denominator_bound: stage.denominator_bound(),
        }
    }

    pub fn stage(&self) -> Result<Stage, IoError> {
        let sf = SpaceFile { points: self.points.clone(), d: self.d.clone(), predicate: self.predicate.clone() };
        let log = self
            .log
            .iter()
            .map(|e| Ok(LogEntry { round: e.round, label: e.label.clone(), katetov: units(&e.katetov)? }))
            .collect::<Result<Vec<_>, IoError>>()?;
        Stage::from_parts(sf.space()?, sf.predicate()?, log, self.denominator_bound).map_err(|e| IoError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    pub arity: usize,
    pub slope: String,
    /// Values on all tuples in lexicographic order of point indices.
    pub values: Vec<String>,
}

/// A base space with relation tables (`P` is the unary predicate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFile {
    pub points: Vec<String>,
    pub d: Vec<(String, String, String)>,
    #[serde(default)]
    pub relations: BTreeMap<String, RelationFile>,
}

impl StructureFile {
    pub fn emit(m: &ExpansionStructure) -> Self {
        let s = SpaceFile::emit(m.base(), None);
        let relations = m
            .signature()
            .symbols()
            .map(|(k, _)| {
                let t = m.relation(k).expect("symbol from signature");
                (k.clone(), RelationFile { arity: t.arity, slope: format_rat(&t.slope), values: strings(&t.values) })
            })
            .collect();
        StructureFile { points: s.points, d: s.d, relations }
    }

    pub fn structure(&self) -> Result<ExpansionStructure, IoError> {
        let sf = SpaceFile { points: self.points.clone(), d: self.d.clone(), predicate: None };
        let mut m = ExpansionStructure::new(sf.space()?);
        for (k, r) in &self.relations {
            let t = RelationTable { arity: r.arity, slope: rational(&r.slope)?, values: units(&r.values)? };
            m.insert(k, t).map_err(|e| IoError::Invalid(e.to_string()))?;
        }
        Ok(m)
    }
}

/// A grey table: element id `g<i>` to value.
pub fn grey_table(values: &[Q01]) -> BTreeMap<String, String> {
    values.iter().enumerate().map(|(i, v)| (format!("g{i}"), v.to_string())).collect()
}

pub fn parse_grey_table(table: &BTreeMap<String, String>, len: usize) -> Result<GreySubset, IoError> {
    let mut values = vec![None; len];
    for (k, v) in table {
        let i: usize = k
            .strip_prefix('g')
            .and_then(|s| s.parse().ok())
            .filter(|&i| i < len)
            .ok_or_else(|| IoError::Invalid(format!("unknown element id {k:?}")))?;
        values[i] = Some(unit(v)?);
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| IoError::Invalid(format!("missing value for g{i}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GreySubset { values, provenance: "table".into() })
}

/// Label tuples for the two variable blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFile {
    pub left: Vec<Vec<String>>,
    pub right: Vec<Vec<String>>,
}

/// A sequence of `(left tuple, right tuple)` label pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

/// A square array of values; only entries above the diagonal are read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayFile {
    pub values: Vec<Vec<String>>,
}

impl ArrayFile {
    pub fn array(&self) -> Result<Vec<Vec<Q01>>, IoError> {
        self.values.iter().map(|r| units(r)).collect()
    }
}

pub fn indices(space: &FiniteMetricSpace, labels: &[String]) -> Result<Vec<usize>, IoError> {
    labels.iter().map(|l| space.index_of(l).ok_or_else(|| IoError::Invalid(format!("unknown point {l:?}")))).collect()
}

pub fn labels(space: &FiniteMetricSpace, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| space.label(i).to_string()).collect()
}
