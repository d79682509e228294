//! Reports: command echo, input digests, outcome, budget statement and the
//! certificate payload. Serialization is deterministic (sorted maps, fixed
//! field order), so equal inputs give byte-identical reports.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    /// The check passed or the command produced its output.
    Ok,
    Found,
    /// Nothing found within the stated pools and budget.
    NotFound,
    /// A check ran and failed.
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok | Outcome::Found => 0,
            Outcome::NotFound | Outcome::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    /// Input name to SHA-256 of its bytes (or of its canonical JSON for
    /// constructed inputs).
    pub inputs: BTreeMap<String, String>,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<String>,
    pub certificate: Value,
}

impl Report {
    pub fn new(command: &str, outcome: Outcome, certificate: Value) -> Self {
        Report { command: command.into(), inputs: BTreeMap::new(), outcome, budget: None, certificate }
    }

    pub fn input(mut self, name: &str, digest: String) -> Self {
        self.inputs.insert(name.into(), digest);
        self
    }

    pub fn budget(mut self, statement: String) -> Self {
        self.budget = Some(statement);
        self
    }

    pub fn json(&self) -> String {
        crate::io::to_json(self)
    }

    /// A short plain-text rendering with the certificate appended as JSON.
    pub fn text(&self) -> String {
        let mut out = format!("command: {}\noutcome: {}\n", self.command, serde_json::to_value(self.outcome).expect("enum").as_str().unwrap_or("?"));
        for (k, v) in &self.inputs {
            out.push_str(&format!("input {k}: sha256 {v}\n"));
        }
        if let Some(b) = &self.budget {
            out.push_str(&format!("budget: {b}\n"));
        }
        out.push_str("certificate:\n");
        out.push_str(&crate::io::to_json(&self.certificate));
        out
    }
}
