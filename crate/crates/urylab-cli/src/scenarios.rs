//! Named end-to-end scenarios. A scenario writes its input files to a
//! scratch directory, runs CLI steps in order and checks assertions against
//! each step's outcome and certificate fields. Arguments of the form `@name`
//! refer to scenario files, including files saved from earlier steps.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};
use thiserror::Error;

use urylab::formula::ExpansionStructure;
use urylab::metric::FiniteMetricSpace;
use urylab::patterns::{ip_pattern, order_pattern, order_witness_space, pinned_qf_formulas, predicate_stage, q_pattern};
use urylab::rational::Q01;

use crate::commands::{run, Cli, Globals, ScenarioArgs};
use crate::io::{digest, to_json, SpaceFile, StructureFile};
use crate::report::{Outcome, Report};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expect {
    Outcome(Outcome),
    /// JSON pointer into the certificate and the expected value.
    Field(String, Value),
    Absent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub args: Vec<String>,
    pub expect: Vec<Expect>,
    /// Save the certificate value at a pointer as a scenario file.
    pub save: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub files: Vec<(String, String)>,
    pub steps: Vec<Step>,
}

pub const SCENARIOS: [(&str, &str); 6] = [
    ("amalgamation", "free and predicate amalgamation over a shared point, and the joint embedding"),
    ("finite-injectivity", "a template-grown stage at denominator 4 realizes every two-point Katětov function"),
    ("predicate-stage-stability", "no type-anchored order witness for the pinned formulas on the predicate stage"),
    ("witness-roundtrip", "tuple and group witnesses convert into each other on the Q-pattern"),
    ("ip-to-order", "an independence witness on the subset pattern yields an order witness"),
    ("pure-urysohn-unstable", "the distance formula has order witnesses at n = 2 and n = 3"),
];

fn step(args: &str, expect: Vec<Expect>) -> Step {
    Step { args: args.split_whitespace().map(String::from).collect(), expect, save: None }
}

fn with(mut s: Step, flag: &str, value: &str) -> Step {
    s.args.extend([flag.to_string(), value.to_string()]);
    s
}

fn saving(mut s: Step, pointer: &str, file: &str) -> Step {
    s.save = Some((pointer.into(), file.into()));
    s
}

fn field(pointer: &str, v: Value) -> Expect {
    Expect::Field(pointer.into(), v)
}

fn space_file(labels: &[&str], pairs: &[(&str, &str, Q01)], p: Option<&[Q01]>) -> String {
    let pairs: Vec<(String, String, Q01)> = pairs.iter().map(|&(a, b, v)| (a.into(), b.into(), v)).collect();
    let s = FiniteMetricSpace::from_pairs(labels.iter().map(|l| l.to_string()).collect(), &pairs).expect("scenario space");
    to_json(&SpaceFile::emit(&s, p))
}

fn structure_file(m: &ExpansionStructure) -> String {
    to_json(&StructureFile::emit(m))
}

pub fn scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let q = Q01::frac;
    let ok = || Expect::Outcome(Outcome::Ok);
    let found = || Expect::Outcome(Outcome::Found);
    let (summary, files, steps) = match name {
        "amalgamation" => {
            let files = vec![
                ("b".to_string(), space_file(&["z", "b"], &[("z", "b", q(3, 10))], None)),
                ("c".to_string(), space_file(&["z", "c"], &[("z", "c", q(2, 5))], None)),
                ("pb".to_string(), space_file(&["z", "b"], &[("z", "b", q(1, 2))], Some(&[q(1, 4), q(1, 2)]))),
                ("pc".to_string(), space_file(&["z", "c"], &[("z", "c", q(1, 4))], Some(&[q(1, 4), q(0, 1)]))),
            ];
            let steps = vec![
                step("amalgamate --left @b --right @c --shared z=z", vec![ok(), field("/space/d/2", json!(["b", "c", "7/10"]))]),
                saving(
                    step(
                        "amalgamate --left @pb --right @pc --shared z=z",
                        vec![ok(), field("/restricts_to_left", json!(true)), field("/restricts_to_right", json!(true))],
                    ),
                    "/space",
                    "amalgam",
                ),
                step("validate --space @amalgam", vec![ok(), field("/in_class_k", json!(true))]),
                step(
                    "join --left @pb --right @pc",
                    vec![ok(), field("/restricts_to_left", json!(true)), field("/restricts_to_right", json!(true))],
                ),
            ];
            (SCENARIOS[0].1, files, steps)
        }
        "finite-injectivity" => {
            let files = vec![("seed".to_string(), space_file(&["s"], &[], None))];
            let steps = vec![
                saving(
                    step(
                        "grow --seed-space @seed --denominator-bound 4 --rounds 100 --cap 1000 --arity 2 --template 4,3",
                        vec![ok(), field("/saturated", json!(true)), field("/cap_exceeded", json!(false)), field("/template_dropped", json!(false))],
                    ),
                    "/stage",
                    "stage",
                ),
                step("injectivity --stage @stage --m 2 --denominator 4", vec![ok(), field("/fraction", json!("1"))]),
            ];
            (SCENARIOS[1].1, files, steps)
        }
        "predicate-stage-stability" => {
            let st = predicate_stage(40).expect("predicate stage");
            let m = ExpansionStructure::with_predicate(st.space().clone(), st.predicate().expect("stage predicate")).expect("structure");
            let files = vec![("stage".to_string(), structure_file(&m))];
            let steps = pinned_qf_formulas()
                .iter()
                .map(|f| {
                    let s = step(
                        "anchored-order-search --structure @stage --anchor-left a --anchor-right b --n 3 --epsilon 1/16 --r1 1/4 --r2 3/4 --budget 10000000",
                        vec![Expect::Outcome(Outcome::NotFound), Expect::Absent("/budget_exhausted".into())],
                    );
                    with(s, "--formula", &f.to_string())
                })
                .collect();
            (SCENARIOS[2].1, files, steps)
        }
        "witness-roundtrip" => {
            let p = q_pattern(3).expect("Q-pattern");
            let files = vec![("q".to_string(), structure_file(&p.structure))];
            let base = "--structure @q --anchor-left s1 --anchor-right t1 --n 3";
            let q_step = |args: String, expect| with(step(&args, expect), "--formula", "(Q x y)");
            let steps = vec![
                saving(q_step(format!("anchored-order-search {base} --epsilon 0"), vec![found()]), "/witness", "anchored"),
                saving(
                    q_step(format!("convert {base} --witness @anchored --to group"), vec![ok(), field("/epsilon_out", json!("0"))]),
                    "/witness",
                    "group",
                ),
                q_step(format!("convert {base} --witness @group --to tuple"), vec![ok(), field("/epsilon_out", json!("0"))]),
                saving(q_step(format!("group-order-search {base} --epsilon 0"), vec![found()]), "/witness", "direct"),
                q_step(format!("convert {base} --witness @direct --to tuple"), vec![ok(), field("/witness/kind", json!("anchored"))]),
                saving(q_step(format!("group-order-search {base} --epsilon 1/16"), vec![found()]), "/witness", "relaxed"),
                q_step(format!("convert {base} --witness @relaxed --to tuple"), vec![ok(), field("/epsilon_out", json!("1/8"))]),
            ];
            (SCENARIOS[3].1, files, steps)
        }
        "ip-to-order" => {
            let p = ip_pattern(2).expect("subset pattern");
            let files = vec![("ip".to_string(), structure_file(&p.structure))];
            let base = "--structure @ip --anchor-left s1 --anchor-right t0";
            let q_step = |args: String, expect| with(step(&args, expect), "--formula", "(Q x y)");
            let steps = vec![
                saving(q_step(format!("ip-search {base} --n 2 --epsilon 0"), vec![found()]), "/witness", "ip-witness"),
                q_step(
                    format!("convert {base} --n 2 --witness @ip-witness --to order"),
                    vec![ok(), field("/witness/kind", json!("group-order")), field("/epsilon_out", json!("0"))],
                ),
            ];
            (SCENARIOS[4].1, files, steps)
        }
        "pure-urysohn-unstable" => {
            let four = ExpansionStructure::new(order_witness_space().space);
            let three = ExpansionStructure::new(order_pattern(3).expect("order pattern").space);
            let files = vec![("four".to_string(), structure_file(&four)), ("three".to_string(), structure_file(&three))];
            let steps = vec![
                with(step("order-search --structure @four --n 2 --epsilon 0", vec![found(), field("/verified_checks", json!(4))]), "--formula", "(d x y)"),
                with(step("order-search --structure @three --n 3 --epsilon 0", vec![found(), field("/verified_checks", json!(9))]), "--formula", "(d x y)"),
            ];
            (SCENARIOS[5].1, files, steps)
        }
        other => return Err(ScenarioError::UnknownScenario(other.into())),
    };
    let name = SCENARIOS.iter().find(|(n, _)| *n == name).map(|(n, _)| *n).expect("registered");
    Ok(Scenario { name, summary, files, steps })
}

static SCRATCH: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir(name: &str) -> PathBuf {
    let k = SCRATCH.fetch_add(1, Ordering::Relaxed);
    std::env::temp_dir().join(format!("urylab-{name}-{}-{k}", std::process::id()))
}

fn resolve(dir: &Path, arg: &str) -> String {
    match arg.strip_prefix('@') {
        Some(f) => dir.join(format!("{f}.json")).display().to_string(),
        None => arg.to_string(),
    }
}

fn check(e: &Expect, r: &Report) -> Value {
    let (label, expected, actual) = match e {
        Expect::Outcome(o) => ("outcome".to_string(), json!(o), json!(r.outcome)),
        Expect::Field(p, v) => (p.clone(), v.clone(), r.certificate.pointer(p).cloned().unwrap_or(Value::Null)),
        Expect::Absent(p) => (p.clone(), Value::Null, r.certificate.pointer(p).cloned().unwrap_or(Value::Null)),
    };
    json!({ "check": label, "expected": expected, "actual": actual, "holds": expected == actual })
}

/// Runs a scenario in a fresh scratch directory.
pub fn run_scenario(sc: &Scenario) -> Result<Report> {
    let dir = scratch_dir(sc.name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let result = run_in(sc, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn run_in(sc: &Scenario, dir: &Path) -> Result<Report> {
    let mut inputs = vec![];
    for (name, text) in &sc.files {
        std::fs::write(dir.join(format!("{name}.json")), text)?;
        inputs.push((name.clone(), digest(text.as_bytes())));
    }
    let mut all_hold = true;
    let mut records = vec![];
    for s in &sc.steps {
        let argv: Vec<String> = std::iter::once("urylab".to_string()).chain(s.args.iter().map(|a| resolve(dir, a))).collect();
        let echo = s.args.join(" ");
        let outcome = Cli::try_parse_from(&argv).map_err(anyhow::Error::from).and_then(|cli| run(&cli));
        match outcome {
            Ok(r) => {
                let checks: Vec<Value> = s.expect.iter().map(|e| check(e, &r)).collect();
                all_hold &= checks.iter().all(|c| c["holds"] == json!(true));
                if let Some((pointer, file)) = &s.save {
                    let v = r.certificate.pointer(pointer).cloned().unwrap_or(Value::Null);
                    std::fs::write(dir.join(format!("{file}.json")), to_json(&v))?;
                }
                records.push(json!({
                    "step": echo,
                    "outcome": r.outcome,
                    "inputs": r.inputs,
                    "budget": r.budget,
                    "checks": checks,
                    "certificate": r.certificate,
                }));
            }
            Err(e) => {
                all_hold = false;
                let scratch = format!("{}{}", dir.display(), std::path::MAIN_SEPARATOR);
                records.push(json!({ "step": echo, "error": format!("{e:#}").replace(&scratch, "@") }));
            }
        }
    }
    let cert = json!({ "scenario": sc.name, "summary": sc.summary, "all_checks_hold": all_hold, "steps": records });
    let mut report = Report::new(&format!("scenario {}", sc.name), if all_hold { Outcome::Ok } else { Outcome::Failed }, cert)
        .budget("per step, the --budget given in the step (default 10000000 search nodes)".into());
    for (k, v) in inputs {
        report = report.input(&k, v);
    }
    Ok(report)
}

pub fn command(a: &ScenarioArgs, _g: &Globals) -> Result<Report> {
    if a.list {
        let list: Vec<Value> = SCENARIOS.iter().map(|(n, s)| json!({ "name": n, "summary": s })).collect();
        return Ok(Report::new("scenario --list", Outcome::Ok, json!({ "scenarios": list })));
    }
    let name = a.name.as_deref().unwrap_or_default();
    run_scenario(&scenario(name)?)
}
