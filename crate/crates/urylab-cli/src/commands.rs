//! Subcommand definitions and dispatch. Handlers parse their inputs, call
//! the library and package the result as a [`Report`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use urylab::dk::{dk_distance, dk_oracle, TupleStructure};
use urylab::formula::{
    assignment, delta_seq, eval, inverse_modulus, EnumerationScheme, ExpansionStructure, Formula, Signature,
};
use urylab::grey::{closure_family, grey_stabilizer, verify_subgroup, GreySubgroup, SubgroupCounterexample};
use urylab::isometry::{extend_partial_isometry, isometry_group, IsometryGroup};
use urylab::k_oracle::oracle_k_membership;
use urylab::metric::{disjoint_join, free_amalgamate, FiniteMetricSpace};
use urylab::predicate::{jep_join, k_membership, nap_amalgamate, realize_predicate, PredicateAmalgam, RealizedPredicateSpace};
use urylab::rational::{format_rat, Q01};
use urylab::sample::{random_lipschitz, random_space};
use urylab::stability::{
    anchored_order_search, anchored_to_group, double_limit_check, group_order_search, group_to_anchored, ip_search, ip_to_order,
    order_search, outcome_line, ramsey_extract, ramsey_longest, stable_equiv_check, verify_group_witness, verify_ramsey,
    verify_tuple_witness, ExpansionFamily, FormulaGreySetup, SearchOutcome, SearchParams, SplitFormula, StabilityError,
    TuplePools, WitnessKind, WitnessReport,
};
use urylab::stage::{extension_property_check, grow_stage, hamming_template, GrowthConfig, GrowthRule, Stage};

use crate::io::{
    self, grey_table, indices, labels, parse_grey_table, parse_json, ArrayFile, IoError, PoolFile, SequenceFile, SpaceFile,
    StageFile, StructureFile,
};
use crate::report::{Outcome, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "urylab", version, about = "Finite stages of the rational Urysohn space, predicate expansions and stability searches")]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Seed for randomized commands (required by them).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Search-node budget.
    #[arg(long, global = true, default_value_t = 10_000_000)]
    pub budget: u64,
    /// Denominator bound for stages and oracles.
    #[arg(long, global = true)]
    pub denominator_bound: Option<i64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a space file (and its predicate, when present).
    Validate(SpaceArg),
    /// Free amalgamation; NAP amalgamation when both sides carry a predicate.
    Amalgamate(AmalgamateArgs),
    /// Disjoint join at distance 1; joint embedding when both carry a predicate.
    Join(PairArgs),
    /// Class K membership of a predicate space.
    KCheck(KCheckArgs),
    /// Realize a predicate as a distance to a witness set.
    Realize(SpaceArg),
    /// d^K between two tuple structures.
    Dk(DkArgs),
    /// Grow a stage by one-point Katětov extensions.
    Grow(GrowArgs),
    /// Extension-property coverage of a stage.
    Injectivity(InjectivityArgs),
    /// Extend a partial isometry of a stage.
    ExtendIso(ExtendIsoArgs),
    /// Evaluate a formula under an assignment.
    Eval(EvalArgs),
    /// Linear inverse modulus of a formula.
    Modulus(ModulusArgs),
    /// Bracket of the weighted relation distance between two expansions.
    DeltaSeq(DeltaSeqArgs),
    /// Grey stabilizer of a tuple.
    GreyStabilizer(GreyStabilizerArgs),
    /// Check the grey subgroup axioms for a table.
    GreyVerify(GreyVerifyArgs),
    /// Closure of stabilizers under max, scaling and conjugation.
    GreyClosure(GreyClosureArgs),
    /// Order-pattern search over tuples.
    OrderSearch(OrderSearchArgs),
    /// Order-pattern search with type closeness to an anchor.
    AnchoredOrderSearch(AnchoredSearchArgs),
    /// Order-pattern search over group elements.
    GroupOrderSearch(GroupSearchArgs),
    /// Independence-pattern search over group elements.
    IpSearch(GroupSearchArgs),
    /// Convert a witness between the tuple and group levels.
    Convert(ConvertArgs),
    /// Iterated limits of a formula and comparison formulas.
    DoubleLimit(DoubleLimitArgs),
    /// Iterated limits of a formula difference.
    StableEquiv(StableEquivArgs),
    /// Band subsequence of a square array.
    Ramsey(RamseyArgs),
    /// Random grid space (needs --seed).
    SampleSpace(SampleArgs),
    /// Run a named scenario.
    Scenario(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct SpaceArg {
    #[arg(long)]
    pub space: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
}

#[derive(Debug, Args)]
pub struct AmalgamateArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Identified points `left=right`; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', required = true)]
    pub shared: Vec<String>,
}

#[derive(Debug, Args)]
pub struct KCheckArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// Also run the brute-force oracle with this many added witnesses.
    #[arg(long)]
    pub oracle_witnesses: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DkArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Comma-separated labels; all points when absent.
    #[arg(long)]
    pub left_tuple: Option<String>,
    #[arg(long)]
    pub right_tuple: Option<String>,
    /// Also run the grid oracle at the denominator bound (default 12).
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct GrowArgs {
    #[arg(long, conflicts_with = "seed_space", required_unless_present = "seed_space")]
    pub stage: Option<PathBuf>,
    /// Seed a new stage from a space file (needs --denominator-bound).
    #[arg(long)]
    pub seed_space: Option<PathBuf>,
    /// Give a fresh seed the predicate `d(., {labels})`.
    #[arg(long)]
    pub distance_predicate: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    #[arg(long, default_value_t = 200)]
    pub cap: usize,
    #[arg(long, default_value_t = 2)]
    pub arity: usize,
    /// Hamming template `length,alphabet`; free growth when absent.
    #[arg(long)]
    pub template: Option<String>,
}

#[derive(Debug, Args)]
pub struct InjectivityArgs {
    #[arg(long)]
    pub stage: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Defaults to the stage's denominator bound.
    #[arg(long)]
    pub denominator: Option<i64>,
}

#[derive(Debug, Args)]
pub struct ExtendIsoArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "0")]
    pub epsilon: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long)]
    pub formula: String,
    /// `var=label` pairs, comma-separated.
    #[arg(long, default_value = "")]
    pub assign: String,
}

#[derive(Debug, Args)]
pub struct ModulusArgs {
    #[arg(long)]
    pub formula: String,
    /// Signature source; only `P` with slope 1 when absent.
    #[arg(long)]
    pub structure: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeltaSeqArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 16)]
    pub cutoff: usize,
}

#[derive(Debug, Args)]
pub struct GroupArg {
    #[arg(long)]
    pub space: PathBuf,
    /// Refuse groups larger than this.
    #[arg(long, default_value_t = 100_000)]
    pub group_cap: usize,
}

#[derive(Debug, Args)]
pub struct GreyStabilizerArgs {
    #[command(flatten)]
    pub group: GroupArg,
    #[arg(long, default_value = "1")]
    pub slope: String,
    #[arg(long)]
    pub tuple: String,
}

#[derive(Debug, Args)]
pub struct GreyVerifyArgs {
    #[command(flatten)]
    pub group: GroupArg,
    /// JSON object from element ids `g<i>` to values.
    #[arg(long)]
    pub table: PathBuf,
}

#[derive(Debug, Args)]
pub struct GreyClosureArgs {
    #[command(flatten)]
    pub group: GroupArg,
    /// Stabilizer generators `slope:label,label`; repeatable.
    #[arg(long = "generator", required = true)]
    pub generators: Vec<String>,
    /// Element ids `g<i>` used for conjugation and cosets.
    #[arg(long, value_delimiter = ',')]
    pub elements: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub scalars: Vec<String>,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub member_cap: usize,
}

#[derive(Debug, Args)]
pub struct PatternArgs {
    /// Structure files of the family; repeatable.
    #[arg(long = "structure", required = true)]
    pub structures: Vec<PathBuf>,
    #[arg(long)]
    pub formula: String,
    /// Left variable block, comma-separated.
    #[arg(long, default_value = "x")]
    pub left: String,
    #[arg(long, default_value = "y")]
    pub right: String,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value = "0")]
    pub epsilon: String,
    #[arg(long, default_value = "1/4")]
    pub r1: String,
    #[arg(long, default_value = "3/4")]
    pub r2: String,
}

#[derive(Debug, Args)]
pub struct OrderSearchArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,
    /// Tuple pools; all tuples when absent.
    #[arg(long)]
    pub pool_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnchorArgs {
    /// Anchor labels for the left block.
    #[arg(long)]
    pub anchor_left: String,
    #[arg(long)]
    pub anchor_right: String,
}

#[derive(Debug, Args)]
pub struct AnchoredSearchArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,
    #[command(flatten)]
    pub anchor: AnchorArgs,
    #[arg(long)]
    pub pool_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GroupSearchArgs {
    #[command(flatten)]
    pub pattern: PatternArgs,
    #[command(flatten)]
    pub anchor: AnchorArgs,
    /// Element pool `g<i>`; the whole group when absent.
    #[arg(long, value_delimiter = ',')]
    pub elements: Vec<String>,
    #[arg(long, default_value_t = 100_000)]
    pub group_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    /// Anchored tuple witness to group-order witness.
    Group,
    /// Group-order witness to anchored tuple witness.
    Tuple,
    /// Independence witness to group-order witness.
    Order,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub search: GroupSearchArgs,
    /// A witness report (the `witness` field of a search certificate).
    #[arg(long)]
    pub witness: PathBuf,
    #[arg(long, value_enum)]
    pub to: Direction,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long)]
    pub formula: String,
    #[arg(long, default_value = "x")]
    pub left: String,
    #[arg(long, default_value = "y")]
    pub right: String,
    #[arg(long)]
    pub sequence: PathBuf,
    #[arg(long, default_value = "0")]
    pub tolerance: String,
    #[arg(long, default_value_t = 4)]
    pub window: usize,
}

#[derive(Debug, Args)]
pub struct DoubleLimitArgs {
    #[command(flatten)]
    pub limits: LimitArgs,
    /// Comparison formulas; repeatable.
    #[arg(long = "theta")]
    pub thetas: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StableEquivArgs {
    #[command(flatten)]
    pub limits: LimitArgs,
    #[arg(long)]
    pub theta: String,
}

#[derive(Debug, Args)]
pub struct RamseyArgs {
    #[arg(long)]
    pub values: PathBuf,
    #[arg(long, default_value = "0")]
    pub tolerance: String,
    /// Subsequence length; the longest one when absent.
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub points: usize,
    #[arg(long, default_value_t = 4)]
    pub denominator: i64,
    /// Add a random 1-Lipschitz predicate.
    #[arg(long)]
    pub predicate: bool,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(required_unless_present = "list")]
    pub name: Option<String>,
    #[arg(long)]
    pub list: bool,
}

pub fn run(cli: &Cli) -> Result<Report> {
    let g = Globals { seed: cli.seed, budget: cli.budget, denominator_bound: cli.denominator_bound };
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Amalgamate(a) => amalgamate(a),
        Command::Join(a) => join(a),
        Command::KCheck(a) => k_check(a, &g),
        Command::Realize(a) => realize(a),
        Command::Dk(a) => dk(a, &g),
        Command::Grow(a) => grow(a, &g),
        Command::Injectivity(a) => injectivity(a),
        Command::ExtendIso(a) => extend_iso(a, &g),
        Command::Eval(a) => eval_cmd(a),
        Command::Modulus(a) => modulus(a),
        Command::DeltaSeq(a) => delta(a),
        Command::GreyStabilizer(a) => stabilizer(a),
        Command::GreyVerify(a) => grey_verify(a),
        Command::GreyClosure(a) => grey_closure(a),
        Command::OrderSearch(a) => tuple_search_cmd("order-search", &a.pattern, None, a.pool_file.as_deref(), &g),
        Command::AnchoredOrderSearch(a) => tuple_search_cmd("anchored-order-search", &a.pattern, Some(&a.anchor), a.pool_file.as_deref(), &g),
        Command::GroupOrderSearch(a) => group_search_cmd("group-order-search", a, &g),
        Command::IpSearch(a) => group_search_cmd("ip-search", a, &g),
        Command::Convert(a) => convert(a, &g),
        Command::DoubleLimit(a) => double_limit(a),
        Command::StableEquiv(a) => stable_equiv(a),
        Command::Ramsey(a) => ramsey(a),
        Command::SampleSpace(a) => sample(a, &g),
        Command::Scenario(a) => crate::scenarios::command(a, &g),
    }
}

/// Global flags seen by handlers.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub seed: Option<u64>,
    pub budget: u64,
    pub denominator_bound: Option<i64>,
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, String)> {
    let (text, digest) = io::read(path)?;
    Ok((parse_json(&text, &path.display().to_string())?, digest))
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

fn label_indices(space: &FiniteMetricSpace, s: &str) -> Result<Vec<usize>> {
    Ok(indices(space, &list(s))?)
}

fn element_ids(ids: &[String], group: &IsometryGroup) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Ok((0..group.len()).collect());
    }
    ids.iter()
        .map(|k| {
            k.strip_prefix('g')
                .and_then(|s| s.parse().ok())
                .filter(|&i| i < group.len())
                .ok_or_else(|| anyhow!("unknown element id {k:?}"))
        })
        .collect()
}

fn parse_formula(s: &str) -> Result<Formula> {
    s.parse().map_err(|e| anyhow!("formula {s:?}: {e}"))
}

fn split(formula: &str, left: &str, right: &str) -> Result<SplitFormula> {
    let l = list(left);
    let r = list(right);
    let l: Vec<&str> = l.iter().map(String::as_str).collect();
    let r: Vec<&str> = r.iter().map(String::as_str).collect();
    Ok(SplitFormula::new(parse_formula(formula)?, &l, &r)?)
}

/// Splits a file's space errors (a failed check) from malformed input.
fn checked_space(f: &SpaceFile) -> Result<std::result::Result<FiniteMetricSpace, String>> {
    match f.space() {
        Ok(s) => Ok(Ok(s)),
        Err(IoError::Invalid(msg)) => Ok(Err(msg)),
        Err(e) => Err(e.into()),
    }
}

fn predicate_or_zero(f: &SpaceFile, n: usize) -> Result<Vec<Q01>> {
    Ok(f.predicate()?.unwrap_or_else(|| vec![Q01::ZERO; n]))
}

fn realized(f: &SpaceFile) -> Result<RealizedPredicateSpace> {
    let space = f.space()?;
    Ok(realize_predicate(&k_membership(&space, &f.require_predicate()?)?)?)
}

fn validate(a: &SpaceArg) -> Result<Report> {
    let (f, digest) = load::<SpaceFile>(&a.space)?;
    let (outcome, cert) = match checked_space(&f)? {
        Err(reason) => (Outcome::Failed, json!({ "valid": false, "reason": reason })),
        Ok(space) => match f.predicate()? {
            None => (Outcome::Ok, json!({ "valid": true, "points": space.len() })),
            Some(p) => match k_membership(&space, &p) {
                Ok(_) => (Outcome::Ok, json!({ "valid": true, "points": space.len(), "in_class_k": true })),
                Err(e) => (
                    Outcome::Failed,
                    json!({ "valid": true, "points": space.len(), "in_class_k": false, "reason": e.to_string() }),
                ),
            },
        },
    };
    Ok(Report::new("validate", outcome, cert).input("space", digest))
}

fn shared_pairs(shared: &[String]) -> Result<Vec<(String, String)>> {
    shared
        .iter()
        .map(|s| s.split_once('=').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(|| anyhow!("expected left=right, got {s:?}")))
        .collect()
}

fn predicate_amalgam_cert(am: &PredicateAmalgam, b: &RealizedPredicateSpace, c: &RealizedPredicateSpace) -> Value {
    let orig = &am.realized.original;
    let restricts = |side: &RealizedPredicateSpace, map: &[usize]| {
        orig.base().subspace(map).matrix() == side.original.base().matrix()
            && map.iter().map(|&i| orig.p()[i]).eq(side.original.p().iter().copied())
    };
    json!({
        "space": SpaceFile::emit(orig.base(), Some(orig.p())),
        "ambient": SpaceFile::emit(&am.realized.ambient, Some(&am.realized.ambient_predicate())),
        "witnesses": labels(&am.realized.ambient, &am.realized.witnesses),
        "left": labels(orig.base(), &am.left),
        "right": labels(orig.base(), &am.right),
        "restricts_to_left": restricts(b, &am.left),
        "restricts_to_right": restricts(c, &am.right),
    })
}

fn amalgamate(a: &AmalgamateArgs) -> Result<Report> {
    let (bf, bd) = load::<SpaceFile>(&a.pair.left)?;
    let (cf, cd) = load::<SpaceFile>(&a.pair.right)?;
    let shared = shared_pairs(&a.shared)?;
    let cert = match (bf.predicate.is_some(), cf.predicate.is_some()) {
        (true, true) => {
            let (b, c) = (realized(&bf)?, realized(&cf)?);
            predicate_amalgam_cert(&nap_amalgamate(&b, &c, &shared)?, &b, &c)
        }
        (false, false) => {
            let am = free_amalgamate(&bf.space()?, &cf.space()?, &shared)?;
            json!({
                "space": SpaceFile::emit(&am.space, None),
                "left": labels(&am.space, &am.left),
                "right": labels(&am.space, &am.right),
            })
        }
        _ => bail!("either both sides or neither carry a predicate"),
    };
    Ok(Report::new("amalgamate", Outcome::Ok, cert).input("left", bd).input("right", cd))
}

fn join(a: &PairArgs) -> Result<Report> {
    let (bf, bd) = load::<SpaceFile>(&a.left)?;
    let (cf, cd) = load::<SpaceFile>(&a.right)?;
    let cert = match (bf.predicate.is_some(), cf.predicate.is_some()) {
        (true, true) => {
            let (b, c) = (realized(&bf)?, realized(&cf)?);
            predicate_amalgam_cert(&jep_join(&b, &c)?, &b, &c)
        }
        (false, false) => json!({ "space": SpaceFile::emit(&disjoint_join(&bf.space()?, &cf.space()?)?, None) }),
        _ => bail!("either both sides or neither carry a predicate"),
    };
    Ok(Report::new("join", Outcome::Ok, cert).input("left", bd).input("right", cd))
}

fn k_check(a: &KCheckArgs, g: &Globals) -> Result<Report> {
    let (f, digest) = load::<SpaceFile>(&a.space)?;
    let space = f.space()?;
    let p = f.require_predicate()?;
    let verdict = k_membership(&space, &p);
    let mut cert = json!({ "accepted": verdict.is_ok() });
    if let Err(e) = &verdict {
        cert["reason"] = json!(e.to_string());
    }
    if let Some(w) = a.oracle_witnesses {
        let bound = g.denominator_bound.unwrap_or(12);
        if w == 0 || bound <= 0 {
            bail!("oracle budgets must be positive");
        }
        let o = oracle_k_membership(&space, &p, w, bound);
        cert["oracle"] = json!({
            "accepted": o.accept,
            "witness_budget": w,
            "denominator_bound": bound,
            "extension": o.extension.as_ref().map(|e| SpaceFile::emit(e, None)),
        });
        cert["agrees"] = json!(o.accept == verdict.is_ok());
    }
    let outcome = if verdict.is_ok() { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("k-check", outcome, cert).input("space", digest))
}

fn realize(a: &SpaceArg) -> Result<Report> {
    let (f, digest) = load::<SpaceFile>(&a.space)?;
    let r = realized(&f)?;
    let verified = r.verify();
    let cert = json!({
        "ambient": SpaceFile::emit(&r.ambient, Some(&r.ambient_predicate())),
        "witnesses": labels(&r.ambient, &r.witnesses),
        "original_points": labels(&r.ambient, &r.base_points),
        "verified": verified.is_ok(),
    });
    let outcome = if verified.is_ok() { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("realize", outcome, cert).input("space", digest))
}

fn tuple_structure(f: &SpaceFile, tuple: Option<&str>) -> Result<TupleStructure> {
    let space = f.space()?;
    let p = predicate_or_zero(f, space.len())?;
    let idx = match tuple {
        Some(t) => label_indices(&space, t)?,
        None => (0..space.len()).collect(),
    };
    Ok(TupleStructure::of(&k_membership(&space, &p)?, &idx)?)
}

fn dk(a: &DkArgs, g: &Globals) -> Result<Report> {
    let (bf, bd) = load::<SpaceFile>(&a.pair.left)?;
    let (cf, cd) = load::<SpaceFile>(&a.pair.right)?;
    let ta = tuple_structure(&bf, a.left_tuple.as_deref())?;
    let tb = tuple_structure(&cf, a.right_tuple.as_deref())?;
    let c = dk_distance(&ta, &tb)?;
    let verified = c.verify(&ta, &tb);
    let mut cert = json!({
        "value": c.value,
        "joint": SpaceFile::emit(&c.joint, Some(&c.joint_p)),
        "left": labels(&c.joint, &c.left),
        "right": labels(&c.joint, &c.right),
        "verified": verified.is_ok(),
    });
    if a.oracle {
        let bound = g.denominator_bound.unwrap_or(12);
        let o = dk_oracle(&ta, &tb, bound);
        cert["oracle"] = json!({ "value": o, "denominator_bound": bound });
        cert["agrees"] = json!(o == c.value);
    }
    let outcome = if verified.is_ok() { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("dk", outcome, cert).input("left", bd).input("right", cd))
}

fn grow(a: &GrowArgs, g: &Globals) -> Result<Report> {
    let (stage, name, digest) = match (&a.stage, &a.seed_space) {
        (Some(p), _) => {
            let (f, d) = load::<StageFile>(p)?;
            (f.stage()?, "stage", d)
        }
        (None, Some(p)) => {
            let (f, d) = load::<SpaceFile>(p)?;
            let bound = g.denominator_bound.context("seeding a stage needs --denominator-bound")?;
            let space = f.space()?;
            let mut st = Stage::seed(space.clone(), f.predicate()?, bound)?;
            if let Some(w) = &a.distance_predicate {
                st = st.with_distance_predicate(&label_indices(&space, w)?)?;
            }
            (st, "seed_space", d)
        }
        (None, None) => bail!("give --stage or --seed-space"),
    };
    let rule = match &a.template {
        None => GrowthRule::Free,
        Some(t) => match list(t).as_slice() {
            [l, k] => GrowthRule::Template { template: hamming_template(l.parse()?, k.parse()?), embedding: None },
            _ => bail!("--template expects length,alphabet"),
        },
    };
    let cfg = GrowthConfig { rounds: a.rounds, size_cap: a.cap, arity: a.arity, rule };
    let out = grow_stage(&stage, &cfg)?;
    let cert = json!({
        "stage": StageFile::emit(&out.stage),
        "points": out.stage.len(),
        "rounds_run": out.rounds_run,
        "saturated": out.saturated,
        "cap_exceeded": out.cap_exceeded,
        "template_dropped": out.template_dropped,
    });
    Ok(Report::new("grow", Outcome::Ok, cert).input(name, digest))
}

fn injectivity(a: &InjectivityArgs) -> Result<Report> {
    let (f, digest) = load::<StageFile>(&a.stage)?;
    let stage = f.stage()?;
    let den = a.denominator.unwrap_or(stage.denominator_bound());
    let r = extension_property_check(&stage, a.m, den);
    let unrealized: Vec<Value> = r
        .unrealized
        .iter()
        .take(20)
        .map(|(sub, f)| json!({ "subspace": labels(stage.space(), sub), "function": f }))
        .collect();
    let cert = json!({
        "subspace_size": r.subspace_size,
        "denominator": r.denominator,
        "total": r.total,
        "realized": r.realized,
        "fraction": format_rat(&r.fraction()),
        "unrealized_count": r.unrealized.len(),
        "unrealized_first": unrealized,
    });
    let outcome = if r.unrealized.is_empty() { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("injectivity", outcome, cert).input("stage", digest))
}

fn extend_iso(a: &ExtendIsoArgs, g: &Globals) -> Result<Report> {
    let (f, digest) = load::<SpaceFile>(&a.space)?;
    let space = f.space()?;
    let p = f.predicate()?;
    let src = label_indices(&space, &a.source)?;
    let tgt = label_indices(&space, &a.target)?;
    let eps = io::unit(&a.epsilon)?;
    let budget = usize::try_from(g.budget).unwrap_or(usize::MAX);
    let (outcome, cert) = match extend_partial_isometry(&space, p.as_deref(), &src, &tgt, eps, budget)? {
        Ok(e) => {
            let map: BTreeMap<&str, &str> = e.isometry.map().iter().enumerate().map(|(x, &y)| (space.label(x), space.label(y))).collect();
            (Outcome::Found, json!({ "map": map, "displacement": e.displacement, "nodes": e.nodes }))
        }
        Err(f) => (
            Outcome::NotFound,
            json!({
                "explored": f.explored,
                "exhausted": f.exhausted,
                "dk_lower_bound": f.dk_lower_bound,
                "certified_infeasible": f.certified_infeasible,
            }),
        ),
    };
    Ok(Report::new("extend-iso", outcome, cert).input("space", digest).budget(format!("{budget} search nodes")))
}

fn load_structure(path: &Path) -> Result<(ExpansionStructure, String)> {
    let (f, d) = load::<StructureFile>(path)?;
    Ok((f.structure()?, d))
}

fn eval_cmd(a: &EvalArgs) -> Result<Report> {
    let (m, digest) = load_structure(&a.structure)?;
    let phi = parse_formula(&a.formula)?;
    let (vars, points): (Vec<String>, Vec<String>) = list(&a.assign)
        .iter()
        .map(|s| s.split_once('=').map(|(v, l)| (v.to_string(), l.to_string())).ok_or_else(|| anyhow!("expected var=label, got {s:?}")))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let idx = indices(m.base(), &points)?;
    let v = eval(&phi, &m, &assignment(&vars, &idx))?;
    Ok(Report::new("eval", Outcome::Ok, json!({ "formula": phi.to_string(), "value": v })).input("structure", digest))
}

fn modulus(a: &ModulusArgs) -> Result<Report> {
    let phi = parse_formula(&a.formula)?;
    let (sig, inputs) = match &a.structure {
        Some(p) => {
            let (m, d) = load_structure(p)?;
            (m.signature(), Some(d))
        }
        None => (Signature::predicate_only(), None),
    };
    let k = inverse_modulus(&phi, &sig)?;
    let mut r = Report::new("modulus", Outcome::Ok, json!({ "formula": phi.to_string(), "inverse_modulus": format_rat(&k) }));
    if let Some(d) = inputs {
        r = r.input("structure", d);
    }
    Ok(r)
}

fn delta(a: &DeltaSeqArgs) -> Result<Report> {
    let (m, md) = load_structure(&a.pair.left)?;
    let (n, nd) = load_structure(&a.pair.right)?;
    let scheme = EnumerationScheme::standard(&m);
    let iv = delta_seq(&m, &n, &scheme, a.cutoff)?;
    let cert = json!({ "cutoff": a.cutoff, "slots": scheme.slots().len(), "lower": iv.lower.to_string(), "upper": iv.upper.to_string() });
    Ok(Report::new("delta-seq", Outcome::Ok, cert).input("left", md).input("right", nd))
}

fn load_group(a: &GroupArg) -> Result<(FiniteMetricSpace, IsometryGroup, String)> {
    let (f, d) = load::<SpaceFile>(&a.space)?;
    let space = f.space()?;
    let group = isometry_group(&space, f.predicate()?.as_deref(), a.group_cap)?;
    Ok((space, group, d))
}

fn counterexample(c: &SubgroupCounterexample) -> Value {
    match c {
        SubgroupCounterexample::Identity(v) => json!({ "axiom": "identity", "value": v }),
        SubgroupCounterexample::Symmetry { g, inverse } => json!({ "axiom": "symmetry", "g": format!("g{g}"), "inverse": format!("g{inverse}") }),
        SubgroupCounterexample::Subadditivity { g, h } => json!({ "axiom": "subadditivity", "g": format!("g{g}"), "h": format!("g{h}") }),
    }
}

fn subgroup_cert(group: &IsometryGroup, h: &GreySubgroup) -> Result<(bool, Value)> {
    let v = verify_subgroup(group, h.values())?;
    let check = match &v {
        Ok(c) => json!({ "holds": true, "checked": c.checked }),
        Err(c) => json!({ "holds": false, "counterexample": counterexample(c) }),
    };
    Ok((v.is_ok(), json!({ "provenance": h.provenance(), "table": grey_table(h.values()), "axioms": check })))
}

fn stabilizer(a: &GreyStabilizerArgs) -> Result<Report> {
    let (space, group, digest) = load_group(&a.group)?;
    let q = io::rational(&a.slope)?;
    let h = grey_stabilizer(&group, &space, q, &label_indices(&space, &a.tuple)?)?;
    let (ok, mut cert) = subgroup_cert(&group, &h)?;
    cert["group_order"] = json!(group.len());
    let outcome = if ok { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("grey-stabilizer", outcome, cert).input("space", digest))
}

fn grey_verify(a: &GreyVerifyArgs) -> Result<Report> {
    let (_, group, digest) = load_group(&a.group)?;
    let (table, td) = load::<BTreeMap<String, String>>(&a.table)?;
    let values = parse_grey_table(&table, group.len())?.values;
    let (outcome, cert) = match verify_subgroup(&group, &values)? {
        Ok(c) => (Outcome::Ok, json!({ "holds": true, "checked": c.checked, "group_order": group.len() })),
        Err(c) => (Outcome::Failed, json!({ "holds": false, "counterexample": counterexample(&c), "group_order": group.len() })),
    };
    Ok(Report::new("grey-verify", outcome, cert).input("space", digest).input("table", td))
}

fn grey_closure(a: &GreyClosureArgs) -> Result<Report> {
    let (space, group, digest) = load_group(&a.group)?;
    let generators = a
        .generators
        .iter()
        .map(|s| {
            let (q, t) = s.split_once(':').ok_or_else(|| anyhow!("expected slope:labels, got {s:?}"))?;
            Ok(grey_stabilizer(&group, &space, io::rational(q)?, &label_indices(&space, t)?)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let elements = if a.elements.is_empty() { vec![] } else { element_ids(&a.elements, &group)? };
    let scalars = a.scalars.iter().map(|s| io::rational(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    let fam = closure_family(&group, &generators, &elements, &scalars, a.depth, a.member_cap)?;
    let mut all_hold = true;
    let mut members = vec![];
    for h in &fam.subgroups {
        let (ok, c) = subgroup_cert(&group, h)?;
        all_hold &= ok;
        members.push(c);
    }
    let cert = json!({
        "group_order": group.len(),
        "depth_reached": fam.depth_reached,
        "depth_exceeded": fam.depth_exceeded,
        "subgroups": members.len(),
        "cosets": fam.cosets.len(),
        "all_axioms_hold": all_hold,
        "members": members,
    });
    let outcome = if all_hold { Outcome::Ok } else { Outcome::Failed };
    Ok(Report::new("grey-closure", outcome, cert).input("space", digest))
}

struct Loaded {
    family: ExpansionFamily,
    structures: Vec<ExpansionStructure>,
    inputs: Vec<(String, String)>,
    params: SearchParams,
}

fn load_pattern(p: &PatternArgs, g: &Globals) -> Result<Loaded> {
    let mut structures = vec![];
    let mut inputs = vec![];
    for (i, path) in p.structures.iter().enumerate() {
        let (m, d) = load_structure(path)?;
        structures.push(m);
        inputs.push((format!("structure{i}"), d));
    }
    let family = ExpansionFamily::new(structures.clone(), "command line")?;
    let params = SearchParams {
        n: p.n,
        epsilon: io::unit(&p.epsilon)?,
        r1: io::unit(&p.r1)?,
        r2: io::unit(&p.r2)?,
        budget: g.budget,
    };
    Ok(Loaded { family, structures, inputs, params })
}

fn with_inputs(mut r: Report, inputs: &[(String, String)]) -> Report {
    for (k, v) in inputs {
        r = r.input(k, v.clone());
    }
    r
}

/// Maps a search result to an outcome; budget exhaustion counts as not found.
fn search_report(
    command: &str,
    result: std::result::Result<SearchOutcome, StabilityError>,
    verify: impl Fn(&WitnessReport) -> std::result::Result<usize, StabilityError>,
    extra: impl Fn(&WitnessReport) -> Value,
    budget: u64,
) -> Result<Report> {
    let (outcome, cert) = match result {
        Ok(SearchOutcome::Found(w)) => {
            let checked = verify(&w)?;
            let summary = outcome_line(&SearchOutcome::Found(w.clone()));
            (Outcome::Found, json!({ "summary": summary, "verified_checks": checked, "labels": extra(&w), "witness": w }))
        }
        Ok(o @ SearchOutcome::NotFound { nodes }) => (Outcome::NotFound, json!({ "summary": outcome_line(&o), "nodes": nodes })),
        Err(StabilityError::BudgetExhausted(nodes)) => (
            Outcome::NotFound,
            json!({ "summary": format!("budget exhausted after {nodes} nodes"), "nodes": nodes, "budget_exhausted": true }),
        ),
        Err(e) => return Err(e.into()),
    };
    Ok(Report::new(command, outcome, cert).budget(format!("{budget} search nodes")))
}

fn tuple_search_cmd(command: &str, p: &PatternArgs, anchor: Option<&AnchorArgs>, pool_file: Option<&Path>, g: &Globals) -> Result<Report> {
    let l = load_pattern(p, g)?;
    let phi = split(&p.formula, &p.left, &p.right)?;
    let base = l.family.base().clone();
    let mut inputs = l.inputs.clone();
    let pools = match pool_file {
        Some(path) => {
            let (f, d) = load::<PoolFile>(path)?;
            inputs.push(("pool".into(), d));
            let conv = |ts: &[Vec<String>]| ts.iter().map(|t| indices(&base, t)).collect::<std::result::Result<Vec<_>, _>>();
            TuplePools { left: conv(&f.left)?, right: conv(&f.right)? }
        }
        None => TuplePools::all(base.len(), phi.left.len(), phi.right.len()),
    };
    let anchor = match anchor {
        Some(a) => Some((label_indices(&base, &a.anchor_left)?, label_indices(&base, &a.anchor_right)?)),
        None => None,
    };
    let anchor_ref = anchor.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
    let result = match anchor_ref {
        Some(a) => anchored_order_search(&l.family, &phi, a, &pools, &l.params),
        None => order_search(&l.family, &phi, &pools, &l.params),
    };
    let names = |w: &WitnessReport| match &w.witness {
        urylab::stability::Witness::Tuples { left, right } => json!({
            "left": left.iter().map(|t| labels(&base, t)).collect::<Vec<_>>(),
            "right": right.iter().map(|t| labels(&base, t)).collect::<Vec<_>>(),
        }),
        urylab::stability::Witness::Elements { .. } => Value::Null,
    };
    let r = search_report(command, result, |w| verify_tuple_witness(&l.family, &phi, anchor_ref, w), names, g.budget)?;
    Ok(with_inputs(r, &inputs))
}

struct GroupLoaded {
    setup: FormulaGreySetup,
    loaded: Loaded,
    original: SplitFormula,
    pool: Vec<usize>,
}

fn load_group_search(a: &GroupSearchArgs, g: &Globals) -> Result<GroupLoaded> {
    let loaded = load_pattern(&a.pattern, g)?;
    let original = split(&a.pattern.formula, &a.pattern.left, &a.pattern.right)?;
    let first = &loaded.structures[0];
    let base = first.base().clone();
    let group = isometry_group(&base, first.predicate(), a.group_cap)?;
    let pool = element_ids(&a.elements, &group)?;
    let anchor = (label_indices(&base, &a.anchor.anchor_left)?, label_indices(&base, &a.anchor.anchor_right)?);
    let norm = original.normalized(loaded.params.r1, loaded.params.r2)?;
    let setup = FormulaGreySetup::new(group, &loaded.structures, norm, anchor)?;
    Ok(GroupLoaded { setup, loaded, original, pool })
}

fn group_search_cmd(command: &str, a: &GroupSearchArgs, g: &Globals) -> Result<Report> {
    let gl = load_group_search(a, g)?;
    let inst = &gl.setup.instance;
    let y: Vec<usize> = (0..gl.setup.structures.len()).collect();
    let result = if command == "ip-search" {
        ip_search(inst, &y, &gl.pool, &gl.loaded.params)
    } else {
        group_order_search(inst, &y, &gl.pool, &gl.loaded.params)
    };
    let extra = |_: &WitnessReport| json!({ "group_order": inst.group.len(), "carrier": y.len(), "slope": format_rat(&gl.setup.slope) });
    let r = search_report(command, result, |w| verify_group_witness(inst, w), extra, g.budget)?;
    Ok(with_inputs(r, &gl.loaded.inputs))
}

fn convert(a: &ConvertArgs, g: &Globals) -> Result<Report> {
    let gl = load_group_search(&a.search, g)?;
    let (w, wd) = load::<WitnessReport>(&a.witness)?;
    let mut inputs = gl.loaded.inputs.clone();
    inputs.push(("witness".into(), wd));
    let setup = &gl.setup;
    let cert = match a.to {
        Direction::Group => {
            if w.kind != WitnessKind::Anchored {
                bail!("expected an anchored witness, got {:?}", w.kind);
            }
            let c = anchored_to_group(setup, &gl.loaded.family, &gl.original, &w, &gl.pool)?;
            let checked = verify_group_witness(&setup.instance, &c.report)?;
            json!({ "epsilon_in": c.epsilon_in, "epsilon_out": c.epsilon_out, "displacement": c.displacement, "verified_checks": checked, "witness": c.report })
        }
        Direction::Tuple => {
            let c = group_to_anchored(setup, &w)?;
            let anchor = (setup.anchor.0.as_slice(), setup.anchor.1.as_slice());
            let checked = verify_tuple_witness(&setup.family()?, &setup.phi, Some(anchor), &c.report)?;
            json!({ "epsilon_in": c.epsilon_in, "epsilon_out": c.epsilon_out, "displacement": c.displacement, "verified_checks": checked, "witness": c.report })
        }
        Direction::Order => {
            let order = ip_to_order(&setup.instance, &w)?;
            let checked = verify_group_witness(&setup.instance, &order)?;
            json!({ "epsilon_in": w.params.epsilon, "epsilon_out": order.params.epsilon, "verified_checks": checked, "witness": order })
        }
    };
    Ok(with_inputs(Report::new("convert", Outcome::Ok, cert), &inputs))
}

fn load_sequence(a: &LimitArgs) -> Result<(ExpansionStructure, Vec<(Vec<usize>, Vec<usize>)>, Vec<(String, String)>)> {
    let (m, md) = load_structure(&a.structure)?;
    let (s, sd) = load::<SequenceFile>(&a.sequence)?;
    let seq = s
        .pairs
        .iter()
        .map(|(l, r)| Ok((indices(m.base(), l)?, indices(m.base(), r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, seq, vec![("structure".into(), md), ("sequence".into(), sd)]))
}

fn limits_failure(command: &str, e: StabilityError, inputs: &[(String, String)]) -> Result<Report> {
    match e {
        StabilityError::InconclusiveTails { .. } => {
            Ok(with_inputs(Report::new(command, Outcome::NotFound, json!({ "inconclusive": e.to_string() })), inputs))
        }
        e => Err(e.into()),
    }
}

fn double_limit(a: &DoubleLimitArgs) -> Result<Report> {
    let l = &a.limits;
    let (m, seq, inputs) = load_sequence(l)?;
    let phi = split(&l.formula, &l.left, &l.right)?;
    let thetas = a.thetas.iter().map(|t| split(t, &l.left, &l.right)).collect::<Result<Vec<_>>>()?;
    match double_limit_check(&m, &seq, &phi, &thetas, io::unit(&l.tolerance)?, l.window) {
        Ok(r) => {
            let outcome = if r.instability_evidence { Outcome::Found } else { Outcome::NotFound };
            Ok(with_inputs(Report::new("double-limit", outcome, serde_json::to_value(&r)?), &inputs))
        }
        Err(e) => limits_failure("double-limit", e, &inputs),
    }
}

fn stable_equiv(a: &StableEquivArgs) -> Result<Report> {
    let l = &a.limits;
    let (m, seq, inputs) = load_sequence(l)?;
    let phi = split(&l.formula, &l.left, &l.right)?;
    let theta = split(&a.theta, &l.left, &l.right)?;
    match stable_equiv_check(&m, &seq, &phi, &theta, io::unit(&l.tolerance)?, l.window) {
        Ok(r) => {
            let outcome = if r.instability_evidence { Outcome::Found } else { Outcome::NotFound };
            Ok(with_inputs(Report::new("stable-equiv", outcome, serde_json::to_value(&r)?), &inputs))
        }
        Err(e) => limits_failure("stable-equiv", e, &inputs),
    }
}

fn ramsey(a: &RamseyArgs) -> Result<Report> {
    let (f, digest) = load::<ArrayFile>(&a.values)?;
    let values = f.array()?;
    let tol = io::unit(&a.tolerance)?;
    let result = match a.target {
        Some(t) => ramsey_extract(&values, tol, t),
        None => ramsey_longest(&values, tol),
    };
    let (outcome, cert) = match result {
        Ok(c) => {
            let verified = verify_ramsey(&values, tol, &c);
            (if verified { Outcome::Found } else { Outcome::Failed }, json!({ "verified": verified, "subsequence": c }))
        }
        Err(e @ StabilityError::TargetLengthInfeasible { .. }) => (Outcome::NotFound, json!({ "reason": e.to_string() })),
        Err(e) => return Err(e.into()),
    };
    Ok(Report::new("ramsey", outcome, cert).input("values", digest))
}

fn sample(a: &SampleArgs, g: &Globals) -> Result<Report> {
    let seed = g.seed.context("sample-space is randomized and needs --seed")?;
    if a.denominator <= 0 {
        bail!("denominator must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = random_space(&mut rng, a.points, a.denominator, "x");
    let p = a.predicate.then(|| random_lipschitz(&mut rng, &space, a.denominator));
    let cert = json!({ "seed": seed, "space": SpaceFile::emit(&space, p.as_deref()) });
    Ok(Report::new("sample-space", Outcome::Ok, cert))
}
