//! Reproducible finite stages of the rational Urysohn space: growth by
//! Katětov extension, the finite extension-property checker, attachment of
//! near-isometric copies and the dense family of predicate-tagged tuples.

use std::collections::{BTreeSet, HashSet};

use num::Integer;
use thiserror::Error;

use crate::dk::{dk_distance, TupleStructure};
use crate::metric::{is_katetov_over, one_point_extend, FiniteMetricSpace, KatetovFunction, MetricError};
use crate::predicate::{distance_to_set, k_membership, PredicateError};
use crate::rational::{Q01, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("denominator bound must be positive, got {0}")]
    InvalidBound(i64),
    #[error("value {0} is not a multiple of 1/{1}")]
    OffGrid(Q01, i64),
    #[error("log has {0} entries but the stage has only {1} points")]
    LogTooLong(usize, usize),
    #[error("replaying the log does not reproduce the stage (first difference at point {0})")]
    ReplayMismatch(usize),
    #[error("seed does not embed into the template")]
    NoTemplateEmbedding,
    #[error("attachment at t = {t} is infeasible: needs 0 < t <= 1 and t >= {required}")]
    InfeasibleAttachment { t: Q01, required: Q01 },
    #[error("matching entry ({0}, {1}) is out of range or repeats a point")]
    BadMatching(usize, usize),
    #[error("arity must be positive")]
    ZeroArity,
}

/// One added point: the round it was added in, its label and its distances
/// to every earlier point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub round: usize,
    pub label: String,
    pub katetov: Vec<Q01>,
}

/// A finite stage: a seed space followed by logged one-point extensions.
///
/// When a predicate is carried, each added point receives the largest
/// 1-Lipschitz extension `P(w) = min(1, min_a P(a) + d(a,w))`, which equals
/// `d(w, B0)` whenever `P = d(., B0)` for a set `B0` of stage points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    space: FiniteMetricSpace,
    predicate: Option<Vec<Q01>>,
    log: Vec<LogEntry>,
    denominator_bound: i64,
}

fn check_grid(values: impl IntoIterator<Item = Q01>, bound: i64) -> Result<(), StageError> {
    match values.into_iter().find(|q| !q.on_grid(bound)) {
        Some(q) => Err(StageError::OffGrid(q, bound)),
        None => Ok(()),
    }
}

fn extend_predicate(space: &FiniteMetricSpace, p: &[Q01], new: usize) -> Q01 {
    p.iter().enumerate().map(|(a, &pa)| pa.tadd(space.d(a, new))).min().unwrap_or(Q01::ONE)
}

impl Stage {
    /// A stage consisting of `space` alone. Distances and predicate values
    /// must be multiples of `1/denominator_bound`; the predicate must be in 𝒦.
    pub fn seed(space: FiniteMetricSpace, predicate: Option<Vec<Q01>>, denominator_bound: i64) -> Result<Self, StageError> {
        if denominator_bound <= 0 {
            return Err(StageError::InvalidBound(denominator_bound));
        }
        check_grid(space.matrix().iter().flatten().copied(), denominator_bound)?;
        if let Some(p) = &predicate {
            k_membership(&space, p)?;
            check_grid(p.iter().copied(), denominator_bound)?;
        }
        Ok(Stage { space, predicate, log: vec![], denominator_bound })
    }

    /// Rebuilds a stage from its seed and log.
    pub fn replay(
        seed: FiniteMetricSpace,
        seed_predicate: Option<Vec<Q01>>,
        log: &[LogEntry],
        denominator_bound: i64,
    ) -> Result<Self, StageError> {
        let mut stage = Stage::seed(seed, seed_predicate, denominator_bound)?;
        for entry in log {
            check_grid(entry.katetov.iter().copied(), denominator_bound)?;
            let f = crate::metric::katetov_validate(&stage.space, &entry.katetov)?;
            stage.push(entry.round, &entry.label, f)?;
        }
        Ok(stage)
    }

    /// Accepts a full stage description only if replaying its log from the
    /// implied seed reproduces it exactly.
    pub fn from_parts(
        space: FiniteMetricSpace,
        predicate: Option<Vec<Q01>>,
        log: Vec<LogEntry>,
        denominator_bound: i64,
    ) -> Result<Self, StageError> {
        if log.len() > space.len() {
            return Err(StageError::LogTooLong(log.len(), space.len()));
        }
        let k = space.len() - log.len();
        let seed_idx: Vec<usize> = (0..k).collect();
        let seed_p = predicate.as_ref().map(|p| p[..k].to_vec());
        let replayed = Stage::replay(space.subspace(&seed_idx), seed_p, &log, denominator_bound)?;
        let claimed = Stage { space, predicate, log, denominator_bound };
        if replayed != claimed {
            let first = (0..claimed.len())
                .find(|&i| {
                    replayed.space.label(i) != claimed.space.label(i)
                        || replayed.space.matrix()[i] != claimed.space.matrix()[i]
                        || replayed.predicate.as_ref().map(|p| p[i]) != claimed.predicate.as_ref().map(|p| p[i])
                })
                .unwrap_or(0);
            return Err(StageError::ReplayMismatch(first));
        }
        Ok(claimed)
    }

    fn push(&mut self, round: usize, label: &str, f: KatetovFunction) -> Result<(), StageError> {
        let katetov = f.values().to_vec();
        self.space = one_point_extend(&self.space, &f, label)?;
        if let Some(p) = &mut self.predicate {
            let n = self.space.len() - 1;
            let v = extend_predicate(&self.space, p, n);
            p.push(v);
        }
        self.log.push(LogEntry { round, label: label.to_string(), katetov });
        Ok(())
    }

    pub fn space(&self) -> &FiniteMetricSpace {
        &self.space
    }

    pub fn predicate(&self) -> Option<&[Q01]> {
        self.predicate.as_deref()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn denominator_bound(&self) -> i64 {
        self.denominator_bound
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn seed_len(&self) -> usize {
        self.space.len() - self.log.len()
    }

    /// The same stage carrying `P = d(., witnesses)`.
    pub fn with_distance_predicate(&self, witnesses: &[usize]) -> Result<Stage, StageError> {
        self.space.check_indices(witnesses)?;
        let p = (0..self.len()).map(|x| distance_to_set(&self.space, x, witnesses)).collect();
        Ok(Stage { predicate: Some(p), ..self.clone() })
    }
}

/// How an unrealized Katětov function gets its new point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrowthRule {
    /// The largest Katětov extension of the function to the whole stage.
    Free,
    /// Copy the first point of a finite template that realizes the function
    /// over the embedded subspace. The stage must embed into the template;
    /// `embedding` gives the image of each current stage point, or is found
    /// by search when absent.
    Template { template: FiniteMetricSpace, embedding: Option<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthConfig {
    pub rounds: usize,
    pub size_cap: usize,
    pub arity: usize,
    pub rule: GrowthRule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthOutcome {
    pub stage: Stage,
    pub rounds_run: usize,
    /// A round completed without adding any point.
    pub saturated: bool,
    /// Growth stopped at the size cap; the stage is partial.
    pub cap_exceeded: bool,
    /// The template could not realize some function and growth continued
    /// under the free rule.
    pub template_dropped: bool,
}

/// Every `k`-subset of `0..n` with `1 <= k <= arity`, ordered by size then
/// lexicographically.
pub fn index_subsets(n: usize, arity: usize) -> Vec<Vec<usize>> {
    let mut out = vec![];
    for k in 1..=arity.min(n) {
        let mut cur: Vec<usize> = (0..k).collect();
        loop {
            out.push(cur.clone());
            let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
            cur[i] += 1;
            for j in i + 1..k {
                cur[j] = cur[j - 1] + 1;
            }
        }
    }
    out
}

/// Katětov functions over `sub` with values in `{1/D, ..., 1}`, lexicographic.
pub fn positive_katetov_functions(space: &FiniteMetricSpace, sub: &[usize], denominator: i64) -> Vec<Vec<Q01>> {
    let values: Vec<Q01> = Q01::grid(denominator).into_iter().skip(1).collect();
    let mut out = vec![vec![]];
    for _ in sub {
        out = out
            .into_iter()
            .flat_map(|v: Vec<Q01>| {
                values.iter().map(move |&q| {
                    let mut w = v.clone();
                    w.push(q);
                    w
                })
            })
            .collect();
    }
    out.retain(|f| is_katetov_over(space, sub, f));
    out
}

fn profile(space: &FiniteMetricSpace, z: usize, sub: &[usize]) -> Vec<Q01> {
    sub.iter().map(|&a| space.d(z, a)).collect()
}

fn realized_profiles(space: &FiniteMetricSpace, sub: &[usize]) -> HashSet<Vec<Q01>> {
    (0..space.len()).map(|z| profile(space, z, sub)).collect()
}

/// Hamming scheme on words of length `length` over `alphabet` letters with
/// `d = Hamming distance / length`. With three or more letters, every
/// triangle-feasible pair profile over two points is realized, so the scheme
/// has the two-point extension property at denominator `length`.
pub fn hamming_template(length: usize, alphabet: usize) -> FiniteMetricSpace {
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..length {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..alphabet).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    let labels = words.iter().map(|w| format!("h{}", w.iter().map(|a| a.to_string()).collect::<String>())).collect();
    let dist = words
        .iter()
        .map(|u| {
            words
                .iter()
                .map(|v| Q01::frac(u.iter().zip(v).filter(|(a, b)| a != b).count() as i64, length as i64))
                .collect()
        })
        .collect();
    FiniteMetricSpace::from_matrix(labels, dist).expect("Hamming distance is a metric")
}

/// An isometric embedding of `seed` into `target`, lexicographically first.
pub fn find_embedding(seed: &FiniteMetricSpace, target: &FiniteMetricSpace) -> Option<Vec<usize>> {
    fn go(seed: &FiniteMetricSpace, target: &FiniteMetricSpace, map: &mut Vec<usize>) -> bool {
        let x = map.len();
        if x == seed.len() {
            return true;
        }
        for y in 0..target.len() {
            if !map.contains(&y) && (0..x).all(|z| seed.d(z, x) == target.d(map[z], y)) {
                map.push(y);
                if go(seed, target, map) {
                    return true;
                }
                map.pop();
            }
        }
        false
    }
    let mut map = vec![];
    go(seed, target, &mut map).then_some(map)
}

/// Grows the stage round by round. Each round snapshots the current points,
/// walks the subsets of size `1..=arity` of the snapshot in order and, for
/// each positive grid Katětov function over the subset not realized by any
/// current point, adds one realizing point. Stops when a round adds nothing,
/// after `rounds` rounds, or at `size_cap` points.
pub fn grow_stage(stage: &Stage, config: &GrowthConfig) -> Result<GrowthOutcome, StageError> {
    if config.arity == 0 {
        return Err(StageError::ZeroArity);
    }
    let mut stage = stage.clone();
    let den = stage.denominator_bound;
    let mut template = match &config.rule {
        GrowthRule::Free => None,
        GrowthRule::Template { template, embedding } => {
            let emb = match embedding {
                Some(e) => {
                    let ok = e.len() == stage.len()
                        && e.iter().all(|&t| t < template.len())
                        && e.iter().collect::<BTreeSet<_>>().len() == e.len()
                        && (0..e.len()).all(|i| (0..e.len()).all(|j| stage.space.d(i, j) == template.d(e[i], e[j])));
                    if !ok {
                        return Err(StageError::NoTemplateEmbedding);
                    }
                    e.clone()
                }
                None => find_embedding(&stage.space, template).ok_or(StageError::NoTemplateEmbedding)?,
            };
            Some((template, emb))
        }
    };
    let mut out = GrowthOutcome {
        stage: stage.clone(),
        rounds_run: 0,
        saturated: false,
        cap_exceeded: false,
        template_dropped: false,
    };
    for round in 1..=config.rounds {
        let snapshot = stage.len();
        let mut added = 0;
        for sub in index_subsets(snapshot, config.arity) {
            let mut realized = realized_profiles(&stage.space, &sub);
            for f in positive_katetov_functions(&stage.space, &sub, den) {
                if realized.contains(&f) {
                    continue;
                }
                if stage.len() >= config.size_cap {
                    out.stage = stage;
                    out.rounds_run = round;
                    out.cap_exceeded = true;
                    return Ok(out);
                }
                let pick = template.as_ref().and_then(|(t, emb)| {
                    let used: BTreeSet<usize> = emb.iter().copied().collect();
                    (0..t.len()).find(|&y| !used.contains(&y) && sub.iter().zip(&f).all(|(&a, &v)| t.d(emb[a], y) == v))
                });
                let katetov = match (pick, &template) {
                    (Some(y), Some((t, emb))) => {
                        let values = emb.iter().map(|&e| t.d(e, y)).collect::<Vec<_>>();
                        crate::metric::katetov_validate(&stage.space, &values)?
                    }
                    _ => {
                        if template.take().is_some() {
                            out.template_dropped = true;
                        }
                        KatetovFunction::maximal_extension(&stage.space, &sub, &f)
                    }
                };
                let label = stage.space.fresh_label(&format!("u{}", stage.len()));
                stage.push(round, &label, katetov)?;
                if let (Some(y), Some((_, emb))) = (pick, template.as_mut()) {
                    emb.push(y);
                }
                realized.insert(profile(&stage.space, stage.len() - 1, &sub));
                added += 1;
            }
        }
        out.rounds_run = round;
        if added == 0 {
            out.saturated = true;
            break;
        }
    }
    out.stage = stage;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionReport {
    pub subspace_size: usize,
    pub denominator: i64,
    pub total: usize,
    pub realized: usize,
    /// `(subspace, function)` pairs with no realizing stage point.
    pub unrealized: Vec<(Vec<usize>, Vec<Q01>)>,
}

impl ExtensionReport {
    pub fn fraction(&self) -> Rat {
        if self.total == 0 {
            Rat::from_integer(1)
        } else {
            Rat::new(self.realized as i64, self.total as i64)
        }
    }
}

/// For every subspace of size `1..=m` and every positive Katětov function over
/// it with values in multiples of `1/denominator`, checks whether a stage
/// point realizes it exactly.
pub fn extension_property_check(stage: &Stage, m: usize, denominator: i64) -> ExtensionReport {
    let space = &stage.space;
    let mut report = ExtensionReport { subspace_size: m, denominator, total: 0, realized: 0, unrealized: vec![] };
    for sub in index_subsets(space.len(), m) {
        let realized = realized_profiles(space, &sub);
        for f in positive_katetov_functions(space, &sub, denominator) {
            report.total += 1;
            if realized.contains(&f) {
                report.realized += 1;
            } else {
                report.unrealized.push((sub.clone(), f));
            }
        }
    }
    report
}

/// Smallest attachment distance that keeps the joint space metric: half the
/// largest discrepancy between matched distances.
pub fn attachment_threshold(b: &FiniteMetricSpace, f: &FiniteMetricSpace, matching: &[(usize, usize)]) -> Q01 {
    let gap = matching
        .iter()
        .flat_map(|&(i, j)| matching.iter().map(move |&(k, l)| b.d(i, k).abs_diff(f.d(j, l))))
        .max()
        .unwrap_or(Q01::ZERO);
    gap.scale(Rat::new(1, 2))
}

/// Joins `b` and a copy of `f` so that matched pairs sit at distance `t` and
/// every other cross distance is `min(1, min over matched (z1,z2) of
/// d(x,z1) + t + d(z2,y))`. Points of `b` come first; labels of `f` that
/// collide with `b` are renamed.
pub fn attach_at_distance(
    b: &FiniteMetricSpace,
    f: &FiniteMetricSpace,
    matching: &[(usize, usize)],
    t: Q01,
) -> Result<FiniteMetricSpace, StageError> {
    let mut seen_b = BTreeSet::new();
    let mut seen_f = BTreeSet::new();
    for &(i, j) in matching {
        if i >= b.len() || j >= f.len() || !seen_b.insert(i) || !seen_f.insert(j) {
            return Err(StageError::BadMatching(i, j));
        }
    }
    let required = attachment_threshold(b, f, matching);
    if t.is_zero() || t < required {
        return Err(StageError::InfeasibleAttachment { t, required });
    }
    let f = FiniteMetricSpace::relabel_apart(b, f, &[]);
    let (nb, nf) = (b.len(), f.len());
    let mut dist = vec![vec![Q01::ZERO; nb + nf]; nb + nf];
    for x in 0..nb {
        for y in 0..nb {
            dist[x][y] = b.d(x, y);
        }
    }
    for x in 0..nf {
        for y in 0..nf {
            dist[nb + x][nb + y] = f.d(x, y);
        }
    }
    for x in 0..nb {
        for y in 0..nf {
            let v = matching
                .iter()
                .map(|&(z1, z2)| b.d(x, z1).tadd(t).tadd(f.d(z2, y)))
                .min()
                .unwrap_or(Q01::ONE);
            dist[x][nb + y] = v;
            dist[nb + y][x] = v;
        }
    }
    let labels = b.labels().iter().chain(f.labels()).cloned().collect();
    FiniteMetricSpace::from_matrix(labels, dist).map_err(|_| StageError::InfeasibleAttachment { t, required })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseFamilyReport {
    pub n: usize,
    pub epsilon: Q01,
    /// Distinct n-point structures `(d, P_ℓ)` obtained from tuple-type
    /// representatives of length `n + ℓ0` and tag sets `ℓ`.
    pub family: Vec<TupleStructure>,
    /// Tuple-type representatives per `ℓ0 = 0..=n`.
    pub representatives: Vec<usize>,
    /// Number of n-point grid 𝒦-structures tested for coverage.
    pub targets: usize,
    pub covered: usize,
    /// First few uncovered targets.
    pub uncovered: Vec<TupleStructure>,
    /// Coverage fell below 100%.
    pub stage_too_small: bool,
}

impl DenseFamilyReport {
    pub fn coverage(&self) -> Rat {
        if self.targets == 0 {
            Rat::from_integer(1)
        } else {
            Rat::new(self.covered as i64, self.targets as i64)
        }
    }
}

/// One representative per metric type of `len`-tuples of stage points,
/// found by extending representatives of shorter tuples by every point.
pub fn tuple_type_representatives(space: &FiniteMetricSpace, len: usize) -> Vec<Vec<usize>> {
    let mut reps: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..len {
        let mut seen = BTreeSet::new();
        let mut next = vec![];
        for r in &reps {
            for x in 0..space.len() {
                let mut t = r.clone();
                t.push(x);
                if seen.insert(TupleStructure::of_metric(space, &t).d) {
                    next.push(t);
                }
            }
        }
        reps = next;
    }
    reps
}

/// Builds the family of predicate-tagged n-point structures: for each
/// `ℓ0 <= n`, each tuple-type representative `f` of length `n + ℓ0` and each
/// index set `ℓ` of size at most `n`, the first `n` points of `f` with
/// `P(x) = d(x, {f_i : i in ℓ})`. Coverage is measured against every n-point
/// space with distances and 1-Lipschitz predicate values in multiples of
/// `1/stage bound`, by `d^𝒦 <= ε`.
pub fn dense_orbit_family(stage: &Stage, n: usize, epsilon: Q01) -> DenseFamilyReport {
    let space = &stage.space;
    let mut family = BTreeSet::new();
    let mut representatives = vec![];
    for l0 in 0..=n {
        let reps = tuple_type_representatives(space, n + l0);
        representatives.push(reps.len());
        let tags: Vec<Vec<usize>> =
            std::iter::once(vec![]).chain(index_subsets(n + l0, n)).collect();
        for r in &reps {
            for tag in &tags {
                let set: Vec<usize> = tag.iter().map(|&i| r[i]).collect();
                let head = &r[..n];
                family.insert(TupleStructure {
                    d: head.iter().map(|&i| head.iter().map(|&j| space.d(i, j)).collect()).collect(),
                    p: head.iter().map(|&x| distance_to_set(space, x, &set)).collect(),
                });
            }
        }
    }
    let family: Vec<TupleStructure> = family.into_iter().collect();
    let den = stage.denominator_bound;
    let mut report = DenseFamilyReport {
        n,
        epsilon,
        family,
        representatives,
        targets: 0,
        covered: 0,
        uncovered: vec![],
        stage_too_small: false,
    };
    for base in crate::sample::all_grid_spaces(n, den, "x") {
        for p in crate::sample::all_grid_vectors(n, den) {
            if k_membership(&base, &p).is_err() {
                continue;
            }
            report.targets += 1;
            let target = TupleStructure::of_metric(&base, &(0..n).collect::<Vec<_>>());
            let target = TupleStructure { p, ..target };
            let hit = report.family.iter().any(|m| dk_distance(&target, m).is_ok_and(|c| c.value <= epsilon));
            if hit {
                report.covered += 1;
            } else if report.uncovered.len() < 16 {
                report.uncovered.push(target);
            }
        }
    }
    report.stage_too_small = report.covered < report.targets;
    report
}

/// Least common multiple of the denominators of all stage distances and
/// predicate values.
pub fn stage_denominator(stage: &Stage) -> i64 {
    stage
        .space
        .matrix()
        .iter()
        .flatten()
        .chain(stage.predicate.iter().flatten())
        .fold(1i64, |acc, q| acc.lcm(q.value().denom()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(bound: i64) -> Stage {
        Stage::seed(FiniteMetricSpace::singleton("s"), None, bound).unwrap()
    }

    fn free(rounds: usize) -> GrowthConfig {
        GrowthConfig { rounds, size_cap: 1000, arity: 1, rule: GrowthRule::Free }
    }

    #[test]
    fn one_round_from_a_point() {
        let out = grow_stage(&seed(2), &free(1)).unwrap();
        let s = out.stage.space();
        assert_eq!(s.len(), 3);
        assert_eq!(s.d(0, 1), Q01::frac(1, 2));
        assert_eq!(s.d(0, 2), Q01::ONE);
        assert_eq!(out.stage.log().len(), 2);
    }

    #[test]
    fn zero_rounds_is_identity() {
        let st = seed(4);
        assert_eq!(grow_stage(&st, &free(0)).unwrap().stage, st);
    }

    #[test]
    fn replay_reproduces() {
        let out = grow_stage(&seed(2), &GrowthConfig { arity: 2, ..free(2) }).unwrap();
        let st = &out.stage;
        let k = st.seed_len();
        let again = Stage::replay(st.space().subspace(&(0..k).collect::<Vec<_>>()), None, st.log(), 2).unwrap();
        assert_eq!(&again, st);
        let parts = Stage::from_parts(st.space().clone(), None, st.log().to_vec(), 2).unwrap();
        assert_eq!(&parts, st);
    }

    #[test]
    fn size_cap_stops_growth() {
        let out = grow_stage(&seed(4), &GrowthConfig { size_cap: 3, ..free(5) }).unwrap();
        assert!(out.cap_exceeded);
        assert_eq!(out.stage.len(), 3);
    }

    #[test]
    fn extension_check_examples() {
        let st = seed(2);
        let r = extension_property_check(&st, 1, 2);
        assert_eq!((r.total, r.realized), (2, 0));
        assert_eq!(r.unrealized.len(), 2);
        let grown = grow_stage(&st, &free(1)).unwrap().stage;
        let r = extension_property_check(&grown, 1, 1);
        assert_eq!(r.fraction(), Rat::from_integer(1));
    }

    #[test]
    fn template_saturates_small() {
        let t = hamming_template(2, 3);
        assert_eq!(t.len(), 9);
        let cfg = GrowthConfig {
            rounds: 50,
            size_cap: 100,
            arity: 2,
            rule: GrowthRule::Template { template: t, embedding: None },
        };
        let out = grow_stage(&seed(2), &cfg).unwrap();
        assert!(out.saturated && !out.template_dropped);
        let r = extension_property_check(&out.stage, 2, 2);
        assert_eq!(r.realized, r.total);
    }

    #[test]
    fn attachment_examples() {
        let b = FiniteMetricSpace::from_pairs(vec!["a".into(), "b".into()], &[("a".into(), "b".into(), Q01::frac(1, 2))])
            .unwrap();
        let j = attach_at_distance(&b, &b, &[(0, 0), (1, 1)], Q01::frac(1, 4)).unwrap();
        assert_eq!(j.d(0, 2), Q01::frac(1, 4));
        assert_eq!(j.d(1, 3), Q01::frac(1, 4));
        assert_eq!(j.d(0, 3), Q01::frac(3, 4));
        let c = FiniteMetricSpace::from_pairs(vec!["a".into(), "b".into()], &[("a".into(), "b".into(), Q01::ONE)])
            .unwrap();
        assert_eq!(attachment_threshold(&b, &c, &[(0, 0), (1, 1)]), Q01::frac(1, 4));
        assert!(matches!(
            attach_at_distance(&b, &c, &[(0, 0), (1, 1)], Q01::frac(1, 8)),
            Err(StageError::InfeasibleAttachment { .. })
        ));
        let p = attach_at_distance(&FiniteMetricSpace::singleton("x"), &FiniteMetricSpace::singleton("x"), &[(0, 0)], Q01::frac(1, 2))
            .unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.d(0, 1), Q01::frac(1, 2));
    }

    #[test]
    fn dense_family_single_point() {
        let st = grow_stage(&seed(4), &free(1)).unwrap().stage;
        let r = dense_orbit_family(&st, 1, Q01::frac(1, 2));
        assert_eq!(r.targets, 5);
        assert!(!r.stage_too_small);
        let exact = dense_orbit_family(&st, 1, Q01::ZERO);
        assert_eq!(exact.covered, 5);
    }
}
