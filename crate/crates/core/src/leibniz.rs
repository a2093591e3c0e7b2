//! Leibniz-type rules checked on concrete instances: both sides are computed
//! (exactly where a polyhedral model exists, by the sampling oracle
//! otherwise) and compared by sample inclusion.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::coderivative::{
    check_adjoint_triviality, check_slater_integrable, coderivative_node,
    coderivative_polyhedral_graph, SliceKind,
};
use crate::error::{check_dim, Error, Result};
use crate::expected::{
    enumerate_selections, evaluate_expected_map, node_values, selection_mapping, SelectionFunction,
};
use crate::functions::{FnScalar, ScalarFn, ScalarFunction};
use crate::geometry::{
    excess, weighted_minkowski, GeneratedSet, PointSet, PolyhedralUnion, Polytope,
};
use crate::integrand::{ball_grid, expected_local_graph, NodeMap, RandomMap};
use crate::linalg::{cartesian, concat, nnls, Matrix, Vector};
use crate::lipschitz::{
    check_integrable_local_lipschitz, check_lipschitz_like_deterministic, check_quasi_lipschitz,
    DeterministicMap, LipschitzProperty, LipschitzReport, ModulusField, NestedGrid,
};
use crate::measure::MeasureSpace;
use crate::normal_cone::{
    max_subdifferential, regular_subdifferential, unit_directions, ACTIVE_TOL,
};
use crate::oracle::{oracle_normal_cone, slice_directions, GraphOracle, RadiiSchedule, SetOracle};
use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    RegularPointwise,
    LimitingUnion,
    LimitingLipschitzVariant,
    SingleValued,
    EqualityCase,
    FirstOrderSubdiff,
    FirstOrderEquality,
    CompositeAmenable,
    ConstraintSpecialized,
    EimLipschitzCertificate,
    SecondOrderCombined,
    SecondOrderBasic,
    SecondOrderMax,
    SequentialWitness,
}

impl RuleId {
    pub const ALL: [RuleId; 14] = [
        RuleId::RegularPointwise,
        RuleId::LimitingUnion,
        RuleId::LimitingLipschitzVariant,
        RuleId::SingleValued,
        RuleId::EqualityCase,
        RuleId::FirstOrderSubdiff,
        RuleId::FirstOrderEquality,
        RuleId::CompositeAmenable,
        RuleId::ConstraintSpecialized,
        RuleId::EimLipschitzCertificate,
        RuleId::SecondOrderCombined,
        RuleId::SecondOrderBasic,
        RuleId::SecondOrderMax,
        RuleId::SequentialWitness,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::RegularPointwise => "regular_pointwise",
            RuleId::LimitingUnion => "limiting_union",
            RuleId::LimitingLipschitzVariant => "limiting_lipschitz_variant",
            RuleId::SingleValued => "single_valued",
            RuleId::EqualityCase => "equality_case",
            RuleId::FirstOrderSubdiff => "first_order_subdiff",
            RuleId::FirstOrderEquality => "first_order_equality",
            RuleId::CompositeAmenable => "composite_amenable",
            RuleId::ConstraintSpecialized => "constraint_specialized",
            RuleId::EimLipschitzCertificate => "eim_lipschitz_certificate",
            RuleId::SecondOrderCombined => "second_order_combined",
            RuleId::SecondOrderBasic => "second_order_basic",
            RuleId::SecondOrderMax => "second_order_max",
            RuleId::SequentialWitness => "sequential_witness",
        }
    }

    /// The statement each id checks.
    pub fn statement(&self) -> &'static str {
        match self {
            RuleId::RegularPointwise => "regular coderivative of E_Phi inside the integral of limiting node coderivatives at one selection",
            RuleId::LimitingUnion => "limiting coderivative of E_Phi inside the union over selections of integrated node coderivatives",
            RuleId::LimitingLipschitzVariant => "limiting coderivative of E_Phi inside the integral of node coderivatives unioned over each node value",
            RuleId::SingleValued => "single-valued E_Phi: limiting coderivative inside the integral of node coderivatives",
            RuleId::EqualityCase => "singleton regular nodes: regular and limiting coderivatives of E_Phi equal the integral",
            RuleId::FirstOrderSubdiff => "subdifferential of E_phi inside the integral of node subdifferentials",
            RuleId::FirstOrderEquality => "subdifferential of E_phi equal to the integral of node subdifferentials",
            RuleId::CompositeAmenable => "composite integrands F(g(x)): coderivative of E_Phi inside integrated chain-rule slices",
            RuleId::ConstraintSpecialized => "random constraint systems under Slater and adjoint triviality",
            RuleId::EimLipschitzCertificate => "zero-slice integral certificate for the Lipschitz-like property of E_Phi",
            RuleId::SecondOrderCombined => "combined second-order subdifferential inside the integral of basic node ones",
            RuleId::SecondOrderBasic => "basic second-order subdifferential inside the union over subgradient selections",
            RuleId::SecondOrderMax => "basic second-order rule for maximum-function integrands",
            RuleId::SequentialWitness => "sequential witnesses for a regular construction element",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = Error;

    /// Accepts `snake_case` or `CamelCase`.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .flat_map(char::to_lowercase)
            .collect();
        RuleId::ALL
            .iter()
            .find(|r| r.as_str().replace('_', "") == key)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown rule id `{s}`")))
    }
}

/// Per-y* comparison data kept in the verdict so it can be rechecked.
#[derive(Debug, Clone)]
pub struct SliceComparison {
    pub ystar: Vector,
    pub lhs_samples: Vec<Vector>,
    pub rhs_pieces: Vec<GeneratedSet>,
    pub violation: f64,
    /// Samples of the right-hand side against the left (equality modes).
    pub reverse: Option<(Vec<Vector>, Vec<GeneratedSet>, f64)>,
}

#[derive(Debug, Clone)]
pub struct InclusionVerdict {
    pub rule: RuleId,
    pub verdict: Verdict,
    pub max_violation: f64,
    pub reverse_violation: Option<f64>,
    pub tolerance: f64,
    pub exact: bool,
    pub rhs: String,
    pub comparisons: Vec<SliceComparison>,
    pub witness: Option<String>,
    pub failed_hypothesis: Option<String>,
    pub notes: Vec<String>,
}

impl InclusionVerdict {
    fn precondition(rule: RuleId, hypothesis: impl Into<String>, tol: f64) -> Self {
        InclusionVerdict {
            rule,
            verdict: Verdict::PreconditionFailed,
            max_violation: f64::NAN,
            reverse_violation: None,
            tolerance: tol,
            exact: false,
            rhs: String::new(),
            comparisons: vec![],
            witness: None,
            failed_hypothesis: Some(hypothesis.into()),
            notes: vec![],
        }
    }

    pub fn lhs_samples(&self) -> impl Iterator<Item = &Vector> {
        self.comparisons.iter().flat_map(|c| c.lhs_samples.iter())
    }

    /// Recomputes the violations from the stored samples and sets alone.
    pub fn recheck(&self) -> (f64, Option<f64>) {
        let mut fwd = 0.0f64;
        let mut rev: Option<f64> = None;
        for c in &self.comparisons {
            fwd = fwd.max(max_distance(&c.lhs_samples, &c.rhs_pieces));
            if let Some((s, p, _)) = &c.reverse {
                rev = Some(rev.unwrap_or(0.0).max(max_distance(s, p)));
            }
        }
        (fwd, rev)
    }

    /// Re-thresholds at another tolerance; precondition and inconclusive
    /// states are kept.
    pub fn with_tolerance(&self, tol: f64) -> InclusionVerdict {
        let mut out = self.clone();
        out.tolerance = tol;
        if matches!(self.verdict, Verdict::Holds | Verdict::Violated) {
            out.verdict = threshold(self.max_violation, self.reverse_violation, tol);
        }
        out
    }
}

fn threshold(fwd: f64, rev: Option<f64>, tol: f64) -> Verdict {
    let worst = fwd.max(rev.unwrap_or(0.0));
    if worst <= tol {
        Verdict::Holds
    } else {
        Verdict::Violated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LhsMode {
    /// Exact polyhedral graph of `E_Φ` when available, oracle otherwise.
    Auto,
    Oracle,
}

/// What happens when a hypothesis that is only grid-checked fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisPolicy {
    /// Abort with a precondition failure.
    Enforce,
    /// Record the failure in the notes; a failing inclusion then still
    /// reports a precondition failure rather than a violation.
    Record,
}

pub const EXACT_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Overrides the exact/oracle default.
    pub tol: Option<f64>,
    /// Neighbourhood radius for hypothesis checks.
    pub eta: f64,
    pub seed: u64,
    pub ystar: Option<Vec<Vector>>,
    pub lhs: LhsMode,
    pub hypothesis_grid: NestedGrid,
    pub second_order_quasi: HypothesisPolicy,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: None,
            eta: 0.25,
            seed: 0,
            ystar: None,
            lhs: LhsMode::Auto,
            hypothesis_grid: NestedGrid::light(),
            second_order_quasi: HypothesisPolicy::Record,
        }
    }
}

/// `{0}`, unit directions, and two rescaled directions.
pub fn default_ystar_grid(m: usize) -> Vec<Vector> {
    let dirs = unit_directions(m, 8);
    let mut out = vec![Vector::zeros(m)];
    out.extend(dirs.iter().cloned());
    out.push(&dirs[0] * 2.0);
    out.push(&dirs[dirs.len() - 1] * 0.5);
    out
}

/// Instance of a coderivative rule: random map, base point and aggregate
/// value, optionally with a prescribed selection.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub map: &'a RandomMap,
    pub space: &'a MeasureSpace,
    pub xbar: &'a Vector,
    pub ybar: &'a Vector,
    pub selection: Option<&'a SelectionFunction>,
}

fn union_distance(pieces: &[GeneratedSet], p: &Vector) -> f64 {
    pieces
        .iter()
        .map(|g| g.distance(p))
        .fold(f64::INFINITY, f64::min)
}

fn max_distance(samples: &[Vector], pieces: &[GeneratedSet]) -> f64 {
    samples
        .iter()
        .map(|s| union_distance(pieces, s))
        .fold(0.0, f64::max)
}

const RAY_STEPS: [f64; 2] = [0.5, 3.0];

/// Points, pairwise midpoints, and points pushed along single rays and sums
/// of ray pairs.
fn set_samples(g: &GeneratedSet) -> Vec<Vector> {
    let pts = g.points();
    let rays = g.rays();
    let mut out: Vec<Vector> = pts.to_vec();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            out.push((&pts[i] + &pts[j]) / 2.0);
        }
    }
    if let Some(p) = pts.first() {
        for (i, r) in rays.iter().enumerate() {
            for s in RAY_STEPS {
                out.push(p + r * s);
            }
            for r2 in &rays[i + 1..] {
                out.push(p + (r + r2));
            }
        }
    }
    out
}

fn union_samples(pieces: &[GeneratedSet]) -> Vec<Vector> {
    pieces.iter().flat_map(set_samples).collect()
}

pub const MAX_PIECE_COMBINATIONS: usize = 4096;

/// `Σ_t w_t S_t` for unions `S_t`, piecewise over the Cartesian choice of
/// pieces (no convexification across pieces).
pub fn integrate_unions(
    per_node: &[Vec<GeneratedSet>],
    weights: &[f64],
) -> Result<Vec<GeneratedSet>> {
    if per_node.iter().any(|p| p.is_empty()) {
        return Ok(vec![]);
    }
    let sizes: Vec<usize> = per_node.iter().map(|p| p.len()).collect();
    if sizes.iter().product::<usize>() > MAX_PIECE_COMBINATIONS {
        return Err(Error::Unsupported(format!(
            "{} piece combinations (limit {MAX_PIECE_COMBINATIONS})",
            sizes.iter().product::<usize>()
        )));
    }
    let mut out: Vec<GeneratedSet> = Vec::new();
    for combo in cartesian(&sizes) {
        let mut acc: Option<GeneratedSet> = None;
        for (t, &c) in combo.iter().enumerate() {
            let s = per_node[t][c].scale(weights[t]);
            acc = Some(match acc {
                None => s,
                Some(a) => a.minkowski_sum(&s)?,
            });
        }
        let s = acc.expect("at least one node");
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Coderivative slices of one graph, exact or from a sampled normal cone
/// computed once.
enum SliceSource<'a> {
    Graph {
        graph: PolyhedralUnion,
        n: usize,
    },
    Node(&'a NodeMap),
    Sampled {
        directions: Vec<Vector>,
        n: usize,
        inconclusive: bool,
    },
}

impl SliceSource<'_> {
    fn exact(&self) -> bool {
        !matches!(self, SliceSource::Sampled { .. })
    }

    fn slice(
        &self,
        x: &Vector,
        y: &Vector,
        ystar: &Vector,
        kind: SliceKind,
    ) -> Result<Vec<GeneratedSet>> {
        match self {
            SliceSource::Graph { graph, n } => {
                Ok(coderivative_polyhedral_graph(graph, *n, x, y, ystar, kind)?
                    .pieces()
                    .to_vec())
            }
            SliceSource::Node(node) => Ok(coderivative_node(node, x, y, ystar, kind)?
                .pieces()
                .to_vec()),
            SliceSource::Sampled { directions, n, .. } => Ok(sampled_slice(directions, *n, ystar)),
        }
    }
}

/// Sampled slices as sets: the hull of the sampled points for `y* ≠ 0`, the
/// cone of the sampled unit directions at `y* = 0`.
fn sampled_slice(dirs: &[Vector], n: usize, ystar: &Vector) -> Vec<GeneratedSet> {
    let pts = slice_directions(dirs, n, ystar, ORACLE_ANGLE);
    if pts.is_empty() {
        return vec![];
    }
    let set = if ystar.norm() == 0.0 {
        GeneratedSet::new(n, vec![Vector::zeros(n)], pts.into_iter().skip(1).collect())
    } else {
        GeneratedSet::new(n, pts, vec![])
    };
    set.map(|s| vec![s]).unwrap_or_default()
}

const ORACLE_ANGLE: f64 = 1e-2;

fn sampled_source<'a>(
    oracle: &dyn SetOracle,
    n: usize,
    x: &Vector,
    y: &Vector,
    kind: SliceKind,
    seed: u64,
) -> Result<SliceSource<'a>> {
    let p = concat(x, y);
    let cone = oracle_normal_cone(
        oracle,
        &p,
        kind.into(),
        &RadiiSchedule::default_for(p.len()),
        seed,
    )?;
    Ok(SliceSource::Sampled {
        directions: cone.directions,
        n,
        inconclusive: cone.inconclusive,
    })
}

fn node_source<'a>(
    node: &'a NodeMap,
    x: &Vector,
    y: &Vector,
    kind: SliceKind,
    seed: u64,
) -> Result<SliceSource<'a>> {
    match coderivative_node(node, x, y, &Vector::zeros(node.y_dim()), kind) {
        Ok(_) => Ok(SliceSource::Node(node)),
        Err(Error::Unsupported(_)) | Err(Error::NonFinite(_)) => {
            let oracle = GraphOracle::new(node.x_dim(), node.y_dim(), move |z: &Vector| {
                node.value(z).ok().flatten()
            });
            sampled_source(&oracle, node.x_dim(), x, y, kind, seed)
        }
        Err(e) => Err(e),
    }
}

fn expected_source<'a>(
    inst: &Instance<'_>,
    kind: SliceKind,
    mode: LhsMode,
    seed: u64,
) -> Result<SliceSource<'a>> {
    let (map, space) = (inst.map, inst.space);
    if mode == LhsMode::Auto {
        if let Some(local) = expected_local_graph(map, space, inst.xbar, inst.ybar) {
            let zero = Vector::zeros(map.m);
            match coderivative_polyhedral_graph(
                &local.union,
                local.n,
                inst.xbar,
                inst.ybar,
                &zero,
                kind,
            ) {
                Ok(_) => {
                    return Ok(SliceSource::Graph {
                        graph: local.union,
                        n: local.n,
                    })
                }
                Err(Error::Unsupported(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let oracle = GraphOracle::new(map.n, map.m, move |z: &Vector| {
        evaluate_expected_map(map, z, space).ok().flatten()
    });
    if !oracle.contains(&concat(inst.xbar, inst.ybar), 1e-9) {
        return Err(Error::InvalidInput(
            "base point is not in the graph of the expected map".into(),
        ));
    }
    sampled_source(&oracle, map.n, inst.xbar, inst.ybar, kind, seed)
}

/// Selections used for a rule: the prescribed one, or all vertex-supported
/// selections (falling back to one least-squares selection).
pub(crate) fn selections(inst: &Instance<'_>, all: bool) -> Result<Vec<SelectionFunction>> {
    let mut out = Vec::new();
    if let Some(s) = inst.selection {
        s.validate(inst.map, inst.xbar, inst.space, 1e-9)?;
        let agg_gap = (&s.aggregate - inst.ybar).norm();
        if agg_gap > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "selection aggregates {agg_gap:.3e} away from the base value"
            )));
        }
        out.push(s.clone());
        if !all {
            return Ok(out);
        }
    }
    match enumerate_selections(inst.map, inst.xbar, inst.ybar, inst.space, 1e-9) {
        Ok(list) => {
            for s in list {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        Err(Error::Unsupported(_)) => {}
        Err(e) => return Err(e),
    }
    if out.is_empty() {
        if let Some(s) = selection_mapping(inst.map, inst.xbar, inst.ybar, inst.space, 1e-9)? {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(
            "base value is not in the expected map at the base point".into(),
        ));
    }
    Ok(out)
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|c| format!("{c:.6e}")).collect();
    format!("[{}]", parts.join(","))
}

/// Hypothesis check outcome: `Err(name)` aborts.
type Hypothesis = std::result::Result<(), String>;

fn standing_assumptions(inst: &Instance<'_>, eta: f64) -> Hypothesis {
    inst.map
        .validate(inst.space, inst.xbar, eta)
        .map(|_| ())
        .map_err(|e| format!("integrable boundedness and convexity of nonatomic values: {e}"))
}

fn quasi_lipschitz_hypothesis(
    inst: &Instance<'_>,
    sels: &[SelectionFunction],
    opts: &VerifyOptions,
) -> Result<Hypothesis> {
    for s in sels {
        let r = check_quasi_lipschitz(
            inst.map,
            inst.space,
            inst.xbar,
            s,
            opts.eta,
            &opts.hypothesis_grid,
            opts.seed,
        )?;
        if !r.verdict.is_pass() {
            return Ok(Err(format!(
                "integrable quasi-Lipschitzian property ({}{})",
                r.verdict,
                r.note.map(|n| format!(": {n}")).unwrap_or_default()
            )));
        }
    }
    Ok(Ok(()))
}

fn local_lipschitz_hypothesis(inst: &Instance<'_>, opts: &VerifyOptions) -> Result<Hypothesis> {
    let r = check_integrable_local_lipschitz(
        inst.map,
        inst.space,
        inst.xbar,
        opts.eta,
        &opts.hypothesis_grid,
    )?;
    Ok(if r.verdict.is_pass() {
        Ok(())
    } else {
        Err(format!(
            "integrable local Lipschitz property ({})",
            r.verdict
        ))
    })
}

fn singleton_values(inst: &Instance<'_>) -> Result<Option<Vec<Vector>>> {
    let Some(vals) = node_values(inst.map, inst.xbar, inst.space)? else {
        return Ok(None);
    };
    Ok(vals
        .iter()
        .map(|v| {
            v.vertices()
                .iter()
                .all(|p| (p - &v.vertices()[0]).norm() <= 1e-9)
                .then(|| v.vertices()[0].clone())
        })
        .collect())
}

/// Comparisons, forward violation, reverse violation, witness.
type Compared = (Vec<SliceComparison>, f64, Option<f64>, Option<String>);

/// Distance comparisons over a y*-grid. `lhs` yields the left-hand union per
/// y*, `rhs` the right-hand union.
fn compare(
    ystars: &[Vector],
    mut lhs: impl FnMut(&Vector) -> Result<Vec<GeneratedSet>>,
    mut rhs: impl FnMut(&Vector) -> Result<Vec<GeneratedSet>>,
    reverse: bool,
) -> Result<Compared> {
    let mut comps = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_rev: Option<f64> = None;
    let mut witness = None;
    for ys in ystars {
        let l = lhs(ys)?;
        let r = rhs(ys)?;
        let samples = union_samples(&l);
        let mut v = 0.0f64;
        for s in &samples {
            let d = union_distance(&r, s);
            if d > v {
                v = d;
                if d > worst {
                    witness = Some(format!(
                        "ystar={} lhs_point={} distance={d:.6e}",
                        fmt_vec(ys),
                        fmt_vec(s)
                    ));
                }
            }
        }
        worst = worst.max(v);
        let rev = if reverse {
            let rs = union_samples(&r);
            let rv = max_distance(&rs, &l);
            if rv > worst_rev.unwrap_or(0.0) && rv > worst {
                witness = Some(format!("ystar={} reverse distance={rv:.6e}", fmt_vec(ys)));
            }
            worst_rev = Some(worst_rev.unwrap_or(0.0).max(rv));
            Some((rs, l.clone(), rv))
        } else {
            None
        };
        comps.push(SliceComparison {
            ystar: ys.clone(),
            lhs_samples: samples,
            rhs_pieces: r,
            violation: v,
            reverse: rev,
        });
    }
    Ok((comps, worst, worst_rev, witness))
}

struct Outcome {
    comps: Vec<SliceComparison>,
    fwd: f64,
    rev: Option<f64>,
    witness: Option<String>,
    exact: bool,
    inconclusive: bool,
    rhs: String,
    notes: Vec<String>,
}

fn finish(
    rule: RuleId,
    out: Outcome,
    opts: &VerifyOptions,
    recorded: Option<String>,
) -> InclusionVerdict {
    let tol = opts
        .tol
        .unwrap_or(if out.exact { EXACT_TOL } else { ORACLE_TOL });
    let mut verdict = threshold(out.fwd, out.rev, tol);
    let mut notes = out.notes;
    let mut failed = None;
    if out.inconclusive && verdict == Verdict::Violated {
        verdict = Verdict::Inconclusive;
        notes.push("oracle sampling was degenerate".into());
    }
    if let Some(h) = recorded {
        if verdict == Verdict::Violated {
            verdict = Verdict::PreconditionFailed;
            failed = Some(h);
        } else {
            notes.push(format!("hypothesis not established on the grid: {h}"));
        }
    }
    InclusionVerdict {
        rule,
        verdict,
        max_violation: out.fwd,
        reverse_violation: out.rev,
        tolerance: tol,
        exact: out.exact,
        rhs: out.rhs,
        comparisons: out.comps,
        witness: out.witness,
        failed_hypothesis: failed,
        notes,
    }
}

fn default_tol(opts: &VerifyOptions) -> f64 {
    opts.tol.unwrap_or(EXACT_TOL)
}

macro_rules! hypothesis {
    ($rule:expr, $opts:expr, $check:expr) => {
        if let Err(h) = $check {
            return Ok(InclusionVerdict::precondition($rule, h, default_tol($opts)));
        }
    };
}

/// Maps qualification failures raised while computing slices to a
/// precondition failure.
fn qualification<T>(
    rule: RuleId,
    opts: &VerifyOptions,
    r: Result<T>,
) -> Result<std::result::Result<T, InclusionVerdict>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(Error::QualificationViolated(msg)) => Ok(Err(InclusionVerdict::precondition(
            rule,
            format!("qualification condition: {msg}"),
            default_tol(opts),
        ))),
        Err(e) => Err(e),
    }
}

/// One right-hand-side branch: per node, alternative base points whose
/// slices are unioned before integration.
struct Branch<'a> {
    per_node: Vec<Vec<(Vector, SliceSource<'a>)>>,
}

impl Branch<'_> {
    fn exact(&self) -> bool {
        self.per_node.iter().flatten().all(|(_, s)| s.exact())
    }

    fn inconclusive(&self) -> bool {
        self.per_node.iter().flatten().any(|(_, s)| {
            matches!(
                s,
                SliceSource::Sampled {
                    inconclusive: true,
                    ..
                }
            )
        })
    }
}

fn build_branch<'a>(
    map: &'a RandomMap,
    x: &Vector,
    points: &[Vec<Vector>],
    seed: u64,
) -> Result<Branch<'a>> {
    let mut per_node = Vec::with_capacity(points.len());
    for (node, pts) in map.nodes.iter().zip(points) {
        let mut alts = Vec::with_capacity(pts.len());
        for y in pts {
            alts.push((
                y.clone(),
                node_source(node, x, y, SliceKind::Limiting, seed)?,
            ));
        }
        per_node.push(alts);
    }
    Ok(Branch { per_node })
}

fn selection_branch<'a>(
    map: &'a RandomMap,
    x: &Vector,
    sel: &SelectionFunction,
    seed: u64,
) -> Result<Branch<'a>> {
    let points: Vec<Vec<Vector>> = sel.per_node.iter().map(|y| vec![y.clone()]).collect();
    build_branch(map, x, &points, seed)
}

fn rhs_union(
    branches: &[Branch<'_>],
    x: &Vector,
    ystar: &Vector,
    weights: &[f64],
) -> Result<Vec<GeneratedSet>> {
    let mut out: Vec<GeneratedSet> = Vec::new();
    for b in branches {
        let mut per_node = Vec::with_capacity(b.per_node.len());
        for alts in &b.per_node {
            let mut pieces: Vec<GeneratedSet> = Vec::new();
            for (y, src) in alts {
                for p in src.slice(x, y, ystar, SliceKind::Limiting)? {
                    if !pieces.contains(&p) {
                        pieces.push(p);
                    }
                }
            }
            per_node.push(pieces);
        }
        for p in integrate_unions(&per_node, weights)? {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

impl Outcome {
    fn merge(self, other: Outcome) -> Outcome {
        let fwd_wins = other.fwd > self.fwd;
        let rev = match (self.rev, other.rev) {
            (None, r) | (r, None) => r,
            (Some(a), Some(b)) => Some(a.max(b)),
        };
        let mut comps = self.comps;
        comps.extend(other.comps);
        let mut notes = self.notes;
        for n in other.notes {
            if !notes.contains(&n) {
                notes.push(n);
            }
        }
        Outcome {
            comps,
            fwd: self.fwd.max(other.fwd),
            rev,
            witness: if fwd_wins {
                other.witness.or(self.witness)
            } else {
                self.witness.or(other.witness)
            },
            exact: self.exact && other.exact,
            inconclusive: self.inconclusive || other.inconclusive,
            rhs: if self.rhs.is_empty() {
                other.rhs
            } else {
                self.rhs
            },
            notes,
        }
    }
}

/// Compares the slice of `E_Φ` of the given kind against the branch union.
fn check_against(
    inst: &Instance<'_>,
    opts: &VerifyOptions,
    lhs_kind: SliceKind,
    branches: &[Branch<'_>],
    reverse: bool,
    ystars: &[Vector],
    rhs_desc: &str,
) -> Result<Outcome> {
    let lhs = expected_source(inst, lhs_kind, opts.lhs, opts.seed)?;
    let w = inst.space.weights();
    let (x, y) = (inst.xbar, inst.ybar);
    let (comps, fwd, rev, witness) = compare(
        ystars,
        |ys| lhs.slice(x, y, ys, lhs_kind),
        |ys| rhs_union(branches, x, ys, &w),
        reverse,
    )?;
    let mut notes = vec![];
    if !lhs.exact() {
        notes.push(format!(
            "{} left-hand side from the sampling oracle",
            lhs_kind.as_str()
        ));
    }
    Ok(Outcome {
        comps,
        fwd,
        rev,
        witness,
        exact: lhs.exact() && branches.iter().all(|b| b.exact()),
        inconclusive: matches!(
            lhs,
            SliceSource::Sampled {
                inconclusive: true,
                ..
            }
        ) || branches.iter().any(|b| b.inconclusive()),
        rhs: rhs_desc.to_string(),
        notes,
    })
}

/// Regular and limiting node slices agree on the grid (exact models only).
fn coderivative_regularity(
    map: &RandomMap,
    x: &Vector,
    ys_nodes: &[Vector],
    ystars: &[Vector],
) -> Result<Hypothesis> {
    for (t, (node, y)) in map.nodes.iter().zip(ys_nodes).enumerate() {
        for ys in ystars {
            let (reg, lim) = match (
                coderivative_node(node, x, y, ys, SliceKind::Regular),
                coderivative_node(node, x, y, ys, SliceKind::Limiting),
            ) {
                (Ok(r), Ok(l)) => (r, l),
                (Err(Error::Unsupported(_)), _)
                | (_, Err(Error::Unsupported(_)))
                | (Err(Error::NonFinite(_)), _) => {
                    return Ok(Err(format!(
                        "coderivative regularity at node {t}: no exact local model"
                    )));
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let gap = max_distance(&union_samples(lim.pieces()), reg.pieces());
            if gap > 1e-9 {
                return Ok(Err(format!(
                    "coderivative regularity at node {t} for ystar={} (gap {gap:.3e})",
                    fmt_vec(ys)
                )));
            }
        }
    }
    Ok(Ok(()))
}

/// Coderivative Leibniz rules (pointwise regular, limiting union, Lipschitz
/// variant, single-valued, equality).
pub fn verify_coderivative_inclusion(
    rule: RuleId,
    inst: &Instance<'_>,
    opts: &VerifyOptions,
) -> Result<InclusionVerdict> {
    if !matches!(
        rule,
        RuleId::RegularPointwise
            | RuleId::LimitingUnion
            | RuleId::LimitingLipschitzVariant
            | RuleId::SingleValued
            | RuleId::EqualityCase
    ) {
        return Err(Error::InvalidInput(format!(
            "{rule} is not a coderivative inclusion rule"
        )));
    }
    inst.map.check_space(inst.space)?;
    check_dim(inst.map.n, inst.xbar.len())?;
    check_dim(inst.map.m, inst.ybar.len())?;
    hypothesis!(rule, opts, standing_assumptions(inst, opts.eta));
    let (map, x) = (inst.map, inst.xbar);
    let ystars = opts
        .ystar
        .clone()
        .unwrap_or_else(|| default_ystar_grid(map.m));
    let mut notes = Vec::new();

    let sels = match rule {
        RuleId::RegularPointwise => selections(inst, inst.selection.is_none())?,
        RuleId::LimitingUnion | RuleId::LimitingLipschitzVariant => selections(inst, true)?,
        _ => {
            let agg = evaluate_expected_map(map, x, inst.space)?
                .ok_or_else(|| Error::Infeasible("empty node value".into()))?;
            let spread = agg
                .vertices()
                .iter()
                .map(|v| (v - &agg.vertices()[0]).norm())
                .fold(0.0, f64::max);
            if spread > 1e-9 {
                return Ok(InclusionVerdict::precondition(
                    rule,
                    "single-valued expected map at the base point",
                    default_tol(opts),
                ));
            }
            let Some(single) = singleton_values(inst)? else {
                return Ok(InclusionVerdict::precondition(
                    rule,
                    "singleton node values at the base point",
                    default_tol(opts),
                ));
            };
            vec![SelectionFunction::new(single, inst.space)?]
        }
    };

    match rule {
        RuleId::RegularPointwise | RuleId::LimitingUnion => {
            hypothesis!(rule, opts, quasi_lipschitz_hypothesis(inst, &sels, opts)?);
            notes.push(
                "selection map is inner semicompact: finitely many nodes with bounded values"
                    .into(),
            );
        }
        _ => hypothesis!(rule, opts, local_lipschitz_hypothesis(inst, opts)?),
    }
    if rule == RuleId::EqualityCase {
        hypothesis!(
            rule,
            opts,
            coderivative_regularity(map, x, &sels[0].per_node, &ystars)?
        );
        notes.push("coderivative regularity checked on the ystar grid only".into());
    }

    let built = (|| -> Result<Outcome> {
        match rule {
            RuleId::RegularPointwise => {
                // The inclusion must hold for every selection separately.
                let mut acc: Option<Outcome> = None;
                for s in &sels {
                    let b = [selection_branch(map, x, s, opts.seed)?];
                    let desc = "integral of limiting node slices at the selection";
                    let o =
                        check_against(inst, opts, SliceKind::Regular, &b, false, &ystars, desc)?;
                    acc = Some(match acc {
                        None => o,
                        Some(a) => a.merge(o),
                    });
                }
                Ok(acc.expect("at least one selection"))
            }
            RuleId::LimitingUnion => {
                let branches: Vec<Branch> = sels
                    .iter()
                    .map(|s| selection_branch(map, x, s, opts.seed))
                    .collect::<Result<_>>()?;
                let desc = format!(
                    "union over {} selection(s) of integrated limiting node slices",
                    sels.len()
                );
                check_against(
                    inst,
                    opts,
                    SliceKind::Limiting,
                    &branches,
                    false,
                    &ystars,
                    &desc,
                )
            }
            RuleId::LimitingLipschitzVariant => {
                let values = node_values(map, x, inst.space)?
                    .ok_or_else(|| Error::Infeasible("empty node value".into()))?;
                let mut points: Vec<Vec<Vector>> =
                    values.iter().map(|v| v.vertices().to_vec()).collect();
                for s in &sels {
                    for (t, y) in s.per_node.iter().enumerate() {
                        if !points[t].iter().any(|p| (p - y).norm() <= 1e-12) {
                            points[t].push(y.clone());
                        }
                    }
                }
                let b = [build_branch(map, x, &points, opts.seed)?];
                let count: usize = points.iter().map(|p| p.len()).sum();
                let desc = format!("integral of node slices unioned over {count} value points");
                let mut o =
                    check_against(inst, opts, SliceKind::Limiting, &b, false, &ystars, &desc)?;
                o.notes
                    .push("node values represented by vertices and selection points".into());
                Ok(o)
            }
            RuleId::SingleValued => {
                let b = [selection_branch(map, x, &sels[0], opts.seed)?];
                check_against(
                    inst,
                    opts,
                    SliceKind::Limiting,
                    &b,
                    false,
                    &ystars,
                    "integral of limiting node slices",
                )
            }
            RuleId::EqualityCase => {
                let b = [selection_branch(map, x, &sels[0], opts.seed)?];
                let desc = "integral of limiting node slices";
                let reg = check_against(inst, opts, SliceKind::Regular, &b, true, &ystars, desc)?;
                let lim = check_against(inst, opts, SliceKind::Limiting, &b, false, &ystars, desc)?;
                Ok(reg.merge(lim))
            }
            _ => unreachable!(),
        }
    })();
    let mut out = match qualification(rule, opts, built)? {
        Ok(o) => o,
        Err(v) => return Ok(v),
    };
    out.notes.splice(0..0, notes);
    Ok(finish(rule, out, opts, None))
}

/// Scalar integrand `φ_t = max_i ψ_i` with smooth pieces.
#[derive(Debug, Clone)]
pub struct ScalarIntegrand {
    pub pieces: Vec<ScalarFn>,
}

impl ScalarIntegrand {
    pub fn smooth(f: ScalarFn) -> Self {
        ScalarIntegrand { pieces: vec![f] }
    }

    pub fn max_of(pieces: Vec<ScalarFn>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidInput("maximum of an empty family".into()))?;
        let n = first.dim();
        for p in &pieces {
            check_dim(n, p.dim())?;
        }
        Ok(ScalarIntegrand { pieces })
    }

    /// Pieces `a·x + b + ½ xᵀQx` of a maximum-function node.
    pub fn from_max_affine(node: &NodeMap) -> Option<Self> {
        let NodeMap::MaxAffine { pieces, quad } = node else {
            return None;
        };
        let out = pieces
            .iter()
            .map(|(a, b)| {
                let (a, b, q) = (a.clone(), *b, quad.clone());
                let (a2, q2) = (a.clone(), q.clone());
                let f = FnScalar::new(a.len(), "max-affine piece", move |x: &Vector| {
                    a.dot(x) + b + q.as_ref().map(|q| 0.5 * x.dot(&(q * x))).unwrap_or(0.0)
                })
                .with_gradient(move |x: &Vector| {
                    Some(
                        &a2 + q2
                            .as_ref()
                            .map(|q| q * x)
                            .unwrap_or_else(|| Vector::zeros(x.len())),
                    )
                });
                Arc::new(f) as ScalarFn
            })
            .collect();
        Some(ScalarIntegrand { pieces: out })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `co{∇ψ_i(x) | i active}`.
    pub fn subdifferential(&self, x: &Vector) -> Result<Polytope> {
        let refs: Vec<&dyn ScalarFunction> = self
            .pieces
            .iter()
            .map(|p| p.as_ref() as &dyn ScalarFunction)
            .collect();
        let top = self.value(x);
        max_subdifferential(&refs, x, ACTIVE_TOL * (1.0 + top.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdiffMode {
    Inclusion,
    Equality,
}

fn lipschitz_integrand_hypothesis(phi: &[ScalarIntegrand], x: &Vector, eta: f64) -> Hypothesis {
    let pts = ball_grid(x, eta, 3);
    for (t, f) in phi.iter().enumerate() {
        let vals: Vec<f64> = pts.iter().map(|p| f.value(p)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(format!(
                "integrable Lipschitz continuity: node {t} is not finite near the base point"
            ));
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let slope = (vals[i] - vals[j]).abs() / (&pts[i] - &pts[j]).norm();
                if !slope.is_finite() {
                    return Err(format!("integrable Lipschitz continuity at node {t}"));
                }
            }
        }
    }
    Ok(())
}

fn subdiff_directions(n: usize) -> Vec<Vector> {
    unit_directions(n, if n == 2 { 64 } else { 128 })
}

/// First-order subdifferential Leibniz rule (inclusion or equality) at `x̄`.
pub fn verify_subdifferential_leibniz(
    phi: &[ScalarIntegrand],
    space: &MeasureSpace,
    xbar: &Vector,
    mode: SubdiffMode,
    opts: &VerifyOptions,
) -> Result<InclusionVerdict> {
    let rule = match mode {
        SubdiffMode::Inclusion => RuleId::FirstOrderSubdiff,
        SubdiffMode::Equality => RuleId::FirstOrderEquality,
    };
    if phi.len() != space.len() {
        return Err(Error::DomainMismatch(format!(
            "{} integrands for {} nodes",
            phi.len(),
            space.len()
        )));
    }
    let n = xbar.len();
    for f in phi {
        check_dim(n, f.dim())?;
    }
    hypothesis!(
        rule,
        opts,
        lipschitz_integrand_hypothesis(phi, xbar, opts.eta)
    );
    let w = space.weights();
    let phi_owned: Vec<ScalarIntegrand> = phi.to_vec();
    let w2 = w.clone();
    let expected = FnScalar::new(n, "expected integrand", move |x: &Vector| {
        phi_owned
            .iter()
            .zip(&w2)
            .map(|(f, wt)| wt * f.value(x))
            .sum()
    });
    let dirs = subdiff_directions(n);
    let lhs = regular_subdifferential(&expected, xbar, &dirs)?.set;
    let mut samples: Vec<Vector> = lhs
        .as_ref()
        .map(|p| p.vertices().to_vec())
        .unwrap_or_default();
    // Nearby regular subgradients stand in for the limiting construction.
    if n <= 2 {
        for u in unit_directions(n, 16) {
            let z = xbar + u * 1e-4;
            if let Some(p) = regular_subdifferential(&expected, &z, &dirs)?.set {
                samples.extend(p.vertices().iter().cloned());
            }
        }
    }
    let subs: Vec<Polytope> = phi
        .iter()
        .map(|f| f.subdifferential(xbar))
        .collect::<Result<_>>()?;
    let terms: Vec<(f64, &Polytope)> = w.iter().copied().zip(subs.iter()).collect();
    let rhs = weighted_minkowski(&terms)?;
    let rhs_set = vec![rhs.to_generated()];
    let fwd = max_distance(&samples, &rhs_set);
    let reverse = match mode {
        SubdiffMode::Inclusion => None,
        SubdiffMode::Equality => {
            let rs = rhs.vertices().to_vec();
            let l: Vec<GeneratedSet> = lhs.iter().map(|p| p.to_generated()).collect();
            let rv = max_distance(&rs, &l);
            Some((rs, l, rv))
        }
    };
    let rev = reverse.as_ref().map(|r| r.2);
    let witness = samples
        .iter()
        .map(|s| (union_distance(&rhs_set, s), s))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .filter(|(d, _)| *d > 0.0)
        .map(|(d, s)| format!("lhs_point={} distance={d:.6e}", fmt_vec(s)));
    let out = Outcome {
        comps: vec![SliceComparison {
            ystar: Vector::zeros(0),
            lhs_samples: samples,
            rhs_pieces: rhs_set,
            violation: fwd,
            reverse,
        }],
        fwd,
        rev,
        witness,
        exact: false,
        inconclusive: false,
        rhs: "weighted sum of node subdifferentials (exact hull arithmetic)".into(),
        notes: vec![
            "left-hand side from subderivatives on a direction grid".into(),
            "maxima of smooth pieces are lower regular".into(),
        ],
    };
    Ok(finish(rule, out, opts, None))
}

/// Composite rule for constraint-system integrands `F_t(g_t(x))`; the
/// specialized variant also requires Slater and adjoint triviality.
pub fn verify_composite_rule(
    inst: &Instance<'_>,
    opts: &VerifyOptions,
    specialized: bool,
) -> Result<InclusionVerdict> {
    let rule = if specialized {
        RuleId::ConstraintSpecialized
    } else {
        RuleId::CompositeAmenable
    };
    inst.map.check_space(inst.space)?;
    check_dim(inst.map.n, inst.xbar.len())?;
    check_dim(inst.map.m, inst.ybar.len())?;
    if !inst
        .map
        .nodes
        .iter()
        .all(|n| matches!(n, NodeMap::Constraint { .. }))
    {
        return Err(Error::InvalidInput(
            "composite rule needs constraint-system integrands at every node".into(),
        ));
    }
    hypothesis!(rule, opts, standing_assumptions(inst, opts.eta));
    let (map, x) = (inst.map, inst.xbar);
    let mut sup_grad = 0.0f64;
    for z in ball_grid(x, opts.eta, 2) {
        for node in &map.nodes {
            let NodeMap::Constraint { g, .. } = node else {
                unreachable!()
            };
            let bound = g.jacobian(&z).map(|j| j.norm()).unwrap_or(f64::INFINITY);
            sup_grad = sup_grad.max(bound);
        }
    }
    hypothesis!(
        rule,
        opts,
        if sup_grad.is_finite() {
            Ok(())
        } else {
            Err("uniform bound on inner-map gradients".to_string())
        }
    );
    if specialized {
        let slater = check_slater_integrable(map, inst.space, x, opts.eta)?;
        hypothesis!(
            rule,
            opts,
            if slater.holds {
                Ok(())
            } else {
                Err("integrable Slater constraint qualification".to_string())
            }
        );
        let adj = check_adjoint_triviality(map, inst.space, x, opts.eta, 2)?;
        hypothesis!(
            rule,
            opts,
            if adj.holds {
                Ok(())
            } else {
                Err(format!(
                    "integral triviality qualification condition (node {})",
                    adj.witness.map(|w| w.node).unwrap_or_default()
                ))
            }
        );
    }
    let ystars = opts
        .ystar
        .clone()
        .unwrap_or_else(|| default_ystar_grid(map.m));
    let sels = selections(inst, true)?;
    let built = (|| -> Result<Outcome> {
        let first = [selection_branch(map, x, &sels[0], opts.seed)?];
        let reg = check_against(
            inst,
            opts,
            SliceKind::Regular,
            &first,
            false,
            &ystars,
            "chain-rule node slices at the selection",
        )?;
        let all: Vec<Branch> = sels
            .iter()
            .map(|s| selection_branch(map, x, s, opts.seed))
            .collect::<Result<_>>()?;
        let desc = format!(
            "union over {} selection(s) of integrated chain-rule slices",
            sels.len()
        );
        let lim = check_against(inst, opts, SliceKind::Limiting, &all, false, &ystars, &desc)?;
        Ok(reg.merge(lim))
    })();
    let mut out = match built {
        Ok(o) => o,
        Err(Error::QualificationViolated(msg)) => {
            return Ok(InclusionVerdict::precondition(
                rule,
                format!("integrable amenability qualification: {msg}"),
                default_tol(opts),
            ))
        }
        Err(e) => return Err(e),
    };
    out.notes.push(format!(
        "sup of inner gradient norms on the ball {sup_grad:.6e}"
    ));
    Ok(finish(rule, out, opts, None))
}

/// Certificate `∫ D*Φ_t(x̄, ȳ(t))(0) dμ = {0}` over the enumerated
/// selections, cross-checked by the coderivative criterion on `E_Φ`.
pub fn verify_eim_lipschitz_certificate(
    inst: &Instance<'_>,
    opts: &VerifyOptions,
) -> Result<LipschitzReport> {
    inst.map.check_space(inst.space)?;
    let (map, x) = (inst.map, inst.xbar);
    let w = inst.space.weights();
    let zero = Vector::zeros(map.m);
    let sels = selections(inst, true)?;
    let mut certificate = true;
    let mut witness = None;
    for s in &sels {
        let b = [selection_branch(map, x, s, opts.seed)?];
        for piece in rhs_union(&b, x, &zero, &w)? {
            let nonzero =
                !piece.rays().is_empty() || piece.points().iter().any(|p| p.norm() > 1e-9);
            if nonzero {
                certificate = false;
                witness.get_or_insert_with(|| {
                    format!(
                        "selection={} zero-slice piece with {} ray(s)",
                        s.per_node.iter().map(fmt_vec).collect::<Vec<_>>().join(";"),
                        piece.rays().len()
                    )
                });
            }
        }
    }
    let cross = check_lipschitz_like_deterministic(
        DeterministicMap::Expected {
            map,
            space: inst.space,
        },
        x,
        inst.ybar,
        opts.seed,
    )?;
    let grid = format!("{} selection(s); {}", sels.len(), cross.grid);
    if !certificate {
        return Ok(LipschitzReport {
            property: LipschitzProperty::LipschitzLike,
            verdict: Verdict::Inconclusive,
            modulus: cross.modulus,
            levels: vec![],
            witness,
            grid,
            note: Some(format!(
                "certificate inconclusive; coderivative criterion cross-check {}",
                cross.verdict
            )),
        });
    }
    let standing = standing_assumptions(inst, opts.eta).and_then(|_| {
        match quasi_lipschitz_hypothesis(inst, &sels, opts) {
            Ok(h) => h,
            Err(e) => Err(e.to_string()),
        }
    });
    if let Err(h) = standing {
        return Ok(LipschitzReport {
            property: LipschitzProperty::LipschitzLike,
            verdict: Verdict::PreconditionFailed,
            modulus: ModulusField::Scalar(f64::NAN),
            levels: vec![],
            witness: None,
            grid,
            note: Some(h),
        });
    }
    let (verdict, note) = if cross.verdict.is_pass() {
        (
            cross.verdict,
            "certificate holds; coderivative criterion agrees".to_string(),
        )
    } else {
        (
            Verdict::Violated,
            format!(
                "certificate holds but the coderivative criterion reports {}",
                cross.verdict
            ),
        )
    };
    Ok(LipschitzReport {
        property: LipschitzProperty::LipschitzLike,
        verdict,
        modulus: cross.modulus,
        levels: vec![],
        witness: cross.witness,
        grid,
        note: Some(note),
    })
}

/// Second-order rules for maximum-function integrands: coderivatives of the
/// subgradient maps. `inst.ybar` is the aggregate subgradient.
pub fn verify_second_order(
    rule: RuleId,
    inst: &Instance<'_>,
    opts: &VerifyOptions,
) -> Result<InclusionVerdict> {
    if !matches!(
        rule,
        RuleId::SecondOrderCombined | RuleId::SecondOrderBasic | RuleId::SecondOrderMax
    ) {
        return Err(Error::InvalidInput(format!(
            "{rule} is not a second-order rule"
        )));
    }
    let (map, x) = (inst.map, inst.xbar);
    if !map.is_max_affine() {
        return Err(Error::InvalidInput(
            "second-order rules need maximum-function integrands".into(),
        ));
    }
    map.check_space(inst.space)?;
    check_dim(map.n, x.len())?;
    hypothesis!(rule, opts, standing_assumptions(inst, opts.eta));
    let phi: Vec<ScalarIntegrand> = map
        .nodes
        .iter()
        .map(|n| ScalarIntegrand::from_max_affine(n).expect("max-affine"))
        .collect();
    let first_order_opts = VerifyOptions {
        tol: None,
        ..opts.clone()
    };
    for z in ball_grid(x, opts.eta, 1) {
        let v = verify_subdifferential_leibniz(
            &phi,
            inst.space,
            &z,
            SubdiffMode::Equality,
            &first_order_opts,
        )?;
        if !v.verdict.is_pass() {
            return Ok(InclusionVerdict::precondition(
                rule,
                format!(
                    "first-order subdifferential Leibniz equality near the base point (at {})",
                    fmt_vec(&z)
                ),
                default_tol(opts),
            ));
        }
    }
    let all = rule != RuleId::SecondOrderCombined;
    let sels = selections(inst, all || inst.selection.is_none())?;
    let sels = if all {
        sels
    } else {
        sels.into_iter().take(1).collect()
    };
    let recorded = match quasi_lipschitz_hypothesis(inst, &sels, opts)? {
        Ok(()) => None,
        Err(h) => {
            let h = format!("second-order {h}");
            if opts.second_order_quasi == HypothesisPolicy::Enforce {
                return Ok(InclusionVerdict::precondition(rule, h, default_tol(opts)));
            }
            Some(h)
        }
    };
    let ystars = opts
        .ystar
        .clone()
        .unwrap_or_else(|| default_ystar_grid(map.n));
    let lhs_kind = if all {
        SliceKind::Limiting
    } else {
        SliceKind::Regular
    };
    let branches: Vec<Branch> = sels
        .iter()
        .map(|s| selection_branch(map, x, s, opts.seed))
        .collect::<Result<_>>()?;
    let desc = format!(
        "union over {} subgradient selection(s) of integrated node second-order slices",
        sels.len()
    );
    let mut out = check_against(inst, opts, lhs_kind, &branches, false, &ystars, &desc)?;
    out.notes
        .push("first-order equality checked on a ball grid".into());
    Ok(finish(rule, out, opts, recorded))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessFamily {
    /// `x*_k(t) ∈ ∂̂φ_t(x_k(t))` for maximum-function nodes.
    Subdifferential,
    /// `x*_k(t) ∈ D̂*Φ_t(x_k(t), y_k(t))(y*_k(t))`.
    Coderivative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessSchedule {
    pub eps: Vec<f64>,
    /// Candidate combinations per step.
    pub budget: usize,
}

impl Default for WitnessSchedule {
    fn default() -> Self {
        WitnessSchedule {
            eps: (1..=6).map(|k| 10f64.powi(-k)).collect(),
            budget: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessTuple {
    pub x: Vector,
    pub y: Vector,
    pub xstar: Vector,
    pub ystar: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessStep {
    pub eps: f64,
    pub found: bool,
    pub xk: Vector,
    pub tuples: Vec<WitnessTuple>,
    /// `‖Σ w_t x*_k(t) − x̄*‖` of the best candidate.
    pub residual: f64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessSearch {
    pub family: WitnessFamily,
    pub steps: Vec<WitnessStep>,
    pub verdict: Verdict,
    pub note: String,
}

/// Splits `target` into `Σ_t w_t s_t` with `s_t` in the given convex pieces,
/// by nonnegative least squares with heavily weighted convexity rows.
fn decompose(pieces: &[&GeneratedSet], w: &[f64], target: &Vector) -> Option<(Vec<Vector>, f64)> {
    const CONVEXITY_WEIGHT: f64 = 1e4;
    let n = target.len();
    let k = pieces.len();
    let cols: usize = pieces
        .iter()
        .map(|p| p.points().len() + p.rays().len())
        .sum();
    let mut a = Matrix::zeros(n + k, cols);
    let mut b = Vector::zeros(n + k);
    b.rows_mut(0, n).copy_from(target);
    let mut c = 0;
    for (t, p) in pieces.iter().enumerate() {
        for pt in p.points() {
            for i in 0..n {
                a[(i, c)] = w[t] * pt[i];
            }
            a[(n + t, c)] = CONVEXITY_WEIGHT;
            c += 1;
        }
        for r in p.rays() {
            for i in 0..n {
                a[(i, c)] = w[t] * r[i];
            }
            c += 1;
        }
        b[n + t] = CONVEXITY_WEIGHT;
    }
    let (lambda, _) = nnls(&a, &b);
    let mut out = Vec::with_capacity(k);
    let mut c = 0;
    for p in pieces {
        let mut s = Vector::zeros(n);
        let mut total = 0.0;
        for pt in p.points() {
            s += pt * lambda[c];
            total += lambda[c];
            c += 1;
        }
        if total <= 0.0 {
            return None;
        }
        s /= total;
        for r in p.rays() {
            s += r * lambda[c];
            c += 1;
        }
        out.push(s);
    }
    let sum = out
        .iter()
        .zip(w)
        .fold(Vector::zeros(n), |acc, (s, wt)| acc + s * *wt);
    let res = (sum - target).norm();
    Some((out, res))
}

/// Searches per-node tuples satisfying the sequential conditions at each
/// `ε_k`: exact membership on polyhedral pieces, `‖x̄ − x_k(t)‖ ≤ ε_k`,
/// `Σ w_t ‖ȳ(t) − y_k(t)‖ ≤ ε_k`, `‖y*_k(t) − ȳ*‖ ≤ ε_k`,
/// `‖Σ w_t x*_k(t) − x̄*‖ ≤ ε_k` and `Σ w_t ‖x*_k(t)‖ ‖x_k(t) − x_k‖ ≤ ε_k`.
/// Not finding a witness is reported as an exhausted budget, never as a
/// refutation.
#[allow(clippy::too_many_arguments)]
pub fn sequential_witness_search(
    family: WitnessFamily,
    map: &RandomMap,
    space: &MeasureSpace,
    xbar: &Vector,
    selection: Option<&SelectionFunction>,
    target_xstar: &Vector,
    target_ystar: Option<&Vector>,
    schedule: &WitnessSchedule,
) -> Result<WitnessSearch> {
    map.check_space(space)?;
    check_dim(map.n, xbar.len())?;
    check_dim(map.n, target_xstar.len())?;
    let w = space.weights();
    let k_nodes = map.nodes.len();
    let ybar: Vec<Vector> = match (family, selection) {
        (_, Some(s)) => s.per_node.clone(),
        (WitnessFamily::Subdifferential, None) => vec![Vector::zeros(0); k_nodes],
        (WitnessFamily::Coderivative, None) => {
            return Err(Error::InvalidInput(
                "coderivative witnesses need a base selection".into(),
            ));
        }
    };
    let ystar = match family {
        WitnessFamily::Coderivative => target_ystar.cloned().ok_or_else(|| {
            Error::InvalidInput("coderivative witnesses need a target ystar".into())
        })?,
        WitnessFamily::Subdifferential => {
            if !map.is_max_affine() {
                return Err(Error::InvalidInput(
                    "subdifferential witnesses need maximum-function nodes".into(),
                ));
            }
            Vector::zeros(0)
        }
    };
    let n = map.n;
    let mut steps = Vec::new();
    for &eps in &schedule.eps {
        let mut offsets = vec![Vector::zeros(n)];
        for i in 0..n {
            for s in [0.5, -0.5] {
                offsets.push(Vector::from_fn(
                    n,
                    |j, _| if i == j { s * eps } else { 0.0 },
                ));
            }
        }
        // Per node: candidate (x, y, pieces).
        let mut cands: Vec<Vec<(Vector, Vector, Vec<GeneratedSet>)>> = Vec::with_capacity(k_nodes);
        for (t, node) in map.nodes.iter().enumerate() {
            let mut list = Vec::new();
            for off in &offsets {
                let xt = xbar + off;
                let Some(v) = node.value(&xt)? else { continue };
                match family {
                    WitnessFamily::Subdifferential => {
                        list.push((xt, Vector::zeros(0), vec![v.to_generated()]));
                    }
                    WitnessFamily::Coderivative => {
                        let yt = v.project(&ybar[t]);
                        match coderivative_node(node, &xt, &yt, &ystar, SliceKind::Regular) {
                            Ok(s) => list.push((xt, yt, s.pieces().to_vec())),
                            Err(Error::Unsupported(_))
                            | Err(Error::NonFinite(_))
                            | Err(Error::QualificationViolated(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            cands.push(list);
        }
        let mut best: Option<WitnessStep> = None;
        let mut tried = 0usize;
        let sizes: Vec<usize> = cands.iter().map(|c| c.len()).collect();
        'search: for combo in cartesian(&sizes) {
            let chosen: Vec<&(Vector, Vector, Vec<GeneratedSet>)> = combo
                .iter()
                .enumerate()
                .map(|(t, &i)| &cands[t][i])
                .collect();
            if family == WitnessFamily::Coderivative {
                let ydist: f64 = chosen
                    .iter()
                    .zip(&ybar)
                    .zip(&w)
                    .map(|((c, yb), wt)| wt * (&c.1 - yb).norm())
                    .sum();
                if ydist > eps {
                    continue;
                }
            }
            let piece_sizes: Vec<usize> = chosen.iter().map(|c| c.2.len()).collect();
            for pc in cartesian(&piece_sizes) {
                tried += 1;
                if tried > schedule.budget {
                    break 'search;
                }
                let pieces: Vec<&GeneratedSet> = pc
                    .iter()
                    .enumerate()
                    .map(|(t, &i)| &chosen[t].2[i])
                    .collect();
                let Some((xs, res)) = decompose(&pieces, &w, target_xstar) else {
                    continue;
                };
                let product: f64 = chosen
                    .iter()
                    .zip(&xs)
                    .zip(&w)
                    .map(|((c, s), wt)| wt * s.norm() * (&c.0 - xbar).norm())
                    .sum();
                let found = res <= eps && product <= eps;
                let step = WitnessStep {
                    eps,
                    found,
                    xk: xbar.clone(),
                    tuples: chosen
                        .iter()
                        .zip(xs)
                        .map(|(c, s)| WitnessTuple {
                            x: c.0.clone(),
                            y: c.1.clone(),
                            xstar: s,
                            ystar: ystar.clone(),
                        })
                        .collect(),
                    residual: res,
                    candidates: tried,
                };
                let better = best
                    .as_ref()
                    .map(|b| !b.found && (found || res < b.residual))
                    .unwrap_or(true);
                if better {
                    best = Some(step);
                }
                if found {
                    break 'search;
                }
            }
        }
        let mut step = best.unwrap_or(WitnessStep {
            eps,
            found: false,
            xk: xbar.clone(),
            tuples: vec![],
            residual: f64::INFINITY,
            candidates: tried,
        });
        step.candidates = tried.min(schedule.budget);
        steps.push(step);
    }
    let all = steps.iter().all(|s| s.found);
    let missing: Vec<String> = steps
        .iter()
        .filter(|s| !s.found)
        .map(|s| format!("{:e}", s.eps))
        .collect();
    Ok(WitnessSearch {
        family,
        verdict: if all {
            Verdict::Holds
        } else {
            Verdict::Inconclusive
        },
        note: if all {
            "witness found at every radius".into()
        } else {
            format!("search-budget exhausted at eps {}", missing.join(","))
        },
        steps,
    })
}

/// Excess of one polytope over another, exposed for report consumers.
pub fn polytope_excess(a: &Polytope, b: &Polytope) -> f64 {
    excess(a, b)
}
