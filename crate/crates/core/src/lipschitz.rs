//! Grid checks and modulus estimates for local Lipschitz, quasi-Lipschitz
//! and Lipschitz-like behaviour of random maps and their expectations.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coderivative::{coderivative_node, coderivative_polyhedral_graph, SliceKind};
use crate::error::{check_dim, Error, Result};
use crate::expected::{evaluate_expected_map, SelectionFunction};
use crate::geometry::{hausdorff_distance, PolyhedralUnion};
use crate::integrand::{ball_grid, expected_local_graph, MatrixField, NodeMap, RandomMap};
use crate::linalg::{cartesian, concat, Vector};
use crate::measure::MeasureSpace;
use crate::normal_cone::unit_directions;
use crate::oracle::{
    oracle_normal_cone, slice_directions, GraphOracle, NormalKind, RadiiSchedule, SetOracle,
};
use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzProperty {
    LocalLipschitz,
    QuasiLipschitz,
    LipschitzLike,
    SubLipschitz,
}

impl LipschitzProperty {
    pub fn as_str(&self) -> &'static str {
        match self {
            LipschitzProperty::LocalLipschitz => "local_lipschitz",
            LipschitzProperty::QuasiLipschitz => "quasi_lipschitz",
            LipschitzProperty::LipschitzLike => "lipschitz_like",
            LipschitzProperty::SubLipschitz => "sub_lipschitz",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModulusField {
    PerNode(Vec<(String, f64)>),
    Scalar(f64),
}

impl ModulusField {
    pub fn max(&self) -> f64 {
        match self {
            ModulusField::PerNode(v) => v.iter().map(|(_, l)| *l).fold(0.0, f64::max),
            ModulusField::Scalar(l) => *l,
        }
    }
}

/// Moduli observed at one refinement level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelModuli {
    pub spacing: f64,
    pub per_node: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub property: LipschitzProperty,
    pub verdict: Verdict,
    pub modulus: ModulusField,
    pub levels: Vec<LevelModuli>,
    pub witness: Option<String>,
    pub grid: String,
    pub note: Option<String>,
}

/// Nested grids `x̄ + 2^{−k} j`, `|j_i| ≤ half_width`, clipped to the ball
/// of radius η.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedGrid {
    pub levels: Vec<i32>,
    pub half_width: i64,
    /// Per-node-varying perturbation samples per level (quasi-Lipschitz).
    pub varying: usize,
}

impl Default for NestedGrid {
    fn default() -> Self {
        NestedGrid {
            levels: (3..=10).collect(),
            half_width: 8,
            varying: MAX_VARYING_COMBINATIONS,
        }
    }
}

impl NestedGrid {
    /// Coarse grid for hypothesis checks inside rule verification.
    pub fn light() -> Self {
        NestedGrid {
            levels: vec![3, 4, 5],
            half_width: 2,
            varying: 20,
        }
    }

    pub fn describe(&self, eta: f64) -> String {
        format!(
            "nested 2^-k k={}..{} halfwidth={} eta={}",
            self.levels.first().copied().unwrap_or(0),
            self.levels.last().copied().unwrap_or(0),
            self.half_width,
            eta
        )
    }

    fn points(&self, center: &Vector, k: i32, eta: f64) -> Vec<(Vec<i64>, Vector)> {
        let h = 2f64.powi(-k);
        let n = center.len();
        let side = (2 * self.half_width + 1) as usize;
        cartesian(&vec![side; n])
            .into_iter()
            .map(|idx| {
                let j: Vec<i64> = idx.iter().map(|&i| i as i64 - self.half_width).collect();
                let x = Vector::from_fn(n, |i, _| center[i] + h * j[i] as f64);
                (j, x)
            })
            .filter(|(_, x)| (x - center).norm() <= eta * (1.0 + 1e-12))
            .collect()
    }
}

/// Divergence heuristic on per-level moduli of one node: growth by more than
/// 2 across one level, or across the sweep with the last three levels
/// strictly increasing.
pub fn diverging(series: &[f64]) -> bool {
    let finite: Vec<f64> = series.to_vec();
    for w in finite.windows(2) {
        if w[0] > 1e-12 && w[1] > 2.0 * w[0] {
            return true;
        }
    }
    let k = finite.len();
    if k >= 3 {
        let first = finite[0];
        let last = finite[k - 1];
        let rising = finite[k - 3] < finite[k - 2] && finite[k - 2] < finite[k - 1];
        if first > 1e-12 && last > 2.0 * first && rising {
            return true;
        }
    }
    false
}

/// Modulus with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusEstimate {
    pub value: f64,
    pub exact: bool,
}

fn y_grid(m: usize) -> Vec<Vector> {
    unit_directions(m, 64)
}

fn node_oracle(node: &NodeMap) -> GraphOracle<'_> {
    GraphOracle::new(node.x_dim(), node.y_dim(), move |x: &Vector| {
        node.value(x).ok().flatten()
    })
}

/// `sup{‖x*‖ | x* ∈ D̂*Φ_t(x, y)(y*), ‖y*‖ = 1}` over a unit y*-grid; `+∞`
/// when the slice at `y* = 0` is nontrivial or a slice is unbounded.
pub fn coderivative_modulus(
    node: &NodeMap,
    x: &Vector,
    y: &Vector,
    seed: u64,
) -> Result<ModulusEstimate> {
    let v = node
        .value(x)?
        .ok_or_else(|| Error::Infeasible("empty value".into()))?;
    let d = (v.project(y) - y).norm();
    if d > 1e-9 {
        return Err(Error::PointNotInSet { distance: d });
    }
    let m = node.y_dim();
    if let NodeMap::Smooth { g } = node {
        let j = g
            .jacobian(x)
            .ok_or_else(|| Error::NonFinite("Jacobian".into()))?;
        let value = y_grid(m)
            .iter()
            .map(|ys| (j.transpose() * ys).norm())
            .fold(0.0, f64::max);
        return Ok(ModulusEstimate { value, exact: true });
    }
    // Constant A: (x, w) ↦ (x, b(x) + w) is a C¹ diffeomorphism carrying
    // ℝⁿ × AF onto the graph, so the slice is {∇b(x)ᵀ y*} when −y* is normal
    // to the value at y and empty otherwise.
    if let NodeMap::AffineImage {
        a: MatrixField::Constant(_),
        b,
        ..
    } = node
    {
        if let Some(j) = b.jacobian(x) {
            let tol = 1e-9 * (1.0 + v.max_norm());
            let value = y_grid(m)
                .iter()
                .filter(|ys| v.vertices().iter().all(|p| -ys.dot(&(p - y)) <= tol))
                .map(|ys| (j.transpose() * ys).norm())
                .fold(0.0, f64::max);
            return Ok(ModulusEstimate { value, exact: true });
        }
    }
    match coderivative_node(node, x, y, &Vector::zeros(m), SliceKind::Regular) {
        Ok(zero) => {
            if zero.max_norm() > 1e-9 {
                return Ok(ModulusEstimate {
                    value: f64::INFINITY,
                    exact: true,
                });
            }
            let mut value = 0.0f64;
            for ys in y_grid(m) {
                let s = coderivative_node(node, x, y, &ys, SliceKind::Regular)?;
                value = value.max(s.max_norm());
            }
            Ok(ModulusEstimate { value, exact: true })
        }
        Err(Error::Unsupported(_)) | Err(Error::NonFinite(_)) => {
            let oracle = node_oracle(node);
            let n = node.x_dim();
            let sched = RadiiSchedule::default_for(n + m);
            let cone =
                oracle_normal_cone(&oracle, &concat(x, y), NormalKind::Regular, &sched, seed)?;
            Ok(ModulusEstimate {
                value: sampled_modulus(&cone.directions, n, m),
                exact: false,
            })
        }
        Err(e) => Err(e),
    }
}

const SLICE_ANGLE: f64 = 1e-2;

fn sampled_modulus(dirs: &[Vector], n: usize, m: usize) -> f64 {
    if slice_directions(dirs, n, &Vector::zeros(m), SLICE_ANGLE).len() > 1 {
        return f64::INFINITY;
    }
    y_grid(m)
        .iter()
        .flat_map(|ys| slice_directions(dirs, n, ys, SLICE_ANGLE))
        .map(|p| p.norm())
        .fold(0.0, f64::max)
}

/// Modulus for a map given by a polyhedral graph.
pub fn polyhedral_graph_modulus(
    graph: &PolyhedralUnion,
    n: usize,
    x: &Vector,
    y: &Vector,
) -> Result<f64> {
    let m = y.len();
    let zero =
        coderivative_polyhedral_graph(graph, n, x, y, &Vector::zeros(m), SliceKind::Regular)?;
    if zero.max_norm() > 1e-9 {
        return Ok(f64::INFINITY);
    }
    let mut value = 0.0f64;
    for ys in y_grid(m) {
        value = value.max(
            coderivative_polyhedral_graph(graph, n, x, y, &ys, SliceKind::Regular)?.max_norm(),
        );
    }
    Ok(value)
}

fn fmt_vec(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(|c| format!("{c:.6e}")).collect();
    format!("[{}]", parts.join(","))
}

/// Per-node Hausdorff-Lipschitz constants on nested grids around `x̄`.
pub fn check_integrable_local_lipschitz(
    map: &RandomMap,
    space: &MeasureSpace,
    xbar: &Vector,
    eta: f64,
    grid: &NestedGrid,
) -> Result<LipschitzReport> {
    map.check_space(space)?;
    check_dim(map.n, xbar.len())?;
    let k_nodes = map.nodes.len();
    let mut levels = Vec::new();
    let mut witness = None;
    for &k in &grid.levels {
        let h = 2f64.powi(-k);
        let pts = grid.points(xbar, k, eta);
        let index: HashMap<Vec<i64>, usize> = pts
            .iter()
            .enumerate()
            .map(|(i, (j, _))| (j.clone(), i))
            .collect();
        let mut per_node = vec![0.0f64; k_nodes];
        for (t, node) in map.nodes.iter().enumerate() {
            let vals: Vec<_> = pts
                .iter()
                .map(|(_, x)| node.value(x))
                .collect::<Result<_>>()?;
            for (i, (j, x)) in pts.iter().enumerate() {
                for axis in 0..map.n {
                    let mut jn = j.clone();
                    jn[axis] += 1;
                    let Some(&i2) = index.get(&jn) else { continue };
                    let hd = hausdorff_distance(vals[i].as_ref(), vals[i2].as_ref())?;
                    let ratio = hd / h;
                    if ratio > per_node[t] {
                        per_node[t] = ratio;
                        if !ratio.is_finite() && witness.is_none() {
                            witness = Some(format!(
                                "node={} x={} x'={} haus=inf",
                                space.nodes()[t].id,
                                fmt_vec(x),
                                fmt_vec(&pts[i2].1)
                            ));
                        }
                    }
                }
            }
        }
        levels.push(LevelModuli {
            spacing: h,
            per_node,
        });
    }
    Ok(finish(
        LipschitzProperty::LocalLipschitz,
        space,
        levels,
        witness,
        grid.describe(eta),
    ))
}

fn finish(
    property: LipschitzProperty,
    space: &MeasureSpace,
    levels: Vec<LevelModuli>,
    witness: Option<String>,
    grid: String,
) -> LipschitzReport {
    let k_nodes = space.len();
    let per_node: Vec<f64> = (0..k_nodes)
        .map(|t| levels.iter().map(|l| l.per_node[t]).fold(0.0, f64::max))
        .collect();
    let modulus = ModulusField::PerNode(
        space
            .nodes()
            .iter()
            .zip(&per_node)
            .map(|(n, l)| (n.id.clone(), *l))
            .collect(),
    );
    if per_node.iter().any(|l| !l.is_finite()) {
        return LipschitzReport {
            property,
            verdict: Verdict::Violated,
            modulus,
            levels,
            witness,
            grid,
            note: Some("infinite modulus".into()),
        };
    }
    let diverging_nodes: Vec<String> = (0..k_nodes)
        .filter(|&t| diverging(&levels.iter().map(|l| l.per_node[t]).collect::<Vec<_>>()))
        .map(|t| space.nodes()[t].id.clone())
        .collect();
    if !diverging_nodes.is_empty() {
        return LipschitzReport {
            property,
            verdict: Verdict::Inconclusive,
            modulus,
            levels,
            witness,
            grid,
            note: Some(format!(
                "diverging under refinement at nodes {}",
                diverging_nodes.join(",")
            )),
        };
    }
    LipschitzReport {
        property,
        verdict: Verdict::HoldsOnGrid,
        modulus,
        levels,
        witness,
        grid,
        note: None,
    }
}

/// Largest `s ∈ [0, 1]` with `w ‖p + s (v − p) − c‖ ≤ budget`.
fn reach_along(p: &Vector, v: &Vector, c: &Vector, w: f64, budget: f64) -> Option<Vector> {
    let ok = |s: f64| w * ((p + (v - p) * s) - c).norm() <= budget;
    if !ok(0.0) {
        return None;
    }
    if ok(1.0) {
        return Some(v.clone());
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(p + (v - p) * lo)
}

pub const MAX_VARYING_COMBINATIONS: usize = 200;

/// Quasi-Lipschitz check: per-node regular-coderivative moduli along
/// perturbations `x(t) ∈ 𝔹_η(x̄)` (constant and per-node-varying modes) and
/// `y(t) ∈ Φ_t(x(t))` with `Σ w_t ‖y(t) − ȳ(t)‖ ≤ η`.
pub fn check_quasi_lipschitz(
    map: &RandomMap,
    space: &MeasureSpace,
    xbar: &Vector,
    selection: &SelectionFunction,
    eta: f64,
    grid: &NestedGrid,
    seed: u64,
) -> Result<LipschitzReport> {
    map.check_space(space)?;
    check_dim(map.n, xbar.len())?;
    selection.validate(map, xbar, space, 1e-9)?;
    let w = space.weights();
    let k_nodes = map.nodes.len();
    let mut cache: HashMap<(usize, Vec<u64>), f64> = HashMap::new();
    let mut levels = Vec::new();
    let mut witness = None;
    let mut oracle_used = false;
    for &k in &grid.levels {
        let xs: Vec<Vector> = grid
            .points(xbar, k, eta)
            .into_iter()
            .map(|(_, x)| x)
            .collect();
        let mut combos: Vec<Vec<usize>> = (0..xs.len()).map(|i| vec![i; k_nodes]).collect();
        if k_nodes > 1 && xs.len() > 1 {
            // One node moves while the others stay at the grid point nearest x̄.
            let centre = (0..xs.len())
                .min_by(|&a, &b| (&xs[a] - xbar).norm().total_cmp(&(&xs[b] - xbar).norm()))
                .unwrap_or(0);
            for t in 0..k_nodes {
                for i in 0..xs.len() {
                    let mut c = vec![centre; k_nodes];
                    c[t] = i;
                    combos.push(c);
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x5851_F42D));
            for _ in 0..grid.varying {
                let picks: Vec<usize> = (0..xs.len())
                    .collect::<Vec<_>>()
                    .choose_multiple(&mut rng, 3.min(xs.len()))
                    .copied()
                    .collect();
                combos.push(
                    (0..k_nodes)
                        .map(|_| picks[rng.gen_range(0..picks.len())])
                        .collect(),
                );
            }
        }
        let mut per_node = vec![0.0f64; k_nodes];
        for combo in combos {
            let mut vals = Vec::with_capacity(k_nodes);
            for (t, node) in map.nodes.iter().enumerate() {
                vals.push(node.value(&xs[combo[t]])?);
            }
            if vals.iter().any(|v| v.is_none()) {
                continue;
            }
            let vals: Vec<_> = vals.into_iter().map(|v| v.unwrap()).collect();
            let nearest: Vec<Vector> = vals
                .iter()
                .zip(&selection.per_node)
                .map(|(v, y)| v.project(y))
                .collect();
            let costs: Vec<f64> = (0..k_nodes)
                .map(|t| w[t] * (&nearest[t] - &selection.per_node[t]).norm())
                .collect();
            let total: f64 = costs.iter().sum();
            if total > eta {
                continue;
            }
            for t in 0..k_nodes {
                let budget = eta - (total - costs[t]);
                let x = &xs[combo[t]];
                let mut cands = vec![nearest[t].clone()];
                for v in vals[t].vertices() {
                    if let Some(y) =
                        reach_along(&nearest[t], v, &selection.per_node[t], w[t], budget)
                    {
                        cands.push(y);
                    }
                }
                for y in cands {
                    let key: Vec<u64> = x.iter().chain(y.iter()).map(|c| c.to_bits()).collect();
                    let l = match cache.get(&(t, key.clone())) {
                        Some(l) => *l,
                        None => {
                            let est = coderivative_modulus(&map.nodes[t], x, &y, seed)?;
                            oracle_used |= !est.exact;
                            cache.insert((t, key), est.value);
                            est.value
                        }
                    };
                    if l > per_node[t] {
                        per_node[t] = l;
                        if witness.is_none() || !l.is_finite() {
                            witness = Some(format!(
                                "node={} x={} y={} modulus={l:.6e}",
                                space.nodes()[t].id,
                                fmt_vec(x),
                                fmt_vec(&y)
                            ));
                        }
                    }
                }
            }
        }
        levels.push(LevelModuli {
            spacing: 2f64.powi(-k),
            per_node,
        });
    }
    let mut report = finish(
        LipschitzProperty::QuasiLipschitz,
        space,
        levels,
        witness,
        grid.describe(eta),
    );
    if oracle_used {
        let extra = "some moduli from the sampling oracle";
        report.note = Some(match report.note {
            Some(n) => format!("{n}; {extra}"),
            None => extra.into(),
        });
    }
    Ok(report)
}

/// Deterministic map for the coderivative criterion.
pub enum DeterministicMap<'a> {
    Graph {
        graph: &'a PolyhedralUnion,
        n: usize,
    },
    Expected {
        map: &'a RandomMap,
        space: &'a MeasureSpace,
    },
    Node(&'a NodeMap),
}

/// Coderivative criterion: `D*G(x̄, ȳ)(0) = {0}` and bounded slices; modulus
/// `max ‖x*‖` over unit `y*`.
pub fn check_lipschitz_like_deterministic(
    target: DeterministicMap<'_>,
    xbar: &Vector,
    ybar: &Vector,
    seed: u64,
) -> Result<LipschitzReport> {
    let m = ybar.len();
    let (graph, n) = match &target {
        DeterministicMap::Graph { graph, n } => (Some((*graph).clone()), *n),
        DeterministicMap::Expected { map, space } => (
            expected_local_graph(map, space, xbar, ybar).map(|g| g.union),
            map.n,
        ),
        DeterministicMap::Node(node) => {
            (node.local_graph(xbar, ybar).map(|g| g.union), node.x_dim())
        }
    };
    check_dim(n, xbar.len())?;
    let grid_desc = format!("ystar unit grid of {} directions", y_grid(m).len());
    let mut slices: Vec<(Vector, f64, Option<Vector>)> = Vec::new();
    let exact = match &graph {
        Some(g) => {
            let mut ys_all = vec![Vector::zeros(m)];
            ys_all.extend(y_grid(m));
            let mut ok = true;
            for ys in ys_all {
                match coderivative_polyhedral_graph(g, n, xbar, ybar, &ys, SliceKind::Limiting) {
                    Ok(s) => {
                        let wit = s
                            .pieces()
                            .iter()
                            .flat_map(|p| p.samples(&[1.0]))
                            .max_by(|a, b| a.norm().total_cmp(&b.norm()));
                        slices.push((ys, s.max_norm(), wit));
                    }
                    Err(Error::Unsupported(_)) => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            ok
        }
        None => false,
    };
    if !exact {
        slices.clear();
        let value = |x: &Vector| -> Option<crate::geometry::Polytope> {
            match &target {
                DeterministicMap::Graph { graph, n } => {
                    let _ = (graph, n);
                    None
                }
                DeterministicMap::Expected { map, space } => {
                    evaluate_expected_map(map, x, space).ok().flatten()
                }
                DeterministicMap::Node(node) => node.value(x).ok().flatten(),
            }
        };
        let cone = match &target {
            DeterministicMap::Graph { graph, .. } => {
                let o = crate::oracle::UnionOracle((*graph).clone());
                oracle_normal_cone(
                    &o,
                    &concat(xbar, ybar),
                    NormalKind::Limiting,
                    &RadiiSchedule::default_for(n + m),
                    seed,
                )?
            }
            _ => {
                let o = GraphOracle::new(n, m, value);
                if !o.contains(&concat(xbar, ybar), 1e-9) {
                    return Err(Error::PointNotInSet {
                        distance: o
                            .project(&concat(xbar, ybar))
                            .map(|q| (q - concat(xbar, ybar)).norm())
                            .unwrap_or(f64::INFINITY),
                    });
                }
                oracle_normal_cone(
                    &o,
                    &concat(xbar, ybar),
                    NormalKind::Limiting,
                    &RadiiSchedule::default_for(n + m),
                    seed,
                )?
            }
        };
        let zero = slice_directions(&cone.directions, n, &Vector::zeros(m), SLICE_ANGLE);
        let wit0 = zero.get(1).cloned();
        slices.push((
            Vector::zeros(m),
            if zero.len() > 1 { f64::INFINITY } else { 0.0 },
            wit0,
        ));
        for ys in y_grid(m) {
            let pts = slice_directions(&cone.directions, n, &ys, SLICE_ANGLE);
            let best = pts
                .iter()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .cloned();
            slices.push((
                ys,
                pts.iter()
                    .map(|p| p.norm())
                    .fold(f64::NEG_INFINITY, f64::max),
                best,
            ));
        }
    }
    let (ys0, norm0, wit0) = &slices[0];
    let _ = ys0;
    if *norm0 > 1e-9 {
        return Ok(LipschitzReport {
            property: LipschitzProperty::LipschitzLike,
            verdict: Verdict::Violated,
            modulus: ModulusField::Scalar(f64::INFINITY),
            levels: vec![],
            witness: wit0
                .as_ref()
                .map(|w| format!("ystar=0 xstar={}", fmt_vec(w))),
            grid: grid_desc,
            note: Some("coderivative at zero is nontrivial".into()),
        });
    }
    let mut ell = 0.0f64;
    let mut worst = None;
    for (ys, norm, wit) in &slices[1..] {
        if *norm > ell {
            ell = *norm;
            worst = wit
                .as_ref()
                .map(|w| format!("ystar={} xstar={}", fmt_vec(ys), fmt_vec(w)));
        }
    }
    if !ell.is_finite() {
        return Ok(LipschitzReport {
            property: LipschitzProperty::LipschitzLike,
            verdict: Verdict::Violated,
            modulus: ModulusField::Scalar(f64::INFINITY),
            levels: vec![],
            witness: worst,
            grid: grid_desc,
            note: Some("unbounded coderivative slice".into()),
        });
    }
    Ok(LipschitzReport {
        property: LipschitzProperty::LipschitzLike,
        verdict: if exact {
            Verdict::Holds
        } else {
            Verdict::HoldsOnGrid
        },
        modulus: ModulusField::Scalar(ell),
        levels: vec![],
        witness: worst,
        grid: grid_desc,
        note: if exact {
            None
        } else {
            Some("limiting slices from the sampling oracle".into())
        },
    })
}

/// Outcome of the convex-graph bound `(M + ‖y‖)/η` cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexGraphBound {
    pub m: f64,
    pub eta: f64,
    pub checked: usize,
    /// Largest `modulus − bound` over the grid (≤ 1e-6 when the bound holds).
    pub max_excess: f64,
    pub holds: bool,
}

impl ConvexGraphBound {
    pub fn bound(&self, y: &Vector) -> f64 {
        (self.m + y.norm()) / self.eta
    }
}

/// Verifies `d(0, G(x)) ≤ M` on a grid of `𝔹_{2η}(x̄)` and checks computed
/// moduli against `(M + ‖y‖)/η` on `𝔹_η(x̄)`.
pub fn convex_graph_modulus_bound(
    node: &NodeMap,
    xbar: &Vector,
    eta: f64,
    big_m: f64,
    seed: u64,
) -> Result<ConvexGraphBound> {
    check_dim(node.x_dim(), xbar.len())?;
    let zero = Vector::zeros(node.y_dim());
    for x in ball_grid(xbar, 2.0 * eta, 4) {
        let v = node
            .value(&x)?
            .ok_or_else(|| Error::Infeasible("empty value".into()))?;
        let d = (v.project(&zero) - &zero).norm();
        if d > big_m + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "M-verification failed: d(0, G(x)) = {d:.6e} > M at x = {}",
                fmt_vec(&x)
            )));
        }
    }
    let mut checked = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for x in ball_grid(xbar, eta, 4) {
        let v = node.value(&x)?.expect("checked nonempty");
        let mut ys: Vec<Vector> = v.vertices().to_vec();
        ys.push(v.project(&zero));
        for y in ys {
            let l = coderivative_modulus(node, &x, &y, seed)?.value;
            max_excess = max_excess.max(l - (big_m + y.norm()) / eta);
            checked += 1;
        }
    }
    Ok(ConvexGraphBound {
        m: big_m,
        eta,
        checked,
        max_excess,
        holds: max_excess <= 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AffineMap, ExprVector};
    use crate::geometry::{Polyhedron, Polytope};
    use crate::linalg::{vector, Matrix};
    use crate::measure::NodeKind;
    use std::sync::Arc;

    fn smooth(srcs: &[&str], vars: &[&str]) -> NodeMap {
        NodeMap::Smooth {
            g: Arc::new(ExprVector::parse(srcs, vars).unwrap()),
        }
    }

    fn constant_interval() -> NodeMap {
        NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(AffineMap::linear(Matrix::zeros(1, 1))),
            f: Polytope::interval(0.0, 1.0),
        }
    }

    fn spectral_norm(a: &Matrix) -> f64 {
        // Power iteration on AᵀA.
        let ata = a.transpose() * a;
        let mut v = Vector::from_element(ata.ncols(), 1.0).normalize();
        for _ in 0..200 {
            v = (&ata * &v).normalize();
        }
        (&ata * &v).norm().sqrt()
    }

    #[test]
    fn affine_image_modulus_matches_polyhedral_slices() {
        let node = NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0])),
            b: Arc::new(
                AffineMap::new(
                    Matrix::from_row_slice(2, 2, &[0.7, -1.2, 0.4, 0.9]),
                    vector(&[0.1, -0.2]),
                )
                .unwrap(),
            ),
            f: Polytope::new(vec![
                vector(&[0.0, 0.0]),
                vector(&[1.0, 0.2]),
                vector(&[0.3, 1.1]),
            ])
            .unwrap(),
        };
        let x = vector(&[0.3, -0.4]);
        let v = node.value(&x).unwrap().unwrap();
        let vs = v.vertices();
        let c = (&vs[0] + &vs[1] + &vs[2]) / 3.0;
        for y in [vs[0].clone(), (&vs[0] + &vs[1]) * 0.5, c] {
            let fast = coderivative_modulus(&node, &x, &y, 1).unwrap().value;
            let generic = y_grid(2)
                .iter()
                .map(|ys| {
                    coderivative_node(&node, &x, &y, ys, SliceKind::Regular)
                        .unwrap()
                        .max_norm()
                })
                .fold(0.0, f64::max);
            assert!(
                (fast - generic).abs() < 1e-9,
                "{fast} vs {generic} at {y:?}"
            );
        }
    }

    #[test]
    fn smooth_modulus_is_spectral_norm() {
        let node = smooth(&["x1 + 2*x2", "3*x1 - x2"], &["x1", "x2"]);
        let x = vector(&[0.2, 0.1]);
        let y = node.value(&x).unwrap().unwrap().vertices()[0].clone();
        let l = coderivative_modulus(&node, &x, &y, 0).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, -1.0]);
        assert!((l.value - spectral_norm(&a)).abs() <= 2e-2 * spectral_norm(&a));
        // Scale covariance.
        let node2 = smooth(&["2.5*(x1 + 2*x2)", "2.5*(3*x1 - x2)"], &["x1", "x2"]);
        let y2 = node2.value(&x).unwrap().unwrap().vertices()[0].clone();
        let l2 = coderivative_modulus(&node2, &x, &y2, 0).unwrap();
        assert!((l2.value - 2.5 * l.value).abs() < 1e-9);
    }

    #[test]
    fn constant_map_modulus_zero() {
        let l = coderivative_modulus(&constant_interval(), &vector(&[0.3]), &vector(&[1.0]), 0)
            .unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn secant_model_modulus() {
        // {y ≥ s|x|} at the origin: modulus s.
        let s = 3.0;
        let graph = PolyhedralUnion::from_polyhedra(
            2,
            vec![Polyhedron::new(
                2,
                vec![(vector(&[s, -1.0]), 0.0), (vector(&[-s, -1.0]), 0.0)],
            )
            .unwrap()],
        )
        .unwrap();
        let l = polyhedral_graph_modulus(&graph, 1, &vector(&[0.0]), &vector(&[0.0])).unwrap();
        assert!((l - s).abs() < 1e-9);
    }

    #[test]
    fn divergence_heuristic() {
        assert!(diverging(&[1.0, 2.5]));
        assert!(diverging(&[1.0, 1.4, 2.0, 2.8]));
        assert!(!diverging(&[1.0, 1.0, 1.0]));
        assert!(!diverging(&[2.0, 1.0, 0.5]));
    }

    #[test]
    fn local_lipschitz_affine_example() {
        // A(x)F + b(x) with A(x) = 1 + x/2 (Lipschitz 1/2), F = [0, 2], b(x) = 3x.
        let space = MeasureSpace::uniform(2, 1.0, NodeKind::Atom).unwrap();
        let node = NodeMap::AffineImage {
            a: MatrixField::Expr {
                rows: 1,
                cols: 1,
                entries: vec![crate::expr::Expr::parse("1 + x/2", &["x"]).unwrap()],
                n: 1,
            },
            b: Arc::new(AffineMap::linear(Matrix::from_element(1, 1, 3.0))),
            f: Polytope::interval(0.0, 2.0),
        };
        let map = RandomMap::constant(node, &space).unwrap();
        let r = check_integrable_local_lipschitz(
            &map,
            &space,
            &vector(&[0.0]),
            0.5,
            &NestedGrid::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::HoldsOnGrid);
        // λ ℓ₁ + ℓ₂ = 2·0.5 + 3.
        assert!(r.modulus.max() <= 4.0 + 1e-9);
        let c = RandomMap::constant(constant_interval(), &space).unwrap();
        let r = check_integrable_local_lipschitz(
            &c,
            &space,
            &vector(&[0.0]),
            0.5,
            &NestedGrid::default(),
        )
        .unwrap();
        assert_eq!(r.modulus.max(), 0.0);
    }

    #[test]
    fn quasi_lipschitz_smooth() {
        let space = MeasureSpace::uniform(2, 1.0, NodeKind::Atom).unwrap();
        let map = RandomMap::new(vec![smooth(&["2*x"], &["x"]), smooth(&["x^2"], &["x"])]).unwrap();
        let x = vector(&[0.5]);
        let sel = SelectionFunction::new(vec![vector(&[1.0]), vector(&[0.25])], &space).unwrap();
        let grid = NestedGrid {
            levels: vec![3, 4, 5],
            half_width: 4,
            varying: 50,
        };
        let r = check_quasi_lipschitz(&map, &space, &x, &sel, 0.5, &grid, 1).unwrap();
        assert_eq!(r.verdict, Verdict::HoldsOnGrid);
        let ModulusField::PerNode(v) = &r.modulus else {
            panic!()
        };
        assert!((v[0].1 - 2.0).abs() < 1e-12);
        assert!(
            (v[1].1 - 2.0 * (0.5 + 4.0 / 8.0)).abs() < 1e-9,
            "{v:?} {r:?}"
        );
    }

    #[test]
    fn lipschitz_like_identity_and_vertical() {
        let node = smooth(&["x"], &["x"]);
        let r = check_lipschitz_like_deterministic(
            DeterministicMap::Node(&node),
            &vector(&[0.0]),
            &vector(&[0.0]),
            0,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.modulus.max() - 1.0).abs() < 1e-12);
        // Vertical line {x = 0}: D*G(0,0)(0) ∋ 1.
        let graph = PolyhedralUnion::from_polyhedra(
            1 + 1,
            vec![Polyhedron::whole(2)
                .with_equality(vector(&[1.0, 0.0]), 0.0)
                .unwrap()],
        )
        .unwrap();
        let r = check_lipschitz_like_deterministic(
            DeterministicMap::Graph {
                graph: &graph,
                n: 1,
            },
            &vector(&[0.0]),
            &vector(&[0.0]),
            0,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.witness.is_some());
    }

    #[test]
    fn convex_graph_bounds() {
        let g = NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(AffineMap::linear(Matrix::zeros(1, 1))),
            f: Polytope::interval(-1.0, 1.0),
        };
        let r = convex_graph_modulus_bound(&g, &vector(&[0.0]), 1.0, 0.0, 0).unwrap();
        assert!(r.holds);
        let id = smooth(&["x"], &["x"]);
        let r = convex_graph_modulus_bound(&id, &vector(&[0.0]), 1.0, 2.0, 0).unwrap();
        assert!(r.holds && r.checked > 0);
        assert!(convex_graph_modulus_bound(&id, &vector(&[0.0]), 1.0, 0.5, 0).is_err());
    }
}
