//! Brute-force sampling oracles for normal cones, coderivatives and set
//! inclusion, built directly on the defining limits. Independent of the
//! exact machinery except for projections onto single convex pieces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr_free::gaussian;

use crate::coderivative::{CoderivativeSlice, SliceKind, SliceValue};
use crate::error::{check_dim, Error, Result};
use crate::functions::ScalarFn;
use crate::geometry::{ConvexCone, PointSet, PolyhedralUnion, Polytope};
use crate::linalg::{angle, concat, unit, Vector};
use crate::normal_cone::unit_directions;

/// A set known through membership and, when available, projection.
pub trait SetOracle: Sync {
    fn dim(&self) -> usize;
    fn contains(&self, p: &Vector, tol: f64) -> bool;
    /// Nearest point of the set, if the oracle can compute it.
    fn project(&self, _p: &Vector) -> Option<Vector> {
        None
    }
}

/// Polyhedral union, projected piece by piece.
#[derive(Debug, Clone)]
pub struct UnionOracle(pub PolyhedralUnion);

impl SetOracle for UnionOracle {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn contains(&self, p: &Vector, tol: f64) -> bool {
        self.0.distance(p) <= tol
    }

    fn project(&self, p: &Vector) -> Option<Vector> {
        self.0
            .pieces()
            .iter()
            .filter_map(|piece| piece.to_polyhedron().project(p))
            .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
    }
}

#[derive(Debug, Clone)]
pub struct PolytopeOracle(pub Polytope);

impl SetOracle for PolytopeOracle {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn contains(&self, p: &Vector, tol: f64) -> bool {
        (self.0.project(p) - p).norm() <= tol
    }

    fn project(&self, p: &Vector) -> Option<Vector> {
        Some(self.0.project(p))
    }
}

/// `{p | f_i(p) ≤ 0 for all i}`, membership only.
#[derive(Debug, Clone)]
pub struct SublevelOracle {
    pub dim: usize,
    pub funcs: Vec<ScalarFn>,
}

impl SetOracle for SublevelOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, p: &Vector, tol: f64) -> bool {
        self.funcs.iter().all(|f| f.value(p) <= tol)
    }
}

type ValueFn<'a> = dyn Fn(&Vector) -> Option<Polytope> + Sync + 'a;

/// Graph `{(x, y) | y ∈ V(x)}` of a polytope-valued map known only through
/// its values. Projection minimises `‖x − x'‖² + d(y, V(x'))²` over `x'` by
/// grid search and refinement; in one dimension jumps of `V` are located by
/// bisection so isolated large values (outer semicontinuity) are found.
pub struct GraphOracle<'a> {
    pub n: usize,
    pub m: usize,
    value: Box<ValueFn<'a>>,
    pub reach: f64,
}

impl<'a> GraphOracle<'a> {
    pub fn new(
        n: usize,
        m: usize,
        value: impl Fn(&Vector) -> Option<Polytope> + Sync + 'a,
    ) -> Self {
        GraphOracle {
            n,
            m,
            value: Box::new(value),
            reach: 1.0,
        }
    }

    fn gap(&self, x: &Vector, y: &Vector) -> (f64, Option<Vector>) {
        match (self.value)(x) {
            Some(v) => {
                let q = v.project(y);
                ((&q - y).norm(), Some(q))
            }
            None => (f64::INFINITY, None),
        }
    }

    fn objective(&self, x0: &Vector, y: &Vector, x: &Vector) -> f64 {
        let (d, _) = self.gap(x, y);
        (x - x0).norm_squared() + d * d
    }
}

impl SetOracle for GraphOracle<'_> {
    fn dim(&self) -> usize {
        self.n + self.m
    }

    fn contains(&self, p: &Vector, tol: f64) -> bool {
        match self.project(p) {
            Some(q) => (q - p).norm() <= tol,
            None => false,
        }
    }

    fn project(&self, p: &Vector) -> Option<Vector> {
        let n = self.n;
        let x0 = p.rows(0, n).into_owned();
        let y = p.rows(n, self.m).into_owned();
        let (d0, q0) = self.gap(&x0, &y);
        if d0 == 0.0 {
            return Some(p.clone());
        }
        let r = d0.min(self.reach);
        let obj = |x: &Vector| self.objective(&x0, &y, x);
        let mut best_x = x0.clone();
        let mut best = if q0.is_some() { d0 * d0 } else { f64::INFINITY };
        let consider = |x: Vector, f: f64, best: &mut f64, best_x: &mut Vector| {
            if f < *best {
                *best = f;
                *best_x = x;
            }
        };
        if n == 1 {
            let k = 64i32;
            let xs: Vec<f64> = (-k..=k).map(|i| x0[0] + r * i as f64 / k as f64).collect();
            let gs: Vec<(f64, f64)> = xs
                .iter()
                .map(|&x| {
                    let xv = Vector::from_element(1, x);
                    (self.gap(&xv, &y).0, obj(&xv))
                })
                .collect();
            for (x, (_, f)) in xs.iter().zip(&gs) {
                consider(Vector::from_element(1, *x), *f, &mut best, &mut best_x);
            }
            // Locate jumps of x' ↦ d(y, V(x')).
            let h = r / k as f64;
            for i in 0..xs.len() - 1 {
                let (ga, gb) = (gs[i].0, gs[i + 1].0);
                if !(ga.is_finite() && gb.is_finite()) || (ga - gb).abs() > 4.0 * h + 1e-12 {
                    let (mut a, mut b) = (xs[i], xs[i + 1]);
                    let (mut fa, mut fb) = (ga, gb);
                    for _ in 0..80 {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        let fm = self.gap(&Vector::from_element(1, mid), &y).0;
                        consider(
                            Vector::from_element(1, mid),
                            obj(&Vector::from_element(1, mid)),
                            &mut best,
                            &mut best_x,
                        );
                        if (fm - fa).abs() <= (fm - fb).abs() {
                            a = mid;
                            fa = fm;
                        } else {
                            b = mid;
                            fb = fm;
                        }
                    }
                }
            }
            // Golden-section refinement around the best point.
            let (mut a, mut b) = (best_x[0] - h, best_x[0] + h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                let fc = obj(&Vector::from_element(1, c));
                let fd = obj(&Vector::from_element(1, d));
                consider(Vector::from_element(1, c), fc, &mut best, &mut best_x);
                consider(Vector::from_element(1, d), fd, &mut best, &mut best_x);
                if fc < fd {
                    b = d;
                } else {
                    a = c;
                }
            }
        } else {
            let k = 4i32;
            let grid = crate::linalg::cartesian(&vec![(2 * k + 1) as usize; n]);
            for idx in grid {
                let x =
                    Vector::from_fn(n, |i, _| x0[i] + r * (idx[i] as f64 - k as f64) / k as f64);
                let f = obj(&x);
                consider(x, f, &mut best, &mut best_x);
            }
            let mut step = r / k as f64;
            while step > 1e-12 * (1.0 + r) {
                let mut improved = false;
                for i in 0..n {
                    for s in [1.0, -1.0] {
                        let mut x = best_x.clone();
                        x[i] += s * step;
                        let f = obj(&x);
                        if f < best {
                            best = f;
                            best_x = x;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step /= 2.0;
                }
            }
        }
        let (_, q) = self.gap(&best_x, &y);
        q.map(|q| concat(&best_x, &q))
    }
}

/// Shell radii and sampling sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiiSchedule {
    pub radii: Vec<f64>,
    pub directions: usize,
    /// Random probes per shell.
    pub budget: usize,
}

impl RadiiSchedule {
    pub fn default_for(dim: usize) -> Self {
        RadiiSchedule {
            radii: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            directions: if dim >= 3 { 1024 } else { 256 },
            budget: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.len() < 3 {
            return Err(Error::InvalidInput(
                "radii schedule needs at least 3 shells".into(),
            ));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) || self.radii.iter().any(|r| *r <= 0.0) {
            return Err(Error::InvalidInput(
                "radii must be positive and strictly decreasing".into(),
            ));
        }
        Ok(())
    }

    /// The first three shells times `factor`. Going deeper around a nearby
    /// base point only probes the numerical fattening of the set.
    fn scaled(&self, factor: f64, budget: usize) -> Self {
        RadiiSchedule {
            radii: self.radii.iter().take(3).map(|r| r * factor).collect(),
            directions: self.directions,
            budget,
        }
    }

    /// Per-shell slack `0.05·√(r/r₀)`.
    fn slack(&self, r: f64) -> f64 {
        0.05 * (r / self.radii[0]).sqrt()
    }
}

/// Unit normals found by the oracle. No directions means the zero cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCone {
    pub dim: usize,
    pub directions: Vec<Vector>,
    /// No set points were found in any shell.
    pub inconclusive: bool,
}

impl SampledCone {
    pub fn is_zero(&self) -> bool {
        self.directions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalKind {
    Regular,
    Limiting,
}

impl From<SliceKind> for NormalKind {
    fn from(k: SliceKind) -> Self {
        match k {
            SliceKind::Regular => NormalKind::Regular,
            SliceKind::Limiting => NormalKind::Limiting,
        }
    }
}

pub const CLUSTER_ANGLE: f64 = 1e-2;

mod rand_distr_free {
    use rand::Rng;

    /// Standard normal sample by Box–Muller.
    pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| gaussian(rng));
        if let Some(u) = unit(&v) {
            return u;
        }
    }
}

/// Set points in the shell of radius `r` around `x̄`, as (point, unit
/// direction from `x̄`).
fn shell_points(
    set: &dyn SetOracle,
    xbar: &Vector,
    r: f64,
    sched: &RadiiSchedule,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vector, Vector, bool)> {
    let dim = set.dim();
    let mut probes = unit_directions(dim, sched.directions);
    let projecting = set.project(xbar).is_some();
    let extra = if projecting {
        sched.directions * 2
    } else {
        sched.budget
    };
    probes.extend((0..extra).map(|_| random_direction(rng, dim)));
    let mut out = Vec::new();
    for d in probes {
        let p = xbar + &d * r;
        if projecting {
            if let Some(q) = set.project(&p) {
                let off = &q - xbar;
                let len = off.norm();
                if len >= 0.25 * r && len <= 1.5 * r {
                    out.push((q, off / len, true));
                }
            }
        } else if set.contains(&p, 0.0) {
            out.push((p, d, false));
        }
    }
    // Boundary points on chords between neighbouring probe directions with
    // different membership (membership-only sets).
    if !projecting {
        let dirs = unit_directions(dim, sched.directions);
        let inside: Vec<bool> = dirs
            .iter()
            .map(|d| set.contains(&(xbar + d * r), 0.0))
            .collect();
        let spacing = match dim {
            1 => std::f64::consts::PI,
            2 => std::f64::consts::TAU / dirs.len() as f64,
            _ => (4.0 * std::f64::consts::PI / dirs.len() as f64).sqrt(),
        };
        let k = dirs.len();
        let pairs: Vec<(usize, usize)> = if dim <= 2 {
            // Planar grid directions are in angular order.
            (0..k)
                .map(|i| (i, (i + 1) % k))
                .filter(|(i, j)| i != j)
                .collect()
        } else {
            (0..k)
                .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
                .filter(|&(i, j)| {
                    inside[i] != inside[j] && angle(&dirs[i], &dirs[j]) <= 2.5 * spacing
                })
                .collect()
        };
        for (i, j) in pairs {
            {
                if inside[i] == inside[j] {
                    continue;
                }
                let (mut a, mut b) = if inside[i] {
                    (xbar + &dirs[i] * r, xbar + &dirs[j] * r)
                } else {
                    (xbar + &dirs[j] * r, xbar + &dirs[i] * r)
                };
                for _ in 0..60 {
                    let mid = (&a + &b) / 2.0;
                    if set.contains(&mid, 0.0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let off = &a - xbar;
                if let Some(u) = unit(&off) {
                    out.push((a, u, true));
                }
            }
        }
    }
    out
}

/// Candidate normals: the direction grid plus, in the plane, the ±90°
/// rotations of the angular extremes of the sampled set directions.
fn candidates(dim: usize, sched: &RadiiSchedule, dirs: &[Vector]) -> Vec<Vector> {
    let mut c = unit_directions(dim, sched.directions);
    if dim == 2 && !dirs.is_empty() {
        let mut angs: Vec<f64> = dirs.iter().map(|u| u[1].atan2(u[0])).collect();
        angs.sort_by(|a, b| a.total_cmp(b));
        let k = angs.len();
        let gap_min = 2.0 * std::f64::consts::TAU / sched.directions as f64;
        for i in 0..k {
            let a = angs[i];
            let b = if i + 1 < k {
                angs[i + 1]
            } else {
                angs[0] + std::f64::consts::TAU
            };
            if b - a > gap_min || k == 1 {
                for t in [a, b] {
                    for rot in [std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2] {
                        c.push(Vector::from_vec(vec![(t + rot).cos(), (t + rot).sin()]));
                    }
                }
            }
        }
    }
    c
}

fn regular_at(
    set: &dyn SetOracle,
    xbar: &Vector,
    sched: &RadiiSchedule,
    seed: u64,
) -> (Vec<Vector>, bool, Vec<Vec<Vector>>) {
    let dim = set.dim();
    let mut shells: Vec<Vec<(Vector, Vector, bool)>> = Vec::new();
    for (k, r) in sched.radii.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64));
        shells.push(shell_points(set, xbar, *r, sched, &mut rng));
    }
    let filled: Vec<usize> = (0..shells.len())
        .filter(|&k| !shells[k].is_empty())
        .collect();
    // Boundary samples feed the limiting construction as nearby base points.
    let points: Vec<Vec<Vector>> = shells
        .iter()
        .map(|s| {
            s.iter()
                .filter(|t| t.2)
                .map(|(p, _, _)| p.clone())
                .collect()
        })
        .collect();
    if filled.is_empty() {
        return (unit_directions(dim, sched.directions), true, points);
    }
    // Test on the two finest shells that contain set points.
    let tested: Vec<usize> = filled.iter().rev().take(2).copied().collect();
    let all_dirs: Vec<Vector> = tested
        .iter()
        .flat_map(|&k| shells[k].iter().map(|(_, u, _)| u.clone()))
        .collect();
    let mut accepted = Vec::new();
    for v in candidates(dim, sched, &all_dirs) {
        let ok = tested.iter().all(|&k| {
            let eps = sched.slack(sched.radii[k]);
            shells[k].iter().all(|(_, u, _)| v.dot(u) <= eps)
        });
        if ok {
            accepted.push(v);
        }
    }
    (accepted, false, points)
}

/// Greedy clustering of unit directions at angle `tol`.
pub fn cluster_directions(dirs: &[Vector], tol: f64) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    for d in dirs {
        if !out.iter().any(|c| angle(c, d) <= tol) {
            out.push(d.clone());
        }
    }
    out
}

/// Sampled regular or limiting normal cone of `set` at `x̄`.
pub fn oracle_normal_cone(
    set: &dyn SetOracle,
    xbar: &Vector,
    kind: NormalKind,
    sched: &RadiiSchedule,
    seed: u64,
) -> Result<SampledCone> {
    check_dim(set.dim(), xbar.len())?;
    sched.validate()?;
    let dim = set.dim();
    if !set.contains(xbar, 1e-9) {
        return Err(Error::PointNotInSet {
            distance: set
                .project(xbar)
                .map(|q| (q - xbar).norm())
                .unwrap_or(f64::NAN),
        });
    }
    let (reg, inconclusive, shells) = regular_at(set, xbar, sched, seed);
    if kind == NormalKind::Regular || inconclusive {
        return Ok(SampledCone {
            dim,
            directions: reg,
            inconclusive,
        });
    }
    let mut all = reg;
    // Base points from the third and fourth shells, one per direction cluster.
    for (k, pts) in shells.iter().enumerate().skip(2).take(2) {
        let mut reps: Vec<(Vector, Vector)> = Vec::new();
        for p in pts {
            let off = p - xbar;
            let Some(u) = unit(&off) else { continue };
            if !reps.iter().any(|(_, c)| angle(c, &u) <= CLUSTER_ANGLE) {
                reps.push((p.clone(), u));
            }
            if reps.len() >= 64 {
                break;
            }
        }
        for (i, (p, _)) in reps.iter().enumerate() {
            let scale = (p - xbar).norm() * 1e-1;
            let inner = sched.scaled(scale, (sched.budget / 20).max(500));
            let (dirs, inc, _) = regular_at(set, p, &inner, seed ^ ((k as u64) << 32 | i as u64));
            if !inc {
                all.extend(dirs);
            }
        }
    }
    Ok(SampledCone {
        dim,
        directions: cluster_directions(&all, CLUSTER_ANGLE),
        inconclusive: false,
    })
}

/// Sampled coderivative slice: normals `(v_x, v_y)` whose `v_y` is
/// antiparallel to `y*` within `angtol`, rescaled to `x* = |y*| v_x / |v_y|`.
/// For `y* = 0` the slice keeps normals with `|v_y| ≤ angtol` as unit `v_x`.
#[allow(clippy::too_many_arguments)]
pub fn oracle_coderivative(
    graph: &dyn SetOracle,
    n: usize,
    x: &Vector,
    y: &Vector,
    ystar: &Vector,
    kind: SliceKind,
    sched: &RadiiSchedule,
    seed: u64,
    angtol: f64,
) -> Result<(CoderivativeSlice, SampledCone)> {
    check_dim(graph.dim(), n + y.len())?;
    check_dim(y.len(), ystar.len())?;
    let cone = oracle_normal_cone(graph, &concat(x, y), kind.into(), sched, seed)?;
    let points = slice_directions(&cone.directions, n, ystar, angtol);
    Ok((
        CoderivativeSlice {
            kind,
            x: x.clone(),
            y: y.clone(),
            ystar: ystar.clone(),
            value: SliceValue::Sampled {
                points,
                resolution: angtol,
            },
        },
        cone,
    ))
}

pub fn slice_directions(dirs: &[Vector], n: usize, ystar: &Vector, angtol: f64) -> Vec<Vector> {
    let m = ystar.len();
    let ynorm = ystar.norm();
    let mut points = vec![];
    if ynorm == 0.0 {
        points.push(Vector::zeros(n));
    }
    for v in dirs {
        let vx = v.rows(0, n).into_owned();
        let vy = v.rows(n, m).into_owned();
        if ynorm == 0.0 {
            if vy.norm() <= angtol {
                if let Some(u) = unit(&vx) {
                    points.push(u);
                }
            }
            continue;
        }
        if vy.norm() < 1e-6 {
            continue;
        }
        if angle(&vy, &-ystar) <= angtol {
            points.push(vx * (ynorm / vy.norm()));
        }
    }
    points
}

/// Agreement of a sampled cone with an exact union of convex cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeAgreement {
    /// Largest angle from an oracle direction to the exact union.
    pub max_outside_angle: f64,
    /// Exact extreme generators with no oracle direction within tolerance.
    pub unmatched_generators: Vec<Vector>,
    pub agrees: bool,
}

pub fn angle_to_cone(d: &Vector, k: &ConvexCone) -> f64 {
    let dist = k.distance(d).min(1.0);
    if k.is_zero() {
        return std::f64::consts::FRAC_PI_2;
    }
    dist.asin()
}

pub fn cone_agreement(exact: &[ConvexCone], sampled: &SampledCone, angtol: f64) -> ConeAgreement {
    let mut worst = 0.0f64;
    for d in &sampled.directions {
        let a = exact
            .iter()
            .map(|k| angle_to_cone(d, k))
            .fold(std::f64::consts::FRAC_PI_2, f64::min);
        worst = worst.max(a);
    }
    let mut unmatched = Vec::new();
    for k in exact {
        for g in k.all_rays() {
            if !sampled.directions.iter().any(|d| angle(d, &g) <= angtol) {
                unmatched.push(g);
            }
        }
    }
    ConeAgreement {
        max_outside_angle: worst,
        agrees: worst <= angtol && unmatched.is_empty(),
        unmatched_generators: unmatched,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInclusion {
    pub max_violation: f64,
    pub worst_point: Option<Vector>,
    pub holds: bool,
}

/// `max_{a ∈ A} d(a, B)` by projection or, for membership-only sets, by
/// bisection along 64 directions up to radius `search`.
pub fn oracle_set_inclusion(a: &[Vector], b: &dyn SetOracle, tol: f64) -> OracleInclusion {
    let mut worst = 0.0f64;
    let mut worst_point = None;
    for p in a {
        let d = match b.project(p) {
            Some(q) => (q - p).norm(),
            None => membership_distance(b, p, 10.0),
        };
        if d > worst {
            worst = d;
            worst_point = Some(p.clone());
        }
    }
    OracleInclusion {
        max_violation: worst,
        worst_point,
        holds: worst <= tol,
    }
}

fn membership_distance(b: &dyn SetOracle, p: &Vector, search: f64) -> f64 {
    if b.contains(p, 0.0) {
        return 0.0;
    }
    let steps = 2000;
    let mut best = f64::INFINITY;
    for d in unit_directions(b.dim(), 64) {
        // First inside point along the ray, then bisection back to the entry.
        let Some(k) =
            (1..=steps).find(|&k| b.contains(&(p + &d * (search * k as f64 / steps as f64)), 0.0))
        else {
            continue;
        };
        let (mut lo, mut hi) = (
            search * (k - 1) as f64 / steps as f64,
            search * k as f64 / steps as f64,
        );
        if lo >= best {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if b.contains(&(p + &d * mid), 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        best = best.min(hi);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ExprScalar;
    use crate::geometry::{excess, Polyhedron};
    use crate::linalg::vector;
    use std::sync::Arc;

    fn small() -> RadiiSchedule {
        RadiiSchedule {
            budget: 5_000,
            ..RadiiSchedule::default_for(2)
        }
    }

    #[test]
    fn halfline_normal() {
        let set = UnionOracle(
            PolyhedralUnion::from_polyhedra(
                1,
                vec![Polyhedron::halfspace(vector(&[1.0]), 0.0).unwrap()],
            )
            .unwrap(),
        );
        let c = oracle_normal_cone(
            &set,
            &vector(&[0.0]),
            NormalKind::Regular,
            &RadiiSchedule::default_for(1),
            1,
        )
        .unwrap();
        assert_eq!(c.directions, vec![vector(&[1.0])]);
    }

    #[test]
    fn whole_space_has_zero_cone() {
        let set = SublevelOracle {
            dim: 2,
            funcs: vec![],
        };
        let c = oracle_normal_cone(&set, &vector(&[0.3, 0.1]), NormalKind::Regular, &small(), 1)
            .unwrap();
        assert!(c.is_zero());
    }

    #[test]
    fn epigraph_of_abs() {
        let f: ScalarFn = Arc::new(ExprScalar::parse("abs(x) - y", &["x", "y"]).unwrap());
        let set = SublevelOracle {
            dim: 2,
            funcs: vec![f],
        };
        let c = oracle_normal_cone(
            &set,
            &vector(&[0.0, 0.0]),
            NormalKind::Limiting,
            &small(),
            3,
        )
        .unwrap();
        let exact =
            ConvexCone::new(2, vec![vector(&[1.0, -1.0]), vector(&[-1.0, -1.0])], vec![]).unwrap();
        let agree = cone_agreement(&[exact], &c, 2e-2);
        assert!(agree.agrees, "{agree:?}");
    }

    #[test]
    fn identity_and_constant_graphs() {
        let id = GraphOracle::new(1, 1, |x: &Vector| Some(Polytope::point(x.clone())));
        let (s, _) = oracle_coderivative(
            &id,
            1,
            &vector(&[0.0]),
            &vector(&[0.0]),
            &vector(&[1.0]),
            SliceKind::Regular,
            &small(),
            1,
            1e-2,
        )
        .unwrap();
        assert!(!s.is_empty());
        assert!(s.samples(&[]).iter().all(|p| (p[0] - 1.0).abs() < 2e-2));
        let c = GraphOracle::new(1, 1, |_: &Vector| Some(Polytope::point(vector(&[2.0]))));
        let (s, _) = oracle_coderivative(
            &c,
            1,
            &vector(&[0.0]),
            &vector(&[2.0]),
            &vector(&[1.0]),
            SliceKind::Regular,
            &small(),
            1,
            1e-2,
        )
        .unwrap();
        assert!(s.samples(&[]).iter().all(|p| p[0].abs() < 2e-2));
    }

    #[test]
    fn graph_projection_finds_isolated_large_value() {
        // V(x) = [−1, 1] at 0 and {sign x} elsewhere.
        let g = GraphOracle::new(1, 1, |x: &Vector| {
            Some(if x[0].abs() <= 1e-9 {
                Polytope::interval(-1.0, 1.0)
            } else {
                Polytope::point(vector(&[x[0].signum()]))
            })
        });
        let q = g.project(&vector(&[0.01, 0.2])).unwrap();
        assert!(q[0].abs() < 1e-8 && (q[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn inclusion_examples() {
        let b = PolytopeOracle(Polytope::interval(0.0, 1.0));
        let r = oracle_set_inclusion(&[vector(&[2.0])], &b, 0.5);
        assert!(!r.holds && (r.max_violation - 1.0).abs() < 1e-12);
        let r = oracle_set_inclusion(&[vector(&[0.5]), vector(&[1.0])], &b, 0.0);
        assert!(r.holds && r.max_violation == 0.0);
        let a = Polytope::new(vec![
            vector(&[0.0, 0.0]),
            vector(&[3.0, 0.0]),
            vector(&[0.0, 2.0]),
        ])
        .unwrap();
        let bb = Polytope::new(vec![
            vector(&[1.0, 0.0]),
            vector(&[2.0, 1.0]),
            vector(&[0.0, 1.0]),
        ])
        .unwrap();
        let r = oracle_set_inclusion(a.vertices(), &PolytopeOracle(bb.clone()), 0.0);
        assert!((r.max_violation - excess(&a, &bb)).abs() < 1e-3);
        let sub = SublevelOracle {
            dim: 1,
            funcs: vec![
                Arc::new(ExprScalar::parse("x - 1", &["x"]).unwrap()),
                Arc::new(ExprScalar::parse("-x", &["x"]).unwrap()),
            ],
        };
        let r = oracle_set_inclusion(&[vector(&[2.0])], &sub, 0.5);
        assert!((r.max_violation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let f: ScalarFn = Arc::new(ExprScalar::parse("y - x^2", &["x", "y"]).unwrap());
        let set = SublevelOracle {
            dim: 2,
            funcs: vec![f],
        };
        let a = oracle_normal_cone(
            &set,
            &vector(&[0.0, 0.0]),
            NormalKind::Limiting,
            &small(),
            9,
        )
        .unwrap();
        let b = oracle_normal_cone(
            &set,
            &vector(&[0.0, 0.0]),
            NormalKind::Limiting,
            &small(),
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        // Curved boundary: the normal at the vertex of y ≤ x² is (0, 1).
        assert!(a
            .directions
            .iter()
            .all(|d| angle(d, &vector(&[0.0, 1.0])) <= 2e-2));
        assert!(!a.directions.is_empty());
    }
}
