//! First-order constructions: regular and limiting normal cones of
//! polyhedral sets and unions, subderivatives, regular subdifferentials and
//! subdifferentials of maximum functions.

use crate::error::{check_dim, Error, Result};
use crate::functions::ScalarFunction;
use crate::geometry::{
    convex_hull, ConvexCone, GeneratedSet, PointSet, PolyhedralUnion, Polyhedron, Polytope,
};
use crate::linalg::{angle, combinations, nullspace, rows_to_matrix, unit, Vector};

/// Activity tolerance for constraint rows and pieces.
pub const ACTIVE_TOL: f64 = 1e-8;
/// Membership tolerance for base points.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Cone generated by the outward normals of rows active at `x̄`. Regular and
/// limiting normal cones coincide for a single polyhedron.
pub fn regular_normal_cone_polyhedron(p: &Polyhedron, xbar: &Vector) -> Result<ConvexCone> {
    check_dim(PointSet::dim(p), xbar.len())?;
    let d = p.distance(xbar);
    if d > MEMBERSHIP_TOL {
        return Err(Error::PointNotInSet { distance: d });
    }
    let gens: Vec<Vector> = p
        .active_rows(xbar, ACTIVE_TOL)
        .into_iter()
        .map(|i| p.rows()[i].0.clone())
        .collect();
    ConvexCone::new(xbar.len(), gens, Vec::new())
}

/// Local cone model of a union at `x̄`: for each piece containing `x̄`, the
/// normals of its active rows.
struct LocalArrangement {
    dim: usize,
    pieces: Vec<Vec<Vector>>,
}

impl LocalArrangement {
    fn new(u: &PolyhedralUnion, xbar: &Vector) -> Result<Self> {
        let dim = u.dim();
        check_dim(dim, xbar.len())?;
        let mut pieces = Vec::new();
        let mut nearest = f64::INFINITY;
        for piece in u.pieces() {
            let poly = piece.to_polyhedron();
            let d = poly.distance(xbar);
            nearest = nearest.min(d);
            if d <= MEMBERSHIP_TOL {
                let rows: Vec<Vector> = poly
                    .active_rows(xbar, ACTIVE_TOL)
                    .into_iter()
                    .map(|i| poly.rows()[i].0.clone())
                    .collect();
                pieces.push(rows);
            }
        }
        if pieces.is_empty() {
            return Err(Error::PointNotInSet { distance: nearest });
        }
        Ok(LocalArrangement { dim, pieces })
    }

    /// Regular normal cone of the local cone at the direction `u`: the
    /// intersection over pieces containing `u` of their active-row cones.
    fn regular_cone_at(&self, u: &Vector) -> Option<ConvexCone> {
        let tol = 1e-9 * (1.0 + u.norm());
        let mut acc: Option<ConvexCone> = None;
        for rows in &self.pieces {
            if rows.iter().any(|a| a.dot(u) > tol) {
                continue;
            }
            let active: Vec<Vector> = rows
                .iter()
                .filter(|a| a.dot(u).abs() <= tol)
                .cloned()
                .collect();
            let c = ConvexCone::new(self.dim, active, Vec::new()).expect("same dimension");
            acc = Some(match acc {
                None => c,
                Some(prev) => prev.intersect(&c).expect("same dimension"),
            });
        }
        acc
    }

    /// Distinct hyperplane normals (up to sign).
    fn hyperplanes(&self) -> Vec<Vector> {
        let mut out: Vec<Vector> = Vec::new();
        for rows in &self.pieces {
            for a in rows {
                if let Some(a) = unit(a) {
                    if !out
                        .iter()
                        .any(|b| angle(b, &a) < 1e-9 || angle(b, &-&a) < 1e-9)
                    {
                        out.push(a);
                    }
                }
            }
        }
        out
    }

    /// One representative direction per face of the central hyperplane
    /// arrangement, including the origin.
    fn face_representatives(&self) -> Vec<Vector> {
        let dim = self.dim;
        let hs = self.hyperplanes();
        let lineality = nullspace(&rows_to_matrix(&hs, dim), 1e-9);
        let ess = dim - lineality.len();
        let mut rays: Vec<Vector> = Vec::new();
        if ess > 0 {
            for subset in combinations(hs.len(), ess - 1) {
                let mut rows: Vec<Vector> = subset.iter().map(|&i| hs[i].clone()).collect();
                rows.extend(lineality.iter().cloned());
                let ns = nullspace(&rows_to_matrix(&rows, dim), 1e-9);
                if ns.len() == 1 {
                    for r in [ns[0].clone(), -&ns[0]] {
                        if !rays.iter().any(|q| angle(q, &r) < 1e-9) {
                            rays.push(r);
                        }
                    }
                }
            }
        }
        let mut reps = vec![Vector::zeros(dim)];
        let mut signatures: Vec<Vec<i8>> = vec![sign_vector(&hs, &reps[0])];
        for k in 1..=ess {
            for subset in combinations(rays.len(), k) {
                let mut u = Vector::zeros(dim);
                for &i in &subset {
                    u += &rays[i];
                }
                if u.norm() < 1e-9 {
                    continue;
                }
                let s = sign_vector(&hs, &u);
                if !signatures.contains(&s) {
                    signatures.push(s);
                    reps.push(u);
                }
            }
        }
        reps
    }
}

fn sign_vector(hs: &[Vector], u: &Vector) -> Vec<i8> {
    let tol = 1e-9 * (1.0 + u.norm());
    hs.iter()
        .map(|a| {
            let v = a.dot(u);
            if v > tol {
                1
            } else if v < -tol {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Regular normal cone of a union: the intersection of the pieces' normal
/// cones over pieces containing `x̄`.
pub fn regular_normal_cone_union(u: &PolyhedralUnion, xbar: &Vector) -> Result<ConvexCone> {
    let arr = LocalArrangement::new(u, xbar)?;
    Ok(arr
        .regular_cone_at(&Vector::zeros(arr.dim))
        .expect("x̄ lies in some piece"))
}

/// Limiting normal cone of a polyhedral union as a union of convex cones.
///
/// Near `x̄` the union coincides with `x̄ + K` for a union `K` of polyhedral
/// cones, and the limiting cone is the union of the regular cones of `K`
/// over the faces of the arrangement cut out by the active rows.
pub fn limiting_normal_cone_union(u: &PolyhedralUnion, xbar: &Vector) -> Result<PolyhedralUnion> {
    if u.dim() > 3 {
        return Err(Error::Unsupported(format!(
            "exact limiting normal cone in dimension {} (limit is 3)",
            u.dim()
        )));
    }
    let cones = limiting_cones(u, xbar)?;
    PolyhedralUnion::from_cones(u.dim(), cones)
}

/// Same as [`limiting_normal_cone_union`] without the dimension limit, for
/// callers that keep the arrangement small.
pub(crate) fn limiting_cones(u: &PolyhedralUnion, xbar: &Vector) -> Result<Vec<ConvexCone>> {
    let arr = LocalArrangement::new(u, xbar)?;
    let mut cones: Vec<ConvexCone> = Vec::new();
    for rep in arr.face_representatives() {
        if let Some(c) = arr.regular_cone_at(&rep) {
            push_cone(&mut cones, c);
        }
    }
    Ok(cones)
}

/// Adds `c` unless an existing cone contains it; drops existing cones it contains.
pub(crate) fn push_cone(cones: &mut Vec<ConvexCone>, c: ConvexCone) {
    if cones.iter().any(|k| cone_subset(&c, k)) {
        return;
    }
    cones.retain(|k| !cone_subset(k, &c));
    cones.push(c);
}

pub fn cone_subset(a: &ConvexCone, b: &ConvexCone) -> bool {
    a.all_rays().iter().all(|g| b.contains(g, 1e-9))
}

/// `{x* ∈ ℝⁿ | (x*, −y*) ∈ K}` for a cone `K ⊂ ℝⁿ⁺ᵐ`.
pub fn slice_cone(k: &ConvexCone, n: usize, ystar: &Vector) -> GeneratedSet {
    let m = ystar.len();
    assert_eq!(k.dim(), n + m, "slice dimensions");
    let (ineq, eq) = k.constraints();
    // a·(x*, −y*) ≤ 0  ⇔  a_x·x* ≤ a_y·y*
    let mut rows: Vec<(Vector, f64)> = Vec::new();
    for a in &ineq {
        let ax = a.rows(0, n).into_owned();
        let ay = a.rows(n, m).into_owned();
        rows.push((ax, ay.dot(ystar)));
    }
    for e in &eq {
        let ex = e.rows(0, n).into_owned();
        let ey = e.rows(n, m).into_owned();
        let c = ey.dot(ystar);
        rows.push((ex.clone(), c));
        rows.push((-ex, -c));
    }
    let scale = 1e-10 * (1.0 + ystar.norm());
    // Zero-normal rows: enforce with a tolerance instead of exact sign.
    let mut cleaned = Vec::new();
    for (a, b) in rows {
        if a.norm() <= 1e-12 {
            if b < -scale {
                return GeneratedSet::empty(n);
            }
            continue;
        }
        cleaned.push((a, b));
    }
    Polyhedron::new(n, cleaned)
        .expect("valid rows")
        .to_generated()
}

// ---------------------------------------------------------------------------
// Subderivatives and subdifferentials.

/// Finite-difference subderivative with its per-level values.
#[derive(Debug, Clone, PartialEq)]
pub struct SubderivativeEstimate {
    pub value: f64,
    pub per_level: Vec<f64>,
    pub schedule: Vec<f64>,
    /// Whether the last two levels agree within 1e-3 relative.
    pub settled: bool,
}

pub fn default_fd_schedule() -> Vec<f64> {
    (0..9).map(|k| 1e-2 * 10f64.powf(-0.5 * k as f64)).collect()
}

/// Directions around `w` at half-angle `theta` (nine in dimension ≥ 2).
fn angular_neighborhood(w: &Vector, theta: f64) -> Vec<Vector> {
    let n = w.len();
    let mut out = vec![w.clone()];
    if n < 2 || theta == 0.0 {
        return out;
    }
    let norm = w.norm();
    let Some(e) = unit(w) else { return out };
    let perp = nullspace(&rows_to_matrix(std::slice::from_ref(&e), n), 1e-12);
    if n == 2 {
        let p = &perp[0];
        for k in 1..=4 {
            let a = theta * k as f64 / 4.0;
            for s in [1.0, -1.0] {
                out.push((&e * a.cos() + p * (s * a.sin())) * norm);
            }
        }
    } else {
        let (p, q) = (&perp[0], &perp[1]);
        for k in 0..8 {
            let phi = std::f64::consts::TAU * k as f64 / 8.0;
            let dir = p * phi.cos() + q * phi.sin();
            out.push((&e * theta.cos() + dir * theta.sin()) * norm);
        }
    }
    out
}

/// `dφ(x̄)(w) ≈ min_u (φ(x̄+tu) − φ(x̄))/t` at the finest schedule level, with
/// `u` ranging over an angular neighborhood of `w` whose half-angle shrinks
/// proportionally to `t` (0.05 rad at the coarsest level).
pub fn subderivative_fd(
    f: &dyn ScalarFunction,
    xbar: &Vector,
    w: &Vector,
    schedule: &[f64],
) -> Result<SubderivativeEstimate> {
    check_dim(f.dim(), xbar.len())?;
    check_dim(f.dim(), w.len())?;
    let f0 = f.value(xbar);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!(
            "function value {f0} at the base point"
        )));
    }
    if schedule.is_empty() {
        return Err(Error::InvalidInput("empty subderivative schedule".into()));
    }
    let t0 = schedule[0];
    let mut per_level = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let dirs = angular_neighborhood(w, 0.05 * t / t0);
        let q = dirs
            .iter()
            .map(|u| (f.value(&(xbar + u * t)) - f0) / t)
            .fold(f64::INFINITY, f64::min);
        per_level.push(q);
    }
    let value = *per_level.last().expect("nonempty");
    let settled = per_level.len() < 2 || {
        let a = per_level[per_level.len() - 2];
        (a - value).abs() <= 1e-3 * (1.0 + value.abs())
    };
    Ok(SubderivativeEstimate {
        value,
        per_level,
        schedule: schedule.to_vec(),
        settled,
    })
}

/// Unit directions: ±1 in 1-D, `count` equally spaced angles in 2-D, a
/// Fibonacci sphere in 3-D and coordinate/diagonal directions beyond.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vector> {
    match dim {
        1 => vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                Vector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    Vector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut out = Vec::new();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    out.push(Vector::from_fn(dim, |j, _| if i == j { s } else { 0.0 }));
                }
            }
            for mask in 0..(1usize << dim) {
                let v = Vector::from_fn(dim, |j, _| if mask & (1 << j) == 0 { 1.0 } else { -1.0 });
                out.push(v / (dim as f64).sqrt());
            }
            out
        }
    }
}

/// Outer approximation of the regular subdifferential from subderivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdifferentialEstimate {
    /// `None` when the inequality system is infeasible.
    pub set: Option<Polytope>,
    /// Always true for general handles: finer grids can only shrink the set.
    pub outer_approximation: bool,
    pub directions: usize,
}

/// `{x* | x*·w ≤ dφ(x̄)(w) ∀w ∈ grid}` as a polytope (dimension ≤ 3).
pub fn regular_subdifferential(
    f: &dyn ScalarFunction,
    xbar: &Vector,
    grid: &[Vector],
) -> Result<SubdifferentialEstimate> {
    let n = xbar.len();
    if n > 3 {
        return Err(Error::Unsupported(
            "regular subdifferential beyond dimension 3".into(),
        ));
    }
    let schedule = default_fd_schedule();
    let mut rows = Vec::with_capacity(grid.len());
    for w in grid {
        let s = subderivative_fd(f, xbar, w, &schedule)?;
        if s.value == f64::NEG_INFINITY {
            return Ok(SubdifferentialEstimate {
                set: None,
                outer_approximation: true,
                directions: grid.len(),
            });
        }
        // The gap between the two finest levels bounds the discretization
        // error; adding it keeps smooth curved functions from producing an
        // empty (under-approximated) set.
        let k = s.per_level.len();
        let slack = if k >= 2 {
            (s.per_level[k - 1] - s.per_level[k - 2]).abs()
        } else {
            0.0
        };
        rows.push((w.clone(), s.value + slack + 1e-12));
    }
    let g = Polyhedron::new(n, rows)?.to_generated();
    if g.is_empty() {
        return Ok(SubdifferentialEstimate {
            set: None,
            outer_approximation: true,
            directions: grid.len(),
        });
    }
    if !g.is_bounded() {
        return Err(Error::Unsupported(
            "direction grid does not positively span the space".into(),
        ));
    }
    Ok(SubdifferentialEstimate {
        set: g.to_polytope(),
        outer_approximation: true,
        directions: grid.len(),
    })
}

/// `co{∇ψ_i(x̄) | max_j ψ_j(x̄) − ψ_i(x̄) ≤ activeTol}`.
pub fn max_subdifferential(
    psis: &[&dyn ScalarFunction],
    xbar: &Vector,
    active_tol: f64,
) -> Result<Polytope> {
    if psis.is_empty() {
        return Err(Error::InvalidInput("maximum of an empty family".into()));
    }
    let vals: Vec<f64> = psis.iter().map(|p| p.value(xbar)).collect();
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grads = Vec::new();
    for (p, v) in psis.iter().zip(&vals) {
        if top - v <= active_tol {
            grads.push(p.gradient(xbar).ok_or_else(|| {
                Error::NonFinite("active piece has no gradient at the base point".into())
            })?);
        }
    }
    convex_hull(&grads)
}

/// Limiting normal cone slices of a union for each cone, as generated sets.
pub fn slice_union(cones: &[ConvexCone], n: usize, ystar: &Vector) -> Vec<GeneratedSet> {
    cones
        .iter()
        .map(|c| slice_cone(c, n, ystar))
        .filter(|g| !g.is_empty())
        .collect()
}
