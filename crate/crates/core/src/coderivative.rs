//! Regular and limiting coderivatives: smooth maps, polyhedral graphs,
//! constraint systems and the chain rule through a smooth inner map.

use crate::error::{check_dim, Error, Result};
use crate::functions::VectorFunction;
use crate::geometry::{ConvexCone, GeneratedSet, PointSet, PolyhedralUnion};
use crate::integrand::{ball_grid, ConstraintSystem, NodeMap, RandomMap};
use crate::linalg::{columns_to_matrix, concat, nnls, nullspace, ray_enumerate, Matrix, Vector};
use crate::measure::MeasureSpace;
use crate::normal_cone::{
    limiting_cones, regular_normal_cone_union, slice_cone, ACTIVE_TOL, MEMBERSHIP_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceKind {
    Regular,
    Limiting,
}

impl SliceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SliceKind::Regular => "regular",
            SliceKind::Limiting => "limiting",
        }
    }
}

#[derive(Debug, Clone)]
pub enum SliceValue {
    /// Union of convex pieces; no pieces means the empty set.
    Exact(Vec<GeneratedSet>),
    /// Sample cloud from the oracle with its resolution.
    Sampled {
        points: Vec<Vector>,
        resolution: f64,
    },
}

/// `D*Φ(x̄, ȳ)(y*)` or its regular counterpart.
#[derive(Debug, Clone)]
pub struct CoderivativeSlice {
    pub kind: SliceKind,
    pub x: Vector,
    pub y: Vector,
    pub ystar: Vector,
    pub value: SliceValue,
}

impl CoderivativeSlice {
    pub fn exact(
        kind: SliceKind,
        x: &Vector,
        y: &Vector,
        ystar: &Vector,
        pieces: Vec<GeneratedSet>,
    ) -> Self {
        CoderivativeSlice {
            kind,
            x: x.clone(),
            y: y.clone(),
            ystar: ystar.clone(),
            value: SliceValue::Exact(pieces.into_iter().filter(|p| !p.is_empty()).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.value, SliceValue::Exact(_))
    }

    pub fn pieces(&self) -> &[GeneratedSet] {
        match &self.value {
            SliceValue::Exact(p) => p,
            SliceValue::Sampled { .. } => &[],
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.value {
            SliceValue::Exact(p) => p.is_empty(),
            SliceValue::Sampled { points, .. } => points.is_empty(),
        }
    }

    pub fn distance(&self, v: &Vector) -> f64 {
        match &self.value {
            SliceValue::Exact(p) => p
                .iter()
                .map(|s| s.distance(v))
                .fold(f64::INFINITY, f64::min),
            SliceValue::Sampled { points, .. } => points
                .iter()
                .map(|p| (p - v).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, v: &Vector, tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// `sup ‖x*‖`; infinite if some piece is unbounded, `-∞` when empty.
    pub fn max_norm(&self) -> f64 {
        match &self.value {
            SliceValue::Exact(p) => p
                .iter()
                .map(|s| s.max_norm().unwrap_or(f64::NEG_INFINITY))
                .fold(f64::NEG_INFINITY, f64::max),
            SliceValue::Sampled { points, .. } => points
                .iter()
                .map(|p| p.norm())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Finite sample of the slice for inclusion tests.
    pub fn samples(&self, steps: &[f64]) -> Vec<Vector> {
        match &self.value {
            SliceValue::Exact(p) => p.iter().flat_map(|s| s.samples(steps)).collect(),
            SliceValue::Sampled { points, .. } => points.clone(),
        }
    }

    /// Image under a linear map, used by the chain rule.
    pub fn map_linear(&self, a: &Matrix, x: &Vector) -> Result<CoderivativeSlice> {
        let value = match &self.value {
            SliceValue::Exact(p) => {
                SliceValue::Exact(p.iter().map(|s| s.map_linear(a)).collect::<Result<_>>()?)
            }
            SliceValue::Sampled { points, resolution } => SliceValue::Sampled {
                points: points.iter().map(|p| a * p).collect(),
                resolution: resolution * a.norm(),
            },
        };
        Ok(CoderivativeSlice {
            kind: self.kind,
            x: x.clone(),
            y: self.y.clone(),
            ystar: self.ystar.clone(),
            value,
        })
    }
}

/// `∇g(x̄)ᵀ y*`.
pub fn coderivative_smooth(g: &dyn VectorFunction, x: &Vector, ystar: &Vector) -> Result<Vector> {
    check_dim(g.input_dim(), x.len())?;
    check_dim(g.output_dim(), ystar.len())?;
    let j = g
        .jacobian(x)
        .ok_or_else(|| Error::NonFinite("Jacobian is not available at the base point".into()))?;
    Ok(j.transpose() * ystar)
}

/// Coderivative of a map whose graph is a polyhedral union in ℝⁿ⁺ᵐ.
pub fn coderivative_polyhedral_graph(
    graph: &PolyhedralUnion,
    n: usize,
    x: &Vector,
    y: &Vector,
    ystar: &Vector,
    kind: SliceKind,
) -> Result<CoderivativeSlice> {
    check_dim(n, x.len())?;
    check_dim(graph.dim(), n + y.len())?;
    check_dim(y.len(), ystar.len())?;
    let point = concat(x, y);
    let containing = graph.pieces_containing(&point, MEMBERSHIP_TOL);
    if containing.is_empty() {
        return Err(Error::PointNotInSet {
            distance: graph.distance(&point),
        });
    }
    let cones = match kind {
        SliceKind::Regular => vec![regular_normal_cone_union(graph, &point)?],
        SliceKind::Limiting if containing.len() == 1 => {
            vec![regular_normal_cone_union(graph, &point)?]
        }
        SliceKind::Limiting => {
            if graph.dim() > 3 {
                return Err(Error::Unsupported(format!(
                    "exact limiting coderivative of a multi-piece graph in dimension {}",
                    graph.dim()
                )));
            }
            limiting_cones(graph, &point)?
        }
    };
    Ok(CoderivativeSlice::exact(
        kind,
        x,
        y,
        ystar,
        cones.iter().map(|c| slice_cone(c, n, ystar)).collect(),
    ))
}

/// Coderivative of one node's integrand from its exact local model.
/// Constraint nodes go through the chain rule. Returns `Unsupported` when no
/// exact model is available so callers can fall back to the oracle.
pub fn coderivative_node(
    node: &NodeMap,
    x: &Vector,
    y: &Vector,
    ystar: &Vector,
    kind: SliceKind,
) -> Result<CoderivativeSlice> {
    match node {
        NodeMap::Smooth { g } => {
            let gx = g.value(x);
            if (&gx - y).norm() > MEMBERSHIP_TOL * (1.0 + y.norm()) {
                return Err(Error::PointNotInSet {
                    distance: (&gx - y).norm(),
                });
            }
            let v = coderivative_smooth(g.as_ref(), x, ystar)?;
            Ok(CoderivativeSlice::exact(
                kind,
                x,
                y,
                ystar,
                vec![GeneratedSet::singleton(v)],
            ))
        }
        NodeMap::Constraint { g, system } => {
            let z = g.value(x);
            let jac = g
                .jacobian(x)
                .ok_or_else(|| Error::NonFinite("inner map Jacobian".into()))?;
            let outer = coderivative_constraint_system(system, &z, y, ystar)?;
            let at_zero = coderivative_constraint_system(system, &z, y, &Vector::zeros(y.len()))?;
            let mut s = chain_rule_coderivative(&outer, &at_zero, &jac, x)?;
            s.kind = kind;
            Ok(s)
        }
        _ => {
            let local = node.local_graph(x, y).ok_or_else(|| {
                Error::Unsupported(format!(
                    "no exact local graph model for the {} integrand here",
                    node.class_name()
                ))
            })?;
            coderivative_polyhedral_graph(&local.union, local.n, x, y, ystar, kind)
        }
    }
}

/// `{z* | (z*, −y*) ∈ cone{∇φ^i(z̄, ȳ) | i active}}`. Regular and limiting
/// coincide under the Slater condition, which is checked at `z̄`.
pub fn coderivative_constraint_system(
    sys: &ConstraintSystem,
    z: &Vector,
    y: &Vector,
    ystar: &Vector,
) -> Result<CoderivativeSlice> {
    check_dim(sys.z_dim, z.len())?;
    check_dim(sys.y_dim, y.len())?;
    check_dim(sys.y_dim, ystar.len())?;
    let viol = sys.max_value(z, y);
    if viol > ACTIVE_TOL {
        return Err(Error::Infeasible(format!(
            "constraint value {viol:.3e} at the base point"
        )));
    }
    let (_, best) = sys.strict_feasible_point(z, 1e-6, 10_000);
    if best >= -1e-6 {
        return Err(Error::QualificationViolated(
            "no strictly feasible point for the constraint system".into(),
        ));
    }
    let grads = active_gradients(sys, z, y)?;
    let cone = ConvexCone::new(sys.z_dim + sys.y_dim, grads, vec![])?;
    Ok(CoderivativeSlice::exact(
        SliceKind::Limiting,
        z,
        y,
        ystar,
        vec![slice_cone(&cone, sys.z_dim, ystar)],
    ))
}

fn active_gradients(sys: &ConstraintSystem, z: &Vector, y: &Vector) -> Result<Vec<Vector>> {
    sys.active(z, y, ACTIVE_TOL)
        .into_iter()
        .map(|i| {
            sys.gradient(i, z, y)
                .ok_or_else(|| Error::NonFinite(format!("gradient of constraint {i}")))
        })
        .collect()
}

/// Multipliers `λ ≥ 0` with `(z*, −y*) = Σ λ_i ∇φ^i` over active `i`, by
/// nonnegative least squares; `None` if the residual exceeds `tol`.
pub fn constraint_multipliers(
    sys: &ConstraintSystem,
    z: &Vector,
    y: &Vector,
    zstar: &Vector,
    ystar: &Vector,
    tol: f64,
) -> Result<Option<Vec<f64>>> {
    let grads = active_gradients(sys, z, y)?;
    let target = concat(zstar, &-ystar);
    if grads.is_empty() {
        return Ok((target.norm() <= tol).then(Vec::new));
    }
    let a = columns_to_matrix(&grads, sys.z_dim + sys.y_dim);
    let (lambda, res) = nnls(&a, &target);
    Ok((res <= tol).then(|| lambda.iter().copied().collect()))
}

/// `D*(F∘g)(x̄, ȳ)(y*) = ∇g(x̄)ᵀ D*F(g(x̄), ȳ)(y*)`, guarded by the kernel
/// qualification `D*F(g(x̄), ȳ)(0) ∩ Ker ∇g(x̄)ᵀ = {0}`.
pub fn chain_rule_coderivative(
    outer: &CoderivativeSlice,
    outer_at_zero: &CoderivativeSlice,
    jac: &Matrix,
    x: &Vector,
) -> Result<CoderivativeSlice> {
    check_dim(jac.ncols(), x.len())?;
    check_dim(jac.nrows(), outer.dim())?;
    let kernel = nullspace(&jac.transpose(), 1e-10);
    if !kernel.is_empty() {
        let p = jac.nrows();
        let ker = ConvexCone::new(p, vec![], kernel)?;
        for piece in outer_at_zero.pieces() {
            let c = ConvexCone::new(p, piece.rays().to_vec(), vec![])?;
            if !c.intersect(&ker)?.is_zero() {
                return Err(Error::QualificationViolated(
                    "coderivative at zero meets the kernel of the adjoint Jacobian".into(),
                ));
            }
        }
    }
    outer.map_linear(&jac.transpose(), x)
}

/// Vertices of a regular simplex in ℝᵖ centred at 0 containing the ball of
/// radius `eta` (inradius `eta`, circumradius `p·eta`).
pub fn simplex_around(p: usize, eta: f64) -> Vec<Vector> {
    if p == 0 {
        return vec![Vector::zeros(0)];
    }
    // Centred standard simplex in ℝᵖ⁺¹ expressed in an orthonormal basis of
    // the hyperplane Σ u = 0.
    let ones = Matrix::from_element(1, p + 1, 1.0);
    let basis = nullspace(&ones, 1e-12);
    let c = 1.0 / (p + 1) as f64;
    let verts: Vec<Vector> = (0..=p)
        .map(|i| {
            let mut e = Vector::from_element(p + 1, -c);
            e[i] += 1.0;
            Vector::from_fn(p, |k, _| basis[k].dot(&e))
        })
        .collect();
    let r = verts[0].norm();
    verts
        .into_iter()
        .map(|v| v * (p as f64 * eta / r))
        .collect()
}

/// Slater check for one node on the simplex around `z̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlaterNode {
    pub holds: bool,
    /// `max_k ‖y_k‖` over the strictly feasible points found.
    pub kappa: f64,
    pub points: Vec<Vector>,
}

pub const SLATER_MARGIN: f64 = 1e-6;
pub const SLATER_BUDGET: usize = 10_000;

pub fn check_slater(sys: &ConstraintSystem, zbar: &Vector, eta: f64) -> Result<SlaterNode> {
    check_dim(sys.z_dim, zbar.len())?;
    if eta <= 0.0 || !eta.is_finite() {
        return Err(Error::InvalidInput(
            "simplex radius must be positive".into(),
        ));
    }
    let mut points = Vec::new();
    let mut holds = true;
    let mut kappa = 0.0f64;
    for v in simplex_around(sys.z_dim, eta) {
        let z = zbar + v;
        let (y, val) = sys.strict_feasible_point(&z, SLATER_MARGIN, SLATER_BUDGET);
        if val >= -SLATER_MARGIN {
            holds = false;
            points.push(y);
            continue;
        }
        // Pull the point towards the origin while staying strictly feasible.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if sys.max_value(&z, &Vector::zeros(sys.y_dim)) < -SLATER_MARGIN {
            lo = 0.0;
            hi = 0.0;
        }
        for _ in 0..60 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if sys.max_value(&z, &(&y * mid)) < -SLATER_MARGIN {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let y = &y * hi;
        kappa = kappa.max(y.norm());
        points.push(y);
    }
    Ok(SlaterNode {
        holds,
        kappa,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaterReport {
    pub holds: bool,
    pub nodes: Vec<(String, SlaterNode)>,
    /// `∫ κ dμ` over constraint nodes.
    pub kappa_integral: f64,
}

/// Slater check at every constraint node with `z̄_t = g_t(x̄)`.
pub fn check_slater_integrable(
    map: &RandomMap,
    space: &MeasureSpace,
    x: &Vector,
    eta: f64,
) -> Result<SlaterReport> {
    map.check_space(space)?;
    let mut nodes = Vec::new();
    let mut holds = true;
    let mut integral = 0.0;
    for (node, info) in map.nodes.iter().zip(space.nodes()) {
        if let NodeMap::Constraint { g, system } = node {
            let r = check_slater(system, &g.value(x), eta)?;
            holds &= r.holds;
            integral += info.weight * r.kappa;
            nodes.push((info.id.clone(), r));
        }
    }
    Ok(SlaterReport {
        holds,
        nodes,
        kappa_integral: integral,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointWitness {
    pub node: String,
    pub x: Vector,
    pub y: Vector,
    pub multipliers: Vec<f64>,
    pub zstar: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointReport {
    pub holds: bool,
    pub points_checked: usize,
    pub witness: Option<AdjointWitness>,
}

/// Grid test of the adjoint condition: no `λ ≥ 0` with `Σ λ_i ∇_y φ^i = 0`
/// and `z* = Σ λ_i ∇_z φ^i` nonzero in `Ker ∇g(x)ᵀ`, at boundary points of
/// the values over a grid of the ball `x̄ ± radius`.
pub fn check_adjoint_triviality(
    map: &RandomMap,
    space: &MeasureSpace,
    x: &Vector,
    radius: f64,
    grid: usize,
) -> Result<AdjointReport> {
    map.check_space(space)?;
    let mut checked = 0usize;
    for (node, info) in map.nodes.iter().zip(space.nodes()) {
        let NodeMap::Constraint { g, system } = node else {
            continue;
        };
        let p = system.z_dim;
        let m = system.y_dim;
        for xp in ball_grid(x, radius, grid) {
            let z = g.value(&xp);
            let Some(jac) = g.jacobian(&xp) else { continue };
            let Some(value) = node.value(&xp)? else {
                continue;
            };
            for y in value.vertices() {
                checked += 1;
                let active = system.active(&z, y, 1e-7);
                if active.is_empty() {
                    continue;
                }
                let grads: Vec<Vector> = active
                    .iter()
                    .map(|&i| system.gradient(i, &z, y))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::NonFinite("constraint gradient".into()))?;
                let k = grads.len();
                // Variables λ ∈ ℝᵏ: λ ≥ 0, Σλ∇_yφ = 0, ∇gᵀ Σλ∇_zφ = 0.
                let ineq: Vec<Vector> = (0..k)
                    .map(|i| {
                        let mut e = Vector::zeros(k);
                        e[i] = -1.0;
                        e
                    })
                    .collect();
                let zgrad = columns_to_matrix(
                    &grads
                        .iter()
                        .map(|g| g.rows(0, p).into_owned())
                        .collect::<Vec<_>>(),
                    p,
                );
                let ygrad = columns_to_matrix(
                    &grads
                        .iter()
                        .map(|g| g.rows(p, m).into_owned())
                        .collect::<Vec<_>>(),
                    m,
                );
                let adj = jac.transpose() * &zgrad;
                let mut eq: Vec<Vector> = (0..m).map(|r| ygrad.row(r).transpose()).collect();
                eq.extend((0..adj.nrows()).map(|r| adj.row(r).transpose()));
                let gens = ray_enumerate(&ineq, &eq, k);
                for r in gens.rays.iter().chain(&gens.lineality) {
                    let zstar = &zgrad * r;
                    if zstar.norm() > 1e-9 {
                        return Ok(AdjointReport {
                            holds: false,
                            points_checked: checked,
                            witness: Some(AdjointWitness {
                                node: info.id.clone(),
                                x: xp.clone(),
                                y: y.clone(),
                                multipliers: r.iter().copied().collect(),
                                zstar,
                            }),
                        });
                    }
                }
            }
        }
    }
    Ok(AdjointReport {
        holds: true,
        points_checked: checked,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AffineMap, ExprScalar, ExprVector, ScalarFn};
    use crate::geometry::Polytope;
    use crate::integrand::MatrixField;
    use crate::linalg::vector;
    use crate::measure::NodeKind;
    use std::sync::Arc;

    fn system(srcs: &[&str]) -> ConstraintSystem {
        let phis: Vec<ScalarFn> = srcs
            .iter()
            .map(|s| Arc::new(ExprScalar::parse(s, &["z", "y"]).unwrap()) as ScalarFn)
            .collect();
        ConstraintSystem::new(1, 1, phis, (vector(&[-10.0]), vector(&[10.0]))).unwrap()
    }

    #[test]
    fn smooth_coderivative_is_adjoint_jacobian() {
        let g = ExprVector::parse(&["x1^2 + x2", "3*x2"], &["x1", "x2"]).unwrap();
        let v = coderivative_smooth(&g, &vector(&[1.0, 2.0]), &vector(&[1.0, -1.0])).unwrap();
        assert_eq!(v, vector(&[2.0, -2.0]));
    }

    #[test]
    fn half_line_constraint() {
        // F(z) = {y ≤ z + 1}: at (0, 1) the normal cone is cone{(−1, 1)}.
        let sys = system(&["y - z - 1"]);
        let s = coderivative_constraint_system(
            &sys,
            &vector(&[0.0]),
            &vector(&[1.0]),
            &vector(&[-2.0]),
        )
        .unwrap();
        assert!(s.contains(&vector(&[-2.0]), 1e-9));
        assert!(!s.contains(&vector(&[-1.0]), 1e-6));
        let e =
            coderivative_constraint_system(&sys, &vector(&[0.0]), &vector(&[1.0]), &vector(&[2.0]))
                .unwrap();
        assert!(e.is_empty());
        let m = constraint_multipliers(
            &sys,
            &vector(&[0.0]),
            &vector(&[1.0]),
            &vector(&[-2.0]),
            &vector(&[-2.0]),
            1e-9,
        )
        .unwrap()
        .unwrap();
        assert!((m[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn slater_failure_is_reported() {
        let sys = system(&["y^2 + z^2"]);
        let err =
            coderivative_constraint_system(&sys, &vector(&[0.0]), &vector(&[0.0]), &vector(&[1.0]))
                .unwrap_err();
        assert!(matches!(err, Error::QualificationViolated(_)));
        let r = check_slater(&sys, &vector(&[0.0]), 0.5).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn slater_kappa_zero_when_origin_is_strictly_feasible() {
        let sys = system(&["y - z - 1"]);
        let r = check_slater(&sys, &vector(&[0.0]), 0.5).unwrap();
        assert!(r.holds);
        assert_eq!(r.kappa, 0.0);
        assert_eq!(r.points.len(), 2);
    }

    #[test]
    fn simplex_contains_ball() {
        for p in 1..=3 {
            let v = simplex_around(p, 0.5);
            assert_eq!(v.len(), p + 1);
            let poly = Polytope::new(v).unwrap();
            for d in crate::normal_cone::unit_directions(p, 16) {
                assert!(poly.support(&d) >= 0.5 - 1e-9);
            }
        }
    }

    #[test]
    fn chain_rule_kernel_qualification() {
        let sys = system(&["y - z - 1"]);
        let z = vector(&[0.0]);
        let y = vector(&[1.0]);
        let outer = coderivative_constraint_system(&sys, &z, &y, &vector(&[-1.0])).unwrap();
        let zero = coderivative_constraint_system(&sys, &z, &y, &vector(&[0.0])).unwrap();
        let ok = chain_rule_coderivative(
            &outer,
            &zero,
            &Matrix::from_element(1, 1, 3.0),
            &vector(&[0.0]),
        )
        .unwrap();
        assert!(ok.contains(&vector(&[-3.0]), 1e-9));
        // A zero Jacobian has a full kernel; D*F(0) = {0} so the rule still applies.
        let flat =
            chain_rule_coderivative(&outer, &zero, &Matrix::zeros(1, 1), &vector(&[0.0])).unwrap();
        assert!(flat.contains(&vector(&[0.0]), 1e-12));
    }

    #[test]
    fn polyhedral_graph_of_abs_subgradient() {
        let node = NodeMap::MaxAffine {
            pieces: vec![(vector(&[1.0]), 0.0), (vector(&[-1.0]), 0.0)],
            quad: None,
        };
        // At the corner (0, 1) of gph ∂|·|: regular N = {a ≤ 0, b ≥ 0}, the
        // limiting cone adds the two lines normal to the pieces.
        let (x, y) = (vector(&[0.0]), vector(&[1.0]));
        let lim = coderivative_node(&node, &x, &y, &vector(&[1.0]), SliceKind::Limiting).unwrap();
        let reg = coderivative_node(&node, &x, &y, &vector(&[1.0]), SliceKind::Regular).unwrap();
        assert!(reg.is_empty());
        assert!(lim.contains(&vector(&[0.0]), 1e-12));
        assert!(lim.max_norm().abs() < 1e-12);
        let reg = coderivative_node(&node, &x, &y, &vector(&[-1.0]), SliceKind::Regular).unwrap();
        assert!(reg.contains(&vector(&[-3.0]), 1e-9));
        assert!(!reg.contains(&vector(&[1.0]), 1e-6));
        assert!(reg.max_norm().is_infinite());
    }

    #[test]
    fn adjoint_triviality_on_linear_system() {
        let space = MeasureSpace::uniform(1, 1.0, NodeKind::Atom).unwrap();
        let node = NodeMap::Constraint {
            g: Arc::new(AffineMap::identity(1)),
            system: system(&["y - z - 1"]),
        };
        let map = RandomMap::constant(node, &space).unwrap();
        let r = check_adjoint_triviality(&map, &space, &vector(&[0.0]), 0.5, 2).unwrap();
        assert!(r.holds);
        assert!(r.points_checked > 0);
        let _ = MatrixField::Constant(Matrix::identity(1, 1));
    }

    #[test]
    fn adjoint_triviality_detects_degenerate_system() {
        // y ≤ −z and y ≥ z with g ≡ 0: λ = (1, 1) cancels the y parts and
        // leaves z* = 2 in the (full) kernel of ∇gᵀ = 0.
        let space = MeasureSpace::uniform(1, 1.0, NodeKind::Atom).unwrap();
        let node = NodeMap::Constraint {
            g: Arc::new(AffineMap::linear(Matrix::zeros(1, 1))),
            system: system(&["y + z", "z - y"]),
        };
        let map = RandomMap::constant(node, &space).unwrap();
        let r = check_adjoint_triviality(&map, &space, &vector(&[0.0]), 0.5, 1).unwrap();
        assert!(!r.holds);
        assert!(r.witness.unwrap().zstar.norm() > 0.0);
    }
}
