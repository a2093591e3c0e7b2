//! Expected-integral maps `E_Φ(x) = Σ w_t Φ_t(x)`, expected functionals and
//! the selection mapping.

use crate::error::{check_dim, Error, Result};
use crate::functions::ScalarFn;
use crate::geometry::{weighted_minkowski, Polytope};
use crate::integrand::{NodeMap, RandomMap};
use crate::linalg::{cartesian, nnls, Matrix, Vector};
use crate::measure::MeasureSpace;

/// Per-node values at `x`; `None` if some node value is empty.
pub fn node_values(
    map: &RandomMap,
    x: &Vector,
    space: &MeasureSpace,
) -> Result<Option<Vec<Polytope>>> {
    map.check_space(space)?;
    check_dim(map.n, x.len())?;
    let mut out = Vec::with_capacity(map.nodes.len());
    for (node, info) in map.nodes.iter().zip(space.nodes()) {
        let v = match node.value(x) {
            Ok(v) => v,
            Err(Error::NonFinite(msg)) => {
                return Err(Error::Unbounded(format!("node {}: {msg}", info.id)));
            }
            Err(e) => return Err(e),
        };
        match v {
            // Polytope values are convex already, so the nonatomic
            // convexification is the identity here.
            Some(p) => out.push(p),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// `E_Φ(x)`; `None` is the empty set.
pub fn evaluate_expected_map(
    map: &RandomMap,
    x: &Vector,
    space: &MeasureSpace,
) -> Result<Option<Polytope>> {
    let Some(values) = node_values(map, x, space)? else {
        return Ok(None);
    };
    let w = space.weights();
    let terms: Vec<(f64, &Polytope)> = w.iter().copied().zip(values.iter()).collect();
    Ok(Some(weighted_minkowski(&terms)?))
}

/// `Σ w_t v_t` in extended reals with `∞ − ∞ = ∞`.
pub fn extended_sum(values: &[f64], weights: &[f64]) -> f64 {
    if values.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    if values.contains(&f64::INFINITY) {
        return f64::INFINITY;
    }
    if values.contains(&f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

/// `E_φ(x) = Σ w_t φ_t(x)`.
pub fn expected_functional(phi: &[ScalarFn], x: &Vector, space: &MeasureSpace) -> Result<f64> {
    if phi.len() != space.len() {
        return Err(Error::DomainMismatch(format!(
            "{} functions for {} nodes",
            phi.len(),
            space.len()
        )));
    }
    let vals: Vec<f64> = phi.iter().map(|f| f.value(x)).collect();
    Ok(extended_sum(&vals, &space.weights()))
}

/// `E_φ(x)` for a map whose nodes are maximum functions.
pub fn expected_max_functional(map: &RandomMap, x: &Vector, space: &MeasureSpace) -> Result<f64> {
    map.check_space(space)?;
    let vals: Vec<f64> = map
        .nodes
        .iter()
        .map(|n| {
            n.scalar_value(x)
                .ok_or_else(|| Error::InvalidInput("node is not a maximum function".into()))
        })
        .collect::<Result<_>>()?;
    Ok(extended_sum(&vals, &space.weights()))
}

/// Per-node points `ȳ(t) ∈ Φ_t(x̄)` with `Σ w_t ȳ(t) = aggregate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFunction {
    pub per_node: Vec<Vector>,
    pub aggregate: Vector,
}

impl SelectionFunction {
    pub fn new(per_node: Vec<Vector>, space: &MeasureSpace) -> Result<Self> {
        if per_node.len() != space.len() {
            return Err(Error::DomainMismatch("selection length".into()));
        }
        let m = per_node[0].len();
        let mut agg = Vector::zeros(m);
        for (y, w) in per_node.iter().zip(space.weights()) {
            check_dim(m, y.len())?;
            agg += y * w;
        }
        Ok(SelectionFunction {
            per_node,
            aggregate: agg,
        })
    }

    /// Checks node membership within `tol`.
    pub fn validate(
        &self,
        map: &RandomMap,
        x: &Vector,
        space: &MeasureSpace,
        tol: f64,
    ) -> Result<()> {
        let Some(values) = node_values(map, x, space)? else {
            return Err(Error::Infeasible("empty node value".into()));
        };
        for ((y, v), info) in self.per_node.iter().zip(&values).zip(space.nodes()) {
            let d = (v.project(y) - y).norm();
            if d > tol {
                return Err(Error::PointNotInSet { distance: d }).map_err(|e| {
                    Error::InvalidInput(format!("selection at node {}: {e}", info.id))
                });
            }
        }
        Ok(())
    }

    /// `Σ w_t ‖y(t) − z(t)‖`.
    pub fn weighted_l1(&self, other: &SelectionFunction, space: &MeasureSpace) -> f64 {
        self.per_node
            .iter()
            .zip(&other.per_node)
            .zip(space.weights())
            .map(|((a, b), w)| w * (a - b).norm())
            .sum()
    }
}

const MAX_ENUMERATION_NODES: usize = 4;
const MAX_COMBINATIONS: usize = 20_000;

/// Vertex-supported selections: every node at a vertex of its value except
/// at most one free node, whose point is solved from the aggregate. Order:
/// free node ascending (none last), then vertex choices lexicographically.
/// With `first_only` the search stops at the first hit.
fn vertex_selections(
    values: &[Polytope],
    weights: &[f64],
    target: &Vector,
    tol: f64,
    first_only: bool,
) -> Vec<Vec<Vector>> {
    let k = values.len();
    let mut out: Vec<Vec<Vector>> = Vec::new();
    let mut free_choices: Vec<Option<usize>> = (0..k).map(Some).collect();
    free_choices.push(None);
    for free in free_choices {
        let sizes: Vec<usize> = (0..k)
            .map(|t| {
                if Some(t) == free {
                    1
                } else {
                    values[t].vertices().len()
                }
            })
            .collect();
        if sizes.iter().product::<usize>() > MAX_COMBINATIONS {
            continue;
        }
        for combo in cartesian(&sizes) {
            let mut acc = Vector::zeros(target.len());
            for t in 0..k {
                if Some(t) != free {
                    acc += &values[t].vertices()[combo[t]] * weights[t];
                }
            }
            let mut sel: Vec<Vector> = (0..k)
                .map(|t| {
                    if Some(t) == free {
                        Vector::zeros(target.len())
                    } else {
                        values[t].vertices()[combo[t]].clone()
                    }
                })
                .collect();
            match free {
                Some(j) => {
                    let yj = (target - &acc) / weights[j];
                    if (values[j].project(&yj) - &yj).norm() > tol {
                        continue;
                    }
                    sel[j] = yj;
                }
                None => {
                    if (&acc - target).norm() > tol {
                        continue;
                    }
                }
            }
            let dup = out
                .iter()
                .any(|s| s.iter().zip(&sel).all(|(a, b)| (a - b).amax() <= 1e-12));
            if !dup {
                out.push(sel);
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

/// One selection of `S_Φ(x̄, y)`: the first vertex-supported selection, or
/// a convex-combination selection found by nonnegative least squares.
/// `Ok(None)` means `y ∉ E_Φ(x̄)`.
pub fn selection_mapping(
    map: &RandomMap,
    x: &Vector,
    target: &Vector,
    space: &MeasureSpace,
    tol: f64,
) -> Result<Option<SelectionFunction>> {
    check_dim(map.m, target.len())?;
    let Some(values) = node_values(map, x, space)? else {
        return Ok(None);
    };
    let w = space.weights();
    if let Some(sel) = vertex_selections(&values, &w, target, tol, true).pop() {
        return Ok(Some(SelectionFunction::new(sel, space)?));
    }
    // λ_tk ≥ 0, Σ_k λ_tk = 1, Σ_t w_t Σ_k λ_tk v_tk = target.
    let m = map.m;
    let cols: usize = values.iter().map(|v| v.vertices().len()).sum();
    let rows = m + values.len();
    let mut a = Matrix::zeros(rows, cols);
    let mut b = Vector::zeros(rows);
    b.rows_mut(0, m).copy_from(target);
    let mut c = 0;
    for (t, v) in values.iter().enumerate() {
        for vert in v.vertices() {
            for i in 0..m {
                a[(i, c)] = w[t] * vert[i];
            }
            a[(m + t, c)] = 1.0;
            c += 1;
        }
        b[m + t] = 1.0;
    }
    let (lambda, res) = nnls(&a, &b);
    if res > tol {
        return Ok(None);
    }
    let mut per_node = Vec::with_capacity(values.len());
    let mut c = 0;
    for v in &values {
        let mut y = Vector::zeros(m);
        let mut total = 0.0;
        for vert in v.vertices() {
            y += vert * lambda[c];
            total += lambda[c];
            c += 1;
        }
        per_node.push(y / total);
    }
    Ok(Some(SelectionFunction::new(per_node, space)?))
}

/// All vertex-supported selections (at most 4 nodes). Under-approximates
/// `S_Φ(x̄, y)`; see the module notes in the report.
pub fn enumerate_selections(
    map: &RandomMap,
    x: &Vector,
    target: &Vector,
    space: &MeasureSpace,
    tol: f64,
) -> Result<Vec<SelectionFunction>> {
    if space.len() > MAX_ENUMERATION_NODES {
        return Err(Error::Unsupported(format!(
            "selection enumeration over {} nodes (limit {MAX_ENUMERATION_NODES})",
            space.len()
        )));
    }
    let Some(values) = node_values(map, x, space)? else {
        return Ok(vec![]);
    };
    vertex_selections(&values, &space.weights(), target, tol, false)
        .into_iter()
        .map(|s| SelectionFunction::new(s, space))
        .collect()
}

/// Diagnostic for inner semicompactness along a converging sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SemicompactnessDiagnostic {
    /// Weighted L¹ distances between consecutive selections.
    pub increments: Vec<f64>,
    /// Pairs where no selection exists.
    pub missing: usize,
    pub cauchy: bool,
}

/// Finds a selection for each pair and tests whether the last third of the
/// increments is within 10× the step of the pairs themselves.
pub fn probe_inner_semicompactness(
    map: &RandomMap,
    space: &MeasureSpace,
    pairs: &[(Vector, Vector)],
    tol: f64,
) -> Result<SemicompactnessDiagnostic> {
    let mut sels: Vec<(usize, SelectionFunction)> = Vec::new();
    let mut missing = 0;
    for (i, (x, y)) in pairs.iter().enumerate() {
        match selection_mapping(map, x, y, space, tol)? {
            Some(s) => sels.push((i, s)),
            None => missing += 1,
        }
    }
    let mut increments = Vec::new();
    let mut cauchy = true;
    let tail_start = sels.len() - sels.len() / 3;
    for k in 1..sels.len() {
        let d = sels[k].1.weighted_l1(&sels[k - 1].1, space);
        increments.push(d);
        if k >= tail_start.max(1) {
            let (i, j) = (sels[k - 1].0, sels[k].0);
            let step = (&pairs[i].0 - &pairs[j].0).norm() + (&pairs[i].1 - &pairs[j].1).norm();
            if d > 10.0 * step + 1e-9 {
                cauchy = false;
            }
        }
    }
    Ok(SemicompactnessDiagnostic {
        increments,
        missing,
        cauchy: cauchy && missing == 0,
    })
}

/// Subgradient-map values of maximum-function nodes used as a scalar
/// integrand: `∂φ_t(x)`.
pub fn node_subdifferentials(map: &RandomMap, x: &Vector) -> Result<Vec<Polytope>> {
    map.nodes
        .iter()
        .map(|n| match n {
            NodeMap::MaxAffine { .. } => n
                .value(x)?
                .ok_or_else(|| Error::Infeasible("empty subdifferential".into())),
            _ => Err(Error::InvalidInput("node is not a maximum function".into())),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AffineMap, ExprScalar, ExprVector};
    use crate::integrand::MatrixField;
    use crate::linalg::vector;
    use crate::measure::{MeasureNode, NodeKind};
    use std::sync::Arc;

    fn const_interval(lo: f64, hi: f64) -> NodeMap {
        NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(AffineMap::new(Matrix::zeros(1, 1), vector(&[0.0])).unwrap()),
            f: Polytope::interval(lo, hi),
        }
    }

    fn shifted_interval(slope: f64) -> NodeMap {
        NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(AffineMap::linear(Matrix::from_element(1, 1, slope))),
            f: Polytope::interval(0.0, 1.0),
        }
    }

    fn two_atoms(w1: f64, w2: f64) -> MeasureSpace {
        MeasureSpace::new(vec![
            MeasureNode::atom("t1", w1),
            MeasureNode::atom("t2", w2),
        ])
        .unwrap()
    }

    #[test]
    fn interval_sum() {
        let space = two_atoms(1.0, 1.0);
        let map = RandomMap::new(vec![const_interval(0.0, 1.0), const_interval(2.0, 3.0)]).unwrap();
        let e = evaluate_expected_map(&map, &vector(&[0.7]), &space)
            .unwrap()
            .unwrap();
        assert_eq!(e.bounds_1d(), (2.0, 4.0));
    }

    #[test]
    fn doubling_weights_doubles_vertices() {
        let map = RandomMap::new(vec![shifted_interval(1.0), shifted_interval(-2.0)]).unwrap();
        let x = vector(&[0.3]);
        let a = evaluate_expected_map(&map, &x, &two_atoms(0.5, 1.5))
            .unwrap()
            .unwrap();
        let b = evaluate_expected_map(&map, &x, &two_atoms(1.0, 3.0))
            .unwrap()
            .unwrap();
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            assert_eq!(p * 2.0, *q);
        }
    }

    #[test]
    fn smooth_single_valued() {
        let space = two_atoms(1.0, 2.0);
        let g1 = NodeMap::Smooth {
            g: Arc::new(ExprVector::parse(&["x^2", "sin(x)"], &["x"]).unwrap()),
        };
        let g2 = NodeMap::Smooth {
            g: Arc::new(ExprVector::parse(&["3*x", "1"], &["x"]).unwrap()),
        };
        let map = RandomMap::new(vec![g1, g2]).unwrap();
        let x = vector(&[0.4]);
        let e = evaluate_expected_map(&map, &x, &space).unwrap().unwrap();
        assert!(e.is_singleton());
        let want = vector(&[0.16 + 2.4, 0.4f64.sin() + 2.0]);
        assert!((&e.vertices()[0] - want).amax() < 1e-12);
    }

    #[test]
    fn extended_real_conventions() {
        let space = two_atoms(1.0, 2.0);
        assert_eq!(extended_sum(&[3.0, -1.0], &space.weights()), 1.0);
        assert_eq!(
            extended_sum(&[f64::INFINITY, f64::NEG_INFINITY], &[1.0, 1.0]),
            f64::INFINITY
        );
        let zero: Vec<ScalarFn> = {
            let z: ScalarFn = Arc::new(ExprScalar::parse("0", &["x"]).unwrap());
            vec![z.clone(), z]
        };
        assert_eq!(
            expected_functional(&zero, &vector(&[1.0]), &space).unwrap(),
            0.0
        );
    }

    #[test]
    fn selections() {
        let space = two_atoms(1.0, 1.0);
        let map = RandomMap::new(vec![const_interval(0.0, 1.0), const_interval(0.0, 1.0)]).unwrap();
        let x = vector(&[0.0]);
        let s = selection_mapping(&map, &x, &vector(&[1.0]), &space, 1e-10)
            .unwrap()
            .unwrap();
        assert!((s.aggregate[0] - 1.0).abs() < 1e-10);
        s.validate(&map, &x, &space, 1e-9).unwrap();
        assert!(selection_mapping(&map, &x, &vector(&[2.5]), &space, 1e-10)
            .unwrap()
            .is_none());
        let all = enumerate_selections(&map, &x, &vector(&[1.0]), &space, 1e-10).unwrap();
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn nnls_fallback_in_the_plane() {
        let space = two_atoms(1.0, 1.0);
        let square = NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(2, 2)),
            b: Arc::new(AffineMap::linear(Matrix::zeros(2, 1))),
            f: Polytope::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        };
        let map = RandomMap::new(vec![square.clone(), square]).unwrap();
        let target = vector(&[0.3, 1.7]);
        let s = selection_mapping(&map, &vector(&[0.0]), &target, &space, 1e-9)
            .unwrap()
            .unwrap();
        assert!((&s.aggregate - &target).amax() < 1e-9);
        s.validate(&map, &vector(&[0.0]), &space, 1e-9).unwrap();
    }

    #[test]
    fn semicompactness_probe() {
        let space = two_atoms(1.0, 1.0);
        let smooth = RandomMap::new(vec![
            NodeMap::Smooth {
                g: Arc::new(ExprVector::parse(&["2*x"], &["x"]).unwrap()),
            },
            NodeMap::Smooth {
                g: Arc::new(ExprVector::parse(&["x^2"], &["x"]).unwrap()),
            },
        ])
        .unwrap();
        let pairs: Vec<(Vector, Vector)> = (1..30)
            .map(|k| {
                let x = 1.0 / k as f64;
                (vector(&[x]), vector(&[2.0 * x + x * x]))
            })
            .collect();
        assert!(
            probe_inner_semicompactness(&smooth, &space, &pairs, 1e-9)
                .unwrap()
                .cauchy
        );
        // Segment values with targets alternating around 1: the first
        // vertex-supported selection jumps between (ε, 1) and (1 − ε, 0).
        let seg = RandomMap::new(vec![const_interval(0.0, 1.0), const_interval(0.0, 1.0)]).unwrap();
        let pairs: Vec<(Vector, Vector)> = (1..30)
            .map(|k| {
                let e = 0.5 / k as f64;
                (
                    vector(&[0.0]),
                    vector(&[1.0 + if k % 2 == 0 { e } else { -e }]),
                )
            })
            .collect();
        let d = probe_inner_semicompactness(&seg, &space, &pairs, 1e-9).unwrap();
        assert!(!d.cauchy);
        let _ = NodeKind::Atom;
    }
}
