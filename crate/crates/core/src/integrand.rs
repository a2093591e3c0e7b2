//! Structured random set-valued maps `Φ_t(x)`: per-node values and exact
//! local polyhedral models of their graphs.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::expr::Expr;
use crate::functions::{AffineScalar, ScalarFn, VectorFn};
use crate::geometry::{convex_hull, Piece, PointSet, PolyhedralUnion, Polyhedron, Polytope};
use crate::linalg::{cartesian, combinations, concat, Matrix, Vector};
use crate::measure::{MeasureSpace, NodeKind};
use crate::normal_cone::{unit_directions, ACTIVE_TOL};

/// Matrix-valued function `x ↦ A(x)`.
#[derive(Debug, Clone)]
pub enum MatrixField {
    Constant(Matrix),
    /// Entries as expressions in the x variables, row-major.
    Expr {
        rows: usize,
        cols: usize,
        entries: Vec<Expr>,
        n: usize,
    },
}

impl MatrixField {
    pub fn rows(&self) -> usize {
        match self {
            MatrixField::Constant(m) => m.nrows(),
            MatrixField::Expr { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            MatrixField::Constant(m) => m.ncols(),
            MatrixField::Expr { cols, .. } => *cols,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            MatrixField::Constant(_) => true,
            MatrixField::Expr { entries, n, .. } => {
                entries.iter().all(|e| (0..*n).all(|i| !e.depends_on(i)))
            }
        }
    }

    pub fn eval(&self, x: &Vector) -> Matrix {
        match self {
            MatrixField::Constant(m) => m.clone(),
            MatrixField::Expr {
                rows,
                cols,
                entries,
                ..
            } => Matrix::from_row_iterator(
                *rows,
                *cols,
                entries.iter().map(|e| e.eval(x.as_slice())),
            ),
        }
    }

    /// Gradient of `A(x) f` (m × n Jacobian). Entries multiplied by a zero
    /// coefficient of `f` are skipped so a kink of an unused entry does not
    /// poison the result.
    pub fn jacobian_times(&self, x: &Vector, f: &Vector) -> Option<Matrix> {
        match self {
            MatrixField::Constant(m) => Some(Matrix::zeros(m.nrows(), x.len())),
            MatrixField::Expr {
                rows,
                cols,
                entries,
                n,
            } => {
                let mut j = Matrix::zeros(*rows, *n);
                for r in 0..*rows {
                    for c in 0..*cols {
                        if f[c] == 0.0 {
                            continue;
                        }
                        let e = &entries[r * cols + c];
                        if (0..*n).all(|i| !e.depends_on(i)) {
                            continue;
                        }
                        let (_, g) = e.eval_grad(x.as_slice(), *n);
                        if g.iter().any(|v| !v.is_finite()) {
                            return None;
                        }
                        for i in 0..*n {
                            j[(r, i)] += f[c] * g[i];
                        }
                    }
                }
                Some(j)
            }
        }
    }
}

/// Finite inequality system `φ^i(z, y) ≤ 0` with a bounding box on `y`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub z_dim: usize,
    pub y_dim: usize,
    pub constraints: Vec<ScalarFn>,
    /// Box `[lo, hi]` on y, also present among `constraints` as affine rows.
    pub window: (Vector, Vector),
}

impl ConstraintSystem {
    pub fn new(
        z_dim: usize,
        y_dim: usize,
        constraints: Vec<ScalarFn>,
        window: (Vector, Vector),
    ) -> Result<Self> {
        for c in &constraints {
            check_dim(z_dim + y_dim, c.dim())?;
        }
        check_dim(y_dim, window.0.len())?;
        check_dim(y_dim, window.1.len())?;
        let mut all = constraints;
        for i in 0..y_dim {
            let mut a = Vector::zeros(z_dim + y_dim);
            a[z_dim + i] = 1.0;
            all.push(Arc::new(AffineScalar {
                a: a.clone(),
                b: -window.1[i],
            }));
            all.push(Arc::new(AffineScalar {
                a: -a,
                b: window.0[i],
            }));
        }
        Ok(ConstraintSystem {
            z_dim,
            y_dim,
            constraints: all,
            window,
        })
    }

    pub fn max_value(&self, z: &Vector, y: &Vector) -> f64 {
        let zy = concat(z, y);
        self.constraints
            .iter()
            .map(|c| c.value(&zy))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices with `|φ^i| ≤ tol`.
    pub fn active(&self, z: &Vector, y: &Vector, tol: f64) -> Vec<usize> {
        let zy = concat(z, y);
        (0..self.constraints.len())
            .filter(|&i| self.constraints[i].value(&zy).abs() <= tol)
            .collect()
    }

    pub fn gradient(&self, i: usize, z: &Vector, y: &Vector) -> Option<Vector> {
        self.constraints[i].gradient(&concat(z, y))
    }

    fn window_center(&self) -> Vector {
        (&self.window.0 + &self.window.1) / 2.0
    }

    /// Pattern search for a point minimizing `max_i φ^i(z, ·)`. Stops as soon
    /// as the value is below `-margin`. Returns the best point and value.
    pub fn strict_feasible_point(&self, z: &Vector, margin: f64, budget: usize) -> (Vector, f64) {
        let m = self.y_dim;
        let mut evals = 0usize;
        let mut best_y = Vector::zeros(m);
        for i in 0..m {
            best_y[i] = 0.0f64.clamp(self.window.0[i], self.window.1[i]);
        }
        let mut best = self.max_value(z, &best_y);
        evals += 1;
        let c = self.window_center();
        let vc = self.max_value(z, &c);
        evals += 1;
        if vc < best && best >= -margin {
            best = vc;
            best_y = c;
        }
        let width = (&self.window.1 - &self.window.0).amax().max(1e-3);
        let mut step = width / 4.0;
        while best >= -margin && evals < budget && step > 1e-12 * width {
            let mut improved = false;
            for i in 0..m {
                for s in [1.0, -1.0] {
                    let mut y = best_y.clone();
                    y[i] += s * step;
                    let v = self.max_value(z, &y);
                    evals += 1;
                    if v < best {
                        best = v;
                        best_y = y;
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        (best_y, best)
    }

    /// Feasible set at `z` as a polytope: exact interval in 1-D via
    /// bisection, otherwise the hull of boundary points found along
    /// `directions` rays from a strictly feasible point.
    pub fn feasible_set(&self, z: &Vector, directions: usize) -> Result<Option<Polytope>> {
        let (y0, v0) = self.strict_feasible_point(z, 0.0, 10_000);
        if v0 > 1e-12 {
            return Ok(None);
        }
        let dirs = unit_directions(self.y_dim, directions);
        let diam = (&self.window.1 - &self.window.0).norm() + 1.0;
        let mut pts = Vec::with_capacity(dirs.len());
        for d in &dirs {
            let mut lo = 0.0;
            let mut hi = diam;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.max_value(z, &(&y0 + d * mid)) <= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * diam {
                    break;
                }
            }
            pts.push(&y0 + d * lo);
        }
        Ok(Some(convex_hull(&pts)?))
    }
}

/// One node's integrand.
#[derive(Debug, Clone)]
pub enum NodeMap {
    /// `{g(x)}`.
    Smooth { g: VectorFn },
    /// `A(x) F + b(x)`.
    AffineImage {
        a: MatrixField,
        b: VectorFn,
        f: Polytope,
    },
    /// `{y | φ^i(g(x), y) ≤ 0}`.
    Constraint {
        g: VectorFn,
        system: ConstraintSystem,
    },
    /// Subgradient map `∂φ` of `φ(x) = max_i (a_i·x + b_i) + ½ xᵀQx`.
    MaxAffine {
        pieces: Vec<(Vector, f64)>,
        quad: Option<Matrix>,
    },
}

/// Local graph model: a polyhedral union whose regular and limiting normal
/// cones at the base point coincide with those of the true graph.
#[derive(Debug, Clone)]
pub struct LocalGraph {
    pub union: PolyhedralUnion,
    pub n: usize,
    pub m: usize,
}

/// Active bound functions `h(x)` of an interval-valued map at `x̄`, as
/// (value, gradient) pairs.
#[derive(Debug, Clone, Default)]
pub struct IntervalBounds {
    pub lower: Vec<(f64, Vector)>,
    pub upper: Vec<(f64, Vector)>,
    pub lo: f64,
    pub hi: f64,
}

impl NodeMap {
    pub fn class_name(&self) -> &'static str {
        match self {
            NodeMap::Smooth { .. } => "smooth",
            NodeMap::AffineImage { .. } => "affine_image",
            NodeMap::Constraint { .. } => "constraint",
            NodeMap::MaxAffine { .. } => "max_affine",
        }
    }

    pub fn x_dim(&self) -> usize {
        match self {
            NodeMap::Smooth { g } => g.input_dim(),
            NodeMap::AffineImage { b, .. } => b.input_dim(),
            NodeMap::Constraint { g, .. } => g.input_dim(),
            NodeMap::MaxAffine { pieces, .. } => pieces[0].0.len(),
        }
    }

    pub fn y_dim(&self) -> usize {
        match self {
            NodeMap::Smooth { g } => g.output_dim(),
            NodeMap::AffineImage { b, .. } => b.output_dim(),
            NodeMap::Constraint { system, .. } => system.y_dim,
            NodeMap::MaxAffine { pieces, .. } => pieces[0].0.len(),
        }
    }

    /// Value `Φ_t(x)`; `None` when empty.
    pub fn value(&self, x: &Vector) -> Result<Option<Polytope>> {
        check_dim(self.x_dim(), x.len())?;
        match self {
            NodeMap::Smooth { g } => {
                let v = g.value(x);
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite("smooth map value".into()));
                }
                Ok(Some(Polytope::point(v)))
            }
            NodeMap::AffineImage { a, b, f } => {
                let am = a.eval(x);
                if am.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFinite("matrix field value".into()));
                }
                Ok(Some(f.map_linear(&am)?.translate(&b.value(x))))
            }
            NodeMap::Constraint { g, system } => {
                system.feasible_set(&g.value(x), if system.y_dim == 2 { 256 } else { 1024 })
            }
            NodeMap::MaxAffine { pieces, quad } => {
                let vals: Vec<f64> = pieces.iter().map(|(a, b)| a.dot(x) + b).collect();
                let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let grads: Vec<Vector> = pieces
                    .iter()
                    .zip(&vals)
                    .filter(|(_, v)| top - **v <= ACTIVE_TOL * (1.0 + top.abs()))
                    .map(|((a, _), _)| a.clone())
                    .collect();
                let p = convex_hull(&grads)?;
                Ok(Some(match quad {
                    Some(q) => p.translate(&(q * x)),
                    None => p,
                }))
            }
        }
    }

    /// Scalar value `φ(x)` for the maximum-function class.
    pub fn scalar_value(&self, x: &Vector) -> Option<f64> {
        match self {
            NodeMap::MaxAffine { pieces, quad } => {
                let top = pieces
                    .iter()
                    .map(|(a, b)| a.dot(x) + b)
                    .fold(f64::NEG_INFINITY, f64::max);
                let q = quad.as_ref().map(|q| 0.5 * x.dot(&(q * x))).unwrap_or(0.0);
                Some(top + q)
            }
            _ => None,
        }
    }

    /// Active lower/upper bound functions of an interval-valued node (m = 1).
    pub fn interval_bounds(&self, x: &Vector) -> Option<IntervalBounds> {
        if self.y_dim() != 1 {
            return None;
        }
        match self {
            NodeMap::Smooth { g } => {
                let v = g.value(x)[0];
                let j = g.jacobian(x)?;
                let grad = j.row(0).transpose();
                Some(IntervalBounds {
                    lower: vec![(v, grad.clone())],
                    upper: vec![(v, grad)],
                    lo: v,
                    hi: v,
                })
            }
            NodeMap::AffineImage { a, b, f } => {
                let am = a.eval(x);
                let bv = b.value(x)[0];
                let vals: Vec<f64> = f.vertices().iter().map(|v| (&am * v)[0] + bv).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let tol = ACTIVE_TOL * (1.0 + lo.abs().max(hi.abs()));
                let bj = b.jacobian(x)?;
                let mut out = IntervalBounds {
                    lo,
                    hi,
                    ..Default::default()
                };
                for (v, val) in f.vertices().iter().zip(&vals) {
                    let grad_needed = (val - lo).abs() <= tol || (val - hi).abs() <= tol;
                    if !grad_needed {
                        continue;
                    }
                    // A missing derivative is kept as NaN and rejected only if
                    // the bound is active at the base point.
                    let grad = match a.jacobian_times(x, v) {
                        Some(ja) => (ja + &bj).row(0).transpose(),
                        None => Vector::from_element(x.len(), f64::NAN),
                    };
                    if (val - lo).abs() <= tol {
                        out.lower.push((*val, grad.clone()));
                    }
                    if (val - hi).abs() <= tol {
                        out.upper.push((*val, grad));
                    }
                }
                Some(out)
            }
            NodeMap::Constraint { g, system } => {
                // Implicit-function slopes of the boundary roots; only a
                // single active constraint per side with ∂φ/∂y ≠ 0 is exact.
                let (lo, hi) = self.value(x).ok()??.bounds_1d();
                let z = g.value(x);
                let jg = g.jacobian(x)?;
                let side = |yv: f64, sign: f64| -> Option<(f64, Vector)> {
                    let yv1 = Vector::from_element(1, yv);
                    let tol = ACTIVE_TOL * (1.0 + yv.abs());
                    let mut found = None;
                    for i in system.active(&z, &yv1, tol) {
                        let grad = system.gradient(i, &z, &yv1)?;
                        let gy = grad[system.z_dim];
                        if gy.abs() <= 1e-9 {
                            return None;
                        }
                        if gy * sign <= 0.0 {
                            continue;
                        }
                        if found.is_some() {
                            return None;
                        }
                        let gz = grad.rows(0, system.z_dim).into_owned();
                        found = Some((yv, -(jg.transpose() * gz) / gy));
                    }
                    found
                };
                Some(IntervalBounds {
                    lower: vec![side(lo, -1.0)?],
                    upper: vec![side(hi, 1.0)?],
                    lo,
                    hi,
                })
            }
            _ => None,
        }
    }

    /// Exact local model of the graph near `(x̄, ȳ)`, or `None` when the
    /// class/point is outside the exactly handled cases (non-differentiable
    /// data, nonlinear x-dependence of A with m > 1).
    pub fn local_graph(&self, x: &Vector, y: &Vector) -> Option<LocalGraph> {
        let n = self.x_dim();
        let m = self.y_dim();
        match self {
            NodeMap::Smooth { g } => {
                let j = g.jacobian(x)?;
                Some(LocalGraph {
                    union: single(linear_graph(&j, x, y)),
                    n,
                    m,
                })
            }
            NodeMap::AffineImage { a, b, f } if a.is_constant() => {
                let am = a.eval(x);
                let p = f.map_linear(&am).ok()?;
                let bj = b.jacobian(x)?;
                let bv = b.value(x);
                Some(LocalGraph {
                    union: single(shifted_set_graph(&p, &bj, &bv, x)),
                    n,
                    m,
                })
            }
            NodeMap::AffineImage { .. } => {
                let bounds = self.interval_bounds(x)?;
                Some(LocalGraph {
                    union: interval_graph(&bounds, x, y[0])?,
                    n,
                    m,
                })
            }
            NodeMap::Constraint { g, system } => {
                let jg = g.jacobian(x)?;
                let z = g.value(x);
                let active = system.active(&z, y, ACTIVE_TOL);
                let mut rows = Vec::new();
                for i in active {
                    let grad = system.gradient(i, &z, y)?;
                    let gz = grad.rows(0, system.z_dim).into_owned();
                    let gy = grad.rows(system.z_dim, m).into_owned();
                    let row = concat(&(jg.transpose() * gz), &gy);
                    let off = row.dot(&concat(x, y));
                    rows.push((row, off));
                }
                Some(LocalGraph {
                    union: single(Polyhedron::new(n + m, rows).ok()?),
                    n,
                    m,
                })
            }
            NodeMap::MaxAffine { pieces, quad } => Some(LocalGraph {
                union: max_affine_graph(pieces, quad.as_ref(), x)?,
                n,
                m,
            }),
        }
    }
}

fn single(p: Polyhedron) -> PolyhedralUnion {
    let d = PointSet::dim(&p);
    PolyhedralUnion::new(d, vec![Piece::Polyhedron(p)]).expect("same dimension")
}

/// `{(x, y) | y − ȳ = J (x − x̄)}`.
fn linear_graph(j: &Matrix, x: &Vector, y: &Vector) -> Polyhedron {
    let n = x.len();
    let m = y.len();
    let mut p = Polyhedron::whole(n + m);
    for i in 0..m {
        let mut row = Vector::zeros(n + m);
        for k in 0..n {
            row[k] = -j[(i, k)];
        }
        row[n + i] = 1.0;
        let off = row.dot(&concat(x, y));
        p = p.with_equality(row, off).expect("same dimension");
    }
    p
}

/// `{(x, y) | y − b̄ − B (x − x̄) ∈ P}`.
fn shifted_set_graph(p: &Polytope, bj: &Matrix, bv: &Vector, x: &Vector) -> Polyhedron {
    let n = x.len();
    let m = p.dim();
    let h = p.to_polyhedron();
    let rows = h
        .rows()
        .iter()
        .map(|(c, d)| {
            let row = concat(&(-(bj.transpose() * c)), c);
            (row, d + c.dot(&(bv - bj * x)))
        })
        .collect();
    let mut out = Polyhedron::new(n + m, rows).expect("same dimension");
    if h.is_marked_empty() {
        out = out
            .intersect(&Polyhedron::new(n + m, vec![(Vector::zeros(n + m), -1.0)]).unwrap())
            .unwrap();
    }
    out
}

/// Union over active lower/upper bound pairs of the linearized bands
/// `h_lo(x) ≤ y ≤ h_hi(x)`; bounds not active at `ȳ` are dropped.
pub(crate) fn interval_graph(
    bounds: &IntervalBounds,
    x: &Vector,
    y: f64,
) -> Option<PolyhedralUnion> {
    let n = x.len();
    let tol = ACTIVE_TOL * (1.0 + y.abs());
    let lower_active = (y - bounds.lo).abs() <= tol;
    let upper_active = (y - bounds.hi).abs() <= tol;
    let lows: Vec<Option<&(f64, Vector)>> = if lower_active {
        bounds.lower.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let highs: Vec<Option<&(f64, Vector)>> = if upper_active {
        bounds.upper.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let finite =
        |g: &Option<&(f64, Vector)>| g.is_none_or(|(_, v)| v.iter().all(|c| c.is_finite()));
    if !lows.iter().all(finite) || !highs.iter().all(finite) {
        return None;
    }
    let mut pieces = Vec::new();
    for lo in &lows {
        for hi in &highs {
            let mut rows = Vec::new();
            if let Some((_, g)) = lo {
                // ȳ + g·(x − x̄) ≤ y  ⇔  (g, −1)·(x, y) ≤ g·x̄ − ȳ
                rows.push((concat(g, &Vector::from_element(1, -1.0)), g.dot(x) - y));
            }
            if let Some((_, g)) = hi {
                rows.push((concat(&-g, &Vector::from_element(1, 1.0)), y - g.dot(x)));
            }
            pieces.push(Piece::Polyhedron(
                Polyhedron::new(n + 1, rows).expect("same dimension"),
            ));
        }
    }
    PolyhedralUnion::new(n + 1, pieces).ok()
}

/// Graph of `∂φ` near `x̄` for `φ = max_i(a_i·x + b_i) + ½xᵀQx`: one piece per
/// nonempty subset `S` of the active indices, `{(x, v + Qx) | x in the
/// region where S is maximal, v ∈ co{a_i | i ∈ S}}`.
fn max_affine_graph(
    pieces: &[(Vector, f64)],
    quad: Option<&Matrix>,
    x: &Vector,
) -> Option<PolyhedralUnion> {
    let n = x.len();
    let vals: Vec<f64> = pieces.iter().map(|(a, b)| a.dot(x) + b).collect();
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let active: Vec<usize> = (0..pieces.len())
        .filter(|&i| top - vals[i] <= ACTIVE_TOL * (1.0 + top.abs()))
        .collect();
    let mut out = Vec::new();
    for k in 1..=active.len() {
        for sub in combinations(active.len(), k) {
            let s: Vec<usize> = sub.iter().map(|&i| active[i]).collect();
            let i0 = s[0];
            let (a0, b0) = &pieces[i0];
            let mut p = Polyhedron::whole(2 * n);
            for &i in &s[1..] {
                let (a, b) = &pieces[i];
                let row = concat(&(a - a0), &Vector::zeros(n));
                p = p.with_equality(row, b0 - b).ok()?;
            }
            let mut rows = Vec::new();
            for &j in &active {
                if s.contains(&j) {
                    continue;
                }
                let (a, b) = &pieces[j];
                rows.push((concat(&(a - a0), &Vector::zeros(n)), b0 - b));
            }
            let hull =
                convex_hull(&s.iter().map(|&i| pieces[i].0.clone()).collect::<Vec<_>>()).ok()?;
            for (c, d) in hull.to_polyhedron().rows() {
                rows.push((concat(&Vector::zeros(n), c), *d));
            }
            p = p.intersect(&Polyhedron::new(2 * n, rows).ok()?).ok()?;
            if let Some(q) = quad {
                // (x, w) ∈ graph ⇔ (x, w − Qx) ∈ p
                let mut m = Matrix::identity(2 * n, 2 * n);
                for r in 0..n {
                    for c in 0..n {
                        m[(n + r, c)] = -q[(r, c)];
                    }
                }
                p = p.affine_preimage(&m, &Vector::zeros(2 * n)).ok()?;
            }
            out.push(Piece::Polyhedron(p));
        }
    }
    PolyhedralUnion::new(2 * n, out).ok()
}

/// Random map: one structured integrand per node of a measure space.
#[derive(Debug, Clone)]
pub struct RandomMap {
    pub n: usize,
    pub m: usize,
    pub nodes: Vec<NodeMap>,
}

impl RandomMap {
    pub fn new(nodes: Vec<NodeMap>) -> Result<Self> {
        let first = nodes
            .first()
            .ok_or_else(|| Error::InvalidInput("random map without nodes".into()))?;
        let n = first.x_dim();
        let m = first.y_dim();
        for node in &nodes {
            check_dim(n, node.x_dim())?;
            check_dim(m, node.y_dim())?;
        }
        Ok(RandomMap { n, m, nodes })
    }

    /// The same integrand at every node of `space`.
    pub fn constant(node: NodeMap, space: &MeasureSpace) -> Result<Self> {
        Self::new(vec![node; space.len()])
    }

    pub fn check_space(&self, space: &MeasureSpace) -> Result<()> {
        if space.len() != self.nodes.len() {
            return Err(Error::DomainMismatch(format!(
                "{} integrands for {} nodes",
                self.nodes.len(),
                space.len()
            )));
        }
        Ok(())
    }

    pub fn is_max_affine(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| matches!(n, NodeMap::MaxAffine { .. }))
    }

    /// Standing assumptions on a ball: values exist, are bounded by κ(t),
    /// and nonatomic values are convex (constraint values are tested by
    /// midpoint feasibility between boundary samples). Returns κ per node.
    pub fn validate(&self, space: &MeasureSpace, xbar: &Vector, radius: f64) -> Result<Vec<f64>> {
        self.check_space(space)?;
        let mut kappa = vec![0.0f64; self.nodes.len()];
        let pts = ball_grid(xbar, radius, 2);
        for (k, (node, info)) in self.nodes.iter().zip(space.nodes()).enumerate() {
            for x in &pts {
                let Some(v) = node.value(x)? else { continue };
                let r = v.max_norm();
                if !r.is_finite() {
                    return Err(Error::Unbounded(format!(
                        "node {} at {:?}",
                        info.id,
                        x.as_slice()
                    )));
                }
                kappa[k] = kappa[k].max(r);
                if info.kind == NodeKind::NonatomicSample {
                    if let NodeMap::Constraint { g, system } = node {
                        let z = g.value(x);
                        let vs = v.vertices();
                        for i in 0..vs.len() {
                            let j = (i + vs.len() / 2) % vs.len();
                            let mid = (&vs[i] + &vs[j]) / 2.0;
                            if system.max_value(&z, &mid) > 1e-6 {
                                return Err(Error::InvalidInput(format!(
                                    "nonconvex value on nonatomic node {}",
                                    info.id
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(kappa)
    }
}

/// Grid of points in the box `x̄ ± r` with `2k+1` points per axis, filtered
/// to the Euclidean ball.
pub fn ball_grid(center: &Vector, r: f64, k: usize) -> Vec<Vector> {
    let n = center.len();
    let side = 2 * k + 1;
    let mut out = Vec::new();
    for idx in cartesian(&vec![side; n]) {
        let off = Vector::from_fn(n, |i, _| r * (idx[i] as f64 - k as f64) / k.max(1) as f64);
        if off.norm() <= r * (1.0 + 1e-12) {
            out.push(center + off);
        }
    }
    out
}

/// Aggregated local graph of `E_Φ` near `(x̄, ȳ)` when it is exactly
/// available: all nodes smooth or affine-image with constant `A` (any
/// dimension), all nodes interval-valued (m = 1), or all nodes maximum
/// functions (graph of the summed subgradient map).
pub fn expected_local_graph(
    map: &RandomMap,
    space: &MeasureSpace,
    x: &Vector,
    y: &Vector,
) -> Option<LocalGraph> {
    let w = space.weights();
    let n = map.n;
    let m = map.m;
    if map.is_max_affine() {
        // Σ_t w_t max_i(a_ti·x + b_ti) = max over index combinations.
        let mut combos: Vec<(Vector, f64)> = vec![(Vector::zeros(n), 0.0)];
        let mut q_total: Option<Matrix> = None;
        for (node, wt) in map.nodes.iter().zip(&w) {
            let NodeMap::MaxAffine { pieces, quad } = node else {
                unreachable!()
            };
            let vals: Vec<f64> = pieces.iter().map(|(a, b)| a.dot(x) + b).collect();
            let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let act: Vec<&(Vector, f64)> = pieces
                .iter()
                .zip(&vals)
                .filter(|(_, v)| top - **v <= ACTIVE_TOL * (1.0 + top.abs()))
                .map(|(p, _)| p)
                .collect();
            let mut next = Vec::new();
            for (ca, cb) in &combos {
                for (a, b) in &act {
                    next.push((ca + a * *wt, cb + b * *wt));
                }
            }
            combos = next;
            if let Some(q) = quad {
                q_total = Some(q_total.unwrap_or_else(|| Matrix::zeros(n, n)) + q * *wt);
            }
        }
        return Some(LocalGraph {
            union: max_affine_graph(&combos, q_total.as_ref(), x)?,
            n,
            m,
        });
    }
    let affine_form = map.nodes.iter().all(|node| match node {
        NodeMap::Smooth { .. } => true,
        NodeMap::AffineImage { a, .. } => a.is_constant(),
        _ => false,
    });
    if affine_form {
        let mut p: Option<Polytope> = None;
        let mut gv = Vector::zeros(m);
        let mut gj = Matrix::zeros(m, n);
        for (node, wt) in map.nodes.iter().zip(&w) {
            match node {
                NodeMap::Smooth { g } => {
                    gv += g.value(x) * *wt;
                    gj += g.jacobian(x)? * *wt;
                }
                NodeMap::AffineImage { a, b, f } => {
                    gv += b.value(x) * *wt;
                    gj += b.jacobian(x)? * *wt;
                    let s = f.map_linear(&a.eval(x)).ok()?.scale(*wt);
                    p = Some(match p {
                        None => s,
                        Some(prev) => {
                            crate::geometry::weighted_minkowski(&[(1.0, &prev), (1.0, &s)]).ok()?
                        }
                    });
                }
                _ => unreachable!(),
            }
        }
        let graph = match p {
            None => linear_graph(&gj, x, &gv),
            Some(p) => shifted_set_graph(&p, &gj, &gv, x),
        };
        return Some(LocalGraph {
            union: single(graph),
            n,
            m,
        });
    }
    if m == 1 {
        let per_node: Vec<IntervalBounds> = map
            .nodes
            .iter()
            .map(|node| node.interval_bounds(x))
            .collect::<Option<_>>()?;
        let mut agg = IntervalBounds::default();
        let mut lows = vec![(0.0, Vector::zeros(n))];
        let mut highs = vec![(0.0, Vector::zeros(n))];
        for (b, wt) in per_node.iter().zip(&w) {
            agg.lo += wt * b.lo;
            agg.hi += wt * b.hi;
            lows = combine(&lows, &b.lower, *wt);
            highs = combine(&highs, &b.upper, *wt);
        }
        agg.lower = lows;
        agg.upper = highs;
        return Some(LocalGraph {
            union: interval_graph(&agg, x, y[0])?,
            n,
            m,
        });
    }
    None
}

fn combine(acc: &[(f64, Vector)], terms: &[(f64, Vector)], w: f64) -> Vec<(f64, Vector)> {
    let mut out: Vec<(f64, Vector)> = Vec::new();
    for (v, g) in acc {
        for (tv, tg) in terms {
            let cand = (v + w * tv, g + tg * w);
            if !out.iter().any(|(_, h)| (h - &cand.1).amax() <= 1e-12) {
                out.push(cand);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{AffineMap, ExprScalar, ExprVector};
    use crate::linalg::vector;
    use crate::measure::MeasureNode;

    fn sqrt_node() -> NodeMap {
        NodeMap::AffineImage {
            a: MatrixField::Expr {
                rows: 1,
                cols: 1,
                entries: vec![Expr::parse("sqrt(abs(x)) + 1", &["x"]).unwrap()],
                n: 1,
            },
            b: Arc::new(AffineMap::linear(Matrix::zeros(1, 1))),
            f: Polytope::interval(0.0, 1.0),
        }
    }

    #[test]
    fn sqrt_values_and_bounds() {
        let node = sqrt_node();
        let v = node.value(&vector(&[4.0])).unwrap().unwrap();
        assert_eq!(v.bounds_1d(), (0.0, 3.0));
        let b = node.interval_bounds(&vector(&[0.0])).unwrap();
        assert_eq!(b.lower.len(), 1);
        assert_eq!(b.lower[0].1, vector(&[0.0]));
        // The upper bound has no derivative at 0.
        assert!(node.local_graph(&vector(&[0.0]), &vector(&[1.0])).is_none());
        let g = node.local_graph(&vector(&[0.0]), &vector(&[0.0])).unwrap();
        assert_eq!(g.union.pieces().len(), 1);
    }

    #[test]
    fn max_affine_values() {
        let node = NodeMap::MaxAffine {
            pieces: vec![(vector(&[1.0]), 0.0), (vector(&[-1.0]), 0.0)],
            quad: None,
        };
        assert_eq!(
            node.value(&vector(&[0.0])).unwrap().unwrap().bounds_1d(),
            (-1.0, 1.0)
        );
        assert_eq!(
            node.value(&vector(&[2.0])).unwrap().unwrap().bounds_1d(),
            (1.0, 1.0)
        );
        assert_eq!(node.scalar_value(&vector(&[-3.0])), Some(3.0));
        let g = node.local_graph(&vector(&[0.0]), &vector(&[0.3])).unwrap();
        assert_eq!(g.union.pieces().len(), 3);
        assert!(g.union.contains(&vector(&[0.0, 0.3]), 1e-12));
        assert!(g.union.contains(&vector(&[0.5, 1.0]), 1e-12));
        assert!(!g.union.contains(&vector(&[0.5, 0.3]), 1e-6));
    }

    #[test]
    fn constraint_feasible_interval() {
        let phi: ScalarFn = Arc::new(ExprScalar::parse("y - z - 1", &["z", "y"]).unwrap());
        let sys =
            ConstraintSystem::new(1, 1, vec![phi], (vector(&[-5.0]), vector(&[5.0]))).unwrap();
        let v = sys.feasible_set(&vector(&[0.5]), 16).unwrap().unwrap();
        let (lo, hi) = v.bounds_1d();
        assert!((lo + 5.0).abs() < 1e-9 && (hi - 1.5).abs() < 1e-9);
    }

    #[test]
    fn aggregated_interval_graph() {
        let space = MeasureSpace::new(vec![
            MeasureNode::atom("a", 1.0),
            MeasureNode::atom("b", 1.0),
        ])
        .unwrap();
        let up = NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(ExprVector::parse(&["x"], &["x"]).unwrap()),
            f: Polytope::interval(0.0, 1.0),
        };
        let down = NodeMap::AffineImage {
            a: MatrixField::Constant(Matrix::identity(1, 1)),
            b: Arc::new(ExprVector::parse(&["-x"], &["x"]).unwrap()),
            f: Polytope::interval(0.0, 1.0),
        };
        let map = RandomMap::new(vec![up, down]).unwrap();
        let g = expected_local_graph(&map, &space, &vector(&[0.0]), &vector(&[1.0])).unwrap();
        // E_Φ(x) = [0, 2], graph is a horizontal band; (0, 1) is interior.
        assert!(g.union.contains(&vector(&[5.0, 1.5]), 1e-12));
        assert!(!g.union.contains(&vector(&[0.0, 2.5]), 1e-6));
    }

    #[test]
    fn validate_reports_kappa() {
        let space = MeasureSpace::uniform(2, 1.0, NodeKind::NonatomicSample).unwrap();
        let map = RandomMap::constant(sqrt_node(), &space).unwrap();
        let kappa = map.validate(&space, &vector(&[0.0]), 1.0).unwrap();
        assert!((kappa[0] - 2.0).abs() < 1e-12);
    }
}
