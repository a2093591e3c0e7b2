use crate::error::{check_dim, Error, Result};
use crate::geometry::{GeneratedSet, PointSet, Polyhedron};
use crate::linalg::{columns_to_matrix, concat, least_squares, nnls, Matrix, Vector};

/// Tolerance for dropping points inside the hull of the others.
pub const HULL_TOL: f64 = 1e-10;

/// Compact convex set given by its vertices (V-representation).
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<Vector>,
}

impl Polytope {
    pub fn new(points: Vec<Vector>) -> Result<Self> {
        convex_hull(&points)
    }

    pub fn point(p: Vector) -> Self {
        Polytope {
            dim: p.len(),
            vertices: vec![p],
        }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let vertices = if hi - lo <= HULL_TOL * (1.0 + lo.abs().max(hi.abs())) {
            vec![Vector::from_element(1, lo)]
        } else {
            vec![Vector::from_element(1, lo), Vector::from_element(1, hi)]
        };
        Polytope { dim: 1, vertices }
    }

    /// Axis-aligned box `[lo_i, hi_i]`.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        let d = lo.len();
        let mut pts = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            pts.push(Vector::from_fn(d, |i, _| {
                if mask & (1 << i) == 0 {
                    lo[i]
                } else {
                    hi[i]
                }
            }));
        }
        convex_hull(&pts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vector] {
        &self.vertices
    }

    pub fn is_singleton(&self) -> bool {
        self.vertices.len() == 1
    }

    /// `[min, max]` of a one-dimensional polytope.
    pub fn bounds_1d(&self) -> (f64, f64) {
        let lo = self
            .vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .vertices
            .iter()
            .map(|v| v[0])
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn centroid(&self) -> Vector {
        let mut c = Vector::zeros(self.dim);
        for v in &self.vertices {
            c += v;
        }
        c / self.vertices.len() as f64
    }

    pub fn support(&self, d: &Vector) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(d))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&self, w: f64) -> Polytope {
        let pts: Vec<Vector> = self.vertices.iter().map(|v| v * w).collect();
        if w > 0.0 {
            Polytope {
                dim: self.dim,
                vertices: pts,
            }
        } else {
            convex_hull(&pts).expect("nonempty")
        }
    }

    pub fn translate(&self, t: &Vector) -> Polytope {
        Polytope {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v + t).collect(),
        }
    }

    /// Image under `x ↦ a x`.
    pub fn map_linear(&self, a: &Matrix) -> Result<Polytope> {
        check_dim(a.ncols(), self.dim)?;
        convex_hull(&self.vertices.iter().map(|v| a * v).collect::<Vec<_>>())
    }

    pub fn max_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn to_generated(&self) -> GeneratedSet {
        GeneratedSet::from_parts(self.dim, self.vertices.clone(), Vec::new())
    }

    pub fn to_polyhedron(&self) -> Polyhedron {
        if self.dim == 1 {
            let (lo, hi) = self.bounds_1d();
            return Polyhedron::new(
                1,
                vec![
                    (Vector::from_element(1, 1.0), hi),
                    (Vector::from_element(1, -1.0), -lo),
                ],
            )
            .expect("valid rows");
        }
        self.to_generated().to_polyhedron()
    }

    pub fn project(&self, x: &Vector) -> Vector {
        match self.dim {
            1 => {
                let (lo, hi) = self.bounds_1d();
                Vector::from_element(1, x[0].clamp(lo, hi))
            }
            2 => project_polygon(&self.vertices, x),
            _ => {
                let shifted: Vec<Vector> = self.vertices.iter().map(|v| v - x).collect();
                min_norm_point(&shifted) + x
            }
        }
    }
}

impl PointSet for Polytope {
    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Vector) -> f64 {
        (self.project(x) - x).norm()
    }
}

fn scale_of(points: &[Vector]) -> f64 {
    points.iter().map(|p| p.amax()).fold(1.0, f64::max)
}

/// Canonical V-representation of the hull of `points`.
pub fn convex_hull(points: &[Vector]) -> Result<Polytope> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("convex hull of an empty point list".into()))?;
    let dim = first.len();
    for p in points {
        check_dim(dim, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("polytope vertex".into()));
        }
    }
    let scale = scale_of(points);
    let vertices = match dim {
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[0])
                .fold(f64::NEG_INFINITY, f64::max);
            return Ok(Polytope::interval(lo, hi));
        }
        2 => monotone_chain(points, scale),
        _ => eliminate_interior(points, scale),
    };
    Ok(Polytope { dim, vertices })
}

fn lex_cmp(a: &Vector, b: &Vector) -> std::cmp::Ordering {
    for i in 0..a.len() {
        match a[i].partial_cmp(&b[i]).unwrap_or(std::cmp::Ordering::Equal) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn dedupe(points: &[Vector], scale: f64) -> Vec<Vector> {
    let mut pts: Vec<Vector> = points.to_vec();
    pts.sort_by(lex_cmp);
    let mut out: Vec<Vector> = Vec::with_capacity(pts.len());
    for p in pts {
        if !out.iter().any(|q| (q - &p).amax() <= 1e-12 * scale) {
            out.push(p);
        }
    }
    out
}

fn cross(o: &Vector, a: &Vector, b: &Vector) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull without collinear points.
fn monotone_chain(points: &[Vector], scale: f64) -> Vec<Vector> {
    let pts = dedupe(points, scale);
    if pts.len() <= 2 {
        return pts;
    }
    let eps = HULL_TOL * scale * scale;
    let mut lower: Vec<Vector> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps
        {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vector> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps
        {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.is_empty() {
        return vec![pts[0].clone()];
    }
    lower
}

/// Whether `p` lies in the hull of `others`, decided by nonnegative least squares
/// on the homogenized points.
pub(crate) fn in_hull(p: &Vector, others: &[Vector], tol: f64) -> bool {
    if others.is_empty() {
        return false;
    }
    let cols: Vec<Vector> = others
        .iter()
        .map(|q| concat(q, &Vector::from_element(1, 1.0)))
        .collect();
    let a = columns_to_matrix(&cols, p.len() + 1);
    let (_, r) = nnls(&a, &concat(p, &Vector::from_element(1, 1.0)));
    r <= tol
}

fn eliminate_interior(points: &[Vector], scale: f64) -> Vec<Vector> {
    let mut pts = dedupe(points, scale);
    let mut i = 0;
    while i < pts.len() && pts.len() > 1 {
        let others: Vec<Vector> = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.clone())
            .collect();
        if in_hull(&pts[i], &others, HULL_TOL * scale) {
            pts.remove(i);
        } else {
            i += 1;
        }
    }
    pts
}

fn project_segment(a: &Vector, b: &Vector, x: &Vector) -> Vector {
    let d = b - a;
    let dd = d.dot(&d);
    if dd == 0.0 {
        return a.clone();
    }
    let t = ((x - a).dot(&d) / dd).clamp(0.0, 1.0);
    a + d * t
}

fn project_polygon(vs: &[Vector], x: &Vector) -> Vector {
    match vs.len() {
        1 => return vs[0].clone(),
        2 => return project_segment(&vs[0], &vs[1], x),
        _ => {}
    }
    let n = vs.len();
    if (0..n).all(|i| cross(&vs[i], &vs[(i + 1) % n], x) >= 0.0) {
        return x.clone();
    }
    let mut best = vs[0].clone();
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let p = project_segment(&vs[i], &vs[(i + 1) % n], x);
        let d = (&p - x).norm();
        if d < best_d {
            best_d = d;
            best = p;
        }
    }
    best
}

/// Wolfe's algorithm for the minimum-norm point of `conv(points)`.
pub(crate) fn min_norm_point(points: &[Vector]) -> Vector {
    let scale = points
        .iter()
        .map(|p| p.norm_squared())
        .fold(0.0, f64::max)
        .max(1e-300);
    let eps = 1e-13 * scale;
    let start = (0..points.len())
        .min_by(|&i, &j| points[i].norm().partial_cmp(&points[j].norm()).unwrap())
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..(50 * points.len() + 50) {
        let j = (0..points.len())
            .min_by(|&i, &k| points[i].dot(&x).partial_cmp(&points[k].dot(&x)).unwrap())
            .unwrap();
        if x.dot(&x) - x.dot(&points[j]) <= eps || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        loop {
            let alpha = affine_minimizer(points, &active);
            if alpha.iter().all(|a| *a > 1e-14) {
                lambda = alpha;
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lambda.iter_mut().zip(&alpha) {
                *l = theta * a + (1.0 - theta) * *l;
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= 1e-14 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            if active.len() <= 1 {
                if active.is_empty() {
                    active.push(j);
                }
                lambda = vec![1.0];
                break;
            }
        }
        x = Vector::zeros(points[0].len());
        for (k, &i) in active.iter().enumerate() {
            x += &points[i] * lambda[k];
        }
    }
    x
}

/// Minimizer of ‖Σ α_i p_i‖ subject to Σ α_i = 1 (no sign constraint).
fn affine_minimizer(points: &[Vector], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut m = Matrix::zeros(k + 1, k + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            m[(a, b)] = points[i].dot(&points[j]);
        }
        m[(a, k)] = 1.0;
        m[(k, a)] = 1.0;
    }
    let mut rhs = Vector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = least_squares(&m, &rhs);
    sol.iter().take(k).copied().collect()
}

/// Minkowski sum Σ w_i S_i of scaled polytopes.
pub fn weighted_minkowski(terms: &[(f64, &Polytope)]) -> Result<Polytope> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidInput("empty Minkowski sum".into()))?;
    let dim = first.1.dim();
    let mut acc: Vec<Vector> = vec![Vector::zeros(dim)];
    for (w, body) in terms {
        check_dim(dim, body.dim())?;
        if w.is_nan() || *w <= 0.0 {
            return Err(Error::InvalidInput(format!("non-positive weight {w}")));
        }
        let mut next = Vec::with_capacity(acc.len() * body.vertices().len());
        for a in &acc {
            for v in body.vertices() {
                next.push(a + v * *w);
            }
        }
        // Canonicalize after each term to keep the candidate set small.
        acc = convex_hull(&next)?.vertices;
    }
    convex_hull(&acc)
}

/// One-sided excess sup_{a∈A} dist(a, B); attained at a vertex of A.
pub fn excess(a: &Polytope, b: &Polytope) -> f64 {
    a.vertices()
        .iter()
        .map(|v| b.distance(v))
        .fold(0.0, f64::max)
}

/// Pompeiu–Hausdorff distance with `dist(x, ∅) = ∞`.
pub fn hausdorff_distance(a: Option<&Polytope>, b: Option<&Polytope>) -> Result<f64> {
    match (a, b) {
        (None, None) => Ok(0.0),
        (None, Some(_)) | (Some(_), None) => Ok(f64::INFINITY),
        (Some(a), Some(b)) => {
            check_dim(a.dim(), b.dim())?;
            Ok(excess(a, b).max(excess(b, a)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector;
    use approx::assert_relative_eq;

    fn square() -> Polytope {
        Polytope::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn interval_sum() {
        let a = Polytope::interval(0.0, 1.0);
        let b = Polytope::interval(2.0, 3.0);
        let s = weighted_minkowski(&[(1.0, &a), (1.0, &b)]).unwrap();
        assert_eq!(s.bounds_1d(), (2.0, 4.0));
    }

    #[test]
    fn scaled_singleton() {
        let p = Polytope::point(vector(&[0.0, 0.0]));
        let s = weighted_minkowski(&[(2.0, &p)]).unwrap();
        assert_eq!(s.vertices(), &[vector(&[0.0, 0.0])]);
    }

    #[test]
    fn square_plus_square() {
        let s = weighted_minkowski(&[(1.0, &square()), (1.0, &square())]).unwrap();
        let expected = Polytope::boxed(&[0.0, 0.0], &[2.0, 2.0]).unwrap();
        assert_eq!(hausdorff_distance(Some(&s), Some(&expected)).unwrap(), 0.0);
        assert_eq!(s.vertices().len(), 4);
    }

    #[test]
    fn hull_drops_center_and_collinear() {
        let mut pts = square().vertices().to_vec();
        pts.push(vector(&[0.5, 0.5]));
        pts.push(vector(&[0.5, 0.0]));
        assert_eq!(convex_hull(&pts).unwrap().vertices().len(), 4);
        let h = convex_hull(&[vector(&[1.0]), vector(&[-1.0])]).unwrap();
        assert_eq!(h.bounds_1d(), (-1.0, 1.0));
        let p = convex_hull(&[vector(&[3.0, 4.0])]).unwrap();
        assert!(p.is_singleton());
    }

    #[test]
    fn hull_in_three_dimensions() {
        let cube = Polytope::boxed(&[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(cube.vertices().len(), 8);
        let mut pts = cube.vertices().to_vec();
        pts.push(vector(&[0.5, 0.5, 0.5]));
        pts.push(vector(&[0.5, 0.5, 1.0]));
        assert_eq!(convex_hull(&pts).unwrap().vertices().len(), 8);
    }

    #[test]
    fn hausdorff_examples() {
        let a = Polytope::interval(0.0, 1.0);
        let b = Polytope::interval(0.0, 2.0);
        assert_eq!(hausdorff_distance(Some(&a), Some(&b)).unwrap(), 1.0);
        assert_eq!(hausdorff_distance(Some(&a), Some(&a)).unwrap(), 0.0);
        let o = Polytope::point(vector(&[0.0, 0.0]));
        assert_relative_eq!(
            hausdorff_distance(Some(&square()), Some(&o)).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(hausdorff_distance(Some(&a), None).unwrap(), f64::INFINITY);
        assert!(hausdorff_distance(Some(&a), Some(&o)).is_err());
    }

    #[test]
    fn projection_three_dimensional() {
        let cube = Polytope::boxed(&[0.0; 3], &[1.0; 3]).unwrap();
        assert_relative_eq!(
            cube.distance(&vector(&[2.0, 2.0, 2.0])),
            3f64.sqrt(),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            cube.distance(&vector(&[0.5, 0.5, 3.0])),
            2.0,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            cube.distance(&vector(&[0.5, 0.2, 0.7])),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn distance_to_interval() {
        assert_eq!(Polytope::interval(0.0, 1.0).distance(&vector(&[2.0])), 1.0);
        assert_eq!(Polytope::interval(0.0, 1.0).distance(&vector(&[0.5])), 0.0);
    }
}
