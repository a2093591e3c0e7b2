use std::sync::OnceLock;

use crate::error::{check_dim, Result};
use crate::geometry::polytope::in_hull;
use crate::geometry::{lex_cmp, ConvexCone, PointSet, Polyhedron, Polytope};
use crate::linalg::{angle, columns_to_matrix, concat, nnls, ray_enumerate, unit, Matrix, Vector};

/// Possibly unbounded polyhedron `conv(points) + cone(rays)`; empty when it
/// has no points. Used for coderivative slices, which may be affine sets,
/// half-lines or empty.
#[derive(Debug, Clone)]
pub struct GeneratedSet {
    dim: usize,
    points: Vec<Vector>,
    rays: Vec<Vector>,
    hrep: OnceLock<Polyhedron>,
}

impl PartialEq for GeneratedSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.rays == other.rays
    }
}

impl GeneratedSet {
    pub fn empty(dim: usize) -> Self {
        GeneratedSet {
            dim,
            points: Vec::new(),
            rays: Vec::new(),
            hrep: OnceLock::new(),
        }
    }

    /// Builds the set and drops redundant points and rays.
    pub fn new(dim: usize, points: Vec<Vector>, rays: Vec<Vector>) -> Result<Self> {
        for v in points.iter().chain(rays.iter()) {
            check_dim(dim, v.len())?;
        }
        Ok(Self::from_parts(dim, points, rays))
    }

    pub(crate) fn from_parts(dim: usize, points: Vec<Vector>, rays: Vec<Vector>) -> Self {
        if points.is_empty() {
            return Self::empty(dim);
        }
        let rays = reduce_rays(dim, rays);
        let points = reduce_points(dim, points, &rays);
        GeneratedSet {
            dim,
            points,
            rays,
            hrep: OnceLock::new(),
        }
    }

    pub fn singleton(p: Vector) -> Self {
        let d = p.len();
        Self::from_parts(d, vec![p], Vec::new())
    }

    pub fn whole(dim: usize) -> Self {
        ConvexCone::whole(dim).to_generated()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn rays(&self) -> &[Vector] {
        &self.rays
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn recession_cone(&self) -> ConvexCone {
        ConvexCone::new(self.dim, self.rays.clone(), Vec::new()).expect("same dimension")
    }

    pub fn to_polytope(&self) -> Option<Polytope> {
        if self.is_empty() || !self.is_bounded() {
            return None;
        }
        Polytope::new(self.points.clone()).ok()
    }

    /// Largest point norm; infinite when unbounded, `None` when empty.
    pub fn max_norm(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else if !self.is_bounded() {
            Some(f64::INFINITY)
        } else {
            Some(self.points.iter().map(|p| p.norm()).fold(0.0, f64::max))
        }
    }

    pub fn scale(&self, w: f64) -> GeneratedSet {
        let pts = self.points.iter().map(|p| p * w).collect();
        let rays = if w >= 0.0 {
            self.rays.clone()
        } else {
            self.rays.iter().map(|r| -r).collect()
        };
        Self::from_parts(self.dim, pts, rays)
    }

    pub fn translate(&self, t: &Vector) -> GeneratedSet {
        Self::from_parts(
            self.dim,
            self.points.iter().map(|p| p + t).collect(),
            self.rays.clone(),
        )
    }

    pub fn minkowski_sum(&self, other: &GeneratedSet) -> Result<GeneratedSet> {
        check_dim(self.dim, other.dim)?;
        if self.is_empty() || other.is_empty() {
            return Ok(Self::empty(self.dim));
        }
        let mut pts = Vec::with_capacity(self.points.len() * other.points.len());
        for a in &self.points {
            for b in &other.points {
                pts.push(a + b);
            }
        }
        let mut rays = self.rays.clone();
        rays.extend(other.rays.iter().cloned());
        Ok(Self::from_parts(self.dim, pts, rays))
    }

    pub fn map_linear(&self, a: &Matrix) -> Result<GeneratedSet> {
        check_dim(a.ncols(), self.dim)?;
        Ok(Self::from_parts(
            a.nrows(),
            self.points.iter().map(|p| a * p).collect(),
            self.rays.iter().map(|r| a * r).collect(),
        ))
    }

    /// H-representation through the polar of the homogenized cone
    /// `cone{(p, 1), (r, 0)}`.
    pub fn to_polyhedron(&self) -> Polyhedron {
        self.hrep
            .get_or_init(|| {
                if self.is_empty() {
                    return Polyhedron::new(self.dim, vec![(Vector::zeros(self.dim), -1.0)])
                        .expect("valid rows");
                }
                let one = Vector::from_element(1, 1.0);
                let zero = Vector::from_element(1, 0.0);
                let mut gens: Vec<Vector> = self.points.iter().map(|p| concat(p, &one)).collect();
                gens.extend(self.rays.iter().map(|r| concat(r, &zero)));
                let polar = ray_enumerate(&gens, &[], self.dim + 1);
                let mut rows = Vec::new();
                for r in &polar.rays {
                    let a = r.rows(0, self.dim).into_owned();
                    rows.push((a, -r[self.dim]));
                }
                for l in &polar.lineality {
                    let a = l.rows(0, self.dim).into_owned();
                    rows.push((a.clone(), -l[self.dim]));
                    rows.push((-a, l[self.dim]));
                }
                Polyhedron::new(self.dim, rows).expect("valid rows")
            })
            .clone()
    }

    /// Largest distance from a point of `self` to `other`; infinite when the
    /// recession cone of `self` is not inside that of `other`.
    pub fn excess_over(&self, other: &GeneratedSet) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        if other.is_empty() {
            return f64::INFINITY;
        }
        let rc = other.recession_cone();
        if self.rays.iter().any(|r| !rc.contains(r, 1e-9)) {
            return f64::INFINITY;
        }
        self.points
            .iter()
            .map(|p| other.distance(p))
            .fold(0.0, f64::max)
    }

    pub fn hausdorff(&self, other: &GeneratedSet) -> f64 {
        if self.is_empty() && other.is_empty() {
            return 0.0;
        }
        self.excess_over(other).max(other.excess_over(self))
    }

    /// Bounded sample of the set: the points plus each point pushed along each
    /// ray by the given step lengths.
    pub fn samples(&self, steps: &[f64]) -> Vec<Vector> {
        let mut out = self.points.clone();
        for p in &self.points {
            for r in &self.rays {
                for s in steps {
                    out.push(p + r * *s);
                }
            }
        }
        out
    }
}

impl PointSet for GeneratedSet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Vector) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        if self.rays.is_empty() && self.points.len() == 1 {
            return (x - &self.points[0]).norm();
        }
        if self.dim == 1 || self.rays.is_empty() && self.dim <= 2 {
            if let Some(p) = self.to_polytope() {
                return p.distance(x);
            }
        }
        self.to_polyhedron().distance(x)
    }
}

fn reduce_rays(dim: usize, rays: Vec<Vector>) -> Vec<Vector> {
    let mut rs: Vec<Vector> = Vec::new();
    for r in rays.iter().filter_map(unit) {
        if !rs.iter().any(|q| angle(q, &r) < 1e-8) {
            rs.push(r);
        }
    }
    rs.sort_by(lex_cmp);
    let mut i = 0;
    while i < rs.len() && rs.len() > 1 {
        let others: Vec<Vector> = rs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.clone())
            .collect();
        let (_, res) = nnls(&columns_to_matrix(&others, dim), &rs[i]);
        // A ray in the cone of the others is redundant unless it would leave
        // a line behind; lines stay represented by both opposite rays.
        if res <= 1e-10 {
            rs.remove(i);
        } else {
            i += 1;
        }
    }
    rs
}

fn reduce_points(dim: usize, points: Vec<Vector>, rays: &[Vector]) -> Vec<Vector> {
    let scale = points.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let mut pts: Vec<Vector> = Vec::new();
    let mut sorted = points;
    sorted.sort_by(lex_cmp);
    for p in sorted {
        if !pts.iter().any(|q| (q - &p).amax() <= 1e-12 * scale) {
            pts.push(p);
        }
    }
    if pts.len() == 1 {
        return pts;
    }
    if rays.is_empty() && dim <= 2 {
        return Polytope::new(pts).expect("nonempty").vertices().to_vec();
    }
    let zero = Vector::from_element(1, 0.0);
    let mut i = 0;
    while i < pts.len() && pts.len() > 1 {
        let others: Vec<Vector> = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v.clone())
            .collect();
        let inside = if rays.is_empty() {
            in_hull(&pts[i], &others, 1e-10 * scale)
        } else {
            let one = Vector::from_element(1, 1.0);
            let mut cols: Vec<Vector> = others.iter().map(|q| concat(q, &one)).collect();
            cols.extend(rays.iter().map(|r| concat(r, &zero)));
            let (_, res) = nnls(&columns_to_matrix(&cols, dim + 1), &concat(&pts[i], &one));
            res <= 1e-10 * scale
        };
        if inside {
            pts.remove(i);
        } else {
            i += 1;
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector;

    #[test]
    fn halfline_distance_and_hrep() {
        let s = GeneratedSet::new(1, vec![vector(&[1.0])], vec![vector(&[-1.0])]).unwrap();
        assert_eq!(s.distance(&vector(&[-5.0])), 0.0);
        assert!((s.distance(&vector(&[3.0])) - 2.0).abs() < 1e-12);
        assert!(s.contains(&vector(&[1.0]), 0.0));
    }

    #[test]
    fn line_is_kept_with_opposite_rays() {
        let s = GeneratedSet::new(
            2,
            vec![vector(&[0.0, 0.0])],
            vec![vector(&[1.0, 0.0]), vector(&[-1.0, 0.0])],
        )
        .unwrap();
        assert_eq!(s.rays().len(), 2);
        assert!((s.distance(&vector(&[100.0, 2.0])) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn hausdorff_of_unbounded_sets() {
        let a = GeneratedSet::new(1, vec![vector(&[0.0])], vec![vector(&[1.0])]).unwrap();
        let b = GeneratedSet::new(1, vec![vector(&[1.0])], vec![vector(&[1.0])]).unwrap();
        let c = GeneratedSet::singleton(vector(&[0.0]));
        assert!((a.hausdorff(&b) - 1.0).abs() < 1e-12);
        assert_eq!(a.hausdorff(&c), f64::INFINITY);
        assert_eq!(
            GeneratedSet::empty(1).hausdorff(&GeneratedSet::empty(1)),
            0.0
        );
    }

    #[test]
    fn redundant_points_dropped_along_rays() {
        let s = GeneratedSet::new(
            1,
            vec![vector(&[0.0]), vector(&[2.0])],
            vec![vector(&[1.0])],
        )
        .unwrap();
        assert_eq!(s.points(), &[vector(&[0.0])]);
    }
}
