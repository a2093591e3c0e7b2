use crate::error::{check_dim, Error, Result};
use crate::geometry::{GeneratedSet, PointSet};
use crate::linalg::{
    combinations, concat, least_squares, ray_enumerate, rows_to_matrix, Matrix, Vector,
};

/// `{x | a_j·x ≤ b_j ∀j}` with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    rows: Vec<(Vector, f64)>,
    empty: bool,
}

impl Polyhedron {
    /// Rows are rescaled to unit normals. Zero-normal rows mark the empty set
    /// when their offset is negative and are dropped otherwise.
    pub fn new(dim: usize, rows: Vec<(Vector, f64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        let mut empty = false;
        for (a, b) in rows {
            check_dim(dim, a.len())?;
            if !b.is_finite() && b != f64::INFINITY {
                return Err(Error::NonFinite("polyhedron offset".into()));
            }
            let n = a.norm();
            if !n.is_finite() {
                return Err(Error::NonFinite("polyhedron normal".into()));
            }
            if n <= 1e-14 {
                if b < -1e-12 {
                    empty = true;
                }
                continue;
            }
            if b == f64::INFINITY {
                continue;
            }
            out.push((a / n, b / n));
        }
        Ok(Polyhedron {
            dim,
            rows: out,
            empty,
        })
    }

    pub fn whole(dim: usize) -> Self {
        Polyhedron {
            dim,
            rows: Vec::new(),
            empty: false,
        }
    }

    /// `{x | a·x ≤ b}`.
    pub fn halfspace(a: Vector, b: f64) -> Result<Self> {
        let d = a.len();
        Self::new(d, vec![(a, b)])
    }

    /// Adds `a·x = b` as two opposite rows.
    pub fn with_equality(mut self, a: Vector, b: f64) -> Result<Self> {
        let extra = Polyhedron::new(self.dim, vec![(a.clone(), b), (-a, -b)])?;
        self.empty |= extra.empty;
        self.rows.extend(extra.rows);
        Ok(self)
    }

    pub fn rows(&self) -> &[(Vector, f64)] {
        &self.rows
    }

    pub fn is_marked_empty(&self) -> bool {
        self.empty
    }

    pub fn intersect(&self, other: &Polyhedron) -> Result<Polyhedron> {
        check_dim(self.dim, other.dim)?;
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(Polyhedron {
            dim: self.dim,
            rows,
            empty: self.empty || other.empty,
        })
    }

    pub fn translate(&self, t: &Vector) -> Polyhedron {
        Polyhedron {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|(a, b)| (a.clone(), b + a.dot(t)))
                .collect(),
            empty: self.empty,
        }
    }

    /// Indices of rows with |a·x − b| ≤ tol.
    pub fn active_rows(&self, x: &Vector, tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| (a.dot(x) - b).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_violation(&self, x: &Vector) -> f64 {
        if self.empty {
            return f64::INFINITY;
        }
        self.rows
            .iter()
            .map(|(a, b)| a.dot(x) - b)
            .fold(0.0, f64::max)
    }

    fn offset_scale(&self, x: &Vector) -> f64 {
        1.0 + x.amax() + self.rows.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max)
    }

    /// Euclidean projection by enumeration of KKT active sets with linearly
    /// independent normals. `None` means the polyhedron is empty.
    pub fn project(&self, x: &Vector) -> Option<Vector> {
        if self.empty {
            return None;
        }
        let eps = 1e-10 * self.offset_scale(x);
        if self.max_violation(x) <= eps {
            return Some(x.clone());
        }
        let m = self.rows.len();
        let mut fallback: Option<(f64, Vector)> = None;
        for s in 1..=self.dim.min(m) {
            for subset in combinations(m, s) {
                let a = rows_to_matrix(
                    &subset
                        .iter()
                        .map(|&i| self.rows[i].0.clone())
                        .collect::<Vec<_>>(),
                    self.dim,
                );
                let gram = &a * a.transpose();
                let Some(inv) = gram.clone().try_inverse() else {
                    continue;
                };
                if gram.determinant().abs() < 1e-12 {
                    continue;
                }
                let r = Vector::from_iterator(
                    s,
                    subset
                        .iter()
                        .map(|&i| self.rows[i].0.dot(x) - self.rows[i].1),
                );
                let mu = inv * r;
                if mu.iter().any(|v| *v < -eps) {
                    continue;
                }
                let y = x - a.transpose() * mu;
                let viol = self.max_violation(&y);
                if viol <= eps {
                    return Some(y);
                }
                if viol <= 1e-6 * self.offset_scale(x)
                    && fallback.as_ref().is_none_or(|(v, _)| viol < *v)
                {
                    fallback = Some((viol, y));
                }
            }
        }
        fallback.map(|(_, y)| y)
    }

    /// Vertices, extreme rays and lines via the homogenized cone
    /// `{(x, s) | a·x − b s ≤ 0, s ≥ 0}`.
    pub fn to_generated(&self) -> GeneratedSet {
        if self.empty {
            return GeneratedSet::empty(self.dim);
        }
        let mut ineq: Vec<Vector> = self
            .rows
            .iter()
            .map(|(a, b)| concat(a, &Vector::from_element(1, -b)))
            .collect();
        let mut s_row = Vector::zeros(self.dim + 1);
        s_row[self.dim] = -1.0;
        ineq.push(s_row);
        let g = ray_enumerate(&ineq, &[], self.dim + 1);
        let mut points = Vec::new();
        let mut rays = Vec::new();
        for r in &g.rays {
            let s = r[self.dim];
            let x = r.rows(0, self.dim).into_owned();
            if s > 1e-12 {
                points.push(x / s);
            } else if x.norm() > 1e-12 {
                rays.push(x);
            }
        }
        for l in &g.lineality {
            let x = l.rows(0, self.dim).into_owned();
            if x.norm() > 1e-12 {
                rays.push(x.clone());
                rays.push(-x);
            }
        }
        if points.is_empty() {
            return GeneratedSet::empty(self.dim);
        }
        GeneratedSet::from_parts(self.dim, points, rays)
    }

    /// Preimage `{x | m x + c ∈ P}`.
    pub fn affine_preimage(&self, m: &Matrix, c: &Vector) -> Result<Polyhedron> {
        check_dim(self.dim, m.nrows())?;
        let rows = self
            .rows
            .iter()
            .map(|(a, b)| (m.transpose() * a, b - a.dot(c)))
            .collect();
        let mut p = Polyhedron::new(m.ncols(), rows)?;
        p.empty |= self.empty;
        Ok(p)
    }

    /// Least-squares point satisfying every row with equality (used for
    /// building base points on lower-dimensional faces).
    pub fn face_point(&self, idx: &[usize]) -> Vector {
        let a = rows_to_matrix(
            &idx.iter()
                .map(|&i| self.rows[i].0.clone())
                .collect::<Vec<_>>(),
            self.dim,
        );
        let b = Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.rows[i].1));
        least_squares(&a, &b)
    }
}

impl PointSet for Polyhedron {
    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Vector) -> f64 {
        match self.project(x) {
            Some(y) => (y - x).norm(),
            None => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector;
    use approx::assert_relative_eq;

    #[test]
    fn halfplane_distance() {
        let p = Polyhedron::halfspace(vector(&[1.0, 0.0]), 0.0).unwrap();
        assert_relative_eq!(p.distance(&vector(&[1.0, 1.0])), 1.0);
        assert_eq!(p.distance(&vector(&[-1.0, 1.0])), 0.0);
    }

    #[test]
    fn corner_projection() {
        let p = Polyhedron::new(
            2,
            vec![(vector(&[1.0, 0.0]), 0.0), (vector(&[0.0, 1.0]), 0.0)],
        )
        .unwrap();
        assert_relative_eq!(p.distance(&vector(&[3.0, 4.0])), 5.0, epsilon = 1e-12);
        assert_relative_eq!(p.distance(&vector(&[3.0, -4.0])), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_marking() {
        let p = Polyhedron::new(1, vec![(vector(&[0.0]), -1.0)]).unwrap();
        assert!(p.is_marked_empty());
        assert_eq!(p.distance(&vector(&[0.0])), f64::INFINITY);
        let q = Polyhedron::new(1, vec![(vector(&[1.0]), 0.0), (vector(&[-1.0]), -1.0)]).unwrap();
        assert_eq!(q.distance(&vector(&[0.0])), f64::INFINITY);
        assert!(q.to_generated().is_empty());
        let r = Polyhedron::new(1, vec![(vector(&[0.0]), 1.0)]).unwrap();
        assert!(r.rows().is_empty());
    }

    #[test]
    fn vertex_enumeration_of_square_and_halfplane() {
        let sq = Polyhedron::new(
            2,
            vec![
                (vector(&[1.0, 0.0]), 1.0),
                (vector(&[-1.0, 0.0]), 0.0),
                (vector(&[0.0, 1.0]), 1.0),
                (vector(&[0.0, -1.0]), 0.0),
            ],
        )
        .unwrap();
        let g = sq.to_generated();
        assert_eq!(g.points().len(), 4);
        assert!(g.rays().is_empty());
        let hp = Polyhedron::halfspace(vector(&[0.0, 1.0]), 1.0).unwrap();
        let g = hp.to_generated();
        assert_eq!(g.points().len(), 1);
        assert!(g.contains(&vector(&[100.0, -50.0]), 1e-9));
        assert!(!g.contains(&vector(&[0.0, 2.0]), 1e-9));
    }
}
