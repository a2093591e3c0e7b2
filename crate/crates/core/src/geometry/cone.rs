use crate::error::{check_dim, Result};
use crate::geometry::{GeneratedSet, PointSet};
use crate::linalg::{
    angle, columns_to_matrix, nnls, nullspace, rank, ray_enumerate, rows_to_matrix, unit, Matrix,
    Vector,
};

/// Angular tolerance for merging generators.
pub const GENERATOR_ANGLE_TOL: f64 = 1e-8;

/// `{Σ λ_i g_i + Σ τ_k u_k | λ ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCone {
    dim: usize,
    generators: Vec<Vector>,
    lineality: Vec<Vector>,
}

impl ConvexCone {
    /// Builds the cone and reduces it to extreme rays plus an orthonormal
    /// lineality basis.
    pub fn new(dim: usize, generators: Vec<Vector>, lineality: Vec<Vector>) -> Result<Self> {
        for g in generators.iter().chain(lineality.iter()) {
            check_dim(dim, g.len())?;
        }
        let raw = ConvexCone {
            dim,
            generators: generators.iter().filter_map(unit).collect(),
            lineality: lineality.iter().filter_map(unit).collect(),
        };
        Ok(raw.canonical())
    }

    pub fn zero(dim: usize) -> Self {
        ConvexCone {
            dim,
            generators: Vec::new(),
            lineality: Vec::new(),
        }
    }

    pub fn whole(dim: usize) -> Self {
        ConvexCone {
            dim,
            generators: Vec::new(),
            lineality: (0..dim)
                .map(|i| Vector::from_fn(dim, |j, _| if i == j { 1.0 } else { 0.0 }))
                .collect(),
        }
    }

    pub fn ray(v: Vector) -> Self {
        let d = v.len();
        ConvexCone::new(d, vec![v], Vec::new()).expect("same dimension")
    }

    /// Cone given by `{h | a·h ≤ 0 ∀ a ∈ ineq, e·h = 0 ∀ e ∈ eq}`.
    pub fn from_constraints(dim: usize, ineq: &[Vector], eq: &[Vector]) -> ConvexCone {
        let g = ray_enumerate(ineq, eq, dim);
        ConvexCone {
            dim,
            generators: g.rays,
            lineality: g.lineality,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vector] {
        &self.generators
    }

    pub fn lineality(&self) -> &[Vector] {
        &self.lineality
    }

    pub fn is_zero(&self) -> bool {
        self.generators.is_empty() && self.lineality.is_empty()
    }

    pub fn is_whole(&self) -> bool {
        self.lineality.len() == self.dim
    }

    /// All generators with lines split into opposite rays.
    pub fn all_rays(&self) -> Vec<Vector> {
        let mut out = self.generators.clone();
        for l in &self.lineality {
            out.push(l.clone());
            out.push(-l);
        }
        out
    }

    fn canonical(self) -> ConvexCone {
        if self.generators.is_empty() && self.lineality.is_empty() {
            return self;
        }
        let mut ineq: Vec<Vector> = Vec::new();
        let mut eq: Vec<Vector> = Vec::new();
        let p = self.polar_raw();
        ineq.extend(p.generators.iter().cloned());
        eq.extend(p.lineality.iter().cloned());
        let mut c = ConvexCone::from_constraints(self.dim, &ineq, &eq);
        // Re-enumeration can pick arbitrary representatives; keep the input
        // generator closest to each extreme ray for readability.
        for r in c.generators.iter_mut() {
            if let Some(g) = self.generators.iter().find(|g| angle(g, r) < 1e-7) {
                *r = g.clone();
            }
        }
        c.generators.sort_by(crate::geometry::lex_cmp);
        c
    }

    fn polar_raw(&self) -> ConvexCone {
        ConvexCone::from_constraints(self.dim, &self.generators, &self.lineality)
    }

    /// `{h | ⟨h, g⟩ ≤ 0 ∀ g ∈ K}`.
    pub fn polar(&self) -> ConvexCone {
        self.polar_raw()
    }

    /// H-representation: `(ineq, eq)` with `K = {h | a·h ≤ 0, e·h = 0}`.
    pub fn constraints(&self) -> (Vec<Vector>, Vec<Vector>) {
        let p = self.polar_raw();
        (p.generators, p.lineality)
    }

    pub fn intersect(&self, other: &ConvexCone) -> Result<ConvexCone> {
        check_dim(self.dim, other.dim)?;
        let (mut i1, mut e1) = self.constraints();
        let (i2, e2) = other.constraints();
        i1.extend(i2);
        e1.extend(e2);
        Ok(ConvexCone::from_constraints(self.dim, &i1, &e1))
    }

    pub fn sum(&self, other: &ConvexCone) -> Result<ConvexCone> {
        check_dim(self.dim, other.dim)?;
        let mut g = self.generators.clone();
        g.extend(other.generators.iter().cloned());
        let mut l = self.lineality.clone();
        l.extend(other.lineality.iter().cloned());
        ConvexCone::new(self.dim, g, l)
    }

    /// Image under `x ↦ a x`.
    pub fn map_linear(&self, a: &Matrix) -> Result<ConvexCone> {
        check_dim(a.ncols(), self.dim)?;
        ConvexCone::new(
            a.nrows(),
            self.generators.iter().map(|g| a * g).collect(),
            self.lineality.iter().map(|l| a * l).collect(),
        )
    }

    pub fn to_generated(&self) -> GeneratedSet {
        GeneratedSet::from_parts(self.dim, vec![Vector::zeros(self.dim)], self.all_rays())
    }

    /// Dimension of the linear span.
    pub fn span_dim(&self) -> usize {
        rank(&rows_to_matrix(&self.all_rays(), self.dim), 1e-9)
    }

    /// Orthonormal basis of the orthogonal complement of the span.
    pub fn span_complement(&self) -> Vec<Vector> {
        nullspace(&rows_to_matrix(&self.all_rays(), self.dim), 1e-9)
    }
}

impl PointSet for ConvexCone {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Distance via nonnegative least squares on the generators.
    fn distance(&self, x: &Vector) -> f64 {
        let rays = self.all_rays();
        if rays.is_empty() {
            return x.norm();
        }
        let a = columns_to_matrix(&rays, self.dim);
        nnls(&a, x).1
    }
}
