//! Exact convex and polyhedral sets in low dimension.
//!
//! Polytopes are stored by vertices, constraint sets and graphs by rows.
//! Conversions between the two go through extreme-ray enumeration of a
//! homogenized cone and are meant for dimension ≤ 4.

mod cone;
mod generated;
mod polyhedron;
mod polytope;
mod union;

pub use cone::{ConvexCone, GENERATOR_ANGLE_TOL};
pub use generated::GeneratedSet;
pub use polyhedron::Polyhedron;
pub use polytope::{
    convex_hull, excess, hausdorff_distance, weighted_minkowski, Polytope, HULL_TOL,
};
pub use union::{Piece, PolyhedralUnion};

use crate::error::{check_dim, Result};
use crate::linalg::Vector;

/// Closed set with an exact Euclidean distance.
pub trait PointSet {
    fn dim(&self) -> usize;

    /// Distance from `x`, `+∞` for the empty set.
    fn distance(&self, x: &Vector) -> f64;

    fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= tol
    }
}

/// Convex set argument for [`distance_point_set`].
#[derive(Debug, Clone, Copy)]
pub enum ConvexSetRef<'a> {
    Polytope(&'a Polytope),
    Polyhedron(&'a Polyhedron),
    Empty,
}

pub fn distance_point_set(x: &Vector, set: ConvexSetRef<'_>) -> Result<f64> {
    match set {
        ConvexSetRef::Polytope(p) => {
            check_dim(p.dim(), x.len())?;
            Ok(p.distance(x))
        }
        ConvexSetRef::Polyhedron(p) => {
            check_dim(PointSet::dim(p), x.len())?;
            Ok(p.distance(x))
        }
        ConvexSetRef::Empty => Ok(f64::INFINITY),
    }
}

pub(crate) fn lex_cmp(a: &Vector, b: &Vector) -> std::cmp::Ordering {
    for i in 0..a.len().min(b.len()) {
        match a[i].partial_cmp(&b[i]).unwrap_or(std::cmp::Ordering::Equal) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}
