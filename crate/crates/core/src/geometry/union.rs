use crate::error::{check_dim, Result};
use crate::geometry::{ConvexCone, GeneratedSet, PointSet, Polyhedron, Polytope};
use crate::linalg::Vector;

/// One convex piece of a [`PolyhedralUnion`].
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Polytope(Polytope),
    Polyhedron(Polyhedron),
    Cone(ConvexCone),
    Generated(GeneratedSet),
}

impl Piece {
    pub fn to_polyhedron(&self) -> Polyhedron {
        match self {
            Piece::Polytope(p) => p.to_polyhedron(),
            Piece::Polyhedron(p) => p.clone(),
            Piece::Cone(c) => {
                let (ineq, eq) = c.constraints();
                let mut rows: Vec<(Vector, f64)> = ineq.into_iter().map(|a| (a, 0.0)).collect();
                for e in eq {
                    rows.push((e.clone(), 0.0));
                    rows.push((-e, 0.0));
                }
                Polyhedron::new(c.dim(), rows).expect("valid rows")
            }
            Piece::Generated(g) => g.to_polyhedron(),
        }
    }

    pub fn to_generated(&self) -> GeneratedSet {
        match self {
            Piece::Polytope(p) => p.to_generated(),
            Piece::Polyhedron(p) => p.to_generated(),
            Piece::Cone(c) => c.to_generated(),
            Piece::Generated(g) => g.clone(),
        }
    }
}

impl PointSet for Piece {
    fn dim(&self) -> usize {
        match self {
            Piece::Polytope(p) => p.dim(),
            Piece::Polyhedron(p) => PointSet::dim(p),
            Piece::Cone(c) => c.dim(),
            Piece::Generated(g) => g.dim(),
        }
    }

    fn distance(&self, x: &Vector) -> f64 {
        match self {
            Piece::Polytope(p) => p.distance(x),
            Piece::Polyhedron(p) => p.distance(x),
            Piece::Cone(c) => c.distance(x),
            Piece::Generated(g) => g.distance(x),
        }
    }
}

/// Finite union of convex polyhedral pieces. A union without pieces is the
/// empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralUnion {
    dim: usize,
    pieces: Vec<Piece>,
}

impl PolyhedralUnion {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Result<Self> {
        for p in &pieces {
            check_dim(dim, p.dim())?;
        }
        Ok(PolyhedralUnion { dim, pieces })
    }

    pub fn empty(dim: usize) -> Self {
        PolyhedralUnion {
            dim,
            pieces: Vec::new(),
        }
    }

    pub fn from_polyhedra(dim: usize, pieces: Vec<Polyhedron>) -> Result<Self> {
        Self::new(dim, pieces.into_iter().map(Piece::Polyhedron).collect())
    }

    pub fn from_cones(dim: usize, cones: Vec<ConvexCone>) -> Result<Self> {
        Self::new(dim, cones.into_iter().map(Piece::Cone).collect())
    }

    pub fn from_generated(dim: usize, sets: Vec<GeneratedSet>) -> Result<Self> {
        Self::new(
            dim,
            sets.into_iter()
                .filter(|s| !s.is_empty())
                .map(Piece::Generated)
                .collect(),
        )
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn push(&mut self, piece: Piece) -> Result<()> {
        check_dim(self.dim, piece.dim())?;
        self.pieces.push(piece);
        Ok(())
    }

    pub fn generated_pieces(&self) -> Vec<GeneratedSet> {
        self.pieces
            .iter()
            .map(|p| p.to_generated())
            .filter(|g| !g.is_empty())
            .collect()
    }

    /// Indices of pieces within `tol` of `x`.
    pub fn pieces_containing(&self, x: &Vector, tol: f64) -> Vec<usize> {
        (0..self.pieces.len())
            .filter(|&i| self.pieces[i].contains(x, tol))
            .collect()
    }
}

impl PointSet for PolyhedralUnion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn distance(&self, x: &Vector) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.distance(x))
            .fold(f64::INFINITY, f64::min)
    }
}
