//! Function handles: scalar functions with optional gradients and smooth
//! vector maps with Jacobians.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::expr::Expr;
use crate::linalg::{Matrix, Vector};

/// Extended-real-valued function on ℝⁿ. `gradient` returns `None` where the
/// function is not declared smooth or is not differentiable.
pub trait ScalarFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, _x: &Vector) -> Option<Vector> {
        None
    }
}

/// Smooth map ℝⁿ → ℝᵐ with Jacobian (m × n).
pub trait VectorFunction: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Vector;
    fn jacobian(&self, x: &Vector) -> Option<Matrix>;
}

pub type ScalarFn = Arc<dyn ScalarFunction>;
pub type VectorFn = Arc<dyn VectorFunction>;

/// Expression in variables named by the caller.
#[derive(Debug, Clone)]
pub struct ExprScalar {
    expr: Expr,
    dim: usize,
    source: String,
}

impl ExprScalar {
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        Ok(ExprScalar {
            expr: Expr::parse(src, vars)?,
            dim: vars.len(),
            source: src.trim().to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl ScalarFunction for ExprScalar {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.expr.eval(x.as_slice())
    }

    fn gradient(&self, x: &Vector) -> Option<Vector> {
        let (_, g) = self.expr.eval_grad(x.as_slice(), self.dim);
        if g.iter().all(|v| v.is_finite()) {
            Some(Vector::from_vec(g))
        } else {
            None
        }
    }
}

/// Component-wise expressions.
#[derive(Debug, Clone)]
pub struct ExprVector {
    comps: Vec<ExprScalar>,
    dim: usize,
}

impl ExprVector {
    pub fn parse(srcs: &[&str], vars: &[&str]) -> Result<Self> {
        if srcs.is_empty() {
            return Err(Error::InvalidInput("vector map without components".into()));
        }
        Ok(ExprVector {
            comps: srcs
                .iter()
                .map(|s| ExprScalar::parse(s, vars))
                .collect::<Result<_>>()?,
            dim: vars.len(),
        })
    }

    pub fn components(&self) -> &[ExprScalar] {
        &self.comps
    }
}

impl VectorFunction for ExprVector {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.comps.len()
    }

    fn value(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.comps.len(), self.comps.iter().map(|c| c.value(x)))
    }

    fn jacobian(&self, x: &Vector) -> Option<Matrix> {
        let mut j = Matrix::zeros(self.comps.len(), self.dim);
        for (i, c) in self.comps.iter().enumerate() {
            j.set_row(i, &c.gradient(x)?.transpose());
        }
        Some(j)
    }
}

/// `x ↦ a x + b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub a: Matrix,
    pub b: Vector,
}

impl AffineMap {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        Ok(AffineMap { a, b })
    }

    pub fn linear(a: Matrix) -> Self {
        let m = a.nrows();
        AffineMap {
            a,
            b: Vector::zeros(m),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::linear(Matrix::identity(n, n))
    }
}

impl VectorFunction for AffineMap {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn value(&self, x: &Vector) -> Vector {
        &self.a * x + &self.b
    }

    fn jacobian(&self, _x: &Vector) -> Option<Matrix> {
        Some(self.a.clone())
    }
}

/// `x ↦ a·x + b` as a scalar function.
#[derive(Debug, Clone)]
pub struct AffineScalar {
    pub a: Vector,
    pub b: f64,
}

impl ScalarFunction for AffineScalar {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.a.dot(x) + self.b
    }

    fn gradient(&self, _x: &Vector) -> Option<Vector> {
        Some(self.a.clone())
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Option<Vector> + Send + Sync;

/// Closure-backed scalar function, mostly for tests and oracles.
#[derive(Clone)]
pub struct FnScalar {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
    label: String,
}

impl FnScalar {
    pub fn new(
        dim: usize,
        label: &str,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FnScalar {
            dim,
            value: Arc::new(value),
            gradient: None,
            label: label.to_string(),
        }
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&Vector) -> Option<Vector> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }
}

impl fmt::Debug for FnScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnScalar({})", self.label)
    }
}

impl ScalarFunction for FnScalar {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Option<Vector> {
        self.gradient.as_ref().and_then(|g| g(x))
    }
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient(f: &dyn ScalarFunction, x: &Vector, h: f64) -> Vector {
    let n = x.len();
    Vector::from_fn(n, |i, _| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[i] += h;
        m[i] -= h;
        (f.value(&p) - f.value(&m)) / (2.0 * h)
    })
}

/// Compares declared gradients with central differences at `probes` seeded
/// random points in the box `center ± radius`. Returns the largest absolute
/// discrepancy over probes where a gradient is declared.
pub fn gradient_self_check(
    f: &dyn ScalarFunction,
    center: &Vector,
    radius: f64,
    probes: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = Vector::from_fn(center.len(), |i, _| {
            center[i] + radius * rng.gen_range(-1.0..1.0)
        });
        if let Some(g) = f.gradient(&x) {
            let fd = fd_gradient(f, &x, 1e-6);
            worst = worst.max((g - fd).amax());
        }
    }
    worst
}
