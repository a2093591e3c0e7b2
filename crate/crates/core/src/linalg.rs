//! Small dense linear-algebra kernels: nullspaces, nonnegative least squares,
//! and extreme-ray enumeration of polyhedral cones in low dimension.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative tolerance used when deciding ranks and zero singular values.
pub const RANK_TOL: f64 = 1e-10;

pub fn vector(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

pub fn zeros(n: usize) -> Vector {
    Vector::zeros(n)
}

/// Stacks row vectors into a matrix. `cols` is needed for the empty case.
pub fn rows_to_matrix(rows: &[Vector], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        m.set_row(i, &r.transpose());
    }
    m
}

pub fn columns_to_matrix(cols: &[Vector], rows: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

pub fn unit(v: &Vector) -> Option<Vector> {
    let n = v.norm();
    if n > 1e-300 && n.is_finite() {
        Some(v / n)
    } else {
        None
    }
}

/// Angle in radians between two nonzero vectors.
pub fn angle(a: &Vector, b: &Vector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 0.0 } else { std::f64::consts::PI };
    }
    let c = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
    // acos is badly conditioned near 1; use the chord for tiny angles.
    if c > 0.99 {
        let d = (a / na - b / nb).norm();
        2.0 * (d / 2.0).asin()
    } else {
        c.acos()
    }
}

pub fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut v = Vector::zeros(a.len() + b.len());
    v.rows_mut(0, a.len()).copy_from(a);
    v.rows_mut(a.len(), b.len()).copy_from(b);
    v
}

pub fn split(v: &Vector, first: usize) -> (Vector, Vector) {
    (
        v.rows(0, first).into_owned(),
        v.rows(first, v.len() - first).into_owned(),
    )
}

/// Orthonormal basis of the nullspace of `m` (as column vectors).
pub fn nullspace(m: &Matrix, tol: f64) -> Vec<Vector> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    // Pad to at least `cols` rows so the SVD returns a full right basis.
    let rows = m.nrows().max(cols);
    let mut a = Matrix::zeros(rows, cols);
    a.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut out = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol * scale {
            out.push(vt.row(i).transpose());
        }
    }
    out
}

pub fn rank(m: &Matrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let scale = m.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|s| **s > tol * scale)
        .count()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn least_squares(a: &Matrix, b: &Vector) -> Vector {
    if a.ncols() == 0 {
        return Vector::zeros(0);
    }
    let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
    let svd = a.clone().svd(true, true);
    svd.solve(b, RANK_TOL * scale)
        .unwrap_or_else(|_| Vector::zeros(a.ncols()))
}

/// Lawson–Hanson nonnegative least squares: minimizes ‖a x − b‖ over x ≥ 0.
/// Returns the minimizer and the residual norm.
pub fn nnls(a: &Matrix, b: &Vector) -> (Vector, f64) {
    let n = a.ncols();
    let mut x = Vector::zeros(n);
    if n == 0 {
        return (x, b.norm());
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0) * b.norm().max(1.0);
    let tol = 1e-12 * scale;
    let mut passive = vec![false; n];
    let mut w = a.transpose() * (b - a * &x);
    let mut outer = 0;
    while outer < 3 * n + 10 {
        outer += 1;
        let mut best = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && best.is_none_or(|(_, v)| w[j] > v) {
                best = Some((j, w[j]));
            }
        }
        let Some((j, _)) = best else { break };
        passive[j] = true;
        let mut inner = 0;
        loop {
            inner += 1;
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(idx.iter());
            let sol = least_squares(&sub, b);
            let mut s = Vector::zeros(n);
            for (k, &i) in idx.iter().enumerate() {
                s[i] = sol[k];
            }
            if idx.iter().all(|&i| s[i] > 0.0) || inner > 3 * n + 10 {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &idx {
                if s[i] <= 0.0 {
                    let d = x[i] - s[i];
                    if d > 0.0 {
                        alpha = alpha.min(x[i] / d);
                    } else {
                        alpha = 0.0f64.min(alpha);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + (&s - &x) * alpha;
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
        w = a.transpose() * (b - a * &x);
    }
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let r = (a * &x - b).norm();
    (x, r)
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Cartesian product of index ranges `0..sizes[i]`.
pub fn cartesian(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &s in sizes {
        let mut next = Vec::with_capacity(out.len() * s);
        for prefix in &out {
            for i in 0..s {
                let mut p = prefix.clone();
                p.push(i);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Generators of the polyhedral cone `{h : a·h ≤ 0 for a in ineq, e·h = 0 for e in eq}`.
#[derive(Debug, Clone)]
pub struct ConeGenerators {
    /// Unit extreme rays of the pointed part.
    pub rays: Vec<Vector>,
    /// Orthonormal basis of the lineality space.
    pub lineality: Vec<Vector>,
}

/// Enumerates extreme rays of an H-described cone by brute force over
/// subsets of tight inequalities. Intended for dimension ≤ 5.
pub fn ray_enumerate(ineq: &[Vector], eq: &[Vector], dim: usize) -> ConeGenerators {
    let ineq: Vec<Vector> = ineq.iter().filter_map(unit).collect();
    let eq: Vec<Vector> = eq.iter().filter_map(unit).collect();
    let mut all = ineq.clone();
    all.extend(eq.iter().cloned());
    let lineality = nullspace(&rows_to_matrix(&all, dim), 1e-9);
    let mut base = eq.clone();
    base.extend(lineality.iter().cloned());
    let base_rank = rank(&rows_to_matrix(&base, dim), 1e-9);
    let mut rays: Vec<Vector> = Vec::new();
    if base_rank >= dim {
        return ConeGenerators { rays, lineality };
    }
    let need = dim - 1 - base_rank;
    let feas_tol = 1e-9;
    for subset in combinations(ineq.len(), need) {
        let mut rows = base.clone();
        rows.extend(subset.iter().map(|&i| ineq[i].clone()));
        let ns = nullspace(&rows_to_matrix(&rows, dim), 1e-9);
        if ns.len() != 1 {
            continue;
        }
        for sign in [1.0, -1.0] {
            let h = &ns[0] * sign;
            if ineq.iter().all(|a| a.dot(&h) <= feas_tol) {
                if !rays.iter().any(|r| angle(r, &h) < 1e-8) {
                    rays.push(h);
                }
                break;
            }
        }
    }
    ConeGenerators { rays, lineality }
}
