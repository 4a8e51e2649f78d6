//! Dense linear-algebra helpers shared by the projector and rank code.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Result, VemError};

/// Relative singular-value threshold below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-10;
/// Upper edge of the rejection zone `(RANK_TOL, AMBIGUITY_TOL)`.
pub const AMBIGUITY_TOL: f64 = 1e-8;

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    SVD::new(m.clone(), false, false).singular_values.iter().copied().collect()
}

pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Smallest over largest singular value (0 for rank-deficient or empty input).
pub fn relative_min_singular(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&a), Some(&b)) if a > 0.0 && s.len() == m.ncols().min(m.nrows()) => b / a,
        _ => 0.0,
    }
}

/// Rank with the rejection zone enforced: any relative singular value in
/// `(RANK_TOL, AMBIGUITY_TOL)` is an error.
pub fn checked_rank(m: &DMatrix<f64>, element: usize, what: &str) -> Result<usize> {
    let s = singular_values(m);
    let top = match s.first() {
        Some(&t) if t > 0.0 => t,
        _ => return Ok(0),
    };
    let mut rank = 0;
    for &v in &s {
        let r = v / top;
        if r > RANK_TOL && r < AMBIGUITY_TOL {
            return Err(VemError::RankAmbiguous {
                element,
                what: what.to_string(),
                value: r,
            });
        }
        if r >= AMBIGUITY_TOL {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Orthonormal basis (columns) of the null space of `m`.
pub fn null_space(m: &DMatrix<f64>, element: usize, what: &str) -> Result<DMatrix<f64>> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let rank = checked_rank(m, element, what)?;
    Ok(null_space_of_rank(m, rank))
}

/// Null space of `m` when its rank is already known.
pub fn null_space_of_rank(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to a square matrix so the SVD returns a full set of right singular vectors.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(padded, false, true);
    let vt = svd.v_t.expect("requested V^T");
    vt.rows(rank, n - rank).transpose()
}

/// Solves a square system with partial-pivoting LU.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| VemError::Singular(what.to_string()))
}

pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| VemError::Singular(what.to_string()))
}

/// Solves a symmetric positive definite system, failing on indefiniteness.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| VemError::Singular(format!("{what}: matrix is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Inverse of a square matrix.
pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    solve(a, &DMatrix::identity(a.nrows(), a.nrows()), what)
}

/// Selects linearly independent columns greedily, left to right.
///
/// Returns the indices of the retained columns. A column is kept when its
/// residual after projection on the kept ones exceeds `rel_tol` times its norm.
pub fn independent_columns(m: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut idx = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut r = col.clone();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if rn > rel_tol * norm {
            kept.push(r / rn);
            idx.push(j);
        }
    }
    idx
}

/// Extracts the listed columns into a new matrix.
pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

/// Horizontal concatenation.
pub fn hstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.iter().map(|p| p.nrows()).max().unwrap_or(0);
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        if p.ncols() > 0 {
            out.view_mut((0, c), (p.nrows(), p.ncols())).copy_from(*p);
        }
        c += p.ncols();
    }
    out
}

/// Vertical concatenation.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.iter().map(|p| p.ncols()).max().unwrap_or(0);
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        if p.nrows() > 0 {
            out.view_mut((r, 0), (p.nrows(), p.ncols())).copy_from(*p);
        }
        r += p.nrows();
    }
    out
}
