//! Scaled monomial polynomials in one, two and three variables.
//!
//! Every polynomial is a coefficient vector against a [`MonomialBasis`], the
//! set of scaled monomials `((x - c) / h)^α` with `|α| <= k`. Multi-indices
//! are kept in graded lexicographic order: by total degree first, then by
//! decreasing power of `x`, then of `y`. For `d = 2` and degree 2 the order
//! is `1, x, y, x², xy, y²`. DOF layouts depend on this order, so it never
//! changes.
//!
//! Vector-valued polynomials store their components one after another
//! (component-major), so `(P_k)^d` has `d * π_{k,d}` coefficients.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, VemError};
use crate::linalg;

/// `π_{k,d}` for any integer `k`; negative degrees give the empty space.
pub(crate) fn pi(k: i32, d: usize) -> usize {
    if k < 0 {
        return 0;
    }
    let k = k as usize;
    match d {
        0 => 1,
        1 => k + 1,
        2 => (k + 1) * (k + 2) / 2,
        3 => (k + 1) * (k + 2) * (k + 3) / 6,
        _ => unreachable!("dimension checked by callers"),
    }
}

/// Dimension of `P_k(R^d)`. `k = -1` is the zero space.
pub fn dim_poly(k: i32, d: usize) -> Result<usize> {
    if !(1..=3).contains(&d) {
        return Err(VemError::UnsupportedDimension(d));
    }
    if k < -1 {
        return Err(VemError::InvalidDegree {
            degree: k,
            reason: "degrees below -1 are not defined".into(),
        });
    }
    Ok(pi(k, d))
}

/// Dimension of the gradients `G_k = grad P_{k+1}` in `d` dimensions.
pub fn gamma(k: i32, d: usize) -> usize {
    pi(k + 1, d).saturating_sub(1)
}

/// Dimension of `R_k`: `brot P_{k+1}` in 2D, `curl (P_{k+1})^3` in 3D.
pub fn rho(k: i32, d: usize) -> usize {
    if k < -1 {
        return 0;
    }
    match d {
        2 => gamma(k, 2),
        3 => 3 * pi(k + 1, 3) + 1 - pi(k + 2, 3),
        _ => unreachable!("rho is only defined in 2D and 3D"),
    }
}

/// Position of a multi-index in the graded lexicographic order.
pub(crate) fn monomial_index(dim: usize, e: [u32; 3]) -> usize {
    let q = (e[0] + e[1] + e[2]) as usize;
    let offset = pi(q as i32 - 1, dim);
    match dim {
        1 => q,
        2 => offset + (q - e[0] as usize),
        3 => {
            let m = q - e[0] as usize;
            offset + m * (m + 1) / 2 + (m - e[1] as usize)
        }
        _ => unreachable!(),
    }
}

fn exponents(dim: usize, degree: i32) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(pi(degree, dim));
    for q in 0..=degree.max(-1) {
        let q = q as u32;
        match dim {
            1 => out.push([q, 0, 0]),
            2 => {
                for a in (0..=q).rev() {
                    out.push([a, q - a, 0]);
                }
            }
            3 => {
                for a in (0..=q).rev() {
                    for b in (0..=q - a).rev() {
                        out.push([a, b, q - a - b]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    out
}

/// Scaled, centered monomial basis of `P_k` on a geometric object.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonomialBasis {
    dim: usize,
    degree: i32,
    center: [f64; 3],
    scale: f64,
    #[serde(skip)]
    exponents: Vec<[u32; 3]>,
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: i32, center: &[f64], scale: f64) -> Result<Self> {
        dim_poly(degree, dim)?;
        if center.len() != dim {
            return Err(VemError::LengthMismatch {
                what: "basis center",
                expected: dim,
                got: center.len(),
            });
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(VemError::Degenerate {
                object: 0,
                detail: format!("basis scale must be positive, got {scale}"),
            });
        }
        let mut c = [0.0; 3];
        c[..dim].copy_from_slice(center);
        Ok(Self {
            dim,
            degree,
            center: c,
            scale,
            exponents: exponents(dim, degree),
        })
    }

    /// Unscaled monomials centered at the origin.
    pub fn unit(dim: usize, degree: i32) -> Result<Self> {
        Self::new(dim, degree, &vec![0.0; dim], 1.0)
    }

    /// Same center and scale, different degree.
    pub fn with_degree(&self, degree: i32) -> Self {
        Self {
            dim: self.dim,
            degree,
            center: self.center,
            scale: self.scale,
            exponents: exponents(self.dim, degree),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[[u32; 3]] {
        &self.exponents
    }

    pub fn index_of(&self, e: [u32; 3]) -> Option<usize> {
        if (e[0] + e[1] + e[2]) as i32 > self.degree {
            return None;
        }
        Some(monomial_index(self.dim, e))
    }

    pub fn same_geometry(&self, other: &Self) -> bool {
        self.dim == other.dim && self.center == other.center && self.scale == other.scale
    }

    /// Scaled coordinates `(x - c) / h` of a point.
    pub fn scaled(&self, point: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for i in 0..self.dim {
            s[i] = (point[i] - self.center[i]) / self.scale;
        }
        s
    }

    /// Values of all basis members at a point.
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        let s = self.scaled(point);
        let deg = self.degree.max(0) as usize;
        let mut powers = [vec![1.0; deg + 1], vec![1.0; deg + 1], vec![1.0; deg + 1]];
        for (axis, p) in powers.iter_mut().enumerate().take(self.dim) {
            for j in 1..=deg {
                p[j] = p[j - 1] * s[axis];
            }
        }
        self.exponents
            .iter()
            .map(|e| powers[0][e[0] as usize] * powers[1][e[1] as usize] * powers[2][e[2] as usize])
            .collect()
    }
}

/// Coefficients of a (possibly vector-valued) polynomial.
#[derive(Clone, Debug)]
pub struct PolyCoeffs {
    basis: MonomialBasis,
    components: usize,
    coeffs: DVector<f64>,
}

impl PolyCoeffs {
    pub fn new(basis: MonomialBasis, components: usize, coeffs: DVector<f64>) -> Result<Self> {
        let expected = components * basis.len();
        if coeffs.len() != expected {
            return Err(VemError::LengthMismatch {
                what: "polynomial coefficients",
                expected,
                got: coeffs.len(),
            });
        }
        Ok(Self {
            basis,
            components,
            coeffs,
        })
    }

    pub fn zeros(basis: MonomialBasis, components: usize) -> Self {
        let n = components * basis.len();
        Self {
            basis,
            components,
            coeffs: DVector::zeros(n),
        }
    }

    /// Builds a polynomial from `(component, exponents, coefficient)` terms.
    pub fn from_terms(basis: MonomialBasis, components: usize, terms: &[(usize, [u32; 3], f64)]) -> Result<Self> {
        let mut p = Self::zeros(basis, components);
        let n = p.basis.len();
        for &(c, e, v) in terms {
            if c >= components {
                return Err(VemError::LengthMismatch {
                    what: "term component",
                    expected: components,
                    got: c + 1,
                });
            }
            let i = p.basis.index_of(e).ok_or(VemError::InvalidDegree {
                degree: (e[0] + e[1] + e[2]) as i32,
                reason: "term exceeds the basis degree".into(),
            })?;
            p.coeffs[c * n + i] += v;
        }
        Ok(p)
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    pub fn component(&self, c: usize) -> PolyCoeffs {
        let n = self.basis.len();
        PolyCoeffs {
            basis: self.basis.clone(),
            components: 1,
            coeffs: self.coeffs.rows(c * n, n).into_owned(),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        let vals = self.basis.eval(point);
        let n = vals.len();
        (0..self.components)
            .map(|c| (0..n).map(|i| self.coeffs[c * n + i] * vals[i]).sum())
            .collect()
    }

    /// Effective degree: highest total degree carrying a coefficient above `tol` (relative).
    pub fn effective_degree(&self, tol: f64) -> i32 {
        let n = self.basis.len();
        let scale = self.coeffs.amax().max(f64::MIN_POSITIVE);
        let mut deg = -1;
        for c in 0..self.components {
            for (i, e) in self.basis.exponents().iter().enumerate() {
                if self.coeffs[c * n + i].abs() > tol * scale {
                    deg = deg.max((e[0] + e[1] + e[2]) as i32);
                }
            }
        }
        deg
    }

    /// Re-expresses the polynomial in a basis of another degree on the same geometry.
    pub fn with_degree(&self, degree: i32) -> Result<PolyCoeffs> {
        let target = self.basis.with_degree(degree);
        let n_src = self.basis.len();
        let n_tgt = target.len();
        let mut out = DVector::zeros(self.components * n_tgt);
        for c in 0..self.components {
            for (i, e) in self.basis.exponents().iter().enumerate() {
                let v = self.coeffs[c * n_src + i];
                match target.index_of(*e) {
                    Some(j) => out[c * n_tgt + j] = v,
                    None if v != 0.0 => {
                        return Err(VemError::InvalidDegree {
                            degree,
                            reason: "truncation would drop non-zero coefficients".into(),
                        })
                    }
                    None => {}
                }
            }
        }
        PolyCoeffs::new(target, self.components, out)
    }

    /// Expresses the polynomial in a basis with different center/scale (same dimension).
    pub fn rebase(&self, center: &[f64], scale: f64) -> Result<PolyCoeffs> {
        let target = MonomialBasis::new(self.basis.dim, self.basis.degree, center, scale)?;
        let map = AffineMap::identity(self.basis.dim);
        let s = substitution_matrix(&self.basis, &target, &map)?;
        let n = self.basis.len();
        let m = target.len();
        let mut out = DVector::zeros(self.components * m);
        for c in 0..self.components {
            let part = &s * self.coeffs.rows(c * n, n);
            out.rows_mut(c * m, m).copy_from(&part);
        }
        PolyCoeffs::new(target, self.components, out)
    }
}

/// First- and second-order differential operators on polynomial spaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffOp {
    Grad,
    Brot,
    Rot,
    Div,
    Curl,
    Laplacian,
}

impl DiffOp {
    pub fn name(self) -> &'static str {
        match self {
            DiffOp::Grad => "grad",
            DiffOp::Brot => "brot",
            DiffOp::Rot => "rot",
            DiffOp::Div => "div",
            DiffOp::Curl => "curl",
            DiffOp::Laplacian => "laplacian",
        }
    }

    /// Number of components of (source, target) fields in dimension `d`.
    pub fn components(self, d: usize) -> (usize, usize) {
        match self {
            DiffOp::Grad => (1, d),
            DiffOp::Brot => (1, 2),
            DiffOp::Rot => (2, 1),
            DiffOp::Div => (d, 1),
            DiffOp::Curl => (3, 3),
            DiffOp::Laplacian => (1, 1),
        }
    }

    pub fn order(self) -> i32 {
        match self {
            DiffOp::Laplacian => 2,
            _ => 1,
        }
    }
}

/// Matrix of `∂/∂x_axis` from `P_k` to `P_{k-1}` on the same geometry.
pub fn partial_matrix(basis: &MonomialBasis, axis: usize) -> DMatrix<f64> {
    let target = basis.with_degree(basis.degree - 1);
    let mut m = DMatrix::zeros(target.len(), basis.len());
    for (j, e) in basis.exponents().iter().enumerate() {
        if e[axis] > 0 {
            let mut f = *e;
            f[axis] -= 1;
            let i = monomial_index(basis.dim, f);
            m[(i, j)] = e[axis] as f64 / basis.scale;
        }
    }
    m
}

/// Matrix of a differential operator on coefficient vectors of `basis`.
///
/// The source space is `P_k` (or `(P_k)^c`) on `basis`; the target is the
/// same geometry at degree `k - 1` (`k - 2` for the Laplacian).
pub fn diff_matrix(op: DiffOp, basis: &MonomialBasis) -> Result<DMatrix<f64>> {
    let d = basis.dim;
    let ok = match op {
        DiffOp::Brot | DiffOp::Rot => d == 2,
        DiffOp::Curl => d == 3,
        _ => d >= 1,
    };
    if !ok {
        return Err(VemError::OperatorMismatch { op: op.name(), dim: d });
    }
    let n = basis.len();
    let parts: Vec<DMatrix<f64>> = (0..d).map(|a| partial_matrix(basis, a)).collect();
    let m = basis.with_degree(basis.degree - 1).len();
    let out = match op {
        DiffOp::Grad => {
            let mut g = DMatrix::zeros(d * m, n);
            for a in 0..d {
                g.view_mut((a * m, 0), (m, n)).copy_from(&parts[a]);
            }
            g
        }
        DiffOp::Brot => {
            let mut g = DMatrix::zeros(2 * m, n);
            g.view_mut((0, 0), (m, n)).copy_from(&parts[1]);
            g.view_mut((m, 0), (m, n)).copy_from(&(-&parts[0]));
            g
        }
        DiffOp::Rot => {
            let mut g = DMatrix::zeros(m, 2 * n);
            g.view_mut((0, 0), (m, n)).copy_from(&(-&parts[1]));
            g.view_mut((0, n), (m, n)).copy_from(&parts[0]);
            g
        }
        DiffOp::Div => {
            let mut g = DMatrix::zeros(m, d * n);
            for a in 0..d {
                g.view_mut((0, a * n), (m, n)).copy_from(&parts[a]);
            }
            g
        }
        DiffOp::Curl => {
            // (∂y v3 - ∂z v2, ∂z v1 - ∂x v3, ∂x v2 - ∂y v1)
            let mut g = DMatrix::zeros(3 * m, 3 * n);
            let mut put = |row: usize, col: usize, sign: f64, axis: usize| {
                let block = &parts[axis] * sign;
                g.view_mut((row * m, col * n), (m, n)).copy_from(&block);
            };
            put(0, 2, 1.0, 1);
            put(0, 1, -1.0, 2);
            put(1, 0, 1.0, 2);
            put(1, 2, -1.0, 0);
            put(2, 1, 1.0, 0);
            put(2, 0, -1.0, 1);
            g
        }
        DiffOp::Laplacian => {
            let lower = basis.with_degree(basis.degree - 1);
            let mut g = DMatrix::zeros(basis.with_degree(basis.degree - 2).len(), n);
            for a in 0..d {
                g += partial_matrix(&lower, a) * &parts[a];
            }
            g
        }
    };
    Ok(out)
}

/// Applies a differential operator to a polynomial.
pub fn apply(op: DiffOp, p: &PolyCoeffs) -> Result<PolyCoeffs> {
    let (src, tgt) = op.components(p.basis.dim);
    if p.components != src {
        return Err(VemError::LengthMismatch {
            what: "operator source components",
            expected: src,
            got: p.components,
        });
    }
    let m = diff_matrix(op, &p.basis)?;
    let target = p.basis.with_degree(p.basis.degree - op.order());
    PolyCoeffs::new(target, tgt, m * &p.coeffs)
}

/// Product of two scalar coefficient vectors on the same geometry.
pub fn multiply(a: &MonomialBasis, ca: &[f64], b: &MonomialBasis, cb: &[f64]) -> Result<(MonomialBasis, Vec<f64>)> {
    if !a.same_geometry(b) {
        return Err(VemError::BasisMismatch);
    }
    let target = a.with_degree(a.degree.max(-1) + b.degree.max(-1));
    let target = if a.is_empty() || b.is_empty() { a.with_degree(-1) } else { target };
    let mut out = vec![0.0; target.len()];
    for (i, ei) in a.exponents().iter().enumerate() {
        if ca[i] == 0.0 {
            continue;
        }
        for (j, ej) in b.exponents().iter().enumerate() {
            if cb[j] == 0.0 {
                continue;
            }
            let e = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
            out[monomial_index(a.dim, e)] += ca[i] * cb[j];
        }
    }
    Ok((target, out))
}

/// Scalar product `Σ_c a_c b_c` of two vector polynomials on the same geometry.
pub fn dot(a: &PolyCoeffs, b: &PolyCoeffs) -> Result<PolyCoeffs> {
    if a.components != b.components {
        return Err(VemError::LengthMismatch {
            what: "dot product components",
            expected: a.components,
            got: b.components,
        });
    }
    let na = a.basis.len();
    let nb = b.basis.len();
    let mut acc: Option<(MonomialBasis, Vec<f64>)> = None;
    for c in 0..a.components {
        let (basis, prod) = multiply(
            &a.basis,
            a.coeffs.rows(c * na, na).as_slice(),
            &b.basis,
            b.coeffs.rows(c * nb, nb).as_slice(),
        )?;
        acc = Some(match acc {
            None => (basis, prod),
            Some((bs, mut v)) => {
                v.iter_mut().zip(prod).for_each(|(x, y)| *x += y);
                (bs, v)
            }
        });
    }
    let (basis, v) = acc.unwrap_or_else(|| (a.basis.with_degree(-1), vec![]));
    PolyCoeffs::new(basis, 1, DVector::from_vec(v))
}

/// Zero-padding map from `(P_from)^c` to `(P_to)^c` coefficients, `from <= to`.
///
/// The graded order makes `P_from` a prefix of `P_to`, so each component
/// block is copied to the top of the corresponding larger block.
pub fn embedding(d: usize, comps: usize, from: i32, to: i32) -> DMatrix<f64> {
    let nf = pi(from, d);
    let nt = pi(to, d);
    let mut e = DMatrix::zeros(comps * nt, comps * nf);
    for c in 0..comps {
        for i in 0..nf.min(nt) {
            e[(c * nt + i, c * nf + i)] = 1.0;
        }
    }
    e
}

/// Affine map `x = origin + J y` from target coordinates `y` to source coordinates `x`.
#[derive(Clone, Debug)]
pub struct AffineMap {
    pub origin: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            origin: DVector::zeros(dim),
            jacobian: DMatrix::identity(dim, dim),
        }
    }
}

/// Linear map taking coefficients on `source` to coefficients on `target`
/// of the composed polynomial `y ↦ p(origin + J y)`.
///
/// `target` must have the same degree as `source`; it may live in a different
/// dimension (restriction to edges and faces) or geometry (re-centering).
pub fn substitution_matrix(source: &MonomialBasis, target: &MonomialBasis, map: &AffineMap) -> Result<DMatrix<f64>> {
    let ds = source.dim;
    let dt = target.dim;
    if map.origin.len() != ds || map.jacobian.nrows() != ds || map.jacobian.ncols() != dt {
        return Err(VemError::LengthMismatch {
            what: "affine map shape",
            expected: ds * dt,
            got: map.jacobian.len(),
        });
    }
    let target = target.with_degree(source.degree);
    let nt = target.len();
    let mut out = DMatrix::zeros(nt, source.len());
    if source.is_empty() {
        return Ok(out);
    }
    // ξ_i = b_i + Σ_j A_ij η_j as polynomials of degree 1 in the target basis.
    let lin = target.with_degree(1.min(source.degree));
    let mut linear: Vec<Vec<f64>> = Vec::with_capacity(ds);
    for i in 0..ds {
        let mut x0 = map.origin[i];
        for j in 0..dt {
            x0 += map.jacobian[(i, j)] * target.center()[j];
        }
        let mut v = vec![0.0; lin.len()];
        v[0] = (x0 - source.center()[i]) / source.scale;
        if lin.degree() >= 1 {
            for j in 0..dt {
                let mut e = [0u32; 3];
                e[j] = 1;
                v[monomial_index(dt, e)] = map.jacobian[(i, j)] * target.scale / source.scale;
            }
        }
        linear.push(v);
    }
    let deg = source.degree as usize;
    // powers[i][p] = ξ_i^p on the target basis truncated to degree p
    let mut powers: Vec<Vec<(MonomialBasis, Vec<f64>)>> = Vec::with_capacity(ds);
    for lin_i in linear.iter() {
        let mut row = Vec::with_capacity(deg + 1);
        row.push((target.with_degree(0), vec![1.0]));
        for p in 1..=deg {
            let (pb, pc) = &row[p - 1];
            row.push(multiply(pb, pc, &lin, lin_i)?);
        }
        powers.push(row);
    }
    for (col, e) in source.exponents().iter().enumerate() {
        let mut acc = powers[0][e[0] as usize].clone();
        for i in 1..ds {
            let (pb, pc) = &powers[i][e[i] as usize];
            acc = multiply(&acc.0, &acc.1, pb, pc)?;
        }
        let (ab, ac) = acc;
        for (j, v) in ac.iter().enumerate() {
            let ex = ab.exponents()[j];
            out[(monomial_index(dt, ex), col)] += v;
        }
    }
    Ok(out)
}

/// Rank and kernel of one operator in a polynomial sequence.
#[derive(Clone, Debug, Serialize)]
pub struct LinkRank {
    pub op: DiffOp,
    pub source_degree: i32,
    pub source_dim: usize,
    pub target_dim: usize,
    pub rank: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SequenceRanks {
    pub links: Vec<LinkRank>,
    /// One flag per junction: kernel of the first operator is the constants,
    /// image equals next kernel at every interior space, last operator is onto.
    pub junctions: Vec<bool>,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SequenceRankReport {
    pub degree: i32,
    pub dim: usize,
    pub sequences: Vec<SequenceRanks>,
    pub exact: bool,
}

fn sequence(ops: &[DiffOp], r: i32, d: usize) -> Result<SequenceRanks> {
    let mut links = Vec::with_capacity(ops.len());
    for (i, &op) in ops.iter().enumerate() {
        let deg = r - i as i32;
        let basis = MonomialBasis::unit(d, deg.max(-1))?;
        let m = diff_matrix(op, &basis)?;
        let rank = linalg::numeric_rank(&m, linalg::RANK_TOL);
        links.push(LinkRank {
            op,
            source_degree: deg,
            source_dim: m.ncols(),
            target_dim: m.nrows(),
            rank,
            kernel: m.ncols() - rank,
        });
    }
    let mut junctions = vec![links[0].kernel == 1];
    for w in links.windows(2) {
        junctions.push(w[0].rank == w[1].kernel);
    }
    let last = links.last().expect("non-empty sequence");
    junctions.push(last.rank == last.target_dim);
    let exact = junctions.iter().all(|&j| j);
    Ok(SequenceRanks { links, junctions, exact })
}

/// Ranks and kernels along the polynomial de Rham sequences starting at `P_r`.
///
/// In 2D both `grad → rot` and `brot → div` are reported; in 3D the
/// `grad → curl → div` sequence.
pub fn sequence_ranks(r: i32, d: usize) -> Result<SequenceRankReport> {
    if r < 1 {
        return Err(VemError::InvalidDegree {
            degree: r,
            reason: "sequence degree must be at least 1".into(),
        });
    }
    let sequences = match d {
        2 => vec![
            sequence(&[DiffOp::Grad, DiffOp::Rot], r, 2)?,
            sequence(&[DiffOp::Brot, DiffOp::Div], r, 2)?,
        ],
        3 => vec![sequence(&[DiffOp::Grad, DiffOp::Curl, DiffOp::Div], r, 3)?],
        _ => return Err(VemError::UnsupportedDimension(d)),
    };
    let exact = sequences.iter().all(|s| s.exact);
    Ok(SequenceRankReport {
        degree: r,
        dim: d,
        sequences,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_values() {
        assert_eq!(dim_poly(2, 2).unwrap(), 6);
        assert_eq!(dim_poly(-1, 3).unwrap(), 0);
        assert_eq!(dim_poly(3, 3).unwrap(), 20);
        assert!(dim_poly(1, 4).is_err());
        assert!(dim_poly(-2, 2).is_err());
    }

    #[test]
    fn generated_indices_match_dimension() {
        for d in 1..=3 {
            for k in -1..=5 {
                let b = MonomialBasis::unit(d, k).unwrap();
                assert_eq!(b.len(), dim_poly(k, d).unwrap());
                for (i, e) in b.exponents().iter().enumerate() {
                    assert_eq!(monomial_index(d, *e), i);
                }
            }
        }
    }

    #[test]
    fn graded_order_in_2d() {
        let b = MonomialBasis::unit(2, 2).unwrap();
        assert_eq!(
            b.exponents(),
            &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [1, 1, 0], [0, 2, 0]]
        );
    }

    #[test]
    fn evaluation_examples() {
        let b = MonomialBasis::unit(1, 1).unwrap();
        let one = PolyCoeffs::from_terms(b.clone(), 1, &[(0, [0, 0, 0], 1.0)]).unwrap();
        assert_eq!(one.eval(&[17.0])[0], 1.0);
        let x = PolyCoeffs::from_terms(b, 1, &[(0, [1, 0, 0], 1.0)]).unwrap();
        assert_eq!(x.eval(&[2.0])[0], 2.0);
        let s = MonomialBasis::new(1, 2, &[1.0], 2.0).unwrap();
        let sq = PolyCoeffs::from_terms(s, 1, &[(0, [2, 0, 0], 1.0)]).unwrap();
        assert_eq!(sq.eval(&[3.0])[0], 1.0);
    }

    #[test]
    fn grad_of_x_squared() {
        let b = MonomialBasis::unit(2, 2).unwrap();
        let g = diff_matrix(DiffOp::Grad, &b).unwrap();
        let col = b.index_of([2, 0, 0]).unwrap();
        let x = MonomialBasis::unit(2, 1).unwrap().index_of([1, 0, 0]).unwrap();
        assert_eq!(g[(x, col)], 2.0);
        // second component block is zero for x²
        assert_eq!(g.column(col).rows(3, 3).amax(), 0.0);
    }

    #[test]
    fn rot_grad_and_div_curl_vanish() {
        let b = MonomialBasis::new(2, 3, &[0.3, -0.2], 0.7).unwrap();
        let g = diff_matrix(DiffOp::Grad, &b).unwrap();
        let r = diff_matrix(DiffOp::Rot, &b.with_degree(2)).unwrap();
        assert!((&r * &g).amax() <= 1e-14 * g.norm());
        let b3 = MonomialBasis::new(3, 3, &[0.1, 0.2, 0.3], 1.3).unwrap();
        let c = diff_matrix(DiffOp::Curl, &b3).unwrap();
        let dv = diff_matrix(DiffOp::Div, &b3.with_degree(2)).unwrap();
        assert!((&dv * &c).amax() <= 1e-14 * c.norm());
    }

    #[test]
    fn operator_dimension_mismatch() {
        let b = MonomialBasis::unit(3, 2).unwrap();
        assert!(diff_matrix(DiffOp::Rot, &b).is_err());
        let b2 = MonomialBasis::unit(2, 2).unwrap();
        assert!(diff_matrix(DiffOp::Curl, &b2).is_err());
    }

    #[test]
    fn laplacian_of_quadratic() {
        let b = MonomialBasis::unit(3, 2).unwrap();
        let p = PolyCoeffs::from_terms(b, 1, &[(0, [2, 0, 0], 1.0), (0, [0, 1, 1], 3.0), (0, [0, 0, 2], 2.0)]).unwrap();
        let l = apply(DiffOp::Laplacian, &p).unwrap();
        assert_relative_eq!(l.coeffs()[0], 6.0);
    }

    #[test]
    fn substitution_recenters() {
        let b = MonomialBasis::new(2, 3, &[0.5, 0.5], 2.0).unwrap();
        let p = PolyCoeffs::from_terms(b, 1, &[(0, [3, 0, 0], 1.0), (0, [1, 2, 0], -2.0), (0, [0, 0, 0], 0.5)]).unwrap();
        let q = p.rebase(&[-1.0, 2.0], 0.3).unwrap();
        for pt in [[0.1, 0.2], [1.5, -0.7], [3.0, 2.0]] {
            assert_relative_eq!(p.eval(&pt)[0], q.eval(&pt)[0], epsilon = 1e-10, max_relative = 1e-12);
        }
    }

    #[test]
    fn substitution_restricts_to_line() {
        let b = MonomialBasis::new(3, 2, &[0.0, 0.0, 0.0], 1.0).unwrap();
        let p = PolyCoeffs::from_terms(b.clone(), 1, &[(0, [1, 1, 0], 1.0), (0, [0, 0, 2], 1.0)]).unwrap();
        let t = MonomialBasis::new(1, 2, &[0.0], 1.0).unwrap();
        let map = AffineMap {
            origin: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            jacobian: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 2.0]),
        };
        let s = substitution_matrix(&b, &t, &map).unwrap();
        let r = s * p.coeffs();
        for y in [-1.0, 0.0, 0.5, 2.0] {
            let x = [1.0 + y, 2.0, 3.0 + 2.0 * y];
            let val: f64 = t.eval(&[y]).iter().zip(r.iter()).map(|(a, b)| a * b).sum();
            assert_relative_eq!(val, p.eval(&x)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn sequence_rank_examples() {
        let r = sequence_ranks(3, 2).unwrap();
        let grad = &r.sequences[0].links[0];
        assert_eq!(grad.rank, 9);
        assert_eq!(grad.kernel, 1);
        let r3 = sequence_ranks(3, 3).unwrap();
        let curl = &r3.sequences[0].links[1];
        assert_eq!(curl.source_degree, 2);
        assert_eq!(curl.kernel, gamma(2, 3));
        assert_eq!(curl.kernel, 19);
        let r1 = sequence_ranks(1, 2).unwrap();
        assert_eq!(r1.sequences[0].links[1].rank, 0);
        assert!(r1.exact);
    }

    #[test]
    fn closed_form_dimensions() {
        assert_eq!(rho(0, 3), 3);
        assert_eq!(rho(-1, 3), 0);
        assert_eq!(rho(2, 3), 26);
        assert_eq!(gamma(2, 3), 19);
        assert_eq!(rho(1, 2), 5);
    }
}
