//! Exact polynomial integration over edges, polygons and polyhedra.
//!
//! Element moments are computed by boundary reduction: with `ξ = (x - c)/h`,
//!
//! ```text
//! ∫_E ξ^a η^b (ζ^c) = h/(a+1) ∫_∂E ξ^(a+1) η^b (ζ^c) n_x
//! ```
//!
//! applied once in 2D (down to Gauss rules on edges) and once in 3D (down to
//! faces, whose integrals are again reduced in the face frame). Every table is
//! cross-checked against an independent simplex-fan Gauss rule.

use std::f64::consts::PI;
use std::sync::RwLock;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Result, VemError};
use crate::geom::{FaceFrame, Mesh, Polygon};
use crate::linalg;
use crate::poly::{self, AffineMap, DiffOp, MonomialBasis, PolyCoeffs};

/// Relative agreement required between the two moment routes.
pub const MOMENT_CHECK_TOL: f64 = 1e-12;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn gauss_unit(degree: usize) -> Vec<(f64, f64)> {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    x.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Quadrature points (always stored as 3-vectors) and weights.
#[derive(Clone, Debug, Default)]
pub struct Quadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn integrate(&self, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    /// Integral of every member of a basis.
    pub fn moments(&self, basis: &MonomialBasis) -> DVector<f64> {
        let mut out = DVector::zeros(basis.len());
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (o, v) in out.iter_mut().zip(basis.eval(&p[..basis.dim()])) {
                *o += w * v;
            }
        }
        out
    }
}

/// Gauss rule on the segment `[a, b]` (arclength measure).
pub fn segment_quadrature(a: &[f64; 3], b: &[f64; 3], degree: usize) -> Quadrature {
    let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let mut q = Quadrature::default();
    for (t, w) in gauss_unit(degree) {
        q.points.push([a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]]);
        q.weights.push(w * len);
    }
    q
}

/// Signed simplex-fan rule on a planar loop (Duffy-collapsed triangles).
pub fn polygon_quadrature(coords: &[Vector2<f64>], degree: usize) -> Quadrature {
    let n = coords.len();
    let o = coords.iter().fold(Vector2::zeros(), |a, p| a + p) / n as f64;
    let ru = gauss_unit(degree + 1);
    let rv = gauss_unit(degree);
    let mut q = Quadrature::default();
    for i in 0..n {
        let a = coords[i] - o;
        let b = coords[(i + 1) % n] - o;
        let det = a[0] * b[1] - a[1] * b[0];
        for &(u, wu) in &ru {
            for &(v, wv) in &rv {
                let x = o + (a * (1.0 - v) + b * v) * u;
                q.points.push([x[0], x[1], 0.0]);
                q.weights.push(wu * wv * u * det);
            }
        }
    }
    q
}

/// Simplex-fan rule on a planar face of a 3D mesh, in global coordinates.
pub fn face_quadrature(mesh: &Mesh, face: usize, degree: usize) -> Quadrature {
    let f = &mesh.faces()[face];
    let local = polygon_quadrature(&f.coords, degree);
    Quadrature {
        points: local
            .points
            .iter()
            .map(|p| {
                let x = f.frame.global(&Vector2::new(p[0], p[1]));
                [x[0], x[1], x[2]]
            })
            .collect(),
        weights: local.weights,
    }
}

/// Signed simplex-fan rule on a cell: tetrahedra (reference, face centroid, loop edge).
pub fn cell_quadrature(mesh: &Mesh, cell: usize, degree: usize) -> Quadrature {
    let c = &mesh.cells()[cell];
    let verts = mesh.vertices();
    let o = c.vertices.iter().fold(Vector3::zeros(), |a, &v| a + verts[v]) / c.vertices.len() as f64;
    let ru = gauss_unit(degree + 2);
    let rv = gauss_unit(degree + 1);
    let rw = gauss_unit(degree);
    let mut q = Quadrature::default();
    for (&fi, &s) in c.faces.iter().zip(&c.face_signs) {
        let f = &mesh.faces()[fi];
        let n = f.vertices.len();
        for i in 0..n {
            let q0 = f.centroid;
            let q1 = verts[f.vertices[i]];
            let q2 = verts[f.vertices[(i + 1) % n]];
            let (e0, e1, e2) = (q0 - o, q1 - q0, q2 - q1);
            let det = s * e0.dot(&e1.cross(&e2));
            for &(u, wu) in &ru {
                for &(v, wv) in &rv {
                    for &(w, ww) in &rw {
                        let x = o + (e0 + (e1 + e2 * w) * v) * u;
                        q.points.push([x[0], x[1], x[2]]);
                        q.weights.push(wu * wv * ww * u * u * v * det);
                    }
                }
            }
        }
    }
    q
}

/// Quadrature over element `element` (a face in 2D, a cell in 3D).
pub fn element_quadrature(mesh: &Mesh, element: usize, degree: usize) -> Quadrature {
    if mesh.dim() == 2 {
        polygon_quadrature(&mesh.faces()[element].coords, degree)
    } else {
        cell_quadrature(mesh, element, degree)
    }
}

/// Integrals `∫_O m_α dO` of every member of a basis.
#[derive(Clone, Debug, Serialize)]
pub struct MomentTable {
    pub object: usize,
    pub basis: MonomialBasis,
    pub values: Vec<f64>,
}

/// Moments on an edge of length `length`, parametrized by arclength `σ ∈ [0, length]`.
pub fn edge_moments(length: f64, basis: &MonomialBasis) -> Result<MomentTable> {
    if basis.dim() != 1 {
        return Err(VemError::UnsupportedDimension(basis.dim()));
    }
    let q = segment_quadrature(&[0.0; 3], &[length, 0.0, 0.0], basis.degree().max(0) as usize);
    Ok(MomentTable {
        object: 0,
        basis: basis.clone(),
        values: q.moments(basis).iter().copied().collect(),
    })
}

/// Boundary-reduction moments of a planar loop.
pub fn polygon_moments_boundary(coords: &[Vector2<f64>], basis: &MonomialBasis) -> DVector<f64> {
    let k = basis.degree();
    let mut out = DVector::zeros(basis.len());
    if k < 0 {
        return out;
    }
    let up = basis.with_degree(k + 1);
    let rule = gauss_unit(k as usize + 1);
    let n = coords.len();
    let mut bnd: DVector<f64> = DVector::zeros(up.len());
    for i in 0..n {
        let a = coords[i];
        let b = coords[(i + 1) % n];
        // n_x ds = (b_y - a_y) dt
        let dy = b[1] - a[1];
        if dy == 0.0 {
            continue;
        }
        for &(t, w) in &rule {
            let x = a + (b - a) * t;
            for (o, v) in bnd.iter_mut().zip(up.eval(&[x[0], x[1]])) {
                *o += w * dy * v;
            }
        }
    }
    let h = basis.scale();
    for (j, e) in basis.exponents().iter().enumerate() {
        let i = up.index_of([e[0] + 1, e[1], 0]).expect("raised exponent fits");
        out[j] = h / (e[0] + 1) as f64 * bnd[i];
    }
    out
}

/// Map from a cell basis to the face basis, `y ↦ p(origin + a1 y1 + a2 y2)`.
pub fn face_restriction(cell_basis: &MonomialBasis, frame: &FaceFrame, face_basis: &MonomialBasis) -> Result<DMatrix<f64>> {
    let map = AffineMap {
        origin: DVector::from_column_slice(frame.origin.as_slice()),
        jacobian: DMatrix::from_columns(&[
            DVector::from_column_slice(frame.axes[0].as_slice()),
            DVector::from_column_slice(frame.axes[1].as_slice()),
        ]),
    };
    poly::substitution_matrix(cell_basis, face_basis, &map)
}

/// Geometry of one face as seen from a cell.
#[derive(Clone, Debug)]
pub struct CellFace {
    pub face: usize,
    pub sign: f64,
    pub frame: FaceFrame,
    pub polygon: Polygon,
}

impl CellFace {
    /// Face basis centred at the face centroid with the face diameter as scale.
    pub fn basis(&self, k: i32) -> MonomialBasis {
        let c = self.polygon.centroid;
        MonomialBasis::new(2, k, &[c[0], c[1]], self.polygon.diameter).expect("valid face basis")
    }
}

fn cell_faces(mesh: &Mesh, cell: usize) -> Vec<CellFace> {
    let c = &mesh.cells()[cell];
    c.faces
        .iter()
        .zip(&c.face_signs)
        .map(|(&f, &s)| CellFace {
            face: f,
            sign: s,
            frame: mesh.faces()[f].frame.clone(),
            polygon: Polygon::from_face(mesh, f),
        })
        .collect()
}

/// Boundary-reduction moments of a polyhedral cell.
pub fn polyhedron_moments_boundary(mesh: &Mesh, cell: usize, basis: &MonomialBasis) -> Result<DVector<f64>> {
    let k = basis.degree();
    let mut out = DVector::zeros(basis.len());
    if k < 0 {
        return Ok(out);
    }
    let up = basis.with_degree(k + 1);
    let mut bnd: DVector<f64> = DVector::zeros(up.len());
    for cf in cell_faces(mesh, cell) {
        let nx = cf.sign * cf.frame.normal[0];
        if nx == 0.0 {
            continue;
        }
        let fb = cf.basis(k + 1);
        let r = face_restriction(&up, &cf.frame, &fb)?;
        let fm = polygon_moments_boundary(&cf.polygon.coords, &fb);
        bnd += r.transpose() * fm * nx;
    }
    let h = basis.scale();
    for (j, e) in basis.exponents().iter().enumerate() {
        let i = up.index_of([e[0] + 1, e[1], e[2]]).expect("raised exponent fits");
        out[j] = h / (e[0] + 1) as f64 * bnd[i];
    }
    Ok(out)
}

#[derive(Clone, Debug)]
enum Shape {
    Polygon(Polygon),
    Cell {
        faces: Vec<CellFace>,
        oracle: Box<Mesh>,
        cell: usize,
    },
}

/// Integration context of one element (or face): basis geometry and a
/// growing, cross-checked moment table.
#[derive(Debug)]
pub struct ElementIntegrals {
    id: usize,
    dim: usize,
    measure: f64,
    center: Vec<f64>,
    scale: f64,
    shape: Shape,
    cache: RwLock<(i32, DVector<f64>)>,
}

impl Clone for ElementIntegrals {
    fn clone(&self) -> Self {
        let cache = self.cache.read().expect("moment cache lock").clone();
        Self {
            id: self.id,
            dim: self.dim,
            measure: self.measure,
            center: self.center.clone(),
            scale: self.scale,
            shape: self.shape.clone(),
            cache: RwLock::new(cache),
        }
    }
}

impl ElementIntegrals {
    /// Planar polygon, basis centred at its centroid and scaled by its diameter.
    pub fn polygon(poly: &Polygon) -> Result<Self> {
        let ints = Self {
            id: poly.id,
            dim: 2,
            measure: poly.area,
            center: vec![poly.centroid[0], poly.centroid[1]],
            scale: poly.diameter,
            shape: Shape::Polygon(poly.clone()),
            cache: RwLock::new((-1, DVector::zeros(0))),
        };
        ints.moments(2)?;
        Ok(ints)
    }

    /// Cell of a 3D mesh.
    pub fn cell(mesh: &Mesh, cell: usize) -> Result<Self> {
        if mesh.dim() != 3 {
            return Err(VemError::UnsupportedDimension(mesh.dim()));
        }
        let c = &mesh.cells()[cell];
        let ints = Self {
            id: cell,
            dim: 3,
            measure: c.volume,
            center: c.centroid.as_slice().to_vec(),
            scale: c.diameter,
            shape: Shape::Cell {
                faces: cell_faces(mesh, cell),
                oracle: Box::new(mesh.clone()),
                cell,
            },
            cache: RwLock::new((-1, DVector::zeros(0))),
        };
        ints.moments(2)?;
        Ok(ints)
    }

    /// Element `element` of a mesh (face in 2D, cell in 3D).
    pub fn element(mesh: &Mesh, element: usize) -> Result<Self> {
        if mesh.dim() == 2 {
            Self::polygon(&Polygon::from_face(mesh, element))
        } else {
            Self::cell(mesh, element)
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Faces of a cell (empty for polygons).
    pub fn faces(&self) -> &[CellFace] {
        match &self.shape {
            Shape::Polygon(_) => &[],
            Shape::Cell { faces, .. } => faces,
        }
    }

    pub fn basis(&self, k: i32) -> MonomialBasis {
        MonomialBasis::new(self.dim, k, &self.center, self.scale).expect("element basis is valid")
    }

    fn compute(&self, degree: i32) -> Result<DVector<f64>> {
        let basis = self.basis(degree);
        let (a, b) = match &self.shape {
            Shape::Polygon(p) => {
                let a = polygon_moments_boundary(&p.coords, &basis);
                let q = polygon_quadrature(&p.coords, degree.max(0) as usize);
                let pts: Vec<[f64; 3]> = q.points.clone();
                let b = Quadrature { points: pts, weights: q.weights }.moments(&basis);
                (a, b)
            }
            Shape::Cell { oracle, cell, .. } => {
                let a = polyhedron_moments_boundary(oracle, *cell, &basis)?;
                let b = cell_quadrature(oracle, *cell, degree.max(0) as usize).moments(&basis);
                (a, b)
            }
        };
        let tol = MOMENT_CHECK_TOL * self.measure.abs();
        for i in 0..a.len() {
            let diff = (a[i] - b[i]).abs();
            if !(diff <= tol) {
                return Err(VemError::MomentMismatch {
                    element: self.id,
                    monomial: i,
                    difference: diff,
                });
            }
        }
        Ok(a)
    }

    /// Moments of all scaled monomials up to `degree`.
    pub fn moments(&self, degree: i32) -> Result<DVector<f64>> {
        {
            let c = self.cache.read().expect("moment cache lock");
            if c.0 >= degree {
                return Ok(c.1.rows(0, poly::dim_poly(degree.max(-1), self.dim)?).into_owned());
            }
        }
        let target = degree.max(4);
        let m = self.compute(target)?;
        let mut c = self.cache.write().expect("moment cache lock");
        if c.0 < target {
            *c = (target, m);
        }
        Ok(c.1.rows(0, poly::dim_poly(degree.max(-1), self.dim)?).into_owned())
    }

    pub fn table(&self, k: i32) -> Result<MomentTable> {
        Ok(MomentTable {
            object: self.id,
            basis: self.basis(k),
            values: self.moments(k)?.iter().copied().collect(),
        })
    }

    /// `∫ m_i m_j` for `m_i ∈ P_a`, `m_j ∈ P_b` on the element basis.
    pub fn mass(&self, a: i32, b: i32) -> Result<DMatrix<f64>> {
        let ba = self.basis(a);
        let bb = self.basis(b);
        let mu = self.moments(a.max(0) + b.max(0))?;
        let mut m = DMatrix::zeros(ba.len(), bb.len());
        for (i, ei) in ba.exponents().iter().enumerate() {
            for (j, ej) in bb.exponents().iter().enumerate() {
                let e = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                m[(i, j)] = mu[poly::monomial_index(self.dim, e)];
            }
        }
        Ok(m)
    }

    /// Block-diagonal mass matrix between `(P_a)^c` and `(P_b)^c`.
    pub fn vector_mass(&self, a: i32, b: i32, comps: usize) -> Result<DMatrix<f64>> {
        let m = self.mass(a, b)?;
        let (r, c) = m.shape();
        let mut out = DMatrix::zeros(comps * r, comps * c);
        for k in 0..comps {
            out.view_mut((k * r, k * c), (r, c)).copy_from(&m);
        }
        Ok(out)
    }

    /// Integral of every component of a polynomial (rebased onto the element geometry if needed).
    pub fn integral(&self, p: &PolyCoeffs) -> Result<Vec<f64>> {
        let p = self.localize(p)?;
        let n = p.basis().len();
        let mu = self.moments(p.basis().degree())?;
        Ok((0..p.components())
            .map(|c| p.coeffs().rows(c * n, n).dot(&mu))
            .collect())
    }

    /// Re-expresses a polynomial in the element's center and scale, keeping its degree.
    pub fn localize(&self, p: &PolyCoeffs) -> Result<PolyCoeffs> {
        if p.basis().dim() != self.dim {
            return Err(VemError::LengthMismatch {
                what: "polynomial dimension",
                expected: self.dim,
                got: p.basis().dim(),
            });
        }
        let target = self.basis(p.basis().degree());
        if p.basis().same_geometry(&target) {
            Ok(p.clone())
        } else {
            p.rebase(&self.center, self.scale)
        }
    }
}

/// Moments of a mesh element, cross-checked between the two routes.
pub fn polytope_moments(mesh: &Mesh, element: usize, k: i32) -> Result<MomentTable> {
    ElementIntegrals::element(mesh, element)?.table(k)
}

/// L2 inner products `∫ a_i b_j` of two scalar bases on the element.
///
/// When `a == b` the result is checked for positive definiteness.
pub fn gram(ints: &ElementIntegrals, a: &MonomialBasis, b: &MonomialBasis) -> Result<DMatrix<f64>> {
    if a.dim() != ints.dim() || b.dim() != ints.dim() {
        return Err(VemError::UnsupportedDimension(a.dim().max(b.dim())));
    }
    let to_local = |x: &MonomialBasis| -> Result<DMatrix<f64>> {
        let t = ints.basis(x.degree());
        if x.same_geometry(&t) {
            Ok(DMatrix::identity(x.len(), x.len()))
        } else {
            poly::substitution_matrix(x, &t, &AffineMap::identity(ints.dim()))
        }
    };
    let sa = to_local(a)?;
    let sb = to_local(b)?;
    let g = sa.transpose() * ints.mass(a.degree(), b.degree())? * sb;
    if a == b && g.nrows() > 0 && g.clone().cholesky().is_none() {
        return Err(VemError::Singular(format!("gram matrix of element {} is not positive definite", ints.id())));
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SubspaceKind {
    G,
    Gperp,
    R,
    Rperp,
}

impl SubspaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SubspaceKind::G => "G",
            SubspaceKind::Gperp => "Gperp",
            SubspaceKind::R => "R",
            SubspaceKind::Rperp => "Rperp",
        }
    }
}

/// Columns spanning one of `G_k`, `G_k⊥`, `R_k`, `R_k⊥` in `(P_k)^d`.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    pub element: usize,
    pub kind: SubspaceKind,
    pub degree: i32,
    pub dim: usize,
    pub coeffs: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn len(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.ncols() == 0
    }

    /// Columns re-expressed in `(P_to)^d`, `to >= degree`.
    pub fn embedded(&self, to: i32) -> DMatrix<f64> {
        poly::embedding(self.dim, self.dim, self.degree, to) * &self.coeffs
    }
}

/// Closed-form dimension of a decomposition subspace.
pub fn subspace_dim(kind: SubspaceKind, k: i32, d: usize) -> usize {
    if k < 0 {
        return 0;
    }
    let full = d * poly::pi(k, d);
    match kind {
        SubspaceKind::G => poly::gamma(k, d),
        SubspaceKind::R => poly::rho(k, d),
        SubspaceKind::Gperp => full - poly::gamma(k, d),
        SubspaceKind::Rperp => full - poly::rho(k, d),
    }
}

/// Tolerance for greedy extraction of an independent curl image.
const CURL_SELECT_TOL: f64 = 1e-8;

fn image_columns(ints: &ElementIntegrals, kind: SubspaceKind, k: i32) -> Result<DMatrix<f64>> {
    let d = ints.dim();
    let up = ints.basis(k + 1);
    let h = ints.scale();
    let m = match (kind, d) {
        (SubspaceKind::G | SubspaceKind::Gperp, _) => poly::diff_matrix(DiffOp::Grad, &up)?.remove_column(0) * h,
        (_, 2) => poly::diff_matrix(DiffOp::Brot, &up)?.remove_column(0) * h,
        (_, 3) => {
            let c = poly::diff_matrix(DiffOp::Curl, &up)? * h;
            let cols = linalg::independent_columns(&c, CURL_SELECT_TOL);
            linalg::select_columns(&c, &cols)
        }
        _ => return Err(VemError::UnsupportedDimension(d)),
    };
    let expected = subspace_dim(if matches!(kind, SubspaceKind::G | SubspaceKind::Gperp) { SubspaceKind::G } else { SubspaceKind::R }, k, d);
    if m.ncols() != expected {
        return Err(VemError::RankDeficient {
            element: ints.id(),
            what: format!("{} image basis at degree {k}", if expected == poly::gamma(k, d) { "gradient" } else { "rotation" }),
            expected,
            found: m.ncols(),
        });
    }
    Ok(m)
}

/// Builds `G_k`, `G_k⊥`, `R_k` or `R_k⊥` on an element.
///
/// Complements are taken with respect to the element's own L2 product, so
/// they are never shared between elements.
pub fn build_subspace(ints: &ElementIntegrals, kind: SubspaceKind, k: i32) -> Result<SubspaceBasis> {
    let d = ints.dim();
    if k < -1 {
        return Err(VemError::InvalidDegree {
            degree: k,
            reason: "subspace degree must be at least -1".into(),
        });
    }
    let coeffs = if k < 0 {
        DMatrix::zeros(0, 0)
    } else {
        let image = image_columns(ints, kind, k)?;
        match kind {
            SubspaceKind::G | SubspaceKind::R => image,
            SubspaceKind::Gperp | SubspaceKind::Rperp => {
                // complement in the element L2 product: with M = L Lᵀ it is L⁻ᵀ null((Lᵀ A)ᵀ)
                let m = ints.vector_mass(k, k, d)? / ints.measure();
                let what = format!("{} complement at degree {k}", kind.name());
                let l = m.cholesky().ok_or_else(|| VemError::Singular(format!("mass matrix for the {what}")))?.l();
                let lt = l.transpose();
                let b = &lt * &image;
                let null = linalg::null_space_of_rank(&b.transpose(), image.ncols());
                let null = lt
                    .solve_upper_triangular(&null)
                    .ok_or_else(|| VemError::Singular(what.clone()))?;
                let expected = subspace_dim(kind, k, d);
                if null.ncols() != expected {
                    return Err(VemError::RankDeficient {
                        element: ints.id(),
                        what,
                        expected,
                        found: null.ncols(),
                    });
                }
                null
            }
        }
    };
    Ok(SubspaceBasis {
        element: ints.id(),
        kind,
        degree: k,
        dim: d,
        coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshes;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_rule_is_exact() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p + 1) as f64 };
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((got - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn edge_moment_examples() {
        let b = MonomialBasis::new(1, 3, &[0.5], 1.0).unwrap();
        let t = edge_moments(1.0, &b).unwrap();
        assert_relative_eq!(t.values[0], 1.0, epsilon = 1e-15);
        assert!(t.values[1].abs() < 1e-15);
        assert!(t.values[3].abs() < 1e-15);
        let u = MonomialBasis::unit(1, 2).unwrap();
        assert_relative_eq!(edge_moments(1.0, &u).unwrap().values[2], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn polytope_moment_examples() {
        let sq = meshes::unit_square();
        let ints = ElementIntegrals::element(&sq, 0).unwrap();
        let b = MonomialBasis::unit(2, 2).unwrap();
        let xy = PolyCoeffs::from_terms(b, 1, &[(0, [1, 1, 0], 1.0)]).unwrap();
        assert_relative_eq!(ints.integral(&xy).unwrap()[0], 0.25, epsilon = 1e-14);
        let cube = meshes::unit_cube();
        assert_relative_eq!(polytope_moments(&cube, 0, 0).unwrap().values[0], 1.0, epsilon = 1e-14);
        let pent = meshes::pentagon();
        let area = 2.5 * (2.0 * PI / 5.0).sin();
        assert_relative_eq!(polytope_moments(&pent, 0, 0).unwrap().values[0], area, epsilon = 1e-14);
    }

    #[test]
    fn routes_agree_up_to_degree_six() {
        for (_, m) in meshes::all() {
            for e in 0..m.num_elements() {
                let ints = ElementIntegrals::element(&m, e).unwrap();
                ints.moments(6).unwrap();
            }
        }
    }

    #[test]
    fn p1_mass_on_square_is_decoupled() {
        let ints = ElementIntegrals::element(&meshes::unit_square(), 0).unwrap();
        let m = ints.mass(1, 1).unwrap();
        assert!(m[(1, 2)].abs() < 1e-15);
        let g = gram(&ints, &MonomialBasis::unit(2, 0).unwrap(), &MonomialBasis::unit(2, 0).unwrap()).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn subspace_examples() {
        let ints = ElementIntegrals::element(&meshes::unit_square(), 0).unwrap();
        let r0 = build_subspace(&ints, SubspaceKind::R, 0).unwrap();
        assert_eq!(r0.len(), 2);
        assert_eq!(build_subspace(&ints, SubspaceKind::Rperp, 0).unwrap().len(), 0);
        let cube = ElementIntegrals::element(&meshes::unit_cube(), 0).unwrap();
        assert_eq!(build_subspace(&cube, SubspaceKind::Gperp, 1).unwrap().len(), 3);
        assert_eq!(build_subspace(&cube, SubspaceKind::R, 2).unwrap().len(), 26);
        assert_eq!(build_subspace(&cube, SubspaceKind::Rperp, 2).unwrap().len(), 4);
    }
}
