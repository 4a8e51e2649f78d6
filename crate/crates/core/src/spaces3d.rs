//! Three-dimensional virtual spaces on polyhedra: face (`H(div)`), edge
//! (`H(curl)`) with its boundary space and enhancement, vertex and element.
//!
//! Face moments use the stored face normal `n_f` and the face basis in the
//! face frame; edge moments use the global edge tangent. The cell only enters
//! through the outward sign `s_f` of each face, so DOFs on shared entities are
//! identical from both sides.
//!
//! Edge-family faces carry the interior blocks of the 2D edge space of the
//! face (built by [`LocalSpace2D`] in the face frame) applied to the
//! tangential part `(v·a1, v·a2)`. The edge blocks of that 2D space coincide
//! with the 3D edge blocks and are stored once.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::error::{Result, VemError};
use crate::geom::Mesh;
use crate::integrate::{build_subspace, face_restriction, gauss_unit, CellFace, ElementIntegrals, SubspaceBasis, SubspaceKind};
use crate::linalg;
use crate::poly::{self, pi, rho, gamma, DiffOp, MonomialBasis, PolyCoeffs};
use crate::spaces2d::{check_family_degree, edge_basis, number_dofs, DegreeProfile, DofLayout, Entity, Family, GlobalDofMap, LocalSpace2D};

/// `β_k = ℓ_e π_{k,1} + ℓ_f (2π_{k-1,2} - 1)`.
pub fn beta(le: usize, lf: usize, k: i32) -> i64 {
    (le * pi(k, 1)) as i64 + lf as i64 * (2 * pi(k - 1, 2) as i64 - 1)
}

fn constraint(a: i32, b: i32) -> usize {
    usize::from(!(a == -1 && b == -1))
}

/// Local dimension from the element counts `ℓ_v`, `ℓ_e`, `ℓ_f`.
pub fn dim_formula_3d(family: Family, lv: usize, le: usize, lf: usize, k: i32, profile: Option<DegreeProfile>) -> Result<usize> {
    let p = match profile {
        Some(p) => p,
        None => {
            check_family_degree(family, k)?;
            DegreeProfile::standard(k)
        }
    };
    p.validate(family)?;
    let DegreeProfile { kb, kd, kr } = p;
    let n = match family {
        Family::Face => (lf * pi(kb, 2) + pi(kd, 3) + rho(kr, 3)) as i64 - constraint(kb, kd) as i64,
        Family::Edge => beta(le, lf, kb) + (pi(kd, 3) + rho(kr - 1, 3)) as i64,
        Family::Vert => (lv + le * pi(kb - 2, 1) + lf * pi(kb - 2, 2) + pi(kd - 1, 3)) as i64,
        Family::Elem => pi(kb, 3) as i64,
    };
    usize::try_from(n).map_err(|_| VemError::InvalidProfile {
        kb,
        kd,
        kr,
        reason: format!("the {family} count is negative ({n})"),
    })
}

/// Local dimension of a family on cell `cell` of a 3D mesh.
pub fn dim_local_3d(mesh: &Mesh, cell: usize, family: Family, k: i32, profile: Option<DegreeProfile>) -> Result<usize> {
    if mesh.dim() != 3 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    let (lv, le, lf) = mesh.element_counts(cell);
    dim_formula_3d(family, lv, le, lf, k, profile)
}

/// Edge of a cell: global id, start point, unit tangent, length.
#[derive(Clone, Debug)]
struct CellEdge {
    global: usize,
    start: Vector3<f64>,
    tangent: Vector3<f64>,
    length: f64,
}

/// `y ↦ (v·a1, v·a2)` on a face: rows `(P_q(f))^2`, columns `(P_q(P))^3`.
fn tangential_matrix(cf: &CellFace, cell_basis: &MonomialBasis, q: i32) -> Result<DMatrix<f64>> {
    let fb = cf.basis(q);
    let r = face_restriction(cell_basis, &cf.frame, &fb)?;
    let (m, n) = (r.nrows(), r.ncols());
    let mut t = DMatrix::zeros(2 * m, 3 * n);
    for a in 0..2 {
        for c in 0..3 {
            t.view_mut((a * m, c * n), (m, n)).copy_from(&(&r * cf.frame.axes[a][c]));
        }
    }
    Ok(t)
}

/// `v ↦ v·w` restricted to a face for a constant vector `w`: rows `P_q(f)`.
fn component_matrix(cf: &CellFace, cell_basis: &MonomialBasis, q: i32, w: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let fb = cf.basis(q);
    let r = face_restriction(cell_basis, &cf.frame, &fb)?;
    let n = r.ncols();
    let mut t = DMatrix::zeros(r.nrows(), 3 * n);
    for c in 0..3 {
        t.view_mut((0, c * n), (r.nrows(), n)).copy_from(&(&r * w[c]));
    }
    Ok(t)
}

/// Local space of one family on one polyhedron.
#[derive(Clone, Debug)]
pub struct LocalSpace3D {
    family: Family,
    degree: i32,
    cell: usize,
    ints: ElementIntegrals,
    face_ints: Vec<ElementIntegrals>,
    /// 2D edge spaces of degree `k` on each face (edge family only).
    face_spaces: Vec<LocalSpace2D>,
    edges: Vec<CellEdge>,
    vertices: Vec<(usize, Vector3<f64>)>,
    layout: DofLayout,
    /// `G_{k-2}` (face) or `R_{k-2}` (edge).
    inner: Option<SubspaceBasis>,
    /// `G_k⊥` (face) or `R_k⊥` (edge).
    perp: Option<SubspaceBasis>,
}

impl LocalSpace3D {
    pub fn new(mesh: &Mesh, cell: usize, family: Family, k: i32) -> Result<Self> {
        if mesh.dim() != 3 {
            return Err(VemError::UnsupportedDimension(mesh.dim()));
        }
        check_family_degree(family, k)?;
        let ints = ElementIntegrals::cell(mesh, cell)?;
        let c = &mesh.cells()[cell];
        let face_ints = ints
            .faces()
            .iter()
            .map(|cf| ElementIntegrals::polygon(&cf.polygon))
            .collect::<Result<Vec<_>>>()?;
        let edges: Vec<CellEdge> = c
            .edges
            .iter()
            .map(|&e| {
                let me = &mesh.edges()[e];
                CellEdge {
                    global: e,
                    start: mesh.vertices()[me.vertices[0]],
                    tangent: me.tangent,
                    length: me.length,
                }
            })
            .collect();
        let vertices: Vec<(usize, Vector3<f64>)> = c.vertices.iter().map(|&v| (v, mesh.vertices()[v])).collect();
        let vol = c.volume;
        let interior = Entity::Cell(cell);
        let mut layout = DofLayout::new(family, cell, k);
        let (mut inner, mut perp) = (None, None);
        let mut face_spaces = Vec::new();
        match family {
            Family::Face => {
                for cf in ints.faces() {
                    layout.push(format!("face{}", cf.face), Entity::Face(cf.face), pi(k, 2), 1.0 / cf.polygon.area);
                }
                let a = build_subspace(&ints, SubspaceKind::G, k - 2)?;
                let b = build_subspace(&ints, SubspaceKind::Gperp, k)?;
                layout.push("G", interior, a.len(), 1.0 / vol);
                layout.push("Gperp", interior, b.len(), 1.0 / vol);
                inner = Some(a);
                perp = Some(b);
            }
            Family::Edge => {
                for e in &edges {
                    layout.push(format!("edge{}", e.global), Entity::Edge(e.global), pi(k, 1), 1.0 / e.length);
                }
                for cf in ints.faces() {
                    let fs = LocalSpace2D::new(cf.polygon.clone(), Family::Edge, k, Entity::Face(cf.face))?;
                    let area = cf.polygon.area;
                    let np = fs.perp_subspace().map_or(0, |s| s.len());
                    let ni = fs.inner_subspace().map_or(0, |s| s.len());
                    layout.push(format!("face{}:Rperp", cf.face), Entity::Face(cf.face), np, 1.0 / area);
                    layout.push(format!("face{}:R", cf.face), Entity::Face(cf.face), ni, 1.0 / area);
                    face_spaces.push(fs);
                }
                let b = build_subspace(&ints, SubspaceKind::Rperp, k)?;
                let a = build_subspace(&ints, SubspaceKind::R, k - 2)?;
                layout.push("Rperp", interior, b.len(), 1.0 / vol);
                layout.push("R", interior, a.len(), 1.0 / vol);
                inner = Some(a);
                perp = Some(b);
            }
            Family::Vert => {
                for &(v, _) in &vertices {
                    layout.push(format!("vertex{v}"), Entity::Vertex(v), 1, 1.0);
                }
                for e in &edges {
                    layout.push(format!("edge{}", e.global), Entity::Edge(e.global), pi(k - 2, 1), 1.0 / e.length);
                }
                for cf in ints.faces() {
                    layout.push(format!("face{}", cf.face), Entity::Face(cf.face), pi(k - 2, 2), 1.0 / cf.polygon.area);
                }
                layout.push("P", interior, pi(k - 2, 3), 1.0 / vol);
            }
            Family::Elem => {
                layout.push("P", interior, pi(k, 3), 1.0 / vol);
            }
        }
        Ok(Self {
            family,
            degree: k,
            cell,
            ints,
            face_ints,
            face_spaces,
            edges,
            vertices,
            layout,
            inner,
            perp,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn integrals(&self) -> &ElementIntegrals {
        &self.ints
    }

    pub fn faces(&self) -> &[CellFace] {
        self.ints.faces()
    }

    pub fn face_integrals(&self, i: usize) -> &ElementIntegrals {
        &self.face_ints[i]
    }

    /// 2D edge space on the `i`-th cell face (edge family only).
    pub fn face_space(&self, i: usize) -> Option<&LocalSpace2D> {
        self.face_spaces.get(i)
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total
    }

    pub fn basis(&self, k: i32) -> MonomialBasis {
        self.ints.basis(k)
    }

    /// `G_{k-2}` or `R_{k-2}`.
    pub fn inner_subspace(&self) -> Option<&SubspaceBasis> {
        self.inner.as_ref()
    }

    /// `G_k⊥` or `R_k⊥`.
    pub fn perp_subspace(&self) -> Option<&SubspaceBasis> {
        self.perp.as_ref()
    }

    pub(crate) fn block_selector(&self, name: &str) -> DMatrix<f64> {
        let b = self.layout.block(name).unwrap_or_else(|| panic!("block {name} exists"));
        let mut s = DMatrix::zeros(b.len, self.layout.total);
        for j in 0..b.len {
            s[(j, b.offset + j)] = 1.0;
        }
        s
    }

    /// `(1/|e|) ∫_e (p·w) s^j` rows for `j ≤ trace` (vector family) or `(1/|e|) ∫_e p s^j` (scalar).
    fn edge_rows(&self, e: &CellEdge, trace: i32, q: i32, comps: usize) -> DMatrix<f64> {
        let eb = edge_basis(e.length, trace);
        let b = self.basis(q);
        let n = b.len();
        let mut x = DMatrix::zeros(eb.len(), comps * n);
        if eb.is_empty() || n == 0 {
            return x;
        }
        for (t, w) in gauss_unit((trace.max(0) + q.max(0)) as usize) {
            let sigma = t * e.length;
            let p = e.start + e.tangent * sigma;
            let sv = eb.eval(&[sigma]);
            let mv = b.eval(p.as_slice());
            for j in 0..sv.len() {
                for c in 0..comps {
                    let dir = if comps == 3 { e.tangent[c] } else { 1.0 };
                    for a in 0..n {
                        x[(j, c * n + a)] += w * sv[j] * mv[a] * dir;
                    }
                }
            }
        }
        x
    }

    /// Matrix of all DOF functionals applied to `(P_q)^c` on the cell basis.
    pub fn dof_matrix(&self, q: i32) -> Result<DMatrix<f64>> {
        let k = self.degree;
        let comps = self.family.components(3);
        let cb = self.basis(q);
        let nq = cb.len();
        let mut d = DMatrix::zeros(self.layout.total, comps * nq);
        if nq == 0 {
            return Ok(d);
        }
        let vol = self.ints.measure();
        let mut row = 0;
        let put = |d: &mut DMatrix<f64>, rows: &DMatrix<f64>, row: &mut usize| {
            if rows.nrows() > 0 {
                d.view_mut((*row, 0), (rows.nrows(), rows.ncols())).copy_from(rows);
            }
            *row += rows.nrows();
        };
        match self.family {
            Family::Face => {
                for (i, cf) in self.faces().iter().enumerate() {
                    let nm = component_matrix(cf, &cb, q, &cf.frame.normal)?;
                    let rows = self.face_ints[i].mass(k, q)? * nm / cf.polygon.area;
                    put(&mut d, &rows, &mut row);
                }
                for s in [self.inner.as_ref(), self.perp.as_ref()].into_iter().flatten() {
                    if !s.is_empty() {
                        let rows = s.coeffs.transpose() * self.ints.vector_mass(s.degree, q, 3)? / vol;
                        put(&mut d, &rows, &mut row);
                    }
                }
            }
            Family::Edge => {
                for e in &self.edges {
                    let rows = self.edge_rows(e, k, q, 3);
                    put(&mut d, &rows, &mut row);
                }
                for (i, cf) in self.faces().iter().enumerate() {
                    let fs = &self.face_spaces[i];
                    let tm = tangential_matrix(cf, &cb, q)?;
                    let full = fs.dof_matrix(q)? * tm;
                    for name in ["Rperp", "R"] {
                        let rows = fs.block_selector(name) * &full;
                        put(&mut d, &rows, &mut row);
                    }
                }
                for s in [self.perp.as_ref(), self.inner.as_ref()].into_iter().flatten() {
                    if !s.is_empty() {
                        let rows = s.coeffs.transpose() * self.ints.vector_mass(s.degree, q, 3)? / vol;
                        put(&mut d, &rows, &mut row);
                    }
                }
            }
            Family::Vert => {
                for (_, x) in &self.vertices {
                    let rows = DMatrix::from_row_slice(1, nq, &cb.eval(x.as_slice()));
                    put(&mut d, &rows, &mut row);
                }
                for e in &self.edges {
                    let rows = self.edge_rows(e, k - 2, q, 1);
                    put(&mut d, &rows, &mut row);
                }
                for (i, cf) in self.faces().iter().enumerate() {
                    let r = face_restriction(&cb, &cf.frame, &cf.basis(q))?;
                    let rows = self.face_ints[i].mass(k - 2, q)? * r / cf.polygon.area;
                    put(&mut d, &rows, &mut row);
                }
                let rows = self.ints.mass(k - 2, q)? / vol;
                put(&mut d, &rows, &mut row);
            }
            Family::Elem => {
                let rows = self.ints.mass(k, q)? / vol;
                put(&mut d, &rows, &mut row);
            }
        }
        debug_assert_eq!(row, self.layout.total);
        Ok(d)
    }

    pub fn dofs_of_polynomial(&self, p: &PolyCoeffs) -> Result<DVector<f64>> {
        let comps = self.family.components(3);
        if p.components() != comps {
            return Err(VemError::LengthMismatch {
                what: "field components",
                expected: comps,
                got: p.components(),
            });
        }
        let p = self.ints.localize(p)?;
        Ok(self.dof_matrix(p.basis().degree())? * p.coeffs())
    }

    fn require(&self, family: Family, operation: &'static str) -> Result<()> {
        if self.family != family {
            return Err(VemError::Unsupported {
                family: self.family.name(),
                operation,
            });
        }
        Ok(())
    }

    /// `Σ_f s_f ∫_f (v·n_f) m_β`, rows `β ∈ P_q(P)`, acting on face-family DOFs.
    pub fn flux_pairing(&self, q: i32) -> Result<DMatrix<f64>> {
        self.require(Family::Face, "flux pairing")?;
        let k = self.degree;
        let cb = self.basis(q);
        let mut out = DMatrix::zeros(cb.len(), self.layout.total);
        for (i, cf) in self.faces().iter().enumerate() {
            let fi = &self.face_ints[i];
            let r = face_restriction(&cb, &cf.frame, &cf.basis(q))?;
            // v·n_f = |f| M_f^{-1} d_f on the face basis of degree k
            let sel = self.block_selector(&format!("face{}", cf.face)) * cf.polygon.area;
            let c = linalg::solve_spd(&fi.mass(k, k)?, &sel, "face mass")?;
            out += r.transpose() * fi.mass(q, k)? * c * cf.sign;
        }
        Ok(out)
    }

    /// `DOFs ↦ div v ∈ P_{k-1}` (face family).
    pub fn div_matrix(&self) -> Result<DMatrix<f64>> {
        self.require(Family::Face, "divergence recovery")?;
        let k = self.degree;
        let mut rhs = self.flux_pairing(k - 1)?;
        let b = self.layout.block("G").expect("G block");
        let scale = self.ints.measure() / self.ints.scale();
        for j in 0..b.len {
            rhs[(j + 1, b.offset + j)] -= scale;
        }
        linalg::solve_spd(&self.ints.mass(k - 1, k - 1)?, &rhs, "divergence recovery")
    }

    pub fn div_from_dofs(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        self.layout.check(d)?;
        PolyCoeffs::new(self.basis(self.degree - 1), 1, self.div_matrix()? * d)
    }

    /// `DOFs ↦ ∫ v·m` for every `m ∈ (P_k)^3` (face family).
    pub fn moment_matrix(&self) -> Result<DMatrix<f64>> {
        self.require(Family::Face, "L2 projection")?;
        let k = self.degree;
        let h = self.ints.scale();
        let img = build_subspace(&self.ints, SubspaceKind::G, k)?;
        let perp = self.perp.as_ref().expect("Gperp");
        let full = (self.flux_pairing(k + 1)? - self.ints.mass(k + 1, k - 1)? * self.div_matrix()?) * h;
        let img_rows = full.rows(1, full.nrows() - 1).into_owned();
        let perp_rows = self.block_selector("Gperp") * self.ints.measure();
        let mu_b = linalg::vstack(&[&img_rows, &perp_rows]);
        let b = linalg::hstack(&[&img.coeffs, &perp.coeffs]);
        linalg::solve(&b.transpose(), &mu_b, "moment basis change")
    }

    /// `DOFs ↦ Π⁰_k v` (face family).
    pub fn projector_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.ints.vector_mass(self.degree, self.degree, 3)?;
        linalg::solve_spd(&m, &self.moment_matrix()?, "L2 projection")
    }

    pub fn project(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        self.layout.check(d)?;
        PolyCoeffs::new(self.basis(self.degree), 3, self.projector_matrix()? * d)
    }

    /// Selector extracting the DOF vector of the 2D edge space on cell face `i`
    /// from an edge-family vector (layout: edges in loop order, `R`, `Rperp`).
    pub fn face_selector(&self, i: usize) -> Result<DMatrix<f64>> {
        self.require(Family::Edge, "face restriction")?;
        let fs = &self.face_spaces[i];
        let f = self.faces()[i].face;
        let mut s = DMatrix::zeros(fs.dim(), self.layout.total);
        let copy = |s: &mut DMatrix<f64>, from: &str, to: &str| {
            let a = self.layout.block(from).expect("3D block");
            let b = fs.layout().block(to).expect("2D block");
            debug_assert_eq!(a.len, b.len);
            for j in 0..a.len {
                s[(b.offset + j, a.offset + j)] = 1.0;
            }
        };
        for e in &fs.polygon().edges {
            let name = format!("edge{}", e.global);
            copy(&mut s, &name, &name);
        }
        copy(&mut s, &format!("face{f}:R"), "R");
        copy(&mut s, &format!("face{f}:Rperp"), "Rperp");
        Ok(s)
    }

    /// `(curl v)·n_f` on cell face `i`, in the face basis of degree `k-1`.
    pub fn curl_normal_trace_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        Ok(self.face_spaces[i].rot_matrix()? * self.face_selector(i)?)
    }

    /// Π⁰_k of the tangential part on cell face `i`, acting on edge-family DOFs.
    pub fn face_projector_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        Ok(self.face_spaces[i].projector_matrix()? * self.face_selector(i)?)
    }
}

/// `(curl v)·n_f` from the face blocks of an edge-family DOF vector.
pub fn curl_normal_trace(space: &LocalSpace3D, face: usize, d: &DVector<f64>) -> Result<PolyCoeffs> {
    space.layout().check(d)?;
    let i = space
        .faces()
        .iter()
        .position(|cf| cf.face == face)
        .ok_or_else(|| VemError::Schema(format!("face {face} does not belong to cell {}", space.cell())))?;
    let fs = space.face_space(i).expect("edge family");
    PolyCoeffs::new(fs.basis(space.degree() - 1), 1, space.curl_normal_trace_matrix(i)? * d)
}

/// Boundary edge space `B_k^edge(∂P)`: the 2D edge spaces of the faces glued
/// along shared edges.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryEdgeSpace {
    pub cell: usize,
    pub degree: i32,
    /// Local dimension of the 2D edge space on each face.
    pub face_dims: Vec<usize>,
    /// Edges counted once.
    pub edges: usize,
    pub dim: usize,
}

impl BoundaryEdgeSpace {
    pub fn new(space: &LocalSpace3D) -> Result<Self> {
        space.require(Family::Edge, "boundary edge space")?;
        let k = space.degree();
        let face_dims: Vec<usize> = (0..space.faces().len()).map(|i| space.face_spaces[i].dim()).collect();
        let edges = space.edges.len();
        let interior: usize = space
            .face_spaces
            .iter()
            .map(|fs| fs.dim() - fs.polygon().edges.len() * pi(k, 1))
            .sum();
        Ok(Self {
            cell: space.cell(),
            degree: k,
            face_dims,
            edges,
            dim: edges * pi(k, 1) + interior,
        })
    }
}

/// Projector `Π̃_k^S` of the enhanced edge space and the moment recovery built on it.
#[derive(Clone, Debug)]
pub struct EnhancementOperator {
    pub element: usize,
    pub degree: i32,
    /// Number of DOFs `N` the projector reads.
    pub n: usize,
    /// Columns span `Rort = {q ∈ R_k : ∫ q·r = 0 ∀ r ∈ R_{k-2}}` in `(P_k)^3`.
    pub rort: DMatrix<f64>,
    /// DOF evaluation of `(P_k)^3`, `N × 3π_k`.
    pub dofs: DMatrix<f64>,
    /// Diagonal of `S`.
    pub weights: DVector<f64>,
    /// `d ↦ Π̃ d` coefficients.
    projector: DMatrix<f64>,
    /// `d ↦ ∫ v·m` for monomials `m ∈ (P_k)^3`.
    moments: DMatrix<f64>,
    mass: DMatrix<f64>,
    basis: MonomialBasis,
}

/// Builds `Π̃_k^S` on an edge-family space; `S` defaults to the identity.
pub fn build_enhancement(space: &LocalSpace3D, s: Option<&DVector<f64>>) -> Result<EnhancementOperator> {
    space.require(Family::Edge, "enhancement")?;
    let k = space.degree();
    let n = space.dim();
    let ints = space.integrals();
    let weights = match s {
        Some(w) if w.len() != n => {
            return Err(VemError::LengthMismatch {
                what: "S weights",
                expected: n,
                got: w.len(),
            })
        }
        Some(w) if w.iter().any(|&x| !(x > 0.0)) => return Err(VemError::Singular("S must be positive definite".into())),
        Some(w) => w.clone(),
        None => DVector::from_element(n, 1.0),
    };
    let d = space.dof_matrix(k)?;
    let cols = d.ncols();
    let rank = linalg::checked_rank(&d, space.cell(), "edge DOF matrix")?;
    if rank != cols {
        return Err(VemError::RankDeficient {
            element: space.cell(),
            what: "edge DOF matrix on polynomials".into(),
            expected: cols,
            found: rank,
        });
    }
    let sqrt_w = DMatrix::from_diagonal(&weights.map(f64::sqrt));
    let qr = (&sqrt_w * &d).qr();
    let rhs = qr.q().transpose() * &sqrt_w;
    let projector = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| VemError::Singular("enhancement normal equations".into()))?;

    let mass = ints.vector_mass(k, k, 3)?;
    let rk = build_subspace(ints, SubspaceKind::R, k)?;
    let inner = space.inner_subspace().expect("R_{k-2}");
    let inner_emb = inner.embedded(k);
    let rort = if inner.is_empty() {
        rk.coeffs.clone()
    } else {
        let cross = inner_emb.transpose() * &mass * &rk.coeffs / ints.measure();
        &rk.coeffs * linalg::null_space(&cross, space.cell(), "Rort")?
    };
    let expected = rho(k, 3) - rho(k - 2, 3);
    if rort.ncols() != expected {
        return Err(VemError::RankDeficient {
            element: space.cell(),
            what: "Rort".into(),
            expected,
            found: rort.ncols(),
        });
    }
    let perp = space.perp_subspace().expect("R_k⊥");
    let vol = ints.measure();
    let mu_b = linalg::vstack(&[
        &(space.block_selector("Rperp") * vol),
        &(space.block_selector("R") * vol),
        &(rort.transpose() * &mass * &projector),
    ]);
    let b = linalg::hstack(&[&perp.coeffs, &inner_emb, &rort]);
    let moments = linalg::solve(&b.transpose(), &mu_b, "enhanced moment basis")?;
    Ok(EnhancementOperator {
        element: space.cell(),
        degree: k,
        n,
        rort,
        dofs: d,
        weights,
        projector,
        moments,
        mass,
        basis: ints.basis(k),
    })
}

impl EnhancementOperator {
    pub fn rort_dim(&self) -> usize {
        self.rort.ncols()
    }

    fn head<'a>(&self, d: &'a DVector<f64>) -> Result<nalgebra::DVectorView<'a, f64>> {
        if d.len() < self.n {
            return Err(VemError::LengthMismatch {
                what: "DOF vector",
                expected: self.n,
                got: d.len(),
            });
        }
        Ok(d.rows(0, self.n))
    }

    /// `Π̃_k^S v`; entries beyond the first `N` are ignored.
    pub fn apply(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        let head = self.head(d)?;
        PolyCoeffs::new(self.basis.clone(), 3, &self.projector * head)
    }

    /// Moments `∫ v·m` against the monomials of `(P_k)^3`.
    pub fn moments(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        let head = self.head(d)?;
        Ok(&self.moments * head)
    }

    /// `Π⁰_k v` of the enhanced space.
    pub fn l2_projection(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        let mu = self.moments(d)?;
        let c = linalg::solve_spd(&self.mass, &DMatrix::from_column_slice(mu.len(), 1, mu.as_slice()), "L2 projection")?;
        PolyCoeffs::new(self.basis.clone(), 3, c.column(0).into_owned())
    }

    /// DOFs of a polynomial followed by its normalized `Rort` moments.
    pub fn extended_dofs(&self, space: &LocalSpace3D, p: &PolyCoeffs) -> Result<DVector<f64>> {
        let d = space.dofs_of_polynomial(p)?;
        let p = space.integrals().localize(p)?;
        let q = p.basis().degree();
        let m = space.integrals().vector_mass(self.degree, q, 3)?;
        let extra = self.rort.transpose() * m * p.coeffs() / space.integrals().measure();
        let mut out = DVector::zeros(d.len() + extra.len());
        out.rows_mut(0, d.len()).copy_from(&d);
        out.rows_mut(d.len(), extra.len()).copy_from(&extra);
        Ok(out)
    }
}

/// Moments of an enhanced edge-space member against `(P_k)^3` monomials.
pub fn moments_via_enhancement(op: &EnhancementOperator, d: &DVector<f64>) -> Result<DVector<f64>> {
    op.moments(d)
}

/// Residuals of the two curl Green formulas for a pair of polynomial fields.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenResiduals {
    /// `∫ curl ψ·φ - ∫ ψ·curl φ - ∮ ψ·(φ∧n)`, relative.
    pub rot: f64,
    /// `∫ curl ψ·curl φ - ∫ ψ·(-Δφ + ∇ div φ) - ∮ ψ·(curl φ∧n)`, relative.
    pub rotrot: f64,
}

fn scalar_integral(ints: &ElementIntegrals, a: &PolyCoeffs, b: &PolyCoeffs) -> Result<f64> {
    let p = poly::dot(a, b)?;
    Ok(ints.integral(&p)?[0])
}

/// `Σ_f s_f ∫_f ψ·(φ ∧ n_f)`.
fn boundary_wedge(ints: &ElementIntegrals, psi: &PolyCoeffs, phi: &PolyCoeffs) -> Result<f64> {
    let mut total = 0.0;
    for cf in ints.faces() {
        let n = cf.frame.normal;
        let nb = phi.basis().len();
        let c = phi.coeffs();
        let mut w = DVector::zeros(3 * nb);
        // (φ ∧ n)_i = φ_j n_k - φ_k n_j
        for (i, j, kk) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            for a in 0..nb {
                w[i * nb + a] = c[j * nb + a] * n[kk] - c[kk * nb + a] * n[j];
            }
        }
        let wedge = PolyCoeffs::new(phi.basis().clone(), 3, w)?;
        let integrand = poly::dot(psi, &wedge)?;
        let q = integrand.basis().degree();
        let fb = cf.basis(q);
        let r = face_restriction(integrand.basis(), &cf.frame, &fb)?;
        let fi = ElementIntegrals::polygon(&cf.polygon)?;
        let m = fi.moments(q)?;
        total += cf.sign * m.dot(&(r * integrand.coeffs()));
    }
    Ok(total)
}

fn relative(terms: &[f64]) -> f64 {
    let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    (terms[0] - terms[1..].iter().sum::<f64>()).abs() / scale
}

/// Evaluates both Green formulas on a cell with exact integration.
pub fn green_residuals(ints: &ElementIntegrals, psi: &PolyCoeffs, phi: &PolyCoeffs) -> Result<GreenResiduals> {
    let psi = ints.localize(psi)?;
    let phi = ints.localize(phi)?;
    let curl_psi = poly::apply(DiffOp::Curl, &psi)?;
    let curl_phi = poly::apply(DiffOp::Curl, &phi)?;
    let rot = relative(&[
        scalar_integral(ints, &curl_psi, &phi)?,
        scalar_integral(ints, &psi, &curl_phi)?,
        boundary_wedge(ints, &psi, &phi)?,
    ]);
    // -Δφ + ∇ div φ, componentwise
    let lap = {
        let b = phi.basis();
        let lm = poly::diff_matrix(DiffOp::Laplacian, b)?;
        let nb = b.len();
        let mut c = DVector::zeros(3 * lm.nrows());
        for i in 0..3 {
            let block = &lm * phi.coeffs().rows(i * nb, nb);
            c.rows_mut(i * lm.nrows(), lm.nrows()).copy_from(&block);
        }
        PolyCoeffs::new(b.with_degree(b.degree() - 2), 3, c)?
    };
    let grad_div = poly::apply(DiffOp::Grad, &poly::apply(DiffOp::Div, &phi)?)?;
    let deg = grad_div.basis().degree();
    let op = PolyCoeffs::new(
        grad_div.basis().clone(),
        3,
        grad_div.coeffs() - lap.with_degree(deg)?.coeffs(),
    )?;
    let rotrot = relative(&[
        scalar_integral(ints, &curl_psi, &curl_phi)?,
        scalar_integral(ints, &psi, &op)?,
        boundary_wedge(ints, &psi, &curl_phi)?,
    ]);
    Ok(GreenResiduals { rot, rotrot })
}

/// Closed-form global dimension; the second value is the alternative count
/// for the edge family with `ρ_{k-1,3}` in the interior term.
pub fn global_dim_formula_3d(mesh: &Mesh, family: Family, k: i32) -> (usize, Option<usize>) {
    let (nv, ne, nf, nc) = (mesh.vertices().len(), mesh.edges().len(), mesh.faces().len(), mesh.cells().len());
    match family {
        Family::Face => (pi(k, 2) * nf + (gamma(k - 2, 3) + rho(k - 1, 3)) * nc, None),
        Family::Edge => {
            let base = pi(k, 1) * ne + (2 * pi(k - 1, 2) - 1) * nf;
            (base + (pi(k - 1, 3) + rho(k - 2, 3)) * nc, Some(base + (pi(k - 1, 3) + rho(k - 1, 3)) * nc))
        }
        Family::Vert => (nv + pi(k - 2, 1) * ne + pi(k - 2, 2) * nf + pi(k - 2, 3) * nc, None),
        Family::Elem => (pi(k, 3) * nc, None),
    }
}

/// Local spaces of every cell.
pub fn local_spaces_3d(mesh: &Mesh, family: Family, k: i32) -> Result<Vec<LocalSpace3D>> {
    use rayon::prelude::*;
    if mesh.dim() != 3 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| LocalSpace3D::new(mesh, c, family, k))
        .collect()
}

pub fn assemble_global_3d(mesh: &Mesh, family: Family, k: i32) -> Result<GlobalDofMap> {
    let spaces = local_spaces_3d(mesh, family, k)?;
    let layouts: Vec<DofLayout> = spaces.iter().map(|s| s.layout().clone()).collect();
    let (dim, local_to_global) = number_dofs(&layouts)?;
    let (closed_form, closed_form_alt) = global_dim_formula_3d(mesh, family, k);
    Ok(GlobalDofMap {
        family,
        degree: k,
        dim,
        local_to_global,
        closed_form,
        closed_form_alt,
    })
}

/// Global DOF vector of a polynomial defined on the whole mesh.
pub fn global_dofs_of_polynomial_3d(spaces: &[LocalSpace3D], map: &GlobalDofMap, p: &PolyCoeffs) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(map.dim);
    for (s, l2g) in spaces.iter().zip(&map.local_to_global) {
        let d = s.dofs_of_polynomial(p)?;
        for (i, &g) in l2g.iter().enumerate() {
            out[g] = d[i];
        }
    }
    Ok(out)
}
