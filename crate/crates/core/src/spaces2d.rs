//! Two-dimensional virtual spaces: face (`H(div)`), edge (`H(rot)`),
//! vertex (`H¹`) and element (`L²`) families.
//!
//! Every DOF is a normalized moment: edge moments carry `1/|e|`, interior
//! moments `1/|E|`, vertex values are taken as they are. Edge functionals use
//! the global edge orientation (tangent `t`, normal `n = (t_y, -t_x)`) and the
//! edge basis `s^j` with `s = σ/|e| - 1/2 ∈ [-1/2, 1/2]`, where `σ` is the
//! arclength from the global start vertex. Two elements sharing an edge
//! therefore produce identical values for the shared functionals, and no
//! per-element sign is needed at assembly.
//!
//! Block order inside one element:
//!
//! * face: edge moments of `v·n` (loop order), `G_{k-2}`, `G_k⊥`;
//! * edge: edge moments of `v·t` (loop order), `R_{k-2}`, `R_k⊥`;
//! * vert: vertex values (loop order), edge moments to `k-2`, interior moments to `k-2`;
//! * elem: interior moments against `P_k`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VemError};
use crate::geom::{Mesh, Polygon};
use crate::integrate::{build_subspace, ElementIntegrals, SubspaceBasis, SubspaceKind};
use crate::linalg;
use crate::poly::{self, pi, DiffOp, MonomialBasis, PolyCoeffs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Face,
    Edge,
    Vert,
    Elem,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Face => "face",
            Family::Edge => "edge",
            Family::Vert => "vert",
            Family::Elem => "elem",
        }
    }

    /// Components of the fields of this family in dimension `d`.
    pub fn components(self, d: usize) -> usize {
        match self {
            Family::Face | Family::Edge => d,
            Family::Vert | Family::Elem => 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = VemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face" => Ok(Family::Face),
            "edge" => Ok(Family::Edge),
            "vert" => Ok(Family::Vert),
            "elem" => Ok(Family::Elem),
            other => Err(VemError::Schema(format!("unknown family '{other}' (expected face, edge, vert or elem)"))),
        }
    }
}

/// Boundary, divergence-side and rotation-side degrees of a space variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub kb: i32,
    pub kd: i32,
    pub kr: i32,
}

impl DegreeProfile {
    /// `(k, k-1, k-1)`.
    pub fn standard(k: i32) -> Self {
        Self { kb: k, kd: k - 1, kr: k - 1 }
    }

    /// `(k, k, k-1)`.
    pub fn raviart_thomas(k: i32) -> Self {
        Self { kb: k, kd: k, kr: k - 1 }
    }

    pub fn validate(&self, family: Family) -> Result<()> {
        let bad = |reason: &str| VemError::InvalidProfile {
            kb: self.kb,
            kd: self.kd,
            kr: self.kr,
            reason: reason.to_string(),
        };
        if self.kb < -1 || self.kd < -1 || self.kr < -1 {
            return Err(bad("every degree must be at least -1"));
        }
        match family {
            Family::Vert if self.kb < 1 => Err(bad("vertex spaces need a boundary degree of at least 1")),
            Family::Elem if self.kb < 0 => Err(bad("element spaces need a degree of at least 0")),
            _ => Ok(()),
        }
    }
}

impl FromStr for DegreeProfile {
    type Err = VemError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(VemError::Schema(format!("profile '{s}' must have the form kb,kd,kr")));
        }
        let num = |p: &str| p.parse::<i32>().map_err(|_| VemError::Schema(format!("profile entry '{p}' is not an integer")));
        Ok(Self {
            kb: num(parts[0])?,
            kd: num(parts[1])?,
            kr: num(parts[2])?,
        })
    }
}

pub(crate) fn check_family_degree(family: Family, k: i32) -> Result<()> {
    let min = if family == Family::Elem { 0 } else { 1 };
    if k < min {
        return Err(VemError::InvalidDegree {
            degree: k,
            reason: format!("the {family} family needs k >= {min}"),
        });
    }
    Ok(())
}

/// Compatibility constraint `∫ div = ∮ flux` removed from the count unless both sides vanish.
fn constraint(kb: i32, kd: i32) -> usize {
    usize::from(!(kb == -1 && kd == -1))
}

/// Local dimension from the element counts `ℓ_v`, `ℓ_e`.
pub fn dim_formula_2d(family: Family, lv: usize, le: usize, k: i32, profile: Option<DegreeProfile>) -> Result<usize> {
    let p = match profile {
        Some(p) => p,
        None => {
            check_family_degree(family, k)?;
            DegreeProfile::standard(k)
        }
    };
    p.validate(family)?;
    let DegreeProfile { kb, kd, kr } = p;
    Ok(match family {
        Family::Face => le * pi(kb, 1) + pi(kd, 2) + pi(kr, 2) - constraint(kb, kd),
        Family::Edge => le * pi(kb, 1) + pi(kr, 2) + pi(kd, 2) - constraint(kb, kr),
        Family::Vert => lv + le * pi(kb - 2, 1) + pi(kd - 1, 2),
        Family::Elem => pi(kb, 2),
    })
}

/// Local dimension of a family on element `element` of a 2D mesh.
pub fn dim_local_2d(mesh: &Mesh, element: usize, family: Family, k: i32, profile: Option<DegreeProfile>) -> Result<usize> {
    if mesh.dim() != 2 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    let (lv, le, _) = mesh.element_counts(element);
    dim_formula_2d(family, lv, le, k, profile)
}

/// Mesh entity owning a block of DOFs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "entity", content = "id", rename_all = "lowercase")]
pub enum Entity {
    Vertex(usize),
    Edge(usize),
    Face(usize),
    Cell(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DofBlock {
    pub name: String,
    pub entity: Entity,
    pub offset: usize,
    pub len: usize,
}

/// Ordered DOF blocks of one local space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DofLayout {
    pub family: Family,
    pub element: usize,
    pub degree: i32,
    pub blocks: Vec<DofBlock>,
    /// Normalization factor applied to each functional.
    pub weights: Vec<f64>,
    pub total: usize,
}

impl DofLayout {
    pub(crate) fn new(family: Family, element: usize, degree: i32) -> Self {
        Self {
            family,
            element,
            degree,
            blocks: Vec::new(),
            weights: Vec::new(),
            total: 0,
        }
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, entity: Entity, len: usize, weight: f64) -> usize {
        let offset = self.total;
        self.blocks.push(DofBlock {
            name: name.into(),
            entity,
            offset,
            len,
        });
        self.weights.extend(std::iter::repeat(weight).take(len));
        self.total += len;
        offset
    }

    pub fn block(&self, name: &str) -> Option<&DofBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn check(&self, d: &DVector<f64>) -> Result<()> {
        if d.len() != self.total {
            return Err(VemError::LengthMismatch {
                what: "DOF vector",
                expected: self.total,
                got: d.len(),
            });
        }
        Ok(())
    }
}

/// Assigns global numbers to the DOFs of a set of local layouts.
///
/// Entities are numbered vertices first, then edges, faces, cells, each by
/// id; blocks owned by the same entity keep their local order.
pub fn number_dofs(layouts: &[DofLayout]) -> Result<(usize, Vec<Vec<usize>>)> {
    let mut sizes: BTreeMap<Entity, Vec<(String, usize)>> = BTreeMap::new();
    for l in layouts {
        let mut seen: BTreeMap<Entity, Vec<(String, usize)>> = BTreeMap::new();
        for b in &l.blocks {
            seen.entry(b.entity).or_default().push((b.name.clone(), b.len));
        }
        for (ent, list) in seen {
            match sizes.get(&ent) {
                Some(prev) if *prev != list => {
                    return Err(VemError::Schema(format!(
                        "element {} disagrees with a neighbour on the DOF blocks of {ent:?}",
                        l.element
                    )))
                }
                Some(_) => {}
                None => {
                    sizes.insert(ent, list);
                }
            }
        }
    }
    let mut base: BTreeMap<Entity, usize> = BTreeMap::new();
    let mut next = 0;
    for (ent, list) in &sizes {
        base.insert(*ent, next);
        next += list.iter().map(|(_, n)| n).sum::<usize>();
    }
    let maps = layouts
        .iter()
        .map(|l| {
            let mut used: BTreeMap<Entity, usize> = BTreeMap::new();
            let mut map = Vec::with_capacity(l.total);
            for b in &l.blocks {
                let off = used.entry(b.entity).or_insert(0);
                let start = base[&b.entity] + *off;
                map.extend(start..start + b.len);
                *off += b.len;
            }
            map
        })
        .collect();
    Ok((next, maps))
}

/// `(1/|e|) ∫_e s^j s^l dσ = ∫_{-1/2}^{1/2} s^(j+l) ds`.
pub(crate) fn edge_gram(a: i32, b: i32) -> DMatrix<f64> {
    let (na, nb) = (pi(a, 1), pi(b, 1));
    DMatrix::from_fn(na, nb, |j, l| {
        let n = j + l;
        if n % 2 == 1 {
            0.0
        } else {
            1.0 / ((n + 1) as f64 * 2f64.powi(n as i32))
        }
    })
}

/// Edge parameter basis: centre `|e|/2`, scale `|e|`, in arclength `σ`.
pub(crate) fn edge_basis(length: f64, k: i32) -> MonomialBasis {
    MonomialBasis::new(1, k, &[0.5 * length], length).expect("edge basis is valid")
}

/// Global DOF numbering of one family on a mesh.
#[derive(Clone, Debug, Serialize)]
pub struct GlobalDofMap {
    pub family: Family,
    pub degree: i32,
    pub dim: usize,
    /// Local DOF `i` of element `e` is global DOF `local_to_global[e][i]`.
    pub local_to_global: Vec<Vec<usize>>,
    /// Closed-form global dimension.
    pub closed_form: usize,
    /// The alternative closed form printed for the 3D edge family (see the crate notes).
    pub closed_form_alt: Option<usize>,
}

/// Local space of one family on one polygon.
#[derive(Clone, Debug)]
pub struct LocalSpace2D {
    family: Family,
    degree: i32,
    poly: Polygon,
    ints: ElementIntegrals,
    layout: DofLayout,
    /// `G_{k-2}` (face) or `R_{k-2}` (edge).
    inner: Option<SubspaceBasis>,
    /// `G_k⊥` (face) or `R_k⊥` (edge).
    perp: Option<SubspaceBasis>,
}

impl LocalSpace2D {
    /// Builds the space on a polygon; interior DOFs are attributed to `interior`.
    pub fn new(poly: Polygon, family: Family, k: i32, interior: Entity) -> Result<Self> {
        check_family_degree(family, k)?;
        let ints = ElementIntegrals::polygon(&poly)?;
        let mut layout = DofLayout::new(family, poly.id, k);
        let (mut inner, mut perp) = (None, None);
        let area = poly.area;
        match family {
            Family::Face | Family::Edge => {
                let (ik, pk, what) = if family == Family::Face {
                    (SubspaceKind::G, SubspaceKind::Gperp, ("G", "Gperp"))
                } else {
                    (SubspaceKind::R, SubspaceKind::Rperp, ("R", "Rperp"))
                };
                for e in &poly.edges {
                    layout.push(format!("edge{}", e.global), Entity::Edge(e.global), pi(k, 1), 1.0 / e.length);
                }
                let a = build_subspace(&ints, ik, k - 2)?;
                let b = build_subspace(&ints, pk, k)?;
                layout.push(what.0, interior, a.len(), 1.0 / area);
                layout.push(what.1, interior, b.len(), 1.0 / area);
                inner = Some(a);
                perp = Some(b);
            }
            Family::Vert => {
                return Err(VemError::Unsupported {
                    family: "vert",
                    operation: "construction without vertex ids (use LocalSpace2D::for_element)",
                })
            }
            Family::Elem => {
                layout.push("P", interior, pi(k, 2), 1.0 / area);
            }
        }
        Ok(Self {
            family,
            degree: k,
            poly,
            ints,
            layout,
            inner,
            perp,
        })
    }

    /// Space of a family on element `element` of a 2D mesh.
    pub fn for_element(mesh: &Mesh, element: usize, family: Family, k: i32) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(VemError::UnsupportedDimension(mesh.dim()));
        }
        let poly = Polygon::from_face(mesh, element);
        if family != Family::Vert {
            return Self::new(poly, family, k, Entity::Face(element));
        }
        check_family_degree(family, k)?;
        let ints = ElementIntegrals::polygon(&poly)?;
        let mut layout = DofLayout::new(family, element, k);
        for &v in &mesh.faces()[element].vertices {
            layout.push(format!("vertex{v}"), Entity::Vertex(v), 1, 1.0);
        }
        for e in &poly.edges {
            layout.push(format!("edge{}", e.global), Entity::Edge(e.global), pi(k - 2, 1), 1.0 / e.length);
        }
        layout.push("P", Entity::Face(element), pi(k - 2, 2), 1.0 / poly.area);
        Ok(Self {
            family,
            degree: k,
            poly,
            ints,
            layout,
            inner: None,
            perp: None,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> i32 {
        self.degree
    }

    pub fn polygon(&self) -> &Polygon {
        &self.poly
    }

    pub fn integrals(&self) -> &ElementIntegrals {
        &self.ints
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total
    }

    /// `G_{k-2}` or `R_{k-2}`.
    pub fn inner_subspace(&self) -> Option<&SubspaceBasis> {
        self.inner.as_ref()
    }

    /// `G_k⊥` or `R_k⊥`.
    pub fn perp_subspace(&self) -> Option<&SubspaceBasis> {
        self.perp.as_ref()
    }

    pub fn basis(&self, k: i32) -> MonomialBasis {
        self.ints.basis(k)
    }

    fn edge_offset(&self, i: usize) -> usize {
        let per = match self.family {
            Family::Vert => pi(self.degree - 2, 1),
            _ => pi(self.degree, 1),
        };
        let start = if self.family == Family::Vert { self.poly.coords.len() } else { 0 };
        start + i * per
    }

    /// `∫_e s^j m_α dσ` for `j ≤ trace`, `m_α ∈ P_q` on the element basis.
    pub fn edge_cross(&self, i: usize, trace: i32, q: i32) -> DMatrix<f64> {
        let e = &self.poly.edges[i];
        let eb = edge_basis(e.length, trace);
        let b = self.basis(q);
        let mut x = DMatrix::zeros(eb.len(), b.len());
        if eb.is_empty() || b.is_empty() {
            return x;
        }
        for (t, w) in crate::integrate::gauss_unit((trace.max(0) + q.max(0)) as usize) {
            let sigma = t * e.length;
            let p = e.point(sigma);
            let sv = eb.eval(&[sigma]);
            let mv = b.eval(&[p[0], p[1]]);
            for j in 0..sv.len() {
                for a in 0..mv.len() {
                    x[(j, a)] += w * e.length * sv[j] * mv[a];
                }
            }
        }
        x
    }

    /// Matrix of all DOF functionals applied to `(P_q)^c` on the element basis.
    pub fn dof_matrix(&self, q: i32) -> Result<DMatrix<f64>> {
        let k = self.degree;
        let nq = pi(q, 2);
        let comps = self.family.components(2);
        let mut d = DMatrix::zeros(self.layout.total, comps * nq);
        if nq == 0 {
            return Ok(d);
        }
        let area = self.poly.area;
        match self.family {
            Family::Face | Family::Edge => {
                for (i, e) in self.poly.edges.iter().enumerate() {
                    let dir = if self.family == Family::Face { e.normal() } else { e.tangent };
                    let x = self.edge_cross(i, k, q) / e.length;
                    let off = self.edge_offset(i);
                    for c in 0..2 {
                        let block = &x * dir[c];
                        d.view_mut((off, c * nq), (x.nrows(), nq)).copy_from(&block);
                    }
                }
                let mut row = self.poly.edges.len() * pi(k, 1);
                for s in [self.inner.as_ref(), self.perp.as_ref()].into_iter().flatten() {
                    if s.is_empty() {
                        continue;
                    }
                    let m = self.ints.vector_mass(s.degree, q, 2)?;
                    let rows = s.coeffs.transpose() * m / area;
                    d.view_mut((row, 0), (rows.nrows(), rows.ncols())).copy_from(&rows);
                    row += rows.nrows();
                }
            }
            Family::Vert => {
                let b = self.basis(q);
                for (i, p) in self.poly.coords.iter().enumerate() {
                    let v = b.eval(&[p[0], p[1]]);
                    for (a, val) in v.into_iter().enumerate() {
                        d[(i, a)] = val;
                    }
                }
                for (i, e) in self.poly.edges.iter().enumerate() {
                    let x = self.edge_cross(i, k - 2, q) / e.length;
                    d.view_mut((self.edge_offset(i), 0), (x.nrows(), nq)).copy_from(&x);
                }
                let m = self.ints.mass(k - 2, q)? / area;
                let off = self.layout.total - m.nrows();
                d.view_mut((off, 0), (m.nrows(), nq)).copy_from(&m);
            }
            Family::Elem => {
                let m = self.ints.mass(k, q)? / area;
                d.copy_from(&m);
            }
        }
        Ok(d)
    }

    /// DOF values of a polynomial (vector for face/edge, scalar for vert/elem).
    pub fn dofs_of_polynomial(&self, p: &PolyCoeffs) -> Result<DVector<f64>> {
        let comps = self.family.components(2);
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

    /// Coefficients (in `s`) of the trace on edge `i`: `v·n` (face), `v·t`
    /// (edge) or `φ` (vert), as a matrix acting on DOF vectors.
    pub fn edge_trace_matrix(&self, i: usize) -> Result<DMatrix<f64>> {
        let k = self.degree;
        let n = self.layout.total;
        let nk = pi(k, 1);
        let mut t = DMatrix::zeros(nk, n);
        match self.family {
            Family::Face | Family::Edge => {
                let g = linalg::inverse(&edge_gram(k, k), "edge gram")?;
                t.view_mut((0, self.edge_offset(i)), (nk, nk)).copy_from(&g);
            }
            Family::Vert => {
                let nv = self.poly.coords.len();
                let e = &self.poly.edges[i];
                let (start, end) = if e.sign > 0.0 { (i, (i + 1) % nv) } else { ((i + 1) % nv, i) };
                let mut a = DMatrix::zeros(nk, nk);
                let mut sel = DMatrix::zeros(nk, n);
                for l in 0..nk {
                    a[(0, l)] = (-0.5f64).powi(l as i32);
                    a[(1, l)] = 0.5f64.powi(l as i32);
                }
                sel[(0, start)] = 1.0;
                sel[(1, end)] = 1.0;
                let g = edge_gram(k - 2, k);
                let off = self.edge_offset(i);
                for j in 0..g.nrows() {
                    a.row_mut(2 + j).copy_from(&g.row(j));
                    sel[(2 + j, off + j)] = 1.0;
                }
                t = linalg::solve(&a, &sel, "vertex edge trace")?;
            }
            Family::Elem => {
                return Err(VemError::Unsupported {
                    family: "elem",
                    operation: "edge traces",
                })
            }
        }
        Ok(t)
    }

    /// `∮ (trace) m_β` with the outward orientation, rows `β ∈ P_q`, acting on DOFs.
    ///
    /// For the face family the trace is `v·n_out`, for the edge family `v·t_out`
    /// (counterclockwise tangent), for vertex spaces `φ` itself.
    pub fn boundary_pairing(&self, q: i32) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(pi(q, 2), self.layout.total);
        for (i, e) in self.poly.edges.iter().enumerate() {
            let t = self.edge_trace_matrix(i)?;
            let x = self.edge_cross(i, self.degree, q);
            let sign = if self.family == Family::Vert { 1.0 } else { e.sign };
            out += x.transpose() * t * sign;
        }
        Ok(out)
    }

    /// Selector of a named DOF block (rows = block entries).
    pub(crate) fn block_selector(&self, name: &str) -> DMatrix<f64> {
        let b = self.layout.block(name).expect("block exists");
        let mut s = DMatrix::zeros(b.len, self.layout.total);
        for j in 0..b.len {
            s[(j, b.offset + j)] = 1.0;
        }
        s
    }

    /// `DOFs ↦ div v ∈ P_{k-1}` (face family).
    pub fn div_matrix(&self) -> Result<DMatrix<f64>> {
        if self.family != Family::Face {
            return Err(VemError::Unsupported {
                family: static_name(self.family),
                operation: "divergence recovery",
            });
        }
        self.derivative_matrix("G", -1.0)
    }

    /// `DOFs ↦ rot v ∈ P_{k-1}` (edge family).
    pub fn rot_matrix(&self) -> Result<DMatrix<f64>> {
        if self.family != Family::Edge {
            return Err(VemError::Unsupported {
                family: static_name(self.family),
                operation: "rotation recovery",
            });
        }
        self.derivative_matrix("R", 1.0)
    }

    /// Solves `∫ D v q = ∮ (trace) q + sign ∫ v·X q` with `X q = (1/h) · block column`.
    fn derivative_matrix(&self, block: &str, sign: f64) -> Result<DMatrix<f64>> {
        let k = self.degree;
        let mut rhs = self.boundary_pairing(k - 1)?;
        let b = self.layout.block(block).expect("interior block");
        let scale = sign * self.poly.area / self.ints.scale();
        for j in 0..b.len {
            rhs[(j + 1, b.offset + j)] += scale;
        }
        linalg::solve_spd(&self.ints.mass(k - 1, k - 1)?, &rhs, "derivative recovery")
    }

    pub fn div_from_dofs(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        self.layout.check(d)?;
        PolyCoeffs::new(self.basis(self.degree - 1), 1, self.div_matrix()? * d)
    }

    pub fn rot_from_dofs(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        self.layout.check(d)?;
        PolyCoeffs::new(self.basis(self.degree - 1), 1, self.rot_matrix()? * d)
    }

    /// Moments `∫ v·m` of the field against every member of `(P_k)^2`, acting on DOFs.
    pub fn moment_matrix(&self) -> Result<DMatrix<f64>> {
        let k = self.degree;
        let (img_kind, perp_name, deriv) = match self.family {
            Family::Face => (SubspaceKind::G, "Gperp", self.div_matrix()?),
            Family::Edge => (SubspaceKind::R, "Rperp", self.rot_matrix()?),
            _ => {
                return Err(VemError::Unsupported {
                    family: static_name(self.family),
                    operation: "L2 projection",
                })
            }
        };
        let img = build_subspace(&self.ints, img_kind, k)?;
        let perp = self.perp.as_ref().expect("perp block");
        let h = self.ints.scale();
        // face: ∫ v·h∇m = h(∮ v·n m - ∫ div v m); edge: ∫ v·h brot m = h(∫ rot v m - ∮ v·t m)
        let bnd = self.boundary_pairing(k + 1)?;
        let vol = self.ints.mass(k + 1, k - 1)? * deriv;
        let full = if self.family == Family::Face { (bnd - vol) * h } else { (vol - bnd) * h };
        let img_rows = full.rows(1, full.nrows() - 1).into_owned();
        let perp_rows = self.block_selector(perp_name) * self.poly.area;
        let mu_b = linalg::vstack(&[&img_rows, &perp_rows]);
        let b = linalg::hstack(&[&img.coeffs, &perp.coeffs]);
        // moments against monomials: μ = B^{-T} μ_B
        linalg::solve(&b.transpose(), &mu_b, "moment basis change")
    }

    /// `DOFs ↦ Π⁰_k v` coefficients in `(P_k)^2`.
    pub fn projector_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.ints.vector_mass(self.degree, self.degree, 2)?;
        linalg::solve_spd(&m, &self.moment_matrix()?, "L2 projection")
    }

    pub fn project(&self, d: &DVector<f64>) -> Result<PolyCoeffs> {
        self.layout.check(d)?;
        PolyCoeffs::new(self.basis(self.degree), 2, self.projector_matrix()? * d)
    }
}

fn static_name(f: Family) -> &'static str {
    f.name()
}

/// `|∫_E f_d - ∮ g|` for a face-family flux block and divergence data.
///
/// `flux` holds the edge blocks of a face-family DOF vector (loop order).
pub fn compatibility_residual_2d(space: &LocalSpace2D, flux: &[f64], fd: &PolyCoeffs) -> Result<f64> {
    if space.family() != Family::Face {
        return Err(VemError::Unsupported {
            family: static_name(space.family()),
            operation: "compatibility residual",
        });
    }
    let per = pi(space.degree(), 1);
    let edges = &space.polygon().edges;
    if flux.len() != edges.len() * per {
        return Err(VemError::LengthMismatch {
            what: "flux block",
            expected: edges.len() * per,
            got: flux.len(),
        });
    }
    let boundary: f64 = edges.iter().enumerate().map(|(i, e)| e.sign * e.length * flux[i * per]).sum();
    let interior = space.integrals().integral(fd)?[0];
    Ok((interior - boundary).abs())
}

/// Whether a polynomial field belongs to the local space of degree `k`.
#[derive(Clone, Debug, Serialize)]
pub struct Membership {
    pub member: bool,
    pub trace_degree: i32,
    pub div_degree: i32,
    pub rot_degree: i32,
}

const DEGREE_TOL: f64 = 1e-11;

/// Degree conditions of the face/edge definitions, checked on a polynomial field.
pub fn membership_2d(space: &LocalSpace2D, p: &PolyCoeffs) -> Result<Membership> {
    let k = space.degree();
    let p = space.integrals().localize(p)?;
    let q = p.basis().degree();
    let div = poly::apply(DiffOp::Div, &p)?;
    let rot = poly::apply(DiffOp::Rot, &p)?;
    let norm = p.coeffs().amax().max(f64::MIN_POSITIVE);
    let eff = |c: &PolyCoeffs| -> i32 {
        if c.coeffs().amax() <= DEGREE_TOL * norm {
            -1
        } else {
            c.effective_degree(DEGREE_TOL * norm / c.coeffs().amax())
        }
    };
    let mut trace_degree = -1;
    for e in &space.polygon().edges {
        let dir = if space.family() == Family::Face { e.normal() } else { e.tangent };
        // trace as a function of σ: fit on q+1 Gauss points of the edge
        let eb = edge_basis(e.length, q);
        let pts = crate::integrate::gauss_unit(2 * q.max(0) as usize);
        let mut a = DMatrix::zeros(pts.len(), eb.len());
        let mut rhs = DVector::zeros(pts.len());
        for (r, (t, _)) in pts.iter().enumerate() {
            let sigma = t * e.length;
            let x = e.point(sigma);
            let v = p.eval(&[x[0], x[1]]);
            rhs[r] = v[0] * dir[0] + v[1] * dir[1];
            for (c, val) in eb.eval(&[sigma]).into_iter().enumerate() {
                a[(r, c)] = val;
            }
        }
        let c = a.svd(true, true).solve(&rhs, 1e-14).map_err(|e| VemError::Singular(e.to_string()))?;
        let tp = PolyCoeffs::new(eb, 1, c)?;
        trace_degree = trace_degree.max(eff(&tp));
    }
    let (dd, rd) = (eff(&div), eff(&rot));
    let member = trace_degree <= k && dd <= k - 1 && rd <= k - 1;
    Ok(Membership {
        member,
        trace_degree,
        div_degree: dd,
        rot_degree: rd,
    })
}

/// Closed-form global dimension of a 2D family.
pub fn global_dim_formula_2d(mesh: &Mesh, family: Family, k: i32) -> usize {
    let (nv, ne, nf) = (mesh.vertices().len(), mesh.edges().len(), mesh.faces().len());
    match family {
        Family::Face | Family::Edge => pi(k, 1) * ne + (2 * pi(k - 1, 2) - 1) * nf,
        Family::Vert => nv + pi(k - 2, 1) * ne + pi(k - 2, 2) * nf,
        Family::Elem => pi(k, 2) * nf,
    }
}

/// Local spaces of every element of a 2D mesh.
pub fn local_spaces_2d(mesh: &Mesh, family: Family, k: i32) -> Result<Vec<LocalSpace2D>> {
    use rayon::prelude::*;
    (0..mesh.faces().len())
        .into_par_iter()
        .map(|e| LocalSpace2D::for_element(mesh, e, family, k))
        .collect()
}

/// Global DOF map of a 2D family, with the closed-form count for comparison.
pub fn assemble_global_2d(mesh: &Mesh, family: Family, k: i32) -> Result<GlobalDofMap> {
    if mesh.dim() != 2 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    let spaces = local_spaces_2d(mesh, family, k)?;
    let layouts: Vec<DofLayout> = spaces.iter().map(|s| s.layout().clone()).collect();
    let (dim, local_to_global) = number_dofs(&layouts)?;
    Ok(GlobalDofMap {
        family,
        degree: k,
        dim,
        local_to_global,
        closed_form: global_dim_formula_2d(mesh, family, k),
        closed_form_alt: None,
    })
}

/// Global DOF vector of a polynomial defined on the whole mesh.
pub fn global_dofs_of_polynomial_2d(spaces: &[LocalSpace2D], map: &GlobalDofMap, p: &PolyCoeffs) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(map.dim);
    for (s, l2g) in spaces.iter().zip(&map.local_to_global) {
        let d = s.dofs_of_polynomial(p)?;
        for (i, &g) in l2g.iter().enumerate() {
            out[g] = d[i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshes;
    use approx::assert_relative_eq;

    fn field(terms: &[(usize, [u32; 3], f64)], deg: i32) -> PolyCoeffs {
        PolyCoeffs::from_terms(MonomialBasis::unit(2, deg).unwrap(), 2, terms).unwrap()
    }

    #[test]
    fn local_dimension_examples() {
        let sq = meshes::unit_square();
        assert_eq!(dim_local_2d(&sq, 0, Family::Face, 1, None).unwrap(), 9);
        assert_eq!(dim_local_2d(&meshes::pentagon(), 0, Family::Face, 1, None).unwrap(), 11);
        assert_eq!(dim_local_2d(&sq, 0, Family::Edge, 2, None).unwrap(), 17);
        let bad = DegreeProfile { kb: 1, kd: -2, kr: 0 };
        assert!(dim_local_2d(&sq, 0, Family::Face, 1, Some(bad)).is_err());
        for fam in [Family::Face, Family::Edge, Family::Vert, Family::Elem] {
            for k in 1..=3 {
                let s = LocalSpace2D::for_element(&sq, 0, fam, k).unwrap();
                assert_eq!(s.dim(), dim_local_2d(&sq, 0, fam, k, None).unwrap());
            }
        }
    }

    #[test]
    fn divergence_examples() {
        let s = LocalSpace2D::for_element(&meshes::pentagon(), 0, Family::Face, 2).unwrap();
        let cases = [
            (field(&[(0, [1, 0, 0], 1.0), (1, [0, 1, 0], 1.0)], 1), 2.0),
            (field(&[(0, [0, 1, 0], -1.0), (1, [1, 0, 0], 1.0)], 1), 0.0),
            (field(&[(0, [1, 0, 0], 2.0), (1, [0, 1, 0], -2.0)], 1), 0.0),
        ];
        for (v, expected) in cases {
            let d = s.dofs_of_polynomial(&v).unwrap();
            let div = s.div_from_dofs(&d).unwrap();
            assert_relative_eq!(div.eval(&[0.1, 0.2])[0], expected, epsilon = 1e-12);
            assert!(div.coeffs().rows(1, div.coeffs().len() - 1).amax() < 1e-12);
        }
    }

    #[test]
    fn rotation_examples() {
        let s = LocalSpace2D::for_element(&meshes::voronoi5(), 2, Family::Edge, 2).unwrap();
        let cases = [
            (field(&[(0, [0, 1, 0], -1.0), (1, [1, 0, 0], 1.0)], 1), 2.0),
            (field(&[(0, [1, 0, 0], 1.0), (1, [0, 1, 0], 1.0)], 1), 0.0),
            (field(&[(0, [0, 1, 0], -2.0), (1, [1, 0, 0], -2.0)], 1), 0.0),
        ];
        for (v, expected) in cases {
            let d = s.dofs_of_polynomial(&v).unwrap();
            let rot = s.rot_from_dofs(&d).unwrap();
            assert_relative_eq!(rot.eval(&[0.3, 0.9])[0], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn projector_reproduces_constants() {
        for fam in [Family::Face, Family::Edge] {
            let s = LocalSpace2D::for_element(&meshes::unit_square(), 0, fam, 1).unwrap();
            let v = field(&[(0, [0, 0, 0], 1.0)], 0);
            let p = s.project(&s.dofs_of_polynomial(&v).unwrap()).unwrap();
            let val = p.eval(&[0.3, 0.7]);
            assert_relative_eq!(val[0], 1.0, epsilon = 1e-12);
            assert!(val[1].abs() < 1e-12);
        }
    }

    #[test]
    fn compatibility_examples() {
        let s = LocalSpace2D::for_element(&meshes::unit_square(), 0, Family::Face, 1).unwrap();
        let b0 = MonomialBasis::unit(2, 0).unwrap();
        let zero = PolyCoeffs::zeros(b0.clone(), 1);
        let one = PolyCoeffs::from_terms(b0.clone(), 1, &[(0, [0, 0, 0], 1.0)]).unwrap();
        let two = PolyCoeffs::from_terms(b0, 1, &[(0, [0, 0, 0], 2.0)]).unwrap();
        assert_eq!(compatibility_residual_2d(&s, &[0.0; 8], &zero).unwrap(), 0.0);
        assert_relative_eq!(compatibility_residual_2d(&s, &[0.0; 8], &one).unwrap(), 1.0, epsilon = 1e-14);
        let v = field(&[(0, [1, 0, 0], 1.0), (1, [0, 1, 0], 1.0)], 1);
        let d = s.dofs_of_polynomial(&v).unwrap();
        assert!(compatibility_residual_2d(&s, &d.as_slice()[..8], &two).unwrap() < 1e-13);
    }

    #[test]
    fn projector_is_exact_on_polynomials() {
        let m = meshes::voronoi5();
        for e in 0..m.faces().len() {
            for fam in [Family::Face, Family::Edge] {
                for k in 1..=3 {
                    let s = LocalSpace2D::for_element(&m, e, fam, k).unwrap();
                    let b = s.basis(k);
                    let c = DVector::from_fn(2 * b.len(), |i, _| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4);
                    let p = PolyCoeffs::new(b, 2, c.clone()).unwrap();
                    let proj = s.project(&s.dofs_of_polynomial(&p).unwrap()).unwrap();
                    assert!((proj.coeffs() - &c).amax() < 1e-10, "{fam} k={k} e={e}");
                }
            }
        }
    }

    #[test]
    fn vertex_traces_recover_polynomials() {
        let m = meshes::pentagon();
        let s = LocalSpace2D::for_element(&m, 0, Family::Vert, 3).unwrap();
        let b = s.basis(3);
        let p = PolyCoeffs::new(b.clone(), 1, DVector::from_fn(b.len(), |i, _| 1.0 + i as f64)).unwrap();
        let d = s.dofs_of_polynomial(&p).unwrap();
        for (i, e) in s.polygon().edges.iter().enumerate() {
            let c = s.edge_trace_matrix(i).unwrap() * &d;
            let eb = edge_basis(e.length, 3);
            let sigma = 0.3 * e.length;
            let x = e.point(sigma);
            let got: f64 = eb.eval(&[sigma]).iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            assert_relative_eq!(got, p.eval(&[x[0], x[1]])[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn membership_follows_degree_conditions() {
        let s = LocalSpace2D::for_element(&meshes::unit_square(), 0, Family::Face, 1).unwrap();
        let inside = field(&[(0, [1, 0, 0], 1.0), (1, [0, 1, 0], 1.0)], 1);
        assert!(membership_2d(&s, &inside).unwrap().member);
        let outside = field(&[(0, [2, 0, 0], 1.0)], 2);
        assert!(!membership_2d(&s, &outside).unwrap().member);
    }

    #[test]
    fn global_dimension_examples() {
        let m = meshes::squares_2x2();
        assert_eq!(assemble_global_2d(&m, Family::Face, 1).unwrap().dim, 28);
        assert_eq!(assemble_global_2d(&m, Family::Vert, 2).unwrap().dim, 25);
        assert_eq!(assemble_global_2d(&meshes::unit_square(), Family::Edge, 1).unwrap().dim, 9);
    }
}
