//! Transfer matrices between consecutive global spaces and the exactness
//! checks of the discrete complexes.
//!
//! 2D: `R → V^vert_k → V^edge_{k-1} → P_{k-2} → 0` (grad, rot) and
//! `R → V^vert_k → V^face_{k-1} → P_{k-2} → 0` (brot, div).
//! 3D: `R → V^vert_k → V^edge_{k-1} → V^face_{k-2} → P_{k-3} → 0`.
//!
//! Rows of a transfer are target DOFs, columns source DOFs. The last space is
//! the elementwise polynomial space in monomial coefficients. A target DOF
//! shared by several elements takes its row from the first element owning it.
//! The 3D grad link is only assembled on the polynomial subspace `P_k`.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, VemError};
use crate::geom::Mesh;
use crate::integrate::face_restriction;
use crate::linalg;
use crate::poly::{self, pi, DiffOp, MonomialBasis, PolyCoeffs};
use crate::spaces2d::{assemble_global_2d, edge_gram, local_spaces_2d, Family, GlobalDofMap, LocalSpace2D};
use crate::spaces3d::{assemble_global_3d, global_dofs_of_polynomial_3d, local_spaces_3d, LocalSpace3D};

/// Tolerance on relative composition residuals.
pub const COMPOSITION_TOL: f64 = 1e-10;

/// Global matrix of a differential operator in DOF coordinates.
#[derive(Clone, Debug, Serialize)]
pub struct TransferMatrix {
    pub name: String,
    pub source: (Family, i32),
    pub target: (Family, i32),
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    /// For each row: owning element and the identity used to build it.
    pub provenance: Vec<(usize, String)>,
}

impl TransferMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Local rows of one element: target-local × source-local, with row labels.
struct LocalTransfer {
    rows: DMatrix<f64>,
    labels: Vec<String>,
}

fn label(n: usize, what: &str) -> Vec<String> {
    vec![what.to_string(); n]
}

fn assemble(
    name: &str,
    source: (Family, i32),
    target: (Family, i32),
    src: &[Vec<usize>],
    src_dim: usize,
    tgt: &[Vec<usize>],
    tgt_dim: usize,
    locals: Vec<LocalTransfer>,
) -> TransferMatrix {
    let mut m = DMatrix::zeros(tgt_dim, src_dim);
    let mut provenance = vec![(usize::MAX, String::new()); tgt_dim];
    let mut done = vec![false; tgt_dim];
    for (e, lt) in locals.into_iter().enumerate() {
        for (i, &g) in tgt[e].iter().enumerate() {
            if done[g] {
                continue;
            }
            done[g] = true;
            for (j, &s) in src[e].iter().enumerate() {
                m[(g, s)] += lt.rows[(i, j)];
            }
            provenance[g] = (e, lt.labels[i].clone());
        }
    }
    TransferMatrix {
        name: name.to_string(),
        source,
        target,
        matrix: m,
        provenance,
    }
}

/// Element-wise coefficient numbering of `P_q` on `n` elements.
fn elementwise_map(n: usize, q: i32, d: usize) -> (usize, Vec<Vec<usize>>) {
    let per = pi(q, d);
    (n * per, (0..n).map(|e| (e * per..(e + 1) * per).collect()).collect())
}

/// `d/ds` on the edge monomials `s^l`, `l ≤ k`.
fn edge_derivative(k: i32) -> DMatrix<f64> {
    let n = pi(k, 1);
    let mut d = DMatrix::zeros(n.saturating_sub(1), n);
    for l in 1..n {
        d[(l - 1, l)] = l as f64;
    }
    d
}

/// `Σ_i sign_i ∫_e φ (w·dir_i)`, rows = columns of `w` (vector fields in
/// `(P_q)^2` on the element basis), acting on vertex-space DOFs. `dir_i` is
/// the global normal (`normal = true`) or the global tangent of edge `i`.
fn boundary_rows(src: &LocalSpace2D, w: &DMatrix<f64>, q: i32, normal: bool) -> Result<DMatrix<f64>> {
    let k = src.degree();
    let nq = pi(q, 2);
    let mut out = DMatrix::zeros(w.ncols(), src.dim());
    if w.ncols() == 0 {
        return Ok(out);
    }
    for (i, e) in src.polygon().edges.iter().enumerate() {
        let dir = if normal { e.normal() } else { e.tangent };
        let wd = w.rows(0, nq) * dir[0] + w.rows(nq, nq) * dir[1];
        let x = src.edge_cross(i, k, q);
        out += (x * wd).transpose() * src.edge_trace_matrix(i)? * e.sign;
    }
    Ok(out)
}

/// Rows of `∂φ/∂t` moments on each edge of the target layout.
fn tangential_derivative_rows(src: &LocalSpace2D, tgt: &LocalSpace2D, out: &mut DMatrix<f64>, labels: &mut [String]) -> Result<()> {
    let k = src.degree();
    let g1 = edge_gram(k - 1, k - 1);
    let dsig = edge_derivative(k);
    for (i, e) in src.polygon().edges.iter().enumerate() {
        let rows = &g1 * &dsig * src.edge_trace_matrix(i)? / e.length;
        let b = tgt.layout().block(&format!("edge{}", e.global)).expect("edge block");
        out.view_mut((b.offset, 0), (b.len, src.dim())).copy_from(&rows);
        for l in &mut labels[b.offset..b.offset + b.len] {
            *l = "edge: tangential derivative of the trace".into();
        }
    }
    Ok(())
}

fn set_rows(out: &mut DMatrix<f64>, labels: &mut [String], tgt: &LocalSpace2D, block: &str, rows: &DMatrix<f64>, what: &str) {
    let b = tgt.layout().block(block).expect("target block");
    if b.len == 0 {
        return;
    }
    out.view_mut((b.offset, 0), (b.len, rows.ncols())).copy_from(rows);
    for l in &mut labels[b.offset..b.offset + b.len] {
        *l = what.to_string();
    }
}

/// Local rows of grad (`vert_k → edge_{k-1}`) or brot (`vert_k → face_{k-1}`).
fn local_vertex_derivative(src: &LocalSpace2D, tgt: &LocalSpace2D, brot: bool) -> Result<LocalTransfer> {
    let k = src.degree();
    let area = src.polygon().area;
    let mut rows = DMatrix::zeros(tgt.dim(), src.dim());
    let mut labels = vec![String::new(); tgt.dim()];
    tangential_derivative_rows(src, tgt, &mut rows, &mut labels)?;
    let inner = tgt.inner_subspace().expect("inner block");
    let perp = tgt.perp_subspace().expect("perp block");
    let p_sel = src.block_selector("P");
    if !brot {
        // ∫ ∇φ·r = ∮ φ r·n - ∫ φ div r
        let r = boundary_rows(src, &inner.coeffs, inner.degree, true)? / area;
        set_rows(&mut rows, &mut labels, tgt, "R", &r, "R: boundary term of integration by parts (div r = 0)");
        let divp = poly::diff_matrix(DiffOp::Div, &src.basis(perp.degree))? * &perp.coeffs;
        let b = boundary_rows(src, &perp.coeffs, perp.degree, true)? / area;
        let v = divp.rows(0, pi(k - 2, 2)).transpose() * &p_sel;
        set_rows(&mut rows, &mut labels, tgt, "Rperp", &(b - v), "Rperp: boundary term minus interior div moments");
    } else {
        // ∫ brot φ·w = -∮ φ w·t + ∫ φ rot w
        let g = boundary_rows(src, &inner.coeffs, inner.degree, false)? / -area;
        set_rows(&mut rows, &mut labels, tgt, "G", &g, "G: boundary term of integration by parts (rot g = 0)");
        let rotp = poly::diff_matrix(DiffOp::Rot, &src.basis(perp.degree))? * &perp.coeffs;
        let b = boundary_rows(src, &perp.coeffs, perp.degree, false)? / -area;
        let v = rotp.rows(0, pi(k - 2, 2)).transpose() * &p_sel;
        set_rows(&mut rows, &mut labels, tgt, "Gperp", &(b + v), "Gperp: boundary term plus interior rot moments");
    }
    Ok(LocalTransfer { rows, labels })
}

fn check_2d(mesh: &Mesh, k: i32) -> Result<()> {
    if mesh.dim() != 2 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    if k < 2 {
        return Err(VemError::Threshold { k, min: 2, dim: 2 });
    }
    Ok(())
}

struct Spaces2D {
    spaces: Vec<LocalSpace2D>,
    map: GlobalDofMap,
}

fn spaces_2d(mesh: &Mesh, family: Family, k: i32) -> Result<Spaces2D> {
    Ok(Spaces2D {
        spaces: local_spaces_2d(mesh, family, k)?,
        map: assemble_global_2d(mesh, family, k)?,
    })
}

fn vertex_derivative_2d(mesh: &Mesh, k: i32, brot: bool) -> Result<TransferMatrix> {
    check_2d(mesh, k)?;
    let fam = if brot { Family::Face } else { Family::Edge };
    let src = spaces_2d(mesh, Family::Vert, k)?;
    let tgt = spaces_2d(mesh, fam, k - 1)?;
    let locals = src
        .spaces
        .par_iter()
        .zip(&tgt.spaces)
        .map(|(s, t)| local_vertex_derivative(s, t, brot))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        if brot { "brot" } else { "grad" },
        (Family::Vert, k),
        (fam, k - 1),
        &src.map.local_to_global,
        src.map.dim,
        &tgt.map.local_to_global,
        tgt.map.dim,
        locals,
    ))
}

/// `V^vert_{2,k} → V^edge_{2,k-1}`.
pub fn transfer_grad_2d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    vertex_derivative_2d(mesh, k, false)
}

/// `V^vert_{2,k} → V^face_{2,k-1}`.
pub fn transfer_brot_2d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    vertex_derivative_2d(mesh, k, true)
}

fn to_elementwise_2d(mesh: &Mesh, k: i32, fam: Family) -> Result<TransferMatrix> {
    check_2d(mesh, k)?;
    let src = spaces_2d(mesh, fam, k - 1)?;
    let (dim, map) = elementwise_map(mesh.faces().len(), k - 2, 2);
    let locals = src
        .spaces
        .par_iter()
        .map(|s| {
            let rows = if fam == Family::Edge { s.rot_matrix()? } else { s.div_matrix()? };
            let what = if fam == Family::Edge { "rot recovered from DOFs" } else { "div recovered from DOFs" };
            Ok(LocalTransfer {
                labels: label(rows.nrows(), what),
                rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        if fam == Family::Edge { "rot" } else { "div" },
        (fam, k - 1),
        (Family::Elem, k - 2),
        &src.map.local_to_global,
        src.map.dim,
        &map,
        dim,
        locals,
    ))
}

/// `V^edge_{2,k-1} → P_{k-2}` element by element.
pub fn transfer_rot_2d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    to_elementwise_2d(mesh, k, Family::Edge)
}

/// `V^face_{2,k-1} → P_{k-2}` element by element.
pub fn transfer_div_2d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    to_elementwise_2d(mesh, k, Family::Face)
}

fn check_3d(mesh: &Mesh, k: i32) -> Result<()> {
    if mesh.dim() != 3 {
        return Err(VemError::UnsupportedDimension(mesh.dim()));
    }
    if k < 3 {
        return Err(VemError::Threshold { k, min: 3, dim: 3 });
    }
    Ok(())
}

/// Coefficients of `φ ∧ w` for a constant vector `w`.
fn cross_const(c: &DMatrix<f64>, nb: usize, w: &Vector3<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(c.nrows(), c.ncols());
    for (i, j, l) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        let block = c.rows(j * nb, nb) * w[l] - c.rows(l * nb, nb) * w[j];
        out.rows_mut(i * nb, nb).copy_from(&block);
    }
    out
}

/// `Σ_f s_f ∫_f v·(g ∧ n_f)`, rows = columns of `g` in `(P_q)^3`, through the
/// face projectors of the source edge space.
fn wedge_rows(src: &LocalSpace3D, g: &DMatrix<f64>, q: i32) -> Result<DMatrix<f64>> {
    let m = src.degree();
    let cb = src.basis(q);
    let nb = cb.len();
    let mut out = DMatrix::zeros(g.ncols(), src.dim());
    if g.ncols() == 0 {
        return Ok(out);
    }
    for (i, cf) in src.faces().iter().enumerate() {
        let w = cross_const(g, nb, &cf.frame.normal);
        let r = face_restriction(&cb, &cf.frame, &cf.basis(q))?;
        let nf = r.nrows();
        let mut tang = DMatrix::zeros(2 * nf, w.ncols());
        for a in 0..2 {
            let mut acc = DMatrix::zeros(nf, w.ncols());
            for c in 0..3 {
                acc += &r * w.rows(c * nb, nb) * cf.frame.axes[a][c];
            }
            tang.rows_mut(a * nf, nf).copy_from(&acc);
        }
        let mass = src.face_integrals(i).vector_mass(m, q, 2)?;
        out += (mass * tang).transpose() * src.face_projector_matrix(i)? * cf.sign;
    }
    Ok(out)
}

fn local_curl_3d(src: &LocalSpace3D, tgt: &LocalSpace3D) -> Result<LocalTransfer> {
    let vol = src.integrals().measure();
    let mut rows = DMatrix::zeros(tgt.dim(), src.dim());
    let mut labels = vec![String::new(); tgt.dim()];
    let mut put = |rows: &mut DMatrix<f64>, name: &str, r: &DMatrix<f64>, what: &str| {
        let b = tgt.layout().block(name).expect("target block");
        if b.len > 0 {
            rows.view_mut((b.offset, 0), (b.len, r.ncols())).copy_from(r);
            for l in &mut labels[b.offset..b.offset + b.len] {
                *l = what.to_string();
            }
        }
    };
    let q = tgt.degree();
    for (i, cf) in src.faces().iter().enumerate() {
        let r = tgt.face_integrals(i).mass(q, q)? * src.curl_normal_trace_matrix(i)? / cf.polygon.area;
        put(&mut rows, &format!("face{}", cf.face), &r, "face: 2D rot of the tangential trace");
    }
    let g = tgt.inner_subspace().expect("G block");
    let r = wedge_rows(src, &g.coeffs, g.degree)? / vol;
    put(&mut rows, "G", &r, "G: boundary term of the curl Green formula");
    let gp = tgt.perp_subspace().expect("Gperp block");
    let mut r = wedge_rows(src, &gp.coeffs, gp.degree)? / vol;
    let curl = poly::diff_matrix(DiffOp::Curl, &src.basis(gp.degree))? * &gp.coeffs;
    let inner = src.inner_subspace().expect("R block");
    if inner.len() > 0 {
        let a = inner
            .coeffs
            .clone()
            .svd(true, true)
            .solve(&curl, 1e-14)
            .map_err(|e| VemError::Singular(e.to_string()))?;
        let resid = (&inner.coeffs * &a - &curl).amax();
        if resid > 1e-9 * curl.amax().max(1.0) {
            return Err(VemError::RankDeficient {
                element: src.cell(),
                what: "curl of Gperp outside the R block".into(),
                expected: 0,
                found: 1,
            });
        }
        r += a.transpose() * src.block_selector("R");
    }
    put(&mut rows, "Gperp", &r, "Gperp: interior R moments plus boundary term of the curl Green formula");
    Ok(LocalTransfer { rows, labels })
}

/// `V^edge_{3,k-1} → V^face_{3,k-2}`.
pub fn transfer_curl_3d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    check_3d(mesh, k)?;
    let src = local_spaces_3d(mesh, Family::Edge, k - 1)?;
    let tgt = local_spaces_3d(mesh, Family::Face, k - 2)?;
    let sm = assemble_global_3d(mesh, Family::Edge, k - 1)?;
    let tm = assemble_global_3d(mesh, Family::Face, k - 2)?;
    let locals = src.par_iter().zip(&tgt).map(|(s, t)| local_curl_3d(s, t)).collect::<Result<Vec<_>>>()?;
    Ok(assemble("curl", (Family::Edge, k - 1), (Family::Face, k - 2), &sm.local_to_global, sm.dim, &tm.local_to_global, tm.dim, locals))
}

/// `V^face_{3,k-2} → P_{k-3}` element by element.
pub fn transfer_div_3d(mesh: &Mesh, k: i32) -> Result<TransferMatrix> {
    check_3d(mesh, k)?;
    let src = local_spaces_3d(mesh, Family::Face, k - 2)?;
    let sm = assemble_global_3d(mesh, Family::Face, k - 2)?;
    let (dim, map) = elementwise_map(mesh.cells().len(), k - 3, 3);
    let locals = src
        .par_iter()
        .map(|s| {
            let rows = s.div_matrix()?;
            Ok(LocalTransfer {
                labels: label(rows.nrows(), "div recovered from DOFs"),
                rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble("div", (Family::Face, k - 2), (Family::Elem, k - 3), &sm.local_to_global, sm.dim, &map, dim, locals))
}

/// Global vertex and edge DOFs of `P_k` and of its gradients, one column per monomial.
pub struct PolynomialGrad3D {
    pub vert: DMatrix<f64>,
    pub edge: DMatrix<f64>,
}

/// grad on the polynomial subspace `P_k ⊂ V^vert_{3,k}`.
pub fn polynomial_grad_3d(mesh: &Mesh, k: i32) -> Result<PolynomialGrad3D> {
    check_3d(mesh, k)?;
    let vs = local_spaces_3d(mesh, Family::Vert, k)?;
    let vm = assemble_global_3d(mesh, Family::Vert, k)?;
    let es = local_spaces_3d(mesh, Family::Edge, k - 1)?;
    let em = assemble_global_3d(mesh, Family::Edge, k - 1)?;
    let b = MonomialBasis::unit(3, k)?;
    let cols: Vec<(DVector<f64>, DVector<f64>)> = (0..b.len())
        .into_par_iter()
        .map(|a| {
            let mut c = DVector::zeros(b.len());
            c[a] = 1.0;
            let p = PolyCoeffs::new(b.clone(), 1, c)?;
            let g = poly::apply(DiffOp::Grad, &p)?;
            Ok((global_dofs_of_polynomial_3d(&vs, &vm, &p)?, global_dofs_of_polynomial_3d(&es, &em, &g)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let vert = DMatrix::from_columns(&cols.iter().map(|c| c.0.clone()).collect::<Vec<_>>());
    let edge = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
    Ok(PolynomialGrad3D { vert, edge })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceDim {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinkReport {
    pub name: String,
    pub source_dim: usize,
    pub target_dim: usize,
    pub rank: usize,
    pub kernel: usize,
    pub expected_rank: usize,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositionReport {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactnessReport {
    /// Space at which image and kernel are compared.
    pub at: String,
    pub image: usize,
    pub kernel: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SequenceReport {
    pub name: String,
    pub spaces: Vec<SpaceDim>,
    pub links: Vec<LinkReport>,
    pub compositions: Vec<CompositionReport>,
    pub exactness: Vec<ExactnessReport>,
    pub euler: i64,
    pub euler_pass: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    /// Sequence compared on the input mesh.
    pub sequence: String,
    /// Sequence compared on the rotated mesh.
    pub rotated_sequence: String,
    pub angle: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexReport {
    pub dim: usize,
    pub degree: i32,
    pub sequences: Vec<SequenceReport>,
    pub duality: Option<DualityReport>,
    pub pass: bool,
}

fn rank(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    linalg::checked_rank(m, 0, &format!("global {what} transfer"))
}

fn composition(name: &str, b: &DMatrix<f64>, a: &DMatrix<f64>) -> CompositionReport {
    let denom = (b.norm() * a.norm()).max(f64::MIN_POSITIVE);
    let residual = (b * a).norm() / denom;
    CompositionReport {
        name: name.to_string(),
        residual,
        pass: residual < COMPOSITION_TOL,
    }
}

fn link(name: &str, t: &DMatrix<f64>, r: usize, expected: usize, note: Option<String>) -> LinkReport {
    LinkReport {
        name: name.to_string(),
        source_dim: t.ncols(),
        target_dim: t.nrows(),
        rank: r,
        kernel: t.ncols() - r,
        expected_rank: expected,
        pass: r == expected,
        note,
    }
}

fn finish(name: &str, spaces: Vec<SpaceDim>, links: Vec<LinkReport>, compositions: Vec<CompositionReport>, exactness: Vec<ExactnessReport>) -> SequenceReport {
    let euler: i64 = spaces
        .iter()
        .enumerate()
        .map(|(i, s)| if i % 2 == 0 { s.dim as i64 } else { -(s.dim as i64) })
        .sum();
    let euler_pass = euler == 1;
    let pass = euler_pass && links.iter().all(|l| l.pass) && compositions.iter().all(|c| c.pass) && exactness.iter().all(|e| e.pass);
    SequenceReport {
        name: name.to_string(),
        spaces,
        links,
        compositions,
        exactness,
        euler,
        euler_pass,
        pass,
    }
}

fn sequence_2d(mesh: &Mesh, k: i32, brot: bool) -> Result<SequenceReport> {
    let (first, second) = if brot {
        (transfer_brot_2d(mesh, k)?, transfer_div_2d(mesh, k)?)
    } else {
        (transfer_grad_2d(mesh, k)?, transfer_rot_2d(mesh, k)?)
    };
    let (mid, n1, n2) = if brot { ("face", "brot", "div") } else { ("edge", "grad", "rot") };
    let (a, b) = (&first.matrix, &second.matrix);
    let (ra, rb) = (rank(a, n1)?, rank(b, n2)?);
    let spaces = vec![
        SpaceDim { name: format!("vert_{k}"), dim: a.ncols() },
        SpaceDim { name: format!("{mid}_{}", k - 1), dim: a.nrows() },
        SpaceDim { name: format!("P_{}", k - 2), dim: b.nrows() },
    ];
    let links = vec![
        link(n1, a, ra, a.ncols() - 1, Some("kernel = constants".into())),
        link(n2, b, rb, b.nrows(), Some("surjective".into())),
    ];
    let exactness = vec![ExactnessReport {
        at: format!("{mid}_{}", k - 1),
        image: ra,
        kernel: b.ncols() - rb,
        pass: ra == b.ncols() - rb,
    }];
    let compositions = vec![composition(&format!("{n2}∘{n1}"), b, a)];
    Ok(finish(&format!("{n1}-{n2}"), spaces, links, compositions, exactness))
}

fn same_shape(a: &SequenceReport, b: &SequenceReport) -> bool {
    a.spaces.iter().map(|s| s.dim).eq(b.spaces.iter().map(|s| s.dim))
        && a.links.iter().map(|l| (l.rank, l.kernel)).eq(b.links.iter().map(|l| (l.rank, l.kernel)))
        && a.euler == b.euler
        && a.pass == b.pass
}

fn verify_2d(mesh: &Mesh, k: i32) -> Result<ComplexReport> {
    check_2d(mesh, k)?;
    let rot_seq = sequence_2d(mesh, k, false)?;
    let div_seq = sequence_2d(mesh, k, true)?;
    let angle = std::f64::consts::FRAC_PI_2;
    let rotated = sequence_2d(&mesh.rotated_2d(angle)?, k, true)?;
    let duality = DualityReport {
        sequence: rot_seq.name.clone(),
        rotated_sequence: rotated.name.clone(),
        angle,
        pass: same_shape(&rot_seq, &rotated),
    };
    let pass = rot_seq.pass && div_seq.pass && duality.pass;
    Ok(ComplexReport {
        dim: 2,
        degree: k,
        sequences: vec![rot_seq, div_seq],
        duality: Some(duality),
        pass,
    })
}

fn verify_3d(mesh: &Mesh, k: i32) -> Result<ComplexReport> {
    check_3d(mesh, k)?;
    let curl = transfer_curl_3d(mesh, k)?;
    let div = transfer_div_3d(mesh, k)?;
    let pg = polynomial_grad_3d(mesh, k)?;
    let dim_v = pg.vert.nrows();
    let (c, d) = (&curl.matrix, &div.matrix);
    let rg = rank(&pg.edge, "polynomial grad")?;
    let rv = rank(&pg.vert, "polynomial vertex embedding")?;
    let (rc, rd) = (rank(c, "curl")?, rank(d, "div")?);
    let spaces = vec![
        SpaceDim { name: format!("vert_{k}"), dim: dim_v },
        SpaceDim { name: format!("edge_{}", k - 1), dim: c.ncols() },
        SpaceDim { name: format!("face_{}", k - 2), dim: c.nrows() },
        SpaceDim { name: format!("P_{}", k - 3), dim: d.nrows() },
    ];
    let np = pg.vert.ncols();
    let links = vec![
        LinkReport {
            name: "grad (on P_k)".into(),
            source_dim: np,
            target_dim: c.ncols(),
            rank: rg,
            kernel: np - rg,
            expected_rank: np - 1,
            pass: rg == np - 1 && rv == np,
            note: Some("assembled on the polynomial subspace only; full link certified by the edge exactness entry".into()),
        },
        link("curl", c, rc, c.nrows() - rd, None),
        link("div", d, rd, d.nrows(), Some("surjective".into())),
    ];
    let exactness = vec![
        ExactnessReport {
            at: format!("edge_{}", k - 1),
            image: dim_v - 1,
            kernel: c.ncols() - rc,
            pass: dim_v - 1 == c.ncols() - rc,
        },
        ExactnessReport {
            at: format!("face_{}", k - 2),
            image: rc,
            kernel: d.ncols() - rd,
            pass: rc == d.ncols() - rd,
        },
    ];
    let compositions = vec![composition("curl∘grad (on P_k)", c, &pg.edge), composition("div∘curl", d, c)];
    let seq = finish("grad-curl-div", spaces, links, compositions, exactness);
    let pass = seq.pass;
    Ok(ComplexReport {
        dim: 3,
        degree: k,
        sequences: vec![seq],
        duality: None,
        pass,
    })
}

/// Assembles every transfer of the complex of degree `k` and checks exactness.
pub fn verify_complex(mesh: &Mesh, k: i32) -> Result<ComplexReport> {
    if !mesh.simply_connected() {
        return Err(VemError::NotSimplyConnected("the mesh declares a non-trivial topology".into()));
    }
    match mesh.dim() {
        2 => verify_2d(mesh, k),
        3 => verify_3d(mesh, k),
        d => Err(VemError::UnsupportedDimension(d)),
    }
}
