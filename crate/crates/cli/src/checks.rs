//! Invariant suite run by `vem selftest`.

use nalgebra::DVector;
use vem_core::complex::verify_complex;
use vem_core::geom::Mesh;
use vem_core::integrate::{segment_quadrature, ElementIntegrals};
use vem_core::poly::{apply, DiffOp, MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::{assemble_global_2d, dim_local_2d, Family, LocalSpace2D};
use vem_core::spaces3d::{assemble_global_3d, build_enhancement, dim_local_3d, green_residuals, LocalSpace3D};
use vem_core::Result;

use crate::report::Check;

pub const REPRODUCTION_TOL: f64 = 1e-10;
pub const DOF_TOL: f64 = 1e-11;
pub const GREEN_TOL: f64 = 1e-10;

/// Deterministic field with coefficients `sin(1.3 i + seed)`.
pub fn sample_field(dim: usize, degree: i32, comps: usize, seed: f64) -> PolyCoeffs {
    let b = MonomialBasis::unit(dim, degree).expect("valid degree");
    let n = comps * b.len();
    PolyCoeffs::new(b, comps, DVector::from_fn(n, |i, _| (1.3 * i as f64 + seed).sin())).expect("sized")
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

const FAMILIES: [Family; 4] = [Family::Face, Family::Edge, Family::Vert, Family::Elem];

fn dims(mesh: &Mesh) -> Result<(usize, usize)> {
    let mut bad = 0;
    let mut total = 0;
    for f in FAMILIES {
        for k in 1..=2 {
            for e in 0..mesh.num_elements() {
                let (built, formula) = if mesh.dim() == 2 {
                    (LocalSpace2D::for_element(mesh, e, f, k)?.dim(), dim_local_2d(mesh, e, f, k, None)?)
                } else {
                    (LocalSpace3D::new(mesh, e, f, k)?.dim(), dim_local_3d(mesh, e, f, k, None)?)
                };
                total += 1;
                bad += usize::from(built != formula);
            }
            let g = if mesh.dim() == 2 { assemble_global_2d(mesh, f, k)? } else { assemble_global_3d(mesh, f, k)? };
            total += 1;
            bad += usize::from(g.dim != g.closed_form);
        }
    }
    Ok((bad, total))
}

/// Edge DOFs against quadrature along the mesh edges.
fn edge_dofs_2d(mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in 0..mesh.num_elements() {
        let s = LocalSpace2D::for_element(mesh, e, Family::Face, 1)?;
        let p = sample_field(2, 2, 2, e as f64);
        let d = s.dofs_of_polynomial(&p)?;
        for b in &s.layout().blocks {
            let Some(g) = b.name.strip_prefix("edge").and_then(|g| g.parse::<usize>().ok()) else { continue };
            let edge = &mesh.edges()[g];
            let (a, z) = (mesh.vertices()[edge.vertices[0]], mesh.vertices()[edge.vertices[1]]);
            let q = segment_quadrature(&[a[0], a[1], 0.0], &[z[0], z[1], 0.0], 4);
            let n = [edge.tangent[1], -edge.tangent[0]];
            for j in 0..b.len {
                let want = q.integrate(|x| {
                    let v = p.eval(&x[..2]);
                    let s = ((x[0] - a[0]).hypot(x[1] - a[1])) / edge.length - 0.5;
                    (v[0] * n[0] + v[1] * n[1]) * s.powi(j as i32)
                }) / edge.length;
                worst = worst.max((d[b.offset + j] - want).abs());
            }
        }
    }
    Ok(worst)
}

fn reproduction(mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in 0..mesh.num_elements() {
        for k in 1..=2 {
            let p = sample_field(mesh.dim(), k, mesh.dim(), k as f64 + e as f64);
            if mesh.dim() == 2 {
                let want = ElementIntegrals::element(mesh, e)?.localize(&p)?;
                for f in [Family::Face, Family::Edge] {
                    let s = LocalSpace2D::for_element(mesh, e, f, k)?;
                    worst = worst.max(rel(s.project(&s.dofs_of_polynomial(&p)?)?.coeffs(), want.coeffs()));
                }
            } else {
                let s = LocalSpace3D::new(mesh, e, Family::Face, k)?;
                let want = s.integrals().localize(&p)?;
                worst = worst.max(rel(s.project(&s.dofs_of_polynomial(&p)?)?.coeffs(), want.coeffs()));
                let se = LocalSpace3D::new(mesh, e, Family::Edge, k)?;
                let op = build_enhancement(&se, None)?;
                worst = worst.max(rel(op.apply(&se.dofs_of_polynomial(&p)?)?.coeffs(), want.coeffs()));
            }
        }
    }
    Ok(worst)
}

fn recovery(mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for e in 0..mesh.num_elements() {
        let ints = ElementIntegrals::element(mesh, e)?;
        let pt = ints.center().to_vec();
        for k in 1..=2 {
            let p = sample_field(mesh.dim(), k, mesh.dim(), 0.5 + e as f64);
            let want_div = apply(DiffOp::Div, &p)?.eval(&pt)[0];
            let got_div = if mesh.dim() == 2 {
                let s = LocalSpace2D::for_element(mesh, e, Family::Face, k)?;
                let se = LocalSpace2D::for_element(mesh, e, Family::Edge, k)?;
                let rot = se.rot_from_dofs(&se.dofs_of_polynomial(&p)?)?.eval(&pt)[0];
                worst = worst.max((rot - apply(DiffOp::Rot, &p)?.eval(&pt)[0]).abs());
                s.div_from_dofs(&s.dofs_of_polynomial(&p)?)?.eval(&pt)[0]
            } else {
                let s = LocalSpace3D::new(mesh, e, Family::Face, k)?;
                s.div_from_dofs(&s.dofs_of_polynomial(&p)?)?.eval(&pt)[0]
            };
            worst = worst.max((got_div - want_div).abs());
        }
    }
    Ok(worst)
}

fn green(mesh: &Mesh) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for c in 0..mesh.cells().len() {
        let ints = ElementIntegrals::cell(mesh, c)?;
        for i in 0..3 {
            let g = green_residuals(&ints, &sample_field(3, 2, 3, i as f64), &sample_field(3, 3, 3, 7.0 + i as f64))?;
            worst = worst.max(g.rot).max(g.rotrot);
        }
    }
    Ok(worst)
}

fn outcome<T>(name: String, r: Result<T>, f: impl FnOnce(String, T) -> Check) -> Check {
    match r {
        Ok(v) => f(name, v),
        Err(e) => Check::new(name, crate::report::Status::Fail, e.to_string(), None),
    }
}

/// Every invariant on one mesh.
pub fn suite(name: &str, mesh: &Mesh) -> Vec<Check> {
    let mut out = vec![
        outcome(format!("{name}: local and global dimensions"), dims(mesh), |n, (bad, total)| {
            Check::equal(n, bad, 0).with_note(format!("{total} counts compared"))
        }),
        outcome(format!("{name}: polynomial reproduction"), reproduction(mesh), |n, v| Check::below(n, v, REPRODUCTION_TOL)),
        outcome(format!("{name}: DOF-only derivatives"), recovery(mesh), |n, v| Check::below(n, v, REPRODUCTION_TOL)),
    ];
    if mesh.dim() == 2 {
        out.push(outcome(format!("{name}: edge DOFs vs quadrature"), edge_dofs_2d(mesh), |n, v| Check::below(n, v, DOF_TOL)));
    } else {
        out.push(outcome(format!("{name}: Green identities"), green(mesh), |n, v| Check::below(n, v, GREEN_TOL)));
    }
    if mesh.simply_connected() {
        let k = if mesh.dim() == 2 { 2 } else { 3 };
        out.push(outcome(format!("{name}: discrete complex k={k}"), verify_complex(mesh, k), |n, r| {
            let euler: Vec<i64> = r.sequences.iter().map(|s| s.euler).collect();
            Check::new(n, crate::report::Status::from_bool(r.pass), format!("euler {euler:?}"), None)
        }));
    }
    out
}
