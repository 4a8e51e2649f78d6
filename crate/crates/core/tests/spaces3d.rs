mod common;

use common::{oracle_moments, random_poly, rel_diff, rng};
use nalgebra::{DMatrix, DVector};
use vem_core::integrate::{cell_quadrature, face_quadrature};
use vem_core::complex::transfer_curl_3d;
use vem_core::meshes;
use vem_core::poly::{apply, DiffOp, MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::Family;
use vem_core::spaces3d::{
    assemble_global_3d, build_enhancement, local_spaces_3d, curl_normal_trace, green_residuals, moments_via_enhancement, LocalSpace3D,
};

/// `∇(x⁴ - 6x²y² + y⁴)` as a field in three dimensions.
fn harmonic_gradient() -> PolyCoeffs {
    let b = MonomialBasis::unit(3, 3).unwrap();
    PolyCoeffs::from_terms(b, 3, &[(0, [3, 0, 0], 4.0), (0, [1, 2, 0], -12.0), (1, [2, 1, 0], -12.0), (1, [0, 3, 0], 4.0)]).unwrap()
}

#[test]
fn face_projector_reproduces_l2_projection_of_harmonic_gradient() {
    let m = meshes::unit_cube();
    let s = LocalSpace3D::new(&m, 0, Family::Face, 2).unwrap();
    let v = harmonic_gradient();
    let got = s.project(&s.dofs_of_polynomial(&v).unwrap()).unwrap();
    let basis = s.basis(2);
    let q = cell_quadrature(&m, 0, 8);
    let n = basis.len();
    let mut mass = DMatrix::zeros(3 * n, 3 * n);
    for (x, w) in q.points.iter().zip(&q.weights) {
        let e = basis.eval(x);
        for c in 0..3 {
            for a in 0..n {
                for b in 0..n {
                    mass[(c * n + a, c * n + b)] += w * e[a] * e[b];
                }
            }
        }
    }
    let want = mass.lu().solve(&oracle_moments(&q, &v, &basis, 3)).unwrap();
    assert!((got.coeffs() - want).amax() < 1e-10);
}

#[test]
fn enhancement_recovers_polynomial_moments() {
    let mut r = rng(11);
    for (name, m) in meshes::all_3d() {
        for k in 1..=2 {
            for c in 0..m.cells().len() {
                let s = LocalSpace3D::new(&m, c, Family::Edge, k).unwrap();
                let op = build_enhancement(&s, None).unwrap();
                let q = cell_quadrature(&m, c, 2 * k as usize + 2);
                for _ in 0..3 {
                    let p = random_poly(&mut r, 3, k, 3);
                    let d = op.extended_dofs(&s, &p).unwrap();
                    let got = moments_via_enhancement(&op, &d).unwrap();
                    let want = oracle_moments(&q, &p, &s.basis(k), 3);
                    assert!(rel_diff(&got, &want) < 1e-10, "{name} k={k}");
                }
                let zero = DVector::zeros(op.n);
                assert_eq!(moments_via_enhancement(&op, &zero).unwrap().amax(), 0.0);
                let a = DVector::from_fn(op.n, |i, _| (i as f64).cos());
                let b = DVector::from_fn(op.n, |i, _| (i as f64 * 0.3).sin());
                let lhs = moments_via_enhancement(&op, &(&a * 1.5 + &b)).unwrap();
                let rhs = moments_via_enhancement(&op, &a).unwrap() * 1.5 + moments_via_enhancement(&op, &b).unwrap();
                assert!((lhs - rhs).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn enhanced_projector_ignores_extra_entries() {
    let m = meshes::prism();
    let s = LocalSpace3D::new(&m, 0, Family::Edge, 2).unwrap();
    let op = build_enhancement(&s, None).unwrap();
    let p = random_poly(&mut rng(2), 3, 2, 3);
    let d = op.extended_dofs(&s, &p).unwrap();
    let mut e = d.clone();
    for i in op.n..e.len() {
        e[i] += 1e3 * (i as f64 + 1.0);
    }
    assert_eq!(op.apply(&d).unwrap().coeffs(), op.apply(&e).unwrap().coeffs());
    assert!(op.apply(&d.rows(0, op.n - 1).into_owned()).is_err());
}

#[test]
fn custom_weights_keep_polynomial_reproduction() {
    let m = meshes::unit_cube();
    let s = LocalSpace3D::new(&m, 0, Family::Edge, 2).unwrap();
    let w = DVector::from_fn(s.dim(), |i, _| 1.0 + (i % 7) as f64);
    let op = build_enhancement(&s, Some(&w)).unwrap();
    let p = random_poly(&mut rng(4), 3, 2, 3);
    let back = op.apply(&s.dofs_of_polynomial(&p).unwrap()).unwrap();
    let want = s.integrals().localize(&p).unwrap();
    assert!((back.coeffs() - want.coeffs()).amax() < 1e-10);
    assert!(build_enhancement(&s, Some(&DVector::zeros(s.dim()))).is_err());
}

#[test]
fn green_formulas_hold_on_sample_cells() {
    let mut r = rng(13);
    for (name, m) in meshes::all_3d() {
        for c in 0..m.cells().len() {
            let s = LocalSpace3D::new(&m, c, Family::Edge, 1).unwrap();
            for _ in 0..20 {
                let psi = random_poly(&mut r, 3, 2, 3);
                let phi = random_poly(&mut r, 3, 3, 3);
                let g = green_residuals(s.integrals(), &psi, &phi).unwrap();
                assert!(g.rot < 1e-10 && g.rotrot < 1e-10, "{name}: {g:?}");
            }
        }
    }
}

#[test]
fn gradients_have_vanishing_curl_trace() {
    let mut r = rng(17);
    let m = meshes::prism();
    let s = LocalSpace3D::new(&m, 0, Family::Edge, 2).unwrap();
    let phi = random_poly(&mut r, 3, 3, 1);
    let g = apply(DiffOp::Grad, &phi).unwrap();
    let d = s.dofs_of_polynomial(&g).unwrap();
    for f in 0..s.faces().len() {
        assert!(curl_normal_trace(&s, s.faces()[f].face, &d).unwrap().coeffs().amax() < 1e-10);
    }
}

#[test]
fn curl_trace_matches_normal_component() {
    let mut r = rng(19);
    let m = meshes::two_cubes();
    let s = LocalSpace3D::new(&m, 1, Family::Edge, 2).unwrap();
    let p = random_poly(&mut r, 3, 2, 3);
    let curl = apply(DiffOp::Curl, &p).unwrap();
    let d = s.dofs_of_polynomial(&p).unwrap();
    for cf in s.faces() {
        let t = curl_normal_trace(&s, cf.face, &d).unwrap();
        let q = face_quadrature(&m, cf.face, 4);
        let n = cf.frame.normal;
        for x in q.points.iter().take(4) {
            let c = curl.eval(x);
            let want = c[0] * n[0] + c[1] * n[1] + c[2] * n[2];
            let y = cf.frame.local(&nalgebra::Vector3::new(x[0], x[1], x[2]));
            assert!((t.eval(&[y[0], y[1]])[0] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn curl_ignores_interior_complement_moments() {
    for (name, m) in [("prism", meshes::prism()), ("two_cubes", meshes::two_cubes())] {
        let t = transfer_curl_3d(&m, 3).unwrap();
        let g = assemble_global_3d(&m, Family::Edge, 2).unwrap();
        let spaces = local_spaces_3d(&m, Family::Edge, 2).unwrap();
        for (c, s) in spaces.iter().enumerate() {
            let b = s.layout().block("Rperp").unwrap();
            for i in b.offset..b.offset + b.len {
                let col = g.local_to_global[c][i];
                assert!(t.matrix.column(col).amax() < 1e-10, "{name} cell {c}");
            }
        }
    }
}

#[test]
fn edge_global_count_reports_both_formulas() {
    let m = meshes::two_cubes();
    let g = assemble_global_3d(&m, Family::Edge, 2).unwrap();
    assert_eq!(g.dim, g.closed_form);
    assert!(g.closed_form_alt.is_some_and(|a| a != g.dim));
    let f = assemble_global_3d(&m, Family::Face, 2).unwrap();
    assert_eq!(f.dim, f.closed_form);
}
