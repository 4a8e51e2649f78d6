mod common;

use common::{oracle_moments, random_poly, rng};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use vem_core::geom::Polygon;
use vem_core::integrate::{build_subspace, element_quadrature, polygon_quadrature, SubspaceKind};
use vem_core::meshes;
use vem_core::poly::{apply, substitution_matrix, AffineMap, DiffOp, MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::{dim_local_2d, membership_2d, DegreeProfile, Entity, Family, LocalSpace2D};

/// `∇(x⁴ - 6x²y² + y⁴)`.
fn harmonic_gradient() -> PolyCoeffs {
    let b = MonomialBasis::unit(2, 3).unwrap();
    PolyCoeffs::from_terms(b, 2, &[(0, [3, 0, 0], 4.0), (0, [1, 2, 0], -12.0), (1, [2, 1, 0], -12.0), (1, [0, 3, 0], 4.0)]).unwrap()
}

/// Direct L2 projection onto `(P_k)^2` from quadrature moments.
fn oracle_projection(coords: &[Vector2<f64>], basis: &MonomialBasis, v: &PolyCoeffs) -> DVector<f64> {
    let q = polygon_quadrature(coords, (2 * basis.degree() + v.basis().degree()) as usize + 2);
    let n = basis.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (x, w) in q.points.iter().zip(&q.weights) {
        let e = basis.eval(&x[..2]);
        for c in 0..2 {
            for a in 0..n {
                for b in 0..n {
                    m[(c * n + a, c * n + b)] += w * e[a] * e[b];
                }
            }
        }
    }
    let mu = oracle_moments(&q, v, basis, 2);
    m.lu().solve(&mu).unwrap()
}

#[test]
fn harmonic_gradient_projection_matches_oracle() {
    let m = meshes::unit_square();
    let s = LocalSpace2D::for_element(&m, 0, Family::Face, 2).unwrap();
    let v = harmonic_gradient();
    assert!(membership_2d(&s, &v).unwrap().member);
    let got = s.project(&s.dofs_of_polynomial(&v).unwrap()).unwrap();
    let want = oracle_projection(&m.faces()[0].coords, &s.basis(2), &v);
    assert!((got.coeffs() - &want).amax() < 1e-10);
}

#[test]
fn projector_commutes_with_rigid_motions() {
    let m = meshes::unit_square();
    let poly = Polygon::from_face(&m, 0);
    let v = harmonic_gradient();
    let angle: f64 = 0.7;
    let q = Matrix2::new(angle.cos(), -angle.sin(), angle.sin(), angle.cos());
    let t = Vector2::new(2.0, -1.5);
    let moved = poly.transformed(&q, &t);
    let s0 = LocalSpace2D::new(poly, Family::Face, 2, Entity::Face(0)).unwrap();
    let s1 = LocalSpace2D::new(moved, Family::Face, 2, Entity::Face(0)).unwrap();
    // v'(y) = Q v(Qᵀ(y - t))
    let target = MonomialBasis::unit(2, 3).unwrap();
    let qt = q.transpose();
    let origin = -(qt * t);
    let map = AffineMap {
        origin: DVector::from_column_slice(origin.as_slice()),
        jacobian: DMatrix::from_column_slice(2, 2, qt.as_slice()),
    };
    let sub = substitution_matrix(v.basis(), &target, &map).unwrap();
    let n = v.basis().len();
    let w: Vec<DVector<f64>> = (0..2).map(|c| &sub * v.coeffs().rows(c * n, n)).collect();
    let nt = target.len();
    let mut c = DVector::zeros(2 * nt);
    for i in 0..2 {
        let mut seg = c.rows_mut(i * nt, nt);
        seg += &w[0] * q[(i, 0)] + &w[1] * q[(i, 1)];
    }
    let vp = PolyCoeffs::new(target, 2, c).unwrap();
    let p0 = s0.project(&s0.dofs_of_polynomial(&v).unwrap()).unwrap();
    let p1 = s1.project(&s1.dofs_of_polynomial(&vp).unwrap()).unwrap();
    for x in [[0.2, 0.3], [0.9, 0.1], [0.5, 0.5]] {
        let y = q * Vector2::new(x[0], x[1]) + t;
        let a = p0.eval(&x);
        let b = p1.eval(&[y[0], y[1]]);
        let ra = q * Vector2::new(a[0], a[1]);
        assert!((ra[0] - b[0]).abs() < 1e-9 && (ra[1] - b[1]).abs() < 1e-9);
    }
}

#[test]
fn projector_is_linear_and_idempotent() {
    let m = meshes::voronoi5();
    let mut r = rng(3);
    for fam in [Family::Face, Family::Edge] {
        let s = LocalSpace2D::for_element(&m, 1, fam, 2).unwrap();
        let a = random_poly(&mut r, 2, 2, 2);
        let b = random_poly(&mut r, 2, 2, 2);
        let (da, db) = (s.dofs_of_polynomial(&a).unwrap(), s.dofs_of_polynomial(&b).unwrap());
        let p = s.projector_matrix().unwrap();
        let lin = &p * (&da * 2.0 - &db) - (&p * &da * 2.0 - &p * &db);
        assert!(lin.amax() < 1e-12);
        let v = harmonic_gradient();
        let once = s.project(&s.dofs_of_polynomial(&v).unwrap()).unwrap();
        let twice = s.project(&s.dofs_of_polynomial(&once).unwrap()).unwrap();
        assert!((once.coeffs() - twice.coeffs()).amax() < 1e-10);
    }
}

#[test]
fn zero_boundary_and_gradient_blocks_give_zero_divergence() {
    let m = meshes::pentagon();
    let s = LocalSpace2D::for_element(&m, 0, Family::Face, 3).unwrap();
    let mut d = DVector::from_fn(s.dim(), |i, _| (i as f64 * 0.37).sin());
    for b in &s.layout().blocks {
        if b.name != "Gperp" {
            d.rows_mut(b.offset, b.len).fill(0.0);
        }
    }
    assert!(s.div_from_dofs(&d).unwrap().coeffs().amax() < 1e-13);
}

#[test]
fn polynomial_fields_split_into_gradient_and_complement() {
    let m = meshes::voronoi5();
    let mut r = rng(5);
    for e in 0..m.faces().len() {
        let s = LocalSpace2D::for_element(&m, e, Family::Face, 3).unwrap();
        let ints = s.integrals();
        let g = build_subspace(ints, SubspaceKind::G, 3).unwrap();
        let gp = build_subspace(ints, SubspaceKind::Gperp, 3).unwrap();
        let b = vem_core::linalg::hstack(&[&g.coeffs, &gp.coeffs]);
        let p = ints.localize(&random_poly(&mut r, 2, 3, 2)).unwrap();
        let c = b.clone().lu().solve(p.coeffs()).unwrap();
        assert!((&b * &c - p.coeffs()).amax() < 1e-10);
        // the pieces are L2-orthogonal
        let mass = ints.vector_mass(3, 3, 2).unwrap();
        let (a1, a2) = (&g.coeffs * c.rows(0, g.len()), &gp.coeffs * c.rows(g.len(), gp.len()));
        assert!((a1.transpose() * &mass * a2)[0].abs() < 1e-10 * ints.measure());
    }
}

#[test]
fn recovery_matches_analytic_derivatives() {
    let mut r = rng(7);
    for (_, m) in meshes::all_2d() {
        for e in 0..m.faces().len() {
            for k in 1..=3 {
                let sf = LocalSpace2D::for_element(&m, e, Family::Face, k).unwrap();
                let se = LocalSpace2D::for_element(&m, e, Family::Edge, k).unwrap();
                let p = random_poly(&mut r, 2, k, 2);
                let div = sf.div_from_dofs(&sf.dofs_of_polynomial(&p).unwrap()).unwrap();
                let rot = se.rot_from_dofs(&se.dofs_of_polynomial(&p).unwrap()).unwrap();
                let q = element_quadrature(&m, e, 2 * k as usize);
                for (x, _) in q.points.iter().zip(&q.weights).take(5) {
                    let want_d = apply(DiffOp::Div, &p).unwrap().eval(&x[..2])[0];
                    let want_r = apply(DiffOp::Rot, &p).unwrap().eval(&x[..2])[0];
                    assert!((div.eval(&x[..2])[0] - want_d).abs() < 1e-10);
                    assert!((rot.eval(&x[..2])[0] - want_r).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn profile_counts() {
    let sq = meshes::unit_square();
    // lowest-order Raviart-Thomas-like profile on a quadrilateral
    assert_eq!(dim_local_2d(&sq, 0, Family::Face, 0, Some(DegreeProfile::raviart_thomas(0))).unwrap(), 4);
    assert_eq!(dim_local_2d(&sq, 0, Family::Face, 1, Some(DegreeProfile::raviart_thomas(1))).unwrap(), 4 * 2 + 3 - 1 + 1);
    assert_eq!(dim_local_2d(&sq, 0, Family::Face, 1, Some(DegreeProfile::standard(1))).unwrap(), 9);
    let bad = DegreeProfile { kb: -2, kd: 0, kr: 0 };
    assert!(dim_local_2d(&sq, 0, Family::Edge, 1, Some(bad)).is_err());
    assert!(dim_local_2d(&sq, 0, Family::Face, 0, None).is_err());
    assert_eq!(dim_local_2d(&sq, 0, Family::Elem, 0, None).unwrap(), 1);
}
