use nalgebra::{DVector, Rotation3, Vector3};
use proptest::prelude::*;
use vem_core::geom::Mesh;
use vem_core::integrate::ElementIntegrals;
use vem_core::meshes;
use vem_core::poly::{apply, DiffOp, MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::Family;
use vem_core::spaces3d::LocalSpace3D;

fn field(dim: usize, degree: i32, comps: usize, c: &[f64]) -> PolyCoeffs {
    let b = MonomialBasis::unit(dim, degree).unwrap();
    let n = comps * b.len();
    PolyCoeffs::new(b, comps, DVector::from_fn(n, |i, _| c[i % c.len()])).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn derivative_chains_vanish(c in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let phi = field(3, 4, 1, &c);
        let cg = apply(DiffOp::Curl, &apply(DiffOp::Grad, &phi).unwrap()).unwrap();
        prop_assert!(cg.coeffs().amax() < 1e-12);
        let v = field(3, 4, 3, &c);
        let dc = apply(DiffOp::Div, &apply(DiffOp::Curl, &v).unwrap()).unwrap();
        prop_assert!(dc.coeffs().amax() < 1e-12);
        let psi = field(2, 4, 1, &c);
        let rg = apply(DiffOp::Rot, &apply(DiffOp::Grad, &psi).unwrap()).unwrap();
        prop_assert!(rg.coeffs().amax() < 1e-12);
    }

    #[test]
    fn rigid_motions_preserve_cell_data(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, t in -5.0f64..5.0) {
        let prism = meshes::prism();
        let q = Rotation3::from_scaled_axis(Vector3::new(ax, ay, az)).into_inner();
        let moved = prism.transformed(&q, &Vector3::new(t, -t, 0.5 * t)).unwrap();
        let a = ElementIntegrals::cell(&prism, 0).unwrap();
        let b = ElementIntegrals::cell(&moved, 0).unwrap();
        prop_assert!((a.measure() - b.measure()).abs() < 1e-12);
        prop_assert!((a.scale() - b.scale()).abs() < 1e-12);
        let s = LocalSpace3D::new(&moved, 0, Family::Face, 2).unwrap();
        let p = field(3, 2, 3, &[0.3, -0.7, 0.2, 0.9]);
        let back = s.project(&s.dofs_of_polynomial(&p).unwrap()).unwrap();
        let want = s.integrals().localize(&p).unwrap();
        prop_assert!((back.coeffs() - want.coeffs()).amax() < 1e-9);
    }
}

#[test]
fn json_round_trip_keeps_topology() {
    for (name, m) in meshes::all() {
        let text = serde_json::to_string(&m.to_document()).unwrap();
        let back = Mesh::from_json(&text).unwrap();
        assert_eq!(back.vertices().len(), m.vertices().len(), "{name}");
        assert_eq!(back.edges().len(), m.edges().len(), "{name}");
        assert_eq!(back.faces().len(), m.faces().len(), "{name}");
        assert_eq!(back.cells().len(), m.cells().len(), "{name}");
        assert_eq!(back.euler_characteristic(), m.euler_characteristic(), "{name}");
    }
}
