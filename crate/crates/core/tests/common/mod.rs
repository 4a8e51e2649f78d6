//! Independent quadrature oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vem_core::geom::Mesh;
use vem_core::integrate::{element_quadrature, face_quadrature, segment_quadrature, Quadrature, SubspaceBasis};
use vem_core::poly::{MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::{Family, LocalSpace2D};
use vem_core::spaces3d::LocalSpace3D;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random polynomial field with coefficients in `[-1, 1]` on the unit basis.
pub fn random_poly(rng: &mut ChaCha8Rng, dim: usize, degree: i32, comps: usize) -> PolyCoeffs {
    let b = MonomialBasis::unit(dim, degree).unwrap();
    let n = comps * b.len();
    PolyCoeffs::new(b, comps, DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
}

fn integrate(q: &Quadrature, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
    q.points.iter().zip(&q.weights).map(|(x, w)| w * f(x)).sum()
}

fn at(p: &PolyCoeffs, x: &[f64; 3]) -> Vec<f64> {
    p.eval(&x[..p.basis().dim()])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Columns of a subspace as polynomial fields.
fn columns(s: &SubspaceBasis, basis: MonomialBasis) -> Vec<PolyCoeffs> {
    (0..s.len())
        .map(|j| PolyCoeffs::new(basis.clone(), s.dim, s.coeffs.column(j).into_owned()).unwrap())
        .collect()
}

fn edge_moments(mesh: &Mesh, g: usize, n: usize, deg: usize, f: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
    let e = &mesh.edges()[g];
    let a = mesh.vertices()[e.vertices[0]];
    let b = mesh.vertices()[e.vertices[1]];
    let q = segment_quadrature(&[a[0], a[1], a[2]], &[b[0], b[1], b[2]], deg + n);
    (0..n)
        .map(|j| {
            integrate(&q, |x| {
                let sigma = (Vector3::new(x[0], x[1], x[2]) - a).norm();
                f(x) * (sigma / e.length - 0.5).powi(j as i32)
            }) / e.length
        })
        .collect()
}

/// DOFs of a polynomial on a 2D element computed by direct quadrature.
pub fn oracle_dofs_2d(mesh: &Mesh, s: &LocalSpace2D, p: &PolyCoeffs) -> DVector<f64> {
    let e = s.polygon().id;
    let area = s.polygon().area;
    let deg = (p.basis().degree() + s.degree() + 2) as usize;
    let q = element_quadrature(mesh, e, deg);
    let mut out = Vec::new();
    for b in &s.layout().blocks {
        if let Some(v) = b.name.strip_prefix("vertex") {
            let x = mesh.vertices()[v.parse::<usize>().unwrap()];
            out.push(at(p, &[x[0], x[1], 0.0])[0]);
        } else if let Some(g) = b.name.strip_prefix("edge") {
            let g: usize = g.parse().unwrap();
            let t = mesh.edges()[g].tangent;
            let dir = match s.family() {
                Family::Face => [t[1], -t[0]],
                _ => [t[0], t[1]],
            };
            let fam = s.family();
            out.extend(edge_moments(mesh, g, b.len, deg, |x| {
                let v = at(p, x);
                if fam == Family::Vert { v[0] } else { dot(&v, &dir) }
            }));
        } else if b.name == "P" {
            let basis = s.basis(s.degree());
            for j in 0..b.len {
                out.push(integrate(&q, |x| at(p, x)[0] * basis.eval(&x[..2])[j]) / area);
            }
        } else {
            let sub = match b.name.as_str() {
                "G" | "R" => s.inner_subspace(),
                _ => s.perp_subspace(),
            }
            .unwrap();
            for c in columns(sub, s.basis(sub.degree)) {
                out.push(integrate(&q, |x| dot(&at(p, x), &at(&c, x))) / area);
            }
        }
    }
    DVector::from_vec(out)
}

/// DOFs of a polynomial on a 3D cell computed by direct quadrature.
pub fn oracle_dofs_3d(mesh: &Mesh, s: &LocalSpace3D, p: &PolyCoeffs) -> DVector<f64> {
    let vol = s.integrals().measure();
    let deg = (p.basis().degree() + s.degree() + 2) as usize;
    let q = element_quadrature(mesh, s.cell(), deg);
    let fam = s.family();
    let mut out = Vec::new();
    for b in &s.layout().blocks {
        if let Some(v) = b.name.strip_prefix("vertex") {
            let x = mesh.vertices()[v.parse::<usize>().unwrap()];
            out.push(at(p, &[x[0], x[1], x[2]])[0]);
        } else if let Some(g) = b.name.strip_prefix("edge") {
            let g: usize = g.parse().unwrap();
            let t = mesh.edges()[g].tangent;
            out.extend(edge_moments(mesh, g, b.len, deg, |x| {
                let v = at(p, x);
                if fam == Family::Vert { v[0] } else { dot(&v, t.as_slice()) }
            }));
        } else if let Some(rest) = b.name.strip_prefix("face") {
            let (fid, part) = match rest.split_once(':') {
                Some((a, b)) => (a.parse::<usize>().unwrap(), Some(b)),
                None => (rest.parse::<usize>().unwrap(), None),
            };
            let i = s.faces().iter().position(|cf| cf.face == fid).unwrap();
            let cf = &s.faces()[i];
            let fq = face_quadrature(mesh, fid, deg);
            let local = |x: &[f64; 3]| {
                let y = cf.frame.local(&Vector3::new(x[0], x[1], x[2]));
                [y[0], y[1]]
            };
            let area = cf.polygon.area;
            match part {
                None => {
                    let fb = cf.basis(s.degree());
                    let n = cf.frame.normal;
                    for j in 0..b.len {
                        out.push(
                            integrate(&fq, |x| {
                                let v = at(p, x);
                                let w = if fam == Family::Vert { v[0] } else { dot(&v, n.as_slice()) };
                                w * fb.eval(&local(x))[j]
                            }) / area,
                        );
                    }
                }
                Some(name) => {
                    let fs = s.face_space(i).unwrap();
                    let sub = if name == "R" { fs.inner_subspace() } else { fs.perp_subspace() }.unwrap();
                    for c in columns(sub, fs.basis(sub.degree)) {
                        out.push(
                            integrate(&fq, |x| {
                                let v = Vector3::from_column_slice(&at(p, x));
                                let tv = Vector2::new(v.dot(&cf.frame.axes[0]), v.dot(&cf.frame.axes[1]));
                                let cv = c.eval(&local(x));
                                tv[0] * cv[0] + tv[1] * cv[1]
                            }) / area,
                        );
                    }
                }
            }
        } else if b.name == "P" {
            let basis = s.basis(s.degree());
            for j in 0..b.len {
                out.push(integrate(&q, |x| at(p, x)[0] * basis.eval(x)[j]) / vol);
            }
        } else {
            let sub = match b.name.as_str() {
                "G" | "R" => s.inner_subspace(),
                _ => s.perp_subspace(),
            }
            .unwrap();
            for c in columns(sub, s.basis(sub.degree)) {
                out.push(integrate(&q, |x| dot(&at(p, x), &at(&c, x))) / vol);
            }
        }
    }
    DVector::from_vec(out)
}

/// Moments `∫ p·m` against the monomials of `(P_k)^comps` on a basis, by quadrature.
pub fn oracle_moments(q: &Quadrature, p: &PolyCoeffs, basis: &MonomialBasis, comps: usize) -> DVector<f64> {
    let n = basis.len();
    DVector::from_fn(comps * n, |i, _| {
        let (c, a) = (i / n, i % n);
        integrate(q, |x| at(p, x)[c] * basis.eval(&x[..basis.dim()])[a])
    })
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}
