//! Polytopal meshes in 2D and 3D.
//!
//! A 2D mesh uses its faces as elements; a 3D mesh has cells bounded by
//! planar faces. Global edges are oriented from the lower to the higher
//! vertex index. Every face carries a right-handed [`FaceFrame`] whose
//! first axis points from the face centroid to the midpoint of its first
//! edge, and whose normal follows the counterclockwise vertex loop.
//!
//! In the JSON document cells list signed face references: an entry `i >= 0`
//! means face `i` with its stored normal pointing out of the cell, an entry
//! `i < 0` means face `-i - 1` with the stored normal pointing in.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VemError};

/// Relative planarity tolerance (times the face diameter).
pub const PLANARITY_TOL: f64 = 1e-10;
/// Relative closure tolerance (times `h²`) for `Σ_f ±|f| n_f = 0`.
pub const CLOSURE_TOL: f64 = 1e-12;

/// On-disk mesh document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDocument {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    pub faces: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<Vec<i64>>,
    /// Declared topology of the domain; defaults to `true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simply_connected: Option<bool>,
}

/// Orthonormal in-plane axes and unit normal of a face.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaceFrame {
    pub origin: Vector3<f64>,
    pub axes: [Vector3<f64>; 2],
    pub normal: Vector3<f64>,
}

impl FaceFrame {
    /// Planar coordinates of a point relative to the frame origin.
    pub fn local(&self, x: &Vector3<f64>) -> Vector2<f64> {
        let d = x - self.origin;
        Vector2::new(d.dot(&self.axes[0]), d.dot(&self.axes[1]))
    }

    pub fn global(&self, y: &Vector2<f64>) -> Vector3<f64> {
        self.origin + self.axes[0] * y[0] + self.axes[1] * y[1]
    }

    /// The same frame seen from the other side (normal and second axis flipped).
    pub fn flipped(&self) -> FaceFrame {
        FaceFrame {
            origin: self.origin,
            axes: [self.axes[0], -self.axes[1]],
            normal: -self.normal,
        }
    }
}

/// Tangential part `φ - (φ·n) n` of a vector, in frame coordinates.
pub fn tangential_part(phi: &Vector3<f64>, frame: &FaceFrame) -> Vector2<f64> {
    let t = phi - frame.normal * phi.dot(&frame.normal);
    Vector2::new(t.dot(&frame.axes[0]), t.dot(&frame.axes[1]))
}

/// `φ ∧ n` (cross product with the face normal), in frame coordinates.
pub fn wedge_normal(phi: &Vector3<f64>, frame: &FaceFrame) -> Vector2<f64> {
    let w = phi.cross(&frame.normal);
    Vector2::new(w.dot(&frame.axes[0]), w.dot(&frame.axes[1]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshEdge {
    pub vertices: [usize; 2],
    pub tangent: Vector3<f64>,
    pub length: f64,
    pub midpoint: Vector3<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshFace {
    /// Vertex loop, counterclockwise with respect to `frame.normal`.
    pub vertices: Vec<usize>,
    /// Edge `i` joins `vertices[i]` and `vertices[i + 1]`.
    pub edges: Vec<usize>,
    /// `+1` when the loop runs along the global edge orientation.
    pub edge_signs: Vec<f64>,
    pub frame: FaceFrame,
    pub area: f64,
    pub centroid: Vector3<f64>,
    pub diameter: f64,
    /// Loop vertices in frame coordinates (2D meshes: global coordinates).
    pub coords: Vec<Vector2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshCell {
    pub faces: Vec<usize>,
    /// `+1` when the stored face normal points out of the cell.
    pub face_signs: Vec<f64>,
    pub edges: Vec<usize>,
    pub vertices: Vec<usize>,
    pub volume: f64,
    pub centroid: Vector3<f64>,
    pub diameter: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Vector3<f64>>,
    edges: Vec<MeshEdge>,
    faces: Vec<MeshFace>,
    cells: Vec<MeshCell>,
    simply_connected: bool,
    declared_edges: bool,
}

fn diameter_of(points: &[Vector3<f64>]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            h = h.max((points[i] - points[j]).norm());
        }
    }
    h
}

/// Signed area and centroid of a planar loop (shoelace).
fn polygon_area_centroid(pts: &[Vector2<f64>]) -> (f64, Vector2<f64>) {
    let n = pts.len();
    let mut a = 0.0;
    let mut c = Vector2::zeros();
    let o = pts[0];
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let cr = p[0] * q[1] - p[1] * q[0];
        a += cr;
        c += (p + q) * cr;
    }
    let area = 0.5 * a;
    let centroid = if area != 0.0 { o + c / (6.0 * area) } else { o };
    (area, centroid)
}

pub fn load_mesh(path: &std::path::Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    Mesh::from_json(&text)
}

impl Mesh {
    pub fn from_json(text: &str) -> Result<Mesh> {
        let doc: MeshDocument = serde_json::from_str(text).map_err(|e| VemError::Schema(e.to_string()))?;
        Mesh::from_document(&doc)
    }

    pub fn from_document(doc: &MeshDocument) -> Result<Mesh> {
        let dim = doc.dim;
        if dim != 2 && dim != 3 {
            return Err(VemError::Schema(format!("dim must be 2 or 3, got {dim}")));
        }
        let mut vertices = Vec::with_capacity(doc.vertices.len());
        for (i, v) in doc.vertices.iter().enumerate() {
            if v.len() != dim {
                return Err(VemError::Schema(format!("vertex {i} has {} coordinates, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(VemError::Schema(format!("vertex {i} has a non-finite coordinate")));
            }
            vertices.push(Vector3::new(v[0], v[1], if dim == 3 { v[2] } else { 0.0 }));
        }
        if doc.faces.is_empty() {
            return Err(VemError::Schema("mesh has no faces".into()));
        }
        if dim == 3 && doc.cells.is_empty() {
            return Err(VemError::Schema("3D mesh has no cells".into()));
        }
        if dim == 2 && !doc.cells.is_empty() {
            return Err(VemError::Schema("2D meshes use faces as elements and must not list cells".into()));
        }

        // Edges: declared order when given, otherwise sorted vertex pairs.
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_pairs: Vec<[usize; 2]> = Vec::new();
        if let Some(list) = &doc.edges {
            for (i, e) in list.iter().enumerate() {
                let key = (e[0].min(e[1]), e[0].max(e[1]));
                if key.0 == key.1 || key.1 >= vertices.len() {
                    return Err(VemError::Schema(format!("edge {i} is invalid: {e:?}")));
                }
                if edge_index.insert(key, i).is_some() {
                    return Err(VemError::Schema(format!("edge {i} is listed twice")));
                }
                edge_pairs.push([key.0, key.1]);
            }
        } else {
            let mut keys: Vec<(usize, usize)> = Vec::new();
            for f in &doc.faces {
                for i in 0..f.len() {
                    let (a, b) = (f[i], f[(i + 1) % f.len()]);
                    keys.push((a.min(b), a.max(b)));
                }
            }
            keys.sort_unstable();
            keys.dedup();
            for (i, k) in keys.into_iter().enumerate() {
                edge_index.insert(k, i);
                edge_pairs.push([k.0, k.1]);
            }
        }

        let mut faces = Vec::with_capacity(doc.faces.len());
        let mut edge_used = vec![false; edge_pairs.len()];
        for (fi, loop_) in doc.faces.iter().enumerate() {
            if loop_.len() < 3 {
                return Err(VemError::Schema(format!("face {fi} has fewer than three vertices")));
            }
            for &v in loop_ {
                if v >= vertices.len() {
                    return Err(VemError::Schema(format!("face {fi} references missing vertex {v}")));
                }
            }
            let mut sorted = loop_.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != loop_.len() {
                return Err(VemError::Schema(format!("face {fi} repeats a vertex")));
            }
            let mut edges = Vec::with_capacity(loop_.len());
            let mut signs = Vec::with_capacity(loop_.len());
            for i in 0..loop_.len() {
                let (a, b) = (loop_[i], loop_[(i + 1) % loop_.len()]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index
                    .get(&key)
                    .ok_or_else(|| VemError::Schema(format!("face {fi} uses edge {key:?} missing from the edge list")))?;
                edge_used[e] = true;
                edges.push(e);
                signs.push(if a < b { 1.0 } else { -1.0 });
            }
            faces.push(build_face(fi, dim, loop_, edges, signs, &vertices)?);
        }
        if let Some(e) = edge_used.iter().position(|u| !u) {
            return Err(VemError::Schema(format!("edge {e} is not used by any face")));
        }
        let edges: Vec<MeshEdge> = edge_pairs
            .iter()
            .map(|&[a, b]| {
                let d = vertices[b] - vertices[a];
                let length = d.norm();
                MeshEdge {
                    vertices: [a, b],
                    tangent: d / length,
                    length,
                    midpoint: (vertices[a] + vertices[b]) * 0.5,
                }
            })
            .collect();

        let mut cells = Vec::with_capacity(doc.cells.len());
        let mut face_use: Vec<Vec<(usize, f64)>> = vec![Vec::new(); faces.len()];
        for (ci, refs) in doc.cells.iter().enumerate() {
            if refs.len() < 4 {
                return Err(VemError::Schema(format!("cell {ci} has fewer than four faces")));
            }
            let mut fs = Vec::with_capacity(refs.len());
            let mut ss = Vec::with_capacity(refs.len());
            for &r in refs {
                let (f, s) = if r >= 0 { (r as usize, 1.0) } else { ((-r - 1) as usize, -1.0) };
                if f >= faces.len() {
                    return Err(VemError::Schema(format!("cell {ci} references missing face {f}")));
                }
                if fs.contains(&f) {
                    return Err(VemError::Schema(format!("cell {ci} lists face {f} twice")));
                }
                face_use[f].push((ci, s));
                fs.push(f);
                ss.push(s);
            }
            cells.push(build_cell(ci, fs, ss, &faces, &vertices)?);
        }
        if dim == 3 {
            for (f, uses) in face_use.iter().enumerate() {
                match uses.len() {
                    0 => return Err(VemError::Schema(format!("face {f} belongs to no cell"))),
                    1 => {}
                    2 if uses[0].1 != uses[1].1 => {}
                    2 => {
                        return Err(VemError::Orientation {
                            face: f,
                            detail: format!(
                                "cells {} and {} both see the stored normal as outward",
                                uses[0].0, uses[1].0
                            ),
                        })
                    }
                    _ => return Err(VemError::Schema(format!("face {f} is shared by more than two cells"))),
                }
            }
        } else {
            // each edge bounds at most two elements, traversed in opposite directions
            let mut use_: Vec<Vec<(usize, f64)>> = vec![Vec::new(); edges.len()];
            for (fi, f) in faces.iter().enumerate() {
                for (e, s) in f.edges.iter().zip(&f.edge_signs) {
                    use_[*e].push((fi, *s));
                }
            }
            for (e, u) in use_.iter().enumerate() {
                if u.len() > 2 {
                    return Err(VemError::Schema(format!("edge {e} is shared by more than two elements")));
                }
                if u.len() == 2 && u[0].1 == u[1].1 {
                    return Err(VemError::Orientation {
                        face: u[1].0,
                        detail: format!("edge {e} is traversed in the same direction by elements {} and {}", u[0].0, u[1].0),
                    });
                }
            }
        }
        Ok(Mesh {
            dim,
            vertices,
            edges,
            faces,
            cells,
            simply_connected: doc.simply_connected.unwrap_or(true),
            declared_edges: doc.edges.is_some(),
        })
    }

    /// Document that reloads into an identical mesh.
    pub fn to_document(&self) -> MeshDocument {
        MeshDocument {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| v.as_slice()[..self.dim].to_vec()).collect(),
            edges: self.declared_edges.then(|| self.edges.iter().map(|e| e.vertices).collect()),
            faces: self.faces.iter().map(|f| f.vertices.clone()).collect(),
            cells: self
                .cells
                .iter()
                .map(|c| {
                    c.faces
                        .iter()
                        .zip(&c.face_signs)
                        .map(|(&f, &s)| if s > 0.0 { f as i64 } else { -(f as i64) - 1 })
                        .collect()
                })
                .collect(),
            simply_connected: Some(self.simply_connected),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    pub fn faces(&self) -> &[MeshFace] {
        &self.faces
    }

    pub fn cells(&self) -> &[MeshCell] {
        &self.cells
    }

    /// Reverses the recorded orientation of the first edge of face 0.
    /// Only used to check that the self-test notices corrupted topology.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self) {
        if let Some(s) = self.faces.first_mut().and_then(|f| f.edge_signs.first_mut()) {
            *s = -*s;
        }
    }

    pub fn simply_connected(&self) -> bool {
        self.simply_connected
    }

    /// Number of elements: faces in 2D, cells in 3D.
    pub fn num_elements(&self) -> usize {
        if self.dim == 2 {
            self.faces.len()
        } else {
            self.cells.len()
        }
    }

    /// `(ℓ_v, ℓ_e, ℓ_f)` of an element (`ℓ_f = 0` in 2D).
    pub fn element_counts(&self, element: usize) -> (usize, usize, usize) {
        if self.dim == 2 {
            let f = &self.faces[element];
            (f.vertices.len(), f.edges.len(), 0)
        } else {
            let c = &self.cells[element];
            (c.vertices.len(), c.edges.len(), c.faces.len())
        }
    }

    /// Vertices minus edges plus faces (minus cells in 3D).
    pub fn euler_characteristic(&self) -> i64 {
        let base = self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64;
        if self.dim == 2 {
            base
        } else {
            base - self.cells.len() as i64
        }
    }

    /// Rigidly rotated copy of a 2D mesh (angle in radians, about the origin).
    pub fn rotated_2d(&self, angle: f64) -> Result<Mesh> {
        let (s, c) = angle.sin_cos();
        let mut doc = self.to_document();
        for v in doc.vertices.iter_mut() {
            let (x, y) = (v[0], v[1]);
            v[0] = c * x - s * y;
            v[1] = s * x + c * y;
        }
        Mesh::from_document(&doc)
    }

    /// Copy with every vertex transformed by `x ↦ R x + t`.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, shift: &Vector3<f64>) -> Result<Mesh> {
        let mut doc = self.to_document();
        for (v, x) in doc.vertices.iter_mut().zip(&self.vertices) {
            let y = rotation * x + shift;
            v.copy_from_slice(&y.as_slice()[..self.dim]);
        }
        Mesh::from_document(&doc)
    }
}

fn build_face(
    fi: usize,
    dim: usize,
    loop_: &[usize],
    edges: Vec<usize>,
    edge_signs: Vec<f64>,
    vertices: &[Vector3<f64>],
) -> Result<MeshFace> {
    let pts: Vec<Vector3<f64>> = loop_.iter().map(|&v| vertices[v]).collect();
    let diameter = diameter_of(&pts);
    if diameter <= 0.0 {
        return Err(VemError::Degenerate {
            object: fi,
            detail: "face has zero diameter".into(),
        });
    }
    if dim == 2 {
        let coords: Vec<Vector2<f64>> = pts.iter().map(|p| Vector2::new(p[0], p[1])).collect();
        let (area, c) = polygon_area_centroid(&coords);
        if area <= 0.0 {
            return Err(VemError::Orientation {
                face: fi,
                detail: format!("vertex loop is not counterclockwise (signed area {area:.3e})"),
            });
        }
        let frame = FaceFrame {
            origin: Vector3::new(c[0], c[1], 0.0),
            axes: [Vector3::x(), Vector3::y()],
            normal: Vector3::z(),
        };
        return Ok(MeshFace {
            vertices: loop_.to_vec(),
            edges,
            edge_signs,
            frame,
            area,
            centroid: Vector3::new(c[0], c[1], 0.0),
            diameter,
            coords,
        });
    }
    // Newell normal
    let mut nv = Vector3::zeros();
    for i in 0..pts.len() {
        nv += pts[i].cross(&pts[(i + 1) % pts.len()]);
    }
    let norm = nv.norm();
    if norm <= 1e-14 * diameter * diameter {
        return Err(VemError::Degenerate {
            object: fi,
            detail: "face has zero area".into(),
        });
    }
    let normal = nv / norm;
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / pts.len() as f64;
    let deviation = pts.iter().map(|p| (p - mean).dot(&normal).abs()).fold(0.0, f64::max);
    let tolerance = PLANARITY_TOL * diameter;
    if deviation > tolerance {
        return Err(VemError::NonPlanarFace {
            face: fi,
            deviation,
            tolerance,
        });
    }
    // provisional frame for the centroid
    let e0 = (pts[1] - pts[0]).normalize();
    let e1 = normal.cross(&e0);
    let prov: Vec<Vector2<f64>> = pts
        .iter()
        .map(|p| {
            let d = p - mean;
            Vector2::new(d.dot(&e0), d.dot(&e1))
        })
        .collect();
    let (area, c2) = polygon_area_centroid(&prov);
    let centroid = mean + e0 * c2[0] + e1 * c2[1];
    let mid = (pts[0] + pts[1]) * 0.5;
    let mut a0 = mid - centroid;
    a0 -= normal * a0.dot(&normal);
    if a0.norm() <= 1e-12 * diameter {
        a0 = e0;
    }
    let a0 = a0.normalize();
    let a1 = normal.cross(&a0);
    let frame = FaceFrame {
        origin: centroid,
        axes: [a0, a1],
        normal,
    };
    let coords = pts.iter().map(|p| frame.local(p)).collect();
    Ok(MeshFace {
        vertices: loop_.to_vec(),
        edges,
        edge_signs,
        frame,
        area,
        centroid,
        diameter,
        coords,
    })
}

fn build_cell(
    ci: usize,
    faces_of: Vec<usize>,
    signs: Vec<f64>,
    faces: &[MeshFace],
    vertices: &[Vector3<f64>],
) -> Result<MeshCell> {
    // Orientation: every edge of the cell is met exactly twice with opposite
    // effective directions.
    let mut edge_dirs: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (&f, &s) in faces_of.iter().zip(&signs) {
        for (&e, &es) in faces[f].edges.iter().zip(&faces[f].edge_signs) {
            edge_dirs.entry(e).or_default().push((f, s * es));
        }
    }
    let mut conflicts: BTreeMap<usize, usize> = BTreeMap::new();
    for (e, uses) in &edge_dirs {
        if uses.len() != 2 {
            return Err(VemError::Schema(format!(
                "cell {ci}: edge {e} is shared by {} of its faces (expected 2)",
                uses.len()
            )));
        }
        if uses[0].1 == uses[1].1 {
            *conflicts.entry(uses[0].0).or_default() += 1;
            *conflicts.entry(uses[1].0).or_default() += 1;
        }
    }
    if let Some((&face, _)) = conflicts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
        return Err(VemError::Orientation {
            face,
            detail: format!("face loop disagrees with its neighbours in cell {ci}"),
        });
    }

    let mut vs: Vec<usize> = faces_of.iter().flat_map(|&f| faces[f].vertices.iter().copied()).collect();
    vs.sort_unstable();
    vs.dedup();
    let pts: Vec<Vector3<f64>> = vs.iter().map(|&v| vertices[v]).collect();
    let diameter = diameter_of(&pts);

    let mut closure = Vector3::zeros();
    for (&f, &s) in faces_of.iter().zip(&signs) {
        closure += faces[f].frame.normal * (s * faces[f].area);
    }
    let residual = closure.norm();
    if residual > CLOSURE_TOL * diameter * diameter {
        return Err(VemError::OpenCell { cell: ci, residual });
    }

    // volume and centroid from signed tetrahedra (reference, face centroid, loop edge)
    let reference = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / pts.len() as f64;
    let mut volume = 0.0;
    let mut moment = Vector3::zeros();
    for (&f, &s) in faces_of.iter().zip(&signs) {
        let face = &faces[f];
        let n = face.vertices.len();
        for i in 0..n {
            let a = vertices[face.vertices[i]];
            let b = vertices[face.vertices[(i + 1) % n]];
            let v = s * (face.centroid - reference).dot(&(a - reference).cross(&(b - reference))) / 6.0;
            volume += v;
            moment += (reference + face.centroid + a + b) * (v / 4.0);
        }
    }
    if volume <= 0.0 {
        return Err(VemError::Orientation {
            face: faces_of[0],
            detail: format!("cell {ci} has non-positive signed volume {volume:.3e}; face normals point inward"),
        });
    }
    let mut es: Vec<usize> = edge_dirs.keys().copied().collect();
    es.sort_unstable();
    Ok(MeshCell {
        faces: faces_of,
        face_signs: signs,
        edges: es,
        vertices: vs,
        volume,
        centroid: moment / volume,
        diameter,
    })
}

/// Edge of a [`Polygon`], described in the polygon's own coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PolygonEdge {
    pub global: usize,
    /// `+1` when the counterclockwise loop runs along the global orientation.
    pub sign: f64,
    pub length: f64,
    /// Start point of the globally oriented edge.
    pub start: Vector2<f64>,
    /// Unit tangent of the globally oriented edge.
    pub tangent: Vector2<f64>,
}

impl PolygonEdge {
    /// Point at arclength `sigma` from the global start vertex.
    pub fn point(&self, sigma: f64) -> Vector2<f64> {
        self.start + self.tangent * sigma
    }

    /// Normal obtained by turning the global tangent clockwise.
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.tangent[1], -self.tangent[0])
    }

    /// Outward normal with respect to the polygon.
    pub fn outward_normal(&self) -> Vector2<f64> {
        self.normal() * self.sign
    }
}

/// A polygon in planar coordinates: a 2D element, or a 3D face seen in its frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub id: usize,
    pub coords: Vec<Vector2<f64>>,
    /// Edge `i` joins `coords[i]` and `coords[i + 1]`.
    pub edges: Vec<PolygonEdge>,
    pub area: f64,
    pub centroid: Vector2<f64>,
    pub diameter: f64,
}

impl Polygon {
    /// Face `face` of a mesh: global coordinates in 2D, frame coordinates in 3D.
    pub fn from_face(mesh: &Mesh, face: usize) -> Polygon {
        let f = &mesh.faces()[face];
        let n = f.coords.len();
        let edges = (0..n)
            .map(|i| {
                let (a, b) = (f.coords[i], f.coords[(i + 1) % n]);
                let (start, end) = if f.edge_signs[i] > 0.0 { (a, b) } else { (b, a) };
                let d = end - start;
                let length = d.norm();
                PolygonEdge {
                    global: f.edges[i],
                    sign: f.edge_signs[i],
                    length,
                    start,
                    tangent: d / length,
                }
            })
            .collect();
        let centroid = if mesh.dim() == 2 {
            Vector2::new(f.centroid[0], f.centroid[1])
        } else {
            f.frame.local(&f.centroid)
        };
        Polygon {
            id: face,
            coords: f.coords.clone(),
            edges,
            area: f.area,
            centroid,
            diameter: f.diameter,
        }
    }

    /// Same polygon after the rigid motion `y = R x + t`.
    pub fn transformed(&self, rotation: &nalgebra::Matrix2<f64>, shift: &Vector2<f64>) -> Polygon {
        let map = |x: &Vector2<f64>| rotation * x + shift;
        Polygon {
            id: self.id,
            coords: self.coords.iter().map(map).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| PolygonEdge {
                    start: map(&e.start),
                    tangent: rotation * e.tangent,
                    ..e.clone()
                })
                .collect(),
            area: self.area,
            centroid: map(&self.centroid),
            diameter: self.diameter,
        }
    }
}

/// Per-element outcome of the shape-regularity probe.
#[derive(Clone, Debug, Serialize)]
pub struct ElementRegularity {
    pub element: usize,
    /// All boundary simplices are positively oriented with respect to the centroid.
    pub star_shaped: bool,
    /// Distance from the centroid to the boundary (inscribed disk/ball radius estimate).
    pub inscribed_radius: f64,
    pub diameter: f64,
    pub radius_ratio: f64,
    /// 2D: min edge length / h_E. 3D: min over faces of (edge length / h_f).
    pub min_edge_ratio: f64,
    /// 3D only: min over faces of (face inscribed radius / h_P).
    pub min_face_radius_ratio: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    pub kappa: f64,
    pub elements: Vec<ElementRegularity>,
    pub all_pass: bool,
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

fn polygon_probe(coords: &[Vector2<f64>], centroid: &Vector2<f64>) -> (bool, f64) {
    let n = coords.len();
    let mut star = true;
    let mut r = f64::INFINITY;
    for i in 0..n {
        let a = coords[i] - centroid;
        let b = coords[(i + 1) % n] - centroid;
        if a[0] * b[1] - a[1] * b[0] <= 0.0 {
            star = false;
        }
        r = r.min(segment_distance(centroid, &coords[i], &coords[(i + 1) % n]));
    }
    (star, r)
}

fn point_face_distance(p: &Vector3<f64>, face: &MeshFace) -> f64 {
    let y = face.frame.local(p);
    let h = (p - face.frame.origin).dot(&face.frame.normal).abs();
    let n = face.coords.len();
    let mut inside = true;
    let mut edge_d = f64::INFINITY;
    for i in 0..n {
        let a = face.coords[i];
        let b = face.coords[(i + 1) % n];
        let ab = b - a;
        let ay = y - a;
        if ab[0] * ay[1] - ab[1] * ay[0] < 0.0 {
            inside = false;
        }
        edge_d = edge_d.min(segment_distance(&y, &a, &b));
    }
    if inside {
        h
    } else {
        (h * h + edge_d * edge_d).sqrt()
    }
}

/// Checks the mesh-regularity bullet list against `kappa`.
///
/// Elements failing the probe are flagged, never rejected: the spaces only
/// need simply connected elements.
pub fn check_shape_regularity(mesh: &Mesh, kappa: f64) -> RegularityReport {
    let mut elements = Vec::with_capacity(mesh.num_elements());
    if mesh.dim() == 2 {
        for (i, f) in mesh.faces().iter().enumerate() {
            let c = Vector2::new(f.centroid[0], f.centroid[1]);
            let (star, r) = polygon_probe(&f.coords, &c);
            let min_edge = f.edges.iter().map(|&e| mesh.edges()[e].length).fold(f64::INFINITY, f64::min);
            let radius_ratio = r / f.diameter;
            let min_edge_ratio = min_edge / f.diameter;
            let pass = star && radius_ratio >= kappa && min_edge_ratio >= kappa;
            elements.push(ElementRegularity {
                element: i,
                star_shaped: star,
                inscribed_radius: r,
                diameter: f.diameter,
                radius_ratio,
                min_edge_ratio,
                min_face_radius_ratio: None,
                pass,
            });
        }
    } else {
        for (i, cell) in mesh.cells().iter().enumerate() {
            let mut star = true;
            let mut r = f64::INFINITY;
            let mut min_edge_ratio = f64::INFINITY;
            let mut min_face_ratio = f64::INFINITY;
            for (&fi, &s) in cell.faces.iter().zip(&cell.face_signs) {
                let f = &mesh.faces()[fi];
                let n = f.vertices.len();
                for j in 0..n {
                    let a = mesh.vertices()[f.vertices[j]];
                    let b = mesh.vertices()[f.vertices[(j + 1) % n]];
                    let vol = s * (f.centroid - cell.centroid).dot(&(a - cell.centroid).cross(&(b - cell.centroid)));
                    if vol <= 0.0 {
                        star = false;
                    }
                }
                r = r.min(point_face_distance(&cell.centroid, f));
                let (fstar, fr) = polygon_probe(&f.coords, &f.frame.local(&f.centroid));
                if !fstar {
                    star = false;
                }
                min_face_ratio = min_face_ratio.min(fr / cell.diameter);
                for &e in &f.edges {
                    min_edge_ratio = min_edge_ratio.min(mesh.edges()[e].length / f.diameter);
                }
            }
            let radius_ratio = r / cell.diameter;
            let pass = star && radius_ratio >= kappa && min_face_ratio >= kappa && min_edge_ratio >= kappa;
            elements.push(ElementRegularity {
                element: i,
                star_shaped: star,
                inscribed_radius: r,
                diameter: cell.diameter,
                radius_ratio,
                min_edge_ratio,
                min_face_radius_ratio: Some(min_face_ratio),
                pass,
            });
        }
    }
    let all_pass = elements.iter().all(|e| e.pass);
    RegularityReport {
        kappa,
        elements,
        all_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshes;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square_geometry() {
        let m = meshes::unit_square();
        assert_eq!(m.element_counts(0), (4, 4, 0));
        assert_relative_eq!(m.faces()[0].area, 1.0);
        assert_relative_eq!(m.faces()[0].diameter, 2f64.sqrt());
    }

    #[test]
    fn unit_cube_geometry() {
        let m = meshes::unit_cube();
        assert_eq!(m.element_counts(0), (8, 12, 6));
        assert_relative_eq!(m.cells()[0].volume, 1.0, epsilon = 1e-14);
        assert_relative_eq!(m.cells()[0].centroid, Vector3::new(0.5, 0.5, 0.5), epsilon = 1e-14);
    }

    #[test]
    fn reversed_face_is_named() {
        let mut doc = meshes::unit_cube().to_document();
        doc.faces[3].reverse();
        match Mesh::from_document(&doc) {
            Err(VemError::Orientation { face, .. }) => assert_eq!(face, 3),
            other => panic!("expected orientation error, got {other:?}"),
        }
    }

    #[test]
    fn clockwise_polygon_is_rejected() {
        let mut doc = meshes::unit_square().to_document();
        doc.faces[0].reverse();
        assert!(matches!(Mesh::from_document(&doc), Err(VemError::Orientation { face: 0, .. })));
    }

    #[test]
    fn non_planar_face_is_rejected() {
        let mut doc = meshes::unit_cube().to_document();
        // lift one vertex of the cube; every face through it bends
        doc.vertices[7][2] += 1e-3;
        assert!(matches!(Mesh::from_document(&doc), Err(VemError::NonPlanarFace { .. })));
    }

    #[test]
    fn open_cell_is_rejected() {
        let mut doc = meshes::unit_cube().to_document();
        doc.cells[0].pop();
        assert!(Mesh::from_document(&doc).is_err());
    }

    #[test]
    fn frames_are_right_handed_and_orthonormal() {
        for m in [meshes::unit_cube(), meshes::prism(), meshes::two_cubes()] {
            for f in m.faces() {
                let [a, b] = f.frame.axes;
                assert!((a.norm() - 1.0).abs() < 1e-14);
                assert!((b.norm() - 1.0).abs() < 1e-14);
                assert!(a.dot(&b).abs() < 1e-14);
                assert!((a.cross(&b) - f.frame.normal).norm() < 1e-14);
                // loop counterclockwise in the frame
                let (area, _) = polygon_area_centroid(&f.coords);
                assert!(area > 0.0);
            }
        }
    }

    #[test]
    fn closure_holds_for_bundled_cells() {
        for m in [meshes::unit_cube(), meshes::prism(), meshes::two_cubes()] {
            for c in m.cells() {
                let mut s = Vector3::zeros();
                for (&f, &sg) in c.faces.iter().zip(&c.face_signs) {
                    s += m.faces()[f].frame.normal * (sg * m.faces()[f].area);
                }
                assert!(s.norm() < 1e-12 * c.diameter * c.diameter);
            }
        }
    }

    #[test]
    fn tangential_part_examples() {
        let frame = FaceFrame {
            origin: Vector3::zeros(),
            axes: [Vector3::x(), Vector3::y()],
            normal: Vector3::z(),
        };
        let phi = Vector3::new(1.0, 2.0, 7.0);
        assert_eq!(tangential_part(&phi, &frame), Vector2::new(1.0, 2.0));
        assert_eq!(tangential_part(&Vector3::z(), &frame), Vector2::zeros());
        assert_eq!(wedge_normal(&phi, &frame), Vector2::new(2.0, -1.0));
    }

    #[test]
    fn regularity_of_unit_square() {
        let m = meshes::unit_square();
        let r = check_shape_regularity(&m, 0.3);
        assert!(r.all_pass);
        assert_relative_eq!(r.elements[0].inscribed_radius, 0.5);
        assert!((r.elements[0].radius_ratio - 0.5 / 2f64.sqrt()).abs() < 1e-14);
        assert!(!check_shape_regularity(&m, 0.5).all_pass);
        assert!(check_shape_regularity(&m, 0.0).all_pass);
    }

    #[test]
    fn document_round_trip() {
        for m in meshes::all() {
            let again = Mesh::from_document(&m.1.to_document()).unwrap();
            assert_eq!(again, m.1);
        }
    }
}
