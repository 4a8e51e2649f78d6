//! `vem`: mesh validation, dimension tables, projections, complex checks.

mod checks;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::json;
use vem_core::complex::verify_complex;
use vem_core::geom::{check_shape_regularity, Mesh, MeshDocument};
use vem_core::integrate::ElementIntegrals;
use vem_core::linalg;
use vem_core::meshes;
use vem_core::poly::{MonomialBasis, PolyCoeffs};
use vem_core::spaces2d::{assemble_global_2d, dim_local_2d, membership_2d, DegreeProfile, Family, LocalSpace2D};
use vem_core::spaces3d::{assemble_global_3d, build_enhancement, dim_local_3d, LocalSpace3D};
use vem_core::VemError;

use report::{Check, RunReport, Status};

const PROJECTION_TOL: f64 = 1e-9;
const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Parser)]
#[command(name = "vem", version, about = "Divergence- and curl-conforming virtual element spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Emit the report as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Include wall time in the report (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check mesh structure and shape regularity.
    Validate {
        #[arg(long)]
        mesh: PathBuf,
        /// Regularity constant; failing elements are warned about, not rejected.
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: f64,
    },
    /// Local and global dimensions with the closed-form cross-check.
    Dims(SpaceArgs),
    /// Π⁰ of a polynomial field from DOFs vs a direct projection.
    Project {
        #[command(flatten)]
        space: SpaceArgs,
        /// JSON `{"degree": d, "terms": [[component, [a, b, c], value], ...]}` in global
        /// coordinates, or `@file`. Defaults to the constant field e₁.
        #[arg(long)]
        field: Option<String>,
    },
    /// Verify the discrete de Rham complexes on a simply connected mesh.
    Complex {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        k: i32,
    },
    /// Run the invariant suite on the bundled meshes or a directory of meshes.
    Selftest {
        #[arg(long)]
        mesh_dir: Option<PathBuf>,
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value = "face")]
    family: Family,
    #[arg(long)]
    k: i32,
    /// Degree profile `kb,kd,kr` (dimension counts only).
    #[arg(long)]
    profile: Option<DegreeProfile>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    SignFlip,
}

#[derive(Deserialize)]
struct FieldSpec {
    degree: i32,
    terms: Vec<(usize, [u32; 3], f64)>,
}

/// Either an input problem (exit 2) or a finished report.
enum Failure {
    Input(String),
}

impl From<VemError> for Failure {
    fn from(e: VemError) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = std::result::Result<RunReport, Failure>;

fn read(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> std::result::Result<(Vec<u8>, Mesh), Failure> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mesh = Mesh::from_json(&text)?;
    Ok((bytes, mesh))
}

fn validate(path: &Path, kappa: f64) -> Outcome {
    let bytes = read(path)?;
    let doc: MeshDocument = serde_json::from_slice(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut rep = RunReport::new("validate", &[&bytes]);
    let mesh = match Mesh::from_document(&doc) {
        Ok(m) => m,
        Err(e) => {
            rep.push(Check::new("structure", Status::Fail, e.to_string(), None));
            return Ok(rep);
        }
    };
    rep.push(Check::new("structure", Status::Pass, format!("{}D mesh, {} elements", mesh.dim(), mesh.num_elements()), None));
    if mesh.dim() == 2 {
        let chi = mesh.euler_characteristic();
        let ok = !mesh.simply_connected() || chi == 1;
        rep.push(Check::new("declared simple connectedness", Status::from_bool(ok), chi, None).with_note("Euler characteristic of the mesh graph"));
    }
    let reg = check_shape_regularity(&mesh, kappa);
    for el in &reg.elements {
        let status = if el.pass { Status::Pass } else { Status::Warn };
        let mut c = Check::new(format!("regularity element {}", el.element), status, el.radius_ratio.min(el.min_edge_ratio), Some(kappa));
        if !el.star_shaped {
            c = c.with_note("not star-shaped with respect to its centroid");
        }
        rep.push(c);
    }
    rep.details = Some(serde_json::to_value(&reg).expect("serializable"));
    Ok(rep)
}

fn local_dim(mesh: &Mesh, e: usize, f: Family, k: i32) -> vem_core::Result<usize> {
    if mesh.dim() == 2 {
        Ok(LocalSpace2D::for_element(mesh, e, f, k)?.dim())
    } else {
        Ok(LocalSpace3D::new(mesh, e, f, k)?.dim())
    }
}

fn dims(a: &SpaceArgs) -> Outcome {
    let (bytes, mesh) = load(&a.mesh)?;
    let mut rep = RunReport::new("dims", &[&bytes, format!("{} {} {:?}", a.family, a.k, a.profile).as_bytes()]);
    let mut local = Vec::new();
    for e in 0..mesh.num_elements() {
        let formula = if mesh.dim() == 2 {
            dim_local_2d(&mesh, e, a.family, a.k, a.profile)?
        } else {
            dim_local_3d(&mesh, e, a.family, a.k, a.profile)?
        };
        local.push(formula);
        if a.profile.is_none() {
            let built = local_dim(&mesh, e, a.family, a.k)?;
            rep.push(Check::equal(format!("element {e} local dimension"), built, formula));
        } else {
            rep.push(Check::new(format!("element {e} local dimension"), Status::Pass, formula, None).with_note("closed form for the profile"));
        }
    }
    let mut details = json!({ "family": a.family.name(), "k": a.k, "local": local });
    if a.profile.is_none() {
        let g = if mesh.dim() == 2 { assemble_global_2d(&mesh, a.family, a.k)? } else { assemble_global_3d(&mesh, a.family, a.k)? };
        let mut c = Check::equal("global dimension", g.dim, g.closed_form);
        if let Some(alt) = g.closed_form_alt {
            c = c.with_note(format!("alternative interior count gives {alt}"));
        }
        rep.push(c);
        details["global"] = json!(g.dim);
        details["closed_form"] = json!(g.closed_form);
        details["closed_form_alt"] = json!(g.closed_form_alt);
    }
    rep.details = Some(details);
    Ok(rep)
}

fn parse_field(spec: Option<&str>, dim: usize) -> std::result::Result<PolyCoeffs, Failure> {
    let text = match spec {
        None => return Ok(PolyCoeffs::from_terms(MonomialBasis::unit(dim, 0)?, dim, &[(0, [0, 0, 0], 1.0)])?),
        Some(s) => match s.strip_prefix('@') {
            Some(path) => String::from_utf8(read(Path::new(path))?).map_err(|e| Failure::Input(e.to_string()))?,
            None => s.to_string(),
        },
    };
    let f: FieldSpec = serde_json::from_str(&text).map_err(|e| Failure::Input(format!("field: {e}")))?;
    if f.terms.iter().any(|(c, e, _)| *c >= dim || (dim == 2 && e[2] != 0)) {
        return Err(Failure::Input(format!("field terms do not fit a {dim}D vector field")));
    }
    Ok(PolyCoeffs::from_terms(MonomialBasis::unit(dim, f.degree)?, dim, &f.terms)?)
}

/// Exact projection from the field's own moments.
fn direct_projection(ints: &ElementIntegrals, k: i32, v: &PolyCoeffs) -> vem_core::Result<DMatrix<f64>> {
    let v = ints.localize(v)?;
    let d = ints.dim();
    let mass = ints.vector_mass(k, k, d)?;
    let rhs = ints.vector_mass(k, v.basis().degree(), d)? * v.coeffs();
    linalg::solve_spd(&mass, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()), "direct projection")
}

fn project(a: &SpaceArgs, field: Option<&str>) -> Outcome {
    let (bytes, mesh) = load(&a.mesh)?;
    if a.profile.is_some() {
        return Err(Failure::Input("projection supports the standard degree profile only".into()));
    }
    let v = parse_field(field, mesh.dim())?;
    let mut rep = RunReport::new("project", &[&bytes, format!("{} {} {}", a.family, a.k, field.unwrap_or("")).as_bytes()]);
    let mut errors = Vec::new();
    for e in 0..mesh.num_elements() {
        let (got, ints) = match (mesh.dim(), a.family) {
            (2, Family::Face | Family::Edge) => {
                let s = LocalSpace2D::for_element(&mesh, e, a.family, a.k)?;
                let m = membership_2d(&s, &v)?;
                if !m.member {
                    rep.push(
                        Check::new(format!("element {e} membership"), Status::Fail, false, None).with_note(format!(
                            "trace degree {}, div degree {}, rot degree {}",
                            m.trace_degree, m.div_degree, m.rot_degree
                        )),
                    );
                    continue;
                }
                (s.project(&s.dofs_of_polynomial(&v)?)?, ElementIntegrals::element(&mesh, e)?)
            }
            (3, Family::Face) => {
                let s = LocalSpace3D::new(&mesh, e, a.family, a.k)?;
                (s.project(&s.dofs_of_polynomial(&v)?)?, s.integrals().clone())
            }
            (3, Family::Edge) => {
                let s = LocalSpace3D::new(&mesh, e, a.family, a.k)?;
                let op = build_enhancement(&s, None)?;
                (op.l2_projection(&op.extended_dofs(&s, &v)?)?, s.integrals().clone())
            }
            _ => return Err(Failure::Input(format!("no L2 projector for the {} family", a.family))),
        };
        let want = direct_projection(&ints, a.k, &v)?;
        let err = (got.coeffs() - want.column(0)).amax() / want.amax().max(1.0);
        errors.push(err);
        rep.push(Check::below(format!("element {e} projection error"), err, PROJECTION_TOL));
    }
    if mesh.dim() == 3 && v.basis().degree() > a.k {
        rep.checks.iter_mut().for_each(|c| {
            if c.note.is_none() {
                c.note = Some("membership is not checked for 3D fields".into());
            }
        });
    }
    rep.details = Some(json!({ "family": a.family.name(), "k": a.k, "errors": errors }));
    Ok(rep)
}

fn complex(path: &Path, k: i32) -> Outcome {
    let (bytes, mesh) = load(path)?;
    let r = verify_complex(&mesh, k)?;
    let mut rep = RunReport::new("complex", &[&bytes, &k.to_le_bytes()]);
    for s in &r.sequences {
        for l in &s.links {
            let mut c = Check::equal(format!("{} rank", l.name), l.rank, l.expected_rank);
            c.status = Status::from_bool(l.pass);
            if let Some(n) = &l.note {
                c = c.with_note(n.clone());
            }
            rep.push(c);
        }
        for c in &s.compositions {
            rep.push(Check::new(format!("{} residual", c.name), Status::from_bool(c.pass), c.residual, Some(vem_core::complex::COMPOSITION_TOL)));
        }
        for x in &s.exactness {
            rep.push(Check::new(format!("{}: exact at {}", s.name, x.at), Status::from_bool(x.pass), json!({"image": x.image, "kernel": x.kernel}), None));
        }
        let mut c = Check::new(format!("{}: Euler sum", s.name), Status::from_bool(s.euler_pass), s.euler, None);
        c.note = Some(s.spaces.iter().map(|d| format!("{}={}", d.name, d.dim)).collect::<Vec<_>>().join(" "));
        rep.push(c);
    }
    if let Some(d) = &r.duality {
        rep.push(Check::new("rotated-mesh duality", Status::from_bool(d.pass), d.angle, None));
    }
    rep.details = Some(serde_json::to_value(&r).expect("serializable"));
    Ok(rep)
}

fn selftest(dir: Option<&Path>, fault: Option<Fault>) -> Outcome {
    let mut inputs: Vec<(String, Vec<u8>)> = Vec::new();
    match dir {
        None => {
            for (file, text) in meshes::SOURCES {
                inputs.push((file.trim_end_matches(".json").to_string(), text.as_bytes().to_vec()));
            }
        }
        Some(d) => {
            let entries = std::fs::read_dir(d).map_err(|e| Failure::Input(format!("cannot read {}: {e}", d.display())))?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                inputs.push((name, read(&p)?));
            }
            if inputs.is_empty() {
                return Err(Failure::Input(format!("no mesh files in {}", d.display())));
            }
        }
    }
    let parts: Vec<&[u8]> = inputs.iter().map(|(_, b)| b.as_slice()).collect();
    let mut rep = RunReport::new("selftest", &parts);
    for (name, bytes) in &inputs {
        let text = String::from_utf8_lossy(bytes);
        let mut mesh = match Mesh::from_json(&text) {
            Ok(m) => m,
            Err(e) => {
                rep.push(Check::new(format!("{name}: load"), Status::Fail, e.to_string(), None));
                continue;
            }
        };
        if matches!(fault, Some(Fault::SignFlip)) {
            mesh.inject_sign_flip();
        }
        for c in checks::suite(name, &mesh) {
            rep.push(c);
        }
    }
    if fault.is_some() {
        rep.details = Some(json!({ "injected_fault": "sign-flip" }));
    }
    Ok(rep)
}

fn configure_threads() {
    if let Some(n) = std::env::var("VEM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let start = Instant::now();
    let outcome = match &cli.command {
        Command::Validate { mesh, kappa } => validate(mesh, *kappa),
        Command::Dims(a) => dims(a),
        Command::Project { space, field } => project(space, field.as_deref()),
        Command::Complex { mesh, k } => complex(mesh, *k),
        Command::Selftest { mesh_dir, inject_fault } => selftest(mesh_dir.as_deref(), *inject_fault),
    };
    match outcome {
        Ok(mut rep) => {
            rep.finish();
            if cli.timing {
                rep.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&rep).expect("serializable"));
            } else {
                print!("{}", rep.render_text());
            }
            if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
