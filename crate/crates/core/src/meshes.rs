//! Bundled sample meshes.

use crate::geom::Mesh;

pub const UNIT_SQUARE: &str = include_str!("../meshes/unit_square.json");
pub const SQUARES_2X2: &str = include_str!("../meshes/squares_2x2.json");
pub const VORONOI5: &str = include_str!("../meshes/voronoi5.json");
pub const PENTAGON: &str = include_str!("../meshes/pentagon.json");
pub const UNIT_CUBE: &str = include_str!("../meshes/unit_cube.json");
pub const TWO_CUBES: &str = include_str!("../meshes/two_cubes.json");
pub const PRISM: &str = include_str!("../meshes/prism.json");

/// File name and JSON text of every bundled mesh.
pub const SOURCES: [(&str, &str); 7] = [
    ("unit_square.json", UNIT_SQUARE),
    ("squares_2x2.json", SQUARES_2X2),
    ("voronoi5.json", VORONOI5),
    ("pentagon.json", PENTAGON),
    ("unit_cube.json", UNIT_CUBE),
    ("two_cubes.json", TWO_CUBES),
    ("prism.json", PRISM),
];

fn parse(text: &str) -> Mesh {
    Mesh::from_json(text).expect("bundled mesh is valid")
}

pub fn unit_square() -> Mesh {
    parse(UNIT_SQUARE)
}

pub fn squares_2x2() -> Mesh {
    parse(SQUARES_2X2)
}

pub fn voronoi5() -> Mesh {
    parse(VORONOI5)
}

pub fn pentagon() -> Mesh {
    parse(PENTAGON)
}

pub fn unit_cube() -> Mesh {
    parse(UNIT_CUBE)
}

pub fn two_cubes() -> Mesh {
    parse(TWO_CUBES)
}

pub fn prism() -> Mesh {
    parse(PRISM)
}

/// Every bundled mesh, keyed by a short name.
pub fn all() -> Vec<(&'static str, Mesh)> {
    SOURCES
        .iter()
        .map(|(file, text)| (file.trim_end_matches(".json"), parse(text)))
        .collect()
}

pub fn all_2d() -> Vec<(&'static str, Mesh)> {
    all().into_iter().filter(|(_, m)| m.dim() == 2).collect()
}

pub fn all_3d() -> Vec<(&'static str, Mesh)> {
    all().into_iter().filter(|(_, m)| m.dim() == 3).collect()
}
