//! Procedural meshes used as fixtures.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::Mesh;

/// One triangle with side `l[s]` opposite vertex `s`, laid out in the xy-plane.
pub fn single_triangle(l: [f64; 3]) -> Mesh {
    let x = (l[1] * l[1] - l[0] * l[0] + l[2] * l[2]) / (2.0 * l[2]);
    let y = (l[1] * l[1] - x * x).max(0.0).sqrt();
    let positions = vec![[0.0, 0.0, 0.0], [l[2], 0.0, 0.0], [x, y, 0.0]];
    Mesh::from_faces(positions, &[[0, 1, 2]]).expect("triangle")
}

/// Regular tetrahedron with unit edge length.
pub fn tetrahedron() -> Mesh {
    let s = 1.0 / (2.0 * 2f64.sqrt());
    let positions = vec![[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]];
    let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Mesh::from_faces(positions, &faces).expect("tetrahedron")
}

/// Regular octahedron with unit edge length.
pub fn octahedron() -> Mesh {
    let s = 1.0 / 2f64.sqrt();
    let positions = vec![
        [s, 0.0, 0.0],
        [-s, 0.0, 0.0],
        [0.0, s, 0.0],
        [0.0, -s, 0.0],
        [0.0, 0.0, s],
        [0.0, 0.0, -s],
    ];
    let faces = [
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    Mesh::from_faces(positions, &faces).expect("octahedron")
}

fn grid_faces(n: usize, m: usize, wrap: bool) -> Vec<[usize; 3]> {
    let (ci, cj) = if wrap { (n, m) } else { (n - 1, m - 1) };
    let idx = |i: usize, j: usize| (j % m) * n + (i % n);
    let mut faces = Vec::with_capacity(2 * ci * cj);
    for j in 0..cj {
        for i in 0..ci {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    faces
}

/// `n × n` vertex grid on the unit square, every cell split along the same diagonal.
pub fn grid_disk(n: usize) -> Mesh {
    assert!(n >= 2);
    let h = 1.0 / (n - 1) as f64;
    let positions = (0..n * n).map(|k| [(k % n) as f64 * h, (k / n) as f64 * h, 0.0]).collect();
    Mesh::from_faces(positions, &grid_faces(n, n, false)).expect("grid")
}

/// Grid disk with jittered interior vertices and a random height field.
pub fn perturbed_disk(n: usize, jitter: f64, height: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / (n - 1) as f64;
    let mut positions = Vec::with_capacity(n * n);
    for k in 0..n * n {
        let (i, j) = (k % n, k / n);
        let mut p = [i as f64 * h, j as f64 * h, 0.0];
        if i > 0 && j > 0 && i < n - 1 && j < n - 1 {
            p[0] += rng.gen_range(-jitter..jitter) * h;
            p[1] += rng.gen_range(-jitter..jitter) * h;
        }
        p[2] = rng.gen_range(-height..height) * h;
        positions.push(p);
    }
    Mesh::from_faces(positions, &grid_faces(n, n, false)).expect("grid")
}

/// Torus of revolution sampled on an `n × m` grid (`n` around the axis).
pub fn torus(n: usize, m: usize, major: f64, minor: f64) -> Mesh {
    assert!(n >= 3 && m >= 3);
    let mut positions = Vec::with_capacity(n * m);
    for j in 0..m {
        let psi = TAU * j as f64 / m as f64;
        for i in 0..n {
            let phi = TAU * i as f64 / n as f64;
            let rho = major + minor * psi.cos();
            positions.push([rho * phi.cos(), rho * phi.sin(), minor * psi.sin()]);
        }
    }
    Mesh::from_faces(positions, &grid_faces(n, m, true)).expect("torus")
}

/// Closed genus-two surface: connected sum of a torus and its mirror image,
/// glued along one removed triangle.
pub fn genus_two() -> Mesh {
    let (n, m, major, minor) = (8, 6, 2.0, 0.7);
    let torus = torus(n, m, major, minor);
    let count = torus.num_vertices();
    let faces: Vec<[usize; 3]> = torus.faces().collect();
    let removed = faces[0];

    let mut positions: Vec<[f64; 3]> = torus.positions().to_vec();
    let offset = 2.0 * (major + minor) + 0.3;
    positions.extend(torus.positions().iter().map(|p| [offset - p[0], p[1], p[2]]));

    let glue = |v: usize| -> usize {
        match removed.iter().position(|&r| r == v) {
            Some(s) => removed[s],
            None => v + count,
        }
    };
    let mut all: Vec<[usize; 3]> = faces[1..].to_vec();
    all.extend(faces[1..].iter().map(|t| [glue(t[0]), glue(t[1]), glue(t[2])]));

    // drop the now unreferenced copies of the glued vertices
    let mut remap = vec![usize::MAX; positions.len()];
    let mut kept = Vec::new();
    for t in &all {
        for &v in t {
            if remap[v] == usize::MAX {
                remap[v] = kept.len();
                kept.push(positions[v]);
            }
        }
    }
    let all: Vec<[usize; 3]> = all.iter().map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]]).collect();
    Mesh::from_faces(kept, &all).expect("genus two")
}
