//! Planar layout of a flat metric on a topological disk.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{face_angles, vertex_curvatures, Background, ConformalState};
use crate::mesh::Mesh;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarEmbedding {
    pub uv: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IsometryAudit {
    /// `max_e | |uv_i − uv_j| − l_e | / l_e`.
    pub max_rel_deviation: f64,
    pub min_signed_area: f64,
}

/// Lays the faces out breadth-first from face 0, placing each new vertex at the
/// intersection of two circles around an already placed edge.
///
/// `flatness_bound` caps the largest interior angle defect of `lengths`.
pub fn embed_disk(mesh: &Mesh, lengths: &[f64], flatness_bound: f64) -> Result<PlanarEmbedding> {
    let topo = mesh.topology();
    if topo.euler_characteristic != 1 || topo.num_boundary_loops != 1 {
        return Err(Error::NotADisk(format!(
            "χ = {}, {} boundary loops",
            topo.euler_characteristic, topo.num_boundary_loops
        )));
    }
    let angles = face_angles(mesh, lengths, Background::E2)?;
    let state = ConformalState { u: Vec::new(), lengths: lengths.to_vec(), angles };
    let k = vertex_curvatures(mesh, &state);
    let max = (0..mesh.num_vertices())
        .filter(|&v| !mesh.is_boundary_vertex(v))
        .map(|v| k[v].abs())
        .fold(0.0, f64::max);
    if max > flatness_bound {
        return Err(Error::NotFlat { max, bound: flatness_bound });
    }

    let mut uv: Vec<Option<[f64; 2]>> = vec![None; mesh.num_vertices()];
    let seed = mesh.face_vertices(0);
    let seed_l = mesh.face_edges(0).map(|e| lengths[e]);
    uv[seed[0]] = Some([0.0, 0.0]);
    uv[seed[1]] = Some([seed_l[2], 0.0]);
    uv[seed[2]] = Some(apex([0.0, 0.0], [seed_l[2], 0.0], seed_l[1], seed_l[0]).ok_or(Error::PlacementAmbiguity(seed[2]))?);

    let mut visited = vec![false; mesh.num_faces()];
    visited[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(f) = queue.pop_front() {
        let first = mesh.face_halfedge(f);
        let mut h = first;
        loop {
            let twin = mesh.halfedge(h).twin;
            if let Some(g) = mesh.halfedge(twin).face {
                if !visited[g] {
                    visited[g] = true;
                    place_third(mesh, lengths, g, &mut uv)?;
                    queue.push_back(g);
                }
            }
            h = mesh.halfedge(h).next;
            if h == first {
                break;
            }
        }
    }
    let uv = uv
        .into_iter()
        .enumerate()
        .map(|(v, p)| p.ok_or(Error::PlacementAmbiguity(v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanarEmbedding { uv })
}

/// Point left of `p → q` at distances `lp` from `p` and `lq` from `q`.
fn apex(p: [f64; 2], q: [f64; 2], lp: f64, lq: f64) -> Option<[f64; 2]> {
    let e = [q[0] - p[0], q[1] - p[1]];
    let d = e[0].hypot(e[1]);
    let x = (lp * lp - lq * lq + d * d) / (2.0 * d);
    let y_sq = lp * lp - x * x;
    if !(y_sq > 0.0) || !(d > 0.0) {
        return None;
    }
    let y = y_sq.sqrt();
    let (ex, ey) = (e[0] / d, e[1] / d);
    Some([p[0] + x * ex - y * ey, p[1] + x * ey + y * ex])
}

fn place_third(mesh: &Mesh, lengths: &[f64], f: usize, uv: &mut [Option<[f64; 2]>]) -> Result<()> {
    let vs = mesh.face_vertices(f);
    let Some(s) = (0..3).find(|&s| uv[vs[s]].is_none()) else { return Ok(()) };
    let (p, q) = (vs[(s + 1) % 3], vs[(s + 2) % 3]);
    let (Some(pp), Some(qq)) = (uv[p], uv[q]) else { return Err(Error::PlacementAmbiguity(vs[s])) };
    let edges = mesh.face_edges(f);
    let point = apex(pp, qq, lengths[edges[(s + 2) % 3]], lengths[edges[(s + 1) % 3]])
        .ok_or(Error::PlacementAmbiguity(vs[s]))?;
    uv[vs[s]] = Some(point);
    Ok(())
}

impl PlanarEmbedding {
    pub fn signed_area(&self, mesh: &Mesh, f: usize) -> f64 {
        let [a, b, c] = mesh.face_vertices(f).map(|v| self.uv[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn audit(&self, mesh: &Mesh, lengths: &[f64]) -> IsometryAudit {
        let max_rel_deviation = mesh
            .edges()
            .iter()
            .zip(lengths)
            .map(|(edge, &l)| {
                let (a, b) = (self.uv[edge.vertices.0], self.uv[edge.vertices.1]);
                ((a[0] - b[0]).hypot(a[1] - b[1]) - l).abs() / l
            })
            .fold(0.0, f64::max);
        let min_signed_area = (0..mesh.num_faces()).map(|f| self.signed_area(mesh, f)).fold(f64::INFINITY, f64::min);
        IsometryAudit { max_rel_deviation, min_signed_area }
    }

    /// Angle sums around interior vertices in the embedding, minus 2π; a sanity
    /// check that the layout closes up.
    pub fn max_interior_gap(&self, mesh: &Mesh) -> f64 {
        let mut sum = vec![0.0; mesh.num_vertices()];
        for f in 0..mesh.num_faces() {
            let vs = mesh.face_vertices(f);
            for s in 0..3 {
                let [o, a, b] = [vs[s], vs[(s + 1) % 3], vs[(s + 2) % 3]].map(|v| self.uv[v]);
                let u = [a[0] - o[0], a[1] - o[1]];
                let w = [b[0] - o[0], b[1] - o[1]];
                sum[vs[s]] += (u[0] * w[1] - u[1] * w[0]).atan2(u[0] * w[0] + u[1] * w[1]);
            }
        }
        (0..mesh.num_vertices())
            .filter(|&v| !mesh.is_boundary_vertex(v))
            .map(|v| (sum[v] - TAU).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn single_triangle_layout() {
        let mesh = shapes::single_triangle([3.0, 4.0, 5.0]);
        let lengths = mesh.embedded_edge_lengths();
        let emb = embed_disk(&mesh, &lengths, 1e-4).unwrap();
        assert_eq!(emb.uv[0], [0.0, 0.0]);
        assert_eq!(emb.uv[1], [5.0, 0.0]);
        assert!(emb.uv[2][1] > 0.0);
        assert!(emb.audit(&mesh, &lengths).max_rel_deviation < 1e-15);
    }

    #[test]
    fn flat_grid_is_recovered() {
        let mesh = shapes::grid_disk(9);
        let lengths = mesh.embedded_edge_lengths();
        let emb = embed_disk(&mesh, &lengths, 1e-4).unwrap();
        let audit = emb.audit(&mesh, &lengths);
        assert!(audit.max_rel_deviation <= 1e-10);
        assert!(audit.min_signed_area > 0.0);
        assert!(emb.max_interior_gap(&mesh) < 1e-10);
        // congruent: all pairwise distances to vertex 0 agree with the input
        for v in 0..mesh.num_vertices() {
            let p = mesh.position(v);
            let q = emb.uv[v];
            assert!((p[0].hypot(p[1]) - q[0].hypot(q[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn non_disk_is_rejected() {
        let mesh = shapes::tetrahedron();
        let lengths = mesh.embedded_edge_lengths();
        assert!(matches!(embed_disk(&mesh, &lengths, 1e-4), Err(Error::NotADisk(_))));
    }

    #[test]
    fn curved_metric_is_rejected() {
        let mesh = shapes::perturbed_disk(5, 0.2, 0.5, 1);
        let lengths = mesh.embedded_edge_lengths();
        assert!(matches!(embed_disk(&mesh, &lengths, 1e-4), Err(Error::NotFlat { .. })));
    }
}
