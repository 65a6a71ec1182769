//! Halfedge triangle mesh.
//!
//! Faces are stored as cycles of three interior halfedges. Every mesh edge owns
//! exactly two halfedges; an edge on the boundary pairs its interior halfedge
//! with a boundary halfedge (`face == None`), and boundary halfedges are linked
//! into closed loops through `next`/`prev`.
//!
//! Per-edge quantities elsewhere in the crate (lengths, conformal structure
//! coefficients) are indexed by [`Mesh`] edge index, and per-corner quantities
//! follow the order returned by [`Mesh::face_vertices`]: slot `s` of a face
//! holds the corner at vertex `s`, and the edge opposite it is
//! `face_edges(f)[s]`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INVALID: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Halfedge {
    pub origin: usize,
    pub twin: usize,
    pub next: usize,
    pub prev: usize,
    pub face: Option<usize>,
    pub edge: usize,
}

impl Halfedge {
    pub fn is_boundary(&self) -> bool {
        self.face.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints with `vertices.0 < vertices.1`.
    pub vertices: (usize, usize),
    /// An interior halfedge of the edge.
    pub halfedge: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    pub euler_characteristic: i64,
    pub genus: i64,
    pub num_boundary_loops: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    positions: Vec<[f64; 3]>,
    halfedges: Vec<Halfedge>,
    vertex_halfedge: Vec<usize>,
    vertex_boundary: Vec<bool>,
    face_halfedge: Vec<usize>,
    edges: Vec<Edge>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

fn sorted(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    /// Builds a mesh from vertex positions and triangles.
    ///
    /// Faces are reoriented when needed so that all faces agree; the first face
    /// of every connected component keeps its input orientation.
    pub fn from_faces(positions: Vec<[f64; 3]>, faces: &[[usize; 3]]) -> Result<Mesh> {
        let nv = positions.len();
        for (f, tri) in faces.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidInput(format!("face {f} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[2] == tri[0] {
                return Err(Error::InvalidInput(format!("face {f} repeats a vertex")));
            }
        }

        // undirected edge -> incident faces
        let mut incidence: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (f, tri) in faces.iter().enumerate() {
            for s in 0..3 {
                let key = sorted(tri[s], tri[(s + 1) % 3]);
                let entry = incidence.entry(key).or_default();
                entry.push(f);
                if entry.len() > 2 {
                    return Err(Error::NonManifold(format!(
                        "edge ({}, {}) has more than two incident faces",
                        key.0, key.1
                    )));
                }
            }
        }

        let oriented = orient_faces(faces, &incidence)?;

        let mut halfedges: Vec<Halfedge> = Vec::with_capacity(faces.len() * 3 + 16);
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        let mut face_halfedge = Vec::with_capacity(faces.len());
        for (f, tri) in oriented.iter().enumerate() {
            let base = halfedges.len();
            face_halfedge.push(base);
            for s in 0..3 {
                let (a, b) = (tri[s], tri[(s + 1) % 3]);
                if directed.insert((a, b), base + s).is_some() {
                    return Err(Error::NonManifold(format!("directed edge ({a}, {b}) appears twice")));
                }
                halfedges.push(Halfedge {
                    origin: a,
                    twin: INVALID,
                    next: base + (s + 1) % 3,
                    prev: base + (s + 2) % 3,
                    face: Some(f),
                    edge: INVALID,
                });
            }
        }

        let mut edges = Vec::new();
        let mut edge_lookup = HashMap::new();
        let mut boundary_out: HashMap<usize, usize> = HashMap::new();
        let interior_count = halfedges.len();
        for h in 0..interior_count {
            if halfedges[h].twin != INVALID {
                continue;
            }
            let a = halfedges[h].origin;
            let b = halfedges[halfedges[h].next].origin;
            let e = edges.len();
            edges.push(Edge { vertices: sorted(a, b), halfedge: h });
            edge_lookup.insert(sorted(a, b), e);
            halfedges[h].edge = e;
            match directed.get(&(b, a)) {
                Some(&t) => {
                    halfedges[h].twin = t;
                    halfedges[t].twin = h;
                    halfedges[t].edge = e;
                }
                None => {
                    let t = halfedges.len();
                    halfedges.push(Halfedge {
                        origin: b,
                        twin: h,
                        next: INVALID,
                        prev: INVALID,
                        face: None,
                        edge: e,
                    });
                    halfedges[h].twin = t;
                    if boundary_out.insert(b, t).is_some() {
                        return Err(Error::NonManifold(format!(
                            "vertex {b} joins more than one boundary fan"
                        )));
                    }
                }
            }
        }

        // link boundary loops: the boundary halfedge b->a continues from a
        for h in interior_count..halfedges.len() {
            let dest = halfedges[halfedges[h].twin].origin;
            let next = *boundary_out
                .get(&dest)
                .ok_or_else(|| Error::NonManifold(format!("open boundary at vertex {dest}")))?;
            halfedges[h].next = next;
            halfedges[next].prev = h;
        }

        let mut vertex_halfedge = vec![INVALID; nv];
        for (h, he) in halfedges.iter().enumerate().take(interior_count) {
            if vertex_halfedge[he.origin] == INVALID {
                vertex_halfedge[he.origin] = h;
            }
        }
        let mut vertex_boundary = vec![false; nv];
        for (&v, &h) in &boundary_out {
            vertex_halfedge[v] = h;
            vertex_boundary[v] = true;
        }
        if let Some(v) = vertex_halfedge.iter().position(|&h| h == INVALID) {
            return Err(Error::InvalidInput(format!("vertex {v} is not referenced by any face")));
        }

        let mesh = Mesh {
            positions,
            halfedges,
            vertex_halfedge,
            vertex_boundary,
            face_halfedge,
            edges,
            edge_lookup,
        };

        // a vertex whose faces form several fans is pinched
        let mut valence = vec![0usize; nv];
        for tri in &oriented {
            for &v in tri {
                valence[v] += 1;
            }
        }
        for (v, &count) in valence.iter().enumerate() {
            if mesh.one_ring_faces(v).len() != count {
                return Err(Error::NonManifold(format!("vertex {v} has a disconnected one-ring")));
            }
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.face_halfedge.len()
    }

    pub fn num_halfedges(&self) -> usize {
        self.halfedges.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn position(&self, v: usize) -> [f64; 3] {
        self.positions[v]
    }

    pub fn halfedge(&self, h: usize) -> &Halfedge {
        &self.halfedges[h]
    }

    pub fn halfedges(&self) -> &[Halfedge] {
        &self.halfedges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_halfedge(&self, v: usize) -> usize {
        self.vertex_halfedge[v]
    }

    pub fn face_halfedge(&self, f: usize) -> usize {
        self.face_halfedge[f]
    }

    /// Destination vertex of a halfedge.
    pub fn target(&self, h: usize) -> usize {
        self.halfedges[self.halfedges[h].twin].origin
    }

    pub fn face_vertices(&self, f: usize) -> [usize; 3] {
        let h0 = self.face_halfedge[f];
        let h1 = self.halfedges[h0].next;
        let h2 = self.halfedges[h1].next;
        [self.halfedges[h0].origin, self.halfedges[h1].origin, self.halfedges[h2].origin]
    }

    /// Edges of a face; entry `s` is the edge opposite corner `s`.
    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        let h0 = self.face_halfedge[f];
        let h1 = self.halfedges[h0].next;
        let h2 = self.halfedges[h1].next;
        [self.halfedges[h1].edge, self.halfedges[h2].edge, self.halfedges[h0].edge]
    }

    pub fn faces(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        (0..self.num_faces()).map(|f| self.face_vertices(f))
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&sorted(a, b)).copied()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_boundary[v]
    }

    pub fn boundary_vertices(&self) -> &[bool] {
        &self.vertex_boundary
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        let h = self.edges[e].halfedge;
        self.halfedges[h].is_boundary() || self.halfedges[self.halfedges[h].twin].is_boundary()
    }

    /// Faces around `v` in rotational order. For a boundary vertex the list is
    /// an open fan running from one boundary edge to the other.
    pub fn one_ring_faces(&self, v: usize) -> Vec<usize> {
        let start = self.vertex_halfedge[v];
        let rotate = |h: usize| self.halfedges[self.halfedges[h].prev].twin;
        let mut faces = Vec::new();
        if self.halfedges[start].is_boundary() {
            let mut h = rotate(start);
            while let Some(f) = self.halfedges[h].face {
                faces.push(f);
                h = rotate(h);
                if faces.len() > self.num_faces() {
                    break;
                }
            }
        } else {
            let mut h = start;
            loop {
                faces.push(self.halfedges[h].face.expect("interior halfedge"));
                h = rotate(h);
                if h == start || faces.len() > self.num_faces() {
                    break;
                }
            }
        }
        faces
    }

    /// Neighbouring vertices of `v`, in the same rotational order as `one_ring_faces`.
    pub fn one_ring_vertices(&self, v: usize) -> Vec<usize> {
        let start = self.vertex_halfedge[v];
        let rotate = |h: usize| self.halfedges[self.halfedges[h].prev].twin;
        let mut out = vec![self.target(start)];
        let mut h = rotate(start);
        while h != start && out.len() <= self.num_vertices() {
            out.push(self.target(h));
            h = rotate(h);
        }
        out
    }

    /// Boundary loops as vertex sequences.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.halfedges.len()];
        let mut loops = Vec::new();
        for h0 in 0..self.halfedges.len() {
            if !self.halfedges[h0].is_boundary() || seen[h0] {
                continue;
            }
            let mut cycle = Vec::new();
            let mut h = h0;
            while !seen[h] {
                seen[h] = true;
                cycle.push(self.halfedges[h].origin);
                h = self.halfedges[h].next;
            }
            loops.push(cycle);
        }
        loops
    }

    pub fn topology(&self) -> TopologyReport {
        let (v, e, f) = (self.num_vertices(), self.num_edges(), self.num_faces());
        let chi = v as i64 - e as i64 + f as i64;
        let loops = self.boundary_loops().len();
        TopologyReport {
            num_vertices: v,
            num_edges: e,
            num_faces: f,
            euler_characteristic: chi,
            genus: (2 - loops as i64 - chi) / 2,
            num_boundary_loops: loops,
        }
    }

    /// Checks the structural invariants of the halfedge records.
    pub fn validate(&self) -> Result<()> {
        let broken = |msg: String| Err(Error::NonManifold(msg));
        for (h, he) in self.halfedges.iter().enumerate() {
            if self.halfedges[he.twin].twin != h {
                return broken(format!("halfedge {h} twin mismatch"));
            }
            if self.halfedges[he.next].prev != h || self.halfedges[he.prev].next != h {
                return broken(format!("halfedge {h} next/prev mismatch"));
            }
            if he.face.is_some() {
                let n3 = self.halfedges[self.halfedges[he.next].next].next;
                if n3 != h {
                    return broken(format!("face cycle at halfedge {h} is not a triangle"));
                }
            }
            if self.halfedges[he.twin].face.is_none() && he.face.is_none() {
                return broken(format!("edge of halfedge {h} has no face"));
            }
        }
        for f in 0..self.num_faces() {
            let [a, b, c] = self.face_vertices(f);
            if a == b || b == c || c == a {
                return broken(format!("face {f} repeats a vertex"));
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let h = edge.halfedge;
            let got = sorted(self.halfedges[h].origin, self.target(h));
            if got != edge.vertices || self.halfedges[h].edge != e {
                return broken(format!("edge {e} endpoint mismatch"));
            }
        }
        Ok(())
    }

    /// Euclidean edge lengths of the embedding.
    pub fn embedded_edge_lengths(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|edge| {
                let (p, q) = (self.positions[edge.vertices.0], self.positions[edge.vertices.1]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
            })
            .collect()
    }

    /// The two corners facing edge `e`, as `(face, slot)` pairs; `None` on a boundary side.
    pub fn edge_opposite_corners(&self, e: usize) -> [Option<(usize, usize)>; 2] {
        let h = self.edges[e].halfedge;
        let side = |h: usize| {
            let f = self.halfedges[h].face?;
            let opposite = self.halfedges[self.halfedges[h].prev].origin;
            let slot = self.face_vertices(f).iter().position(|&v| v == opposite)?;
            Some((f, slot))
        };
        [side(h), side(self.halfedges[h].twin)]
    }

    /// Replaces the diagonal of the quad formed by the two faces of `e`.
    ///
    /// Returns `false` (and leaves the mesh untouched) for boundary edges and
    /// when the new diagonal would duplicate an existing edge.
    pub fn flip_edge(&mut self, e: usize) -> bool {
        if self.is_boundary_edge(e) {
            return false;
        }
        let h = self.edges[e].halfedge;
        let t = self.halfedges[h].twin;
        let (hn, hp) = (self.halfedges[h].next, self.halfedges[h].prev);
        let (tn, tp) = (self.halfedges[t].next, self.halfedges[t].prev);
        let (a, b) = (self.halfedges[h].origin, self.halfedges[t].origin);
        let c = self.halfedges[hp].origin;
        let d = self.halfedges[tp].origin;
        if c == d || self.edge_between(c, d).is_some() {
            return false;
        }
        let f0 = self.halfedges[h].face.unwrap();
        let f1 = self.halfedges[t].face.unwrap();

        // f0: c -> d -> b, f1: d -> c -> a
        self.halfedges[h].origin = c;
        self.halfedges[t].origin = d;
        let link = |hes: &mut Vec<Halfedge>, cycle: [usize; 3], face: usize| {
            for s in 0..3 {
                let cur = cycle[s];
                hes[cur].next = cycle[(s + 1) % 3];
                hes[cur].prev = cycle[(s + 2) % 3];
                hes[cur].face = Some(face);
            }
        };
        link(&mut self.halfedges, [h, tp, hn], f0);
        link(&mut self.halfedges, [t, hp, tn], f1);
        self.face_halfedge[f0] = h;
        self.face_halfedge[f1] = t;
        if self.vertex_halfedge[a] == h {
            self.vertex_halfedge[a] = tn;
        }
        if self.vertex_halfedge[b] == t {
            self.vertex_halfedge[b] = hn;
        }
        self.edge_lookup.remove(&sorted(a, b));
        self.edge_lookup.insert(sorted(c, d), e);
        self.edges[e].vertices = sorted(c, d);
        true
    }
}

/// Flips faces so that shared edges are traversed in opposite directions.
fn orient_faces(
    faces: &[[usize; 3]],
    incidence: &HashMap<(usize, usize), Vec<usize>>,
) -> Result<Vec<[usize; 3]>> {
    let has_directed = |tri: &[usize; 3], a: usize, b: usize| {
        (0..3).any(|s| tri[s] == a && tri[(s + 1) % 3] == b)
    };
    let mut flipped: Vec<Option<bool>> = vec![None; faces.len()];
    let mut out: Vec<[usize; 3]> = faces.to_vec();
    for seed in 0..faces.len() {
        if flipped[seed].is_some() {
            continue;
        }
        flipped[seed] = Some(false);
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            let tri = out[f];
            for s in 0..3 {
                let (a, b) = (tri[s], tri[(s + 1) % 3]);
                for &g in &incidence[&sorted(a, b)] {
                    if g == f {
                        continue;
                    }
                    // consistent neighbours traverse the shared edge as b -> a
                    let needs_flip = has_directed(&faces[g], a, b);
                    match flipped[g] {
                        None => {
                            flipped[g] = Some(needs_flip);
                            if needs_flip {
                                out[g] = [faces[g][0], faces[g][2], faces[g][1]];
                            }
                            queue.push_back(g);
                        }
                        Some(_) => {
                            if has_directed(&out[g], a, b) {
                                return Err(Error::NonOrientable);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
