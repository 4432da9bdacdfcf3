//! Weighted triangulations of closed surfaces.
//!
//! Faces reference their edges by id, so non-simplicial triangulations (a
//! face whose corners repeat a vertex, loop edges, multi-edges) are
//! represented directly. Edge `e_t` of a face is the edge opposite corner `t`
//! and joins corners `t + 1` and `t + 2` (indices mod 3).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("mesh has no vertices")]
    NoVertices,
    #[error("edge ids are not dense from 0: id {id} at position {position}")]
    EdgeIdNotDense { id: usize, position: usize },
    #[error("edge {edge} references vertex {vertex} but the mesh has {count} vertices")]
    EdgeVertexOutOfRange {
        edge: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge {edge} weight {phi} outside [0, pi)")]
    WeightOutOfRange { edge: usize, phi: f64 },
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    FaceVertexOutOfRange {
        face: usize,
        vertex: usize,
        count: usize,
    },
    #[error("face {face} references edge {edge} but the mesh has {count} edges")]
    FaceEdgeOutOfRange {
        face: usize,
        edge: usize,
        count: usize,
    },
    #[error("face {face} corner {corner}: opposite edge {edge} does not join the other two corners")]
    CornerEdgeMismatch {
        face: usize,
        corner: usize,
        edge: usize,
    },
    #[error("edge not in exactly two faces: edge {edge} is used by {count}")]
    OpenEdge { edge: usize, count: usize },
    #[error("vertex {vertex} does not appear in any face")]
    IsolatedVertex { vertex: usize },
    #[error("unknown builtin mesh {0:?}")]
    UnknownBuiltin(String),
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Intersection angle in radians, in `[0, pi)`.
    pub phi: f64,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.a == self.b
    }

    pub fn other(&self, v: usize) -> usize {
        if self.a == v {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub vertices: [usize; 3],
    /// `edges[t]` is opposite `vertices[t]`.
    pub edges: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTriangulation {
    vertex_count: usize,
    edges: Vec<Edge>,
    faces: Vec<Face>,
}

/// On-disk layout: `{"vertices": N, "edges": [[id,a,b,phi], ...], "faces": [[v0,v1,v2,e0,e1,e2], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
struct MeshFile {
    vertices: usize,
    edges: Vec<(usize, usize, usize, f64)>,
    faces: Vec<[usize; 6]>,
}

impl WeightedTriangulation {
    /// Builds and validates a triangulation. `edges[id]` is the edge with that id.
    pub fn new(vertex_count: usize, edges: Vec<Edge>, faces: Vec<Face>) -> Result<Self, MeshError> {
        let mesh = Self {
            vertex_count,
            edges,
            faces,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertex_count;
        if n == 0 {
            return Err(MeshError::NoVertices);
        }
        for (id, e) in self.edges.iter().enumerate() {
            for v in [e.a, e.b] {
                if v >= n {
                    return Err(MeshError::EdgeVertexOutOfRange {
                        edge: id,
                        vertex: v,
                        count: n,
                    });
                }
            }
            if !(e.phi >= 0.0 && e.phi < PI) {
                return Err(MeshError::WeightOutOfRange {
                    edge: id,
                    phi: e.phi,
                });
            }
        }
        let mut uses = vec![0usize; self.edges.len()];
        let mut seen = vec![false; n];
        for (fid, f) in self.faces.iter().enumerate() {
            for &v in &f.vertices {
                if v >= n {
                    return Err(MeshError::FaceVertexOutOfRange {
                        face: fid,
                        vertex: v,
                        count: n,
                    });
                }
                seen[v] = true;
            }
            for &e in &f.edges {
                if e >= self.edges.len() {
                    return Err(MeshError::FaceEdgeOutOfRange {
                        face: fid,
                        edge: e,
                        count: self.edges.len(),
                    });
                }
                uses[e] += 1;
            }
            for t in 0..3 {
                let e = &self.edges[f.edges[t]];
                let (p, q) = (f.vertices[(t + 1) % 3], f.vertices[(t + 2) % 3]);
                if !((e.a == p && e.b == q) || (e.a == q && e.b == p)) {
                    return Err(MeshError::CornerEdgeMismatch {
                        face: fid,
                        corner: t,
                        edge: f.edges[t],
                    });
                }
            }
        }
        if let Some((edge, &count)) = uses.iter().enumerate().find(|(_, &c)| c != 2) {
            return Err(MeshError::OpenEdge { edge, count });
        }
        if let Some(vertex) = seen.iter().position(|s| !s) {
            return Err(MeshError::IsolatedVertex { vertex });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let file: MeshFile =
            serde_json::from_str(text).map_err(|e| MeshError::Parse(e.to_string()))?;
        let mut edges = vec![None; file.edges.len()];
        for (position, &(id, a, b, phi)) in file.edges.iter().enumerate() {
            match edges.get_mut(id) {
                Some(slot @ None) => *slot = Some(Edge { a, b, phi }),
                _ => return Err(MeshError::EdgeIdNotDense { id, position }),
            }
        }
        let edges = edges.into_iter().map(Option::unwrap).collect();
        let faces = file
            .faces
            .iter()
            .map(|f| Face {
                vertices: [f[0], f[1], f[2]],
                edges: [f[3], f[4], f[5]],
            })
            .collect();
        Self::new(file.vertices, edges, faces)
    }

    /// Serializes in the mesh-file layout; weights survive a save/load cycle bit for bit.
    pub fn to_json(&self) -> String {
        let file = MeshFile {
            vertices: self.vertex_count,
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(id, e)| (id, e.a, e.b, e.phi))
                .collect(),
            faces: self
                .faces
                .iter()
                .map(|f| {
                    [
                        f.vertices[0],
                        f.vertices[1],
                        f.vertices[2],
                        f.edges[0],
                        f.edges[1],
                        f.edges[2],
                    ]
                })
                .collect(),
        };
        json::to_string(&file)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.phi).collect()
    }

    /// Same combinatorics with new per-edge weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, MeshError> {
        if weights.len() != self.edges.len() {
            return Err(MeshError::WeightCount {
                expected: self.edges.len(),
                got: weights.len(),
            });
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &phi)| Edge { phi, ..*e })
            .collect();
        Self::new(self.vertex_count, edges, self.faces.clone())
    }

    /// Weights of a face in corner order: `[phi(e0), phi(e1), phi(e2)]`.
    pub fn face_weights(&self, face: usize) -> [f64; 3] {
        let f = &self.faces[face];
        f.edges.map(|e| self.edges[e].phi)
    }

    /// Number of face corners sitting at each vertex.
    pub fn corner_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vertex_count];
        for f in &self.faces {
            for &v in &f.vertices {
                counts[v] += 1;
            }
        }
        counts
    }
}

/// `gamma` for corner `t` of a face with weights `phi` (indexed by opposite corner):
/// `cos phi_t + cos phi_{t+1} cos phi_{t+2}`.
pub fn corner_gamma(phi: [f64; 3], t: usize) -> f64 {
    phi[t].cos() + phi[(t + 1) % 3].cos() * phi[(t + 2) % 3].cos()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CornerGamma {
    pub face: usize,
    pub corner: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarReport {
    pub all_nonnegative: bool,
    pub gammas: Vec<CornerGamma>,
    pub violations: Vec<CornerGamma>,
}

/// Evaluates the per-corner weight condition on every face.
pub fn check_star_condition(mesh: &WeightedTriangulation) -> StarReport {
    let mut gammas = Vec::with_capacity(3 * mesh.faces.len());
    for face in 0..mesh.faces.len() {
        let phi = mesh.face_weights(face);
        for corner in 0..3 {
            gammas.push(CornerGamma {
                face,
                corner,
                gamma: corner_gamma(phi, corner),
            });
        }
    }
    let violations: Vec<_> = gammas.iter().filter(|g| g.gamma < 0.0).cloned().collect();
    StarReport {
        all_nonnegative: violations.is_empty(),
        gammas,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Incidence {
    pub edge: usize,
    pub faces: [usize; 2],
    pub neighbor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VertexAdjacency {
    /// One entry per edge endpoint at the vertex; a loop appears twice.
    pub incidences: Vec<Vec<Incidence>>,
    pub degrees: Vec<usize>,
    pub max_degree: usize,
}

pub fn vertex_adjacency(mesh: &WeightedTriangulation) -> VertexAdjacency {
    let mut edge_faces: Vec<Vec<usize>> = vec![Vec::with_capacity(2); mesh.edges.len()];
    for (fid, f) in mesh.faces.iter().enumerate() {
        for &e in &f.edges {
            edge_faces[e].push(fid);
        }
    }
    let mut incidences = vec![Vec::new(); mesh.vertex_count];
    for (id, e) in mesh.edges.iter().enumerate() {
        let faces = [edge_faces[id][0], edge_faces[id][1]];
        incidences[e.a].push(Incidence {
            edge: id,
            faces,
            neighbor: e.b,
        });
        incidences[e.b].push(Incidence {
            edge: id,
            faces,
            neighbor: e.a,
        });
    }
    let degrees: Vec<usize> = incidences.iter().map(Vec::len).collect();
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    VertexAdjacency {
        incidences,
        degrees,
        max_degree,
    }
}

/// Built-in meshes: `"tetra"` and `"genus2_min"`, all edges carrying weight `phi`.
pub fn builtin_mesh(name: &str, phi: f64) -> Result<WeightedTriangulation, MeshError> {
    match name {
        "tetra" => tetrahedron(phi),
        "genus2_min" => genus2_minimal(phi),
        other => Err(MeshError::UnknownBuiltin(other.to_string())),
    }
}

pub const BUILTIN_NAMES: [&str; 2] = ["tetra", "genus2_min"];

fn tetrahedron(phi: f64) -> Result<WeightedTriangulation, MeshError> {
    let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let edges: Vec<Edge> = pairs.iter().map(|&(a, b)| Edge { a, b, phi }).collect();
    let edge_id = |p: usize, q: usize| {
        pairs
            .iter()
            .position(|&(a, b)| (a, b) == (p.min(q), p.max(q)))
            .unwrap()
    };
    let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]
        .iter()
        .map(|&v| Face {
            vertices: v,
            edges: [edge_id(v[1], v[2]), edge_id(v[2], v[0]), edge_id(v[0], v[1])],
        })
        .collect();
    WeightedTriangulation::new(4, edges, faces)
}

/// Octagon with one interior vertex; all eight octagon corners are a single
/// rim vertex and the sides are glued as `a b a' b' c d c' d'`.
fn genus2_minimal(phi: f64) -> Result<WeightedTriangulation, MeshError> {
    const CENTER: usize = 0;
    const RIM: usize = 1;
    let mut edges: Vec<Edge> = (0..8)
        .map(|_| Edge {
            a: CENTER,
            b: RIM,
            phi,
        })
        .collect();
    edges.extend((0..4).map(|_| Edge { a: RIM, b: RIM, phi }));
    let side_edge = [8, 9, 8, 9, 10, 11, 10, 11];
    let faces = (0..8)
        .map(|k| Face {
            vertices: [CENTER, RIM, RIM],
            edges: [side_edge[k], (k + 1) % 8, k],
        })
        .collect();
    WeightedTriangulation::new(2, edges, faces)
}
