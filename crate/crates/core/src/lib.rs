//! Hyperbolic circle packings on weighted triangulated closed surfaces.
//!
//! * [`mesh`]: weighted triangulations, built-in meshes, the per-corner weight condition.
//! * [`hypgeom`]: the single-triangle kernel (lengths, angles, area, angle Jacobian).
//! * [`laplacian`]: curvature, the discrete Laplacian and its p-th analogue.
//! * [`flow`]: Calabi and p-th Calabi flows in u-coordinates.
//! * [`verify`]: finite-difference oracles and bound-certification sweeps.
//! * [`cli`]: the `cpflow` command line.

pub mod cli;
pub mod flow;
pub mod hypgeom;
pub mod json;
pub mod laplacian;
pub mod mesh;
pub mod verify;

pub use flow::{run_flow, FlowConfig, FlowTrace, Termination};
pub use hypgeom::{angle_jacobian, edge_length, triangle_geometry, TrianglePacking};
pub use laplacian::{assemble, curvature, LaplacianAssembly, PackingMetric};
pub use mesh::{builtin_mesh, check_star_condition, WeightedTriangulation};
