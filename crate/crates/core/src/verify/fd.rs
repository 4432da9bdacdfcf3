//! Central finite differences in u-coordinates.
//!
//! The five-point stencil `(-f(u+2s) + 8f(u+s) - 8f(u-s) + f(u-2s)) / 12s` is
//! used. Near `u = 0` (large radii) the map `u -> r` varies on the scale `|u|`,
//! so the step is `s = min(h, |u| / 8)`; shrinking it further would let
//! rounding in the O(1) angles swamp the small derivatives there.

use nalgebra::DMatrix;

use crate::hypgeom::{self, TrianglePacking, MAX_RADIUS};
use crate::laplacian::{r_from_u, u_from_r, PackingMetric};
use crate::mesh::WeightedTriangulation;

use super::VerifyError;

pub const MIN_STEP: f64 = 1e-7;
pub const MAX_STEP: f64 = 1e-3;

fn check_step(h: f64) -> Result<(), VerifyError> {
    if !(MIN_STEP..=MAX_STEP).contains(&h) {
        return Err(VerifyError::Precondition(format!(
            "finite-difference step {h} outside [{MIN_STEP}, {MAX_STEP}]"
        )));
    }
    Ok(())
}

/// Derivative of `f` at `u` for every output component, or `None` if a
/// stencil point leaves the admissible range or `f` fails there.
fn stencil<F>(u: f64, h: f64, mut f: F) -> Option<Vec<f64>>
where
    F: FnMut(f64) -> Option<Vec<f64>>,
{
    let s = h.min(u.abs() / 8.0);
    let mut at = |k: f64| -> Option<Vec<f64>> {
        let r = r_from_u(u + k * s);
        (r > 0.0 && r <= MAX_RADIUS).then_some(())?;
        f(r)
    };
    let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
    Some(
        (0..p1.len())
            .map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * s))
            .collect(),
    )
}

/// Central-difference estimate of `d theta_a / d u_b` for one triangle.
pub fn fd_angle_jacobian(tp: &TrianglePacking, h: f64) -> Result<[[f64; 3]; 3], VerifyError> {
    check_step(h)?;
    tp.validate()?;
    let try_step = |h: f64| -> Option<[[f64; 3]; 3]> {
        let mut out = [[0.0; 3]; 3];
        for b in 0..3 {
            let d = stencil(u_from_r(tp.radii[b]), h, |r| {
                let mut moved = *tp;
                moved.radii[b] = r;
                hypgeom::triangle_angles(&moved).ok().map(|a| a.to_vec())
            })?;
            for a in 0..3 {
                out[a][b] = d[a];
            }
        }
        Some(out)
    };
    try_step(h).or_else(|| try_step(h / 10.0)).ok_or_else(|| {
        VerifyError::Precondition(format!(
            "perturbed triangle left the admissible set at step {h} and {}",
            h / 10.0
        ))
    })
}

/// Angle sums at every vertex; `K = 2 pi - sums`.
fn angle_sums(mesh: &WeightedTriangulation, radii: &[f64]) -> Option<Vec<f64>> {
    let mut sums = vec![0.0; mesh.vertex_count()];
    for (face, f) in mesh.faces().iter().enumerate() {
        let tp = TrianglePacking::new(f.vertices.map(|v| radii[v]), mesh.face_weights(face));
        let angles = hypgeom::triangle_angles(&tp).ok()?;
        for t in 0..3 {
            sums[f.vertices[t]] += angles[t];
        }
    }
    Some(sums)
}

/// Central-difference estimate of `dK_i / du_j`. The difference is taken on
/// the angle sums, which avoids cancellation against the constant `2 pi`.
pub fn fd_curvature_jacobian(
    mesh: &WeightedTriangulation,
    r: &PackingMetric,
    h: f64,
) -> Result<DMatrix<f64>, VerifyError> {
    check_step(h)?;
    let n = mesh.vertex_count();
    if r.len() != n {
        return Err(VerifyError::Precondition(format!(
            "metric has {} radii for {n} vertices",
            r.len()
        )));
    }
    let try_step = |h: f64| -> Option<DMatrix<f64>> {
        let mut out = DMatrix::zeros(n, n);
        let mut radii = r.radii().to_vec();
        for j in 0..n {
            let keep = radii[j];
            let d = stencil(u_from_r(keep), h, |rj| {
                radii[j] = rj;
                angle_sums(mesh, &radii)
            });
            radii[j] = keep;
            let d = d?;
            for i in 0..n {
                out[(i, j)] = -d[i];
            }
        }
        Some(out)
    };
    try_step(h).or_else(|| try_step(h / 10.0)).ok_or_else(|| {
        VerifyError::Precondition(format!(
            "perturbed metric left the admissible set at step {h} and {}",
            h / 10.0
        ))
    })
}
