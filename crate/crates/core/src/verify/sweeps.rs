//! Identity, Jacobian and positive-definiteness suites.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::hypgeom::{self, TrianglePacking};
use crate::laplacian::{assemble, spd_check, LaplacianAssembly, PackingMetric};
use crate::mesh::{builtin_mesh, WeightedTriangulation, BUILTIN_NAMES};

use super::fd::{fd_angle_jacobian, fd_curvature_jacobian};
use super::sampling::{log_uniform, random_triangle, sample_rng, star_mesh_weights};
use super::{run_indexed, SweepReport, Tally};

pub const GLICKENSTEIN_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const SQRT_DELTA_TOL: f64 = 1e-9;
pub const ANGLE_FD_TOL: f64 = 1e-6;
pub const CURVATURE_FD_REL: f64 = 1e-6;
pub const CURVATURE_FD_ABS: f64 = 1e-8;
pub const FD_SYMMETRY_TOL: f64 = 1e-6;
pub const AREA_ROUTE_TOL: f64 = 1e-9;
pub const ROW_SUM_TOL: f64 = 1e-10;

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Per-triangle identities on radii log-uniform in `[1e-3, 1e2]`.
pub fn identities_suite(samples: u64, seed: u64) -> SweepReport {
    let started = Instant::now();
    let tally = run_indexed(samples, |i| {
        let mut t = Tally::default();
        let tp = random_triangle(&mut sample_rng(seed, i), 1e-3, 1e2);
        if let Err(e) = identities_sample(&tp, i, &mut t) {
            t.violate(i, &format!("kernel_error: {e}"), f64::NAN, 0.0);
        }
        t
    });
    tally.into_report("identities", seed, samples, started)
}

fn identities_sample(tp: &TrianglePacking, i: u64, t: &mut Tally) -> Result<(), hypgeom::HypError> {
    let g = hypgeom::glickenstein_residual(tp)?;
    for r in g.relative {
        t.at_most(i, "glickenstein_relative", r, GLICKENSTEIN_TOL);
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let (ab, ba) = hypgeom::off_diagonal_pair(tp, a, b)?;
        t.at_most(i, "symmetry_relative", rel_diff(ab, ba), SYMMETRY_TOL);
    }
    let jac = hypgeom::angle_jacobian(tp)?;
    let alt = hypgeom::angle_jacobian_sqrt_delta(tp)?;
    for a in 0..3 {
        for b in 0..3 {
            t.at_most(i, "sqrt_delta_relative", rel_diff(jac.j[a][b], alt[a][b]), SQRT_DELTA_TOL);
            if a != b {
                t.at_least(i, "off_diagonal", jac.j[a][b], 0.0);
            }
        }
    }
    let geo = hypgeom::triangle_geometry(tp)?;
    t.at_least(i, "area", geo.area, f64::MIN_POSITIVE);
    let deficit = PI - geo.angles.iter().sum::<f64>();
    t.at_most(i, "area_deficit_gap", (geo.area - deficit).abs(), 1e-12);
    for a in geo.angles {
        t.strictly_between(i, "angle", a, 0.0, PI);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianSpec {
    pub triangles: u64,
    pub metrics_per_mesh: u64,
    pub h: f64,
}

impl Default for JacobianSpec {
    fn default() -> Self {
        Self {
            triangles: 1000,
            metrics_per_mesh: 100,
            h: 1e-5,
        }
    }
}

/// Random weights satisfying the weight condition and log-uniform radii for a mesh.
pub fn random_mesh_metric(
    mesh: &WeightedTriangulation,
    seed: u64,
    index: u64,
    lo: f64,
    hi: f64,
) -> (WeightedTriangulation, PackingMetric) {
    let mut rng = sample_rng(seed, index);
    let w = star_mesh_weights(&mut rng, mesh);
    let m = mesh.with_weights(&w).expect("sampled weights lie in [0, pi)");
    let radii = (0..mesh.vertex_count())
        .map(|_| log_uniform(&mut rng, lo, hi))
        .collect();
    (m, PackingMetric::new(radii).expect("sampled radii are in range"))
}

/// Records the consistency checks every assembly carries: the two routes to
/// `A`, `A_i = sum_e B_e (cosh l_e - 1)` from the per-edge arrays, and the row sums of `L`.
pub fn record_assembly_identities(asm: &LaplacianAssembly, i: u64, t: &mut Tally) {
    let mut edge_sum = vec![0.0; asm.vertex_count()];
    for (e, &(a, b)) in asm.endpoints.iter().enumerate() {
        let term = asm.b[e] * (asm.cosh_l[e] - 1.0);
        edge_sum[a] += term;
        edge_sum[b] += term;
    }
    for v in 0..asm.vertex_count() {
        t.at_most(
            i,
            "cosh_identity_residual",
            (asm.a_direct[v] - edge_sum[v]).abs() / (1.0 + asm.a_direct[v].abs()),
            AREA_ROUTE_TOL,
        );
    }
    for v in 0..asm.vertex_count() {
        let a = asm.a[v];
        t.at_most(
            i,
            "area_route_residual",
            (a - asm.a_direct[v]).abs() / (1.0 + a.abs()),
            AREA_ROUTE_TOL,
        );
        let row: f64 = (0..asm.vertex_count()).map(|j| asm.l[(v, j)]).sum();
        t.at_most(i, "row_sum_relative", (row - a).abs() / a.abs(), ROW_SUM_TOL);
    }
}

fn shares_face(mesh: &WeightedTriangulation, i: usize, j: usize) -> bool {
    mesh.faces()
        .iter()
        .any(|f| f.vertices.contains(&i) && f.vertices.contains(&j))
}

/// Analytic versus finite-difference derivatives, per triangle and per mesh.
pub fn jacobians_suite(spec: &JacobianSpec, seed: u64) -> SweepReport {
    let started = Instant::now();
    let mut tally = run_indexed(spec.triangles, |i| {
        let mut t = Tally::default();
        let tp = random_triangle(&mut sample_rng(seed, i), 0.1, 10.0);
        let pair = hypgeom::angle_jacobian(&tp)
            .map_err(|e| e.to_string())
            .and_then(|j| Ok((j, fd_angle_jacobian(&tp, spec.h).map_err(|e| e.to_string())?)));
        match pair {
            Ok((jac, fd)) => {
                for a in 0..3 {
                    let scale = jac.j[a].iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    let err = (0..3).fold(0.0f64, |m, b| m.max((fd[a][b] - jac.j[a][b]).abs()));
                    t.at_most(i, "angle_fd_relative", err / scale, ANGLE_FD_TOL);
                }
            }
            Err(e) => t.violate(i, &format!("angle_fd_error: {e}"), f64::NAN, 0.0),
        }
        t
    });

    for (m_idx, name) in BUILTIN_NAMES.iter().enumerate() {
        let base = builtin_mesh(name, 0.0).expect("builtin mesh");
        let offset = spec.triangles + m_idx as u64 * spec.metrics_per_mesh;
        let part = run_indexed(spec.metrics_per_mesh, |s| {
            let i = offset + s;
            let mut t = Tally::default();
            let (mesh, r) = random_mesh_metric(&base, seed, i, 0.1, 10.0);
            let asm = match assemble(&mesh, &r) {
                Ok(a) => a,
                Err(e) => {
                    t.violate(i, &format!("assembly_error: {e}"), f64::NAN, 0.0);
                    return t;
                }
            };
            record_assembly_identities(&asm, i, &mut t);
            let fd = match fd_curvature_jacobian(&mesh, &r, spec.h) {
                Ok(fd) => fd,
                Err(e) => {
                    t.violate(i, &format!("curvature_fd_error: {e}"), f64::NAN, 0.0);
                    return t;
                }
            };
            let n = mesh.vertex_count();
            for a in 0..n {
                for b in 0..n {
                    let d = (fd[(a, b)] - asm.l[(a, b)]).abs();
                    // 1 or less means within the relative or the absolute tolerance
                    let ratio = (d / CURVATURE_FD_ABS).min(d / (CURVATURE_FD_REL * asm.l[(a, b)].abs()));
                    t.at_most(i, "curvature_fd_ratio", ratio, 1.0);
                    t.at_most(i, "fd_symmetry", (fd[(a, b)] - fd[(b, a)]).abs(), FD_SYMMETRY_TOL);
                    if a != b && !shares_face(&mesh, a, b) {
                        t.at_most(i, "fd_nonadjacent", fd[(a, b)].abs(), 0.0);
                    }
                }
            }
            t
        });
        tally.merge(part);
    }
    let samples = spec.triangles + BUILTIN_NAMES.len() as u64 * spec.metrics_per_mesh;
    tally.into_report("jacobians", seed, samples, started)
}

/// Smallest eigenvalue and diagonal dominance of `L` on random metrics of each built-in mesh.
pub fn spd_suite(samples_per_mesh: u64, seed: u64) -> SweepReport {
    let started = Instant::now();
    let mut tally = Tally::default();
    for (m_idx, name) in BUILTIN_NAMES.iter().enumerate() {
        let base = builtin_mesh(name, 0.0).expect("builtin mesh");
        let offset = m_idx as u64 * samples_per_mesh;
        let part = run_indexed(samples_per_mesh, |s| {
            let i = offset + s;
            let mut t = Tally::default();
            let (mesh, r) = random_mesh_metric(&base, seed, i, 1e-3, 1e2);
            match assemble(&mesh, &r) {
                Ok(asm) => {
                    let rep = spd_check(&asm);
                    t.at_least(i, &format!("{name}.min_eigenvalue"), rep.min_eigenvalue, f64::MIN_POSITIVE);
                    t.at_most(i, "symmetric_residual", rep.symmetric_residual, 0.0);
                    for (v, &m) in rep.dominance_margins.iter().enumerate() {
                        t.at_least(i, "dominance_margin", m, f64::MIN_POSITIVE);
                        t.at_most(
                            i,
                            "dominance_margin_minus_a",
                            (m - asm.a[v]).abs() / asm.a[v],
                            1e-10,
                        );
                    }
                }
                Err(e) => t.violate(i, &format!("assembly_error: {e}"), f64::NAN, 0.0),
            }
            t
        });
        tally.merge(part);
    }
    tally.into_report("spd", seed, BUILTIN_NAMES.len() as u64 * samples_per_mesh, started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_identity_sweep_passes_and_is_reproducible() {
        let a = identities_suite(200, 7);
        assert!(a.passed(), "{:?}", a.violations);
        let mut b = identities_suite(200, 7);
        b.wall_time = a.wall_time;
        assert_eq!(a, b);
    }

    #[test]
    fn small_jacobian_sweep_passes() {
        let spec = JacobianSpec {
            triangles: 50,
            metrics_per_mesh: 5,
            h: 1e-5,
        };
        let rep = jacobians_suite(&spec, 3);
        assert!(rep.passed(), "{:?}", rep.violations);
    }

    #[test]
    fn small_spd_sweep_passes() {
        let rep = spd_suite(10, 5);
        assert!(rep.passed(), "{:?}", rep.violations);
        assert!(rep.inf("genus2_min.min_eigenvalue") > 0.0);
    }
}
