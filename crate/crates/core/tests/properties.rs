use std::f64::consts::PI;

use cpflow::flow::{r_lower_bound_curve, step};
use cpflow::hypgeom::{
    angle_jacobian, edge_length, glickenstein_residual, triangle_geometry, TrianglePacking,
};
use cpflow::laplacian::{
    apply_delta, apply_delta_dense, assemble, calabi_energy, curvature, r_from_u, spd_check,
    u_from_r,
};
use cpflow::mesh::{builtin_mesh, corner_gamma, WeightedTriangulation, BUILTIN_NAMES};
use cpflow::verify::sweeps::random_mesh_metric;
use cpflow::verify::{identities_suite, spd_suite};
use proptest::prelude::*;

fn radius() -> impl Strategy<Value = f64> {
    (-3.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

fn weights() -> impl Strategy<Value = [f64; 3]> {
    [0.0..PI, 0.0..PI, 0.0..PI].prop_filter("weight condition", |w| {
        (0..3).all(|t| corner_gamma(*w, t) >= 0.0)
    })
}

fn triangle() -> impl Strategy<Value = TrianglePacking> {
    ([radius(), radius(), radius()], weights()).prop_map(|(r, w)| TrianglePacking::new(r, w))
}

fn mesh_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(BUILTIN_NAMES.to_vec())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn edge_length_is_symmetric_positive_and_decreasing_in_weight(
        a in radius(), b in radius(), phi in 0.0..PI, dphi in 0.0..0.5f64,
    ) {
        let l = edge_length(a, b, phi).unwrap();
        prop_assert!(l > 0.0);
        prop_assert_eq!(l, edge_length(b, a, phi).unwrap());
        prop_assert!(l <= (a + b) * (1.0 + 1e-12));
        let phi2 = (phi + dphi).min(PI - 1e-9);
        prop_assert!(edge_length(a, b, phi2).unwrap() <= l * (1.0 + 1e-12));
    }

    #[test]
    fn angles_lie_in_open_interval_and_area_is_positive(tp in triangle()) {
        let g = triangle_geometry(&tp).unwrap();
        for th in g.angles {
            prop_assert!(th > 0.0 && th < PI, "angle {th}");
        }
        prop_assert!(g.area > 0.0);
        prop_assert!(g.angles.iter().sum::<f64>() < PI);
    }

    #[test]
    fn jacobian_is_symmetric_with_nonnegative_off_diagonal(tp in triangle()) {
        let j = angle_jacobian(&tp).unwrap().j;
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    prop_assert!(j[a][b] >= 0.0);
                    prop_assert!(rel(j[a][b], j[b][a]) <= 1e-12, "{:?}", j);
                }
            }
            prop_assert!(j[a][a] < 0.0);
        }
        for r in glickenstein_residual(&tp).unwrap().relative {
            prop_assert!(r <= 1e-9);
        }
    }

    #[test]
    fn relabeling_corners_permutes_outputs(
        tp in triangle(),
        perm in prop::sample::select(vec![[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]]),
    ) {
        let q = tp.permuted(perm);
        let (g, h) = (triangle_geometry(&tp).unwrap(), triangle_geometry(&q).unwrap());
        let (j, k) = (angle_jacobian(&tp).unwrap().j, angle_jacobian(&q).unwrap().j);
        prop_assert!(rel(g.area, h.area) <= 1e-12);
        for t in 0..3 {
            prop_assert!(rel(h.angles[t], g.angles[perm[t]]) <= 1e-12);
            prop_assert!(rel(h.lengths[t], g.lengths[perm[t]]) <= 1e-12);
            for s in 0..3 {
                let scale = j[perm[t]].iter().fold(0.0f64, |m, x| m.max(x.abs()));
                prop_assert!((k[t][s] - j[perm[t]][perm[s]]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn u_and_r_round_trip(r in (-4.0f64..1.3).prop_map(|e| 10f64.powf(e))) {
        let u = u_from_r(r);
        prop_assert!(u < 0.0);
        prop_assert!(rel(r_from_u(u), r) <= 1e-10);
    }

    #[test]
    fn lower_bound_curve_is_positive_and_nonincreasing(
        r0 in radius(), c in 0.0..100.0f64, t in 0.0..10.0f64, dt in 0.0..10.0f64,
    ) {
        let a = r_lower_bound_curve(r0, c, t);
        let b = r_lower_bound_curve(r0, c, t + dt);
        prop_assert!(a > 0.0 || (c * t) > 0.0);
        prop_assert!(a <= r0 * (1.0 + 1e-12));
        prop_assert!(b <= a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_symmetric_positive_definite_with_row_sums_a(
        name in mesh_name(), seed in any::<u64>(),
    ) {
        let base = builtin_mesh(name, 0.0).unwrap();
        let (mesh, r) = random_mesh_metric(&base, seed, 0, 1e-2, 1e1);
        let asm = assemble(&mesh, &r).unwrap();
        let n = mesh.vertex_count();
        let rep = spd_check(&asm);
        prop_assert!(rep.min_eigenvalue > 0.0);
        prop_assert_eq!(rep.symmetric_residual, 0.0);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| asm.l[(i, j)]).sum();
            prop_assert!(rel(row, asm.a[i]) <= 1e-10);
            for j in 0..n {
                if i != j {
                    prop_assert!(asm.l[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn edge_sum_and_dense_laplacian_agree(
        name in mesh_name(), seed in any::<u64>(),
        f in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let base = builtin_mesh(name, 0.0).unwrap();
        let (mesh, r) = random_mesh_metric(&base, seed, 1, 1e-2, 1e1);
        let asm = assemble(&mesh, &r).unwrap();
        let f = &f[..mesh.vertex_count()];
        let sparse = apply_delta(&asm, f).unwrap();
        let dense = apply_delta_dense(&asm, f).unwrap();
        let scale = asm.l.abs().max() * f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in sparse.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn total_curvature_is_two_pi_chi_plus_area(name in mesh_name(), seed in any::<u64>()) {
        let base = builtin_mesh(name, 0.0).unwrap();
        let (mesh, r) = random_mesh_metric(&base, seed, 2, 1e-2, 1e1);
        let k = curvature(&mesh, &r).unwrap();
        let area: f64 = (0..mesh.faces().len())
            .map(|f| {
                let v = mesh.faces()[f].vertices;
                let tp = TrianglePacking::new(v.map(|i| r.radii()[i]), mesh.face_weights(f));
                triangle_geometry(&tp).unwrap().area
            })
            .sum();
        let total: f64 = k.iter().sum();
        let expected = 2.0 * PI * mesh.euler_characteristic() as f64 + area;
        prop_assert!((total - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
        for (v, &d) in mesh.corner_counts().iter().enumerate() {
            prop_assert!(k[v] < 2.0 * PI && k[v] > 2.0 * PI - d as f64 * PI);
        }
    }

    #[test]
    fn quadratic_step_does_not_raise_energy(
        name in mesh_name(), seed in any::<u64>(), dt in (-4.0f64..-0.5).prop_map(|e| 10f64.powf(e)),
    ) {
        let base = builtin_mesh(name, 0.0).unwrap();
        let (mesh, r) = random_mesh_metric(&base, seed, 3, 1e-1, 5.0);
        let before = calabi_energy(&curvature(&mesh, &r).unwrap());
        let (next, diag) = step(&mesh, &r, dt, 2.0, 40).unwrap();
        let after = calabi_energy(&curvature(&mesh, &next).unwrap());
        prop_assert_eq!(diag.energy_before, before);
        prop_assert!(after <= before, "{before} -> {after}");
    }

    #[test]
    fn mesh_json_round_trips(name in mesh_name(), seed in any::<u64>()) {
        let base = builtin_mesh(name, 0.0).unwrap();
        let (mesh, _) = random_mesh_metric(&base, seed, 4, 1.0, 2.0);
        let back = WeightedTriangulation::from_json(&mesh.to_json()).unwrap();
        prop_assert_eq!(back, mesh);
    }
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (mut a, mut b) = single.install(|| (identities_suite(300, 11), spd_suite(20, 11)));
    let (c, d) = (identities_suite(300, 11), spd_suite(20, 11));
    a.wall_time = c.wall_time;
    b.wall_time = d.wall_time;
    assert_eq!(a, c);
    assert_eq!(b, d);
}
