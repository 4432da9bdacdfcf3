//! Explicit bound constants, bound sweeps, the polynomial oracle for the
//! off-diagonal derivative, and the small scans behind them.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hypgeom::{self, TrianglePacking, MAX_RADIUS};
use crate::laplacian::{assemble, PackingMetric};
use crate::mesh::{check_star_condition, vertex_adjacency, WeightedTriangulation};

use super::sampling::{log_uniform, sample_rng, star_weights};
use super::sweeps::record_assembly_identities;
use super::{run_indexed, SweepReport, Tally, VerifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Lower bound on all radii.
    pub r_min: f64,
    pub vertex_count: usize,
    pub a: f64,
    pub phi_bar: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// Per face, per edge slot `t` (the edge opposite corner `t`).
    pub m4: Vec<[f64; 3]>,
    pub m5: f64,
    pub m6: f64,
    pub m7: f64,
    pub m8: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

/// Constants of the uniform bounds `a1 <= A_i <= a2`, `0 <= B_e <= a3` valid
/// for metrics with every radius at least `r_min`.
pub fn theorem1_constants(
    mesh: &WeightedTriangulation,
    r_min: f64,
) -> Result<BoundConstants, VerifyError> {
    if !(r_min > 0.0 && r_min.is_finite()) {
        return Err(VerifyError::Precondition(format!(
            "radius lower bound {r_min} must be positive and finite"
        )));
    }
    let a = -(-r_min).exp_m1() / 2.0;
    let phi_bar = mesh
        .edges()
        .iter()
        .map(|e| e.phi.cos())
        .fold(0.0f64, f64::min);
    let p = 1.0 + phi_bar;
    let m4 = (0..mesh.faces().len())
        .map(|face| {
            let w = mesh.face_weights(face);
            let g = TrianglePacking::new([1.0; 3], w).gammas();
            [0, 1, 2].map(|t| {
                32.0 * a.powi(10) * (w[t].sin().powi(2) + g[(t + 1) % 3] + g[(t + 2) % 3])
            })
        })
        .collect();
    let a3 = 5.0 / (64.0 * a.powi(14) * p * p * p.sqrt());
    Ok(BoundConstants {
        r_min,
        vertex_count: mesh.vertex_count(),
        a,
        phi_bar,
        m1: 4.0 * a.powi(4) * p,
        m2: 2.0,
        m3: 5.0,
        m4,
        m5: 6.0,
        m6: 16.0 * a.powi(8) * p * p,
        m7: 19.0,
        m8: 128.0 * p * a.powi(12),
        a1: 64.0 * a.powi(14) * p * p / 15.0,
        a2: mesh.vertex_count() as f64 * a3,
        a3,
    })
}

fn require_star(mesh: &WeightedTriangulation) -> Result<(), VerifyError> {
    let rep = check_star_condition(mesh);
    match rep.violations.first() {
        None => Ok(()),
        Some(v) => Err(VerifyError::Precondition(format!(
            "face {} corner {} has gamma {} < 0",
            v.face, v.corner, v.gamma
        ))),
    }
}

/// Checks the bounds from [`theorem1_constants`] on metrics with `r_i` uniform in `[r_min, r_min + 5]`.
pub fn verify_theorem1(
    mesh: &WeightedTriangulation,
    r_min: f64,
    samples: u64,
    seed: u64,
) -> Result<SweepReport, VerifyError> {
    require_star(mesh)?;
    let k = theorem1_constants(mesh, r_min)?;
    let started = Instant::now();
    let tally = run_indexed(samples, |i| {
        let mut rng = sample_rng(seed, i);
        let radii = (0..mesh.vertex_count())
            .map(|_| rng.gen_range(r_min..=r_min + 5.0))
            .collect();
        let mut t = Tally::default();
        explicit_bounds_sample(mesh, PackingMetric::new(radii), &k, i, &mut t);
        t
    });
    let mut rep = tally.into_report("theorem1", seed, samples, started);
    rep.sups.insert("const.a1".into(), k.a1);
    rep.sups.insert("const.a2".into(), k.a2);
    rep.sups.insert("const.a3".into(), k.a3);
    Ok(rep)
}

fn explicit_bounds_sample(
    mesh: &WeightedTriangulation,
    r: Result<PackingMetric, crate::laplacian::LaplacianError>,
    k: &BoundConstants,
    i: u64,
    t: &mut Tally,
) {
    let asm = match r.and_then(|r| assemble(mesh, &r)) {
        Ok(a) => a,
        Err(e) => {
            t.violate(i, &format!("assembly_error: {e}"), f64::NAN, 0.0);
            return;
        }
    };
    for &a in &asm.a {
        t.at_least(i, "A", a, k.a1);
        t.at_most(i, "A", a, k.a2);
    }
    for &b in &asm.b {
        t.at_least(i, "B", b, 0.0);
        t.at_most(i, "B", b, k.a3);
    }
    record_assembly_identities(&asm, i, t);
}

/// Evaluates the explicit bound checks at one metric; used for boundary cases.
pub fn explicit_bounds_at(
    mesh: &WeightedTriangulation,
    r: &PackingMetric,
    r_min: f64,
) -> Result<SweepReport, VerifyError> {
    require_star(mesh)?;
    if r.radii().iter().any(|&x| x < r_min) {
        return Err(VerifyError::Precondition(format!(
            "metric has a radius below {r_min}"
        )));
    }
    let k = theorem1_constants(mesh, r_min)?;
    let started = Instant::now();
    let mut t = Tally::default();
    explicit_bounds_sample(mesh, Ok(r.clone()), &k, 0, &mut t);
    Ok(t.into_report("theorem1", 0, 1, started))
}

/// `x = (e^(2 r) - 1) / 2` for the three corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubstitutedCoords {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SubstitutedCoords {
    pub fn from_radii(r: [f64; 3]) -> Self {
        let f = |r: f64| (2.0 * r).exp_m1() / 2.0;
        Self {
            x: f(r[0]),
            y: f(r[1]),
            z: f(r[2]),
        }
    }
}

/// Weight polynomials of a face with weights `[phi_jk, phi_ik, phi_ij]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightPolynomials {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c: f64,
    /// `cos phi_ij`
    pub phi_ij: f64,
}

impl WeightPolynomials {
    pub fn new(weights: [f64; 3]) -> Self {
        let (p_jk, p_ik, p_ij) = (weights[0].cos(), weights[1].cos(), weights[2].cos());
        Self {
            a1: weights[2].sin().powi(2),
            a2: weights[1].sin().powi(2),
            a3: weights[0].sin().powi(2),
            b1: p_ij + p_ik * p_jk,
            b2: p_ik + p_ij * p_jk,
            b3: p_jk + p_ij * p_ik,
            c: 1.0 + p_ij * p_ik * p_jk,
            phi_ij: p_ij,
        }
    }
}

/// One variable split as `v = s * V` with `s = max(v, 1)`, keeping `V` and `1 / s` in `[0, 1]`.
#[derive(Clone, Copy)]
struct Split {
    s: f64,
    v: f64,
    inv: f64,
}

impl Split {
    fn new(v: f64) -> Self {
        let s = v.max(1.0);
        Self { s, v: v / s, inv: 1.0 / s }
    }

    /// `v^k / s^deg`
    fn mono(&self, k: i32, deg: i32) -> f64 {
        self.v.powi(k) * self.inv.powi(deg - k)
    }
}

/// `(T1, T2)` for the pair `(i, j)` = corners `(0, 1)` through the polynomial
/// forms in the substituted coordinates: `T1 = d theta_j / d u_i` and
/// `T2 = T1 (cosh l_ij - 1)`. Large coordinates are handled by dividing each
/// polynomial by its leading power of `max(x, 1)` etc.
pub fn t1_t2_polynomial(
    coords: &SubstitutedCoords,
    weights: [f64; 3],
) -> Result<(f64, f64), VerifyError> {
    let SubstitutedCoords { x, y, z } = *coords;
    if !(x > 0.0 && y > 0.0 && z > 0.0) || !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(VerifyError::Precondition(format!(
            "coordinates ({x}, {y}, {z}) must be positive and finite"
        )));
    }
    let w = WeightPolynomials::new(weights);
    for (name, b) in [("b1", w.b1), ("b2", w.b2), ("b3", w.b3)] {
        if b < -hypgeom::GAMMA_ROUNDING {
            return Err(VerifyError::Precondition(format!("{name} = {b} < 0")));
        }
    }
    let (b1, b2, b3) = (w.b1.max(0.0), w.b2.max(0.0), w.b3.max(0.0));
    let phi = w.phi_ij;
    let (sx, sy, sz) = (Split::new(x), Split::new(y), Split::new(z));

    // f / (sx^2 sy^2 sz)
    let f = (w.a1 + b2 + b3) * sx.mono(2, 2) * sy.mono(2, 2) * sz.mono(1, 1)
        + b2 * sx.mono(1, 2) * sy.mono(2, 2) * sz.mono(1, 1)
        + b3 * sx.mono(2, 2) * sy.mono(1, 2) * sz.mono(1, 1)
        + w.a1 * sx.mono(2, 2) * sy.mono(2, 2) * sz.mono(0, 1);
    // g1 / (sx^2 sy^2)
    let g1 = (1.0 + phi) * (1.0 + phi) * sx.mono(2, 2) * sy.mono(2, 2)
        + 2.0 * (1.0 + phi) * (sx.mono(2, 2) * sy.mono(1, 2) + sx.mono(1, 2) * sy.mono(2, 2))
        + sx.mono(2, 2) * sy.mono(0, 2)
        + sx.mono(0, 2) * sy.mono(2, 2)
        + 2.0 * phi * sx.mono(1, 2) * sy.mono(1, 2);
    // g2 / (sx^2 sy^2 sz^2)
    let m = |a: i32, b: i32, c: i32| sx.mono(a, 2) * sy.mono(b, 2) * sz.mono(c, 2);
    let g2 = 2.0 * (w.a1 + b2 + b3) * m(2, 2, 1)
        + 2.0 * (w.a3 + b1 + b2) * m(1, 2, 2)
        + 2.0 * (w.a2 + b1 + b3) * m(2, 1, 2)
        + w.a1 * m(2, 2, 0)
        + w.a3 * m(0, 2, 2)
        + w.a2 * m(2, 0, 2)
        + 2.0 * b2 * m(1, 2, 1)
        + 2.0 * b3 * m(2, 1, 1)
        + 2.0 * b1 * m(1, 1, 2)
        + 2.0 * (w.c + b1 + b2 + b3) * m(2, 2, 2);
    if !(g1 > 0.0) || !(g2 > 0.0) {
        return Err(VerifyError::Precondition(format!(
            "inadmissible polynomial values g1 = {g1}, g2 = {g2}"
        )));
    }
    // sqrt((2x + 1)(2y + 1)) / sqrt(sx sy)
    let root = ((2.0 * sx.v + sx.inv) * (2.0 * sy.v + sy.inv)).sqrt();
    let t1 = f * root / (g1 * g2.sqrt() * (sx.s * sy.s).sqrt());
    // q = (1 + phi) x y + x + y + 1 - sqrt((2x + 1)(2y + 1)) = g1 / (P + Q), rescaled by sx sy
    let p = (sx.v + sx.inv) * (sy.v + sy.inv) + phi * sx.v * sy.v;
    let q = g1 / (p + root / (sx.s * sy.s).sqrt());
    let t2 = f * q / (g1 * g2.sqrt());
    Ok((t1, t2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Spec {
    /// Grid points per axis on `[r_lo, r_hi]`, log spaced.
    pub grid_n: usize,
    /// Points per ray, log spaced from `r_hi` down to `r_lo`.
    pub ray_points: usize,
    /// Degree used for the reported `C1 = 2 d M2`.
    pub degree: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    /// Allowed relative growth of a ray's sup over its last decade.
    pub stabilization_tol: f64,
}

impl Default for Theorem2Spec {
    fn default() -> Self {
        Self {
            grid_n: 9,
            ray_points: 81,
            degree: 3,
            r_lo: 1e-6,
            r_hi: 1e2,
            stabilization_tol: 0.05,
        }
    }
}

/// Weight triples for the uniform-bound sweep: all zero, the equality
/// configuration, all right angles, then random triples satisfying the weight condition.
pub fn sample_weight_triples(count: usize, seed: u64) -> Vec<[f64; 3]> {
    let h = PI / 2.0;
    let mut out = vec![[0.0; 3], [h, h, 0.0], [h, h, h]];
    let mut i = 0;
    while out.len() < count {
        out.push(star_weights(&mut sample_rng(seed, i)));
        i += 1;
    }
    out.truncate(count.max(3));
    out
}

fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp().clamp(lo, hi))
        .collect()
}

/// Rays toward the boundary, each a list of radius triples ordered from
/// `r_hi` down to `r_lo` in the moving coordinates.
fn boundary_rays(spec: &Theorem2Spec) -> Vec<(String, Vec<[f64; 3]>)> {
    let ts: Vec<f64> = log_points(spec.r_lo, spec.r_hi, spec.ray_points)
        .into_iter()
        .rev()
        .collect();
    let mut rays = vec![("all".to_string(), ts.iter().map(|&t| [t, t, t]).collect())];
    for fixed in 0..3 {
        for c in [0.1, 1.0, 10.0] {
            let pts = ts
                .iter()
                .map(|&t| {
                    let mut r = [t; 3];
                    r[fixed] = c;
                    r
                })
                .collect();
            rays.push((format!("two[fixed {fixed} = {c}]"), pts));
        }
    }
    for moving in 0..3 {
        for (c1, c2) in [(1.0, 1.0), (0.1, 10.0), (10.0, 10.0)] {
            let pts = ts
                .iter()
                .map(|&t| {
                    let mut r = [0.0; 3];
                    r[moving] = t;
                    r[(moving + 1) % 3] = c1;
                    r[(moving + 2) % 3] = c2;
                    r
                })
                .collect();
            rays.push((format!("one[moving {moving}; {c1}, {c2}]"), pts));
        }
    }
    rays
}

/// `T1` and `T2` for each edge of one triangle, plus the per-corner area terms.
struct PointValues {
    t1: [f64; 3],
    t2: [f64; 3],
}

fn uniform_bounds_point(
    tp: &TrianglePacking,
    sample: u64,
    tally: &mut Tally,
) -> Option<PointValues> {
    let terms = match hypgeom::face_terms(tp) {
        Ok(t) => t,
        Err(e) => {
            tally.violate(sample, &format!("kernel_error: {e}"), f64::NAN, 0.0);
            return None;
        }
    };
    let mut t1 = [0.0; 3];
    let mut t2 = [0.0; 3];
    for e in 0..3 {
        let (a, b) = ((e + 1) % 3, (e + 2) % 3);
        t1[e] = terms.jacobian.j[a][b];
        t2[e] = terms.jacobian.edge_products[e];
        for (name, v) in [("T1", t1[e]), ("T2", t2[e])] {
            if !v.is_finite() {
                tally.violate(sample, &format!("{name}_finite"), v, f64::INFINITY);
            }
            tally.at_least(sample, name, v, 0.0);
        }
        let perm = tp.permuted([a, b, e]);
        match t1_t2_polynomial(&SubstitutedCoords::from_radii(perm.radii), perm.weights) {
            Ok((p1, p2)) => {
                tally.at_most(sample, "poly_T1_relative", rel(p1, t1[e]), 1e-9);
                tally.at_most(sample, "poly_T2_relative", rel(p2, t2[e]), 1e-9);
            }
            Err(err) => tally.violate(sample, &format!("polynomial_error: {err}"), f64::NAN, 0.0),
        }
    }
    for i in 0..3 {
        // area contribution at corner i: the two edges through it
        let a = t2[(i + 1) % 3] + t2[(i + 2) % 3];
        if !a.is_finite() {
            tally.violate(sample, "A_face_finite", a, f64::INFINITY);
        }
        tally.at_least(sample, "A_face", a, 0.0);
    }
    Some(PointValues { t1, t2 })
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Positivity, finiteness and sup stabilization of the off-diagonal
/// derivative (`T1`) and its product with `cosh l - 1` (`T2`) over radii in
/// `[r_lo, r_hi]` and along rays toward the boundary, for each weight triple.
/// A ray is stable when its sup over the last decade exceeds the sup over the
/// rest of the ray by at most `stabilization_tol` (relative).
pub fn verify_theorem2(
    weights_list: &[[f64; 3]],
    spec: &Theorem2Spec,
    seed: u64,
) -> Result<SweepReport, VerifyError> {
    for (idx, w) in weights_list.iter().enumerate() {
        TrianglePacking::new([1.0; 3], *w).validate()?;
        let g = TrianglePacking::new([1.0; 3], *w).gammas();
        if let Some(corner) = (0..3).find(|&t| g[t] < 0.0) {
            return Err(VerifyError::Precondition(format!(
                "weight triple {idx} violates the weight condition at corner {corner} (gamma {})",
                g[corner]
            )));
        }
    }
    if spec.grid_n < 2 || spec.ray_points < 11 || !(spec.r_lo > 0.0 && spec.r_hi <= MAX_RADIUS) {
        return Err(VerifyError::Precondition(format!("bad sweep spec {spec:?}")));
    }
    let started = Instant::now();
    let grid = log_points(spec.r_lo, spec.r_hi, spec.grid_n);
    let rays = boundary_rays(spec);
    let decade = spec.r_lo * 10.0;

    let parts: Vec<Tally> = weights_list
        .par_iter()
        .enumerate()
        .map(|(idx, &w)| {
            let mut t = Tally::default();
            let tag = format!("triple{idx:02}");
            let sample = idx as u64;
            let mut m1 = 0.0f64;
            let mut m2 = 0.0f64;
            for &x in &grid {
                for &y in &grid {
                    for &z in &grid {
                        if let Some(v) = uniform_bounds_point(&TrianglePacking::new([x, y, z], w), sample, &mut t) {
                            m1 = v.t1.iter().fold(m1, |m, &a| m.max(a));
                            m2 = v.t2.iter().fold(m2, |m, &a| m.max(a));
                        }
                    }
                }
            }
            for (name, pts) in &rays {
                let mut head = [[0.0f64; 3]; 2];
                let mut all = [[0.0f64; 3]; 2];
                for r in pts {
                    let Some(v) = uniform_bounds_point(&TrianglePacking::new(*r, w), sample, &mut t) else {
                        continue;
                    };
                    let in_last_decade = r.iter().fold(f64::INFINITY, |m, &a| m.min(a)) < decade;
                    for e in 0..3 {
                        for (q, val) in [v.t1[e], v.t2[e]].into_iter().enumerate() {
                            all[q][e] = all[q][e].max(val);
                            if !in_last_decade {
                                head[q][e] = head[q][e].max(val);
                            }
                        }
                    }
                    m1 = v.t1.iter().fold(m1, |m, &a| m.max(a));
                    m2 = v.t2.iter().fold(m2, |m, &a| m.max(a));
                }
                for q in 0..2 {
                    for e in 0..3 {
                        let growth = if all[q][e] == 0.0 {
                            0.0
                        } else {
                            all[q][e] / head[q][e] - 1.0
                        };
                        let qname = ["T1", "T2"][q];
                        t.observe("ray_last_decade_growth", growth);
                        if !(growth <= spec.stabilization_tol) {
                            t.violate(
                                sample,
                                &format!("{tag}.{name}.{qname}[edge {e}].last_decade_growth"),
                                growth,
                                spec.stabilization_tol,
                            );
                        }
                    }
                }
            }
            t.observe(&format!("{tag}.M1"), m1);
            t.observe(&format!("{tag}.M2"), m2);
            t.observe(&format!("{tag}.C1"), 2.0 * spec.degree as f64 * m2);
            t.observe(&format!("{tag}.C2"), 2.0 * m1);
            t
        })
        .collect();
    let mut tally = Tally::default();
    for p in parts {
        tally.merge(p);
    }
    Ok(tally.into_report("theorem2", seed, weights_list.len() as u64, started))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop31Result {
    pub c: f64,
    pub grid_n: usize,
    pub min: f64,
    pub argmin: [f64; 3],
    pub bound: f64,
    pub holds: bool,
    pub feasible_points: usize,
}

/// Minimum of `2 - x^2 - y^2 + (x + yz) + (y + xz) + (z + xy)` over the grid
/// `{c + k (1 - c) / n}^3` restricted to `x + yz, y + xz, z + xy >= 0`.
/// Ties keep the lexicographically first point.
pub fn prop31_bruteforce(c: f64, grid_n: usize) -> Result<Prop31Result, VerifyError> {
    if grid_n < 10 {
        return Err(VerifyError::Precondition(format!("grid_n = {grid_n} < 10")));
    }
    if !(c > -1.0 && c <= 0.0) {
        return Err(VerifyError::Precondition(format!("c = {c} outside (-1, 0]")));
    }
    let vals: Vec<f64> = (0..=grid_n)
        .map(|k| c + k as f64 * (1.0 - c) / grid_n as f64)
        .collect();
    let mut min = f64::INFINITY;
    let mut argmin = [f64::NAN; 3];
    let mut feasible_points = 0;
    for &x in &vals {
        for &y in &vals {
            for &z in &vals {
                let (p, q, r) = (x + y * z, y + x * z, z + x * y);
                if p < 0.0 || q < 0.0 || r < 0.0 {
                    continue;
                }
                feasible_points += 1;
                let v = 2.0 - x * x - y * y + p + q + r;
                if v < min {
                    min = v;
                    argmin = [x, y, z];
                }
            }
        }
    }
    Ok(Prop31Result {
        c,
        grid_n,
        min,
        argmin,
        bound: 1.0 + c,
        holds: min >= 1.0 + c,
        feasible_points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma52Result {
    pub weights: [f64; 3],
    pub epsilon: f64,
    /// Smallest tested `l` with `theta_0 < epsilon` at `r_0 in {l, 2l, 4l}`; `None` if not reached below the cap.
    pub threshold: Option<f64>,
    pub l_min: f64,
    pub l_max: f64,
    /// Largest angle at corner 0 seen at the threshold.
    pub max_angle_at_threshold: f64,
}

pub const ANGLE_SCAN_L_MIN: f64 = 1e-3;
pub const ANGLE_SCAN_GRID: usize = 8;

/// Searches for the radius beyond which the angle at corner 0 stays below
/// `epsilon` for every `(r_1, r_2)` on a log grid over `r_other`.
pub fn lemma52_scan(
    weights: [f64; 3],
    epsilon: f64,
    r_other: (f64, f64),
) -> Result<Lemma52Result, VerifyError> {
    if !(epsilon > 0.0) {
        return Err(VerifyError::Precondition(format!("epsilon = {epsilon} must be positive")));
    }
    let probe = TrianglePacking::new([1.0; 3], weights);
    probe.validate()?;
    if probe.gammas().iter().any(|&g| g < 0.0) {
        return Err(VerifyError::Precondition("weights violate the weight condition".into()));
    }
    let (lo, hi) = r_other;
    if !(lo > 0.0 && hi >= lo && hi <= MAX_RADIUS) {
        return Err(VerifyError::Precondition(format!("bad radius range {r_other:?}")));
    }
    let others = log_points(lo, hi, ANGLE_SCAN_GRID);
    let max_angle = |l: f64| -> Result<f64, VerifyError> {
        let mut worst = 0.0f64;
        for m in [1.0, 2.0, 4.0] {
            for &rj in &others {
                for &rk in &others {
                    let a = hypgeom::triangle_angles(&TrianglePacking::new([l * m, rj, rk], weights))?;
                    worst = worst.max(a[0]);
                }
            }
        }
        Ok(worst)
    };
    let l_max = MAX_RADIUS / 4.0;
    let mut result = Lemma52Result {
        weights,
        epsilon,
        threshold: None,
        l_min: ANGLE_SCAN_L_MIN,
        l_max,
        max_angle_at_threshold: f64::NAN,
    };
    let at_min = max_angle(ANGLE_SCAN_L_MIN)?;
    if at_min < epsilon {
        result.threshold = Some(ANGLE_SCAN_L_MIN);
        result.max_angle_at_threshold = at_min;
        return Ok(result);
    }
    let at_max = max_angle(l_max)?;
    if at_max >= epsilon {
        result.max_angle_at_threshold = at_max;
        return Ok(result);
    }
    let (mut bad, mut good, mut good_angle) = (ANGLE_SCAN_L_MIN, l_max, at_max);
    for _ in 0..60 {
        let mid = (bad * good).sqrt();
        if mid <= bad || mid >= good {
            break;
        }
        let a = max_angle(mid)?;
        if a < epsilon {
            good = mid;
            good_angle = a;
        } else {
            bad = mid;
        }
    }
    result.threshold = Some(good);
    result.max_angle_at_threshold = good_angle;
    Ok(result)
}

/// `0 < B_e < 1` and `0 < A_i < d_i cosh 1` on random metrics of a mesh with all weights zero.
pub fn verify_prop24(
    mesh: &WeightedTriangulation,
    samples: u64,
    seed: u64,
) -> Result<SweepReport, VerifyError> {
    if mesh.edges().iter().any(|e| e.phi != 0.0) {
        return Err(VerifyError::Precondition("all weights must be zero".into()));
    }
    let degrees = vertex_adjacency(mesh).degrees;
    let started = Instant::now();
    let tally = run_indexed(samples, |i| {
        let mut rng = sample_rng(seed, i);
        let radii = (0..mesh.vertex_count())
            .map(|_| log_uniform(&mut rng, 1e-3, 50.0))
            .collect();
        let mut t = Tally::default();
        match PackingMetric::new(radii).and_then(|r| assemble(mesh, &r)) {
            Ok(asm) => {
                for &b in &asm.b {
                    t.strictly_between(i, "B", b, 0.0, 1.0);
                }
                for (v, &a) in asm.a.iter().enumerate() {
                    let cap = degrees[v] as f64 * 1f64.cosh();
                    t.strictly_between(i, "A", a, 0.0, cap);
                    t.observe("A_over_cap", a / cap);
                }
            }
            Err(e) => t.violate(i, &format!("assembly_error: {e}"), f64::NAN, 0.0),
        }
        t
    });
    Ok(tally.into_report("prop24", seed, samples, started))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin_mesh;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    #[test]
    fn constants_at_ln2() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let k = theorem1_constants(&m, LN_2).unwrap();
        assert_relative_eq!(k.a, 0.25, max_relative = 1e-15);
        assert_eq!(k.phi_bar, 0.0);
        assert_relative_eq!(k.a3, 20971520.0, max_relative = 1e-14);
        assert_relative_eq!(k.a2, 83886080.0, max_relative = 1e-14);
        assert_relative_eq!(k.a1, 1.0 / 62914560.0, max_relative = 1e-14);
        assert_eq!((k.m2, k.m3, k.m5, k.m7), (2.0, 5.0, 6.0, 19.0));
        assert!(k.a1 <= k.a2);
        let p = 1.0 + k.phi_bar;
        assert_relative_eq!(k.a1 * 15.0 / (64.0 * k.a.powi(14) * p * p), 1.0, max_relative = 1e-14);
        // every m4 entry on the zero-weight tetrahedron: 32 a^10 (0 + 2 + 2)
        for row in &k.m4 {
            for &v in row {
                assert_relative_eq!(v, 128.0 * 0.25f64.powi(10), max_relative = 1e-14);
            }
        }
        assert!(theorem1_constants(&m, 0.0).is_err());
        assert!(theorem1_constants(&m, -1.0).is_err());
    }

    #[test]
    fn constants_see_obtuse_weights() {
        let m = builtin_mesh("genus2_min", 0.0).unwrap();
        let mut w = vec![0.3; 12];
        w[8] = 2.0;
        let m = m.with_weights(&w).unwrap();
        let k = theorem1_constants(&m, 1.0).unwrap();
        assert_relative_eq!(k.phi_bar, 2f64.cos());
        assert!(k.phi_bar < 0.0);
        let large = theorem1_constants(&m, 50.0).unwrap();
        assert!((large.a - 0.5).abs() < 1e-15);
    }

    #[test]
    fn explicit_bounds_hold_at_boundary_metric() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let rep = explicit_bounds_at(&m, &PackingMetric::uniform(4, 0.5).unwrap(), 0.5).unwrap();
        assert!(rep.passed());
        assert!(explicit_bounds_at(&m, &PackingMetric::uniform(4, 0.4).unwrap(), 0.5).is_err());
    }

    #[test]
    fn polynomial_value_at_unit_point() {
        let w = WeightPolynomials::new([0.0; 3]);
        assert_eq!((w.a1, w.b2, w.b3, w.c), (0.0, 2.0, 2.0, 2.0));
        // x = y = z = 1: f = 4 + 2 + 2 = 8; check through T1 against the direct product
        let c = SubstitutedCoords { x: 1.0, y: 1.0, z: 1.0 };
        let (t1, _) = t1_t2_polynomial(&c, [0.0; 3]).unwrap();
        let g1: f64 = 4.0 + 8.0 + 1.0 + 1.0 + 2.0;
        let g2: f64 = 8.0 + 8.0 + 8.0 + 4.0 + 4.0 + 4.0 + 16.0;
        assert_relative_eq!(t1, 8.0 * 3.0 / (g1 * g2.sqrt()), max_relative = 1e-15);
    }

    #[test]
    fn polynomial_matches_kernel() {
        let tp = TrianglePacking::new([1.0, 1.5, 2.0], [0.3, 0.7, 1.1]);
        let jac = hypgeom::angle_jacobian(&tp).unwrap();
        let (t1, t2) = t1_t2_polynomial(&SubstitutedCoords::from_radii(tp.radii), tp.weights).unwrap();
        assert_relative_eq!(t1, jac.j[1][0], max_relative = 1e-12);
        assert_relative_eq!(t2, jac.edge_products[2], max_relative = 1e-12);
        // large and tiny radii
        for r in [[1e-6, 2e-6, 5e-5], [90.0, 100.0, 0.3], [1e-6, 100.0, 1e-6]] {
            let tp = TrianglePacking::new(r, [0.3, 0.7, 1.1]);
            let jac = hypgeom::angle_jacobian(&tp).unwrap();
            let (t1, t2) = t1_t2_polynomial(&SubstitutedCoords::from_radii(r), tp.weights).unwrap();
            assert_relative_eq!(t1, jac.j[1][0], max_relative = 1e-9);
            assert_relative_eq!(t2, jac.edge_products[2], max_relative = 1e-9);
        }
    }

    #[test]
    fn equality_weights_zero_polynomial() {
        let w = [FRAC_PI_2, FRAC_PI_2, 0.0];
        let (t1, t2) = t1_t2_polynomial(&SubstitutedCoords { x: 0.3, y: 2.0, z: 7.0 }, w).unwrap();
        assert!(t1.abs() < 1e-15 && t2.abs() < 1e-15);
    }

    #[test]
    fn polynomial_rejects_bad_input() {
        let c = SubstitutedCoords { x: 0.0, y: 1.0, z: 1.0 };
        assert!(t1_t2_polynomial(&c, [0.0; 3]).is_err());
        let w = 0.75 * PI;
        let c = SubstitutedCoords { x: 1.0, y: 1.0, z: 1.0 };
        assert!(t1_t2_polynomial(&c, [0.0, w, w]).is_err());
    }

    #[test]
    fn grid_minimum_reference_values() {
        let r = prop31_bruteforce(0.0, 50).unwrap();
        assert_eq!(r.min, 2.0);
        assert_eq!(r.argmin, [0.0, 0.0, 0.0]);
        let r = prop31_bruteforce(-0.3, 50).unwrap();
        assert_relative_eq!(r.min, 1.845824, max_relative = 1e-14);
        assert_relative_eq!(r.argmin[0], 0.324, max_relative = 1e-14);
        assert_eq!(r.argmin[1..], [1.0, -0.3]);
        let r = prop31_bruteforce(-0.7, 50).unwrap();
        assert_relative_eq!(r.min, 0.9, max_relative = 1e-14);
        assert_eq!(r.argmin, [1.0, 1.0, -0.7]);
        let r = prop31_bruteforce(-0.99, 50).unwrap();
        assert_relative_eq!(r.min, 0.03, max_relative = 1e-12);
        assert!(r.holds);
        assert!(prop31_bruteforce(0.0, 9).is_err());
        assert!(prop31_bruteforce(-1.0, 50).is_err());
    }

    #[test]
    fn angle_threshold_examples() {
        let r = lemma52_scan([0.0; 3], 1e-3, (0.1, 10.0)).unwrap();
        let l = r.threshold.unwrap();
        assert!(l > 1.0 && l < 50.0);
        let r = lemma52_scan([0.0; 3], PI, (0.1, 10.0)).unwrap();
        assert_eq!(r.threshold, Some(ANGLE_SCAN_L_MIN));
        let mixed = [0.4, 1.2, 0.9];
        let a = lemma52_scan(mixed, 1e-6, (0.1, 10.0)).unwrap().threshold.unwrap();
        let b = lemma52_scan(mixed, 1e-3, (0.1, 10.0)).unwrap().threshold.unwrap();
        assert!(a >= b);
    }

    #[test]
    fn small_uniform_bounds_sweep() {
        let triples = sample_weight_triples(4, 11);
        let spec = Theorem2Spec {
            grid_n: 4,
            ray_points: 41,
            ..Theorem2Spec::default()
        };
        let rep = verify_theorem2(&triples, &spec, 11).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        // equality configuration: the derivative across the zero-weight edge vanishes on every ray,
        // up to the rounding of cos(pi / 2)
        for (_, pts) in boundary_rays(&spec) {
            for r in pts {
                let tp = TrianglePacking::new(r, triples[1]);
                let j = hypgeom::angle_jacobian(&tp).unwrap().j;
                assert!(j[0][1].abs() <= 1e-15, "{r:?} {j:?}");
            }
        }
        let w = 0.75 * PI;
        assert!(verify_theorem2(&[[0.0, w, w]], &spec, 1).is_err());
    }
}
