//! Curvature, the discrete Laplacian `Delta = -dK/du` and its p-th analogue.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

use crate::hypgeom::{self, HypError, TrianglePacking, MAX_RADIUS};
use crate::mesh::WeightedTriangulation;

/// Relative tolerance between the two routes to the vertex coefficient `A`.
pub const AREA_ROUTE_TOL: f64 = 1e-9;

/// Tolerance on weight sums when recognising the configuration with `B = 0`.
const ZERO_B_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LaplacianError {
    #[error("radius {index} is {value}; radii must lie in (0, {MAX_RADIUS}]")]
    InvalidRadius { index: usize, value: f64 },
    #[error("u-coordinate {index} is {value}; u must be negative")]
    InvalidU { index: usize, value: f64 },
    #[error("expected a vector of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("p = {0}; the p-Laplacian needs p > 1")]
    InvalidP(f64),
    #[error("face {face}: {source}")]
    Face { face: usize, source: HypError },
    #[error("vertex {vertex}: A from edge sums is {stored}, direct area derivative gives {direct}")]
    AssemblyInconsistency { vertex: usize, stored: f64, direct: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingMetric {
    radii: Vec<f64>,
}

impl PackingMetric {
    pub fn new(radii: Vec<f64>) -> Result<Self, LaplacianError> {
        for (index, &value) in radii.iter().enumerate() {
            if !(value > 0.0 && value <= MAX_RADIUS) {
                return Err(LaplacianError::InvalidRadius { index, value });
            }
        }
        Ok(Self { radii })
    }

    pub fn uniform(n: usize, r: f64) -> Result<Self, LaplacianError> {
        Self::new(vec![r; n])
    }

    pub fn from_u(u: &[f64]) -> Result<Self, LaplacianError> {
        let mut radii = Vec::with_capacity(u.len());
        for (index, &value) in u.iter().enumerate() {
            if !(value < 0.0) {
                return Err(LaplacianError::InvalidU { index, value });
            }
            radii.push(r_from_u(value));
        }
        Self::new(radii)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn u(&self) -> Vec<f64> {
        self.radii.iter().map(|&r| u_from_r(r)).collect()
    }
}

/// `ln tanh(r / 2)`.
pub fn u_from_r(r: f64) -> f64 {
    let q = (-r).exp();
    if r < std::f64::consts::LN_2 {
        (-(-r).exp_m1()).ln() - q.ln_1p()
    } else {
        (-q).ln_1p() - q.ln_1p()
    }
}

/// `2 artanh(e^u)`, inverse of [`u_from_r`] for `u < 0`.
pub fn r_from_u(u: f64) -> f64 {
    let q = u.exp();
    if u < -std::f64::consts::LN_2 {
        q.ln_1p() - (-q).ln_1p()
    } else {
        q.ln_1p() - (-u.exp_m1()).ln()
    }
}

pub fn u_of_r(r: &PackingMetric) -> Vec<f64> {
    r.u()
}

pub fn r_of_u(u: &[f64]) -> Result<PackingMetric, LaplacianError> {
    PackingMetric::from_u(u)
}

fn check_len(mesh: &WeightedTriangulation, r: &PackingMetric) -> Result<(), LaplacianError> {
    if r.len() != mesh.vertex_count() {
        return Err(LaplacianError::Dimension {
            expected: mesh.vertex_count(),
            got: r.len(),
        });
    }
    Ok(())
}

fn face_packing(mesh: &WeightedTriangulation, r: &PackingMetric, face: usize) -> TrianglePacking {
    let f = &mesh.faces()[face];
    TrianglePacking::new(f.vertices.map(|v| r.radii[v]), mesh.face_weights(face))
}

/// `K_i = 2 pi - (sum of corner angles at i)`, faces visited in ascending id.
pub fn curvature(mesh: &WeightedTriangulation, r: &PackingMetric) -> Result<Vec<f64>, LaplacianError> {
    check_len(mesh, r)?;
    let mut k = vec![2.0 * PI; mesh.vertex_count()];
    for (face, f) in mesh.faces().iter().enumerate() {
        let angles = hypgeom::triangle_angles(&face_packing(mesh, r, face))
            .map_err(|source| LaplacianError::Face { face, source })?;
        for t in 0..3 {
            k[f.vertices[t]] -= angles[t];
        }
    }
    Ok(k)
}

pub fn calabi_energy(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacianAssembly {
    pub k: Vec<f64>,
    /// Per edge, summed over its two faces.
    pub b: Vec<f64>,
    /// Per vertex, as `sum_e B_e (cosh l_e - 1)`.
    pub a: Vec<f64>,
    /// Per vertex, as the u-derivative of the total incident area.
    pub a_direct: Vec<f64>,
    /// Per edge `cosh l`; `inf` when it overflows.
    pub cosh_l: Vec<f64>,
    pub endpoints: Vec<(usize, usize)>,
    /// Edges whose weights put them in the configuration where `B` vanishes.
    pub zero_b_edges: Vec<usize>,
    #[serde(skip)]
    pub l: DMatrix<f64>,
}

/// Recognises `phi_e = 0` with the other two weights summing to `pi` in both faces.
fn zero_b_configuration(mesh: &WeightedTriangulation, edge: usize) -> bool {
    if mesh.edges()[edge].phi != 0.0 {
        return false;
    }
    let mut slots = 0;
    for (face, f) in mesh.faces().iter().enumerate() {
        for t in 0..3 {
            if f.edges[t] == edge {
                let w = mesh.face_weights(face);
                if (w[(t + 1) % 3] + w[(t + 2) % 3] - PI).abs() > ZERO_B_WEIGHT_TOL {
                    return false;
                }
                slots += 1;
            }
        }
    }
    slots == 2
}

pub fn assemble(
    mesh: &WeightedTriangulation,
    r: &PackingMetric,
) -> Result<LaplacianAssembly, LaplacianError> {
    check_len(mesh, r)?;
    let n = mesh.vertex_count();
    let ne = mesh.edges().len();
    let mut k = vec![2.0 * PI; n];
    let mut b = vec![0.0; ne];
    let mut a = vec![0.0; n];
    let mut a_direct = vec![0.0; n];
    let mut cosh_l = vec![f64::NAN; ne];

    for (face, f) in mesh.faces().iter().enumerate() {
        let terms = hypgeom::face_terms(&face_packing(mesh, r, face))
            .map_err(|source| LaplacianError::Face { face, source })?;
        let j = &terms.jacobian.j;
        for t in 0..3 {
            let (p, q) = ((t + 1) % 3, (t + 2) % 3);
            let e = f.edges[t];
            k[f.vertices[t]] -= terms.geometry.angles[t];
            b[e] += j[p][q];
            cosh_l[e] = terms.jacobian.cosh_lengths[t];
            let prod = terms.jacobian.edge_products[t];
            a[f.vertices[p]] += prod;
            a[f.vertices[q]] += prod;
            a_direct[f.vertices[t]] -= terms.chain_diagonal[t] + j[t][p] + j[t][q];
        }
    }
    for (vertex, (&stored, &direct)) in a.iter().zip(&a_direct).enumerate() {
        if !((stored - direct).abs() <= AREA_ROUTE_TOL * (1.0 + stored.abs())) {
            return Err(LaplacianError::AssemblyInconsistency {
                vertex,
                stored,
                direct,
            });
        }
    }

    let mut l = DMatrix::from_diagonal(&DVector::from_column_slice(&a));
    let mut endpoints = Vec::with_capacity(ne);
    for (id, e) in mesh.edges().iter().enumerate() {
        endpoints.push((e.a, e.b));
        if !e.is_loop() {
            l[(e.a, e.a)] += b[id];
            l[(e.b, e.b)] += b[id];
            l[(e.a, e.b)] -= b[id];
            l[(e.b, e.a)] -= b[id];
        }
    }
    let zero_b_edges = (0..ne).filter(|&e| zero_b_configuration(mesh, e)).collect();

    Ok(LaplacianAssembly {
        k,
        b,
        a,
        a_direct,
        cosh_l,
        endpoints,
        zero_b_edges,
        l,
    })
}

impl LaplacianAssembly {
    pub fn vertex_count(&self) -> usize {
        self.a.len()
    }

    fn check_dim(&self, f: &[f64]) -> Result<(), LaplacianError> {
        if f.len() != self.vertex_count() {
            return Err(LaplacianError::Dimension {
                expected: self.vertex_count(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// `(Delta f)_i = sum_e B_e (f_j - f_i) - A_i f_i`, summed over edges in ascending id.
pub fn apply_delta(asm: &LaplacianAssembly, f: &[f64]) -> Result<Vec<f64>, LaplacianError> {
    apply_weighted(asm, f, |d| d)
}

/// `-L f` through the dense matrix.
pub fn apply_delta_dense(asm: &LaplacianAssembly, f: &[f64]) -> Result<Vec<f64>, LaplacianError> {
    asm.check_dim(f)?;
    let v = -(&asm.l * DVector::from_column_slice(f));
    Ok(v.iter().copied().collect())
}

/// `(Delta_p f)_i = sum_e B_e |f_j - f_i|^(p-2) (f_j - f_i) - A_i f_i`, with the
/// edge term taken as 0 when `f_j = f_i`.
pub fn apply_p_delta(
    asm: &LaplacianAssembly,
    f: &[f64],
    p: f64,
) -> Result<Vec<f64>, LaplacianError> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(LaplacianError::InvalidP(p));
    }
    if p == 2.0 {
        return apply_delta(asm, f);
    }
    apply_weighted(asm, f, |d| {
        if d == 0.0 {
            0.0
        } else {
            d.abs().powf(p - 2.0) * d
        }
    })
}

fn apply_weighted(
    asm: &LaplacianAssembly,
    f: &[f64],
    phi: impl Fn(f64) -> f64,
) -> Result<Vec<f64>, LaplacianError> {
    asm.check_dim(f)?;
    let mut out: Vec<f64> = asm.a.iter().zip(f).map(|(a, x)| -a * x).collect();
    for (e, &(i, j)) in asm.endpoints.iter().enumerate() {
        if i == j {
            continue;
        }
        let flow = asm.b[e] * phi(f[j] - f[i]);
        out[i] += flow;
        out[j] -= flow;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdReport {
    pub min_eigenvalue: f64,
    pub symmetric_residual: f64,
    /// `L_ii - sum_{j != i} |L_ij|` per row.
    pub dominance_margins: Vec<f64>,
}

pub fn spd_check(asm: &LaplacianAssembly) -> SpdReport {
    let l = &asm.l;
    let n = l.nrows();
    let mut symmetric_residual: f64 = 0.0;
    let mut dominance_margins = Vec::with_capacity(n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            symmetric_residual = symmetric_residual.max((l[(i, j)] - l[(j, i)]).abs());
            if i != j {
                off += l[(i, j)].abs();
            }
        }
        dominance_margins.push(l[(i, i)] - off);
    }
    let min_eigenvalue = SymmetricEigen::new(l.clone()).eigenvalues.min();
    SpdReport {
        min_eigenvalue,
        symmetric_residual,
        dominance_margins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin_mesh;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    // 50-digit references for the tetrahedron at r = 1, all weights 0
    const TETRA_K: f64 = 4.3032860945321883519;
    const TETRA_L00: f64 = 2.5051995481217759948;
    const TETRA_B: f64 = 0.22196254118829911418;
    const TETRA_A: f64 = 1.8393119245568786523;
    const U_OF_ONE: f64 = -0.77193683290530472507;

    #[test]
    fn u_coordinate_examples() {
        assert_relative_eq!(u_from_r(2.0 * 0.5f64.atanh()), -LN_2, max_relative = 1e-15);
        assert_relative_eq!(u_from_r(1.0), U_OF_ONE, max_relative = 1e-15);
        assert_relative_eq!(r_from_u(u_from_r(1.0)), 1.0, max_relative = 1e-14);
        assert!(r_from_u(-1e-12) > 25.0);
        assert!(matches!(
            PackingMetric::from_u(&[-1.0, 0.0]),
            Err(LaplacianError::InvalidU { index: 1, .. })
        ));
    }

    #[test]
    fn u_round_trip_across_range() {
        for &r in &[1e-6, 1e-3, 0.5, LN_2, 0.7, 3.0, 30.0, 300.0, 700.0] {
            assert_relative_eq!(r_from_u(u_from_r(r)), r, max_relative = 1e-14);
        }
    }

    #[test]
    fn tetra_reference_values() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let r = PackingMetric::uniform(4, 1.0).unwrap();
        let asm = assemble(&m, &r).unwrap();
        for i in 0..4 {
            assert_relative_eq!(asm.k[i], TETRA_K, max_relative = 1e-14);
            assert_relative_eq!(asm.a[i], TETRA_A, max_relative = 1e-13);
            assert_relative_eq!(asm.l[(i, i)], TETRA_L00, max_relative = 1e-13);
        }
        for &b in &asm.b {
            assert_relative_eq!(b, TETRA_B, max_relative = 1e-13);
        }
        assert_eq!(curvature(&m, &r).unwrap(), asm.k);
        assert_relative_eq!(calabi_energy(&asm.k), 4.0 * TETRA_K * TETRA_K, max_relative = 1e-14);
    }

    #[test]
    fn energy_examples() {
        assert_eq!(calabi_energy(&[0.0, 0.0]), 0.0);
        assert_relative_eq!(calabi_energy(&[PI, -PI]), 2.0 * PI * PI);
    }

    #[test]
    fn large_radii_curvature_near_two_pi() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let k = curvature(&m, &PackingMetric::uniform(4, 20.0).unwrap()).unwrap();
        assert!(k.iter().all(|&x| (x - 2.0 * PI).abs() < 1e-6));
    }

    #[test]
    fn zero_b_configuration_is_flagged() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        // edge 0 joins vertices 0 and 1; faces 0 = (0,1,2) and 1 = (0,3,1) contain it.
        // Right angles on the other edges of those faces.
        let mut w = vec![FRAC_PI_2; 6];
        w[0] = 0.0;
        let m = m.with_weights(&w).unwrap();
        let asm = assemble(&m, &PackingMetric::new(vec![0.7, 1.4, 0.9, 2.0]).unwrap()).unwrap();
        assert_eq!(asm.zero_b_edges, vec![0]);
        assert!(asm.b[0].abs() < 1e-15);
        assert!(asm.b[1..].iter().all(|&b| b > 0.0));
    }

    #[test]
    fn delta_forms_agree() {
        let m = builtin_mesh("genus2_min", 0.4).unwrap();
        let asm = assemble(&m, &PackingMetric::new(vec![0.8, 1.7]).unwrap()).unwrap();
        let f = [0.3, -1.2];
        let a = apply_delta(&asm, &f).unwrap();
        let b = apply_delta_dense(&asm, &f).unwrap();
        for i in 0..2 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-12);
        }
        let c = apply_delta(&asm, &[2.0, 2.0]).unwrap();
        for i in 0..2 {
            assert_relative_eq!(c[i], -2.0 * asm.a[i], max_relative = 1e-15);
        }
        assert!(apply_delta(&asm, &[0.0, 0.0]).unwrap().iter().all(|&x| x == 0.0));
        assert!(matches!(
            apply_delta(&asm, &[1.0]),
            Err(LaplacianError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn p_delta_by_hand() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let asm = assemble(&m, &PackingMetric::new(vec![0.6, 1.1, 1.9, 0.4]).unwrap()).unwrap();
        let f = [1.0, 0.0, 0.0, 0.0];
        let got = apply_p_delta(&asm, &f, 3.0).unwrap();
        // at p = 3 the edge term is B |d| d
        let mut want = [0.0; 4];
        want[0] = -asm.a[0];
        for (e, &(i, j)) in asm.endpoints.iter().enumerate() {
            let d = f[j] - f[i];
            want[i] += asm.b[e] * d.abs() * d;
            want[j] -= asm.b[e] * d.abs() * d;
        }
        for i in 0..4 {
            assert_relative_eq!(got[i], want[i], max_relative = 1e-15);
        }
        let c = apply_p_delta(&asm, &[0.5; 4], 1.5).unwrap();
        for i in 0..4 {
            assert_relative_eq!(c[i], -0.5 * asm.a[i], max_relative = 1e-15);
        }
        assert_eq!(apply_p_delta(&asm, &f, 2.0).unwrap(), apply_delta(&asm, &f).unwrap());
        assert!(matches!(apply_p_delta(&asm, &f, 1.0), Err(LaplacianError::InvalidP(_))));
        assert!(apply_p_delta(&asm, &f, f64::NAN).is_err());
    }

    #[test]
    fn loops_only_feed_the_vertex_coefficient() {
        let m = builtin_mesh("genus2_min", 0.0).unwrap();
        let asm = assemble(&m, &PackingMetric::new(vec![1.0, 1.0]).unwrap()).unwrap();
        let spokes: f64 = asm.b[..8].iter().sum();
        assert_relative_eq!(asm.l[(0, 1)], -spokes, max_relative = 1e-14);
        assert_relative_eq!(asm.l[(1, 1)], asm.a[1] + spokes, max_relative = 1e-14);
        for i in 0..2 {
            let row: f64 = (0..2).map(|j| asm.l[(i, j)]).sum();
            assert_relative_eq!(row, asm.a[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn spd_on_tetra() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let asm = assemble(&m, &PackingMetric::uniform(4, 1.0).unwrap()).unwrap();
        let rep = spd_check(&asm);
        assert!(rep.min_eigenvalue > 0.0);
        assert_eq!(rep.symmetric_residual, 0.0);
        for (m, a) in rep.dominance_margins.iter().zip(&asm.a) {
            assert_relative_eq!(*m, *a, max_relative = 1e-12);
        }
    }

    #[test]
    fn face_errors_carry_the_face_id() {
        let m = builtin_mesh("tetra", 0.0).unwrap();
        let w = 0.75 * PI;
        let m = m.with_weights(&[w, w, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let err = assemble(&m, &PackingMetric::uniform(4, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, LaplacianError::Face { face: 0, .. }));
    }
}
