//! Single-triangle hyperbolic kernel.
//!
//! A face carries radii `(r_0, r_1, r_2)` at its corners and weights
//! `(phi_0, phi_1, phi_2)` where `phi_t` sits on the edge opposite corner `t`.
//! Edge `t` joins corners `t + 1` and `t + 2`.
//!
//! Every quantity is evaluated in exponentially rescaled form: a hyperbolic
//! function of total exponent `e^(sum r)` is stored multiplied by `e^(-sum r)`.
//! This keeps radii from about `1e-6` up to the 700 cap free of overflow, and
//! the rescaled discriminant is a sum of nonnegative terms under the weight
//! condition, so angles come from `atan2` without a clamp.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted radius; `cosh` overflows just above 710.
pub const MAX_RADIUS: f64 = 700.0;

/// Tolerance below zero at which a rounded corner `gamma` is still treated as 0.
pub const GAMMA_ROUNDING: f64 = 1e-15;

/// Relative tolerance on `cos^2 + sin^2 = 1` for the rescaled angle terms.
pub const ANGLE_CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HypError {
    #[error("radius {index} is {value}; radii must be positive and finite")]
    InvalidRadius { index: usize, value: f64 },
    #[error("radius {index} is {value}, above the cap of {MAX_RADIUS}")]
    RadiusOverflow { index: usize, value: f64 },
    #[error("weight {index} is {value}; weights must lie in [0, pi)")]
    InvalidWeight { index: usize, value: f64 },
    #[error("corner {corner} has gamma {gamma} < 0")]
    StarViolation { corner: usize, gamma: f64 },
    #[error("degenerate face: {0}")]
    DegenerateFace(String),
    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrianglePacking {
    pub radii: [f64; 3],
    /// `weights[t]` is the intersection angle on the edge opposite corner `t`.
    pub weights: [f64; 3],
}

impl TrianglePacking {
    pub fn new(radii: [f64; 3], weights: [f64; 3]) -> Self {
        Self { radii, weights }
    }

    pub fn validate(&self) -> Result<(), HypError> {
        for (index, &value) in self.radii.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(HypError::InvalidRadius { index, value });
            }
            if value > MAX_RADIUS {
                return Err(HypError::RadiusOverflow { index, value });
            }
        }
        for (index, &value) in self.weights.iter().enumerate() {
            if !(value >= 0.0 && value < PI) {
                return Err(HypError::InvalidWeight { index, value });
            }
        }
        Ok(())
    }

    /// `gamma_t = cos phi_t + cos phi_{t+1} cos phi_{t+2}` for each corner.
    pub fn gammas(&self) -> [f64; 3] {
        let c = self.weights.map(f64::cos);
        [0, 1, 2].map(|t| c[t] + c[(t + 1) % 3] * c[(t + 2) % 3])
    }

    /// The same triangle with corners relabeled so that new corner `t` is old corner `perm[t]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        Self {
            radii: perm.map(|p| self.radii[p]),
            weights: perm.map(|p| self.weights[p]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleGeometry {
    /// `lengths[t]` is the edge opposite corner `t`.
    pub lengths: [f64; 3],
    pub angles: [f64; 3],
    pub area: f64,
    /// `sinh l_01 sinh l_02 sin theta_0`, the same for every corner; may be `inf` at huge radii.
    pub a_norm: f64,
    /// `a_norm * e^-(r_0 + r_1 + r_2)`, always finite.
    pub a_scaled: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleJacobian {
    /// `j[a][b]` is the derivative of the angle at corner `a` with respect to `u_b`.
    pub j: [[f64; 3]; 3],
    /// Per edge `t`: the off-diagonal entry times `cosh l_t - 1`.
    pub edge_products: [f64; 3],
    /// Per edge `t`: `cosh l_t`, possibly `inf`.
    pub cosh_lengths: [f64; 3],
}

fn next(t: usize) -> usize {
    (t + 1) % 3
}

fn prev(t: usize) -> usize {
    (t + 2) % 3
}

/// Corner opposite the edge joining corners `a` and `b`.
fn third(a: usize, b: usize) -> usize {
    3 - a - b
}

/// Rescaled per-triangle state. Vertex and edge indices follow the module convention.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    r: [f64; 3],
    /// `sinh r e^-r`
    s: [f64; 3],
    /// `cosh r e^-r`
    c: [f64; 3],
    cos_phi: [f64; 3],
    sin2_phi: [f64; 3],
    gamma: [f64; 3],
    /// per edge: `e^-(ra + rb)`
    w: [f64; 3],
    /// per edge: `(cosh l - 1) e^-(ra + rb)`
    t: [f64; 3],
    /// per edge: `sinh l e^-(ra + rb)`
    sigma: [f64; 3],
    lengths: [f64; 3],
    /// `discriminant * e^-2(r_0 + r_1 + r_2)`
    delta: f64,
    angles: [f64; 3],
    cos_angles: [f64; 3],
    a_scaled: f64,
}

impl Kernel {
    pub(crate) fn new(tp: &TrianglePacking) -> Result<Self, HypError> {
        tp.validate()?;
        let r = tp.radii;
        let s = r.map(|x| -(-2.0 * x).exp_m1() / 2.0);
        let e2 = r.map(|x| (-2.0 * x).exp());
        let c = e2.map(|e| (1.0 + e) / 2.0);
        let cos_phi = tp.weights.map(f64::cos);
        let sin2_phi = tp.weights.map(|p| p.sin().powi(2));
        // 1 + cos phi without cancellation near pi
        let one_plus = tp.weights.map(|p| 2.0 * (p / 2.0).cos().powi(2));
        let gamma = tp.gammas();

        let mut w = [0.0; 3];
        let mut t = [0.0; 3];
        let mut sigma = [0.0; 3];
        let mut lengths = [0.0; 3];
        for e in 0..3 {
            let (a, b) = (next(e), prev(e));
            let (ra, rb) = (r[a], r[b]);
            let sum = ra + rb;
            w[e] = (-sum).exp();
            let d = (ra - rb).abs();
            t[e] = one_plus[e] * s[a] * s[b]
                + 0.5 * (-d).exp_m1().powi(2) * (-2.0 * ra.min(rb)).exp();
            sigma[e] = (t[e] * (t[e] + 2.0 * w[e])).sqrt();
            lengths[e] = if sum < 300.0 {
                let x = t[e] * sum.exp();
                (x + (x * (x + 2.0)).sqrt()).ln_1p()
            } else {
                sum + (w[e] + t[e] + sigma[e]).ln()
            };
            if !(lengths[e] > 0.0 && lengths[e].is_finite()) {
                return Err(HypError::DegenerateFace(format!(
                    "edge {e} has length {}",
                    lengths[e]
                )));
            }
        }

        let mut delta = 2.0 * (1.0 + cos_phi[0] * cos_phi[1] * cos_phi[2])
            * (s[0] * s[1] * s[2]).powi(2);
        for e in 0..3 {
            let (a, b) = (next(e), prev(e));
            delta += sin2_phi[e] * (s[a] * s[b]).powi(2) * e2[e];
            delta += 2.0 * gamma[e] * c[a] * c[b] * s[a] * s[b] * s[e] * s[e];
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(HypError::DegenerateFace(format!(
                "discriminant {delta} is not positive"
            )));
        }
        let root = delta.sqrt();

        let mut angles = [0.0; 3];
        let mut cos_angles = [0.0; 3];
        let mut sines = [0.0; 3];
        for i in 0..3 {
            let (j, k) = (next(i), prev(i));
            // cos phi on edges ik, ij, jk
            let (p_ik, p_ij, p_jk) = (cos_phi[j], cos_phi[k], cos_phi[i]);
            let num = s[i] * s[i] * c[j] * c[k]
                + p_ik * c[i] * s[i] * c[j] * s[k]
                + p_ij * c[i] * s[i] * s[j] * c[k]
                + gamma[i] * s[i] * s[i] * s[j] * s[k]
                - p_jk * c[i] * c[i] * s[j] * s[k];
            let sin_part = (-r[i]).exp() * root;
            // sigma_ij sigma_ik squared must equal num^2 + sin_part^2
            let rho2 = num * num + sin_part * sin_part;
            let expect = (sigma[k] * sigma[j]).powi(2);
            if (rho2 - expect).abs() > ANGLE_CONSISTENCY_TOL * expect {
                return Err(HypError::NumericalConsistency(format!(
                    "corner {i}: cos^2 + sin^2 off by {:e} relative",
                    (rho2 - expect).abs() / expect
                )));
            }
            angles[i] = sin_part.atan2(num);
            let rho = rho2.sqrt();
            cos_angles[i] = num / rho;
            sines[i] = sin_part / rho;
        }
        if angles.iter().any(|&a| !(a > 0.0 && a < PI)) {
            return Err(HypError::DegenerateFace(format!(
                "angles {angles:?} outside (0, pi)"
            )));
        }

        let m = (0..3)
            .min_by(|&x, &y| r[x].total_cmp(&r[y]))
            .unwrap_or(0);
        let a_scaled = r[m].exp() * sigma[next(m)] * sigma[prev(m)] * sines[m];

        Ok(Self {
            r,
            s,
            c,
            cos_phi,
            sin2_phi,
            gamma,
            w,
            t,
            sigma,
            lengths,
            delta,
            angles,
            cos_angles,
            a_scaled,
        })
    }

    /// Kernel for derivative formulas: the weight condition must hold at every corner.
    pub(crate) fn with_star(tp: &TrianglePacking) -> Result<Self, HypError> {
        tp.validate()?;
        for (corner, g) in tp.gammas().into_iter().enumerate() {
            if g < -GAMMA_ROUNDING || g.is_nan() {
                return Err(HypError::StarViolation { corner, gamma: g });
            }
        }
        let mut k = Self::new(tp)?;
        k.gamma = k.gamma.map(|g| g.max(0.0));
        if !(k.a_scaled > 1e-300) {
            return Err(HypError::DegenerateFace(format!(
                "normalized area factor {} too small",
                k.a_scaled
            )));
        }
        Ok(k)
    }

    /// `e^(2 r_i + 2 r_j + r_k)`-rescaled numerator of the off-diagonal derivative.
    fn off_numerator(&self, i: usize, j: usize) -> f64 {
        let k = third(i, j);
        let (s, c, g) = (&self.s, &self.c, &self.gamma);
        c[k] * s[i] * s[i] * s[j] * s[j] * self.sin2_phi[k]
            + c[i] * s[i] * s[j] * s[j] * s[k] * g[j]
            + c[j] * s[i] * s[i] * s[j] * s[k] * g[i]
    }

    /// Rescaled off-diagonal derivative with a given rescaled area factor.
    fn off_scaled_with(&self, i: usize, j: usize, a_scaled: f64) -> f64 {
        let k = third(i, j);
        self.off_numerator(i, j) / (a_scaled * self.sigma[k] * self.sigma[k])
    }

    fn off_scaled(&self, i: usize, j: usize) -> f64 {
        self.off_scaled_with(i, j, self.a_scaled)
    }

    /// Rescaled `cosh l` of edge `e`.
    fn h(&self, e: usize) -> f64 {
        self.t[e] + self.w[e]
    }

    /// Rescaled area factor read off at corner `i`.
    fn a_scaled_at(&self, i: usize) -> f64 {
        self.r[i].exp() * self.sigma[next(i)] * self.sigma[prev(i)] * self.angles[i].sin()
    }

    /// Diagonal entry from the chain rule through edge lengths.
    fn chain_diagonal(&self, i: usize) -> f64 {
        let (j, k) = (next(i), prev(i));
        // edges: ij is opposite k, ik opposite j, jk opposite i
        let d_ij = self.s[i] * (self.s[i] * self.c[j] + self.cos_phi[k] * self.c[i] * self.s[j]);
        let d_ik = self.s[i] * (self.s[i] * self.c[k] + self.cos_phi[j] * self.c[i] * self.s[k]);
        -(self.sigma[i] / self.a_scaled)
            * (self.cos_angles[j] * d_ij / self.sigma[k] + self.cos_angles[k] * d_ik / self.sigma[j])
    }

    fn geometry(&self) -> TriangleGeometry {
        // The angle deficit cancels for small triangles and the half-angle
        // formula tan(area / 2) = T_b T_c sin A / (1 - T_b T_c cos A), T = tanh(l / 2),
        // cancels for near-ideal ones; each is used where it is accurate.
        let deficit = PI - self.angles.iter().sum::<f64>();
        let area = if deficit >= 0.5 {
            deficit
        } else {
            let half_tanh = |e: usize| (self.t[e] / (self.t[e] + 2.0 * self.w[e])).sqrt();
            let i = (0..3)
                .max_by(|&x, &y| self.angles[x].total_cmp(&self.angles[y]))
                .unwrap_or(0);
            let tt = half_tanh(next(i)) * half_tanh(prev(i));
            2.0 * (tt * self.angles[i].sin()).atan2(1.0 - tt * self.cos_angles[i])
        };
        TriangleGeometry {
            lengths: self.lengths,
            angles: self.angles,
            area,
            a_norm: self.a_scaled * (self.r[0] + self.r[1] + self.r[2]).exp(),
            a_scaled: self.a_scaled,
        }
    }

    fn jacobian(&self) -> AngleJacobian {
        let mut j = [[0.0; 3]; 3];
        let mut scaled = [0.0; 3];
        let mut edge_products = [0.0; 3];
        for e in 0..3 {
            let (a, b) = (next(e), prev(e));
            scaled[e] = self.off_scaled(a, b);
            let v = self.w[e] * scaled[e];
            j[a][b] = v;
            j[b][a] = v;
            edge_products[e] = scaled[e] * self.t[e];
        }
        for i in 0..3 {
            let (x, y) = (next(i), prev(i));
            // edges through i: opposite x and opposite y
            j[i][i] = -self.h(y) * scaled[y] - self.h(x) * scaled[x];
        }
        AngleJacobian {
            j,
            edge_products,
            cosh_lengths: [0, 1, 2].map(|e| self.h(e) / self.w[e]),
        }
    }

    pub(crate) fn angles(&self) -> [f64; 3] {
        self.angles
    }

    pub(crate) fn delta_scaled(&self) -> f64 {
        self.delta
    }
}

/// `arccosh(cosh r_a cosh r_b + cos phi sinh r_a sinh r_b)`.
pub fn edge_length(r_a: f64, r_b: f64, phi: f64) -> Result<f64, HypError> {
    for (index, value) in [r_a, r_b].into_iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(HypError::InvalidRadius { index, value });
        }
        if value > MAX_RADIUS {
            return Err(HypError::RadiusOverflow { index, value });
        }
    }
    if !(phi >= 0.0 && phi < PI) {
        return Err(HypError::InvalidWeight { index: 0, value: phi });
    }
    let sa = -(-2.0 * r_a).exp_m1() / 2.0;
    let sb = -(-2.0 * r_b).exp_m1() / 2.0;
    let sum = r_a + r_b;
    let t = 2.0 * (phi / 2.0).cos().powi(2) * (sa * sb)
        + 0.5 * (-(r_a - r_b).abs()).exp_m1().powi(2) * (-2.0 * r_a.min(r_b)).exp();
    if sum < 300.0 {
        let x = t * sum.exp();
        Ok((x + (x * (x + 2.0)).sqrt()).ln_1p())
    } else {
        let w = (-sum).exp();
        Ok(sum + (w + t + (t * (t + 2.0 * w)).sqrt()).ln())
    }
}

pub fn triangle_geometry(tp: &TrianglePacking) -> Result<TriangleGeometry, HypError> {
    Ok(Kernel::new(tp)?.geometry())
}

/// Angle derivatives in u-coordinates. Off-diagonals use the closed form, each
/// unordered pair evaluated once; diagonals come from the row identity
/// `J_ii = -cosh l_ij J_ij - cosh l_ik J_ik`.
pub fn angle_jacobian(tp: &TrianglePacking) -> Result<AngleJacobian, HypError> {
    let k = Kernel::with_star(tp)?;
    Ok(k.jacobian())
}

/// Geometry and Jacobian from one kernel evaluation.
pub fn geometry_and_jacobian(
    tp: &TrianglePacking,
) -> Result<(TriangleGeometry, AngleJacobian), HypError> {
    let k = Kernel::with_star(tp)?;
    Ok((k.geometry(), k.jacobian()))
}

/// Same off-diagonals with the denominator written through the square root of
/// the discriminant instead of the sine-law area factor.
pub fn angle_jacobian_sqrt_delta(tp: &TrianglePacking) -> Result<[[f64; 3]; 3], HypError> {
    let k = Kernel::with_star(tp)?;
    let root = k.delta_scaled().sqrt();
    let mut j = [[0.0; 3]; 3];
    let mut scaled = [0.0; 3];
    for e in 0..3 {
        let (a, b) = (next(e), prev(e));
        scaled[e] = k.off_scaled_with(a, b, root);
        j[a][b] = k.w[e] * scaled[e];
        j[b][a] = j[a][b];
    }
    for i in 0..3 {
        let (x, y) = (next(i), prev(i));
        j[i][i] = -k.h(y) * scaled[y] - k.h(x) * scaled[x];
    }
    Ok(j)
}

/// The off-diagonal pair `(d theta_a / d u_b, d theta_b / d u_a)` with the area
/// factor read at corner `a` for the first and at corner `b` for the second.
pub fn off_diagonal_pair(tp: &TrianglePacking, a: usize, b: usize) -> Result<(f64, f64), HypError> {
    assert!(a < 3 && b < 3 && a != b, "corners must be distinct and < 3");
    let k = Kernel::with_star(tp)?;
    let w = k.w[third(a, b)];
    let ab = w * k.off_scaled_with(a, b, k.a_scaled_at(a));
    let ba = w * k.off_scaled_with(b, a, k.a_scaled_at(b));
    Ok((ab, ba))
}

/// Diagonal entries from the chain rule through the edge lengths.
pub fn chain_rule_diagonal(tp: &TrianglePacking) -> Result<[f64; 3], HypError> {
    let k = Kernel::with_star(tp)?;
    Ok([0, 1, 2].map(|i| k.chain_diagonal(i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlickensteinResidual {
    /// `J_aa + sum_b cosh l_ab J_ab` with `J_aa` from the chain rule.
    pub residual: [f64; 3],
    /// Residual over the magnitude of the largest term in the row.
    pub relative: [f64; 3],
}

/// Row residuals of the identity `J_ii + cosh l_ij J_ij + cosh l_ik J_ik = 0`
/// where the diagonal is taken from the chain rule, so the check is not
/// satisfied by construction.
pub fn glickenstein_residual(tp: &TrianglePacking) -> Result<GlickensteinResidual, HypError> {
    let k = Kernel::with_star(tp)?;
    let mut residual = [0.0; 3];
    let mut relative = [0.0; 3];
    for i in 0..3 {
        let (x, y) = (next(i), prev(i));
        let diag = k.chain_diagonal(i);
        // edge opposite x joins i and y; edge opposite y joins i and x
        let tx = k.h(x) * k.off_scaled(i, y);
        let ty = k.h(y) * k.off_scaled(i, x);
        residual[i] = diag + tx + ty;
        let scale = diag.abs().max(tx.abs()).max(ty.abs());
        relative[i] = residual[i].abs() / scale;
    }
    Ok(GlickensteinResidual { residual, relative })
}

/// Everything the mesh-level assembly needs from one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceTerms {
    pub geometry: TriangleGeometry,
    pub jacobian: AngleJacobian,
    pub chain_diagonal: [f64; 3],
}

pub fn face_terms(tp: &TrianglePacking) -> Result<FaceTerms, HypError> {
    let k = Kernel::with_star(tp)?;
    Ok(FaceTerms {
        geometry: k.geometry(),
        jacobian: k.jacobian(),
        chain_diagonal: [0, 1, 2].map(|i| k.chain_diagonal(i)),
    })
}

/// Angles only; no Jacobian and no weight condition required.
pub fn triangle_angles(tp: &TrianglePacking) -> Result<[f64; 3], HypError> {
    Ok(Kernel::new(tp)?.angles())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    // reference values from a 50-digit evaluation of the closed forms
    const LEN_1_2_PI3: f64 = 2.7606288199639015825;
    const ARCCOSH_4: f64 = 2.0634370688955605467;
    const EQUILATERAL_ANGLE_R1: f64 = 0.65996640421579937499;
    const MIXED_J: [[f64; 3]; 3] = [
        [-1.0463104267727334599, 0.12476782414245684358, 0.049837125026986833032],
        [0.12476782414245684358, -0.9538238067778271904, 0.022141144230874052102],
        [0.049837125026986833032, 0.022141144230874052102, -0.81109544661219624261],
    ];
    const MIXED_ANGLES: [f64; 3] = [
        0.87308718914285293581,
        0.44037933178631543658,
        0.22224672236924413103,
    ];

    fn mixed() -> TrianglePacking {
        TrianglePacking::new([1.0, 1.5, 2.0], [0.3, 0.7, 1.1])
    }

    #[test]
    fn edge_length_examples() {
        // tangent circles: l = r_a + r_b
        let r = 2f64.acosh();
        assert_relative_eq!(edge_length(r, r, 0.0).unwrap(), 2.0 * r, max_relative = 1e-15);
        assert_relative_eq!(edge_length(r, r, FRAC_PI_2).unwrap(), ARCCOSH_4, max_relative = 1e-15);
        assert_relative_eq!(
            edge_length(1.0, 2.0, PI / 3.0).unwrap(),
            LEN_1_2_PI3,
            max_relative = 1e-15
        );
        let (a, b) = (0.7f64, 1.9f64);
        assert_relative_eq!(
            edge_length(a, b, FRAC_PI_2).unwrap(),
            (a.cosh() * b.cosh()).acosh(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn edge_length_errors_and_extremes() {
        assert!(matches!(
            edge_length(701.0, 1.0, 0.0),
            Err(HypError::RadiusOverflow { index: 0, .. })
        ));
        assert!(matches!(
            edge_length(1.0, 0.0, 0.0),
            Err(HypError::InvalidRadius { index: 1, .. })
        ));
        assert!(edge_length(1.0, 1.0, PI).is_err());
        // large radii: l = ra + rb + ln((1 + cos phi) / 2) + o(1)
        let l = edge_length(600.0, 650.0, 0.0).unwrap();
        assert_relative_eq!(l, 1250.0, max_relative = 1e-15);
        // small radii: l ~ ra + rb at phi = 0
        let l = edge_length(1e-8, 2e-8, 0.0).unwrap();
        assert_relative_eq!(l, 3e-8, max_relative = 1e-12);
    }

    #[test]
    fn kernel_lengths_match_edge_length() {
        let tp = mixed();
        let g = triangle_geometry(&tp).unwrap();
        for e in 0..3 {
            let l = edge_length(tp.radii[next(e)], tp.radii[prev(e)], tp.weights[e]).unwrap();
            assert_eq!(g.lengths[e], l);
        }
    }

    #[test]
    fn equilateral_angles() {
        let g = triangle_geometry(&TrianglePacking::new([1.0; 3], [0.0; 3])).unwrap();
        for a in g.angles {
            assert_relative_eq!(a, EQUILATERAL_ANGLE_R1, max_relative = 1e-14);
            assert!(a < PI / 3.0);
        }
        assert!(g.area > 0.0);
        assert_relative_eq!(g.area, PI - 3.0 * EQUILATERAL_ANGLE_R1, max_relative = 1e-13);
    }

    #[test]
    fn large_radii_have_small_angles() {
        let g = triangle_geometry(&TrianglePacking::new([10.0; 3], [0.0; 3])).unwrap();
        assert!(g.angles.iter().all(|&a| a > 0.0 && a < 1e-3));
        let g = triangle_geometry(&TrianglePacking::new([700.0; 3], [1.0; 3])).unwrap();
        assert!(g.angles.iter().all(|&a| a > 0.0));
        assert!(g.a_scaled.is_finite() && g.a_scaled > 0.0);
    }

    #[test]
    fn mixed_triangle_matches_reference() {
        let tp = mixed();
        let g = triangle_geometry(&tp).unwrap();
        for i in 0..3 {
            assert_relative_eq!(g.angles[i], MIXED_ANGLES[i], max_relative = 1e-13);
        }
        assert_relative_eq!(g.area, PI - g.angles.iter().sum::<f64>(), max_relative = 1e-13);
        let jac = angle_jacobian(&tp).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_relative_eq!(jac.j[a][b], MIXED_J[a][b], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn a_norm_is_corner_independent() {
        let tp = mixed();
        let g = triangle_geometry(&tp).unwrap();
        for i in 0..3 {
            let (j, k) = (next(i), prev(i));
            let direct = g.lengths[k].sinh() * g.lengths[j].sinh() * g.angles[i].sin();
            assert_relative_eq!(direct, g.a_norm, max_relative = 1e-13);
        }
    }

    #[test]
    fn equality_configuration_gives_zero_off_diagonal() {
        // weight 0 on edge 01 (opposite corner 2), right angles elsewhere
        let tp = TrianglePacking::new([0.8, 1.3, 2.1], [FRAC_PI_2, FRAC_PI_2, 0.0]);
        let jac = angle_jacobian(&tp).unwrap();
        assert!(jac.j[0][1].abs() < 1e-16);
        assert!(jac.j[0][2] > 0.0 && jac.j[1][2] > 0.0);
    }

    #[test]
    fn star_violation_is_rejected() {
        let w = 0.75 * PI;
        let tp = TrianglePacking::new([1.0; 3], [0.0, w, w]);
        assert!(matches!(
            angle_jacobian(&tp),
            Err(HypError::StarViolation { corner: 1, .. })
        ));
        assert!(glickenstein_residual(&tp).is_err());
    }

    #[test]
    fn variation_residual_examples() {
        let g = glickenstein_residual(&TrianglePacking::new([1.0; 3], [0.0; 3])).unwrap();
        let j = angle_jacobian(&TrianglePacking::new([1.0; 3], [0.0; 3])).unwrap();
        for a in 0..3 {
            assert!(g.residual[a].abs() <= 1e-10 * (1.0 + j.j[a][a].abs()));
        }
        let extreme = TrianglePacking::new([0.01, 5.0, 0.3], [0.0, FRAC_PI_2, FRAC_PI_2]);
        let g = glickenstein_residual(&extreme).unwrap();
        assert!(g.relative.iter().all(|&r| r <= 1e-9), "{g:?}");
    }

    #[test]
    fn sqrt_delta_denominator_agrees() {
        for tp in [
            mixed(),
            TrianglePacking::new([1e-3, 50.0, 0.2], [0.4, 1.2, 0.9]),
            TrianglePacking::new([300.0, 200.0, 400.0], [2.0, 0.5, 0.5]),
        ] {
            let a = angle_jacobian(&tp).unwrap().j;
            let b = angle_jacobian_sqrt_delta(&tp).unwrap();
            for x in 0..3 {
                for y in 0..3 {
                    assert_relative_eq!(a[x][y], b[x][y], max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn permuting_corners_permutes_everything() {
        let tp = mixed();
        let perm = [2, 0, 1];
        let g = triangle_geometry(&tp).unwrap();
        let gp = triangle_geometry(&tp.permuted(perm)).unwrap();
        let j = angle_jacobian(&tp).unwrap();
        let jp = angle_jacobian(&tp.permuted(perm)).unwrap();
        for t in 0..3 {
            assert_relative_eq!(gp.angles[t], g.angles[perm[t]], max_relative = 1e-14);
            assert_relative_eq!(gp.lengths[t], g.lengths[perm[t]], max_relative = 1e-14);
            for u in 0..3 {
                assert_relative_eq!(jp.j[t][u], j.j[perm[t]][perm[u]], max_relative = 1e-12);
            }
        }
    }
}
