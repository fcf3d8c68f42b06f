//! Physical model of the heavy symmetric (Lagrange) top.
//!
//! The state lives in the body frame: angular momentum `M` and the unit
//! vector `gamma` pointing along gravity. With the inertia tensor
//! `diag(A, A, C)` and the center of gravity at `(0, 0, z)`, the motion is
//!
//! ```text
//! dM/dt     = M × I⁻¹M + m g (gamma × r_G)
//! dgamma/dt = gamma × I⁻¹M
//! ```
//!
//! All quantities are SI.

use nalgebra::{Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {name} must be finite and strictly positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
}

/// Constants of a symmetric top.
///
/// `a` is the moment of inertia about the two equal axes, `c` the moment
/// about the symmetry axis, `z` the distance from the fixed point to the
/// center of gravity along the symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopParams {
    a: f64,
    c: f64,
    m: f64,
    g: f64,
    z: f64,
}

impl TopParams {
    pub fn new(a: f64, c: f64, m: f64, g: f64, z: f64) -> Result<Self, ParamError> {
        for (name, value) in [("A", a), ("C", c), ("m", m), ("g", g), ("z", z)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        Ok(Self { a, c, m, g, z })
    }

    /// The reference top used throughout the docs: every constant equal to one,
    /// which puts the stability threshold at exactly `M3 = 2`.
    pub fn unit() -> Self {
        Self { a: 1.0, c: 1.0, m: 1.0, g: 1.0, z: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Gravitational torque scale `m g z`.
    pub fn mgz(&self) -> f64 {
        self.m * self.g * self.z
    }

    /// `4 A m g z`, the squared critical axial momentum.
    pub fn critical_m3_squared(&self) -> f64 {
        4.0 * self.a * self.mgz()
    }

    /// Critical axial momentum `2 sqrt(A m g z)`.
    pub fn threshold(&self) -> f64 {
        2.0 * (self.a * self.mgz()).sqrt()
    }

    /// `M3² − 4Amgz`; non-negative exactly when the sleeping rotation is stable.
    pub fn threshold_margin(&self, m3: f64) -> f64 {
        m3 * m3 - self.critical_m3_squared()
    }

    /// True when `C > 2A`, which no physical rigid body satisfies. The model
    /// still integrates, so this is only worth a warning.
    pub fn violates_triangle_inequality(&self) -> bool {
        self.c > 2.0 * self.a
    }

    /// Angular velocity `I⁻¹M`.
    pub fn angular_velocity(&self, m: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(m.x / self.a, m.y / self.a, m.z / self.c)
    }

    /// Center of gravity `r_G = (0, 0, z)`.
    pub fn center_of_gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.z)
    }
}

/// Body-frame state: angular momentum and gravity direction.
///
/// `gamma` is not renormalized by the type; its norm is one of the
/// monitored conserved quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopState {
    pub m: Vector3<f64>,
    pub gamma: Vector3<f64>,
}

impl TopState {
    pub fn new(m: Vector3<f64>, gamma: Vector3<f64>) -> Self {
        Self { m, gamma }
    }

    /// Layout `(M1, M2, M3, γ1, γ2, γ3)`.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.m.x, self.m.y, self.m.z, self.gamma.x, self.gamma.y, self.gamma.z)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            m: Vector3::new(v[0], v[1], v[2]),
            gamma: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(self.gamma.iter()).all(|x| x.is_finite())
    }

    /// Euclidean distance in the 6-dimensional state space.
    pub fn distance(&self, other: &TopState) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// Rotate the transverse components of both vectors by `angle` about the
    /// body symmetry axis.
    pub fn rotated_about_axis(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let rot = |v: &Vector3<f64>| Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        Self { m: rot(&self.m), gamma: rot(&self.gamma) }
    }
}

/// The four first integrals `(H, C1, C2, F)` evaluated at a state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservedSet {
    /// Energy.
    pub h: f64,
    /// `|gamma|²`.
    pub c1: f64,
    /// `M · gamma`.
    pub c2: f64,
    /// `M3`.
    pub f: f64,
}

impl ConservedSet {
    pub fn to_array(&self) -> [f64; 4] {
        [self.h, self.c1, self.c2, self.f]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { h: v[0], c1: v[1], c2: v[2], f: v[3] }
    }

    /// Componentwise `self - other`.
    pub fn minus(&self, other: &ConservedSet) -> ConservedSet {
        ConservedSet {
            h: self.h - other.h,
            c1: self.c1 - other.c1,
            c2: self.c2 - other.c2,
            f: self.f - other.f,
        }
    }
}

/// Euler–Poisson vector field, returned in the `(Ṁ, γ̇)` layout of
/// [`TopState::to_vector`].
pub fn rhs(params: &TopParams, state: &TopState) -> Vector6<f64> {
    let omega = params.angular_velocity(&state.m);
    let m_dot =
        state.m.cross(&omega) + params.m * params.g * state.gamma.cross(&params.center_of_gravity());
    let gamma_dot = state.gamma.cross(&omega);
    Vector6::new(m_dot.x, m_dot.y, m_dot.z, gamma_dot.x, gamma_dot.y, gamma_dot.z)
}

pub fn conserved(params: &TopParams, state: &TopState) -> ConservedSet {
    let m = &state.m;
    let gamma = &state.gamma;
    let kinetic = 0.5 * (m.x * m.x / params.a + m.y * m.y / params.a + m.z * m.z / params.c);
    ConservedSet {
        h: kinetic + params.mgz() * gamma.z,
        c1: gamma.norm_squared(),
        c2: m.dot(gamma),
        f: m.z,
    }
}

/// The vertical uniform rotation `(0, 0, M3, 0, 0, 1)`.
pub fn equilibrium(m3: f64) -> TopState {
    TopState {
        m: Vector3::new(0.0, 0.0, m3),
        gamma: Vector3::new(0.0, 0.0, 1.0),
    }
}

/// Axial angular momentum of a vertical rotation with spin `omega`.
///
/// Since `M = I ω`, the threshold `C²ω² ≥ 4Amgz` in the angular-velocity
/// chart is the same inequality as `M3² ≥ 4Amgz`.
pub fn m3_from_omega(params: &TopParams, omega: f64) -> f64 {
    params.c * omega
}
