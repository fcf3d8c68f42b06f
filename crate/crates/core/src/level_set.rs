//! Isolation of the sleeping rotation inside the joint level set of its
//! conserved quantities.
//!
//! An equilibrium that is the only nearby solution of
//!
//! ```text
//! H(x) = H(x_e),  C1(x) = C1(x_e),  C2(x) = C2(x_e),  F(x) = F(x_e)
//! ```
//!
//! admits a Lyapunov function built from those quantities. Fixing `M3` and
//! writing `M1 + iM2 = u e^{iφ}`, `γ1 + iγ2 = v e^{iθ}` reduces the system to
//!
//! ```text
//! u² = 2Amgz (1 − γ3)
//! v² = 1 − γ3²
//! u v cos(θ − φ) = M3 (1 − γ3)
//! ```
//!
//! Dividing the last equation by `1 − γ3` gives
//! `|M3| = sqrt(2Amgz) sqrt(1 + γ3) |cos(θ − φ)|`, which has nearby
//! solutions only when `M3² < 4Amgz`. In that case [`WitnessFamily`] builds
//! them explicitly.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::top::{conserved, equilibrium, TopParams, TopState};

/// Distance kept between the witness domain and the edge where `arccos`
/// stops being defined.
pub const WITNESS_DOMAIN_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LevelSetError {
    #[error("axial momentum must be finite, got {0}")]
    NonFiniteMomentum(f64),
    #[error("gamma3 = {gamma3} is outside the witness domain [{min}, 1)")]
    OutsideWitnessDomain { gamma3: f64, min: f64 },
    #[error("no witness at distance {0} from the equilibrium")]
    DistanceOutOfRange(f64),
    #[error("search radius must lie in (0, 1), got {0}")]
    InvalidRadius(f64),
    #[error("grid must have at least one point per axis")]
    EmptyGrid,
}

/// Polar form of the transverse state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedPoint {
    pub u: f64,
    pub phi: f64,
    pub v: f64,
    pub theta: f64,
    pub gamma3: f64,
}

impl ReducedPoint {
    pub fn from_state(state: &TopState) -> Self {
        Self {
            u: state.m.x.hypot(state.m.y),
            phi: state.m.y.atan2(state.m.x),
            v: state.gamma.x.hypot(state.gamma.y),
            theta: state.gamma.y.atan2(state.gamma.x),
            gamma3: state.gamma.z,
        }
    }

    /// Rebuild the full state with axial momentum `m3`.
    pub fn to_state(&self, m3: f64) -> TopState {
        let (sp, cp) = self.phi.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        TopState::new(
            Vector3::new(self.u * cp, self.u * sp, m3),
            Vector3::new(self.v * ct, self.v * st, self.gamma3),
        )
    }
}

/// Residuals of the four level equations at `state`, in the order energy,
/// gamma norm, `M · gamma`, `M3`.
pub fn level_residuals(params: &TopParams, m3_eq: f64, state: &TopState) -> [f64; 4] {
    let q = conserved(params, state);
    let h_eq = m3_eq * m3_eq / (2.0 * params.c()) + params.mgz();
    [q.h - h_eq, q.c1 - 1.0, q.c2 - m3_eq, q.f - m3_eq]
}

/// Residuals of the three reduced equations.
pub fn reduced_residuals(params: &TopParams, m3_eq: f64, p: &ReducedPoint) -> [f64; 3] {
    let drop = 1.0 - p.gamma3;
    [
        p.u * p.u - 2.0 * params.a() * params.mgz() * drop,
        p.v * p.v - (1.0 - p.gamma3 * p.gamma3),
        p.u * p.v * (p.theta - p.phi).cos() - m3_eq * drop,
    ]
}

/// Nontrivial level-set solutions approaching the equilibrium, parametrized
/// by `gamma3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessFamily {
    params: TopParams,
    m3: f64,
    gamma3_min: f64,
}

impl WitnessFamily {
    /// Smallest admissible `gamma3`; the domain is `[gamma3_min, 1)`.
    pub fn gamma3_min(&self) -> f64 {
        self.gamma3_min
    }

    pub fn m3(&self) -> f64 {
        self.m3
    }

    pub fn contains(&self, gamma3: f64) -> bool {
        gamma3 >= self.gamma3_min && gamma3 < 1.0
    }

    /// Witness in reduced coordinates, with the phase gauge `φ = 0`.
    pub fn reduced_at(&self, gamma3: f64) -> Result<ReducedPoint, LevelSetError> {
        if !self.contains(gamma3) {
            return Err(LevelSetError::OutsideWitnessDomain { gamma3, min: self.gamma3_min });
        }
        let two_amgz = 2.0 * self.params.a() * self.params.mgz();
        let cos_delta = (self.m3 / (two_amgz.sqrt() * (1.0 + gamma3).sqrt())).clamp(-1.0, 1.0);
        Ok(ReducedPoint {
            u: (two_amgz * (1.0 - gamma3)).sqrt(),
            phi: 0.0,
            v: (1.0 - gamma3 * gamma3).sqrt(),
            theta: cos_delta.acos(),
            gamma3,
        })
    }

    pub fn at(&self, gamma3: f64) -> Result<TopState, LevelSetError> {
        Ok(self.reduced_at(gamma3)?.to_state(self.m3))
    }

    /// Exact distance from the equilibrium of the witness at `gamma3`:
    /// `sqrt(2 (Amgz + 1) (1 − gamma3))`.
    pub fn distance_at(&self, gamma3: f64) -> f64 {
        (2.0 * (self.params.a() * self.params.mgz() + 1.0) * (1.0 - gamma3)).sqrt()
    }

    /// Witness at a prescribed distance from the equilibrium.
    pub fn at_distance(&self, distance: f64) -> Result<TopState, LevelSetError> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(LevelSetError::DistanceOutOfRange(distance));
        }
        let drop = distance * distance / (2.0 * (self.params.a() * self.params.mgz() + 1.0));
        let gamma3 = 1.0 - drop;
        if !self.contains(gamma3) {
            return Err(LevelSetError::DistanceOutOfRange(distance));
        }
        self.at(gamma3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IsolationVerdict {
    Isolated,
    NotIsolated(WitnessFamily),
}

impl IsolationVerdict {
    pub fn is_isolated(&self) -> bool {
        matches!(self, IsolationVerdict::Isolated)
    }

    pub fn witnesses(&self) -> Option<&WitnessFamily> {
        match self {
            IsolationVerdict::Isolated => None,
            IsolationVerdict::NotIsolated(family) => Some(family),
        }
    }
}

/// Decide whether `equilibrium(m3_eq)` is isolated in its level set.
pub fn certify_isolation(params: &TopParams, m3_eq: f64) -> Result<IsolationVerdict, LevelSetError> {
    if !m3_eq.is_finite() {
        return Err(LevelSetError::NonFiniteMomentum(m3_eq));
    }
    if m3_eq * m3_eq >= params.critical_m3_squared() {
        return Ok(IsolationVerdict::Isolated);
    }
    // cos Δ = M3 / (sqrt(2Amgz) sqrt(1 + γ3)) must not exceed 1 in magnitude.
    let edge = m3_eq * m3_eq / (2.0 * params.a() * params.mgz()) - 1.0;
    let margin = WITNESS_DOMAIN_MARGIN.min(0.5 * (1.0 - edge));
    Ok(IsolationVerdict::NotIsolated(WitnessFamily {
        params: *params,
        m3: m3_eq,
        gamma3_min: (edge + margin).max(0.0),
    }))
}

/// Smallest normalized third-equation residual found by the grid scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    pub residual: f64,
    pub gamma3: f64,
    /// Phase difference `θ − φ` at the minimum.
    pub delta: f64,
}

/// Brute-force scan of the reduced system near the equilibrium.
///
/// For each `gamma3` in `[1 − radius, 1)` and each phase difference in
/// `[0, π]`, `u` and `v` are taken from the first two reduced equations and
/// the third is evaluated as `|u v cos Δ − M3 (1 − γ3)| / (1 − γ3)`. The
/// point `gamma3 = 1` (the equilibrium itself) is never sampled. Ties go to
/// the lowest `gamma3`, then the lowest `Δ`.
pub fn grid_search_oracle(
    params: &TopParams,
    m3_eq: f64,
    radius: f64,
    n_gamma3: usize,
    n_angle: usize,
) -> Result<GridMinimum, LevelSetError> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(LevelSetError::InvalidRadius(radius));
    }
    if n_gamma3 == 0 || n_angle == 0 {
        return Err(LevelSetError::EmptyGrid);
    }
    let two_amgz = 2.0 * params.a() * params.mgz();
    let angle_step = if n_angle > 1 { PI / (n_angle - 1) as f64 } else { 0.0 };

    let best = (0..n_gamma3)
        .into_par_iter()
        .map(|i| {
            let gamma3 = 1.0 - radius + radius * i as f64 / n_gamma3 as f64;
            let drop = 1.0 - gamma3;
            let u = (two_amgz * drop).sqrt();
            let v = (1.0 - gamma3 * gamma3).max(0.0).sqrt();
            (0..n_angle)
                .map(|j| {
                    let delta = j as f64 * angle_step;
                    let r = (u * v * delta.cos() - m3_eq * drop).abs() / drop;
                    (r, i, j, gamma3, delta)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)))
                .expect("n_angle > 0")
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)))
        .expect("n_gamma3 > 0");

    Ok(GridMinimum { residual: best.0, gamma3: best.3, delta: best.4 })
}

/// Distance from the equilibrium with the same axial momentum.
pub fn distance_to_equilibrium(m3_eq: f64, state: &TopState) -> f64 {
    state.distance(&equilibrium(m3_eq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs<const N: usize>(r: [f64; N]) -> f64 {
        r.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    #[test]
    fn equilibrium_has_zero_residuals() {
        let p = TopParams::new(1.2, 0.9, 3.0, 9.81, 0.2).unwrap();
        assert_eq!(level_residuals(&p, 2.5, &equilibrium(2.5)), [0.0; 4]);
        let eq = ReducedPoint { u: 0.0, phi: 0.7, v: 0.0, theta: -2.0, gamma3: 1.0 };
        assert_eq!(reduced_residuals(&p, 2.5, &eq), [0.0; 3]);
    }

    #[test]
    fn residuals_are_conserved_differences() {
        let p = TopParams::new(1.2, 0.9, 3.0, 9.81, 0.2).unwrap();
        let s = TopState::new(Vector3::new(0.3, -1.0, 2.0), Vector3::new(0.1, 0.2, 0.9));
        let diff = conserved(&p, &s).minus(&conserved(&p, &equilibrium(1.5)));
        let r = level_residuals(&p, 1.5, &s);
        for (x, y) in r.iter().zip(diff.to_array()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn hand_built_solution_on_unit_top() {
        let p = TopParams::unit();
        let h = 2f64.sqrt() / 2.0;
        let s = TopState::new(Vector3::new(2f64.sqrt(), 0.0, 1.0), Vector3::new(h, h, 0.0));
        assert!(max_abs(level_residuals(&p, 1.0, &s)) <= 1e-15);

        let r = ReducedPoint { u: 2f64.sqrt(), phi: 0.0, v: 1.0, theta: PI / 4.0, gamma3: 0.0 };
        assert!(max_abs(reduced_residuals(&p, 1.0, &r)) <= 1e-15);
        assert!(max_abs(level_residuals(&p, 1.0, &r.to_state(1.0))) <= 1e-15);
    }

    #[test]
    fn reduced_round_trip() {
        let r = ReducedPoint { u: 0.4, phi: -2.1, v: 0.3, theta: 1.2, gamma3: 0.95 };
        let back = ReducedPoint::from_state(&r.to_state(3.0));
        assert!((back.u - r.u).abs() < 1e-15);
        assert!((back.v - r.v).abs() < 1e-15);
        assert!((back.phi - r.phi).abs() < 1e-15);
        assert!((back.theta - r.theta).abs() < 1e-15);
        assert_eq!(back.gamma3, r.gamma3);
    }

    #[test]
    fn certificate_on_unit_top() {
        let p = TopParams::unit();
        assert!(certify_isolation(&p, 3.0).unwrap().is_isolated());
        assert!(certify_isolation(&p, 2.0).unwrap().is_isolated());
        assert!(certify_isolation(&p, -2.0).unwrap().is_isolated());
        let slow = certify_isolation(&p, 1.0).unwrap();
        let family = slow.witnesses().unwrap();
        let w = family.at(0.99).unwrap();
        assert!(max_abs(level_residuals(&p, 1.0, &w)) <= 1e-12);
        let d = distance_to_equilibrium(1.0, &w);
        assert!(d <= 0.21 && d > 0.0);
        assert!((d - family.distance_at(0.99)).abs() < 1e-14);
    }

    #[test]
    fn certificate_rejects_non_finite() {
        let p = TopParams::unit();
        assert!(certify_isolation(&p, f64::NAN).is_err());
        assert!(certify_isolation(&p, f64::INFINITY).is_err());
    }

    #[test]
    fn witness_at_gamma3_zero() {
        let p = TopParams::unit();
        let family = *certify_isolation(&p, 1.0).unwrap().witnesses().unwrap();
        assert_eq!(family.gamma3_min(), 0.0);
        let w = family.at(0.0).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((w.m - Vector3::new(2f64.sqrt(), 0.0, 1.0)).amax() < 1e-15);
        assert!((w.gamma - Vector3::new(h, h, 0.0)).amax() < 1e-15);
        assert!(family.at(-0.1).is_err());
        assert!(family.at(1.0).is_err());
    }

    #[test]
    fn witness_domain_narrows_near_threshold() {
        let p = TopParams::unit();
        // M3² / (2Amgz) − 1 = 0.62 for M3 = 1.8.
        let family = *certify_isolation(&p, 1.8).unwrap().witnesses().unwrap();
        assert!((family.gamma3_min() - (0.62 + WITNESS_DOMAIN_MARGIN)).abs() < 1e-12);
        assert!(family.at(0.6).is_err());
        let w = family.at(family.gamma3_min()).unwrap();
        assert!(max_abs(level_residuals(&p, 1.8, &w)) <= 1e-12);

        // Just below threshold the domain is tiny but not empty.
        let m3 = 2.0 * (1.0 - 1e-13);
        let family = *certify_isolation(&p, m3).unwrap().witnesses().unwrap();
        assert!(family.gamma3_min() < 1.0);
        let mid = 0.5 * (family.gamma3_min() + 1.0);
        assert!(family.at(mid).is_ok());
    }

    #[test]
    fn negative_spin_witnesses() {
        let p = TopParams::new(0.8, 0.5, 1.0, 2.0, 0.6).unwrap();
        let family = *certify_isolation(&p, -1.1).unwrap().witnesses().unwrap();
        for g3 in [0.5, 0.9, 0.999] {
            let w = family.at(g3).unwrap();
            assert!(max_abs(level_residuals(&p, -1.1, &w)) <= 1e-12);
        }
    }

    #[test]
    fn witnesses_at_prescribed_distances() {
        let p = TopParams::unit();
        let family = *certify_isolation(&p, 1.0).unwrap().witnesses().unwrap();
        for d in [1e-1, 1e-2, 1e-3] {
            let w = family.at_distance(d).unwrap();
            assert!((distance_to_equilibrium(1.0, &w) - d).abs() <= 1e-9 * d.max(1e-3));
        }
        assert!(family.at_distance(0.0).is_err());
        assert!(family.at_distance(10.0).is_err());
    }

    #[test]
    fn grid_oracle_separates_stable_case() {
        let p = TopParams::unit();
        let best = grid_search_oracle(&p, 3.0, 0.5, 100, 100).unwrap();
        assert!(best.residual >= 1.0);
    }

    #[test]
    fn grid_oracle_finds_near_roots() {
        let p = TopParams::unit();
        let best = grid_search_oracle(&p, 1.0, 0.5, 400, 400).unwrap();
        assert!(best.residual <= 1e-2);
        assert!(best.gamma3 < 1.0 && best.gamma3 >= 0.5);
    }

    #[test]
    fn grid_minimizer_tends_to_sixty_degrees() {
        let p = TopParams::unit();
        let best = grid_search_oracle(&p, 1.0, 1e-3, 50, 3001).unwrap();
        assert!((best.delta - PI / 3.0).abs() < 1e-2, "delta = {}", best.delta);
    }

    #[test]
    fn grid_oracle_input_checks() {
        let p = TopParams::unit();
        assert_eq!(grid_search_oracle(&p, 1.0, 0.0, 4, 4), Err(LevelSetError::InvalidRadius(0.0)));
        assert_eq!(grid_search_oracle(&p, 1.0, 1.0, 4, 4), Err(LevelSetError::InvalidRadius(1.0)));
        assert_eq!(grid_search_oracle(&p, 1.0, 0.5, 0, 4), Err(LevelSetError::EmptyGrid));
    }

    #[test]
    fn zero_spin_grid_minimum_is_a_quarter_turn() {
        // M3 = 0 and Δ = π/2 give a residual at rounding level on every γ3 row.
        let p = TopParams::unit();
        let best = grid_search_oracle(&p, 0.0, 0.5, 10, 3).unwrap();
        assert_eq!(best.gamma3, 0.5);
        assert!((best.delta - PI / 2.0).abs() < 1e-15);
    }
}
