//! Linearization at the sleeping rotation `(0, 0, M3, 0, 0, 1)`.
//!
//! Only the transverse coordinates `(M1, M2, γ1, γ2)` move to first order.
//! Writing `ζ = M1 + iM2` and `η = γ1 + iγ2` collapses that 4×4 block to a
//! complex 2×2 system whose characteristic polynomial is
//!
//! ```text
//! λ² + i(a + M3/C) λ − (a M3/C + mgz/A) = 0,    a = M3 (1/C − 1/A)
//! ```
//!
//! The real spectrum is those two roots plus their conjugates, together with
//! two exact zeros from the `Ṁ3` and `γ̇3` rows. The discriminant equals
//! `(4Amgz − M3²)/A²`, so the roots leave the imaginary axis exactly when
//! `M3² < 4Amgz`.

use std::fmt;
use std::ops::Range;

use nalgebra::{Complex, Matrix6};
use thiserror::Error;

use crate::integrator::Trajectory;
use crate::top::{rhs, TopParams, TopState};

/// Central-difference step used to cross-check the analytic Jacobian.
pub const FD_STEP: f64 = 1e-6;

/// Deviations above this norm are treated as outside the linear regime.
pub const LINEAR_REGIME_LIMIT: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectralVerdict {
    SpectrallyStable,
    SpectrallyUnstable,
}

impl SpectralVerdict {
    pub fn is_stable(self) -> bool {
        self == SpectralVerdict::SpectrallyStable
    }
}

impl fmt::Display for SpectralVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectralVerdict::SpectrallyStable => "STABLE",
            SpectralVerdict::SpectrallyUnstable => "UNSTABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Eigenvalues of the transverse block: two roots of the complex
    /// quadratic followed by their conjugates.
    pub eigenvalues: [Complex<f64>; 4],
    pub verdict: SpectralVerdict,
    /// Largest real part among `eigenvalues` (1/s).
    pub growth_rate: f64,
    /// Critical axial momentum `2 sqrt(Amgz)`.
    pub threshold: f64,
    /// `M3² − 4Amgz`.
    pub margin: f64,
}

impl SpectralReport {
    pub fn is_boundary(&self) -> bool {
        self.margin == 0.0
    }
}

/// Analytic Jacobian of [`rhs`] at `equilibrium(m3)`, in the
/// `(M1, M2, M3, γ1, γ2, γ3)` layout.
pub fn jacobian(params: &TopParams, m3: f64) -> Matrix6<f64> {
    let a = m3 * (1.0 / params.c() - 1.0 / params.a());
    let b = params.mgz();
    let spin = m3 / params.c();
    let inv_a = 1.0 / params.a();
    let mut j = Matrix6::zeros();
    // dM1
    j[(0, 1)] = a;
    j[(0, 4)] = b;
    // dM2
    j[(1, 0)] = -a;
    j[(1, 3)] = -b;
    // dγ1
    j[(3, 4)] = spin;
    j[(3, 1)] = -inv_a;
    // dγ2
    j[(4, 0)] = inv_a;
    j[(4, 3)] = -spin;
    j
}

/// Central finite-difference Jacobian of [`rhs`] at an arbitrary state.
pub fn finite_difference_jacobian(params: &TopParams, state: &TopState, step: f64) -> Matrix6<f64> {
    let x = state.to_vector();
    let mut j = Matrix6::zeros();
    for col in 0..6 {
        let mut plus = x;
        let mut minus = x;
        plus[col] += step;
        minus[col] -= step;
        let diff = (rhs(params, &TopState::from_vector(&plus))
            - rhs(params, &TopState::from_vector(&minus)))
            / (2.0 * step);
        j.set_column(col, &diff);
    }
    j
}

/// Closed-form transverse eigenvalues `[λ+, λ−, conj λ+, conj λ−]`.
pub fn eigenvalues(params: &TopParams, m3: f64) -> [Complex<f64>; 4] {
    let a = m3 * (1.0 / params.c() - 1.0 / params.a());
    let spin = m3 / params.c();
    let sum = a + spin;
    // (a - spin)² = M3²/A², so the discriminant is (4Amgz − M3²)/A².
    let disc = -params.threshold_margin(m3) / (params.a() * params.a());
    let (plus, minus) = if disc > 0.0 {
        let s = disc.sqrt();
        (Complex::new(0.5 * s, -0.5 * sum), Complex::new(-0.5 * s, -0.5 * sum))
    } else {
        let s = (-disc).sqrt();
        (Complex::new(0.0, 0.5 * (-sum + s)), Complex::new(0.0, 0.5 * (-sum - s)))
    };
    [plus, minus, plus.conj(), minus.conj()]
}

/// Coefficients `(p, q)` of the monic quadratic `λ² + pλ + q` whose roots are
/// the first two entries of [`eigenvalues`].
pub fn characteristic_quadratic(params: &TopParams, m3: f64) -> (Complex<f64>, Complex<f64>) {
    let a = m3 * (1.0 / params.c() - 1.0 / params.a());
    let spin = m3 / params.c();
    let p = Complex::new(0.0, a + spin);
    let q = Complex::new(-(a * spin + params.mgz() / params.a()), 0.0);
    (p, q)
}

/// `|det(J − λI)|` via complex LU, divided by `max(1, ‖J − λI‖_F)⁶`.
pub fn characteristic_residual(j: &Matrix6<f64>, lambda: Complex<f64>) -> f64 {
    let shifted: Matrix6<Complex<f64>> =
        j.map(|x| Complex::new(x, 0.0)) - Matrix6::<Complex<f64>>::identity() * lambda;
    let norm = shifted.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    shifted.lu().determinant().norm() / norm.max(1.0).powi(6)
}

/// Sign test on `M3² − 4Amgz`; the boundary counts as stable.
pub fn closed_form_verdict(params: &TopParams, m3: f64) -> SpectralVerdict {
    if m3 * m3 >= params.critical_m3_squared() {
        SpectralVerdict::SpectrallyStable
    } else {
        SpectralVerdict::SpectrallyUnstable
    }
}

/// Spectral classification from the closed-form eigenvalues.
pub fn classify_spectral(params: &TopParams, m3: f64) -> SpectralReport {
    let eigenvalues = eigenvalues(params, m3);
    let growth_rate = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let verdict = if growth_rate > 0.0 {
        SpectralVerdict::SpectrallyUnstable
    } else {
        SpectralVerdict::SpectrallyStable
    };
    debug_assert_eq!(verdict, closed_form_verdict(params, m3));
    SpectralReport {
        eigenvalues,
        verdict,
        growth_rate,
        threshold: params.threshold(),
        margin: params.threshold_margin(m3),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrowthFitError {
    #[error("fit window {start}..{end} holds fewer than two samples")]
    TooFewSamples { start: usize, end: usize },
    #[error("fit window leaves the linear regime: deviation {deviation:e} exceeds {limit:e}")]
    Nonlinear { deviation: f64, limit: f64 },
    #[error("deviation vanishes inside the fit window; log-linear fit undefined")]
    ZeroDeviation,
}

/// Least-squares slope of `ln|state − equilibrium|` against `t` over the
/// sample indices in `window`.
pub fn measured_growth_rate(
    traj: &Trajectory,
    equilibrium: &TopState,
    window: Range<usize>,
) -> Result<f64, GrowthFitError> {
    let end = window.end.min(traj.len());
    let start = window.start;
    if end <= start || end - start < 2 {
        return Err(GrowthFitError::TooFewSamples { start, end });
    }
    let mut ts = Vec::with_capacity(end - start);
    let mut logs = Vec::with_capacity(end - start);
    for k in start..end {
        let dev = traj.states[k].distance(equilibrium);
        if dev > LINEAR_REGIME_LIMIT {
            return Err(GrowthFitError::Nonlinear { deviation: dev, limit: LINEAR_REGIME_LIMIT });
        }
        if dev == 0.0 {
            return Err(GrowthFitError::ZeroDeviation);
        }
        ts.push(traj.times[k]);
        logs.push(dev.ln());
    }
    Ok(least_squares_slope(&ts, &logs))
}

/// Samples where an unstable run is dominated by its growing mode but still
/// linear: from the first sample whose deviation exceeds `lift` times the
/// initial deviation, up to (not including) the first one above
/// [`LINEAR_REGIME_LIMIT`].
pub fn growth_fit_window(traj: &Trajectory, equilibrium: &TopState, lift: f64) -> Option<Range<usize>> {
    let dev0 = traj.states.first()?.distance(equilibrium);
    let devs: Vec<f64> = traj.states.iter().map(|s| s.distance(equilibrium)).collect();
    let start = devs.iter().position(|&d| d > lift * dev0)?;
    let end = devs.iter().position(|&d| d > LINEAR_REGIME_LIMIT).unwrap_or(devs.len());
    (end > start + 1).then_some(start..end)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = xs.iter().zip(ys).fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    sxy / sxx
}
