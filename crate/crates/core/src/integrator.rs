//! Fixed-step RK4 integration with conserved-quantity drift tracking.

use std::io::Write;

use thiserror::Error;

use crate::top::{conserved, rhs, ConservedSet, TopParams, TopState};

/// Tolerance on `|gamma| = 1` for a trajectory's initial state.
pub const INITIAL_GAMMA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration config: {0}")]
    InvalidConfig(&'static str),
    #[error("initial gravity direction must be a unit vector, |gamma| = {0}")]
    GammaNotUnit(f64),
    #[error("non-finite state at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },
}

/// RK4 produced a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("RK4 step produced a non-finite state")]
pub struct NonFiniteState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    pub step: f64,
    pub n_steps: usize,
    /// Rescale gamma to unit length after every step.
    pub project_gamma: bool,
    /// Keep every `record_every`-th step (the initial and final states are
    /// always kept).
    pub record_every: usize,
}

impl Default for IntegrationConfig {
    /// h = 1 ms over a 200 s horizon, every step recorded.
    fn default() -> Self {
        Self { step: 1e-3, n_steps: 200_000, project_gamma: false, record_every: 1 }
    }
}

impl IntegrationConfig {
    pub fn new(step: f64, n_steps: usize) -> Self {
        Self { step, n_steps, ..Self::default() }
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn with_projection(mut self, project_gamma: bool) -> Self {
        self.project_gamma = project_gamma;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_steps as f64
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(IntegrationError::InvalidConfig("step must be finite and > 0"));
        }
        if self.n_steps < 1 {
            return Err(IntegrationError::InvalidConfig("n_steps must be >= 1"));
        }
        if self.record_every < 1 {
            return Err(IntegrationError::InvalidConfig("record_every must be >= 1"));
        }
        Ok(())
    }
}

/// Recorded samples of one run. `drift[k]` is `conserved(states[k]) −
/// conserved(states[0])`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TopState>,
    pub drift: Vec<ConservedSet>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest distance from `reference` over all samples.
    pub fn max_deviation(&self, reference: &TopState) -> f64 {
        self.states.iter().map(|s| s.distance(reference)).fold(0.0, f64::max)
    }

    /// Write the trajectory as CSV with columns
    /// `t, M1, M2, M3, g1, g2, g3, dH, dC1, dC2, dF`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_HEADER)?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.drift) {
            let row = [
                *t, s.m.x, s.m.y, s.m.z, s.gamma.x, s.gamma.y, s.gamma.z, d.h, d.c1, d.c2, d.f,
            ];
            w.write_record(row.iter().map(|x| format_float(*x)))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const TRAJECTORY_HEADER: [&str; 11] =
    ["t", "M1", "M2", "M3", "g1", "g2", "g3", "dH", "dC1", "dC2", "dF"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// One classical Runge–Kutta step of size `h`.
pub fn step_rk4(params: &TopParams, state: &TopState, h: f64) -> Result<TopState, NonFiniteState> {
    let y = state.to_vector();
    let f = |v| rhs(params, &TopState::from_vector(&v));
    let k1 = f(y);
    let k2 = f(y + k1 * (0.5 * h));
    let k3 = f(y + k2 * (0.5 * h));
    let k4 = f(y + k3 * h);
    let next = TopState::from_vector(&(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFiniteState)
    }
}

pub fn integrate(
    params: &TopParams,
    initial: &TopState,
    config: &IntegrationConfig,
) -> Result<Trajectory, IntegrationError> {
    config.validate()?;
    let norm = initial.gamma.norm();
    if !((norm - 1.0).abs() <= INITIAL_GAMMA_TOLERANCE) {
        return Err(IntegrationError::GammaNotUnit(norm));
    }

    let q0 = conserved(params, initial);
    let capacity = config.n_steps / config.record_every + 2;
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        drift: Vec::with_capacity(capacity),
    };
    let record = |traj: &mut Trajectory, t: f64, s: TopState| {
        traj.times.push(t);
        traj.states.push(s);
        traj.drift.push(conserved(params, &s).minus(&q0));
    };
    record(&mut traj, 0.0, *initial);

    let mut state = *initial;
    for k in 1..=config.n_steps {
        let t = k as f64 * config.step;
        state = step_rk4(params, &state, config.step)
            .map_err(|_| IntegrationError::BlowUp { step: k, time: t })?;
        if config.project_gamma {
            state.gamma /= state.gamma.norm();
            if !state.is_finite() {
                return Err(IntegrationError::BlowUp { step: k, time: t });
            }
        }
        if k % config.record_every == 0 || k == config.n_steps {
            record(&mut traj, t, state);
        }
    }
    Ok(traj)
}

/// Largest absolute drift of each conserved quantity over a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftReport {
    pub h: f64,
    pub c1: f64,
    pub c2: f64,
    pub f: f64,
}

impl DriftReport {
    pub fn to_array(&self) -> [f64; 4] {
        [self.h, self.c1, self.c2, self.f]
    }

    /// Drift divided by the magnitude of the initial value (or by 1 when that
    /// value is zero).
    pub fn relative_to(&self, initial: &ConservedSet) -> DriftReport {
        let rel = |d: f64, q: f64| if q == 0.0 { d } else { d / q.abs() };
        DriftReport {
            h: rel(self.h, initial.h),
            c1: rel(self.c1, initial.c1),
            c2: rel(self.c2, initial.c2),
            f: rel(self.f, initial.f),
        }
    }
}

pub fn drift_report(traj: &Trajectory) -> DriftReport {
    traj.drift.iter().fold(DriftReport::default(), |acc, d| DriftReport {
        h: acc.h.max(d.h.abs()),
        c1: acc.c1.max(d.c1.abs()),
        c2: acc.c2.max(d.c2.abs()),
        f: acc.f.max(d.f.abs()),
    })
}
