//! Heavy symmetric (Lagrange) top: simulation of the Euler–Poisson
//! equations and three independent stability tests for the sleeping
//! (vertical) rotation `(0, 0, M3, 0, 0, 1)`:
//!
//! * the closed-form threshold `M3² ≥ 4Amgz`,
//! * the spectrum of the linearization ([`linear_stability`]),
//! * isolation of the equilibrium in the joint level set of the conserved
//!   quantities `H, C1, C2, F` ([`level_set`]).

pub mod experiments;
pub mod integrator;
pub mod level_set;
pub mod linear_stability;
pub mod top;

pub use integrator::{drift_report, integrate, step_rk4, DriftReport, IntegrationConfig, Trajectory};
pub use level_set::{certify_isolation, grid_search_oracle, IsolationVerdict, ReducedPoint, WitnessFamily};
pub use linear_stability::{classify_spectral, jacobian, SpectralReport, SpectralVerdict};
pub use top::{conserved, equilibrium, m3_from_omega, rhs, ConservedSet, TopParams, TopState};
