//! Simulation and certification of single-photon nonlocality in triangle and
//! ring optical networks.
//!
//! The crate is organized bottom-up:
//!
//! * [`fock`]: truncated Fock spaces, beamsplitters, channels, Born rule;
//! * [`optics`]: sources, detectors, loss, party POVMs, heralding figures;
//! * [`distribution`]: joint outcome distributions of the triangle and the
//!   N-party ring, closed forms and coarse-graining;
//! * [`certifier`]: linear feasibility problems over classical source/response
//!   models and verified feasibility/infeasibility certificates;
//! * [`fitter`]: Monte Carlo training of neural ring-local models against a
//!   target distribution.

pub mod certifier;
pub mod distribution;
pub mod error;
pub mod fitter;
pub mod fock;
pub mod optics;

pub use certifier::{BoundaryReport, CertificateResult, FeasibilityProblem};
pub use distribution::OutcomeDistribution;
pub use error::{Error, Result};
pub use fitter::{FitResult, ResponseNetwork, TrainingConfig};
pub use fock::{DensityOperator, LinearOperator, ModeSystem, PureState};
pub use optics::{ChannelFidelity, HeraldingSpec, NoiseParams, PovmVariant};
