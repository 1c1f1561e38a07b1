//! Continuous-aperture ("ubiquitous") array modelling: circular and
//! spherical geometries, phase-mode channel estimation and precoding,
//! plus the simulation harness behind the `ua-sim` binary.

pub mod channel;
pub mod estimation;
pub mod geometry;
pub mod precoding;
pub mod simkit;
pub mod specfun;

pub use channel::{ArrayGeometry, ChannelModel, Scenario};
pub use estimation::{GridSpec, ModeSpectrum, ObservationProfile};
pub use geometry::Point3;
pub use precoding::Scheme;
pub use simkit::{ArraySelect, SimParams, SweepResult, SweepSeries};
