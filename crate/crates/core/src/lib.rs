//! Bohmian and standard quantum statistics for an entangled two double-slit
//! experiment.
//!
//! A source between two double slits emits particle pairs with zero total
//! momentum. Each pair leaves through one slit on either side and the
//! particles are recorded simultaneously on screens `S₁` and `S₂`. The crate
//! evaluates the entangled wavefunction in closed form, integrates Bohmian
//! trajectories under the guidance law, samples initial positions from
//! `|psi|^2` and reduces the landings to screen statistics that can be set
//! against the standard quadrature predictions.
//!
//! ```
//! use pilotwave::guidance::com_path;
//! use pilotwave::params::ExperimentParams;
//!
//! let p = ExperimentParams::default();
//! // A pair emitted with its centre of mass on the axis stays there.
//! assert_eq!(com_path(&p, 0.0, p.arrival_time()), 0.0);
//! ```

pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod guidance;
pub mod integrator;
pub mod params;
pub mod potential;
pub mod quadrature;
pub mod sampler;
pub mod state;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};

// Book chapters run as doctests so their snippets stay in sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/wavefunction.md")]
    mod wavefunction {}
    #[doc = include_str!("../../../book/src/guidance.md")]
    mod guidance {}
    #[doc = include_str!("../../../book/src/centre_of_mass.md")]
    mod centre_of_mass {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/selective_detection.md")]
    mod selective_detection {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
