//! Physical constants and geometry of the two double-slit set-up.
//!
//! The source sits at the origin. Slits `A`/`B` are centred at `(d, ±Y)` on the
//! right, `A'`/`B'` at `(-d, ±Y)` on the left, and the two screens are the
//! lines `x = ±D`.

use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Exchange symmetry of the two-particle state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

impl Statistics {
    /// `+1` for bosons, `-1` for fermions.
    pub fn sign(self) -> f64 {
        match self {
            Statistics::Bosonic => 1.0,
            Statistics::Fermionic => -1.0,
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistics::Bosonic => "bosonic",
            Statistics::Fermionic => "fermionic",
        })
    }
}

impl FromStr for Statistics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bosonic" => Ok(Statistics::Bosonic),
            "fermionic" => Ok(Statistics::Fermionic),
            other => Err(format!("expected `bosonic` or `fermionic`, got `{other}`")),
        }
    }
}

/// All constants of one experiment. Units are whatever the caller picks; the
/// defaults use `hbar = m = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentParams {
    pub hbar: f64,
    pub mass: f64,
    /// Slit half-width.
    pub sigma0: f64,
    /// Distance of each slit centre from the x-axis.
    pub slit_y: f64,
    /// Distance of the slit planes from the source.
    pub slit_x: f64,
    pub kx: f64,
    pub ky: f64,
    pub amp: f64,
    pub statistics: Statistics,
    /// Distance of the screens from the source.
    pub screen_dist: f64,
}

impl Default for ExperimentParams {
    /// Packets spread to twenty times their initial width before reaching the
    /// screens, which is far enough for several two-particle fringes to form.
    fn default() -> Self {
        ExperimentParams {
            hbar: 1.0,
            mass: 1.0,
            sigma0: 1.0,
            slit_y: 8.0,
            slit_x: 20.0,
            kx: 10.0,
            ky: 0.0,
            amp: 1.0,
            statistics: Statistics::Bosonic,
            screen_dist: 420.0,
        }
    }
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("params.hbar", self.hbar),
            ("params.mass", self.mass),
            ("params.sigma0", self.sigma0),
            ("params.slit_y", self.slit_y),
            ("params.slit_x", self.slit_x),
            ("params.kx", self.kx),
            ("params.ky", self.ky),
            ("params.amp", self.amp),
            ("params.screen_dist", self.screen_dist),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("{v} is not finite")));
            }
        }
        let positive = [
            ("params.hbar", self.hbar),
            ("params.mass", self.mass),
            ("params.sigma0", self.sigma0),
            ("params.slit_y", self.slit_y),
            ("params.kx", self.kx),
            ("params.amp", self.amp),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if self.slit_x < 0.0 {
            return Err(Error::invalid("params.slit_x", "must be >= 0"));
        }
        if self.ky < 0.0 {
            return Err(Error::invalid("params.ky", "must be >= 0"));
        }
        if self.screen_dist <= self.slit_x {
            return Err(Error::invalid(
                "params.screen_dist",
                format!("must exceed slit_x = {}", self.slit_x),
            ));
        }
        Ok(())
    }

    /// Group velocity along x.
    pub fn ux(&self) -> f64 {
        self.hbar * self.kx / self.mass
    }

    /// Group velocity along y.
    pub fn uy(&self) -> f64 {
        self.hbar * self.ky / self.mass
    }

    /// Total energy of the incident pair.
    pub fn energy(&self) -> f64 {
        self.hbar * self.hbar * (self.kx * self.kx + self.ky * self.ky) / self.mass
    }

    /// Kinetic energy of one particle's x-motion.
    pub fn energy_x(&self) -> f64 {
        0.5 * self.mass * self.ux() * self.ux()
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.kx
    }

    /// Spreading rate `hbar / (2 m sigma0^2)`; `spread_rate() * t` is the
    /// dimensionless time that controls packet growth.
    pub fn spread_rate(&self) -> f64 {
        self.hbar / (2.0 * self.mass * self.sigma0 * self.sigma0)
    }

    /// Common time at which both particles reach their screens.
    pub fn arrival_time(&self) -> f64 {
        (self.screen_dist - self.slit_x) / self.ux()
    }

    /// One-particle double-slit fringe spacing `pi hbar t / (Y m)`.
    pub fn one_particle_fringe_spacing(&self, t: f64) -> f64 {
        PI * self.hbar * t / (self.slit_y * self.mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let p = ExperimentParams {
            ky: 2.0,
            ..Default::default()
        };
        assert_eq!(p.ux(), 10.0);
        assert_eq!(p.uy(), 2.0);
        assert_eq!(p.energy(), 104.0);
        assert_eq!(p.energy_x(), 50.0);
        assert!((p.wavelength() - 2.0 * PI / 10.0).abs() < 1e-15);
        assert_eq!(p.arrival_time(), 40.0);
        assert_eq!(p.spread_rate() * p.arrival_time(), 20.0);
    }

    #[test]
    fn rejects_bad_geometry() {
        let p = ExperimentParams {
            screen_dist: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter {
                name: "params.screen_dist",
                ..
            })
        ));
        let p = ExperimentParams {
            sigma0: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        assert!(ExperimentParams::default().validate().is_ok());
    }
}
