//! Guidance velocities along y, the centre-of-mass law, and the ballistic
//! convention for x.
//!
//! Particle `j` moves with `dy_j/dt = (hbar/m) Im(∂_{y_j} psi / psi)`. Each
//! packet factor differentiates to itself times a closed-form slope, so the
//! derivative is evaluated by re-weighting the four product terms instead of
//! by finite differences. [`velocity_via_phase`] is the finite-difference
//! route and serves as its check.

use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};
use crate::params::ExperimentParams;
use crate::state::{PacketClock, PairConfiguration, PairTerms};

/// `|psi|` below this fraction of the summed term moduli counts as a node.
pub const NODE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityPair {
    pub vy1: f64,
    pub vy2: f64,
}

impl VelocityPair {
    pub fn com(&self) -> f64 {
        0.5 * (self.vy1 + self.vy2)
    }
}

pub(crate) fn velocity_from_terms(terms: &PairTerms, hbar_over_m: f64) -> Result<VelocityPair> {
    let psi = terms.psi();
    let scale = terms.scale();
    let modulus = psi.norm();
    if !(modulus > NODE_FLOOR * scale) {
        return Err(Error::NodeSingularity { modulus, scale });
    }
    let vy1 = hbar_over_m * (terms.d_psi_dy1() / psi).im;
    let vy2 = hbar_over_m * (terms.d_psi_dy2() / psi).im;
    Ok(VelocityPair { vy1, vy2 })
}

/// Closed-form guidance velocities of both particles along y.
pub fn velocity_y(params: &ExperimentParams, config: &PairConfiguration) -> Result<VelocityPair> {
    let t = config.t.max(0.0);
    let clock = PacketClock::new(params, t);
    let c = PairConfiguration { t, ..*config };
    let terms = PairTerms::with_clock(&clock, params.statistics, &c);
    velocity_from_terms(&terms, params.hbar / params.mass)
}

/// Guidance velocities from central differences of the phase of `psi` with
/// stencil width `h`.
///
/// Phase increments are taken as `arg(psi(y + h) / psi(y))`, which needs no
/// global unwrapping as long as each increment stays below `pi/2`.
pub fn velocity_via_phase(
    params: &ExperimentParams,
    config: &PairConfiguration,
    h: f64,
) -> Result<VelocityPair> {
    if !(h > 0.0) {
        return Err(Error::invalid("h", "stencil width must be positive"));
    }
    let eval = |c: PairConfiguration| -> Result<Complex64> {
        let terms = PairTerms::at(params, &c);
        let psi = terms.psi();
        let scale = terms.scale();
        if !(psi.norm() > NODE_FLOOR * scale) {
            return Err(Error::NodeSingularity {
                modulus: psi.norm(),
                scale,
            });
        }
        Ok(psi)
    };
    let centre = eval(*config)?;
    let increment = |hi: Complex64, lo: Complex64| -> Result<f64> {
        let jump = (hi * lo.conj()).arg();
        if jump.abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::PhaseUnwrapFailure { jump });
        }
        Ok(jump)
    };
    let derivative = |plus: PairConfiguration, minus: PairConfiguration| -> Result<f64> {
        let up = eval(plus)?;
        let down = eval(minus)?;
        Ok((increment(up, centre)? + increment(centre, down)?) / (2.0 * h))
    };
    let c = *config;
    let d1 = derivative(
        PairConfiguration { y1: c.y1 + h, ..c },
        PairConfiguration { y1: c.y1 - h, ..c },
    )?;
    let d2 = derivative(
        PairConfiguration { y2: c.y2 + h, ..c },
        PairConfiguration { y2: c.y2 - h, ..c },
    )?;
    let k = params.hbar / params.mass;
    Ok(VelocityPair {
        vy1: k * d1,
        vy2: k * d2,
    })
}

/// Centre-of-mass velocity from the guidance field, alongside the closed form
/// it must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComVelocity {
    pub field: f64,
    pub closed_form: f64,
}

impl ComVelocity {
    pub fn discrepancy(&self) -> f64 {
        (self.field - self.closed_form).abs()
    }
}

/// `(vy1 + vy2) / 2`, checked against
/// `rate^2 t y / (1 + rate^2 t^2)` with `rate = hbar / 2 m sigma0^2`.
pub fn com_velocity(params: &ExperimentParams, config: &PairConfiguration) -> Result<ComVelocity> {
    let v = velocity_y(params, config)?;
    Ok(ComVelocity {
        field: v.com(),
        closed_form: com_velocity_closed_form(params, config.com_y(), config.t),
    })
}

pub fn com_velocity_closed_form(params: &ExperimentParams, y: f64, t: f64) -> f64 {
    let r = params.spread_rate();
    r * r * t * y / (1.0 + r * r * t * t)
}

/// Centre-of-mass ordinate at time `t` for a pair that started at `y0`.
pub fn com_path(params: &ExperimentParams, y0: f64, t: f64) -> f64 {
    let tau = params.spread_rate() * t;
    y0 * (1.0 + tau * tau).sqrt()
}

/// x-coordinates under plane-wave motion: particle 1 moves right from `d`,
/// particle 2 left from `-d`.
pub fn ballistic_x(params: &ExperimentParams, t: f64) -> (f64, f64) {
    let x = params.slit_x + params.ux() * t;
    (x, -x)
}

/// Configuration on the ballistic x-slice.
pub fn on_ballistic_slice(params: &ExperimentParams, y1: f64, y2: f64, t: f64) -> PairConfiguration {
    let (x1, x2) = ballistic_x(params, t);
    PairConfiguration::new(x1, y1, x2, y2, t)
}

/// Time-ordered samples of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<PairConfiguration>,
    /// Centre-of-mass ordinate at the first sample.
    pub y0: f64,
}

impl Trajectory {
    pub fn new(start: PairConfiguration) -> Self {
        Trajectory {
            y0: start.com_y(),
            samples: vec![start],
        }
    }

    pub fn push(&mut self, c: PairConfiguration) {
        debug_assert!(c.t > self.samples.last().map_or(f64::NEG_INFINITY, |s| s.t));
        self.samples.push(c);
    }

    pub fn first(&self) -> &PairConfiguration {
        &self.samples[0]
    }

    pub fn last(&self) -> &PairConfiguration {
        self.samples.last().expect("trajectory has a first sample")
    }

    /// Largest `|(y1 + y2)/2 - com_path(y0, t)|` over the samples.
    pub fn max_com_deviation(&self, params: &ExperimentParams) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.com_y() - com_path(params, self.y0, s.t)).abs())
            .fold(0.0, f64::max)
    }

    /// Writes `t,x1,y1,x2,y2,vy1,vy2`, one row per sample. Velocities at a
    /// node are written as `NaN`.
    pub fn write_csv<W: Write>(&self, params: &ExperimentParams, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x1,y1,x2,y2,vy1,vy2")?;
        for s in &self.samples {
            let v = velocity_y(params, s).unwrap_or(VelocityPair {
                vy1: f64::NAN,
                vy2: f64::NAN,
            });
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.t, s.x1, s.y1, s.x2, s.y2, v.vy1, v.vy2
            )?;
        }
        Ok(())
    }
}
