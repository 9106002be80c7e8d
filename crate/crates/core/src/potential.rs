//! Quantum potential.
//!
//! Two views are kept side by side: the effective potential of the
//! centre-of-mass coordinate, which follows in closed form from the
//! centre-of-mass path, and the full `Q = -(hbar^2 / 2m) ∇²R / R` with the
//! Laplacian taken over all four coordinates by central differences.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::guidance::{com_path, NODE_FLOOR};
use crate::params::ExperimentParams;
use crate::state::{PairConfiguration, PairTerms};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialSample {
    pub q: f64,
    pub force_y: f64,
    pub location: PairConfiguration,
}

/// Effective centre-of-mass quantum potential
/// `½ m y0² rate² / (1 + rate² t²)`.
pub fn q_cm(params: &ExperimentParams, y0: f64, t: f64) -> f64 {
    let r = params.spread_rate();
    0.5 * params.mass * y0 * y0 * r * r / (1.0 + r * r * t * t)
}

/// Centre-of-mass quantum force `m y0 rate² / (1 + rate² t²)^{3/2}`.
pub fn quantum_force_cm(params: &ExperimentParams, y0: f64, t: f64) -> f64 {
    let r = params.spread_rate();
    params.mass * y0 * r * r / (1.0 + r * r * t * t).powf(1.5)
}

/// The same force written through the current ordinate `y = com_path(y0, t)`:
/// `m y0^4 rate² / y³`. Undefined for `y0 = 0`.
pub fn quantum_force_cm_from_position(params: &ExperimentParams, y0: f64, t: f64) -> f64 {
    let r = params.spread_rate();
    let y = com_path(params, y0, t);
    params.mass * y0.powi(4) * r * r / y.powi(3)
}

/// Centre-of-mass potential and force at time `t`.
pub fn com_sample(params: &ExperimentParams, y0: f64, t: f64) -> PotentialSample {
    let y = com_path(params, y0, t);
    PotentialSample {
        q: q_cm(params, y0, t),
        force_y: quantum_force_cm(params, y0, t),
        location: PairConfiguration::new(f64::NAN, y, f64::NAN, y, t),
    }
}

/// Default stencil width for [`q_numeric`].
pub fn default_stencil(params: &ExperimentParams) -> f64 {
    params.sigma0 / 200.0
}

/// `-(hbar^2 / 2m) ∇²R / R` for an arbitrary pair wavefunction `psi`, with
/// `R = |psi|` and a second-order central-difference Laplacian over
/// `(x1, y1, x2, y2)`.
pub fn q_numeric_with<F>(
    params: &ExperimentParams,
    psi: F,
    config: &PairConfiguration,
    h: f64,
) -> Result<f64>
where
    F: Fn(&PairConfiguration) -> Result<Complex64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("h", "stencil width must be positive"));
    }
    let r0 = psi(config)?.norm();
    let c = *config;
    let mut laplacian = 0.0;
    let shifts: [fn(&mut PairConfiguration, f64); 4] = [
        |c, h| c.x1 += h,
        |c, h| c.y1 += h,
        |c, h| c.x2 += h,
        |c, h| c.y2 += h,
    ];
    for shift in shifts {
        let mut plus = c;
        shift(&mut plus, h);
        let mut minus = c;
        shift(&mut minus, -h);
        let rp = psi(&plus)?.norm();
        let rm = psi(&minus)?.norm();
        laplacian += ((rp + rm) - 2.0 * r0) / (h * h);
    }
    Ok(-params.hbar * params.hbar / (2.0 * params.mass) * laplacian / r0)
}

/// Full quantum potential of the pair wavefunction.
pub fn q_numeric(params: &ExperimentParams, config: &PairConfiguration, h: f64) -> Result<f64> {
    let psi = |c: &PairConfiguration| {
        let terms = PairTerms::at(params, c);
        let v = terms.psi();
        if !(v.norm() > NODE_FLOOR * terms.scale()) {
            return Err(Error::NodeSingularity {
                modulus: v.norm(),
                scale: terms.scale(),
            });
        }
        Ok(v)
    };
    q_numeric_with(params, psi, config, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::on_ballistic_slice;
    use crate::state::{sigma_t, slit_wave, Slit};

    #[test]
    fn q_cm_examples() {
        let p = ExperimentParams::default();
        for t in [0.0, 1.0, 50.0] {
            assert_eq!(q_cm(&p, 0.0, t), 0.0);
            assert_eq!(quantum_force_cm(&p, 0.0, t), 0.0);
        }
        let p2 = ExperimentParams {
            hbar: 2.0,
            ..Default::default()
        };
        assert_eq!(q_cm(&p2, 1.0, 0.0), 0.5);
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let q = q_cm(&p, 1.0, i as f64);
            assert!(q < last && q > 0.0);
            last = q;
        }
    }

    #[test]
    fn force_forms_agree() {
        let p = ExperimentParams::default();
        for &(y0, t) in &[(0.3, 0.0), (1.0, 1.7), (-2.5, 9.0), (4.0, 33.0)] {
            let a = quantum_force_cm(&p, y0, t);
            let b = quantum_force_cm_from_position(&p, y0, t);
            assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn single_packet_matches_gaussian_modulus() {
        // For one product term R is a product of real Gaussians of width
        // s = |sigma_t|, so ∇²R/R = Σ_j [(y_j - c_j)^2 / 4s^4 - 1/2s^2].
        let p = ExperimentParams {
            ky: 0.3,
            slit_y: 1.0,
            ..Default::default()
        };
        let single = |c: &PairConfiguration| {
            Ok(slit_wave(&p, Slit::A, c.x1, c.y1, c.t) * slit_wave(&p, Slit::BPrime, c.x2, c.y2, c.t))
        };
        let c = on_ballistic_slice(&p, 1.9, -0.4, 2.0);
        let s = sigma_t(&p, c.t).norm();
        let closed = {
            let c1 = Slit::A.centre(&p, c.t);
            let c2 = Slit::BPrime.centre(&p, c.t);
            let term = |y: f64, ctr: f64| (y - ctr).powi(2) / (4.0 * s.powi(4)) - 0.5 / (s * s);
            -0.5 * (term(c.y1, c1) + term(c.y2, c2))
        };
        let err = |h: f64| (q_numeric_with(&p, single, &c, h).unwrap() - closed).abs();
        assert!(err(1e-3) < 1e-5 * closed.abs().max(1.0));
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn numeric_q_reflection_symmetric() {
        let p = ExperimentParams::default();
        let c = on_ballistic_slice(&p, 7.5, -8.3, 0.6);
        let h = default_stencil(&p);
        let a = q_numeric(&p, &c, h).unwrap();
        let b = q_numeric(&p, &c.reflected(), h).unwrap();
        assert_eq!(a, b);
    }
}
