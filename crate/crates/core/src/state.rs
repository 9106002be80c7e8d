//! The entangled two-particle wavefunction.
//!
//! Each slit emits a free Gaussian packet whose complex width grows as
//! `sigma_t = sigma0 (1 + i hbar t / 2 m sigma0^2)`. A pair leaves either
//! through `A` and `B'` or through `B` and `A'`, so the pair state is the
//! (anti)symmetrised sum of four packet products:
//!
//! ```text
//! psi = [A(1)B'(2) + B(1)A'(2)] ± [A(2)B'(1) + B(2)A'(1)]
//! ```
//!
//! The sum is always grouped as above. Floating-point addition and
//! multiplication are commutative, so with this grouping reflecting both
//! particles through the x-axis, or exchanging them, reproduces the value
//! bit for bit.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::{ExperimentParams, Statistics};
use crate::quadrature::{integrate_2d, QuadOptions};

pub type ComplexAmplitude = Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Positions of both particles at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairConfiguration {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub t: f64,
}

impl PairConfiguration {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, t: f64) -> Self {
        PairConfiguration { x1, y1, x2, y2, t }
    }

    /// Both particles reflected through the x-axis.
    pub fn reflected(&self) -> Self {
        PairConfiguration {
            y1: -self.y1,
            y2: -self.y2,
            ..*self
        }
    }

    /// Particle labels exchanged.
    pub fn exchanged(&self) -> Self {
        PairConfiguration {
            x1: self.x2,
            y1: self.y2,
            x2: self.x1,
            y2: self.y1,
            t: self.t,
        }
    }

    /// Ordinate of the centre of mass.
    pub fn com_y(&self) -> f64 {
        0.5 * (self.y1 + self.y2)
    }

    pub fn is_finite(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2, self.t]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The four slits. `A`/`B` are on the right (`x = d`), `A'`/`B'` on the left.
/// `A` and `A'` are the upper slits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slit {
    A,
    B,
    APrime,
    BPrime,
}

impl Slit {
    pub const ALL: [Slit; 4] = [Slit::A, Slit::B, Slit::APrime, Slit::BPrime];

    /// `+1` for the upper slits, `-1` for the lower ones.
    pub fn side(self) -> f64 {
        match self {
            Slit::A | Slit::APrime => 1.0,
            Slit::B | Slit::BPrime => -1.0,
        }
    }

    /// The slit on the same screen at the mirrored height.
    pub fn mirror(self) -> Slit {
        match self {
            Slit::A => Slit::B,
            Slit::B => Slit::A,
            Slit::APrime => Slit::BPrime,
            Slit::BPrime => Slit::APrime,
        }
    }

    fn is_right(self) -> bool {
        matches!(self, Slit::A | Slit::B)
    }

    /// Centre of the packet's probability density at time `t`.
    pub fn centre(self, params: &ExperimentParams, t: f64) -> f64 {
        self.side() * (params.slit_y + params.uy() * t)
    }
}

/// Complex packet width at time `t`.
pub fn sigma_t(params: &ExperimentParams, t: f64) -> ComplexAmplitude {
    params.sigma0 * Complex64::new(1.0, params.spread_rate() * t)
}

/// Plane wave incident on the slits. Its modulus is `amp` everywhere.
pub fn incident_wave(params: &ExperimentParams, config: &PairConfiguration) -> ComplexAmplitude {
    let phase = params.kx * (config.x1 - config.x2) + params.ky * (config.y1 - config.y2)
        - params.energy() * config.t / params.hbar;
    params.amp * Complex64::from_polar(1.0, phase)
}

/// Time-dependent constants shared by all packet evaluations at one instant.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PacketClock {
    prefactor: Complex64,
    inv_width: Complex64,
    centre: f64,
    phase_centre: f64,
    time_phase: f64,
    kx: f64,
    ky: f64,
    d: f64,
}

impl PacketClock {
    pub(crate) fn new(params: &ExperimentParams, t: f64) -> Self {
        let st = sigma_t(params, t);
        // (2 pi sigma_t^2)^(-1/4) on the principal branch; Re sigma_t > 0.
        let prefactor = params.amp * (2.0 * PI).powf(-0.25) / st.sqrt();
        let inv_width = 1.0 / (4.0 * params.sigma0 * st);
        let uy_t = params.uy() * t;
        PacketClock {
            prefactor,
            inv_width,
            centre: params.slit_y + uy_t,
            phase_centre: params.slit_y + 0.5 * uy_t,
            time_phase: params.energy_x() * t / params.hbar,
            kx: params.kx,
            ky: params.ky,
            d: params.slit_x,
        }
    }

    /// Packet value and its logarithmic y-derivative.
    #[inline]
    pub(crate) fn eval(&self, slit: Slit, x: f64, y: f64) -> (Complex64, Complex64) {
        let s = slit.side();
        let q = s * y - self.centre;
        let x_phase = if slit.is_right() {
            self.kx * (x - self.d)
        } else {
            -self.kx * (x + self.d)
        };
        let phase = x_phase + self.ky * (s * y - self.phase_centre) - self.time_phase;
        let exponent = -q * q * self.inv_width + I * phase;
        let value = self.prefactor * exponent.exp();
        let slope = s * (-2.0 * q * self.inv_width + I * self.ky);
        (value, slope)
    }
}

/// Gaussian packet emerging from `slit`, evaluated at `(x, y, t)`.
pub fn slit_wave(
    params: &ExperimentParams,
    slit: Slit,
    x: f64,
    y: f64,
    t: f64,
) -> ComplexAmplitude {
    PacketClock::new(params, t).eval(slit, x, y).0
}

/// The packets at their formation instant, written out with real widths.
///
/// `A`/`B` follow the initial slit profile directly; `A'`/`B'` use the same
/// centre and momentum conventions as the time-dependent packets, so the
/// upper left slit `A'` pairs with the lower right slit `B`.
pub fn initial_slit_wave(params: &ExperimentParams, slit: Slit, x: f64, y: f64) -> ComplexAmplitude {
    let s0 = params.sigma0;
    let s = slit.side();
    let q = s * y - params.slit_y;
    let envelope = params.amp * (2.0 * PI * s0 * s0).powf(-0.25) * (-q * q / (4.0 * s0 * s0)).exp();
    let x_phase = if slit.is_right() {
        params.kx * (x - params.slit_x)
    } else {
        -params.kx * (x + params.slit_x)
    };
    Complex64::from_polar(envelope, x_phase + params.ky * q)
}

/// Slits taken by (particle 1, particle 2) in each of the four product terms.
pub const PAIR_TERMS: [(Slit, Slit); 4] = [
    (Slit::A, Slit::BPrime),
    (Slit::BPrime, Slit::A),
    (Slit::B, Slit::APrime),
    (Slit::APrime, Slit::B),
];

/// The four product terms at one configuration, with the log-derivatives of
/// each factor with respect to `y1` and `y2`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairTerms {
    pub terms: [Complex64; 4],
    pub slope1: [Complex64; 4],
    pub slope2: [Complex64; 4],
    pub statistics: Statistics,
}

impl PairTerms {
    #[inline]
    pub(crate) fn at(params: &ExperimentParams, config: &PairConfiguration) -> Self {
        Self::with_clock(&PacketClock::new(params, config.t), params.statistics, config)
    }

    #[inline]
    pub(crate) fn with_clock(
        clock: &PacketClock,
        statistics: Statistics,
        c: &PairConfiguration,
    ) -> Self {
        let mut terms = [Complex64::new(0.0, 0.0); 4];
        let mut slope1 = terms;
        let mut slope2 = terms;
        for (i, &(s1, s2)) in PAIR_TERMS.iter().enumerate() {
            let (v1, d1) = clock.eval(s1, c.x1, c.y1);
            let (v2, d2) = clock.eval(s2, c.x2, c.y2);
            terms[i] = v1 * v2;
            slope1[i] = d1;
            slope2[i] = d2;
        }
        PairTerms {
            terms,
            slope1,
            slope2,
            statistics,
        }
    }

    /// `(t0 + t2) ± (t1 + t3)`.
    #[inline]
    pub(crate) fn combine(&self, v: [Complex64; 4]) -> Complex64 {
        let direct = v[0] + v[2];
        let swapped = v[1] + v[3];
        match self.statistics {
            Statistics::Bosonic => direct + swapped,
            Statistics::Fermionic => direct - swapped,
        }
    }

    pub(crate) fn psi(&self) -> Complex64 {
        self.combine(self.terms)
    }

    /// Sum of the term moduli; `|psi|` relative to this measures cancellation.
    pub(crate) fn scale(&self) -> f64 {
        self.terms.iter().map(|t| t.norm()).sum()
    }

    /// `sum |t_i|^2`, which bounds `|psi|^2 / 4` from above.
    pub(crate) fn envelope(&self) -> f64 {
        self.terms.iter().map(|t| t.norm_sqr()).sum()
    }

    pub(crate) fn d_psi_dy1(&self) -> Complex64 {
        let v = std::array::from_fn(|i| self.slope1[i] * self.terms[i]);
        self.combine(v)
    }

    pub(crate) fn d_psi_dy2(&self) -> Complex64 {
        let v = std::array::from_fn(|i| self.slope2[i] * self.terms[i]);
        self.combine(v)
    }
}

/// Unnormalised (`N = 1`) pair wavefunction.
pub fn total_wavefunction(params: &ExperimentParams, config: &PairConfiguration) -> ComplexAmplitude {
    PairTerms::at(params, config).psi()
}

/// Pair wavefunction scaled by a normalisation constant from [`normalize`].
pub fn normalized_wavefunction(
    params: &ExperimentParams,
    config: &PairConfiguration,
    norm: f64,
) -> ComplexAmplitude {
    norm * total_wavefunction(params, config)
}

/// Half-width of the square `(y1, y2)` window that holds all but a negligible
/// tail of `|psi|^2` at time `t`.
pub fn probability_window(params: &ExperimentParams, t: f64) -> f64 {
    params.slit_y + params.uy() * t + 8.0 * sigma_t(params, t).norm()
}

/// Relative error above which a normalisation integral is rejected.
pub const NORMALIZATION_REL_LIMIT: f64 = 1e-8;

/// Normalisation constant `N` on the slice `(x1, x2, t)`: the value for which
/// `N^2 ∬ |psi|^2 dy1 dy2 = 1` over the probability window.
pub fn normalize(params: &ExperimentParams, x1: f64, x2: f64, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::invalid("t", "negative time"));
    }
    let clock = PacketClock::new(params, t);
    let w = probability_window(params, t);
    let density = |y1: f64, y2: f64| {
        let c = PairConfiguration::new(x1, y1, x2, y2, t);
        PairTerms::with_clock(&clock, params.statistics, &c)
            .psi()
            .norm_sqr()
    };
    let opts = QuadOptions {
        rel_tol: 1e-10,
        abs_tol: 0.0,
        max_subdivisions: 40_000,
    };
    let mass = integrate_2d(density, (-w, w), (-w, w), opts).within(NORMALIZATION_REL_LIMIT)?;
    if mass <= 0.0 || !mass.is_finite() {
        return Err(Error::QuadratureFailure {
            estimate: mass,
            error: f64::NAN,
            subdivisions: 0,
        });
    }
    Ok(mass.sqrt().recip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn unit() -> ExperimentParams {
        ExperimentParams {
            slit_y: 1.0,
            ..Default::default()
        }
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * a.norm().max(b.norm())
    }

    #[test]
    fn sigma_t_values() {
        let p = unit();
        assert_eq!(sigma_t(&p, 0.0), Complex64::new(1.0, 0.0));
        let p2 = ExperimentParams { hbar: 2.0, ..unit() };
        assert_eq!(sigma_t(&p2, 1.0), Complex64::new(1.0, 1.0));
        let p3 = ExperimentParams { sigma0: 2.0, ..unit() };
        assert_eq!(sigma_t(&p3, 8.0), Complex64::new(2.0, 2.0));
    }

    #[test]
    fn sigma_t_modulus_nondecreasing() {
        let p = unit();
        let mut last = 0.0;
        for i in 0..200 {
            let m = sigma_t(&p, i as f64 * 0.37).norm();
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn incident_wave_values() {
        let p = unit();
        let c = PairConfiguration::new(1.5, -0.5, 1.5, -0.5, 0.0);
        assert_eq!(incident_wave(&p, &c), Complex64::new(1.0, 0.0));
        let p1 = ExperimentParams { kx: 1.0, ky: 0.0, ..unit() };
        let c = PairConfiguration::new(PI, 0.3, 0.0, 0.1, 0.0);
        assert!(close(incident_wave(&p1, &c), Complex64::new(-1.0, 0.0), 1e-15));
        for t in [0.0, 1.0, 7.3] {
            let c = PairConfiguration::new(0.3, 2.0, -4.0, 1.0, t);
            assert!((incident_wave(&p, &c).norm() - p.amp).abs() < 1e-14);
        }
    }

    #[test]
    fn slit_wave_peak_at_centre() {
        let p = unit();
        let v = slit_wave(&p, Slit::A, p.slit_x, p.slit_y, 0.0);
        assert!(close(v, Complex64::new((2.0 * PI).powf(-0.25), 0.0), 1e-15));
    }

    #[test]
    fn slit_wave_matches_initial_profile() {
        let p = ExperimentParams { ky: 0.7, ..unit() };
        for slit in Slit::ALL {
            for &(x, y) in &[(20.0, 1.0), (-20.3, -0.4), (19.1, 2.5), (-21.0, 0.0)] {
                let a = slit_wave(&p, slit, x, y, 0.0);
                let b = initial_slit_wave(&p, slit, x, y);
                assert!(close(a, b, 1e-15), "{slit:?} {a} {b}");
            }
        }
    }

    #[test]
    fn reflection_rules_exact() {
        let p = ExperimentParams { ky: 0.4, ..unit() };
        for slit in Slit::ALL {
            for &(x, y, t) in &[(20.5, 0.3, 0.0), (-19.0, -2.2, 3.3), (40.0, 5.1, 17.0)] {
                assert_eq!(slit_wave(&p, slit, x, y, t), slit_wave(&p, slit.mirror(), x, -y, t));
            }
        }
    }

    #[test]
    fn packet_norm_preserved() {
        let p = ExperimentParams { ky: 0.5, ..unit() };
        let opts = QuadOptions::default();
        for t in [0.0, 1.0, 5.0, 20.0] {
            let w = probability_window(&p, t);
            let mass = integrate(|y| slit_wave(&p, Slit::A, 25.0, y, t).norm_sqr(), -w, w, opts);
            assert!((mass.value - 1.0).abs() < 1e-10, "t={t} mass={}", mass.value);
        }
    }

    #[test]
    fn exchange_symmetry() {
        for stats in [Statistics::Bosonic, Statistics::Fermionic] {
            let p = ExperimentParams { statistics: stats, ky: 0.3, ..unit() };
            let c = PairConfiguration::new(23.0, 0.8, -23.0, -1.7, 0.3);
            let a = total_wavefunction(&p, &c);
            let b = total_wavefunction(&p, &c.exchanged());
            assert_eq!(a, stats.sign() * b);
        }
    }

    #[test]
    fn normalisation_defining_property() {
        let p = unit();
        let (x1, x2, t) = (20.0, -20.0, 0.0);
        let n = normalize(&p, x1, x2, t).unwrap();
        let w = probability_window(&p, t);
        let mass = integrate_2d(
            |a, b| normalized_wavefunction(&p, &PairConfiguration::new(x1, a, x2, b, t), n).norm_sqr(),
            (-w, w),
            (-w, w),
            QuadOptions::default(),
        );
        assert!((mass.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalisation_rejects_negative_time() {
        assert!(normalize(&unit(), 20.0, -20.0, -1.0).is_err());
    }
}
