//! Initial pair positions drawn from `|psi|^2`.
//!
//! Sample `i` of a stream is a pure function of `(seed, i)`: it is drawn from
//! a ChaCha8 generator keyed by `seed` and positioned on stream `i`, so
//! workers can take any subset of indices in any order.
//!
//! Draws use rejection against an envelope built from the four product terms.
//! Cauchy–Schwarz gives `|psi|^2 <= 4 sum_i |t_i|^2`, and every `|t_i|^2` is
//! a product of two normal densities, so the envelope is a Gaussian mixture
//! that can be sampled exactly. The normalisation of `psi` cancels in the
//! acceptance ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::guidance::on_ballistic_slice;
use crate::params::ExperimentParams;
use crate::state::{sigma_t, PacketClock, PairConfiguration, PairTerms, PAIR_TERMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Centre of mass fixed at `y0_mean`.
    PinnedCom,
    /// Centre of mass drawn from `N(y0_mean, y0_sigma^2)`, then pinned.
    SpreadCom,
    /// Both ordinates drawn from the joint density.
    Unconstrained,
}

impl FromStr for SamplerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pinned_com" => Ok(SamplerMode::PinnedCom),
            "spread_com" => Ok(SamplerMode::SpreadCom),
            "unconstrained" => Ok(SamplerMode::Unconstrained),
            other => Err(format!(
                "expected `pinned_com`, `spread_com` or `unconstrained`, got `{other}`"
            )),
        }
    }
}

impl std::fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerMode::PinnedCom => "pinned_com",
            SamplerMode::SpreadCom => "spread_com",
            SamplerMode::Unconstrained => "unconstrained",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerSpec {
    pub mode: SamplerMode,
    pub y0_mean: f64,
    pub y0_sigma: f64,
    pub seed: u64,
    /// Rejections allowed for a single draw.
    pub max_rejects: u64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            mode: SamplerMode::PinnedCom,
            y0_mean: 0.0,
            y0_sigma: 0.0,
            seed: 1,
            max_rejects: 100_000,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self, params: &ExperimentParams) -> Result<()> {
        if !(self.y0_sigma >= 0.0) {
            return Err(Error::invalid("sampler.y0_sigma", "must be >= 0"));
        }
        if !self.y0_mean.is_finite() {
            return Err(Error::invalid("sampler.y0_mean", "must be finite"));
        }
        if self.max_rejects == 0 {
            return Err(Error::invalid("sampler.max_rejects", "must be > 0"));
        }
        if self.mode == SamplerMode::SpreadCom {
            if self.y0_sigma >= params.sigma0 {
                return Err(Error::invalid(
                    "sampler.y0_sigma",
                    format!("spread_com needs y0_sigma < sigma0 = {}", params.sigma0),
                ));
            }
            if self.y0_sigma > params.sigma0 / 10.0 {
                log::warn!(
                    "y0_sigma = {} exceeds sigma0/10; symmetric detection will degrade",
                    self.y0_sigma
                );
            }
        }
        Ok(())
    }
}

/// One drawn pair together with how many proposals it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub config: PairConfiguration,
    /// Centre-of-mass ordinate the draw was conditioned on (the realised one
    /// in unconstrained mode).
    pub y0: f64,
    pub proposals: u64,
}

/// Generator for draw `index` of the stream keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Normal-density parameters of `|t_i|^2 / amp^4` in `(y1, y2)`.
fn term_centres(params: &ExperimentParams, t: f64) -> [(f64, f64); 4] {
    PAIR_TERMS.map(|(s1, s2)| (s1.centre(params, t), s2.centre(params, t)))
}

/// Draw pair `index` of the stream at time `t0` on the ballistic slice.
pub fn sample_pair(
    params: &ExperimentParams,
    spec: &SamplerSpec,
    t0: f64,
    index: u64,
) -> Result<Draw> {
    if t0 < 0.0 {
        return Err(Error::invalid("t0", "negative sampling time"));
    }
    let mut rng = stream(spec.seed, index);
    match spec.mode {
        SamplerMode::PinnedCom => sample_on_line(params, spec, t0, spec.y0_mean, &mut rng),
        SamplerMode::SpreadCom => {
            let z: f64 = rng.sample(StandardNormal);
            let y0 = spec.y0_mean + spec.y0_sigma * z;
            sample_on_line(params, spec, t0, y0, &mut rng)
        }
        SamplerMode::Unconstrained => sample_joint(params, spec, t0, &mut rng),
    }
}

/// The reported rate is the mean acceptance probability over the failed
/// proposals, i.e. the rate the envelope would have achieved.
fn overflow(proposals: u64, ratio_sum: f64) -> Error {
    Error::RejectionOverflow {
        rejects: proposals,
        acceptance_rate: ratio_sum / proposals.max(1) as f64,
    }
}

/// Draw `y1` from `|psi(y1, 2 y0 - y1)|^2` and set `y2 = 2 y0 - y1`.
fn sample_on_line<R: Rng>(
    params: &ExperimentParams,
    spec: &SamplerSpec,
    t: f64,
    y0: f64,
    rng: &mut R,
) -> Result<Draw> {
    let s2 = sigma_t(params, t).norm_sqr();
    let clock = PacketClock::new(params, t);
    // Along the line, N(y1; c1, s2) N(2y0 - y1; c2, s2) =
    //   N(c1 + c2 - 2y0; 0, 2 s2) N(y1; (c1 - c2)/2 + y0, s2/2).
    let comps = term_centres(params, t).map(|(c1, c2)| {
        let gap = c1 + c2 - 2.0 * y0;
        ((-gap * gap / (4.0 * s2)).exp(), 0.5 * (c1 - c2) + y0)
    });
    let total: f64 = comps.iter().map(|c| c.0).sum();
    if !(total > 0.0) {
        return Err(Error::RejectionOverflow {
            rejects: 0,
            acceptance_rate: 0.0,
        });
    }
    let sd = (0.5 * s2).sqrt();
    let mut proposals = 0;
    let mut ratio_sum = 0.0;
    while proposals < spec.max_rejects {
        proposals += 1;
        let mut u = rng.random::<f64>() * total;
        let mut mean = comps[3].1;
        for c in &comps {
            if u < c.0 {
                mean = c.1;
                break;
            }
            u -= c.0;
        }
        let z: f64 = rng.sample(StandardNormal);
        let y1 = mean + sd * z;
        let y2 = 2.0 * y0 - y1;
        let config = on_ballistic_slice(params, y1, y2, t);
        let terms = PairTerms::with_clock(&clock, params.statistics, &config);
        let bound = 4.0 * terms.envelope();
        let density = terms.psi().norm_sqr();
        if bound > 0.0 {
            ratio_sum += density / bound;
        }
        let accept: f64 = rng.random();
        if bound > 0.0 && accept * bound < density {
            return Ok(Draw {
                config,
                y0,
                proposals,
            });
        }
    }
    Err(overflow(proposals, ratio_sum))
}

/// Rejection draw from the joint density on the ballistic slice.
fn sample_joint<R: Rng>(
    params: &ExperimentParams,
    spec: &SamplerSpec,
    t: f64,
    rng: &mut R,
) -> Result<Draw> {
    let sd = sigma_t(params, t).norm();
    let clock = PacketClock::new(params, t);
    let centres = term_centres(params, t);
    let mut proposals = 0;
    let mut ratio_sum = 0.0;
    while proposals < spec.max_rejects {
        proposals += 1;
        let (c1, c2) = centres[rng.random_range(0..4)];
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let config = on_ballistic_slice(params, c1 + sd * z1, c2 + sd * z2, t);
        let terms = PairTerms::with_clock(&clock, params.statistics, &config);
        let bound = 4.0 * terms.envelope();
        let density = terms.psi().norm_sqr();
        if bound > 0.0 {
            ratio_sum += density / bound;
        }
        let accept: f64 = rng.random();
        if bound > 0.0 && accept * bound < density {
            return Ok(Draw {
                y0: config.com_y(),
                config,
                proposals,
            });
        }
    }
    Err(overflow(proposals, ratio_sum))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_pairs_sum_to_zero() {
        let p = ExperimentParams::default();
        let spec = SamplerSpec::default();
        for i in 0..500 {
            let d = sample_pair(&p, &spec, 0.0, i).unwrap();
            assert_eq!(d.config.y1 + d.config.y2, 0.0);
            assert_eq!(d.config.x1, p.slit_x);
            assert_eq!(d.config.t, 0.0);
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let p = ExperimentParams::default();
        let spec = SamplerSpec {
            mode: SamplerMode::Unconstrained,
            ..Default::default()
        };
        let a = sample_pair(&p, &spec, 0.0, 17).unwrap();
        let b = sample_pair(&p, &spec, 0.0, 17).unwrap();
        let c = sample_pair(&p, &spec, 0.0, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.config, c.config);
    }

    #[test]
    fn spread_requires_small_sigma() {
        let p = ExperimentParams::default();
        let spec = SamplerSpec {
            mode: SamplerMode::SpreadCom,
            y0_sigma: 2.0,
            ..Default::default()
        };
        assert!(spec.validate(&p).is_err());
        let ok = SamplerSpec {
            y0_sigma: 0.01,
            ..spec
        };
        assert!(ok.validate(&p).is_ok());
    }

    #[test]
    fn tiny_budget_overflows() {
        let p = ExperimentParams::default();
        let spec = SamplerSpec {
            mode: SamplerMode::Unconstrained,
            max_rejects: 1,
            ..Default::default()
        };
        let failures = (0..200)
            .filter(|&i| matches!(sample_pair(&p, &spec, 0.0, i), Err(Error::RejectionOverflow { .. })))
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn unconstrained_com_mean_near_zero() {
        let p = ExperimentParams::default();
        let spec = SamplerSpec {
            mode: SamplerMode::Unconstrained,
            seed: 9,
            ..Default::default()
        };
        let n = 4000;
        let mean: f64 = (0..n)
            .map(|i| sample_pair(&p, &spec, 0.0, i).unwrap().config.com_y())
            .sum::<f64>()
            / n as f64;
        // com has standard deviation sigma0/sqrt(2) at t = 0
        let se = p.sigma0 / (2.0 * n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean}");
    }
}
