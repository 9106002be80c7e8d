//! Time stepping of a pair along the y-velocity field.
//!
//! Only `(y1, y2)` is integrated; x follows the ballistic law exactly. Steps
//! whose stages land on a node are rejected and retried with a smaller step;
//! if the step collapses the pair is abandoned with [`Error::NodeEncounter`].

use serde::Serialize;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::guidance::{on_ballistic_slice, velocity_y, Trajectory, VelocityPair};
use crate::params::ExperimentParams;
use crate::state::PairConfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4Fixed,
    Rk45Adaptive,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rk4_fixed" => Ok(Scheme::Rk4Fixed),
            "rk45_adaptive" => Ok(Scheme::Rk45Adaptive),
            other => Err(format!("expected `rk4_fixed` or `rk45_adaptive`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Rk4Fixed => "rk4_fixed",
            Scheme::Rk45Adaptive => "rk45_adaptive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorSettings {
    /// First trial step (adaptive) or the step itself (fixed).
    pub dt_init: f64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_steps: usize,
    pub scheme: Scheme,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            dt_init: 1e-2,
            tol_rel: 1e-9,
            tol_abs: 1e-12,
            max_steps: 200_000,
            scheme: Scheme::Rk45Adaptive,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_init > 0.0) {
            return Err(Error::invalid("integrator.dt_init", "must be > 0"));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::invalid("integrator.tol_rel", "must be > 0"));
        }
        if !(self.tol_abs > 0.0) {
            return Err(Error::invalid("integrator.tol_abs", "must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("integrator.max_steps", "must be > 0"));
        }
        Ok(())
    }
}

type State = [f64; 2];

struct Field<'a> {
    params: &'a ExperimentParams,
    /// Smallest `|psi| / scale` met at a rejected stage.
    nearest: f64,
}

impl Field<'_> {
    fn eval(&mut self, t: f64, y: State) -> Option<State> {
        let c = on_ballistic_slice(self.params, y[0], y[1], t.max(0.0));
        match velocity_y(self.params, &c) {
            Ok(VelocityPair { vy1, vy2 }) => Some([vy1, vy2]),
            Err(Error::NodeSingularity { modulus, scale }) => {
                let ratio = if scale > 0.0 { modulus / scale } else { 0.0 };
                self.nearest = self.nearest.min(ratio);
                None
            }
            Err(_) => None,
        }
    }
}

fn combo(y: State, coeffs: &[f64], k: &[State], dt: f64) -> State {
    let mut out = y;
    for (&c, ki) in coeffs.iter().zip(k) {
        out[0] += dt * c * ki[0];
        out[1] += dt * c * ki[1];
    }
    out
}

fn rk4_step(f: &mut Field, t: f64, y: State, dt: f64) -> Option<State> {
    let k1 = f.eval(t, y)?;
    let k2 = f.eval(t + 0.5 * dt, combo(y, &[0.5], &[k1], dt))?;
    let k3 = f.eval(t + 0.5 * dt, combo(y, &[0.5], &[k2], dt))?;
    let k4 = f.eval(t + dt, combo(y, &[1.0], &[k3], dt))?;
    Some(combo(
        y,
        &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        &[k1, k2, k3, k4],
        dt,
    ))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step from `(t, y)` with first stage `k1`. Returns the
/// fifth-order solution, the derivative there (first stage of the next step)
/// and the embedded error vector.
fn dopri_step(f: &mut Field, t: f64, y: State, k1: State, dt: f64) -> Option<(State, State, State)> {
    let mut k = [[0.0; 2]; 7];
    k[0] = k1;
    let rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
    for (s, row) in rows.iter().enumerate() {
        k[s + 1] = f.eval(t + C[s + 1] * dt, combo(y, row, &k, dt))?;
    }
    let y5 = combo(y, &B5[..6], &k, dt);
    k[6] = f.eval(t + dt, y5)?;
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = dt
            * (0..7)
                .map(|s| (B5[s] - B4[s]) * k[s][i])
                .sum::<f64>();
    }
    Some((y5, k[6], err))
}

/// Integrates a pair from `initial` to `t_end`, recording every accepted step.
pub fn integrate_pair(
    params: &ExperimentParams,
    initial: PairConfiguration,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(initial);
    run(params, initial, t_end, settings, |c| traj.push(c))?;
    Ok(traj)
}

/// Like [`integrate_pair`] but keeps only the final configuration.
pub fn advance_pair(
    params: &ExperimentParams,
    initial: PairConfiguration,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<PairConfiguration> {
    let mut last = initial;
    run(params, initial, t_end, settings, |c| last = c)?;
    Ok(last)
}

fn run<S: FnMut(PairConfiguration)>(
    params: &ExperimentParams,
    initial: PairConfiguration,
    t_end: f64,
    settings: &IntegratorSettings,
    mut sink: S,
) -> Result<()> {
    if !(initial.t < t_end) {
        return Err(Error::invalid("t_end", "must exceed the initial time"));
    }
    if initial.t < 0.0 {
        return Err(Error::invalid("t", "negative start time"));
    }
    let mut field = Field {
        params,
        nearest: f64::INFINITY,
    };
    let mut y = [initial.y1, initial.y2];
    let mut t = initial.t;
    let span = t_end - t;
    let emit = |t: f64, y: State| on_ballistic_slice(params, y[0], y[1], t);

    match settings.scheme {
        Scheme::Rk4Fixed => {
            let n = (span / settings.dt_init).ceil().max(1.0) as usize;
            if n > settings.max_steps {
                return Err(Error::StepLimitExceeded {
                    max_steps: settings.max_steps,
                    t,
                });
            }
            let dt = span / n as f64;
            for i in 0..n {
                y = rk4_step(&mut field, t, y, dt).ok_or(Error::NodeEncounter {
                    t,
                    nearest: field.nearest,
                })?;
                t = if i + 1 == n { t_end } else { initial.t + (i + 1) as f64 * dt };
                sink(emit(t, y));
            }
        }
        Scheme::Rk45Adaptive => {
            let min_dt = 1e-12 * span;
            let mut dt = settings.dt_init.min(span);
            let mut k1 = field.eval(t, y).ok_or(Error::NodeEncounter {
                t,
                nearest: field.nearest,
            })?;
            let mut attempts = 0;
            while t < t_end {
                attempts += 1;
                if attempts > settings.max_steps {
                    return Err(Error::StepLimitExceeded {
                        max_steps: settings.max_steps,
                        t,
                    });
                }
                let last = t + dt >= t_end;
                let h = if last { t_end - t } else { dt };
                match dopri_step(&mut field, t, y, k1, h) {
                    None => {
                        dt = 0.5 * h;
                        if dt < min_dt {
                            return Err(Error::NodeEncounter {
                                t,
                                nearest: field.nearest,
                            });
                        }
                    }
                    Some((y_new, k_new, err)) => {
                        let mut norm: f64 = 0.0;
                        for i in 0..2 {
                            let sc = settings.tol_abs
                                + settings.tol_rel * y[i].abs().max(y_new[i].abs());
                            norm = norm.max(err[i].abs() / sc);
                        }
                        if norm <= 1.0 {
                            t = if last { t_end } else { t + h };
                            y = y_new;
                            k1 = k_new;
                            sink(emit(t, y));
                        }
                        let factor = if norm == 0.0 {
                            5.0
                        } else {
                            (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                        };
                        dt = h * factor;
                        if dt < min_dt {
                            return Err(Error::NodeEncounter {
                                t,
                                nearest: field.nearest,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::com_path;

    fn params() -> ExperimentParams {
        ExperimentParams {
            slit_y: 2.0,
            screen_dist: 70.0,
            ..Default::default()
        }
    }

    #[test]
    fn symmetric_pair_lands_symmetric() {
        let p = params();
        let s0 = p.sigma0;
        let start = on_ballistic_slice(&p, s0 / 2.0, -s0 / 2.0, 0.0);
        let traj = integrate_pair(&p, start, p.arrival_time(), &IntegratorSettings::default()).unwrap();
        let end = traj.last();
        assert_eq!(end.t, p.arrival_time());
        assert!(end.com_y().abs() <= 1e-8 * s0);
        assert_eq!(end.x1, p.screen_dist);
        assert!(traj.samples.iter().all(|s| s.y1 > 0.0 && s.y2 < 0.0));
    }

    #[test]
    fn axis_pair_stays_put() {
        let p = params();
        let start = on_ballistic_slice(&p, 0.0, 0.0, 0.0);
        let traj = integrate_pair(&p, start, p.arrival_time(), &IntegratorSettings::default()).unwrap();
        assert!(traj.samples.iter().all(|s| s.y1 == 0.0 && s.y2 == 0.0));
    }

    #[test]
    fn com_follows_closed_form() {
        let p = params();
        let settings = IntegratorSettings::default();
        let y0 = 0.7;
        let start = on_ballistic_slice(&p, y0 + 1.1, y0 - 1.1, 0.0);
        let traj = integrate_pair(&p, start, p.arrival_time(), &settings).unwrap();
        assert!(traj.max_com_deviation(&p) <= 10.0 * settings.tol_rel * y0);
        let end = traj.last();
        let expect = com_path(&p, y0, end.t);
        assert!((end.com_y() - expect).abs() <= 1e-8 * expect);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = params();
        let y0 = 0.5;
        let start = on_ballistic_slice(&p, y0 + 1.3, y0 - 1.3, 0.0);
        let t_end = 2.0;
        let err = |dt: f64| {
            let s = IntegratorSettings {
                dt_init: dt,
                scheme: Scheme::Rk4Fixed,
                ..Default::default()
            };
            let end = advance_pair(&p, start, t_end, &s).unwrap();
            (end.com_y() - com_path(&p, y0, t_end)).abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn mirrored_starts_stay_mirrored() {
        let p = ExperimentParams {
            statistics: crate::params::Statistics::Fermionic,
            ..params()
        };
        let start = on_ballistic_slice(&p, 1.4, -0.3, 0.0);
        let s = IntegratorSettings::default();
        let a = integrate_pair(&p, start, 5.0, &s).unwrap();
        let b = integrate_pair(&p, start.reflected(), 5.0, &s).unwrap();
        assert_eq!(a.samples.len(), b.samples.len());
        for (u, v) in a.samples.iter().zip(&b.samples) {
            assert_eq!(u.t, v.t);
            assert_eq!(u.y1, -v.y1);
            assert_eq!(u.y2, -v.y2);
        }
    }

    #[test]
    fn step_limit_reported() {
        let p = params();
        let start = on_ballistic_slice(&p, 1.0, -0.5, 0.0);
        let s = IntegratorSettings {
            max_steps: 3,
            ..Default::default()
        };
        assert!(matches!(
            integrate_pair(&p, start, p.arrival_time(), &s),
            Err(Error::StepLimitExceeded { .. })
        ));
    }

    #[test]
    fn refuses_backwards_interval() {
        let p = params();
        let start = on_ballistic_slice(&p, 1.0, -0.5, 2.0);
        assert!(integrate_pair(&p, start, 1.0, &IntegratorSettings::default()).is_err());
    }
}
