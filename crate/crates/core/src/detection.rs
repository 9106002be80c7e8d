//! Screen statistics for both theories.
//!
//! The screens are the lines `x = ±D`, crossed by every pair at the common
//! ballistic arrival time. Standard predictions come from quadrature of
//! `|psi|^2` on that slice; Bohmian ones from counting the landing points of
//! integrated trajectories.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::guidance::ballistic_x;
use crate::integrator::{advance_pair, IntegratorSettings};
use crate::params::ExperimentParams;
use crate::quadrature::{integrate, integrate_2d, QuadOptions};
use crate::sampler::{sample_pair, SamplerSpec};
use crate::state::{normalize, probability_window, PacketClock, PairConfiguration, PairTerms};

/// Simultaneous hit of both screens by one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionEvent {
    pub y_s1: f64,
    pub y_s2: f64,
    pub t_arrive: f64,
    pub pair_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinGeometry {
    pub lo: f64,
    pub hi: f64,
    pub nbins: usize,
}

impl BinGeometry {
    pub fn new(lo: f64, hi: f64, nbins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("histogram.range", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if nbins < 2 {
            return Err(Error::invalid("histogram.nbins", "need at least 2 bins"));
        }
        Ok(BinGeometry { lo, hi, nbins })
    }

    /// Symmetric geometry `[-half, half]`.
    pub fn symmetric(half: f64, nbins: usize) -> Result<Self> {
        Self::new(-half, half, nbins)
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.nbins as f64
    }

    /// Left edge of bin `i`; `edge(nbins) == hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.nbins {
            self.hi
        } else {
            self.lo + i as f64 * self.width()
        }
    }

    pub fn centre(&self, i: usize) -> f64 {
        0.5 * (self.edge(i) + self.edge(i + 1))
    }

    /// Bin holding `y` on `[lo, hi)`.
    pub fn index(&self, y: f64) -> Option<usize> {
        if !(y >= self.lo && y < self.hi) {
            return None;
        }
        let i = ((y - self.lo) / self.width()) as usize;
        // Rounding can push a value just below an edge into the next bin.
        Some(if i > 0 && y < self.edge(i) { i - 1 } else { i.min(self.nbins - 1) })
    }
}

/// Counts over a screen coordinate. Out-of-range hits go to `underflow` and
/// `overflow`; `total` counts everything filled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub geometry: BinGeometry,
    pub counts: Vec<u64>,
    pub total: u64,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(geometry: BinGeometry) -> Self {
        Histogram {
            geometry,
            counts: vec![0; geometry.nbins],
            total: 0,
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn from_values<I: IntoIterator<Item = f64>>(geometry: BinGeometry, values: I) -> Self {
        let mut h = Self::new(geometry);
        for y in values {
            h.fill(y);
        }
        h
    }

    pub fn fill(&mut self, y: f64) {
        self.total += 1;
        match self.geometry.index(y) {
            Some(i) => self.counts[i] += 1,
            None if y < self.geometry.lo => self.underflow += 1,
            None => self.overflow += 1,
        }
    }

    /// Adds `other` bin by bin. Addition is associative, so any merge order
    /// gives the same counts.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.geometry != other.geometry {
            return Err(Error::invalid("histogram", "cannot merge differing geometries"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    /// Counts per unit length, normalised by `total`.
    pub fn density(&self) -> Vec<f64> {
        let scale = 1.0 / (self.total.max(1) as f64 * self.geometry.width());
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Fraction of `total` in each bin.
    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Probability mass per bin from quadrature, plus the mass outside the range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedDensity {
    pub geometry: BinGeometry,
    pub mass: Vec<f64>,
    pub below: f64,
    pub above: f64,
}

impl BinnedDensity {
    pub fn density(&self) -> Vec<f64> {
        let w = self.geometry.width();
        self.mass.iter().map(|m| m / w).collect()
    }

    pub fn total(&self) -> f64 {
        self.below + self.above + self.mass.iter().sum::<f64>()
    }

    /// Mass strictly above `y = 0`, counting bins straddling zero by overlap.
    pub fn upper_mass(&self) -> f64 {
        self.above
            + (0..self.geometry.nbins)
                .map(|i| {
                    let (a, b) = (self.geometry.edge(i), self.geometry.edge(i + 1));
                    if a >= 0.0 {
                        self.mass[i]
                    } else if b > 0.0 {
                        self.mass[i] * b / (b - a)
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    /// Strict membership; `y = 0` belongs to neither side.
    pub fn contains(self, y: f64) -> bool {
        match self {
            Side::Upper => y > 0.0,
            Side::Lower => y < 0.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Upper => Side::Lower,
            Side::Lower => Side::Upper,
        }
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            other => Err(format!("expected `upper` or `lower`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        })
    }
}

/// Keep S₂ hits whose partner landed on `keep_side_s1` of S₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SelectiveFilter {
    pub keep_side_s1: Side,
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        rel_tol: 1e-9,
        abs_tol: 1e-15,
        max_subdivisions: 20_000,
    }
}

/// Normalised `|psi|^2` on the screen slice at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct ScreenSlice {
    params: ExperimentParams,
    clock: PacketClock,
    x1: f64,
    x2: f64,
    pub t: f64,
    /// Normalisation constant squared.
    pub norm2: f64,
    /// Half-width of the window outside which the density is negligible.
    pub window: f64,
}

impl ScreenSlice {
    pub fn new(params: &ExperimentParams, t: f64) -> Result<Self> {
        let (x1, x2) = ballistic_x(params, t);
        let n = normalize(params, x1, x2, t)?;
        Ok(ScreenSlice {
            params: *params,
            clock: PacketClock::new(params, t),
            x1,
            x2,
            t,
            norm2: n * n,
            window: probability_window(params, t),
        })
    }

    /// Slice through both screens at the arrival time.
    pub fn at_screens(params: &ExperimentParams) -> Result<Self> {
        Self::new(params, params.arrival_time())
    }

    pub fn density(&self, y1: f64, y2: f64) -> f64 {
        let c = PairConfiguration::new(self.x1, y1, self.x2, y2, self.t);
        self.norm2
            * PairTerms::with_clock(&self.clock, self.params.statistics, &c)
                .psi()
                .norm_sqr()
    }

    /// Probability of `y1 ∈ r1` and `y2 ∈ r2`. Ranges are clipped to the
    /// window.
    pub fn probability(&self, r1: (f64, f64), r2: (f64, f64)) -> Result<f64> {
        let w = self.window;
        let clip = |(a, b): (f64, f64)| (a.max(-w), b.min(w));
        let (r1, r2) = (clip(r1), clip(r2));
        if r1.0 >= r1.1 || r2.0 >= r2.1 {
            return Ok(0.0);
        }
        integrate_2d(|a, b| self.density(a, b), r1, r2, quad_opts()).converged_value()
    }

    /// Probability of both particles landing on the same side of the axis.
    pub fn same_side_probability(&self) -> Result<f64> {
        let w = self.window;
        Ok(self.probability((0.0, w), (0.0, w))? + self.probability((-w, 0.0), (-w, 0.0))?)
    }

    /// Cell probabilities over `geometry × geometry`, row-major in `y1`.
    pub fn joint_grid(&self, geometry: &BinGeometry) -> Result<Vec<f64>> {
        let n = geometry.nbins;
        (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                self.probability(
                    (geometry.edge(i), geometry.edge(i + 1)),
                    (geometry.edge(j), geometry.edge(j + 1)),
                )
            })
            .collect()
    }

    /// Marginal of `y1` (`particle = 1`) or `y2` (`particle = 2`) binned on
    /// `geometry`.
    pub fn marginal(&self, geometry: &BinGeometry, particle: u8) -> Result<BinnedDensity> {
        let w = self.window;
        let full = (-w, w);
        let cell = |r: (f64, f64)| {
            if particle == 1 {
                self.probability(r, full)
            } else {
                self.probability(full, r)
            }
        };
        binned(geometry, cell, 1.0)
    }

    /// Law of `y2` along the line `y1 = -y2`, normalised over the window.
    /// This is the standard-theory picture of a source that pins the centre
    /// of mass on the axis.
    pub fn anti_diagonal(&self, geometry: &BinGeometry) -> Result<BinnedDensity> {
        let w = self.window;
        let line = |(a, b): (f64, f64)| {
            let (a, b) = (a.max(-w), b.min(w));
            if a >= b {
                return Ok(0.0);
            }
            integrate(|y| self.density(-y, y), a, b, quad_opts()).converged_value()
        };
        let total = line((-w, w))?;
        binned(geometry, line, total)
    }

    /// Density of `y2` conditioned on `y1` lying on the filter side,
    /// normalised to one.
    pub fn conditional_s2(&self, filter: SelectiveFilter) -> ConditionalS2 {
        let w = self.window;
        let r1 = match filter.keep_side_s1 {
            Side::Upper => (0.0, w),
            Side::Lower => (-w, 0.0),
        };
        ConditionalS2 { slice: *self, r1 }
    }
}

/// Mass per bin of `geometry` via `cell`, with the out-of-range tails, scaled
/// by `1 / total`.
fn binned<F: Fn((f64, f64)) -> Result<f64> + Sync>(
    geometry: &BinGeometry,
    cell: F,
    total: f64,
) -> Result<BinnedDensity> {
    let mass: Vec<f64> = (0..geometry.nbins)
        .into_par_iter()
        .map(|i| cell((geometry.edge(i), geometry.edge(i + 1))).map(|m| m / total))
        .collect::<Result<_>>()?;
    let below = cell((f64::NEG_INFINITY, geometry.lo))? / total;
    let above = cell((geometry.hi, f64::INFINITY))? / total;
    Ok(BinnedDensity {
        geometry: *geometry,
        mass,
        below,
        above,
    })
}

/// Conditional law of `y2` given the side of `y1`.
#[derive(Debug, Clone, Copy)]
pub struct ConditionalS2 {
    slice: ScreenSlice,
    r1: (f64, f64),
}

impl ConditionalS2 {
    /// Probability that `y1` lies on the conditioning side.
    pub fn side_probability(&self) -> Result<f64> {
        let w = self.slice.window;
        self.slice.probability(self.r1, (-w, w))
    }

    pub fn binned(&self, geometry: &BinGeometry) -> Result<BinnedDensity> {
        let total = self.side_probability()?;
        binned(geometry, |r| self.slice.probability(self.r1, r), total)
    }

    /// Conditional mass of `y2 > 0`.
    pub fn upper_mass(&self) -> Result<f64> {
        let w = self.slice.window;
        Ok(self.slice.probability(self.r1, (0.0, w))? / self.side_probability()?)
    }
}

/// Standard-theory probability of hits in `[yM, yM + Δ] × [yN, yN + Δ]` at
/// time `t`.
pub fn sqm_joint_probability(
    params: &ExperimentParams,
    y_m: f64,
    y_n: f64,
    delta: f64,
    t: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", "detector width must be positive"));
    }
    ScreenSlice::new(params, t)?.probability((y_m, y_m + delta), (y_n, y_n + delta))
}

/// Standard-theory density of `y2` given `y1` on the filter side, binned.
pub fn sqm_conditional_s2_density(
    params: &ExperimentParams,
    t: f64,
    condition: SelectiveFilter,
    grid: &BinGeometry,
) -> Result<BinnedDensity> {
    ScreenSlice::new(params, t)?.conditional_s2(condition).binned(grid)
}

/// A pair dropped from the ensemble, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedPair {
    pub pair_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutcome {
    pub events: Vec<DetectionEvent>,
    /// Initial `(y1, y2)` of each event, aligned with `events`.
    pub starts: Vec<(f64, f64)>,
    pub excluded: Vec<ExcludedPair>,
    /// Sampler proposals over all pairs, accepted or not.
    pub proposals: u64,
    /// Pairs the sampler delivered.
    pub drawn: u64,
    pub n_pairs: u64,
}

impl EnsembleOutcome {
    pub fn acceptance_rate(&self) -> f64 {
        self.drawn as f64 / self.proposals.max(1) as f64
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded.len() as f64 / self.n_pairs.max(1) as f64
    }

    /// Events with both hits strictly on the same side.
    pub fn same_side_count(&self) -> usize {
        self.events.iter().filter(|e| e.y_s1 * e.y_s2 > 0.0).count()
    }
}

enum PairResult {
    Landed {
        event: DetectionEvent,
        start: (f64, f64),
        proposals: u64,
    },
    Excluded {
        pair: ExcludedPair,
        proposals: u64,
        drawn: bool,
    },
}

/// Samples `n_pairs` initial conditions, integrates each to the screens and
/// records the hits. Failing pairs are excluded and listed; the batch itself
/// only fails on invalid input.
pub fn bqm_ensemble(
    params: &ExperimentParams,
    spec: &SamplerSpec,
    n_pairs: u64,
    settings: &IntegratorSettings,
) -> Result<EnsembleOutcome> {
    params.validate()?;
    spec.validate(params)?;
    settings.validate()?;
    if n_pairs == 0 {
        return Err(Error::invalid("run.n_pairs", "need at least one pair"));
    }
    let t_d = params.arrival_time();
    let results: Vec<PairResult> = (0..n_pairs)
        .into_par_iter()
        .map(|id| {
            let draw = match sample_pair(params, spec, 0.0, id) {
                Ok(d) => d,
                Err(e) => {
                    let proposals = match e {
                        Error::RejectionOverflow { rejects, .. } => rejects,
                        _ => 0,
                    };
                    return PairResult::Excluded {
                        pair: ExcludedPair {
                            pair_id: id,
                            reason: e.to_string(),
                        },
                        proposals,
                        drawn: false,
                    };
                }
            };
            match advance_pair(params, draw.config, t_d, settings) {
                Ok(end) => PairResult::Landed {
                    event: DetectionEvent {
                        y_s1: end.y1,
                        y_s2: end.y2,
                        t_arrive: t_d,
                        pair_id: id,
                    },
                    start: (draw.config.y1, draw.config.y2),
                    proposals: draw.proposals,
                },
                Err(e) => PairResult::Excluded {
                    pair: ExcludedPair {
                        pair_id: id,
                        reason: e.to_string(),
                    },
                    proposals: draw.proposals,
                    drawn: true,
                },
            }
        })
        .collect();

    let mut out = EnsembleOutcome {
        events: Vec::with_capacity(results.len()),
        starts: Vec::with_capacity(results.len()),
        excluded: Vec::new(),
        proposals: 0,
        drawn: 0,
        n_pairs,
    };
    for r in results {
        match r {
            PairResult::Landed {
                event,
                start,
                proposals,
            } => {
                out.events.push(event);
                out.starts.push(start);
                out.proposals += proposals;
                out.drawn += 1;
            }
            PairResult::Excluded {
                pair,
                proposals,
                drawn,
            } => {
                log::debug!("pair {} excluded: {}", pair.pair_id, pair.reason);
                out.excluded.push(pair);
                out.proposals += proposals;
                out.drawn += drawn as u64;
            }
        }
    }
    if !out.excluded.is_empty() {
        log::warn!(
            "{} of {} pairs excluded from the ensemble",
            out.excluded.len(),
            n_pairs
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectiveOutcome {
    pub kept: Vec<DetectionEvent>,
    /// Events whose S₁ hit was on the other side.
    pub rejected: usize,
    /// Events with `y_s1 == 0` exactly.
    pub ties: usize,
}

/// Keeps the events whose S₁ hit lies strictly on the filter side.
pub fn apply_selective_detection(events: &[DetectionEvent], filter: SelectiveFilter) -> SelectiveOutcome {
    let mut out = SelectiveOutcome {
        kept: Vec::new(),
        rejected: 0,
        ties: 0,
    };
    for e in events {
        if e.y_s1 == 0.0 {
            out.ties += 1;
        } else if filter.keep_side_s1.contains(e.y_s1) {
            out.kept.push(*e);
        } else {
            out.rejected += 1;
        }
    }
    out
}

/// Fraction of events whose particle 1 and particle 2 land on the side they
/// started from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideCorrelation {
    pub particle1_same_side: f64,
    pub particle2_same_side: f64,
    pub events: usize,
}

pub fn slit_side_correlation(outcome: &EnsembleOutcome) -> SideCorrelation {
    let n = outcome.events.len();
    let (mut a, mut b) = (0usize, 0usize);
    for (e, s) in outcome.events.iter().zip(&outcome.starts) {
        a += (e.y_s1 * s.0 > 0.0) as usize;
        b += (e.y_s2 * s.1 > 0.0) as usize;
    }
    let frac = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    SideCorrelation {
        particle1_same_side: frac(a),
        particle2_same_side: frac(b),
        events: n,
    }
}

/// Event counts over `geometry × geometry`, row-major in `y_s1`, plus the
/// number of events outside the grid.
pub fn bqm_joint_grid(events: &[DetectionEvent], geometry: &BinGeometry) -> (Vec<u64>, u64) {
    let n = geometry.nbins;
    let mut counts = vec![0; n * n];
    let mut outside = 0;
    for e in events {
        match (geometry.index(e.y_s1), geometry.index(e.y_s2)) {
            (Some(i), Some(j)) => counts[i * n + j] += 1,
            _ => outside += 1,
        }
    }
    (counts, outside)
}

/// True when cell `(i, j)` meets the anti-diagonal `y2 = -y1` in more than a
/// point.
pub fn on_anti_diagonal(geometry: &BinGeometry, i: usize, j: usize) -> bool {
    let (a, b) = (-geometry.edge(i + 1), -geometry.edge(i));
    let (c, d) = (geometry.edge(j), geometry.edge(j + 1));
    a.max(c) < b.min(d)
}

/// Interference maxima located in a histogram or density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeReport {
    /// Positions of the accepted maxima, ascending.
    pub maxima: Vec<f64>,
    /// Mean distance between adjacent maxima.
    pub spacing: f64,
}

/// Indices of interior local maxima whose topographic prominence reaches
/// `floor(height)`. Plateaus count once, at their middle.
fn prominent_maxima<F: Fn(f64) -> f64>(v: &[f64], floor: F) -> Vec<usize> {
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                peaks.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
        .into_iter()
        .filter(|&p| {
            let h = v[p];
            let mut left_min = h;
            for k in (0..p).rev() {
                if v[k] > h {
                    break;
                }
                left_min = left_min.min(v[k]);
            }
            let mut right_min = h;
            for &x in &v[p + 1..] {
                if x > h {
                    break;
                }
                right_min = right_min.min(x);
            }
            h - left_min.max(right_min) >= floor(h)
        })
        .collect()
}

/// Sub-bin peak position from a parabola through the peak and its
/// neighbours.
fn refine(v: &[f64], g: &BinGeometry, i: usize) -> f64 {
    let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
    let curv = a - 2.0 * b + c;
    let shift = if curv < 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
    g.centre(i) + shift.clamp(-0.5, 0.5) * g.width()
}

fn report(v: &[f64], g: &BinGeometry, peaks: Vec<usize>) -> Result<FringeReport> {
    if peaks.len() < 2 {
        return Err(Error::NoFringesDetected { found: peaks.len() });
    }
    let maxima: Vec<f64> = peaks.iter().map(|&i| refine(v, g, i)).collect();
    let spacing = (maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64;
    Ok(FringeReport { maxima, spacing })
}

/// Mean spacing of the interference maxima of an event histogram. A maximum
/// must stand out from its surroundings by at least 5% of the tallest bin and
/// by four Poisson standard deviations of its own count.
pub fn fringe_spacing(h: &Histogram) -> Result<FringeReport> {
    let v: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    let top = v.iter().cloned().fold(0.0, f64::max);
    let peaks = prominent_maxima(&v, |height| (0.05 * top).max(4.0 * height.sqrt()));
    report(&v, &h.geometry, peaks)
}

/// Fringe spacing of a quadrature density, with a 5%-of-maximum prominence
/// floor.
pub fn fringe_spacing_density(d: &BinnedDensity) -> Result<FringeReport> {
    let top = d.mass.iter().cloned().fold(0.0, f64::max);
    let peaks = prominent_maxima(&d.mass, |_| 0.05 * top);
    report(&d.mass, &d.geometry, peaks)
}

/// Writes `bin_lo,bin_hi,count,density` rows, with optional extra columns.
pub fn write_histogram_csv<W: Write>(
    h: &Histogram,
    extra: &[(&str, &[f64])],
    mut w: W,
) -> std::io::Result<()> {
    write!(w, "bin_lo,bin_hi,count,density")?;
    for (name, _) in extra {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    let dens = h.density();
    for i in 0..h.geometry.nbins {
        write!(
            w,
            "{},{},{},{}",
            h.geometry.edge(i),
            h.geometry.edge(i + 1),
            h.counts[i],
            dens[i]
        )?;
        for (_, col) in extra {
            write!(w, ",{}", col[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
