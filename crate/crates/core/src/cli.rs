//! Batch front end.
//!
//! Exit codes: 0 on success, 1 when the physics fails (a node, a failed
//! check, no fringes), 2 when the input is wrong.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{RunConfig, FORMAT_VERSION};
use crate::detection::{
    apply_selective_detection, bqm_ensemble, bqm_joint_grid, fringe_spacing, fringe_spacing_density,
    on_anti_diagonal, slit_side_correlation, write_histogram_csv, EnsembleOutcome, Histogram,
    ScreenSlice, SelectiveFilter,
};
use crate::error::{Error, Result};
use crate::guidance::{on_ballistic_slice, velocity_y};
use crate::integrator::integrate_pair;
use crate::potential::{default_stencil, q_cm, q_numeric, quantum_force_cm};
use crate::sampler::sample_pair;
use crate::stats::{chi_square, total_variation};
use crate::validate::{run_suite, Status};

#[derive(Debug, Parser)]
#[command(name = "pilotwave", version, about = "Bohmian and standard statistics of an entangled two double-slit experiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `sampler.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `run.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a few pairs and dump their trajectories.
    Trajectory(Common),
    /// Bohmian Monte Carlo with screen histograms.
    Ensemble(Common),
    /// Standard-theory joint probabilities over the screen grid.
    SqmJoint(Common),
    /// Ensemble, selective filter and the standard conditional density.
    Selective(Common),
    /// Both theories side by side.
    Compare(Common),
    /// Run the invariant suite.
    Validate(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Trajectory(c) => ("trajectory", c),
            Command::Ensemble(c) => ("ensemble", c),
            Command::SqmJoint(c) => ("sqm-joint", c),
            Command::Selective(c) => ("selective", c),
            Command::Compare(c) => ("compare", c),
            Command::Validate(c) => ("validate", c),
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        2
    } else {
        1
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_subcommand<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, common) = cli.command.parts();
    let cfg = match resolve(common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    let out = Output::new(&cfg, name);
    let result = pool.install(|| match &cli.command {
        Command::Trajectory(_) => trajectory(&cfg, &out),
        Command::Ensemble(_) => ensemble(&cfg, &out),
        Command::SqmJoint(_) => sqm_joint(&cfg, &out),
        Command::Selective(_) => selective(&cfg, &out),
        Command::Compare(_) => compare(&cfg, &out),
        Command::Validate(_) => validate(&cfg, &out),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path).map_err(|e| match e {
            // An unreadable config file is an input problem.
            Error::Io { path, reason } => Error::ConfigParse {
                line: 0,
                key: "--config".into(),
                reason: format!("{path}: {reason}"),
            },
            e => e,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes files into the output directory, each stamped with the format
/// version and the resolved config.
struct Output {
    dir: PathBuf,
    subcommand: &'static str,
    config: Vec<(&'static str, String)>,
}

impl Output {
    fn new(cfg: &RunConfig, subcommand: &'static str) -> Self {
        Output {
            dir: cfg.out_dir.clone(),
            subcommand,
            config: cfg.resolved(),
        }
    }

    fn io_err(path: &Path, e: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        }
    }

    fn csv<F>(&self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        std::fs::create_dir_all(&self.dir).map_err(|e| Self::io_err(&self.dir, e))?;
        let path = self.dir.join(name);
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "# format_version = {FORMAT_VERSION}")?;
            writeln!(w, "# subcommand = {}", self.subcommand)?;
            for (k, v) in &self.config {
                writeln!(w, "# {k} = {v}")?;
            }
            body(&mut w)?;
            w.flush()
        };
        write().map_err(|e| Self::io_err(&path, e))
    }

    fn report(&self, results: Value) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Self::io_err(&self.dir, e))?;
        let config: serde_json::Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
            .collect();
        let doc = json!({
            "format_version": FORMAT_VERSION,
            "subcommand": self.subcommand,
            "config": config,
            "results": results,
        });
        let path = self.dir.join("report.json");
        let text = serde_json::to_string_pretty(&doc).expect("report is plain data");
        std::fs::write(&path, text + "\n").map_err(|e| Self::io_err(&path, e))
    }
}

/// JSON number, or `null` for non-finite values.
fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn trajectory(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let p = &cfg.params;
    let t_d = p.arrival_time();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for i in 0..cfg.trajectory_pairs {
        let draw = sample_pair(p, &cfg.sampler, 0.0, i)?;
        let tr = integrate_pair(p, draw.config, t_d, &cfg.integrator)?;
        out.csv(&format!("trajectory_{i}.csv"), |w| tr.write_csv(p, w))?;
        for s in &tr.samples {
            rows.push((i, *s, tr.y0));
        }
        let last = tr.last();
        summary.push(json!({
            "pair_id": i,
            "y0": num(tr.y0),
            "start": [num(draw.config.y1), num(draw.config.y2)],
            "end": [num(last.y1), num(last.y2)],
            "steps": tr.samples.len() - 1,
            "max_com_deviation": num(tr.max_com_deviation(p)),
        }));
    }
    out.csv("com_potential.csv", |w| {
        writeln!(w, "pair_id,t,y0,q_cm,force_y,q_full")?;
        let h = default_stencil(p);
        for &(i, s, y0) in &rows {
            let full = q_numeric(p, &s, h).unwrap_or(f64::NAN);
            writeln!(w, "{i},{},{y0},{},{},{full}", s.t, q_cm(p, y0, s.t), quantum_force_cm(p, y0, s.t))?;
        }
        Ok(())
    })?;
    out.report(json!({ "arrival_time": num(t_d), "pairs": summary }))?;
    println!("wrote {} trajectories to {}", cfg.trajectory_pairs, cfg.out_dir.display());
    Ok(0)
}

fn write_events(out: &Output, outcome: &EnsembleOutcome) -> Result<()> {
    out.csv("events.csv", |w| {
        writeln!(w, "pair_id,y_s1,y_s2,t_arrive,y1_start,y2_start")?;
        for (e, s) in outcome.events.iter().zip(&outcome.starts) {
            writeln!(w, "{},{},{},{},{},{}", e.pair_id, e.y_s1, e.y_s2, e.t_arrive, s.0, s.1)?;
        }
        Ok(())
    })
}

fn ensemble_summary(cfg: &RunConfig, outcome: &EnsembleOutcome) -> Value {
    let max_com = outcome
        .events
        .iter()
        .map(|e| (0.5 * (e.y_s1 + e.y_s2)).abs())
        .fold(0.0, f64::max);
    json!({
        "n_pairs": outcome.n_pairs,
        "events": outcome.events.len(),
        "excluded": outcome.excluded.len(),
        "excluded_fraction": num(outcome.excluded_fraction()),
        "excluded_pairs": outcome.excluded,
        "acceptance_rate": num(outcome.acceptance_rate()),
        "same_side_events": outcome.same_side_count(),
        "max_abs_com_at_screens": num(max_com),
        "arrival_time": num(cfg.params.arrival_time()),
        "slit_side_correlation": slit_side_correlation(outcome),
    })
}

fn screen_histograms(cfg: &RunConfig, outcome: &EnsembleOutcome) -> Result<(Histogram, Histogram)> {
    let g = cfg.histogram_geometry()?;
    Ok((
        Histogram::from_values(g, outcome.events.iter().map(|e| e.y_s1)),
        Histogram::from_values(g, outcome.events.iter().map(|e| e.y_s2)),
    ))
}

fn ensemble(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let outcome = bqm_ensemble(&cfg.params, &cfg.sampler, cfg.n_pairs, &cfg.integrator)?;
    let (h1, h2) = screen_histograms(cfg, &outcome)?;
    write_events(out, &outcome)?;
    out.csv("hist_s1.csv", |w| write_histogram_csv(&h1, &[], w))?;
    out.csv("hist_s2.csv", |w| write_histogram_csv(&h2, &[], w))?;
    let mut summary = ensemble_summary(cfg, &outcome);
    summary["hist_s1_out_of_range"] = json!([h1.underflow, h1.overflow]);
    summary["hist_s2_out_of_range"] = json!([h2.underflow, h2.overflow]);
    out.report(summary)?;
    println!(
        "{} events, {} excluded, acceptance rate {:.4}",
        outcome.events.len(),
        outcome.excluded.len(),
        outcome.acceptance_rate()
    );
    Ok(0)
}

fn write_joint_grid(
    out: &Output,
    g: &crate::detection::BinGeometry,
    sqm: &[f64],
    bqm: Option<&[f64]>,
) -> Result<()> {
    out.csv("joint_grid.csv", |w| {
        write!(w, "y1_lo,y1_hi,y2_lo,y2_hi,sqm_probability")?;
        if bqm.is_some() {
            write!(w, ",bqm_fraction")?;
        }
        writeln!(w)?;
        let n = g.nbins;
        for i in 0..n {
            for j in 0..n {
                write!(
                    w,
                    "{},{},{},{},{}",
                    g.edge(i),
                    g.edge(i + 1),
                    g.edge(j),
                    g.edge(j + 1),
                    sqm[i * n + j]
                )?;
                if let Some(b) = bqm {
                    write!(w, ",{}", b[i * n + j])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

/// Probability of the cells that miss the anti-diagonal.
fn off_anti_diagonal(g: &crate::detection::BinGeometry, cells: &[f64]) -> f64 {
    let n = g.nbins;
    (0..n * n)
        .filter(|&k| !on_anti_diagonal(g, k / n, k % n))
        .map(|k| cells[k])
        .sum()
}

fn sqm_joint(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let slice = ScreenSlice::at_screens(&cfg.params)?;
    let g = cfg.grid_geometry()?;
    let cells = slice.joint_grid(&g)?;
    write_joint_grid(out, &g, &cells, None)?;
    let same_side = slice.same_side_probability()?;
    out.report(json!({
        "arrival_time": num(slice.t),
        "normalisation_squared": num(slice.norm2),
        "window_half_width": num(slice.window),
        "grid_mass": num(cells.iter().sum()),
        "same_side_probability": num(same_side),
        "off_anti_diagonal_probability": num(off_anti_diagonal(&g, &cells)),
    }))?;
    println!("SQM same-side probability {same_side:.6}");
    Ok(0)
}

fn selective(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let p = &cfg.params;
    let outcome = bqm_ensemble(p, &cfg.sampler, cfg.n_pairs, &cfg.integrator)?;
    let filter = SelectiveFilter {
        keep_side_s1: cfg.selective_side,
    };
    let sel = apply_selective_detection(&outcome.events, filter);
    let g = cfg.histogram_geometry()?;
    let h1 = Histogram::from_values(g, outcome.events.iter().map(|e| e.y_s1));
    let h2 = Histogram::from_values(g, sel.kept.iter().map(|e| e.y_s2));

    let slice = ScreenSlice::at_screens(p)?;
    let conditional = slice.conditional_s2(filter);
    let sqm_cond = conditional.binned(&g)?;
    let sqm_upper = conditional.upper_mass()?;
    let sqm_line = slice.anti_diagonal(&g)?;

    write_events(out, &outcome)?;
    out.csv("hist_s1.csv", |w| write_histogram_csv(&h1, &[], w))?;
    out.csv("hist_s2.csv", |w| {
        write_histogram_csv(
            &h2,
            &[
                ("sqm_conditional_density", &sqm_cond.density()),
                ("sqm_anti_diagonal_density", &sqm_line.density()),
            ],
            w,
        )
    })?;

    let kept = sel.kept.len();
    let opposite = sel
        .kept
        .iter()
        .filter(|e| cfg.selective_side.opposite().contains(e.y_s2))
        .count();
    let upper_s2 = sel.kept.iter().filter(|e| e.y_s2 > 0.0).count();
    let frac = |k: usize| if kept == 0 { f64::NAN } else { k as f64 / kept as f64 };
    let t_d = p.arrival_time();
    let expected = p.one_particle_fringe_spacing(t_d);
    let fringes = fringe_spacing(&h2);
    let fringe_json = match &fringes {
        Ok(r) => json!({
            "maxima": r.maxima.len(),
            "positions": r.maxima.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "spacing": num(r.spacing),
            "ratio_to_formula": num(r.spacing / expected),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let sqm_line_spacing = fringe_spacing_density(&sqm_line).map(|r| r.spacing).ok();
    let mut summary = ensemble_summary(cfg, &outcome);
    summary["selective"] = json!({
        "keep_side_s1": cfg.selective_side,
        "kept": kept,
        "rejected": sel.rejected,
        "ties": sel.ties,
        "bqm_s2_opposite_side_fraction": num(frac(opposite)),
        "bqm_upper_s2_fraction": num(frac(upper_s2)),
        "sqm_conditional_upper_s2_mass": num(sqm_upper),
        "bqm_fringes": fringe_json,
        "sqm_anti_diagonal_spacing": sqm_line_spacing.map_or(Value::Null, num),
        "formula_spacing": num(expected),
    });
    out.report(summary)?;
    println!(
        "kept {kept}; BQM upper-S2 fraction {:.4}; SQM upper-S2 mass {sqm_upper:.6}",
        frac(upper_s2)
    );
    match fringes {
        Ok(r) => {
            println!(
                "fringe spacing {:.4} from {} maxima; pi hbar t/(Y m) = {expected:.4}",
                r.spacing,
                r.maxima.len()
            );
            Ok(0)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(1)
        }
    }
}

fn compare(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let p = &cfg.params;
    let outcome = bqm_ensemble(p, &cfg.sampler, cfg.n_pairs, &cfg.integrator)?;
    let slice = ScreenSlice::at_screens(p)?;

    let grid = cfg.grid_geometry()?;
    let sqm_cells = slice.joint_grid(&grid)?;
    let (counts, outside) = bqm_joint_grid(&outcome.events, &grid);
    let n_events = outcome.events.len().max(1) as f64;
    let bqm_cells: Vec<f64> = counts.iter().map(|&c| c as f64 / n_events).collect();
    let sqm_outside = (1.0 - sqm_cells.iter().sum::<f64>()).max(0.0);
    let mut sqm_all = sqm_cells.clone();
    sqm_all.push(sqm_outside);
    let mut bqm_all = bqm_cells.clone();
    bqm_all.push(outside as f64 / n_events);
    let tv = total_variation(&sqm_all, &bqm_all);

    let (h1, h2) = screen_histograms(cfg, &outcome)?;
    let m1 = slice.marginal(&h1.geometry, 1)?;
    let m2 = slice.marginal(&h2.geometry, 2)?;
    let chi = |h: &Histogram, m: &crate::detection::BinnedDensity| {
        let mut obs = vec![h.underflow];
        obs.extend(&h.counts);
        obs.push(h.overflow);
        let mut exp = vec![m.below];
        exp.extend(&m.mass);
        exp.push(m.above);
        let total: f64 = exp.iter().sum();
        let exp: Vec<f64> = exp.iter().map(|e| e / total).collect();
        chi_square(&obs, &exp, 5.0)
    };
    let chi1 = chi(&h1, &m1);
    let chi2 = chi(&h2, &m2);

    let tol = 1e-6 * p.sigma0;
    let bqm_off_diagonal = outcome
        .events
        .iter()
        .filter(|e| (0.5 * (e.y_s1 + e.y_s2)).abs() > tol)
        .count();
    let sqm_same_side = slice.same_side_probability()?;

    write_events(out, &outcome)?;
    out.csv("hist_s1.csv", |w| write_histogram_csv(&h1, &[("sqm_density", &m1.density())], w))?;
    out.csv("hist_s2.csv", |w| write_histogram_csv(&h2, &[("sqm_density", &m2.density())], w))?;
    write_joint_grid(out, &grid, &sqm_cells, Some(&bqm_cells))?;

    let mut summary = ensemble_summary(cfg, &outcome);
    summary["individual"] = json!({
        "bqm_same_side_events": outcome.same_side_count(),
        "sqm_same_side_probability": num(sqm_same_side),
        "bqm_off_anti_diagonal_events": bqm_off_diagonal,
        "off_anti_diagonal_tolerance": num(tol),
        "sqm_off_anti_diagonal_probability": num(off_anti_diagonal(&grid, &sqm_cells)),
    });
    summary["ensemble"] = json!({
        "grid_nbins": grid.nbins,
        "grid_half_width": num(grid.hi),
        "total_variation": num(tv),
        "chi_square_s1": chi1,
        "chi_square_s2": chi2,
    });
    out.report(summary)?;
    println!(
        "BQM same-side events {}; SQM same-side probability {sqm_same_side:.6}; TV {tv:.4}; chi2 p-values {:.4} {:.4}",
        outcome.same_side_count(),
        chi1.p_value,
        chi2.p_value
    );
    Ok(0)
}

fn validate(cfg: &RunConfig, out: &Output) -> Result<i32> {
    let checks = run_suite(cfg);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
    out.report(json!({ "checks": checks, "failed": failed }))?;
    // A quick look at the field on the slit plane, for the record.
    let c = on_ballistic_slice(&cfg.params, cfg.params.slit_y, -cfg.params.slit_y, 0.0);
    if let Ok(v) = velocity_y(&cfg.params, &c) {
        log::info!("velocity at the slit centres: ({}, {})", v.vy1, v.vy2);
    }
    Ok(if failed == 0 { 0 } else { 1 })
}
