//! Command-line front end.
//!
//! Each subcommand writes its CSV (and JSON or SVG where relevant) into the
//! output directory together with `<command>_manifest.json`.
//!
//! | exit | meaning |
//! |---|---|
//! | 0 | success |
//! | 2 | correction stalled |
//! | 3 | correction diverged |
//! | 64 | configuration could not be read or parsed |
//! | 65 | ray trace or caustic extraction failed |
//! | 66 | wavefront carries no aberration |

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::catastrophe::{classify, trace_bifurcation_set, BifurcationWindow, CatastropheLabel, Thresholds};
use crate::corrector::{
    balance_primary, caustic_objective, optimize_caustic, toc_run, CorrectionConfig, CorrectionTrace, Stage,
};
use crate::error::Error;
use crate::io::{
    caustic_curve_csv, csv_table, exit_rays_csv, read_input, svg_polylines, write_output, OracleColumns, RunManifest,
};
use crate::lens::{brute_force_caustic, caustic_profile, trace_through_lens, LensPrescription};
use crate::wavefront::{pupil_variance, rms_spot, rms_spot_quadrature, strehl, TermKind, WavefrontSpec};

pub const OUT_DIR_ENV: &str = "CAUSTICLAB_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_STALL: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_TRACE: i32 = 65;
pub const EXIT_NO_ABERRATION: i32 = 66;
/// Any failure outside the fixed scheme.
pub const EXIT_OTHER: i32 = 1;

/// Step of the neighbouring-ray oracle behind `caustic --oracle`.
pub const ORACLE_DH: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "causticlab", version, about = "Ray caustics, catastrophe classification and caustic-driven correction")]
pub struct Cli {
    /// Lens JSON for `trace`/`caustic`, correction JSON for `correct`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,

    /// Convergence tolerance for `correct`; oracle pass threshold for `caustic`.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Add brute-force cross-check columns where available.
    #[arg(long, global = true)]
    pub oracle: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectMode {
    Balance,
    Descend,
    Toc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DescendObjective {
    /// Caustic measure inside `--z-min..--z-max`.
    Caustic,
    /// Quadrature spot variance.
    Spot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    A2,
    A3,
    A4,
    D4plus,
    D4minus,
}

impl From<LabelArg> for CatastropheLabel {
    fn from(l: LabelArg) -> Self {
        match l {
            LabelArg::A2 => Self::A2,
            LabelArg::A3 => Self::A3,
            LabelArg::A4 => Self::A4,
            LabelArg::D4plus => Self::D4plus,
            LabelArg::D4minus => Self::D4minus,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trace collimated rays through the lens: `trace.csv` (h,r_e,z_e,alpha).
    Trace {
        /// Explicit heights; overrides the grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        heights: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0)]
        h_min: f64,
        #[arg(long, default_value_t = 15.0)]
        h_max: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Meridional caustic of the lens: `caustic.csv`, optionally `caustic.svg`.
    Caustic {
        #[arg(long, default_value_t = 0.3)]
        h_min: f64,
        #[arg(long, default_value_t = 15.0)]
        h_max: f64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long)]
        svg: bool,
    },
    /// Catastrophe label of a wavefront: `classify.json`.
    Classify { wavefront: PathBuf },
    /// Correction run: `correct.csv` and `correct_summary.json`.
    Correct {
        wavefront: PathBuf,
        #[arg(long, value_enum, default_value = "toc")]
        mode: CorrectMode,
        #[arg(long, value_enum, default_value = "caustic")]
        objective: DescendObjective,
        #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
        z_min: f64,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        z_max: f64,
    },
    /// Strehl ratio against quadrature order: `strehl.csv` and `strehl.json`.
    Strehl {
        wavefront: PathBuf,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        k: f64,
        #[arg(long, value_delimiter = ',', default_value = "16,24,32,48")]
        orders: Vec<usize>,
    },
    /// Bifurcation set of a normal form: `bifurcation.csv`, optionally SVG.
    Bifurcation {
        #[arg(long, value_enum)]
        label: LabelArg,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        sweep_min: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        sweep_max: f64,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        fixed: f64,
        #[arg(long, default_value_t = 401)]
        resolution: usize,
        #[arg(long)]
        svg: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Trace { .. } => "trace",
            Self::Caustic { .. } => "caustic",
            Self::Classify { .. } => "classify",
            Self::Correct { .. } => "correct",
            Self::Strehl { .. } => "strehl",
            Self::Bifurcation { .. } => "bifurcation",
        }
    }
}

/// A failed command: exit code plus message for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, e: impl std::fmt::Display) -> Self {
        Self { code, message: e.to_string() }
    }
}

fn classify_error(command: &str, e: Error) -> Failure {
    let code = match &e {
        Error::Config(_) => EXIT_CONFIG,
        Error::NoAberration => EXIT_NO_ABERRATION,
        Error::Stalled { .. } => EXIT_STALL,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ if matches!(command, "trace" | "caustic") => EXIT_TRACE,
        _ => EXIT_OTHER,
    };
    Failure::new(code, e)
}

struct Run<'a> {
    cli: &'a Cli,
    manifest: RunManifest,
}

impl Run<'_> {
    fn read(&mut self, path: &Path) -> Result<String, Error> {
        let text = read_input(path)?;
        self.manifest.inputs.push(path.to_path_buf());
        Ok(text)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Error> {
        let path = write_output(&self.cli.out_dir, name, contents)?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn lens(&mut self) -> Result<LensPrescription, Error> {
        match self.cli.config.clone() {
            Some(p) => {
                let text = self.read(&p)?;
                LensPrescription::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(LensPrescription::sample()),
        }
    }

    fn wavefront(&mut self, path: &Path) -> Result<WavefrontSpec, Error> {
        let text = self.read(path)?;
        WavefrontSpec::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn correction_config(&mut self) -> Result<CorrectionConfig, Error> {
        let mut cfg = match self.cli.config.clone() {
            Some(p) => {
                let text = self.read(&p)?;
                CorrectionConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => CorrectionConfig::default(),
        };
        if let Some(t) = self.cli.tol {
            cfg.tolerance = t;
        }
        Ok(cfg)
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) || n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn cmd_trace(run: &mut Run, heights: &Option<Vec<f64>>, h_min: f64, h_max: f64, samples: usize) -> Result<(), Error> {
    let lens = run.lens()?;
    let hs = match heights {
        Some(h) => h.clone(),
        None => grid(h_min, h_max, samples),
    };
    let rays = hs.iter().map(|&h| trace_through_lens(h, &lens)).collect::<Result<Vec<_>, _>>()?;
    run.write("trace.csv", &exit_rays_csv(&rays))
}

fn cmd_caustic(run: &mut Run, h_min: f64, h_max: f64, samples: usize, svg: bool) -> Result<(), Error> {
    let lens = run.lens()?;
    let curve = caustic_profile(&lens, &grid(h_min, h_max, samples))?;
    let oracle = if run.cli.oracle {
        let cols: Vec<OracleColumns> = curve
            .samples
            .iter()
            .map(|s| match brute_force_caustic(s.h, ORACLE_DH, &lens) {
                Ok((r, z)) if s.valid => {
                    OracleColumns { r, z, deviation: (r - s.r_caustic).hypot(z - s.z_caustic) }
                }
                _ => OracleColumns { r: f64::NAN, z: f64::NAN, deviation: f64::NAN },
            })
            .collect();
        Some(cols)
    } else {
        None
    };
    run.write("caustic.csv", &caustic_curve_csv(&curve, oracle.as_deref()))?;
    if let Some(cols) = &oracle {
        let max_dev = cols.iter().map(|c| c.deviation).filter(|d| d.is_finite()).fold(0.0, f64::max);
        let mut summary = json!({ "oracle_dh": ORACLE_DH, "max_deviation": max_dev });
        if let Some(t) = run.cli.tol {
            summary["tol"] = json!(t);
            summary["within_tol"] = json!(max_dev <= t);
        }
        run.write("caustic_oracle.json", &serde_json::to_string_pretty(&summary).unwrap())?;
    }
    if svg {
        let upper: Vec<(f64, f64)> = curve.valid_samples().map(|s| (s.z_caustic, s.r_caustic)).collect();
        let lower: Vec<(f64, f64)> = upper.iter().map(|&(z, r)| (z, -r)).collect();
        run.write("caustic.svg", &svg_polylines(&[upper, lower]))?;
    }
    Ok(())
}

fn cmd_classify(run: &mut Run, path: &Path) -> Result<(), Error> {
    let w = run.wavefront(path)?;
    let c = classify(&w, &Thresholds::default())?;
    run.write("classify.json", &serde_json::to_string_pretty(&c).unwrap())
}

/// Coefficient updates in a trace. A descent trace starts with its initial
/// point; a TOC trace records the refold jump as the first refold entry.
fn update_steps(trace: &CorrectionTrace) -> usize {
    if trace.count(Stage::Fingerprint) == 0 {
        trace.count(Stage::Descend).saturating_sub(1)
    } else {
        trace.count(Stage::Descend) + trace.count(Stage::Refold).saturating_sub(1)
    }
}

fn trace_summary(trace: &CorrectionTrace) -> serde_json::Value {
    let last = trace.last();
    json!({
        "label": trace.label,
        "final_strehl": last.strehl,
        "final_objective": last.objective,
        "final_coefficients": last.c,
        "modes": trace.modes.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "iterations": update_steps(trace),
        "stages": trace.stages().iter().map(ToString::to_string).collect::<Vec<_>>(),
    })
}

fn cmd_correct(
    run: &mut Run,
    path: &Path,
    mode: CorrectMode,
    objective: DescendObjective,
    z_window: (f64, f64),
) -> Result<(), Error> {
    let w = run.wavefront(path)?;
    let cfg = run.correction_config()?;
    match mode {
        CorrectMode::Balance => {
            let a40 = w.coefficient(4, 0, TermKind::Radial);
            let b = balance_primary(a40);
            let rows = vec![b.printed.to_vec(), b.oracle.to_vec()];
            run.write("correct.csv", &csv_table("a20,a31,a22", &rows))?;
            let summary = json!({
                "mode": "balance",
                "a40": a40,
                "printed_relation": { "a20": b.printed[0], "a31": b.printed[1], "a22": b.printed[2] },
                "spot_minimizer": { "a20": b.oracle[0], "a31": b.oracle[1], "a22": b.oracle[2] },
                "consistent": b.consistent,
            });
            run.write("correct_summary.json", &serde_json::to_string_pretty(&summary).unwrap())
        }
        CorrectMode::Descend | CorrectMode::Toc => {
            let result = match (mode, objective) {
                (CorrectMode::Toc, _) => toc_run(&w, &cfg),
                (_, DescendObjective::Caustic) => optimize_caustic(&w, &cfg, |w| caustic_objective(w, z_window)),
                (_, DescendObjective::Spot) => optimize_caustic(&w, &cfg, |w| Ok(rms_spot_quadrature(w))),
            };
            let trace = match result {
                Ok(t) => t,
                Err(Error::Stalled { stage, iterations, trace }) => {
                    run.write("correct.csv", &trace.to_csv())?;
                    let mut summary = trace_summary(&trace);
                    summary["stalled"] = json!(stage);
                    run.write("correct_summary.json", &serde_json::to_string_pretty(&summary).unwrap())?;
                    return Err(Error::Stalled { stage, iterations, trace });
                }
                Err(e) => return Err(e),
            };
            run.write("correct.csv", &trace.to_csv())?;
            let summary = trace_summary(&trace);
            run.write("correct_summary.json", &serde_json::to_string_pretty(&summary).unwrap())
        }
    }
}

fn cmd_strehl(run: &mut Run, path: &Path, k: f64, orders: &[usize]) -> Result<(), Error> {
    let w = run.wavefront(path)?;
    let rows = orders.iter().map(|&o| Ok(vec![o as f64, strehl(&w, k, o)?])).collect::<Result<Vec<_>, Error>>()?;
    run.write("strehl.csv", &csv_table("order,strehl", &rows))?;
    let top = *orders.iter().max().unwrap_or(&crate::wavefront::MIN_STREHL_ORDER);
    let variance = pupil_variance(&w, top.max(crate::wavefront::MIN_STREHL_ORDER));
    let spot = rms_spot(&w).ok();
    let summary = json!({
        "k": k,
        "strehl": rows.last().map(|r| r[1]),
        "pupil_variance": variance,
        "marechal": (-(k * k) * variance).exp(),
        "spot": spot,
    });
    run.write("strehl.json", &serde_json::to_string_pretty(&summary).unwrap())
}

fn cmd_bifurcation(run: &mut Run, label: LabelArg, window: BifurcationWindow, resolution: usize, svg: bool) -> Result<(), Error> {
    let trace = trace_bifurcation_set(label.into(), &window, resolution)?;
    run.write("bifurcation.csv", &trace.to_csv())?;
    if svg {
        run.write("bifurcation.svg", &svg_polylines(&[trace.section()]))?;
    }
    Ok(())
}

/// Runs a parsed command; always writes the manifest.
pub fn run(cli: &Cli, args: Vec<String>) -> Result<RunManifest, Failure> {
    let start = Instant::now();
    let name = cli.command.name();
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut run = Run { cli, manifest: RunManifest::new(name, args) };
    let result = match &cli.command {
        Command::Trace { heights, h_min, h_max, samples } => cmd_trace(&mut run, heights, *h_min, *h_max, *samples),
        Command::Caustic { h_min, h_max, samples, svg } => cmd_caustic(&mut run, *h_min, *h_max, *samples, *svg),
        Command::Classify { wavefront } => cmd_classify(&mut run, wavefront),
        Command::Correct { wavefront, mode, objective, z_min, z_max } => {
            cmd_correct(&mut run, wavefront, *mode, *objective, (*z_min, *z_max))
        }
        Command::Strehl { wavefront, k, orders } => cmd_strehl(&mut run, wavefront, *k, orders),
        Command::Bifurcation { label, sweep_min, sweep_max, fixed, resolution, svg } => cmd_bifurcation(
            &mut run,
            *label,
            BifurcationWindow { sweep: (*sweep_min, *sweep_max), fixed_control: *fixed },
            *resolution,
            *svg,
        ),
    };
    let failure = result.err().map(|e| classify_error(name, e));
    let code = failure.as_ref().map_or(EXIT_OK, |f| f.code);
    let mut manifest = run.manifest;
    manifest.finish(start.elapsed(), code);
    let manifest_name = format!("{name}_manifest.json");
    let written = write_output(&cli.out_dir, &manifest_name, &manifest.to_json());
    match (failure, written) {
        (Some(f), _) => Err(f),
        (None, Err(e)) => Err(Failure::new(EXIT_CONFIG, e)),
        (None, Ok(_)) => Ok(manifest),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let args: Vec<String> = args.into_iter().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli, args.into_iter().skip(1).collect()) {
        Ok(_) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
