//! Subcommand implementations behind the `nvzf` binary. Each command reads
//! its inputs, writes its outputs into an output directory and reports
//! whether the run converged.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use nvzf::hamiltonian::{transition_frequencies, Branch, LineLabel};
use nvzf::inversion::{analyze_spectrum, summarize_results, BatchSummary, FitResult, PeakCount};
use nvzf::io::{read_spectrum_csv, spectrum_to_csv_string, RunConfig};
use nvzf::polarization::{parse_transition, transition_strengths_at, DriveField};
use nvzf::spectra::{merge_dips, rabi_trace, sweep_bz, synthesize_spectrum, GapMinimum, Spectrum};

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Done => 0,
            Outcome::NotConverged => 2,
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot write into {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .map_err(|e| anyhow!("cannot create {}: {}", path.display(), e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_json(&text).with_context(|| format!("config {}", path.display()))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "spectrum".into())
}

/// Rows of `{:.16e}` numbers under a header.
fn table_csv(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct LineRecord {
    pub label: String,
    pub branch: Branch,
    pub m_i: i8,
    pub frequency_hz: f64,
    pub strength: f64,
    pub degenerate_with: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DipRecord {
    pub frequency_hz: f64,
    pub weight: f64,
    pub lines: Vec<String>,
}

/// Sidecar written next to a simulated spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    pub b_z_tesla: f64,
    pub pi_perp_hz: f64,
    pub phi_pi_rad: f64,
    pub pi_par_hz: f64,
    pub inner_splitting_hz: f64,
    pub outer_splitting_hz: f64,
    pub lines: Vec<LineRecord>,
    pub dips: Vec<DipRecord>,
}

pub fn cmd_simulate(config: &RunConfig, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let params = &config.nv_params;
    let field = config.field()?;
    let drive = config.drive_field()?;
    let grid = config.require(&config.frequency_grid, "frequency_grid")?.points()?;
    let shape = config.require(&config.lineshape, "lineshape")?;

    let t = transition_frequencies(params, &field, config.b_z_tesla)?;
    let w = transition_strengths_at(&field, params, &drive, config.b_z_tesla);
    let seed = seed.unwrap_or(config.seed);
    let spectrum = synthesize_spectrum(&t, &w, shape, &grid)?.with_noise(config.noise_sigma, seed);
    let dips = merge_dips(&t, &w);
    info!("{} lines in {} dips, noise σ = {} (seed {seed})", t.lines.len(), dips.len(), config.noise_sigma);

    let report = TransitionReport {
        b_z_tesla: config.b_z_tesla,
        pi_perp_hz: field.pi_perp(),
        phi_pi_rad: field.phi_pi(),
        pi_par_hz: field.pi_par,
        inner_splitting_hz: t.splitting(0),
        outer_splitting_hz: t.splitting(1),
        lines: t
            .iter()
            .map(|l| LineRecord {
                label: l.label.to_string(),
                branch: l.label.branch,
                m_i: l.label.m_i,
                frequency_hz: l.frequency_hz,
                strength: w.w(l.label),
                degenerate_with: l.degenerate_with.map(|d| d.to_string()),
            })
            .collect(),
        dips: dips
            .iter()
            .map(|d| DipRecord {
                frequency_hz: d.frequency_hz,
                weight: d.weight,
                lines: d.lines.iter().map(ToString::to_string).collect(),
            })
            .collect(),
    };

    prepare_out(out)?;
    write_atomic(&out.join("spectrum.csv"), spectrum_to_csv_string(&spectrum)?.as_bytes())?;
    write_json(&out.join("transitions.json"), &report)?;
    Ok(Outcome::Done)
}

fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_spectrum_csv(std::io::BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

fn fit_one(path: &Path, count: PeakCount, config: &RunConfig) -> Result<(Spectrum, FitResult)> {
    let spectrum = read_spectrum(path)?;
    let result = analyze_spectrum(&spectrum, count, &config.nv_params, config.assume_bz_zero)
        .with_context(|| format!("fitting {}", path.display()))?;
    for note in &result.notes {
        warn!("{}: {note}", path.display());
    }
    Ok((spectrum, result))
}

pub fn cmd_fit(path: &Path, count: PeakCount, config: &RunConfig, out: &Path) -> Result<Outcome> {
    let (spectrum, result) = fit_one(path, count, config)?;
    let fitted = result.peaks.curve(&spectrum.frequencies);
    let overlay = table_csv(
        &["frequency_hz", "contrast", "fit", "residual"].map(String::from),
        spectrum
            .frequencies
            .iter()
            .zip(&spectrum.contrast)
            .zip(&fitted)
            .map(|((&f, &c), &y)| vec![f, c, y, c - y]),
    );
    if let Some(e) = &result.extraction {
        info!("Π⊥ = {:.1} Hz, Π∥ = {:.1} Hz", e.pi_perp_hz, e.pi_par_hz);
    }

    prepare_out(out)?;
    let name = stem(path);
    write_json(&out.join(format!("{name}.fit.json")), &result)?;
    write_atomic(&out.join(format!("{name}.overlay.csv")), overlay.as_bytes())?;
    if result.converged {
        Ok(Outcome::Done)
    } else {
        warn!("peak fit did not converge after {} iterations", result.iterations);
        Ok(Outcome::NotConverged)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub bz_start_tesla: f64,
    pub bz_stop_tesla: f64,
    pub count: usize,
    pub gaps: Vec<GapMinimum>,
}

pub fn sweep_header() -> Vec<String> {
    let mut h = vec!["bz_tesla".to_string()];
    h.extend(LineLabel::ALL.iter().map(|l| format!("f_{}", l.column_name())));
    h
}

pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let grid = config.require(&config.bz_grid, "bz_grid")?;
    let field = config.field()?;
    let sweep = sweep_bz(&config.nv_params, &field, grid.start_tesla, grid.stop_tesla, grid.count)?;
    for g in &sweep.gaps {
        info!("m_I = {:+}: minimum gap {:.1} Hz at B_z = {:.6e} T", g.m_i, g.min_gap_hz, g.bz_tesla);
    }
    let csv = table_csv(
        &sweep_header(),
        sweep.bz_grid.iter().zip(&sweep.branches).map(|(&b, row)| {
            let mut r = vec![b];
            r.extend_from_slice(row);
            r
        }),
    );
    let report = SweepReport {
        bz_start_tesla: grid.start_tesla,
        bz_stop_tesla: grid.stop_tesla,
        count: grid.count,
        gaps: sweep.gaps.to_vec(),
    };

    prepare_out(out)?;
    write_atomic(&out.join("sweep.csv"), csv.as_bytes())?;
    write_json(&out.join("sweep_gaps.json"), &report)?;
    Ok(Outcome::Done)
}

/// Which drive angle a strengths scan varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScanAxis {
    Phi,
    Epsilon,
}

pub fn cmd_strengths(config: &RunConfig, axis: Option<ScanAxis>, out: &Path) -> Result<Outcome> {
    let axis = match axis {
        Some(a) => a,
        None if config.phi_mw_grid.is_some() => ScanAxis::Phi,
        None if config.epsilon_mw_grid.is_some() => ScanAxis::Epsilon,
        None => bail!("config needs 'phi_mw_grid' or 'epsilon_mw_grid' for a strengths scan"),
    };
    let field = config.field()?;
    let base = config.drive_field()?;
    let (column, grid) = match axis {
        ScanAxis::Phi => ("phi_mw_rad", config.require(&config.phi_mw_grid, "phi_mw_grid")?),
        ScanAxis::Epsilon => ("epsilon_mw_rad", config.require(&config.epsilon_mw_grid, "epsilon_mw_grid")?),
    };
    let mut header = vec![column.to_string()];
    header.extend(LineLabel::ALL.iter().map(|l| format!("w_{}", l.column_name())));
    let rows = grid.points()?.into_iter().map(|x| {
        let drive = match axis {
            ScanAxis::Phi => DriveField::new(base.omega_rabi, x, base.epsilon_mw),
            ScanAxis::Epsilon => DriveField::new(base.omega_rabi, base.phi_mw, x),
        };
        let w = transition_strengths_at(&field, &config.nv_params, &drive, config.b_z_tesla);
        let mut r = vec![x];
        r.extend_from_slice(&w.normalized);
        r
    });
    let csv = table_csv(&header, rows);

    prepare_out(out)?;
    write_atomic(&out.join("strengths.csv"), csv.as_bytes())?;
    Ok(Outcome::Done)
}

pub fn cmd_rabi(config: &RunConfig, transition: &str, out: &Path) -> Result<Outcome> {
    let target = parse_transition(transition)?;
    let field = config.field()?;
    let drive = config.drive_field()?;
    let times = config.require(&config.time_grid, "time_grid")?.points()?;
    if config.b_z_tesla != 0.0 {
        warn!("rabi traces are computed at zero axial field; b_z_tesla is ignored");
    }
    let trace = rabi_trace(&field, &config.nv_params, &drive, target, &times)?;
    let csv = table_csv(
        &["t_s", "population"].map(String::from),
        times.iter().zip(&trace).map(|(&t, &p)| vec![t, p]),
    );
    info!("transition {target}: {} samples", times.len());

    prepare_out(out)?;
    write_atomic(&out.join("rabi.csv"), csv.as_bytes())?;
    Ok(Outcome::Done)
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub fitted: Vec<String>,
    pub skipped: Vec<SkippedFile>,
    pub not_converged: Vec<String>,
    /// Absent when no file yielded an effective-field extraction.
    pub summary: Option<BatchSummary>,
}

/// Fits every `*.csv` file in `dir` (non-recursive, sorted by name).
pub fn cmd_batch(dir: &Path, count: PeakCount, config: &RunConfig, out: &Path) -> Result<Outcome> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .csv files in {}", dir.display());
    }
    prepare_out(out)?;

    let results: Vec<(PathBuf, Result<FitResult>)> = files
        .par_iter()
        .map(|path| {
            let r = fit_one(path, count, config).and_then(|(_, result)| {
                write_json(&out.join(format!("{}.fit.json", stem(path))), &result)?;
                Ok(result)
            });
            (path.clone(), r)
        })
        .collect();

    let mut report = BatchReport { fitted: Vec::new(), skipped: Vec::new(), not_converged: Vec::new(), summary: None };
    let mut ok = Vec::new();
    for (path, r) in results {
        let name = path.display().to_string();
        match r {
            Ok(result) => {
                if !result.converged {
                    report.not_converged.push(name.clone());
                }
                report.fitted.push(name);
                ok.push(result);
            }
            Err(e) => {
                warn!("skipping {name}: {e:#}");
                report.skipped.push(SkippedFile { file: name, reason: format!("{e:#}") });
            }
        }
    }
    if ok.is_empty() {
        bail!("all {} files failed", report.skipped.len());
    }
    match summarize_results(&ok) {
        Ok(s) => report.summary = Some(s),
        Err(e) => warn!("no summary: {e}"),
    }
    if let Some(s) = &report.summary {
        info!(
            "{} samples: Π⊥ = {:.0} ± {:.0} Hz, Π∥ = {:.0} ± {:.0} Hz",
            s.samples.len(),
            s.mean_pi_perp_hz,
            s.std_pi_perp_hz,
            s.mean_pi_par_hz,
            s.std_pi_par_hz
        );
    }
    write_json(&out.join("batch_summary.json"), &report)?;
    Ok(Outcome::Done)
}
