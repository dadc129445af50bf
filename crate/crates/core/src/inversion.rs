//! From fitted dip positions back to the effective field, plus dip-depth
//! imbalances and batch statistics.
//!
//! A line `(±, m_I)` sits at `D + Π∥ ± √((m_I A_HF + γB_z)² + Π⊥²)`. Each
//! observed center is matched to a distinct line; every injective matching
//! is tried and the one with the smallest squared residual wins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_peaks, select_peak_count, ModelChoice, PeakFit, PeakModel};
use crate::hamiltonian::{Branch, LineLabel, NvParams};
use crate::lm::{covariance, levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::spectra::Spectrum;

const MAX_CENTERS: usize = 6;
const PERP_GRID: usize = 241;
const PERP_GRID_WITH_BZ: usize = 121;
const BZ_GRID: usize = 61;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub pi_perp_hz: f64,
    pub pi_par_hz: f64,
    pub b_z_tesla: f64,
    pub pi_perp_err_hz: Option<f64>,
    pub pi_par_err_hz: Option<f64>,
    /// Zero when the axial field was held at zero.
    pub b_z_err_tesla: Option<f64>,
    /// Line assigned to each input center, in input order.
    pub assignment: Vec<LineLabel>,
    pub residual_rms_hz: f64,
}

fn line_frequency(params: &NvParams, label: LineLabel, perp: f64, par: f64, b_z: f64) -> f64 {
    let h = label.m_i as f64 * params.axial_hyperfine + params.gamma_e * b_z;
    params.zero_field_splitting + par + label.branch.sign() * h.hypot(perp)
}

/// Parameters `[Π⊥, Π∥]` or `[Π⊥, Π∥, B_z]`, all in Hz (B_z as γB_z).
struct CenterProblem<'a> {
    params: &'a NvParams,
    centers: &'a [f64],
    labels: &'a [LineLabel],
    free_bz: bool,
}

impl CenterProblem<'_> {
    fn unpack(&self, p: &DVector<f64>) -> (f64, f64, f64) {
        let bz = if self.free_bz { p[2] / self.params.gamma_e } else { 0.0 };
        (p[0], p[1], bz)
    }

    /// Σ residual² with Π∥ eliminated analytically.
    fn profiled(&self, perp: f64, bz: f64) -> (f64, f64) {
        let k = self.centers.len() as f64;
        let offsets: Vec<f64> = self
            .centers
            .iter()
            .zip(self.labels)
            .map(|(&c, &l)| c - line_frequency(self.params, l, perp, 0.0, bz))
            .collect();
        let par = offsets.iter().sum::<f64>() / k;
        let ss = offsets.iter().map(|o| (o - par).powi(2)).sum();
        (ss, par)
    }
}

impl LeastSquaresProblem for CenterProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let (perp, par, bz) = self.unpack(p);
        DVector::from_iterator(
            self.centers.len(),
            self.centers
                .iter()
                .zip(self.labels)
                .map(|(&c, &l)| line_frequency(self.params, l, perp, par, bz) - c),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let (perp, _, bz) = self.unpack(p);
        let cols = if self.free_bz { 3 } else { 2 };
        let mut j = DMatrix::zeros(self.centers.len(), cols);
        for (i, l) in self.labels.iter().enumerate() {
            let h = l.m_i as f64 * self.params.axial_hyperfine + self.params.gamma_e * bz;
            let r = h.hypot(perp);
            let s = l.branch.sign();
            // at r = 0 the one-sided derivative of |Π⊥| is used
            let (dperp, dh) = if r > 0.0 { (perp / r, h / r) } else { (1.0, 0.0) };
            j[(i, 0)] = s * dperp;
            j[(i, 1)] = 1.0;
            if self.free_bz {
                j[(i, 2)] = s * dh;
            }
        }
        j
    }

    fn project(&self, p: &mut DVector<f64>) {
        p[0] = p[0].max(0.0);
    }
}

/// All injective maps of `k` centers onto the six lines.
fn assignments(k: usize) -> Vec<Vec<LineLabel>> {
    fn extend(k: usize, used: &mut [bool; 6], cur: &mut Vec<LineLabel>, out: &mut Vec<Vec<LineLabel>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for (i, label) in LineLabel::ALL.iter().enumerate() {
            if !used[i] {
                used[i] = true;
                cur.push(*label);
                extend(k, used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(k, &mut [false; 6], &mut Vec::with_capacity(k), &mut out);
    out
}

struct Candidate {
    perp: f64,
    par: f64,
    bz: f64,
    ss: f64,
    labels: Vec<LineLabel>,
    report_params: DVector<f64>,
}

fn solve_assignment(
    params: &NvParams,
    centers: &[f64],
    labels: Vec<LineLabel>,
    free_bz: bool,
    perp_max: f64,
    bz_max: f64,
) -> Candidate {
    let problem = CenterProblem { params, centers, labels: &labels, free_bz };
    // coarse scan over the nonlinear parameters with Π∥ profiled out
    let bz_values: Vec<f64> = if free_bz {
        (0..BZ_GRID)
            .map(|j| -bz_max + 2.0 * bz_max * j as f64 / (BZ_GRID - 1) as f64)
            .collect()
    } else {
        vec![0.0]
    };
    let n_perp = if free_bz { PERP_GRID_WITH_BZ } else { PERP_GRID };
    let mut start = (f64::INFINITY, 0.0, 0.0, 0.0);
    for i in 0..n_perp {
        let perp = perp_max * i as f64 / (n_perp - 1) as f64;
        for &bz in &bz_values {
            let (ss, par) = problem.profiled(perp, bz);
            if ss < start.0 {
                start = (ss, perp, par, bz);
            }
        }
    }
    let mut p0 = vec![start.1, start.2];
    if free_bz {
        p0.push(start.3 * params.gamma_e);
    }
    let options = LmOptions { relative_tolerance: 1e-15, ..LmOptions::default() };
    let rep = levenberg_marquardt(&problem, DVector::from_vec(p0), &options);
    let (perp, par, bz) = problem.unpack(&rep.params);
    Candidate { perp, par, bz, ss: rep.objective, labels, report_params: rep.params }
}

/// Least-squares effective field from dip centers (Hz). With
/// `assume_bz_zero` only (Π⊥, Π∥) are fitted; otherwise B_z as well.
pub fn extract_effective_field(
    centers: &[f64],
    params: &NvParams,
    assume_bz_zero: bool,
) -> Result<Extraction> {
    params.validate()?;
    if centers.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("centers"));
    }
    let free = if assume_bz_zero { 2 } else { 3 };
    if centers.len() < free + 1 || centers.len() > MAX_CENTERS {
        return Err(Error::UnderDetermined { centers: centers.len(), free });
    }
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = params.axial_hyperfine.abs();
    let perp_max = (hi - lo) + a;
    let bz_max = ((hi - lo) + 2.0 * a) / params.gamma_e;

    let scale_sq = (hi - lo).max(a).powi(2);
    let mut best: Option<Candidate> = None;
    for labels in assignments(centers.len()) {
        let cand = solve_assignment(params, centers, labels, !assume_bz_zero, perp_max, bz_max);
        best = Some(match best {
            None => cand,
            Some(b) => {
                let tol = 1e-9 * b.ss.max(cand.ss) + 1e-20 * scale_sq;
                if cand.ss < b.ss - tol
                    || ((cand.ss - b.ss).abs() <= tol && cand.bz.abs() < b.bz.abs() - 1e-15)
                {
                    cand
                } else {
                    b
                }
            }
        });
    }
    let best = best.expect("at least one assignment");

    let problem = CenterProblem {
        params,
        centers,
        labels: &best.labels,
        free_bz: !assume_bz_zero,
    };
    let cov = covariance(&problem.jacobian(&best.report_params), best.ss);
    let sd = |i: usize| cov.as_ref().map(|c| c[(i, i)].max(0.0).sqrt());
    Ok(Extraction {
        pi_perp_hz: best.perp,
        pi_par_hz: best.par,
        b_z_tesla: best.bz,
        pi_perp_err_hz: sd(0),
        pi_par_err_hz: sd(1),
        b_z_err_tesla: if assume_bz_zero {
            Some(0.0)
        } else {
            sd(2).map(|s| s / params.gamma_e)
        },
        assignment: best.labels,
        residual_rms_hz: (best.ss / centers.len() as f64).sqrt(),
    })
}

/// Lines carried by each fitted dip. At zero axial field the `m_I = ±1`
/// lines of a branch coincide, so an outer dip carries both unless the
/// partner has its own dip.
pub fn dip_lines(assignment: &[LineLabel], bz_zero: bool) -> Vec<Vec<LineLabel>> {
    assignment
        .iter()
        .map(|&l| {
            let mut set = vec![l];
            if bz_zero && l.m_i != 0 {
                let partner = LineLabel::new(l.branch, -l.m_i);
                if !assignment.contains(&partner) {
                    set.push(partner);
                }
            }
            set
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedImbalance {
    pub inner: f64,
    pub outer: f64,
}

/// `(A₊ − A₋)/(A₊ + A₋)` for the inner and the (summed) outer dip pairs.
/// `lines[k]` lists the lines under `peaks.peaks[k]`.
pub fn imbalance_from_fit(peaks: &PeakModel, lines: &[Vec<LineLabel>]) -> Result<FittedImbalance> {
    if lines.len() != peaks.n_peaks() {
        return Err(Error::InvalidParameter(format!(
            "{} peaks but {} assignments",
            peaks.n_peaks(),
            lines.len()
        )));
    }
    let amp = |pred: &dyn Fn(LineLabel) -> bool| -> Option<f64> {
        let mut total = None;
        for (pk, set) in peaks.peaks.iter().zip(lines) {
            if set.iter().any(|&l| pred(l)) {
                *total.get_or_insert(0.0) += pk.amplitude;
            }
        }
        total
    };
    let pair = |inner: bool, which: &'static str| -> Result<f64> {
        let plus = amp(&|l| l.is_inner() == inner && l.branch == Branch::Plus);
        let minus = amp(&|l| l.is_inner() == inner && l.branch == Branch::Minus);
        // a dip carrying both branches cannot be split
        let shared = peaks.peaks.iter().zip(lines).any(|(_, set)| {
            set.iter().any(|l| l.is_inner() == inner && l.branch == Branch::Plus)
                && set.iter().any(|l| l.is_inner() == inner && l.branch == Branch::Minus)
        });
        match (plus, minus) {
            (Some(p), Some(m)) if !shared => {
                let sum = p + m;
                Ok(if sum > 0.0 { (p - m) / sum } else { 0.0 })
            }
            _ => Err(Error::MissingPairMember(which)),
        }
    };
    Ok(FittedImbalance {
        inner: pair(true, "inner")?,
        outer: pair(false, "outer")?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakCount {
    Fixed(usize),
    Auto,
}

impl std::str::FromStr for PeakCount {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse::<usize>()
            .map(Self::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("peak count must be an integer or 'auto', got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub n_peaks: usize,
    pub peaks: PeakModel,
    pub peak_errors: Option<crate::fit::PeakErrors>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Information-criterion table when the peak count was chosen automatically.
    pub model_selection: Option<Vec<ModelChoice>>,
    pub extraction: Option<Extraction>,
    /// Lines under each fitted dip.
    pub dip_lines: Option<Vec<Vec<LineLabel>>>,
    pub imbalance_inner: Option<f64>,
    pub imbalance_outer: Option<f64>,
    /// Reasons why later stages produced no value.
    pub notes: Vec<String>,
}

/// Full pipeline: seed, fit, invert centers, estimate imbalances.
pub fn analyze_spectrum(
    spectrum: &Spectrum,
    count: PeakCount,
    params: &NvParams,
    assume_bz_zero: bool,
) -> Result<FitResult> {
    let (fit, table): (PeakFit, _) = match count {
        PeakCount::Fixed(n) => (fit_peaks(spectrum, n, None)?, None),
        PeakCount::Auto => {
            let (fit, table) = select_peak_count(spectrum)?;
            (fit, Some(table))
        }
    };
    let mut notes = Vec::new();
    let extraction = match extract_effective_field(&fit.model.centers(), params, assume_bz_zero) {
        Ok(e) => Some(e),
        Err(e) => {
            notes.push(format!("extraction: {e}"));
            None
        }
    };
    let lines = extraction
        .as_ref()
        .map(|e| dip_lines(&e.assignment, assume_bz_zero || e.b_z_tesla == 0.0));
    let (mut inner, mut outer) = (None, None);
    if let Some(lines) = &lines {
        match imbalance_from_fit(&fit.model, lines) {
            Ok(i) => {
                inner = Some(i.inner);
                outer = Some(i.outer);
            }
            Err(e) => notes.push(format!("imbalance: {e}")),
        }
    }
    Ok(FitResult {
        n_peaks: fit.model.n_peaks(),
        peaks: fit.model,
        peak_errors: fit.errors,
        residual_rms: fit.residual_rms,
        iterations: fit.iterations,
        converged: fit.converged,
        model_selection: table,
        extraction,
        dip_lines: lines,
        imbalance_inner: inner,
        imbalance_outer: outer,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub pi_perp_hz: f64,
    pub pi_par_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub samples: Vec<FieldSample>,
    pub mean_pi_perp_hz: f64,
    pub std_pi_perp_hz: f64,
    pub mean_pi_par_hz: f64,
    pub std_pi_par_hz: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation of the extracted fields.
pub fn batch_summary(samples: &[FieldSample]) -> Result<BatchSummary> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let perp: Vec<f64> = samples.iter().map(|s| s.pi_perp_hz).collect();
    let par: Vec<f64> = samples.iter().map(|s| s.pi_par_hz).collect();
    let (mean_pi_perp_hz, std_pi_perp_hz) = mean_std(&perp);
    let (mean_pi_par_hz, std_pi_par_hz) = mean_std(&par);
    Ok(BatchSummary {
        samples: samples.to_vec(),
        mean_pi_perp_hz,
        std_pi_perp_hz,
        mean_pi_par_hz,
        std_pi_par_hz,
    })
}

/// Collects the samples of all results that produced an extraction.
pub fn summarize_results(results: &[FitResult]) -> Result<BatchSummary> {
    let samples: Vec<FieldSample> = results
        .iter()
        .filter_map(|r| r.extraction.as_ref())
        .map(|e| FieldSample { pi_perp_hz: e.pi_perp_hz, pi_par_hz: e.pi_par_hz })
        .collect();
    batch_summary(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::Peak;
    use crate::hamiltonian::{transition_frequencies, EffectiveField};

    const MHZ: f64 = 1e6;

    fn zero_field_dips(params: &NvParams, perp: f64, par: f64) -> Vec<f64> {
        let t = transition_frequencies(params, &EffectiveField::from_polar(perp, 0.3, par), 0.0).unwrap();
        let mut f: Vec<f64> = t.iter().map(|l| l.frequency_hz).collect();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    }

    #[test]
    fn assignment_count() {
        assert_eq!(assignments(4).len(), 360);
        assert_eq!(assignments(6).len(), 720);
        assert_eq!(assignments(3).len(), 120);
    }

    #[test]
    fn vanishing_field() {
        let p = NvParams::default();
        let d = p.zero_field_splitting;
        let a = p.axial_hyperfine.abs();
        let e = extract_effective_field(&[d - a, d, d, d + a], &p, true).unwrap();
        assert!(e.pi_perp_hz.abs() < 1.0, "{}", e.pi_perp_hz);
        assert!(e.pi_par_hz.abs() < 1.0, "{}", e.pi_par_hz);
    }

    #[test]
    fn pcd_centers() {
        let p = NvParams::default();
        let c = zero_field_dips(&p, 4.20 * MHZ, 4.32 * MHZ);
        assert_eq!(c.len(), 4);
        let e = extract_effective_field(&c, &p, true).unwrap();
        assert!((e.pi_perp_hz - 4.20 * MHZ).abs() < 1e3);
        assert!((e.pi_par_hz - 4.32 * MHZ).abs() < 1e3);
    }

    #[test]
    fn shift_moves_only_axial_component() {
        let p = NvParams::default();
        let c = zero_field_dips(&p, 2.5 * MHZ, 1.0 * MHZ);
        let e0 = extract_effective_field(&c, &p, true).unwrap();
        let shifted: Vec<f64> = c.iter().map(|x| x + 0.7 * MHZ).collect();
        let e1 = extract_effective_field(&shifted, &p, true).unwrap();
        assert!((e1.pi_perp_hz - e0.pi_perp_hz).abs() < 1e-3);
        assert!((e1.pi_par_hz - e0.pi_par_hz - 0.7 * MHZ).abs() < 1e-3);
    }

    #[test]
    fn two_centers_underdetermined() {
        let p = NvParams::default();
        assert!(matches!(
            extract_effective_field(&[1.0, 2.0], &p, true),
            Err(Error::UnderDetermined { centers: 2, free: 2 })
        ));
        assert!(matches!(
            extract_effective_field(&[1.0, 2.0, 3.0], &p, false),
            Err(Error::UnderDetermined { centers: 3, free: 3 })
        ));
    }

    #[test]
    fn axial_field_recovered() {
        let p = NvParams::default();
        let f = EffectiveField::from_polar(3.0 * MHZ, 0.0, 1.5 * MHZ);
        let bz = 40e-6;
        let t = transition_frequencies(&p, &f, bz).unwrap();
        let c: Vec<f64> = t.iter().map(|l| l.frequency_hz).collect();
        let e = extract_effective_field(&c, &p, false).unwrap();
        assert!((e.pi_perp_hz - 3.0 * MHZ).abs() < 1.0);
        assert!((e.pi_par_hz - 1.5 * MHZ).abs() < 1.0);
        assert!((e.b_z_tesla.abs() - bz).abs() < 1e-10);
    }

    fn model(amps: &[f64]) -> PeakModel {
        PeakModel {
            baseline: 1.0,
            peaks: amps
                .iter()
                .enumerate()
                .map(|(k, &a)| Peak { center_hz: k as f64, amplitude: a, fwhm_hz: 0.1 })
                .collect(),
        }
    }

    fn pcd_lines() -> Vec<Vec<LineLabel>> {
        let l = |b, m| LineLabel::new(b, m);
        dip_lines(
            &[l(Branch::Minus, 1), l(Branch::Minus, 0), l(Branch::Plus, 0), l(Branch::Plus, -1)],
            true,
        )
    }

    #[test]
    fn equal_depths_balanced() {
        let i = imbalance_from_fit(&model(&[0.1, 0.1, 0.1, 0.1]), &pcd_lines()).unwrap();
        assert_eq!(i.inner, 0.0);
        assert_eq!(i.outer, 0.0);
    }

    #[test]
    fn published_inner_imbalance() {
        let s = 0.2;
        let i = imbalance_from_fit(&model(&[0.1, 0.246 * s, 0.754 * s, 0.1]), &pcd_lines()).unwrap();
        assert!((i.inner - 0.508).abs() < 1e-12);
    }

    #[test]
    fn missing_member() {
        let l = |b, m| LineLabel::new(b, m);
        let lines = dip_lines(&[l(Branch::Minus, 1), l(Branch::Minus, 0), l(Branch::Plus, -1)], true);
        assert!(matches!(
            imbalance_from_fit(&model(&[0.1, 0.1, 0.1]), &lines),
            Err(Error::MissingPairMember("inner"))
        ));
    }

    #[test]
    fn batch_statistics() {
        let one = [FieldSample { pi_perp_hz: 1.0, pi_par_hz: 2.0 }];
        let s = batch_summary(&one).unwrap();
        assert_eq!((s.mean_pi_perp_hz, s.std_pi_perp_hz), (1.0, 0.0));
        assert!(matches!(batch_summary(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn peak_count_parsing() {
        assert_eq!("auto".parse::<PeakCount>().unwrap(), PeakCount::Auto);
        assert_eq!("4".parse::<PeakCount>().unwrap(), PeakCount::Fixed(4));
        assert!("four".parse::<PeakCount>().is_err());
    }
}
