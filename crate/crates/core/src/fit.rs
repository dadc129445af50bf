//! Multi-Gaussian dip fitting of ODMR spectra.
//!
//! The model is `y(f) = b − Σ_k a_k exp(−4 ln2 (f − c_k)² / w_k²)`. Internally
//! frequencies are rescaled onto [−1, 1] so that centers, widths and
//! amplitudes are of comparable magnitude during the iteration.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{covariance, levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::spectra::Spectrum;

pub const MAX_PEAKS: usize = 8;
const SMOOTHING_WINDOW: usize = 5;
const MIN_SEPARATION_STEPS: usize = 3;
/// Candidate minima must stand out of the smoothed noise by this many
/// standard deviations.
const PROMINENCE_SIGMAS: f64 = 4.0;
const FOUR_LN2: f64 = 4.0 * LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center_hz: f64,
    /// Dip depth in contrast units.
    pub amplitude: f64,
    pub fwhm_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakModel {
    pub baseline: f64,
    /// Sorted by center.
    pub peaks: Vec<Peak>,
}

impl PeakModel {
    pub fn n_peaks(&self) -> usize {
        self.peaks.len()
    }

    pub fn evaluate(&self, f: f64) -> f64 {
        self.baseline
            - self
                .peaks
                .iter()
                .map(|p| {
                    let u = (f - p.center_hz) / p.fwhm_hz;
                    p.amplitude * (-FOUR_LN2 * u * u).exp()
                })
                .sum::<f64>()
    }

    pub fn curve(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&f| self.evaluate(f)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.center_hz).collect()
    }

    fn sort(&mut self) {
        self.peaks.sort_by(|a, b| a.center_hz.total_cmp(&b.center_hz));
    }
}

/// One-sigma uncertainties of a [`PeakModel`], same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakErrors {
    pub baseline: f64,
    pub peaks: Vec<Peak>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub model: PeakModel,
    /// `None` when the normal matrix is singular.
    pub errors: Option<PeakErrors>,
    pub residual_rms: f64,
    pub sum_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Affine map between Hz and the internal unit interval.
#[derive(Debug, Clone, Copy)]
struct Scale {
    mid: f64,
    half: f64,
}

impl Scale {
    fn of(grid: &[f64]) -> Self {
        let lo = grid[0];
        let hi = grid[grid.len() - 1];
        Self {
            mid: 0.5 * (lo + hi),
            half: (0.5 * (hi - lo)).max(f64::MIN_POSITIVE),
        }
    }
    fn to_unit(self, f: f64) -> f64 {
        (f - self.mid) / self.half
    }
    fn to_hz(self, u: f64) -> f64 {
        self.mid + u * self.half
    }
}

/// Parameter layout: `[b, c_0, a_0, w_0, c_1, a_1, w_1, ...]`, unit frequencies.
struct DipProblem<'a> {
    x: Vec<f64>,
    y: &'a [f64],
    n: usize,
    min_width: f64,
}

impl DipProblem<'_> {
    fn gauss(x: f64, c: f64, w: f64) -> f64 {
        let u = (x - c) / w;
        (-FOUR_LN2 * u * u).exp()
    }
}

impl LeastSquaresProblem for DipProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(&x, &y)| {
                let mut m = p[0];
                for k in 0..self.n {
                    let (c, a, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                    m -= a * Self::gauss(x, c, w);
                }
                m - y
            }),
        )
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.x.len(), 1 + 3 * self.n);
        for (i, &x) in self.x.iter().enumerate() {
            j[(i, 0)] = 1.0;
            for k in 0..self.n {
                let (c, a, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                let g = Self::gauss(x, c, w);
                let d = x - c;
                j[(i, 1 + 3 * k)] = -a * g * 2.0 * FOUR_LN2 * d / (w * w);
                j[(i, 2 + 3 * k)] = -g;
                j[(i, 3 + 3 * k)] = -a * g * 2.0 * FOUR_LN2 * d * d / (w * w * w);
            }
        }
        j
    }

    fn project(&self, p: &mut DVector<f64>) {
        for k in 0..self.n {
            p[1 + 3 * k] = p[1 + 3 * k].clamp(-1.0, 1.0);
            p[2 + 3 * k] = p[2 + 3 * k].max(0.0);
            p[3 + 3 * k] = p[3 + 3 * k].max(self.min_width);
        }
    }
}

fn check_request(spectrum: &Spectrum, n_peaks: usize) -> Result<()> {
    if !(1..=MAX_PEAKS).contains(&n_peaks) {
        return Err(Error::InvalidPeakCount(n_peaks));
    }
    let required = 5 * (3 * n_peaks + 1);
    if spectrum.len() < required {
        return Err(Error::TooFewPoints {
            points: spectrum.len(),
            required,
            peaks: n_peaks,
        });
    }
    if spectrum.contrast.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("contrast"));
    }
    Ok(())
}

fn mean_step(grid: &[f64]) -> f64 {
    (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64
}

/// Least-squares fit of `n_peaks` Gaussian dips; seeds come from
/// [`auto_initialize`] unless `init` is given.
pub fn fit_peaks(spectrum: &Spectrum, n_peaks: usize, init: Option<&PeakModel>) -> Result<PeakFit> {
    check_request(spectrum, n_peaks)?;
    let seed = match init {
        Some(m) => {
            if m.n_peaks() != n_peaks {
                return Err(Error::InvalidParameter(format!(
                    "initial model has {} peaks, {} requested",
                    m.n_peaks(),
                    n_peaks
                )));
            }
            m.clone()
        }
        None => auto_initialize(spectrum, n_peaks)?,
    };
    let step = mean_step(&spectrum.frequencies);
    let mut centers = seed.centers();
    centers.sort_by(f64::total_cmp);
    if centers.windows(2).any(|w| w[1] - w[0] < 0.5 * step) {
        return Err(Error::DegenerateInit);
    }
    if seed.peaks.iter().any(|p| !(p.fwhm_hz > 0.0) || !p.center_hz.is_finite()) {
        return Err(Error::InvalidParameter("initial widths must be positive".into()));
    }

    let scale = Scale::of(&spectrum.frequencies);
    let problem = DipProblem {
        x: spectrum.frequencies.iter().map(|&f| scale.to_unit(f)).collect(),
        y: &spectrum.contrast,
        n: n_peaks,
        min_width: 0.5 * step / scale.half,
    };
    let mut p0 = vec![seed.baseline];
    for pk in &seed.peaks {
        p0.extend([scale.to_unit(pk.center_hz), pk.amplitude.max(0.0), pk.fwhm_hz / scale.half]);
    }
    let report = levenberg_marquardt(&problem, DVector::from_vec(p0), &LmOptions::default());
    let p = &report.params;

    let mut model = PeakModel {
        baseline: p[0],
        peaks: (0..n_peaks)
            .map(|k| Peak {
                center_hz: scale.to_hz(p[1 + 3 * k]),
                amplitude: p[2 + 3 * k],
                fwhm_hz: p[3 + 3 * k] * scale.half,
            })
            .collect(),
    };
    let errors = covariance(&problem.jacobian(p), report.objective).map(|cov| {
        let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
        PeakErrors {
            baseline: sd(0),
            peaks: (0..n_peaks)
                .map(|k| Peak {
                    center_hz: sd(1 + 3 * k) * scale.half,
                    amplitude: sd(2 + 3 * k),
                    fwhm_hz: sd(3 + 3 * k) * scale.half,
                })
                .collect(),
        }
    });
    // keep errors aligned with the sorted peaks
    let mut order: Vec<usize> = (0..n_peaks).collect();
    order.sort_by(|&a, &b| model.peaks[a].center_hz.total_cmp(&model.peaks[b].center_hz));
    let errors = errors.map(|e| PeakErrors {
        baseline: e.baseline,
        peaks: order.iter().map(|&k| e.peaks[k]).collect(),
    });
    model.sort();

    Ok(PeakFit {
        model,
        errors,
        residual_rms: (report.objective / spectrum.len() as f64).sqrt(),
        sum_sq: report.objective,
        iterations: report.iterations,
        converged: report.converged,
    })
}

/// Centered moving average; the window shrinks at the edges.
pub fn moving_average(y: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Noise level from the median absolute second difference, insensitive to
/// smooth features.
fn noise_estimate(y: &[f64]) -> f64 {
    if y.len() < 3 {
        return 0.0;
    }
    let d2: Vec<f64> = y.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    1.4826 * percentile(&d2, 0.5) / 6f64.sqrt()
}

/// Height a minimum must be climbed out of before reaching deeper ground.
fn prominence(s: &[f64], i: usize) -> f64 {
    let side = |range: &mut dyn Iterator<Item = usize>| {
        let mut top = s[i];
        for j in range {
            if s[j] < s[i] {
                break;
            }
            top = top.max(s[j]);
        }
        top - s[i]
    };
    let left = side(&mut (0..i).rev());
    let right = side(&mut (i + 1..s.len()));
    left.min(right)
}

/// Seeds for [`fit_peaks`]: the deepest local minima of the smoothed
/// contrast that rise above the noise floor and are at least three grid
/// steps apart.
pub fn auto_initialize(spectrum: &Spectrum, n_peaks: usize) -> Result<PeakModel> {
    check_request(spectrum, n_peaks)?;
    let f = &spectrum.frequencies;
    let s = moving_average(&spectrum.contrast, SMOOTHING_WINDOW);
    let baseline = percentile(&spectrum.contrast, 0.9);
    let smoothed_noise = noise_estimate(&spectrum.contrast) / (SMOOTHING_WINDOW as f64).sqrt();
    let floor = PROMINENCE_SIGMAS * smoothed_noise;

    let mut candidates: Vec<usize> = (1..s.len() - 1)
        .filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1])
        .filter(|&i| s[i] < baseline && prominence(&s, i) > floor)
        .collect();
    candidates.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(n_peaks);
    for i in candidates {
        if chosen.iter().all(|&j| i.abs_diff(j) >= MIN_SEPARATION_STEPS) {
            chosen.push(i);
            if chosen.len() == n_peaks {
                break;
            }
        }
    }
    if chosen.len() < n_peaks {
        return Err(Error::TooFewMinima {
            found: chosen.len(),
            requested: n_peaks,
        });
    }
    chosen.sort_unstable();

    let step = mean_step(f);
    let peaks = chosen
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let depth = (baseline - s[i]).max(f64::EPSILON);
            let half = baseline - 0.5 * depth;
            // walk out to half depth, stopping at neighbouring seeds
            let lo_limit = if k > 0 { chosen[k - 1] } else { 0 };
            let hi_limit = if k + 1 < chosen.len() { chosen[k + 1] } else { s.len() - 1 };
            let mut lo = i;
            while lo > lo_limit && s[lo] < half {
                lo -= 1;
            }
            let mut hi = i;
            while hi < hi_limit && s[hi] < half {
                hi += 1;
            }
            let width = (f[hi] - f[lo]).max(2.0 * step);
            Peak {
                center_hz: f[i],
                amplitude: depth,
                fwhm_hz: width,
            }
        })
        .collect();
    Ok(PeakModel { baseline, peaks })
}

/// Small-sample corrected Akaike criterion for a Gaussian-noise fit.
pub fn aicc(sum_sq: f64, n_points: usize, n_params: usize) -> f64 {
    let n = n_points as f64;
    let k = n_params as f64;
    let rss = (sum_sq / n).max(f64::MIN_POSITIVE);
    let correction = if n_points > n_params + 1 {
        2.0 * k * (k + 1.0) / (n - k - 1.0)
    } else {
        f64::INFINITY
    };
    n * rss.ln() + 2.0 * k + correction
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub n_peaks: usize,
    pub aicc: f64,
    /// False when some fitted dip is narrower than two grid steps or its
    /// depth is below five standard errors; such fits chase noise.
    pub admissible: bool,
}

pub const AUTO_PEAK_RANGE: std::ops::RangeInclusive<usize> = 2..=6;

fn all_peaks_resolved(fit: &PeakFit, step: f64) -> bool {
    let Some(err) = &fit.errors else {
        return false;
    };
    fit.model
        .peaks
        .iter()
        .zip(&err.peaks)
        .all(|(p, e)| p.fwhm_hz >= 2.0 * step && p.amplitude >= 5.0 * e.amplitude)
}

/// Fits each peak count in 2..=6 and keeps the admissible one with the
/// lowest AICc. Counts that cannot be seeded or fitted are skipped.
pub fn select_peak_count(spectrum: &Spectrum) -> Result<(PeakFit, Vec<ModelChoice>)> {
    let step = mean_step(&spectrum.frequencies);
    let mut best: Option<(PeakFit, f64)> = None;
    let mut table = Vec::new();
    let mut last_err = None;
    for n in AUTO_PEAK_RANGE {
        match fit_peaks(spectrum, n, None) {
            Ok(fit) => {
                let score = aicc(fit.sum_sq, spectrum.len(), 3 * n + 1);
                let admissible = all_peaks_resolved(&fit, step);
                table.push(ModelChoice { n_peaks: n, aicc: score, admissible });
                if admissible && best.as_ref().is_none_or(|(_, s)| score < *s) {
                    best = Some((fit, score));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((fit, _)) => Ok((fit, table)),
        None => Err(last_err.unwrap_or(Error::InvalidParameter(
            "no peak count between 2 and 6 gave a resolved fit".into(),
        ))),
    }
}
