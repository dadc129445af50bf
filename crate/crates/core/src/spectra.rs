//! Synthetic ODMR spectra, axial-field sweeps, polarization scans and
//! resonant Rabi traces.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    block_eigenstate, transition_frequencies, EffectiveField, LineLabel, NvParams, TransitionSet,
};
use crate::linalg::diagonalize_hermitian;
use crate::polarization::{rwa_hamiltonian, transition_strengths, DriveField, StrengthSet};
use crate::rng::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    #[default]
    Gaussian,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineShape {
    #[serde(default)]
    pub kind: LineKind,
    #[serde(rename = "fwhm_hz")]
    pub fwhm: f64,
    #[serde(default = "one")]
    pub contrast_scale: f64,
    #[serde(default = "one")]
    pub baseline: f64,
}

fn one() -> f64 {
    1.0
}

impl LineShape {
    pub fn gaussian(fwhm: f64, contrast_scale: f64) -> Self {
        Self {
            kind: LineKind::Gaussian,
            fwhm,
            contrast_scale,
            baseline: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm.is_finite() && self.fwhm > 0.0) {
            return Err(Error::InvalidParameter("fwhm must be positive".into()));
        }
        if !(self.contrast_scale > 0.0 && self.contrast_scale <= 1.0) {
            return Err(Error::InvalidParameter(
                "contrast_scale must lie in (0, 1]".into(),
            ));
        }
        if !self.baseline.is_finite() {
            return Err(Error::NonFinite("baseline"));
        }
        Ok(())
    }

    /// Unit-height profile evaluated at offset `x` from the line center.
    pub fn profile(&self, x: f64) -> f64 {
        let u = x / self.fwhm;
        match self.kind {
            LineKind::Gaussian => (-4.0 * LN_2 * u * u).exp(),
            LineKind::Lorentzian => 1.0 / (1.0 + 4.0 * u * u),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub contrast: Vec<f64>,
    pub noise_sigma: Option<f64>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, contrast: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if frequencies.len() != contrast.len() {
            return Err(Error::InvalidParameter(format!(
                "{} frequencies but {} contrast values",
                frequencies.len(),
                contrast.len()
            )));
        }
        check_ascending(&frequencies)?;
        Ok(Self {
            frequencies,
            contrast,
            noise_sigma: None,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Adds white Gaussian noise of standard deviation `sigma`.
    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        if sigma > 0.0 {
            let mut rng = NoiseStream::new(seed);
            for c in &mut self.contrast {
                *c += sigma * rng.next_gaussian();
            }
            self.noise_sigma = Some(sigma);
        }
        self
    }
}

fn check_ascending(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("grid"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridNotAscending);
    }
    Ok(())
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(start < stop) {
        return Err(Error::InvalidRange {
            min: start,
            max: stop,
            count,
        });
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|k| if k + 1 == count { stop } else { start + step * k as f64 })
        .collect())
}

/// A resolved dip: lines at identical frequency are merged with summed weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub frequency_hz: f64,
    pub weight: f64,
    pub lines: Vec<LineLabel>,
}

pub fn merge_dips(transitions: &TransitionSet, strengths: &StrengthSet) -> Vec<Dip> {
    let mut dips: Vec<Dip> = Vec::new();
    for line in transitions.iter() {
        let w = strengths.w(line.label);
        match dips
            .iter_mut()
            .find(|d| d.frequency_hz == line.frequency_hz)
        {
            Some(d) => {
                d.weight += w;
                d.lines.push(line.label);
            }
            None => dips.push(Dip {
                frequency_hz: line.frequency_hz,
                weight: w,
                lines: vec![line.label],
            }),
        }
    }
    dips.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    dips
}

/// `baseline − contrast_scale · Σ W_i g(f − f_i)` on the given grid.
pub fn synthesize_spectrum(
    transitions: &TransitionSet,
    strengths: &StrengthSet,
    shape: &LineShape,
    grid: &[f64],
) -> Result<Spectrum> {
    synthesize_from_dips(&merge_dips(transitions, strengths), shape, grid)
}

pub fn synthesize_from_dips(dips: &[Dip], shape: &LineShape, grid: &[f64]) -> Result<Spectrum> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    shape.validate()?;
    check_ascending(grid)?;
    let contrast = grid
        .iter()
        .map(|&f| {
            let depth: f64 = dips
                .iter()
                .map(|d| d.weight * shape.profile(f - d.frequency_hz))
                .sum();
            shape.baseline - shape.contrast_scale * depth
        })
        .collect();
    Spectrum::new(grid.to_vec(), contrast)
}

/// Convenience: transitions + strengths at zero field for the given drive.
pub fn simulate_zero_field(
    params: &NvParams,
    field: &EffectiveField,
    drive: &DriveField,
    shape: &LineShape,
    grid: &[f64],
) -> Result<Spectrum> {
    let t = transition_frequencies(params, field, 0.0)?;
    let s = transition_strengths(field, params, drive);
    synthesize_spectrum(&t, &s, shape, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapMinimum {
    pub m_i: i8,
    pub min_gap_hz: f64,
    pub bz_tesla: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub bz_grid: Vec<f64>,
    /// Six branch frequencies per grid point, canonical label order.
    pub branches: Vec<[f64; 6]>,
    /// Per `m_I` (−1, 0, +1) minimum of `E_+ − E_−` over the grid.
    pub gaps: [GapMinimum; 3],
}

pub fn sweep_bz(
    params: &NvParams,
    field: &EffectiveField,
    bz_min: f64,
    bz_max: f64,
    n: usize,
) -> Result<SweepResult> {
    let bz_grid = linspace(bz_min, bz_max, n)?;
    let branches = bz_grid
        .iter()
        .map(|&b| {
            transition_frequencies(params, field, b)
                .map(|t| t.lines.map(|l| l.frequency_hz))
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps = [-1i8, 0, 1].map(|m_i| {
        let lo = LineLabel::new(crate::hamiltonian::Branch::Minus, m_i).index();
        let hi = LineLabel::new(crate::hamiltonian::Branch::Plus, m_i).index();
        let mut best = GapMinimum {
            m_i,
            min_gap_hz: f64::INFINITY,
            bz_tesla: f64::NAN,
        };
        for (b, row) in bz_grid.iter().zip(&branches) {
            let gap = row[hi] - row[lo];
            if gap < best.min_gap_hz {
                best.min_gap_hz = gap;
                best.bz_tesla = *b;
            }
        }
        best
    });
    Ok(SweepResult {
        bz_grid,
        branches,
        gaps,
    })
}

/// Normalized strengths of all six lines as a function of φ_mw.
pub fn polarization_scan(
    field: &EffectiveField,
    params: &NvParams,
    omega_rabi: f64,
    epsilon: f64,
    phi_grid: &[f64],
) -> Vec<[f64; 6]> {
    phi_grid
        .iter()
        .map(|&phi| {
            transition_strengths(field, params, &DriveField::new(omega_rabi, phi, epsilon))
                .normalized
        })
        .collect()
}

/// Normalized strengths as a function of ε_mw at fixed φ_mw.
pub fn ellipticity_scan(
    field: &EffectiveField,
    params: &NvParams,
    omega_rabi: f64,
    phi_mw: f64,
    epsilon_grid: &[f64],
) -> Vec<[f64; 6]> {
    epsilon_grid
        .iter()
        .map(|&eps| {
            transition_strengths(field, params, &DriveField::new(omega_rabi, phi_mw, eps))
                .normalized
        })
        .collect()
}

/// Population transferred out of `|0, m_I⟩` into the dressed target state
/// under resonant driving, sampled on `t_grid` (s).
///
/// The drive is restricted to the two-level subspace `{|0, m_I⟩, |target⟩}`
/// and propagated exactly through the eigen-decomposition of the generator.
/// The generator is scaled so the population oscillates at the angular rate
/// Ω_{±,m_I} = 2π |⟨target|H'|0, m_I⟩| returned by `rabi_frequencies`.
pub fn rabi_trace(
    field: &EffectiveField,
    params: &NvParams,
    drive: &DriveField,
    target: LineLabel,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    drive.validate()?;
    if !(-1..=1).contains(&target.m_i) {
        return Err(Error::UnknownTransition(target.to_string()));
    }
    if drive.omega_drive != 0.0 {
        let line = transition_frequencies(params, field, 0.0)?.frequency(target);
        if (drive.omega_drive - line).abs() > (1e-9 * line).max(1.0) {
            return Err(Error::NotResonant {
                drive_hz: drive.omega_drive,
                line_hz: line,
            });
        }
    }
    let h = rwa_hamiltonian(drive);
    let dressed = block_eigenstate(params, field, target, 0.0);
    // ⟨target| H' |0⟩, with H'|0⟩ = (H'_{+1,0}, H'_{−1,0})
    let coupling = dressed[0].conj() * h[(0, 1)] + dressed[1].conj() * h[(2, 1)];

    let z = Complex64::new(0.0, 0.0);
    let g = coupling * PI;
    let generator = DMatrix::from_row_slice(2, 2, &[z, g.conj(), g, z]);
    let eig = diagonalize_hermitian(&generator)?;
    let v = &eig.vectors;

    Ok(t_grid
        .iter()
        .map(|&t| {
            // ⟨e| V e^{-iΛt} V† |g⟩ with g = index 0, e = index 1
            let amp: Complex64 = (0..2)
                .map(|k| v[(1, k)] * Complex64::from_polar(1.0, -eig.values[k] * t) * v[(0, k)].conj())
                .sum();
            amp.norm_sqr()
        })
        .collect())
}
