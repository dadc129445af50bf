//! Elliptically polarized microwave drive and the resulting hyperfine
//! transition strengths.
//!
//! A drive is described by its Rabi frequency Ω = γB⊥ (Hz), the azimuth
//! φ_mw of the ellipse's major axis and the ellipticity angle ε_mw. The
//! σ⁻/σ⁺ amplitude ratio is λ = tan(π/4 − ε).

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{block_angle, mixing_angles, Branch, EffectiveField, LineLabel, NvParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveField {
    /// Ω = γ B⊥^mw, Hz.
    pub omega_rabi: f64,
    pub phi_mw: f64,
    /// Always within [−π/4, π/4] after construction.
    pub epsilon_mw: f64,
    /// Carrier frequency, Hz. Zero means "resonant with whatever line is driven".
    pub omega_drive: f64,
}

impl DriveField {
    /// Builds a drive, folding ε into [−π/4, π/4]. Ellipticities outside
    /// that interval describe the same ellipse with its axes swapped.
    pub fn new(omega_rabi: f64, phi_mw: f64, epsilon_mw: f64) -> Self {
        let (phi_mw, epsilon_mw) = normalize_ellipse(phi_mw, epsilon_mw);
        Self {
            omega_rabi,
            phi_mw,
            epsilon_mw,
            omega_drive: 0.0,
        }
    }

    pub fn linear(omega_rabi: f64, phi_mw: f64) -> Self {
        Self::new(omega_rabi, phi_mw, 0.0)
    }

    pub fn with_carrier(mut self, omega_drive: f64) -> Self {
        self.omega_drive = omega_drive;
        self
    }

    pub fn lambda(&self) -> f64 {
        (FRAC_PI_4 - self.epsilon_mw).tan()
    }

    /// Transverse field amplitude B⊥^mw in tesla.
    pub fn b_perp_tesla(&self, params: &NvParams) -> f64 {
        self.omega_rabi / params.gamma_e
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.omega_rabi, self.phi_mw, self.epsilon_mw, self.omega_drive]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(Error::NonFinite("drive"));
        }
        if self.omega_rabi < 0.0 {
            return Err(Error::InvalidParameter("Rabi frequency must be >= 0".into()));
        }
        Ok(())
    }
}

/// Maps (φ, ε) onto an equivalent pair with ε ∈ [−π/4, π/4].
fn normalize_ellipse(phi: f64, epsilon: f64) -> (f64, f64) {
    if (-FRAC_PI_4..=FRAC_PI_4).contains(&epsilon) {
        return (phi, epsilon);
    }
    // ε and ε ± π trace the same ellipse half a period apart
    let mut eps = (epsilon + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    let mut phi = phi;
    if eps > FRAC_PI_4 {
        eps = FRAC_PI_2 - eps;
        phi += FRAC_PI_2;
    } else if eps < -FRAC_PI_4 {
        eps = -FRAC_PI_2 - eps;
        phi += FRAC_PI_2;
    }
    (phi, eps)
}

/// Transverse microwave field at time `t` (s), in units of γB (Hz), so that
/// a linear drive has peak amplitude Ω.
pub fn mw_field_vector(drive: &DriveField, t: f64) -> [f64; 2] {
    let wt = 2.0 * PI * drive.omega_drive * t;
    let (se, ce) = drive.epsilon_mw.sin_cos();
    let (sp, cp) = drive.phi_mw.sin_cos();
    let (swt, cwt) = wt.sin_cos();
    let b = drive.omega_rabi;
    [
        b * (ce * cp * cwt - se * sp * swt),
        b * (ce * sp * cwt + se * cp * swt),
    ]
}

/// Decomposition of the drive into co- and counter-rotating circular parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularComponents {
    /// Amplitude of the σ⁺ component, units of γB (Hz).
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub lambda: f64,
}

impl CircularComponents {
    /// Field rebuilt from the two circular parts (same units as
    /// [`mw_field_vector`]).
    pub fn field_at(&self, drive: &DriveField, t: f64) -> [f64; 2] {
        let wt = 2.0 * PI * drive.omega_drive * t;
        let p = drive.phi_mw;
        [
            self.sigma_plus * (wt + p).cos() + self.sigma_minus * (wt - p).cos(),
            self.sigma_plus * (wt + p).sin() - self.sigma_minus * (wt - p).sin(),
        ]
    }
}

pub fn circular_decomposition(drive: &DriveField) -> CircularComponents {
    let lambda = drive.lambda();
    let base = (FRAC_PI_4 - drive.epsilon_mw).cos() * drive.omega_rabi * FRAC_1_SQRT_2;
    CircularComponents {
        sigma_plus: base,
        sigma_minus: lambda * base,
        lambda,
    }
}

/// Stokes vector (S1, S2, S3) on the unit Poincaré sphere.
pub fn stokes_parameters(drive: &DriveField) -> [f64; 3] {
    let (s2e, c2e) = (2.0 * drive.epsilon_mw).sin_cos();
    let (s2p, c2p) = (2.0 * drive.phi_mw).sin_cos();
    [c2e * c2p, c2e * s2p, s2e]
}

/// Rotating-frame drive Hamiltonian after the rotating-wave approximation,
/// basis `{|+1⟩, |0⟩, |−1⟩}`, Hz.
pub fn rwa_hamiltonian(drive: &DriveField) -> Matrix3<Complex64> {
    let half = drive.omega_rabi / 2.0;
    let (s, c) = (FRAC_PI_4 - drive.epsilon_mw).sin_cos();
    let up = Complex64::from_polar(half * c, -drive.phi_mw);
    let down = Complex64::from_polar(half * s, drive.phi_mw);
    let z = Complex64::new(0.0, 0.0);
    Matrix3::new(z, up, z, up.conj(), z, down.conj(), z, down, z)
}

/// Normalized and absolute strengths of the six lines, canonical label order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrengthSet {
    pub normalized: [f64; 6],
    /// (2π)² (Ω/2)² W
    pub absolute: [f64; 6],
    /// Summed absolute strength of the two degenerate outer lines per branch.
    pub outer_minus: f64,
    pub outer_plus: f64,
    pub imbalance_inner: f64,
    pub imbalance_outer: f64,
}

impl StrengthSet {
    pub fn w(&self, label: LineLabel) -> f64 {
        self.normalized[label.index()]
    }
}

/// Closed-form strengths at zero axial field.
pub fn transition_strengths(
    field: &EffectiveField,
    params: &NvParams,
    drive: &DriveField,
) -> StrengthSet {
    transition_strengths_at(field, params, drive, 0.0)
}

/// Closed-form strengths with an axial field; each block uses its own
/// mixing angle `cos θ = (m_I A_HF + γB_z)/r`, which at B_z = 0 is θ_Π for
/// `m_I = +1` and π − θ_Π for `m_I = −1`.
pub fn transition_strengths_at(
    field: &EffectiveField,
    params: &NvParams,
    drive: &DriveField,
    b_z: f64,
) -> StrengthSet {
    let chi2 = 2.0 * (FRAC_PI_4 - drive.epsilon_mw);
    let (sin_chi2, cos_chi2) = chi2.sin_cos();
    let cos_delta = (2.0 * drive.phi_mw - field.phi_pi()).cos();

    let mut normalized = [0.0; 6];
    for label in LineLabel::ALL {
        let (cos_t, sin_t) = block_angle(params, field, label.m_i as i32, b_z);
        let bias = cos_t * cos_chi2 + sin_t * sin_chi2 * cos_delta;
        normalized[label.index()] = 0.5 * (1.0 + label.branch.sign() * bias);
    }
    let scale = absolute_scale(drive);
    let absolute = normalized.map(|w| scale * w);
    let idx = |b, m| LineLabel::new(b, m).index();
    let outer_minus = absolute[idx(Branch::Minus, 1)] + absolute[idx(Branch::Minus, -1)];
    let outer_plus = absolute[idx(Branch::Plus, 1)] + absolute[idx(Branch::Plus, -1)];
    let inner_minus = normalized[idx(Branch::Minus, 0)];
    let inner_plus = normalized[idx(Branch::Plus, 0)];
    StrengthSet {
        normalized,
        absolute,
        outer_minus,
        outer_plus,
        imbalance_inner: ratio(inner_plus - inner_minus, inner_plus + inner_minus),
        imbalance_outer: ratio(outer_plus - outer_minus, outer_plus + outer_minus),
    }
}

fn absolute_scale(drive: &DriveField) -> f64 {
    let half = 2.0 * PI * drive.omega_rabi / 2.0;
    half * half
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Normalized strengths for a linearly polarized drive, written directly in
/// terms of θ_Π (valid at zero axial field).
pub fn linear_strengths(field: &EffectiveField, params: &NvParams, phi_mw: f64) -> [f64; 6] {
    let angles = mixing_angles(params, field);
    let cos_delta = (2.0 * phi_mw - angles.phi_pi).cos();
    let s = angles.theta_pi.sin();
    let mut w = [0.0; 6];
    for label in LineLabel::ALL {
        let modulation = if label.is_inner() { 1.0 } else { s };
        w[label.index()] = 0.5 * (1.0 + label.branch.sign() * modulation * cos_delta);
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imbalances {
    pub inner: f64,
    /// Imbalance of the summed (degenerate) outer lines.
    pub outer_summed: f64,
    /// Per-block outer imbalance for `m_I = +1` and `m_I = −1`.
    pub outer_per_m_i: [f64; 2],
}

pub fn imbalances(field: &EffectiveField, params: &NvParams, drive: &DriveField) -> Imbalances {
    let chi2 = 2.0 * (FRAC_PI_4 - drive.epsilon_mw);
    let cos_delta = (2.0 * drive.phi_mw - field.phi_pi()).cos();
    let theta = mixing_angles(params, field).theta_pi;
    let inner = chi2.sin() * cos_delta;
    let outer_summed = theta.sin() * inner;
    let per = |sign: f64| sign * theta.cos() * chi2.cos() + outer_summed;
    Imbalances {
        inner,
        outer_summed,
        outer_per_m_i: [per(1.0), per(-1.0)],
    }
}

/// The four resolvable lines at zero field, in ascending frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RabiLine {
    OuterLow = 1,
    InnerLow = 2,
    InnerHigh = 3,
    OuterHigh = 4,
}

impl RabiLine {
    pub const ALL: [RabiLine; 4] = [
        RabiLine::OuterLow,
        RabiLine::InnerLow,
        RabiLine::InnerHigh,
        RabiLine::OuterHigh,
    ];

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(RabiLine::OuterLow),
            2 => Ok(RabiLine::InnerLow),
            3 => Ok(RabiLine::InnerHigh),
            4 => Ok(RabiLine::OuterHigh),
            _ => Err(Error::UnknownTransition(n.to_string())),
        }
    }

    /// Outer lines 1 and 4 are bound to the `m_I = +1` block so that the
    /// pair (1, 4) shares a block, as (2, 3) does.
    pub fn label(self) -> LineLabel {
        match self {
            RabiLine::OuterLow => LineLabel::new(Branch::Minus, 1),
            RabiLine::InnerLow => LineLabel::new(Branch::Minus, 0),
            RabiLine::InnerHigh => LineLabel::new(Branch::Plus, 0),
            RabiLine::OuterHigh => LineLabel::new(Branch::Plus, 1),
        }
    }
}

/// Parses `1..4` or a full label such as `-,+1`.
pub fn parse_transition(s: &str) -> Result<LineLabel> {
    match s.trim().parse::<u8>() {
        Ok(n) => RabiLine::from_number(n).map(RabiLine::label),
        Err(_) => s.parse::<LineLabel>(),
    }
}

/// Angular Rabi frequencies Ω_{±,m_I} = 2π (Ω/2) √W, rad/s.
pub fn rabi_frequencies(
    field: &EffectiveField,
    params: &NvParams,
    drive: &DriveField,
) -> [f64; 6] {
    let w = transition_strengths(field, params, drive).normalized;
    let half = 2.0 * PI * drive.omega_rabi / 2.0;
    w.map(|x| half * x.max(0.0).sqrt())
}
