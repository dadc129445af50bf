//! Ground-state spin Hamiltonian of the NV center coupled to its host ¹⁴N.
//!
//! All energies are in Hz. The `m_s = 0` manifold sits at energy zero, so
//! the eigenenergies of the `m_s = ±1` blocks are directly the ODMR
//! transition frequencies.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diagonalize_hermitian, HermitianEigen};

pub const DEFAULT_ZERO_FIELD_SPLITTING_HZ: f64 = 2.87e9;
pub const DEFAULT_AXIAL_HYPERFINE_HZ: f64 = -2.14e6;
/// Electron gyromagnetic ratio of the NV center, Hz/T.
pub const DEFAULT_GAMMA_E_HZ_PER_TESLA: f64 = 28.024953e9;
pub const DEFAULT_D_PAR_HZ_CM_PER_V: f64 = 0.35;
pub const DEFAULT_D_PERP_HZ_CM_PER_V: f64 = 17.0;

/// Physical constants of the defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvParams {
    #[serde(default = "default_d", rename = "d_hz")]
    pub zero_field_splitting: f64,
    #[serde(default = "default_a_hf", rename = "a_hf_hz")]
    pub axial_hyperfine: f64,
    #[serde(default = "default_gamma", rename = "gamma_e_hz_per_tesla")]
    pub gamma_e: f64,
    #[serde(default = "default_d_par", rename = "d_par_hz_cm_per_v")]
    pub d_par: f64,
    #[serde(default = "default_d_perp", rename = "d_perp_hz_cm_per_v")]
    pub d_perp: f64,
}

fn default_d() -> f64 {
    DEFAULT_ZERO_FIELD_SPLITTING_HZ
}
fn default_a_hf() -> f64 {
    DEFAULT_AXIAL_HYPERFINE_HZ
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA_E_HZ_PER_TESLA
}
fn default_d_par() -> f64 {
    DEFAULT_D_PAR_HZ_CM_PER_V
}
fn default_d_perp() -> f64 {
    DEFAULT_D_PERP_HZ_CM_PER_V
}

impl Default for NvParams {
    fn default() -> Self {
        Self {
            zero_field_splitting: DEFAULT_ZERO_FIELD_SPLITTING_HZ,
            axial_hyperfine: DEFAULT_AXIAL_HYPERFINE_HZ,
            gamma_e: DEFAULT_GAMMA_E_HZ_PER_TESLA,
            d_par: DEFAULT_D_PAR_HZ_CM_PER_V,
            d_perp: DEFAULT_D_PERP_HZ_CM_PER_V,
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.zero_field_splitting,
            self.axial_hyperfine,
            self.gamma_e,
            self.d_par,
            self.d_perp,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("NV parameters"));
        }
        if self.zero_field_splitting <= 0.0 {
            return Err(Error::InvalidParameter(
                "zero-field splitting must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Intrinsic effective field Π = (Πx, Πy, Π∥) in the NV frame, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectiveField {
    pub pi_x: f64,
    pub pi_y: f64,
    pub pi_par: f64,
}

impl EffectiveField {
    pub fn new(pi_x: f64, pi_y: f64, pi_par: f64) -> Self {
        Self { pi_x, pi_y, pi_par }
    }

    /// Builds the field from its transverse magnitude and azimuth.
    pub fn from_polar(pi_perp: f64, phi_pi: f64, pi_par: f64) -> Self {
        Self {
            pi_x: pi_perp * phi_pi.cos(),
            pi_y: pi_perp * phi_pi.sin(),
            pi_par,
        }
    }

    pub fn pi_perp(&self) -> f64 {
        self.pi_x.hypot(self.pi_y)
    }

    /// Azimuth of the transverse component in [0, 2π); zero when Π⊥ = 0.
    pub fn phi_pi(&self) -> f64 {
        if self.pi_perp() == 0.0 {
            return 0.0;
        }
        let phi = self.pi_y.atan2(self.pi_x);
        if phi < 0.0 {
            phi + 2.0 * PI
        } else {
            phi
        }
    }

    fn check_finite(&self) -> Result<()> {
        if [self.pi_x, self.pi_y, self.pi_par]
            .iter()
            .all(|x| x.is_finite())
        {
            Ok(())
        } else {
            Err(Error::NonFinite("effective field"))
        }
    }
}

/// Electric field (V/cm) and spin-strain parameters (Hz) acting on the defect.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldSources {
    #[serde(rename = "e_v_per_cm")]
    pub electric: [f64; 3],
    #[serde(rename = "m_hz")]
    pub strain: [f64; 3],
}

pub fn effective_field_from_sources(
    sources: &FieldSources,
    params: &NvParams,
) -> Result<EffectiveField> {
    if sources
        .electric
        .iter()
        .chain(sources.strain.iter())
        .any(|x| !x.is_finite())
    {
        return Err(Error::NonFinite("field sources"));
    }
    params.validate()?;
    let [ex, ey, ez] = sources.electric;
    let [mx, my, mz] = sources.strain;
    Ok(EffectiveField {
        pi_x: params.d_perp * ex + mx,
        pi_y: params.d_perp * ey + my,
        pi_par: params.d_par * ez + mz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }
}

/// One of the six `|0, m_I⟩ → |±, m_I⟩` lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineLabel {
    pub branch: Branch,
    pub m_i: i8,
}

impl LineLabel {
    /// Canonical ordering: (−,−1), (−,0), (−,+1), (+,−1), (+,0), (+,+1).
    pub const ALL: [LineLabel; 6] = [
        LineLabel::new(Branch::Minus, -1),
        LineLabel::new(Branch::Minus, 0),
        LineLabel::new(Branch::Minus, 1),
        LineLabel::new(Branch::Plus, -1),
        LineLabel::new(Branch::Plus, 0),
        LineLabel::new(Branch::Plus, 1),
    ];

    pub const fn new(branch: Branch, m_i: i8) -> Self {
        Self { branch, m_i }
    }

    pub fn index(self) -> usize {
        let b = match self.branch {
            Branch::Minus => 0,
            Branch::Plus => 3,
        };
        b + (self.m_i + 1) as usize
    }

    pub fn is_inner(self) -> bool {
        self.m_i == 0
    }

    /// Column-friendly name, e.g. `minus_m-1`, `plus_m+1`.
    pub fn column_name(self) -> String {
        let b = match self.branch {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        };
        let m = match self.m_i {
            -1 => "-1",
            0 => "0",
            _ => "+1",
        };
        format!("{b}_m{m}")
    }
}

impl fmt::Display for LineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = match self.branch {
            Branch::Minus => '-',
            Branch::Plus => '+',
        };
        match self.m_i {
            0 => write!(f, "{b},0"),
            m => write!(f, "{b},{m:+}"),
        }
    }
}

impl std::str::FromStr for LineLabel {
    type Err = Error;

    /// Accepts `-,+1`, `+,0`, `minus,-1`, ...
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownTransition(s.to_string());
        let (b, m) = s.split_once(',').ok_or_else(bad)?;
        let branch = match b.trim() {
            "-" | "minus" => Branch::Minus,
            "+" | "plus" => Branch::Plus,
            _ => return Err(bad()),
        };
        let m_i = match m.trim() {
            "-1" => -1,
            "0" | "+0" | "-0" => 0,
            "1" | "+1" => 1,
            _ => return Err(bad()),
        };
        Ok(LineLabel::new(branch, m_i))
    }
}

fn check_m_i(m_i: i32) -> Result<()> {
    if (-1..=1).contains(&m_i) {
        Ok(())
    } else {
        Err(Error::InvalidNuclearSpin(m_i))
    }
}

/// Diagonal detuning `m_I A_HF + γ B_z` of a hyperfine block.
pub fn block_detuning(params: &NvParams, m_i: i32, b_z: f64) -> f64 {
    m_i as f64 * params.axial_hyperfine + params.gamma_e * b_z
}

/// 2x2 Hamiltonian of the `{|+1, m_I⟩, |−1, m_I⟩}` subspace.
pub fn block_hamiltonian(
    params: &NvParams,
    field: &EffectiveField,
    m_i: i32,
    b_z: f64,
) -> Result<Matrix2<Complex64>> {
    check_m_i(m_i)?;
    field.check_finite()?;
    if !b_z.is_finite() {
        return Err(Error::NonFinite("b_z"));
    }
    let center = params.zero_field_splitting + field.pi_par;
    let h = block_detuning(params, m_i, b_z);
    // Π⊥ e^{-iφ} = Πx − iΠy
    let coupling = Complex64::new(field.pi_x, -field.pi_y);
    Ok(Matrix2::new(
        Complex64::new(center + h, 0.0),
        coupling,
        coupling.conj(),
        Complex64::new(center - h, 0.0),
    ))
}

/// Spin-1 operators in the `{|+1⟩, |0⟩, |−1⟩}` basis.
pub mod spin1 {
    use nalgebra::Matrix3;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    pub fn sz() -> Matrix3<Complex64> {
        Matrix3::from_diagonal(&nalgebra::Vector3::new(c(1.0), c(0.0), c(-1.0)))
    }

    pub fn sx() -> Matrix3<Complex64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0);
        Matrix3::new(z, c(r), z, c(r), z, c(r), z, c(r), z)
    }

    pub fn sy() -> Matrix3<Complex64> {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0);
        let pi = Complex64::new(0.0, r);
        Matrix3::new(z, -pi, z, pi, z, -pi, z, pi, z)
    }

    pub fn identity() -> Matrix3<Complex64> {
        Matrix3::identity()
    }
}

fn kron3(a: &nalgebra::Matrix3<Complex64>, b: &nalgebra::Matrix3<Complex64>) -> DMatrix<Complex64> {
    let mut out = DMatrix::<Complex64>::zeros(9, 9);
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[(3 * i + k, 3 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Index of `|m_s⟩ ⊗ |m_I⟩` in the 9-dimensional product basis, both
/// factors ordered `+1, 0, −1`.
pub fn product_index(m_s: i32, m_i: i32) -> usize {
    (3 * (1 - m_s) + (1 - m_i)) as usize
}

/// Full electron ⊗ nuclear Hamiltonian with the axial Zeeman term.
pub fn full_hamiltonian(
    params: &NvParams,
    field: &EffectiveField,
    b_z: f64,
) -> Result<DMatrix<Complex64>> {
    params.validate()?;
    field.check_finite()?;
    if !b_z.is_finite() {
        return Err(Error::NonFinite("b_z"));
    }
    let (sx, sy, sz) = (spin1::sx(), spin1::sy(), spin1::sz());
    let id = spin1::identity();
    let iz = spin1::sz();
    let c = |x: f64| Complex64::new(x, 0.0);

    let sz2 = sz * sz;
    let electron = sz2 * c(params.zero_field_splitting + field.pi_par)
        + (sx * sx - sy * sy) * c(field.pi_x)
        + (sx * sy + sy * sx) * c(field.pi_y)
        + sz * c(params.gamma_e * b_z);

    Ok(kron3(&electron, &id) + kron3(&sz, &iz) * c(params.axial_hyperfine))
}

/// Mixing angles of the `m_I = ±1` hyperfine states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingAngles {
    pub theta_pi: f64,
    pub phi_pi: f64,
}

pub fn mixing_angles(params: &NvParams, field: &EffectiveField) -> MixingAngles {
    let pi_perp = field.pi_perp();
    let a = params.axial_hyperfine.abs();
    let r = pi_perp.hypot(a);
    let theta_pi = if r == 0.0 { PI / 2.0 } else { (-a / r).acos() };
    MixingAngles {
        theta_pi,
        phi_pi: field.phi_pi(),
    }
}

/// Polar angle of the effective pseudo-spin field of one block, returned as
/// `(cos θ, sin θ)` with `cos θ = h / r`, `sin θ = Π⊥ / r`.
///
/// At `h = Π⊥ = 0` the block is degenerate and the equal-weight basis
/// (θ = π/2) is used.
pub fn block_angle(params: &NvParams, field: &EffectiveField, m_i: i32, b_z: f64) -> (f64, f64) {
    let h = block_detuning(params, m_i, b_z);
    let pi_perp = field.pi_perp();
    let r = h.hypot(pi_perp);
    if r == 0.0 {
        (0.0, 1.0)
    } else {
        (h / r, pi_perp / r)
    }
}

/// Dressed `|±⟩` state of a block, components on `(|+1⟩, |−1⟩)`.
///
/// `|+⟩ = cos(θ/2)|+1⟩ + e^{iφ}sin(θ/2)|−1⟩`,
/// `|−⟩ = sin(θ/2)|+1⟩ − e^{iφ}cos(θ/2)|−1⟩`.
pub fn block_eigenstate(
    params: &NvParams,
    field: &EffectiveField,
    label: LineLabel,
    b_z: f64,
) -> Vector2<Complex64> {
    let (cos_t, _) = block_angle(params, field, label.m_i as i32, b_z);
    let half_cos = ((1.0 + cos_t) / 2.0).max(0.0).sqrt();
    let half_sin = ((1.0 - cos_t) / 2.0).max(0.0).sqrt();
    let phase = Complex64::from_polar(1.0, field.phi_pi());
    let c = |x: f64| Complex64::new(x, 0.0);
    match label.branch {
        Branch::Plus => Vector2::new(c(half_cos), phase * half_sin),
        Branch::Minus => Vector2::new(c(half_sin), -phase * half_cos),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub label: LineLabel,
    pub frequency_hz: f64,
    /// The line this one coincides with by symmetry (outer pairs at B_z = 0).
    pub degenerate_with: Option<LineLabel>,
}

/// The six `|0, m_I⟩ → |±, m_I⟩` transitions in canonical label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSet {
    pub b_z_tesla: f64,
    pub lines: [Transition; 6],
}

impl TransitionSet {
    pub fn get(&self, label: LineLabel) -> &Transition {
        &self.lines[label.index()]
    }

    pub fn frequency(&self, label: LineLabel) -> f64 {
        self.get(label).frequency_hz
    }

    /// Splitting `E_{+,m_I} − E_{−,m_I}`.
    pub fn splitting(&self, m_i: i8) -> f64 {
        self.frequency(LineLabel::new(Branch::Plus, m_i))
            - self.frequency(LineLabel::new(Branch::Minus, m_i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.lines.iter()
    }
}

/// Analytic eigenenergies `(D + Π∥) ± √((m_I A_HF + γB_z)² + Π⊥²)`.
pub fn transition_frequencies(
    params: &NvParams,
    field: &EffectiveField,
    b_z: f64,
) -> Result<TransitionSet> {
    params.validate()?;
    field.check_finite()?;
    if !b_z.is_finite() {
        return Err(Error::NonFinite("b_z"));
    }
    let center = params.zero_field_splitting + field.pi_par;
    let pi_perp = field.pi_perp();
    let zero_field = b_z == 0.0;
    let lines = LineLabel::ALL.map(|label| {
        let h = block_detuning(params, label.m_i as i32, b_z);
        let half_gap = h.hypot(pi_perp);
        let degenerate_with = (zero_field && label.m_i != 0)
            .then(|| LineLabel::new(label.branch, -label.m_i));
        Transition {
            label,
            frequency_hz: center + label.branch.sign() * half_gap,
            degenerate_with,
        }
    });
    Ok(TransitionSet {
        b_z_tesla: b_z,
        lines,
    })
}

/// Numerical route to the transition frequencies: diagonalize the 9x9
/// Hamiltonian and read each `m_I` block off the eigenvectors.
pub fn numerical_transition_frequencies(
    params: &NvParams,
    field: &EffectiveField,
    b_z: f64,
) -> Result<[f64; 6]> {
    let h = full_hamiltonian(params, field, b_z)?;
    let eig: HermitianEigen = diagonalize_hermitian(&h)?;
    let mut per_block: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut ground: [Option<f64>; 3] = [None; 3];
    for k in 0..9 {
        let v = eig.vector(k);
        for (slot, m_i) in [-1, 0, 1].into_iter().enumerate() {
            let w_pm = v[product_index(1, m_i)].norm_sqr() + v[product_index(-1, m_i)].norm_sqr();
            let w_0 = v[product_index(0, m_i)].norm_sqr();
            if w_pm > 0.5 {
                per_block[slot].push(eig.values[k]);
            } else if w_0 > 0.5 {
                ground[slot] = Some(eig.values[k]);
            }
        }
    }
    let mut out = [0.0; 6];
    for (slot, vals) in per_block.iter_mut().enumerate() {
        let zero = match (vals.len(), ground[slot]) {
            (2, Some(z)) => z,
            _ => {
                return Err(Error::InvalidParameter(
                    "could not separate hyperfine blocks".into(),
                ))
            }
        };
        vals.sort_by(f64::total_cmp);
        out[slot] = vals[0] - zero;
        out[slot + 3] = vals[1] - zero;
    }
    Ok(out)
}
