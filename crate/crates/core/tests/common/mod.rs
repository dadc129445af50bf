//! Reference computations shared by the integration tests. None of these
//! call into the closed-form strength code they are used to check.

#![allow(dead_code)]

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use nvzf::hamiltonian::{full_hamiltonian, product_index, Branch, EffectiveField, LineLabel, NvParams};
use nvzf::linalg::diagonalize_hermitian;
use nvzf::polarization::{rwa_hamiltonian, DriveField};
use nvzf::rng::NoiseStream;

pub const MHZ: f64 = 1e6;

/// Uniform draws in [lo, hi) from a seeded stream.
pub struct Draw(pub NoiseStream);

impl Draw {
    pub fn new(seed: u64) -> Self {
        Self(NoiseStream::new(seed))
    }
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_uniform()
    }
}

/// θ_Π from its defining cosine.
pub fn theta_pi(params: &NvParams, pi_perp: f64) -> f64 {
    let a = params.axial_hyperfine;
    (-a.abs() / pi_perp.hypot(a)).acos()
}

/// |x cos χ ± y sin χ e^{iδ}|² with χ = π/4 − ε, the transition-amplitude form
/// written out for each line.
pub fn amplitude_form(label: LineLabel, theta: f64, epsilon: f64, delta: f64) -> f64 {
    let chi = FRAC_PI_4 - epsilon;
    let e = Complex64::from_polar(1.0, delta);
    let (a, b) = match (label.branch, label.m_i) {
        (Branch::Minus, 0) => (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
        (Branch::Plus, 0) => (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        (Branch::Minus, 1) => ((theta / 2.0).sin(), -(theta / 2.0).cos()),
        (Branch::Plus, 1) => ((theta / 2.0).cos(), (theta / 2.0).sin()),
        (Branch::Minus, -1) => ((theta / 2.0).cos(), -(theta / 2.0).sin()),
        (Branch::Plus, -1) => ((theta / 2.0).sin(), (theta / 2.0).cos()),
        _ => unreachable!(),
    };
    (a * chi.cos() + b * chi.sin() * e).norm_sqr()
}

/// Normalized strengths from numerically diagonalized eigenstates of the
/// full 9×9 Hamiltonian: each nuclear subspace is diagonalized on its own,
/// the two levels with the largest |m_s| = 1 weight are ordered by energy
/// and their coupling to the m_s = 0 level through the RWA drive is taken.
pub fn numeric_strengths(
    params: &NvParams,
    field: &EffectiveField,
    drive: &DriveField,
    b_z: f64,
) -> [f64; 6] {
    let h = full_hamiltonian(params, field, b_z).unwrap();
    let hd = rwa_hamiltonian(drive);
    let half = drive.omega_rabi / 2.0;
    let mut out = [0.0; 6];
    for m_i in [-1i32, 0, 1] {
        let idx: Vec<usize> = [1, 0, -1].iter().map(|&ms| product_index(ms, m_i)).collect();
        let sub = DMatrix::from_fn(3, 3, |r, c| h[(idx[r], idx[c])]);
        let eig = diagonalize_hermitian(&sub).unwrap();
        // the m_s = 0 level has (near) unit weight on index 1
        let zero = (0..3)
            .max_by(|&a, &b| eig.vectors[(1, a)].norm().total_cmp(&eig.vectors[(1, b)].norm()))
            .unwrap();
        let mut others: Vec<usize> = (0..3).filter(|&k| k != zero).collect();
        others.sort_by(|&a, &b| eig.values[a].total_cmp(&eig.values[b]));
        for (branch, &k) in [Branch::Minus, Branch::Plus].iter().zip(&others) {
            let mut amp = Complex64::new(0.0, 0.0);
            for r in 0..3 {
                for c in 0..3 {
                    amp += eig.vectors[(r, k)].conj() * hd[(r, c)] * eig.vectors[(c, zero)];
                }
            }
            let label = LineLabel::new(*branch, m_i as i8);
            out[label.index()] = amp.norm_sqr() / (half * half);
        }
    }
    out
}

/// Angular frequency (rad/s) of the dominant oscillation of a uniformly
/// sampled signal: Hann window, zero-padded FFT peak, then a golden-section
/// search of the windowed DTFT magnitude around it.
pub fn dominant_angular_frequency(signal: &[f64], dt: f64) -> f64 {
    let n = signal.len();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let windowed: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - mean) * (0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos()))
        .collect();
    let pad = 16 * n.next_power_of_two();
    let mut buf: Vec<Complex64> = windowed.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(pad, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
    let k = (1..pad / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();

    let dtft = |f: f64| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &x) in windowed.iter().enumerate() {
            acc += x * Complex64::from_polar(1.0, -2.0 * PI * f * j as f64);
        }
        acc.norm()
    };
    // bracket one padded bin either side, search in cycles per sample
    let (mut lo, mut hi) = ((k as f64 - 1.0) / pad as f64, (k as f64 + 1.0) / pad as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if dtft(a) > dtft(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    2.0 * PI * 0.5 * (lo + hi) / dt
}
