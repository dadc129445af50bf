use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use nvzf::hamiltonian::{full_hamiltonian, transition_frequencies, Branch, EffectiveField, LineLabel, NvParams};
use nvzf::io::{read_spectrum_csv, spectrum_to_csv_string};
use nvzf::linalg::hermitian_defect;
use nvzf::polarization::{transition_strengths_at, DriveField};
use nvzf::spectra::{linspace, simulate_zero_field, LineShape};

const MHZ: f64 = 1e6;
const TAU: f64 = std::f64::consts::TAU;

fn field() -> impl Strategy<Value = EffectiveField> {
    (0.0..10.0 * MHZ, 0.0..TAU, -10.0 * MHZ..10.0 * MHZ)
        .prop_map(|(perp, phi, par)| EffectiveField::from_polar(perp, phi, par))
}

fn drive() -> impl Strategy<Value = DriveField> {
    (0.0..TAU, -0.78..0.78).prop_map(|(phi, eps)| DriveField::new(1.0 * MHZ, phi, eps))
}

proptest! {
    #[test]
    fn hamiltonian_is_hermitian(f in field(), bz in -1e-3..1e-3) {
        let h = full_hamiltonian(&NvParams::default(), &f, bz).unwrap();
        prop_assert!(hermitian_defect(&h) < 1e-6);
    }

    #[test]
    fn outer_lines_degenerate_at_zero_field(f in field()) {
        let t = transition_frequencies(&NvParams::default(), &f, 0.0).unwrap();
        for b in [Branch::Minus, Branch::Plus] {
            assert_abs_diff_eq!(
                t.frequency(LineLabel::new(b, 1)),
                t.frequency(LineLabel::new(b, -1)),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn strengths_complete_per_block(f in field(), d in drive(), bz in -1e-3..1e-3) {
        let w = transition_strengths_at(&f, &NvParams::default(), &d, bz);
        for m in [-1, 0, 1] {
            let sum = w.w(LineLabel::new(Branch::Minus, m)) + w.w(LineLabel::new(Branch::Plus, m));
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
        prop_assert!(w.normalized.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn joint_rotation_leaves_strengths(f in field(), d in drive(), alpha in 0.0..TAU) {
        let p = NvParams::default();
        let rotated = EffectiveField::from_polar(f.pi_perp(), f.phi_pi() + alpha, f.pi_par);
        let d2 = DriveField::new(d.omega_rabi, d.phi_mw + 0.5 * alpha, d.epsilon_mw);
        let a = transition_strengths_at(&f, &p, &d, 0.0);
        let b = transition_strengths_at(&rotated, &p, &d2, 0.0);
        for (x, y) in a.normalized.iter().zip(&b.normalized) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn axial_shift_moves_every_line(f in field(), shift in -5.0 * MHZ..5.0 * MHZ) {
        let p = NvParams::default();
        let moved = EffectiveField::new(f.pi_x, f.pi_y, f.pi_par + shift);
        let a = transition_frequencies(&p, &f, 0.0).unwrap();
        let b = transition_frequencies(&p, &moved, 0.0).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(y.frequency_hz - x.frequency_hz, shift, epsilon = 1e-4);
        }
    }

    #[test]
    fn csv_emit_is_a_fixed_point(f in field(), d in drive(), seed in any::<u64>()) {
        let p = NvParams::default();
        let c = p.zero_field_splitting + f.pi_par;
        let grid = linspace(c - 12.0 * MHZ, c + 12.0 * MHZ, 97).unwrap();
        let s = simulate_zero_field(&p, &f, &d, &LineShape::gaussian(0.3 * MHZ, 0.1), &grid)
            .unwrap()
            .with_noise(0.003, seed);
        let first = spectrum_to_csv_string(&s).unwrap();
        let back = read_spectrum_csv(first.as_bytes()).unwrap();
        prop_assert_eq!(&back.frequencies, &s.frequencies);
        prop_assert_eq!(&back.contrast, &s.contrast);
        prop_assert_eq!(spectrum_to_csv_string(&back).unwrap(), first);
    }

    #[test]
    fn simulation_is_deterministic(f in field(), d in drive(), seed in any::<u64>()) {
        let p = NvParams::default();
        let c = p.zero_field_splitting + f.pi_par;
        let grid = linspace(c - 12.0 * MHZ, c + 12.0 * MHZ, 61).unwrap();
        let shape = LineShape::gaussian(0.3 * MHZ, 0.1);
        let run = || simulate_zero_field(&p, &f, &d, &shape, &grid).unwrap().with_noise(0.01, seed);
        prop_assert_eq!(run(), run());
    }
}
