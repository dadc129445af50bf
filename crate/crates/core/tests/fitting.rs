mod common;

use std::f64::consts::PI;

use common::{Draw, MHZ};
use nvzf::fit::{auto_initialize, fit_peaks, select_peak_count};
use nvzf::hamiltonian::{transition_frequencies, Branch, EffectiveField, LineLabel, NvParams};
use nvzf::inversion::{
    analyze_spectrum, batch_summary, dip_lines, extract_effective_field, imbalance_from_fit,
    FieldSample, PeakCount,
};
use nvzf::lm::{levenberg_marquardt, LeastSquaresProblem, LmOptions};
use nvzf::polarization::{imbalances, DriveField};
use nvzf::spectra::{linspace, merge_dips, simulate_zero_field, LineShape, Spectrum};
use nalgebra::{DMatrix, DVector};

fn pcd_field() -> EffectiveField {
    EffectiveField::from_polar(4.20 * MHZ, 0.9, 4.32 * MHZ)
}

/// At 0.4 MHz width the inner and outer dips are only 0.51 MHz apart; a
/// drive with 2φ_mw − φ_Π = π/2 keeps all four comparably deep so that
/// each remains a separate minimum.
fn pcd_drive() -> DriveField {
    DriveField::linear(1.0 * MHZ, 0.5 * (0.9 + 0.5 * PI))
}

fn pcd_spectrum(noise: f64, seed: u64) -> (Spectrum, Vec<f64>, f64) {
    pcd_spectrum_with(&pcd_drive(), 0.4 * MHZ, noise, seed)
}

fn pcd_spectrum_with(drive: &DriveField, fwhm: f64, noise: f64, seed: u64) -> (Spectrum, Vec<f64>, f64) {
    let p = NvParams::default();
    let f = pcd_field();
    let center = p.zero_field_splitting + f.pi_par;
    let grid = linspace(center - 8.0 * MHZ, center + 8.0 * MHZ, 3201).unwrap();
    let shape = LineShape::gaussian(fwhm, 0.1);
    let s = simulate_zero_field(&p, &f, drive, &shape, &grid)
        .unwrap()
        .with_noise(noise, seed);
    let t = transition_frequencies(&p, &f, 0.0).unwrap();
    let mut centers: Vec<f64> = t.iter().map(|l| l.frequency_hz).collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    (s, centers, fwhm)
}

#[test]
fn pcd_centers_recovered_at_snr_20() {
    let (s, truth, fwhm) = pcd_spectrum(0.1 / 20.0, 11);
    let fit = fit_peaks(&s, 4, None).unwrap();
    assert!(fit.converged);
    for (c, t) in fit.model.centers().iter().zip(&truth) {
        assert!((c - t).abs() < 0.05 * fwhm, "{c} vs {t}");
    }
}

#[test]
fn clean_seeds_near_true_centers() {
    // narrower lines so that neighbours do not pull the minima
    let (s, truth, _) = pcd_spectrum_with(&pcd_drive(), 0.2 * MHZ, 0.0, 0);
    let step = s.frequencies[1] - s.frequencies[0];
    let seed = auto_initialize(&s, 4).unwrap();
    for (c, t) in seed.centers().iter().zip(&truth) {
        assert!((c - t).abs() <= 2.0 * step, "{c} vs {t}");
    }
}

#[test]
fn type_ib_inner_pair_resolved() {
    let p = NvParams::default();
    let f = EffectiveField::from_polar(0.5 * MHZ, 0.0, 0.05 * MHZ);
    let drive = DriveField::linear(1.0 * MHZ, 0.6);
    let center = p.zero_field_splitting + f.pi_par;
    let grid = linspace(center - 4.0 * MHZ, center + 4.0 * MHZ, 1601).unwrap();
    let shape = LineShape::gaussian(0.15 * MHZ, 0.1);
    let s = simulate_zero_field(&p, &f, &drive, &shape, &grid).unwrap();
    // outer dips stay single: the outer splitting is unresolved at this width
    let t = transition_frequencies(&p, &f, 0.0).unwrap();
    let w = nvzf::polarization::transition_strengths(&f, &p, &drive);
    assert_eq!(merge_dips(&t, &w).len(), 4);
    let fit = fit_peaks(&s, 4, None).unwrap();
    let c = fit.model.centers();
    assert!(((c[2] - c[1]) - 1.0 * MHZ).abs() < 1e3, "inner pair {}", c[2] - c[1]);
    let e = extract_effective_field(&c, &p, true).unwrap();
    assert!((e.pi_perp_hz - 0.5 * MHZ).abs() < 1e3);
    assert!((e.pi_par_hz - 0.05 * MHZ).abs() < 1e3);
}

#[test]
fn auto_selects_four_peaks() {
    let (s, _, _) = pcd_spectrum(0.1 / 20.0, 5);
    let (fit, table) = select_peak_count(&s).unwrap();
    assert_eq!(fit.model.n_peaks(), 4, "{table:?}");
}

#[test]
fn pipeline_imbalance_matches_prediction() {
    let p = NvParams::default();
    let f = pcd_field();
    // cos δ = 1/2 keeps the weaker member of each pair clearly visible
    let drive = DriveField::linear(1.0 * MHZ, 0.5 * (0.9 + PI / 3.0));
    let (s, _, _) = pcd_spectrum_with(&drive, 0.2 * MHZ, 0.0, 0);
    let r = analyze_spectrum(&s, PeakCount::Fixed(4), &p, true).unwrap();
    let predicted = imbalances(&f, &p, &drive);
    let inner = r.imbalance_inner.unwrap();
    let outer = r.imbalance_outer.unwrap();
    assert!((inner - predicted.inner).abs() < 0.02, "{inner} vs {}", predicted.inner);
    assert!((outer - predicted.outer_summed).abs() < 0.02, "{outer} vs {}", predicted.outer_summed);
}

#[test]
fn imbalance_needs_both_members() {
    let (s, _, _) = pcd_spectrum(0.0, 0);
    let fit = fit_peaks(&s, 4, None).unwrap();
    let l = |b, m| LineLabel::new(b, m);
    let lines = dip_lines(
        &[l(Branch::Minus, 1), l(Branch::Minus, 0), l(Branch::Minus, -1), l(Branch::Plus, 1)],
        false,
    );
    assert!(imbalance_from_fit(&fit.model, &lines).is_err());
}

#[test]
fn batch_reproduces_reported_means() {
    // ten values spread around 1.35 / 2.16 MHz with those exact means
    let offsets = [-0.45, -0.35, -0.25, -0.15, -0.05, 0.05, 0.15, 0.25, 0.35, 0.45];
    let samples: Vec<FieldSample> = offsets
        .iter()
        .map(|o| FieldSample { pi_perp_hz: (1.35 + o) * MHZ, pi_par_hz: (2.16 - o) * MHZ })
        .collect();
    let s = batch_summary(&samples).unwrap();
    assert!((s.mean_pi_perp_hz - 1.35 * MHZ).abs() < 1e-6);
    assert!((s.mean_pi_par_hz - 2.16 * MHZ).abs() < 1e-6);
    // direct computation of the sample standard deviation
    let var = offsets.iter().map(|o| (o * MHZ).powi(2)).sum::<f64>() / 9.0;
    assert!((s.std_pi_perp_hz - var.sqrt()).abs() < 1e-6);
    assert!((s.std_pi_par_hz - var.sqrt()).abs() < 1e-6);
}

#[test]
fn assignment_is_exhaustively_optimal() {
    // residual of the chosen assignment is no worse than any injective
    // alternative evaluated with its own best (Π⊥, Π∥) on a fine grid
    let p = NvParams::default();
    let mut rng = Draw::new(21);
    for _ in 0..5 {
        let k = 3 + (rng.uniform(0.0, 2.0) as usize);
        let base = p.zero_field_splitting + rng.uniform(-3.0, 3.0) * MHZ;
        let mut c: Vec<f64> = (0..k).map(|_| base + rng.uniform(-6.0, 6.0) * MHZ).collect();
        c.sort_by(f64::total_cmp);
        let e = extract_effective_field(&c, &p, true).unwrap();
        let chosen = e.residual_rms_hz.powi(2) * k as f64;
        let mut labels = Vec::new();
        fn perms(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in 0..6 {
                if !cur.contains(&i) {
                    cur.push(i);
                    perms(k, cur, out);
                    cur.pop();
                }
            }
        }
        perms(k, &mut Vec::new(), &mut labels);
        for perm in labels {
            let mut best = f64::INFINITY;
            for i in 0..=2000 {
                let perp = 20.0 * MHZ * i as f64 / 2000.0;
                let off: Vec<f64> = perm
                    .iter()
                    .zip(&c)
                    .map(|(&li, &ci)| {
                        let label = LineLabel::ALL[li];
                        let h = label.m_i as f64 * p.axial_hyperfine;
                        ci - p.zero_field_splitting - label.branch.sign() * h.hypot(perp)
                    })
                    .collect();
                let m = off.iter().sum::<f64>() / k as f64;
                best = best.min(off.iter().map(|o| (o - m).powi(2)).sum());
            }
            assert!(chosen <= best * (1.0 + 1e-9) + 1e-6, "chosen {chosen} > {best}");
        }
    }
}

#[test]
fn accepted_steps_never_increase_objective() {
    struct Dips<'a>(&'a Spectrum);
    impl LeastSquaresProblem for Dips<'_> {
        fn residuals(&self, q: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(
                self.0.len(),
                self.0.frequencies.iter().zip(&self.0.contrast).map(|(&x, &y)| {
                    let u = (x - q[1]) / q[2];
                    q[0] - q[3] * (-4.0 * 2f64.ln() * u * u).exp() - y
                }),
            )
        }
        fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
            let h = 1e-7;
            let r0 = self.residuals(q);
            let mut j = DMatrix::zeros(self.0.len(), 4);
            for c in 0..4 {
                let mut qq = q.clone();
                let dq = h * q[c].abs().max(1e-3);
                qq[c] += dq;
                let r1 = self.residuals(&qq);
                j.set_column(c, &((r1 - &r0) / dq));
            }
            j
        }
    }
    let grid = linspace(-5.0, 5.0, 300).unwrap();
    let y: Vec<f64> = grid.iter().map(|x| 1.0 - 0.3 * (-4.0 * 2f64.ln() * (x - 0.7f64).powi(2)).exp()).collect();
    let s = Spectrum::new(grid, y).unwrap().with_noise(0.01, 3);
    let rep = levenberg_marquardt(&Dips(&s), DVector::from_vec(vec![0.9, -1.0, 3.0, 0.1]), &LmOptions::default());
    assert!(rep.history.len() > 3);
    assert!(rep.history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn random_exact_centers_with_axial_field() {
    let p = NvParams::default();
    let b_lac = p.axial_hyperfine.abs() / p.gamma_e;
    let mut rng = Draw::new(31);
    for _ in 0..20 {
        let perp = rng.uniform(0.5, 6.0) * MHZ;
        let par = rng.uniform(-5.0, 5.0) * MHZ;
        let bz = rng.uniform(0.2, 1.5) * b_lac;
        let f = EffectiveField::from_polar(perp, rng.uniform(0.0, 2.0 * PI), par);
        let t = transition_frequencies(&p, &f, bz).unwrap();
        let mut c: Vec<f64> = t.iter().map(|l| l.frequency_hz).collect();
        c.sort_by(f64::total_cmp);
        let e = extract_effective_field(&c, &p, false).unwrap();
        assert!(e.residual_rms_hz < 1.0, "{e:?}");
        assert!((e.pi_perp_hz - perp).abs() < 1.0, "{} vs {perp}", e.pi_perp_hz);
        assert!((e.pi_par_hz - par).abs() < 1.0);
        assert!((e.b_z_tesla.abs() - bz).abs() < 1e-10);
    }
}

