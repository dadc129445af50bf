//! Spin model, ODMR simulation and effective-field extraction for single
//! nitrogen-vacancy centers at and around zero magnetic field.

pub mod error;
pub mod fit;
pub mod hamiltonian;
pub mod inversion;
pub mod io;
pub mod linalg;
pub mod lm;
pub mod polarization;
pub mod rng;
pub mod spectra;

pub use error::{Error, Result};
pub use hamiltonian::{
    block_hamiltonian, effective_field_from_sources, full_hamiltonian, mixing_angles,
    transition_frequencies, Branch, EffectiveField, FieldSources, LineLabel, MixingAngles,
    NvParams, TransitionSet,
};
pub use fit::{auto_initialize, fit_peaks, select_peak_count, Peak, PeakFit, PeakModel};
pub use inversion::{
    analyze_spectrum, batch_summary, extract_effective_field, imbalance_from_fit, BatchSummary,
    Extraction, FitResult, PeakCount,
};
pub use linalg::diagonalize_hermitian;
pub use polarization::{
    circular_decomposition, imbalances, mw_field_vector, rabi_frequencies, rwa_hamiltonian,
    stokes_parameters, transition_strengths, DriveField, StrengthSet,
};
pub use spectra::{
    polarization_scan, rabi_trace, sweep_bz, synthesize_spectrum, LineShape, Spectrum,
    SweepResult,
};
