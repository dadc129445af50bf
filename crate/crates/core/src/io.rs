//! Run configuration (JSON) and spectrum files (CSV).
//!
//! Every physical quantity in a config carries its unit in the key
//! (`*_hz`, `*_tesla`, `*_s`, `*_rad`). Angles may alternatively be given
//! with a `_deg` suffix; giving both forms of the same angle is an error.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{effective_field_from_sources, EffectiveField, FieldSources, NvParams};
use crate::polarization::DriveField;
use crate::spectra::{linspace, LineShape, Spectrum};

pub const SPECTRUM_HEADER: [&str; 2] = ["frequency_hz", "contrast"];

fn angle(rad: Option<f64>, deg: Option<f64>, name: &str) -> Result<Option<f64>> {
    match (rad, deg) {
        (Some(_), Some(_)) => Err(Error::Config(format!(
            "give either {name}_rad or {name}_deg, not both"
        ))),
        (Some(r), None) => Ok(Some(r)),
        (None, Some(d)) => Ok(Some(d.to_radians())),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub pi_x_hz: Option<f64>,
    pub pi_y_hz: Option<f64>,
    pub pi_perp_hz: Option<f64>,
    pub phi_pi_rad: Option<f64>,
    pub phi_pi_deg: Option<f64>,
    pub pi_par_hz: Option<f64>,
    pub sources: Option<FieldSources>,
}

impl FieldConfig {
    pub fn resolve(&self, params: &NvParams) -> Result<EffectiveField> {
        let phi = angle(self.phi_pi_rad, self.phi_pi_deg, "phi_pi")?;
        let cartesian = self.pi_x_hz.is_some() || self.pi_y_hz.is_some();
        let polar = self.pi_perp_hz.is_some() || phi.is_some();
        if let Some(src) = &self.sources {
            if cartesian || polar || self.pi_par_hz.is_some() {
                return Err(Error::Config(
                    "effective_field: 'sources' excludes explicit components".into(),
                ));
            }
            return effective_field_from_sources(src, params);
        }
        if cartesian && polar {
            return Err(Error::Config(
                "effective_field: mix of pi_x/pi_y and pi_perp/phi_pi".into(),
            ));
        }
        let par = self.pi_par_hz.unwrap_or(0.0);
        let field = if polar {
            let perp = self.pi_perp_hz.unwrap_or(0.0);
            if perp < 0.0 {
                return Err(Error::Config("effective_field.pi_perp_hz must be >= 0".into()));
            }
            EffectiveField::from_polar(perp, phi.unwrap_or(0.0), par)
        } else {
            EffectiveField::new(self.pi_x_hz.unwrap_or(0.0), self.pi_y_hz.unwrap_or(0.0), par)
        };
        if [field.pi_x, field.pi_y, field.pi_par].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("effective_field"));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default = "default_omega_rabi")]
    pub omega_rabi_hz: f64,
    pub phi_mw_rad: Option<f64>,
    pub phi_mw_deg: Option<f64>,
    pub epsilon_mw_rad: Option<f64>,
    pub epsilon_mw_deg: Option<f64>,
    /// Carrier frequency; omitted means resonant with the driven line.
    pub omega_drive_hz: Option<f64>,
}

fn default_omega_rabi() -> f64 {
    1e6
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            omega_rabi_hz: default_omega_rabi(),
            phi_mw_rad: None,
            phi_mw_deg: None,
            epsilon_mw_rad: None,
            epsilon_mw_deg: None,
            omega_drive_hz: None,
        }
    }
}

impl DriveConfig {
    pub fn resolve(&self) -> Result<DriveField> {
        let phi = angle(self.phi_mw_rad, self.phi_mw_deg, "phi_mw")?.unwrap_or(0.0);
        let eps = angle(self.epsilon_mw_rad, self.epsilon_mw_deg, "epsilon_mw")?.unwrap_or(0.0);
        let d = DriveField::new(self.omega_rabi_hz, phi, eps)
            .with_carrier(self.omega_drive_hz.unwrap_or(0.0));
        d.validate()?;
        Ok(d)
    }
}

macro_rules! grid_type {
    ($name:ident, $start:ident, $stop:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            pub $start: f64,
            pub $stop: f64,
            pub count: usize,
        }

        impl $name {
            pub fn points(&self) -> Result<Vec<f64>> {
                linspace(self.$start, self.$stop, self.count)
            }
        }
    };
}

grid_type!(FrequencyGrid, start_hz, stop_hz);
grid_type!(BzGrid, start_tesla, stop_tesla);
grid_type!(TimeGrid, start_s, stop_s);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGrid {
    pub start_rad: Option<f64>,
    pub start_deg: Option<f64>,
    pub stop_rad: Option<f64>,
    pub stop_deg: Option<f64>,
    pub count: usize,
}

impl AngleGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let start = angle(self.start_rad, self.start_deg, "start")?
            .ok_or_else(|| Error::Config("angle grid needs start_rad or start_deg".into()))?;
        let stop = angle(self.stop_rad, self.stop_deg, "stop")?
            .ok_or_else(|| Error::Config("angle grid needs stop_rad or stop_deg".into()))?;
        linspace(start, stop, self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub nv_params: NvParams,
    #[serde(default)]
    pub effective_field: FieldConfig,
    #[serde(default)]
    pub b_z_tesla: f64,
    #[serde(default)]
    pub drive: DriveConfig,
    pub frequency_grid: Option<FrequencyGrid>,
    pub bz_grid: Option<BzGrid>,
    pub time_grid: Option<TimeGrid>,
    pub phi_mw_grid: Option<AngleGrid>,
    pub epsilon_mw_grid: Option<AngleGrid>,
    pub lineshape: Option<LineShape>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Hold B_z at zero when inverting fitted centers.
    #[serde(default = "yes")]
    pub assume_bz_zero: bool,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.nv_params.validate()?;
        self.effective_field.resolve(&self.nv_params)?;
        self.drive.resolve()?;
        if !self.b_z_tesla.is_finite() {
            return Err(Error::NonFinite("b_z_tesla"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        if let Some(g) = &self.frequency_grid {
            g.points().map_err(|e| Error::Config(format!("frequency_grid: {e}")))?;
        }
        if let Some(g) = &self.bz_grid {
            g.points().map_err(|e| Error::Config(format!("bz_grid: {e}")))?;
        }
        if let Some(g) = &self.time_grid {
            g.points().map_err(|e| Error::Config(format!("time_grid: {e}")))?;
        }
        if let Some(g) = &self.phi_mw_grid {
            g.points().map_err(|e| Error::Config(format!("phi_mw_grid: {e}")))?;
        }
        if let Some(g) = &self.epsilon_mw_grid {
            g.points().map_err(|e| Error::Config(format!("epsilon_mw_grid: {e}")))?;
        }
        if let Some(s) = &self.lineshape {
            s.validate().map_err(|e| Error::Config(format!("lineshape: {e}")))?;
        }
        Ok(())
    }

    pub fn field(&self) -> Result<EffectiveField> {
        self.effective_field.resolve(&self.nv_params)
    }

    pub fn drive_field(&self) -> Result<DriveField> {
        self.drive.resolve()
    }

    pub fn require<'a, T>(&self, item: &'a Option<T>, name: &str) -> Result<&'a T> {
        item.as_ref()
            .ok_or_else(|| Error::Config(format!("config is missing '{name}'")))
    }
}

/// Writes `frequency_hz,contrast` rows with 17 significant digits so that
/// reading the file back reproduces every value bit for bit.
pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::MalformedCsv { line: 0, message: e.to_string() };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SPECTRUM_HEADER).map_err(io)?;
    for (f, c) in spectrum.frequencies.iter().zip(&spectrum.contrast) {
        w.write_record([format!("{f:.16e}"), format!("{c:.16e}")]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::MalformedCsv { line: 0, message: e.to_string() })
}

pub fn spectrum_to_csv_string(spectrum: &Spectrum) -> Result<String> {
    let mut buf = Vec::new();
    write_spectrum_csv(spectrum, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

/// Parses a spectrum CSV. Errors name the offending line (1-based, header
/// is line 1).
pub fn read_spectrum_csv<R: Read>(input: R) -> Result<Spectrum> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => {
            return Err(Error::MalformedCsv { line: 1, message: "file is empty".into() })
        }
        Some(r) => r.map_err(|e| Error::MalformedCsv { line: 1, message: e.to_string() })?,
    };
    if header.iter().collect::<Vec<_>>() != SPECTRUM_HEADER {
        return Err(Error::MalformedCsv {
            line: 1,
            message: format!("expected header 'frequency_hz,contrast', got '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut freqs = Vec::new();
    let mut contrast = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::MalformedCsv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::MalformedCsv {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|_| Error::MalformedCsv {
                line,
                message: format!("{what} '{s}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedCsv { line, message: format!("{what} is not finite") });
            }
            Ok(v)
        };
        freqs.push(parse(&rec[0], "frequency")?);
        contrast.push(parse(&rec[1], "contrast")?);
    }
    if freqs.is_empty() {
        return Err(Error::MalformedCsv { line: 2, message: "no data rows".into() });
    }
    if let Some(k) = freqs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::MalformedCsv {
            line: k as u64 + 3,
            message: "frequencies must be strictly ascending".into(),
        });
    }
    Spectrum::new(freqs, contrast)
}
