//! CSV and JSON file formats.
//!
//! CSV files open with `# key=value` metadata lines followed by a header row
//! and data rows. Floats are written in shortest round-trip form, so reading
//! a file back reproduces the values bit for bit.

use fenc_core::fitkit::FitResult;
use fenc_core::phaselock::{PhasedSpectrum, ReferenceSpec};
use fenc_core::spectral::{Spectrum, SpectrumMeta, Window};
use num_complex::Complex64;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            header: columns.iter().map(|s| s.to_string()).collect(),
            ..Table::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            out.extend_from_slice(format!("# {k}={v}\n").as_bytes());
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn parse(bytes: &[u8], what: &str) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|_| CliError::format(what, "not UTF-8"))?;
        let mut meta = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let (k, v) = rest
                .trim_end_matches('\n')
                .split_once('=')
                .ok_or_else(|| CliError::format(what, format!("metadata line without '=': {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
            offset += line.len();
        }
        let mut r = csv::ReaderBuilder::new().from_reader(&bytes[offset..]);
        let header = r
            .headers()
            .map_err(|e| CliError::format(what, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| CliError::format(what, e.to_string()))
            })
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Table { meta, header, rows })
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn meta_parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<T> {
        self.meta(key)
            .ok_or_else(|| CliError::format(what, format!("missing metadata `{key}`")))?
            .parse()
            .map_err(|_| CliError::format(what, format!("unparsable metadata `{key}`")))
    }

    fn index(&self, name: &str, what: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::format(what, format!("missing column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name, "table")?;
        self.rows
            .iter()
            .map(|r| {
                r[i].parse()
                    .map_err(|_| CliError::format("table", format!("bad number {:?} in `{name}`", r[i])))
            })
            .collect()
    }
}

fn window_from_name(name: &str) -> Result<Window> {
    match name {
        "none" => Ok(Window::None),
        "hann" => Ok(Window::Hann),
        other => Err(CliError::format("spectrum", format!("unknown window {other:?}"))),
    }
}

fn spectrum_meta(t: Table, s: &Spectrum, kind: &str) -> Table {
    t.with_meta("kind", kind)
        .with_meta("bin_width_s", s.bin_width)
        .with_meta("n_samples", s.n_samples)
        .with_meta("window", s.window.name())
        .with_meta("n_averages", s.n_averages)
        .with_meta("background_subtracted", s.meta.background_subtracted)
        .with_meta("clamped_bins", s.meta.clamped_bins)
}

/// Columns: frequency, periodogram, one-sided density, complex amplitude.
pub fn spectrum_table(s: &Spectrum) -> Table {
    let mut t = spectrum_meta(
        Table::new(&["frequency_hz", "psd", "density", "re", "im"]),
        s,
        "spectrum",
    );
    let density = s.one_sided_density();
    for k in 0..s.len() {
        let a = s.amplitudes[k];
        t.push_f64(&[s.frequency(k), s.psd[k], density[k], a.re, a.im]);
    }
    t
}

fn spectrum_from(t: &Table, what: &str) -> Result<Spectrum> {
    let re = t.column("re")?;
    let im = t.column("im")?;
    let s = Spectrum {
        bin_width: t.meta_parsed("bin_width_s", what)?,
        n_samples: t.meta_parsed("n_samples", what)?,
        window: window_from_name(t.meta("window").unwrap_or(""))?,
        amplitudes: re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect(),
        psd: t.column("psd")?,
        n_averages: t.meta_parsed("n_averages", what)?,
        meta: SpectrumMeta {
            background_subtracted: t.meta_parsed("background_subtracted", what)?,
            clamped_bins: t.meta_parsed("clamped_bins", what)?,
        },
    };
    if s.psd.len() != s.n_samples / 2 + 1 {
        return Err(CliError::format(what, "row count does not match n_samples"));
    }
    Ok(s)
}

pub fn read_spectrum(bytes: &[u8]) -> Result<Spectrum> {
    spectrum_from(&Table::parse(bytes, "spectrum")?, "spectrum")
}

pub fn phased_table(p: &PhasedSpectrum) -> Table {
    let s = &p.spectrum;
    let mut t = spectrum_meta(
        Table::new(&["frequency_hz", "psd", "re", "im", "phase_rad", "comb", "comb_index"]),
        s,
        "phased-spectrum",
    )
    .with_meta("f1_hz", p.reference.f1)
    .with_meta("f2_hz", p.reference.f2)
    .with_meta("min_amplitude_t", p.reference.min_amplitude)
    .with_meta("phase_limit_rad", p.reference.phase_limit);
    for k in 0..s.len() {
        let a = s.amplitudes[k];
        t.push(vec![
            s.frequency(k).to_string(),
            s.psd[k].to_string(),
            a.re.to_string(),
            a.im.to_string(),
            p.phase[k].to_string(),
            u8::from(p.comb_flag[k]).to_string(),
            p.comb_index[k].map(|n| n.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub fn read_phased(bytes: &[u8]) -> Result<PhasedSpectrum> {
    let what = "phased spectrum";
    let t = Table::parse(bytes, what)?;
    let spectrum = spectrum_from(&t, what)?;
    let ci = t.index("comb_index", what)?;
    let comb_index = t
        .rows
        .iter()
        .map(|r| {
            if r[ci].is_empty() {
                Ok(None)
            } else {
                r[ci].parse().map(Some).map_err(|_| CliError::format(what, "bad comb index"))
            }
        })
        .collect::<Result<Vec<Option<i64>>>>()?;
    Ok(PhasedSpectrum {
        spectrum,
        phase: t.column("phase_rad")?,
        comb_flag: t.column("comb")?.iter().map(|&v| v != 0.0).collect(),
        comb_index,
        reference: ReferenceSpec {
            f1: t.meta_parsed("f1_hz", what)?,
            f2: t.meta_parsed("f2_hz", what)?,
            min_amplitude: t.meta_parsed("min_amplitude_t", what)?,
            phase_limit: t.meta_parsed("phase_limit_rad", what)?,
        },
    })
}

/// Data and model side by side, so overlays can be redrawn from the CSV.
pub fn overlay_table(x_name: &str, x: &[f64], y: &[f64], fit: Option<&FitResult>) -> Table {
    let mut t = Table::new(&[x_name, "data", "model"]);
    if let Some(f) = fit {
        t = t.with_meta("model", f.model.name());
    }
    for (&xi, &yi) in x.iter().zip(y) {
        let m = fit.map_or(f64::NAN, |f| f.eval(xi));
        t.push_f64(&[xi, yi, m]);
    }
    t
}

pub fn fit_json(fit: &FitResult) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(fit).expect("fit results serialize");
    v.push(b'\n');
    v
}

pub fn read_fit(bytes: &[u8]) -> Result<FitResult> {
    serde_json::from_slice(bytes).map_err(|e| CliError::format("fit result", e.to_string()))
}

pub fn json_bytes(value: &impl serde::Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("value serializes");
    v.push(b'\n');
    v
}
