//! Study-level data: `(y, s)` pairs, 2×2 count tables and the two embedded
//! case-study meta-analyses.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One study: effect estimate `y` with known standard error `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub y: f64,
    pub s: f64,
    #[serde(default)]
    pub label: String,
}

impl Study {
    pub fn new(y: f64, s: f64) -> Result<Self> {
        Self::labeled(y, s, String::new())
    }

    pub fn labeled(y: f64, s: f64, label: impl Into<String>) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::InvalidStudy(format!("y must be finite, got {y}")));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidStudy(format!("s must be positive and finite, got {s}")));
        }
        Ok(Study { y, s, label: label.into() })
    }
}

/// Published studies of one meta-analysis, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    studies: Vec<Study>,
}

impl MetaDataset {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.len() < 2 {
            return Err(Error::TooFewStudies(studies.len()));
        }
        for st in &studies {
            Study::labeled(st.y, st.s, "")?;
        }
        Ok(MetaDataset { studies })
    }

    pub fn from_pairs(y: &[f64], s: &[f64]) -> Result<Self> {
        if y.len() != s.len() {
            return Err(Error::InvalidStudy(format!(
                "{} estimates but {} standard errors",
                y.len(),
                s.len()
            )));
        }
        let studies = y
            .iter()
            .zip(s)
            .enumerate()
            .map(|(i, (&y, &s))| Study::labeled(y, s, (i + 1).to_string()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(studies)
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    /// Always false: construction requires at least two studies.
    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn y(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.y).collect()
    }

    pub fn s(&self) -> Vec<f64> {
        self.studies.iter().map(|s| s.s).collect()
    }

    /// Every estimate shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        let studies = self
            .studies
            .iter()
            .map(|st| Study { y: st.y + c, ..st.clone() })
            .collect();
        MetaDataset { studies }
    }

    /// Estimates and standard errors multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c > 0.0);
        let studies = self
            .studies
            .iter()
            .map(|st| Study { y: st.y * c, s: st.s * c, label: st.label.clone() })
            .collect();
        MetaDataset { studies }
    }

    /// Write as ys-csv (`label,y,s`). Values use the shortest round-trip
    /// decimal representation, so reloading is exact.
    pub fn write_ys_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "y", "s"])?;
        for st in &self.studies {
            w.write_record([st.label.clone(), st.y.to_string(), st.s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Events and group sizes of a two-arm trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub events_trt: u64,
    pub n_trt: u64,
    pub events_ctl: u64,
    pub n_ctl: u64,
}

impl CountTable {
    pub fn new(events_trt: u64, n_trt: u64, events_ctl: u64, n_ctl: u64) -> Result<Self> {
        if events_trt > n_trt || events_ctl > n_ctl {
            return Err(Error::DegenerateTable(format!(
                "events exceed group size ({events_trt}/{n_trt}, {events_ctl}/{n_ctl})"
            )));
        }
        if n_trt == 0 && n_ctl == 0 {
            return Err(Error::DegenerateTable("both arms are empty".into()));
        }
        Ok(CountTable { events_trt, n_trt, events_ctl, n_ctl })
    }

    /// Arms exchanged.
    pub fn swapped(self) -> Self {
        CountTable {
            events_trt: self.events_ctl,
            n_trt: self.n_ctl,
            events_ctl: self.events_trt,
            n_ctl: self.n_trt,
        }
    }

    pub fn double_zero(&self) -> bool {
        self.events_trt == 0 && self.events_ctl == 0
    }

    fn cells(&self) -> [f64; 4] {
        [
            self.events_trt as f64,
            (self.n_trt - self.events_trt) as f64,
            self.events_ctl as f64,
            (self.n_ctl - self.events_ctl) as f64,
        ]
    }
}

/// When the continuity correction is added to the four cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionPolicy {
    /// Only tables containing a zero cell are corrected.
    IfAnyZero,
    /// Every table is corrected.
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub amount: f64,
    pub policy: CorrectionPolicy,
}

impl Default for Correction {
    fn default() -> Self {
        Correction { amount: 0.5, policy: CorrectionPolicy::IfAnyZero }
    }
}

impl Correction {
    pub fn if_any_zero(amount: f64) -> Self {
        Correction { amount, policy: CorrectionPolicy::IfAnyZero }
    }

    pub fn always(amount: f64) -> Self {
        Correction { amount, policy: CorrectionPolicy::Always }
    }
}

/// Log odds ratio (treatment vs control) and its Woolf standard error.
pub fn lnor_from_counts(t: &CountTable, correction: Correction) -> Result<Study> {
    if !(correction.amount >= 0.0 && correction.amount.is_finite()) {
        return Err(Error::Domain(correction.amount, "correction >= 0"));
    }
    let mut c = t.cells();
    let apply = match correction.policy {
        CorrectionPolicy::Always => true,
        CorrectionPolicy::IfAnyZero => c.contains(&0.0),
    };
    if apply {
        for v in &mut c {
            *v += correction.amount;
        }
    }
    if c.iter().any(|&v| v <= 0.0) {
        return Err(Error::DegenerateTable(format!(
            "zero cell after correction in {}/{} vs {}/{}",
            t.events_trt, t.n_trt, t.events_ctl, t.n_ctl
        )));
    }
    let y = (c[0] * c[3] / (c[1] * c[2])).ln();
    let s = c.iter().map(|v| 1.0 / v).sum::<f64>().sqrt();
    Study::new(y, s)
}

/// Input CSV layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// `label,y,s`
    YsCsv,
    /// `label,events_trt,n_trt,events_ctl,n_ctl`
    CountsCsv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ys-csv" | "ys" => Ok(InputFormat::YsCsv),
            "counts-csv" | "counts" => Ok(InputFormat::CountsCsv),
            other => Err(Error::Config(format!("unknown format '{other}' (ys-csv | counts-csv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    pub correction: Correction,
    /// Drop tables with zero events in both arms before conversion.
    pub drop_double_zero: bool,
}

pub fn load_dataset<R: Read>(source: R, format: InputFormat) -> Result<MetaDataset> {
    load_dataset_with(source, format, LoadOptions::default())
}

pub fn load_dataset_with<R: Read>(source: R, format: InputFormat, opts: LoadOptions) -> Result<MetaDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let mut studies = Vec::new();
    match format {
        InputFormat::YsCsv => {
            let (il, iy, is) = (col("label")?, col("y")?, col("s")?);
            for (i, rec) in rdr.records().enumerate() {
                let line = i + 2;
                let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
                let y = parse_field::<f64>(&rec, iy, line, "y")?;
                let s = parse_field::<f64>(&rec, is, line, "s")?;
                let label = rec.get(il).unwrap_or("").to_string();
                let st = Study::labeled(y, s, label)
                    .map_err(|e| Error::Parse { line, message: e.to_string() })?;
                studies.push(st);
            }
        }
        InputFormat::CountsCsv => {
            let idx = [
                col("label")?,
                col("events_trt")?,
                col("n_trt")?,
                col("events_ctl")?,
                col("n_ctl")?,
            ];
            for (i, rec) in rdr.records().enumerate() {
                let line = i + 2;
                let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
                let et = parse_field::<u64>(&rec, idx[1], line, "events_trt")?;
                let nt = parse_field::<u64>(&rec, idx[2], line, "n_trt")?;
                let ec = parse_field::<u64>(&rec, idx[3], line, "events_ctl")?;
                let nc = parse_field::<u64>(&rec, idx[4], line, "n_ctl")?;
                let table = CountTable::new(et, nt, ec, nc)
                    .map_err(|e| Error::Parse { line, message: e.to_string() })?;
                if opts.drop_double_zero && table.double_zero() {
                    continue;
                }
                let mut st = lnor_from_counts(&table, opts.correction)
                    .map_err(|e| Error::Parse { line, message: e.to_string() })?;
                st.label = rec.get(idx[0]).unwrap_or("").to_string();
                studies.push(st);
            }
        }
    }
    if studies.is_empty() {
        return Err(Error::EmptyInput);
    }
    MetaDataset::new(studies)
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| Error::Parse { line, message: format!("missing field '{name}'") })?;
    raw.parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {name}='{raw}'"),
    })
}

/// Deaths among premature infants, corticosteroids vs control (14 trials):
/// counts plus the published log odds ratio and precision (1/s).
pub const CORTICOSTEROIDS: [(u64, u64, u64, u64, f64, f64); 14] = [
    (3, 64, 12, 58, -1.55, 1.57),
    (1, 69, 5, 61, -1.49, 1.07),
    (4, 81, 11, 63, -1.33, 1.71),
    (14, 131, 20, 137, -0.35, 2.72),
    (9, 40, 11, 42, -0.19, 1.98),
    (6, 95, 9, 94, -0.43, 1.88),
    (7, 121, 13, 124, -0.61, 2.11),
    (3, 67, 7, 59, -0.97, 1.48),
    (1, 71, 7, 75, -1.64, 1.10),
    (0, 23, 1, 22, -1.19, 0.60),
    (5, 49, 4, 31, -0.28, 1.47),
    (8, 56, 10, 71, 0.03, 2.00),
    (32, 371, 34, 372, -0.06, 3.90),
    (36, 532, 60, 538, -0.54, 4.56),
];

/// MACE with high- vs standard-maintenance-dose clopidogrel (12 trials).
pub const CLOPIDOGREL: [(&str, u64, u64, u64, u64); 12] = [
    ("Angiolillo 2008", 0, 20, 0, 20),
    ("Aradi 2012", 1, 36, 0, 38),
    ("RMYDA-150mg 201", 0, 25, 0, 25),
    ("DOUBLE 2010", 1, 24, 0, 24),
    ("EFFICIENT 2011", 4, 47, 1, 47),
    ("GRAVITAS 2011", 133, 1109, 113, 1105),
    ("Han 2009", 3, 403, 1, 410),
    ("Roghani 2011", 3, 205, 2, 195),
    ("Tousek 2011", 2, 30, 2, 30),
    ("VASP-02 2008", 11, 58, 14, 62),
    ("von Beckerath 2007", 2, 31, 2, 29),
    ("Wang 2011", 9, 150, 25, 156),
];

pub const DATASET_NAMES: [&str; 2] = ["corticosteroids", "clopidogrel"];

/// The corticosteroids meta-analysis in `(y, s)` form, taken from the
/// published log odds ratios with `s = 1 / precision`.
pub fn corticosteroids() -> MetaDataset {
    let studies = CORTICOSTEROIDS
        .iter()
        .enumerate()
        .map(|(i, r)| Study { y: r.4, s: 1.0 / r.5, label: (i + 1).to_string() })
        .collect();
    MetaDataset { studies }
}

pub fn corticosteroids_counts() -> Vec<CountTable> {
    CORTICOSTEROIDS
        .iter()
        .map(|r| CountTable { events_trt: r.0, n_trt: r.1, events_ctl: r.2, n_ctl: r.3 })
        .collect()
}

pub fn clopidogrel_counts() -> Vec<(String, CountTable)> {
    CLOPIDOGREL
        .iter()
        .map(|r| {
            (r.0.to_string(), CountTable { events_trt: r.1, n_trt: r.2, events_ctl: r.3, n_ctl: r.4 })
        })
        .collect()
}

pub fn clopidogrel(opts: LoadOptions) -> Result<MetaDataset> {
    let mut studies = Vec::new();
    for (label, t) in clopidogrel_counts() {
        if opts.drop_double_zero && t.double_zero() {
            continue;
        }
        let mut st = lnor_from_counts(&t, opts.correction)?;
        st.label = label;
        studies.push(st);
    }
    MetaDataset::new(studies)
}

/// Embedded dataset by name with default ingestion options.
pub fn embedded(name: &str) -> Result<MetaDataset> {
    embedded_with(name, LoadOptions::default())
}

pub fn embedded_with(name: &str, opts: LoadOptions) -> Result<MetaDataset> {
    match name {
        "corticosteroids" => Ok(corticosteroids()),
        "clopidogrel" => clopidogrel(opts),
        other => Err(Error::UnknownDataset(other.to_string())),
    }
}

/// Write the raw table of an embedded dataset: counts-csv for clopidogrel,
/// ys-csv for corticosteroids.
pub fn export_embedded<W: Write>(name: &str, out: W) -> Result<()> {
    match name {
        "corticosteroids" => corticosteroids().write_ys_csv(out),
        "clopidogrel" => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["label", "events_trt", "n_trt", "events_ctl", "n_ctl"])?;
            for (label, t) in clopidogrel_counts() {
                w.write_record([
                    label,
                    t.events_trt.to_string(),
                    t.n_trt.to_string(),
                    t.events_ctl.to_string(),
                    t.n_ctl.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
        other => Err(Error::UnknownDataset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lnor_reference_rows() {
        let t1 = CountTable::new(3, 64, 12, 58).unwrap();
        let raw = lnor_from_counts(&t1, Correction::if_any_zero(0.5)).unwrap();
        assert!((raw.y - (3.0f64 * 46.0 / (61.0 * 12.0)).ln()).abs() < 1e-12);
        // the published column adds 0.5 to every table
        let pub1 = lnor_from_counts(&t1, Correction::always(0.5)).unwrap();
        assert!((pub1.y - -1.55).abs() < 0.005, "{}", pub1.y);
        assert!((1.0 / pub1.s - 1.57).abs() < 0.005);

        let t10 = CountTable::new(0, 23, 1, 22).unwrap();
        let st = lnor_from_counts(&t10, Correction::if_any_zero(0.5)).unwrap();
        assert!((st.y - -1.19).abs() < 0.005, "{}", st.y);
        assert!((1.0 / st.s - 0.60).abs() < 0.005);

        let sym = CountTable::new(7, 40, 7, 40).unwrap();
        assert_eq!(lnor_from_counts(&sym, Correction::default()).unwrap().y, 0.0);
    }

    #[test]
    fn table3_precision_column_is_inverse_se() {
        for (row, t) in CORTICOSTEROIDS.iter().zip(corticosteroids_counts()) {
            let st = lnor_from_counts(&t, Correction::always(0.5)).unwrap();
            assert!((st.y - row.4).abs() <= 0.006, "{row:?} -> {}", st.y);
            assert!((1.0 / st.s - row.5).abs() <= 0.01, "{row:?} -> {}", 1.0 / st.s);
        }
    }

    #[test]
    fn swap_flips_sign_keeps_se() {
        let t = CountTable::new(5, 49, 4, 31).unwrap();
        let a = lnor_from_counts(&t, Correction::default()).unwrap();
        let b = lnor_from_counts(&t.swapped(), Correction::default()).unwrap();
        assert!((a.y + b.y).abs() < 1e-12);
        assert!((a.s - b.s).abs() < 1e-12);
    }

    #[test]
    fn degenerate_tables() {
        assert!(CountTable::new(5, 4, 0, 3).is_err());
        assert!(CountTable::new(0, 0, 0, 0).is_err());
        let t = CountTable::new(0, 20, 0, 20).unwrap();
        assert!(lnor_from_counts(&t, Correction::if_any_zero(0.0)).is_err());
        let st = lnor_from_counts(&t, Correction::if_any_zero(0.5)).unwrap();
        assert_eq!(st.y, 0.0);
        // an empty arm cannot be rescued by correction: 0 events, 0 non-events
        let empty = CountTable::new(0, 0, 3, 10).unwrap();
        assert!(lnor_from_counts(&empty, Correction::if_any_zero(0.0)).is_err());
    }

    #[test]
    fn embedded_sizes() {
        assert_eq!(corticosteroids().len(), 14);
        assert_eq!(embedded("clopidogrel").unwrap().len(), 12);
        let dropped = embedded_with(
            "clopidogrel",
            LoadOptions { drop_double_zero: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(dropped.len(), 10);
        assert!(matches!(embedded("nope"), Err(Error::UnknownDataset(_))));
    }

    #[test]
    fn counts_csv_matches_embedded() {
        let mut buf = Vec::new();
        export_embedded("clopidogrel", &mut buf).unwrap();
        let ds = load_dataset(&buf[..], InputFormat::CountsCsv).unwrap();
        assert_eq!(ds, embedded("clopidogrel").unwrap());
    }

    #[test]
    fn malformed_inputs() {
        let one = "label,y,s\na,0.1,0.2\n";
        assert!(matches!(load_dataset(one.as_bytes(), InputFormat::YsCsv), Err(Error::TooFewStudies(1))));
        let empty = "label,y,s\n";
        assert!(matches!(load_dataset(empty.as_bytes(), InputFormat::YsCsv), Err(Error::EmptyInput)));
        let bad = "label,y,s\na,0.1,0.2\nb,zz,0.3\n";
        match load_dataset(bad.as_bytes(), InputFormat::YsCsv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let neg = "label,y,s\na,0.1,0.2\nb,0.1,-1\n";
        assert!(matches!(load_dataset(neg.as_bytes(), InputFormat::YsCsv), Err(Error::Parse { line: 3, .. })));
        let nohdr = "y,s\n0.1,0.2\n0.2,0.3\n";
        assert!(load_dataset(nohdr.as_bytes(), InputFormat::YsCsv).is_err());
    }
}
