//! CSV formats, number formatting and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::law::SegmentEnsemble;
use crate::segment::{GridPath, Segment, SegmentMeta, SegmentView, TimeGrid};

pub const PATH_HEADER: &str = "t,dim_index,value";
pub const ENSEMBLE_HEADER: &str = "sample_id,theta_index,dim_index,value";

/// Rounds to 12 significant digits, then prints the shortest text that
/// round-trips to the rounded value. `-0` prints as `0`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    let plain = format!("{rounded}");
    let sci = format!("{rounded:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Appends one CSV line of preformatted fields.
pub fn push_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

/// Path in long form, one row per node and coordinate.
pub fn path_csv(path: &GridPath) -> String {
    let grid = path.grid();
    let mut out = String::from(PATH_HEADER);
    out.push('\n');
    for k in 0..grid.n_nodes() {
        let t = fmt_num(grid.time(k));
        for (j, v) in path.node(k).iter().enumerate() {
            let _ = writeln!(out, "{t},{j},{}", fmt_num(*v));
        }
    }
    out
}

fn reader<'a>(text: &'a str, header: &str) -> Result<csv::Reader<&'a [u8]>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| Error::Format(e.to_string()))?;
    let found: Vec<&str> = found.iter().collect();
    if found.join(",") != header {
        return Err(Error::Format(format!("expected header `{header}`, found `{}`", found.join(","))));
    }
    Ok(rdr)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("line {line}: bad field {i}")))
}

/// Inverse of [`path_csv`]. The grid is inferred from the time column, so
/// values are only as precise as the printed digits.
pub fn read_path_csv(text: &str) -> Result<GridPath> {
    let mut rdr = reader(text, PATH_HEADER)?;
    let mut times: Vec<f64> = vec![];
    let mut rows: Vec<(usize, usize, f64)> = vec![];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = line as u64 + 2;
        let t: f64 = field(&rec, 0, line)?;
        let j: usize = field(&rec, 1, line)?;
        let v: f64 = field(&rec, 2, line)?;
        if times.last() != Some(&t) {
            if times.last().is_some_and(|&last| t < last) {
                return Err(Error::Format(format!("line {line}: times not sorted")));
            }
            times.push(t);
        }
        rows.push((times.len() - 1, j, v));
    }
    if times.len() < 2 {
        return Err(Error::Format("path needs at least two time nodes".into()));
    }
    let m = times.iter().filter(|&&t| t < 0.0).count();
    let n_future = times.len() - 1 - m;
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let grid = TimeGrid::new(m, dt, n_future)?;
    let dim = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
    if rows.len() != times.len() * dim {
        return Err(Error::Format(format!("expected {} rows, found {}", times.len() * dim, rows.len())));
    }
    let mut values = vec![f64::NAN; rows.len()];
    for (k, j, v) in rows {
        values[k * dim + j] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Format("missing (node, coordinate) rows".into()));
    }
    GridPath::from_values(grid, dim, values)
}

/// Segment samples, one row per sample, node and coordinate.
pub fn ensemble_csv(samples: &[SegmentView<'_>]) -> String {
    let mut out = String::from(ENSEMBLE_HEADER);
    out.push('\n');
    for (s, seg) in samples.iter().enumerate() {
        for i in 0..=seg.m() {
            for (j, v) in seg.node(i).iter().enumerate() {
                let _ = writeln!(out, "{s},{i},{j},{}", fmt_num(*v));
            }
        }
    }
    out
}

/// Inverse of [`ensemble_csv`]. The file carries no time step, so the
/// caller supplies `r0` and `dt = r0 / m`.
pub fn read_ensemble_csv(text: &str, r0: f64) -> Result<SegmentEnsemble> {
    if !(r0 > 0.0) {
        return Err(Error::param("r0 must be positive"));
    }
    let mut rdr = reader(text, ENSEMBLE_HEADER)?;
    let mut cells: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = line as u64 + 2;
        let key = (field(&rec, 0, line)?, field(&rec, 1, line)?, field(&rec, 2, line)?);
        if cells.insert(key, field(&rec, 3, line)?).is_some() {
            return Err(Error::Format(format!("line {line}: duplicate cell")));
        }
    }
    let n = cells.keys().map(|k| k.0).max().map_or(0, |x| x + 1);
    let m = cells.keys().map(|k| k.1).max().unwrap_or(0);
    let dim = cells.keys().map(|k| k.2).max().map_or(0, |x| x + 1);
    if n == 0 || m == 0 {
        return Err(Error::Format("ensemble needs samples with at least two nodes".into()));
    }
    if cells.len() != n * (m + 1) * dim {
        return Err(Error::Format(format!("expected {} cells, found {}", n * (m + 1) * dim, cells.len())));
    }
    let meta = SegmentMeta { m, dt: r0 / m as f64 };
    let values: Vec<f64> = cells.into_values().collect();
    let per = (m + 1) * dim;
    let samples = values
        .chunks(per)
        .map(|c| Segment::from_values(meta, dim, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    SegmentEnsemble::new(samples)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that records a checksum for every file written and
/// finishes with `manifest.toml`.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

pub const MANIFEST_NAME: &str = "manifest.toml";

impl OutputDir {
    pub fn create(dir: impl AsRef<Path>) -> Result<Self> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf(), checksums: BTreeMap::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.checksums.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    /// Writes the manifest last and returns its text.
    pub fn finish(self, config_text: &str, seed: u64, command: &str) -> Result<String> {
        let mut files = toml::Table::new();
        for (k, v) in &self.checksums {
            files.insert(k.clone(), v.clone().into());
        }
        let mut doc = toml::Table::new();
        doc.insert("command".into(), command.into());
        doc.insert("config_sha256".into(), sha256_hex(config_text.as_bytes()).into());
        doc.insert("seed".into(), seed.to_string().into());
        doc.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        doc.insert("files".into(), files.into());
        let text = toml::to_string(&doc).expect("plain tables serialize");
        fs::write(self.dir.join(MANIFEST_NAME), &text)?;
        Ok(text)
    }
}
