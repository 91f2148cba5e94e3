//! Flow series ingestion, [-1, 1] normalisation, and sliding-window
//! datasets for the single-task and multitask output layouts.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Minutes between consecutive samples. Every series uses this interval.
pub const INTERVAL_MINUTES: u32 = 15;

/// One road link's flow record in veh/h.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    link_id: String,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(link_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let link_id = link_id.into();
        if link_id.is_empty() || link_id.contains([',', '\n', '\r']) {
            return Err(Error::invalid(format!("bad link id {link_id:?}")));
        }
        if values.is_empty() {
            return Err(Error::invalid(format!("series {link_id} is empty")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "series {link_id}: value {} at index {i} is negative or non-finite",
                values[i]
            )));
        }
        Ok(TimeSeries { link_id, values })
    }

    pub fn link_id(&self) -> &str {
        &self.link_id
    }

    pub fn interval_minutes(&self) -> u32 {
        INTERVAL_MINUTES
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reads series from a `link_id,index,value` CSV.
///
/// Rows for one link must carry indices 0, 1, 2, … in file order; rows of
/// different links may be in separate blocks or interleaved. Series are
/// returned in order of first appearance.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<TimeSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => return Err(Error::parse(1, "missing header `link_id,index,value`")),
    };
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields != ["link_id", "index", "value"] {
        return Err(Error::parse(
            1,
            format!("expected header `link_id,index,value`, found `{}`", fields.join(",")),
        ));
    }

    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let link = rec[0].trim();
        if link.is_empty() {
            return Err(Error::parse(line, "empty link_id"));
        }
        let index: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad index `{}`", &rec[1])))?;
        let value: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("bad value `{}`", &rec[2])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::parse(line, format!("flow must be finite and >= 0, got {value}")));
        }

        let slot = match series.iter().position(|(id, _)| id == link) {
            Some(i) => i,
            None => {
                series.push((link.to_string(), Vec::new()));
                series.len() - 1
            }
        };
        let values = &mut series[slot].1;
        if index != values.len() {
            return Err(Error::parse(
                line,
                format!("link {link}: expected index {}, found {index}", values.len()),
            ));
        }
        values.push(value);
    }

    if series.is_empty() {
        return Err(Error::parse(1, "no data rows"));
    }
    series
        .into_iter()
        .map(|(id, v)| TimeSeries::new(id, v))
        .collect()
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// Writes series in the format read by [`load_csv`], one block per link.
pub fn write_csv(series: &[TimeSeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(series)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(series: &[TimeSeries]) -> String {
    let mut out = String::from("link_id,index,value\n");
    for s in series {
        for (i, v) in s.values().iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", s.link_id(), i, v));
        }
    }
    out
}

/// Affine map from veh/h onto [-1, 1], fitted on a training slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    min_val: f64,
    max_val: f64,
}

impl NormalizationParams {
    pub fn new(min_val: f64, max_val: f64) -> Result<Self> {
        if !(min_val.is_finite() && max_val.is_finite()) {
            return Err(Error::invalid("normalization bounds must be finite"));
        }
        if max_val <= min_val {
            return Err(Error::DegenerateRange(min_val));
        }
        Ok(NormalizationParams { min_val, max_val })
    }

    pub fn min_val(&self) -> f64 {
        self.min_val
    }

    pub fn max_val(&self) -> f64 {
        self.max_val
    }

    /// Values outside the fitted range map outside [-1, 1]; nothing is clipped.
    pub fn normalize(&self, x: f64) -> f64 {
        2.0 * (x - self.min_val) / (self.max_val - self.min_val) - 1.0
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        (x + 1.0) * 0.5 * (self.max_val - self.min_val) + self.min_val
    }

    pub fn normalize_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize(x)).collect()
    }
}

pub fn fit_normalizer(values: &[f64]) -> Result<NormalizationParams> {
    let first = *values
        .first()
        .ok_or_else(|| Error::invalid("cannot fit normalizer on an empty slice"))?;
    let (lo, hi) = values
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return Err(Error::DegenerateRange(lo));
    }
    NormalizationParams::new(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    Stl,
    Mtl,
}

impl std::fmt::Display for TaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskMode::Stl => "stl",
            TaskMode::Mtl => "mtl",
        })
    }
}

impl std::str::FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stl" => Ok(TaskMode::Stl),
            "mtl" => Ok(TaskMode::Mtl),
            other => Err(Error::invalid(format!("unknown mode `{other}` (expected stl or mtl)"))),
        }
    }
}

/// Input window length and target offsets relative to the anchor `n`.
///
/// Inputs are `t(n-m) … t(n-1)`; targets are `t(n+o)` for each offset `o`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskLayout {
    mode: TaskMode,
    window_len: usize,
    offsets: Vec<isize>,
}

impl TaskLayout {
    pub fn stl(window_len: usize) -> Result<Self> {
        Self::build(TaskMode::Stl, window_len, vec![0])
    }

    /// Main task `t(n)` with extra tasks `t(n-1)` and `t(n+1)`.
    pub fn mtl(window_len: usize) -> Result<Self> {
        Self::build(TaskMode::Mtl, window_len, vec![-1, 0, 1])
    }

    pub fn for_mode(mode: TaskMode, window_len: usize) -> Result<Self> {
        match mode {
            TaskMode::Stl => Self::stl(window_len),
            TaskMode::Mtl => Self::mtl(window_len),
        }
    }

    /// Multitask layout with arbitrary offsets.
    pub fn with_offsets(window_len: usize, offsets: Vec<isize>) -> Result<Self> {
        Self::build(TaskMode::Mtl, window_len, offsets)
    }

    fn build(mode: TaskMode, window_len: usize, offsets: Vec<isize>) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::invalid("window length must be >= 1"));
        }
        if !offsets.windows(2).all(|w| w[0] < w[1]) || !offsets.contains(&0) {
            return Err(Error::invalid(format!(
                "offsets {offsets:?} must be strictly increasing and contain 0"
            )));
        }
        if mode == TaskMode::Stl && offsets != [0] {
            return Err(Error::invalid("single-task layout has exactly one offset, 0"));
        }
        if offsets[0] < -(window_len as isize) {
            return Err(Error::invalid("target offsets reach before the input window"));
        }
        Ok(TaskLayout {
            mode,
            window_len,
            offsets,
        })
    }

    pub fn mode(&self) -> TaskMode {
        self.mode
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn num_outputs(&self) -> usize {
        self.offsets.len()
    }

    pub fn main_task_index(&self) -> usize {
        self.offsets.iter().position(|&o| o == 0).expect("layout contains offset 0")
    }

    fn max_offset(&self) -> isize {
        *self.offsets.last().expect("non-empty offsets")
    }

    /// Every anchor `n` whose window and targets fit inside a series of
    /// `series_len` points.
    pub fn admissible_range(&self, series_len: usize) -> Range<usize> {
        let lo = self.window_len;
        let hi = (series_len as isize - self.max_offset()).max(0) as usize;
        lo..hi.max(lo)
    }

    /// Anchors whose targets all lie in `[0, train_count)`.
    pub fn train_range(&self, train_count: usize) -> Range<usize> {
        self.admissible_range(train_count)
    }

    /// Anchors `n >= train_count` in a series of `series_len`; input windows
    /// may reach back into the training slice.
    pub fn test_range(&self, series_len: usize, train_count: usize) -> Range<usize> {
        let full = self.admissible_range(series_len);
        full.start.max(train_count)..full.end.max(train_count)
    }
}

/// Intersection of two anchor ranges (empty ranges collapse to `lo..lo`).
pub fn intersect(a: &Range<usize>, b: &Range<usize>) -> Range<usize> {
    let lo = a.start.max(b.start);
    lo..a.end.min(b.end).max(lo)
}

/// Supervised samples cut from a normalised series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Matrix,
    targets: Matrix,
    anchors: Vec<usize>,
}

impl WindowedDataset {
    pub fn new(inputs: Matrix, targets: Matrix, anchors: Vec<usize>) -> Result<Self> {
        if inputs.rows() != targets.rows() || inputs.rows() != anchors.len() {
            return Err(Error::DimensionMismatch {
                op: "WindowedDataset::new",
                expected: inputs.rows(),
                found: targets.rows().min(anchors.len()),
            });
        }
        if !anchors.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("anchors must be strictly increasing"));
        }
        Ok(WindowedDataset {
            inputs,
            targets,
            anchors,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.cols()
    }
}

pub fn make_windows(
    series: &[f64],
    layout: &TaskLayout,
    range: Range<usize>,
) -> Result<WindowedDataset> {
    if range.start > range.end {
        return Err(Error::invalid(format!("anchor range {range:?} is reversed")));
    }
    if range.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ok = layout.admissible_range(series.len());
    if range.start < ok.start || range.end > ok.end {
        return Err(Error::invalid(format!(
            "anchor range {range:?} exceeds admissible {ok:?} for series of length {}",
            series.len()
        )));
    }

    let m = layout.window_len();
    let k = layout.num_outputs();
    let n_rows = range.len();
    let mut inputs = Vec::with_capacity(n_rows * m);
    let mut targets = Vec::with_capacity(n_rows * k);
    for n in range.clone() {
        inputs.extend_from_slice(&series[n - m..n]);
        targets.extend(
            layout
                .offsets()
                .iter()
                .map(|&o| series[(n as isize + o) as usize]),
        );
    }
    WindowedDataset::new(
        Matrix::new(n_rows, m, inputs)?,
        Matrix::new(n_rows, k, targets)?,
        range.collect(),
    )
}

/// Splits at `train_count`: train is `[0, train_count)`, test the rest.
pub fn split_series(series: &TimeSeries, train_count: usize) -> Result<(&[f64], &[f64])> {
    if train_count == 0 || train_count >= series.len() {
        return Err(Error::invalid(format!(
            "train_count {train_count} must lie in (0, {})",
            series.len()
        )));
    }
    Ok(series.values().split_at(train_count))
}
