//! Single-task vs multitask comparison on one or more flow series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use crate::data::{
    fit_normalizer, intersect, make_windows, split_series, NormalizationParams, TaskLayout,
    TaskMode, TimeSeries,
};
use crate::error::{Error, Result};
use crate::network::{Dims, MlpParams};
use crate::trainer::{train, LmConfig, StopReason, Trained};

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            op: "rmse",
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::invalid("rmse of empty sequences"));
    }
    let ss: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((ss / predicted.len() as f64).sqrt())
}

/// Relative RMSE reduction of the multitask arm, in percent. Negative when
/// the multitask arm is worse.
pub fn improvement(rmse_stl: f64, rmse_mtl: f64) -> Result<f64> {
    if rmse_stl.is_nan() || rmse_stl <= 0.0 {
        return Err(Error::invalid(format!(
            "improvement needs rmse_stl > 0, got {rmse_stl}"
        )));
    }
    Ok(100.0 * (rmse_stl - rmse_mtl) / rmse_stl)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub anchors: Vec<usize>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

impl PredictionTrace {
    pub fn new(anchors: Vec<usize>, predicted: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        if anchors.len() != predicted.len() || anchors.len() != actual.len() {
            return Err(Error::invalid("trace columns differ in length"));
        }
        if !anchors.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("trace anchors must be strictly increasing"));
        }
        Ok(PredictionTrace {
            anchors,
            predicted,
            actual,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn rmse(&self) -> Result<f64> {
        rmse(&self.predicted, &self.actual)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("anchor,actual,predicted\n");
        for i in 0..self.len() {
            let _ = writeln!(s, "{},{},{}", self.anchors[i], self.actual[i], self.predicted[i]);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "anchor,actual,predicted" => {}
            _ => return Err(Error::parse(1, "expected header `anchor,actual,predicted`")),
        }
        let (mut anchors, mut predicted, mut actual) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in lines {
            let line_no = idx + 1;
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 3 {
                return Err(Error::parse(line_no, "expected 3 fields"));
            }
            let bad = |what: &str| Error::parse(line_no, format!("bad {what}"));
            anchors.push(f[0].parse().map_err(|_| bad("anchor"))?);
            actual.push(f[1].parse().map_err(|_| bad("actual"))?);
            predicted.push(f[2].parse().map_err(|_| bad("predicted"))?);
        }
        PredictionTrace::new(anchors, predicted, actual)
    }
}

/// Writes `anchor,actual,predicted` with shortest round-trip decimals.
pub fn export_trace(trace: &PredictionTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trace.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<PredictionTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PredictionTrace::from_csv(&text)
}

/// Shared settings for both arms of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub window_len: usize,
    pub hidden: usize,
    pub train_count: usize,
    pub lm: LmConfig,
    /// Trainer settings that replace `lm` for specific links.
    pub link_overrides: BTreeMap<String, LmConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            window_len: 5,
            hidden: 15,
            train_count: 2112,
            lm: LmConfig::default(),
            link_overrides: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn lm_for(&self, link_id: &str) -> &LmConfig {
        self.link_overrides.get(link_id).unwrap_or(&self.lm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub stop: StopReason,
    pub epochs: usize,
    pub train_mse: f64,
}

impl From<&Trained> for ArmSummary {
    fn from(t: &Trained) -> Self {
        ArmSummary {
            stop: t.stop,
            epochs: t.state.epoch,
            train_mse: t.state.mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub link_id: String,
    pub rmse_stl: f64,
    pub rmse_mtl: f64,
    pub improvement_pct: f64,
    pub stl: ArmSummary,
    pub mtl: ArmSummary,
    pub seed: u64,
    pub test_count: usize,
    pub window_len: usize,
    pub hidden: usize,
    pub train_count: usize,
    pub lm: LmConfig,
}

impl EvaluationReport {
    /// `key=value` text, one field per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("link_id", self.link_id.clone());
        kv("rmse_stl", self.rmse_stl.to_string());
        kv("rmse_mtl", self.rmse_mtl.to_string());
        kv("improvement_pct", self.improvement_pct.to_string());
        kv("test_count", self.test_count.to_string());
        kv("seed", self.seed.to_string());
        for (arm, a) in [("stl", &self.stl), ("mtl", &self.mtl)] {
            kv(&format!("{arm}_stop_reason"), a.stop.to_string());
            kv(&format!("{arm}_epochs"), a.epochs.to_string());
            kv(&format!("{arm}_train_mse"), a.train_mse.to_string());
        }
        kv("window_len", self.window_len.to_string());
        kv("hidden", self.hidden.to_string());
        kv("train_count", self.train_count.to_string());
        kv("mu_init", self.lm.mu_init.to_string());
        kv("mu_inc", self.lm.mu_inc.to_string());
        kv("mu_dec", self.lm.mu_dec.to_string());
        kv("mu_max", self.lm.mu_max.to_string());
        kv("max_epochs", self.lm.max_epochs.to_string());
        kv("error_goal", self.lm.error_goal.to_string());
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: EvaluationReport,
    pub stl_trace: PredictionTrace,
    pub mtl_trace: PredictionTrace,
    pub stl_model: MlpParams,
    pub mtl_model: MlpParams,
}

/// Denormalised main-task forecasts of `model` over `anchors`.
fn main_task_trace(
    model: &MlpParams,
    layout: &TaskLayout,
    normalized: &[f64],
    raw: &[f64],
    range: Range<usize>,
    norm: &NormalizationParams,
) -> Result<PredictionTrace> {
    let ds = make_windows(normalized, layout, range)?;
    let out = model.predict(ds.inputs())?;
    let main = layout.main_task_index();
    let predicted = (0..ds.len())
        .map(|i| norm.denormalize(out[(i, main)]))
        .collect();
    let actual = ds.anchors().iter().map(|&n| raw[n]).collect();
    PredictionTrace::new(ds.anchors().to_vec(), predicted, actual)
}

/// Forecasts the main task of a trained model over the test anchors of
/// `series`, using a normaliser fitted on the first `train_count` points.
pub fn forecast_test(
    model: &MlpParams,
    layout: &TaskLayout,
    series: &TimeSeries,
    train_count: usize,
) -> Result<PredictionTrace> {
    let (train_slice, _) = split_series(series, train_count)?;
    let norm = fit_normalizer(train_slice)?;
    let normalized = norm.normalize_all(series.values());
    let range = layout.test_range(series.len(), train_count);
    main_task_trace(model, layout, &normalized, series.values(), range, &norm)
}

/// Training anchors usable by both layouts, so the two arms fit the same
/// samples.
pub fn shared_train_range(window_len: usize, train_count: usize) -> Result<Range<usize>> {
    let stl = TaskLayout::stl(window_len)?;
    let mtl = TaskLayout::mtl(window_len)?;
    let r = intersect(&stl.train_range(train_count), &mtl.train_range(train_count));
    if r.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(r)
}

/// Trains one arm exactly as [`run_comparison`] does.
pub fn train_arm(series: &TimeSeries, mode: TaskMode, cfg: &ExperimentConfig) -> Result<Trained> {
    let lm = cfg.lm_for(series.link_id());
    let (train_slice, _) = split_series(series, cfg.train_count)?;
    let norm = fit_normalizer(train_slice)?;
    let normalized = norm.normalize_all(series.values());
    let layout = TaskLayout::for_mode(mode, cfg.window_len)?;
    let data = make_windows(
        &normalized,
        &layout,
        shared_train_range(cfg.window_len, cfg.train_count)?,
    )?;
    train(&data, lm, Dims::new(cfg.window_len, cfg.hidden, layout.num_outputs())?)
}

/// Trains both arms on one series and scores the main task on the test
/// slice. Both arms use the same anchors, normaliser and seed.
pub fn run_comparison(
    series: &TimeSeries,
    window_len: usize,
    cfg: &ExperimentConfig,
) -> Result<Comparison> {
    let lm = cfg.lm_for(series.link_id()).clone();
    lm.validate()?;
    let train_count = cfg.train_count;
    let (train_slice, _) = split_series(series, train_count)?;
    let norm = fit_normalizer(train_slice)?;
    let normalized = norm.normalize_all(series.values());

    let stl = TaskLayout::stl(window_len)?;
    let mtl = TaskLayout::mtl(window_len)?;
    let train_range = shared_train_range(window_len, train_count)?;
    let test_range = intersect(
        &stl.test_range(series.len(), train_count),
        &mtl.test_range(series.len(), train_count),
    );
    if test_range.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut arms = Vec::with_capacity(2);
    for layout in [&stl, &mtl] {
        let data = make_windows(&normalized, layout, train_range.clone())?;
        let dims = Dims::new(window_len, cfg.hidden, layout.num_outputs())?;
        let trained = train(&data, &lm, dims)?;
        let trace = main_task_trace(
            &trained.params,
            layout,
            &normalized,
            series.values(),
            test_range.clone(),
            &norm,
        )?;
        arms.push((trained, trace));
    }
    let (mtl_trained, mtl_trace) = arms.pop().expect("two arms");
    let (stl_trained, stl_trace) = arms.pop().expect("two arms");

    let rmse_stl = stl_trace.rmse()?;
    let rmse_mtl = mtl_trace.rmse()?;
    let report = EvaluationReport {
        link_id: series.link_id().to_string(),
        rmse_stl,
        rmse_mtl,
        improvement_pct: improvement(rmse_stl, rmse_mtl)?,
        stl: ArmSummary::from(&stl_trained),
        mtl: ArmSummary::from(&mtl_trained),
        seed: lm.seed,
        test_count: stl_trace.len(),
        window_len,
        hidden: cfg.hidden,
        train_count,
        lm,
    };
    Ok(Comparison {
        report,
        stl_trace,
        mtl_trace,
        stl_model: stl_trained.params,
        mtl_model: mtl_trained.params,
    })
}

/// Runs one comparison per seed, in the given order.
pub fn run_seeds(
    series: &TimeSeries,
    cfg: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Vec<Comparison>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            let mut lm = c.lm_for(series.link_id()).clone();
            lm.seed = seed;
            c.link_overrides.insert(series.link_id().to_string(), lm);
            run_comparison(series, cfg.window_len, &c)
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub link_id: String,
    pub rmse_stl: f64,
    pub rmse_mtl: f64,
    pub improvement_pct: f64,
}

impl TableRow {
    pub fn from_rmse(link_id: impl Into<String>, rmse_stl: f64, rmse_mtl: f64) -> Result<Self> {
        Ok(TableRow {
            link_id: link_id.into(),
            rmse_stl,
            rmse_mtl,
            improvement_pct: improvement(rmse_stl, rmse_mtl)?,
        })
    }
}

impl From<&EvaluationReport> for TableRow {
    fn from(r: &EvaluationReport) -> Self {
        TableRow {
            link_id: r.link_id.clone(),
            rmse_stl: r.rmse_stl,
            rmse_mtl: r.rmse_mtl,
            improvement_pct: r.improvement_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    pub fn new(rows: Vec<TableRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("comparison table needs at least one row"));
        }
        Ok(ComparisonTable { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("link_id,rmse_stl,rmse_mtl,improvement_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.link_id, r.rmse_stl, r.rmse_mtl, r.improvement_pct
            );
        }
        s
    }

    /// Links as columns, with `STL`, `MTL` and `e` rows.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.link_id.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut s = format!("{:<5}", "RMSE");
        for r in &self.rows {
            let _ = write!(s, " {:>width$}", r.link_id);
        }
        s.push('\n');
        let mut line = |label: &str, f: &dyn Fn(&TableRow) -> String| {
            let _ = write!(s, "{label:<5}");
            for r in &self.rows {
                let _ = write!(s, " {:>width$}", f(r));
            }
            s.push('\n');
        };
        line("STL", &|r| format!("{:.2}", r.rmse_stl));
        line("MTL", &|r| format!("{:.2}", r.rmse_mtl));
        line("e", &|r| format!("{:.2}%", r.improvement_pct));
        s
    }
}

/// One comparison per series, in input order.
pub fn run_table(series: &[TimeSeries], cfg: &ExperimentConfig) -> Result<(ComparisonTable, Vec<Comparison>)> {
    if series.is_empty() {
        return Err(Error::invalid("run_table needs at least one series"));
    }
    let comparisons = series
        .iter()
        .map(|s| run_comparison(s, cfg.window_len, cfg))
        .collect::<Result<Vec<_>>>()?;
    let table = ComparisonTable::new(comparisons.iter().map(|c| TableRow::from(&c.report)).collect())?;
    Ok((table, comparisons))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((rmse(&[3.5, 4.5], &[1.0, 2.0]).unwrap() - 2.5).abs() < 1e-15);
        let r = rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap();
        assert!((r - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r - 1.1547).abs() < 1e-4);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement(77.46, 70.25).unwrap() - 9.31).abs() < 0.01);
        assert!((improvement(93.03, 86.26).unwrap() - 7.28).abs() < 0.01);
        assert_eq!(improvement(50.0, 50.0).unwrap(), 0.0);
        assert!(improvement(50.0, 60.0).unwrap() < 0.0);
        assert!(improvement(0.0, 1.0).is_err());
    }

    #[test]
    fn trace_round_trip_and_empty() {
        let t = PredictionTrace::new(vec![3, 4, 9], vec![1.0 / 3.0, 2.5, 1e-7], vec![0.0, 7.0, 1.0]).unwrap();
        assert_eq!(PredictionTrace::from_csv(&t.to_csv()).unwrap(), t);
        let empty = PredictionTrace::new(vec![], vec![], vec![]).unwrap();
        assert_eq!(empty.to_csv(), "anchor,actual,predicted\n");
        assert!(PredictionTrace::new(vec![2, 1], vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn table_layouts() {
        let t = ComparisonTable::new(vec![TableRow::from_rmse("Bb", 77.46, 70.25).unwrap()]).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("link_id,rmse_stl,rmse_mtl,improvement_pct\n"));
        assert_eq!(csv.lines().count(), 2);
        let text = t.to_text();
        assert!(text.contains("9.31%"), "{text}");
        assert!(ComparisonTable::new(vec![]).is_err());
        assert!(run_table(&[], &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn median_handles_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn rmse_detects_translation(a in prop::collection::vec(-500.0f64..500.0, 1..50), c in -50.0f64..50.0) {
            let p: Vec<f64> = a.iter().map(|x| x + c).collect();
            let r = rmse(&p, &a).unwrap();
            prop_assert!(r >= 0.0);
            if c != 0.0 {
                prop_assert!(r > 0.0);
            }
            prop_assert!((r - c.abs()).abs() < 1e-9);
        }

        #[test]
        fn improvement_sign(a in 0.01f64..500.0, b in 0.0f64..500.0) {
            let e = improvement(a, b).unwrap();
            prop_assert_eq!(e > 0.0, b < a);
        }
    }
}
