//! Data preparation: stationarity transforms, sample alignment,
//! standardisation and the lag matrix.
//!
//! Input is a CSV whose first column is a quarterly period label
//! (`YYYY-QN`) followed by one column per series, with a sidecar JSON
//! object mapping series names to transform codes. Empty cells and `NA`
//! are missing.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Stationarity transform of a raw series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum TransformCode {
    Level = 1,
    Diff = 2,
    Diff2 = 3,
    Log = 4,
    LogDiff = 5,
    LogDiff2 = 6,
}

impl TransformCode {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn is_log(self) -> bool {
        matches!(
            self,
            TransformCode::Log | TransformCode::LogDiff | TransformCode::LogDiff2
        )
    }

    /// Leading observations lost to differencing.
    pub fn lost_obs(self) -> usize {
        match self {
            TransformCode::Level | TransformCode::Log => 0,
            TransformCode::Diff | TransformCode::LogDiff => 1,
            TransformCode::Diff2 | TransformCode::LogDiff2 => 2,
        }
    }
}

impl TryFrom<u8> for TransformCode {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        Ok(match code {
            1 => TransformCode::Level,
            2 => TransformCode::Diff,
            3 => TransformCode::Diff2,
            4 => TransformCode::Log,
            5 => TransformCode::LogDiff,
            6 => TransformCode::LogDiff2,
            _ => return Err(format!("transform code {code} is not in 1..=6")),
        })
    }
}

impl From<TransformCode> for u8 {
    fn from(c: TransformCode) -> u8 {
        c.code()
    }
}

/// Quarterly period label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period {
    pub year: i32,
    pub quarter: u8,
}

impl Period {
    pub fn new(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Parse {
                context: "period".into(),
                message: format!("quarter {quarter} out of range"),
            });
        }
        Ok(Self { year, quarter })
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Self {
                year: self.year + 1,
                quarter: 1,
            }
        } else {
            Self {
                year: self.year,
                quarter: self.quarter + 1,
            }
        }
    }

    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }

    /// `n` consecutive quarters starting at `self`.
    pub fn range(self, n: usize) -> Vec<Period> {
        std::iter::successors(Some(self), |p| Some(p.next()))
            .take(n)
            .collect()
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            context: "period".into(),
            message: format!("`{s}` is not of the form YYYY-QN"),
        };
        let (y, q) = s.trim().split_once("-Q").ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let quarter = q.parse().map_err(|_| bad())?;
        Period::new(year, quarter)
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One raw series on consecutive quarters.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub name: String,
    pub periods: Vec<Period>,
    pub values: Vec<Option<f64>>,
    pub code: TransformCode,
}

/// A series after its stationarity transform, with leading undefined
/// entries dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSeries {
    pub name: String,
    pub periods: Vec<Period>,
    pub values: Vec<Option<f64>>,
}

impl TransformedSeries {
    /// First and last period with an observed value.
    fn span(&self) -> Option<(Period, Period)> {
        let first = self.values.iter().position(Option::is_some)?;
        let last = self.values.iter().rposition(Option::is_some)?;
        Some((self.periods[first], self.periods[last]))
    }
}

fn diff(v: &[Option<f64>]) -> Vec<Option<f64>> {
    v.windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        })
        .collect()
}

/// Applies the series' transform code. Missing inputs propagate to every
/// output that depends on them.
pub fn apply_transform(series: &RawSeries) -> Result<TransformedSeries> {
    check_dim(
        "apply_transform periods",
        series.values.len(),
        series.periods.len(),
    )?;
    let code = series.code;
    let mut v = series.values.clone();
    if code.is_log() {
        for (x, p) in v.iter_mut().zip(&series.periods) {
            if let Some(val) = *x {
                if !(val > 0.0) {
                    return Err(Error::NonPositiveLog {
                        series: series.name.clone(),
                        period: p.to_string(),
                        value: val,
                        code: code.code(),
                    });
                }
                *x = Some(val.ln());
            }
        }
    }
    for _ in 0..code.lost_obs() {
        v = diff(&v);
    }
    let lost = code.lost_obs().min(series.periods.len());
    Ok(TransformedSeries {
        name: series.name.clone(),
        periods: series.periods[lost..].to_vec(),
        values: v,
    })
}

/// Inverts a transform given the first `lost_obs` raw levels. Returns the
/// full raw series including those initial conditions. Codes 1 and 4 need
/// no initial condition.
pub fn invert_transform(code: TransformCode, transformed: &[f64], initial: &[f64]) -> Result<Vec<f64>> {
    check_dim("invert_transform initial", code.lost_obs(), initial.len())?;
    let to_work = |x: f64| -> Result<f64> {
        if code.is_log() {
            if x > 0.0 {
                Ok(x.ln())
            } else {
                Err(Error::contract(format!("initial condition {x} must be positive")))
            }
        } else {
            Ok(x)
        }
    };
    let mut work: Vec<f64> = initial.iter().map(|&x| to_work(x)).collect::<Result<_>>()?;
    match code.lost_obs() {
        0 => work.extend_from_slice(transformed),
        1 => {
            for &d in transformed {
                let last = *work.last().unwrap();
                work.push(last + d);
            }
        }
        _ => {
            let mut slope = work[1] - work[0];
            for &d2 in transformed {
                slope += d2;
                let last = *work.last().unwrap();
                work.push(last + slope);
            }
        }
    }
    if code.is_log() {
        for x in &mut work {
            *x = x.exp();
        }
    }
    Ok(work)
}

/// Per-column affine map `z = (y - mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn identity(m: usize) -> Self {
        Self {
            mean: vec![0.0; m],
            sd: vec![1.0; m],
        }
    }

    /// Column means and sample standard deviations of `rows`.
    pub fn fit(y: &DMatrix<f64>) -> Result<Self> {
        let n = y.nrows();
        if n < 2 {
            return Err(Error::contract("need two rows to standardise"));
        }
        let mut mean = Vec::with_capacity(y.ncols());
        let mut sd = Vec::with_capacity(y.ncols());
        for col in y.column_iter() {
            let mu = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(Error::Degenerate("constant column cannot be standardised".into()));
            }
            mean.push(mu);
            sd.push(var.sqrt());
        }
        Ok(Self { mean, sd })
    }

    pub fn forward(&self, i: usize, v: f64) -> f64 {
        (v - self.mean[i]) / self.sd[i]
    }

    pub fn back(&self, i: usize, z: f64) -> f64 {
        z * self.sd[i] + self.mean[i]
    }

    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| self.forward(c, y[(r, c)]))
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| self.back(c, z[(r, c)]))
    }
}

/// Estimation-ready data.
///
/// `y_full` keeps the `p` pre-sample rows; `y` and `x` are aligned and
/// trimmed, so row `t` of `x` holds `(y_{t-1}', ..., y_{t-p}')'` for row
/// `t` of `y`. `y_full`, `y` and `x` are in standardised units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub names: Vec<String>,
    pub codes: Vec<TransformCode>,
    /// Periods of `y_full`.
    pub periods_full: Vec<Period>,
    pub p: usize,
    pub standardized: bool,
    pub standardization: Standardization,
    /// Transformed data before standardisation.
    pub transformed_full: DMatrix<f64>,
    pub y_full: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl Dataset {
    /// Builds a dataset from transformed, aligned data. Standardisation
    /// statistics come from the post-trim rows.
    pub fn from_transformed(
        names: Vec<String>,
        codes: Vec<TransformCode>,
        periods_full: Vec<Period>,
        transformed_full: DMatrix<f64>,
        p: usize,
        standardize: bool,
    ) -> Result<Self> {
        let m = transformed_full.ncols();
        check_dim("dataset names", m, names.len())?;
        check_dim("dataset codes", m, codes.len())?;
        check_dim("dataset periods", transformed_full.nrows(), periods_full.len())?;
        if p == 0 {
            return Err(Error::config("p", "lag order must be positive"));
        }
        let rows = transformed_full.nrows();
        if rows <= p {
            return Err(Error::config(
                "p",
                format!("{rows} aligned rows leave no sample after trimming {p} lags"),
            ));
        }
        if transformed_full.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite transformed value".into()));
        }
        let t_len = rows - p;
        let standardization = if standardize {
            Standardization::fit(&transformed_full.rows(p, t_len).into_owned())?
        } else {
            Standardization::identity(m)
        };
        let y_full = standardization.apply(&transformed_full);
        let y = y_full.rows(p, t_len).into_owned();
        let x = DMatrix::from_fn(t_len, m * p, |t, c| y_full[(t + p - 1 - c / m, c % m)]);
        Ok(Self {
            names,
            codes,
            periods_full,
            p,
            standardized: standardize,
            standardization,
            transformed_full,
            y_full,
            y,
            x,
        })
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    pub fn t_len(&self) -> usize {
        self.y.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Periods of the rows of `y`.
    pub fn periods(&self) -> &[Period] {
        &self.periods_full[self.p..]
    }

    /// Lag vector for `y` row `t`; `t == t_len` gives the vector for the
    /// first out-of-sample period.
    pub fn lags_for(&self, t: usize) -> Result<Vec<f64>> {
        if t > self.t_len() {
            return Err(Error::contract(format!(
                "lag vector requested for row {t} beyond {}",
                self.t_len()
            )));
        }
        let (m, p) = (self.m(), self.p);
        Ok((0..m * p)
            .map(|c| self.y_full[(t + p - 1 - c / m, c % m)])
            .collect())
    }

    /// The dataset restricted to its first `t_keep` estimation rows,
    /// re-standardised on that subsample.
    pub fn truncate(&self, t_keep: usize) -> Result<Dataset> {
        if t_keep == 0 || t_keep > self.t_len() {
            return Err(Error::contract(format!(
                "cannot keep {t_keep} of {} rows",
                self.t_len()
            )));
        }
        let rows = t_keep + self.p;
        Dataset::from_transformed(
            self.names.clone(),
            self.codes.clone(),
            self.periods_full[..rows].to_vec(),
            self.transformed_full.rows(0, rows).into_owned(),
            self.p,
            self.standardized,
        )
    }

    /// Standardised units to transformed units for series `i`.
    pub fn to_original(&self, i: usize, z: f64) -> f64 {
        self.standardization.back(i, z)
    }

    /// Deterministic byte serialisation used for fingerprints.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.p as u64).to_le_bytes());
        out.push(self.standardized as u8);
        for (n, c) in self.names.iter().zip(&self.codes) {
            out.extend_from_slice(n.as_bytes());
            out.push(0);
            out.push(c.code());
        }
        for p in &self.periods_full {
            out.extend_from_slice(&p.index().to_le_bytes());
        }
        for v in self.transformed_full.iter() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        out
    }
}

/// Transforms each series, aligns them on the common sample and builds
/// the dataset.
pub fn assemble_dataset(series: &[RawSeries], p: usize, standardize: bool) -> Result<Dataset> {
    if series.is_empty() {
        return Err(Error::contract("no series supplied"));
    }
    let transformed: Vec<TransformedSeries> =
        series.iter().map(apply_transform).collect::<Result<_>>()?;
    let spans: Vec<Option<(Period, Period)>> = transformed.iter().map(|s| s.span()).collect();
    let describe = || {
        transformed
            .iter()
            .zip(&spans)
            .map(|(s, sp)| match sp {
                Some((a, b)) => format!("{}: {a}..{b}", s.name),
                None => format!("{}: empty", s.name),
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut start = None::<Period>;
    let mut end = None::<Period>;
    for sp in &spans {
        let Some((a, b)) = sp else {
            return Err(Error::EmptySample { spans: describe() });
        };
        start = Some(start.map_or(*a, |s| s.max(*a)));
        end = Some(end.map_or(*b, |e| e.min(*b)));
    }
    let (start, end) = (start.unwrap(), end.unwrap());
    if start > end {
        return Err(Error::EmptySample { spans: describe() });
    }
    let n = (end.index() - start.index() + 1) as usize;
    let periods = start.range(n);
    let mut data = DMatrix::zeros(n, series.len());
    for (j, s) in transformed.iter().enumerate() {
        let by_period: BTreeMap<Period, Option<f64>> =
            s.periods.iter().copied().zip(s.values.iter().copied()).collect();
        for (r, per) in periods.iter().enumerate() {
            match by_period.get(per).copied().flatten() {
                Some(v) => data[(r, j)] = v,
                None => {
                    return Err(Error::MissingValue {
                        series: s.name.clone(),
                        period: per.to_string(),
                    })
                }
            }
        }
    }
    Dataset::from_transformed(
        series.iter().map(|s| s.name.clone()).collect(),
        series.iter().map(|s| s.code).collect(),
        periods,
        data,
        p,
        standardize,
    )
}

fn parse_cell(cell: &str) -> Option<&str> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan") {
        None
    } else {
        Some(c)
    }
}

/// Reads a wide CSV of raw series and assigns transform codes from `codes`.
pub fn read_series_csv(
    path: &Path,
    codes: &BTreeMap<String, TransformCode>,
) -> Result<Vec<RawSeries>> {
    let fmt_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| fmt_err(e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(fmt_err("expected a period column and at least one series".into()));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut series: Vec<RawSeries> = names
        .iter()
        .map(|n| {
            let code = codes.get(n).copied().ok_or_else(|| {
                Error::config(format!("transforms.{n}"), "series has no transform code")
            })?;
            Ok(RawSeries {
                name: n.clone(),
                periods: Vec::new(),
                values: Vec::new(),
                code,
            })
        })
        .collect::<Result<_>>()?;
    let mut last: Option<Period> = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| fmt_err(e.to_string()))?;
        let period: Period = rec[0]
            .parse()
            .map_err(|e: Error| fmt_err(format!("row {}: {e}", line + 2)))?;
        if let Some(prev) = last {
            if period != prev.next() {
                return Err(fmt_err(format!(
                    "row {}: period {period} does not follow {prev}",
                    line + 2
                )));
            }
        }
        last = Some(period);
        for (j, s) in series.iter_mut().enumerate() {
            let value = match rec.get(j + 1).and_then(parse_cell) {
                None => None,
                Some(c) => Some(c.parse::<f64>().map_err(|_| {
                    fmt_err(format!("row {}: `{c}` in column {} is not a number", line + 2, s.name))
                })?),
            };
            s.periods.push(period);
            s.values.push(value);
        }
    }
    Ok(series)
}

/// Reads the name-to-code JSON sidecar.
pub fn read_transform_map(path: &Path) -> Result<BTreeMap<String, TransformCode>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes a wide CSV with a period column. Floats use the shortest
/// round-trip representation.
pub fn write_matrix_csv(
    path: &Path,
    periods: &[Period],
    names: &[String],
    data: &DMatrix<f64>,
) -> Result<()> {
    check_dim("csv periods", data.nrows(), periods.len())?;
    check_dim("csv names", data.ncols(), names.len())?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let to_err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut header = vec!["period".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(to_err)?;
    for (r, per) in periods.iter().enumerate() {
        let mut rec = vec![per.to_string()];
        rec.extend((0..data.ncols()).map(|c| data[(r, c)].to_string()));
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the transformed (pre-standardisation) data, including the
/// pre-sample rows, so a run can be repeated from the snapshot alone with
/// every code set to 1.
pub fn write_dataset_snapshot(path: &Path, ds: &Dataset) -> Result<()> {
    write_matrix_csv(path, &ds.periods_full, &ds.names, &ds.transformed_full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn raw(name: &str, values: &[f64], code: TransformCode) -> RawSeries {
        let start = Period::new(2000, 1).unwrap();
        RawSeries {
            name: name.into(),
            periods: start.range(values.len()),
            values: values.iter().map(|v| Some(*v)).collect(),
            code,
        }
    }

    fn values(t: &TransformedSeries) -> Vec<f64> {
        t.values.iter().map(|v| v.unwrap()).collect()
    }

    #[test]
    fn hand_examples() {
        let t = apply_transform(&raw("a", &[1.0, 3.0, 6.0], TransformCode::Diff)).unwrap();
        assert_eq!(values(&t), vec![2.0, 3.0]);
        assert_eq!(t.periods[0], Period::new(2000, 2).unwrap());

        let t = apply_transform(&raw("a", &[1.0, E, E * E], TransformCode::LogDiff)).unwrap();
        for v in values(&t) {
            assert!((v - 1.0).abs() < 1e-14);
        }

        let t =
            apply_transform(&raw("a", &[1.0, E, E * E, E.powi(4)], TransformCode::LogDiff2)).unwrap();
        let v = values(&t);
        assert!(v[0].abs() < 1e-14 && (v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_positive_log_names_series_and_period() {
        let err = apply_transform(&raw("GDP", &[1.0, 0.0, 2.0], TransformCode::Log)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("GDP") && msg.contains("2000-Q2"), "{msg}");
    }

    #[test]
    fn period_parsing() {
        let p: Period = "1987-Q3".parse().unwrap();
        assert_eq!(p, Period::new(1987, 3).unwrap());
        assert_eq!(p.to_string(), "1987-Q3");
        assert_eq!(p.next().next().to_string(), "1988-Q1");
        assert!("1987-Q5".parse::<Period>().is_err());
        assert!("1987Q1".parse::<Period>().is_err());
    }

    #[test]
    fn trim_and_lag_layout() {
        let a = raw("a", &(0..10).map(f64::from).collect::<Vec<_>>(), TransformCode::Level);
        let b = raw("b", &(0..10).map(|i| 100.0 + i as f64).collect::<Vec<_>>(), TransformCode::Level);
        let ds = assemble_dataset(&[a, b], 2, false).unwrap();
        assert_eq!(ds.t_len(), 8);
        assert_eq!(ds.k(), 4);
        // row 0 of y is raw row 2; its lags are rows 1 and 0
        assert_eq!(ds.y[(0, 0)], 2.0);
        assert_eq!(ds.x.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 101.0, 0.0, 100.0]);
        assert_eq!(ds.lags_for(8).unwrap(), vec![9.0, 109.0, 8.0, 108.0]);
    }

    #[test]
    fn standardised_columns() {
        let a = raw("a", &[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], TransformCode::Level);
        let ds = assemble_dataset(&[a], 1, true).unwrap();
        let col = ds.y.column(0);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        let back = ds.standardization.invert(&ds.y_full);
        assert!((back - &ds.transformed_full).amax() < 1e-12);
    }

    #[test]
    fn misaligned_spans_intersect() {
        let mut a = raw("a", &[1.0, 2.0, 3.0, 4.0, 5.0], TransformCode::Level);
        a.values[0] = None;
        let b = raw("b", &[1.0, 2.0, 3.0, 4.0, 5.0], TransformCode::Diff);
        let ds = assemble_dataset(&[a, b], 1, false).unwrap();
        assert_eq!(ds.periods_full[0], Period::new(2000, 2).unwrap());
        assert_eq!(ds.t_len(), 3);
    }

    #[test]
    fn empty_intersection_lists_spans() {
        let a = raw("a", &[1.0, 2.0], TransformCode::Level);
        let mut b = raw("b", &[1.0, 2.0, 3.0, 4.0], TransformCode::Level);
        b.periods = Period::new(2010, 1).unwrap().range(4);
        let msg = assemble_dataset(&[a, b], 1, false).unwrap_err().to_string();
        assert!(msg.contains("a: 2000-Q1..2000-Q2") && msg.contains("b: 2010-Q1"), "{msg}");
    }

    #[test]
    fn interior_gap_is_an_error() {
        let mut a = raw("a", &[1.0, 2.0, 3.0, 4.0], TransformCode::Level);
        a.values[2] = None;
        assert!(matches!(
            assemble_dataset(&[a], 1, false),
            Err(Error::MissingValue { .. })
        ));
    }

    #[test]
    fn truncate_restandardises() {
        let a = raw("a", &[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0], TransformCode::Level);
        let ds = assemble_dataset(&[a], 1, true).unwrap();
        let sub = ds.truncate(4).unwrap();
        assert_eq!(sub.t_len(), 4);
        assert!(sub.y.column(0).sum().abs() < 1e-12);
        assert_eq!(sub.transformed_full, ds.transformed_full.rows(0, 5).into_owned());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "period,a,b\n2000-Q1,1,NA\n2000-Q2,2.5,3\n2000-Q3,,4\n").unwrap();
        let codes = BTreeMap::from([
            ("a".to_string(), TransformCode::Level),
            ("b".to_string(), TransformCode::Diff),
        ]);
        let s = read_series_csv(&path, &codes).unwrap();
        assert_eq!(s[0].values, vec![Some(1.0), Some(2.5), None]);
        assert_eq!(s[1].values, vec![None, Some(3.0), Some(4.0)]);

        let missing = BTreeMap::from([("a".to_string(), TransformCode::Level)]);
        assert!(read_series_csv(&path, &missing).is_err());

        let map_path = dir.path().join("t.json");
        std::fs::write(&map_path, r#"{"a": 1, "b": 5}"#).unwrap();
        assert_eq!(read_transform_map(&map_path).unwrap()["b"], TransformCode::LogDiff);
        std::fs::write(&map_path, r#"{"a": 7}"#).unwrap();
        assert!(read_transform_map(&map_path).is_err());
    }
}
