//! Observed panels, variable transforms, differencing and detrending.
//!
//! A panel stores `n` series over the time index `0..=T` as an `n x (T+1)`
//! matrix. First differences live on `1..=T` and are stored as `n x T`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformation applied to a raw series before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformCode {
    /// Code 1: no transformation.
    Level,
    /// Code 2: natural logarithm.
    Log,
    /// Code 3: first difference of the natural logarithm.
    DiffLog,
}

impl TransformCode {
    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            1 => Ok(TransformCode::Level),
            2 => Ok(TransformCode::Log),
            3 => Ok(TransformCode::DiffLog),
            other => Err(Error::Ingestion(format!("unknown transform code {other}; expected 1, 2 or 3"))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TransformCode::Level => 1,
            TransformCode::Log => 2,
            TransformCode::DiffLog => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frequency {
    Monthly,
    Quarterly,
    Daily,
}

impl FromStr for Frequency {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "monthly" => Ok(Frequency::Monthly),
            "q" | "quarterly" => Ok(Frequency::Quarterly),
            "d" | "daily" => Ok(Frequency::Daily),
            other => Err(Error::Ingestion(format!("unknown frequency `{other}`"))),
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
            Frequency::Daily => "daily",
        })
    }
}

/// Rectangular multivariate time series with per-series metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    /// `n x (T+1)`; row = series, column = time `0..=T`.
    pub values: DMatrix<f64>,
    pub series_names: Vec<String>,
    pub transform_codes: Vec<TransformCode>,
    pub frequency: Frequency,
    /// Optional date labels, one per column. Carried through for output only.
    pub dates: Option<Vec<String>>,
}

impl Panel {
    /// Validated constructor: `n >= 1`, `T >= 2`, all entries finite and
    /// metadata lengths consistent.
    pub fn new(
        values: DMatrix<f64>,
        series_names: Vec<String>,
        transform_codes: Vec<TransformCode>,
        frequency: Frequency,
        dates: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = values.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("panel has no series".into()));
        }
        if values.ncols() < 3 {
            return Err(Error::InvalidInput(format!(
                "panel needs at least 3 time points (T >= 2), got {}",
                values.ncols()
            )));
        }
        if series_names.len() != n || transform_codes.len() != n {
            return Err(Error::Dimension(format!(
                "{} series but {} names and {} transform codes",
                n,
                series_names.len(),
                transform_codes.len()
            )));
        }
        if let Some(d) = &dates {
            if d.len() != values.ncols() {
                return Err(Error::Dimension(format!("{} date labels for {} columns", d.len(), values.ncols())));
            }
        }
        if let Some((i, _)) = values.row_iter().enumerate().find(|(_, r)| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Ingestion(format!("series `{}` contains non-finite values", series_names[i])));
        }
        Ok(Panel { values, series_names, transform_codes, frequency, dates })
    }

    /// Panel of untransformed quarterly series named `x1..xn`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        Panel::new(values, names, vec![TransformCode::Level; n], Frequency::Quarterly, None)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Last time index `T` (the panel has `T + 1` columns).
    pub fn t(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.series_names.iter().position(|s| s == name)
    }

    /// Same metadata, new values (and optionally trimmed dates).
    fn with_values(&self, values: DMatrix<f64>, dates: Option<Vec<String>>) -> Panel {
        Panel {
            values,
            series_names: self.series_names.clone(),
            transform_codes: self.transform_codes.clone(),
            frequency: self.frequency,
            dates,
        }
    }
}

/// Column `t` of the output is `x_t - x_{t-1}`, `t = 1..=T`.
pub fn difference(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = x.ncols();
    if cols < 2 {
        return Err(Error::InvalidInput("differencing needs at least two time points".into()));
    }
    Ok(x.columns(1, cols - 1) - x.columns(0, cols - 1))
}

/// Cumulates `d` (`n x T`) from the initial condition `x0`; the output has
/// `T + 1` columns with column 0 equal to `x0`.
pub fn integrate(d: &DMatrix<f64>, x0: &DVector<f64>) -> Result<DMatrix<f64>> {
    if x0.len() != d.nrows() {
        return Err(Error::Dimension(format!(
            "initial condition has length {}, panel has {} series",
            x0.len(),
            d.nrows()
        )));
    }
    let mut out = DMatrix::zeros(d.nrows(), d.ncols() + 1);
    out.set_column(0, x0);
    for t in 0..d.ncols() {
        let next = out.column(t) + d.column(t);
        out.set_column(t + 1, &next);
    }
    Ok(out)
}

/// Estimated per-series linear trend slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// Slope `b_i` in units of the series per period.
    pub slope: Vec<f64>,
    /// Detrended data keep the intercept `a_i`; it is never estimated.
    pub intercept_kept: bool,
}

impl TrendFit {
    /// Adds `slope_i * t` back to a detrended panel.
    pub fn restore(&self, detrended: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = detrended.clone();
        for (i, b) in self.slope.iter().enumerate() {
            for t in 0..out.ncols() {
                out[(i, t)] += b * t as f64;
            }
        }
        out
    }
}

fn remove_slopes(y: &DMatrix<f64>, slope: &[f64]) -> DMatrix<f64> {
    let mut out = y.clone();
    for (i, b) in slope.iter().enumerate() {
        for t in 0..out.ncols() {
            out[(i, t)] -= b * t as f64;
        }
    }
    out
}

/// Least-squares trend slope per series, `t = 0..=T`; returns `y_t - b_i t`.
pub fn detrend_ls(y: &DMatrix<f64>) -> Result<(TrendFit, DMatrix<f64>)> {
    let cols = y.ncols();
    if cols < 3 {
        return Err(Error::InvalidInput("least-squares detrending needs T >= 2".into()));
    }
    let t_last = (cols - 1) as f64;
    let mid = t_last / 2.0;
    let denom: f64 = (0..cols).map(|t| (t as f64 - mid).powi(2)).sum();
    let slope: Vec<f64> = y
        .row_iter()
        .map(|row| {
            let mean = row.sum() / cols as f64;
            let num: f64 = row.iter().enumerate().map(|(t, v)| (t as f64 - mid) * (v - mean)).sum();
            num / denom
        })
        .collect();
    let out = remove_slopes(y, &slope);
    Ok((TrendFit { slope, intercept_kept: true }, out))
}

/// Slope from the mean first difference, `(y_T - y_0) / T`.
pub fn detrend_demean(y: &DMatrix<f64>) -> Result<(TrendFit, DMatrix<f64>)> {
    let cols = y.ncols();
    if cols < 2 {
        return Err(Error::InvalidInput("demeaning first differences needs T >= 1".into()));
    }
    let t_last = (cols - 1) as f64;
    let slope: Vec<f64> = y.row_iter().map(|row| (row[cols - 1] - row[0]) / t_last).collect();
    let out = remove_slopes(y, &slope);
    Ok((TrendFit { slope, intercept_kept: true }, out))
}

/// Detrending method used ahead of factor extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetrendMethod {
    /// Data used as given.
    None,
    /// Least-squares slope (the default).
    #[default]
    Ls,
    /// Mean of first differences.
    Demean,
}

impl FromStr for DetrendMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ls" => Ok(DetrendMethod::Ls),
            "demean" => Ok(DetrendMethod::Demean),
            "none" => Ok(DetrendMethod::None),
            other => Err(Error::Config(format!("unknown detrend method `{other}` (ls|demean|none)"))),
        }
    }
}

pub fn detrend(y: &DMatrix<f64>, method: DetrendMethod) -> Result<(Option<TrendFit>, DMatrix<f64>)> {
    match method {
        DetrendMethod::None => Ok((None, y.clone())),
        DetrendMethod::Ls => detrend_ls(y).map(|(f, x)| (Some(f), x)),
        DetrendMethod::Demean => detrend_demean(y).map(|(f, x)| (Some(f), x)),
    }
}

fn quarter_key(label: &str) -> Option<(i32, u8)> {
    let s = label.trim();
    let upper = s.to_ascii_uppercase();
    if let Some(pos) = upper.find('Q') {
        let year: i32 = upper[..pos].trim_end_matches(['-', ' ', '/']).parse().ok()?;
        let q: u8 = upper[pos + 1..].trim().parse().ok()?;
        return (1..=4).contains(&q).then_some((year, q));
    }
    let mut parts = s.split(['-', '/', '.']);
    let year: i32 = parts.next()?.parse().ok()?;
    let month: u8 = parts.next()?.parse().ok()?;
    (1..=12).contains(&month).then_some((year, (month - 1) / 3 + 1))
}

/// Within-quarter simple averages of monthly or daily panels.
///
/// With date labels, observations are grouped by calendar quarter and the
/// groups must appear in chronological order. Without labels, monthly data
/// are grouped three at a time from the first observation (an incomplete
/// trailing quarter is dropped); daily data require labels.
pub fn aggregate_quarterly(p: &Panel) -> Result<Panel> {
    if p.frequency == Frequency::Quarterly {
        return Ok(p.clone());
    }
    let cols = p.values.ncols();
    let groups: Vec<(String, Vec<usize>)> = match &p.dates {
        Some(dates) => {
            let mut groups: Vec<((i32, u8), Vec<usize>)> = Vec::new();
            for (t, label) in dates.iter().enumerate() {
                let key = quarter_key(label)
                    .ok_or_else(|| Error::Ingestion(format!("cannot read a calendar date from `{label}`")))?;
                match groups.last_mut() {
                    Some((k, idx)) if *k == key => idx.push(t),
                    Some((k, _)) if *k > key => {
                        return Err(Error::Ingestion(format!("dates are not in chronological order at `{label}`")));
                    }
                    _ => groups.push((key, vec![t])),
                }
            }
            groups.into_iter().map(|((y, q), idx)| (format!("{y}Q{q}"), idx)).collect()
        }
        None => {
            if p.frequency == Frequency::Daily {
                return Err(Error::Ingestion("daily data need date labels to be aggregated to quarters".into()));
            }
            (0..cols / 3).map(|g| (format!("q{}", g + 1), vec![3 * g, 3 * g + 1, 3 * g + 2])).collect()
        }
    };
    let mut values = DMatrix::zeros(p.n(), groups.len());
    for (g, (_, idx)) in groups.iter().enumerate() {
        for i in 0..p.n() {
            values[(i, g)] = idx.iter().map(|&t| p.values[(i, t)]).sum::<f64>() / idx.len() as f64;
        }
    }
    let dates = p.dates.as_ref().map(|_| groups.iter().map(|(l, _)| l.clone()).collect());
    Panel::new(values, p.series_names.clone(), p.transform_codes.clone(), Frequency::Quarterly, dates)
}

/// Aggregates to quarterly frequency, then applies each series' transform.
///
/// A code-3 series loses its first observation; when any series has code 3
/// the whole panel is aligned to the common (shorter) sample.
pub fn apply_transforms(raw: &Panel) -> Result<Panel> {
    let q = aggregate_quarterly(raw)?;
    let cols = q.values.ncols();
    let any_diff = q.transform_codes.contains(&TransformCode::DiffLog);
    let start = usize::from(any_diff);
    let mut out = DMatrix::zeros(q.n(), cols - start);
    for (i, code) in q.transform_codes.iter().enumerate() {
        let row = q.values.row(i);
        if matches!(code, TransformCode::Log | TransformCode::DiffLog) {
            if let Some(t) = row.iter().position(|v| *v <= 0.0) {
                return Err(Error::Domain {
                    series: q.series_names[i].clone(),
                    msg: format!("non-positive value {} at column {t} under a log transform", row[t]),
                });
            }
        }
        for t in start..cols {
            out[(i, t - start)] = match code {
                TransformCode::Level => row[t],
                TransformCode::Log => row[t].ln(),
                TransformCode::DiffLog => row[t].ln() - row[t - 1].ln(),
            };
        }
    }
    if any_diff {
        log::info!("aligned panel to the common sample: dropped 1 leading observation created by a Δlog transform");
    }
    let dates = q.dates.as_ref().map(|d| d[start..].to_vec());
    if out.ncols() < 3 {
        return Err(Error::Ingestion("fewer than 3 observations remain after transforms".into()));
    }
    Ok(q.with_values(out, dates))
}
