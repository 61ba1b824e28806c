//! CSV ingestion and export.
//!
//! Panels are stored wide: a header row of series names, one row per time
//! point, and optionally a leading column of date labels. Transform codes
//! come from a sidecar file with columns `series,code` and an optional
//! `freq` column.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::{Frequency, Panel, TransformCode};
use crate::selection::{CriterionPath, SelectionResult, StabilityPoint};
use crate::spectral::SpectralDensity;

/// Raw wide table before metadata is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub dates: Option<Vec<String>>,
    /// `n x (T+1)`, possibly with NaN for missing cells.
    pub values: DMatrix<f64>,
}

/// Per-series metadata from the sidecar file.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub code: TransformCode,
    pub frequency: Option<Frequency>,
}

const DATE_HEADERS: [&str; 5] = ["", "date", "dates", "time", "period"];

fn parse_cell(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") || s == "." {
        return Some(f64::NAN);
    }
    s.parse().ok()
}

/// Reads a wide CSV. The first column holds date labels when its header is
/// blank or a date-like word, or when any of its cells is not numeric.
pub fn read_table<R: Read>(input: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() {
        return Err(Error::Ingestion("empty header row".into()));
    }
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Error::Ingestion("no data rows".into()));
    }
    let first_is_date = DATE_HEADERS.contains(&header[0].to_ascii_lowercase().as_str())
        || rows.iter().any(|r| r.get(0).and_then(parse_cell).is_none());
    let skip = usize::from(first_is_date);
    let names: Vec<String> = header[skip..].to_vec();
    if names.is_empty() {
        return Err(Error::Ingestion("no series columns".into()));
    }
    let mut seen = HashMap::new();
    for (i, nm) in names.iter().enumerate() {
        if let Some(j) = seen.insert(nm.as_str(), i) {
            return Err(Error::Ingestion(format!("series `{nm}` appears twice (columns {} and {})", j + 1, i + 1)));
        }
    }
    let n = names.len();
    let mut values = DMatrix::zeros(n, rows.len());
    let mut dates = Vec::with_capacity(rows.len());
    for (t, rec) in rows.iter().enumerate() {
        if rec.len() != n + skip {
            return Err(Error::Ingestion(format!("row {} has {} fields, expected {}", t + 2, rec.len(), n + skip)));
        }
        if first_is_date {
            dates.push(rec[0].to_string());
        }
        for i in 0..n {
            values[(i, t)] = parse_cell(&rec[i + skip]).ok_or_else(|| {
                Error::Ingestion(format!("non-numeric value `{}` for series `{}` in row {}", &rec[i + skip], names[i], t + 2))
            })?;
        }
    }
    Ok(RawTable { names, dates: first_is_date.then_some(dates), values })
}

/// Drops leading and trailing time points where any series is missing.
/// Interior gaps are an error. Returns the trimmed table and the number of
/// points removed at each end.
pub fn trim_missing(t: &RawTable) -> Result<(RawTable, usize, usize)> {
    let cols = t.values.ncols();
    let complete: Vec<bool> = (0..cols).map(|j| t.values.column(j).iter().all(|v| v.is_finite())).collect();
    let first = complete.iter().position(|c| *c).ok_or_else(|| Error::Ingestion("no complete time point".into()))?;
    let last = complete.iter().rposition(|c| *c).expect("some column is complete");
    if let Some(j) = (first..=last).find(|&j| !complete[j]) {
        let i = t.values.column(j).iter().position(|v| !v.is_finite()).expect("incomplete column");
        let at = t.dates.as_ref().map_or_else(|| format!("row {}", j + 2), |d| format!("`{}`", d[j]));
        return Err(Error::Ingestion(format!("series `{}` has a missing value inside the sample at {at}", t.names[i])));
    }
    let values = t.values.columns(first, last - first + 1).into_owned();
    let dates = t.dates.as_ref().map(|d| d[first..=last].to_vec());
    if first > 0 || last + 1 < cols {
        log::info!("trimmed {first} leading and {} trailing incomplete time points", cols - 1 - last);
    }
    Ok((RawTable { names: t.names.clone(), dates, values }, first, cols - 1 - last))
}

/// Reads the `series,code[,freq]` sidecar.
pub fn read_transforms<R: Read>(input: R) -> Result<HashMap<String, SeriesSpec>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (s_col, c_col) = match (col("series"), col("code")) {
        (Some(s), Some(c)) => (s, c),
        _ => return Err(Error::Ingestion("transform file needs `series` and `code` columns".into())),
    };
    let f_col = col("freq").or_else(|| col("frequency"));
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let name = rec.get(s_col).unwrap_or_default().to_string();
        let raw = rec.get(c_col).unwrap_or_default();
        let code = raw
            .parse::<i64>()
            .map_err(|_| Error::Ingestion(format!("transform code `{raw}` for `{name}` is not an integer")))
            .and_then(TransformCode::from_code)?;
        let frequency = match f_col.and_then(|c| rec.get(c)).filter(|s| !s.is_empty()) {
            Some(f) => Some(f.parse()?),
            None => None,
        };
        if out.insert(name.clone(), SeriesSpec { code, frequency }).is_some() {
            return Err(Error::Ingestion(format!("series `{name}` listed twice in the transform file")));
        }
    }
    Ok(out)
}

/// Builds a raw panel from a table and its sidecar. Every series needs a
/// code; sidecar frequencies, when present, must agree with each other and
/// override `default_freq`.
pub fn assemble_panel(
    table: &RawTable,
    specs: Option<&HashMap<String, SeriesSpec>>,
    default_freq: Frequency,
) -> Result<Panel> {
    let (t, _, _) = trim_missing(table)?;
    let mut codes = Vec::with_capacity(t.names.len());
    let mut freq: Option<Frequency> = None;
    for name in &t.names {
        match specs {
            None => codes.push(TransformCode::Level),
            Some(map) => {
                let s = map
                    .get(name)
                    .ok_or_else(|| Error::Ingestion(format!("series `{name}` has no entry in the transform file")))?;
                codes.push(s.code);
                if let Some(f) = s.frequency {
                    if freq.is_some_and(|g| g != f) {
                        return Err(Error::Ingestion(format!(
                            "mixed frequencies in the transform file (`{name}` is {f}); convert to a common frequency first"
                        )));
                    }
                    freq = Some(f);
                }
            }
        }
    }
    if let Some(map) = specs {
        let extra = map.keys().filter(|k| !t.names.contains(k)).count();
        if extra > 0 {
            log::warn!("{extra} transform-file entries name series absent from the data");
        }
    }
    Panel::new(t.values, t.names, codes, freq.unwrap_or(default_freq), t.dates)
}

/// Reads a data file and an optional sidecar into a raw (untransformed) panel.
pub fn load_panel(data: &Path, transforms: Option<&Path>, default_freq: Frequency) -> Result<Panel> {
    let table = read_table(open(data)?)?;
    let specs = transforms.map(|p| read_transforms(open(p)?)).transpose()?;
    assemble_panel(&table, specs.as_ref(), default_freq)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes a panel in the layout [`read_table`] accepts.
pub fn write_panel<W: Write>(p: &Panel, out: W) -> Result<()> {
    write_matrix_wide(&p.values, &p.series_names, p.dates.as_deref(), out)
}

fn write_matrix_wide<W: Write>(values: &DMatrix<f64>, names: &[String], dates: Option<&[String]>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = Vec::with_capacity(names.len() + 1);
    if dates.is_some() {
        header.push("date".to_string());
    }
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..values.ncols() {
        let mut rec = Vec::with_capacity(header.len());
        if let Some(d) = dates {
            rec.push(d[t].clone());
        }
        rec.extend(values.column(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an `n x (T+1)` matrix with generated names `x1..xn`.
pub fn write_matrix<W: Write>(values: &DMatrix<f64>, out: W) -> Result<()> {
    let names: Vec<String> = (1..=values.nrows()).map(|i| format!("x{i}")).collect();
    write_matrix_wide(values, &names, None, out)
}

/// Dynamic eigenvalues, one row per `j`, one column per frequency.
pub fn write_eigenvalues<W: Write>(sd: &SpectralDensity, out: W) -> Result<()> {
    let ev = sd
        .eigvals
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("spectral density has no eigenvalues yet".into()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["j".to_string()];
    header.extend(sd.grid.iter().map(|th| format!("{th:.6}")));
    w.write_record(&header)?;
    for (j, row) in ev.row_iter().enumerate() {
        let mut rec = vec![(j + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// All three criterion paths in long format.
pub fn write_criterion_paths<W: Write>(sel: &SelectionResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["criterion", "k", "fit", "penalty", "value", "selected"])?;
    let mut emit = |name: &str, p: &CriterionPath| -> Result<()> {
        for k in 0..p.value.len() {
            w.write_record([
                name.to_string(),
                k.to_string(),
                p.fit[k].to_string(),
                p.penalty[k].to_string(),
                p.value[k].to_string(),
                u8::from(k == p.selected).to_string(),
            ])?;
        }
        Ok(())
    };
    emit("r", &sel.r_path.information_criterion)?;
    emit("q", &sel.q_path)?;
    emit("tau", &sel.tau_path)?;
    w.flush()?;
    Ok(())
}

/// Penalty scans in long format; empty apart from the header when the
/// penalties were fixed.
pub fn write_stability_paths<W: Write>(sel: &SelectionResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["criterion", "c", "variance", "full_sample_count"])?;
    let groups: [(&str, &Option<Vec<StabilityPoint>>); 2] = [("q", &sel.q_stability_path), ("tau", &sel.tau_stability_path)];
    for (name, path) in groups {
        for p in path.iter().flatten() {
            w.write_record([name.to_string(), p.c.to_string(), p.variance.to_string(), p.full_sample_count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_dates_and_trims_ragged_edges() {
        let text = "date,a,b\n2000-01,,1\n2000-02,1,2\n2000-03,2,3\n2000-04,3,4\n2000-05,4,NA\n";
        let t = read_table(text.as_bytes()).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.dates.as_ref().unwrap().len(), 5);
        let (tr, lead, trail) = trim_missing(&t).unwrap();
        assert_eq!((lead, trail), (1, 1));
        assert_eq!(tr.values, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]));
        assert_eq!(tr.dates.unwrap(), vec!["2000-02", "2000-03", "2000-04"]);
    }

    #[test]
    fn numeric_first_column_is_a_series() {
        let t = read_table("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert!(t.dates.is_none());
        assert_eq!(t.names, vec!["a", "b"]);
    }

    #[test]
    fn interior_gap_and_bad_cells_are_ingestion_errors() {
        let t = read_table("a,b\n1,2\n,4\n5,6\n".as_bytes()).unwrap();
        let e = trim_missing(&t).unwrap_err();
        assert!(matches!(e, Error::Ingestion(_)) && e.to_string().contains("`a`"), "{e}");
        assert!(matches!(read_table("t,a\n1,2\n2,x\n".as_bytes()), Err(Error::Ingestion(_))));
        assert!(matches!(read_table("a,b\n1,2\n2\n".as_bytes()), Err(Error::Ingestion(_)) | Err(Error::Csv(_))));
        assert!(matches!(read_table("a,a\n1,2\n".as_bytes()), Err(Error::Ingestion(_))));
    }

    #[test]
    fn sidecar_codes_and_frequency() {
        let s = read_transforms("series,code,freq\na,1,m\nb,3,m\n".as_bytes()).unwrap();
        assert_eq!(s["b"].code, TransformCode::DiffLog);
        let t = read_table("date,a,b\n2000-01,1,1\n2000-02,1,2\n2000-03,2,3\n2000-04,3,4\n".as_bytes()).unwrap();
        let p = assemble_panel(&t, Some(&s), Frequency::Quarterly).unwrap();
        assert_eq!(p.frequency, Frequency::Monthly);
        assert_eq!(p.transform_codes, vec![TransformCode::Level, TransformCode::DiffLog]);

        let missing = read_transforms("series,code\na,1\n".as_bytes()).unwrap();
        assert!(matches!(assemble_panel(&t, Some(&missing), Frequency::Quarterly), Err(Error::Ingestion(_))));
        assert!(matches!(read_transforms("series,code\na,7\n".as_bytes()), Err(Error::Ingestion(_))));
        assert!(matches!(read_transforms("name,code\na,1\n".as_bytes()), Err(Error::Ingestion(_))));
        let mixed = read_transforms("series,code,freq\na,1,m\nb,1,q\n".as_bytes()).unwrap();
        assert!(matches!(assemble_panel(&t, Some(&mixed), Frequency::Quarterly), Err(Error::Ingestion(_))));
    }

    #[test]
    fn panel_round_trips_through_csv() {
        let values = DMatrix::from_fn(3, 5, |i, j| (i as f64 + 1.0) * 0.1 + j as f64 / 7.0);
        let dates: Vec<String> = (0..5).map(|t| format!("200{t}Q1")).collect();
        let p = Panel::new(
            values,
            vec!["x".into(), "y".into(), "z".into()],
            vec![TransformCode::Level; 3],
            Frequency::Quarterly,
            Some(dates),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let back = assemble_panel(&read_table(buf.as_slice()).unwrap(), None, Frequency::Quarterly).unwrap();
        assert_eq!(back, p);
    }
}
