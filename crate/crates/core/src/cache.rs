//! Feature cache: one CSV row per song, `path,label,f0..f31`.
//!
//! Labels are written as `1` (fado) or `-1` (other); features with nine
//! significant digits.

use std::path::Path;

use crate::features::{FeatureVector, FEATURE_DIM};
use crate::svm::{Label, LabeledDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRow {
    pub path: String,
    pub label: Label,
    pub features: FeatureVector,
}

fn header() -> Vec<String> {
    let mut h = vec!["path".to_string(), "label".to_string()];
    h.extend(FeatureVector::column_names());
    h
}

pub fn write_cache_to<W: std::io::Write>(
    out: W,
    rows: &[CacheRow],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for row in rows {
        let mut rec = Vec::with_capacity(FEATURE_DIM + 2);
        rec.push(row.path.clone());
        rec.push(row.label.as_i8().to_string());
        rec.extend(row.features.as_slice().iter().map(|v| format!("{v:.8e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cache(path: impl AsRef<Path>, rows: &[CacheRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cache_to(std::io::BufWriter::new(file), rows).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, line, format!("{kind:?}")),
    }
}

pub fn read_cache_from<R: std::io::Read>(input: R, path: &Path) -> Result<Vec<CacheRow>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let expected = header();
    let found: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != FEATURE_DIM + 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", FEATURE_DIM + 2, rec.len()),
            ));
        }
        let label = rec[1]
            .trim()
            .parse::<i64>()
            .map_err(|_| Error::parse(path, line, format!("bad label `{}`", &rec[1])))
            .and_then(|v| {
                Label::from_i64(v).map_err(|e| Error::parse(path, line, e.to_string()))
            })?;
        let mut values = [0.0; FEATURE_DIM];
        for (j, v) in values.iter_mut().enumerate() {
            let tok = rec[j + 2].trim();
            *v = tok
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    Error::parse(path, line, format!("bad value `{tok}` in column f{j}"))
                })?;
        }
        rows.push(CacheRow {
            path: rec[0].to_string(),
            label,
            features: FeatureVector::new(values)?,
        });
    }
    Ok(rows)
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<CacheRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cache_from(std::io::BufReader::new(file), path)
}

/// Dataset view of cache rows, using paths as ids.
pub fn to_dataset(rows: &[CacheRow]) -> Result<LabeledDataset> {
    LabeledDataset::new(
        rows.iter()
            .map(|r| r.features.as_slice().to_vec())
            .collect(),
        rows.iter().map(|r| r.label).collect(),
        rows.iter().map(|r| r.path.clone()).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(path: &str, label: Label, base: f64) -> CacheRow {
        let mut v = [0.0; FEATURE_DIM];
        for (i, x) in v.iter_mut().enumerate() {
            *x = base * (i as f64 + 1.0) / 3.0 - 2.0;
        }
        CacheRow {
            path: path.into(),
            label,
            features: FeatureVector::new(v).unwrap(),
        }
    }

    fn write_str(rows: &[CacheRow]) -> String {
        let mut buf = Vec::new();
        write_cache_to(&mut buf, rows).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_to_nine_digits() {
        let rows = vec![
            row("a, b.wav", Label::Fado, 1.234567891234),
            row("c.wav", Label::Other, -7e-5),
        ];
        let text = write_str(&rows);
        assert!(text.starts_with("path,label,f0,f1,"));
        assert!(text.contains("\"a, b.wav\",1,"));
        let back = read_cache_from(text.as_bytes(), Path::new("x")).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!((a.path.as_str(), a.label), (b.path.as_str(), b.label));
            for (x, y) in a.features.as_slice().iter().zip(b.features.as_slice()) {
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1e-300), "{x} vs {y}");
            }
        }
        assert_eq!(write_str(&back), text);
    }

    #[test]
    fn bad_rows_report_line() {
        let text = write_str(&[row("a", Label::Fado, 1.0), row("b", Label::Other, 2.0)]);
        let broken = text.replacen("b,-1,", "b,3,", 1);
        match read_cache_from(broken.as_bytes(), Path::new("x")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let nan = text.replacen("a,1,", "a,1,nan_x", 1);
        assert!(matches!(
            read_cache_from(nan.as_bytes(), Path::new("x")),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            read_cache_from("p,l\n".as_bytes(), Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn dataset_uses_paths_as_ids() {
        let ds = to_dataset(&[row("a", Label::Fado, 1.0), row("b", Label::Other, 2.0)]).unwrap();
        assert_eq!(ds.ids(), ["a", "b"]);
        assert_eq!(ds.dim(), FEATURE_DIM);
    }
}
