//! CSV ingestion against the published schema.

use std::collections::HashMap;
use std::path::Path;

use super::schema::*;
use super::DataError;

/// Header symbols the file must carry (order-insensitive, extras ignored).
const REQUIRED_COLUMNS: [&str; 18] = [
    "Type", "MAT", "Shape", "HD", "ZP", "Charge", "TS", "TM", "CT", "TW", "TSiz", "Dose", "BW",
    "AR", "KTRESrelease", "KTRESmax", "KTRESn", "KTRES50",
];

/// Reads one [`SampleRecord`] per data row. Unparseable numerics,
/// out-of-vocabulary categoricals, non-finite values, and non-positive
/// `HD`/`TW`/`TSiz` are all recorded as missing; no row is rejected here.
pub fn load_dataset(path: &Path) -> Result<Vec<SampleRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.to_path_buf(),
                source: match e.into_kind() {
                    csv::ErrorKind::Io(io) => io,
                    _ => unreachable!(),
                },
            },
            _ => DataError::Csv {
                path: path.to_path_buf(),
                source: e,
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(DataError::EmptyFile {
            path: path.to_path_buf(),
        });
    }

    let mut col: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        col.entry(h).or_insert(i);
    }
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| !col.contains_key(**c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DataError::MissingColumn { missing });
    }
    let idx = |name: &str| col[name];

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| DataError::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let field = |name: &str| row.get(idx(name)).unwrap_or("");
        records.push(SampleRecord {
            type_np: parse_cat(field("Type"), NpType::parse),
            mat: parse_cat(field("MAT"), Material::parse),
            shape: parse_cat(field("Shape"), NpShape::parse),
            hd: parse_positive(field("HD")),
            zp: parse_real(field("ZP")),
            charge: parse_cat(field("Charge"), Charge::parse),
            ts: parse_cat(field("TS"), Targeting::parse),
            tm: parse_cat(field("TM"), TumorModel::parse),
            ct: parse_cat(field("CT"), CancerType::parse),
            tw: parse_positive(field("TW")),
            tsiz: parse_positive(field("TSiz")),
            dose: parse_real(field("Dose")),
            bw: parse_real(field("BW")),
            ar: parse_cat(field("AR"), AdminRoute::parse),
            ktres_release: parse_real(field("KTRESrelease")),
            ktres_max: parse_real(field("KTRESmax")),
            ktres_n: parse_real(field("KTRESn")),
            ktres_50: parse_real(field("KTRES50")),
        });
    }
    Ok(records)
}

fn parse_cat<T>(s: &str, parse: impl Fn(&str) -> Result<T, DataError>) -> Option<T> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    parse(s).ok()
}

fn parse_real(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_positive(s: &str) -> Option<f64> {
    parse_real(s).filter(|v| *v > 0.0)
}
