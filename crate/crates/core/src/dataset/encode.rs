//! One-hot + z-score encoding of cleaned records into the primary
//! feature vector x (dimension [`PRIMARY_DIM`]).

use std::sync::Arc;

use super::schema::*;
use super::DataError;

/// Dimension of the primary feature vector:
/// 3 + 7 + 4 one-hots, HD, ZP, 3 + 2 + 4 + 10 one-hots, TW, TSiz, Dose, BW.
pub const PRIMARY_DIM: usize = 39;

/// Number of continuous columns (HD, ZP, TW, TSiz, Dose, BW).
pub const NUMERIC_DIM: usize = 6;

/// A single encoded row together with the shared column-name table.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub x: Vec<f64>,
    pub columns: Arc<[String]>,
}

/// Per-column z-score statistics fitted on a caller-chosen subset of rows.
/// Zero-variance columns encode to 0.0 rather than dividing by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    means: [f64; NUMERIC_DIM],
    stds: [f64; NUMERIC_DIM],
    columns: Arc<[String]>,
}

impl Encoder {
    /// Fits numeric statistics on `stats_rows`.
    pub fn fit(stats_rows: &[CleanRecord]) -> Result<Self, DataError> {
        if stats_rows.is_empty() {
            return Err(DataError::EmptyStatsSource);
        }
        let numeric: Vec<[f64; NUMERIC_DIM]> =
            stats_rows.iter().map(|r| r.numeric_features()).collect();
        let (means, stds) = column_stats(&numeric);
        Ok(Self {
            means,
            stds,
            columns: column_names(),
        })
    }

    /// Rebuilds an encoder from previously fitted statistics (checkpoint
    /// restore); the column table is fixed by the schema.
    pub fn from_stats(means: [f64; NUMERIC_DIM], stds: [f64; NUMERIC_DIM]) -> Self {
        Self {
            means,
            stds,
            columns: column_names(),
        }
    }

    pub fn means(&self) -> &[f64; NUMERIC_DIM] {
        &self.means
    }

    pub fn stds(&self) -> &[f64; NUMERIC_DIM] {
        &self.stds
    }

    pub fn columns(&self) -> Arc<[String]> {
        Arc::clone(&self.columns)
    }

    /// Encodes one record; pure and deterministic given the fitted stats.
    pub fn transform(&self, rec: &CleanRecord) -> EncodedSample {
        let mut x = Vec::with_capacity(PRIMARY_DIM);
        push_one_hot(&mut x, rec.type_np.index(), NpType::ALL.len());
        push_one_hot(&mut x, rec.mat.index(), Material::ALL.len());
        push_one_hot(&mut x, rec.shape.index(), NpShape::ALL.len());
        let n = rec.numeric_features();
        x.push(self.z(0, n[0])); // HD
        x.push(self.z(1, n[1])); // ZP
        push_one_hot(&mut x, rec.charge.index(), Charge::ALL.len());
        push_one_hot(&mut x, rec.ts.index(), Targeting::ALL.len());
        push_one_hot(&mut x, rec.tm.index(), TumorModel::ALL.len());
        push_one_hot(&mut x, rec.ct.index(), CancerType::ALL.len());
        x.push(self.z(2, n[2])); // TW
        x.push(self.z(3, n[3])); // TSiz
        x.push(self.z(4, n[4])); // Dose
        x.push(self.z(5, n[5])); // BW
        debug_assert_eq!(x.len(), PRIMARY_DIM);
        EncodedSample {
            x,
            columns: Arc::clone(&self.columns),
        }
    }

    pub fn transform_all(&self, recs: &[CleanRecord]) -> Vec<EncodedSample> {
        recs.iter().map(|r| self.transform(r)).collect()
    }

    fn z(&self, col: usize, v: f64) -> f64 {
        if self.stds[col] <= ZERO_VARIANCE_EPS {
            0.0
        } else {
            (v - self.means[col]) / self.stds[col]
        }
    }
}

const ZERO_VARIANCE_EPS: f64 = 1e-12;

/// Encodes every record of `data`, with z-score statistics fitted only on the
/// rows named by `stats_source` (e.g. training indices, to keep held-out rows
/// out of the statistics).
pub fn encode(data: &[CleanRecord], stats_source: &[usize]) -> Result<Vec<EncodedSample>, DataError> {
    if stats_source.is_empty() {
        return Err(DataError::EmptyStatsSource);
    }
    for &i in stats_source {
        if i >= data.len() {
            return Err(DataError::StatsIndexOutOfRange {
                index: i,
                len: data.len(),
            });
        }
    }
    let stats_rows: Vec<CleanRecord> = stats_source.iter().map(|&i| data[i].clone()).collect();
    let enc = Encoder::fit(&stats_rows)?;
    Ok(enc.transform_all(data))
}

fn push_one_hot(x: &mut Vec<f64>, hot: usize, width: usize) {
    for i in 0..width {
        x.push(if i == hot { 1.0 } else { 0.0 });
    }
}

fn column_stats(rows: &[[f64; NUMERIC_DIM]]) -> ([f64; NUMERIC_DIM], [f64; NUMERIC_DIM]) {
    let n = rows.len() as f64;
    let mut means = [0.0; NUMERIC_DIM];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut vars = [0.0; NUMERIC_DIM];
    for row in rows {
        for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let mut stds = [0.0; NUMERIC_DIM];
    for (sd, s) in stds.iter_mut().zip(&vars) {
        *sd = (s / n).sqrt();
    }
    (means, stds)
}

fn column_names() -> Arc<[String]> {
    let mut names: Vec<String> = Vec::with_capacity(PRIMARY_DIM);
    fn one_hot(names: &mut Vec<String>, prefix: &str, labels: Vec<&str>) {
        for l in labels {
            names.push(format!("{prefix}={l}"));
        }
    }
    one_hot(&mut names, "Type", NpType::ALL.iter().map(|v| v.label()).collect());
    one_hot(&mut names, "MAT", Material::ALL.iter().map(|v| v.label()).collect());
    one_hot(&mut names, "Shape", NpShape::ALL.iter().map(|v| v.label()).collect());
    names.push("HD".into());
    names.push("ZP".into());
    one_hot(&mut names, "Charge", Charge::ALL.iter().map(|v| v.label()).collect());
    one_hot(&mut names, "TS", Targeting::ALL.iter().map(|v| v.label()).collect());
    one_hot(&mut names, "TM", TumorModel::ALL.iter().map(|v| v.label()).collect());
    one_hot(&mut names, "CT", CancerType::ALL.iter().map(|v| v.label()).collect());
    names.push("TW".into());
    names.push("TSiz".into());
    names.push("Dose".into());
    names.push("BW".into());
    debug_assert_eq!(names.len(), PRIMARY_DIM);
    names.into()
}

/// Column-wise z-scoring for arbitrary-width real matrices (used for the
/// secondary feature channel). Zero-variance columns map to 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::EmptyStatsSource);
        }
        let width = rows[0].len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; width];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; width];
        for row in rows {
            for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
        }
        Ok(Self { means, stds })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| if *s <= ZERO_VARIANCE_EPS { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn record(hd: f64, zp: f64) -> CleanRecord {
        CleanRecord {
            type_np: NpType::Organic,
            mat: Material::Liposomes,
            shape: NpShape::Spherical,
            hd,
            zp,
            charge: Charge::Negative,
            ts: Targeting::Passive,
            tm: TumorModel::XenograftHeterotopic,
            ct: CancerType::Breast,
            tw: 0.5,
            tsiz: 0.8,
            dose: 10.0,
            bw: 22.0,
            ar: AdminRoute::Iv,
            ktres_release: 0.05,
            ktres_max: 2.0,
            ktres_n: 1.5,
            ktres_50: 24.0,
        }
    }

    #[test]
    fn dimension_is_fixed() {
        let recs = vec![record(80.0, -10.0), record(120.0, -14.0)];
        let enc = Encoder::fit(&recs).unwrap();
        let s = enc.transform(&recs[0]);
        assert_eq!(s.x.len(), PRIMARY_DIM);
        assert_eq!(s.columns.len(), PRIMARY_DIM);
    }

    #[test]
    fn one_hot_blocks_sum_to_one() {
        let recs = vec![record(80.0, -10.0), record(120.0, -14.0)];
        let enc = Encoder::fit(&recs).unwrap();
        let x = enc.transform(&recs[0]).x;
        // (start, width) of each categorical block in column order.
        let blocks = [(0, 3), (3, 7), (10, 4), (16, 3), (19, 2), (21, 4), (25, 10)];
        for (start, width) in blocks {
            let sum: f64 = x[start..start + width].iter().sum();
            assert_eq!(sum, 1.0, "block at {start}");
            assert!(x[start..start + width].iter().all(|v| *v == 0.0 || *v == 1.0));
        }
    }

    #[test]
    fn column_names_match_layout() {
        let enc = Encoder::fit(&[record(80.0, -10.0)]).unwrap();
        let cols = enc.columns();
        assert_eq!(cols[0], "Type=Inorganic");
        assert_eq!(cols[14], "HD");
        assert_eq!(cols[15], "ZP");
        assert_eq!(cols[16], "Charge=Positive");
        assert_eq!(cols[35], "TW");
        assert_eq!(cols[38], "BW");
    }

    #[test]
    fn mean_row_maps_to_zero() {
        let recs = vec![record(80.0, -10.0), record(120.0, -14.0)];
        let enc = Encoder::fit(&recs).unwrap();
        let x = enc.transform(&record(100.0, -12.0)).x;
        assert_abs_diff_eq!(x[14], 0.0, epsilon = 1e-12); // HD at its mean
        assert_abs_diff_eq!(x[15], 0.0, epsilon = 1e-12); // ZP at its mean
    }

    #[test]
    fn zero_variance_column_encodes_to_zero() {
        let recs = vec![record(80.0, -10.0), record(120.0, -10.0)];
        let enc = Encoder::fit(&recs).unwrap();
        let x = enc.transform(&record(80.0, -10.0)).x;
        assert_eq!(x[15], 0.0); // ZP constant in stats rows
        assert!(x[14] != 0.0); // HD varies
    }

    #[test]
    fn transform_is_deterministic() {
        let recs = vec![record(80.0, -10.0), record(120.0, -14.0)];
        let enc = Encoder::fit(&recs).unwrap();
        let a = enc.transform(&recs[1]).x;
        let b = enc.transform(&recs[1]).x;
        assert_eq!(a, b);
    }

    #[test]
    fn stats_come_only_from_named_rows() {
        // Shifting a row outside the stats subset must not change the encoding.
        let mut data = vec![record(80.0, -10.0), record(120.0, -14.0), record(999.0, 50.0)];
        let enc_a = encode(&data, &[0, 1]).unwrap();
        data[2] = record(123456.0, -999.0);
        let enc_b = encode(&data, &[0, 1]).unwrap();
        assert_eq!(enc_a[0].x, enc_b[0].x);
        assert_eq!(enc_a[1].x, enc_b[1].x);
    }

    #[test]
    fn empty_stats_source_errors() {
        let data = vec![record(80.0, -10.0)];
        assert!(matches!(encode(&data, &[]), Err(DataError::EmptyStatsSource)));
        assert!(matches!(
            encode(&data, &[3]),
            Err(DataError::StatsIndexOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn standardizer_round_trip() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let st = Standardizer::fit(&rows).unwrap();
        let t = st.transform(&rows);
        assert_abs_diff_eq!(t[0][0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1][0], 1.0, epsilon = 1e-12);
        assert_eq!(t[0][1], 0.0); // zero-variance column
    }
}
