//! Coverage matrix and fault-proneness vector.
//!
//! A coverage matrix holds one row per test case and one column per code
//! unit (statement, method, file, or any other granularity the profiler
//! emits). Entries are coverage fractions in `[0, 1]`; a binary profiler
//! simply writes 0 or 1. The fault-proneness vector assigns each unit a
//! probability-like score in `[0, 1]`, usually produced by the defect
//! prediction pipeline in [`crate::defect`].
//!
//! Two serialized forms are supported and round-trip exactly:
//!
//! * CSV: a header (`test_id,<unit ids...>` or just the unit ids) followed
//!   by one row per test, the test id first.
//! * JSON: `{ "test_ids": [...], "unit_ids": [...], "rows": [[...], ...] }`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized coverage formats accepted by [`CoverageMatrix::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageFormat {
    Csv,
    Json,
}

/// Row-major matrix of coverage fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMatrix {
    test_ids: Vec<String>,
    unit_ids: Vec<String>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoverageJson {
    test_ids: Vec<String>,
    unit_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn check_unique(ids: &[String]) -> Result<()> {
    let mut seen = BTreeMap::new();
    for id in ids {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn check_fraction(value: f64, context: &str) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Domain(format!(
            "{context} must lie in [0, 1], got {value}"
        )));
    }
    Ok(value)
}

impl CoverageMatrix {
    /// Builds a matrix from parallel id lists and per-test rows.
    pub fn new(
        test_ids: Vec<String>,
        unit_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if test_ids.is_empty() {
            return Err(Error::Parse("coverage matrix has no test rows".into()));
        }
        if unit_ids.is_empty() {
            return Err(Error::Parse("coverage matrix has no unit columns".into()));
        }
        if rows.len() != test_ids.len() {
            return Err(Error::Parse(format!(
                "{} test ids but {} rows",
                test_ids.len(),
                rows.len()
            )));
        }
        check_unique(&test_ids)?;
        check_unique(&unit_ids)?;

        let n_units = unit_ids.len();
        let mut data = Vec::with_capacity(test_ids.len() * n_units);
        for (row, id) in rows.iter().zip(&test_ids) {
            if row.len() != n_units {
                return Err(Error::Parse(format!(
                    "row for `{id}` has {} values, expected {n_units}",
                    row.len()
                )));
            }
            for value in row {
                data.push(check_fraction(*value, &format!("coverage of `{id}`"))?);
            }
        }
        Ok(Self {
            test_ids,
            unit_ids,
            data,
        })
    }

    pub fn n_tests(&self) -> usize {
        self.test_ids.len()
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn test_ids(&self) -> &[String] {
        &self.test_ids
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn test_index(&self, id: &str) -> Option<usize> {
        self.test_ids.iter().position(|t| t == id)
    }

    pub fn unit_index(&self, id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == id)
    }

    /// Coverage fraction of unit `unit` by test `test`. Panics on out of
    /// range indices; use [`Self::total_coverage`] and friends for checked
    /// access.
    pub fn entry(&self, test: usize, unit: usize) -> f64 {
        assert!(test < self.n_tests() && unit < self.n_units());
        self.data[test * self.n_units() + unit]
    }

    /// Full coverage row of one test.
    pub fn row(&self, test: usize) -> &[f64] {
        let m = self.n_units();
        &self.data[test * m..(test + 1) * m]
    }

    fn check_test(&self, test: usize) -> Result<()> {
        if test >= self.n_tests() {
            return Err(Error::Index {
                what: "test",
                index: test,
                len: self.n_tests(),
            });
        }
        Ok(())
    }

    /// Sum of the coverage row: the plain "how much does this test touch"
    /// score used by the total strategy.
    pub fn total_coverage(&self, test: usize) -> Result<f64> {
        self.check_test(test)?;
        Ok(self.row(test).iter().sum())
    }

    /// Fault-proneness weighted coverage: each unit's coverage scaled by
    /// its score, then summed.
    pub fn fp_coverage(&self, test: usize, fp: &FaultPronenessVector) -> Result<f64> {
        self.check_test(test)?;
        if fp.len() != self.n_units() {
            return Err(Error::DimensionMismatch(format!(
                "fault-proneness vector has {} scores, matrix has {} units",
                fp.len(),
                self.n_units()
            )));
        }
        Ok(self
            .row(test)
            .iter()
            .zip(fp.scores())
            .map(|(c, p)| c * p)
            .sum())
    }

    /// Reads a matrix in the given serialized format.
    pub fn load<R: Read>(reader: R, format: CoverageFormat) -> Result<Self> {
        match format {
            CoverageFormat::Csv => Self::from_csv(reader),
            CoverageFormat::Json => Self::from_json(reader),
        }
    }

    /// Parses the CSV form. The header either names the test-id column
    /// explicitly (`test_id,u1,u2,...`) or lists only the unit ids; both
    /// are accepted, and data rows always start with the test id.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = csv.records();

        let header = match records.next() {
            Some(rec) => rec.map_err(|e| Error::Parse(e.to_string()))?,
            None => return Err(Error::Parse("empty coverage CSV".into())),
        };
        let header: Vec<String> = header.iter().map(str::to_owned).collect();
        if header.is_empty() {
            return Err(Error::Parse("empty coverage CSV header".into()));
        }

        let mut rows_raw: Vec<csv::StringRecord> = Vec::new();
        for rec in records {
            rows_raw.push(rec.map_err(|e| Error::Parse(e.to_string()))?);
        }
        if rows_raw.is_empty() {
            return Err(Error::Parse("coverage matrix has no test rows".into()));
        }

        let data_width = rows_raw[0].len();
        let unit_ids: Vec<String> = if header[0] == "test_id" {
            header[1..].to_vec()
        } else if header.len() + 1 == data_width {
            header
        } else {
            return Err(Error::Parse(format!(
                "coverage header has {} fields but data rows have {}; \
                 expected a `test_id` column or a bare unit-id header",
                header.len(),
                data_width
            )));
        };

        let mut test_ids = Vec::with_capacity(rows_raw.len());
        let mut rows = Vec::with_capacity(rows_raw.len());
        for rec in &rows_raw {
            if rec.len() != unit_ids.len() + 1 {
                return Err(Error::Parse(format!(
                    "row `{}` has {} fields, expected {}",
                    rec.get(0).unwrap_or(""),
                    rec.len(),
                    unit_ids.len() + 1
                )));
            }
            test_ids.push(rec[0].to_owned());
            let mut row = Vec::with_capacity(unit_ids.len());
            for field in rec.iter().skip(1) {
                let value: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad coverage value `{field}`")))?;
                row.push(value);
            }
            rows.push(row);
        }
        Self::new(test_ids, unit_ids, rows)
    }

    /// Parses the JSON form.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        let raw: CoverageJson =
            serde_json::from_reader(reader).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.test_ids, raw.unit_ids, raw.rows)
    }

    /// Writes the CSV form with an explicit `test_id` header column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut header = vec!["test_id".to_owned()];
        header.extend(self.unit_ids.iter().cloned());
        csv.write_record(&header)
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (i, id) in self.test_ids.iter().enumerate() {
            let mut record = vec![id.clone()];
            record.extend(self.row(i).iter().map(|v| format!("{v}")));
            csv.write_record(&record)
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Writes the JSON form.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let raw = CoverageJson {
            test_ids: self.test_ids.clone(),
            unit_ids: self.unit_ids.clone(),
            rows: (0..self.n_tests()).map(|i| self.row(i).to_vec()).collect(),
        };
        serde_json::to_writer_pretty(writer, &raw).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Per-unit fault-proneness scores aligned with a matrix's unit columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPronenessVector {
    scores: Vec<f64>,
}

impl FaultPronenessVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        for (j, s) in scores.iter().enumerate() {
            check_fraction(*s, &format!("fault-proneness score #{j}"))?;
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, unit: usize) -> f64 {
        self.scores[unit]
    }

    /// Reads a `unit_id,score` CSV and aligns it with `unit_ids`. Every id
    /// in the file must exist in `unit_ids` and every unit must receive a
    /// score; anything unmatched is an error rather than a silent default.
    pub fn from_csv_reconciled<R: Read>(reader: R, unit_ids: &[String]) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut records = csv.records();

        let header = match records.next() {
            Some(rec) => rec.map_err(|e| Error::Parse(e.to_string()))?,
            None => return Err(Error::Parse("empty score CSV".into())),
        };
        if header.len() != 2 || &header[0] != "unit_id" || &header[1] != "score" {
            return Err(Error::Parse(
                "score CSV header must be `unit_id,score`".into(),
            ));
        }

        let mut by_id: BTreeMap<String, f64> = BTreeMap::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!(
                    "score row has {} fields, expected 2",
                    rec.len()
                )));
            }
            let id = rec[0].to_owned();
            let score: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad score `{}`", &rec[1])))?;
            check_fraction(score, &format!("score of `{id}`"))?;
            if by_id.insert(id.clone(), score).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }

        for id in by_id.keys() {
            if !unit_ids.iter().any(|u| u == id) {
                return Err(Error::UnknownUnit(id.clone()));
            }
        }
        let mut scores = Vec::with_capacity(unit_ids.len());
        for id in unit_ids {
            match by_id.get(id) {
                Some(s) => scores.push(*s),
                None => {
                    return Err(Error::MissingFaultProneness(format!(
                        "unit `{id}` has no score in the file"
                    )))
                }
            }
        }
        Ok(Self { scores })
    }

    /// Writes the `unit_id,score` CSV aligned with `unit_ids`.
    pub fn write_csv<W: Write>(&self, unit_ids: &[String], writer: W) -> Result<()> {
        if unit_ids.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} unit ids for {} scores",
                unit_ids.len(),
                self.len()
            )));
        }
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["unit_id", "score"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for (id, s) in unit_ids.iter().zip(&self.scores) {
            csv.write_record([id.as_str(), &format!("{s}")])
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[(&str, &[f64])], units: &[&str]) -> CoverageMatrix {
        CoverageMatrix::new(
            rows.iter().map(|(id, _)| (*id).to_owned()).collect(),
            units.iter().map(|u| (*u).to_owned()).collect(),
            rows.iter().map(|(_, r)| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn csv_with_bare_unit_header() {
        let text = "unit_a,unit_b\nt1,1,0\nt2,0.5,1\n";
        let m = CoverageMatrix::from_csv(text.as_bytes()).unwrap();
        assert_eq!(m.n_tests(), 2);
        assert_eq!(m.n_units(), 2);
        let t2 = m.test_index("t2").unwrap();
        let unit_a = m.unit_index("unit_a").unwrap();
        assert_eq!(m.entry(t2, unit_a), 0.5);
    }

    #[test]
    fn csv_with_explicit_test_id_header() {
        let text = "test_id,unit_a,unit_b\nt1,1,0\nt2,0.5,1\n";
        let m = CoverageMatrix::from_csv(text.as_bytes()).unwrap();
        assert_eq!(m.n_tests(), 2);
        assert_eq!(m.entry(1, 0), 0.5);
    }

    #[test]
    fn csv_value_above_one_is_rejected() {
        let text = "test_id,u\nt1,1.2\n";
        let err = CoverageMatrix::from_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "{err}");
    }

    #[test]
    fn csv_duplicate_test_id_is_rejected() {
        let text = "test_id,u\nt1,1\nt1,0\n";
        let err = CoverageMatrix::from_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "t1"));
    }

    #[test]
    fn csv_ragged_row_is_rejected() {
        let text = "test_id,u1,u2\nt1,1\n";
        let err = CoverageMatrix::from_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn json_round_trips_exactly() {
        let m = matrix(
            &[("t1", &[1.0, 0.25, 0.0]), ("t2", &[0.5, 0.5, 1.0])],
            &["a", "b", "c"],
        );
        let mut buf = Vec::new();
        m.write_json(&mut buf).unwrap();
        let back = CoverageMatrix::from_json(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn total_coverage_matches_fold_oracle() {
        let m = matrix(&[("t1", &[1.0, 0.0, 1.0]), ("t2", &[0.25, 0.5, 0.75])], &["a", "b", "c"]);
        assert_eq!(m.total_coverage(0).unwrap(), 2.0);
        let oracle: f64 = m.row(1).iter().fold(0.0, |acc, v| acc + v);
        assert_eq!(m.total_coverage(1).unwrap(), oracle);
        assert_eq!(oracle, 1.5);
    }

    #[test]
    fn total_coverage_checks_bounds() {
        let m = matrix(&[("t1", &[1.0])], &["a"]);
        assert!(matches!(
            m.total_coverage(1),
            Err(Error::Index { index: 1, .. })
        ));
    }

    #[test]
    fn fp_coverage_matches_loop_oracle() {
        let m = matrix(&[("t1", &[1.0, 0.0, 1.0])], &["a", "b", "c"]);
        let fp = FaultPronenessVector::new(vec![0.9, 0.9, 0.1]).unwrap();
        assert!((m.fp_coverage(0, &fp).unwrap() - 1.0).abs() < 1e-12);

        let m2 = matrix(&[("t1", &[0.2, 0.8])], &["a", "b"]);
        let fp2 = FaultPronenessVector::new(vec![0.5, 0.25]).unwrap();
        let mut oracle = 0.0;
        for j in 0..m2.n_units() {
            oracle += m2.entry(0, j) * fp2.get(j);
        }
        assert_eq!(m2.fp_coverage(0, &fp2).unwrap(), oracle);
        assert!((oracle - 0.3).abs() < 1e-12);

        let zero = FaultPronenessVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(m2.fp_coverage(0, &zero).unwrap(), 0.0);
    }

    #[test]
    fn fp_coverage_checks_vector_length() {
        let m = matrix(&[("t1", &[1.0, 0.0])], &["a", "b"]);
        let fp = FaultPronenessVector::new(vec![0.5]).unwrap();
        assert!(matches!(
            m.fp_coverage(0, &fp),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn score_csv_reconciles_by_id() {
        let units = vec!["b".to_owned(), "a".to_owned()];
        let text = "unit_id,score\na,0.25\nb,0.75\n";
        let fp = FaultPronenessVector::from_csv_reconciled(text.as_bytes(), &units).unwrap();
        assert_eq!(fp.scores(), &[0.75, 0.25]);

        let unknown = "unit_id,score\nzz,0.5\n";
        assert!(matches!(
            FaultPronenessVector::from_csv_reconciled(unknown.as_bytes(), &units),
            Err(Error::UnknownUnit(id)) if id == "zz"
        ));

        let partial = "unit_id,score\na,0.5\n";
        assert!(matches!(
            FaultPronenessVector::from_csv_reconciled(partial.as_bytes(), &units),
            Err(Error::MissingFaultProneness(_))
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(
            n in 1usize..6,
            m in 1usize..6,
            seed in 0u64..1000,
        ) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| {
                    // Quarter steps keep the text form short and exact.
                    (crate::rng::uniform_index(&mut rng, 5) as f64) * 0.25
                }).collect())
                .collect();
            let matrix = CoverageMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                (0..m).map(|j| format!("u{j}")).collect(),
                rows,
            ).unwrap();
            let mut buf = Vec::new();
            matrix.write_csv(&mut buf).unwrap();
            let back = CoverageMatrix::from_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&matrix, &back);
        }

        #[test]
        fn fp_coverage_never_exceeds_total(seed in 0u64..2000) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let n = 1 + crate::rng::uniform_index(&mut rng, 5);
            let m = 1 + crate::rng::uniform_index(&mut rng, 7);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| crate::rng::uniform_unit(&mut rng)).collect())
                .collect();
            let matrix = CoverageMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                (0..m).map(|j| format!("u{j}")).collect(),
                rows,
            ).unwrap();
            let fp = FaultPronenessVector::new(
                (0..m).map(|_| crate::rng::uniform_unit(&mut rng)).collect(),
            ).unwrap();
            for i in 0..n {
                let weighted = matrix.fp_coverage(i, &fp).unwrap();
                let total = matrix.total_coverage(i).unwrap();
                prop_assert!(weighted <= total + 1e-12);
                prop_assert!(weighted >= 0.0);
            }
        }

        #[test]
        fn halving_scores_halves_fp_coverage(seed in 0u64..2000) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let m = 1 + crate::rng::uniform_index(&mut rng, 7);
            let row: Vec<f64> = (0..m).map(|_| crate::rng::uniform_unit(&mut rng)).collect();
            let scores: Vec<f64> = (0..m).map(|_| crate::rng::uniform_unit(&mut rng)).collect();
            let matrix = CoverageMatrix::new(
                vec!["t".into()],
                (0..m).map(|j| format!("u{j}")).collect(),
                vec![row],
            ).unwrap();
            let fp = FaultPronenessVector::new(scores.clone()).unwrap();
            let half = FaultPronenessVector::new(scores.iter().map(|s| s * 0.5).collect()).unwrap();
            // Scaling by a power of two commutes with rounding, so this
            // holds exactly, not just approximately.
            prop_assert_eq!(
                matrix.fp_coverage(0, &half).unwrap(),
                matrix.fp_coverage(0, &fp).unwrap() * 0.5
            );
        }
    }
}
