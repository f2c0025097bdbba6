use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BidError, Result};

/// Suffix of a result file that is still being written or whose run failed.
pub const PARTIAL_SUFFIX: &str = ".partial";

/// One measured value for one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub conditions: BTreeMap<String, String>,
    pub metric: String,
    pub value: f64,
    pub episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

impl ResultRow {
    pub fn to_json_line(&self) -> Result<String> {
        if !self.value.is_finite() {
            return Err(BidError::InvalidValue(format!("metric {} is not finite", self.metric)));
        }
        serde_json::to_string(self).map_err(|e| BidError::Io(e.to_string()))
    }
}

/// `k=v;k=v` in key order.
pub fn canonical_labels(labels: &BTreeMap<String, String>) -> String {
    labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Parses line-delimited result rows, skipping blank lines.
pub fn read_rows(text: &str) -> Result<Vec<ResultRow>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| BidError::Parse { line: i + 1, msg: e.to_string() }))
        .collect()
}

/// Appends rows to `<path>.partial` and renames it to `path` on [`finish`].
/// A failed run leaves the `.partial` file behind as a marker.
///
/// [`finish`]: RowWriter::finish
pub struct RowWriter {
    target: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
}

impl RowWriter {
    pub fn create(target: &Path) -> Result<Self> {
        if let Some(dir) = target.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut partial = target.as_os_str().to_owned();
        partial.push(PARTIAL_SUFFIX);
        let partial = PathBuf::from(partial);
        let out = BufWriter::new(File::create(&partial)?);
        Ok(RowWriter { target: target.to_path_buf(), partial, out })
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_json_line()?)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn partial_path(&self) -> &Path {
        &self.partial
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        std::fs::rename(&self.partial, &self.target)?;
        Ok(self.target)
    }
}

/// Mean and standard error of one metric for one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub conditions: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Groups rows by experiment, condition and metric. Output is sorted by that key.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(BidError::Empty("no result rows to summarize".into()));
    }
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if !r.value.is_finite() {
            return Err(BidError::InvalidValue(format!("metric {} is not finite", r.metric)));
        }
        groups
            .entry((r.experiment.clone(), canonical_labels(&r.conditions), r.metric.clone()))
            .or_default()
            .push(r.value);
    }
    Ok(groups
        .into_iter()
        .map(|((experiment, conditions, metric), mut values)| {
            // sorting makes the floating-point sums independent of row order
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            SummaryRow { experiment, conditions, metric, n, mean, stderr }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in summary {
        w.serialize(row).map_err(|e| BidError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(cond: &str, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: "e".into(),
            seed: 0,
            conditions: [("c".to_string(), cond.to_string())].into(),
            metric: metric.into(),
            value,
            episodes: 1,
            wall_time: None,
        }
    }

    #[test]
    fn single_row_has_zero_stderr() {
        let s = summarize(&[row("a", "m", 0.7)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].mean, s[0].stderr, s[0].n), (0.7, 0.0, 1));
    }

    #[test]
    fn two_rows_average() {
        let s = summarize(&[row("a", "m", 0.2), row("a", "m", 0.4)]).unwrap();
        assert!((s[0].mean - 0.3).abs() < 1e-15);
        assert!((s[0].stderr - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn json_round_trip_and_no_wall_time_key() {
        let r = row("x", "tvd", 0.125);
        let line = r.to_json_line().unwrap();
        assert!(!line.contains("wall_time"));
        assert_eq!(read_rows(&format!("{line}\n\n{line}\n")).unwrap(), vec![r.clone(), r]);
        assert!(row("x", "m", f64::NAN).to_json_line().is_err());
        assert!(read_rows("{not json").is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = summarize(&[row("a", "m", 1.0), row("b", "m", 2.0)]).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "experiment,conditions,metric,n,mean,stderr");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn writer_renames_on_finish_and_leaves_marker_otherwise() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("sub/r.jsonl");
        let mut w = RowWriter::create(&target).unwrap();
        w.append(&row("a", "m", 1.0)).unwrap();
        let partial = w.partial_path().to_path_buf();
        assert!(partial.exists() && !target.exists());
        w.finish().unwrap();
        assert!(target.exists() && !partial.exists());

        let other = dir.path().join("q.jsonl");
        let mut w = RowWriter::create(&other).unwrap();
        assert!(w.append(&row("a", "m", f64::INFINITY)).is_err());
        drop(w);
        assert!(!other.exists());
        assert!(dir.path().join("q.jsonl.partial").exists());
    }

    proptest! {
        #[test]
        fn values_round_trip_bit_exactly(v in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            let r = row("a", "m", v);
            let back = read_rows(&r.to_json_line().unwrap()).unwrap();
            prop_assert_eq!(back[0].value.to_bits(), v.to_bits());
        }

        #[test]
        fn summary_is_permutation_invariant(
            values in prop::collection::vec((0usize..3, 0usize..2, -5.0..5.0f64), 1..40),
            seed in any::<u64>(),
        ) {
            let rows: Vec<ResultRow> = values
                .iter()
                .map(|&(c, m, v)| row(&c.to_string(), &format!("m{m}"), v))
                .collect();
            let mut shuffled = rows.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(summarize(&rows).unwrap(), summarize(&shuffled).unwrap());
        }
    }
}
