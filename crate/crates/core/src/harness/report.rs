//! Report rows, CSV output and cumulative accuracy curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::Pipeline;

pub const REPORT_HEADER: &str = "pair,pipeline,basis,k,d,checkpoint,mean_err,time_ms";

/// One result line: a pair evaluated with one pipeline, basis size and
/// descriptor count at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub pair: String,
    pub pipeline: Pipeline,
    pub basis: String,
    pub k: Option<usize>,
    pub d: Option<usize>,
    /// `final`, `init` or `zo<k>`; `error` for failed rows.
    pub checkpoint: String,
    /// Mean geodesic error, or the error kind of a failure.
    pub outcome: std::result::Result<f64, String>,
    pub time_ms: u64,
    pub per_vertex: Vec<f64>,
}

impl ReportRow {
    pub fn is_error(&self) -> bool {
        self.outcome.is_err()
    }

    fn csv_fields(&self) -> [String; 8] {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let err = match &self.outcome {
            Ok(e) => format!("{e:.6}"),
            Err(kind) => kind.clone(),
        };
        [
            self.pair.clone(),
            self.pipeline.name().to_string(),
            self.basis.clone(),
            opt(self.k),
            opt(self.d),
            self.checkpoint.clone(),
            err,
            self.time_ms.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    /// Sorted by pair id; rows of one pair keep their evaluation order.
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }

    /// 0 when every row succeeded, 2 when some failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures() > 0 {
            2
        } else {
            0
        }
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_fields().join(","));
            s.push('\n');
        }
        s
    }

    /// Per-vertex errors pooled over all successful rows.
    pub fn pooled_errors(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.per_vertex.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialityRow {
    pub radius: f64,
    /// Source vertices left after the cut (the full count at radius 0).
    pub survivors: Option<usize>,
    pub row: ReportRow,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialityReport {
    /// Sorted by pair id, then by radius in configuration order.
    pub rows: Vec<PartialityRow>,
}

impl PartialityReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.row.is_error()).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failures() > 0 {
            2
        } else {
            0
        }
    }

    /// Per-pair rows: the report columns plus `radius` and `survivors`.
    pub fn csv(&self) -> String {
        let mut s = String::from("pair,pipeline,basis,k,d,checkpoint,radius,survivors,mean_err,time_ms\n");
        for r in &self.rows {
            let f = r.row.csv_fields();
            let surv = r.survivors.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{},{},{}",
                f[0], f[1], f[2], f[3], f[4], f[5], r.radius, surv, f[6], f[7]
            );
        }
        s
    }

    /// One line per radius and configuration, averaged over the pairs that
    /// succeeded; `failed` counts the others.
    pub fn table_csv(&self) -> String {
        type Key = (u64, String, String, String, String, String);
        let mut groups: BTreeMap<(usize, Key), (Vec<f64>, Vec<usize>, usize)> = BTreeMap::new();
        let mut order: BTreeMap<Key, usize> = BTreeMap::new();
        for r in &self.rows {
            let f = r.row.csv_fields();
            let checkpoint = if r.row.is_error() { String::new() } else { f[5].clone() };
            let key: Key = (r.radius.to_bits(), f[1].clone(), f[2].clone(), f[3].clone(), f[4].clone(), checkpoint);
            let next = order.len();
            let pos = *order.entry(key.clone()).or_insert(next);
            let g = groups.entry((pos, key)).or_default();
            match (&r.row.outcome, r.survivors) {
                (Ok(e), Some(n)) => {
                    g.0.push(*e);
                    g.1.push(n);
                }
                _ => g.2 += 1,
            }
        }
        let mut s = String::from("radius,pipeline,basis,k,d,checkpoint,pairs,failed,mean_survivors,mean_err\n");
        for ((_, (radius, pipeline, basis, k, d, checkpoint)), (errs, surv, failed)) in groups {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (ms, me) = if errs.is_empty() {
                (String::new(), String::new())
            } else {
                let sv: Vec<f64> = surv.iter().map(|&n| n as f64).collect();
                (format!("{:.1}", mean(&sv)), format!("{:.6}", mean(&errs)))
            };
            let _ = writeln!(
                s,
                "{:.6},{pipeline},{basis},{k},{d},{checkpoint},{},{failed},{ms},{me}",
                f64::from_bits(radius),
                errs.len()
            );
        }
        s
    }
}

/// Fraction of errors `<= t` for each threshold `t`.
pub fn error_curve(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / sorted.len() as f64)
        .collect()
}

/// `threshold,accuracy` lines for [`error_curve`].
pub fn error_curve_csv(errors: &[f64], thresholds: &[f64]) -> String {
    let mut s = String::from("threshold,accuracy\n");
    for (t, a) in thresholds.iter().zip(error_curve(errors, thresholds)) {
        let _ = writeln!(s, "{t:.6},{a:.6}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_counts() {
        assert_eq!(error_curve(&[0.1, 0.3], &[0.0, 0.2, 0.4]), vec![0.0, 0.5, 1.0]);
        assert_eq!(error_curve(&[0.0; 5], &[0.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(error_curve_csv(&[0.5], &[1.0]), "threshold,accuracy\n1.000000,1.000000\n");
    }

    #[test]
    fn row_csv_layout() {
        let ok = ReportRow {
            pair: "a-b".into(),
            pipeline: Pipeline::OptimalC,
            basis: "LBO".into(),
            k: Some(20),
            d: None,
            checkpoint: "final".into(),
            outcome: Ok(1.0 / 3.0),
            time_ms: 0,
            per_vertex: vec![],
        };
        let bad = ReportRow { outcome: Err("EmptyResult".into()), checkpoint: "error".into(), k: None, ..ok.clone() };
        let rep = ExperimentReport { rows: vec![ok, bad] };
        assert_eq!(
            rep.csv(),
            "pair,pipeline,basis,k,d,checkpoint,mean_err,time_ms\n\
             a-b,optimal_c,LBO,20,,final,0.333333,0\n\
             a-b,optimal_c,LBO,,,error,EmptyResult,0\n"
        );
        assert_eq!(rep.exit_code(), 2);
    }
}
