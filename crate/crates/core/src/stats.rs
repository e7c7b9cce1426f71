//! Evaluation statistics over recorded accuracies.
//!
//! Every observed accuracy `a` becomes an error `1 - a`. A group of errors is
//! summarised by its RMSE, the Bessel-corrected standard deviation `σ`, the
//! standard error `σ / √n` and the interval `RMSE ± t(1 - α/2, n - 1) · SE`.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{Ledger, TrialRecord};
use crate::special::{student_t_cdf, student_t_upper};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("accuracy {0} at index {1} outside [0, 1]")]
    AccuracyOutOfRange(f64, usize),
    #[error("sample is empty")]
    Empty,
    #[error("need at least 2 observations, got {0}")]
    TooFew(usize),
    #[error("probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("degrees of freedom must be >= 1")]
    BadDegreesOfFreedom,
    #[error("alpha {0} outside (0, 1)")]
    BadAlpha(f64),
    #[error("unknown group field `{0}` (expected model, epochs, source or task)")]
    UnknownGroupField(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Per-trial errors `1 - accuracy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    errors: Vec<f64>,
}

impl ErrorSample {
    pub fn from_errors(errors: Vec<f64>) -> Self {
        Self { errors }
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }
}

pub fn errors_from_accuracies(accuracies: &[f64]) -> Result<ErrorSample, StatsError> {
    let errors = accuracies
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if (0.0..=1.0).contains(&a) {
                Ok(1.0 - a)
            } else {
                Err(StatsError::AccuracyOutOfRange(a, i))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(ErrorSample { errors })
}

pub fn rmse(sample: &ErrorSample) -> Result<f64, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    let sum_sq: f64 = sample.errors.iter().map(|e| e * e).sum();
    Ok((sum_sq / sample.len() as f64).sqrt())
}

/// Bessel-corrected standard deviation, accumulated with Welford's update.
pub fn sample_std(sample: &ErrorSample) -> Result<f64, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in sample.errors.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok((m2 / (n - 1) as f64).sqrt())
}

/// Quantile of Student's t distribution, found by bisection on the CDF to an
/// absolute tolerance of 1e-10.
pub fn t_quantile(p: f64, df: u32) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::BadProbability(p));
    }
    if df == 0 {
        return Err(StatsError::BadDegreesOfFreedom);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let df = df as f64;
    // work in the upper tail to avoid cancellation near p = 1
    let tail = if p > 0.5 { 1.0 - p } else { p };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_t_upper(hi, df) > tail {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if student_t_upper(mid, df) > tail {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    debug_assert!((student_t_cdf(t, df) - (1.0 - tail)).abs() < 1e-6);
    Ok(if p > 0.5 { t } else { -t })
}

/// Critical value times standard error, i.e. the interval half-width.
pub fn ci_half_width(std: f64, n: usize, alpha: f64) -> Result<f64, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    if n < 2 {
        return Err(StatsError::TooFew(n));
    }
    let t = t_quantile(1.0 - alpha / 2.0, (n - 1) as u32)?;
    Ok(t * std / (n as f64).sqrt())
}

pub fn confidence_interval(sample: &ErrorSample, alpha: f64) -> Result<(f64, f64), StatsError> {
    let center = rmse(sample)?;
    let hw = ci_half_width(sample_std(sample)?, sample.len(), alpha)?;
    Ok((center - hw, center + hw))
}

/// Highest accuracy; ties go to the earliest `created_at`, then ledger order.
pub fn best_trial<'a, I>(records: I) -> Result<&'a TrialRecord, StatsError>
where
    I: IntoIterator<Item = &'a TrialRecord>,
{
    let mut best: Option<&TrialRecord> = None;
    for r in records {
        best = match best {
            None => Some(r),
            Some(b) if r.accuracy > b.accuracy => Some(r),
            Some(b) if r.accuracy == b.accuracy && r.created_at < b.created_at => Some(r),
            keep => keep,
        };
    }
    best.ok_or(StatsError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupField {
    Model,
    Epochs,
    Source,
    Task,
}

impl std::str::FromStr for GroupField {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "model" | "model_id" => Ok(GroupField::Model),
            "epochs" => Ok(GroupField::Epochs),
            "source" => Ok(GroupField::Source),
            "task" => Ok(GroupField::Task),
            other => Err(StatsError::UnknownGroupField(other.into())),
        }
    }
}

impl GroupField {
    fn label(self, r: &TrialRecord) -> String {
        match self {
            GroupField::Model => r.model_id.clone(),
            GroupField::Epochs => r.epochs.to_string(),
            GroupField::Source => r.source.to_string(),
            GroupField::Task => r.task.to_string(),
        }
    }
}

/// Parses a comma-separated field list such as `model,epochs,source`.
pub fn parse_group_by(spec: &str) -> Result<Vec<GroupField>, StatsError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Summary statistics for one group. The deviation, standard error and interval
/// are absent for single-record groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: String,
    pub n: usize,
    pub rmse: f64,
    pub std: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub best_accuracy: f64,
    pub best_rmse: f64,
}

impl ReportRow {
    pub fn from_accuracies(
        group: impl Into<String>,
        accuracies: &[f64],
        alpha: f64,
    ) -> Result<Self, StatsError> {
        let sample = errors_from_accuracies(accuracies)?;
        let n = sample.len();
        let rmse = rmse(&sample)?;
        let best_accuracy = accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (std, se, ci_lo, ci_hi) = if n >= 2 {
            let std = sample_std(&sample)?;
            let hw = ci_half_width(std, n, alpha)?;
            (
                Some(std),
                Some(std / (n as f64).sqrt()),
                Some(rmse - hw),
                Some(rmse + hw),
            )
        } else {
            (None, None, None, None)
        };
        Ok(ReportRow {
            group: group.into(),
            n,
            rmse,
            std,
            se,
            ci_lo,
            ci_hi,
            best_accuracy,
            best_rmse: 1.0 - best_accuracy,
        })
    }

    /// The row as it appears after a CSV round trip (six decimals).
    pub fn rounded(&self) -> Self {
        let r = |v: f64| format!("{v:.6}").parse::<f64>().expect("formatted float");
        ReportRow {
            group: self.group.clone(),
            n: self.n,
            rmse: r(self.rmse),
            std: self.std.map(r),
            se: self.se.map(r),
            ci_lo: self.ci_lo.map(r),
            ci_hi: self.ci_hi.map(r),
            best_accuracy: r(self.best_accuracy),
            best_rmse: r(self.best_rmse),
        }
    }
}

/// One row per distinct combination of `group_by` values, sorted by label.
/// Labels join the field values with `/`; an empty field list gives a single
/// `all` group.
pub fn aggregate_report(
    ledger: &Ledger,
    group_by: &[GroupField],
    alpha: f64,
) -> Result<Vec<ReportRow>, StatsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::BadAlpha(alpha));
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in ledger.records() {
        let label = if group_by.is_empty() {
            "all".to_string()
        } else {
            group_by
                .iter()
                .map(|f| f.label(r))
                .collect::<Vec<_>>()
                .join("/")
        };
        groups.entry(label).or_default().push(r.accuracy);
    }
    groups
        .into_iter()
        .map(|(label, accs)| ReportRow::from_accuracies(label, &accs, alpha))
        .collect()
}

pub const CSV_HEADER: [&str; 9] = [
    "group",
    "n",
    "rmse",
    "std",
    "se",
    "ci_lo",
    "ci_hi",
    "best_accuracy",
    "best_rmse",
];

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn fixed_opt(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}

pub fn write_csv<W: io::Write>(rows: &[ReportRow], out: W) -> Result<(), StatsError> {
    let csv_err = |e: csv::Error| StatsError::Csv(e.to_string());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.group.clone(),
            row.n.to_string(),
            fixed(row.rmse),
            fixed_opt(row.std),
            fixed_opt(row.se),
            fixed_opt(row.ci_lo),
            fixed_opt(row.ci_hi),
            fixed(row.best_accuracy),
            fixed(row.best_rmse),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<ReportRow>, StatsError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| StatsError::Csv(e.to_string()))?
        .clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(StatsError::Csv(format!("unexpected header {headers:?}")));
    }
    let num = |s: &str| -> Result<f64, StatsError> {
        s.parse().map_err(|_| StatsError::Csv(format!("bad number `{s}`")))
    };
    let opt = |s: &str| -> Result<Option<f64>, StatsError> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| StatsError::Csv(e.to_string()))?;
        rows.push(ReportRow {
            group: rec[0].to_string(),
            n: rec[1]
                .parse()
                .map_err(|_| StatsError::Csv(format!("bad count `{}`", &rec[1])))?,
            rmse: num(&rec[2])?,
            std: opt(&rec[3])?,
            se: opt(&rec[4])?,
            ci_lo: opt(&rec[5])?,
            ci_hi: opt(&rec[6])?,
            best_accuracy: num(&rec[7])?,
            best_rmse: num(&rec[8])?,
        });
    }
    Ok(rows)
}

/// Aligned plain-text rendering of a report.
pub struct ReportTable<'a>(pub &'a [ReportRow]);

impl fmt::Display for ReportTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = [
            "group", "n", "rmse", "std", "se", "ci", "best_acc", "best_rmse",
        ];
        let cells: Vec<[String; 8]> = self
            .0
            .iter()
            .map(|r| {
                let ci = match (r.ci_lo, r.ci_hi) {
                    (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}]"),
                    _ => "-".into(),
                };
                let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or("-".into());
                [
                    r.group.clone(),
                    r.n.to_string(),
                    format!("{:.3}", r.rmse),
                    opt(r.std),
                    opt(r.se),
                    ci,
                    format!("{:.4}", r.best_accuracy),
                    format!("{:.3}", r.best_rmse),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[&str]| -> fmt::Result {
            for (i, (c, w)) in row.iter().zip(widths).enumerate() {
                if i == 0 {
                    write!(f, "{c:<w$}")?;
                } else {
                    write!(f, "  {c:>w$}")?;
                }
            }
            writeln!(f)
        };
        line(f, &header)?;
        for row in &cells {
            line(f, &row.iter().map(String::as_str).collect::<Vec<_>>())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Source, Task};
    use crate::space::HyperparameterSet;
    use approx::assert_abs_diff_eq;

    fn sample(v: &[f64]) -> ErrorSample {
        ErrorSample::from_errors(v.to_vec())
    }

    #[test]
    fn error_transform() {
        assert_eq!(errors_from_accuracies(&[1.0, 1.0]).unwrap().errors(), [0.0, 0.0]);
        assert_eq!(errors_from_accuracies(&[0.0]).unwrap().errors(), [1.0]);
        let e = errors_from_accuracies(&[0.6, 0.4]).unwrap();
        assert_abs_diff_eq!(e.errors()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(e.errors()[1], 0.6, epsilon = 1e-15);
        assert!(errors_from_accuracies(&[0.5, 1.2]).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&sample(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(rmse(&sample(&[0.5])).unwrap(), 0.5);
        assert_abs_diff_eq!(rmse(&sample(&[0.4, 0.6])).unwrap(), 0.26f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(rmse(&sample(&[0.4, 0.6])).unwrap(), 0.509902, epsilon = 1e-6);
        assert_eq!(rmse(&sample(&[])), Err(StatsError::Empty));
    }

    #[test]
    fn std_examples() {
        assert_abs_diff_eq!(sample_std(&sample(&[0.4, 0.6])).unwrap(), 0.02f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sample_std(&sample(&[0.3, 0.3, 0.3])).unwrap(), 0.0, epsilon = 1e-15);
        let base = [0.1, 0.25, 0.7, 0.33];
        let scaled: Vec<f64> = base.iter().map(|x| x * 0.5).collect();
        assert_abs_diff_eq!(
            sample_std(&sample(&scaled)).unwrap(),
            0.5 * sample_std(&sample(&base)).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(sample_std(&sample(&[0.2])), Err(StatsError::TooFew(1)));
    }

    #[test]
    fn t_quantile_table() {
        assert_abs_diff_eq!(t_quantile(0.975, 1).unwrap(), 12.7062, epsilon = 1e-4);
        assert_abs_diff_eq!(t_quantile(0.975, 10).unwrap(), 2.2281, epsilon = 1e-4);
        assert_abs_diff_eq!(t_quantile(0.975, 100).unwrap(), 1.9840, epsilon = 1e-4);
        assert_abs_diff_eq!(t_quantile(0.995, 3).unwrap(), 5.8409, epsilon = 1e-4);
        assert_abs_diff_eq!(t_quantile(0.95, 5).unwrap(), 2.0150, epsilon = 1e-4);
        for df in [1, 2, 7, 30, 1000] {
            assert_eq!(t_quantile(0.5, df).unwrap(), 0.0);
            let up = t_quantile(0.9, df).unwrap();
            assert_abs_diff_eq!(t_quantile(0.1, df).unwrap(), -up, epsilon = 1e-12);
        }
        // df = 1 is Cauchy: tan(pi (p - 1/2))
        let exact = (std::f64::consts::PI * 0.475).tan();
        assert_abs_diff_eq!(t_quantile(0.975, 1).unwrap(), exact, epsilon = 1e-9);
    }

    #[test]
    fn t_quantile_errors() {
        assert!(t_quantile(0.0, 3).is_err());
        assert!(t_quantile(1.0, 3).is_err());
        assert!(t_quantile(f64::NAN, 3).is_err());
        assert_eq!(t_quantile(0.9, 0), Err(StatsError::BadDegreesOfFreedom));
    }

    #[test]
    fn t_quantile_monotone() {
        let ps = [0.55, 0.6, 0.75, 0.9, 0.95, 0.975, 0.99, 0.999];
        for df in [1, 2, 5, 20, 200] {
            let qs: Vec<f64> = ps.iter().map(|&p| t_quantile(p, df).unwrap()).collect();
            assert!(qs.windows(2).all(|w| w[0] < w[1]), "df={df} {qs:?}");
        }
        for p in [0.6, 0.9, 0.975] {
            let qs: Vec<f64> = (1..60).map(|df| t_quantile(p, df).unwrap()).collect();
            assert!(qs.windows(2).all(|w| w[0] > w[1]), "p={p}");
        }
    }

    #[test]
    fn confidence_interval_examples() {
        let (lo, hi) = confidence_interval(&sample(&[0.4, 0.6]), 0.05).unwrap();
        let center = 0.26f64.sqrt();
        let hw = t_quantile(0.975, 1).unwrap() * 0.02f64.sqrt() / 2f64.sqrt();
        assert_abs_diff_eq!(hw, 1.27062, epsilon = 1e-5);
        assert_abs_diff_eq!(lo, center - hw, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, center + hw, epsilon = 1e-12);

        let (lo, hi) = confidence_interval(&sample(&[0.3; 5]), 0.05).unwrap();
        assert_abs_diff_eq!(lo, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.3, epsilon = 1e-12);
        assert!(confidence_interval(&sample(&[0.3]), 0.05).is_err());
    }

    #[test]
    fn half_width_shrinks_with_n() {
        let widths: Vec<f64> = (2..=1000).map(|n| ci_half_width(0.2, n, 0.05).unwrap()).collect();
        assert!(widths.windows(2).all(|w| w[0] > w[1]));
    }

    fn record(model: &str, epochs: u32, acc: f64, source: Source) -> TrialRecord {
        TrialRecord::new(
            model,
            Task::ImageClassification,
            epochs,
            HyperparameterSet::new(0.01, 0.9, 16),
            acc,
            source,
        )
    }

    #[test]
    fn best_trial_examples() {
        let rs = [
            record("A", 1, 0.3, Source::Tpe),
            record("A", 1, 0.7, Source::Tpe),
            record("A", 1, 0.5, Source::Tpe),
        ];
        assert_eq!(best_trial(&rs).unwrap().accuracy, 0.7);

        let mut tie = [record("A", 1, 0.7, Source::Tpe), record("A", 1, 0.7, Source::Tpe)];
        assert_eq!(best_trial(&tie).unwrap().uid, tie[0].uid);
        // earlier timestamp wins even when it comes later in the list
        tie[1].created_at = tie[0].created_at - chrono::Duration::seconds(5);
        assert_eq!(best_trial(&tie).unwrap().uid, tie[1].uid);
        // identical timestamps fall back to list order
        tie[1].created_at = tie[0].created_at;
        assert_eq!(best_trial(&tie).unwrap().uid, tie[0].uid);

        assert_eq!(best_trial(&[]).unwrap_err(), StatsError::Empty);
    }

    fn fixture_ledger() -> Ledger {
        let mut l = Ledger::new();
        for (m, acc) in [
            ("ResNet", 0.61),
            ("VGG", 0.42),
            ("ResNet", 0.55),
            ("VGG", 0.47),
            ("ResNet", 0.7),
            ("AlexNet", 0.3),
        ] {
            l.append(record(m, 1, acc, Source::Tpe)).unwrap();
        }
        l
    }

    #[test]
    fn report_matches_scalar_ops() {
        let l = fixture_ledger();
        let rows = aggregate_report(&l, &[GroupField::Model, GroupField::Epochs], 0.05).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.group.as_str()).collect();
        assert_eq!(labels, ["AlexNet/1", "ResNet/1", "VGG/1"]);

        let resnet = &rows[1];
        let s = errors_from_accuracies(&[0.61, 0.55, 0.7]).unwrap();
        assert_eq!(resnet.n, 3);
        assert_eq!(resnet.rmse, rmse(&s).unwrap());
        assert_eq!(resnet.std, Some(sample_std(&s).unwrap()));
        let (lo, hi) = confidence_interval(&s, 0.05).unwrap();
        assert_eq!((resnet.ci_lo, resnet.ci_hi), (Some(lo), Some(hi)));
        assert_eq!(resnet.best_accuracy, 0.7);
        assert!(resnet.best_rmse <= resnet.rmse);

        let single = &rows[0];
        assert_eq!(single.n, 1);
        assert_eq!((single.std, single.ci_lo, single.ci_hi), (None, None, None));
        let csv = to_csv(&rows);
        assert!(csv.lines().nth(1).unwrap().starts_with("AlexNet/1,1,0.700000,,,,,0.300000,0.700000"));
    }

    #[test]
    fn empty_ledger_gives_empty_report() {
        assert!(aggregate_report(&Ledger::new(), &[GroupField::Model], 0.05)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let rows = aggregate_report(&fixture_ledger(), &[GroupField::Model], 0.05).unwrap();
        let text = to_csv(&rows);
        assert!(text.starts_with("group,n,rmse,std,se,ci_lo,ci_hi,best_accuracy,best_rmse\n"));
        let parsed = read_csv(text.as_bytes()).unwrap();
        let rounded: Vec<ReportRow> = rows.iter().map(ReportRow::rounded).collect();
        assert_eq!(parsed, rounded);
        assert_eq!(to_csv(&parsed), text);
    }

    #[test]
    fn group_by_parsing() {
        assert_eq!(
            parse_group_by("model,epochs,source").unwrap(),
            [GroupField::Model, GroupField::Epochs, GroupField::Source]
        );
        assert!(parse_group_by("model,colour").is_err());
    }

    #[test]
    fn table_one_shaped_rendering() {
        // display fixture: published summary values, not recomputed
        let row = |g: &str, rmse: f64, std: f64, lo: f64, hi: f64| ReportRow {
            group: g.into(),
            n: 0,
            rmse,
            std: Some(std),
            se: None,
            ci_lo: Some(lo),
            ci_hi: Some(hi),
            best_accuracy: 1.0 - rmse,
            best_rmse: rmse,
        };
        let rows = [
            row("Optuna/All", 0.589, 0.219, 0.581, 0.597),
            row("Optuna/Best", 0.416, 0.115, 0.375, 0.456),
            row("LLM/Fine-tuning 1", 0.563, 0.182, 0.556, 0.570),
            row("LLM/Fine-tuning 2", 0.567, 0.159, 0.563, 0.572),
            row("LLM/Best", 0.404, 0.118, 0.358, 0.480),
            row("LLM/One-shot", 0.533, 0.162, 0.470, 0.596),
        ];
        let table = ReportTable(&rows).to_string();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("Optuna/All "));
        assert!(lines[1].contains("0.589") && lines[1].contains("[0.581, 0.597]"));
        assert!(lines[6].starts_with("LLM/One-shot "));
        assert!(lines[6].contains("[0.470, 0.596]"));
        let width = lines[0].len();
        assert!(lines.iter().all(|l| l.len() == width));
    }
}
