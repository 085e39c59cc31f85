//! CSV output. Each file starts with a `#schema=<name>/v1` line followed by
//! the header row; numbers are written with 10 significant digits and
//! line endings are LF, so equal inputs give byte-identical files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::clearing::{check_departure_order, clearing_costs_of, ClearingResult};
use crate::experiments::{SweepRow, ThresholdCurve, TradeoffPoint};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{schema} row {row} has {got} fields, expected {expected}")]
    RowWidth { schema: &'static str, row: usize, got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Threshold,
    Sweep,
    Clearing,
    Tradeoff,
}

impl Schema {
    pub fn name(self) -> &'static str {
        match self {
            Self::Threshold => "threshold",
            Self::Sweep => "sweep",
            Self::Clearing => "clearing",
            Self::Tradeoff => "tradeoff",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Threshold => &["a", "J_short", "se_short", "J_long", "se_long"],
            Self::Sweep => &["param", "value", "policy", "J", "se", "improvement_pct"],
            Self::Clearing => &["i", "j", "a", "c1", "c2", "diff", "lemma2_pass"],
            Self::Tradeoff => &["alpha", "beta", "gamma", "a", "rule_chosen", "avg_queue_all", "avg_queue_hi"],
        }
    }

    pub fn tag(self) -> String {
        format!("#schema={}/v1", self.name())
    }
}

/// `%.10g`-style formatting: 10 significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e10)`.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..10).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (9 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// Writes `rows` under `schema` to any sink.
pub fn write_rows<W: Write>(sink: W, schema: Schema, rows: &[Vec<String>]) -> Result<(), ReportError> {
    let mut sink = sink;
    writeln!(sink, "{}", schema.tag())?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record(schema.columns())?;
    let expected = schema.columns().len();
    for (k, row) in rows.iter().enumerate() {
        if row.len() != expected {
            return Err(ReportError::RowWidth { schema: schema.name(), row: k, got: row.len(), expected });
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, schema: Schema, rows: &[Vec<String>]) -> Result<(), ReportError> {
    let file = BufWriter::new(File::create(path)?);
    write_rows(file, schema, rows)
}

/// `key=value` lines, one per entry, in the given order.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<(), ReportError> {
    let mut file = BufWriter::new(File::create(path)?);
    for (k, v) in entries {
        writeln!(file, "{k}={v}")?;
    }
    file.flush()?;
    Ok(())
}

/// Manifest path next to a CSV: `out.csv` -> `out.csv.manifest`.
pub fn manifest_path(csv_path: &Path) -> std::path::PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".manifest");
    name.into()
}

pub fn threshold_rows(curve: &ThresholdCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| {
            vec![
                fmt_sig(p.a),
                fmt_sig(p.shortest.mean),
                fmt_sig(p.shortest.se),
                fmt_sig(p.longest.mean),
                fmt_sig(p.longest.se),
            ]
        })
        .collect()
}

/// One line per policy per grid value. The baseline policy of each row has
/// an empty improvement field, as do degenerate rows.
pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .flat_map(|row| {
            row.results.iter().map(move |res| {
                let imp = row.improvement_of(res.policy).and_then(|i| i.pct);
                vec![
                    row.param.name().to_string(),
                    fmt_sig(row.value),
                    res.policy.label(),
                    fmt_sig(res.estimate.mean),
                    fmt_sig(res.estimate.se),
                    fmt_opt(imp),
                ]
            })
        })
        .collect()
}

pub fn clearing_rows(result: &ClearingResult, a_grid: &[f64]) -> Vec<Vec<String>> {
    let pass = check_departure_order(result).holds();
    let (i, j) = (result.instance.i(), result.instance.j());
    a_grid
        .iter()
        .map(|&a| {
            let c = clearing_costs_of(result, a);
            vec![
                i.to_string(),
                j.to_string(),
                fmt_sig(a),
                fmt_sig(c.c1),
                fmt_sig(c.c2),
                fmt_sig(c.diff()),
                pass.to_string(),
            ]
        })
        .collect()
}

pub fn tradeoff_rows(points: &[TradeoffPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                fmt_sig(p.load.alpha),
                fmt_sig(p.load.beta),
                fmt_sig(p.load.gamma),
                fmt_sig(p.a),
                p.rule.name().to_string(),
                fmt_sig(p.avg_queue_all.mean),
                fmt_sig(p.avg_queue_hi.mean),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::{simulate_clearing, ClearingInstance};
    use proptest::prelude::*;

    fn render(schema: Schema, rows: &[Vec<String>]) -> String {
        let mut buf = Vec::new();
        write_rows(&mut buf, schema, rows).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.1), "0.1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_sig(12345.678), "12345.678");
        assert_eq!(fmt_sig(9.99999999996), "10");
        assert_eq!(fmt_sig(1.5e-7), "1.5e-7");
        assert_eq!(fmt_sig(-2.5e12), "-2.5e12");
        assert_eq!(fmt_sig(123456789012.0), "1.23456789e11");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }

    #[test]
    fn empty_rows_give_header_only() {
        for schema in [Schema::Threshold, Schema::Sweep, Schema::Clearing, Schema::Tradeoff] {
            let text = render(schema, &[]);
            let lines: Vec<&str> = text.lines().collect();
            assert_eq!(lines.len(), 2);
            assert_eq!(lines[0], schema.tag());
            assert_eq!(lines[1], schema.columns().join(","));
            assert!(!text.contains('\r'));
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let err = write_rows(Vec::new(), Schema::Threshold, &[vec!["1".into()]]).unwrap_err();
        assert!(matches!(err, ReportError::RowWidth { got: 1, expected: 5, .. }));
    }

    #[test]
    fn clearing_csv_round_trips() {
        let result = simulate_clearing(&ClearingInstance::unit(2, 3).unwrap());
        let rows = clearing_rows(&result, &[0.0, 1.0]);
        let text = render(Schema::Clearing, &rows);
        let body = text.split_once('\n').unwrap().1;
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let parsed: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
        assert_eq!(parsed.len(), 2);
        assert_eq!(&parsed[0][3], "6");
        assert_eq!(&parsed[1][3], "12");
        assert_eq!(&parsed[1][4], "11");
        assert_eq!(&parsed[1][6], "true");
    }

    #[test]
    fn files_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let result = simulate_clearing(&ClearingInstance::unit(2, 4).unwrap());
        let rows = clearing_rows(&result, &[0.0, 0.5, 1.0]);
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_csv(&p1, Schema::Clearing, &rows).unwrap();
        write_csv(&p2, Schema::Clearing, &rows).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let m = manifest_path(&p1);
        write_manifest(&m, &[("seed".into(), "7".into()), ("reps".into(), "3".into())]).unwrap();
        assert_eq!(std::fs::read_to_string(&m).unwrap(), "seed=7\nreps=3\n");
    }

    proptest! {
        #[test]
        fn formatted_values_parse_back(x in prop::num::f64::NORMAL) {
            let back: f64 = fmt_sig(x).parse().unwrap();
            prop_assert!(((back - x) / x).abs() <= 5e-10);
        }
    }
}
