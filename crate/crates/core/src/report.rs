//! Verification reports: an aligned text table and a line-oriented
//! structured format that parses back field for field.
//!
//! Structured schema `leibniz-report/1`: a header line
//! `schema=leibniz-report/1 scenario=".." seed=N records=N`, then one line per
//! record with the fields of [`Record`] in declaration order. Numbers carry
//! 12 significant digits; absent values are `none`; free text is quoted with
//! `\"`, `\\` and `\n` escapes. Wall time is not recorded so that reports
//! stay byte-identical across runs.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::leibniz::InclusionVerdict;
use crate::lipschitz::LipschitzReport;
use crate::verdict::Verdict;

pub const SCHEMA: &str = "leibniz-report/1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Record {
    pub id: String,
    pub verdict: Option<Verdict>,
    /// Accepted verdicts declared by the scenario.
    pub expected: Option<Vec<Verdict>>,
    pub max_violation: Option<f64>,
    pub reverse_violation: Option<f64>,
    pub tolerance: Option<f64>,
    pub modulus: Option<f64>,
    pub moduli: Vec<(String, f64)>,
    /// `(spacing, largest modulus)` per refinement level.
    pub levels: Vec<(f64, f64)>,
    pub exact: Option<bool>,
    pub witness: Option<String>,
    pub grid: Option<String>,
    pub note: Option<String>,
}

/// Rounds to the 12 significant digits that are printed.
pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    (!x.is_nan()).then_some(round12(x))
}

impl Record {
    pub fn new(id: impl Into<String>, verdict: Verdict) -> Self {
        Record {
            id: id.into(),
            verdict: Some(verdict),
            ..Record::default()
        }
    }

    pub fn verdict(&self) -> Verdict {
        self.verdict.unwrap_or(Verdict::Inconclusive)
    }

    pub fn matched(&self) -> Option<bool> {
        self.expected.as_ref().map(|e| e.contains(&self.verdict()))
    }

    pub fn from_inclusion(v: &InclusionVerdict) -> Self {
        let mut note: Vec<String> = Vec::new();
        if let Some(h) = &v.failed_hypothesis {
            note.push(format!("failed hypothesis: {h}"));
        }
        note.extend(v.notes.iter().cloned());
        Record {
            id: v.rule.as_str().to_string(),
            verdict: Some(v.verdict),
            max_violation: finite_or_none(v.max_violation),
            reverse_violation: v.reverse_violation.and_then(finite_or_none),
            tolerance: Some(round12(v.tolerance)),
            exact: Some(v.exact),
            witness: v.witness.clone(),
            grid: (!v.comparisons.is_empty() || !v.rhs.is_empty())
                .then(|| format!("{} comparison(s); rhs: {}", v.comparisons.len(), v.rhs)),
            note: (!note.is_empty()).then(|| note.join("; ")),
            ..Record::default()
        }
    }

    pub fn from_lipschitz(id: &str, r: &LipschitzReport) -> Self {
        use crate::lipschitz::ModulusField;
        let moduli = match &r.modulus {
            ModulusField::PerNode(v) => v.iter().map(|(k, l)| (k.clone(), round12(*l))).collect(),
            ModulusField::Scalar(_) => vec![],
        };
        Record {
            id: id.to_string(),
            verdict: Some(r.verdict),
            modulus: finite_or_none(r.modulus.max()),
            moduli,
            levels: r
                .levels
                .iter()
                .map(|l| {
                    (
                        round12(l.spacing),
                        round12(l.per_node.iter().copied().fold(0.0, f64::max)),
                    )
                })
                .collect(),
            witness: r.witness.clone(),
            grid: Some(r.grid.clone()),
            note: r.note.clone(),
            ..Record::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub records: Vec<Record>,
}

/// Exit status classes of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

impl Report {
    /// 1 if an expectation is missed or an unexpected record is violated or
    /// failed a precondition, else 3 if an unexpected record is
    /// inconclusive, else 0.
    pub fn exit_code(&self) -> i32 {
        let mut inconclusive = false;
        for r in &self.records {
            match r.matched() {
                Some(false) => return EXIT_FAILED,
                Some(true) => {}
                None => match r.verdict() {
                    Verdict::Violated | Verdict::PreconditionFailed => return EXIT_FAILED,
                    Verdict::Inconclusive => inconclusive = true,
                    _ => {}
                },
            }
        }
        if inconclusive {
            EXIT_INCONCLUSIVE
        } else {
            EXIT_OK
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Structured,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(Format::Text),
            "structured" => Ok(Format::Structured),
            _ => Err(format!("unknown format '{s}' (text|structured)")),
        }
    }
}

pub fn emit_report(report: &Report, format: Format) -> String {
    match format {
        Format::Text => emit_text(report),
        Format::Structured => emit_structured(report),
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.11e}")
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "none".into())
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn opt_text(s: &Option<String>) -> String {
    s.as_deref().map(quote).unwrap_or_else(|| "none".into())
}

fn verdict_list(v: &[Verdict]) -> String {
    v.iter().map(|v| v.as_str()).collect::<Vec<_>>().join("|")
}

fn emit_structured(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "schema={SCHEMA} scenario={} seed={} records={}",
        quote(&report.scenario),
        report.seed,
        report.records.len()
    );
    for r in &report.records {
        let moduli = if r.moduli.is_empty() {
            "none".to_string()
        } else {
            r.moduli
                .iter()
                .map(|(k, l)| format!("{k}:{}", num(*l)))
                .collect::<Vec<_>>()
                .join(";")
        };
        let levels = if r.levels.is_empty() {
            "none".to_string()
        } else {
            r.levels
                .iter()
                .map(|(h, l)| format!("{}:{}", num(*h), num(*l)))
                .collect::<Vec<_>>()
                .join(";")
        };
        let _ = writeln!(
            out,
            "id={} verdict={} expected={} matched={} max_violation={} reverse_violation={} tolerance={} modulus={} moduli={} levels={} exact={} witness={} grid={} note={}",
            r.id,
            r.verdict.map(|v| v.as_str()).unwrap_or("none"),
            r.expected.as_deref().map(verdict_list).unwrap_or_else(|| "none".into()),
            r.matched().map(|m| m.to_string()).unwrap_or_else(|| "none".into()),
            opt_num(r.max_violation),
            opt_num(r.reverse_violation),
            opt_num(r.tolerance),
            opt_num(r.modulus),
            moduli,
            levels,
            r.exact.map(|m| m.to_string()).unwrap_or_else(|| "none".into()),
            opt_text(&r.witness),
            opt_text(&r.grid),
            opt_text(&r.note),
        );
    }
    out
}

fn emit_text(report: &Report) -> String {
    let mut out = format!("scenario {}  seed {}\n", report.scenario, report.seed);
    let header = [
        "check",
        "verdict",
        "expected",
        "max_violation",
        "tolerance",
        "modulus",
        "note",
    ];
    let rows: Vec<[String; 7]> = report
        .records
        .iter()
        .map(|r| {
            let expected = match (&r.expected, r.matched()) {
                (Some(e), Some(m)) => format!(
                    "{} ({})",
                    verdict_list(e),
                    if m { "ok" } else { "MISMATCH" }
                ),
                _ => "-".into(),
            };
            let short =
                |x: Option<f64>| x.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
            [
                r.id.clone(),
                r.verdict().to_string(),
                expected,
                short(r.max_violation),
                short(r.tolerance),
                short(r.modulus),
                r.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.len());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                let _ = write!(s, "{c:<w$}  ", w = widths[i]);
            }
        }
        s.trim_end().to_string()
    };
    out.push_str(&line(&header.map(String::from)));
    out.push('\n');
    out.push_str(&"-".repeat(widths[..6].iter().sum::<usize>() + 12 + widths[6].min(40)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Splits `key=value` pairs, honouring quoted values.
fn fields(line: &str, lineno: usize) -> Result<Vec<(String, String, bool)>> {
    let err = |col: usize, m: &str| Error::Parse {
        line: lineno,
        column: col + 1,
        message: m.to_string(),
    };
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        if chars[i] == ' ' {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i] != '=' && chars[i] != ' ' {
            i += 1;
        }
        if i >= chars.len() || chars[i] != '=' {
            return Err(err(start, "expected key=value"));
        }
        let key: String = chars[start..i].iter().collect();
        i += 1;
        let mut value = String::new();
        let quoted = i < chars.len() && chars[i] == '"';
        if quoted {
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(start, "unterminated quote")),
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        match chars.get(i + 1) {
                            Some('n') => value.push('\n'),
                            Some(&c @ ('"' | '\\')) => value.push(c),
                            _ => return Err(err(i, "bad escape")),
                        }
                        i += 2;
                    }
                    Some(&c) => {
                        value.push(c);
                        i += 1;
                    }
                }
            }
        } else {
            while i < chars.len() && chars[i] != ' ' {
                value.push(chars[i]);
                i += 1;
            }
        }
        out.push((key, value, quoted));
    }
    Ok(out)
}

pub fn parse_structured(src: &str) -> Result<Report> {
    let bad = |line: usize, m: String| Error::Parse {
        line,
        column: 1,
        message: m,
    };
    let mut lines = src.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| bad(1, "empty report".into()))?;
    let head = fields(head, 1)?;
    let get = |k: &str| head.iter().find(|f| f.0 == k).map(|f| f.1.clone());
    if get("schema").as_deref() != Some(SCHEMA) {
        return Err(bad(1, format!("unsupported schema {:?}", get("schema"))));
    }
    let scenario = get("scenario").ok_or_else(|| bad(1, "missing scenario".into()))?;
    let seed = get("seed")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(1, "missing seed".into()))?;
    let count: usize = get("records")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(1, "missing record count".into()))?;
    let mut records = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut r = Record::default();
        for (k, v, quoted) in fields(line, ln)? {
            let none = v == "none" && !quoted;
            let number = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| bad(ln, format!("bad number '{v}' for {k}")))
            };
            let verdict = |v: &str| Verdict::from_str(v).map_err(|e| bad(ln, e));
            let pairs = |v: &str| -> Result<Vec<(String, String)>> {
                v.split(';')
                    .map(|p| {
                        p.rsplit_once(':')
                            .map(|(a, b)| (a.to_string(), b.to_string()))
                            .ok_or_else(|| bad(ln, format!("bad pair '{p}' in {k}")))
                    })
                    .collect()
            };
            match k.as_str() {
                "id" => r.id = v,
                "verdict" => r.verdict = if none { None } else { Some(verdict(&v)?) },
                "expected" => {
                    r.expected = if none {
                        None
                    } else {
                        Some(v.split('|').map(verdict).collect::<Result<_>>()?)
                    }
                }
                // Derived from verdict and expected.
                "matched" => {}
                "max_violation" => r.max_violation = if none { None } else { Some(number(&v)?) },
                "reverse_violation" => {
                    r.reverse_violation = if none { None } else { Some(number(&v)?) }
                }
                "tolerance" => r.tolerance = if none { None } else { Some(number(&v)?) },
                "modulus" => r.modulus = if none { None } else { Some(number(&v)?) },
                "moduli" if !none => {
                    r.moduli = pairs(&v)?
                        .into_iter()
                        .map(|(a, b)| Ok((a, number(&b)?)))
                        .collect::<Result<_>>()?
                }
                "levels" if !none => {
                    r.levels = pairs(&v)?
                        .into_iter()
                        .map(|(a, b)| Ok((number(&a)?, number(&b)?)))
                        .collect::<Result<_>>()?
                }
                "moduli" | "levels" => {}
                "exact" => {
                    r.exact = match v.as_str() {
                        "none" => None,
                        "true" => Some(true),
                        "false" => Some(false),
                        _ => return Err(bad(ln, format!("bad boolean '{v}'"))),
                    }
                }
                "witness" => r.witness = (!none).then_some(v),
                "grid" => r.grid = (!none).then_some(v),
                "note" => r.note = (!none).then_some(v),
                other => return Err(bad(ln, format!("unknown field '{other}'"))),
            }
        }
        records.push(r);
    }
    if records.len() != count {
        return Err(bad(
            1,
            format!("header declares {count} records, found {}", records.len()),
        ));
    }
    Ok(Report {
        scenario,
        seed,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            scenario: "demo \"quoted\"".into(),
            seed: 7,
            records: vec![
                Record {
                    max_violation: Some(0.0),
                    tolerance: Some(1e-6),
                    exact: Some(true),
                    expected: Some(vec![Verdict::Holds]),
                    ..Record::new("limiting_union", Verdict::Holds)
                },
                Record {
                    modulus: Some(f64::INFINITY),
                    moduli: vec![
                        ("t1".into(), round12(2f64.sqrt())),
                        ("t2".into(), f64::INFINITY),
                    ],
                    levels: vec![(0.125, round12(2f64.sqrt())), (0.0625, 2.0)],
                    witness: Some("x=[0] back\\slash".into()),
                    grid: Some("nested 2^-k k=3..10".into()),
                    note: Some("line one\nline two; a=b".into()),
                    expected: Some(vec![Verdict::Violated, Verdict::Inconclusive]),
                    ..Record::new("quasi_lipschitz", Verdict::Inconclusive)
                },
            ],
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = Report {
            scenario: "e".into(),
            seed: 1,
            records: vec![],
        };
        let s = emit_report(&r, Format::Structured);
        assert_eq!(s.lines().count(), 1);
        assert_eq!(parse_structured(&s).unwrap(), r);
        assert_eq!(emit_report(&r, Format::Text).lines().count(), 3);
        assert_eq!(r.exit_code(), EXIT_OK);
    }

    #[test]
    fn single_holds_record() {
        let r = Report {
            scenario: "s".into(),
            seed: 0,
            records: vec![Record::new("equality_case", Verdict::Holds)],
        };
        let s = emit_report(&r, Format::Structured);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains(" verdict=holds "));
    }

    #[test]
    fn structured_round_trip() {
        let r = sample();
        let s = emit_report(&r, Format::Structured);
        assert_eq!(parse_structured(&s).unwrap(), r);
        assert!(s.contains("1.41421356237e0"));
    }

    #[test]
    fn twelve_digit_rounding_is_stable() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, -2.5e-300] {
            let y = round12(x);
            assert_eq!(round12(y), y);
            assert_eq!(num(y).parse::<f64>().unwrap(), y);
        }
    }

    #[test]
    fn exit_codes() {
        let mut r = sample();
        assert_eq!(r.exit_code(), EXIT_OK);
        r.records[1].verdict = Some(Verdict::HoldsOnGrid);
        assert_eq!(r.exit_code(), EXIT_FAILED);
        r.records[1].expected = None;
        assert_eq!(r.exit_code(), EXIT_OK);
        r.records[1].verdict = Some(Verdict::Inconclusive);
        assert_eq!(r.exit_code(), EXIT_INCONCLUSIVE);
        r.records[0].expected = None;
        r.records[0].verdict = Some(Verdict::PreconditionFailed);
        assert_eq!(r.exit_code(), EXIT_FAILED);
    }

    #[test]
    fn text_table_is_aligned() {
        let t = emit_report(&sample(), Format::Text);
        let lines: Vec<&str> = t.lines().collect();
        let col = lines[1].find("verdict").unwrap();
        assert_eq!(lines[3].find("holds").unwrap(), col);
        assert!(lines[4].contains("violated|inconclusive (ok)"));
    }
}
