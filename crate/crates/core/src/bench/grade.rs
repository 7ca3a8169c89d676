//! Grading detector reports against the benchmark manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BenchVariant, BenchmarkCase, ExpectedFinding};
use crate::error::{Error, Result};
use crate::ingest::Category;

pub const REPORT_HEADER: [&str; 6] = ["tool", "file", "start_line", "end_line", "rule", "message"];

/// One reported finding. Line numbers are `None` when the row had none or
/// they did not parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub file: String,
    pub start_line: Option<usize>,
    pub end_line: Option<usize>,
    pub rule: String,
    pub message: String,
}

impl ReportRow {
    fn lines(&self) -> Option<(usize, usize)> {
        match (self.start_line, self.end_line) {
            (Some(s), Some(e)) if s >= 1 && s <= e => Some((s, e)),
            _ => None,
        }
    }

    fn is_tool_error(&self) -> bool {
        self.lines().is_none() || matches!(self.rule.to_ascii_uppercase().as_str(), "ERROR" | "TOOL_ERROR")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolReport {
    pub tool: String,
    pub rows: Vec<ReportRow>,
}

impl ToolReport {
    pub fn empty(tool: &str) -> Self {
        ToolReport { tool: tool.into(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER).expect("in-memory write");
        for r in &self.rows {
            let s = r.start_line.map(|x| x.to_string()).unwrap_or_default();
            let e = r.end_line.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([&self.tool, &r.file, &s, &e, &r.rule, &r.message]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Read a report CSV. Rows are grouped per tool, tools in first-seen order.
/// A wrong header or broken CSV is fatal; bad line numbers are kept as
/// `None` and later grade as `TOOL_ERROR`.
pub fn parse_tool_reports(text: &str, path: &str) -> Result<Vec<ToolReport>> {
    let malformed = |row: usize, message: String| Error::MalformedReport { path: path.into(), row, message };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != REPORT_HEADER {
        return Err(malformed(1, format!("expected header {}, found {}", REPORT_HEADER.join(","), got.join(","))));
    }
    let mut reports: Vec<ToolReport> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| malformed(row, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim().to_string();
        let line = |k: usize| field(k).parse::<usize>().ok();
        let tool = field(0);
        if tool.is_empty() {
            return Err(malformed(row, "empty tool name".into()));
        }
        let r = ReportRow { file: field(1), start_line: line(2), end_line: line(3), rule: field(4), message: field(5) };
        match reports.iter_mut().find(|t| t.tool == tool) {
            Some(t) => t.rows.push(r),
            None => reports.push(ToolReport { tool, rows: vec![r] }),
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Detected,
    Partial,
    Undetected,
    ToolError,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Detected => "DETECTED",
            Verdict::Partial => "PARTIAL",
            Verdict::Undetected => "UNDETECTED",
            Verdict::ToolError => "TOOL_ERROR",
        }
    }

    pub fn glyph(self) -> &'static str {
        match self {
            Verdict::Detected => "✔",
            Verdict::Partial => "◐",
            Verdict::Undetected => "✘",
            Verdict::ToolError => "⊘",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub case_id: String,
    pub category: Category,
    pub verdict: Verdict,
}

/// Words other tools use for the same misuse. Matched case-insensitively
/// against the reported rule and message.
fn keywords(rule_id: &str) -> &'static [&'static str] {
    match rule_id {
        "R1" => &["DES", "RC2", "RC4", "BLOWFISH", "BROKEN", "WEAK", "INSECURE_ALGORITHM", "RISKY"],
        "R2" => &["OID", "DES", "RC2", "RC4", "BROKEN", "WEAK"],
        "R3" => &["ECB"],
        "R4" => &["ECB", "DEFAULT", "MODE"],
        "R5" => &["CBC", "PADDING", "ORACLE"],
        "R6" => &["PKCS1", "OAEP"],
        "R7" | "R9" => &["TRANSFORMATION", "ALGORITHM"],
        "R8" => &["NATIVE", "UNRESOLVED", "DYNAMIC"],
        "K1" | "K2" => &["KEY", "HARDCODED", "HARD-CODED", "CONSTANT"],
        _ if rule_id.starts_with('F') => &["TRUST", "X509", "CERTIFICATE", "SSL", "TLS"],
        _ => &[],
    }
}

fn compatible(row: &ReportRow, expected: &ExpectedFinding) -> bool {
    if row.rule.eq_ignore_ascii_case(&expected.rule_id) {
        return true;
    }
    let hay = format!("{} {}", row.rule, row.message).to_ascii_uppercase();
    keywords(&expected.rule_id).iter().any(|k| hay.contains(k))
}

/// True when one path is the other with some leading directories.
fn same_file(reported: &str, variant: &str) -> bool {
    let r = reported.replace('\\', "/");
    let longer_ends = |a: &str, b: &str| a == b || (a.ends_with(b) && a[..a.len() - b.len()].ends_with('/'));
    !r.is_empty() && (longer_ends(&r, variant) || longer_ends(variant, &r))
}

fn touches(row: &ReportRow, v: &BenchVariant) -> bool {
    same_file(&row.file, &v.file)
}

fn overlaps(row: &ReportRow, v: &BenchVariant) -> bool {
    row.lines().is_some_and(|(s, e)| s <= v.end_line && v.start_line <= e)
}

fn grade_case(case: &BenchmarkCase, report: &ToolReport) -> Verdict {
    let rows: Vec<&ReportRow> =
        report.rows.iter().filter(|r| case.variants.iter().any(|v| touches(r, v))).collect();
    if rows.iter().any(|r| r.is_tool_error()) {
        return Verdict::ToolError;
    }
    let mut total = 0;
    let mut matched = 0;
    let mut wrong = false;
    for v in &case.variants {
        let near: Vec<&&ReportRow> = rows.iter().filter(|r| touches(r, v) && overlaps(r, v)).collect();
        for e in &v.expected {
            total += 1;
            if near.iter().any(|r| compatible(r, e)) {
                matched += 1;
            }
        }
        wrong |= near.iter().any(|r| !v.expected.iter().any(|e| compatible(r, e)));
    }
    if total > 0 && matched == total {
        Verdict::Detected
    } else if matched > 0 || wrong {
        Verdict::Partial
    } else {
        Verdict::Undetected
    }
}

/// One verdict per case, in case order.
pub fn grade(cases: &[BenchmarkCase], report: &ToolReport) -> Vec<DetectionVerdict> {
    cases
        .iter()
        .map(|c| DetectionVerdict { case_id: c.case_id.clone(), category: c.category, verdict: grade_case(c, report) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchTable {
    pub csv: String,
    pub text: String,
}

/// Case × tool matrix. Rows follow the table order of the case list no
/// matter how the verdicts are ordered; with no tools only the header is
/// emitted.
pub fn summarize(columns: &[(String, Vec<DetectionVerdict>)]) -> BenchTable {
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["category".to_string(), "case_id".to_string()];
    header.extend(columns.iter().map(|(t, _)| t.clone()));
    csv_out.write_record(&header).expect("in-memory write");

    let width = super::CASE_IDS.iter().map(|(_, id)| id.len()).max().unwrap_or(0) + 2;
    let mut text = format!("{:<12}{:<width$}", "category", "case");
    for (t, _) in columns {
        let _ = write!(text, "  {t}");
    }
    text.push('\n');
    if columns.is_empty() {
        let csv = String::from_utf8(csv_out.into_inner().expect("flush")).expect("utf-8");
        return BenchTable { csv, text };
    }

    let lookup: Vec<BTreeMap<(Category, &str), Verdict>> = columns
        .iter()
        .map(|(_, vs)| vs.iter().map(|v| ((v.category, v.case_id.as_str()), v.verdict)).collect())
        .collect();
    for (category, id) in super::CASE_IDS {
        let cat = match category {
            Category::Restrictive => "restrictive",
            Category::Flexible => "flexible",
        };
        let mut record = vec![cat.to_string(), id.to_string()];
        let _ = write!(text, "{cat:<12}{id:<width$}");
        for (col, (tool, _)) in lookup.iter().zip(columns) {
            let v = col.get(&(category, id)).copied();
            record.push(v.map(Verdict::as_str).unwrap_or("").to_string());
            let glyph = v.map(Verdict::glyph).unwrap_or("-");
            let _ = write!(text, "  {glyph:<w$}", w = tool.chars().count());
        }
        text.truncate(text.trim_end().len());
        text.push('\n');
        csv_out.write_record(&record).expect("in-memory write");
    }
    text.push_str("legend: ✔ detected, ◐ partial, ✘ undetected, ⊘ error\n");
    let csv = String::from_utf8(csv_out.into_inner().expect("flush")).expect("utf-8");
    BenchTable { csv, text }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::build_cases;

    fn row(file: &str, s: usize, e: usize, rule: &str) -> ReportRow {
        ReportRow { file: file.into(), start_line: Some(s), end_line: Some(e), rule: rule.into(), message: String::new() }
    }

    #[test]
    fn empty_report_is_all_undetected() {
        let cases = build_cases(7).unwrap();
        let v = grade(&cases, &ToolReport::empty("none"));
        assert_eq!(v.len(), 23);
        assert!(v.iter().all(|v| v.verdict == Verdict::Undetected));
    }

    #[test]
    fn one_of_two_misuses_is_partial() {
        let cases = build_cases(7).unwrap();
        let bas64 = cases.iter().find(|c| c.case_id == "BAS64").unwrap();
        let v = &bas64.variants[0];
        assert_eq!(v.expected.len(), 2);
        let report = ToolReport { tool: "t".into(), rows: vec![row(&v.file, v.start_line, v.end_line, "R1")] };
        assert_eq!(grade(std::slice::from_ref(bas64), &report)[0].verdict, Verdict::Partial);
        let mut both = report.clone();
        both.rows.push(row(&format!("/abs/corpus/{}", v.file), v.start_line, v.start_line, "CBC mode"));
        assert_eq!(grade(std::slice::from_ref(bas64), &both)[0].verdict, Verdict::Detected);
    }

    #[test]
    fn wrong_misuse_is_partial_and_bad_rows_are_errors() {
        let cases = build_cases(7).unwrap();
        let empty = cases.iter().find(|c| c.case_id == "EMPTY").unwrap();
        let v = &empty.variants[0];
        let wrong = ToolReport { tool: "t".into(), rows: vec![row(&v.file, v.start_line, v.start_line, "R3")] };
        assert_eq!(grade(std::slice::from_ref(empty), &wrong)[0].verdict, Verdict::Partial);
        let mut bad = row(&v.file, 1, 1, "F1");
        bad.start_line = None;
        let err = ToolReport { tool: "t".into(), rows: vec![bad] };
        assert_eq!(grade(std::slice::from_ref(empty), &err)[0].verdict, Verdict::ToolError);
        // rows for other files leave the case alone
        let other = ToolReport { tool: "t".into(), rows: vec![row("x/Other.java", 1, 1, "F1")] };
        assert_eq!(grade(std::slice::from_ref(empty), &other)[0].verdict, Verdict::Undetected);
    }

    #[test]
    fn csv_parsing() {
        let text = "tool,file,start_line,end_line,rule,message\nA,x/Y.java,3,3,R1,\"weak, cipher\"\nB,x/Y.java,n/a,3,R3,\nA,x/Z.java,1,2,F1,\n";
        let r = parse_tool_reports(text, "r.csv").unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].tool, "A");
        assert_eq!(r[0].rows.len(), 2);
        assert_eq!(r[0].rows[0].message, "weak, cipher");
        assert_eq!(r[1].rows[0].start_line, None);
        assert_eq!(parse_tool_reports(&r[0].to_csv(), "again").unwrap()[0], r[0]);

        match parse_tool_reports("tool,file\n", "bad.csv") {
            Err(Error::MalformedReport { row: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_tool_reports("tool,file,start_line,end_line,rule,message\nA,b,1,1,R1\n", "bad.csv") {
            Err(Error::MalformedReport { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_shapes() {
        let empty = summarize(&[]);
        assert_eq!(empty.csv, "category,case_id\n");
        assert_eq!(empty.text.lines().count(), 1);

        let cases = build_cases(3).unwrap();
        let mut verdicts = grade(&cases, &ToolReport::empty("t"));
        verdicts[0].verdict = Verdict::Detected;
        verdicts[22].verdict = Verdict::Partial;
        verdicts.reverse();
        let t = summarize(&[("t".into(), verdicts)]);
        let rows: Vec<&str> = t.csv.lines().collect();
        assert_eq!(rows.len(), 24);
        assert_eq!(rows[1], "restrictive,STRING/OID,DETECTED");
        assert_eq!(rows[6], "restrictive,STROP,UNDETECTED");
        assert_eq!(rows[23], "flexible,STROP,PARTIAL");
        assert!(t.text.contains('✔') && t.text.contains('◐') && t.text.contains('✘'));
    }
}
