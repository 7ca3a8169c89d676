//! Benchmark corpus generation and grading of detector reports.
//!
//! [`generate_corpus`] writes one directory per case plus `manifest.json`.
//! Reports from any tool are read as CSV ([`parse_tool_reports`]) and graded
//! per case with [`grade`]; [`summarize`] renders the case × tool matrix.

mod grade;
mod templates;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{canonical_signatures, extract_sites, ApiKind, Category};
use crate::report::{run_scan, ScanConfig};
use crate::rules::Severity;
use crate::syntax::{parse_unit, ParseStatus};

pub use grade::{
    grade, parse_tool_reports, summarize, BenchTable, DetectionVerdict, ReportRow, ToolReport, Verdict,
    REPORT_HEADER,
};

pub const MANIFEST: &str = "manifest.json";

/// Case ids in table order. `STROP` appears once per category.
pub const CASE_IDS: [(Category, &str); 23] = {
    let mut out = [(Category::Restrictive, ""); 23];
    let mut i = 0;
    while i < 23 {
        out[i] = (templates::CASES[i].category, templates::CASES[i].case_id);
        i += 1;
    }
    out
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedFinding {
    pub rule_id: String,
    pub severity: Severity,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub effective_value: Option<String>,
    pub evasive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchVariant {
    /// Path relative to the corpus root, `/`-separated.
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
    pub expected: Vec<ExpectedFinding>,
    #[serde(skip)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub category: Category,
    pub dir: String,
    pub variants: Vec<BenchVariant>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub cases: Vec<BenchmarkCase>,
}

/// Labels that count as "this case's own label" for the round-trip check.
/// A site satisfies its case when it carries any of them.
pub fn case_labels(category: Category, case_id: &str) -> &'static [&'static str] {
    match (category, case_id) {
        (Category::Restrictive, "STRING/OID") => &["STRING", "OID"],
        (Category::Restrictive, "ID") => &["ID"],
        (Category::Restrictive, "METHOD") | (Category::Restrictive, "METHOD*") => &["METHOD"],
        (Category::Restrictive, "NATIVE") => &["NATIVE"],
        (Category::Restrictive, "STROP") => &["STROP"],
        (Category::Restrictive, "STRBUF") | (Category::Restrictive, "STRBL*") => &["STRBUF"],
        (Category::Restrictive, "CONCT") => &["CONCT"],
        (Category::Restrictive, "BAS64") => &["BAS64"],
        (Category::Restrictive, "ID+METHOD") => &["ID"],
        (Category::Restrictive, "TEROP") => &["TEROP"],
        (Category::Restrictive, "STATIC") => &["STATIC"],
        (Category::Restrictive, "ENUM") => &["ENUM"],
        (Category::Flexible, "EMPTY") => &["EMPTY"],
        (Category::Flexible, "LOG") => &["LOG"],
        (Category::Flexible, "CLIENT") => &["CLIENT"],
        (Category::Flexible, "VAL") => &["VAL"],
        (Category::Flexible, "HASH") => &["HASH"],
        (Category::Flexible, "GETSUB") => &["GETSUB"],
        (Category::Flexible, "LEN/AUTH") => &["LEN", "AUTH"],
        (Category::Flexible, "GETPUB") => &["GETPUB"],
        (Category::Flexible, "STROP") => &["STROP"],
        _ => &[],
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Line span of the single API site in a generated source.
fn site_lines(file: &str, source: &str) -> Result<(usize, usize)> {
    let unit = parse_unit(file, source)?;
    if unit.status != ParseStatus::Ok {
        return Err(Error::Contract(format!("generated {file} does not parse cleanly")));
    }
    let unit = Arc::new(unit);
    let sites = extract_sites(&unit, &canonical_signatures(&ApiKind::CANONICAL));
    match sites.as_slice() {
        [site] => Ok((site.start_line, site.end_line)),
        _ => Err(Error::Contract(format!("generated {file} holds {} API sites, expected 1", sites.len()))),
    }
}

/// Instantiate every case from its templates without touching the disk.
pub fn build_cases(seed: u64) -> Result<Vec<BenchmarkCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut namer = templates::Namer::new(&mut rng);
    let mut cases = Vec::with_capacity(templates::CASES.len());
    for t in &templates::CASES {
        let mut variants = Vec::new();
        for v in (t.variants)(&mut namer) {
            let file = format!("{}/{}.java", t.dir, v.class);
            let (start_line, end_line) = site_lines(&file, &v.source)?;
            variants.push(BenchVariant { file, start_line, end_line, expected: v.expected, source: v.source });
        }
        cases.push(BenchmarkCase { case_id: t.case_id.into(), category: t.category, dir: t.dir.into(), variants });
    }
    Ok(cases)
}

/// Write the corpus under `outdir`. Existing case directories are replaced.
pub fn generate_corpus(outdir: &Path, seed: u64) -> Result<Vec<BenchmarkCase>> {
    let cases = build_cases(seed)?;
    fs::create_dir_all(outdir).map_err(io_err(outdir))?;
    for case in &cases {
        let dir = outdir.join(&case.dir);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for v in &case.variants {
            let path = outdir.join(&v.file);
            fs::write(&path, &v.source).map_err(io_err(&path))?;
        }
    }
    let manifest = Manifest { seed, cases: cases.clone() };
    let path = outdir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(cases)
}

/// Read `manifest.json` and the variant sources it names.
pub fn load_manifest(corpus: &Path) -> Result<Manifest> {
    let path = corpus.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut manifest: Manifest = serde_json::from_str(&text)?;
    for v in manifest.cases.iter_mut().flat_map(|c| c.variants.iter_mut()) {
        let p: PathBuf = corpus.join(&v.file);
        v.source = fs::read_to_string(&p).map_err(io_err(&p))?;
    }
    Ok(manifest)
}

/// Run the bundled detector over `corpus` and express its findings as a report.
pub fn self_report(corpus: &Path, config: &ScanConfig) -> Result<ToolReport> {
    let result = run_scan(corpus, config)?;
    let rows = result
        .analyses
        .iter()
        .flat_map(|a| {
            a.findings.iter().map(move |f| ReportRow {
                file: a.site.path().to_string(),
                start_line: Some(a.site.start_line),
                end_line: Some(a.site.end_line),
                rule: f.rule_id.clone(),
                message: f.message.clone(),
            })
        })
        .collect();
    Ok(ToolReport { tool: "self".into(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::analyze_site;

    #[test]
    fn case_list_is_pinned() {
        let ids: Vec<&str> = CASE_IDS.iter().map(|(_, id)| *id).collect();
        assert_eq!(
            ids,
            [
                "STRING/OID", "ID", "METHOD", "METHOD*", "NATIVE", "STROP", "STRBUF", "STRBL*", "CONCT", "BAS64",
                "ID+METHOD", "TEROP", "STATIC", "ENUM", "EMPTY", "LOG", "CLIENT", "VAL", "HASH", "GETSUB", "LEN/AUTH",
                "GETPUB", "STROP",
            ]
        );
        assert_eq!(CASE_IDS.iter().filter(|(c, _)| *c == Category::Restrictive).count(), 14);
    }

    #[test]
    fn same_seed_same_sources() {
        assert_eq!(build_cases(7).unwrap(), build_cases(7).unwrap());
        assert_ne!(build_cases(7).unwrap(), build_cases(8).unwrap());
    }

    #[test]
    fn id_has_several_variants() {
        let cases = build_cases(1).unwrap();
        assert!(cases[1].variants.len() > 1);
    }

    /// Every variant, analysed on its own, yields exactly its expected findings.
    #[test]
    fn variants_produce_expected_findings() {
        let config = ScanConfig::default().all_apis();
        for seed in [0, 7, 42] {
            for case in build_cases(seed).unwrap() {
                for v in &case.variants {
                    let unit = Arc::new(parse_unit(v.file.clone(), &v.source).unwrap());
                    let sites = extract_sites(&unit, &config.apis);
                    assert_eq!(sites.len(), 1, "{}", v.file);
                    let a = analyze_site(&sites[0], &config);
                    let got: Vec<ExpectedFinding> = a
                        .findings
                        .iter()
                        .map(|f| ExpectedFinding {
                            rule_id: f.rule_id.clone(),
                            severity: f.severity,
                            effective_value: f.effective_value.clone(),
                            evasive: f.evasive,
                        })
                        .collect();
                    assert_eq!(got, v.expected, "{} {}\n{}\n{:?}", case.case_id, v.file, v.source, a.resolved);
                    let own = case_labels(case.category, &case.case_id);
                    assert!(a.labels.contains_any(own), "{} labelled {:?}", case.case_id, a.labels.names());
                }
            }
        }
    }

    #[test]
    fn self_report_detects_every_case() {
        let dir = tempfile::tempdir().unwrap();
        let cases = generate_corpus(dir.path(), 7).unwrap();
        assert_eq!(load_manifest(dir.path()).unwrap().cases, cases);
        let report = self_report(dir.path(), &ScanConfig::default().all_apis()).unwrap();
        let verdicts = grade(&cases, &report);
        let missed: Vec<_> = verdicts.iter().filter(|v| v.verdict != Verdict::Detected).collect();
        assert!(missed.is_empty(), "{missed:?}");
    }
}
