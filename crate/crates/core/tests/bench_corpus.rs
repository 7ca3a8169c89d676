use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use regex::Regex;

use cryptoscan::bench::{self, case_labels, grade, self_report, Verdict};
use cryptoscan::report::{render_jsonl, run_scan, ScanConfig};
use cryptoscan::resolve::visible_literals;

fn config() -> ScanConfig {
    ScanConfig::default().all_apis()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().display().to_string(), fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    bench::generate_corpus(a.path(), 11).unwrap();
    bench::generate_corpus(b.path(), 11).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    // regenerating in place replaces old case files
    bench::generate_corpus(a.path(), 12).unwrap();
    bench::generate_corpus(a.path(), 11).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn every_case_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cases = bench::generate_corpus(dir.path(), 5).unwrap();
    assert_eq!(cases.len(), 23);
    let result = run_scan(dir.path(), &config()).unwrap();
    assert!(result.warnings.is_empty(), "{:?}", result.warnings);

    // site count agrees with a plain textual pass over the same files
    let call = Regex::new(r"Cipher\.getInstance\(|new SecretKeySpec\(").unwrap();
    let decl = Regex::new(r"void\s+checkServerTrusted\s*\(|boolean\s+verify\s*\(").unwrap();
    let textual: usize = tree(dir.path())
        .iter()
        .filter(|(p, _)| p.ends_with(".java"))
        .map(|(_, b)| {
            let s = String::from_utf8_lossy(b);
            call.find_iter(&s).count() + decl.find_iter(&s).count()
        })
        .sum();
    assert_eq!(result.analyses.len(), textual);

    for case in &cases {
        let own = case_labels(case.category, &case.case_id);
        let sites: Vec<_> = result.analyses.iter().filter(|a| a.site.path().starts_with(&format!("{}/", case.dir))).collect();
        assert_eq!(sites.len(), case.variants.len(), "{}", case.dir);
        for a in sites {
            assert!(a.labels.contains_any(own), "{}: {:?}", a.site.id, a.labels.names());
        }
    }
}

#[test]
fn scan_report_holds_every_expected_finding() {
    let dir = tempfile::tempdir().unwrap();
    let cases = bench::generate_corpus(dir.path(), 9).unwrap();
    let cfg = config();
    let result = run_scan(dir.path(), &cfg).unwrap();
    let report = render_jsonl(&result, &cfg).unwrap();
    let lines: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.len() > 23);
    for v in cases.iter().flat_map(|c| &c.variants) {
        let line = lines.iter().find(|l| l["path"] == v.file.as_str()).unwrap_or_else(|| panic!("{}", v.file));
        let rules: Vec<&str> = line["findings"].as_array().unwrap().iter().map(|f| f["rule_id"].as_str().unwrap()).collect();
        for e in &v.expected {
            assert!(rules.contains(&e.rule_id.as_str()), "{} lacks {}", v.file, e.rule_id);
        }
    }
}

#[test]
fn empty_report_grades_undetected_and_self_report_detected() {
    let dir = tempfile::tempdir().unwrap();
    bench::generate_corpus(dir.path(), 3).unwrap();
    let manifest = bench::load_manifest(dir.path()).unwrap();
    let none = grade(&manifest.cases, &bench::ToolReport::empty("none"));
    assert!(none.iter().all(|v| v.verdict == Verdict::Undetected));
    let own = grade(&manifest.cases, &self_report(dir.path(), &config()).unwrap());
    assert!(own.iter().all(|v| v.verdict == Verdict::Detected), "{own:?}");

    // and the same findings survive a trip through the CSV contract
    let csv = self_report(dir.path(), &config()).unwrap().to_csv();
    let parsed = bench::parse_tool_reports(&csv, "self.csv").unwrap();
    assert_eq!(grade(&manifest.cases, &parsed[0]), own);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// A finding is evasive exactly when its vulnerable value is not among
    /// the literals a reader can see.
    #[test]
    fn evasive_flag_matches_visibility(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let cases = bench::generate_corpus(dir.path(), seed).unwrap();
        let result = run_scan(dir.path(), &config()).unwrap();
        for a in &result.analyses {
            let case = cases.iter().find(|c| a.site.path().starts_with(&format!("{}/", c.dir))).unwrap();
            let variant = case.variants.iter().find(|v| v.file == a.site.path()).unwrap();
            prop_assert_eq!(a.findings.len(), variant.expected.len(), "{}", a.site.id);
            for (f, e) in a.findings.iter().zip(&variant.expected) {
                prop_assert_eq!(f.evasive, e.evasive, "{} {}", a.site.id, f.rule_id);
                if let (Some(value), Some(r)) = (&f.effective_value, &a.resolved) {
                    let visible = visible_literals(&a.site, r);
                    if !f.evasive {
                        let upper: Vec<String> = visible.iter().map(|s| s.to_uppercase()).collect();
                        let shown = match f.rule_id.as_str() {
                            // an OID stands in for the algorithm name
                            "R2" => visible.iter().any(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || c == '.')),
                            rule => upper.iter().any(|s| s.contains(&token_of(rule, value))),
                        };
                        prop_assert!(visible.contains(value) || shown, "{} {}", a.site.id, f.rule_id);
                    } else {
                        prop_assert!(!visible.contains(value));
                    }
                }
            }
        }
    }
}

/// The substring a reader would have to see for each restrictive rule.
fn token_of(rule: &str, value: &str) -> String {
    match rule {
        "R3" => "ECB".into(),
        "R5" => "CBC".into(),
        "R6" => "PKCS1".into(),
        _ => value.split('/').next().unwrap_or(value).to_uppercase(),
    }
}
