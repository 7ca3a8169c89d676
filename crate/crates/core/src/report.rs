//! Scan configuration, the per-site pipeline and JSON-lines reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::classify::{classify, flexible_facts, prevalence_report, signature_of, ArgumentSignature, LabelSet, PrevalenceRow};
use crate::complexity::{assign_sample_sizes, draw_sample, round6, stratify, ComplexityScore, SamplePlan, StrataMode};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::ingest::{canonical_signatures, scan_corpus, ApiKind, ApiSignature, Category, InvocationSite, ScanWarning};
use crate::resolve::{resolve, ResolutionBudget, ResolvedValue};
use crate::rules::{check_site, MisuseFinding, RuleCatalog, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FailOn {
    Error,
    Warning,
    #[default]
    None,
}

impl FailOn {
    pub fn parse(s: &str) -> Option<FailOn> {
        match s.to_ascii_lowercase().as_str() {
            "error" => Some(FailOn::Error),
            "warning" => Some(FailOn::Warning),
            "none" => Some(FailOn::None),
            _ => None,
        }
    }

    fn threshold(self) -> Option<Severity> {
        match self {
            FailOn::Error => Some(Severity::Error),
            FailOn::Warning => Some(Severity::Warning),
            FailOn::None => None,
        }
    }
}

/// Nonzero iff some finding is at or above `fail_on`.
pub fn exit_code<'a>(findings: impl IntoIterator<Item = &'a MisuseFinding>, fail_on: FailOn) -> i32 {
    match fail_on.threshold() {
        Some(t) if findings.into_iter().any(|f| f.severity >= t) => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub apis: Vec<ApiSignature>,
    pub budget: ResolutionBudget,
    pub confidence: f64,
    pub margin: f64,
    pub seed: u64,
    pub fail_on: FailOn,
    pub catalog: RuleCatalog,
    pub execution: Execution,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            apis: canonical_signatures(&[ApiKind::RestrictiveCipherGetinstance, ApiKind::FlexibleCheckServerTrusted]),
            budget: ResolutionBudget::default(),
            confidence: 0.95,
            margin: 0.05,
            seed: 0,
            fail_on: FailOn::None,
            catalog: RuleCatalog::standard(),
            execution: Execution::default(),
        }
    }
}

impl ScanConfig {
    /// Every supported API, including the secondary ones.
    pub fn all_apis(mut self) -> Self {
        self.apis = canonical_signatures(&ApiKind::CANONICAL);
        self
    }

    /// Read a `key = value` file. `api` may repeat; the first occurrence
    /// replaces the default API list.
    pub fn parse(text: &str) -> Result<ScanConfig> {
        let mut cfg = ScanConfig::default();
        let mut apis: Option<Vec<ApiSignature>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: not a number: {v:?}")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("{key}: not an integer: {v:?}")));
            match key {
                "api" => {
                    let sig = ApiKind::parse(value)
                        .and_then(ApiSignature::canonical)
                        .or_else(|| ApiSignature::parse(value))
                        .ok_or_else(|| err(format!("unknown api {value:?}")))?;
                    apis.get_or_insert_with(Vec::new).push(sig);
                }
                "max_indirection" => cfg.budget.max_indirection = int(value)? as usize,
                "max_candidates" => cfg.budget.max_candidates = int(value)? as usize,
                "max_steps" => cfg.budget.max_steps = int(value)? as usize,
                "confidence" => cfg.confidence = num(value)?,
                "margin" => cfg.margin = num(value)?,
                "seed" => cfg.seed = int(value)?,
                "fail_on" => cfg.fail_on = FailOn::parse(value).ok_or_else(|| err(format!("fail_on: {value:?}")))?,
                "execution" => {
                    cfg.execution = match value {
                        "parallel" => Execution::Parallel,
                        "sequential" => Execution::Sequential,
                        _ => return Err(err(format!("execution: {value:?}"))),
                    }
                }
                "oid" => {
                    let (oid, name) = value.split_once(':').ok_or_else(|| err("oid: expected OID:NAME".into()))?;
                    cfg.catalog.add_oid(oid.trim(), name.trim());
                }
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        if let Some(a) = apis {
            cfg.apis = a;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        crate::complexity::sample_size(1, self.confidence, self.margin)?;
        if self.apis.is_empty() {
            return Err(Error::Contract("no APIs configured".into()));
        }
        Ok(())
    }
}

/// Everything the pipeline computes for one site.
#[derive(Debug, Clone)]
pub struct SiteAnalysis {
    pub site: InvocationSite,
    pub complexity: ComplexityScore,
    pub signature: ArgumentSignature,
    pub resolved: Option<ResolvedValue>,
    pub labels: LabelSet,
    pub findings: Vec<MisuseFinding>,
}

/// Resolve the first argument of a restrictive site.
pub fn resolve_site(site: &InvocationSite, budget: ResolutionBudget) -> Option<ResolvedValue> {
    if site.category() != Category::Restrictive {
        return None;
    }
    let arg = site.subtree.as_ref()?.first_child()?;
    Some(resolve(arg, site, budget))
}

pub fn analyze_site(site: &InvocationSite, config: &ScanConfig) -> SiteAnalysis {
    let complexity = ComplexityScore::of(site);
    let signature = signature_of(site);
    let resolved = resolve_site(site, config.budget);
    let (labels, flex) = match site.category() {
        Category::Flexible => {
            let facts = flexible_facts(site);
            (facts.labels.clone(), Some(facts))
        }
        Category::Restrictive => (classify(site, resolved.as_ref()), None),
    };
    let findings = check_site(site, resolved.as_ref(), &labels, flex.as_ref(), &config.catalog);
    SiteAnalysis { site: site.clone(), complexity, signature, resolved, labels, findings }
}

#[derive(Debug, Clone, Default)]
pub struct ScanResult {
    pub analyses: Vec<SiteAnalysis>,
    pub warnings: Vec<ScanWarning>,
    pub files: usize,
}

impl ScanResult {
    pub fn findings(&self) -> impl Iterator<Item = &MisuseFinding> {
        self.analyses.iter().flat_map(|a| a.findings.iter())
    }
}

/// Extract, score, resolve, classify and check every site under `dir`.
pub fn run_scan(dir: &Path, config: &ScanConfig) -> Result<ScanResult> {
    config.validate()?;
    let outcome = scan_corpus(dir, &config.apis, config.execution)?;
    let analyses = exec::map(config.execution, &outcome.sites, |s| analyze_site(s, config));
    Ok(ScanResult { analyses, warnings: outcome.warnings, files: outcome.files })
}

/// Six fixed decimals, emitted as a JSON number.
fn fixed6(x: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{:.6}", round6(x))).expect("finite float")
}

#[derive(Serialize)]
struct SiteLine<'a> {
    id: &'a str,
    path: &'a str,
    api: ApiKind,
    start_line: usize,
    end_line: usize,
    d: usize,
    score: Box<RawValue>,
    stratum: i64,
    labels: &'a LabelSet,
    signature: &'a ArgumentSignature,
    resolved: Option<&'a ResolvedValue>,
    findings: &'a [MisuseFinding],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StratumRow {
    pub api: ApiKind,
    pub mode: StrataMode,
    pub key: i64,
    pub label: String,
    pub population: usize,
    pub sample_size: usize,
}

#[derive(Serialize)]
struct Summary<'a> {
    files: usize,
    sites: usize,
    findings: BTreeMap<Severity, usize>,
    strata: Vec<StratumRow>,
    prevalence: Vec<PrevalenceRow>,
    warnings: &'a [ScanWarning],
}

#[derive(Serialize)]
struct Footer<'a> {
    summary: Summary<'a>,
}

/// Strata per API with sample sizes for the configured confidence and margin.
pub fn strata_table<'a, I>(members: I, confidence: f64, margin: f64) -> Result<Vec<StratumRow>>
where
    I: IntoIterator<Item = (ApiKind, &'a str, usize)>,
{
    let mut per_api: BTreeMap<ApiKind, Vec<(&str, usize)>> = BTreeMap::new();
    for (api, id, d) in members {
        per_api.entry(api).or_default().push((id, d));
    }
    let mut rows = Vec::new();
    for (api, members) in per_api {
        let mode = StrataMode::for_category(api.category());
        let mut strata = stratify(members, mode);
        assign_sample_sizes(&mut strata, confidence, margin)?;
        rows.extend(strata.into_iter().map(|s| StratumRow {
            api,
            mode,
            key: s.key,
            label: s.label,
            population: s.population,
            sample_size: s.sample_size,
        }));
    }
    Ok(rows)
}

/// One JSON object per site in (path, offset) order, then a summary object.
pub fn render_jsonl(result: &ScanResult, config: &ScanConfig) -> Result<String> {
    let mut out = String::new();
    for a in &result.analyses {
        let line = SiteLine {
            id: &a.site.id,
            path: a.site.path(),
            api: a.site.api,
            start_line: a.site.start_line,
            end_line: a.site.end_line,
            d: a.complexity.d,
            score: fixed6(a.complexity.score),
            stratum: a.complexity.stratum_key,
            labels: &a.labels,
            signature: &a.signature,
            resolved: a.resolved.as_ref(),
            findings: &a.findings,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    let mut findings = BTreeMap::new();
    for f in result.findings() {
        *findings.entry(f.severity).or_insert(0) += 1;
    }
    let strata = strata_table(
        result.analyses.iter().map(|a| (a.site.api, a.site.id.as_str(), a.complexity.d)),
        config.confidence,
        config.margin,
    )?;
    let footer = Footer {
        summary: Summary {
            files: result.files,
            sites: result.analyses.len(),
            findings,
            strata,
            prevalence: prevalence_report(result.analyses.iter().map(|a| &a.labels)),
            warnings: &result.warnings,
        },
    };
    out.push_str(&serde_json::to_string(&footer)?);
    out.push('\n');
    Ok(out)
}

pub fn strata_csv(rows: &[StratumRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

/// A site line read back from a report.
#[derive(Debug, Clone, Deserialize)]
pub struct ReportedSite {
    pub id: String,
    pub api: ApiKind,
    pub d: usize,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub signature: ArgumentSignature,
}

/// Parse the site lines of a JSON-lines report; the summary line is skipped.
pub fn read_report(text: &str, path: &str) -> Result<Vec<ReportedSite>> {
    let mut sites = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::MalformedReport { path: path.into(), row: i + 1, message: e.to_string() })?;
        if value.get("summary").is_some() {
            continue;
        }
        let site: ReportedSite = serde_json::from_value(value)
            .map_err(|e| Error::MalformedReport { path: path.into(), row: i + 1, message: e.to_string() })?;
        sites.push(site);
    }
    Ok(sites)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiSamplePlan {
    pub api: ApiKind,
    pub plan: SamplePlan,
}

/// Stratified sample plans, one per API, from report lines.
pub fn plan_sample(sites: &[ReportedSite], seed: u64, confidence: f64, margin: f64) -> Result<Vec<ApiSamplePlan>> {
    let mut per_api: BTreeMap<ApiKind, Vec<(&str, usize)>> = BTreeMap::new();
    for s in sites {
        per_api.entry(s.api).or_default().push((&s.id, s.d));
    }
    let mut plans = Vec::new();
    for (api, members) in per_api {
        let mut strata = stratify(members, StrataMode::for_category(api.category()));
        assign_sample_sizes(&mut strata, confidence, margin)?;
        plans.push(ApiSamplePlan { api, plan: draw_sample(&strata, seed, confidence, margin) });
    }
    Ok(plans)
}

/// Human-readable one-line-per-site listing.
pub fn render_text(result: &ScanResult) -> String {
    let mut out = String::new();
    for a in &result.analyses {
        let _ = write!(out, "{}:{} {} d={} [{}]", a.site.path(), a.site.start_line, a.site.api, a.complexity.d, a.labels.composite_name());
        for f in &a.findings {
            let _ = write!(out, " {}:{}", f.rule_id, f.severity);
            if f.evasive {
                out.push_str("(evasive)");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finding(sev: Severity) -> MisuseFinding {
        MisuseFinding {
            site_id: "x".into(),
            rule_id: "R1".into(),
            severity: sev,
            message: String::new(),
            effective_value: None,
            evidence: Vec::new(),
            evasive: false,
        }
    }

    #[test]
    fn exit_codes() {
        let w = [finding(Severity::Warning)];
        assert_eq!(exit_code(&w, FailOn::Error), 0);
        assert_eq!(exit_code(&w, FailOn::Warning), 1);
        assert_eq!(exit_code(&w, FailOn::None), 0);
        assert_eq!(exit_code(&[], FailOn::Warning), 0);
    }

    #[test]
    fn config_file() {
        let cfg = ScanConfig::parse("# c\napi = RESTRICTIVE_SECRETKEYSPEC\napi = Foo.bar\nmax_indirection = 4\nfail_on = warning\noid = 1.2.3:DES\n").unwrap();
        assert_eq!(cfg.apis.len(), 2);
        assert_eq!(cfg.budget.max_indirection, 4);
        assert_eq!(cfg.fail_on, FailOn::Warning);
        assert_eq!(cfg.catalog.oids["1.2.3"], "DES");
        assert!(matches!(ScanConfig::parse("nope = 1"), Err(Error::Config { line: 1, .. })));
        assert!(ScanConfig::parse("max_steps = 0").is_err());
    }

    #[test]
    fn fixed_decimals() {
        assert_eq!(fixed6(-1.0).get(), "-1.000000");
        assert_eq!(fixed6(2f64.log10().tanh()).get(), "0.292255");
    }
}
