//! Misuse rules over resolved values and labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::classify::{FlexFacts, LabelSet};
use crate::ingest::{ApiKind, Category, InvocationSite};
use crate::resolve::{visible_literals, ResolvedValue, Residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "INFO",
            Severity::Warning => "WARNING",
            Severity::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Severity> {
        match s.to_ascii_uppercase().as_str() {
            "INFO" => Some(Severity::Info),
            "WARNING" => Some(Severity::Warning),
            "ERROR" => Some(Severity::Error),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDef {
    pub id: String,
    pub category: Category,
    pub severity: Severity,
    pub title: String,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCatalog {
    pub version: u32,
    pub rules: Vec<RuleDef>,
    /// Dotted OID to the algorithm or transformation it names.
    pub oids: BTreeMap<String, String>,
}

const RULES: &[(&str, Category, Severity, &str, &str)] = &[
    ("R1", Category::Restrictive, Severity::Error, "broken cipher", "algorithm is DES, DESede, RC2, RC4, Blowfish, IDEA or a PBE scheme over them"),
    ("R2", Category::Restrictive, Severity::Error, "OID names a broken cipher", "dotted OID expands to an R1 algorithm"),
    ("R3", Category::Restrictive, Severity::Error, "explicit ECB mode", "ALGO/ECB/PADDING for a symmetric algorithm"),
    ("R4", Category::Restrictive, Severity::Error, "implicit ECB default", "bare AES, RSA or Rijndael, or an AES key-wrap name"),
    ("R5", Category::Restrictive, Severity::Warning, "CBC with padding", "CBC mode with PKCS5 or PKCS7 padding is open to padding oracles"),
    ("R6", Category::Restrictive, Severity::Warning, "RSA with PKCS#1 v1.5 padding", "RSA/ECB|NONE/PKCS1Padding"),
    ("R7", Category::Restrictive, Severity::Warning, "type-dependent default", "getInstance() without arguments; INFO unless the receiver is AESCipher"),
    ("R8", Category::Restrictive, Severity::Info, "unverifiable parameter", "parameter comes from native code or is decrypted at runtime"),
    ("R9", Category::Restrictive, Severity::Info, "malformed transformation", "candidate is not ALGO or ALGO/MODE/PADDING"),
    ("K1", Category::Restrictive, Severity::Error, "hard-coded key", "SecretKeySpec key bytes resolve to a constant"),
    ("K2", Category::Restrictive, Severity::Info, "unverified key source", "key bytes unresolved and not from a secure random source"),
    ("F1", Category::Flexible, Severity::Error, "trust-all: empty body", "certificate check with an empty body"),
    ("F2", Category::Flexible, Severity::Error, "trust-all: logging only", "body only logs"),
    ("F3", Category::Flexible, Severity::Error, "trust-all: empty delegate", "delegates within two calls to an empty or always-accepting method"),
    ("F4", Category::Flexible, Severity::Error, "expiry-only check", "checkValidity without any signature, path, pinning or trust-manager check"),
    ("F5", Category::Flexible, Severity::Warning, "isTrusted bypass", "TrustStrategy.isTrusted does not consult the configured TrustManager"),
    ("F6", Category::Flexible, Severity::Warning, "deprecated DN accessor", "getSubjectDN or getIssuerDN"),
    ("F7", Category::Flexible, Severity::Warning, "SHA-1 pinning", "SHA-1 digest used in a comparison"),
    ("F8", Category::Flexible, Severity::Warning, "hard-coded certificate comparison", "certificate material compared with a constant, no hash or verification"),
    ("F9", Category::Flexible, Severity::Info, "unverifiable declaration", "abstract or native declaration"),
    ("F10", Category::Flexible, Severity::Error, "ineffectual body", "non-empty body with no certificate checking at all"),
];

const OIDS: &[(&str, &str)] = &[
    ("1.2.840.113549.3.2", "RC2"),
    ("1.2.840.113549.3.4", "RC4"),
    ("1.2.840.113549.3.7", "DESede"),
    ("1.3.14.3.2.7", "DES"),
    ("2.16.840.1.101.3.4.1.1", "AES/ECB/NoPadding"),
    ("2.16.840.1.101.3.4.1.2", "AES/CBC/NoPadding"),
    ("2.16.840.1.101.3.4.1.3", "AES/OFB/NoPadding"),
    ("2.16.840.1.101.3.4.1.4", "AES/CFB/NoPadding"),
    ("2.16.840.1.101.3.4.1.5", "AESWrap"),
    ("2.16.840.1.101.3.4.1.6", "AES/GCM/NoPadding"),
    ("2.16.840.1.101.3.4.1.7", "AES/CCM/NoPadding"),
    ("2.16.840.1.101.3.4.1.8", "AESWrapPad"),
];

impl RuleCatalog {
    pub const VERSION: u32 = 1;

    pub fn standard() -> RuleCatalog {
        let rules = RULES
            .iter()
            .map(|(id, category, severity, title, predicate)| RuleDef {
                id: id.to_string(),
                category: *category,
                severity: *severity,
                title: title.to_string(),
                predicate: predicate.to_string(),
            })
            .collect();
        let mut oids = BTreeMap::new();
        const AES_ARC: &str = "2.16.840.1.101.3.4.1.";
        for (oid, name) in OIDS {
            oids.insert(oid.to_string(), name.to_string());
            // The 192- and 256-bit variants sit 20 and 40 arcs higher.
            if let Some(arc) = oid.strip_prefix(AES_ARC).and_then(|a| a.parse::<u32>().ok()) {
                for offset in [20, 40] {
                    oids.insert(format!("{AES_ARC}{}", arc + offset), name.to_string());
                }
            }
        }
        RuleCatalog { version: Self::VERSION, rules, oids }
    }

    pub fn rule(&self, id: &str) -> Option<&RuleDef> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn add_oid(&mut self, oid: &str, name: &str) {
        self.oids.insert(oid.to_string(), name.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

impl Default for RuleCatalog {
    fn default() -> Self {
        RuleCatalog::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisuseFinding {
    pub site_id: String,
    pub rule_id: String,
    pub severity: Severity,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub effective_value: Option<String>,
    /// Indices of the trace steps behind the value, if any.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub evidence: Vec<usize>,
    pub evasive: bool,
}

/// A transformation string split into its parts, upper-cased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformation {
    pub algorithm: String,
    pub mode: Option<String>,
    pub padding: Option<String>,
}

fn part_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$").expect("static regex"))
}

fn oid_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"^\d+(\.\d+)+$").expect("static regex"))
}

/// Parse `ALGO` or `ALGO/MODE/PADDING`. Anything else is malformed.
pub fn parse_transformation(s: &str) -> Option<Transformation> {
    let parts: Vec<&str> = s.trim().split('/').collect();
    if !parts.iter().all(|p| part_re().is_match(p)) {
        return None;
    }
    let up = |p: &str| p.to_ascii_uppercase();
    match parts.as_slice() {
        [a] => Some(Transformation { algorithm: up(a), mode: None, padding: None }),
        [a, m, p] => Some(Transformation { algorithm: up(a), mode: Some(up(m)), padding: Some(up(p)) }),
        _ => None,
    }
}

fn broken_algorithm(algo: &str) -> bool {
    const BROKEN: &[&str] = &["DES", "DESEDE", "TRIPLEDES", "3DES", "DESEDEWRAP", "RC2", "RC4", "ARCFOUR", "ARC4", "BLOWFISH", "IDEA"];
    if BROKEN.contains(&algo) {
        return true;
    }
    algo.starts_with("PBEWITH") && ["DES", "RC2", "RC4"].iter().any(|b| algo.ends_with(b) || algo.contains(&format!("AND{b}")))
}

fn implicit_ecb(algo: &str) -> bool {
    matches!(algo, "AES" | "RSA" | "RIJNDAEL")
        || algo.strip_prefix("AES_").is_some_and(|bits| !bits.is_empty() && bits.chars().all(|c| c.is_ascii_digit()))
        || algo.starts_with("AESWRAP")
        || algo.starts_with("AESKWP")
}

const ASYMMETRIC: &[&str] = &["RSA", "EC", "ECIES", "ELGAMAL"];

/// One rule hit on one candidate, before it becomes a finding.
struct Hit {
    rule: &'static str,
    message: String,
    value: String,
    /// Substring whose absence from every visible literal makes the hit evasive.
    token: String,
}

fn transformation_hits(t: &Transformation, value: &str) -> Vec<Hit> {
    let mut out = Vec::new();
    let hit = |rule: &'static str, message: String, token: &str| Hit { rule, message, value: value.to_string(), token: token.to_string() };
    let algo = t.algorithm.as_str();
    if broken_algorithm(algo) {
        out.push(hit("R1", format!("broken cipher {algo}"), algo));
    }
    match (&t.mode, &t.padding) {
        (Some(mode), Some(padding)) => {
            if mode == "ECB" && !ASYMMETRIC.contains(&algo) {
                out.push(hit("R3", format!("{algo} in ECB mode"), "ECB"));
            }
            if mode == "CBC" && matches!(padding.as_str(), "PKCS5PADDING" | "PKCS7PADDING") {
                out.push(hit("R5", format!("CBC with {padding} is open to padding oracles"), "CBC"));
            }
            if algo == "RSA" && matches!(mode.as_str(), "ECB" | "NONE") && padding == "PKCS1PADDING" {
                out.push(hit("R6", "RSA with PKCS#1 v1.5 padding".into(), "PKCS1"));
            }
        }
        _ => {
            if implicit_ecb(algo) {
                out.push(hit("R4", format!("{algo} without a mode defaults to ECB"), algo));
            }
        }
    }
    out
}

fn candidate_hits(raw: &str, catalog: &RuleCatalog) -> Vec<Hit> {
    let value = raw.trim();
    if oid_re().is_match(value) {
        let Some(name) = catalog.oids.get(value) else { return Vec::new() };
        let Some(t) = parse_transformation(name) else { return Vec::new() };
        if broken_algorithm(&t.algorithm) {
            return vec![Hit { rule: "R2", message: format!("OID {value} is {name}"), value: name.clone(), token: value.to_string() }];
        }
        let mut hits = transformation_hits(&t, name);
        for h in &mut hits {
            h.token = value.to_string();
            h.message = format!("{} (OID {value})", h.message);
        }
        return hits;
    }
    match parse_transformation(value) {
        Some(t) => transformation_hits(&t, value),
        None => vec![Hit { rule: "R9", message: format!("malformed transformation {raw:?}"), value: raw.to_string(), token: raw.to_string() }],
    }
}

fn finding(site: &InvocationSite, catalog: &RuleCatalog, rule: &str, message: String) -> MisuseFinding {
    let severity = catalog.rule(rule).map_or(Severity::Info, |r| r.severity);
    MisuseFinding {
        site_id: site.id.clone(),
        rule_id: rule.to_string(),
        severity,
        message,
        effective_value: None,
        evidence: Vec::new(),
        evasive: false,
    }
}

fn rule_order(id: &str) -> usize {
    RULES.iter().position(|r| r.0 == id).unwrap_or(usize::MAX)
}

fn sort_findings(findings: &mut Vec<MisuseFinding>) {
    findings.sort_by(|a, b| {
        (rule_order(&a.rule_id), &a.effective_value, &a.message).cmp(&(rule_order(&b.rule_id), &b.effective_value, &b.message))
    });
    findings.dedup_by(|a, b| a.rule_id == b.rule_id && a.effective_value == b.effective_value);
}

/// Transformation-string rules. Every candidate counts.
pub fn check_restrictive(
    site: &InvocationSite,
    resolved: &ResolvedValue,
    labels: &LabelSet,
    catalog: &RuleCatalog,
) -> Vec<MisuseFinding> {
    let mut out = Vec::new();
    if labels.is_unknown() {
        return out;
    }
    if labels.contains("EMPTY") {
        let receiver = site.node.child_by_field("object").map(|o| site.text_of(o)).unwrap_or("");
        let last = receiver.rsplit('.').next().unwrap_or(receiver);
        let mut f = finding(site, catalog, "R7", format!("{last}.getInstance() uses a type-dependent default"));
        if last != "AESCipher" {
            f.severity = Severity::Info;
        }
        out.push(f);
        return out;
    }
    let visible: Vec<String> = visible_literals(site, resolved).into_iter().map(|l| l.to_ascii_uppercase()).collect();
    let evidence: Vec<usize> = (0..resolved.trace.len()).collect();
    for raw in resolved.nonempty_candidates() {
        for hit in candidate_hits(raw, catalog) {
            // Evasive when the part that triggers the rule never shows up in
            // a literal a reviewer could see.
            let token = hit.token.to_ascii_uppercase();
            let value = hit.value.to_ascii_uppercase();
            let evasive = !visible.iter().any(|l| l.contains(&token) || *l == value);
            let mut f = finding(site, catalog, hit.rule, hit.message);
            f.effective_value = Some(hit.value);
            f.evasive = evasive;
            f.evidence = evidence.clone();
            out.push(f);
        }
    }
    if resolved.residuals.contains(&Residual::Native) || resolved.has_rule("encrypted-param") {
        let why = if resolved.residuals.contains(&Residual::Native) { "native code" } else { "a runtime decryption" };
        out.push(finding(site, catalog, "R8", format!("unverifiable parameter: value comes from {why}")));
    }
    sort_findings(&mut out);
    out
}

/// Key-material rules for `SecretKeySpec`.
pub fn check_key_material(site: &InvocationSite, resolved: &ResolvedValue, catalog: &RuleCatalog) -> Vec<MisuseFinding> {
    let mut out = Vec::new();
    if resolved.has_rule("secure-random") {
        return out;
    }
    let keys: BTreeSet<&String> = resolved.nonempty_candidates().collect();
    if !keys.is_empty() {
        for k in keys {
            let mut f = finding(site, catalog, "K1", "hard-coded key material".into());
            f.effective_value = Some(k.clone());
            out.push(f);
        }
    } else if resolved.residuals.iter().any(|r| *r != Residual::Unknown) {
        out.push(finding(site, catalog, "K2", "key source could not be verified".into()));
    }
    sort_findings(&mut out);
    out
}

/// Body rules for certificate and hostname checks.
pub fn check_flexible(site: &InvocationSite, facts: &FlexFacts, catalog: &RuleCatalog) -> Vec<MisuseFinding> {
    const VERIFYING: &[&str] = &[
        "VER", "CERPAT", "TMFAC", "ISTRST", "VAL", "HASH", "ENCOD", "GETPUB", "GETSUB", "GETISR", "CERFAC", "PKIX",
        "CLIENT", "METHOD", "NATIVE", "THIS", "STROP", "LIST", "ARR", "BIGINT",
    ];
    let l = &facts.labels;
    let mut out = Vec::new();
    let mut push = |rule: &str, message: &str| out.push(finding(site, catalog, rule, message.to_string()));
    let bodiless = l.contains_any(&["ABS", "NATIVD"]);
    if facts.empty_body {
        push("F1", "empty body accepts every certificate");
    }
    if l.contains("LOG") {
        push("F2", "body only logs and accepts every certificate");
    }
    if facts.trivial_delegate {
        push("F3", "delegates to a method that accepts every certificate");
    }
    if l.contains("VAL") && !l.contains_any(&["VER", "CERPAT", "HASH", "STROP", "TMFAC", "ISTRST"]) {
        push("F4", "only the expiry date is checked");
    }
    if l.contains("ISTRST") {
        push("F5", "isTrusted does not consult the configured TrustManager");
    }
    if l.contains_any(&["GETSUB", "GETISR"]) {
        push("F6", "deprecated distinguished-name accessor");
    }
    if facts.sha1_comparison {
        push("F7", "SHA-1 digest used for pinning");
    }
    if facts.hardcoded_comparison && !l.contains_any(&["HASH", "VER", "CERPAT", "TMFAC"]) {
        push("F8", "certificate material compared with a hard-coded value");
    }
    if bodiless {
        push("F9", "declaration without a body cannot be verified");
    }
    if !bodiless && !facts.empty_body && !l.contains("LOG") && !facts.trivial_delegate && !l.contains_any(VERIFYING) {
        push("F10", "body performs no certificate checking");
    }
    sort_findings(&mut out);
    out
}

/// All rules that apply to a site. UNKNOWN_API sites get none.
pub fn check_site(
    site: &InvocationSite,
    resolved: Option<&ResolvedValue>,
    labels: &LabelSet,
    flex: Option<&FlexFacts>,
    catalog: &RuleCatalog,
) -> Vec<MisuseFinding> {
    if labels.is_unknown() {
        return Vec::new();
    }
    let empty = ResolvedValue::default();
    match site.category() {
        Category::Flexible => flex.map(|f| check_flexible(site, f, catalog)).unwrap_or_default(),
        Category::Restrictive if site.api == ApiKind::RestrictiveSecretkeyspec => {
            if labels.contains("EMPTY") {
                Vec::new()
            } else {
                check_key_material(site, resolved.unwrap_or(&empty), catalog)
            }
        }
        Category::Restrictive => check_restrictive(site, resolved.unwrap_or(&empty), labels, catalog),
    }
}
