//! Taxonomy labels and argument signatures.
//!
//! Labels are assigned by syntactic predicates over the site subtree plus
//! the rules the resolver used. No label says anything about whether the
//! value is vulnerable; that is left to [`crate::rules`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize, Serializer};

use crate::complexity::count_d;
use crate::ingest::{Category, InvocationSite};
use crate::resolve::index::{has_modifier, params_of, UnitIndex};
use crate::resolve::{ResolvedValue, Residual};
use crate::syntax::{decode_java_literal, SyntaxNode};

pub const RESTRICTIVE_LABELS: [&str; 15] = [
    "STROP", "TEROP", "ENUM", "ID", "THIS", "METHOD", "STATIC", "NATIVE", "BAS64", "STRBUF", "CONCT", "SEPRT", "OID",
    "STRING", "EMPTY",
];

pub const FLEXIBLE_LABELS: [&str; 30] = [
    "ABS", "NATIVD", "ILL", "CEXP", "NEXP", "LOG", "NATIVE", "METHOD", "THIS", "ISTRST", "VAL", "LEN", "NULL", "LIST",
    "CERFAC", "VER", "STROP", "AUTH", "ENCOD", "ARR", "BIGINT", "TMFAC", "GETPUB", "GETISR", "GETSUB", "HASH",
    "CERPAT", "PKIX", "CLIENT", "EMPTY",
];

/// Given to sites that match no predicate. They get no misuse findings.
pub const UNKNOWN_API: &str = "UNKNOWN_API";

fn closed_set(category: Category) -> &'static [&'static str] {
    match category {
        Category::Restrictive => &RESTRICTIVE_LABELS,
        Category::Flexible => &FLEXIBLE_LABELS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaxonomyLabel {
    pub name: &'static str,
    pub category: Category,
}

impl TaxonomyLabel {
    /// `None` unless `name` belongs to the category's closed set.
    pub fn new(name: &str, category: Category) -> Option<TaxonomyLabel> {
        closed_set(category).iter().find(|l| **l == name).map(|l| TaxonomyLabel { name: l, category })
    }

    fn position(&self) -> usize {
        closed_set(self.category).iter().position(|l| *l == self.name).unwrap_or(usize::MAX)
    }
}

impl PartialOrd for TaxonomyLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TaxonomyLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.category, self.position()).cmp(&(other.category, other.position()))
    }
}

impl fmt::Display for TaxonomyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// Labels of one site, in taxonomy table order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub category: Category,
    labels: BTreeSet<TaxonomyLabel>,
}

impl LabelSet {
    pub fn from_names<'a>(category: Category, names: impl IntoIterator<Item = &'a str>) -> LabelSet {
        let labels = names.into_iter().filter_map(|n| TaxonomyLabel::new(n, category)).collect();
        LabelSet { category, labels }
    }

    pub fn labels(&self) -> impl Iterator<Item = &TaxonomyLabel> {
        self.labels.iter()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.labels.iter().any(|l| l.name == name)
    }

    pub fn contains_any(&self, names: &[&str]) -> bool {
        names.iter().any(|n| self.contains(n))
    }

    pub fn is_unknown(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_composite(&self) -> bool {
        self.labels.len() > 1
    }

    /// Label names; `UNKNOWN_API` when nothing matched.
    pub fn names(&self) -> Vec<&'static str> {
        if self.labels.is_empty() {
            vec![UNKNOWN_API]
        } else {
            self.labels.iter().map(|l| l.name).collect()
        }
    }

    /// Reporting name: basic labels joined with `+` in table order.
    pub fn composite_name(&self) -> String {
        self.names().join("+")
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.names())
    }
}

/// Node-kind histogram of a site subtree, root excluded.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArgumentSignature(pub BTreeMap<String, usize>);

impl ArgumentSignature {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, usize)>) -> ArgumentSignature {
        ArgumentSignature(pairs.into_iter().filter(|(_, c)| *c > 0).map(|(k, c)| (k.to_string(), c)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ArgumentSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "'{k}': {v}")?;
        }
        f.write_str("}")
    }
}

pub fn signature_of(site: &InvocationSite) -> ArgumentSignature {
    let mut hist = BTreeMap::new();
    if let Some(sub) = &site.subtree {
        for n in sub.descendants().skip(1) {
            *hist.entry(n.kind().to_string()).or_insert(0) += 1;
        }
    }
    ArgumentSignature(hist)
}

/// Ids of the sites whose signature equals `pattern` exactly, sorted.
pub fn match_signature<'a, I>(sites: I, pattern: &ArgumentSignature) -> Vec<String>
where
    I: IntoIterator<Item = (&'a str, &'a ArgumentSignature)>,
{
    let mut ids: Vec<String> = sites.into_iter().filter(|(_, s)| *s == pattern).map(|(id, _)| id.to_string()).collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Label assignment for one site. `resolved` is the resolution of the first
/// argument for restrictive sites and `None` otherwise.
pub fn classify(site: &InvocationSite, resolved: Option<&ResolvedValue>) -> LabelSet {
    match site.category() {
        Category::Restrictive => LabelSet::from_names(Category::Restrictive, restrictive_labels(site, resolved)),
        Category::Flexible => flexible_facts(site).labels,
    }
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn oid_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"^\d+(\.\d+)+$")
}

fn separator_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)slash|separator")
}

const STRING_METHODS: &[&str] = &[
    "charAt", "concat", "format", "replace", "replaceAll", "replaceFirst", "substring", "subSequence", "toUpperCase",
    "toLowerCase", "trim", "strip", "split", "join", "valueOf", "reverse", "repeat", "intern", "codePointAt",
];

fn restrictive_labels(site: &InvocationSite, resolved: Option<&ResolvedValue>) -> Vec<&'static str> {
    let src = site.source();
    let mut out = Vec::new();
    if count_d(site) == 0 {
        return vec!["EMPTY"];
    }
    let Some(args) = &site.subtree else { return vec!["EMPTY"] };
    let empty = ResolvedValue::default();
    let r = resolved.unwrap_or(&empty);
    let nodes: Vec<&SyntaxNode> = args.descendants().skip(1).collect();
    let has_kind = |k: &str| nodes.iter().any(|n| n.kind() == k);
    let step_text = |rule: &str| -> Vec<&str> {
        r.trace.iter().filter(|s| s.rule == rule).map(|s| src.get(s.span.start..s.span.end).unwrap_or("")).collect()
    };
    let native_spans: HashSet<_> = r.trace.iter().filter(|s| s.rule == "native").map(|s| s.span).collect();

    if args.children().iter().any(|c| c.kind() == "string_literal") {
        out.push("STRING");
    }
    if r.candidates.iter().any(|c| oid_re().is_match(c)) {
        out.push("OID");
    }
    if has_kind("ternary_expression") {
        out.push("TEROP");
    }
    if r.has_rule("enum-constant") {
        out.push("ENUM");
    }
    let value_identifier = nodes.iter().any(|n| {
        n.kind() == "identifier"
            && match n.field() {
                Some("name") | Some("field") => false,
                Some("object") => !n.text(src).starts_with(char::is_uppercase),
                _ => true,
            }
    });
    if value_identifier {
        out.push("ID");
    }
    if has_kind("this") || r.has_rule("this-field") {
        out.push("THIS");
    }
    let own_call = nodes.iter().any(|n| {
        n.kind() == "method_invocation"
            && n.child_by_field("object").is_none_or(|o| o.kind() == "this")
            && !native_spans.contains(&n.span())
    });
    if r.has_rule("method-return") || own_call {
        out.push("METHOD");
    }
    if r.has_rule("static-field") {
        out.push("STATIC");
    }
    if r.residuals.contains(&Residual::Native) || r.has_rule("native") {
        out.push("NATIVE");
    }
    if r.has_rule("base64") {
        out.push("BAS64");
    }
    if r.has_rule("append-chain") {
        out.push("STRBUF");
    }
    if r.has_rule("concat") || nodes.iter().any(|n| n.kind() == "binary_expression" && n.operator() == Some("+")) {
        out.push("CONCT");
    }
    let slash_literal = nodes
        .iter()
        .filter(|n| n.kind() == "string_literal")
        .map(|n| n.text(src))
        .chain(step_text("literal"))
        .any(|t| decode_java_literal(t).as_deref() == Some("/"));
    let slash_name = nodes
        .iter()
        .filter(|n| n.kind() == "identifier")
        .map(|n| n.text(src))
        .chain(step_text("local"))
        .chain(step_text("field"))
        .chain(step_text("static-field"))
        .any(|t| separator_re().is_match(t));
    if slash_literal || slash_name {
        out.push("SEPRT");
    }
    let string_call = nodes.iter().any(|n| {
        n.kind() == "method_invocation"
            && n.child_by_field("object").is_some()
            && n.child_by_field("name").is_some_and(|m| STRING_METHODS.contains(&m.text(src)))
    });
    if r.has_rule("string-op") || r.has_rule("format") || string_call {
        out.push("STROP");
    }
    out
}

/// Everything the flexible rules need to know about a method body.
#[derive(Debug, Clone)]
pub struct FlexFacts {
    pub labels: LabelSet,
    /// The body is empty and the declaration has one.
    pub empty_body: bool,
    /// Delegates, within two hops, to an empty or trivially accepting method.
    pub trivial_delegate: bool,
    /// A SHA-1 digest takes part in a comparison.
    pub sha1_comparison: bool,
    /// Certificate material is compared against a hard-coded constant.
    pub hardcoded_comparison: bool,
}

const LOG_METHODS: &[&str] = &["printStackTrace", "println", "print", "printf"];
const COMPARISONS: &[&str] =
    &["equals", "equalsIgnoreCase", "contentEquals", "compareTo", "compareToIgnoreCase", "contains", "isEqual", "matches"];
const CERT_MATERIAL: &[&str] = &[
    "getSubjectDN", "getIssuerDN", "getPublicKey", "getEncoded", "getSubjectX500Principal", "getIssuerX500Principal",
    "getSerialNumber", "getName",
];
const LIST_TYPES: &[&str] = &["List", "ArrayList", "LinkedList", "Collection", "Set", "HashSet"];
const STRING_COMPARE: &[&str] = &[
    "equals", "equalsIgnoreCase", "contains", "startsWith", "endsWith", "compareTo", "compareToIgnoreCase", "matches",
    "indexOf", "contentEquals", "toUpperCase", "toLowerCase", "substring", "trim", "replace", "split",
];

fn digest_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^(SHA-?1|SHA-?224|SHA-?256|SHA-?384|SHA-?512|MD5|MD2)$")
}

fn sha1_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, r"(?i)^SHA-?1$|sha1")
}

struct Call<'n> {
    node: &'n SyntaxNode,
    name: &'n str,
    object: Option<&'n SyntaxNode>,
    in_log: bool,
}

struct Throw<'n> {
    ty: &'n str,
    in_if: bool,
    in_catch: bool,
}

#[derive(Default)]
struct Body<'n> {
    calls: Vec<Call<'n>>,
    throws: Vec<Throw<'n>>,
    names: HashSet<&'n str>,
    literals: Vec<String>,
    has_this: bool,
    has_null: bool,
    has_length: bool,
    assignments: usize,
    value_returns: usize,
    comparisons: Vec<&'n SyntaxNode>,
}

fn is_log_call(name: &str, object: Option<&str>) -> bool {
    if name == "printStackTrace" {
        return true;
    }
    let Some(obj) = object else { return false };
    if matches!(obj, "System.out" | "System.err") {
        return LOG_METHODS.contains(&name);
    }
    let last = obj.rsplit('.').next().unwrap_or(obj);
    matches!(last, "Log" | "Timber" | "Slog") || last.to_ascii_lowercase().contains("log")
}

fn walk<'n>(node: &'n SyntaxNode, src: &'n str, in_if: bool, in_catch: bool, in_log: bool, out: &mut Body<'n>) {
    let mut in_if = in_if;
    let mut in_catch = in_catch;
    let mut in_log = in_log;
    match node.kind() {
        "method_invocation" => {
            let name = node.child_by_field("name").map(|n| n.text(src)).unwrap_or("");
            let object = node.child_by_field("object");
            let log = is_log_call(name, object.map(|o| o.text(src)));
            out.calls.push(Call { node, name, object, in_log });
            if COMPARISONS.contains(&name) {
                out.comparisons.push(node);
            }
            in_log |= log;
        }
        "throw_statement" => {
            let ty = node
                .first_child()
                .filter(|c| c.kind() == "object_creation_expression")
                .and_then(|c| c.child_by_field("type"))
                .map(|t| t.text(src))
                .unwrap_or("");
            out.throws.push(Throw { ty: ty.rsplit('.').next().unwrap_or(ty), in_if, in_catch });
        }
        "if_statement" => {
            // Only the branches are guarded; the condition itself is not.
            if let Some(c) = node.child_by_field("condition") {
                walk(c, src, in_if, in_catch, in_log, out);
            }
            for f in ["consequence", "alternative"] {
                if let Some(b) = node.child_by_field(f) {
                    walk(b, src, true, in_catch, in_log, out);
                }
            }
            return;
        }
        "catch_clause" => in_catch = true,
        "identifier" | "type_identifier" => {
            out.names.insert(node.text(src));
        }
        "string_literal" => {
            if let Some(s) = decode_java_literal(node.text(src)) {
                out.literals.push(s);
            }
        }
        "this" => out.has_this = true,
        "null_literal" => out.has_null = true,
        "field_access" => {
            if node.child_by_field("field").is_some_and(|f| f.text(src) == "length") {
                out.has_length = true;
            }
        }
        "assignment_expression" => out.assignments += 1,
        "return_statement" => {
            if node.first_child().is_some() {
                out.value_returns += 1;
            }
        }
        "ternary_expression" | "switch_expression" => in_if = true,
        _ => {}
    }
    for c in node.children() {
        walk(c, src, in_if, in_catch, in_log, out);
    }
}

fn scan_body<'n>(body: &'n SyntaxNode, src: &'n str) -> Body<'n> {
    let mut out = Body::default();
    for c in body.children() {
        walk(c, src, false, false, false, &mut out);
    }
    out
}

/// Bodies that accept anything: `{}`, `{ return; }` or `{ return true; }`.
fn trivially_accepting(body: &SyntaxNode) -> bool {
    match body.children() {
        [] => true,
        [only] if only.kind() == "return_statement" => match only.first_child() {
            None => true,
            Some(v) => v.kind() == "true",
        },
        _ => false,
    }
}

/// Labels whose presence means some checking happens in a body.
const CHECKING: &[&str] = &[
    "VER", "CERPAT", "TMFAC", "ISTRST", "VAL", "HASH", "ENCOD", "GETPUB", "GETSUB", "GETISR", "CERFAC", "PKIX",
    "STROP", "LIST", "ARR", "BIGINT", "NATIVE",
];

struct Ctx<'a> {
    src: &'a str,
    index: &'a UnitIndex,
    class: &'a str,
}

/// In-unit methods called without a receiver (or on `this`).
fn own_targets<'a>(ctx: &Ctx<'a>, b: &Body<'_>) -> Vec<(&'a str, Option<&'a SyntaxNode>, bool)> {
    let mut out = Vec::new();
    for c in &b.calls {
        if c.object.is_some_and(|o| o.kind() != "this") {
            continue;
        }
        let arity = c.node.child_by_field("arguments").map_or(0, |a| a.children().len());
        if let Some((_, m)) = ctx.index.method(Some(ctx.class), c.name, arity) {
            out.push((m.name.as_str(), m.body.as_ref(), m.is_native));
        }
    }
    out
}

fn body_labels(ctx: &Ctx<'_>, body: &SyntaxNode, b: &Body<'_>, params: &[(String, String)]) -> Vec<&'static str> {
    let src = ctx.src;
    let mut out = Vec::new();
    let called = |n: &str| b.calls.iter().any(|c| c.name == n);
    let named = |n: &str| b.names.contains(n);
    if b.throws.iter().any(|t| t.ty == "IllegalArgumentException") {
        out.push("ILL");
    }
    if b.throws.iter().any(|t| t.ty == "CertificateException" && t.in_if && !t.in_catch) {
        out.push("CEXP");
    }
    if b.throws.iter().any(|t| matches!(t.ty, "NullPointerException" | "AssertionError") && !t.in_if && !t.in_catch) {
        out.push("NEXP");
    }
    let log_calls = b.calls.iter().filter(|c| is_log_call(c.name, c.object.map(|o| o.text(src)))).count();
    let all_logging = b.calls.iter().all(|c| c.in_log || is_log_call(c.name, c.object.map(|o| o.text(src))));
    if log_calls > 0 && all_logging && b.throws.is_empty() && b.assignments == 0 && b.value_returns == 0 {
        out.push("LOG");
    }
    let targets = own_targets(ctx, b);
    if targets.iter().any(|(_, _, native)| *native) {
        out.push("NATIVE");
    }
    let delegate = b.calls.iter().any(|c| c.name == "checkServerTrusted" && c.object.is_some_and(|o| o.kind() != "this"));
    if targets.iter().any(|(_, _, native)| !native) || delegate {
        out.push("METHOD");
    }
    if b.has_this {
        out.push("THIS");
    }
    if called("isTrusted") {
        out.push("ISTRST");
    }
    if called("checkValidity") {
        out.push("VAL");
    }
    if b.has_length {
        out.push("LEN");
    }
    if b.has_null {
        out.push("NULL");
    }
    if LIST_TYPES.iter().any(|t| named(t)) || ["add", "addAll", "remove", "asList"].iter().any(|m| called(m)) {
        out.push("LIST");
    }
    if named("CertificateFactory") {
        out.push("CERFAC");
    }
    if called("verify") {
        out.push("VER");
    }
    let arrays = |c: &Call<'_>| c.object.is_some_and(|o| o.text(src) == "Arrays");
    if b.calls.iter().any(|c| STRING_COMPARE.contains(&c.name) && !arrays(c)) {
        out.push("STROP");
    }
    if let Some((auth, _)) = params.get(1) {
        if named(auth) {
            out.push("AUTH");
        }
    }
    if called("getEncoded") {
        out.push("ENCOD");
    }
    if b.calls.iter().any(arrays) {
        out.push("ARR");
    }
    if named("BigInteger") {
        out.push("BIGINT");
    }
    if named("TrustManagerFactory") {
        out.push("TMFAC");
    }
    if called("getPublicKey") {
        out.push("GETPUB");
    }
    if called("getIssuerDN") {
        out.push("GETISR");
    }
    if called("getSubjectDN") {
        out.push("GETSUB");
    }
    if named("MessageDigest") || b.literals.iter().any(|l| digest_re().is_match(l)) {
        out.push("HASH");
    }
    if named("CertPathValidator") {
        out.push("CERPAT");
    }
    if named("PKIXParameters") || named("PKIXBuilderParameters") {
        out.push("PKIX");
    }
    if called("checkClientTrusted") {
        out.push("CLIENT");
    }
    if body.children().is_empty() {
        out.push("EMPTY");
    }
    out
}

/// True if some call chain of at most `hops_left` in-unit calls from `b`
/// reaches a method that accepts anything.
fn reaches_trivial(ctx: &Ctx<'_>, b: &Body<'_>, hops_left: usize) -> bool {
    if hops_left == 0 {
        return false;
    }
    for (_, body, native) in own_targets(ctx, b) {
        let Some(body) = body else { continue };
        if native {
            continue;
        }
        if trivially_accepting(body) {
            return true;
        }
        let inner = scan_body(body, ctx.src);
        let labels = body_labels(ctx, body, &inner, &[]);
        if !labels.iter().any(|l| CHECKING.contains(l)) && reaches_trivial(ctx, &inner, hops_left - 1) {
            return true;
        }
    }
    false
}

fn is_constant(node: &SyntaxNode, src: &str) -> bool {
    node.descendants().any(|n| {
        n.kind() == "string_literal"
            || (n.kind() == "identifier" && {
                let t = n.text(src);
                t.len() > 1 && t.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
            })
    })
}

/// Analyse a flexible declaration.
pub fn flexible_facts(site: &InvocationSite) -> FlexFacts {
    let src = site.source();
    let index = UnitIndex::build(&site.unit);
    let ctx = Ctx { src, index: &index, class: &site.enclosing_class };
    let params = params_of(&site.node, src);
    let mut names: Vec<&'static str> = Vec::new();
    let Some(body) = &site.subtree else {
        names.push(if has_modifier(&site.node, src, "native") { "NATIVD" } else { "ABS" });
        names.push("EMPTY");
        return FlexFacts {
            labels: LabelSet::from_names(Category::Flexible, names),
            empty_body: false,
            trivial_delegate: false,
            sha1_comparison: false,
            hardcoded_comparison: false,
        };
    };
    let b = scan_body(body, src);
    names.extend(body_labels(&ctx, body, &b, &params));
    let checks = names.iter().any(|l| CHECKING.contains(l));
    let trivial_delegate = !checks && reaches_trivial(&ctx, &b, 2);
    let sha1 = b.literals.iter().any(|l| sha1_re().is_match(l))
        || b.calls.iter().any(|c| sha1_re().is_match(c.name))
        || b.names.iter().any(|n| sha1_re().is_match(n));
    let sha1_comparison = sha1 && !b.comparisons.is_empty();
    let material = b.calls.iter().any(|c| CERT_MATERIAL.contains(&c.name));
    let hardcoded_comparison = material && b.comparisons.iter().any(|c| is_constant(c, src));
    FlexFacts {
        labels: LabelSet::from_names(Category::Flexible, names),
        empty_body: body.children().is_empty(),
        trivial_delegate,
        sha1_comparison,
        hardcoded_comparison,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevalenceRow {
    pub category: Category,
    /// `basic` or `composite`.
    pub kind: String,
    pub label: String,
    pub count: usize,
}

/// Lower-bound counts of sites per basic label and per observed label
/// combination. Only nonzero rows are returned.
pub fn prevalence_report<'a, I>(labelled: I) -> Vec<PrevalenceRow>
where
    I: IntoIterator<Item = &'a LabelSet>,
{
    let mut basic: BTreeMap<(Category, usize, &'static str), usize> = BTreeMap::new();
    let mut composite: BTreeMap<(Category, String), usize> = BTreeMap::new();
    for set in labelled {
        if set.is_unknown() {
            *basic.entry((set.category, usize::MAX, UNKNOWN_API)).or_default() += 1;
            continue;
        }
        for l in set.labels() {
            *basic.entry((set.category, l.position(), l.name)).or_default() += 1;
        }
        if set.is_composite() {
            *composite.entry((set.category, set.composite_name())).or_default() += 1;
        }
    }
    let mut rows: Vec<PrevalenceRow> = basic
        .into_iter()
        .map(|((category, _, label), count)| PrevalenceRow { category, kind: "basic".into(), label: label.into(), count })
        .collect();
    rows.extend(
        composite
            .into_iter()
            .map(|((category, label), count)| PrevalenceRow { category, kind: "composite".into(), label, count }),
    );
    rows.sort_by_key(|a| (a.category, a.kind == "composite"));
    rows
}

pub fn prevalence_csv(rows: &[PrevalenceRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{canonical_signatures, extract_sites, ApiKind};
    use crate::resolve::resolve;
    use crate::syntax::parse_unit;
    use std::sync::Arc;

    fn sites(src: &str) -> Vec<InvocationSite> {
        let unit = Arc::new(parse_unit("T.java", src).unwrap());
        extract_sites(&unit, &canonical_signatures(&ApiKind::CANONICAL))
    }

    fn labels(src: &str) -> Vec<&'static str> {
        let site = sites(src).remove(0);
        let resolved = site
            .subtree
            .as_ref()
            .and_then(|a| a.first_child().cloned())
            .filter(|_| site.category() == Category::Restrictive)
            .map(|arg| resolve(&arg, &site, Default::default()));
        classify(&site, resolved.as_ref()).names()
    }

    #[test]
    fn closed_sets() {
        assert!(TaxonomyLabel::new("STRBUF", Category::Restrictive).is_some());
        assert!(TaxonomyLabel::new("STRBUF", Category::Flexible).is_none());
        assert!(TaxonomyLabel::new("CLIENT", Category::Flexible).is_some());
    }

    #[test]
    fn restrictive_examples() {
        assert_eq!(labels(r#"class A { void f() { Cipher.getInstance("DES"); } }"#), ["STRING"]);
        assert_eq!(labels(r#"class A { void f() { Cipher.getInstance("1.2.840.113549.3.2"); } }"#), ["OID", "STRING"]);
        assert_eq!(labels("class A { void f() { Cipher.getInstance(); } }"), ["EMPTY"]);
        let sb = labels(
            r#"class A { void f() { StringBuffer sb = new StringBuffer("DESede"); sb.append("/CBC/NoPadding");
               Cipher.getInstance(sb.toString()); } }"#,
        );
        assert!(sb.contains(&"STRBUF") && sb.contains(&"ID"), "{sb:?}");
        let t = labels(r#"class A { static final String A1 = "x", B1 = "y"; void f(boolean z2) { Cipher.getInstance(z2 ? A1 : B1); } }"#);
        assert!(t.contains(&"TEROP") && t.contains(&"ID"), "{t:?}");
    }

    #[test]
    fn flexible_examples() {
        let trust = |body: &str| {
            labels(&format!(
                "class T {{ public void checkServerTrusted(X509Certificate[] chain, String authType) throws CertificateException {body} \
                 public void checkClientTrusted(X509Certificate[] chain, String authType) throws CertificateException {{}} }}"
            ))
        };
        assert_eq!(trust("{}"), ["EMPTY"]);
        assert_eq!(trust(r#"{ for (X509Certificate c : chain) { Log.e("T", "Certificate:" + c); } }"#), ["LOG"]);
        assert_eq!(
            trust(r#"{ try { checkClientTrusted(chain, authType); } catch (Exception e) { throw new CertificateException("no", e); } }"#),
            ["METHOD", "AUTH", "CLIENT"]
        );
        assert_eq!(trust("{ for (X509Certificate c : chain) { c.checkValidity(); } }"), ["VAL"]);
    }

    #[test]
    fn signature_and_match() {
        let all = sites(
            r#"class A { void f(boolean z2) { Cipher.getInstance(z2 ? CBC_PADDING : CBC_NOPADDING);
               Cipher.getInstance("AES"); Cipher.getInstance(); } }"#,
        );
        let sigs: Vec<_> = all.iter().map(signature_of).collect();
        assert_eq!(sigs[0], ArgumentSignature::from_pairs([("identifier", 3), ("ternary_expression", 1)]));
        assert_eq!(sigs[0].to_string(), "{'identifier': 3, 'ternary_expression': 1}");
        assert_eq!(sigs[1], ArgumentSignature::from_pairs([("string_literal", 1)]));
        assert!(sigs[2].is_empty());
        let pairs: Vec<_> = all.iter().map(|s| s.id.as_str()).zip(sigs.iter()).collect();
        assert_eq!(match_signature(pairs.clone(), &sigs[1]), [all[1].id.clone()]);
        assert_eq!(match_signature(pairs, &ArgumentSignature::default()), [all[2].id.clone()]);
    }

    #[test]
    fn prevalence_counts_sites() {
        let empty = LabelSet::from_names(Category::Flexible, ["EMPTY"]);
        let rows = prevalence_report([&empty, &empty, &empty]);
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].label.as_str(), rows[0].count), ("EMPTY", 3));
        assert!(prevalence_csv(&rows).starts_with("category,kind,label,count\nflexible,basic,EMPTY,3"));
    }
}
