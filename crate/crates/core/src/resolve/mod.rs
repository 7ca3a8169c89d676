//! Effective-value resolution for API parameters.
//!
//! [`resolve`] runs a bounded interpreter over the enclosing class and
//! collects every value an expression takes. Anything it cannot follow
//! becomes a [`Residual`] marker instead of a guess.

pub(crate) mod index;
mod interp;
mod value;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::InvocationSite;
use crate::syntax::{decode_java_literal, SourceUnit, Span, SyntaxNode};

pub(crate) use index::UnitIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Residual {
    Unknown,
    Native,
    Network,
    ExternalInput,
    DepthExceeded,
}

impl Residual {
    pub fn as_str(self) -> &'static str {
        match self {
            Residual::Unknown => "UNKNOWN",
            Residual::Native => "NATIVE",
            Residual::Network => "NETWORK",
            Residual::ExternalInput => "EXTERNAL_INPUT",
            Residual::DepthExceeded => "DEPTH_EXCEEDED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionBudget {
    /// Field reads, method calls and enum payloads followed per path.
    pub max_indirection: usize,
    /// Larger value sets collapse to `DEPTH_EXCEEDED`.
    pub max_candidates: usize,
    /// Interpreter steps before giving up.
    pub max_steps: usize,
}

impl Default for ResolutionBudget {
    fn default() -> Self {
        ResolutionBudget { max_indirection: 2, max_candidates: 16, max_steps: 10_000 }
    }
}

impl ResolutionBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_indirection == 0 || self.max_candidates == 0 || self.max_steps == 0 {
            return Err(Error::Contract(format!("budget values must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub rule: String,
    pub span: Span,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedValue {
    pub candidates: BTreeSet<String>,
    pub residuals: BTreeSet<Residual>,
    pub trace: Vec<TraceStep>,
    /// Concrete pieces of partially unknown concatenations. Never candidates.
    #[serde(skip_serializing_if = "BTreeSet::is_empty")]
    pub fragments: BTreeSet<String>,
}

impl ResolvedValue {
    pub fn has_rule(&self, rule: &str) -> bool {
        self.trace.iter().any(|s| s.rule == rule)
    }

    pub fn is_concrete(&self) -> bool {
        self.residuals.is_empty() && !self.candidates.is_empty()
    }

    /// Candidates as passed to the API, ignoring empty strings.
    pub fn nonempty_candidates(&self) -> impl Iterator<Item = &String> {
        self.candidates.iter().filter(|c| !c.is_empty())
    }
}

/// Resolve `expr`, which must lie inside the site's unit.
pub fn resolve(expr: &SyntaxNode, site: &InvocationSite, budget: ResolutionBudget) -> ResolvedValue {
    resolve_in_unit(expr, &site.unit, budget)
}

/// Resolve an expression of a parsed unit without an extracted site.
pub fn resolve_in_unit(expr: &SyntaxNode, unit: &SourceUnit, budget: ResolutionBudget) -> ResolvedValue {
    let index = UnitIndex::build(unit);
    resolve_with_index(expr, unit, &index, budget)
}

pub(crate) fn resolve_with_index(
    expr: &SyntaxNode,
    unit: &SourceUnit,
    index: &UnitIndex,
    budget: ResolutionBudget,
) -> ResolvedValue {
    let path = unit.root.path_to(expr.span());
    // The path ends at the deepest node with a matching span; make sure the
    // target is the node we were given.
    let target = path.iter().rev().find(|n| n.ptr_eq(expr)).map(|n| (*n).clone()).unwrap_or_else(|| expr.clone());
    let mut interp = interp::Interp::new(&unit.text, index, budget);
    let eval = interp.run_to(&target, &path);
    // Only steps the result actually depends on; the enclosing method may do
    // plenty of unrelated work.
    let trace = interp.trace.into_iter().enumerate().filter(|(i, _)| eval.deps.contains(&(*i as u32))).map(|(_, s)| s).collect();
    let mut out = ResolvedValue { trace, fragments: interp.fragments, ..Default::default() };
    for v in &eval.vals {
        match v.render() {
            Some(s) => {
                out.candidates.insert(s);
            }
            None => {
                out.residuals.insert(Residual::Unknown);
            }
        }
    }
    out.residuals.extend(eval.res.iter().copied());
    if out.candidates.is_empty() && out.residuals.is_empty() {
        out.residuals.insert(Residual::Unknown);
    }
    out.fragments.retain(|f| !out.candidates.contains(f));
    out
}

/// String literals in the enclosing method plus every literal the resolver
/// read while resolving.
pub fn visible_literals(site: &InvocationSite, resolved: &ResolvedValue) -> BTreeSet<String> {
    let src: &str = &site.unit.text;
    let mut out = BTreeSet::new();
    let path = site.unit.root.path_to(site.node.span());
    let scope = path
        .iter()
        .rev()
        .find(|n| {
            matches!(n.kind(), "method_declaration" | "constructor_declaration" | "static_initializer" | "field_declaration")
        })
        .copied()
        .unwrap_or(&site.node);
    for n in scope.descendants() {
        if n.kind() == "string_literal" {
            if let Some(s) = decode_java_literal(n.text(src)) {
                out.insert(s);
            }
        }
    }
    for step in &resolved.trace {
        if step.rule != "literal" {
            continue;
        }
        let raw = src.get(step.span.start..step.span.end).unwrap_or("");
        if raw.starts_with('"') {
            if let Some(s) = decode_java_literal(raw) {
                out.insert(s);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_unit;

    fn resolve_arg(src: &str, budget: ResolutionBudget) -> ResolvedValue {
        let unit = parse_unit("T.java", src).unwrap();
        let call = unit
            .root
            .descendants()
            .find(|n| n.kind() == "method_invocation" && n.child_by_field("name").is_some_and(|m| m.text(&unit.text) == "getInstance"))
            .expect("call")
            .clone();
        let arg = call.child_by_field("arguments").and_then(|a| a.first_child()).expect("arg").clone();
        resolve_in_unit(&arg, &unit, budget)
    }

    fn cands(r: &ResolvedValue) -> Vec<&str> {
        r.candidates.iter().map(String::as_str).collect()
    }

    #[test]
    fn literal_and_replace() {
        let r = resolve_arg(r#"class A { void f() { Cipher.getInstance("DE$S".replace("$", "")); } }"#, Default::default());
        assert_eq!(cands(&r), ["DES"]);
        assert!(r.residuals.is_empty());
        assert!(r.has_rule("string-op"));
    }

    #[test]
    fn parameter_is_external() {
        let r = resolve_arg("class A { void f(String t) { Cipher.getInstance(t); } }", Default::default());
        assert!(r.candidates.is_empty());
        assert!(r.residuals.contains(&Residual::ExternalInput));
    }

    #[test]
    fn native_call() {
        let r = resolve_arg(
            "class A { static native String g(int i); void f() { Cipher.getInstance(g(1)); } }",
            Default::default(),
        );
        assert!(r.candidates.is_empty());
        assert_eq!(r.residuals, BTreeSet::from([Residual::Native]));
    }

    #[test]
    fn ternary_field_and_method() {
        let r = resolve_arg(
            r#"class A { static final String X = "AES"; int v;
               String t() { return v >= 2 ? "AES/GCM/NoPadding" : X; }
               void f() { Cipher.getInstance(t()); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["AES", "AES/GCM/NoPadding"]);
    }

    #[test]
    fn builder_chain() {
        let r = resolve_arg(
            r#"class A { void f() { StringBuilder sb = new StringBuilder(); sb.append("AES/EC");
               sb.append("B/PKCS7P"); sb.append("adding"); Cipher.getInstance(sb.toString()); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["AES/ECB/PKCS7Padding"]);
    }

    #[test]
    fn base64_and_new_string() {
        let r = resolve_arg(
            r#"class A { void f() { Cipher.getInstance(new String(Base64.decode("REVTL0NCQy9QS0NTNVBhZGRpbmc=", 2))); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["DES/CBC/PKCS5Padding"]);
    }

    #[test]
    fn xor_loop() {
        let r = resolve_arg(
            r#"class A { void f() { byte[] b = "AES/CBC/PKCS5Padding".getBytes(); int[] k = {6, 1, 1};
               for (int i = 0; i < 3; i++) { b[i + 4] = (byte) (b[i + 4] ^ k[i]); }
               Cipher.getInstance(new String(b)); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["AES/ECB/PKCS5Padding"]);
        assert!(r.has_rule("xor"));
    }

    #[test]
    fn trace_only_follows_the_argument() {
        let r = resolve_arg(
            r#"class A { void f() { String u = "x".replace("x", "y"); String t = "AES"; Cipher.getInstance(t); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["AES"]);
        assert!(!r.has_rule("string-op"));
        assert!(r.has_rule("local"));
    }

    #[test]
    fn unknown_condition_joins() {
        let r = resolve_arg(
            r#"class A { void f(boolean c) { String s = "A"; if (c) { s = "B"; } Cipher.getInstance(s); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["A", "B"]);
    }

    #[test]
    fn indirection_limit() {
        let src = r#"class A { static final String X = "DES"; static final String Y = X; static final String Z = Y;
                     void f() { Cipher.getInstance(Z); } }"#;
        let r = resolve_arg(src, Default::default());
        assert!(r.candidates.is_empty());
        assert!(r.residuals.contains(&Residual::DepthExceeded));
        let big = ResolutionBudget { max_indirection: 3, ..Default::default() };
        assert_eq!(cands(&resolve_arg(src, big)), ["DES"]);
    }

    #[test]
    fn enum_payload() {
        let r = resolve_arg(
            r#"enum M { ECB("AES/ECB/NoPadding"), GCM("AES/GCM/NoPadding"); final String t; M(String t) { this.t = t; } }
               class A { void f() { Cipher.getInstance(M.ECB.t); } }"#,
            Default::default(),
        );
        assert_eq!(cands(&r), ["AES/ECB/NoPadding"]);
    }
}
