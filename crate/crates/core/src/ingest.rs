//! Locating crypto-API invocation sites in parsed units.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::syntax::{is_type_declaration, parse_unit, ParseStatus, SourceUnit, Span, SyntaxNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Restrictive,
    Flexible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ApiKind {
    RestrictiveCipherGetinstance,
    RestrictiveSecretkeyspec,
    FlexibleCheckServerTrusted,
    FlexibleHostnameVerifier,
    /// Call pattern added through configuration.
    CustomRestrictive,
    /// Method-declaration pattern added through configuration.
    CustomFlexible,
}

impl ApiKind {
    pub const CANONICAL: [ApiKind; 4] = [
        ApiKind::RestrictiveCipherGetinstance,
        ApiKind::RestrictiveSecretkeyspec,
        ApiKind::FlexibleCheckServerTrusted,
        ApiKind::FlexibleHostnameVerifier,
    ];

    pub fn category(self) -> Category {
        match self {
            ApiKind::RestrictiveCipherGetinstance | ApiKind::RestrictiveSecretkeyspec | ApiKind::CustomRestrictive => {
                Category::Restrictive
            }
            _ => Category::Flexible,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApiKind::RestrictiveCipherGetinstance => "RESTRICTIVE_CIPHER_GETINSTANCE",
            ApiKind::RestrictiveSecretkeyspec => "RESTRICTIVE_SECRETKEYSPEC",
            ApiKind::FlexibleCheckServerTrusted => "FLEXIBLE_CHECK_SERVER_TRUSTED",
            ApiKind::FlexibleHostnameVerifier => "FLEXIBLE_HOSTNAME_VERIFIER",
            ApiKind::CustomRestrictive => "CUSTOM_RESTRICTIVE",
            ApiKind::CustomFlexible => "CUSTOM_FLEXIBLE",
        }
    }

    pub fn parse(s: &str) -> Option<ApiKind> {
        ApiKind::CANONICAL
            .into_iter()
            .chain([ApiKind::CustomRestrictive, ApiKind::CustomFlexible])
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ApiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamShape {
    /// `(X509Certificate[], String)`, optionally followed by a socket/engine.
    CertificateChain,
    /// `(String, SSLSession)`.
    HostnameSession,
    Any,
}

/// A syntactic pattern that identifies one API.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApiSignature {
    /// `Receiver.method(...)` where the receiver's last name segment contains `receiver`.
    Call { kind: ApiKind, receiver: String, method: String },
    /// `new Type(...)`.
    Construct { kind: ApiKind, type_name: String },
    /// A method declaration (with or without body).
    Declaration { kind: ApiKind, method: String, arity: Option<usize>, shape: ParamShape },
}

impl ApiSignature {
    pub fn canonical(kind: ApiKind) -> Option<ApiSignature> {
        Some(match kind {
            ApiKind::RestrictiveCipherGetinstance => ApiSignature::Call {
                kind,
                receiver: "Cipher".into(),
                method: "getInstance".into(),
            },
            ApiKind::RestrictiveSecretkeyspec => ApiSignature::Construct { kind, type_name: "SecretKeySpec".into() },
            ApiKind::FlexibleCheckServerTrusted => ApiSignature::Declaration {
                kind,
                method: "checkServerTrusted".into(),
                arity: None,
                shape: ParamShape::CertificateChain,
            },
            ApiKind::FlexibleHostnameVerifier => ApiSignature::Declaration {
                kind,
                method: "verify".into(),
                arity: Some(2),
                shape: ParamShape::HostnameSession,
            },
            ApiKind::CustomRestrictive | ApiKind::CustomFlexible => return None,
        })
    }

    /// Parse a configuration entry: `Class.method` or `methodName(arity)`.
    pub fn parse(spec: &str) -> Option<ApiSignature> {
        let spec = spec.trim();
        if let Some(open) = spec.find('(') {
            let name = spec[..open].trim();
            let arity = spec[open + 1..].strip_suffix(')')?.trim().parse().ok()?;
            if !is_java_name(name) {
                return None;
            }
            return Some(ApiSignature::Declaration {
                kind: ApiKind::CustomFlexible,
                method: name.into(),
                arity: Some(arity),
                shape: ParamShape::Any,
            });
        }
        let (class, method) = spec.rsplit_once('.')?;
        if !is_java_name(class) || !is_java_name(method) {
            return None;
        }
        Some(ApiSignature::Call { kind: ApiKind::CustomRestrictive, receiver: class.into(), method: method.into() })
    }

    pub fn kind(&self) -> ApiKind {
        match self {
            ApiSignature::Call { kind, .. } | ApiSignature::Construct { kind, .. } | ApiSignature::Declaration { kind, .. } => {
                *kind
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ApiSignature::Call { receiver, method, .. } => format!("{receiver}.{method}"),
            ApiSignature::Construct { type_name, .. } => format!("new {type_name}"),
            ApiSignature::Declaration { method, arity, .. } => match arity {
                Some(a) => format!("{method}({a})"),
                None => method.clone(),
            },
        }
    }
}

fn is_java_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

pub fn canonical_signatures(kinds: &[ApiKind]) -> Vec<ApiSignature> {
    kinds.iter().filter_map(|k| ApiSignature::canonical(*k)).collect()
}

/// One extracted crypto-API call or implementation.
#[derive(Clone)]
pub struct InvocationSite {
    /// `path:offset` of the call or declaration.
    pub id: String,
    pub api: ApiKind,
    pub signature: String,
    pub unit: Arc<SourceUnit>,
    /// The call expression or method declaration.
    pub node: SyntaxNode,
    /// Argument list (restrictive) or body block (flexible). `None` marks a
    /// declaration without body (abstract or native).
    pub subtree: Option<SyntaxNode>,
    pub enclosing_class: String,
    pub enclosing_method: Option<String>,
    /// Member declarations of the enclosing class body.
    pub context: Vec<SyntaxNode>,
    pub start_line: usize,
    pub end_line: usize,
}

impl InvocationSite {
    pub fn category(&self) -> Category {
        self.api.category()
    }

    pub fn path(&self) -> &str {
        &self.unit.path
    }

    pub fn offset(&self) -> usize {
        self.node.span().start
    }

    pub fn source(&self) -> &str {
        &self.unit.text
    }

    pub fn text_of<'a>(&'a self, node: &SyntaxNode) -> &'a str {
        node.text(&self.unit.text)
    }

    /// True for flexible declarations that have no body.
    pub fn has_no_body(&self) -> bool {
        self.category() == Category::Flexible && self.subtree.is_none()
    }

    /// Modifier keywords of a flexible declaration.
    pub fn modifiers(&self) -> &str {
        self.node
            .children()
            .iter()
            .find(|c| c.kind() == "modifiers")
            .map(|m| m.text(&self.unit.text))
            .unwrap_or("")
    }
}

impl fmt::Debug for InvocationSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InvocationSite")
            .field("id", &self.id)
            .field("api", &self.api)
            .field("subtree", &self.subtree)
            .field("enclosing_class", &self.enclosing_class)
            .field("enclosing_method", &self.enclosing_method)
            .finish()
    }
}

/// Find every occurrence of the given APIs in a unit, ordered by offset.
pub fn extract_sites(unit: &Arc<SourceUnit>, apis: &[ApiSignature]) -> Vec<InvocationSite> {
    if unit.status == ParseStatus::ParseFailed {
        return Vec::new();
    }
    let src: &str = &unit.text;
    let mut sites = Vec::new();
    for node in unit.root.descendants() {
        for api in apis {
            let subtree = match (api, node.kind()) {
                (ApiSignature::Call { receiver, method, .. }, "method_invocation") => {
                    if !call_matches(node, src, receiver, method) {
                        continue;
                    }
                    node.child_by_field("arguments").cloned().map(Some)
                }
                (ApiSignature::Construct { type_name, .. }, "object_creation_expression") => {
                    let ty = node.child_by_field("type").map(|t| t.text(src)).unwrap_or("");
                    if last_segment(strip_generics(ty)) != type_name {
                        continue;
                    }
                    node.child_by_field("arguments").cloned().map(Some)
                }
                (ApiSignature::Declaration { method, arity, shape, .. }, "method_declaration") => {
                    if !declaration_matches(node, src, method, *arity, *shape) {
                        continue;
                    }
                    Some(node.child_by_field("body").cloned())
                }
                _ => continue,
            };
            let Some(subtree) = subtree else { continue };
            sites.push(make_site(unit, node, api, subtree));
            break;
        }
    }
    sites.sort_by_key(|s| s.offset());
    sites
}

fn strip_generics(ty: &str) -> &str {
    ty.split('<').next().unwrap_or(ty).trim()
}

fn last_segment(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name).trim()
}

fn call_matches(node: &SyntaxNode, src: &str, receiver: &str, method: &str) -> bool {
    let Some(name) = node.child_by_field("name") else { return false };
    if name.text(src) != method {
        return false;
    }
    match node.child_by_field("object") {
        Some(obj) if matches!(obj.kind(), "identifier" | "field_access" | "scoped_identifier") => {
            last_segment(obj.text(src)).contains(receiver)
        }
        _ => false,
    }
}

fn parameters(decl: &SyntaxNode) -> Vec<&SyntaxNode> {
    decl.child_by_field("parameters")
        .map(|p| {
            p.children()
                .iter()
                .filter(|c| matches!(c.kind(), "formal_parameter" | "spread_parameter"))
                .collect()
        })
        .unwrap_or_default()
}

fn declaration_matches(node: &SyntaxNode, src: &str, method: &str, arity: Option<usize>, shape: ParamShape) -> bool {
    if node.child_by_field("name").map(|n| n.text(src)) != Some(method) {
        return false;
    }
    let params = parameters(node);
    if arity.is_some_and(|a| a != params.len()) {
        return false;
    }
    let ty = |i: usize| -> &str { params[i].child_by_field("type").map(|t| t.text(src)).unwrap_or("") };
    match shape {
        ParamShape::Any => true,
        ParamShape::CertificateChain => {
            (params.len() == 2 || params.len() == 3)
                && ty(0).replace(' ', "").ends_with("[]")
                && ty(0).contains("Certificate")
                && last_segment(ty(1)) == "String"
        }
        ParamShape::HostnameSession => {
            params.len() == 2 && last_segment(ty(0)) == "String" && last_segment(ty(1)) == "SSLSession"
        }
    }
}

fn make_site(unit: &Arc<SourceUnit>, node: &SyntaxNode, api: &ApiSignature, subtree: Option<SyntaxNode>) -> InvocationSite {
    let src: &str = &unit.text;
    let path = unit.root.path_to(node.span());
    let mut enclosing_class = String::new();
    let mut enclosing_method = None;
    let mut context = Vec::new();
    for ancestor in path.iter().rev() {
        let kind = ancestor.kind();
        if enclosing_method.is_none() && matches!(kind, "method_declaration" | "constructor_declaration") {
            enclosing_method = ancestor.child_by_field("name").map(|n| n.text(src).to_string());
        }
        let anonymous = kind == "object_creation_expression" && ancestor.children().iter().any(|c| c.kind() == "class_body");
        if is_type_declaration(kind) || anonymous {
            enclosing_class = if anonymous {
                let ty = ancestor.child_by_field("type").map(|t| t.text(src)).unwrap_or("");
                format!("{}$anonymous", strip_generics(ty))
            } else {
                ancestor.child_by_field("name").map(|n| n.text(src).to_string()).unwrap_or_default()
            };
            let body = if anonymous {
                ancestor.children().iter().find(|c| c.kind() == "class_body")
            } else {
                ancestor.child_by_field("body")
            };
            if let Some(body) = body {
                for member in body.children() {
                    if member.kind() == "enum_body_declarations" {
                        context.extend(member.children().iter().cloned());
                    } else {
                        context.push(member.clone());
                    }
                }
            }
            break;
        }
    }
    let span: Span = node.span();
    InvocationSite {
        id: format!("{}:{}", unit.path, span.start),
        api: api.kind(),
        signature: api.label(),
        unit: Arc::clone(unit),
        node: node.clone(),
        subtree,
        enclosing_class,
        enclosing_method,
        context,
        start_line: unit.line_of(span.start),
        end_line: unit.line_of(span.end.saturating_sub(1).max(span.start)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Default, Clone)]
pub struct ScanOutcome {
    pub sites: Vec<InvocationSite>,
    pub warnings: Vec<ScanWarning>,
    pub files: usize,
}

/// All `*.java` files below `root`, as (relative display path, absolute path), sorted.
pub fn java_files(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut files: Vec<(String, PathBuf)> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "java"))
        .map(|e| {
            let rel = e.path().strip_prefix(root).unwrap_or(e.path());
            let display = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            (display, e.path().to_path_buf())
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Load and parse one file. Failures become warnings, never errors.
pub fn load_unit(display: &str, path: &Path) -> std::result::Result<SourceUnit, ScanWarning> {
    let warn = |kind: &str, message: String| ScanWarning { path: display.to_string(), kind: kind.to_string(), message };
    let bytes = std::fs::read(path).map_err(|e| warn("IO_ERROR", e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| warn("INVALID_UTF8", e.to_string()))?;
    let unit = parse_unit(display, &text).map_err(|e| warn("PARSE_FAILED", e.to_string()))?;
    if unit.status == ParseStatus::ParseFailed {
        return Err(warn("PARSE_FAILED", "no recoverable type declaration".into()));
    }
    Ok(unit)
}

/// Recursively scan `root` for the given APIs. Sites come back sorted by
/// (path, offset); unreadable or unparseable files only produce warnings.
pub fn scan_corpus(root: &Path, apis: &[ApiSignature], exec: Execution) -> Result<ScanOutcome> {
    let files = java_files(root)?;
    let per_file = exec::map(exec, &files, |(display, path)| match load_unit(display, path) {
        Ok(unit) => {
            let unit = Arc::new(unit);
            Ok(extract_sites(&unit, apis))
        }
        Err(w) => Err(w),
    });
    let mut outcome = ScanOutcome { files: files.len(), ..Default::default() };
    for result in per_file {
        match result {
            Ok(sites) => outcome.sites.extend(sites),
            Err(w) => {
                log::warn!("{}: {} ({})", w.path, w.kind, w.message);
                outcome.warnings.push(w);
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(src: &str) -> Arc<SourceUnit> {
        Arc::new(parse_unit("T.java", src).unwrap())
    }

    fn all_apis() -> Vec<ApiSignature> {
        canonical_signatures(&ApiKind::CANONICAL)
    }

    #[test]
    fn canonical_call() {
        let u = unit(r#"class A { void f() throws Exception { Cipher.getInstance("DES"); } }"#);
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 1);
        let s = &sites[0];
        assert_eq!(s.api, ApiKind::RestrictiveCipherGetinstance);
        let sub = s.subtree.as_ref().unwrap();
        assert_eq!(sub.kind(), "argument_list");
        assert_eq!(sub.children().len(), 1);
        assert_eq!(sub.children()[0].kind(), "string_literal");
        assert_eq!(s.enclosing_class, "A");
        assert_eq!(s.enclosing_method.as_deref(), Some("f"));
        assert_eq!(s.id, format!("T.java:{}", s.offset()));
    }

    #[test]
    fn typed_receiver_without_arguments() {
        let u = unit("class A { void f() { AESCipher.getInstance(); } }");
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 1);
        assert!(sites[0].subtree.as_ref().unwrap().children().is_empty());
    }

    #[test]
    fn empty_check_server_trusted() {
        let u = unit(
            "class T implements X509TrustManager { public void checkServerTrusted(X509Certificate[] c, String s) {} \
             public void checkClientTrusted(X509Certificate[] c, String s) {} }",
        );
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].api, ApiKind::FlexibleCheckServerTrusted);
        let body = sites[0].subtree.as_ref().unwrap();
        assert_eq!(body.kind(), "block");
        assert!(body.children().is_empty());
        assert_eq!(sites[0].context.len(), 2);
    }

    #[test]
    fn native_and_abstract_declarations_have_no_body() {
        let u = unit(
            "abstract class T { public native void checkServerTrusted(X509Certificate[] c, String s); } \
             abstract class U { public abstract void checkServerTrusted(X509Certificate[] c, String s) throws CertificateException; }",
        );
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 2);
        assert!(sites.iter().all(|s| s.has_no_body()));
        assert!(sites[0].modifiers().contains("native"));
    }

    #[test]
    fn hostname_verifier_in_anonymous_class() {
        let u = unit(
            "class A { HostnameVerifier v = new HostnameVerifier() { public boolean verify(String h, SSLSession s) { return true; } }; }",
        );
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].api, ApiKind::FlexibleHostnameVerifier);
        assert_eq!(sites[0].enclosing_class, "HostnameVerifier$anonymous");
    }

    #[test]
    fn secret_key_spec_and_non_matches() {
        let u = unit(
            r#"class A { void f() { new SecretKeySpec(k, "AES"); MessageDigest.getInstance("SHA1"); getInstance("x"); } }"#,
        );
        let sites = extract_sites(&u, &all_apis());
        assert_eq!(sites.len(), 1);
        assert_eq!(sites[0].api, ApiKind::RestrictiveSecretkeyspec);
    }

    #[test]
    fn custom_signatures() {
        let call = ApiSignature::parse("MessageDigest.getInstance").unwrap();
        let decl = ApiSignature::parse("isTrusted(2)").unwrap();
        assert_eq!(call.kind(), ApiKind::CustomRestrictive);
        assert_eq!(decl.kind(), ApiKind::CustomFlexible);
        assert!(ApiSignature::parse("not valid!").is_none());
        let u = unit(r#"class A { boolean isTrusted(X509Certificate[] c, String a) { return true; } void g() { MessageDigest.getInstance("MD5"); } }"#);
        let sites = extract_sites(&u, &[call, decl]);
        assert_eq!(sites.len(), 2);
        assert_eq!(sites[0].category(), Category::Flexible);
    }

    #[test]
    fn scan_orders_by_path_and_records_failures() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("b/Z.java"), r#"class Z { void f() { Cipher.getInstance("AES"); } }"#).unwrap();
        std::fs::write(dir.path().join("a.java"), r#"class Y { void f() { Cipher.getInstance("DES"); } }"#).unwrap();
        std::fs::write(dir.path().join("bad.java"), "}}}} ((( @@@").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "Cipher.getInstance(\"DES\")").unwrap();
        let out = scan_corpus(dir.path(), &all_apis(), Execution::Parallel).unwrap();
        assert_eq!(out.sites.len(), 2);
        assert_eq!(out.sites[0].path(), "a.java");
        assert_eq!(out.sites[1].path(), "b/Z.java");
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].kind, "PARSE_FAILED");
    }

    #[test]
    fn missing_root_is_fatal() {
        let err = scan_corpus(Path::new("/definitely/not/here"), &all_apis(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::MissingRoot(_)));
    }
}
