//! Normalized Java syntax trees.
//!
//! Sources are parsed with tree-sitter and reduced to a tree that keeps only
//! *named* grammar nodes. Punctuation, keywords-as-tokens and comments never
//! appear as nodes. Operator tokens of expression nodes are kept as an
//! attribute so the value resolver can still evaluate them. String and
//! character literals are leaves: their internal fragments are dropped and the
//! literal is decoded from its source text instead.

use std::cell::RefCell;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use tree_sitter::{Language, Parser};

use crate::error::{Error, Result};

/// Byte range `[start, end)` into the unit's source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Kinds whose anonymous children carry an operator worth keeping.
const OPERATOR_KINDS: &[&str] = &[
    "binary_expression",
    "unary_expression",
    "update_expression",
    "assignment_expression",
];

/// Named kinds that are dropped during normalization.
const DROPPED_KINDS: &[&str] = &["line_comment", "block_comment"];

/// Literal kinds whose named internals are dropped.
const LEAF_LITERALS: &[&str] = &["string_literal", "character_literal", "text_block"];

struct NodeData {
    kind: &'static str,
    field: Option<&'static str>,
    operator: Option<&'static str>,
    span: Span,
    error: bool,
    children: Vec<SyntaxNode>,
}

impl Drop for NodeData {
    // Deeply nested expressions (long concatenation chains in obfuscated
    // code) would otherwise recurse once per level while dropping.
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.children);
        while let Some(node) = stack.pop() {
            if let Ok(mut data) = Arc::try_unwrap(node.0) {
                stack.append(&mut data.children);
            }
        }
    }
}

/// A named syntax node. Cloning is cheap; subtrees are shared.
#[derive(Clone)]
pub struct SyntaxNode(Arc<NodeData>);

impl SyntaxNode {
    pub fn kind(&self) -> &'static str {
        self.0.kind
    }

    /// Grammar field under which this node hangs in its parent, if any.
    pub fn field(&self) -> Option<&'static str> {
        self.0.field
    }

    /// Operator token for binary, unary, update and assignment expressions.
    pub fn operator(&self) -> Option<&'static str> {
        self.0.operator
    }

    pub fn span(&self) -> Span {
        self.0.span
    }

    pub fn children(&self) -> &[SyntaxNode] {
        &self.0.children
    }

    /// True if this node is, or directly wraps, a parse error.
    pub fn has_error(&self) -> bool {
        self.0.error
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.0.span.start..self.0.span.end]
    }

    pub fn child_by_field(&self, field: &str) -> Option<&SyntaxNode> {
        self.0.children.iter().find(|c| c.0.field == Some(field))
    }

    pub fn children_by_field<'a>(&'a self, field: &'a str) -> impl Iterator<Item = &'a SyntaxNode> + 'a {
        self.0.children.iter().filter(move |c| c.0.field == Some(field))
    }

    /// Children without a field name (e.g. the expression of a `return`).
    pub fn unnamed_field_children(&self) -> impl Iterator<Item = &SyntaxNode> {
        self.0.children.iter().filter(|c| c.0.field.is_none())
    }

    pub fn first_child(&self) -> Option<&SyntaxNode> {
        self.0.children.first()
    }

    /// Pre-order traversal including `self`.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    /// Number of named nodes strictly below this node.
    pub fn count_descendants(&self) -> usize {
        self.descendants().count() - 1
    }

    /// Chain of nodes from `self` down to the deepest node whose span
    /// contains `target`. Empty if `self` does not contain it.
    pub fn path_to(&self, target: Span) -> Vec<&SyntaxNode> {
        let mut path = Vec::new();
        if !self.span().contains(target) {
            return path;
        }
        let mut cur = self;
        path.push(cur);
        while let Some(next) = cur.children().iter().find(|c| c.span().contains(target)) {
            path.push(next);
            cur = next;
        }
        path
    }

    /// The node with exactly this span and kind, if present below `self`.
    pub fn find(&self, span: Span, kind: &str) -> Option<&SyntaxNode> {
        self.path_to(span).into_iter().rev().find(|n| n.span() == span && n.kind() == kind)
    }

    pub fn ptr_eq(&self, other: &SyntaxNode) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for SyntaxNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..{}]", self.kind(), self.span().start, self.span().end)?;
        if !self.children().is_empty() {
            f.debug_list().entries(self.children()).finish()?;
        }
        Ok(())
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a SyntaxNode>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a SyntaxNode;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children().iter().rev());
        Some(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseStatus {
    Ok,
    /// Parsed with localized error nodes; extraction still proceeds.
    Partial,
    /// Nothing usable was recovered; the unit is skipped.
    ParseFailed,
}

/// One parsed Java source file.
pub struct SourceUnit {
    pub path: String,
    pub text: Arc<str>,
    pub root: SyntaxNode,
    pub status: ParseStatus,
    line_starts: Vec<usize>,
}

impl SourceUnit {
    /// 1-based line number of a byte offset.
    pub fn line_of(&self, offset: usize) -> usize {
        match self.line_starts.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    pub fn text_of(&self, node: &SyntaxNode) -> &str {
        node.text(&self.text)
    }
}

impl fmt::Debug for SourceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceUnit")
            .field("path", &self.path)
            .field("status", &self.status)
            .field("root", &self.root)
            .finish()
    }
}

pub fn java_language() -> Language {
    tree_sitter_java::LANGUAGE.into()
}

/// Grammar node kinds indexed by kind id, with `'static` lifetime.
fn kind_names() -> &'static [&'static str] {
    static NAMES: OnceLock<Vec<&'static str>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let lang = java_language();
        (0..lang.node_kind_count() as u16)
            .map(|id| &*Box::leak(lang.node_kind_for_id(id).unwrap_or("").to_owned().into_boxed_str()))
            .collect()
    })
}

fn static_kind(node: &tree_sitter::Node<'_>) -> &'static str {
    kind_names().get(node.kind_id() as usize).copied().unwrap_or("ERROR")
}

/// Grammar field names indexed by field id, with `'static` lifetime.
fn field_names() -> &'static [Option<&'static str>] {
    static NAMES: OnceLock<Vec<Option<&'static str>>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let lang = java_language();
        (0..=lang.field_count() as u16)
            .map(|id| lang.field_name_for_id(id).map(|n| &*Box::leak(n.to_owned().into_boxed_str())))
            .collect()
    })
}

thread_local! {
    static PARSER: RefCell<Option<Parser>> = const { RefCell::new(None) };
}

fn with_parser<R>(f: impl FnOnce(&mut Parser) -> R) -> Result<R> {
    PARSER.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.is_none() {
            let mut parser = Parser::new();
            parser
                .set_language(&java_language())
                .map_err(|e| Error::Grammar(e.to_string()))?;
            *slot = Some(parser);
        }
        Ok(f(slot.as_mut().expect("parser initialized")))
    })
}

/// Parse Java source text into a normalized unit.
///
/// Syntax errors are recorded on the affected nodes; a unit is only marked
/// [`ParseStatus::ParseFailed`] when no type declaration survives.
pub fn parse_unit(path: impl Into<String>, text: &str) -> Result<SourceUnit> {
    let path = path.into();
    let tree = with_parser(|p| p.parse(text, None))?;
    let line_starts = std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let text: Arc<str> = Arc::from(text);
    let Some(tree) = tree else {
        return Ok(SourceUnit {
            root: empty_root(text.len()),
            path,
            text,
            status: ParseStatus::ParseFailed,
            line_starts,
        });
    };
    let root = normalize(tree.root_node());
    let status = if !tree.root_node().has_error() {
        ParseStatus::Ok
    } else if root.descendants().any(|n| is_type_declaration(n.kind()) && !n.has_error()) {
        ParseStatus::Partial
    } else {
        ParseStatus::ParseFailed
    };
    Ok(SourceUnit { path, text, root, status, line_starts })
}

fn empty_root(len: usize) -> SyntaxNode {
    SyntaxNode(Arc::new(NodeData {
        kind: "program",
        field: None,
        operator: None,
        span: Span::new(0, len),
        error: true,
        children: Vec::new(),
    }))
}

pub(crate) fn is_type_declaration(kind: &str) -> bool {
    matches!(
        kind,
        "class_declaration" | "interface_declaration" | "enum_declaration" | "record_declaration"
    )
}

struct Frame {
    kind: &'static str,
    field: Option<&'static str>,
    operator: Option<&'static str>,
    span: Span,
    error: bool,
    children: Vec<SyntaxNode>,
}

impl Frame {
    fn finish(self) -> SyntaxNode {
        SyntaxNode(Arc::new(NodeData {
            kind: self.kind,
            field: self.field,
            operator: self.operator,
            span: self.span,
            error: self.error,
            children: self.children,
        }))
    }
}

/// Iterative conversion of a tree-sitter tree into the named-node form.
fn normalize(ts_root: tree_sitter::Node<'_>) -> SyntaxNode {
    let mut cursor = ts_root.walk();
    let mut frames: Vec<Frame> = Vec::new();
    // Per visited node: did it push a frame?
    let mut pushed: Vec<bool> = Vec::new();
    let mut result = None;

    loop {
        let node = cursor.node();
        let field = cursor.field_id().and_then(|id| field_names().get(id.get() as usize).copied().flatten());
        let kind = static_kind(&node);
        let parent_is_leaf = frames.last().is_some_and(|f| LEAF_LITERALS.contains(&f.kind));

        let keep = node.is_named() && !node.is_missing() && !DROPPED_KINDS.contains(&kind) && !parent_is_leaf;
        if keep {
            frames.push(Frame {
                kind,
                field,
                operator: None,
                span: Span::new(node.start_byte(), node.end_byte()),
                error: node.is_error(),
                children: Vec::new(),
            });
        } else if let Some(top) = frames.last_mut() {
            if node.is_missing() {
                top.error = true;
            } else if !node.is_named() && top.operator.is_none() && OPERATOR_KINDS.contains(&top.kind)
                && (field == Some("operator") || top.kind == "update_expression") {
                    top.operator = Some(kind);
                }
        }
        pushed.push(keep);

        let descend = !(keep && LEAF_LITERALS.contains(&kind)) && node.child_count() > 0;
        if descend && cursor.goto_first_child() {
            continue;
        }

        // Leave nodes until a sibling is found.
        loop {
            if pushed.pop().unwrap_or(false) {
                let done = frames.pop().expect("frame for kept node").finish();
                match frames.last_mut() {
                    Some(parent) => parent.children.push(done),
                    None => result = Some(done),
                }
            }
            if cursor.goto_next_sibling() {
                break;
            }
            if !cursor.goto_parent() {
                return result.unwrap_or_else(|| empty_root(ts_root.end_byte()));
            }
        }
    }
}

/// Decode a Java string or character literal from its source text.
///
/// Handles the standard escapes, octal escapes and `\uXXXX` sequences
/// (including repeated `u`). Returns `None` for malformed input.
pub fn decode_java_literal(raw: &str) -> Option<String> {
    let quote = raw.chars().next()?;
    if !(quote == '"' || quote == '\'') || raw.len() < 2 || !raw.ends_with(quote) {
        return None;
    }
    let body = &raw[1..raw.len() - 1];
    let mut units: Vec<u16> = Vec::with_capacity(body.len());
    let mut chars = body.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u16; 2];
            units.extend_from_slice(c.encode_utf16(&mut buf));
            continue;
        }
        let esc = chars.next()?;
        let unit = match esc {
            'n' => '\n' as u16,
            't' => '\t' as u16,
            'r' => '\r' as u16,
            'b' => 0x08,
            'f' => 0x0c,
            's' => ' ' as u16,
            '0'..='7' => {
                let mut value = esc.to_digit(8)?;
                let max_digits = if esc <= '3' { 3 } else { 2 };
                for _ in 1..max_digits {
                    match chars.peek().and_then(|c| c.to_digit(8)) {
                        Some(d) => {
                            value = value * 8 + d;
                            chars.next();
                        }
                        None => break,
                    }
                }
                value as u16
            }
            'u' => {
                while chars.peek() == Some(&'u') {
                    chars.next();
                }
                let hex: String = (0..4).map(|_| chars.next()).collect::<Option<String>>()?;
                u16::from_str_radix(&hex, 16).ok()?
            }
            other => other as u16,
        };
        units.push(unit);
    }
    Some(String::from_utf16_lossy(&units))
}
