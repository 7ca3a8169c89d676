//! Bounded concrete interpreter over the named-node tree.
//!
//! Values are sets ([`Eval`]); unknown `if`/loop conditions join or havoc.
//! Conditions tainted by `DEPTH_EXCEEDED` put the branch into degraded mode,
//! where values leaving the branch lose their candidates. That keeps a larger
//! budget from ever removing candidates.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::index::{ClassInfo, MethodInfo, UnitIndex};
use super::value::{self, base64_decode, from_units, java_format, java_trim, units, Elem, Eval, Value};
use super::{ResolutionBudget, Residual, TraceStep};
use crate::syntax::{decode_java_literal, Span, SyntaxNode};

const MAX_DEPTH: usize = 200;
const MAX_ARRAY: i64 = 1 << 16;

const NETWORK_METHODS: &[&str] = &[
    "readLine", "readUTF", "readAllBytes", "readString", "getInputStream", "openConnection", "openStream",
    "getResponseMessage", "getContent", "receive", "recv", "getHeaderField", "body", "string", "execute",
];
const NETWORK_RECEIVERS: &[&str] = &[
    "socket", "stream", "reader", "http", "url", "connection", "response", "client", "request", "channel",
];
const SECURE_RANDOM: &[&str] = &["nextBytes", "generateKey", "generateSeed", "generateKeyPair", "getInstanceStrong"];

#[derive(Debug, Clone)]
struct Local {
    ty: Elem,
    val: Eval,
    param: bool,
}

#[derive(Debug, Clone, Default)]
struct Frame {
    class: Option<String>,
    locals: HashMap<String, Local>,
    this_fields: HashMap<String, Eval>,
    returns: Option<Eval>,
    degraded: usize,
    entry: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flow {
    Normal,
    Break,
    Continue,
    /// Return or throw: the path leaves the method.
    Exit,
}

struct Target {
    node: SyntaxNode,
    hit: Option<Eval>,
}

pub(crate) struct Interp<'a> {
    src: &'a str,
    index: &'a UnitIndex,
    budget: ResolutionBudget,
    steps: usize,
    pub(crate) exhausted: bool,
    hops: usize,
    depth: usize,
    frames: Vec<Frame>,
    targets: Vec<Target>,
    pub(crate) trace: Vec<TraceStep>,
    seen: HashMap<(&'static str, Span), u32>,
    pub(crate) fragments: BTreeSet<String>,
}

fn is_container(kind: &str) -> bool {
    matches!(kind, "method_declaration" | "constructor_declaration" | "static_initializer")
}

impl<'a> Interp<'a> {
    pub(crate) fn new(src: &'a str, index: &'a UnitIndex, budget: ResolutionBudget) -> Self {
        Interp {
            src,
            index,
            budget,
            steps: 0,
            exhausted: false,
            hops: 0,
            depth: 0,
            frames: Vec::new(),
            targets: Vec::new(),
            trace: Vec::new(),
            seen: HashMap::new(),
            fragments: BTreeSet::new(),
        }
    }

    fn text(&self, n: &SyntaxNode) -> &'a str {
        n.text(self.src)
    }

    /// Record a step and make `val` depend on it.
    fn note(&mut self, rule: &'static str, node: &SyntaxNode, val: &mut Eval) {
        let idx = match self.seen.get(&(rule, node.span())) {
            Some(i) => *i,
            None => {
                let i = self.trace.len() as u32;
                self.trace.push(TraceStep { rule: rule.to_string(), span: node.span(), intermediate: Some(val.describe()) });
                self.seen.insert((rule, node.span()), i);
                i
            }
        };
        val.deps.insert(idx);
    }

    fn frame(&mut self) -> &mut Frame {
        if self.frames.is_empty() {
            self.frames.push(Frame::default());
        }
        self.frames.last_mut().expect("frame")
    }

    fn current_class(&self) -> Option<String> {
        self.frames.last().and_then(|f| f.class.clone())
    }

    fn depth_exceeded(&mut self, node: &SyntaxNode) -> Eval {
        let mut e = Eval::residual(Residual::DepthExceeded);
        self.note("depth-exceeded", node, &mut e);
        e
    }

    fn tick(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        self.steps += 1;
        if self.steps > self.budget.max_steps {
            self.exhausted = true;
            return false;
        }
        true
    }

    /// Execute the code around `target` and collect every value the target
    /// expression takes. `path` is the ancestor chain of `target`.
    pub(crate) fn run_to(&mut self, target: &SyntaxNode, path: &[&SyntaxNode]) -> Eval {
        let class = path
            .iter()
            .rev()
            .find(|n| crate::syntax::is_type_declaration(n.kind()))
            .and_then(|n| n.child_by_field("name"))
            .map(|n| n.text(self.src).to_string());
        let container = path.iter().rev().find(|n| {
            is_container(n.kind())
                || (n.kind() == "variable_declarator" && path.iter().any(|p| p.kind() == "field_declaration"))
                || (n.kind() == "block" && path.iter().any(|p| p.kind() == "class_body" && p.children().iter().any(|c| c.ptr_eq(n))))
        });
        let decl_ty = path
            .iter()
            .rev()
            .find(|n| n.kind() == "field_declaration")
            .and_then(|f| f.child_by_field("type"))
            .map(|t| Elem::from_type(t.text(self.src)))
            .unwrap_or(Elem::Other);
        let hit = match container {
            Some(c) => self.run_container(c, class, target, decl_ty),
            None => None,
        };
        let mut out = hit.unwrap_or_else(|| {
            let mut e = Eval::unknown();
            self.note("unknown", target, &mut e);
            e
        });
        if self.exhausted {
            out.res.insert(Residual::DepthExceeded);
            let mut e = Eval::residual(Residual::DepthExceeded);
            self.note("depth-exceeded", target, &mut e);
        }
        if out.vals.is_empty() && out.res.is_empty() {
            out.res.insert(Residual::Unknown);
        }
        out
    }

    fn run_container(&mut self, container: &SyntaxNode, class: Option<String>, target: &SyntaxNode, decl_ty: Elem) -> Option<Eval> {
        self.targets.push(Target { node: target.clone(), hit: None });
        let mut frame = Frame { class, entry: true, ..Default::default() };
        for (name, ty) in super::index::params_of(container, self.src) {
            frame.locals.insert(
                name,
                Local { ty: Elem::from_type(&ty), val: Eval::residual(Residual::ExternalInput), param: true },
            );
        }
        self.frames.push(frame);
        match container.kind() {
            "variable_declarator" => {
                if let Some(v) = container.child_by_field("value") {
                    self.eval_with_type(v, decl_ty);
                }
            }
            "static_initializer" => {
                if let Some(b) = container.children().iter().find(|c| c.kind() == "block") {
                    self.exec(b);
                }
            }
            "block" => {
                self.exec(container);
            }
            _ => {
                if let Some(b) = container.child_by_field("body") {
                    self.exec(b);
                }
            }
        }
        self.frames.pop();
        self.targets.pop().and_then(|t| t.hit)
    }

    fn hook(&mut self, node: &SyntaxNode, r: &Eval) {
        let degraded = self.frames.last().is_some_and(|f| f.degraded > 0);
        if let Some(t) = self.targets.last_mut() {
            if t.node.ptr_eq(node) {
                let v = if degraded { r.havoc(Residual::DepthExceeded) } else { r.clone() };
                match &mut t.hit {
                    Some(h) => h.union(v),
                    None => t.hit = Some(v),
                }
            }
        }
    }

    fn contains_target(&self, node: &SyntaxNode) -> bool {
        self.targets.last().is_some_and(|t| node.span().contains(t.node.span()))
    }

    // ---- statements ----

    fn exec(&mut self, s: &SyntaxNode) -> Flow {
        if !self.tick() || self.depth >= MAX_DEPTH {
            if !self.exhausted {
                self.exhausted = true;
            }
            return Flow::Exit;
        }
        self.depth += 1;
        let flow = self.exec_inner(s);
        self.depth -= 1;
        flow
    }

    fn exec_seq<'n>(&mut self, stmts: impl IntoIterator<Item = &'n SyntaxNode>) -> Flow {
        for c in stmts {
            let f = self.exec(c);
            if f != Flow::Normal {
                return f;
            }
        }
        Flow::Normal
    }

    fn exec_inner(&mut self, s: &SyntaxNode) -> Flow {
        match s.kind() {
            "block" | "constructor_body" | "switch_block_statement_group" | "switch_rule" => {
                self.exec_seq(s.children().iter().filter(|c| c.kind() != "switch_label"))
            }
            "local_variable_declaration" => {
                let base = s.child_by_field("type").map(|t| self.text(t)).unwrap_or("");
                for d in s.children_by_field("declarator") {
                    self.declare(d, base);
                }
                Flow::Normal
            }
            "expression_statement" => {
                if let Some(e) = s.first_child() {
                    self.eval(e);
                }
                Flow::Normal
            }
            "if_statement" => {
                let cond = s.child_by_field("condition").map(|c| self.eval(c)).unwrap_or_else(Eval::unknown);
                let then = s.child_by_field("consequence");
                let other = s.child_by_field("alternative");
                match cond.truth() {
                    Some(true) => then.map_or(Flow::Normal, |t| self.exec(t)),
                    Some(false) => other.map_or(Flow::Normal, |o| self.exec(o)),
                    None => self.exec_branches(&[then, other], cond.depth_tainted()),
                }
            }
            "while_statement" => {
                let (cond, body) = (s.child_by_field("condition"), s.child_by_field("body"));
                self.exec_loop(s, cond, body, &[], false)
            }
            "do_statement" => {
                let (cond, body) = (s.child_by_field("condition"), s.child_by_field("body"));
                self.exec_loop(s, cond, body, &[], true)
            }
            "for_statement" => {
                for init in s.children_by_field("init") {
                    if init.kind() == "local_variable_declaration" {
                        self.exec(init);
                    } else {
                        self.eval(init);
                    }
                }
                let updates: Vec<SyntaxNode> = s.children_by_field("update").cloned().collect();
                let (cond, body) = (s.child_by_field("condition"), s.child_by_field("body"));
                self.exec_loop(s, cond, body, &updates, false)
            }
            "enhanced_for_statement" => self.exec_foreach(s),
            "return_statement" => {
                let mut v = match s.first_child() {
                    Some(e) => self.eval(e),
                    None => Eval::unknown(),
                };
                let f = self.frame();
                if f.degraded > 0 {
                    v = v.havoc(Residual::DepthExceeded);
                }
                match &mut f.returns {
                    Some(r) => r.union(v),
                    None => f.returns = Some(v),
                }
                Flow::Exit
            }
            "throw_statement" => {
                if let Some(e) = s.first_child() {
                    self.eval(e);
                }
                Flow::Exit
            }
            "break_statement" => Flow::Break,
            "continue_statement" => Flow::Continue,
            "try_statement" | "try_with_resources_statement" => self.exec_try(s),
            "synchronized_statement" => s.child_by_field("body").map_or(Flow::Normal, |b| self.exec(b)),
            "labeled_statement" => s.children().last().map_or(Flow::Normal, |b| self.exec(b)),
            "switch_expression" => {
                self.exec_switch(s);
                Flow::Normal
            }
            "yield_statement" => {
                if let Some(e) = s.first_child() {
                    self.eval(e);
                }
                Flow::Break
            }
            "local_class_declaration" | "class_declaration" | "assert_statement" | "explicit_constructor_invocation"
            | "empty_statement" | "line_comment" | "block_comment" => Flow::Normal,
            _ => {
                self.eval(s);
                Flow::Normal
            }
        }
    }

    fn declare(&mut self, d: &SyntaxNode, base: &str) {
        let Some(name) = d.child_by_field("name") else { return };
        let name = self.text(name).to_string();
        let ty = Elem::from_type(base);
        let val = match d.child_by_field("value") {
            Some(v) => {
                let e = self.eval_with_type(v, ty);
                e.map(self.budget.max_candidates, |x| Some(ty.coerce(x.clone())))
            }
            None => Eval::unknown(),
        };
        self.frame().locals.insert(name, Local { ty, val, param: false });
    }

    fn eval_with_type(&mut self, v: &SyntaxNode, ty: Elem) -> Eval {
        if v.kind() == "array_initializer" {
            let r = self.eval_array_init(v, ty);
            self.hook(v, &r);
            r
        } else {
            self.eval(v)
        }
    }

    fn exec_branches(&mut self, branches: &[Option<&SyntaxNode>], degraded: bool) -> Flow {
        let (pre_locals, pre_this) = self.snapshot();
        let mut outs: Vec<(HashMap<String, Local>, HashMap<String, Eval>)> = Vec::new();
        let mut flows = Vec::new();
        for b in branches {
            self.restore(pre_locals.clone(), pre_this.clone());
            if degraded {
                self.frame().degraded += 1;
            }
            let flow = match b {
                Some(s) => self.exec(s),
                None => Flow::Normal,
            };
            if degraded {
                self.frame().degraded -= 1;
            }
            if flow != Flow::Exit {
                outs.push(self.snapshot());
                flows.push(flow);
            }
        }
        if outs.is_empty() {
            self.restore(pre_locals, pre_this);
            return Flow::Exit;
        }
        let cap = self.budget.max_candidates;
        let mut locals = HashMap::new();
        for (name, pre) in &pre_locals {
            let mut joined = Eval::default();
            let mut changed = false;
            for (l, _) in &outs {
                if let Some(v) = l.get(name) {
                    changed |= v.val != pre.val;
                    joined.union(v.val.clone());
                }
            }
            let joined = if degraded && changed { joined.havoc(Residual::DepthExceeded) } else { joined.capped(cap) };
            locals.insert(name.clone(), Local { ty: pre.ty, val: joined, param: pre.param });
        }
        let mut this_fields = HashMap::new();
        let keys: BTreeSet<&String> = outs.iter().flat_map(|(_, t)| t.keys()).collect();
        for k in keys {
            if outs.iter().all(|(_, t)| t.contains_key(k)) {
                let mut joined = Eval::default();
                let mut changed = false;
                for (_, t) in &outs {
                    let v = &t[k];
                    changed |= pre_this.get(k) != Some(v);
                    joined.union(v.clone());
                }
                let joined = if degraded && changed { joined.havoc(Residual::DepthExceeded) } else { joined.capped(cap) };
                this_fields.insert(k.clone(), joined);
            }
        }
        self.restore(locals, this_fields);
        if flows.iter().all(|f| *f == flows[0]) {
            flows[0]
        } else {
            Flow::Normal
        }
    }

    fn snapshot(&mut self) -> (HashMap<String, Local>, HashMap<String, Eval>) {
        let f = self.frame();
        (f.locals.clone(), f.this_fields.clone())
    }

    fn restore(&mut self, locals: HashMap<String, Local>, this_fields: HashMap<String, Eval>) {
        let f = self.frame();
        f.locals = locals;
        f.this_fields = this_fields;
    }

    /// Variables a loop may change: assignment and update targets, plus
    /// arrays/builders used as receivers or arguments.
    fn mutated_in(&self, node: &SyntaxNode) -> Vec<String> {
        let mut names = BTreeSet::new();
        let root_of = |mut n: &SyntaxNode| -> Option<SyntaxNode> {
            loop {
                match n.kind() {
                    "identifier" => return Some(n.clone()),
                    "array_access" => n = n.child_by_field("array")?,
                    "parenthesized_expression" => n = n.first_child()?,
                    "field_access" => {
                        let obj = n.child_by_field("object")?;
                        if obj.kind() == "this" {
                            return n.child_by_field("field").cloned();
                        }
                        return None;
                    }
                    _ => return None,
                }
            }
        };
        for n in node.descendants() {
            let target = match n.kind() {
                "assignment_expression" => n.child_by_field("left").and_then(root_of),
                "update_expression" => n.first_child().and_then(root_of),
                "method_invocation" => n.child_by_field("object").filter(|o| o.kind() == "identifier").cloned(),
                "argument_list" => {
                    for a in n.children().iter().filter(|a| a.kind() == "identifier") {
                        names.insert(self.text(a).to_string());
                    }
                    None
                }
                _ => None,
            };
            if let Some(t) = target {
                names.insert(self.text(&t).to_string());
            }
        }
        names.into_iter().collect()
    }

    fn havoc_vars(&mut self, names: &[String], r: Residual, assigned_only: &HashSet<String>) {
        let f = self.frame();
        for n in names {
            if let Some(l) = f.locals.get_mut(n) {
                let mutable = l.val.vals.iter().any(|v| matches!(v, Value::Array(..) | Value::Builder(_)));
                if assigned_only.contains(n) || mutable {
                    l.val = l.val.havoc(r);
                }
            } else if let Some(t) = f.this_fields.get_mut(n) {
                *t = t.havoc(r);
            }
        }
    }

    fn assigned_in(&self, node: &SyntaxNode) -> HashSet<String> {
        let mut out = HashSet::new();
        for n in node.descendants() {
            let t = match n.kind() {
                "assignment_expression" => n.child_by_field("left"),
                "update_expression" => n.first_child(),
                _ => None,
            };
            if let Some(mut t) = t {
                while t.kind() == "array_access" {
                    match t.child_by_field("array") {
                        Some(a) => t = a,
                        None => break,
                    }
                }
                if t.kind() == "field_access" {
                    if let Some(f) = t.child_by_field("field") {
                        out.insert(self.text(f).to_string());
                    }
                } else {
                    out.insert(self.text(t).to_string());
                }
            }
        }
        out
    }

    fn havoc_loop(&mut self, whole: &SyntaxNode, body: Option<&SyntaxNode>, tainted: bool) -> Flow {
        let r = if tainted { Residual::DepthExceeded } else { Residual::Unknown };
        let names = self.mutated_in(whole);
        let assigned = self.assigned_in(whole);
        self.havoc_vars(&names, r, &assigned);
        if let Some(b) = body {
            if self.contains_target(b) || !tainted {
                let flow = self.exec_branches(&[Some(b), None], tainted);
                self.havoc_vars(&names, r, &assigned);
                if flow == Flow::Exit {
                    return Flow::Exit;
                }
            }
        }
        Flow::Normal
    }

    fn exec_loop(
        &mut self,
        whole: &SyntaxNode,
        cond: Option<&SyntaxNode>,
        body: Option<&SyntaxNode>,
        updates: &[SyntaxNode],
        do_while: bool,
    ) -> Flow {
        let mut first = true;
        loop {
            if self.exhausted {
                return Flow::Exit;
            }
            if !(do_while && first) {
                let c = match cond {
                    Some(c) => self.eval(c),
                    None => Eval::of(Value::Bool(true)),
                };
                match c.truth() {
                    Some(true) => {}
                    Some(false) => return Flow::Normal,
                    None => return self.havoc_loop(whole, body, c.depth_tainted()),
                }
            }
            first = false;
            match body.map_or(Flow::Normal, |b| self.exec(b)) {
                Flow::Break => return Flow::Normal,
                Flow::Exit => return Flow::Exit,
                Flow::Normal | Flow::Continue => {}
            }
            for u in updates {
                self.eval(u);
            }
            if !self.tick() {
                return Flow::Exit;
            }
        }
    }

    fn exec_foreach(&mut self, s: &SyntaxNode) -> Flow {
        let Some(name) = s.child_by_field("name").map(|n| self.text(n).to_string()) else { return Flow::Normal };
        let ty = s.child_by_field("type").map(|t| Elem::from_type(self.text(t))).unwrap_or(Elem::Other);
        let iterable = s.child_by_field("value").map(|v| self.eval(v)).unwrap_or_else(Eval::unknown);
        let body = s.child_by_field("body");
        let items: Option<Vec<Value>> = match iterable.is_single() {
            Some(Value::Array(_, items)) => Some(items.clone()),
            _ => None,
        };
        match items {
            Some(items) => {
                for item in items {
                    if self.exhausted {
                        return Flow::Exit;
                    }
                    let val = Eval::of(ty.coerce(item));
                    self.frame().locals.insert(name.clone(), Local { ty, val, param: false });
                    match body.map_or(Flow::Normal, |b| self.exec(b)) {
                        Flow::Break => break,
                        Flow::Exit => return Flow::Exit,
                        _ => {}
                    }
                }
                Flow::Normal
            }
            None => {
                let r = if iterable.depth_tainted() { Residual::DepthExceeded } else { Residual::Unknown };
                self.frame().locals.insert(name, Local { ty, val: Eval::residual(r), param: false });
                self.havoc_loop(s, body, iterable.depth_tainted())
            }
        }
    }

    fn exec_try(&mut self, s: &SyntaxNode) -> Flow {
        if let Some(res) = s.child_by_field("resources") {
            for r in res.children() {
                if r.kind() == "resource" {
                    if let (Some(n), Some(v)) = (r.child_by_field("name"), r.child_by_field("value")) {
                        let val = self.eval(v);
                        let name = self.text(n).to_string();
                        self.frame().locals.insert(name, Local { ty: Elem::Other, val, param: false });
                    }
                }
            }
        }
        let mut flow = s.child_by_field("body").map_or(Flow::Normal, |b| self.exec(b));
        for c in s.children() {
            if c.kind() == "catch_clause" && self.contains_target(c) {
                let body = c.child_by_field("body");
                let f = self.exec_branches(&[body, None], false);
                if flow == Flow::Exit {
                    flow = f;
                }
            }
        }
        if let Some(fin) = s.children().iter().find(|c| c.kind() == "finally_clause") {
            if let Some(b) = fin.children().iter().find(|c| c.kind() == "block") {
                let f = self.exec(b);
                if f != Flow::Normal {
                    return f;
                }
            }
        }
        flow
    }

    fn exec_switch(&mut self, s: &SyntaxNode) -> Eval {
        let cond = s.child_by_field("condition").map(|c| self.eval(c)).unwrap_or_else(Eval::unknown);
        let Some(body) = s.child_by_field("body") else { return Eval::unknown() };
        let mut groups: Vec<Option<&SyntaxNode>> = body.children().iter().map(Some).collect();
        groups.push(None);
        let flow = self.exec_branches(&groups, cond.depth_tainted());
        let _ = flow;
        Eval::unknown()
    }

    // ---- expressions ----

    pub(crate) fn eval(&mut self, node: &SyntaxNode) -> Eval {
        if !self.tick() {
            return Eval::residual(Residual::DepthExceeded);
        }
        if self.depth >= MAX_DEPTH {
            return self.depth_exceeded(node);
        }
        self.depth += 1;
        let r = self.eval_inner(node).capped(self.budget.max_candidates);
        self.depth -= 1;
        self.hook(node, &r);
        r
    }

    fn eval_inner(&mut self, node: &SyntaxNode) -> Eval {
        let kind = node.kind();
        match kind {
            "string_literal" | "character_literal" => {
                let mut r = match decode_java_literal(self.text(node)) {
                    Some(s) if kind == "string_literal" => Eval::of(Value::Str(s)),
                    Some(s) => match units(&s).first() {
                        Some(c) => Eval::of(Value::Char(*c)),
                        None => Eval::unknown(),
                    },
                    None => Eval::unknown(),
                };
                self.note("literal", node, &mut r);
                r
            }
            "decimal_integer_literal" | "hex_integer_literal" | "octal_integer_literal" | "binary_integer_literal" => {
                let mut r = parse_int(self.text(node)).map(|i| Eval::of(Value::Int(i))).unwrap_or_else(Eval::unknown);
                self.note("literal", node, &mut r);
                r
            }
            "true" => Eval::of(Value::Bool(true)),
            "false" => Eval::of(Value::Bool(false)),
            "null_literal" => Eval::of(Value::Null),
            "identifier" => {
                let name = self.text(node).to_string();
                self.lookup_name(node, &name)
            }
            "parenthesized_expression" => node.first_child().map(|c| self.eval(c)).unwrap_or_else(Eval::unknown),
            "field_access" => self.eval_field_access(node),
            "array_access" => {
                let arr = node.child_by_field("array").map(|a| self.eval(a)).unwrap_or_else(Eval::unknown);
                let idx = node.child_by_field("index").map(|i| self.eval(i)).unwrap_or_else(Eval::unknown);
                Eval::product(&[arr, idx], self.budget.max_candidates, |v| match (v[0], v[1].as_int()) {
                    (Value::Array(_, items), Some(i)) if i >= 0 => items.get(i as usize).cloned(),
                    _ => None,
                })
            }
            "binary_expression" => self.eval_binary(node),
            "unary_expression" => {
                let op = node.operator().unwrap_or("");
                let v = node.first_child().map(|c| self.eval(c)).unwrap_or_else(Eval::unknown);
                v.map(self.budget.max_candidates, |x| match (op, x) {
                    ("!", Value::Bool(b)) => Some(Value::Bool(!b)),
                    ("-", x) => x.as_int().map(|i| Value::Int(wrap(-i))),
                    ("+", x) => x.as_int().map(Value::Int),
                    ("~", x) => x.as_int().map(|i| Value::Int(wrap(!i))),
                    _ => None,
                })
            }
            "update_expression" => self.eval_update(node),
            "assignment_expression" => self.eval_assignment(node),
            "ternary_expression" => {
                if let Some(c) = node.child_by_field("condition") {
                    self.eval(c);
                }
                let mut r = node.child_by_field("consequence").map(|c| self.eval(c)).unwrap_or_else(Eval::unknown);
                r.union(node.child_by_field("alternative").map(|c| self.eval(c)).unwrap_or_else(Eval::unknown));
                self.note("ternary", node, &mut r);
                r
            }
            "cast_expression" => self.eval_cast(node),
            "method_invocation" => self.eval_call(node),
            "object_creation_expression" => self.eval_new(node),
            "array_creation_expression" => self.eval_new_array(node),
            "array_initializer" => self.eval_array_init(node, Elem::Other),
            "lambda_expression" => {
                if self.contains_target(node) {
                    self.run_nested(node);
                }
                Eval::unknown()
            }
            "switch_expression" => self.exec_switch(node),
            "this" | "super" | "class_literal" | "method_reference" | "instanceof_expression" => Eval::unknown(),
            _ => {
                let mut e = Eval::unknown();
                self.note("unknown", node, &mut e);
                e
            }
        }
    }

    /// Run a lambda or an anonymous-class method that contains the target,
    /// with captured locals visible and its own parameters unknown.
    fn run_nested(&mut self, node: &SyntaxNode) {
        let Some(t) = self.targets.last().map(|t| t.node.span()) else { return };
        let body_owner = node
            .path_to(t)
            .into_iter()
            .rev()
            .find(|n| n.kind() == "lambda_expression" || n.kind() == "method_declaration")
            .cloned();
        let Some(owner) = body_owner else { return };
        let mut frame = self.frames.last().cloned().unwrap_or_default();
        frame.returns = None;
        frame.entry = false;
        if let Some(params) = owner.child_by_field("parameters") {
            for id in params.descendants().filter(|n| n.kind() == "identifier") {
                let name = self.text(id).to_string();
                frame.locals.insert(name, Local { ty: Elem::Other, val: Eval::unknown(), param: true });
            }
        }
        self.frames.push(frame);
        if let Some(body) = owner.child_by_field("body") {
            if body.kind() == "block" {
                self.exec(body);
            } else {
                self.eval(body);
            }
        }
        self.frames.pop();
    }

    fn lookup_name(&mut self, node: &SyntaxNode, name: &str) -> Eval {
        let frame = self.frame();
        if let Some(l) = frame.locals.get(name) {
            let (mut val, param, entry) = (l.val.clone(), l.param, frame.entry);
            if param {
                self.note("param", node, &mut val);
                if entry {
                    self.note("external-input", node, &mut val);
                }
            } else {
                self.note("local", node, &mut val);
            }
            return val;
        }
        if let Some(mut v) = frame.this_fields.get(name).cloned() {
            self.note("field", node, &mut v);
            return v;
        }
        let class = self.current_class();
        let index = self.index;
        if let Some((c, _)) = index.field(class.as_deref(), name) {
            return self.read_field(c, name, "field", node);
        }
        let mut e = Eval::unknown();
        self.note("unknown", node, &mut e);
        e
    }

    /// Union of every definition of a field. Costs one indirection hop.
    fn read_field(&mut self, class: &'a ClassInfo, name: &str, rule: &'static str, node: &SyntaxNode) -> Eval {
        let Some(field) = class.field(name) else { return Eval::unknown() };
        if self.hops >= self.budget.max_indirection {
            return self.depth_exceeded(node);
        }
        self.hops += 1;
        let ty = Elem::from_type(&field.ty);
        let mut out = Eval::default();
        if let Some(init) = &field.init {
            self.frames.push(Frame { class: Some(class.name.clone()), ..Default::default() });
            let v = self.eval_with_type(init, ty);
            self.frames.pop();
            out.union(v);
        }
        for (rhs, container) in &field.assignments {
            let hit = self.run_container(container, Some(class.name.clone()), rhs, ty);
            out.union(hit.unwrap_or_else(Eval::unknown));
        }
        self.hops -= 1;
        if out.vals.is_empty() && out.res.is_empty() {
            out = Eval::unknown();
        }
        let mut out = out.map(self.budget.max_candidates, |v| Some(ty.coerce(v.clone())));
        self.note(rule, node, &mut out);
        out
    }

    fn is_local(&mut self, name: &str) -> bool {
        let f = self.frame();
        f.locals.contains_key(name) || f.this_fields.contains_key(name)
    }

    /// A receiver that names a type rather than a value: `Foo`, `a.b.Foo`.
    fn class_ref(&mut self, obj: &SyntaxNode) -> Option<String> {
        let text = self.text(obj);
        match obj.kind() {
            "identifier" => {
                if self.is_local(text) {
                    return None;
                }
                let class = self.current_class();
                if self.index.class(text).is_some() {
                    return Some(text.to_string());
                }
                if self.index.field(class.as_deref(), text).is_some() {
                    return None;
                }
                text.chars().next().filter(|c| c.is_uppercase()).map(|_| text.to_string())
            }
            "field_access" | "scoped_identifier" => {
                let segments: Vec<&str> = text.split('.').map(str::trim).collect();
                if segments.iter().all(|s| !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$'))
                    && !self.is_local(segments[0])
                    && segments.last()?.chars().next()?.is_uppercase()
                    && (segments[0].chars().next()?.is_lowercase() || segments.len() == 1 || self.index.class(segments.last()?).is_some())
                {
                    Some(segments.last()?.to_string())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    fn eval_field_access(&mut self, node: &SyntaxNode) -> Eval {
        let Some(obj) = node.child_by_field("object") else { return Eval::unknown() };
        let Some(field) = node.child_by_field("field").map(|f| self.text(f).to_string()) else { return Eval::unknown() };
        if matches!(obj.kind(), "this" | "super") {
            if let Some(mut v) = self.frame().this_fields.get(&field).cloned() {
                self.note("this-field", node, &mut v);
                return v;
            }
            let class = self.current_class();
            let index = self.index;
            return match index.field(class.as_deref(), &field) {
                Some((c, _)) => self.read_field(c, &field, "this-field", node),
                None => Eval::unknown(),
            };
        }
        if let Some(class) = self.class_ref(obj) {
            let index = self.index;
            if let Some(c) = index.class(&class) {
                if c.enum_constant(&field, self.src).is_some() {
                    let mut r = Eval::of(Value::EnumConst { class: class.clone(), name: field.clone() });
                    self.note("enum-constant", node, &mut r);
                    return r;
                }
                if c.field(&field).is_some() {
                    return self.read_field(c, &field, "static-field", node);
                }
                return Eval::unknown();
            }
            return match library_constant(&class, &field) {
                Some(v) => Eval::of(v),
                None => {
                    let mut e = Eval::unknown();
                    self.note("unknown", node, &mut e);
                    e
                }
            };
        }
        let recv = self.eval(obj);
        let cap = self.budget.max_candidates;
        let mut out = Eval { vals: BTreeSet::new(), res: recv.res.clone(), deps: recv.deps.clone() };
        for v in &recv.vals {
            match v {
                Value::Array(_, items) if field == "length" => {
                    out.vals.insert(Value::Int(items.len() as i64));
                }
                Value::EnumConst { class, name } => {
                    let r = self.enum_field(class, name, &field, node);
                    out.union(r);
                }
                _ => {
                    out.res.insert(Residual::Unknown);
                }
            }
        }
        out.capped(cap)
    }

    /// Instance fields of an enum constant after running its constructor.
    fn enum_object(&mut self, class: &'a ClassInfo, constant: &str) -> Option<HashMap<String, Eval>> {
        let cnode = class.enum_constant(constant, self.src)?;
        let arg_nodes: Vec<SyntaxNode> =
            cnode.child_by_field("arguments").map(|a| a.children().to_vec()).unwrap_or_default();
        self.frames.push(Frame { class: Some(class.name.clone()), ..Default::default() });
        let args: Vec<Eval> = arg_nodes.iter().map(|a| self.eval(a)).collect();
        self.frames.pop();
        let mut fields = HashMap::new();
        if let Some(ctor) = class.constructors.iter().find(|c| c.params.len() == args.len()) {
            let mut frame = Frame { class: Some(class.name.clone()), ..Default::default() };
            bind_params(&mut frame, ctor, args);
            self.frames.push(frame);
            if let Some(b) = &ctor.body {
                self.exec(b);
            }
            let f = self.frames.pop().unwrap_or_default();
            for (k, v) in f.this_fields {
                fields.insert(k, v);
            }
        }
        Some(fields)
    }

    fn enum_field(&mut self, class: &str, constant: &str, field: &str, node: &SyntaxNode) -> Eval {
        let index = self.index;
        let Some(c) = index.class(class) else { return Eval::unknown() };
        if self.hops >= self.budget.max_indirection {
            return self.depth_exceeded(node);
        }
        self.hops += 1;
        let fields = self.enum_object(c, constant);
        let mut r = match fields.and_then(|mut f| f.remove(field)) {
            Some(v) => v,
            None => match c.field(field).and_then(|f| f.init.clone()) {
                Some(init) => {
                    self.frames.push(Frame { class: Some(c.name.clone()), ..Default::default() });
                    let v = self.eval(&init);
                    self.frames.pop();
                    v
                }
                None => Eval::unknown(),
            },
        };
        self.hops -= 1;
        if let Some(cnode) = c.enum_constant(constant, self.src) {
            let cnode = cnode.clone();
            self.note("enum-constant", &cnode, &mut r);
        }
        r = r.capped(self.budget.max_candidates);
        self.note("enum-constant", node, &mut r);
        r
    }

    fn eval_binary(&mut self, node: &SyntaxNode) -> Eval {
        let op = node.operator().unwrap_or("");
        let cap = self.budget.max_candidates;
        if op == "+" {
            // Flatten left-nested chains so long concatenations do not recurse.
            let mut operands = Vec::new();
            let mut cur = node.clone();
            loop {
                let (Some(l), Some(r)) = (cur.child_by_field("left").cloned(), cur.child_by_field("right").cloned()) else {
                    break;
                };
                operands.push(r);
                if l.kind() == "binary_expression" && l.operator() == Some("+") {
                    cur = l;
                } else {
                    operands.push(l);
                    break;
                }
            }
            operands.reverse();
            let mut acc: Option<Eval> = None;
            let mut stringy = false;
            for o in &operands {
                let v = self.eval(o);
                acc = Some(match acc {
                    None => v,
                    Some(a) => {
                        stringy |= a.vals.iter().chain(&v.vals).any(|x| matches!(x, Value::Str(_) | Value::Builder(_)));
                        self.record_fragments(&a, &v);
                        let chars = a.vals.iter().chain(&v.vals).any(|x| matches!(x, Value::Char(_)));
                        let mut r = Eval::product(&[a, v], cap, |x| plus(x[0], x[1]));
                        if chars && !stringy {
                            self.note("char-arith", node, &mut r);
                        }
                        r
                    }
                });
            }
            let mut r = acc.unwrap_or_else(Eval::unknown);
            if stringy {
                self.note("concat", node, &mut r);
            }
            return r;
        }
        let left = node.child_by_field("left").map(|l| self.eval(l)).unwrap_or_else(Eval::unknown);
        if op == "&&" || op == "||" {
            if let Some(b) = left.truth() {
                if (op == "&&" && !b) || (op == "||" && b) {
                    return Eval::of(Value::Bool(b));
                }
            }
            let right = node.child_by_field("right").map(|r| self.eval(r)).unwrap_or_else(Eval::unknown);
            return Eval::product(&[left, right], cap, |x| match (x[0], x[1]) {
                (Value::Bool(a), Value::Bool(b)) => Some(Value::Bool(if op == "&&" { *a && *b } else { *a || *b })),
                _ => None,
            });
        }
        let right = node.child_by_field("right").map(|r| self.eval(r)).unwrap_or_else(Eval::unknown);
        let has_char = left.vals.iter().chain(&right.vals).any(|x| matches!(x, Value::Char(_)));
        let mut r = Eval::product(&[left, right], cap, |x| binop(op, x[0], x[1]));
        if op == "^" {
            self.note("xor", node, &mut r);
        } else if has_char && matches!(op, "-" | "*" | "/" | "%" | "&" | "|") {
            self.note("char-arith", node, &mut r);
        }
        r
    }

    fn record_fragments(&mut self, a: &Eval, b: &Eval) {
        let partial = |e: &Eval| e.vals.is_empty() && !e.res.is_empty();
        if partial(a) || partial(b) {
            for v in a.vals.iter().chain(&b.vals) {
                if let Some(s) = v.java_string().filter(|s| !s.is_empty()) {
                    if self.fragments.len() < 64 {
                        self.fragments.insert(s);
                    }
                }
            }
        }
    }

    fn eval_cast(&mut self, node: &SyntaxNode) -> Eval {
        let ty = node.child_by_field("type").map(|t| self.text(t).trim().to_string()).unwrap_or_default();
        let v = node.child_by_field("value").map(|v| self.eval(v)).unwrap_or_else(Eval::unknown);
        let cap = self.budget.max_candidates;
        let mut r = match ty.as_str() {
            "char" => v.map(cap, |x| x.as_int().map(|i| Value::Char(i as u16))),
            "byte" => v.map(cap, |x| x.as_int().map(|i| Value::Int(i as i8 as i64))),
            "short" => v.map(cap, |x| x.as_int().map(|i| Value::Int(i as i16 as i64))),
            "int" | "long" => v.map(cap, |x| x.as_int().map(Value::Int)),
            _ => v,
        };
        if ty == "char" {
            self.note("char-arith", node, &mut r);
        }
        r
    }

    fn eval_update(&mut self, node: &SyntaxNode) -> Eval {
        let Some(target) = node.first_child().cloned() else { return Eval::unknown() };
        let op = node.operator().unwrap_or("++");
        let prefix = node.span().start < target.span().start;
        let old = self.eval(&target);
        let delta = if op == "--" { -1 } else { 1 };
        let new = old.map(self.budget.max_candidates, |x| match x {
            Value::Char(c) => Some(Value::Char((*c as i64 + delta) as u16)),
            Value::Int(i) => Some(Value::Int(wrap(i + delta))),
            _ => None,
        });
        self.store(&target, new.clone());
        if prefix {
            new
        } else {
            old
        }
    }

    fn eval_assignment(&mut self, node: &SyntaxNode) -> Eval {
        let Some(lhs) = node.child_by_field("left").cloned() else { return Eval::unknown() };
        let op = node.operator().unwrap_or("=");
        let rhs_node = node.child_by_field("right").cloned();
        let ty = self.type_of_target(&lhs);
        let rhs = match &rhs_node {
            Some(r) => self.eval_with_type(r, ty),
            None => Eval::unknown(),
        };
        let value = if op == "=" {
            rhs
        } else {
            let bin = &op[..op.len() - 1];
            let old = self.eval(&lhs);
            let cap = self.budget.max_candidates;
            if bin == "+" {
                Eval::product(&[old, rhs], cap, |x| plus(x[0], x[1]))
            } else {
                if bin == "^" {
                    let mut r = Eval::product(&[old.clone(), rhs.clone()], cap, |x| binop(bin, x[0], x[1]));
                    self.note("xor", node, &mut r);
                }
                Eval::product(&[old, rhs], cap, |x| binop(bin, x[0], x[1]))
            }
        };
        let value = value.map(self.budget.max_candidates, |v| Some(ty.coerce(v.clone())));
        self.store(&lhs, value.clone());
        value
    }

    fn type_of_target(&mut self, lhs: &SyntaxNode) -> Elem {
        let mut n = lhs;
        let mut element = false;
        while n.kind() == "array_access" {
            element = true;
            match n.child_by_field("array") {
                Some(a) => n = a,
                None => return Elem::Other,
            }
        }
        if n.kind() != "identifier" {
            return Elem::Other;
        }
        let name = self.text(n).to_string();
        let f = self.frame();
        match f.locals.get(&name) {
            Some(l) if element => match l.val.vals.iter().next() {
                Some(Value::Array(e, _)) => *e,
                _ => l.ty,
            },
            Some(l) => l.ty,
            None => Elem::Other,
        }
    }

    /// Write `value` into an lvalue.
    fn store(&mut self, lhs: &SyntaxNode, value: Eval) {
        let cap = self.budget.max_candidates;
        match lhs.kind() {
            "identifier" => {
                let name = self.text(lhs).to_string();
                let f = self.frame();
                if let Some(l) = f.locals.get_mut(&name) {
                    l.val = value;
                } else {
                    f.this_fields.insert(name, value);
                }
            }
            "field_access" => {
                let obj = lhs.child_by_field("object");
                if obj.is_some_and(|o| o.kind() == "this") {
                    if let Some(field) = lhs.child_by_field("field") {
                        let name = self.text(field).to_string();
                        self.frame().this_fields.insert(name, value);
                    }
                }
            }
            "array_access" => {
                let (Some(arr), Some(idx)) = (lhs.child_by_field("array").cloned(), lhs.child_by_field("index").cloned())
                else {
                    return;
                };
                let idx = self.eval(&idx);
                if arr.kind() != "identifier" {
                    return;
                }
                let name = self.text(&arr).to_string();
                let Some(cur) = self.frame().locals.get(&name).map(|l| l.val.clone()) else { return };
                let updated = Eval::product(&[cur, idx, value], cap, |x| match (x[0], x[1].as_int()) {
                    (Value::Array(e, items), Some(i)) if i >= 0 && (i as usize) < items.len() => {
                        let mut items = items.clone();
                        items[i as usize] = e.coerce(x[2].clone());
                        Some(Value::Array(*e, items))
                    }
                    _ => None,
                });
                if let Some(l) = self.frame().locals.get_mut(&name) {
                    l.val = updated;
                }
            }
            "parenthesized_expression" => {
                if let Some(inner) = lhs.first_child().cloned() {
                    self.store(&inner, value);
                }
            }
            _ => {}
        }
    }

    fn eval_new(&mut self, node: &SyntaxNode) -> Eval {
        let ty = node.child_by_field("type").map(|t| self.text(t)).unwrap_or("");
        let base = ty.split('<').next().unwrap_or(ty).rsplit('.').next().unwrap_or(ty).trim().to_string();
        let arg_nodes: Vec<SyntaxNode> =
            node.child_by_field("arguments").map(|a| a.children().to_vec()).unwrap_or_default();
        let args: Vec<Eval> = arg_nodes.iter().map(|a| self.eval(a)).collect();
        if let Some(body) = node.children().iter().find(|c| c.kind() == "class_body") {
            if self.contains_target(body) {
                self.run_nested(body);
            }
            return Eval::unknown();
        }
        let cap = self.budget.max_candidates;
        match base.as_str() {
            "String" => {
                let mut r = Eval::product(&args, cap, new_string);
                self.note("new-string", node, &mut r);
                r
            }
            "StringBuilder" | "StringBuffer" => {
                let mut r = Eval::product(&args, cap, |a| match a {
                    [] | [Value::Int(_)] => Some(Value::Builder(String::new())),
                    [v] => v.java_string().map(Value::Builder),
                    _ => None,
                });
                self.note("append-chain", node, &mut r);
                r
            }
            "SecureRandom" | "KeyGenerator" => {
                let mut e = Eval::unknown();
                self.note("secure-random", node, &mut e);
                e
            }
            _ => {
                self.havoc_args(&arg_nodes);
                Eval::unknown()
            }
        }
    }

    fn eval_new_array(&mut self, node: &SyntaxNode) -> Eval {
        let ty = node.child_by_field("type").map(|t| Elem::from_type(self.text(t))).unwrap_or(Elem::Other);
        if let Some(init) = node.child_by_field("value") {
            return self.eval_array_init(init, ty);
        }
        let dims: Vec<&SyntaxNode> = node.children_by_field("dimensions").filter(|d| d.kind() == "dimensions_expr").collect();
        if dims.len() != 1 {
            return Eval::unknown();
        }
        let Some(len_node) = dims[0].first_child() else { return Eval::unknown() };
        let len = self.eval(len_node);
        len.map(self.budget.max_candidates, |v| match v.as_int() {
            Some(n) if (0..=MAX_ARRAY).contains(&n) => Some(Value::Array(ty, vec![ty.zero(); n as usize])),
            _ => None,
        })
    }

    fn eval_array_init(&mut self, node: &SyntaxNode, ty: Elem) -> Eval {
        let items: Vec<Eval> = node.children().iter().map(|c| self.eval(c)).collect();
        let elem = if ty != Elem::Other {
            ty
        } else {
            match items.first().and_then(|i| i.vals.iter().next()) {
                Some(Value::Str(_)) => Elem::Str,
                Some(Value::Char(_)) => Elem::Char,
                Some(Value::Int(_)) => Elem::Int,
                _ => Elem::Other,
            }
        };
        Eval::product(&items, self.budget.max_candidates, |v| {
            Some(Value::Array(elem, v.iter().map(|x| elem.coerce((*x).clone())).collect()))
        })
    }

    fn havoc_args(&mut self, arg_nodes: &[SyntaxNode]) {
        for a in arg_nodes {
            if a.kind() == "identifier" {
                let name = self.text(a).to_string();
                if let Some(l) = self.frame().locals.get_mut(&name) {
                    if l.val.vals.iter().any(|v| matches!(v, Value::Array(..) | Value::Builder(_))) {
                        l.val = l.val.havoc(Residual::Unknown);
                    }
                }
            }
        }
    }

    fn eval_call(&mut self, node: &SyntaxNode) -> Eval {
        let name = node.child_by_field("name").map(|n| self.text(n).to_string()).unwrap_or_default();
        let obj = node.child_by_field("object").cloned();
        let arg_nodes: Vec<SyntaxNode> =
            node.child_by_field("arguments").map(|a| a.children().to_vec()).unwrap_or_default();
        let class_ref = obj.as_ref().and_then(|o| self.class_ref(o));
        let recv = match (&obj, &class_ref) {
            (Some(o), None) if !matches!(o.kind(), "this" | "super") => Some(self.eval(o)),
            _ => None,
        };
        let args: Vec<Eval> = arg_nodes.iter().map(|a| self.eval(a)).collect();
        let arity = args.len();
        let index = self.index;
        let current = self.current_class();

        if let Some(class) = &class_ref {
            if index.class(class).is_some() {
                if let Some((c, m)) = index.method(Some(class), &name, arity) {
                    return self.call_method(c, m, args, node, None);
                }
                return self.unknown_call(node, &name, obj.as_ref(), &arg_nodes);
            }
            if let Some(r) = self.library_static(class, &name, &args, node) {
                return r;
            }
            return self.unknown_call(node, &name, obj.as_ref(), &arg_nodes);
        }
        if let Some(recv) = recv {
            if !recv.vals.is_empty() {
                return self.instance_call(node, obj.as_ref(), recv, &name, args);
            }
            if let Some((c, m)) = index.method(current.as_deref(), &name, arity) {
                return self.call_method(c, m, args, node, None);
            }
            let r = self.unknown_call(node, &name, obj.as_ref(), &arg_nodes);
            let mut r = r;
            r.res.extend(recv.res.iter().copied().filter(|r| *r == Residual::DepthExceeded));
            return r;
        }
        if let Some((c, m)) = index.method(current.as_deref(), &name, arity) {
            return self.call_method(c, m, args, node, None);
        }
        self.unknown_call(node, &name, obj.as_ref(), &arg_nodes)
    }

    fn call_method(
        &mut self,
        class: &'a ClassInfo,
        m: &'a MethodInfo,
        args: Vec<Eval>,
        node: &SyntaxNode,
        this_fields: Option<HashMap<String, Eval>>,
    ) -> Eval {
        if m.is_native {
            let mut e = Eval::residual(Residual::Native);
            self.note("native", node, &mut e);
            return e;
        }
        let Some(body) = &m.body else { return Eval::unknown() };
        if self.hops >= self.budget.max_indirection {
            return self.depth_exceeded(node);
        }
        self.hops += 1;
        let mut frame = Frame { class: Some(class.name.clone()), this_fields: this_fields.unwrap_or_default(), ..Default::default() };
        bind_params(&mut frame, m, args);
        self.frames.push(frame);
        self.exec(body);
        let frame = self.frames.pop().unwrap_or_default();
        self.hops -= 1;
        let ret = Elem::from_type(&m.ret);
        let mut r = frame.returns.unwrap_or_else(Eval::unknown);
        if self.exhausted {
            r.res.insert(Residual::DepthExceeded);
        }
        let mut r = r.map(self.budget.max_candidates, |v| Some(ret.coerce(v.clone())));
        self.note("method-return", node, &mut r);
        r
    }

    fn unknown_call(&mut self, node: &SyntaxNode, name: &str, obj: Option<&SyntaxNode>, arg_nodes: &[SyntaxNode]) -> Eval {
        self.havoc_args(arg_nodes);
        let recv_text = obj.map(|o| self.text(o)).unwrap_or("").to_ascii_lowercase();
        let lname = name.to_ascii_lowercase();
        if name == "doFinal"
            || ((lname.contains("decode") || lname.contains("decrypt"))
                && ["aes", "gcm", "crypt", "cipher"].iter().any(|k| recv_text.contains(k) || lname.contains("decrypt")))
        {
            let mut e = Eval::unknown();
            self.note("encrypted-param", node, &mut e);
            return e;
        }
        if SECURE_RANDOM.contains(&name) || recv_text.contains("securerandom") || recv_text.contains("keygenerator") {
            let mut e = Eval::unknown();
            self.note("secure-random", node, &mut e);
            return e;
        }
        if NETWORK_METHODS.contains(&name) || NETWORK_RECEIVERS.iter().any(|k| recv_text.contains(k)) {
            let mut e = Eval::residual(Residual::Network);
            self.note("network", node, &mut e);
            return e;
        }
        let mut e = Eval::unknown();
        self.note("unknown", node, &mut e);
        e
    }

    fn library_static(&mut self, class: &str, name: &str, args: &[Eval], node: &SyntaxNode) -> Option<Eval> {
        let cap = self.budget.max_candidates;
        let (rule, mut r): (&'static str, Eval) = match (class, name) {
            ("String", "valueOf" | "copyValueOf") => ("string-op", Eval::product(args, cap, |a| match a {
                [v] => v.as_char_units().map(|u| Value::Str(from_units(&u))).or_else(|| v.java_string().map(Value::Str)),
                _ => None,
            })),
            ("String", "format") => ("format", Eval::product(args, cap, |a| {
                let (fmt, rest) = match a {
                    [Value::Str(f), rest @ ..] => (f, rest),
                    [_, Value::Str(f), rest @ ..] => (f, rest),
                    _ => return None,
                };
                java_format(fmt, rest).map(Value::Str)
            })),
            ("String", "join") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Str(d), rest @ ..] => {
                    let parts: Option<Vec<String>> = rest.iter().map(|v| v.java_string()).collect();
                    parts.map(|p| Value::Str(p.join(d)))
                }
                _ => None,
            })),
            ("Base64", "decode") => ("base64", Eval::product(args, cap, |a| {
                let flags = a.get(1).and_then(|f| f.as_int()).unwrap_or(0);
                let input = match a.first()? {
                    Value::Str(s) => s.as_bytes().to_vec(),
                    v => v.as_byte_vec()?,
                };
                base64_decode(&input, flags & 8 != 0, false).map(|b| Value::bytes(&b))
            })),
            ("Base64", "getDecoder") => ("base64", Eval::of(Value::Decoder { url_safe: false, mime: false })),
            ("Base64", "getUrlDecoder") => ("base64", Eval::of(Value::Decoder { url_safe: true, mime: false })),
            ("Base64", "getMimeDecoder") => ("base64", Eval::of(Value::Decoder { url_safe: false, mime: true })),
            ("Character", "toChars") => ("char-arith", Eval::product(args, cap, |a| match a {
                [v] => {
                    let c = char::from_u32(v.as_int()? as u32)?;
                    let mut buf = [0u16; 2];
                    Some(Value::chars(c.encode_utf16(&mut buf)))
                }
                _ => None,
            })),
            ("Character", "toString" | "valueOf") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Char(c)] if name == "toString" => Some(Value::Str(from_units(&[*c]))),
                [Value::Char(c)] => Some(Value::Char(*c)),
                _ => None,
            })),
            ("Integer", "parseInt" | "valueOf") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Str(s)] => s.trim().parse::<i32>().ok().map(|i| Value::Int(i as i64)),
                [Value::Str(s), r] => i32::from_str_radix(s.trim(), r.as_int()? as u32).ok().map(|i| Value::Int(i as i64)),
                [Value::Int(i)] => Some(Value::Int(*i)),
                _ => None,
            })),
            ("Integer", "toString") => ("string-op", Eval::product(args, cap, |a| match a {
                [v] => v.as_int().map(|i| Value::Str(i.to_string())),
                _ => None,
            })),
            ("Integer", "toHexString") => ("string-op", Eval::product(args, cap, |a| match a {
                [v] => v.as_int().map(|i| Value::Str(format!("{:x}", i as i32))),
                _ => None,
            })),
            ("Intrinsics", "areEqual") | ("Objects", "equals") | ("TextUtils", "equals") => {
                ("string-op", Eval::product(args, cap, |a| match a {
                    [x, y] => Some(Value::Bool(x == y)),
                    _ => None,
                }))
            }
            ("TextUtils", "isEmpty") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Str(s)] => Some(Value::Bool(s.is_empty())),
                [Value::Null] => Some(Value::Bool(true)),
                _ => None,
            })),
            ("Arrays", "copyOf" | "copyOfRange") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Array(e, items), n] => {
                    let n = n.as_int()?.max(0) as usize;
                    let mut out: Vec<Value> = items.iter().take(n).cloned().collect();
                    out.resize(n, e.zero());
                    Some(Value::Array(*e, out))
                }
                [Value::Array(e, items), from, to] => {
                    let (f, t) = (from.as_int()? as usize, to.as_int()? as usize);
                    (f <= t && t <= items.len()).then(|| Value::Array(*e, items[f..t].to_vec()))
                }
                _ => None,
            })),
            ("Charset", "forName") => ("string-op", Eval::product(args, cap, |a| match a {
                [Value::Str(s)] => Some(Value::Str(s.clone())),
                _ => None,
            })),
            ("Math", "abs" | "min" | "max") => ("char-arith", Eval::product(args, cap, |a| match (name, a) {
                ("abs", [x]) => Some(Value::Int(x.as_int()?.abs())),
                ("min", [x, y]) => Some(Value::Int(x.as_int()?.min(y.as_int()?))),
                ("max", [x, y]) => Some(Value::Int(x.as_int()?.max(y.as_int()?))),
                _ => None,
            })),
            _ => return None,
        };
        self.note(rule, node, &mut r);
        Some(r)
    }

    fn instance_call(&mut self, node: &SyntaxNode, obj: Option<&SyntaxNode>, recv: Eval, name: &str, args: Vec<Eval>) -> Eval {
        let cap = self.budget.max_candidates;
        let index = self.index;
        // Methods declared on an enum constant's class.
        if let Some(Value::EnumConst { class, name: cname }) = recv.vals.iter().next().cloned() {
            if !matches!(name, "name" | "toString" | "ordinal") {
                if let Some((c, m)) = index.method(Some(&class), name, args.len()) {
                    if self.hops >= self.budget.max_indirection {
                        return self.depth_exceeded(node);
                    }
                    self.hops += 1;
                    let fields = self.enum_object(c, &cname);
                    self.hops -= 1;
                    self.note("enum-constant", node, &mut Eval::default());
                    return self.call_method(c, m, args, node, fields);
                }
            }
        }
        let mut all = Vec::with_capacity(args.len() + 1);
        all.push(recv.clone());
        all.extend(args);
        let src = self.src;
        let enum_ordinal = |class: &str, cname: &str| -> Option<i64> {
            let c = index.class(class)?;
            c.enum_constants
                .iter()
                .position(|n| n.child_by_field("name").is_some_and(|x| x.text(src) == cname))
                .map(|p| p as i64)
        };
        let mut result = Eval::product(&all, cap, |a| instance_op(a[0], name, &a[1..], &enum_ordinal).map(|(r, _)| r));
        let is_builder = recv.vals.iter().any(|v| matches!(v, Value::Builder(_)));
        let mutates = is_builder && matches!(name, "append" | "insert" | "reverse" | "deleteCharAt" | "delete" | "setCharAt" | "setLength" | "replace");
        if mutates {
            let updated = Eval::product(&all, cap, |a| instance_op(a[0], name, &a[1..], &enum_ordinal).and_then(|(_, n)| n));
            if let Some(root) = obj.and_then(|o| self.builder_root(o)) {
                let f = self.frame();
                if let Some(l) = f.locals.get_mut(&root) {
                    l.val = updated;
                } else if f.this_fields.contains_key(&root) {
                    f.this_fields.insert(root, updated);
                }
            }
        }
        let rule = match recv.vals.iter().next() {
            Some(Value::Builder(_)) => "append-chain",
            Some(Value::Decoder { .. }) => "base64",
            Some(Value::Str(_)) if name == "toString" || name == "intern" => "string-op",
            Some(Value::Str(_)) if name == "getBytes" => "string-op",
            Some(Value::Array(..)) => "string-op",
            Some(Value::EnumConst { .. }) => "enum-constant",
            _ => "string-op",
        };
        self.note(rule, node, &mut result);
        result
    }

    /// Variable behind `sb`, `sb.append(x)`, `sb.append(x).append(y)`, `this.sb`.
    fn builder_root(&self, mut n: &SyntaxNode) -> Option<String> {
        loop {
            match n.kind() {
                "identifier" => return Some(self.text(n).to_string()),
                "method_invocation" => n = n.child_by_field("object")?,
                "parenthesized_expression" => n = n.first_child()?,
                "field_access" if n.child_by_field("object").is_some_and(|o| o.kind() == "this") => {
                    return n.child_by_field("field").map(|f| self.text(f).to_string())
                }
                _ => return None,
            }
        }
    }
}

fn bind_params(frame: &mut Frame, m: &MethodInfo, args: Vec<Eval>) {
    for ((pname, pty), arg) in m.params.iter().zip(args) {
        let ty = Elem::from_type(pty);
        let val = if pty.ends_with("[]") { arg } else { arg.map(usize::MAX, |v| Some(ty.coerce(v.clone()))) };
        frame.locals.insert(pname.clone(), Local { ty, val, param: true });
    }
}

fn wrap(i: i64) -> i64 {
    i as i32 as i64
}

pub(crate) fn parse_int(text: &str) -> Option<i64> {
    let t = text.replace('_', "");
    let t = t.trim_end_matches(['l', 'L']);
    let v = if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()? as i64
    } else if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        u64::from_str_radix(b, 2).ok()? as i64
    } else if t.len() > 1 && t.starts_with('0') {
        i64::from_str_radix(&t[1..], 8).ok()?
    } else {
        t.parse::<i64>().ok()?
    };
    Some(if text.ends_with(['l', 'L']) { v } else { wrap(v) })
}

fn library_constant(class: &str, field: &str) -> Option<Value> {
    Some(match (class, field) {
        ("Base64", "DEFAULT") => Value::Int(0),
        ("Base64", "NO_PADDING") => Value::Int(1),
        ("Base64", "NO_WRAP") => Value::Int(2),
        ("Base64", "CRLF") => Value::Int(4),
        ("Base64", "URL_SAFE") => Value::Int(8),
        ("Base64", "NO_CLOSE") => Value::Int(16),
        ("StandardCharsets" | "Charsets", cs) => Value::Str(cs.replace('_', "-")),
        _ => return None,
    })
}

/// Java `+`.
fn plus(a: &Value, b: &Value) -> Option<Value> {
    let stringy = |v: &Value| matches!(v, Value::Str(_) | Value::Builder(_));
    if stringy(a) || stringy(b) {
        let (x, y) = (a.java_string()?, b.java_string()?);
        return Some(Value::Str(x + &y));
    }
    match (a, b) {
        (Value::Int(_) | Value::Char(_), Value::Int(_) | Value::Char(_)) => Some(Value::Int(wrap(a.as_int()? + b.as_int()?))),
        _ => None,
    }
}

fn binop(op: &str, a: &Value, b: &Value) -> Option<Value> {
    match op {
        "==" | "!=" => {
            let eq = match (a, b) {
                (Value::Null, Value::Null) => true,
                (Value::Null, _) | (_, Value::Null) => false,
                (Value::Bool(x), Value::Bool(y)) => x == y,
                (x, y) if x.as_int().is_some() && y.as_int().is_some() => x.as_int() == y.as_int(),
                _ => return None,
            };
            return Some(Value::Bool(if op == "==" { eq } else { !eq }));
        }
        "&" | "|" | "^" => {
            if let (Value::Bool(x), Value::Bool(y)) = (a, b) {
                return Some(Value::Bool(match op {
                    "&" => *x && *y,
                    "|" => *x || *y,
                    _ => x != y,
                }));
            }
        }
        _ => {}
    }
    let (x, y) = (a.as_int()?, b.as_int()?);
    Some(match op {
        "-" => Value::Int(wrap(x - y)),
        "*" => Value::Int(wrap(x.wrapping_mul(y))),
        "/" => Value::Int(wrap(x.checked_div(y)?)),
        "%" => Value::Int(wrap(x.checked_rem(y)?)),
        "^" => Value::Int(wrap(x ^ y)),
        "&" => Value::Int(wrap(x & y)),
        "|" => Value::Int(wrap(x | y)),
        "<<" => Value::Int(wrap(((x as i32) << (y & 31)) as i64)),
        ">>" => Value::Int(((x as i32) >> (y & 31)) as i64),
        ">>>" => Value::Int((((x as i32) as u32) >> (y & 31)) as i32 as i64),
        "<" => Value::Bool(x < y),
        ">" => Value::Bool(x > y),
        "<=" => Value::Bool(x <= y),
        ">=" => Value::Bool(x >= y),
        _ => return None,
    })
}

fn new_string(a: &[&Value]) -> Option<Value> {
    let s = match a {
        [] => String::new(),
        [Value::Str(s)] | [Value::Builder(s)] => s.clone(),
        [v] => match v {
            Value::Array(Elem::Char, _) => from_units(&v.as_char_units()?),
            Value::Array(Elem::Byte, _) => value::decode(&v.as_byte_vec()?, None)?,
            _ => return None,
        },
        [v, Value::Str(cs)] => value::decode(&v.as_byte_vec()?, Some(cs))?,
        [v, off, len] => {
            let (o, l) = (off.as_int()? as usize, len.as_int()? as usize);
            match v {
                Value::Array(Elem::Char, _) => from_units(v.as_char_units()?.get(o..o.checked_add(l)?)?),
                Value::Array(Elem::Byte, _) => value::decode(v.as_byte_vec()?.get(o..o.checked_add(l)?)?, None)?,
                _ => return None,
            }
        }
        _ => return None,
    };
    Some(Value::Str(s))
}

fn utf16_index(hay: &[u16], needle: &[u16], from: usize) -> i64 {
    if needle.is_empty() {
        return from.min(hay.len()) as i64;
    }
    (from..hay.len().saturating_sub(needle.len() - 1))
        .find(|&i| hay[i..].starts_with(needle))
        .map_or(-1, |i| i as i64)
}

fn char_seq(v: &Value) -> Option<Vec<u16>> {
    match v {
        Value::Char(c) => Some(vec![*c]),
        other => other.java_string().map(|s| units(&s)),
    }
}

/// Library instance methods. Returns `(result, updated receiver)`.
fn instance_op(
    recv: &Value,
    name: &str,
    args: &[&Value],
    ordinal: &dyn Fn(&str, &str) -> Option<i64>,
) -> Option<(Value, Option<Value>)> {
    let plain = |v: Value| Some((v, None));
    match recv {
        Value::Str(s) => {
            let u = units(s);
            match (name, args) {
                ("length", []) => plain(Value::Int(u.len() as i64)),
                ("charAt", [i]) => plain(Value::Char(*u.get(usize::try_from(i.as_int()?).ok()?)?)),
                ("substring", [b]) => plain(Value::Str(from_units(u.get(usize::try_from(b.as_int()?).ok()?..)?))),
                ("substring" | "subSequence", [b, e]) => {
                    let (b, e) = (usize::try_from(b.as_int()?).ok()?, usize::try_from(e.as_int()?).ok()?);
                    plain(Value::Str(from_units(u.get(b..e)?)))
                }
                ("replace", [a, b]) => match (a, b) {
                    (Value::Char(x), Value::Char(y)) => {
                        plain(Value::Str(from_units(&u.iter().map(|c| if c == x { *y } else { *c }).collect::<Vec<_>>())))
                    }
                    _ => plain(Value::Str(s.replace(&a.java_string()?, &b.java_string()?))),
                },
                ("replaceAll" | "replaceFirst", [Value::Str(re), Value::Str(rep)]) => {
                    let re = regex::Regex::new(re).ok()?;
                    let rep = rep.replace("\\$", "$$");
                    plain(Value::Str(if name == "replaceAll" {
                        re.replace_all(s, rep.as_str()).into_owned()
                    } else {
                        re.replace(s, rep.as_str()).into_owned()
                    }))
                }
                ("toLowerCase", _) => plain(Value::Str(s.to_lowercase())),
                ("toUpperCase", _) => plain(Value::Str(s.to_uppercase())),
                ("trim", []) => plain(Value::Str(java_trim(s))),
                ("strip", []) => plain(Value::Str(s.trim().to_string())),
                ("concat", [Value::Str(t)]) => plain(Value::Str(format!("{s}{t}"))),
                ("toString" | "intern", []) => plain(Value::Str(s.clone())),
                ("getBytes", []) => plain(Value::bytes(&value::encode(s, None)?)),
                ("getBytes", [Value::Str(cs)]) => plain(Value::bytes(&value::encode(s, Some(cs))?)),
                ("toCharArray", []) => plain(Value::chars(&u)),
                ("isEmpty", []) => plain(Value::Bool(u.is_empty())),
                ("equals", [o]) => plain(Value::Bool(matches!(o, Value::Str(t) if t == s))),
                ("equalsIgnoreCase", [o]) => {
                    plain(Value::Bool(matches!(o, Value::Str(t) if t.to_lowercase() == s.to_lowercase())))
                }
                ("contains", [o]) => plain(Value::Bool(s.contains(o.java_string()?.as_str()))),
                ("startsWith", [o]) => plain(Value::Bool(s.starts_with(o.java_string()?.as_str()))),
                ("endsWith", [o]) => plain(Value::Bool(s.ends_with(o.java_string()?.as_str()))),
                ("indexOf", [o]) => plain(Value::Int(utf16_index(&u, &char_seq(o)?, 0))),
                ("indexOf", [o, f]) => plain(Value::Int(utf16_index(&u, &char_seq(o)?, f.as_int()?.max(0) as usize))),
                ("repeat", [n]) => plain(Value::Str(s.repeat(usize::try_from(n.as_int()?).ok()?.min(4096)))),
                _ => None,
            }
        }
        Value::Builder(b) => {
            let u = units(b);
            let same = |nb: String| Some((Value::Builder(nb.clone()), Some(Value::Builder(nb))));
            match (name, args) {
                ("append", [v]) => {
                    let piece = match v.as_char_units() {
                        Some(cs) => from_units(&cs),
                        None => v.java_string()?,
                    };
                    same(format!("{b}{piece}"))
                }
                ("insert", [i, v]) => {
                    let i = usize::try_from(i.as_int()?).ok()?;
                    let mut out = u.get(..i)?.to_vec();
                    out.extend(char_seq(v)?);
                    out.extend_from_slice(u.get(i..)?);
                    same(from_units(&out))
                }
                ("reverse", []) => {
                    let s: String = b.chars().rev().collect();
                    same(s)
                }
                ("deleteCharAt", [i]) => {
                    let i = usize::try_from(i.as_int()?).ok()?;
                    let mut out = u.clone();
                    if i >= out.len() {
                        return None;
                    }
                    out.remove(i);
                    same(from_units(&out))
                }
                ("delete", [s, e]) => {
                    let (s, e) = (usize::try_from(s.as_int()?).ok()?, usize::try_from(e.as_int()?).ok()?);
                    let e = e.min(u.len());
                    if s > e {
                        return None;
                    }
                    let mut out = u[..s].to_vec();
                    out.extend_from_slice(&u[e..]);
                    same(from_units(&out))
                }
                ("setCharAt", [i, c]) => {
                    let i = usize::try_from(i.as_int()?).ok()?;
                    let mut out = u.clone();
                    *out.get_mut(i)? = c.as_int()? as u16;
                    let nb = from_units(&out);
                    Some((Value::Null, Some(Value::Builder(nb))))
                }
                ("setLength", [n]) => {
                    let n = usize::try_from(n.as_int()?).ok()?;
                    let mut out = u.clone();
                    out.resize(n, 0);
                    Some((Value::Null, Some(Value::Builder(from_units(&out)))))
                }
                ("toString", []) => plain(Value::Str(b.clone())),
                ("length", []) => plain(Value::Int(u.len() as i64)),
                ("charAt", [i]) => plain(Value::Char(*u.get(usize::try_from(i.as_int()?).ok()?)?)),
                ("indexOf", [o]) => plain(Value::Int(utf16_index(&u, &char_seq(o)?, 0))),
                _ => None,
            }
        }
        Value::Decoder { url_safe, mime } => match (name, args) {
            ("decode", [v]) => {
                let input = match v {
                    Value::Str(s) => s.as_bytes().to_vec(),
                    other => other.as_byte_vec()?,
                };
                plain(Value::bytes(&base64_decode(&input, *url_safe, *mime)?))
            }
            _ => None,
        },
        Value::Array(e, items) => match (name, args) {
            ("clone", []) => plain(Value::Array(*e, items.clone())),
            _ => None,
        },
        Value::EnumConst { class, name: cname } => match (name, args) {
            ("name" | "toString", []) => plain(Value::Str(cname.clone())),
            ("ordinal", []) => plain(Value::Int(ordinal(class, cname)?)),
            _ => None,
        },
        Value::Char(c) => match (name, args) {
            ("toString", []) => plain(Value::Str(from_units(&[*c]))),
            _ => None,
        },
        Value::Int(i) => match (name, args) {
            ("toString", []) => plain(Value::Str(i.to_string())),
            ("intValue", []) => plain(Value::Int(*i)),
            _ => None,
        },
        _ => None,
    }
}
