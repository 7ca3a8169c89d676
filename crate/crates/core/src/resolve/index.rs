//! Per-unit index of classes, fields, methods and field definitions.

use std::collections::HashSet;

use crate::syntax::{is_type_declaration, SourceUnit, SyntaxNode};

#[derive(Debug)]
pub(crate) struct FieldInfo {
    pub name: String,
    pub ty: String,
    pub init: Option<SyntaxNode>,
    /// `(right-hand side, executable container)` for every assignment.
    pub assignments: Vec<(SyntaxNode, SyntaxNode)>,
}

#[derive(Debug)]
pub(crate) struct MethodInfo {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub body: Option<SyntaxNode>,
    pub is_native: bool,
    pub ret: String,
}

#[derive(Debug)]
pub(crate) struct ClassInfo {
    pub name: String,
    pub fields: Vec<FieldInfo>,
    pub methods: Vec<MethodInfo>,
    pub constructors: Vec<MethodInfo>,
    pub enum_constants: Vec<SyntaxNode>,
}

impl ClassInfo {
    pub(crate) fn field(&self, name: &str) -> Option<&FieldInfo> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub(crate) fn enum_constant(&self, name: &str, src: &str) -> Option<&SyntaxNode> {
        self.enum_constants
            .iter()
            .find(|c| c.child_by_field("name").is_some_and(|n| n.text(src) == name))
    }
}

#[derive(Debug, Default)]
pub(crate) struct UnitIndex {
    pub classes: Vec<ClassInfo>,
}

pub(crate) fn modifiers_text<'a>(decl: &SyntaxNode, src: &'a str) -> &'a str {
    decl.children().iter().find(|c| c.kind() == "modifiers").map(|m| m.text(src)).unwrap_or("")
}

pub(crate) fn has_modifier(decl: &SyntaxNode, src: &str, word: &str) -> bool {
    modifiers_text(decl, src).split(|c: char| !c.is_alphanumeric()).any(|w| w == word)
}

pub(crate) fn params_of(decl: &SyntaxNode, src: &str) -> Vec<(String, String)> {
    let Some(list) = decl.child_by_field("parameters") else { return Vec::new() };
    let mut out = Vec::new();
    for p in list.children() {
        match p.kind() {
            "formal_parameter" => {
                let name = p.child_by_field("name").map(|n| n.text(src).to_string()).unwrap_or_default();
                let mut ty = p.child_by_field("type").map(|n| n.text(src).to_string()).unwrap_or_default();
                if p.child_by_field("dimensions").is_some() {
                    ty.push_str("[]");
                }
                out.push((name, ty));
            }
            "spread_parameter" => {
                let ty = p.children().iter().find(|c| c.kind().ends_with("type")).map(|t| t.text(src)).unwrap_or("");
                let name = p
                    .descendants()
                    .filter(|n| n.kind() == "identifier")
                    .last()
                    .map(|n| n.text(src).to_string())
                    .unwrap_or_default();
                out.push((name, format!("{ty}[]")));
            }
            _ => {}
        }
    }
    out
}

fn method_info(node: &SyntaxNode, src: &str) -> MethodInfo {
    MethodInfo {
        name: node.child_by_field("name").map(|n| n.text(src).to_string()).unwrap_or_default(),
        params: params_of(node, src),
        body: node.child_by_field("body").cloned(),
        is_native: has_modifier(node, src, "native"),
        ret: node.child_by_field("type").map(|t| t.text(src).to_string()).unwrap_or_default(),
    }
}

/// Names introduced as locals or parameters anywhere inside a container.
pub(crate) fn declared_names(container: &SyntaxNode, src: &str) -> HashSet<String> {
    let mut names = HashSet::new();
    for (name, _) in params_of(container, src) {
        names.insert(name);
    }
    for n in container.descendants() {
        match n.kind() {
            "local_variable_declaration" => {
                for d in n.children_by_field("declarator") {
                    if let Some(id) = d.child_by_field("name") {
                        names.insert(id.text(src).to_string());
                    }
                }
            }
            "enhanced_for_statement" | "catch_formal_parameter" | "formal_parameter" => {
                if let Some(id) = n.child_by_field("name") {
                    names.insert(id.text(src).to_string());
                }
            }
            _ => {}
        }
    }
    names
}

impl UnitIndex {
    pub(crate) fn build(unit: &SourceUnit) -> UnitIndex {
        let src: &str = &unit.text;
        let mut classes = Vec::new();
        for decl in unit.root.descendants() {
            if !is_type_declaration(decl.kind()) {
                continue;
            }
            let Some(name) = decl.child_by_field("name") else { continue };
            let Some(body) = decl.child_by_field("body") else { continue };
            let mut info = ClassInfo {
                name: name.text(src).to_string(),
                fields: Vec::new(),
                methods: Vec::new(),
                constructors: Vec::new(),
                enum_constants: Vec::new(),
            };
            let mut members: Vec<&SyntaxNode> = Vec::new();
            for m in body.children() {
                if m.kind() == "enum_body_declarations" {
                    members.extend(m.children());
                } else {
                    members.push(m);
                }
            }
            let mut containers = Vec::new();
            for m in members {
                match m.kind() {
                    "field_declaration" | "constant_declaration" => {
                        let ty = m.child_by_field("type").map(|t| t.text(src).to_string()).unwrap_or_default();
                        for d in m.children_by_field("declarator") {
                            let Some(n) = d.child_by_field("name") else { continue };
                            let mut fty = ty.clone();
                            if d.child_by_field("dimensions").is_some() {
                                fty.push_str("[]");
                            }
                            info.fields.push(FieldInfo {
                                name: n.text(src).to_string(),
                                ty: fty,
                                init: d.child_by_field("value").cloned(),
                                assignments: Vec::new(),
                            });
                        }
                    }
                    "method_declaration" => {
                        info.methods.push(method_info(m, src));
                        containers.push(m.clone());
                    }
                    "constructor_declaration" => {
                        info.constructors.push(method_info(m, src));
                        containers.push(m.clone());
                    }
                    "static_initializer" | "block" => containers.push(m.clone()),
                    "enum_constant" => info.enum_constants.push(m.clone()),
                    _ => {}
                }
            }
            for container in &containers {
                let locals = declared_names(container, src);
                for a in container.descendants() {
                    if a.kind() != "assignment_expression" {
                        continue;
                    }
                    let (Some(lhs), Some(rhs)) = (a.child_by_field("left"), a.child_by_field("right")) else {
                        continue;
                    };
                    let target = match lhs.kind() {
                        "identifier" if !locals.contains(lhs.text(src)) => Some(lhs.text(src)),
                        "field_access" => {
                            let obj = lhs.child_by_field("object").map(|o| o.text(src)).unwrap_or("");
                            if obj == "this" || obj == info.name {
                                lhs.child_by_field("field").map(|f| f.text(src))
                            } else {
                                None
                            }
                        }
                        _ => None,
                    };
                    if let Some(t) = target {
                        if let Some(f) = info.fields.iter_mut().find(|f| f.name == t) {
                            f.assignments.push((rhs.clone(), container.clone()));
                        }
                    }
                }
            }
            classes.push(info);
        }
        UnitIndex { classes }
    }

    pub(crate) fn class(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Resolve a method by name and arity, preferring `current`.
    pub(crate) fn method(&self, current: Option<&str>, name: &str, arity: usize) -> Option<(&ClassInfo, &MethodInfo)> {
        let matches = |c: &&ClassInfo| c.methods.iter().any(|m| m.name == name && m.params.len() == arity);
        let class = current
            .and_then(|cur| self.class(cur))
            .filter(matches)
            .or_else(|| self.classes.iter().find(matches))?;
        let m = class.methods.iter().find(|m| m.name == name && m.params.len() == arity)?;
        Some((class, m))
    }

    /// Resolve a field, preferring `current`.
    pub(crate) fn field(&self, current: Option<&str>, name: &str) -> Option<(&ClassInfo, &FieldInfo)> {
        if let Some(c) = current.and_then(|cur| self.class(cur)) {
            if let Some(f) = c.field(name) {
                return Some((c, f));
            }
        }
        self.classes.iter().find_map(|c| c.field(name).map(|f| (c, f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_unit;

    #[test]
    fn indexes_members_and_assignments() {
        let unit = parse_unit(
            "T.java",
            "class A { static final String K = \"x\"; String m; A() { this.m = \"y\"; } \
             native String n(int i); String g() { String m = \"z\"; m = \"w\"; return m; } } \
             enum E { ONE(\"a\"), TWO(\"b\"); final String v; E(String s) { v = s; } }",
        )
        .unwrap();
        let idx = UnitIndex::build(&unit);
        let a = idx.class("A").unwrap();
        assert_eq!(a.field("m").unwrap().assignments.len(), 1);
        assert!(idx.method(Some("A"), "n", 1).unwrap().1.is_native);
        assert!(idx.method(None, "g", 1).is_none());
        let e = idx.class("E").unwrap();
        assert_eq!(e.enum_constants.len(), 2);
        assert_eq!(e.constructors.len(), 1);
        assert_eq!(e.field("v").unwrap().assignments.len(), 1);
    }
}
