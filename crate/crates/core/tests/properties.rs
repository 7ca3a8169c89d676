use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use cryptoscan::classify::signature_of;
use cryptoscan::complexity::{count_d, sample_size, score};
use cryptoscan::ingest::{canonical_signatures, extract_sites, ApiKind};
use cryptoscan::report::{exit_code, FailOn};
use cryptoscan::resolve::{resolve, resolve_in_unit, ResolutionBudget, Residual};
use cryptoscan::rules::{MisuseFinding, Severity};
use cryptoscan::syntax::{java_language, parse_unit};

/// String expressions over literals, with the value set Java would produce.
#[derive(Debug, Clone)]
enum Expr {
    Lit(String),
    Concat(Box<Expr>, Box<Expr>),
    Replace(Box<Expr>, char, char),
    Ternary(Box<Expr>, Box<Expr>),
    Upper(Box<Expr>),
}

impl Expr {
    fn java(&self) -> String {
        match self {
            Expr::Lit(s) => format!("\"{s}\""),
            Expr::Concat(a, b) => format!("({} + {})", a.java(), b.java()),
            Expr::Replace(a, x, y) => format!("{}.replace('{x}', '{y}')", a.java()),
            Expr::Ternary(a, b) => format!("(flag ? {} : {})", a.java(), b.java()),
            Expr::Upper(a) => format!("{}.toUpperCase()", a.java()),
        }
    }

    /// Brute-force evaluation over both branches of every condition.
    fn values(&self) -> BTreeSet<String> {
        match self {
            Expr::Lit(s) => BTreeSet::from([s.clone()]),
            Expr::Concat(a, b) => {
                let (a, b) = (a.values(), b.values());
                a.iter().flat_map(|x| b.iter().map(move |y| format!("{x}{y}"))).collect()
            }
            Expr::Replace(a, x, y) => a.values().iter().map(|s| s.replace(*x, &y.to_string())).collect(),
            Expr::Ternary(a, b) => a.values().union(&b.values()).cloned().collect(),
            Expr::Upper(a) => a.values().iter().map(|s| s.to_uppercase()).collect(),
        }
    }
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = "[A-Za-z0-9/]{0,6}".prop_map(Expr::Lit);
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Concat(Box::new(a), Box::new(b))),
            (inner.clone(), "[A-Ea-e/]", "[A-Ea-e/]").prop_map(|(a, x, y)| Expr::Replace(
                Box::new(a),
                x.chars().next().unwrap(),
                y.chars().next().unwrap()
            )),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Ternary(Box::new(a), Box::new(b))),
            inner.prop_map(|a| Expr::Upper(Box::new(a))),
        ]
    })
}

fn first_site(src: &str) -> cryptoscan::ingest::InvocationSite {
    let unit = Arc::new(parse_unit("P.java", src).unwrap());
    extract_sites(&unit, &canonical_signatures(&ApiKind::CANONICAL)).into_iter().next().expect("one site")
}

/// Named nodes below `node`, by a recursive walk of the raw tree-sitter tree.
fn named_below(node: tree_sitter::Node<'_>) -> usize {
    let mut n = 0;
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if !child.is_named() || child.is_missing() || matches!(child.kind(), "line_comment" | "block_comment") {
            continue;
        }
        n += 1;
        if !matches!(child.kind(), "string_literal" | "character_literal" | "text_block") {
            n += named_below(child);
        }
    }
    n
}

fn finding(severity: Severity) -> MisuseFinding {
    MisuseFinding {
        site_id: "s".into(),
        rule_id: "R1".into(),
        severity,
        message: String::new(),
        effective_value: None,
        evidence: Vec::new(),
        evasive: false,
    }
}

fn severity() -> impl Strategy<Value = Severity> {
    prop_oneof![Just(Severity::Info), Just(Severity::Warning), Just(Severity::Error)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Literal-only expressions resolve to exactly their value set.
    #[test]
    fn literal_programs_resolve_exactly(e in expr()) {
        let oracle = e.values();
        prop_assume!(oracle.len() <= 16);
        let src = format!("class P {{ void f(boolean flag) throws Exception {{ Cipher.getInstance({}); }} }}", e.java());
        let site = first_site(&src);
        let arg = site.subtree.as_ref().unwrap().first_child().unwrap().clone();
        let r = resolve(&arg, &site, ResolutionBudget::default());
        prop_assert_eq!(&r.candidates, &oracle, "{}", e.java());
        prop_assert!(r.residuals.is_empty());
    }

    /// The same expression routed through a local and a helper method.
    #[test]
    fn indirection_preserves_values(e in expr()) {
        let oracle = e.values();
        prop_assume!(oracle.len() <= 16);
        let src = format!(
            "class P {{ boolean flag; String h() {{ return {}; }} void f() throws Exception {{ String t = h(); Cipher.getInstance(t); }} }}",
            e.java()
        );
        let site = first_site(&src);
        let arg = site.subtree.as_ref().unwrap().first_child().unwrap().clone();
        let r = resolve(&arg, &site, ResolutionBudget::default());
        prop_assert_eq!(r.candidates, oracle);
    }

    /// A larger budget never loses candidates, and a chain longer than the
    /// budget is reported rather than guessed.
    #[test]
    fn budget_is_monotone(depth in 1usize..6, low in 1usize..6, extra in 0usize..4) {
        let mut src = String::from("class P {\n");
        src.push_str("String m0() { return \"AES/ECB/NoPadding\"; }\n");
        for i in 1..depth {
            src.push_str(&format!("String m{i}() {{ return m{}(); }}\n", i - 1));
        }
        src.push_str(&format!("void f() throws Exception {{ Cipher.getInstance(m{}()); }}\n}}\n", depth - 1));
        let unit = parse_unit("P.java", &src).unwrap();
        let arg = unit.root.descendants()
            .find(|n| n.kind() == "argument_list" && n.text(&unit.text).starts_with("(m"))
            .and_then(|a| a.first_child()).unwrap().clone();
        let small = resolve_in_unit(&arg, &unit, ResolutionBudget { max_indirection: low, ..Default::default() });
        let big = resolve_in_unit(&arg, &unit, ResolutionBudget { max_indirection: low + extra, ..Default::default() });
        prop_assert!(small.candidates.is_subset(&big.candidates));
        if depth <= low {
            prop_assert_eq!(small.candidates, BTreeSet::from(["AES/ECB/NoPadding".to_string()]));
        } else {
            prop_assert!(small.residuals.contains(&Residual::DepthExceeded));
            prop_assert!(small.candidates.is_empty());
        }
    }

    /// Signatures depend on shape only: renaming identifiers changes nothing.
    #[test]
    fn signature_is_deterministic(e in expr(), name in "[a-z][a-z0-9]{0,5}") {
        let body = |v: &str| format!(
            "class P {{ void f(boolean flag) throws Exception {{ String {v} = {}; Cipher.getInstance({v} + {}); }} }}",
            e.java(), e.java()
        );
        let a = signature_of(&first_site(&body("x")));
        let b = signature_of(&first_site(&body(&name)));
        let again = signature_of(&first_site(&body("x")));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, again);
    }

    /// `d` counts exactly the named nodes of the argument list.
    #[test]
    fn d_counts_named_nodes(e in expr(), comment in proptest::bool::ANY) {
        let note = if comment { "/* mode */ " } else { "" };
        let src = format!("class P {{ void f(boolean flag) throws Exception {{ Cipher.getInstance({note}{}); }} }}", e.java());
        let site = first_site(&src);
        let mut parser = tree_sitter::Parser::new();
        parser.set_language(&java_language()).unwrap();
        let tree = parser.parse(&src, None).unwrap();
        let mut stack = vec![tree.root_node()];
        let mut args = None;
        while let Some(n) = stack.pop() {
            if n.kind() == "argument_list" {
                args = Some(n);
                break;
            }
            let mut c = n.walk();
            stack.extend(n.children(&mut c));
        }
        prop_assert_eq!(count_d(&site), named_below(args.unwrap()));
    }

    /// Exit status is 1 exactly when a finding reaches the threshold.
    #[test]
    fn exit_code_contract(sevs in proptest::collection::vec(severity(), 0..8)) {
        let findings: Vec<MisuseFinding> = sevs.iter().copied().map(finding).collect();
        let worst = sevs.iter().copied().max();
        prop_assert_eq!(exit_code(&findings, FailOn::None), 0);
        prop_assert_eq!(exit_code(&findings, FailOn::Error), i32::from(worst == Some(Severity::Error)));
        prop_assert_eq!(exit_code(&findings, FailOn::Warning), i32::from(worst >= Some(Severity::Warning)));
    }

    #[test]
    fn score_is_monotone_and_bounded(d in 1usize..100_000) {
        prop_assert!(score(d) < score(d + 1));
        prop_assert!((0.0..1.0).contains(&score(d)));
    }

    #[test]
    fn sample_size_bounds(n in 0usize..200_000) {
        let s = sample_size(n, 0.95, 0.05).unwrap();
        prop_assert!(s <= n);
        if n <= 384 {
            prop_assert_eq!(s, n);
        } else {
            prop_assert!((1..=384).contains(&s));
        }
    }
}
