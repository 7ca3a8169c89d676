//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cryptoscan::bench::{self, grade, self_report, Verdict};
use cryptoscan::classify::{match_signature, ArgumentSignature};
use cryptoscan::complexity::{sample_size, score};
use cryptoscan::ingest::ApiKind;
use cryptoscan::report::{render_jsonl, run_scan, strata_table, ScanConfig};
use cryptoscan::resolve::{resolve_in_unit, ResolutionBudget, ResolvedValue};
use cryptoscan::syntax::parse_unit;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, bad: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(bad.into())
    }
}

fn within(limit: Duration, t: Instant) -> Outcome {
    let took = t.elapsed();
    check(took <= limit, format!("{took:.2?}"), format!("took {took:.2?}, limit {limit:?}"))
}

/// Reference stratum headings, rounded to four places. The formula gives
/// 0.292255 for d = 2.
fn c1_metric() -> Outcome {
    let published = [(0, -1.0), (1, 0.0), (2, 0.2923), (3, 0.4439), (4, 0.5385)];
    let mut worst: f64 = 0.0;
    for (d, want) in published {
        worst = worst.max((score(d) - want).abs());
    }
    check(worst <= 5e-5, format!("max deviation {worst:.2e}"), format!("max deviation {worst:.2e}"))
}

fn arg_of_first_call(src: &str) -> ResolvedValue {
    let unit = parse_unit("Fixture.java", src).expect("fixture parses");
    let text = unit.text.clone();
    let arg = unit
        .root
        .descendants()
        .find(|n| n.kind() == "method_invocation" && n.child_by_field("name").is_some_and(|m| m.text(&text) == "getInstance"))
        .and_then(|c| c.child_by_field("arguments"))
        .and_then(|a| a.first_child())
        .expect("call")
        .clone();
    resolve_in_unit(&arg, &unit, ResolutionBudget::default())
}

/// Two headline fixtures with values computed outside the resolver. The full
/// fixture set lives in the resolver_oracle test.
fn c2_resolver() -> Outcome {
    let t = Instant::now();
    let char_at = arg_of_first_call(
        r#"class A { void f() throws Exception { Cipher.getInstance("AES/" + ((char) ("AES/GCM/NoPadding".charAt(4) - 2)) + "AES/GCM/NoPadding".charAt(5) + ((char) ("AES/GCM/NoPadding".charAt(6) - 11)) + "/NoPadding"); } }"#,
    );
    let g: Vec<u8> = b"AES/GCM/NoPadding".to_vec();
    let oracle_a = format!("AES/{}{}{}/NoPadding", (g[4] - 2) as char, g[5] as char, (g[6] - 11) as char);

    let xor = arg_of_first_call(
        r#"class A {
            public static String Qhi(String str) { int[] iArr = new int[str.length()]; iArr[4] = 6; iArr[5] = 1; iArr[6] = 1; return new String(Qhi(str.getBytes(), iArr)); }
            public static byte[] Qhi(byte[] bArr, int[] iArr) {
                if (bArr == null || bArr.length == 0 || iArr == null || iArr.length == 0) { return bArr; }
                byte[] bArr2 = new byte[bArr.length];
                for (int i = 0; i < bArr.length; i++) { bArr2[i] = (byte) (bArr[i] ^ iArr[i]); }
                return bArr2;
            }
            void f() throws Exception { String Qhi = Qhi("AES/CBC/PKCS5Padding"); Cipher.getInstance(Qhi); }
        }"#,
    );
    let mut mask = [0u8; 20];
    mask[4..7].copy_from_slice(&[6, 1, 1]);
    let oracle_b: String = b"AES/CBC/PKCS5Padding".iter().zip(mask).map(|(b, k)| (b ^ k) as char).collect();

    let ok = char_at.candidates == BTreeSet::from([oracle_a.clone()])
        && xor.candidates == BTreeSet::from([oracle_b.clone()])
        && char_at.is_concrete()
        && xor.is_concrete()
        && oracle_a == "AES/ECB/NoPadding"
        && oracle_b == "AES/ECB/PKCS5Padding";
    check(ok, "", format!("charAt -> {:?}, xor -> {:?}", char_at.candidates, xor.candidates))?;
    within(Duration::from_secs(1), t)
}

fn c3_self_detection(corpus: &Path) -> Outcome {
    let t = Instant::now();
    let cases = bench::generate_corpus(corpus, 7).map_err(|e| e.to_string())?;
    let report = self_report(corpus, &ScanConfig::default().all_apis()).map_err(|e| e.to_string())?;
    let verdicts = grade(&cases, &report);
    let detected = verdicts.iter().filter(|v| v.verdict == Verdict::Detected).count();
    check(verdicts.len() == 23 && detected == 23, format!("{detected}/23 detected"), format!("{detected}/{} detected", verdicts.len()))?;
    within(Duration::from_secs(10), t)
}

/// Every restrictive finding on the corpus carries the manifest's evasive
/// flag, over several seeds.
fn c4_evasion() -> Outcome {
    let mut checked = 0;
    for seed in [1u64, 2, 3, 4, 5] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cases = bench::generate_corpus(dir.path(), seed).map_err(|e| e.to_string())?;
        let result = run_scan(dir.path(), &ScanConfig::default().all_apis()).map_err(|e| e.to_string())?;
        for v in cases.iter().flat_map(|c| &c.variants) {
            let a = result.analyses.iter().find(|a| a.site.path() == v.file).ok_or(format!("{} not scanned", v.file))?;
            let got: Vec<(&str, bool)> = a.findings.iter().map(|f| (f.rule_id.as_str(), f.evasive)).collect();
            let want: Vec<(&str, bool)> = v.expected.iter().map(|e| (e.rule_id.as_str(), e.evasive)).collect();
            if got != want {
                return Err(format!("seed {seed} {}: {got:?} != {want:?}", v.file));
            }
            checked += got.len();
        }
    }
    Ok(format!("{checked} findings over 5 seeds"))
}

fn c5_sampling() -> Outcome {
    let big = sample_size(79_671, 0.95, 0.05).map_err(|e| e.to_string())?;
    // independent Cochran computation with z from the standard table
    let z: f64 = 1.959_963_984_540_054;
    let n0 = z * z * 0.25 / 0.0025;
    let oracle = (n0 / (1.0 + (n0 - 1.0) / 79_671.0)).ceil() as usize;
    let census = (1..=384).all(|n| sample_size(n, 0.95, 0.05).ok() == Some(n));
    check(big == 383 && oracle == 383 && census, format!("n(79671) = {big}, census up to 384"), format!("n(79671) = {big}, oracle {oracle}, census {census}"))
}

/// A desk-scale corpus: mostly single-literal `Cipher.getInstance` calls and
/// a minority of empty trust managers.
fn synthetic_corpus(dir: &Path, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let algs = ["AES/GCM/NoPadding", "AES/CBC/PKCS5Padding", "AES", "DES", "RSA/ECB/PKCS1Padding", "AES/ECB/NoPadding"];
    for i in 0..400 {
        let alg = algs[rng.gen_range(0..algs.len())];
        let roll: f64 = rng.gen();
        let body = if roll < 0.6 {
            format!("Cipher.getInstance(\"{alg}\");")
        } else if roll < 0.75 {
            format!("String t = \"{alg}\";\n        Cipher.getInstance(t);")
        } else if roll < 0.85 {
            format!("Cipher.getInstance(\"{alg}\" + \"\");")
        } else if roll < 0.95 {
            format!("Cipher.getInstance(pick(\"{alg}\"));")
        } else {
            format!("Cipher.getInstance(flag ? \"{alg}\" : \"AES\");")
        };
        let src = format!(
            "import javax.crypto.Cipher;\n\nclass R{i} {{\n    boolean flag;\n\n    String pick(String s) {{\n        return s;\n    }}\n\n    void run() throws Exception {{\n        {body}\n    }}\n}}\n"
        );
        fs::write(dir.join(format!("R{i}.java")), src)?;
    }
    for i in 0..120 {
        let roll: f64 = rng.gen();
        let body = if roll < 0.35 {
            String::new()
        } else if roll < 0.7 {
            "        for (X509Certificate c : chain) {\n            c.checkValidity();\n        }\n".to_string()
        } else {
            "        if (chain == null || chain.length == 0) {\n            throw new IllegalArgumentException(\"empty\");\n        }\n        chain[0].checkValidity();\n".to_string()
        };
        let src = format!(
            "import java.security.cert.X509Certificate;\nimport javax.net.ssl.X509TrustManager;\n\nclass T{i} implements X509TrustManager {{\n    public void checkServerTrusted(X509Certificate[] chain, String authType) {{\n{body}    }}\n}}\n"
        );
        fs::write(dir.join(format!("T{i}.java")), src)?;
    }
    Ok(())
}

fn c6_distribution() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    synthetic_corpus(dir.path(), 2024).map_err(|e| e.to_string())?;
    let cfg = ScanConfig::default();
    let result = run_scan(dir.path(), &cfg).map_err(|e| e.to_string())?;
    let rows = strata_table(result.analyses.iter().map(|a| (a.site.api, a.site.id.as_str(), a.complexity.d)), 0.95, 0.05)
        .map_err(|e| e.to_string())?;
    let restrictive: Vec<_> = rows.iter().filter(|r| r.api == ApiKind::RestrictiveCipherGetinstance).collect();
    let top = restrictive.iter().max_by_key(|r| (r.population, -r.key)).ok_or("no restrictive strata")?;
    let empty = rows
        .iter()
        .find(|r| r.api == ApiKind::FlexibleCheckServerTrusted && r.key == -1)
        .map_or(0, |r| r.population);
    let top_score = score(top.key as usize);
    let mut summary = String::new();
    let _ = write!(summary, "restrictive plurality at score {top_score:.4} ({} sites), {empty} empty trust managers", top.population);
    check(top_score == 0.0 && empty > 0, summary.clone(), summary)
}

fn c7_determinism(corpus: &Path) -> Outcome {
    let cfg = ScanConfig::default().all_apis();
    let a = render_jsonl(&run_scan(corpus, &cfg).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
    let seq = ScanConfig { execution: cryptoscan::exec::Execution::Sequential, ..cfg.clone() };
    let b = render_jsonl(&run_scan(corpus, &seq).map_err(|e| e.to_string())?, &seq).map_err(|e| e.to_string())?;
    let c = render_jsonl(&run_scan(corpus, &cfg).map_err(|e| e.to_string())?, &cfg).map_err(|e| e.to_string())?;
    check(a == b && a == c, format!("{} bytes identical across 3 runs", a.len()), "reports differ")
}

fn c8_signature(corpus: &Path) -> Outcome {
    let manifest = bench::load_manifest(corpus).map_err(|e| e.to_string())?;
    let result = run_scan(corpus, &ScanConfig::default().all_apis()).map_err(|e| e.to_string())?;
    let pattern = ArgumentSignature::from_pairs([("identifier", 3), ("ternary_expression", 1)]);
    let hits = match_signature(result.analyses.iter().map(|a| (a.site.id.as_str(), &a.signature)), &pattern);
    let hit_files: BTreeSet<&str> = hits.iter().map(|id| id.rsplit_once(':').map_or(id.as_str(), |(p, _)| p)).collect();
    // the TEROP variants whose branches are identifiers
    let expected: BTreeSet<&str> = manifest
        .cases
        .iter()
        .filter(|c| c.case_id == "TEROP")
        .flat_map(|c| &c.variants)
        .filter(|v| !v.source.contains("? \""))
        .map(|v| v.file.as_str())
        .collect();
    check(
        !expected.is_empty() && hit_files == expected,
        format!("{} match: {}", hits.len(), hits.join(", ")),
        format!("matched {hit_files:?}, expected {expected:?}"),
    )
}

fn main() {
    // `cargo test` passes harness flags; listing must not run the checks.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let corpus = tempfile::tempdir().expect("tempdir");
    let runs: Vec<(u8, &str, Outcome)> = vec![
        (1, "score(d) matches the published strata headings", c1_metric()),
        (2, "resolver agrees with independent oracles", c2_resolver()),
        (3, "bundled detector detects all 23 benchmark cases", c3_self_detection(corpus.path())),
        (4, "evasive flags match the benchmark manifest", c4_evasion()),
        (5, "sample sizes reproduce 383 and the census rule", c5_sampling()),
        (6, "synthetic corpus has the expected strata shape", c6_distribution()),
        (7, "scan reports are byte-identical across runs", c7_determinism(corpus.path())),
        (8, "signature query finds exactly the identifier ternaries", c8_signature(corpus.path())),
    ];
    let mut failed = 0;
    for (n, what, outcome) in &runs {
        match outcome {
            Ok(detail) if detail.is_empty() => println!("criterion {n}: PASS  {what}"),
            Ok(detail) => println!("criterion {n}: PASS  {what} ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL  {what} ({why})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
