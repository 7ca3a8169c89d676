//! Java templates for the benchmark cases.
//!
//! Placeholders look like `%X%`. Generated identifiers avoid vowels so they
//! can never spell a keyword or a word the classifier looks for.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ExpectedFinding;
use crate::ingest::Category;
use crate::rules::Severity;

pub(crate) struct Namer<'r> {
    rng: &'r mut ChaCha8Rng,
    used: HashSet<String>,
}

const FIRST: &[u8] = b"bcdfhjkmnpqrtvwxz";
const REST: &[u8] = b"bcdfhjkmnpqrtvwxz0123456789";

impl<'r> Namer<'r> {
    pub(crate) fn new(rng: &'r mut ChaCha8Rng) -> Self {
        Namer { rng, used: HashSet::new() }
    }

    pub(crate) fn ident(&mut self) -> String {
        loop {
            let len = self.rng.gen_range(2..=4);
            let mut s = String::new();
            s.push(FIRST[self.rng.gen_range(0..FIRST.len())] as char);
            for _ in 0..len {
                s.push(REST[self.rng.gen_range(0..REST.len())] as char);
            }
            if self.used.insert(s.clone()) {
                return s;
            }
        }
    }

    pub(crate) fn class(&mut self) -> String {
        let mut s = self.ident();
        s.replace_range(0..1, &s[0..1].to_ascii_uppercase());
        s
    }

    pub(crate) fn pick<'a>(&mut self, pool: &[&'a str]) -> &'a str {
        pool.choose(self.rng).copied().expect("nonempty pool")
    }
}

pub(crate) struct VariantSource {
    pub class: String,
    pub source: String,
    pub expected: Vec<ExpectedFinding>,
}

pub(crate) struct CaseTemplate {
    pub case_id: &'static str,
    pub category: Category,
    pub dir: &'static str,
    pub variants: fn(&mut Namer<'_>) -> Vec<VariantSource>,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("%{k}%"), v);
    }
    debug_assert!(!out.contains("%C%"), "unfilled template");
    out
}

fn expect(rule: &str, severity: Severity, value: Option<&str>, evasive: bool) -> ExpectedFinding {
    ExpectedFinding { rule_id: rule.into(), severity, effective_value: value.map(str::to_string), evasive }
}

fn err(rule: &str, value: &str, evasive: bool) -> ExpectedFinding {
    expect(rule, Severity::Error, Some(value), evasive)
}

fn warn(rule: &str, value: &str, evasive: bool) -> ExpectedFinding {
    expect(rule, Severity::Warning, Some(value), evasive)
}

fn flex(rule: &str, severity: Severity) -> ExpectedFinding {
    expect(rule, severity, None, false)
}

const CIPHER_CLASS: &str = "package bench;

import javax.crypto.Cipher;

public class %C% {
%BODY%
}
";

/// A restrictive variant: `body` is the class body with its own placeholders.
fn cipher(n: &mut Namer<'_>, body: &str, vars: &[(&str, &str)], expected: Vec<ExpectedFinding>) -> VariantSource {
    let class = n.class();
    let r = n.ident();
    let mut all: Vec<(&str, &str)> = vec![("C", &class), ("R", &r)];
    all.extend_from_slice(vars);
    let source = fill(&CIPHER_CLASS.replace("%BODY%", body), &all);
    VariantSource { class, source, expected }
}

fn string_oid(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let (oid, name) = *[("1.2.840.113549.3.2", "RC2"), ("1.2.840.113549.3.7", "DESede")].choose(n.rng).expect("pool");
    let wrap = n.pick(&["AESWrap", "AESKWP"]);
    let body = "    public Cipher %R%() throws Exception {
        return Cipher.getInstance(\"%V%\");
    }";
    vec![
        cipher(n, body, &[("V", oid)], vec![err("R2", name, false)]),
        cipher(n, body, &[("V", wrap)], vec![err("R4", wrap, false)]),
    ]
}

fn id(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let ecb = n.pick(&["AES/ECB/PKCS5Padding", "AES/ECB/NoPadding", "AES/ECB/PKCS7Padding"]);
    let v = n.ident();
    let local = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        String %V% = \"%T%\";
        return Cipher.getInstance(%V%);
    }",
        &[("V", &v), ("T", ecb)],
        vec![err("R3", ecb, false)],
    );
    let v = n.ident();
    let formatted = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        String %V% = String.format(\"%s/%s/%s\", \"AES\", \"CBC\", \"PKCS7Padding\");
        return Cipher.getInstance(%V%);
    }",
        &[("V", &v)],
        vec![warn("R5", "AES/CBC/PKCS7Padding", false)],
    );
    let f = n.ident();
    let des = n.pick(&["DES", "DESede"]);
    let field = cipher(
        n,
        "    private static final String %F% = \"%T%\";

    public Cipher %R%() throws Exception {
        return Cipher.getInstance(%F%);
    }",
        &[("F", &f), ("T", des)],
        vec![err("R1", des, false)],
    );
    vec![local, formatted, field]
}

fn method(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let (f, m) = (n.ident(), n.ident());
    vec![cipher(
        n,
        "    private static int %F%;

    private static String %M%() {
        return %F% >= 2 ? \"AES/GCM/NoPadding\" : \"AES\";
    }

    public Cipher %R%() throws Exception {
        return Cipher.getInstance(%M%());
    }",
        &[("F", &f), ("M", &m)],
        vec![err("R4", "AES", false)],
    )]
}

fn method_star(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let (a, b) = (n.ident(), n.ident());
    let padding = n.pick(&["NoPadding", "PKCS5Padding"]);
    let value = format!("AES/ECB/{padding}");
    vec![cipher(
        n,
        "    private String %A%() {
        return \"AES\";
    }

    private String %B%() {
        return %A%() + \"/ECB/%P%\";
    }

    public Cipher %R%() throws Exception {
        return Cipher.getInstance(%B%());
    }",
        &[("A", &a), ("B", &b), ("P", padding)],
        vec![err("R3", &value, false)],
    )]
}

fn native(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let r8 = || vec![flex("R8", Severity::Info)];
    let m = n.ident();
    let direct = cipher(
        n,
        "    public static native String %M%(int i);

    public Cipher %R%() throws Exception {
        return Cipher.getInstance(%M%(1));
    }",
        &[("M", &m)],
        r8(),
    );
    let (m, v) = (n.ident(), n.ident());
    let ident = cipher(
        n,
        "    private static native String %M%(int i);

    public Cipher %R%() throws Exception {
        String %V% = %M%(1);
        return Cipher.getInstance(%V%);
    }",
        &[("M", &m), ("V", &v)],
        r8(),
    );
    let (m, f) = (n.ident(), n.ident());
    let instance = cipher(
        n,
        "    private String %F%;

    private final native String %M%();

    public Cipher %R%() throws Exception {
        %F% = this.%M%();
        return Cipher.getInstance(%F%);
    }",
        &[("M", &m), ("F", &f)],
        r8(),
    );
    vec![direct, ident, instance]
}

fn strop(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let replace = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        return Cipher.getInstance(\"DE$S\".replace(\"$\", \"\"));
    }",
        &[],
        vec![err("R1", "DES", true)],
    );
    let char_at = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        return Cipher.getInstance(\"AES/\" + ((char) (\"AES/GCM/NoPadding\".charAt(4) - 2)) + \"AES/GCM/NoPadding\".charAt(5) + ((char) (\"AES/GCM/NoPadding\".charAt(6) - 11)) + \"/NoPadding\");
    }",
        &[],
        vec![err("R3", "AES/ECB/NoPadding", true)],
    );
    vec![replace, char_at]
}

fn strbuf(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let v = n.ident();
    vec![cipher(
        n,
        "    public Cipher %R%() throws Exception {
        StringBuffer %V% = new StringBuffer();
        %V%.append(\"DESede/CBC/\");
        %V%.append(\"NoPadding\");
        return Cipher.getInstance(%V%.toString());
    }",
        &[("V", &v)],
        vec![err("R1", "DESede/CBC/NoPadding", false)],
    )]
}

fn strbl_star(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let v = n.ident();
    vec![cipher(
        n,
        "    public Cipher %R%() throws Exception {
        StringBuilder %V% = new StringBuilder();
        %V%.append(\"AES\");
        %V%.append(\"/EC\");
        %V%.append(\"B/PKCS7P\");
        %V%.append(\"adding\");
        return Cipher.getInstance(%V%.toString());
    }",
        &[("V", &v)],
        vec![err("R3", "AES/ECB/PKCS7Padding", true)],
    )]
}

fn conct(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let v = n.ident();
    let padding = n.pick(&["PKCS5Padding", "NoPadding"]);
    let value = format!("AES/ECB/{padding}");
    let tail = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        String %V% = \"%P%\";
        return Cipher.getInstance(\"AES/ECB/\" + %V%);
    }",
        &[("V", &v), ("P", padding)],
        vec![err("R3", &value, false)],
    );
    let a = n.ident();
    let parts = cipher(
        n,
        "    public Cipher %R%() throws Exception {
        String %A% = \"AES\";
        return Cipher.getInstance(%A% + \"/\" + \"CBC\" + \"/PKCS5Padding\");
    }",
        &[("A", &a)],
        vec![warn("R5", "AES/CBC/PKCS5Padding", false)],
    );
    vec![tail, parts]
}

fn bas64(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let class = n.class();
    let r = n.ident();
    let source = fill(
        "package bench;

import android.util.Base64;
import javax.crypto.Cipher;

public class %C% {
    public Cipher %R%() throws Exception {
        return Cipher.getInstance(new String(Base64.decode(\"REVTL0NCQy9QS0NTNVBhZGRpbmc=\", Base64.DEFAULT)));
    }
}
",
        &[("C", &class), ("R", &r)],
    );
    vec![VariantSource {
        class,
        source,
        expected: vec![err("R1", "DES/CBC/PKCS5Padding", true), warn("R5", "DES/CBC/PKCS5Padding", true)],
    }]
}

fn id_method(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let q = n.class();
    vec![cipher(
        n,
        "    public static String %Q%(String str) {
        int[] iArr = new int[str.length()];
        iArr[4] = 6;
        iArr[5] = 1;
        iArr[6] = 1;
        return new String(%Q%(str.getBytes(), iArr));
    }

    public static byte[] %Q%(byte[] bArr, int[] iArr) {
        if (bArr == null || bArr.length == 0 || iArr == null || iArr.length == 0) {
            return bArr;
        }
        byte[] bArr2 = new byte[bArr.length];
        for (int i = 0; i < bArr.length; i++) {
            bArr2[i] = (byte) (bArr[i] ^ iArr[i]);
        }
        return bArr2;
    }

    public Cipher %R%() throws Exception {
        String %Q% = %Q%(\"AES/CBC/PKCS5Padding\");
        return Cipher.getInstance(%Q%);
    }",
        &[("Q", &q)],
        vec![err("R3", "AES/ECB/PKCS5Padding", true)],
    )]
}

fn terop(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let v = n.ident();
    let literal = cipher(
        n,
        "    public Cipher %R%(int %V%) throws Exception {
        return Cipher.getInstance(%V% >= 2 ? \"AES/GCM/NoPadding\" : \"AES/CBC/PKCS5Padding\");
    }",
        &[("V", &v)],
        vec![warn("R5", "AES/CBC/PKCS5Padding", false)],
    );
    let z = n.ident();
    let identifiers = cipher(
        n,
        "    private static final String CBC_PADDING = \"AES/CBC/PKCS5Padding\";
    private static final String CBC_NOPADDING = \"AES/CBC/NoPadding\";

    public Cipher %R%(boolean %Z%) throws Exception {
        return Cipher.getInstance(%Z% ? CBC_PADDING : CBC_NOPADDING);
    }",
        &[("Z", &z)],
        vec![warn("R5", "AES/CBC/PKCS5Padding", false)],
    );
    vec![literal, identifiers]
}

fn static_field(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let class = n.class();
    let r = n.ident();
    let value = n.pick(&["AES/ECB/PKCS7Padding", "AES/ECB/PKCS5Padding"]);
    let source = fill(
        "package bench;

import javax.crypto.Cipher;

final class SecurityConstants%C% {
    static final String AES_MODE = \"%V%\";
}

public class %C% {
    public Cipher %R%() throws Exception {
        return Cipher.getInstance(SecurityConstants%C%.AES_MODE);
    }
}
",
        &[("C", &class), ("R", &r), ("V", value)],
    );
    vec![VariantSource { class, source, expected: vec![err("R3", value, false)] }]
}

fn enum_case(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let class = n.class();
    let (e, f, v, r) = (n.ident(), n.ident(), n.ident(), n.ident());
    let source = fill(
        "package bench;

import javax.crypto.Cipher;

enum %E% {
    ECB_MODE(\"AES/ECB/PKCS5Padding\"),
    GCM_MODE(\"AES/GCM/NoPadding\");

    final String %F%;

    %E%(String s) {
        this.%F% = s;
    }
}

public class %C% {
    public Cipher %R%() throws Exception {
        %E% %V% = %E%.ECB_MODE;
        return Cipher.getInstance(%V%.%F%);
    }
}
",
        &[("C", &class), ("E", &e), ("F", &f), ("V", &v), ("R", &r)],
    );
    vec![VariantSource { class, source, expected: vec![err("R3", "AES/ECB/PKCS5Padding", false)] }]
}

const TRUST_CLASS: &str = "package bench;

import android.util.Log;
import java.security.MessageDigest;
import java.security.NoSuchAlgorithmException;
import java.security.cert.CertificateException;
import java.security.cert.X509Certificate;
import javax.net.ssl.X509TrustManager;

public class %C% implements X509TrustManager {
%FIELDS%    @Override
    public void checkClientTrusted(X509Certificate[] %P%, String %Q%) throws CertificateException {
%CLIENT%
    }

    @Override
    public void checkServerTrusted(X509Certificate[] %P%, String %Q%) throws CertificateException {
%BODY%
    }

    @Override
    public X509Certificate[] getAcceptedIssuers() {
        return new X509Certificate[0];
    }
}
";

const CLIENT_REJECTS: &str = "        throw new CertificateException(\"client certificates are not accepted\");";

fn trust(n: &mut Namer<'_>, fields: &str, client: &str, body: &str, vars: &[(&str, &str)], expected: Vec<ExpectedFinding>) -> VariantSource {
    let class = n.class();
    let (p, q, x) = (n.ident(), n.ident(), n.ident());
    let mut all: Vec<(&str, &str)> = vec![("C", &class), ("P", &p), ("Q", &q), ("X", &x)];
    all.extend_from_slice(vars);
    let source = fill(
        &TRUST_CLASS.replace("%FIELDS%", fields).replace("%CLIENT%", client).replace("%BODY%", body),
        &all,
    );
    VariantSource { class, source, expected }
}

const DNS: &[&str] = &[
    "CN=Quantum Ultra, OU=Engineering, O=Extron Electronics, L=Anaheim, ST=CA, C=US",
    "CN=api.example.org, O=Example Org, C=DE",
];

fn f_empty(n: &mut Namer<'_>) -> Vec<VariantSource> {
    vec![trust(n, "", CLIENT_REJECTS, "", &[], vec![flex("F1", Severity::Error)])]
}

fn f_log(n: &mut Namer<'_>) -> Vec<VariantSource> {
    vec![trust(
        n,
        "    private static final String TAG = \"%C%\";\n\n",
        CLIENT_REJECTS,
        "        for (X509Certificate %X% : %P%) {
            Log.e(TAG, \"Certificate:\" + %X%);
        }",
        &[],
        vec![flex("F2", Severity::Error)],
    )]
}

fn f_client(n: &mut Namer<'_>) -> Vec<VariantSource> {
    vec![trust(
        n,
        "",
        "",
        "        try {
            checkClientTrusted(%P%, %Q%);
        } catch (Exception e) {
            throw new CertificateException(\"Certificate not trusted. It has expired\", e);
        }",
        &[],
        vec![flex("F3", Severity::Error)],
    )]
}

fn f_val(n: &mut Namer<'_>) -> Vec<VariantSource> {
    vec![trust(
        n,
        "",
        CLIENT_REJECTS,
        "        for (X509Certificate %X% : %P%) {
            %X%.checkValidity();
        }",
        &[],
        vec![flex("F4", Severity::Error)],
    )]
}

fn f_hash(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let digest = n.pick(&["SHA1", "SHA-1"]);
    vec![trust(
        n,
        "    private static String hex(byte[] b) {
        StringBuilder sb = new StringBuilder();
        for (byte x : b) {
            sb.append(String.format(\"%02X\", x));
        }
        return sb.toString();
    }

",
        CLIENT_REJECTS,
        "        try {
            if (hex(MessageDigest.getInstance(\"%D%\").digest(%P%[0].getEncoded())).equalsIgnoreCase(\"7BCFF44099A35BC093BB48C5A6B9A516CDFDA0D1\")) {
                return;
            }
        } catch (NoSuchAlgorithmException e) {
            throw new CertificateException(e);
        }
        throw new CertificateException(\"pin mismatch\");",
        &[("D", digest)],
        vec![flex("F7", Severity::Warning)],
    )]
}

fn f_getsub(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let dn = n.pick(DNS);
    vec![trust(
        n,
        "",
        CLIENT_REJECTS,
        "        if (!%P%[0].getSubjectDN().toString().contains(\"%DN%\")) {
            throw new CertificateException(\"unexpected subject\");
        }",
        &[("DN", dn)],
        vec![flex("F6", Severity::Warning), flex("F8", Severity::Warning)],
    )]
}

fn f_len_auth(n: &mut Namer<'_>) -> Vec<VariantSource> {
    vec![trust(
        n,
        "",
        CLIENT_REJECTS,
        "        if (%P% == null || %P%.length == 0) {
            throw new IllegalArgumentException(\"certificate chain is empty\");
        }
        if (%Q% == null || %Q%.length() == 0) {
            throw new IllegalArgumentException(\"auth type is empty\");
        }",
        &[],
        vec![flex("F10", Severity::Error)],
    )]
}

fn f_getpub(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let pin = n.pick(&["Sun RSA public key, 2048 bits", "OpenSSLRSAPublicKey{modulus=c3a1}"]);
    vec![trust(
        n,
        "    private static final String PINNED_KEY = \"%K%\";\n\n",
        CLIENT_REJECTS,
        "        if (!%P%[0].getPublicKey().toString().equals(PINNED_KEY)) {
            throw new CertificateException(\"public key mismatch\");
        }",
        &[("K", pin)],
        vec![flex("F8", Severity::Warning)],
    )]
}

fn f_strop(n: &mut Namer<'_>) -> Vec<VariantSource> {
    let dn = n.pick(DNS);
    vec![trust(
        n,
        "",
        CLIENT_REJECTS,
        "        if (!%P%[0].getIssuerDN().getName().equals(\"%DN%\")) {
            throw new CertificateException(\"unexpected issuer\");
        }",
        &[("DN", dn)],
        vec![flex("F6", Severity::Warning), flex("F8", Severity::Warning)],
    )]
}

/// The 23 cases in table order: 14 restrictive rows, then 9 flexible rows.
pub(crate) const CASES: [CaseTemplate; 23] = [
    CaseTemplate { case_id: "STRING/OID", category: Category::Restrictive, dir: "r01_STRING_OID", variants: string_oid },
    CaseTemplate { case_id: "ID", category: Category::Restrictive, dir: "r02_ID", variants: id },
    CaseTemplate { case_id: "METHOD", category: Category::Restrictive, dir: "r03_METHOD", variants: method },
    CaseTemplate { case_id: "METHOD*", category: Category::Restrictive, dir: "r04_METHOD_STAR", variants: method_star },
    CaseTemplate { case_id: "NATIVE", category: Category::Restrictive, dir: "r05_NATIVE", variants: native },
    CaseTemplate { case_id: "STROP", category: Category::Restrictive, dir: "r06_STROP", variants: strop },
    CaseTemplate { case_id: "STRBUF", category: Category::Restrictive, dir: "r07_STRBUF", variants: strbuf },
    CaseTemplate { case_id: "STRBL*", category: Category::Restrictive, dir: "r08_STRBL_STAR", variants: strbl_star },
    CaseTemplate { case_id: "CONCT", category: Category::Restrictive, dir: "r09_CONCT", variants: conct },
    CaseTemplate { case_id: "BAS64", category: Category::Restrictive, dir: "r10_BAS64", variants: bas64 },
    CaseTemplate { case_id: "ID+METHOD", category: Category::Restrictive, dir: "r11_ID_METHOD", variants: id_method },
    CaseTemplate { case_id: "TEROP", category: Category::Restrictive, dir: "r12_TEROP", variants: terop },
    CaseTemplate { case_id: "STATIC", category: Category::Restrictive, dir: "r13_STATIC", variants: static_field },
    CaseTemplate { case_id: "ENUM", category: Category::Restrictive, dir: "r14_ENUM", variants: enum_case },
    CaseTemplate { case_id: "EMPTY", category: Category::Flexible, dir: "f01_EMPTY", variants: f_empty },
    CaseTemplate { case_id: "LOG", category: Category::Flexible, dir: "f02_LOG", variants: f_log },
    CaseTemplate { case_id: "CLIENT", category: Category::Flexible, dir: "f03_CLIENT", variants: f_client },
    CaseTemplate { case_id: "VAL", category: Category::Flexible, dir: "f04_VAL", variants: f_val },
    CaseTemplate { case_id: "HASH", category: Category::Flexible, dir: "f05_HASH", variants: f_hash },
    CaseTemplate { case_id: "GETSUB", category: Category::Flexible, dir: "f06_GETSUB", variants: f_getsub },
    CaseTemplate { case_id: "LEN/AUTH", category: Category::Flexible, dir: "f07_LEN_AUTH", variants: f_len_auth },
    CaseTemplate { case_id: "GETPUB", category: Category::Flexible, dir: "f08_GETPUB", variants: f_getpub },
    CaseTemplate { case_id: "STROP", category: Category::Flexible, dir: "f09_STROP", variants: f_strop },
];
