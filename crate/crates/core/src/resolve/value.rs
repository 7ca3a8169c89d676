//! Concrete Java values and the set-valued abstraction over them.

use std::collections::BTreeSet;

use base64::alphabet;
use base64::engine::general_purpose::{GeneralPurpose, GeneralPurposeConfig};
use base64::engine::DecodePaddingMode;
use base64::Engine;

use super::Residual;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Elem {
    Int,
    Byte,
    Char,
    Short,
    Long,
    Str,
    Other,
}

impl Elem {
    pub(crate) fn from_type(ty: &str) -> Elem {
        let base = ty.trim().trim_end_matches("[]").trim();
        match base.rsplit('.').next().unwrap_or(base) {
            "int" | "Integer" => Elem::Int,
            "byte" | "Byte" => Elem::Byte,
            "char" | "Character" => Elem::Char,
            "short" | "Short" => Elem::Short,
            "long" | "Long" => Elem::Long,
            "String" | "CharSequence" => Elem::Str,
            _ => Elem::Other,
        }
    }

    /// Narrow a value on store into a variable or array slot of this type.
    pub(crate) fn coerce(self, v: Value) -> Value {
        match (self, v) {
            (Elem::Byte, Value::Int(i)) => Value::Int(i as i8 as i64),
            (Elem::Byte, Value::Char(c)) => Value::Int(c as i8 as i64),
            (Elem::Short, Value::Int(i)) => Value::Int(i as i16 as i64),
            (Elem::Char, Value::Int(i)) => Value::Char(i as u16),
            (Elem::Int, Value::Char(c)) => Value::Int(c as i64),
            (Elem::Long, Value::Char(c)) => Value::Int(c as i64),
            (_, v) => v,
        }
    }

    pub(crate) fn zero(self) -> Value {
        match self {
            Elem::Char => Value::Char(0),
            Elem::Str | Elem::Other => Value::Null,
            _ => Value::Int(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Value {
    Str(String),
    Int(i64),
    Char(u16),
    Bool(bool),
    Null,
    Array(Elem, Vec<Value>),
    Builder(String),
    EnumConst { class: String, name: String },
    Decoder { url_safe: bool, mime: bool },
}

impl Value {
    pub(crate) fn bytes(bytes: &[u8]) -> Value {
        Value::Array(Elem::Byte, bytes.iter().map(|b| Value::Int(*b as i8 as i64)).collect())
    }

    pub(crate) fn chars(units: &[u16]) -> Value {
        Value::Array(Elem::Char, units.iter().map(|c| Value::Char(*c)).collect())
    }

    pub(crate) fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            Value::Char(c) => Some(*c as i64),
            _ => None,
        }
    }

    pub(crate) fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub(crate) fn as_byte_vec(&self) -> Option<Vec<u8>> {
        match self {
            Value::Array(Elem::Byte, items) => items.iter().map(|v| v.as_int().map(|i| i as u8)).collect(),
            _ => None,
        }
    }

    pub(crate) fn as_char_units(&self) -> Option<Vec<u16>> {
        match self {
            Value::Array(Elem::Char, items) => items
                .iter()
                .map(|v| match v {
                    Value::Char(c) => Some(*c),
                    Value::Int(i) => Some(*i as u16),
                    _ => None,
                })
                .collect(),
            _ => None,
        }
    }

    /// `String.valueOf` semantics. `None` for values without a meaningful
    /// string form (arrays print as identity hashes).
    pub(crate) fn java_string(&self) -> Option<String> {
        match self {
            Value::Str(s) | Value::Builder(s) => Some(s.clone()),
            Value::Int(i) => Some(i.to_string()),
            Value::Char(c) => Some(from_units(&[*c])),
            Value::Bool(b) => Some(b.to_string()),
            Value::Null => Some("null".into()),
            Value::EnumConst { name, .. } => Some(name.clone()),
            Value::Array(..) | Value::Decoder { .. } => None,
        }
    }

    /// Text used for a reported candidate.
    pub(crate) fn render(&self) -> Option<String> {
        match self {
            Value::Array(Elem::Byte, _) => {
                let bytes = self.as_byte_vec()?;
                Some(match std::str::from_utf8(&bytes) {
                    Ok(s) => s.to_string(),
                    Err(_) => format!("0x{}", bytes.iter().map(|b| format!("{b:02x}")).collect::<String>()),
                })
            }
            Value::Array(Elem::Char, _) => self.as_char_units().map(|u| from_units(&u)),
            Value::Null | Value::Decoder { .. } | Value::Array(..) => None,
            other => other.java_string(),
        }
    }
}

pub(crate) fn units(s: &str) -> Vec<u16> {
    s.encode_utf16().collect()
}

pub(crate) fn from_units(u: &[u16]) -> String {
    String::from_utf16_lossy(u)
}

/// Java's `String.trim`: strip code units `<= ' '`.
pub(crate) fn java_trim(s: &str) -> String {
    s.trim_matches(|c: char| c <= ' ').to_string()
}

pub(crate) fn base64_decode(input: &[u8], url_safe: bool, mime: bool) -> Option<Vec<u8>> {
    let cleaned: Vec<u8> = if mime {
        input
            .iter()
            .copied()
            .filter(|b| b.is_ascii_alphanumeric() || matches!(b, b'+' | b'/' | b'='))
            .collect()
    } else {
        input.iter().copied().filter(|b| !b.is_ascii_whitespace()).collect()
    };
    let config = GeneralPurposeConfig::new().with_decode_padding_mode(DecodePaddingMode::RequireCanonical);
    let engine = if url_safe {
        GeneralPurpose::new(&alphabet::URL_SAFE, config)
    } else {
        GeneralPurpose::new(&alphabet::STANDARD, config)
    };
    engine.decode(cleaned).ok()
}

/// Charset-aware `String.getBytes`.
pub(crate) fn encode(s: &str, charset: Option<&str>) -> Option<Vec<u8>> {
    let cs = charset.unwrap_or("UTF-8").to_ascii_uppercase().replace('_', "-");
    match cs.as_str() {
        "UTF-8" | "UTF8" => Some(s.as_bytes().to_vec()),
        "ISO-8859-1" | "LATIN1" | "US-ASCII" | "ASCII" => {
            Some(s.chars().map(|c| if (c as u32) < 256 { c as u8 } else { b'?' }).collect())
        }
        _ => None,
    }
}

pub(crate) fn decode(bytes: &[u8], charset: Option<&str>) -> Option<String> {
    let cs = charset.unwrap_or("UTF-8").to_ascii_uppercase().replace('_', "-");
    match cs.as_str() {
        "UTF-8" | "UTF8" => Some(String::from_utf8_lossy(bytes).into_owned()),
        "ISO-8859-1" | "LATIN1" => Some(bytes.iter().map(|b| *b as char).collect()),
        "US-ASCII" | "ASCII" => Some(bytes.iter().map(|b| if *b < 128 { *b as char } else { '\u{fffd}' }).collect()),
        _ => None,
    }
}

/// A set of possible values plus markers for what could not be resolved.
#[derive(Debug, Clone, Default)]
pub(crate) struct Eval {
    pub vals: BTreeSet<Value>,
    pub res: BTreeSet<Residual>,
    /// Trace steps this result was derived from.
    pub deps: BTreeSet<u32>,
}

// Provenance does not take part in comparisons.
impl PartialEq for Eval {
    fn eq(&self, other: &Eval) -> bool {
        self.vals == other.vals && self.res == other.res
    }
}

impl Eq for Eval {}

impl Eval {
    pub(crate) fn of(v: Value) -> Eval {
        Eval { vals: BTreeSet::from([v]), ..Default::default() }
    }

    pub(crate) fn residual(r: Residual) -> Eval {
        Eval { res: BTreeSet::from([r]), ..Default::default() }
    }

    pub(crate) fn unknown() -> Eval {
        Eval::residual(Residual::Unknown)
    }

    pub(crate) fn is_single(&self) -> Option<&Value> {
        if self.res.is_empty() && self.vals.len() == 1 {
            self.vals.iter().next()
        } else {
            None
        }
    }

    pub(crate) fn depth_tainted(&self) -> bool {
        self.res.contains(&Residual::DepthExceeded)
    }

    pub(crate) fn union(&mut self, other: Eval) {
        self.vals.extend(other.vals);
        self.res.extend(other.res);
        self.deps.extend(other.deps);
    }

    /// Replace all candidates by a residual, keeping existing residuals.
    pub(crate) fn havoc(&self, r: Residual) -> Eval {
        let mut res = self.res.clone();
        res.insert(r);
        Eval { vals: BTreeSet::new(), res, deps: self.deps.clone() }
    }

    /// Sets larger than `cap` lose all candidates. Keeping an arbitrary
    /// subset would make results depend non-monotonically on the cap.
    pub(crate) fn capped(mut self, cap: usize) -> Eval {
        if self.vals.len() > cap {
            self.vals.clear();
            self.res.insert(Residual::DepthExceeded);
        }
        if self.vals.is_empty() && self.res.is_empty() {
            self.res.insert(Residual::Unknown);
        }
        self
    }

    /// Apply `f` to every value. `None` results become `UNKNOWN`.
    pub(crate) fn map(&self, cap: usize, mut f: impl FnMut(&Value) -> Option<Value>) -> Eval {
        let mut out = Eval { vals: BTreeSet::new(), res: self.res.clone(), deps: self.deps.clone() };
        for v in &self.vals {
            match f(v) {
                Some(r) => {
                    out.vals.insert(r);
                }
                None => {
                    out.res.insert(Residual::Unknown);
                }
            }
            if out.vals.len() > cap {
                break;
            }
        }
        out.capped(cap)
    }

    /// Apply `f` over the cartesian product of several value sets.
    pub(crate) fn product(args: &[Eval], cap: usize, mut f: impl FnMut(&[&Value]) -> Option<Value>) -> Eval {
        let mut out = Eval::default();
        for a in args {
            out.res.extend(a.res.iter().copied());
            out.deps.extend(a.deps.iter().copied());
        }
        if args.iter().any(|a| a.vals.is_empty()) {
            return out.capped(cap);
        }
        let total = args.iter().try_fold(1usize, |acc, a| acc.checked_mul(a.vals.len()));
        if total.is_none_or(|t| t > cap.saturating_mul(4).max(cap)) {
            out.res.insert(Residual::DepthExceeded);
            return out.capped(cap);
        }
        let lists: Vec<Vec<&Value>> = args.iter().map(|a| a.vals.iter().collect()).collect();
        let mut idx = vec![0usize; lists.len()];
        loop {
            let picked: Vec<&Value> = idx.iter().zip(&lists).map(|(i, l)| l[*i]).collect();
            match f(&picked) {
                Some(v) => {
                    out.vals.insert(v);
                }
                None => {
                    out.res.insert(Residual::Unknown);
                }
            }
            let mut k = lists.len();
            loop {
                if k == 0 {
                    return out.capped(cap);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    /// `Some(b)` when the set is exactly one boolean without residuals.
    pub(crate) fn truth(&self) -> Option<bool> {
        self.is_single().and_then(Value::as_bool)
    }

    pub(crate) fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .vals
            .iter()
            .map(|v| match v.render() {
                Some(s) => format!("{s:?}"),
                None => match v {
                    Value::Array(e, items) => format!("{e:?}[{}]", items.len()),
                    other => format!("{other:?}"),
                },
            })
            .collect();
        parts.extend(self.res.iter().map(|r| r.as_str().to_string()));
        let mut s = parts.join(" | ");
        if s.len() > 200 {
            let cut = (0..=200).rev().find(|i| s.is_char_boundary(*i)).unwrap_or(0);
            s.truncate(cut);
            s.push('…');
        }
        s
    }
}

/// Java `String.format` for the common conversions.
pub(crate) fn java_format(fmt: &str, args: &[&Value]) -> Option<String> {
    let mut out = String::new();
    let mut chars = fmt.chars().peekable();
    let mut next_arg = 0usize;
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let mut spec = String::new();
        let conv = loop {
            let ch = chars.next()?;
            if ch.is_ascii_alphabetic() || ch == '%' {
                break ch;
            }
            spec.push(ch);
        };
        let (index, spec) = match spec.split_once('$') {
            Some((i, rest)) => (Some(i.parse::<usize>().ok()?.checked_sub(1)?), rest.to_string()),
            None => (None, spec),
        };
        let left = spec.contains('-');
        let zero = spec.starts_with('0') || spec.contains("-0");
        let width: usize = spec.trim_start_matches(['-', '0', '+', ' ', '#', ',']).split('.').next().unwrap_or("").parse().unwrap_or(0);
        let mut take = || -> Option<&Value> {
            let i = index.unwrap_or_else(|| {
                next_arg += 1;
                next_arg - 1
            });
            args.get(i).copied()
        };
        let body = match conv {
            '%' => "%".to_string(),
            'n' => "\n".to_string(),
            's' => take()?.java_string()?,
            'S' => take()?.java_string()?.to_uppercase(),
            'd' => take()?.as_int()?.to_string(),
            'c' => match take()? {
                Value::Char(c) => from_units(&[*c]),
                Value::Int(i) => char::from_u32(*i as u32)?.to_string(),
                _ => return None,
            },
            'x' => format!("{:x}", take()?.as_int()? as i32),
            'X' => format!("{:X}", take()?.as_int()? as i32),
            _ => return None,
        };
        let n = body.chars().count();
        if n >= width {
            out.push_str(&body);
        } else if left {
            out.push_str(&body);
            out.extend(std::iter::repeat_n(' ', width - n));
        } else if zero && matches!(conv, 'd' | 'x' | 'X') {
            let (sign, digits) = body.strip_prefix('-').map_or(("", body.as_str()), |d| ("-", d));
            out.push_str(sign);
            out.extend(std::iter::repeat_n('0', width - n));
            out.push_str(digits);
        } else {
            out.extend(std::iter::repeat_n(' ', width - n));
            out.push_str(&body);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_cap() {
        let a = Eval { vals: ["a", "b"].map(|s| Value::Str(s.into())).into(), ..Default::default() };
        let b = Eval { vals: ["x", "y"].map(|s| Value::Str(s.into())).into(), ..Default::default() };
        let cat = |v: &[&Value]| Some(Value::Str(v.iter().map(|x| x.java_string().unwrap()).collect()));
        let p = Eval::product(&[a.clone(), b.clone()], 16, cat);
        assert_eq!(p.vals.len(), 4);
        let p = Eval::product(&[a, b], 3, cat);
        assert!(p.vals.is_empty());
        assert!(p.depth_tainted());
    }

    #[test]
    fn format_subset() {
        let s = Value::Str("AES".into());
        let m = Value::Str("CBC".into());
        assert_eq!(java_format("%s/%s/PKCS5Padding", &[&s, &m]).unwrap(), "AES/CBC/PKCS5Padding");
        assert_eq!(java_format("%2$s-%1$s", &[&s, &m]).unwrap(), "CBC-AES");
        assert_eq!(java_format("%05d|%-4s|%%", &[&Value::Int(42), &Value::Str("ab".into())]).unwrap(), "00042|ab  |%");
        assert!(java_format("%s", &[]).is_none());
    }

    #[test]
    fn base64_alphabets() {
        assert_eq!(base64_decode(b"REVTL0NCQy9QS0NTNVBhZGRpbmc=", false, false).unwrap(), b"DES/CBC/PKCS5Padding");
        assert!(base64_decode(b"REVT", false, false).is_some());
        assert!(base64_decode(b"REV", false, false).is_none());
        assert_eq!(base64_decode(b"-_8=", true, false).unwrap(), vec![0xfb, 0xff]);
        assert!(base64_decode(b"-_8=", false, false).is_none());
    }

    #[test]
    fn render_bytes() {
        assert_eq!(Value::bytes(b"AES").render().unwrap(), "AES");
        assert_eq!(Value::bytes(&[0xff, 0x00]).render().unwrap(), "0xff00");
    }
}
