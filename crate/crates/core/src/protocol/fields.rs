//! Canonical `key=value` line maps.

use super::ProtocolError;

#[derive(Default)]
pub(crate) struct FieldWriter {
    fields: Vec<(&'static str, String)>,
}

impl FieldWriter {
    pub fn str(mut self, key: &'static str, value: &str) -> Self {
        self.fields.push((key, escape(value)));
        self
    }

    pub fn bytes(mut self, key: &'static str, value: &[u8]) -> Self {
        self.fields.push((key, hex::encode(value)));
        self
    }

    pub fn num(mut self, key: &'static str, value: u64) -> Self {
        self.fields.push((key, value.to_string()));
        self
    }

    /// Pre-encoded value; caller guarantees it is already canonical and line-safe.
    pub fn raw(mut self, key: &'static str, value: String) -> Self {
        self.fields.push((key, value));
        self
    }

    pub fn finish(mut self) -> Vec<u8> {
        // Stable sort keeps repeated keys (lists) in insertion order.
        self.fields.sort_by_key(|(k, _)| *k);
        let mut out = Vec::new();
        for (k, v) in self.fields {
            out.extend_from_slice(k.as_bytes());
            out.push(b'=');
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        out
    }
}

pub(crate) struct FieldReader<'a> {
    fields: Vec<(&'a str, &'a str, bool)>,
}

impl<'a> FieldReader<'a> {
    pub fn parse(payload: &'a [u8]) -> Result<Self, ProtocolError> {
        let text = std::str::from_utf8(payload)
            .map_err(|_| ProtocolError::malformed("payload is not UTF-8"))?;
        let mut fields = Vec::new();
        if text.is_empty() {
            return Ok(Self { fields });
        }
        let body = text
            .strip_suffix('\n')
            .ok_or_else(|| ProtocolError::malformed("unterminated field line"))?;
        let mut prev: Option<&str> = None;
        for line in body.split('\n') {
            let (k, v) = line.split_once('=').ok_or_else(|| {
                ProtocolError::malformed(format!("field line without '=': {line:?}"))
            })?;
            if k.is_empty() {
                return Err(ProtocolError::malformed("empty field name"));
            }
            if let Some(p) = prev {
                if k < p {
                    return Err(ProtocolError::malformed("fields not in key order"));
                }
            }
            prev = Some(k);
            fields.push((k, v, false));
        }
        Ok(Self { fields })
    }

    fn take_all(&mut self, key: &str) -> Vec<&'a str> {
        let mut out = Vec::new();
        for f in self.fields.iter_mut().filter(|f| f.0 == key) {
            f.2 = true;
            out.push(f.1);
        }
        out
    }

    fn take_one(&mut self, key: &str) -> Result<&'a str, ProtocolError> {
        let all = self.take_all(key);
        match all.as_slice() {
            [v] => Ok(v),
            [] => Err(ProtocolError::malformed(format!("missing field {key}"))),
            _ => Err(ProtocolError::malformed(format!("repeated field {key}"))),
        }
    }

    pub fn str(&mut self, key: &str) -> Result<String, ProtocolError> {
        unescape(self.take_one(key)?)
    }

    pub fn str_list(&mut self, key: &str) -> Result<Vec<String>, ProtocolError> {
        self.take_all(key).into_iter().map(unescape).collect()
    }

    pub fn bytes(&mut self, key: &str) -> Result<Vec<u8>, ProtocolError> {
        decode_hex(self.take_one(key)?)
    }

    pub fn raw_list(&mut self, key: &str) -> Vec<&'a str> {
        self.take_all(key)
    }

    pub fn num(&mut self, key: &str) -> Result<u64, ProtocolError> {
        let v = self.take_one(key)?;
        let canonical = !v.is_empty()
            && v.bytes().all(|b| b.is_ascii_digit())
            && (v == "0" || !v.starts_with('0'));
        if !canonical {
            return Err(ProtocolError::malformed(format!("bad number in {key}")));
        }
        v.parse()
            .map_err(|_| ProtocolError::malformed(format!("number out of range in {key}")))
    }

    pub fn finish(self) -> Result<(), ProtocolError> {
        match self.fields.iter().find(|f| !f.2) {
            Some(f) => Err(ProtocolError::malformed(format!(
                "unexpected field {}",
                f.0
            ))),
            None => Ok(()),
        }
    }
}

pub(crate) fn decode_hex(v: &str) -> Result<Vec<u8>, ProtocolError> {
    if v.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(ProtocolError::malformed("hex must be lowercase"));
    }
    hex::decode(v).map_err(|e| ProtocolError::malformed(format!("bad hex: {e}")))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, ProtocolError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                _ => return Err(ProtocolError::malformed("bad escape")),
            },
            '\r' => return Err(ProtocolError::malformed("raw carriage return")),
            c => out.push(c),
        }
    }
    Ok(out)
}
