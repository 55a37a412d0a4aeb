//! Flat `key = value` configuration text.

use std::str::FromStr;

use crate::error::{Error, Result};

/// One `key = value` line with its 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyValue {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits configuration text into entries. `#` starts a comment; blank lines
/// are skipped.
pub fn parse_key_values(text: &str, source_name: &str) -> Result<Vec<KeyValue>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Manifest {
                source_name: source_name.to_string(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            });
        };
        out.push(KeyValue {
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Splits a `key=value` command-line override.
pub fn parse_override(arg: &str) -> Result<KeyValue> {
    let (key, value) = arg.split_once('=').ok_or_else(|| Error::InvalidValue {
        key: arg.to_string(),
        message: "override must look like key=value".into(),
    })?;
    Ok(KeyValue {
        key: key.trim().to_string(),
        value: value.trim().to_string(),
        line: 0,
    })
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

pub(crate) fn parse_finite(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_value(key, value)?;
    if !v.is_finite() {
        return Err(Error::InvalidValue {
            key: key.to_string(),
            message: format!("`{value}` is not finite"),
        });
    }
    Ok(v)
}

pub(crate) fn unknown_key(key: &str, valid: &[&str]) -> Error {
    Error::UnknownKey {
        key: key.to_string(),
        valid: valid.join(", "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let kv = parse_key_values("# header\n\nlambda = 0.5 # weight\nseed=3\n", "cfg").unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(
            (kv[0].key.as_str(), kv[0].value.as_str(), kv[0].line),
            ("lambda", "0.5", 3)
        );
        assert_eq!(kv[1].value, "3");
    }

    #[test]
    fn reports_line_of_malformed_entry() {
        match parse_key_values("a = 1\nbogus\n", "cfg") {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_override("novalue").is_err());
        assert!(parse_finite("x", "inf").is_err());
    }
}
