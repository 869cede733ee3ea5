//! Verdicts, report envelopes and content hashes.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// The hypotheses of the implication were not met.
    Vacuous,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Vacuous => "vacuous",
        }
    }
}

/// One named check inside a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub detail: Value,
}

impl Check {
    pub fn new(name: impl Into<String>, verdict: Verdict, detail: impl Serialize) -> Check {
        Check { name: name.into(), verdict, detail: serde_json::to_value(detail).unwrap_or(Value::Null) }
    }
}

/// Summary over a set of checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overall {
    /// Every non-vacuous check passed and at least one was non-vacuous.
    Pass,
    Fail,
    /// Every check was vacuous (or there were none).
    Vacuous,
}

pub fn overall(checks: &[Check]) -> Overall {
    if checks.iter().any(|c| c.verdict == Verdict::Fail) {
        Overall::Fail
    } else if checks.iter().any(|c| c.verdict == Verdict::Pass) {
        Overall::Pass
    } else {
        Overall::Vacuous
    }
}

/// Report envelope: the resolved configuration, its hash and the checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub schema_version: u32,
    pub config: Value,
    pub config_hash: String,
    pub overall: Overall,
    pub checks: Vec<Check>,
}

pub const SCHEMA_VERSION: u32 = 1;

impl Report {
    pub fn new(kind: impl Into<String>, config: &impl Serialize, checks: Vec<Check>) -> Result<Report> {
        let config = serde_json::to_value(config)?;
        let config_hash = hash_value(&config);
        let overall = overall(&checks);
        Ok(Report { kind: kind.into(), schema_version: SCHEMA_VERSION, config, config_hash, overall, checks })
    }
}

/// Canonical JSON text: object keys sorted, no whitespace.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's default map is ordered by key, so plain serialization is canonical.
    serde_json::to_string(value).unwrap_or_default()
}

/// Hex SHA-256 of the canonical JSON of a value.
pub fn hash_value(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

/// Hex SHA-256 of the canonical JSON of any serializable configuration.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    Ok(hash_value(&serde_json::to_value(config)?))
}

/// Hex SHA-256 of raw bytes, e.g. a trajectory dump.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serde adapter for `f64` fields that may be infinite: non-finite values are
/// written as the strings `"inf"`, `"-inf"` and `"nan"` instead of `null`.
pub mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number, \"inf\" or \"-inf\", found \"{other}\""))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(hash_value(&a), hash_value(&b));
        assert_ne!(hash_value(&a), hash_value(&json!({"a": [2, 1], "b": 1})));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(content_hash(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn infinite_values_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Holder {
            #[serde(with = "extended_f64")]
            r: f64,
        }
        for r in [2.5, f64::INFINITY, f64::NEG_INFINITY] {
            let text = serde_json::to_string(&Holder { r }).unwrap();
            assert_eq!(serde_json::from_str::<Holder>(&text).unwrap(), Holder { r });
        }
        assert_eq!(serde_json::to_string(&Holder { r: f64::INFINITY }).unwrap(), r#"{"r":"inf"}"#);
        assert!(serde_json::from_str::<Holder>(r#"{"r":"big"}"#).is_err());
    }

    #[test]
    fn overall_rules() {
        let c = |v| Check::new("x", v, ());
        assert_eq!(overall(&[]), Overall::Vacuous);
        assert_eq!(overall(&[c(Verdict::Vacuous), c(Verdict::Pass)]), Overall::Pass);
        assert_eq!(overall(&[c(Verdict::Pass), c(Verdict::Fail)]), Overall::Fail);
        assert_eq!(overall(&[c(Verdict::Vacuous)]), Overall::Vacuous);
    }
}
