//! A score that may be undefined. Undefined scores serialize as `"n/a"`,
//! never as 0.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Score {
    Value(f64),
    #[default]
    NotAvailable,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::NotAvailable => None,
        }
    }

    pub fn is_available(self) -> bool {
        matches!(self, Score::Value(_))
    }
}

impl<E> From<Result<f64, E>> for Score {
    fn from(r: Result<f64, E>) -> Self {
        r.map(Score::Value).unwrap_or(Score::NotAvailable)
    }
}

impl From<Option<f64>> for Score {
    fn from(o: Option<f64>) -> Self {
        o.map(Score::Value).unwrap_or(Score::NotAvailable)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Value(v) => write!(f, "{v}"),
            Score::NotAvailable => f.write_str("n/a"),
        }
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Score::Value(v) if v.is_finite() => s.serialize_f64(*v),
            _ => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct ScoreVisitor;

        impl Visitor<'_> for ScoreVisitor {
            type Value = Score;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"n/a\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Score, E> {
                Ok(Score::Value(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Score, E> {
                Ok(Score::Value(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Score, E> {
                Ok(Score::Value(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Score, E> {
                if v == "n/a" {
                    Ok(Score::NotAvailable)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        d.deserialize_any(ScoreVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_na_as_string() {
        let v = vec![Score::Value(0.5), Score::NotAvailable];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[0.5,"n/a"]"#);
        let back: Vec<Score> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(Score::from(Err::<f64, ()>(())), Score::NotAvailable);
    }
}
