use std::fmt;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

/// Canonical symptom token: lowercase, trimmed, internal whitespace collapsed
/// to a single space. No stemming or synonym folding happens here.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SymptomId(String);

/// Normalizes a raw symptom string. Idempotent.
pub fn normalize(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl SymptomId {
    pub fn new(raw: &str) -> Result<Self, KnowledgeError> {
        let token = normalize(raw);
        if token.is_empty() {
            return Err(KnowledgeError::EmptySymptom);
        }
        Ok(Self(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for SymptomId {
    type Error = KnowledgeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        SymptomId::new(&value)
    }
}

impl From<SymptomId> for String {
    fn from(value: SymptomId) -> Self {
        value.0
    }
}

impl AsRef<str> for SymptomId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SymptomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trims_lowercases_and_collapses() {
        assert_eq!(SymptomId::new("  Sore\t  THROAT ").unwrap().as_str(), "sore throat");
    }

    #[test]
    fn blank_is_rejected() {
        assert!(SymptomId::new("   ").is_err());
    }

    #[test]
    fn deserialization_normalizes() {
        let s: SymptomId = serde_json::from_str("\" Fever \"").unwrap();
        assert_eq!(s.as_str(), "fever");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "\\PC{0,40}") {
            let once = normalize(&raw);
            prop_assert_eq!(normalize(&once), once.clone());
        }

        #[test]
        fn equality_follows_normalized_tokens(a in "[a-zA-Z ]{1,12}", b in "[a-zA-Z ]{1,12}") {
            if let (Ok(x), Ok(y)) = (SymptomId::new(&a), SymptomId::new(&b)) {
                prop_assert_eq!(x == y, normalize(&a) == normalize(&b));
            }
        }
    }
}
