use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::belief::Backend;
use crate::knowledge::{normalize, DiseaseDB, SymptomId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn parse(raw: &str) -> Option<Self> {
        match normalize(raw).as_str() {
            "yes" | "y" => Some(Self::Yes),
            "no" | "n" => Some(Self::No),
            _ => None,
        }
    }
}

/// What the patient said this turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatientMessage {
    Symptoms(Vec<String>),
    Text(String),
    Answer(Answer),
}

impl PatientMessage {
    /// Interprets raw input: `{"symptoms":[...]}` is structured, a bare
    /// yes/no is an answer, anything else is free text.
    pub fn parse(raw: &str) -> Self {
        #[derive(Deserialize)]
        struct Structured {
            symptoms: Vec<String>,
        }
        if let Ok(s) = serde_json::from_str::<Structured>(raw.trim()) {
            return Self::Symptoms(s.symptoms);
        }
        match Answer::parse(raw) {
            Some(a) => Self::Answer(a),
            None => Self::Text(raw.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Abstraction {
    pub symptoms: BTreeSet<SymptomId>,
    /// Inputs that did not match the vocabulary.
    pub unrecognized: Vec<String>,
}

/// Maps a patient message onto vocabulary symptoms. Structured lists are
/// normalized; free text is scanned for the longest vocabulary phrases, or
/// handed to the model when the LLM backend is active.
pub fn abstract_symptoms(
    msg: &PatientMessage,
    db: &DiseaseDB,
    backend: Option<&Backend>,
) -> Result<Abstraction, EngineError> {
    match msg {
        PatientMessage::Symptoms(list) => Ok(from_tokens(list, db)),
        PatientMessage::Text(text) => match backend {
            Some(Backend::Llm(llm)) => {
                let extracted = llm.extract_symptoms(text, db.symptom_vocab())?;
                Ok(from_tokens(&extracted, db))
            }
            _ => Ok(Abstraction {
                symptoms: scan_text(text, db.symptom_vocab()),
                unrecognized: Vec::new(),
            }),
        },
        PatientMessage::Answer(_) => Ok(Abstraction::default()),
    }
}

fn from_tokens(list: &[String], db: &DiseaseDB) -> Abstraction {
    let mut out = Abstraction::default();
    for raw in list {
        match SymptomId::new(raw) {
            Ok(s) if db.contains_symptom(&s) => {
                out.symptoms.insert(s);
            }
            _ => {
                log::warn!("unrecognized symptom '{raw}'");
                out.unrecognized.push(raw.clone());
            }
        }
    }
    out
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Greedy left-to-right longest-match scan of `text` against the vocabulary.
pub fn scan_text(text: &str, vocab: &[SymptomId]) -> BTreeSet<SymptomId> {
    let phrases: HashSet<&str> = vocab.iter().map(|s| s.as_str()).collect();
    let longest = vocab
        .iter()
        .map(|s| s.as_str().split(' ').count())
        .max()
        .unwrap_or(0);
    let tokens = words(text);
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = 0;
        for len in (1..=longest.min(tokens.len() - i)).rev() {
            let phrase = tokens[i..i + len].join(" ");
            if phrases.contains(phrase.as_str()) {
                found.insert(SymptomId::new(&phrase).expect("non-empty phrase"));
                matched = len;
                break;
            }
        }
        i += matched.max(1);
    }
    found
}
