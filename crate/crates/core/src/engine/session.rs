use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::abstraction::{abstract_symptoms, Answer, PatientMessage};
use super::policy::{candidate_symptom_pool, entropy, select_inquiry, InquiryContext};
use super::{EngineError, SessionConfig};
use crate::belief::{
    AssessRequest, Assessment, Backend, ConfidenceDistribution, ReasoningTrace, SymptomEvidence,
};
use crate::knowledge::{DiseaseDB, SymptomId};
use crate::retriever::{recall_top_k, Candidate, CandidateSet, RetrieverModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Inquire {
        symptom: SymptomId,
        question_text: String,
    },
    Diagnose {
        disease: String,
        confidence: f64,
        /// Reached the inquiry cap or ran out of symptoms to ask about.
        forced: bool,
    },
}

impl Decision {
    pub fn inquire(symptom: SymptomId) -> Self {
        let question_text = format!("Do you have {symptom}?");
        Self::Inquire {
            symptom,
            question_text,
        }
    }

    pub fn is_diagnosis(&self) -> bool {
        matches!(self, Self::Diagnose { .. })
    }
}

/// Mutable part of a session. Rounds never mutate it in place; see
/// [`Engine::step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub evidence: SymptomEvidence,
    /// Symptoms from the opening report.
    pub reported: BTreeSet<SymptomId>,
    pub candidates: CandidateSet,
    /// Inquired symptoms in order.
    pub asked: Vec<SymptomId>,
    pub round: usize,
    pub finished: bool,
    /// Question awaiting a yes/no answer.
    pub pending: Option<SymptomId>,
}

impl DialogueState {
    pub fn new(k: usize) -> Self {
        Self {
            evidence: SymptomEvidence::default(),
            reported: BTreeSet::new(),
            candidates: CandidateSet {
                entries: Vec::new(),
                k,
            },
            asked: Vec::new(),
            round: 0,
            finished: false,
            pending: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSnippet {
    pub id: String,
    pub name: String,
    pub score: f64,
    pub overview: String,
    pub symptoms: Vec<SymptomId>,
}

/// Everything a round produced, enough to replay its assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRound {
    pub round: usize,
    /// Symptoms extracted from this turn's message.
    pub abstracted_symptoms: Vec<SymptomId>,
    pub evidence: SymptomEvidence,
    pub reported: BTreeSet<SymptomId>,
    pub candidates: Vec<CandidateSnippet>,
    pub k: usize,
    pub reasoning: ReasoningTrace,
    pub confidence: ConfidenceDistribution,
    pub entropy: f64,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inquiry_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_reply: Option<String>,
}

impl TraceRound {
    pub fn candidate_set(&self) -> CandidateSet {
        CandidateSet {
            entries: self
                .candidates
                .iter()
                .map(|c| Candidate {
                    id: c.id.clone(),
                    score: c.score,
                })
                .collect(),
            k: self.k,
        }
    }
}

/// Ordered rounds of one session; serialized one round per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTrace {
    pub rounds: Vec<TraceRound>,
}

impl DiagnosticTrace {
    pub fn final_decision(&self) -> Option<&Decision> {
        self.rounds.last().map(|r| &r.decision)
    }

    pub fn n_inquiries(&self) -> usize {
        self.rounds
            .iter()
            .filter(|r| matches!(r.decision, Decision::Inquire { .. }))
            .count()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.rounds {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, EngineError> {
        let mut rounds = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| EngineError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            rounds.push(
                serde_json::from_str(&line)
                    .map_err(|e| EngineError::Trace(format!("line {}: {e}", i + 1)))?,
            );
        }
        Ok(Self { rounds })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EngineError> {
        let f = std::fs::File::create(path).map_err(|e| EngineError::Io(e.to_string()))?;
        self.write_jsonl(std::io::BufWriter::new(f))
            .map_err(|e| EngineError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let f = std::fs::File::open(path).map_err(|e| EngineError::Io(e.to_string()))?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Borrowed collaborators for running rounds.
#[derive(Debug, Clone, Copy)]
pub struct Engine<'a> {
    pub db: &'a DiseaseDB,
    pub model: &'a RetrieverModel,
    pub backend: &'a Backend,
    pub cfg: &'a SessionConfig,
}

impl<'a> Engine<'a> {
    pub fn new(
        db: &'a DiseaseDB,
        model: &'a RetrieverModel,
        backend: &'a Backend,
        cfg: &'a SessionConfig,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        model.check_bound(db)?;
        Ok(Self {
            db,
            model,
            backend,
            cfg,
        })
    }

    pub fn start(&self) -> DialogueState {
        DialogueState::new(self.cfg.k)
    }

    /// Runs one round. The input state is left untouched; on success the
    /// returned state replaces it, so a failed round changes nothing.
    pub fn step(
        &self,
        state: &DialogueState,
        msg: &PatientMessage,
    ) -> Result<(TraceRound, DialogueState), EngineError> {
        if state.finished {
            return Err(EngineError::Finished);
        }
        let mut next = state.clone();
        let mut warnings = Vec::new();
        let mut abstracted = Vec::new();
        match (msg, next.pending.take()) {
            (PatientMessage::Answer(a), Some(s)) => {
                if *a == Answer::Yes {
                    next.evidence.present.insert(s);
                } else {
                    next.evidence.absent.insert(s);
                }
            }
            (PatientMessage::Answer(_), None) => return Err(EngineError::NoPendingQuestion),
            (_, Some(_)) => return Err(EngineError::ExpectedAnswer),
            (msg, None) => {
                let abs = abstract_symptoms(msg, self.db, Some(self.backend))?;
                for raw in &abs.unrecognized {
                    warnings.push(format!("unrecognized symptom '{raw}'"));
                }
                if abs.symptoms.is_empty() {
                    return Err(EngineError::NoSymptoms);
                }
                abstracted = abs.symptoms.iter().cloned().collect();
                for s in abs.symptoms {
                    next.evidence.absent.remove(&s);
                    next.reported.insert(s.clone());
                    next.evidence.present.insert(s);
                }
            }
        }

        if next.round == 0 || self.cfg.rerecall_each_round || next.candidates.is_empty() {
            next.candidates = recall_top_k(self.model, self.db, &next.evidence.present, self.cfg.k)?;
        }

        let request = AssessRequest {
            evidence: &next.evidence,
            reported: &next.reported,
            candidates: &next.candidates,
            db: self.db,
            seed: self.cfg.seed,
        };
        let assessment = self.backend.assess(&request)?;
        warnings.extend(assessment.warnings.iter().cloned());
        let h = entropy(&assessment.distribution);
        let (top, c_max) = assessment.distribution.argmax();
        let forced = |reason: &str, warnings: &mut Vec<String>| {
            warnings.push(reason.to_string());
            Decision::Diagnose {
                disease: top.to_string(),
                confidence: c_max,
                forced: true,
            }
        };

        let mut gain = None;
        let decision = if c_max > self.cfg.tau {
            Decision::Diagnose {
                disease: top.to_string(),
                confidence: c_max,
                forced: false,
            }
        } else if next.asked.len() >= self.cfg.max_rounds {
            forced("inquiry limit reached", &mut warnings)
        } else {
            match candidate_symptom_pool(
                &next.candidates,
                &next.evidence,
                &next.asked,
                self.db,
                self.cfg.candidate_pool_limit,
            ) {
                Err(EngineError::EmptyPool) => forced("no unasked symptoms left", &mut warnings),
                Err(e) => return Err(e),
                Ok(pool) => {
                    let ctx = InquiryContext {
                        evidence: &next.evidence,
                        reported: &next.reported,
                        candidates: &next.candidates,
                        db: self.db,
                        backend: self.backend,
                        mode: self.cfg.entropy_mode,
                        seed: self.cfg.seed,
                    };
                    let pick = select_inquiry(&ctx, &assessment.distribution, &pool)?;
                    gain = Some(pick.reduction);
                    Decision::inquire(pick.symptom)
                }
            }
        };

        let trace = self.trace_round(&next, abstracted, assessment, h, decision.clone(), gain, warnings);
        next.round += 1;
        match decision {
            Decision::Inquire { symptom, .. } => {
                next.asked.push(symptom.clone());
                next.pending = Some(symptom);
            }
            Decision::Diagnose { .. } => next.finished = true,
        }
        Ok((trace, next))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn trace_round(
        &self,
        state: &DialogueState,
        abstracted: Vec<SymptomId>,
        assessment: Assessment,
        entropy: f64,
        decision: Decision,
        inquiry_gain: Option<f64>,
        warnings: Vec<String>,
    ) -> TraceRound {
        let candidates = state
            .candidates
            .entries
            .iter()
            .map(|c| {
                let rec = self.db.get(&c.id);
                CandidateSnippet {
                    id: c.id.clone(),
                    name: rec.map(|r| r.name.clone()).unwrap_or_default(),
                    score: c.score,
                    overview: rec.map(|r| r.overview.clone()).unwrap_or_default(),
                    symptoms: rec
                        .map(|r| r.symptom_profile.iter().map(|(s, _)| s.clone()).collect())
                        .unwrap_or_default(),
                }
            })
            .collect();
        TraceRound {
            round: state.round + 1,
            abstracted_symptoms: abstracted,
            evidence: state.evidence.clone(),
            reported: state.reported.clone(),
            candidates,
            k: state.candidates.k,
            reasoning: assessment.reasoning,
            confidence: assessment.distribution,
            entropy,
            decision,
            inquiry_gain,
            warnings,
            prompt: assessment.prompt,
            raw_reply: assessment.raw_reply,
        }
    }
}

/// A session's state plus its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub state: DialogueState,
    pub trace: DiagnosticTrace,
}

impl Session {
    pub fn new(engine: &Engine<'_>) -> Self {
        Self {
            state: engine.start(),
            trace: DiagnosticTrace::default(),
        }
    }

    /// Applies one round; on error the session is unchanged.
    pub fn advance(&mut self, engine: &Engine<'_>, msg: &PatientMessage) -> Result<&TraceRound, EngineError> {
        let (round, next) = engine.step(&self.state, msg)?;
        self.state = next;
        self.trace.rounds.push(round);
        Ok(self.trace.rounds.last().expect("just pushed"))
    }

    pub fn finished(&self) -> bool {
        self.state.finished
    }
}
