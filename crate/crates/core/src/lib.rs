//! Chain-of-diagnosis decision engine.
//!
//! A diagnostic session runs in rounds. Each round abstracts the patient's
//! symptoms, recalls candidate diseases with a dense retriever, assesses a
//! confidence distribution over the candidates, and either diagnoses (when
//! the top confidence exceeds a threshold) or asks about the symptom whose
//! answer is expected to reduce the entropy of that distribution the most.

pub mod knowledge;
pub mod retriever;
pub mod belief;
pub mod engine;
pub mod simeval;
pub mod datagen;
