//! Model file loading and saving.
//!
//! A model file is a UTF-8 JSON object:
//!
//! ```json
//! {
//!   "vocab": ["the sky is blue.", "..."],
//!   "behavior": { "the sky is blue.": 0.5, "...": -1.0 },
//!   "alpha": 0.001,
//!   "negative": { "type": "markov", "order": 1,
//!                 "initial": [0.5, 0.5],
//!                 "transitions": { "0": [0.25, 0.75], "1": [0.6, 0.4] } },
//!   "positive": { "type": "categorical", "order": 0, "initial": [0.9, 0.1] }
//! }
//! ```
//!
//! Components are categorical or Markov (the mixture lives at the top level,
//! never nested). Transition keys are state index sequences joined by `|`
//! (`"3"` for order 1, `"3|0"` for order 2). Every probability row must sum
//! to 1 within 1e-9; violations are load-time errors naming the row, e.g.
//! `negative.transitions[0|1]`.
//!
//! Floats are written in serde_json's shortest round-trip decimal form, so
//! model → JSON → model reproduces every probability bit for bit; an
//! optional top-level `config_hash` records provenance without affecting
//! the model.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorScore;
use crate::error::{Error, Result};
use crate::model::{state_key_string, SentenceLm, SentenceSeq, Vocabulary};

/// A fully specified experiment model: named vocabulary, behavior scores,
/// and the two-component mixture itself.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    /// Sentence strings; index order defines the symbol indices.
    pub vocab: Vocabulary,
    /// One score in [-1, 1] per vocabulary index.
    pub behavior: BehaviorScore,
    /// The mixture `α·P⁻ + (1−α)·P⁺`.
    pub model: SentenceLm,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ComponentKind {
    Categorical,
    Markov,
}

/// One mixture component as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileComponent {
    #[serde(rename = "type")]
    kind: ComponentKind,
    #[serde(default)]
    order: usize,
    initial: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    transitions: BTreeMap<String, Vec<f64>>,
}

/// Top-level model file layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileModel {
    vocab: Vec<String>,
    behavior: BTreeMap<String, f64>,
    alpha: f64,
    negative: FileComponent,
    positive: FileComponent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

fn parse_state_key(key: &str, location: &str) -> Result<SentenceSeq> {
    let bad = || Error::BadStateKey {
        location: format!("{location}.transitions"),
        key: key.to_string(),
    };
    if key.is_empty() {
        return Err(bad());
    }
    key.split('|')
        .map(|part| part.parse::<usize>().map_err(|_| bad()))
        .collect()
}

fn component_from_file(fc: &FileComponent, location: &str) -> Result<SentenceLm> {
    match fc.kind {
        ComponentKind::Categorical => {
            if fc.order != 0 {
                return Err(Error::ModelFile {
                    location: location.to_string(),
                    detail: format!("categorical components have order 0, got {}", fc.order),
                });
            }
            if !fc.transitions.is_empty() {
                return Err(Error::ModelFile {
                    location: location.to_string(),
                    detail: "categorical components take no transitions".to_string(),
                });
            }
            SentenceLm::categorical_at(fc.initial.clone(), &format!("{location}.initial"))
        }
        ComponentKind::Markov => {
            let mut table: BTreeMap<SentenceSeq, Vec<f64>> = BTreeMap::new();
            for (key, row) in &fc.transitions {
                table.insert(parse_state_key(key, location)?, row.clone());
            }
            SentenceLm::markov_at(fc.order, fc.initial.clone(), table, location)
        }
    }
}

fn component_to_file(lm: &SentenceLm, location: &str) -> Result<FileComponent> {
    match lm {
        SentenceLm::Categorical(d) => Ok(FileComponent {
            kind: ComponentKind::Categorical,
            order: 0,
            initial: d.probs().to_vec(),
            transitions: BTreeMap::new(),
        }),
        SentenceLm::Markov(mk) => Ok(FileComponent {
            kind: ComponentKind::Markov,
            order: mk.order(),
            initial: mk.initial_row().probs().to_vec(),
            transitions: mk
                .transition_rows()
                .iter()
                .map(|(state, row)| (state_key_string(state), row.probs().to_vec()))
                .collect(),
        }),
        SentenceLm::Mixture(_) => Err(Error::ModelFile {
            location: location.to_string(),
            detail: "components must be categorical or markov, not nested mixtures".to_string(),
        }),
    }
}

/// Parses a model file from JSON text.
pub fn model_from_json(text: &str) -> Result<ModelSpec> {
    let file: FileModel = serde_json::from_str(text)?;
    let vocab = Vocabulary::new(file.vocab)?;
    let negative = component_from_file(&file.negative, "negative")?;
    let positive = component_from_file(&file.positive, "positive")?;
    for (lm, location) in [(&negative, "negative"), (&positive, "positive")] {
        if lm.vocab_size() != vocab.size() {
            return Err(Error::RowLength {
                location: format!("{location}.initial"),
                expected: vocab.size(),
                got: lm.vocab_size(),
            });
        }
    }
    let behavior = BehaviorScore::from_table(&vocab, &file.behavior)?;
    let model = SentenceLm::mixture(file.alpha, negative, positive)?;
    Ok(ModelSpec {
        vocab,
        behavior,
        model,
    })
}

/// Serializes a model to pretty-printed JSON (trailing newline included).
/// `config_hash`, when given, is recorded as a top-level provenance field.
pub fn model_to_json(spec: &ModelSpec, config_hash: Option<&str>) -> Result<String> {
    let mx = spec.model.as_mixture()?;
    if spec.model.vocab_size() != spec.vocab.size() {
        return Err(Error::ModelFile {
            location: "vocab".to_string(),
            detail: format!(
                "vocabulary lists {} sentences but the model has {}",
                spec.vocab.size(),
                spec.model.vocab_size()
            ),
        });
    }
    if spec.behavior.len() != spec.vocab.size() {
        return Err(Error::ModelFile {
            location: "behavior".to_string(),
            detail: format!(
                "behavior table scores {} sentences but the vocabulary has {}",
                spec.behavior.len(),
                spec.vocab.size()
            ),
        });
    }
    let behavior: BTreeMap<String, f64> = spec
        .vocab
        .sentences()
        .iter()
        .cloned()
        .zip(spec.behavior.scores().iter().copied())
        .collect();
    let file = FileModel {
        vocab: spec.vocab.sentences().to_vec(),
        behavior,
        alpha: mx.alpha(),
        negative: component_to_file(mx.negative(), "negative")?,
        positive: component_to_file(mx.positive(), "positive")?,
        config_hash: config_hash.map(str::to_string),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Reads and parses a model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    model_from_json(&std::fs::read_to_string(path)?)
}

/// Writes a model file (see [`model_to_json`]).
pub fn save_model(
    path: impl AsRef<Path>,
    spec: &ModelSpec,
    config_hash: Option<&str>,
) -> Result<()> {
    std::fs::write(path, model_to_json(spec, config_hash)?)?;
    Ok(())
}
