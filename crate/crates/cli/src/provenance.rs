//! Artifact provenance: every output file embeds a hash of the exact
//! configuration that produced it.
//!
//! The hash covers the scenario name, every knob value, and a digest of the
//! *content* of any input file (never its path), so artifacts stay
//! identical when inputs move and change whenever anything that matters
//! does. CSV artifacts carry it as a leading `# config-hash: …` comment;
//! JSON artifacts as a `config_hash` field.

use sha2::{Digest, Sha256};

/// Incremental canonical-config hasher.
///
/// Knobs are appended as `key=value;` pairs in call order (each scenario
/// appends its knobs in a fixed order), prefixed by `scenario=<name>;`.
pub struct ConfigHash {
    canonical: String,
}

impl ConfigHash {
    /// Starts the canonical string for one scenario.
    pub fn new(scenario: &str) -> Self {
        Self {
            canonical: format!("scenario={scenario};"),
        }
    }

    /// Appends one knob.
    pub fn knob(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        use std::fmt::Write;
        write!(self.canonical, "{key}={value};").expect("writing to a String cannot fail");
        self
    }

    /// Appends an input file as a digest of its bytes.
    pub fn input_bytes(self, key: &str, bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        self.knob(key, hex(&digest))
    }

    /// Finishes into the hex config hash.
    pub fn finish(self) -> String {
        hex(&Sha256::digest(self.canonical.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The comment line carrying the hash at the top of a CSV artifact.
pub fn csv_header(hash: &str) -> String {
    format!("# config-hash: {hash}\n")
}
