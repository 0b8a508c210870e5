//! Session manifests: JSON documents describing sessions, their labels and
//! the feature files produced for each utterance.
//!
//! ```json
//! {"split": "train",
//!  "sessions": [{"id": "300", "label": 1,
//!                "utterances": [{"id": "u0", "text": "...", "audio": "a.wav",
//!                                "layers": "u0.layers.ften", "sent_emb": "u0.sent.ften"}],
//!                "llm_emb": "300.llm.ften"}]}
//! ```
//!
//! Every reference is a path relative to the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::read_tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawUtterance {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sent_emb: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSession {
    id: String,
    label: serde_json::Value,
    utterances: Vec<RawUtterance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    llm_emb: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawManifest {
    #[serde(default)]
    split: Split,
    sessions: Vec<RawSession>,
}

/// One utterance with all references resolved to paths that exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: Option<String>,
    pub audio: Option<PathBuf>,
    pub layers: Option<PathBuf>,
    pub sent_emb: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionManifest {
    pub id: String,
    /// 1 = depressed, 0 = healthy.
    pub label: u8,
    pub utterances: Vec<Utterance>,
    pub llm_emb: Option<PathBuf>,
}

impl SessionManifest {
    pub fn is_depressed(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSet {
    pub split: Split,
    pub sessions: Vec<SessionManifest>,
    /// Human-readable notes about absent optional fields.
    pub diagnostics: Vec<String>,
}

impl SessionSet {
    pub fn get(&self, id: &str) -> Option<&SessionManifest> {
        self.sessions.iter().find(|s| s.id == id)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SessionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

/// Parses and validates a manifest, resolving references against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<SessionSet> {
    let raw: RawManifest =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("malformed manifest: {e}")))?;

    let mut seen_sessions = HashSet::new();
    let mut sessions = Vec::with_capacity(raw.sessions.len());
    let mut diagnostics = Vec::new();

    for rs in raw.sessions {
        if !seen_sessions.insert(rs.id.clone()) {
            return Err(Error::Schema(format!("duplicate session id {}", rs.id)));
        }
        let label = match rs.label.as_u64() {
            Some(l @ (0 | 1)) => l as u8,
            _ => {
                return Err(Error::Schema(format!(
                    "session {}: label must be 0 or 1, got {}",
                    rs.id, rs.label
                )))
            }
        };

        let mut seen_utts = HashSet::new();
        let mut utterances = Vec::with_capacity(rs.utterances.len());
        for ru in rs.utterances {
            if !seen_utts.insert(ru.id.clone()) {
                return Err(Error::Schema(format!(
                    "session {}: duplicate utterance id {}",
                    rs.id, ru.id
                )));
            }
            let resolve = |r: Option<PathBuf>, tensor: bool| -> Result<Option<PathBuf>> {
                let Some(rel) = r else { return Ok(None) };
                let full = base.join(&rel);
                if !full.is_file() {
                    return Err(Error::MissingResource {
                        session: rs.id.clone(),
                        utterance: ru.id.clone(),
                        path: full,
                    });
                }
                if tensor {
                    read_tensor(&full)?;
                }
                Ok(Some(full))
            };
            let audio = resolve(ru.audio.clone(), false)?;
            let layers = resolve(ru.layers.clone(), true)?;
            let sent_emb = resolve(ru.sent_emb.clone(), true)?;
            for (name, present) in [
                ("text", ru.text.is_some()),
                ("audio", audio.is_some()),
                ("layers", layers.is_some()),
                ("sent_emb", sent_emb.is_some()),
            ] {
                if !present {
                    diagnostics.push(format!("session {} utterance {}: no {name}", rs.id, ru.id));
                }
            }
            utterances.push(Utterance {
                id: ru.id,
                text: ru.text,
                audio,
                layers,
                sent_emb,
            });
        }

        let llm_emb = match rs.llm_emb {
            Some(rel) => {
                let full = base.join(&rel);
                if !full.is_file() {
                    return Err(Error::MissingResource {
                        session: rs.id.clone(),
                        utterance: "<session llm_emb>".into(),
                        path: full,
                    });
                }
                read_tensor(&full)?;
                Some(full)
            }
            None => {
                diagnostics.push(format!("session {}: no llm_emb", rs.id));
                None
            }
        };

        sessions.push(SessionManifest {
            id: rs.id,
            label,
            utterances,
            llm_emb,
        });
    }

    Ok(SessionSet {
        split: raw.split,
        sessions,
        diagnostics,
    })
}
