//! Corpus manifests: one `<relative_path>\t<speaker_or_noise_id>` per line.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::corpus::{Clip, Corpus, CorpusRole};
use super::wav::load_wav;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub id: String,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let (path, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("manifest line {}: expected <path>\\t<id>", n + 1)))?;
        if path.is_empty() || id.is_empty() || id.contains('\t') {
            return Err(Error::Parse(format!("manifest line {}: malformed entry", n + 1)));
        }
        out.push(ManifestEntry {
            path: path.to_string(),
            id: id.to_string(),
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.path, e.id))
        .collect()
}

/// Resolved clip locations listed by a manifest file.
pub fn manifest_clip_paths(manifest: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(parse_manifest(&text)?
        .into_iter()
        .map(|e| base.join(e.path))
        .collect())
}

/// Loads every clip listed in `manifest`, paths relative to its directory.
/// Clip ids are the manifest paths.
pub fn load_manifest_corpus(manifest: &Path, role: CorpusRole) -> Result<Corpus> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let entries = parse_manifest(&text)?;
    if entries.is_empty() {
        return Err(Error::config(format!("manifest {} lists no clips", manifest.display())));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let ids: BTreeSet<&str> = entries.iter().map(|e| e.id.as_str()).collect();
    let speaker_id = match role {
        CorpusRole::SpeakerSpeech => {
            if ids.len() != 1 {
                return Err(Error::config(format!(
                    "speaker manifest {} mixes {} speaker ids",
                    manifest.display(),
                    ids.len()
                )));
            }
            ids.into_iter().next().map(String::from)
        }
        _ => None,
    };
    let clips = entries
        .iter()
        .map(|e| {
            Ok(Clip {
                id: e.path.clone(),
                wave: load_wav(base.join(&e.path))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(role, speaker_id, clips)
}
