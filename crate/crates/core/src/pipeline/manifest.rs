//! Tab-separated `path<TAB>label` clip lists.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::classes::SceneClass;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path as written in the manifest; doubles as the clip id.
    pub clip_id: String,
    /// `clip_id` resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: SceneClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses manifest text. Columns after the label are ignored; blank lines
    /// and `#` comments are skipped.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let clip = cols.next().unwrap_or("").trim();
            let label = cols.next().map(str::trim).unwrap_or("");
            if clip.is_empty() || label.is_empty() {
                return Err(PipelineError::Manifest { row, msg: "expected `path<TAB>label`".into() });
            }
            let label = label
                .parse::<SceneClass>()
                .map_err(|e| PipelineError::Manifest { row, msg: e.to_string() })?;
            if !seen.insert(clip.to_string()) {
                return Err(PipelineError::Manifest { row, msg: format!("duplicate path {clip}") });
            }
            entries.push(ManifestEntry { clip_id: clip.to_string(), path: base.join(clip), label });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let m = Self::parse(&text, base).map_err(|e| match e {
            PipelineError::Manifest { row, msg } => {
                PipelineError::Manifest { row, msg: format!("{}: {msg}", path.display()) }
            }
            other => other,
        })?;
        if m.entries.is_empty() {
            log::warn!("manifest {} lists no clips", path.display());
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails if any clip appears in both manifests.
    pub fn check_disjoint(&self, other: &DatasetManifest) -> Result<(), PipelineError> {
        let mine: HashSet<&PathBuf> = self.entries.iter().map(|e| &e.path).collect();
        if let Some(e) = other.entries.iter().find(|e| mine.contains(&e.path)) {
            return Err(PipelineError::Config(format!("clip {} is in both training and validation", e.clip_id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows() {
        let m = DatasetManifest::parse("audio/b020.wav\tbeach\n\naudio/x.wav\tcafe/restaurant\textra\n", Path::new("/d"))
            .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries[0].label.label(), "beach");
        assert_eq!(m.entries[0].path, Path::new("/d/audio/b020.wav"));
        assert_eq!(m.entries[0].clip_id, "audio/b020.wav");
        assert_eq!(m.entries[1].label.label(), "cafe/restaurant");
    }

    #[test]
    fn empty_is_fine() {
        assert!(DatasetManifest::parse("", Path::new(".")).unwrap().is_empty());
    }

    #[test]
    fn unknown_label_names_label_and_row() {
        let err = DatasetManifest::parse("a.wav\tbeach\nb.wav\tairport\n", Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("airport") && msg.contains("row 2"), "{msg}");
    }

    #[test]
    fn duplicates_and_missing_labels() {
        assert!(DatasetManifest::parse("a.wav\tbeach\na.wav\tbus\n", Path::new(".")).is_err());
        assert!(DatasetManifest::parse("a.wav\n", Path::new(".")).is_err());
    }

    #[test]
    fn overlap_is_detected() {
        let a = DatasetManifest::parse("a.wav\tbeach\n", Path::new(".")).unwrap();
        let b = DatasetManifest::parse("b.wav\tbeach\na.wav\tbeach\n", Path::new(".")).unwrap();
        assert!(a.check_disjoint(&b).is_err());
    }
}
