use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bm25, PlannerError};

const STARTER_KB: &str = include_str!("../../data/knowledge_base.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    HVHA,
    HVLA,
    LVHA,
    LVLA,
}

impl Quadrant {
    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::HVHA => "HVHA",
            Quadrant::HVLA => "HVLA",
            Quadrant::LVHA => "LVHA",
            Quadrant::LVLA => "LVLA",
        }
    }

    pub fn of(state: crate::AffectState) -> Self {
        match state.quadrant() {
            "HVHA" => Quadrant::HVHA,
            "HVLA" => Quadrant::HVLA,
            "LVHA" => Quadrant::LVHA,
            _ => Quadrant::LVLA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Major,
    Minor,
    Dorian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voice {
    SinePad,
    TriangleLead,
    Pluck,
    SoftNoisePerc,
}

impl Voice {
    pub fn from_tag(tag: &str) -> Option<Voice> {
        match tag {
            "sine_pad" | "pad" | "strings" => Some(Voice::SinePad),
            "triangle_lead" | "lead" | "flute" => Some(Voice::TriangleLead),
            "pluck" | "harp" | "guitar" | "piano" => Some(Voice::Pluck),
            "soft_noise_perc" | "perc" | "percussion" | "drum" => Some(Voice::SoftNoisePerc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KbAttributes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tempo_range_bpm: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instruments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_hint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub quadrant_tags: Vec<Quadrant>,
    pub text: String,
    #[serde(default)]
    pub attributes: KbAttributes,
}

impl KnowledgeEntry {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |reason: String| Err(PlannerError::InvalidEntry { id: self.id.clone(), reason });
        if self.id.trim().is_empty() {
            return err("empty id".into());
        }
        if self.quadrant_tags.is_empty() {
            return err("needs at least one quadrant tag".into());
        }
        if self.text.trim().is_empty() {
            return err("empty text".into());
        }
        if let Some((lo, hi)) = self.attributes.tempo_range_bpm {
            if !(40.0..=200.0).contains(&lo) || !(40.0..=200.0).contains(&hi) || lo > hi {
                return err(format!("tempo range [{lo}, {hi}] must satisfy 40 <= lo <= hi <= 200"));
            }
        }
        if let Some(d) = self.attributes.density_hint {
            if !(0.0..=1.0).contains(&d) {
                return err(format!("density hint {d} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn has_tag(&self, q: Quadrant) -> bool {
        self.quadrant_tags.contains(&q)
    }
}

/// Immutable after load; the BM25 index is built once.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    index: Bm25,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Result<Self, PlannerError> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(PlannerError::InvalidEntry { id: e.id.clone(), reason: "duplicate id".into() });
            }
        }
        let index = Bm25::new(&entries.iter().map(|e| e.text.as_str()).collect::<Vec<_>>());
        Ok(Self { entries, index })
    }

    /// Parses JSON Lines; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, PlannerError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: KnowledgeEntry = serde_json::from_str(line)
                .map_err(|e| PlannerError::Parse { line: i + 1, reason: e.to_string() })?;
            entries.push(e);
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Non-fatal findings: uncovered quadrants and unknown instrument tags.
    pub fn lint(&self) -> Vec<String> {
        let mut out = Vec::new();
        for q in [Quadrant::HVHA, Quadrant::HVLA, Quadrant::LVHA, Quadrant::LVLA] {
            if !self.entries.iter().any(|e| e.has_tag(q)) {
                out.push(format!("no entry tagged {}", q.as_str()));
            }
        }
        for e in &self.entries {
            for tag in e.attributes.instruments.iter().filter(|t| Voice::from_tag(t).is_none()) {
                out.push(format!("{}: unknown instrument {tag:?} is ignored", e.id));
            }
        }
        out
    }

    /// The corpus bundled with the crate.
    pub fn starter() -> Self {
        Self::from_jsonl(STARTER_KB).expect("bundled knowledge base is valid")
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn index(&self) -> &Bm25 {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starter_corpus_is_valid_and_covers_quadrants() {
        let kb = KnowledgeBase::starter();
        assert!(kb.len() >= 40);
        for q in [Quadrant::HVHA, Quadrant::HVLA, Quadrant::LVHA, Quadrant::LVLA] {
            assert!(kb.entries().iter().filter(|e| e.has_tag(q)).count() >= 5, "{q:?}");
        }
    }

    #[test]
    fn rejects_bad_entries() {
        let bad_tempo = r#"{"id":"x","quadrant_tags":["HVHA"],"text":"t","attributes":{"tempo_range_bpm":[120,90]}}"#;
        assert!(matches!(KnowledgeBase::from_jsonl(bad_tempo), Err(PlannerError::InvalidEntry { .. })));
        let no_tags = r#"{"id":"x","quadrant_tags":[],"text":"t"}"#;
        assert!(matches!(KnowledgeBase::from_jsonl(no_tags), Err(PlannerError::InvalidEntry { .. })));
        let dup = "{\"id\":\"x\",\"quadrant_tags\":[\"HVHA\"],\"text\":\"a\"}\n{\"id\":\"x\",\"quadrant_tags\":[\"HVHA\"],\"text\":\"b\"}";
        assert!(matches!(KnowledgeBase::from_jsonl(dup), Err(PlannerError::InvalidEntry { .. })));
        assert!(matches!(KnowledgeBase::from_jsonl("{not json"), Err(PlannerError::Parse { line: 1, .. })));
    }

    #[test]
    fn lint_reports_gaps() {
        assert!(KnowledgeBase::starter().lint().is_empty(), "{:?}", KnowledgeBase::starter().lint());
        let one = r#"{"id":"x","quadrant_tags":["HVHA"],"text":"t","attributes":{"instruments":["kazoo"]}}"#;
        let lint = KnowledgeBase::from_jsonl(one).unwrap().lint();
        assert_eq!(lint.len(), 4);
        assert_eq!(lint[3], "x: unknown instrument \"kazoo\" is ignored");
    }
}
