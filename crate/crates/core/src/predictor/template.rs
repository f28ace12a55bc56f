//! Feature templates, one per line:
//!
//! ```text
//! U:<offset>:<field>[/<offset>:<field>...]   unigram (conjunction of terms)
//! B                                          label transitions
//! ```
//!
//! `field` is `bar`, `chord` or `note`; `offset` is relative to the labelled
//! position. Lines starting with `#` are comments.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use super::BeatObservation as Observation;
use crate::error::{Error, Result};

/// Value of any field outside the sequence.
pub const PAD_VALUE: &str = "_P";
/// Value of a field that is not yet known at prediction time.
pub const UNKNOWN_VALUE: &str = "_Q";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    /// Bar index modulo 4.
    Bar,
    Chord,
    Note,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Bar => "bar",
            Field::Chord => "chord",
            Field::Note => "note",
        }
    }

    fn value(self, obs: &Observation) -> String {
        match self {
            Field::Bar => (obs.bar_index % 4).to_string(),
            Field::Chord => match &obs.cached_chord {
                Some(c) => c.pitches().iter().map(u8::to_string).collect::<Vec<_>>().join("."),
                None => UNKNOWN_VALUE.into(),
            },
            Field::Note => match obs.longest_note {
                Some(p) => p.midi().map_or_else(|| "R".to_string(), |m| m.to_string()),
                None => UNKNOWN_VALUE.into(),
            },
        }
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bar" => Ok(Field::Bar),
            "chord" => Ok(Field::Chord),
            "note" => Ok(Field::Note),
            other => Err(format!("unknown field {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub offset: i32,
    pub field: Field,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Template {
    Unigram(Vec<Term>),
    Bigram,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::Bigram => write!(f, "B"),
            Template::Unigram(terms) => {
                let body: Vec<String> = terms.iter().map(|t| format!("{}:{}", t.offset, t.field.name())).collect();
                write!(f, "U:{}", body.join("/"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut templates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::TemplateSyntax { line: i + 1, reason };
            let t = if line == "B" {
                Template::Bigram
            } else if let Some(body) = line.strip_prefix("U:") {
                let terms = body
                    .split('/')
                    .map(|term| {
                        let (off, field) = term.split_once(':').ok_or_else(|| format!("term {term:?} lacks ':'"))?;
                        let offset = off.trim().parse::<i32>().map_err(|e| format!("offset {off:?}: {e}"))?;
                        Ok(Term { offset, field: field.trim().parse()? })
                    })
                    .collect::<Result<Vec<_>, String>>()
                    .map_err(err)?;
                Template::Unigram(terms)
            } else {
                return Err(err(format!("expected `U:` or `B`, found {line:?}")));
            };
            if templates.contains(&t) {
                return Err(err(format!("duplicate template {t}")));
            }
            templates.push(t);
        }
        if !templates.iter().any(|t| matches!(t, Template::Unigram(_))) {
            return Err(Error::TemplateSyntax { line: 0, reason: "no unigram template".into() });
        }
        Ok(TemplateSet { templates })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&crate::error::read_file(path)?)
    }

    /// The bundled template file.
    pub fn standard() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| TemplateSet::parse(include_str!("../../data/templates.txt")).expect("bundled templates parse"))
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn has_bigram(&self) -> bool {
        self.templates.contains(&Template::Bigram)
    }

    /// Feature strings per position. Each string is prefixed by its template
    /// index so equal values under different templates never collide.
    pub fn expand(&self, seq: &[Observation]) -> Vec<Vec<String>> {
        (0..seq.len())
            .map(|k| {
                self.templates
                    .iter()
                    .enumerate()
                    .filter_map(|(ti, t)| match t {
                        Template::Bigram => None,
                        Template::Unigram(terms) => {
                            let values: Vec<String> = terms
                                .iter()
                                .map(|term| {
                                    let at = k as i64 + term.offset as i64;
                                    if at < 0 || at >= seq.len() as i64 {
                                        PAD_VALUE.to_string()
                                    } else {
                                        term.field.value(&seq[at as usize])
                                    }
                                })
                                .collect();
                            Some(format!("U{ti:02}:{}", values.join("/")))
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

impl fmt::Display for TemplateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.templates {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }
}
