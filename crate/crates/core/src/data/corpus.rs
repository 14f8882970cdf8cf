//! Block corpus format. Columns are separated by single tabs.
//!
//! ```text
//! 0  David  B-Peop
//! 1  Foster  L-Peop
//! 2  is  O
//! ...
//! R  1  4  Work_For
//!
//! 0  Next  O
//! ```
//!
//! Sentences are separated by blank lines. A token line is
//! `index<TAB>word<TAB>tag` with indices counting from 0; the tag column may be
//! omitted for every token of an unannotated sentence. Relation lines
//! `R<TAB>head<TAB>tail<TAB>label` follow the tokens. Lines starting with `#`
//! are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::bilou::{bilou_to_spans, validate_bilou, EntitySpan};
use crate::error::{Error, Result};

/// A directed, typed relation between two entity-final tokens.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub head: usize,
    pub tail: usize,
    pub label: String,
}

impl Relation {
    pub fn new(head: usize, tail: usize, label: impl Into<String>) -> Self {
        Relation {
            head,
            tail,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotatedSentence {
    pub tokens: Vec<String>,
    /// One BILOU tag per token, or empty for an unannotated sentence.
    pub entity_tags: Vec<String>,
    pub relations: Vec<Relation>,
}

impl AnnotatedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_annotated(&self) -> bool {
        !self.tokens.is_empty() && self.entity_tags.len() == self.tokens.len()
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        bilou_to_spans(&self.entity_tags)
    }

    /// Checks the tag and relation invariants; `index` is used in messages.
    pub fn validate(&self, index: usize) -> Result<()> {
        if self.entity_tags.is_empty() {
            if !self.relations.is_empty() {
                return Err(Error::InvalidRelation {
                    sentence: index,
                    message: "relations on an unannotated sentence".into(),
                });
            }
            return Ok(());
        }
        if self.entity_tags.len() != self.tokens.len() {
            return Err(Error::Corpus(format!(
                "sentence {index}: {} tokens but {} tags",
                self.tokens.len(),
                self.entity_tags.len()
            )));
        }
        validate_bilou(&self.entity_tags).map_err(|message| Error::InvalidBilou {
            sentence: index,
            message,
        })?;
        for r in &self.relations {
            for end in [r.head, r.tail] {
                let ok = self
                    .entity_tags
                    .get(end)
                    .is_some_and(|t| t.starts_with("L-") || t.starts_with("U-"));
                if !ok {
                    return Err(Error::InvalidRelation {
                        sentence: index,
                        message: format!("relation endpoint {end} is not an entity-final token"),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text)
}

struct Block {
    first_line: usize,
    tokens: Vec<String>,
    tags: Vec<String>,
    // (line, head, tail, label)
    relations: Vec<(usize, usize, usize, String)>,
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    let mut block: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                sentences.push(finish_block(b, sentences.len())?);
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let b = block.get_or_insert_with(|| Block {
            first_line: line_no,
            tokens: Vec::new(),
            tags: Vec::new(),
            relations: Vec::new(),
        });
        if fields[0] == "R" {
            if fields.len() != 4 {
                return Err(parse_err(format!(
                    "relation line needs 4 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(format!("bad relation index `{s}`")))
            };
            b.relations
                .push((line_no, idx(fields[1])?, idx(fields[2])?, fields[3].to_string()));
            continue;
        }
        if !b.relations.is_empty() {
            return Err(parse_err("token line after relation lines".into()));
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!(
                "token line needs 2 or 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad token index `{}`", fields[0])))?;
        if index != b.tokens.len() {
            return Err(parse_err(format!(
                "expected token index {}, found {index}",
                b.tokens.len()
            )));
        }
        if fields[1].is_empty() {
            return Err(parse_err("empty word".into()));
        }
        b.tokens.push(fields[1].to_string());
        if let Some(tag) = fields.get(2) {
            if b.tags.len() + 1 != b.tokens.len() {
                return Err(parse_err("tag column missing on earlier tokens".into()));
            }
            b.tags.push(tag.to_string());
        } else if !b.tags.is_empty() {
            return Err(parse_err("tag column missing".into()));
        }
    }
    if let Some(b) = block.take() {
        sentences.push(finish_block(b, sentences.len())?);
    }
    Ok(sentences)
}

fn finish_block(b: Block, index: usize) -> Result<AnnotatedSentence> {
    if !b.tags.is_empty() && b.tags.len() != b.tokens.len() {
        return Err(Error::Parse {
            line: b.first_line,
            message: format!("{} tokens but {} tags", b.tokens.len(), b.tags.len()),
        });
    }
    let mut sentence = AnnotatedSentence {
        tokens: b.tokens,
        entity_tags: b.tags,
        relations: Vec::new(),
    };
    if sentence.entity_tags.is_empty() && !b.relations.is_empty() {
        return Err(Error::InvalidRelation {
            sentence: index,
            message: "relations on an unannotated sentence".into(),
        });
    }
    validate_bilou(&sentence.entity_tags).map_err(|message| Error::InvalidBilou {
        sentence: index,
        message,
    })?;
    let spans = sentence.spans();
    // endpoints inside an entity move to its last token
    let anchor = |line: usize, i: usize| {
        spans
            .iter()
            .find(|s| s.contains(i))
            .map(|s| s.end)
            .ok_or_else(|| Error::InvalidRelation {
                sentence: index,
                message: format!("line {line}: relation endpoint {i} is outside every entity"),
            })
    };
    for (line, head, tail, label) in b.relations {
        let relation = Relation::new(anchor(line, head)?, anchor(line, tail)?, label);
        if relation.head == relation.tail {
            return Err(Error::InvalidRelation {
                sentence: index,
                message: format!("line {line}: relation links an entity to itself"),
            });
        }
        if !sentence.relations.contains(&relation) {
            sentence.relations.push(relation);
        }
    }
    Ok(sentence)
}

pub fn write_corpus(sentences: &[AnnotatedSentence]) -> String {
    let mut out = String::new();
    for (k, s) in sentences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for (i, tok) in s.tokens.iter().enumerate() {
            match s.entity_tags.get(i) {
                Some(tag) => writeln!(out, "{i}\t{tok}\t{tag}").unwrap(),
                None => writeln!(out, "{i}\t{tok}").unwrap(),
            }
        }
        for r in &s.relations {
            writeln!(out, "R\t{}\t{}\t{}", r.head, r.tail, r.label).unwrap();
        }
    }
    out
}
