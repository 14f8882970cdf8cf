use crate::error::{Error, Result};

/// Boundary letter of a BILOU tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Boundary {
    B,
    I,
    O,
    L,
    U,
}

impl Boundary {
    pub const ALL: [Boundary; 5] = [Boundary::B, Boundary::I, Boundary::O, Boundary::L, Boundary::U];

    pub fn letter(self) -> &'static str {
        match self {
            Boundary::B => "B",
            Boundary::I => "I",
            Boundary::O => "O",
            Boundary::L => "L",
            Boundary::U => "U",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// A typed entity covering tokens `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        assert!(start <= end, "span start {start} after end {end}");
        EntitySpan {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }
}

/// Splits `B-Peop` into its boundary letter and entity type. `O` has no type.
pub fn parse_tag(tag: &str) -> Option<(Boundary, Option<&str>)> {
    if tag == "O" {
        return Some((Boundary::O, None));
    }
    let (letter, label) = tag.split_once('-')?;
    if label.is_empty() {
        return None;
    }
    let boundary = match letter {
        "B" => Boundary::B,
        "I" => Boundary::I,
        "L" => Boundary::L,
        "U" => Boundary::U,
        _ => return None,
    };
    Some((boundary, Some(label)))
}

/// Encodes non-overlapping spans over a sentence of `len` tokens.
pub fn spans_to_bilou(spans: &[EntitySpan], len: usize) -> Result<Vec<String>> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(Error::OverlappingSpans {
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }
    let mut tags = vec!["O".to_string(); len];
    for s in sorted {
        if s.end >= len {
            return Err(Error::Corpus(format!(
                "span ({}, {}) exceeds sentence length {len}",
                s.start, s.end
            )));
        }
        if s.start == s.end {
            tags[s.start] = format!("U-{}", s.label);
        } else {
            tags[s.start] = format!("B-{}", s.label);
            for t in &mut tags[s.start + 1..s.end] {
                *t = format!("I-{}", s.label);
            }
            tags[s.end] = format!("L-{}", s.label);
        }
    }
    Ok(tags)
}

/// Checks that `tags` is a well-formed BILOU sequence.
pub fn validate_bilou<S: AsRef<str>>(tags: &[S]) -> std::result::Result<(), String> {
    let mut open: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (b, label) = parse_tag(tag).ok_or_else(|| format!("token {i}: malformed tag `{tag}`"))?;
        match (b, open) {
            (Boundary::B, None) => open = label,
            (Boundary::I, Some(t)) if label == Some(t) => {}
            (Boundary::L, Some(t)) if label == Some(t) => open = None,
            (Boundary::O | Boundary::U, None) => {}
            _ => {
                return Err(match open {
                    Some(t) => format!("token {i}: `{tag}` inside an open {t} entity"),
                    None => format!("token {i}: `{tag}` without a preceding B"),
                })
            }
        }
    }
    match open {
        Some(t) => Err(format!("{t} entity is never closed")),
        None => Ok(()),
    }
}

/// Decodes tags into spans. Exact inverse of [`spans_to_bilou`] on valid
/// input; invalid input is repaired while scanning left to right:
///
/// * an `I` or `L` with no open span of its type opens one at that token;
/// * a span still open at an `O`, `B`, `U`, type change or sentence end is
///   closed at the last contiguous token of its type;
/// * a type conflict closes the open span before the conflicting tag.
///
/// Unparseable tags are treated as `O`. The output never overlaps.
pub fn bilou_to_spans<S: AsRef<str>>(tags: &[S]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (b, label) = parse_tag(tag.as_ref()).unwrap_or((Boundary::O, None));
        let label = label.unwrap_or("");
        let same_type = matches!(&open, Some((_, t)) if t == label);
        match b {
            Boundary::O | Boundary::B | Boundary::U => {
                if let Some((start, t)) = open.take() {
                    spans.push(EntitySpan::new(start, i - 1, t));
                }
                match b {
                    Boundary::B => open = Some((i, label.to_string())),
                    Boundary::U => spans.push(EntitySpan::new(i, i, label)),
                    _ => {}
                }
            }
            Boundary::I | Boundary::L => {
                if !same_type {
                    if let Some((start, t)) = open.take() {
                        spans.push(EntitySpan::new(start, i - 1, t));
                    }
                    open = Some((i, label.to_string()));
                }
                if b == Boundary::L {
                    let (start, t) = open.take().expect("span opened above");
                    spans.push(EntitySpan::new(start, i, t));
                }
            }
        }
    }
    if let Some((start, t)) = open {
        spans.push(EntitySpan::new(start, tags.len() - 1, t));
    }
    spans
}
