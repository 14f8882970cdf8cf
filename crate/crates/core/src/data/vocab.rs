use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;

use super::bilou::{parse_tag, Boundary};
use super::corpus::AnnotatedSentence;

/// Reserved symbol for unknown words and characters.
pub const UNK: &str = "<unk>";
/// Relation class of candidate pairs that are not related.
pub const NEG: &str = "NEG";

/// Bijective symbol ↔ id map; ids follow insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    ids: HashMap<String, usize>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = SymbolTable::new();
        for s in symbols {
            table.insert(s);
        }
        table
    }

    /// Adds `symbol` if absent; returns its id.
    pub fn insert(&mut self, symbol: impl Into<String>) -> usize {
        let symbol = symbol.into();
        if let Some(&id) = self.ids.get(&symbol) {
            return id;
        }
        let id = self.symbols.len();
        self.ids.insert(symbol.clone(), id);
        self.symbols.push(symbol);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.ids.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabularies {
    pub words: SymbolTable,
    /// Training-set frequency of each word id (0 for `UNK`).
    pub word_counts: Vec<usize>,
    pub chars: SymbolTable,
    /// `O`, then `B/I/L/U` for each entity type in sorted order.
    pub entity_tags: SymbolTable,
    pub boundary_tags: SymbolTable,
    /// `NEG`, then the relation labels in sorted order.
    pub relations: SymbolTable,
}

impl Vocabularies {
    /// Builds every vocabulary from the training corpus only.
    pub fn build(train: &[AnnotatedSentence]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut chars: BTreeSet<char> = BTreeSet::new();
        let mut types: BTreeSet<&str> = BTreeSet::new();
        let mut relations: BTreeSet<&str> = BTreeSet::new();
        for s in train {
            for tok in &s.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
                chars.extend(tok.chars());
            }
            for tag in &s.entity_tags {
                if let Some((_, Some(t))) = parse_tag(tag) {
                    types.insert(t);
                }
            }
            relations.extend(s.relations.iter().map(|r| r.label.as_str()));
        }
        let mut words = SymbolTable::from_symbols([UNK]);
        let mut word_counts = vec![0];
        for (w, c) in counts {
            if w != UNK {
                words.insert(w);
                word_counts.push(c);
            }
        }
        let mut char_table = SymbolTable::from_symbols([UNK]);
        for c in chars {
            char_table.insert(c.to_string());
        }
        Vocabularies {
            words,
            word_counts,
            chars: char_table,
            entity_tags: Self::tag_table(types),
            boundary_tags: SymbolTable::from_symbols(Boundary::ALL.iter().map(|b| b.letter())),
            relations: SymbolTable::from_symbols(std::iter::once(NEG).chain(relations)),
        }
    }

    /// BILOU tag table for the given entity types.
    pub fn tag_table<'t>(types: impl IntoIterator<Item = &'t str>) -> SymbolTable {
        let mut table = SymbolTable::from_symbols(["O"]);
        for t in types {
            for b in ["B", "I", "L", "U"] {
                table.insert(format!("{b}-{t}"));
            }
        }
        table
    }

    /// Entity types in tag-table order.
    pub fn entity_types(&self) -> Vec<&str> {
        self.entity_tags
            .symbols()
            .iter()
            .filter_map(|t| t.strip_prefix("U-"))
            .collect()
    }

    pub fn word_count(&self, word: &str) -> usize {
        self.words.id(word).map_or(0, |id| self.word_counts[id])
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.words.id(word).unwrap_or(0)
    }

    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        let ids: Vec<usize> = word
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.chars.id(c.encode_utf8(&mut buf)).unwrap_or(0)
            })
            .collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }
}

/// `0.25 / (0.25 + count)`: the chance a training token is swapped for `UNK`.
pub fn unk_probability(count: usize) -> f64 {
    0.25 / (0.25 + count as f64)
}

/// Word dropout. While training, `word` becomes `UNK` with probability
/// [`unk_probability`] of its training count (one uniform draw per call).
/// Otherwise known words are kept and unknown words map to `UNK`.
pub fn word_dropout_replace<'w>(
    word: &'w str,
    vocab: &Vocabularies,
    rng: &mut impl Rng,
    training: bool,
) -> &'w str {
    let count = vocab.word_count(word);
    if training {
        let u: f64 = rng.random();
        if u < unk_probability(count) {
            return UNK;
        }
        word
    } else if vocab.words.id(word).is_some() {
        word
    } else {
        UNK
    }
}
