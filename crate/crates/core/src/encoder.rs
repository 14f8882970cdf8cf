//! Per-token input vectors: word embedding, character-level BiLSTM word
//! embedding and, under Setup 2, an embedding of the gold boundary letter.

use std::collections::HashMap;

use crate::config::{RunConfig, Setup};
use crate::data::{parse_tag, word_dropout_replace, AnnotatedSentence, Boundary, Vocabularies, UNK};
use crate::error::{Error, Result};
use crate::nn::{embedding, BiLstm, Pass};
use crate::numerics::{ParamId, ParamStore, Tape, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub struct CharEncoder {
    pub embeddings: ParamId,
    /// Hidden size equals the character embedding size.
    pub lstm: BiLstm,
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub words: ParamId,
    pub chars: Option<CharEncoder>,
    pub boundaries: Option<ParamId>,
}

impl EncoderParams {
    pub fn register(store: &mut ParamStore, config: &RunConfig, vocab: &Vocabularies, rng: &mut Rng) -> Self {
        let d = &config.dims;
        let words = store.add("enc.word_emb", embedding(vocab.words.len(), d.word, rng));
        let chars = (!config.ablations.no_char).then(|| CharEncoder {
            embeddings: store.add("enc.char_emb", embedding(vocab.chars.len(), d.char, rng)),
            lstm: BiLstm::register(store, "enc.char_lstm", d.char, d.char, rng),
        });
        let boundaries = (config.setup == Setup::Two)
            .then(|| store.add("enc.boundary_emb", embedding(Boundary::ALL.len(), d.boundary, rng)));
        EncoderParams {
            words,
            chars,
            boundaries,
        }
    }

    /// Length of each input vector `v_i`.
    pub fn output_dim(config: &RunConfig) -> usize {
        let d = &config.dims;
        let mut dim = d.word;
        if !config.ablations.no_char {
            dim += 2 * d.char;
        }
        if config.setup == Setup::Two {
            dim += d.boundary;
        }
        dim
    }

    /// Final forward hidden state concatenated with the final backward hidden
    /// state of the character BiLSTM. Panics when the character encoder is
    /// ablated.
    pub fn char_word_embedding(&self, tape: &mut Tape, char_ids: &[usize]) -> Var {
        let enc = self.chars.expect("character encoder disabled");
        let ids: &[usize] = if char_ids.is_empty() { &[0] } else { char_ids };
        let table = tape.param(enc.embeddings);
        let xs: Vec<Var> = ids.iter().map(|&c| tape.row(table, c)).collect();
        let fwd = enc.lstm.forward.run(tape, &xs, false);
        let bwd = enc.lstm.backward.run(tape, &xs, true);
        tape.concat(&[fwd[fwd.len() - 1], bwd[0]])
    }

    /// Builds `v_1..v_n`, applying word dropout first and input dropout last
    /// when the pass trains.
    pub fn assemble_inputs(
        &self,
        tape: &mut Tape,
        sentence: &AnnotatedSentence,
        vocab: &Vocabularies,
        config: &RunConfig,
        pass: &mut Pass,
    ) -> Result<Vec<Var>> {
        let boundaries = match self.boundaries {
            Some(_) => {
                if !sentence.is_annotated() {
                    return Err(Error::Corpus(
                        "setup 2 needs gold entity tags for every sentence".into(),
                    ));
                }
                sentence
                    .entity_tags
                    .iter()
                    .map(|t| parse_tag(t).map_or(Boundary::O, |(b, _)| b))
                    .collect()
            }
            None => Vec::new(),
        };
        let word_table = tape.param(self.words);
        let boundary_table = self.boundaries.map(|b| tape.param(b));
        let mut char_cache: HashMap<Vec<usize>, Var> = HashMap::new();
        let mut out = Vec::with_capacity(sentence.len());
        for (i, token) in sentence.tokens.iter().enumerate() {
            let word = word_dropout_replace(token, vocab, &mut pass.rngs.word_dropout, pass.training);
            let mut parts = vec![tape.row(word_table, vocab.word_id(word))];
            if self.chars.is_some() {
                let hidden = config.word_dropout_hides_chars && word == UNK;
                let ids = if hidden { vec![0] } else { vocab.char_ids(token) };
                let e = match char_cache.get(&ids) {
                    Some(&v) => v,
                    None => {
                        let v = self.char_word_embedding(tape, &ids);
                        char_cache.insert(ids, v);
                        v
                    }
                };
                parts.push(e);
            }
            if let Some(table) = boundary_table {
                parts.push(tape.row(table, boundaries[i].index()));
            }
            let v = tape.concat(&parts);
            out.push(pass.dropout(tape, v));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_corpus_str;
    use crate::numerics::{Gradients, Tensor};
    use crate::rng::{stream, Stream};

    fn corpus() -> Vec<AnnotatedSentence> {
        parse_corpus_str("0\tJohn\tU-Peop\n1\tmet\tO\n2\tJohn\tU-Peop\n3\tin\tO\n4\tRome\tU-Loc\n").unwrap()
    }

    fn small(setup: Setup) -> RunConfig {
        let mut c = RunConfig::default();
        c.setup = setup;
        c.dims.word = 6;
        c.dims.char = 3;
        c.dims.boundary = 4;
        c
    }

    fn build(config: &RunConfig) -> (ParamStore, EncoderParams, Vocabularies) {
        let corpus = corpus();
        let vocab = Vocabularies::build(&corpus);
        let mut store = ParamStore::new();
        let mut rng = stream(1, Stream::Init);
        let enc = EncoderParams::register(&mut store, config, &vocab, &mut rng);
        (store, enc, vocab)
    }

    #[test]
    fn default_dimensions() {
        let mut c = RunConfig::default();
        assert_eq!(EncoderParams::output_dim(&c), 150);
        c.setup = Setup::Two;
        assert_eq!(EncoderParams::output_dim(&c), 250);
        c.ablations.no_char = true;
        assert_eq!(EncoderParams::output_dim(&c), 200);
    }

    #[test]
    fn char_embedding_has_twice_char_dim() {
        let c = RunConfig::default();
        let (store, enc, vocab) = build(&c);
        let mut tape = Tape::new(&store);
        let e = enc.char_word_embedding(&mut tape, &vocab.char_ids("John"));
        assert_eq!(tape.shape(e), &[50]);
    }

    #[test]
    fn single_char_word_sees_same_sequence_both_ways() {
        // with both directions sharing weights, a length-1 word gives equal halves
        let c = small(Setup::One);
        let (mut store, enc, vocab) = build(&c);
        let ch = enc.chars.unwrap();
        let fw = store.get(ch.lstm.forward.w).clone();
        *store.get_mut(ch.lstm.backward.w) = fw;
        let fb = store.get(ch.lstm.forward.b).clone();
        *store.get_mut(ch.lstm.backward.b) = fb;
        let mut tape = Tape::new(&store);
        let e = enc.char_word_embedding(&mut tape, &vocab.char_ids("J"));
        let v = tape.value(e);
        assert_eq!(v[..3], v[3..]);
    }

    #[test]
    fn zeroed_char_lstm_is_word_independent() {
        let c = small(Setup::One);
        let (mut store, enc, vocab) = build(&c);
        let ch = enc.chars.unwrap();
        for id in [ch.lstm.forward.w, ch.lstm.backward.w] {
            let shape = store.get(id).shape().to_vec();
            *store.get_mut(id) = Tensor::zeros(shape);
        }
        let mut tape = Tape::new(&store);
        let a = enc.char_word_embedding(&mut tape, &vocab.char_ids("John"));
        let b = enc.char_word_embedding(&mut tape, &vocab.char_ids("in"));
        assert_eq!(tape.value(a), tape.value(b));
        assert!(tape.value(a).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn setup_dimensions_and_determinism() {
        for (setup, dim) in [(Setup::One, 12), (Setup::Two, 16)] {
            let c = small(setup);
            let (store, enc, vocab) = build(&c);
            let mut tape = Tape::new(&store);
            let vs = enc
                .assemble_inputs(&mut tape, &corpus()[0], &vocab, &c, &mut Pass::eval())
                .unwrap();
            assert!(vs.iter().all(|&v| tape.shape(v) == [dim]));
            // "John" at positions 0 and 2
            assert_eq!(tape.value(vs[0]), tape.value(vs[2]));
            assert_ne!(tape.value(vs[0]), tape.value(vs[1]));
        }
    }

    #[test]
    fn setup_two_requires_gold_tags() {
        let c = small(Setup::Two);
        let (store, enc, vocab) = build(&c);
        let mut tape = Tape::new(&store);
        let raw = parse_corpus_str("0\tJohn\n").unwrap();
        assert!(enc
            .assemble_inputs(&mut tape, &raw[0], &vocab, &c, &mut Pass::eval())
            .is_err());
    }

    #[test]
    fn gradients_touch_only_used_rows() {
        let c = small(Setup::Two);
        let (store, enc, vocab) = build(&c);
        let mut tape = Tape::new(&store);
        let s = parse_corpus_str("0\tJohn\tU-Peop\n1\tin\tO\n").unwrap();
        let vs = enc.assemble_inputs(&mut tape, &s[0], &vocab, &c, &mut Pass::eval()).unwrap();
        let cat = tape.concat(&vs);
        let sq = tape.mul(cat, cat);
        let loss = tape.sum(sq);
        let mut grads = Gradients::for_params(&store);
        tape.backward(loss, &mut grads);
        let row_norm = |id: ParamId, row: usize, width: usize| {
            grads.get(id)[row * width..(row + 1) * width]
                .iter()
                .map(|g| g * g)
                .sum::<f64>()
        };
        let used_words = [vocab.word_id("John"), vocab.word_id("in")];
        for w in 0..vocab.words.len() {
            assert_eq!(row_norm(enc.words, w, 6) > 0.0, used_words.contains(&w), "word {w}");
        }
        let used_chars: Vec<usize> = vocab.char_ids("Johnin");
        for ch in 0..vocab.chars.len() {
            let touched = row_norm(enc.chars.unwrap().embeddings, ch, 3) > 0.0;
            assert_eq!(touched, used_chars.contains(&ch), "char {ch}");
        }
        let b = enc.boundaries.unwrap();
        for letter in Boundary::ALL {
            let used = matches!(letter, Boundary::U | Boundary::O);
            assert_eq!(row_norm(b, letter.index(), 4) > 0.0, used);
        }
    }
}
