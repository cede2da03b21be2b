//! Generated corpora with known structure, for simulations and demos.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::record::{Label, LabelSource, RecordItem, SourceKind};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n: usize,
    pub p: usize,
    pub words_per_doc: usize,
    /// Size of each topic vocabulary and of the shared filler vocabulary.
    pub vocab_size: usize,
    /// Probability that a topical word of a document is drawn from the other
    /// class's vocabulary. 0 gives cleanly separable classes; 0.5 makes the
    /// two indistinguishable.
    pub overlap: f64,
    /// Share of each document made of filler words common to both classes.
    pub filler_share: f64,
    pub seed: u64,
}

impl CorpusSpec {
    /// Two clearly separated clusters.
    pub fn separable(n: usize, p: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            words_per_doc: 40,
            vocab_size: 60,
            overlap: 0.05,
            filler_share: 0.4,
            seed,
        }
    }

    /// Heavily overlapping clusters.
    pub fn hard(n: usize, p: usize, seed: u64) -> Self {
        Self {
            overlap: 0.42,
            ..Self::separable(n, p, seed)
        }
    }
}

fn make_vocab(rng: &mut ChaCha8Rng, size: usize, taken: &mut std::collections::HashSet<String>) -> Vec<String> {
    const ONSETS: &[&str] = &[
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr",
    ];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let syllables = rng.random_range(2..=4);
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if taken.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

/// Records `s0001…` with gold labels; the first `p` generated are relevant,
/// then the list is shuffled. Labels are marked as imported gold labels.
pub fn two_cluster_corpus(spec: &CorpusSpec) -> Vec<RecordItem> {
    assert!(spec.p <= spec.n, "more relevant records than records");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = std::collections::HashSet::new();
    let rel_vocab = make_vocab(&mut rng, spec.vocab_size, &mut taken);
    let irr_vocab = make_vocab(&mut rng, spec.vocab_size, &mut taken);
    let filler = make_vocab(&mut rng, spec.vocab_size, &mut taken);

    let mut docs: Vec<(bool, String)> = (0..spec.n)
        .map(|i| {
            let relevant = i < spec.p;
            let (own, other) = if relevant {
                (&rel_vocab, &irr_vocab)
            } else {
                (&irr_vocab, &rel_vocab)
            };
            let words: Vec<&str> = (0..spec.words_per_doc)
                .map(|_| {
                    let source = if rng.random_bool(spec.filler_share) {
                        &filler
                    } else if rng.random_bool(spec.overlap) {
                        other
                    } else {
                        own
                    };
                    source.choose(&mut rng).unwrap().as_str()
                })
                .collect();
            (relevant, words.join(" "))
        })
        .collect();
    docs.shuffle(&mut rng);

    docs.into_iter()
        .enumerate()
        .map(|(i, (relevant, text))| {
            let title: String = text.split(' ').take(6).collect::<Vec<_>>().join(" ");
            RecordItem {
                id: format!("s{:04}", i + 1),
                title,
                reference_text: text,
                source_kind: SourceKind::Other,
                metadata: Default::default(),
                label: if relevant { Label::Include } else { Label::Exclude },
                label_source: Some(LabelSource::GoldImport),
                llm_bit: None,
                current_score: None,
            }
        })
        .collect()
}

/// Votes that agree with the gold label with probability `accuracy`.
pub fn noisy_votes(records: &[RecordItem], accuracy: f64, seed: u64) -> std::collections::HashMap<String, u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    records
        .iter()
        .map(|r| {
            let truth = u8::from(r.label == Label::Include);
            let bit = if rng.random_bool(accuracy) { truth } else { 1 - truth };
            (r.id.clone(), bit)
        })
        .collect()
}
