//! Small generated corpora for smoke tests, benchmarks and ablations.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Aspect, Sentence};
use crate::labeler::{label_sentence, Lexicon, SeedWords};

pub const ASPECTS: [&str; 6] = ["room", "food", "staff", "pool", "lobby", "location"];
pub const POSITIVE: [&str; 6] = ["nice", "great", "excellent", "friendly", "clean", "helpful"];
pub const NEGATIVE: [&str; 4] = ["dirty", "rude", "noisy", "small"];
pub const ADVERBS: [&str; 3] = ["very", "extremely", "really"];
const PLACES: [&str; 3] = ["lagoon", "city", "beach"];

fn chunk_of(tag: &str) -> &'static str {
    match tag {
        "DT" | "PRP" | "CD" => "B-NP",
        t if t.starts_with("NN") || t.starts_with("JJ") => "I-NP",
        t if t.starts_with("VB") => "B-VP",
        t if t.starts_with("RB") => "B-ADVP",
        _ => "O",
    }
}

fn sentence(items: &[(&str, &str)]) -> Sentence {
    Sentence {
        tokens: items.iter().map(|(w, _)| w.to_string()).collect(),
        pos_tags: items.iter().map(|(_, t)| t.to_string()).collect(),
        chunk_tags: items.iter().map(|(_, t)| chunk_of(t).to_string()).collect(),
        aspects: Vec::new(),
        labels: None,
    }
}

pub fn seed_words() -> SeedWords {
    let mut s = SeedWords::new();
    for a in ASPECTS {
        s.insert(a, [a]).expect("nonempty");
    }
    s
}

pub fn lexicon() -> Lexicon {
    Lexicon::new(POSITIVE, NEGATIVE)
}

/// Unlabeled, POS-tagged review sentences built from a handful of templates.
pub fn review_sentences<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Sentence> {
    let mut out = Vec::with_capacity(n);
    let pick = |rng: &mut R, xs: &[&'static str]| *xs.choose(rng).expect("nonempty");
    for _ in 0..n {
        let a = pick(rng, &ASPECTS);
        let b = pick(rng, &ASPECTS);
        let pos = pick(rng, &POSITIVE);
        let pos2 = pick(rng, &POSITIVE);
        let neg = pick(rng, &NEGATIVE);
        let adv = pick(rng, &ADVERBS);
        let num = ["2", "3", "4"][rng.gen_range(0..3)];
        let items: Vec<(&str, &str)> = match rng.gen_range(0..6) {
            0 => vec![("the", "DT"), (a, "NN"), ("was", "VBD"), (adv, "RB"), (pos, "JJ")],
            1 => vec![(pos, "JJ"), (a, "NN"), ("and", "CC"), (pos2, "JJ"), (b, "NN")],
            2 => vec![("the", "DT"), (a, "NN"), ("was", "VBD"), ("not", "RB"), (pos, "JJ")],
            3 => vec![
                ("we", "PRP"),
                ("stayed", "VBD"),
                (num, "CD"),
                ("nights", "NNS"),
                ("and", "CC"),
                ("the", "DT"),
                (a, "NN"),
                ("was", "VBD"),
                (neg, "JJ"),
            ],
            4 => vec![
                ("the", "DT"),
                (a, "NN"),
                ("provided", "VBD"),
                ("a", "DT"),
                (pos, "JJ"),
                ("view", "NN"),
                ("of", "IN"),
                ("the", "DT"),
                (pick(rng, &PLACES), "NN"),
            ],
            _ => vec![
                ("the", "DT"),
                (a, "NN"),
                ("was", "VBD"),
                (pos, "JJ"),
                ("but", "CC"),
                ("the", "DT"),
                (b, "NN"),
                ("was", "VBD"),
                (neg, "JJ"),
            ],
        };
        out.push(sentence(&items));
    }
    out
}

/// Review sentences labeled by the rule-based labeler; sentences without a
/// span are dropped and replaced until `n` are collected.
pub fn weakly_labeled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Sentence> {
    let (seeds, lex) = (seed_words(), lexicon());
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        for s in review_sentences(n - out.len(), rng) {
            let l = label_sentence(&s, &seeds, &lex);
            if !l.skipped() {
                out.push(l.sentence);
            }
        }
    }
    out
}

/// Sentences of four clauses `the N was ADJ` joined by `and`, where one or
/// two clauses carry an aspect on their noun. Tokens `N was ADJ` of aspect
/// clauses are labeled 1. Nouns and adjectives are drawn from the same pools
/// for every clause, so only the aspect positions tell the clauses apart.
pub fn distance_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Sentence> {
    const CLAUSES: usize = 4;
    let adjectives: Vec<&str> = POSITIVE.iter().chain(NEGATIVE.iter()).copied().collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = if rng.gen_bool(0.7) { 2 } else { 1 };
        let mut clause_ids: Vec<usize> = (0..CLAUSES).collect();
        clause_ids.shuffle(rng);
        let chosen = &clause_ids[..k];
        let mut items = Vec::new();
        let mut labels = Vec::new();
        let mut aspects = Vec::new();
        for c in 0..CLAUSES {
            if c > 0 {
                items.push(("and", "CC"));
                labels.push(0);
            }
            let noun = *ASPECTS.choose(rng).expect("nonempty");
            let adj = *adjectives.choose(rng).expect("nonempty");
            let on = chosen.contains(&c);
            if on {
                aspects.push(Aspect {
                    position: items.len() + 1,
                    name: noun.to_string(),
                });
            }
            items.extend([("the", "DT"), (noun, "NN"), ("was", "VBD"), (adj, "JJ")]);
            let l = u8::from(on);
            labels.extend([0, l, l, l]);
        }
        let mut s = sentence(&items);
        s.aspects = aspects;
        s.labels = Some(labels);
        out.push(s);
    }
    out
}

/// GloVe-style text with one random vector per word.
pub fn embedding_text<R: Rng + ?Sized, S: AsRef<str>>(words: &[S], dim: usize, rng: &mut R) -> String {
    let mut out = String::new();
    for w in words {
        out.push_str(w.as_ref());
        for _ in 0..dim {
            let _ = write!(out, " {:.5}", rng.gen_range(-0.5..0.5));
        }
        out.push('\n');
    }
    out
}
