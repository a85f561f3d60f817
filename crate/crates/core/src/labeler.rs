//! Rule-based weak labeling of opinion expressions.
//!
//! Aspects are located by seed-word match. Around each aspect a ±5 window
//! is searched for sentiment terms, a minimal span is chosen from POS rules
//! and then grown with four extension rules until nothing changes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use crate::data::{Aspect, Sentence};
use crate::error::{Error, Result};

/// Half-width of the sentiment search window.
pub const WINDOW: usize = 5;
/// How far before a positive term a negator may appear.
pub const NEGATOR_RANGE: usize = 3;

pub const DEFAULT_NEGATORS: [&str; 8] = ["not", "don't", "dont", "never", "no", "didn't", "wasn't", "isn't"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WordClass {
    Noun,
    Adjective,
    Adverb,
    Verb,
    Other,
}

impl WordClass {
    /// Coarse class of a Penn Treebank tag.
    pub fn of(tag: &str) -> Self {
        if tag.starts_with("NN") {
            WordClass::Noun
        } else if tag.starts_with("JJ") {
            WordClass::Adjective
        } else if tag.starts_with("RB") {
            WordClass::Adverb
        } else if tag.starts_with("VB") {
            WordClass::Verb
        } else {
            WordClass::Other
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub positive: HashSet<String>,
    pub negative: HashSet<String>,
    pub negators: HashSet<String>,
}

impl Lexicon {
    pub fn new<I, J>(positive: I, negative: J) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
        J: IntoIterator,
        J::Item: AsRef<str>,
    {
        let lower = |w: &str| w.to_lowercase();
        Lexicon {
            positive: positive.into_iter().map(|w| lower(w.as_ref())).collect(),
            negative: negative.into_iter().map(|w| lower(w.as_ref())).collect(),
            negators: DEFAULT_NEGATORS.iter().map(|w| w.to_string()).collect(),
        }
    }

    pub fn with_negators<I>(mut self, negators: I) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        self.negators = negators.into_iter().map(|w| w.as_ref().to_lowercase()).collect();
        self
    }

    pub fn load(positive: impl AsRef<Path>, negative: impl AsRef<Path>, negators: Option<&Path>) -> Result<Self> {
        let lex = Lexicon::new(read_word_list(positive)?, read_word_list(negative)?);
        match negators {
            Some(p) => Ok(lex.with_negators(read_word_list(p)?)),
            None => Ok(lex),
        }
    }
}

/// One word per line; blank lines and lines starting with `;` are skipped.
pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with(';'))
        .map(str::to_lowercase)
        .collect()
}

pub fn read_word_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_word_list(&text))
}

/// Aspect name to seed words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedWords {
    aspects: BTreeMap<String, BTreeSet<String>>,
}

impl SeedWords {
    pub fn new() -> Self {
        SeedWords::default()
    }

    pub fn insert<I>(&mut self, aspect: &str, words: I) -> Result<()>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        let words: BTreeSet<String> = words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return Err(Error::domain(format!("aspect `{aspect}` has no seed words")));
        }
        self.aspects.entry(aspect.to_string()).or_default().extend(words);
        Ok(())
    }

    /// Parses `aspect<TAB>word1,word2,...` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut seeds = SeedWords::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, words) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: "expected `aspect<TAB>word1,word2,...`".into(),
            })?;
            seeds.insert(name.trim(), words.split(',')).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(seeds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SeedWords::parse(&text, &path.display().to_string())
    }

    /// The first aspect (by name) that lists `word` as a seed.
    pub fn aspect_of(&self, word: &str) -> Option<&str> {
        self.aspects
            .iter()
            .find(|(_, ws)| ws.contains(word))
            .map(|(name, _)| name.as_str())
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpinionSpan {
    /// Inclusive.
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub aspect_position: usize,
    pub polarity: Polarity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Before,
    After,
}

/// Every token equal (case-insensitively) to a seed word.
pub fn locate_aspects<S: AsRef<str>>(tokens: &[S], seeds: &SeedWords) -> Vec<Aspect> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            seeds.aspect_of(&t.as_ref().to_lowercase()).map(|name| Aspect {
                position: i,
                name: name.to_string(),
            })
        })
        .collect()
}

fn window(aspect: usize, len: usize) -> (usize, usize) {
    (aspect.saturating_sub(WINDOW), (aspect + WINDOW).min(len - 1))
}

/// Polarity of token `i` if it is a sentiment term. A positive term with a
/// negator up to three tokens before it (not leaving `lo`) reads negative.
fn polarity_at<S: AsRef<str>>(tokens: &[S], i: usize, lo: usize, lex: &Lexicon) -> Option<Polarity> {
    let w = tokens[i].as_ref().to_lowercase();
    if lex.positive.contains(&w) {
        let from = i.saturating_sub(NEGATOR_RANGE).max(lo);
        let negated = (from..i).any(|j| lex.negators.contains(&tokens[j].as_ref().to_lowercase()));
        Some(if negated { Polarity::Negative } else { Polarity::Positive })
    } else if lex.negative.contains(&w) {
        Some(Polarity::Negative)
    } else {
        None
    }
}

/// Nearest sentiment term to the aspect within the window; ties go left.
pub fn find_sentiment<S: AsRef<str>>(tokens: &[S], aspect: usize, lex: &Lexicon) -> Option<(usize, Polarity)> {
    let before = find_sentiment_on(tokens, aspect, lex, Side::Before);
    let after = find_sentiment_on(tokens, aspect, lex, Side::After);
    match (before, after) {
        (Some(b), Some(a)) => Some(if a.0 - aspect < aspect - b.0 { a } else { b }),
        (b, a) => b.or(a),
    }
}

/// Nearest sentiment term on one side of the aspect within the window.
pub fn find_sentiment_on<S: AsRef<str>>(tokens: &[S], aspect: usize, lex: &Lexicon, side: Side) -> Option<(usize, Polarity)> {
    if aspect >= tokens.len() {
        return None;
    }
    let (lo, hi) = window(aspect, tokens.len());
    match side {
        Side::Before => (lo..aspect).rev().find_map(|i| polarity_at(tokens, i, lo, lex).map(|p| (i, p))),
        Side::After => (aspect + 1..=hi).find_map(|i| polarity_at(tokens, i, lo, lex).map(|p| (i, p))),
    }
}

/// Minimal span from the POS rules, or the `[term, aspect]` hull when no
/// qualifying adjective or adverb exists in the window.
pub fn select_boundary(s: &Sentence, aspect: usize, term: usize, polarity: Polarity) -> OpinionSpan {
    let (lo, hi) = window(aspect, s.len());
    let class = |i: usize| WordClass::of(&s.pos_tags[i]);
    let hull = OpinionSpan {
        start: term.min(aspect),
        end: term.max(aspect),
        aspect_position: aspect,
        polarity,
    };
    let span = |start, end| OpinionSpan {
        start,
        end,
        aspect_position: aspect,
        polarity,
    };
    if term < aspect {
        match class(aspect) {
            WordClass::Noun => (lo..aspect)
                .find(|&i| class(i) == WordClass::Adjective)
                .map_or(hull, |i| span(i, aspect)),
            WordClass::Verb => (lo..aspect)
                .rev()
                .find(|&i| class(i) == WordClass::Adverb)
                .map_or(hull, |i| span(i, aspect)),
            _ => hull,
        }
    } else {
        (aspect + 1..=hi)
            .find(|&i| class(i) == WordClass::Adjective)
            .map_or(hull, |i| span(aspect, i))
    }
}

/// Grows a span with the extension rules until it stops changing.
pub fn extend_boundary(span: OpinionSpan, s: &Sentence) -> OpinionSpan {
    let class = |i: usize| WordClass::of(&s.pos_tags[i]);
    let last = s.len() - 1;
    let mut sp = span;
    loop {
        let before = sp;
        // (i) leading verb before the aspect takes a preceding adverb
        if sp.start < sp.aspect_position
            && sp.start > 0
            && class(sp.start) == WordClass::Verb
            && class(sp.start - 1) == WordClass::Adverb
        {
            sp.start -= 1;
        }
        // (ii) trailing adjective takes the run of nouns after it
        if class(sp.end) == WordClass::Adjective {
            while sp.end < last && class(sp.end + 1) == WordClass::Noun {
                sp.end += 1;
            }
        }
        // (iii) trailing adverb takes a following verb
        if class(sp.end) == WordClass::Adverb && sp.end < last && class(sp.end + 1) == WordClass::Verb {
            sp.end += 1;
        }
        // (iv) trailing noun takes the run of nouns after it
        if class(sp.end) == WordClass::Noun {
            while sp.end < last && class(sp.end + 1) == WordClass::Noun {
                sp.end += 1;
            }
        }
        if sp == before {
            return sp;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    /// The input sentence with located aspects and labels filled in.
    pub sentence: Sentence,
    /// Extended spans, sorted and deduplicated.
    pub spans: Vec<OpinionSpan>,
}

impl Labeling {
    /// Sentences without any span are left out of training data.
    pub fn skipped(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Labels every token inside any aspect's opinion span. Each aspect is
/// searched on both sides, so an aspect can own a span before and after it.
pub fn label_sentence(s: &Sentence, seeds: &SeedWords, lex: &Lexicon) -> Labeling {
    let aspects = locate_aspects(&s.tokens, seeds);
    let mut spans = BTreeSet::new();
    for a in &aspects {
        for side in [Side::Before, Side::After] {
            if let Some((term, pol)) = find_sentiment_on(&s.tokens, a.position, lex, side) {
                let span = select_boundary(s, a.position, term, pol);
                spans.insert(extend_boundary(span, s));
            }
        }
    }
    let spans: Vec<OpinionSpan> = spans.into_iter().collect();
    let mut labels = vec![0u8; s.len()];
    for sp in &spans {
        labels[sp.start..=sp.end].iter_mut().for_each(|l| *l = 1);
    }
    Labeling {
        sentence: Sentence {
            aspects,
            labels: Some(labels),
            ..s.clone()
        },
        spans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::new(
            [
                "nice", "excellent", "plentiful", "friendly", "helpful", "great", "clean", "spacious", "loved",
                "nicely", "beautiful",
            ],
            ["dirty", "rude", "bad"],
        )
    }

    fn seeds(pairs: &[(&str, &[&str])]) -> SeedWords {
        let mut s = SeedWords::new();
        for (name, words) in pairs {
            s.insert(name, words.iter()).unwrap();
        }
        s
    }

    fn ones(labels: &[u8]) -> Vec<usize> {
        labels.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect()
    }

    #[test]
    fn word_classes() {
        assert_eq!(WordClass::of("NNS"), WordClass::Noun);
        assert_eq!(WordClass::of("JJR"), WordClass::Adjective);
        assert_eq!(WordClass::of("RBS"), WordClass::Adverb);
        assert_eq!(WordClass::of("VBD"), WordClass::Verb);
        assert_eq!(WordClass::of("DT"), WordClass::Other);
    }

    #[test]
    fn locating_aspects() {
        let sd = seeds(&[("food", &["food"]), ("lobby", &["lobby"]), ("internet", &["internet", "wifi"])]);
        let a = locate_aspects(&["the", "food", "was", "great"], &sd);
        assert_eq!(a, vec![Aspect { position: 1, name: "food".into() }]);
        assert!(locate_aspects(&["nothing", "here"], &sd).is_empty());
        let toks = ["lobby", "had", "internet", "but", "only", "in", "lobby"];
        let a = locate_aspects(&toks, &sd);
        assert_eq!(a.iter().map(|a| a.position).collect::<Vec<_>>(), vec![0, 2, 6]);
        let names: BTreeSet<_> = a.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names.len(), 2);
    }

    #[test]
    fn sentiment_search() {
        let l = lex();
        assert_eq!(find_sentiment(&["room", "was", "nice"], 0, &l), Some((2, Polarity::Positive)));
        let far = ["room", "a", "b", "c", "d", "e", "nice"];
        assert_eq!(find_sentiment(&far, 0, &l), None);
        assert_eq!(
            find_sentiment(&["staff", "was", "not", "helpful"], 0, &l),
            Some((3, Polarity::Negative))
        );
        assert_eq!(find_sentiment(&["rude", "staff"], 1, &l), Some((0, Polarity::Negative)));
        // equal distance: the left term wins
        assert_eq!(find_sentiment(&["nice", "room", "dirty"], 1, &l), Some((0, Polarity::Positive)));
        // negator too far back
        assert_eq!(
            find_sentiment(&["not", "the", "x", "y", "nice", "room"], 5, &l),
            Some((4, Polarity::Positive))
        );
    }

    #[test]
    fn worked_example_after_aspect() {
        let s = Sentence::from_tagged("The/DT room/NN provided/VBD a/DT nice/JJ view/NN of/IN the/DT lagoon/NN").unwrap();
        let span = select_boundary(&s, 1, 4, Polarity::Positive);
        assert_eq!((span.start, span.end), (1, 4));
        let ext = extend_boundary(span, &s);
        assert_eq!((ext.start, ext.end), (1, 5));
        let out = label_sentence(&s, &seeds(&[("room", &["room"])]), &lex());
        assert_eq!(ones(out.sentence.labels.as_ref().unwrap()), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn adjective_before_noun_aspect() {
        let s = Sentence::from_tagged("excellent/JJ location/NN close/RB to/TO everything/NN").unwrap();
        let span = select_boundary(&s, 1, 0, Polarity::Positive);
        assert_eq!((span.start, span.end), (0, 1));
        let s = Sentence::from_tagged("a/DT clean/JJ spacious/JJ room/NN").unwrap();
        let span = select_boundary(&s, 3, 2, Polarity::Positive);
        assert_eq!((span.start, span.end), (1, 3));
    }

    #[test]
    fn adverb_before_verb_aspect() {
        let s = Sentence::from_tagged("really/RB very/RB nicely/RB cleaned/VBN").unwrap();
        let span = select_boundary(&s, 3, 2, Polarity::Positive);
        assert_eq!((span.start, span.end), (2, 3));
    }

    #[test]
    fn fallback_hull() {
        let s = Sentence::from_tagged("loved/VBD the/DT room/NN").unwrap();
        let span = select_boundary(&s, 2, 0, Polarity::Positive);
        assert_eq!((span.start, span.end), (0, 2));
    }

    #[test]
    fn rule_i_leading_verb_takes_adverb() {
        let s = Sentence::from_tagged("really/RB loved/VBD the/DT room/NN").unwrap();
        let span = select_boundary(&s, 3, 1, Polarity::Positive);
        assert_eq!((span.start, span.end), (1, 3));
        let ext = extend_boundary(span, &s);
        assert_eq!((ext.start, ext.end), (0, 3));
        // not applied when the first word is the aspect itself
        let s = Sentence::from_tagged("really/RB cleaned/VBD nicely/RB").unwrap();
        let sp = OpinionSpan { start: 1, end: 2, aspect_position: 1, polarity: Polarity::Positive };
        assert_eq!(extend_boundary(sp, &s), sp);
    }

    #[test]
    fn rule_ii_adjective_takes_nouns() {
        let s = Sentence::from_tagged("room/NN had/VBD great/JJ sea/NN views/NNS ./.").unwrap();
        let sp = OpinionSpan { start: 0, end: 2, aspect_position: 0, polarity: Polarity::Positive };
        assert_eq!(extend_boundary(sp, &s).end, 4);
    }

    #[test]
    fn rule_iii_adverb_takes_verb() {
        let s = Sentence::from_tagged("the/DT room/NN was/VBD nicely/RB decorated/VBN").unwrap();
        let span = select_boundary(&s, 1, 3, Polarity::Positive);
        assert_eq!((span.start, span.end), (1, 3));
        assert_eq!(extend_boundary(span, &s).end, 4);
    }

    #[test]
    fn rule_iv_noun_takes_nouns() {
        let s = Sentence::from_tagged("waterfalls/NNS in/IN lobby/NN area/NN").unwrap();
        let sp = OpinionSpan { start: 0, end: 2, aspect_position: 2, polarity: Polarity::Positive };
        assert_eq!(extend_boundary(sp, &s).end, 3);
        let s = Sentence::from_tagged("beautiful/JJ lobby/NN area/NN").unwrap();
        let out = label_sentence(&s, &seeds(&[("lobby", &["lobby"])]), &lex());
        assert_eq!(ones(out.sentence.labels.as_ref().unwrap()), vec![0, 1, 2]);
    }

    #[test]
    fn span_at_sentence_edge_is_unchanged() {
        let s = Sentence::from_tagged("great/JJ food/NN").unwrap();
        let sp = OpinionSpan { start: 0, end: 1, aspect_position: 1, polarity: Polarity::Positive };
        assert_eq!(extend_boundary(sp, &s), sp);
    }

    #[test]
    fn two_aspect_sentence_covers_both_expressions() {
        let s = Sentence::from_tagged(
            "the/DT food/NN was/VBD excellent/JJ and/CC plentiful/JJ and/CC the/DT waitstaff/NN \
             was/VBD extremely/RB friendly/JJ and/CC helpful/JJ",
        )
        .unwrap();
        let sd = seeds(&[("food", &["food"]), ("service", &["waitstaff"])]);
        let out = label_sentence(&s, &sd, &lex());
        let got = ones(out.sentence.labels.as_ref().unwrap());
        for i in 1..=5 {
            assert!(got.contains(&i), "food expression misses {i}");
        }
        for i in 8..=11 {
            assert!(got.contains(&i), "waitstaff expression misses {i}");
        }
        assert!(!got.contains(&0));
        assert_eq!(out.sentence.aspect_positions(), vec![1, 8]);
    }

    #[test]
    fn negated_phrase() {
        let s = Sentence::from_tagged("the/DT staff/NN was/VBD not/RB helpful/JJ").unwrap();
        let out = label_sentence(&s, &seeds(&[("staff", &["staff"])]), &lex());
        assert_eq!(out.spans.len(), 1);
        assert_eq!(out.spans[0].polarity, Polarity::Negative);
        assert_eq!(ones(out.sentence.labels.as_ref().unwrap()), vec![1, 2, 3, 4]);
    }

    #[test]
    fn no_sentiment_means_skip() {
        let s = Sentence::from_tagged("the/DT food/NN arrived/VBD").unwrap();
        let out = label_sentence(&s, &seeds(&[("food", &["food"])]), &lex());
        assert!(out.skipped());
        assert_eq!(out.sentence.labels, Some(vec![0, 0, 0]));
        let out = label_sentence(&s, &seeds(&[("room", &["room"])]), &lex());
        assert!(out.skipped());
    }

    #[test]
    fn overlapping_spans_merge() {
        let s = Sentence::from_tagged("great/JJ food/NN and/CC drinks/NNS were/VBD nice/JJ").unwrap();
        let sd = seeds(&[("food", &["food"]), ("drinks", &["drinks"])]);
        let out = label_sentence(&s, &sd, &lex());
        assert!(out.spans.len() >= 2);
        let got = ones(out.sentence.labels.as_ref().unwrap());
        assert_eq!(got, (0..=5).collect::<Vec<_>>());
    }

    #[test]
    fn file_formats() {
        let words = parse_word_list(";; comment\n\nGood\n  nice \n");
        assert_eq!(words, vec!["good", "nice"]);
        let sd = SeedWords::parse("food\tfood,Meal\nroom\troom\n", "seeds").unwrap();
        assert_eq!(sd.aspect_of("meal"), Some("food"));
        assert_eq!(sd.len(), 2);
        let err = SeedWords::parse("food food\n", "seeds.tsv").unwrap_err();
        assert!(err.to_string().starts_with("seeds.tsv:1:"));
        assert!(SeedWords::parse("food\t ,\n", "s").is_err());
        assert!(Lexicon::load("/nonexistent/pos.txt", "/nonexistent/neg.txt", None).is_err());
    }

    const TAGS: [&str; 6] = ["NN", "JJ", "RB", "VBD", "DT", "IN"];
    const WORDS: [&str; 8] = ["food", "room", "nice", "dirty", "not", "the", "was", "very"];

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        prop::collection::vec((0..WORDS.len(), 0..TAGS.len()), 1..20).prop_map(|items| {
            let text: Vec<String> = items.iter().map(|&(w, t)| format!("{}/{}", WORDS[w], TAGS[t])).collect();
            Sentence::from_tagged(&text.join(" ")).unwrap()
        })
    }

    proptest! {
        #[test]
        fn labels_are_the_span_union(s in arb_sentence()) {
            let sd = seeds(&[("food", &["food"]), ("room", &["room"])]);
            let out = label_sentence(&s, &sd, &lex());
            let mut covered = BTreeSet::new();
            for sp in &out.spans {
                prop_assert!(sp.start <= sp.aspect_position && sp.aspect_position <= sp.end);
                prop_assert!(sp.end < s.len());
                covered.extend(sp.start..=sp.end);
            }
            let got: BTreeSet<usize> = ones(out.sentence.labels.as_ref().unwrap()).into_iter().collect();
            prop_assert_eq!(got, covered);
            prop_assert_eq!(label_sentence(&s, &sd, &lex()), out);
        }

        #[test]
        fn extension_is_monotone(s in arb_sentence(), a in 0usize..20, w in 0usize..5) {
            let a = a % s.len();
            let sp = OpinionSpan {
                start: a.saturating_sub(w),
                end: (a + w).min(s.len() - 1),
                aspect_position: a,
                polarity: Polarity::Positive,
            };
            let ext = extend_boundary(sp, &s);
            prop_assert!(ext.start <= sp.start && ext.end >= sp.end);
            prop_assert_eq!(extend_boundary(ext, &s), ext);
        }
    }
}
