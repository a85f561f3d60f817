//! Sentences, vocabularies, preprocessing and the column corpus format.
//!
//! A corpus file holds one token per line with five tab-separated columns
//! `TOKEN POS CHUNK ASPECT LABEL`. `ASPECT` is `-` or the name of the aspect
//! the token mentions; `LABEL` is `0`, `1` or `-` (unlabeled). A blank line
//! ends a sentence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An aspect mention: the token index and the aspect it belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Aspect {
    pub position: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub chunk_tags: Vec<String>,
    /// Strictly increasing by position.
    pub aspects: Vec<Aspect>,
    /// Binary labels; 1 marks a token inside an aspect-specific opinion expression.
    pub labels: Option<Vec<u8>>,
}

impl Sentence {
    pub fn new(
        tokens: Vec<String>,
        pos_tags: Vec<String>,
        chunk_tags: Vec<String>,
        aspects: Vec<Aspect>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let s = Sentence {
            tokens,
            pos_tags,
            chunk_tags,
            aspects,
            labels,
        };
        s.validate()?;
        Ok(s)
    }

    /// Builds a sentence from whitespace-separated `token/POS` pairs; chunk tags
    /// default to `O`. Handy for fixtures.
    pub fn from_tagged(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut pos = Vec::new();
        for item in text.split_whitespace() {
            let (tok, tag) = item
                .rsplit_once('/')
                .ok_or_else(|| Error::domain(format!("`{item}` is not token/TAG")))?;
            tokens.push(tok.to_string());
            pos.push(tag.to_string());
        }
        let chunks = vec!["O".to_string(); tokens.len()];
        Sentence::new(tokens, pos, chunks, Vec::new(), None)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn aspect_positions(&self) -> Vec<usize> {
        self.aspects.iter().map(|a| a.position).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.tokens.len();
        if t == 0 {
            return Err(Error::domain("sentence has no tokens"));
        }
        if self.pos_tags.len() != t || self.chunk_tags.len() != t {
            return Err(Error::dim(
                "sentence",
                &[t],
                &[self.pos_tags.len(), self.chunk_tags.len()],
            ));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != t {
                return Err(Error::dim("sentence labels", &[t], &[labels.len()]));
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::domain("labels must be 0 or 1"));
            }
        }
        let mut prev: Option<usize> = None;
        for a in &self.aspects {
            if a.position >= t {
                return Err(Error::domain(format!(
                    "aspect position {} out of range for length {t}",
                    a.position
                )));
            }
            if prev.is_some_and(|p| p >= a.position) {
                return Err(Error::domain("aspect positions must be strictly increasing"));
            }
            prev = Some(a.position);
        }
        Ok(())
    }
}

/// Reserved vocabulary entries.
pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const NUM: usize = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NUM_TOKEN: &str = "NUM";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    tokens: Vec<String>,
    counts: Vec<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from any token stream. Tokens seen fewer than
    /// `min_count` times are left out and will map to [`UNK`]. Entries are
    /// ordered by descending frequency, then lexicographically.
    pub fn from_tokens<'a, I>(tokens: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for tok in tokens {
            *freq.entry(tok).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|&(tok, c)| c >= min_count && !is_reserved(tok))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Vocabulary::reserved_only();
        for (tok, c) in kept {
            vocab.push(tok.to_string(), c);
        }
        vocab
    }

    /// Token vocabulary over a training corpus.
    pub fn build(corpus: &[Sentence], min_count: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::domain("cannot build a vocabulary from an empty corpus"));
        }
        Ok(Self::from_tokens(
            corpus.iter().flat_map(|s| s.tokens.iter().map(String::as_str)),
            min_count,
        ))
    }

    /// Rebuilds a vocabulary from its token list (as persisted in model files).
    pub fn from_token_list(tokens: Vec<String>, counts: Vec<usize>) -> Result<Self> {
        if tokens.len() < 3
            || tokens[PAD] != PAD_TOKEN
            || tokens[UNK] != UNK_TOKEN
            || tokens[NUM] != NUM_TOKEN
            || counts.len() != tokens.len()
        {
            return Err(Error::domain("token list does not start with the reserved entries"));
        }
        let index: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::domain("duplicate vocabulary entry"));
        }
        Ok(Vocabulary {
            index,
            tokens,
            counts,
        })
    }

    fn reserved_only() -> Self {
        let mut v = Vocabulary {
            index: HashMap::new(),
            tokens: Vec::new(),
            counts: Vec::new(),
        };
        v.push(PAD_TOKEN.to_string(), 0);
        v.push(UNK_TOKEN.to_string(), 0);
        v.push(NUM_TOKEN.to_string(), 0);
        v
    }

    fn push(&mut self, tok: String, count: usize) {
        self.index.insert(tok.clone(), self.tokens.len());
        self.tokens.push(tok);
        self.counts.push(count);
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_reserved(tok: &str) -> bool {
    tok == PAD_TOKEN || tok == UNK_TOKEN || tok == NUM_TOKEN
}

/// `sign? digits (',' digits)* ('.' digits)?`
pub fn is_cardinal(tok: &str) -> bool {
    let body = tok.strip_prefix(['+', '-']).unwrap_or(tok);
    let (int_part, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    int_part.split(',').all(digits) && frac.is_none_or(digits)
}

/// Lowercases every token and replaces cardinal numbers with `NUM`. The
/// `NUM` symbol itself is left alone, which makes the function idempotent.
pub fn preprocess<S: AsRef<str>>(raw: &[S]) -> Vec<String> {
    raw.iter()
        .map(|t| {
            let t = t.as_ref();
            if t == NUM_TOKEN || is_cardinal(t) {
                NUM_TOKEN.to_string()
            } else {
                t.to_lowercase()
            }
        })
        .collect()
}

/// Applies [`preprocess`] to the tokens of a sentence, keeping everything else.
pub fn preprocess_sentence(s: &Sentence) -> Sentence {
    Sentence {
        tokens: preprocess(&s.tokens),
        ..s.clone()
    }
}

/// Cuts a sentence to at most `max_len` tokens, dropping aspects beyond the cut.
pub fn truncate(s: &Sentence, max_len: usize) -> Sentence {
    let max_len = max_len.max(1);
    if s.len() <= max_len {
        return s.clone();
    }
    Sentence {
        tokens: s.tokens[..max_len].to_vec(),
        pos_tags: s.pos_tags[..max_len].to_vec(),
        chunk_tags: s.chunk_tags[..max_len].to_vec(),
        aspects: s
            .aspects
            .iter()
            .filter(|a| a.position < max_len)
            .cloned()
            .collect(),
        labels: s.labels.as_ref().map(|l| l[..max_len].to_vec()),
    }
}

struct Pending {
    start_line: usize,
    tokens: Vec<String>,
    pos: Vec<String>,
    chunks: Vec<String>,
    aspects: Vec<Aspect>,
    labels: Vec<Option<u8>>,
}

impl Pending {
    fn new(start_line: usize) -> Self {
        Pending {
            start_line,
            tokens: Vec::new(),
            pos: Vec::new(),
            chunks: Vec::new(),
            aspects: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn finish(self, path: &str) -> Result<Sentence> {
        let labels = if self.labels.iter().all(Option::is_none) {
            None
        } else if self.labels.iter().all(Option::is_some) {
            Some(self.labels.into_iter().flatten().collect())
        } else {
            return Err(Error::Parse {
                path: path.to_string(),
                line: self.start_line,
                msg: "sentence mixes labeled and unlabeled tokens".into(),
            });
        };
        Ok(Sentence {
            tokens: self.tokens,
            pos_tags: self.pos,
            chunk_tags: self.chunks,
            aspects: self.aspects,
            labels,
        })
    }
}

/// Parses corpus text. `origin` is used in error messages.
pub fn parse_conll(text: &str, origin: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(p) = cur.take() {
                out.push(p.finish(origin)?);
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(line_no, format!("expected 5 tab-separated columns, found {}", cols.len())));
        }
        if let Some(c) = cols.iter().position(|c| c.is_empty() || c.trim() != *c) {
            return Err(err(line_no, format!("column {} is empty or padded with whitespace", c + 1)));
        }
        let p = cur.get_or_insert_with(|| Pending::new(line_no));
        let idx = p.tokens.len();
        p.tokens.push(cols[0].to_string());
        p.pos.push(cols[1].to_string());
        p.chunks.push(cols[2].to_string());
        if cols[3] != "-" {
            p.aspects.push(Aspect {
                position: idx,
                name: cols[3].to_string(),
            });
        }
        p.labels.push(match cols[4] {
            "0" => Some(0),
            "1" => Some(1),
            "-" => None,
            other => return Err(err(line_no, format!("label `{other}` is not 0, 1 or -"))),
        });
    }
    if let Some(p) = cur.take() {
        out.push(p.finish(origin)?);
    }
    Ok(out)
}

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, &path.display().to_string())
}

pub fn format_conll(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        let mut aspects = s.aspects.iter().peekable();
        for t in 0..s.len() {
            let aspect = match aspects.peek() {
                Some(a) if a.position == t => aspects.next().map(|a| a.name.as_str()).unwrap_or("-"),
                _ => "-",
            };
            let label = match &s.labels {
                Some(l) => if l[t] == 1 { "1" } else { "0" },
                None => "-",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                s.tokens[t], s.pos_tags[t], s.chunk_tags[t], aspect, label
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_conll(sentences: &[Sentence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_conll(sentences)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sent(tokens: &[&str]) -> Sentence {
        let n = tokens.len();
        Sentence::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            vec!["NN".into(); n],
            vec!["O".into(); n],
            vec![],
            None,
        )
        .unwrap()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(preprocess(&["The", "Room"]), vec!["the", "room"]);
        assert_eq!(preprocess(&["5", "rooms", "4.5"]), vec!["NUM", "rooms", "NUM"]);
        assert_eq!(preprocess(&["num"]), vec!["num"]);
        assert_eq!(preprocess(&["-1,200.50", "+3", "2nd", "1.2.3", ".5", "5."]),
            vec!["NUM", "NUM", "2nd", "1.2.3", ".5", "5."]);
    }

    #[test]
    fn reserved_num_symbol_is_a_fixed_point() {
        let once = preprocess(&["5"]);
        assert_eq!(preprocess(&once), once);
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(toks in proptest::collection::vec("[A-Za-z0-9.,+-]{1,6}", 1..8)) {
            let once = preprocess(&toks);
            prop_assert_eq!(preprocess(&once), once);
        }
    }

    #[test]
    fn vocabulary_min_count() {
        let corpus = vec![sent(&["a", "a", "b", "c"]), sent(&["a", "b"])];
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert!(v.contains("a") && v.contains("b"));
        assert_eq!(v.lookup("c"), UNK);
        assert_eq!(v.lookup("a"), 3);
        assert_eq!(v.counts()[v.lookup("a")], 3);

        let v1 = Vocabulary::build(&corpus, 1).unwrap();
        assert_ne!(v1.lookup("c"), UNK);
        assert_eq!(v1.lookup("unseen"), UNK);
        assert_eq!(v1.lookup(NUM_TOKEN), NUM);
        assert!(Vocabulary::build(&[], 2).is_err());
    }

    #[test]
    fn singleton_word_maps_to_unk() {
        let corpus = vec![sent(&["the", "view", "of", "the", "lagoon"])];
        let v = Vocabulary::build(&corpus, 2).unwrap();
        assert_eq!(v.lookup("lagoon"), UNK);
        assert_ne!(v.lookup("the"), UNK);
    }

    #[test]
    fn conll_parse_single_sentence() {
        let text = "the\tDT\tB-NP\t-\t0\nroom\tNN\tI-NP\troom\t1\nrocks\tVBZ\tB-VP\t-\t1\n";
        let s = parse_conll(text, "x").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[0].aspect_positions(), vec![1]);
        assert_eq!(s[0].labels, Some(vec![0, 1, 1]));
        assert!(parse_conll("", "x").unwrap().is_empty());
    }

    #[test]
    fn conll_errors_carry_line_numbers() {
        let ragged = "a\tDT\tO\t-\t0\nb\tNN\tO\t-\n";
        match parse_conll(ragged, "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_label = "\n\na\tDT\tO\t-\t2\n";
        match parse_conll(bad_label, "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let empty_aspect = "a\tDT\tO\t\t0\n";
        assert!(matches!(parse_conll(empty_aspect, "f"), Err(Error::Parse { line: 1, .. })));
        let mixed = "a\tDT\tO\t-\t0\nb\tNN\tO\t-\t-\n";
        assert!(matches!(parse_conll(mixed, "f"), Err(Error::Parse { .. })));
    }

    #[test]
    fn truncate_rules() {
        let toks: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let mut s = sent(&toks.iter().map(String::as_str).collect::<Vec<_>>());
        s.aspects = vec![
            Aspect { position: 3, name: "a".into() },
            Aspect { position: 55, name: "b".into() },
        ];
        s.labels = Some(vec![1; 60]);
        let t = truncate(&s, 50);
        assert_eq!(t.len(), 50);
        assert_eq!(t.aspect_positions(), vec![3]);
        assert_eq!(t.labels.as_ref().unwrap().len(), 50);
        let short = sent(&["a", "b", "c"]);
        assert_eq!(truncate(&short, 50), short);
    }

    #[test]
    fn sentence_validation() {
        let mut s = sent(&["a", "b"]);
        s.aspects = vec![
            Aspect { position: 1, name: "x".into() },
            Aspect { position: 1, name: "y".into() },
        ];
        assert!(s.validate().is_err());
        s.aspects = vec![Aspect { position: 2, name: "x".into() }];
        assert!(s.validate().is_err());
        s.aspects.clear();
        s.labels = Some(vec![0]);
        assert!(s.validate().is_err());
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec("[a-z]{1,5}", n),
                proptest::collection::vec("(NN|JJ|VB|RB|DT)", n),
                proptest::collection::vec(proptest::option::of("[a-z]{1,4}"), n),
                proptest::option::of(proptest::collection::vec(0u8..2, n)),
            )
                .prop_map(|(tokens, pos, asp, labels)| Sentence {
                    chunk_tags: vec!["O".into(); tokens.len()],
                    aspects: asp
                        .into_iter()
                        .enumerate()
                        .filter_map(|(i, a)| a.map(|name| Aspect { position: i, name }))
                        .collect(),
                    tokens,
                    pos_tags: pos,
                    labels,
                })
        })
    }

    proptest! {
        #[test]
        fn conll_round_trip(corpus in proptest::collection::vec(arb_sentence(), 0..6)) {
            let text = format_conll(&corpus);
            let back = parse_conll(&text, "mem").unwrap();
            prop_assert_eq!(&back, &corpus);
            prop_assert_eq!(format_conll(&back), text);
        }
    }
}
