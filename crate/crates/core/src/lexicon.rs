//! The word → terminal dictionary, literal extraction and dictionary audit.
//!
//! Dictionary files hold one line per terminal:
//!
//! ```text
//! # comment
//! insert,add,prepend,put -> INSERT
//! round trip -> ROUND_TRIP
//! ```
//!
//! Keys are case-insensitive and may span several words. Quoted tokens
//! instantiate every `<STRING>` terminal and number tokens every `<INTEGER>`
//! terminal without needing an entry.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::dsl::{Grammar, LiteralClass, Program, TermId, TerminalKind};
use crate::error::{Error, Result};
use crate::nlp::{numeric_value, PosTag, Sentence};

/// A dictionary hit: a terminal template, with its payload for literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hit {
    pub term: TermId,
    pub payload: Option<String>,
}

impl Hit {
    /// `T(□, …, □)`, or the literal itself.
    pub fn template(&self, g: &Grammar) -> Program {
        match &self.payload {
            Some(p) => Program::literal(g.decl(self.term).name.clone(), p.clone()),
            None => Program::template(g, self.term),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: BTreeMap<String, BTreeSet<TermId>>,
    max_words: usize,
}

fn normalize_key(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(g: &Grammar, text: &str) -> Result<Dictionary> {
        let mut d = Dictionary::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (words, term) = content.split_once("->").ok_or_else(|| Error::DictionarySyntax {
                line,
                message: format!("expected `words -> TERMINAL`, got `{content}`"),
            })?;
            let term_name = term.trim();
            let term = g
                .terminal(term_name)
                .ok_or_else(|| Error::UnknownTerminal(term_name.to_string()))?;
            match g.decl(term).kind {
                TerminalKind::Tuple { .. } | TerminalKind::Literal(_) => {
                    return Err(Error::DictionarySyntax {
                        line,
                        message: format!("`{term_name}` cannot take dictionary words"),
                    })
                }
                _ => {}
            }
            for w in words.split(',') {
                let key = normalize_key(w);
                if key.is_empty() {
                    return Err(Error::DictionarySyntax {
                        line,
                        message: "empty word".into(),
                    });
                }
                d.insert(&key, term);
            }
        }
        Ok(d)
    }

    /// One line per terminal in grammar order, words sorted.
    pub fn save(&self, g: &Grammar) -> String {
        let mut by_term: BTreeMap<TermId, Vec<&str>> = BTreeMap::new();
        for (k, terms) in &self.entries {
            for &t in terms {
                by_term.entry(t).or_default().push(k);
            }
        }
        let mut out = String::new();
        for (t, words) in by_term {
            out.push_str(&words.join(","));
            out.push_str(" -> ");
            out.push_str(&g.decl(t).name);
            out.push('\n');
        }
        out
    }

    pub fn insert(&mut self, phrase: &str, term: TermId) -> bool {
        let key = normalize_key(phrase);
        if key.is_empty() {
            return false;
        }
        self.max_words = self.max_words.max(key.split(' ').count());
        self.entries.entry(key).or_default().insert(term)
    }

    pub fn remove(&mut self, phrase: &str, term: TermId) -> bool {
        let key = normalize_key(phrase);
        let Some(set) = self.entries.get_mut(&key) else {
            return false;
        };
        let removed = set.remove(&term);
        if set.is_empty() {
            self.entries.remove(&key);
            self.max_words = self.entries.keys().map(|k| k.split(' ').count()).max().unwrap_or(0);
        }
        removed
    }

    /// Number of (word, terminal) pairs.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, TermId)> {
        self.entries
            .iter()
            .flat_map(|(k, ts)| ts.iter().map(move |&t| (k.as_str(), t)))
    }

    pub fn terms_for(&self, phrase: &str) -> Option<&BTreeSet<TermId>> {
        self.entries.get(&normalize_key(phrase))
    }

    /// Copy without the given (phrase, terminal) pairs.
    pub fn without<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, TermId)>) -> Dictionary {
        let mut d = self.clone();
        for (k, t) in pairs {
            d.remove(k, t);
        }
        d
    }

    /// Dictionary hits for every position of `s`.
    pub fn analyze(&self, g: &Grammar, s: &Sentence) -> Lookup {
        let n = s.len();
        let mut hits = vec![Vec::new(); n];
        let mut keys: Vec<Option<String>> = vec![None; n];
        let mut consumed = vec![false; n];
        let strings: Vec<TermId> = g.literal_terminals(LiteralClass::String).collect();
        let integers: Vec<TermId> = g.literal_terminals(LiteralClass::Integer).collect();
        let lower: Vec<String> = s.tokens.iter().map(|t| t.lower()).collect();
        let mut i = 0;
        while i < n {
            let tok = &s.tokens[i];
            if tok.is_quoted {
                hits[i] = strings
                    .iter()
                    .map(|&term| Hit {
                        term,
                        payload: Some(tok.text.clone()),
                    })
                    .collect();
                keys[i] = Some("<str>".into());
                i += 1;
                continue;
            }
            let mut matched = 0;
            let longest = self.max_words.min(n - i);
            for len in (1..=longest).rev() {
                if s.tokens[i..i + len].iter().any(|t| t.is_quoted) {
                    continue;
                }
                let key = lower[i..i + len].join(" ");
                if let Some(terms) = self.entries.get(&key) {
                    hits[i].extend(terms.iter().map(|&term| Hit { term, payload: None }));
                    keys[i] = Some(key);
                    matched = len;
                    break;
                }
            }
            if matched <= 1 {
                if let Some(v) = numeric_value(&tok.text) {
                    hits[i].extend(integers.iter().map(|&term| Hit {
                        term,
                        payload: Some(v.to_string()),
                    }));
                    if matched == 0 {
                        keys[i] = Some("<num>".into());
                    }
                }
            }
            for c in consumed.iter_mut().take(i + matched.max(1)).skip(i + 1) {
                *c = true;
            }
            i += matched.max(1);
        }
        for h in &mut hits {
            h.sort();
            h.dedup();
        }
        Lookup {
            hits,
            keys,
            pos: s.tokens.iter().map(|t| t.pos).collect(),
            consumed,
        }
    }

    /// `NLDict(S[i])` for one position.
    pub fn lookup(&self, g: &Grammar, s: &Sentence, i: usize) -> Vec<Hit> {
        self.analyze(g, s).hits.swap_remove(i)
    }
}

/// Per-position dictionary hits for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lookup {
    hits: Vec<Vec<Hit>>,
    keys: Vec<Option<String>>,
    pos: Vec<PosTag>,
    consumed: Vec<bool>,
}

impl Lookup {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn hits(&self, i: usize) -> &[Hit] {
        &self.hits[i]
    }

    pub fn is_usable(&self, i: usize) -> bool {
        !self.hits[i].is_empty()
    }

    pub fn usable(&self) -> Vec<usize> {
        (0..self.hits.len()).filter(|&i| self.is_usable(i)).collect()
    }

    /// The matched dictionary key, `<str>` or `<num>`; classifier feature for the word.
    pub fn key(&self, i: usize) -> Option<&str> {
        self.keys[i].as_deref()
    }

    pub fn pos(&self, i: usize) -> PosTag {
        self.pos[i]
    }

    /// Whether position `i` is the tail of a multi-word match.
    pub fn is_consumed(&self, i: usize) -> bool {
        self.consumed[i]
    }

    /// Positions whose hits include `term` with the given payload.
    pub fn positions_for(&self, term: TermId, payload: Option<&str>) -> Vec<usize> {
        (0..self.hits.len())
            .filter(|&i| {
                self.hits[i]
                    .iter()
                    .any(|h| h.term == term && h.payload.as_deref() == payload)
            })
            .collect()
    }
}

/// Seed synonyms: `word: syn, syn` per line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Synonyms {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Synonyms {
    pub fn load(text: &str) -> Result<Synonyms> {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (head, rest) = content.split_once(':').ok_or_else(|| Error::DictionarySyntax {
                line: idx + 1,
                message: format!("expected `word: synonym, ...`, got `{content}`"),
            })?;
            let head = normalize_key(head);
            let set = map.entry(head).or_default();
            for s in rest.split(',') {
                let s = normalize_key(s);
                if !s.is_empty() {
                    set.insert(s);
                }
            }
        }
        Ok(Synonyms { map })
    }

    pub fn of(&self, word: &str) -> impl Iterator<Item = &str> {
        self.map
            .get(&normalize_key(word))
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }
}

/// A first dictionary from terminal names and seed synonyms: `START_WITH`
/// contributes the phrase "start with", and each seed word adds its synonyms.
pub fn bootstrap_dictionary(g: &Grammar, synonyms: &Synonyms) -> Dictionary {
    let mut d = Dictionary::new();
    for (id, decl) in g.terminals() {
        if !matches!(decl.kind, TerminalKind::Function { .. } | TerminalKind::Constant) {
            continue;
        }
        let phrase = decl.name.to_lowercase().replace('_', " ");
        d.insert(&phrase, id);
        for s in synonyms.of(&phrase) {
            d.insert(s, id);
        }
    }
    d
}

/// Adds a user-chosen (word, terminal) pair and the word's synonyms.
pub fn apply_suggestion(d: &mut Dictionary, synonyms: &Synonyms, word: &str, term: TermId) -> usize {
    let mut added = usize::from(d.insert(word, term));
    for s in synonyms.of(word) {
        added += usize::from(d.insert(s, term));
    }
    added
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditGap {
    pub pair: usize,
    pub sentence: String,
    /// Terminals of the program that no word of the sentence can supply.
    pub terminals: Vec<String>,
    /// Words of the sentence not mapped to anything.
    pub words: Vec<String>,
}

/// Reports training pairs that have no witness map, with the terminals that
/// lack a supporting word and the words still free to carry them.
pub fn audit(g: &Grammar, d: &Dictionary, corpus: &[(Sentence, Program)]) -> Vec<AuditGap> {
    let mut gaps = Vec::new();
    for (idx, (s, p)) in corpus.iter().enumerate() {
        let lookup = d.analyze(g, s);
        match crate::synth::witness_maps_with(g, &lookup, p, crate::synth::DEFAULT_WITNESS_CAP) {
            Ok(maps) if !maps.is_empty() => continue,
            Err(Error::WitnessCapExceeded { .. }) => continue,
            _ => {}
        }
        let mut terminals = BTreeSet::new();
        let mut needed: BTreeMap<(TermId, Option<String>), usize> = BTreeMap::new();
        for occ in crate::synth::required_occurrences(g, p) {
            *needed.entry(occ).or_default() += 1;
        }
        for ((term, payload), count) in &needed {
            if lookup.positions_for(*term, payload.as_deref()).len() < *count {
                terminals.insert(g.decl(*term).name.clone());
            }
        }
        let words = s
            .tokens
            .iter()
            .filter(|t| !lookup.is_usable(t.index) && !lookup.is_consumed(t.index) && t.pos != PosTag::Punct)
            .map(|t| t.lower())
            .collect();
        gaps.push(AuditGap {
            pair: idx,
            sentence: s.raw.clone(),
            terminals: terminals.into_iter().collect(),
            words,
        });
    }
    gaps
}
