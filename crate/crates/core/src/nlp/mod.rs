//! Tokenization, tagging and a shallow constituency tree.

mod tree;

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use tree::{NodeId, NodeLabel, ParseTree, Shape, TreeNode};

use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../assets/english.pos");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Prep,
    Det,
    Num,
    Quoted,
    Punct,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 10] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Prep,
        PosTag::Det,
        PosTag::Num,
        PosTag::Quoted,
        PosTag::Punct,
        PosTag::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Prep => "PREP",
            PosTag::Det => "DET",
            PosTag::Num => "NUM",
            PosTag::Quoted => "QUOTED",
            PosTag::Punct => "PUNCT",
            PosTag::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<PosTag> {
        PosTag::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    /// Surface text; for quoted tokens the text between the quotes.
    pub text: String,
    pub pos: PosTag,
    pub is_quoted: bool,
    /// Byte span in the raw sentence, quotes included.
    pub span: (usize, usize),
}

impl Token {
    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analysis {
    pub sentence: Sentence,
    pub tree: ParseTree,
}

/// Anything that can turn text into tagged tokens plus a tree over them.
pub trait Analyzer: Send + Sync {
    fn analyze(&self, text: &str) -> Result<Analysis>;
}

/// Integer value of a numeric token (`12`, `4th`, `three`).
pub fn numeric_value(text: &str) -> Option<i64> {
    let lower = text.to_ascii_lowercase();
    let digits = lower
        .strip_suffix("st")
        .or_else(|| lower.strip_suffix("nd"))
        .or_else(|| lower.strip_suffix("rd"))
        .or_else(|| lower.strip_suffix("th"))
        .unwrap_or(&lower);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return digits.parse().ok();
    }
    const WORDS: [(&str, &str, i64); 10] = [
        ("one", "first", 1),
        ("two", "second", 2),
        ("three", "third", 3),
        ("four", "fourth", 4),
        ("five", "fifth", 5),
        ("six", "sixth", 6),
        ("seven", "seventh", 7),
        ("eight", "eighth", 8),
        ("nine", "ninth", 9),
        ("ten", "tenth", 10),
    ];
    WORDS
        .iter()
        .find(|(c, o, _)| lower == *c || lower == *o)
        .map(|&(_, _, n)| n)
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r#""(?P<q1>[^"]*)"|“(?P<q2>[^”]*)”|"#,
            r"(?P<num>\d+(?:st|nd|rd|th)?)\b|",
            r"(?P<word>[A-Za-z][A-Za-z0-9_'\-]*)|",
            r"(?P<punct>[^\sA-Za-z0-9])"
        ))
        .unwrap()
    })
}

/// Lexicon plus suffix-rule tagger and a deterministic chunker.
#[derive(Debug, Clone)]
pub struct BuiltinAnalyzer {
    lexicon: HashMap<String, PosTag>,
}

impl Default for BuiltinAnalyzer {
    fn default() -> Self {
        BuiltinAnalyzer::with_lexicon(DEFAULT_LEXICON).expect("bundled tagger lexicon is valid")
    }
}

impl BuiltinAnalyzer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a `.pos` lexicon: `word<TAB>TAG` per line, `#` comments.
    pub fn with_lexicon(text: &str) -> Result<Self> {
        let mut lexicon = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| Error::Config(format!("tagger lexicon line {}: expected `word<TAB>tag`", i + 1)))?;
            let tag = PosTag::parse(tag.trim())
                .ok_or_else(|| Error::Config(format!("tagger lexicon line {}: unknown tag `{}`", i + 1, tag.trim())))?;
            lexicon.entry(word.trim().to_lowercase()).or_insert(tag);
        }
        Ok(BuiltinAnalyzer { lexicon })
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut out = Vec::new();
        for caps in token_regex().captures_iter(text) {
            let whole = caps.get(0).unwrap();
            let span = (whole.start(), whole.end());
            let index = out.len();
            let (text, pos, is_quoted) = if let Some(q) = caps.name("q1").or_else(|| caps.name("q2")) {
                (q.as_str().to_string(), PosTag::Quoted, true)
            } else if let Some(n) = caps.name("num") {
                (n.as_str().to_string(), PosTag::Num, false)
            } else if let Some(w) = caps.name("word") {
                (w.as_str().to_string(), self.tag_word(w.as_str()), false)
            } else {
                let p = caps.name("punct").unwrap().as_str();
                let tag = if p.chars().all(|c| c.is_ascii_punctuation()) {
                    PosTag::Punct
                } else {
                    PosTag::Other
                };
                (p.to_string(), tag, false)
            };
            out.push(Token {
                index,
                text,
                pos,
                is_quoted,
                span,
            });
        }
        out
    }

    fn tag_word(&self, word: &str) -> PosTag {
        let lower = word.to_lowercase();
        if let Some(&t) = self.lexicon.get(&lower) {
            return t;
        }
        if numeric_value(&lower).is_some() {
            return PosTag::Num;
        }
        if lower.len() > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
            return PosTag::Verb;
        }
        if lower.len() > 3 && lower.ends_with("ly") {
            return PosTag::Adv;
        }
        PosTag::Noun
    }

    /// Groups tags into NP / PP / VP chunks under a root `S`.
    pub fn chunk(tags: &[PosTag]) -> Shape {
        fn np_tag(t: PosTag) -> bool {
            matches!(t, PosTag::Det | PosTag::Adj | PosTag::Num | PosTag::Noun | PosTag::Quoted)
        }
        fn wrap(label: NodeLabel, mut kids: Vec<Shape>) -> Shape {
            if kids.len() == 1 {
                kids.pop().unwrap()
            } else {
                Shape::Node(label, kids)
            }
        }
        fn np(tags: &[PosTag], i: &mut usize) -> Option<Shape> {
            let start = *i;
            while *i < tags.len() && np_tag(tags[*i]) {
                *i += 1;
            }
            (*i > start).then(|| wrap(NodeLabel::NP, tags[start..*i].iter().map(|&t| Shape::Leaf(t)).collect()))
        }
        fn pp(tags: &[PosTag], i: &mut usize) -> Shape {
            let mut kids = vec![Shape::Leaf(tags[*i])];
            *i += 1;
            if let Some(n) = np(tags, i) {
                kids.push(n);
            }
            wrap(NodeLabel::PP, kids)
        }

        if tags.len() == 1 {
            return Shape::Leaf(tags[0]);
        }
        let mut chunks = Vec::new();
        let mut i = 0;
        while i < tags.len() {
            match tags[i] {
                PosTag::Verb | PosTag::Adv => {
                    let mut kids = Vec::new();
                    while i < tags.len() && matches!(tags[i], PosTag::Verb | PosTag::Adv) {
                        kids.push(Shape::Leaf(tags[i]));
                        i += 1;
                    }
                    if i < tags.len() {
                        if tags[i] == PosTag::Prep {
                            kids.push(pp(tags, &mut i));
                        } else if let Some(n) = np(tags, &mut i) {
                            kids.push(n);
                        }
                    }
                    chunks.push(wrap(NodeLabel::VP, kids));
                }
                PosTag::Prep => chunks.push(pp(tags, &mut i)),
                t if np_tag(t) => chunks.push(np(tags, &mut i).unwrap()),
                t => {
                    chunks.push(Shape::Leaf(t));
                    i += 1;
                }
            }
        }
        Shape::Node(NodeLabel::S, chunks)
    }
}

impl Analyzer for BuiltinAnalyzer {
    fn analyze(&self, text: &str) -> Result<Analysis> {
        let tokens = self.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        let tags: Vec<PosTag> = tokens.iter().map(|t| t.pos).collect();
        let tree = ParseTree::from_shape(&Self::chunk(&tags))?;
        Ok(Analysis {
            sentence: Sentence {
                raw: text.to_string(),
                tokens,
            },
            tree,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_sentence_tokens() {
        let a = BuiltinAnalyzer::new().analyze(r#"Print all lines that do not contain "834""#).unwrap();
        let toks = &a.sentence.tokens;
        assert_eq!(toks.len(), 8);
        assert_eq!(toks[0].pos, PosTag::Verb);
        assert_eq!(toks[7].pos, PosTag::Quoted);
        assert_eq!(toks[7].text, "834");
        assert!(toks[7].is_quoted);
        assert_eq!(a.tree.leaf_count(), 8);
    }

    #[test]
    fn single_quoted_token() {
        let a = BuiltinAnalyzer::new().analyze(r#""x""#).unwrap();
        assert_eq!(a.sentence.len(), 1);
        assert_eq!(a.sentence.tokens[0].pos, PosTag::Quoted);
        assert_eq!(a.tree.len(), 1);
    }

    #[test]
    fn empty_input() {
        assert_eq!(BuiltinAnalyzer::new().analyze("").unwrap_err(), Error::EmptyInput);
        assert_eq!(BuiltinAnalyzer::new().analyze("   ").unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn numbers_and_ordinals() {
        let toks = BuiltinAnalyzer::new().tokenize("Remove 1st \"&\" from the 4th line, 10 times.");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Remove", "1st", "&", "from", "the", "4th", "line", ",", "10", "times", "."]);
        assert_eq!(toks[1].pos, PosTag::Num);
        assert_eq!(toks[7].pos, PosTag::Punct);
        assert_eq!(numeric_value("1st"), Some(1));
        assert_eq!(numeric_value("fourth"), Some(4));
        assert_eq!(numeric_value("foo"), None);
    }

    #[test]
    fn suffix_rules() {
        let a = BuiltinAnalyzer::new();
        assert_eq!(a.tag_word("jumping"), PosTag::Verb);
        assert_eq!(a.tag_word("quickly"), PosTag::Adv);
        assert_eq!(a.tag_word("zebra"), PosTag::Noun);
    }

    #[test]
    fn chunks_verb_phrase() {
        use PosTag::*;
        let shape = BuiltinAnalyzer::chunk(&[Verb, Det, Noun, Other, Verb, Adv, Verb, Quoted]);
        let Shape::Node(NodeLabel::S, kids) = shape else { panic!() };
        assert_eq!(kids.len(), 3);
        assert!(matches!(&kids[0], Shape::Node(NodeLabel::VP, k) if k.len() == 2));
        assert!(matches!(&kids[2], Shape::Node(NodeLabel::VP, k) if k.len() == 4));
    }

    #[test]
    fn deterministic() {
        let a = BuiltinAnalyzer::new();
        let s = "Add a \"*\" at the beginning of the line in which the string \"P.O. BOX\" occurs";
        assert_eq!(a.analyze(s).unwrap(), a.analyze(s).unwrap());
    }

    #[test]
    fn lexicon_errors() {
        assert!(BuiltinAnalyzer::with_lexicon("foo\tBOGUS").is_err());
        let a = BuiltinAnalyzer::with_lexicon("# c\nfoo\tVERB\n").unwrap();
        assert_eq!(a.tag_word("FOO"), PosTag::Verb);
    }
}
