//! Bundled example domains and program previews.
//!
//! Each domain directory holds `grammar.dsl`, `dict.dict`, `corpus.pairs` and
//! `synonyms.txt`. The three shipped domains are compiled in; other
//! directories can be loaded at run time with [`load_domain_dir`].

mod text_edit;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{load_corpus, TrainingPair};
use crate::dsl::{Arg, Grammar, Program};
use crate::error::{Error, Result};
use crate::lexicon::{Dictionary, Synonyms};
use crate::nlp::Analyzer;

pub use text_edit::{apply_text_edit, EditDocument};

/// How programs of a domain are previewed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreviewKind {
    /// Programs run on a document.
    TextEdit,
    /// Programs are rendered as an outline.
    Describe,
}

#[derive(Debug, Clone)]
pub struct DomainAssets {
    pub name: String,
    pub grammar: Grammar,
    pub dictionary: Dictionary,
    pub synonyms: Synonyms,
    pub corpus_text: String,
    pub corpus: Vec<TrainingPair>,
    pub preview: PreviewKind,
}

/// Raw file contents of one domain.
#[derive(Debug, Clone, Copy)]
pub struct DomainSources<'a> {
    pub grammar: &'a str,
    pub dictionary: &'a str,
    pub corpus: &'a str,
    pub synonyms: &'a str,
}

macro_rules! bundled {
    ($dir:literal) => {
        DomainSources {
            grammar: include_str!(concat!("../../../../domains/", $dir, "/grammar.dsl")),
            dictionary: include_str!(concat!("../../../../domains/", $dir, "/dict.dict")),
            corpus: include_str!(concat!("../../../../domains/", $dir, "/corpus.pairs")),
            synonyms: include_str!(concat!("../../../../domains/", $dir, "/synonyms.txt")),
        }
    };
}

pub const BUILTIN_NAMES: [&str; 3] = ["text-editing", "automata", "atis"];

pub fn builtin_sources(name: &str) -> Option<DomainSources<'static>> {
    match name {
        "text-editing" => Some(bundled!("text-editing")),
        "automata" => Some(bundled!("automata")),
        "atis" => Some(bundled!("atis")),
        _ => None,
    }
}

fn preview_kind(name: &str) -> PreviewKind {
    if name == "text-editing" {
        PreviewKind::TextEdit
    } else {
        PreviewKind::Describe
    }
}

impl DomainAssets {
    pub fn from_sources(name: &str, src: DomainSources<'_>, analyzer: &dyn Analyzer) -> Result<DomainAssets> {
        let grammar = Grammar::load(src.grammar)?;
        let dictionary = Dictionary::load(&grammar, src.dictionary)?;
        let synonyms = Synonyms::load(src.synonyms)?;
        let corpus = load_corpus(&grammar, analyzer, src.corpus)?;
        Ok(DomainAssets {
            name: name.to_string(),
            grammar,
            dictionary,
            synonyms,
            corpus_text: src.corpus.to_string(),
            corpus,
            preview: preview_kind(name),
        })
    }

    /// Runs or renders a program for display.
    pub fn preview(&self, p: &Program, document: &str) -> Result<Preview> {
        match self.preview {
            PreviewKind::TextEdit => {
                apply_text_edit(p, &EditDocument::new(document)).map(|d| Preview::Document(d.text))
            }
            PreviewKind::Describe => Ok(Preview::Description(describe(p))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preview {
    Document(String),
    Description(String),
}

/// The three shipped domains, analyzed with `analyzer`.
pub fn builtin_domains(analyzer: &dyn Analyzer) -> BTreeMap<String, DomainAssets> {
    BUILTIN_NAMES
        .iter()
        .map(|&name| {
            let src = builtin_sources(name).expect("builtin name");
            let assets = DomainAssets::from_sources(name, src, analyzer)
                .unwrap_or_else(|e| panic!("bundled domain `{name}` is invalid: {e}"));
            (name.to_string(), assets)
        })
        .collect()
}

/// Loads `dir/{grammar.dsl, dict.dict, corpus.pairs, synonyms.txt}`. The
/// domain is named after the directory; a missing synonyms file is empty.
pub fn load_domain_dir(dir: &Path, analyzer: &dyn Analyzer) -> Result<DomainAssets> {
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad domain directory {}", dir.display())))?;
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).map_err(|e| Error::Io(format!("{}: {e}", dir.join(f).display())));
    let grammar = read("grammar.dsl")?;
    let dictionary = read("dict.dict")?;
    let corpus = read("corpus.pairs")?;
    let synonyms = if dir.join("synonyms.txt").exists() {
        read("synonyms.txt")?
    } else {
        String::new()
    };
    DomainAssets::from_sources(
        name,
        DomainSources {
            grammar: &grammar,
            dictionary: &dictionary,
            corpus: &corpus,
            synonyms: &synonyms,
        },
        analyzer,
    )
}

/// Every domain directory under `root`. A missing root yields no domains.
pub fn load_domains(root: &Path, analyzer: &dyn Analyzer) -> Result<BTreeMap<String, DomainAssets>> {
    let mut out = BTreeMap::new();
    if !root.is_dir() {
        return Ok(out);
    }
    let mut dirs: Vec<_> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("grammar.dsl").is_file())
        .collect();
    dirs.sort();
    for dir in dirs {
        let d = load_domain_dir(&dir, analyzer)?;
        out.insert(d.name.clone(), d);
    }
    Ok(out)
}

fn label(p: &Program) -> String {
    match &p.payload {
        Some(v) => format!("{} \"{v}\"", p.terminal.to_lowercase()),
        None => p.terminal.to_lowercase().replace('_', " "),
    }
}

/// An indented outline of a program, one node per line.
pub fn describe(p: &Program) -> String {
    fn go(p: &Program, depth: usize, out: &mut String) {
        let _ = writeln!(out, "{}{}", "  ".repeat(depth), label(p));
        for a in &p.args {
            match a {
                Arg::Filled(c) => go(c, depth + 1, out),
                Arg::Hole(t) => {
                    let _ = writeln!(out, "{}?{t}", "  ".repeat(depth + 1));
                }
            }
        }
    }
    let mut out = String::new();
    go(p, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::lexicon::audit;
    use crate::nlp::BuiltinAnalyzer;
    use crate::synth::synth_no_score;

    #[test]
    fn three_domains_load() {
        let all = builtin_domains(&BuiltinAnalyzer::new());
        assert_eq!(all.len(), 3);
        assert!(all.get("chess").is_none());
        let te = &all["text-editing"];
        let insert = te.grammar.terminal("INSERT").unwrap();
        let slots: Vec<&str> = te
            .grammar
            .decl(insert)
            .slots()
            .iter()
            .map(|&s| te.grammar.nonterminal_name(s))
            .collect();
        assert_eq!(slots, ["PString", "Position", "IterScope"]);
        assert!(te.corpus.len() >= 20);
        assert!(all["automata"].corpus.len() >= 10);
        assert!(all["atis"].corpus.len() >= 10);
    }

    #[test]
    fn even_difference_benchmark_is_shipped() {
        let all = builtin_domains(&BuiltinAnalyzer::new());
        let want = "ISEVEN(DIFF(COUNT(STRING(0)),COUNT(STRING(1))))";
        assert!(all["automata"].corpus.iter().any(|p| p.program.to_string() == want));
    }

    #[test]
    fn dictionaries_cover_their_corpora() {
        for d in builtin_domains(&BuiltinAnalyzer::new()).values() {
            let pairs: Vec<_> = d.corpus.iter().map(|p| (p.analysis.sentence.clone(), p.program.clone())).collect();
            let gaps = audit(&d.grammar, &d.dictionary, &pairs);
            assert!(gaps.is_empty(), "{}: {gaps:?}", d.name);
        }
    }

    #[test]
    fn desired_programs_are_enumerated() {
        for d in builtin_domains(&BuiltinAnalyzer::new()).values() {
            for pair in &d.corpus {
                let out = synth_no_score(&d.grammar, &d.dictionary, &pair.analysis.sentence).unwrap();
                assert!(out.contains_program(&d.grammar, &pair.program), "{}: {}", d.name, pair.text);
            }
        }
    }

    #[test]
    fn describe_outline() {
        let all = builtin_domains(&BuiltinAnalyzer::new());
        let g = &all["automata"].grammar;
        let p = parse_program(g, "ISEVEN(DIFF(COUNT(STRING(0)), COUNT(STRING(1))))").unwrap();
        assert_eq!(
            describe(&p),
            "iseven\n  diff\n    count\n      string \"0\"\n    count\n      string \"1\"\n"
        );
        assert!(matches!(all["automata"].preview(&p, "ignored"), Ok(Preview::Description(_))));
    }

    #[test]
    fn missing_root_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let none = load_domains(&dir.path().join("absent"), &BuiltinAnalyzer::new()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("automata");
        std::fs::create_dir(&root).unwrap();
        let src = builtin_sources("automata").unwrap();
        std::fs::write(root.join("grammar.dsl"), src.grammar).unwrap();
        std::fs::write(root.join("dict.dict"), src.dictionary).unwrap();
        std::fs::write(root.join("corpus.pairs"), src.corpus).unwrap();
        let all = load_domains(dir.path(), &BuiltinAnalyzer::new()).unwrap();
        assert_eq!(all["automata"].corpus.len(), 15);
    }
}
