//! `.pairs` corpus files: blocks of `S: sentence` and `P: program` lines
//! separated by blank lines. Lines starting with `#` are comments.

use crate::dsl::{accepts, parse_program, Grammar, Program};
use crate::error::{Error, Result};
use crate::nlp::{Analysis, Analyzer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPair {
    pub line: usize,
    pub sentence: String,
    pub program: String,
}

pub fn parse_pairs(text: &str) -> Result<Vec<RawPair>> {
    let mut out = Vec::new();
    let mut sentence: Option<(usize, String)> = None;
    let mut program: Option<String> = None;
    let flush = |sentence: &mut Option<(usize, String)>, program: &mut Option<String>, out: &mut Vec<RawPair>, line: usize| {
        match (sentence.take(), program.take()) {
            (Some((l, s)), Some(p)) => {
                out.push(RawPair {
                    line: l,
                    sentence: s,
                    program: p,
                });
                Ok(())
            }
            (None, None) => Ok(()),
            (Some((l, _)), None) => Err(Error::CorpusSyntax {
                line: l,
                message: "sentence without a `P:` line".into(),
            }),
            (None, Some(_)) => Err(Error::CorpusSyntax {
                line,
                message: "program without an `S:` line".into(),
            }),
        }
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.starts_with('#') {
            continue;
        }
        if t.is_empty() {
            flush(&mut sentence, &mut program, &mut out, line)?;
            continue;
        }
        if let Some(s) = t.strip_prefix("S:") {
            if sentence.is_some() {
                return Err(Error::CorpusSyntax {
                    line,
                    message: "second `S:` line in one block".into(),
                });
            }
            sentence = Some((line, s.trim().to_string()));
        } else if let Some(p) = t.strip_prefix("P:") {
            match &mut program {
                Some(_) => {
                    return Err(Error::CorpusSyntax {
                        line,
                        message: "second `P:` line in one block".into(),
                    })
                }
                None => program = Some(p.trim().to_string()),
            }
        } else if let Some(p) = &mut program {
            p.push(' ');
            p.push_str(t);
        } else {
            return Err(Error::CorpusSyntax {
                line,
                message: format!("expected `S:` or `P:`, got `{t}`"),
            });
        }
    }
    flush(&mut sentence, &mut program, &mut out, text.lines().count())?;
    Ok(out)
}

/// A sentence with its analysis and desired program.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub text: String,
    pub analysis: Analysis,
    pub program: Program,
}

/// Parses, analyzes and type-checks every pair of a corpus file.
pub fn load_corpus(g: &Grammar, analyzer: &dyn Analyzer, text: &str) -> Result<Vec<TrainingPair>> {
    parse_pairs(text)?
        .into_iter()
        .map(|raw| {
            let program = parse_program(g, &raw.program).map_err(|e| Error::CorpusSyntax {
                line: raw.line,
                message: e.to_string(),
            })?;
            if !accepts(g, &program) {
                return Err(Error::CorpusSyntax {
                    line: raw.line,
                    message: format!("program `{program}` is not a valid complete program"),
                });
            }
            let analysis = analyzer.analyze(&raw.sentence).map_err(|e| Error::CorpusSyntax {
                line: raw.line,
                message: e.to_string(),
            })?;
            Ok(TrainingPair {
                text: raw.sentence,
                analysis,
                program,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks() {
        let text = "# comment\nS: print lines\nP: PRINT(LINES)\n\nS: two\nP: F(\n  X)\n";
        let p = parse_pairs(text).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].sentence, "print lines");
        assert_eq!(p[1].program, "F( X)");
        assert_eq!(p[1].line, 5);
    }

    #[test]
    fn malformed() {
        assert!(matches!(parse_pairs("S: a\n\nP: b\n"), Err(Error::CorpusSyntax { line: 1, .. })));
        assert!(matches!(parse_pairs("hello\n"), Err(Error::CorpusSyntax { line: 1, .. })));
        assert!(parse_pairs("").unwrap().is_empty());
    }
}
