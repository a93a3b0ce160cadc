//! Interpreter for the core of the text-editing language.
//!
//! Semantics are pinned in `docs/text-edit-semantics.md`. Positions are byte
//! offsets into the document text, and every region is a half-open span.

use serde::{Deserialize, Serialize};

use crate::dsl::{Arg, Program};
use crate::error::{Error, Result};

type Span = (usize, usize);

/// A text document with line and word views computed on demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDocument {
    pub text: String,
}

impl EditDocument {
    pub fn new(text: impl Into<String>) -> Self {
        EditDocument { text: text.into() }
    }

    /// Line spans, terminators excluded. A trailing newline does not open
    /// an extra empty line.
    pub fn lines(&self) -> Vec<Span> {
        line_spans(&self.text, (0, self.text.len()))
    }

    /// Maximal runs of non-whitespace characters.
    pub fn words(&self) -> Vec<Span> {
        word_spans(&self.text, (0, self.text.len()))
    }
}

fn line_spans(text: &str, region: Span) -> Vec<Span> {
    let mut out = Vec::new();
    if text.is_empty() {
        return out;
    }
    let mut start = 0;
    for (i, b) in text.bytes().enumerate() {
        if b == b'\n' {
            out.push((start, i));
            start = i + 1;
        }
    }
    if start < text.len() {
        out.push((start, text.len()));
    }
    out.into_iter()
        .filter(|&(s, e)| s < region.1 && e > region.0 || (s == e && s >= region.0 && s < region.1))
        .map(|(s, e)| (s.max(region.0), e.min(region.1)))
        .collect()
}

fn runs(text: &str, region: Span, keep: impl Fn(char) -> bool) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text[region.0..region.1].char_indices() {
        let at = region.0 + i;
        match (keep(c), open) {
            (true, None) => open = Some(at),
            (false, Some(s)) => {
                out.push((s, at));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, region.1));
    }
    out
}

fn word_spans(text: &str, region: Span) -> Vec<Span> {
    runs(text, region, |c| !c.is_whitespace())
}

fn arg(p: &Program, i: usize) -> Result<&Program> {
    match p.args.get(i) {
        Some(Arg::Filled(c)) => Ok(c),
        _ => Err(Error::Unsupported(format!("{} with a missing argument", p.terminal))),
    }
}

fn string_payload(p: &Program) -> Result<&str> {
    match (p.terminal.as_str(), &p.payload) {
        ("STRING", Some(s)) => Ok(s),
        _ => Err(Error::Unsupported(p.terminal.clone())),
    }
}

/// The matches of a token inside `region`.
fn token_matches(text: &str, token: &Program, region: Span) -> Result<Vec<Span>> {
    Ok(match token.terminal.as_str() {
        "STRING" => {
            let needle = string_payload(token)?;
            if needle.is_empty() {
                return Ok(Vec::new());
            }
            text[region.0..region.1]
                .match_indices(needle)
                .map(|(i, m)| (region.0 + i, region.0 + i + m.len()))
                .collect()
        }
        "WORDTOK" => word_spans(text, region),
        "NUMBERTOK" => runs(text, region, |c| c.is_ascii_digit()),
        "LINETOK" => line_spans(text, region),
        other => return Err(Error::Unsupported(other.to_string())),
    })
}

/// Whether the segment `seg` satisfies `cond`, with `ctx` as the enclosing region.
fn holds(text: &str, cond: &Program, seg: Span, ctx: Span) -> Result<bool> {
    Ok(match cond.terminal.as_str() {
        "ALWAYS" => true,
        "STARTSWITH" => token_matches(text, arg(cond, 0)?, seg)?.iter().any(|m| m.0 == seg.0),
        "ENDSWITH" => token_matches(text, arg(cond, 0)?, seg)?.iter().any(|m| m.1 == seg.1),
        "CONTAINS" => !token_matches(text, arg(cond, 0)?, seg)?.is_empty(),
        "AFTER" => token_matches(text, arg(cond, 0)?, ctx)?.iter().any(|m| m.1 <= seg.0),
        "BEFORE" => token_matches(text, arg(cond, 0)?, ctx)?.iter().any(|m| m.0 >= seg.1),
        "BETWEEN" => {
            let close = arg(cond, 1)?;
            if close.terminal != "TO" {
                return Err(Error::Unsupported(close.terminal.clone()));
            }
            let opens = token_matches(text, arg(cond, 0)?, ctx)?;
            let closes = token_matches(text, arg(close, 0)?, ctx)?;
            match opens.iter().rev().find(|m| m.1 <= seg.0) {
                Some(open) => match closes.iter().find(|m| m.0 >= open.1) {
                    Some(c) => c.0 >= seg.1,
                    None => false,
                },
                None => false,
            }
        }
        "NOT" => !holds(text, arg(cond, 0)?, seg, ctx)?,
        "AND" => holds(text, arg(cond, 0)?, seg, ctx)? && holds(text, arg(cond, 1)?, seg, ctx)?,
        "OR" => holds(text, arg(cond, 0)?, seg, ctx)? || holds(text, arg(cond, 1)?, seg, ctx)?,
        other => return Err(Error::Unsupported(other.to_string())),
    })
}

fn pick<T: Copy>(items: Vec<T>, occ: &Program) -> Result<Vec<T>> {
    Ok(match occ.terminal.as_str() {
        "ALL" => items,
        "FIRST" => items.first().copied().into_iter().collect(),
        "LAST" => items.last().copied().into_iter().collect(),
        "INTEGER" => {
            let n: i64 = occ
                .payload
                .as_deref()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::Unsupported("INTEGER without a value".into()))?;
            usize::try_from(n)
                .ok()
                .filter(|&n| n >= 1)
                .and_then(|n| items.get(n - 1).copied())
                .into_iter()
                .collect()
        }
        other => return Err(Error::Unsupported(other.to_string())),
    })
}

/// The selected units of an iteration scope, in document order.
fn scope_units(text: &str, scope: &Program) -> Result<Vec<Span>> {
    let whole = (0, text.len());
    match scope.terminal.as_str() {
        "DOCUMENT" => Ok(vec![whole]),
        "IterScope" => {
            let kind = arg(scope, 0)?;
            let cond = arg(scope, 1)?;
            let lines = line_spans(text, whole);
            let units: Vec<(Span, Span)> = match kind.terminal.as_str() {
                "LINESCOPE" => lines.iter().map(|&l| (l, whole)).collect(),
                "WORDSCOPE" => lines
                    .iter()
                    .flat_map(|&l| word_spans(text, l).into_iter().map(move |w| (w, l)))
                    .collect(),
                other => return Err(Error::Unsupported(other.to_string())),
            };
            let mut keep = Vec::new();
            for (u, ctx) in units {
                if holds(text, cond, u, ctx)? {
                    keep.push(u);
                }
            }
            pick(keep, arg(scope, 2)?)
        }
        other => Err(Error::Unsupported(other.to_string())),
    }
}

/// The selected matches of a `SelectStr` inside one unit.
fn select(text: &str, sel: &Program, unit: Span) -> Result<Vec<Span>> {
    if sel.terminal != "SelectStr" {
        return Err(Error::Unsupported(sel.terminal.clone()));
    }
    let cond = arg(sel, 1)?;
    let mut keep = Vec::new();
    for m in token_matches(text, arg(sel, 0)?, unit)? {
        if holds(text, cond, m, unit)? {
            keep.push(m);
        }
    }
    pick(keep, arg(sel, 2)?)
}

/// Whole lines are deleted with their terminator.
fn widen_line(text: &str, m: Span) -> Span {
    let starts_line = m.0 == 0 || text.as_bytes()[m.0 - 1] == b'\n';
    let ends_line = m.1 == text.len() || text.as_bytes()[m.1] == b'\n';
    if starts_line && ends_line && m.1 < text.len() {
        (m.0, m.1 + 1)
    } else {
        m
    }
}

fn merge(mut edits: Vec<(Span, String)>) -> Vec<(Span, String)> {
    edits.sort_by_key(|e| e.0);
    let mut merged: Vec<(Span, String)> = Vec::new();
    for (span, rep) in edits {
        match merged.last_mut() {
            Some((last, last_rep)) if span.0 <= last.1 => {
                last.1 = last.1.max(span.1);
                last_rep.push_str(&rep);
            }
            _ => merged.push((span, rep)),
        }
    }
    merged
}

fn apply_edits(text: &str, merged: Vec<(Span, String)>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for ((s, e), rep) in merged {
        out.push_str(&text[at..s]);
        out.push_str(&rep);
        at = e;
    }
    out.push_str(&text[at..]);
    out
}

/// Runs a text-editing command on a document. PRINT returns the selected
/// text, one match per line.
pub fn apply_text_edit(p: &Program, doc: &EditDocument) -> Result<EditDocument> {
    let text = doc.text.as_str();
    let cmd = p;
    let mut edits = Vec::new();
    match cmd.terminal.as_str() {
        "INSERT" => {
            let s = string_payload(arg(cmd, 0)?)?;
            let pos = arg(cmd, 1)?;
            for u in scope_units(text, arg(cmd, 2)?)? {
                let at = match pos.terminal.as_str() {
                    "START" => u.0,
                    "END" => u.1,
                    other => return Err(Error::Unsupported(other.to_string())),
                };
                edits.push(((at, at), s.to_string()));
            }
        }
        "REMOVE" => {
            let sel = arg(cmd, 0)?;
            let lines = arg(sel, 0)?.terminal == "LINETOK";
            for u in scope_units(text, arg(cmd, 1)?)? {
                for m in select(text, sel, u)? {
                    let m = if lines { widen_line(text, m) } else { m };
                    edits.push((m, String::new()));
                }
            }
            let mut merged = merge(edits);
            // the last line of a text without a final newline takes the preceding one
            if let Some(((s, e), _)) = merged.last_mut() {
                let whole_tail = *e == text.len() && *s > 0 && text.as_bytes()[*s - 1] == b'\n';
                if lines && whole_tail && !text.ends_with('\n') {
                    *s -= 1;
                }
            }
            return Ok(EditDocument::new(apply_edits(text, merged)));
        }
        "REPLACE" => {
            let sel = arg(cmd, 0)?;
            let by = arg(cmd, 1)?;
            if by.terminal != "BY" {
                return Err(Error::Unsupported(by.terminal.clone()));
            }
            let s = string_payload(arg(by, 0)?)?;
            for u in scope_units(text, arg(cmd, 2)?)? {
                for m in select(text, sel, u)? {
                    edits.push((m, s.to_string()));
                }
            }
        }
        "PRINT" => {
            let sel = arg(cmd, 0)?;
            let mut parts = Vec::new();
            for u in scope_units(text, arg(cmd, 1)?)? {
                for (s, e) in select(text, sel, u)? {
                    parts.push(&text[s..e]);
                }
            }
            return Ok(EditDocument::new(parts.join("\n")));
        }
        other => return Err(Error::Unsupported(other.to_string())),
    }
    Ok(EditDocument::new(apply_edits(text, merge(edits))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_program, Grammar};

    fn grammar() -> Grammar {
        Grammar::load(include_str!("../../../../domains/text-editing/grammar.dsl")).unwrap()
    }

    fn run(program: &str, doc: &str) -> Result<String> {
        let p = parse_program(&grammar(), program).unwrap();
        apply_text_edit(&p, &EditDocument::new(doc)).map(|d| d.text)
    }

    #[test]
    fn views() {
        let d = EditDocument::new("ab cd\n\nef\n");
        assert_eq!(d.lines(), vec![(0, 5), (6, 6), (7, 9)]);
        assert_eq!(d.words(), vec![(0, 2), (3, 5), (7, 9)]);
        for (s, e) in d.lines() {
            assert!(!d.text[s..e].contains('\n'));
        }
    }

    #[test]
    fn star_before_po_box_lines() {
        let out = run(
            r#"INSERT(STRING(*), START, IterScope(LINESCOPE, CONTAINS(STRING(P.O. BOX)), ALL))"#,
            "John Smith\nP.O. BOX 12\n",
        );
        assert_eq!(out.unwrap(), "John Smith\n*P.O. BOX 12\n");
    }

    #[test]
    fn golden() {
        let cases = [
            (
                "REMOVE(SelectStr(WORDTOK, ALWAYS, INTEGER(1)), IterScope(LINESCOPE, STARTSWITH(NUMBERTOK), ALL))",
                "12 apples here\nno change\n3 pears",
                " apples here\nno change\n pears",
            ),
            (
                "REPLACE(SelectStr(STRING(&), NOT(BETWEEN(STRING([), TO(STRING(])))), ALL), BY(STRING(&&)), DOCUMENT)",
                "a & b [c & d] & e",
                "a && b [c & d] && e",
            ),
            (
                "INSERT(STRING($), START, IterScope(LINESCOPE, NOT(STARTSWITH(STRING($))), ALL))",
                "$1\n2\n",
                "$1\n$2\n",
            ),
            (
                "INSERT(STRING(..???), END, IterScope(LINESCOPE, ALWAYS, INTEGER(2)))",
                "a\nb\nc",
                "a\nb..???\nc",
            ),
            (
                "REMOVE(SelectStr(LINETOK, STARTSWITH(STRING(#)), ALL), DOCUMENT)",
                "# one\nkeep\n# two",
                "keep",
            ),
            (
                "PRINT(SelectStr(LINETOK, NOT(CONTAINS(STRING(834))), ALL), DOCUMENT)",
                "a 834\nb\nc\n",
                "b\nc",
            ),
            (
                "REMOVE(SelectStr(WORDTOK, ALWAYS, LAST), IterScope(LINESCOPE, ALWAYS, ALL))",
                "a b c\nd e",
                "a b \nd ",
            ),
            (
                "PRINT(SelectStr(WORDTOK, BETWEEN(STRING(<url>), TO(STRING(</url>))), ALL), DOCUMENT)",
                "x <url> a b </url> y",
                "a\nb",
            ),
            (
                "INSERT(STRING(_IDM), END, IterScope(WORDSCOPE, AFTER(STRING(idiom:)), FIRST))",
                "idiom: break a leg",
                "idiom: break_IDM a leg",
            ),
            (
                "PRINT(SelectStr(NUMBERTOK, BEFORE(STRING(minutes)), ALL), DOCUMENT)",
                "wait 10 minutes",
                "10",
            ),
            (
                "REPLACE(SelectStr(STRING(foo), ALWAYS, INTEGER(2)), BY(STRING(bar)), IterScope(LINESCOPE, ALWAYS, ALL))",
                "foo foo foo\nfoo",
                "foo bar foo\nfoo",
            ),
            (
                "PRINT(SelectStr(LINETOK, AND(STARTSWITH(STRING(a)), ENDSWITH(STRING(b))), ALL), DOCUMENT)",
                "ab\nac\nb",
                "ab",
            ),
            (
                "REMOVE(SelectStr(LINETOK, OR(CONTAINS(STRING(TODO)), CONTAINS(STRING(FIXME))), ALL), DOCUMENT)",
                "a\nTODO x\nb\nFIXME",
                "a\nb",
            ),
        ];
        for (p, doc, want) in cases {
            assert_eq!(run(p, doc).unwrap(), want, "{p}");
        }
    }

    #[test]
    fn no_match_leaves_document() {
        let doc = "alpha\nbeta\n";
        assert_eq!(run("REMOVE(SelectStr(STRING(zzz), ALWAYS, ALL), DOCUMENT)", doc).unwrap(), doc);
    }

    #[test]
    fn replace_with_self_is_identity() {
        let doc = "banana\nalpha";
        assert_eq!(
            run("REPLACE(SelectStr(STRING(a), ALWAYS, ALL), BY(STRING(a)), DOCUMENT)", doc).unwrap(),
            doc
        );
    }

    #[test]
    fn unsupported_terminal_is_named() {
        let p = Program::apply("SWAP", vec![]);
        assert_eq!(
            apply_text_edit(&p, &EditDocument::new("x")),
            Err(Error::Unsupported("SWAP".into()))
        );
    }

    #[test]
    fn adjacent_line_removals_merge() {
        assert_eq!(
            run("REMOVE(SelectStr(LINETOK, CONTAINS(STRING(x)), ALL), DOCUMENT)", "a\nx1\nx2").unwrap(),
            "a"
        );
    }
}
