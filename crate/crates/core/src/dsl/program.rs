//! Programs, partial programs and the s-expression syntax used to write them.

use std::fmt;

use crate::dsl::grammar::{Grammar, LiteralClass, NtId, TermId, TerminalKind};
use crate::error::{Error, Result};

/// A node of a (possibly partial) program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Program {
    pub terminal: String,
    /// Literal payload (`STRING(foo)`, `INTEGER(3)`).
    pub payload: Option<String>,
    pub args: Vec<Arg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arg {
    /// An unfilled slot of the named nonterminal type.
    Hole(String),
    Filled(Program),
}

impl Program {
    pub fn constant(name: impl Into<String>) -> Program {
        Program {
            terminal: name.into(),
            payload: None,
            args: Vec::new(),
        }
    }

    pub fn literal(name: impl Into<String>, payload: impl Into<String>) -> Program {
        Program {
            terminal: name.into(),
            payload: Some(payload.into()),
            args: Vec::new(),
        }
    }

    pub fn apply(name: impl Into<String>, args: Vec<Arg>) -> Program {
        Program {
            terminal: name.into(),
            payload: None,
            args,
        }
    }

    /// The template `T(□, …, □)` for a declared terminal.
    pub fn template(g: &Grammar, term: TermId) -> Program {
        let decl = g.decl(term);
        Program::apply(
            decl.name.clone(),
            decl.slots()
                .iter()
                .map(|&s| Arg::Hole(g.nonterminal_name(s).to_string()))
                .collect(),
        )
    }

    pub fn hole_count(&self) -> usize {
        self.args
            .iter()
            .map(|a| match a {
                Arg::Hole(_) => 1,
                Arg::Filled(p) => p.hole_count(),
            })
            .sum()
    }

    pub fn is_complete(&self) -> bool {
        self.hole_count() == 0
    }

    /// The subprogram at `path` (child indices from the root).
    pub fn at(&self, path: &[usize]) -> Option<&Program> {
        let mut node = self;
        for &i in path {
            match node.args.get(i)? {
                Arg::Filled(p) => node = p,
                Arg::Hole(_) => return None,
            }
        }
        Some(node)
    }

    /// Preorder walk over filled nodes with their paths.
    pub fn walk(&self) -> Vec<(Vec<usize>, &Program)> {
        fn go<'a>(p: &'a Program, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, &'a Program)>) {
            out.push((path.clone(), p));
            for (i, a) in p.args.iter().enumerate() {
                if let Arg::Filled(c) = a {
                    path.push(i);
                    go(c, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    /// Replaces the `index`-th hole (preorder) by `arg`.
    fn replace_hole(&mut self, index: usize, arg: &Arg) -> bool {
        let mut remaining = index;
        self.replace_hole_inner(&mut remaining, arg)
    }

    fn replace_hole_inner(&mut self, remaining: &mut usize, arg: &Arg) -> bool {
        for a in self.args.iter_mut() {
            match a {
                Arg::Hole(_) if *remaining == 0 => {
                    *a = arg.clone();
                    return true;
                }
                Arg::Hole(_) => *remaining -= 1,
                Arg::Filled(p) => {
                    if p.replace_hole_inner(remaining, arg) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn hole_types(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn go(p: &Program, out: &mut Vec<String>) {
            for a in &p.args {
                match a {
                    Arg::Hole(t) => out.push(t.clone()),
                    Arg::Filled(c) => go(c, out),
                }
            }
        }
        go(self, &mut out);
        out
    }
}

fn needs_quotes(payload: &str) -> bool {
    payload.is_empty()
        || payload.contains(['(', ')', '"'])
        || payload.starts_with(char::is_whitespace)
        || payload.ends_with(char::is_whitespace)
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.terminal)?;
        if let Some(payload) = &self.payload {
            if needs_quotes(payload) {
                f.write_str("(\"")?;
                for c in payload.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                return f.write_str("\")");
            }
            return write!(f, "({payload})");
        }
        if self.args.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match a {
                Arg::Hole(t) => write!(f, "?{t}")?,
                Arg::Filled(p) => write!(f, "{p}")?,
            }
        }
        f.write_str(")")
    }
}

/// The program's type, if its head is a declared terminal.
pub fn program_type(g: &Grammar, p: &Program) -> Option<NtId> {
    g.terminal(&p.terminal).map(|t| g.decl(t).result_type)
}

struct Parser<'a> {
    g: &'a Grammar,
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ProgramParse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .char_indices()
            .find(|&(_, c)| !(c.is_ascii_alphanumeric() || c == '_'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.err("expected a terminal name"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn payload(&mut self) -> Result<String> {
        let raw_start = self.pos;
        self.skip_ws();
        if self.peek() == Some('"') {
            self.pos += 1;
            let mut out = String::new();
            let mut chars = self.rest().char_indices();
            loop {
                match chars.next() {
                    None => return Err(self.err("unterminated quoted payload")),
                    Some((i, '"')) => {
                        self.pos += i + 1;
                        break;
                    }
                    Some((_, '\\')) => match chars.next() {
                        Some((_, c)) => out.push(c),
                        None => return Err(self.err("dangling escape")),
                    },
                    Some((_, c)) => out.push(c),
                }
            }
            if !self.eat(')') {
                return Err(self.err("expected `)` after payload"));
            }
            return Ok(out);
        }
        self.pos = raw_start;
        let rest = self.rest();
        let mut depth = 0i32;
        for (i, c) in rest.char_indices() {
            match c {
                '(' => depth += 1,
                ')' if depth == 0 => {
                    self.pos += i + 1;
                    return Ok(rest[..i].to_string());
                }
                ')' => depth -= 1,
                _ => {}
            }
        }
        Err(self.err("unterminated payload"))
    }

    fn arg(&mut self) -> Result<Arg> {
        self.skip_ws();
        if self.eat('?') {
            return Ok(Arg::Hole(self.ident()?.to_string()));
        }
        if self.eat('□') {
            let ty = if self.eat(':') {
                self.ident()?.to_string()
            } else {
                return Err(self.err("hole needs a type (`□:Type`)"));
            };
            return Ok(Arg::Hole(ty));
        }
        Ok(Arg::Filled(self.program()?))
    }

    fn program(&mut self) -> Result<Program> {
        let start = self.pos;
        let name = self.ident()?;
        let term = self.g.terminal(name).ok_or_else(|| {
            self.pos = start;
            Error::UnknownTerminal(name.to_string())
        })?;
        let decl = self.g.decl(term);
        if let TerminalKind::Literal(class) = decl.kind {
            if !self.eat('(') {
                return Err(self.err(format!("literal `{name}` needs a payload")));
            }
            let payload = self.payload()?;
            if class == LiteralClass::Integer && payload.parse::<i64>().is_err() {
                return Err(self.err(format!("`{payload}` is not an integer")));
            }
            return Ok(Program::literal(name, payload));
        }
        let mut args = Vec::new();
        if self.eat('(') {
            if !self.eat(')') {
                loop {
                    args.push(self.arg()?);
                    if self.eat(',') {
                        continue;
                    }
                    if self.eat(')') {
                        break;
                    }
                    return Err(self.err("expected `,` or `)`"));
                }
            }
        }
        if args.len() != decl.arity() {
            return Err(self.err(format!(
                "`{name}` takes {} arguments, got {}",
                decl.arity(),
                args.len()
            )));
        }
        Ok(Program::apply(name, args))
    }
}

/// Parses an s-expression program over `g`'s terminals.
pub fn parse_program(g: &Grammar, text: &str) -> Result<Program> {
    let mut p = Parser { g, src: text, pos: 0 };
    let prog = p.program()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing input"));
    }
    Ok(prog)
}

pub fn print_program(p: &Program) -> String {
    p.to_string()
}

/// Structural typing plus the grammar's semantic predicates. Holes type-check
/// by their slot type. Total: unknown terminals make the result `false`.
pub fn check(g: &Grammar, p: &Program) -> bool {
    fn go(g: &Grammar, p: &Program) -> Option<TermId> {
        let term = g.terminal(&p.terminal)?;
        let decl = g.decl(term);
        match decl.kind {
            TerminalKind::Literal(class) => {
                let payload = p.payload.as_ref()?;
                if !p.args.is_empty() || (class == LiteralClass::Integer && payload.parse::<i64>().is_err()) {
                    return None;
                }
                return Some(term);
            }
            _ if p.payload.is_some() => return None,
            _ => {}
        }
        let slots = decl.slots();
        if slots.len() != p.args.len() {
            return None;
        }
        let mut summary: Vec<Option<(TermId, &Program)>> = Vec::with_capacity(slots.len());
        for (&slot, arg) in slots.iter().zip(&p.args) {
            match arg {
                Arg::Hole(t) => {
                    let ty = g.nonterminal(t)?;
                    if !g.compatible(slot, ty) {
                        return None;
                    }
                    summary.push(None);
                }
                Arg::Filled(c) => {
                    let ct = go(g, c)?;
                    if !g.compatible(slot, g.decl(ct).result_type) {
                        return None;
                    }
                    summary.push(Some((ct, c)));
                }
            }
        }
        g.semantic_ok(term, &summary).then_some(term)
    }
    go(g, p).is_some()
}

/// Whether `p` checks and derives from the start symbol.
pub fn accepts(g: &Grammar, p: &Program) -> bool {
    check(g, p) && program_type(g, p).is_some_and(|t| g.is_start_type(t))
}

/// Fills the `hole_index`-th hole of `p` with the complete program `q`.
/// `Ok(None)` is the invalid program: the result does not check.
pub fn substitute(g: &Grammar, p: &Program, hole_index: usize, q: &Program) -> Result<Option<Program>> {
    let holes = p.hole_count();
    if hole_index >= holes {
        return Err(Error::HoleIndex {
            index: hole_index,
            holes,
        });
    }
    let mut out = p.clone();
    out.replace_hole(hole_index, &Arg::Filled(q.clone()));
    Ok(check(g, &out).then_some(out))
}

/// Every valid result of substituting `q` into one hole of `p`.
pub fn sub_all(g: &Grammar, p: &Program, q: &Program) -> Vec<Program> {
    (0..p.hole_count())
        .filter_map(|i| substitute(g, p, i, q).ok().flatten())
        .collect()
}

/// Expands every remaining hole with each declared default of its type.
pub fn fill_defaults(g: &Grammar, p: &Program) -> Result<Vec<Program>> {
    let types = p.hole_types();
    let mut choices = Vec::with_capacity(types.len());
    for t in &types {
        let nt = g
            .nonterminal(t)
            .ok_or_else(|| Error::MissingDefault(t.clone()))?;
        choices.push(g.defaults_for(nt)?);
    }
    let mut out = vec![p.clone()];
    for options in choices {
        let mut next = Vec::with_capacity(out.len() * options.len());
        for partial in &out {
            for &d in options {
                let mut filled = partial.clone();
                // the first remaining hole is always index 0
                filled.replace_hole(0, &Arg::Filled(Program::constant(g.decl(d).name.clone())));
                next.push(filled);
            }
        }
        out = next;
    }
    out.retain(|q| check(g, q));
    Ok(out)
}
