//! Typed grammars loaded from `.dsl` files.
//!
//! A grammar file is line oriented:
//!
//! ```text
//! # comment
//! grammar text-editing
//! start S
//! Command := ReplaceCmd | RemoveCmd
//! ReplaceCmd := REPLACE(SelectStr, NewString, IterScope)
//! SelectStr := (Token, BCond, Occurrence)
//! Scope := LINESCOPE | WORDSCOPE
//! String := <STRING>
//!   | EMPTYSTR
//! defaults BCond = {ALWAYS}
//! semantic distinct-args AND
//! semantic forbid-child NOT NOT
//! ```
//!
//! A bare alternative naming a declared nonterminal is a unit production,
//! an upper-case bare name is a constant terminal, `NAME(A, B)` is a function
//! terminal with typed slots, `(A, B)` is an unnamed tuple whose constructor
//! takes the name of its left-hand side, and `<STRING>` / `<INTEGER>` declare
//! literal terminals whose instances carry a payload.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NtId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermId(pub u16);

impl NtId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LiteralClass {
    String,
    Integer,
}

impl LiteralClass {
    pub fn name(self) -> &'static str {
        match self {
            LiteralClass::String => "STRING",
            LiteralClass::Integer => "INTEGER",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TerminalKind {
    /// A named function with typed argument slots.
    Function { slots: Vec<NtId> },
    /// The constructor of an unnamed tuple production. It never needs a word.
    Tuple { slots: Vec<NtId> },
    Literal(LiteralClass),
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalDecl {
    pub name: String,
    pub kind: TerminalKind,
    pub result_type: NtId,
}

impl TerminalDecl {
    pub fn slots(&self) -> &[NtId] {
        match &self.kind {
            TerminalKind::Function { slots } | TerminalKind::Tuple { slots } => slots,
            _ => &[],
        }
    }

    pub fn arity(&self) -> usize {
        self.slots().len()
    }

    pub fn is_tuple(&self) -> bool {
        matches!(self.kind, TerminalKind::Tuple { .. })
    }

    pub fn literal_class(&self) -> Option<LiteralClass> {
        match self.kind {
            TerminalKind::Literal(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Nonterminal(NtId),
    Terminal(TermId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    /// Terminal name for constructor productions, `Lhs->Rhs` for unit productions.
    pub id: String,
    pub lhs: NtId,
    pub rhs: Vec<Symbol>,
    pub terminal: Option<TermId>,
}

impl Production {
    pub fn arity(&self) -> usize {
        self.rhs.len()
    }
}

/// Named semantic predicates checked on top of structural typing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SemanticRule {
    /// No two filled arguments of the terminal may be the same program.
    DistinctArgs(TermId),
    /// The parent terminal may not take the child terminal as a direct argument.
    ForbidChild { parent: TermId, child: TermId },
}

#[derive(Debug, Clone)]
pub struct Grammar {
    name: String,
    source: String,
    nonterminals: Vec<String>,
    nt_index: HashMap<String, NtId>,
    terminals: Vec<TerminalDecl>,
    term_index: HashMap<String, TermId>,
    productions: Vec<Production>,
    start: NtId,
    defaults: Vec<Vec<TermId>>,
    rules: Vec<SemanticRule>,
    /// `derives[slot][ty]`: a program of type `ty` may fill a slot of type `slot`.
    derives: Vec<Vec<bool>>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_constant_name(s: &str) -> bool {
    is_ident(s)
        && s.chars().any(|c| c.is_ascii_uppercase())
        && s.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::GrammarSyntax {
        line,
        message: message.into(),
    }
}

/// Splits on `sep` at parenthesis/brace depth zero.
fn split_top(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '{' | '<' => depth += 1,
            ')' | '}' | '>' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

enum RawAlt {
    Bare(String),
    Function(String, Vec<String>),
    Tuple(Vec<String>),
    Literal(LiteralClass),
}

struct RawLine {
    line: usize,
    lhs: String,
    alts: Vec<RawAlt>,
}

fn parse_alt(line: usize, text: &str) -> Result<RawAlt> {
    let text = text.trim();
    if text.is_empty() {
        return Err(syntax(line, "empty alternative"));
    }
    if let Some(inner) = text.strip_prefix('<') {
        let inner = inner
            .strip_suffix('>')
            .ok_or_else(|| syntax(line, format!("unterminated literal class `{text}`")))?;
        return match inner.trim() {
            "STRING" => Ok(RawAlt::Literal(LiteralClass::String)),
            "INTEGER" => Ok(RawAlt::Literal(LiteralClass::Integer)),
            other => Err(syntax(line, format!("unknown literal class `{other}`"))),
        };
    }
    if let Some(open) = text.find('(') {
        let head = text[..open].trim();
        let rest = text[open + 1..]
            .trim_end()
            .strip_suffix(')')
            .ok_or_else(|| syntax(line, format!("missing `)` in `{text}`")))?;
        let slots: Vec<String> = split_top(rest, ',')
            .into_iter()
            .map(|s| s.trim().to_string())
            .collect();
        if slots.iter().any(|s| s.is_empty()) {
            return Err(syntax(line, format!("empty slot in `{text}`")));
        }
        if let Some(bad) = slots.iter().find(|s| !is_ident(s)) {
            return Err(syntax(line, format!("bad slot name `{bad}`")));
        }
        if head.is_empty() {
            return Ok(RawAlt::Tuple(slots));
        }
        if !is_ident(head) {
            return Err(syntax(line, format!("bad terminal name `{head}`")));
        }
        return Ok(RawAlt::Function(head.to_string(), slots));
    }
    if !is_ident(text) {
        return Err(syntax(line, format!("bad symbol `{text}`")));
    }
    Ok(RawAlt::Bare(text.to_string()))
}

impl Grammar {
    /// Parses a grammar file.
    pub fn load(text: &str) -> Result<Grammar> {
        let mut name = String::from("grammar");
        let mut start_name: Option<(usize, String)> = None;
        let mut rules_raw: Vec<RawLine> = Vec::new();
        let mut defaults_raw: Vec<(usize, String, Vec<String>)> = Vec::new();
        let mut semantic_raw: Vec<(usize, Vec<String>)> = Vec::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('|') {
                let last = rules_raw
                    .last_mut()
                    .ok_or_else(|| syntax(line, "continuation line without a production"))?;
                for alt in split_top(rest, '|') {
                    last.alts.push(parse_alt(line, alt)?);
                }
                continue;
            }
            let mut words = content.split_whitespace();
            match words.next() {
                Some("grammar") => {
                    name = words.collect::<Vec<_>>().join(" ");
                    if name.is_empty() {
                        return Err(syntax(line, "`grammar` needs a name"));
                    }
                    continue;
                }
                Some("start") => {
                    let s: Vec<_> = words.collect();
                    if s.len() != 1 {
                        return Err(syntax(line, "`start` takes exactly one nonterminal"));
                    }
                    start_name = Some((line, s[0].to_string()));
                    continue;
                }
                Some("defaults") => {
                    let rest = content["defaults".len()..].trim();
                    let (nt, set) = rest
                        .split_once('=')
                        .ok_or_else(|| syntax(line, "expected `defaults N = {A, B}`"))?;
                    let set = set.trim();
                    let inner = set
                        .strip_prefix('{')
                        .and_then(|s| s.strip_suffix('}'))
                        .ok_or_else(|| syntax(line, "default set must be enclosed in `{}`"))?;
                    let items: Vec<String> = inner
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect();
                    if items.is_empty() {
                        return Err(syntax(line, "empty default set"));
                    }
                    defaults_raw.push((line, nt.trim().to_string(), items));
                    continue;
                }
                Some("semantic") => {
                    semantic_raw.push((line, words.map(str::to_string).collect()));
                    continue;
                }
                _ => {}
            }
            let (lhs, rhs) = content
                .split_once(":=")
                .ok_or_else(|| syntax(line, format!("expected `Lhs := ...`, got `{content}`")))?;
            let lhs = lhs.trim();
            if !is_ident(lhs) {
                return Err(syntax(line, format!("bad nonterminal name `{lhs}`")));
            }
            let alts = split_top(rhs, '|')
                .into_iter()
                .map(|a| parse_alt(line, a))
                .collect::<Result<Vec<_>>>()?;
            rules_raw.push(RawLine {
                line,
                lhs: lhs.to_string(),
                alts,
            });
        }

        if rules_raw.is_empty() {
            return Err(Error::InvalidGrammar("no productions".into()));
        }

        let mut nonterminals = Vec::new();
        let mut nt_index = HashMap::new();
        for r in &rules_raw {
            if !nt_index.contains_key(&r.lhs) {
                let id = NtId(nonterminals.len() as u16);
                nt_index.insert(r.lhs.clone(), id);
                nonterminals.push(r.lhs.clone());
            }
        }

        let mut terminals: Vec<TerminalDecl> = Vec::new();
        let mut term_index: HashMap<String, TermId> = HashMap::new();
        let mut productions = Vec::new();

        let resolve_nt = |line: usize, s: &str| -> Result<NtId> {
            nt_index.get(s).copied().ok_or_else(|| Error::UndeclaredSymbol {
                line,
                symbol: s.to_string(),
            })
        };

        for r in &rules_raw {
            let lhs = nt_index[&r.lhs];
            for alt in &r.alts {
                let (tname, kind) = match alt {
                    RawAlt::Bare(s) => {
                        if let Some(&nt) = nt_index.get(s) {
                            productions.push(Production {
                                id: format!("{}->{}", r.lhs, s),
                                lhs,
                                rhs: vec![Symbol::Nonterminal(nt)],
                                terminal: None,
                            });
                            continue;
                        }
                        if !is_constant_name(s) {
                            return Err(Error::UndeclaredSymbol {
                                line: r.line,
                                symbol: s.clone(),
                            });
                        }
                        (s.clone(), TerminalKind::Constant)
                    }
                    RawAlt::Function(f, slots) => {
                        let slots = slots
                            .iter()
                            .map(|s| resolve_nt(r.line, s))
                            .collect::<Result<Vec<_>>>()?;
                        (f.clone(), TerminalKind::Function { slots })
                    }
                    RawAlt::Tuple(slots) => {
                        let slots = slots
                            .iter()
                            .map(|s| resolve_nt(r.line, s))
                            .collect::<Result<Vec<_>>>()?;
                        (r.lhs.clone(), TerminalKind::Tuple { slots })
                    }
                    RawAlt::Literal(c) => (c.name().to_string(), TerminalKind::Literal(*c)),
                };
                if term_index.contains_key(&tname) {
                    return Err(syntax(r.line, format!("terminal `{tname}` declared twice")));
                }
                let id = TermId(terminals.len() as u16);
                let rhs = match &kind {
                    TerminalKind::Function { slots } | TerminalKind::Tuple { slots } => {
                        slots.iter().map(|&s| Symbol::Nonterminal(s)).collect()
                    }
                    _ => vec![Symbol::Terminal(id)],
                };
                productions.push(Production {
                    id: tname.clone(),
                    lhs,
                    rhs,
                    terminal: Some(id),
                });
                term_index.insert(tname.clone(), id);
                terminals.push(TerminalDecl {
                    name: tname,
                    kind,
                    result_type: lhs,
                });
            }
        }

        let start = match start_name {
            Some((line, s)) => resolve_nt(line, &s)?,
            None => NtId(0),
        };

        let n = nonterminals.len();
        let mut derives = vec![vec![false; n]; n];
        for (i, row) in derives.iter_mut().enumerate() {
            row[i] = true;
        }
        loop {
            let mut changed = false;
            for p in &productions {
                if p.terminal.is_none() {
                    if let Symbol::Nonterminal(b) = p.rhs[0] {
                        let a = p.lhs.index();
                        for t in 0..n {
                            if derives[b.index()][t] && !derives[a][t] {
                                derives[a][t] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut defaults = vec![Vec::new(); n];
        for (line, nt, items) in defaults_raw {
            let ntid = resolve_nt(line, &nt)?;
            for item in items {
                let tid = *term_index.get(&item).ok_or_else(|| Error::UndeclaredSymbol {
                    line,
                    symbol: item.clone(),
                })?;
                let decl = &terminals[tid.index()];
                if decl.kind != TerminalKind::Constant || !derives[ntid.index()][decl.result_type.index()] {
                    return Err(Error::IllTypedDefault {
                        line,
                        nonterminal: nt.clone(),
                        default: item,
                    });
                }
                if !defaults[ntid.index()].contains(&tid) {
                    defaults[ntid.index()].push(tid);
                }
            }
        }

        let mut rules = Vec::new();
        for (line, words) in semantic_raw {
            let term = |s: &str| -> Result<TermId> {
                term_index.get(s).copied().ok_or_else(|| Error::UndeclaredSymbol {
                    line,
                    symbol: s.to_string(),
                })
            };
            match words.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
                ["distinct-args", t] => rules.push(SemanticRule::DistinctArgs(term(t)?)),
                ["forbid-child", p, c] => rules.push(SemanticRule::ForbidChild {
                    parent: term(p)?,
                    child: term(c)?,
                }),
                other => return Err(syntax(line, format!("unknown semantic rule `{}`", other.join(" ")))),
            }
        }

        let grammar = Grammar {
            name,
            source: text.to_string(),
            nonterminals,
            nt_index,
            terminals,
            term_index,
            productions,
            start,
            defaults,
            rules,
            derives,
        };
        grammar.check_tuple_cycles()?;
        Ok(grammar)
    }

    /// Tuple constructors consume no words, so a tuple that can (through
    /// other tuples) contain itself would make the candidate closure infinite.
    fn check_tuple_cycles(&self) -> Result<()> {
        let tuples: Vec<TermId> = (0..self.terminals.len())
            .map(|i| TermId(i as u16))
            .filter(|&t| self.decl(t).is_tuple())
            .collect();
        // edge a -> b when some slot of a accepts b's result type
        let edges = |a: TermId| -> Vec<TermId> {
            tuples
                .iter()
                .copied()
                .filter(|&b| {
                    self.decl(a)
                        .slots()
                        .iter()
                        .any(|&s| self.compatible(s, self.decl(b).result_type))
                })
                .collect()
        };
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<TermId, u8> = HashMap::new();
        fn visit(
            t: TermId,
            state: &mut HashMap<TermId, u8>,
            edges: &dyn Fn(TermId) -> Vec<TermId>,
            g: &Grammar,
        ) -> Result<()> {
            match state.get(&t) {
                Some(1) => {
                    return Err(Error::InvalidGrammar(format!(
                        "tuple production `{}` can contain itself",
                        g.decl(t).name
                    )))
                }
                Some(_) => return Ok(()),
                None => {}
            }
            state.insert(t, 1);
            for n in edges(t) {
                visit(n, state, edges, g)?;
            }
            state.insert(t, 2);
            Ok(())
        }
        for &t in &tuples {
            visit(t, &mut state, &edges, self)?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.source.as_bytes())
    }

    pub fn start_symbol(&self) -> NtId {
        self.start
    }

    pub fn nonterminal(&self, name: &str) -> Option<NtId> {
        self.nt_index.get(name).copied()
    }

    pub fn nonterminal_name(&self, id: NtId) -> &str {
        &self.nonterminals[id.index()]
    }

    pub fn nonterminal_count(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn terminal(&self, name: &str) -> Option<TermId> {
        self.term_index.get(name).copied()
    }

    pub fn decl(&self, id: TermId) -> &TerminalDecl {
        &self.terminals[id.index()]
    }

    pub fn terminal_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn terminals(&self) -> impl Iterator<Item = (TermId, &TerminalDecl)> {
        self.terminals
            .iter()
            .enumerate()
            .map(|(i, d)| (TermId(i as u16), d))
    }

    pub fn literal_terminals(&self, class: LiteralClass) -> impl Iterator<Item = TermId> + '_ {
        self.terminals()
            .filter(move |(_, d)| d.literal_class() == Some(class))
            .map(|(id, _)| id)
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn rules(&self) -> &[SemanticRule] {
        &self.rules
    }

    /// Whether a program of type `ty` may fill a slot of type `slot`.
    pub fn compatible(&self, slot: NtId, ty: NtId) -> bool {
        self.derives[slot.index()][ty.index()]
    }

    /// Whether a program of type `ty` is a complete sentence of the language.
    pub fn is_start_type(&self, ty: NtId) -> bool {
        self.compatible(self.start, ty)
    }

    pub fn defaults(&self, nt: NtId) -> &[TermId] {
        &self.defaults[nt.index()]
    }

    /// Default candidates for `slot`, or an error naming it.
    pub fn defaults_for(&self, slot: NtId) -> Result<&[TermId]> {
        let d = self.defaults(slot);
        if d.is_empty() {
            Err(Error::MissingDefault(self.nonterminal_name(slot).to_string()))
        } else {
            Ok(d)
        }
    }

    /// Whether `term` is a declared default for some slot type of `slot`'s
    /// parent, i.e. it may appear without a supporting word.
    pub fn is_default_for(&self, slot: NtId, term: TermId) -> bool {
        self.defaults[slot.index()].contains(&term)
    }

    /// The local semantic predicates for a node with head `head` whose
    /// arguments are described by `args`: `None` for holes, otherwise the
    /// argument's head terminal and a key identifying the argument program.
    pub fn semantic_ok<K: PartialEq>(&self, head: TermId, args: &[Option<(TermId, K)>]) -> bool {
        for rule in &self.rules {
            match *rule {
                SemanticRule::DistinctArgs(t) if t == head => {
                    for i in 0..args.len() {
                        for j in i + 1..args.len() {
                            if let (Some((_, a)), Some((_, b))) = (&args[i], &args[j]) {
                                if a == b {
                                    return false;
                                }
                            }
                        }
                    }
                }
                SemanticRule::ForbidChild { parent, child } if parent == head => {
                    if args.iter().flatten().any(|(h, _)| *h == child) {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }
}
