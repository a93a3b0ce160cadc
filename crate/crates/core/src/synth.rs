//! Enumeration of every program consistent with a sentence.
//!
//! Candidates are kept in a hash-consed arena of *annotated* nodes: a node
//! records its terminal, literal payload, the word position supplying it (or
//! none, for tuple constructors and default-filled constants) and its
//! children. An annotated complete node therefore identifies a
//! (program, witness map) pair, and equal pairs share one node.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dsl::{Arg, Grammar, NtId, Program, TermId, TerminalKind};
use crate::error::{Error, Result};
use crate::lexicon::{Dictionary, Hit, Lookup};
use crate::nlp::Sentence;

pub const DEFAULT_CAPACITY: usize = 200_000;
pub const DEFAULT_WITNESS_CAP: usize = 10_000;
/// Word positions are tracked in a 128-bit mask.
pub const MAX_TOKENS: usize = 128;

pub type Mask = u128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlainId(u32);

impl NodeRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PlainId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Word position → path of child indices to the terminal occurrence it supplies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WitnessMap {
    pub assignments: BTreeMap<usize, Vec<usize>>,
}

impl WitnessMap {
    pub fn domain(&self) -> BTreeSet<usize> {
        self.assignments.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Canonical text, used for deterministic tie-breaking.
    pub fn serialize(&self) -> String {
        self.assignments
            .iter()
            .map(|(w, path)| {
                let p: Vec<String> = path.iter().map(usize::to_string).collect();
                format!("{w}:{}", p.join("."))
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PlainNode {
    term: TermId,
    payload: Option<u32>,
    children: Box<[PlainId]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NodeKey {
    term: TermId,
    payload: Option<u32>,
    word: Option<u8>,
    children: Box<[NodeRef]>,
}

/// An annotated complete node.
#[derive(Debug, Clone)]
pub struct ANode {
    pub term: TermId,
    pub payload: Option<u32>,
    pub word: Option<u8>,
    pub children: Box<[NodeRef]>,
    pub ty: NtId,
    pub plain: PlainId,
    pub mask: Mask,
}

/// A partial program: a head with top-level holes (`None`) and filled slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PNode {
    pub term: TermId,
    pub word: Option<u8>,
    pub args: Box<[Option<NodeRef>]>,
    pub mask: Mask,
}

/// Interning tables for payloads, plain programs and annotated nodes.
#[derive(Debug, Clone, Default)]
pub struct Arena {
    payloads: Vec<String>,
    payload_index: HashMap<String, u32>,
    plain: Vec<PlainNode>,
    plain_index: HashMap<PlainNode, PlainId>,
    nodes: Vec<ANode>,
    node_index: HashMap<NodeKey, NodeRef>,
}

impl Arena {
    pub fn payload_id(&mut self, s: &str) -> u32 {
        if let Some(&i) = self.payload_index.get(s) {
            return i;
        }
        let i = self.payloads.len() as u32;
        self.payloads.push(s.to_string());
        self.payload_index.insert(s.to_string(), i);
        i
    }

    pub fn payload(&self, i: u32) -> &str {
        &self.payloads[i as usize]
    }

    fn intern_plain(&mut self, node: PlainNode) -> PlainId {
        if let Some(&id) = self.plain_index.get(&node) {
            return id;
        }
        let id = PlainId(self.plain.len() as u32);
        self.plain.push(node.clone());
        self.plain_index.insert(node, id);
        id
    }

    /// Returns the node and whether it was newly created.
    fn intern(
        &mut self,
        g: &Grammar,
        term: TermId,
        payload: Option<u32>,
        word: Option<u8>,
        children: Box<[NodeRef]>,
    ) -> (NodeRef, bool) {
        let key = NodeKey {
            term,
            payload,
            word,
            children,
        };
        if let Some(&r) = self.node_index.get(&key) {
            return (r, false);
        }
        let mut mask: Mask = word.map_or(0, |w| 1u128 << w);
        let mut plain_children = Vec::with_capacity(key.children.len());
        for c in key.children.iter() {
            let n = &self.nodes[c.index()];
            mask |= n.mask;
            plain_children.push(n.plain);
        }
        let plain = self.intern_plain(PlainNode {
            term,
            payload,
            children: plain_children.into_boxed_slice(),
        });
        let r = NodeRef(self.nodes.len() as u32);
        self.nodes.push(ANode {
            term,
            payload,
            word,
            children: key.children.clone(),
            ty: g.decl(term).result_type,
            plain,
            mask,
        });
        self.node_index.insert(key, r);
        (r, true)
    }

    pub fn node(&self, r: NodeRef) -> &ANode {
        &self.nodes[r.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The plain program id of `p`, if that program was ever built here.
    pub fn find_plain(&self, g: &Grammar, p: &Program) -> Option<PlainId> {
        let term = g.terminal(&p.terminal)?;
        let payload = match &p.payload {
            Some(s) => Some(*self.payload_index.get(s)?),
            None => None,
        };
        let mut children = Vec::with_capacity(p.args.len());
        for a in &p.args {
            match a {
                Arg::Filled(c) => children.push(self.find_plain(g, c)?),
                Arg::Hole(_) => return None,
            }
        }
        self.plain_index
            .get(&PlainNode {
                term,
                payload,
                children: children.into_boxed_slice(),
            })
            .copied()
    }

    pub fn plain_children(&self, id: PlainId) -> &[PlainId] {
        &self.plain[id.index()].children
    }

    pub fn plain_term(&self, id: PlainId) -> TermId {
        self.plain[id.index()].term
    }

    pub fn plain_program(&self, g: &Grammar, id: PlainId) -> Program {
        let n = &self.plain[id.index()];
        let name = g.decl(n.term).name.clone();
        match n.payload {
            Some(p) => Program::literal(name, self.payload(p)),
            None => Program::apply(
                name,
                n.children
                    .iter()
                    .map(|&c| Arg::Filled(self.plain_program(g, c)))
                    .collect(),
            ),
        }
    }

    pub fn program(&self, g: &Grammar, r: NodeRef) -> Program {
        self.plain_program(g, self.node(r).plain)
    }

    pub fn witness_map(&self, r: NodeRef) -> WitnessMap {
        fn go(a: &Arena, r: NodeRef, path: &mut Vec<usize>, out: &mut BTreeMap<usize, Vec<usize>>) {
            let n = a.node(r);
            if let Some(w) = n.word {
                out.insert(w as usize, path.clone());
            }
            for (i, &c) in n.children.iter().enumerate() {
                path.push(i);
                go(a, c, path, out);
                path.pop();
            }
        }
        let mut out = BTreeMap::new();
        go(self, r, &mut Vec::new(), &mut out);
        WitnessMap { assignments: out }
    }

    pub fn partial_program(&self, g: &Grammar, p: &PNode) -> Program {
        let decl = g.decl(p.term);
        Program::apply(
            decl.name.clone(),
            p.args
                .iter()
                .zip(decl.slots())
                .map(|(a, &slot)| match a {
                    Some(c) => Arg::Filled(self.program(g, *c)),
                    None => Arg::Hole(g.nonterminal_name(slot).to_string()),
                })
                .collect(),
        )
    }

    pub fn partial_witness_map(&self, p: &PNode) -> WitnessMap {
        let mut out = BTreeMap::new();
        if let Some(w) = p.word {
            out.insert(w as usize, Vec::new());
        }
        for (i, a) in p.args.iter().enumerate() {
            if let Some(c) = a {
                for (w, mut path) in self.witness_map(*c).assignments {
                    path.insert(0, i);
                    out.insert(w, path);
                }
            }
        }
        WitnessMap { assignments: out }
    }
}

/// Deduplicated (program, witness map) tuples.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    arena: Arena,
    complete: Vec<NodeRef>,
    complete_seen: HashSet<NodeRef>,
    partial: Vec<PNode>,
    partial_seen: HashSet<PNode>,
}

/// One consistent program with all the witness maps that produce it.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub plain: PlainId,
    pub maps: Vec<NodeRef>,
}

impl CandidateSet {
    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn len(&self) -> usize {
        self.complete.len() + self.partial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn complete(&self) -> &[NodeRef] {
        &self.complete
    }

    pub fn partial(&self) -> &[PNode] {
        &self.partial
    }

    fn add_complete(&mut self, r: NodeRef) -> bool {
        if self.complete_seen.insert(r) {
            self.complete.push(r);
            true
        } else {
            false
        }
    }

    fn add_partial(&mut self, p: PNode) -> Option<usize> {
        if self.partial_seen.contains(&p) {
            return None;
        }
        self.partial_seen.insert(p.clone());
        self.partial.push(p);
        Some(self.partial.len() - 1)
    }

    /// All tuples as public values, complete first.
    pub fn tuples(&self, g: &Grammar) -> Vec<(Program, WitnessMap)> {
        let mut out: Vec<_> = self
            .complete
            .iter()
            .map(|&r| (self.arena.program(g, r), self.arena.witness_map(r)))
            .collect();
        out.extend(
            self.partial
                .iter()
                .map(|p| (self.arena.partial_program(g, p), self.arena.partial_witness_map(p))),
        );
        out
    }

    /// Complete programs derivable from the start symbol, grouped by program,
    /// in order of first construction.
    pub fn candidates(&self, g: &Grammar) -> Vec<Candidate> {
        let mut index: HashMap<PlainId, usize> = HashMap::new();
        let mut out: Vec<Candidate> = Vec::new();
        for &r in &self.complete {
            let n = self.arena.node(r);
            if !g.is_start_type(n.ty) {
                continue;
            }
            let slot = *index.entry(n.plain).or_insert_with(|| {
                out.push(Candidate {
                    plain: n.plain,
                    maps: Vec::new(),
                });
                out.len() - 1
            });
            out[slot].maps.push(r);
        }
        out
    }

    /// Whether `p` is one of the start-typed complete programs.
    pub fn contains_program(&self, g: &Grammar, p: &Program) -> bool {
        self.arena.find_plain(g, p).is_some_and(|id| {
            self.complete.iter().any(|&r| {
                let n = self.arena.node(r);
                n.plain == id && g.is_start_type(n.ty)
            })
        })
    }
}

/// One word of a sentence with the terminal it supplies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordMapping {
    pub position: usize,
    pub word: String,
    pub terminal: String,
}

/// The words a witness map uses, with the terminals at their paths.
pub fn word_mappings(p: &Program, m: &WitnessMap, s: &Sentence) -> Vec<WordMapping> {
    m.assignments
        .iter()
        .filter_map(|(&i, path)| {
            Some(WordMapping {
                position: i,
                word: s.tokens.get(i)?.text.clone(),
                terminal: p.at(path)?.terminal.clone(),
            })
        })
        .collect()
}

pub fn usable_words(g: &Grammar, d: &Dictionary, s: &Sentence) -> BTreeSet<usize> {
    d.analyze(g, s).usable().into_iter().collect()
}

pub fn used_words(lookup: &Lookup, m: &WitnessMap) -> BTreeSet<usize> {
    m.assignments
        .keys()
        .copied()
        .filter(|&i| i < lookup.len() && lookup.is_usable(i))
        .collect()
}

fn check_length(n: usize) -> Result<()> {
    if n > MAX_TOKENS {
        Err(Error::SentenceTooLong(n))
    } else {
        Ok(())
    }
}

/// One tuple per (position, dictionary hit); function templates get holes.
pub fn init_tuples(g: &Grammar, lookup: &Lookup) -> Result<CandidateSet> {
    check_length(lookup.len())?;
    let mut set = CandidateSet::default();
    for i in 0..lookup.len() {
        for Hit { term, payload } in lookup.hits(i) {
            let word = Some(i as u8);
            let decl = g.decl(*term);
            if decl.arity() == 0 {
                let payload = payload.as_deref().map(|p| set.arena.payload_id(p));
                let (r, _) = set.arena.intern(g, *term, payload, word, Box::new([]));
                set.add_complete(r);
            } else {
                set.add_partial(PNode {
                    term: *term,
                    word,
                    args: vec![None; decl.arity()].into_boxed_slice(),
                    mask: 1u128 << i,
                });
            }
        }
    }
    Ok(set)
}

struct Closure<'g> {
    g: &'g Grammar,
    cap: usize,
    set: CandidateSet,
    queue: VecDeque<Item>,
    done_complete: Vec<Vec<NodeRef>>,
    done_partial: Vec<Vec<usize>>,
    slots_for_type: Vec<Vec<NtId>>,
    types_for_slot: Vec<Vec<NtId>>,
}

#[derive(Debug, Clone, Copy)]
enum Item {
    Complete(NodeRef),
    Partial(usize),
}

impl<'g> Closure<'g> {
    fn new(g: &'g Grammar, set: CandidateSet, cap: usize) -> Self {
        let n = g.nonterminal_count();
        let mut slots_for_type = vec![Vec::new(); n];
        let mut types_for_slot = vec![Vec::new(); n];
        for s in 0..n {
            for t in 0..n {
                if g.compatible(NtId(s as u16), NtId(t as u16)) {
                    slots_for_type[t].push(NtId(s as u16));
                    types_for_slot[s].push(NtId(t as u16));
                }
            }
        }
        Closure {
            g,
            cap,
            set,
            queue: VecDeque::new(),
            done_complete: vec![Vec::new(); n],
            done_partial: vec![Vec::new(); n],
            slots_for_type,
            types_for_slot,
        }
    }

    fn guard(&self) -> Result<()> {
        if self.set.len() > self.cap {
            Err(Error::CapacityExceeded { cap: self.cap })
        } else {
            Ok(())
        }
    }

    fn semantic_ok(&self, term: TermId, args: &[Option<NodeRef>]) -> bool {
        if self.g.rules().is_empty() {
            return true;
        }
        let summary: Vec<Option<(TermId, PlainId)>> = args
            .iter()
            .map(|a| {
                a.map(|r| {
                    let n = self.set.arena.node(r);
                    (n.term, n.plain)
                })
            })
            .collect();
        self.g.semantic_ok(term, &summary)
    }

    fn push_complete(&mut self, r: NodeRef) -> Result<()> {
        if self.set.add_complete(r) {
            self.queue.push_back(Item::Complete(r));
            self.guard()?;
        }
        Ok(())
    }

    fn push_partial(&mut self, p: PNode) -> Result<()> {
        if let Some(idx) = self.set.add_partial(p) {
            self.queue.push_back(Item::Partial(idx));
            self.guard()?;
            self.default_completions(idx)?;
        }
        Ok(())
    }

    /// Fills every hole of the partial with its declared defaults.
    fn default_completions(&mut self, idx: usize) -> Result<()> {
        let p = self.set.partial[idx].clone();
        let slots = self.g.decl(p.term).slots().to_vec();
        let mut options: Vec<Vec<NodeRef>> = Vec::with_capacity(slots.len());
        for (a, &slot) in p.args.iter().zip(&slots) {
            match a {
                Some(r) => options.push(vec![*r]),
                None => {
                    let defaults = self.g.defaults(slot);
                    if defaults.is_empty() {
                        return Ok(());
                    }
                    let mut refs = Vec::with_capacity(defaults.len());
                    for &d in defaults {
                        refs.push(self.set.arena.intern(self.g, d, None, None, Box::new([])).0);
                    }
                    options.push(refs);
                }
            }
        }
        let mut combos: Vec<Vec<NodeRef>> = vec![Vec::new()];
        for opts in &options {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    opts.iter().map(move |&o| {
                        let mut c = c.clone();
                        c.push(o);
                        c
                    })
                })
                .collect();
        }
        for children in combos {
            let args: Vec<Option<NodeRef>> = children.iter().map(|&c| Some(c)).collect();
            if !self.semantic_ok(p.term, &args) {
                continue;
            }
            let (r, _) = self.set.arena.intern(self.g, p.term, None, p.word, children.into_boxed_slice());
            self.push_complete(r)?;
        }
        Ok(())
    }

    fn fill(&mut self, pidx: usize, hole: usize, c: NodeRef) -> Result<()> {
        let p = &self.set.partial[pidx];
        let mut args = p.args.clone();
        args[hole] = Some(c);
        let term = p.term;
        let word = p.word;
        let mask = p.mask | self.set.arena.node(c).mask;
        if !self.semantic_ok(term, &args) {
            return Ok(());
        }
        if args.iter().all(Option::is_some) {
            let children: Box<[NodeRef]> = args.iter().map(|a| a.unwrap()).collect();
            let (r, _) = self.set.arena.intern(self.g, term, None, word, children);
            self.push_complete(r)
        } else {
            self.push_partial(PNode { term, word, args, mask })
        }
    }

    fn hole_slots(&self, pidx: usize) -> Vec<(usize, NtId)> {
        let p = &self.set.partial[pidx];
        let slots = self.g.decl(p.term).slots();
        p.args
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(i, _)| (i, slots[i]))
            .collect()
    }

    fn run(mut self) -> Result<CandidateSet> {
        for r in self.set.complete.clone() {
            self.queue.push_back(Item::Complete(r));
        }
        for i in 0..self.set.partial.len() {
            self.queue.push_back(Item::Partial(i));
            self.default_completions(i)?;
        }
        for (t, decl) in self.g.terminals() {
            if let TerminalKind::Tuple { slots } = &decl.kind {
                self.push_partial(PNode {
                    term: t,
                    word: None,
                    args: vec![None; slots.len()].into_boxed_slice(),
                    mask: 0,
                })?;
            }
        }
        self.guard()?;
        while let Some(item) = self.queue.pop_front() {
            match item {
                Item::Complete(c) => {
                    let (ty, mask) = {
                        let n = self.set.arena.node(c);
                        (n.ty, n.mask)
                    };
                    let mut work = Vec::new();
                    for &slot in &self.slots_for_type[ty.index()] {
                        for &pidx in &self.done_partial[slot.index()] {
                            let p = &self.set.partial[pidx];
                            if p.mask & mask != 0 {
                                continue;
                            }
                            let slots = self.g.decl(p.term).slots();
                            for (h, a) in p.args.iter().enumerate() {
                                if a.is_none() && slots[h] == slot {
                                    work.push((pidx, h));
                                }
                            }
                        }
                    }
                    for (pidx, h) in work {
                        self.fill(pidx, h, c)?;
                    }
                    self.done_complete[ty.index()].push(c);
                }
                Item::Partial(pidx) => {
                    let holes = self.hole_slots(pidx);
                    let mask = self.set.partial[pidx].mask;
                    let mut work = Vec::new();
                    for &(h, slot) in &holes {
                        for &ty in &self.types_for_slot[slot.index()] {
                            for &c in &self.done_complete[ty.index()] {
                                if self.set.arena.node(c).mask & mask == 0 {
                                    work.push((h, c));
                                }
                            }
                        }
                    }
                    for (h, c) in work {
                        self.fill(pidx, h, c)?;
                    }
                    let mut seen = Vec::new();
                    for (_, slot) in holes {
                        if !seen.contains(&slot) {
                            seen.push(slot);
                            self.done_partial[slot.index()].push(pidx);
                        }
                    }
                }
            }
        }
        Ok(self.set)
    }
}

/// Closure of `b0` under substitution of word-disjoint complete programs into
/// holes, with default completion of every partial program. Tuple
/// constructors are seeded automatically; unused seeds are not reported.
pub fn bag(g: &Grammar, b0: CandidateSet, cap: usize) -> Result<CandidateSet> {
    let mut set = Closure::new(g, b0, cap).run()?;
    let unused: Vec<PNode> = set
        .partial
        .iter()
        .filter(|p| p.word.is_none() && p.args.iter().all(Option::is_none))
        .cloned()
        .collect();
    if !unused.is_empty() {
        set.partial.retain(|p| !(p.word.is_none() && p.args.iter().all(Option::is_none)));
        for p in unused {
            set.partial_seen.remove(&p);
        }
    }
    Ok(set)
}

/// Every consistent tuple for the sentence, without ranking.
pub fn synth_no_score(g: &Grammar, d: &Dictionary, s: &Sentence) -> Result<CandidateSet> {
    synth_lookup(g, &d.analyze(g, s), DEFAULT_CAPACITY)
}

pub fn synth_lookup(g: &Grammar, lookup: &Lookup, cap: usize) -> Result<CandidateSet> {
    bag(g, init_tuples(g, lookup)?, cap)
}

/// Terminal occurrences of `p` that need a word: everything except tuple
/// constructors and constants that are defaults for their slot.
pub fn required_occurrences(g: &Grammar, p: &Program) -> Vec<(TermId, Option<String>)> {
    let mut out = Vec::new();
    fn go(g: &Grammar, p: &Program, slot: Option<NtId>, out: &mut Vec<(TermId, Option<String>)>) {
        let Some(t) = g.terminal(&p.terminal) else { return };
        let decl = g.decl(t);
        let optional = slot.is_some_and(|s| decl.kind == TerminalKind::Constant && g.is_default_for(s, t));
        if !decl.is_tuple() && !optional {
            out.push((t, p.payload.clone()));
        }
        for (a, &s) in p.args.iter().zip(decl.slots()) {
            if let Arg::Filled(c) = a {
                go(g, c, Some(s), out);
            }
        }
    }
    go(g, p, None, &mut out);
    out
}

/// All witness maps of a complete program.
pub fn witness_maps(g: &Grammar, d: &Dictionary, p: &Program, s: &Sentence) -> Result<Vec<WitnessMap>> {
    check_length(s.len())?;
    witness_maps_with(g, &d.analyze(g, s), p, DEFAULT_WITNESS_CAP)
}

pub fn witness_maps_with(g: &Grammar, lookup: &Lookup, p: &Program, cap: usize) -> Result<Vec<WitnessMap>> {
    struct Occ {
        path: Vec<usize>,
        positions: Vec<usize>,
        optional: bool,
    }
    let mut occs = Vec::new();
    for (path, node) in p.walk() {
        let Some(t) = g.terminal(&node.terminal) else {
            return Ok(Vec::new());
        };
        let decl = g.decl(t);
        if decl.is_tuple() {
            continue;
        }
        let optional = if let Some((&last, parent_path)) = path.split_last() {
            let parent = p.at(parent_path).expect("walk yields valid paths");
            let pt = g.terminal(&parent.terminal).expect("parent checked before child");
            let slot = g.decl(pt).slots()[last];
            decl.kind == TerminalKind::Constant && g.is_default_for(slot, t)
        } else {
            false
        };
        let positions = lookup.positions_for(t, node.payload.as_deref());
        if positions.is_empty() && !optional {
            return Ok(Vec::new());
        }
        occs.push(Occ {
            path,
            positions,
            optional,
        });
    }
    let mut out = Vec::new();
    let mut current: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    fn rec(
        occs: &[Occ],
        i: usize,
        used: &mut Mask,
        current: &mut BTreeMap<usize, Vec<usize>>,
        out: &mut Vec<WitnessMap>,
        cap: usize,
    ) -> Result<()> {
        if i == occs.len() {
            if out.len() >= cap {
                return Err(Error::WitnessCapExceeded { cap });
            }
            out.push(WitnessMap {
                assignments: current.clone(),
            });
            return Ok(());
        }
        let o = &occs[i];
        if o.optional {
            rec(occs, i + 1, used, current, out, cap)?;
        }
        for &w in &o.positions {
            let bit = 1u128 << w;
            if *used & bit != 0 {
                continue;
            }
            *used |= bit;
            current.insert(w, o.path.clone());
            rec(occs, i + 1, used, current, out, cap)?;
            current.remove(&w);
            *used &= !bit;
        }
        Ok(())
    }
    rec(&occs, 0, &mut 0, &mut current, &mut out, cap)?;
    out.sort();
    Ok(out)
}

/// Candidate set and per-candidate component scores for one analyzed sentence.
pub fn score_sentence(
    g: &Grammar,
    d: &Dictionary,
    models: &crate::scoring::Models,
    analysis: &crate::nlp::Analysis,
    cap: usize,
) -> Result<(Lookup, CandidateSet, Vec<crate::scoring::CandidateScores>)> {
    let lookup = d.analyze(g, &analysis.sentence);
    let set = synth_lookup(g, &lookup, cap)?;
    let scores = crate::scoring::score_candidates(g, &lookup, &analysis.tree, models, &set)?;
    Ok((lookup, set, scores))
}

/// Ranked translations of an analyzed sentence.
pub fn synthesize(
    g: &Grammar,
    d: &Dictionary,
    models: &crate::scoring::Models,
    weights: &crate::scoring::Weights,
    analysis: &crate::nlp::Analysis,
) -> Result<Vec<crate::scoring::ScoredCandidate>> {
    let (_, set, scores) = score_sentence(g, d, models, analysis, DEFAULT_CAPACITY)?;
    Ok(crate::scoring::rank_candidates(g, set.arena(), &scores, weights))
}
