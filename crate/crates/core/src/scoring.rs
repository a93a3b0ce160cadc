//! Coverage, mapping and structure scores, connection features and ranking.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dsl::{Grammar, Program, TermId};
use crate::error::{Error, Result};
use crate::lexicon::Lookup;
use crate::nlp::ParseTree;
use crate::stats::NbModel;
use crate::synth::{Arena, CandidateSet, Mask, NodeRef, PlainId, WitnessMap};

/// lca and distance features are clamped to this value.
pub const FEATURE_CLAMP: u32 = 8;
/// Probability used for connections with no trained classifier.
pub const UNSEEN_CONNECTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pos1: String,
    pub pos2: String,
    pub lca1: u32,
    pub lca2: u32,
    pub order: i8,
    pub overlap: i8,
    pub distance: u32,
}

impl FeatureVector {
    pub fn values(&self) -> Vec<String> {
        vec![
            self.pos1.clone(),
            self.pos2.clone(),
            self.lca1.min(FEATURE_CLAMP).to_string(),
            self.lca2.min(FEATURE_CLAMP).to_string(),
            self.order.to_string(),
            self.overlap.to_string(),
            self.distance.min(FEATURE_CLAMP).to_string(),
        ]
    }
}

/// A production (identified by its head terminal) and two distinct slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Connection {
    pub head: String,
    pub i: usize,
    pub j: usize,
}

impl Connection {
    pub fn key(&self) -> String {
        format!("{}#{}#{}", self.head, self.i, self.j)
    }
}

pub fn span(mask: Mask) -> Option<(usize, usize)> {
    if mask == 0 {
        None
    } else {
        Some((mask.trailing_zeros() as usize, 127 - mask.leading_zeros() as usize))
    }
}

/// Features relating two sibling subprograms with word sets `m1` and `m2`.
pub fn extract_features(tree: &ParseTree, m1: Mask, m2: Mask) -> Result<FeatureVector> {
    let (Some(s1), Some(s2)) = (span(m1), span(m2)) else {
        return Err(Error::FeatureUndefined("subprogram uses no words".into()));
    };
    span_features(tree, s1, s2)
}

pub fn span_features(tree: &ParseTree, s1: (usize, usize), s2: (usize, usize)) -> Result<FeatureVector> {
    let r1 = tree.cover(s1.0, s1.1)?;
    let r2 = tree.cover(s2.0, s2.1)?;
    let lca = tree.lca(r1, r2)?;
    let order = if tree.in_order_index(r1)? < tree.in_order_index(r2)? { 1 } else { -1 };
    let (overlap, distance) = if s1.1 < s2.0 {
        (1, s2.0 - s1.1)
    } else if s1.0 > s2.1 {
        (-1, s1.0 - s2.1)
    } else {
        (0, 0)
    };
    Ok(FeatureVector {
        pos1: tree.label(r1).name().to_string(),
        pos2: tree.label(r2).name().to_string(),
        lca1: tree.tree_distance(lca, r1)? as u32,
        lca2: tree.tree_distance(lca, r2)? as u32,
        order,
        overlap,
        distance: distance as u32,
    })
}

pub fn coverage_score(used: usize, usable: usize) -> f64 {
    if usable == 0 {
        0.0
    } else {
        used as f64 / usable as f64
    }
}

/// Product of per-word probabilities; empty product is 1.
pub fn mapping_product(probs: &[f64]) -> f64 {
    probs.iter().product()
}

/// Geometric mean of connection probabilities; no connections scores 1.
pub fn geometric_mean(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        1.0
    } else {
        (probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64).exp()
    }
}

/// Word → terminal classifier over (dictionary key, POS tag).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingModel {
    pub nb: NbModel,
}

impl MappingModel {
    pub fn features(key: &str, pos: &str) -> Vec<String> {
        vec![key.to_string(), pos.to_string()]
    }

    pub fn predict(&self, key: &str, pos: &str, terminal: &str) -> f64 {
        self.nb.predict(&Self::features(key, pos), terminal)
    }
}

/// One two-class classifier per connection, keyed by [`Connection::key`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureModels {
    pub models: BTreeMap<String, NbModel>,
}

impl StructureModels {
    pub fn predict(&self, conn: &Connection, f: &FeatureVector) -> f64 {
        match self.models.get(&conn.key()) {
            Some(m) => m.predict(&f.values(), "1"),
            None => UNSEEN_CONNECTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Models {
    pub mapping: MappingModel,
    pub structure: StructureModels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub cov: f64,
    pub map: f64,
    pub str: f64,
}

impl Weights {
    pub const EQUAL: Weights = Weights {
        cov: 1.0,
        map: 1.0,
        str: 1.0,
    };

    pub fn from_array(w: [f64; 3]) -> Weights {
        Weights {
            cov: w[0],
            map: w[1],
            str: w[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.cov, self.map, self.str]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        if a.iter().any(|x| !x.is_finite() || *x < 0.0) || a.iter().all(|x| *x == 0.0) {
            return Err(Error::Config(format!("invalid weight vector {a:?}")));
        }
        Ok(())
    }
}

pub fn combined_score(w: &Weights, cov: f64, map: f64, str: f64) -> f64 {
    w.cov * cov + w.map * map + w.str * str
}

/// Weights whose combined scores best match `targets` in the least-squares
/// sense.
pub fn least_squares_weights(rows: &[[f64; 3]], targets: &[f64]) -> Result<Weights> {
    if rows.len() != targets.len() || rows.len() < 3 {
        return Err(Error::Config(format!(
            "least squares needs at least 3 rows with one target each, got {} rows and {} targets",
            rows.len(),
            targets.len()
        )));
    }
    let a = nalgebra::DMatrix::from_fn(rows.len(), 3, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_column_slice(targets);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Weights::from_array([x[0], x[1], x[2]]))
}

/// Ranks in descending score order; every member of a tie group gets the
/// group's last position.
pub fn rank_1334(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            ranks[i] = end;
        }
        start = end;
    }
    ranks
}

/// Component scores of one candidate program under each of its witness maps.
#[derive(Debug, Clone)]
pub struct CandidateScores {
    pub plain: PlainId,
    pub maps: Vec<(NodeRef, [f64; 3])>,
}

impl CandidateScores {
    /// The map with the best combined score and that score.
    pub fn best(&self, w: &Weights) -> (NodeRef, [f64; 3], f64) {
        let mut best = None::<(NodeRef, [f64; 3], f64)>;
        for &(r, x) in &self.maps {
            let s = combined_score(w, x[0], x[1], x[2]);
            if best.is_none_or(|b| s > b.2) {
                best = Some((r, x, s));
            }
        }
        best.expect("a candidate has at least one map")
    }
}

/// Memoized scorer over the annotated nodes of one candidate set.
pub struct Scorer<'a> {
    g: &'a Grammar,
    lookup: &'a Lookup,
    tree: &'a ParseTree,
    models: &'a Models,
    arena: &'a Arena,
    usable: usize,
    word_prob: HashMap<(usize, TermId), f64>,
    features: HashMap<((usize, usize), (usize, usize)), Vec<String>>,
    conn_prob: HashMap<(TermId, usize, usize, Vec<String>), f64>,
    map_memo: HashMap<NodeRef, f64>,
    str_memo: HashMap<NodeRef, (f64, usize)>,
}

impl<'a> Scorer<'a> {
    pub fn new(g: &'a Grammar, lookup: &'a Lookup, tree: &'a ParseTree, models: &'a Models, arena: &'a Arena) -> Self {
        Scorer {
            g,
            lookup,
            tree,
            models,
            arena,
            usable: lookup.usable().len(),
            word_prob: HashMap::new(),
            features: HashMap::new(),
            conn_prob: HashMap::new(),
            map_memo: HashMap::new(),
            str_memo: HashMap::new(),
        }
    }

    fn word_prob(&mut self, w: usize, t: TermId) -> f64 {
        if let Some(&p) = self.word_prob.get(&(w, t)) {
            return p;
        }
        let key = self.lookup.key(w).unwrap_or_default();
        let p = self
            .models
            .mapping
            .predict(key, self.lookup.pos(w).name(), &self.g.decl(t).name);
        self.word_prob.insert((w, t), p);
        p
    }

    fn log_mapping(&mut self, r: NodeRef) -> f64 {
        if let Some(&v) = self.map_memo.get(&r) {
            return v;
        }
        let n = self.arena.node(r);
        let (term, word, children) = (n.term, n.word, n.children.clone());
        let mut v = match word {
            Some(w) => self.word_prob(w as usize, term).ln(),
            None => 0.0,
        };
        for c in children.iter() {
            v += self.log_mapping(*c);
        }
        self.map_memo.insert(r, v);
        v
    }

    fn connection_prob(&mut self, head: TermId, i: usize, j: usize, s1: (usize, usize), s2: (usize, usize)) -> Result<f64> {
        let fv = match self.features.get(&(s1, s2)) {
            Some(f) => f.clone(),
            None => {
                let f = span_features(self.tree, s1, s2)?.values();
                self.features.insert((s1, s2), f.clone());
                f
            }
        };
        let key = (head, i, j, fv);
        if let Some(&p) = self.conn_prob.get(&key) {
            return Ok(p);
        }
        let conn = Connection {
            head: self.g.decl(head).name.clone(),
            i,
            j,
        };
        let p = match self.models.structure.models.get(&conn.key()) {
            Some(m) => m.predict(&key.3, "1"),
            None => UNSEEN_CONNECTION,
        };
        self.conn_prob.insert(key, p);
        Ok(p)
    }

    fn log_structure(&mut self, r: NodeRef) -> Result<(f64, usize)> {
        if let Some(&v) = self.str_memo.get(&r) {
            return Ok(v);
        }
        let n = self.arena.node(r);
        let (term, children) = (n.term, n.children.clone());
        let spans: Vec<Option<(usize, usize)>> = children.iter().map(|&c| span(self.arena.node(c).mask)).collect();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..children.len() {
            for j in i + 1..children.len() {
                if let (Some(a), Some(b)) = (spans[i], spans[j]) {
                    sum += self.connection_prob(term, i, j, a, b)?.ln();
                    count += 1;
                }
            }
        }
        for &c in children.iter() {
            let (s, k) = self.log_structure(c)?;
            sum += s;
            count += k;
        }
        self.str_memo.insert(r, (sum, count));
        Ok((sum, count))
    }

    /// (coverage, mapping, structure) for one annotated complete program.
    pub fn components(&mut self, r: NodeRef) -> Result<[f64; 3]> {
        let used = self.arena.node(r).mask.count_ones() as usize;
        let cov = coverage_score(used, self.usable);
        let map = self.log_mapping(r).exp();
        let (s, k) = self.log_structure(r)?;
        let st = if k == 0 { 1.0 } else { (s / k as f64).exp() };
        Ok([cov, map, st])
    }
}

/// Component scores for every start-typed candidate, in construction order.
pub fn score_candidates(
    g: &Grammar,
    lookup: &Lookup,
    tree: &ParseTree,
    models: &Models,
    set: &CandidateSet,
) -> Result<Vec<CandidateScores>> {
    let mut scorer = Scorer::new(g, lookup, tree, models, set.arena());
    set.candidates(g)
        .into_iter()
        .map(|c| {
            let maps = c
                .maps
                .iter()
                .map(|&r| Ok((r, scorer.components(r)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(CandidateScores { plain: c.plain, maps })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCandidate {
    #[serde(skip)]
    pub program: Program,
    pub text: String,
    pub map: WitnessMap,
    pub cov: f64,
    pub map_score: f64,
    pub str_score: f64,
    pub combined: f64,
    pub rank: usize,
}

/// Orders candidates by their best combined score (ties by program text)
/// and attaches 1334 ranks.
pub fn rank_candidates(g: &Grammar, arena: &Arena, scores: &[CandidateScores], w: &Weights) -> Vec<ScoredCandidate> {
    let mut out: Vec<ScoredCandidate> = scores
        .iter()
        .map(|c| {
            let (r, x, s) = c.best(w);
            let program = arena.plain_program(g, c.plain);
            ScoredCandidate {
                text: program.to_string(),
                program,
                map: arena.witness_map(r),
                cov: x[0],
                map_score: x[1],
                str_score: x[2],
                combined: s,
                rank: 0,
            }
        })
        .collect();
    out.sort_by(|a, b| b.combined.total_cmp(&a.combined).then_with(|| a.text.cmp(&b.text)));
    let ranks = rank_1334(&out.iter().map(|c| c.combined).collect::<Vec<_>>());
    for (c, r) in out.iter_mut().zip(ranks) {
        c.rank = r;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{NodeLabel, Shape};
    use crate::nlp::PosTag;

    fn flat(n: usize) -> ParseTree {
        ParseTree::from_shape(&Shape::Node(NodeLabel::S, vec![Shape::Leaf(PosTag::Noun); n])).unwrap()
    }

    #[test]
    fn coverage_cases() {
        assert_eq!(coverage_score(6, 10), 0.6);
        assert_eq!(coverage_score(0, 10), 0.0);
        assert_eq!(coverage_score(4, 4), 1.0);
        assert_eq!(coverage_score(0, 0), 0.0);
    }

    #[test]
    fn products_and_means() {
        assert!((mapping_product(&[0.5, 0.4]) - 0.2).abs() < 1e-15);
        assert_eq!(mapping_product(&[]), 1.0);
        assert!((geometric_mean(&[0.25, 0.04]) - 0.1).abs() < 1e-12);
        assert!((geometric_mean(&[0.3]) - 0.3).abs() < 1e-15);
        assert_eq!(geometric_mean(&[]), 1.0);
    }

    #[test]
    fn span_features_cases() {
        let t = flat(7);
        let f = extract_features(&t, 0b111, 0b111_0000).unwrap();
        assert_eq!((f.overlap, f.distance), (1, 2));
        let same = extract_features(&t, 0b10, 0b10).unwrap();
        assert_eq!((same.overlap, same.distance), (0, 0));
        assert!(matches!(extract_features(&t, 0, 1), Err(Error::FeatureUndefined(_))));

        let shallow = flat(2);
        let f = extract_features(&shallow, 0b01, 0b10).unwrap();
        assert_eq!((f.order, f.lca1, f.lca2), (1, 1, 1));
        let g = extract_features(&shallow, 0b10, 0b01).unwrap();
        assert_eq!((g.order, g.overlap, g.distance), (-1, -1, 1));
    }

    #[test]
    fn clamping() {
        let t = flat(20);
        let f = extract_features(&t, 1, 1 << 19).unwrap();
        assert_eq!(f.distance, 19);
        assert_eq!(f.values()[6], "8");
    }

    #[test]
    fn ranks() {
        assert_eq!(rank_1334(&[5.0, 4.0, 3.0]), vec![1, 2, 3]);
        assert_eq!(rank_1334(&[5.0, 5.0, 3.0]), vec![2, 2, 3]);
        assert_eq!(rank_1334(&[1.0; 4]), vec![4; 4]);
        assert_eq!(rank_1334(&[3.0, 5.0]), vec![2, 1]);
        assert!(rank_1334(&[]).is_empty());
    }

    #[test]
    fn combined() {
        let w = Weights {
            cov: 1.0,
            map: 0.0,
            str: 0.0,
        };
        assert_eq!(combined_score(&w, 0.7, 0.2, 0.9), 0.7);
        assert!(Weights::from_array([0.0; 3]).validate().is_err());
        assert!(Weights::EQUAL.validate().is_ok());
    }

    #[test]
    fn unseen_connection_backoff() {
        let s = StructureModels::default();
        let c = Connection {
            head: "F".into(),
            i: 0,
            j: 1,
        };
        let f = extract_features(&flat(2), 1, 2).unwrap();
        assert_eq!(s.predict(&c, &f), 0.5);
    }
}
