//! Training data generation, classifier and weight learning, model bundles.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingPair;
use crate::dsl::{Arg, Grammar, Program, TermId};
use crate::error::{Error, Result};
use crate::lexicon::{Dictionary, Lookup};
use crate::nlp::PosTag;
use crate::scoring::{span_features, CandidateScores, Connection, MappingModel, Models, StructureModels, Weights};
use crate::stats::{f_loss_grad, gradient_descent, LossConfig, SampleCounts, SentenceScores};
use crate::synth::{self, Arena, CandidateSet, NodeRef, PlainId, WitnessMap};

pub const BUNDLE_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    /// Dictionary entries whose best predicted probability falls below this
    /// are dropped after the mapping classifier is trained.
    pub prune_threshold: f64,
    pub capacity: usize,
    pub witness_cap: usize,
    pub w0: [f64; 3],
    /// Components whose weight is learned; the others stay at `w0`.
    pub free: [bool; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossConfig::default(),
            prune_threshold: 0.02,
            capacity: synth::DEFAULT_CAPACITY,
            witness_cap: synth::DEFAULT_WITNESS_CAP,
            w0: [1.0, 1.0, 1.0],
            free: [true; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub pair: usize,
    pub stage: String,
    pub reason: String,
}

/// (used word count, number of internal nodes whose children use disjoint
/// word spans), compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Likeability {
    pub used: usize,
    pub djs: usize,
}

pub fn likeability(p: &Program, lookup: &Lookup, m: &WitnessMap) -> Likeability {
    let used = synth::used_words(lookup, m).len();
    let mut djs = 0;
    for (path, node) in p.walk() {
        if node.args.len() < 2 {
            continue;
        }
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for i in 0..node.args.len() {
            let mut prefix = path.clone();
            prefix.push(i);
            let words: Vec<usize> = m
                .assignments
                .iter()
                .filter(|(_, q)| q.starts_with(&prefix))
                .map(|(&w, _)| w)
                .collect();
            if let (Some(&lo), Some(&hi)) = (words.iter().min(), words.iter().max()) {
                spans.push((lo, hi));
            }
        }
        let disjoint = spans
            .iter()
            .enumerate()
            .all(|(i, a)| spans[i + 1..].iter().all(|b| a.1 < b.0 || b.1 < a.0));
        if disjoint {
            djs += 1;
        }
    }
    Likeability { used, djs }
}

/// The most likeable witness map; ties go to the smallest serialization.
pub fn choose_map(g: &Grammar, lookup: &Lookup, p: &Program, cap: usize) -> Result<Option<WitnessMap>> {
    let maps = synth::witness_maps_with(g, lookup, p, cap)?;
    Ok(maps
        .into_iter()
        .map(|m| (likeability(p, lookup, &m), m.serialize(), m))
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)))
        .map(|(_, _, m)| m))
}

#[derive(Debug, Clone, Default)]
pub struct MappingData {
    pub samples: SampleCounts,
    /// Chosen map per pair (`None` when skipped).
    pub maps: Vec<Option<WitnessMap>>,
    pub skipped: Vec<Skipped>,
}

pub fn gen_mapping_training(g: &Grammar, d: &Dictionary, corpus: &[TrainingPair], cap: usize) -> MappingData {
    let mut data = MappingData::default();
    for (idx, pair) in corpus.iter().enumerate() {
        let lookup = d.analyze(g, &pair.analysis.sentence);
        let chosen = match choose_map(g, &lookup, &pair.program, cap) {
            Ok(Some(m)) => Some(m),
            Ok(None) => {
                data.skipped.push(Skipped {
                    pair: idx,
                    stage: "mapping".into(),
                    reason: "no witness map".into(),
                });
                None
            }
            Err(e) => {
                data.skipped.push(Skipped {
                    pair: idx,
                    stage: "mapping".into(),
                    reason: e.to_string(),
                });
                None
            }
        };
        if let Some(m) = &chosen {
            for (&w, path) in &m.assignments {
                let term = &pair.program.at(path).expect("map paths index into the program").terminal;
                let key = lookup.key(w).unwrap_or_default();
                data.samples
                    .add(&MappingModel::features(key, lookup.pos(w).name()), term);
            }
        }
        data.maps.push(chosen);
    }
    data
}

/// Word-suppliable terminals: the class set of the mapping classifier.
fn mapping_classes(g: &Grammar) -> Vec<String> {
    g.terminals()
        .filter(|(_, d)| !d.is_tuple())
        .map(|(_, d)| d.name.clone())
        .collect()
}

pub fn train_mapping(g: &Grammar, samples: &SampleCounts) -> Result<MappingModel> {
    Ok(MappingModel {
        nb: samples.train(&mapping_classes(g))?,
    })
}

/// Entries whose word occurred in training but whose best probability over
/// all POS tags is below `threshold`. Pairs in `keep` are never dropped.
pub fn prune_candidates(
    g: &Grammar,
    d: &Dictionary,
    mapping: &MappingModel,
    threshold: f64,
    keep: &BTreeSet<(String, TermId)>,
) -> Vec<(String, String)> {
    let seen: BTreeSet<&str> = mapping.nb.feature_counts[0].keys().map(String::as_str).collect();
    d.entries()
        .filter(|(w, t)| seen.contains(w) && !keep.contains(&(w.to_string(), *t)))
        .filter(|(w, t)| {
            let name = &g.decl(*t).name;
            let best = PosTag::ALL
                .iter()
                .map(|p| mapping.predict(w, p.name(), name))
                .fold(0.0, f64::max);
            best < threshold
        })
        .map(|(w, t)| (w.to_string(), g.decl(t).name.clone()))
        .collect()
}

pub fn apply_pruning(g: &Grammar, d: &Dictionary, pruned: &[(String, String)]) -> Result<Dictionary> {
    let mut out = d.clone();
    for (w, t) in pruned {
        let term = g.terminal(t).ok_or_else(|| Error::UnknownTerminal(t.clone()))?;
        out.remove(w, term);
    }
    Ok(out)
}

/// Dictionary entries used by the chosen training maps.
fn used_entries(g: &Grammar, d: &Dictionary, corpus: &[TrainingPair], maps: &[Option<WitnessMap>]) -> BTreeSet<(String, TermId)> {
    let mut keep = BTreeSet::new();
    for (pair, m) in corpus.iter().zip(maps) {
        let Some(m) = m else { continue };
        let lookup = d.analyze(g, &pair.analysis.sentence);
        for (&w, path) in &m.assignments {
            let p = pair.program.at(path).expect("map paths index into the program");
            if let (Some(key), Some(t)) = (lookup.key(w), g.terminal(&p.terminal)) {
                keep.insert((key.to_string(), t));
            }
        }
    }
    keep
}

/// Combinations of the desired program as (head, i, j, left, right) plain ids
/// in `arena`. Subprograms never built there cannot match and are left out.
fn desired_combinations(g: &Grammar, arena: &Arena, p: &Program) -> HashSet<(TermId, usize, usize, PlainId, PlainId)> {
    let mut out = HashSet::new();
    for (_, node) in p.walk() {
        let Some(head) = g.terminal(&node.terminal) else { continue };
        let ids: Vec<Option<PlainId>> = node
            .args
            .iter()
            .map(|a| match a {
                Arg::Filled(c) => arena.find_plain(g, c),
                Arg::Hole(_) => None,
            })
            .collect();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                if let (Some(a), Some(b)) = (ids[i], ids[j]) {
                    out.insert((head, i, j, a, b));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct StructureData {
    pub samples: BTreeMap<String, SampleCounts>,
    pub skipped: Vec<Skipped>,
}

fn structure_samples(
    g: &Grammar,
    set: &CandidateSet,
    tree: &crate::nlp::ParseTree,
    desired: &HashSet<(TermId, usize, usize, PlainId, PlainId)>,
    out: &mut BTreeMap<String, SampleCounts>,
) -> Result<()> {
    let arena = set.arena();
    let mut features: BTreeMap<((usize, usize), (usize, usize)), Vec<String>> = BTreeMap::new();
    let mut stack: Vec<NodeRef> = Vec::new();
    for cand in set.candidates(g) {
        stack.extend(cand.maps.iter().copied());
        while let Some(r) = stack.pop() {
            let n = arena.node(r);
            let spans: Vec<_> = n.children.iter().map(|&c| crate::scoring::span(arena.node(c).mask)).collect();
            for i in 0..n.children.len() {
                for j in i + 1..n.children.len() {
                    let (Some(a), Some(b)) = (spans[i], spans[j]) else { continue };
                    let fv = match features.get(&(a, b)) {
                        Some(f) => f,
                        None => features.entry((a, b)).or_insert(span_features(tree, a, b)?.values()),
                    };
                    let pi = arena.node(n.children[i]).plain;
                    let pj = arena.node(n.children[j]).plain;
                    let label = if desired.contains(&(n.term, i, j, pi, pj)) { "1" } else { "0" };
                    let conn = Connection {
                        head: g.decl(n.term).name.clone(),
                        i,
                        j,
                    };
                    out.entry(conn.key()).or_default().add(fv, label);
                }
            }
            stack.extend(n.children.iter().copied());
        }
    }
    Ok(())
}

pub fn gen_structure_training(g: &Grammar, d: &Dictionary, corpus: &[TrainingPair], cap: usize) -> StructureData {
    let mut data = StructureData::default();
    for (idx, pair) in corpus.iter().enumerate() {
        let lookup = d.analyze(g, &pair.analysis.sentence);
        let result = synth::synth_lookup(g, &lookup, cap).and_then(|set| {
            let desired = desired_combinations(g, set.arena(), &pair.program);
            structure_samples(g, &set, &pair.analysis.tree, &desired, &mut data.samples)
        });
        if let Err(e) = result {
            data.skipped.push(Skipped {
                pair: idx,
                stage: "structure".into(),
                reason: e.to_string(),
            });
        }
    }
    data
}

pub fn train_structure(data: &BTreeMap<String, SampleCounts>) -> Result<StructureModels> {
    let classes = ["0".to_string(), "1".to_string()];
    let mut models = BTreeMap::new();
    for (k, s) in data {
        models.insert(k.clone(), s.train(&classes)?);
    }
    Ok(StructureModels { models })
}

/// Drops vectors that another vector dominates componentwise; with
/// non-negative weights they can never attain the maximum.
pub fn pareto_front(xs: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut sorted: Vec<[f64; 3]> = xs.to_vec();
    sorted.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])).then(b[2].total_cmp(&a[2])));
    sorted.dedup();
    let mut front: Vec<[f64; 3]> = Vec::new();
    for x in sorted {
        if !front.iter().any(|f| f[0] >= x[0] && f[1] >= x[1] && f[2] >= x[2]) {
            front.push(x);
        }
    }
    front
}

/// Score vectors of one training sentence, reduced for weight learning.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSample {
    pub pair: usize,
    pub scores: SentenceScores,
}

impl RankingSample {
    /// Whether the desired program ranks first without ties under `w`.
    pub fn top1(&self, w: &[f64; 3]) -> bool {
        let best = |xs: &[[f64; 3]]| xs.iter().map(|x| w[0] * x[0] + w[1] * x[1] + w[2] * x[2]).fold(f64::NEG_INFINITY, f64::max);
        best(&self.scores.desired) > best(&self.scores.wrong)
    }
}

/// Splits candidate scores into desired and wrong vectors. `None` when the
/// desired program is not among the candidates.
pub fn ranking_sample(pair: usize, desired: Option<PlainId>, scores: &[CandidateScores]) -> Option<RankingSample> {
    let desired = desired?;
    let mut d = Vec::new();
    let mut wrong = Vec::new();
    for c in scores {
        let target = if c.plain == desired { &mut d } else { &mut wrong };
        target.extend(c.maps.iter().map(|(_, x)| *x));
    }
    if d.is_empty() {
        return None;
    }
    Some(RankingSample {
        pair,
        scores: SentenceScores {
            desired: pareto_front(&d),
            wrong: pareto_front(&wrong),
        },
    })
}

/// Collects ranking samples for every pair the trained models can score.
pub fn ranking_samples(
    g: &Grammar,
    d: &Dictionary,
    models: &Models,
    corpus: &[TrainingPair],
    cap: usize,
    skipped: &mut Vec<Skipped>,
) -> Vec<RankingSample> {
    let mut out = Vec::new();
    for (idx, pair) in corpus.iter().enumerate() {
        match synth::score_sentence(g, d, models, &pair.analysis, cap) {
            Ok((_, set, scores)) => {
                let desired = set.arena().find_plain(g, &pair.program);
                match ranking_sample(idx, desired, &scores) {
                    Some(s) => out.push(s),
                    None => {
                        warn!("pair {idx}: desired program is not among the candidates");
                        skipped.push(Skipped {
                            pair: idx,
                            stage: "weights".into(),
                            reason: "desired program not synthesized".into(),
                        });
                    }
                }
            }
            Err(e) => skipped.push(Skipped {
                pair: idx,
                stage: "weights".into(),
                reason: e.to_string(),
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    pub weights: Weights,
    pub top1: usize,
    pub loss: f64,
    pub iterations: usize,
    pub sentences: usize,
}

/// Gradient descent on the smoothed loss. Among the accepted iterates the
/// one ranking the most sentences first wins, then the lowest loss.
pub fn learn_weights(samples: &[RankingSample], cfg: &TrainConfig) -> Result<WeightFit> {
    if samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let contested: Vec<SentenceScores> = samples
        .iter()
        .filter(|s| !s.scores.wrong.is_empty())
        .map(|s| s.scores.clone())
        .collect();
    let top1 = |w: &[f64; 3]| samples.iter().filter(|s| s.top1(w)).count();
    let w0 = cfg.w0;
    if contested.is_empty() {
        return Ok(WeightFit {
            weights: Weights::from_array(w0),
            top1: top1(&w0),
            loss: 0.0,
            iterations: 0,
            sentences: samples.len(),
        });
    }
    let c = cfg.loss.c;
    let descent = gradient_descent(
        |w| {
            let (f, g) = f_loss_grad(&[w[0], w[1], w[2]], &contested, c)?;
            Ok((f, g.to_vec()))
        },
        &w0,
        &cfg.free,
        &cfg.loss,
    )?;
    let mut best: Option<(usize, f64, [f64; 3])> = None;
    for step in &descent.trace {
        let w = [step.w[0], step.w[1], step.w[2]];
        let t = top1(&w);
        let better = match best {
            None => true,
            Some((bt, bl, _)) => t > bt || (t == bt && step.objective < bl),
        };
        if better {
            best = Some((t, step.objective, w));
        }
    }
    let (t, loss, w) = best.expect("trace holds w0");
    info!("weights {w:?}: top-1 {t}/{} loss {loss:.6}", samples.len());
    Ok(WeightFit {
        weights: Weights::from_array(w),
        top1: t,
        loss,
        iterations: descent.trace.len() - 1,
        sentences: samples.len(),
    })
}

/// Classifiers, weights and the dictionary pruning list for one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: u32,
    pub domain: String,
    pub grammar_fingerprint: String,
    pub dictionary_fingerprint: String,
    pub models: Models,
    pub weights: Weights,
    pub pruned: Vec<(String, String)>,
}

impl ModelBundle {
    pub fn save(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Parses a bundle and checks it was trained on these assets.
    pub fn load(text: &str, g: &Grammar, d: &Dictionary) -> Result<ModelBundle> {
        let b: ModelBundle = serde_json::from_str(text).map_err(|e| Error::Bundle(e.to_string()))?;
        if b.format != BUNDLE_FORMAT {
            return Err(Error::Bundle(format!("unsupported format {}", b.format)));
        }
        if b.grammar_fingerprint != g.fingerprint() {
            return Err(Error::FingerprintMismatch("grammar".into()));
        }
        if b.dictionary_fingerprint != dictionary_fingerprint(g, d) {
            return Err(Error::FingerprintMismatch("dictionary".into()));
        }
        Ok(b)
    }

    /// The dictionary used at synthesis time.
    pub fn dictionary(&self, g: &Grammar, d: &Dictionary) -> Result<Dictionary> {
        apply_pruning(g, d, &self.pruned)
    }
}

pub fn dictionary_fingerprint(g: &Grammar, d: &Dictionary) -> String {
    crate::fingerprint(d.save(g).as_bytes())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub pairs: usize,
    pub mapping_samples: u64,
    pub connections: usize,
    pub pruned: usize,
    pub skipped: Vec<Skipped>,
    pub fit: Option<WeightFit>,
}

/// Classifiers for a corpus without weight learning, plus the pruned dictionary.
pub fn train_models(
    g: &Grammar,
    d: &Dictionary,
    corpus: &[TrainingPair],
    cfg: &TrainConfig,
    report: &mut TrainReport,
) -> Result<(Models, Vec<(String, String)>, Dictionary)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    report.pairs = corpus.len();
    let mapping_data = gen_mapping_training(g, d, corpus, cfg.witness_cap);
    report.skipped.extend(mapping_data.skipped.iter().cloned());
    if mapping_data.samples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    report.mapping_samples = mapping_data.samples.len();
    let mapping = train_mapping(g, &mapping_data.samples)?;
    let keep = used_entries(g, d, corpus, &mapping_data.maps);
    let pruned = prune_candidates(g, d, &mapping, cfg.prune_threshold, &keep);
    report.pruned = pruned.len();
    let dict = apply_pruning(g, d, &pruned)?;
    let structure_data = gen_structure_training(g, &dict, corpus, cfg.capacity);
    report.skipped.extend(structure_data.skipped.iter().cloned());
    let structure = train_structure(&structure_data.samples)?;
    report.connections = structure.models.len();
    Ok((Models { mapping, structure }, pruned, dict))
}

/// The full pipeline: mapping classifier, pruning, structure classifiers, weights.
pub fn train_all(
    domain: &str,
    g: &Grammar,
    d: &Dictionary,
    corpus: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainReport)> {
    let mut report = TrainReport::default();
    let (models, pruned, dict) = train_models(g, d, corpus, cfg, &mut report)?;
    let samples = ranking_samples(g, &dict, &models, corpus, cfg.capacity, &mut report.skipped);
    let fit = learn_weights(&samples, cfg)?;
    let bundle = ModelBundle {
        format: BUNDLE_FORMAT,
        domain: domain.to_string(),
        grammar_fingerprint: g.fingerprint(),
        dictionary_fingerprint: dictionary_fingerprint(g, d),
        models,
        weights: fit.weights,
        pruned,
    };
    report.fit = Some(fit);
    Ok((bundle, report))
}

/// A trained domain: pruned dictionary, classifiers and weights.
#[derive(Debug, Clone)]
pub struct Translator {
    pub dictionary: Dictionary,
    pub models: Models,
    pub weights: Weights,
    /// Bag capacity for one sentence.
    pub capacity: usize,
}

impl Translator {
    pub fn from_bundle(b: &ModelBundle, g: &Grammar, d: &Dictionary) -> Result<Translator> {
        Ok(Translator {
            dictionary: b.dictionary(g, d)?,
            models: b.models.clone(),
            weights: b.weights,
            capacity: synth::DEFAULT_CAPACITY,
        })
    }

    pub fn translate(&self, g: &Grammar, analysis: &crate::nlp::Analysis) -> Result<Vec<crate::scoring::ScoredCandidate>> {
        self.translate_with_capacity(g, analysis, self.capacity)
    }

    pub fn translate_with_capacity(
        &self,
        g: &Grammar,
        analysis: &crate::nlp::Analysis,
        cap: usize,
    ) -> Result<Vec<crate::scoring::ScoredCandidate>> {
        let (_, set, scores) = synth::score_sentence(g, &self.dictionary, &self.models, analysis, cap)?;
        Ok(crate::scoring::rank_candidates(g, set.arena(), &scores, &self.weights))
    }
}
