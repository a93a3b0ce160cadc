//! Cross-validation, resubstitution, ablation and weight transfer.
//!
//! A pair counts as top-1 when its desired program holds 1334 rank 1, which
//! requires a unique best score. Pairs whose synthesis fails are skipped.
//! Wall times are recorded only on request, so reports without timing are
//! byte-for-byte reproducible.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::TrainingPair;
use crate::domains::DomainAssets;
use crate::error::{Error, Result};
use crate::scoring::{Models, Weights};
use crate::synth;
use crate::training::{self, train_all, train_models, TrainConfig, TrainReport};

/// How training and test pairs are drawn from the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Protocol {
    /// Train and test on the whole corpus.
    Resubstitution,
    /// Seeded shuffle into `k` folds; each fold is tested after training on the rest.
    CrossValidation { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOptions {
    pub train: TrainConfig,
    /// Record per-sentence synthesis wall time.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            train: TrainConfig::default(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub pair: usize,
    pub fold: usize,
    /// 1334 rank of the desired program; `None` when it was not produced.
    pub rank: Option<usize>,
    pub candidates: usize,
    /// Why the pair was skipped.
    pub skipped: Option<String>,
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Rates {
    pub total: usize,
    pub top1: usize,
    pub top3: usize,
    pub beyond3: usize,
    pub skipped: usize,
    pub top1_rate: f64,
    pub top3_rate: f64,
    pub beyond3_rate: f64,
    pub skipped_rate: f64,
}

impl Rates {
    pub fn of(outcomes: &[PairOutcome]) -> Rates {
        let total = outcomes.len();
        let skipped = outcomes.iter().filter(|o| o.skipped.is_some()).count();
        let ranked = |max: usize| outcomes.iter().filter(|o| o.rank.is_some_and(|r| r <= max)).count();
        let top1 = ranked(1);
        let top3 = ranked(3);
        let beyond3 = total - skipped - top3;
        let frac = |n: usize| if total == 0 { 0.0 } else { n as f64 / total as f64 };
        Rates {
            total,
            top1,
            top3,
            beyond3,
            skipped,
            top1_rate: frac(top1),
            top3_rate: frac(top3),
            beyond3_rate: frac(beyond3),
            skipped_rate: frac(skipped),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub p85_ms: f64,
    pub max_ms: f64,
}

impl Timing {
    /// Mean, nearest-rank 85th percentile and maximum.
    pub fn of(samples: &[f64]) -> Option<Timing> {
        if samples.is_empty() {
            return None;
        }
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let rank = ((0.85 * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
        Some(Timing {
            mean_ms: xs.iter().sum::<f64>() / xs.len() as f64,
            p85_ms: xs[rank - 1],
            max_ms: xs[xs.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_pairs: Vec<usize>,
    pub weights: Option<Weights>,
    pub rates: Rates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub domain: String,
    pub protocol: Protocol,
    /// Components pinned to zero, in (cov, map, str) order.
    pub dropped: [bool; 3],
    pub folds: Vec<FoldReport>,
    pub aggregate: Rates,
    pub timing: Option<Timing>,
    pub outcomes: Vec<PairOutcome>,
}

impl EvalReport {
    fn build(domain: &str, protocol: Protocol, dropped: [bool; 3], folds: Vec<FoldReport>, mut outcomes: Vec<PairOutcome>) -> Self {
        outcomes.sort_by_key(|o| o.pair);
        let times: Vec<f64> = outcomes.iter().filter_map(|o| o.elapsed_ms).collect();
        EvalReport {
            domain: domain.to_string(),
            protocol,
            dropped,
            folds,
            aggregate: Rates::of(&outcomes),
            timing: Timing::of(&times),
            outcomes,
        }
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let a = &self.aggregate;
        let _ = writeln!(s, "domain: {}", self.domain);
        match self.protocol {
            Protocol::Resubstitution => {
                let _ = writeln!(s, "protocol: resubstitution");
            }
            Protocol::CrossValidation { k, seed } => {
                let _ = writeln!(s, "protocol: {k}-fold cross-validation, seed {seed}");
            }
        }
        let names = ["cov", "map", "str"];
        let dropped: Vec<&str> = names.iter().zip(self.dropped).filter(|(_, d)| *d).map(|(n, _)| *n).collect();
        if !dropped.is_empty() {
            let _ = writeln!(s, "dropped: {}", dropped.join(","));
        }
        let _ = writeln!(
            s,
            "pairs: {}  top1: {} ({:.3})  top3: {} ({:.3})  beyond3: {} ({:.3})  skipped: {} ({:.3})",
            a.total, a.top1, a.top1_rate, a.top3, a.top3_rate, a.beyond3, a.beyond3_rate, a.skipped, a.skipped_rate
        );
        for f in &self.folds {
            let w = f
                .weights
                .map(|w| format!("  weights [{:.6}, {:.6}, {:.6}]", w.cov, w.map, w.str))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "fold {}: pairs {}  top1 {:.3}  top3 {:.3}{w}",
                f.fold, f.rates.total, f.rates.top1_rate, f.rates.top3_rate
            );
        }
        if let Some(t) = &self.timing {
            let _ = writeln!(s, "time ms: mean {:.1}  p85 {:.1}  max {:.1}", t.mean_ms, t.p85_ms, t.max_ms);
        }
        s
    }

    /// One tab-separated row per pair, for plotting.
    pub fn to_table(&self) -> String {
        let mut s = String::from("pair\tfold\trank\tcandidates\tskipped\telapsed_ms\n");
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                o.pair,
                o.fold,
                o.rank.map(|r| r.to_string()).unwrap_or_else(|| "-".into()),
                o.candidates,
                o.skipped.as_deref().unwrap_or("-"),
                o.elapsed_ms.map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into())
            );
        }
        s
    }
}

/// Synthesizes one pair and locates its desired program.
pub fn evaluate_pair(
    assets: &DomainAssets,
    dict: &crate::lexicon::Dictionary,
    models: &Models,
    weights: &Weights,
    pair: &TrainingPair,
    timing: bool,
) -> (Option<usize>, usize, Option<String>, Option<f64>) {
    let start = Instant::now();
    let result = synth::synthesize(&assets.grammar, dict, models, weights, &pair.analysis);
    let elapsed = timing.then(|| start.elapsed().as_secs_f64() * 1000.0);
    match result {
        Ok(ranked) => {
            let rank = ranked.iter().find(|c| c.program == pair.program).map(|c| c.rank);
            (rank, ranked.len(), None, elapsed)
        }
        Err(e) => (None, 0, Some(e.to_string()), elapsed),
    }
}

fn folds(n: usize, protocol: Protocol) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    match protocol {
        Protocol::Resubstitution => {
            let all: Vec<usize> = (0..n).collect();
            Ok(vec![(all.clone(), all)])
        }
        Protocol::CrossValidation { k, seed } => {
            if k < 2 {
                return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
            }
            if n < k {
                return Err(Error::CorpusTooSmall { size: n, k });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            Ok((0..k)
                .map(|f| {
                    let mut test: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % k == f).map(|(_, &p)| p).collect();
                    let mut train: Vec<usize> = order.iter().enumerate().filter(|(i, _)| i % k != f).map(|(_, &p)| p).collect();
                    test.sort_unstable();
                    train.sort_unstable();
                    (train, test)
                })
                .collect())
        }
    }
}

fn run(
    assets: &DomainAssets,
    protocol: Protocol,
    opts: &EvalOptions,
    dropped: [bool; 3],
    fixed: Option<Weights>,
) -> Result<EvalReport> {
    let corpus = &assets.corpus;
    let g = &assets.grammar;
    let mut fold_reports = Vec::new();
    let mut outcomes = Vec::new();
    for (fold, (train_idx, test_idx)) in folds(corpus.len(), protocol)?.into_iter().enumerate() {
        let train: Vec<TrainingPair> = train_idx.iter().map(|&i| corpus[i].clone()).collect();
        let trained = match fixed {
            Some(w) => {
                let mut report = TrainReport::default();
                train_models(g, &assets.dictionary, &train, &opts.train, &mut report).map(|(m, _, d)| (m, d, w))
            }
            None => train_all(&assets.name, g, &assets.dictionary, &train, &opts.train)
                .and_then(|(b, _)| Ok((b.models.clone(), b.dictionary(g, &assets.dictionary)?, b.weights))),
        };
        let mut fold_outcomes = Vec::new();
        let weights = match trained {
            Ok((models, dict, w)) => {
                for &i in &test_idx {
                    let (rank, candidates, skipped, elapsed_ms) =
                        evaluate_pair(assets, &dict, &models, &w, &corpus[i], opts.timing);
                    fold_outcomes.push(PairOutcome {
                        pair: i,
                        fold,
                        rank,
                        candidates,
                        skipped,
                        elapsed_ms,
                    });
                }
                Some(w)
            }
            Err(e) => {
                for &i in &test_idx {
                    fold_outcomes.push(PairOutcome {
                        pair: i,
                        fold,
                        rank: None,
                        candidates: 0,
                        skipped: Some(format!("training failed: {e}")),
                        elapsed_ms: None,
                    });
                }
                None
            }
        };
        fold_reports.push(FoldReport {
            fold,
            test_pairs: test_idx,
            weights,
            rates: Rates::of(&fold_outcomes),
        });
        outcomes.extend(fold_outcomes);
    }
    Ok(EvalReport::build(&assets.name, protocol, dropped, fold_reports, outcomes))
}

/// Full pipeline under any protocol.
pub fn evaluate(assets: &DomainAssets, protocol: Protocol, opts: &EvalOptions) -> Result<EvalReport> {
    run(assets, protocol, opts, [false; 3], None)
}

/// Classifiers trained per fold, ranking with the given weights.
pub fn fixed_weights(assets: &DomainAssets, protocol: Protocol, weights: Weights, opts: &EvalOptions) -> Result<EvalReport> {
    weights.validate()?;
    run(assets, protocol, opts, [false; 3], Some(weights))
}

/// Full pipeline per fold.
pub fn cross_validate(assets: &DomainAssets, k: usize, seed: u64, opts: &EvalOptions) -> Result<EvalReport> {
    run(assets, Protocol::CrossValidation { k, seed }, opts, [false; 3], None)
}

/// Train on everything, test on everything.
pub fn resubstitution(assets: &DomainAssets, opts: &EvalOptions) -> Result<EvalReport> {
    run(assets, Protocol::Resubstitution, opts, [false; 3], None)
}

/// Pins the dropped components' weights to zero and learns the rest.
pub fn ablate(assets: &DomainAssets, protocol: Protocol, drop: [bool; 3], opts: &EvalOptions) -> Result<EvalReport> {
    if drop.iter().all(|&d| d) {
        return Err(Error::Config("cannot drop every score component".into()));
    }
    let mut opts = opts.clone();
    for (i, &d) in drop.iter().enumerate() {
        if d {
            opts.train.w0[i] = 0.0;
            opts.train.free[i] = false;
        }
    }
    run(assets, protocol, &opts, drop, None)
}

/// Evaluates `target` with classifiers trained on its own folds and the
/// weight vector of another domain's bundle.
pub fn transfer_weights(
    source: Option<&training::ModelBundle>,
    target: &DomainAssets,
    protocol: Protocol,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let source = source.ok_or_else(|| Error::Untrained("transfer source has no model bundle".into()))?;
    source.weights.validate()?;
    run(target, protocol, opts, [false; 3], Some(source.weights))
}
