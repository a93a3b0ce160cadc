use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;

use nl2dsl::domains::{apply_text_edit, builtin_domains, DomainAssets, EditDocument};
use nl2dsl::dsl::{check, fill_defaults, parse_program, sub_all, Arg, Program};
use nl2dsl::eval::{PairOutcome, Rates};
use nl2dsl::lexicon::Dictionary;
use nl2dsl::nlp::{Analyzer, BuiltinAnalyzer};
use nl2dsl::scoring::{coverage_score, geometric_mean, mapping_product, rank_1334};
use nl2dsl::stats::{f_loss, gradient_descent, lse_max, LossConfig, SampleCounts, SentenceScores};
use nl2dsl::synth::{required_occurrences, synth_no_score};

fn domains() -> &'static std::collections::BTreeMap<String, DomainAssets> {
    static D: OnceLock<std::collections::BTreeMap<String, DomainAssets>> = OnceLock::new();
    D.get_or_init(|| builtin_domains(&BuiltinAnalyzer::new()))
}

fn domain_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["text-editing", "automata", "atis"])
}

/// A sentence made of dictionary words of the domain plus quoted strings and numbers.
fn sentence_for(d: &DomainAssets, picks: &[usize], extras: &[u8]) -> String {
    let words: Vec<&str> = {
        let mut v: Vec<&str> = d.dictionary.entries().map(|(w, _)| w).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut out: Vec<String> = picks.iter().map(|&i| words[i % words.len()].to_string()).collect();
    for (k, &e) in extras.iter().enumerate() {
        let tok = if e % 2 == 0 { format!("\"s{e}\"") } else { (e % 7).to_string() };
        let at = (e as usize + k) % (out.len() + 1);
        out.insert(at, tok);
    }
    out.join(" ")
}

fn document() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "b", "foo", "P.O. BOX", "12", " ", " ", "\n", "\n", "*", "TODO", "St.", "<url>", "</url>", "&", "#"]),
        0..30,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn emitted_programs_are_sound_and_round_trip(
        name in domain_name(),
        picks in prop::collection::vec(0usize..1000, 1..5),
        extras in prop::collection::vec(any::<u8>(), 0..2),
    ) {
        let d = &domains()[name];
        let text = sentence_for(d, &picks, &extras);
        let analysis = BuiltinAnalyzer::new().analyze(&text).unwrap();
        let set = synth_no_score(&d.grammar, &d.dictionary, &analysis.sentence).unwrap();
        for (p, m) in set.tuples(&d.grammar) {
            prop_assert!(check(&d.grammar, &p), "{p}");
            let printed = p.to_string();
            if p.is_complete() {
                prop_assert_eq!(parse_program(&d.grammar, &printed).unwrap(), p.clone());
                // every occurrence that needs a word has its own; defaults may also take one
                let worded = p
                    .walk()
                    .into_iter()
                    .filter(|(_, n)| !d.grammar.decl(d.grammar.terminal(&n.terminal).unwrap()).is_tuple())
                    .count();
                prop_assert!(m.len() >= required_occurrences(&d.grammar, &p).len(), "{}", printed);
                prop_assert!(m.len() <= worded, "{}", printed);
                let paths: BTreeSet<&Vec<usize>> = m.assignments.values().collect();
                prop_assert_eq!(paths.len(), m.len());
                for path in m.assignments.values() {
                    let node = p.at(path).unwrap();
                    prop_assert!(!d.grammar.decl(d.grammar.terminal(&node.terminal).unwrap()).is_tuple());
                }
            } else {
                for a in &p.args {
                    if let Arg::Filled(c) = a {
                        prop_assert!(c.is_complete(), "nested hole in {printed}");
                    }
                }
                if let Ok(filled) = fill_defaults(&d.grammar, &p) {
                    for f in filled {
                        prop_assert!(f.is_complete() && check(&d.grammar, &f), "{f}");
                    }
                }
            }
        }
    }

    #[test]
    fn sub_all_is_bounded_by_holes(
        name in domain_name(),
        picks in prop::collection::vec(0usize..1000, 1..4),
    ) {
        let d = &domains()[name];
        let analysis = BuiltinAnalyzer::new().analyze(&sentence_for(d, &picks, &[2])).unwrap();
        let set = synth_no_score(&d.grammar, &d.dictionary, &analysis.sentence).unwrap();
        let tuples = set.tuples(&d.grammar);
        let partial: Vec<&Program> = tuples.iter().map(|t| &t.0).filter(|p| !p.is_complete()).take(20).collect();
        let complete: Vec<&Program> = tuples.iter().map(|t| &t.0).filter(|p| p.is_complete()).take(20).collect();
        for p in &partial {
            for q in &complete {
                let out = sub_all(&d.grammar, p, q);
                prop_assert!(out.len() <= p.hole_count());
                for r in out {
                    prop_assert!(check(&d.grammar, &r));
                }
            }
        }
    }

    #[test]
    fn text_edits_are_deterministic_and_total(doc in document(), pick in 0usize..1000) {
        let d = &domains()["text-editing"];
        let pair = &d.corpus[pick % d.corpus.len()];
        let input = EditDocument::new(doc.clone());
        let a = apply_text_edit(&pair.program, &input);
        let b = apply_text_edit(&pair.program, &input);
        prop_assert!(a.is_ok(), "{}: {:?}", pair.program, a);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn replacing_a_string_by_itself_is_identity(doc in document(), s in prop::sample::select(vec!["a", "foo", "*", "12", "P.O. BOX"])) {
        let g = &domains()["text-editing"].grammar;
        let p = parse_program(g, &format!("REPLACE(SelectStr(STRING(\"{s}\"), ALWAYS, ALL), BY(STRING(\"{s}\")), DOCUMENT)")).unwrap();
        prop_assert_eq!(apply_text_edit(&p, &EditDocument::new(doc.clone())).unwrap().text, doc);
    }

    #[test]
    fn lookup_ignores_case(name in domain_name(), picks in prop::collection::vec(0usize..1000, 1..6)) {
        let d = &domains()[name];
        let text = sentence_for(d, &picks, &[]);
        let a = BuiltinAnalyzer::new();
        let lower = d.dictionary.analyze(&d.grammar, &a.analyze(&text).unwrap().sentence);
        let upper = d.dictionary.analyze(&d.grammar, &a.analyze(&text.to_uppercase()).unwrap().sentence);
        prop_assert_eq!(lower.len(), upper.len());
        for i in 0..lower.len() {
            prop_assert_eq!(lower.hits(i), upper.hits(i));
        }
    }

    #[test]
    fn dictionary_save_load_is_identity(name in domain_name()) {
        let d = &domains()[name];
        let text = d.dictionary.save(&d.grammar);
        let back = Dictionary::load(&d.grammar, &text).unwrap();
        prop_assert_eq!(back.save(&d.grammar), text);
        prop_assert_eq!(back.len(), d.dictionary.len());
    }
}

proptest! {
    #[test]
    fn analysis_is_deterministic_and_tree_is_metric(picks in prop::collection::vec(0usize..1000, 1..8)) {
        let d = &domains()["text-editing"];
        let text = sentence_for(d, &picks, &[4]);
        let a = BuiltinAnalyzer::new();
        let x = a.analyze(&text).unwrap();
        prop_assert_eq!(&x, &a.analyze(&text).unwrap());
        let t = &x.tree;
        let n = t.len();
        for i in 0..n {
            prop_assert_eq!(t.tree_distance(i, i).unwrap(), 0);
            for j in 0..n {
                let dij = t.tree_distance(i, j).unwrap();
                prop_assert_eq!(dij, t.tree_distance(j, i).unwrap());
                if i != j {
                    prop_assert!(dij > 0);
                    prop_assert_ne!(t.in_order_index(i).unwrap(), t.in_order_index(j).unwrap());
                }
                for k in 0..n {
                    prop_assert!(dij <= t.tree_distance(i, k).unwrap() + t.tree_distance(k, j).unwrap());
                }
            }
        }
    }

    #[test]
    fn lse_is_a_tight_upper_bound(values in prop::collection::vec(-100.0f64..100.0, 1..10), c in 0.5f64..30.0) {
        let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = lse_max(&values, c);
        prop_assert!(s >= m - 1e-9);
        prop_assert!(s <= m + (values.len() as f64).ln() / c + 1e-9);
    }

    #[test]
    fn loss_is_bounded_and_monotone_in_lambda(d in 0.1f64..1.0, wrong in 0.05f64..2.0, bump in 0.01f64..1.0, n in 1usize..5) {
        let w = [1.0, 1.0, 1.0];
        let make = |y: f64| SentenceScores { desired: vec![[d, d, d]], wrong: vec![[y, y, y]] };
        let corpus: Vec<SentenceScores> = (0..n).map(|_| make(wrong)).collect();
        let f = f_loss(&w, &corpus, 1.0).unwrap();
        prop_assert!(f > 0.0 && f < n as f64);
        let lo = f_loss(&w, &[make(wrong)], 1.0).unwrap();
        let hi = f_loss(&w, &[make(wrong + bump)], 1.0).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn descent_converges_on_a_convex_quadratic(a in prop::array::uniform3(0.5f64..3.0)) {
        let cfg = LossConfig { gamma: 0.1, epsilon: 1e-9, max_iters: 5000, ..LossConfig::default() };
        let out = gradient_descent(
            |w: &[f64]| {
                let f = (0..3).map(|k| (w[k] - a[k]).powi(2)).sum();
                Ok((f, (0..3).map(|k| 2.0 * (w[k] - a[k])).collect()))
            },
            &[1.0, 1.0, 1.0],
            &[true; 3],
            &cfg,
        )
        .unwrap();
        let best = out.best();
        for k in 0..3 {
            prop_assert!((best.w[k] - a[k]).abs() < 1e-3, "{:?} vs {:?}", best.w, a);
        }
        for pair in out.trace.windows(2) {
            prop_assert!(pair[1].objective <= pair[0].objective);
        }
    }

    #[test]
    fn posteriors_sum_to_one(
        samples in prop::collection::vec((prop::collection::vec(0u8..4, 2), 0u8..3), 1..30),
        query in prop::collection::vec(0u8..6, 2),
    ) {
        let mut counts = SampleCounts::default();
        for (f, c) in &samples {
            let f: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            counts.add(&f, &format!("c{c}"));
        }
        let model = counts.train(&["c9".to_string()]).unwrap();
        let q: Vec<String> = query.iter().map(|v| v.to_string()).collect();
        let post = model.posterior(&q);
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(post.iter().all(|p| *p > 0.0));
    }

    #[test]
    fn ranks_follow_sorted_scores(scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0]), 0..12)) {
        let ranks = rank_1334(&scores);
        let n = scores.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        prop_assert!(order.windows(2).all(|w| ranks[w[0]] <= ranks[w[1]]));
        prop_assert!(ranks.iter().all(|&r| r >= 1 && r <= n));
        for i in 0..n {
            let at_least = scores.iter().filter(|&&s| s >= scores[i]).count();
            prop_assert_eq!(ranks[i], at_least);
        }
    }

    #[test]
    fn component_scores_behave(probs in prop::collection::vec(0.01f64..1.0, 1..8), extra in 0.01f64..1.0, used in 0usize..10, usable in 1usize..10) {
        let mut rev = probs.clone();
        rev.reverse();
        prop_assert!((mapping_product(&probs) - mapping_product(&rev)).abs() <= 1e-15);
        let mut more = probs.clone();
        more.push(extra);
        prop_assert!((mapping_product(&more) - mapping_product(&probs) * extra).abs() <= 1e-15);
        let twice: Vec<f64> = probs.iter().chain(&probs).copied().collect();
        prop_assert!((geometric_mean(&twice) - geometric_mean(&probs)).abs() <= 1e-12);
        let used = used.min(usable);
        let c = coverage_score(used, usable);
        prop_assert!((0.0..=1.0).contains(&c));
        if used < usable {
            prop_assert!(coverage_score(used + 1, usable) > c);
        }
    }

    #[test]
    fn rates_partition_outcomes(ranks in prop::collection::vec(prop::option::of(1usize..8), 0..20), skips in prop::collection::vec(any::<bool>(), 20)) {
        let outcomes: Vec<PairOutcome> = ranks
            .iter()
            .zip(&skips)
            .enumerate()
            .map(|(i, (r, &s))| PairOutcome {
                pair: i,
                fold: 0,
                rank: if s { None } else { *r },
                candidates: 1,
                skipped: s.then(|| "x".to_string()),
                elapsed_ms: None,
            })
            .collect();
        let r = Rates::of(&outcomes);
        prop_assert!(r.top1 <= r.top3);
        prop_assert_eq!(r.top3 + r.beyond3 + r.skipped, r.total);
        prop_assert!((0.0..=1.0).contains(&r.top1_rate) && (0.0..=1.0).contains(&r.top3_rate));
    }
}
