//! Naive Bayes, log-sum-exp smoothing, the ranking loss and gradient descent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Categorical Naive Bayes with Laplace smoothing. Feature values never seen
/// in training contribute a uniform likelihood.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NbModel {
    pub alpha: u32,
    pub classes: Vec<String>,
    pub class_counts: Vec<u64>,
    /// Per feature: value → per-class counts.
    pub feature_counts: Vec<BTreeMap<String, Vec<u64>>>,
    pub total: u64,
}

impl NbModel {
    /// Trains on `samples`; `extra_classes` are added to the class set even
    /// if no sample carries them.
    pub fn train<F, C>(samples: &[(F, C)], extra_classes: &[String]) -> Result<NbModel>
    where
        F: AsRef<[String]>,
        C: AsRef<str>,
    {
        let mut counts = SampleCounts::default();
        for (f, c) in samples {
            counts.add(f.as_ref(), c.as_ref());
        }
        counts.train(extra_classes)
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(class)).ok()
    }

    /// Posterior over all classes, in class order.
    pub fn posterior(&self, features: &[String]) -> Vec<f64> {
        let a = self.alpha as f64;
        let k = self.classes.len() as f64;
        let mut logp: Vec<f64> = self
            .class_counts
            .iter()
            .map(|&n| ((n as f64 + a) / (self.total as f64 + a * k)).ln())
            .collect();
        for (f, v) in features.iter().enumerate() {
            let Some(table) = self.feature_counts.get(f) else { continue };
            let Some(counts) = table.get(v) else { continue };
            let values = table.len() as f64;
            for (c, lp) in logp.iter_mut().enumerate() {
                *lp += ((counts[c] as f64 + a) / (self.class_counts[c] as f64 + a * values)).ln();
            }
        }
        let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logp.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Probability of `class` given `features`. Unknown classes get the
    /// mass of an unseen class.
    pub fn predict(&self, features: &[String], class: &str) -> f64 {
        match self.class_index(class) {
            Some(i) => self.posterior(features)[i],
            None => {
                let a = self.alpha as f64;
                a / (self.total as f64 + a * (self.classes.len() as f64 + 1.0))
            }
        }
    }
}

/// Multiset of (features, class) samples.
#[derive(Debug, Clone, Default)]
pub struct SampleCounts {
    counts: BTreeMap<(Vec<String>, String), u64>,
}

impl SampleCounts {
    pub fn add(&mut self, features: &[String], class: &str) {
        if let Some(n) = self.counts.get_mut(&(features.to_vec(), class.to_string())) {
            *n += 1;
        } else {
            self.counts.insert((features.to_vec(), class.to_string()), 1);
        }
    }

    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], &str, u64)> {
        self.counts.iter().map(|((f, c), &n)| (f.as_slice(), c.as_str(), n))
    }

    pub fn train(&self, extra_classes: &[String]) -> Result<NbModel> {
        let Some(((first, _), _)) = self.counts.iter().next() else {
            return Err(Error::EmptySamples);
        };
        let width = first.len();
        let mut class_set: BTreeSet<String> = extra_classes.iter().cloned().collect();
        for (f, c) in self.counts.keys() {
            if f.len() != width {
                return Err(Error::FeatureUndefined(format!(
                    "sample has {} features, expected {width}",
                    f.len()
                )));
            }
            class_set.insert(c.clone());
        }
        let classes: Vec<String> = class_set.into_iter().collect();
        let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut class_counts = vec![0u64; classes.len()];
        let mut feature_counts = vec![BTreeMap::<String, Vec<u64>>::new(); width];
        let mut total = 0;
        for ((f, c), &n) in &self.counts {
            let ci = index[c.as_str()];
            class_counts[ci] += n;
            total += n;
            for (k, v) in f.iter().enumerate() {
                feature_counts[k].entry(v.clone()).or_insert_with(|| vec![0; classes.len()])[ci] += n;
            }
        }
        Ok(NbModel {
            alpha: 1,
            classes,
            class_counts,
            feature_counts,
            total,
        })
    }
}

/// Smooth maximum `ln(Σ e^{c·v}) / c`.
pub fn lse_max(values: &[f64], c: f64) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (c * (v - m)).exp()).sum();
    m + s.ln() / c
}

/// Softmax weights of `lse_max`, i.e. its gradient with respect to `values`.
pub fn lse_weights(values: &[f64], c: f64) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| (c * (v - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            c: 20.0,
            gamma: 0.1,
            epsilon: 1e-6,
            max_iters: 5000,
            floor: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.gamma > 0.0 && self.epsilon > 0.0 && self.max_iters > 0) {
            return Err(Error::Config("c, gamma, epsilon and max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Component vectors of one training sentence: every witness map of the
/// desired program, and every map of every other candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub desired: Vec<[f64; 3]>,
    pub wrong: Vec<[f64; 3]>,
}

fn dot(w: &[f64; 3], x: &[f64; 3]) -> f64 {
    w[0] * x[0] + w[1] * x[1] + w[2] * x[2]
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Sum {
    s: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.comp += (self.s - t) + x;
        } else {
            self.comp += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.comp
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn smooth_score(w: &[f64; 3], xs: &[[f64; 3]], c: f64) -> (f64, [f64; 3]) {
    let vals: Vec<f64> = xs.iter().map(|x| dot(w, x)).collect();
    let v = lse_max(&vals, c);
    let mut g = [0.0; 3];
    for (p, x) in lse_weights(&vals, c).iter().zip(xs) {
        for k in 0..3 {
            g[k] += p * x[k];
        }
    }
    (v, g)
}

/// Per-sentence ratio of the best wrong score to the desired score.
pub fn lambda(w: &[f64; 3], s: &SentenceScores, c: f64) -> Result<f64> {
    let (vd, _) = smooth_score(w, &s.desired, c);
    if !(vd > 0.0) {
        return Err(Error::NonPositiveScore(vd));
    }
    Ok(smooth_score(w, &s.wrong, c).0 / vd)
}

/// Loss `Σ 1/(1+e^{-c(λ-1)})` and its gradient.
pub fn f_loss_grad(w: &[f64; 3], corpus: &[SentenceScores], c: f64) -> Result<(f64, [f64; 3])> {
    let mut total = Sum::default();
    let mut grad = [Sum::default(); 3];
    for s in corpus {
        if s.desired.is_empty() || s.wrong.is_empty() {
            return Err(Error::EmptySamples);
        }
        let (vd, gd) = smooth_score(w, &s.desired, c);
        if !(vd > 0.0) {
            return Err(Error::NonPositiveScore(vd));
        }
        let (vw, gw) = smooth_score(w, &s.wrong, c);
        let lam = vw / vd;
        let f = sigmoid(c * (lam - 1.0));
        total.add(f);
        let df = c * f * (1.0 - f);
        for k in 0..3 {
            grad[k].add(df * (gw[k] * vd - vw * gd[k]) / (vd * vd));
        }
    }
    Ok((total.value(), [grad[0].value(), grad[1].value(), grad[2].value()]))
}

pub fn f_loss(w: &[f64; 3], corpus: &[SentenceScores], c: f64) -> Result<f64> {
    Ok(f_loss_grad(w, corpus, c)?.0)
}

/// One accepted iterate of gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub w: Vec<f64>,
    pub objective: f64,
}

/// Descent outcome: every accepted iterate (starting with `w0`) and the
/// lowest-objective one.
#[derive(Debug, Clone)]
pub struct Descent {
    pub trace: Vec<Step>,
    pub best: usize,
}

impl Descent {
    pub fn best(&self) -> &Step {
        &self.trace[self.best]
    }
}

/// Gradient descent with step halving: a step that raises the objective is
/// retried with half the rate. Coordinates with `free[k] == false` never
/// move; all coordinates are kept at or above `cfg.floor`.
pub fn gradient_descent<F>(objective: F, w0: &[f64], free: &[bool], cfg: &LossConfig) -> Result<Descent>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let eval = |w: &[f64], iteration: usize| -> Result<(f64, Vec<f64>)> {
        let (f, g) = objective(w)?;
        if !f.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { iteration, value: f });
        }
        Ok((f, g))
    };
    let mut w = w0.to_vec();
    let (mut f, mut g) = eval(&w, 0)?;
    let mut trace = vec![Step { w: w.clone(), objective: f }];
    let mut rate = cfg.gamma;
    if f.abs() < cfg.epsilon {
        return Ok(Descent { trace, best: 0 });
    }
    for iteration in 1..=cfg.max_iters {
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = w
                .iter()
                .zip(&g)
                .zip(free)
                .map(|((&wi, &gi), &fr)| if fr { (wi - rate * gi).max(cfg.floor) } else { wi })
                .collect();
            let (fc, gc) = eval(&cand, iteration)?;
            if fc <= f {
                accepted = Some((cand, fc, gc));
                break;
            }
            rate *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let delta = (f - fc).abs();
        let moved = cand != w;
        w = cand;
        f = fc;
        g = gc;
        trace.push(Step { w: w.clone(), objective: f });
        if delta < cfg.epsilon || !moved {
            break;
        }
        rate = (rate * 1.25).min(cfg.gamma);
    }
    let best = (0..trace.len())
        .min_by(|&a, &b| trace[a].objective.total_cmp(&trace[b].objective).then(b.cmp(&a)))
        .unwrap_or(0);
    Ok(Descent { trace, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn nb_closed_form() {
        let m = NbModel::train(&[(s(&["x"]), "A"), (s(&["x"]), "A"), (s(&["x"]), "B")], &[]).unwrap();
        // prior A = 3/5, B = 2/5; likelihood of x is 1 for both classes
        assert!((m.predict(&s(&["x"]), "A") - 0.6).abs() < 1e-12);
    }

    #[test]
    fn nb_single_sample_and_unseen() {
        let m = NbModel::train(&[(s(&["a", "b"]), "T")], &s(&["U"])).unwrap();
        assert!(m.predict(&s(&["a", "b"]), "T") > m.predict(&s(&["a", "b"]), "U"));
        let prior = m.predict(&s(&["zz", "yy"]), "T");
        assert!((prior - 2.0 / 3.0).abs() < 1e-12);
        assert!(m.predict(&s(&["a", "b"]), "NOPE") > 0.0);
    }

    #[test]
    fn nb_disjoint_features() {
        let mut data = Vec::new();
        for _ in 0..50 {
            data.push((s(&["p", "q"]), "A"));
            data.push((s(&["r", "t"]), "B"));
        }
        let m = NbModel::train(&data, &[]).unwrap();
        assert!(m.predict(&s(&["p", "q"]), "A") > 0.999);
        let doubled: Vec<_> = data.iter().chain(&data).cloned().collect();
        let m2 = NbModel::train(&doubled, &[]).unwrap();
        assert!((m2.predict(&s(&["p", "t"]), "A") - m.predict(&s(&["p", "t"]), "A")).abs() < 1e-2);
    }

    #[test]
    fn nb_empty() {
        let empty: Vec<(Vec<String>, String)> = Vec::new();
        assert_eq!(NbModel::train(&empty, &[]).unwrap_err(), Error::EmptySamples);
    }

    #[test]
    fn lse_values() {
        assert_eq!(lse_max(&[3.5], 20.0), 3.5);
        assert!((lse_max(&[0.0, 0.0], 10.0) - 2f64.ln() / 10.0).abs() < 1e-12);
        assert!((lse_max(&[0.0, 1.0], 10.0) - (1.0 + (1.0 + (-10f64).exp()).ln() / 10.0)).abs() < 1e-12);
        assert!((lse_max(&[0.0, 1.0], 10.0) - 1.00000454).abs() < 1e-8);
        assert!(lse_max(&[1000.0, 999.0], 20.0).is_finite());
    }

    #[test]
    fn loss_midpoint_and_example() {
        let one = SentenceScores {
            desired: vec![[1.0, 0.0, 0.0]],
            wrong: vec![[1.0, 0.0, 0.0]],
        };
        assert_eq!(f_loss(&[1.0, 1.0, 1.0], &[one], 20.0).unwrap(), 0.5);
        let two = SentenceScores {
            desired: vec![[1.0, 0.0, 0.0]],
            wrong: vec![[0.0, 1.0, 0.0]],
        };
        let l = f_loss(&[2.0, 1.0, 1.0], &[two], 20.0).unwrap();
        assert!((l - 1.0 / (1.0 + 10f64.exp())).abs() < 1e-9);
        let zero = SentenceScores {
            desired: vec![[0.0, 0.0, 0.0]],
            wrong: vec![[1.0, 0.0, 0.0]],
        };
        assert!(matches!(f_loss(&[1.0, 1.0, 1.0], &[zero], 20.0), Err(Error::NonPositiveScore(_))));
    }

    #[test]
    fn quadratic_descent() {
        let cfg = LossConfig {
            floor: f64::NEG_INFINITY,
            epsilon: 1e-9,
            ..LossConfig::default()
        };
        let d = gradient_descent(|w| Ok(((w[0] - 3.0).powi(2), vec![2.0 * (w[0] - 3.0)])), &[0.0], &[true], &cfg).unwrap();
        assert!((d.best().w[0] - 3.0).abs() < 1e-3);
        for pair in d.trace.windows(2) {
            assert!(pair[1].objective <= pair[0].objective);
        }
    }

    #[test]
    fn epsilon_above_objective_returns_w0() {
        let cfg = LossConfig {
            epsilon: 100.0,
            ..LossConfig::default()
        };
        let d = gradient_descent(|w| Ok(((w[0] - 3.0).powi(2), vec![2.0 * (w[0] - 3.0)])), &[1.0], &[true], &cfg).unwrap();
        assert_eq!(d.best().w, vec![1.0]);
    }

    #[test]
    fn descent_favours_coverage() {
        let corpus = [SentenceScores {
            desired: vec![[1.0, 0.0, 0.0]],
            wrong: vec![[0.0, 1.0, 0.0]],
        }];
        let cfg = LossConfig::default();
        let d = gradient_descent(
            |w| {
                let (f, g) = f_loss_grad(&[w[0], w[1], w[2]], &corpus, cfg.c)?;
                Ok((f, g.to_vec()))
            },
            &[1.0, 1.0, 1.0],
            &[true; 3],
            &cfg,
        )
        .unwrap();
        let ratio = |w: &[f64]| w[0] / w[1];
        assert!(d.trace.len() > 1);
        for pair in d.trace.windows(2) {
            assert!(ratio(&pair[1].w) >= ratio(&pair[0].w));
        }
        assert!(ratio(&d.best().w) > 1.0);
    }

    #[test]
    fn pinned_coordinates_do_not_move() {
        let corpus = [SentenceScores {
            desired: vec![[1.0, 0.2, 0.0]],
            wrong: vec![[0.0, 1.0, 0.5]],
        }];
        let d = gradient_descent(
            |w| {
                let (f, g) = f_loss_grad(&[w[0], w[1], w[2]], &corpus, 20.0)?;
                Ok((f, g.to_vec()))
            },
            &[1.0, 1.0, 0.0],
            &[true, true, false],
            &LossConfig::default(),
        )
        .unwrap();
        assert!(d.trace.iter().all(|s| s.w[2] == 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let r = gradient_descent(|_| Ok((f64::NAN, vec![0.0])), &[1.0], &[true], &LossConfig::default());
        assert!(matches!(r, Err(Error::Diverged { iteration: 0, .. })));
    }
}
