//! Mini-batch gradient descent on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalCase;
use crate::memory::{materialize, EditFact};

use super::{extract_features, PairFeatures, ScorerParams, FEATURE_LEN, FEATURE_VERSION};

/// One labelled `(query, fact)` example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query: String,
    pub fact: EditFact,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 200,
            learning_rate: 0.5,
            batch_size: 32,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ScorerParams,
    /// Summed BCE over the training set before the first epoch.
    pub initial_loss: f64,
    /// Summed BCE after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-sum[y log p + (1 - y) log(1 - p)]` with `p = sigmoid(w . phi + b)`.
pub fn bce_loss(params: &ScorerParams, data: &[(PairFeatures, bool)]) -> Result<f64> {
    let mut loss = 0.0;
    for (x, y) in data {
        let z = params.logit(x)?;
        // -log p = softplus(-z), -log(1 - p) = softplus(z)
        loss += if *y { softplus(-z) } else { softplus(z) };
    }
    Ok(loss)
}

/// Analytic gradient of [`bce_loss`]: `sum (p - y) phi` and `sum (p - y)`.
pub fn bce_gradient(params: &ScorerParams, data: &[(PairFeatures, bool)]) -> Result<(Vec<f64>, f64)> {
    let mut gw = vec![0.0; params.weights.len()];
    let mut gb = 0.0;
    for (x, y) in data {
        let residual = super::sigmoid(params.logit(x)?) - if *y { 1.0 } else { 0.0 };
        for (g, v) in gw.iter_mut().zip(&x.values) {
            *g += residual * v;
        }
        gb += residual;
    }
    Ok((gw, gb))
}

/// Train from precomputed features, starting at zero weights.
///
/// Each batch takes a step along the mean gradient. Batch order is a
/// seeded shuffle, so the result depends only on the inputs and `seed`.
pub fn train_on_features(data: &[(PairFeatures, bool)], options: &TrainOptions) -> Result<TrainOutcome> {
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::validation(
            "training data needs at least one positive and one negative example",
        ));
    }
    if options.batch_size == 0 {
        return Err(Error::validation("batch size must be at least 1"));
    }
    if !(options.learning_rate > 0.0 && options.learning_rate.is_finite()) {
        return Err(Error::validation("learning rate must be positive"));
    }
    let dim = data[0].0.values.len();
    let mut params = ScorerParams {
        feature_version: FEATURE_VERSION.to_string(),
        weights: vec![0.0; dim],
        bias: 0.0,
    };
    let initial_loss = bce_loss(&params, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(options.epochs);
    let mut batch: Vec<(PairFeatures, bool)> = Vec::with_capacity(options.batch_size);

    for _ in 0..options.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(options.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (gw, gb) = bce_gradient(&params, &batch)?;
            let step = options.learning_rate / batch.len() as f64;
            for (w, g) in params.weights.iter_mut().zip(&gw) {
                *w -= step * g;
            }
            params.bias -= step * gb;
        }
        epoch_losses.push(bce_loss(&params, data)?);
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        epoch_losses,
    })
}

/// Extract features for every pair and train.
pub fn train(pairs: &[TrainingPair], options: &TrainOptions) -> Result<TrainOutcome> {
    let data = pairs
        .iter()
        .map(|p| Ok((extract_features(&p.query, &p.fact)?, p.label)))
        .collect::<Result<Vec<_>>>()?;
    let outcome = train_on_features(&data, options)?;
    debug_assert_eq!(outcome.params.weights.len(), FEATURE_LEN);
    Ok(outcome)
}

/// Labelled pairs from evaluation cases.
///
/// Every reliability and generality query is a positive for its own edit.
/// For each positive, `negatives_per_positive` facts are drawn uniformly
/// from the other cases' edits and paired with the same query as negatives.
pub fn build_training_pairs(cases: &[EvalCase], negatives_per_positive: usize, seed: u64) -> Result<Vec<TrainingPair>> {
    let facts = cases
        .iter()
        .enumerate()
        .map(|(i, c)| materialize(&c.edit, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let key = |f: &EditFact| (f.subject.clone(), f.relation.clone(), f.new_object.clone());
    let distinct: std::collections::HashSet<_> = facts.iter().map(key).collect();
    if distinct.len() < 2 {
        return Err(Error::validation(
            "need at least two distinct cases to sample negatives",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let own = key(&facts[i]);
        let others: Vec<usize> = (0..facts.len()).filter(|&j| key(&facts[j]) != own).collect();
        for item in case.rel_queries.iter().chain(&case.gen_queries) {
            pairs.push(TrainingPair {
                query: item.query.clone(),
                fact: facts[i].clone(),
                label: true,
            });
            for _ in 0..negatives_per_positive {
                let j = others[rng.gen_range(0..others.len())];
                pairs.push(TrainingPair {
                    query: item.query.clone(),
                    fact: facts[j].clone(),
                    label: false,
                });
            }
        }
    }
    Ok(pairs)
}

/// Shuffle cases with `seed` and split off a `holdout` fraction, so no
/// query appears on both sides. Returns `(train, held_out)`.
pub fn split_cases(cases: &[EvalCase], holdout: f64, seed: u64) -> Result<(Vec<EvalCase>, Vec<EvalCase>)> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(Error::validation(format!("holdout fraction {holdout} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = cases.len() - (holdout * cases.len() as f64).round() as usize;
    let pick = |ix: &[usize]| ix.iter().map(|&i| cases[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

/// Fraction of pairs whose thresholded probability matches the label.
pub fn accuracy(params: &ScorerParams, pairs: &[TrainingPair], threshold: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("accuracy needs at least one pair"));
    }
    let mut correct = 0usize;
    for pair in pairs {
        let p = super::score(params, &pair.query, &pair.fact)?;
        correct += ((p > threshold) == pair.label) as usize;
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::QueryItem;
    use crate::memory::NewFact;
    use proptest::prelude::*;
    use rand::Rng;

    fn feats(v: &[f64]) -> PairFeatures {
        PairFeatures { values: v.to_vec() }
    }

    fn case(i: usize) -> EvalCase {
        let subject = format!("Person{i}");
        EvalCase {
            case_id: None,
            edit: NewFact::new(&subject, "{s} lives in", Some("Rome"), &format!("City{i}")),
            rel_queries: vec![QueryItem::new(
                &format!("Where does {subject} live?"),
                &format!("City{i}"),
            )],
            gen_queries: vec![QueryItem::new(
                &format!("{subject} resides in which city?"),
                &format!("City{i}"),
            )],
            loc_queries: vec![],
        }
    }

    #[test]
    fn two_point_separable_case() {
        let data = vec![(feats(&[1.0, 1.0]), true), (feats(&[-1.0, -1.0]), false)];
        let out = train_on_features(
            &data,
            &TrainOptions {
                epochs: 50,
                learning_rate: 0.5,
                batch_size: 2,
                seed: 1,
            },
        )
        .unwrap();
        for (x, y) in &data {
            let p = super::super::sigmoid(out.params.logit(x).unwrap());
            assert_eq!(p > 0.5, *y);
        }
        assert!(out.final_loss() <= out.initial_loss);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = vec![(feats(&[1.0, 0.0]), true), (feats(&[0.0, 1.0]), false)];
        let out = train_on_features(
            &data,
            &TrainOptions {
                epochs: 0,
                ..TrainOptions::default()
            },
        )
        .unwrap();
        assert_eq!(out.params.weights, vec![0.0, 0.0]);
        assert_eq!(out.params.bias, 0.0);
        assert!((out.initial_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let data = vec![(feats(&[1.0]), true), (feats(&[0.5]), true)];
        assert!(matches!(
            train_on_features(&data, &TrainOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let data: Vec<(PairFeatures, bool)> = (0..8)
                .map(|_| {
                    let v: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    (feats(&v), rng.gen_bool(0.5))
                })
                .collect();
            let params = ScorerParams {
                feature_version: FEATURE_VERSION.into(),
                weights: (0..FEATURE_LEN).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                bias: rng.gen_range(-1.0..1.0),
            };
            let (gw, gb) = bce_gradient(&params, &data).unwrap();
            let h = 1e-5;
            let numeric = |bump: &dyn Fn(&mut ScorerParams, f64)| {
                let mut plus = params.clone();
                bump(&mut plus, h);
                let mut minus = params.clone();
                bump(&mut minus, -h);
                (bce_loss(&plus, &data).unwrap() - bce_loss(&minus, &data).unwrap()) / (2.0 * h)
            };
            for (k, g) in gw.iter().enumerate() {
                let n = numeric(&|p, d| p.weights[k] += d);
                assert!(
                    (g - n).abs() <= 1e-4 * g.abs().max(n.abs()).max(1e-8),
                    "w{k}: {g} vs {n}"
                );
            }
            let n = numeric(&|p, d| p.bias += d);
            assert!((gb - n).abs() <= 1e-4 * gb.abs().max(n.abs()).max(1e-8));
        }
    }

    #[test]
    fn training_pairs_count_and_determinism() {
        let cases: Vec<EvalCase> = (0..10).map(case).collect();
        let pairs = build_training_pairs(&cases, 1, 9).unwrap();
        // rel + gen per case, each with one negative
        assert_eq!(pairs.iter().filter(|p| p.label).count(), 20);
        assert_eq!(pairs.iter().filter(|p| !p.label).count(), 20);
        assert_eq!(pairs, build_training_pairs(&cases, 1, 9).unwrap());
        assert_ne!(pairs, build_training_pairs(&cases, 1, 10).unwrap());
    }

    #[test]
    fn too_few_cases_is_an_error() {
        assert!(build_training_pairs(&[case(0)], 1, 0).is_err());
        assert!(build_training_pairs(&[case(0), case(0)], 1, 0).is_err());
    }

    #[test]
    fn negatives_never_use_own_fact() {
        let cases: Vec<EvalCase> = (0..40).map(case).collect();
        let pairs = build_training_pairs(&cases, 13, 3).unwrap();
        let negatives: Vec<_> = pairs.iter().filter(|p| !p.label).collect();
        assert!(negatives.len() >= 1000);
        for p in negatives {
            assert!(!p.query.contains(&format!("{} ", p.fact.subject)), "{p:?}");
        }
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let cases: Vec<EvalCase> = (0..10).map(case).collect();
        let (train, held) = split_cases(&cases, 0.2, 4).unwrap();
        assert_eq!((train.len(), held.len()), (8, 2));
        assert!(held.iter().all(|h| !train.contains(h)));
        assert_eq!(split_cases(&cases, 0.2, 4).unwrap(), (train, held));
        assert!(split_cases(&cases, 1.0, 4).is_err());
    }

    #[test]
    fn accuracy_counts_thresholded_agreement() {
        let cases: Vec<EvalCase> = (0..4).map(case).collect();
        let pairs = build_training_pairs(&cases, 1, 0).unwrap();
        let zero = ScorerParams::zeros();
        // probability 0.5 is never selected, so exactly the negatives agree
        assert_eq!(accuracy(&zero, &pairs, 0.5).unwrap(), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn same_seed_same_params(seed in 0u64..1000) {
            let cases: Vec<EvalCase> = (0..6).map(case).collect();
            let pairs = build_training_pairs(&cases, 2, seed).unwrap();
            let opts = TrainOptions { epochs: 5, seed, ..TrainOptions::default() };
            prop_assert_eq!(train(&pairs, &opts).unwrap(), train(&pairs, &opts).unwrap());
        }
    }
}
