//! Repeated leave-n-out evaluation by pairwise-choice accuracy.
//!
//! Every repetition draws a fresh holdout for each target, removes only the
//! target's own ratings of its held-out items, rebuilds the similarity
//! matrix from what is left and scores every grid cell on that same split.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizedRatings, RatingMatrix};
use crate::error::{Error, Result};
use crate::recommender::{choose, rank_all, AdviserPool, Choice, KnnConfig, KnnPredictor, Predictor};
use crate::rng;
use crate::similarity::{build_similarity_matrix, SimilarityMatrix};

pub const DEFAULT_HOLDOUT: usize = 10;
pub const DEFAULT_REPETITIONS: usize = 1000;

/// Raters whose choices are predicted. Same shape as an adviser pool.
pub type TargetSet = AdviserPool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub holdout_per_rater: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub cells: Vec<KnnConfig>,
    pub targets: TargetSet,
}

impl EvaluationPlan {
    pub fn new(cells: Vec<KnnConfig>, seed: u64) -> Self {
        EvaluationPlan {
            holdout_per_rater: DEFAULT_HOLDOUT,
            repetitions: DEFAULT_REPETITIONS,
            seed,
            cells,
            targets: TargetSet::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidConfig("evaluation grid is empty".into()));
        }
        self.cells.iter().try_for_each(KnnConfig::validate)
    }
}

/// Hold out `n` of `target`'s rated items, chosen uniformly. Only the
/// target's ratings of those items leave the training data.
pub fn make_holdout_split<R: Rng + ?Sized>(
    r: &NormalizedRatings,
    target: usize,
    n: usize,
    rng: &mut R,
) -> Result<(NormalizedRatings, Vec<usize>)> {
    let test = sample_test_items(r, target, n, rng)?;
    let cells: Vec<(usize, usize)> = test.iter().map(|&m| (target, m)).collect();
    Ok((r.without_cells(&cells), test))
}

/// Candidates are ordered by item id and the result is returned in item-id
/// order, so the draw does not depend on the order of the input file.
fn sample_test_items<R: Rng + ?Sized>(r: &RatingMatrix, target: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let mut candidates: Vec<usize> = r.row(target).iter().map(|&(m, _)| m).collect();
    if candidates.len() < n {
        return Err(Error::InsufficientRatings {
            rater: r.rater_id(target).to_string(),
            available: candidates.len(),
            requested: n,
        });
    }
    candidates.sort_by(|&a, &b| r.item_id(a).cmp(r.item_id(b)));
    let mut picked: Vec<usize> = index::sample(rng, candidates.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| candidates[i]).collect())
}

/// Stream that draws `rater`'s holdout in `repetition`.
pub fn split_rng(seed: u64, repetition: usize, rater: &str) -> rng::StreamRng {
    rng::stream(seed, &[repetition as u64, 0, rng::id_key(rater)])
}

/// Stream that settles `rater`'s tied choices in `repetition`. It does not
/// depend on the grid cell, so all cells share the same coin flips.
pub fn tie_rng(seed: u64, repetition: usize, rater: &str) -> rng::StreamRng {
    rng::stream(seed, &[repetition as u64, 1, rng::id_key(rater)])
}

/// Holdout of one repetition: test items per target (in `targets` order)
/// and the shared training data with all of them removed.
pub fn repetition_split(
    data: &NormalizedRatings,
    targets: &[usize],
    n: usize,
    seed: u64,
    repetition: usize,
) -> Result<(NormalizedRatings, Vec<Vec<usize>>)> {
    let mut removed = Vec::new();
    let mut tests = Vec::with_capacity(targets.len());
    for &t in targets {
        let mut rng = split_rng(seed, repetition, data.rater_id(t));
        let test = sample_test_items(data, t, n, &mut rng)?;
        removed.extend(test.iter().map(|&m| (t, m)));
        tests.push(test);
    }
    Ok((data.without_cells(&removed), tests))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairScore {
    pub correct: f64,
    pub pairs: usize,
    pub absent_predictions: usize,
}

impl PairScore {
    pub fn fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.correct / self.pairs as f64
        }
    }
}

/// Score every unordered pair of `test` items. A pair whose true ratings
/// are equal counts one half whatever is chosen.
pub fn score_pairs<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    target: usize,
    test: &[usize],
    truth: &RatingMatrix,
    rng: &mut R,
) -> PairScore {
    let preds: Vec<Option<f64>> = test.iter().map(|&m| predictor.predict(target, m)).collect();
    let truths: Vec<f64> = test
        .iter()
        .map(|&m| truth.rating(target, m).expect("held-out items have true ratings"))
        .collect();
    let mut score = PairScore {
        absent_predictions: preds.iter().filter(|p| p.is_none()).count(),
        ..PairScore::default()
    };
    for a in 0..test.len() {
        for b in (a + 1)..test.len() {
            score.pairs += 1;
            if truths[a] == truths[b] {
                score.correct += 0.5;
                continue;
            }
            let picked_a = choose(preds[a], preds[b], rng) == Choice::A;
            if picked_a == (truths[a] > truths[b]) {
                score.correct += 1.0;
            }
        }
    }
    score
}

pub fn score_individual<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    target: usize,
    test: &[usize],
    truth: &RatingMatrix,
    rng: &mut R,
) -> f64 {
    score_pairs(predictor, target, test, truth, rng).fraction()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetScore {
    pub cell: usize,
    pub target: String,
    pub target_group: String,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellAggregate {
    pub cell: usize,
    pub target_group: String,
    /// Unweighted mean of the per-target means.
    pub mean_accuracy: f64,
    pub targets: usize,
    pub incomplete_committees: u64,
    pub fallback_uses: u64,
    pub absent_predictions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub cells: Vec<KnnConfig>,
    pub repetitions: usize,
    pub holdout_per_rater: usize,
    pub seed: u64,
    pub per_target: Vec<TargetScore>,
    pub aggregates: Vec<CellAggregate>,
    pub excluded: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct Counters {
    incomplete: u64,
    fallback: u64,
    absent: u64,
}

struct RepetitionResult {
    // [cell][target position]
    accuracy: Vec<Vec<f64>>,
    counters: Vec<Vec<Counters>>,
}

type RankingKey = (usize, AdviserPool, bool);

fn run_repetition(
    plan: &EvaluationPlan,
    data: &NormalizedRatings,
    targets: &[usize],
    pools: &[Vec<bool>],
    rep: usize,
) -> Result<RepetitionResult> {
    let (train, tests) = repetition_split(data, targets, plan.holdout_per_rater, plan.seed, rep)?;
    let mut sims: HashMap<usize, SimilarityMatrix> = HashMap::new();
    let mut rankings: HashMap<RankingKey, Vec<Vec<(usize, f64)>>> = HashMap::new();
    for (c, cfg) in plan.cells.iter().enumerate() {
        let sim = sims
            .entry(cfg.overlap_threshold)
            .or_insert_with(|| build_similarity_matrix(&train, cfg.overlap_threshold));
        rankings
            .entry((cfg.overlap_threshold, cfg.pool.clone(), cfg.skip_negative))
            .or_insert_with(|| rank_all(sim, &pools[c], cfg.skip_negative));
    }

    let mut accuracy = Vec::with_capacity(plan.cells.len());
    let mut counters = Vec::with_capacity(plan.cells.len());
    for cfg in &plan.cells {
        let ranks = &rankings[&(cfg.overlap_threshold, cfg.pool.clone(), cfg.skip_negative)];
        let predictor = KnnPredictor::from_rankings(&train, ranks, cfg.k, cfg.rho);
        let mut acc = Vec::with_capacity(targets.len());
        let mut cnt = Vec::with_capacity(targets.len());
        for (pos, &t) in targets.iter().enumerate() {
            let mut coin = tie_rng(plan.seed, rep, data.rater_id(t));
            let score = score_pairs(&predictor, t, &tests[pos], data, &mut coin);
            acc.push(score.fraction());
            let mut counter = Counters {
                absent: score.absent_predictions as u64,
                ..Counters::default()
            };
            for &m in &tests[pos] {
                let committee = predictor.committee(t, m);
                counter.incomplete += u64::from(!committee.complete);
                counter.fallback += u64::from(committee.equal_weight_fallback);
            }
            cnt.push(counter);
        }
        accuracy.push(acc);
        counters.push(cnt);
    }
    Ok(RepetitionResult { accuracy, counters })
}

/// Run the plan. Targets with fewer ratings than the holdout size are
/// excluded with a warning. The result depends only on the plan and data,
/// not on thread count.
pub fn run_evaluation(plan: &EvaluationPlan, data: &NormalizedRatings) -> Result<PerformanceReport> {
    plan.validate()?;
    let target_mask = plan.targets.mask(data)?;
    let mut targets = Vec::new();
    let mut excluded = Vec::new();
    for t in (0..data.n_raters()).filter(|&t| target_mask[t]) {
        if data.rating_count(t) < plan.holdout_per_rater {
            log::warn!(
                "excluding target '{}': {} ratings, holdout needs {}",
                data.rater_id(t),
                data.rating_count(t),
                plan.holdout_per_rater
            );
            excluded.push(data.rater_id(t).to_string());
        } else {
            targets.push(t);
        }
    }
    let pools = plan
        .cells
        .iter()
        .map(|c| c.pool.mask(data))
        .collect::<Result<Vec<_>>>()?;

    let done = AtomicUsize::new(0);
    let step = (plan.repetitions / 10).max(1);
    let results = (0..plan.repetitions)
        .into_par_iter()
        .map(|rep| {
            let res = run_repetition(plan, data, &targets, &pools, rep);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n.is_multiple_of(step) {
                log::info!("evaluation: {n}/{} repetitions", plan.repetitions);
            }
            res
        })
        .collect::<Result<Vec<_>>>()?;

    let n_cells = plan.cells.len();
    let mut sums = vec![vec![0.0f64; targets.len()]; n_cells];
    let mut counts = vec![vec![Counters::default(); targets.len()]; n_cells];
    // fixed reduction order keeps the sums bit-identical
    for res in &results {
        for c in 0..n_cells {
            for pos in 0..targets.len() {
                sums[c][pos] += res.accuracy[c][pos];
                let (dst, src) = (&mut counts[c][pos], res.counters[c][pos]);
                dst.incomplete += src.incomplete;
                dst.fallback += src.fallback;
                dst.absent += src.absent;
            }
        }
    }

    let reps = plan.repetitions as f64;
    let mut per_target = Vec::new();
    let mut aggregates = Vec::new();
    for c in 0..n_cells {
        let mut by_group: BTreeMap<usize, (f64, usize, Counters)> = BTreeMap::new();
        for (pos, &t) in targets.iter().enumerate() {
            let mean = sums[c][pos] / reps;
            per_target.push(TargetScore {
                cell: c,
                target: data.rater_id(t).to_string(),
                target_group: data.group_name_of(t).to_string(),
                mean_accuracy: mean,
            });
            let e = by_group.entry(data.group_of(t)).or_default();
            e.0 += mean;
            e.1 += 1;
            e.2.incomplete += counts[c][pos].incomplete;
            e.2.fallback += counts[c][pos].fallback;
            e.2.absent += counts[c][pos].absent;
        }
        for (g, (sum, n, cnt)) in by_group {
            aggregates.push(CellAggregate {
                cell: c,
                target_group: data.group_names()[g].clone(),
                mean_accuracy: sum / n as f64,
                targets: n,
                incomplete_committees: cnt.incomplete,
                fallback_uses: cnt.fallback,
                absent_predictions: cnt.absent,
            });
        }
    }
    Ok(PerformanceReport {
        cells: plan.cells.clone(),
        repetitions: plan.repetitions,
        holdout_per_rater: plan.holdout_per_rater,
        seed: plan.seed,
        per_target,
        aggregates,
        excluded,
    })
}

impl PerformanceReport {
    pub fn aggregate(&self, cell: usize, group: &str) -> Option<&CellAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.cell == cell && a.target_group == group)
    }

    /// Per-target means of one cell and group, in target order.
    pub fn target_means(&self, cell: usize, group: &str) -> Vec<f64> {
        self.per_target
            .iter()
            .filter(|s| s.cell == cell && s.target_group == group)
            .map(|s| s.mean_accuracy)
            .collect()
    }

    /// Long format: `k,rho,pool,target_group,target_id,mean_accuracy,repetitions`.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "rho", "pool", "target_group", "target_id", "mean_accuracy", "repetitions"])?;
        for s in &self.per_target {
            let cfg = &self.cells[s.cell];
            wtr.write_record([
                cfg.k.to_string(),
                cfg.rho.to_string(),
                cfg.pool.label(),
                s.target_group.clone(),
                s.target.clone(),
                s.mean_accuracy.to_string(),
                self.repetitions.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<performance writer>", e))?;
        Ok(())
    }

    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "k",
            "rho",
            "pool",
            "target_group",
            "mean_accuracy",
            "targets",
            "repetitions",
            "incomplete_committees",
            "fallback_uses",
            "absent_predictions",
        ])?;
        for a in &self.aggregates {
            let cfg = &self.cells[a.cell];
            wtr.write_record([
                cfg.k.to_string(),
                cfg.rho.to_string(),
                cfg.pool.label(),
                a.target_group.clone(),
                a.mean_accuracy.to_string(),
                a.targets.to_string(),
                self.repetitions.to_string(),
                a.incomplete_committees.to_string(),
                a.fallback_uses.to_string(),
                a.absent_predictions.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<performance writer>", e))?;
        Ok(())
    }
}
