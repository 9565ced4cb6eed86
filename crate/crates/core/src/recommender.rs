//! Adviser committees and weighted k-NN utility predictions.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizedRatings, RatingMatrix};
use crate::error::{Error, Result};
use crate::similarity::{amplify_weight, SimilarityMatrix, DEFAULT_OVERLAP_THRESHOLD};

/// Which raters may act as advisers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdviserPool {
    All,
    Groups(Vec<String>),
    Raters(Vec<String>),
}

impl AdviserPool {
    pub fn group(name: impl Into<String>) -> Self {
        AdviserPool::Groups(vec![name.into()])
    }

    /// Membership mask over the raters of `m`.
    pub fn mask(&self, m: &RatingMatrix) -> Result<Vec<bool>> {
        match self {
            AdviserPool::All => Ok(vec![true; m.n_raters()]),
            AdviserPool::Groups(names) => {
                let gs = names
                    .iter()
                    .map(|g| m.group_index(g))
                    .collect::<Result<Vec<_>>>()?;
                Ok((0..m.n_raters()).map(|r| gs.contains(&m.group_of(r))).collect())
            }
            AdviserPool::Raters(ids) => {
                let mut mask = vec![false; m.n_raters()];
                for id in ids {
                    mask[m.rater_index(id)?] = true;
                }
                Ok(mask)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            AdviserPool::All => "all".into(),
            AdviserPool::Groups(g) => g.join("+"),
            AdviserPool::Raters(r) => format!("raters[{}]", r.len()),
        }
    }
}

impl fmt::Display for AdviserPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for AdviserPool {
    type Err = Error;

    /// `all`, or one or more group names joined with `+`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InvalidConfig("empty adviser pool".into()));
        }
        if s == "all" {
            return Ok(AdviserPool::All);
        }
        Ok(AdviserPool::Groups(s.split('+').map(|g| g.trim().to_string()).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub rho: f64,
    pub pool: AdviserPool,
    pub overlap_threshold: usize,
    /// Leave negatively correlated advisers out of the ranking instead of
    /// seating them with zero amplified weight.
    #[serde(default)]
    pub skip_negative: bool,
}

impl KnnConfig {
    pub fn new(k: usize, rho: f64, pool: AdviserPool) -> Self {
        KnnConfig {
            k,
            rho,
            pool,
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            skip_negative: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("rho must be a non-negative number, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Pool members other than `target` with a defined weight, strongest
/// first; equal weights fall back to ascending rater index.
pub fn rank_advisers(s: &SimilarityMatrix, target: usize, pool: &[bool], skip_negative: bool) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = (0..s.n_raters())
        .filter(|&j| j != target && pool[j])
        .filter_map(|j| s.weight(target, j).map(|w| (j, w)))
        .filter(|&(_, w)| !skip_negative || w >= 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// `rank_advisers` for every rater as target.
pub fn rank_all(s: &SimilarityMatrix, pool: &[bool], skip_negative: bool) -> Vec<Vec<(usize, f64)>> {
    (0..s.n_raters())
        .map(|t| rank_advisers(s, t, pool, skip_negative))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitteeMember {
    pub adviser: usize,
    pub raw_weight: f64,
    pub amplified_weight: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Committee {
    pub target: usize,
    pub item: usize,
    pub members: Vec<CommitteeMember>,
    /// `false` when the pool ran out before `k` advisers were found.
    pub complete: bool,
    /// Every member had zero amplified weight, so shares are equal.
    pub equal_weight_fallback: bool,
}

impl Committee {
    /// Seat advisers from `ranking` in order, optionally only those with a
    /// rating for the item in `train`.
    pub(crate) fn seat(
        ranking: &[(usize, f64)],
        target: usize,
        item: usize,
        k: usize,
        rho: f64,
        train: Option<&RatingMatrix>,
    ) -> Committee {
        let mut members: Vec<CommitteeMember> = Vec::with_capacity(k.min(ranking.len()));
        for &(adviser, raw) in ranking {
            if members.len() == k {
                break;
            }
            if train.is_some_and(|t| !t.has_rating(adviser, item)) {
                continue;
            }
            members.push(CommitteeMember {
                adviser,
                raw_weight: raw,
                amplified_weight: amplify_weight(raw, rho),
                share: 0.0,
            });
        }
        let complete = members.len() == k;
        let total: f64 = members.iter().map(|m| m.amplified_weight).sum();
        let equal_weight_fallback = total <= 0.0 && !members.is_empty();
        let n = members.len() as f64;
        for m in &mut members {
            m.share = if equal_weight_fallback { 1.0 / n } else { m.amplified_weight / total };
        }
        Committee {
            target,
            item,
            members,
            complete,
            equal_weight_fallback,
        }
    }
}

/// The `k` strongest pool advisers of `target` who rated `item` in
/// `train`, searching down the ranking past advisers without a rating.
pub fn form_committee(
    s: &SimilarityMatrix,
    train: &NormalizedRatings,
    target: usize,
    item: usize,
    cfg: &KnnConfig,
) -> Result<Committee> {
    cfg.validate()?;
    let pool = cfg.pool.mask(train)?;
    let ranking = rank_advisers(s, target, &pool, cfg.skip_negative);
    Ok(Committee::seat(&ranking, target, item, cfg.k, cfg.rho, Some(train)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Estimated utility in z-score units; `None` for an empty committee.
    pub value: Option<f64>,
    pub equal_weight_fallback: bool,
    pub committee: Committee,
}

/// Weighted mean of the members' ratings with amplified weights. A
/// non-empty committee whose amplified weights are all zero falls back to
/// the plain mean.
pub fn predict_utility(c: &Committee, train: &RatingMatrix, rho: f64) -> Prediction {
    let value = utility(c.members.iter().map(|m| (m.raw_weight, m.adviser)), train, c.item, rho);
    Prediction {
        value: value.map(|(v, _)| v),
        equal_weight_fallback: value.is_some_and(|(_, f)| f),
        committee: c.clone(),
    }
}

fn utility(
    members: impl Iterator<Item = (f64, usize)>,
    train: &RatingMatrix,
    item: usize,
    rho: f64,
) -> Option<(f64, bool)> {
    let (mut num, mut den, mut plain, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (raw, adviser) in members {
        let u = train
            .rating(adviser, item)
            .expect("committee members rated the item");
        let w = amplify_weight(raw, rho);
        num += w * u;
        den += w;
        plain += u;
        n += 1;
    }
    if n == 0 {
        None
    } else if den > 0.0 {
        Some((num / den, false))
    } else {
        Some((plain / n as f64, true))
    }
}

/// Anything that can estimate a target's utility for an item.
pub trait Predictor {
    fn predict(&self, target: usize, item: usize) -> Option<f64>;
}

/// Weighted k-NN over a fixed similarity matrix and training data, with
/// adviser rankings computed once per target.
pub struct KnnPredictor<'a> {
    train: &'a RatingMatrix,
    rankings: Cow<'a, [Vec<(usize, f64)>]>,
    k: usize,
    rho: f64,
}

impl<'a> KnnPredictor<'a> {
    pub fn new(s: &SimilarityMatrix, train: &'a NormalizedRatings, cfg: &KnnConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = cfg.pool.mask(train)?;
        Ok(Self::with_mask(s, train, cfg, &pool))
    }

    pub(crate) fn with_mask(s: &SimilarityMatrix, train: &'a RatingMatrix, cfg: &KnnConfig, pool: &[bool]) -> Self {
        KnnPredictor {
            train,
            rankings: Cow::Owned(rank_all(s, pool, cfg.skip_negative)),
            k: cfg.k,
            rho: cfg.rho,
        }
    }

    pub(crate) fn from_rankings(train: &'a RatingMatrix, rankings: &'a [Vec<(usize, f64)>], k: usize, rho: f64) -> Self {
        KnnPredictor {
            train,
            rankings: Cow::Borrowed(rankings),
            k,
            rho,
        }
    }

    pub fn ranking(&self, target: usize) -> &[(usize, f64)] {
        &self.rankings[target]
    }

    pub fn committee(&self, target: usize, item: usize) -> Committee {
        Committee::seat(&self.rankings[target], target, item, self.k, self.rho, Some(self.train))
    }

    pub fn prediction(&self, target: usize, item: usize) -> Prediction {
        predict_utility(&self.committee(target, item), self.train, self.rho)
    }
}

impl Predictor for KnnPredictor<'_> {
    fn predict(&self, target: usize, item: usize) -> Option<f64> {
        let train = self.train;
        let members = self.rankings[target]
            .iter()
            .filter(|&&(j, _)| train.has_rating(j, item))
            .take(self.k)
            .map(|&(j, w)| (w, j));
        utility(members, train, item, self.rho).map(|(v, _)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    A,
    B,
}

/// Pick the option with the higher predicted utility. Exact ties and
/// missing predictions on either side are settled by a fair coin.
pub fn choose<R: Rng + ?Sized>(a: Option<f64>, b: Option<f64>, rng: &mut R) -> Choice {
    match (a, b) {
        (Some(x), Some(y)) if x > y => Choice::A,
        (Some(x), Some(y)) if y > x => Choice::B,
        _ => {
            if rng.random_bool(0.5) {
                Choice::A
            } else {
                Choice::B
            }
        }
    }
}

pub fn choose_between<P: Predictor + ?Sized, R: Rng + ?Sized>(
    predictor: &P,
    target: usize,
    item_a: usize,
    item_b: usize,
    rng: &mut R,
) -> Choice {
    choose(predictor.predict(target, item_a), predictor.predict(target, item_b), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyPreset {
    pub name: &'static str,
    pub k: usize,
    /// `None` where any value gives the same strategy.
    pub rho: Option<f64>,
}

/// The named social-learning strategies as `(k, rho)` settings for a
/// population of `population` raters, cliques of `clique_size` and
/// amplification `weighted_rho` for the weighted variants.
pub fn strategy_presets(population: usize, clique_size: usize, weighted_rho: f64) -> Vec<StrategyPreset> {
    let crowd = population.saturating_sub(1).max(1);
    vec![
        StrategyPreset { name: "doppelganger", k: 1, rho: None },
        StrategyPreset { name: "clique", k: clique_size, rho: Some(0.0) },
        StrategyPreset { name: "weighted clique", k: clique_size, rho: Some(weighted_rho) },
        StrategyPreset { name: "weighted crowd", k: crowd, rho: Some(weighted_rho) },
        StrategyPreset { name: "whole crowd", k: crowd, rho: Some(0.0) },
    ]
}
