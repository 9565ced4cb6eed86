//! Pearson taste similarity between raters over co-rated items.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedRatings;
use crate::error::{Error, Result};

pub const DEFAULT_OVERLAP_THRESHOLD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Observed,
    Fallback,
    Undefined,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::Fallback => "fallback",
            Provenance::Undefined => "undefined",
        }
    }
}

/// Result of correlating two raters on the items both rated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCorrelation {
    /// `None` when the overlap is below two items or either side is
    /// constant on it.
    pub weight: Option<f64>,
    pub overlap: usize,
}

/// Pearson correlation over the overlap, with means taken over the
/// overlap set.
pub fn pairwise_correlation(r: &NormalizedRatings, i: usize, j: usize) -> PairCorrelation {
    let (a, b) = (r.row(i), r.row(j));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let (mut p, mut q) = (0, 0);
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                xs.push(a[p].1);
                ys.push(b[q].1);
                p += 1;
                q += 1;
            }
        }
    }
    PairCorrelation {
        weight: pearson(&xs, &ys),
        overlap: xs.len(),
    }
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityEntry {
    pub weight: Option<f64>,
    pub overlap: usize,
    pub provenance: Provenance,
}

/// Dense rater × rater similarity weights with provenance.
///
/// Row `i` holds the weights rater `i` puts on everybody else. Pairs with
/// more than `overlap_threshold` co-rated items (and a defined correlation)
/// are observed; every other entry in the row takes the mean of the row's
/// observed weights, or stays undefined if the row has none.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    weights: Vec<f64>,
    overlaps: Vec<u32>,
    provenance: Vec<Provenance>,
    overlap_threshold: usize,
}

impl SimilarityMatrix {
    /// Matrix from explicit row-major weights; `Some` entries are treated
    /// as observed, the diagonal is ignored.
    pub fn from_weights(n: usize, weights: &[Option<f64>]) -> Result<SimilarityMatrix> {
        if weights.len() != n * n {
            return Err(Error::InvalidConfig(format!("expected {} weights, got {}", n * n, weights.len())));
        }
        let mut out = SimilarityMatrix {
            n,
            weights: vec![0.0; n * n],
            overlaps: vec![0; n * n],
            provenance: vec![Provenance::Undefined; n * n],
            overlap_threshold: 0,
        };
        for i in 0..n {
            for j in 0..n {
                if let (true, Some(w)) = (i != j, weights[i * n + j]) {
                    out.weights[i * n + j] = w;
                    out.provenance[i * n + j] = Provenance::Observed;
                }
            }
        }
        Ok(out)
    }

    pub fn n_raters(&self) -> usize {
        self.n
    }

    pub fn overlap_threshold(&self) -> usize {
        self.overlap_threshold
    }

    pub fn entry(&self, i: usize, j: usize) -> SimilarityEntry {
        let c = i * self.n + j;
        let provenance = self.provenance[c];
        SimilarityEntry {
            weight: (provenance != Provenance::Undefined).then_some(self.weights[c]),
            overlap: self.overlaps[c] as usize,
            provenance,
        }
    }

    /// Weight rater `i` puts on `j`, `None` if undefined or `i == j`.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.entry(i, j).weight
    }

    pub fn provenance(&self, i: usize, j: usize) -> Provenance {
        self.provenance[i * self.n + j]
    }

    pub fn overlap(&self, i: usize, j: usize) -> usize {
        self.overlaps[i * self.n + j] as usize
    }

    /// Observed weights of row `i`, as `(j, weight)`.
    pub fn observed_row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n).filter_map(move |j| {
            let c = i * self.n + j;
            (self.provenance[c] == Provenance::Observed).then(|| (j, self.weights[c]))
        })
    }

    pub fn write_csv<W: Write>(&self, r: &NormalizedRatings, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rater_i", "rater_j", "weight", "overlap", "provenance"])?;
        for i in 0..self.n {
            for j in 0..self.n {
                if i == j {
                    continue;
                }
                let e = self.entry(i, j);
                let w = e.weight.map(|w| w.to_string()).unwrap_or_default();
                wtr.write_record([
                    r.rater_id(i),
                    r.rater_id(j),
                    &w,
                    &e.overlap.to_string(),
                    e.provenance.as_str(),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<similarity writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, r: &NormalizedRatings, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(r, std::io::BufWriter::new(f))
    }
}

pub fn build_similarity_matrix(r: &NormalizedRatings, overlap_threshold: usize) -> SimilarityMatrix {
    let n = r.n_raters();
    // upper triangle, one task per row
    let upper: Vec<Vec<PairCorrelation>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| pairwise_correlation(r, i, j)).collect())
        .collect();

    let mut weights = vec![0.0; n * n];
    let mut overlaps = vec![0u32; n * n];
    let mut provenance = vec![Provenance::Undefined; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, pc) in row.iter().enumerate() {
            let j = i + 1 + off;
            overlaps[i * n + j] = pc.overlap as u32;
            overlaps[j * n + i] = pc.overlap as u32;
            if let Some(w) = pc.weight.filter(|_| pc.overlap > overlap_threshold) {
                for c in [i * n + j, j * n + i] {
                    weights[c] = w;
                    provenance[c] = Provenance::Observed;
                }
            }
        }
    }
    for i in 0..n {
        let (mut sum, mut count) = (0.0, 0usize);
        for j in 0..n {
            if provenance[i * n + j] == Provenance::Observed {
                sum += weights[i * n + j];
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        for j in 0..n {
            let c = i * n + j;
            if j != i && provenance[c] != Provenance::Observed {
                weights[c] = mean;
                provenance[c] = Provenance::Fallback;
            }
        }
    }
    SimilarityMatrix {
        n,
        weights,
        overlaps,
        provenance,
        overlap_threshold,
    }
}

/// Similarity sensitivity: `w^rho` for non-negative `w`, zero otherwise.
pub fn amplify_weight(w: f64, rho: f64) -> f64 {
    if w >= 0.0 {
        w.powf(rho)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationProfile {
    pub mean: Option<f64>,
    /// Sample SD; `None` with fewer than two observed entries.
    pub sd: Option<f64>,
    pub observed: usize,
}

/// Mean and SD of the observed weights rater `i` has towards `audience`.
/// Fallback and undefined entries are skipped; `i` itself is ignored.
pub fn correlation_profile(s: &SimilarityMatrix, i: usize, audience: &[usize]) -> CorrelationProfile {
    let ws: Vec<f64> = audience
        .iter()
        .filter(|&&j| j != i && s.provenance(i, j) == Provenance::Observed)
        .map(|&j| s.weights[i * s.n + j])
        .collect();
    let n = ws.len();
    let mean = (n > 0).then(|| ws.iter().sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n >= 2).map(|m| {
        (ws.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
    });
    CorrelationProfile { mean, sd, observed: n }
}

/// Average of the per-rater mean profiles of `members` towards `audience`,
/// over members whose profile mean is defined.
pub fn mean_profile(s: &SimilarityMatrix, members: &[usize], audience: &[usize]) -> Option<f64> {
    let means: Vec<f64> = members
        .iter()
        .filter_map(|&i| correlation_profile(s, i, audience).mean)
        .collect();
    (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RatingMatrix, RatingRecord};

    fn norm(rows: &[(&str, &[(&str, f64)])]) -> NormalizedRatings {
        let recs = rows.iter().flat_map(|(r, items)| {
            items.iter().map(move |(i, v)| RatingRecord {
                rater_id: r.to_string(),
                item_id: i.to_string(),
                rating: *v,
                group: "g".into(),
            })
        });
        NormalizedRatings::from_standardized(RatingMatrix::from_records(recs).unwrap())
    }

    #[test]
    fn perfect_agreement_and_disagreement() {
        let r = norm(&[
            ("i", &[("a", 1.0), ("b", 2.0), ("c", 3.0)]),
            ("j", &[("a", 1.0), ("b", 2.0), ("c", 3.0)]),
            ("k", &[("a", 3.0), ("b", 2.0), ("c", 1.0)]),
        ]);
        let pc = pairwise_correlation(&r, 0, 1);
        assert_eq!(pc.overlap, 3);
        assert!((pc.weight.unwrap() - 1.0).abs() < 1e-15);
        let pc = pairwise_correlation(&r, 0, 2);
        assert!((pc.weight.unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_overlap_is_undefined() {
        let r = norm(&[("i", &[("a", 1.0), ("b", 2.0)]), ("j", &[("c", 1.0), ("d", 2.0)])]);
        assert_eq!(pairwise_correlation(&r, 0, 1), PairCorrelation { weight: None, overlap: 0 });
    }

    #[test]
    fn constant_side_is_undefined() {
        let r = norm(&[("i", &[("a", 1.0), ("b", 2.0)]), ("j", &[("a", 1.0), ("b", 1.0)])]);
        assert_eq!(pairwise_correlation(&r, 0, 1).weight, None);
    }

    fn items(n: usize, f: impl Fn(usize) -> f64) -> Vec<(String, f64)> {
        (0..n).map(|m| (format!("m{m}"), f(m))).collect()
    }

    fn norm_owned(rows: Vec<(&str, Vec<(String, f64)>)>) -> NormalizedRatings {
        let recs = rows.into_iter().flat_map(|(r, items)| {
            items.into_iter().map(move |(i, v)| RatingRecord {
                rater_id: r.to_string(),
                item_id: i,
                rating: v,
                group: "g".into(),
            })
        });
        NormalizedRatings::from_standardized(RatingMatrix::from_records(recs).unwrap())
    }

    #[test]
    fn overlap_threshold_is_strict() {
        let r = norm_owned(vec![
            ("a", items(5, |m| m as f64)),
            ("b", items(5, |m| (m * m) as f64)),
            ("c", items(6, |m| m as f64)),
        ]);
        let s = build_similarity_matrix(&r, 5);
        // a-b overlap 5: not observed; a-c overlap 5 too. b-c overlap 5.
        assert_eq!(s.provenance(0, 1), Provenance::Undefined);
        let s = build_similarity_matrix(&r, 4);
        assert_eq!(s.provenance(0, 1), Provenance::Observed);
    }

    #[test]
    fn fallback_is_mean_of_observed_row() {
        // rater 0 correlates with 1 and 2 on 6 items; 3 only shares 2 items
        let base: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = norm_owned(vec![
            ("t", items(6, |m| base[m])),
            ("x", items(6, |m| [1.0, 3.0, 2.0, 5.0, 4.0, 6.0][m])),
            ("y", items(6, |m| [6.0, 1.0, 5.0, 2.0, 4.0, 3.0][m])),
            ("thin", items(2, |m| m as f64)),
        ]);
        let s = build_similarity_matrix(&r, 5);
        let w1 = s.weight(0, 1).unwrap();
        let w2 = s.weight(0, 2).unwrap();
        assert_eq!(s.provenance(0, 3), Provenance::Fallback);
        assert!((s.weight(0, 3).unwrap() - (w1 + w2) / 2.0).abs() < 1e-15);
        // the thin rater has nothing observed
        assert_eq!(s.provenance(3, 0), Provenance::Undefined);
        assert_eq!(s.weight(3, 0), None);
        assert_eq!(s.overlap(0, 3), 2);
        assert_eq!(s.overlap(3, 0), 2);
    }

    #[test]
    fn dense_threshold_zero_is_all_observed_and_symmetric() {
        let r = norm_owned(vec![
            ("a", items(4, |m| [1.0, 3.0, 2.0, 4.0][m])),
            ("b", items(4, |m| [2.0, 1.0, 4.0, 3.0][m])),
            ("c", items(4, |m| [4.0, 3.0, 1.0, 2.0][m])),
        ]);
        let s = build_similarity_matrix(&r, 0);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(s.provenance(i, j), Provenance::Observed);
                    assert_eq!(s.weight(i, j), s.weight(j, i));
                }
            }
        }
    }

    #[test]
    fn no_pair_over_threshold_gives_undefined_rows() {
        let r = norm_owned(vec![("a", items(3, |m| m as f64)), ("b", items(3, |m| m as f64))]);
        let s = build_similarity_matrix(&r, 5);
        assert_eq!(s.provenance(0, 1), Provenance::Undefined);
        assert_eq!(s.provenance(1, 0), Provenance::Undefined);
    }

    #[test]
    fn amplify_branches() {
        assert_eq!(amplify_weight(0.5, 0.0), 1.0);
        assert_eq!(amplify_weight(-0.3, 1.0), 0.0);
        assert_eq!(amplify_weight(0.5, 2.0), 0.25);
        assert_eq!(amplify_weight(0.0, 0.0), 1.0);
        assert_eq!(amplify_weight(-1.0, 0.0), 0.0);
    }

    #[test]
    fn profile_of_single_entry() {
        let r = norm_owned(vec![
            ("a", items(6, |m| m as f64)),
            ("b", items(6, |m| [0.0, 2.0, 1.0, 3.0, 5.0, 4.0][m])),
        ]);
        let s = build_similarity_matrix(&r, 5);
        let p = correlation_profile(&s, 0, &[1]);
        assert_eq!(p.observed, 1);
        assert_eq!(p.mean, s.weight(0, 1));
        assert_eq!(p.sd, None);
    }
}
