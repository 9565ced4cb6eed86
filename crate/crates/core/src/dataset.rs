//! Sparse rater × item rating data with one categorical group per rater.
//!
//! Identifiers are interned to dense indices in order of first appearance,
//! so the same file always yields the same indexing.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::ops::Deref;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the ratings CSV (`rater_id,item_id,rating,group`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub item_id: String,
    pub rating: f64,
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct RatingMatrix {
    raters: Vec<String>,
    items: Vec<String>,
    group_names: Vec<String>,
    rater_group: Vec<usize>,
    // sorted by item index
    rows: Vec<Vec<(usize, f64)>>,
    // row-major, NaN marks a missing rating
    dense: Vec<f64>,
    rater_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
}

impl PartialEq for RatingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.raters == other.raters
            && self.items == other.items
            && self.group_names == other.group_names
            && self.rater_group == other.rater_group
            && self.rows == other.rows
    }
}

impl RatingMatrix {
    /// Assemble a matrix from already-indexed parts. Rows may be unsorted;
    /// duplicate items within a row are rejected.
    pub fn from_parts(
        raters: Vec<String>,
        rater_groups: Vec<String>,
        items: Vec<String>,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if raters.len() != rater_groups.len() || raters.len() != rows.len() {
            return Err(Error::InvalidConfig(
                "raters, groups and rows must have equal length".into(),
            ));
        }
        let mut group_names: Vec<String> = Vec::new();
        let mut rater_group = Vec::with_capacity(raters.len());
        for g in &rater_groups {
            let idx = match group_names.iter().position(|n| n == g) {
                Some(i) => i,
                None => {
                    group_names.push(g.clone());
                    group_names.len() - 1
                }
            };
            rater_group.push(idx);
        }
        Self::assemble(raters, items, group_names, rater_group, rows)
    }

    fn assemble(
        raters: Vec<String>,
        items: Vec<String>,
        group_names: Vec<String>,
        rater_group: Vec<usize>,
        mut rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let n_items = items.len();
        let mut dense = vec![f64::NAN; raters.len() * n_items];
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(m, _)| m);
            for &(m, v) in row.iter() {
                if m >= n_items {
                    return Err(Error::InvalidConfig(format!("item index {m} out of range")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "non-finite rating for rater '{}'",
                        raters[r]
                    )));
                }
                let cell = &mut dense[r * n_items + m];
                if !cell.is_nan() {
                    return Err(Error::DuplicateRating {
                        line: 0,
                        rater: raters[r].clone(),
                        item: items[m].clone(),
                    });
                }
                *cell = v;
            }
        }
        let rater_lookup = raters.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let item_lookup = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(RatingMatrix {
            raters,
            items,
            group_names,
            rater_group,
            rows,
            dense,
            rater_lookup,
            item_lookup,
        })
    }

    /// Build from CSV-shaped records, interning ids in input order.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = RatingRecord>,
    {
        let mut builder = Builder::default();
        for (i, rec) in records.into_iter().enumerate() {
            builder.push(i as u64 + 2, rec, None)?;
        }
        builder.finish()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn rater_id(&self, rater: usize) -> &str {
        &self.raters[rater]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn rater_ids(&self) -> &[String] {
        &self.raters
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn rater_index(&self, id: &str) -> Result<usize> {
        self.rater_lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownRater(id.to_string()))
    }

    pub fn item_index(&self, id: &str) -> Result<usize> {
        self.item_lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    /// Group names in order of first appearance.
    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.group_names
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    pub fn group_of(&self, rater: usize) -> usize {
        self.rater_group[rater]
    }

    pub fn group_name_of(&self, rater: usize) -> &str {
        &self.group_names[self.rater_group[rater]]
    }

    pub fn raters_in_group(&self, group: usize) -> Vec<usize> {
        (0..self.n_raters())
            .filter(|&r| self.rater_group[r] == group)
            .collect()
    }

    /// Ratings of `rater` as `(item, value)` sorted by item index.
    pub fn row(&self, rater: usize) -> &[(usize, f64)] {
        &self.rows[rater]
    }

    pub fn rating(&self, rater: usize, item: usize) -> Option<f64> {
        let v = self.dense[rater * self.items.len() + item];
        (!v.is_nan()).then_some(v)
    }

    pub fn has_rating(&self, rater: usize, item: usize) -> bool {
        !self.dense[rater * self.items.len() + item].is_nan()
    }

    pub fn rating_count(&self, rater: usize) -> usize {
        self.rows[rater].len()
    }

    /// Number of raters who rated each item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for row in &self.rows {
            for &(m, _) in row {
                counts[m] += 1;
            }
        }
        counts
    }

    /// Fraction of all items rated by `rater`.
    pub fn rater_density(&self, rater: usize) -> f64 {
        if self.n_items() == 0 {
            return 0.0;
        }
        self.rows[rater].len() as f64 / self.n_items() as f64
    }

    /// Copy with the given `(rater, item)` cells removed. Indexing is
    /// unchanged; cells that are already missing are ignored.
    pub fn without_cells(&self, cells: &[(usize, usize)]) -> RatingMatrix {
        let mut out = self.clone();
        let n_items = self.n_items();
        let mut touched = HashSet::new();
        for &(r, m) in cells {
            out.dense[r * n_items + m] = f64::NAN;
            touched.insert(r);
        }
        for r in touched {
            let dense = &out.dense;
            out.rows[r].retain(|&(m, _)| !dense[r * n_items + m].is_nan());
        }
        out
    }

    /// Copy of the matrix with every value passed through `f(rater, value)`.
    fn map_rows(&self, mut f: impl FnMut(usize, &[(usize, f64)]) -> Vec<(usize, f64)>) -> RatingMatrix {
        let rows: Vec<_> = (0..self.n_raters()).map(|r| f(r, &self.rows[r])).collect();
        Self::assemble(
            self.raters.clone(),
            self.items.clone(),
            self.group_names.clone(),
            self.rater_group.clone(),
            rows,
        )
        .expect("row mapping preserves matrix invariants")
    }

    /// Keep only the listed raters and items (by old index), re-indexing
    /// densely in the original order. Group names that lose all members are
    /// kept so group indices stay stable.
    fn restrict(&self, keep_raters: &[usize], keep_items: &[usize]) -> Result<RatingMatrix> {
        let mut item_map = vec![usize::MAX; self.n_items()];
        for (new, &old) in keep_items.iter().enumerate() {
            item_map[old] = new;
        }
        let raters = keep_raters.iter().map(|&r| self.raters[r].clone()).collect();
        let items = keep_items.iter().map(|&m| self.items[m].clone()).collect();
        let rater_group = keep_raters.iter().map(|&r| self.rater_group[r]).collect();
        let rows = keep_raters
            .iter()
            .map(|&r| {
                self.rows[r]
                    .iter()
                    .filter(|&&(m, _)| item_map[m] != usize::MAX)
                    .map(|&(m, v)| (item_map[m], v))
                    .collect()
            })
            .collect();
        Self::assemble(raters, items, self.group_names.clone(), rater_group, rows)
    }

    /// All ratings as CSV records, row by row.
    pub fn records(&self) -> impl Iterator<Item = RatingRecord> + '_ {
        (0..self.n_raters()).flat_map(move |r| {
            self.rows[r].iter().map(move |&(m, v)| RatingRecord {
                rater_id: self.raters[r].clone(),
                item_id: self.items[m].clone(),
                rating: v,
                group: self.group_names[self.rater_group[r]].clone(),
            })
        })
    }
}

#[derive(Default)]
struct Builder {
    raters: Vec<String>,
    items: Vec<String>,
    group_names: Vec<String>,
    rater_group: Vec<usize>,
    rows: Vec<Vec<(usize, f64)>>,
    rater_lookup: HashMap<String, usize>,
    item_lookup: HashMap<String, usize>,
    seen: HashSet<(usize, usize)>,
}

impl Builder {
    fn push(&mut self, line: u64, rec: RatingRecord, whitelist: Option<&[String]>) -> Result<()> {
        if rec.rater_id.is_empty() || rec.item_id.is_empty() || rec.group.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty identifier or group".into(),
            });
        }
        if !rec.rating.is_finite() {
            return Err(Error::MalformedRow {
                line,
                message: format!("rating '{}' is not a finite number", rec.rating),
            });
        }
        if let Some(allowed) = whitelist {
            if !allowed.contains(&rec.group) {
                return Err(Error::UnknownGroupLabel {
                    line,
                    group: rec.group,
                });
            }
        }
        let group = match self.group_names.iter().position(|g| *g == rec.group) {
            Some(g) => g,
            None => {
                self.group_names.push(rec.group.clone());
                self.group_names.len() - 1
            }
        };
        let rater = match self.rater_lookup.get(&rec.rater_id) {
            Some(&r) => {
                if self.rater_group[r] != group {
                    return Err(Error::GroupConflict {
                        line,
                        rater: rec.rater_id,
                        expected: self.group_names[self.rater_group[r]].clone(),
                        found: rec.group,
                    });
                }
                r
            }
            None => {
                let r = self.raters.len();
                self.raters.push(rec.rater_id.clone());
                self.rater_group.push(group);
                self.rows.push(Vec::new());
                self.rater_lookup.insert(rec.rater_id.clone(), r);
                r
            }
        };
        let item = match self.item_lookup.get(&rec.item_id) {
            Some(&m) => m,
            None => {
                let m = self.items.len();
                self.items.push(rec.item_id.clone());
                self.item_lookup.insert(rec.item_id.clone(), m);
                m
            }
        };
        if !self.seen.insert((rater, item)) {
            return Err(Error::DuplicateRating {
                line,
                rater: rec.rater_id,
                item: rec.item_id,
            });
        }
        self.rows[rater].push((item, rec.rating));
        Ok(())
    }

    fn finish(self) -> Result<RatingMatrix> {
        RatingMatrix::assemble(
            self.raters,
            self.items,
            self.group_names,
            self.rater_group,
            self.rows,
        )
    }
}

/// Parse a ratings CSV. With a `group_whitelist`, any other group label is
/// an error.
pub fn read_ratings<R: Read>(reader: R, group_whitelist: Option<&[String]>) -> Result<RatingMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["rater_id", "item_id", "rating", "group"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header '{}'", expected.join(",")),
        });
    }
    let mut builder = Builder::default();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedRow {
                line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let rec: RatingRecord = row.deserialize(Some(&headers)).map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        builder.push(line, rec, group_whitelist)?;
    }
    builder.finish()
}

pub fn load_ratings(path: impl AsRef<Path>, group_whitelist: Option<&[String]>) -> Result<RatingMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(std::io::BufReader::new(file), group_whitelist)
}

/// Write the matrix with the same schema `read_ratings` accepts.
pub fn write_ratings<W: Write>(m: &RatingMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for rec in m.records() {
        wtr.serialize(rec)?;
    }
    // an empty matrix still gets its header
    if m.n_ratings() == 0 {
        wtr.write_record(["rater_id", "item_id", "rating", "group"])?;
    }
    wtr.flush().map_err(|e| Error::io("<ratings writer>", e))?;
    Ok(())
}

pub fn save_ratings(m: &RatingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ratings(m, std::io::BufWriter::new(file))
}

/// Drop items with fewer than `min_reviews_per_item` ratings, then drop
/// raters outside `protected_groups` with fewer than
/// `min_ratings_per_rater` ratings on the surviving items. One pass each.
pub fn filter_dataset(
    m: &RatingMatrix,
    min_reviews_per_item: usize,
    min_ratings_per_rater: usize,
    protected_groups: &[String],
) -> Result<RatingMatrix> {
    let counts = m.item_counts();
    let keep_items: Vec<usize> = (0..m.n_items())
        .filter(|&i| counts[i] >= min_reviews_per_item)
        .collect();
    let mut kept = vec![false; m.n_items()];
    for &i in &keep_items {
        kept[i] = true;
    }
    let protected: Vec<usize> = protected_groups
        .iter()
        .filter_map(|g| m.group_index(g).ok())
        .collect();
    let keep_raters: Vec<usize> = (0..m.n_raters())
        .filter(|&r| {
            protected.contains(&m.group_of(r))
                || m.row(r).iter().filter(|&&(i, _)| kept[i]).count() >= min_ratings_per_rater
        })
        .collect();
    let out = m.restrict(&keep_raters, &keep_items)?;
    if out.n_ratings() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Ratings z-scored within each rater. Indexing differs from the source
/// matrix when degenerate raters were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRatings {
    matrix: RatingMatrix,
    dropped: Vec<String>,
}

impl Deref for NormalizedRatings {
    type Target = RatingMatrix;

    fn deref(&self) -> &RatingMatrix {
        &self.matrix
    }
}

impl NormalizedRatings {
    /// Wrap values that are already on a per-rater standardized scale.
    pub fn from_standardized(matrix: RatingMatrix) -> Self {
        NormalizedRatings {
            matrix,
            dropped: Vec::new(),
        }
    }

    /// Raters removed because their z-scores are undefined.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn matrix(&self) -> &RatingMatrix {
        &self.matrix
    }

    /// Copy with the given cells removed and all indices preserved.
    pub fn without_cells(&self, cells: &[(usize, usize)]) -> NormalizedRatings {
        NormalizedRatings {
            matrix: self.matrix.without_cells(cells),
            dropped: self.dropped.clone(),
        }
    }
}

/// Per-rater z-scores using the sample standard deviation. Raters with
/// fewer than two ratings or zero variance are dropped with a warning.
pub fn z_normalize(m: &RatingMatrix) -> NormalizedRatings {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for r in 0..m.n_raters() {
        let row = m.row(r);
        let distinct = row.windows(2).any(|w| w[0].1 != w[1].1);
        if row.len() < 2 || !distinct {
            log::warn!(
                "dropping rater '{}' from normalization: {} ratings, zero variance",
                m.rater_id(r),
                row.len()
            );
            dropped.push(m.rater_id(r).to_string());
        } else {
            keep.push(r);
        }
    }
    let all_items: Vec<usize> = (0..m.n_items()).collect();
    let kept = m.restrict(&keep, &all_items).expect("restriction of a valid matrix");
    let matrix = kept.map_rows(|_, row| {
        let n = row.len() as f64;
        let mean = row.iter().map(|&(_, v)| v).sum::<f64>() / n;
        let var = row.iter().map(|&(_, v)| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        row.iter().map(|&(i, v)| (i, (v - mean) / sd)).collect()
    });
    NormalizedRatings { matrix, dropped }
}

/// Mean over members of `group` of the fraction of items they rated.
pub fn density(m: &RatingMatrix, group: &str) -> Result<f64> {
    let g = m.group_index(group)?;
    let members = m.raters_in_group(g);
    if members.is_empty() {
        return Ok(0.0);
    }
    Ok(members.iter().map(|&r| m.rater_density(r)).sum::<f64>() / members.len() as f64)
}

/// Number of ratings a rater may keep at `target_density`: the largest
/// whole count whose density does not exceed the target.
pub fn balanced_count(target_density: f64, n_items: usize) -> usize {
    // the epsilon keeps an exact current density from flooring one short
    (target_density * n_items as f64 + 1e-9).floor() as usize
}

/// Randomly thin every rater of `group` down to `target_density`. Other
/// groups are untouched; indexing is preserved.
pub fn balance_sparsity<R: Rng + ?Sized>(
    m: &RatingMatrix,
    group: &str,
    target_density: f64,
    rng: &mut R,
) -> Result<RatingMatrix> {
    let g = m.group_index(group)?;
    let keep = balanced_count(target_density, m.n_items());
    let mut removed = Vec::new();
    for r in m.raters_in_group(g) {
        let have = m.rating_count(r);
        if keep > have {
            return Err(Error::TargetAboveDensity {
                rater: m.rater_id(r).to_string(),
                current: m.rater_density(r),
                target: target_density,
            });
        }
        let drop = have - keep;
        if drop == 0 {
            continue;
        }
        let row = m.row(r);
        for idx in index::sample(rng, have, drop).into_iter() {
            removed.push((r, row[idx].0));
        }
    }
    Ok(m.without_cells(&removed))
}
