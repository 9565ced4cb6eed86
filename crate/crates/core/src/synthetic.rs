//! Synthetic rating populations with planted latent tastes.
//!
//! Items carry standard-normal scores on a few archetype dimensions.
//! Archetype 0 is the consensus taste. Each rater's taste is
//! `mixing * e0 + (1 - mixing) * pi` with `pi` a uniform random point on the
//! simplex, scaled to unit length, so latent utilities have unit variance.
//! A rater rates a uniform random subset of `floor(density * items)` items,
//! each rating being the latent utility plus Gaussian noise.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{balanced_count, RatingMatrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub members: usize,
    pub density: f64,
    pub noise_sd: f64,
    pub mixing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub items: usize,
    pub archetypes: usize,
    pub seed: u64,
    pub groups: Vec<GroupSpec>,
}

impl Default for SyntheticSpec {
    /// 14 prolific, consistent "critic" raters and 120 sparse, noisy
    /// "amateur" raters over 200 items.
    fn default() -> Self {
        SyntheticSpec {
            items: 200,
            archetypes: 3,
            seed: 2024,
            groups: vec![
                GroupSpec {
                    name: "critic".into(),
                    members: 14,
                    density: 0.5,
                    noise_sd: 0.3,
                    mixing: 0.9,
                },
                GroupSpec {
                    name: "amateur".into(),
                    members: 120,
                    density: 0.05,
                    noise_sd: 1.0,
                    mixing: 0.5,
                },
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.items == 0 || self.archetypes == 0 {
            return bad("items and archetypes must be at least 1".into());
        }
        if self.groups.is_empty() {
            return bad("at least one group is required".into());
        }
        for g in &self.groups {
            if g.members == 0 {
                return bad(format!("group '{}' has no members", g.name));
            }
            if !(g.density > 0.0 && g.density <= 1.0) {
                return bad(format!("group '{}' density must be in (0, 1]", g.name));
            }
            if balanced_count(g.density, self.items) < 1 {
                return bad(format!(
                    "group '{}': density {} over {} items gives no ratings",
                    g.name, g.density, self.items
                ));
            }
            if !(g.noise_sd >= 0.0 && g.noise_sd.is_finite()) {
                return bad(format!("group '{}' noise_sd must be non-negative", g.name));
            }
            if !(0.0..=1.0).contains(&g.mixing) {
                return bad(format!("group '{}' mixing must be in [0, 1]", g.name));
            }
        }
        Ok(())
    }

    /// Parse the flat `key = value` format; `#` starts a comment.
    ///
    /// ```text
    /// items = 200
    /// archetypes = 3
    /// seed = 7
    /// group.critic.members = 14
    /// group.critic.density = 0.5
    /// group.critic.noise_sd = 0.3
    /// group.critic.mixing = 0.9
    /// ```
    pub fn parse(text: &str) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec {
            items: 0,
            archetypes: 1,
            seed: 0,
            groups: Vec::new(),
        };
        let mut seen_items = false;
        for (no, raw) in text.lines().enumerate() {
            let line = no + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::SpecParse { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err("expected 'key = value'".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<u64>().map_err(|e| err(format!("{key}: {e}")));
            let real = |v: &str| v.parse::<f64>().map_err(|e| err(format!("{key}: {e}")));
            match key.split('.').collect::<Vec<_>>().as_slice() {
                ["items"] => {
                    spec.items = int(value)? as usize;
                    seen_items = true;
                }
                ["archetypes"] => spec.archetypes = int(value)? as usize,
                ["seed"] => spec.seed = int(value)?,
                ["group", name, field] => {
                    let g = match spec.groups.iter().position(|g| g.name == *name) {
                        Some(g) => g,
                        None => {
                            spec.groups.push(GroupSpec {
                                name: name.to_string(),
                                members: 0,
                                density: 0.0,
                                noise_sd: 0.0,
                                mixing: 0.0,
                            });
                            spec.groups.len() - 1
                        }
                    };
                    let gs = &mut spec.groups[g];
                    match *field {
                        "members" => gs.members = int(value)? as usize,
                        "density" => gs.density = real(value)?,
                        "noise_sd" => gs.noise_sd = real(value)?,
                        "mixing" => gs.mixing = real(value)?,
                        other => return Err(err(format!("unknown group field '{other}'"))),
                    }
                }
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        if !seen_items {
            return Err(Error::SpecParse {
                line: 0,
                message: "missing 'items'".into(),
            });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SyntheticSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "items = {}", self.items);
        let _ = writeln!(s, "archetypes = {}", self.archetypes);
        let _ = writeln!(s, "seed = {}", self.seed);
        for g in &self.groups {
            let _ = writeln!(s, "group.{}.members = {}", g.name, g.members);
            let _ = writeln!(s, "group.{}.density = {}", g.name, g.density);
            let _ = writeln!(s, "group.{}.noise_sd = {}", g.name, g.noise_sd);
            let _ = writeln!(s, "group.{}.mixing = {}", g.name, g.mixing);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub ratings: RatingMatrix,
    /// Unit-length taste vector per rater.
    pub tastes: Vec<Vec<f64>>,
    /// `[archetype][item]` scores.
    pub item_scores: Vec<Vec<f64>>,
    /// Noise-free utility of every rater for every item, row-major.
    pub utilities: Vec<f64>,
}

impl SyntheticPopulation {
    pub fn utility(&self, rater: usize, item: usize) -> f64 {
        self.utilities[rater * self.ratings.n_items() + item]
    }

    /// `rater_id,item_id,utility` for every rater and item.
    pub fn write_truth_csv<W: Write>(&self, writer: W) -> Result<()> {
        let m = &self.ratings;
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rater_id", "item_id", "utility"])?;
        for r in 0..m.n_raters() {
            for i in 0..m.n_items() {
                wtr.write_record([m.rater_id(r), m.item_id(i), &self.utility(r, i).to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<truth writer>", e))?;
        Ok(())
    }
}

/// Generate from `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticPopulation> {
    let mut rng = rng::stream(spec.seed, &[]);
    generate_population(spec, &mut rng)
}

pub fn generate_population<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<SyntheticPopulation> {
    spec.validate()?;
    let (n_items, n_arch) = (spec.items, spec.archetypes);
    let item_scores: Vec<Vec<f64>> = (0..n_arch)
        .map(|_| (0..n_items).map(|_| StandardNormal.sample(rng)).collect())
        .collect();

    let mut raters = Vec::new();
    let mut groups = Vec::new();
    let mut rows = Vec::new();
    let mut tastes = Vec::new();
    let mut utilities = Vec::new();
    for g in &spec.groups {
        let count = balanced_count(g.density, n_items);
        for member in 0..g.members {
            let draws: Vec<f64> = (0..n_arch).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            let mut taste: Vec<f64> = draws.iter().map(|d| (1.0 - g.mixing) * d / total).collect();
            taste[0] += g.mixing;
            let norm = taste.iter().map(|t| t * t).sum::<f64>().sqrt();
            taste.iter_mut().for_each(|t| *t /= norm);

            let utility: Vec<f64> = (0..n_items)
                .map(|m| (0..n_arch).map(|a| taste[a] * item_scores[a][m]).sum())
                .collect();
            let mut chosen: Vec<usize> = index::sample(rng, n_items, count).into_vec();
            chosen.sort_unstable();
            let row = chosen
                .into_iter()
                .map(|m| {
                    let noise: f64 = StandardNormal.sample(rng);
                    (m, utility[m] + g.noise_sd * noise)
                })
                .collect();
            raters.push(format!("{}{:03}", g.name, member));
            groups.push(g.name.clone());
            rows.push(row);
            tastes.push(taste);
            utilities.extend(utility);
        }
    }
    let items = (0..n_items).map(|m| format!("item{m:04}")).collect();
    let ratings = RatingMatrix::from_parts(raters, groups, items, rows)?;
    Ok(SyntheticPopulation {
        ratings,
        tastes,
        item_scores,
        utilities,
    })
}
