//! Advice networks spanned by the k-NN committees.
//!
//! Edges point from the rater being advised to the adviser and carry the
//! adviser's share of the committee. Node strength (sum of incoming edge
//! weights) is recommender potential on the first-call network and
//! recommender influence on the networks of committees that actually
//! supplied ratings.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizedRatings, RatingMatrix};
use crate::error::{Error, Result};
use crate::evaluation::repetition_split;
use crate::recommender::{rank_all, Committee, KnnConfig};
use crate::similarity::{build_similarity_matrix, SimilarityMatrix};

pub const DEFAULT_DISPLAY_CUTOFF: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "item")]
pub enum NetworkScope {
    Potential,
    InfluenceGlobal,
    InfluenceItem(String),
}

/// Which training data influence committees are formed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InfluenceMode {
    /// All ratings, no holdout.
    FullData,
    /// A fresh per-rater holdout every repetition, as in evaluation.
    CoupledHoldout { holdout: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub k: usize,
    pub rho: f64,
    pub pool: String,
    pub scope: NetworkScope,
    pub mode: Option<InfluenceMode>,
    pub repetitions: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdviceNetwork {
    nodes: Vec<String>,
    node_groups: Vec<String>,
    // (seeker, adviser) -> weight
    edges: BTreeMap<(usize, usize), f64>,
    pub meta: NetworkMeta,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    meta: NetworkMeta,
    nodes: Vec<NodeJson>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: String,
    group: String,
    strength: f64,
}

impl AdviceNetwork {
    pub fn new(nodes: Vec<String>, node_groups: Vec<String>, meta: NetworkMeta) -> Self {
        AdviceNetwork {
            nodes,
            node_groups,
            edges: BTreeMap::new(),
            meta,
        }
    }

    fn for_ratings(r: &RatingMatrix, meta: NetworkMeta) -> Self {
        let groups = (0..r.n_raters()).map(|i| r.group_name_of(i).to_string()).collect();
        Self::new(r.rater_ids().to_vec(), groups, meta)
    }

    /// Add `weight` to the edge `source -> target`. Self-edges and
    /// non-positive weights are ignored.
    pub fn add_weight(&mut self, source: usize, target: usize, weight: f64) {
        if source == target || weight <= 0.0 {
            return;
        }
        *self.edges.entry((source, target)).or_insert(0.0) += weight;
    }

    fn add_committee(&mut self, c: &Committee, scale: f64) {
        for m in &c.members {
            self.add_weight(c.target, m.adviser, m.share * scale);
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_group(&self, node: usize) -> &str {
        &self.node_groups[node]
    }

    pub fn node_index(&self, id: &str) -> Result<usize> {
        self.nodes
            .iter()
            .position(|n| n == id)
            .ok_or_else(|| Error::UnknownRater(id.to_string()))
    }

    /// `(seeker, adviser, weight)` in ascending index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(s, t), &w)| (s, t, w))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_weight(&self, source: usize, target: usize) -> f64 {
        self.edges.get(&(source, target)).copied().unwrap_or(0.0)
    }

    /// Incoming strength of every node.
    pub fn strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for (&(_, t), &w) in &self.edges {
            s[t] += w;
        }
        s
    }

    pub fn out_strengths(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for (&(src, _), &w) in &self.edges {
            s[src] += w;
        }
        s
    }

    /// Mean incoming strength over members of `group`.
    pub fn mean_strength(&self, group: &str) -> Result<f64> {
        let strengths = self.strengths();
        let members: Vec<usize> = (0..self.nodes.len()).filter(|&n| self.node_groups[n] == group).collect();
        if members.is_empty() {
            return Err(Error::UnknownGroup(group.to_string()));
        }
        Ok(members.iter().map(|&n| strengths[n]).sum::<f64>() / members.len() as f64)
    }

    /// Copy without edges lighter than `min_weight`; only meant for display.
    pub fn filtered(&self, min_weight: f64) -> AdviceNetwork {
        let mut out = self.clone();
        out.edges.retain(|_, w| *w >= min_weight);
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["source", "target", "weight"])?;
        for (s, t, w) in self.edges() {
            wtr.write_record([&self.nodes[s], &self.nodes[t], &w.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<network writer>", e))?;
        Ok(())
    }

    /// DOT graph; `accuracy` adds a per-node attribute where given.
    pub fn write_dot<W: Write>(&self, mut w: W, accuracy: Option<&HashMap<String, f64>>) -> Result<()> {
        let io = |e| Error::io("<network writer>", e);
        let strengths = self.strengths();
        writeln!(w, "digraph advice {{").map_err(io)?;
        for (n, id) in self.nodes.iter().enumerate() {
            let mut attrs = format!(
                "group=\"{}\", strength={}",
                escape(&self.node_groups[n]),
                strengths[n]
            );
            if let Some(acc) = accuracy.and_then(|a| a.get(id)) {
                attrs.push_str(&format!(", accuracy={acc}"));
            }
            writeln!(w, "  \"{}\" [{}];", escape(id), attrs).map_err(io)?;
        }
        for (s, t, wt) in self.edges() {
            writeln!(
                w,
                "  \"{}\" -> \"{}\" [weight={}];",
                escape(&self.nodes[s]),
                escape(&self.nodes[t]),
                wt
            )
            .map_err(io)?;
        }
        writeln!(w, "}}").map_err(io)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let strengths = self.strengths();
        let doc = NetworkJson {
            meta: self.meta.clone(),
            nodes: self
                .nodes
                .iter()
                .enumerate()
                .map(|(n, id)| NodeJson {
                    id: id.clone(),
                    group: self.node_groups[n].clone(),
                    strength: strengths[n],
                })
                .collect(),
            edges: self
                .edges()
                .map(|(s, t, w)| Edge {
                    source: self.nodes[s].clone(),
                    target: self.nodes[t].clone(),
                    weight: w,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<AdviceNetwork> {
        let doc: NetworkJson = serde_json::from_str(s)?;
        let mut net = AdviceNetwork::new(
            doc.nodes.iter().map(|n| n.id.clone()).collect(),
            doc.nodes.iter().map(|n| n.group.clone()).collect(),
            doc.meta,
        );
        let index: HashMap<&str, usize> = doc.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        for e in &doc.edges {
            let s = *index.get(e.source.as_str()).ok_or_else(|| Error::UnknownRater(e.source.clone()))?;
            let t = *index.get(e.target.as_str()).ok_or_else(|| Error::UnknownRater(e.target.clone()))?;
            net.add_weight(s, t, e.weight);
        }
        Ok(net)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<AdviceNetwork> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Read back an edge-list CSV written by `write_csv`.
pub fn read_edge_csv<R: Read>(reader: R) -> Result<Vec<Edge>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Sum of incoming weights of `node`.
pub fn node_strength(net: &AdviceNetwork, node: &str) -> Result<f64> {
    let n = net.node_index(node)?;
    Ok(net.edges().filter(|&(_, t, _)| t == n).map(|(_, _, w)| w).sum())
}

/// First-call network: every rater's top `k` pool advisers, ignoring
/// whether they rated anything in particular.
pub fn build_potential_network(s: &SimilarityMatrix, r: &RatingMatrix, cfg: &KnnConfig) -> Result<AdviceNetwork> {
    cfg.validate()?;
    let pool = cfg.pool.mask(r)?;
    let rankings = rank_all(s, &pool, cfg.skip_negative);
    let mut net = AdviceNetwork::for_ratings(
        r,
        NetworkMeta {
            k: cfg.k,
            rho: cfg.rho,
            pool: cfg.pool.label(),
            scope: NetworkScope::Potential,
            mode: None,
            repetitions: 1,
            seed: None,
        },
    );
    for (t, ranking) in rankings.iter().enumerate() {
        net.add_committee(&Committee::seat(ranking, t, 0, cfg.k, cfg.rho, None), 1.0);
    }
    Ok(net)
}

/// Items to form committees for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfluenceScope {
    Global,
    Item(usize),
}

fn accumulate_influence(
    sim: &SimilarityMatrix,
    train: &RatingMatrix,
    cfg: &KnnConfig,
    pool: &[bool],
    items: &[usize],
) -> BTreeMap<(usize, usize), f64> {
    let rankings = rank_all(sim, pool, cfg.skip_negative);
    let per_target: Vec<Vec<((usize, usize), f64)>> = (0..train.n_raters())
        .into_par_iter()
        .map(|t| {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for &m in items {
                let c = Committee::seat(&rankings[t], t, m, cfg.k, cfg.rho, Some(train));
                for member in &c.members {
                    *acc.entry(member.adviser).or_insert(0.0) += member.share;
                }
            }
            acc.into_iter().map(|(a, w)| ((t, a), w)).collect()
        })
        .collect();
    per_target.into_iter().flatten().collect()
}

/// Network of committees that actually supplied ratings.
///
/// Global scope averages over all items, so a node's strength is its mean
/// per-item incoming share total; item scope keeps the raw shares for one
/// item. Both are averaged over repetitions. With `FullData` there is no
/// randomness, so a single pass is made whatever `repetitions` says.
pub fn build_influence_network(
    r: &NormalizedRatings,
    cfg: &KnnConfig,
    scope: InfluenceScope,
    mode: InfluenceMode,
    repetitions: usize,
    seed: u64,
) -> Result<AdviceNetwork> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be at least 1".into()));
    }
    influence_over(r, cfg, scope, mode, 0..repetitions, seed)
}

/// The coupled-holdout network of repetition `rep` alone. Averaging these
/// over `0..R` gives `build_influence_network` with `R` repetitions.
pub fn coupled_influence_pass(
    r: &NormalizedRatings,
    cfg: &KnnConfig,
    scope: InfluenceScope,
    holdout: usize,
    seed: u64,
    rep: usize,
) -> Result<AdviceNetwork> {
    influence_over(r, cfg, scope, InfluenceMode::CoupledHoldout { holdout }, rep..rep + 1, seed)
}

fn influence_over(
    r: &NormalizedRatings,
    cfg: &KnnConfig,
    scope: InfluenceScope,
    mode: InfluenceMode,
    reps: std::ops::Range<usize>,
    seed: u64,
) -> Result<AdviceNetwork> {
    cfg.validate()?;
    let pool = cfg.pool.mask(r)?;
    let (items, scope_meta): (Vec<usize>, NetworkScope) = match scope {
        InfluenceScope::Global => ((0..r.n_items()).collect(), NetworkScope::InfluenceGlobal),
        InfluenceScope::Item(m) => {
            if m >= r.n_items() {
                return Err(Error::UnknownItem(m.to_string()));
            }
            (vec![m], NetworkScope::InfluenceItem(r.item_id(m).to_string()))
        }
    };

    let passes: Vec<BTreeMap<(usize, usize), f64>> = match mode {
        InfluenceMode::FullData => {
            let sim = build_similarity_matrix(r, cfg.overlap_threshold);
            vec![accumulate_influence(&sim, r, cfg, &pool, &items)]
        }
        InfluenceMode::CoupledHoldout { holdout } => {
            let targets: Vec<usize> = (0..r.n_raters()).filter(|&t| r.rating_count(t) >= holdout).collect();
            reps.into_par_iter()
                .map(|rep| {
                    let (train, _) = repetition_split(r, &targets, holdout, seed, rep)?;
                    let sim = build_similarity_matrix(&train, cfg.overlap_threshold);
                    Ok(accumulate_influence(&sim, &train, cfg, &pool, &items))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let used = passes.len();
    let mut net = AdviceNetwork::for_ratings(
        r,
        NetworkMeta {
            k: cfg.k,
            rho: cfg.rho,
            pool: cfg.pool.label(),
            scope: scope_meta,
            mode: Some(mode),
            repetitions: used,
            seed: matches!(mode, InfluenceMode::CoupledHoldout { .. }).then_some(seed),
        },
    );
    let mut total: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for pass in passes {
        for (key, w) in pass {
            *total.entry(key).or_insert(0.0) += w;
        }
    }
    let scale = 1.0 / (items.len().max(1) * used) as f64;
    for ((s, t), w) in total {
        net.add_weight(s, t, w * scale);
    }
    Ok(net)
}

/// Number of raters with a non-empty committee for `item` under `cfg`.
pub fn served_targets(s: &SimilarityMatrix, r: &RatingMatrix, cfg: &KnnConfig, item: usize) -> Result<usize> {
    let pool = cfg.pool.mask(r)?;
    let rankings = rank_all(s, &pool, cfg.skip_negative);
    Ok((0..r.n_raters())
        .filter(|&t| rankings[t].iter().any(|&(j, _)| r.has_rating(j, item)))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingRecord;
    use crate::recommender::AdviserPool;

    fn meta() -> NetworkMeta {
        NetworkMeta {
            k: 1,
            rho: 0.0,
            pool: "all".into(),
            scope: NetworkScope::Potential,
            mode: None,
            repetitions: 1,
            seed: None,
        }
    }

    fn star() -> AdviceNetwork {
        let nodes: Vec<String> = ["hub", "a", "b", "c", "lonely"].iter().map(|s| s.to_string()).collect();
        let groups = vec!["g".to_string(); 5];
        let mut net = AdviceNetwork::new(nodes, groups, meta());
        for s in 1..4 {
            net.add_weight(s, 0, 1.0);
        }
        net
    }

    #[test]
    fn star_strengths() {
        let net = star();
        assert_eq!(node_strength(&net, "hub").unwrap(), 3.0);
        assert_eq!(node_strength(&net, "lonely").unwrap(), 0.0);
        assert!(node_strength(&net, "ghost").is_err());
    }

    #[test]
    fn self_edges_are_never_stored() {
        let mut net = star();
        net.add_weight(2, 2, 0.5);
        assert_eq!(net.edge_weight(2, 2), 0.0);
    }

    #[test]
    fn empty_network_exports_header_only() {
        let net = AdviceNetwork::new(vec![], vec![], meta());
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source,target,weight\n");
    }

    #[test]
    fn csv_export_is_lossless() {
        let nodes: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let mut net = AdviceNetwork::new(nodes, vec!["g".into(); 3], meta());
        net.add_weight(0, 1, 1.0 / 3.0);
        net.add_weight(2, 1, 0.123456789012345);
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        let edges = read_edge_csv(buf.as_slice()).unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].weight, 1.0 / 3.0);
        assert_eq!(edges[1].weight, 0.123456789012345);
        let text = String::from_utf8(buf).unwrap();
        let digits = text.lines().nth(1).unwrap().rsplit(',').next().unwrap().len() - 2;
        assert!(digits >= 9);
    }

    #[test]
    fn json_round_trip_preserves_strengths() {
        let net = star();
        let back = AdviceNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back.strengths(), net.strengths());
        assert_eq!(back.meta, net.meta);
    }

    #[test]
    fn dot_lists_nodes_and_edges() {
        let net = star();
        let mut acc = HashMap::new();
        acc.insert("a".to_string(), 0.75);
        let mut buf = Vec::new();
        net.write_dot(&mut buf, Some(&acc)).unwrap();
        let dot = String::from_utf8(buf).unwrap();
        assert!(dot.contains("\"a\" -> \"hub\" [weight=1];"));
        assert!(dot.contains("accuracy=0.75"));
        assert!(dot.contains("\"hub\" [group=\"g\", strength=3]"));
    }

    #[test]
    fn display_filter_drops_light_edges_only_on_copy() {
        let mut net = star();
        net.add_weight(4, 1, 0.01);
        let shown = net.filtered(DEFAULT_DISPLAY_CUTOFF);
        assert_eq!(shown.n_edges(), 3);
        assert_eq!(net.n_edges(), 4);
    }

    fn dense(n: usize, m: usize) -> NormalizedRatings {
        let mut recs = Vec::new();
        for r in 0..n {
            for i in 0..m {
                let v = i as f64 + ((r * 7 + i * 3) % 5) as f64 * 0.1;
                recs.push(RatingRecord {
                    rater_id: format!("r{r}"),
                    item_id: format!("m{i}"),
                    rating: v,
                    group: if r < 2 { "a".into() } else { "b".into() },
                });
            }
        }
        NormalizedRatings::from_standardized(RatingMatrix::from_records(recs).unwrap())
    }

    #[test]
    fn equal_shares_at_rho_zero() {
        let r = dense(8, 10);
        let s = build_similarity_matrix(&r, 5);
        let net = build_potential_network(&s, &r, &KnnConfig::new(5, 0.0, AdviserPool::All)).unwrap();
        for (_, _, w) in net.edges() {
            assert!((w - 0.2).abs() < 1e-15);
        }
        assert!(net.out_strengths().iter().all(|&o| (o - 1.0).abs() < 1e-12));
        let total: f64 = net.strengths().iter().sum();
        assert!((total - 8.0).abs() < 1e-9);
    }

    #[test]
    fn unrated_item_contributes_nothing() {
        let mut recs: Vec<RatingRecord> = dense(4, 8).records().collect();
        recs.push(RatingRecord {
            rater_id: "r0".into(),
            item_id: "orphan".into(),
            rating: 0.0,
            group: "a".into(),
        });
        let r = NormalizedRatings::from_standardized(RatingMatrix::from_records(recs).unwrap());
        let orphan = r.item_index("orphan").unwrap();
        let cfg = KnnConfig::new(2, 1.0, AdviserPool::group("b"));
        let net = build_influence_network(&r, &cfg, InfluenceScope::Item(orphan), InfluenceMode::FullData, 3, 0).unwrap();
        assert_eq!(net.n_edges(), 0);
    }
}
