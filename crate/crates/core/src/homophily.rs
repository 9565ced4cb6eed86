//! Taste homophily: the share of a group's outgoing advice weight that
//! lands on members of the same group, against population and rating
//! share baselines.

use std::io::Write;

use serde::Serialize;

use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};
use crate::network::{build_potential_network, AdviceNetwork};
use crate::recommender::KnnConfig;
use crate::similarity::SimilarityMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupBaselines {
    pub groups: Vec<String>,
    /// Population share `N_i / N`.
    pub population: Vec<f64>,
    /// Rating share `R_i / R`.
    pub ratings: Vec<f64>,
}

impl GroupBaselines {
    pub fn get(&self, group: &str) -> Result<(f64, f64)> {
        let g = self
            .groups
            .iter()
            .position(|n| n == group)
            .ok_or_else(|| Error::UnknownGroup(group.to_string()))?;
        Ok((self.population[g], self.ratings[g]))
    }
}

pub fn group_baselines(m: &RatingMatrix) -> Result<GroupBaselines> {
    if m.n_raters() == 0 || m.n_ratings() == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = m.group_names().len();
    let (mut people, mut ratings) = (vec![0usize; k], vec![0usize; k]);
    for r in 0..m.n_raters() {
        people[m.group_of(r)] += 1;
        ratings[m.group_of(r)] += m.rating_count(r);
    }
    let (n, total) = (m.n_raters() as f64, m.n_ratings() as f64);
    Ok(GroupBaselines {
        groups: m.group_names().to_vec(),
        population: people.iter().map(|&c| c as f64 / n).collect(),
        ratings: ratings.iter().map(|&c| c as f64 / total).collect(),
    })
}

/// Same-group and other-group outgoing weight of the given seekers.
fn split_weight(net: &AdviceNetwork, seekers: impl Fn(usize) -> bool, group: &str) -> (f64, f64) {
    let (mut same, mut diff) = (0.0, 0.0);
    for (s, t, w) in net.edges() {
        if !seekers(s) {
            continue;
        }
        if net.node_group(t) == group {
            same += w;
        } else {
            diff += w;
        }
    }
    (same, diff)
}

/// `H = s / (s + d)` over all outgoing edges of the group's members.
pub fn homophily_index(net: &AdviceNetwork, group: &str) -> Result<f64> {
    if !(0..net.n_nodes()).any(|n| net.node_group(n) == group) {
        return Err(Error::UnknownGroup(group.to_string()));
    }
    let (s, d) = split_weight(net, |n| net.node_group(n) == group, group);
    if s + d <= 0.0 {
        return Err(Error::ZeroOutgoingWeight(format!("group '{group}'")));
    }
    Ok(s / (s + d))
}

/// Homophily on the first-call network.
pub fn potential_homophily_index(s: &SimilarityMatrix, r: &RatingMatrix, cfg: &KnnConfig, group: &str) -> Result<f64> {
    homophily_index(&build_potential_network(s, r, cfg)?, group)
}

/// Share of one node's outgoing weight going to its own group.
pub fn individual_homophily(net: &AdviceNetwork, node: &str) -> Result<f64> {
    let n = net.node_index(node)?;
    let group = net.node_group(n).to_string();
    let (s, d) = split_weight(net, |x| x == n, &group);
    if s + d <= 0.0 {
        return Err(Error::ZeroOutgoingWeight(format!("rater '{node}'")));
    }
    Ok(s / (s + d))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomophilyRow {
    pub k: usize,
    pub rho: f64,
    pub variant: String,
    pub group: String,
    /// `None` when the group directs no weight at all.
    pub h: Option<f64>,
    pub p_baseline: f64,
    pub r_baseline: f64,
}

impl HomophilyRow {
    pub fn homophilous_vs_population(&self) -> Option<bool> {
        self.h.map(|h| h > self.p_baseline)
    }

    pub fn homophilous_vs_ratings(&self) -> Option<bool> {
        self.h.map(|h| h > self.r_baseline)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HomophilyReport {
    pub rows: Vec<HomophilyRow>,
}

impl HomophilyReport {
    /// Append one row per group for `net`.
    pub fn push_network(&mut self, net: &AdviceNetwork, variant: &str, baselines: &GroupBaselines) {
        for (g, name) in baselines.groups.iter().enumerate() {
            let h = homophily_index(net, name).ok();
            self.rows.push(HomophilyRow {
                k: net.meta.k,
                rho: net.meta.rho,
                variant: variant.to_string(),
                group: name.clone(),
                h,
                p_baseline: baselines.population[g],
                r_baseline: baselines.ratings[g],
            });
        }
    }

    /// `k,rho,variant,group,H,p_baseline,r_baseline`; undefined H is empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "rho", "variant", "group", "H", "p_baseline", "r_baseline"])?;
        for r in &self.rows {
            wtr.write_record([
                r.k.to_string(),
                r.rho.to_string(),
                r.variant.clone(),
                r.group.clone(),
                r.h.map(|h| h.to_string()).unwrap_or_default(),
                r.p_baseline.to_string(),
                r.r_baseline.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<homophily writer>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RatingRecord;
    use crate::network::{NetworkMeta, NetworkScope};

    fn net(groups: &[&str], edges: &[(usize, usize, f64)]) -> AdviceNetwork {
        let nodes = (0..groups.len()).map(|i| format!("n{i}")).collect();
        let meta = NetworkMeta {
            k: 1,
            rho: 1.0,
            pool: "all".into(),
            scope: NetworkScope::Potential,
            mode: None,
            repetitions: 1,
            seed: None,
        };
        let mut n = AdviceNetwork::new(nodes, groups.iter().map(|s| s.to_string()).collect(), meta);
        for &(s, t, w) in edges {
            n.add_weight(s, t, w);
        }
        n
    }

    #[test]
    fn all_in_group_is_one() {
        let n = net(&["a", "a", "b"], &[(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0)]);
        assert_eq!(homophily_index(&n, "a").unwrap(), 1.0);
        assert_eq!(homophily_index(&n, "b").unwrap(), 0.0);
    }

    #[test]
    fn lone_member_is_zero() {
        let n = net(&["solo", "x", "x"], &[(0, 1, 0.5), (0, 2, 0.5)]);
        assert_eq!(homophily_index(&n, "solo").unwrap(), 0.0);
    }

    #[test]
    fn silent_group_is_undefined() {
        let n = net(&["a", "b"], &[(0, 1, 1.0)]);
        assert!(matches!(homophily_index(&n, "b"), Err(Error::ZeroOutgoingWeight(_))));
        assert!(matches!(homophily_index(&n, "c"), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn individual_shares() {
        let n = net(&["a", "a", "b"], &[(0, 1, 0.6), (0, 2, 0.4), (1, 0, 1.0)]);
        assert!((individual_homophily(&n, "n0").unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(individual_homophily(&n, "n1").unwrap(), 1.0);
        assert!(individual_homophily(&n, "n2").is_err());
    }

    #[test]
    fn group_index_is_weighted_mean_of_members() {
        let n = net(
            &["a", "a", "a", "b"],
            &[(0, 1, 0.6), (0, 3, 0.4), (1, 3, 2.0), (2, 0, 0.3), (2, 3, 0.2)],
        );
        let out = n.out_strengths();
        let weighted: f64 = (0..3)
            .map(|i| out[i] * individual_homophily(&n, &format!("n{i}")).unwrap())
            .sum::<f64>()
            / (out[0] + out[1] + out[2]);
        assert!((homophily_index(&n, "a").unwrap() - weighted).abs() < 1e-15);
    }

    #[test]
    fn baselines_from_counts() {
        let recs = vec![
            ("c", "critic", 3usize),
            ("a1", "amateur", 1),
            ("a2", "amateur", 1),
            ("a3", "amateur", 1),
        ]
        .into_iter()
        .flat_map(|(r, g, n)| {
            (0..n).map(move |m| RatingRecord {
                rater_id: r.into(),
                item_id: format!("m{m}"),
                rating: 1.0,
                group: g.into(),
            })
        });
        let m = RatingMatrix::from_records(recs).unwrap();
        let b = group_baselines(&m).unwrap();
        assert_eq!(b.get("critic").unwrap(), (0.25, 0.5));
        assert_eq!(b.get("amateur").unwrap(), (0.75, 0.5));
        assert!((b.population.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fourteen_of_134() {
        let mut recs = Vec::new();
        for r in 0..134 {
            recs.push(RatingRecord {
                rater_id: format!("r{r}"),
                item_id: "w".into(),
                rating: 1.0,
                group: if r < 14 { "critic".into() } else { "amateur".into() },
            });
        }
        let b = group_baselines(&RatingMatrix::from_records(recs).unwrap()).unwrap();
        let (p, _) = b.get("critic").unwrap();
        assert!((p - 0.1045).abs() < 5e-5);
        assert!(b.get("amateur").unwrap().0 > 0.85);
    }

    #[test]
    fn single_group_baselines_are_one() {
        let m = RatingMatrix::from_records(vec![RatingRecord {
            rater_id: "x".into(),
            item_id: "y".into(),
            rating: 2.0,
            group: "only".into(),
        }])
        .unwrap();
        assert_eq!(group_baselines(&m).unwrap().get("only").unwrap(), (1.0, 1.0));
    }
}
