#![allow(dead_code)]

use tastenet_core::{GroupSpec, NormalizedRatings, RatingMatrix, SyntheticSpec};

/// Matrix from dense rows of optional ratings; item ids are `m0..`.
pub fn matrix(rows: &[(&str, &str, Vec<Option<f64>>)]) -> RatingMatrix {
    let n_items = rows.iter().map(|r| r.2.len()).max().unwrap_or(0);
    RatingMatrix::from_parts(
        rows.iter().map(|r| r.0.to_string()).collect(),
        rows.iter().map(|r| r.1.to_string()).collect(),
        (0..n_items).map(|m| format!("m{m}")).collect(),
        rows.iter()
            .map(|r| r.2.iter().enumerate().filter_map(|(m, v)| v.map(|v| (m, v))).collect())
            .collect(),
    )
    .unwrap()
}

/// The 6 x 8 fully dense toy matrix used by the oracle tests.
pub fn dense_6x8() -> RatingMatrix {
    let values: [[f64; 8]; 6] = [
        [5.0, 3.0, 4.0, 1.0, 2.0, 5.0, 3.0, 4.0],
        [4.0, 3.0, 5.0, 1.0, 1.0, 4.0, 2.0, 5.0],
        [1.0, 5.0, 2.0, 4.0, 5.0, 2.0, 4.0, 1.0],
        [3.0, 3.0, 3.0, 2.0, 4.0, 4.0, 1.0, 2.0],
        [5.0, 4.0, 4.0, 2.0, 1.0, 5.0, 3.0, 3.0],
        [2.0, 1.0, 3.0, 5.0, 4.0, 1.0, 5.0, 2.0],
    ];
    let rows: Vec<(&str, &str, Vec<Option<f64>>)> = ["r0", "r1", "r2", "r3", "r4", "r5"]
        .iter()
        .zip(["a", "a", "b", "b", "a", "b"])
        .zip(values.iter())
        .map(|((id, g), v)| (*id, g, v.iter().map(|&x| Some(x)).collect()))
        .collect();
    matrix(&rows)
}

/// Dense grid as `Option` rows, independent of the crate's storage.
pub fn grid(m: &RatingMatrix) -> Vec<Vec<Option<f64>>> {
    (0..m.n_raters())
        .map(|r| (0..m.n_items()).map(|i| m.rating(r, i)).collect())
        .collect()
}

/// Per-row z-scores with the n-1 standard deviation.
pub fn zscore_grid(g: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
    g.iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().flatten().copied().collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            row.iter().map(|v| v.map(|v| (v - mean) / sd)).collect()
        })
        .collect()
}

/// Textbook Pearson over the items both rows rated. Returns the weight
/// and the overlap size.
pub fn brute_pearson(a: &[Option<f64>], b: &[Option<f64>]) -> (Option<f64>, usize) {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return (None, n);
    }
    let nf = n as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return (None, n);
    }
    (Some(cov / (vx.sqrt() * vy.sqrt())), n)
}

/// Full weight matrix with the overlap threshold and row-mean fallback.
pub fn brute_similarity(g: &[Vec<Option<f64>>], threshold: usize) -> Vec<Vec<Option<f64>>> {
    let n = g.len();
    let mut w = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (p, overlap) = brute_pearson(&g[i], &g[j]);
                if overlap > threshold {
                    w[i][j] = p;
                }
            }
        }
        let obs: Vec<f64> = w[i].iter().flatten().copied().collect();
        if !obs.is_empty() {
            let fill = obs.iter().sum::<f64>() / obs.len() as f64;
            for j in 0..n {
                if j != i && w[i][j].is_none() {
                    w[i][j] = Some(fill);
                }
            }
        }
    }
    w
}

/// Top-`k` advisers of `t` in `pool` who rated `item`, strongest first,
/// ties to the lower index.
pub fn brute_committee(
    w: &[Vec<Option<f64>>],
    g: &[Vec<Option<f64>>],
    pool: &[bool],
    t: usize,
    item: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = (0..g.len())
        .filter(|&j| j != t && pool[j] && g[j][item].is_some())
        .filter_map(|j| w[t][j].map(|x| (j, x)))
        .collect();
    cand.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    cand.truncate(k);
    cand
}

/// Weighted mean with `max(w, 0)^rho` weights, plain mean if they sum to 0.
pub fn brute_predict(committee: &[(usize, f64)], g: &[Vec<Option<f64>>], item: usize, rho: f64) -> Option<f64> {
    if committee.is_empty() {
        return None;
    }
    let amp = |w: f64| if w < 0.0 { 0.0 } else { w.powf(rho) };
    let den: f64 = committee.iter().map(|&(_, w)| amp(w)).sum();
    let vals = committee.iter().map(|&(j, w)| (amp(w), g[j][item].unwrap()));
    if den > 0.0 {
        Some(vals.map(|(a, u)| a * u).sum::<f64>() / den)
    } else {
        let n = committee.len() as f64;
        Some(vals.map(|(_, u)| u).sum::<f64>() / n)
    }
}

pub fn normalized(m: RatingMatrix) -> NormalizedRatings {
    tastenet_core::dataset::z_normalize(&m)
}

/// The default two-group spec with a different amateur density.
pub fn spec_with_amateur_density(density: f64) -> SyntheticSpec {
    let mut spec = SyntheticSpec::default();
    for g in &mut spec.groups {
        if g.name == "amateur" {
            g.density = density;
        }
    }
    spec
}

pub fn group(name: &str, members: usize, density: f64, noise_sd: f64, mixing: f64) -> GroupSpec {
    GroupSpec {
        name: name.into(),
        members,
        density,
        noise_sd,
        mixing,
    }
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    use rand::Rng;
    let mut rng = tastenet_core::rng::stream(seed, &[0xB007]);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = ((1.0 - level) / 2.0 * resamples as f64) as usize;
    let hi = (((1.0 + level) / 2.0 * resamples as f64) as usize).min(resamples - 1);
    (means[lo], means[hi])
}
