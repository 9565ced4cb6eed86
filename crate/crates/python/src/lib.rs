//! Python bindings: a thin layer over the core crate.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use tastenet_core::dataset::{load_ratings, z_normalize};
use tastenet_core::evaluation::run_evaluation;
use tastenet_core::network::{build_influence_network, build_potential_network, InfluenceScope};
use tastenet_core::similarity::build_similarity_matrix;
use tastenet_core::synthetic::generate;
use tastenet_core::{
    AdviceNetwork, AdviserPool, Error, EvaluationPlan, InfluenceMode, KnnConfig, NormalizedRatings, SyntheticSpec,
};

type Edge = (String, String, f64);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn load(path: &str) -> PyResult<NormalizedRatings> {
    Ok(z_normalize(&load_ratings(path, None).map_err(py_err)?))
}

fn pool(name: &str) -> PyResult<AdviserPool> {
    name.parse().map_err(py_err)
}

fn edges(net: &AdviceNetwork) -> Vec<Edge> {
    let ids = net.node_ids();
    net.edges().map(|(s, t, w)| (ids[s].clone(), ids[t].clone(), w)).collect()
}

/// `max(w, 0) ** rho`, with `0 ** 0 = 1`.
#[pyfunction]
fn amplify_weight(w: f64, rho: f64) -> f64 {
    tastenet_core::similarity::amplify_weight(w, rho)
}

/// Synthetic ratings as `(rater_id, item_id, rating, group)` rows.
#[pyfunction]
#[pyo3(signature = (spec=None, seed=None))]
fn synthesize(spec: Option<&str>, seed: Option<u64>) -> PyResult<Vec<(String, String, f64, String)>> {
    let mut spec = match spec {
        Some(text) => SyntheticSpec::parse(text).map_err(py_err)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let pop = generate(&spec).map_err(py_err)?;
    Ok(pop
        .ratings
        .records()
        .map(|r| (r.rater_id, r.item_id, r.rating, r.group))
        .collect())
}

/// Rater ids and the similarity matrix (`None` where undefined).
#[pyfunction]
#[pyo3(signature = (path, overlap_threshold=5))]
fn similarity(path: &str, overlap_threshold: usize) -> PyResult<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let r = load(path)?;
    let s = build_similarity_matrix(&r, overlap_threshold);
    let n = r.n_raters();
    let rows = (0..n).map(|i| (0..n).map(|j| s.weight(i, j)).collect()).collect();
    Ok((r.rater_ids().to_vec(), rows))
}

/// Aggregate accuracy rows `(k, rho, pool, target_group, mean_accuracy, targets)`.
#[pyfunction]
#[pyo3(signature = (path, k, rho, pools=vec!["all".to_string()], holdout=10, repetitions=100, seed=2024))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    path: &str,
    k: Vec<usize>,
    rho: Vec<f64>,
    pools: Vec<String>,
    holdout: usize,
    repetitions: usize,
    seed: u64,
) -> PyResult<Vec<(usize, f64, String, String, f64, usize)>> {
    let r = load(path)?;
    let mut cells = Vec::new();
    for p in &pools {
        for &kk in &k {
            for &rr in &rho {
                cells.push(KnnConfig::new(kk, rr, pool(p)?));
            }
        }
    }
    let mut plan = EvaluationPlan::new(cells, seed);
    plan.holdout_per_rater = holdout;
    plan.repetitions = repetitions;
    let report = py.detach(|| run_evaluation(&plan, &r)).map_err(py_err)?;
    Ok(report
        .aggregates
        .iter()
        .map(|a| {
            let c = &report.cells[a.cell];
            (c.k, c.rho, c.pool.label(), a.target_group.clone(), a.mean_accuracy, a.targets)
        })
        .collect())
}

/// Edges `(seeker, adviser, weight)` of the first-call network.
#[pyfunction]
#[pyo3(signature = (path, k, rho, pool_name="all"))]
fn potential_network(path: &str, k: usize, rho: f64, pool_name: &str) -> PyResult<Vec<Edge>> {
    let r = load(path)?;
    let cfg = KnnConfig::new(k, rho, pool(pool_name)?);
    let s = build_similarity_matrix(&r, cfg.overlap_threshold);
    Ok(edges(&build_potential_network(&s, &r, &cfg).map_err(py_err)?))
}

/// Edges of the full-data influence network, optionally for one item.
#[pyfunction]
#[pyo3(signature = (path, k, rho, pool_name="all", item=None))]
fn influence_network(path: &str, k: usize, rho: f64, pool_name: &str, item: Option<&str>) -> PyResult<Vec<Edge>> {
    let r = load(path)?;
    let cfg = KnnConfig::new(k, rho, pool(pool_name)?);
    let scope = match item {
        Some(id) => InfluenceScope::Item(r.item_index(id).map_err(py_err)?),
        None => InfluenceScope::Global,
    };
    let net = build_influence_network(&r, &cfg, scope, InfluenceMode::FullData, 1, 0).map_err(py_err)?;
    Ok(edges(&net))
}

#[pymodule]
fn tastenet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(amplify_weight, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(potential_network, m)?)?;
    m.add_function(wrap_pyfunction!(influence_network, m)?)?;
    Ok(())
}
