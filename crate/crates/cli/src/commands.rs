use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tastenet_core::dataset::{self, filter_dataset, load_ratings, z_normalize};
use tastenet_core::evaluation::run_evaluation;
use tastenet_core::homophily::group_baselines;
use tastenet_core::network::{build_influence_network, build_potential_network, InfluenceScope};
use tastenet_core::recommender::KnnPredictor;
use tastenet_core::similarity::{build_similarity_matrix, correlation_profile, SimilarityMatrix};
use tastenet_core::synthetic::generate;
use tastenet_core::{
    AdviceNetwork, AdviserPool, EvaluationPlan, HomophilyReport, InfluenceMode, KnnConfig, NormalizedRatings,
    RatingMatrix, SyntheticSpec,
};

use crate::config::{parse_k_list, parse_rho_list, KValue};
use crate::error::CliError;
use crate::output::{self, create, ensure_dir, num_label, safe_label, sidecar, Manifest};
use crate::{
    CellArgs, Context, DataArgs, EvaluateArgs, ExportFormat, GridArgs, HomophilyArgs, IngestArgs, NetworkCommand,
    PredictArgs, ReportArgs, SynthArgs, Variant,
};

fn input_path(ctx: &Context, data: &DataArgs) -> Result<PathBuf, CliError> {
    let path = data
        .input
        .clone()
        .or_else(|| ctx.cfg.input.clone())
        .ok_or_else(|| CliError::config("no input ratings given (--input or `input` in the config)"))?;
    if !path.is_file() {
        return Err(CliError::config(format!("input {} does not exist", path.display())));
    }
    Ok(path)
}

struct Loaded {
    path: PathBuf,
    filtered: RatingMatrix,
    normalized: NormalizedRatings,
}

fn load(ctx: &Context, data: &DataArgs) -> Result<Loaded, CliError> {
    let path = input_path(ctx, data)?;
    let f = &ctx.cfg.filter;
    let raw = load_ratings(&path, f.groups.as_deref())?;
    let filtered = filter_dataset(&raw, f.min_item_reviews, f.min_rater_ratings, &f.protected_groups)?;
    let normalized = z_normalize(&filtered);
    if normalized.n_raters() == 0 {
        return Err(CliError::data("no rater survives normalization"));
    }
    log::info!(
        "loaded {}: {} raters, {} items, {} ratings",
        path.display(),
        normalized.n_raters(),
        normalized.n_items(),
        normalized.n_ratings()
    );
    Ok(Loaded { path, filtered, normalized })
}

fn out_dir(ctx: &Context) -> Result<&Path, CliError> {
    ensure_dir(&ctx.cfg.out)?;
    Ok(&ctx.cfg.out)
}

fn pool(s: &str) -> Result<AdviserPool, CliError> {
    Ok(s.parse::<AdviserPool>()?)
}

fn pools(ctx: &Context, grid: &GridArgs, r: &RatingMatrix) -> Result<Vec<AdviserPool>, CliError> {
    let names: Vec<String> = if !grid.pools.is_empty() {
        grid.pools.clone()
    } else if !ctx.cfg.grid.pools.is_empty() {
        ctx.cfg.grid.pools.clone()
    } else {
        std::iter::once("all".to_string()).chain(r.group_names().iter().cloned()).collect()
    };
    let out = names.iter().map(|n| pool(n)).collect::<Result<Vec<_>, _>>()?;
    for p in &out {
        p.mask(r)?;
    }
    Ok(out)
}

fn ks(ctx: &Context, flag: Option<&str>, n_raters: usize) -> Result<Vec<usize>, CliError> {
    let values: Vec<KValue> = match flag {
        Some(s) => parse_k_list(s)?,
        None => ctx.cfg.grid.k.clone(),
    };
    let mut out = Vec::new();
    for v in &values {
        let k = v.resolve(n_raters)?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(CliError::config("k grid is empty"));
    }
    Ok(out)
}

fn rhos(ctx: &Context, flag: Option<&str>) -> Result<Vec<f64>, CliError> {
    let out = match flag {
        Some(s) => parse_rho_list(s)?,
        None => ctx.cfg.grid.rho.clone(),
    };
    if out.is_empty() || out.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CliError::config("rho grid must be non-empty and non-negative"));
    }
    Ok(out)
}

fn knn(ctx: &Context, k: usize, rho: f64, pool: AdviserPool, skip_negative: bool) -> KnnConfig {
    let mut c = KnnConfig::new(k, rho, pool);
    c.overlap_threshold = ctx.cfg.evaluation.overlap_threshold;
    c.skip_negative = skip_negative || ctx.cfg.evaluation.skip_negative;
    c
}

fn cell(ctx: &Context, a: &CellArgs) -> Result<KnnConfig, CliError> {
    let n = &ctx.cfg.network;
    let c = knn(
        ctx,
        a.k.unwrap_or(n.k),
        a.rho.unwrap_or(n.rho),
        pool(a.pool.as_deref().unwrap_or(&n.pool))?,
        false,
    );
    c.validate()?;
    Ok(c)
}

fn cfg_json(c: &KnnConfig) -> serde_json::Value {
    json!({
        "k": c.k,
        "rho": c.rho,
        "pool": c.pool.label(),
        "overlap_threshold": c.overlap_threshold,
        "skip_negative": c.skip_negative,
    })
}

// ---- ingest ----

#[derive(Serialize)]
struct GroupSummary {
    group: String,
    raters: usize,
    ratings: usize,
    density: f64,
}

#[derive(Serialize)]
struct DatasetSummary {
    tool: &'static str,
    version: &'static str,
    source: String,
    raters: usize,
    items: usize,
    ratings: usize,
    groups: Vec<GroupSummary>,
    /// Raters whose ratings have no variance (they cannot be z-scored).
    degenerate_raters: Vec<String>,
}

pub fn ingest(ctx: &Context, a: &IngestArgs) -> Result<(), CliError> {
    let path = input_path(ctx, &a.data)?;
    let f = &ctx.cfg.filter;
    let whitelist = a.groups.clone().or_else(|| f.groups.clone());
    let min_item = a.min_item_reviews.unwrap_or(f.min_item_reviews);
    let min_rater = a.min_rater_ratings.unwrap_or(f.min_rater_ratings);
    let protect = if a.protect.is_empty() { f.protected_groups.clone() } else { a.protect.clone() };

    let raw = load_ratings(&path, whitelist.as_deref())?;
    let m = filter_dataset(&raw, min_item, min_rater, &protect)?;
    let groups = m
        .group_names()
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let members = m.raters_in_group(g);
            Ok(GroupSummary {
                group: name.clone(),
                raters: members.len(),
                ratings: members.iter().map(|&r| m.rating_count(r)).sum(),
                density: dataset::density(&m, name)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = DatasetSummary {
        tool: output::TOOL,
        version: output::VERSION,
        source: path.display().to_string(),
        raters: m.n_raters(),
        items: m.n_items(),
        ratings: m.n_ratings(),
        groups,
        degenerate_raters: z_normalize(&m).dropped().to_vec(),
    };

    let dir = out_dir(ctx)?;
    let ratings = dir.join("ratings.csv");
    if ratings.canonicalize().ok() == path.canonicalize().ok() {
        return Err(CliError::config("refusing to overwrite the input file"));
    }
    dataset::write_ratings(&m, create(&ratings)?)?;
    let summary_path = dir.join("dataset_summary.json");
    output::write_text(&summary_path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;

    let params = json!({
        "input": path.display().to_string(),
        "min_item_reviews": min_item,
        "min_rater_ratings": min_rater,
        "protected_groups": protect,
        "groups": whitelist,
    });
    let mut man = Manifest::new("ingest", ctx.cfg.seed, params);
    man.add("ratings", Path::new("ratings.csv"), json!({}));
    man.add("summary", Path::new("dataset_summary.json"), json!({}));
    man.write(&dir.join("ingest.manifest.json"))?;
    log::info!("ingest: {} raters, {} items kept", m.n_raters(), m.n_items());
    Ok(())
}

// ---- synth ----

pub fn synth(ctx: &Context, a: &SynthArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::config(format!("spec {} does not exist", p.display())));
            }
            SyntheticSpec::load(p)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = ctx.seed_flag {
        spec.seed = s;
    }
    let pop = generate(&spec)?;
    let out = ctx.out_flag.clone().unwrap_or_else(|| ctx.cfg.out.join("ratings.csv"));
    dataset::write_ratings(&pop.ratings, create(&out)?)?;
    let mut man = Manifest::new("synth", spec.seed, json!({ "spec": spec.to_text() }));
    man.add("ratings", Path::new(out.file_name().unwrap_or_default()), json!({}));
    if let Some(t) = &a.truth {
        pop.write_truth_csv(create(t)?)?;
        man.add("truth", t, json!({}));
    }
    man.write(&sidecar(&out))?;
    log::info!(
        "synth: {} raters, {} items, {} ratings",
        pop.ratings.n_raters(),
        pop.ratings.n_items(),
        pop.ratings.n_ratings()
    );
    Ok(())
}

// ---- evaluate ----

struct EvalOutputs {
    long: PathBuf,
    aggregate: PathBuf,
    params: serde_json::Value,
}

fn evaluate_into(
    ctx: &Context,
    loaded: &Loaded,
    grid: &GridArgs,
    holdout: Option<usize>,
    targets: Option<&str>,
    skip_negative: bool,
) -> Result<EvalOutputs, CliError> {
    let r = &loaded.normalized;
    let pools = pools(ctx, grid, r)?;
    let ks = ks(ctx, grid.k.as_deref(), r.n_raters())?;
    let rhos = rhos(ctx, grid.rho.as_deref())?;
    let mut cells = Vec::new();
    for p in &pools {
        for &k in &ks {
            for &rho in &rhos {
                cells.push(knn(ctx, k, rho, p.clone(), skip_negative));
            }
        }
    }
    let e = &ctx.cfg.evaluation;
    let plan = EvaluationPlan {
        holdout_per_rater: holdout.unwrap_or(e.holdout),
        repetitions: e.repetitions,
        seed: ctx.cfg.seed,
        cells,
        targets: pool(targets.unwrap_or(&e.targets))?,
    };
    log::info!(
        "evaluate: {} cells x {} repetitions on {} raters",
        plan.cells.len(),
        plan.repetitions,
        r.n_raters()
    );
    let report = run_evaluation(&plan, r)?;
    let dir = out_dir(ctx)?;
    let long = PathBuf::from("performance_long.csv");
    let aggregate = PathBuf::from("performance_aggregate.csv");
    report.write_long_csv(create(&dir.join(&long))?)?;
    report.write_aggregate_csv(create(&dir.join(&aggregate))?)?;
    let params = json!({
        "input": loaded.path.display().to_string(),
        "k": ks,
        "rho": rhos,
        "pools": pools.iter().map(|p| p.label()).collect::<Vec<_>>(),
        "holdout": plan.holdout_per_rater,
        "repetitions": plan.repetitions,
        "overlap_threshold": e.overlap_threshold,
        "skip_negative": skip_negative || e.skip_negative,
        "targets": plan.targets.label(),
        "excluded_targets": report.excluded,
    });
    Ok(EvalOutputs { long, aggregate, params })
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<(), CliError> {
    let loaded = load(ctx, &a.data)?;
    let o = evaluate_into(ctx, &loaded, &a.grid, a.holdout, a.targets.as_deref(), a.skip_negative)?;
    let mut man = Manifest::new("evaluate", ctx.cfg.seed, o.params);
    man.add("performance_long", &o.long, json!({}));
    man.add("performance_aggregate", &o.aggregate, json!({}));
    man.write(&out_dir(ctx)?.join("evaluate.manifest.json"))
}

// ---- predict ----

#[derive(Serialize)]
struct MemberRecord {
    adviser: String,
    group: String,
    raw_weight: f64,
    amplified_weight: f64,
    share: f64,
}

#[derive(Serialize)]
struct PredictionRecord {
    target: String,
    item: String,
    prediction: Option<f64>,
    complete: bool,
    equal_weight_fallback: bool,
    committee: Vec<MemberRecord>,
}

pub fn predict(ctx: &Context, a: &PredictArgs) -> Result<(), CliError> {
    let loaded = load(ctx, &a.data)?;
    let r = &loaded.normalized;
    let cfg = cell(ctx, &a.cell)?;
    let t = r.rater_index(&a.target)?;
    let items: Vec<usize> = if a.items.is_empty() {
        (0..r.n_items()).filter(|&m| !r.has_rating(t, m)).collect()
    } else {
        a.items.iter().map(|i| r.item_index(i)).collect::<Result<_, _>>()?
    };
    let s = build_similarity_matrix(r, cfg.overlap_threshold);
    let predictor = KnnPredictor::new(&s, r, &cfg)?;
    let records: Vec<PredictionRecord> = items
        .iter()
        .map(|&m| {
            let p = predictor.prediction(t, m);
            PredictionRecord {
                target: a.target.clone(),
                item: r.item_id(m).to_string(),
                prediction: p.value,
                complete: p.committee.complete,
                equal_weight_fallback: p.equal_weight_fallback,
                committee: p
                    .committee
                    .members
                    .iter()
                    .map(|x| MemberRecord {
                        adviser: r.rater_id(x.adviser).to_string(),
                        group: r.group_name_of(x.adviser).to_string(),
                        raw_weight: x.raw_weight,
                        amplified_weight: x.amplified_weight,
                        share: x.share,
                    })
                    .collect(),
            }
        })
        .collect();
    let dir = out_dir(ctx)?;
    let path = dir.join(format!("predictions_{}.json", safe_label(&a.target)));
    output::write_text(&path, &(serde_json::to_string_pretty(&records)? + "\n"))?;
    let mut params = cfg_json(&cfg);
    params["input"] = json!(loaded.path.display().to_string());
    params["target"] = json!(a.target);
    let mut man = Manifest::new("predict", ctx.cfg.seed, params);
    man.add("predictions", Path::new(path.file_name().unwrap_or_default()), json!({}));
    man.write(&sidecar(&path))
}

// ---- network ----

fn network_stem(kind: &str, cfg: &KnnConfig) -> String {
    format!("{kind}_k{}_rho{}_{}", cfg.k, num_label(cfg.rho), safe_label(&cfg.pool.label()))
}

/// Write `net` as `<stem>.json` (lossless) and `<stem>.csv` in `dir`.
fn write_network(dir: &Path, stem: &str, net: &AdviceNetwork) -> Result<(PathBuf, PathBuf), CliError> {
    let json_path = PathBuf::from(format!("{stem}.json"));
    let csv_path = PathBuf::from(format!("{stem}.csv"));
    output::write_text(&dir.join(&json_path), &(net.to_json()? + "\n"))?;
    net.write_csv(create(&dir.join(&csv_path))?)?;
    Ok((json_path, csv_path))
}

fn influence_mode(ctx: &Context, coupled: bool, holdout: Option<usize>) -> InfluenceMode {
    if coupled || ctx.cfg.network.coupled_holdout {
        InfluenceMode::CoupledHoldout { holdout: holdout.unwrap_or(ctx.cfg.evaluation.holdout) }
    } else {
        InfluenceMode::FullData
    }
}

fn influence(
    ctx: &Context,
    r: &NormalizedRatings,
    cfg: &KnnConfig,
    item: Option<usize>,
    mode: InfluenceMode,
) -> Result<AdviceNetwork, CliError> {
    let scope = item.map_or(InfluenceScope::Global, InfluenceScope::Item);
    Ok(build_influence_network(r, cfg, scope, mode, ctx.cfg.evaluation.repetitions, ctx.cfg.seed)?)
}

fn influence_stem(r: &RatingMatrix, cfg: &KnnConfig, item: Option<usize>, mode: InfluenceMode) -> String {
    let mut stem = network_stem("influence", cfg);
    if let Some(m) = item {
        stem.push_str(&format!("_item_{}", safe_label(r.item_id(m))));
    }
    if matches!(mode, InfluenceMode::CoupledHoldout { .. }) {
        stem.push_str("_coupled");
    }
    stem
}

fn network_manifest(ctx: &Context, dir: &Path, files: (PathBuf, PathBuf), params: serde_json::Value) -> Result<(), CliError> {
    let mut man = Manifest::new("network", ctx.cfg.seed, params);
    man.add("network_json", &files.0, json!({}));
    man.add("network_edges", &files.1, json!({}));
    man.write(&sidecar(&dir.join(&files.0)))
}

pub fn network(ctx: &Context, cmd: &NetworkCommand) -> Result<(), CliError> {
    match cmd {
        NetworkCommand::Potential { data, cell: c } => {
            let loaded = load(ctx, data)?;
            let r = &loaded.normalized;
            let cfg = cell(ctx, c)?;
            let s = build_similarity_matrix(r, cfg.overlap_threshold);
            let net = build_potential_network(&s, r, &cfg)?;
            let dir = out_dir(ctx)?;
            let files = write_network(dir, &network_stem("potential", &cfg), &net)?;
            let mut params = cfg_json(&cfg);
            params["input"] = json!(loaded.path.display().to_string());
            params["scope"] = json!("potential");
            network_manifest(ctx, dir, files, params)
        }
        NetworkCommand::Influence { data, cell: c, item, coupled_holdout, holdout } => {
            let loaded = load(ctx, data)?;
            let r = &loaded.normalized;
            let cfg = cell(ctx, c)?;
            let item = item.as_deref().map(|i| r.item_index(i)).transpose()?;
            let mode = influence_mode(ctx, *coupled_holdout, *holdout);
            let net = influence(ctx, r, &cfg, item, mode)?;
            let dir = out_dir(ctx)?;
            let files = write_network(dir, &influence_stem(r, &cfg, item, mode), &net)?;
            let mut params = cfg_json(&cfg);
            params["input"] = json!(loaded.path.display().to_string());
            params["scope"] = json!(net.meta.scope);
            params["mode"] = json!(mode);
            params["repetitions"] = json!(net.meta.repetitions);
            network_manifest(ctx, dir, files, params)
        }
        NetworkCommand::Export { network, format, min_weight, accuracy, output } => {
            if !network.is_file() {
                return Err(CliError::config(format!("network {} does not exist", network.display())));
            }
            let net = AdviceNetwork::load_json(network)?;
            let cutoff = min_weight.unwrap_or(ctx.cfg.network.min_weight);
            let shown = net.filtered(cutoff);
            let ext = match format {
                ExportFormat::Csv => "csv",
                ExportFormat::Dot => "dot",
                ExportFormat::Json => "json",
            };
            let out = output.clone().unwrap_or_else(|| network.with_extension(format!("display.{ext}")));
            if out.canonicalize().ok() == network.canonicalize().ok() {
                return Err(CliError::config("refusing to overwrite the input network"));
            }
            match format {
                ExportFormat::Csv => shown.write_csv(create(&out)?)?,
                ExportFormat::Json => output::write_text(&out, &(shown.to_json()? + "\n"))?,
                ExportFormat::Dot => {
                    let acc = accuracy.as_deref().map(|p| accuracy_map(p, &net)).transpose()?;
                    shown.write_dot(create(&out)?, acc.as_ref())?;
                }
            }
            let params = json!({
                "network": network.display().to_string(),
                "format": ext,
                "min_weight": cutoff,
                "accuracy": accuracy.as_ref().map(|p| p.display().to_string()),
            });
            let mut man = Manifest::new("network export", net.meta.seed.unwrap_or(ctx.cfg.seed), params);
            man.add("network_display", Path::new(out.file_name().unwrap_or_default()), json!({}));
            man.write(&sidecar(&out))
        }
    }
}

#[derive(Deserialize)]
struct LongRow {
    k: usize,
    rho: f64,
    pool: String,
    target_id: String,
    mean_accuracy: f64,
}

/// Per-target accuracy of the network's own (k, rho, pool) cell.
fn accuracy_map(path: &Path, net: &AdviceNetwork) -> Result<HashMap<String, f64>, CliError> {
    if !path.is_file() {
        return Err(CliError::config(format!("accuracy file {} does not exist", path.display())));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
    let mut out = HashMap::new();
    for row in rdr.deserialize::<LongRow>() {
        let row = row.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if row.k == net.meta.k && row.rho == net.meta.rho && row.pool == net.meta.pool {
            out.insert(row.target_id, row.mean_accuracy);
        }
    }
    Ok(out)
}

// ---- homophily ----

fn homophily_into(
    ctx: &Context,
    loaded: &Loaded,
    k: Option<&str>,
    rho: Option<&str>,
    pool_name: Option<&str>,
    variant: Variant,
    coupled: bool,
) -> Result<(PathBuf, serde_json::Value), CliError> {
    let r = &loaded.normalized;
    let ks = ks(ctx, k, r.n_raters())?;
    let rhos = rhos(ctx, rho)?;
    let p = pool(pool_name.unwrap_or(&ctx.cfg.network.pool))?;
    let baselines = group_baselines(r)?;
    let s = build_similarity_matrix(r, ctx.cfg.evaluation.overlap_threshold);
    let mode = influence_mode(ctx, coupled, None);
    let mut report = HomophilyReport::default();
    for &k in &ks {
        for &rho in &rhos {
            let cfg = knn(ctx, k, rho, p.clone(), false);
            if matches!(variant, Variant::Influence | Variant::Both) {
                report.push_network(&influence(ctx, r, &cfg, None, mode)?, "influence", &baselines);
            }
            if matches!(variant, Variant::Potential | Variant::Both) {
                report.push_network(&build_potential_network(&s, r, &cfg)?, "potential", &baselines);
            }
        }
    }
    let path = PathBuf::from("homophily.csv");
    report.write_csv(create(&out_dir(ctx)?.join(&path))?)?;
    let params = json!({
        "input": loaded.path.display().to_string(),
        "k": ks,
        "rho": rhos,
        "pool": p.label(),
        "variant": format!("{variant:?}").to_lowercase(),
        "mode": mode,
    });
    Ok((path, params))
}

pub fn homophily(ctx: &Context, a: &HomophilyArgs) -> Result<(), CliError> {
    let loaded = load(ctx, &a.data)?;
    let (path, params) = homophily_into(
        ctx,
        &loaded,
        a.k.as_deref(),
        a.rho.as_deref(),
        a.pool.as_deref(),
        a.variant,
        a.coupled_holdout,
    )?;
    let mut man = Manifest::new("homophily", ctx.cfg.seed, params);
    man.add("homophily", &path, json!({}));
    man.write(&out_dir(ctx)?.join("homophily.manifest.json"))
}

// ---- similarity ----

fn write_profiles(path: &Path, r: &NormalizedRatings, s: &SimilarityMatrix) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::runtime(e.to_string());
    wtr.write_record(["rater_id", "group", "audience", "mean", "sd", "observed"]).map_err(io)?;
    let audiences: Vec<(String, Vec<usize>)> = r
        .group_names()
        .iter()
        .enumerate()
        .map(|(g, name)| (name.clone(), r.raters_in_group(g)))
        .collect();
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for i in 0..r.n_raters() {
        for (name, members) in &audiences {
            let p = correlation_profile(s, i, members);
            wtr.write_record([
                r.rater_id(i),
                r.group_name_of(i),
                name,
                &opt(p.mean),
                &opt(p.sd),
                &p.observed.to_string(),
            ])
            .map_err(io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn similarity_into(ctx: &Context, loaded: &Loaded) -> Result<(PathBuf, PathBuf), CliError> {
    let r = &loaded.normalized;
    let s = build_similarity_matrix(r, ctx.cfg.evaluation.overlap_threshold);
    let dir = out_dir(ctx)?;
    let (sim, prof) = (PathBuf::from("similarity.csv"), PathBuf::from("profiles.csv"));
    s.write_csv(r, create(&dir.join(&sim))?)?;
    write_profiles(&dir.join(&prof), r, &s)?;
    Ok((sim, prof))
}

pub fn similarity(ctx: &Context, a: &DataArgs) -> Result<(), CliError> {
    let loaded = load(ctx, a)?;
    let (sim, prof) = similarity_into(ctx, &loaded)?;
    let params = json!({
        "input": loaded.path.display().to_string(),
        "overlap_threshold": ctx.cfg.evaluation.overlap_threshold,
    });
    let mut man = Manifest::new("similarity", ctx.cfg.seed, params);
    man.add("similarity", &sim, json!({}));
    man.add("profiles", &prof, json!({}));
    man.write(&out_dir(ctx)?.join("similarity.manifest.json"))
}

// ---- report ----

pub fn report(ctx: &Context, a: &ReportArgs) -> Result<(), CliError> {
    let loaded = load(ctx, &a.data)?;
    let r = &loaded.normalized;
    let dir = out_dir(ctx)?.to_path_buf();
    let mut man = Manifest::new(
        "report",
        ctx.cfg.seed,
        json!({
            "input": loaded.path.display().to_string(),
            "raters": r.n_raters(),
            "items": r.n_items(),
            "dropped_raters": r.dropped(),
            "filtered_ratings": loaded.filtered.n_ratings(),
        }),
    );

    let (sim, prof) = similarity_into(ctx, &loaded)?;
    let threshold = json!({ "overlap_threshold": ctx.cfg.evaluation.overlap_threshold });
    man.add("plane", &prof, threshold.clone());
    man.add("similarity", &sim, threshold);

    let eval = evaluate_into(ctx, &loaded, &a.grid, None, None, false)?;
    man.add("performance", &eval.long, eval.params.clone());
    man.add("rho-sweep", &eval.aggregate, eval.params);

    let net_cfg = cell(ctx, &CellArgs { k: None, rho: None, pool: None })?;
    let s = build_similarity_matrix(r, net_cfg.overlap_threshold);
    let pot = build_potential_network(&s, r, &net_cfg)?;
    let (pj, _) = write_network(&dir, &network_stem("potential", &net_cfg), &pot)?;
    man.add("network", &pj, json!({ "scope": "potential", "cell": cfg_json(&net_cfg) }));
    let mode = influence_mode(ctx, false, None);
    let inf = influence(ctx, r, &net_cfg, None, mode)?;
    let (ij, _) = write_network(&dir, &influence_stem(r, &net_cfg, None, mode), &inf)?;
    man.add("network", &ij, json!({ "scope": "influence", "mode": mode, "cell": cfg_json(&net_cfg) }));

    let (h, hp) = homophily_into(ctx, &loaded, a.grid.k.as_deref(), a.grid.rho.as_deref(), None, Variant::Both, false)?;
    man.add("homophily", &h, hp);

    let names = if !a.items.is_empty() { a.items.clone() } else { ctx.cfg.network.items.clone() };
    let items: Vec<usize> = if names.is_empty() {
        most_rated(r, 3)
    } else {
        names.iter().map(|i| r.item_index(i)).collect::<Result<_, _>>()?
    };
    for m in items {
        let net = influence(ctx, r, &net_cfg, Some(m), mode)?;
        let (j, _) = write_network(&dir, &influence_stem(r, &net_cfg, Some(m), mode), &net)?;
        man.add("per-item", &j, json!({ "item": r.item_id(m), "mode": mode, "cell": cfg_json(&net_cfg) }));
    }
    man.write(&dir.join("report_manifest.json"))?;
    log::info!("report: {} files listed in report_manifest.json", man.files.len());
    Ok(())
}

/// The `n` most-rated items, ties to the lower item id.
fn most_rated(r: &RatingMatrix, n: usize) -> Vec<usize> {
    let counts = r.item_counts();
    let mut items: Vec<usize> = (0..r.n_items()).collect();
    items.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then_with(|| r.item_id(a).cmp(r.item_id(b))));
    items.truncate(n);
    items
}
