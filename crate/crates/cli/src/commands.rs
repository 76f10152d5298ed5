use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use appselect::analysis::{
    self, app_coverage, pearson, project_embeddings, query_length_stats, query_overlap_table, task_difficulty,
    unigram_distribution, unique_apps_per, write_length_stats_csv, write_projection_csv, write_task_difficulty_csv,
    Grouping, OverlapScope, COVERAGE_THRESHOLDS, OVERLAP_THRESHOLDS,
};
use appselect::baselines::{load_baseline, save_baseline, BaselineModel};
use appselect::corpus::{dataset_stats, load_dataset, save_dataset, split, Dataset, SplitPlan, SplitStrategy};
use appselect::eval::{
    evaluate, mean_metrics, run_experiment, train_method, EmbeddingSource, Method, Metric, QueryMetrics, Qrels,
    TrainedMethod,
};
use appselect::neural::{load_checkpoint, save_checkpoint, NeuralModel, CHECKPOINT_MAGIC};
use appselect::ranking::{RankedList, Ranker};
use appselect::text::{load_embeddings, Tokenizer};

use crate::config::RunConfig;
use crate::manifest::Manifest;

/// Raised for bad flag combinations; maps to the usage exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Write through `f` into `dir/name` and return the path.
fn emit(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

fn emit_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    emit(dir, name, |w| Ok(w.write_all(text.as_bytes())?))
}

fn finish(mut manifest: Manifest, dir: &Path, files: &[PathBuf]) -> Result<()> {
    manifest.artifacts(files)?;
    manifest.write(dir)?;
    Ok(())
}

pub fn ingest(input: &Path, out: Option<&Path>) -> Result<()> {
    let dataset = load_dataset(input)?;
    let stats = dataset_stats(&dataset, &Tokenizer::default())?;
    let mut stdout = std::io::stdout().lock();
    for (name, value) in stats.rows() {
        writeln!(stdout, "{name}\t{value}")?;
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        let mut manifest = Manifest::new("ingest", 0);
        manifest.input(input)?;
        let files = vec![emit(dir, "stats.csv", |w| Ok(stats.write_csv(w)?))?];
        finish(manifest, dir, &files)?;
    }
    Ok(())
}

pub fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.dataset = None;
    cfg.embeddings = None;
    cfg.resolve();
    let dataset = cfg.dataset()?;
    let embeddings = cfg.embeddings()?.expect("synthetic runs always have embeddings");
    create_dir(out)?;
    let data_path = out.join("dataset.jsonl");
    save_dataset(&dataset, &data_path)?;
    let emb_path = emit(out, "embeddings.txt", |w| Ok(embeddings.table.write(w)?))?;
    let manifest = Manifest::new("synth", cfg.seed).with_config(&(&cfg.synth_config(), &cfg.synthetic_embeddings))?;
    finish(manifest, out, &[data_path, emb_path])?;
    println!("{} queries over {} apps written to {}", dataset.len(), dataset.apps().len(), out.display());
    Ok(())
}

pub struct SplitArgs<'a> {
    pub input: &'a Path,
    pub strategy: SplitStrategy,
    pub seed: u64,
    pub repetition: u32,
    pub ratios: Option<(f64, f64, f64)>,
    pub out: &'a Path,
}

pub fn split_cmd(a: SplitArgs<'_>) -> Result<()> {
    let dataset = load_dataset(a.input)?;
    let mut plan = SplitPlan::new(a.strategy, a.seed, a.repetition);
    if let Some(r) = a.ratios {
        plan.ratios = r;
    }
    let parts = split(&dataset, &plan)?;
    create_dir(a.out)?;
    let mut files = Vec::new();
    for (name, part) in [("train.jsonl", &parts.train), ("valid.jsonl", &parts.valid), ("test.jsonl", &parts.test)] {
        let path = a.out.join(name);
        save_dataset(part, &path)?;
        println!("{name}\t{}", part.len());
        files.push(path);
    }
    let mut manifest = Manifest::new("split", a.seed).with_config(&plan)?;
    manifest.input(a.input)?;
    finish(manifest, a.out, &files)
}

/// A saved model of either family, recognised by its leading magic bytes.
pub enum LoadedModel {
    Baseline(BaselineModel),
    Neural(Box<NeuralModel>),
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let mut head = [0u8; 8];
        let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let n = f.read(&mut head)?;
        if n == head.len() && &head == CHECKPOINT_MAGIC {
            Ok(LoadedModel::Neural(Box::new(load_checkpoint(path)?)))
        } else {
            Ok(LoadedModel::Baseline(load_baseline(path)?))
        }
    }

    pub fn ranker(&self) -> &dyn Ranker {
        match self {
            LoadedModel::Baseline(b) => b.ranker(),
            LoadedModel::Neural(n) => n.as_ref(),
        }
    }
}

pub struct TrainArgs<'a> {
    pub method: Method,
    pub train: &'a Path,
    pub valid: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub embeddings: Option<&'a Path>,
    pub out: &'a Path,
}

fn load_embedding_source(path: Option<&Path>) -> Result<Option<EmbeddingSource>> {
    path.map(|p| {
        Ok(EmbeddingSource {
            table: std::sync::Arc::new(load_embeddings(p)?),
            path: Some(p.to_path_buf()),
        })
    })
    .transpose()
}

/// Training and validation sets over one shared catalog; without a
/// validation file the second set is empty.
fn load_train_valid(train: &Path, valid: Option<&Path>) -> Result<(Dataset, Dataset)> {
    let train = load_dataset(train)?;
    let Some(valid) = valid else {
        let empty = train.subset(Vec::new());
        return Ok((train, empty));
    };
    let valid = load_dataset(valid)?;
    let catalog = std::sync::Arc::new(train.apps().extended(valid.apps()));
    Ok((train.reindexed(catalog.clone())?, valid.reindexed(catalog)?))
}

/// Train `method` and save it under `out`; returns the saved model path.
fn train_and_save(
    method: Method,
    cfg: &RunConfig,
    train: &Dataset,
    valid: &Dataset,
    embeddings: Option<&EmbeddingSource>,
    out: &Path,
) -> Result<(TrainedMethod, Vec<PathBuf>)> {
    let trained = train_method(method, &cfg.experiment.params, train, valid, embeddings)?;
    create_dir(out)?;
    let mut files = Vec::new();
    match &trained {
        TrainedMethod::Baseline(b) => {
            let path = out.join("model.bin");
            save_baseline(b, &path)?;
            files.push(path);
        }
        TrainedMethod::Neural(n) => {
            let path = out.join("model.ckpt");
            save_checkpoint(&n.model, &path)?;
            files.push(path.clone());
            files.push(path.with_extension("ckpt.vocab"));
            files.push(emit(out, "history.csv", |w| Ok(n.history.write_csv(w)?))?);
        }
    }
    Ok((trained, files))
}

pub fn train(a: TrainArgs<'_>) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.embeddings {
        cfg.embeddings = Some(e.to_path_buf());
    }
    cfg.resolve();
    let (train, valid) = load_train_valid(a.train, a.valid)?;
    let embeddings = load_embedding_source(cfg.embeddings.as_deref())?;
    let (_, files) = train_and_save(a.method, &cfg, &train, &valid, embeddings.as_ref(), a.out)?;
    let mut manifest = Manifest::new("train", cfg.seed).with_config(&cfg.experiment.params)?;
    manifest.input(a.train)?;
    if let Some(v) = a.valid {
        manifest.input(v)?;
    }
    println!("{} ({}) saved to {}", a.method, cfg.experiment.params.describe(a.method), files[0].display());
    finish(manifest, a.out, &files)
}

pub fn rank(model: &Path, k: usize, input: impl BufRead, mut output: impl Write) -> Result<()> {
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let model = LoadedModel::load(model)?;
    let ranker = model.ranker();
    let mut first = true;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if !first {
            writeln!(output)?;
        }
        first = false;
        let ranked = ranker.rank(&format!("stdin-{n}"), text);
        for (app, score) in ranked.top(k) {
            writeln!(output, "{}\t{score:.6}", ranker.catalog().name(*app))?;
        }
    }
    output.flush()?;
    Ok(())
}

/// Rankings from a `query_id,app,score` CSV; within a query, higher scores
/// rank first and ties keep file order.
fn read_run(path: &Path, test: &Dataset) -> Result<HashMap<String, RankedList>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lists: HashMap<String, RankedList> = HashMap::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 3 {
            bail!(appselect::Error::Malformed {
                line: row.position().map_or(0, |p| p.line() as usize),
                message: "expected query_id,app,score".into(),
            });
        }
        let app = test
            .apps()
            .id(&appselect::corpus::canonical_app_name(&row[1]))
            .ok_or_else(|| appselect::Error::UnknownApp(row[1].to_string()))?;
        let score: f64 = row[2].trim().parse().map_err(|_| appselect::Error::Malformed {
            line: row.position().map_or(0, |p| p.line() as usize),
            message: format!("score {:?} is not a number", &row[2]),
        })?;
        let list = lists.entry(row[0].to_string()).or_insert_with(|| RankedList {
            query_id: row[0].to_string(),
            entries: Vec::new(),
        });
        if !list.entries.iter().any(|e| e.0 == app) {
            list.entries.push((app, score));
        }
    }
    for list in lists.values_mut() {
        list.entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    }
    Ok(lists)
}

pub enum EvalSource<'a> {
    Run(&'a Path),
    Model(&'a Path),
    Method { method: Method, train: &'a Path, valid: Option<&'a Path> },
}

pub fn eval(
    test_path: &Path,
    source: EvalSource<'_>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve();
    let test = load_dataset(test_path)?;
    create_dir(out)?;
    let mut manifest = Manifest::new("eval", cfg.seed);
    manifest.input(test_path)?;
    let mut files = Vec::new();
    let (label, per_query) = match source {
        EvalSource::Run(path) => {
            manifest.input(path)?;
            let lists = read_run(path, &test)?;
            let qrels = Qrels::from_dataset(&test);
            let per_query = test
                .records()
                .iter()
                .map(|r| {
                    let empty = RankedList { query_id: r.query_id.clone(), entries: Vec::new() };
                    QueryMetrics::compute(lists.get(&r.query_id).unwrap_or(&empty), &qrels)
                })
                .collect::<appselect::Result<Vec<_>>>()?;
            ("run".to_string(), per_query)
        }
        EvalSource::Model(path) => {
            manifest.input(path)?;
            let model = LoadedModel::load(path)?;
            (model.ranker().name().to_string(), evaluate(model.ranker(), &test)?)
        }
        EvalSource::Method { method, train, valid } => {
            manifest.input(train)?;
            if let Some(p) = valid {
                manifest.input(p)?;
            }
            let (train_set, valid_set) = load_train_valid(train, valid)?;
            let embeddings = load_embedding_source(cfg.embeddings.as_deref())?;
            let (trained, saved) =
                train_and_save(method, &cfg, &train_set, &valid_set, embeddings.as_ref(), &out.join("model"))?;
            files.extend(saved);
            manifest = manifest.with_config(&cfg.experiment.params)?;
            (method.label().to_string(), evaluate(trained.ranker(), &test)?)
        }
    };
    let means = mean_metrics(&per_query);
    files.push(emit(out, "metrics.csv", |w| {
        writeln!(w, "method,queries,{}", Metric::ALL.map(|m| m.column()).join(","))?;
        let values: Vec<String> = means.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(w, "{label},{},{}", per_query.len(), values.join(","))?;
        Ok(())
    })?);
    files.push(emit(out, "per_query.csv", |w| {
        writeln!(w, "query_id,{}", Metric::ALL.map(|m| m.column()).join(","))?;
        for q in &per_query {
            let values: Vec<String> = q.values.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{},{}", q.query_id, values.join(","))?;
        }
        Ok(())
    })?);
    for (m, v) in Metric::ALL.iter().zip(means) {
        println!("{}\t{v:.4}", m.label());
    }
    finish(manifest, out, &files)
}

pub struct CompareArgs<'a> {
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub strategy: Option<SplitStrategy>,
    pub methods: &'a [Method],
    pub svg: bool,
    pub out: Option<&'a Path>,
}

pub fn compare(a: CompareArgs<'_>) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.strategy {
        cfg.experiment.strategies = vec![s];
    }
    if !a.methods.is_empty() {
        cfg.experiment.methods = a.methods.to_vec();
    }
    cfg.emit.svg |= a.svg;
    let out = a
        .out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("appselect-out"));
    cfg.out = Some(out.clone());
    cfg.resolve();
    cfg.experiment.validate()?;

    let dataset = cfg.dataset()?;
    let embeddings = cfg.embeddings()?;
    let report = run_experiment(&dataset, &cfg.experiment, embeddings.as_ref())?;

    create_dir(&out)?;
    let mut files = vec![
        emit(&out, "report.csv", |w| Ok(report.write_report_csv(w)?))?,
        emit(&out, "report.txt", |w| Ok(report.write_report_txt(w)?))?,
        emit(&out, "significance.csv", |w| Ok(report.write_significance_csv(w)?))?,
        emit(&out, "cells.csv", |w| Ok(report.write_cells_csv(w)?))?,
    ];
    if cfg.emit.per_query {
        files.push(emit(&out, "per_query.csv", |w| Ok(report.write_per_query_csv(w)?))?);
    }
    if cfg.emit.svg {
        for &strategy in &cfg.experiment.strategies {
            let bars: Vec<(String, f64)> = cfg
                .experiment
                .methods
                .iter()
                .filter_map(|&m| report.grand_mean(strategy, m).map(|v| (m.label().to_string(), v[0])))
                .collect();
            let title = format!("MRR, {} split", strategy.label());
            files.push(emit_text(&out, &format!("mrr_{}.svg", strategy.label()), &analysis::svg::bar_chart(&title, &bars))?);
        }
    }
    files.push(emit_text(&out, "config.toml", &cfg.to_toml()?)?);

    let mut manifest = Manifest::new("compare", cfg.seed).with_config(&cfg)?;
    if let Some(p) = &cfg.dataset {
        manifest.input(p)?;
    }
    if let Some(p) = &cfg.embeddings {
        manifest.input(p)?;
    }
    finish(manifest, &out, &files)?;

    let mut stdout = std::io::stdout().lock();
    report.write_report_txt(&mut stdout)?;
    let failed = report.failures().count();
    if failed > 0 {
        log::warn!("{failed} cell(s) failed; see cells.csv");
    }
    Ok(())
}

pub struct AnalyzeArgs<'a> {
    pub input: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub svg: bool,
    pub per_app: bool,
    pub task_scope: bool,
    pub top_n: usize,
    pub per_query: Option<&'a Path>,
    pub method: Option<Method>,
    pub strategy: SplitStrategy,
}

/// Rows of a per-query CSV written by `compare` for one method and split.
fn read_per_query(path: &Path, method: Method, strategy: SplitStrategy) -> Result<Vec<QueryMetrics>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 9 {
            bail!("{}: expected strategy,repetition,method,query_id and five metrics", path.display());
        }
        let (Ok(s), Ok(m)) = (SplitStrategy::from_str(&row[0]), Method::from_str(&row[2])) else {
            bail!("{}: unrecognised strategy or method in {:?}", path.display(), row);
        };
        if s != strategy || m != method {
            continue;
        }
        let mut values = [0.0; 5];
        for (v, cell) in values.iter_mut().zip(row.iter().skip(4)) {
            *v = cell.parse().with_context(|| format!("{}: bad metric {cell:?}", path.display()))?;
        }
        rows.push(QueryMetrics { query_id: row[3].to_string(), values });
    }
    Ok(rows)
}

pub fn analyze(a: AnalyzeArgs<'_>) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config)?;
    if let Some(p) = a.input {
        cfg.dataset = Some(p.to_path_buf());
    }
    cfg.resolve();
    let dataset = cfg.dataset()?;
    let tokenizer = Tokenizer::default();
    let out = a.out;
    create_dir(out)?;
    let mut files = Vec::new();

    let stats = dataset_stats(&dataset, &tokenizer)?;
    files.push(emit(out, "stats.csv", |w| Ok(stats.write_csv(w)?))?);

    let coverage = app_coverage(&dataset);
    files.push(emit(out, "app_coverage.csv", |w| Ok(coverage.write_csv(w)?))?);
    for t in COVERAGE_THRESHOLDS {
        println!("apps covering {:.0}% of selections\t{}", t * 100.0, coverage.apps_to_reach(t));
    }

    for group in [Grouping::User, Grouping::Task] {
        let report = unique_apps_per(&dataset, group);
        let name = format!("unique_apps_per_{}", group.label());
        files.push(emit(out, &format!("{name}.csv"), |w| Ok(report.write_csv(w)?))?);
        if a.svg {
            let bars: Vec<(String, f64)> = report.histogram.iter().map(|(k, v)| (k.to_string(), *v as f64)).collect();
            files.push(emit_text(
                out,
                &format!("{name}.svg"),
                &analysis::svg::bar_chart(&format!("Unique apps per {}", group.label()), &bars),
            )?);
        }
    }

    let lengths = query_length_stats(&dataset, &tokenizer, a.per_app);
    files.push(emit(out, "query_length.csv", |w| Ok(write_length_stats_csv(&lengths, w)?))?);

    files.push(emit(out, "unigrams.csv", |w| {
        writeln!(w, "app,rank,token,share")?;
        for name in dataset.apps().names() {
            for (i, (token, share)) in unigram_distribution(&dataset, &tokenizer, name, a.top_n)?.iter().enumerate() {
                writeln!(w, "{name},{},{token},{share:.6}", i + 1)?;
            }
        }
        Ok(())
    })?);

    let scope = if a.task_scope { OverlapScope::SameTask } else { OverlapScope::All };
    let overlap = query_overlap_table(&dataset, &tokenizer, &OVERLAP_THRESHOLDS, a.per_app, scope);
    files.push(emit(out, "query_overlap.csv", |w| Ok(overlap.write_csv(w)?))?);

    if a.svg {
        let total: usize = coverage.apps.iter().map(|x| x.1).sum::<usize>().max(1);
        let bars: Vec<(String, f64)> =
            coverage.apps.iter().map(|(n, c)| (n.clone(), *c as f64 / total as f64)).collect();
        files.push(emit_text(out, "app_coverage.svg", &analysis::svg::bar_chart("Share of selections", &bars))?);
    }

    if let Some(path) = a.per_query {
        let method = a.method.ok_or_else(|| usage("--per-query needs --method"))?;
        let rows = read_per_query(path, method, a.strategy)?;
        if rows.is_empty() {
            bail!(appselect::Error::InsufficientData(format!(
                "no {} rows for {} in {}",
                a.strategy.label(),
                method.label(),
                path.display()
            )));
        }
        let difficulty = task_difficulty(&dataset, &rows)?;
        files.push(emit(out, "task_difficulty.csv", |w| Ok(write_task_difficulty_csv(&difficulty, w)?))?);
        let xs: Vec<f64> = difficulty.iter().map(|d| d.unique_apps as f64).collect();
        let ys: Vec<f64> = difficulty.iter().map(|d| d.mean_ndcg3).collect();
        match pearson(&xs, &ys) {
            Some(r) => println!("pearson(unique apps per task, nDCG@3)\t{r:.4}"),
            None => println!("pearson(unique apps per task, nDCG@3)\tNA"),
        }
        if a.svg {
            let points: Vec<(String, f64, f64)> =
                difficulty.iter().map(|d| (d.task.clone(), d.unique_apps as f64, d.mean_ndcg3)).collect();
            files.push(emit_text(
                out,
                "task_difficulty.svg",
                &analysis::svg::scatter("nDCG@3 against unique apps per task", &points),
            )?);
        }
    }

    let mut manifest = Manifest::new("analyze", cfg.seed).with_config(&cfg)?;
    if let Some(p) = &cfg.dataset {
        manifest.input(p)?;
    }
    if let Some(p) = a.per_query {
        manifest.input(p)?;
    }
    finish(manifest, out, &files)
}

pub fn export_embeddings(model: &Path, out: &Path, svg: bool) -> Result<()> {
    let LoadedModel::Neural(model_nn) = LoadedModel::load(model)? else {
        bail!(appselect::Error::ModelFormat(format!(
            "{} is a baseline model; only neural checkpoints carry app embeddings",
            model.display()
        )));
    };
    let vectors = model_nn.app_vectors();
    let catalog = model_nn.catalog_arc();
    let names = catalog.names();
    create_dir(out)?;
    let mut files = vec![emit(out, "app_embeddings.csv", |w| {
        let header: Vec<String> = (0..vectors.ncols()).map(|j| format!("d{j}")).collect();
        writeln!(w, "app,{}", header.join(","))?;
        for (name, row) in names.iter().zip(vectors.rows()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.8}")).collect();
            writeln!(w, "{name},{}", cells.join(","))?;
        }
        Ok(())
    })?];
    let points = project_embeddings(&vectors, names)?;
    files.push(emit(out, "projection.csv", |w| Ok(write_projection_csv(&points, w)?))?);
    if svg {
        let pts: Vec<(String, f64, f64)> = points.iter().map(|p| (p.name.clone(), p.x, p.y)).collect();
        files.push(emit_text(out, "projection.svg", &analysis::svg::scatter("App embeddings", &pts))?);
    }
    let mut manifest = Manifest::new("export-emb", model_nn.seed());
    manifest.input(model)?;
    println!("{} app vectors of dimension {} written to {}", names.len(), vectors.ncols(), out.display());
    finish(manifest, out, &files)
}
