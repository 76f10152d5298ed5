use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::corpus::{AppId, Dataset};
use crate::eval::{Metric, QueryMetrics};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectedApp {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

/// Project app vectors (one row per app) onto the top two principal
/// directions of the mean-centred matrix. Each axis is oriented so that its
/// largest-magnitude coordinate is positive.
pub fn project_embeddings(matrix: &Array2<f64>, names: &[String]) -> Result<Vec<ProjectedApp>> {
    let (n, d) = matrix.dim();
    if names.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: names.len(),
        });
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!("projection needs at least 3 apps, got {n}")));
    }
    let mut centred = DMatrix::from_fn(n, d, |i, j| matrix[[i, j]]);
    for mut col in centred.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let mut axes = vec![vec![0.0; n]; 2];
    for (axis, &k) in axes.iter_mut().zip(&order) {
        let dir = v_t.row(k).transpose();
        let coords = &centred * dir;
        axis.copy_from_slice(coords.as_slice());
        let pivot = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, name)| ProjectedApp {
            name: name.clone(),
            x: axes[0][i],
            y: axes[1][i],
        })
        .collect())
}

pub fn write_projection_csv(points: &[ProjectedApp], mut out: impl Write) -> Result<()> {
    writeln!(out, "app,x,y")?;
    for p in points {
        writeln!(out, "{},{:.6},{:.6}", p.name, p.x, p.y)?;
    }
    Ok(())
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Per-task diversity against retrieval quality.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskDifficulty {
    pub task: String,
    pub unique_apps: usize,
    pub queries: usize,
    pub mean_ndcg3: f64,
}

/// Join per-query metrics with each query's task: distinct apps the task
/// uses in `dataset` versus the mean nDCG@3 of its evaluated queries.
pub fn task_difficulty(dataset: &Dataset, per_query: &[QueryMetrics]) -> Result<Vec<TaskDifficulty>> {
    let task_of: HashMap<&str, &str> = dataset
        .records()
        .iter()
        .map(|r| (r.query_id.as_str(), r.task_id.as_str()))
        .collect();
    let mut apps: HashMap<&str, BTreeSet<AppId>> = HashMap::new();
    for r in dataset.records() {
        apps.entry(r.task_id.as_str()).or_default().extend(r.target_apps.iter().copied());
    }
    let mut scores: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for q in per_query {
        let task = task_of
            .get(q.query_id.as_str())
            .ok_or_else(|| Error::MissingQrels(q.query_id.clone()))?;
        scores.entry(task).or_default().push(q.get(Metric::Ndcg3));
    }
    Ok(scores
        .into_iter()
        .map(|(task, s)| TaskDifficulty {
            task: task.to_string(),
            unique_apps: apps[task].len(),
            queries: s.len(),
            mean_ndcg3: s.iter().sum::<f64>() / s.len() as f64,
        })
        .collect())
}

pub fn write_task_difficulty_csv(rows: &[TaskDifficulty], mut out: impl Write) -> Result<()> {
    writeln!(out, "task,unique_apps,queries,mean_ndcg3")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.6}", r.task, r.unique_apps, r.queries, r.mean_ndcg3)?;
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.unique_apps as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ndcg3).collect();
    match pearson(&xs, &ys) {
        Some(r) => writeln!(out, "# pearson,{r:.6}")?,
        None => writeln!(out, "# pearson,NA")?,
    }
    Ok(())
}
