use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::experiment::{CellResult, ExperimentPlan, Method};
use super::metrics::{mean_metrics, Metric, QueryMetrics};
use super::stats::{bonferroni_threshold, paired_t_test, TTest};
use crate::corpus::SplitStrategy;
use crate::{Error, Result};

/// One proposed-vs-baseline comparison on one metric.
#[derive(Clone, Debug, PartialEq)]
pub struct SignificanceRow {
    pub strategy: SplitStrategy,
    pub method: Method,
    pub baseline: Method,
    pub metric: Metric,
    pub pairs: usize,
    pub test: TTest,
    /// Bonferroni-corrected per-comparison level.
    pub threshold: f64,
}

impl SignificanceRow {
    pub fn significant(&self) -> bool {
        self.test.p_value < self.threshold
    }

    pub fn significantly_better(&self) -> bool {
        self.significant() && self.test.mean_difference > 0.0
    }
}

/// Everything an experiment produced, in plan order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    pub fn new(plan: ExperimentPlan, cells: Vec<CellResult>) -> Self {
        ExperimentReport { plan, cells }
    }

    fn cells_of(&self, strategy: SplitStrategy, method: Method) -> impl Iterator<Item = &CellResult> {
        self.cells
            .iter()
            .filter(move |c| c.strategy == strategy && c.method == method)
    }

    /// Per-metric means of each successful repetition.
    pub fn repetition_means(&self, strategy: SplitStrategy, method: Method) -> Vec<(usize, [f64; 5])> {
        self.cells_of(strategy, method)
            .filter_map(|c| c.outcome.as_ref().ok().map(|s| (c.repetition, mean_metrics(&s.per_query))))
            .collect()
    }

    /// Mean over successful repetitions of the per-repetition means.
    pub fn grand_mean(&self, strategy: SplitStrategy, method: Method) -> Option<[f64; 5]> {
        let reps = self.repetition_means(strategy, method);
        if reps.is_empty() {
            return None;
        }
        let mut out = [0.0; 5];
        for (_, m) in &reps {
            for (o, v) in out.iter_mut().zip(m) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= reps.len() as f64;
        }
        Some(out)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&CellResult, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c, e.as_str())))
    }

    fn per_query(&self, strategy: SplitStrategy, method: Method, rep: usize) -> Option<&[QueryMetrics]> {
        self.cells_of(strategy, method)
            .find(|c| c.repetition == rep)
            .and_then(|c| c.outcome.as_ref().ok())
            .map(|s| s.per_query.as_slice())
    }

    /// Paired t-tests of every proposed method against every baseline,
    /// pooling (repetition, query) pairs. The Bonferroni correction counts
    /// the baselines in the plan.
    pub fn significance(&self) -> Vec<SignificanceRow> {
        let baselines: Vec<Method> = self.plan.methods.iter().copied().filter(|m| !m.is_proposed()).collect();
        let threshold = bonferroni_threshold(self.plan.alpha, baselines.len());
        let mut rows = Vec::new();
        for &strategy in &self.plan.strategies {
            for &method in self.plan.methods.iter().filter(|m| m.is_proposed()) {
                for &baseline in &baselines {
                    for metric in Metric::ALL {
                        let mut a = Vec::new();
                        let mut b = Vec::new();
                        for rep in 0..self.plan.repetitions {
                            let (Some(x), Some(y)) = (
                                self.per_query(strategy, method, rep),
                                self.per_query(strategy, baseline, rep),
                            ) else {
                                continue;
                            };
                            for (qx, qy) in x.iter().zip(y) {
                                debug_assert_eq!(qx.query_id, qy.query_id);
                                a.push(qx.get(metric));
                                b.push(qy.get(metric));
                            }
                        }
                        if let Ok(test) = paired_t_test(&a, &b) {
                            rows.push(SignificanceRow {
                                strategy,
                                method,
                                baseline,
                                metric,
                                pairs: a.len(),
                                test,
                                threshold,
                            });
                        }
                    }
                }
            }
        }
        rows
    }

    /// `*` when a proposed method beats every baseline significantly.
    fn marker(rows: &[SignificanceRow], strategy: SplitStrategy, method: Method, metric: Metric) -> &'static str {
        let mut relevant = rows
            .iter()
            .filter(|r| r.strategy == strategy && r.method == method && r.metric == metric)
            .peekable();
        if relevant.peek().is_none() {
            return "";
        }
        if relevant.all(SignificanceRow::significantly_better) {
            "*"
        } else {
            ""
        }
    }

    /// Methods as rows, `<strategy>_<metric>` grand means as columns; `NA`
    /// where every repetition failed.
    pub fn write_report_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = String::from("method");
        for s in &self.plan.strategies {
            for m in Metric::ALL {
                write!(header, ",{}_{}", s.label(), m.column()).expect("string write");
            }
        }
        writeln!(out, "{header}")?;
        for &method in &self.plan.methods {
            let mut line = method.label().to_string();
            for &s in &self.plan.strategies {
                match self.grand_mean(s, method) {
                    Some(means) => means.iter().for_each(|v| write!(line, ",{v:.4}").expect("string write")),
                    None => line.push_str(&",NA".repeat(Metric::ALL.len())),
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Human-readable tables, one per split strategy.
    pub fn write_report_txt(&self, mut out: impl Write) -> Result<()> {
        let rows = self.significance();
        let width = self.plan.methods.iter().map(|m| m.label().len()).max().unwrap_or(6).max(6);
        for &strategy in &self.plan.strategies {
            writeln!(out, "split: {} ({} repetitions)", strategy.label(), self.plan.repetitions)?;
            let mut header = format!("{:width$}", "method");
            for m in Metric::ALL {
                write!(header, " {:>9}", m.label()).expect("string write");
            }
            writeln!(out, "{header}")?;
            for &method in &self.plan.methods {
                let mut line = format!("{:width$}", method.label());
                match self.grand_mean(strategy, method) {
                    Some(means) => {
                        for (m, v) in Metric::ALL.iter().zip(means) {
                            let cell = format!("{v:.4}{}", Self::marker(&rows, strategy, method, *m));
                            write!(line, " {cell:>9}").expect("string write");
                        }
                    }
                    None => {
                        for _ in Metric::ALL {
                            write!(line, " {:>9}", "failed").expect("string write");
                        }
                    }
                }
                writeln!(out, "{line}")?;
            }
            writeln!(out)?;
        }
        if self.plan.methods.iter().any(|m| m.is_proposed()) {
            let m = self.plan.methods.iter().filter(|m| !m.is_proposed()).count();
            writeln!(
                out,
                "* significantly better than every baseline (paired t-test, p < {}/{m})",
                self.plan.alpha
            )?;
        }
        let failures: Vec<_> = self.failures().collect();
        if !failures.is_empty() {
            writeln!(out, "\nfailed cells:")?;
            for (c, msg) in failures {
                writeln!(out, "  {} {} rep {}: {msg}", c.method, c.strategy.label(), c.repetition)?;
            }
        }
        Ok(())
    }

    pub fn write_per_query_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "strategy,repetition,method,query_id,mrr,p1,ndcg1,ndcg3,ndcg5")?;
        for c in &self.cells {
            let Ok(s) = &c.outcome else { continue };
            for q in &s.per_query {
                let v = q.values;
                writeln!(
                    out,
                    "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    c.strategy.label(),
                    c.repetition,
                    c.method.label(),
                    q.query_id,
                    v[0],
                    v[1],
                    v[2],
                    v[3],
                    v[4]
                )?;
            }
        }
        Ok(())
    }

    pub fn write_significance_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "strategy,method,baseline,metric,pairs,mean_difference,t,p_value,threshold,significant")?;
        for r in self.significance() {
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6},{:.6e},{:.6e},{}",
                r.strategy.label(),
                r.method.label(),
                r.baseline.label(),
                r.metric.column(),
                r.pairs,
                r.test.mean_difference,
                r.test.t,
                r.test.p_value,
                r.threshold,
                r.significant()
            )?;
        }
        Ok(())
    }

    /// Tuning outcome of every cell: chosen parameters or the error.
    pub fn write_cells_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "strategy,repetition,method,status,valid_mrr,chosen")?;
        for c in &self.cells {
            let (status, mrr, detail) = match &c.outcome {
                Ok(s) => ("ok", format!("{:.6}", s.valid_mrr), s.chosen.clone()),
                Err(e) => ("failed", String::new(), e.clone()),
            };
            writeln!(
                out,
                "{},{},{},{status},{mrr},\"{}\"",
                c.strategy.label(),
                c.repetition,
                c.method.label(),
                detail.replace('"', "'")
            )?;
        }
        Ok(())
    }

    /// Write `report.csv`, `report.txt`, `per_query.csv`,
    /// `significance.csv` and `cells.csv` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let outputs: [(&str, fn(&Self, &mut BufWriter<File>) -> Result<()>); 5] = [
            ("report.csv", |r, w| r.write_report_csv(w)),
            ("report.txt", |r, w| r.write_report_txt(w)),
            ("per_query.csv", |r, w| r.write_per_query_csv(w)),
            ("significance.csv", |r, w| r.write_significance_csv(w)),
            ("cells.csv", |r, w| r.write_cells_csv(w)),
        ];
        for (name, write) in outputs {
            let path = dir.join(name);
            let mut out = BufWriter::new(File::create(&path).map_err(|e| Error::file(&path, e))?);
            write(self, &mut out)?;
            out.flush().map_err(|e| Error::file(&path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::experiment::CellSuccess;

    fn cell(method: Method, rep: usize, mrrs: &[f64]) -> CellResult {
        CellResult {
            strategy: SplitStrategy::ByQuery,
            repetition: rep,
            method,
            outcome: Ok(CellSuccess {
                chosen: String::new(),
                valid_mrr: 0.0,
                per_query: mrrs
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| QueryMetrics {
                        query_id: format!("q{i}"),
                        values: [v; 5],
                    })
                    .collect(),
            }),
        }
    }

    fn report() -> ExperimentReport {
        let plan = ExperimentPlan {
            strategies: vec![SplitStrategy::ByQuery],
            repetitions: 2,
            methods: vec![Method::Static, Method::Bm25, Method::Ntas2],
            ..ExperimentPlan::default()
        };
        let cells = vec![
            cell(Method::Static, 0, &[0.0, 0.1, 0.2, 0.1]),
            cell(Method::Bm25, 0, &[0.5, 0.4, 0.5, 0.3]),
            cell(Method::Ntas2, 0, &[1.0, 0.9, 1.0, 0.95]),
            cell(Method::Static, 1, &[0.1, 0.0, 0.2, 0.0]),
            CellResult {
                strategy: SplitStrategy::ByQuery,
                repetition: 1,
                method: Method::Bm25,
                outcome: Err("boom".into()),
            },
            cell(Method::Ntas2, 1, &[0.9, 1.0, 1.0, 1.0]),
        ];
        ExperimentReport::new(plan, cells)
    }

    #[test]
    fn grand_means_skip_failed_repetitions() {
        let r = report();
        let bm25 = r.grand_mean(SplitStrategy::ByQuery, Method::Bm25).unwrap();
        assert!((bm25[0] - 0.425).abs() < 1e-12);
        let st = r.grand_mean(SplitStrategy::ByQuery, Method::Static).unwrap();
        assert!((st[0] - (0.1 + 0.075) / 2.0).abs() < 1e-12);
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn significance_pools_repetitions() {
        let r = report();
        let rows = r.significance();
        assert_eq!(rows.len(), 2 * Metric::ALL.len());
        let vs_static = rows.iter().find(|x| x.baseline == Method::Static).unwrap();
        assert_eq!(vs_static.pairs, 8);
        assert_eq!(vs_static.threshold, 0.025);
        let vs_bm25 = rows.iter().find(|x| x.baseline == Method::Bm25).unwrap();
        assert_eq!(vs_bm25.pairs, 4);
        assert!(rows.iter().all(SignificanceRow::significantly_better));
    }

    #[test]
    fn outputs_render() {
        let r = report();
        let mut csv = Vec::new();
        r.write_report_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("method,by_query_mrr,by_query_p1"));
        assert!(csv.contains("BM25,0.4250,"));
        let mut txt = Vec::new();
        r.write_report_txt(&mut txt).unwrap();
        let txt = String::from_utf8(txt).unwrap();
        assert!(txt.contains("0.9688*"));
        assert!(txt.contains("boom"));
        let mut pq = Vec::new();
        r.write_per_query_csv(&mut pq).unwrap();
        assert_eq!(String::from_utf8(pq).unwrap().lines().count(), 1 + 5 * 4);
    }
}
