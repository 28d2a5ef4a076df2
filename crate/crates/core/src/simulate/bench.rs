//! Benchmark harness: simulated parts over a dataset, aggregated per category.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{Backend, NetworkInput};
use crate::error::{Error, Result};
use crate::forge::{random_part, segment_adjacency, LabeledShape};
use crate::geometry::io::write_atomic;
use crate::geometry::NeighborIndex;
use crate::interact::Session;
use crate::postprocess::PostprocessConfig;
use crate::scalar::Real;
use crate::seed::derive_seed;

use super::sim::{noc, simulate_part, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Click budget at which IoU is reported.
    pub clicks: usize,
    pub parts_per_shape: usize,
    pub max_part_segments: usize,
    pub alpha: f64,
    pub seed: u64,
    pub sim: SimConfig,
    pub post: PostprocessConfig,
    /// JSON-lines file of finished shapes; existing lines are reused.
    pub partial: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            clicks: 10,
            parts_per_shape: 2,
            max_part_segments: 4,
            alpha: crate::interact::DEFAULT_ALPHA,
            seed: 0,
            sim: SimConfig::default(),
            post: PostprocessConfig::default(),
            partial: None,
        }
    }
}

/// One shape of the benchmark stream.
pub struct BenchShape<T> {
    pub id: String,
    pub category: String,
    pub shape: Result<LabeledShape<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartResult {
    pub shape: String,
    pub category: String,
    pub segments: Vec<usize>,
    pub ious: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NocStats {
    pub threshold: f64,
    /// Failures count as `cap`.
    pub mean_imputed: f64,
    /// `None` when no part reached the threshold.
    pub mean_success: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub name: String,
    pub parts: usize,
    pub miou: f64,
    pub noc80: NocStats,
    pub noc85: NocStats,
    /// Mean IoU after `0..=cap` clicks.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub backend: String,
    pub seed: u64,
    pub clicks: usize,
    pub cap: usize,
    pub pool_size: usize,
    pub exhaustive: bool,
    pub of: bool,
    pub or: bool,
    pub ss: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ConfigEcho,
    pub categories: Vec<CategoryStats>,
    /// Mean over categories.
    pub miou: f64,
    pub noc80: f64,
    pub noc85: f64,
    pub failure_rate80: f64,
    pub failure_rate85: f64,
    pub skipped: Vec<String>,
    pub parts: Vec<PartResult>,
}

impl BenchmarkReport {
    pub fn category(&self, name: &str) -> Option<&CategoryStats> {
        self.categories.iter().find(|c| c.name == name)
    }
}

fn noc_stats(parts: &[&PartResult], threshold: f64, cap: usize) -> NocStats {
    let mut sum_imp = 0.0;
    let mut sum_ok = 0.0;
    let mut ok = 0usize;
    for p in parts {
        match noc(&p.ious, threshold, cap) {
            Some(k) => {
                sum_imp += k as f64;
                sum_ok += k as f64;
                ok += 1;
            }
            None => sum_imp += cap as f64,
        }
    }
    NocStats {
        threshold,
        mean_imputed: sum_imp / parts.len().max(1) as f64,
        mean_success: (ok > 0).then(|| sum_ok / ok as f64),
        failures: parts.len() - ok,
    }
}

fn iou_at(ious: &[f64], k: usize) -> f64 {
    if k == 0 || ious.is_empty() {
        0.0
    } else {
        ious[k.min(ious.len()) - 1]
    }
}

/// Aggregates part results: category means over parts, overall means over categories.
pub fn aggregate(config: ConfigEcho, parts: Vec<PartResult>, skipped: Vec<String>) -> Result<BenchmarkReport> {
    let mut by_cat: BTreeMap<&str, Vec<&PartResult>> = BTreeMap::new();
    for p in &parts {
        by_cat.entry(p.category.as_str()).or_default().push(p);
    }
    if by_cat.is_empty() {
        return Err(Error::EmptyReport);
    }
    let cap = config.cap;
    let categories: Vec<CategoryStats> = by_cat
        .into_iter()
        .map(|(name, ps)| {
            let n = ps.len() as f64;
            CategoryStats {
                name: name.to_string(),
                parts: ps.len(),
                miou: ps.iter().map(|p| iou_at(&p.ious, config.clicks)).sum::<f64>() / n,
                noc80: noc_stats(&ps, 80.0, cap),
                noc85: noc_stats(&ps, 85.0, cap),
                curve: (0..=cap).map(|k| ps.iter().map(|p| iou_at(&p.ious, k)).sum::<f64>() / n).collect(),
            }
        })
        .collect();
    let c = categories.len() as f64;
    let total_parts = parts.len().max(1) as f64;
    Ok(BenchmarkReport {
        miou: categories.iter().map(|s| s.miou).sum::<f64>() / c,
        noc80: categories.iter().map(|s| s.noc80.mean_imputed).sum::<f64>() / c,
        noc85: categories.iter().map(|s| s.noc85.mean_imputed).sum::<f64>() / c,
        failure_rate80: categories.iter().map(|s| s.noc80.failures).sum::<usize>() as f64 / total_parts,
        failure_rate85: categories.iter().map(|s| s.noc85.failures).sum::<usize>() as f64 / total_parts,
        config,
        categories,
        skipped,
        parts,
    })
}

fn echo<T: Real>(backend: &Backend<T>, cfg: &BenchConfig) -> ConfigEcho {
    ConfigEcho {
        backend: backend.to_string(),
        seed: cfg.seed,
        clicks: cfg.clicks,
        cap: cfg.sim.cap,
        pool_size: cfg.sim.pool_size,
        exhaustive: cfg.sim.exhaustive,
        of: cfg.sim.finetune,
        or: cfg.post.outlier_removal,
        ss: cfg.post.smoothing,
    }
}

/// Simulates the parts of one shape; part `j` of shape `s` is drawn with
/// `derive_seed(derive_seed(seed, s), j)`.
pub fn bench_shape<T: Real>(
    shape: &LabeledShape<T>,
    id: &str,
    category: &str,
    shape_index: usize,
    backend: &Backend<T>,
    cfg: &BenchConfig,
) -> Result<Vec<PartResult>> {
    let cloud = Arc::new(shape.cloud().clone());
    let k = cfg.post.required_k().max(backend.required_k()).max(crate::forge::parts::CONTACT_K);
    let index = Arc::new(NeighborIndex::build(&cloud, k));
    let (z, net) = match backend {
        Backend::Trained(net) => {
            let input = NetworkInput::prepare(&cloud, &index, net.config());
            let z = net.embed(&input);
            (z, Some((Arc::new(net.clone()), Arc::new(input))))
        }
        _ => (backend.embed_with_index(&cloud, &index)?, None),
    };
    let z = Arc::new(z);
    let adj = segment_adjacency(shape, &index);
    let base = derive_seed(cfg.seed, shape_index as u64);
    let mut out = Vec::with_capacity(cfg.parts_per_shape);
    for j in 0..cfg.parts_per_shape {
        let ps = derive_seed(base, j as u64);
        let part = random_part(shape, &adj, cfg.max_part_segments, ps);
        let mut session = Session::new(cloud.clone(), index.clone(), z.clone(), cfg.alpha, cfg.post)?;
        if let Some((n, i)) = &net {
            session = session.with_network(n.clone(), i.clone());
        }
        let traj = simulate_part(&mut session, &part.mask, &cfg.sim, derive_seed(ps, 1))?;
        out.push(PartResult { shape: id.to_string(), category: category.to_string(), segments: part.segments, ious: traj.ious() });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PartialLine {
    config: ConfigEcho,
    index: usize,
    parts: Vec<PartResult>,
}

fn read_partial(path: &Path, config: &ConfigEcho) -> BTreeMap<usize, Vec<PartResult>> {
    let mut done = BTreeMap::new();
    let Ok(file) = fs::File::open(path) else { return done };
    for line in BufReader::new(file).lines().map_while(|l| l.ok()) {
        if let Ok(p) = serde_json::from_str::<PartialLine>(&line) {
            if &p.config == config {
                done.insert(p.index, p.parts);
            }
        }
    }
    done
}

/// Runs the benchmark over a shape stream. Unreadable shapes are skipped and
/// listed in the report.
pub fn run_benchmark<T: Real>(shapes: Vec<BenchShape<T>>, backend: &Backend<T>, cfg: &BenchConfig) -> Result<BenchmarkReport> {
    if shapes.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let config = echo(backend, cfg);
    let done = cfg.partial.as_deref().map(|p| read_partial(p, &config)).unwrap_or_default();
    let sink = match &cfg.partial {
        Some(p) => Some(std::sync::Mutex::new(
            OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?,
        )),
        None => None,
    };
    let results: Vec<Result<Option<Vec<PartResult>>>> = shapes
        .into_par_iter()
        .enumerate()
        .map(|(i, item)| {
            if let Some(parts) = done.get(&i) {
                return Ok(Some(parts.clone()));
            }
            let shape = match item.shape {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("skipping shape {}: {e}", item.id);
                    return Ok(None);
                }
            };
            let parts = bench_shape(&shape, &item.id, &item.category, i, backend, cfg)?;
            if let Some(sink) = &sink {
                let line = serde_json::to_string(&PartialLine { config: config.clone(), index: i, parts: parts.clone() })?;
                let mut f = sink.lock().expect("partial sink");
                writeln!(f, "{line}").map_err(|e| Error::io(cfg.partial.as_deref().unwrap_or(Path::new("")), e))?;
            }
            Ok(Some(parts))
        })
        .collect();
    let mut parts = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(p) => parts.extend(p),
            None => skipped.push(format!("#{i}")),
        }
    }
    aggregate(config, parts, skipped)
}

/// Plain-text table with one row per category and an overall row.
pub fn report_table(report: &BenchmarkReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>6} {:>8} {:>7} {:>7}", "category", "parts", "mIoU", "NoC@80", "NoC@85");
    let fmt = |v: &NocStats| if v.failures > 0 && v.mean_success.is_none() { "-".to_string() } else { format!("{:.2}", v.mean_imputed) };
    for c in &report.categories {
        let _ = writeln!(s, "{:<16} {:>6} {:>8.2} {:>7} {:>7}", c.name, c.parts, c.miou * 100.0, fmt(&c.noc80), fmt(&c.noc85));
    }
    let parts: usize = report.categories.iter().map(|c| c.parts).sum();
    let _ = writeln!(s, "{:<16} {:>6} {:>8.2} {:>7.2} {:>7.2}", "mean", parts, report.miou * 100.0, report.noc80, report.noc85);
    s
}

/// Click count-vs-IoU curves: header plus one row per (category, click count).
pub fn report_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from("category,clicks,miou\n");
    for c in &report.categories {
        for (k, v) in c.curve.iter().enumerate() {
            let _ = writeln!(s, "{},{k},{v}", c.name);
        }
    }
    s
}

/// Writes `path` (JSON) and siblings with `.txt` (table) and `.csv` (curves) extensions.
pub fn write_report(report: &BenchmarkReport, path: &Path) -> Result<()> {
    if report.categories.is_empty() {
        return Err(Error::EmptyReport);
    }
    write_atomic(path, serde_json::to_string_pretty(report)?.as_bytes())?;
    write_atomic(&path.with_extension("txt"), report_table(report).as_bytes())?;
    write_atomic(&path.with_extension("csv"), report_csv(report).as_bytes())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<BenchmarkReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(cat: &str, ious: &[f64]) -> PartResult {
        PartResult { shape: "s".into(), category: cat.into(), segments: vec![0], ious: ious.to_vec() }
    }

    fn echo_cfg() -> ConfigEcho {
        ConfigEcho { backend: "x".into(), seed: 0, clicks: 2, cap: 3, pool_size: 32, exhaustive: false, of: true, or: true, ss: true }
    }

    #[test]
    fn aggregates_means() {
        let parts = vec![part("a", &[0.5, 0.9]), part("a", &[1.0]), part("b", &[0.2, 0.3, 0.4])];
        let r = aggregate(echo_cfg(), parts, vec![]).unwrap();
        let a = r.category("a").unwrap();
        assert!((a.miou - 0.95).abs() < 1e-12);
        assert_eq!(a.noc80.mean_imputed, 1.5);
        assert_eq!(a.curve, vec![0.0, 0.75, 0.95, 0.95]);
        let b = r.category("b").unwrap();
        assert_eq!(b.noc80.failures, 1);
        assert_eq!(b.noc80.mean_imputed, 3.0);
        assert_eq!(b.noc80.mean_success, None);
        assert!((r.miou - (0.95 + 0.3) / 2.0).abs() < 1e-12);
        assert!((r.failure_rate80 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(aggregate(echo_cfg(), vec![], vec![]), Err(Error::EmptyReport)));
    }

    #[test]
    fn csv_rows_per_category() {
        let r = aggregate(echo_cfg(), vec![part("a", &[0.5]), part("b", &[0.7])], vec![]).unwrap();
        let csv = report_csv(&r);
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
        assert!(report_table(&r).contains("mean"));
    }
}
