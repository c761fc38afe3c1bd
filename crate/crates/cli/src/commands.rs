use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use topodepth::format::fmt_f64;
use topodepth::grid::load_manifest;
use topodepth::metrics::{betti_curve, eta_grid};
use topodepth::persistence::diagram_with;
use topodepth::ttp::{fit_points, rank_models, RankingError};
use topodepth::{
    BettiCurve, ChannelPolicy, Engine, EtaPolicy, GridOptions, OmegaTrajectory, PersistenceDiagram,
    PoolMode, RankingReport, ScalarGrid,
};

use crate::output::Outputs;
use crate::svg::{padded, range_of, Chart, STYLES};

/// Flags shared by every subcommand.
pub struct Common {
    pub channels: ChannelPolicy,
    pub downsample: Option<usize>,
    pub pool: PoolMode,
    pub normalize: bool,
    pub workers: usize,
    pub out: PathBuf,
    pub reproducible: bool,
}

/// A command-line value that failed validation after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl Common {
    fn grid_options(&self) -> GridOptions {
        GridOptions {
            channels: self.channels,
            downsample: self.downsample.map(|f| (f, self.pool)),
            normalize: self.normalize,
        }
    }

    fn engine(&self) -> Result<Engine> {
        Ok(Engine::new(self.workers)?)
    }

    fn stamp(&self) -> Option<u64> {
        if self.reproducible {
            return None;
        }
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs())
    }

    fn load(&self, tensor: &Path) -> Result<Vec<ScalarGrid>> {
        Ok(self.grid_options().load_grids(&[tensor])?)
    }
}

/// `diagram.csv` for a single grid, `diagram_<i>.csv` for each image of a batch.
fn stem(base: &str, i: usize, n: usize) -> String {
    if n == 1 {
        base.to_string()
    } else {
        format!("{base}_{i}")
    }
}

pub fn diagram(tensor: &Path, common: &Common) -> Result<Vec<PathBuf>> {
    let grids = common.load(tensor)?;
    let engine = common.engine()?;
    let diagrams = engine.diagrams(&grids)?;
    let mut out = Outputs::default();
    for (i, d) in diagrams.iter().enumerate() {
        let name = stem("diagram", i, diagrams.len());
        out.add(format!("{name}.csv"), d.to_csv());
        let title = format!("Persistence diagram, {}", display_name(tensor, i, diagrams.len()));
        out.add(format!("{name}.svg"), diagram_svg(d, &title, common.stamp()));
    }
    out.commit(&common.out)
}

pub fn betti(tensor: &Path, grid: (f64, f64, usize), common: &Common) -> Result<Vec<PathBuf>> {
    let etas = eta_grid(grid.0, grid.1, grid.2).map_err(|e| UsageError(format!("--grid: {e}")))?;
    let grids = common.load(tensor)?;
    let config = common.engine()?.persistence;
    let mut out = Outputs::default();
    for (i, g) in grids.iter().enumerate() {
        let d = diagram_with(g, &config).with_context(|| format!("image {i}"))?;
        let curve = betti_curve(&d, &etas)?;
        let name = stem("betti", i, grids.len());
        out.add(format!("{name}.csv"), curve.to_csv());
        let title = format!("Betti curves, {}", display_name(tensor, i, grids.len()));
        out.add(format!("{name}.svg"), betti_svg(&curve, &title, common.stamp()));
    }
    out.commit(&common.out)
}

pub fn omega(manifest: &Path, eta: EtaPolicy, common: &Common) -> Result<Vec<PathBuf>> {
    let m = load_manifest(manifest)?;
    let traj = common.engine()?.trajectory(&m, eta, &common.grid_options())?;
    let mut out = Outputs::default();
    out.add("omega.csv", traj.to_csv());
    out.add("omega.svg", omega_svg(&traj, common.stamp()));
    out.commit(&common.out)
}

pub struct RankInputs<'a> {
    pub manifests: &'a [PathBuf],
    pub accuracy: Option<&'a Path>,
    pub leep: Option<&'a Path>,
    pub eta: EtaPolicy,
    pub degree: usize,
}

pub fn rank(inputs: RankInputs<'_>, common: &Common) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in inputs.manifests {
        if p.is_dir() {
            paths.extend(json_files(p)?);
        } else {
            paths.push(p.clone());
        }
    }
    let manifests = paths
        .iter()
        .map(|p| load_manifest(p).with_context(|| format!("manifest {}", p.display())))
        .collect::<Result<Vec<_>>>()?;

    let mut accuracies: BTreeMap<String, f64> = manifests
        .iter()
        .filter_map(|m| Some((m.model_id.clone(), m.finetuned_accuracy?)))
        .collect();
    if let Some(path) = inputs.accuracy {
        accuracies.extend(read_scores(path)?);
    }
    let leep = inputs.leep.map(read_scores).transpose()?;
    let known = manifests
        .iter()
        .filter(|m| accuracies.contains_key(&m.model_id))
        .count();
    if known < 3 {
        // fail before the expensive part
        return Err(RankingError::InsufficientModels(known).into());
    }

    let engine = common.engine()?;
    let options = common.grid_options();
    let trajectories = manifests
        .iter()
        .map(|m| {
            engine
                .trajectory(m, inputs.eta, &options)
                .with_context(|| format!("model '{}'", m.model_id))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = rank_models(&trajectories, &accuracies, leep.as_ref(), inputs.degree)?;

    let mut out = Outputs::default();
    out.add("ranking.csv", report.to_csv());
    out.add("ranking.svg", ranking_svg(&report, common.stamp()));
    out.commit(&common.out)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads a two-column `model_id,<value>` CSV with a header row.
fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut scores = BTreeMap::new();
    for (line, row) in reader.deserialize::<(String, f64)>().enumerate() {
        let (id, v) = row.with_context(|| format!("{}: bad row {}", path.display(), line + 2))?;
        if !v.is_finite() {
            return Err(UsageError(format!("{}: non-finite value for '{id}'", path.display())).into());
        }
        scores.insert(id, v);
    }
    Ok(scores)
}

fn display_name(path: &Path, i: usize, n: usize) -> String {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
    if n == 1 {
        name
    } else {
        format!("{name} [{i}]")
    }
}

pub fn diagram_svg(d: &PersistenceDiagram, title: &str, stamp: Option<u64>) -> String {
    let finite = d
        .pairs()
        .iter()
        .flat_map(|p| [p.birth, p.death])
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = range_of(finite);
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let band = hi + 0.12 * span;
    let mut chart = Chart::new(title, "birth", "death", padded(lo, hi), padded(lo, band));
    chart.line("diagonal", (lo, lo), (hi, hi), false);
    chart.line("infinity", (lo, band), (hi, band), true);
    chart.label((lo, band), "∞");
    for p in d.pairs() {
        let y = if p.is_essential() { band } else { p.death };
        chart.point(
            &format!("h{}", p.dim),
            STYLES[p.dim],
            (p.birth, y),
            &[
                ("dim", p.dim.to_string()),
                ("birth", fmt_f64(p.birth)),
                ("death", fmt_f64(p.death)),
            ],
        );
    }
    for (k, (color, _)) in STYLES.iter().enumerate() {
        chart.legend(color, &format!("H{k}"));
    }
    chart.render(stamp)
}

pub fn betti_svg(curve: &BettiCurve, title: &str, stamp: Option<u64>) -> String {
    let (x0, x1) = range_of(curve.etas.iter().copied());
    let top = curve.values.iter().flatten().copied().max().unwrap_or(0);
    let mut chart = Chart::new(title, "η", "β", padded(x0, x1), padded(0.0, top.max(1) as f64));
    for (k, (color, marker)) in STYLES.iter().enumerate() {
        let series: Vec<(f64, f64)> = curve
            .etas
            .iter()
            .zip(&curve.values)
            .map(|(&eta, b)| (eta, b[k] as f64))
            .collect();
        chart.polyline(&format!("b{k}-line"), color, &series);
        for &(eta, v) in &series {
            chart.point(
                &format!("b{k}"),
                (color, *marker),
                (eta, v),
                &[("eta", fmt_f64(eta)), ("value", fmt_f64(v))],
            );
        }
        chart.legend(color, &format!("β{k}"));
    }
    chart.render(stamp)
}

pub fn omega_svg(traj: &OmegaTrajectory, stamp: Option<u64>) -> String {
    let eta = traj.eta().map_or_else(|| "n/a".into(), fmt_f64);
    let title = format!("Ω by layer, {} (η = {eta})", traj.model_id);
    let points: Vec<(f64, f64)> = traj
        .records
        .iter()
        .map(|r| (r.layer_index as f64, r.omega_mean))
        .collect();
    let (x0, x1) = range_of(points.iter().map(|p| p.0));
    let (_, y1) = range_of(points.iter().map(|p| p.1));
    let mut chart = Chart::new(&title, "layer index", "Ω", padded(x0, x1), padded(0.0, y1.max(1.0)));
    let (color, marker) = STYLES[0];
    chart.polyline("omega-line", color, &points);
    for (r, &at) in traj.records.iter().zip(&points) {
        chart.point(
            "omega",
            (color, marker),
            at,
            &[
                ("layer", r.layer_index.to_string()),
                ("name", r.layer_name.clone()),
                ("omega", fmt_f64(r.omega_mean)),
            ],
        );
    }
    chart.render(stamp)
}

pub fn ranking_svg(report: &RankingReport, stamp: Option<u64>) -> String {
    let title = format!("θ vs accuracy (ρ = {})", fmt_f64(report.pearson_theta));
    let points: Vec<(&str, f64, f64)> = report
        .entries
        .iter()
        .filter_map(|e| Some((e.model_id.as_str(), e.theta, e.accuracy?)))
        .collect();
    let (x0, x1) = range_of(points.iter().map(|p| p.1));
    let (y0, y1) = range_of(points.iter().map(|p| p.2));
    let mut chart = Chart::new(&title, "θ", "accuracy", padded(x0, x1), padded(y0, y1));
    let ts: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    if let Ok(line) = fit_points(&ts, &ys, 1) {
        chart.line("trend", (x0, line.eval(x0)), (x1, line.eval(x1)), true);
    }
    for &(id, theta, acc) in &points {
        chart.point(
            "model",
            STYLES[0],
            (theta, acc),
            &[
                ("model", id.to_string()),
                ("theta", fmt_f64(theta)),
                ("accuracy", fmt_f64(acc)),
            ],
        );
        chart.label((theta, acc), id);
    }
    chart.render(stamp)
}
