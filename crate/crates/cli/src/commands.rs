use std::path::{Path, PathBuf};

use clic_core::fnn::save_model;
use clic_core::harness::{self, CancellerKind, CountDims, Fitted, SweepEval};
use clic_core::poly::save_coefficients;
use clic_core::scenario::{generate_dataset, load_dataset, save_dataset, CliDataset};

use crate::config::RunConfig;
use crate::error::{io_error, CliError};
use crate::tables::{
    self, format_c_db, parse_c_db, EpochRow, HistoryRow, ResidualRow, ResultRow, SweepRow,
};

/// Resolved configuration shared by every subcommand.
pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub force: bool,
}

impl Context {
    pub fn new(
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        force: bool,
    ) -> Result<Self, CliError> {
        let cfg = match config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let out = out.unwrap_or_else(|| cfg.output.dir.clone());
        std::fs::create_dir_all(&out).map_err(io_error(&out))?;
        Ok(Self {
            seed: seed.unwrap_or(cfg.seed),
            cfg,
            out,
            force,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn dataset_path(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.resolve(&self.cfg.output.dataset))
    }

    fn results_path(&self) -> PathBuf {
        self.resolve(&self.cfg.output.results)
    }

    fn guard(&self, path: &Path) -> Result<(), CliError> {
        if path.exists() && !self.force {
            return Err(CliError::Exists(path.display().to_string()));
        }
        Ok(())
    }
}

fn generate_to(ctx: &Context, path: &Path) -> Result<CliDataset, CliError> {
    let ds = generate_dataset(&ctx.cfg.scenario, ctx.seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    save_dataset(&ds, path)?;
    println!(
        "wrote {} samples={} n_tx={} n_rx={} split={} seed={}",
        path.display(),
        ds.n_samples(),
        ds.n_tx(),
        ds.n_rx(),
        ds.split_index,
        ctx.seed
    );
    Ok(ds)
}

pub fn generate(ctx: &Context, dataset: Option<&Path>) -> Result<(), CliError> {
    let path = ctx.dataset_path(dataset);
    ctx.guard(&path)?;
    generate_to(ctx, &path).map(|_| ())
}

/// The dataset at the configured path, generated first if absent. An
/// existing file must match the run's seed and scenario.
fn dataset_for_run(ctx: &Context, dataset: Option<&Path>) -> Result<CliDataset, CliError> {
    let path = ctx.dataset_path(dataset);
    if !path.exists() {
        return generate_to(ctx, &path);
    }
    let ds = load_dataset(&path)?;
    let mismatch = |message: String| CliError::Config {
        path: path.clone(),
        message,
    };
    if ds.meta.seed != ctx.seed {
        return Err(mismatch(format!(
            "dataset was generated with seed {}, this run uses seed {}; regenerate it or pass --seed {}",
            ds.meta.seed, ctx.seed, ds.meta.seed
        )));
    }
    if ds.meta.scenario != ctx.cfg.scenario {
        return Err(mismatch(
            "dataset was generated from a different scenario; regenerate it with `generate --force`".into(),
        ));
    }
    Ok(ds)
}

fn model_paths(ctx: &Context, kind: CancellerKind) -> Vec<PathBuf> {
    let dir = ctx.out.join("models");
    match kind {
        CancellerKind::Tc | CancellerKind::Pc => vec![dir.join(format!("{kind}.clipoly"))],
        CancellerKind::Nnc => vec![dir.join("nnc.clifnn")],
        CancellerKind::Hc => vec![dir.join("hc_linear.clipoly"), dir.join("hc.clifnn")],
    }
}

fn history_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}_history.csv"))
}

fn save_fitted(paths: &[PathBuf], fitted: &Fitted) -> Result<(), CliError> {
    if let Some(dir) = paths[0].parent() {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    }
    match fitted {
        Fitted::Poly(c) => save_coefficients(c, &paths[0])?,
        Fitted::Network(m) => save_model(m, &paths[0])?,
        Fitted::Hybrid { linear, network } => {
            save_coefficients(linear, &paths[0])?;
            save_model(network, &paths[1])?;
        }
    }
    Ok(())
}

pub fn run(ctx: &Context, kinds: &[CancellerKind], dataset: Option<&Path>) -> Result<(), CliError> {
    let results_path = ctx.results_path();
    let mut rows = if results_path.exists() {
        tables::read_results(&results_path)?
    } else {
        Vec::new()
    };
    // A dataset from another seed or scenario is the more basic mistake, so
    // it is reported before any overwrite refusal.
    let ds = dataset_for_run(ctx, dataset)?;
    for &kind in kinds {
        if !ctx.force && rows.iter().any(|r| r.id == kind.id() && r.seed == ctx.seed) {
            return Err(CliError::Exists(format!(
                "{} row for {kind} with seed {}",
                results_path.display(),
                ctx.seed
            )));
        }
        for p in model_paths(ctx, kind) {
            ctx.guard(&p)?;
        }
        if kind.uses_network() {
            ctx.guard(&history_path(&ctx.out, kind.id()))?;
        }
    }

    for &kind in kinds {
        let result = harness::run(kind, &ds, &ctx.cfg.cancellers, ctx.seed)?;
        save_fitted(&model_paths(ctx, kind), &result.fitted)?;
        if kind.uses_network() {
            let history: Vec<HistoryRow> = result
                .history
                .iter()
                .map(|h| HistoryRow {
                    epoch: h.epoch,
                    train_loss: h.train_loss,
                    test_loss: h.test_loss,
                    test_c_db: h.metric,
                })
                .collect();
            tables::write_csv(
                &history_path(&ctx.out, kind.id()),
                &tables::HISTORY_COLUMNS,
                &history,
            )?;
        }
        let row = ResultRow {
            id: kind.id().to_string(),
            seed: ctx.seed,
            c_db: format_c_db(result.c_db),
            residual_dbm: result.residual_dbm,
            n_params: result.n_params,
            complexity: result.complexity,
            epochs: result.best_epoch,
        };
        println!(
            "{} c_db={} residual_dbm={:.2} n_params={} complexity={} epochs={}",
            row.id, result.c_db, row.residual_dbm, row.n_params, row.complexity, row.epochs
        );
        match rows.iter_mut().find(|r| r.id == row.id && r.seed == row.seed) {
            Some(existing) => *existing = row,
            None => rows.push(row),
        }
        tables::write_csv(&results_path, &tables::RESULT_COLUMNS, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Nonlinearity order of PC.
    Order,
    /// Hidden width of NNC or HC.
    Hidden,
}

impl Axis {
    pub fn parse(text: &str) -> Result<Self, String> {
        match text.to_ascii_lowercase().as_str() {
            "p" | "order" => Ok(Self::Order),
            "nh" | "hidden" => Ok(Self::Hidden),
            other => Err(format!("unknown axis '{other}', expected P or Nh")),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Order => "P",
            Self::Hidden => "Nh",
        }
    }
}

/// `1,3,5` or an inclusive range `a..b` with optional `:step`. Ranges on
/// the order axis default to step 2.
pub fn parse_values(text: &str, axis: Axis) -> Result<Vec<usize>, CliError> {
    let bad = |why: String| CliError::Usage(format!("--values '{text}': {why}"));
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("'{}' is not a non-negative integer", s.trim())))
    };
    let text_t = text.trim();
    if text_t.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, rest)) = text_t.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, num(step)?),
            None => (rest, if axis == Axis::Order { 2 } else { 1 }),
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        if step == 0 {
            return Err(bad("step must be positive".into()));
        }
        if lo > hi {
            return Err(bad("range start exceeds its end".into()));
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    text_t.split(',').map(num).collect()
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    ctx: &Context,
    axis: Axis,
    values: &str,
    canceller: Option<CancellerKind>,
    evaluate: bool,
    jobs: Option<usize>,
    dataset: Option<&Path>,
) -> Result<(), CliError> {
    let kind = match (axis, canceller) {
        (Axis::Order, None | Some(CancellerKind::Pc)) => CancellerKind::Pc,
        (Axis::Hidden, None) => CancellerKind::Nnc,
        (Axis::Hidden, Some(k @ (CancellerKind::Nnc | CancellerKind::Hc))) => k,
        (axis, Some(k)) => {
            return Err(CliError::Usage(format!(
                "axis {} does not apply to canceller {k}",
                axis.label()
            )))
        }
    };
    let sizes = parse_values(values, axis)?;
    let path = ctx.out.join(format!("sweep_{}_{kind}.csv", axis.label()));
    ctx.guard(&path)?;
    let ds = if evaluate {
        Some(dataset_for_run(ctx, dataset)?)
    } else {
        None
    };
    let dims = match &ds {
        Some(ds) => CountDims::of(ds),
        None => CountDims::from_scenario(&ctx.cfg.scenario),
    };
    let eval = ds.as_ref().map(|dataset| SweepEval {
        dataset,
        settings: &ctx.cfg.cancellers,
        seed: ctx.seed,
    });
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let points = harness::sweep(kind, &sizes, dims, eval, jobs)?;
    let rows: Vec<SweepRow> = points
        .iter()
        .map(|p| SweepRow {
            canceller: kind.id().into(),
            axis: axis.label().into(),
            value: p.size,
            n_params: p.n_params,
            complexity: p.complexity,
            c_db: p.c_db.map(format_c_db),
        })
        .collect();
    tables::write_csv(&path, &tables::SWEEP_COLUMNS, &rows)?;
    println!("wrote {} rows={}", path.display(), rows.len());
    Ok(())
}

pub fn report(ctx: &Context, results: Option<&Path>) -> Result<(), CliError> {
    let results_path = results
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.results_path());
    let mut rows = tables::read_results(&results_path)?;
    let names = ["summary.csv", "residuals.csv", "epochs.csv", "summary.json"];
    let outputs: Vec<PathBuf> = names.iter().map(|n| ctx.out.join(n)).collect();
    for p in &outputs {
        ctx.guard(p)?;
    }

    let key = |r: &ResultRow| parse_c_db(&r.c_db).map_or(f64::NEG_INFINITY, |c| c.sort_key());
    rows.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then_with(|| a.id.cmp(&b.id))
            .then_with(|| a.seed.cmp(&b.seed))
    });

    let residuals: Vec<ResidualRow> = rows
        .iter()
        .map(|r| ResidualRow {
            id: r.id.clone(),
            seed: r.seed,
            cli_dbm: parse_c_db(&r.c_db)
                .and_then(|c| c.value())
                .map(|c| r.residual_dbm + c)
                .filter(|v| v.is_finite()),
            residual_dbm: r.residual_dbm,
            c_db: r.c_db.clone(),
        })
        .collect();

    let history_dir = results_path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut epochs = Vec::new();
    let mut seen = Vec::new();
    for r in &rows {
        if seen.contains(&r.id) {
            continue;
        }
        seen.push(r.id.clone());
        let path = history_path(history_dir, &r.id);
        if !path.exists() {
            continue;
        }
        let history: Vec<HistoryRow> = tables::read_csv(&path, &tables::HISTORY_COLUMNS)?;
        epochs.extend(history.into_iter().map(|h| EpochRow {
            id: r.id.clone(),
            epoch: h.epoch,
            train_loss: h.train_loss,
            test_loss: h.test_loss,
            test_c_db: h.test_c_db,
        }));
    }

    tables::write_csv(&outputs[0], &tables::RESULT_COLUMNS, &rows)?;
    tables::write_csv(&outputs[1], &tables::RESIDUAL_COLUMNS, &residuals)?;
    tables::write_csv(&outputs[2], &tables::EPOCH_COLUMNS, &epochs)?;
    let summary = serde_json::json!({
        "results": results_path.display().to_string(),
        "rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    clic_core::container::write_atomic(&outputs[3], text.as_bytes())?;
    for p in &outputs {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists_and_ranges() {
        assert_eq!(parse_values("1,3, 5,7", Axis::Order).unwrap(), vec![1, 3, 5, 7]);
        assert_eq!(parse_values("1..7", Axis::Order).unwrap(), vec![1, 3, 5, 7]);
        assert_eq!(parse_values("100..400:100", Axis::Hidden).unwrap(), vec![100, 200, 300, 400]);
        assert_eq!(parse_values("3..5", Axis::Hidden).unwrap(), vec![3, 4, 5]);
        assert!(parse_values("", Axis::Hidden).unwrap().is_empty());
        assert!(parse_values("5..1", Axis::Hidden).is_err());
        assert!(parse_values("1..5:0", Axis::Hidden).is_err());
        assert!(parse_values("a,b", Axis::Hidden).is_err());
    }

    #[test]
    fn axis_names() {
        assert_eq!(Axis::parse("P").unwrap(), Axis::Order);
        assert_eq!(Axis::parse("nh").unwrap(), Axis::Hidden);
        assert!(Axis::parse("lr").is_err());
    }
}
