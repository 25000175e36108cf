//! The four pipeline stages behind the subcommands.
//!
//! Directory layout under `--out`:
//! `train/`, `test/` snapshot archives; `models/` with one checkpoint, one
//! loss log per variant, the serialized trees, and the wall-clock log;
//! `report/` with the metric tables. Every metric file is byte-deterministic
//! for a fixed configuration; wall-clock numbers live only in `timings.tsv`
//! files, which are excluded from that guarantee.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use conservrom::fem::{assemble_operators, OperatorSet};
use conservrom::fom::{
    generate_snapshots_with_iterations, load_archive, mesh_hash, save_archive, ArchiveMeta,
    ProblemSpec, Snapshot,
};
use conservrom::mesh::structured_unit_square;
use conservrom::numerics::{io, Rng, RNG_ALGORITHM};
use conservrom::rom::checkpoint::{load_checkpoint, save_checkpoint};
use conservrom::rom::{build_rom, error_metrics, EvalReport, RomVariant};
use conservrom::tree::{build_averaged, solver_to_matrix};
use conservrom::{tol, Error as CoreError};

use crate::config::{ConfigError, ResolvedConfig};

/// Seed offset separating the tree draw from the snapshot draws.
const TREE_SEED_OFFSET: u64 = 0x5472_6565; // "Tree"

#[derive(Debug)]
pub enum StageError {
    /// Exit 2: configuration problems.
    Config(ConfigError),
    /// Exit 3: full-order solver failure.
    Solver(CoreError),
    /// Exit 4: training divergence.
    Training(CoreError),
    /// Exit 5: hash mismatch between artifacts.
    HashMismatch(String),
    /// Exit 6: missing stage outputs.
    MissingOutputs(String),
    /// Exit 1: anything else.
    Other(CoreError),
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Config(_) => 2,
            StageError::Solver(_) => 3,
            StageError::Training(_) => 4,
            StageError::HashMismatch(_) => 5,
            StageError::MissingOutputs(_) => 6,
            StageError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageError::Config(e) => write!(f, "{e}"),
            StageError::Solver(e) => write!(f, "solver failure: {e}"),
            StageError::Training(e) => write!(f, "training failure: {e}"),
            StageError::HashMismatch(m) => write!(f, "hash mismatch: {m}"),
            StageError::MissingOutputs(m) => write!(f, "missing outputs: {m}"),
            StageError::Other(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for StageError {}

impl From<CoreError> for StageError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::Io(_) | CoreError::MissingArtifact(_) => {
                StageError::MissingOutputs(e.to_string())
            }
            CoreError::HashMismatch { .. } => StageError::HashMismatch(e.to_string()),
            CoreError::Training { .. } => StageError::Training(e),
            CoreError::NonConvergence(_) | CoreError::Factorization(_) => StageError::Solver(e),
            _ => StageError::Other(e),
        }
    }
}

pub type StageResult<T> = Result<T, StageError>;

fn build_ops(cfg: &ResolvedConfig) -> StageResult<Arc<OperatorSet>> {
    let mesh = structured_unit_square(cfg.raw.mesh_n).map_err(StageError::Other)?;
    Ok(Arc::new(assemble_operators(Arc::new(mesh))))
}

fn archive_dir(out: &Path, which: &str) -> PathBuf {
    out.join(which)
}

/// Generate the train and test snapshot archives.
pub fn cmd_generate(cfg: &ResolvedConfig, out: &Path) -> StageResult<()> {
    let ops = build_ops(cfg)?;
    let spec = ProblemSpec::new(cfg.case);
    let hash = mesh_hash(&ops.mesh);
    for (which, seed, count) in [
        ("train", cfg.raw.seed, cfg.raw.n_train),
        ("test", cfg.test_seed(), cfg.raw.n_test),
    ] {
        let mut rng = Rng::new(seed);
        let (snapshots, iterations) =
            generate_snapshots_with_iterations(&spec, &ops, &mut rng, count)
                .map_err(StageError::Solver)?;
        let meta = ArchiveMeta {
            case: cfg.case,
            mesh_hash: hash.clone(),
            seed,
            n_samples: count,
            rng_algorithm: RNG_ALGORITHM.into(),
            solver_residual_tol: tol::SOLVE_RESIDUAL,
            conservation_tol: tol::CONSERVATION,
            config_hash: Some(cfg.hash.clone()),
            picard_iterations: if iterations.iter().any(|&i| i > 0) {
                iterations
            } else {
                Vec::new()
            },
        };
        save_archive(&archive_dir(out, which), &snapshots, &meta).map_err(StageError::Other)?;
    }
    Ok(())
}

fn load_checked_archive(
    cfg: &ResolvedConfig,
    ops: &Arc<OperatorSet>,
    out: &Path,
    which: &str,
) -> StageResult<Vec<Snapshot>> {
    let (snapshots, meta) = load_archive(&archive_dir(out, which))?;
    let current = mesh_hash(&ops.mesh);
    if meta.mesh_hash != current {
        return Err(StageError::HashMismatch(format!(
            "{which} archive was generated on a different mesh ({} vs {current})",
            meta.mesh_hash
        )));
    }
    match &meta.config_hash {
        Some(h) if *h != cfg.hash => Err(StageError::HashMismatch(format!(
            "{which} archive belongs to a different configuration"
        ))),
        _ => Ok(snapshots),
    }
}

/// Train every requested variant and write checkpoints plus logs.
pub fn cmd_train(cfg: &ResolvedConfig, out: &Path) -> StageResult<()> {
    let ops = build_ops(cfg)?;
    let snapshots = load_checked_archive(cfg, &ops, out, "train")?;
    let models_dir = out.join("models");
    std::fs::create_dir_all(&models_dir).map_err(|e| StageError::Other(e.into()))?;

    let mut tree_rng = Rng::new(cfg.raw.seed.wrapping_add(TREE_SEED_OFFSET));
    let solver = Arc::new(
        build_averaged(&ops, &ops.mesh.clone(), &mut tree_rng, cfg.raw.n_trees)
            .map_err(StageError::Other)?,
    );
    io::write_dense(&models_dir.join("trees.bin"), &solver_to_matrix(&solver))
        .map_err(StageError::Other)?;

    let mut timings = String::from("variant\ttrain_seconds\tepochs_run\tfinal_loss\n");
    for (idx, &variant) in cfg.variants.iter().enumerate() {
        let train_cfg = cfg.train_config(idx as u64);
        let started = Instant::now();
        let (mut model, history) = build_rom(
            variant,
            &snapshots,
            &ops,
            &solver,
            cfg.case,
            &cfg.architecture,
            &train_cfg,
        )
        .map_err(|e| match e {
            CoreError::Training { .. } => StageError::Training(e),
            other => StageError::Other(other),
        })?;
        let seconds = started.elapsed().as_secs_f64();
        model.pressure_mode = cfg.pressure_mode;
        model.config_hash = Some(cfg.hash.clone());
        save_checkpoint(&models_dir.join(format!("{}.ckpt", variant.as_str())), &model)
            .map_err(StageError::Other)?;

        let mut log = String::from("epoch\tloss\n");
        for (epoch, loss) in history.iter().enumerate() {
            let _ = writeln!(log, "{epoch}\t{loss}");
        }
        std::fs::write(models_dir.join(format!("loss_{}.tsv", variant.as_str())), log)
            .map_err(|e| StageError::Other(e.into()))?;
        let _ = writeln!(
            timings,
            "{}\t{:.3}\t{}\t{}",
            variant.as_str(),
            seconds,
            history.len().saturating_sub(1),
            history.last().copied().unwrap_or(f64::NAN)
        );
    }
    std::fs::write(models_dir.join("timings.tsv"), timings)
        .map_err(|e| StageError::Other(e.into()))?;
    Ok(())
}

/// Evaluate the trained variants on the test archive and emit the metric
/// tables. With `fom_debug`, an extra `fom` row feeds the reference fields
/// through the metrics as a zero-error identity check.
pub fn cmd_evaluate(cfg: &ResolvedConfig, out: &Path, fom_debug: bool) -> StageResult<()> {
    let ops = build_ops(cfg)?;
    let test = load_checked_archive(cfg, &ops, out, "test")?;
    let models_dir = out.join("models");
    let report_dir = out.join("report");
    std::fs::create_dir_all(&report_dir).map_err(|e| StageError::Other(e.into()))?;

    let current_hash = mesh_hash(&ops.mesh);
    let mut reports: Vec<EvalReport> = Vec::new();
    for &variant in &cfg.variants {
        let path = models_dir.join(format!("{}.ckpt", variant.as_str()));
        if !path.exists() {
            return Err(StageError::MissingOutputs(format!(
                "checkpoint {} (run the train stage first)",
                path.display()
            )));
        }
        let model = load_checkpoint(&path, &ops)?;
        if model.mesh_hash != current_hash {
            return Err(StageError::HashMismatch(format!(
                "checkpoint {} was trained on a different mesh",
                path.display()
            )));
        }
        if let Some(h) = &model.config_hash {
            if *h != cfg.hash {
                return Err(StageError::HashMismatch(format!(
                    "checkpoint {} belongs to a different configuration",
                    path.display()
                )));
            }
        }
        reports.push(error_metrics(&model, &test).map_err(StageError::Other)?);
    }

    let mut summary = String::from(
        "model\tkernel_map\trel_l2_flux_mean\trel_hdiv_flux_mean\trel_l2_pressure_mean\n",
    );
    let mut per_sample = String::from(
        "variant\tsample\trel_l2_flux\trel_hdiv_flux\trel_l2_pressure\tconservation_residual\tresidual_bound\n",
    );
    let mut residuals = String::from("variant\tsample\tconservation_residual\tresidual_bound\n");
    let mut eval_timings = String::from("variant\teval_seconds\n");

    if fom_debug {
        // Identity row: the reference fields evaluated against themselves.
        let _ = writeln!(summary, "fom\tnone\t{}\t{}\t{}", 0.0, 0.0, 0.0);
        for (i, s) in test.iter().enumerate() {
            let bq = ops.b.spmv(&s.q).map_err(StageError::Other)?;
            let resid = bq
                .iter()
                .zip(&s.f_vec)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let bound = tol::CONSERVATION
                * (1.0 + s.f_vec.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let _ = writeln!(per_sample, "fom\t{i}\t{}\t{}\t{}\t{resid}\t{bound}", 0.0, 0.0, 0.0);
            let _ = writeln!(residuals, "fom\t{i}\t{resid}\t{bound}");
        }
    }

    for report in &reports {
        let _ = writeln!(
            summary,
            "{}\t{}\t{}\t{}\t{}",
            report.variant.as_str(),
            report.variant.kernel_label(),
            report.mean_l2_flux,
            report.mean_hdiv_flux,
            report.mean_l2_pressure
        );
        for s in &report.samples {
            let _ = writeln!(
                per_sample,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                report.variant.as_str(),
                s.index,
                s.rel_l2_flux,
                s.rel_hdiv_flux,
                s.rel_l2_pressure,
                s.conservation_residual,
                s.residual_bound
            );
            let _ = writeln!(
                residuals,
                "{}\t{}\t{}\t{}",
                report.variant.as_str(),
                s.index,
                s.conservation_residual,
                s.residual_bound
            );
        }
        let _ = writeln!(eval_timings, "{}\t{:.3}", report.variant.as_str(), report.eval_seconds);
    }
    std::fs::write(report_dir.join("summary.tsv"), summary)
        .map_err(|e| StageError::Other(e.into()))?;
    std::fs::write(report_dir.join("per_sample.csv"), per_sample)
        .map_err(|e| StageError::Other(e.into()))?;
    std::fs::write(report_dir.join("residuals.csv"), residuals)
        .map_err(|e| StageError::Other(e.into()))?;
    std::fs::write(report_dir.join("timings.tsv"), eval_timings)
        .map_err(|e| StageError::Other(e.into()))?;
    std::fs::write(
        report_dir.join("meta.toml"),
        format!("config_hash = \"{}\"\nmesh_hash = \"{current_hash}\"\n", cfg.hash),
    )
    .map_err(|e| StageError::Other(e.into()))?;
    Ok(())
}

/// Quartiles with linear interpolation between order statistics.
pub fn quartiles(sorted: &[f64]) -> [f64; 5] {
    let q = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
}

/// Assemble the final tables from the evaluate stage outputs.
pub fn cmd_report(cfg: &ResolvedConfig, out: &Path) -> StageResult<()> {
    let report_dir = out.join("report");
    let summary_path = report_dir.join("summary.tsv");
    let per_sample_path = report_dir.join("per_sample.csv");
    let meta_path = report_dir.join("meta.toml");
    for p in [&summary_path, &per_sample_path, &meta_path] {
        if !p.exists() {
            return Err(StageError::MissingOutputs(format!(
                "{} (run the evaluate stage first)",
                p.display()
            )));
        }
    }
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| StageError::Other(e.into()))?;
    let recorded = meta
        .lines()
        .find_map(|l| l.strip_prefix("config_hash = \""))
        .and_then(|rest| rest.strip_suffix('"'))
        .unwrap_or("");
    if recorded != cfg.hash {
        return Err(StageError::HashMismatch(
            "evaluate outputs belong to a different configuration".into(),
        ));
    }
    let summary =
        std::fs::read_to_string(&summary_path).map_err(|e| StageError::Other(e.into()))?;
    let per_sample =
        std::fs::read_to_string(&per_sample_path).map_err(|e| StageError::Other(e.into()))?;

    // Paper-style table: model, kernel map, mean errors.
    let mut table = String::from(
        "Model\tMap onto kernel\tL2 error flux\tHdiv error flux\tL2 error pressure\n",
    );
    for line in summary.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            continue;
        }
        let display = RomVariant::parse(cols[0])
            .map(|v| v.display_name().to_string())
            .unwrap_or_else(|_| cols[0].to_string());
        let fmt_pct = |s: &str| -> String {
            s.parse::<f64>()
                .map(|v| format!("{:.4}%", 100.0 * v))
                .unwrap_or_else(|_| s.to_string())
        };
        let _ = writeln!(
            table,
            "{display}\t{}\t{}\t{}\t{}",
            cols[1],
            fmt_pct(cols[2]),
            fmt_pct(cols[3]),
            fmt_pct(cols[4])
        );
    }
    std::fs::write(report_dir.join("report.tsv"), &table)
        .map_err(|e| StageError::Other(e.into()))?;

    // Companion table with the training-time column joined in from the
    // train-stage log. Wall clock varies between runs, so this file is not
    // covered by the byte-determinism guarantee; report.tsv is.
    let timings_path = out.join("models/timings.tsv");
    if timings_path.exists() {
        let timings =
            std::fs::read_to_string(&timings_path).map_err(|e| StageError::Other(e.into()))?;
        let time_of = |variant: &str| -> Option<String> {
            timings
                .lines()
                .skip(1)
                .map(|l| l.split('\t').collect::<Vec<_>>())
                .find(|cols| cols.first() == Some(&variant))
                .and_then(|cols| cols.get(1).map(|s| format!("{s}s")))
        };
        let mut timed = String::new();
        for (i, line) in table.lines().enumerate() {
            if i == 0 {
                let _ = writeln!(timed, "{line}\tTraining time");
                continue;
            }
            let display = line.split('\t').next().unwrap_or("");
            let variant = RomVariant::ALL
                .iter()
                .find(|v| v.display_name() == display)
                .map(|v| v.as_str().to_string());
            let t = variant
                .and_then(|v| time_of(&v))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(timed, "{line}\t{t}");
        }
        std::fs::write(report_dir.join("report_timed.tsv"), timed)
            .map_err(|e| StageError::Other(e.into()))?;
    }

    // Box-plot data: quartiles of the per-sample distributions.
    let mut by_variant: Vec<(String, Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for line in per_sample.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 7 {
            continue;
        }
        let entry = match by_variant.iter_mut().find(|(v, ..)| v == cols[0]) {
            Some(e) => e,
            None => {
                by_variant.push((cols[0].to_string(), Vec::new(), Vec::new(), Vec::new()));
                by_variant.last_mut().unwrap()
            }
        };
        let parse = |s: &str| -> StageResult<f64> {
            s.parse::<f64>().map_err(|e| {
                StageError::Other(CoreError::Format(format!("per-sample table: {e}")))
            })
        };
        entry.1.push(parse(cols[2])?);
        entry.2.push(parse(cols[3])?);
        entry.3.push(parse(cols[4])?);
    }
    let mut quart = String::from("variant\tmetric\tmin\tq1\tmedian\tq3\tmax\n");
    for (variant, l2, hdiv, pressure) in &mut by_variant {
        for (metric, values) in [
            ("rel_l2_flux", l2),
            ("rel_hdiv_flux", hdiv),
            ("rel_l2_pressure", pressure),
        ] {
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = quartiles(values);
            let _ = writeln!(
                quart,
                "{variant}\t{metric}\t{}\t{}\t{}\t{}\t{}",
                q[0], q[1], q[2], q[3], q[4]
            );
        }
    }
    std::fs::write(report_dir.join("quartiles.tsv"), quart)
        .map_err(|e| StageError::Other(e.into()))?;
    Ok(())
}
