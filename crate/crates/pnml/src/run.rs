//! Run configurations and their execution into result tables.
//!
//! A run config is a flat key-value file (see [`crate::config`]). Keys shared by
//! every kind are `kind`, `output`, `registry` and the `quad.*` overrides; the
//! rest depend on the kind:
//!
//! | kind             | keys |
//! |------------------|------|
//! | `synthetic`      | `train_t`, `train_y`, `degrees`, `eval_grid`, `sigma_sq`, `allow_under_parameterized` |
//! | `threshold`      | `dataset`, `seeds` or `seed_count`, `sigma_grid`, `trainset_cap` |
//! | `double-descent` | `source` (`dataset` or `linear`), `dataset`, `linear.*`, `n_grid`, `seeds` or `seed_count`, `sigma_sq` or `sigma_grid` |
//! | `evaluate-one`   | `dataset`, `row`, `sigma_sq`, `seed`, `trainset_cap` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pnml_core::{DesignMatrix, QuadConfig};

use crate::config::{ConfigError, KeyValues};
use crate::data::{self, DataError, Registry, SplitSpec};
use crate::experiments::{
    self, aggregate, default_n_grid, default_sigma_grid, DatasetSweep, ExperimentError, LinearSweep, SampleReport,
    SigmaPolicy, SweepSource, SyntheticConfig,
};
use crate::output::{sha256_hex, Cell, Manifest, Table};

/// Failure classes that map to distinct process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad config, flags or inputs (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Numeric or I/O failure during execution (exit 3).
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Validation(e.to_string())
    }
}

impl From<DataError> for RunError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => RunError::Runtime(e.to_string()),
            other => RunError::Validation(other.to_string()),
        }
    }
}

impl From<ExperimentError> for RunError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(m) => RunError::Validation(m),
            ExperimentError::Data(d) => d.into(),
            numeric @ ExperimentError::Numeric { .. } => RunError::Runtime(numeric.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Synthetic(SyntheticConfig),
    Threshold {
        dataset: String,
        seeds: Vec<u64>,
        sigma_grid: Vec<f64>,
        trainset_cap: Option<usize>,
    },
    DoubleDescent {
        source: SweepKind,
        n_grid: Option<Vec<usize>>,
        seeds: Vec<u64>,
        sigma: SigmaPolicy,
    },
    EvaluateOne(EvaluateOne),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepKind {
    Dataset(String),
    Linear(LinearSweep),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOne {
    pub dataset: String,
    /// Index into the test partition.
    pub row: usize,
    pub sigma_sq: f64,
    pub seed: u64,
    pub trainset_cap: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: Kind,
    pub kind_name: String,
    pub output: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub quad: QuadConfig,
    /// Raw key-value pairs and their hash, recorded in the manifest.
    pub raw: BTreeMap<String, String>,
    pub sha256: String,
}

const COMMON_KEYS: &[&str] = &["kind", "output", "registry", "quad."];

fn seeds(kv: &KeyValues) -> Result<Vec<u64>, ConfigError> {
    match (kv.get_list::<u64>("seeds")?, kv.get::<u64>("seed_count")?) {
        (Some(_), Some(_)) => Err(kv.error_at("seed_count", "set either `seeds` or `seed_count`, not both")),
        (Some(list), None) if list.is_empty() => Err(kv.error_at("seeds", "`seeds` must not be empty")),
        (Some(list), None) => Ok(list),
        (None, Some(0)) => Err(kv.error_at("seed_count", "`seed_count` must be positive")),
        (None, Some(n)) => Ok((0..n).collect()),
        (None, None) => Ok((0..20).collect()),
    }
}

fn positive(kv: &KeyValues, key: &str) -> Result<Option<f64>, ConfigError> {
    let v = kv.get::<f64>(key)?;
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(kv.error_at(key, format!("`{key}` must be positive"))),
        _ => Ok(v),
    }
}

fn sigma_grid(kv: &KeyValues) -> Result<Vec<f64>, ConfigError> {
    match kv.get_list::<f64>("sigma_grid")? {
        None => Ok(default_sigma_grid()),
        Some(g) if g.is_empty() || g.iter().any(|s| !(*s > 0.0 && s.is_finite())) => {
            Err(kv.error_at("sigma_grid", "`sigma_grid` must be a non-empty list of positive values"))
        }
        Some(g) => Ok(g),
    }
}

fn quad(kv: &KeyValues) -> Result<QuadConfig, ConfigError> {
    let d = QuadConfig::default();
    let q = QuadConfig {
        initial_points: kv.get_or("quad.initial_points", d.initial_points)?,
        max_points: kv.get_or("quad.max_points", d.max_points)?,
        initial_width_scale: kv.get_or("quad.initial_width_scale", d.initial_width_scale)?,
        tail_tol: kv.get_or("quad.tail_tol", d.tail_tol)?,
        rel_tol: kv.get_or("quad.rel_tol", d.rel_tol)?,
        max_widenings: kv.get_or("quad.max_widenings", d.max_widenings)?,
        lambda_tol: kv.get_or("quad.lambda_tol", d.lambda_tol)?,
        force_quadrature: kv.get_or("quad.force_quadrature", d.force_quadrature)?,
    };
    let bad = |key: &str, msg: &str| {
        Err(ConfigError {
            line: kv.line_of(key),
            message: msg.to_string(),
        })
    };
    if q.initial_points < 5 || q.initial_points % 2 == 0 {
        return bad("quad.initial_points", "`quad.initial_points` must be odd and at least 5");
    }
    if q.max_points < q.initial_points {
        return bad("quad.max_points", "`quad.max_points` must be at least `quad.initial_points`");
    }
    for key in ["initial_width_scale", "tail_tol", "rel_tol", "lambda_tol"] {
        positive(kv, &format!("quad.{key}"))?;
    }
    Ok(q)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let kv = KeyValues::parse(text)?;
        let kind_name = kv.require("kind")?.to_string();
        let allowed = |extra: &[&'static str]| -> Vec<&'static str> { COMMON_KEYS.iter().chain(extra).copied().collect() };
        let kind = match kind_name.as_str() {
            "synthetic" => {
                kv.reject_unknown(&allowed(&[
                    "train_t",
                    "train_y",
                    "degrees",
                    "eval_grid",
                    "sigma_sq",
                    "allow_under_parameterized",
                ]))?;
                let ts: Vec<f64> = kv.get_list("train_t")?.ok_or_else(|| kv.require("train_t").unwrap_err())?;
                let ys: Vec<f64> = kv.get_list("train_y")?.ok_or_else(|| kv.require("train_y").unwrap_err())?;
                if ts.len() != ys.len() {
                    return Err(kv.error_at("train_y", "`train_t` and `train_y` must have the same length"));
                }
                let cfg = SyntheticConfig {
                    train_points: ts.into_iter().zip(ys).collect(),
                    model_degrees: kv.get_list("degrees")?.ok_or_else(|| kv.require("degrees").unwrap_err())?,
                    eval_grid: kv.get_or("eval_grid", 101)?,
                    sigma_sq: positive(&kv, "sigma_sq")?.ok_or_else(|| kv.require("sigma_sq").unwrap_err())?,
                    allow_under_parameterized: kv.get_or("allow_under_parameterized", false)?,
                };
                cfg.validate().map_err(|e| ConfigError {
                    line: None,
                    message: e.to_string(),
                })?;
                Kind::Synthetic(cfg)
            }
            "threshold" => {
                kv.reject_unknown(&allowed(&["dataset", "seeds", "seed_count", "sigma_grid", "trainset_cap"]))?;
                Kind::Threshold {
                    dataset: kv.get_required("dataset")?,
                    seeds: seeds(&kv)?,
                    sigma_grid: sigma_grid(&kv)?,
                    trainset_cap: kv.get("trainset_cap")?,
                }
            }
            "double-descent" => {
                kv.reject_unknown(&allowed(&[
                    "source",
                    "dataset",
                    "linear.",
                    "n_grid",
                    "seeds",
                    "seed_count",
                    "sigma_sq",
                    "sigma_grid",
                ]))?;
                let source = match kv.get_or("source", "dataset".to_string())?.as_str() {
                    "dataset" => SweepKind::Dataset(kv.get_required("dataset")?),
                    "linear" => {
                        let features = kv.get_required::<usize>("linear.features")?;
                        if features == 0 {
                            return Err(kv.error_at("linear.features", "`linear.features` must be positive"));
                        }
                        SweepKind::Linear(LinearSweep {
                            n_features: features,
                            noise_var: positive(&kv, "linear.noise_var")?.unwrap_or(0.25),
                            pool: kv.get_or("linear.pool", 8 * features)?,
                            validation: kv.get_or("linear.validation", 100)?,
                            test: kv.get_or("linear.test", 200)?,
                        })
                    }
                    other => return Err(kv.error_at("source", format!("unknown source `{other}`"))),
                };
                if let Some(g) = kv.get_list::<usize>("n_grid")? {
                    if g.is_empty() || g.contains(&0) {
                        return Err(kv.error_at("n_grid", "`n_grid` entries must be at least 1"));
                    }
                }
                let sigma = match positive(&kv, "sigma_sq")? {
                    Some(_) if kv.contains("sigma_grid") => {
                        return Err(kv.error_at("sigma_grid", "set either `sigma_sq` or `sigma_grid`, not both"))
                    }
                    Some(s) => SigmaPolicy::Fixed(s),
                    None => SigmaPolicy::Select(sigma_grid(&kv)?),
                };
                Kind::DoubleDescent {
                    source,
                    n_grid: kv.get_list("n_grid")?,
                    seeds: seeds(&kv)?,
                    sigma,
                }
            }
            "evaluate-one" => {
                kv.reject_unknown(&allowed(&["dataset", "row", "sigma_sq", "seed", "trainset_cap"]))?;
                Kind::EvaluateOne(EvaluateOne {
                    dataset: kv.get_required("dataset")?,
                    row: kv.get_required("row")?,
                    sigma_sq: positive(&kv, "sigma_sq")?.ok_or_else(|| kv.require("sigma_sq").unwrap_err())?,
                    seed: kv.get_or("seed", 0)?,
                    trainset_cap: kv.get("trainset_cap")?,
                })
            }
            other => return Err(kv.error_at("kind", format!("unknown kind `{other}`"))),
        };
        Ok(Self {
            kind,
            kind_name,
            output: kv.get::<String>("output")?.map(PathBuf::from),
            registry: kv.get::<String>("registry")?.map(PathBuf::from),
            quad: quad(&kv)?,
            raw: kv.keys().map(|k| (k.to_string(), kv.raw(k).unwrap_or_default().to_string())).collect(),
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let (_, text) = KeyValues::read(path)?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths inside a config resolve against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.registry = cfg.registry.map(|p| base.join(p));
        Ok(cfg)
    }

    fn seeds(&self) -> Vec<u64> {
        match &self.kind {
            Kind::Synthetic(_) => Vec::new(),
            Kind::Threshold { seeds, .. } | Kind::DoubleDescent { seeds, .. } => seeds.clone(),
            Kind::EvaluateOne(e) => vec![e.seed],
        }
    }
}

/// Registry location: explicit path, then `$PNML_DATA_DIR/registry.txt`, then `data/registry.txt`.
pub fn resolve_registry(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os("PNML_DATA_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join("registry.txt"),
        _ => PathBuf::from("data/registry.txt"),
    }
}

/// Named CSV tables produced by one run, plus the manifest describing it.
pub struct RunOutput {
    pub tables: Vec<(String, Table)>,
    pub manifest: Manifest,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

fn f(v: f64) -> Cell {
    Cell::Float(v)
}

pub fn execute(cfg: &RunConfig, registry_path: &Path, workers: usize) -> Result<RunOutput, RunError> {
    let registry = || Registry::load(registry_path).map_err(RunError::from);
    let mut tables = Vec::new();
    let mut summary = Vec::new();
    match &cfg.kind {
        Kind::Synthetic(syn) => {
            let out = experiments::run_synthetic(syn, &cfg.quad, workers)?;
            let mut grid = Table::new(&["t", "M", "prediction", "regret", "bound", "mn_norm", "pnml_mean"]);
            for r in &out.rows {
                grid.push(vec![f(r.t), r.m.into(), f(r.prediction), f(r.regret), f(r.bound), f(r.mn_norm), f(r.pnml_mean)]);
            }
            let mut fits = Table::new(&["M", "rank", "mn_norm", "max_train_residual", "max_train_regret"]);
            for fit in &out.fits {
                let max_regret = fit.train_regrets.iter().copied().fold(0.0, f64::max);
                fits.push(vec![fit.m.into(), fit.rank.into(), f(fit.mn_norm), f(fit.max_train_residual), f(max_regret)]);
                summary.push(format!(
                    "M={} rank={} mn_norm={:.6} max_train_residual={:.3e}",
                    fit.m, fit.rank, fit.mn_norm, fit.max_train_residual
                ));
            }
            tables.push(("regret_grid.csv".into(), grid));
            tables.push(("synthetic_fits.csv".into(), fits));
        }
        Kind::Threshold {
            dataset,
            seeds,
            sigma_grid,
            trainset_cap,
        } => {
            let raw = registry()?.load_dataset(dataset)?;
            let splits: Vec<SplitSpec> = seeds
                .iter()
                .map(|&s| match trainset_cap {
                    Some(c) => SplitSpec::standard(s).with_cap(*c),
                    None => SplitSpec::standard(s),
                })
                .collect();
            let runs = experiments::run_threshold_eval(&raw, &splits, sigma_grid, &cfg.quad, workers)?;
            let mut curve = Table::new(&["dataset", "seed", "threshold", "cdf", "pnml_logloss", "mn_logloss"]);
            let mut per_seed = Table::new(&[
                "dataset",
                "seed",
                "sigma_sq_pnml",
                "sigma_sq_mn",
                "pnml_logloss_low80",
                "pnml_logloss_all",
                "mn_logloss_low80",
                "mn_logloss_all",
            ]);
            for run in &runs {
                let c = &run.curve;
                for k in 0..c.thresholds.len() {
                    curve.push(vec![
                        run.dataset.as_str().into(),
                        run.seed.into(),
                        f(c.thresholds[k]),
                        f(c.cdf_at[k]),
                        f(c.pnml_logloss_at[k]),
                        f(c.mn_logloss_at[k]),
                    ]);
                }
                per_seed.push(vec![
                    run.dataset.as_str().into(),
                    run.seed.into(),
                    f(run.sigma_sq_pnml),
                    f(run.sigma_sq_mn),
                    f(run.pnml_low80()),
                    f(run.pnml_all()),
                    f(run.mn_low80()),
                    f(run.mn_all()),
                ]);
            }
            let col = |g: fn(&experiments::ThresholdRun) -> f64| {
                experiments::mean_ci95(&runs.iter().map(g).collect::<Vec<_>>())
            };
            let stats = [
                col(|r| r.pnml_low80()),
                col(|r| r.pnml_all()),
                col(|r| r.mn_low80()),
                col(|r| r.mn_all()),
            ];
            let mut agg = Table::new(&[
                "dataset",
                "seeds",
                "pnml_logloss_low80_mean",
                "pnml_logloss_low80_ci95",
                "pnml_logloss_all_mean",
                "pnml_logloss_all_ci95",
                "mn_logloss_low80_mean",
                "mn_logloss_low80_ci95",
                "mn_logloss_all_mean",
                "mn_logloss_all_ci95",
            ]);
            let mut row: Vec<Cell> = vec![dataset.as_str().into(), runs.len().into()];
            row.extend(stats.iter().flat_map(|&(m, h)| [f(m), f(h)]));
            agg.push(row);
            summary.push(format!(
                "{dataset}: pNML logloss lowest-regret 80% {:.4} vs all {:.4} over {} seeds",
                stats[0].0,
                stats[1].0,
                runs.len()
            ));
            tables.push(("threshold_curve.csv".into(), curve));
            tables.push(("threshold_summary.csv".into(), per_seed));
            tables.push(("threshold_aggregate.csv".into(), agg));
        }
        Kind::DoubleDescent {
            source,
            n_grid,
            seeds,
            sigma,
        } => {
            let raw;
            let dataset_source;
            let src: &dyn SweepSource = match source {
                SweepKind::Dataset(name) => {
                    raw = registry()?.load_dataset(name)?;
                    dataset_source = DatasetSweep { raw: &raw };
                    &dataset_source
                }
                SweepKind::Linear(l) => l,
            };
            let grid = n_grid.clone().unwrap_or_else(|| default_n_grid(src.n_features(), src.pool_size()));
            if let Some(&too_big) = grid.iter().find(|&&n| n > src.pool_size()) {
                return Err(RunError::Validation(format!(
                    "training size {too_big} exceeds the pool of {} rows",
                    src.pool_size()
                )));
            }
            let records = experiments::run_double_descent(src, &grid, seeds, sigma, &cfg.quad, workers)?;
            let mut table = Table::new(&[
                "dataset",
                "n_train",
                "m_over_n",
                "seed",
                "pnml_logloss",
                "mn_logloss",
                "regret",
                "bound",
                "sigma_sq_pnml",
                "sigma_sq_mn",
            ]);
            for r in &records {
                table.push(vec![
                    r.dataset.as_str().into(),
                    r.n_train.into(),
                    f(r.m_over_n),
                    r.seed.into(),
                    f(r.test_logloss_pnml),
                    f(r.test_logloss_mn),
                    f(r.mean_regret),
                    f(r.mean_regret_bound),
                    f(r.sigma_sq_selected),
                    f(r.sigma_sq_mn),
                ]);
            }
            let mut agg = Table::new(&[
                "dataset",
                "n_train",
                "m_over_n",
                "seeds",
                "pnml_logloss_mean",
                "pnml_logloss_ci95",
                "mn_logloss_mean",
                "mn_logloss_ci95",
                "regret_mean",
                "regret_ci95",
                "bound_mean",
                "bound_ci95",
            ]);
            for p in aggregate(&records) {
                let mut row: Vec<Cell> = vec![p.dataset.as_str().into(), p.n_train.into(), f(p.m_over_n), p.seeds.into()];
                row.extend([p.pnml_logloss, p.mn_logloss, p.regret, p.bound].iter().flat_map(|&(m, h)| [f(m), f(h)]));
                agg.push(row);
                summary.push(format!(
                    "N={:<5} M/N={:<8.4} regret={:.4} bound={:.4} pnml={:.4} mn={:.4}",
                    p.n_train, p.m_over_n, p.regret.0, p.bound.0, p.pnml_logloss.0, p.mn_logloss.0
                ));
            }
            tables.push(("double_descent.csv".into(), table));
            tables.push(("double_descent_aggregate.csv".into(), agg));
        }
        Kind::EvaluateOne(e) => {
            let report = evaluate_one(&registry()?, e, &cfg.quad)?;
            summary.extend(report_lines(&report));
            let mut t = Table::new(&["y_true", "mn_prediction", "k_factor", "regret", "bound", "x_orth_sq", "lambda_y"]);
            t.push(vec![
                f(report.y_true),
                f(report.mn_prediction),
                f(report.k_factor),
                f(report.regret),
                f(report.regret_bound),
                f(report.x_orth_sq),
                f(report.lambda_y.unwrap_or(f64::NAN)),
            ]);
            tables.push(("evaluate_one.csv".into(), t));
        }
    }
    let manifest = Manifest {
        tool: "pnml",
        version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind_name.clone(),
        config_sha256: cfg.sha256.clone(),
        config: cfg.raw.clone(),
        seeds: cfg.seeds(),
        outputs: Vec::new(),
    };
    Ok(RunOutput {
        tables,
        manifest,
        summary,
    })
}

/// Fits on the train partition of `seed` and evaluates test row `row`.
pub fn evaluate_one(registry: &Registry, e: &EvaluateOne, quad: &QuadConfig) -> Result<SampleReport, RunError> {
    let raw = registry.load_dataset(&e.dataset)?;
    let spec = match e.trainset_cap {
        Some(c) => SplitSpec::standard(e.seed).with_cap(c),
        None => SplitSpec::standard(e.seed),
    };
    let view = data::split(&raw, &spec)?;
    if e.row >= view.test_y.len() {
        return Err(RunError::Validation(format!(
            "row {} is outside the test partition of {} rows",
            e.row,
            view.test_y.len()
        )));
    }
    let design = DesignMatrix::new(view.train_x.clone(), view.train_y.clone())
        .map_err(|err| RunError::Runtime(format!("dataset={} fit: {err}", e.dataset)))?;
    let x = view.test_x.row(e.row).transpose();
    experiments::evaluate_sample(&design, &x, view.test_y[e.row], e.sigma_sq, quad)
        .map_err(|err| RunError::Runtime(format!("dataset={} test_row={}: {err}", e.dataset, e.row)))
}

pub fn report_lines(r: &SampleReport) -> Vec<String> {
    let lambda = r.lambda_y.map_or_else(|| "n/a (closed form)".to_string(), |l| format!("{l:.6e}"));
    vec![
        format!("y_true        {:.6}", r.y_true),
        format!("mn_prediction {:.6}", r.mn_prediction),
        format!("K             {:.6}", r.k_factor),
        format!("regret        {:.6}", r.regret),
        format!("bound         {:.6}", r.regret_bound),
        format!("x_orth_sq     {:.6e}", r.x_orth_sq),
        format!("lambda_y      {lambda}"),
        format!("branch        {:?}", r.branch),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_dataset_is_a_validation_error() {
        let err = RunConfig::parse("kind = double-descent\nseed_count = 2\n").unwrap_err();
        assert!(err.message.contains("dataset"), "{err}");
        let err = RunConfig::parse("kind = threshold\ndataset = boston\nsigma_grid = 1, -2\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = RunConfig::parse("kind = synthetic\ntypo = 1\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn parses_defaults_and_overrides() {
        let cfg = RunConfig::parse(
            "kind = double-descent\nsource = linear\nlinear.features = 8\nsigma_sq = 0.25\nseeds = 3, 4\nquad.initial_points = 1025\n",
        )
        .unwrap();
        assert_eq!(cfg.quad.initial_points, 1025);
        match cfg.kind {
            Kind::DoubleDescent {
                source: SweepKind::Linear(l),
                seeds,
                sigma,
                ..
            } => {
                assert_eq!((l.pool, l.noise_var), (64, 0.25));
                assert_eq!(seeds, vec![3, 4]);
                assert_eq!(sigma, SigmaPolicy::Fixed(0.25));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = RunConfig::parse("kind = threshold\ndataset = x\nseeds = 1\nseed_count = 3\n").unwrap_err();
        assert_eq!(err.line, Some(4));
    }
}
