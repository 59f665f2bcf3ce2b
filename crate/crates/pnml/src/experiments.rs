//! Experiment protocols: the cosine-feature study, regret-thresholded test
//! performance, the training-size sweep, and σ² selection.

use std::f64::consts::PI;

use pnml_core::{
    genie_density, mn_solve, pnml_evaluate, solve_lambda_for_label, Branch, DMatrix, DVector, DesignMatrix, MnModel,
    PnmlEvaluation, QuadConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{self, DataError, Partition, RawDataset, SplitSpec, StandardizedView, Standardizer};
use crate::pool::parallel_map;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("numeric failure at {coordinate}: {source}")]
    Numeric {
        coordinate: String,
        #[source]
        source: pnml_core::Error,
    },
}

fn numeric(coordinate: impl FnOnce() -> String) -> impl FnOnce(pnml_core::Error) -> ExperimentError {
    move |source| ExperimentError::Numeric {
        coordinate: coordinate(),
        source,
    }
}

/// `x_m = cos(π m t + π m / 2)` for `m = 0..M`.
pub fn cosine_features(t: f64, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |k, _| {
        let k = k as f64;
        (PI * k * t + 0.5 * PI * k).cos()
    })
}

/// Mean of the normalized density stored on an evaluation grid.
pub fn grid_mean(eval: &PnmlEvaluation) -> f64 {
    eval.density_grid
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].0 * w[0].1 + w[1].0 * w[1].1))
        .sum::<f64>()
        / eval.grid_mass()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    Pnml,
    Mn,
}

/// Test-time quantities for one labelled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub regret: f64,
    pub bound: f64,
    pub pnml_logloss: f64,
    pub mn_logloss: f64,
}

fn gaussian_logloss(residual: f64, sigma_sq: f64) -> f64 {
    0.5 * (2.0 * PI * sigma_sq).ln() + residual * residual / (2.0 * sigma_sq)
}

/// pNML evaluation at `x` plus `−log q_pNML(y|x)`, where `q = p_θ̂(y|x)/K`.
pub fn pnml_logloss(
    design: &DesignMatrix,
    mn: &MnModel,
    x: &DVector<f64>,
    y: f64,
    sigma_sq: f64,
    quad: &QuadConfig,
) -> pnml_core::Result<(PnmlEvaluation, f64)> {
    let eval = pnml_evaluate(design, mn, x, sigma_sq, quad)?;
    let density = genie_density(design, mn, x, y, sigma_sq)?;
    // Work in logs: far-tail labels underflow the density itself.
    let log_density = if density > 0.0 {
        density.ln()
    } else {
        let residual = match eval.branch {
            Branch::RowSpace => (y - eval.mn_prediction) / eval.k0,
            Branch::ZeroNorm => y,
            Branch::Quadrature => {
                solve_lambda_for_label(design, mn, x, y, sigma_sq, quad.lambda_tol)?.residual
            }
        };
        -gaussian_logloss(residual, sigma_sq)
    };
    Ok((eval.clone(), eval.k_factor.ln() - log_density))
}

pub fn score_sample(
    design: &DesignMatrix,
    mn: &MnModel,
    x: &DVector<f64>,
    y: f64,
    sigma_sq_pnml: f64,
    sigma_sq_mn: f64,
    quad: &QuadConfig,
) -> pnml_core::Result<SampleScore> {
    let (eval, pnml_logloss) = pnml_logloss(design, mn, x, y, sigma_sq_pnml, quad)?;
    Ok(SampleScore {
        regret: eval.regret,
        bound: eval.regret_bound,
        pnml_logloss,
        mn_logloss: gaussian_logloss(y - mn.predict(x), sigma_sq_mn),
    })
}

fn row(x: &DMatrix<f64>, i: usize) -> DVector<f64> {
    x.row(i).transpose()
}

/// `count` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default σ² candidates: 30 log-spaced values on `[1e-4, 1e2]`.
pub fn default_sigma_grid() -> Vec<f64> {
    log_grid(1e-4, 1e2, 30)
}

/// Mean validation logloss per candidate σ².
pub fn validation_losses(
    view: &StandardizedView,
    candidates: &[f64],
    learner: Learner,
    quad: &QuadConfig,
) -> Result<Vec<f64>, ExperimentError> {
    let design = DesignMatrix::new(view.train_x.clone(), view.train_y.clone())
        .map_err(numeric(|| format!("dataset={} fit", view.name)))?;
    let mn = mn_solve(&design);
    let n_val = view.validation_y.len();
    if n_val == 0 {
        return Err(ExperimentError::Invalid("validation partition is empty".into()));
    }
    let mut losses = Vec::with_capacity(candidates.len());
    for &sigma_sq in candidates {
        let mut total = 0.0;
        for i in 0..n_val {
            let x = row(&view.validation_x, i);
            let y = view.validation_y[i];
            total += match learner {
                Learner::Mn => gaussian_logloss(y - mn.predict(&x), sigma_sq),
                Learner::Pnml => {
                    pnml_logloss(&design, &mn, &x, y, sigma_sq, quad)
                        .map_err(numeric(|| {
                            format!("dataset={} sigma_sq={sigma_sq} validation_row={i}", view.name)
                        }))?
                        .1
                }
            };
        }
        losses.push(total / n_val as f64);
    }
    Ok(losses)
}

/// The candidate minimizing mean validation logloss; exact ties go to the larger σ².
pub fn select_sigma_sq(
    view: &StandardizedView,
    candidates: &[f64],
    learner: Learner,
    quad: &QuadConfig,
) -> Result<f64, ExperimentError> {
    if candidates.is_empty() {
        return Err(ExperimentError::Invalid("σ² grid is empty".into()));
    }
    if candidates.iter().any(|s| !(*s > 0.0)) {
        return Err(ExperimentError::Invalid("σ² candidates must be positive".into()));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let losses = validation_losses(view, candidates, learner, quad)?;
    pick_min(candidates, &losses).ok_or_else(|| ExperimentError::Invalid("no σ² candidate gave a finite logloss".into()))
}

fn pick_min(candidates: &[f64], losses: &[f64]) -> Option<f64> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]));
    let mut best: Option<(f64, f64)> = None;
    for i in order {
        let loss = losses[i];
        if !loss.is_finite() {
            continue;
        }
        if best.map_or(true, |(b, _)| loss <= b) {
            best = Some((loss, candidates[i]));
        }
    }
    best.map(|(_, s)| s)
}

// ---------------------------------------------------------------------------
// Cosine-feature study

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub train_points: Vec<(f64, f64)>,
    pub model_degrees: Vec<usize>,
    /// Number of equally spaced `t` values on `[0, 1]`.
    pub eval_grid: usize,
    pub sigma_sq: f64,
    /// Permit degrees that do not exceed the number of training points.
    pub allow_under_parameterized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRow {
    pub t: f64,
    pub m: usize,
    /// MN prediction, which is also the mode of `q_pNML`.
    pub prediction: f64,
    /// Mean of `q_pNML` on its label grid.
    pub pnml_mean: f64,
    pub regret: f64,
    pub bound: f64,
    pub mn_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFit {
    pub m: usize,
    pub rank: usize,
    pub mn_norm: f64,
    pub max_train_residual: f64,
    /// Regret evaluated at each training abscissa, in input order.
    pub train_regrets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOutcome {
    pub rows: Vec<SyntheticRow>,
    pub fits: Vec<SyntheticFit>,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if self.train_points.is_empty() {
            return invalid("at least one training point is required");
        }
        if self.train_points.iter().any(|(t, y)| !(0.0..=1.0).contains(t) || !y.is_finite()) {
            return invalid("training abscissae must lie in [0, 1] with finite labels");
        }
        if self.eval_grid < 2 {
            return invalid("eval_grid must be at least 2");
        }
        if !(self.sigma_sq > 0.0) {
            return invalid("sigma_sq must be positive");
        }
        if self.model_degrees.is_empty() || self.model_degrees.contains(&0) {
            return invalid("model degrees must be positive");
        }
        let n = self.train_points.len();
        if !self.allow_under_parameterized && self.model_degrees.iter().any(|&m| m <= n) {
            return invalid("every model degree must exceed the number of training points");
        }
        Ok(())
    }
}

pub fn run_synthetic(cfg: &SyntheticConfig, quad: &QuadConfig, workers: usize) -> Result<SyntheticOutcome, ExperimentError> {
    cfg.validate()?;
    let ts: Vec<f64> = (0..cfg.eval_grid)
        .map(|k| k as f64 / (cfg.eval_grid - 1) as f64)
        .collect();
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for &m in &cfg.model_degrees {
        let n = cfg.train_points.len();
        let x = DMatrix::from_fn(n, m, |i, j| cosine_features(cfg.train_points[i].0, m)[j]);
        let y = DVector::from_iterator(n, cfg.train_points.iter().map(|p| p.1));
        let design = DesignMatrix::new(x, y).map_err(numeric(|| format!("synthetic M={m} fit")))?;
        let mn = mn_solve(&design);
        let mn_norm = mn.norm_sq().sqrt();
        let max_train_residual = cfg
            .train_points
            .iter()
            .map(|&(t, y)| (mn.predict(&cosine_features(t, m)) - y).abs())
            .fold(0.0, f64::max);

        let evaluate = |t: &f64| {
            pnml_evaluate(&design, &mn, &cosine_features(*t, m), cfg.sigma_sq, quad)
                .map_err(numeric(|| format!("synthetic M={m} t={t}")))
        };
        let evals = parallel_map(&ts, workers, evaluate)?;
        for (t, eval) in ts.iter().zip(&evals) {
            rows.push(SyntheticRow {
                t: *t,
                m,
                prediction: eval.mn_prediction,
                pnml_mean: grid_mean(eval),
                regret: eval.regret,
                bound: eval.regret_bound,
                mn_norm,
            });
        }
        let train_ts: Vec<f64> = cfg.train_points.iter().map(|p| p.0).collect();
        let train_regrets = parallel_map(&train_ts, workers, evaluate)?
            .into_iter()
            .map(|e| e.regret)
            .collect();
        fits.push(SyntheticFit {
            m,
            rank: design.rank(),
            mn_norm,
            max_train_residual,
            train_regrets,
        });
    }
    Ok(SyntheticOutcome { rows, fits })
}

// ---------------------------------------------------------------------------
// Regret thresholding

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub thresholds: Vec<f64>,
    pub pnml_logloss_at: Vec<f64>,
    pub mn_logloss_at: Vec<f64>,
    pub cdf_at: Vec<f64>,
}

/// Running means over test samples ordered by regret, one point per distinct regret.
pub fn threshold_curve(scores: &[SampleScore]) -> ThresholdCurve {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].regret.total_cmp(&scores[b].regret).then(a.cmp(&b)));
    let total = scores.len() as f64;
    let mut curve = ThresholdCurve {
        thresholds: Vec::new(),
        pnml_logloss_at: Vec::new(),
        mn_logloss_at: Vec::new(),
        cdf_at: Vec::new(),
    };
    let (mut sum_p, mut sum_m) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        sum_p += scores[i].pnml_logloss;
        sum_m += scores[i].mn_logloss;
        let last_of_value = order
            .get(k + 1)
            .map_or(true, |&j| scores[j].regret != scores[i].regret);
        if last_of_value {
            let count = (k + 1) as f64;
            curve.thresholds.push(scores[i].regret);
            curve.pnml_logloss_at.push(sum_p / count);
            curve.mn_logloss_at.push(sum_m / count);
            curve.cdf_at.push(count / total);
        }
    }
    curve
}

/// Mean logloss of the `round(fraction · T)` lowest-regret samples (at least one).
pub fn lowest_regret_mean(scores: &[SampleScore], fraction: f64, learner: Learner) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].regret.total_cmp(&scores[b].regret).then(a.cmp(&b)));
    let keep = ((scores.len() as f64 * fraction).round() as usize).clamp(1, scores.len());
    let pick = |s: &SampleScore| match learner {
        Learner::Pnml => s.pnml_logloss,
        Learner::Mn => s.mn_logloss,
    };
    order[..keep].iter().map(|&i| pick(&scores[i])).sum::<f64>() / keep as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRun {
    pub dataset: String,
    pub seed: u64,
    pub sigma_sq_pnml: f64,
    pub sigma_sq_mn: f64,
    pub scores: Vec<SampleScore>,
    pub curve: ThresholdCurve,
}

impl ThresholdRun {
    pub fn pnml_low80(&self) -> f64 {
        lowest_regret_mean(&self.scores, 0.8, Learner::Pnml)
    }

    pub fn pnml_all(&self) -> f64 {
        lowest_regret_mean(&self.scores, 1.0, Learner::Pnml)
    }

    pub fn mn_low80(&self) -> f64 {
        lowest_regret_mean(&self.scores, 0.8, Learner::Mn)
    }

    pub fn mn_all(&self) -> f64 {
        lowest_regret_mean(&self.scores, 1.0, Learner::Mn)
    }
}

pub fn threshold_eval_view(
    view: &StandardizedView,
    seed: u64,
    sigma_grid: &[f64],
    quad: &QuadConfig,
) -> Result<ThresholdRun, ExperimentError> {
    let sigma_sq_pnml = select_sigma_sq(view, sigma_grid, Learner::Pnml, quad)?;
    let sigma_sq_mn = select_sigma_sq(view, sigma_grid, Learner::Mn, quad)?;
    let design = DesignMatrix::new(view.train_x.clone(), view.train_y.clone())
        .map_err(numeric(|| format!("dataset={} seed={seed} fit", view.name)))?;
    let mn = mn_solve(&design);
    let scores = (0..view.test_y.len())
        .map(|i| {
            score_sample(&design, &mn, &row(&view.test_x, i), view.test_y[i], sigma_sq_pnml, sigma_sq_mn, quad)
                .map_err(numeric(|| format!("dataset={} seed={seed} test_row={i}", view.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ThresholdRun {
        dataset: view.name.clone(),
        seed,
        sigma_sq_pnml,
        sigma_sq_mn,
        curve: threshold_curve(&scores),
        scores,
    })
}

pub fn run_threshold_eval(
    raw: &RawDataset,
    splits: &[SplitSpec],
    sigma_grid: &[f64],
    quad: &QuadConfig,
    workers: usize,
) -> Result<Vec<ThresholdRun>, ExperimentError> {
    parallel_map(splits, workers, |spec| {
        let view = data::split(raw, spec)?;
        threshold_eval_view(&view, spec.seed, sigma_grid, quad)
    })
}

// ---------------------------------------------------------------------------
// Training-size sweep

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub dataset: String,
    pub m_over_n: f64,
    pub n_train: usize,
    pub seed: u64,
    pub test_logloss_pnml: f64,
    pub test_logloss_mn: f64,
    pub mean_regret: f64,
    pub mean_regret_bound: f64,
    pub sigma_sq_selected: f64,
    pub sigma_sq_mn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaPolicy {
    Fixed(f64),
    /// Select per learner on the validation rows of every split.
    Select(Vec<f64>),
}

/// Geometric grid of 12 sizes from `max(2, M/8)` to `min(8M, pool)`, rounded,
/// deduplicated and with `M` itself inserted when the pool allows it.
pub fn default_n_grid(m: usize, pool: usize) -> Vec<usize> {
    let lo = (m as f64 / 8.0).max(2.0);
    let hi = ((8 * m).min(pool)) as f64;
    let mut grid: Vec<usize> = if hi <= lo {
        vec![hi.round() as usize]
    } else {
        log_grid(lo, hi, 12).into_iter().map(|v| v.round() as usize).collect()
    };
    if m <= pool {
        grid.push(m);
    }
    grid.sort_unstable();
    grid.dedup();
    grid.retain(|&n| n >= 1);
    grid
}

/// Supplies train/validation/test views for a given training size and seed.
pub trait SweepSource: Sync {
    fn name(&self) -> &str;
    fn n_features(&self) -> usize;
    fn pool_size(&self) -> usize;
    fn view(&self, n_train: usize, seed: u64) -> Result<StandardizedView, ExperimentError>;
}

/// A registered dataset; `N` is controlled through `trainset_cap`.
pub struct DatasetSweep<'a> {
    pub raw: &'a RawDataset,
}

impl SweepSource for DatasetSweep<'_> {
    fn name(&self) -> &str {
        &self.raw.name
    }

    fn n_features(&self) -> usize {
        self.raw.n_features()
    }

    fn pool_size(&self) -> usize {
        data::partition(self.raw.n_samples(), &SplitSpec::standard(0))
            .map(|p| p.train.len())
            .unwrap_or(0)
    }

    fn view(&self, n_train: usize, seed: u64) -> Result<StandardizedView, ExperimentError> {
        Ok(data::split(self.raw, &SplitSpec::standard(seed).with_cap(n_train))?)
    }
}

/// Linear data `y = xᵀθ + ε` with `x ~ N(0, I)`, `θ ~ N(0, I/M)` and
/// `ε ~ N(0, noise_var)`, drawn fresh per seed. Smaller training sets are
/// prefixes of larger ones for the same seed. Features and targets are used as drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSweep {
    pub n_features: usize,
    pub noise_var: f64,
    pub pool: usize,
    pub validation: usize,
    pub test: usize,
}

impl LinearSweep {
    fn draw(&self, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.n_features;
        let theta = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal) / (m as f64).sqrt());
        let total = self.pool + self.validation + self.test;
        let x = DMatrix::from_fn(total, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise_sd = self.noise_var.sqrt();
        let y = DVector::from_fn(total, |i, _| {
            x.row(i).transpose().dot(&theta) + noise_sd * rng.sample::<f64, _>(StandardNormal)
        });
        (x, y)
    }
}

impl SweepSource for LinearSweep {
    fn name(&self) -> &str {
        "linear"
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn pool_size(&self) -> usize {
        self.pool
    }

    fn view(&self, n_train: usize, seed: u64) -> Result<StandardizedView, ExperimentError> {
        if n_train == 0 || n_train > self.pool {
            return Err(ExperimentError::Invalid(format!("training size {n_train} outside 1..={}", self.pool)));
        }
        let (x, y) = self.draw(seed);
        let m = self.n_features;
        let val_start = self.pool;
        let test_start = self.pool + self.validation;
        let rows = |r: std::ops::Range<usize>| r.collect::<Vec<_>>();
        let partition = Partition {
            train: rows(0..n_train),
            validation: rows(val_start..test_start),
            test: rows(test_start..test_start + self.test),
        };
        let pick = |idx: &[usize]| DMatrix::from_fn(idx.len(), m, |i, j| x[(idx[i], j)]);
        let pick_y = |idx: &[usize]| DVector::from_fn(idx.len(), |i, _| y[idx[i]]);
        Ok(StandardizedView {
            name: "linear".into(),
            train_x: pick(&partition.train),
            train_y: pick_y(&partition.train),
            validation_x: pick(&partition.validation),
            validation_y: pick_y(&partition.validation),
            test_x: pick(&partition.test),
            test_y: pick_y(&partition.test),
            features: Standardizer {
                mean: DVector::zeros(m),
                std: DVector::from_element(m, 1.0),
            },
            target_mean: 0.0,
            target_std: 1.0,
            partition,
        })
    }
}

pub fn run_double_descent(
    source: &dyn SweepSource,
    n_grid: &[usize],
    seeds: &[u64],
    sigma: &SigmaPolicy,
    quad: &QuadConfig,
    workers: usize,
) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    if n_grid.iter().any(|&n| n < 1) {
        return Err(ExperimentError::Invalid("training sizes must be at least 1".into()));
    }
    if seeds.is_empty() || n_grid.is_empty() {
        return Err(ExperimentError::Invalid("the sweep needs at least one size and one seed".into()));
    }
    let items: Vec<(usize, u64)> = n_grid.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let m = source.n_features();
    let mut records = parallel_map(&items, workers, |&(n, seed)| {
        let view = source.view(n, seed)?;
        let (sigma_sq_pnml, sigma_sq_mn) = match sigma {
            SigmaPolicy::Fixed(s) => (*s, *s),
            SigmaPolicy::Select(grid) => (
                select_sigma_sq(&view, grid, Learner::Pnml, quad)?,
                select_sigma_sq(&view, grid, Learner::Mn, quad)?,
            ),
        };
        let design = DesignMatrix::new(view.train_x.clone(), view.train_y.clone())
            .map_err(numeric(|| format!("dataset={} n_train={n} seed={seed} fit", source.name())))?;
        let mn = mn_solve(&design);
        let t = view.test_y.len();
        let mut sums = [0.0; 4];
        for i in 0..t {
            let s = score_sample(&design, &mn, &row(&view.test_x, i), view.test_y[i], sigma_sq_pnml, sigma_sq_mn, quad)
                .map_err(numeric(|| format!("dataset={} n_train={n} seed={seed} test_row={i}", source.name())))?;
            for (acc, v) in sums.iter_mut().zip([s.pnml_logloss, s.mn_logloss, s.regret, s.bound]) {
                *acc += v;
            }
        }
        let t = t as f64;
        Ok::<_, ExperimentError>(ExperimentRecord {
            dataset: source.name().to_string(),
            m_over_n: m as f64 / n as f64,
            n_train: n,
            seed,
            test_logloss_pnml: sums[0] / t,
            test_logloss_mn: sums[1] / t,
            mean_regret: sums[2] / t,
            mean_regret_bound: sums[3] / t,
            sigma_sq_selected: sigma_sq_pnml,
            sigma_sq_mn,
        })
    })?;
    records.sort_by(|a, b| a.dataset.cmp(&b.dataset).then(a.n_train.cmp(&b.n_train)).then(a.seed.cmp(&b.seed)));
    Ok(records)
}

/// Mean and normal-approximation 95% half-width `1.96·s/√n` (zero for one value).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub dataset: String,
    pub n_train: usize,
    pub m_over_n: f64,
    pub seeds: usize,
    /// `(mean, ci95)` pairs.
    pub pnml_logloss: (f64, f64),
    pub mn_logloss: (f64, f64),
    pub regret: (f64, f64),
    pub bound: (f64, f64),
}

/// Aggregates records across seeds, one point per `(dataset, N)`, in ascending `N`.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SweepPoint> {
    let mut keys: Vec<(String, usize)> = records.iter().map(|r| (r.dataset.clone(), r.n_train)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(dataset, n)| {
            let group: Vec<&ExperimentRecord> = records.iter().filter(|r| r.dataset == dataset && r.n_train == n).collect();
            let col = |f: fn(&ExperimentRecord) -> f64| mean_ci95(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            SweepPoint {
                m_over_n: group[0].m_over_n,
                seeds: group.len(),
                pnml_logloss: col(|r| r.test_logloss_pnml),
                mn_logloss: col(|r| r.test_logloss_mn),
                regret: col(|r| r.mean_regret),
                bound: col(|r| r.mean_regret_bound),
                dataset,
                n_train: n,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Single-sample report

#[derive(Debug, Clone, PartialEq)]
pub struct SampleReport {
    pub y_true: f64,
    pub mn_prediction: f64,
    pub k_factor: f64,
    pub regret: f64,
    pub regret_bound: f64,
    pub x_orth_sq: f64,
    /// `None` on the closed-form branch, where no norm constraint is solved.
    pub lambda_y: Option<f64>,
    pub branch: Branch,
}

pub fn evaluate_sample(
    design: &DesignMatrix,
    x: &DVector<f64>,
    y_true: f64,
    sigma_sq: f64,
    quad: &QuadConfig,
) -> pnml_core::Result<SampleReport> {
    let mn = mn_solve(design);
    let eval = pnml_evaluate(design, &mn, x, sigma_sq, quad)?;
    let lambda_y = match eval.branch {
        Branch::Quadrature | Branch::ZeroNorm => {
            Some(solve_lambda_for_label(design, &mn, x, y_true, sigma_sq, quad.lambda_tol)?.lambda_y)
        }
        Branch::RowSpace => None,
    };
    Ok(SampleReport {
        y_true,
        mn_prediction: eval.mn_prediction,
        k_factor: eval.k_factor,
        regret: eval.regret,
        regret_bound: eval.regret_bound,
        x_orth_sq: eval.x_orth_sq,
        lambda_y,
        branch: eval.branch,
    })
}
