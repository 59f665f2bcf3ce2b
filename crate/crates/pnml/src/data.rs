//! Dataset ingestion, the dataset registry, seeded splits and standardization.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pnml_core::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: target column `{column}` not found")]
    MissingTarget { path: PathBuf, column: String },
    #[error("{path}: no usable rows ({dropped} dropped)")]
    Empty { path: PathBuf, dropped: usize },
    #[error("dataset `{name}`: expected {expected_rows}×{expected_features}, ingested {rows}×{features}")]
    ShapeMismatch {
        name: String,
        expected_rows: usize,
        expected_features: usize,
        rows: usize,
        features: usize,
    },
    #[error("registry: {0}")]
    Registry(#[from] ConfigError),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// A numeric dataset after row dropping.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub name: String,
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub feature_names: Vec<String>,
    /// Rows skipped because a cell was missing or not a finite number.
    pub dropped_rows: usize,
}

impl RawDataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Column name when `header` is set, otherwise a zero-based index.
    pub target_column: String,
    pub delimiter: u8,
    pub header: bool,
    /// Columns dropped before ingestion (same addressing as `target_column`).
    pub exclude: Vec<String>,
}

impl CsvOptions {
    pub fn new(target_column: impl Into<String>) -> Self {
        Self {
            target_column: target_column.into(),
            delimiter: b',',
            header: true,
            exclude: Vec::new(),
        }
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn load_csv(path: &Path, name: &str, opts: &CsvOptions) -> Result<RawDataset, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };

    let names: Option<Vec<String>> = if opts.header {
        Some(reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let locate = |column: &str, width: usize| -> Option<usize> {
        match &names {
            Some(names) => names.iter().position(|n| n == column),
            None => column.parse::<usize>().ok().filter(|&i| i < width),
        }
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut layout: Option<(usize, Vec<usize>)> = None;
    let mut width = names.as_ref().map(Vec::len);
    let mut dropped = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let w = *width.get_or_insert(record.len());
        if layout.is_none() {
            let target = locate(&opts.target_column, w).ok_or_else(|| DataError::MissingTarget {
                path: path.to_path_buf(),
                column: opts.target_column.clone(),
            })?;
            let excluded: Vec<usize> = opts.exclude.iter().filter_map(|c| locate(c, w)).collect();
            let keep = (0..w).filter(|i| *i != target && !excluded.contains(i)).collect();
            layout = Some((target, keep));
        }
        let (target, keep) = layout.as_ref().expect("layout set above");
        let parsed: Option<Vec<f64>> = std::iter::once(*target)
            .chain(keep.iter().copied())
            .map(|i| record.get(i).and_then(parse_cell))
            .collect();
        match parsed {
            Some(values) => rows.push(values),
            None => dropped += 1,
        }
    }

    let Some((_, keep)) = layout else {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
            dropped,
        });
    };
    if rows.is_empty() {
        return Err(DataError::Empty {
            path: path.to_path_buf(),
            dropped,
        });
    }
    let m = keep.len();
    let features = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j + 1]);
    let targets = DVector::from_fn(rows.len(), |i, _| rows[i][0]);
    let feature_names = match &names {
        Some(names) => keep.iter().map(|&i| names[i].clone()).collect(),
        None => keep.iter().map(|i| format!("x{i}")).collect(),
    };
    Ok(RawDataset {
        name: name.to_string(),
        features,
        targets,
        feature_names,
        dropped_rows: dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub title: String,
    pub path: PathBuf,
    pub csv: CsvOptionsSpec,
    pub rows: usize,
    pub features: usize,
}

/// Serializable mirror of [`CsvOptions`] as stored in the registry.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptionsSpec {
    pub target: String,
    pub delimiter: u8,
    pub header: bool,
    pub exclude: Vec<String>,
}

impl DatasetEntry {
    pub fn is_available(&self) -> bool {
        self.path.is_file()
    }

    pub fn load(&self) -> Result<RawDataset, DataError> {
        let opts = CsvOptions {
            target_column: self.csv.target.clone(),
            delimiter: self.csv.delimiter,
            header: self.csv.header,
            exclude: self.csv.exclude.clone(),
        };
        let raw = load_csv(&self.path, &self.name, &opts)?;
        if raw.n_samples() != self.rows || raw.n_features() != self.features {
            return Err(DataError::ShapeMismatch {
                name: self.name.clone(),
                expected_rows: self.rows,
                expected_features: self.features,
                rows: raw.n_samples(),
                features: raw.n_features(),
            });
        }
        Ok(raw)
    }
}

/// Dataset manifest: `<name>.path`, `.target`, `.rows`, `.features` and the
/// optional `.title`, `.delimiter`, `.header`, `.exclude`.
#[derive(Debug, Clone)]
pub struct Registry {
    pub source: PathBuf,
    entries: BTreeMap<String, DatasetEntry>,
}

const ENTRY_KEYS: [&str; 8] = ["path", "target", "rows", "features", "title", "delimiter", "header", "exclude"];

impl Registry {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let (kv, _) = KeyValues::read(path)?;
        let root = path.parent().unwrap_or(Path::new("."));
        Self::from_key_values(&kv, root, path)
    }

    pub fn from_key_values(kv: &KeyValues, root: &Path, source: &Path) -> Result<Self, DataError> {
        let mut names: Vec<String> = Vec::new();
        for key in kv.keys() {
            let Some((name, field)) = key.split_once('.') else {
                return Err(kv.error_at(key, format!("expected `<dataset>.<field>`, found `{key}`")).into());
            };
            if !ENTRY_KEYS.contains(&field) {
                return Err(kv.error_at(key, format!("unknown field `{field}`")).into());
            }
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }

        let mut entries = BTreeMap::new();
        for name in names {
            let key = |field: &str| format!("{name}.{field}");
            let delimiter = match kv.raw(&key("delimiter")) {
                None => b',',
                Some("\\t") | Some("tab") => b'\t',
                Some(d) if d.len() == 1 => d.as_bytes()[0],
                Some(d) => {
                    return Err(kv
                        .error_at(&key("delimiter"), format!("delimiter must be one byte, found `{d}`"))
                        .into())
                }
            };
            let exclude = kv
                .get_list::<String>(&key("exclude"))?
                .unwrap_or_default();
            let entry = DatasetEntry {
                title: kv.raw(&key("title")).unwrap_or(&name).to_string(),
                path: root.join(kv.require(&key("path"))?),
                csv: CsvOptionsSpec {
                    target: kv.require(&key("target"))?.to_string(),
                    delimiter,
                    header: kv.get_or(&key("header"), true)?,
                    exclude,
                },
                rows: kv.get_required(&key("rows"))?,
                features: kv.get_required(&key("features"))?,
                name: name.clone(),
            };
            entries.insert(name, entry);
        }
        Ok(Self {
            source: source.to_path_buf(),
            entries,
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.values()
    }

    pub fn get(&self, name: &str) -> Result<&DatasetEntry, DataError> {
        self.entries
            .get(name)
            .ok_or_else(|| DataError::UnknownDataset(name.to_string()))
    }

    pub fn load_dataset(&self, name: &str) -> Result<RawDataset, DataError> {
        self.get(name)?.load()
    }
}

/// Seeded partition of a dataset into train, validation and test rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Keep only the first `cap` training rows of the shuffle.
    pub trainset_cap: Option<usize>,
}

impl SplitSpec {
    /// 90% train pool / 10% test, with 10% of the pool held out for validation.
    pub fn standard(seed: u64) -> Self {
        Self {
            seed,
            train_fraction: 0.81,
            validation_fraction: 0.09,
            trainset_cap: None,
        }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.trainset_cap = Some(cap);
        self
    }

    fn validate(&self) -> Result<(), DataError> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !ok(self.train_fraction) || !ok(self.validation_fraction) {
            return Err(DataError::InvalidSplit("fractions must lie in (0, 1)".into()));
        }
        if self.train_fraction + self.validation_fraction >= 1.0 {
            return Err(DataError::InvalidSplit("train and validation fractions must sum to < 1".into()));
        }
        if self.trainset_cap == Some(0) {
            return Err(DataError::InvalidSplit("trainset_cap must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Row indices for `n` samples. Sizes are `round(n·train)`, `round(n·validation)`
/// and the remainder for test.
pub fn partition(n: usize, spec: &SplitSpec) -> Result<Partition, DataError> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = (n as f64 * spec.train_fraction).round() as usize;
    let n_val = (n as f64 * spec.validation_fraction).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(DataError::InvalidSplit(format!("{n} rows are too few for the requested fractions")));
    }
    let mut train = order[..n_train].to_vec();
    let validation = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    if let Some(cap) = spec.trainset_cap {
        if cap > train.len() {
            return Err(DataError::InvalidSplit(format!(
                "trainset_cap {cap} exceeds the {} available training rows",
                train.len()
            )));
        }
        train.truncate(cap);
    }
    Ok(Partition { train, validation, test })
}

/// Per-column affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    /// Population standard deviation; zero marks a constant column.
    pub std: DVector<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n);
        let std = DVector::from_fn(x.ncols(), |j, _| {
            let var = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            // Treat round-off spread on a constant column as constant.
            if sd <= 1e-12 * (1.0 + mean[j].abs()) {
                0.0
            } else {
                sd
            }
        });
        Self { mean, std }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            if self.std[j] == 0.0 {
                0.0
            } else {
                (x[(i, j)] - self.mean[j]) / self.std[j]
            }
        })
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * self.std[j] + self.mean[j])
    }
}

/// Train/validation/test partitions with features and targets z-scored on
/// training statistics.
#[derive(Debug, Clone)]
pub struct StandardizedView {
    pub name: String,
    pub partition: Partition,
    pub train_x: DMatrix<f64>,
    pub train_y: DVector<f64>,
    pub validation_x: DMatrix<f64>,
    pub validation_y: DVector<f64>,
    pub test_x: DMatrix<f64>,
    pub test_y: DVector<f64>,
    pub features: Standardizer,
    pub target_mean: f64,
    /// Training target standard deviation (1 when the training targets are constant).
    pub target_std: f64,
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn select(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| v[rows[i]])
}

pub fn split(raw: &RawDataset, spec: &SplitSpec) -> Result<StandardizedView, DataError> {
    let partition = partition(raw.n_samples(), spec)?;
    Ok(standardize(&raw.name, &raw.features, &raw.targets, partition))
}

/// Builds the view for an explicit partition.
pub fn standardize(name: &str, x: &DMatrix<f64>, y: &DVector<f64>, partition: Partition) -> StandardizedView {
    let train_raw = select_rows(x, &partition.train);
    let features = Standardizer::fit(&train_raw);
    let ty = select(y, &partition.train);
    let n = ty.len() as f64;
    let target_mean = ty.sum() / n;
    let sd = (ty.iter().map(|v| (v - target_mean).powi(2)).sum::<f64>() / n).sqrt();
    let target_std = if sd > 1e-12 * (1.0 + target_mean.abs()) { sd } else { 1.0 };
    let scale_y = |v: DVector<f64>| v.map(|t| (t - target_mean) / target_std);

    StandardizedView {
        name: name.to_string(),
        train_x: features.apply(&train_raw),
        train_y: scale_y(ty),
        validation_x: features.apply(&select_rows(x, &partition.validation)),
        validation_y: scale_y(select(y, &partition.validation)),
        test_x: features.apply(&select_rows(x, &partition.test)),
        test_y: scale_y(select(y, &partition.test)),
        features,
        target_mean,
        target_std,
        partition,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_csv() {
        let f = write_temp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let raw = load_csv(f.path(), "t", &CsvOptions::new("y")).unwrap();
        assert_eq!((raw.n_samples(), raw.n_features(), raw.dropped_rows), (3, 2, 0));
        assert_eq!(raw.targets.as_slice(), &[3.0, 6.0, 9.0]);
        assert_eq!(raw.features[(2, 1)], 8.0);
        assert_eq!(raw.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn na_row_is_dropped_and_counted() {
        let f = write_temp("a,b,y\n1,2,3\n4,NA,6\n7,8,9\n");
        let raw = load_csv(f.path(), "t", &CsvOptions::new("y")).unwrap();
        assert_eq!((raw.n_samples(), raw.dropped_rows), (2, 1));
    }

    #[test]
    fn headerless_tab_separated_with_index_target() {
        let f = write_temp("1\t2\t3\n4\t5\t6\n");
        let opts = CsvOptions {
            target_column: "0".into(),
            delimiter: b'\t',
            header: false,
            exclude: vec![],
        };
        let raw = load_csv(f.path(), "t", &opts).unwrap();
        assert_eq!(raw.targets.as_slice(), &[1.0, 4.0]);
        assert_eq!(raw.feature_names, vec!["x1", "x2"]);
    }

    #[test]
    fn ingestion_errors() {
        let f = write_temp("a,y\nNA,1\n");
        assert!(matches!(load_csv(f.path(), "t", &CsvOptions::new("y")), Err(DataError::Empty { dropped: 1, .. })));
        let f = write_temp("a,y\n1,2\n");
        assert!(matches!(load_csv(f.path(), "t", &CsvOptions::new("z")), Err(DataError::MissingTarget { .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let spec = SplitSpec {
            seed: 3,
            train_fraction: 0.8,
            validation_fraction: 0.1,
            trainset_cap: None,
        };
        let a = partition(100, &spec).unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (80, 10, 10));
        assert_eq!(a, partition(100, &spec).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_ne!(a, partition(100, &SplitSpec { seed: 4, ..spec.clone() }).unwrap());

        let capped = partition(100, &spec.clone().with_cap(7)).unwrap();
        assert_eq!(capped.train, a.train[..7]);
        assert!(partition(100, &spec.clone().with_cap(81)).is_err());
        assert!(partition(100, &SplitSpec { train_fraction: 0.95, ..spec }).is_err());
    }

    #[test]
    fn standardization_round_trip_and_constant_columns() {
        let x = DMatrix::from_fn(40, 3, |i, j| if j == 2 { 5.0 } else { (i * (j + 2)) as f64 * 0.37 - 3.0 });
        let y = DVector::from_fn(40, |i, _| i as f64);
        let view = split(
            &RawDataset {
                name: "t".into(),
                features: x.clone(),
                targets: y,
                feature_names: vec![],
                dropped_rows: 0,
            },
            &SplitSpec::standard(1),
        )
        .unwrap();
        for j in 0..2 {
            let col = view.train_x.column(j);
            let mean = col.sum() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        }
        assert!(view.train_x.column(2).iter().all(|v| *v == 0.0));
        let back = view.features.invert(&view.train_x);
        let raw_train = select_rows(&x, &view.partition.train);
        assert!((back - raw_train).amax() < 1e-10);
    }

    #[test]
    fn statistics_ignore_test_rows() {
        let x = DMatrix::from_fn(50, 2, |i, j| (i + j) as f64);
        let y = DVector::from_fn(50, |i, _| i as f64);
        let spec = SplitSpec::standard(9);
        let base = standardize("t", &x, &y, partition(50, &spec).unwrap());
        let mut mutated = x.clone();
        let t = base.partition.test[0];
        mutated[(t, 0)] = 1e6;
        let again = standardize("t", &mutated, &y, partition(50, &spec).unwrap());
        assert_eq!(base.features, again.features);
        assert_ne!(base.test_x, again.test_x);
    }
}
