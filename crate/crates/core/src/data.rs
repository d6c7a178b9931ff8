//! Datasets, CSV ingestion and the preprocessing pipeline: z-normalization of
//! the inputs, centering of the output, PCA down to at most five inputs, and
//! random train/test splitting.

use std::ops::Deref;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::FeatureStats;

/// Default cap on the number of inputs fed to the fuzzy system.
pub const MAX_INPUT_DIMS: usize = 5;

/// Fraction of the rows used for training.
pub const TRAIN_RATIO: f64 = 0.7;

/// Row-major numeric design matrix with a target vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    features: usize,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let features = rows[0].len();
        if rows.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                actual: y.len(),
            });
        }
        if feature_names.len() != features {
            return Err(Error::LengthMismatch {
                expected: features,
                actual: feature_names.len(),
            });
        }
        let mut x = Vec::with_capacity(rows.len() * features);
        for row in rows {
            if row.len() != features {
                return Err(Error::DimensionMismatch {
                    expected: features,
                    actual: row.len(),
                });
            }
            x.extend(row);
        }
        Self::from_flat(x, y, feature_names)
    }

    fn from_flat(x: Vec<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Config("dataset contains NaN or infinite values".into()));
        }
        Ok(Self {
            features: feature_names.len(),
            x,
            y,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.features..(i + 1) * self.features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        self.x.chunks_exact(self.features.max(1)).take(self.len())
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.features);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Self {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            features: self.features,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Per-feature min, max and sample standard deviation.
    pub fn feature_stats(&self) -> Vec<FeatureStats> {
        (0..self.features)
            .map(|j| {
                let (min, max) = self
                    .column(j)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                let (_, std) = mean_std(self.column(j));
                FeatureStats { min, max, std }
            })
            .collect()
    }
}

/// Mean and sample (n - 1) standard deviation; the deviation is 0 for one value.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Loads a comma-separated file with a header row.
///
/// `target` is a column name, or a zero-based column index if no header matches.
/// Columns where no cell parses as a number are treated as categorical and
/// dropped with a warning. A column that mixes numbers with other text is an error.
pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let target_col = headers
        .iter()
        .position(|h| h == target)
        .or_else(|| target.parse::<usize>().ok().filter(|&i| i < headers.len()))
        .ok_or_else(|| Error::MissingTarget(target.to_owned()))?;

    let mut cells: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        cells.push(record.iter().map(str::to_owned).collect());
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let numeric: Vec<bool> = (0..headers.len())
        .map(|j| cells.iter().any(|row| row[j].parse::<f64>().is_ok()))
        .collect();
    if !numeric[target_col] {
        return Err(Error::NonNumericTarget(headers[target_col].clone()));
    }
    let kept: Vec<usize> = (0..headers.len())
        .filter(|&j| j != target_col)
        .filter(|&j| {
            if !numeric[j] {
                warn!("dropping categorical column '{}'", headers[j]);
            }
            numeric[j]
        })
        .collect();

    let parse = |row: usize, col: usize, raw: &str| {
        raw.parse::<f64>().map_err(|_| Error::Parse {
            row: row + 1,
            column: headers[col].clone(),
            value: raw.to_owned(),
        })
    };
    let mut x = Vec::with_capacity(cells.len() * kept.len());
    let mut y = Vec::with_capacity(cells.len());
    for (i, row) in cells.iter().enumerate() {
        y.push(parse(i, target_col, &row[target_col])?);
        for &j in &kept {
            x.push(parse(i, j, &row[j])?);
        }
    }
    let names = kept.iter().map(|&j| headers[j].clone()).collect();
    Dataset::from_flat(x, y, names)
}

/// Training portion of a split. Preprocessing statistics are only ever fitted on one of these.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet(Dataset);

impl TrainSet {
    /// Marks a dataset as training data when it did not come from [`split`].
    pub fn assume(d: Dataset) -> Self {
        Self(d)
    }

    pub fn into_inner(self) -> Dataset {
        self.0
    }
}

impl Deref for TrainSet {
    type Target = Dataset;

    fn deref(&self) -> &Dataset {
        &self.0
    }
}

/// Random split with `round(ratio * N)` training rows.
pub fn split<R: Rng + ?Sized>(d: &Dataset, ratio: f64, rng: &mut R) -> Result<(TrainSet, Dataset)> {
    let n = d.len();
    if n < 2 {
        return Err(Error::TooSmall(n));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let (train, test) = perm.split_at(n_train);
    Ok((TrainSet(d.subset(train)), d.subset(test)))
}

/// `min(batch, n)` distinct indices drawn uniformly from `0..n`.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<usize> {
    if batch >= n {
        return (0..n).collect();
    }
    index::sample(rng, n, batch).into_vec()
}

/// Fitted input normalization, output centering and optional PCA.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub output_mean: f64,
    /// Row-major `raw x out` projection; `None` when no reduction was needed.
    pub projection: Option<Vec<f64>>,
    /// Eigenvalues of the retained components, nonincreasing.
    pub eigenvalues: Vec<f64>,
    out_dims: usize,
}

impl Preprocessor {
    pub fn raw_dims(&self) -> usize {
        self.means.len()
    }

    pub fn out_dims(&self) -> usize {
        self.out_dims
    }

    pub fn pca_applied(&self) -> bool {
        self.projection.is_some()
    }

    /// Projection column `k`.
    pub fn component(&self, k: usize) -> Option<Vec<f64>> {
        let p = self.projection.as_ref()?;
        Some((0..self.raw_dims()).map(|j| p[j * self.out_dims + k]).collect())
    }
}

/// Fits normalization on `train`; reduces to the top `max_dims` principal
/// components of the z-scored inputs when there are more than `max_dims` features.
pub fn fit_preprocessor(train: &TrainSet, max_dims: usize) -> Result<Preprocessor> {
    let d: &Dataset = train;
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let raw = d.num_features();
    let mut means = Vec::with_capacity(raw);
    let mut stds = Vec::with_capacity(raw);
    for j in 0..raw {
        let (mean, std) = mean_std(d.column(j));
        if !(std > 0.0) {
            return Err(Error::ConstantFeature {
                input: j,
                value: mean,
            });
        }
        means.push(mean);
        stds.push(std);
    }
    let (output_mean, _) = mean_std(d.targets().iter().copied());

    if raw <= max_dims {
        return Ok(Preprocessor {
            means,
            stds,
            output_mean,
            projection: None,
            eigenvalues: Vec::new(),
            out_dims: raw,
        });
    }

    let n = d.len();
    let z = DMatrix::from_fn(n, raw, |i, j| (d.row(i)[j] - means[j]) / stds[j]);
    let denom = (n.max(2) - 1) as f64;
    let cov = (z.transpose() * &z) / denom;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..raw).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let out = max_dims;
    let mut projection = vec![0.0; raw * out];
    let mut eigenvalues = Vec::with_capacity(out);
    for (k, &col) in order.iter().take(out).enumerate() {
        let v = eig.eigenvectors.column(col);
        let pivot = v.iter().copied().fold(0.0f64, |best, x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..raw {
            projection[j * out + k] = sign * v[j];
        }
        eigenvalues.push(eig.eigenvalues[col]);
    }
    Ok(Preprocessor {
        means,
        stds,
        output_mean,
        projection: Some(projection),
        eigenvalues,
        out_dims: out,
    })
}

/// `((x - mean) / std) * projection` and `y - output_mean`.
pub fn apply_preprocessor(p: &Preprocessor, d: &Dataset) -> Result<Dataset> {
    if d.num_features() != p.raw_dims() {
        return Err(Error::SchemaMismatch {
            expected: p.raw_dims(),
            actual: d.num_features(),
        });
    }
    let raw = p.raw_dims();
    let out = p.out_dims();
    let mut x = Vec::with_capacity(d.len() * out);
    let mut z = vec![0.0; raw];
    for row in d.rows() {
        for j in 0..raw {
            z[j] = (row[j] - p.means[j]) / p.stds[j];
        }
        match &p.projection {
            None => x.extend_from_slice(&z),
            Some(proj) => {
                for k in 0..out {
                    x.push((0..raw).map(|j| z[j] * proj[j * out + k]).sum());
                }
            }
        }
    }
    let names = match &p.projection {
        None => d.feature_names().to_vec(),
        Some(_) => (1..=out).map(|k| format!("pc{k}")).collect(),
    };
    let y = d.targets().iter().map(|v| v - p.output_mean).collect();
    Dataset::from_flat(x, y, names)
}

/// `y = sin(x1) * x2 + 0.1 * noise` with three extra nuisance inputs; every
/// input is uniform on `[-3, 3]` and the noise is standard normal.
pub fn synthetic_sine(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * 5);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: [f64; 5] = std::array::from_fn(|_| rng.random_range(-3.0..=3.0));
        let noise: f64 = StandardNormal.sample(&mut rng);
        y.push(row[0].sin() * row[1] + 0.1 * noise);
        x.extend_from_slice(&row);
    }
    let names = (1..=5).map(|k| format!("x{k}")).collect();
    Dataset::from_flat(x, y, names).expect("synthetic data is finite and nonempty")
}

/// Writes `d` as CSV with its feature names and a final `y` column.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    header.push("y");
    w.write_record(&header).map_err(csv_err)?;
    for (row, y) in d.rows().zip(d.targets()) {
        let rec: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
