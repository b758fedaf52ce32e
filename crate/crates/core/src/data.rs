//! Regression samples: synthesis and CSV ingestion.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, Points};
use crate::linalg::factor_spd_auto;

/// Noise-free regression functions used to synthesize targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunction {
    Zero,
    /// `sin(x_1 + … + x_d)`
    Sine,
    /// `Σ x_j² / d − 1`
    Quadratic,
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Zero => 0.0,
            TestFunction::Sine => x.iter().sum::<f64>().sin(),
            TestFunction::Quadratic => x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Csv { path: PathBuf },
    PriorSample { seed: u64 },
    FixedFunction { function: TestFunction, seed: u64 },
    Manual,
}

/// Inputs `X` (n × d) and targets `y` (n).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Points,
    targets: DVector<f64>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(inputs: Points, targets: DVector<f64>, provenance: Provenance) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one row".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        if !inputs.as_slice().iter().chain(targets.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains NaN or infinite values".into()));
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
        })
    }

    pub fn from_parts(inputs: Points, targets: Vec<f64>) -> Result<Self> {
        Self::new(inputs, DVector::from_vec(targets), Provenance::Manual)
    }

    pub fn inputs(&self) -> &Points {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    /// Same inputs, new targets.
    pub fn with_targets(&self, targets: DVector<f64>) -> Result<Self> {
        Self::new(self.inputs.clone(), targets, self.provenance.clone())
    }

    /// Rescale targets so that `‖y‖ ≤ max_norm`.
    pub fn clamp_target_norm(&self, max_norm: f64) -> Result<Self> {
        let norm = self.targets.norm();
        if norm <= max_norm {
            return Ok(self.clone());
        }
        self.with_targets(&self.targets * (max_norm / norm))
    }
}

/// Draw `y ~ N(0, k_XX + σ²I)` through the Cholesky factor.
pub fn synth_prior_dataset(kernel: &Kernel, inputs: &Points, noise_var: f64, seed: u64) -> Result<Dataset> {
    if !(noise_var > 0.0) {
        return Err(Error::InvalidInput(format!("noise variance must be positive, got {noise_var}")));
    }
    let mut cov = kernel.gram(inputs, inputs)?;
    for i in 0..cov.nrows() {
        cov[(i, i)] += noise_var;
    }
    let factor = factor_spd_auto(&cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = DVector::from_iterator(
        inputs.len(),
        (0..inputs.len()).map(|_| StandardNormal.sample(&mut rng)),
    );
    let y = factor.lower() * eps;
    Dataset::new(inputs.clone(), y, Provenance::PriorSample { seed })
}

/// `y_i = f0(x_i) + ε_i`, `ε_i ~ N(0, σ²)` i.i.d.
pub fn synth_fixed_function_dataset(
    function: TestFunction,
    inputs: &Points,
    noise_var: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance must be nonnegative, got {noise_var}")));
    }
    let sd = noise_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DVector::from_iterator(
        inputs.len(),
        inputs.rows().map(|x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            function.eval(x) + sd * e
        }),
    );
    Dataset::new(inputs.clone(), y, Provenance::FixedFunction { function, seed })
}

/// Read a `x1,…,xd,y` CSV with a header row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut dataset = parse_csv(&text)?;
    dataset.provenance = Provenance::Csv {
        path: path.to_path_buf(),
    };
    Ok(dataset)
}

/// Parse CSV text; line numbers in errors are 1-based and count the header.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::ParseError {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.len() < 2 {
        if header.is_empty() {
            return Err(Error::EmptyFile);
        }
        return Err(Error::ParseError {
            line: 1,
            reason: format!("expected header x1,...,xd,y with at least two columns, got {}", header.len()),
        });
    }
    let dim = header.len() - 1;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != dim + 1 {
            return Err(Error::ParseError {
                line,
                reason: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::ParseError {
                line,
                reason: format!("column {} is not a number: {field:?}", col + 1),
            })?;
            if !value.is_finite() {
                return Err(Error::ParseError {
                    line,
                    reason: format!("column {} is not finite", col + 1),
                });
            }
            if col < dim {
                xs.push(value);
            } else {
                ys.push(value);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::EmptyFile);
    }
    Dataset::new(Points::new(xs, dim)?, DVector::from_vec(ys), Provenance::Manual)
}

/// CSV text with 17 significant digits per value.
pub fn to_csv_string(data: &Dataset) -> String {
    let d = data.dim();
    let mut out = String::new();
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, x) in data.inputs().rows().enumerate() {
        for v in x {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(out, "{:.16e}", data.targets()[i]);
    }
    out
}

pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(data))?;
    Ok(())
}
