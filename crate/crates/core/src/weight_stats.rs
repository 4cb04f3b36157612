//! Laplacian/Gaussian fits of empirical weight samples and the entropy term
//! consumed by the distortion bounds.

use std::f64::consts::{E, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightSample {
    pub values: Vec<f64>,
    /// Optional per-value group tag (e.g. layer index).
    pub groups: Option<Vec<u32>>,
}

impl WeightSample {
    pub fn new(values: Vec<f64>) -> Self {
        WeightSample { values, groups: None }
    }

    /// Splits the sample by group tag, in ascending tag order.
    pub fn by_group(&self) -> Vec<(u32, WeightSample)> {
        let Some(groups) = &self.groups else {
            return vec![(0, self.clone())];
        };
        let mut map = std::collections::BTreeMap::<u32, Vec<f64>>::new();
        for (v, g) in self.values.iter().zip(groups) {
            map.entry(*g).or_default().push(*v);
        }
        map.into_iter().map(|(g, v)| (g, WeightSample::new(v))).collect()
    }

    /// Reads a sample: `.bin`/`.f32` files are little-endian f32, anything
    /// else is parsed as one value per line.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let binary = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("bin") | Some("f32")
        );
        let values = if binary {
            if bytes.len() % 4 != 0 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    msg: format!("length {} is not a multiple of 4", bytes.len()),
                });
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        } else {
            let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                msg: e.to_string(),
            })?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let t = line.trim();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                out.push(t.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    msg: format!("line {}: {e}", i + 1),
                })?);
            }
            out
        };
        if values.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: "no values".into(),
            });
        }
        Ok(WeightSample::new(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub laplace_scale: f64,
    pub laplace_mean: f64,
    pub gauss_mean: f64,
    pub gauss_std: f64,
    /// Total log-likelihood (nats).
    pub loglik_laplace: f64,
    pub loglik_gauss: f64,
    pub entropy_bits_per_param: f64,
}

impl FitReport {
    pub fn prefers_laplace(&self) -> bool {
        self.loglik_laplace > self.loglik_gauss
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Maximum-likelihood Laplace fit: location is the sample median, the rate
/// parameter is the reciprocal mean absolute deviation about it.
pub fn fit_laplacian(sample: &WeightSample) -> Result<(f64, f64)> {
    let v = &sample.values;
    if v.is_empty() {
        return Err(Error::DegenerateFit("empty sample".into()));
    }
    let m = median(v);
    let mad = v.iter().map(|x| (x - m).abs()).sum::<f64>() / v.len() as f64;
    if !(mad > 0.0) {
        return Err(Error::DegenerateFit("all values identical".into()));
    }
    Ok((m, 1.0 / mad))
}

/// Sample mean and population standard deviation.
pub fn fit_gaussian(sample: &WeightSample) -> Result<(f64, f64)> {
    let v = &sample.values;
    if v.len() < 2 {
        return Err(Error::DegenerateFit(format!("need >= 2 values, got {}", v.len())));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateFit("all values identical".into()));
    }
    Ok((mean, var.sqrt()))
}

pub fn compare_fits(sample: &WeightSample) -> Result<FitReport> {
    let (lap_mean, lambda) = fit_laplacian(sample)?;
    let (g_mean, g_std) = fit_gaussian(sample)?;
    let v = &sample.values;
    let n = v.len() as f64;
    let abs_dev: f64 = v.iter().map(|x| (x - lap_mean).abs()).sum();
    let sq_dev: f64 = v.iter().map(|x| (x - g_mean).powi(2)).sum();
    Ok(FitReport {
        laplace_scale: lambda,
        laplace_mean: lap_mean,
        gauss_mean: g_mean,
        gauss_std: g_std,
        loglik_laplace: n * (lambda / 2.0).ln() - lambda * abs_dev,
        loglik_gauss: -0.5 * n * (2.0 * PI * g_std * g_std).ln() - sq_dev / (2.0 * g_std * g_std),
        entropy_bits_per_param: (2.0 * E / lambda).log2(),
    })
}

/// Differential entropy (bits) of independent Laplacian coordinates.
pub fn entropy_parallel_laplacian(scales: &[f64]) -> Result<f64> {
    if let Some(bad) = scales.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::field("scales", format!("entries must be > 0, got {bad}")));
    }
    Ok(scales.iter().map(|l| (2.0 * E / l).log2()).sum())
}

/// Entropy of a model whose layers each hold `count` i.i.d. Laplacian
/// parameters with rate `lambda`.
pub fn entropy_layered_laplacian(layers: &[(f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(count, lambda) in layers {
        total += count * entropy_parallel_laplacian(&[lambda])?;
    }
    Ok(total)
}
