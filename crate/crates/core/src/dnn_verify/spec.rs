use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bounds::{verify_layer_bounds, verify_output_bound, BoundReport};
use super::gradient::{gradient_distortion_estimate, GradientReport, MAX_JACOBIAN_PARAMS};
use super::network::{unit_ball_input, Activation, DnnNetwork};
use super::prune::{prune, PruneKind, PruneStrategy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSource {
    /// Gaussian weights drawn from this seed.
    Seed(u64),
    /// Little-endian f32 weights, row-major per layer; relative paths are
    /// resolved against the spec file's directory.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    #[serde(default = "default_inputs")]
    pub inputs: usize,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<PruneKind>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

fn default_inputs() -> usize {
    32
}
fn default_rho_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}
fn default_strategies() -> Vec<PruneKind> {
    vec![PruneKind::Magnitude, PruneKind::Random]
}
fn default_fd_step() -> f64 {
    1e-4
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            inputs: default_inputs(),
            rho_grid: default_rho_grid(),
            strategies: default_strategies(),
            fd_step: default_fd_step(),
        }
    }
}

/// Network description for `verify-bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    /// Widths from input to output.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub split_index: usize,
    pub weights: WeightSource,
    #[serde(default)]
    pub verify: VerifyOptions,
}

impl NetSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: NetSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        if let WeightSource::File(f) = &mut spec.weights {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(spec)
    }

    pub fn build(&self) -> Result<DnnNetwork> {
        match &self.weights {
            WeightSource::Seed(seed) => {
                DnnNetwork::random(&self.layer_sizes, self.activation, self.split_index, *seed)
            }
            WeightSource::File(path) => {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                if bytes.len() % 4 != 0 {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        msg: "weight file length is not a multiple of 4".into(),
                    });
                }
                let w: Vec<f64> = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect();
                DnnNetwork::from_flat(&self.layer_sizes, &w, self.activation, self.split_index)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub reports: Vec<BoundReport>,
    /// Per ratio/strategy: did every layer inequality hold for every input?
    pub layer_checks_pass: Vec<bool>,
    /// First-order estimate at the smallest pruning ratio per strategy.
    pub gradient: Option<GradientReport>,
    pub all_hold: bool,
}

/// Runs the full check battery for one network.
pub fn run_verification(net: &DnnNetwork, opts: &VerifyOptions, seed: u64) -> Result<VerifySummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<_> = (0..opts.inputs)
        .map(|_| unit_ball_input(net.input_dim(), &mut rng))
        .collect();
    let strategies: Vec<PruneStrategy> = opts
        .strategies
        .iter()
        .map(|k| match k {
            PruneKind::Magnitude => PruneStrategy::magnitude(),
            PruneKind::Random => PruneStrategy::random(seed),
        })
        .collect();
    let reports = verify_output_bound(net, &inputs, &opts.rho_grid, &strategies)?;
    let mut layer_checks_pass = Vec::with_capacity(reports.len());
    for r in &reports {
        let pruned = prune(net, r.rho, r.rho_server, &r.strategy);
        let checks = verify_layer_bounds(net, &pruned, &inputs)?;
        layer_checks_pass.push(checks.iter().all(|c| c.pass));
    }
    let gradient = if net.param_count() <= MAX_JACOBIAN_PARAMS {
        let rho = opts.rho_grid.iter().copied().fold(0.0, f64::max);
        let pruned = prune(net, rho, rho, &PruneStrategy::magnitude());
        let few = &inputs[..inputs.len().min(4)];
        Some(gradient_distortion_estimate(net, &pruned, few, opts.fd_step)?)
    } else {
        None
    };
    let all_hold = reports.iter().all(|r| r.holds)
        && layer_checks_pass.iter().all(|p| *p)
        && gradient.as_ref().is_none_or(|g| g.holds);
    Ok(VerifySummary {
        reports,
        layer_checks_pass,
        gradient,
        all_hold,
    })
}
