use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_model::{ModelProfile, Scenario};
use crate::weight_stats::entropy_layered_laplacian;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub params_count: f64,
    pub flops: f64,
    /// Size of this layer's output when the model is cut after it (bits).
    pub embedding_bits_out: f64,
    /// Laplacian scale of this layer's weights, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// Per-layer description of a model that can be split after any layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredModelSpec {
    pub layers: Vec<LayerRecord>,
    pub bits_per_param: f64,
    /// Entropy of the full parameter vector (bits). Required unless every
    /// layer carries `lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_bits: Option<f64>,
    /// Upload size when the whole model runs on the server.
    pub raw_input_bits: f64,
    /// Split used for single-scenario runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
}

impl LayeredModelSpec {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::field("layers", "layer list must not be empty"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (name, v) in [
                ("params_count", l.params_count),
                ("flops", l.flops),
                ("embedding_bits_out", l.embedding_bits_out),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::field(
                        format!("layers[{i}].{name}"),
                        format!("must be finite and >= 0, got {v}"),
                    ));
                }
            }
            if let Some(lam) = l.lambda {
                if !(lam.is_finite() && lam > 0.0) {
                    return Err(Error::field(format!("layers[{i}].lambda"), "must be > 0"));
                }
            }
        }
        if !(self.bits_per_param.is_finite() && self.bits_per_param >= 0.0) {
            return Err(Error::field("bits_per_param", "must be finite and >= 0"));
        }
        if !(self.raw_input_bits.is_finite() && self.raw_input_bits >= 0.0) {
            return Err(Error::field("raw_input_bits", "must be finite and >= 0"));
        }
        if let Some(s) = self.split {
            if s > self.layers.len() {
                return Err(Error::field(
                    "split",
                    format!("must be <= {} (layer count), got {s}", self.layers.len()),
                ));
            }
        }
        self.entropy()?;
        Ok(())
    }

    /// Entropy of the full parameter vector, from `entropy_bits` or, when
    /// absent, from the per-layer scales.
    pub fn entropy(&self) -> Result<f64> {
        if let Some(h) = self.entropy_bits {
            if !h.is_finite() {
                return Err(Error::field("entropy_bits", "must be finite"));
            }
            return Ok(h);
        }
        let layers: Option<Vec<(f64, f64)>> = self
            .layers
            .iter()
            .map(|l| l.lambda.map(|lam| (l.params_count, lam)))
            .collect();
        match layers {
            Some(ls) => entropy_layered_laplacian(&ls),
            None => Err(Error::field(
                "entropy_bits",
                "required unless every layer gives `lambda`",
            )),
        }
    }

    pub fn total_params(&self) -> f64 {
        self.layers.iter().map(|l| l.params_count).sum()
    }

    pub fn total_flops(&self) -> f64 {
        self.layers.iter().map(|l| l.flops).sum()
    }

    /// Model profile when the first `split` layers run on the device.
    pub fn profile_at_split(&self, split: usize) -> Result<ModelProfile> {
        let n = self.layers.len();
        if split > n {
            return Err(Error::field(
                "split",
                format!("index {split} out of range 0..={n}"),
            ));
        }
        let (dev, srv) = self.layers.split_at(split);
        let q: f64 = dev.iter().map(|l| l.params_count).sum();
        let n_dev: f64 = dev.iter().map(|l| l.flops).sum();
        let theta = if split == 0 {
            self.raw_input_bits
        } else if split == n {
            0.0
        } else {
            dev[split - 1].embedding_bits_out
        };
        // The server side is the complement of the device side so that the
        // two always add up to the totals exactly.
        let total_p = self.total_params();
        let total_f = self.total_flops();
        let s = if split == n { 0.0 } else { total_p - q };
        let n_srv = if split == n { 0.0 } else { total_f - n_dev };
        debug_assert!(srv.is_empty() || s >= 0.0);
        Ok(ModelProfile {
            q_device_params: q,
            s_server_params: s,
            bits_per_param: self.bits_per_param,
            n_flop_device: n_dev,
            n_flop_server: n_srv,
            theta_embedding_bits: theta,
            entropy_bits: self.entropy()?,
        })
    }
}

/// `base` with its model replaced by the cut of `spec` at `split`.
pub fn scenario_at_split(spec: &LayeredModelSpec, split: usize, base: &Scenario) -> Result<Scenario> {
    let mut sc = base.clone();
    sc.model = spec.profile_at_split(split)?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::tests::toy_scenario;
    use proptest::prelude::*;

    fn spec(layers: usize) -> LayeredModelSpec {
        LayeredModelSpec {
            layers: (0..layers)
                .map(|i| LayerRecord {
                    params_count: 1000.0 + 17.0 * i as f64,
                    flops: 1e6 * (1 + i % 3) as f64,
                    embedding_bits_out: 4096.0 * (1 + i) as f64,
                    lambda: None,
                })
                .collect(),
            bits_per_param: 8.0,
            entropy_bits: Some(-100.0),
            raw_input_bits: 1e6,
            split: None,
        }
    }

    #[test]
    fn split_endpoints() {
        let s = spec(12);
        let p0 = s.profile_at_split(0).unwrap();
        assert_eq!(p0.q_device_params, 0.0);
        assert_eq!(p0.n_flop_device, 0.0);
        assert_eq!(p0.theta_embedding_bits, 1e6);
        let pl = s.profile_at_split(12).unwrap();
        assert_eq!(pl.s_server_params, 0.0);
        assert_eq!(pl.n_flop_server, 0.0);
        assert_eq!(pl.theta_embedding_bits, 0.0);
        assert_eq!(s.profile_at_split(3).unwrap().theta_embedding_bits, 4096.0 * 3.0);
        assert!(s.profile_at_split(13).is_err());
        let sc = scenario_at_split(&s, 5, &toy_scenario()).unwrap();
        assert_eq!(sc.channel, toy_scenario().channel);
        assert_eq!(sc.model.q_device_params, (0..5).map(|i| 1000.0 + 17.0 * i as f64).sum::<f64>());
    }

    #[test]
    fn entropy_from_scales() {
        let mut s = spec(3);
        s.entropy_bits = None;
        assert!(s.validate().is_err());
        for l in &mut s.layers {
            l.lambda = Some(20.0);
        }
        let h = s.entropy().unwrap();
        let per = (2.0 * std::f64::consts::E / 20.0).log2();
        assert!((h - per * s.total_params()).abs() <= 1e-9 * h.abs());
    }

    #[test]
    fn validation_names_fields() {
        let mut s = spec(2);
        s.layers[1].flops = -1.0;
        match s.validate().unwrap_err() {
            Error::InvalidField { field, .. } => assert_eq!(field, "layers[1].flops"),
            e => panic!("{e}"),
        }
        let empty = LayeredModelSpec { layers: vec![], ..spec(1) };
        assert!(empty.validate().is_err());
    }

    proptest! {
        #[test]
        fn partition_is_exact(layers in 1usize..20, params in prop::collection::vec(0.0f64..1e9, 20), split_frac in 0.0f64..=1.0) {
            let mut s = spec(layers);
            for (l, p) in s.layers.iter_mut().zip(&params) {
                l.params_count = p.round();
                l.flops = (p * 3.7).round();
            }
            let split = (split_frac * layers as f64).floor() as usize;
            let m = s.profile_at_split(split).unwrap();
            prop_assert_eq!(m.q_device_params + m.s_server_params, s.total_params());
            prop_assert_eq!(m.n_flop_device + m.n_flop_server, s.total_flops());
        }
    }
}
