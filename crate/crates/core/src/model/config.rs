use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
    Identity,
}

/// Layout of the sinusoidal singular-value encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingVariant {
    /// `(σ, sin(ω_j c σ)…, cos(ω_j c σ)…)`.
    SinCos,
    /// `(σ, sin(ω_j c σ)…, sin(ω_j c σ)…)`: the sine block repeated.
    DoubleSin,
}

/// Architecture hyperparameters. Input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Hidden width `d`; must be even and divisible by `heads`.
    pub hidden: usize,
    pub heads: usize,
    /// Number of spectral layers `L`.
    pub layers: usize,
    /// Number of filter columns `m` taken from the refined encoding.
    pub filters: usize,
    pub activation: Activation,
    pub encoding: EncodingVariant,
    /// Frequency scale `c` of the encoding.
    pub encoding_scale: f64,
    pub attn_dropout: f64,
    pub spec_dropout: f64,
    /// Adds `H^{(l-1)}` to each spectral layer output.
    pub spectral_skip: bool,
    /// Filters act as `U diag(e_j ⊙ σ) Vᵀ` instead of `U diag(e_j) Vᵀ`, so an
    /// all-ones filter reproduces the normalized adjacency.
    pub sigma_scaled_filters: bool,
    pub readout_bias: bool,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            heads: 4,
            layers: 2,
            filters: 8,
            activation: Activation::Relu,
            encoding: EncodingVariant::SinCos,
            encoding_scale: 100.0,
            attn_dropout: 0.1,
            spec_dropout: 0.2,
            spectral_skip: false,
            sigma_scaled_filters: false,
            readout_bias: true,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hidden;
        if d == 0 || d % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden dimension d = {d} must be even and positive: the singular-value \
                 encoding splits d into d/2 sine and d/2 cosine terms"
            )));
        }
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden dimension {d} is not divisible by {} heads",
                self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("at least one spectral layer is required".into()));
        }
        if self.filters == 0 || self.filters > d {
            return Err(Error::Config(format!(
                "filters m = {} must lie in 1..={d}",
                self.filters
            )));
        }
        for (name, p) in [("attn_dropout", self.attn_dropout), ("spec_dropout", self.spec_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if !(self.encoding_scale.is_finite() && self.layer_norm_eps > 0.0) {
            return Err(Error::Config("encoding_scale must be finite and layer_norm_eps positive".into()));
        }
        Ok(())
    }
}

/// Data-dependent dimensions of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input feature dimension must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least two classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// How many singular triplets feed the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisRank {
    /// Full SVD up to `full_max_nodes`, truncated above.
    Auto,
    Full,
    Truncated,
}

/// Spectral-basis settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub rank: BasisRank,
    /// Retained rank `d_svd` on the truncated path.
    pub d_svd: usize,
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
    pub full_max_nodes: usize,
    /// Normalized adjacency stays dense up to this many nodes.
    pub dense_max_nodes: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            rank: BasisRank::Auto,
            d_svd: 256,
            oversample: 10,
            power_iters: 2,
            seed: 0,
            full_max_nodes: 1024,
            dense_max_nodes: crate::graph::DEFAULT_DENSE_THRESHOLD,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_svd == 0 {
            return Err(Error::Config("d_svd must be positive".into()));
        }
        Ok(())
    }

    /// Whether a graph of `num_nodes` uses the full decomposition.
    pub fn uses_full(&self, num_nodes: usize) -> bool {
        match self.rank {
            BasisRank::Full => true,
            BasisRank::Truncated => false,
            BasisRank::Auto => num_nodes <= self.full_max_nodes,
        }
    }
}
