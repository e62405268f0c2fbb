//! Neuron-level analysis of FFN intermediate activations: probe-free
//! active-neuron scoring, cross-language neuron overlap, and binned layer
//! heatmaps.

pub mod dump;
pub mod overlap;
pub mod probeless;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::{ActivationRecord, AdapterManifest, DumpHeader, DumpReader, DumpWriter};
pub use overlap::{language_similarity_matrix, neuron_jaccard, pairwise_fact_jaccards, top_languages, PairJaccard};
pub use probeless::{activity_scores, bin_heatmap, cohort_mean, top_k_neurons, ActiveNeuronSet, CohortSums, Heatmap};

pub const DEFAULT_TOP_K: usize = 50;
pub const DEFAULT_BINS: usize = 16;

/// Position of one FFN neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: u32,
    pub index: u32,
}

/// Dense `n_layers x ffn_dim` matrix, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronMatrix {
    n_layers: usize,
    ffn_dim: usize,
    data: Vec<f64>,
}

impl NeuronMatrix {
    pub fn zeros(n_layers: usize, ffn_dim: usize) -> Self {
        NeuronMatrix {
            n_layers,
            ffn_dim,
            data: vec![0.0; n_layers * ffn_dim],
        }
    }

    pub fn from_vec(n_layers: usize, ffn_dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_layers * ffn_dim {
            return Err(Error::contract(format!(
                "{} values do not fill a {n_layers}x{ffn_dim} matrix",
                data.len()
            )));
        }
        Ok(NeuronMatrix { n_layers, ffn_dim, data })
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn ffn_dim(&self) -> usize {
        self.ffn_dim
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_layers, self.ffn_dim)
    }

    pub fn get(&self, layer: usize, index: usize) -> f64 {
        self.data[layer * self.ffn_dim + index]
    }

    pub fn set(&mut self, layer: usize, index: usize, v: f64) {
        self.data[layer * self.ffn_dim + index] = v;
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        &self.data[layer * self.ffn_dim..(layer + 1) * self.ffn_dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn ensure_same_shape(&self, other: &NeuronMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::contract(format!(
                "shape {:?} does not match {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}
