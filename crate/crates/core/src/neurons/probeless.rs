//! Probe-free neuron scoring: a neuron is active for a fact when its
//! activation deviates from the mean over the other facts of the same
//! relation and language.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactKey, FactUid, LanguageCode};

use super::{ActivationRecord, NeuronId, NeuronMatrix};

/// Mean over `group` excluding the probed fact. `group` holds every record
/// of the probed fact's (relation, language), the probed one included.
pub fn cohort_mean(group: &[&ActivationRecord], probed: FactUid) -> Result<NeuronMatrix> {
    let others: Vec<&ActivationRecord> = group.iter().copied().filter(|r| r.uid != probed).collect();
    if group.len() < 2 || others.is_empty() {
        return Err(Error::InsufficientCohort {
            uid: probed.to_string(),
            size: group.len(),
        });
    }
    let mut mean = NeuronMatrix::zeros(others[0].values.n_layers(), others[0].values.ffn_dim());
    for r in &others {
        r.values.ensure_same_shape(&mean)?;
        for (m, v) in mean.as_mut_slice().iter_mut().zip(r.values.as_slice()) {
            *m += v;
        }
    }
    let n = others.len() as f64;
    mean.as_mut_slice().iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Running per-neuron sums for one (relation, language) cohort, for
/// leave-one-out means without holding every record in memory.
#[derive(Debug, Clone)]
pub struct CohortSums {
    sums: NeuronMatrix,
    count: usize,
}

impl CohortSums {
    pub fn new(n_layers: usize, ffn_dim: usize) -> Self {
        CohortSums {
            sums: NeuronMatrix::zeros(n_layers, ffn_dim),
            count: 0,
        }
    }

    pub fn add(&mut self, values: &NeuronMatrix) -> Result<()> {
        self.sums.ensure_same_shape(values)?;
        for (s, v) in self.sums.as_mut_slice().iter_mut().zip(values.as_slice()) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean over the cohort with `record` (already added) removed.
    pub fn leave_one_out_mean(&self, record: &ActivationRecord) -> Result<NeuronMatrix> {
        if self.count < 2 {
            return Err(Error::InsufficientCohort {
                uid: record.uid.to_string(),
                size: self.count,
            });
        }
        self.sums.ensure_same_shape(&record.values)?;
        let n = (self.count - 1) as f64;
        let data = self
            .sums
            .as_slice()
            .iter()
            .zip(record.values.as_slice())
            .map(|(s, v)| (s - v) / n)
            .collect();
        NeuronMatrix::from_vec(self.sums.n_layers(), self.sums.ffn_dim(), data)
    }
}

/// Absolute deviation of each neuron from the cohort mean.
pub fn activity_scores(fact: &NeuronMatrix, mean: &NeuronMatrix) -> Result<NeuronMatrix> {
    fact.ensure_same_shape(mean)?;
    let data = fact
        .as_slice()
        .iter()
        .zip(mean.as_slice())
        .map(|(v, m)| (v - m).abs())
        .collect();
    NeuronMatrix::from_vec(fact.n_layers(), fact.ffn_dim(), data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveNeuronSet {
    pub uid: FactUid,
    pub fact: FactKey,
    #[serde(rename = "lang")]
    pub language: LanguageCode,
    /// Highest score first.
    pub neurons: Vec<NeuronId>,
}

/// The `k` highest-scoring neurons, ties broken by ascending (layer, index).
pub fn top_k_neurons(scores: &NeuronMatrix, k: usize) -> Result<Vec<NeuronId>> {
    if k == 0 {
        return Err(Error::contract("top-k needs k >= 1"));
    }
    let vals = scores.as_slice();
    let dim = scores.ffn_dim();
    // Flat index order equals (layer, index) order.
    let cmp = |a: &usize, b: &usize| -> Ordering { vals[*b].total_cmp(&vals[*a]).then(a.cmp(b)) };
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    let k = k.min(idx.len());
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx
        .into_iter()
        .map(|i| NeuronId {
            layer: (i / dim) as u32,
            index: (i % dim) as u32,
        })
        .collect())
}

/// Per-layer mean score over contiguous index bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub n_layers: usize,
    pub bins: usize,
    /// Layer-major, `n_layers * bins`.
    pub values: Vec<f64>,
    /// Neuron count per bin.
    pub widths: Vec<usize>,
}

impl Heatmap {
    pub fn get(&self, layer: usize, bin: usize) -> f64 {
        self.values[layer * self.bins + bin]
    }

    /// Index range `[start, end)` covered by bin `b` of `bins` over `dim`.
    pub fn bin_range(dim: usize, bins: usize, b: usize) -> (usize, usize) {
        (b * dim / bins, (b + 1) * dim / bins)
    }
}

pub fn bin_heatmap(scores: &NeuronMatrix, bins: usize) -> Result<Heatmap> {
    let dim = scores.ffn_dim();
    if bins == 0 || bins > dim {
        return Err(Error::contract(format!("cannot split {dim} neurons into {bins} bins")));
    }
    let widths: Vec<usize> = (0..bins)
        .map(|b| {
            let (s, e) = Heatmap::bin_range(dim, bins, b);
            e - s
        })
        .collect();
    let mut values = Vec::with_capacity(scores.n_layers() * bins);
    for l in 0..scores.n_layers() {
        let row = scores.row(l);
        for b in 0..bins {
            let (s, e) = Heatmap::bin_range(dim, bins, b);
            values.push(row[s..e].iter().sum::<f64>() / (e - s) as f64);
        }
    }
    Ok(Heatmap {
        n_layers: scores.n_layers(),
        bins,
        values,
        widths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(uid: u64, vals: Vec<f64>, dim: usize) -> ActivationRecord {
        ActivationRecord {
            uid: FactUid(uid),
            language: LanguageCode::new("en").unwrap(),
            values: NeuronMatrix::from_vec(vals.len() / dim, dim, vals).unwrap(),
        }
    }

    #[test]
    fn cohort_mean_excludes_probed() {
        let probed = rec(0, vec![100.0], 1);
        let a = rec(1, vec![1.0], 1);
        let b = rec(2, vec![3.0], 1);
        let m = cohort_mean(&[&probed, &a, &b], FactUid(0)).unwrap();
        assert_eq!(m.get(0, 0), 2.0);

        let m = cohort_mean(&[&probed, &a, &a.clone()], FactUid(0)).unwrap();
        assert_eq!(m.as_slice(), a.values.as_slice());

        assert!(matches!(
            cohort_mean(&[&probed], FactUid(0)),
            Err(Error::InsufficientCohort { size: 1, .. })
        ));
    }

    #[test]
    fn running_sums_agree_with_direct_mean() {
        let recs: Vec<_> = (0..5).map(|i| rec(i, vec![i as f64, (i * i) as f64, 1.5], 3)).collect();
        let mut sums = CohortSums::new(1, 3);
        for r in &recs {
            sums.add(&r.values).unwrap();
        }
        let refs: Vec<&ActivationRecord> = recs.iter().collect();
        for r in &recs {
            let direct = cohort_mean(&refs, r.uid).unwrap();
            let loo = sums.leave_one_out_mean(r).unwrap();
            for (a, b) in direct.as_slice().iter().zip(loo.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let mut one = CohortSums::new(1, 3);
        one.add(&recs[0].values).unwrap();
        assert!(one.leave_one_out_mean(&recs[0]).is_err());
    }

    #[test]
    fn scores_are_absolute_deviation() {
        let f = NeuronMatrix::from_vec(1, 2, vec![5.0, 1.0]).unwrap();
        let m = NeuronMatrix::from_vec(1, 2, vec![2.0, 4.0]).unwrap();
        assert_eq!(activity_scores(&f, &m).unwrap().as_slice(), &[3.0, 3.0]);
        assert!(activity_scores(&f, &f).unwrap().as_slice().iter().all(|s| *s == 0.0));
        let bad = NeuronMatrix::zeros(2, 1);
        assert!(matches!(activity_scores(&f, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn spike_is_the_top_neuron() {
        let mut fact = NeuronMatrix::zeros(6, 32);
        let mean = NeuronMatrix::zeros(6, 32);
        for (i, v) in fact.as_mut_slice().iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f64 / 110.0; // all <= 0.1
        }
        fact.set(3, 17, 5.0);
        let s = activity_scores(&fact, &mean).unwrap();
        // brute-force argmax
        let (mut best, mut at) = (f64::MIN, (0, 0));
        for l in 0..6 {
            for i in 0..32 {
                if s.get(l, i) > best {
                    best = s.get(l, i);
                    at = (l, i);
                }
            }
        }
        assert_eq!(at, (3, 17));
        assert_eq!(top_k_neurons(&s, 1).unwrap(), vec![NeuronId { layer: 3, index: 17 }]);
    }

    #[test]
    fn ties_break_by_position() {
        let s = NeuronMatrix::from_vec(2, 3, vec![1.0; 6]).unwrap();
        let top = top_k_neurons(&s, 3).unwrap();
        assert_eq!(
            top,
            vec![
                NeuronId { layer: 0, index: 0 },
                NeuronId { layer: 0, index: 1 },
                NeuronId { layer: 0, index: 2 }
            ]
        );
        assert_eq!(top_k_neurons(&s, 100).unwrap().len(), 6);
        assert!(top_k_neurons(&s, 0).is_err());
    }

    #[test]
    fn heatmap_cells() {
        let s = NeuronMatrix::from_vec(2, 4, vec![2.0; 8]).unwrap();
        let h = bin_heatmap(&s, 2).unwrap();
        assert!(h.values.iter().all(|v| *v == 2.0));

        let mut s = NeuronMatrix::zeros(5, 32);
        s.set(3, 1, 9.0);
        let h = bin_heatmap(&s, 16).unwrap();
        let max = (0..5)
            .flat_map(|l| (0..16).map(move |b| (l, b)))
            .max_by(|a, b| h.get(a.0, a.1).total_cmp(&h.get(b.0, b.1)))
            .unwrap();
        assert_eq!(max, (3, 0));
        assert_eq!(h.get(3, 0), 4.5);

        let s = NeuronMatrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(bin_heatmap(&s, 3).unwrap().values, vec![1.0, 2.0, 3.0]);
        assert!(bin_heatmap(&s, 4).is_err());
        assert!(bin_heatmap(&s, 0).is_err());
    }

    #[test]
    fn uneven_bins_conserve_mass() {
        let vals: Vec<f64> = (0..2 * 10).map(|i| (i as f64).sin().abs()).collect();
        let s = NeuronMatrix::from_vec(2, 10, vals).unwrap();
        let h = bin_heatmap(&s, 3).unwrap();
        assert_eq!(h.widths.iter().sum::<usize>(), 10);
        for l in 0..2 {
            let mass: f64 = (0..3).map(|b| h.get(l, b) * h.widths[b] as f64).sum();
            let total: f64 = s.row(l).iter().sum();
            assert!((mass - total).abs() < 1e-12);
        }
    }
}
