use std::collections::BTreeMap;

use super::{NnError, Tensor};

/// Named tensors of one layer, e.g. `weight` and `bias`.
pub type LayerParams = BTreeMap<String, Tensor>;

/// Layer-indexed collection of named tensors.
///
/// Iteration is in ascending `layer_id`, then tensor name. Aggregation across
/// agents relies on this order being identical for equal architectures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    layers: BTreeMap<usize, LayerParams>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer_id: usize, name: &str, tensor: Tensor) {
        self.layers
            .entry(layer_id)
            .or_default()
            .insert(name.to_string(), tensor);
    }

    pub fn insert_layer(&mut self, layer_id: usize, layer: LayerParams) {
        self.layers.insert(layer_id, layer);
    }

    pub fn layer(&self, layer_id: usize) -> Option<&LayerParams> {
        self.layers.get(&layer_id)
    }

    pub fn layer_mut(&mut self, layer_id: usize) -> Option<&mut LayerParams> {
        self.layers.get_mut(&layer_id)
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.layers.iter().map(|(&id, l)| (id, l))
    }

    pub fn layer_ids(&self) -> Vec<usize> {
        self.layers.keys().copied().collect()
    }

    pub fn tensor(&self, layer_id: usize, name: &str) -> Result<&Tensor, NnError> {
        self.layers
            .get(&layer_id)
            .and_then(|l| l.get(name))
            .ok_or_else(|| NnError::MissingTensor {
                layer_id,
                name: name.to_string(),
            })
    }

    pub fn tensor_mut(&mut self, layer_id: usize, name: &str) -> Result<&mut Tensor, NnError> {
        self.layers
            .get_mut(&layer_id)
            .and_then(|l| l.get_mut(name))
            .ok_or_else(|| NnError::MissingTensor {
                layer_id,
                name: name.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(&id, l)| l.iter().map(move |(n, t)| (id, n.as_str(), t)))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (usize, &str, &mut Tensor)> {
        self.layers
            .iter_mut()
            .flat_map(|(&id, l)| l.iter_mut().map(move |(n, t)| (id, n.as_str(), t)))
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|(&id, l)| {
                let zl = l.iter().map(|(n, t)| (n.clone(), t.zeros_like())).collect();
                (id, zl)
            })
            .collect();
        Self { layers }
    }

    /// Errors unless `other` has the same layers, names and shapes.
    pub fn check_same_shape(&self, other: &ParameterSet) -> Result<(), NnError> {
        for (&id, layer) in &self.layers {
            let Some(other_layer) = other.layers.get(&id) else {
                return Err(NnError::ShapeMismatch {
                    layer_id: id,
                    name: "<layer>".into(),
                });
            };
            check_layer_shape(id, layer, other_layer)?;
        }
        if let Some(&id) = other.layers.keys().find(|k| !self.layers.contains_key(k)) {
            return Err(NnError::ShapeMismatch {
                layer_id: id,
                name: "<layer>".into(),
            });
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.iter()
            .flat_map(|(_, _, t)| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, _, t) in self.iter_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &ParameterSet, alpha: f64) -> Result<(), NnError> {
        self.check_same_shape(other)?;
        for (id, layer) in self.layers.iter_mut() {
            let other_layer = &other.layers[id];
            for (name, t) in layer.iter_mut() {
                for (a, b) in t.data_mut().iter_mut().zip(other_layer[name].data()) {
                    *a += alpha * b;
                }
            }
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.iter()
            .flat_map(|(_, _, t)| t.data().iter().copied())
            .collect()
    }

    /// Overwrites every entry from `values`, in iteration order.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        let n = self.num_params();
        if values.len() != n {
            return Err(NnError::DataLength {
                expected: n,
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for (_, _, t) in self.iter_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, _, t)| t.is_finite())
    }

    /// Order-sensitive hash of every bit of every entry. Used to assert that
    /// a parameter set was not touched between two points in time.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (id, name, t) in self.iter() {
            feed(&(id as u64).to_le_bytes());
            feed(name.as_bytes());
            for v in t.data() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

pub(crate) fn check_layer_shape(
    layer_id: usize,
    a: &LayerParams,
    b: &LayerParams,
) -> Result<(), NnError> {
    if a.len() != b.len() {
        return Err(NnError::ShapeMismatch {
            layer_id,
            name: "<tensor count>".into(),
        });
    }
    for (name, t) in a {
        match b.get(name) {
            Some(o) if o.shape() == t.shape() => {}
            _ => {
                return Err(NnError::ShapeMismatch {
                    layer_id,
                    name: name.clone(),
                })
            }
        }
    }
    Ok(())
}
