//! Named layers and their parameters.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::LayerSpec;
use super::tensor::{DType, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

/// Ordered list of `(layer name, spec)` pairs describing a network.
pub type Description = Vec<(String, LayerSpec)>;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub spec: LayerSpec,
    pub params: Vec<Vec<T>>,
}

/// Parameters for every layer of a description, in description order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    order: Vec<String>,
    layers: BTreeMap<String, LayerWeights<T>>,
}

pub fn param_name(layer: &str, suffix: &str) -> String {
    format!("{layer}.{suffix}")
}

impl<T: Real> Weights<T> {
    /// Seeded initialization; layers draw from one stream in description order.
    pub fn init(desc: &[(String, LayerSpec)], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::empty();
        for (name, spec) in desc {
            let params = spec
                .init_params(&mut rng)
                .into_iter()
                .map(|p| p.into_iter().map(T::of).collect())
                .collect();
            w.push(name, spec.clone(), params)?;
        }
        Ok(w)
    }

    pub fn empty() -> Self {
        Self {
            order: Vec::new(),
            layers: BTreeMap::new(),
        }
    }

    /// Builds weights for `desc` from a parameter store, checking names and shapes.
    pub fn from_store(desc: &[(String, LayerSpec)], store: &ParamStore) -> Result<Self> {
        let mut w = Self::empty();
        let mut used = 0;
        for (name, spec) in desc {
            let mut params = Vec::new();
            for shape in spec.param_shapes() {
                let key = param_name(name, shape.suffix);
                let t = store
                    .get(&key)
                    .ok_or_else(|| Error::domain(format!("missing parameter {key}")))?;
                if t.shape() != shape.shape.as_slice() {
                    return Err(Error::domain(format!(
                        "parameter {key}: expected shape {:?}, found {:?}",
                        shape.shape,
                        t.shape()
                    )));
                }
                params.push(t.to_vec());
                used += 1;
            }
            w.push(name, spec.clone(), params)?;
        }
        if used != store.len() {
            let extra: Vec<&str> = store
                .names()
                .filter(|n| match n.rsplit_once('.') {
                    Some((layer, _)) => !w.layers.contains_key(layer),
                    None => true,
                })
                .collect();
            return Err(Error::domain(format!("unexpected parameters {extra:?}")));
        }
        Ok(w)
    }

    pub fn push(&mut self, name: &str, spec: LayerSpec, params: Vec<Vec<T>>) -> Result<()> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if params.len() != shapes.len()
            || params
                .iter()
                .zip(&shapes)
                .any(|(p, s)| p.len() != s.shape.iter().product::<usize>())
        {
            return Err(Error::domain(format!("parameter sizes do not match layer {name}")));
        }
        if self.layers.contains_key(name) {
            return Err(Error::domain(format!("duplicate layer {name}")));
        }
        self.order.push(name.to_string());
        self.layers.insert(name.to_string(), LayerWeights { spec, params });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&LayerWeights<T>> {
        self.layers
            .get(name)
            .ok_or_else(|| Error::domain(format!("no layer named {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut LayerWeights<T>> {
        self.layers.get_mut(name)
    }

    /// Layers in description order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &LayerWeights<T>)> {
        self.order.iter().map(|n| (n.as_str(), &self.layers[n]))
    }

    pub fn description(&self) -> Description {
        self.iter().map(|(n, l)| (n.to_string(), l.spec.clone())).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.values().map(|l| l.spec.param_count()).sum()
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights {
            order: self.order.clone(),
            layers: self
                .layers
                .iter()
                .map(|(n, l)| {
                    (
                        n.clone(),
                        LayerWeights {
                            spec: l.spec.clone(),
                            params: l
                                .params
                                .iter()
                                .map(|p| p.iter().map(|&v| U::of(v.as_f64())).collect())
                                .collect(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn to_store(&self, dtype: DType) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        for (name, l) in self.iter() {
            for (shape, p) in l.spec.param_shapes().iter().zip(&l.params) {
                let t = Tensor::from_real(shape.shape.clone(), p, dtype)?;
                store.insert(&param_name(name, shape.suffix), t)?;
            }
        }
        Ok(store)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .values()
            .all(|l| l.params.iter().flatten().all(|v| v.is_finite()))
    }

    /// Every parameter tensor, in a fixed order shared by equal layouts.
    pub fn tensors(&self) -> impl Iterator<Item = &Vec<T>> {
        self.layers.values().flat_map(|l| l.params.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers.values_mut().flat_map(|l| l.params.iter_mut())
    }

    /// Zero-valued parameters with the same layout.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for l in z.layers.values_mut() {
            for p in &mut l.params {
                p.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc() -> Description {
        vec![
            (
                "a".into(),
                LayerSpec::GroupedLinear {
                    input: 4,
                    output: 2,
                    groups: 2,
                    bias: true,
                },
            ),
            ("b".into(), LayerSpec::GruCell { input: 2, hidden: 3 }),
        ]
    }

    #[test]
    fn init_is_seeded_and_store_round_trips() {
        let w1 = Weights::<f64>::init(&desc(), 5).unwrap();
        let w2 = Weights::<f64>::init(&desc(), 5).unwrap();
        let w3 = Weights::<f64>::init(&desc(), 6).unwrap();
        assert_eq!(w1, w2);
        assert_ne!(w1, w3);
        let store = w1.to_store(DType::F64).unwrap();
        assert_eq!(store.len(), 6);
        assert_eq!(Weights::<f64>::from_store(&desc(), &store).unwrap(), w1);
        assert_eq!(w1.param_count(), 4 + 2 + 3 * 3 * 2 + 3 * 3 * 3 + 9 + 9);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let w = Weights::<f64>::init(&desc(), 1).unwrap();
        let bound = (1.0f64 / 2.0).sqrt();
        assert!(w.get("a").unwrap().params[0].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn from_store_rejects_wrong_shape_and_extras() {
        let w = Weights::<f64>::init(&desc(), 1).unwrap();
        let mut store = w.to_store(DType::F32).unwrap();
        store
            .insert("c.weight", Tensor::zeros(vec![1], DType::F32))
            .unwrap();
        assert!(Weights::<f64>::from_store(&desc(), &store).is_err());
        let short = &desc()[..1];
        let store = w.to_store(DType::F32).unwrap();
        assert!(Weights::<f64>::from_store(short, &store).is_err());
    }
}
