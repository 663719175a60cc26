use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::Rng as _;

/// How a parameter was (or will be) initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Orthonormal rows or columns, whichever side is smaller.
    SemiOrthogonal,
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with `fan_in` the trailing extent.
    UniformFanIn,
    Zeros,
    Ones,
}

impl Init {
    pub fn sample(self, shape: &[usize], rng: &mut Rng) -> Tensor {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::SemiOrthogonal => {
                let (r, c) = match shape {
                    [n] => (1, *n),
                    [r, c] => (*r, *c),
                    _ => panic!("semi-orthogonal init needs a matrix, got {shape:?}"),
                };
                let data = linalg::semi_orthogonal(r, c, 1.0, rng);
                Tensor::new(shape, data).expect("shape checked")
            }
            Init::UniformFanIn => {
                let fan_in = *shape.last().unwrap() as f64;
                let bound = 1.0 / fan_in.sqrt();
                let numel: usize = shape.iter().product();
                let data = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(shape, data).expect("shape checked")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub init: Init,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owns every learnable tensor of a model. Layers hold [`ParamId`]s into it.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut Rng) -> ParamId {
        let value = init.sample(shape, rng);
        self.insert(name, value, init)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, init: Init) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            init,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    /// Replaces a value, keeping the shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let slot = &mut self.params[id.0].value;
        if slot.shape() != value.shape() {
            return Err(Error::shape("set", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn uniform_fan_in_respects_bound() {
        let mut rng = rng::seeded(0);
        let t = Init::UniformFanIn.sample(&[30, 16], &mut rng);
        assert!(t.max_abs() <= 0.25);
        assert!(t.max_abs() > 0.2);
    }

    #[test]
    fn store_lookup_and_count() {
        let mut rng = rng::seeded(0);
        let mut store = ParamStore::new();
        let w = store.add("layer0.W1", &[3, 4], Init::SemiOrthogonal, &mut rng);
        let b = store.add("layer0.b", &[3], Init::Zeros, &mut rng);
        assert_eq!(store.find("layer0.b"), Some(b));
        assert_eq!(store.count(), 15);
        assert!(store.set(w, Tensor::zeros(&[4, 3])).is_err());
    }
}
