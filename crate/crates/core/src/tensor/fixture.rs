//! JSON fixture format.
//!
//! ```text
//! jagged:  {"dim": D, "offsets": [...], "values": [...]}
//! jagged²: {"seq_lengths": [...], "values": [...]}
//! dense:   {"shape": [...], "data": [...]}
//! ```

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{DenseTensor, Jagged2Tensor, JaggedTensor};
use crate::error::{JaggedError, Result};
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct JaggedRepr<T> {
    dim: usize,
    offsets: Vec<usize>,
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct Jagged2Repr<T> {
    seq_lengths: Vec<usize>,
    values: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct DenseRepr<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Serialize for JaggedTensor<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JaggedRepr {
            dim: self.dim,
            offsets: self.offsets.clone(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for JaggedTensor<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = JaggedRepr::<T>::deserialize(d)?;
        JaggedTensor::new(r.dim, r.offsets, r.values).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> Serialize for Jagged2Tensor<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Jagged2Repr {
            seq_lengths: self.seq_lengths.clone(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Jagged2Tensor<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = Jagged2Repr::<T>::deserialize(d)?;
        Jagged2Tensor::new(r.seq_lengths, r.values).map_err(serde::de::Error::custom)
    }
}

impl<T: Scalar> Serialize for DenseTensor<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DenseRepr {
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for DenseTensor<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DenseRepr::<T>::deserialize(d)?;
        DenseTensor::new(r.shape, r.data).map_err(serde::de::Error::custom)
    }
}

pub fn to_json<V: Serialize>(value: &V) -> String {
    serde_json::to_string(value).expect("tensor fixtures always serialize")
}

pub fn from_json<V: for<'de> Deserialize<'de>>(text: &str) -> Result<V> {
    serde_json::from_str(text).map_err(|e| JaggedError::Fixture(e.to_string()))
}
