//! Elementwise operations over jagged tensors with identical layouts.

use super::JaggedTensor;
use crate::error::Result;
use crate::scalar::Scalar;

fn zip_with<T: Scalar>(
    a: &JaggedTensor<T>,
    b: &JaggedTensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<JaggedTensor<T>> {
    a.check_same_layout(b)?;
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    Ok(JaggedTensor::from_parts(a.dim(), a.offsets().to_vec(), values))
}

pub fn add<T: Scalar>(a: &JaggedTensor<T>, b: &JaggedTensor<T>) -> Result<JaggedTensor<T>> {
    zip_with(a, b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &JaggedTensor<T>, b: &JaggedTensor<T>) -> Result<JaggedTensor<T>> {
    zip_with(a, b, |x, y| x - y)
}

pub fn mul<T: Scalar>(a: &JaggedTensor<T>, b: &JaggedTensor<T>) -> Result<JaggedTensor<T>> {
    zip_with(a, b, |x, y| x * y)
}

pub fn scale<T: Scalar>(a: &JaggedTensor<T>, s: T) -> JaggedTensor<T> {
    map_unary(a, |x| x * s)
}

pub fn negate<T: Scalar>(a: &JaggedTensor<T>) -> JaggedTensor<T> {
    map_unary(a, |x| -x)
}

pub fn map_unary<T: Scalar>(a: &JaggedTensor<T>, f: impl Fn(T) -> T) -> JaggedTensor<T> {
    let values = a.values().iter().map(|&x| f(x)).collect();
    JaggedTensor::from_parts(a.dim(), a.offsets().to_vec(), values)
}
