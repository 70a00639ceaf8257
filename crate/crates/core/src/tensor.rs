//! Conversions between ndarray frame buffers and candle tensors.

use candle_core::{DType, Device, Tensor};
use ndarray::{Array3, Array4, ArrayView3, ArrayView4, Axis};

use crate::error::Result;

pub fn from_array4(a: ArrayView4<'_, f32>, dtype: DType) -> Result<Tensor> {
    let shape = a.shape().to_vec();
    let data: Vec<f32> = a.iter().copied().collect();
    Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

pub fn from_array3(a: ArrayView3<'_, f32>, dtype: DType) -> Result<Tensor> {
    let shape = a.shape().to_vec();
    let data: Vec<f32> = a.iter().copied().collect();
    Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(dtype)?)
}

/// Stacks same-shaped `(C, H, W)` frames into a `(B, C, H, W)` tensor.
pub fn stack_frames(frames: &[ArrayView3<'_, f32>], dtype: DType) -> Result<Tensor> {
    let items = frames
        .iter()
        .map(|f| from_array3(*f, dtype))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&items, 0)?)
}

pub fn to_array4(t: &Tensor) -> Result<Array4<f32>> {
    let (a, b, c, d) = t.dims4()?;
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(Array4::from_shape_vec((a, b, c, d), v).expect("element count matches dims"))
}

pub fn to_array3(t: &Tensor) -> Result<Array3<f32>> {
    let (a, b, c) = t.dims3()?;
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(Array3::from_shape_vec((a, b, c), v).expect("element count matches dims"))
}

/// Splits a `(B, K, C, H, W)` tensor into B owned `(K, C, H, W)` arrays.
pub fn unbatch5(t: &Tensor) -> Result<Vec<Array4<f32>>> {
    let (b, k, c, h, w) = t.dims5()?;
    let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    let all = ndarray::Array5::from_shape_vec((b, k, c, h, w), v).expect("element count matches dims");
    Ok(all.axis_iter(Axis(0)).map(|x| x.to_owned()).collect())
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
