use crate::dynamics::Trajectory;
use crate::embedding::patch_from_history;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::Tensor;

/// Equal-length windows in standardized units, stored back to back.
#[derive(Clone, Debug)]
pub(crate) struct Windows {
    pub count: usize,
    pub len: usize,
    pub dim: usize,
    data: Vec<f64>,
}

impl Windows {
    pub fn new(model: &Model, windows: &[Trajectory]) -> Result<Self> {
        let len = windows.first().map_or(0, |w| w.len());
        let mut data = Vec::with_capacity(windows.len() * len * model.dim);
        for w in windows {
            if w.len() != len || w.dim() != model.dim {
                return Err(Error::Shape {
                    op: "training windows",
                    lhs: vec![len, model.dim],
                    rhs: vec![w.len(), w.dim()],
                });
            }
            data.extend_from_slice(model.standardizer.transform(w).states());
        }
        Ok(Self {
            count: windows.len(),
            len,
            dim: model.dim,
            data,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let n = self.len * self.dim;
        &self.data[i * n..(i + 1) * n]
    }

    /// Patch covering steps `start..start + D` of each selected window → `[B, width]`.
    pub fn patches(&self, model: &Model, idx: &[usize], start: usize) -> Tensor {
        let width = model.patch_width();
        let mut out = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            out.extend(patch_from_history(self.window(i), self.dim, start, &model.embedding));
        }
        Tensor::new(vec![idx.len(), width], out).expect("patch batch shape")
    }

    /// Raw states `start..end` of each selected window → `[B, (end − start)·V]`.
    pub fn states(&self, idx: &[usize], start: usize, end: usize) -> Tensor {
        let mut out = Vec::with_capacity(idx.len() * (end - start) * self.dim);
        for &i in idx {
            out.extend_from_slice(&self.window(i)[start * self.dim..end * self.dim]);
        }
        Tensor::new(vec![idx.len(), (end - start) * self.dim], out).expect("state batch shape")
    }
}

/// Consecutive batches of `size` (the last may be shorter).
pub(crate) fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size)
}
