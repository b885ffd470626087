use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary keep/drop indicator for every prunable weight.
///
/// One row-major layer per weight matrix. Entries only ever go from kept to
/// dropped; [`PruningMask::drop_entry`] is the sole mutator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningMask {
    layers: Vec<MaskLayer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct MaskLayer {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
    ones: usize,
}

impl PruningMask {
    /// All-ones mask for weight matrices of the given `(rows, cols)` shapes.
    pub fn full(shapes: &[(usize, usize)]) -> Self {
        let layers = shapes
            .iter()
            .map(|&(rows, cols)| MaskLayer {
                rows,
                cols,
                keep: vec![true; rows * cols],
                ones: rows * cols,
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(shapes: &[(usize, usize)], keep: Vec<Vec<bool>>) -> Result<Self> {
        if shapes.len() != keep.len() {
            return Err(Error::Shape(format!(
                "{} mask layers for {} shapes",
                keep.len(),
                shapes.len()
            )));
        }
        let layers = shapes
            .iter()
            .zip(keep)
            .enumerate()
            .map(|(l, (&(rows, cols), keep))| {
                if keep.len() != rows * cols {
                    return Err(Error::Shape(format!(
                        "mask layer {l} has {} entries, expected {rows}x{cols}",
                        keep.len()
                    )));
                }
                let ones = keep.iter().filter(|&&k| k).count();
                Ok(MaskLayer {
                    rows,
                    cols,
                    keep,
                    ones,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.rows, l.cols)).collect()
    }

    /// Total kept entries, `|m|`.
    pub fn ones(&self) -> usize {
        self.layers.iter().map(|l| l.ones).sum()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.keep.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layer_ones(&self, layer: usize) -> usize {
        self.layers[layer].ones
    }

    pub fn layer(&self, layer: usize) -> &[bool] {
        &self.layers[layer].keep
    }

    pub fn is_kept(&self, layer: usize, offset: usize) -> bool {
        self.layers[layer].keep[offset]
    }

    /// Drops one entry. Returns false if it was already dropped.
    pub fn drop_entry(&mut self, layer: usize, offset: usize) -> bool {
        let l = &mut self.layers[layer];
        if l.keep[offset] {
            l.keep[offset] = false;
            l.ones -= 1;
            true
        } else {
            false
        }
    }

    /// Elementwise `self <= other`.
    pub fn is_subset_of(&self, other: &PruningMask) -> bool {
        self.shapes() == other.shapes()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.keep.iter().zip(&b.keep).all(|(&x, &y)| !x || y))
    }

    pub fn check_shapes(&self, shapes: &[(usize, usize)]) -> Result<()> {
        if self.shapes() != shapes {
            return Err(Error::Shape(format!(
                "mask shapes {:?} do not match weights {:?}",
                self.shapes(),
                shapes
            )));
        }
        Ok(())
    }
}
