//! Patch-grid arithmetic, position-embedding interpolation, and window
//! partitioning for pooling.

use alloc::format;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::tensor::Tensor;

/// Default ViT patch size in pixels.
pub const DEFAULT_PATCH_SIZE: usize = 14;

/// Square grid of visual patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    /// Patch edge in pixels.
    pub patch_size: usize,
}

impl GridShape {
    pub fn square(side: usize) -> Self {
        GridShape {
            height: side,
            width: side,
            patch_size: DEFAULT_PATCH_SIZE,
        }
    }

    /// Total patch count P.
    pub fn patches(&self) -> usize {
        self.height * self.width
    }
}

/// Grid of position embeddings: height×width cells of dimension `channels`,
/// stored as an (height·width)×channels tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PosEmbedGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Tensor,
}

impl PosEmbedGrid {
    pub fn new(height: usize, width: usize, values: Tensor) -> Result<Self, CoreError> {
        let channels = values.cols();
        if values.rows() != height * width {
            return Err(CoreError::ShapeMismatch {
                op: "PosEmbedGrid::new",
                left: [height, width].to_vec(),
                right: values.shape().to_vec(),
            });
        }
        Ok(PosEmbedGrid {
            height,
            width,
            channels,
            values,
        })
    }

    fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.values.data()[(y * self.width + x) * self.channels + c]
    }
}

/// Derive the patch grid for a square resolution.
pub fn patch_count(resolution: usize, patch_size: usize) -> Result<GridShape, CoreError> {
    if patch_size == 0 || resolution % patch_size != 0 {
        return Err(CoreError::Geometry(format!(
            "resolution {resolution} is not divisible by patch size {patch_size}"
        )));
    }
    let side = resolution / patch_size;
    Ok(GridShape {
        height: side,
        width: side,
        patch_size,
    })
}

/// Bilinear, align-corners resampling of a position-embedding grid to a new
/// grid shape. Corner embeddings are preserved exactly; the operation is
/// linear in the source values.
pub fn interpolate_pos_embed(
    src: &PosEmbedGrid,
    target: &GridShape,
) -> Result<PosEmbedGrid, CoreError> {
    if src.height < 2 || src.width < 2 {
        return Err(CoreError::Geometry(format!(
            "source grid {}x{} too small to interpolate (need at least 2x2)",
            src.height, src.width
        )));
    }
    if target.height < 1 || target.width < 1 {
        return Err(CoreError::Geometry("target grid smaller than 1x1".into()));
    }
    let (th, tw, c) = (target.height, target.width, src.channels);
    let mut out = Vec::with_capacity(th * tw * c);
    for ty in 0..th {
        // align-corners: endpoints map to endpoints
        let sy = if th == 1 {
            0.0
        } else {
            ty as f64 * (src.height - 1) as f64 / (th - 1) as f64
        };
        let y0 = (libm::floor(sy) as usize).min(src.height - 1);
        let y1 = (y0 + 1).min(src.height - 1);
        let fy = sy - y0 as f64;
        for tx in 0..tw {
            let sx = if tw == 1 {
                0.0
            } else {
                tx as f64 * (src.width - 1) as f64 / (tw - 1) as f64
            };
            let x0 = (libm::floor(sx) as usize).min(src.width - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            let fx = sx - x0 as f64;
            for ch in 0..c {
                let top = src.at(y0, x0, ch) * (1.0 - fx) + src.at(y0, x1, ch) * fx;
                let bot = src.at(y1, x0, ch) * (1.0 - fx) + src.at(y1, x1, ch) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    let values = Tensor::new([th * tw, c].to_vec(), out)?;
    PosEmbedGrid::new(th, tw, values)
}

/// Adaptive window boundaries along one axis: group i covers
/// [⌊i·extent/q⌋, ⌊(i+1)·extent/q⌋), so windows tile the axis exactly and
/// side lengths differ by at most one.
fn axis_bounds(extent: usize, q: usize) -> Vec<(usize, usize)> {
    (0..q)
        .map(|i| (i * extent / q, (i + 1) * extent / q))
        .collect()
}

/// Partition an h×w grid into q_side×q_side adaptive windows of row-major
/// patch indices. Windows are disjoint, cover every index, and are uniform
/// exactly when q_side divides both extents.
pub fn window_partition(grid: &GridShape, q_side: usize) -> Result<Vec<Vec<usize>>, CoreError> {
    if q_side < 1 || q_side > grid.height.min(grid.width) {
        return Err(CoreError::Geometry(format!(
            "window count {q_side} out of range for {}x{} grid",
            grid.height, grid.width
        )));
    }
    let rows = axis_bounds(grid.height, q_side);
    let cols = axis_bounds(grid.width, q_side);
    let mut groups = Vec::with_capacity(q_side * q_side);
    for &(r0, r1) in &rows {
        for &(c0, c1) in &cols {
            let mut group = Vec::with_capacity((r1 - r0) * (c1 - c0));
            for y in r0..r1 {
                for x in c0..c1 {
                    group.push(y * grid.width + x);
                }
            }
            groups.push(group);
        }
    }
    Ok(groups)
}
