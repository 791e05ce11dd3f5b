//! Position-embedding adaptation: patch-grid coordinate normalization and
//! bicubic resampling of the embedding table.
//!
//! Patch centers normalize to (-1, 1) via `2 * (i + 0.5) / N - 1`. Sampling
//! maps a normalized coordinate back to continuous source pixel space with
//! the same half-pixel-center convention, then applies separable cubic
//! convolution (Catmull-Rom, a = -0.5) over the 4x4 neighborhood with
//! edge-clamped indices. The kernel is cardinal, so resampling a table at
//! its native resolution reproduces it exactly.

use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("patch coordinate ({w}, {h}) outside {width}x{height} grid")]
    CoordOutOfRange {
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid table: {0}")]
    InvalidTable(String),
}

/// A target patch layout of H_p x W_p patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub height: usize,
    pub width: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "grid dimensions must be positive");
        Self { height, width }
    }
}

/// A learnable position-embedding table: an H x W grid of D-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<R: Real> {
    height: usize,
    width: usize,
    dim: usize,
    /// Row-major H x W x D.
    values: Vec<R>,
}

impl<R: Real> EmbeddingTable<R> {
    pub fn new(height: usize, width: usize, dim: usize, values: Vec<R>) -> Result<Self, GeomError> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(GeomError::InvalidTable("dimensions must be positive".into()));
        }
        if values.len() != height * width * dim {
            return Err(GeomError::InvalidTable(format!(
                "expected {} values, got {}",
                height * width * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidTable("non-finite value".into()));
        }
        Ok(Self {
            height,
            width,
            dim,
            values,
        })
    }

    pub fn from_fn(height: usize, width: usize, dim: usize, f: impl Fn(usize, usize, usize) -> R) -> Self {
        let mut values = Vec::with_capacity(height * width * dim);
        for y in 0..height {
            for x in 0..width {
                for d in 0..dim {
                    values.push(f(y, x, d));
                }
            }
        }
        Self::new(height, width, dim, values).expect("constructed consistently")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The D-vector at grid node (row y, column x).
    pub fn at(&self, y: usize, x: usize) -> &[R] {
        let start = (y * self.width + x) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }
}

/// Normalize integer patch coordinates to the continuous grid spanning
/// (-1, 1): `(2 * (w + 0.5) / W_p - 1, 2 * (h + 0.5) / H_p - 1)`.
pub fn normalize_coords<R: Real>(
    grid: &PatchGrid,
    w: usize,
    h: usize,
) -> Result<(R, R), GeomError> {
    if w >= grid.width || h >= grid.height {
        return Err(GeomError::CoordOutOfRange {
            w,
            h,
            width: grid.width,
            height: grid.height,
        });
    }
    let half = R::lit(0.5);
    let two = R::lit(2.0);
    let w_norm = two * (R::of_usize(w) + half) / R::of_usize(grid.width) - R::one();
    let h_norm = two * (R::of_usize(h) + half) / R::of_usize(grid.height) - R::one();
    Ok((w_norm, h_norm))
}

/// Cubic convolution kernel; `a = -0.5` is Catmull-Rom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicubicKernel<R: Real> {
    pub a: R,
}

impl<R: Real> Default for BicubicKernel<R> {
    fn default() -> Self {
        Self { a: R::lit(-0.5) }
    }
}

impl<R: Real> BicubicKernel<R> {
    pub fn weight(&self, x: R) -> R {
        let a = self.a;
        let x = x.abs();
        if x <= R::one() {
            (a + R::lit(2.0)) * x * x * x - (a + R::lit(3.0)) * x * x + R::one()
        } else if x < R::lit(2.0) {
            a * x * x * x - R::lit(5.0) * a * x * x + R::lit(8.0) * a * x - R::lit(4.0) * a
        } else {
            R::zero()
        }
    }

    /// Tap weights for the four neighbors of a fractional offset t in [0, 1).
    fn taps(&self, t: R) -> [R; 4] {
        [
            self.weight(t + R::one()),
            self.weight(t),
            self.weight(R::one() - t),
            self.weight(R::lit(2.0) - t),
        ]
    }
}

/// Map a normalized coordinate to continuous source pixel space under the
/// same half-pixel-center convention as [`normalize_coords`].
fn to_source_pixel<R: Real>(norm: R, extent: usize) -> R {
    (norm + R::one()) / R::lit(2.0) * R::of_usize(extent) - R::lit(0.5)
}

fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Sample a D-vector at a normalized (w_norm, h_norm) coordinate with the
/// default Catmull-Rom kernel.
pub fn bicubic_sample<R: Real>(table: &EmbeddingTable<R>, coord_norm: (R, R)) -> Vec<R> {
    bicubic_sample_with(table, coord_norm, &BicubicKernel::default())
}

/// Separable cubic convolution over the 4x4 neighborhood, edge-clamped,
/// applied independently per embedding dimension.
pub fn bicubic_sample_with<R: Real>(
    table: &EmbeddingTable<R>,
    coord_norm: (R, R),
    kernel: &BicubicKernel<R>,
) -> Vec<R> {
    let x = to_source_pixel(coord_norm.0, table.width());
    let y = to_source_pixel(coord_norm.1, table.height());
    let x0 = x.floor();
    let y0 = y.floor();
    let wx = kernel.taps(x - x0);
    let wy = kernel.taps(y - y0);
    let x0 = x0.to_isize().expect("coordinate in range");
    let y0 = y0.to_isize().expect("coordinate in range");

    let mut out = vec![R::zero(); table.dim()];
    for (j, wyj) in wy.iter().enumerate() {
        let row = clamp_index(y0 - 1 + j as isize, table.height());
        for (i, wxi) in wx.iter().enumerate() {
            let col = clamp_index(x0 - 1 + i as isize, table.width());
            let weight = *wyj * *wxi;
            let node = table.at(row, col);
            for (acc, v) in out.iter_mut().zip(node) {
                *acc += weight * *v;
            }
        }
    }
    out
}

/// Resample the whole table onto a target patch grid:
/// `adapted(g) = bicubic_sample(orig, normalize_coords(target, g))`.
pub fn adapt_table<R: Real>(table: &EmbeddingTable<R>, target: &PatchGrid) -> EmbeddingTable<R> {
    let mut values = Vec::with_capacity(target.height * target.width * table.dim());
    for h in 0..target.height {
        for w in 0..target.width {
            let coord = normalize_coords::<R>(target, w, h).expect("loop bounds");
            values.extend(bicubic_sample(table, coord));
        }
    }
    EmbeddingTable {
        height: target.height,
        width: target.width,
        dim: table.dim(),
        values,
    }
}
