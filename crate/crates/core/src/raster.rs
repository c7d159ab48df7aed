//! Image-space machinery: binary masks, soft silhouettes, depth maps,
//! edge maps, exact Euclidean distance transforms, and occlusion
//! indicators.
//!
//! All grids are row-major with pixel `(x, y)` at index `y * width + x`.
//! Pixel centers sit at `(x + 0.5, y + 0.5)` in continuous pixel
//! coordinates.

mod depth;
mod edt;
mod soft;

pub use depth::{render_depth, DepthRender};
pub use edt::distance_transform;
pub use soft::{render_silhouette, render_silhouette_hard, SilhouetteRender, DEFAULT_SHARPNESS};

use crate::error::{Error, Result};

/// Max-pool window used by the edge extractor.
pub const EDGE_FILTER: usize = 7;

/// Default working resolution: losses are evaluated with the longer image
/// side downsampled to this many pixels.
pub const WORKING_RESOLUTION: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// Binary instance mask (values 0/1).
pub type Mask = Grid<u8>;
/// Per-pixel coverage in `[0, 1]` from the soft rasterizer.
pub type SoftSilhouette = Grid<f64>;
/// Per-pixel depth; `f64::INFINITY` where nothing renders.
pub type DepthMap = Grid<f64>;
/// Occlusion indicator: 0 where a pixel belongs only to some *other*
/// instance's mask, 1 elsewhere.
pub type OcclusionIndicator = Grid<u8>;

impl<T: Clone + Default> Grid<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![T::default(); width * height],
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "grid {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_size<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

impl Grid<u8> {
    /// Number of foreground pixels.
    pub fn fg_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Mean of foreground pixel centers, in pixel coordinates.
    pub fn fg_centroid(&self) -> Result<(f64, f64)> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                if *self.at(x, y) != 0 {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        Ok((sx / n as f64, sy / n as f64))
    }

    /// Inclusive foreground bounding box `(x0, y0, x1, y1)`.
    pub fn fg_bbox(&self) -> Result<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if *self.at(x, y) != 0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 == usize::MAX {
            return Err(Error::EmptyMask);
        }
        Ok((x0, y0, x1, y1))
    }

    /// Area-averages into a grid whose longer side is `longer` pixels, then
    /// re-thresholds at 0.5 (>= 0.5 maps to foreground). Upsampling is not
    /// supported; if the mask is already at or below the target it is
    /// returned unchanged.
    pub fn downsample_to(&self, longer: u32) -> Grid<u8> {
        let cur = self.width.max(self.height);
        if cur <= longer as usize {
            return self.clone();
        }
        let s = longer as f64 / cur as f64;
        let nw = ((self.width as f64 * s).round() as usize).max(1);
        let nh = ((self.height as f64 * s).round() as usize).max(1);
        let avg = box_resample(&self.to_f64(), nw, nh);
        let data = avg.data.iter().map(|&v| (v >= 0.5) as u8).collect();
        Grid {
            width: nw,
            height: nh,
            data,
        }
    }

    pub fn to_f64(&self) -> Grid<f64> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| (v != 0) as u8 as f64).collect(),
        }
    }
}

/// Exact box-filter resampling: every destination pixel is the area-weighted
/// mean of the source pixels it covers.
pub fn box_resample(src: &Grid<f64>, nw: usize, nh: usize) -> Grid<f64> {
    let sx = src.width as f64 / nw as f64;
    let sy = src.height as f64 / nh as f64;
    let mut out = Grid::<f64>::new(nw, nh);
    for dy in 0..nh {
        let y_lo = dy as f64 * sy;
        let y_hi = (dy + 1) as f64 * sy;
        let iy0 = y_lo.floor() as usize;
        let iy1 = (y_hi.ceil() as usize).min(src.height);
        for dx in 0..nw {
            let x_lo = dx as f64 * sx;
            let x_hi = (dx + 1) as f64 * sx;
            let ix0 = x_lo.floor() as usize;
            let ix1 = (x_hi.ceil() as usize).min(src.width);
            let mut acc = 0.0;
            let mut area = 0.0;
            for iy in iy0..iy1 {
                let wy = (y_hi.min((iy + 1) as f64) - y_lo.max(iy as f64)).max(0.0);
                for ix in ix0..ix1 {
                    let wx = (x_hi.min((ix + 1) as f64) - x_lo.max(ix as f64)).max(0.0);
                    acc += wx * wy * src.at(ix, iy);
                    area += wx * wy;
                }
            }
            *out.at_mut(dx, dy) = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    out
}

/// Binarize soft coverage: foreground where `coverage >= level`.
///
/// At a silhouette fold two faces meet edge-on and each contributes half
/// coverage, so the soft boundary sits a fraction of `1/sharpness` (in NDC)
/// outside the geometric edge. Thresholding at 0.5 keeps that convention;
/// masks produced this way round-trip through the soft renderer without the
/// slight shrink-vs-grow offset that a geometrically exact rasterization
/// carries.
pub fn threshold_mask(coverage: &SoftSilhouette, level: f64) -> Mask {
    let mut m = Mask::new(coverage.width, coverage.height);
    for i in 0..coverage.data.len() {
        m.data[i] = (coverage.data[i] >= level) as u8;
    }
    m
}

/// Edge map `E(M) = MaxPool(M) - M` with a square window of
/// [`EDGE_FILTER`] pixels, stride 1, zero padding: the band of background
/// pixels within the window radius of the mask.
pub fn edge_map(mask: &Mask) -> Mask {
    let r = (EDGE_FILTER / 2) as isize;
    let mut out = Grid::<u8>::new(mask.width, mask.height);
    for y in 0..mask.height as isize {
        for x in 0..mask.width as isize {
            let mut pooled = 0u8;
            'scan: for dy in -r..=r {
                let sy = y + dy;
                if sy < 0 || sy >= mask.height as isize {
                    continue;
                }
                for dx in -r..=r {
                    let sx = x + dx;
                    if sx < 0 || sx >= mask.width as isize {
                        continue;
                    }
                    if *mask.at(sx as usize, sy as usize) != 0 {
                        pooled = 1;
                        break 'scan;
                    }
                }
            }
            // The window contains the center pixel, so pooled >= mask there
            // and the difference is simply "background pixel near the mask".
            let m = (*mask.at(x as usize, y as usize) != 0) as u8;
            *out.at_mut(x as usize, y as usize) = pooled - m.min(pooled);
        }
    }
    out
}

/// Occlusion indicator for `target`: a pixel is 0 iff some *other* mask
/// claims it and the target's own mask does not.
pub fn occlusion_indicator(target: usize, masks: &[Mask]) -> Result<OcclusionIndicator> {
    let m = &masks[target];
    for (i, other) in masks.iter().enumerate() {
        if !m.same_size(other) {
            return Err(Error::DimensionMismatch(format!(
                "mask {i} is {}x{}, expected {}x{}",
                other.width, other.height, m.width, m.height
            )));
        }
    }
    let mut out = Grid::filled(m.width, m.height, 1u8);
    for (i, other) in masks.iter().enumerate() {
        if i == target {
            continue;
        }
        for p in 0..out.data.len() {
            if other.data[p] != 0 && m.data[p] == 0 {
                out.data[p] = 0;
            }
        }
    }
    Ok(out)
}

/// Per-pixel instance labels from a stack of masks: `-1` background,
/// otherwise the lowest instance index claiming the pixel (masks are modal,
/// so overlaps only occur from upstream noise).
pub fn label_map(masks: &[Mask]) -> Result<Grid<i32>> {
    if masks.is_empty() {
        return Err(Error::InvalidParameter("label map of zero masks".into()));
    }
    let (w, h) = (masks[0].width, masks[0].height);
    let mut out = Grid::filled(w, h, -1i32);
    for (i, m) in masks.iter().enumerate() {
        if !m.same_size(&out) {
            return Err(Error::DimensionMismatch(format!(
                "mask {i} size differs from mask 0"
            )));
        }
        for p in 0..out.data.len() {
            if m.data[p] != 0 && out.data[p] < 0 {
                out.data[p] = i as i32;
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
