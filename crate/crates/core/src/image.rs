//! Raster types and image operators: bilinear sampling with analytic
//! gradients, Laplace edge response, percentile edge masks, and resizing.
//!
//! Rasters are row-major with `(0, 0)` at the top-left pixel center.
//! Intensities live in `[0, 1]`. Depth maps store one value per pixel;
//! entries that are not positive mark missing measurements.

use crate::error::{Error, Result};

/// Default percentile used to threshold edge responses into a mask.
pub const DEFAULT_EDGE_PERCENTILE: f64 = 90.0;

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "image buffer holds {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!(
                "intensity {bad} outside [0, 1]"
            )));
        }
        Ok(ImageGray { width, height, data })
    }

    /// Builds an image by evaluating `f(u, v)` at every pixel center.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, data)
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ImageGray) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel scene depth. Values `<= 0` mark pixels without a measurement;
/// all stored values must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "depth buffer holds {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!("non-finite depth {bad}")));
        }
        Ok(DepthMap { width, height, data })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::new(width, height, data)
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.at(u, v) > 0.0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

/// Boolean pixel mask, true where a pixel is selected.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl EdgeMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask buffer holds {} values, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(EdgeMask { width, height, data })
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }
}

#[inline]
fn cell_origin(coord: f64, extent: usize) -> (usize, f64) {
    // Clamp the cell so a coordinate exactly on the far border samples the
    // last pixel with weight one.
    let i = (coord.floor() as usize).min(extent.saturating_sub(2));
    (i, coord - i as f64)
}

fn check_bounds(img: &ImageGray, u: f64, v: f64) -> Result<()> {
    let max_u = (img.width - 1) as f64;
    let max_v = (img.height - 1) as f64;
    if !(u.is_finite() && v.is_finite() && u >= 0.0 && u <= max_u && v >= 0.0 && v <= max_v) {
        return Err(Error::OutOfBounds { u, v, width: img.width, height: img.height });
    }
    Ok(())
}

/// Bilinear interpolation at a continuous coordinate inside
/// `[0, w-1] x [0, h-1]`. Integer coordinates return the stored pixel
/// value exactly.
pub fn sample_bilinear(img: &ImageGray, u: f64, v: f64) -> Result<f64> {
    check_bounds(img, u, v)?;
    Ok(bilinear_cell(img, u, v).0)
}

/// Spatial gradient `(d/du, d/dv)` of the bilinear interpolation surface at
/// a continuous coordinate. On cell boundaries the cell to the right/below
/// is used, matching [`sample_bilinear`]'s cell choice.
pub fn sample_gradient(img: &ImageGray, u: f64, v: f64) -> Result<(f64, f64)> {
    let (_, gu, gv) = sample_bilinear_with_gradient(img, u, v)?;
    Ok((gu, gv))
}

/// Fused value and gradient of the bilinear surface; one cell lookup for
/// both, used by the photometric loss gradient.
pub fn sample_bilinear_with_gradient(img: &ImageGray, u: f64, v: f64) -> Result<(f64, f64, f64)> {
    check_bounds(img, u, v)?;
    Ok(bilinear_cell(img, u, v))
}

/// Bilinear value and gradient without the bounds check; callers guarantee
/// the coordinate lies inside `[0, w-1] x [0, h-1]`.
#[inline]
pub(crate) fn bilinear_cell(img: &ImageGray, u: f64, v: f64) -> (f64, f64, f64) {
    let (x0, fu) = cell_origin(u, img.width);
    let (y0, fv) = cell_origin(v, img.height);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let i00 = img.at(x0, y0);
    let i10 = img.at(x1, y0);
    let i01 = img.at(x0, y1);
    let i11 = img.at(x1, y1);
    let top = (1.0 - fu) * i00 + fu * i10;
    let bottom = (1.0 - fu) * i01 + fu * i11;
    let value = (1.0 - fv) * top + fv * bottom;
    let gu = (1.0 - fv) * (i10 - i00) + fv * (i11 - i01);
    let gv = bottom - top;
    (value, gu, gv)
}

/// Discrete Laplace stencil used for the edge response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LaplaceKernel {
    /// 4-neighborhood: center weight -4, the four edge neighbors weight 1.
    #[default]
    Four,
    /// 8-neighborhood: center weight -8, all eight neighbors weight 1.
    Eight,
}

/// Laplace edge response of an image. The border ring, where the stencil
/// does not fit, is set to zero. Requires at least a 3x3 image.
pub fn laplace(img: &ImageGray, kernel: LaplaceKernel) -> Result<Vec<f64>> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(Error::RasterTooSmall { width: w, height: h });
    }
    let mut out = vec![0.0; w * h];
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let cross =
                img.at(u - 1, v) + img.at(u + 1, v) + img.at(u, v - 1) + img.at(u, v + 1);
            out[v * w + u] = match kernel {
                LaplaceKernel::Four => cross - 4.0 * img.at(u, v),
                LaplaceKernel::Eight => {
                    let diag = img.at(u - 1, v - 1)
                        + img.at(u + 1, v - 1)
                        + img.at(u - 1, v + 1)
                        + img.at(u + 1, v + 1);
                    cross + diag - 8.0 * img.at(u, v)
                }
            };
        }
    }
    Ok(out)
}

/// Marks the strongest edge responses: pixels whose `|response|` falls in
/// the top `(100 - percentile)` percent of the raster, by count, with ties
/// included. Zero responses are never marked, so a constant image yields an
/// empty mask and `percentile = 0` marks exactly the nonzero pixels.
/// `percentile` is clamped to `[0, 100]`.
pub fn edge_mask(response: &[f64], width: usize, height: usize, percentile: f64) -> Result<EdgeMask> {
    if response.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "response buffer holds {} values, expected {}x{} = {}",
            response.len(),
            width,
            height,
            width * height
        )));
    }
    if response.is_empty() {
        return EdgeMask::new(width, height, Vec::new());
    }
    if let Some(bad) = response.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidRaster(format!("non-finite edge response {bad}")));
    }
    let p = percentile.clamp(0.0, 100.0);
    let n = response.len();
    let keep = ((n as f64) * (100.0 - p) / 100.0).ceil() as usize;
    if keep == 0 {
        return EdgeMask::new(width, height, vec![false; n]);
    }
    let keep = keep.min(n);
    let mut magnitudes: Vec<f64> = response.iter().map(|r| r.abs()).collect();
    // Threshold = k-th largest magnitude; everything at or above it is kept.
    let (_, threshold, _) = magnitudes
        .select_nth_unstable_by(keep - 1, |a, b| b.partial_cmp(a).expect("finite magnitudes"));
    let threshold = *threshold;
    let data = response.iter().map(|r| r.abs() >= threshold && r.abs() > 0.0).collect();
    EdgeMask::new(width, height, data)
}

/// Resizes an intensity image with bilinear filtering, pixel centers
/// aligned via the half-pixel convention.
pub fn resize_bilinear(img: &ImageGray, new_w: usize, new_h: usize) -> Result<ImageGray> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::DimensionMismatch("resize target must be nonzero".into()));
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    let max_u = (img.width - 1) as f64;
    let max_v = (img.height - 1) as f64;
    ImageGray::from_fn(new_w, new_h, |u, v| {
        let su = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, max_u);
        let sv = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, max_v);
        sample_bilinear(img, su, sv).expect("clamped coordinate is in bounds")
    })
}

/// Resizes a depth map with nearest-neighbor lookup. Interpolating depths
/// would invent values across discontinuities, so the nearest measurement
/// is kept instead.
pub fn resize_nearest(depth: &DepthMap, new_w: usize, new_h: usize) -> Result<DepthMap> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::DimensionMismatch("resize target must be nonzero".into()));
    }
    let sx = depth.width as f64 / new_w as f64;
    let sy = depth.height as f64 / new_h as f64;
    DepthMap::from_fn(new_w, new_h, |u, v| {
        let su = (((u as f64 + 0.5) * sx - 0.5).round().max(0.0) as usize).min(depth.width - 1);
        let sv = (((v as f64 + 0.5) * sy - 0.5).round().max(0.0) as usize).min(depth.height - 1);
        depth.at(su, sv)
    })
}

/// Luma used when collapsing color samples to grayscale at ingestion.
pub fn luma_from_rgb(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn checker2() -> ImageGray {
        ImageGray::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn bilinear_center_of_checkerboard() {
        let img = checker2();
        assert_abs_diff_eq!(sample_bilinear(&img, 0.5, 0.5).unwrap(), 0.5, epsilon = 0.0);
    }

    #[test]
    fn bilinear_at_integer_coordinates_is_exact() {
        let img = ImageGray::new(3, 2, vec![0.1, 0.4, 0.9, 0.2, 0.8, 0.3]).unwrap();
        for v in 0..2 {
            for u in 0..3 {
                let s = sample_bilinear(&img, u as f64, v as f64).unwrap();
                assert_eq!(s, img.at(u, v));
            }
        }
    }

    #[test]
    fn bilinear_rejects_out_of_bounds() {
        let img = checker2();
        assert!(matches!(
            sample_bilinear(&img, -0.001, 0.0),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(sample_bilinear(&img, 0.0, 1.001).is_err());
        assert!(sample_bilinear(&img, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn gradient_of_horizontal_ramp() {
        // Both rows are (0, 1): unit slope along u, flat along v.
        let img = ImageGray::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        for &(u, v) in &[(0.25, 0.25), (0.7, 0.3), (0.5, 0.9)] {
            let (gu, gv) = sample_gradient(&img, u, v).unwrap();
            assert_abs_diff_eq!(gu, 1.0, epsilon = 0.0);
            assert_abs_diff_eq!(gv, 0.0, epsilon = 0.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_of_bilinear() {
        let img = ImageGray::from_fn(8, 6, |u, v| {
            (0.3 + 0.25 * ((u as f64) * 0.7).sin() + 0.2 * ((v as f64) * 0.5).cos()).clamp(0.0, 1.0)
        })
        .unwrap();
        let h = 1e-7;
        // Probe away from integer gridlines so the FD stays inside one cell.
        for &(u, v) in &[(1.3, 2.6), (4.45, 0.21), (6.7, 4.8), (2.5, 3.5)] {
            let (gu, gv) = sample_gradient(&img, u, v).unwrap();
            let fu = (sample_bilinear(&img, u + h, v).unwrap()
                - sample_bilinear(&img, u - h, v).unwrap())
                / (2.0 * h);
            let fv = (sample_bilinear(&img, u, v + h).unwrap()
                - sample_bilinear(&img, u, v - h).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(gu, fu, epsilon = 1e-6);
            assert_abs_diff_eq!(gv, fv, epsilon = 1e-6);
        }
    }

    fn impulse5() -> ImageGray {
        ImageGray::from_fn(5, 5, |u, v| if u == 2 && v == 2 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn laplace_four_impulse_response() {
        let r = laplace(&impulse5(), LaplaceKernel::Four).unwrap();
        assert_eq!(r[2 * 5 + 2], -4.0);
        for &(u, v) in &[(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(r[v * 5 + u], 1.0, "at ({u}, {v})");
        }
        assert_eq!(r[1 * 5 + 1], 0.0, "diagonal neighbor");
        assert!(r[0..5].iter().all(|v| *v == 0.0), "border row is zero");
    }

    #[test]
    fn laplace_eight_impulse_response() {
        let r = laplace(&impulse5(), LaplaceKernel::Eight).unwrap();
        assert_eq!(r[2 * 5 + 2], -8.0);
        for v in 1..4 {
            for u in 1..4 {
                if u == 2 && v == 2 {
                    continue;
                }
                assert_eq!(r[v * 5 + u], 1.0, "at ({u}, {v})");
            }
        }
    }

    #[test]
    fn laplace_rejects_tiny_images() {
        let img = checker2();
        assert!(matches!(
            laplace(&img, LaplaceKernel::Four),
            Err(Error::RasterTooSmall { .. })
        ));
    }

    #[test]
    fn edge_mask_of_constant_response_is_empty() {
        let r = vec![0.0; 25];
        let m = edge_mask(&r, 5, 5, 90.0).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn edge_mask_of_impulse_response_marks_stencil() {
        let r = laplace(&impulse5(), LaplaceKernel::Four).unwrap();
        let m = edge_mask(&r, 5, 5, 90.0).unwrap();
        // Top 10% of 25 pixels: 3 by count, extended to 5 by the tie at |1|.
        assert_eq!(m.count(), 5);
        assert!(m.get(2, 2));
        for &(u, v) in &[(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert!(m.get(u, v), "at ({u}, {v})");
        }
    }

    #[test]
    fn edge_mask_percentile_zero_marks_all_nonzero() {
        let r = laplace(&impulse5(), LaplaceKernel::Four).unwrap();
        let m = edge_mask(&r, 5, 5, 0.0).unwrap();
        let nonzero = r.iter().filter(|v| **v != 0.0).count();
        assert_eq!(m.count(), nonzero);
    }

    proptest! {
        #[test]
        fn bilinear_respects_min_max(
            data in proptest::collection::vec(0.0f64..1.0, 12),
            u in 0.0f64..3.0,
            v in 0.0f64..2.0,
        ) {
            let img = ImageGray::new(4, 3, data).unwrap();
            let s = sample_bilinear(&img, u, v).unwrap();
            let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        }

        #[test]
        fn edge_mask_grows_as_percentile_drops(
            data in proptest::collection::vec(-1.0f64..1.0, 30),
            p_low in 0.0f64..100.0,
            delta in 0.0f64..50.0,
        ) {
            let p_high = (p_low + delta).min(100.0);
            let low = edge_mask(&data, 6, 5, p_low).unwrap();
            let high = edge_mask(&data, 6, 5, p_high).unwrap();
            // Lower percentile keeps more pixels, and the kept sets nest.
            prop_assert!(low.count() >= high.count());
            for i in 0..30 {
                if high.data()[i] {
                    prop_assert!(low.data()[i]);
                }
            }
        }

        #[test]
        fn laplace_of_constant_image_is_zero(c in 0.0f64..1.0) {
            let img = ImageGray::new(5, 4, vec![c; 20]).unwrap();
            for kernel in [LaplaceKernel::Four, LaplaceKernel::Eight] {
                let r = laplace(&img, kernel).unwrap();
                prop_assert!(r.iter().all(|v| v.abs() < 1e-12));
                let m = edge_mask(&r, 5, 4, 90.0).unwrap();
                prop_assert_eq!(m.count(), 0);
            }
        }
    }
}
