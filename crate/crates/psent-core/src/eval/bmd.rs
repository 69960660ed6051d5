//! Bone-mineral-density proxy from CT Hounsfield units: per-slice ellipse
//! averaging and the normal/abnormal stratification of test subjects.

use alloc::vec::Vec;
use core::ops::Range;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::EvalError;

/// Default HU threshold separating normal from abnormal bone density.
pub const DEFAULT_BMD_THRESHOLD_HU: f64 = 160.0;

/// Axial CT volume of Hounsfield units with voxel spacing in mm.
/// Values are stored slice-major: index `(z * ny + y) * nx + x`.
#[derive(Clone, Debug)]
pub struct HuVolume {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    values: Vec<f32>,
}

impl HuVolume {
    /// Validate and build from `dims = [nx, ny, nz]` and per-axis spacing.
    pub fn new(
        dims: [usize; 3],
        spacing_mm: [f64; 3],
        values: Vec<f32>,
    ) -> Result<Self, EvalError> {
        let expect = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(EvalError::InvalidParam("volume dimensions overflow"))?;
        if expect == 0 {
            return Err(EvalError::InvalidParam("volume dimensions must be nonzero"));
        }
        if values.len() != expect {
            return Err(EvalError::VolumeSizeMismatch {
                expected: expect,
                got: values.len(),
            });
        }
        if spacing_mm.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(EvalError::InvalidParam("voxel spacing must be positive"));
        }
        Ok(Self {
            dims,
            spacing_mm,
            values,
        })
    }

    /// `[nx, ny, nz]` voxel counts.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Per-axis voxel spacing, mm.
    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    /// HU value at voxel `(x, y, z)`.
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    /// Flat values, slice-major.
    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Elliptical region of interest in the axial plane, mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipseRoi {
    /// Center `(x, y)`, mm.
    pub center_mm: [f64; 2],
    /// Semi-axes `(a, b)` along x and y, mm.
    pub semi_axes_mm: [f64; 2],
}

impl EllipseRoi {
    /// Validate and build.
    pub fn new(center_mm: [f64; 2], semi_axes_mm: [f64; 2]) -> Result<Self, EvalError> {
        if center_mm.iter().any(|v| !v.is_finite())
            || semi_axes_mm.iter().any(|&v| !(v.is_finite() && v > 0.0))
        {
            return Err(EvalError::InvalidParam(
                "ellipse needs finite center and positive semi-axes",
            ));
        }
        Ok(Self {
            center_mm,
            semi_axes_mm,
        })
    }

    /// Ellipse with a prescribed area and aspect ratio `a/b`.
    pub fn from_area(center_mm: [f64; 2], area_mm2: f64, aspect: f64) -> Result<Self, EvalError> {
        if !(area_mm2.is_finite() && area_mm2 > 0.0 && aspect.is_finite() && aspect > 0.0) {
            return Err(EvalError::InvalidParam(
                "ellipse area and aspect must be positive",
            ));
        }
        let a = (area_mm2 * aspect / core::f64::consts::PI).sqrt();
        Self::new(center_mm, [a, a / aspect])
    }

    /// Enclosed area, mm².
    pub fn area_mm2(&self) -> f64 {
        core::f64::consts::PI * self.semi_axes_mm[0] * self.semi_axes_mm[1]
    }

    /// Whether the point `(x, y)` in mm lies inside (boundary inclusive).
    pub fn contains(&self, x_mm: f64, y_mm: f64) -> bool {
        let dx = (x_mm - self.center_mm[0]) / self.semi_axes_mm[0];
        let dy = (y_mm - self.center_mm[1]) / self.semi_axes_mm[1];
        dx * dx + dy * dy <= 1.0
    }
}

/// Mean HU over an elliptical column: voxels whose center falls inside the
/// ellipse are averaged per axial slice, then slice means are averaged over
/// `slices`. The ellipse must lie within the slice bounds.
pub fn bmd_mean_hu(
    volume: &HuVolume,
    roi: &EllipseRoi,
    slices: Range<usize>,
) -> Result<f64, EvalError> {
    let [nx, ny, nz] = volume.dims();
    let [sx, sy, _] = volume.spacing_mm();
    if slices.is_empty() || slices.end > nz {
        return Err(EvalError::InvalidSlices {
            start: slices.start,
            end: slices.end,
            available: nz,
        });
    }
    let [cx, cy] = roi.center_mm;
    let [a, b] = roi.semi_axes_mm;
    if cx - a < 0.0 || cx + a > nx as f64 * sx || cy - b < 0.0 || cy + b > ny as f64 * sy {
        return Err(EvalError::RoiOutOfBounds);
    }

    // Voxel (x, y) has its center at ((x + 0.5) sx, (y + 0.5) sy); restrict
    // the scan to the ellipse's bounding box.
    let x_lo = (((cx - a) / sx - 0.5).ceil().max(0.0)) as usize;
    let x_hi = ((((cx + a) / sx - 0.5).floor()) as usize).min(nx - 1);
    let y_lo = (((cy - b) / sy - 0.5).ceil().max(0.0)) as usize;
    let y_hi = ((((cy + b) / sy - 0.5).floor()) as usize).min(ny - 1);

    let mut inside: Vec<(usize, usize)> = Vec::new();
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            if roi.contains((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy) {
                inside.push((x, y));
            }
        }
    }
    if inside.is_empty() {
        return Err(EvalError::EmptyRoi);
    }

    let n_slices = slices.len();
    let mut total = 0.0f64;
    for z in slices {
        let mut slice_sum = 0.0f64;
        for &(x, y) in &inside {
            slice_sum += volume.at(x, y, z) as f64;
        }
        total += slice_sum / inside.len() as f64;
    }
    Ok(total / n_slices as f64)
}

/// Bone-density stratum of a subject.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BmdStratum {
    /// Mean HU at or above the threshold.
    Normal,
    /// Mean HU below the threshold (osteopenia/osteoporosis range).
    Abnormal,
}

impl BmdStratum {
    /// Stable lowercase name.
    pub fn as_str(&self) -> &'static str {
        match self {
            BmdStratum::Normal => "normal",
            BmdStratum::Abnormal => "abnormal",
        }
    }
}

impl core::fmt::Display for BmdStratum {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A subject's density measurement and its stratification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BmdAssessment {
    /// Measured mean HU.
    pub mean_hu: f64,
    /// Threshold used, HU.
    pub threshold_hu: f64,
    /// Resulting stratum: normal iff `mean_hu >= threshold_hu`.
    pub stratum: BmdStratum,
}

impl BmdAssessment {
    /// Classify a measurement against a threshold.
    pub fn new(mean_hu: f64, threshold_hu: f64) -> Self {
        let stratum = if mean_hu >= threshold_hu {
            BmdStratum::Normal
        } else {
            BmdStratum::Abnormal
        };
        Self {
            mean_hu,
            threshold_hu,
            stratum,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;
    use alloc::vec;

    fn uniform_volume(hu: f32, dims: [usize; 3]) -> HuVolume {
        HuVolume::new(
            dims,
            [0.5, 0.5, 1.0],
            vec![hu; dims[0] * dims[1] * dims[2]],
        )
        .unwrap()
    }

    #[test]
    fn uniform_volume_averages_to_its_value() {
        let vol = uniform_volume(200.0, [64, 64, 10]);
        let roi = EllipseRoi::from_area([16.0, 16.0], 450.0, 1.2).unwrap();
        assert!((roi.area_mm2() - 450.0).abs() < 1e-9);
        let m = bmd_mean_hu(&vol, &roi, 0..10).unwrap();
        assert_eq!(m, 200.0);
    }

    #[test]
    fn slice_means_average_evenly() {
        // Two slices of constant 100 and 300 -> 200 regardless of ellipse.
        let dims = [40, 40, 2];
        let mut values = vec![100.0f32; 40 * 40];
        values.extend(vec![300.0f32; 40 * 40]);
        let vol = HuVolume::new(dims, [1.0, 1.0, 2.0], values).unwrap();
        let roi = EllipseRoi::new([20.0, 20.0], [12.0, 11.9]).unwrap();
        let m = bmd_mean_hu(&vol, &roi, 0..2).unwrap();
        assert!((m - 200.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_volume_matches_bruteforce() {
        // HU = x + 2y + 3z over a 50x60x4 grid with anisotropic spacing.
        let dims = [50, 60, 4];
        let spacing = [0.7, 0.6, 2.5];
        let mut values = Vec::with_capacity(50 * 60 * 4);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    values.push((x + 2 * y + 3 * z) as f32);
                }
            }
        }
        let vol = HuVolume::new(dims, spacing, values).unwrap();
        let roi = EllipseRoi::new([17.0, 18.5], [9.0, 7.25]).unwrap();
        let got = bmd_mean_hu(&vol, &roi, 1..4).unwrap();

        // Independent enumeration over every voxel center.
        let mut slice_means = Vec::new();
        for z in 1..4usize {
            let (mut sum, mut count) = (0.0f64, 0usize);
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    let px = (x as f64 + 0.5) * spacing[0];
                    let py = (y as f64 + 0.5) * spacing[1];
                    let dx = (px - 17.0) / 9.0;
                    let dy = (py - 18.5) / 7.25;
                    if dx * dx + dy * dy <= 1.0 {
                        sum += (x + 2 * y + 3 * z) as f64;
                        count += 1;
                    }
                }
            }
            slice_means.push(sum / count as f64);
        }
        let want = slice_means.iter().sum::<f64>() / slice_means.len() as f64;
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn roi_and_slice_validation() {
        let vol = uniform_volume(100.0, [20, 20, 3]);
        // 20 voxels * 0.5 mm = 10 mm extent; this ellipse pokes out.
        let roi = EllipseRoi::new([9.0, 5.0], [2.0, 2.0]).unwrap();
        assert!(matches!(
            bmd_mean_hu(&vol, &roi, 0..3),
            Err(EvalError::RoiOutOfBounds)
        ));
        let roi = EllipseRoi::new([5.0, 5.0], [2.0, 2.0]).unwrap();
        assert!(matches!(
            bmd_mean_hu(&vol, &roi, 3..3),
            Err(EvalError::InvalidSlices { .. })
        ));
        assert!(matches!(
            bmd_mean_hu(&vol, &roi, 0..4),
            Err(EvalError::InvalidSlices { .. })
        ));
        // Centers sit at 0.25 + 0.5 k mm, so a 0.1 mm ellipse centered at
        // 5.0 mm (0.25 mm from the nearest center) catches none.
        let tiny = EllipseRoi::new([5.0, 5.0], [0.1, 0.1]).unwrap();
        assert!(matches!(
            bmd_mean_hu(&vol, &tiny, 0..3),
            Err(EvalError::EmptyRoi)
        ));
    }

    #[test]
    fn volume_construction_is_validated() {
        assert!(HuVolume::new([2, 2, 2], [1.0, 1.0, 1.0], vec![0.0; 7]).is_err());
        assert!(HuVolume::new([2, 2, 0], [1.0, 1.0, 1.0], vec![]).is_err());
        assert!(HuVolume::new([2, 2, 2], [1.0, -1.0, 1.0], vec![0.0; 8]).is_err());
        let vol = HuVolume::new([2, 3, 4], [1.0, 1.0, 1.0], (0..24).map(|i| i as f32).collect())
            .unwrap();
        // Slice-major layout.
        assert_eq!(vol.at(1, 2, 3), (3 * 3 * 2 + 2 * 2 + 1) as f32);
    }

    #[test]
    fn stratification_threshold_is_inclusive() {
        assert_eq!(BmdAssessment::new(160.0, 160.0).stratum, BmdStratum::Normal);
        assert_eq!(
            BmdAssessment::new(159.99, 160.0).stratum,
            BmdStratum::Abnormal
        );
        let mut rng = SeedRng::new(59);
        for _ in 0..100 {
            let hu = rng.uniform_in(0.0, 400.0);
            let a = BmdAssessment::new(hu, DEFAULT_BMD_THRESHOLD_HU);
            assert_eq!(a.stratum == BmdStratum::Normal, hu >= 160.0);
        }
    }
}
