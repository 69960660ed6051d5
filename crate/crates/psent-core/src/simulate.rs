//! Synthetic drilling sessions with exact ground truth.
//!
//! A [`DrillScenario`] describes one pedicle drilling on a box-shaped
//! vertebra proxy: a tilted straight advance at constant feed through an
//! approach gap, the cortical entry wall, cancellous bone, and out through
//! the far cortical wall. Because the motion is analytic, the wall-crossing
//! time is known in closed form, which makes the scenarios usable as ground
//! truth for the labeling geometry and as training corpora for the
//! classifier.
//!
//! Two generators share a scenario. [`gen_trajectory`] produces the tracked
//! tool-tip path (camera frame, optional Gaussian jitter) together with a
//! [`GroundTruth`] holding the analytic breach time and per-window labels.
//! [`gen_signals`] synthesizes the multi-sensor recording: drill rotation
//! harmonics and band-limited cancellous texture on the low-frequency route,
//! a wideband burst at the breach instant on the high-frequency route, an
//! ambient floor, and per-sensor gains and measurement noise.
//!
//! All randomness derives from the scenario seed through fixed, purpose-keyed
//! streams, so every product is bitwise reproducible and independent of which
//! sensor subset is requested.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dsp::{slice_windows, DspError, WindowSlice, WindowSpec};
use crate::geometry::linalg::{add, norm, normalize, scale, sub};
use crate::geometry::{
    rotation_from_axis_angle, FrameId, GeometryError, RigidTransform, TriMesh,
    TrackedTrajectory, Vec3,
};
use crate::label::{label_windows, BreachInterval, LabelError, WindowLabel};
use crate::rng::SeedRng;
use crate::signal::{
    resample_f64, SensorChannel, SensorKind, SessionMeta, SignalError, SyncRecording,
};

// Purpose-keyed RNG streams. Keeping them fixed makes every generated
// quantity independent of the order generators are invoked in and of which
// sensor channels a caller requests.
const STREAM_SCENARIO: u64 = 0;
const STREAM_JITTER: u64 = 1;
const STREAM_CANCELLOUS: u64 = 2;
const STREAM_BURST: u64 = 3;
const STREAM_HARMONIC_PHASE: u64 = 4;
const STREAM_AMBIENT: u64 = 5;
const STREAM_CHANNEL_BASE: u64 = 10;

/// Harmonic partials of the drill rotation tone.
const HARMONIC_COUNT: usize = 5;
/// Amplitude of the rotation fundamental; partial `k` falls off as `1/k`.
const HARMONIC_AMP: f64 = 0.05;
/// Amplitude of the cancellous noise texture before enveloping.
const CANCELLOUS_AMP: f64 = 0.05;
/// Bandwidth of the white noise that seeds the cancellous texture.
const CANCELLOUS_BASEBAND_HZ: f64 = 600.0;
/// Carrier that centers the cancellous band, away from the rotation tone.
const CANCELLOUS_CENTER_HZ: f64 = 500.0;
/// Envelope ramp for the harmonic route, seconds.
const RAMP_FAST_S: f64 = 0.005;
/// Envelope ramp for the cancellous route, seconds.
const RAMP_SLOW_S: f64 = 0.010;
/// Burst onset ramp, seconds. Kept short so the breach transient is sharp.
const BURST_ATTACK_S: f64 = 0.003;
/// Burst release ramp, seconds.
const BURST_DECAY_S: f64 = 0.010;
/// Window overlap fraction at which ground-truth labels flip to breach.
const LABEL_OVERLAP_FRAC: f64 = 0.5;

const TAU: f64 = 2.0 * core::f64::consts::PI;

/// Errors from scenario validation and the generators.
#[derive(Debug)]
pub enum SimError {
    /// Feed rate is zero, negative, or not finite; the advance would be
    /// degenerate.
    ZeroFeed,
    /// A scalar parameter is out of its documented range.
    InvalidParam(&'static str),
    /// The phase plan is structurally inconsistent.
    InvalidPlan(&'static str),
    /// The trajectory ends before the phase plan does, so the recording
    /// would truncate the breach or the post-breach tail.
    PlanUncovered {
        /// Time the plan runs until, ms.
        plan_end_ms: f64,
        /// Last trajectory timestamp, ms.
        trajectory_end_ms: f64,
    },
    /// The same sensor kind was requested twice.
    DuplicateSensor(SensorKind),
    /// The scenario carries no profile for a requested sensor kind.
    MissingProfile(SensorKind),
    /// Geometry construction or lookup failed.
    Geometry(GeometryError),
    /// Signal-layer construction failed.
    Signal(SignalError),
    /// Labeling failed.
    Label(LabelError),
    /// Windowing failed.
    Dsp(DspError),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::ZeroFeed => write!(f, "feed rate must be positive and finite"),
            SimError::InvalidParam(what) => write!(f, "invalid parameter: {what}"),
            SimError::InvalidPlan(what) => write!(f, "invalid phase plan: {what}"),
            SimError::PlanUncovered {
                plan_end_ms,
                trajectory_end_ms,
            } => write!(
                f,
                "trajectory ends at {trajectory_end_ms} ms but the phase plan runs to {plan_end_ms} ms"
            ),
            SimError::DuplicateSensor(kind) => {
                write!(f, "sensor {} requested more than once", kind.as_str())
            }
            SimError::MissingProfile(kind) => {
                write!(f, "no sensor profile for {}", kind.as_str())
            }
            SimError::Geometry(e) => write!(f, "geometry: {e}"),
            SimError::Signal(e) => write!(f, "signal: {e}"),
            SimError::Label(e) => write!(f, "label: {e}"),
            SimError::Dsp(e) => write!(f, "dsp: {e}"),
        }
    }
}

impl core::error::Error for SimError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            SimError::Geometry(e) => Some(e),
            SimError::Signal(e) => Some(e),
            SimError::Label(e) => Some(e),
            SimError::Dsp(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GeometryError> for SimError {
    fn from(e: GeometryError) -> Self {
        SimError::Geometry(e)
    }
}

impl From<SignalError> for SimError {
    fn from(e: SignalError) -> Self {
        SimError::Signal(e)
    }
}

impl From<LabelError> for SimError {
    fn from(e: LabelError) -> Self {
        SimError::Label(e)
    }
}

impl From<DspError> for SimError {
    fn from(e: DspError) -> Self {
        SimError::Dsp(e)
    }
}

/// Drilling phase along the advance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DrillPhase {
    /// Through the near cortical wall.
    CorticalEntry,
    /// Through cancellous bone.
    Cancellous,
    /// Crossing the far cortical wall; the breach transient lives here.
    BreachTransition,
    /// Past the far wall.
    PostBreach,
}

impl DrillPhase {
    /// Stable lowercase name.
    pub fn as_str(self) -> &'static str {
        match self {
            DrillPhase::CorticalEntry => "cortical_entry",
            DrillPhase::Cancellous => "cancellous",
            DrillPhase::BreachTransition => "breach_transition",
            DrillPhase::PostBreach => "post_breach",
        }
    }
}

/// One contiguous stretch of the advance, in depth along the drilling axis
/// measured from the entry point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSegment {
    /// Phase the drill is in over this stretch.
    pub phase: DrillPhase,
    /// Depth where the stretch begins, mm.
    pub start_depth_mm: f64,
    /// Depth where the stretch ends, mm. Always greater than the start.
    pub end_depth_mm: f64,
}

/// Box-shaped vertebra stand-in on a regular surface lattice.
///
/// The drill enters the `z = 0` face and exits through `z = exit_depth_mm`.
/// The exit point sits exactly on a lattice vertex, so vertex-distance
/// breach search has a well-defined analytic minimum; the default entry
/// point is offset to a cell center, keeping it clear of any vertex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertebraProxy {
    /// Extent along x, mm.
    pub width_mm: f64,
    /// Extent along y, mm.
    pub height_mm: f64,
    /// Extent along z: depth of the far cortical wall, mm.
    pub exit_depth_mm: f64,
    /// Lattice pitch, mm. Must divide all three extents.
    pub grid_mm: f64,
    /// Thickness of the near cortical wall, mm.
    pub wall_mm: f64,
}

impl Default for VertebraProxy {
    fn default() -> Self {
        Self {
            width_mm: 40.0,
            height_mm: 40.0,
            exit_depth_mm: 18.0,
            grid_mm: 2.0,
            wall_mm: 2.0,
        }
    }
}

impl VertebraProxy {
    /// Lattice cell counts along x, y, z.
    fn cells(&self) -> (usize, usize, usize) {
        (
            (self.width_mm / self.grid_mm).round() as usize,
            (self.height_mm / self.grid_mm).round() as usize,
            (self.exit_depth_mm / self.grid_mm).round() as usize,
        )
    }

    /// Check extents and lattice compatibility.
    pub fn validate(&self) -> Result<(), SimError> {
        let dims = [
            self.width_mm,
            self.height_mm,
            self.exit_depth_mm,
            self.grid_mm,
            self.wall_mm,
        ];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(SimError::InvalidParam("proxy extents must be positive"));
        }
        if self.wall_mm >= self.exit_depth_mm {
            return Err(SimError::InvalidParam(
                "near wall must be thinner than the exit depth",
            ));
        }
        for (d, min_cells) in [
            (self.width_mm, 4.0),
            (self.height_mm, 4.0),
            (self.exit_depth_mm, 2.0),
        ] {
            let n = d / self.grid_mm;
            if (n - n.round()).abs() > 1e-9 || n.round() < min_cells {
                return Err(SimError::InvalidParam(
                    "lattice pitch must divide the extents with enough cells",
                ));
            }
        }
        Ok(())
    }

    /// Exit point in the CT frame: the central lattice vertex of the far
    /// face.
    pub fn exit_point_ct(&self) -> Vec3 {
        let (nx, ny, _) = self.cells();
        [
            (nx / 2) as f64 * self.grid_mm,
            (ny / 2) as f64 * self.grid_mm,
            self.exit_depth_mm,
        ]
    }

    /// Surface mesh of the box: every face tessellated at the lattice pitch,
    /// two triangles per cell, outward winding.
    pub fn mesh(&self) -> Result<TriMesh, SimError> {
        self.validate()?;
        let (nx, ny, nz) = self.cells();
        let g = self.grid_mm;
        let (py, pz) = (ny + 1, nz + 1);
        let at = |i: usize, j: usize, k: usize| (i * py + j) * pz + k;

        let mut id = vec![usize::MAX; (nx + 1) * py * pz];
        let mut verts: Vec<Vec3> = Vec::new();
        for i in 0..=nx {
            for j in 0..=ny {
                for k in 0..=nz {
                    if i == 0 || i == nx || j == 0 || j == ny || k == 0 || k == nz {
                        id[at(i, j, k)] = verts.len();
                        verts.push([i as f64 * g, j as f64 * g, k as f64 * g]);
                    }
                }
            }
        }

        let mut tris: Vec<[usize; 3]> = Vec::new();
        let mut quad = |a: usize, b: usize, c: usize, d: usize| {
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        };
        for i in 0..nx {
            for j in 0..ny {
                quad(at(i, j, 0), at(i, j + 1, 0), at(i + 1, j + 1, 0), at(i + 1, j, 0));
                quad(
                    at(i, j, nz),
                    at(i + 1, j, nz),
                    at(i + 1, j + 1, nz),
                    at(i, j + 1, nz),
                );
            }
        }
        for j in 0..ny {
            for k in 0..nz {
                quad(at(0, j, k), at(0, j, k + 1), at(0, j + 1, k + 1), at(0, j + 1, k));
                quad(
                    at(nx, j, k),
                    at(nx, j + 1, k),
                    at(nx, j + 1, k + 1),
                    at(nx, j, k + 1),
                );
            }
        }
        for i in 0..nx {
            for k in 0..nz {
                quad(at(i, 0, k), at(i + 1, 0, k), at(i + 1, 0, k + 1), at(i, 0, k + 1));
                quad(
                    at(i, ny, k),
                    at(i, ny, k + 1),
                    at(i + 1, ny, k + 1),
                    at(i + 1, ny, k),
                );
            }
        }
        let tris = tris
            .into_iter()
            .map(|t| [id[t[0]], id[t[1]], id[t[2]]])
            .collect();
        // The quads were emitted over raw lattice offsets; map them through
        // the surface-vertex ids before handing the mesh over.
        TriMesh::new(verts, tris).map_err(SimError::Geometry)
    }
}

/// Per-sensor mixing and noise description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorProfile {
    /// Overall channel gain.
    pub gain: f64,
    /// Weight of the low route (rotation harmonics, cancellous texture).
    pub low_gain: f64,
    /// Weight of the high route (the breach burst).
    pub high_gain: f64,
    /// Measurement signal-to-noise ratio, dB. `f64::INFINITY` disables the
    /// measurement noise entirely.
    pub snr_db: f64,
}

/// Default profile per sensor kind. The spread is deliberate: microphones
/// and the pin accelerometer favor the burst, drill-mounted accelerometers
/// are dominated by rotation harmonics and run noisier, so sensors carry
/// complementary information.
pub fn default_profiles() -> Vec<(SensorKind, SensorProfile)> {
    vec![
        (
            SensorKind::ContactMic,
            SensorProfile {
                gain: 1.0,
                low_gain: 1.0,
                high_gain: 1.2,
                snr_db: 25.0,
            },
        ),
        (
            SensorKind::FreefieldMic,
            SensorProfile {
                gain: 0.8,
                low_gain: 1.1,
                high_gain: 0.7,
                snr_db: 18.0,
            },
        ),
        (
            SensorKind::AccelBone,
            SensorProfile {
                gain: 1.0,
                low_gain: 0.9,
                high_gain: 1.1,
                snr_db: 22.0,
            },
        ),
        (
            SensorKind::AccelPin,
            SensorProfile {
                gain: 1.1,
                low_gain: 0.8,
                high_gain: 1.4,
                snr_db: 24.0,
            },
        ),
        (
            SensorKind::AccelDrillX,
            SensorProfile {
                gain: 0.9,
                low_gain: 1.3,
                high_gain: 0.5,
                snr_db: 15.0,
            },
        ),
        (
            SensorKind::AccelDrillY,
            SensorProfile {
                gain: 0.9,
                low_gain: 1.3,
                high_gain: 0.6,
                snr_db: 15.0,
            },
        ),
        (
            SensorKind::AccelDrillZ,
            SensorProfile {
                gain: 1.0,
                low_gain: 1.2,
                high_gain: 0.8,
                snr_db: 18.0,
            },
        ),
    ]
}

/// Full description of one synthetic drilling session.
///
/// Fields are public so corpora can vary them; call [`rebuild_plan`] after
/// changing anything the phase plan depends on (proxy, feed, burst length,
/// overrun, entry offset), and rely on [`validate`] to catch the rest.
///
/// [`rebuild_plan`]: DrillScenario::rebuild_plan
/// [`validate`]: DrillScenario::validate
#[derive(Clone, Debug)]
pub struct DrillScenario {
    /// Session identity stamped on generated recordings.
    pub meta: SessionMeta,
    /// Root of every random stream this scenario draws from.
    pub seed: u64,
    /// Vertebra stand-in.
    pub proxy: VertebraProxy,
    /// Entry-point offset on the approach face relative to the exit point's
    /// x/y, mm. The default is half a lattice cell in each direction, which
    /// tilts the axis and keeps the entry clear of lattice vertices.
    pub entry_offset_mm: [f64; 2],
    /// Constant feed rate, mm/s.
    pub feed_mm_s: f64,
    /// Drill speed, revolutions per minute.
    pub drill_rpm: f64,
    /// Air gap drilled through before touching bone, mm.
    pub approach_mm: f64,
    /// Advance past the far wall before the recording stops, mm.
    pub overrun_mm: f64,
    /// Duration of the wideband breach burst, ms.
    pub burst_ms: f64,
    /// Burst amplitude as a multiple of the steady cancellous RMS.
    pub burst_rms_factor: f64,
    /// Length of the ground-truth breach interval, ms.
    pub truth_span_ms: f64,
    /// Tracking sample rate, Hz.
    pub tracking_hz: f64,
    /// Standard deviation of per-axis tracking jitter, mm.
    pub jitter_mm: f64,
    /// Audio sample rate, Hz.
    pub sample_rate_hz: f64,
    /// Ambient noise floor relative to the steady cancellous RMS, dB.
    pub noise_floor_db: f64,
    /// Mixing profile per available sensor.
    pub profiles: Vec<(SensorKind, SensorProfile)>,
    /// CT-to-camera transform the tracked positions are expressed through.
    pub ct_to_cam: RigidTransform,
    /// Depth plan of the advance. Contiguous, increasing, exactly one
    /// breach transition starting at the far-wall depth.
    pub plan: Vec<PhaseSegment>,
}

impl DrillScenario {
    /// Standard scenario: defaults everywhere, burst length and CT-to-camera
    /// pose drawn from the seed.
    pub fn standard(meta: SessionMeta, seed: u64) -> Self {
        let mut rng = SeedRng::with_stream(seed, STREAM_SCENARIO);
        let burst_ms = rng.uniform_in(200.0, 300.0);
        let axis = loop {
            let v = [rng.normal(), rng.normal(), rng.normal()];
            if let Some(u) = normalize(v) {
                break u;
            }
        };
        let angle = rng.uniform_in(0.0, 15.0 * core::f64::consts::PI / 180.0);
        let translation = [
            rng.uniform_in(-30.0, 30.0),
            rng.uniform_in(-30.0, 30.0),
            rng.uniform_in(-30.0, 30.0),
        ];
        let ct_to_cam = RigidTransform::new(
            rotation_from_axis_angle(axis, angle),
            translation,
            FrameId::Ct,
            FrameId::Camera,
        )
        .expect("axis-angle rotations are orthonormal");

        let proxy = VertebraProxy::default();
        let half = proxy.grid_mm / 2.0;
        let mut sc = Self {
            meta,
            seed,
            proxy,
            entry_offset_mm: [-half, half],
            feed_mm_s: 3.0,
            drill_rpm: 3500.0,
            approach_mm: 3.0,
            overrun_mm: 6.0,
            burst_ms,
            burst_rms_factor: 3.0,
            truth_span_ms: 200.0,
            tracking_hz: 12.0,
            jitter_mm: 0.05,
            sample_rate_hz: 40_000.0,
            noise_floor_db: -40.0,
            profiles: default_profiles(),
            ct_to_cam,
            plan: Vec::new(),
        };
        sc.rebuild_plan();
        sc
    }

    /// Entry point in the CT frame, on the approach face.
    pub fn entry_point_ct(&self) -> Vec3 {
        let exit = self.proxy.exit_point_ct();
        [
            exit[0] + self.entry_offset_mm[0],
            exit[1] + self.entry_offset_mm[1],
            0.0,
        ]
    }

    /// Exit point in the CT frame.
    pub fn exit_point_ct(&self) -> Vec3 {
        self.proxy.exit_point_ct()
    }

    /// Distance from entry to exit along the drilling axis, mm.
    pub fn exit_depth_along_axis_mm(&self) -> f64 {
        norm(sub(self.exit_point_ct(), self.entry_point_ct()))
    }

    /// Time at which the tip reaches `depth_mm` along the axis, ms. Depth 0
    /// is the entry point; the approach gap comes before it.
    pub fn time_at_depth_ms(&self, depth_mm: f64) -> f64 {
        (depth_mm + self.approach_mm) / self.feed_mm_s * 1000.0
    }

    /// Time the phase plan ends, ms.
    pub fn total_time_ms(&self) -> f64 {
        let end = self.plan.last().map(|s| s.end_depth_mm).unwrap_or(0.0);
        self.time_at_depth_ms(end)
    }

    /// The breach-transition segment, if the plan has one.
    pub fn transition_segment(&self) -> Option<&PhaseSegment> {
        self.plan
            .iter()
            .find(|s| s.phase == DrillPhase::BreachTransition)
    }

    /// Recompute the phase plan from the current geometry, feed, burst
    /// length, and overrun.
    pub fn rebuild_plan(&mut self) {
        let l_exit = self.exit_depth_along_axis_mm();
        let wall = self.proxy.wall_mm;
        let transition = self.feed_mm_s * self.burst_ms / 1000.0;
        self.plan = vec![
            PhaseSegment {
                phase: DrillPhase::CorticalEntry,
                start_depth_mm: 0.0,
                end_depth_mm: wall,
            },
            PhaseSegment {
                phase: DrillPhase::Cancellous,
                start_depth_mm: wall,
                end_depth_mm: l_exit,
            },
            PhaseSegment {
                phase: DrillPhase::BreachTransition,
                start_depth_mm: l_exit,
                end_depth_mm: l_exit + transition,
            },
            PhaseSegment {
                phase: DrillPhase::PostBreach,
                start_depth_mm: l_exit + transition,
                end_depth_mm: l_exit + self.overrun_mm,
            },
        ];
    }

    /// Profile for `kind`.
    pub fn profile(&self, kind: SensorKind) -> Result<SensorProfile, SimError> {
        self.profiles
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, p)| *p)
            .ok_or(SimError::MissingProfile(kind))
    }

    /// Check every parameter and the phase plan.
    pub fn validate(&self) -> Result<(), SimError> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        // NaN must fail this guard too.
        if !(self.feed_mm_s > 0.0) || !self.feed_mm_s.is_finite() {
            return Err(SimError::ZeroFeed);
        }
        self.proxy.validate()?;
        for (v, what) in [
            (self.drill_rpm, "drill speed must be positive"),
            (self.tracking_hz, "tracking rate must be positive"),
            (self.sample_rate_hz, "sample rate must be positive"),
            (self.burst_ms, "burst duration must be positive"),
            (self.burst_rms_factor, "burst factor must be positive"),
            (self.overrun_mm, "overrun must be positive"),
            (self.truth_span_ms, "truth span must be positive"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParam(what));
            }
        }
        for (v, what) in [
            (self.approach_mm, "approach must be nonnegative"),
            (self.jitter_mm, "jitter must be nonnegative"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidParam(what));
            }
        }
        if !self.noise_floor_db.is_finite() {
            return Err(SimError::InvalidParam("noise floor must be finite"));
        }
        let entry = self.entry_point_ct();
        if !(entry[0].is_finite() && entry[1].is_finite())
            || entry[0] <= 0.0
            || entry[0] >= self.proxy.width_mm
            || entry[1] <= 0.0
            || entry[1] >= self.proxy.height_mm
        {
            return Err(SimError::InvalidParam(
                "entry point must lie inside the approach face",
            ));
        }
        if self.profiles.is_empty() {
            return Err(SimError::InvalidParam("at least one sensor profile"));
        }
        for (i, (kind, p)) in self.profiles.iter().enumerate() {
            if self.profiles[..i].iter().any(|(k, _)| k == kind) {
                return Err(SimError::DuplicateSensor(*kind));
            }
            let finite =
                p.gain.is_finite() && p.low_gain.is_finite() && p.high_gain.is_finite();
            if !finite || p.gain < 0.0 || p.low_gain < 0.0 || p.high_gain < 0.0 {
                return Err(SimError::InvalidParam(
                    "profile gains must be finite and nonnegative",
                ));
            }
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            // NaN must fail this guard too.
            if !(p.snr_db > 0.0) {
                return Err(SimError::InvalidParam("profile SNR must be positive"));
            }
        }
        self.validate_plan()
    }

    fn validate_plan(&self) -> Result<(), SimError> {
        if self.plan.is_empty() {
            return Err(SimError::InvalidPlan("plan is empty"));
        }
        if self.plan[0].start_depth_mm.abs() > 1e-9 {
            return Err(SimError::InvalidPlan("plan must start at depth zero"));
        }
        let mut transitions = 0usize;
        for (i, seg) in self.plan.iter().enumerate() {
            if !(seg.start_depth_mm.is_finite() && seg.end_depth_mm.is_finite()) {
                return Err(SimError::InvalidPlan("segment depths must be finite"));
            }
            if seg.end_depth_mm <= seg.start_depth_mm {
                return Err(SimError::InvalidPlan("segment depths must increase"));
            }
            if i > 0 {
                if (seg.start_depth_mm - self.plan[i - 1].end_depth_mm).abs() > 1e-9 {
                    return Err(SimError::InvalidPlan("segments must be contiguous"));
                }
                if seg.phase < self.plan[i - 1].phase {
                    return Err(SimError::InvalidPlan("phases must not move backward"));
                }
            }
            if seg.phase == DrillPhase::BreachTransition {
                transitions += 1;
                if (seg.start_depth_mm - self.exit_depth_along_axis_mm()).abs() > 1e-6 {
                    return Err(SimError::InvalidPlan(
                        "breach transition must start at the far wall",
                    ));
                }
                let extent = seg.end_depth_mm - seg.start_depth_mm;
                if (extent - self.feed_mm_s * self.burst_ms / 1000.0).abs() > 1e-6 {
                    return Err(SimError::InvalidPlan(
                        "breach transition must span the burst duration",
                    ));
                }
            }
        }
        if transitions != 1 {
            return Err(SimError::InvalidPlan("exactly one breach transition"));
        }
        Ok(())
    }

    /// Number of audio samples a recording over `duration_ms` holds.
    fn n_audio_samples(&self, duration_ms: f64) -> usize {
        (duration_ms / 1000.0 * self.sample_rate_hz).round() as usize
    }
}

/// Analytic ground truth for one scenario.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Time the tip touches the entry wall, ms.
    pub entry_time_ms: f64,
    /// Time the tip crosses the far cortical wall, ms.
    pub breach_time_ms: f64,
    /// Time the breach burst ends, ms.
    pub burst_end_ms: f64,
    /// Entry point, CT frame, mm.
    pub entry_ct_mm: Vec3,
    /// Exit point, CT frame, mm.
    pub exit_ct_mm: Vec3,
    /// Ground-truth breach interval used for labeling.
    pub interval: BreachInterval,
    /// Analysis windows over the session's audio timeline.
    pub windows: Vec<WindowSlice>,
    /// Per-window labels from the analytic interval.
    pub labels: Vec<WindowLabel>,
}

/// Generate the tracked tool-tip trajectory and the analytic ground truth.
///
/// The tip advances at constant feed along the straight entry-exit axis,
/// starting `approach_mm` before the entry wall. Samples are uniform at the
/// tracking rate, expressed in the camera frame, with optional i.i.d.
/// Gaussian jitter per axis. The trajectory always extends to the end of
/// the phase plan.
pub fn gen_trajectory(
    sc: &DrillScenario,
) -> Result<(TrackedTrajectory, GroundTruth), SimError> {
    sc.validate()?;
    let entry = sc.entry_point_ct();
    let exit = sc.exit_point_ct();
    let axis = normalize(sub(exit, entry))
        .ok_or(SimError::InvalidParam("entry and exit points coincide"))?;

    let dt_ms = 1000.0 / sc.tracking_hz;
    let total_ms = sc.total_time_ms();
    let n = (total_ms / dt_ms).ceil() as usize + 1;
    let mut jrng = SeedRng::with_stream(sc.seed, STREAM_JITTER);
    let mut timestamps = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for i in 0..n {
        let t_ms = i as f64 * dt_ms;
        let depth = sc.feed_mm_s * t_ms / 1000.0 - sc.approach_mm;
        let p_ct = add(entry, scale(axis, depth));
        let mut p = sc.ct_to_cam.apply_point(p_ct);
        for axis_jitter in &mut p {
            *axis_jitter += sc.jitter_mm * jrng.normal();
        }
        timestamps.push(t_ms);
        positions.push(p);
    }
    let traj = TrackedTrajectory::new(timestamps, positions, FrameId::Camera)?;

    let transition = sc
        .transition_segment()
        .ok_or(SimError::InvalidPlan("exactly one breach transition"))?;
    let breach_time_ms = sc.time_at_depth_ms(transition.start_depth_mm);
    let interval = BreachInterval::new(breach_time_ms, breach_time_ms + sc.truth_span_ms)?;
    let last_ms = *traj.timestamps_ms().last().expect("trajectory is nonempty");
    let windows = slice_windows(
        sc.n_audio_samples(last_ms),
        sc.sample_rate_hz,
        &WindowSpec::default(),
    )?;
    let labels = label_windows(
        &windows,
        sc.sample_rate_hz,
        Some(&interval),
        LABEL_OVERLAP_FRAC,
    )?;
    let truth = GroundTruth {
        entry_time_ms: sc.time_at_depth_ms(0.0),
        breach_time_ms,
        burst_end_ms: sc.time_at_depth_ms(transition.end_depth_mm),
        entry_ct_mm: entry,
        exit_ct_mm: exit,
        interval,
        windows,
        labels,
    };
    Ok((traj, truth))
}

/// Ramp from 0 at `t0` to 1 at `t0 + rise_s`, clamped outside.
fn rise(t: f64, t0: f64, rise_s: f64) -> f64 {
    ((t - t0) / rise_s).clamp(0.0, 1.0)
}

fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn channel_stream(kind: SensorKind) -> u64 {
    let idx = SensorKind::ALL
        .iter()
        .position(|k| *k == kind)
        .expect("every kind appears in ALL") as u64;
    STREAM_CHANNEL_BASE + idx
}

/// Synthesize the multi-sensor recording for a scenario over a trajectory's
/// time span.
///
/// The mix has two routes plus a floor. The low route carries the drill
/// rotation harmonics (fundamental at `rpm/60`, five partials, amplitude
/// stepping up on bone contact and again after breach) and the band-limited
/// cancellous texture. The high route is a wideband burst covering
/// `[breach, breach + burst_ms]`, scaled to `burst_rms_factor` times the
/// steady cancellous RMS. Each requested channel applies its profile's
/// route gains and adds measurement noise at the profile's SNR, drawn from
/// a per-kind stream so a channel's samples do not depend on which other
/// channels were requested.
pub fn gen_signals(
    sc: &DrillScenario,
    traj: &TrackedTrajectory,
    kinds: &[SensorKind],
) -> Result<SyncRecording, SimError> {
    sc.validate()?;
    if kinds.is_empty() {
        return Err(SimError::InvalidParam("request at least one sensor"));
    }
    for (i, kind) in kinds.iter().enumerate() {
        if kinds[..i].contains(kind) {
            return Err(SimError::DuplicateSensor(*kind));
        }
    }
    let last_ms = traj.timestamps_ms().last().copied().unwrap_or(0.0);
    let total_ms = sc.total_time_ms();
    if last_ms + 1e-9 < total_ms {
        return Err(SimError::PlanUncovered {
            plan_end_ms: total_ms,
            trajectory_end_ms: last_ms,
        });
    }

    let rate = sc.sample_rate_hz;
    let n = sc.n_audio_samples(last_ms);
    if n < 16 {
        return Err(SimError::InvalidParam("recording too short to synthesize"));
    }
    let transition = sc
        .transition_segment()
        .ok_or(SimError::InvalidPlan("exactly one breach transition"))?;
    let t_entry = sc.time_at_depth_ms(0.0) / 1000.0;
    let t_cross = sc.time_at_depth_ms(transition.start_depth_mm) / 1000.0;
    let t_burst_end = sc.time_at_depth_ms(transition.end_depth_mm) / 1000.0;
    let f0 = sc.drill_rpm / 60.0;

    // Low route: rotation harmonics stepping 0.4 -> 1.0 -> 1.6 across entry
    // and breach, plus cancellous texture gated to the in-bone stretch.
    let mut low = vec![0.0f64; n];
    {
        let mut prng = SeedRng::with_stream(sc.seed, STREAM_HARMONIC_PHASE);
        let mut phases = [0.0f64; HARMONIC_COUNT];
        for p in &mut phases {
            *p = prng.uniform_in(0.0, TAU);
        }
        let mut amps = [0.0f64; HARMONIC_COUNT];
        for (k, a) in amps.iter_mut().enumerate() {
            *a = HARMONIC_AMP / (k + 1) as f64;
        }
        for (i, y) in low.iter_mut().enumerate() {
            let t = i as f64 / rate;
            let env = 0.4 + 0.6 * rise(t, t_entry, RAMP_FAST_S) + 0.6 * rise(t, t_cross, RAMP_FAST_S);
            let mut s = 0.0;
            for k in 0..HARMONIC_COUNT {
                s += amps[k] * (TAU * (k + 1) as f64 * f0 * t + phases[k]).sin();
            }
            *y = env * s;
        }
    }
    {
        let mut nrng = SeedRng::with_stream(sc.seed, STREAM_CANCELLOUS);
        let n_base = ((n as f64 / rate) * CANCELLOUS_BASEBAND_HZ).ceil() as usize + 8;
        let base: Vec<f64> = (0..n_base).map(|_| nrng.normal()).collect();
        let wide = resample_f64(&base, CANCELLOUS_BASEBAND_HZ, rate)?;
        for (i, y) in low.iter_mut().enumerate() {
            let t = i as f64 / rate;
            let env = 0.02 + 0.98 * rise(t, t_entry, RAMP_SLOW_S) - 0.70 * rise(t, t_cross, RAMP_SLOW_S);
            let b = wide.get(i).copied().unwrap_or(0.0);
            *y += CANCELLOUS_AMP * env * b * (TAU * CANCELLOUS_CENTER_HZ * t).cos();
        }
    }

    // Steady-drilling loudness reference: the middle of the cancellous
    // stretch, clear of both envelope steps.
    let span = t_cross - t_entry;
    let core_lo = ((t_entry + 0.15 * span) * rate) as usize;
    let core_hi = (((t_cross - 0.15 * span) * rate) as usize).min(n);
    if core_hi <= core_lo + 16 {
        return Err(SimError::InvalidParam(
            "cancellous stretch too short to reference",
        ));
    }
    let rms_core = rms(&low[core_lo..core_hi]);

    // High route: the breach burst.
    let mut high = vec![0.0f64; n];
    {
        let amp = sc.burst_rms_factor * rms_core;
        let mut brng = SeedRng::with_stream(sc.seed, STREAM_BURST);
        let i0 = ((t_cross * rate).floor()).max(0.0) as usize;
        let i1 = ((((t_burst_end + BURST_DECAY_S) * rate).ceil()) as usize).min(n);
        for (i, h) in high.iter_mut().enumerate().take(i1).skip(i0) {
            let t = i as f64 / rate;
            let env = rise(t, t_cross, BURST_ATTACK_S) - rise(t, t_burst_end, BURST_DECAY_S);
            *h = amp * env * brng.normal();
        }
    }

    let floor_amp = rms_core * 10.0f64.powf(sc.noise_floor_db / 20.0);
    let mut ambient = vec![0.0f64; n];
    {
        let mut arng = SeedRng::with_stream(sc.seed, STREAM_AMBIENT);
        for a in &mut ambient {
            *a = floor_amp * arng.normal();
        }
    }

    let mut channels = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let prof = sc.profile(kind)?;
        let mut clean = vec![0.0f64; n];
        let mut sumsq = 0.0f64;
        for ((c, &l), (&h, &a)) in clean
            .iter_mut()
            .zip(&low)
            .zip(high.iter().zip(&ambient))
        {
            let v = prof.gain * (prof.low_gain * l + prof.high_gain * h + a);
            *c = v;
            sumsq += v * v;
        }
        let samples: Vec<f32> = if prof.snr_db.is_finite() {
            let noise_amp = (sumsq / n as f64).sqrt() * 10.0f64.powf(-prof.snr_db / 20.0);
            let mut crng = SeedRng::with_stream(sc.seed, channel_stream(kind));
            clean
                .iter()
                .map(|&v| (v + noise_amp * crng.normal()) as f32)
                .collect()
        } else {
            clean.iter().map(|&v| v as f32).collect()
        };
        channels.push(SensorChannel { kind, samples });
    }
    SyncRecording::new(sc.meta.clone(), rate, channels).map_err(SimError::Signal)
}

/// A deterministic corpus of `n_sessions` scenarios. Sessions cycle through
/// five levels per subject; wall depth, feed, and sensor SNR vary by subject
/// and level so the corpus spans easy and hard acoustic conditions.
pub fn corpus(n_sessions: usize, base_seed: u64) -> Vec<DrillScenario> {
    const LEVELS: [&str; 5] = ["L1", "L2", "L3", "L4", "L5"];
    const EXIT_DEPTHS: [f64; 4] = [16.0, 18.0, 20.0, 22.0];
    const SNR_OFFSETS: [f64; 4] = [6.0, 2.0, -2.0, -6.0];
    const FEEDS: [f64; 5] = [2.6, 3.0, 3.4, 2.8, 3.2];

    let mut out = Vec::with_capacity(n_sessions);
    for i in 0..n_sessions {
        let si = i / LEVELS.len();
        let li = i % LEVELS.len();
        let seed = base_seed + 100 * si as u64 + li as u64;
        let meta = SessionMeta {
            subject: format!("S{}", si + 1),
            level: String::from(LEVELS[li]),
            side: String::from(if li % 2 == 0 { "left" } else { "right" }),
            start_epoch_ms: 1_755_000_000_000 + 60_000 * seed as i64,
        };
        let mut sc = DrillScenario::standard(meta, seed);
        sc.proxy.exit_depth_mm = EXIT_DEPTHS[si % EXIT_DEPTHS.len()];
        sc.feed_mm_s = FEEDS[li];
        for (_, p) in &mut sc.profiles {
            p.snr_db += SNR_OFFSETS[si % SNR_OFFSETS.len()];
        }
        sc.rebuild_plan();
        out.push(sc);
    }
    out
}

/// The standard 20-session corpus: four subjects, five levels each. Equal to
/// `corpus(20, 41_000)`.
pub fn default_corpus() -> Vec<DrillScenario> {
    corpus(20, 41_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::dominant_frequency_hz;
    use crate::geometry::linalg::dist2;
    use crate::geometry::{find_breach, find_entry_exit, DistanceMode};
    use alloc::format;
    use alloc::string::ToString;

    fn meta_for(tag: u64) -> SessionMeta {
        SessionMeta {
            subject: format!("T{tag}"),
            level: "L3".to_string(),
            side: "left".to_string(),
            start_epoch_ms: 1_755_000_000_000 + tag as i64,
        }
    }

    #[test]
    fn standard_scenario_validates() {
        let sc = DrillScenario::standard(meta_for(1), 7);
        sc.validate().unwrap();
        assert_eq!(sc.plan.len(), 4);
        assert!(sc.burst_ms >= 200.0 && sc.burst_ms <= 300.0);
        let l_exit = sc.exit_depth_along_axis_mm();
        assert!(l_exit > sc.proxy.exit_depth_mm);
        assert!((sc.plan[3].end_depth_mm - (l_exit + sc.overrun_mm)).abs() < 1e-12);
    }

    #[test]
    fn breach_time_is_exact_for_straight_unit_feed() {
        let mut sc = DrillScenario::standard(meta_for(2), 3);
        sc.entry_offset_mm = [0.0, 0.0];
        sc.proxy.exit_depth_mm = 20.0;
        sc.feed_mm_s = 1.0;
        sc.approach_mm = 0.0;
        sc.jitter_mm = 0.0;
        sc.rebuild_plan();
        let (_, truth) = gen_trajectory(&sc).unwrap();
        assert_eq!(truth.breach_time_ms, 20_000.0);
        assert_eq!(truth.entry_time_ms, 0.0);
    }

    #[test]
    fn zero_feed_is_rejected() {
        let mut sc = DrillScenario::standard(meta_for(3), 11);
        sc.feed_mm_s = 0.0;
        assert!(matches!(gen_trajectory(&sc), Err(SimError::ZeroFeed)));
    }

    #[test]
    fn mesh_has_expected_lattice_shape() {
        let proxy = VertebraProxy::default();
        let mesh = proxy.mesh().unwrap();
        // Two full faces plus the interior layers' perimeters.
        let (nx, ny, nz) = (20usize, 20usize, 9usize);
        let perimeter = 2 * (nx + 1) + 2 * (ny + 1) - 4;
        let expect_verts = 2 * (nx + 1) * (ny + 1) + (nz - 1) * perimeter;
        let expect_tris = 2 * 2 * (nx * ny + nx * nz + ny * nz);
        assert_eq!(mesh.vertices().len(), expect_verts);
        assert_eq!(mesh.triangles().len(), expect_tris);
        for v in mesh.vertices() {
            let on = |x: f64, hi: f64| x.abs() < 1e-12 || (x - hi).abs() < 1e-12;
            assert!(
                on(v[0], proxy.width_mm) || on(v[1], proxy.height_mm) || on(v[2], proxy.exit_depth_mm),
                "interior vertex {v:?}"
            );
        }
        let exit = proxy.exit_point_ct();
        let hit = mesh.vertices().iter().any(|v| dist2(*v, exit) < 1e-18);
        assert!(hit, "exit point must be a lattice vertex");
    }

    #[test]
    fn find_breach_lands_within_one_tracking_sample() {
        for seed in 0..20u64 {
            let sc = DrillScenario::standard(meta_for(100 + seed), seed);
            let (traj, truth) = gen_trajectory(&sc).unwrap();
            let mesh = sc.proxy.mesh().unwrap();
            let path = find_entry_exit(&traj, truth.entry_ct_mm, truth.exit_ct_mm, &sc.ct_to_cam)
                .unwrap();
            let bp = find_breach(&traj, &mesh, &sc.ct_to_cam, &path, DistanceMode::Vertex).unwrap();
            let dt_ms = 1000.0 / sc.tracking_hz;
            assert!(
                (bp.time_ms - truth.breach_time_ms).abs() <= dt_ms + 1e-9,
                "seed {seed}: breach at {} ms, truth {} ms",
                bp.time_ms,
                truth.breach_time_ms
            );
        }
    }

    #[test]
    fn vertex_search_matches_brute_force() {
        for seed in [0u64, 5, 9, 13, 17] {
            let sc = DrillScenario::standard(meta_for(200 + seed), seed);
            let (traj, truth) = gen_trajectory(&sc).unwrap();
            let mesh = sc.proxy.mesh().unwrap();
            let path = find_entry_exit(&traj, truth.entry_ct_mm, truth.exit_ct_mm, &sc.ct_to_cam)
                .unwrap();
            let bp = find_breach(&traj, &mesh, &sc.ct_to_cam, &path, DistanceMode::Vertex).unwrap();

            let verts_cam = sc.ct_to_cam.apply(mesh.vertices());
            let mut best = path.entry_index;
            let mut best_d = f64::INFINITY;
            for (i, p) in traj.positions_mm()[path.entry_index..=path.exit_index]
                .iter()
                .enumerate()
            {
                let d = verts_cam
                    .iter()
                    .map(|v| dist2(*p, *v))
                    .fold(f64::INFINITY, f64::min);
                if d < best_d {
                    best_d = d;
                    best = path.entry_index + i;
                }
            }
            assert_eq!(bp.index, best, "seed {seed}");
        }
    }

    #[test]
    fn located_labels_agree_with_analytic_labels() {
        let mut windows_total = 0usize;
        let mut agree = 0usize;
        for seed in 0..20u64 {
            let sc = DrillScenario::standard(meta_for(300 + seed), 1000 + seed);
            let (traj, truth) = gen_trajectory(&sc).unwrap();
            let mesh = sc.proxy.mesh().unwrap();
            let path = find_entry_exit(&traj, truth.entry_ct_mm, truth.exit_ct_mm, &sc.ct_to_cam)
                .unwrap();
            let bp = find_breach(&traj, &mesh, &sc.ct_to_cam, &path, DistanceMode::Vertex).unwrap();
            let located =
                BreachInterval::new(bp.time_ms, bp.time_ms + sc.truth_span_ms).unwrap();
            let labels = label_windows(
                &truth.windows,
                sc.sample_rate_hz,
                Some(&located),
                LABEL_OVERLAP_FRAC,
            )
            .unwrap();
            windows_total += labels.len();
            agree += labels
                .iter()
                .zip(&truth.labels)
                .filter(|(a, b)| a == b)
                .count();
        }
        let frac = agree as f64 / windows_total as f64;
        assert!(frac >= 0.99, "label agreement {frac}");
    }

    #[test]
    fn contact_mic_carries_the_rotation_fundamental() {
        let sc = DrillScenario::standard(meta_for(400), 42);
        let (traj, truth) = gen_trajectory(&sc).unwrap();
        let rec = gen_signals(&sc, &traj, &[SensorKind::ContactMic]).unwrap();
        let ch = rec.channel(SensorKind::ContactMic).unwrap();
        let start = ((truth.entry_time_ms / 1000.0 + 1.0) * sc.sample_rate_hz) as usize;
        let seg: Vec<f64> = ch.samples[start..start + 32768]
            .iter()
            .map(|&x| x as f64)
            .collect();
        let f0 = sc.drill_rpm / 60.0;
        let bin_hz = sc.sample_rate_hz / 32768.0;
        let dom = dominant_frequency_hz(&seg, sc.sample_rate_hz);
        assert!(
            (dom - f0).abs() <= 1.5 * bin_hz,
            "dominant {dom} Hz, expected {f0} Hz"
        );
    }

    #[test]
    fn breach_burst_doubles_the_rms() {
        let sc = DrillScenario::standard(meta_for(401), 43);
        let (traj, truth) = gen_trajectory(&sc).unwrap();
        let rec = gen_signals(&sc, &traj, &[SensorKind::ContactMic]).unwrap();
        let ch = rec.channel(SensorKind::ContactMic).unwrap();
        let rate = sc.sample_rate_hz;
        let seg = |a_ms: f64, b_ms: f64| {
            let (i0, i1) = ((a_ms / 1000.0 * rate) as usize, (b_ms / 1000.0 * rate) as usize);
            let xs: Vec<f64> = ch.samples[i0..i1].iter().map(|&x| x as f64).collect();
            rms(&xs)
        };
        let mid = 0.5 * (truth.entry_time_ms + truth.breach_time_ms);
        let steady = seg(mid - 500.0, mid + 500.0);
        let breach = seg(truth.breach_time_ms, truth.burst_end_ms);
        assert!(
            breach >= 2.0 * steady,
            "breach rms {breach}, steady rms {steady}"
        );
    }

    #[test]
    fn noiseless_channels_scale_exactly_with_gain() {
        let mut sc = DrillScenario::standard(meta_for(402), 44);
        let profile = SensorProfile {
            gain: 0.5,
            low_gain: 1.0,
            high_gain: 1.0,
            snr_db: f64::INFINITY,
        };
        sc.profiles = vec![
            (SensorKind::ContactMic, profile),
            (
                SensorKind::AccelBone,
                SensorProfile {
                    gain: 1.0,
                    ..profile
                },
            ),
        ];
        let (traj, _) = gen_trajectory(&sc).unwrap();
        let rec = gen_signals(&sc, &traj, &[SensorKind::ContactMic, SensorKind::AccelBone])
            .unwrap();
        let a = &rec.channel(SensorKind::ContactMic).unwrap().samples;
        let b = &rec.channel(SensorKind::AccelBone).unwrap().samples;
        // Doubling is exact in binary floating point, so the comparison can
        // be bitwise.
        assert!(a.iter().zip(b.iter()).all(|(x, y)| 2.0 * x == *y));
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let gen = |seed: u64| {
            let sc = DrillScenario::standard(meta_for(403), seed);
            let (traj, _) = gen_trajectory(&sc).unwrap();
            let rec = gen_signals(&sc, &traj, &[SensorKind::AccelPin]).unwrap();
            rec.channel(SensorKind::AccelPin).unwrap().samples.clone()
        };
        let a = gen(77);
        let b = gen(77);
        assert_eq!(a, b);
        let c = gen(78);
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn channel_content_does_not_depend_on_requested_subset() {
        let sc = DrillScenario::standard(meta_for(404), 45);
        let (traj, _) = gen_trajectory(&sc).unwrap();
        let solo = gen_signals(&sc, &traj, &[SensorKind::FreefieldMic]).unwrap();
        let pair = gen_signals(
            &sc,
            &traj,
            &[SensorKind::ContactMic, SensorKind::FreefieldMic],
        )
        .unwrap();
        assert_eq!(
            solo.channel(SensorKind::FreefieldMic).unwrap().samples,
            pair.channel(SensorKind::FreefieldMic).unwrap().samples
        );
    }

    #[test]
    fn first_difference_energy_separates_the_classes() {
        let sc = DrillScenario::standard(meta_for(405), 46);
        let (traj, truth) = gen_trajectory(&sc).unwrap();
        let rec = gen_signals(&sc, &traj, &[SensorKind::ContactMic]).unwrap();
        let ch = &rec.channel(SensorKind::ContactMic).unwrap().samples;

        let mut logs: Vec<(bool, f64)> = Vec::new();
        for (w, label) in truth.windows.iter().zip(&truth.labels) {
            let xs = &ch[w.start_sample..w.start_sample + w.len_samples];
            let e: f64 = xs
                .windows(2)
                .map(|p| {
                    let d = (p[1] - p[0]) as f64;
                    d * d
                })
                .sum();
            logs.push((label.is_breach(), e.max(1e-30).ln()));
        }
        let mean = |breach: bool| {
            let sel: Vec<f64> = logs.iter().filter(|(b, _)| *b == breach).map(|(_, e)| *e).collect();
            assert!(!sel.is_empty());
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        let thr = 0.5 * (mean(true) + mean(false));
        let hits = |breach: bool, above: bool| {
            logs.iter()
                .filter(|(b, e)| *b == breach && ((*e > thr) == above))
                .count() as f64
        };
        let recall = hits(true, true) / (hits(true, true) + hits(true, false));
        let specificity = hits(false, false) / (hits(false, false) + hits(false, true));
        assert!(recall >= 0.9, "recall {recall}");
        assert!(specificity >= 0.9, "specificity {specificity}");
    }

    #[test]
    fn truncated_trajectory_is_rejected() {
        let sc = DrillScenario::standard(meta_for(406), 47);
        let (traj, _) = gen_trajectory(&sc).unwrap();
        let keep = traj.len() / 2;
        let short = TrackedTrajectory::new(
            traj.timestamps_ms()[..keep].to_vec(),
            traj.positions_mm()[..keep].to_vec(),
            FrameId::Camera,
        )
        .unwrap();
        let got = gen_signals(&sc, &short, &[SensorKind::ContactMic]);
        assert!(matches!(got, Err(SimError::PlanUncovered { .. })));
    }

    #[test]
    fn duplicate_sensor_request_is_rejected() {
        let sc = DrillScenario::standard(meta_for(407), 48);
        let (traj, _) = gen_trajectory(&sc).unwrap();
        let got = gen_signals(
            &sc,
            &traj,
            &[SensorKind::ContactMic, SensorKind::ContactMic],
        );
        assert!(matches!(got, Err(SimError::DuplicateSensor(_))));
    }

    #[test]
    fn bad_phase_plans_are_rejected() {
        let mut sc = DrillScenario::standard(meta_for(408), 49);
        sc.plan[2].phase = DrillPhase::Cancellous;
        assert!(matches!(sc.validate(), Err(SimError::InvalidPlan(_))));

        let mut sc = DrillScenario::standard(meta_for(408), 49);
        sc.plan[1].end_depth_mm += 0.5;
        assert!(matches!(sc.validate(), Err(SimError::InvalidPlan(_))));

        let mut sc = DrillScenario::standard(meta_for(408), 49);
        sc.proxy.exit_depth_mm = 22.0;
        // Plan not rebuilt: the transition no longer starts at the far wall.
        assert!(matches!(sc.validate(), Err(SimError::InvalidPlan(_))));
    }

    #[test]
    fn default_corpus_is_twenty_distinct_sessions() {
        let corpus = default_corpus();
        assert_eq!(corpus.len(), 20);
        for sc in &corpus {
            sc.validate().unwrap();
            assert!(sc.burst_ms >= 200.0 && sc.burst_ms <= 300.0);
        }
        for (i, sc) in corpus.iter().enumerate() {
            for other in &corpus[..i] {
                assert_ne!(sc.meta.key(), other.meta.key());
                assert_ne!(sc.seed, other.seed);
            }
        }
        let depths: Vec<f64> = corpus.iter().map(|sc| sc.proxy.exit_depth_mm).collect();
        assert!(depths.iter().any(|d| (*d - 16.0).abs() < 1e-12));
        assert!(depths.iter().any(|d| (*d - 22.0).abs() < 1e-12));
    }
}
