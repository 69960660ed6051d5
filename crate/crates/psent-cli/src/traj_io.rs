//! Tracked trajectories as CSV and rigid transforms as JSON.
//!
//! The trajectory CSV has a fixed header `t_ms,x_mm,y_mm,z_mm`; the frame
//! is not part of the file and is supplied by the caller on load
//! (session directories store camera-frame trajectories by convention).
//! Floats use shortest round-trip formatting, so both formats reload
//! bitwise.

use crate::FormatError;
use psent_core::geometry::linalg::{Mat3, Vec3};
use psent_core::geometry::{FrameId, RigidTransform, TrackedTrajectory};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const TRAJ_HEADER: &str = "t_ms,x_mm,y_mm,z_mm";

/// Write a trajectory as CSV.
pub fn save_trajectory(path: &Path, traj: &TrackedTrajectory) -> Result<(), FormatError> {
    let mut out = String::from(TRAJ_HEADER);
    out.push('\n');
    for (t, p) in traj.timestamps_ms().iter().zip(traj.positions_mm()) {
        out.push_str(&format!("{},{},{},{}\n", t, p[0], p[1], p[2]));
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| FormatError::io(path, e))
}

/// Read a trajectory CSV, placing the samples in `frame`.
pub fn load_trajectory(path: &Path, frame: FrameId) -> Result<TrackedTrajectory, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "tracked trajectory",
            path: path.to_path_buf(),
        });
    }
    let file = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut timestamps = Vec::new();
    let mut positions: Vec<Vec3> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        let line = line.trim();
        if i == 0 {
            if line != TRAJ_HEADER {
                return Err(FormatError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: format!("expected header {TRAJ_HEADER:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(FormatError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 4];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.trim().parse().map_err(|_| FormatError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad number {f}"),
            })?;
        }
        timestamps.push(vals[0]);
        positions.push([vals[1], vals[2], vals[3]]);
    }
    TrackedTrajectory::new(timestamps, positions, frame)
        .map_err(|e| FormatError::invalid(path, e.to_string()))
}

fn frame_name(f: FrameId) -> &'static str {
    match f {
        FrameId::Ct => "ct",
        FrameId::Camera => "camera",
        FrameId::Drill => "drill",
    }
}

fn parse_frame(s: &str) -> Option<FrameId> {
    match s {
        "ct" => Some(FrameId::Ct),
        "camera" => Some(FrameId::Camera),
        "drill" => Some(FrameId::Drill),
        _ => None,
    }
}

#[derive(Serialize, Deserialize)]
struct TransformFile {
    from: String,
    to: String,
    rotation_row_major: [f64; 9],
    translation_mm: [f64; 3],
}

/// Write a rigid transform as JSON.
pub fn save_transform(path: &Path, tf: &RigidTransform) -> Result<(), FormatError> {
    let r = tf.rotation();
    let file = TransformFile {
        from: frame_name(tf.from_frame()).to_string(),
        to: frame_name(tf.to_frame()).to_string(),
        rotation_row_major: [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ],
        translation_mm: tf.translation(),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json + "\n").map_err(|e| FormatError::io(path, e))
}

/// Read a rigid transform, revalidating orthonormality.
pub fn load_transform(path: &Path) -> Result<RigidTransform, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "rigid transform",
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let file: TransformFile = serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let from = parse_frame(&file.from)
        .ok_or_else(|| FormatError::invalid(path, format!("unknown frame {}", file.from)))?;
    let to = parse_frame(&file.to)
        .ok_or_else(|| FormatError::invalid(path, format!("unknown frame {}", file.to)))?;
    let m = &file.rotation_row_major;
    let rotation: Mat3 = [[m[0], m[1], m[2]], [m[3], m[4], m[5]], [m[6], m[7], m[8]]];
    RigidTransform::new(rotation, file.translation_mm, from, to)
        .map_err(|e| FormatError::invalid(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use psent_core::geometry::linalg::rotation_from_axis_angle;

    #[test]
    fn trajectory_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        let traj = TrackedTrajectory::new(
            vec![0.0, 250.0 / 3.0, 500.0 / 3.0],
            vec![[0.1, -0.2, 0.3], [1.0 / 3.0, 2.0 / 3.0, -1.0], [2.5, 3.5, 4.5]],
            FrameId::Camera,
        )
        .unwrap();
        save_trajectory(&path, &traj).unwrap();
        let back = load_trajectory(&path, FrameId::Camera).unwrap();
        assert_eq!(back.timestamps_ms(), traj.timestamps_ms());
        assert_eq!(back.positions_mm(), traj.positions_mm());
    }

    #[test]
    fn transform_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ct_to_cam.json");
        let n = (0.3f64 * 0.3 + 0.5 * 0.5 + 0.81 * 0.81).sqrt();
        let rot = rotation_from_axis_angle([0.3 / n, -0.5 / n, 0.81 / n], 0.4);
        let tf =
            RigidTransform::new(rot, [12.5, -3.25, 8.0], FrameId::Ct, FrameId::Camera).unwrap();
        save_transform(&path, &tf).unwrap();
        let back = load_transform(&path).unwrap();
        assert_eq!(back.rotation(), tf.rotation());
        assert_eq!(back.translation(), tf.translation());
        assert_eq!(back.from_frame(), FrameId::Ct);
        assert_eq!(back.to_frame(), FrameId::Camera);
    }

    #[test]
    fn corrupted_rotation_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(
            &path,
            r#"{"from":"ct","to":"camera",
               "rotation_row_major":[1,0,0, 0,2,0, 0,0,1],
               "translation_mm":[0,0,0]}"#,
        )
        .unwrap();
        assert!(load_transform(&path).is_err());
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "time,x,y,z\n0,0,0,0\n").unwrap();
        assert!(load_trajectory(&path, FrameId::Camera).is_err());
    }
}
