//! Pose-driven stabilization onto the ground plane π (world Z = 0).
//!
//! A plane point `(x, y, 0)` projects through `K [r₁ r₂ t]`; the inverse map
//! is evaluated in closed form from the 2×2 minors of `T = [r₁ r₂ t]` rather
//! than by a generic matrix inversion.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{normalize_homography, CameraPose, Homography};
use crate::mask::BinaryMask;

/// Pixelization of the ground plane: output pixel `(c, r)` covers world
/// point `plane_origin + plane_scale · (c, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub output_width: usize,
    pub output_height: usize,
    /// Meters per output pixel.
    pub plane_scale: f64,
    /// World XY (meters) of output pixel (0, 0).
    pub plane_origin: [f64; 2],
}

impl PlaneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output_width == 0 || self.output_height == 0 {
            return Err(Error::InvalidConfig("plane output dimensions must be > 0".into()));
        }
        if !(self.plane_scale > 0.0 && self.plane_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "plane_scale must be > 0, got {}",
                self.plane_scale
            )));
        }
        Ok(())
    }

    /// Output pixel → world plane coordinates, as a homogeneous 3×3 map.
    pub fn pixel_to_world_matrix(&self) -> Matrix3<f64> {
        let s = self.plane_scale;
        let [ox, oy] = self.plane_origin;
        Matrix3::new(s, 0.0, ox, 0.0, s, oy, 0.0, 0.0, 1.0)
    }

    pub fn pixel_to_world(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.plane_origin[0] + self.plane_scale * p[0],
            self.plane_origin[1] + self.plane_scale * p[1],
        ]
    }

    pub fn world_to_pixel(&self, w: [f64; 2]) -> [f64; 2] {
        [
            (w[0] - self.plane_origin[0]) / self.plane_scale,
            (w[1] - self.plane_origin[1]) / self.plane_scale,
        ]
    }
}

fn plane_basis(pose: &CameraPose) -> Matrix3<f64> {
    let r = &pose.rotation;
    Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), pose.translation])
}

/// Unnormalized `K [r₁ r₂ t]`. Its third output coordinate is the camera
/// depth of the plane point, so its sign tells front from back.
pub fn plane_to_camera_matrix(pose: &CameraPose) -> Matrix3<f64> {
    pose.intrinsics() * plane_basis(pose)
}

/// `H_{π→c} = K [r₁ r₂ t]`.
pub fn homography_plane_to_camera(pose: &CameraPose) -> Result<Homography> {
    normalize_homography(&plane_to_camera_matrix(pose))
}

/// Determinant of `m` with row `i` and column `j` (both 1-based) deleted.
fn minor(m: &Matrix3<f64>, i: usize, j: usize) -> f64 {
    let rows: Vec<usize> = (0..3).filter(|&r| r != i - 1).collect();
    let cols: Vec<usize> = (0..3).filter(|&c| c != j - 1).collect();
    m[(rows[0], cols[0])] * m[(rows[1], cols[1])] - m[(rows[0], cols[1])] * m[(rows[1], cols[0])]
}

/// `H_{c→π}` from the minors of `T = [r₁ r₂ t]`, with the `1/λ` factor
/// dropped and the result canonically normalized:
///
/// ```text
///  ⎡  m11  -m21  [-m11  m21  m31]·v ⎤
///  ⎢ -m12   m22  [ m12 -m22 -m32]·v ⎥     v = (u, v, f)ᵀ
///  ⎣  m13  -m23  [-m13  m23  m33]·v ⎦
/// ```
///
/// For a rotation, `m13 = r13`, `-m23 = r23` and `m33 = r33`.
pub fn homography_camera_to_plane(pose: &CameraPose) -> Result<Homography> {
    let lambda = pose.lambda();
    if lambda.abs() < 1e-12 * pose.focal * pose.translation.norm() || lambda == 0.0 {
        return Err(Error::DegeneratePose(format!(
            "λ = f·r₃ᵀt = {lambda:e}: camera center lies on the ground plane"
        )));
    }
    let t = plane_basis(pose);
    let m = |i, j| minor(&t, i, j);
    let v = Vector3::new(pose.principal[0], pose.principal[1], pose.focal);
    let row1 = Vector3::new(-m(1, 1), m(2, 1), m(3, 1));
    let row2 = Vector3::new(m(1, 2), -m(2, 2), -m(3, 2));
    let row3 = Vector3::new(-m(1, 3), m(2, 3), m(3, 3));
    let h = Matrix3::new(
        m(1, 1),
        -m(2, 1),
        row1.dot(&v),
        -m(1, 2),
        m(2, 2),
        row2.dot(&v),
        m(1, 3),
        -m(2, 3),
        row3.dot(&v),
    );
    normalize_homography(&h)
}

/// Maps an image pixel of `pose` to plane-raster pixel coordinates.
pub fn image_to_plane_pixel(
    pose: &CameraPose,
    plane: &PlaneConfig,
    image_point: [f64; 2],
) -> Result<[f64; 2]> {
    let h = homography_camera_to_plane(pose)?;
    let world = h
        .apply(image_point)
        .ok_or_else(|| Error::DegeneratePose("image point maps to infinity on π".into()))?;
    Ok(plane.world_to_pixel(world))
}

/// Where a 3D point appears on the stabilized plane raster when seen by
/// `pose`: project into the image, then map back onto π.
pub fn stabilized_position(
    point: &Vector3<f64>,
    pose: &CameraPose,
    plane: &PlaneConfig,
) -> Result<[f64; 2]> {
    let img = pose
        .project(point)
        .ok_or_else(|| Error::DegeneratePose("point is behind the camera".into()))?;
    image_to_plane_pixel(pose, plane, [img.x, img.y])
}

/// Apparent displacement (plane pixels) of a 3D point between two views
/// after both are stabilized onto π. Zero for points on π.
pub fn parallax_displacement(
    point: &Vector3<f64>,
    pose_a: &CameraPose,
    pose_b: &CameraPose,
    plane: &PlaneConfig,
) -> Result<[f64; 2]> {
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegeneratePose("non-finite point".into()));
    }
    let a = stabilized_position(point, pose_a, plane)?;
    let b = stabilized_position(point, pose_b, plane)?;
    Ok([b[0] - a[0], b[1] - a[1]])
}

/// Resamples `src` so that output pixel `p` takes the bilinear sample at
/// `out_to_src · p`. Pixels that map outside the source (or behind the
/// projection) are zero and false in the returned validity mask.
pub fn warp_homography(
    src: &Frame,
    out_to_src: &Matrix3<f64>,
    out_width: usize,
    out_height: usize,
) -> (Frame, BinaryMask) {
    let ch = src.channels();
    let (sw, sh) = (src.width(), src.height());
    let max_x = sw as f64 - 1.0;
    let max_y = sh as f64 - 1.0;
    const EDGE_EPS: f64 = 1e-9;

    let mut data = vec![0.0f32; out_width * out_height * ch];
    let mut valid = vec![false; out_width * out_height];
    data.par_chunks_mut(out_width * ch)
        .zip(valid.par_chunks_mut(out_width))
        .enumerate()
        .for_each(|(row, (out_row, valid_row))| {
            for col in 0..out_width {
                let q = out_to_src * Vector3::new(col as f64, row as f64, 1.0);
                if q.z <= 0.0 {
                    continue;
                }
                let sx = q.x / q.z;
                let sy = q.y / q.z;
                if !(sx >= -EDGE_EPS && sx <= max_x + EDGE_EPS && sy >= -EDGE_EPS && sy <= max_y + EDGE_EPS) {
                    continue;
                }
                let sx = sx.clamp(0.0, max_x);
                let sy = sy.clamp(0.0, max_y);
                let x0 = sx.floor() as usize;
                let y0 = sy.floor() as usize;
                let x1 = (x0 + 1).min(sw - 1);
                let y1 = (y0 + 1).min(sh - 1);
                let fx = sx - x0 as f64;
                let fy = sy - y0 as f64;
                for c in 0..ch {
                    let v00 = f64::from(src.get(x0, y0, c));
                    let v10 = f64::from(src.get(x1, y0, c));
                    let v01 = f64::from(src.get(x0, y1, c));
                    let v11 = f64::from(src.get(x1, y1, c));
                    let top = v00 + (v10 - v00) * fx;
                    let bottom = v01 + (v11 - v01) * fx;
                    out_row[col * ch + c] = (top + (bottom - top) * fy) as f32;
                }
                valid_row[col] = true;
            }
        });

    let mut out = Frame::new(src.index, out_width, out_height, ch, data).expect("warp output");
    out.timestamp = src.timestamp;
    let mask = BinaryMask::from_bits(out_width, out_height, valid).expect("warp validity");
    (out, mask)
}

/// Projects a frame onto the plane raster described by `plane`.
pub fn warp_to_plane(
    frame: &Frame,
    pose: &CameraPose,
    plane: &PlaneConfig,
) -> Result<(Frame, BinaryMask)> {
    plane.validate()?;
    if pose.lambda() == 0.0 {
        return Err(Error::DegeneratePose("camera center lies on the ground plane".into()));
    }
    let out_to_src = plane_to_camera_matrix(pose) * plane.pixel_to_world_matrix();
    if out_to_src.determinant().abs() <= 1e-12 * out_to_src.amax().powi(3) {
        return Err(Error::DegeneratePose("plane-to-image map is singular".into()));
    }
    Ok(warp_homography(frame, &out_to_src, plane.output_width, plane.output_height))
}

/// Header line of the pose file.
pub const POSE_HEADER: &str = "frame_index,f,u,v,r11,r12,r13,r21,r22,r23,r31,r32,r33,t1,t2,t3";

/// Parses a pose file: one `frame_index,f,u,v,R (row-major),t` line per frame
/// after the header. `path` only labels errors.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<(usize, CameraPose)>> {
    let mut out: Vec<(usize, CameraPose)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if n == 0 || line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: n as u64 + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 16 {
            return Err(bad(format!("expected 16 fields, got {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|e| bad(format!("frame_index {:?}: {e}", fields[0])))?;
        let mut v = [0.0; 15];
        for (k, f) in fields[1..].iter().enumerate() {
            v[k] = f.parse().map_err(|e| bad(format!("{f:?}: {e}")))?;
        }
        let rotation = Matrix3::new(v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]);
        let translation = Vector3::new(v[12], v[13], v[14]);
        let pose = CameraPose::new(v[0], [v[1], v[2]], rotation, translation)
            .map_err(|e| bad(e.to_string()))?;
        if out.last().is_some_and(|(prev, _)| *prev >= index) {
            return Err(bad(format!("frame_index {index} is not increasing")));
        }
        out.push((index, pose));
    }
    Ok(out)
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<(usize, CameraPose)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}

pub fn format_poses(poses: &[(usize, CameraPose)]) -> String {
    let mut s = String::from(POSE_HEADER);
    s.push('\n');
    for (i, p) in poses {
        let r = &p.rotation;
        let t = &p.translation;
        s.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p.focal,
            p.principal[0],
            p.principal[1],
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z
        ));
    }
    s
}

pub fn write_poses(path: impl AsRef<Path>, poses: &[(usize, CameraPose)]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_poses(poses)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nadir(f: f64, u: f64, v: f64, h: f64) -> CameraPose {
        CameraPose::new(f, [u, v], Matrix3::identity(), Vector3::new(0.0, 0.0, h)).unwrap()
    }

    #[test]
    fn nadir_plane_to_camera_matches_symbolic_product() {
        let (f, u, v, h) = (800.0, 320.0, 240.0, 1500.0);
        let got = homography_plane_to_camera(&nadir(f, u, v, h)).unwrap();
        // K·[r₁ r₂ t] multiplied out by hand
        let expected = normalize_homography(&Matrix3::new(
            f, 0.0, u * h, 0.0, f, v * h, 0.0, 0.0, h,
        ))
        .unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-15);
        let origin = got.apply([0.0, 0.0]).unwrap();
        assert!((origin[0] - u).abs() < 1e-9 && (origin[1] - v).abs() < 1e-9);
    }

    #[test]
    fn nadir_camera_to_plane_matches_direct_inverse() {
        let (f, u, v, h) = (800.0, 320.0, 240.0, 1500.0);
        let got = homography_camera_to_plane(&nadir(f, u, v, h)).unwrap();
        let expected = normalize_homography(&Matrix3::new(
            1.0 / f,
            0.0,
            -u / f,
            0.0,
            1.0 / f,
            -v / f,
            0.0,
            0.0,
            1.0 / h,
        ))
        .unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-12, "{got:?} vs {expected:?}");
    }

    #[test]
    fn camera_to_plane_inverts_plane_to_camera() {
        let pose = nadir(500.0, 10.0, -4.0, 120.0);
        let fwd = homography_plane_to_camera(&pose).unwrap();
        let back = homography_camera_to_plane(&pose).unwrap();
        let id = back.compose(&fwd).unwrap();
        assert!(id.max_abs_diff(&Homography::identity()) < 1e-12);
    }

    #[test]
    fn degenerate_pose_is_rejected() {
        // camera center on π: t orthogonal to r₃
        let pose = CameraPose::new(500.0, [0.0, 0.0], Matrix3::identity(), Vector3::new(3.0, 1.0, 0.0)).unwrap();
        assert!(matches!(
            homography_camera_to_plane(&pose),
            Err(Error::DegeneratePose(_))
        ));
        assert!(matches!(
            homography_plane_to_camera(&pose),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn identity_configuration_warp_is_identity() {
        let (f, u, v, h) = (100.0, 8.0, 6.0, 50.0);
        let pose = nadir(f, u, v, h);
        let plane = PlaneConfig {
            output_width: 16,
            output_height: 12,
            plane_scale: h / f,
            plane_origin: [-u * h / f, -v * h / f],
        };
        let frame = Frame::from_fn(0, 16, 12, 3, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f32 / 10.0);
        let (out, valid) = warp_to_plane(&frame, &pose, &plane).unwrap();
        assert_eq!(valid.count(), 16 * 12);
        for (a, b) in out.data().iter().zip(frame.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn subpixel_translation_of_linear_ramp() {
        let w = 40;
        let frame = Frame::from_fn(0, w, 4, 1, |x, _, _| x as f32 / w as f32);
        // output x samples source x - 3.5, shifting content right by 3.5 px
        let shift = Matrix3::new(1.0, 0.0, -3.5, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let (out, valid) = warp_homography(&frame, &shift, w, 4);
        for x in 0..w {
            let expected_valid = x as f64 >= 3.5;
            assert_eq!(valid.get(x, 1), expected_valid, "x={x}");
            if expected_valid {
                let expected = (x as f64 - 3.5) / w as f64;
                assert!((f64::from(out.get(x, 1, 0)) - expected).abs() < 1e-6);
            } else {
                assert_eq!(out.get(x, 1, 0), 0.0);
            }
        }
    }

    #[test]
    fn on_plane_points_have_zero_parallax() {
        let plane = PlaneConfig {
            output_width: 10,
            output_height: 10,
            plane_scale: 0.5,
            plane_origin: [0.0, 0.0],
        };
        let a = CameraPose::look_at(1000.0, [64.0, 64.0], Vector3::new(400.0, 0.0, 900.0), Vector3::zeros()).unwrap();
        let b = CameraPose::look_at(1000.0, [64.0, 64.0], Vector3::new(0.0, 400.0, 900.0), Vector3::zeros()).unwrap();
        let d = parallax_displacement(&Vector3::new(12.0, -7.0, 0.0), &a, &b, &plane).unwrap();
        assert!(d[0].abs() < 1e-9 && d[1].abs() < 1e-9);
        let d = parallax_displacement(&Vector3::new(12.0, -7.0, 30.0), &a, &b, &plane).unwrap();
        assert!(d[0].hypot(d[1]) > 1.0);
    }

    #[test]
    fn pose_file_round_trip() {
        let a = CameraPose::look_at(
            900.0,
            [128.0, 120.5],
            Vector3::new(300.0, -40.0, 1500.0),
            Vector3::new(0.0, 0.0, 0.0),
        )
        .unwrap();
        let poses = vec![(0, a), (3, nadir(800.0, 64.0, 64.0, 1000.0))];
        let text = format_poses(&poses);
        assert_eq!(parse_poses(&text, Path::new("p.csv")).unwrap(), poses);
        let bad = text.replace("800,", "800,x,");
        assert!(matches!(parse_poses(&bad, Path::new("p.csv")), Err(Error::Parse { line: 3, .. })));
        let unordered = format_poses(&[poses[1], poses[0]]);
        assert!(parse_poses(&unordered, Path::new("p.csv")).is_err());
    }
}
