#![allow(dead_code)]

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::Rng;

use fluxfuse::{CameraPose, Frame};

pub fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

/// Uniformly random rotation, random translation and intrinsics.
pub fn random_pose(rng: &mut impl Rng) -> CameraPose {
    let q: Vector4<f64> = loop {
        let v = Vector4::<f64>::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let rot = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = Vector3::new(
        rng.gen_range(-2000.0..2000.0),
        rng.gen_range(-2000.0..2000.0),
        rng.gen_range(-2000.0..2000.0),
    );
    let f = rng.gen_range(500.0..30000.0);
    let principal = [rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)];
    CameraPose::new(f, principal, *rot.to_rotation_matrix().matrix(), t).expect("random pose")
}

/// Camera-to-plane map by generic inversion of `K [r1 r2 t]`.
pub fn inverse_oracle(pose: &CameraPose) -> Option<Matrix3<f64>> {
    let r = pose.rotation;
    let t = pose.translation;
    let [u, v] = pose.principal;
    let k = Matrix3::new(pose.focal, 0.0, u, 0.0, pose.focal, v, 0.0, 0.0, 1.0);
    let m = Matrix3::new(r[(0, 0)], r[(0, 1)], t[0], r[(1, 0)], r[(1, 1)], t[1], r[(2, 0)], r[(2, 1)], t[2]);
    (k * m).try_inverse()
}

/// Largest entrywise difference after scaling both to unit Frobenius norm
/// and aligning their signs.
pub fn projective_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let a = a / a.norm();
    let b = b / b.norm();
    let s = if a.dot(&b) >= 0.0 { 1.0 } else { -1.0 };
    (a - b * s).amax()
}

/// Camera at `center` looking straight down, image x along world +X.
pub fn nadir_pose(center: Vector3<f64>, focal: f64, principal: [f64; 2]) -> CameraPose {
    let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    CameraPose::new(focal, principal, r, -(r * center)).expect("nadir pose")
}

/// Ground-plane checkerboard of `cell` meters seen by `pose`, each pixel
/// averaged over `ss`×`ss` rays.
pub fn checker_frame(pose: &CameraPose, width: usize, height: usize, cell: f64, ss: usize) -> Frame {
    let c = pose.center();
    Frame::from_fn(0, width, height, 1, |x, y, _| {
        let mut acc = 0.0;
        for sy in 0..ss {
            for sx in 0..ss {
                let px = x as f64 - 0.5 + (sx as f64 + 0.5) / ss as f64;
                let py = y as f64 - 0.5 + (sy as f64 + 0.5) / ss as f64;
                let d = pose.pixel_ray(px, py);
                let s = -c.z / d.z;
                let (gx, gy) = (c.x + s * d.x, c.y + s * d.y);
                let parity = ((gx / cell).floor() as i64 + (gy / cell).floor() as i64).rem_euclid(2);
                acc += if parity == 0 { 0.8 } else { 0.2 };
            }
        }
        (acc / (ss * ss) as f64) as f32
    })
}

/// 8-connected labels by breadth-first flood fill, numbered from 1 in raster
/// order of each component's first pixel.
pub fn flood_fill_labels(mask: &fluxfuse::BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Dilation as the union of shifted copies, erosion as the intersection of
/// shifted copies, both over in-raster neighbors only.
pub fn shifted_morphology(mask: &fluxfuse::BinaryMask, r: usize, dilate: bool) -> fluxfuse::BinaryMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = r as i64;
    fluxfuse::BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        let mut neighbors = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (x as i64 + dx, y as i64 + dy)))
            .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < w && ny < h)
            .map(|(nx, ny)| mask.get(nx as usize, ny as usize));
        if dilate {
            neighbors.any(|v| v)
        } else {
            neighbors.all(|v| v)
        }
    })
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> fluxfuse::BinaryMask {
    fluxfuse::BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

/// Pixel `(x, y)` belongs to a box when its center `(x + 0.5, y + 0.5)` lies
/// in the half-open rectangle.
pub fn covered_by(b: &fluxfuse::BBox, x: usize, y: usize) -> bool {
    let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
    cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h
}
