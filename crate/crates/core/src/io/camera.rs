//! Camera model shared by dataset synthesis, loading, and rendering.
//!
//! Poses are camera-to-world 4x4 matrices with OpenGL-style axes: +x right,
//! +y up, -z forward (the camera looks along its negative z axis).
//! Intrinsics come from `camera_angle_x` as in Blender-exported transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::renderer::Ray;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub camera_angle_x: f64,
    /// Camera-to-world, row-major.
    pub c2w: [[f64; 4]; 4],
}

impl Camera {
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.camera_angle_x).tan()
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.c2w[0][3], self.c2w[1][3], self.c2w[2][3])
    }

    pub fn rotation(&self) -> Mat3 {
        Mat3::from_rows(
            [self.c2w[0][0], self.c2w[0][1], self.c2w[0][2]],
            [self.c2w[1][0], self.c2w[1][1], self.c2w[1][2]],
            [self.c2w[2][0], self.c2w[2][1], self.c2w[2][2]],
        )
    }

    /// World-space travel direction through pixel (px, py) in continuous
    /// pixel coordinates (add 0.5 for pixel centers).
    pub fn pixel_dir(&self, px: f64, py: f64) -> Vec3 {
        let f = self.focal();
        let d = Vec3::new(
            (px - 0.5 * self.width as f64) / f,
            -(py - 0.5 * self.height as f64) / f,
            -1.0,
        );
        self.rotation().mul_vec(d).normalized()
    }

    /// Primary ray through a pixel center, clipped to `bbox`. Rays that miss
    /// the bbox come back with an empty [near, far) interval.
    pub fn pixel_ray(&self, ix: usize, iy: usize, bbox: &crate::math::Aabb, on: bool) -> Ray {
        let travel = self.pixel_dir(ix as f64 + 0.5, iy as f64 + 0.5);
        let origin = self.origin();
        let (near, far) = match bbox.intersect(origin, travel) {
            Some((t0, t1)) if t1 > 0.0 => (t0.max(1e-4), t1),
            _ => (0.0, -1.0),
        };
        Ray::from_travel(origin, travel, near, far, on)
    }

    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        camera_angle_x: f64,
        width: usize,
        height: usize,
    ) -> Result<Camera> {
        let backward = (eye - target).normalized();
        let right = up.cross(backward);
        if right.norm() < 1e-9 {
            return Err(Error::Config("camera up vector parallel to view direction".into()));
        }
        let right = right.normalized();
        let cam_up = backward.cross(right);
        let c2w = [
            [right.x, cam_up.x, backward.x, eye.x],
            [right.y, cam_up.y, backward.y, eye.y],
            [right.z, cam_up.z, backward.z, eye.z],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Ok(Camera { width, height, camera_angle_x, c2w })
    }

    /// Pinhole intrinsics K with the principal point at the image center.
    pub fn intrinsics(&self) -> Mat3 {
        let f = self.focal();
        Mat3::from_rows(
            [f, 0.0, 0.5 * self.width as f64],
            [0.0, f, 0.5 * self.height as f64],
            [0.0, 0.0, 1.0],
        )
    }

    /// World-to-camera [R|t] in computer-vision convention (+z forward,
    /// +y down), suitable for K [R|t] projection.
    pub fn world_to_camera_cv(&self) -> (Mat3, Vec3) {
        let r_gl = self.rotation().transpose(); // world -> camera (GL axes)
        let t_gl = -r_gl.mul_vec(self.origin());
        let flip = Mat3::from_rows([1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]);
        let mut rows = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rows[i][j] = (0..3).map(|k| flip.rows[i][k] * r_gl.rows[k][j]).sum();
            }
        }
        (Mat3 { rows }, flip.mul_vec(t_gl))
    }
}

/// Cameras on an upper-hemisphere spiral looking at `target`.
pub fn spiral_cameras(
    n_views: usize,
    radius: f64,
    height_range: (f64, f64),
    target: Vec3,
    camera_angle_x: f64,
    width: usize,
    height: usize,
) -> Vec<Camera> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n_views)
        .map(|v| {
            let frac = if n_views > 1 { v as f64 / (n_views - 1) as f64 } else { 0.0 };
            let phi = golden * v as f64;
            let h = height_range.0 + (height_range.1 - height_range.0) * frac;
            let eye = Vec3::new(radius * phi.cos(), radius * phi.sin(), h);
            // Fall back to a y-up frame when the eye sits on the target's
            // vertical axis.
            Camera::look_at(eye, target, Vec3::new(0.0, 0.0, 1.0), camera_angle_x, width, height)
                .or_else(|_| {
                    Camera::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), camera_angle_x, width, height)
                })
                .expect("either up frame is valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Aabb;

    #[test]
    fn look_at_points_camera_at_target() {
        let cam = Camera::look_at(
            Vec3::new(0.3, 0.2, 2.0),
            Vec3::new(0.0, 0.0, 0.3),
            Vec3::new(0.0, 0.0, 1.0),
            0.7,
            64,
            64,
        )
        .unwrap();
        let center_dir = cam.pixel_dir(32.0, 32.0);
        let want = (Vec3::new(0.0, 0.0, 0.3) - cam.origin()).normalized();
        assert!((center_dir - want).norm() < 1e-9);
    }

    #[test]
    fn pixel_ray_marches_toward_scene() {
        let cam = Camera::look_at(
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::ZERO,
            Vec3::new(0.0, 1.0, 0.0),
            0.8,
            32,
            32,
        )
        .unwrap();
        let bbox = Aabb::new(Vec3::splat(-1.0), Vec3::splat(1.0));
        let ray = cam.pixel_ray(16, 16, &bbox, true);
        assert!(ray.near < ray.far);
        // Travel direction is -dir_out and points from the camera down.
        assert!(ray.travel_dir().z < -0.9);
        let entry = ray.point_at(ray.near);
        assert!((entry.z - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cv_projection_matches_pixel_dir() {
        let cam = Camera::look_at(
            Vec3::new(0.4, -0.3, 1.8),
            Vec3::new(0.1, 0.0, 0.2),
            Vec3::new(0.0, 0.0, 1.0),
            0.65,
            48,
            40,
        )
        .unwrap();
        // A world point along the ray of pixel (10, 25) must project back to
        // that pixel.
        let dir = cam.pixel_dir(10.5, 25.5);
        let p = cam.origin() + dir * 1.7;
        let (r, t) = cam.world_to_camera_cv();
        let pc = r.mul_vec(p) + t;
        assert!(pc.z > 0.0);
        let k = cam.intrinsics();
        let uv = k.mul_vec(pc);
        let (u, v) = (uv.x / uv.z, uv.y / uv.z);
        assert!((u - 10.5).abs() < 1e-6, "u {u}");
        assert!((v - 25.5).abs() < 1e-6, "v {v}");
    }

    #[test]
    fn spiral_cameras_are_above_and_look_down() {
        let cams = spiral_cameras(8, 0.4, (1.9, 2.3), Vec3::new(0.0, 0.0, 0.3), 0.6, 16, 16);
        assert_eq!(cams.len(), 8);
        for c in &cams {
            assert!(c.origin().z >= 1.9);
            assert!(c.pixel_dir(8.0, 8.0).z < -0.5);
        }
    }
}
