//! Dataset persistence: transforms.json plus LDR images, optional alpha,
//! ground-truth emission masks, and HDR references.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::colorspace::u8_to_srgb;
use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};

use super::camera::Camera;
use super::pfm::read_pfm;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformsFile {
    pub camera_angle_x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Aabb>,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file_path: String,
    /// Camera-to-world, row-major, OpenGL axes.
    pub transform_matrix: [[f64; 4]; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emissive_on: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hdr_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_path: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub name: String,
    pub camera: Camera,
    pub on: bool,
    /// LDR pixels kept as sRGB values in [0, 1].
    pub pixels: Vec<Vec3>,
    pub alpha: Option<Vec<f64>>,
    pub gt_mask: Option<Vec<bool>>,
    pub gt_hdr: Option<Vec<Vec3>>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub width: usize,
    pub height: usize,
    pub camera_angle_x: f64,
    pub bbox: Aabb,
    pub frames: Vec<Frame>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn pixels_per_frame(&self) -> usize {
        self.width * self.height
    }

    pub fn n_rays(&self) -> usize {
        self.frames.len() * self.pixels_per_frame()
    }

    /// Decompose a global ray id into (frame, px, py).
    pub fn locate(&self, ray_id: usize) -> (usize, usize, usize) {
        let per = self.pixels_per_frame();
        let frame = ray_id / per;
        let pix = ray_id % per;
        (frame, pix % self.width, pix / self.width)
    }

    pub fn ray_id(&self, frame: usize, px: usize, py: usize) -> usize {
        frame * self.pixels_per_frame() + py * self.width + px
    }
}

const DEFAULT_BBOX: Aabb = Aabb {
    min: Vec3 { x: -1.25, y: -1.25, z: -1.25 },
    max: Vec3 { x: 1.25, y: 1.25, z: 1.25 },
};

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let tpath = dir.join("transforms.json");
    if !tpath.exists() {
        return Err(Error::MissingFile(tpath));
    }
    let raw = std::fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
    let tf: TransformsFile = serde_json::from_str(&raw)?;
    let mut warnings = Vec::new();
    let bbox = match tf.bbox {
        Some(b) => b,
        None => {
            warnings.push("transforms.json has no bbox; using the default cube".to_string());
            DEFAULT_BBOX
        }
    };

    let mut frames = Vec::with_capacity(tf.frames.len());
    let mut resolution: Option<(u32, u32)> = None;
    for entry in &tf.frames {
        let img_path = resolve(dir, &entry.file_path);
        let img = image::open(&img_path)?.to_rgb8();
        let (w, h) = img.dimensions();
        match resolution {
            None => resolution = Some((w, h)),
            Some((ew, eh)) if (ew, eh) != (w, h) => {
                return Err(Error::ResolutionMismatch {
                    path: entry.file_path.clone(),
                    got_w: w,
                    got_h: h,
                    want_w: ew,
                    want_h: eh,
                });
            }
            _ => {}
        }
        let pixels: Vec<Vec3> = img
            .pixels()
            .map(|p| Vec3::new(u8_to_srgb(p.0[0]), u8_to_srgb(p.0[1]), u8_to_srgb(p.0[2])))
            .collect();

        let on = match entry.emissive_on {
            Some(v) => v,
            None => {
                warnings.push(format!(
                    "frame {} has no emissive_on flag; defaulting to true",
                    entry.file_path
                ));
                true
            }
        };

        let alpha = match &entry.alpha_path {
            Some(p) => Some(load_gray(&resolve(dir, p))?),
            None => None,
        };
        let gt_mask = match &entry.mask_path {
            Some(p) => Some(load_gray(&resolve(dir, p))?.into_iter().map(|v| v > 0.0).collect()),
            None => None,
        };
        let gt_hdr = match &entry.hdr_path {
            Some(p) => {
                let (hw, hh, pix) = read_pfm(&resolve(dir, p))?;
                if (hw as u32, hh as u32) != (w, h) {
                    return Err(Error::ResolutionMismatch {
                        path: p.clone(),
                        got_w: hw as u32,
                        got_h: hh as u32,
                        want_w: w,
                        want_h: h,
                    });
                }
                Some(pix)
            }
            None => None,
        };

        frames.push(Frame {
            name: entry.file_path.clone(),
            camera: Camera {
                width: w as usize,
                height: h as usize,
                camera_angle_x: tf.camera_angle_x,
                c2w: entry.transform_matrix,
            },
            on,
            pixels,
            alpha,
            gt_mask,
            gt_hdr,
        });
    }

    let (w, h) = resolution.ok_or_else(|| Error::Dataset("dataset has no frames".into()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok(Dataset {
        width: w as usize,
        height: h as usize,
        camera_angle_x: tf.camera_angle_x,
        bbox,
        frames,
        warnings,
    })
}

fn resolve(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

fn load_gray(path: &Path) -> Result<Vec<f64>> {
    let img = image::open(path)?.to_luma8();
    Ok(img.pixels().map(|p| p.0[0] as f64 / 255.0).collect())
}

/// Write an sRGB [0,1] pixel buffer as an 8-bit PNG.
pub fn write_srgb_png(path: &Path, width: usize, height: usize, pixels: &[Vec3]) -> Result<()> {
    let mut img = image::RgbImage::new(width as u32, height as u32);
    for (i, p) in pixels.iter().enumerate() {
        let (x, y) = ((i % width) as u32, (i / width) as u32);
        img.put_pixel(
            x,
            y,
            image::Rgb([
                crate::colorspace::srgb_to_u8(p.x),
                crate::colorspace::srgb_to_u8(p.y),
                crate::colorspace::srgb_to_u8(p.z),
            ]),
        );
    }
    img.save(path)?;
    Ok(())
}

pub fn write_mask_png(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let mut img = image::GrayImage::new(width as u32, height as u32);
    for (i, &m) in mask.iter().enumerate() {
        img.put_pixel((i % width) as u32, (i / width) as u32, image::Luma([if m { 255 } else { 0 }]));
    }
    img.save(path)?;
    Ok(())
}

pub fn load_mask_png(path: &Path) -> Result<Vec<bool>> {
    Ok(load_gray(path)?.into_iter().map(|v| v > 0.0).collect())
}
