//! Scratch: geometry quality probe — expected surface depth along probe
//! rays vs the analytic scene's true first-hit depth.
use relume_core::io::checkpoint::load_checkpoint;
use relume_core::io::load_dataset;
use relume_core::math::Vec3;
use relume_core::oracle::scene::{make_box_scene, BoxSceneParams};
use relume_core::renderer::march::{expected_surface_point, march};
use relume_core::renderer::{Ray, Strata};
use std::path::Path;

fn first_hit_depth(scene: &relume_core::oracle::scene::AnalyticScene, ray: &Ray) -> Option<f64> {
    let mut t = ray.near;
    while t < ray.far {
        let f = scene.sdf.eval(ray.point_at(t));
        if f < 1e-4 {
            return Some(t);
        }
        t += f.max(1e-3);
    }
    None
}

#[test]
#[ignore]
fn depth_probe() {
    let ck_path = std::env::var("CK").unwrap_or("/tmp/ac4/p1/checkpoint_001200.bin".into());
    let ck = load_checkpoint(Path::new(&ck_path)).unwrap();
    let ds = load_dataset(Path::new("/tmp/ac4/data2")).unwrap();
    let scene = make_box_scene(&BoxSceneParams::default());
    println!("sharpness = {:.1}", ck.fields.sharpness());
    let mut errs = Vec::new();
    for gy in 0..7 {
        let mut row = String::new();
        for gx in 0..7 {
            let bx = -0.9 + 1.8 * gx as f64 / 6.0;
            let by = -0.9 + 1.8 * gy as f64 / 6.0;
            let origin = Vec3::new(bx * 0.3, by * 0.3, 2.0);
            let travel = (Vec3::new(bx, by, 0.0) - origin).normalized();
            let (t0, t1) = ds.bbox.intersect(origin, travel).unwrap();
            let ray = Ray::from_travel(origin, travel, t0.max(1e-3), t1, true);
            let m = march(&ck.fields, &ray, 96, Strata::Midpoint);
            let p = expected_surface_point(&ray, &m);
            let gt_t = first_hit_depth(&scene, &ray);
            match gt_t {
                Some(t) => {
                    let gt_p = ray.point_at(t);
                    let err = (p - gt_p).norm();
                    errs.push(err);
                    row.push_str(&format!("{:5.2} ", err));
                }
                None => row.push_str("  -   "),
            }
        }
        println!("{row}");
    }
    errs.sort_by(f64::total_cmp);
    println!(
        "median {:.3}  p90 {:.3}  max {:.3}",
        errs[errs.len() / 2],
        errs[errs.len() * 9 / 10],
        errs[errs.len() - 1]
    );
}
