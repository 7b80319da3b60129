use std::time::Instant;
use scenekit_core::field::*;
use scenekit_core::scene::{DepthMap, EntityMask};
use image::RgbImage;
use nalgebra::Point3;

fn main() {
    let intr = scenekit_core::camera::fov_to_intrinsics(55.0, 128, 128).unwrap();
    let mut depth = DepthMap::invalid(128, 128);
    let mut mask = EntityMask::empty(128, 128);
    let image = RgbImage::from_pixel(128, 128, image::Rgb([90, 120, 150]));
    for v in 0..128 { for u in 0..128 { depth.set(u, v, 3.0); mask.set(u, v, true); } }
    let sampler = RaySampler::new(&mask, &depth, &intr, &image, RaySupervisionParams { rays_per_batch: 16, samples_per_ray: 16, band: 0.1 }).unwrap();
    let t0 = Instant::now();
    let fit = fit_background(&sampler, FitParams { iters: 200, lr: 1e-3, seed: 0 }).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("200 iters (16 rays x 17): {:.2} s  -> {:.1} ms/iter, final loss {:.5}", dt, dt*5.0, fit.stats.final_loss);

    // grid eval probe
    let pts: Vec<Point3<f64>> = (0..100_000).map(|i| Point3::new((i%100) as f64*0.01, ((i/100)%100) as f64*0.01, 2.0+(i%7) as f64*0.1)).collect();
    let t0 = Instant::now();
    let out = fit.sdf.forward(&pts);
    let dt = t0.elapsed().as_secs_f64();
    println!("100k forward: {:.2} s ({:.0} pts/s), sum {:.3}", dt, 1e5/dt, out.iter().sum::<f64>());
}
