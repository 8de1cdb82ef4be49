//! Desk-scale training on the analytic glass sphere: curved paths through a
//! silhouette-carved index grid versus straight rays, compared on held-out
//! views.
//!
//! ```text
//! cargo run --release --example train_desk -- [iterations]
//! ```

use eikonerf::camera::{orbit_cameras, Intrinsics};
use eikonerf::metrics::psnr;
use eikonerf::refindex::{carve, BoundingBox, CarveOptions, SilhouetteSet};
use eikonerf::scene::{synthesize_views, AnalyticScene};
use eikonerf::train::{render_image, Medium, TrainConfig, Trainer, TrainingSet};
use eikonerf::Vec3;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> eikonerf::Result<()> {
    let iterations: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3000);
    let scene = AnalyticScene::glass_sphere();
    let intr = Intrinsics::from_fov_x(64, 64, 0.69);
    let train_views = synthesize_views(&scene, &orbit_cameras(intr, 20, 4.0, Vec3::zeros()), 512)?;
    let test_views = synthesize_views(&scene, &orbit_cameras(intr, 7, 4.0, Vec3::zeros()), 512)?;

    let silhouettes = SilhouetteSet::new(
        train_views.iter().map(|v| v.mask.clone()).collect(),
        train_views.iter().map(|v| v.camera).collect(),
    )?;
    let report = carve(&silhouettes, [64; 3], BoundingBox::cube(1.25), 1.5, CarveOptions::default())?;
    let grid = report.grid.smooth(1.0)?;
    println!("carved {} occupied vertices", report.occupied_vertices);

    let pairs: Vec<_> = train_views.iter().map(|v| (v.camera, v.image.clone())).collect();
    let data = TrainingSet::from_views(&pairs, scene.near, scene.far)?;

    let config = TrainConfig {
        iterations,
        warmup_iters: iterations / 6,
        ..TrainConfig::desk()
    };
    for (name, straight) in [("curved", false), ("straight", true)] {
        let cfg = TrainConfig {
            straight_paths: straight,
            ..config.clone()
        };
        let mut trainer = Trainer::new(cfg, Medium::Grid(grid.clone()), data.clone())?;
        let start = std::time::Instant::now();
        trainer.run(|_, loss| {
            if loss.iteration % 250 == 0 {
                println!("{name} iter {:>5} l_rgb {:.5}", loss.iteration, loss.l_rgb);
            }
            Ok(())
        })?;
        let sampling = trainer.config.sampling();
        let mut total = 0.0;
        for v in &test_views {
            let img = render_image(&trainer.params, &trainer.medium, &sampling, &v.camera, scene.near, scene.far, 0);
            total += psnr(&img, &v.image)?;
        }
        println!(
            "{name}: held-out PSNR {:.2} dB after {} iterations ({:.1} s)",
            total / test_views.len() as f64,
            iterations,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
