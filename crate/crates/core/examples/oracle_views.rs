//! Renders the analytic glass and water spheres with the reference
//! marcher and compares them against a vacuum render of the same emitter.
//!
//! ```text
//! cargo run --release --example oracle_views [out_dir]
//! ```

use std::path::PathBuf;

use eikonerf::camera::{Camera, Intrinsics};
use eikonerf::metrics::{psnr, ssim};
use eikonerf::scene::analytic::render_oracle;
use eikonerf::scene::{AnalyticScene, IndexProfile};
use eikonerf::Vec3;

fn main() -> eikonerf::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out).expect("create output directory");
    let cam = Camera::look_at(Intrinsics::from_fov_x(64, 64, 0.69), Vec3::new(0.0, -4.0, 0.6), Vec3::zeros(), Vec3::z());

    let vacuum = AnalyticScene {
        index: IndexProfile::Constant { n: 1.0 },
        ..AnalyticScene::glass_sphere()
    };
    let reference = render_oracle(&vacuum, &cam, 512);
    reference.save_png(&out.join("vacuum.png"))?;

    for (name, scene) in [("glass", AnalyticScene::glass_sphere()), ("water", AnalyticScene::water_sphere())] {
        let img = render_oracle(&scene, &cam, 512);
        let path = out.join(format!("{name}.png"));
        img.save_png(&path)?;
        println!(
            "{name}: n = {:.2}, vs vacuum PSNR {:.2} dB SSIM {:.3} -> {}",
            scene.index.material_index(),
            psnr(&img, &reference)?,
            ssim(&img, &reference)?,
            path.display()
        );
    }
    Ok(())
}
