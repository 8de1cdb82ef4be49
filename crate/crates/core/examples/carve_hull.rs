//! Carves a refractive-index grid from synthetic silhouettes of the glass
//! sphere and reports how the visual hull volume shrinks toward the true
//! sphere as views are added.
//!
//! ```text
//! cargo run --release --example carve_hull [out.eikg]
//! ```

use eikonerf::camera::{orbit_cameras, Intrinsics};
use eikonerf::refindex::{carve, BoundingBox, CarveOptions};
use eikonerf::scene::analytic::make_silhouettes;
use eikonerf::scene::AnalyticScene;
use eikonerf::Vec3;

fn main() -> eikonerf::Result<()> {
    let scene = AnalyticScene::glass_sphere();
    let n = scene.index.material_index();
    let truth = 4.0 / 3.0 * std::f64::consts::PI;
    println!("sphere volume {truth:.4}");

    let intr = Intrinsics::from_fov_x(96, 96, 0.69);
    let mut last = None;
    for views in [2, 4, 8, 16, 32] {
        let silhouettes = make_silhouettes(&scene, &orbit_cameras(intr, views, 4.0, Vec3::zeros()))?;
        let report = carve(&silhouettes, [48; 3], BoundingBox::cube(1.25), n, CarveOptions::default())?;
        let volume = report.grid.material_volume(n);
        println!(
            "{views:>3} views: hull volume {volume:.4} ({:+.1}%), {} occupied vertices",
            100.0 * (volume / truth - 1.0),
            report.occupied_vertices
        );
        last = Some(report.grid);
    }

    if let (Some(out), Some(grid)) = (std::env::args().nth(1), last) {
        grid.smooth(1.0)?.save(out.as_ref())?;
        println!("wrote {out}");
    }
    Ok(())
}
