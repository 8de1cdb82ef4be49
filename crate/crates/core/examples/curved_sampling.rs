//! Coarse and hierarchical sampling along a curved ray through the glass
//! sphere, printed next to the straight ray the samples would land on
//! without refraction.
//!
//! ```text
//! cargo run --release --example curved_sampling
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eikonerf::eikonal::{step_size, track, Ray, TrackOptions};
use eikonerf::sampling::{merge_sorted, sample_coarse, sample_fine};
use eikonerf::scene::AnalyticScene;
use eikonerf::Vec3;

fn main() -> eikonerf::Result<()> {
    let scene = AnalyticScene::glass_sphere();
    let ray = Ray::new(Vec3::new(0.5, -4.0, 0.0), Vec3::y(), scene.near, scene.far)?;
    let (n_coarse, n_e, n_fine) = (16, 8, 16);
    let steps = ((ray.t_far - ray.t_near) / step_size(&ray, n_coarse, n_e)).round() as usize;
    let path = track(&ray, &scene, steps, TrackOptions::default());
    println!("{} Eikonal steps, exit direction {:.4?}", path.len() - 1, path.last_direction().as_slice());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let coarse = sample_coarse(&path, n_coarse, n_e, &mut rng);
    // pretend the coarse network put its mass inside the sphere
    let weights: Vec<f64> = coarse.positions.iter().map(|x| scene.emitter.density(x).max(1e-3)).collect();
    let fine = sample_fine(&coarse, &weights, &path, n_fine, &mut rng);
    let merged = merge_sorted(&coarse, &fine);

    println!("{:>6} {:>6}  {:>24}  {:>10}", "kind", "t", "curved position", "bend");
    for i in 0..merged.len() {
        let t = merged.t[i];
        let kind = if coarse.t.contains(&t) { "coarse" } else { "fine" };
        let p = merged.positions[i];
        let bend = (p - ray.at(t)).norm();
        println!("{kind:>6} {t:6.3}  ({:7.3}, {:7.3}, {:7.3})  {bend:10.4}", p.x, p.y, p.z);
    }
    Ok(())
}
