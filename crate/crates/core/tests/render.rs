use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eikonerf::camera::{Camera, Intrinsics};
use eikonerf::metrics::{mse, psnr, ssim};
use eikonerf::render::{composite, composite_backward, composite_with_boundary, CompositeOptions, CompositeUpstream, Image, Rgb};
use eikonerf::scene::analytic::oracle_pixel;
use eikonerf::scene::AnalyticScene;
use eikonerf::train::pipeline::{render_image, Medium};
use eikonerf::train::{init_params, TrainConfig};
use eikonerf::Vec3;

fn random_ray(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>, Vec<Rgb>) {
    let deltas = (0..n).map(|_| rng.gen_range(0.0..0.2)).collect();
    let sigma = (0..n)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..30.0) })
        .collect();
    let rgb = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    (deltas, sigma, rgb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_and_leftover_transmittance_sum_to_one(seed in any::<u64>(), n in 1usize..200, compensated: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (deltas, sigma, rgb) = random_ray(&mut rng, n);
        let out = composite(&deltas, &sigma, &rgb, CompositeOptions { compensated });
        let total: f64 = out.weights.iter().sum::<f64>() + out.final_transmittance;
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
        prop_assert!(out.weights.iter().all(|&w| w >= 0.0));
        prop_assert!(out.transmittance.windows(2).all(|t| t[1] <= t[0]));
    }
}

#[test]
fn zero_boundary_matches_plain_compositing_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let n = rng.gen_range(1..64);
        let (deltas, sigma, rgb) = random_ray(&mut rng, n);
        let plain = composite(&deltas, &sigma, &rgb, CompositeOptions::default());
        let with = composite_with_boundary(&deltas, &sigma, &rgb, [0.0; 3], CompositeOptions::default());
        assert_eq!(plain.color.map(f64::to_bits), with.color.map(f64::to_bits));
    }
}

#[test]
fn homogeneous_slab_matches_the_closed_form() {
    let (sigma, length, n) = (1.3f64, 3.0f64, 4000usize);
    let c = [0.2, 0.5, 0.9];
    let b = [0.7, 0.1, 0.4];
    let out = composite_with_boundary(&vec![length / n as f64; n], &vec![sigma; n], &vec![c; n], b, CompositeOptions::default());
    let t = (-sigma * length).exp();
    for k in 0..3 {
        let expected = (1.0 - t) * c[k] + t * b[k];
        assert!((out.color[k] - expected).abs() < 1e-12);
    }
    assert!((out.final_transmittance - t).abs() < 1e-12);
}

#[test]
fn empty_and_opaque_rays() {
    let out = composite_with_boundary(&[0.5; 4], &[0.0; 4], &[[1.0; 3]; 4], [0.3, 0.6, 0.9], CompositeOptions::default());
    assert_eq!(out.color, [0.3, 0.6, 0.9]);
    assert_eq!(out.final_transmittance, 1.0);
    let out = composite_with_boundary(&[1.0, 1.0], &[1e6, 0.0], &[[0.25; 3], [1.0; 3]], [1.0; 3], CompositeOptions::default());
    assert_eq!(out.color, [0.25; 3]);
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let n = rng.gen_range(1..40);
        let (deltas, sigma, rgb) = random_ray(&mut rng, n);
        let boundary: Rgb = [rng.gen(), rng.gen(), rng.gen()];
        let up = CompositeUpstream {
            color: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            final_transmittance: rng.gen_range(-1.0..1.0),
        };
        let loss = |sigma: &[f64], rgb: &[Rgb], b: Rgb| {
            let o = composite_with_boundary(&deltas, sigma, rgb, b, CompositeOptions::default());
            (0..3).map(|k| up.color[k] * o.color[k]).sum::<f64>() + up.final_transmittance * o.final_transmittance
        };
        let fwd = composite_with_boundary(&deltas, &sigma, &rgb, boundary, CompositeOptions::default());
        let g = composite_backward(&deltas, &rgb, boundary, &fwd, &up);
        let h = 1e-6;
        for i in 0..n {
            let (mut hi, mut lo) = (sigma.clone(), sigma.clone());
            hi[i] += h;
            lo[i] = (lo[i] - h).max(0.0);
            let fd = (loss(&hi, &rgb, boundary) - loss(&lo, &rgb, boundary)) / (hi[i] - lo[i]);
            assert!((fd - g.sigma[i]).abs() < 1e-6 * (1.0 + fd.abs()), "sigma {i}: fd {fd} vs {}", g.sigma[i]);
            for k in 0..3 {
                let mut c = rgb.clone();
                c[i][k] += h;
                let fd = (loss(&sigma, &c, boundary) - loss(&sigma, &rgb, boundary)) / h;
                assert!((fd - g.rgb[i][k]).abs() < 1e-6);
            }
        }
        for k in 0..3 {
            let mut b = boundary;
            b[k] += h;
            let fd = (loss(&sigma, &rgb, b) - loss(&sigma, &rgb, boundary)) / h;
            assert!((fd - g.boundary[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn transparent_field_renders_the_boundary_network() {
    let mut config = TrainConfig::desk();
    config.fields.fine.width = 16;
    config.fields.coarse.width = 16;
    config.fields.boundary.width = 16;
    let mut params = init_params(&config);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let boundary_out = *params.boundary.layers().last().unwrap();
    for w in &mut params.boundary.params[boundary_out.offset..] {
        *w = rng.gen_range(-2.0..2.0);
    }
    for net in [&mut params.coarse, &mut params.fine] {
        let d = net.density_layer();
        net.params[d.offset + d.inputs * d.outputs] = -1000.0;
    }
    let cam = Camera::look_at(Intrinsics::from_fov_x(12, 10, 0.7), Vec3::new(0.5, -4.0, 1.0), Vec3::zeros(), Vec3::z());
    let image = render_image(&params, &Medium::Straight, &config.sampling(), &cam, 2.0, 6.0, 3);
    let mut spread = 0.0f64;
    for y in 0..10 {
        for x in 0..12 {
            let expected = params.boundary.eval(&cam.pixel_ray(x, y, 2.0, 6.0).direction);
            let got = image.get(x, y);
            for k in 0..3 {
                assert!((got[k] - expected[k]).abs() < 1e-12);
            }
            spread = spread.max((got[0] - image.get(0, 0)[0]).abs());
        }
    }
    assert!(spread > 1e-3, "boundary network should vary over the image");
}

#[test]
fn vacuum_oracle_sees_the_skybox() {
    let scene = AnalyticScene::vacuum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let origin = -4.0 * d + Vec3::new(0.1, 0.2, 0.3);
        let got = oracle_pixel(&scene, &origin, &d, 64);
        let expected = scene.skybox.radiance(&d);
        for k in 0..3 {
            assert!((got[k] - expected[k]).abs() < 1e-12);
        }
    }
}

fn filled(width: u32, height: u32, c: Rgb) -> Image {
    let mut img = Image::new(width, height);
    img.pixels.iter_mut().for_each(|p| *p = c);
    img
}

#[test]
fn metric_oracles() {
    let white = filled(16, 16, [1.0; 3]);
    assert_eq!(psnr(&white, &white).unwrap(), 99.0);
    assert!((ssim(&white, &white).unwrap() - 1.0).abs() < 1e-12);

    let off = filled(16, 16, [1.0, 245.0 / 255.0, 1.0]);
    let expected_mse = (10.0f64 / 255.0).powi(2) / 3.0;
    assert!((mse(&white, &off).unwrap() - expected_mse).abs() < 1e-15);
    let expected = 20.0 * (255.0f64 / 10.0).log10() + 10.0 * 3.0f64.log10();
    assert!((psnr(&white, &off).unwrap() - expected).abs() < 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut noisy = Image::new(24, 20);
    noisy.pixels.iter_mut().for_each(|p| *p = [rng.gen(), rng.gen(), rng.gen()]);
    let mut other = noisy.clone();
    other.pixels.iter_mut().for_each(|p| p[1] = (p[1] + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0));
    let (ab, ba) = (ssim(&noisy, &other).unwrap(), ssim(&other, &noisy).unwrap());
    assert!((ab - ba).abs() < 1e-12 && ab < 1.0 && ab > 0.0);
    assert!(psnr(&noisy, &Image::new(5, 5)).is_err());
}

#[test]
fn images_round_trip_through_png_and_raw() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut img = Image::new(7, 5);
    img.pixels.iter_mut().for_each(|p| *p = [rng.gen(), rng.gen(), rng.gen()]);
    let dir = tempfile::tempdir().unwrap();

    let raw = dir.path().join("a.raw");
    img.save_raw(&raw).unwrap();
    let back = Image::load_raw(&raw).unwrap();
    for (a, b) in img.pixels.iter().zip(&back.pixels) {
        for k in 0..3 {
            assert_eq!(b[k], a[k] as f32 as f64);
        }
    }

    let png = dir.path().join("a.png");
    img.save_png(&png).unwrap();
    let back = Image::load_png(&png).unwrap();
    assert_eq!((back.width, back.height), (7, 5));
    for (a, b) in img.pixels.iter().zip(&back.pixels) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    let half = filled(4, 4, [0.5; 3]).downscaled(2);
    assert_eq!((half.width, half.height), (2, 2));
    assert!(half.pixels.iter().all(|p| *p == [0.5; 3]));
}
