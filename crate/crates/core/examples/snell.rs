//! Refraction and total internal reflection at a smoothed planar interface,
//! traced with the Eikonal stepper and compared against Snell's law.
//!
//! ```text
//! cargo run --release --example snell
//! ```

use eikonerf::eikonal::{track, Ray, TrackOptions};
use eikonerf::scene::IndexProfile;
use eikonerf::Vec3;

const BAND: f64 = 0.1;

fn interface(n_below: f64, n_above: f64) -> IndexProfile {
    IndexProfile::Planar {
        z0: 0.0,
        n_below,
        n_above,
        band: BAND,
    }
}

/// Traces a ray that starts `0.5` below (or above) the interface with the
/// given incidence angle and returns its final direction.
fn trace(profile: &IndexProfile, incidence_deg: f64, from_below: bool, ds: f64) -> Vec3 {
    let a = incidence_deg.to_radians();
    let sign = if from_below { 1.0 } else { -1.0 };
    let origin = Vec3::new(0.0, 0.0, -0.5 * sign);
    let dir = Vec3::new(a.sin(), 0.0, sign * a.cos());
    let length = 1.0 / a.cos().max(0.2);
    let steps = (length / ds).round() as usize;
    let ray = Ray::new(origin, dir, 0.0, steps as f64 * ds).expect("valid ray");
    track(&ray, profile, steps, TrackOptions::default()).last_direction()
}

fn main() {
    let expected = (30f64.to_radians().sin() / 1.5).asin().to_degrees();
    println!("Snell: 1.0 -> 1.5 at 30 deg, expected {expected:.4} deg");
    let glass = interface(1.0, 1.5);
    for div in [5.0, 10.0, 20.0, 40.0, 80.0] {
        let d = trace(&glass, 30.0, true, BAND / div);
        let angle = d.x.atan2(d.z).to_degrees();
        println!("  ds = band/{div:<3} angle {angle:.4} deg  error {:.2e}", (angle - expected).abs());
    }

    let critical = (1.0f64 / 1.5).asin().to_degrees();
    println!("dense -> air, critical angle {critical:.2} deg");
    for incidence in [30.0, 40.0, 45.0, 60.0] {
        let d = trace(&glass, incidence, false, BAND / 20.0);
        let fate = if d.z > 0.0 { "reflected" } else { "transmitted" };
        println!("  incidence {incidence:>4} deg: {fate}, final direction ({:.3}, {:.3}, {:.3})", d.x, d.y, d.z);
    }
}
