use ndarray::Array2;
use std::f64::consts::PI;

use crate::Vec3;

/// Number of features produced for a `dim`-dimensional input.
pub fn encoded_len(dim: usize, freqs: usize) -> usize {
    dim * (2 * freqs + 1)
}

/// Sinusoidal features per coordinate:
/// `[x, sin(2⁰πx), cos(2⁰πx), …, sin(2^(L-1)πx), cos(2^(L-1)πx)]`.
pub fn encode(x: &[f64], freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(x.len(), freqs));
    for &c in x {
        push_coordinate(&mut out, c, freqs);
    }
    out
}

fn push_coordinate(out: &mut Vec<f64>, c: f64, freqs: usize) {
    out.push(c);
    let mut scale = PI;
    for _ in 0..freqs {
        let (s, co) = (scale * c).sin_cos();
        out.push(s);
        out.push(co);
        scale *= 2.0;
    }
}

/// Row-per-point encoding of a batch of 3-vectors.
pub fn encode_batch(points: &[Vec3], freqs: usize) -> Array2<f64> {
    let width = encoded_len(3, freqs);
    let mut data = Vec::with_capacity(points.len() * width);
    for p in points {
        for c in p.iter() {
            push_coordinate(&mut data, *c, freqs);
        }
    }
    Array2::from_shape_vec((points.len(), width), data).expect("encoding shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input() {
        let e = encode(&[0.0], 5);
        assert_eq!(e[0], 0.0);
        for l in 0..5 {
            assert_eq!(e[1 + 2 * l], 0.0);
            assert_eq!(e[2 + 2 * l], 1.0);
        }
    }

    #[test]
    fn no_frequencies_is_identity() {
        assert_eq!(encode(&[0.3, -2.0], 0), vec![0.3, -2.0]);
    }

    #[test]
    fn position_feature_count() {
        assert_eq!(encode(&[0.1, 0.2, 0.3], 10).len(), 63);
        assert_eq!(encoded_len(3, 10), 63);
        assert_eq!(encoded_len(3, 4), 27);
    }

    #[test]
    fn batch_matches_scalar() {
        let p = Vec3::new(0.25, -0.5, 1.75);
        let b = encode_batch(&[p, p], 3);
        assert_eq!(b.row(1).to_vec(), encode(p.as_slice(), 3));
        assert!((b[[0, 1]] - (PI * 0.25).sin()).abs() < 1e-15);
    }
}
