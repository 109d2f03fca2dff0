//! Synthetic classification tasks.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::NoisyDataset;
use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::rng::rng_from;

/// Radius of the circle that carries the blob centers.
pub fn blob_radius(num_classes: usize, spread: f64) -> f64 {
    4.0 * spread * num_classes as f64 / PI
}

/// Deterministic center of class `k`.
///
/// With two or more dimensions the centers sit evenly on a circle in the
/// first two coordinates. In one dimension they sit on a line with the same
/// spacing as neighbouring points on that circle.
pub fn blob_center(k: usize, num_classes: usize, dim: usize, spread: f64) -> Vec<f64> {
    let r = blob_radius(num_classes, spread);
    let mut c = vec![0.0; dim];
    if dim >= 2 {
        let angle = 2.0 * PI * k as f64 / num_classes as f64;
        c[0] = r * angle.cos();
        c[1] = r * angle.sin();
    } else {
        let step = 2.0 * r * (PI / num_classes as f64).sin();
        c[0] = (k as f64 - (num_classes as f64 - 1.0) / 2.0) * step;
    }
    c
}

/// `num_classes` isotropic Gaussian clusters of `per_class` points each.
pub fn gen_blobs(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<NoisyDataset> {
    if num_classes < 2 || per_class < 1 || dim < 1 || !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::config(format!(
            "blobs need C >= 2, n >= 1, d >= 1, spread > 0 (got C={num_classes}, n={per_class}, d={dim}, spread={spread})"
        )));
    }
    let mut rng = rng_from(seed);
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for k in 0..num_classes {
        let center = blob_center(k, num_classes, dim, spread);
        for _ in 0..per_class {
            for c in &center {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(c + spread * z);
            }
            labels.push(k);
        }
    }
    NoisyDataset::clean(
        format!("blobs-c{num_classes}"),
        Tensor::matrix(n, dim, data)?,
        labels,
        num_classes,
    )
}

/// Two interleaved half circles. Class 0 is the upper arc of the unit
/// circle, class 1 the lower arc shifted to `(1, 0.5)`.
pub fn gen_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<NoisyDataset> {
    if n == 0 || !n.is_multiple_of(2) || noise_std < 0.0 {
        return Err(Error::config(format!("two moons need an even n > 0 (got {n})")));
    }
    let mut rng = rng_from(seed);
    let half = n / 2;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        for i in 0..half {
            let t = if half > 1 {
                PI * i as f64 / (half - 1) as f64
            } else {
                0.0
            };
            let (x, y) = if class == 0 {
                (t.cos(), t.sin().max(0.0))
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let (nx, ny): (f64, f64) = if noise_std > 0.0 {
                (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            data.push(x + noise_std * nx);
            data.push(y + noise_std * ny);
            labels.push(class);
        }
    }
    NoisyDataset::clean("two-moons", Tensor::matrix(n, 2, data)?, labels, 2)
}

/// Two concentric annuli: radius in [0.5, 1.0) for class 0 and [1.5, 2.0)
/// for class 1.
pub fn gen_rings(n: usize, seed: u64) -> Result<NoisyDataset> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::config(format!("rings need an even n > 0 (got {n})")));
    }
    let mut rng = rng_from(seed);
    let half = n / 2;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for class in 0..2 {
        let (lo, hi) = if class == 0 { (0.5, 1.0) } else { (1.5, 2.0) };
        for _ in 0..half {
            let r = rng.random_range(lo..hi);
            let a = rng.random_range(0.0..2.0 * PI);
            data.push(r * a.cos());
            data.push(r * a.sin());
            labels.push(class);
        }
    }
    NoisyDataset::clean("rings", Tensor::matrix(n, 2, data)?, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_spread_puts_points_on_centers() {
        let spread = 1e-9;
        let ds = gen_blobs(2, 1, 2, spread, 3).unwrap();
        assert_eq!(ds.true_labels, vec![0, 1]);
        for k in 0..2 {
            let c = blob_center(k, 2, 2, spread);
            for (a, b) in ds.features.row(k).iter().zip(&c) {
                assert!((a - b).abs() < 1e-7 * blob_radius(2, spread).max(1.0));
            }
        }
        // the two centers are on opposite sides of the circle
        let c0 = blob_center(0, 2, 2, 1.0);
        let c1 = blob_center(1, 2, 2, 1.0);
        assert!((c0[0] + c1[0]).abs() < 1e-12);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = gen_blobs(3, 50, 4, 0.5, 9).unwrap();
        let b = gen_blobs(3, 50, 4, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_blobs(3, 50, 4, 0.5, 10).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn blobs_reject_bad_sizes() {
        assert!(gen_blobs(1, 10, 2, 0.5, 0).is_err());
        assert!(gen_blobs(3, 0, 2, 0.5, 0).is_err());
        assert!(gen_blobs(3, 10, 2, 0.0, 0).is_err());
    }

    #[test]
    fn one_dimensional_centers_are_distinct() {
        let cs: Vec<f64> = (0..3).map(|k| blob_center(k, 3, 1, 1.0)[0]).collect();
        assert!(cs[0] < cs[1] && cs[1] < cs[2]);
    }

    #[test]
    fn noiseless_moon_zero_is_upper_unit_arc() {
        let ds = gen_two_moons(200, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            if ds.true_labels[i] == 0 {
                let (x, y) = (ds.features.get(i, 0), ds.features.get(i, 1));
                assert!((x * x + y * y - 1.0).abs() < 1e-12);
                assert!(y >= 0.0);
            }
        }
        assert_eq!(ds.true_labels.iter().filter(|&&y| y == 0).count(), 100);
    }

    #[test]
    fn moons_and_rings_are_deterministic() {
        assert_eq!(gen_two_moons(100, 0.1, 4).unwrap(), gen_two_moons(100, 0.1, 4).unwrap());
        assert_eq!(gen_rings(100, 4).unwrap(), gen_rings(100, 4).unwrap());
        assert!(gen_two_moons(7, 0.1, 4).is_err());
    }

    #[test]
    fn rings_radii_are_separated() {
        let ds = gen_rings(400, 2).unwrap();
        for i in 0..ds.len() {
            let r = ds.features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if ds.true_labels[i] == 0 {
                assert!(r < 1.0 + 1e-12);
            } else {
                assert!(r >= 1.5 - 1e-12);
            }
        }
    }

    /// Closed-form least-squares one-vs-rest classifier as an independent
    /// oracle for linear separability.
    fn least_squares_accuracy(ds: &NoisyDataset) -> f64 {
        let d = ds.dim() + 1;
        let c = ds.num_classes;
        let mut xtx = vec![0.0; d * d];
        let mut xty = vec![0.0; d * c];
        for i in 0..ds.len() {
            let mut x = ds.features.row(i).to_vec();
            x.push(1.0);
            for a in 0..d {
                for b in 0..d {
                    xtx[a * d + b] += x[a] * x[b];
                }
                xty[a * c + ds.true_labels[i]] += x[a];
            }
        }
        // Gauss-Jordan on [XtX | XtY]
        let w = d + c;
        let mut m: Vec<f64> = (0..d)
            .flat_map(|r| {
                let mut row = xtx[r * d..(r + 1) * d].to_vec();
                row.extend_from_slice(&xty[r * c..(r + 1) * c]);
                row
            })
            .collect();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&a, &b| m[a * w + col].abs().total_cmp(&m[b * w + col].abs()))
                .unwrap();
            for k in 0..w {
                m.swap(col * w + k, piv * w + k);
            }
            let p = m[col * w + col];
            for k in 0..w {
                m[col * w + k] /= p;
            }
            for r in 0..d {
                if r != col {
                    let f = m[r * w + col];
                    for k in 0..w {
                        m[r * w + k] -= f * m[col * w + k];
                    }
                }
            }
        }
        let mut correct = 0;
        for i in 0..ds.len() {
            let mut x = ds.features.row(i).to_vec();
            x.push(1.0);
            let scores: Vec<f64> = (0..c).map(|k| (0..d).map(|a| x[a] * m[a * w + d + k]).sum()).collect();
            if crate::numcore::argmax(&scores) == ds.true_labels[i] {
                correct += 1;
            }
        }
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn three_blobs_are_linearly_separable() {
        let ds = gen_blobs(3, 1000, 2, 0.5, 21).unwrap();
        let acc = least_squares_accuracy(&ds);
        assert!(acc > 0.95, "least-squares accuracy {acc}");
    }
}
