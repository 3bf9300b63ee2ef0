//! Image quality metrics.

use ndarray::Array2;

use crate::error::{Error, Result};

/// `10 log10(peak^2 / MSE)`; `+inf` for identical images.
pub fn psnr(a: &Array2<f32>, b: &Array2<f32>, peak: f64) -> Result<f64> {
    if a.dim() != b.dim() || a.is_empty() {
        return Err(Error::Usage(format!("psnr needs equal non-empty shapes, got {:?} and {:?}", a.dim(), b.dim())));
    }
    if !(peak > 0.0) {
        return Err(Error::Usage("psnr peak must be positive".into()));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Normalized 1-D Gaussian of length [`SSIM_WINDOW`].
pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering with `k` along both axes.
fn filter_valid(x: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (h, w) = x.dim();
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows = Array2::from_shape_fn((h, ow), |(r, c)| (0..n).map(|i| k[i] * x[(r, c + i)]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(r, c)| (0..n).map(|i| k[i] * rows[(r + i, c)]).sum::<f64>())
}

/// Mean structural similarity over all fully-covered 11 x 11 Gaussian
/// windows, for images with data range 1.
pub fn ssim(a: &Array2<f32>, b: &Array2<f32>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Usage(format!("ssim needs equal shapes, got {:?} and {:?}", a.dim(), b.dim())));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Usage(format!("ssim needs images of at least {SSIM_WINDOW} x {SSIM_WINDOW}, got {h} x {w}")));
    }
    let k = gaussian_window();
    let x = a.mapv(|v| v as f64);
    let y = b.mapv(|v| v as f64);
    let mx = filter_valid(&x, &k);
    let my = filter_valid(&y, &k);
    let xx = filter_valid(&(&x * &x), &k);
    let yy = filter_valid(&(&y * &y), &k);
    let xy = filter_valid(&(&x * &y), &k);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (mx, my) = (mx.as_slice().unwrap()[i], my.as_slice().unwrap()[i]);
        let sx = xx.as_slice().unwrap()[i] - mx * mx;
        let sy = yy.as_slice().unwrap()[i] - my * my;
        let sxy = xy.as_slice().unwrap()[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    Ok(total / mx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct per-window evaluation with the 2-D weights spelled out.
    fn ssim_brute(a: &Array2<f32>, b: &Array2<f32>) -> f64 {
        let k = gaussian_window();
        let (h, w) = a.dim();
        let n = SSIM_WINDOW;
        let mut total = 0.0;
        let mut count = 0;
        for r in 0..=h - n {
            for c in 0..=w - n {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = k[i] * k[j];
                        mx += wt * a[(r + i, c + j)] as f64;
                        my += wt * b[(r + i, c + j)] as f64;
                    }
                }
                let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let wt = k[i] * k[j];
                        let dx = a[(r + i, c + j)] as f64 - mx;
                        let dy = b[(r + i, c + j)] as f64 - my;
                        sx += wt * dx * dx;
                        sy += wt * dy * dy;
                        sxy += wt * dx * dy;
                    }
                }
                let (c1, c2) = (1e-4, 9e-4);
                total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    fn random(h: usize, w: usize, seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((h, w), |_| rng.gen::<f32>())
    }

    #[test]
    fn psnr_examples() {
        let a = Array2::from_elem((4, 4), 0.5f32);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.mapv(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_examples() {
        let a = random(16, 20, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&a, &a.mapv(|v| 1.0 - v)).unwrap() < 1.0);
        assert!(ssim(&random(10, 30, 0), &random(10, 30, 1)).is_err());
    }

    #[test]
    fn ssim_matches_brute_force() {
        for seed in 0..4 {
            let a = random(17, 23, seed);
            let b = a.mapv(|v| 0.7 * v + 0.1) + &random(17, 23, seed + 100).mapv(|v| 0.2 * v);
            let fast = ssim(&a, &b).unwrap();
            let slow = ssim_brute(&a, &b);
            assert!((fast - slow).abs() < 1e-6, "{fast} {slow}");
            assert!((ssim(&b, &a).unwrap() - fast).abs() < 1e-12);
        }
    }
}
