//! In-place iterative radix-2 FFT.

use num_complex::Complex;
use num_traits::{Float, FloatConst};

use crate::error::{Error, Result};

fn bit_reverse<T: Copy>(data: &mut [T]) {
    let n = data.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
}

fn transform<T: Float + FloatConst>(data: &mut [Complex<T>], inverse: bool) -> Result<()> {
    let n = data.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::format(0, format!("FFT length {n} is not a power of two")));
    }
    if n == 1 {
        return Ok(());
    }
    bit_reverse(data);
    let sign = if inverse { T::one() } else { -T::one() };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // Twiddles in f64 keep 32-bit transforms accurate for long lengths.
        let step = sign.to_f64().unwrap() * 2.0 * std::f64::consts::PI / len as f64;
        let twiddles: Vec<Complex<T>> = (0..half)
            .map(|k| {
                let (s, c) = (step * k as f64).sin_cos();
                Complex::new(T::from(c).unwrap(), T::from(s).unwrap())
            })
            .collect();
        for chunk in data.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for ((a, b), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                let t = *b * w;
                *b = *a - t;
                *a = *a + t;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Unnormalized forward DFT, `X_k = sum_n x_n e^{-2 pi i k n / N}`.
pub fn fft<T: Float + FloatConst>(data: &mut [Complex<T>]) -> Result<()> {
    transform(data, false)
}

/// Inverse DFT with `1/N` normalization.
pub fn ifft<T: Float + FloatConst>(data: &mut [Complex<T>]) -> Result<()> {
    transform(data, true)?;
    let scale = T::from(data.len()).unwrap().recip();
    for v in data.iter_mut() {
        *v = *v * scale;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::{Complex32, Complex64};
    use rand::{Rng, SeedableRng};

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, ang)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 4, 8, 64] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut y = x.clone();
            fft(&mut y).unwrap();
            for (a, b) in y.iter().zip(naive_dft(&x)) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_of_constant_is_delta() {
        let mut x = vec![Complex64::new(1.0, 0.0); 16];
        ifft(&mut x).unwrap();
        assert!((x[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn round_trip_in_single_precision() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for log2 in 0..=10 {
            let n = 1usize << log2;
            let x: Vec<Complex32> = (0..n)
                .map(|_| Complex32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let mut y = x.clone();
            fft(&mut y).unwrap();
            ifft(&mut y).unwrap();
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).norm()).fold(0.0, f32::max);
            assert!(err < 1e-6, "n={n}: {err}");
        }
    }

    #[test]
    fn parseval_holds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Complex64> = (0..256)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut t = x.clone();
        ifft(&mut t).unwrap();
        let time: f64 = t.iter().map(|v| v.norm_sqr()).sum();
        let freq: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert!((time * 256.0 / freq - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let mut x = vec![Complex64::new(0.0, 0.0); 12];
        assert!(matches!(fft(&mut x), Err(Error::Format { .. })));
    }
}
