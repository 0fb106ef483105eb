//! Complex discrete Fourier transforms.
//!
//! Iterative radix-2 Cooley-Tukey for power-of-two lengths, and a direct
//! O(n²) transform for everything else. Forward transform uses e^{−2πi jk/n};
//! the inverse is unnormalized (callers divide by n).

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone)]
pub(crate) struct Fft {
    n: usize,
    // e^{-2πik/n} for k < n/2, only used on the radix-2 path
    twiddles: Vec<Complex64>,
}

impl Fft {
    pub(crate) fn new(n: usize) -> Self {
        let twiddles = if n.is_power_of_two() {
            (0..n / 2)
                .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                .collect()
        } else {
            Vec::new()
        };
        Fft { n, twiddles }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Forward transform of a real sequence.
    pub(crate) fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Inverse transform, normalized by 1/n, keeping the real part.
    pub(crate) fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.n, "fft length mismatch");
        if self.n.is_power_of_two() {
            self.radix2(data, inverse);
        } else {
            self.direct(data, inverse);
        }
    }

    fn radix2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }

    fn direct(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let sign = if inverse { 1.0 } else { -1.0 };
        let out: Vec<Complex64> = (0..n)
            .map(|k| {
                data.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        // reduce jk mod n before forming the angle
                        let phase = ((j * k) % n) as f64 / n as f64;
                        let (s, c) = (2.0 * PI * phase).sin_cos();
                        x * Complex64::new(c, sign * s)
                    })
                    .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
            })
            .collect();
        data.copy_from_slice(&out);
    }
}
