//! Radix-2 FFT over `f64`.
//!
//! Only power-of-two lengths are supported; callers zero-pad. The real
//! transform packs even/odd samples into a half-length complex transform.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Sub};

use crate::math::{cos64, sin64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// `exp(i * theta)`
    pub fn cis(theta: f64) -> Self {
        Self::new(cos64(theta), sin64(theta))
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
}

impl Add for Complex {
    type Output = Complex;
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// Smallest power of two `>= n`.
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// In-place forward complex FFT plan (`exp(-i...)` convention).
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    // Per-stage twiddles laid out contiguously: stage of length `len` starts
    // at offset `len / 2 - 1` and holds `len / 2` factors.
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!("FFT length {n} is not a power of two")));
        }
        let mut twiddles = Vec::with_capacity(n.saturating_sub(1));
        let mut len = 2;
        while len <= n {
            twiddles.extend((0..len / 2).map(|k| Complex::cis(-2.0 * PI * k as f64 / len as f64)));
            len <<= 1;
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn process(&self, data: &mut [Complex]) {
        assert_eq!(data.len(), self.n, "FFT buffer length");
        for i in 0..self.n {
            let j = self.bitrev[i];
            if j > i {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let tw = &self.twiddles[half - 1..len - 1];
            for block in data.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let v = *b * *w;
                    let u = *a;
                    *a = u + v;
                    *b = u - v;
                }
            }
            len <<= 1;
        }
    }
}

/// Real-input FFT returning the one-sided spectrum (`n / 2 + 1` bins).
#[derive(Debug, Clone)]
pub struct RealFft {
    n: usize,
    half: Fft,
    post: Vec<Complex>,
}

impl RealFft {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Config(alloc::format!(
                "real FFT length {n} must be a power of two >= 2"
            )));
        }
        let half = Fft::new(n / 2)?;
        let post = (0..=n / 2)
            .map(|k| Complex::cis(-2.0 * PI * k as f64 / n as f64))
            .collect();
        Ok(Self { n, half, post })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// `scratch` must hold `n / 2` values, `out` holds `n / 2 + 1`.
    pub fn process_with(&self, input: &[f64], scratch: &mut [Complex], out: &mut [Complex]) {
        let m = self.n / 2;
        assert_eq!(input.len(), self.n, "real FFT input length");
        assert_eq!(scratch.len(), m);
        assert_eq!(out.len(), m + 1);
        for (k, z) in scratch.iter_mut().enumerate() {
            *z = Complex::new(input[2 * k], input[2 * k + 1]);
        }
        self.half.process(scratch);
        for k in 0..=m {
            let zk = scratch[k % m];
            let zc = scratch[(m - k) % m].conj();
            let even = (zk + zc).scale(0.5);
            let diff = zk - zc;
            // (zk - conj(z[m-k])) / 2i
            let odd = Complex::new(diff.im * 0.5, -diff.re * 0.5);
            out[k] = even + self.post[k] * odd;
        }
    }

    pub fn process(&self, input: &[f64]) -> Vec<Complex> {
        let mut scratch = vec![Complex::ZERO; self.n / 2];
        let mut out = vec![Complex::ZERO; self.n / 2 + 1];
        self.process_with(input, &mut scratch, &mut out);
        out
    }
}
