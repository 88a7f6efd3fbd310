//! Mixed-radix complex FFT (radix 2/3/4 butterflies plus a generic one) and
//! a 2D wrapper over row-major buffers.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;

use crate::math;

/// Smallest `n >= target` whose only prime factors are 2 and 3, the sizes
/// with dedicated butterflies.
pub fn smooth_size(target: usize) -> usize {
    let mut n = target.max(1);
    loop {
        let mut r = n;
        for p in [2, 3] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    inverse: bool,
    /// `(radix, remaining length)` per stage.
    stages: Vec<(usize, usize)>,
    twiddles: Vec<Complex64>,
}

impl Fft {
    pub fn new(n: usize, inverse: bool) -> Self {
        assert!(n > 0, "zero-length transform");
        let sign = if inverse { 1.0 } else { -1.0 };
        let twiddles = (0..n)
            .map(|i| {
                let phase = sign * 2.0 * PI * i as f64 / n as f64;
                Complex64::new(math::cos(phase), math::sin(phase))
            })
            .collect();
        let mut stages = Vec::new();
        let mut rem = n;
        let mut p = 4;
        while rem > 1 {
            while !rem.is_multiple_of(p) {
                p = match p {
                    4 => 2,
                    2 => 3,
                    _ => p + 2,
                };
                if p * p > rem {
                    p = rem;
                }
            }
            rem /= p;
            stages.push((p, rem));
        }
        Self {
            n,
            inverse,
            stages,
            twiddles,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unnormalized in-place transform. `scratch` must hold `len()` values.
    pub fn process(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        if self.n == 1 {
            return;
        }
        scratch[..self.n].copy_from_slice(buf);
        self.work(buf, &scratch[..self.n], 1, 0);
    }

    fn work(&self, out: &mut [Complex64], inp: &[Complex64], fstride: usize, stage: usize) {
        let (p, m) = self.stages[stage];
        if m == 1 {
            for q in 0..p {
                out[q] = inp[q * fstride];
            }
        } else {
            for q in 0..p {
                self.work(
                    &mut out[q * m..(q + 1) * m],
                    &inp[q * fstride..],
                    fstride * p,
                    stage + 1,
                );
            }
        }
        match p {
            2 => self.bfly2(out, fstride, m),
            3 => self.bfly3(out, fstride, m),
            4 => self.bfly4(out, fstride, m),
            _ => self.bfly_generic(out, fstride, p, m),
        }
    }

    fn bfly2(&self, out: &mut [Complex64], fstride: usize, m: usize) {
        let (lo, hi) = out.split_at_mut(m);
        for k in 0..m {
            let t = hi[k] * self.twiddles[k * fstride];
            hi[k] = lo[k] - t;
            lo[k] += t;
        }
    }

    fn bfly3(&self, out: &mut [Complex64], fstride: usize, m: usize) {
        let epi3 = self.twiddles[fstride * m];
        for k in 0..m {
            let s1 = out[k + m] * self.twiddles[k * fstride];
            let s2 = out[k + 2 * m] * self.twiddles[2 * k * fstride];
            let s3 = s1 + s2;
            let s0 = (s1 - s2) * epi3.im;
            let base = out[k] - s3 * 0.5;
            out[k] += s3;
            out[k + 2 * m] = Complex64::new(base.re + s0.im, base.im - s0.re);
            out[k + m] = Complex64::new(base.re - s0.im, base.im + s0.re);
        }
    }

    fn bfly4(&self, out: &mut [Complex64], fstride: usize, m: usize) {
        for k in 0..m {
            let s0 = out[k + m] * self.twiddles[k * fstride];
            let s1 = out[k + 2 * m] * self.twiddles[2 * k * fstride];
            let s2 = out[k + 3 * m] * self.twiddles[3 * k * fstride];
            let s5 = out[k] - s1;
            let f0 = out[k] + s1;
            let s3 = s0 + s2;
            let s4 = s0 - s2;
            out[k + 2 * m] = f0 - s3;
            out[k] = f0 + s3;
            if self.inverse {
                out[k + m] = Complex64::new(s5.re - s4.im, s5.im + s4.re);
                out[k + 3 * m] = Complex64::new(s5.re + s4.im, s5.im - s4.re);
            } else {
                out[k + m] = Complex64::new(s5.re + s4.im, s5.im - s4.re);
                out[k + 3 * m] = Complex64::new(s5.re - s4.im, s5.im + s4.re);
            }
        }
    }

    fn bfly_generic(&self, out: &mut [Complex64], fstride: usize, p: usize, m: usize) {
        let mut tmp = vec![Complex64::new(0.0, 0.0); p];
        for u in 0..m {
            for (q, t) in tmp.iter_mut().enumerate() {
                *t = out[u + q * m];
            }
            for q1 in 0..p {
                let k = u + q1 * m;
                let mut acc = tmp[0];
                let mut tw = 0;
                for t in &tmp[1..] {
                    tw += fstride * k;
                    tw %= self.n;
                    acc += *t * self.twiddles[tw];
                }
                out[k] = acc;
            }
        }
    }
}

/// 2D transform over a row-major `nx * ny` buffer.
#[derive(Clone, Debug)]
pub struct Fft2d {
    nx: usize,
    ny: usize,
    fwd_rows: Fft,
    fwd_cols: Fft,
    inv_rows: Fft,
    inv_cols: Fft,
}

impl Fft2d {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            fwd_rows: Fft::new(nx, false),
            fwd_cols: Fft::new(ny, false),
            inv_rows: Fft::new(nx, true),
            inv_cols: Fft::new(ny, true),
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward_rows(buf, 0..self.ny);
    }

    /// Forward transform of a buffer whose rows outside `nonzero` are all
    /// zero; those rows skip the row pass.
    pub fn forward_rows(&self, buf: &mut [Complex64], nonzero: Range<usize>) {
        assert_eq!(buf.len(), self.nx * self.ny);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.nx.max(self.ny)];
        for y in nonzero {
            self.fwd_rows
                .process(&mut buf[y * self.nx..(y + 1) * self.nx], &mut scratch);
        }
        self.columns(buf, &self.fwd_cols, 0..self.nx, &mut scratch);
    }

    /// Inverse transform including the `1/(nx*ny)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse_columns(buf, 0..self.nx);
        let norm = 1.0 / (self.nx * self.ny) as f64;
        for v in buf.iter_mut() {
            *v *= norm;
        }
    }

    /// Unnormalized inverse that is only correct in the columns `keep`.
    pub fn inverse_columns(&self, buf: &mut [Complex64], keep: Range<usize>) {
        assert_eq!(buf.len(), self.nx * self.ny);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.nx.max(self.ny)];
        for row in buf.chunks_exact_mut(self.nx) {
            self.inv_rows.process(row, &mut scratch);
        }
        self.columns(buf, &self.inv_cols, keep, &mut scratch);
    }

    fn columns(&self, buf: &mut [Complex64], plan: &Fft, which: Range<usize>, scratch: &mut [Complex64]) {
        let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
        for x in which {
            for (y, c) in col.iter_mut().enumerate() {
                *c = buf[y * self.nx + x];
            }
            plan.process(&mut col, scratch);
            for (y, c) in col.iter().enumerate() {
                buf[y * self.nx + x] = *c;
            }
        }
    }
}
