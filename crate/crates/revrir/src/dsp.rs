//! Signal primitives: radix-2 real FFT, FFT-based linear convolution,
//! log-magnitude spectra and framed log-magnitude spectrograms.
//!
//! Everything here is pure and generic over [`Scalar`]; the pipeline runs it
//! in `f64` so the naive-DFT and direct-convolution oracles hold at 1e-9.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default clamp for log-magnitude values; keeps zero bins finite.
pub const DEFAULT_FLOOR_DB: f64 = -120.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex<T> {
    pub re: T,
    pub im: T,
}

impl<T: Scalar> Complex<T> {
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }
    pub fn zero() -> Self {
        Self { re: T::zero(), im: T::zero() }
    }
    pub fn conj(self) -> Self {
        Self { re: self.re, im: -self.im }
    }
    pub fn add(self, o: Self) -> Self {
        Self { re: self.re + o.re, im: self.im + o.im }
    }
    pub fn sub(self, o: Self) -> Self {
        Self { re: self.re - o.re, im: self.im - o.im }
    }
    pub fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    pub fn scale(self, k: T) -> Self {
        Self { re: self.re * k, im: self.im * k }
    }
    pub fn abs(self) -> T {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

/// Uniform-rate sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn next_pow2(n: usize) -> usize {
    let mut p = 1;
    while p < n {
        p <<= 1;
    }
    p
}

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || n & (n - 1) != 0 {
        return Err(Error::Validation(format!("FFT size {n} is not a power of two")));
    }
    Ok(())
}

/// In-place iterative radix-2 Cooley-Tukey. `inverse` conjugates the
/// twiddles; scaling by 1/n is the caller's job.
fn fft_in_place<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex::new(T::from_f64(ang.cos()), T::from_f64(ang.sin()));
        let mut i = 0;
        while i < n {
            let mut w = Complex::new(T::one(), T::zero());
            for k in 0..len / 2 {
                let u = buf[i + k];
                let v = buf[i + k + len / 2].mul(w);
                buf[i + k] = u.add(v);
                buf[i + k + len / 2] = u.sub(v);
                w = w.mul(wlen);
            }
            i += len;
        }
        len <<= 1;
    }
}

/// DFT of `x` zero-padded to `n` (power of two, `n >= x.len()`); returns the
/// `n/2 + 1` non-negative-frequency bins.
pub fn fft_real<T: Scalar>(x: &[T], n: usize) -> Result<Vec<Complex<T>>> {
    check_pow2(n)?;
    if n < x.len() {
        return Err(Error::Validation(format!(
            "FFT size {n} shorter than input length {}",
            x.len()
        )));
    }
    let mut buf = vec![Complex::zero(); n];
    for (b, &v) in buf.iter_mut().zip(x.iter()) {
        b.re = v;
    }
    fft_in_place(&mut buf, false);
    Ok(buf[..n / 2 + 1].to_vec())
}

/// Inverse of [`fft_real`]: reconstructs the length-`n` real signal from its
/// `n/2 + 1` bins by conjugate symmetry.
pub fn ifft_real<T: Scalar>(spectrum: &[Complex<T>], n: usize) -> Result<Vec<T>> {
    check_pow2(n)?;
    if spectrum.len() != n / 2 + 1 {
        return Err(Error::Validation(format!(
            "spectrum has {} bins, expected {}",
            spectrum.len(),
            n / 2 + 1
        )));
    }
    let mut buf = vec![Complex::zero(); n];
    buf[..spectrum.len()].copy_from_slice(spectrum);
    for k in 1..n / 2 {
        buf[n - k] = spectrum[k].conj();
    }
    fft_in_place(&mut buf, true);
    let inv_n = T::from_f64(1.0 / n as f64);
    Ok(buf.into_iter().map(|c| c.re * inv_n).collect())
}

/// Full linear convolution via FFT, length `len(s) + len(h) - 1`.
pub fn convolve<T: Scalar>(s: &Signal<T>, h: &Signal<T>) -> Result<Signal<T>> {
    if s.sample_rate != h.sample_rate {
        return Err(Error::Validation(format!(
            "sample-rate mismatch: {} vs {}",
            s.sample_rate, h.sample_rate
        )));
    }
    if s.is_empty() || h.is_empty() {
        return Err(Error::Validation("convolution inputs must be non-empty".into()));
    }
    let out_len = s.len() + h.len() - 1;
    let n = next_pow2(out_len);
    let sf = fft_real(&s.samples, n)?;
    let hf = fft_real(&h.samples, n)?;
    let prod: Vec<Complex<T>> = sf.iter().zip(hf.iter()).map(|(a, b)| a.mul(*b)).collect();
    let mut y = ifft_real(&prod, n)?;
    y.truncate(out_len);
    Ok(Signal::new(y, s.sample_rate))
}

/// `20 log10 |FFT(h)|` per bin, clamped below at `floor_db`.
pub fn log_mag_spectrum<T: Scalar>(samples: &[T], n: usize, floor_db: f64) -> Result<Vec<T>> {
    let spec = fft_real(samples, n)?;
    let floor = T::from_f64(floor_db);
    let twenty = T::from_f64(20.0);
    Ok(spec
        .into_iter()
        .map(|c| {
            let m = c.abs();
            if m <= T::zero() {
                floor
            } else {
                let db = twenty * m.log10();
                if db < floor {
                    floor
                } else {
                    db
                }
            }
        })
        .collect())
}

/// Framed log-magnitude STFT, Hann-windowed, in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    /// Row-major `frames x bins` matrix.
    pub data: Vec<T>,
    pub frames: usize,
    pub bins: usize,
    pub frame_length: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.bins..(i + 1) * self.bins]
    }
}

fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            T::from_f64(0.5 * (1.0 - x.cos()))
        })
        .collect()
}

/// Frame count is `1 + floor((len - frame_length) / hop)`; the signal must
/// cover at least one frame.
pub fn spectrogram<T: Scalar>(
    x: &Signal<T>,
    frame_length: usize,
    hop: usize,
    floor_db: f64,
) -> Result<Spectrogram<T>> {
    check_pow2(frame_length)?;
    if hop == 0 {
        return Err(Error::Validation("hop must be >= 1".into()));
    }
    if x.len() < frame_length {
        return Err(Error::Validation(format!(
            "signal of {} samples shorter than one frame ({frame_length})",
            x.len()
        )));
    }
    let frames = 1 + (x.len() - frame_length) / hop;
    let bins = frame_length / 2 + 1;
    let window = hann_window::<T>(frame_length);
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![T::zero(); frame_length];
    for f in 0..frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x.samples[start + i] * window[i];
        }
        let row = log_mag_spectrum(&buf, frame_length, floor_db)?;
        data.extend_from_slice(&row);
    }
    Ok(Spectrogram {
        data,
        frames,
        bins,
        frame_length,
        hop,
        sample_rate: x.sample_rate,
    })
}
