//! Cached 2-D complex FFTs on square grids.
//!
//! Plans are shared across threads; each call allocates its own scratch.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

fn run(buf: &mut [Complex64], n: usize, fft: &dyn Fft<f64>) {
    debug_assert_eq!(buf.len(), n * n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
}

/// Unnormalized forward transform, kernel `e^{-2πi k·x}`.
pub(crate) fn forward_2d(buf: &mut [Complex64], n: usize) {
    let p = plans(n);
    run(buf, n, p.forward.as_ref());
}

/// Unnormalized inverse transform, kernel `e^{+2πi k·x}`.
pub(crate) fn inverse_2d(buf: &mut [Complex64], n: usize) {
    let p = plans(n);
    run(buf, n, p.inverse.as_ref());
}

/// Signed frequency of FFT index `m` on an `n`-point axis.
#[inline]
pub fn freq(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// FFT index of signed frequency `k` on an `n`-point axis.
#[inline]
pub fn index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}
