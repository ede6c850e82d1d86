//! Fields on the periodic unit square `(ℝ/ℤ)²` sampled on an `n × n` grid.
//!
//! Synthesis uses `f(x) = Σ_k f̂(k) e^{2πi k·x}` with `k ∈ {-n/2, …, n/2-1}²`,
//! so the analysis is `f̂(k) = n⁻² Σ_x f(x) e^{-2πi k·x}` and the quadrature
//! weight of every grid point is `1/n²`. With that normalization Parseval is
//! exact: `n⁻² Σ_x |f(x)|² = Σ_k |f̂(k)|²`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::fft;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Grid resolution, mass parameter `μ` of `𝓛 = -Δ + μ`, and the
/// retained-mode fraction used when forming products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub mu: f64,
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub const DEFAULT_DEALIAS: f64 = 2.0 / 3.0;

    pub fn new(n: usize, mu: f64) -> Result<Self> {
        Self::with_dealias(n, mu, Self::DEFAULT_DEALIAS)
    }

    pub fn with_dealias(n: usize, mu: f64, dealias_fraction: f64) -> Result<Self> {
        let g = GridSpec {
            n,
            mu,
            dealias_fraction,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(PcfError::InvalidGrid(format!(
                "n = {} must be a power of two >= 8",
                self.n
            )));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(PcfError::InvalidGrid(format!("mu = {} must be > 0", self.mu)));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(PcfError::InvalidGrid(format!(
                "dealias_fraction = {} must lie in (0, 1]",
                self.dealias_fraction
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed frequency pair of flat index `idx`.
    #[inline]
    pub fn freq_of(&self, idx: usize) -> (i64, i64) {
        (fft::freq(idx / self.n, self.n), fft::freq(idx % self.n, self.n))
    }

    /// Flat index of frequency `(k1, k2)` (taken modulo `n`).
    #[inline]
    pub fn index_of(&self, k1: i64, k2: i64) -> usize {
        fft::index(k1, self.n) * self.n + fft::index(k2, self.n)
    }

    /// Symbol of `𝓛`: `σ(k) = (2π|k|)² + μ`.
    #[inline]
    pub fn symbol(&self, k1: i64, k2: i64) -> f64 {
        let k2sum = (k1 * k1 + k2 * k2) as f64;
        TWO_PI * TWO_PI * k2sum + self.mu
    }

    /// Whether mode `(k1, k2)` survives dealiasing.
    #[inline]
    pub fn retained(&self, k1: i64, k2: i64) -> bool {
        let cut = self.dealias_fraction * (self.n as f64) / 2.0;
        (k1.abs().max(k2.abs()) as f64) <= cut
    }

    /// Checks that two grids describe the same discretization.
    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(PcfError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Derivative direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub fn from_index(axis: usize) -> Result<Self> {
        match axis {
            1 => Ok(Axis::X1),
            2 => Ok(Axis::X2),
            _ => Err(PcfError::OutOfRange {
                what: "axis",
                value: axis as f64,
                lo: 1.0,
                hi: 2.0,
            }),
        }
    }
}

/// Integrability exponent restricted to `{1, 2, ∞}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lp {
    One,
    Two,
    Inf,
}

impl Lp {
    pub fn as_f64(self) -> f64 {
        match self {
            Lp::One => 1.0,
            Lp::Two => 2.0,
            Lp::Inf => f64::INFINITY,
        }
    }

    /// `1/p`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Lp::One => 1.0,
            Lp::Two => 0.5,
            Lp::Inf => 0.0,
        }
    }
}

impl std::str::FromStr for Lp {
    type Err = PcfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Lp::One),
            "2" => Ok(Lp::Two),
            "inf" | "∞" | "infinity" => Ok(Lp::Inf),
            _ => Err(PcfError::ConfigValue {
                key: "p".into(),
                msg: format!("{s:?} is not one of 1, 2, inf"),
            }),
        }
    }
}

impl std::fmt::Display for Lp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lp::One => f.write_str("1"),
            Lp::Two => f.write_str("2"),
            Lp::Inf => f.write_str("inf"),
        }
    }
}

/// Real samples, row-major; `values[i * n + j]` is the value at `(i/n, j/n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Full-resolution Fourier coefficients in FFT index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl RealField {
    pub fn zeros(grid: GridSpec) -> Self {
        RealField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        RealField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PcfError::GridMismatch(format!(
                "{} samples for an {}x{} grid",
                values.len(),
                grid.n,
                grid.n
            )));
        }
        let f = RealField { grid, values };
        f.check_finite()?;
        Ok(f)
    }

    /// Samples `f(x1, x2)` at the grid points.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let h = 1.0 / n as f64;
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        RealField { grid, values }
    }

    /// `cos(2π k·x)`, a single real Fourier mode.
    pub fn cos_mode(grid: GridSpec, k1: i64, k2: i64) -> Self {
        Self::from_fn(grid, |x1, x2| {
            (TWO_PI * (k1 as f64 * x1 + k2 as f64 * x2)).cos()
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PcfError::NonFinite("field samples"))
        }
    }

    pub fn fft_forward(&self) -> Result<SpectralField> {
        self.check_finite()?;
        Ok(self.spectral())
    }

    /// Forward transform without the finiteness check.
    pub fn spectral(&self) -> SpectralField {
        let n = self.grid.n;
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::forward_2d(&mut buf, n);
        let scale = 1.0 / (n * n) as f64;
        for c in &mut buf {
            *c *= scale;
        }
        SpectralField {
            grid: self.grid,
            coeffs: buf,
        }
    }

    fn map_spectral(&self, mult: impl Fn(i64, i64) -> f64) -> RealField {
        let mut s = self.spectral();
        s.apply_multiplier(mult);
        s.fft_inverse()
    }

    /// `𝓛f = (-Δ + μ) f`.
    pub fn apply_l(&self) -> RealField {
        let g = self.grid;
        self.map_spectral(|k1, k2| g.symbol(k1, k2))
    }

    /// `𝓛⁻¹f`; the symbol is bounded below by `μ > 0`.
    pub fn apply_l_inverse(&self) -> RealField {
        let g = self.grid;
        self.map_spectral(|k1, k2| 1.0 / g.symbol(k1, k2))
    }

    /// Spectral derivative; the unpaired Nyquist mode is dropped so the
    /// result stays real.
    pub fn derivative(&self, axis: Axis) -> RealField {
        let mut s = self.spectral();
        s.differentiate(axis);
        s.fft_inverse()
    }

    /// Zeroes every mode with `max(|k1|,|k2|) > dealias_fraction · n/2`.
    pub fn dealias(&self) -> RealField {
        let mut s = self.spectral();
        s.dealias();
        s.fft_inverse()
    }

    /// Dealiased pointwise product, the product used by every bilinear
    /// operation in the crate.
    pub fn product(&self, other: &RealField) -> RealField {
        assert_eq!(self.grid, other.grid, "product of fields on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        RealField {
            grid: self.grid,
            values,
        }
        .dealias()
    }

    /// `⟨f, g⟩ = n⁻² Σ_x f(x) g(x)`.
    pub fn inner(&self, other: &RealField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self.dot(other))
    }

    pub(crate) fn dot(&self, other: &RealField) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s / self.grid.len() as f64
    }

    pub fn lp_norm(&self, p: Lp) -> f64 {
        let m = self.grid.len() as f64;
        match p {
            Lp::One => self.values.iter().map(|v| v.abs()).sum::<f64>() / m,
            Lp::Two => (self.values.iter().map(|v| v * v).sum::<f64>() / m).sqrt(),
            Lp::Inf => self.values.iter().fold(0.0, |acc, v| acc.max(v.abs())),
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.lp_norm(Lp::Two)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn scaled(&self, c: f64) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: f64, x: &RealField) {
        assert_eq!(self.grid, x.grid, "axpy on different grids");
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise product without dealiasing.
    pub fn pointwise(&self, other: &RealField) -> RealField {
        assert_eq!(self.grid, other.grid, "pointwise product on different grids");
        RealField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// `‖∇f‖_{L²}`.
    pub fn grad_norm_l2(&self) -> f64 {
        let s = self.spectral();
        s.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let (k1, k2) = self.grid.freq_of(idx);
                let (k1, k2) = s.derivative_freqs(k1, k2);
                TWO_PI * TWO_PI * (k1 * k1 + k2 * k2) as f64 * c.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn get(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.index_of(k1, k2)]
    }

    pub fn set(&mut self, k1: i64, k2: i64, c: Complex64) {
        let idx = self.grid.index_of(k1, k2);
        self.coeffs[idx] = c;
    }

    /// Real part of the inverse transform.
    pub fn fft_inverse(&self) -> RealField {
        let mut buf = self.coeffs.clone();
        fft::inverse_2d(&mut buf, self.grid.n);
        RealField {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    pub fn apply_multiplier(&mut self, mult: impl Fn(i64, i64) -> f64) {
        let g = self.grid;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let (k1, k2) = g.freq_of(idx);
            *c *= mult(k1, k2);
        }
    }

    pub fn apply_mask(&mut self, mask: &[f64]) {
        for (c, m) in self.coeffs.iter_mut().zip(mask) {
            *c *= *m;
        }
    }

    /// Frequencies used for odd derivatives: the Nyquist component is zeroed.
    #[inline]
    fn derivative_freqs(&self, k1: i64, k2: i64) -> (i64, i64) {
        let nyq = -(self.grid.n as i64) / 2;
        (if k1 == nyq { 0 } else { k1 }, if k2 == nyq { 0 } else { k2 })
    }

    pub fn differentiate(&mut self, axis: Axis) {
        let g = self.grid;
        for idx in 0..self.coeffs.len() {
            let (k1, k2) = g.freq_of(idx);
            let (k1, k2) = self.derivative_freqs(k1, k2);
            let k = match axis {
                Axis::X1 => k1,
                Axis::X2 => k2,
            };
            self.coeffs[idx] *= Complex64::new(0.0, TWO_PI * k as f64);
        }
    }

    pub fn dealias(&mut self) {
        let g = self.grid;
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let (k1, k2) = g.freq_of(idx);
            if !g.retained(k1, k2) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Largest violation of `f̂(-k) = conj(f̂(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let g = self.grid;
        let mut worst = 0.0f64;
        for idx in 0..self.coeffs.len() {
            let (k1, k2) = g.freq_of(idx);
            let partner = self.get(-k1, -k2);
            worst = worst.max((self.coeffs[idx] - partner.conj()).norm());
        }
        worst
    }

    /// `Σ_k |f̂(k)|²`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

impl Add for &RealField {
    type Output = RealField;
    fn add(self, rhs: &RealField) -> RealField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &RealField {
    type Output = RealField;
    fn sub(self, rhs: &RealField) -> RealField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl AddAssign<&RealField> for RealField {
    fn add_assign(&mut self, rhs: &RealField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&RealField> for RealField {
    fn sub_assign(&mut self, rhs: &RealField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &RealField {
    type Output = RealField;
    fn mul(self, c: f64) -> RealField {
        self.scaled(c)
    }
}

impl Neg for &RealField {
    type Output = RealField;
    fn neg(self) -> RealField {
        self.scaled(-1.0)
    }
}
