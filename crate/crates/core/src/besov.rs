//! Littlewood–Paley blocks and the Besov norm family.
//!
//! The cut-off is `φ(r) = 1` for `r ≤ 1`, `φ(r) = exp(1 - 1/(1 - (r-1)²))` on
//! `1 < r < 2` and `φ(r) = 0` for `r ≥ 2`. Blocks use `χ(r) = φ(2r)` and
//! `ϱ(r) = φ(r) - φ(2r)` with `ϱ_j(k) = ϱ(|k|/2^j)` on integer frequencies, so
//! `χ + Σ_{j≤J} ϱ_j = φ(|k|/2^J)` telescopes to one once `2^J` exceeds the
//! largest grid frequency.

use serde::{Deserialize, Serialize};

use crate::error::{PcfError, Result};
use crate::field::{Axis, GridSpec, Lp, RealField};

/// Smooth radial cut-off: one on the unit ball, zero outside radius two.
pub fn cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let t = r - 1.0;
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// `ϱ(r) = φ(r) - φ(2r)`, supported in `[1/2, 2]`.
pub fn annulus(r: f64) -> f64 {
    cutoff(r) - cutoff(2.0 * r)
}

/// The cut-offs `χ = ϱ_{-1}` and `ϱ_0 … ϱ_J` sampled at the grid frequencies.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    pub grid: GridSpec,
    pub j_max: i32,
    pub chi: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

/// Regularity exponent with integrability indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub alpha: f64,
    pub p: Lp,
    pub q: Lp,
}

impl BesovIndex {
    pub fn holder(alpha: f64) -> Self {
        BesovIndex { alpha, p: Lp::Inf, q: Lp::Inf }
    }

    pub fn sobolev(alpha: f64) -> Self {
        BesovIndex { alpha, p: Lp::Two, q: Lp::Two }
    }
}

/// Least-squares fit of `log₂‖Δ_j f‖` against `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub r2: f64,
}

impl DecayFit {
    /// Fitted regularity exponent, `-slope`.
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

/// Smallest `J` with `2^J` at least the largest grid radius `n/√2`.
fn top_block(n: usize) -> i32 {
    let rmax = (n as f64 / 2.0) * std::f64::consts::SQRT_2;
    let mut j = 0;
    while ((1u64 << j) as f64) < rmax {
        j += 1;
    }
    j
}

pub fn build_partition(grid: GridSpec) -> Result<DyadicPartition> {
    grid.validate()?;
    let j_max = top_block(grid.n);
    if j_max < 1 {
        return Err(PcfError::InvalidGrid(format!(
            "n = {} hosts fewer than three blocks",
            grid.n
        )));
    }
    let radii: Vec<f64> = (0..grid.len())
        .map(|idx| {
            let (k1, k2) = grid.freq_of(idx);
            ((k1 * k1 + k2 * k2) as f64).sqrt()
        })
        .collect();
    let chi = radii.iter().map(|&r| cutoff(2.0 * r)).collect();
    let rho = (0..=j_max)
        .map(|j| {
            let scale = (1u64 << j) as f64;
            radii.iter().map(|&r| annulus(r / scale)).collect()
        })
        .collect();
    Ok(DyadicPartition { grid, j_max, chi, rho })
}

impl DyadicPartition {
    pub fn new(grid: GridSpec) -> Result<Self> {
        build_partition(grid)
    }

    /// Number of blocks, `j = -1 ..= j_max`.
    pub fn block_count(&self) -> usize {
        self.j_max as usize + 2
    }

    pub fn check_block(&self, j: i32) -> Result<()> {
        if (-1..=self.j_max).contains(&j) {
            Ok(())
        } else {
            Err(PcfError::OutOfRange {
                what: "block index",
                value: j as f64,
                lo: -1.0,
                hi: self.j_max as f64,
            })
        }
    }

    /// `ϱ_j` on the grid (`χ` for `j = -1`).
    pub fn multiplier(&self, j: i32) -> &[f64] {
        if j < 0 {
            &self.chi
        } else {
            &self.rho[j as usize]
        }
    }

    /// Largest `|χ(k) + Σ_j ϱ_j(k) - 1|` over grid frequencies.
    pub fn unity_residual(&self) -> f64 {
        (0..self.grid.len())
            .map(|idx| {
                let s: f64 = self.chi[idx] + self.rho.iter().map(|r| r[idx]).sum::<f64>();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Default fitting window: drops `j = -1` and the two top blocks.
    pub fn fit_window(&self) -> (i32, i32) {
        (0, self.j_max - 2)
    }

    /// Window for the components of a paracontrolled triple: also drops
    /// `j = 0` when at least four blocks remain. `u≺ϑ` and `R(u)` carry
    /// almost nothing below `j = 1`.
    pub fn ladder_window(&self) -> (i32, i32) {
        ((self.j_max - 5).clamp(0, 1), self.j_max - 2)
    }
}

/// All blocks `Δ_{-1} f, …, Δ_J f` in physical space.
#[derive(Debug, Clone)]
pub struct BlockStack {
    pub blocks: Vec<RealField>,
}

impl BlockStack {
    pub fn new(f: &RealField, part: &DyadicPartition) -> Self {
        let s = f.spectral();
        let blocks = (-1..=part.j_max)
            .map(|j| {
                let mut b = s.clone();
                b.apply_mask(part.multiplier(j));
                b.fft_inverse()
            })
            .collect();
        BlockStack { blocks }
    }

    /// `Δ_j f`; `j` ranges over `-1 ..= J`.
    pub fn block(&self, j: i32) -> &RealField {
        &self.blocks[(j + 1) as usize]
    }

    pub fn j_max(&self) -> i32 {
        self.blocks.len() as i32 - 2
    }

    pub fn norms(&self, p: Lp) -> Vec<f64> {
        self.blocks.iter().map(|b| b.lp_norm(p)).collect()
    }
}

/// `Δ_j f = 𝓕⁻¹(ϱ_j 𝓕f)`.
pub fn lp_block(f: &RealField, j: i32, part: &DyadicPartition) -> Result<RealField> {
    part.check_block(j)?;
    f.grid.ensure_same(&part.grid)?;
    let mut s = f.spectral();
    s.apply_mask(part.multiplier(j));
    Ok(s.fft_inverse())
}

fn combine(block_norms: &[f64], alpha: f64, q: Lp) -> f64 {
    let weighted = block_norms
        .iter()
        .enumerate()
        .map(|(i, &b)| 2f64.powf(alpha * (i as f64 - 1.0)) * b);
    match q {
        Lp::Inf => weighted.fold(0.0, f64::max),
        Lp::One => weighted.sum(),
        Lp::Two => weighted.map(|w| w * w).sum::<f64>().sqrt(),
    }
}

/// `‖f‖_{B^α_{p,q}} = ‖(2^{jα}‖Δ_j f‖_{L^p})_j‖_{ℓ^q}`.
pub fn besov_norm(f: &RealField, idx: BesovIndex, part: &DyadicPartition) -> f64 {
    besov_norm_blocks(&BlockStack::new(f, part), idx)
}

pub fn besov_norm_blocks(stack: &BlockStack, idx: BesovIndex) -> f64 {
    combine(&stack.norms(idx.p), idx.alpha, idx.q)
}

/// `𝒞^α = B^α_{∞,∞}`.
pub fn holder_norm(f: &RealField, alpha: f64, part: &DyadicPartition) -> f64 {
    besov_norm(f, BesovIndex::holder(alpha), part)
}

/// `H^α = B^α_{2,2}`.
pub fn sobolev_norm(f: &RealField, alpha: f64, part: &DyadicPartition) -> f64 {
    besov_norm(f, BesovIndex::sobolev(alpha), part)
}

/// Per-frequency weights `Σ_j 4^{jα} ϱ_j(k)²`, so that
/// `‖f‖²_{H^α} = Σ_k w(k) |f̂(k)|²` by Parseval.
pub fn sobolev_weights(part: &DyadicPartition, alpha: f64) -> Vec<f64> {
    (0..part.grid.len())
        .map(|idx| {
            (-1..=part.j_max)
                .map(|j| 4f64.powf(alpha * j as f64) * part.multiplier(j)[idx].powi(2))
                .sum()
        })
        .collect()
}

/// `H^α` norm from precomputed [`sobolev_weights`]; one transform.
pub fn sobolev_norm_weighted(f: &RealField, weights: &[f64]) -> f64 {
    f.spectral()
        .coeffs
        .iter()
        .zip(weights)
        .map(|(c, w)| w * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Fits the block decay of a set of norms indexed from `j = -1`.
pub fn fit_block_norms(block_norms: &[f64], j_lo: i32, j_hi: i32) -> Result<DecayFit> {
    if j_hi - j_lo < 3 {
        return Err(PcfError::Degenerate(format!(
            "fit window [{j_lo}, {j_hi}] spans fewer than four blocks"
        )));
    }
    if j_lo < -1 || (j_hi + 1) as usize >= block_norms.len() {
        return Err(PcfError::OutOfRange {
            what: "fit window",
            value: j_hi as f64,
            lo: -1.0,
            hi: block_norms.len() as f64 - 2.0,
        });
    }
    let pts: Vec<(f64, f64)> = (j_lo..=j_hi)
        .map(|j| (j as f64, block_norms[(j + 1) as usize]))
        .collect();
    if pts.iter().any(|&(_, b)| !(b > 1e-300)) {
        return Err(PcfError::Degenerate("block norm below 1e-300 in fit window".into()));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y.log2()));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, b) in &pts {
        let (dx, dy) = (x - mx, b.log2() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit { slope, r2 })
}

/// Least-squares slope of `log₂‖Δ_j f‖_{L^p}` over `j ∈ [j_lo, j_hi]`.
pub fn block_decay_fit(
    f: &RealField,
    p: Lp,
    part: &DyadicPartition,
    j_lo: i32,
    j_hi: i32,
) -> Result<DecayFit> {
    part.check_block(j_lo)?;
    part.check_block(j_hi)?;
    let norms = BlockStack::new(f, part).norms(p);
    fit_block_norms(&norms, j_lo, j_hi)
}

/// Realized Bernstein constant
/// `‖∇Δ_j f‖_{L^q} / (2^{j(1 + 2(1/p - 1/q))} ‖Δ_j f‖_{L^p})`.
pub fn bernstein_probe(f: &RealField, j: i32, p: Lp, q: Lp, part: &DyadicPartition) -> Result<f64> {
    if p.as_f64() > q.as_f64() {
        return Err(PcfError::Degenerate("Bernstein probe needs p <= q".into()));
    }
    let block = lp_block(f, j, part)?;
    let base = block.lp_norm(p);
    if base <= 1e-300 {
        return Err(PcfError::Degenerate(format!("block {j} is zero")));
    }
    let d1 = block.derivative(Axis::X1);
    let d2 = block.derivative(Axis::X2);
    let grad = RealField {
        grid: block.grid,
        values: d1.values.iter().zip(&d2.values).map(|(a, b)| a.hypot(*b)).collect(),
    };
    let scale = 2f64.powf(j as f64 * (1.0 + 2.0 * (p.reciprocal() - q.reciprocal())));
    Ok(grad.lp_norm(q) / (scale * base))
}
