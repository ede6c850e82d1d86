//! Spatial white noise, mollification and the renormalized enhancement
//! `(ξ, ϑ, ϑ∘ξ - C)`.
//!
//! Coefficients are drawn per frequency pair `{k, -k}` from a stream keyed on
//! `(seed, k)`, so a fixed seed yields the same low modes at every
//! resolution and refinement studies are coupled.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::besov::{holder_norm, BlockStack, DyadicPartition};
use crate::error::{PcfError, Result};
use crate::field::{GridSpec, RealField, SpectralField};
use crate::paracalc::resonant_blocks;

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derived stream seed for realization `i` of root seed `root`:
/// `splitmix(root ^ splitmix(i))`. Order-independent, so ensembles can run
/// in any schedule.
pub fn mix(root: u64, i: u64) -> u64 {
    splitmix(root ^ splitmix(i))
}

fn pack(k1: i64, k2: i64) -> u64 {
    ((k1 as i32 as u32 as u64) << 32) | (k2 as i32 as u32 as u64)
}

/// Spectral profile `m̂` of the mollifier; `m̂(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    /// `m̂(y) = exp(-|y|²/2)`.
    #[default]
    Gaussian,
    /// `m̂(y) = 1` for `|y| ≤ 1`, else 0.
    Sharp,
}

impl Mollifier {
    pub fn symbol(self, y: f64) -> f64 {
        match self {
            Mollifier::Gaussian => (-0.5 * y * y).exp(),
            Mollifier::Sharp => {
                if y <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn normal_pair(key: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
}

/// White-noise coefficients: `ξ̂(-k) = conj ξ̂(k)`, `E|ξ̂(k)|² = 1`, the
/// self-conjugate modes real.
pub fn sample_white_noise_spectral(grid: GridSpec, seed: u64) -> SpectralField {
    let n = grid.n;
    let nyq = -(n as i64) / 2;
    let mut s = SpectralField::zeros(grid);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for idx in 0..grid.len() {
        let (k1, k2) = grid.freq_of(idx);
        let partner = grid.index_of(-k1, -k2);
        if k1 == nyq || k2 == nyq {
            // Pairing on the grid depends on n; these modes are not coupled.
            if partner < idx {
                continue;
            }
            let key = mix(mix(seed, pack(k1, k2)), (n as u64) | (1 << 63));
            let (a, b) = normal_pair(key);
            if partner == idx {
                s.coeffs[idx] = Complex64::new(a, 0.0);
            } else {
                let c = Complex64::new(a * h, b * h);
                s.coeffs[idx] = c;
                s.coeffs[partner] = c.conj();
            }
        } else if k1 == 0 && k2 == 0 {
            s.coeffs[idx] = Complex64::new(normal_pair(mix(seed, pack(0, 0))).0, 0.0);
        } else if k1 > 0 || (k1 == 0 && k2 > 0) {
            let (a, b) = normal_pair(mix(seed, pack(k1, k2)));
            let c = Complex64::new(a * h, b * h);
            s.coeffs[idx] = c;
            s.coeffs[partner] = c.conj();
        }
    }
    s
}

pub fn sample_white_noise(grid: GridSpec, seed: u64) -> RealField {
    sample_white_noise_spectral(grid, seed).fft_inverse()
}

/// Random field on the dealiased band with coefficient profile
/// `(1 + |k|²)^{-decay/2}` applied to white-noise coefficients.
pub fn band_limited_field(grid: GridSpec, seed: u64, decay: f64) -> RealField {
    let mut s = sample_white_noise_spectral(grid, seed);
    s.apply_multiplier(|k1, k2| {
        if grid.retained(k1, k2) {
            (1.0 + (k1 * k1 + k2 * k2) as f64).powf(-0.5 * decay)
        } else {
            0.0
        }
    });
    s.fft_inverse()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(PcfError::OutOfRange {
            what: "eps",
            value: eps,
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

/// `ξ_ε` with spectral multiplier `m̂(ε|k|)`; `eps = 0` is the identity.
pub fn mollify_with(xi: &RealField, eps: f64, moll: Mollifier) -> Result<RealField> {
    check_eps(eps)?;
    if eps == 0.0 {
        return Ok(xi.clone());
    }
    let mut s = xi.spectral();
    s.apply_multiplier(|k1, k2| moll.symbol(eps * ((k1 * k1 + k2 * k2) as f64).sqrt()));
    Ok(s.fft_inverse())
}

pub fn mollify(xi: &RealField, eps: f64) -> Result<RealField> {
    mollify_with(xi, eps, Mollifier::Gaussian)
}

/// `Σ_k |m̂(ε|k|)|² / ((2π|k|)² + μ)` over `k ∈ {-n/2, …, n/2-1}²`.
/// Accepts any `n ≥ 1`, so it also serves as a reference sum.
pub fn renorm_sum(n: usize, mu: f64, eps: f64, moll: Mollifier) -> f64 {
    let two_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let lo = -(n as i64) / 2;
    let hi = lo + n as i64;
    let mut total = 0.0;
    for k1 in lo..hi {
        for k2 in lo..hi {
            let r2 = (k1 * k1 + k2 * k2) as f64;
            let m = if eps == 0.0 { 1.0 } else { moll.symbol(eps * r2.sqrt()) };
            total += m * m / (two_pi_sq * r2 + mu);
        }
    }
    total
}

/// `C_ε`, the expected value of `ϑ_ε ∘ ξ_ε`.
pub fn renorm_constant(grid: GridSpec, eps: f64) -> Result<f64> {
    renorm_constant_with(grid, eps, Mollifier::Gaussian)
}

pub fn renorm_constant_with(grid: GridSpec, eps: f64, moll: Mollifier) -> Result<f64> {
    grid.validate()?;
    check_eps(eps)?;
    Ok(renorm_sum(grid.n, grid.mu, eps, moll))
}

/// The renormalized noise data used by the paracontrolled construction.
#[derive(Debug, Clone)]
pub struct NoiseEnhancement {
    pub grid: GridSpec,
    pub seed: u64,
    pub eps: f64,
    pub xi: RealField,
    pub theta: RealField,
    /// `ϑ ∘ ξ - C`.
    pub wick_area: RealField,
    pub renorm_const: f64,
}

impl NoiseEnhancement {
    /// `ξ ≡ 0` with the constant forced to zero.
    pub fn zero(grid: GridSpec) -> Self {
        NoiseEnhancement {
            grid,
            seed: 0,
            eps: 0.0,
            xi: RealField::zeros(grid),
            theta: RealField::zeros(grid),
            wick_area: RealField::zeros(grid),
            renorm_const: 0.0,
        }
    }

    /// Builds `ϑ`, `ϑ∘ξ - C` from a given (already mollified) `ξ`.
    pub fn from_xi(xi: RealField, seed: u64, eps: f64, renorm_const: f64, part: &DyadicPartition) -> Result<Self> {
        xi.check_finite()?;
        xi.grid.ensure_same(&part.grid)?;
        if !renorm_const.is_finite() {
            return Err(PcfError::NonFinite("renormalization constant"));
        }
        let theta = xi.apply_l_inverse();
        let area = resonant_blocks(&BlockStack::new(&theta, part), &BlockStack::new(&xi, part));
        let wick_area = area.map(|v| v - renorm_const);
        Ok(NoiseEnhancement {
            grid: xi.grid,
            seed,
            eps,
            xi,
            theta,
            wick_area,
            renorm_const,
        })
    }

    /// Order-sensitive digest of the grid, parameters and noise samples.
    pub fn fingerprint(&self) -> u64 {
        let mut h = mix(self.grid.n as u64, self.grid.mu.to_bits());
        h = mix(h, self.seed);
        h = mix(h, self.eps.to_bits());
        h = mix(h, self.renorm_const.to_bits());
        for v in &self.xi.values {
            h = mix(h, v.to_bits());
        }
        h
    }

    pub fn is_zero(&self) -> bool {
        self.xi.is_zero() && self.renorm_const == 0.0
    }
}

/// Samples `ξ`, mollifies it at scale `eps` and renormalizes.
pub fn enhance(grid: GridSpec, seed: u64, eps: f64, part: &DyadicPartition) -> Result<NoiseEnhancement> {
    enhance_with(grid, seed, eps, Mollifier::Gaussian, part)
}

pub fn enhance_with(
    grid: GridSpec,
    seed: u64,
    eps: f64,
    moll: Mollifier,
    part: &DyadicPartition,
) -> Result<NoiseEnhancement> {
    grid.ensure_same(&part.grid)?;
    let c = renorm_constant_with(grid, eps, moll)?;
    let xi = mollify_with(&sample_white_noise(grid, seed), eps, moll)?;
    NoiseEnhancement::from_xi(xi, seed, eps, c, part)
}

/// Distances between the areas at consecutive scales of one coupled noise
/// sample, renormalized and (as a control) not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub eps: Vec<f64>,
    pub kappa: f64,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub control_distances: Vec<f64>,
    pub control_ratios: Vec<f64>,
}

fn ratios(d: &[f64]) -> Vec<f64> {
    d.windows(2)
        .map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] })
        .collect()
}

/// `𝒞^{-2κ}` distances between `ϑ_ε∘ξ_ε - C_ε` at consecutive entries of a
/// non-increasing `eps_list`.
pub fn convergence_study(
    grid: GridSpec,
    seed: u64,
    eps_list: &[f64],
    kappa: f64,
    part: &DyadicPartition,
) -> Result<ConvergenceReport> {
    if eps_list.len() < 3 {
        return Err(PcfError::Degenerate("eps list needs at least three entries".into()));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    if eps_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(PcfError::Degenerate("eps list must be non-increasing".into()));
    }
    let base = sample_white_noise(grid, seed);
    let mut areas = Vec::with_capacity(eps_list.len());
    let mut raw = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let c = renorm_constant(grid, e)?;
        let enh = NoiseEnhancement::from_xi(mollify(&base, e)?, seed, e, c, part)?;
        raw.push(enh.wick_area.map(|v| v + c));
        areas.push(enh.wick_area);
    }
    let dist = |fields: &[RealField]| -> Vec<f64> {
        fields
            .windows(2)
            .map(|w| holder_norm(&(&w[0] - &w[1]), -2.0 * kappa, part))
            .collect()
    };
    let distances = dist(&areas);
    let control_distances = dist(&raw);
    Ok(ConvergenceReport {
        eps: eps_list.to_vec(),
        kappa,
        ratios: ratios(&distances),
        control_ratios: ratios(&control_distances),
        distances,
        control_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Lp;

    fn part(n: usize) -> DyadicPartition {
        DyadicPartition::new(GridSpec::new(n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn deterministic_and_hermitian() {
        let g = GridSpec::new(32, 1.0).unwrap();
        let a = sample_white_noise_spectral(g, 11);
        let b = sample_white_noise_spectral(g, 11);
        assert_eq!(a, b);
        assert_eq!(a.hermitian_defect(), 0.0);
        for (k1, k2) in [(0, 0), (-16, 0), (0, -16), (-16, -16)] {
            assert_eq!(a.get(k1, k2).im, 0.0);
        }
        assert_ne!(a, sample_white_noise_spectral(g, 12));
        let x = a.fft_inverse();
        assert!((x.mean() - a.get(0, 0).re).abs() < 1e-12);
    }

    #[test]
    fn coupled_across_resolutions() {
        let s32 = sample_white_noise_spectral(GridSpec::new(32, 1.0).unwrap(), 5);
        let s64 = sample_white_noise_spectral(GridSpec::new(64, 1.0).unwrap(), 5);
        for k1 in -15..16 {
            for k2 in -15..16 {
                assert_eq!(s32.get(k1, k2), s64.get(k1, k2));
            }
        }
    }

    #[test]
    fn mollifier_basics() {
        let p = part(32);
        let xi = sample_white_noise(p.grid, 3);
        assert_eq!(mollify(&xi, 0.0).unwrap(), xi);
        let m = mollify(&xi, 0.1).unwrap();
        assert!((m.mean() - xi.mean()).abs() < 1e-12 * xi.lp_norm(Lp::Inf));
        assert!(mollify(&xi, -1.0).is_err());
        assert_eq!(Mollifier::Gaussian.symbol(0.0), 1.0);
        assert_eq!(Mollifier::Sharp.symbol(1.5), 0.0);
    }

    #[test]
    fn renorm_sum_small_cases() {
        assert_eq!(renorm_sum(1, 1.0, 0.0, Mollifier::Gaussian), 1.0);
        let g = GridSpec::new(8, 1.0).unwrap();
        assert_eq!(renorm_constant(g, 0.0).unwrap(), renorm_sum(8, 1.0, 0.0, Mollifier::Gaussian));
        assert!(renorm_constant(g, 0.2).unwrap() < renorm_constant(g, 0.0).unwrap());
    }

    #[test]
    fn enhancement_invariants() {
        let p = part(32);
        let e = enhance(p.grid, 4, 0.0, &p).unwrap();
        let back = e.xi.apply_l_inverse();
        assert!((&back - &e.theta).lp_norm(Lp::Inf) < 1e-12);
        let area = crate::paracalc::resonant(&e.theta, &e.xi, &p).unwrap();
        let diff = (&area.map(|v| v - e.renorm_const) - &e.wick_area).lp_norm(Lp::Inf);
        assert!(diff < 1e-12 * (1.0 + area.lp_norm(Lp::Inf)));
        let again = enhance(p.grid, 4, 0.0, &p).unwrap();
        assert_eq!(again.wick_area, e.wick_area);
        assert_eq!(again.fingerprint(), e.fingerprint());
        assert_ne!(enhance(p.grid, 5, 0.0, &p).unwrap().fingerprint(), e.fingerprint());
        assert!(NoiseEnhancement::zero(p.grid).is_zero());
    }

    #[test]
    fn convergence_study_shapes() {
        let p = part(32);
        let r = convergence_study(p.grid, 1, &[0.1, 0.1, 0.1], 0.1, &p).unwrap();
        assert_eq!(r.distances, vec![0.0, 0.0]);
        assert!(convergence_study(p.grid, 1, &[0.1, 0.05], 0.1, &p).is_err());
        assert!(convergence_study(p.grid, 1, &[0.05, 0.1, 0.2], 0.1, &p).is_err());
        let r = convergence_study(p.grid, 1, &[0.4, 0.2, 0.1], 0.1, &p).unwrap();
        assert_eq!(r.ratios.len(), 1);
        assert!(r.distances.iter().all(|d| *d > 0.0));
    }
}
