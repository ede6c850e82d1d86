//! Bony paraproducts, commutators and frequency localization.
//!
//! With blocks `Δ_j` from [`crate::besov`] and `S_{j-1} = Σ_{i≤j-2} Δ_i`:
//!
//! * `f ≺ g = P Σ_j S_{j-1}f · Δ_j g`
//! * `f ∘ g = P Σ_{|i-j|≤1} Δ_i f · Δ_j g`
//! * `f ≻ g = g ≺ f`
//!
//! where `P` is the dealiasing projection, so `≺ + ∘ + ≻` reassembles the
//! dealiased product `P(fg)` exactly.

use serde::{Deserialize, Serialize};

use crate::besov::{BlockStack, DyadicPartition};
use crate::error::{PcfError, Result};
use crate::field::{Axis, RealField};

/// Block thresholds of the two localizations: `L` for `ξ`, `K` for `ϑ⋄ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationParams {
    pub l: i32,
    pub k: i32,
}

impl LocalizationParams {
    pub fn new(l: i32, k: i32) -> Self {
        LocalizationParams { l, k }
    }

    pub fn validate(&self, part: &DyadicPartition) -> Result<()> {
        for (what, t) in [("L", self.l), ("K", self.k)] {
            if !(-1..=part.j_max).contains(&t) {
                return Err(PcfError::ConfigValue {
                    key: what.into(),
                    msg: format!("threshold {t} outside [-1, {}]", part.j_max),
                });
            }
        }
        Ok(())
    }
}

fn check_grids(part: &DyadicPartition, fields: &[&RealField]) -> Result<()> {
    for f in fields {
        f.grid.ensure_same(&part.grid)?;
    }
    Ok(())
}

/// Adds `Σ_j S_{j-1}f · Δ_j g` to `acc` without projecting.
pub fn accumulate_para_lt(acc: &mut RealField, f: &BlockStack, g: &BlockStack) {
    let j_max = f.j_max();
    let mut low = RealField::zeros(acc.grid);
    for j in 1..=j_max {
        low += f.block(j - 2);
        let gj = g.block(j);
        for ((a, l), b) in acc.values.iter_mut().zip(&low.values).zip(&gj.values) {
            *a += l * b;
        }
    }
}

/// Adds `Σ_{|i-j|≤1} Δ_i f · Δ_j g` to `acc` without projecting.
pub fn accumulate_resonant(acc: &mut RealField, f: &BlockStack, g: &BlockStack) {
    let j_max = f.j_max();
    for j in -1..=j_max {
        let gj = g.block(j);
        for i in (j - 1).max(-1)..=(j + 1).min(j_max) {
            let fi = f.block(i);
            for ((a, x), y) in acc.values.iter_mut().zip(&fi.values).zip(&gj.values) {
                *a += x * y;
            }
        }
    }
}

/// `f ≺ g` from precomputed block stacks.
pub fn para_lt_blocks(f: &BlockStack, g: &BlockStack) -> RealField {
    let mut acc = RealField::zeros(f.blocks[0].grid);
    accumulate_para_lt(&mut acc, f, g);
    acc.dealias()
}

/// `f ∘ g` from precomputed block stacks.
pub fn resonant_blocks(f: &BlockStack, g: &BlockStack) -> RealField {
    let mut acc = RealField::zeros(f.blocks[0].grid);
    accumulate_resonant(&mut acc, f, g);
    acc.dealias()
}

/// `f ≺ g`: `f` at strictly lower frequencies than `g`.
pub fn para_lt(f: &RealField, g: &RealField, part: &DyadicPartition) -> Result<RealField> {
    check_grids(part, &[f, g])?;
    Ok(para_lt_blocks(&BlockStack::new(f, part), &BlockStack::new(g, part)))
}

/// `f ≻ g = g ≺ f`.
pub fn para_gt(f: &RealField, g: &RealField, part: &DyadicPartition) -> Result<RealField> {
    para_lt(g, f, part)
}

/// `f ∘ g`: the comparable-frequency part of the product.
pub fn resonant(f: &RealField, g: &RealField, part: &DyadicPartition) -> Result<RealField> {
    check_grids(part, &[f, g])?;
    Ok(resonant_blocks(&BlockStack::new(f, part), &BlockStack::new(g, part)))
}

/// `C(f, g, h) = (f ≺ g) ∘ h - P(f · (g ∘ h))`.
pub fn commutator_c(
    f: &RealField,
    g: &RealField,
    h: &RealField,
    part: &DyadicPartition,
) -> Result<RealField> {
    check_grids(part, &[f, g, h])?;
    let (fs, gs, hs) = (
        BlockStack::new(f, part),
        BlockStack::new(g, part),
        BlockStack::new(h, part),
    );
    Ok(commutator_c_blocks(f, &fs, &gs, &hs, part))
}

pub fn commutator_c_blocks(
    f: &RealField,
    fs: &BlockStack,
    gs: &BlockStack,
    hs: &BlockStack,
    part: &DyadicPartition,
) -> RealField {
    let flg = para_lt_blocks(fs, gs);
    let first = resonant_blocks(&BlockStack::new(&flg, part), hs);
    let second = f.product(&resonant_blocks(gs, hs));
    &first - &second
}

/// `D(f, g, h) = ⟨f, h ∘ g⟩ - ⟨f ≺ g, h⟩`.
pub fn trilinear_d(f: &RealField, g: &RealField, h: &RealField, part: &DyadicPartition) -> Result<f64> {
    check_grids(part, &[f, g, h])?;
    let hg = resonant(h, g, part)?;
    let flg = para_lt(f, g, part)?;
    Ok(f.dot(&hg) - flg.dot(h))
}

/// `𝓛(f ≺ g) - f ≺ 𝓛g`.
pub fn l_commutator(f: &RealField, g: &RealField, part: &DyadicPartition) -> Result<RealField> {
    check_grids(part, &[f, g])?;
    let left = para_lt(f, g, part)?.apply_l();
    let right = para_lt(f, &g.apply_l(), part)?;
    Ok(&left - &right)
}

/// `∇f ≺ ∇g = Σ_d ∂_d f ≺ ∂_d g`.
pub fn grad_para_lt(f: &RealField, g: &RealField, part: &DyadicPartition) -> Result<RealField> {
    check_grids(part, &[f, g])?;
    let mut out = RealField::zeros(f.grid);
    for axis in [Axis::X1, Axis::X2] {
        out += &para_lt(&f.derivative(axis), &g.derivative(axis), part)?;
    }
    Ok(out)
}

/// Spectral mask of `𝒰_≤`: `χ + Σ_{j≤t} ϱ_j`.
pub fn low_mask(threshold: i32, part: &DyadicPartition) -> Vec<f64> {
    let mut mask = part.chi.clone();
    for j in 0..=threshold.min(part.j_max) {
        for (m, r) in mask.iter_mut().zip(part.multiplier(j)) {
            *m += r;
        }
    }
    mask
}

/// `(𝒰_≤ f, 𝒰_> f)` with `𝒰_≤ = Σ_{j≤threshold} Δ_j`.
pub fn localize(f: &RealField, threshold: i32, part: &DyadicPartition) -> Result<(RealField, RealField)> {
    check_grids(part, &[f])?;
    part.check_block(threshold)?;
    let mut s = f.spectral();
    s.apply_mask(&low_mask(threshold, part));
    let low = s.fft_inverse();
    let high = f - &low;
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::{holder_norm, lp_block};
    use crate::field::{GridSpec, Lp};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn part(n: usize) -> DyadicPartition {
        DyadicPartition::new(GridSpec::new(n, 1.0).unwrap()).unwrap()
    }

    fn band_limited(p: &DyadicPartition, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField::from_fn(p.grid, |_, _| rng.random_range(-1.0..1.0)).dealias()
    }

    fn close(a: &RealField, b: &RealField, tol: f64) -> bool {
        let scale = a.lp_norm(Lp::Inf).max(b.lp_norm(Lp::Inf)).max(1e-300);
        (a - b).lp_norm(Lp::Inf) <= tol * scale
    }

    #[test]
    fn bony_reassembly() {
        let p = part(32);
        for seed in 0..4 {
            let f = band_limited(&p, seed);
            let g = band_limited(&p, seed + 100);
            let sum = &(&para_lt(&f, &g, &p).unwrap() + &resonant(&f, &g, &p).unwrap())
                + &para_gt(&f, &g, &p).unwrap();
            assert!(close(&sum, &f.product(&g), 1e-12));
        }
    }

    #[test]
    fn constant_left_factor() {
        let p = part(32);
        let g = band_limited(&p, 3);
        let one = RealField::constant(p.grid, 1.0);
        let lt = para_lt(&one, &g, &p).unwrap();
        let mut want = RealField::zeros(p.grid);
        for j in 1..=p.j_max {
            want += &lp_block(&g, j, &p).unwrap();
        }
        assert!(close(&lt, &want, 1e-12));
        let res = resonant(&one, &g, &p).unwrap();
        let low = &lp_block(&g, -1, &p).unwrap() + &lp_block(&g, 0, &p).unwrap();
        assert!(close(&res, &low, 1e-12));
        assert!(para_gt(&one, &g, &p).unwrap().lp_norm(Lp::Inf) < 1e-14);
    }

    #[test]
    fn zero_inputs() {
        let p = part(16);
        let z = RealField::zeros(p.grid);
        let g = band_limited(&p, 1);
        assert!(para_lt(&z, &z, &p).unwrap().is_zero());
        assert!(resonant(&z, &g, &p).unwrap().lp_norm(Lp::Inf) == 0.0);
        assert!(commutator_c(&g, &g, &z, &p).unwrap().lp_norm(Lp::Inf) == 0.0);
        assert_eq!(trilinear_d(&z, &g, &g, &p).unwrap(), 0.0);
        assert!(l_commutator(&g, &z, &p).unwrap().lp_norm(Lp::Inf) == 0.0);
    }

    #[test]
    fn commutator_with_constant() {
        let p = part(32);
        let c = 1.7;
        // c ≺ g = c(g - 1∘g), so C(c, g, h) = -c (1∘g)∘h.
        let g = band_limited(&p, 5);
        let h = band_limited(&p, 6);
        let cst = RealField::constant(p.grid, c);
        let got = commutator_c(&cst, &g, &h, &p).unwrap();
        let one = RealField::constant(p.grid, 1.0);
        let low = resonant(&one, &g, &p).unwrap();
        assert!(low.lp_norm(Lp::Inf) > 1e-3);
        let want = resonant(&low, &h, &p).unwrap().scaled(-c);
        assert!(close(&got, &want, 1e-11));
        // Without low blocks in g the commutator vanishes.
        let mut s = g.spectral();
        s.apply_mask(&low_mask(1, &p).iter().map(|m| 1.0 - m).collect::<Vec<_>>());
        let g_high = s.fft_inverse();
        let scale = c * g_high.lp_norm(Lp::Inf) * h.lp_norm(Lp::Inf);
        assert!(commutator_c(&cst, &g_high, &h, &p).unwrap().lp_norm(Lp::Inf) < 1e-12 * scale);
    }

    #[test]
    fn trilinear_d_matches_definition() {
        let p = part(32);
        let (f, g, h) = (band_limited(&p, 1), band_limited(&p, 2), band_limited(&p, 3));
        let d = trilinear_d(&f, &g, &h, &p).unwrap();
        let want = f.inner(&resonant(&h, &g, &p).unwrap()).unwrap()
            - para_lt(&f, &g, &p).unwrap().inner(&h).unwrap();
        assert!((d - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn l_commutator_constant_is_zero() {
        let p = part(32);
        let g = band_limited(&p, 9);
        let c = RealField::constant(p.grid, 0.4);
        let r = l_commutator(&c, &g, &p).unwrap();
        assert!(r.lp_norm(Lp::Inf) <= 1e-10 * g.apply_l().lp_norm(Lp::Inf));
    }

    #[test]
    fn localization_ends() {
        let p = part(32);
        let f = band_limited(&p, 4);
        let (low, high) = localize(&f, p.j_max, &p).unwrap();
        assert!(high.lp_norm(Lp::Inf) < 1e-13);
        assert!(close(&low, &f, 1e-13));
        let (low, high) = localize(&f, -1, &p).unwrap();
        assert!(close(&low, &lp_block(&f, -1, &p).unwrap(), 1e-13));
        assert!(close(&(&low + &high), &f, 1e-15));
        assert!(localize(&f, p.j_max + 1, &p).is_err());
        assert!(holder_norm(&high, 0.0, &p) > 0.0);
    }

    #[test]
    fn localization_params_validated() {
        let p = part(16);
        assert!(LocalizationParams::new(-1, p.j_max).validate(&p).is_ok());
        assert!(LocalizationParams::new(-2, 0).validate(&p).is_err());
        assert!(LocalizationParams::new(0, p.j_max + 1).validate(&p).is_err());
    }
}
