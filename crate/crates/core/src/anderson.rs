//! The paracontrolled structure of the Anderson Hamiltonian
//! `𝓗u = 𝓛u - u⋄ξ`.
//!
//! A field is split as `u = u≺ϑ + R(u) + u^ϑ`. With the localized noise
//! pieces `𝒰_≤ξ, 𝒰_>ξ` (threshold `L`) and `𝒰_≤W, 𝒰_>W` (threshold `K`,
//! `W = ϑ∘ξ - C`) the rough part is
//!
//! `Φ(u) = u≺𝒰_>ξ + u≻𝒰_>ξ + u≻𝒰_>W + u≺𝒰_>W`
//!
//! and the default remainder is chosen so that `𝓛(u≺ϑ + R(u)) = Φ(u)`
//! exactly, i.e. `R(u) = 𝓛⁻¹[-u≺𝒰_≤ξ + u≻𝒰_>ξ + u≻𝒰_>W + u≺𝒰_>W + u≺ξ] - u≺ϑ`.
//! The Leibniz form replaces `u≺ξ - 𝓛(u≺ϑ)` by its first-order expansion
//! `-(𝓛u)≺ϑ + μ u≺ϑ + c∇u≺∇ϑ`; it is kept for comparison.

use serde::{Deserialize, Serialize};

use crate::besov::{sobolev_norm_weighted, sobolev_weights, BlockStack, DyadicPartition};
use crate::error::{PcfError, Result};
use crate::field::{Axis, RealField};
use crate::noise::{band_limited_field, mix, NoiseEnhancement};
use crate::paracalc::{accumulate_para_lt, accumulate_resonant, localize, para_lt_blocks, LocalizationParams};

/// How `R(u)` expands `u≺ξ - 𝓛(u≺ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainderForm {
    /// Exact on the grid: `𝓛(u≺ϑ + R(u)) = Φ(u)`.
    #[default]
    Spectral,
    /// `-(𝓛u)≺ϑ + μ u≺ϑ + grad_coeff · ∇u≺∇ϑ`.
    Leibniz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaConfig {
    pub max_iter: usize,
    /// Relative fixed-point tolerance in `H^γ`.
    pub tol: f64,
    pub grad_coeff: f64,
    pub form: RemainderForm,
    /// Exponent `γ` of the space the contraction is measured in.
    pub gamma: f64,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            max_iter: 100,
            tol: 1e-10,
            grad_coeff: 2.0,
            form: RemainderForm::Spectral,
            gamma: 0.8,
        }
    }
}

impl GammaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(PcfError::ConfigValue {
                key: "tol".into(),
                msg: format!("{} must be > 0", self.tol),
            });
        }
        if self.max_iter == 0 {
            return Err(PcfError::ConfigValue {
                key: "max_iter".into(),
                msg: "must be positive".into(),
            });
        }
        if !self.grad_coeff.is_finite() || !self.gamma.is_finite() {
            return Err(PcfError::NonFinite("gamma config"));
        }
        Ok(())
    }
}

/// `u = para + remainder + sharp` on a fixed enhancement.
#[derive(Debug, Clone, PartialEq)]
pub struct ParacontrolledTriple {
    pub u: RealField,
    /// `u ≺ ϑ`.
    pub para: RealField,
    /// `R(u)`.
    pub remainder: RealField,
    /// `u^ϑ`.
    pub sharp: RealField,
    pub loc: LocalizationParams,
    pub enhancement_id: u64,
}

impl ParacontrolledTriple {
    /// `‖u - para - remainder - sharp‖_∞ / ‖u‖_∞` (absolute when `u = 0`).
    pub fn decomposition_defect(&self) -> f64 {
        let mut d = self.u.clone();
        d -= &self.para;
        d -= &self.remainder;
        d -= &self.sharp;
        let scale = self.u.lp_norm(crate::field::Lp::Inf);
        let err = d.lp_norm(crate::field::Lp::Inf);
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }
}

/// Residual history of the Picard iteration for `Γ`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GammaLog {
    pub iterations: usize,
    /// `‖u_{m+1} - u_m‖_{H^γ}` per iteration.
    pub residuals: Vec<f64>,
    /// Final residual relative to `‖u‖_{H^γ}`.
    pub relative_residual: f64,
}

impl GammaLog {
    /// Largest ratio of consecutive residuals, ignoring steps already at the
    /// round-off floor.
    pub fn max_ratio(&self, floor: f64) -> f64 {
        self.residuals
            .windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }
}

/// `Φ`, `Ψ` and the field `𝓛u - u⋄ξ - (𝓛(u≺ϑ + R) - Φ + 𝓛u^ϑ - Ψ)`.
#[derive(Debug, Clone)]
pub struct PhiPsi {
    pub phi: RealField,
    pub psi: RealField,
    pub defect: RealField,
}

/// Outcome of the threshold search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub loc: LocalizationParams,
    pub realized_norm: f64,
}

pub const PROBE_COUNT: usize = 32;
pub const PROBE_SEED: u64 = 0x7072_6f62_6573;
pub const CONTRACTION_BOUND: f64 = 0.5;

/// Random band-limited fields normalized to unit `H^γ` norm.
pub fn probe_set(part: &DyadicPartition, count: usize, seed: u64, gamma: f64) -> Vec<RealField> {
    let w = sobolev_weights(part, gamma);
    (0..count)
        .map(|i| {
            let f = band_limited_field(part.grid, mix(seed, i as u64), gamma + 1.0);
            let norm = sobolev_norm_weighted(&f, &w);
            f.scaled(1.0 / norm)
        })
        .collect()
}

/// Dealiases, applies `𝓛⁻¹` and transforms back in one pass.
fn project_solve(f: &RealField) -> RealField {
    let mut s = f.spectral();
    s.dealias();
    let g = f.grid;
    s.apply_multiplier(|k1, k2| 1.0 / g.symbol(k1, k2));
    s.fft_inverse()
}

/// The enhancement, partition and thresholds with all noise blocks cached.
pub struct Anderson<'a> {
    enh: &'a NoiseEnhancement,
    part: &'a DyadicPartition,
    loc: LocalizationParams,
    cfg: GammaConfig,
    id: u64,
    gamma_weights: Vec<f64>,
    area: RealField,
    xi: BlockStack,
    theta: BlockStack,
    wick: BlockStack,
    xi_low: BlockStack,
    xi_high: BlockStack,
    w_low: BlockStack,
    w_high: BlockStack,
}

impl<'a> Anderson<'a> {
    pub fn new(
        enh: &'a NoiseEnhancement,
        part: &'a DyadicPartition,
        loc: LocalizationParams,
        cfg: GammaConfig,
    ) -> Result<Self> {
        enh.grid.ensure_same(&part.grid)?;
        loc.validate(part)?;
        cfg.validate()?;
        let (xl, xh) = localize(&enh.xi, loc.l, part)?;
        let (wl, wh) = localize(&enh.wick_area, loc.k, part)?;
        let c = enh.renorm_const;
        Ok(Anderson {
            enh,
            part,
            loc,
            cfg,
            id: enh.fingerprint(),
            gamma_weights: sobolev_weights(part, cfg.gamma),
            area: enh.wick_area.map(|v| v + c),
            xi: BlockStack::new(&enh.xi, part),
            theta: BlockStack::new(&enh.theta, part),
            wick: BlockStack::new(&enh.wick_area, part),
            xi_low: BlockStack::new(&xl, part),
            xi_high: BlockStack::new(&xh, part),
            w_low: BlockStack::new(&wl, part),
            w_high: BlockStack::new(&wh, part),
        })
    }

    pub fn enhancement(&self) -> &NoiseEnhancement {
        self.enh
    }

    pub fn partition(&self) -> &DyadicPartition {
        self.part
    }

    pub fn loc(&self) -> LocalizationParams {
        self.loc
    }

    pub fn config(&self) -> &GammaConfig {
        &self.cfg
    }

    pub fn enhancement_id(&self) -> u64 {
        self.id
    }

    /// `‖f‖_{H^γ}` for the configured `γ`.
    pub fn gamma_norm(&self, f: &RealField) -> f64 {
        sobolev_norm_weighted(f, &self.gamma_weights)
    }

    fn stack(&self, f: &RealField) -> BlockStack {
        BlockStack::new(f, self.part)
    }

    fn check_field(&self, f: &RealField) -> Result<()> {
        f.grid.ensure_same(&self.enh.grid)?;
        f.check_finite()
    }

    fn check_triple(&self, t: &ParacontrolledTriple) -> Result<()> {
        if t.enhancement_id != self.id {
            return Err(PcfError::EnhancementMismatch {
                expected: t.enhancement_id,
                found: self.id,
            });
        }
        self.check_field(&t.u)
    }

    /// `Φ(u)` before projection.
    fn phi_raw(&self, us: &BlockStack) -> RealField {
        let mut acc = RealField::zeros(self.enh.grid);
        accumulate_para_lt(&mut acc, us, &self.xi_high);
        accumulate_para_lt(&mut acc, &self.xi_high, us);
        accumulate_para_lt(&mut acc, &self.w_high, us);
        accumulate_para_lt(&mut acc, us, &self.w_high);
        acc
    }

    /// `Φ(u) = u≺𝒰_>ξ + u≻𝒰_>ξ + u≻𝒰_>W + u≺𝒰_>W`.
    pub fn phi(&self, u: &RealField) -> Result<RealField> {
        self.check_field(u)?;
        Ok(self.phi_raw(&self.stack(u)).dealias())
    }

    fn leibniz_remainder(&self, u: &RealField, us: &BlockStack, para: &RealField) -> RealField {
        let mu = self.enh.grid.mu;
        let mut acc = RealField::zeros(u.grid);
        let mut neg = RealField::zeros(u.grid);
        accumulate_para_lt(&mut neg, us, &self.xi_low);
        accumulate_para_lt(&mut neg, &self.stack(&u.apply_l()), &self.theta);
        accumulate_para_lt(&mut acc, &self.xi_high, us);
        accumulate_para_lt(&mut acc, &self.w_high, us);
        accumulate_para_lt(&mut acc, us, &self.w_high);
        for axis in [Axis::X1, Axis::X2] {
            let du = self.stack(&u.derivative(axis));
            let dt = self.stack(&self.enh.theta.derivative(axis));
            let mut g = RealField::zeros(u.grid);
            accumulate_para_lt(&mut g, &du, &dt);
            acc.axpy(self.cfg.grad_coeff, &g);
        }
        acc -= &neg;
        acc.axpy(mu, para);
        project_solve(&acc)
    }

    /// `(u≺ϑ, R(u))` from the block stack of `u`.
    fn para_and_remainder(&self, u: &RealField, us: &BlockStack) -> (RealField, RealField) {
        let para = para_lt_blocks(us, &self.theta);
        let rem = match self.cfg.form {
            RemainderForm::Spectral => &project_solve(&self.phi_raw(us)) - &para,
            RemainderForm::Leibniz => self.leibniz_remainder(u, us, &para),
        };
        (para, rem)
    }

    /// `R(u)`.
    pub fn remainder(&self, u: &RealField) -> Result<RealField> {
        self.check_field(u)?;
        Ok(self.para_and_remainder(u, &self.stack(u)).1)
    }

    /// `u ↦ u≺ϑ + R(u)`, the map whose contraction makes `Γ` well defined.
    pub fn contraction_map(&self, u: &RealField) -> Result<RealField> {
        self.check_field(u)?;
        let us = self.stack(u);
        Ok(match self.cfg.form {
            RemainderForm::Spectral => project_solve(&self.phi_raw(&us)),
            RemainderForm::Leibniz => {
                let (p, r) = self.para_and_remainder(u, &us);
                &p + &r
            }
        })
    }

    /// `u^ϑ = u - u≺ϑ - R(u)`.
    pub fn gamma_inverse(&self, u: &RealField) -> Result<ParacontrolledTriple> {
        self.check_field(u)?;
        let (para, remainder) = self.para_and_remainder(u, &self.stack(u));
        let mut sharp = u.clone();
        sharp -= &para;
        sharp -= &remainder;
        Ok(ParacontrolledTriple {
            u: u.clone(),
            para,
            remainder,
            sharp,
            loc: self.loc,
            enhancement_id: self.id,
        })
    }

    /// Solves `u = sharp + u≺ϑ + R(u)` by Picard iteration from `u_0 = sharp`.
    pub fn gamma_map(&self, sharp: &RealField) -> Result<(ParacontrolledTriple, GammaLog)> {
        self.check_field(sharp)?;
        let mut u = sharp.clone();
        let mut log = GammaLog::default();
        for it in 1..=self.cfg.max_iter {
            let mut next = self.contraction_map(&u)?;
            next += sharp;
            let res = self.gamma_norm(&(&next - &u));
            let scale = self.gamma_norm(&next);
            log.residuals.push(res);
            log.iterations = it;
            log.relative_residual = if scale > 0.0 { res / scale } else { res };
            u = next;
            if !res.is_finite() {
                return Err(PcfError::Divergence(res));
            }
            if res <= self.cfg.tol * scale {
                return Ok((self.gamma_inverse(&u)?, log));
            }
        }
        Err(PcfError::NonConvergence {
            what: "gamma map",
            iterations: self.cfg.max_iter,
            residual: log.relative_residual,
        })
    }

    /// `G(u)` before projection.
    fn g_raw(&self, t: &ParacontrolledTriple, us: &BlockStack) -> RealField {
        let mut acc = RealField::zeros(t.u.grid);
        accumulate_resonant(&mut acc, &self.stack(&t.remainder), &self.xi);
        accumulate_para_lt(&mut acc, us, &self.xi_low);
        accumulate_para_lt(&mut acc, &self.xi_low, us);
        accumulate_para_lt(&mut acc, &self.w_low, us);
        accumulate_para_lt(&mut acc, us, &self.w_low);
        // C(u, ϑ, ξ) = (u≺ϑ)∘ξ - u(ϑ∘ξ)
        accumulate_resonant(&mut acc, &self.stack(&t.para), &self.xi);
        acc -= &t.u.pointwise(&self.area);
        accumulate_resonant(&mut acc, us, &self.wick);
        acc
    }

    /// `G(u) = R∘ξ + u≺𝒰_≤ξ + u≻𝒰_≤ξ + u≻𝒰_≤W + u≺𝒰_≤W + C(u,ϑ,ξ) + u∘W`.
    pub fn g_term(&self, t: &ParacontrolledTriple) -> Result<RealField> {
        self.check_triple(t)?;
        Ok(self.g_raw(t, &self.stack(&t.u)).dealias())
    }

    /// `u⋄ξ = u≺ξ + u≻ξ + C(u,ϑ,ξ) + uW + R∘ξ + u^ϑ∘ξ`.
    pub fn wick_product(&self, t: &ParacontrolledTriple) -> Result<RealField> {
        self.check_triple(t)?;
        let us = self.stack(&t.u);
        let mut acc = RealField::zeros(t.u.grid);
        accumulate_para_lt(&mut acc, &us, &self.xi);
        accumulate_para_lt(&mut acc, &self.xi, &us);
        accumulate_resonant(&mut acc, &self.stack(&t.para), &self.xi);
        acc -= &t.u.pointwise(&self.area);
        acc += &t.u.pointwise(&self.enh.wick_area);
        accumulate_resonant(&mut acc, &self.stack(&t.remainder), &self.xi);
        accumulate_resonant(&mut acc, &self.stack(&t.sharp), &self.xi);
        Ok(acc.dealias())
    }

    /// `𝓗u = 𝓛u^ϑ - u^ϑ∘ξ - G(u)`.
    pub fn apply_h(&self, t: &ParacontrolledTriple) -> Result<RealField> {
        self.check_triple(t)?;
        let us = self.stack(&t.u);
        let mut acc = self.g_raw(t, &us);
        accumulate_resonant(&mut acc, &self.stack(&t.sharp), &self.xi);
        let mut h = t.sharp.apply_l();
        h -= &acc.dealias();
        Ok(h)
    }

    /// `Ψ(u) = G(u) + u^ϑ∘ξ`.
    pub fn phi_psi(&self, t: &ParacontrolledTriple) -> Result<PhiPsi> {
        self.check_triple(t)?;
        let us = self.stack(&t.u);
        let phi = self.phi_raw(&us).dealias();
        let mut psi = self.g_raw(t, &us);
        accumulate_resonant(&mut psi, &self.stack(&t.sharp), &self.xi);
        let psi = psi.dealias();
        let lhs = &t.u.apply_l() - &self.wick_product(t)?;
        let mut rhs = (&t.para + &t.remainder).apply_l();
        rhs -= &phi;
        rhs += &t.sharp.apply_l();
        rhs -= &psi;
        Ok(PhiPsi {
            phi,
            psi,
            defect: &lhs - &rhs,
        })
    }

    /// `‖𝓛(u≺ϑ + R(u)) - Φ(u)‖_{H^{-1}} / ‖u‖_{H^1}`, zero for `u = 0`.
    pub fn remainder_defect(&self, t: &ParacontrolledTriple) -> Result<f64> {
        self.check_triple(t)?;
        let un = sobolev_norm_weighted(&t.u, &sobolev_weights(self.part, 1.0));
        if un == 0.0 {
            return Ok(0.0);
        }
        let mut d = (&t.para + &t.remainder).apply_l();
        d -= &self.phi(&t.u)?;
        Ok(sobolev_norm_weighted(&d, &sobolev_weights(self.part, -1.0)) / un)
    }

    /// `f ≺ ξ` with the cached noise blocks.
    pub fn para_lt_xi(&self, f: &RealField) -> RealField {
        para_lt_blocks(&self.stack(f), &self.xi)
    }

    /// `f ∘ ξ` with the cached noise blocks.
    pub fn resonant_xi(&self, f: &RealField) -> RealField {
        let mut acc = RealField::zeros(f.grid);
        accumulate_resonant(&mut acc, &self.stack(f), &self.xi);
        acc.dealias()
    }

    /// Largest `‖T p‖_{H^γ} / ‖p‖_{H^γ}` over the probes, `T` the contraction
    /// map. Stops early once `bound` is exceeded.
    pub fn probe_operator_norm(&self, probes: &[RealField], bound: Option<f64>) -> Result<f64> {
        let mut worst = 0.0f64;
        for p in probes {
            let r = self.gamma_norm(&self.contraction_map(p)?) / self.gamma_norm(p);
            worst = worst.max(r);
            if bound.is_some_and(|b| worst > b) {
                break;
            }
        }
        Ok(worst)
    }
}

/// Smallest `(L, K)`, lexicographic with `L` first, whose probe operator
/// norm of `u ↦ u≺ϑ + R(u)` on `H^γ` is at most one half.
///
/// For each `L` the most favourable `K = j_max` is tried first; only an `L`
/// that passes there is scanned over `K`.
pub fn choose_thresholds(
    enh: &NoiseEnhancement,
    part: &DyadicPartition,
    cfg: GammaConfig,
) -> Result<ThresholdChoice> {
    let probes = probe_set(part, PROBE_COUNT, PROBE_SEED, cfg.gamma);
    let top = part.j_max;
    let mut best = f64::INFINITY;
    for l in -1..=top {
        let m = Anderson::new(enh, part, LocalizationParams::new(l, top), cfg)?;
        let r = m.probe_operator_norm(&probes, Some(CONTRACTION_BOUND))?;
        best = best.min(r);
        if r > CONTRACTION_BOUND {
            continue;
        }
        for k in -1..=top {
            let loc = LocalizationParams::new(l, k);
            let r = if k == top {
                r
            } else {
                Anderson::new(enh, part, loc, cfg)?.probe_operator_norm(&probes, Some(CONTRACTION_BOUND))?
            };
            if r <= CONTRACTION_BOUND {
                return Ok(ThresholdChoice { loc, realized_norm: r });
            }
        }
    }
    Err(PcfError::NoAdmissibleThreshold { best_norm: best })
}
