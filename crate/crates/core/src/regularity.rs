//! Regularity diagnostics for minimizers: the `L²` estimate ratio and the
//! block-decay exponents of `u`, `R(u)` and `u^ϑ`, plus resolution sweeps
//! over coupled noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anderson::{choose_thresholds, probe_set, Anderson, GammaConfig, ParacontrolledTriple, ThresholdChoice};
use crate::besov::{fit_block_norms, BlockStack, DecayFit, DyadicPartition};
use crate::error::{PcfError, Result};
use crate::field::{GridSpec, Lp, RealField};
use crate::noise::{band_limited_field, enhance, mix, NoiseEnhancement};
use crate::variational::{
    bilinear_b, direct_form, ground_state, gradient_check, minimize, DescentConfig, MinimizeResult, Nonlinearity,
};

/// Stream index for the descent starting field of a seed.
pub const INIT_STREAM: u64 = 0x696e_6974;
/// Stream index for sweep diagnostics probes.
pub const CHECK_STREAM: u64 = 0x6368_6b;
pub const FRESH_PROBE_SEED: u64 = 0x6672_6573;

/// `‖(1 + (2π|k|)²) f̂‖_{ℓ²}`.
pub fn bessel_h2_norm(f: &RealField) -> f64 {
    let grid = f.grid;
    let s = f.spectral();
    s.coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let (k1, k2) = grid.freq_of(idx);
            let w = 1.0 + grid.symbol(k1, k2) - grid.mu;
            w * w * c.norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖u^ϑ‖_{H²} / (‖𝓗u‖_{L²} + λ‖u‖_{L²})`, zero when the denominator is.
pub fn l2_estimate_check(model: &Anderson, t: &ParacontrolledTriple, lambda: f64) -> Result<f64> {
    let hu = model.apply_h(t)?;
    let den = hu.norm_l2() + lambda * t.u.norm_l2();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(bessel_h2_norm(&t.sharp) / den)
}

/// `L^∞` block-decay fit of one field over the window.
pub fn holder_fit(f: &RealField, part: &DyadicPartition, window: (i32, i32)) -> Result<DecayFit> {
    part.check_block(window.0)?;
    part.check_block(window.1)?;
    fit_block_norms(&BlockStack::new(f, part).norms(Lp::Inf), window.0, window.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderFit {
    pub alpha_u: f64,
    pub alpha_r: f64,
    pub alpha_sharp: f64,
    pub r2_min: f64,
}

impl LadderFit {
    /// `α_♯ ≥ α_R + margin ≥ α_u + 2 margin`.
    pub fn ordered(&self, margin: f64) -> bool {
        self.alpha_sharp >= self.alpha_r + margin && self.alpha_r + margin >= self.alpha_u + 2.0 * margin
    }
}

pub fn ladder_fit(t: &ParacontrolledTriple, part: &DyadicPartition, window: (i32, i32)) -> Result<LadderFit> {
    let fu = holder_fit(&t.u, part, window)?;
    let fr = holder_fit(&t.remainder, part, window)?;
    let fs = holder_fit(&t.sharp, part, window)?;
    Ok(LadderFit {
        alpha_u: fu.exponent(),
        alpha_r: fr.exponent(),
        alpha_sharp: fs.exponent(),
        r2_min: fu.r2.min(fr.r2).min(fs.r2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LadderCriteria {
    pub margin: f64,
    pub pass_rate: f64,
    pub min_r2: f64,
}

impl Default for LadderCriteria {
    fn default() -> Self {
        LadderCriteria {
            margin: 0.3,
            pass_rate: 0.9,
            min_r2: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha_u: f64,
    pub alpha_r: f64,
    pub alpha_sharp: f64,
    /// Mean `L²` ratio over the members that supplied one.
    pub l2_ratio: Option<f64>,
    pub window: (i32, i32),
    pub seeds_used: usize,
    pub margin: f64,
    pub pass_rate_required: f64,
    /// Fraction of members whose own fit is ordered.
    pub ordered_fraction: f64,
    pub r2_min: f64,
    pub members: Vec<LadderFit>,
    pub passes: bool,
}

/// Ensemble-averaged exponents of the triples, with the ordering checked
/// per member.
pub fn schauder_report(
    triples: &[ParacontrolledTriple],
    part: &DyadicPartition,
    crit: LadderCriteria,
    l2_ratios: &[f64],
) -> Result<RegularityReport> {
    if triples.is_empty() {
        return Err(PcfError::Degenerate("empty ensemble".into()));
    }
    let window = part.ladder_window();
    let members = triples
        .iter()
        .map(|t| ladder_fit(t, part, window))
        .collect::<Result<Vec<_>>>()?;
    let m = members.len() as f64;
    let mean = |f: fn(&LadderFit) -> f64| members.iter().map(f).sum::<f64>() / m;
    let ordered = members.iter().filter(|f| f.ordered(crit.margin)).count() as f64 / m;
    let r2_min = members.iter().map(|f| f.r2_min).fold(f64::INFINITY, f64::min);
    let l2_ratio = (!l2_ratios.is_empty()).then(|| l2_ratios.iter().sum::<f64>() / l2_ratios.len() as f64);
    Ok(RegularityReport {
        alpha_u: mean(|f| f.alpha_u),
        alpha_r: mean(|f| f.alpha_r),
        alpha_sharp: mean(|f| f.alpha_sharp),
        l2_ratio,
        window,
        seeds_used: members.len(),
        margin: crit.margin,
        pass_rate_required: crit.pass_rate,
        ordered_fraction: ordered,
        r2_min,
        passes: ordered >= crit.pass_rate && r2_min >= crit.min_r2,
        members,
    })
}

/// Everything needed to rebuild the model of one minimization.
#[derive(Debug, Clone)]
pub struct MinimizerRun {
    pub part: DyadicPartition,
    pub enh: NoiseEnhancement,
    pub choice: ThresholdChoice,
    pub gamma: GammaConfig,
    pub result: MinimizeResult,
}

impl MinimizerRun {
    pub fn model(&self) -> Result<Anderson<'_>> {
        Anderson::new(&self.enh, &self.part, self.choice.loc, self.gamma)
    }
}

/// Noise, thresholds and minimizer for one seed. The descent starts from a
/// band-limited field drawn from the seed's init stream.
pub fn run_minimizer(
    grid: GridSpec,
    seed: u64,
    eps: f64,
    nl: &Nonlinearity,
    gamma: GammaConfig,
    descent: &DescentConfig,
) -> Result<MinimizerRun> {
    let part = DyadicPartition::new(grid)?;
    let enh = enhance(grid, seed, eps, &part)?;
    let choice = choose_thresholds(&enh, &part, gamma)?;
    let init = band_limited_field(grid, mix(seed, INIT_STREAM), 1.0);
    let result = {
        let model = Anderson::new(&enh, &part, choice.loc, gamma)?;
        minimize(&init, nl, &model, descent)?
    };
    Ok(MinimizerRun {
        part,
        enh,
        choice,
        gamma,
        result,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n: usize,
    pub contraction_norm: f64,
    pub fresh_norm: f64,
    pub form_error: f64,
    pub gradient_error: f64,
    pub ground_energy: f64,
    pub l2_ratio: f64,
    pub alpha_u: f64,
    pub alpha_r: f64,
    pub alpha_sharp: f64,
    pub r2_min: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub mu: f64,
    pub eps: f64,
    pub gamma: GammaConfig,
    pub descent: DescentConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mu: 1.0,
            eps: 0.0,
            gamma: GammaConfig::default(),
            descent: DescentConfig::default(),
        }
    }
}

/// `|B(v,u) - ⟨v, 𝓛u - P(uξ) + Cu⟩|` relative to `|direct| + ‖u‖‖v‖`.
pub fn form_consistency(model: &Anderson, u: &RealField, v: &RealField) -> Result<f64> {
    let tu = model.gamma_inverse(u)?;
    let tv = model.gamma_inverse(v)?;
    let b = bilinear_b(model, &tv, &tu)?;
    let d = direct_form(model.enhancement(), v, u)?;
    Ok((b - d).abs() / (d.abs() + u.norm_l2() * v.norm_l2()).max(f64::MIN_POSITIVE))
}

/// All diagnostics for one seed at one resolution.
pub fn sweep_point(seed: u64, n: usize, nl: &Nonlinearity, cfg: &SweepConfig) -> Result<SweepRow> {
    let grid = GridSpec::new(n, cfg.mu)?;
    let run = run_minimizer(grid, seed, cfg.eps, nl, cfg.gamma, &cfg.descent)?;
    let model = run.model()?;
    let fresh = probe_set(&run.part, 32, FRESH_PROBE_SEED, cfg.gamma.gamma);
    let fresh_norm = model.probe_operator_norm(&fresh, None)?;
    let check = mix(seed, CHECK_STREAM);
    let a = band_limited_field(grid, mix(check, 0), 1.0);
    let b = band_limited_field(grid, mix(check, 1), 1.0);
    let form_error = form_consistency(&model, &a, &b)?;
    let dirs: Vec<RealField> = (2..4).map(|i| band_limited_field(grid, mix(check, i), 1.5)).collect();
    // Away from the minimizer, where DE does not vanish.
    let mut state = run.result.triple.u.clone();
    state += &band_limited_field(grid, mix(check, 4), 1.0);
    let gradient_error = gradient_check(&model, &state, nl, &dirs, 1e-5)?;
    let (ground, _) = ground_state(&run.enh, mix(check, 9), 1e-9)?;
    let lambda = (-ground).max(0.0) + 0.1;
    let t = &run.result.triple;
    let l2_ratio = l2_estimate_check(&model, t, lambda)?;
    let fit = ladder_fit(t, &run.part, run.part.ladder_window())?;
    Ok(SweepRow {
        seed,
        n,
        contraction_norm: run.choice.realized_norm,
        fresh_norm,
        form_error,
        gradient_error,
        ground_energy: ground,
        l2_ratio,
        alpha_u: fit.alpha_u,
        alpha_r: fit.alpha_r,
        alpha_sharp: fit.alpha_sharp,
        r2_min: fit.r2_min,
        converged: run.result.converged,
        iterations: run.result.iterations,
        residual: run.result.residual,
        energy: run.result.final_energy(),
    })
}

pub fn check_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(PcfError::InvalidGrid("empty resolution list".into()));
    }
    for (i, &n) in n_list.iter().enumerate() {
        if !n.is_power_of_two() || n < 8 {
            return Err(PcfError::InvalidGrid(format!("n = {n} is not a power of two ≥ 8")));
        }
        if i > 0 && n <= n_list[i - 1] {
            return Err(PcfError::InvalidGrid("resolution list must increase".into()));
        }
    }
    Ok(())
}

/// Rows for `count` seeds derived from `root_seed`, each solved at every
/// `n` with the same seed so that shared modes carry identical noise.
/// Seeds run in parallel on the current rayon pool; rows are ordered by
/// seed, then `n`.
pub fn resolution_sweep(
    root_seed: u64,
    count: usize,
    n_list: &[usize],
    nl: &Nonlinearity,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    check_n_list(n_list)?;
    let per_seed: Vec<Result<Vec<SweepRow>>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = mix(root_seed, i);
            n_list.iter().map(|&n| sweep_point(seed, n, nl, cfg)).collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(count * n_list.len());
    for r in per_seed {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Largest `ratio(2n)/ratio(n)` over consecutive resolutions of each seed.
pub fn max_l2_growth(rows: &[SweepRow]) -> f64 {
    rows.windows(2)
        .filter(|w| w[0].seed == w[1].seed && w[1].n > w[0].n && w[0].l2_ratio > 0.0)
        .map(|w| w[1].l2_ratio / w[0].l2_ratio)
        .fold(0.0, f64::max)
}
