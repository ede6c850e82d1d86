use std::io::Write;
use std::path::{Path, PathBuf};

use pcf_core::anderson::{choose_thresholds, probe_set, Anderson, ThresholdChoice, PROBE_COUNT, PROBE_SEED};
use pcf_core::besov::{besov_norm, block_decay_fit, DyadicPartition};
use pcf_core::config::RunConfig;
use pcf_core::io::{
    load_enhancement, load_triple_u, noise_prefix, read_field, read_json, save_enhancement, save_triple,
    with_suffix, write_atomic, write_json, TripleSidecar,
};
use pcf_core::noise::{band_limited_field, enhance, mix, renorm_constant};
use pcf_core::regularity::{
    check_n_list, l2_estimate_check, ladder_fit, LadderFit, max_l2_growth, resolution_sweep, SweepConfig, INIT_STREAM,
};
use pcf_core::variational::{
    coercivity_probe, coercivity_probes, energy, ground_state, minimize as descend, weak_residual, COERCIVITY_PROBES,
    COERCIVITY_SEED,
};
use pcf_core::{BesovIndex, GridSpec, Lp, NoiseEnhancement, PcfError, RealField};
use serde::Serialize;
use serde_json::json;

use crate::{Common, Failure};

type Out = Result<(), Failure>;

pub const WEAK_PROBES: usize = 64;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::from(PcfError::Format(e.to_string()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Failure::from(PcfError::Format(e.to_string())))
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

/// Noise stored at `path`, checked against any grid given explicitly.
fn load_noise(common: &Common, path: &Path) -> Result<(NoiseEnhancement, DyadicPartition), Failure> {
    let (enh, part) = load_enhancement(&noise_prefix(path), None)?;
    if let [n] = common.n.as_slice() {
        if *n != enh.grid.n {
            return Err(PcfError::ConfigValue {
                key: "n".into(),
                msg: format!("noise file has n = {}", enh.grid.n),
            }
            .into());
        }
    }
    if let Some(mu) = common.mu {
        if mu.to_bits() != enh.grid.mu.to_bits() {
            return Err(PcfError::ConfigValue {
                key: "mu".into(),
                msg: format!("noise file has mu = {}", enh.grid.mu),
            }
            .into());
        }
    }
    Ok((enh, part))
}

/// Configured thresholds with their realized norm, or the probed choice.
fn thresholds(cfg: &RunConfig, enh: &NoiseEnhancement, part: &DyadicPartition) -> pcf_core::Result<ThresholdChoice> {
    match cfg.thresholds()? {
        Some(loc) => {
            loc.validate(part)?;
            let m = Anderson::new(enh, part, loc, cfg.gamma())?;
            let probes = probe_set(part, PROBE_COUNT, PROBE_SEED, cfg.alpha);
            Ok(ThresholdChoice {
                loc,
                realized_norm: m.probe_operator_norm(&probes, None)?,
            })
        }
        None => choose_thresholds(enh, part, cfg.gamma()),
    }
}

pub fn noise(common: &Common, out: &Path) -> Out {
    let cfg = common.resolve()?;
    let grid = cfg.grid()?;
    let part = DyadicPartition::new(grid)?;
    let enh = enhance(grid, cfg.seed, cfg.eps, &part)?;
    save_enhancement(out, &enh)?;
    Ok(())
}

pub fn renorm(common: &Common, eps_list: &[f64], out: Option<&Path>) -> Out {
    let cfg = common.resolve()?;
    let grid = cfg.grid()?;
    let eps: Vec<f64> = if eps_list.is_empty() { vec![cfg.eps] } else { eps_list.to_vec() };
    let rows = eps
        .iter()
        .map(|&e| Ok(vec![f(e), f(renorm_constant(grid, e)?)]))
        .collect::<pcf_core::Result<Vec<_>>>()?;
    let bytes = csv_bytes(&["eps", "C"], rows)?;
    match out {
        Some(p) => write_atomic(p, &bytes)?,
        None => std::io::stdout().write_all(&bytes).map_err(PcfError::from)?,
    }
    Ok(())
}

pub fn gamma(common: &Common, noise: &Path, sharp: &Path, out: &Path) -> Out {
    let cfg = common.resolve()?;
    let (enh, part) = load_noise(common, noise)?;
    let (_, mut s) = read_field(sharp)?;
    if s.grid.n != enh.grid.n {
        return Err(PcfError::GridMismatch(format!("sharp field has n = {}, noise n = {}", s.grid.n, enh.grid.n)).into());
    }
    s.grid = enh.grid;
    let choice = thresholds(&cfg, &enh, &part)?;
    let model = Anderson::new(&enh, &part, choice.loc, cfg.gamma())?;
    let (t, log) = model.gamma_map(&s)?;
    save_triple(out, &t, enh.seed)?;
    write_json(
        &with_suffix(out, "json"),
        &json!({
            "L": choice.loc.l,
            "K": choice.loc.k,
            "realized_contraction": choice.realized_norm,
            "iterations": log.iterations,
            "residual": log.relative_residual,
            "enhancement_id": t.enhancement_id,
        }),
    )?;
    Ok(())
}

pub fn minimize(common: &Common, noise: Option<&Path>, zero_noise: bool, out: &Path) -> Out {
    let cfg = common.resolve()?;
    let nl = cfg.nonlinearity()?;
    let (enh, part) = match noise {
        Some(p) => load_noise(common, p)?,
        None => {
            let grid = cfg.grid()?;
            let part = DyadicPartition::new(grid)?;
            let enh = if zero_noise {
                NoiseEnhancement::zero(grid)
            } else {
                enhance(grid, cfg.seed, cfg.eps, &part)?
            };
            (enh, part)
        }
    };
    let choice = thresholds(&cfg, &enh, &part)?;
    let model = Anderson::new(&enh, &part, choice.loc, cfg.gamma())?;
    let init = band_limited_field(enh.grid, mix(cfg.seed, INIT_STREAM), 1.0);
    let result = descend(&init, &nl, &model, &cfg.descent())?;
    if !result.converged {
        return Err(PcfError::NonConvergence {
            what: "energy descent",
            iterations: result.iterations,
            residual: result.residual,
        }
        .into());
    }
    let t = &result.triple;
    let probes = coercivity_probes(enh.grid, COERCIVITY_PROBES, mix(cfg.seed, COERCIVITY_SEED));
    let coer = coercivity_probe(&model, &probes)?;
    let weak = weak_residual(&model, t, &nl, WEAK_PROBES)?;
    let rows = result.trace.iter().map(|e| vec![e.iter.to_string(), f(e.energy), f(e.grad_norm), f(e.step)]);
    let trace = csv_bytes(&["iter", "E", "grad_norm", "step"], rows)?;
    save_triple(out, t, enh.seed)?;
    write_atomic(&with_suffix(out, "trace.csv"), &trace)?;
    write_json(
        &with_suffix(out, "json"),
        &json!({
            "converged": result.converged,
            "iterations": result.iterations,
            "residual": result.residual,
            "energy": result.final_energy(),
            "weak_residual": weak,
            "c_est": coer.c_est,
            "lambda_est": coer.lambda_est,
            "ground_energy": coer.ground_energy,
            "nl": nl.to_string(),
            "L": choice.loc.l,
            "K": choice.loc.k,
            "realized_contraction": choice.realized_norm,
            "enhancement_id": t.enhancement_id,
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct LadderJson {
    alpha_u: f64,
    alpha_r: f64,
    alpha_sharp: f64,
    r2_min: f64,
    margin: f64,
    ordered: bool,
    window: (i32, i32),
}

/// `report.json` → `report.<ext>`.
fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

pub fn diagnose(common: &Common, triple: &Path, noise: &Path, out: &Path) -> Out {
    let cfg = common.resolve()?;
    let nl = cfg.nonlinearity()?;
    let (enh, part) = load_noise(common, noise)?;
    let side: TripleSidecar = read_json(&with_suffix(triple, "json"))?;
    let mut u = load_triple_u(triple)?;
    GridSpec::ensure_same(&u.grid.clone(), &GridSpec { mu: u.grid.mu, ..enh.grid })?;
    u.grid = enh.grid;
    let loc = pcf_core::LocalizationParams::new(side.l, side.k);
    let model = Anderson::new(&enh, &part, loc, cfg.gamma())?;
    if side.enhancement_id != model.enhancement_id() {
        return Err(PcfError::EnhancementMismatch {
            expected: side.enhancement_id,
            found: model.enhancement_id(),
        }
        .into());
    }
    let t = model.gamma_inverse(&u)?;
    let (ground, _) = ground_state(&enh, mix(enh.seed, COERCIVITY_SEED), 1e-9)?;
    let lambda = (-ground).max(0.0) + 0.1;
    let window = part.ladder_window();
    let lad = ladder_fit(&t, &part, window)?;
    let e = energy(&model, &t, &nl)?;
    let report = json!({
        "n": enh.grid.n,
        "mu": enh.grid.mu,
        "seed": enh.seed,
        "L": loc.l,
        "K": loc.k,
        "enhancement_id": model.enhancement_id(),
        "decomposition_defect": t.decomposition_defect(),
        "remainder_defect": model.remainder_defect(&t)?,
        "energy": e.total,
        "grad_norm": e.grad_norm,
        "weak_residual": weak_residual(&model, &t, &nl, WEAK_PROBES)?,
        "ground_energy": ground,
        "lambda": lambda,
        "l2_ratio": l2_estimate_check(&model, &t, lambda)?,
        "ladder": LadderJson {
            alpha_u: lad.alpha_u,
            alpha_r: lad.alpha_r,
            alpha_sharp: lad.alpha_sharp,
            r2_min: lad.r2_min,
            margin: cfg.margin,
            ordered: lad.ordered(cfg.margin),
            window,
        },
    });
    let (a, k) = (cfg.alpha, cfg.kappa);
    let noise_window = part.fit_window();
    let fields: [(&str, &RealField, Vec<(f64, Lp)>, (i32, i32)); 6] = [
        ("u", &t.u, vec![(a, Lp::Inf), (a, Lp::Two)], window),
        ("remainder", &t.remainder, vec![(2.0 * a, Lp::Inf)], window),
        ("sharp", &t.sharp, vec![(3.0 * a, Lp::Inf), (1.0, Lp::Two), (2.0, Lp::Two)], window),
        ("xi", &enh.xi, vec![(-1.0 - k, Lp::Inf)], noise_window),
        ("theta", &enh.theta, vec![(1.0 - k, Lp::Inf)], noise_window),
        ("wick", &enh.wick_area, vec![(-2.0 * k, Lp::Inf)], noise_window),
    ];
    let mut norms = vec![];
    let mut fits = vec![];
    for (id, field, idx, (lo, hi)) in &fields {
        for &(alpha, p) in idx {
            let v = besov_norm(field, BesovIndex { alpha, p, q: p }, &part);
            norms.push(vec![id.to_string(), f(alpha), p.to_string(), p.to_string(), f(v)]);
        }
        for p in [Lp::Two, Lp::Inf] {
            let fit = block_decay_fit(field, p, &part, *lo, *hi)?;
            fits.push(vec![
                id.to_string(),
                p.to_string(),
                lo.to_string(),
                hi.to_string(),
                f(fit.slope),
                f(fit.r2),
            ]);
        }
    }
    let norms = csv_bytes(&["field_id", "alpha", "p", "q", "value"], norms)?;
    let fits = csv_bytes(&["field_id", "p", "j_lo", "j_hi", "slope", "r2"], fits)?;
    write_json(out, &report)?;
    write_atomic(&sibling(out, "norms.csv"), &norms)?;
    write_atomic(&sibling(out, "fits.csv"), &fits)?;
    Ok(())
}

pub fn sweep(common: &Common, root_seed: u64, count: usize, out: &Path) -> Out {
    if count == 0 {
        return Err(Failure::usage("--count must be positive"));
    }
    let n_list = if common.n.is_empty() { vec![64, 128, 256] } else { common.n.clone() };
    check_n_list(&n_list)?;
    let cfg = Common {
        n: vec![n_list[0]],
        ..common.clone()
    }
    .resolve()?;
    let nl = cfg.nonlinearity()?;
    let sc = SweepConfig {
        mu: cfg.mu,
        eps: cfg.eps,
        gamma: cfg.gamma(),
        descent: cfg.descent(),
    };
    let rows = resolution_sweep(root_seed, count, &n_list, &nl, &sc)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| PcfError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| PcfError::Format(e.to_string()))?;
    let ladder = cfg.ladder();
    let per_n: Vec<_> = n_list
        .iter()
        .map(|&n| {
            let at: Vec<_> = rows.iter().filter(|r| r.n == n).collect();
            let ordered = at
                .iter()
                .filter(|r| {
                    LadderFit {
                        alpha_u: r.alpha_u,
                        alpha_r: r.alpha_r,
                        alpha_sharp: r.alpha_sharp,
                        r2_min: r.r2_min,
                    }
                    .ordered(ladder.margin)
                })
                .count();
            json!({
                "n": n,
                "ordered_fraction": ordered as f64 / at.len() as f64,
                "r2_min": at.iter().map(|r| r.r2_min).fold(f64::INFINITY, f64::min),
                "max_contraction_norm": at.iter().map(|r| r.contraction_norm).fold(0.0, f64::max),
                "all_converged": at.iter().all(|r| r.converged),
            })
        })
        .collect();
    write_atomic(out, &bytes)?;
    write_json(
        &sibling(out, "json"),
        &json!({
            "root_seed": root_seed,
            "count": count,
            "n": n_list,
            "nl": nl.to_string(),
            "margin": ladder.margin,
            "max_l2_growth": max_l2_growth(&rows),
            "per_n": per_n,
        }),
    )?;
    Ok(())
}
