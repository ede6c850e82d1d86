use pcf_core::anderson::{Anderson, GammaConfig};
use pcf_core::besov::{BlockStack, DyadicPartition};
use pcf_core::config::RunConfig;
use pcf_core::io::{decode_field, encode_field, FieldKind};
use pcf_core::noise::{band_limited_field, enhance, mix, sample_white_noise_spectral};
use pcf_core::paracalc::{commutator_c, localize, para_gt, para_lt, resonant, trilinear_d, LocalizationParams};
use pcf_core::variational::{bilinear_b, direct_form, energy, Nonlinearity};
use pcf_core::{Axis, GridSpec, Lp, RealField};
use proptest::prelude::*;

fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, 1.0).unwrap()
}

fn rel(a: &RealField, b: &RealField) -> f64 {
    (a - b).norm_l2() / b.norm_l2().max(1e-300)
}

fn ip(a: &RealField, b: &RealField) -> f64 {
    a.inner(b).unwrap()
}

fn sizes() -> impl Strategy<Value = usize> {
    prop_oneof![Just(16usize), Just(32), Just(64)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(n in sizes(), seed in any::<u64>(), decay in 0.0f64..2.0) {
        let f = band_limited_field(grid(n), seed, decay);
        let s = f.spectral().energy();
        let x = ip(&f, &f);
        prop_assert!((s - x).abs() <= 1e-12 * x);
    }

    #[test]
    fn l_and_derivatives_are_symmetric(n in sizes(), a in any::<u64>(), b in any::<u64>()) {
        let g = grid(n);
        let f = band_limited_field(g, a, 1.0);
        let h = band_limited_field(g, b, 1.0);
        let (l, r) = (ip(&f.apply_l(), &h), ip(&f, &h.apply_l()));
        prop_assert!((l - r).abs() <= 1e-10 * (l.abs() + f.apply_l().norm_l2() * h.norm_l2()));
        for axis in [Axis::X1, Axis::X2] {
            let (l, r) = (ip(&f.derivative(axis), &h), -ip(&f, &h.derivative(axis)));
            prop_assert!((l - r).abs() <= 1e-10 * (l.abs() + f.derivative(axis).norm_l2() * h.norm_l2()));
        }
    }

    #[test]
    fn dealias_is_orthogonal_projection(n in sizes(), a in any::<u64>(), b in any::<u64>()) {
        let g = grid(n);
        let f = sample_white_noise_spectral(g, a).fft_inverse();
        let h = sample_white_noise_spectral(g, b).fft_inverse();
        let (l, r) = (ip(&f.dealias(), &h), ip(&f, &h.dealias()));
        prop_assert!((l - r).abs() <= 1e-12 * f.norm_l2() * h.norm_l2());
        prop_assert!(rel(&f.dealias().dealias(), &f.dealias()) < 1e-14);
    }

    #[test]
    fn blocks_reassemble_and_are_almost_orthogonal(n in sizes(), a in any::<u64>(), b in any::<u64>()) {
        let g = grid(n);
        let p = DyadicPartition::new(g).unwrap();
        let f = sample_white_noise_spectral(g, a).fft_inverse();
        let h = sample_white_noise_spectral(g, b).fft_inverse();
        let (fs, hs) = (BlockStack::new(&f, &p), BlockStack::new(&h, &p));
        let mut sum = RealField::zeros(g);
        for j in -1..=p.j_max {
            sum += fs.block(j);
        }
        prop_assert!(rel(&sum, &f) <= 1e-12);
        for i in -1..=p.j_max {
            for j in (i + 2)..=p.j_max {
                let d = ip(fs.block(i), hs.block(j));
                prop_assert!(d.abs() <= 1e-14 * f.norm_l2() * h.norm_l2(), "blocks {i},{j}: {d}");
            }
        }
    }

    #[test]
    fn bony_reassembly(n in sizes(), a in any::<u64>(), b in any::<u64>(), da in 0.0f64..2.0, db in 0.0f64..2.0) {
        let g = grid(n);
        let p = DyadicPartition::new(g).unwrap();
        let f = band_limited_field(g, a, da);
        let h = band_limited_field(g, b, db);
        let mut bony = para_lt(&f, &h, &p).unwrap();
        bony += &resonant(&f, &h, &p).unwrap();
        bony += &para_gt(&f, &h, &p).unwrap();
        prop_assert!(rel(&bony, &f.product(&h)) <= 1e-10);
    }

    #[test]
    fn products_are_multilinear(n in sizes(), s in any::<u64>(), c in -3.0f64..3.0) {
        let g = grid(n);
        let p = DyadicPartition::new(g).unwrap();
        let [f1, f2, h, k] = [0u64, 1, 2, 3].map(|i| band_limited_field(g, mix(s, i), 1.0));
        let mut comb = f1.clone();
        comb.axpy(c, &f2);
        type Bi = fn(&RealField, &RealField, &DyadicPartition) -> pcf_core::Result<RealField>;
        for op in [para_lt as Bi, para_gt, resonant] {
            let mut want = op(&f1, &h, &p).unwrap();
            want.axpy(c, &op(&f2, &h, &p).unwrap());
            prop_assert!(rel(&op(&comb, &h, &p).unwrap(), &want) <= 1e-12);
            let mut want = op(&h, &f1, &p).unwrap();
            want.axpy(c, &op(&h, &f2, &p).unwrap());
            prop_assert!(rel(&op(&h, &comb, &p).unwrap(), &want) <= 1e-12);
        }
        let mut want = commutator_c(&f1, &h, &k, &p).unwrap();
        want.axpy(c, &commutator_c(&f2, &h, &k, &p).unwrap());
        let got = commutator_c(&comb, &h, &k, &p).unwrap();
        prop_assert!((&got - &want).norm_l2() <= 1e-12 * (want.norm_l2() + f1.norm_l2() * h.norm_l2() * k.norm_l2()));
        let d = trilinear_d(&f1, &h, &k, &p).unwrap() + c * trilinear_d(&f2, &h, &k, &p).unwrap();
        let dc = trilinear_d(&comb, &h, &k, &p).unwrap();
        prop_assert!((d - dc).abs() <= 1e-12 * comb.norm_l2() * h.norm_l2() * k.norm_l2());
    }

    #[test]
    fn trilinear_d_is_its_definition(n in sizes(), s in any::<u64>()) {
        let g = grid(n);
        let p = DyadicPartition::new(g).unwrap();
        let [f, h, k] = [0u64, 1, 2].map(|i| band_limited_field(g, mix(s, i), 0.5));
        let want = ip(&f, &resonant(&k, &h, &p).unwrap()) - ip(&para_lt(&f, &h, &p).unwrap(), &k);
        let got = trilinear_d(&f, &h, &k, &p).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * f.norm_l2() * h.norm_l2() * k.norm_l2());
    }

    #[test]
    fn localization_splits_exactly(n in sizes(), s in any::<u64>(), t in -1i32..8) {
        let g = grid(n);
        let p = DyadicPartition::new(g).unwrap();
        let t = t.min(p.j_max);
        let f = sample_white_noise_spectral(g, s).fft_inverse();
        let (lo, hi) = localize(&f, t, &p).unwrap();
        let back = &lo + &hi;
        prop_assert!((&back - &f.spectral().fft_inverse()).lp_norm(Lp::Inf) <= 4.0 * f64::EPSILON * f.lp_norm(Lp::Inf));
    }

    #[test]
    fn triples_decompose(s in any::<u64>(), l in -1i32..3, k in -1i32..3) {
        let g = grid(32);
        let p = DyadicPartition::new(g).unwrap();
        let enh = enhance(g, s, 0.0, &p).unwrap();
        let m = Anderson::new(&enh, &p, LocalizationParams::new(l, k), GammaConfig::default()).unwrap();
        let u = band_limited_field(g, mix(s, 1), 1.0);
        let t = m.gamma_inverse(&u).unwrap();
        prop_assert!(t.decomposition_defect() <= 1e-10);
    }

    #[test]
    fn energy_splits_and_forms_agree(s in any::<u64>(), c3 in 0.0f64..2.0) {
        let g = grid(32);
        let p = DyadicPartition::new(g).unwrap();
        let enh = enhance(g, s, 0.0, &p).unwrap();
        let m = Anderson::new(&enh, &p, LocalizationParams::new(0, 0), GammaConfig::default()).unwrap();
        let u = band_limited_field(g, mix(s, 1), 1.0);
        let v = band_limited_field(g, mix(s, 2), 1.0);
        let (tu, tv) = (m.gamma_inverse(&u).unwrap(), m.gamma_inverse(&v).unwrap());
        let e = energy(&m, &tu, &Nonlinearity::cubic_minus(c3)).unwrap();
        prop_assert!((e.total - (e.quadratic + e.nonlinear)).abs() <= 1e-10 * e.total.abs().max(1e-300));
        let b = bilinear_b(&m, &tv, &tu).unwrap();
        let bt = bilinear_b(&m, &tu, &tv).unwrap();
        let d = direct_form(&enh, &v, &u).unwrap();
        let scale = d.abs() + u.norm_l2() * v.norm_l2();
        prop_assert!((b - d).abs() <= 1e-6 * scale);
        prop_assert!((b - bt).abs() <= 1e-6 * (b.abs() + u.norm_l2() * v.norm_l2()));
    }

    #[test]
    fn pcf1_round_trip(n in sizes(), seed in any::<u64>(), mu in 0.01f64..10.0, tag in 0u8..6) {
        let f = RealField::from_values(
            GridSpec::new(n, mu).unwrap(),
            sample_white_noise_spectral(grid(n), seed).fft_inverse().values,
        ).unwrap();
        let kind = FieldKind::from_tag(tag).unwrap();
        let bytes = encode_field(&f, seed, kind);
        let (h, g) = decode_field(&bytes).unwrap();
        prop_assert_eq!((h.n, h.mu.to_bits(), h.seed, h.kind), (n, mu.to_bits(), seed, kind));
        prop_assert!(f.values.iter().zip(&g.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_field(&g, seed, kind), bytes);
    }

    #[test]
    fn config_round_trip(log_n in 3u32..9, mu in 0.01f64..10.0, seed in any::<u64>(), eps in 0.0f64..1.0,
                         alpha in 0.67f64..0.99, frac in 0.01f64..0.99) {
        let cfg = RunConfig {
            n: 1 << log_n,
            mu,
            seed,
            eps,
            alpha,
            kappa: frac * (1.0 - alpha),
            ..RunConfig::default()
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
