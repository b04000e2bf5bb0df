use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use sgtr::config::{ProjectConfig, PRESETS};
use sgtr::format::fmt_sig;
use sgtr::linalg::{self, vec_cols, CMatrix};
use sgtr::lti::{eval_transfer, StateSpaceModel};
use sgtr::servo::{Exosystem, ServoCompensator, SpectralData};
use sgtr::sslg::{build_m, sslg_apply_data, sslg_apply_model, FrequencyData, FrequencySample, Provenance};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn frequencies(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..5.0, 0..=max_len).prop_filter_map("distinct frequencies", |mut w| {
        w.sort_by(f64::total_cmp);
        w.windows(2).all(|p| p[1] - p[0] > 1e-2 * p[1]).then_some(w)
    })
}

/// Stable plant with `n` states, `m` inputs and `r <= m` outputs.
fn plant() -> impl Strategy<Value = StateSpaceModel> {
    (1usize..=6, 1usize..=3)
        .prop_flat_map(|(n, m)| (Just(n), Just(m), 1..=m))
        .prop_flat_map(|(n, m, r)| (matrix(n, n), matrix(n, m), matrix(r, n), matrix(r, m), 0.05f64..1.0))
        .prop_map(|(a, b, c, d, margin)| {
            let n = a.nrows();
            let shift = linalg::spectral_abscissa(&a).unwrap() + margin;
            StateSpaceModel::new_stable(a - DMatrix::identity(n, n) * shift, b, c, d).unwrap()
        })
}

fn case() -> impl Strategy<Value = (StateSpaceModel, Exosystem, DMatrix<f64>, DMatrix<f64>)> {
    (plant(), frequencies(3)).prop_flat_map(|(p, w)| {
        let exo = Exosystem::new(w).unwrap();
        let shape = (p.m(), p.r() * exo.q());
        (Just(p), Just(exo), matrix(shape.0, shape.1), matrix(shape.0, shape.1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn data_and_model_operators_agree((p, exo, f, _) in case()) {
        let fd = FrequencyData::analytic(&p, &exo).unwrap();
        let servo = ServoCompensator::new(&exo, p.r()).unwrap();
        let data = sslg_apply_data(&fd, &SpectralData::new(&exo), &f).unwrap();
        let model = sslg_apply_model(&p, &servo, &f).unwrap();
        prop_assert!((&data - &model).norm() <= 1e-8 * model.norm().max(1e-12));
    }

    #[test]
    fn operator_matrix_matches_operator((p, exo, f, _) in case()) {
        let fd = FrequencyData::analytic(&p, &exo).unwrap();
        let spec = SpectralData::new(&exo);
        let op = build_m(&fd, &spec).unwrap();
        let direct = vec_cols(&sslg_apply_data(&fd, &spec, &f).unwrap());
        let via_m = op.matrix() * vec_cols(&f);
        prop_assert!((&direct - &via_m).norm() <= 1e-10 * (1.0 + direct.norm()));
    }

    #[test]
    fn operator_is_linear((p, exo, f, g) in case(), a in -3.0f64..3.0) {
        let fd = FrequencyData::analytic(&p, &exo).unwrap();
        let spec = SpectralData::new(&exo);
        let lhs = sslg_apply_data(&fd, &spec, &(&f * a + &g)).unwrap();
        let rhs = sslg_apply_data(&fd, &spec, &f).unwrap() * a + sslg_apply_data(&fd, &spec, &g).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn transfer_is_conjugate_symmetric(p in plant(), w in 0.01f64..10.0) {
        let plus = eval_transfer(&p, Complex64::new(0.0, w)).unwrap();
        let minus = eval_transfer(&p, Complex64::new(0.0, -w)).unwrap();
        prop_assert!((&plus - linalg::conj(&minus)).norm() <= 1e-12 * (1.0 + plus.norm()));
    }

    #[test]
    fn projectors_resolve_identity(w in frequencies(5)) {
        let exo = Exosystem::new(w).unwrap();
        let spec = SpectralData::new(&exo);
        let q = exo.q();
        let mut sum = spec.projector(0).clone();
        for k in 1..spec.len() {
            let x = spec.projector(k);
            sum += x + linalg::conj(x);
            prop_assert!((x * x - x).norm() <= 1e-12);
            // phi v = lambda v
            let phi = linalg::to_complex(ServoCompensator::new(&exo, 1).unwrap().phi());
            let v = spec.right(k);
            prop_assert!((&phi * v - v * spec.eigenvalue(k)).norm() <= 1e-12 * (1.0 + v.norm()));
        }
        prop_assert!((sum - CMatrix::identity(q, q)).norm() <= 1e-12);
    }

    #[test]
    fn frequency_data_toml_round_trip_is_exact((p, exo, _, _) in case()) {
        let fd = FrequencyData::analytic(&p, &exo).unwrap();
        let back = FrequencyData::from_toml(&fd.to_toml()).unwrap();
        prop_assert_eq!(back, fd);
    }

    #[test]
    fn twelve_digit_formatting_round_trips(x in -1e15f64..1e15) {
        let back: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-12 * x.abs());
    }
}

#[test]
fn identified_provenance_survives_round_trip() {
    let fd = FrequencyData::new(
        DMatrix::from_element(1, 1, 0.1 + 0.2),
        vec![FrequencySample {
            omega: 0.3,
            response: CMatrix::from_element(1, 1, Complex64::new(1.0 / 3.0, -2.0 / 7.0)),
        }],
        Provenance::Identified,
    )
    .unwrap();
    let text = fd.to_toml();
    assert!(text.starts_with("# frequency response samples (identified provenance)\n"));
    assert_eq!(FrequencyData::from_toml(&text).unwrap(), fd);
}

#[test]
fn preset_configs_round_trip() {
    for name in PRESETS {
        let cfg = ProjectConfig::preset(name).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = ProjectConfig::from_toml(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml().unwrap(), text);
    }
}
