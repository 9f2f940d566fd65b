use bcenhance::losses::*;
use bcenhance_nn::gradcheck::{check_gradients, GradCheckOptions};
use bcenhance_nn::{Graph, NnError, Result as NnResult, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LS: AdversarialForm = AdversarialForm::LeastSquares;
const NLL: AdversarialForm = AdversarialForm::NegativeLogLikelihood;

#[test]
fn cycle_and_identity_examples() {
    assert_eq!(l1_value(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    assert_eq!(l1_value(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
    assert_eq!(l1_value(&[2.0], &[5.0]).unwrap(), 3.0);
    assert!(l1_value(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn least_squares_examples() {
    assert_eq!(adv_d_value(&[1.0], &[0.0], LS).unwrap(), 0.0);
    assert_eq!(adv_g_value(&[0.0], LS).unwrap(), 1.0);
    assert_eq!(adv_d_value(&[0.5], &[0.5], LS).unwrap(), 0.5);
    let (adc, add) = dual_adv_value(&[0.0], &[0.0], LS).unwrap();
    assert_eq!(adc + add, 2.0);
    let (_, add) = dual_adv_value(&[0.3], &[0.5], LS).unwrap();
    assert_eq!(add, 0.25);
    let (adc, add) = dual_adv_value(&[0.7, 0.2], &[0.7, 0.2], LS).unwrap();
    assert_eq!(adc, add);
}

#[test]
fn nll_example() {
    let d = adv_d_value(&[0.5], &[0.5], NLL).unwrap();
    assert!((d - (-(0.25f64.ln()))).abs() < 1e-15);
    assert!((d - 1.386).abs() < 1e-3);
}

#[test]
fn total_objective_examples() {
    let w = LossWeights::default();
    assert_eq!((w.lambda_cyc, w.lambda_id), (10.0, 5.0));
    let parts = LossParts {
        adc: Some(1.0),
        add: Some(1.0),
        cyc: Some(0.2),
        id: Some(0.1),
        ..Default::default()
    };
    assert_eq!(total_objective(&parts, &w, Variant::Dual).unwrap(), 4.5);

    let zero = LossWeights {
        lambda_cyc: 0.0,
        lambda_id: 0.0,
        ..w
    };
    assert_eq!(total_objective(&parts, &zero, Variant::Dual).unwrap(), 2.0);

    let dual = LossParts {
        adc: Some(0.7),
        add: Some(0.0),
        cyc: Some(0.3),
        id: Some(0.05),
        ..Default::default()
    };
    let base = LossParts {
        adv: Some(0.7),
        cyc: Some(0.3),
        id: Some(0.05),
        ..Default::default()
    };
    assert_eq!(
        total_objective(&dual, &w, Variant::Dual).unwrap(),
        total_objective(&base, &w, Variant::Baseline).unwrap()
    );
    assert!(total_objective(&base, &w, Variant::Dual).is_err());
    assert!(total_objective(&dual, &w, Variant::Baseline).is_err());
}

#[test]
fn form_parsing() {
    assert_eq!("least_squares".parse::<AdversarialForm>().unwrap(), LS);
    assert_eq!("nll".parse::<AdversarialForm>().unwrap(), NLL);
    assert!("hinge".parse::<AdversarialForm>().is_err());
    assert!("triple".parse::<Variant>().is_err());
}

#[test]
fn generator_ls_gradient_closed_form() {
    let s = [0.2, 0.9, 0.55];
    let mut g = Graph::new();
    let v = g.leaf(
        Tensor::new(&[3], s.to_vec())
            .unwrap()
            .with_requires_grad(true),
    );
    let loss = adv_g_loss(&mut g, v, LS);
    g.backward(loss).unwrap();
    for (gi, si) in g.grad(v).unwrap().iter().zip(s) {
        assert!((gi - 2.0 * (si - 1.0) / 3.0).abs() < 1e-15);
    }
}

fn nn(e: bcenhance::Error) -> NnError {
    NnError::Usage(e.to_string())
}

fn t(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap().with_requires_grad(true)
}

#[test]
fn loss_gradients_match_finite_differences() {
    let opts = GradCheckOptions::default();
    let tol = 1e-4;
    let cases: Vec<(
        &str,
        Vec<Tensor>,
        Box<dyn Fn(&mut Graph, &[Var]) -> NnResult<Var>>,
    )> = vec![
        (
            "cycle",
            vec![t(&[4, 6], 1, -2.0, 2.0), t(&[4, 6], 2, -2.0, 2.0)],
            Box::new(|g, v| cycle_loss(g, v[0], v[1]).map_err(nn)),
        ),
        (
            "identity",
            vec![t(&[4, 6], 3, -2.0, 2.0), t(&[4, 6], 4, -2.0, 2.0)],
            Box::new(|g, v| identity_loss(g, v[0], v[1]).map_err(nn)),
        ),
        (
            "adv_d_ls",
            vec![t(&[5], 5, 0.05, 0.95), t(&[5], 6, 0.05, 0.95)],
            Box::new(|g, v| adv_d_loss(g, v[0], Some(v[1]), LS).map_err(nn)),
        ),
        (
            "adv_g_ls",
            vec![t(&[5], 7, 0.05, 0.95)],
            Box::new(|g, v| Ok(adv_g_loss(g, v[0], LS))),
        ),
        (
            "adv_d_nll",
            vec![t(&[5], 8, 0.05, 0.95), t(&[5], 9, 0.05, 0.95)],
            Box::new(|g, v| adv_d_loss(g, v[0], Some(v[1]), NLL).map_err(nn)),
        ),
        (
            "adv_g_nll",
            vec![t(&[5], 10, 0.05, 0.95)],
            Box::new(|g, v| Ok(adv_g_loss(g, v[0], NLL))),
        ),
        (
            "total_dual",
            vec![
                t(&[3], 11, 0.05, 0.95),
                t(&[6], 12, 0.05, 0.95),
                t(&[2, 4], 13, -1.0, 1.0),
                t(&[2, 4], 14, -1.0, 1.0),
                t(&[2, 4], 15, -1.0, 1.0),
            ],
            Box::new(|g, v| {
                let (adc, add) = dual_adv_losses(g, v[0], v[1], LS);
                let cyc = cycle_loss(g, v[2], v[3]).map_err(nn)?;
                let id = identity_loss(g, v[2], v[4]).map_err(nn)?;
                let parts = LossParts {
                    adc: Some(adc),
                    add: Some(add),
                    cyc: Some(cyc),
                    id: Some(id),
                    ..Default::default()
                };
                total_objective_graph(g, &parts, &LossWeights::default(), Variant::Dual).map_err(nn)
            }),
        ),
        (
            "total_baseline",
            vec![
                t(&[3], 16, 0.05, 0.95),
                t(&[2, 4], 17, -1.0, 1.0),
                t(&[2, 4], 18, -1.0, 1.0),
                t(&[2, 4], 19, -1.0, 1.0),
            ],
            Box::new(|g, v| {
                let adv = adv_g_loss(g, v[0], LS);
                let cyc = cycle_loss(g, v[1], v[2]).map_err(nn)?;
                let id = identity_loss(g, v[1], v[3]).map_err(nn)?;
                let parts = LossParts {
                    adv: Some(adv),
                    cyc: Some(cyc),
                    id: Some(id),
                    ..Default::default()
                };
                total_objective_graph(g, &parts, &LossWeights::default(), Variant::Baseline)
                    .map_err(nn)
            }),
        ),
    ];
    for (name, inputs, build) in cases {
        let report = check_gradients(&inputs, |g, v| build(g, v), opts.clone()).unwrap();
        assert!(report.max_relative_error < tol, "{name}: {report:?}");
    }
}

proptest! {
    #[test]
    fn ls_losses_nonnegative(real in prop::collection::vec(0.0f64..1.0, 1..8), fake in prop::collection::vec(0.0f64..1.0, 1..8)) {
        prop_assert!(adv_d_value(&real, &fake, LS).unwrap() >= 0.0);
        prop_assert!(adv_g_value(&fake, LS).unwrap() >= 0.0);
    }

    #[test]
    fn l1_homogeneous_and_triangle(
        x in prop::collection::vec(-5.0f64..5.0, 6),
        y in prop::collection::vec(-5.0f64..5.0, 6),
        z in prop::collection::vec(-5.0f64..5.0, 6),
        c in -3.0f64..3.0,
    ) {
        let base = l1_value(&x, &y).unwrap();
        prop_assert!(base >= 0.0);
        let sx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let sy: Vec<f64> = y.iter().map(|v| c * v).collect();
        prop_assert!((l1_value(&sx, &sy).unwrap() - c.abs() * base).abs() < 1e-12);
        // |x - y| <= |x - z| + |z - y|
        prop_assert!(base <= l1_value(&x, &z).unwrap() + l1_value(&z, &y).unwrap() + 1e-12);
    }

    #[test]
    fn total_linear_in_parts(adc in 0.0f64..2.0, add in 0.0f64..2.0, cyc in 0.0f64..2.0, id in 0.0f64..2.0, delta in -1.0f64..1.0) {
        let w = LossWeights::default();
        let p = LossParts { adc: Some(adc), add: Some(add), cyc: Some(cyc), id: Some(id), ..Default::default() };
        let q = LossParts { cyc: Some(cyc + delta), ..p };
        let diff = total_objective(&q, &w, Variant::Dual).unwrap() - total_objective(&p, &w, Variant::Dual).unwrap();
        prop_assert!((diff - w.lambda_cyc * delta).abs() < 1e-12);
    }
}
