use std::sync::Arc;

use proptest::prelude::*;
use valdesign::transport::{omega2, Grid, RegionMean, TransportModel, VelocityField, K0};
use valdesign::ModelFunctional;

fn small() -> TransportModel {
    let grid = Grid::new(24, 10, 5.0, 2.0).unwrap();
    let v = VelocityField::poiseuille(&grid, 1.0);
    TransportModel::new(grid, v).unwrap()
}

#[test]
fn adjoint_gradient_matches_differences_in_every_parameter() {
    let model = small();
    let x = [0.9, 0.5, 1.5];
    let (_, g) = model.value_and_gradient(&x, K0, &omega2()).unwrap();
    let f = |x: &[f64], k: f64| model.mean_concentration(&model.solve(x, k).unwrap(), &omega2()).unwrap();
    for i in 0..4 {
        let h = 1e-5;
        let (mut p, mut m) = ((x, K0), (x, K0));
        if i < 3 {
            p.0[i] += h;
            m.0[i] -= h;
        } else {
            p.1 += h;
            m.1 -= h;
        }
        let fd = (f(&p.0, p.1) - f(&m.0, m.1)) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-8), "{i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn functional_reports_adjoint_gradient() {
    let model = Arc::new(small());
    let q = RegionMean::qoi2(model);
    assert_eq!(q.gradient_source(), valdesign::GradientSource::Adjoint);
    assert_eq!(q.gradient(&[0.9, 0.5, 1.5], &[K0], &[]).unwrap().len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maximum_principle(z0 in 0.1f64..1.9, l in 0.05f64..1.0, c in 0.1f64..10.0, k in -7.0f64..-2.0) {
        let model = small();
        let field = model.solve(&[z0, l, c], k).unwrap();
        prop_assert!(field.phi.iter().all(|v| *v >= -1e-12 * c && *v <= c * (1.0 + 1e-12)));
    }
}
