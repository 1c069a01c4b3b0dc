use proptest::prelude::*;
use zyglab::kernels::KernelSpec;
use zyglab::operators::{commutator_apply, CommutatorSpec};
use zyglab::weights::{ap_z_characteristic, bmo_z_norm, RectangleFamily};
use zyglab::{is_zygmund, zygmund_dilate, Grid3, ScalarField3, ZygmundRectangle};

fn field(g: Grid3, vals: &[f64]) -> ScalarField3 {
    ScalarField3::new(g, vals.to_vec()).unwrap()
}

fn cube8() -> Grid3 {
    Grid3::cube(8.0, 8).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn dilations_keep_rectangles_zygmund(l1 in 0.1f64..4.0, l2 in 0.1f64..4.0, s in 0.1f64..8.0, t in 0.1f64..8.0) {
        let r = ZygmundRectangle::from_base([0.0; 3], l1, l2).unwrap();
        let d = zygmund_dilate(r.sides, s, t).unwrap();
        prop_assert!(is_zygmund(d, 1e-10).unwrap());
    }

    #[test]
    fn bmo_is_a_seminorm(vals in prop::collection::vec(-1.0f64..1.0, 512), a in -3.0f64..3.0, c in -5.0f64..5.0) {
        let g = cube8();
        let fam = RectangleFamily::translated_dyadic(&g).unwrap();
        let b = field(g, &vals);
        let (n, _) = bmo_z_norm(&b, &fam).unwrap();
        let (m, _) = bmo_z_norm(&b.map(|v| a * v + c).unwrap(), &fam).unwrap();
        prop_assert!((m - a.abs() * n).abs() <= 1e-10 * (1.0 + n));
    }

    #[test]
    fn ap_characteristic_is_scale_free_and_at_least_one(
        vals in prop::collection::vec(-1.0f64..1.0, 512),
        lambda in 0.1f64..10.0,
        p in 1.2f64..4.0,
    ) {
        let g = cube8();
        let fam = RectangleFamily::dyadic(&g).unwrap();
        let w = field(g, &vals).map(f64::exp).unwrap();
        let a = ap_z_characteristic(&w, p, &fam).unwrap().value;
        let b = ap_z_characteristic(&w.scale(lambda), p, &fam).unwrap().value;
        prop_assert!(a >= 1.0 - 1e-12);
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn commutator_is_linear_in_the_symbol(
        b1 in prop::collection::vec(-1.0f64..1.0, 512),
        b2 in prop::collection::vec(-1.0f64..1.0, 512),
        f in prop::collection::vec(-1.0f64..1.0, 512),
        c in -2.0f64..2.0,
    ) {
        let g = cube8();
        let kernel = KernelSpec::nagel_wainger_on(&g);
        let (b1, b2, f) = (field(g, &b1), field(g, &b2), field(g, &f));
        let apply = |b: ScalarField3| commutator_apply(&CommutatorSpec { kernel: kernel.clone(), symbols: vec![b] }, &f).unwrap();
        let lhs = apply(b1.add(&b2.scale(c)).unwrap());
        let rhs = apply(b1.clone()).add(&apply(b2.clone()).scale(c)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-10 * (1.0 + rhs.max_abs()));
        // adding a constant to the symbol changes nothing
        let shifted = apply(b1.map(|v| v + c).unwrap());
        prop_assert!(shifted.sub(&apply(b1)).unwrap().max_abs() <= 1e-10 * (1.0 + shifted.max_abs()));
    }
}
