use proptest::prelude::*;

use leibniz_core::coderivative::{coderivative_polyhedral_graph, SliceKind};
use leibniz_core::geometry::{
    hausdorff_distance, weighted_minkowski, PolyhedralUnion, Polyhedron, Polytope,
};
use leibniz_core::linalg::vector;
use leibniz_core::report::{emit_report, parse_structured, round12, Format, Record, Report};
use leibniz_core::Verdict;

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![
        Just(Verdict::Holds),
        Just(Verdict::HoldsOnGrid),
        Just(Verdict::Violated),
        Just(Verdict::Inconclusive),
        Just(Verdict::PreconditionFailed),
    ]
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => (-1e6f64..1e6).prop_map(round12),
        1 => Just(f64::INFINITY),
        1 => Just(0.0),
    ]
}

fn text() -> impl Strategy<Value = String> {
    "[ -~\t\n]{0,24}"
}

fn record() -> impl Strategy<Value = Record> {
    (
        ("[a-z_]{1,12}", proptest::option::of(verdict())),
        proptest::option::of(proptest::collection::vec(verdict(), 1..3)),
        (
            proptest::option::of(number()),
            proptest::option::of(number()),
            proptest::option::of(number()),
            proptest::option::of(number()),
        ),
        proptest::collection::vec(("[a-z0-9]{1,4}", number()), 0..3),
        proptest::collection::vec((number(), number()), 0..3),
        proptest::option::of(any::<bool>()),
        (
            proptest::option::of(text()),
            proptest::option::of(text()),
            proptest::option::of(text()),
        ),
    )
        .prop_map(
            |(
                (id, verdict),
                expected,
                (mv, rv, tol, modulus),
                moduli,
                levels,
                exact,
                (witness, grid, note),
            )| Record {
                id,
                verdict,
                expected,
                max_violation: mv,
                reverse_violation: rv,
                tolerance: tol,
                modulus,
                moduli,
                levels,
                exact,
                witness,
                grid,
                note,
            },
        )
}

proptest! {
    #[test]
    fn structured_report_round_trips(
        scenario in "[a-z_]{1,10}",
        seed in any::<u64>(),
        records in proptest::collection::vec(record(), 0..4),
    ) {
        let report = Report { scenario, seed, records };
        let text = emit_report(&report, Format::Structured);
        let back = parse_structured(&text).unwrap();
        prop_assert_eq!(&back, &report);
        prop_assert_eq!(emit_report(&back, Format::Structured), text);
    }

    #[test]
    fn interval_minkowski_matches_endpoint_arithmetic(
        a in -5.0f64..5.0, la in 0.0f64..3.0,
        b in -5.0f64..5.0, lb in 0.0f64..3.0,
        wa in 0.1f64..3.0, wb in 0.1f64..3.0,
    ) {
        let ia = Polytope::interval(a, a + la);
        let ib = Polytope::interval(b, b + lb);
        let sum = weighted_minkowski(&[(wa, &ia), (wb, &ib)]).unwrap();
        let want = Polytope::interval(wa * a + wb * b, wa * (a + la) + wb * (b + lb));
        prop_assert!(hausdorff_distance(Some(&sum), Some(&want)).unwrap() <= 1e-9);
    }

    #[test]
    fn hausdorff_is_symmetric_and_satisfies_triangle(
        pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 9),
    ) {
        let poly = |k: usize| {
            Polytope::new(pts[3 * k..3 * k + 3].iter().map(|(x, y)| vector(&[*x, *y])).collect()).unwrap()
        };
        let (p, q, r) = (poly(0), poly(1), poly(2));
        let d = |a: &Polytope, b: &Polytope| hausdorff_distance(Some(a), Some(b)).unwrap();
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-9);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
        prop_assert!(d(&p, &p) <= 1e-12);
    }

    #[test]
    fn coderivative_is_positively_homogeneous(
        rows in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..4),
        ystar in -2.0f64..2.0,
        lambda in 0.1f64..5.0,
    ) {
        // Graph of a map ℝ → ℝ given by half-planes through the origin.
        let pieces: Vec<Polyhedron> = rows
            .chunks(2)
            .map(|c| Polyhedron::new(2, c.iter().map(|(a, b)| (vector(&[*a, *b]), 0.0)).collect()).unwrap())
            .collect();
        let graph = PolyhedralUnion::from_polyhedra(2, pieces).unwrap();
        let (x, y) = (vector(&[0.0]), vector(&[0.0]));
        for kind in [SliceKind::Regular, SliceKind::Limiting] {
            let base = coderivative_polyhedral_graph(&graph, 1, &x, &y, &vector(&[ystar]), kind).unwrap();
            let scaled = coderivative_polyhedral_graph(&graph, 1, &x, &y, &vector(&[lambda * ystar]), kind).unwrap();
            prop_assert_eq!(base.is_empty(), scaled.is_empty());
            for s in base.samples(&[0.5, 1.0, 2.0]) {
                prop_assert!(scaled.distance(&(&s * lambda)) <= 1e-9 * (1.0 + s.norm() * lambda));
            }
            for s in scaled.samples(&[0.5, 1.0, 2.0]) {
                prop_assert!(base.distance(&(&s / lambda)) <= 1e-9 * (1.0 + s.norm()));
            }
        }
    }
}
