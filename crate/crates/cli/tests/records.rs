use proptest::prelude::*;
use tariff_cli::record::Flags;
use tariff_cli::{fmt_sig, ResultRecord};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e6f64..1e6]
}

fn record() -> impl Strategy<Value = ResultRecord> {
    (
        "[A-Z]{2}[0-9]?",
        finite(),
        1usize..20,
        finite(),
        finite(),
        0usize..20,
        prop::collection::vec((finite(), finite(), finite()), 0..8),
        any::<bool>(),
        prop::option::of(any::<bool>()),
    )
        .prop_map(|(scheme, supply, j, revenue, gain_vs_sp, k_eff, cols, capped, ic_feasible)| ResultRecord {
            scheme,
            supply,
            j,
            revenue,
            gain_vs_sp,
            k_eff,
            theta: cols.iter().map(|c| c.0).collect(),
            prices: cols.iter().map(|c| c.1).collect(),
            allocations: cols.iter().map(|c| c.2).collect(),
            flags: Flags { capped, ic_feasible },
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn json_round_trip_is_exact(rec in record()) {
        let text = serde_json::to_string(&rec).unwrap();
        let back: ResultRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &rec);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn twelve_digits_survive(x in finite()) {
        let printed: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((printed - x).abs() <= 5e-12 * x.abs());
        prop_assert_eq!(fmt_sig(printed), fmt_sig(x));
    }
}
