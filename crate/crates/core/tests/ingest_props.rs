use ndarray::Array2;
use numeraire_lab::synth::business_days;
use numeraire_lab::{
    align_and_fill, apply_exclusions, log_returns, parse_price_panel, ExclusionRules, PricePanel,
};
use proptest::prelude::*;

/// Panels with gaps and stuck quotes so both exclusion rules get exercised.
fn panel_strategy() -> impl Strategy<Value = PricePanel> {
    (1usize..6, 4usize..40).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(0.5f64..2.0, k * n),
            proptest::collection::vec(0u8..10, k * n),
        )
            .prop_map(move |(mut prices, flags)| {
                for i in 0..k {
                    for t in 0..n {
                        match flags[t * k + i] {
                            0 => prices[t * k + i] = f64::NAN,
                            1 | 2 if t > 0 => prices[t * k + i] = prices[(t - 1) * k + i],
                            _ => {}
                        }
                    }
                }
                PricePanel::new(
                    "BASE",
                    business_days(n),
                    (0..k).map(|i| format!("C{i}")).collect(),
                    Array2::from_shape_vec((n, k), prices).unwrap(),
                )
                .unwrap()
            })
    })
}

fn rules_strategy() -> impl Strategy<Value = ExclusionRules> {
    (0usize..8, 2usize..6, proptest::option::of(0usize..6)).prop_map(|(m, c, keep)| {
        ExclusionRules {
            max_missing: m,
            constant_run: c,
            keep: keep.map(|i| format!("C{i}")).into_iter().collect(),
        }
    })
}

proptest! {
    #[test]
    fn exclusions_are_idempotent(panel in panel_strategy(), rules in rules_strategy()) {
        let (once, _) = apply_exclusions(&panel, &rules).unwrap();
        let (twice, report) = apply_exclusions(&once, &rules).unwrap();
        prop_assert!(report.removals.is_empty());
        prop_assert_eq!(once.to_delimited(), twice.to_delimited());
    }

    #[test]
    fn survivors_keep_their_exact_prices(panel in panel_strategy(), rules in rules_strategy()) {
        let (kept, report) = apply_exclusions(&panel, &rules).unwrap();
        let removed = report.removed_assets();
        for a in panel.assets() {
            prop_assert_eq!(kept.asset_index(a).is_some(), !removed.contains(a.as_str()));
        }
        for (j, a) in kept.assets().iter().enumerate() {
            let i = panel.asset_index(a).unwrap();
            for t in 0..panel.dates().len() {
                prop_assert_eq!(kept.prices()[[t, j]].to_bits(), panel.prices()[[t, i]].to_bits());
            }
        }
    }

    #[test]
    fn alignment_never_invents_prices(panel in panel_strategy()) {
        let Ok(aligned) = align_and_fill(panel.clone()) else {
            return Ok(());
        };
        let p = aligned.panel();
        prop_assert_eq!(p, &panel);
        for i in 0..p.assets().len() {
            let mut last = None;
            for t in 0..p.dates().len() {
                let r = aligned.reference(i, t);
                if p.is_present(t, i) {
                    prop_assert_eq!(r, last);
                    last = Some(t);
                } else {
                    prop_assert_eq!(r, None);
                }
            }
        }
        // every return rests on two real quotes
        let r = log_returns(&aligned, "BASE").unwrap();
        for a in r.assets() {
            let i = p.asset_index(a).unwrap();
            for (t, d) in r.dates().iter().enumerate() {
                let row = p.dates().iter().position(|x| x == d).unwrap();
                let has_pair = p.is_present(row, i) && aligned.reference(i, row).is_some();
                prop_assert_eq!(r.series(a).unwrap()[t].is_nan(), !has_pair);
            }
        }
    }

    #[test]
    fn delimited_text_parses_back(panel in panel_strategy()) {
        let again = parse_price_panel(&panel.to_delimited(), "BASE").unwrap();
        prop_assert_eq!(again, panel);
    }
}

#[test]
fn removal_report_lists_reasons() {
    let text = "date,GOOD,GAPPY,STUCK\n\
        2020-01-01,1.0,1.0,2.0\n\
        2020-01-02,1.1,,2.0\n\
        2020-01-03,1.2,,2.0\n\
        2020-01-06,1.3,1.1,2.0\n";
    let panel = parse_price_panel(text, "USD").unwrap();
    let rules = ExclusionRules {
        max_missing: 2,
        constant_run: 3,
        keep: Default::default(),
    };
    let (kept, report) = apply_exclusions(&panel, &rules).unwrap();
    assert_eq!(kept.assets(), ["GOOD"]);
    assert_eq!(
        report.to_text(),
        "GAPPY\tmissing_values=2\nSTUCK\tconstant_run=4\n"
    );
}
