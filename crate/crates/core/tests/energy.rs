use cellcast_core::energy::{
    onoff_decide, power, simulate, throughput_loss, OnOffDecision, PairTrace, PowerParams,
};
use proptest::prelude::*;

fn pair(low_cell: u64, low: &[f64], high: &[f64]) -> PairTrace {
    PairTrace {
        low_cell,
        high_cell: low_cell + 1,
        start_ms: 1_383_264_000_000,
        low: low.to_vec(),
        high: high.to_vec(),
    }
}

/// Three pairs, five intervals. The expected figures below were enumerated
/// by hand for each of the fifteen pair-intervals (A = 167, B = 2.73, e = 1,
/// L_th = 80, L_max = 100):
///
/// ```text
/// pair 0  pred sums 70 90 80 40 100   -> off on off off on
///         actual    70 95 110 120 60  -> loss 0 . 10 20 .
/// pair 2  pred sums 81 79 30 85 50    -> on off off on off
///         actual    81 105 30 85 101  -> loss . 5 0 . 1
/// pair 4  pred sums 200 200 200 200 0 -> on on on on off
///         actual    100 100 100 100 0 -> loss . . . . 0
/// ```
///
/// Off intervals: 3 + 3 + 1 = 7, each saving exactly A against always-on.
#[test]
fn three_pair_five_interval_hand_trace() {
    let predicted = vec![
        pair(
            0,
            &[30.0, 50.0, 40.0, 10.0, 60.0],
            &[40.0, 40.0, 40.0, 30.0, 40.0],
        ),
        pair(
            2,
            &[41.0, 39.0, 10.0, 45.0, 25.0],
            &[40.0, 40.0, 20.0, 40.0, 25.0],
        ),
        pair(
            4,
            &[100.0, 100.0, 100.0, 100.0, 0.0],
            &[100.0, 100.0, 100.0, 100.0, 0.0],
        ),
    ];
    let actual = vec![
        pair(
            0,
            &[30.0, 55.0, 60.0, 70.0, 20.0],
            &[40.0, 40.0, 50.0, 50.0, 40.0],
        ),
        pair(
            2,
            &[41.0, 60.0, 10.0, 45.0, 51.0],
            &[40.0, 45.0, 20.0, 40.0, 50.0],
        ),
        pair(
            4,
            &[50.0, 50.0, 50.0, 50.0, 0.0],
            &[50.0, 50.0, 50.0, 50.0, 0.0],
        ),
    ];
    let p = PowerParams::default();
    let r = simulate("hand", &predicted, &actual, &p, None).unwrap();

    let off: Vec<Vec<bool>> = r
        .traces
        .iter()
        .map(|t| t.decisions.iter().map(|d| d.high_cell_off()).collect())
        .collect();
    assert_eq!(
        off,
        vec![
            vec![true, false, true, true, false],
            vec![false, true, true, false, true],
            vec![false, false, false, false, true],
        ]
    );
    let loss: Vec<Vec<f64>> = r.traces.iter().map(|t| t.throughput_loss.clone()).collect();
    assert_eq!(
        loss,
        vec![
            vec![0.0, 0.0, 10.0, 20.0, 0.0],
            vec![0.0, 5.0, 0.0, 0.0, 1.0],
            vec![0.0; 5],
        ]
    );

    // Savings: per-pair mean over intervals, summed over pairs.
    let expected_savings = 167.0 * (3.0 + 3.0 + 1.0) / 5.0;
    assert!((r.total_savings_w - expected_savings).abs() < 1e-9);
    assert_eq!(r.per_pair[0].off_intervals, 3);
    assert_eq!(r.per_pair[1].off_intervals, 3);
    assert_eq!(r.per_pair[2].off_intervals, 1);

    // Throughput loss: 36 units lost out of 1227 offered.
    let offered = 455.0 + 402.0 + 400.0;
    assert!((r.avg_throughput_loss_pct - 100.0 * 36.0 / offered).abs() < 1e-12);

    // Mean power: every interval charged with its own closed form.
    let mut total = 0.0;
    for (pt, at) in predicted.iter().zip(&actual) {
        let mut sum = 0.0;
        for t in 0..5 {
            let d = onoff_decide(pt.low[t], pt.high[t], &p);
            sum += power(at.low[t], at.high[t], d, &p);
        }
        total += sum / 5.0;
    }
    assert!((r.mean_power_w - total).abs() < 1e-9);
    assert!((r.off_fraction - 7.0 / 15.0).abs() < 1e-15);
}

#[test]
fn oracle_predictions_are_scored_on_actual_loads() {
    let actual = vec![pair(0, &[30.0, 60.0], &[40.0, 50.0])];
    let r = simulate("oracle", &actual, &actual, &PowerParams::default(), None).unwrap();
    assert_eq!(r.per_pair[0].off_intervals, 1);
    assert_eq!(r.avg_throughput_loss_pct, 0.0);
}

fn loads(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..120.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// A predictor that is pointwise lower switches off at least wherever the
    /// higher one does, so it saves at least as much and loses at least as much.
    #[test]
    fn lower_predictions_give_superset_of_off_decisions(
        (actual, high, drop) in (1usize..24).prop_flat_map(|n| (
            prop::collection::vec((loads(n), loads(n)), 3),
            prop::collection::vec((loads(n), loads(n)), 3),
            prop::collection::vec((loads(n), loads(n)), 3),
        ))
    ) {
        let p = PowerParams::default();
        let mk = |v: &[(Vec<f64>, Vec<f64>)]| -> Vec<PairTrace> {
            v.iter().enumerate().map(|(i, (l, h))| pair(2 * i as u64, l, h)).collect()
        };
        let actual = mk(&actual);
        let b = mk(&high);
        let a: Vec<PairTrace> = b.iter().zip(&drop).map(|(t, (dl, dh))| PairTrace {
            low: t.low.iter().zip(dl).map(|(v, d)| v - d / 4.0).collect(),
            high: t.high.iter().zip(dh).map(|(v, d)| v - d / 4.0).collect(),
            ..t.clone()
        }).collect();

        let ra = simulate("a", &a, &actual, &p, None).unwrap();
        let rb = simulate("b", &b, &actual, &p, None).unwrap();
        for (ta, tb) in ra.traces.iter().zip(&rb.traces) {
            for (da, db) in ta.decisions.iter().zip(&tb.decisions) {
                prop_assert!(da.high_cell_off() || !db.high_cell_off());
            }
        }
        prop_assert!(ra.total_savings_w >= rb.total_savings_w);
        prop_assert!(ra.avg_throughput_loss_pct >= rb.avg_throughput_loss_pct);

        let against_b = simulate("a", &a, &actual, &p, Some(&rb)).unwrap();
        prop_assert!(against_b.total_savings_w >= 0.0);
        let self_cmp = simulate("b", &b, &actual, &p, Some(&rb)).unwrap();
        prop_assert_eq!(self_cmp.total_savings_w, 0.0);
    }

    #[test]
    fn closed_forms_hold(l1 in 0.0f64..120.0, l2 in 0.0f64..120.0) {
        let p = PowerParams::default();
        prop_assert_eq!(power(l1, l2, OnOffDecision::BothOn, &p), 2.0 * 167.0 + 2.73 * (l1 + l2));
        prop_assert_eq!(power(l1, l2, OnOffDecision::HighCellOff, &p), 167.0 + 2.73 * (l1 + l2));
        prop_assert_eq!(throughput_loss(l1, l2, OnOffDecision::BothOn, &p), 0.0);
        let expected = if l1 + l2 <= 100.0 { 0.0 } else { l1 + l2 - 100.0 };
        prop_assert_eq!(throughput_loss(l1, l2, OnOffDecision::HighCellOff, &p), expected);
        prop_assert_eq!(onoff_decide(l1, l2, &p).high_cell_off(), l1 + l2 <= 80.0);
    }
}
