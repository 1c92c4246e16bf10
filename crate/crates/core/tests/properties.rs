use proptest::prelude::*;

use seqmon_core::detector::{boundary, trim_value, Decision, TrimRule};
use seqmon_core::format::sig17;
use seqmon_core::regression::residual;
use seqmon_core::{
    Monitor, MonitorConfig, MonitoringModel, SequentialMonitor, VetoConfig, VetoMonitor,
};

fn model(beta: Vec<f64>, m: usize, sigma: f64) -> MonitoringModel {
    MonitoringModel {
        d: beta.len(),
        beta_hat: beta,
        m,
        sigma_hat: sigma,
        bandwidth: 1,
        lag_p: 0,
        lag_tail: vec![],
    }
}

fn stream() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0..5.0f64, -3.0..3.0f64), 1..120)
}

fn eta() -> impl Strategy<Value = f64> {
    prop_oneof![0.0..0.49f64, 0.51..1.8f64]
}

fn trim() -> impl Strategy<Value = TrimRule> {
    prop_oneof![
        Just(TrimRule::LogLog),
        Just(TrimRule::Log),
        Just(TrimRule::LogSquared),
        (1usize..20).prop_map(TrimRule::Fixed),
    ]
}

proptest! {
    #[test]
    fn cusum_is_the_running_residual_sum(
        b0 in -2.0..2.0f64, b1 in -2.0..2.0f64, rows in stream(), e in eta(), t in trim()
    ) {
        let model = model(vec![b0, b1], 200, 1.0);
        let cfg = MonitorConfig { eta: e, alpha: 0.05, trim: t, horizon: 500, critical_value: f64::INFINITY };
        let mut mon = Monitor::new(&model, cfg).unwrap();
        let mut sum = 0.0;
        for (y, x) in rows {
            let xs = [1.0, x];
            sum += residual(&model, y, &xs).unwrap();
            let ev = mon.step(y, &xs).unwrap();
            prop_assert_eq!(ev.cusum, sum);
            prop_assert_eq!(mon.cusum(), sum);
        }
    }

    #[test]
    fn heavy_monitors_never_reject_during_warmup(
        m in 20usize..3000, rows in stream(), e in 0.51..1.8f64, t in trim(), c in 0.0..0.5f64
    ) {
        let model = model(vec![0.0, 0.0], m, 1.0);
        let a_m = trim_value(t, m).unwrap();
        let cfg = MonitorConfig { eta: e, alpha: 0.05, trim: t, horizon: 1000, critical_value: c };
        let mut mon = Monitor::new(&model, cfg).unwrap();
        for (y, x) in rows {
            let ev = mon.step(y * 10.0, &[1.0, x]).unwrap();
            if ev.k < a_m {
                prop_assert_eq!(ev.decision, Decision::Continue);
                prop_assert_eq!(ev.statistic, -1.0);
            }
            if ev.decision != Decision::Continue { break; }
        }
    }

    #[test]
    fn single_member_veto_matches_monitor(
        m in 20usize..1000, rows in stream(), e in eta(), t in trim(), c in 0.1..3.0f64, h in 50usize..150
    ) {
        let model = model(vec![0.3, -0.7], m, 0.8);
        let mut a = Monitor::new(&model, MonitorConfig { eta: e, alpha: 0.05, trim: t, horizon: h, critical_value: c }).unwrap();
        let mut b = VetoMonitor::new(&model, VetoConfig {
            etas: vec![e], per_eta_criticals: vec![c], c_alpha: 1.0, trim: t, alpha: 0.05, horizon: h,
        }).unwrap();
        for (y, x) in rows {
            let ea = a.step(y, &[1.0, x]).unwrap();
            let eb = b.step(y, &[1.0, x]).unwrap();
            prop_assert_eq!((ea.k, ea.cusum, ea.statistic, ea.threshold, ea.decision),
                            (eb.k, eb.cusum, eb.statistic, eb.threshold, eb.decision));
            if ea.decision != Decision::Continue { break; }
        }
    }

    #[test]
    fn statistic_is_scale_free(
        rows in stream(), e in eta(), t in trim(), scale in 0.01..100.0f64
    ) {
        let m1 = model(vec![0.5, 1.0], 300, 1.3);
        let m2 = model(vec![0.5 * scale, scale], 300, 1.3 * scale);
        let cfg = MonitorConfig { eta: e, alpha: 0.05, trim: t, horizon: 500, critical_value: f64::INFINITY };
        let mut a = Monitor::new(&m1, cfg.clone()).unwrap();
        let mut b = Monitor::new(&m2, cfg).unwrap();
        for (y, x) in rows {
            let sa = a.step(y, &[1.0, x]).unwrap().statistic;
            let sb = b.step(y * scale, &[1.0, x]).unwrap().statistic;
            prop_assert!((sa - sb).abs() <= 1e-9 * sa.abs().max(1.0));
        }
    }

    #[test]
    fn boundary_grows_with_k(m in 1usize..5000, k in 1usize..5000, e in eta(), sigma in 0.1..10.0f64) {
        let g0 = boundary(m, k, e, sigma);
        let g1 = boundary(m, k + 1, e, sigma);
        prop_assert!(g0 > 0.0 && g1 > g0);
    }

    #[test]
    fn float_text_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(sig17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn single_precision_tracks_double(rows in stream(), e in eta(), t in trim()) {
        let m64 = model(vec![0.25, 0.5], 400, 1.0);
        let m32 = seqmon_core::regression::MonitoringModel {
            beta_hat: vec![0.25f32, 0.5], m: 400, d: 2, sigma_hat: 1.0, bandwidth: 1, lag_p: 0, lag_tail: vec![],
        };
        let mut a = Monitor::new(&m64, MonitorConfig { eta: e, alpha: 0.05, trim: t, horizon: 500, critical_value: f64::INFINITY }).unwrap();
        let mut b = seqmon_core::detector::Monitor::new(&m32, seqmon_core::detector::MonitorConfig {
            eta: e as f32, alpha: 0.05, trim: t, horizon: 500, critical_value: f32::INFINITY,
        }).unwrap();
        for (y, x) in rows {
            let ea = a.step(y, &[1.0, x]).unwrap();
            let eb = b.step(y as f32, &[1.0, x as f32]).unwrap();
            prop_assert!((ea.cusum - eb.cusum as f64).abs() <= 1e-3 * (1.0 + ea.cusum.abs()));
        }
    }
}
