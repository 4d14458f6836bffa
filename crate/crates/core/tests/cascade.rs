use heatcascade::config::Settings;
use heatcascade::engine::{run_cascade, BaseCase, Disturbance, RunConfig, Termination};
use heatcascade::montecarlo::{run_batch, run_records, sweep, BatchConfig, CenterPolicy, SweepParameter};
use proptest::prelude::*;
use std::sync::OnceLock;

fn base() -> &'static BaseCase {
    static BASE: OnceLock<BaseCase> = OnceLock::new();
    BASE.get_or_init(BaseCase::rts96)
}

fn settings(floor: f64) -> Settings {
    let mut s = Settings::default();
    s.set_floor(floor);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn traces_are_well_formed(
        seed in any::<u64>(),
        pick in 0usize..51,
        dt in 0.0f64..16.0,
        redispatch in any::<bool>(),
    ) {
        let mut s = settings(0.001);
        s.redispatch = redispatch;
        let center = base().load_bus_ids()[pick];
        let cfg = RunConfig {
            params: s.model().unwrap(),
            disturbance: Disturbance { center_bus: center, gamma: 0.07, delta_t: dt },
            seed,
        };
        let tr = run_cascade(base(), &cfg).unwrap();
        prop_assert!(tr.events.windows(2).all(|w| w[0].t_s <= w[1].t_s));
        prop_assert!(tr.series.t_s.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(tr.series.load_mw.windows(2).all(|w| w[1] <= w[0] + 1e-6));
        let agg = tr.totals_from_events();
        prop_assert_eq!((agg.lines, agg.generators), (tr.totals.lines, tr.totals.generators));
        prop_assert!(tr.totals.shed_mw >= 0.0);
        if tr.termination == Termination::VsiCollapse {
            let v = &tr.series.vsi;
            prop_assert!(v.last().unwrap() <= v.first().unwrap());
        }
        if tr.events.is_empty() {
            prop_assert_eq!(tr.termination, Termination::NoEvent);
        }
    }
}

#[test]
fn batch_stats_do_not_depend_on_workers() {
    let p = settings(0.001).model().unwrap();
    let mut cfg = BatchConfig::new(p, 0.07, 11.0, CenterPolicy::RandomLoadBus, 60, 77);
    cfg.workers = Some(1);
    let a = run_batch(base(), &cfg).unwrap();
    cfg.workers = Some(3);
    let b = run_batch(base(), &cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.stats, b.stats);
}

#[test]
fn slices_reassemble_the_batch() {
    let p = settings(0.001).model().unwrap();
    let cfg = BatchConfig::new(p, 0.07, 12.0, CenterPolicy::RandomLoadBus, 30, 8);
    let whole = run_batch(base(), &cfg).unwrap().records;
    let mut parts = run_records(base(), &cfg, 0..7).unwrap();
    parts.extend(run_records(base(), &cfg, 7..30).unwrap());
    assert_eq!(parts, whole);
}

#[test]
fn single_run_has_no_spread() {
    let p = settings(0.001).model().unwrap();
    let b = run_batch(base(), &BatchConfig::new(p, 0.07, 12.0, CenterPolicy::Fixed(207), 1, 3)).unwrap();
    assert_eq!(b.stats.runs, 1);
    assert_eq!(b.stats.outages.std, 0.0);
    assert_eq!(b.stats.shed_mw.std, 0.0);
}

#[test]
fn quiet_batch_has_zero_mean() {
    let p = settings(0.0).model().unwrap();
    let b = run_batch(base(), &BatchConfig::new(p, 0.07, 0.0, CenterPolicy::RandomLoadBus, 40, 9)).unwrap();
    assert_eq!(b.stats.outages.mean, 0.0);
    assert_eq!(b.stats.shed_mw.mean, 0.0);
    assert_eq!(b.stats.terminations, vec![(Termination::NoEvent, 40)]);
}

#[test]
fn larger_areas_do_not_reduce_outages() {
    let p = settings(0.001).model().unwrap();
    let n = 200;
    let cfg = BatchConfig::new(p, 0.07, 12.0, CenterPolicy::RandomLoadBus, n, 5);
    let r = sweep(base(), &cfg, SweepParameter::Gamma, &[0.03, 0.07, 0.12]).unwrap();
    for w in r.stats.windows(2) {
        let band = 2.0 * (w[0].outages.std_error(n).powi(2) + w[1].outages.std_error(n).powi(2)).sqrt();
        assert!(w[1].outages.mean >= w[0].outages.mean - band, "{:?}", r.means());
    }
}
