use carbonet_core::bootstrap::{bootstrap_consensus, BootstrapOptions};
use carbonet_core::dbn::{learn_transitions, temporal_query, TransitionOptions, TwoSliceNetwork};
use carbonet_core::discretize::{discretize, DiscretePanel};
use carbonet_core::garch::{fit_filter, FilterMode, FilterOptions};
use carbonet_core::graph::cpdag;
use carbonet_core::inference::{evidence_sweep, posterior, EvidenceMap};
use carbonet_core::network::{fit_mle, BayesianNetwork, Metadata};
use carbonet_core::panel::{load_panel, to_log_returns, PanelKind, PanelSchema, TimePanel};
use carbonet_core::score::BDeuConfig;
use carbonet_core::search::SearchControls;
use carbonet_core::synthetic::{sample_dataset, simulate_prices, TernaryNetBuilder};
use carbonet_core::Error;

fn small_grid() -> FilterOptions {
    FilterOptions {
        max_lag: 2,
        p_range: (1, 2),
        q_range: (1, 2),
        ..FilterOptions::default()
    }
}

#[test]
fn prices_to_network() {
    let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let prices = simulate_prices(&names, 800, 17);
    let returns = to_log_returns(&prices).unwrap();
    let opts = small_grid();
    let series: Vec<Vec<f64>> = returns
        .names
        .iter()
        .zip(&returns.series)
        .map(|(n, s)| {
            let m = fit_filter(n, s, FilterMode::GarchOnly, &opts).unwrap();
            assert_eq!(m.residuals.len(), s.len());
            m.residuals
        })
        .collect();
    let resid = TimePanel::new(returns.dates.clone(), names.clone(), series, PanelKind::Residuals).unwrap();
    let panel = discretize(&resid).unwrap();

    let mut csv = Vec::new();
    panel.write_csv(&mut csv).unwrap();
    let back = DiscretePanel::read_csv(csv.as_slice()).unwrap();
    assert_eq!(back.data, panel.data);
    assert_eq!(back.dates, panel.dates);

    let opts = BootstrapOptions {
        resamples: 20,
        ..BootstrapOptions::default()
    };
    let c = bootstrap_consensus(&panel.data, &BDeuConfig::default(), &SearchControls::default(), &opts, 3).unwrap();
    // A and C share the common factor with the same sign
    assert!(c.dag.adjacent(0, 2));
    let net = fit_mle(&c.dag, &panel.data, Metadata::default()).unwrap();
    let json = net.to_json_string().unwrap();
    let again = BayesianNetwork::from_json_str(&json).unwrap();
    assert_eq!(again, net);
    let sweep = evidence_sweep(&net, "A", false).unwrap();
    assert_eq!(sweep.rows.len(), 4);
    assert!(sweep.rows.windows(2).all(|w| w[0].tvd >= w[1].tvd));
}

#[test]
fn load_panel_reports_location() {
    let text = "date,A,B\n2020-01-01,1.0,2.0\n2020-01-02,abc,2.1\n";
    match load_panel(text.as_bytes(), &PanelSchema::default()) {
        Err(Error::Parse { line, column, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(column, "A");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn learned_two_slice_round_trips_and_keeps_slice_t() {
    // X0 at T+1 copies X0 at T with probability 0.8
    let base = TernaryNetBuilder::new(2).edge(0, 1, 0.8).build_uniformish(4);
    let mut panel = sample_dataset(&base, 1500, 5);
    let mut col0 = panel.column(0).to_vec();
    let mut state = 0u8;
    let mut rng_state = 12345u64;
    for v in col0.iter_mut() {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (rng_state >> 11) as f64 / (1u64 << 53) as f64;
        if u > 0.8 {
            state = ((rng_state >> 3) % 3) as u8;
        }
        *v = state;
    }
    panel = carbonet_core::data::Dataset::new(
        panel.names().to_vec(),
        panel.all_states().to_vec(),
        vec![col0, panel.column(1).to_vec()],
    )
    .unwrap();
    let static_net = fit_mle(base.dag(), &panel, Metadata::default()).unwrap();
    let opts = TransitionOptions {
        single_run: true,
        ..TransitionOptions::default()
    };
    let learned = learn_transitions(&panel, &static_net, &opts, 9).unwrap();
    let tsn = learned.network;
    assert!(tsn.transition_edges().contains(&(0, 0)));
    assert_eq!(tsn.static_net(), &static_net);
    assert_eq!(cpdag(tsn.static_net().dag()), cpdag(static_net.dag()));

    let json = tsn.to_json_string().unwrap();
    let back = TwoSliceNetwork::from_json_str(&json).unwrap();
    assert_eq!(back, tsn);

    let ev = EvidenceMap::new().with("X1", "High");
    let r = temporal_query(&tsn, &ev, "X0").unwrap();
    assert_eq!(r.at_t, posterior(&static_net, "X0", &ev).unwrap());
    assert_eq!(r.at_t1.target, "X0@T+1");
}
