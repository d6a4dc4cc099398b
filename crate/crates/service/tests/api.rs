use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use carbonet_core::dbn::{temporal_query, TwoSliceNetwork};
use carbonet_core::discretize::tertile_states;
use carbonet_core::graph::Dag;
use carbonet_core::inference::{posterior, EvidenceMap};
use carbonet_core::network::{BayesianNetwork, Cpt, Metadata};
use carbonet_core::sensitivity::{sensitivity_report, tornado, DEFAULT_DELTA};
use carbonet_core::synthetic::TernaryNetBuilder;
use carbonet_service::{router, AppState, ModelSnapshot};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn chain() -> BayesianNetwork {
    TernaryNetBuilder::new(3).edge(0, 1, 0.8).edge(1, 2, 0.7).build(5)
}

fn collider_with_zero() -> BayesianNetwork {
    let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let dag = Dag::from_edges(names, &[(0, 2), (1, 2)]).unwrap();
    let mut c_rows = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            let k = (a + b) / 2;
            c_rows.extend((0..3).map(|s| if s == k { 0.8 } else { 0.1 }));
        }
    }
    BayesianNetwork::new(
        dag,
        vec![tertile_states(); 3],
        vec![
            Cpt { node: 0, parents: vec![], parent_cards: vec![], card: 3, values: vec![0.0, 0.5, 0.5] },
            Cpt { node: 1, parents: vec![], parent_cards: vec![], card: 3, values: vec![0.2, 0.3, 0.5] },
            Cpt { node: 2, parents: vec![0, 1], parent_cards: vec![3, 3], card: 3, values: c_rows },
        ],
        Metadata::default(),
    )
    .unwrap()
}

fn two_slice(net: &BayesianNetwork) -> TwoSliceNetwork {
    let n = net.n_nodes();
    let transitions = (0..n)
        .map(|j| {
            if j == 2 {
                Cpt {
                    node: n + j,
                    parents: vec![0],
                    parent_cards: vec![3],
                    card: 3,
                    values: vec![0.6, 0.3, 0.1, 0.3, 0.4, 0.3, 0.1, 0.3, 0.6],
                }
            } else {
                Cpt { node: n + j, parents: vec![], parent_cards: vec![], card: 3, values: vec![0.3, 0.4, 0.3] }
            }
        })
        .collect();
    TwoSliceNetwork::new(net.clone(), transitions, Metadata::default()).unwrap()
}

fn make_app(net: BayesianNetwork, tsn: Option<TwoSliceNetwork>) -> (Arc<AppState>, axum::Router) {
    let state = Arc::new(AppState::new(Some(ModelSnapshot::new(net, tsn).unwrap())));
    (state.clone(), router(state, None))
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn no_model_is_unavailable() {
    let app = router(Arc::new(AppState::new(None)), None);
    for req in [
        get("/v1/network"),
        get("/v1/sensitivity?target=X0"),
        get("/v1/tornado?target=X0&state=High"),
        post("/v1/query", r#"{"target":"X0"}"#),
        post("/v1/mpe", "{}"),
    ] {
        assert_eq!(send(&app, req).await.0, StatusCode::SERVICE_UNAVAILABLE);
    }
}

#[tokio::test]
async fn network_view() {
    let (_, app) = make_app(chain(), None);
    let (status, body) = send(&app, get("/v1/network")).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(v["edges"].as_array().unwrap().len(), 2);
    let arcs = v["arcs"].as_array().unwrap();
    assert_eq!(arcs.len(), 2);
    for a in arcs {
        let d = a["diameter"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&d));
        // a chain's orientation is not identified
        assert_eq!(a["undirected"], true);
    }

    let (_, app) = make_app(collider_with_zero(), None);
    let v: serde_json::Value = serde_json::from_slice(&send(&app, get("/v1/network")).await.1).unwrap();
    assert!(v["arcs"].as_array().unwrap().iter().all(|a| a["undirected"] == false));
    assert!(v.get("transitions").is_none());
}

#[tokio::test]
async fn query_matches_module_bytes() {
    let net = chain();
    let (_, app) = make_app(net.clone(), Some(two_slice(&net)));
    let (status, body) = send(&app, post("/v1/query", r#"{"target":"X2"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let expect = serde_json::to_vec(&posterior(&net, "X2", &EvidenceMap::new()).unwrap()).unwrap();
    assert_eq!(body, expect);

    let e = EvidenceMap::new().with("X0", "High");
    let (_, body) = send(&app, post("/v1/query", r#"{"target":"X2","evidence":{"X0":"High"},"slice":"T"}"#)).await;
    assert_eq!(body, serde_json::to_vec(&posterior(&net, "X2", &e).unwrap()).unwrap());

    let (status, body) =
        send(&app, post("/v1/query", r#"{"target":"X2","evidence":{"X0":"High"},"slice":"T+1"}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let expect = temporal_query(&two_slice(&net), &e, "X2").unwrap().at_t1;
    assert_eq!(body, serde_json::to_vec(&expect).unwrap());

    // repeated requests are answered identically
    let again = send(&app, post("/v1/query", r#"{"target":"X2","evidence":{"X0":"High"},"slice":"T+1"}"#)).await;
    assert_eq!(again.1, body);
}

#[tokio::test]
async fn query_errors() {
    let (_, app) = make_app(collider_with_zero(), None);
    let cases = [
        (r#"{"target":"Z"}"#, StatusCode::BAD_REQUEST),
        (r#"{"target":"C","evidence":{"A":"Sideways"}}"#, StatusCode::BAD_REQUEST),
        (r#"{"target":"C","evidence":{"Q":"Low"}}"#, StatusCode::BAD_REQUEST),
        (r#"{"target":"C","evidence":{"A":"Low"}}"#, StatusCode::UNPROCESSABLE_ENTITY),
        (r#"{"target":"C","slice":"T+1"}"#, StatusCode::BAD_REQUEST),
        (r#"{"target":"#, StatusCode::BAD_REQUEST),
    ];
    for (body, code) in cases {
        let (status, bytes) = send(&app, post("/v1/query", body)).await;
        assert_eq!(status, code, "{body}");
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert!(v["error"].is_string());
    }
    let (status, _) = send(&app, post("/v1/mpe", r#"{"evidence":{"A":"Low"}}"#)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn mpe_matches_exhaustive_search() {
    let net = collider_with_zero();
    let (_, app) = make_app(net.clone(), None);
    let (status, body) = send(&app, post("/v1/mpe", r#"{"evidence":{"C":"High"}}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();

    let mut best = (0.0, [0usize; 3]);
    for a in 0..3 {
        for b in 0..3 {
            let p = net.joint_probability(&[a, b, 2]);
            if p > best.0 {
                best = (p, [a, b, 2]);
            }
        }
    }
    let states = tertile_states();
    assert_eq!(v["assignment"]["A"], states[best.1[0]].as_str());
    assert_eq!(v["assignment"]["B"], states[best.1[1]].as_str());
    assert!(v["assignment"].get("C").is_none());
    assert!((v["log_probability"].as_f64().unwrap() - best.0.ln()).abs() < 1e-12);
}

#[tokio::test]
async fn sensitivity_and_tornado_match_modules() {
    let net = chain();
    let (_, app) = make_app(net.clone(), None);
    let (status, body) = send(&app, get("/v1/sensitivity?target=X2")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::to_vec(&sensitivity_report(&net, "X2").unwrap()).unwrap());
    assert_eq!(send(&app, get("/v1/sensitivity?target=Nope")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(send(&app, get("/v1/sensitivity")).await.0, StatusCode::BAD_REQUEST);

    let (status, body) = send(&app, get("/v1/tornado?target=X2&state=High&top_k=5")).await;
    assert_eq!(status, StatusCode::OK);
    let expect = tornado(&net, "X2", "High", 5, DEFAULT_DELTA).unwrap();
    assert_eq!(body, serde_json::to_vec(&expect).unwrap());
    let v: Vec<serde_json::Value> = serde_json::from_slice(&body).unwrap();
    assert_eq!(v.len(), 5);
    let mags: Vec<f64> = v.iter().map(|e| e["sensitivity_value"].as_f64().unwrap().abs()).collect();
    assert!(mags.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(
        send(&app, get("/v1/tornado?target=X2&state=Up")).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        send(&app, get("/v1/tornado?target=X2&state=High&top_k=0")).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn reload_swaps_snapshot() {
    let (state, app) = make_app(chain(), None);
    let before = send(&app, get("/v1/network")).await.1;
    state.reload(ModelSnapshot::new(collider_with_zero(), None).unwrap());
    let after = send(&app, get("/v1/network")).await.1;
    assert_ne!(before, after);
    let v: serde_json::Value = serde_json::from_slice(&after).unwrap();
    assert_eq!(v["nodes"][0]["name"], "A");
}

#[tokio::test]
async fn cors_headers_present() {
    let (_, app) = make_app(chain(), None);
    let req = Request::get("/v1/network")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}

#[test]
fn mismatched_two_slice_rejected() {
    let tsn = two_slice(&chain());
    assert!(ModelSnapshot::new(collider_with_zero(), Some(tsn)).is_err());
}
