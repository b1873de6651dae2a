use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use landmark_core::pipeline;
use landmark_core::synth::{plant_params, sample_graph, PlantedSpec, Structure};
use landmark_core::{AttributedGraph, Execution, Hyperparams};
use landmark_service::{app, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

fn graph(n: usize) -> AttributedGraph {
    let m = plant_params(&PlantedSpec::new(Structure::Comm, n, 5)).unwrap();
    sample_graph(&m, 6, Execution::Parallel).unwrap()
}

fn server(graph: Option<AttributedGraph>) -> Router {
    app(Config {
        graph,
        defaults: Hyperparams {
            max_outer: 15,
            ..Default::default()
        },
        assets: None,
    })
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, "GET", uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn submit(app: &Router, uri: &str, body: Value) -> String {
    let (status, b) = send(app, "POST", uri, Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{}", String::from_utf8_lossy(&b));
    let v: Value = serde_json::from_slice(&b).unwrap();
    v["job_id"].as_str().unwrap().to_string()
}

/// Poll until the job finishes and return its map id.
async fn wait(app: &Router, job: &str) -> String {
    for _ in 0..6000 {
        let (status, v) = get_json(app, &format!("/api/jobs/{job}")).await;
        assert_eq!(status, StatusCode::OK);
        match v["status"].as_str().unwrap() {
            "done" => return v["map_id"].as_str().unwrap().to_string(),
            "failed" => panic!("job failed: {v}"),
            _ => tokio::time::sleep(Duration::from_millis(10)).await,
        }
    }
    panic!("job {job} did not finish");
}

fn assert_error(status: StatusCode, body: &[u8], expect: StatusCode) {
    assert_eq!(status, expect, "{}", String::from_utf8_lossy(body));
    let v: Value = serde_json::from_slice(body).unwrap();
    assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn discovery_registers_a_map_matching_the_library() {
    let g = graph(90);
    let app = server(Some(g.clone()));
    let job = submit(&app, "/api/discover", json!({"k": 3, "hyperparams": {"seed": 4}})).await;
    let map_id = wait(&app, &job).await;

    let (status, bytes) = send(&app, "GET", &format!("/api/maps/{map_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let h = Hyperparams {
        max_outer: 15,
        seed: 4,
        ..Default::default()
    };
    let expect = pipeline::discover(&g, 3, &h, &mut |_| {}).unwrap();
    assert_eq!(String::from_utf8(bytes.clone()).unwrap(), expect.map_doc.to_json().unwrap());

    let v: Value = serde_json::from_slice(&bytes).unwrap();
    for key in ["version", "K", "landmark_ids", "psi", "omega", "c_used", "main_role", "lineage", "attr_names", "model_ref"] {
        assert!(v.get(key).is_some(), "map JSON lacks {key}");
    }
    assert_eq!(v["K"], 3);
    assert!(v["lineage"].is_null());

    let (status, coords) = send(&app, "GET", &format!("/api/maps/{map_id}/coords"), None).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(coords).unwrap();
    assert_eq!(text.lines().count(), g.n_nodes() + 1);
    assert_eq!(text.lines().next().unwrap(), "L0\tL1\tL2");

    let (_, job_v) = get_json(&app, &format!("/api/jobs/{job}")).await;
    assert_eq!(job_v["progress"], 1.0);
    assert_eq!(job_v["kind"], "discover");
}

#[tokio::test]
async fn bad_discovery_requests_are_rejected() {
    let app = server(Some(graph(40)));
    for body in [
        json!({"k": 0}),
        json!({"k": 40}),
        json!({"k": 2, "hyperparams": {"alpha": 2.0}}),
        json!({"k": 2, "hyperparams": {"c_mode": "median"}}),
        json!({"k": 2, "bogus": 1}),
        json!({"kay": 2}),
    ] {
        let (s, b) = send(&app, "POST", "/api/discover", Some(body)).await;
        assert_error(s, &b, StatusCode::BAD_REQUEST);
    }
    let req = Request::post("/api/discover")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn discovery_without_a_graph_conflicts() {
    let app = server(None);
    let (s, b) = send(&app, "POST", "/api/discover", Some(json!({"k": 2}))).await;
    assert_error(s, &b, StatusCode::CONFLICT);
    let (s, b) = send(&app, "GET", "/api/graph", None).await;
    assert_error(s, &b, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let app = server(Some(graph(30)));
    for uri in ["/api/maps/m7", "/api/maps/m7/coords", "/api/jobs/j3", "/api/nothing"] {
        let (s, b) = send(&app, "GET", uri, None).await;
        assert_error(s, &b, StatusCode::NOT_FOUND);
    }
    let (s, b) = send(&app, "POST", "/api/maps/m7/zoom", Some(json!({"split_role": 0}))).await;
    assert_error(s, &b, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn zoom_adds_a_child_and_leaves_the_parent_alone() {
    let app = server(Some(graph(90)));
    let parent = wait(&app, &submit(&app, "/api/discover", json!({"k": 3})).await).await;
    let (_, before) = send(&app, "GET", &format!("/api/maps/{parent}"), None).await;

    let (s, b) = send(&app, "POST", &format!("/api/maps/{parent}/zoom"), Some(json!({"split_role": 3}))).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST);
    let (s, b) = send(
        &app,
        "POST",
        &format!("/api/maps/{parent}/zoom"),
        Some(json!({"split_role": 1, "beta": -1.0})),
    )
    .await;
    assert_error(s, &b, StatusCode::BAD_REQUEST);

    let job = submit(&app, &format!("/api/maps/{parent}/zoom"), json!({"split_role": 1, "beta": 0.2})).await;
    let child = wait(&app, &job).await;
    let (_, after) = send(&app, "GET", &format!("/api/maps/{parent}"), None).await;
    assert_eq!(before, after);

    let (_, cm) = get_json(&app, &format!("/api/maps/{child}")).await;
    assert_eq!(cm["K"], 4);
    assert_eq!(cm["landmark_ids"], json!(["L0", "L2", "L1.1", "L1.2"]));
    assert_eq!(cm["lineage"]["split_landmark"], "L1");
    assert_eq!(cm["lineage"]["children"], json!(["L1.1", "L1.2"]));

    let grandchild = wait(
        &app,
        &submit(&app, &format!("/api/maps/{child}/zoom"), json!({"split_role": 3})).await,
    )
    .await;
    let (_, gm) = get_json(&app, &format!("/api/maps/{grandchild}")).await;
    assert_eq!(gm["landmark_ids"], json!(["L0", "L2", "L1.1", "L1.2.1", "L1.2.2"]));

    let (_, tree) = get_json(&app, "/api/lineage").await;
    let roots = tree["roots"].as_array().unwrap();
    assert_eq!(roots.len(), 1);
    assert_eq!(roots[0]["map_id"], parent.as_str());
    assert_eq!(roots[0]["children"][0]["map_id"], child.as_str());
    assert_eq!(roots[0]["children"][0]["split_landmark"], "L1");
    assert_eq!(roots[0]["children"][0]["children"][0]["map_id"], grandchild.as_str());

    let (_, maps) = get_json(&app, "/api/maps").await;
    assert_eq!(maps.as_array().unwrap().len(), 3);
    assert_eq!(maps[1]["parent"], parent.as_str());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn status_stays_responsive_while_jobs_run_one_at_a_time() {
    let app = app(Config {
        graph: Some(graph(1500)),
        defaults: Hyperparams {
            max_outer: 40,
            tol: 0.0,
            ..Default::default()
        },
        assets: None,
    });
    let first = submit(&app, "/api/discover", json!({"k": 5})).await;
    let second = submit(&app, "/api/discover", json!({"k": 4})).await;

    let mut saw_running = false;
    let mut saw_both = false;
    for _ in 0..2000 {
        let started = std::time::Instant::now();
        let (_, a) = get_json(&app, &format!("/api/jobs/{first}")).await;
        let (_, b) = get_json(&app, &format!("/api/jobs/{second}")).await;
        assert!(started.elapsed() < Duration::from_secs(1), "status query blocked");
        let (sa, sb) = (a["status"].as_str().unwrap(), b["status"].as_str().unwrap());
        assert!(!(sa == "running" && sb == "running"), "two jobs ran at once");
        if sa == "running" {
            saw_running = true;
            assert!(a["progress"].as_f64().unwrap() <= 1.0);
            saw_both |= sb == "queued";
        }
        if sa == "done" && sb == "done" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    assert!(saw_running && saw_both, "never observed the first job running with the second queued");
    wait(&app, &second).await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn gets_are_idempotent() {
    let app = server(Some(graph(60)));
    let map = wait(&app, &submit(&app, "/api/discover", json!({"k": 2})).await).await;
    for uri in [
        format!("/api/maps/{map}"),
        format!("/api/maps/{map}/coords"),
        "/api/lineage".to_string(),
        "/api/maps".to_string(),
        "/api/graph".to_string(),
        "/api/jobs/j1".to_string(),
    ] {
        let a = send(&app, "GET", &uri, None).await;
        let b = send(&app, "GET", &uri, None).await;
        assert_eq!(a.0, StatusCode::OK, "{uri}");
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn root_serves_the_explorer() {
    let (s, b) = send(&server(None), "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(b).unwrap().contains("<html>"));

    let dir = std::env::temp_dir().join(format!("landmark-assets-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<p>explorer</p>").unwrap();
    std::fs::write(dir.join("app.js"), "console.log(1)").unwrap();
    let app = app(Config {
        graph: None,
        defaults: Hyperparams::default(),
        assets: Some(dir.clone()),
    });
    let (s, b) = send(&app, "GET", "/", None).await;
    assert_eq!((s, b.as_slice()), (StatusCode::OK, "<p>explorer</p>".as_bytes()));
    let (s, _) = send(&app, "GET", "/app.js", None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, b) = send(&app, "GET", "/api/lineage", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap(), json!({"roots": []}));
    std::fs::remove_dir_all(dir).ok();
}
