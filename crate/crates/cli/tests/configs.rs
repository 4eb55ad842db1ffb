//! The shipped configs parse and ingest small samples in each source's own shape.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn attrlabel(args: &[&str]) -> Value {
    let out = Command::new(env!("CARGO_BIN_EXE_attrlabel")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn ingest(dataset: &str, input: &Path, out: &Path) -> Value {
    let cfg = configs().join("adapters").join(format!("{dataset}.json"));
    attrlabel(&[
        "ingest", "--dataset", dataset, "--format", "json", "--config", &cfg.to_string_lossy(), "--in",
        &input.to_string_lossy(), "--out", &out.to_string_lossy(),
    ])
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p
}

#[test]
fn daimler_style_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let doc = json!({
        "identity": "frame", "imagewidth": 1920, "imageheight": 1024,
        "children": [
            {"identity": "pedestrian", "x0": 100, "y0": 200, "x1": 160, "y1": 380, "tags": ["occluded>10"]},
            {"identity": "rider", "x0": 400, "y0": 200, "x1": 470, "y1": 390, "tags": []},
            {"identity": "bicycle", "x0": 400, "y0": 300, "x1": 480, "y1": 400, "tags": []}
        ]
    });
    for (ds, agents) in [("eurocity", 2), ("tdc", 1)] {
        let input = tmp.path().join(ds);
        write(&input, "frame_000.json", &doc);
        let m = ingest(ds, &input, &tmp.path().join("out"));
        assert_eq!(m["agents"], agents, "{ds}");
    }
}

#[test]
fn citypersons_boxes_are_xywh() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write(&input, "aachen_000000_000019_gtBboxCityPersons.json", &json!({
        "imgHeight": 1024, "imgWidth": 2048,
        "objects": [
            {"label": "pedestrian", "bbox": [10, 20, 40, 100], "bboxVis": [10, 20, 40, 80], "instanceId": 24000},
            {"label": "sitting person", "bbox": [300, 20, 40, 60], "bboxVis": [300, 20, 40, 60], "instanceId": 24001},
            {"label": "ignore", "bbox": [0, 0, 5, 5], "bboxVis": [0, 0, 5, 5], "instanceId": 0}
        ]
    }));
    let out = tmp.path().join("out");
    let m = ingest("citypersons", &input, &out);
    assert_eq!(m["agents"], 2);
    assert_eq!(m["dropped"]["ignore"], 1);
    let line = std::fs::read_to_string(out.join("citypersons.jsonl")).unwrap();
    let img: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(img["agents"][0]["bbox"]["x_max"], 50.0);
    assert_eq!(img["agents"][0]["bbox"]["y_max"], 120.0);
}

#[test]
fn bdd100k_top_level_array() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = json!([
        {"name": "b1c66a42-6f7d68ca.jpg", "attributes": {"weather": "clear"}, "labels": [
            {"id": "1", "category": "pedestrian", "attributes": {"occluded": false, "truncated": false},
             "box2d": {"x1": 10.0, "y1": 10.0, "x2": 60.0, "y2": 150.0}},
            {"id": "2", "category": "car", "attributes": {"occluded": true, "truncated": false},
             "box2d": {"x1": 300.0, "y1": 300.0, "x2": 500.0, "y2": 420.0}}
        ]},
        {"name": "b1c81faa-3df17267.jpg", "labels": [
            {"id": "3", "category": "bus", "box2d": {"x1": 0.0, "y1": 0.0, "x2": 1400.0, "y2": 500.0}}
        ]}
    ]);
    let file = write(&tmp.path().join("in"), "det_train.json", &frames);
    let p = ingest("bdd100k_persons", &file, &tmp.path().join("out"));
    assert_eq!((p["images"].as_u64(), p["agents"].as_u64()), (Some(2), Some(1)));
    let v = ingest("bdd100k_vehicles", &file, &tmp.path().join("out"));
    assert_eq!(v["agents"], 2);
}

#[test]
fn nuimages_merged_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = |token: &str, frame: u32, key: bool| {
        json!({"token": token, "sample_token": "s1", "filename": format!("samples/{token}.jpg"),
               "width": 1600, "height": 900, "frame_index": frame, "is_key_frame": key})
    };
    let ann = |sd: &str, cat: &str, inst: &str| {
        json!({"sample_data_token": sd, "category_name": cat, "bbox": [100, 100, 180, 300],
               "instance_token": inst, "attribute_tokens": []})
    };
    let doc = json!({
        "sample_data": [sample("sd0", 0, true), sample("sd1", 1, false)],
        "object_ann": [
            ann("sd0", "human.pedestrian.adult", "p1"), ann("sd1", "human.pedestrian.adult", "p1"),
            ann("sd0", "vehicle.car", "c1")
        ]
    });
    let file = write(&tmp.path().join("in"), "merged.json", &doc);
    let out = tmp.path().join("out");
    assert_eq!(ingest("nuimages_persons", &file, &out)["agents"], 2);
    let text = std::fs::read_to_string(out.join("nuimages_persons.jsonl")).unwrap();
    let imgs: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(imgs[0]["agents"][0]["uuid"], imgs[1]["agents"][0]["uuid"]);
    assert_eq!(imgs[0]["image_meta"]["sequence"]["key_frame"], true);
    assert_eq!(ingest("nuimages_vehicles", &file, &out)["agents"], 1);
}

#[test]
fn run_config_goals_give_the_quota_totals() {
    let run = configs().join("run.json");
    let cfg: Value = serde_json::from_str(&std::fs::read_to_string(&run).unwrap()).unwrap();
    let mut persons = 0;
    let mut vehicles = 0;
    for ds in cfg["datasets"].as_object().unwrap().keys() {
        let v = attrlabel(&["--run-config", &run.to_string_lossy(), "plan", "--dataset", ds, "--quota-only"]);
        let q = v["quota"].as_u64().unwrap();
        if ds.ends_with("vehicles") {
            vehicles += q;
        } else {
            persons += q;
        }
    }
    assert_eq!((persons, vehicles), (5400, 3000));
}
