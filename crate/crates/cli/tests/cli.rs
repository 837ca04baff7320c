// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{fixture, repdet};
use repdet_core::eval::{evaluate, EvalConfig, EvalResult};
use repdet_core::init;
use repdet_core::io::{load_annotations, load_detections, read_weights_file};
use repdet_core::repvit::{backbone_forward, Backbone, Form};
use repdet_core::spark::{generate_mask, MaskGrid};

#[test]
fn fuse_writes_equivalent_deploy_container() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deploy.json");
    let input = fixture("toy_train.json");
    let run = repdet(&["fuse".as_ref(), "--in".as_ref(), input.as_os_str(), "--out".as_ref(), out.as_os_str()]);
    assert_eq!(run.code, 0, "{}", run.stderr);

    let train = Backbone::<f32>::from_container(&read_weights_file(&input).unwrap()).unwrap();
    let deploy_c = read_weights_file(&out).unwrap();
    assert_eq!(deploy_c.form, Form::Deploy);
    assert!(deploy_c.tensors.iter().all(|t| !t.name.contains("branch")));
    let deploy = Backbone::<f32>::from_container(&deploy_c).unwrap();
    assert!(deploy.param_count() < train.param_count());
    let x = init::uniform::<f32, _>(&mut init::rng(99), [2, 3, 64, 64], -1.0, 1.0);
    let a = backbone_forward(&x, &train, Form::Train).unwrap();
    let b = backbone_forward(&x, &deploy, Form::Deploy).unwrap();
    assert!(a.max_abs_diff(&b).unwrap() <= 1e-4);

    // already deployed: usage error, nothing written
    let again = dir.path().join("again.json");
    let run = repdet(&["fuse".as_ref(), "--in".as_ref(), out.as_os_str(), "--out".as_ref(), again.as_os_str()]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("deploy"));
    assert!(!again.exists());
}

#[test]
fn fuse_failures_never_write() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let o = out.to_str().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(repdet(&["fuse", "--in", missing.to_str().unwrap(), "--out", o]).code, 3);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"magic\": \"PKW1\", ").unwrap();
    let run = repdet(&["fuse", "--in", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("line"), "{}", run.stderr);
    let input = fixture("toy_train.json");
    assert_eq!(repdet(&["fuse", "--in", input.to_str().unwrap(), "--out", o, "--probe-size", "50"]).code, 2);
    assert_eq!(repdet(&["fuse", "--in", input.to_str().unwrap()]).code, 2);
    assert!(!out.exists());
}

#[test]
fn init_then_fuse_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("t.json");
    let deploy = dir.path().join("d.json");
    for dtype in ["f32", "f64"] {
        let run = repdet(&["--seed", "4", "init", "--dtype", dtype, "--out", train.to_str().unwrap()]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        let run = repdet(&["fuse", "--in", train.to_str().unwrap(), "--out", deploy.to_str().unwrap(), "--format", "json"]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        let v: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
        let dev = v["max_deviation"].as_f64().unwrap();
        assert!(dev <= if dtype == "f32" { 1e-4 } else { 1e-10 }, "{dtype}: {dev}");
    }
    assert_eq!(repdet(&["init", "--channels", "8,8", "--out", train.to_str().unwrap()]).code, 2);
}

#[test]
fn loss_usage_errors() {
    let run = repdet(&["loss", "--variant", "smoothl1", "--pred", "0,0,1,1", "--gt", "0,0,1,1"]);
    assert_eq!(run.code, 2);
    for name in repdet_core::loss::LossVariant::names() {
        assert!(run.stderr.contains(name));
    }
    assert_eq!(repdet(&["loss", "--variant", "mpdiou", "--pred", "0,0,1,1", "--gt", "0,0,1,1"]).code, 2);
    assert_eq!(repdet(&["loss", "--pred", "1,0,0,1", "--gt", "0,0,1,1"]).code, 2);
    assert_eq!(repdet(&["loss", "--pred", "0,0,1", "--gt", "0,0,1,1"]).code, 2);
    assert_eq!(repdet(&["loss", "--pred", "-3,-2,1,1", "--gt", "0,0,1,1"]).code, 0);
}

#[test]
fn identical_boxes_give_zero_for_every_variant() {
    for b in ["0,0,1,1", "3.5,7,90,41", "-20,-20,-5,10"] {
        let run = repdet(&["loss", "--pred", b, "--gt", b, "--img-w", "640", "--img-h", "480", "--format", "json"]);
        assert_eq!(run.code, 0, "{}", run.stderr);
        let v: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
        let losses = v["losses"].as_array().unwrap();
        assert_eq!(losses.len(), 13);
        for l in losses {
            assert_eq!(l["loss"].as_f64(), Some(0.0), "{l}");
        }
    }
}

#[test]
fn gradcheck_exit_codes() {
    assert_eq!(repdet(&["gradcheck", "--trials", "10"]).code, 0);
    assert_eq!(repdet(&["gradcheck", "--trials", "10", "--tol", "1e-12"]).code, 1);
    assert_eq!(repdet(&["gradcheck", "--trials", "0"]).code, 2);
    assert_eq!(repdet(&["gradcheck", "--variant", "siou"]).code, 2);
    assert_eq!(repdet(&["gradcheck", "--tol", "-1"]).code, 2);
}

#[test]
fn eval_json_parses_back_to_library_result() {
    let (gt, dt) = (fixture("gt_two_class.json"), fixture("dt_two_class.json"));
    let run = repdet(&["eval".as_ref(), "--gt".as_ref(), gt.as_os_str(), "--dt".as_ref(), dt.as_os_str(), "--format".as_ref(), "json".as_ref()]);
    assert_eq!(run.code, 0);
    let parsed = EvalResult::from_json(&run.stdout).unwrap();
    let direct = evaluate(
        &load_detections(&dt).unwrap(),
        &load_annotations(&gt).unwrap(),
        &EvalConfig::default(),
        &[0, 1],
    )
    .unwrap();
    assert_eq!(parsed, direct);
}

#[test]
fn eval_format_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("dt.json");
    std::fs::write(&bad, r#"{"images":[{"id":1,"width":4,"height":4}],"detections":[{"image_id":9,"category_id":0,"bbox":[0,0,1,1],"score":0.5}]}"#).unwrap();
    let gt = fixture("gt_two_class.json");
    let run = repdet(&["eval", "--gt", gt.to_str().unwrap(), "--dt", bad.to_str().unwrap()]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains('9'), "{}", run.stderr);
    let run = repdet(&["eval", "--gt", bad.to_str().unwrap(), "--dt", bad.to_str().unwrap()]);
    assert_eq!(run.code, 3);
    assert_eq!(repdet(&["eval", "--gt", gt.to_str().unwrap(), "--dt", gt.to_str().unwrap()]).code, 3);
    let dt = fixture("dt_two_class.json");
    assert_eq!(repdet(&["eval", "--gt", gt.to_str().unwrap(), "--dt", dt.to_str().unwrap(), "--iou-thrs", "0.9:0.5:0.1"]).code, 2);
    assert_eq!(repdet(&["eval", "--gt", gt.to_str().unwrap(), "--dt", dt.to_str().unwrap(), "--interp", "11pt"]).code, 2);
}

#[test]
fn mask_outputs() {
    for (h, w, p) in [(64, 64, 32), (96, 160, 16), (224, 224, 32)] {
        let (hs, ws, ps) = (h.to_string(), w.to_string(), p.to_string());
        let cells = (h / p) * (w / p);
        let zero = repdet(&["mask", "--h", &hs, "--w", &ws, "--patch", &ps, "--ratio", "0"]);
        let one = repdet(&["mask", "--h", &hs, "--w", &ws, "--patch", &ps, "--ratio", "1"]);
        let grid = |s: &str| s.lines().take(h / p).collect::<String>();
        assert_eq!(grid(&zero.stdout), ".".repeat(cells));
        assert_eq!(grid(&one.stdout), "#".repeat(cells));
        assert!(one.stdout.ends_with(&format!("masked fraction 1.0000 ({cells}/{cells})\n")));

        let json = repdet(&["mask", "--h", &hs, "--w", &ws, "--patch", &ps, "--ratio", "0.6", "--seed", "21", "--json"]);
        let parsed: MaskGrid = serde_json::from_str(&json.stdout).unwrap();
        assert_eq!(parsed, generate_mask(h, w, p, 0.6, 21).unwrap());
    }
    assert_eq!(repdet(&["mask", "--h", "65", "--w", "64", "--patch", "32"]).code, 2);
    assert_eq!(repdet(&["mask", "--h", "64", "--w", "64", "--patch", "32", "--ratio", "1.5"]).code, 2);
}

#[test]
fn pretrain_demo_contract() {
    let a = repdet(&["pretrain-demo", "--steps", "5", "--seed", "2", "--format", "json"]);
    let b = repdet(&["pretrain-demo", "--steps", "5", "--seed", "2", "--format", "json"]);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(&a.stdout).unwrap();
    assert_eq!(v["trace"].as_array().unwrap().len(), 5);
    let one = repdet(&["pretrain-demo", "--steps", "1", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&one.stdout).unwrap();
    assert_eq!(v["trace"].as_array().unwrap().len(), 1);
    let improved = v["final_loss"].as_f64().unwrap() < v["initial_loss"].as_f64().unwrap();
    assert_eq!(one.code, if improved { 0 } else { 1 });
    assert_eq!(repdet(&["pretrain-demo", "--steps", "0"]).code, 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let cfg = fixture("run.cfg");
    let c = cfg.to_str().unwrap();
    let from_file = repdet(&["--config", c, "gradcheck", "--trials", "3"]);
    assert!(from_file.stdout.contains("seed 11"), "{}", from_file.stdout);
    let flag = repdet(&["--config", c, "gradcheck", "--trials", "3", "--seed", "12"]);
    assert!(flag.stdout.contains("seed 12"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "seed = 1\nfocaler_u = banana\n").unwrap();
    let run = repdet(&["--config", bad.to_str().unwrap(), "mask", "--h", "64", "--w", "64"]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("line 2") && run.stderr.contains("focaler_u"), "{}", run.stderr);
    let missing = dir.path().join("none.cfg");
    assert_eq!(repdet(&["--config", missing.to_str().unwrap(), "mask", "--h", "64", "--w", "64"]).code, 3);
}

#[test]
fn usage_errors_from_argument_parsing() {
    assert_eq!(repdet::<&str>(&[]).code, 2);
    assert_eq!(repdet(&["frobnicate"]).code, 2);
    assert_eq!(repdet(&["mask", "--h", "64"]).code, 2);
    assert_eq!(repdet(&["--format", "xml", "mask", "--h", "64", "--w", "64"]).code, 2);
    assert_eq!(repdet(&["--help"]).code, 0);
}
