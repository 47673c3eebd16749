use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pic(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pic"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("running pic")
}

fn ok(args: &[&str], dir: &Path) -> Vec<Value> {
    let out = pic(args, dir);
    assert!(
        out.status.success(),
        "pic {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    json_lines(&out)
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| {
            serde_json::from_str(l).unwrap_or_else(|e| panic!("stdout line is not JSON ({e}): {l}"))
        })
        .collect()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    pic(args, dir).status.code().expect("exit code")
}

/// A 64x64 synthetic clip and an initial model in a fresh directory.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "synth", "-o", "clip.y4m", "--frames", "36", "--width", "64", "--height", "64",
        ],
        dir.path(),
    );
    ok(
        &["init", "clip.y4m", "-o", "init.picm", "--warmup", "6"],
        dir.path(),
    );
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn encode_bpp_matches_eval_and_decode_matches_psnr() {
    let dir = workspace();
    let d = dir.path();
    let qps = [8, 24, 40, 56];
    let mut encoded = Vec::new();
    for qp in qps {
        let out = format!("q{qp}.pic");
        let lines = ok(
            &[
                "encode",
                "clip.y4m",
                "--model",
                "init.picm",
                "--qp",
                &qp.to_string(),
                "-o",
                &out,
            ],
            d,
        );
        assert_eq!(
            lines.len(),
            36 + 1,
            "one stats line per frame plus a summary"
        );
        assert_eq!(lines[0]["frame"], 0);
        let summary = lines.last().unwrap();
        let bytes = fs::metadata(d.join(&out)).unwrap().len();
        assert_eq!(summary["container_bytes"].as_u64().unwrap(), bytes);
        encoded.push(summary["bpp"].as_f64().unwrap());
    }
    let curve = ok(
        &[
            "eval",
            "clip.y4m",
            "--model",
            "init.picm",
            "--qp-list",
            "8,24,40,56",
        ],
        d,
    );
    assert_eq!(curve.len(), 1);
    let points = curve[0].as_array().unwrap();
    assert_eq!(points.len(), 4);
    let mut eval_bpp: Vec<f64> = points.iter().map(|p| p["bpp"].as_f64().unwrap()).collect();
    let mut enc_bpp = encoded.clone();
    eval_bpp.sort_by(f64::total_cmp);
    enc_bpp.sort_by(f64::total_cmp);
    assert_eq!(eval_bpp, enc_bpp, "eval and encode bpp must agree exactly");

    // decoding the qp 24 stream reproduces eval's PSNR for that point
    ok(
        &["decode", "q24.pic", "--model", "init.picm", "-o", "q24.y4m"],
        d,
    );
    let src = pic_core::read_y4m(fs::read(d.join("clip.y4m")).unwrap().as_slice()).unwrap();
    let dec = pic_core::read_y4m(fs::read(d.join("q24.y4m")).unwrap().as_slice()).unwrap();
    let psnr = pic_core::metrics::clip_quality(&src, &dec)
        .unwrap()
        .psnr_weighted;
    let point = points
        .iter()
        .find(|p| p["bpp"].as_f64() == Some(encoded[1]))
        .unwrap();
    assert_eq!(point["psnr"].as_f64().unwrap(), psnr);
    assert!(d.join("q24.y4m").exists());
}

#[test]
fn exit_codes_follow_the_table() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(
        code(
            &[
                "encode",
                "clip.y4m",
                "--model",
                "init.picm",
                "--qp",
                "64",
                "-o",
                "x.pic"
            ],
            d
        ),
        5
    );
    assert_eq!(
        code(
            &[
                "encode",
                "clip.y4m",
                "--model",
                "init.picm",
                "--qp",
                "-1",
                "-o",
                "x.pic"
            ],
            d
        ),
        5
    );
    assert_eq!(
        code(
            &[
                "encode",
                "missing.y4m",
                "--model",
                "init.picm",
                "--qp",
                "8",
                "-o",
                "x.pic"
            ],
            d
        ),
        2
    );
    ok(
        &[
            "encode",
            "clip.y4m",
            "--model",
            "init.picm",
            "--qp",
            "30",
            "-o",
            "a.pic",
        ],
        d,
    );

    // a model from different footage has a different digest
    ok(
        &[
            "synth",
            "-o",
            "other.y4m",
            "--frames",
            "4",
            "--width",
            "64",
            "--height",
            "64",
            "--seed",
            "5",
        ],
        d,
    );
    ok(&["init", "other.y4m", "-o", "other.picm"], d);
    assert_eq!(
        code(
            &["decode", "a.pic", "--model", "other.picm", "-o", "z.y4m"],
            d
        ),
        4
    );

    let mut stream = fs::read(d.join("a.pic")).unwrap();
    stream.truncate(stream.len() - 3);
    fs::write(d.join("cut.pic"), &stream).unwrap();
    assert_eq!(
        code(
            &["decode", "cut.pic", "--model", "init.picm", "-o", "z.y4m"],
            d
        ),
        3
    );
    fs::write(d.join("junk.y4m"), b"not a video\n").unwrap();
    assert_eq!(
        code(
            &[
                "encode",
                "junk.y4m",
                "--model",
                "init.picm",
                "--qp",
                "8",
                "-o",
                "x.pic"
            ],
            d
        ),
        3
    );

    ok(
        &[
            "synth",
            "-o",
            "small.y4m",
            "--frames",
            "2",
            "--width",
            "32",
            "--height",
            "32",
        ],
        d,
    );
    assert_eq!(
        code(
            &[
                "encode",
                "small.y4m",
                "--model",
                "init.picm",
                "--qp",
                "8",
                "-o",
                "x.pic"
            ],
            d
        ),
        3
    );

    assert_eq!(code(&["encode", "clip.y4m"], d), 5);
    assert_eq!(code(&["no-such-command"], d), 5);
    assert_eq!(code(&["--help"], d), 0);
    assert_eq!(code(&["--version"], d), 0);
    write(d, "bad.conf", "quality.nonsense = 1\n");
    assert_eq!(
        code(
            &[
                "encode",
                "clip.y4m",
                "--model",
                "init.picm",
                "--qp",
                "8",
                "-o",
                "x.pic",
                "--config",
                "bad.conf"
            ],
            d
        ),
        5
    );
}

#[test]
fn eval_with_too_few_points_prints_the_list() {
    let dir = workspace();
    let out = pic(
        &[
            "eval",
            "clip.y4m",
            "--model",
            "init.picm",
            "--qp-list",
            "20",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let lines = json_lines(&out);
    let list = lines[0].as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["qp"], 20);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fewer than"));
}

fn finetune_conf(d: &Path, epochs: usize, out: &str) -> PathBuf {
    write(
        d,
        &format!("{out}.conf"),
        &format!(
            "paths.dataset = clip.y4m\npaths.model = init.picm\npaths.output = {out}\ntrain.epochs = {epochs}\ntrain.clip_len = 4\ntrain.seed = 3\n"
        ),
    )
}

#[test]
fn finetune_zero_epochs_copies_and_seeded_runs_repeat() {
    let dir = workspace();
    let d = dir.path();
    finetune_conf(d, 0, "zero");
    ok(&["finetune", "zero.conf"], d);
    assert_eq!(
        fs::read(d.join("zero/model.picm")).unwrap(),
        fs::read(d.join("init.picm")).unwrap()
    );
    let log: Value =
        serde_json::from_slice(&fs::read(d.join("zero/trainlog.json")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 0);

    finetune_conf(d, 3, "a");
    finetune_conf(d, 3, "b");
    let lines = ok(&["finetune", "a.conf"], d);
    assert_eq!(lines.len(), 3 + 1, "one line per epoch plus a summary");
    ok(&["finetune", "b.conf"], d);
    assert_eq!(
        fs::read(d.join("a/model.picm")).unwrap(),
        fs::read(d.join("b/model.picm")).unwrap()
    );
    assert_eq!(
        fs::read(d.join("a/trainlog.json")).unwrap(),
        fs::read(d.join("b/trainlog.json")).unwrap()
    );
    assert_ne!(
        fs::read(d.join("a/model.picm")).unwrap(),
        fs::read(d.join("init.picm")).unwrap()
    );

    // presets are selectable; explicit keys in the file still win
    ok(&["finetune", "a.conf", "--preset", "ssf"], d);
    assert_eq!(code(&["finetune", "a.conf", "--preset", "nope"], d), 5);
    write(
        d,
        "nodata.conf",
        "paths.dataset = nowhere\npaths.model = init.picm\npaths.output = o\n",
    );
    assert_eq!(code(&["finetune", "nodata.conf"], d), 2);
    assert_eq!(code(&["finetune", "absent.conf"], d), 2);
    write(
        d,
        "typo.conf",
        "paths.dataset = clip.y4m\ntrain.epoch = 3\n",
    );
    assert_eq!(code(&["finetune", "typo.conf"], d), 5);
}

#[test]
fn bdrate_cases() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let curve = |pts: &[(f64, f64)]| {
        serde_json::to_string(
            &pts.iter()
                .map(|(b, p)| serde_json::json!({"bpp": b, "psnr": p}))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    };
    let base = [(0.1, 30.0), (0.2, 33.0), (0.4, 35.5), (0.8, 37.5)];
    write(d, "a.json", &curve(&base));
    write(d, "double.json", &curve(&base.map(|(b, p)| (2.0 * b, p))));
    write(d, "far.json", &curve(&base.map(|(b, p)| (b, p + 20.0))));
    write(d, "three.json", &curve(&base[..3]));
    let rate = |args: &[&str]| ok(args, d)[0]["bd_rate"].as_f64().unwrap();
    assert!(rate(&["bdrate", "a.json", "a.json"]).abs() < 1e-9);
    assert!((rate(&["bdrate", "a.json", "double.json", "--interp", "cubic"]) - 100.0).abs() < 0.05);
    assert!((rate(&["bdrate", "a.json", "double.json", "--window", "31:35"]) - 100.0).abs() < 0.05);
    let no_overlap = pic(&["bdrate", "a.json", "far.json"], d);
    assert_eq!(no_overlap.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&no_overlap.stderr).contains("overlap"));
    assert_eq!(code(&["bdrate", "a.json", "three.json"], d), 3);
    assert_eq!(
        code(&["bdrate", "a.json", "a.json", "--interp", "linear"], d),
        5
    );
    assert_eq!(
        code(&["bdrate", "a.json", "a.json", "--window", "35"], d),
        5
    );
}

#[test]
fn classify_windows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let still = pic_core::VideoClip::new(
        vec![pic_core::Frame::filled(32, 32, 50, 128, 128).unwrap(); 10],
        25,
        1,
    )
    .unwrap();
    pic_core::write_y4m(&still, fs::File::create(d.join("still.y4m")).unwrap()).unwrap();
    ok(
        &[
            "synth",
            "--noise",
            "-o",
            "noise.y4m",
            "--frames",
            "10",
            "--width",
            "32",
            "--height",
            "32",
        ],
        d,
    );

    let lines = ok(&["classify", "still.y4m", "--window", "4"], d);
    assert_eq!(lines.len(), 3, "a 2-frame tail stays its own window");
    assert!(lines.iter().all(|l| l["class"] == "Static"));
    let lines = ok(&["classify", "noise.y4m", "--window", "5"], d);
    assert!(lines.iter().all(|l| l["class"] == "Dynamic"));
    let lines = ok(&["classify", "noise.y4m", "--window", "1000"], d);
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["frames"], 10);
    assert_eq!(code(&["classify", "noise.y4m", "--window", "1"], d), 5);
}

#[test]
fn report_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(
        d,
        "pic.json",
        r#"[{"bpp":0.1,"psnr":30},{"bpp":0.2,"psnr":33},{"bpp":0.4,"psnr":35},{"bpp":0.8,"psnr":37}]"#,
    );
    write(
        d,
        "ref.json",
        r#"[{"bpp":0.15,"psnr":30},{"bpp":0.3,"psnr":33},{"bpp":0.5,"psnr":35},{"bpp":1.0,"psnr":37}]"#,
    );
    ok(
        &[
            "report", "pic.json", "ref.json", "--svg", "rd.svg", "--csv", "rd.csv",
        ],
        d,
    );
    let svg = fs::read_to_string(d.join("rd.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert_eq!(svg.matches(r#"class="legend""#).count(), 2);
    let csv = fs::read_to_string(d.join("rd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    assert_eq!(code(&["report", "--svg", "rd.svg"], d), 5);
}

#[test]
fn baseline_runs_an_external_codec() {
    let dir = workspace();
    let d = dir.path();
    let stub = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub_codec.py");
    write(
        d,
        "base.conf",
        &format!(
            "baseline.stub.encode = python3 {0} encode {{input}} {{output}} {{quality}}\n\
             baseline.stub.decode = python3 {0} decode {{input}} {{output}}\n\
             baseline.stub.quality_values = 24,12,6,3\n\
             baseline.gone.encode = no-such-encoder {{input}} {{output}} {{quality}}\n\
             baseline.gone.decode = no-such-decoder {{input}} {{output}}\n\
             baseline.gone.quality_values = 1,2,3,4\n",
            stub.display()
        ),
    );
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let lines = ok(
        &[
            "baseline",
            "clip.y4m",
            "--config",
            "base.conf",
            "--name",
            "stub",
            "--work-dir",
            "work",
            "--parallel",
            "2",
        ],
        d,
    );
    let pts = lines[0].as_array().unwrap();
    assert_eq!(pts.len(), 4);
    assert!(d.join("work/stub_q0.bin").exists());
    assert_eq!(
        code(
            &[
                "baseline",
                "clip.y4m",
                "--config",
                "base.conf",
                "--name",
                "gone",
                "--work-dir",
                "w2"
            ],
            d
        ),
        2
    );
    assert_eq!(
        code(
            &[
                "baseline",
                "clip.y4m",
                "--config",
                "base.conf",
                "--name",
                "absent",
                "--work-dir",
                "w3"
            ],
            d
        ),
        5
    );
}
