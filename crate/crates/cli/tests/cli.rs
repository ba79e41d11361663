use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bohmflow_cli::config::{Family, NodalMethod, ProjectSource};
use bohmflow_cli::presets::NAMES;
use bohmflow_cli::{preset, run, ConfigError, ConfigSource, RunConfig, RunOptions, Task};
use serde_json::Value;
use sha2::{Digest, Sha256};

const THIRD: f64 = 0.5773502691896258;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bohmflow"));
    cmd.env_remove("BOHMFLOW_OUT")
        .env_remove("BOHMFLOW_THREADS");
    cmd
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run_preset(task: Task, name: &str, out: &Path) -> Value {
    let cfg = preset(name).unwrap();
    let opts = RunOptions {
        out: Some(out.to_path_buf()),
        ..Default::default()
    };
    run(task, &cfg, &ConfigSource::Preset(name.into()), &opts).unwrap();
    read_json(&out.join("manifest.json"))
}

fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::parse(text, &ConfigSource::File("test.toml".into()))
}

#[test]
fn fig9_preset_values() {
    let cfg = preset("fig9").unwrap();
    assert_eq!(cfg.wave.amplitudes, Some([THIRD; 3]));
    assert_eq!(cfg.wave.modes, [[1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    let sc = cfg.scenario.unwrap();
    assert_eq!(sc.initial, vec![[1.297366, -0.262989, 0.946631]]);
    assert_eq!((sc.t0, sc.t1), (4.0, 1000.0));
    let r = sc.initial[0].iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((r - 1.6274).abs() < 5e-5, "{r}");
}

#[test]
fn fig11_preset_values() {
    let cfg = preset("fig11").unwrap();
    let sc = cfg.scenario.unwrap();
    assert_eq!(
        sc.initial,
        vec![[0.8943744433, 0.0, 2.0], [0.0, 1.0 / 2f64.sqrt(), 1.0]]
    );
    assert_eq!((sc.t0, sc.t1), (1.0, 100.0));
    assert_eq!(cfg.surface.unwrap().family, Family::Open);
}

#[test]
fn remaining_preset_values() {
    let sphere = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
    let pear = [[1, 0, 0], [0, 1, 0], [0, 0, 2]];
    let nonint = [[0, 0, 0], [1, 0, 1], [0, 1, 2]];

    let fig1 = preset("fig1").unwrap();
    assert_eq!(fig1.surface.as_ref().unwrap().radius, Some(4.234));
    assert_eq!(fig1.nodal.method, Some(NodalMethod::ClosedForm));

    let fig3 = preset("fig3").unwrap();
    let sc = fig3.scenario.as_ref().unwrap();
    assert_eq!((sc.t0, sc.t1), (1.0, 200.0));
    // [r, θ, φ]
    assert_eq!(
        sc.initial_spherical,
        vec![
            [3.0, 1.7, 0.01],
            [3.0, 1.2, 0.68],
            [3.0, 2.0, -1.0],
            [3.0, 0.8, -0.3]
        ]
    );
    assert_eq!(fig3.surface.as_ref().unwrap().radius, Some(3.0));

    let fig4 = preset("fig4").unwrap();
    let [a, b, c] = fig4.wave.amplitudes.unwrap();
    assert_eq!(c, 0.0545);
    assert_eq!(a, b);
    assert_eq!(fig4.surface.as_ref().unwrap().radius, Some(3.0));
    assert_eq!(fig4.project.source, ProjectSource::Nodes);

    for name in ["fig5", "fig10"] {
        let cfg = preset(name).unwrap();
        assert_eq!(cfg.wave.modes, pear);
        assert_eq!(cfg.wave.amplitudes, Some([THIRD; 3]));
        assert_eq!(cfg.surface.as_ref().unwrap().family, Family::Pear);
    }
    assert_eq!(preset("fig5").unwrap().surface.unwrap().c, Some(1.0));
    assert_eq!(preset("fig7").unwrap().surface.unwrap().c, Some(1.0));
    let fig10 = preset("fig10").unwrap().scenario.unwrap();
    assert_eq!(
        fig10.initial,
        vec![[0.209550, 0.11, 1.45], [0.691268, -0.408571, 0.723687]]
    );

    let fig8 = preset("fig8").unwrap();
    assert_eq!(fig8.wave.modes, sphere);
    assert_eq!(fig8.wave.small_amplitudes, Some([0.1, 0.1]));
    assert_eq!(
        (fig8.integrator.abs_tol, fig8.integrator.rel_tol),
        (1e-7, 1e-6)
    );
    let sc = fig8.scenario.unwrap();
    assert_eq!(
        (sc.initial.clone(), sc.t0, sc.t1),
        (vec![[1.0, 0.0, 1.0]], 0.0, 200.0)
    );

    for name in ["fig12", "fig13"] {
        let cfg = preset(name).unwrap();
        assert_eq!(cfg.wave.modes, nonint);
        assert_eq!(cfg.wave.small_amplitudes, Some([0.1, 0.1]));
        let sc = cfg.scenario.unwrap();
        assert_eq!(
            (sc.initial, sc.t0, sc.t1),
            (vec![[0.6, 0.6, 0.6]], 0.0, 100.0)
        );
    }

    let fig14 = preset("fig14").unwrap();
    assert_eq!(fig14.wave.modes, nonint);
    assert_eq!(fig14.wave.amplitudes, Some([THIRD; 3]));
    let sc = fig14.scenario.unwrap();
    assert_eq!(
        (sc.initial, sc.t0, sc.t1),
        (vec![[-0.5, 0.33, 0.732]], 0.0, 1000.0)
    );
}

#[test]
fn unknown_preset() {
    assert!(matches!(
        preset("nonexistent"),
        Err(ConfigError::UnknownPreset { .. })
    ));
    let out = bin()
        .args(["simulate", "--preset", "nonexistent"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nonexistent") && err.contains("fig8"), "{err}");
}

#[test]
fn empty_config_names_the_first_missing_field() {
    let err = parse("").unwrap_err();
    assert!(err.to_string().contains("missing field `wave`"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.toml");
    std::fs::write(&path, "").unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing field `wave`"));
}

#[test]
fn config_errors_carry_line_and_field() {
    let text = "[wave]\nmodes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\namplitudes = \"oops\"\n";
    match parse(text).unwrap_err() {
        ConfigError::Parse { line, message, .. } => {
            assert_eq!(line, Some(3), "{message}");
        }
        e => panic!("{e}"),
    }
    let text = "[wave]\nmodes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\n";
    assert!(matches!(parse(text), Err(ConfigError::Missing(f)) if f == "wave.amplitudes"));
    let text = "[wave]\nmodes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\namplitudes = [1.0, 1.0, 1.0]\n";
    assert!(matches!(parse(text), Err(ConfigError::Invalid { field, .. }) if field == "wave"));
    let text = "[wave]\nmodes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\nsmall_amplitudes = [0.1, 0.1]\nbogus = 1\n";
    assert!(parse(text).unwrap_err().to_string().contains("bogus"));
    assert!(matches!(
        parse("preset = \"fig99\"\n"),
        Err(ConfigError::UnknownPreset { .. })
    ));
}

#[test]
fn config_files_can_extend_a_preset() {
    let cfg = parse("preset = \"fig8\"\n[scenario]\nt1 = 10.0\n").unwrap();
    let sc = cfg.scenario.as_ref().unwrap();
    assert_eq!((sc.t0, sc.t1), (0.0, 10.0));
    assert_eq!(sc.initial, vec![[1.0, 0.0, 1.0]]);
    assert_eq!(cfg.preset.as_deref(), Some("fig8"));
}

#[test]
fn simulate_fig8_writes_trajectory_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--preset", "fig8", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y,z"));
    assert_eq!(lines.count(), 4001);

    let report = read_json(&dir.path().join("report.json"));
    let drift = report["orbits"][0]["surface_drift_max"].as_f64().unwrap();
    assert!(drift < 1e-5, "{drift}");

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["task"], "simulate");
    assert_eq!(manifest["source"]["preset"], "fig8");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["timings"]["total_s"].as_f64().unwrap() >= 0.0);
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 2);
    for a in artifacts {
        let bytes = std::fs::read(dir.path().join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(
            a["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
}

#[test]
fn identical_runs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for task in [Task::Simulate, Task::Perturb] {
        let ma = run_preset(task, "fig12", a.path());
        let mb = run_preset(task, "fig12", b.path());
        assert_eq!(ma["inputs_sha256"], mb["inputs_sha256"]);
        assert_eq!(ma["artifacts"], mb["artifacts"]);
        for art in ma["artifacts"].as_array().unwrap() {
            let name = art["path"].as_str().unwrap();
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap()
            );
        }
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = preset("fig3").unwrap();
    let src = ConfigSource::Preset("fig3".into());
    for (dir, threads) in [(&a, 1), (&b, 3)] {
        let opts = RunOptions {
            out: Some(dir.path().to_path_buf()),
            threads: Some(threads),
            ..Default::default()
        };
        run(Task::Simulate, &cfg, &src, &opts).unwrap();
    }
    for i in 0..4 {
        let name = format!("trajectory_{i}.csv");
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap()
        );
    }
}

#[test]
fn classify_open_surface_modes_is_none() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("[wave]\nmodes = [[0, 0, 0], [1, 1, 0], [1, 0, 2]]\namplitudes = [{THIRD}, {THIRD}, {THIRD}]\n")).unwrap();
    let out = bin()
        .arg("classify")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json = read_json(&dir.path().join("classify.json"));
    assert_eq!(json["kind"], "NONE", "{json}");
}

#[test]
fn classify_nonintegrable_and_sphere_modes() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::Classify, "fig14", dir.path());
    let json = read_json(&dir.path().join("classify.json"));
    assert_eq!(json["kind"], "NONE");
    assert_eq!(
        json["modes"],
        serde_json::json!([[0, 0, 0], [1, 0, 1], [0, 1, 2]])
    );
    run_preset(Task::Classify, "fig9", dir.path());
    let json = read_json(&dir.path().join("classify.json"));
    assert_eq!(json["kind"], "PARTIAL");
}

#[test]
fn numerical_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "preset = \"fig8\"\n[integrator]\nmax_steps = 10\n").unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("simulate") && err.contains("orbit 0"), "{err}");
}

#[test]
fn unwritable_output_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = bin()
        .args(["classify", "--preset", "fig8", "--out"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not writable"));
}

#[test]
fn environment_overrides_output_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["retrace", "--preset", "fig8"])
        .env("BOHMFLOW_OUT", dir.path())
        .env("BOHMFLOW_THREADS", "2")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["threads"], 2);
    let retrace = read_json(&dir.path().join("retrace.json"));
    assert!(retrace["orbits"][0]["retrace_error"].as_f64().unwrap() < 1e-4);

    let out = bin()
        .args(["classify", "--preset", "fig8"])
        .env("BOHMFLOW_OUT", dir.path())
        .env("BOHMFLOW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dt_flag_resamples_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--preset", "fig8", "--dt", "0.5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 402);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["config"]["scenario"]["sample_dt"], 0.5);
}

#[test]
fn input_flags_are_exclusive_and_required() {
    assert_eq!(
        bin().arg("simulate").output().unwrap().status.code(),
        Some(2)
    );
    let both = bin()
        .args(["simulate", "--preset", "fig8", "--config", "x.toml"])
        .output()
        .unwrap();
    assert_eq!(both.status.code(), Some(2));
}

#[test]
fn sphere_report_labels_fig3_orbits() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::Report, "fig3", dir.path());
    let report = read_json(&dir.path().join("report.json"));
    let labels: Vec<&str> = report["orbits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["label"].as_str().unwrap())
        .collect();
    assert_eq!(
        labels,
        [
            "ORDERED_CANDIDATE",
            "ORDERED_CANDIDATE",
            "CHAOTIC_CANDIDATE",
            "CHAOTIC_CANDIDATE"
        ]
    );
}

#[test]
fn fig9_report_shows_the_initial_loops() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::Report, "fig9", dir.path());
    let orbit = &read_json(&dir.path().join("report.json"))["orbits"][0];
    let [a, b] = [0, 1].map(|i| orbit["node_loop_interval"][i].as_f64().unwrap());
    assert_eq!(a, 4.0);
    assert!((b - a - 4.5).abs() <= 1.0, "{a} {b}");
    assert!(orbit["surface_drift_max"].as_f64().unwrap() < 1e-4);
    assert_eq!(orbit["label"], "CHAOTIC_CANDIDATE");
}

#[test]
fn fig1_nodes_lie_on_the_sphere() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::NodalTrack, "fig1", dir.path());
    for k in 0..2 {
        let csv = std::fs::read_to_string(dir.path().join(format!("nodes_{k}.csv"))).unwrap();
        for line in csv.lines().skip(1) {
            let v: Vec<f64> = line
                .split(',')
                .take(4)
                .map(|s| s.parse().unwrap())
                .collect();
            let r = (v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
            assert!((r - 4.234).abs() < 1e-9, "{line}");
        }
    }
}

#[test]
fn fig4_nodes_concentrate_on_four_directions() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::Project, "fig4", dir.path());
    let json = read_json(&dir.path().join("project.json"));
    assert!(
        json["special_direction_mass"].as_f64().unwrap() >= 0.9,
        "{json}"
    );
    let csv = std::fs::read_to_string(dir.path().join("occupancy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 18 * 36);
}

#[test]
fn fig13_second_order_deviation() {
    let dir = tempfile::tempdir().unwrap();
    run_preset(Task::Perturb, "fig13", dir.path());
    let json = read_json(&dir.path().join("perturb.json"));
    let devs = &json["orbits"][0]["deviations"];
    let (d1, d2) = (
        devs[0]["overall_mean"].as_f64().unwrap(),
        devs[1]["overall_mean"].as_f64().unwrap(),
    );
    assert!(d2 < d1);
    for m in devs[1]["mean"].as_array().unwrap() {
        assert!((2e-4..5e-3).contains(&m.as_f64().unwrap()), "{m}");
    }
    assert!(json["orbits"][0]["order1_plane"]["normal"].is_array());
    assert!(dir.path().join("series_0_order2.json").exists());
    assert!(dir.path().join("deviation_0_order2.csv").exists());
}

#[test]
fn xpoints_on_the_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(&format!(
        "[wave]\nmodes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]\namplitudes = [{THIRD}, {THIRD}, {THIRD}]\n\
         [surface]\nfamily = \"sphere\"\nradius = 3.0\n[xpoint]\ntimes = [1.0, 4.0]\n"
    ))
    .unwrap();
    let opts = RunOptions {
        out: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    run(
        Task::Xpoint,
        &cfg,
        &ConfigSource::File("x.toml".into()),
        &opts,
    )
    .unwrap();
    let json = read_json(&dir.path().join("xpoint.json"));
    let found = json["found"].as_array().unwrap();
    assert!(!found.is_empty());
    for x in found {
        assert_eq!(x["t"], 4.0);
        let e = &x["eigvals"];
        assert!(e[0].as_f64().unwrap() * e[1].as_f64().unwrap() < 0.0);
    }
    // the slow node of t = 1 has no saddle
    assert!(json["misses"]
        .as_array()
        .unwrap()
        .iter()
        .any(|m| m["t"] == 1.0));
}

#[test]
fn every_preset_runs_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    for name in NAMES {
        let cfg = preset(name).unwrap();
        let task = cfg.task.expect("presets name their task");
        let start = Instant::now();
        let manifest = run_preset(task, name, &dir.path().join(name));
        let took = start.elapsed();
        assert!(took < Duration::from_secs(300), "{name}: {took:?}");
        assert_eq!(manifest["task"], serde_json::to_value(task).unwrap());
        assert!(
            !manifest["artifacts"].as_array().unwrap().is_empty(),
            "{name}"
        );
    }
}
