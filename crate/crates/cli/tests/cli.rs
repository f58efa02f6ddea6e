use std::path::Path;
use std::process::{Command, Output};

fn deasy(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deasy"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small grid with corridor demand and config, written into `dir`.
fn scenario(dir: &Path) {
    let o = deasy(
        &[
            "gen-net", "--rows", "5", "--cols", "6", "--corridor-row", "2", "--out", "net.txt", "--demand-out",
            "demand.txt", "--vehicles", "60", "--depart-window-s", "120", "--incident-column", "2", "--config-out",
            "scenario.cfg",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_net_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for (r, c, nodes, edges) in [("2", "2", 4, 8), ("10", "10", 100, 360)] {
        let o = deasy(&["gen-net", "--rows", r, "--cols", c, "--block-m", "100", "--out", "a.txt"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        let text = std::fs::read_to_string(dir.path().join("a.txt")).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("node ")).count(), nodes);
        assert_eq!(text.lines().filter(|l| l.starts_with("edge ")).count(), edges);
        deasy(&["gen-net", "--rows", r, "--cols", c, "--block-m", "100", "--out", "b.txt"], dir.path());
        assert_eq!(text, std::fs::read_to_string(dir.path().join("b.txt")).unwrap());
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(deasy(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(deasy(&["run", "--config", "x", "--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(deasy(&["gen-net", "--rows", "1", "--out", "n.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(deasy(&["compare", "--config", "x", "--policies", "fastest"], dir.path()).status.code(), Some(2));
    let help = deasy(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
    for sub in ["gen-net", "run", "compare", "sweep", "summary"] {
        assert!(stdout(&help).contains(sub));
    }
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = deasy(&["run", "--config", "missing.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(dir.path().join("bad.cfg"), "seed = 1\nwarp_speed = 9\n").unwrap();
    let o = deasy(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg:2"));
}

#[test]
fn run_compare_sweep_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scenario(d);

    let a = deasy(&["run", "--config", "scenario.cfg", "--seed", "3", "--knowledge-log", "k.csv", "--trace", "t.txt"], d);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = deasy(&["run", "--config", "scenario.cfg", "--seed", "3"], d);
    assert_eq!(stdout(&a), stdout(&b));
    assert_eq!(stdout(&a).lines().count(), 2);
    assert!(std::fs::read_to_string(d.join("k.csv")).unwrap().starts_with("episode,"));
    let r = deasy(&["run", "--config", "scenario.cfg", "--seed", "3", "--replay", "t.txt"], d);
    assert!(r.status.success());
    assert_eq!(stdout(&r), stdout(&a));

    let c = deasy(&["compare", "--config", "scenario.cfg", "--policies", "none,deasy", "--seeds", "1..3", "--out", "cmp.csv"], d);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let text = std::fs::read_to_string(d.join("cmp.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    // Paired seeds share vehicle counts; column 4 is `vehicles`.
    for i in 0..3 {
        assert_eq!(rows[i][0], rows[i + 3][0]);
        assert_eq!(rows[i][4], rows[i + 3][4]);
    }

    let s = deasy(&["sweep", "--config", "scenario.cfg", "--seeds", "1,2", "--rates", "0.5,1", "--out", "sweep.csv"], d);
    assert!(s.status.success());
    assert_eq!(std::fs::read_to_string(d.join("sweep.csv")).unwrap().lines().count(), 5);

    let m = deasy(&["summary", "cmp.csv"], d);
    assert!(m.status.success());
    let out = stdout(&m);
    assert!(out.starts_with("policy,dissemination,penetration_rate,metric,n,mean,ci95_half_width"));
    assert!(out.lines().any(|l| l.starts_with("deasy,zop,1,travel_time_s,3,")));
    assert!(out.lines().any(|l| l.starts_with("none,zop,1,coverage,3,")));
}
