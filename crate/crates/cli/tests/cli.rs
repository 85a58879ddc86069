use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_magic-mps"));
    cmd.env_remove("MAGIC_MPS_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

const MINIMAL_EXP1: &str = "[exp1]\nn_list = 8\nchi_list = 1..=12\nn_trajectories = 10\nn_samples = 300\nmaster_seed = 5\n";

#[test]
fn exp1_minimal_config_row_counts_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e1.cfg", MINIMAL_EXP1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let res = run(&["exp1", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    assert_eq!(data_rows(&a.join("averages.csv")).len(), 12);
    let fits = data_rows(&a.join("fits.csv"));
    let alpha2: Vec<&String> = fits.iter().filter(|r| r.starts_with("8,all,2,log-linear-chi")).collect();
    assert_eq!(alpha2.len(), 1);
    for f in ["averages.csv", "deviations.csv", "fits.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let meta = fs::read_to_string(a.join("metadata.json")).unwrap();
    assert!(meta.contains("\"config\": \"[exp1]\\nn_list = 8"));
}

#[test]
fn single_bond_dimension_fit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL_EXP1.replace("chi_list = 1..=12", "chi_list = 1");
    let cfg = write_config(dir.path(), "e1.cfg", &text);
    let out = dir.path().join("b");
    let res = run(&["exp1", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(data_rows(&out.join("deviations.csv")).len(), 1);
    let fits = data_rows(&out.join("fits.csv"));
    let row = fits.iter().find(|r| r.starts_with("8,all,2,")).unwrap();
    assert!(row.contains("rejected") && row.contains("fewer than 3 usable points"), "{row}");
}

#[test]
fn exp2_time_rows_and_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[exp2]\nn_list = 11\nchi_sre_map = 11:15\ncompare_chi = 11:32\nn_trajectories = 4\nn_samples = 50\n";
    let cfg = write_config(dir.path(), "e2.cfg", text);
    let out = dir.path().join("b");
    let res = run(&["exp2", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows = data_rows(&out.join("timeseries.csv"));
    assert_eq!(rows.iter().filter(|r| r.starts_with("11,15,")).count(), 21);
    assert_eq!(rows.iter().filter(|r| r.starts_with("11,32,")).count(), 21);
    assert_eq!(data_rows(&out.join("comparison.csv")).len(), 21);
    assert!(data_rows(&out.join("saturation.csv")).len() >= 3);
    assert!(data_rows(&out.join("fits.csv")).iter().any(|r| r.contains("log-linear-t")));
}

#[test]
fn invalid_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let depth0 = write_config(dir.path(), "d0.cfg", "[exp2]\nn_list = 11\nchi_sre_map = 11:15\ndepth = 0\n");
    let res = run(&["exp2", "--config", &depth0, "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("depth"), "{}", stderr(&res));

    let bad = write_config(dir.path(), "bad.cfg", "[exp1]\nn_list 8\n");
    let res = run(&["exp1", "--config", &bad]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("line 2"), "{}", stderr(&res));

    let res = run(&["exp1", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert!(!res.status.success());

    let big = write_config(dir.path(), "big.cfg", "[exp1]\nn_list = 40\nchi_list = 2\n");
    let res = run(&["exp1", "--config", &big, "--desk-scale"]);
    assert!(!res.status.success());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[exp1]\nn_list = 4\nchi_list = 1, 2\ndepth = 2\nn_trajectories = 2\nn_samples = 10\n";
    let cfg = write_config(dir.path(), "e1.cfg", text);
    let out = dir.path().join("from_env");
    let res = bin()
        .args(["exp1", "--config", &cfg, "--seed", "77"])
        .env("MAGIC_MPS_OUT", &out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    let meta = fs::read_to_string(out.join("metadata.json")).unwrap();
    assert!(meta.contains("\"master_seed\": 77"));
}

fn report_value(text: &str, prefix: &str) -> Vec<f64> {
    let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
    line[prefix.len()..]
        .split(|c: char| c == '/' || c == '(' || c == ')' || c.is_whitespace())
        .filter_map(|w| w.parse().ok())
        .collect()
}

#[test]
fn oracle_check_reports() {
    let res = run(&["oracle-check", "--n", "2", "--depth", "0"]);
    assert!(res.status.success());
    let text = stdout(&res);
    assert_eq!(report_value(&text, "M2 exact / sampled"), vec![0.0, 0.0, 0.0]);
    assert!(text.trim_end().ends_with("PASS"));

    let res = run(&["oracle-check", "--n", "6", "--depth", "12", "--seed", "3"]);
    assert!(res.status.success(), "{}", stdout(&res));

    let res = run(&["oracle-check", "--n", "8", "--depth", "40", "--samples", "200"]);
    let m2 = report_value(&stdout(&res), "M2 exact / sampled")[0];
    let haar = -(4.0f64 / (256.0 + 3.0)).ln();
    assert!((m2 - haar).abs() <= 0.1, "{m2} vs {haar}");

    let res = run(&["oracle-check", "--n", "12"]);
    assert!(!res.status.success());
}

#[test]
fn sample_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let res = run(&["sample", "--n", "5", "--depth", "6", "--chi", "inf", "--samples", "25", "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows = data_rows(&out.join("samples.csv"));
    assert_eq!(rows.len(), 25);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[2].len(), 5);
    assert!(run(&["sample", "--chi", "zero"]).status.code() != Some(0));
}

#[test]
fn fit_and_plot_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "e1.cfg", MINIMAL_EXP1);
    let out = dir.path().join("b");
    let out_s = out.to_str().unwrap();
    assert!(run(&["exp1", "--config", &cfg, "--out", out_s]).status.success());

    let res = run(&["fit", "--bundle", out_s]);
    assert!(res.status.success(), "{}", stderr(&res));

    let res = run(&["plot", "--bundle", out_s]);
    assert!(res.status.success(), "{}", stderr(&res));
    let listed = stdout(&res);
    assert!(listed.contains("ln_delta_m1_vs_chi.svg") && listed.contains("ln_delta_m2_vs_chi.svg"));
    let first = fs::read(out.join("ln_delta_m2_vs_chi.svg")).unwrap();
    assert!(String::from_utf8_lossy(&first).contains("stroke-dasharray"));
    assert!(run(&["plot", "--bundle", out_s]).status.success());
    assert_eq!(first, fs::read(out.join("ln_delta_m2_vs_chi.svg")).unwrap());

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    fs::write(empty.join("averages.csv"), "# schema: averages v1\nN,chi,m1_bar\n").unwrap();
    let res = bin().args(["plot", "--bundle", empty.to_str().unwrap()]).env("RUST_LOG", "warn").output().unwrap();
    assert!(res.status.success());
    assert!(stderr(&res).contains("no data rows"), "{}", stderr(&res));
    assert!(fs::read_dir(&empty).unwrap().all(|e| !e.unwrap().path().extension().is_some_and(|x| x == "svg")));

    assert!(!run(&["plot", "--bundle", dir.path().join("nope").to_str().unwrap()]).status.success());
}
