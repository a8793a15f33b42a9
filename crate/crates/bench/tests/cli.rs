use std::path::PathBuf;
use std::process::{Command, Output};

fn dgbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgbench"))
        .args(args)
        .output()
        .expect("run dgbench")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dgbench-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn converged_runs_print_csv_and_exit_zero() {
    let o = dgbench(&[
        "--dim",
        "2",
        "--degree",
        "2",
        "--levels",
        "2..3",
        "--smoother",
        "mcs",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        &header[..6],
        &["level", "dofs", "smoother", "omega", "nu", "nu_frac"]
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "2");
    assert_eq!(rows[1][1], (16 * 16 * 9).to_string());
    for r in &rows {
        assert_eq!(r.len(), header.len());
        let nu: f64 = r[5].parse().unwrap();
        assert!(nu > 1.0 && nu < 20.0);
    }
}

#[test]
fn non_convergence_exits_two() {
    let o = dgbench(&[
        "--dim", "2", "--degree", "2", "--levels", "3", "--max-it", "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).lines().count() == 2);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["--dim", "5"],
        vec!["--smoother", "jacobi"],
        vec!["--omega", "2"],
        vec!["--levels", "4..2"],
        vec!["--mesh", "cartesian", "--distortion", "0.1"],
        vec!["--config", "/nonexistent/file.cfg"],
        vec!["--unknown-flag"],
    ] {
        let o = dgbench(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
    assert_eq!(dgbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let cfg = scratch("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\ndim = 2\ndegree = 1\nlevels = 2\nsmoother = mvs\n",
    )
    .unwrap();
    let out = scratch("run.md");
    let o = dgbench(&[
        "--config",
        cfg.to_str().unwrap(),
        "--smoother",
        "acs",
        "--format",
        "markdown",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("ACS 2D, k = 1"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("| 2 |")).count(), 1);
}

#[test]
fn dump_mesh_writes_vertices_and_cells() {
    let path = scratch("mesh.txt");
    let o = dgbench(&[
        "--dim",
        "2",
        "--levels",
        "1",
        "--coarse",
        "3",
        "--mesh",
        "distorted",
        "--distortion",
        "0.2",
        "--seed",
        "7",
        "--dump-mesh",
        path.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "mesh dim=2 cells_per_dim=6 vertices=49 cells=36"
    );
    let vertices: Vec<&str> = text.lines().filter(|l| l.starts_with("v ")).collect();
    let cells: Vec<&str> = text.lines().filter(|l| l.starts_with("c ")).collect();
    assert_eq!(vertices.len(), 49);
    assert_eq!(cells.len(), 36);
    for c in &cells {
        assert_eq!(c.split_whitespace().count(), 5);
    }
    // the same seed gives the same mesh
    let again = scratch("mesh2.txt");
    dgbench(&[
        "--dim",
        "2",
        "--levels",
        "1",
        "--coarse",
        "3",
        "--mesh",
        "distorted",
        "--distortion",
        "0.2",
        "--seed",
        "7",
        "--dump-mesh",
        again.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
}

#[test]
fn complexity_mode_prints_a_table_per_degree() {
    let o = dgbench(&[
        "--dim",
        "3",
        "--levels",
        "1",
        "--smoother",
        "mcs",
        "--complexity",
        "1,2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("| 1 | 2 |"), "{text}");
    assert!(text.contains("local solvers"));
}
