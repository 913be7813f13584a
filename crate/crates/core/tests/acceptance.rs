//! Acceptance run: one line per criterion, nonzero exit if any fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mwtomo::config::RunConfig;
use mwtomo::domain::{ComplexPermittivity, Mesh, PermittivityMap};
use mwtomo::enhance::{equalize, ks_uniform_distance, Channel, ImageGrid};
use mwtomo::inverse::{run_inversion, InverseConfig};
use mwtomo::linalg::norm2;
use mwtomo::measurement::{read_dataset, synthesize, FieldMode};
use mwtomo::pipeline::branch_dir_name;
use mwtomo::pipeline::validation::{cylinder_error, toy_jacobian_error};
use mwtomo::pipeline::{cmd_pipeline, Experiment, PipelineReport};

use common::{grid_search, one_cell};

type Outcome = Result<String, String>;

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    match out {
        Ok(msg) if took <= limit => Ok(format!("{msg} [{:.1} s]", took.as_secs_f64())),
        Ok(msg) => Err(format!("{msg} but took {:.1} s (limit {} s)", took.as_secs_f64(), limit.as_secs())),
        Err(msg) => Err(format!("{msg} [{:.1} s]", took.as_secs_f64())),
    }
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_pipeline(percents: &[f64], dir: &Path) -> (Experiment, PipelineReport) {
    let mut config = RunConfig::default();
    config.noise.percents = percents.to_vec();
    let exp = Experiment::new(config).expect("default config builds");
    let report = cmd_pipeline(&exp, dir).expect("pipeline runs");
    (exp, report)
}

fn criterion_1() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (eps, tol) in [(ComplexPermittivity::new(8.0, -1.2), 0.02), (ComplexPermittivity::new(50.0, -23.0), 0.05)] {
        let r = timed(Duration::from_secs(30), || {
            let err = cylinder_error(1.8, eps, 0.3, 1.0).map_err(|e| e.to_string())?;
            check(err <= tol, format!("{eps}: {err:.4} <= {tol}"))
        });
        ok &= r.is_ok();
        lines.push(r.unwrap_or_else(|e| e));
    }
    check(ok, lines.join("; "))
}

fn criterion_2() -> Outcome {
    let exp = Experiment::new(RunConfig::default()).map_err(|e| e.to_string())?;
    let small = Mesh::uniform(common::grid(3, 0.6));
    let small_geometry = common::small_geometry(small.outer());
    let mut worst = 0.0_f64;
    for (mesh, geometry) in [
        (&exp.fine, &exp.geometry),
        (&exp.coarse, &exp.geometry),
        (&small, &small_geometry),
    ] {
        let map = PermittivityMap::constant(mesh.clone(), ComplexPermittivity::FREE_SPACE);
        let set = synthesize(&map, geometry, 1.0, FieldMode::Scattered).map_err(|e| e.to_string())?;
        worst = set.values.iter().fold(worst, |m, v| m.max(v.norm()));
    }
    check(worst <= 1e-12, format!("max |scattered| {worst:.2e} on fine, coarse and 3x3 meshes"))
}

fn criterion_3() -> Outcome {
    timed(Duration::from_secs(60), || {
        let err = toy_jacobian_error(1e-5).map_err(|e| e.to_string())?;
        check(err <= 1e-4, format!("max relative entry error {err:.2e} <= 1e-4"))
    })
}

fn criterion_4() -> Outcome {
    timed(Duration::from_secs(120), || {
        let setup = one_cell(ComplexPermittivity::new(30.0, -9.0));
        let oracle = grid_search(&setup);
        let config = InverseConfig {
            initial_guess: ComplexPermittivity::FREE_SPACE,
            stop_residual: 1e-14,
            max_iterations: 100,
            ..InverseConfig::default()
        };
        let out = run_inversion(&setup.problem, &setup.data, &config).map_err(|e| e.to_string())?;
        let got = out.state.epsilon[0];
        let d = (got.re - oracle.re).abs().max((got.im - oracle.im).abs());
        check(d <= 1e-3, format!("LM {got} vs grid search {oracle}, max difference {d:.1e}"))
    })
}

fn criterion_5(noiseless: &PipelineReport) -> Outcome {
    let b = &noiseless.branches[0];
    let residual = b.final_residual.unwrap_or(f64::NAN);
    let iterations = b.iterations.unwrap_or(usize::MAX);
    let mut ok = b.status == "converged" && residual <= 1e-4 && iterations <= 50;
    let mut parts = vec![format!("{} after {iterations} iterations, residual {residual:.2e}", b.status)];
    for m in &b.region_means {
        let e_re = (m.re - m.true_re).abs() / m.true_re.abs();
        let e_im = (m.im - m.true_im).abs() / m.true_im.abs();
        let pass = e_re <= 0.15 && e_im <= 0.25;
        ok &= pass;
        parts.push(format!(
            "{} mean {:.2}{:+.2}j vs {}{:+}j ({:.0}%/{:.0}%{})",
            m.name,
            m.re,
            m.im,
            m.true_re,
            m.true_im,
            100.0 * e_re,
            100.0 * e_im,
            if pass { "" } else { ", out of tolerance" }
        ));
    }
    ok &= b.region_means.len() == 2;
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let exp = Experiment::new(RunConfig::default()).map_err(|e| e.to_string())?;
    let data = exp.geometry.data_count();
    let unknowns = exp.truth_coarse.unknown_indices().len();
    let fixed = exp.coarse.len() - unknowns;
    check(
        (data, unknowns, fixed) == (288, 256, 68),
        format!("{data} measurements, {unknowns} unknowns, {fixed} fixed cells"),
    )
}

fn criterion_7(dir: &Path, report: &PipelineReport, took: Duration) -> Outcome {
    let clean = read_dataset(&dir.join(&report.clean_dataset)).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    let mut rms = Vec::new();
    for b in &report.branches {
        let noisy = read_dataset(&dir.join(branch_dir_name(b.percent)).join("data.txt")).map_err(|e| e.to_string())?;
        for (c, n) in clean.views().iter().zip(noisy.views()) {
            let diff: Vec<_> = c.iter().zip(n).map(|(a, b)| b - a).collect();
            let target = b.percent / 100.0;
            worst = worst.max((norm2(&diff) / norm2(c) - target).abs() / target);
        }
        rms.push((b.percent, b.rms_error.unwrap_or(f64::NAN)));
    }
    rms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = rms.windows(2).all(|w| w[0].1 <= w[1].1);
    let listing: Vec<String> = rms.iter().map(|(p, e)| format!("{p}%: {e:.2}")).collect();
    check(
        worst <= 1e-12 && monotone && rms.len() == 4 && took <= Duration::from_secs(900),
        format!(
            "calibration error {worst:.1e}; rms {}; pipeline {:.1} s",
            listing.join(", "),
            took.as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let exp = Experiment::new(RunConfig::default()).map_err(|e| e.to_string())?;
    let problem = exp.inverse_problem().map_err(|e| e.to_string())?;
    let truth = problem.extract(&exp.truth_coarse).map_err(|e| e.to_string())?;
    let fine_data = exp.synthesize().map_err(|e| e.to_string())?;
    let self_data = synthesize(&exp.truth_coarse, &exp.geometry, 1.0, FieldMode::Total).map_err(|e| e.to_string())?;
    let dual = problem.residual(&truth, &fine_data).map_err(|e| e.to_string())?.norm;
    let same = problem.residual(&truth, &self_data).map_err(|e| e.to_string())?.norm;
    check(
        dual > 1e-6 && same == 0.0,
        format!("truth residual {dual:.3e} against fine data, {same:e} against coarse data"),
    )
}

fn criterion_9(reports: &[&PipelineReport]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for b in reports.iter().flat_map(|r| &r.branches) {
        let h = &b.accepted_residuals;
        let decreasing = !h.is_empty() && h.windows(2).all(|w| w[1] < w[0]);
        ok &= decreasing;
        parts.push(format!("{}%: {} accepted{}", b.percent, h.len(), if decreasing { "" } else { " NOT decreasing" }));
    }
    check(ok, parts.join(", "))
}

fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize), String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let luma = img
        .as_luma8()
        .ok_or_else(|| format!("{}: not an 8-bit graymap", path.display()))?;
    Ok((luma.as_raw().clone(), luma.width() as usize, luma.height() as usize))
}

fn criterion_10(dirs: &[(&Path, &PipelineReport)], repeat: (&Path, &PipelineReport)) -> Outcome {
    let hand = |pixels: Vec<u8>, w: usize| {
        let h = pixels.len() / w;
        equalize(&ImageGrid::new(w, h, pixels, Channel::Real, (0.0, 1.0)).unwrap()).pixels
    };
    if hand(vec![10, 10, 200, 255], 2) != [0, 0, 128, 255] || hand(vec![77; 9], 3) != [0; 9] {
        return Err("equalization hand examples differ".into());
    }

    let mut images = 0;
    let mut gated = 0;
    let mut worst_ks = 0.0_f64;
    for (dir, report) in dirs {
        for b in &report.branches {
            let branch = dir.join(branch_dir_name(b.percent));
            for channel in ["real", "imag"] {
                let (raw, w, h) = read_pgm(&branch.join(format!("{channel}_raw.pgm")))?;
                let (enhanced, ..) = read_pgm(&branch.join(format!("{channel}_enhanced.pgm")))?;
                images += 2;
                let levels = raw.iter().collect::<std::collections::BTreeSet<_>>().len();
                if levels >= 32 {
                    gated += 1;
                    let img = ImageGrid::new(w, h, enhanced, Channel::Real, (0.0, 1.0)).map_err(|e| e.to_string())?;
                    worst_ks = worst_ks.max(ks_uniform_distance(&img));
                }
            }
        }
    }

    let (first_dir, first) = dirs[dirs.len() - 1];
    let (second_dir, second) = repeat;
    let mut identical = serde_json::to_string(first).unwrap() == serde_json::to_string(second).unwrap();
    for b in &first.branches {
        for name in ["real_raw.pgm", "real_enhanced.pgm", "imag_raw.pgm", "imag_enhanced.pgm"] {
            let rel = Path::new(&branch_dir_name(b.percent)).join(name);
            identical &= std::fs::read(first_dir.join(&rel)).ok() == std::fs::read(second_dir.join(&rel)).ok();
        }
    }
    check(
        worst_ks <= 0.1 && gated > 0 && identical,
        format!(
            "hand examples exact; {images} graymaps decoded; worst KS {worst_ks:.3} over {gated} images with >= 32 levels; repeat run {}",
            if identical { "byte-identical" } else { "DIFFERS" }
        ),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("temporary directory");
    let noiseless_dir = scratch.path().join("noiseless");
    let ladder_dir = scratch.path().join("ladder");
    let repeat_dir = scratch.path().join("repeat");

    let mut results: Vec<(u32, Outcome)> = vec![(1, criterion_1()), (2, criterion_2()), (3, criterion_3()), (4, criterion_4())];

    let (_, noiseless) = run_pipeline(&[0.0], &noiseless_dir);
    results.push((5, criterion_5(&noiseless)));
    results.push((6, criterion_6()));

    let start = Instant::now();
    let (_, ladder) = run_pipeline(&[1.0, 2.0, 5.0, 10.0], &ladder_dir);
    let took = start.elapsed();
    results.push((7, criterion_7(&ladder_dir, &ladder, took)));
    results.push((8, criterion_8()));
    results.push((9, criterion_9(&[&noiseless, &ladder])));

    let (_, repeat) = run_pipeline(&[1.0, 2.0, 5.0, 10.0], &repeat_dir);
    results.push((
        10,
        criterion_10(&[(&noiseless_dir, &noiseless), (&ladder_dir, &ladder)], (&repeat_dir, &repeat)),
    ));

    let mut failed = 0;
    for (n, r) in &results {
        match r {
            Ok(msg) => println!("criterion {n}: PASS {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
