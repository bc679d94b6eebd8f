//! The acceptance suite: criteria 1-9 at fixed tolerances, each writing its
//! CSV evidence into an output directory.
//!
//! CSV files are a pure function of the seed (wall-clock timings are
//! reported on [`Outcome`] only), which criterion 9 checks by running the
//! selected criteria a second time into a scratch directory and comparing
//! the files byte for byte.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;

use crate::cameron_martin::{cm_norm, k_constant, operator_k, operator_kstar, w12_norm};
use crate::density::{lower_bound_check, scaling_check};
use crate::distance::{comparison_sweep, unit_directions, OptimizeOptions, SweepTable};
use crate::error::{invalid, Result};
use crate::fbm::CovarianceCheck;
use crate::fields::registry_build;
use crate::fraccalc::{frac_deriv_left, frac_int_left, gamma, FracOrder};
use crate::grid::{Hurst, Path, TimeGrid};
use crate::malliavin::nondegeneracy_scan;
use crate::report::{covariance_table, lower_bound_table, scan_table, sweep_table, Cell, CsvTable};
use crate::rng::stream_rng;

pub const DEFAULT_SEED: u64 = 42;

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "fBm exactness"),
    (2, "fractional calculus closed forms"),
    (3, "Brownian reductions"),
    (4, "RKHS monotonicity"),
    (5, "distance comparison"),
    (6, "uniform nondegeneracy"),
    (7, "density lower bound"),
    (8, "scaling identity"),
    (9, "determinism"),
];

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Criteria to run; all when `None`.
    pub only: Option<Vec<u8>>,
}

impl VerifyConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: DEFAULT_SEED,
            out_dir: out_dir.into(),
            only: None,
        }
    }

    fn selected(&self) -> Vec<u8> {
        match &self.only {
            None => CRITERIA.iter().map(|c| c.0).collect(),
            Some(ids) => {
                let mut ids = ids.clone();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Measured quantities versus their thresholds.
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
    pub files: Vec<String>,
}

impl Outcome {
    /// `criterion 5 PASS distance comparison: ...`.
    pub fn line(&self) -> String {
        format!(
            "criterion {} {} {}: {} [{:.1} s of {} s]",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

struct Checked {
    passed: bool,
    detail: String,
    files: Vec<String>,
}

struct Writer<'a> {
    dir: &'a FsPath,
    seed: u64,
    files: Vec<String>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, mut table: CsvTable, meta: &[(&str, String)]) -> Result<()> {
        let mut head = CsvTable::default();
        head.meta("seed", self.seed);
        for (k, v) in meta {
            head.meta(k, v);
        }
        head.meta.append(&mut table.meta);
        table.meta = head.meta;
        table.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn g(x: f64) -> String {
    crate::report::fmt_g17(x)
}

fn hurst(h: f64) -> Hurst {
    Hurst::new(h).expect("fixed suite Hurst index")
}

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(n).expect("fixed suite grid")
}

fn criterion_1(w: &mut Writer) -> Result<Checked> {
    let mut worst = 0.0f64;
    for (idx, h) in [0.35, 0.5, 0.75].into_iter().enumerate() {
        let check = CovarianceCheck::run(grid(16), hurst(h), 100_000, w.seed, 1 + idx as u64)?;
        worst = worst.max(check.max_z());
        w.write(
            &format!("c1_cov_report_H{h}.csv"),
            covariance_table(&check),
            &[
                ("H", g(h)),
                ("n", "16".into()),
                ("count", "100000".into()),
                ("field", "none".into()),
                ("max_z", g(check.max_z())),
                ("max_abs_error", g(check.max_abs_error())),
            ],
        )?;
    }
    Ok(Checked {
        passed: worst <= 3.0,
        detail: format!("max |emp - R| / se = {worst:.3} (limit 3)"),
        files: Vec::new(),
    })
}

fn sample(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    grid.nodes().into_iter().map(f).collect()
}

fn criterion_2(w: &mut Writer) -> Result<Checked> {
    let mut table = CsvTable::new(&[
        "operator",
        "alpha",
        "beta",
        "n",
        "max_error",
        "tolerance",
        "gated",
        "passed",
    ]);
    let mut all = true;
    let mut worst_int = 0.0f64;
    let mut worst_der = 0.0f64;
    let mut worst_inv = 0.0f64;
    let mut worst_half = 0.0f64;
    for n in [256usize, 512] {
        let gr = grid(n);
        for a in [0.3, 0.5, 1.5] {
            for b in [0.0, 0.5, 1.0, 1.5, 2.0] {
                let f = sample(gr, |s| s.powf(b));
                let out = frac_int_left(gr, &f, FracOrder::integral(a)?)?;
                let c = gamma(b + 1.0) / gamma(b + a + 1.0);
                let err = (0..=n)
                    .map(|k| (out[k] - c * gr.node(k).powf(b + a)).abs())
                    .fold(0.0, f64::max);
                // s^0.5 is not C¹ at 0, so linear interpolation limits the
                // first cells to O(h^{α+1/2}); reported, not gated.
                let gated = b != 0.5;
                if !gated {
                    worst_half = worst_half.max(err);
                }
                if gated {
                    worst_int = worst_int.max(err);
                    all &= err <= 1e-3;
                }
                table.push(vec![
                    "integral".into(),
                    a.into(),
                    b.into(),
                    n.into(),
                    err.into(),
                    1e-3.into(),
                    gated.into(),
                    (err <= 1e-3).into(),
                ]);
            }
        }
        for a in [0.3, 0.5, 0.7] {
            for b in [1.0, 1.5, 2.0] {
                let f = sample(gr, |s| s.powf(b));
                let out = frac_deriv_left(gr, &f, FracOrder::derivative(a)?)?;
                let c = gamma(b + 1.0) / gamma(b + 1.0 - a);
                let err = (1..=n)
                    .map(|k| (out[k] - c * gr.node(k).powf(b - a)).abs())
                    .fold(0.0, f64::max);
                worst_der = worst_der.max(err);
                all &= err <= 2e-2;
                table.push(vec![
                    "derivative".into(),
                    a.into(),
                    b.into(),
                    n.into(),
                    err.into(),
                    2e-2.into(),
                    true.into(),
                    (err <= 2e-2).into(),
                ]);
            }
        }
        let f = sample(gr, |s| (2.0 * PI * s).sin());
        for a in [0.2, 0.5, 0.8] {
            let i = frac_int_left(gr, &f, FracOrder::integral(a)?)?;
            let d = frac_deriv_left(gr, &i, FracOrder::derivative(a)?)?;
            let err = (1..=n).map(|k| (d[k] - f[k]).abs()).fold(0.0, f64::max);
            worst_inv = worst_inv.max(err);
            all &= err <= 5e-2;
            table.push(vec![
                "inverse_sin".into(),
                a.into(),
                f64::NAN.into(),
                n.into(),
                err.into(),
                5e-2.into(),
                true.into(),
                (err <= 5e-2).into(),
            ]);
        }
    }
    w.write(
        "c2_frac_calculus.csv",
        table,
        &[
            ("n", "256;512".into()),
            ("H", "none".into()),
            ("field", "none".into()),
        ],
    )?;
    Ok(Checked {
        passed: all,
        detail: format!(
            "integral err {worst_int:.2e} (<= 1e-3; ungated s^0.5 {worst_half:.2e}), derivative err {worst_der:.2e} (<= 2e-2), D∘I err {worst_inv:.2e} (<= 5e-2)"
        ),
        files: Vec::new(),
    })
}

fn smooth_paths(gr: TimeGrid, count: usize, seed: u64, stream: u64) -> Vec<Path> {
    let mut rng = stream_rng(seed, stream);
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Path::scalar_fn(gr, |t| {
                (0..6)
                    .map(|m| c[m] * ((m as f64 + 0.5) * PI * t).sin() / (1.0 + m as f64))
                    .sum()
            })
        })
        .collect()
}

fn criterion_3(w: &mut Writer) -> Result<Checked> {
    let gr = grid(64);
    let h = hurst(0.5);
    let mut table = CsvTable::new(&["check", "path", "max_error", "tolerance", "passed"]);
    let mut worst = [0.0f64; 3];
    for (i, p) in smooth_paths(gr, 5, w.seed, 30).iter().enumerate() {
        let phi = p.component(0);
        let k = operator_k(gr, &phi, h)?;
        let mut cum = 0.0;
        let mut err_k = k[0].abs();
        for j in 0..64 {
            cum += 0.5 * gr.dt() * (phi[j] + phi[j + 1]);
            err_k = err_k.max((k[j + 1] - cum).abs());
        }
        let ks = operator_kstar(gr, &phi, h)?;
        let err_ks = ks
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cm = cm_norm(p, h)?.value;
        let energy = w12_norm(p)?;
        let err_cm = (cm * cm - energy * energy).abs();
        for (slot, (name, err)) in [
            ("operator_k_cumulative", err_k),
            ("operator_kstar_identity", err_ks),
            ("cm_norm_dirichlet", err_cm),
        ]
        .into_iter()
        .enumerate()
        {
            worst[slot] = worst[slot].max(err);
            table.push(vec![
                name.into(),
                i.into(),
                err.into(),
                1e-10.into(),
                (err <= 1e-10).into(),
            ]);
        }
    }
    w.write(
        "c3_brownian.csv",
        table,
        &[
            ("H", "0.5".into()),
            ("n", "64".into()),
            ("field", "none".into()),
            ("C_H", g(k_constant(h)?)),
        ],
    )?;
    Ok(Checked {
        passed: worst.iter().all(|e| *e <= 1e-10),
        detail: format!(
            "K {:.1e}, K* {:.1e}, norm² {:.1e} (all <= 1e-10)",
            worst[0], worst[1], worst[2]
        ),
        files: Vec::new(),
    })
}

fn criterion_4(w: &mut Writer) -> Result<Checked> {
    let mut table = CsvTable::new(&["H", "path", "n", "norm"]);
    let mut violations = 0usize;
    let mut worst_drop = 0.0f64;
    for h in [0.35, 0.5, 0.75] {
        let fine = smooth_paths(grid(128), 20, w.seed, 40);
        for (i, p) in fine.iter().enumerate() {
            let mut prev = 0.0;
            for n in [16usize, 32, 64, 128] {
                let norm = cm_norm(&p.subsample(128 / n)?, hurst(h))?.value;
                worst_drop = worst_drop.max(prev - norm);
                if norm < prev - 1e-9 {
                    violations += 1;
                }
                prev = norm;
                table.push(vec![h.into(), i.into(), n.into(), norm.into()]);
            }
        }
    }
    w.write(
        "c4_rkhs_monotone.csv",
        table,
        &[
            ("H", "0.35;0.5;0.75".into()),
            ("n", "16;32;64;128".into()),
            ("field", "none".into()),
        ],
    )?;
    Ok(Checked {
        passed: violations == 0,
        detail: format!(
            "{violations} decreases beyond 1e-9 over 60 paths (largest drop {worst_drop:.1e})"
        ),
        files: Vec::new(),
    })
}

fn sweep_meta(sweep: &SweepTable, field: &str, h: f64, n: usize) -> Vec<(&'static str, String)> {
    vec![
        ("H", g(h)),
        ("n", n.to_string()),
        ("field", field.to_string()),
        ("min_ratio", g(sweep.min_ratio())),
        ("max_ratio", g(sweep.max_ratio())),
        ("fitted_C", g(sweep.fitted_constant())),
        ("max_residual", g(sweep.max_residual())),
    ]
}

fn criterion_5(w: &mut Writer) -> Result<Checked> {
    let n = 64;
    let opts = OptimizeOptions::default();
    let dirs = unit_directions(2, 4);
    let mut id_dev = 0.0f64;
    let mut id_ok = true;
    let identity = registry_build("identity", &BTreeMap::new(), 2)?;
    for h in [0.5, 0.75] {
        let sweep = comparison_sweep(
            &[0.0, 0.0],
            &[0.5, 0.25, 0.1],
            &dirs,
            &identity,
            grid(n),
            hurst(h),
            &opts,
        )?;
        let dev = sweep
            .cells
            .iter()
            .map(|c| (c.result.ratio - 1.0).abs())
            .fold(0.0, f64::max);
        id_dev = id_dev.max(dev);
        id_ok &= dev <= 0.01 && sweep.all_converged();
        let meta = sweep_meta(&sweep, "identity", h, n);
        w.write(
            &format!("c5_sweep_identity_H{h}.csv"),
            sweep_table(&sweep),
            &meta,
        )?;
    }
    let field = registry_build("sin-perturbed", &BTreeMap::from([("eps".into(), 0.1)]), 2)?;
    let mut c_fit = 1.0f64;
    let mut residual = 0.0f64;
    for h in [0.5, 0.75] {
        let sweep = comparison_sweep(
            &[0.5, -0.5],
            &[0.5, 0.25, 0.1, 0.05],
            &dirs,
            &field,
            grid(n),
            hurst(h),
            &opts,
        )?;
        c_fit = c_fit.max(sweep.fitted_constant());
        residual = residual.max(sweep.max_residual());
        let mut meta = sweep_meta(&sweep, "sin-perturbed", h, n);
        meta.push(("eps", "0.1".into()));
        w.write(
            &format!("c5_sweep_sin-perturbed_H{h}.csv"),
            sweep_table(&sweep),
            &meta,
        )?;
    }
    let pert_ok = c_fit <= 1.3 && residual < 1e-4;
    Ok(Checked {
        passed: id_ok && pert_ok,
        detail: format!(
            "identity |ratio - 1| <= {id_dev:.2e} (<= 1e-2); sin-perturbed C = {c_fit:.4} (<= 1.3), residual {residual:.1e} (< 1e-4)"
        ),
        files: Vec::new(),
    })
}

fn criterion_6(w: &mut Writer) -> Result<Checked> {
    let families: [(&str, BTreeMap<String, f64>); 3] = [
        ("identity", BTreeMap::new()),
        (
            "const-sigma",
            BTreeMap::from([("sigma".into(), 1.0), ("shear".into(), 0.5)]),
        ),
        ("sin-perturbed", BTreeMap::from([("eps".into(), 0.1)])),
    ];
    let mut min_det = f64::INFINITY;
    let mut id_dev = 0.0f64;
    let mut excluded = 0;
    for (name, params) in &families {
        let v = registry_build(name, params, 2)?;
        for h in [0.4, 0.75] {
            let scan = nondegeneracy_scan(&[0.0, 0.0], &v, grid(64), hurst(h), 2.0, 200, w.seed)?;
            min_det = min_det.min(scan.det_min);
            excluded += scan.excluded;
            if *name == "identity" {
                id_dev = id_dev
                    .max((scan.det_min - 1.0).abs())
                    .max((scan.det_max - 1.0).abs());
            }
            let params_s: Vec<String> = params
                .iter()
                .map(|(k, v)| format!("{k}={}", g(*v)))
                .collect();
            w.write(
                &format!("c6_scan_{name}_H{h}.csv"),
                scan_table(&scan),
                &[
                    ("H", g(h)),
                    ("n", "64".into()),
                    ("field", name.to_string()),
                    ("field_params", params_s.join(";")),
                    ("M", "2".into()),
                    ("det_min", g(scan.det_min)),
                    ("det_max", g(scan.det_max)),
                    ("excluded", scan.excluded.to_string()),
                    (
                        "note",
                        "H <= 1/2 reports the L2 lower-bound surrogate".into(),
                    ),
                ],
            )?;
        }
    }
    Ok(Checked {
        passed: min_det > 0.0 && id_dev <= 1e-6 && excluded == 0,
        detail: format!("min det = {min_det:.4e} (> 0), identity |det - 1| = {id_dev:.1e} (<= 1e-6), {excluded} excluded"),
        files: Vec::new(),
    })
}

fn criterion_7(w: &mut Writer) -> Result<Checked> {
    let count = 100_000;
    let exact = (2.0 * PI).sqrt().recip() * (-0.5f64).exp();
    let identity = registry_build("identity", &BTreeMap::new(), 1)?;
    let t_a = [0.5, 0.25, 0.125];
    let lb = lower_bound_check(
        &[0.0],
        &[1.0],
        &identity,
        grid(16),
        hurst(0.5),
        &t_a,
        count,
        w.seed,
    )?;
    let dev = lb
        .rows
        .iter()
        .map(|r| (r.scaled / exact - 1.0).abs())
        .fold(0.0, f64::max);
    w.write(
        "c7_density_identity_H0.5.csv",
        lower_bound_table(&lb),
        &[
            ("H", "0.5".into()),
            ("n", "16".into()),
            ("field", "identity".into()),
            ("N", "1".into()),
            ("count", count.to_string()),
            ("exact", g(exact)),
        ],
    )?;
    let field = registry_build("sin-perturbed", &BTreeMap::from([("eps".into(), 0.1)]), 2)?;
    let t_b = [0.5, 0.25, 0.125, 0.0625];
    let u = [0.6, 0.8];
    let mut b_ok = true;
    let mut parts = Vec::new();
    for h in [0.4, 0.75] {
        let lb = lower_bound_check(
            &[0.3, -0.2],
            &u,
            &field,
            grid(64),
            hurst(h),
            &t_b,
            count,
            w.seed,
        )?;
        b_ok &= lb.passed();
        parts.push(format!(
            "H={h}: min(p t^NH - 3se) {:.3e}, last/first {:.3}",
            lb.min_lower(),
            lb.last_over_first()
        ));
        w.write(
            &format!("c7_density_sin-perturbed_H{h}.csv"),
            lower_bound_table(&lb),
            &[
                ("H", g(h)),
                ("n", "64".into()),
                ("field", "sin-perturbed".into()),
                ("eps", "0.1".into()),
                ("N", "2".into()),
                ("count", count.to_string()),
                ("min_lower", g(lb.min_lower())),
                ("last_over_first", g(lb.last_over_first())),
                (
                    "note",
                    "positivity and stability are certified; the constants C1, C2 are not".into(),
                ),
            ],
        )?;
    }
    Ok(Checked {
        passed: dev <= 0.05 && b_ok,
        detail: format!(
            "identity max rel dev {dev:.3} from 0.2420 (<= 0.05); {}",
            parts.join("; ")
        ),
        files: Vec::new(),
    })
}

fn criterion_8(w: &mut Writer) -> Result<Checked> {
    let field = registry_build("sin-perturbed", &BTreeMap::from([("eps".into(), 0.1)]), 2)?;
    let mut table = CsvTable::new(&[
        "H",
        "t",
        "quantity",
        "i",
        "j",
        "scaled",
        "scaled_se",
        "direct",
        "direct_se",
    ]);
    let mut worst = 0.0f64;
    for h in [0.4, 0.75] {
        let c = scaling_check(
            0.25,
            &[0.3, -0.2],
            &field,
            grid(64),
            hurst(h),
            10_000,
            w.seed,
        )?;
        worst = worst.max(c.max_z);
        for i in 0..2 {
            table.push(vec![
                h.into(),
                c.t.into(),
                "mean".into(),
                i.into(),
                Cell::Text(String::new()),
                c.scaled.mean[i].into(),
                c.scaled.mean_se[i].into(),
                c.direct.mean[i].into(),
                c.direct.mean_se[i].into(),
            ]);
            for j in i..2 {
                table.push(vec![
                    h.into(),
                    c.t.into(),
                    "cov".into(),
                    i.into(),
                    j.into(),
                    c.scaled.cov[(i, j)].into(),
                    c.scaled.cov_se[(i, j)].into(),
                    c.direct.cov[(i, j)].into(),
                    c.direct.cov_se[(i, j)].into(),
                ]);
            }
        }
    }
    w.write(
        "c8_scaling.csv",
        table,
        &[
            ("H", "0.4;0.75".into()),
            ("n", "64".into()),
            ("field", "sin-perturbed".into()),
            ("eps", "0.1".into()),
            ("count", "10000".into()),
            ("max_z", g(worst)),
        ],
    )?;
    Ok(Checked {
        passed: worst <= 3.0,
        detail: format!("max z = {worst:.3} (<= 3)"),
        files: Vec::new(),
    })
}

fn budget(id: u8) -> Duration {
    Duration::from_secs(match id {
        1 => 60,
        2 => 10,
        5 | 6 => 300,
        7 => 600,
        _ => 600,
    })
}

fn title(id: u8) -> &'static str {
    CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .unwrap_or("unknown")
}

fn run_one(id: u8, seed: u64, dir: &FsPath) -> Result<Outcome> {
    let mut w = Writer {
        dir,
        seed,
        files: Vec::new(),
    };
    let start = Instant::now();
    let checked = match id {
        1 => criterion_1(&mut w),
        2 => criterion_2(&mut w),
        3 => criterion_3(&mut w),
        4 => criterion_4(&mut w),
        5 => criterion_5(&mut w),
        6 => criterion_6(&mut w),
        7 => criterion_7(&mut w),
        8 => criterion_8(&mut w),
        _ => Err(invalid("only", format!("no criterion {id}"))),
    }?;
    let elapsed = start.elapsed();
    let within = elapsed <= budget(id);
    let mut files = w.files;
    files.extend(checked.files);
    Ok(Outcome {
        id,
        title: title(id),
        passed: checked.passed && within,
        detail: if within {
            checked.detail
        } else {
            format!("{} (over time budget)", checked.detail)
        },
        elapsed,
        budget: budget(id),
        files,
    })
}

/// Names of files that differ between two directories (or exist in one
/// only), comparing `.csv` files.
pub fn compare_csv_dirs(a: &FsPath, b: &FsPath) -> Result<Vec<String>> {
    let list = |d: &FsPath| -> Result<BTreeMap<String, PathBuf>> {
        let mut m = BTreeMap::new();
        for e in std::fs::read_dir(d)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "csv") {
                m.insert(p.file_name().unwrap().to_string_lossy().into_owned(), p);
            }
        }
        Ok(m)
    };
    let (la, lb) = (list(a)?, list(b)?);
    let mut diffs = Vec::new();
    for (name, pa) in &la {
        match lb.get(name) {
            Some(pb) if std::fs::read(pa)? == std::fs::read(pb)? => {}
            _ => diffs.push(name.clone()),
        }
    }
    diffs.extend(lb.keys().filter(|k| !la.contains_key(*k)).cloned());
    Ok(diffs)
}

/// Runs criteria 1-8 into `dir` (no determinism check).
pub fn run_criteria(ids: &[u8], seed: u64, dir: &FsPath) -> Result<Vec<Outcome>> {
    std::fs::create_dir_all(dir)?;
    ids.iter()
        .filter(|id| **id != 9)
        .map(|id| run_one(*id, seed, dir))
        .collect()
}

/// Determinism: re-runs `ids` into `rerun_dir` and compares with `dir`.
pub fn determinism(ids: &[u8], seed: u64, dir: &FsPath, rerun_dir: &FsPath) -> Result<Outcome> {
    let start = Instant::now();
    run_criteria(ids, seed, rerun_dir)?;
    let diffs = compare_csv_dirs(dir, rerun_dir)?;
    let count = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .count();
    Ok(Outcome {
        id: 9,
        title: title(9),
        passed: diffs.is_empty(),
        detail: if diffs.is_empty() {
            format!("{count} CSV files byte-identical across two runs with seed {seed}")
        } else {
            format!("differing files: {}", diffs.join(", "))
        },
        elapsed: start.elapsed(),
        budget: Duration::from_secs(3600),
        files: Vec::new(),
    })
}

/// The whole suite. Criterion 9 re-runs the other selected criteria (all of
/// 1-8 when only 9 is selected) into `out_dir/.rerun`, which is removed
/// afterwards.
pub fn run_suite(cfg: &VerifyConfig) -> Result<Vec<Outcome>> {
    let ids = cfg.selected();
    if let Some(bad) = ids.iter().find(|i| !(1..=9).contains(*i)) {
        return Err(invalid(
            "only",
            format!("no criterion {bad}; valid ids are 1-9"),
        ));
    }
    let base: Vec<u8> = ids.iter().copied().filter(|i| *i != 9).collect();
    let mut outcomes = run_criteria(&base, cfg.seed, &cfg.out_dir)?;
    if ids.contains(&9) {
        let replay: Vec<u8> = if base.is_empty() {
            (1..=8).collect()
        } else {
            base.clone()
        };
        if base.is_empty() {
            run_criteria(&replay, cfg.seed, &cfg.out_dir)?;
        }
        let rerun = cfg.out_dir.join(".rerun");
        let outcome = determinism(&replay, cfg.seed, &cfg.out_dir, &rerun);
        let _ = std::fs::remove_dir_all(&rerun);
        outcomes.push(outcome?);
    }
    Ok(outcomes)
}
