//! Batch driver behind the `oscilab` binary: experiment configs, sweeps, CSV and JSON outputs,
//! and bit-exact replay.

use crate::bg_decomposition::{
    broad_pointwise_certificate, cap_coefficients, classify_point_3d, quadruple_grid_census, CapCoefficients, Classify3Config,
    ExactQuadrupleParams, PointClass,
};
use crate::exponents::{
    fmt_q, interpolation_threshold, kakeya_improved_threshold, loglog_fit, parse_q, q, threshold_case_formula, threshold_p, to_f64,
    ExponentFit, Q,
};
use crate::kakeya_lab::{
    bilinear_kakeya_integral, bush_family, curved_family_from_phase, indicator_sum_lp_family, multilinear_kakeya_integral,
    straight_contrast_family, transverse_family, union_volume_family, Tube,
};
use crate::lower_bound_examples::{elliptic_example_norm, hyperbolic_integral, surface_defect, ExampleConfig, HyperbolicConfig, SignMode};
use crate::oscillatory_core::{
    bessel_orthogonality_check, evaluate_t, qr_sweep, required_spacing_for, Candidate, Lattice, Mollifier, PhaseFunction, QrConfig, C_NYQ,
};
use crate::sparse_cover::{cover, covers, verify_sparse, CubeSet, SparseMode};
use crate::surface_geometry::{CapPartition, Surface};
use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Precondition(_) => "precondition",
            CliError::Io(_) => "io",
            CliError::Mismatch(_) => "replay-mismatch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Mismatch(_) => 4,
            _ => 1,
        }
    }

    pub fn diagnostic(&self) -> String {
        serde_json::json!({"error": self.kind(), "message": self.to_string()}).to_string()
    }
}

fn pre<E: Display>(e: E) -> CliError {
    CliError::Precondition(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    pub n: Vec<u32>,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams { n: (3..=6).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrParams {
    pub r: Vec<f64>,
    pub p: String,
    pub x_spacing: f64,
    /// Cap grid of the random-sign candidate; the sign seed is the run seed.
    pub sign_caps: usize,
    pub knapp_radius: f64,
}

impl Default for QrParams {
    fn default() -> Self {
        QrParams { r: vec![8.0, 16.0, 32.0, 64.0], p: "4".into(), x_spacing: 2.0, sign_caps: 4, knapp_radius: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DecomposeMode {
    Fuzz,
    Field,
    Census,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeParams {
    pub mode: DecomposeMode,
    pub count: usize,
    pub k: f64,
    pub k1: f64,
    pub margin: f64,
    pub threshold_exp: f64,
    /// Evaluation points in field mode.
    pub points: usize,
    /// Census grid: K, K1, C, separation, t step, |d| range, |d − d′| range.
    pub census: [i64; 7],
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            mode: DecomposeMode::Fuzz,
            count: 10_000,
            k: 6.0,
            k1: 3.0,
            margin: 1.0,
            threshold_exp: 4.0,
            points: 4,
            census: [100_000, 100, 1, 20, 2500, 2000, 100],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KakeyaMode {
    Compression,
    Multilinear,
    Bilinear,
    Bush,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KakeyaParams {
    pub mode: KakeyaMode,
    /// Rationals such as "1/32".
    pub delta: Vec<String>,
    pub n: Vec<usize>,
    pub theta: Vec<f64>,
    pub seeds: usize,
    pub tilt: f64,
    /// Constant in the reported bound C·(scale).
    pub constant: f64,
}

impl Default for KakeyaParams {
    fn default() -> Self {
        KakeyaParams {
            mode: KakeyaMode::Compression,
            delta: vec!["1/32".into()],
            n: vec![16, 32, 64],
            theta: vec![std::f64::consts::PI / 8.0, std::f64::consts::PI / 4.0, std::f64::consts::PI / 2.0],
            seeds: 4,
            tilt: 0.3,
            constant: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipticParams {
    pub lambda: Vec<f64>,
    pub q: String,
    pub c: f64,
    pub c0: f64,
    pub tol: f64,
    pub region_counts: [usize; 3],
    /// Empty means sign-averaged.
    pub signs: Vec<i8>,
}

impl Default for EllipticParams {
    fn default() -> Self {
        let d = ExampleConfig::new(64.0, 10.0 / 3.0);
        EllipticParams {
            lambda: vec![64.0, 128.0, 256.0, 512.0],
            q: "10/3".into(),
            c: d.c,
            c0: d.c0,
            tol: d.tol,
            region_counts: d.region_counts,
            signs: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperbolicParams {
    pub lambda: Vec<f64>,
    pub x: [f64; 3],
    /// Added to x2 for the off-surface comparison point.
    pub off: f64,
}

impl Default for HyperbolicParams {
    fn default() -> Self {
        HyperbolicParams { lambda: vec![64.0, 256.0, 1024.0], x: [0.1, 0.07, 0.7], off: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverParams {
    /// Row fixtures of these sizes; ignored when `cubes` is given.
    pub sizes: Vec<usize>,
    pub n: usize,
    pub cubes: Option<Vec<Vec<i64>>>,
    pub delta: String,
    pub c: Option<f64>,
}

impl Default for CoverParams {
    fn default() -> Self {
        CoverParams { sizes: vec![8, 64, 512], n: 3, cubes: None, delta: "1/3".into(), c: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrthogonalityParams {
    pub r: Vec<usize>,
}

impl Default for OrthogonalityParams {
    fn default() -> Self {
        OrthogonalityParams { r: vec![8, 16, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    Thresholds(ThresholdParams),
    QrSweep(QrParams),
    Decompose(DecomposeParams),
    Kakeya(KakeyaParams),
    ExampleElliptic(EllipticParams),
    ExampleHyperbolic(HyperbolicParams),
    Cover(CoverParams),
    Orthogonality(OrthogonalityParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Thresholds(_) => "thresholds",
            Experiment::QrSweep(_) => "qr-sweep",
            Experiment::Decompose(_) => "decompose",
            Experiment::Kakeya(_) => "kakeya",
            Experiment::ExampleElliptic(_) => "example-elliptic",
            Experiment::ExampleHyperbolic(_) => "example-hyperbolic",
            Experiment::Cover(_) => "cover",
            Experiment::Orthogonality(_) => "orthogonality",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

fn norm_rational(s: &str) -> Result<String, CliError> {
    parse_q(s).map(|v| fmt_q(&v)).ok_or_else(|| CliError::Config(format!("not a rational: {s}")))
}

impl ExperimentConfig {
    /// Rationals rewritten in lowest terms; the JSON form then has sorted keys.
    pub fn canonical(&self) -> Result<Self, CliError> {
        let mut c = self.clone();
        match &mut c.experiment {
            Experiment::QrSweep(p) => p.p = norm_rational(&p.p)?,
            Experiment::ExampleElliptic(p) => p.q = norm_rational(&p.q)?,
            Experiment::Kakeya(p) => {
                for d in p.delta.iter_mut() {
                    *d = norm_rational(d)?;
                }
            }
            Experiment::Cover(p) => p.delta = norm_rational(&p.delta)?,
            _ => {}
        }
        Ok(c)
    }

    pub fn canonical_json(&self) -> Result<String, CliError> {
        let v = serde_json::to_value(self.canonical()?).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(v.to_string())
    }

    pub fn hash(&self) -> Result<String, CliError> {
        Ok(sha256_hex(self.canonical_json()?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub config: Value,
    pub config_hash: String,
    pub csv_file: String,
    pub csv_sha256: String,
    pub rows: usize,
    pub fits: Vec<NamedFit>,
    pub gates: Vec<Gate>,
    #[serde(default)]
    pub extra: Value,
    pub threads: usize,
    pub wall_clock_ms: u128,
}

impl ResultRecord {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn verdict(&self) -> String {
        let failed: Vec<&str> = self.gates.iter().filter(|g| !g.pass).map(|g| g.name.as_str()).collect();
        if failed.is_empty() {
            format!("{}: pass ({} gates, {} rows)", self.experiment, self.gates.len(), self.rows)
        } else {
            format!("{}: FAIL [{}]", self.experiment, failed.join(", "))
        }
    }
}

/// Rows, fits, gates and optional structured output of one run.
pub struct Outcome {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub fits: Vec<NamedFit>,
    pub gates: Vec<Gate>,
    pub extra: Value,
}

impl Outcome {
    fn new(header: Vec<&'static str>) -> Self {
        Outcome { header, rows: vec![], fits: vec![], gates: vec![], extra: Value::Null }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, r: I) {
        self.rows.push(r.into_iter().collect());
    }

    fn gate(&mut self, name: &str, pass: bool, detail: String) {
        self.gates.push(Gate { name: name.into(), pass, detail });
    }

    fn fit(&mut self, name: &str, samples: &[(f64, f64)]) -> Option<ExponentFit> {
        let f = loglog_fit(samples).ok()?;
        self.fits.push(NamedFit { name: name.into(), fit: f });
        Some(f)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(std::io::Error::other(e.to_string()));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))
    }
}

fn s<T: Display>(v: T) -> String {
    v.to_string()
}

fn slope_so_far(samples: &[(f64, f64)]) -> String {
    if samples.len() < 2 {
        return String::new();
    }
    loglog_fit(samples).map(|f| s(f.slope)).unwrap_or_default()
}

fn to_q(s: &str) -> Result<Q, CliError> {
    parse_q(s).ok_or_else(|| CliError::Config(format!("not a rational: {s}")))
}

/// Computes the outcome of an experiment on the current rayon pool.
pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::Thresholds(p) => run_thresholds(p),
        Experiment::QrSweep(p) => run_qr(p, seed),
        Experiment::Decompose(p) => run_decompose(p, seed),
        Experiment::Kakeya(p) => run_kakeya(p, seed),
        Experiment::ExampleElliptic(p) => run_elliptic(p),
        Experiment::ExampleHyperbolic(p) => run_hyperbolic(p),
        Experiment::Cover(p) => run_cover(p),
        Experiment::Orthogonality(p) => run_orthogonality(p),
    }
}

fn run_thresholds(p: &ThresholdParams) -> Result<Outcome, CliError> {
    let mut o = Outcome::new(vec!["n", "threshold", "threshold_decimal", "case_formula", "reference"]);
    let mut agree = true;
    for &n in &p.n {
        let t = threshold_p(n).map_err(pre)?;
        let c = threshold_case_formula(n).map_err(pre)?;
        agree &= t == c;
        let reference = q(2 * (n as i128 + 2), n as i128);
        o.row([s(n), fmt_q(&t), s(to_f64(&t)), fmt_q(&c), fmt_q(&reference)]);
        if n == 3 {
            o.gate("n=3 gives 10/3", t == q(10, 3), fmt_q(&t));
        }
        if n == 4 {
            o.gate("n=4 gives 3", t == q(3, 1), fmt_q(&t));
        }
    }
    o.gate("max-min form equals case formula", agree, String::new());
    let interp = interpolation_threshold((q(3, 1), q(-1, 6)), (q(10, 3), q(1, 60))).map_err(pre)?;
    let kk = kakeya_improved_threshold();
    o.gate("interpolation gives 33/10", interp == q(33, 10), fmt_q(&interp));
    o.gate("kakeya-improved gives 36/11", kk == q(36, 11), fmt_q(&kk));
    o.extra = serde_json::json!({"named": {"10/3": "threshold n=3", "33/10": fmt_q(&interp), "36/11": fmt_q(&kk)}});
    Ok(o)
}

pub fn qr_catalog(p: &QrParams, seed: u64) -> Vec<Candidate> {
    vec![
        Candidate::Constant,
        Candidate::RandomCapSigns { k: p.sign_caps, seed },
        Candidate::Knapp { center: vec![0.0, 0.0], radius: p.knapp_radius },
    ]
}

fn run_qr(p: &QrParams, seed: u64) -> Result<Outcome, CliError> {
    let pq = to_f64(&to_q(&p.p)?);
    let mut cfg = QrConfig::unit_square(pq, qr_catalog(p, seed));
    cfg.x_spacing = p.x_spacing;
    let est = qr_sweep(&Surface::paraboloid(3), &cfg, &p.r).map_err(pre)?;
    let mut o = Outcome::new(vec!["radius", "p", "candidate", "value", "points", "y_spacing"]);
    for e in &est {
        for (id, v) in &e.per_candidate {
            o.row([s(e.radius), p.p.clone(), id.clone(), s(v), s(e.points), s(e.y_spacing)]);
        }
    }
    let best: Vec<(f64, f64)> = est.iter().map(|e| (e.radius, e.best)).collect();
    let constant: Vec<(f64, f64)> = est.iter().map(|e| (e.radius, e.per_candidate[0].1)).collect();
    let fb = o.fit("best", &best);
    let fc = o.fit("constant", &constant);
    if pq >= 4.0 {
        if let Some(f) = fb {
            o.gate("best slope <= 0.1", f.slope <= 0.1, s(f.slope));
        }
    }
    if pq <= 2.0 {
        if let Some(f) = fc {
            o.gate("constant slope > 0", f.slope > 0.0, s(f.slope));
        }
    }
    Ok(o)
}

fn fuzz_coeffs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mode = rng.gen_range(0..3);
    (0..n)
        .map(|_| match mode {
            0 => rng.gen_range(0.0..1.0),
            1 => {
                if rng.gen_bool(0.05) {
                    rng.gen_range(0.0..1.0)
                } else {
                    0.0
                }
            }
            _ => 10f64.powf(rng.gen_range(-8.0..0.0)),
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FuzzTally {
    pub broad: usize,
    pub narrow: usize,
    pub coplanar: usize,
    pub scale_mismatches: usize,
    pub certificate_failures: usize,
}

/// Classifies fuzzed coefficient vectors, checks invariance under scaling, and checks the broad
/// certificate with |Tf| = Σ c_α, the largest value compatible with dominance by the majorants.
pub fn decomposition_fuzz(count: usize, k: f64, k1: f64, cfg: &Classify3Config, seed: u64) -> Result<FuzzTally, CliError> {
    let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = FuzzTally::default();
    for _ in 0..count {
        let c = CapCoefficients::new(fuzz_coeffs(&mut rng, part.len()), k, k1).map_err(pre)?;
        let cls = classify_point_3d(&c, &part, cfg);
        let scale = rng.gen_range(1e-3..1e3);
        let scaled = CapCoefficients::new(c.values.iter().map(|v| v * scale).collect(), k, k1).map_err(pre)?;
        if classify_point_3d(&scaled, &part, cfg) != cls {
            t.scale_mismatches += 1;
        }
        match &cls {
            PointClass::Broad { .. } => {
                t.broad += 1;
                let tf = C64::new(c.values.iter().sum(), 0.0);
                if !broad_pointwise_certificate(tf, &c, &cls, cfg.threshold_exp, 0.0).map_err(pre)?.holds {
                    t.certificate_failures += 1;
                }
            }
            PointClass::NarrowNonTransverse { .. } => t.narrow += 1,
            PointClass::TransverseCoplanar { .. } => t.coplanar += 1,
        }
    }
    Ok(t)
}

fn run_decompose(p: &DecomposeParams, seed: u64) -> Result<Outcome, CliError> {
    let cfg = Classify3Config { margin: p.margin, threshold_exp: p.threshold_exp };
    match p.mode {
        DecomposeMode::Fuzz => {
            let t = decomposition_fuzz(p.count, p.k, p.k1, &cfg, seed)?;
            let mut o = Outcome::new(vec!["tag", "count"]);
            for (tag, n) in [
                ("broad", t.broad),
                ("narrow-non-transverse", t.narrow),
                ("transverse-coplanar", t.coplanar),
                ("scale-mismatches", t.scale_mismatches),
                ("certificate-failures", t.certificate_failures),
            ] {
                o.row([tag.to_string(), s(n)]);
            }
            o.gate("scale invariant", t.scale_mismatches == 0, s(t.scale_mismatches));
            o.gate("certificates hold", t.certificate_failures == 0, s(t.certificate_failures));
            Ok(o)
        }
        DecomposeMode::Field => {
            let phase = PhaseFunction::extension(Surface::paraboloid(3));
            let part = CapPartition::uniform(&[-0.5, -0.5], &[0.5, 0.5], p.k);
            let cand = Candidate::RandomCapSigns { k: p.k as usize, seed };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..p.points).map(|_| (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
            let moll = Mollifier::default();
            let reach: Vec<Vec<f64>> = xs.iter().flat_map(|x| moll.stencil(x, p.k).0).collect();
            let h = required_spacing_for(&phase, &[-0.5, -0.5], &[0.5, 0.5], &reach, None, 0.0, C_NYQ);
            let lat = Lattice::over_box_multiple(&[-0.5, -0.5], &[0.5, 0.5], h, p.k as usize);
            let f = cand.sample(&lat).map_err(pre)?;
            let tf = evaluate_t(&phase, &f, &xs).map_err(pre)?;
            let mut o = Outcome::new(vec!["x1", "x2", "x3", "tag", "witnesses", "lhs", "rhs", "holds"]);
            let mut fails = 0;
            for (x, v) in xs.iter().zip(&tf) {
                let c = cap_coefficients(&phase, &f, &part, x, p.k1, &moll).map_err(pre)?;
                let cls = classify_point_3d(&c, &part, &cfg);
                let w: Vec<String> = cls.witnesses().iter().map(s).collect();
                let (lhs, rhs, holds) = match broad_pointwise_certificate(*v, &c, &cls, cfg.threshold_exp, 0.0) {
                    Ok(r) => (s(r.lhs), s(r.rhs), s(r.holds)),
                    Err(_) => (s(v.norm()), String::new(), String::new()),
                };
                fails += (holds == "false") as usize;
                o.row([s(x[0]), s(x[1]), s(x[2]), cls.tag().to_string(), w.join(" "), lhs, rhs, holds]);
            }
            o.gate("certificates hold", fails == 0, s(fails));
            Ok(o)
        }
        DecomposeMode::Census => {
            let [k, k1, c, sep, step, dmax, dd] = p.census;
            let g = quadruple_grid_census(&ExactQuadrupleParams { k, k1, c, sep }, step, dmax, dd);
            let mut o = Outcome::new(vec!["examined", "accepted", "rejected_first", "rejected_second", "violations"]);
            o.row([s(g.examined), s(g.accepted), s(g.rejected_first), s(g.rejected_second), s(g.violations)]);
            o.gate("no violations", g.violations == 0, s(g.violations));
            Ok(o)
        }
    }
}

fn run_kakeya(p: &KakeyaParams, seed: u64) -> Result<Outcome, CliError> {
    let deltas: Vec<f64> = p.delta.iter().map(|d| to_q(d).map(|v| to_f64(&v))).collect::<Result<_, _>>()?;
    let mut o = Outcome::new(vec!["quantity", "delta", "N", "p", "value", "bound", "ratio"]);
    match p.mode {
        KakeyaMode::Compression => {
            for &d in &deltas {
                let curved = curved_family_from_phase(d, true).map_err(pre)?;
                let defect = curved
                    .tubes
                    .iter()
                    .flat_map(|t| (0..=64).map(move |i| t.core.eval(i as f64 / 64.0)))
                    .map(|x| (x[0] * x[2] - x[1]).abs())
                    .fold(0.0, f64::max);
                let cv = union_volume_family(&curved, d / 2.0).map_err(pre)?;
                let straight = straight_contrast_family(d, seed).map_err(pre)?;
                let sv = union_volume_family(&straight, d / 2.0).map_err(pre)?;
                let n = curved.len();
                o.row(["surface-defect".into(), s(d), s(n), String::new(), s(defect), s(1e-12), s(defect / 1e-12)]);
                o.row(["curved-union".into(), s(d), s(n), String::new(), s(cv), s(p.constant * d), s(cv / (p.constant * d))]);
                o.row(["straight-union".into(), s(d), s(straight.len()), String::new(), s(sv), s(5.0 * cv), s(sv / cv)]);
                o.gate(&format!("identity at δ={d}"), defect <= 1e-12, s(defect));
                o.gate(&format!("curved union <= Cδ at δ={d}"), cv <= p.constant * d, s(cv / d));
                o.gate(&format!("straight/curved >= 5 at δ={d}"), sv >= 5.0 * cv, s(sv / cv));
            }
        }
        KakeyaMode::Multilinear => {
            for &d in &deltas {
                let mut normalized = vec![];
                for &n in &p.n {
                    let mut acc = 0.0;
                    let mut val = 0.0;
                    for sd in 0..p.seeds as u64 {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(sd));
                        let fams: Vec<_> =
                            (0..3).map(|ax| transverse_family(ax, n, d, p.tilt, &mut rng)).collect::<Result<_, _>>().map_err(pre)?;
                        let r = multilinear_kakeya_integral(&fams[0], &fams[1], &fams[2], d / 2.0).map_err(pre)?;
                        acc += r.ratio;
                        val += r.value;
                    }
                    let (ratio, value) = (acc / p.seeds as f64, val / p.seeds as f64);
                    let scale = d.powi(3) * (n as f64).powf(1.5);
                    o.row(["multilinear".into(), s(d), s(n), String::new(), s(value), s(p.constant * scale), s(ratio)]);
                    normalized.push(ratio);
                }
                let mx = normalized.iter().cloned().fold(0.0, f64::max);
                let mn = normalized.iter().cloned().fold(f64::INFINITY, f64::min);
                o.gate(&format!("normalized max/min <= 3 at δ={d}"), mx <= 3.0 * mn, s(mx / mn));
            }
        }
        KakeyaMode::Bilinear => {
            for &d in &deltas {
                for &th in &p.theta {
                    let v2 = [th.cos(), th.sin(), 0.0, 0.0];
                    let a2: Vec<f64> = v2.iter().map(|c| -0.5 * c).collect();
                    let t1 = Tube::straight(&[-0.5, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0], d, vec![]);
                    let t2 = Tube::straight(&a2, &v2, d, vec![]);
                    let b = bilinear_kakeya_integral(&t1, &t2, d / 2.0).map_err(pre)?;
                    let scale = d.powi(4);
                    o.row([format!("bilinear(theta={th})"), s(d), s(2), String::new(), s(b), s(scale), s(b / scale)]);
                    o.gate(&format!("within factor 3 of δ⁴ at θ={th}, δ={d}"), b <= 3.0 * scale && 3.0 * b >= scale, s(b / scale));
                }
            }
        }
        KakeyaMode::Bush => {
            let mut samples = vec![];
            for &d in &deltas {
                let fam = bush_family(d).map_err(pre)?;
                let v = indicator_sum_lp_family(&fam, 5.0 / 3.0, None, d / 2.0).map_err(pre)?;
                o.row(["bush".into(), s(d), s(fam.len()), "5/3".into(), s(v), String::new(), String::new()]);
                samples.push((1.0 / d, v));
            }
            if let Some(f) = o.fit("bush norm vs 1/δ", &samples) {
                o.gate("bush slope <= 0.5", f.slope <= 0.5, s(f.slope));
            }
        }
    }
    Ok(o)
}

fn run_elliptic(p: &EllipticParams) -> Result<Outcome, CliError> {
    let qv = to_f64(&to_q(&p.q)?);
    let mut o = Outcome::new(vec!["lambda", "q", "strips", "region_points", "region_volume", "region_norm", "slope_so_far"]);
    let (mut norms, mut vols) = (vec![], vec![]);
    for &l in &p.lambda {
        let mut cfg = ExampleConfig::new(l, qv);
        cfg.c = p.c;
        cfg.c0 = p.c0;
        cfg.tol = p.tol;
        cfg.region_counts = p.region_counts;
        if !p.signs.is_empty() {
            let k = cfg.strip_count();
            cfg.signs = SignMode::Fixed((0..k).map(|i| p.signs[i % p.signs.len()]).collect());
        }
        let r = elliptic_example_norm(&cfg).map_err(pre)?;
        norms.push((l, r.region_norm));
        vols.push((l, r.region_volume));
        o.row([s(l), p.q.clone(), s(r.strips), s(r.region_points), s(r.region_volume), s(r.region_norm), slope_so_far(&norms)]);
    }
    let claimed = -(0.75 + 1.0 / (2.0 * qv));
    if let Some(f) = o.fit("region norm", &norms) {
        o.gate("norm slope within 0.07 of claimed", (f.slope - claimed).abs() <= 0.07, format!("{} vs {claimed}", f.slope));
    }
    if let Some(f) = o.fit("region volume", &vols) {
        o.gate("volume slope within 0.05 of -1/2", (f.slope + 0.5).abs() <= 0.05, s(f.slope));
    }
    Ok(o)
}

fn run_hyperbolic(p: &HyperbolicParams) -> Result<Outcome, CliError> {
    let cfg = HyperbolicConfig::default();
    let on = p.x.to_vec();
    let off = vec![p.x[0], p.x[1] + p.off, p.x[2]];
    let mut o = Outcome::new(vec!["lambda", "x1", "x2", "x3", "defect", "re", "im", "abs", "off_abs", "slope_so_far"]);
    let mut samples = vec![];
    let mut last = (0.0, 0.0);
    for &l in &p.lambda {
        if surface_defect(&on) > 1.0 / l {
            return Err(CliError::Precondition(format!("|x2 − x1x3| = {} exceeds 1/λ = {}", surface_defect(&on), 1.0 / l)));
        }
        let v = hyperbolic_integral(l, &[on.clone(), off.clone()], &cfg).map_err(pre)?;
        samples.push((l, v[0].norm()));
        last = (v[0].norm(), v[1].norm());
        o.row([
            s(l),
            s(on[0]),
            s(on[1]),
            s(on[2]),
            s(surface_defect(&on)),
            s(v[0].re),
            s(v[0].im),
            s(v[0].norm()),
            s(v[1].norm()),
            slope_so_far(&samples),
        ]);
    }
    if let Some(f) = o.fit("magnitude", &samples) {
        o.gate("slope within 0.05 of -1/2", (f.slope + 0.5).abs() <= 0.05, s(f.slope));
    }
    o.gate("off-surface at least 3x smaller at largest λ", 3.0 * last.1 <= last.0, format!("{} vs {}", last.1, last.0));
    Ok(o)
}

fn run_cover(p: &CoverParams) -> Result<Outcome, CliError> {
    let delta = to_f64(&to_q(&p.delta)?);
    let sets: Vec<CubeSet> = match &p.cubes {
        Some(c) => vec![CubeSet::new(p.n, c.clone()).map_err(|e| CliError::Config(e.to_string()))?],
        None => p.sizes.iter().map(|&m| CubeSet::row(p.n, m)).collect(),
    };
    let mut o = Outcome::new(vec![
        "size",
        "collections",
        "balls",
        "levels",
        "max_log_radius",
        "count_constant",
        "radius_exponent_ratio",
        "sparse_basic",
        "sparse_strengthened",
        "covers",
    ]);
    let mut counts = vec![];
    let mut all_ok = true;
    for e in &sets {
        let r = cover(e, delta, p.c).map_err(pre)?;
        let basic = r.collections.iter().all(|c| verify_sparse(c, p.n, SparseMode::Basic, r.exponent).sparse);
        let strong = r.collections.iter().all(|c| verify_sparse(c, p.n, SparseMode::Strengthened, r.exponent).sparse);
        let cov = covers(e, &r);
        all_ok &= basic && strong && cov;
        let balls: usize = r.collections.iter().map(|c| c.len()).sum();
        let maxr = r.collections.iter().map(|c| c.log_radius).fold(f64::NEG_INFINITY, f64::max);
        o.row([
            s(e.len()),
            s(r.collections.len()),
            s(balls),
            s(r.levels),
            s(maxr),
            s(r.count_constant),
            s(r.radius_exponent_ratio),
            s(basic),
            s(strong),
            s(cov),
        ]);
        counts.push((e.len() as f64, r.collections.len() as f64));
        o.extra = serde_json::to_value(&r.collections).unwrap_or(Value::Null);
    }
    o.gate("sparse and covering", all_ok, String::new());
    if counts.len() >= 2 {
        if let Some(f) = o.fit("collections vs |E|", &counts) {
            o.gate("count slope <= δ + 0.1", f.slope <= delta + 0.1, s(f.slope));
        }
    }
    Ok(o)
}

fn run_orthogonality(p: &OrthogonalityParams) -> Result<Outcome, CliError> {
    let phase = PhaseFunction::extension(Surface::paraboloid(3));
    let mut o = Outcome::new(vec!["radius", "ratio", "caps", "points"]);
    let mut samples = vec![];
    for &r in &p.r {
        let rep = bessel_orthogonality_check(&phase, &Candidate::Constant, r, &[-0.5, -0.5], &[0.5, 0.5]).map_err(pre)?;
        samples.push((r as f64, rep.ratio));
        o.row([s(r), s(rep.ratio), s(rep.caps), s(rep.points)]);
    }
    if let Some(f) = o.fit("ratio", &samples) {
        o.gate("ratio slope within 0.15 of 0", f.slope.abs() <= 0.15, s(f.slope));
    }
    Ok(o)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs an experiment, writes `<name>.csv` and `<name>.json` under `out`, returns the record.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<ResultRecord, CliError> {
    let cfg = cfg.canonical()?;
    let start = Instant::now();
    let (outcome, nthreads) = with_threads(threads, || (compute(&cfg), rayon::current_num_threads()))?;
    let outcome = outcome?;
    let csv = outcome.csv_bytes()?;
    std::fs::create_dir_all(out)?;
    let name = cfg.experiment.name();
    let csv_file = format!("{name}.csv");
    std::fs::write(out.join(&csv_file), &csv)?;
    let record = ResultRecord {
        experiment: name.to_string(),
        config: serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?,
        config_hash: cfg.hash()?,
        csv_file,
        csv_sha256: sha256_hex(&csv),
        rows: outcome.rows.len(),
        fits: outcome.fits,
        gates: outcome.gates,
        extra: outcome.extra,
        threads: nthreads,
        wall_clock_ms: start.elapsed().as_millis(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(out.join(format!("{name}.json")), json)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub experiment: String,
    pub config_hash: String,
    pub identical: bool,
    /// First differing lines, as (line number, recorded, replayed).
    pub diff: Vec<(usize, String, String)>,
}

/// Re-runs the recorded config and compares the CSV bytes with the recorded file.
pub fn replay(record_path: &Path, threads: Option<usize>) -> Result<ReplayReport, CliError> {
    let text = std::fs::read_to_string(record_path)?;
    let record: ResultRecord = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("record: {e}")))?;
    let cfg: ExperimentConfig = serde_json::from_value(record.config.clone()).map_err(|e| CliError::Config(format!("record config: {e}")))?;
    if cfg.hash()? != record.config_hash {
        return Err(CliError::Mismatch("config hash does not match the recorded config".into()));
    }
    let dir = record_path.parent().unwrap_or(Path::new("."));
    let recorded = std::fs::read(dir.join(&record.csv_file))?;
    let outcome = with_threads(threads, || compute(&cfg))??;
    let fresh = outcome.csv_bytes()?;
    let a = String::from_utf8_lossy(&recorded);
    let b = String::from_utf8_lossy(&fresh);
    let mut diff = vec![];
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    for i in 0..la.len().max(lb.len()) {
        let (x, y) = (la.get(i).copied().unwrap_or(""), lb.get(i).copied().unwrap_or(""));
        if x != y && diff.len() < 20 {
            diff.push((i + 1, x.to_string(), y.to_string()));
        }
    }
    Ok(ReplayReport { experiment: record.experiment, config_hash: record.config_hash, identical: recorded == fresh, diff })
}

#[derive(Debug, Parser)]
#[command(name = "oscilab", version, about = "Oscillatory integral, Kakeya and covering experiments")]
pub struct Cli {
    /// JSON experiment config; flags override its params.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; falls back to $OSCILAB_OUT, then ./oscilab-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponent table for a range of dimensions, e.g. --n 3..6.
    Thresholds {
        #[arg(long)]
        n: Option<String>,
    },
    /// Catalog lower bound for Q_R on the paraboloid.
    QrSweep {
        #[arg(long)]
        r: Option<String>,
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        x_spacing: Option<f64>,
    },
    /// Broad/narrow classification: fuzzed coefficients, a sampled field, or the quadruple census.
    Decompose {
        #[arg(long, value_enum)]
        mode: Option<DecomposeMode>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Tube integrals.
    Kakeya {
        #[arg(long, value_enum)]
        mode: Option<KakeyaMode>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Strip-modulated data for the twisted elliptic phase, e.g. --lambda 64,128 --q 10/3.
    ExampleElliptic {
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        signs: Option<String>,
    },
    /// Chirp data for the twisted hyperbolic phase at a point of x2 = x1x3.
    ExampleHyperbolic {
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long)]
        x: Option<String>,
    },
    /// Sparse covers of cube rows (--sizes) or of a JSON list of cube corners (--cubes).
    Cover {
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        cubes: Option<PathBuf>,
        #[arg(long)]
        delta: Option<String>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Cap orthogonality ratio over R.
    Orthogonality {
        #[arg(long)]
        r: Option<String>,
    },
    /// Re-run a result record and compare CSV bytes.
    Replay { record: PathBuf },
}

/// "a..b" (inclusive) or a comma list.
pub fn parse_u_list<T: std::str::FromStr + Copy + TryFrom<u64>>(s: &str) -> Result<Vec<T>, CliError> {
    let bad = || CliError::Config(format!("bad integer list: {s}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().trim_start_matches('=').parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return (a..=b).map(|v| T::try_from(v).map_err(|_| bad())).collect();
    }
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|_| bad())).collect()
}

/// Comma list of reals; items may be rationals such as 10/3.
pub fn parse_f_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().ok().or_else(|| parse_q(t).map(|v| to_f64(&v))).ok_or_else(|| CliError::Config(format!("bad number: {t}")))
        })
        .collect()
}

fn parse_s_list(s: &str) -> Vec<String> {
    s.split(',').map(|t| t.trim().to_string()).collect()
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Config for a subcommand: the file's params when the experiment matches, then flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<Option<ExperimentConfig>, CliError> {
    let file = cli.config.as_deref().map(load_config).transpose()?;
    let base = |name: &str| -> Result<Option<ExperimentConfig>, CliError> {
        match &file {
            Some(c) if c.experiment.name() == name => Ok(Some(c.clone())),
            Some(c) => Err(CliError::Config(format!("config is for {}, not {name}", c.experiment.name()))),
            None => Ok(None),
        }
    };
    let mut cfg = match &cli.command {
        Command::Replay { .. } => return Ok(None),
        Command::Thresholds { n } => {
            let mut c = base("thresholds")?.unwrap_or(ExperimentConfig { experiment: Experiment::Thresholds(Default::default()), seed: 1 });
            if let (Experiment::Thresholds(p), Some(n)) = (&mut c.experiment, n) {
                p.n = parse_u_list(n)?;
            }
            c
        }
        Command::QrSweep { r, p: pp, x_spacing } => {
            let mut c = base("qr-sweep")?.unwrap_or(ExperimentConfig { experiment: Experiment::QrSweep(Default::default()), seed: 1 });
            if let Experiment::QrSweep(p) = &mut c.experiment {
                if let Some(r) = r {
                    p.r = parse_f_list(r)?;
                }
                if let Some(v) = pp {
                    p.p = v.clone();
                }
                if let Some(v) = x_spacing {
                    p.x_spacing = *v;
                }
            }
            c
        }
        Command::Decompose { mode, count, k, k1, margin } => {
            let mut c = base("decompose")?.unwrap_or(ExperimentConfig { experiment: Experiment::Decompose(Default::default()), seed: 1 });
            if let Experiment::Decompose(p) = &mut c.experiment {
                p.mode = mode.unwrap_or(p.mode);
                p.count = count.unwrap_or(p.count);
                p.k = k.unwrap_or(p.k);
                p.k1 = k1.unwrap_or(p.k1);
                p.margin = margin.unwrap_or(p.margin);
            }
            c
        }
        Command::Kakeya { mode, delta, n, theta, seeds } => {
            let mut c = base("kakeya")?.unwrap_or(ExperimentConfig { experiment: Experiment::Kakeya(Default::default()), seed: 1 });
            if let Experiment::Kakeya(p) = &mut c.experiment {
                p.mode = mode.unwrap_or(p.mode);
                if let Some(d) = delta {
                    p.delta = parse_s_list(d);
                }
                if let Some(v) = n {
                    p.n = parse_u_list(v)?;
                }
                if let Some(v) = theta {
                    p.theta = parse_f_list(v)?;
                }
                p.seeds = seeds.unwrap_or(p.seeds);
            }
            c
        }
        Command::ExampleElliptic { lambda, q: qq, signs } => {
            let mut c = base("example-elliptic")?
                .unwrap_or(ExperimentConfig { experiment: Experiment::ExampleElliptic(Default::default()), seed: 1 });
            if let Experiment::ExampleElliptic(p) = &mut c.experiment {
                if let Some(l) = lambda {
                    p.lambda = parse_f_list(l)?;
                }
                if let Some(v) = qq {
                    p.q = v.clone();
                }
                if let Some(v) = signs {
                    p.signs = v
                        .split(',')
                        .map(|t| t.trim().parse::<i8>().map_err(|_| CliError::Config(format!("bad sign: {t}"))))
                        .collect::<Result<_, _>>()?;
                }
            }
            c
        }
        Command::ExampleHyperbolic { lambda, x } => {
            let mut c = base("example-hyperbolic")?
                .unwrap_or(ExperimentConfig { experiment: Experiment::ExampleHyperbolic(Default::default()), seed: 1 });
            if let Experiment::ExampleHyperbolic(p) = &mut c.experiment {
                if let Some(l) = lambda {
                    p.lambda = parse_f_list(l)?;
                }
                if let Some(v) = x {
                    let v = parse_f_list(v)?;
                    if v.len() != 3 {
                        return Err(CliError::Config("--x needs three coordinates".into()));
                    }
                    p.x = [v[0], v[1], v[2]];
                }
            }
            c
        }
        Command::Cover { sizes, cubes, delta, c: cc } => {
            let mut c = base("cover")?.unwrap_or(ExperimentConfig { experiment: Experiment::Cover(Default::default()), seed: 1 });
            if let Experiment::Cover(p) = &mut c.experiment {
                if let Some(v) = sizes {
                    p.sizes = parse_u_list(v)?;
                }
                if let Some(path) = cubes {
                    let text = std::fs::read_to_string(path)?;
                    let corners: Vec<Vec<i64>> =
                        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                    p.n = corners.first().map_or(p.n, |c| c.len());
                    p.cubes = Some(corners);
                }
                if let Some(v) = delta {
                    p.delta = v.clone();
                }
                if cc.is_some() {
                    p.c = *cc;
                }
            }
            c
        }
        Command::Orthogonality { r } => {
            let mut c =
                base("orthogonality")?.unwrap_or(ExperimentConfig { experiment: Experiment::Orthogonality(Default::default()), seed: 1 });
            if let (Experiment::Orthogonality(p), Some(r)) = (&mut c.experiment, r) {
                p.r = parse_u_list(r)?;
            }
            c
        }
    };
    if let Some(sd) = cli.seed {
        cfg.seed = sd;
    }
    Ok(Some(cfg.canonical()?))
}

pub fn output_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("OSCILAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("oscilab-out"))
}

/// Exit codes: 0 success, 1 runtime or precondition error, 2 config error, 3 failed gate,
/// 4 replay mismatch.
pub fn run_cli(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Replay { record } => replay(record, cli.threads).map(|r| {
            if r.identical {
                println!("replay {} ({}): identical", r.experiment, &r.config_hash[..12]);
                0
            } else {
                println!("replay {}: MISMATCH", r.experiment);
                for (line, a, b) in &r.diff {
                    println!("  line {line}: recorded {a:?} replayed {b:?}");
                }
                4
            }
        }),
        _ => resolve_config(cli).and_then(|cfg| {
            let cfg = cfg.expect("non-replay command has a config");
            let rec = run_experiment(&cfg, &output_dir(cli), cli.threads)?;
            println!("{}", rec.verdict());
            Ok(if rec.passed() { 0 } else { 3 })
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_u_list::<u32>("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_u_list::<usize>("8,16").unwrap(), vec![8, 16]);
        assert_eq!(parse_f_list("64, 10/3").unwrap(), vec![64.0, 10.0 / 3.0]);
        assert!(parse_u_list::<u32>("6..3").is_err());
        assert!(parse_f_list("x").is_err());
    }

    #[test]
    fn canonical_hash_ignores_rational_spelling() {
        let mk = |q: &str| ExperimentConfig {
            experiment: Experiment::ExampleElliptic(EllipticParams { q: q.into(), ..Default::default() }),
            seed: 3,
        };
        assert_eq!(mk("10/3").hash().unwrap(), mk("20/6").hash().unwrap());
        assert_ne!(mk("10/3").hash().unwrap(), mk("3").hash().unwrap());
        let json = mk("20/6").canonical_json().unwrap();
        assert!(json.contains("\"q\":\"10/3\""));
        let keys: Vec<usize> = ["\"experiment\"", "\"params\"", "\"seed\""].iter().map(|k| json.find(k).unwrap()).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn config_round_trip_and_unknown_fields() {
        let c = ExperimentConfig { experiment: Experiment::Cover(Default::default()), seed: 9 };
        let v = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&v).unwrap(), c);
        let bad = r#"{"experiment":"cover","params":{"sizes":[8],"bogus":1},"seed":1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }

    #[test]
    fn thresholds_table() {
        let o = compute(&ExperimentConfig { experiment: Experiment::Thresholds(Default::default()), seed: 1 }).unwrap();
        assert!(o.gates.iter().all(|g| g.pass));
        assert_eq!(o.rows[0][1], "10/3");
        assert_eq!(o.rows[1][1], "3");
    }
}
