use crate::config::{Command, RunConfig};
use crate::output::{num, slug, NamedReport};
use drift_lab::embeddings::{
    bessel_integrability_scan, embedding_ratio_battery, integrability_alphas, obstruction_slope, translation_scaling_identity,
    young_check, EmbeddingCase, Target, TRANSLATION_TOLERANCE,
};
use drift_lab::families::{gauss_bump, random_bump_pairs, standard_battery, TestFunction};
use drift_lab::grid::{sample, words_of_length, GridFunction};
use drift_lab::hardy::{algebra_failure_scan, algebra_window_scan, nobmo_scan, nu_window, Variant};
use drift_lab::heat::{
    certify_gaussian_bound, default_certificate_times, export_kernel_table, heat_apply, heat_invariants, CertificateGrid,
    HeatKernelModel, KernelBoundCertificate,
};
use drift_lab::pde::{
    admissibility_check, admissibility_check2, composition_inequality_scan, picard_heat, picard_schrodinger, CauchyProblem,
    Nonlinearity, Nonlinearity2, SolutionTrajectory,
};
use drift_lab::report::ScanReport;
use drift_lab::sobolev::{battery_grid, c_min, riesz_ratio_battery, route_triangle_scan};
use drift_lab::{GridSpec, GroupKind, GroupPoint, LabError, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Collects the reports of one command. Usage errors abort the run; any
/// other error becomes a failed report and the run goes on.
pub struct Runner<'a> {
    pub config: &'a RunConfig,
    command: &'static str,
    pub reports: Vec<NamedReport>,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a RunConfig) -> Self {
        Runner { config, command: config.command.name(), reports: Vec::new() }
    }

    fn push(&mut self, battery: &str, name: String, report: ScanReport) -> &mut NamedReport {
        self.reports.push(NamedReport::new(self.command, battery, name, report));
        self.reports.last_mut().expect("just pushed")
    }

    fn record(&mut self, battery: &str, name: String, result: Result<ScanReport>) -> Result<Option<&mut NamedReport>> {
        match result {
            Ok(report) => Ok(Some(self.push(battery, name, report))),
            Err(e) if e.is_usage() => Err(e),
            Err(e) => {
                self.reports.push(NamedReport::failure(self.command, battery, name, &e));
                Ok(None)
            }
        }
    }

    fn record_all(&mut self, battery: &str, names: Vec<String>, result: Result<Vec<ScanReport>>) -> Result<()> {
        match result {
            Ok(reports) => {
                for (name, r) in names.into_iter().zip(reports) {
                    self.push(battery, name, r);
                }
                Ok(())
            }
            Err(e) if e.is_usage() => Err(e),
            Err(e) => {
                let name = format!("{battery}_error_{}", self.reports.len());
                self.reports.push(NamedReport::failure(self.command, battery, name, &e));
                Ok(())
            }
        }
    }

    pub fn run(&mut self, command: Command) -> Result<()> {
        self.command = command.name();
        match command {
            Command::Heat => heat(self),
            Command::Sobolev => sobolev(self),
            Command::Embed => embed(self),
            Command::Counterexample => counterexample(self),
            Command::Pde => pde(self),
            Command::All => {
                for c in [Command::Heat, Command::Sobolev, Command::Embed, Command::Counterexample, Command::Pde] {
                    if c == Command::Counterexample && self.config.group == GroupKind::AbelianLine {
                        continue;
                    }
                    self.run(c)?;
                }
                Ok(())
            }
        }
    }
}

const GAMMAS: [f64; 3] = [0.0, 1.0, 2.0];

fn d_of(kind: GroupKind) -> f64 {
    kind.local_dim() as f64
}

// ---------------------------------------------------------------------------
// heat

fn default_heat_grid(kind: GroupKind) -> Result<GridSpec> {
    match kind {
        GroupKind::AxB => GridSpec::symmetric(128, 128, 6.0, 2.5),
        GroupKind::AbelianLine => GridSpec::line(-20.0, 20.0, 801),
    }
}

pub fn certificate_report(cert: &KernelBoundCertificate) -> ScanReport {
    let mut r = ScanReport::new("gaussian_certificate");
    r.param("group", cert.kind).param("gamma", cert.gamma).param("m", cert.m).param("t_range", [cert.t_min, cert.t_max]);
    r.param("n_train", cert.n_train).param("n_valid", cert.n_valid);
    r.stat("b_hat", cert.b_hat)
        .stat("omega_hat", cert.omega_hat)
        .stat("prefactor", cert.prefactor)
        .stat("raw_prefactor", cert.raw_prefactor)
        .stat("max_violation", cert.max_violation);
    r.row(
        "certificate",
        &[("b_hat", cert.b_hat), ("omega_hat", cert.omega_hat), ("prefactor", cert.prefactor), ("max_violation", cert.max_violation)],
    );
    r.check("certified", cert.success, format!("largest validation excess {:.3e}", cert.max_violation));
    r.check("b_hat_floor", cert.b_hat >= 0.2, format!("b̂ = {}", cert.b_hat));
    r
}

fn heat(run: &mut Runner) -> Result<()> {
    let cfg = run.config;
    let kind = cfg.group;
    let gammas = cfg.gammas_or(&GAMMAS);
    let ts = cfg.ts.clone().unwrap_or_else(|| vec![0.1, 0.5, 1.0]);
    let grid = cfg.grid_or(default_heat_grid(kind)?)?;
    if cfg.selected("invariants") {
        run.record("invariants", "heat_invariants".into(), heat_invariants(grid, &gammas, &ts))?;
    }
    if cfg.selected("certificates") {
        for &gamma in &gammas {
            for m in [0, 1] {
                let model = HeatKernelModel::new(kind, gamma);
                let cert = certify_gaussian_bound(&model, &default_certificate_times(), CertificateGrid::default(), m);
                run.record("certificates", format!("certificate_g{}_m{m}", num(gamma)), cert.map(|c| certificate_report(&c)))?;
            }
        }
    }
    if cfg.selected("kernels") {
        let rs: Vec<f64> = (0..=60).map(|k| 0.1 * k as f64).collect();
        let dir = cfg.out.join("kernels");
        std::fs::create_dir_all(&dir)?;
        for &gamma in &gammas {
            let model = HeatKernelModel::new(kind, gamma);
            export_kernel_table(&model, &ts, &rs, &dir.join(format!("kernel_g{}.csv", num(gamma))))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sobolev

fn sobolev(run: &mut Runner) -> Result<()> {
    let cfg = run.config;
    let kind = cfg.group;
    let grid = cfg.grid_or(battery_grid(kind))?;
    let gammas = cfg.gammas_or(&GAMMAS);
    let ps = cfg.ps_or(&[1.5, 2.0, 3.0]);
    let family = standard_battery(kind);
    if cfg.selected("triangle") {
        let alphas = cfg.alphas_or(&[0.5, 1.0]);
        for &gamma in &gammas {
            let rep = route_triangle_scan(&family, grid, gamma, &alphas, &ps);
            run.record("triangle", format!("route_triangle_g{}", num(gamma)), rep)?;
        }
    }
    if cfg.selected("riesz") {
        let mut words = words_of_length(kind, 1);
        words.extend(words_of_length(kind, 2));
        for &gamma in &gammas {
            let c = match cfg.c {
                Some(c) => c,
                None => c_min(kind, gamma)?,
            };
            let mut names = Vec::new();
            for w in &words {
                let label: String = w.iter().map(|f| format!("{f:?}")).collect();
                for &p in &ps {
                    names.push(format!("riesz_g{}_{}_p{}", num(gamma), slug(&label), num(p)));
                }
            }
            run.record_all("riesz", names, riesz_ratio_battery(&words, &ps, gamma, c, &family, grid))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// embed

/// Fine grid for the translation identities and the obstruction slope.
pub fn translation_grid() -> GridSpec {
    GridSpec::axb(-8.0, 8.0, 641, -2.5, 2.5, 101).expect("valid grid")
}

fn young_grid(kind: GroupKind) -> GridSpec {
    match kind {
        GroupKind::AxB => GridSpec::axb(-5.0, 5.0, 101, -2.5, 2.5, 51),
        GroupKind::AbelianLine => GridSpec::line(-15.0, 15.0, 601),
    }
    .expect("valid grid")
}

/// Exponent pairs of the finite form; each random pair also meets the `q = ∞` form.
const YOUNG_FINITE: [(f64, f64); 4] = [(2.0, 2.0), (1.5, 3.0), (3.0, 6.0), (1.5, 2.0)];
const YOUNG_PAIRS: usize = 50;
const TRANSLATION_SAMPLES: usize = 20;

fn identity_bump() -> TestFunction {
    TestFunction::new("gauss_0.5", gauss_bump(GroupKind::AxB, GroupPoint::IDENTITY, 0.5))
}

fn embed(run: &mut Runner) -> Result<()> {
    let cfg = run.config;
    let kind = cfg.group;
    let d = d_of(kind);
    let gammas = cfg.gammas_or(&GAMMAS);
    let grid = cfg.grid_or(battery_grid(kind))?;
    if cfg.selected("ratios") {
        let ps = cfg.ps_or(&[1.5, 2.0, 3.0]);
        let alphas = cfg.alphas_or(&[0.25 * d, 0.5 * d, 0.75 * d]);
        let family = standard_battery(kind);
        for &gamma in &gammas {
            let mut cases = Vec::new();
            for &p in &ps {
                for &alpha in &alphas {
                    for q in [p, 2.0 * p, f64::INFINITY] {
                        let case = EmbeddingCase::new(kind, p, q, alpha, gamma, Target::Weighted);
                        if case.classify().is_ok() {
                            cases.push(case);
                        }
                    }
                }
            }
            let names = cases
                .iter()
                .map(|c| format!("embedding_g{}_p{}_q{}_a{}", num(gamma), num(c.p), num(c.q), num(c.alpha)))
                .collect();
            run.record_all("ratios", names, embedding_ratio_battery(&cases, &family, grid))?;
        }
    }
    if cfg.selected("integrability") {
        for &gamma in &gammas {
            for r in [1.5, 2.0, 3.0] {
                let rep = bessel_integrability_scan(kind, 0.0, 0.0, r, &integrability_alphas(kind, r), gamma);
                run.record("integrability", format!("integrability_g{}_r{}", num(gamma), num(r)), rep)?;
            }
        }
    }
    if cfg.selected("young") {
        let rep = young_battery(kind, cfg.seed);
        run.record("young", "young".into(), rep)?;
    }
    if kind == GroupKind::AxB && cfg.selected("translation") {
        let rep = translation_battery(cfg.seed);
        run.record("translation", "translation_identity".into(), rep)?;
    }
    if kind == GroupKind::AxB && cfg.selected("obstruction") {
        let f = identity_bump();
        for &gamma in &gammas {
            let rep = obstruction_slope(&f, 2.0, 4.0, gamma, (0.5, 2.0), translation_grid());
            if let Some(named) = run.record("obstruction", format!("obstruction_g{}_p2_q4", num(gamma)), rep)? {
                if gamma != 1.0 {
                    named.expected_divergence = true;
                    named.report.param("target", Target::Unweighted);
                    named.report.warn("unweighted target with χ ≠ δ: the embedding constant is unbounded along (0, a)");
                }
            }
        }
    }
    Ok(())
}

/// Both forms of the Young inequality on seeded random nonnegative pairs.
pub fn young_battery(kind: GroupKind, seed: u64) -> Result<ScanReport> {
    let grid = young_grid(kind);
    let mut out = ScanReport::new("young_battery");
    out.param("group", kind).param("pairs", YOUNG_PAIRS).param("seed", seed).param("grid", grid);
    let (mut worst_finite, mut worst_inf) = (0.0f64, 0.0f64);
    for (k, (f, g)) in random_bump_pairs(kind, YOUNG_PAIRS, seed).into_iter().enumerate() {
        let (fs, gs) = (f.sample(grid)?, g.sample(grid)?);
        let (p, q) = YOUNG_FINITE[k % YOUNG_FINITE.len()];
        for (p, q) in [(p, q), (p, f64::INFINITY)] {
            let r = young_check(&fs, &gs, p, q)?;
            let ratio = r.summary_value("ratio").unwrap_or(f64::NAN);
            if let Some(t) = r.truncation_mass {
                out.note_truncation(t);
            }
            if q.is_finite() {
                worst_finite = worst_finite.max(ratio);
            } else {
                worst_inf = worst_inf.max(ratio);
            }
            let row = &r.rows[0].values;
            out.row(format!("pair{k}_p{}_q{}", num(p), num(q)), &[("p", p), ("q", q), ("lhs", row["lhs"]), ("rhs", row["rhs"]), ("ratio", ratio)]);
        }
    }
    out.stat("max_ratio_finite", worst_finite).stat("max_ratio_sup", worst_inf);
    out.check("finite_form", worst_finite <= 1.05, format!("largest lhs/rhs {worst_finite:.4}"));
    out.check("sup_form", worst_inf <= 1.05, format!("largest lhs/rhs {worst_inf:.4}"));
    Ok(out)
}

/// Translation-scaling identities at seeded random `(y, p, q, γ)`.
pub fn translation_battery(seed: u64) -> Result<ScanReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = identity_bump();
    let grid = translation_grid();
    let mut out = ScanReport::new("translation_battery");
    out.param("samples", TRANSLATION_SAMPLES).param("seed", seed).param("f", &f.label).param("grid", grid);
    let mut worst = 0.0f64;
    for k in 0..TRANSLATION_SAMPLES {
        let y = GroupPoint::from_log(rng.gen_range(-1.0..1.0), rng.gen_range(-0.6..0.6));
        let p = rng.gen_range(1.5..3.0);
        let q = rng.gen_range(1.2..4.0);
        let gamma = rng.gen_range(-0.5..2.5);
        let r = translation_scaling_identity(&f, y, p, q, gamma, grid)?;
        let err = r.summary_value("max_rel_err").unwrap_or(f64::NAN);
        let factor = r.rows[0].values["factor"];
        worst = worst.max(err);
        out.row(format!("sample{k}"), &[("y_x", y.x), ("y_a", y.a), ("p", p), ("q", q), ("gamma", gamma), ("factor_q", factor), ("max_rel_err", err)]);
    }
    out.stat("max_rel_err", worst);
    out.check("identity", worst <= TRANSLATION_TOLERANCE, format!("largest relative error {worst:.3e}"));
    Ok(out)
}

// ---------------------------------------------------------------------------
// counterexample

/// `ν` at 40% of the window from its lower end.
pub fn default_nu(gamma: f64, p: f64) -> Result<f64> {
    let (_, lo, hi) = nu_window(gamma, p)?;
    Ok(lo + 0.4 * (hi - lo))
}

fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (a.ln() + (b.ln() - a.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

fn counterexample(run: &mut Runner) -> Result<()> {
    let cfg = run.config;
    if cfg.group != GroupKind::AxB {
        return Err(LabError::Parameter("the counterexample family lives on ax+b".into()));
    }
    let gammas = cfg.gammas_or(&[0.0, 2.0]);
    let ps = cfg.ps_or(&[2.0, 3.0]);
    for &gamma in &gammas {
        for &p in &ps {
            let (variant, lo, hi) = nu_window(gamma, p)?;
            let nu = default_nu(gamma, p)?;
            let tag = format!("g{}_p{}", num(gamma), num(p));
            if cfg.selected("nobmo") {
                let (ys, eta) = match variant {
                    Variant::Compact => (geomspace(1.0 / 64.0, 0.25, 7), 1.0),
                    Variant::Tilde => (geomspace(4.0, 256.0, 7), 0.5),
                };
                run.record("nobmo", format!("nobmo_{tag}"), nobmo_scan(gamma, p, nu, eta, &ys))?;
            }
            if cfg.selected("algebra") {
                let rep = algebra_failure_scan(gamma, p, nu, 1, (0.25, 0.25 * 2f64.powi(-20), 21));
                run.record("algebra", format!("algebra_failure_{tag}"), rep)?;
            }
            if cfg.selected("window") {
                let w = hi - lo;
                let nus: Vec<f64> = (0..=20).map(|k| lo - 0.5 * w + 0.1 * w * k as f64).filter(|v| v.abs() > 1e-9).collect();
                run.record("window", format!("algebra_window_{tag}"), algebra_window_scan(gamma, p, &nus, 1))?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// pde

const TRAJECTORY_STRIDE: usize = 5;

struct PdeSetup {
    grid: GridSpec,
    heat_amplitude: f64,
    heat_steps: usize,
    schrodinger_amplitude: f64,
    schrodinger_steps: usize,
    schrodinger_rule: Nonlinearity,
    schrodinger_alpha: f64,
}

fn pde_setup(kind: GroupKind) -> Result<PdeSetup> {
    Ok(match kind {
        GroupKind::AxB => PdeSetup {
            grid: GridSpec::symmetric(241, 51, 6.0, 2.5)?,
            heat_amplitude: 0.3,
            heat_steps: 20,
            schrodinger_amplitude: 0.3,
            schrodinger_steps: 20,
            schrodinger_rule: Nonlinearity::quintic(),
            schrodinger_alpha: 2.0,
        },
        GroupKind::AbelianLine => PdeSetup {
            grid: GridSpec::line(-20.0, 20.0, 801)?,
            heat_amplitude: 0.2,
            heat_steps: 40,
            schrodinger_amplitude: 0.15,
            schrodinger_steps: 50,
            schrodinger_rule: Nonlinearity::cubic(),
            schrodinger_alpha: 1.0,
        },
    })
}

/// Initial datum: a Gaussian bump at the identity (width 0.5 on ax+b, `e^{-x²}` on the line).
fn initial_datum(grid: GridSpec, amplitude: f64) -> Result<GridFunction> {
    let sigma = if grid.kind == GroupKind::AxB { 0.5 } else { 1.0 };
    Ok(sample(gauss_bump(grid.kind, GroupPoint::IDENTITY, sigma), grid)?.scale(amplitude))
}

fn pde(run: &mut Runner) -> Result<()> {
    let cfg = run.config;
    let kind = cfg.group;
    let setup = pde_setup(kind)?;
    let grid = cfg.grid_or(setup.grid)?;
    let gammas = cfg.gammas_or(&GAMMAS);
    let tau = cfg.tau.unwrap_or(0.5);
    let p = cfg.ps_or(&[2.0])[0];
    let alpha = cfg.alphas_or(&[1.0])[0];
    let export = cfg.selected("export");
    let mut trajectories: Vec<(String, SolutionTrajectory)> = Vec::new();

    if cfg.selected("heat") {
        let u0 = initial_datum(grid, setup.heat_amplitude)?;
        for &gamma in &gammas {
            let problem = CauchyProblem::heat(u0.clone(), gamma, tau, p, alpha, setup.heat_steps);
            let name = format!("picard_heat_g{}", num(gamma));
            match picard_heat(&problem, &Nonlinearity::cubic()) {
                Ok(tr) => {
                    run.push("heat", name.clone(), tr.report()).report.param("rule", "cubic").param("tau", tau);
                    trajectories.push((name, tr));
                }
                Err(e) => {
                    run.record("heat", name, Err(e))?;
                }
            }
        }
    }
    if cfg.selected("schrodinger") {
        let u0 = initial_datum(grid, setup.schrodinger_amplitude)?;
        let problem = CauchyProblem::schrodinger(u0, tau, setup.schrodinger_alpha, setup.schrodinger_steps);
        let name = format!("picard_schrodinger_{}", setup.schrodinger_rule.label);
        match picard_schrodinger(&problem, &setup.schrodinger_rule) {
            Ok(tr) => {
                run.push("schrodinger", name.clone(), tr.report()).report.param("rule", &setup.schrodinger_rule.label).param("tau", tau);
                trajectories.push((name, tr));
            }
            Err(e) => {
                run.record("schrodinger", name, Err(e))?;
            }
        }
    }
    if cfg.selected("linear") {
        let rep = linear_reduction(grid, &gammas, tau, p, alpha, setup.heat_steps, setup.heat_amplitude);
        run.record("linear", "linear_reduction".into(), rep)?;
        // one unit of time for the mass and reversal checks
        let u0 = initial_datum(grid, 1.0)?;
        let problem = CauchyProblem::schrodinger(u0, 1.0, setup.schrodinger_alpha, 40);
        let rep = picard_schrodinger(&problem, &Nonlinearity::zero()).map(|tr| tr.report());
        run.record("linear", "linear_schrodinger".into(), rep)?;
    }
    if cfg.selected("admissibility") {
        run.record("admissibility", "admissibility".into(), Ok(admissibility_table()))?;
    }
    if cfg.selected("composition") {
        let pairs = random_bump_pairs(kind, 3, cfg.seed);
        let gamma = gammas[0];
        let rules = [(Nonlinearity2::new("xy", |x, y| x * y), 0.0, 0.7), (Nonlinearity2::new("x2y", |x, y| x * x * y), 0.5, 1.0)];
        for (g, a, radius) in rules {
            let rep = composition_inequality_scan(&g, a, 2.0, radius, &pairs, gamma, grid);
            run.record("composition", format!("composition_{}_a{}", g.label, num(a)), rep)?;
        }
    }
    if export {
        for (name, tr) in &trajectories {
            tr.export(&cfg.out.join("trajectories").join(name), TRAJECTORY_STRIDE)?;
        }
    }
    Ok(())
}

/// With `F ≡ 0` the Picard solution is the linear flow itself.
fn linear_reduction(grid: GridSpec, gammas: &[f64], tau: f64, p: f64, alpha: f64, n_t: usize, amplitude: f64) -> Result<ScanReport> {
    let u0 = initial_datum(grid, amplitude)?;
    let mut out = ScanReport::new("linear_reduction");
    out.param("tau", tau).param("n_t", n_t);
    let mut worst = 0.0f64;
    let mut iterations = 0usize;
    for &gamma in gammas {
        let tr = picard_heat(&CauchyProblem::heat(u0.clone(), gamma, tau, p, alpha, n_t), &Nonlinearity::zero())?;
        let direct = heat_apply(&u0, tau, gamma)?;
        let diff = tr.final_state().sub(&direct).max_abs();
        worst = worst.max(diff);
        iterations = iterations.max(tr.iterations());
        out.row(format!("gamma={gamma}"), &[("gamma", gamma), ("max_abs_difference", diff), ("iterations", tr.iterations() as f64)]);
    }
    out.stat("max_abs_difference", worst);
    out.check("exact_linear_flow", worst == 0.0, format!("{worst:e}"));
    out.check("single_iteration", iterations == 1, format!("{iterations}"));
    Ok(out)
}

/// Classification of the named rules against their vanishing order at 0.
fn admissibility_table() -> ScanReport {
    // (name, order of the first nonvanishing derivative at 0)
    let rules: [(&str, Option<usize>); 5] =
        [("zero", None), ("linear", Some(1)), ("cubic", Some(3)), ("quintic", Some(5)), ("shifted_square", Some(0))];
    let mut out = ScanReport::new("admissibility");
    let mut consistent = true;
    for (name, first) in rules {
        let f = Nonlinearity::by_name(name).expect("known rule");
        for alpha in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let rep = admissibility_check(&f, alpha);
            let expected = first.map_or(true, |k| (alpha.floor() as usize) < k);
            consistent &= rep.admissible == expected;
            out.row(format!("{name}@{alpha}"), &[("alpha", alpha), ("admissible", rep.admissible as u8 as f64), ("expected", expected as u8 as f64)]);
        }
    }
    let two: [(&str, fn(f64, f64) -> f64, usize); 2] = [("xy", |x, y| x * y, 2), ("x2y", |x, y| x * x * y, 3)];
    for (name, rule, first) in two {
        let g = Nonlinearity2::new(name, rule);
        for alpha in [0.0, 1.0, 2.0, 3.0] {
            let rep = admissibility_check2(&g, alpha);
            let expected = (alpha.floor() as usize) < first;
            consistent &= rep.admissible == expected;
            out.row(format!("{name}@{alpha}"), &[("alpha", alpha), ("admissible", rep.admissible as u8 as f64), ("expected", expected as u8 as f64)]);
        }
    }
    out.check("classification", consistent, "admissible exactly below the vanishing order");
    out
}
