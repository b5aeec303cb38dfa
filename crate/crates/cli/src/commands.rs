//! Command implementations and run orchestration.
//!
//! Every command resolves its settings (flags override spec-file run keys,
//! which override documented defaults), writes its data files into the
//! output directory, writes a `manifest.txt` recording the run, and returns
//! whether its check passed. Diagnostics go to standard error; data goes to
//! files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use dsgame_core::filtering::{
    assemble_filtering_system, simulate_one, solve_decoupling, DecoupledStepper,
    DecouplingLimits, EquilibriumPolicy, NodePolicy, RiccatiSolution,
};
use dsgame_core::hamiltonian::arrow_condition_check;
use dsgame_core::mat::vadd;
use dsgame_core::model::{validate_spec, validate_zero_sum, LqGameSpec, Player, ZeroSumSpec};
use dsgame_core::noise::{sample_paths, TimeGrid, TreeNoise, MAX_TREE_DEPTH};
use dsgame_core::oracle::{compose_on_tree, eval_cost_on_tree, solve_on_tree};
use dsgame_core::verify::{
    convergence_study, filter_consistency_check, gateaux_check, minimax_gap_check, nash_check,
    saddle_check, standard_deviation_set, stationarity_sweep, Deviation, NashReport,
    EPSILON_GRID,
};
use dsgame_core::Error as CoreError;

use crate::parallel::map_indexed;
use crate::specfile::{parse_spec_text, serialize, ParsedGame, SpecFile};
use crate::table::{num, read_csv, Csv};

/// A command that could not run. [`Failure::Usage`] maps to exit 2,
/// [`Failure::Numerical`] to exit 3.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

/// `Ok(true)` = pass (exit 0), `Ok(false)` = check failed (exit 1).
pub type CmdResult = Result<bool, Failure>;

fn core_err(e: CoreError) -> Failure {
    match e {
        CoreError::DecouplingBreakdown { .. } | CoreError::RiccatiBlowup { .. } => {
            Failure::Numerical(format!("{e}"))
        }
        other => Failure::Usage(format!("{other}")),
    }
}

fn io_err(what: &str, path: &Path, e: io::Error) -> Failure {
    Failure::Usage(format!("{what} {}: {e}", path.display()))
}

/// Flag values as they arrive from the argument parser.
pub struct RawArgs {
    pub spec: Option<PathBuf>,
    pub depth: Vec<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub threads: usize,
    pub policy: Option<PathBuf>,
}

/// Fully resolved run context.
pub struct Ctx {
    pub command: &'static str,
    pub spec_path: Option<PathBuf>,
    pub file: Option<SpecFile>,
    pub out: PathBuf,
    pub depths: Vec<usize>,
    pub paths: usize,
    pub seed: u64,
    /// Tolerance only when explicitly set (flag or spec file); commands
    /// apply their own documented default otherwise.
    pub tol: Option<f64>,
    pub threads: usize,
    pub policy_path: Option<PathBuf>,
    start: Instant,
}

const POLICY_COMMANDS: [&str; 4] = ["oracle", "verify-nash", "verify-saddle", "gateaux"];

impl Ctx {
    /// Loads the spec file and resolves every setting. `default_depths` is
    /// the command's fallback when neither flags nor the file give one.
    pub fn resolve(
        command: &'static str,
        args: RawArgs,
        default_depths: &[usize],
        spec_required: bool,
    ) -> Result<Ctx, Failure> {
        let file = match &args.spec {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| io_err("cannot read spec file", path, e))?;
                let parsed = parse_spec_text(&text)
                    .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                Some(parsed)
            }
            None if spec_required => {
                return Err(Failure::Usage(format!("{command} requires --spec PATH")));
            }
            None => None,
        };
        if args.policy.is_some() && !POLICY_COMMANDS.contains(&command) {
            return Err(Failure::Usage(format!("--policy does not apply to {command}")));
        }
        if args.threads == 0 {
            return Err(Failure::Usage(String::from("--threads must be at least 1")));
        }
        let run = file.as_ref().map(|f| f.run.clone()).unwrap_or_default();
        let depths = if !args.depth.is_empty() {
            args.depth
        } else if let Some(d) = run.depth {
            vec![d]
        } else {
            default_depths.to_vec()
        };
        if depths.is_empty() || depths.contains(&0) {
            return Err(Failure::Usage(String::from(
                "--depth must be given at least once and be positive",
            )));
        }
        if depths.len() > 1 && !depths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Failure::Usage(String::from(
                "--depth values must be strictly increasing",
            )));
        }
        fs::create_dir_all(&args.out)
            .map_err(|e| io_err("cannot create output directory", &args.out, e))?;
        Ok(Ctx {
            command,
            spec_path: args.spec,
            file,
            out: args.out,
            depths,
            paths: args.paths.or(run.paths).unwrap_or(10_000),
            seed: args.seed.or(run.seed).unwrap_or(42),
            tol: args.tol.or(run.tol),
            threads: args.threads,
            policy_path: args.policy,
            start: Instant::now(),
        })
    }

    fn file(&self) -> &SpecFile {
        self.file.as_ref().expect("spec presence enforced at resolve time")
    }

    /// The game in equilibrium-synthesis form, validated. Zero-sum files
    /// convert when all their state weights vanish.
    fn lq_spec(&self) -> Result<LqGameSpec, Failure> {
        let spec = match &self.file().game {
            ParsedGame::NonzeroSum(s) => s.clone(),
            ParsedGame::ZeroSum(z) => {
                let report = validate_zero_sum(z);
                if !report.is_empty() {
                    return Err(Failure::Usage(format!("invalid spec: {report}")));
                }
                z.as_lq_game().map_err(core_err)?
            }
        };
        let report = validate_spec(&spec);
        if !report.is_empty() {
            return Err(Failure::Usage(format!("invalid spec: {report}")));
        }
        Ok(spec)
    }

    fn zs_spec(&self) -> Result<&ZeroSumSpec, Failure> {
        match &self.file().game {
            ParsedGame::ZeroSum(z) => {
                let report = validate_zero_sum(z);
                if !report.is_empty() {
                    return Err(Failure::Usage(format!("invalid spec: {report}")));
                }
                Ok(z)
            }
            ParsedGame::NonzeroSum(_) => Err(Failure::Usage(format!(
                "{} requires a zero-sum spec (game = zero-sum)",
                self.command
            ))),
        }
    }

    fn single_depth(&self) -> Result<usize, Failure> {
        if self.depths.len() != 1 {
            return Err(Failure::Usage(format!(
                "{} takes exactly one --depth",
                self.command
            )));
        }
        Ok(self.depths[0])
    }

    fn tree_depth(&self, n: usize) -> Result<usize, Failure> {
        if n > MAX_TREE_DEPTH {
            return Err(Failure::Usage(format!(
                "--depth {n} exceeds the tree limit {MAX_TREE_DEPTH}"
            )));
        }
        Ok(n)
    }

    fn grid(&self, horizon: f64, n: usize) -> Result<TimeGrid, Failure> {
        TimeGrid::new(horizon, n).map_err(core_err)
    }

    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_csv(&self, name: &str, csv: &Csv) -> Result<(), Failure> {
        let path = self.path(name);
        csv.write(&path).map_err(|e| io_err("cannot write", &path, e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| io_err("cannot write", &path, e))
    }

    /// SHA-256 of everything that determines the results: the canonical
    /// spec serialization, the command, and the resolved settings. The
    /// thread count is deliberately excluded — it must not affect results.
    fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        if let Some(f) = &self.file {
            hasher.update(serialize(f).as_bytes());
        }
        let depths: Vec<String> = self.depths.iter().map(|d| d.to_string()).collect();
        hasher.update(
            format!(
                "command = {}\ndepths = {}\npaths = {}\nseed = {}\ntol = {}\n",
                self.command,
                depths.join(" "),
                self.paths,
                self.seed,
                self.tol.map(num).unwrap_or_else(|| String::from("default")),
            )
            .as_bytes(),
        );
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Records the run: configuration hash, seed, versions, wall time.
    /// Written last so the wall time covers the whole command.
    fn write_manifest(&self) -> Result<(), Failure> {
        let depths: Vec<String> = self.depths.iter().map(|d| d.to_string()).collect();
        let text = format!(
            "command = {}\nspec = {}\nconfig_sha256 = {}\ndepths = {}\npaths = {}\nseed = {}\ntol = {}\nthreads = {}\ncli_version = {}\ncore_version = {}\nwall_ms = {}\n",
            self.command,
            self.spec_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| String::from("-")),
            self.config_hash(),
            depths.join(" "),
            self.paths,
            self.seed,
            self.tol.map(num).unwrap_or_else(|| String::from("default")),
            self.threads,
            env!("CARGO_PKG_VERSION"),
            dsgame_core::VERSION,
            self.start.elapsed().as_millis(),
        );
        self.write_text("manifest.txt", &text)
    }
}

/// The synthesized equilibrium apparatus for one grid.
struct Synth {
    ric: RiccatiSolution,
    stepper: DecoupledStepper,
    policy: NodePolicy,
}

fn synthesize(spec: &LqGameSpec, grid: &TimeGrid) -> Result<Synth, Failure> {
    let limits = DecouplingLimits::default();
    let sys = assemble_filtering_system(spec).map_err(core_err)?;
    let ric = solve_decoupling(&sys, grid, limits).map_err(core_err)?;
    let stepper = DecoupledStepper::new(&sys, &ric, limits).map_err(core_err)?;
    let policy = NodePolicy::tabulate(&EquilibriumPolicy::from_spec(spec), grid);
    Ok(Synth { ric, stepper, policy })
}

const POLICY_HEADER: [&str; 6] = ["k", "t", "gain1", "offset1", "gain2", "offset2"];

fn policy_csv(policy: &NodePolicy) -> Csv {
    let grid = policy.grid();
    let mut csv = Csv::new(&POLICY_HEADER);
    for k in 0..=grid.steps() {
        csv.row(&[
            k.to_string(),
            num(grid.node(k)),
            num(policy.gain1[k]),
            num(policy.offset1[k]),
            num(policy.gain2[k]),
            num(policy.offset2[k]),
        ]);
    }
    csv
}

fn read_policy_csv(
    path: &Path,
    horizon: f64,
    expected_depth: usize,
) -> Result<NodePolicy, Failure> {
    let (header, rows) = read_csv(path).map_err(|e| io_err("cannot read policy file", path, e))?;
    if header != POLICY_HEADER {
        return Err(Failure::Usage(format!(
            "{}: expected header `{}`",
            path.display(),
            POLICY_HEADER.join(",")
        )));
    }
    if rows.len() != expected_depth + 1 {
        return Err(Failure::Usage(format!(
            "{}: {} rows, but depth {} needs {}",
            path.display(),
            rows.len(),
            expected_depth,
            expected_depth + 1
        )));
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != POLICY_HEADER.len() {
            return Err(Failure::Usage(format!(
                "{}: data row {} has {} cells",
                path.display(),
                i + 1,
                row.len()
            )));
        }
        let k: usize = row[0].parse().map_err(|_| {
            Failure::Usage(format!("{}: bad step index `{}`", path.display(), row[0]))
        })?;
        if k != i {
            return Err(Failure::Usage(format!(
                "{}: steps must ascend from 0; row {} has k = {k}",
                path.display(),
                i + 1
            )));
        }
        for (c, col) in cols.iter_mut().enumerate() {
            let v: f64 = row[c + 2].parse().map_err(|_| {
                Failure::Usage(format!(
                    "{}: bad {} value `{}`",
                    path.display(),
                    POLICY_HEADER[c + 2],
                    row[c + 2]
                ))
            })?;
            col.push(v);
        }
    }
    let grid = TimeGrid::new(horizon, expected_depth).map_err(core_err)?;
    let [gain1, offset1, gain2, offset2] = cols;
    NodePolicy::from_parts(grid, gain1, offset1, gain2, offset2).map_err(core_err)
}

/// The candidate policy: the synthesized equilibrium unless `--policy`
/// supplies a table.
fn candidate_policy(
    ctx: &Ctx,
    synth: &Synth,
    horizon: f64,
    depth: usize,
) -> Result<NodePolicy, Failure> {
    match &ctx.policy_path {
        Some(path) => read_policy_csv(path, horizon, depth),
        None => Ok(synth.policy.clone()),
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

pub fn cmd_validate(ctx: &Ctx) -> CmdResult {
    let ok = match &ctx.file().game {
        ParsedGame::NonzeroSum(spec) => {
            let report = validate_spec(spec);
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            let arrow = arrow_condition_check(spec);
            if let Some(v) = &arrow.first_violation {
                eprintln!(
                    "violation: state weight e{}{} is negative ({}) at t = {}",
                    v.player.index(),
                    v.weight_index,
                    v.value,
                    v.t
                );
            }
            report.is_empty() && arrow.pass
        }
        ParsedGame::ZeroSum(zs) => {
            let report = validate_zero_sum(zs);
            for v in &report.violations {
                eprintln!("violation: {v}");
            }
            report.is_empty()
        }
    };
    ctx.write_manifest()?;
    eprintln!("validate: {}", if ok { "valid" } else { "invalid" });
    Ok(ok)
}

pub fn cmd_solve(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    let n = ctx.single_depth()?;
    let grid = ctx.grid(spec.horizon, n)?;
    let synth = synthesize(&spec, &grid)?;

    let dim = synth.stepper.dim();
    let mut header: Vec<String> = vec!["k".into(), "t".into()];
    for i in 0..dim {
        for j in 0..dim {
            header.push(format!("p{}{}", i + 1, j + 1));
        }
    }
    for i in 0..dim {
        header.push(format!("h0_{}", i + 1));
    }
    for i in 0..dim {
        header.push(format!("h1_{}", i + 1));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut ric_csv = Csv::new(&header_refs);
    for k in 0..=grid.steps() {
        let mut row = vec![k.to_string(), num(grid.node(k))];
        let p = synth.ric.p_at(k);
        for i in 0..dim {
            for j in 0..dim {
                row.push(num(p.get(i, j)));
            }
        }
        for &v in synth.ric.h0_at(k).iter() {
            row.push(num(v));
        }
        for &v in synth.ric.h1_at(k).iter() {
            row.push(num(v));
        }
        ric_csv.row(&row);
    }
    ctx.write_csv("riccati.csv", &ric_csv)?;
    ctx.write_csv("policy.csv", &policy_csv(&synth.policy))?;

    let x0 = synth.ric.x0();
    let cap_y0 = vadd(&synth.ric.p_at(0).mul_vec(x0), synth.ric.h0_at(0));
    let mut sol_csv = Csv::new(&["quantity", "value"]);
    for (i, v) in x0.iter().enumerate() {
        sol_csv.row(&[format!("x0_{}", i + 1), num(*v)]);
    }
    for (i, v) in cap_y0.iter().enumerate() {
        sol_csv.row(&[format!("cap_y0_{}", i + 1), num(*v)]);
    }
    sol_csv.row(&["max_lambda_cond".into(), num(synth.ric.max_lambda_cond)]);
    sol_csv.row(&["coupling_cond".into(), num(synth.ric.coupling_cond)]);
    ctx.write_csv("solution.csv", &sol_csv)?;

    ctx.write_manifest()?;
    eprintln!(
        "solve: depth {n}, filtered backward state at 0 = {}, forward start = {}",
        cap_y0[0], x0[0]
    );
    Ok(true)
}

pub fn cmd_simulate(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    let n = ctx.single_depth()?;
    let grid = ctx.grid(spec.horizon, n)?;
    let synth = synthesize(&spec, &grid)?;
    let ensemble = sample_paths(&grid, ctx.paths, ctx.seed).map_err(core_err)?;

    let stepper = &synth.stepper;
    let trajectories =
        map_indexed(ctx.paths, ctx.threads, |j| simulate_one(stepper, ensemble.dw(j)));

    // Forward stack (y~, p1~, p2~); backward stack (Y~, q1~, q2~).
    let mut csv = Csv::new(&[
        "path", "k", "t", "w", "y_filt", "p1_filt", "p2_filt", "capy_filt", "q1_filt", "q2_filt",
    ]);
    for (j, tr) in trajectories.iter().enumerate() {
        for k in 0..=grid.steps() {
            let x = tr.x_at(k);
            let cy = tr.cap_y_at(k);
            csv.row(&[
                j.to_string(),
                k.to_string(),
                num(grid.node(k)),
                num(tr.w[k]),
                num(x[0]),
                num(x[1]),
                num(x[2]),
                num(cy[0]),
                num(cy[1]),
                num(cy[2]),
            ]);
        }
    }
    ctx.write_csv("trajectories.csv", &csv)?;

    let mut means = Csv::new(&[
        "k", "t", "mean_y_filt", "mean_p1_filt", "mean_p2_filt", "mean_capy_filt",
        "mean_q1_filt", "mean_q2_filt",
    ]);
    let count = trajectories.len() as f64;
    for k in 0..=grid.steps() {
        let mut acc = [0.0f64; 6];
        for tr in &trajectories {
            let x = tr.x_at(k);
            let cy = tr.cap_y_at(k);
            for i in 0..3 {
                acc[i] += x[i];
                acc[3 + i] += cy[i];
            }
        }
        let mut row = vec![k.to_string(), num(grid.node(k))];
        for a in acc {
            row.push(num(a / count));
        }
        means.row(&row);
    }
    ctx.write_csv("means.csv", &means)?;

    ctx.write_manifest()?;
    let mean_cap_y0: f64 = trajectories.iter().map(|t| t.cap_y_at(0)[0]).sum::<f64>() / count;
    eprintln!(
        "simulate: {} paths on {} steps; mean filtered backward state at 0 = {mean_cap_y0}",
        ctx.paths,
        grid.steps(),
    );
    Ok(true)
}

pub fn cmd_oracle(ctx: &Ctx) -> CmdResult {
    let n = ctx.tree_depth(ctx.single_depth()?)?;
    // Cost views: each player's own criterion for a nonzero-sum instance,
    // the paired signed views for a zero-sum one.
    let (weights1, weights2) = match &ctx.file().game {
        ParsedGame::NonzeroSum(s) => (s.weights(Player::One), s.weights(Player::Two)),
        ParsedGame::ZeroSum(zs) => {
            let views = zs.to_views();
            (views.player1, views.player2)
        }
    };
    let game = ctx.lq_spec()?;
    let grid = ctx.grid(game.horizon, n)?;
    let noise = TreeNoise::new(&grid).map_err(core_err)?;
    let synth = synthesize(&game, &grid)?;
    let policy = candidate_policy(ctx, &synth, game.horizon, n)?;
    let on_tree = compose_on_tree(&policy, &synth.stepper, &noise).map_err(core_err)?;
    let sol = solve_on_tree(&game, &noise, &on_tree).map_err(core_err)?;
    let j1 = eval_cost_on_tree(&weights1, &sol, &noise, &on_tree).map_err(core_err)?;
    let j2 = eval_cost_on_tree(&weights2, &sol, &noise, &on_tree).map_err(core_err)?;

    let mut csv = Csv::new(&["quantity", "value"]);
    csv.row(&["depth".into(), n.to_string()]);
    csv.row(&["j1".into(), num(j1)]);
    csv.row(&["j2".into(), num(j2)]);
    csv.row(&["capy0_mean".into(), num(sol.cap_y.mean(0))]);
    csv.row(&["y0_mean".into(), num(sol.y.mean(0))]);
    csv.row(&[
        "y_terminal_mean_square".into(),
        num(sol.y.mean_square(grid.steps())),
    ]);
    ctx.write_csv("oracle.csv", &csv)?;

    ctx.write_manifest()?;
    eprintln!("oracle: depth {n}, J1 = {j1}, J2 = {j2}");
    Ok(true)
}

fn merge_nash_reports(parts: Vec<NashReport>, tol: f64) -> NashReport {
    let mut outcomes = Vec::new();
    let j_candidate = parts[0].j_candidate;
    for part in parts {
        outcomes.extend(part.outcomes);
    }
    let worst_margin = outcomes
        .iter()
        .map(|o| o.worst_margin)
        .fold(f64::INFINITY, f64::min);
    NashReport { j_candidate, tol, outcomes, worst_margin, pass: worst_margin >= -tol }
}

fn nash_csv(report: &NashReport) -> Csv {
    let mut csv = Csv::new(&["label", "player", "eps", "j", "margin"]);
    for o in &report.outcomes {
        for (eps, j, margin) in &o.values {
            csv.row(&[
                o.label.clone(),
                o.player.index().to_string(),
                num(*eps),
                num(*j),
                num(*margin),
            ]);
        }
    }
    csv
}

pub fn cmd_verify_nash(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    let n = ctx.tree_depth(ctx.single_depth()?)?;
    let grid = ctx.grid(spec.horizon, n)?;
    let noise = TreeNoise::new(&grid).map_err(core_err)?;
    let synth = synthesize(&spec, &grid)?;
    let policy = candidate_policy(ctx, &synth, spec.horizon, n)?;
    let on_tree = compose_on_tree(&policy, &synth.stepper, &noise).map_err(core_err)?;

    let devs = standard_deviation_set();
    let tol = ctx.tol_or(5e-3);
    // One independent oracle sweep per deviation; deterministic regardless
    // of the thread count, merged in deviation order.
    let parts = map_indexed(devs.len(), ctx.threads, |i| {
        nash_check(&spec, &on_tree, &devs[i..i + 1], &noise, tol)
    });
    let mut reports = Vec::with_capacity(parts.len());
    for part in parts {
        reports.push(part.map_err(core_err)?);
    }
    let report = merge_nash_reports(reports, tol);

    ctx.write_csv("nash_report.csv", &nash_csv(&report))?;
    let worst = report
        .outcomes
        .iter()
        .min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin))
        .expect("nonempty deviation family");
    let summary = format!(
        "check = unilateral deviation sweep\ndepth = {}\ntolerance = {}\ndeviations = {}\nepsilons = {}\nj1_candidate = {}\nj2_candidate = {}\nworst_margin = {}\nworst_deviation = {} (player {}, eps = {})\nstatus = {}\n",
        n,
        num(tol),
        report.outcomes.len(),
        EPSILON_GRID.len(),
        num(report.j_candidate[0]),
        num(report.j_candidate[1]),
        num(report.worst_margin),
        worst.label,
        worst.player.index(),
        num(worst.worst_eps),
        if report.pass { "PASS" } else { "FAIL" },
    );
    ctx.write_text("nash_summary.txt", &summary)?;
    ctx.write_manifest()?;
    eprintln!(
        "verify-nash: {} deviations x {} eps, worst margin {} vs -tol {} -> {}",
        report.outcomes.len(),
        EPSILON_GRID.len(),
        report.worst_margin,
        -tol,
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(report.pass)
}

pub fn cmd_verify_saddle(ctx: &Ctx) -> CmdResult {
    let zs = ctx.zs_spec()?.clone();
    let n = ctx.tree_depth(ctx.single_depth()?)?;
    let grid = ctx.grid(zs.horizon, n)?;
    let noise = TreeNoise::new(&grid).map_err(core_err)?;

    let game = ctx.lq_spec()?;
    let synth = synthesize(&game, &grid)?;
    let policy = candidate_policy(ctx, &synth, zs.horizon, n)?;
    let on_tree = compose_on_tree(&policy, &synth.stepper, &noise).map_err(core_err)?;

    let devs = standard_deviation_set();
    let tol = ctx.tol_or(5e-3);
    let saddle = saddle_check(&zs, &on_tree, &devs, &noise, tol).map_err(core_err)?;

    // Family-restricted min-max comparison on a small grid: the first two
    // deviation directions per player at eps = +/-0.5, plus the candidate —
    // a 5 x 5 control family.
    let mut mm_devs: Vec<Deviation> = Vec::new();
    for player in Player::BOTH {
        mm_devs.extend(devs.iter().filter(|d| d.player == player).take(2).cloned());
    }
    let minimax = minimax_gap_check(&zs, &on_tree, &mm_devs, &[-0.5, 0.5], &noise, true, tol)
        .map_err(core_err)?;

    let mut csv = Csv::new(&["label", "player", "eps", "j", "violation"]);
    for o in &saddle.outcomes {
        for (eps, j, violation) in &o.values {
            csv.row(&[
                o.label.clone(),
                o.player.index().to_string(),
                num(*eps),
                num(*j),
                num(*violation),
            ]);
        }
    }
    ctx.write_csv("saddle_report.csv", &csv)?;

    let pass = saddle.pass && minimax.pass;
    let summary = format!(
        "check = saddle inequalities + family-restricted min-max\ndepth = {}\ntolerance = {}\nj_saddle = {}\nzero_sum_identity = {}\nworst_violation = {}\nsaddle_status = {}\nsup_inf = {}\ninf_sup = {}\ngap = {}\ncandidate_in_family = {}\nfamily_sizes = {} {}\nminimax_status = {}\nstatus = {}\n",
        n,
        num(tol),
        num(saddle.j_saddle),
        num(saddle.zero_sum_identity),
        num(saddle.worst_violation),
        if saddle.pass { "PASS" } else { "FAIL" },
        num(minimax.sup_inf),
        num(minimax.inf_sup),
        num(minimax.gap),
        minimax.candidate_in_family,
        minimax.family_sizes[0],
        minimax.family_sizes[1],
        if minimax.pass { "PASS" } else { "FAIL" },
        if pass { "PASS" } else { "FAIL" },
    );
    ctx.write_text("saddle_summary.txt", &summary)?;
    ctx.write_manifest()?;
    eprintln!(
        "verify-saddle: worst violation {}, |J1+J2| = {}, minimax gap {} -> {}",
        saddle.worst_violation,
        saddle.zero_sum_identity,
        minimax.gap,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn cmd_gateaux(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    let n = ctx.tree_depth(ctx.single_depth()?)?;
    let grid = ctx.grid(spec.horizon, n)?;
    let noise = TreeNoise::new(&grid).map_err(core_err)?;
    let synth = synthesize(&spec, &grid)?;
    let policy = candidate_policy(ctx, &synth, spec.horizon, n)?;
    let on_tree = compose_on_tree(&policy, &synth.stepper, &noise).map_err(core_err)?;

    let devs = standard_deviation_set();
    // For a quadratic cost the central difference is exact at any step, so
    // the probe size is immaterial; 0.5 keeps the evaluations well scaled.
    let eps = 0.5;
    let bound = ctx.tol_or(10.0 * grid.delta());
    let parts = map_indexed(devs.len(), ctx.threads, |i| {
        gateaux_check(&spec, &on_tree, &devs[i], &noise, eps)
    });

    let mut csv = Csv::new(&[
        "label", "player", "eps", "derivative", "curvature", "vertex", "j_candidate", "bound",
        "pass",
    ]);
    let mut directions_pass = true;
    let mut worst = 0.0f64;
    for (dev, part) in devs.iter().zip(parts) {
        let est = part.map_err(core_err)?;
        let ok = est.derivative.abs() <= bound;
        directions_pass &= ok;
        worst = worst.max(est.derivative.abs());
        csv.row(&[
            dev.label(),
            dev.player.index().to_string(),
            num(eps),
            num(est.derivative),
            num(est.curvature),
            est.vertex.map(num).unwrap_or_default(),
            num(est.j_zero),
            num(bound),
            ok.to_string(),
        ]);
    }
    ctx.write_csv("gateaux.csv", &csv)?;

    // The pointwise first-order condition is an algebraic identity for the
    // synthesized feedback, so it is held to rounding accuracy rather than
    // to the discretization bound.
    let residual_bound = 1e-12;
    let stat = stationarity_sweep(&spec, &synth.stepper, &policy, &noise).map_err(core_err)?;
    let stat_pass = stat.max_abs_residual <= residual_bound;
    let mut stat_csv = Csv::new(&["max_abs_residual", "bound", "pass"]);
    stat_csv.row(&[num(stat.max_abs_residual), num(residual_bound), stat_pass.to_string()]);
    ctx.write_csv("stationarity.csv", &stat_csv)?;

    ctx.write_manifest()?;
    let all_pass = directions_pass && stat_pass;
    eprintln!(
        "gateaux: {} directions, max |derivative| = {worst} vs bound {bound}; stationarity residual {} vs {residual_bound} -> {}",
        devs.len(),
        stat.max_abs_residual,
        if all_pass { "PASS" } else { "FAIL" }
    );
    Ok(all_pass)
}

pub fn cmd_consistency(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    let mut csv = Csv::new(&[
        "depth", "max_error", "max_error_backward", "max_error_forward", "bound", "pass",
    ]);
    let mut errors = Vec::new();
    let mut all_pass = true;
    for &n in &ctx.depths {
        ctx.tree_depth(n)?;
        let grid = ctx.grid(spec.horizon, n)?;
        let noise = TreeNoise::new(&grid).map_err(core_err)?;
        let synth = synthesize(&spec, &grid)?;
        let on_tree =
            compose_on_tree(&synth.policy, &synth.stepper, &noise).map_err(core_err)?;
        let report = filter_consistency_check(&spec, &synth.stepper, &on_tree, &noise)
            .map_err(core_err)?;
        let bound = ctx.tol_or(10.0 * grid.delta());
        let ok = report.max_error <= bound;
        all_pass &= ok;
        errors.push(report.max_error);
        csv.row(&[
            n.to_string(),
            num(report.max_error),
            num(report.max_error_backward),
            num(report.max_error_forward),
            num(bound),
            ok.to_string(),
        ]);
        eprintln!(
            "consistency: depth {n}, max filter gap {} (backward {}, forward {})",
            report.max_error, report.max_error_backward, report.max_error_forward
        );
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    if !monotone {
        eprintln!("consistency: filter gap did not shrink when the grid was refined");
    }
    ctx.write_csv("consistency.csv", &csv)?;
    ctx.write_manifest()?;
    Ok(all_pass && monotone)
}

pub fn cmd_converge(ctx: &Ctx) -> CmdResult {
    let spec = ctx.lq_spec()?;
    for &n in &ctx.depths {
        ctx.tree_depth(n)?;
    }
    let report = convergence_study(&spec, &ctx.depths, None, DecouplingLimits::default())
        .map_err(core_err)?;

    let mut csv =
        Csv::new(&["steps", "tree_y0", "filtered_y0", "j1", "j2", "y0_error", "order"]);
    for (i, row) in report.rows.iter().enumerate() {
        let error = report.y0_errors.get(i).map(|e| num(*e)).unwrap_or_default();
        let order = if i >= 1 && i - 1 < report.y0_orders.len() {
            num(report.y0_orders[i - 1])
        } else {
            String::new()
        };
        csv.row(&[
            row.steps.to_string(),
            num(row.tree_y0),
            num(row.filtered_y0),
            num(row.j1),
            num(row.j2),
            error,
            order,
        ]);
    }
    ctx.write_csv("converge.csv", &csv)?;
    ctx.write_manifest()?;
    eprintln!(
        "converge: reference Y(0) = {} ({}), observed orders: {:?}",
        report.reference_y0,
        if report.reference_is_closed_form { "closed form" } else { "finest grid" },
        report.y0_orders
    );
    Ok(true)
}

pub fn cmd_report(ctx: &Ctx) -> CmdResult {
    let mut text = String::from("run summary\n===========\n");
    let mut any_fail = false;
    let mut found = 0;

    for name in ["manifest.txt", "nash_summary.txt", "saddle_summary.txt"] {
        let path = ctx.path(name);
        if let Ok(body) = fs::read_to_string(&path) {
            found += 1;
            text.push_str(&format!("\n[{name}]\n{body}"));
            if body.lines().any(|l| l.trim() == "status = FAIL") {
                any_fail = true;
            }
        }
    }
    for name in [
        "oracle.csv", "solution.csv", "riccati.csv", "policy.csv", "nash_report.csv",
        "saddle_report.csv", "gateaux.csv", "stationarity.csv", "consistency.csv",
        "converge.csv", "trajectories.csv", "means.csv",
    ] {
        let path = ctx.path(name);
        if let Ok((header, rows)) = read_csv(&path) {
            found += 1;
            text.push_str(&format!(
                "\n[{name}]\ncolumns = {}\nrows = {}\n",
                header.join(","),
                rows.len()
            ));
            if let Some(pass_col) = header.iter().position(|h| h == "pass") {
                let failures = rows
                    .iter()
                    .filter(|r| r.get(pass_col).map(String::as_str) == Some("false"))
                    .count();
                text.push_str(&format!("failing_rows = {failures}\n"));
                if failures > 0 {
                    any_fail = true;
                }
            }
        }
    }
    if found == 0 {
        text.push_str("\nno artifacts found in the output directory\n");
    }
    text.push_str(&format!("\noverall = {}\n", if any_fail { "FAIL" } else { "PASS" }));
    ctx.write_text("report.txt", &text)?;
    ctx.write_manifest()?;
    eprintln!(
        "report: {found} artifacts summarized -> {}",
        if any_fail { "FAIL" } else { "PASS" }
    );
    Ok(!any_fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_breakdowns_map_to_their_own_exit_class() {
        let breakdown = CoreError::DecouplingBreakdown { t: 0.5, cond: 1e14, limit: 1e12 };
        assert!(matches!(core_err(breakdown), Failure::Numerical(_)));
        let blowup = CoreError::RiccatiBlowup { t: 0.1, max_abs: 1e9, limit: 1e8 };
        assert!(matches!(core_err(blowup), Failure::Numerical(_)));
        let arg = CoreError::InvalidArgument { arg: "depth", reason: String::from("zero") };
        assert!(matches!(core_err(arg), Failure::Usage(_)));
    }
}
