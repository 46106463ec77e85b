mod inputs;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use nnsym::complexan::{
    alignment_partition, cluster_depth_eps, default_schedule, density_along, empirical_cluster_vs_depth,
    poles_in_window, DensityTarget, LineSpec, PointCloud, ScanConfig,
};
use nnsym::json::{network_hash, to_json_string};
use nnsym::rewrite::{
    anchor_input, anchor_samples, anchor_search, apply_modification, invert_modification, reduce_to_regular,
    regularity_report, rho_isomorphic_bounded, sign_isomorphic, zero_map_probe, AnchorSearch, IsoOutcome,
    ModificationPlan,
};
use nnsym::sampling::random_points;
use nnsym::symmetry::{construct_exotic, discover_symmetry, verify_symmetry};
use nnsym::{Network, NodeId, Nonlinearity};

use inputs::*;

#[derive(Parser)]
#[command(name = "nnsym", version, about = "Network symmetries, rewrites and pole statistics")]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct RunConfig {
    /// Seed for every sampled point and anchor value.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Tolerance on map agreement and symmetry residuals.
    #[arg(long, global = true, default_value_t = 1e-9, value_parser = positive)]
    tol: f64,
    /// Number of sample points for map checks.
    #[arg(long, global = true, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    grid: u32,
    /// Radius of the complex window.
    #[arg(long, global = true, default_value_t = 20.0, value_parser = positive)]
    window: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Same as `--format json`.
    #[arg(long, global = true)]
    json: bool,
    /// Append one JSON line per rewrite: `{op, inputs, result_hash}`.
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    /// Nonlinearity, overriding the one stored in the input file.
    #[arg(long, global = true, value_parser = parse_rho)]
    rho: Option<Nonlinearity>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural invariants of a network file.
    Validate { file: PathBuf },
    /// Evaluate the output map at one or more points.
    Eval {
        file: PathBuf,
        /// Comma-separated input values, in input-id order. Repeatable.
        #[arg(long, required = true, allow_hyphen_values = true, value_parser = parse_reals)]
        at: Vec<Reals>,
    },
    /// Reduce until no sibling group satisfies a symmetry.
    Reduce {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a modification plan.
    Modify {
        file: PathBuf,
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the plan that undoes a modification.
    Invert {
        file: PathBuf,
        plan: PathBuf,
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide isomorphism up to renaming and sign flips of hidden nodes.
    IsoSign { first: PathBuf, second: PathBuf },
    /// Search for a short chain of regular modifications between two networks.
    IsoRho {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, default_value_t = 2)]
        budget: usize,
    },
    /// Fix one input to a constant.
    Anchor {
        file: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long, allow_hyphen_values = true)]
        value: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Try seeded anchor values until the anchored network is regular.
    AnchorSearch {
        file: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 32)]
        samples: usize,
        /// Sampling interval `lo,hi`.
        #[arg(long, default_value = "-3,3", allow_hyphen_values = true, value_parser = parse_reals)]
        range: Reals,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sup-norm of the output map on seeded points of [-10, 10]^d.
    ZeroProbe { file: PathBuf },
    /// Poles of a term combination inside the window.
    Poles { combination: PathBuf },
    /// Iterated cluster depth of a point cloud.
    Cluster {
        points: PathBuf,
        /// Occupancy threshold.
        #[arg(long, default_value_t = 3)]
        min_points: usize,
        /// Decreasing scales; defaults to 0.5 * 2^-j for j = 0..=6.
        #[arg(long, value_parser = parse_reals)]
        eps: Option<Reals>,
    },
    /// Fraction of cloud points near a line or another cloud.
    Density {
        points: PathBuf,
        /// Line `base_re,base_im,dir_re,dir_im`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_reals, conflicts_with = "target")]
        line: Option<Reals>,
        /// Second cloud.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        eps: f64,
    },
    /// Alignment partition of a term combination.
    Partition { combination: PathBuf },
    /// Check a symmetry identity and its minimality.
    SymVerify { file: PathBuf },
    /// Find a minimal symmetry among candidate terms.
    SymDiscover { file: PathBuf },
    /// Construct a tanh-type function with the symmetry Σ α_l σ(t − l) = ζ.
    SymExotic {
        #[arg(long, allow_hyphen_values = true, value_parser = parse_reals)]
        alphas: Reals,
    },
    /// Compare the clustering depth of sampled singularities with the network depth.
    DepthScan {
        file: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_depth: usize,
    },
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

/// A finished command: the report was printed, `ok` selects the exit code.
struct Done {
    ok: bool,
}

struct Ctx<'a> {
    run: &'a RunConfig,
    format: Format,
    out: String,
    log: Vec<serde_json::Value>,
}

impl Ctx<'_> {
    /// Renders `value` as JSON, or `text` / `csv` in the other modes.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String, csv: Option<String>) -> Result<()> {
        match self.format {
            Format::Json => {
                self.out.push_str(&serde_json::to_string_pretty(value)?);
                self.out.push('\n');
            }
            Format::Text => self.out.push_str(&text()),
            Format::Csv => match csv {
                Some(c) => self.out.push_str(&c),
                None => bail!("csv output is not available for this subcommand"),
            },
        }
        Ok(())
    }

    fn record(&mut self, op: &str, inputs: &[(&Path, &Network)], result: &Network) {
        let inputs: Vec<_> =
            inputs.iter().map(|(p, n)| json!({ "path": p.display().to_string(), "hash": network_hash(n) })).collect();
        self.log.push(json!({ "op": op, "inputs": inputs, "result_hash": network_hash(result) }));
    }

    fn rho_for(&self, net: &Network) -> Result<Nonlinearity> {
        pick_rho(&self.run.rho, net.nonlinearity())
    }
}

fn write_network(path: &Path, net: &Network) -> Result<()> {
    std::fs::write(path, to_json_string(net) + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))
}

fn fmt_point(p: &[f64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_c(z: Complex64) -> String {
    format!("{}{:+}i", z.re, z.im)
}

/// Largest coordinate gap between two maps on seeded points of [-10, 10]^d.
fn map_gap(a: &Network, b: &Network, rho: &Nonlinearity, run: &RunConfig) -> Result<f64> {
    let ea = a.evaluator()?;
    let eb = b.evaluator()?;
    let mut worst: f64 = 0.0;
    for t in random_points(run.seed, run.grid as usize, a.inputs().len(), -10.0, 10.0) {
        for (x, y) in ea.eval(rho, &t)?.iter().zip(eb.eval(rho, &t)?) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

fn run(cmd: &Command, c: &mut Ctx) -> Result<Done> {
    match cmd {
        Command::Validate { file } => {
            let net = read_network(file)?;
            let violations = net.validate();
            let ok = violations.is_empty();
            let report = json!({
                "valid": ok,
                "violations": violations,
                "nodes": net.nodes().len(),
                "edges": net.edge_count(),
                "hash": network_hash(&net),
            });
            c.emit(&report, || {
                let mut s = if ok { "valid\n".to_string() } else { "invalid\n".to_string() };
                for v in &violations {
                    let _ = writeln!(s, "  {v}");
                }
                s
            }, None)?;
            Ok(Done { ok })
        }
        Command::Eval { file, at } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let ev = net.evaluator()?;
            let mut rows = Vec::new();
            for Reals(t) in at {
                rows.push((t.clone(), ev.eval(&rho, t)?));
            }
            let report: Vec<_> = rows.iter().map(|(t, y)| json!({ "at": t, "value": y })).collect();
            let text = || rows.iter().map(|(_, y)| fmt_point(y).replace(',', " ") + "\n").collect();
            let mut csv = String::new();
            let d_in = net.inputs().len();
            let header: Vec<String> =
                (1..=d_in).map(|i| format!("t{i}")).chain((1..=net.dim_out()).map(|i| format!("y{i}"))).collect();
            let _ = writeln!(csv, "{}", header.join(","));
            for (t, y) in &rows {
                let _ = writeln!(csv, "{},{}", fmt_point(t), fmt_point(y));
            }
            c.emit(&report, text, Some(csv))?;
            Ok(Done { ok: true })
        }
        Command::Reduce { file, out } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let (m, trail) = reduce_to_regular(&net, &rho)?;
            c.record("reduce", &[(file, &net)], &m);
            let gap = map_gap(&net, &m, &rho, c.run)?;
            let regular = regularity_report(&m, &rho)?;
            if let Some(p) = out {
                write_network(p, &m)?;
            }
            let report = json!({ "steps": trail, "map_gap": gap, "regularity": regular, "network": m });
            c.emit(&report, || {
                format!(
                    "removed {} node(s), {} hidden left, map gap {gap:e}, regular {}\n",
                    trail.len(),
                    m.hidden().count(),
                    regular.regular
                )
            }, None)?;
            Ok(Done { ok: gap <= c.run.tol })
        }
        Command::Modify { file, plan, out } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let plan: ModificationPlan = read_json(plan)?;
            let m = apply_modification(&net, &rho, &plan)?;
            c.record("modify", &[(file, &net)], &m);
            let gap = map_gap(&net, &m, &rho, c.run)?;
            if let Some(p) = out {
                write_network(p, &m)?;
            }
            let report = json!({ "map_gap": gap, "network": m });
            c.emit(&report, || format!("{} hidden node(s), map gap {gap:e}\n", m.hidden().count()), None)?;
            Ok(Done { ok: gap <= c.run.tol })
        }
        Command::Invert { file, plan, result, out } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let plan: ModificationPlan = read_json(plan)?;
            let res = read_network(result)?;
            let inv = invert_modification(&net, &rho, &plan, &res)?;
            if let Some(p) = out {
                write_json(p, &inv)?;
            }
            c.emit(&inv, || serde_json::to_string_pretty(&inv).unwrap_or_default() + "\n", None)?;
            Ok(Done { ok: true })
        }
        Command::IsoSign { first, second } => {
            let a = read_network(first)?;
            let b = read_network(second)?;
            let found = sign_isomorphic(&a, &b)?;
            let report = json!({ "isomorphic": found.is_some(), "witness": found });
            c.emit(&report, || match &found {
                Some(w) => {
                    let mut s = "sign-isomorphic\n".to_string();
                    for (u, v) in &w.mapping {
                        let sign = w.signs.get(u).copied().unwrap_or(1);
                        let _ = writeln!(s, "  {u} -> {v} ({})", if sign < 0 { "-" } else { "+" });
                    }
                    s
                }
                None => "not sign-isomorphic\n".to_string(),
            }, None)?;
            Ok(Done { ok: found.is_some() })
        }
        Command::IsoRho { first, second, budget } => {
            let a = read_network(first)?;
            let b = read_network(second)?;
            let rho = c.rho_for(&a)?;
            let outcome = rho_isomorphic_bounded(&a, &b, &rho, *budget)?;
            let ok = matches!(outcome, IsoOutcome::SignIsomorphic { .. } | IsoOutcome::Chain { .. });
            c.emit(&outcome, || match &outcome {
                IsoOutcome::SignIsomorphic { .. } => "sign-isomorphic\n".into(),
                IsoOutcome::Chain { steps } => format!("chain of {} step(s)\n", steps.len()),
                IsoOutcome::NoneWithinBudget => format!("no chain within budget {budget}\n"),
                IsoOutcome::Unknown => "search cap reached, undecided\n".into(),
            }, None)?;
            Ok(Done { ok })
        }
        Command::Anchor { file, input, value, out } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let res = anchor_input(&net, &rho, &NodeId::new(input.as_str()), *value)?;
            c.record("anchor", &[(file, &net)], &res.network);
            if let Some(p) = out {
                write_network(p, &res.network)?;
            }
            c.emit(&res, || {
                let mut s = format!("{} node(s) remain\n", res.network.nodes().len());
                for w in &res.warnings {
                    let _ = writeln!(s, "warning: {w}");
                }
                s
            }, None)?;
            Ok(Done { ok: true })
        }
        Command::AnchorSearch { file, input, samples, range, out } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let [lo, hi] = range.0.as_slice() else { bail!("--range takes two values") };
            if !(lo < hi) {
                bail!("--range must satisfy lo < hi");
            }
            let values = anchor_samples(c.run.seed, *samples, *lo, *hi);
            let res = anchor_search(&net, &rho, &NodeId::new(input.as_str()), &values)?;
            if let AnchorSearch::Found { network, .. } = &res {
                c.record("anchor-search", &[(file, &net)], network);
                if let Some(p) = out {
                    write_network(p, network)?;
                }
            }
            let ok = matches!(res, AnchorSearch::Found { .. });
            c.emit(&res, || match &res {
                AnchorSearch::Found { value, tried, .. } => format!("found {value} after {tried} sample(s)\n"),
                AnchorSearch::Exhausted { tried } => format!("exhausted after {tried} sample(s)\n"),
            }, None)?;
            Ok(Done { ok })
        }
        Command::ZeroProbe { file } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            let p = zero_map_probe(&net, &rho, c.run.grid as usize, c.run.seed)?;
            c.emit(&p, || format!("{:?} (max {:e} over {} points)\n", p.verdict, p.max_abs, p.points), None)?;
            Ok(Done { ok: true })
        }
        Command::Poles { combination } => {
            let comb: Combination = read_json(combination)?;
            let rho = pick_rho(&c.run.rho, comb.nonlinearity.as_ref())?;
            let cloud = poles_in_window(&zab_of(&rho)?, &comb.terms, c.run.window)?;
            let csv = cloud.to_csv();
            c.emit(&cloud, || cloud.points.iter().map(|p| fmt_c(*p) + "\n").collect(), Some(csv))?;
            Ok(Done { ok: true })
        }
        Command::Cluster { points, min_points, eps } => {
            let pts = read_points(points)?;
            let schedule = eps.as_ref().map_or_else(default_schedule, |e| e.0.clone());
            let d = cluster_depth_eps(&PointCloud::new(pts, c.run.window), &schedule, *min_points)?;
            let mut csv = String::from("eps,depth\n");
            for (e, k) in schedule.iter().zip(&d.per_eps) {
                let _ = writeln!(csv, "{e},{k}");
            }
            c.emit(&d, || format!("depth {} (stable {}) per eps {:?}\n", d.depth, d.stable, d.per_eps), Some(csv))?;
            Ok(Done { ok: true })
        }
        Command::Density { points, line, target, eps } => {
            let pts = read_points(points)?;
            let cloud = PointCloud::new(pts, c.run.window);
            let other;
            let f = match (line, target) {
                (Some(l), None) => {
                    let [a, b, x, y] = l.0.as_slice() else { bail!("--line takes four values") };
                    DensityTarget::Line(LineSpec::new(Complex64::new(*a, *b), Complex64::new(*x, *y))?)
                }
                (None, Some(t)) => {
                    other = read_points(t)?;
                    DensityTarget::Cloud(&other)
                }
                _ => DensityTarget::Line(LineSpec::real_axis()),
            };
            let d = density_along(&f, &cloud, *eps, c.run.window)?;
            let report = json!({ "density": d, "eps": eps, "window": c.run.window });
            c.emit(&report, || format!("{d}\n"), Some(format!("eps,window,density\n{eps},{},{d}\n", c.run.window)))?;
            Ok(Done { ok: true })
        }
        Command::Partition { combination } => {
            let comb: Combination = read_json(combination)?;
            let rho = pick_rho(&c.run.rho, comb.nonlinearity.as_ref())?;
            let p = alignment_partition(&zab_of(&rho)?, &comb.terms)?;
            c.emit(&p, || {
                let mut s = String::new();
                for (part, entire) in p.parts.iter().zip(&p.entire) {
                    let _ = writeln!(s, "{part:?}{}", if *entire { " entire" } else { "" });
                }
                s
            }, None)?;
            Ok(Done { ok: true })
        }
        Command::SymVerify { file } => {
            let f: SymmetryFile = read_json(file)?;
            let rho = pick_rho(&c.run.rho, f.nonlinearity.as_ref())?;
            let check = verify_symmetry(&rho, &f.symmetry, c.run.tol);
            c.emit(&check, || {
                format!("holds {} minimal {} (max residual {:e})\n", check.holds, check.minimal, check.max_residual)
            }, None)?;
            Ok(Done { ok: check.holds })
        }
        Command::SymDiscover { file } => {
            let f: CandidateFile = read_json(file)?;
            let rho = pick_rho(&c.run.rho, f.nonlinearity.as_ref())?;
            let found = discover_symmetry(&rho, &f.candidates, f.required)?;
            let report = json!({ "symmetry": found });
            c.emit(&report, || match &found {
                Some(s) => serde_json::to_string(s).unwrap_or_default() + "\n",
                None => "none\n".into(),
            }, None)?;
            Ok(Done { ok: true })
        }
        Command::SymExotic { alphas } => {
            let e = construct_exotic(&alphas.0)?;
            c.emit(&e, || {
                format!(
                    "zeta {} cutoff {} growth {} unit circle {} tail bound {:e}\n",
                    e.zeta, e.cutoff, e.growth, e.unit_circle, e.tail_bound
                )
            }, None)?;
            Ok(Done { ok: true })
        }
        Command::DepthScan { file, max_depth } => {
            let net = read_network(file)?;
            let rho = c.rho_for(&net)?;
            if rho != Nonlinearity::Tanh {
                bail!("depth-scan needs tanh");
            }
            let r = empirical_cluster_vs_depth(&net, *max_depth, &ScanConfig::default(), &default_schedule())?;
            let csv = r.sampled_singularities.to_csv();
            c.emit(&r, || {
                format!(
                    "{} singularities, clustering depth {}, network depth {}, match {}\n",
                    r.sampled_singularities.len(),
                    r.eps_depth,
                    r.network_depth,
                    r.matches_l
                )
            }, Some(csv))?;
            Ok(Done { ok: true })
        }
    }
}

fn append_log(path: &Path, records: &[serde_json::Value]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    for r in records {
        writeln!(f, "{r}").with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let c = cause.to_string();
        if !msg.contains(&c) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&c);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = if cli.run.json { Format::Json } else { cli.run.format };
    let mut ctx = Ctx { run: &cli.run, format, out: String::new(), log: Vec::new() };
    let result = run(&cli.cmd, &mut ctx).and_then(|done| {
        if let Some(p) = &cli.run.log {
            append_log(p, &ctx.log)?;
        }
        Ok(done)
    });
    match result {
        Ok(done) => {
            print!("{}", ctx.out);
            if done.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
