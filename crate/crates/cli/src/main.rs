use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infpdb::approx::{Approximator, DEFAULT_WORLD_CAP};
use infpdb::completion::{closure_extend, complete, is_closed};
use infpdb::fo::{parse, Formula};
use infpdb::io::{load_instance, Pdb, SpecFile, SpecKind};
use infpdb::numerics::ProbabilityInterval;
use infpdb::{oracle, Error, FactProbabilityAssignment, FiniteDiscretePdb, Schema, TiPdb};

const WORLD_CAP_VAR: &str = "PDB_WORLD_CAP";
const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "pdb",
    version,
    about = "Probabilistic databases over infinitely many facts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a spec and report its kind, total mass, and expected size.
    Validate { spec: PathBuf },
    /// Print the expected instance size.
    ExpectedSize { spec: PathBuf },
    /// Print the probability of one instance.
    Prob {
        #[arg(long)]
        instance: PathBuf,
        spec: PathBuf,
    },
    /// Approximate a query probability within an additive epsilon.
    Query {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        query: PathBuf,
        spec: PathBuf,
    },
    /// Print sampled instances, one JSON array per line.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        seed: u64,
        spec: PathBuf,
    },
    /// Complete a finite base PDB with independent fresh facts.
    Complete {
        base: PathBuf,
        tail: PathBuf,
        /// Mass kept by the original instances when the base must be closed
        /// first.
        #[arg(long)]
        c: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare engine and oracle probabilities on a head-only spec.
    OracleCompare {
        spec: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb: f64,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Capability(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Capability(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Capability(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidEpsilon(_) | Error::InvalidDelta(_) => Failure::Usage(msg),
            Error::CapExceeded { .. }
            | Error::TooManyFacts { .. }
            | Error::TooManyOriginalFacts(_) => Failure::Capability(msg),
            _ => Failure::Validation(msg),
        }
    }
}

fn context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| match Failure::from(e) {
        Failure::Validation(m) => Failure::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = out.flush();
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command, out: &mut impl Write) -> CmdResult {
    match command {
        Command::Validate { spec } => validate(&spec, out),
        Command::ExpectedSize { spec } => {
            let pdb = load(&spec)?;
            emit(out, format_args!("{}\n", expected_size(&pdb)))
        }
        Command::Prob { instance, spec } => prob(&instance, &spec, out),
        Command::Query {
            epsilon,
            query,
            spec,
        } => run_query(epsilon, &query, &spec, out),
        Command::Sample {
            n,
            delta,
            seed,
            spec,
        } => sample(n, delta, seed, &spec, out),
        Command::Complete {
            base,
            tail,
            c,
            out: path,
        } => run_complete(&base, &tail, c, &path, out),
        Command::OracleCompare {
            spec,
            query,
            perturb,
        } => oracle_compare(&spec, &query, perturb, out),
    }
}

fn emit(out: &mut impl Write, args: fmt::Arguments<'_>) -> CmdResult {
    out.write_fmt(args)
        .map_err(|e| Failure::Validation(format!("cannot write output: {e}")))
}

fn load(path: &Path) -> Result<Pdb, Failure> {
    let spec = SpecFile::load(path).map_err(context(path))?;
    spec.build().map_err(context(path))
}

fn load_query(path: &Path, schema: &Schema) -> Result<Formula, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    parse(text.trim(), schema).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn world_cap() -> Result<usize, Failure> {
    match std::env::var(WORLD_CAP_VAR) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Failure::Usage(format!(
                "{WORLD_CAP_VAR} must be a non-negative integer, got '{v}'"
            ))
        }),
        Err(_) => Ok(DEFAULT_WORLD_CAP),
    }
}

fn expected_size(pdb: &Pdb) -> f64 {
    match pdb {
        Pdb::Ti(t) => t.expected_size(),
        Pdb::Bid(b) => b.total_mass(),
        Pdb::Finite(p) => p.expected_size(),
        Pdb::Completion(c) => c.expected_size(),
    }
}

fn validate(path: &Path, out: &mut impl Write) -> CmdResult {
    let pdb = load(path)?;
    let size = expected_size(&pdb);
    let verdict = if size.is_finite() {
        "convergent"
    } else {
        "divergent"
    };
    emit(
        out,
        format_args!(
            "{}, total mass {size:.3}, {verdict}, expected size {size:.3}",
            pdb.kind()
        ),
    )?;
    if let Pdb::Completion(c) = &pdb {
        emit(out, format_args!(", tail mass {:.3}", c.tail_mass()))?;
    }
    emit(out, format_args!("\n"))
}

fn prob(instance: &Path, spec: &Path, out: &mut impl Write) -> CmdResult {
    let pdb = load(spec)?;
    let d = load_instance(instance).map_err(context(instance))?;
    let p = match &pdb {
        Pdb::Ti(t) => t.instance_prob(&d),
        Pdb::Bid(b) => b.instance_prob(&d),
        Pdb::Finite(p) => ProbabilityInterval::point(p.prob(&d)),
        Pdb::Completion(c) => c.instance_prob(&d),
    };
    emit(out, format_args!("{p}\n"))
}

fn check_epsilon(epsilon: f64) -> CmdResult {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--epsilon must lie in (0, 0.5), got {epsilon}"
        )))
    }
}

fn run_query(epsilon: f64, query: &Path, spec: &Path, out: &mut impl Write) -> CmdResult {
    check_epsilon(epsilon)?;
    let pdb = load(spec)?;
    let Pdb::Ti(t) = &pdb else {
        return Err(Failure::Capability(format!(
            "query evaluation needs a TI spec, {} is {}",
            spec.display(),
            pdb.kind()
        )));
    };
    let f = load_query(query, t.schema())?;
    let engine = Approximator::new(world_cap()?);
    if f.is_sentence() {
        let a = engine.approx_boolean(t, &f, epsilon)?;
        emit(out, format_args!("probability: {}\n", a.probability))?;
        let c = a.certificate;
        emit(
            out,
            format_args!(
                "certificate: n = {}, alpha_n = {}, tail_sum = {}, epsilon = {}\n",
                c.n, c.alpha_n, c.tail_sum, c.epsilon
            ),
        )
    } else {
        let a = engine.approx_nonboolean(t, &f, epsilon)?;
        emit(out, format_args!("{}\tprobability\n", a.vars.join("\t")))?;
        for (tuple, p) in &a.tuples {
            let cells: Vec<String> = tuple.iter().map(|v| v.to_string()).collect();
            emit(out, format_args!("{}\t{p}\n", cells.join("\t")))?;
        }
        emit(
            out,
            format_args!(
                "residual: every other tuple has probability at most {}\n",
                a.residual
            ),
        )?;
        let c = a.certificate;
        emit(
            out,
            format_args!(
                "certificate: n = {}, alpha_n = {}, tail_sum = {}, epsilon = {}\n",
                c.n, c.alpha_n, c.tail_sum, c.epsilon
            ),
        )
    }
}

fn sample(n: usize, delta: f64, seed: u64, spec: &Path, out: &mut impl Write) -> CmdResult {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Failure::Usage(format!(
            "--delta must lie in (0, 1), got {delta}"
        )));
    }
    let pdb = load(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let d = match &pdb {
            Pdb::Ti(t) => t.sample(&mut rng, delta)?,
            Pdb::Bid(b) => b.sample(&mut rng, delta)?,
            Pdb::Finite(p) => p.sample(&mut rng),
            Pdb::Completion(c) => c.sample(&mut rng, delta)?,
        };
        let line = serde_json::to_string(&d).expect("instances serialize");
        emit(out, format_args!("{line}\n"))?;
    }
    Ok(())
}

/// The base as a finite PDB; a head-only TI spec is expanded into its worlds.
fn finite_base(pdb: Pdb, path: &Path) -> Result<FiniteDiscretePdb, Failure> {
    match pdb {
        Pdb::Finite(p) => Ok(p),
        Pdb::Ti(t) if !t.has_tail() => {
            let worlds = oracle::enumerate_worlds(t.head())?;
            Ok(FiniteDiscretePdb::new(
                t.schema().clone(),
                t.universe().clone(),
                worlds,
            )?)
        }
        other => Err(Failure::Validation(format!(
            "{}: base must be a finite or head-only TI spec, found {}",
            path.display(),
            other.kind()
        ))),
    }
}

fn run_complete(
    base: &Path,
    tail: &Path,
    c: Option<f64>,
    path: &Path,
    out: &mut impl Write,
) -> CmdResult {
    let mut p = finite_base(load(base)?, base)?;
    let tail_spec = SpecFile::load(tail).map_err(context(tail))?;
    if tail_spec.kind != SpecKind::Ti || !tail_spec.worlds.is_empty() || tail_spec.blocks.is_some()
    {
        return Err(Failure::Validation(format!(
            "{}: tail must be a TI spec",
            tail.display()
        )));
    }
    let tail_pdb = tail_spec.build().map_err(context(tail))?;
    if tail_pdb.schema() != p.schema() || tail_pdb.universe() != p.universe() {
        return Err(Failure::Validation(format!(
            "{}: tail schema and universe must match the base",
            tail.display()
        )));
    }
    let Pdb::Ti(tail_ti) = tail_pdb else {
        unreachable!("kind checked")
    };
    let assignment: FactProbabilityAssignment = tail_ti.assignment().clone();
    if let Some(c) = c {
        if !is_closed(&p) || c < 1.0 {
            p = closure_extend(&p, c)?;
        }
    }
    let completion = complete(&p, assignment)?;
    let spec = SpecFile::describe(&Pdb::Completion(completion));
    spec.save(path).map_err(context(path))?;
    emit(out, format_args!("wrote {}\n", path.display()))
}

fn oracle_compare(spec: &Path, query: &Path, perturb: f64, out: &mut impl Write) -> CmdResult {
    let pdb = load(spec)?;
    let t = match &pdb {
        Pdb::Ti(t) if !t.has_tail() => t,
        _ => {
            return Err(Failure::Validation(format!(
                "{}: oracle comparison needs a head-only TI spec",
                spec.display()
            )))
        }
    };
    let facts = t.head().to_vec();
    let worlds = oracle::enumerate_worlds(&facts)?;
    let engine_pdb = if perturb != 0.0 && !facts.is_empty() {
        let mut head = facts.clone();
        head[0].1 = (head[0].1 + perturb).clamp(0.0, 1.0);
        TiPdb::new(
            t.schema().clone(),
            t.universe().clone(),
            FactProbabilityAssignment::head_only(head),
        )?
    } else {
        t.clone()
    };
    let f = load_query(query, t.schema())?;
    let engine = Approximator::new(world_cap()?.max(facts.len()));

    let mut max_diff: f64 = 0.0;
    for (d, p) in &worlds {
        max_diff = max_diff.max((engine_pdb.instance_prob(d).mid() - p).abs());
    }
    let world_diff = max_diff;
    let u = t.universe();
    let (engine_p, oracle_p) = if f.is_sentence() {
        (
            engine.conditional_query_prob(&engine_pdb, &f, facts.len())?,
            oracle::query_prob(&facts, &f, u)?,
        )
    } else {
        let vars = f.free_vars();
        let answers = engine.approx_nonboolean(&engine_pdb, &f, 0.25)?;
        let mut worst = (0.0f64, 0.0f64);
        let mut domain: std::collections::BTreeSet<infpdb::Value> = f.constants();
        for (fact, _) in &facts {
            domain.extend(fact.args().iter().cloned());
        }
        for tuple in tuples(&domain.into_iter().collect::<Vec<_>>(), vars.len()) {
            let ground = vars
                .iter()
                .zip(&tuple)
                .fold(f.clone(), |g, (v, a)| g.substitute(v, a));
            let o = oracle::query_prob(&facts, &ground, u)?;
            let e = answers.tuples.get(&tuple).copied().unwrap_or(0.0);
            if (e - o).abs() > (worst.0 - worst.1).abs() {
                worst = (e, o);
            }
        }
        worst
    };
    max_diff = max_diff.max((engine_p - oracle_p).abs());
    emit(out, format_args!("facts: {}\n", facts.len()))?;
    emit(out, format_args!("max world difference: {world_diff:e}\n"))?;
    emit(
        out,
        format_args!("query: engine {engine_p}, oracle {oracle_p}\n"),
    )?;
    emit(out, format_args!("max difference: {max_diff:e}\n"))?;
    if max_diff > ORACLE_TOLERANCE {
        return Err(Failure::Validation(format!(
            "engine and oracle disagree by {max_diff:e} (tolerance {ORACLE_TOLERANCE:e})"
        )));
    }
    Ok(())
}

fn tuples<T: Clone>(domain: &[T], k: usize) -> Vec<Vec<T>> {
    (0..k).fold(vec![Vec::new()], |acc, _| {
        acc.into_iter()
            .flat_map(|t| {
                domain.iter().map(move |v| {
                    let mut t = t.clone();
                    t.push(v.clone());
                    t
                })
            })
            .collect()
    })
}
