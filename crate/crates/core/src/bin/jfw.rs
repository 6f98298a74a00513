use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::{BigInt, BigRational, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use jfw::chart::{chart_svg, chart_text};
use jfw::config::{self, PlanConfig};
use jfw::forms::{
    basis_rank, c4, c6, delta, elliptic_symmetry_check, eta, jacobi_a, jacobi_b, jacobi_c,
    jf_basis_series, theta1_norm, verify_jacobi_relation, NamedForm,
};
use jfw::graded::{Generator, MultiDegree, RingMap, RingPresentation};
use jfw::hopf::{
    b1, h_w_inf_algebra, weier_doubleprime_p2, weier_odd, weier_prime_p2, weier_tilde_p2,
    weierstrass_full, CoverSpec, ExtWindow, HopfPresentation, Witness,
};
use jfw::linalg::GroupDescriptor;
use jfw::series::{QPrec, QZSeries};
use jfw::sseq::{run_staged, weight_tower_reassembly};

/// Exact arithmetic workbench: q,zeta-series expansion, weak Jacobi form
/// bases, graded ring presentations, cobar cohomology of presented Hopf
/// algebroids, and multigraded spectral sequence replay.
#[derive(Parser)]
#[command(name = "jfw", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Expand a named series to a given q-precision
    Expand(ExpandArgs),
    /// Run a named consistency check; nonzero exit on failure
    Verify(VerifyArgs),
    /// Tabulate weak Jacobi form basis ranks over a window
    Basis(BasisArgs),
    /// Cobar cohomology of a presented Hopf algebroid over a window
    Ext(ExtArgs),
    /// Execute a spectral sequence plan and report pages, towers, charts
    Ss(SsArgs),
    /// Graded ranks of a presented ring: one piece, a window table, or a
    /// localization ladder
    Rank(RankArgs),
    /// Render a chart from a stored run report
    Chart(ChartArgs),
}

#[derive(Args)]
struct ExpandArgs {
    /// One of: eta, delta, c4, c6, theta, a, b, c
    form: String,
    /// q-precision: number of integer q-orders, or an exact fraction of 24ths
    /// such as 25/24
    #[arg(long, default_value = "8")]
    qprec: String,
    #[arg(long, value_enum, default_value_t = SeriesFormat::Text)]
    format: SeriesFormat,
    /// Write the output here instead of printing it
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of: jacobi-relation, leading-terms, elliptic, basis, weierstrass,
    /// cover, gamma, bockstein, discriminant-map, selftest, all
    check: String,
    /// q-expansion orders for the series checks
    #[arg(long)]
    qorders: Option<i64>,
    /// Restrict the elliptic check to one form: a, b, c, a2, ac
    #[arg(long)]
    form: Option<String>,
    /// Restrict the elliptic check to one twist parameter
    #[arg(long)]
    lambda: Option<i64>,
    /// Target presentation for discriminant-map: stable-p2 or stable-odd
    #[arg(long, default_value = "stable-p2")]
    ring: String,
    /// Discriminant image variant: corrected or displayed
    #[arg(long, default_value = "corrected")]
    variant: String,
    /// Seed for selftest
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of random cases for selftest
    #[arg(long, default_value_t = 40)]
    cases: u32,
    /// Cohomological degree cap for the cohomology checks
    #[arg(long)]
    smax: Option<usize>,
    /// Internal degree cap for the cohomology checks
    #[arg(long)]
    tmax: Option<i64>,
    /// Horizontal degree cap for the bockstein comparison
    #[arg(long)]
    nmax: Option<i64>,
}

#[derive(Args)]
struct BasisArgs {
    #[arg(long, default_value_t = -4)]
    nmin: i64,
    #[arg(long, default_value_t = 12)]
    nmax: i64,
    /// Largest doubled index to tabulate
    #[arg(long, default_value_t = 6)]
    index2_max: i64,
    #[arg(long, default_value_t = 4)]
    qorders: i64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtArgs {
    /// Bundled algebroid name or a JSON file path
    #[arg(long)]
    algebroid: String,
    #[arg(long, default_value_t = 2)]
    smax: usize,
    /// Cap on the first internal degree
    #[arg(long, default_value_t = 12)]
    tmax: i64,
    /// Cap on the second internal degree, for bigraded bases
    #[arg(long, default_value_t = 0)]
    umax: i64,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    format: TableFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SsArgs {
    /// Bundled plan name or a JSON file path
    #[arg(long)]
    config: String,
    /// Override the plan window: a comma list matching the plan arity, or a
    /// single cap for the first coordinate
    #[arg(long)]
    window: Option<String>,
    /// Chart page; defaults to the final page
    #[arg(long)]
    page: Option<i64>,
    #[arg(long, value_enum, default_value_t = RunFormat::Json)]
    format: RunFormat,
    /// Directory target: writes report.json, chart.svg, chart.txt
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Bundled ring name or a JSON file path
    #[arg(long)]
    ring: String,
    /// Single degree, comma separated
    #[arg(long)]
    at: Option<String>,
    /// Componentwise caps; tabulates every degree from 0 up to the caps
    #[arg(long)]
    window: Option<String>,
    /// Generator to invert; stabilizes the piece at --at along its ladder
    #[arg(long)]
    localize: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChartArgs {
    /// Run report JSON file
    #[arg(long)]
    report: PathBuf,
    /// Page to render; defaults to the final page
    #[arg(long)]
    page: Option<i64>,
    #[arg(long, value_enum, default_value_t = ChartFormat::Svg)]
    format: ChartFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunFormat {
    Json,
    Svg,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChartFormat {
    Svg,
    Text,
}

/// Failure classes map to exit codes: a Check failure is a mathematical
/// finding (exit 1), an Input failure is a usage or format problem (exit 2).
enum Fail {
    Check(String),
    Input(String),
}

type CliResult = Result<(), Fail>;

fn check<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Check(e.to_string())
}

fn input<E: std::fmt::Display>(e: E) -> Fail {
    Fail::Input(e.to_string())
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("WORKBENCH_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Expand(a) => cmd_expand(&a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::Basis(a) => cmd_basis(&a),
        Cmd::Ext(a) => cmd_ext(&a),
        Cmd::Ss(a) => cmd_ss(&a),
        Cmd::Rank(a) => cmd_rank(&a),
        Cmd::Chart(a) => cmd_chart(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Check(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(Fail::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn emit(out: &Option<PathBuf>, content: &str) -> CliResult {
    match out {
        Some(path) => {
            fs::write(path, content).map_err(input)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

/// Resolve a scenario argument: an existing file wins, otherwise the bundled
/// catalog is consulted.
fn load_spec(name: &str) -> Result<String, Fail> {
    let p = Path::new(name);
    if p.is_file() {
        return fs::read_to_string(p).map_err(input);
    }
    match config::bundled(name) {
        Some(text) => Ok(text.to_string()),
        None => Err(Fail::Input(format!(
            "no file or bundled scenario named '{name}'; bundled: {}",
            config::bundled_names().join(", ")
        ))),
    }
}

fn parse_degree(s: &str) -> Result<Vec<i64>, Fail> {
    s.split(',')
        .map(|x| x.trim().parse::<i64>().map_err(input))
        .collect()
}

/// Precision in 24ths of a q-power: plain integers count whole q-orders,
/// fractions are taken exactly and must be expressible in 24ths.
fn parse_qprec(s: &str) -> Result<i64, Fail> {
    let v = if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(input)?;
        let d: i64 = den.trim().parse().map_err(input)?;
        if d <= 0 || (24 * n) % d != 0 {
            return Err(Fail::Input(format!(
                "precision {s} is not a nonnegative multiple of 1/24"
            )));
        }
        24 * n / d
    } else {
        let n: i64 = s.trim().parse().map_err(input)?;
        24 * n
    };
    if !(0..=48_000).contains(&v) {
        return Err(Fail::Input(format!("precision {s} out of range")));
    }
    Ok(v)
}

fn cmd_expand(a: &ExpandArgs) -> CliResult {
    let prec24 = parse_qprec(&a.qprec)?;
    let series: QZSeries = match a.form.as_str() {
        "eta" => eta(prec24),
        "delta" => delta(prec24),
        "c4" => c4(prec24),
        "c6" => c6(prec24),
        "theta" => theta1_norm(prec24),
        "a" => jacobi_a(prec24).map_err(check)?.series,
        "b" => jacobi_b(prec24).map_err(check)?.series,
        "c" => jacobi_c(prec24).map_err(check)?.series,
        other => {
            return Err(Fail::Input(format!(
                "unknown form '{other}'; expected eta, delta, c4, c6, theta, a, b, c"
            )))
        }
    };
    let text = match a.format {
        SeriesFormat::Text => series.to_string(),
        SeriesFormat::Json => serde_json::to_string_pretty(&series.to_json()).map_err(input)?,
    };
    emit(&a.out, &text)
}

fn cmd_verify(a: &VerifyArgs) -> CliResult {
    match a.check.as_str() {
        "jacobi-relation" => verify_relation(a.qorders.unwrap_or(8)),
        "leading-terms" => verify_leading_terms(),
        "elliptic" => verify_elliptic(a.qorders.unwrap_or(6), a.form.as_deref(), a.lambda),
        "basis" => verify_basis(a.qorders.unwrap_or(4)),
        "weierstrass" => verify_weierstrass(),
        "cover" => verify_cover(a.smax.unwrap_or(2), a.tmax.unwrap_or(10)),
        "gamma" => verify_gamma(),
        "bockstein" => verify_bockstein(a.nmax.unwrap_or(18)),
        "discriminant-map" => verify_discriminant(&a.ring, &a.variant),
        "selftest" => verify_selftest(a.seed, a.cases),
        "all" => {
            verify_selftest(a.seed, a.cases)?;
            verify_relation(a.qorders.unwrap_or(8))?;
            verify_leading_terms()?;
            verify_elliptic(6, None, None)?;
            verify_basis(4)?;
            verify_weierstrass()?;
            verify_cover(2, 10)?;
            verify_gamma()?;
            verify_bockstein(a.nmax.unwrap_or(18))?;
            verify_discriminant("stable-p2", "corrected")?;
            verify_discriminant("stable-odd", "corrected")?;
            println!("all checks passed");
            Ok(())
        }
        other => Err(Fail::Input(format!(
            "unknown check '{other}'; see jfw verify --help"
        ))),
    }
}

fn verify_relation(qorders: i64) -> CliResult {
    if qorders < 1 {
        return Err(Fail::Input("qorders must be positive".into()));
    }
    let rep = verify_jacobi_relation(24 * qorders).map_err(check)?;
    if rep.passed() {
        println!("cubic relation between a, b, c: ok through q^{qorders}");
        Ok(())
    } else {
        let detail = match rep.max_term() {
            Some((q24, z2, c)) => format!("leading residual {c} at q24={q24}, z2={z2}"),
            None => "nonzero residual".to_string(),
        };
        Err(Fail::Check(format!("cubic relation fails: {detail}")))
    }
}

fn verify_leading_terms() -> CliResult {
    let a = jacobi_a(2 * 24).map_err(check)?;
    let b = jacobi_b(2 * 24).map_err(check)?;
    let c = jacobi_c(2 * 24).map_err(check)?;

    let mut bad: Vec<String> = Vec::new();
    if a.series.coefficient(0, -1) != big(1)
        || a.series.coefficient(0, 1) != big(-1)
        || a.series.level(0).len() != 2
    {
        bad.push("q^0 level of a is not zeta^(1/2)-like".into());
    }
    let at = a.series.z_taylor(1);
    if !at[0].is_zero() || at[1].coefficient(0, 0).is_zero() {
        bad.push("z-expansion of a does not start with a nonzero linear term".into());
    }
    if b.series.coefficient(0, -2) != big(1)
        || b.series.coefficient(0, 0) != big(10)
        || b.series.coefficient(0, 2) != big(1)
        || b.series.level(0).len() != 3
    {
        bad.push("q^0 level of b is not zeta + 10 + 1/zeta".into());
    }
    if b.series.z_taylor(0)[0].coefficient(0, 0) != big(12) {
        bad.push("z-expansion of b does not start at 12".into());
    }
    if c.series.coefficient(0, -1) != big(1) || c.series.coefficient(0, 1) != big(1) {
        bad.push("q^0 level of c is not zeta + 1/zeta".into());
    }
    if c.series.z_taylor(0)[0].coefficient(0, 0) != big(2) {
        bad.push("z-expansion of c does not start at 2".into());
    }
    if bad.is_empty() {
        println!("leading terms of a, b, c: ok");
        Ok(())
    } else {
        Err(Fail::Check(bad.join("; ")))
    }
}

fn verify_elliptic(qorders: i64, only_form: Option<&str>, only_lambda: Option<i64>) -> CliResult {
    if qorders < 1 {
        return Err(Fail::Input("qorders must be positive".into()));
    }
    let prec24 = 24 * qorders;
    let a = jacobi_a(prec24).map_err(check)?;
    let b = jacobi_b(prec24).map_err(check)?;
    let c = jacobi_c(prec24).map_err(check)?;
    let forms: Vec<(&str, NamedForm)> = vec![
        ("a", a.clone()),
        ("b", b),
        ("c", c.clone()),
        ("a2", a.mul(&a)),
        ("ac", a.mul(&c)),
    ];
    let lambdas: Vec<i64> = match only_lambda {
        Some(l) => vec![l],
        None => vec![1, -1],
    };
    for (name, f) in &forms {
        if let Some(want) = only_form {
            if want != *name {
                continue;
            }
        }
        for l in &lambdas {
            let rep = elliptic_symmetry_check(f, *l).map_err(check)?;
            if !rep.passed() {
                return Err(Fail::Check(format!(
                    "elliptic transformation fails for {name} at lambda={l} ({} violations)",
                    rep.violations.len()
                )));
            }
            println!("elliptic transformation of {name} at lambda={l}: ok ({} terms)", rep.checked);
        }
    }
    Ok(())
}

fn verify_basis(qorders: i64) -> CliResult {
    if qorders < 1 {
        return Err(Fail::Input("qorders must be positive".into()));
    }
    let mut cells = 0usize;
    let mut bad: Vec<String> = Vec::new();
    for n in -4..=12i64 {
        for d2 in 0..=6i64 {
            let (entries, count) = jf_basis_series(n, d2, 24 * qorders).map_err(check)?;
            let rank = basis_rank(&entries);
            cells += 1;
            if rank != count {
                bad.push(format!("n={n} index2={d2}: rank {rank} of {count} monomials"));
            }
        }
    }
    if bad.is_empty() {
        println!("basis ranks match monomial counts over {cells} cells");
        Ok(())
    } else {
        Err(Fail::Check(bad.join("; ")))
    }
}

fn validated(h: HopfPresentation, what: &str) -> Result<HopfPresentation, Fail> {
    let rep = h.validate().map_err(check)?;
    if !rep.is_ok() {
        return Err(Fail::Check(format!(
            "{what} fails validation: {:?}",
            rep.failures
        )));
    }
    Ok(h)
}

fn verify_weierstrass() -> CliResult {
    let presets: Vec<(&str, HopfPresentation)> = vec![
        ("full cover", weierstrass_full().map_err(check)?),
        ("reduced cover", weier_tilde_p2().map_err(check)?),
        ("first reduction", weier_prime_p2().map_err(check)?),
        ("second reduction", weier_doubleprime_p2().map_err(check)?),
        ("exterior quotient", b1().map_err(check)?),
        ("odd cover", weier_odd().map_err(check)?),
    ];
    for (name, h) in presets {
        validated(h, name)?;
        println!("{name}: structure laws ok");
    }

    let big_cover = validated(
        weier_tilde_p2()
            .map_err(check)?
            .base_change_comodule(&h_w_inf_algebra())
            .map_err(check)?,
        "extended reduced cover",
    )?;
    let step1 = big_cover
        .change_of_cover(&CoverSpec {
            kill: "y".to_string(),
            witness: Witness::Tower("s".to_string()),
            check_to: 12,
        })
        .map_err(check)?;
    if !step1.validation.is_ok() {
        return Err(Fail::Check("first reduction output fails validation".into()));
    }
    if !step1
        .presentation
        .same_presentation(&weier_prime_p2().map_err(check)?)
    {
        return Err(Fail::Check(
            "first change of cover does not reproduce the stored presentation".into(),
        ));
    }
    println!(
        "first change of cover: ok (eliminated {})",
        step1.eliminated.join(", ")
    );

    let step2 = validated(weier_prime_p2().map_err(check)?, "first reduction")?
        .change_of_cover(&CoverSpec {
            kill: "x".to_string(),
            witness: Witness::List(vec!["1".to_string(), "s".to_string()]),
            check_to: 16,
        })
        .map_err(check)?;
    if !step2.validation.is_ok()
        || !step2
            .presentation
            .same_presentation(&weier_doubleprime_p2().map_err(check)?)
    {
        return Err(Fail::Check(
            "second change of cover does not reproduce the stored presentation".into(),
        ));
    }
    println!(
        "second change of cover: ok (eliminated {})",
        step2.eliminated.join(", ")
    );

    let quot = weier_doubleprime_p2()
        .map_err(check)?
        .mod_invariant_ideal(&["2", "a1"])
        .map_err(check)?;
    if !quot.same_presentation(&b1().map_err(check)?) {
        return Err(Fail::Check(
            "invariant ideal quotient does not reproduce the exterior presentation".into(),
        ));
    }
    println!("invariant ideal quotient: ok");

    let odd = validated(weier_odd().map_err(check)?, "odd cover")?
        .change_of_cover(&CoverSpec {
            kill: "x".to_string(),
            witness: Witness::List(vec!["1".to_string()]),
            check_to: 12,
        })
        .map_err(check)?;
    if !odd.validation.is_ok() || !odd.presentation.gamma.is_empty() {
        return Err(Fail::Check("odd change of cover does not collapse".into()));
    }
    println!("odd change of cover: ok (cover collapses)");
    Ok(())
}

fn ext_table_of(
    h: &HopfPresentation,
    smax: usize,
    deg_max: Vec<i64>,
) -> Result<jfw::hopf::ExtTable, Fail> {
    h.cobar_ext(
        &h.trivial_comodule(),
        &ExtWindow {
            s_max: smax,
            deg_max: MultiDegree(deg_max),
        },
    )
    .map_err(check)
}

fn verify_cover(smax: usize, tmax: i64) -> CliResult {
    let big_cover = validated(
        weier_tilde_p2()
            .map_err(check)?
            .base_change_comodule(&h_w_inf_algebra())
            .map_err(check)?,
        "extended reduced cover",
    )?;
    let prime = validated(weier_prime_p2().map_err(check)?, "first reduction")?;
    let dprime = validated(weier_doubleprime_p2().map_err(check)?, "second reduction")?;

    let t_big = ext_table_of(&big_cover, smax, vec![tmax, 0])?;
    let t_prime = ext_table_of(&prime, smax, vec![tmax, 0])?;
    let t_dprime = ext_table_of(&dprime, smax, vec![tmax, 0])?;
    let mut bad: Vec<String> = Vec::new();
    for s in 0..=smax {
        for t in 0..=tmax {
            let g0 = t_big.group(s, &[t, 0]);
            let g1 = t_prime.group(s, &[t, 0]);
            let g2 = t_dprime.group(s, &[t, 0]);
            if g0 != g1 {
                bad.push(format!("reduction 1 at s={s} t={t}: {g0} vs {g1}"));
            }
            if g1 != g2 {
                bad.push(format!("reduction 2 at s={s} t={t}: {g1} vs {g2}"));
            }
        }
    }

    let odd = validated(weier_odd().map_err(check)?, "odd cover")?;
    let collapsed = odd
        .change_of_cover(&CoverSpec {
            kill: "x".to_string(),
            witness: Witness::List(vec!["1".to_string()]),
            check_to: 12,
        })
        .map_err(check)?;
    let odd_t = tmax.max(16);
    let t_odd = ext_table_of(&odd, smax, vec![odd_t, 0])?;
    let t_coll = ext_table_of(&collapsed.presentation, smax, vec![odd_t, 0])?;
    for s in 0..=smax {
        for t in 0..=odd_t {
            let g0 = t_odd.group(s, &[t, 0]);
            let g1 = t_coll.group(s, &[t, 0]);
            if g0 != g1 {
                bad.push(format!("odd reduction at s={s} t={t}: {g0} vs {g1}"));
            }
        }
    }
    if bad.is_empty() {
        println!(
            "cohomology agrees across all three reductions (s <= {smax}, t <= {tmax} and {odd_t})"
        );
        Ok(())
    } else {
        Err(Fail::Check(bad.join("; ")))
    }
}

fn gen3(name: &str, s: i64, t: i64, u: i64) -> Generator {
    Generator {
        name: name.to_string(),
        degree: MultiDegree(vec![s, t, u]),
        inverted: false,
    }
}

fn verify_gamma() -> CliResult {
    use jfw::coeffs::Coefficients;

    // Exterior quotient: cohomology is polynomial on the cover class, the
    // degree six base generator, and the square of the degree eight one.
    let h = validated(b1().map_err(check)?, "exterior quotient")?;
    let table = ext_table_of(&h, 4, vec![24, 0])?;
    let model = RingPresentation::new(
        Coefficients::Fp { p: 2 },
        vec![gen3("h1", 1, 2, 0), gen3("a3", 0, 6, 0), gen3("A4", 0, 16, 0)],
        vec!["a3*h1".to_string()],
    )
    .map_err(check)?;
    let mut bad: Vec<String> = Vec::new();
    for s in 0..=4usize {
        for t in 0..=24i64 {
            let want = model
                .graded_piece(&MultiDegree(vec![s as i64, t, 0]))
                .map_err(check)?
                .group;
            let got = table.group(s, &[t, 0]);
            if got != want {
                bad.push(format!("exterior cohomology at s={s} t={t}: {got} vs {want}"));
            }
        }
    }
    if bad.is_empty() {
        println!("mod-two cohomology window matches its polynomial presentation (s <= 4, t <= 24)");
    }

    // Integral window of the second reduction against the stored stable
    // presentation in generators b2, b3, b4, b8, h1.
    let h = validated(weier_doubleprime_p2().map_err(check)?, "second reduction")?;
    let table = ext_table_of(&h, 3, vec![20, 0])?;
    let model = RingPresentation::new(
        Coefficients::LocalAt { p: 2 },
        vec![
            gen3("b2", 0, 4, 0),
            gen3("b3", 0, 6, 0),
            gen3("b4", 0, 8, 0),
            gen3("b8", 0, 16, 0),
            gen3("h1", 1, 2, 0),
        ],
        vec![
            "2*h1".to_string(),
            "b3*h1".to_string(),
            "b4*h1".to_string(),
            "4*b8 + b4^2 - b2*b3^2".to_string(),
        ],
    )
    .map_err(check)?;
    for s in 0..=3usize {
        for t in 0..=20i64 {
            let want = model
                .graded_piece(&MultiDegree(vec![s as i64, t, 0]))
                .map_err(check)?
                .group;
            let got = table.group(s, &[t, 0]);
            if got != want {
                bad.push(format!("integral cohomology at s={s} t={t}: {got} vs {want}"));
            }
        }
    }
    if bad.is_empty() {
        println!("integral cohomology window matches the stored presentation (s <= 3, t <= 20)");
        Ok(())
    } else {
        Err(Fail::Check(bad.join("; ")))
    }
}

fn verify_bockstein(nmax: i64) -> CliResult {
    if !(0..=40).contains(&nmax) {
        return Err(Fail::Input("nmax out of range".into()));
    }
    let plan = PlanConfig::parse(config::bundled("bockstein_p2").expect("bundled plan"))
        .map_err(input)?;
    let shape = plan.shape().map_err(input)?;
    let stages = plan.stages().map_err(input)?;
    let window = vec![nmax, 3, 14];
    let (_, state) = run_staged(shape, &stages, &MultiDegree(window.clone()), plan.max_page)
        .map_err(check)?;
    let groups = weight_tower_reassembly(&state, &window).map_err(check)?;

    let model = config::parse_ring(config::bundled("stable_jf_p2").expect("bundled ring"))
        .map_err(input)?;
    let zero = GroupDescriptor::zero();
    let mut bad: Vec<String> = Vec::new();
    for n in 0..=nmax {
        for s in 0..=3i64 {
            let got = groups.get(&vec![n, s]).unwrap_or(&zero);
            let want = model
                .graded_piece(&MultiDegree(vec![n, s]))
                .map_err(check)?
                .group;
            if *got != want {
                bad.push(format!("reassembled group at n={n} s={s}: {got} vs {want}"));
            }
        }
    }
    if bad.is_empty() {
        println!(
            "mod-two tower reassembly matches the stored two-local presentation (n <= {nmax}, s <= 3)"
        );
        Ok(())
    } else {
        Err(Fail::Check(bad.join("; ")))
    }
}

fn verify_discriminant(ring: &str, variant: &str) -> CliResult {
    let target_name = match ring {
        "stable-p2" => "stable_jf_p2",
        "stable-odd" => "stable_jf_odd",
        other => {
            return Err(Fail::Input(format!(
                "unknown ring '{other}'; expected stable-p2 or stable-odd"
            )))
        }
    };
    let target = config::parse_ring(config::bundled(target_name).expect("bundled ring"))
        .map_err(input)?;
    let source = RingPresentation::new(
        target.coefficients.clone(),
        vec![
            Generator {
                name: "c4".to_string(),
                degree: MultiDegree(vec![8, 0]),
                inverted: false,
            },
            Generator {
                name: "c6".to_string(),
                degree: MultiDegree(vec![12, 0]),
                inverted: false,
            },
            Generator {
                name: "Delta".to_string(),
                degree: MultiDegree(vec![24, 0]),
                inverted: false,
            },
        ],
        vec!["1728*Delta - c6^2 + c4^3".to_string()],
    )
    .map_err(check)?;

    let delta_img = match (ring, variant) {
        ("stable-p2", "corrected") => "-b2^2*b8 - 8*b4^3 - 27*b3^4 + 9*b2*b3^2*b4",
        ("stable-p2", "displayed") => "-b2^2*b8 - 8*b4^3 - 27*b4^4 + 9*b2*b3^2*b4",
        ("stable-odd", "corrected") => {
            "-1/4*b2^3*b3^2 + 1/4*b2^2*b4^2 - 8*b4^3 - 27*b3^4 + 9*b2*b3^2*b4"
        }
        ("stable-odd", "displayed") => {
            "1/4*b2^3*b3^2 + 1/4*b2^2*b4^2 - 8*b4^3 - 27*b3^4 + 9*b2*b3^2*b4"
        }
        (_, other) => {
            return Err(Fail::Input(format!(
                "unknown variant '{other}'; expected corrected or displayed"
            )))
        }
    };
    let mut images: BTreeMap<String, String> = BTreeMap::new();
    images.insert("c4".to_string(), "b2^2 - 24*b4".to_string());
    images.insert(
        "c6".to_string(),
        "-b2^3 + 36*b2*b4 - 216*b3^2".to_string(),
    );
    images.insert("Delta".to_string(), delta_img.to_string());

    let map = match RingMap::new(source, target, &images) {
        Ok(m) => m,
        Err(jfw::graded::GradedError::DegreeMismatch { name }) => {
            return Err(Fail::Check(format!(
                "{variant} image of {name} in {ring} is not homogeneous of the right degree, map rejected"
            )))
        }
        Err(e) => return Err(input(e)),
    };
    let rep = map.check().map_err(check)?;
    if rep.passed() {
        println!("{variant} discriminant image satisfies the cubic modular relation in {ring}");
        Ok(())
    } else {
        let detail: Vec<String> = rep
            .per_relation
            .iter()
            .filter_map(|(rel, res)| res.as_ref().map(|r| format!("{rel} maps to {r}")))
            .collect();
        Err(Fail::Check(format!(
            "{variant} discriminant image violates the relation in {ring}: {}",
            detail.join("; ")
        )))
    }
}

fn random_series(rng: &mut StdRng) -> QZSeries {
    let nterms = rng.gen_range(1..=4);
    let mut terms = Vec::new();
    for _ in 0..nterms {
        let q = rng.gen_range(0..48i64);
        let z = rng.gen_range(-4..=4i64);
        let num: i64 = rng.gen_range(-9..=9);
        let den: i64 = rng.gen_range(1..=4);
        if num != 0 {
            terms.push((q, z, BigRational::new(BigInt::from(num), BigInt::from(den))));
        }
    }
    QZSeries::from_terms(terms, QPrec::Finite(96))
}

fn verify_selftest(seed: u64, cases: u32) -> CliResult {
    let mut rng = StdRng::seed_from_u64(seed);
    let fail = |i: u32, what: &str| {
        Err(Fail::Check(format!("selftest case {i}: {what} (seed {seed})")))
    };
    for i in 0..cases {
        let a = random_series(&mut rng);
        let b = random_series(&mut rng);
        let c = random_series(&mut rng);
        if a.mul(&b) != b.mul(&a) {
            return fail(i, "multiplication is not commutative");
        }
        if a.mul(&b).mul(&c) != a.mul(&b.mul(&c)) {
            return fail(i, "multiplication is not associative");
        }
        if a.mul(&b.add(&c)) != a.mul(&b).add(&a.mul(&c)) {
            return fail(i, "multiplication does not distribute");
        }
        let p = a.mul(&b);
        if let Ok(q) = p.div_exact(&b) {
            if !q.agrees_with(&a) {
                return fail(i, "division does not invert multiplication");
            }
        }
    }

    let prec24 = 24 * (3 + (seed % 3) as i64);
    if !eta(prec24).pow(24).agrees_with(&delta(prec24)) {
        return Err(Fail::Check(format!(
            "discriminant differs from the 24th power of eta at precision {prec24}"
        )));
    }
    let lhs = c4(prec24).pow(3).sub(&c6(prec24).pow(2));
    if !lhs.agrees_with(&delta(prec24).scale(&big(1728))) {
        return Err(Fail::Check(format!(
            "cubic modular relation fails at precision {prec24}"
        )));
    }

    let ring = config::parse_ring(config::bundled("modular_forms").expect("bundled ring"))
        .map_err(input)?;
    for i in 0..cases {
        let nterms = rng.gen_range(1..=3);
        let mut parts = Vec::new();
        for _ in 0..nterms {
            let coeff: i64 = rng.gen_range(1..=20);
            let e4 = rng.gen_range(0..=3u32);
            let e6 = rng.gen_range(0..=3u32);
            let ed = rng.gen_range(0..=2u32);
            parts.push(format!("{coeff}*c4^{e4}*c6^{e6}*Delta^{ed}"));
        }
        let src = parts.join(" + ");
        let p = ring.parse(&src).map_err(check)?;
        let printed = ring.format_poly(&p);
        let reparsed = ring.parse(&printed).map_err(check)?;
        if ring.format_poly(&reparsed) != printed {
            return fail(i, "polynomial print and parse do not round trip");
        }
    }
    println!("selftest: {cases} series cases and {cases} ring cases with seed {seed}: ok");
    Ok(())
}

fn cmd_basis(a: &BasisArgs) -> CliResult {
    if a.qorders < 1 || a.nmin > a.nmax || a.index2_max < 0 {
        return Err(Fail::Input("empty or invalid basis window".into()));
    }
    let mut out = String::from("n,index2,count,rank,basis\n");
    for n in a.nmin..=a.nmax {
        for d2 in 0..=a.index2_max {
            let (entries, count) = jf_basis_series(n, d2, 24 * a.qorders).map_err(check)?;
            let rank = basis_rank(&entries);
            let labels: Vec<&str> = entries.iter().map(|e| e.label.as_str()).collect();
            out.push_str(&format!(
                "{n},{d2},{count},{rank},{}\n",
                labels.join(" ")
            ));
        }
    }
    emit(&a.out, out.trim_end())
}

fn cmd_ext(a: &ExtArgs) -> CliResult {
    let text = load_spec(&a.algebroid)?;
    let h = HopfPresentation::from_json(&text).map_err(input)?;
    let h = validated(h, "algebroid")?;
    let arity = h
        .base
        .generators
        .first()
        .map(|g| g.degree.arity())
        .unwrap_or(1);
    let mut deg_max = vec![0i64; arity];
    deg_max[0] = a.tmax;
    if arity > 1 {
        deg_max[1] = a.umax;
    }
    let table = ext_table_of(&h, a.smax, deg_max)?;
    let text = match a.format {
        TableFormat::Csv => table.to_csv(),
        TableFormat::Json => {
            let rows: Vec<serde_json::Value> = table
                .entries
                .iter()
                .map(|((s, d), e)| {
                    json!({
                        "s": s,
                        "degree": d,
                        "group": e.group.to_string(),
                        "generators": e.generators,
                    })
                })
                .collect();
            let v = json!({
                "s_max": table.s_max,
                "deg_max": table.deg_max.0,
                "entries": rows,
            });
            serde_json::to_string_pretty(&v).map_err(input)?
        }
    };
    emit(&a.out, &text)
}

/// Plan execution failures split by origin: config parsing is an input
/// problem, engine refusals are mathematical findings.
fn config_fail(e: config::ConfigError) -> Fail {
    match e {
        config::ConfigError::Graded(_) | config::ConfigError::Sseq(_) => check(e),
        other => input(other),
    }
}

fn cmd_ss(a: &SsArgs) -> CliResult {
    let text = load_spec(&a.config)?;
    let plan = PlanConfig::parse(&text).map_err(input)?;
    let window: Option<Vec<i64>> = match &a.window {
        None => None,
        Some(s) => {
            let v = parse_degree(s)?;
            if v.len() == 1 && plan.window.len() > 1 {
                let mut w = plan.window.clone();
                w[0] = v[0];
                Some(w)
            } else if v.len() == plan.window.len() {
                Some(v)
            } else {
                return Err(Fail::Input(format!(
                    "window has {} coordinates, plan expects {}",
                    v.len(),
                    plan.window.len()
                )));
            }
        }
    };
    let report = plan.execute(window.as_deref()).map_err(config_fail)?;
    let page = a.page.unwrap_or(report.final_page);
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(input)?;
            let report_path = dir.join("report.json");
            fs::write(&report_path, report.to_json_string()).map_err(input)?;
            let svg = chart_svg(&report, page).map_err(input)?;
            fs::write(dir.join("chart.svg"), svg).map_err(input)?;
            let txt = chart_text(&report, page).map_err(input)?;
            fs::write(dir.join("chart.txt"), txt).map_err(input)?;
            println!(
                "wrote {}, chart.svg, chart.txt (page {page})",
                report_path.display()
            );
            Ok(())
        }
        None => {
            let text = match a.format {
                RunFormat::Json => report.to_json_string(),
                RunFormat::Svg => chart_svg(&report, page).map_err(input)?,
                RunFormat::Text => chart_text(&report, page).map_err(input)?,
            };
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_rank(a: &RankArgs) -> CliResult {
    let text = load_spec(&a.ring)?;
    let ring = config::parse_ring(&text).map_err(input)?;
    let arity = ring.arity();

    if let Some(gen) = &a.localize {
        let at = a
            .at
            .as_deref()
            .ok_or_else(|| Fail::Input("--localize needs --at".into()))?;
        let d = parse_degree(at)?;
        if d.len() != arity {
            return Err(Fail::Input(format!(
                "degree has {} coordinates, ring expects {arity}",
                d.len()
            )));
        }
        let piece = ring
            .localize_rank(gen, &MultiDegree(d))
            .map_err(check)?;
        let v = serde_json::to_string_pretty(&piece.to_json()).map_err(input)?;
        return emit(&a.out, &v);
    }

    if let Some(at) = &a.at {
        let d = parse_degree(at)?;
        if d.len() != arity {
            return Err(Fail::Input(format!(
                "degree has {} coordinates, ring expects {arity}",
                d.len()
            )));
        }
        let piece = ring.graded_piece(&MultiDegree(d)).map_err(check)?;
        let v = serde_json::to_string_pretty(&piece.to_json()).map_err(input)?;
        return emit(&a.out, &v);
    }

    if let Some(w) = &a.window {
        let caps = parse_degree(w)?;
        if caps.len() != arity {
            return Err(Fail::Input(format!(
                "window has {} coordinates, ring expects {arity}",
                caps.len()
            )));
        }
        let degrees = degree_box(&caps).ok_or_else(|| {
            Fail::Input("window is negative or enumerates more than 20000 degrees".into())
        })?;
        let pieces = ring.hilbert_table(&degrees).map_err(check)?;
        let text = jfw::graded::hilbert_csv(arity, &pieces);
        return emit(&a.out, text.trim_end());
    }

    Err(Fail::Input("pass --at, --window, or --localize with --at".into()))
}

fn degree_box(caps: &[i64]) -> Option<Vec<MultiDegree>> {
    let mut total: i64 = 1;
    for c in caps {
        if *c < 0 {
            return None;
        }
        total = total.saturating_mul(c + 1);
        if total > 20_000 {
            return None;
        }
    }
    let mut out = Vec::new();
    let mut cur = vec![0i64; caps.len()];
    loop {
        out.push(MultiDegree(cur.clone()));
        let mut i = caps.len();
        loop {
            if i == 0 {
                return Some(out);
            }
            i -= 1;
            if cur[i] < caps[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
        }
    }
}

fn cmd_chart(a: &ChartArgs) -> CliResult {
    let text = fs::read_to_string(&a.report).map_err(input)?;
    let report = jfw::sseq::RunReport::from_json_str(&text).map_err(input)?;
    let page = a.page.unwrap_or(report.final_page);
    let out = match a.format {
        ChartFormat::Svg => chart_svg(&report, page).map_err(input)?,
        ChartFormat::Text => chart_text(&report, page).map_err(input)?,
    };
    emit(&a.out, &out)
}
