use std::collections::BTreeMap;
use std::path::Path;

use covlab::boman::{
    boman_ratio, contracted_boman_ratio, estimate_boman_constant, find_contraction_thresholds, generalized_boman_ratio,
    overlap_norm, reverse_boman_ratio, BallFamily, RatioReport, Realization, SearchConfig, SearchMode,
};
use covlab::maximal::{maximal_function, maximal_with_argmax, OperatorSpec, TestFunction, Variant};
use covlab::normlab::{doubling_constant, strong_norm_lower_bound, weak_norm_lower_bound, NormSearch, Strategy};
use covlab::oracle::{
    brute_maximal, compare_fixtures, exact_overlap, generate_fixtures, random_family, theorem_consistency_suite, Fixtures, OracleBudget,
};
use covlab::space::{AtomicSpace, Ball, Closure, MetricMeasureSpace, SpaceSpec};
use covlab::rng;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::output::{digest, Outcome, Row};
use crate::{
    BomanCmd, Cli, ClosureArg, Command, Failure, MaximalCmd, ModeArg, NormArgs, NormCmd, OperatorArgs, OracleCmd, PaperCmd,
    RatioArgs, SpaceCmd, StrategyArg, VariantArg,
};

#[derive(Default)]
struct Inputs {
    digests: BTreeMap<String, String>,
}

impl Inputs {
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        self.digests.insert(path.display().to_string(), digest(&bytes));
        String::from_utf8(bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    fn json<T: DeserializeOwned>(&mut self, path: &Path) -> Result<T, Failure> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
    }

    fn space(&mut self, path: &Path) -> Result<MetricMeasureSpace, Failure> {
        let spec: SpaceSpec = self.json(path)?;
        Ok(spec.build()?)
    }

    fn atomic(&mut self, path: &Path) -> Result<AtomicSpace, Failure> {
        Ok(self.space(path)?.as_atomic()?.clone())
    }
}

fn closure(c: ClosureArg) -> Closure {
    match c {
        ClosureArg::Closed => Closure::Closed,
        ClosureArg::Open => Closure::Open,
    }
}

fn operator(args: &OperatorArgs) -> Result<OperatorSpec, Failure> {
    let base = match args.variant {
        VariantArg::Centered => OperatorSpec::centered(),
        VariantArg::Uncentered => OperatorSpec::uncentered(),
    };
    let mut spec = base.with_r_min(args.rmin).with_expansion(args.expansion);
    spec.closure = closure(args.closure);
    spec.validate()?;
    Ok(spec)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

struct Draft {
    name: &'static str,
    anchor: &'static str,
    seed: u64,
    result: Value,
    rows: Vec<Row>,
    failure: Option<String>,
}

impl Draft {
    fn new(name: &'static str, anchor: &'static str, result: Value, rows: Vec<Row>) -> Self {
        Draft { name, anchor, seed: 0, result, rows, failure: None }
    }

    fn seeded(self, seed: u64) -> Self {
        Draft { seed, ..self }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let mut inputs = Inputs::default();
    let draft = dispatch(&cli.command, &mut inputs)?;
    Ok(Outcome {
        name: draft.name.to_string(),
        anchor: draft.anchor,
        seed: draft.seed,
        inputs: inputs.digests,
        result: draft.result,
        rows: draft.rows,
        failure: draft.failure,
    })
}

fn ratio_rows(r: &RatioReport) -> Vec<Row> {
    vec![Row::value(0, "lhs", r.lhs), Row::value(0, "rhs", r.rhs), Row::value(0, "ratio", r.ratio)]
}

fn ratio(args: &RatioArgs, inputs: &mut Inputs, name: &'static str, anchor: &'static str, f: fn(&MetricMeasureSpace, &BallFamily, f64) -> covlab::Result<RatioReport>) -> Result<Draft, Failure> {
    let space = inputs.space(&args.space)?;
    let family: BallFamily = inputs.json(&args.family)?;
    let report = f(&space, &family, args.p)?;
    Ok(Draft::new(name, anchor, to_value(&report), ratio_rows(&report)))
}

fn dispatch(command: &Command, inputs: &mut Inputs) -> Result<Draft, Failure> {
    match command {
        Command::Space(SpaceCmd::Build { spec }) => {
            let space = inputs.space(spec)?;
            let normalized = SpaceSpec::from_space(&space);
            let (atoms, segments) = match &space {
                MetricMeasureSpace::Atomic(s) => (s.len(), 0),
                MetricMeasureSpace::Segments(s) => (0, s.segments().len()),
            };
            let rows = vec![
                Row::value(0, "atoms", atoms as f64),
                Row::value(0, "segments", segments as f64),
                Row::value(0, "total_mass", space.total_mass()),
            ];
            let result = json!({ "space": normalized, "atoms": atoms, "segments": segments, "total_mass": space.total_mass() });
            Ok(Draft::new("space build", "metric measure space", result, rows))
        }
        Command::Maximal(MaximalCmd::Eval { space, function, operator: op }) => {
            let space = inputs.atomic(space)?;
            let g: TestFunction = inputs.json(function)?;
            let g = TestFunction::new(g.0)?;
            let spec = operator(op)?;
            let out = maximal_with_argmax(&space, &g, &spec)?;
            let rows = out.values.iter().enumerate().map(|(i, v)| Row::value(i, "maximal", *v)).collect();
            let anchor = match spec.variant {
                Variant::Centered => "centered maximal operator",
                Variant::Uncentered => "uncentered maximal operator",
            };
            Ok(Draft::new("maximal eval", anchor, json!({ "operator": spec, "output": out }), rows))
        }
        Command::Boman(BomanCmd::Ratio(a)) => ratio(a, inputs, "boman ratio", "Boman covering ratio: dilated over base", boman_ratio),
        Command::Boman(BomanCmd::Reverse(a)) => ratio(a, inputs, "boman reverse", "reverse Boman ratio: base over dilated", reverse_boman_ratio),
        Command::Boman(BomanCmd::Generalized(a)) => {
            ratio(a, inputs, "boman generalized", "generalized Boman ratio: balls over subsets", generalized_boman_ratio)
        }
        Command::Boman(BomanCmd::Contracted(a)) => {
            ratio(a, inputs, "boman contracted", "weak Boman ratio: base over contracted", contracted_boman_ratio)
        }
        Command::Boman(BomanCmd::Search { space, p, mode, iters, seed, families, restarts, max_size, t_max, candidates }) => {
            let space = inputs.space(space)?;
            let candidates: Option<Vec<Ball>> = candidates.as_deref().map(|c| inputs.json(c)).transpose()?;
            let mode = match mode {
                ModeArg::Expand => SearchMode::Expand,
                ModeArg::Generalized => SearchMode::Generalized,
                ModeArg::WeakContract => SearchMode::WeakContract,
            };
            let config = SearchConfig {
                families: *families,
                max_family_size: *max_size,
                iterations: *iters,
                restarts: *restarts,
                t_max: *t_max,
                seed: *seed,
                candidates,
            };
            let report = estimate_boman_constant(&space, *p, mode, &config)?;
            let rows = vec![Row::value(0, report.quantity.clone(), report.value)];
            Ok(Draft::new("boman search", "best Boman constant, lower bound", to_value(&report), rows).seeded(*seed))
        }
        Command::Boman(BomanCmd::Thresholds { space, balls, margin }) => {
            let space = inputs.atomic(space)?;
            let balls: Vec<Ball> = inputs.json(balls)?;
            let found = find_contraction_thresholds(&space, &balls, *margin)?;
            let rows = found
                .iter()
                .enumerate()
                .map(|(i, t)| Row { x: i.to_string(), quantity: "threshold".into(), value: t.threshold, lower: None, upper: None })
                .collect();
            Ok(Draft::new("boman thresholds", "contraction thresholds below measure doubling", to_value(&found), rows))
        }
        Command::Doubling(args) => {
            let space = inputs.atomic(&args.space)?;
            let subset: Option<Vec<usize>> = args.subset.as_deref().map(|p| inputs.json(p)).transpose()?;
            let report = doubling_constant(&space, args.rmin, subset.as_deref(), closure(args.closure))?;
            let rows = vec![Row::value(args.rmin, "doubling", report.constant)];
            Ok(Draft::new("doubling", "doubling constant", to_value(&report), rows))
        }
        Command::Norm(cmd) => {
            let (args, weak): (&NormArgs, bool) = match cmd {
                NormCmd::Strong(a) => (a, false),
                NormCmd::Weak(a) => (a, true),
            };
            let space = inputs.atomic(&args.space)?;
            let spec = operator(&args.operator)?;
            let candidates: Vec<Vec<usize>> = args.candidates.as_deref().map(|c| inputs.json(c)).transpose()?.unwrap_or_default();
            let strategy = match args.strategy {
                StrategyArg::IndicatorSweep => Strategy::IndicatorSweep,
                StrategyArg::Random => Strategy::Random,
                StrategyArg::Ascent => Strategy::Ascent,
            };
            let config = NormSearch {
                strategy,
                budget: args.budget,
                restarts: args.restarts,
                iterations: args.iterations,
                seed: args.seed,
                candidates,
            };
            let (report, name, anchor) = if weak {
                (weak_norm_lower_bound(&space, &spec, args.p, &config)?, "norm weak", "weak-type operator norm, lower bound")
            } else {
                (strong_norm_lower_bound(&space, &spec, args.p, &config)?, "norm strong", "strong-type operator norm, lower bound")
            };
            let rows = vec![Row::value(args.p, report.quantity.clone(), report.value)];
            Ok(Draft::new(name, anchor, to_value(&report), rows).seeded(args.seed))
        }
        Command::Oracle(OracleCmd::Compare { space, trials, seed }) => oracle_compare(inputs.atomic(space)?, *trials, *seed),
        Command::Oracle(OracleCmd::Consistency { space, p }) => {
            let space = inputs.atomic(space)?;
            let report = theorem_consistency_suite(&space, *p, &OracleBudget::default())?;
            let mut rows = vec![
                Row::bracket("weak", "weak_centered", report.weak_centered.lower, report.weak_centered.lower, report.weak_centered.upper),
                Row::bracket("q", "generalized_boman", report.generalized_boman_q.lower, report.generalized_boman_q.lower, report.generalized_boman_q.upper),
            ];
            for c in &report.interpolation {
                rows.push(Row::bracket(c.s, "generalized_boman", c.boman_s.lower, c.boman_s.lower, c.boman_s.upper));
                rows.push(Row::value(c.s, "interpolation_bound", c.bound));
            }
            let mut draft = Draft::new("oracle consistency", "weak type from generalized Boman; interpolation", to_value(&report), rows);
            if !report.passed() {
                draft.failure = Some(report.violations.join("; "));
            }
            Ok(draft)
        }
        Command::Oracle(OracleCmd::Fixtures { bless, path, seed }) => {
            if *bless {
                let fresh = generate_fixtures(*seed)?;
                let text = serde_json::to_string_pretty(&fresh).map_err(|e| Failure::Input(e.to_string()))? + "\n";
                std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
                let rows = fresh.values.iter().map(|(k, v)| Row::value(k, "fixture", *v)).collect();
                return Ok(Draft::new("oracle fixtures", "pinned oracle values", json!({ "blessed": true, "fixtures": fresh }), rows).seeded(*seed));
            }
            let stored: Fixtures = inputs.json(path)?;
            let fresh = generate_fixtures(stored.seed)?;
            let mut bad = compare_fixtures(&stored, &fresh, 1e-9);
            if stored.budget != fresh.budget {
                bad.push("budget differs".into());
            }
            let rows = fresh.values.iter().map(|(k, v)| Row::value(k, "fixture", *v)).collect();
            let mut draft = Draft::new("oracle fixtures", "pinned oracle values", json!({ "blessed": false, "mismatches": bad }), rows)
                .seeded(stored.seed);
            if !bad.is_empty() {
                draft.failure = Some(bad.join("; "));
            }
            Ok(draft)
        }
        Command::Paper(PaperCmd::Reproduce { id }) => {
            let run = crate::reproduce::run(*id)?;
            let rows = run
                .checks
                .iter()
                .map(|c| Row { x: c.x.clone(), quantity: c.quantity.clone(), value: Some(c.value), lower: c.lower, upper: c.upper })
                .collect();
            let failed: Vec<String> = run.checks.iter().filter(|c| !c.passed).map(|c| format!("{} at {}: {}", c.quantity, c.x, c.value)).collect();
            let mut draft = Draft::new(run.name, run.anchor, to_value(&run), rows);
            if !failed.is_empty() {
                draft.failure = Some(failed.join("; "));
            }
            Ok(draft)
        }
    }
}

fn oracle_specs() -> Vec<OperatorSpec> {
    let mut out = Vec::new();
    for base in [OperatorSpec::centered(), OperatorSpec::uncentered()] {
        for c in [Closure::Closed, Closure::Open] {
            for (r_min, t) in [(0.0, 1.0), (0.5, 1.0), (0.0, 2.0)] {
                let mut s = base.with_r_min(r_min).with_expansion(t);
                s.closure = c;
                out.push(s);
            }
        }
    }
    out
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn oracle_compare(space: AtomicSpace, trials: usize, seed: u64) -> Result<Draft, Failure> {
    let budget = OracleBudget::default();
    let mms: MetricMeasureSpace = space.clone().into();
    let mut worst_maximal: f64 = 0.0;
    let mut worst_overlap: f64 = 0.0;
    let mut comparisons = 0usize;
    for trial in 0..trials {
        let mut rng = rng::stream(seed, trial as u64);
        let g = TestFunction::new((0..space.len()).map(|_| if rng.gen_bool(0.3) { 0.0 } else { 3.0 * rng.gen::<f64>() }).collect())?;
        for spec in oracle_specs() {
            let fast = maximal_function(&space, &g, &spec)?;
            let slow = brute_maximal(&space, &g, &spec, &budget)?;
            for (a, b) in fast.values().iter().zip(slow.values()) {
                worst_maximal = worst_maximal.max(rel_diff(*a, *b));
            }
            comparisons += 1;
        }
        let family = random_family(&space, seed.wrapping_add(trial as u64), 1 + trial % 6, 8.0)?;
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            for r in [Realization::Base, Realization::Dilated] {
                let fast = overlap_norm(&mms, &family, r, p)?;
                let slow = exact_overlap(&mms, &family, r, p, &budget)?;
                worst_overlap = worst_overlap.max(rel_diff(fast, slow));
                comparisons += 1;
            }
        }
    }
    let agree = worst_maximal <= 1e-12 && worst_overlap <= 1e-12;
    let rows = vec![
        Row::value(trials, "max_relative_difference_maximal", worst_maximal),
        Row::value(trials, "max_relative_difference_overlap", worst_overlap),
    ];
    let result = json!({
        "trials": trials,
        "comparisons": comparisons,
        "max_relative_difference_maximal": worst_maximal,
        "max_relative_difference_overlap": worst_overlap,
        "agree": agree,
    });
    let mut draft = Draft::new("oracle compare", "fast paths against brute force", result, rows).seeded(seed);
    if !agree {
        draft.failure = Some(format!("fast and brute-force values differ: {worst_maximal:e}, {worst_overlap:e}"));
    }
    Ok(draft)
}
