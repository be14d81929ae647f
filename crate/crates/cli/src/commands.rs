use std::fs;
use std::path::{Path, PathBuf};

use nullrec::algebra::{
    compound_block_moment, compound_block_moment_exact, embedded_transition, enumerate_block_moments,
    generalized_autocov, sigma2_from_series, AtomKernels, ChainFile, FiniteMarkovModel, Start,
};
use nullrec::algebra::moments::{block_mean_variance_with, block_moment_with};
use nullrec::estimator::{local_bandwidth, nw_estimate_in, studentize, KernelSpec, Window};
use nullrec::io::{self, real};
use nullrec::montecarlo::{run_clt, trend_report, ExperimentConfig};
use nullrec::processes::{generate, ProcessSpec};
use nullrec::split::{gaussian_rw_atom, regeneration_stats, simulate_split, SplitProcess};
use serde_json::{json, Value};

use crate::failure::Failure;
use crate::{AutocovArgs, CltArgs, Common, EmbeddedArgs, EstimateArgs, MomentsArgs, SimulateArgs};

/// Files and metadata held in memory until every computation has succeeded.
struct Output {
    files: Vec<(String, Vec<u8>)>,
    metadata: Value,
}

impl Output {
    fn new(command: &str, config: Value) -> Self {
        let metadata = json!({ "command": command, "version": nullrec::VERSION, "config": config });
        Self { files: Vec::new(), metadata }
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| Failure::io(name, e))?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn set(&mut self, key: &str, value: Value) {
        self.metadata[key] = value;
    }

    fn commit(mut self, dir: Option<&Path>) -> Result<(), Failure> {
        let Some(dir) = dir else { return Ok(()) };
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir.display(), e))?;
        let outputs: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        self.metadata["outputs"] = json!(outputs);
        let meta = serde_json::to_vec_pretty(&self.metadata).expect("metadata serializes");
        self.files.push(("metadata.json".into(), meta));
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Failure::io(path.display(), e))?;
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_chain(path: &Path) -> Result<FiniteMarkovModel, Failure> {
    let file: ChainFile = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(file.into_model()?)
}

fn load_spec(path: &Path) -> Result<ProcessSpec, Failure> {
    let value: Value = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(ProcessSpec::from_value(value)?)
}

fn parse_reals(what: &str, text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::Config(format!("{what}: `{v}`: {e}"))))
        .collect()
}

fn parse_start(text: &str) -> Result<Start, Failure> {
    match text {
        "nu" => Ok(Start::Nu),
        s => s
            .parse()
            .map(Start::State)
            .map_err(|_| Failure::Config(format!("start must be `nu` or a state index, got `{s}`"))),
    }
}

fn parse_kernel(text: &str) -> Result<KernelSpec, Failure> {
    let kernel = match text.split_once(':') {
        None if text == "epanechnikov" => KernelSpec::Epanechnikov,
        Some(("gaussian", c)) => KernelSpec::GaussianTruncated {
            c: c.parse().map_err(|e| Failure::Config(format!("kernel constant `{c}`: {e}")))?,
        },
        _ => return Err(Failure::Config(format!("unknown kernel `{text}`"))),
    };
    kernel.validate()?;
    Ok(kernel)
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("grid must be `lo:hi:count`, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, count] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let count: usize = count.parse().map_err(|_| bad())?;
    if count == 0 || !(lo.is_finite() && hi.is_finite()) || (count > 1 && hi <= lo) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

fn common_json(c: &Common) -> Value {
    json!({ "out": c.out, "seed": c.seed, "tol": c.tol })
}

fn path_json(p: &Option<PathBuf>) -> Value {
    json!(p.as_ref().map(|p| p.display().to_string()))
}

fn require_out(c: &Common) -> Result<&Path, Failure> {
    c.out.as_deref().ok_or_else(|| Failure::Config("--out is required for this command".into()))
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let out_dir = require_out(&a.common)?;
    let seed = a.common.seed.unwrap_or(0);
    let mut config = json!({
        "spec": path_json(&a.spec), "chain": path_json(&a.chain), "chain_w": path_json(&a.chain_w),
        "halfwidth": a.halfwidth, "n": a.n, "common": common_json(&a.common),
    });
    let mut out;
    if let Some(path) = &a.spec {
        let spec = load_spec(path)?;
        config["process"] = json!(spec);
        out = Output::new("simulate", config);
        let data = generate(&spec, a.n, seed)?;
        out.csv("dataset.csv", |b| io::write_dataset(b, &data))?;
        if let Some(hw) = a.halfwidth {
            let atom = gaussian_rw_atom(hw)?;
            let traj = simulate_split(&SplitProcess::System { spec, atom }, a.n, seed)?;
            out.set("regenerations", json!(regeneration_stats(&traj).count));
            out.csv("trajectory.csv", |b| io::write_trajectory(b, &traj))?;
        }
    } else {
        let x = load_chain(a.chain.as_deref().expect("clap requires chain"))?;
        let process = match &a.chain_w {
            Some(p) => SplitProcess::FiniteProduct { x, w: load_chain(p)? },
            None => SplitProcess::Finite(x),
        };
        out = Output::new("simulate", config);
        let traj = simulate_split(&process, a.n, seed)?;
        out.set("regenerations", json!(regeneration_stats(&traj).count));
        out.csv("trajectory.csv", |b| io::write_trajectory(b, &traj))?;
    }
    out.set("seeds", json!({ "seed": seed }));
    out.commit(Some(out_dir))
}

pub fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let out_dir = require_out(&a.common)?;
    let spec = load_spec(&a.spec)?;
    let grid = parse_grid(&a.grid)?;
    let kernel = parse_kernel(&a.kernel)?;
    let seed = a.common.seed.unwrap_or(0);
    let data = generate(&spec, a.n, seed)?;
    let mut rows = Vec::new();
    let mut empty = Vec::new();
    for &x_eval in &grid {
        let window = Window::around(x_eval);
        let h = match (a.h, a.c0) {
            (Some(h), _) => Ok(h),
            (None, Some(c0)) => local_bandwidth(&data.x, x_eval, window, c0, kernel),
            (None, None) => unreachable!("clap requires h or c0"),
        };
        let report = h.and_then(|h| nw_estimate_in(&data.x, &data.z, x_eval, h, kernel, window));
        match report {
            Ok(mut r) => {
                r.studentized = Some(studentize(&r, kernel, spec.f.eval(x_eval)));
                rows.push(r);
            }
            Err(nullrec::Error::EmptyNeighborhood { .. } | nullrec::Error::EmptyOccupation) => empty.push(x_eval),
            Err(e) => return Err(e.into()),
        }
    }
    let config = json!({
        "spec": a.spec.display().to_string(), "process": spec, "n": a.n, "grid": a.grid,
        "h": a.h, "c0": a.c0, "kernel": kernel, "common": common_json(&a.common),
    });
    let mut out = Output::new("estimate", config);
    out.set("seeds", json!({ "seed": seed }));
    out.set("empty_points", json!(empty));
    out.csv("curve.csv", |b| io::write_curve(b, &rows))?;
    out.commit(Some(out_dir))
}

pub fn clt(a: CltArgs) -> Result<(), Failure> {
    let out_dir = require_out(&a.common)?;
    let text = read(&a.protocol)?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", a.protocol.display())))?;
    if let Some(seed) = a.common.seed {
        config.protocol.base_seed = seed;
    }
    let protocols = config.expand();
    for p in &protocols {
        p.validate()?;
    }
    let results = protocols.iter().map(run_clt).collect::<Result<Vec<_>, _>>()?;
    let mut out = Output::new(
        "clt",
        json!({ "protocol": a.protocol.display().to_string(), "experiment": config, "common": common_json(&a.common) }),
    );
    out.set("seeds", json!({ "base_seed": config.protocol.base_seed, "derivation": "splitmix64" }));
    let counts: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "size": r.size(), "attempted": r.attempted, "admitted": r.admitted,
                "rejected_empty": r.rejected_empty, "rejected_guard": r.rejected_guard,
            })
        })
        .collect();
    out.set("runs", json!(counts));
    for r in &results {
        out.csv(&format!("replications_{}.csv", r.size()), |b| io::write_replications(b, &r.records))?;
    }
    out.csv("summary.csv", |b| io::write_summary(b, &results))?;
    if results.len() >= 2 {
        let trend = trend_report(&results)?;
        out.set("trend", json!(trend));
    }
    for r in &results {
        println!(
            "{} size={} admitted={} ks={:.4} mean={:.4} sd={:.4}",
            r.protocol.id,
            r.size(),
            r.admitted,
            r.ks_distance,
            r.mean,
            r.sd
        );
    }
    out.commit(Some(out_dir))
}

pub fn moments_check(a: MomentsArgs) -> Result<(), Failure> {
    let model = load_chain(&a.chain)?;
    let g = parse_reals("g", &a.g)?;
    let start = parse_start(&a.start)?;
    if a.m == 0 {
        return Err(Failure::Config("--m must be at least 1".into()));
    }
    let kernels = AtomKernels::with_tol(&model, a.common.tol)?;
    let algebraic = (1..=a.m)
        .map(|m| block_moment_with(&kernels, &g, m, start))
        .collect::<Result<Vec<_>, _>>()?;
    let enumerated = enumerate_block_moments(&model, &g, a.m, start, a.depth)?;
    let mut text = String::from("m,algebraic,enumeration,abs_diff,enumeration_tail_bound\n");
    for m in 0..a.m {
        let (x, y) = (algebraic[m], enumerated.moments[m]);
        text += &format!(
            "{},{},{},{},{}\n",
            m + 1,
            real(x),
            real(y),
            real((x - y).abs()),
            real(enumerated.tail_bounds[m])
        );
    }
    print!("{text}");
    let config = json!({
        "chain": a.chain.display().to_string(), "g": g, "m": a.m, "start": a.start,
        "depth": a.depth, "common": common_json(&a.common),
    });
    let mut out = Output::new("moments-check", config);
    out.files.push(("moments.csv".into(), text.into_bytes()));
    out.commit(a.common.out.as_deref())
}

pub fn autocov(a: AutocovArgs) -> Result<(), Failure> {
    let model = load_chain(&a.chain)?;
    let g = parse_reals("g", &a.g)?;
    let f = match &a.f {
        Some(f) => parse_reals("f", f)?,
        None => g.clone(),
    };
    let lags = a.lags as i64;
    let mut text = String::from("ell,gamma\n");
    for ell in -lags..=lags {
        text += &format!("{ell},{}\n", real(generalized_autocov(&model, &g, &f, ell)?));
    }
    let series = sigma2_from_series(&model, &g, a.truncation, a.common.tol)?;
    let kernels = AtomKernels::with_tol(&model, a.common.tol)?;
    let (mu, block_var) = block_mean_variance_with(&kernels, &g)?;
    print!("{text}");
    println!(
        "sigma2_series={} tail_bound={} block_mean={} block_variance={}",
        real(series.value),
        real(series.tail_bound),
        real(mu),
        real(block_var)
    );
    let config = json!({
        "chain": a.chain.display().to_string(), "g": g, "f": f, "lags": a.lags,
        "truncation": a.truncation, "common": common_json(&a.common),
    });
    let mut out = Output::new("autocov", config);
    out.set(
        "summary",
        json!({ "sigma2_series": series.value, "tail_bound": series.tail_bound, "terms": series.terms,
                "block_mean": mu, "block_variance": block_var }),
    );
    out.files.push(("autocov.csv".into(), text.into_bytes()));
    out.commit(a.common.out.as_deref())
}

pub fn embedded(a: EmbeddedArgs) -> Result<(), Failure> {
    let x = load_chain(&a.chain)?;
    let w = load_chain(&a.chain_w)?;
    let chain = embedded_transition(&x, &w, a.common.tol)?;
    let p = &chain.p_tilde.entries;
    let mut text = String::from("from");
    for s in w.states() {
        text += &format!(",{s}");
    }
    text.push('\n');
    for (i, s) in w.states().iter().enumerate() {
        text += s;
        for j in 0..p.ncols() {
            text += &format!(",{}", real(p[(i, j)]));
        }
        text.push('\n');
    }
    print!("{text}");
    let config = json!({
        "chain": a.chain.display().to_string(), "chain_w": a.chain_w.display().to_string(),
        "gx": a.gx, "gw": a.gw, "m": a.m, "compound_tol": a.compound_tol, "common": common_json(&a.common),
    });
    let mut out = Output::new("embedded", config);
    out.set("embedded", json!({ "terms": chain.coefficients.len(), "tail_mass": chain.tail_mass }));
    out.files.push(("embedded.csv".into(), text.into_bytes()));
    if let (Some(gx), Some(gw)) = (&a.gx, &a.gw) {
        let gx = parse_reals("gx", gx)?;
        let gw = parse_reals("gw", gw)?;
        let mut rows = String::from("m,series,tail_bound,exact\n");
        for m in 1..=a.m {
            let series = compound_block_moment(&x, &w, &gx, &gw, m, a.compound_tol)?;
            let exact = compound_block_moment_exact(&x, &w, &gx, &gw, m)?;
            rows += &format!("{m},{},{},{}\n", real(series.value), real(series.tail_bound), real(exact));
        }
        print!("{rows}");
        out.files.push(("compound.csv".into(), rows.into_bytes()));
    }
    out.commit(a.common.out.as_deref())
}
