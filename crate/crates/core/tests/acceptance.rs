//! Acceptance suite: one `[PASS]` or `[FAIL]` line per criterion, followed
//! by the measured values. Exits non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use abgraph::analytic::DistSpec;
use abgraph::areas::{
    area_samples, estimate_areas_2d, exact_areas_1d, Normalization, OrderSelector,
};
use abgraph::dataio::{load_stations, LoadOptions, FIXTURE_BBOX};
use abgraph::experiment::{
    compare, degrees_one_replicate, run_experiment, ExperimentConfig, ExperimentResult, Layout,
};
use abgraph::fitting::{pipeline_samples, table1_pipeline, AkTable, PipelineConfig, BUILTIN_AK};
use abgraph::geometry::{gen_poisson, Boundary, Domain, HexGridSpec};
use abgraph::knn::{NnIndex, ShadowConfig};
use abgraph::special::gamma_p;
use abgraph::stats::{ks_one_sample, ks_two_sample, ks_two_sample_pvalue};

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            details: Vec::new(),
        }
    }

    /// Records one check and its measured value.
    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        self.details
            .push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
    }
}

fn fig5_hex(replicates: usize) -> ExperimentConfig {
    ExperimentConfig {
        layout: Layout::HexGrid {
            spec: HexGridSpec::count(22_785),
        },
        domain: Domain::rect(3000.0, 3000.0, Boundary::Torus).unwrap(),
        lambda_a: 0.1,
        k_values: vec![1, 5, 50],
        replicates,
        seed: 7,
        shadow: None,
    }
}

fn fig6_poisson(replicates: usize) -> ExperimentConfig {
    ExperimentConfig {
        layout: Layout::Poisson { density: 0.01 },
        ..fig5_hex(replicates)
    }
}

fn total_variations(res: &ExperimentResult, law: impl Fn(u32) -> DistSpec) -> Vec<(u32, f64)> {
    res.per_k
        .iter()
        .map(|r| (r.k, compare(&r.histogram, &law(r.k)).unwrap().tv))
        .collect()
}

fn criterion1() -> Outcome {
    let mut o = Outcome::new();
    let cfg = PipelineConfig::default();
    let fits = table1_pipeline(&cfg).unwrap();
    for (f, &(k, paper)) in fits.iter().zip(BUILTIN_AK.iter()) {
        assert_eq!(f.k, k);
        let r = common::rel(f.a_k, paper);
        o.check(
            r < 0.05 && f.sample_size >= 1_000_000,
            format!(
                "k={k}: a_k = {:.3} vs {paper} ({:+.2}%), {} samples, chi2 = {:.1}",
                f.a_k,
                100.0 * (f.a_k - paper) / paper,
                f.sample_size,
                f.chi2
            ),
        );
    }
    o
}

fn criterion2() -> Outcome {
    let mut o = Outcome::new();
    let lambda_b = 0.5;
    let domain = Domain::line(24_000.0, Boundary::Torus).unwrap();
    let table = |seed: u64| {
        let ps = gen_poisson(&domain, lambda_b, seed).unwrap();
        exact_areas_1d(&ps, 3).unwrap()
    };
    let pool = |seeds: std::ops::Range<u64>, j: usize| -> Vec<f64> {
        seeds
            .flat_map(|s| area_samples(&table(s), OrderSelector::Exact(j), Normalization::Raw).unwrap())
            .collect()
    };
    let erlang = |x: f64| gamma_p(2.0, 2.0 * lambda_b * x.max(0.0));
    for j in [1usize, 2, 3] {
        let s = pool(0..10, j);
        let d = ks_one_sample(&s, erlang);
        o.check(
            d < 0.01 && s.len() >= 100_000,
            format!("X_{j} vs Erlang(2, 2 lambda_B): KS = {d:.5} at n = {}", s.len()),
        );
    }
    // Independent layouts for the two orders, so the test's level is exact.
    let x1 = pool(100..110, 1);
    let x3 = pool(200..210, 3);
    let d = ks_two_sample(&x1, &x3);
    let p = ks_two_sample_pvalue(d, x1.len(), x3.len());
    o.check(
        p > 0.01,
        format!("X_1 vs X_3 two-sample KS = {d:.5}, p = {p:.3} (n = {}, {})", x1.len(), x3.len()),
    );
    o
}

fn criterion3() -> Outcome {
    let mut o = Outcome::new();
    let ak = AkTable::builtin();
    let mut worst = [(0.0f64, String::new()), (0.0, String::new())];
    for k in [1u32, 2, 5, 50] {
        for lambda in [0.1, 1.0, 10.0] {
            // Raw units: lambda_B = 1 so that lambda = lambda_A.
            let cpe = DistSpec::cpe(lambda, 1.0, k).unwrap();
            let shape = ak.shape_for(k).unwrap();
            let cpg = DistSpec::cpg(lambda, k, shape).unwrap();
            for n in 0..=200u64 {
                let e = (cpe.pmf(n).unwrap()
                    - common::poisson_gamma_mixture(n, lambda, 2.0 * k as f64, 2.0))
                .abs();
                if e > worst[0].0 {
                    worst[0] = (e, format!("k={k} lambda={lambda} n={n}"));
                }
                let g = (cpg.pmf(n).unwrap()
                    - common::poisson_gamma_mixture(n, lambda, shape, shape / k as f64))
                .abs();
                if g > worst[1].0 {
                    worst[1] = (g, format!("k={k} lambda={lambda} n={n}"));
                }
            }
        }
    }
    for (name, (e, at)) in ["cpe", "cpg"].iter().zip(&worst) {
        o.check(*e < 1e-8, format!("{name}: max |pmf - quadrature| = {e:.2e} ({at})"));
    }
    o
}

fn criterion4(o: &mut Outcome, ak: &AkTable) -> ExperimentResult {
    let target = 0.01;
    let pilot_r = 2;
    let pilot = run_experiment(&fig5_hex(pilot_r)).unwrap();
    let law = |k| fig5_hex(1).reference_law(k, ak).unwrap();
    let worst = total_variations(&pilot, law)
        .into_iter()
        .map(|(_, tv)| tv)
        .fold(0.0, f64::max);
    // Sampling noise in TV falls like 1/sqrt(R).
    let r = ((pilot_r as f64 * (worst / target).powi(2)).ceil() as usize).clamp(pilot_r, 24);
    o.details.push(format!("     pilot R = {pilot_r}: worst TV {worst:.4}; using R = {r}"));
    let res = run_experiment(&fig5_hex(r)).unwrap();
    for (k, tv) in total_variations(&res, law) {
        o.check(tv < 0.02, format!("k={k}: TV to Poisson({:.3}) = {tv:.4}", law(k).summary().unwrap().mean));
    }
    res
}

fn criterion5(o: &mut Outcome, ak: &AkTable) -> ExperimentResult {
    let cfg = fig6_poisson(4);
    let res = run_experiment(&cfg).unwrap();
    o.details.push(format!("     R = {}, B-points per replicate {:?}", cfg.replicates, res.stations));
    for r in &res.per_k {
        if r.k <= 5 {
            let law = cfg.reference_law(r.k, ak).unwrap();
            let tv = compare(&r.histogram, &law).unwrap().tv;
            o.check(tv < 0.03, format!("k={}: TV to cpg(a = {}) = {tv:.4}", r.k, ak.shape_for(r.k).unwrap()));
        } else {
            let law = DistSpec::cpe(0.1, 0.01, r.k).unwrap();
            let tv = compare(&r.histogram, &law).unwrap().tv;
            o.check(tv < 0.05, format!("k={}: TV to cpe = {tv:.4}", r.k));
        }
    }
    res
}

fn criterion6(hex: &ExperimentResult, poi: &ExperimentResult, ak: &AkTable) -> Outcome {
    let mut o = Outcome::new();
    for (name, res) in [("hex", hex), ("poisson2d", poi)] {
        for r in &res.per_k {
            let law = res.config.reference_law(r.k, ak).unwrap();
            let cv = law.summary().unwrap().cv;
            let gap = common::rel(r.stats.cv, cv);
            o.check(
                gap < 0.05,
                format!(
                    "{name} k={}: c_V = {:.4} +- {:.4} vs {cv:.4} ({:+.2}%)",
                    r.k,
                    r.stats.cv,
                    r.stats.cv_se,
                    100.0 * (r.stats.cv - cv) / cv
                ),
            );
        }
    }
    let hex_law = |k| fig5_hex(1).reference_law(k, ak).unwrap();
    let families: [(&str, Box<dyn Fn(u32) -> DistSpec>); 3] = [
        ("cv1 hex", Box::new(hex_law)),
        ("cv2 cpe", Box::new(|k| DistSpec::cpe(0.1, 0.01, k).unwrap())),
        ("cv3 cpg", Box::new(|k| DistSpec::cpg(10.0, k, ak.shape_for(k).unwrap()).unwrap())),
    ];
    for (name, law) in families {
        let cv: Vec<f64> = (1..=50).map(|k| law(k).summary().unwrap().cv).collect();
        let dec = cv.windows(2).all(|w| w[1] < w[0]);
        o.check(dec, format!("{name}: strictly decreasing over k = 1..50 ({:.4} -> {:.4})", cv[0], cv[49]));
    }
    o
}

fn criterion7(ak: &AkTable) -> Outcome {
    let mut o = Outcome::new();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/enschede_synthetic.csv");
    let stations = load_stations(&path, &LoadOptions::new(FIXTURE_BBOX)).unwrap().points;
    let n = stations.len();
    let a_tot = stations.domain().total_measure();
    let run = |sigma: f64| {
        let cfg = ExperimentConfig {
            domain: *stations.domain(),
            layout: Layout::Stations {
                points: stations.clone(),
            },
            lambda_a: 10.0 * n as f64 / a_tot,
            k_values: vec![1, 5, 50],
            replicates: 100,
            seed: 3,
            shadow: Some(ShadowConfig::new(sigma, 17).unwrap()),
        };
        let res = run_experiment(&cfg).unwrap();
        total_variations(&res, |k| cfg.reference_law(k, ak).unwrap())
    };
    o.details.push(format!("     {n} stations, {:.0} x {:.0} m, R = 100", stations.domain().extent()[0], stations.domain().extent()[1]));
    let (weak, strong) = (run(0.1), run(1.0));
    for ((k, tw), (_, ts)) in weak.iter().zip(&strong) {
        o.check(ts < tw, format!("k={k}: TV sigma=1 {ts:.4} < sigma=0.1 {tw:.4}"));
    }
    o
}

fn criterion8() -> Outcome {
    let mut o = Outcome::new();
    let torus = Domain::rect(40.0, 25.0, Boundary::Torus).unwrap();
    let clipped = torus.with_boundary(Boundary::Clipped);
    for domain in [torus, clipped] {
        let ps = gen_poisson(&domain, 0.5, 9).unwrap();
        let index = NnIndex::new(&ps).unwrap();
        let t = estimate_areas_2d(&ps, 6, 0.05, &index).unwrap();
        let cells = (t.resolution(), t.cell_area().unwrap());
        let n_cells = (domain.total_measure() / cells.1).round() as u64;
        let exact = (1..=6).all(|j| t.order_count(j) == Some(n_cells));
        let worst = (1..=6).map(|j| common::rel(t.order_total(j), domain.total_measure())).fold(0.0, f64::max);
        o.check(
            exact && worst < 1e-12,
            format!("lattice areas on {:?}: every order holds all {n_cells} cells, |sum - A_tot| / A_tot = {worst:.1e}", domain.boundary()),
        );
    }
    let line = Domain::line(5000.0, Boundary::Torus).unwrap();
    let worst = (0..5)
        .map(|s| {
            let t = exact_areas_1d(&gen_poisson(&line, 0.3, s).unwrap(), 8).unwrap();
            (1..=8).map(|j| common::rel(t.order_total(j), 5000.0)).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    o.check(worst < 1e-9, format!("exact 1D areas: |sum - L| / L = {worst:.1e}"));

    let mut cfg = fig6_poisson(3);
    cfg.domain = Domain::rect(600.0, 400.0, Boundary::Torus).unwrap();
    cfg.k_values = vec![1, 2, 5, 13];
    let mut conserved = true;
    for shadow in [None, Some(ShadowConfig::new(1.0, 5).unwrap())] {
        cfg.shadow = shadow;
        for r in 0..cfg.replicates {
            let b = cfg.b_points(r).unwrap();
            let d = degrees_one_replicate(&b, &cfg, r).unwrap();
            for (i, &k) in d.k_values.iter().enumerate() {
                let edges: u64 = d.degrees[i].iter().map(|&x| x as u64).sum();
                conserved &= edges == k as u64 * d.n_a;
            }
        }
    }
    o.check(conserved, "sum of degrees = k |A| for every replicate, k and shadowing".into());

    let in_pool = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let res = run_experiment(&cfg).unwrap();
            let ps = gen_poisson(&torus, 0.5, 4).unwrap();
            let idx = NnIndex::new(&ps).unwrap();
            let t = estimate_areas_2d(&ps, 4, 0.05, &idx).unwrap();
            let (s, _) = pipeline_samples(&PipelineConfig {
                iterations: 64,
                ..PipelineConfig::default()
            })
            .unwrap();
            (res, t, s)
        })
    };
    let (a, b) = (in_pool(1), in_pool(4));
    o.check(a.0 == b.0, "experiment result identical on 1 and 4 threads".into());
    o.check(a.1 == b.1, "area table identical on 1 and 4 threads".into());
    o.check(a.2 == b.2, "pipeline samples identical on 1 and 4 threads".into());
    o
}

fn main() {
    let ak = AkTable::builtin();
    let mut failed = 0;
    let mut report = |n: usize, title: &str, start: Instant, o: Outcome| {
        println!(
            "[{}] criterion {n}: {title} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        for d in &o.details {
            println!("       {d}");
        }
        if !o.pass {
            failed += 1;
        }
    };

    let t = Instant::now();
    report(1, "Table 1 shapes from the area pipeline", t, criterion1());
    let t = Instant::now();
    report(2, "1D Poisson areas are Erlang(2, 2 lambda_B) at every order", t, criterion2());
    let t = Instant::now();
    report(3, "compound laws equal their mixing integrals", t, criterion3());
    let t = Instant::now();
    let mut o4 = Outcome::new();
    let hex = criterion4(&mut o4, &ak);
    report(4, "hexagonal degree law", t, o4);
    let t = Instant::now();
    let mut o5 = Outcome::new();
    let poi = criterion5(&mut o5, &ak);
    report(5, "2D Poisson degree law", t, o5);
    let t = Instant::now();
    report(6, "coefficient of variation curves", t, criterion6(&hex, &poi, &ak));
    let t = Instant::now();
    report(7, "strong shadowing moves degrees towards the Poisson mixture", t, criterion7(&ak));
    let t = Instant::now();
    report(8, "conservation and thread-count determinism", t, criterion8());

    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
