//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Each check has its own oracle written here, independent of the engine.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use statrs::distribution::{Binomial, DiscreteCDF};

use attrlabel_core::agreement::{
    classify_pattern, fleiss_kappa, kappa_from, outcome_space_size, percentage_of_disagreement, PatternSignature,
    RatingMatrix,
};
use attrlabel_core::allocation::{build_plan, compute_quota, EligibleImage, EligibleIndex, FilterConfig, Fraction, PlanRequest};
use attrlabel_core::model::Split;

type Outcome = Result<String, String>;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn kappa_identity() -> Outcome {
    // (P, P_e, published kappa), all in percent.
    let rows = [
        ("age", 94.69, 90.90, 41.67),
        ("group", 94.62, 39.86, 91.06),
        ("means_of_transport", 94.96, 68.78, 83.86),
        ("sex", 76.25, 37.62, 61.92),
        ("skin", 73.54, 48.13, 48.98),
        ("vehicle_type", 90.97, 58.96, 78.00),
        ("colour", 70.31, 18.58, 63.54),
        ("car_type", 70.07, 31.21, 56.49),
    ];
    let mut worst: f64 = 0.0;
    for (name, p, pe, k) in rows {
        let got: f64 = kappa_from(p / 100.0, pe / 100.0).ok_or(format!("{name}: kappa undefined"))?;
        let rounded = (got * 1e4).round() / 1e4;
        let d = (rounded - k / 100.0).abs();
        worst = worst.max(d);
        ensure(d <= 0.0005 + 1e-12, || format!("{name}: {rounded:.4} vs {:.4}", k / 100.0))?;
    }
    Ok(format!("8 rows, max |Δ| = {worst:.4}"))
}

/// Closed form for one item: Σ l² over label multiplicities, minus N, over N(N−1).
fn k_closed(parts: &[u32]) -> BigRational {
    let n: i64 = parts.iter().map(|&p| i64::from(p)).sum();
    let s: i64 = parts.iter().map(|&p| i64::from(p) * i64::from(p)).sum();
    q(s - n, n * (n - 1))
}

fn k_score_table() -> Outcome {
    let n = 5usize;
    let m = 5u16;
    let mut found: std::collections::BTreeMap<Vec<u32>, BigRational> = Default::default();
    // Every ordered 5-tuple over 5 labels covers every multiset.
    let mut ratings = vec![0u16; n];
    loop {
        let o = classify_pattern::<BigRational, u16>(&ratings).ok_or("no outcome")?;
        let parts = o.signature.parts().to_vec();
        ensure(o.k_score == k_closed(&parts), || format!("{parts:?}: engine {} vs closed form", o.k_score))?;
        found.insert(parts, o.k_score);
        let mut i = 0;
        while i < n {
            ratings[i] += 1;
            if ratings[i] < m {
                break;
            }
            ratings[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    let expected: [(&[u32], BigRational); 7] = [
        (&[5], q(1, 1)),
        (&[4, 1], q(3, 5)),
        (&[3, 2], q(2, 5)),
        (&[3, 1, 1], q(3, 10)),
        (&[2, 2, 1], q(1, 5)),
        (&[2, 1, 1, 1], q(1, 10)),
        (&[1, 1, 1, 1, 1], q(0, 1)),
    ];
    ensure(found.len() == 7, || format!("{} signatures", found.len()))?;
    for (parts, k) in &expected {
        ensure(found.get(*parts) == Some(k), || format!("{parts:?}: {:?}", found.get(*parts)))?;
    }
    let order: Vec<Vec<u32>> = PatternSignature::all_for(5).iter().map(|s| s.parts().to_vec()).collect();
    let want: Vec<Vec<u32>> = expected.iter().map(|(p, _)| p.to_vec()).collect();
    ensure(order == want, || format!("column order {order:?}"))?;
    Ok("7 signatures, k = 1, 0.6, 0.4, 0.3, 0.2, 0.1, 0".into())
}

fn random_matrix(rng: &mut ChaCha8Rng, m: usize, t: usize, n: usize) -> (RatingMatrix, Vec<Vec<u16>>) {
    let mut mat = RatingMatrix::anonymous(m, n).expect("valid shape");
    let mut rows = Vec::with_capacity(t);
    // Bias towards agreement so every pattern shows up.
    for i in 0..t {
        let base = rng.random_range(0..m as u16);
        let row: Vec<u16> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.6 { base } else { rng.random_range(0..m as u16) })
            .collect();
        mat.push_indexed(format!("i{i}"), row.iter().map(|&l| Some(l)).collect()).expect("row fits");
        rows.push(row);
    }
    (mat, rows)
}

fn disagreement_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..10_000 {
        let m = rng.random_range(2..=9);
        let t = rng.random_range(1..=200);
        let (mat, rows) = random_matrix(&mut rng, m, t, 5);
        let non_unanimous = rows.iter().filter(|r| r.iter().any(|&l| l != r[0])).count();
        let oracle = q(non_unanimous as i64, t as i64);
        let got = percentage_of_disagreement::<BigRational>(&mat).ok_or("undefined PD")?;
        ensure(got == oracle, || format!("trial {trial}: {got} vs {oracle}"))?;
    }
    Ok("10000 matrices, exact rational equality".into())
}

/// Brute-force Fleiss from the textbook definition over an items × raters table.
fn fleiss_oracle(rows: &[Vec<u16>], m: usize) -> (BigRational, BigRational, Option<BigRational>) {
    let n = rows[0].len() as i64;
    let t = rows.len() as i64;
    let mut p_bar = BigRational::zero();
    let mut col = vec![0i64; m];
    for r in rows {
        let mut nij = vec![0i64; m];
        for &l in r {
            nij[l as usize] += 1;
        }
        let s: i64 = nij.iter().map(|c| c * (c - 1)).sum();
        p_bar += q(s, n * (n - 1));
        for j in 0..m {
            col[j] += nij[j];
        }
    }
    p_bar /= BigRational::from_integer(BigInt::from(t));
    let mut pe = BigRational::zero();
    for c in col {
        let pj = q(c, t * n);
        pe += pj.clone() * pj;
    }
    let kappa = if pe == BigRational::one() {
        None
    } else {
        Some((p_bar.clone() - pe.clone()) / (BigRational::one() - pe.clone()))
    };
    (p_bar, pe, kappa)
}

fn fleiss_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    let mut undefined = 0;
    for trial in 0..1000 {
        let m = rng.random_range(1..=5);
        let t = rng.random_range(1..=20);
        let (mat, rows) = random_matrix(&mut rng, m, t, 5);
        let (p, pe, k) = fleiss_oracle(&rows, m);
        let exact = fleiss_kappa::<BigRational>(&mat).ok_or("no complete rows")?;
        ensure(exact.p == p && exact.p_e == pe && exact.kappa == k, || format!("trial {trial}: exact mismatch"))?;
        let f = fleiss_kappa::<f64>(&mat).ok_or("no complete rows")?;
        match (&k, f.kappa) {
            (None, None) => undefined += 1,
            (Some(k), Some(fk)) => {
                let d = (k.to_f64().unwrap() - fk).abs();
                worst = worst.max(d);
                ensure(d < 1e-12, || format!("trial {trial}: |Δκ| = {d:e}"))?;
            }
            _ => return Err(format!("trial {trial}: definedness differs")),
        }
        let dp = (p.to_f64().unwrap() - f.p).abs().max((pe.to_f64().unwrap() - f.p_e).abs());
        worst = worst.max(dp);
        ensure(dp < 1e-12, || format!("trial {trial}: |ΔP| = {dp:e}"))?;
    }
    Ok(format!("1000 matrices, max |Δ| = {worst:e}, {undefined} with P_e = 1"))
}

fn quotas() -> Outcome {
    let f: Fraction = "0.06".parse().map_err(|e: String| e)?;
    let persons = [(1000, 60), (6000, 360), (6000, 360), (42000, 2520), (10000, 600), (25000, 1500)];
    let vehicles = [(2000, 120), (30000, 1800), (18000, 1080)];
    let mut totals = Vec::new();
    for (table, expected_total) in [(&persons[..], 5400), (&vehicles[..], 3000)] {
        let mut total = 0;
        for (i, &(goal, want)) in table.iter().enumerate() {
            let got = compute_quota(goal, 5, f).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("G={goal}: q={got}, expected {want}"))?;
            // The plan over exactly `goal` eligible agents keeps that quota and
            // takes the smallest prefix reaching it.
            let index = EligibleIndex {
                dataset_id: format!("d{i}"),
                images: (0..goal.div_ceil(4))
                    .map(|k| EligibleImage {
                        image_id: format!("img{k:06}"),
                        split: if k % 3 == 0 { Split::Val } else { Split::Train },
                        agents: (0..4.min(goal - 4 * k)).map(|a| format!("u{k}_{a}")).collect(),
                    })
                    .collect(),
            };
            let plan = build_plan(&index, FilterConfig::default(), &PlanRequest::numbered(goal, 5, f, 7))
                .map_err(|e| e.to_string())?;
            let inter = plan.inter_pool_agents();
            let last = plan.inter_pool.last().map_or(0, |e| e.eligible_agents);
            ensure(plan.quota == want && inter >= want && inter - last < want, || {
                format!("G={goal}: plan quota {} inter {inter}", plan.quota)
            })?;
            total += got;
        }
        ensure(total == expected_total, || format!("total {total}, expected {expected_total}"))?;
        totals.push(total);
    }
    Ok(format!("9 quotas exact, totals {}/{}", totals[0], totals[1]))
}

fn outcome_spaces() -> Outcome {
    let expected = [(2, 6u128), (3, 21), (4, 56), (5, 126), (6, 252), (7, 462), (8, 792), (9, 1287)];
    for (m, want) in expected {
        // Count nondecreasing 5-tuples over m labels.
        let mut count = 0u128;
        for a in 0..m {
            for b in a..m {
                for c in b..m {
                    for d in c..m {
                        count += (m - d) as u128;
                    }
                }
            }
        }
        let got = outcome_space_size(m, 5);
        ensure(got == want && count == want, || format!("M={m}: engine {got}, count {count}, table {want}"))?;
    }
    Ok("C^R(2..9, 5) = 6, 21, 56, 126, 252, 462, 792, 1287".into())
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_attrlabel")
}

fn run_cli(args: &[&str]) -> Result<Value, String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    serde_json::from_slice(&out.stdout).map_err(|e| format!("{args:?}: {e}"))
}

/// Two-sided 99% interval of X/n under X ~ Bin(n, d).
fn binomial_interval(n: u64, d: f64) -> (f64, f64) {
    let b = Binomial::new(d, n).expect("valid binomial");
    (b.inverse_cdf(0.005) as f64 / n as f64, b.inverse_cdf(0.995) as f64 / n as f64)
}

fn exported_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "jsonl"))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
        .collect();
    v.sort();
    Ok(v)
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for (i, d) in [0.05, 0.3].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let out_s = out.to_string_lossy().into_owned();
        let sim = run_cli(&[
            "simulate", "--annotators", "5", "--items", "2000", "--disagree", &d.to_string(), "--seed", "42", "--out", &out_s,
        ])?;
        let export = out.join("export").join("sim");
        let agr = out.join("agreement");
        run_cli(&["agreement", "--export", &export.to_string_lossy(), "--out", &agr.to_string_lossy()])?;
        let report: Value =
            serde_json::from_slice(&std::fs::read(agr.join("agreement.json")).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        for p in report["pooled"].as_array().ok_or("no pooled rows")? {
            let attr = p["attribute"].as_str().unwrap_or("?");
            if attr == "group" {
                continue;
            }
            let n = p["items"].as_u64().ok_or("items")?;
            let pd = p["pd"].as_f64().ok_or("pd")?;
            ensure(n >= 2000, || format!("{attr}: only {n} items"))?;
            let (lo, hi) = binomial_interval(n, d);
            ensure(pd >= lo && pd <= hi, || format!("d={d} {attr}: PD {pd:.4} outside [{lo:.4}, {hi:.4}] (n={n})"))?;
        }

        // Exclusive pools: no image exported by two annotators unless it is inter.
        let plan: Value = serde_json::from_slice(&std::fs::read(export.join("plan.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let inter: std::collections::BTreeSet<&str> = plan["inter_pool"]
            .as_array()
            .ok_or("inter_pool")?
            .iter()
            .filter_map(|e| e["image_id"].as_str())
            .collect();
        let mut owner: std::collections::BTreeMap<String, String> = Default::default();
        for (file, bytes) in exported_files(&export)? {
            for line in String::from_utf8_lossy(&bytes).lines() {
                let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
                let id = v["image_meta"]["image_id"].as_str().unwrap_or_default().to_string();
                if inter.contains(id.as_str()) {
                    continue;
                }
                if let Some(prev) = owner.insert(id.clone(), file.clone()) {
                    return Err(format!("exclusive image {id} in {prev} and {file}"));
                }
            }
        }
        ensure(sim["exclusive_overlap"] == 0, || "simulator reports overlap".into())?;

        // Replay from the journal through the export subcommand.
        let replay = out.join("replay");
        run_cli(&[
            "export", "--data-root", &out.join("data").to_string_lossy(), "--dataset", "sim", "--out", &replay.to_string_lossy(),
        ])?;
        let a = exported_files(&export)?;
        let b = exported_files(&replay.join("sim"))?;
        ensure(!a.is_empty() && a == b, || "replayed export differs".into())?;
        notes.push(format!("d={d}: {} exclusive images disjoint, replay identical", owner.len()));
    }
    Ok(notes.join("; "))
}

fn published_data() -> Option<Outcome> {
    let dir = std::env::var_os("ATTRLABEL_PUBLISHED_DIR")?;
    let dir = Path::new(&dir);
    let tmp = tempfile::tempdir().ok()?;
    let run = || -> Outcome {
        run_cli(&["agreement", "--export", &dir.to_string_lossy(), "--out", &tmp.path().to_string_lossy()])?;
        let report: Value = serde_json::from_slice(
            &std::fs::read(tmp.path().join("agreement.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let want = [
            ("age", 0.9469, 0.9090, 0.4167),
            ("group", 0.9462, 0.3986, 0.9106),
            ("means_of_transport", 0.9496, 0.6878, 0.8386),
            ("sex", 0.7625, 0.3762, 0.6192),
            ("skin", 0.7354, 0.4813, 0.4898),
            ("vehicle_type", 0.9097, 0.5896, 0.7800),
            ("colour", 0.7031, 0.1858, 0.6354),
            ("car_type", 0.7007, 0.3121, 0.5649),
        ];
        for (attr, p, pe, k) in want {
            let row = report["pooled"]
                .as_array()
                .and_then(|rows| rows.iter().find(|r| r["attribute"] == attr))
                .ok_or(format!("{attr} missing"))?;
            let f = &row["fleiss"];
            for (name, got, exp) in [("P", &f["p"], p), ("P_e", &f["p_e"], pe), ("kappa", &f["kappa"], k)] {
                let g = got.as_f64().ok_or(format!("{attr} {name} missing"))?;
                ensure((g - exp).abs() <= 0.005, || format!("{attr} {name}: {g:.4} vs {exp:.4}"))?;
            }
        }
        Ok("pooled P, P_e, kappa within 0.005; distribution percentages not compared".into())
    };
    Some(run())
}

fn main() {
    type Check = (&'static str, Duration, fn() -> Outcome);
    let checks: [Check; 7] = [
        ("kappa-identity", Duration::from_secs(1), kappa_identity),
        ("k-score-table", Duration::from_secs(1), k_score_table),
        ("disagreement-forms", Duration::from_secs(10), disagreement_forms),
        ("fleiss-oracle", Duration::from_secs(5), fleiss_vs_oracle),
        ("allocation-quotas", Duration::from_secs(1), quotas),
        ("end-to-end-simulation", Duration::from_secs(60), end_to_end),
        ("outcome-space-sizes", Duration::from_secs(1), outcome_spaces),
    ];
    let mut failed = 0;
    for (name, budget, f) in checks {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        match outcome {
            Ok(msg) if took <= budget => println!("PASS {name}: {msg} ({:.2?})", took),
            Ok(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}, but took {took:.2?} > {budget:?}");
            }
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e} ({took:.2?})");
            }
        }
    }
    match published_data() {
        None => println!("SKIP published-data: ATTRLABEL_PUBLISHED_DIR not set"),
        Some(Ok(msg)) => println!("PASS published-data: {msg}"),
        Some(Err(e)) => {
            failed += 1;
            println!("FAIL published-data: {e}");
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
