//! Acceptance suite. Runs every primary criterion at its stated tolerance
//! and prints one `[PASS]` / `[FAIL]` line per criterion.
//!
//! Run alone with `cargo test -p sphface --test acceptance`.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use sphface::commands;
use sphface::config::PipelineConfig;
use sphface::manifest::{label_map, read_manifest, write_manifest, ManifestEntry};
use sphface_core::dictionary::{
    best_atom, enumerate_atoms, synthesize_atom, AtomIndex, Criterion, DictionarySpec, TIE_RTOL,
};
use sphface_core::extraction::ExtractionConfig;
use sphface_core::pipeline::extract_cloud;
use sphface_core::pursuit::ssmp_select;
use sphface_core::recognition::{
    auc, cmc_from_ranks, l1_distance, l1_match, lda_fit, rank_of, roc_curve, split_counts, GalleryEntry, Method,
};
use sphface_core::registration::{icp_align, IcpConfig, RigidTransform};
use sphface_core::sphere::{sphere_inner, SphereGrid, SphericalSignal};
use sphface_core::synth::{synth_face, SynthParams};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn desk() -> DictionarySpec {
    DictionarySpec::desk()
}

fn grid64() -> SphereGrid {
    SphereGrid::new(64, 64).unwrap()
}

/// Smooth random signal: a few off-lattice atoms plus white noise.
fn random_signal(rng: &mut ChaCha8Rng, grid: SphereGrid) -> SphericalSignal {
    let mut values = vec![0.0; grid.len()];
    for _ in 0..5 {
        let a = rng.gen_range(0.5..4.0);
        let g = AtomIndex::new(
            rng.gen_range(0.0..PI),
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
            a,
            a * rng.gen_range(0.5..2.0),
        );
        let atom = synthesize_atom(&g, grid).unwrap();
        let c: f64 = rng.sample(StandardNormal);
        values.iter_mut().zip(atom.values()).for_each(|(v, x)| *v += c * x);
    }
    for v in &mut values {
        *v += 0.05 * rng.sample::<f64, _>(StandardNormal);
    }
    SphericalSignal::from_values(grid, values).unwrap()
}

/// First index whose score is within the tie tolerance of the maximum.
fn first_max(scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(0.0, f64::max);
    scores.iter().position(|&s| s >= max * (1.0 - TIE_RTOL)).unwrap()
}

// ---------------------------------------------------------------------------

fn c1_quadrature() -> Outcome {
    let t = Instant::now();
    let g = grid64();
    let one = SphericalSignal::from_fn(g, |_, _| 1.0);
    let cos = SphericalSignal::from_fn(g, |th, _| th.cos());
    let area = sphere_inner(&one, &one).unwrap();
    let cos2 = sphere_inner(&cos, &cos).unwrap();
    within(t.elapsed(), Duration::from_secs(1))?;
    let (e1, e2) = ((area - 4.0 * PI).abs() / (4.0 * PI), (cos2 - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0));
    check(e1 < 0.01 && e2 < 0.01, format!("<1,1> rel err {e1:.2e}, <cos,cos> rel err {e2:.2e}"))
}

fn c2_atoms() -> Outcome {
    let t = Instant::now();
    let spec = desk();
    let atoms: Vec<AtomIndex> = enumerate_atoms(&spec).unwrap().collect();
    let worst =
        atoms.par_iter().map(|g| (synthesize_atom(g, spec.grid).unwrap().norm() - 1.0).abs()).reduce(|| 0.0, f64::max);
    within(t.elapsed(), Duration::from_secs(10))?;
    if worst > 1e-9 {
        return Err(format!("{} atoms, worst |norm - 1| = {worst:.2e}", atoms.len()));
    }

    // Generating Gaussian sampled and normalized by hand.
    let g = spec.grid;
    let (dt, dp) = (PI / g.n_theta as f64, 2.0 * PI / g.n_phi as f64);
    let theta = |k: usize| ((k / g.n_phi) as f64 + 0.5) * dt;
    let raw: Vec<f64> = (0..g.len()).map(|k| (-(theta(k) / 2.0).tan().powi(2)).exp()).collect();
    let norm2: f64 = raw.iter().enumerate().map(|(k, v)| v * v * theta(k).sin() * dt * dp).sum();
    let atom = synthesize_atom(&AtomIndex::new(0.0, 0.0, 0.0, 1.0, 1.0), g).unwrap();
    let dev = raw.iter().zip(atom.values()).map(|(r, a)| (r / norm2.sqrt() - a).abs()).fold(0.0, f64::max);
    check(
        dev <= 1e-9,
        format!("{} atoms, worst |norm - 1| = {worst:.2e}, generating Gaussian max dev {dev:.2e}", atoms.len()),
    )
}

fn c3_best_atom() -> Outcome {
    let t = Instant::now();
    let spec = desk();
    let atoms: Vec<AtomIndex> = enumerate_atoms(&spec).unwrap().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for set in 0..5 {
        let residuals: Vec<SphericalSignal> = (0..set + 1).map(|_| random_signal(&mut rng, spec.grid)).collect();
        let inners: Vec<Vec<f64>> = atoms
            .par_iter()
            .map(|g| {
                let a = synthesize_atom(g, spec.grid).unwrap();
                residuals.iter().map(|r| sphere_inner(r, &a).unwrap()).collect()
            })
            .collect();
        let scores: Vec<f64> = inners.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
        let k = first_max(&scores);
        let got = best_atom(&residuals, &spec, Criterion::SumSquares).unwrap();
        if got.gamma != atoms[k] || got.lattice_index != k || got.inner_products != inners[k] {
            return Err(format!(
                "set {set}: best_atom picked #{} {:?}, brute force #{k} {:?}",
                got.lattice_index, got.gamma, atoms[k]
            ));
        }
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!("5 residual sets over {} atoms agree exactly ({:.1?})", atoms.len(), t.elapsed()))
}

fn c4_ssmp() -> Outcome {
    let spec = desk();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let signals: Vec<SphericalSignal> = (0..10).map(|_| random_signal(&mut rng, spec.grid)).collect();
    let res = ssmp_select(&signals, &spec, 20).map_err(|e| e.to_string())?;
    let e = &res.residual_energies;
    if e.len() != 20 || e.windows(2).any(|w| w[1] > w[0]) {
        return Err(format!("residual energy trace not non-increasing over 20 steps: {e:?}"));
    }

    // Replay the pursuit from the reported support and coefficients.
    let synth = res.support.synthesis();
    let mut worst = 0.0f64;
    for (s, sig) in signals.iter().enumerate() {
        let mut r = sig.clone();
        for (k, atom) in synth.iter().enumerate() {
            let c = res.coefficients.get(k, s);
            let before = sphere_inner(&r, &r).unwrap();
            let next: Vec<f64> = r.values().iter().zip(atom.values()).map(|(x, a)| x - c * a).collect();
            r = SphericalSignal::from_values(spec.grid, next).unwrap();
            let after = sphere_inner(&r, &r).unwrap();
            worst = worst.max((before - after - c * c).abs() / before);
        }
    }
    if worst > 1e-9 {
        return Err(format!("energy identity off by {worst:.2e} relative"));
    }

    let gamma = enumerate_atoms(&spec).unwrap().nth(1234).unwrap();
    let one = synthesize_atom(&gamma, spec.grid).unwrap().scaled(3.7);
    let single = ssmp_select(&[one], &spec, 20).map_err(|e| e.to_string())?;
    let (first, r1) = (single.support.atoms()[0], single.residual_energies[0]);
    check(
        first == gamma && r1 < 1e-12,
        format!("10 signals non-increasing, energy identity within {worst:.1e}; single atom recovered: {}, residual {r1:.1e}", first == gamma),
    )
}

fn c5_mp_oracle() -> Outcome {
    let spec = desk();
    let atoms: Vec<AtomIndex> = enumerate_atoms(&spec).unwrap().collect();
    // The whole desk dictionary, synthesized once (about 600 MB).
    let dict: Vec<SphericalSignal> = atoms.par_iter().map(|g| synthesize_atom(g, spec.grid).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let steps = 10;
    for n in 0..3 {
        let signal = random_signal(&mut rng, spec.grid);
        let got = ssmp_select(std::slice::from_ref(&signal), &spec, steps).map_err(|e| e.to_string())?;
        let mut r = signal.clone();
        for k in 0..steps {
            let inner: Vec<f64> = dict.par_iter().map(|a| sphere_inner(&r, a).unwrap()).collect();
            let scores: Vec<f64> = inner.iter().map(|c| c * c).collect();
            let best = first_max(&scores);
            let c = inner[best];
            if got.support.atoms()[k] != atoms[best] || got.coefficients.get(k, 0) != c {
                return Err(format!(
                    "signal {n} step {k}: ssmp {:?} c={}, mp {:?} c={c}",
                    got.support.atoms()[k],
                    got.coefficients.get(k, 0),
                    atoms[best]
                ));
            }
            let next: Vec<f64> = r.values().iter().zip(dict[best].values()).map(|(x, a)| x - c * a).collect();
            r = SphericalSignal::from_values(spec.grid, next).unwrap();
        }
    }
    Ok(format!("3 signals x {steps} steps: support and coefficients bitwise equal"))
}

fn c6_icp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut report = Vec::new();
    for case in 0..8u64 {
        let scan = synth_face(100 + case, 0, &SynthParams::clean(64)).unwrap();
        let (model, _) = extract_cloud(&scan, &ExtractionConfig::default()).map_err(|e| e.to_string())?;
        let axis: [f64; 3] = match case {
            0 => [1.0, 0.0, 0.0],
            1 => [0.0, 1.0, 0.0],
            2 => [0.0, 0.0, 1.0],
            _ => [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)],
        };
        let angle = if case < 4 { 15f64.to_radians() } else { rng.gen_range(-15.0f64..15.0).to_radians() };
        let dir: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let len = (dir.iter().map(|d| d * d).sum::<f64>()).sqrt();
        let mag = if case < 4 { 10.0 } else { rng.gen_range(0.0..10.0) };
        let applied = RigidTransform::from_axis_angle(axis, angle, dir.map(|d| d / len * mag));
        let query = applied.apply_cloud(&model);

        let t = Instant::now();
        let res = icp_align(&query, &model, &IcpConfig::default()).map_err(|e| e.to_string())?;
        let elapsed = t.elapsed();
        let round = res.transform.compose(&applied);
        let (ang, tr) = (round.angle(), round.translation.norm());
        report.push(format!("{ang:.1e}/{tr:.1e}/{}it/{:.0}ms", res.iterations, elapsed.as_secs_f64() * 1e3));
        if ang > 1e-3 || tr > 1e-3 || res.iterations > 50 || elapsed > Duration::from_secs(5) {
            return Err(format!(
                "case {case} ({} points, {:.1} deg, |t| {mag:.1}): angle err {ang:.2e}, translation err {tr:.2e}, {} iterations, {elapsed:.2?}",
                model.len(),
                angle.to_degrees(),
                res.iterations
            ));
        }
    }
    Ok(format!("8 pairs recovered (rad/units/iterations/time): {}", report.join(" ")))
}

/// `n` samples per class around class means drawn with spread `sep`.
fn gaussian_classes(
    rng: &mut ChaCha8Rng,
    classes: usize,
    n: usize,
    dim: usize,
    sep: f64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let means: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..dim).map(|_| sep * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (c, m) in means.iter().enumerate() {
        for _ in 0..n {
            xs.push(m.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect());
            ys.push(c);
        }
    }
    (xs, ys)
}

fn c7_lda() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (k, c) in [(10, 4), (3, 8), (5, 6), (6, 2)] {
        let (x, y) = gaussian_classes(&mut rng, c, 8, k, 3.0);
        let m = lda_fit(&x, &y, usize::MAX).map_err(|e| e.to_string())?;
        if m.d() != k.min(c - 1) {
            return Err(format!("K={k}, c={c}: dimension {} != {}", m.d(), k.min(c - 1)));
        }
    }

    // Separable classes: leave-one-out nearest neighbour in LDA space.
    let (x, y) = gaussian_classes(&mut rng, 5, 20, 10, 20.0);
    let m = lda_fit(&x, &y, usize::MAX).map_err(|e| e.to_string())?;
    let proj: Vec<Vec<f64>> = x.iter().map(|v| m.project(v)).collect();
    let hits = (0..proj.len())
        .filter(|&i| {
            let gallery: Vec<GalleryEntry> = (0..proj.len())
                .filter(|&j| j != i)
                .map(|j| GalleryEntry { coeffs: proj[j].clone(), label: y[j] })
                .collect();
            l1_match(&proj[i], &gallery).unwrap().label == y[i]
        })
        .count();
    if hits != proj.len() {
        return Err(format!("separable training rank-1 {hits}/{}", proj.len()));
    }

    // Permuted labels: held-out rank-1 should sit at chance (1/5).
    let mut rates = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let (x, mut y) = gaussian_classes(&mut rng, 5, 20, 10, 3.0);
        y.shuffle(&mut rng);
        let mut seen = [0usize; 5];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (v, &l) in x.iter().zip(&y) {
            seen[l] += 1;
            if seen[l] <= 10 {
                train.push((v, l))
            } else {
                test.push((v, l))
            }
        }
        let tx: Vec<Vec<f64>> = train.iter().map(|(v, _)| v.to_vec()).collect();
        let ty: Vec<usize> = train.iter().map(|t| t.1).collect();
        let m = lda_fit(&tx, &ty, usize::MAX).map_err(|e| e.to_string())?;
        let gallery: Vec<GalleryEntry> =
            train.iter().map(|(v, l)| GalleryEntry { coeffs: m.project(v), label: *l }).collect();
        let hits = test.iter().filter(|(v, l)| l1_match(&m.project(v), &gallery).unwrap().label == *l).count();
        rates.push(hits as f64 / test.len() as f64);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    check(
        (mean - 0.2).abs() <= 0.10,
        format!(
            "dimensions min(K, c-1); separable rank-1 100%; permuted-label rank-1 {:.1}% (chance 20%)",
            100.0 * mean
        ),
    )
}

fn c8_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut v = || -> Vec<f64> { (0..20).map(|_| rng.gen_range(-10.0..10.0)).collect() };
    let (mut sym, mut tri) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let (a, b, c) = (v(), v(), v());
        sym = sym.max((l1_distance(&a, &b) - l1_distance(&b, &a)).abs());
        tri = tri.max(l1_distance(&a, &c) - l1_distance(&a, &b) - l1_distance(&b, &c));
    }
    if sym > 1e-12 || tri > 1e-12 {
        return Err(format!("symmetry {sym:.1e}, triangle excess {tri:.1e}"));
    }

    // CMC on a noisy 10-subject gallery.
    let c = 10;
    let centers: Vec<Vec<f64>> = (0..c).map(|_| v()).collect();
    let gallery: Vec<(Vec<f64>, usize)> =
        (0..2 * c).map(|i| (centers[i % c].iter().map(|x| x + rng.gen_range(-8.0..8.0)).collect(), i % c)).collect();
    let labels: Vec<usize> = gallery.iter().map(|g| g.1).collect();
    let ranks: Vec<Option<usize>> = (0..50)
        .map(|i| {
            let p: Vec<f64> = centers[i % c].iter().map(|x| x + rng.gen_range(-8.0..8.0)).collect();
            let d: Vec<f64> = gallery.iter().map(|g| l1_distance(&p, &g.0)).collect();
            rank_of(&d, &labels, i % c, true)
        })
        .collect();
    let cmc = cmc_from_ranks(&ranks, c);
    if cmc.windows(2).any(|w| w[1] < w[0]) || cmc[c - 1] != 1.0 {
        return Err(format!("cmc {cmc:?}"));
    }

    // ROC endpoints, and AUC with claims unrelated to the scores.
    let mut aucs = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let mut truth: Vec<usize> = (0..200).map(|i| i % c).collect();
        let probes: Vec<Vec<f64>> =
            truth.iter().map(|&t| centers[t].iter().map(|x| x + rng.gen::<f64>()).collect()).collect();
        truth.shuffle(&mut rng);
        let mut scores = Vec::new();
        for (p, &t) in probes.iter().zip(&truth) {
            for (s, center) in centers.iter().enumerate() {
                scores.push((-l1_distance(p, center), s == t));
            }
        }
        let roc = roc_curve(&scores).map_err(|e| e.to_string())?;
        let (first, last) = (roc[0], roc[roc.len() - 1]);
        if (first.fpr, first.tpr, last.fpr, last.tpr) != (0.0, 0.0, 1.0, 1.0) {
            return Err(format!("roc endpoints {first:?} {last:?}"));
        }
        aucs.push(auc(&roc));
    }
    let worst = aucs.iter().map(|a| (a - 0.5).abs()).fold(0.0, f64::max);
    check(
        worst <= 0.1,
        format!("L1 symmetric/triangle on 1000 triples; CMC monotone, CMC({c}) = 1; ROC (0,0)->(1,1); permuted AUC in [{:.3}, {:.3}]",
            aucs.iter().copied().fold(1.0, f64::min), aucs.iter().copied().fold(0.0, f64::max)),
    )
}

/// Rank-1 and AUC means from the first green run (20x4 synthetic, seed 42,
/// T2, desk dictionary, K = 50, 10 repeats). Any drift is a regression.
const BASELINE: [(&str, f64, f64); 6] = [
    ("euc", 0.9725, 0.9881),
    ("mse", 1.0, 0.9995),
    ("pca", 0.9725, 0.9980),
    ("pca+lda", 0.9875, 0.9995),
    ("ssmp", 1.0, 0.9989),
    ("ssmp+lda", 1.0, 0.9999),
];

fn c9_protocol() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::default();
    let data = dir.path().join("data");
    let pre = dir.path().join("pre");
    let step = |r: sphface::Result<()>| r.map_err(|e| e.to_string());
    step(commands::synth(&cfg, 20, 4, &data).map(|_| ()))?;
    let outcome = commands::preprocess(&cfg, &data.join("manifest.csv"), &pre, None).map_err(|e| e.to_string())?;
    if !outcome.failures.is_empty() {
        return Err(format!("preprocessing failed for {:?}", outcome.failures));
    }
    let report = commands::evaluate(&cfg, &pre, None, &dir.path().join("report")).map_err(|e| e.to_string())?;
    within(t.elapsed(), Duration::from_secs(15 * 60))?;

    let rank1 = |m: Method| report.method(m).map(|r| r.rank1_mean()).unwrap_or(f64::NAN);
    let (pca, ssmp, lda) = (rank1(Method::Pca), rank1(Method::Ssmp), rank1(Method::SsmpLda));
    let table: Vec<String> = report
        .methods
        .iter()
        .map(|m| format!("{} {:.4}/{:.4}", m.method.name(), m.rank1_mean(), m.auc_mean()))
        .collect();
    let mut drift = Vec::new();
    for (name, r1, a) in BASELINE {
        match report.methods.iter().find(|m| m.method.name() == name) {
            Some(m) if (m.rank1_mean() - r1).abs() < 1e-9 && (m.auc_mean() - a).abs() < 1e-4 => {}
            Some(m) => drift.push(format!("{name}: {:.4}/{:.4} vs pinned {r1}/{a}", m.rank1_mean(), m.auc_mean())),
            None => drift.push(format!("{name}: missing")),
        }
    }
    let msg = format!("rank1/auc {} ({:.0?})", table.join(", "), t.elapsed());
    if !(ssmp >= pca && lda >= ssmp) {
        return Err(format!("ordering violated: {msg}"));
    }
    if !drift.is_empty() {
        return Err(format!("baseline drift: {}; {msg}", drift.join("; ")));
    }
    Ok(format!("SSMP >= PCA and SSMP+LDA >= SSMP, baseline matched; {msg}"))
}

/// Scans per subject: 77 single-scan subjects, then 34 x 2, 45 x 3, 35 x 4,
/// 76 x 6, 6 x 7 and 4 x 8 (873 scans among the 200 multi-scan subjects).
const HISTOGRAM: [(usize, usize); 7] = [(1, 77), (2, 34), (3, 45), (4, 35), (6, 76), (7, 6), (8, 4)];

fn c10_table1(dir: &Path) -> Outcome {
    let mut rows = Vec::new();
    let mut s = 0;
    for (scans, subjects) in HISTOGRAM {
        for _ in 0..subjects {
            for j in 0..scans {
                rows.push(ManifestEntry {
                    path: format!("scans/s{s:03}_{j}.txt").into(),
                    subject_id: format!("s{s:03}"),
                    scan_id: format!("s{s:03}_{j}"),
                });
            }
            s += 1;
        }
    }
    let path = dir.join("manifest.csv");
    write_manifest(&path, &rows).map_err(|e| e.to_string())?;
    let back = read_manifest(&path).map_err(|e| e.to_string())?;
    let map = label_map(back.iter().map(|e| e.subject_id.as_str()));
    let labels: Vec<usize> = back.iter().map(|e| map[e.subject_id.as_str()]).collect();
    let t1 = split_counts(&labels, 1);
    let rest: Vec<String> = (2..=4).map(|i| format!("T{i} {:?}", split_counts(&labels, i))).collect();
    check(t1 == (200, 200, 673), format!("T1 {t1:?}; {}", rest.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("quadrature", Box::new(c1_quadrature)),
        ("dictionary atoms", Box::new(c2_atoms)),
        ("best_atom vs brute force", Box::new(c3_best_atom)),
        ("SSMP energy", Box::new(c4_ssmp)),
        ("SSMP n=1 vs MP", Box::new(c5_mp_oracle)),
        ("ICP recovery", Box::new(c6_icp)),
        ("LDA", Box::new(c7_lda)),
        ("metrics, CMC, ROC", Box::new(c8_metrics)),
        ("protocol ordering", Box::new(c9_protocol)),
        ("split bookkeeping", Box::new(move || c10_table1(tmp.path()))),
    ];
    let mut failed = 0;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {} {name} ({:.1?}): {detail}", n + 1, t.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
