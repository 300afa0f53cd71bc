//! Lattice search and pursuit against brute-force oracles on a small
//! dictionary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sphface_core::dictionary::{
    best_atom, enumerate_atoms, synthesize_atom, AtomIndex, Criterion, DictionarySpec, TIE_RTOL,
};
use sphface_core::pursuit::{ssmp_select, SparseSupport};
use sphface_core::sphere::{sphere_inner, SphereGrid, SphericalSignal};

fn small() -> DictionarySpec {
    DictionarySpec {
        n_pos: 8,
        n_rot: 4,
        scale_min: 1.0,
        scale_max: 2.0,
        scales_per_octave: 1,
        grid: SphereGrid::new(24, 24).unwrap(),
        collapse_isotropic: false,
    }
}

fn noise(rng: &mut ChaCha8Rng, grid: SphereGrid) -> SphericalSignal {
    SphericalSignal::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn first_max(scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(0.0, f64::max);
    scores.iter().position(|&s| s >= max * (1.0 - TIE_RTOL)).unwrap()
}

fn dictionary(spec: &DictionarySpec) -> (Vec<AtomIndex>, Vec<SphericalSignal>) {
    let atoms: Vec<AtomIndex> = enumerate_atoms(spec).unwrap().collect();
    let synth = atoms.iter().map(|g| synthesize_atom(g, spec.grid).unwrap()).collect();
    (atoms, synth)
}

#[test]
fn best_atom_matches_brute_force_for_both_criteria() {
    let spec = small();
    let (atoms, synth) = dictionary(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=4 {
        let residuals: Vec<SphericalSignal> = (0..n).map(|_| noise(&mut rng, spec.grid)).collect();
        for criterion in [Criterion::SumSquares, Criterion::SumAbs] {
            let inner: Vec<Vec<f64>> =
                synth.iter().map(|a| residuals.iter().map(|r| sphere_inner(r, a).unwrap()).collect()).collect();
            let scores: Vec<f64> = inner
                .iter()
                .map(|c| match criterion {
                    Criterion::SumSquares => c.iter().map(|x| x * x).sum(),
                    Criterion::SumAbs => c.iter().map(|x| x.abs()).sum(),
                })
                .collect();
            let k = first_max(&scores);
            let got = best_atom(&residuals, &spec, criterion).unwrap();
            assert_eq!((got.lattice_index, got.gamma), (k, atoms[k]), "{n} residuals, {criterion:?}");
            assert_eq!(got.inner_products, inner[k]);
        }
    }
}

#[test]
fn single_signal_ssmp_is_matching_pursuit() {
    let spec = small();
    let (atoms, synth) = dictionary(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let signal = noise(&mut rng, spec.grid);
    let got = ssmp_select(std::slice::from_ref(&signal), &spec, 25).unwrap();
    let mut r = signal.values().to_vec();
    for k in 0..25 {
        let rs = SphericalSignal::from_values(spec.grid, r.clone()).unwrap();
        let inner: Vec<f64> = synth.iter().map(|a| sphere_inner(&rs, a).unwrap()).collect();
        let best = first_max(&inner.iter().map(|c| c * c).collect::<Vec<_>>());
        assert_eq!(got.support.atoms()[k], atoms[best], "step {k}");
        assert_eq!(got.coefficients.get(k, 0), inner[best], "step {k}");
        r.iter_mut().zip(synth[best].values()).for_each(|(x, a)| *x -= inner[best] * a);
    }
    assert_eq!(got.residuals[0].values(), &r[..]);
}

#[test]
fn reconstruction_plus_residual_is_the_signal() {
    let spec = small();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let signals: Vec<SphericalSignal> = (0..4).map(|_| noise(&mut rng, spec.grid)).collect();
    let res = ssmp_select(&signals, &spec, 12).unwrap();
    let support = SparseSupport::from_atoms(spec.grid, res.support.atoms().to_vec()).unwrap();
    for (i, s) in signals.iter().enumerate() {
        let rec = support.reconstruct(res.coefficients.column(i));
        for ((x, y), r) in rec.values().iter().zip(res.residuals[i].values()).zip(s.values()) {
            assert!((x + y - r).abs() < 1e-12);
        }
    }
    // Greedy steps never pick an atom twice in a row.
    assert!(res.support.atoms().windows(2).all(|w| w[0] != w[1]));
}
