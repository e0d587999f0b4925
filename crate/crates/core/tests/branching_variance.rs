use gmfilter::branching::{multinomial_allocate, tbba_allocate};
use gmfilter::rng::{CounterRng, Stream};
use rand::Rng;

/// Per-index sample variances of the offspring counts, and the standard
/// errors of those variances.
fn count_variances(samples: &[Vec<f64>]) -> Vec<(f64, f64)> {
    samples
        .iter()
        .map(|xs| {
            let k = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / k;
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
            let var = sq.iter().sum::<f64>() / (k - 1.0);
            let m = sq.iter().sum::<f64>() / k;
            let spread = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (k - 1.0);
            (var, (spread / k).sqrt())
        })
        .collect()
}

#[test]
fn tree_branching_never_exceeds_multinomial_variance() {
    const DRAWS: usize = 100_000;
    let mut weight_rng = CounterRng::keyed(404, &[]);
    for case in 0..12u64 {
        let n = 2 + (case as usize % 9);
        let raw: Vec<f64> = (0..n).map(|_| weight_rng.random::<f64>() + 0.01).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();

        let mut rng = CounterRng::stream(case, Stream::BranchTest, &[10]);
        let mut tree = vec![Vec::with_capacity(DRAWS); n];
        let mut multi = vec![Vec::with_capacity(DRAWS); n];
        for _ in 0..DRAWS {
            for (j, &c) in tbba_allocate(&w, n, &mut rng).unwrap().counts().iter().enumerate() {
                tree[j].push(c as f64);
            }
            for (j, &c) in multinomial_allocate(&w, n, &mut rng).unwrap().counts().iter().enumerate() {
                multi[j].push(c as f64);
            }
        }
        for (j, ((vt, st), (vm, sm))) in count_variances(&tree).into_iter().zip(count_variances(&multi)).enumerate() {
            let se = (st * st + sm * sm).sqrt();
            assert!(vt <= vm + 3.0 * se, "case {case}, index {j}: tree {vt} vs multinomial {vm}");
        }
    }
}
