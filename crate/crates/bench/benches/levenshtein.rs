use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pathflow::cluster::levenshtein;

fn bench(c: &mut Criterion) {
    let pairs = [
        ("AFE", "AFIFE"),
        ("AEFNINFEDE", "AFIFDE"),
        ("ACEDFENDNFNFACEDFENDNFNF", "AECDACFACNAECDACFACNAECD"),
    ];
    let mut g = c.benchmark_group("levenshtein");
    for (a, b) in pairs {
        g.bench_function(format!("{}x{}", a.len(), b.len()), |bench| {
            bench.iter(|| levenshtein(black_box(a), black_box(b)))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
