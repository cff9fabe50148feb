use bbs_bench::weight_block;
use bbs_core::compress::{compress_rounded_avg, compress_zero_point};
use bbs_core::pe::pe_dot;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn dot_products(c: &mut Criterion) {
    let mut g = c.benchmark_group("pe_dot");
    for &size in &[16usize, 32, 64] {
        let values = weight_block(size, 0xDA01);
        let acts = weight_block(size, 0xDA02);
        let ra = compress_rounded_avg(&values, 2).unwrap().compressed;
        let zp = compress_zero_point(&values, 4).unwrap().compressed;
        g.throughput(Throughput::Elements(size as u64));
        g.bench_with_input(BenchmarkId::new("rounded_avg_n2", size), &acts, |b, a| {
            b.iter(|| pe_dot(black_box(&ra), black_box(a)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("zero_point_n4", size), &acts, |b, a| {
            b.iter(|| pe_dot(black_box(&zp), black_box(a)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dot_products);
criterion_main!(benches);
