use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remn_core::frm::{attention_weights, enhance, FrmParams};
use remn_core::memory::{compute_affinity, readout, MemoryBank};
use remn_core::tensor::{DenseArray, LabelMask};

fn random_array(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> DenseArray {
    let n: usize = shape.iter().product();
    DenseArray::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn bench_memory_read(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (h, w, ck, cv, t) = (8, 8, 16, 32, 8);
    let mut bank = MemoryBank::new(t);
    for i in 0..t {
        let key = random_array(vec![h, w, ck], &mut rng);
        let value = random_array(vec![h, w, cv], &mut rng);
        bank.insert(key, vec![value], LabelMask::zeros(h, w), i).unwrap();
    }
    let query = random_array(vec![h, w, ck], &mut rng);

    c.bench_function("affinity_8x8x16_t8", |b| {
        b.iter(|| compute_affinity(black_box(&bank), black_box(&query)).unwrap())
    });
    let aff = compute_affinity(&bank, &query).unwrap();
    c.bench_function("readout_8x8x32_t8", |b| {
        b.iter(|| readout(black_box(&aff), black_box(&bank), 0).unwrap())
    });
}

fn bench_frm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w, ck) = (8, 8, 16);
    let params = FrmParams::seeded(ck, 3, 5).unwrap();
    let key = random_array(vec![h, w, ck], &mut rng);
    let mask = DenseArray::new(
        vec![h, w, 1],
        (0..h * w).map(|i| f64::from((i % 3 == 0) as u8)).collect(),
    )
    .unwrap();

    c.bench_function("frm_enhance_8x8x16_k3", |b| {
        b.iter(|| {
            let alpha = attention_weights(black_box(&key), black_box(&mask), &params).unwrap();
            enhance(black_box(&key), &alpha, &params).unwrap()
        })
    });
}

criterion_group!(benches, bench_memory_read, bench_frm);
criterion_main!(benches);
