use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use theater_bench::medley;
use theater_core::command::{Action, Address, AddressedCommand, LedMode, RobotId};
use theater_core::link::{decode, encode};
use theater_core::{Engine, EngineConfig, GestureConfig, Recognizer, Stage, StageConfig};

fn recognizer(c: &mut Criterion) {
    let frames = medley();
    let mut g = c.benchmark_group("recognizer");
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("medley", |b| {
        b.iter_batched(
            || Recognizer::new(GestureConfig::default()).unwrap(),
            |mut r| {
                let mut n = 0;
                for f in &frames {
                    n += r.update(f).len();
                }
                n + r.flush().len()
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn codec(c: &mut Criterion) {
    let cmds = [
        AddressedCommand::drive(Address::Broadcast, 0.15, 0.0, 0.6, 0.0),
        AddressedCommand::new(
            Address::Robot(RobotId::new(2).unwrap()),
            Action::Led {
                mode: LedMode::Strobe,
                rgb: [255, 0, 0],
                period: 0.5,
            },
            0.0,
        ),
        AddressedCommand::new(Address::Robot(RobotId::new(3).unwrap()), Action::Stop, 0.0),
    ];
    let bytes: Vec<Vec<u8>> = cmds.iter().map(|c| encode(c).unwrap()).collect();
    c.bench_function("codec/encode", |b| {
        b.iter(|| {
            cmds.iter()
                .map(|c| encode(black_box(c)).unwrap().len())
                .sum::<usize>()
        })
    });
    c.bench_function("codec/decode", |b| {
        b.iter(|| {
            bytes
                .iter()
                .filter(|p| decode(black_box(p)).is_ok())
                .count()
        })
    });
}

fn stage(c: &mut Criterion) {
    let mut g = c.benchmark_group("stage");
    g.throughput(Throughput::Elements(1000));
    g.bench_function("1000 ticks, 3 robots driving", |b| {
        b.iter_batched(
            || {
                let mut s = Stage::new(StageConfig::default()).unwrap();
                s.apply_command(&AddressedCommand::drive(
                    Address::Broadcast,
                    0.1,
                    0.5,
                    2.0,
                    0.0,
                ))
                .unwrap();
                s
            },
            |mut s| {
                s.advance(1000);
                s
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn engine(c: &mut Criterion) {
    let frames = medley();
    c.bench_function("engine/run_trace medley", |b| {
        b.iter(|| {
            let mut e = Engine::new(&EngineConfig::default()).unwrap();
            e.run_trace(&frames, 1.0, 0.5);
            e.drain().len()
        })
    });
}

criterion_group!(benches, recognizer, codec, stage, engine);
criterion_main!(benches);
