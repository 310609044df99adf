use ipva::design::point3;
use ipva::model;
use ipva::params::{State, SuspensionParams};
use ipva::road::{self, RoadModel};
use ipva::sim::{self, BenchmarkPlant, IpvaPlant, Plant};

fn main() {
    let base = SuspensionParams::table1();
    let p3 = point3().apply(&base);
    let rm = RoadModel::default();
    let dur = 2000.0;
    let sub = 10usize; // 1 ms substeps, ZOH road at 10 ms
    let w0 = (base.ks / base.ms).sqrt();
    let f2 = 5.18 * w0 / std::f64::consts::TAU;
    let plant_i = IpvaPlant { params: p3 };
    let plant_b = BenchmarkPlant { params: base };
    let mut acc_i = vec![]; let mut acc_b = vec![]; let mut freqs = vec![];
    for seed in 0..10u64 {
        let signal = road::generate(&RoadModel { seed, ..rm }, dur);
        // fine integration, accel sampled at 1 kHz
        let mut ai = Vec::new(); let mut ab = Vec::new();
        let mut xi = State::zero(); let mut xb = State::zero();
        let h = rm.ts / sub as f64;
        for k in 0..signal.samples.len() - 1 {
            let w = signal.samples[k];
            for _ in 0..sub {
                let di = plant_i.deriv(&xi, 0.225, w).unwrap();
                ai.push(plant_i.sprung_acceleration(&di));
                let db = plant_b.deriv(&xb, 0.225, w).unwrap();
                ab.push(plant_b.sprung_acceleration(&db));
                xi = sim::rk4_step(&plant_i, &xi, 0.225, w, h).unwrap();
                xb = sim::rk4_step(&plant_b, &xb, 0.225, w, h).unwrap();
            }
        }
        let seg = 26210; // ~26 s at 1 kHz
        let (f, p1) = sim::psd(&ai, h, seg).unwrap();
        let (_, p2) = sim::psd(&ab, h, seg).unwrap();
        if acc_i.is_empty() {
            acc_i = vec![0.0; p1.len()]; acc_b = acc_i.clone();
            freqs = f.iter().map(|v| v / std::f64::consts::TAU).collect();
        }
        for k in 0..p1.len() { acc_i[k] += p1[k]; acc_b[k] += p2[k]; }
    }
    let k0 = (0..freqs.len()).min_by(|&a,&b| (freqs[a]-f2).abs().total_cmp(&(freqs[b]-f2).abs())).unwrap();
    println!("fine: at {:.2} Hz ipva {:.4e} bench {:.4e} ratio {:.2} dB", freqs[k0], acc_i[k0], acc_b[k0], 10.0*(acc_b[k0]/acc_i[k0]).log10());
    let idx2: Vec<usize> = (0..freqs.len()).filter(|&k| freqs[k] >= f2 - 1.0 && freqs[k] <= f2 + 1.0).collect();
    let kpk = *idx2.iter().max_by(|&&a, &&b| acc_b[a].total_cmp(&acc_b[b])).unwrap();
    println!("fine: bench peak {:.3} Hz ratio {:.2} dB", freqs[kpk], 10.0*(acc_b[kpk]/acc_i[kpk]).log10());
    let _ = model::instantaneous_power(&State::zero(), 0.0);
}
