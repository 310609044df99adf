use ipva::design::point3;
use ipva::params::{State, SuspensionParams};
use ipva::road::{self, RoadModel};
use ipva::sim::{self, BenchmarkPlant, IpvaPlant};

fn main() {
    let base = SuspensionParams::table1();
    let p3 = point3().apply(&base);
    let mut rm = RoadModel::default();
    rm.v = std::env::args().nth(4).map(|a| a.parse().unwrap()).unwrap_or(rm.v);
    let dur: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let nseeds: u64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let seg: usize = std::env::args().nth(3).unwrap().parse().unwrap();
    let skip = 0usize;
    let w0 = (base.ks / base.ms).sqrt();
    let mut acc_i = vec![]; let mut acc_b = vec![]; let mut freqs = vec![];
    for seed in 0..nseeds {
        let signal = road::generate(&RoadModel { seed, ..rm }, dur);
        let ti = sim::integrate(&IpvaPlant { params: p3 }, State::zero(), |_, _| 0.225, &signal, dur).unwrap();
        let tb = sim::integrate(&BenchmarkPlant { params: base }, State::zero(), |_, _| 0.225, &signal, dur).unwrap();
        let (f, a1) = sim::psd(&ti.accelerations[skip..], rm.ts, seg).unwrap();
        let (_, a2) = sim::psd(&tb.accelerations[skip..], rm.ts, seg).unwrap();
        if acc_i.is_empty() {
            acc_i = vec![0.0; a1.len()]; acc_b = acc_i.clone();
            freqs = f.iter().map(|w| w / std::f64::consts::TAU).collect();
        }
        for k in 0..a1.len() { acc_i[k] += a1[k]; acc_b[k] += a2[k]; }
    }
    let f2 = 5.18 * w0 / std::f64::consts::TAU;
    let k0 = (0..freqs.len()).min_by(|&a,&b| (freqs[a]-f2).abs().total_cmp(&(freqs[b]-f2).abs())).unwrap();
    println!("at 5.18w0 ({:.2} Hz): ipva {:.4e} bench {:.4e} ratio {:.2} dB", freqs[k0], acc_i[k0], acc_b[k0], 10.0*(acc_b[k0]/acc_i[k0]).log10());
    let idx2: Vec<usize> = (0..freqs.len()).filter(|&k| freqs[k] >= f2 - 1.0 && freqs[k] <= f2 + 1.0).collect();
    let kpk = *idx2.iter().max_by(|&&a, &&b| acc_b[a].total_cmp(&acc_b[b])).unwrap();
    println!("bench peak at {:.3} Hz: ipva {:.4e} bench {:.4e} ratio {:.2} dB", freqs[kpk], acc_i[kpk], acc_b[kpk], 10.0*(acc_b[kpk]/acc_i[kpk]).log10());
}
