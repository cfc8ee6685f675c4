use pagegraph::roofline::{classify, derive_workload, peak_performance, Bound, MachineModel, WorkloadModel};
use proptest::prelude::*;

fn server() -> MachineModel {
    MachineModel {
        cpu_ghz: 2.1,
        cycles_per_flop: 1.0,
        threads: 16,
        ssd_gbps: 11.1,
    }
}

#[test]
fn hand_computed_report() {
    // pi = 2.1 * 16 = 33.6 GFLOP/s, i_max = 33.6 / 11.1.
    let w = derive_workload(64, 48, 1, 8192).unwrap();
    assert_eq!(w.flops_per_page, 3072);
    let r = classify(&server(), &w).unwrap();
    assert!((r.pi_gflops - 33.6).abs() < 1e-12);
    assert!((r.i_max - 33.6 / 11.1).abs() < 1e-12);
    assert!((r.intensity - 0.375).abs() < 1e-12);
    assert_eq!(r.classification, Bound::IoBound);
    assert!((r.attainable_gflops - 11.1 * 0.375).abs() < 1e-12);
    let kv = r.to_key_values();
    assert!(kv.contains("classification=io_bound"));
    assert_eq!(kv.lines().count(), 6);
}

#[test]
fn packing_more_nodes_per_page_raises_intensity() {
    let one = derive_workload(64, 32, 1, 4096).unwrap();
    let eight = derive_workload(64, 32, 8, 4096).unwrap();
    assert_eq!(eight.flops_per_page, 8 * one.flops_per_page);
    let m = server();
    assert_eq!(classify(&m, &eight).unwrap().classification, Bound::ComputeBound);
}

proptest! {
    #[test]
    fn attainable_is_the_lower_roof(
        ghz in 0.5f64..5.0, cpf in 0.25f64..8.0, threads in 1u32..256, beta in 0.1f64..50.0,
        flops in 1u64..1_000_000, bytes in 1u64..1_000_000,
    ) {
        let m = MachineModel { cpu_ghz: ghz, cycles_per_flop: cpf, threads, ssd_gbps: beta };
        let w = WorkloadModel { flops_per_page: flops, page_bytes: bytes };
        let r = classify(&m, &w).unwrap();
        let i = flops as f64 / bytes as f64;
        prop_assert!((r.pi_gflops - ghz / cpf * threads as f64).abs() <= 1e-9 * r.pi_gflops);
        prop_assert!((r.attainable_gflops - r.pi_gflops.min(beta * i)).abs() <= 1e-9 * r.pi_gflops.max(1.0));
        prop_assert_eq!(r.classification == Bound::ComputeBound, i > r.i_max);
        prop_assert!(r.attainable_gflops <= r.pi_gflops * (1.0 + 1e-12));
    }

    #[test]
    fn peak_is_linear_in_threads(ghz in 0.5f64..5.0, cpf in 0.25f64..8.0, t in 1u32..128) {
        let m = MachineModel { cpu_ghz: ghz, cycles_per_flop: cpf, threads: t, ssd_gbps: 1.0 };
        let m2 = MachineModel { threads: 2 * t, ..m };
        prop_assert!((peak_performance(&m2) - 2.0 * peak_performance(&m)).abs() <= 1e-9 * peak_performance(&m2));
    }
}
