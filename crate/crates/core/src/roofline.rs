//! Roofline model with disk bandwidth as the memory roof.
//!
//! Peak compute is `cpu_ghz / cycles_per_flop * threads` GFLOP/s; the ridge
//! point is `pi / beta` FLOP/byte for SSD bandwidth `beta` in GB/s. A
//! workload whose intensity (FLOPs per page over page bytes) sits strictly
//! above the ridge is compute-bound. One LUT lookup-and-add counts as one
//! FLOP; the exact-distance rerank is not counted.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineModel {
    pub cpu_ghz: f64,
    pub cycles_per_flop: f64,
    pub threads: u32,
    /// Peak SSD read bandwidth, GB/s.
    pub ssd_gbps: f64,
}

impl MachineModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.cpu_ghz) || !ok(self.cycles_per_flop) || !ok(self.ssd_gbps) || self.threads == 0 {
            return Err(Error::invalid(format!("machine parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadModel {
    pub flops_per_page: u64,
    pub page_bytes: u64,
}

impl WorkloadModel {
    pub fn validate(&self) -> Result<()> {
        if self.flops_per_page == 0 || self.page_bytes == 0 {
            return Err(Error::invalid(format!("workload parameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    IoBound,
    ComputeBound,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bound::IoBound => "io_bound",
            Bound::ComputeBound => "compute_bound",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RooflineReport {
    pub pi_gflops: f64,
    pub beta_gbps: f64,
    pub i_max: f64,
    pub intensity: f64,
    pub classification: Bound,
    pub attainable_gflops: f64,
}

impl RooflineReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "pi_gflops={}\nbeta_gbps={}\ni_max={}\nintensity={}\nclassification={}\nattainable_gflops={}\n",
            self.pi_gflops, self.beta_gbps, self.i_max, self.intensity, self.classification, self.attainable_gflops
        )
    }
}

impl fmt::Display for RooflineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "peak compute (pi)     {:>10.3} GFLOP/s", self.pi_gflops)?;
        writeln!(f, "disk bandwidth (beta) {:>10.3} GB/s", self.beta_gbps)?;
        writeln!(f, "ridge point (I_max)   {:>10.3} FLOP/byte", self.i_max)?;
        writeln!(f, "intensity (I)         {:>10.3} FLOP/byte", self.intensity)?;
        writeln!(f, "attainable            {:>10.3} GFLOP/s", self.attainable_gflops)?;
        write!(f, "classification        {:>10}", self.classification)
    }
}

pub fn peak_performance(machine: &MachineModel) -> f64 {
    machine.cpu_ghz / machine.cycles_per_flop * machine.threads as f64
}

pub fn intensity(workload: &WorkloadModel) -> f64 {
    workload.flops_per_page as f64 / workload.page_bytes as f64
}

pub fn classify(machine: &MachineModel, workload: &WorkloadModel) -> Result<RooflineReport> {
    machine.validate()?;
    workload.validate()?;
    let pi = peak_performance(machine);
    let beta = machine.ssd_gbps;
    let i_max = pi / beta;
    let i = intensity(workload);
    let classification = if i > i_max { Bound::ComputeBound } else { Bound::IoBound };
    Ok(RooflineReport {
        pi_gflops: pi,
        beta_gbps: beta,
        i_max,
        intensity: i,
        classification,
        attainable_gflops: pi.min(beta * i),
    })
}

/// FLOPs per page = `nodes_per_page * r * sub_vectors`.
pub fn derive_workload(r: u64, sub_vectors: u64, nodes_per_page: u64, page_bytes: u64) -> Result<WorkloadModel> {
    if r == 0 || sub_vectors == 0 || nodes_per_page == 0 || page_bytes == 0 {
        return Err(Error::invalid("r, sub_vectors, nodes_per_page and page_bytes must be positive"));
    }
    let w = WorkloadModel {
        flops_per_page: nodes_per_page * r * sub_vectors,
        page_bytes,
    };
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine(threads: u32) -> MachineModel {
        MachineModel {
            cpu_ghz: 2.1,
            cycles_per_flop: 3.0,
            threads,
            ssd_gbps: 11.1,
        }
    }

    #[test]
    fn peak_scales_with_threads() {
        assert!((peak_performance(&machine(48)) - 33.6).abs() < 1e-9);
        assert_eq!(peak_performance(&machine(96)), 2.0 * peak_performance(&machine(48)));
        let unit = MachineModel {
            cpu_ghz: 1.0,
            cycles_per_flop: 1.0,
            threads: 1,
            ssd_gbps: 1.0,
        };
        assert_eq!(peak_performance(&unit), 1.0);
    }

    #[test]
    fn boundary_is_io_bound() {
        let m = MachineModel {
            cpu_ghz: 2.0,
            cycles_per_flop: 1.0,
            threads: 1,
            ssd_gbps: 1.0,
        };
        let at = WorkloadModel {
            flops_per_page: 8192,
            page_bytes: 4096,
        };
        let r = classify(&m, &at).unwrap();
        assert_eq!(r.classification, Bound::IoBound);
        assert_eq!(r.attainable_gflops, r.pi_gflops);
        let above = WorkloadModel {
            flops_per_page: 8193,
            page_bytes: 4096,
        };
        assert_eq!(classify(&m, &above).unwrap().classification, Bound::ComputeBound);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(derive_workload(64, 48, 0, 4096).is_err());
        assert!(classify(&machine(0), &derive_workload(64, 48, 1, 4096).unwrap()).is_err());
    }
}
