//! Online temporal statistics and spanwise (column) averaging.

use crate::error::{Error, Result};
use crate::mesh::Topology;
use crate::solver::{Snapshot, IP, IU};
use crate::vec3::{Mat3, Vec3};

/// Symmetric tensor stored as `[xx, yy, zz, xy, xz, yz]`.
pub type Sym3 = [f64; 6];

const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

pub fn sym_to_mat(s: &Sym3) -> Mat3 {
    [[s[0], s[3], s[4]], [s[3], s[1], s[5]], [s[4], s[5], s[2]]]
}

/// Per-leaf running means with Welford co-moments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub n_samples: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub mean_u: Vec<Vec3>,
    /// Sum of `(u_i - mean_i)(u_j - mean_j)` over samples.
    pub comoment: Vec<Sym3>,
    pub mean_p: Vec<f64>,
    pub mean_nu_t: Vec<f64>,
    /// Mean of `tau_ij du_i/dx_j`.
    pub mean_strain_work: Vec<f64>,
    pub mean_forcing: f64,
}

impl RunningStats {
    pub fn new(n: usize) -> Self {
        RunningStats {
            n_samples: 0,
            t_start: f64::NAN,
            t_end: f64::NAN,
            mean_u: vec![[0.0; 3]; n],
            comoment: vec![[0.0; 6]; n],
            mean_p: vec![0.0; n],
            mean_nu_t: vec![0.0; n],
            mean_strain_work: vec![0.0; n],
            mean_forcing: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.mean_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_u.is_empty()
    }

    /// Add one snapshot; `strain_work` is `tau_ij du_i/dx_j` of that snapshot.
    pub fn accumulate(&mut self, snap: &Snapshot, strain_work: &[f64]) -> Result<()> {
        let s = &snap.state;
        if s.len() != self.len() || strain_work.len() != self.len() {
            return Err(Error::Stats(format!(
                "snapshot has {} leaves, statistics have {}",
                s.len(),
                self.len()
            )));
        }
        if self.n_samples > 0 && !(s.time > self.t_end) {
            return Err(Error::Stats(format!(
                "snapshot at t = {} does not follow the last sample at t = {}",
                s.time, self.t_end
            )));
        }
        if self.n_samples == 0 {
            self.t_start = s.time;
        }
        self.t_end = s.time;
        self.n_samples += 1;
        let n = self.n_samples as f64;
        for i in 0..self.len() {
            let w = &s.w[i];
            let u = [w[IU], w[IU + 1], w[IU + 2]];
            let m = &mut self.mean_u[i];
            let d0: Vec3 = std::array::from_fn(|a| u[a] - m[a]);
            for a in 0..3 {
                m[a] += d0[a] / n;
            }
            let d1: Vec3 = std::array::from_fn(|a| u[a] - m[a]);
            let c = &mut self.comoment[i];
            for (k, (a, b)) in PAIRS.iter().enumerate() {
                c[k] += d0[*a] * d1[*b];
            }
            self.mean_p[i] += (w[IP] - self.mean_p[i]) / n;
            self.mean_nu_t[i] += (s.nu_t[i] - self.mean_nu_t[i]) / n;
            self.mean_strain_work[i] += (strain_work[i] - self.mean_strain_work[i]) / n;
        }
        self.mean_forcing += (snap.forcing - self.mean_forcing) / n;
        Ok(())
    }

    /// Statistics of the union of two disjoint windows, `self` first.
    pub fn merge(&self, other: &RunningStats) -> Result<RunningStats> {
        if self.len() != other.len() {
            return Err(Error::Stats("merging statistics of different meshes".into()));
        }
        if self.n_samples == 0 {
            return Ok(other.clone());
        }
        if other.n_samples == 0 {
            return Ok(self.clone());
        }
        if !(other.t_start > self.t_end) {
            return Err(Error::Stats(format!(
                "windows overlap: [{}, {}] and [{}, {}]",
                self.t_start, self.t_end, other.t_start, other.t_end
            )));
        }
        let (na, nb) = (self.n_samples as f64, other.n_samples as f64);
        let n = na + nb;
        let mix = |a: f64, b: f64| a + (b - a) * nb / n;
        let mut out = RunningStats::new(self.len());
        out.n_samples = self.n_samples + other.n_samples;
        out.t_start = self.t_start;
        out.t_end = other.t_end;
        for i in 0..self.len() {
            let (ma, mb) = (self.mean_u[i], other.mean_u[i]);
            let d: Vec3 = std::array::from_fn(|a| mb[a] - ma[a]);
            out.mean_u[i] = std::array::from_fn(|a| mix(ma[a], mb[a]));
            for (k, (a, b)) in PAIRS.iter().enumerate() {
                out.comoment[i][k] =
                    self.comoment[i][k] + other.comoment[i][k] + d[*a] * d[*b] * na * nb / n;
            }
            out.mean_p[i] = mix(self.mean_p[i], other.mean_p[i]);
            out.mean_nu_t[i] = mix(self.mean_nu_t[i], other.mean_nu_t[i]);
            out.mean_strain_work[i] = mix(self.mean_strain_work[i], other.mean_strain_work[i]);
        }
        out.mean_forcing = mix(self.mean_forcing, other.mean_forcing);
        Ok(out)
    }

    /// Population covariance `<u'_i u'_j>` of leaf `i`.
    pub fn covariance(&self, i: usize) -> Sym3 {
        let n = self.n_samples.max(1) as f64;
        self.comoment[i].map(|c| c / n)
    }

    /// `<u_i u_j>` of leaf `i`.
    pub fn mean_uu(&self, i: usize) -> Sym3 {
        let mut c = self.covariance(i);
        let m = self.mean_u[i];
        for (k, (a, b)) in PAIRS.iter().enumerate() {
            c[k] += m[*a] * m[*b];
        }
        c
    }
}

/// Resolved TKE `1/2 <u'_i u'_i>` per leaf.
pub fn resolved_tke(stats: &RunningStats) -> Result<Vec<f64>> {
    if stats.n_samples < 2 {
        return Err(Error::Stats(format!(
            "resolved TKE needs at least 2 samples, have {}",
            stats.n_samples
        )));
    }
    Ok((0..stats.len())
        .map(|i| {
            let c = stats.covariance(i);
            let k = 0.5 * (c[0] + c[1] + c[2]);
            if k < 0.0 && k > -1e-12 {
                0.0
            } else {
                k
            }
        })
        .collect())
}

/// Volume-weighted mean of a leaf field over each base column.
pub fn spanwise_average(field: &[f64], topo: &Topology) -> Vec<f64> {
    let mut sum = vec![0.0; topo.n_columns];
    let mut vol = vec![0.0; topo.n_columns];
    for (i, v) in field.iter().enumerate() {
        let c = topo.column[i] as usize;
        sum[c] += v * topo.volume[i];
        vol[c] += topo.volume[i];
    }
    sum.iter().zip(&vol).map(|(s, v)| s / v).collect()
}

/// Copy each column value to every leaf in that column.
pub fn broadcast(columns: &[f64], topo: &Topology) -> Vec<f64> {
    topo.column.iter().map(|c| columns[*c as usize]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GridConfig, Mesh};
    use crate::solver::FlowState;
    use proptest::prelude::*;

    fn snap(t: f64, us: &[Vec3]) -> Snapshot {
        let mut s = FlowState::zeros(us.len());
        s.time = t;
        for (w, u) in s.w.iter_mut().zip(us) {
            w[IU..IU + 3].copy_from_slice(u);
        }
        Snapshot {
            state: s,
            forcing: 0.0,
        }
    }

    fn feed(series: &[(f64, Vec<Vec3>)]) -> RunningStats {
        let n = series[0].1.len();
        let mut st = RunningStats::new(n);
        for (t, u) in series {
            st.accumulate(&snap(*t, u), &vec![0.0; n]).unwrap();
        }
        st
    }

    #[test]
    fn constant_field_has_no_fluctuations() {
        let series: Vec<_> = (0..5).map(|k| (k as f64, vec![[1.0, 2.0, 3.0]])).collect();
        let st = feed(&series);
        assert_eq!(st.mean_u[0], [1.0, 2.0, 3.0]);
        assert_eq!(resolved_tke(&st).unwrap()[0], 0.0);
    }

    #[test]
    fn alternating_sign_has_unit_variance() {
        let series: Vec<_> = (0..6)
            .map(|k| (k as f64, vec![[if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0]]))
            .collect();
        let st = feed(&series);
        assert!(st.mean_u[0][0].abs() < 1e-15);
        assert!((st.covariance(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_sample_population_variance() {
        let series: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(k, u)| (k as f64, vec![[*u, 0.0, 0.0]]))
            .collect();
        let st = feed(&series);
        assert!((st.mean_u[0][0] - 2.0).abs() < 1e-15);
        assert!((st.covariance(0)[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unit_variance_components_give_three_halves() {
        // +-1 on each component independently (all sign combinations)
        let mut series = Vec::new();
        for k in 0..8 {
            let s = |b: usize| if (k >> b) & 1 == 1 { 1.0 } else { -1.0 };
            series.push((k as f64, vec![[s(0), s(1), s(2)]]));
        }
        let st = feed(&series);
        assert!((resolved_tke(&st).unwrap()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn sinusoid_tke_is_quarter_amplitude_squared() {
        let a: f64 = 0.7;
        let n = 64;
        let series: Vec<_> = (0..n)
            .map(|k| {
                let ph = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (k as f64, vec![[a * ph.sin(), 0.0, 0.0]])
            })
            .collect();
        let st = feed(&series);
        assert!((resolved_tke(&st).unwrap()[0] - a * a / 4.0).abs() < 1e-14);
    }

    #[test]
    fn out_of_order_and_short_windows_are_errors() {
        let mut st = RunningStats::new(1);
        st.accumulate(&snap(1.0, &[[0.0; 3]]), &[0.0]).unwrap();
        assert!(matches!(resolved_tke(&st), Err(Error::Stats(_))));
        assert!(matches!(
            st.accumulate(&snap(1.0, &[[0.0; 3]]), &[0.0]),
            Err(Error::Stats(_))
        ));
    }

    #[test]
    fn column_average_examples() {
        let m = Mesh::from_config(&GridConfig::cartesian([2, 2, 4], [1.0; 3], [true; 3]), 1.0).unwrap();
        let t = Topology::build(&m);
        let z: Vec<f64> = t.centroid.iter().map(|c| c[2]).collect();
        for v in spanwise_average(&z, &t) {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let x: Vec<f64> = t.centroid.iter().map(|c| c[0]).collect();
        let avg = spanwise_average(&x, &t);
        for (i, c) in t.column.iter().enumerate() {
            assert!((avg[*c as usize] - x[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_level_column_is_volume_weighted() {
        let mut m = Mesh::from_config(&GridConfig::cartesian([2, 2, 2], [1.0; 3], [true; 3]), 1.0).unwrap();
        m.refine(&[0]).unwrap();
        let t = Topology::build(&m);
        let f: Vec<f64> = (0..t.n_leaves()).map(|i| (i * i) as f64 * 0.1).collect();
        let avg = spanwise_average(&f, &t);
        for col in 0..t.n_columns {
            let (mut s, mut v) = (0.0, 0.0);
            for i in 0..t.n_leaves() {
                if t.column[i] as usize == col {
                    s += f[i] * t.volume[i];
                    v += t.volume[i];
                }
            }
            assert!((avg[col] - s / v).abs() < 1e-14);
        }
        let again = spanwise_average(&broadcast(&avg, &t), &t);
        for (a, b) in avg.iter().zip(&again) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn merge_equals_union(
            xs in proptest::collection::vec(proptest::array::uniform3(-3.0f64..3.0), 2..30),
            split in 1usize..29,
        ) {
            let split = split.min(xs.len() - 1);
            let series: Vec<_> = xs.iter().enumerate().map(|(k, u)| (k as f64, vec![*u])).collect();
            let all = feed(&series);
            let merged = feed(&series[..split]).merge(&feed(&series[split..])).unwrap();
            for a in 0..3 {
                prop_assert!((all.mean_u[0][a] - merged.mean_u[0][a]).abs() < 1e-12);
            }
            for k in 0..6 {
                prop_assert!((all.covariance(0)[k] - merged.covariance(0)[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn tke_ignores_constant_offsets(
            xs in proptest::collection::vec(proptest::array::uniform3(-3.0f64..3.0), 2..20),
            off in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let a: Vec<_> = xs.iter().enumerate().map(|(k, u)| (k as f64, vec![*u])).collect();
            let b: Vec<_> = xs
                .iter()
                .enumerate()
                .map(|(k, u)| (k as f64, vec![[u[0] + off[0], u[1] + off[1], u[2] + off[2]]]))
                .collect();
            let ka = resolved_tke(&feed(&a)).unwrap()[0];
            let kb = resolved_tke(&feed(&b)).unwrap()[0];
            prop_assert!(ka >= 0.0);
            prop_assert!((ka - kb).abs() < 1e-11);
        }
    }
}
