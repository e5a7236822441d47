use std::ops::Range;

use num_complex::Complex64;

use crate::dynamics::generator::Generator;
use crate::dynamics::{build_generator, DensityMatrix, DeviceModel, LeakagePolicy, NoiseConfig};
use crate::error::{Error, Result};
use crate::pulse::Schedule;

/// RK4 steps per sample.
pub const DEFAULT_SUBSTEPS: usize = 4;

const TRACE_TOLERANCE: f64 = 1e-5;

/// Lindblad part in a form cheap to apply on a row-major density matrix.
struct Dissipator {
    /// Elementwise decay `-½Γ1(n_i+n_j) - ½γ(n_i-n_j)²` summed over qubits, 1/ns.
    decay: Vec<f64>,
    /// Per qubit: `(Γ1, stride)` for the jump term `Γ1 a ρ a†`.
    jumps: Vec<(f64, usize)>,
    levels: usize,
}

impl Dissipator {
    fn new(gen: &Generator, noise: &NoiseConfig) -> Result<Option<Self>> {
        if !noise.is_active() {
            return Ok(None);
        }
        let n = gen.n_qubits;
        if noise.relaxation.len() != n || noise.dephasing.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: noise.relaxation.len().min(noise.dephasing.len()),
            });
        }
        let d = gen.dim;
        let lv = gen.levels;
        // Rates arrive in 1/µs; time is in ns.
        let g1: Vec<f64> = noise.relaxation.iter().map(|r| r / 1000.0).collect();
        // D[n] at 2Γφ dephases the 0-1 coherence at exactly Γφ.
        let gp: Vec<f64> = noise.dephasing.iter().map(|r| 2.0 * r / 1000.0).collect();
        let level = |i: usize, q: usize| ((i / lv.pow(q as u32)) % lv) as f64;
        let mut decay = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for q in 0..n {
                    let (a, b) = (level(i, q), level(j, q));
                    v -= 0.5 * g1[q] * (a + b) + 0.5 * gp[q] * (a - b) * (a - b);
                }
                decay[i * d + j] = v;
            }
        }
        let jumps = (0..n)
            .filter(|&q| g1[q] > 0.0)
            .map(|q| (g1[q], lv.pow(q as u32)))
            .collect();
        Ok(Some(Dissipator { decay, jumps, levels: lv }))
    }

    fn add(&self, rho: &[Complex64], out: &mut [Complex64], d: usize) {
        for ((o, r), g) in out.iter_mut().zip(rho).zip(&self.decay) {
            *o += r * *g;
        }
        let lv = self.levels;
        for &(g1, stride) in &self.jumps {
            for i in 0..d {
                let li = (i / stride) % lv;
                if li + 1 >= lv {
                    continue;
                }
                let wi = g1 * ((li + 1) as f64).sqrt();
                let src = (i + stride) * d;
                for j in 0..d {
                    let lj = (j / stride) % lv;
                    if lj + 1 >= lv {
                        continue;
                    }
                    out[i * d + j] += rho[src + j + stride] * (wi * ((lj + 1) as f64).sqrt());
                }
            }
        }
    }
}

struct Workspace {
    hr: Vec<Complex64>,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

fn rhs(
    gen: &Generator,
    diss: Option<&Dissipator>,
    j: usize,
    t: f64,
    rho: &[Complex64],
    hr: &mut [Complex64],
    out: &mut [Complex64],
) {
    let d = gen.dim;
    gen.apply(j, t, rho, hr);
    // -i[H, ρ] = -i(Hρ - (Hρ)†) for Hermitian ρ
    let mi = Complex64::new(0.0, -1.0);
    for a in 0..d {
        for b in 0..d {
            out[a * d + b] = mi * (hr[a * d + b] - hr[b * d + a].conj());
        }
    }
    if let Some(ds) = diss {
        ds.add(rho, out, d);
    }
}

/// Integrate the Lindblad equation over samples `span` of the generator.
///
/// The envelope is held constant within each sample; the rotating-frame
/// phase factors are evaluated at the exact stage times.
pub fn evolve(
    rho0: &DensityMatrix,
    gen: &Generator,
    noise: &NoiseConfig,
    span: Range<usize>,
    substeps: usize,
) -> Result<DensityMatrix> {
    if rho0.dim() != gen.dim || rho0.levels() != gen.levels {
        return Err(Error::Dimension {
            expected: gen.dim,
            found: rho0.dim(),
        });
    }
    let substeps = substeps.max(1);
    let diss = Dissipator::new(gen, noise)?;
    let d = gen.dim;
    let zero = Complex64::new(0.0, 0.0);
    let mut ws = Workspace {
        hr: vec![zero; d * d],
        k: [vec![zero; d * d], vec![zero; d * d], vec![zero; d * d], vec![zero; d * d]],
        tmp: vec![zero; d * d],
    };
    let mut rho = rho0.clone();
    let h = gen.dt / substeps as f64;
    for j in span {
        for m in 0..substeps {
            let t0 = gen.dt * j as f64 + h * m as f64;
            let y = rho.data().to_vec();
            let Workspace { hr, k, tmp } = &mut ws;
            let [k1, k2, k3, k4] = k;
            rhs(gen, diss.as_ref(), j, t0, &y, hr, k1);
            for ((t, a), b) in tmp.iter_mut().zip(&y).zip(k1.iter()) {
                *t = a + b * (0.5 * h);
            }
            rhs(gen, diss.as_ref(), j, t0 + 0.5 * h, tmp, hr, k2);
            for ((t, a), b) in tmp.iter_mut().zip(&y).zip(k2.iter()) {
                *t = a + b * (0.5 * h);
            }
            rhs(gen, diss.as_ref(), j, t0 + 0.5 * h, tmp, hr, k3);
            for ((t, a), b) in tmp.iter_mut().zip(&y).zip(k3.iter()) {
                *t = a + b * h;
            }
            rhs(gen, diss.as_ref(), j, t0 + h, tmp, hr, k4);
            let out = rho.data_mut();
            for idx in 0..d * d {
                out[idx] = y[idx] + (k1[idx] + (k2[idx] + k3[idx]) * 2.0 + k4[idx]) * (h / 6.0);
            }
        }
        rho.hermitize();
        let drift = (rho.trace() - 1.0).abs();
        if !(drift <= TRACE_TOLERANCE) {
            return Err(Error::IntegrationAccuracy { drift, sample: j });
        }
    }
    Ok(rho)
}

/// Play `schedule` on `device` starting from the ground state.
pub fn evolve_schedule(
    device: &DeviceModel,
    schedule: &Schedule,
    noise: &NoiseConfig,
    substeps: usize,
) -> Result<DensityMatrix> {
    let gen = build_generator(device, schedule)?;
    let rho0 = DensityMatrix::ground(device.n_qubits(), device.levels);
    evolve(&rho0, &gen, noise, 0..gen.n_samples(), substeps)
}

/// Discriminated outcome distribution over `2^n` bitstrings (qubit 0 = bit 0).
///
/// Levels above |1> are folded into 1 or 0 according to `policy`.
pub fn measure_probabilities(rho: &DensityMatrix, policy: LeakagePolicy) -> Result<Vec<f64>> {
    let n = rho.n_qubits();
    let lv = rho.levels();
    let mut probs = vec![0.0; 1 << n];
    for (i, p) in rho.populations().into_iter().enumerate() {
        if p < -1e-7 {
            return Err(Error::InvalidState(format!("negative population {p:e} at index {i}")));
        }
        let mut bits = 0usize;
        let mut rest = i;
        for q in 0..n {
            let l = rest % lv;
            rest /= lv;
            let one = match (l, policy) {
                (0, _) => false,
                (1, _) => true,
                (_, LeakagePolicy::AsOne) => true,
                (_, LeakagePolicy::AsZero) => false,
            };
            if one {
                bits |= 1 << q;
            }
        }
        probs[bits] += p.max(0.0);
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidState("zero total probability".into()));
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::tests::two_qubit_device;
    use crate::pulse::DragEnvelope;

    fn pulse_schedule(device: &DeviceModel, amp: f64, dur: u64) -> Schedule {
        let mut s = Schedule::new();
        let env = DragEnvelope::new(Complex64::new(amp, 0.0), 40.0, 0.0, dur).unwrap();
        s.play(0, device.drive_channel(0).unwrap(), env).unwrap();
        s
    }

    #[test]
    fn idle_without_noise_is_identity() {
        let d = two_qubit_device().first(1).unwrap();
        let mut s = pulse_schedule(&d, 0.0, 160);
        s.shift_phase(0, d.drive_channel(0).unwrap(), 0.3).unwrap();
        let plus = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let rho0 = DensityMatrix::from_pure(1, 3, &[plus, plus, z]).unwrap();
        let gen = build_generator(&d, &s).unwrap();
        let rho = evolve(&rho0, &gen, &NoiseConfig::off(1), 0..160, 4).unwrap();
        for (a, b) in rho.data().iter().zip(rho0.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn trailing_phase_equals_shifted_basis_pulse() {
        let d = two_qubit_device().first(1).unwrap();
        let ch = d.drive_channel(0).unwrap();
        let env = DragEnvelope::new(Complex64::new(0.5, 0.0), 40.0, 0.0, 96).unwrap();
        let phi = 1.1;
        let mut played = Schedule::new();
        played.play(0, ch, env).unwrap();
        played.shift_phase(96, ch, phi).unwrap();
        played.play(96, ch, env).unwrap();
        let direct = evolve_schedule(&d, &played, &NoiseConfig::off(1), 4).unwrap();

        let mut first = Schedule::new();
        first.play(0, ch, env).unwrap();
        first.shift_phase(96, ch, phi).unwrap();
        let mut rho = evolve_schedule(&d, &first, &NoiseConfig::off(1), 4).unwrap();
        rho.apply_frame_phases(&first.final_drive_phases(1));
        let mut second = Schedule::new();
        second.play(0, ch, env).unwrap();
        let gen = build_generator(&d, &second).unwrap();
        let via_frame = evolve(&rho, &gen, &NoiseConfig::off(1), 0..96, 4).unwrap();
        for (a, b) in direct.populations().iter().zip(via_frame.populations()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((direct.populations()[1] - 0.5).abs() > 0.05);
    }

    #[test]
    fn relaxation_matches_exponential() {
        let d = two_qubit_device().first(1).unwrap();
        let s = pulse_schedule(&d, 0.0, 4496);
        let gen = build_generator(&d, &s).unwrap();
        let rho0 = DensityMatrix::basis_state(1, 3, 1);
        let noise = NoiseConfig::from_device(&d, true);
        let t_ns = 4496.0 * d.dt;
        let rho = evolve(&rho0, &gen, &noise, 0..4496, 1).unwrap();
        let want = (-t_ns / 100_000.0).exp();
        assert!((rho.get(1, 1).re - want).abs() < 1e-9);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_decays_at_t2() {
        let d = two_qubit_device().first(1).unwrap();
        let s = pulse_schedule(&d, 0.0, 4496);
        let gen = build_generator(&d, &s).unwrap();
        let plus = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let rho0 = DensityMatrix::from_pure(1, 3, &[plus, plus, z]).unwrap();
        let noise = NoiseConfig::from_device(&d, true);
        let rho = evolve(&rho0, &gen, &noise, 0..4496, 1).unwrap();
        let t_ns = 4496.0 * d.dt;
        let want = 0.5 * (-t_ns / 100_000.0).exp();
        assert!((rho.get(0, 1).norm() - want).abs() < 1e-9);
    }

    #[test]
    fn driven_noisy_evolution_stays_physical() {
        let d = two_qubit_device();
        let mut s = Schedule::new();
        let env = DragEnvelope::new(Complex64::new(0.6, 0.1), 40.0, -1.0, 160).unwrap();
        s.play(0, d.drive_channel(0).unwrap(), env).unwrap();
        s.play(0, d.control_channel(1, 0).unwrap(), env).unwrap();
        let rho = evolve_schedule(&d, &s, &NoiseConfig::from_device(&d, true), 4).unwrap();
        rho.validate().unwrap();
        assert!(rho.purity() < 1.0);
        let p = measure_probabilities(&rho, LeakagePolicy::AsOne).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_evolution_preserves_purity() {
        let d = two_qubit_device();
        let mut s = Schedule::new();
        let env = DragEnvelope::new(Complex64::new(0.8, 0.0), 40.0, 0.0, 320).unwrap();
        s.play(0, d.control_channel(0, 1).unwrap(), env).unwrap();
        let rho = evolve_schedule(&d, &s, &NoiseConfig::off(2), 4).unwrap();
        let purity = rho.purity();
        assert!((purity - 1.0).abs() < 1e-6, "purity {purity}");
        assert!((rho.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn halving_the_step_converges() {
        let d = two_qubit_device().first(1).unwrap();
        let s = pulse_schedule(&d, 0.9, 96);
        let noise = NoiseConfig::off(1);
        let a = evolve_schedule(&d, &s, &noise, 2).unwrap();
        let b = evolve_schedule(&d, &s, &noise, 4).unwrap();
        let c = evolve_schedule(&d, &s, &noise, 8).unwrap();
        let diff = |x: &DensityMatrix, y: &DensityMatrix| {
            x.data().iter().zip(y.data()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
        };
        assert!(diff(&b, &c) < 1e-6);
        assert!(diff(&b, &c) < diff(&a, &b));
    }

    #[test]
    fn leakage_policy_folds_level_two() {
        let rho = DensityMatrix::basis_state(2, 3, 2);
        assert_eq!(measure_probabilities(&rho, LeakagePolicy::AsOne).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(measure_probabilities(&rho, LeakagePolicy::AsZero).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }
}
