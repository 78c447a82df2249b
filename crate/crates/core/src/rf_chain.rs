//! Transmit RF chain nonidealities: IQ mixer imbalance followed by a
//! parallel-Hammerstein power amplifier.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::ComplexSequence;

/// Gain and phase mismatch between the I and Q rails of the upconverter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqImbalance {
    /// Gain imbalance `g` (dimensionless, 1 is ideal).
    pub gain: f64,
    /// Phase imbalance `phi` in radians.
    pub phase: f64,
}

impl IqImbalance {
    pub fn new(gain: f64, phase: f64) -> Result<Self> {
        if !gain.is_finite() || gain <= 0.0 {
            return Err(invalid("gain", format!("must be finite and positive, got {gain}")));
        }
        if !phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
        Ok(Self { gain, phase })
    }

    pub const fn ideal() -> Self {
        Self {
            gain: 1.0,
            phase: 0.0,
        }
    }

    /// Direct-path coefficient `(1 + g e^{j phi}) / 2`.
    pub fn k1(&self) -> Complex64 {
        0.5 * (Complex64::new(1.0, 0.0) + Complex64::from_polar(self.gain, self.phase))
    }

    /// Image coefficient `(1 - g e^{j phi}) / 2`.
    pub fn k2(&self) -> Complex64 {
        0.5 * (Complex64::new(1.0, 0.0) - Complex64::from_polar(self.gain, self.phase))
    }

    /// Image rejection `|K2|^2 / |K1|^2` in dB.
    pub fn image_rejection_db(&self) -> f64 {
        10.0 * (self.k2().norm_sqr() / self.k1().norm_sqr()).log10()
    }
}

impl Default for IqImbalance {
    fn default() -> Self {
        Self {
            gain: 1.05,
            phase: 0.05,
        }
    }
}

/// Parallel-Hammerstein PA: one FIR branch per odd nonlinearity order.
///
/// `branches[i]` holds the impulse response of order `p = 2i + 1` and has
/// `memory + 1` taps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PaModelRepr", into = "PaModelRepr")]
pub struct PaModel {
    branches: Vec<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PaModelRepr {
    /// Per odd order (1, 3, 5, ...), the complex taps `v_p[0..=M]`.
    branches: Vec<Vec<Complex64>>,
}

impl TryFrom<PaModelRepr> for PaModel {
    type Error = crate::Error;

    fn try_from(repr: PaModelRepr) -> Result<Self> {
        PaModel::new(repr.branches)
    }
}

impl From<PaModel> for PaModelRepr {
    fn from(pa: PaModel) -> Self {
        Self {
            branches: pa.branches,
        }
    }
}

impl PaModel {
    pub fn new(branches: Vec<Vec<Complex64>>) -> Result<Self> {
        let taps = branches
            .first()
            .ok_or_else(|| invalid("branches", "at least the linear branch is required"))?
            .len();
        if taps == 0 {
            return Err(invalid("branches", "each branch needs at least one tap"));
        }
        if branches.iter().any(|b| b.len() != taps) {
            return Err(invalid("branches", "all branches must have the same memory length"));
        }
        if branches.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("branches", "coefficients must be finite"));
        }
        Ok(Self { branches })
    }

    /// The PA that passes its input through unchanged (`P = 1`, `M = 0`).
    pub fn identity() -> Self {
        Self {
            branches: vec![vec![Complex64::new(1.0, 0.0)]],
        }
    }

    /// Highest nonlinearity order `P` (odd).
    pub fn order(&self) -> usize {
        2 * self.branches.len() - 1
    }

    /// Memory length `M`; each branch spans lags `0..=M`.
    pub fn memory(&self) -> usize {
        self.branches[0].len() - 1
    }

    /// Tap `m` of the order-`p` branch, or `None` for even or absent orders.
    pub fn coefficient(&self, order: usize, lag: usize) -> Option<Complex64> {
        if order.is_multiple_of(2) {
            return None;
        }
        self.branches.get(order / 2)?.get(lag).copied()
    }

    pub fn branches(&self) -> &[Vec<Complex64>] {
        &self.branches
    }

    /// True when the linear main tap outweighs every other tap combined.
    pub fn is_weakly_nonlinear(&self) -> bool {
        let main = self.branches[0][0].norm();
        let rest: f64 = self.branches.iter().flatten().map(|v| v.norm()).sum::<f64>() - main;
        main > rest
    }

    /// Rescales the coefficients so that a PA specified for unit-power
    /// input acts on signals of mean power `reference_watts` with the same
    /// relative distortion: `v_p -> v_p * reference^{-(p-1)/2}`.
    pub fn referenced_to(&self, reference_watts: f64) -> Result<Self> {
        if !(reference_watts.is_finite() && reference_watts > 0.0) {
            return Err(invalid("reference_watts", "must be finite and positive"));
        }
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(i, taps)| {
                let scale = reference_watts.powi(-(i as i32));
                taps.iter().map(|v| v * scale).collect()
            })
            .collect();
        Ok(Self { branches })
    }
}

impl Default for PaModel {
    /// `P = 3`, `M = 2`, about 22 dB between linear output and the
    /// in-band cubic distortion for unit-power OFDM.
    fn default() -> Self {
        let c = Complex64::new;
        Self {
            branches: vec![
                vec![c(1.0, 0.0), c(0.05, 0.0), c(0.01, 0.0)],
                vec![c(-0.04, -0.01), c(-0.005, 0.0), c(-0.0025, 0.0)],
            ],
        }
    }
}

/// One antenna's full set of transmit impairments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfChainParams {
    pub iq: IqImbalance,
    pub pa: PaModel,
}

impl RfChainParams {
    pub fn ideal() -> Self {
        Self {
            iq: IqImbalance::ideal(),
            pa: PaModel::identity(),
        }
    }
}

/// `y[n] = K1 x[n] + K2 x*[n]`.
pub fn apply_iq_mixer(x: &[Complex64], iq: &IqImbalance) -> ComplexSequence {
    let (k1, k2) = (iq.k1(), iq.k2());
    x.iter().map(|&v| k1 * v + k2 * v.conj()).collect()
}

/// `y[n] = sum_p sum_m v_p[m] x[n-m] |x[n-m]|^{p-1}`, zero history before `n = 0`.
pub fn apply_pa(x: &[Complex64], pa: &PaModel) -> ComplexSequence {
    let taps = pa.memory() + 1;
    // Per-sample odd-order basis x|x|^{p-1}, reused across the memory taps.
    let orders = pa.branches.len();
    let mut basis = vec![Complex64::default(); x.len() * orders];
    for (n, &v) in x.iter().enumerate() {
        let mag2 = v.norm_sqr();
        let mut term = v;
        for slot in &mut basis[n * orders..(n + 1) * orders] {
            *slot = term;
            term *= mag2;
        }
    }
    (0..x.len())
        .map(|n| {
            let mut acc = Complex64::default();
            for m in 0..taps.min(n + 1) {
                let row = &basis[(n - m) * orders..(n - m + 1) * orders];
                for (branch, b) in pa.branches.iter().zip(row) {
                    acc += branch[m] * b;
                }
            }
            acc
        })
        .collect()
}

/// IQ mixer followed by the PA.
pub fn transmit_chain(d: &[Complex64], iq: &IqImbalance, pa: &PaModel) -> ComplexSequence {
    apply_pa(&apply_iq_mixer(d, iq), pa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn ideal_mixer_is_identity() {
        let x = vec![c(0.3, -1.2), c(2.0, 0.5)];
        assert_eq!(apply_iq_mixer(&x, &IqImbalance::ideal()), x);
    }

    #[test]
    fn gain_imbalance_on_quadrature_input() {
        let iq = IqImbalance::new(1.1, 0.0).unwrap();
        let y = apply_iq_mixer(&[c(0.0, 1.0)], &iq);
        assert!(close(y[0], c(0.0, 1.1), 1e-15));
    }

    #[test]
    fn real_input_passes_unchanged() {
        let iq = IqImbalance::new(0.93, -0.07).unwrap();
        let x = vec![c(0.7, 0.0), c(-3.0, 0.0)];
        for (a, b) in apply_iq_mixer(&x, &iq).iter().zip(&x) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn rejects_nonpositive_gain() {
        assert!(IqImbalance::new(0.0, 0.0).is_err());
        assert!(IqImbalance::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn direct_path_dominates_over_configured_range() {
        for g in [0.9, 0.95, 1.0, 1.05, 1.1] {
            for phi in [-0.1, -0.05, 0.0, 0.05, 0.1] {
                let iq = IqImbalance::new(g, phi).unwrap();
                assert!(iq.k1().norm() > iq.k2().norm());
            }
        }
    }

    #[test]
    fn identity_pa() {
        let x = vec![c(0.1, 0.2), c(-1.0, 3.0)];
        assert_eq!(apply_pa(&x, &PaModel::identity()), x);
    }

    #[test]
    fn memoryless_cubic_compression() {
        let pa = PaModel::new(vec![vec![c(1.0, 0.0)], vec![c(-0.1, 0.0)]]).unwrap();
        let y = apply_pa(&[c(1.0, 0.0)], &pa);
        assert!(close(y[0], c(0.9, 0.0), 1e-15));
    }

    #[test]
    fn linear_memory_convolves() {
        let pa = PaModel::new(vec![vec![c(1.0, 0.0), c(0.5, 0.0)]]).unwrap();
        let y = apply_pa(&[c(1.0, 0.0), c(0.0, 0.0)], &pa);
        assert_eq!(y, vec![c(1.0, 0.0), c(0.5, 0.0)]);
    }

    #[test]
    fn pa_rejects_ragged_branches() {
        assert!(PaModel::new(vec![vec![c(1.0, 0.0)], vec![c(0.1, 0.0), c(0.0, 0.0)]]).is_err());
        assert!(PaModel::new(vec![]).is_err());
    }

    #[test]
    fn default_pa_shape() {
        let pa = PaModel::default();
        assert_eq!(pa.order(), 3);
        assert_eq!(pa.memory(), 2);
        assert!(pa.is_weakly_nonlinear());
        assert_eq!(pa.coefficient(2, 0), None);
        assert_eq!(pa.coefficient(5, 0), None);
    }

    #[test]
    fn chain_with_ideal_mixer_reduces_to_pa() {
        let pa = PaModel::new(vec![vec![c(1.0, 0.0)], vec![c(-0.05, 0.02)]]).unwrap();
        let x: Vec<_> = (0..8).map(|n| c(n as f64 * 0.1, -0.2)).collect();
        assert_eq!(transmit_chain(&x, &IqImbalance::ideal(), &pa), apply_pa(&x, &pa));
        assert_eq!(
            transmit_chain(&x, &IqImbalance::ideal(), &PaModel::identity()),
            x
        );
    }

    /// Straight-line evaluation of the mixer and PA formulas, written
    /// without the shared basis cache.
    fn chain_oracle(d: &[Complex64], g: f64, phi: f64, v: &[Vec<Complex64>]) -> Vec<Complex64> {
        let e = c(phi.cos(), phi.sin()) * g;
        let k1 = (c(1.0, 0.0) + e) / 2.0;
        let k2 = (c(1.0, 0.0) - e) / 2.0;
        let iq: Vec<_> = d.iter().map(|&x| k1 * x + k2 * x.conj()).collect();
        let mut out = vec![c(0.0, 0.0); d.len()];
        for n in 0..d.len() {
            for (i, branch) in v.iter().enumerate() {
                let p = 2 * i + 1;
                for (m, coeff) in branch.iter().enumerate() {
                    if n >= m {
                        let x = iq[n - m];
                        out[n] += coeff * x * x.norm().powi(p as i32 - 1);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn chain_matches_straight_line_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let d: Vec<_> = (0..16)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let v: Vec<Vec<Complex64>> = (0..3)
            .map(|_| {
                (0..3)
                    .map(|_| c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
                    .collect()
            })
            .collect();
        let (g, phi) = (1.07, -0.04);
        let pa = PaModel::new(v.clone()).unwrap();
        let got = transmit_chain(&d, &IqImbalance::new(g, phi).unwrap(), &pa);
        let want = chain_oracle(&d, g, phi, &v);
        for (a, b) in got.iter().zip(&want) {
            assert!(close(*a, *b, 1e-13), "{a} vs {b}");
        }
    }

    #[test]
    fn referencing_preserves_relative_distortion() {
        let pa = PaModel::default();
        let reference = 50.0;
        let scaled = pa.referenced_to(reference).unwrap();
        let x: Vec<_> = (0..32).map(|n| c((n as f64 * 0.3).sin(), (n as f64 * 0.7).cos())).collect();
        let big: Vec<_> = x.iter().map(|v| v * reference.sqrt()).collect();
        let y = apply_pa(&x, &pa);
        let y_big = apply_pa(&big, &scaled);
        for (a, b) in y.iter().zip(&y_big) {
            assert!(close(a * reference.sqrt(), *b, 1e-13));
        }
    }

    #[test]
    fn pa_roundtrips_through_json() {
        let pa = PaModel::default();
        let text = serde_json::to_string(&pa).unwrap();
        let back: PaModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, pa);
        assert!(serde_json::from_str::<PaModel>(r#"{"branches": []}"#).is_err());
    }

    fn arb_seq(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| c(a, b)), len)
    }

    proptest! {
        #[test]
        fn k1_plus_k2_is_one(g in 0.5f64..1.5, phi in -0.5f64..0.5) {
            let iq = IqImbalance::new(g, phi).unwrap();
            let sum = iq.k1() + iq.k2();
            prop_assert!((sum - c(1.0, 0.0)).norm() <= 1e-15);
        }

        #[test]
        fn mixer_is_real_linear(x in arb_seq(12), z in arb_seq(12), a in -3.0f64..3.0, b in -3.0f64..3.0,
                                g in 0.9f64..1.1, phi in -0.1f64..0.1) {
            let iq = IqImbalance::new(g, phi).unwrap();
            let combo: Vec<_> = x.iter().zip(&z).map(|(u, v)| u * a + v * b).collect();
            let lhs = apply_iq_mixer(&combo, &iq);
            let (mx, mz) = (apply_iq_mixer(&x, &iq), apply_iq_mixer(&z, &iq));
            for n in 0..x.len() {
                prop_assert!(close(lhs[n], mx[n] * a + mz[n] * b, 1e-12));
            }
        }

        #[test]
        fn linear_pa_superposes(x in arb_seq(10), z in arb_seq(10), a in arb_seq(1), b in arb_seq(1)) {
            let pa = PaModel::new(vec![vec![c(1.0, 0.1), c(0.2, -0.3), c(0.05, 0.0)]]).unwrap();
            let (a, b) = (a[0], b[0]);
            let combo: Vec<_> = x.iter().zip(&z).map(|(u, v)| u * a + v * b).collect();
            let lhs = apply_pa(&combo, &pa);
            let (px, pz) = (apply_pa(&x, &pa), apply_pa(&z, &pa));
            for n in 0..x.len() {
                prop_assert!(close(lhs[n], px[n] * a + pz[n] * b, 1e-12));
            }
        }

        #[test]
        fn cubic_branch_scales_with_c_abs_c_squared(x in arb_seq(8), cr in -2.0f64..2.0, ci in -2.0f64..2.0) {
            let pa = PaModel::new(vec![vec![c(0.0, 0.0)], vec![c(-0.08, -0.02)]]).unwrap();
            let k = c(cr, ci);
            let scaled: Vec<_> = x.iter().map(|v| v * k).collect();
            let lhs = apply_pa(&scaled, &pa);
            let rhs = apply_pa(&x, &pa);
            for n in 0..x.len() {
                prop_assert!(close(lhs[n], rhs[n] * k * k.norm_sqr(), 1e-12));
            }
        }
    }
}
