//! Spectral-gap identification and the stabilizability (Hautus) test.
//!
//! The deflated generator's leading eigenvalues cluster: a few slow
//! metastable modes sit close to the origin, separated from the rest by a
//! spectral gap. The shift δ moves the slow cluster into the unstable half
//! plane; feedback must then see every shifted-unstable mode, which is the
//! Hautus condition: for each eigenvalue with `Re λ > −δ`, some control
//! vector must have a nonzero inner product with the corresponding left
//! eigenvector of `Â`.
//!
//! Near-degenerate eigenvalues make individual eigenvectors meaningless;
//! the check then falls back to an invariant-subspace test on an orthonormal
//! basis of the δ-unstable left subspace. The fallback's per-basis-row
//! magnitudes depend on the basis choice (only σ_min(VᵀB) is invariant);
//! on well-separated normal problems the Schur basis coincides with the
//! eigenvectors and the two tests agree, which is tested.

use crate::error::{KfpError, Result};
use matkernel::reorder::block_starts;
use matkernel::{dot, DenseMatrix};
use serde::Serialize;

/// A mode is "seen" by an input when the unit-left-eigenvector inner product
/// exceeds this; the continuum condition is only "≠ 0", so any threshold is
/// a numerical convention.
pub const HAUTUS_TOL: f64 = 1e-8;

/// Eigenvalues closer than this (both components) are treated as degenerate
/// and routed to the subspace fallback.
const DEGENERACY_TOL: f64 = 1e-10;

/// Below this largest relative gap the cluster boundary is reported with a
/// warning instead of being trusted.
const GAP_WARN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// Sorted spectrum with the detected leading-cluster boundary.
#[derive(Debug, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues sorted by descending real part (ties: descending
    /// imaginary part).
    pub eigenvalues: Vec<Eigenvalue>,
    /// Number of modes in the leading cluster: the gap follows
    /// `eigenvalues[gap_index − 1]`.
    pub gap_index: usize,
    /// `δ_spec`: magnitude of the real part of the last mode inside the
    /// leading cluster.
    pub gap_value: f64,
    /// Set when the largest relative gap among the leading modes is too
    /// small to be meaningful; `gap_index` is still reported.
    pub no_discernible_gap: bool,
}

/// Locate the spectral gap among the leading modes: the cluster boundary is
/// placed after the largest relative real-part drop
/// `(Re λ_i − Re λ_{i+1})/|Re λ_i|` among the leading ten modes. Conjugate
/// pairs share a real part (zero drop), so a pair is never split.
pub fn spectrum_report(a_hat: &DenseMatrix) -> Result<SpectrumReport> {
    let mut eigs = matkernel::schur::eigenvalues_only(a_hat)?;
    matkernel::schur::sort_spectrum(&mut eigs);
    Ok(report_from_sorted(&eigs))
}

fn report_from_sorted(eigs: &[(f64, f64)]) -> SpectrumReport {
    let scan = eigs.len().saturating_sub(1).min(10);
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0usize;
    for i in 0..scan {
        let rel = (eigs[i].0 - eigs[i + 1].0) / eigs[i].0.abs().max(1e-12);
        if rel > best {
            best = rel;
            arg = i;
        }
    }
    let gap_index = if eigs.len() <= 1 { eigs.len() } else { arg + 1 };
    SpectrumReport {
        eigenvalues: eigs.iter().map(|&(re, im)| Eigenvalue { re, im }).collect(),
        gap_index,
        gap_value: if gap_index == 0 { 0.0 } else { eigs[gap_index - 1].0.abs() },
        no_discernible_gap: !(best >= GAP_WARN_THRESHOLD),
    }
}

/// One δ-unstable mode's visibility to the inputs.
#[derive(Debug, Serialize)]
pub struct HautusMode {
    pub re: f64,
    pub im: f64,
    /// `|⟨b̂_i, ψ⟩|` per input against the unit left eigenvector (for a
    /// conjugate pair, the joint two-column magnitude, equal for both
    /// members); in the degenerate fallback, per input against one
    /// orthonormal basis vector of the δ-unstable left subspace.
    pub magnitudes: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct StabilizabilityReport {
    pub spectrum: SpectrumReport,
    pub delta: f64,
    pub hautus_tolerance: f64,
    /// Modes with `Re λ > −δ`, one entry per eigenvalue.
    pub modes: Vec<HautusMode>,
    /// True when near-degenerate eigenvalues forced the subspace test.
    pub degenerate_fallback: bool,
    pub passed: bool,
}

impl StabilizabilityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// The stabilizability check for the δ-shifted system. Validates that δ
/// stays below the post-cluster mode magnitude (the shifted system must keep
/// its unstable modes separated from the rest), then tests every δ-unstable
/// mode's visibility.
pub fn hautus_check(
    a_hat: &DenseMatrix,
    b_hats: &[Vec<f64>],
    delta: f64,
) -> Result<StabilizabilityReport> {
    let n = a_hat.rows();
    if !(delta.is_finite() && delta > 0.0) {
        return Err(KfpError::Config(format!("δ must be positive and finite, got {delta}")));
    }
    for (i, b) in b_hats.iter().enumerate() {
        if b.len() != n {
            return Err(KfpError::Grid(format!(
                "control vector {i} has length {} but the operator is {n}×{n}",
                b.len()
            )));
        }
    }
    let schur = matkernel::schur::real_schur(a_hat)?;
    let eigs_t_order = schur.eigenvalues();
    let mut sorted = eigs_t_order.clone();
    matkernel::schur::sort_spectrum(&mut sorted);
    let spectrum = report_from_sorted(&sorted);

    if spectrum.gap_index < sorted.len() {
        let clamp = sorted[spectrum.gap_index].0.abs();
        if delta >= clamp {
            return Err(KfpError::Config(format!(
                "δ = {delta} reaches past the spectral gap: the post-cluster mode has \
                 |Re λ| = {clamp:.6}; choose δ below it so the shifted unstable modes stay \
                 separated from the rest"
            )));
        }
    }

    let unstable_sorted: Vec<(f64, f64)> =
        sorted.iter().copied().filter(|e| e.0 > -delta).collect();

    let mut degenerate = false;
    for p in 0..unstable_sorted.len() {
        for q in p + 1..unstable_sorted.len() {
            let (a, b) = (unstable_sorted[p], unstable_sorted[q]);
            if (a.0 - b.0).abs() <= DEGENERACY_TOL && (a.1 - b.1).abs() <= DEGENERACY_TOL {
                degenerate = true;
            }
        }
    }

    let mut modes = Vec::new();
    if degenerate {
        // Orthonormal basis of the left δ-unstable subspace; one report row
        // per basis vector, carrying the eigenvalue it is paired with in
        // sorted order (individual eigenvectors are not meaningful here).
        let at = a_hat.transpose();
        let (v, _) = matkernel::spectrum::stable_invariant_subspace(&at, -delta)?;
        for (row, &(re, im)) in unstable_sorted.iter().enumerate().map(|(k, e)| (k, e)) {
            let mut mags = Vec::with_capacity(b_hats.len());
            for b in b_hats {
                let mut s = 0.0;
                for i in 0..n {
                    s += v[(i, row)] * b[i];
                }
                mags.push(s.abs());
            }
            let passed = mags.iter().copied().fold(0.0f64, f64::max) > HAUTUS_TOL;
            modes.push(HautusMode { re, im, magnitudes: mags, passed });
        }
    } else {
        for &(bs, size) in &block_starts(&schur.t) {
            let lam = eigs_t_order[bs];
            if lam.0 <= -delta {
                continue;
            }
            let (psi_re, psi_im) = matkernel::eigvec::left_eigvec(&schur.t, &schur.z, bs);
            let mut mags = Vec::with_capacity(b_hats.len());
            for b in b_hats {
                let r = dot(&psi_re, b);
                let m = match &psi_im {
                    Some(im) => r.hypot(dot(im, b)),
                    None => r.abs(),
                };
                mags.push(m);
            }
            let passed = mags.iter().copied().fold(0.0f64, f64::max) > HAUTUS_TOL;
            for member in 0..size {
                let im = if size == 2 {
                    if member == 0 { lam.1.abs() } else { -lam.1.abs() }
                } else {
                    lam.1
                };
                modes.push(HautusMode {
                    re: lam.0,
                    im,
                    magnitudes: mags.clone(),
                    passed,
                });
            }
        }
        modes.sort_by(|a, b| {
            (b.re, b.im)
                .partial_cmp(&(a.re, a.im))
                .expect("eigenvalues are finite")
        });
    }

    let passed = modes.iter().all(|m| m.passed);
    Ok(StabilizabilityReport {
        spectrum,
        delta,
        hautus_tolerance: HAUTUS_TOL,
        modes,
        degenerate_fallback: degenerate,
        passed,
    })
}
