//! Registry mapping each method formula to the function implementing it.
//!
//! `docs/method-map.md` is generated from this table; a test fails when the
//! file drifts or when an in-scope formula has no registration.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MethodEntry {
    /// Stable formula name; also the key checked against [`IN_SCOPE`].
    pub formula: &'static str,
    pub expression: &'static str,
    /// `module::function` path inside this crate.
    pub implementation: &'static str,
}

/// Formulas that must each be registered exactly once.
pub const IN_SCOPE: &[&str] = &[
    "cotangent Laplacian",
    "lumped mass",
    "truncated eigenbasis",
    "heat kernel signature",
    "learned diffusion",
    "regularized functional map solver",
    "bijectivity penalty",
    "orthogonality penalty",
    "coupling loss",
    "spectral nearest-neighbour recovery",
    "cosine similarity",
    "top-p positive set",
    "cross-contrastive loss",
    "self-contrastive loss",
    "soft pointwise map",
    "functional map by spectral projection",
    "alignment loss",
    "total loss",
    "Adam update",
    "mean geodesic error",
];

const fn e(formula: &'static str, expression: &'static str, implementation: &'static str) -> MethodEntry {
    MethodEntry {
        formula,
        expression,
        implementation,
    }
}

pub const REGISTRY: &[MethodEntry] = &[
    e(
        "cotangent Laplacian",
        "L_ij = -(cot a_ij + cot b_ij) / 2, L_ii = -sum_j L_ij",
        "spectral::cotan_laplacian",
    ),
    e("lumped mass", "A_ii = (1/3) sum of incident triangle areas", "spectral::lumped_mass"),
    e(
        "truncated eigenbasis",
        "L phi = lambda A phi, k smallest pairs, Phi^T A Phi = I",
        "spectral::compute_spectra",
    ),
    e(
        "heat kernel signature",
        "HKS(x, t) = sum_i exp(-lambda_i t) phi_i(x)^2",
        "spectral::hks",
    ),
    e(
        "learned diffusion",
        "F_t = Phi (exp(-lambda t) * (Phi^T A F))",
        "net::diffuse",
    ),
    e(
        "regularized functional map solver",
        "C = argmin ||C A - B||^2 + lambda ||C Lambda_X - Lambda_Y C||^2",
        "fmap::baseline_solve_fmap",
    ),
    e(
        "bijectivity penalty",
        "L_bi = ||C_XY C_YX - I||^2 + ||C_YX C_XY - I||^2",
        "fmap::baseline_losses",
    ),
    e(
        "orthogonality penalty",
        "L_or = ||C_XY^T C_XY - I||^2 + ||C_YX^T C_YX - I||^2",
        "fmap::baseline_losses",
    ),
    e(
        "coupling loss",
        "L_co = ||C_YX - Phi_X^+ Pi_XY Phi_Y||^2",
        "fmap::baseline_losses",
    ),
    e(
        "spectral nearest-neighbour recovery",
        "Pi_XY(x) = argmin_y ||(Phi_X C_YX^T)_x - (Phi_Y)_y||",
        "fmap::recover_pmap",
    ),
    e(
        "cosine similarity",
        "S_ij = <f_i, g_j> / (||f_i|| ||g_j||)",
        "contrastive::cosine_similarity",
    ),
    e(
        "top-p positive set",
        "P_i = indices of the p largest S_ij, N_i = complement",
        "contrastive::split_similarity",
    ),
    e(
        "cross-contrastive loss",
        "mean_i [ -mean_{j in P_i} S_ij / tau + log sum_{j in N_i} exp(S_ij / tau) ]",
        "contrastive::cross_loss",
    ),
    e(
        "self-contrastive loss",
        "mean_i log sum_{j in N_i} exp(S_ij / tau) on one shape",
        "contrastive::self_loss",
    ),
    e(
        "soft pointwise map",
        "Pi_XY = softmax_rows(F_X F_Y^T / alpha)",
        "fmap::soft_map",
    ),
    e(
        "functional map by spectral projection",
        "C_YX = Phi_X^+ Pi_XY Phi_Y, Phi_X^+ = Phi_X^T A_X",
        "fmap::fmap_from_pmap",
    ),
    e(
        "alignment loss",
        "L_align = ||Phi_X - Pi_XY Phi_Y C_YX^T||^2",
        "fmap::align_loss",
    ),
    e(
        "total loss",
        "L = theta_c L_cross + theta_s L_self + theta_a L_align",
        "fmap::total_loss",
    ),
    e(
        "Adam update",
        "bias-corrected first and second moments, lr 1e-3",
        "train::adam_step",
    ),
    e(
        "mean geodesic error",
        "(100 / |V|) sum_x d(pred(x), gt(x)) / sqrt(area)",
        "eval::mean_geo_error",
    ),
];

/// Every in-scope formula registered exactly once, and nothing else.
pub fn check_registry(in_scope: &[&str], registry: &[MethodEntry]) -> Result<()> {
    let mut problems = Vec::new();
    for f in in_scope {
        match registry.iter().filter(|e| e.formula == *f).count() {
            1 => {}
            0 => problems.push(format!("unregistered: {f}")),
            n => problems.push(format!("registered {n} times: {f}")),
        }
    }
    for e in registry {
        if !in_scope.contains(&e.formula) {
            problems.push(format!("not in scope: {}", e.formula));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!("method map incomplete: {}", problems.join("; "))))
    }
}

/// Markdown table rendered from a checked registry.
pub fn render(in_scope: &[&str], registry: &[MethodEntry]) -> Result<String> {
    check_registry(in_scope, registry)?;
    let mut s = String::from(
        "# Method map\n\n\
         Generated from `crates/core/src/method_map.rs`; do not edit by hand.\n\
         Regenerate with `UPDATE_DOCS=1 cargo test -p specmatch-core --test method_map`.\n\n\
         | Formula | Expression | Implementation |\n|---|---|---|\n",
    );
    for f in in_scope {
        let e = registry.iter().find(|e| e.formula == *f).expect("checked above");
        s.push_str(&format!(
            "| {} | `{}` | `specmatch::{}` |\n",
            e.formula, e.expression, e.implementation
        ));
    }
    Ok(s)
}

pub fn generate_method_map() -> Result<String> {
    render(IN_SCOPE, REGISTRY)
}
