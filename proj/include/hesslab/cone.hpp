#ifndef HESSLAB_CONE_HPP
#define HESSLAB_CONE_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hesslab/common.hpp"

namespace hesslab {

/// Vector of Hessian eigenvalues, the argument of the symmetric operators.
using Eigenvalues = std::vector<double>;

// Cones are open; strict positivity needs a numeric margin.  The margin is
// relative to ||lambda||, scaled by degree for the symmetric polynomials.
inline constexpr double kConeTol = 1e-12;

// ---------------------------------------------------------------------------
// Elementary symmetric polynomials
// ---------------------------------------------------------------------------

/// k-th elementary symmetric polynomial of lambda (sigma_0 = 1).
inline double sigma_k(const Eigenvalues& lambda, int k) {
    const int n = static_cast<int>(lambda.size());
    if (k < 0 || k > n)
        throw std::domain_error("sigma_k: k out of range 0..n");
    if (k == 0) return 1.0;
    // e[j] accumulates sigma_j of the prefix processed so far.
    std::vector<double> e(k + 1, 0.0);
    e[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        const int top = std::min(i + 1, k);
        for (int j = top; j >= 1; --j) e[j] += lambda[i] * e[j - 1];
    }
    return e[k];
}

/// sigma_{k}(lambda with entry i removed), used by the analytic gradients.
inline double sigma_k_excluding(const Eigenvalues& lambda, int k, int skip) {
    const int n = static_cast<int>(lambda.size());
    if (k < 0 || k > n - 1)
        throw std::domain_error("sigma_k_excluding: k out of range");
    if (k == 0) return 1.0;
    std::vector<double> e(k + 1, 0.0);
    e[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        if (i == skip) continue;
        for (int j = k; j >= 1; --j) e[j] += lambda[i] * e[j - 1];
    }
    return e[k];
}

// ---------------------------------------------------------------------------
// Admissibility cones
// ---------------------------------------------------------------------------

enum class ConeKind { GammaM, GammaN, GammaPlus, Custom };

struct ConeSpec {
    ConeKind kind = ConeKind::GammaPlus;
    int n = 1;       // ambient dimension
    int m = 1;       // order, only meaningful for GammaM
    std::string label;
    std::function<bool(const Eigenvalues&)> custom;  // membership predicate

    static ConeSpec gamma_m(int n, int m) {
        if (m < 1 || m > n) throw std::domain_error("gamma_m: need 1 <= m <= n");
        ConeSpec c;
        c.kind = ConeKind::GammaM;
        c.n = n;
        c.m = m;
        c.label = "Gamma_" + std::to_string(m);
        return c;
    }
    static ConeSpec gamma_n(int n) {
        ConeSpec c;
        c.kind = ConeKind::GammaN;
        c.n = n;
        c.m = n;
        c.label = "Gamma_n(orthant)";
        return c;
    }
    static ConeSpec gamma_plus(int n) {
        ConeSpec c;
        c.kind = ConeKind::GammaPlus;
        c.n = n;
        c.m = 1;
        c.label = "Gamma_+";
        return c;
    }
};

/// Cone membership with the relative margin kConeTol.  Total on finite input.
inline bool in_cone(const Eigenvalues& lambda, const ConeSpec& cone) {
    if (static_cast<int>(lambda.size()) != cone.n)
        throw std::invalid_argument("in_cone: dimension mismatch");
    double scale = 0.0;
    for (double v : lambda) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return false;  // origin lies on every cone boundary
    switch (cone.kind) {
        case ConeKind::GammaM: {
            for (int i = 1; i <= cone.m; ++i)
                if (sigma_k(lambda, i) <= kConeTol * std::pow(scale, i)) return false;
            return true;
        }
        case ConeKind::GammaN: {
            double mn = lambda[0];
            for (double v : lambda) mn = std::min(mn, v);
            return mn > kConeTol * scale;
        }
        case ConeKind::GammaPlus: {
            const double s = std::accumulate(lambda.begin(), lambda.end(), 0.0);
            return s > kConeTol * scale;
        }
        case ConeKind::Custom:
            if (!cone.custom) throw std::logic_error("in_cone: custom cone without predicate");
            return cone.custom(lambda);
    }
    return false;
}

/// Index (1-based) of the first sigma_i violating GammaM membership, 0 if none.
inline int first_violated_sigma(const Eigenvalues& lambda, const ConeSpec& cone) {
    double scale = 0.0;
    for (double v : lambda) scale = std::max(scale, std::abs(v));
    const int m = (cone.kind == ConeKind::GammaM) ? cone.m
                 : (cone.kind == ConeKind::GammaN) ? cone.n : 1;
    for (int i = 1; i <= m; ++i) {
        if (cone.kind == ConeKind::GammaN) {
            double mn = lambda[0];
            for (double v : lambda) mn = std::min(mn, v);
            if (mn <= kConeTol * scale) return i;
            return 0;
        }
        if (sigma_k(lambda, i) <= kConeTol * std::pow(scale, i)) return i;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Symmetric concave operators f on a cone
// ---------------------------------------------------------------------------

struct OperatorSpec {
    std::string name;
    ConeSpec cone;
    double c0 = 0.0;  // lower bound asserted for det(dF/dh) on diagonal h
    double C0 = 1.0;  // Euler-type bound <lambda, grad f> <= C0 f on Gamma_n
    std::function<double(const Eigenvalues&)> f;
    std::function<Eigenvalues(const Eigenvalues&)> grad;  // null -> central differences
};

/// f(lambda) = sigma_m(lambda)^{1/m} on Gamma_m.  Degree-1 homogeneous, so the
/// Euler identity gives C0 = 1 exactly.
inline OperatorSpec sigma_m_operator(int n, int m) {
    OperatorSpec op;
    op.name = "sigma_" + std::to_string(m) + "^{1/" + std::to_string(m) + "}";
    op.cone = ConeSpec::gamma_m(n, m);
    op.C0 = 1.0;
    op.c0 = 0.5 * std::pow(static_cast<double>(n), -n);
    op.f = [m](const Eigenvalues& l) { return std::pow(sigma_k(l, m), 1.0 / m); };
    op.grad = [n, m](const Eigenvalues& l) {
        const double sm = sigma_k(l, m);
        const double fac = (1.0 / m) * std::pow(sm, 1.0 / m - 1.0);
        Eigenvalues g(n);
        for (int i = 0; i < n; ++i) g[i] = fac * sigma_k_excluding(l, m - 1, i);
        return g;
    };
    return op;
}

/// f = (sigma_k/sigma_m)^{1/(k-m)} on Gamma_k, 1 <= m < k.  Kept as a negative
/// control: its determinant floor degenerates along anisotropic rays.
inline OperatorSpec quotient_operator(int n, int k, int m) {
    if (!(1 <= m && m < k && k <= n))
        throw std::domain_error("quotient_operator: need 1 <= m < k <= n");
    OperatorSpec op;
    op.name = "(sigma_" + std::to_string(k) + "/sigma_" + std::to_string(m) + ")^{1/" +
              std::to_string(k - m) + "}";
    op.cone = ConeSpec::gamma_m(n, k);
    op.C0 = 1.0;
    op.c0 = 0.5 * std::pow(static_cast<double>(n), -n);
    op.f = [k, m](const Eigenvalues& l) {
        return std::pow(sigma_k(l, k) / sigma_k(l, m), 1.0 / (k - m));
    };
    return op;
}

/// f = (sigma_k/sigma_m)^{1/(k-m)} + c sigma_l^{1/l}, c > 0.  With l = 1 each
/// partial derivative is at least c, so det(dF/dh) >= c^n on diagonal h.
inline OperatorSpec quotient_plus_operator(int n, int k, int m, int l, double c) {
    if (c <= 0.0) throw std::domain_error("quotient_plus_operator: need c > 0");
    OperatorSpec op = quotient_operator(n, k, m);
    op.name += " + " + format_double(c) + " sigma_" + std::to_string(l) + "^{1/" + std::to_string(l) + "}";
    op.c0 = (l == 1) ? 0.9 * std::pow(c, n) : 0.5 * std::pow(static_cast<double>(n), -n);
    auto base = op.f;
    op.f = [base, l, c](const Eigenvalues& lam) {
        return base(lam) + c * std::pow(sigma_k(lam, l), 1.0 / l);
    };
    op.grad = nullptr;
    return op;
}

/// f(lambda) evaluated inside the cone.  Outside, the error names the first
/// violated sigma_i so callers can report a witness.
inline double f_value(const OperatorSpec& op, const Eigenvalues& lambda) {
    if (!in_cone(lambda, op.cone)) {
        const int i = first_violated_sigma(lambda, op.cone);
        throw std::domain_error("f_value(" + op.name + "): lambda outside cone " + op.cone.label +
                                ", first violated sigma_" + std::to_string(i));
    }
    return op.f(lambda);
}

/// Gradient of f, analytic when the operator carries one and by central
/// differences otherwise (step 1e-5 (1+||lambda||)).
inline Eigenvalues grad_f(const OperatorSpec& op, const Eigenvalues& lambda) {
    if (!in_cone(lambda, op.cone))
        throw std::domain_error("grad_f(" + op.name + "): ill-conditioned, lambda at or outside cone boundary");
    if (op.grad) return op.grad(lambda);
    double norm = 0.0;
    for (double v : lambda) norm += v * v;
    const double step = 1e-5 * (1.0 + std::sqrt(norm));
    const int n = static_cast<int>(lambda.size());
    Eigenvalues g(n);
    Eigenvalues probe = lambda;
    for (int i = 0; i < n; ++i) {
        probe[i] = lambda[i] + step;
        const double fp = op.f(probe);
        probe[i] = lambda[i] - step;
        const double fm = op.f(probe);
        probe[i] = lambda[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Structural condition report (Monte Carlo)
// ---------------------------------------------------------------------------

struct ConditionCheck {
    std::string id;
    double worst = 0.0;       // signed: positive means violation (see per-check doc)
    double threshold = 0.0;
    bool pass = true;
    Eigenvalues witness;
};

struct ConditionReport {
    std::string operator_name;
    int samples = 0;
    std::uint64_t seed = 0;
    std::vector<ConditionCheck> checks;
    bool all_pass = true;

    const ConditionCheck& check(const std::string& id) const {
        for (const auto& c : checks)
            if (c.id == id) return c;
        throw std::out_of_range("ConditionReport: no check " + id);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["operator"] = operator_name;
        j["samples"] = samples;
        j["seed"] = seed;
        j["all_pass"] = all_pass;
        j["checks"] = nlohmann::json::array();
        for (const auto& c : checks) {
            nlohmann::json jc;
            jc["condition"] = c.id;
            jc["worst_violation"] = c.worst;
            jc["threshold"] = c.threshold;
            jc["pass"] = c.pass;
            jc["witness"] = c.witness;
            j["checks"].push_back(jc);
        }
        return j;
    }
};

namespace detail {

/// Anisotropic positive-orthant sample, entries log-uniform in [10^-2, 10^2].
inline Eigenvalues sample_orthant(Rng& rng, int n) {
    Eigenvalues l(n);
    for (int i = 0; i < n; ++i) l[i] = std::pow(10.0, rng.uniform(-2.0, 2.0));
    return l;
}

/// Rejection sample from the cone: box samples in [-1,3]^n filtered by
/// membership, falling back to the orthant (always inside).
inline Eigenvalues sample_cone(Rng& rng, const ConeSpec& cone) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Eigenvalues l(cone.n);
        for (int i = 0; i < cone.n; ++i) l[i] = rng.uniform(-1.0, 3.0);
        if (in_cone(l, cone)) return l;
    }
    return sample_orthant(rng, cone.n);
}

}  // namespace detail

/// Monte Carlo audit of the structural conditions: symmetry, positivity of
/// the partial derivatives, midpoint concavity, the determinant floor on
/// diagonal h, and the Euler-type bound on the positive orthant.  Violations
/// are reported, never thrown.
inline ConditionReport check_structural(const OperatorSpec& op, int sample_count, std::uint64_t seed) {
    if (sample_count < 1) throw std::domain_error("check_structural: sample_count >= 1");
    const int n = op.cone.n;
    Rng rng(seed);
    ConditionReport rep;
    rep.operator_name = op.name;
    rep.samples = sample_count;
    rep.seed = seed;

    ConditionCheck sym{"symmetry", 0.0, 1e-9, true, {}};
    ConditionCheck mono{"monotonicity", std::numeric_limits<double>::infinity(), 0.0, true, {}};
    ConditionCheck conc{"concavity", 0.0, 1e-9, true, {}};
    ConditionCheck detf{"determinant_floor", std::numeric_limits<double>::infinity(), op.c0, true, {}};
    ConditionCheck euler{"euler_bound", -std::numeric_limits<double>::infinity(), 1e-9, true, {}};

    for (int s = 0; s < sample_count; ++s) {
        // condition (1): permutation invariance
        {
            Eigenvalues a = detail::sample_cone(rng, op.cone);
            Eigenvalues b = a;
            for (int i = n - 1; i > 0; --i) std::swap(b[i], b[rng.uniform_int(0, i)]);
            const double fa = op.f(a), fb = op.f(b);
            const double viol = std::abs(fa - fb) / (1.0 + std::abs(fa));
            if (viol > sym.worst) { sym.worst = viol; sym.witness = a; }
        }
        // condition (3a): df/dlambda_i > 0 inside the cone
        {
            Eigenvalues a = detail::sample_cone(rng, op.cone);
            const Eigenvalues g = grad_f(op, a);
            for (double gi : g)
                if (gi < mono.worst) { mono.worst = gi; mono.witness = a; }
        }
        // condition (3b): midpoint concavity along segments in the cone
        {
            Eigenvalues a = detail::sample_cone(rng, op.cone);
            Eigenvalues b = detail::sample_cone(rng, op.cone);
            Eigenvalues mid(n);
            for (int i = 0; i < n; ++i) mid[i] = 0.5 * (a[i] + b[i]);
            if (in_cone(mid, op.cone)) {
                const double fa = op.f(a), fb = op.f(b), fm = op.f(mid);
                const double viol = (0.5 * (fa + fb) - fm) / (1.0 + std::abs(fm));
                if (viol > conc.worst) { conc.worst = viol; conc.witness = a; }
            }
        }
        // condition (4): det(dF/dh) on diagonal positive h, where dF/dh is
        // diagonal with entries df/dlambda_i, so det = prod_i df/dlambda_i.
        {
            Eigenvalues a = detail::sample_orthant(rng, n);
            const Eigenvalues g = grad_f(op, a);
            double det = 1.0;
            for (double gi : g) det *= std::max(gi, 0.0);
            if (det < detf.worst) { detf.worst = det; detf.witness = a; }
        }
        // condition (5): <lambda, grad f> <= C0 f on Gamma_n
        {
            Eigenvalues a = detail::sample_orthant(rng, n);
            const Eigenvalues g = grad_f(op, a);
            const double fa = op.f(a);
            double dot = 0.0;
            for (int i = 0; i < n; ++i) dot += a[i] * g[i];
            const double viol = (dot - op.C0 * fa) / (1.0 + std::abs(fa));
            if (viol > euler.worst) { euler.worst = viol; euler.witness = a; }
        }
    }

    sym.pass = sym.worst <= sym.threshold;
    mono.pass = mono.worst > 0.0;
    conc.pass = conc.worst <= conc.threshold;
    detf.pass = detf.worst >= detf.threshold;
    euler.pass = euler.worst <= euler.threshold;

    rep.checks = {sym, mono, conc, detf, euler};
    rep.all_pass = true;
    for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
    return rep;
}

// ---------------------------------------------------------------------------
// Majorization (Horn-Schur)
// ---------------------------------------------------------------------------

/// True iff the diagonal of the Hermitian matrix H is majorized by its
/// eigenvalue vector: descending partial sums of the diagonal dominated by
/// those of the spectrum, with equal totals.  Majorization always holds
/// here, so any failure beyond tolerance indicates a numerical bug upstream.
inline bool horn_schur_check(const Eigen::MatrixXcd& H, double tol_herm = 1e-10,
                             double tol_maj = 1e-10) {
    if (H.rows() != H.cols()) throw std::domain_error("horn_schur_check: square matrix required");
    const double scale = 1.0 + H.cwiseAbs().maxCoeff();
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > tol_herm * scale)
        throw std::domain_error("horn_schur_check: matrix not Hermitian within tolerance");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("horn_schur_check: eigensolver failed");
    const int n = static_cast<int>(H.rows());
    std::vector<double> diag(n), eig(n);
    for (int i = 0; i < n; ++i) {
        diag[i] = H(i, i).real();
        eig[i] = es.eigenvalues()(i);
    }
    std::sort(diag.rbegin(), diag.rend());
    std::sort(eig.rbegin(), eig.rend());
    double pd = 0.0, pe = 0.0;
    for (int k = 0; k < n - 1; ++k) {
        pd += diag[k];
        pe += eig[k];
        if (pd > pe + tol_maj * scale) return false;
    }
    pd += diag[n - 1];
    pe += eig[n - 1];
    return std::abs(pd - pe) <= tol_maj * scale;  // trace identity
}

}  // namespace hesslab

#endif
