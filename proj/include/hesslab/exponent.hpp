#ifndef HESSLAB_EXPONENT_HPP
#define HESSLAB_EXPONENT_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hesslab/common.hpp"
#include "hesslab/field.hpp"

namespace hesslab {

// ---------------------------------------------------------------------------
// Closed-form exponent algebra.  Open bounds ("any gamma < b") are represented
// by the supremum b itself; consumers subtract their own margin.
// ---------------------------------------------------------------------------

/// min(gamma1, gamma2 - q0 n gamma1, gamma2 / (1 + q0 n)).  May be <= 0; the
/// caller interprets nonpositive values as "no rate obtained".
inline double gamma_bound(double gamma1, double gamma2, double q0, double n) {
    const double q0n = q0 * n;
    return std::min({gamma1, gamma2 - q0n * gamma1, gamma2 / (1.0 + q0n)});
}

struct OptimalGamma {
    double gamma = 0.0;
    double argmax_gamma1 = 0.0;
};

/// Maximize gamma_bound over gamma1 in (0, gamma1_max].  The three terms
/// coincide at gamma1 = gamma2/(1+q0 n); below that the first term binds.
inline OptimalGamma optimal_gamma(double gamma1_max, double gamma2, double q0, double n) {
    if (gamma1_max <= 0.0 || gamma2 <= 0.0)
        throw std::domain_error("optimal_gamma: positive inputs required");
    const double q0n = q0 * n;
    const double balanced = gamma2 / (1.0 + q0n);
    OptimalGamma out;
    if (gamma1_max >= balanced) {
        out.argmax_gamma1 = balanced;
        out.gamma = balanced;
    } else {
        out.argmax_gamma1 = gamma1_max;
        out.gamma = gamma_bound(gamma1_max, gamma2, q0, n);
    }
    return out;
}

/// Sup-gap rate gamma -> Holder exponent 2 gamma / (1 + gamma).
inline double holder_from_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::domain_error("holder_from_gamma: gamma in (0,1] required");
    return 2.0 * gamma / (1.0 + gamma);
}

// ---------------------------------------------------------------------------
// The improvement recursion and its fixed point
// ---------------------------------------------------------------------------

struct ExponentSequence {
    double q0n = 0.0;
    std::vector<double> mu;   // mu[0], mu[1], ...
    double fixed_point = 0.0; // 1 / (2 (1 + q0 n))
    bool converged = false;
    int iterations = 0;
};

inline double exponent_seed(double q0n) { return 2.0 / (4.0 * (1.0 + q0n) + 1.0); }

inline double exponent_step(double mu, double q0n) {
    return 2.0 / (2.0 * (2.0 - mu) * (1.0 + q0n) + 1.0);
}

/// Iterate mu_{k+1} = 2 / (2 (2 - mu_k)(1 + q0 n) + 1) from the seed
/// 2 / (4 (1 + q0 n) + 1) until |mu_{k+1} - mu_k| < tol or k_max steps.
/// The sequence is nondecreasing and converges to 1 / (2 (1 + q0 n)).
inline ExponentSequence iterate_exponents(double q0n, int k_max = 200, double tol = 1e-12) {
    if (q0n <= 0.0) throw std::domain_error("iterate_exponents: q0n > 0 required");
    ExponentSequence seq;
    seq.q0n = q0n;
    seq.fixed_point = 1.0 / (2.0 * (1.0 + q0n));
    double mu = exponent_seed(q0n);
    seq.mu.push_back(mu);
    for (int k = 0; k < k_max; ++k) {
        const double next = exponent_step(mu, q0n);
        seq.mu.push_back(next);
        ++seq.iterations;
        if (next + 1e-15 < mu)
            throw std::logic_error("iterate_exponents: sequence decreased");
        if (std::abs(next - mu) < tol) {
            seq.converged = true;
            mu = next;
            break;
        }
        mu = next;
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Empirical Holder exponent
// ---------------------------------------------------------------------------

/// Measures sup_z sup_{d(w,z) < r} (phi(w) - phi(z)) on grid points for each
/// radius and fits the log-log slope.  Radii under 4h sit in discretization
/// noise and are dropped; a constant field yields a degenerate (flagged) fit.
inline RateFit empirical_holder(const LatticeField& phi, const std::vector<double>& radii) {
    if (radii.size() < 4) throw std::invalid_argument("empirical_holder: need >= 4 radii");
    const ManifoldPtr& M = phi.manifold();
    const double h = phi.spacing();

    std::vector<double> rs, sups;
    for (double r : radii) {
        if (r < 4.0 * h) continue;
        rs.push_back(r);
        sups.push_back(0.0);
    }
    if (rs.size() < 4) throw std::invalid_argument("empirical_holder: fewer than 4 radii above 4h");

    for (int c = 0; c < phi.chart_count(); ++c) {
        const ChartGrid& g = phi.grid(c);
        const std::int64_t sz = g.size();
        // per-site maxima by radius, reduced serially afterwards
        std::vector<std::vector<double>> site_max(rs.size(), std::vector<double>(sz, 0.0));
        parallel_for(sz, [&](std::int64_t i) {
            if (phi.pou(c, i) <= 0.0) return;
            const ChartPoint z = phi.site_point(c, i);
            const double rmax = rs.back();
            // scan a chart-coordinate box generously covering the metric ball
            double gmin = M->metric_diag(z).minCoeff();
            const int reach = static_cast<int>(std::ceil(rmax / (std::sqrt(gmin) * h))) + 1;
            std::vector<int> mi, mj;
            g.decode(i, mi);
            mj = mi;
            std::vector<int> off(g.raxes, -reach);
            while (true) {
                bool inside = true;
                for (int a = 0; a < g.raxes; ++a) {
                    int idx = mi[a] + off[a];
                    if (g.periodic) {
                        idx %= g.dims[a];
                        if (idx < 0) idx += g.dims[a];
                    } else if (idx < 0 || idx >= g.dims[a]) {
                        inside = false;
                        break;
                    }
                    mj[a] = idx;
                }
                if (inside) {
                    const std::int64_t j = g.encode(mj);
                    const ChartPoint w = phi.site_point(c, j);
                    const double d = M->distance(z, w);
                    const double diff = phi.value(c, j) - phi.value(c, i);
                    for (std::size_t k = 0; k < rs.size(); ++k)
                        if (d < rs[k] && diff > site_max[k][i]) site_max[k][i] = diff;
                }
                int a = g.raxes - 1;
                while (a >= 0 && ++off[a] > reach) off[a--] = -reach;
                if (a < 0) break;
            }
        });
        for (std::size_t k = 0; k < rs.size(); ++k)
            for (std::int64_t i = 0; i < sz; ++i) sups[k] = std::max(sups[k], site_max[k][i]);
    }
    return fit_loglog(rs, sups);
}

/// Holder exponent bound for the sigma_m equation with density in L^p,
/// p > n/m: (mp - n) / (2 (mp - n + m p n)).  Internally cross-checked
/// against the fixed point route with p0 = mp/n, q0 = p0/(p0-1).
inline double sigma_m_exponent(double p, int n, int m) {
    if (m < 1 || n < 1 || m > n) throw std::domain_error("sigma_m_exponent: need 1 <= m <= n");
    if (!(p > static_cast<double>(n) / m))
        throw std::domain_error("sigma_m_exponent: need p > n/m");
    const double direct = (m * p - n) / (2.0 * (m * p - n + m * p * n));
    const double p0 = m * p / static_cast<double>(n);
    const double q0 = p0 / (p0 - 1.0);
    const double via_fixed_point = 1.0 / (2.0 * (1.0 + q0 * n));
    if (std::abs(direct - via_fixed_point) > 1e-12 * (1.0 + std::abs(direct)))
        throw std::logic_error("sigma_m_exponent: route disagreement");
    return direct;
}

}  // namespace hesslab

#endif
