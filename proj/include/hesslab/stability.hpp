#ifndef HESSLAB_STABILITY_HPP
#define HESSLAB_STABILITY_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hesslab/common.hpp"
#include "hesslab/cone.hpp"
#include "hesslab/exponent.hpp"
#include "hesslab/field.hpp"
#include "hesslab/supconv.hpp"

namespace hesslab {

// ---------------------------------------------------------------------------
// Exponent inputs shared by the stability estimates
// ---------------------------------------------------------------------------

struct ExponentInputs {
    double p0 = 2.0;   // integrability class of the density
    double q0 = 2.0;   // dual exponent p0 / (p0 - 1)
    int n = 1;
    double gamma1 = 0.5;
    double gamma2 = 0.25;
    double mu = 0.0;   // level-set decay exponent, < 1 / (n q0)

    static ExponentInputs make(double p0, int n, double gamma1, double gamma2,
                               double mu = -1.0) {
        if (p0 <= 1.0) throw std::domain_error("ExponentInputs: p0 > 1 required");
        ExponentInputs e;
        e.p0 = p0;
        e.q0 = p0 / (p0 - 1.0);
        e.n = n;
        e.gamma1 = gamma1;
        e.gamma2 = gamma2;
        e.mu = (mu > 0) ? mu : 0.9 / (n * e.q0);
        e.validate();
        return e;
    }

    void validate() const {
        if (std::abs(q0 - p0 / (p0 - 1.0)) > 1e-12 * q0)
            throw std::domain_error("ExponentInputs: q0 inconsistent with p0");
        if (!(mu > 0.0 && mu < 1.0 / (n * q0)))
            throw std::domain_error("ExponentInputs: mu must lie in (0, 1/(n q0))");
    }
};

// ---------------------------------------------------------------------------
// Level-set profiles
//   Omega_{delta,s} = {(1-delta) v - phi - s > 0}
//   A_{delta,s}     = int ((1-delta) v - phi - s)^+ e^{nF} omega_0^n
// ---------------------------------------------------------------------------

struct LevelSetProfile {
    double delta = 0.0;
    std::vector<double> s_grid;
    std::vector<double> vol_omega;  // omega_0^n measure of the level set
    std::vector<double> a_values;   // weighted excess mass
    double v_sup_norm = 0.0;
    double excess_l1 = 0.0;         // ||(v - phi)^+||_{L1(omega_0^n)}

    struct VolumeBound {
        double s = 0.0;
        bool applicable = false;  // requires s >= 2 delta ||v||_inf
        double lhs = 0.0;         // vol(Omega_{delta,s})
        double rhs = 0.0;         // (2/s) ||(v - phi)^+||_1
        bool holds = true;
    };
    std::vector<VolumeBound> volume_bounds;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["delta"] = delta;
        j["s"] = s_grid;
        j["vol"] = vol_omega;
        j["A"] = a_values;
        j["excess_l1"] = excess_l1;
        return j;
    }
};

inline std::vector<double> default_s_grid(double smax, int count = 64, double floor_ratio = 1e-3) {
    if (smax <= 0) return {1e-6};
    std::vector<double> s(count);
    for (int k = 0; k < count; ++k)
        s[k] = smax * std::pow(floor_ratio, static_cast<double>(count - 1 - k) / (count - 1));
    return s;
}

/// Level-set volumes and weighted excess masses on a shared grid.  The
/// volume bound vol <= (2/s)||(v-phi)^+||_1 is evaluated wherever its
/// applicability condition s >= 2 delta ||v||_inf holds.
inline LevelSetProfile level_profile(const LatticeField& v, const LatticeField& phi,
                                     const LatticeField& density_enF, double delta,
                                     const std::vector<double>& s_grid) {
    v.require_same_grid(phi);
    v.require_same_grid(density_enF);
    if (!(delta >= 0.0 && delta < 1.0))
        throw std::domain_error("level_profile: delta in [0,1) required");
    LevelSetProfile out;
    out.delta = delta;
    out.s_grid = s_grid;
    out.v_sup_norm = v.sup_norm();
    out.vol_omega.assign(s_grid.size(), 0.0);
    out.a_values.assign(s_grid.size(), 0.0);

    for (int c = 0; c < v.chart_count(); ++c) {
        for (std::int64_t i = 0; i < v.grid(c).size(); ++i) {
            const double w = v.weight(c, i);
            if (w <= 0.0) continue;
            const double excess0 = (1.0 - delta) * v.value(c, i) - phi.value(c, i);
            const double dens = density_enF.value(c, i);
            out.excess_l1 += w * std::max(v.value(c, i) - phi.value(c, i), 0.0);
            for (std::size_t k = 0; k < s_grid.size(); ++k) {
                const double e = excess0 - s_grid[k];
                if (e > 0.0) {
                    out.vol_omega[k] += w;
                    out.a_values[k] += w * e * dens;
                }
            }
        }
    }
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
        LevelSetProfile::VolumeBound b;
        b.s = s_grid[k];
        b.applicable = b.s >= 2.0 * delta * out.v_sup_norm && b.s > 0.0;
        b.lhs = out.vol_omega[k];
        b.rhs = b.s > 0 ? 2.0 / b.s * out.excess_l1 : std::numeric_limits<double>::infinity();
        b.holds = !b.applicable || b.lhs <= b.rhs * (1.0 + 1e-12) + 1e-30;
        out.volume_bounds.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// De Giorgi vanishing
// ---------------------------------------------------------------------------

/// Vanishing threshold s0 + 2 B0 phi(s0)^mu / (1 - 2^{-mu}).
inline double degiorgi_threshold(double B0, double mu, double s0, double phi_s0) {
    if (mu <= 0.0) throw std::domain_error("degiorgi_threshold: mu > 0 required");
    if (B0 <= 0.0) throw std::domain_error("degiorgi_threshold: B0 > 0 required");
    if (phi_s0 < 0.0) throw std::domain_error("degiorgi_threshold: phi(s0) >= 0 required");
    return s0 + 2.0 * B0 * std::pow(phi_s0, mu) / (1.0 - std::pow(2.0, -mu));
}

struct DeGiorgiRun {
    bool certified = false;      // hypothesis verified on the table and the recursion pairs
    bool halving_ok = false;     // phi(s_k) <= 2^{-k} phi(s_0) along the recursion
    double vanish_point = std::numeric_limits<double>::infinity();
    double threshold = 0.0;
    int steps = 0;
    std::string witness;         // first hypothesis failure, when any
    std::vector<double> s_sequence;
};

/// Nonincreasing continuous table phi(s); the certification scans the decay
/// hypothesis r phi(s+r) <= B0 phi(s)^{1+mu} over table pairs and over the
/// recursion's own (s_k, r_k) pairs, which is exactly what the vanishing
/// argument consumes.
inline DeGiorgiRun degiorgi_simulate(const std::vector<double>& s_table,
                                     const std::vector<double>& phi_table, double B0, double mu,
                                     double s0) {
    if (mu <= 0.0) throw std::domain_error("degiorgi_simulate: mu > 0 required");
    if (s_table.size() != phi_table.size() || s_table.size() < 2)
        throw std::invalid_argument("degiorgi_simulate: bad table");
    for (std::size_t i = 1; i < s_table.size(); ++i) {
        if (s_table[i] <= s_table[i - 1])
            throw std::invalid_argument("degiorgi_simulate: s column must increase");
    }
    DeGiorgiRun run;
    run.certified = true;
    for (std::size_t i = 0; i < phi_table.size(); ++i) {
        if (phi_table[i] < 0.0 || (i > 0 && phi_table[i] > phi_table[i - 1] + 1e-14)) {
            run.certified = false;
            run.witness = "table not nonincreasing at s = " + format_double(s_table[i]);
        }
    }

    auto interp = [&](double s) {
        if (s <= s_table.front()) return phi_table.front();
        if (s >= s_table.back()) return phi_table.back();
        const auto it = std::upper_bound(s_table.begin(), s_table.end(), s);
        const std::size_t j = static_cast<std::size_t>(it - s_table.begin());
        const double t = (s - s_table[j - 1]) / (s_table[j] - s_table[j - 1]);
        return phi_table[j - 1] + t * (phi_table[j] - phi_table[j - 1]);
    };

    // the last positive node bounds the table's resolution: interpolated
    // values beyond it are sub-resolution chords and certify nothing
    double last_positive = s_table.back();
    for (std::size_t i = s_table.size(); i-- > 0;) {
        if (phi_table[i] > 1e-14) {
            last_positive = s_table[i];
            break;
        }
    }

    const double tol = 1e-12 * (1.0 + phi_table.front());
    auto hyp = [&](double s, double r) {
        const double num = (s + r > last_positive) ? 0.0 : interp(s + r);
        return r * num <= B0 * std::pow(interp(s), 1.0 + mu) + tol;
    };

    // table-pair scan
    for (std::size_t i = 0; i < s_table.size() && run.certified; ++i) {
        if (s_table[i] < s0) continue;
        for (std::size_t j = i + 1; j < s_table.size(); ++j) {
            if (!hyp(s_table[i], s_table[j] - s_table[i])) {
                run.certified = false;
                run.witness = "hypothesis fails at s = " + format_double(s_table[i]) +
                              ", r = " + format_double(s_table[j] - s_table[i]);
                break;
            }
        }
    }

    // recursion s_{k+1} = s_k + 2 B0 phi(s_k)^mu, executed down to the
    // table's resolution
    const double phi0 = interp(s0);
    run.threshold = (phi0 > 0.0) ? degiorgi_threshold(B0, mu, s0, phi0) : s0;
    run.halving_ok = true;
    double sk = s0;
    run.s_sequence.push_back(sk);
    for (int k = 0; k < 500; ++k) {
        const double pk = interp(sk);
        if (pk <= 1e-14 || sk > last_positive) break;
        const double r = 2.0 * B0 * std::pow(pk, mu);
        if (!hyp(sk, r)) {
            run.certified = false;
            run.witness = "hypothesis fails on recursion pair s = " + format_double(sk) +
                          ", r = " + format_double(r);
            break;
        }
        sk += r;
        run.s_sequence.push_back(sk);
        ++run.steps;
        if (interp(sk) > std::pow(0.5, k + 1) * phi0 + 1e-12) run.halving_ok = false;
    }

    // observed vanish point of the table
    for (std::size_t i = 0; i < s_table.size(); ++i) {
        if (phi_table[i] <= 1e-14) {
            if (i == 0) {
                run.vanish_point = s_table[0];
            } else {
                const double p0 = phi_table[i - 1];
                run.vanish_point =
                    (p0 <= 1e-14) ? s_table[i - 1]
                                  : s_table[i - 1] + (s_table[i] - s_table[i - 1]) * p0 / (p0 - phi_table[i]);
            }
            break;
        }
    }
    return run;
}

/// Smallest B0 on the data: max over pairs of r vol(s+r) / vol(s)^{1+mu}.
inline double volume_decay_fit(const LevelSetProfile& profile, double mu) {
    int positive = 0;
    for (double v : profile.vol_omega)
        if (v > 0) ++positive;
    if (positive < 3)
        throw std::domain_error("volume_decay_fit: need >= 3 levels with positive volume");
    double B0 = 0.0;
    for (std::size_t i = 0; i < profile.s_grid.size(); ++i) {
        if (profile.vol_omega[i] <= 0.0) continue;
        for (std::size_t j = i + 1; j < profile.s_grid.size(); ++j) {
            const double r = profile.s_grid[j] - profile.s_grid[i];
            B0 = std::max(B0, r * profile.vol_omega[j] / std::pow(profile.vol_omega[i], 1.0 + mu));
        }
    }
    return B0;
}

// ---------------------------------------------------------------------------
// Stability bounds
// ---------------------------------------------------------------------------

/// Right-hand side s0 + C1 s0^{-mu} ||(v-phi)^+||_1^mu.
inline double stability_gap_bound(double s0, double mu, double C1, double l1_norm) {
    if (s0 <= 0.0) throw std::domain_error("stability_gap_bound: s0 > 0 required");
    if (C1 < 0.0 || l1_norm < 0.0)
        throw std::domain_error("stability_gap_bound: nonnegative inputs required");
    return s0 + C1 * std::pow(s0, -mu) * std::pow(l1_norm, mu);
}

/// Smallest C1 making the bound hold for the measured sup over the supplied
/// s0 grid: max over s0 of (sup - s0) s0^mu / l1^mu.
inline double stability_gap_verify(const LatticeField& v, const LatticeField& phi, double mu,
                                   const std::vector<double>& s0_grid) {
    const double sup = v.sup_diff(phi);
    double l1 = 0.0;
    for (int c = 0; c < v.chart_count(); ++c)
        for (std::int64_t i = 0; i < v.grid(c).size(); ++i)
            l1 += v.weight(c, i) * std::max(v.value(c, i) - phi.value(c, i), 0.0);
    if (l1 <= 0.0) return 0.0;
    double c1 = 0.0;
    for (double s0 : s0_grid)
        c1 = std::max(c1, std::max(sup - s0, 0.0) * std::pow(s0, mu) / std::pow(l1, mu));
    return c1;
}

struct SStarBound {
    double value = 0.0;
    std::string binding_branch;  // "delta" or "l1"
    double branch_delta = 0.0;
    double branch_l1 = 0.0;
};

/// max(2 delta ||v||_inf, C2 delta^{-q0 n / (1 - 1/beta)} ||(v-phi)^+||_1).
inline SStarBound s_star_bound(double delta, double v_inf_norm, double C2, double q0, int n,
                               double beta, double l1_norm) {
    if (beta <= 1.0) throw std::domain_error("s_star_bound: beta > 1 required");
    if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("s_star_bound: delta in (0,1)");
    SStarBound out;
    out.branch_delta = 2.0 * delta * v_inf_norm;
    out.branch_l1 = C2 * std::pow(delta, -q0 * n / (1.0 - 1.0 / beta)) * l1_norm;
    if (out.branch_delta >= out.branch_l1) {
        out.value = out.branch_delta;
        out.binding_branch = "delta";
    } else {
        out.value = out.branch_l1;
        out.binding_branch = "l1";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sup-gap rate study
// ---------------------------------------------------------------------------

struct SupGapStudy {
    std::vector<double> eps;
    std::vector<double> gaps;  // sup(phi_eps - phi)
    RateFit fit;
    double theoretical_gamma = 0.0;  // min(gamma1, gamma2 - q0 n gamma1, gamma2/(1+q0 n))
};

/// sup(phi_eps - phi) against eps, with the closed-form exponent bound the
/// measured slope is compared against.
inline SupGapStudy sup_gap_rate_study(const LatticeField& phi, const std::vector<double>& eps_list,
                                      const ConeSpec& cone, const ExponentInputs& e) {
    e.validate();
    auto pre = admissibility_pointwise(phi, cone, std::max(0.01, 20.0 * phi.spacing() * phi.spacing()));
    if (!pre.pass) throw std::domain_error("sup_gap_rate_study: input field not admissible");
    SupGapStudy out;
    out.theoretical_gamma = gamma_bound(e.gamma1, e.gamma2, e.q0, e.n);
    for (double eps : eps_list) {
        const SupConvResult res = sup_convolve(phi, eps);
        out.eps.push_back(eps);
        out.gaps.push_back(res.phi_eps.sup_diff(phi));
    }
    out.fit = fit_loglog(out.eps, out.gaps);
    return out;
}

// ---------------------------------------------------------------------------
// Exponential moment report
// ---------------------------------------------------------------------------

struct ExpMomentRow {
    double beta = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
};

struct ExpMomentReport {
    double A = 0.0;
    double delta = 0.0;
    double s = 0.0;
    double calibration_C = 0.0;
    std::vector<ExpMomentRow> rows;
    double largest_passing_beta = 0.0;
};

/// Exploratory evaluation of the exponential level-set moment
///   int exp(beta excess^{(n+1)/n} / A^{1/n}) omega_0^n  vs  C exp(C delta^{-(n+1)} A),
/// with C calibrated by the caller on a reference scenario.
inline ExpMomentReport exp_moment_report(const LatticeField& v, const LatticeField& phi,
                                         const LatticeField& density_enF, double delta, double s,
                                         const std::vector<double>& beta_candidates,
                                         double calibration_C) {
    v.require_same_grid(phi);
    const int n = v.manifold()->complex_dim();

    ExpMomentReport rep;
    rep.delta = delta;
    rep.s = s;
    rep.calibration_C = calibration_C;

    double A = 0.0;
    for (int c = 0; c < v.chart_count(); ++c)
        for (std::int64_t i = 0; i < v.grid(c).size(); ++i) {
            const double e = (1.0 - delta) * v.value(c, i) - phi.value(c, i) - s;
            if (e > 0.0) A += v.weight(c, i) * e * density_enF.value(c, i);
        }
    if (A <= 0.0) throw std::domain_error("exp_moment_report: A_{delta,s} = 0, report undefined");
    rep.A = A;

    const double p = (n + 1.0) / n;
    const double rhs = calibration_C * std::exp(calibration_C * std::pow(delta, -(n + 1.0)) * A);
    for (double beta : beta_candidates) {
        ExpMomentRow row;
        row.beta = beta;
        double lhs = 0.0;
        for (int c = 0; c < v.chart_count(); ++c)
            for (std::int64_t i = 0; i < v.grid(c).size(); ++i) {
                const double e = std::max((1.0 - delta) * v.value(c, i) - phi.value(c, i) - s, 0.0);
                lhs += v.weight(c, i) * std::exp(beta * std::pow(e, p) / std::pow(A, 1.0 / n));
            }
        row.lhs = lhs;
        row.rhs = rhs;
        row.holds = lhs <= rhs;
        rep.rows.push_back(row);
        if (row.holds) rep.largest_passing_beta = std::max(rep.largest_passing_beta, beta);
    }
    return rep;
}

}  // namespace hesslab

#endif
