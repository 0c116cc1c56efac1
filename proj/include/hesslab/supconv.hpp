#ifndef HESSLAB_SUPCONV_HPP
#define HESSLAB_SUPCONV_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hesslab/common.hpp"
#include "hesslab/cone.hpp"
#include "hesslab/field.hpp"
#include "hesslab/manifold.hpp"

namespace hesslab {

// ---------------------------------------------------------------------------
// Sup-convolution
//   phi_eps(z) = sup_xi ( phi(exp_z(xi)) + eps - |xi|_z^2 / eps )
// maximized over a tangent lattice inside the ball |xi|_z <= sqrt(2 ||phi|| eps).
// ---------------------------------------------------------------------------

struct SupConvResult {
    double epsilon = 0.0;
    double search_radius = 0.0;           // metric units
    LatticeField phi_eps;
    std::vector<std::vector<Complexd>> argmax;       // per chart: n chart components per site
    std::vector<std::vector<double>> argmax_norm;    // metric |xi| per site
    std::vector<std::vector<std::uint8_t>> interior; // argmax strictly inside the ball
    double max_argmax_norm = 0.0;
};

/// One-site maximization shared by the field-wide pass and by test oracles.
/// The candidate at xi = 0 is always present, so the result is >= phi(z) + eps
/// with exact floating-point arithmetic.
namespace detail {

struct SiteMax {
    double value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXcd xi;
    double norm = 0.0;
};

inline SiteMax supconv_site(const LatticeField& phi, const ChartPoint& z, double phi_at_site,
                            double eps, double radius, const std::vector<double>& box_cap) {
    const ManifoldPtr& M = phi.manifold();
    const int n = M->complex_dim();
    const Eigen::VectorXd g = M->metric_diag(z);
    const double h = phi.spacing();
    const bool flat = M->flat();
    const bool fs_scalar = !flat && n == 1;  // Fubini-Study fast path

    // per-factor chart spacing: min(h, (eps/4) converted to chart units)
    double step[4], sx[8];
    int K[4];
    for (int j = 0; j < n; ++j) {
        const double sj = std::min(h, 0.25 * eps / std::sqrt(g(j)));
        step[j] = sj;
        double rj = radius / std::sqrt(g(j));
        if (!box_cap.empty()) rj = std::min(rj, box_cap[j]);
        K[j] = static_cast<int>(std::floor(rj / sj));
        sx[2 * j] = z.z(j).real();
        sx[2 * j + 1] = z.z(j).imag();
    }

    SiteMax best;
    best.xi = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd xi_generic(n);
    int off[8];
    for (int a = 0; a < 2 * n; ++a) off[a] = -K[a / 2];

    const double r2 = radius * radius;
    double xire[4], xiim[4];
    while (true) {
        double norm2 = 0.0;
        for (int j = 0; j < n; ++j) {
            xire[j] = off[2 * j] * step[j];
            xiim[j] = off[2 * j + 1] * step[j];
            norm2 += g(j) * (xire[j] * xire[j] + xiim[j] * xiim[j]);
        }
        if (norm2 <= r2) {
            const double pen = norm2 / eps;
            double val;
            if (flat) {
                double x[8];
                for (int a = 0; a < 2 * n; ++a) x[a] = sx[a] + ((a % 2 == 0) ? xire[a / 2] : xiim[a / 2]);
                val = phi.eval_axes(0, x) + (eps - pen);
            } else if (fs_scalar) {
                auto [w, flipped] = fs::exp_chart_aware(z.z(0), Complexd(xire[0], xiim[0]));
                ChartPoint img{flipped ? 1 - z.chart : z.chart, Eigen::VectorXcd(1)};
                img.z(0) = w;
                val = phi.eval(img) + (eps - pen);
            } else {
                for (int j = 0; j < n; ++j) xi_generic(j) = Complexd(xire[j], xiim[j]);
                val = phi.eval(M->exp_map(z, xi_generic)) + (eps - pen);
            }
            if (val > best.value) {
                best.value = val;
                for (int j = 0; j < n; ++j) best.xi(j) = Complexd(xire[j], xiim[j]);
                best.norm = std::sqrt(norm2);
            }
        }
        int a = 2 * n - 1;
        while (a >= 0 && ++off[a] > K[a / 2]) off[a--] = -K[a / 2];
        if (a < 0) break;
    }
    // floor against the stored sample at xi = 0, so phi_eps >= phi + eps
    // holds bitwise even where interpolation blending perturbs the search
    if (!(best.value >= phi_at_site + eps)) {
        best.value = phi_at_site + eps;
        best.xi = Eigen::VectorXcd::Zero(n);
        best.norm = 0.0;
    }
    return best;
}

}  // namespace detail

/// Sup-convolution of a lattice field.  On flat tori the search ball is
/// clipped to the fundamental box (the wrap makes the clipped search exact);
/// on curved models a radius above the log conditioning bound is an error.
inline SupConvResult sup_convolve(const LatticeField& phi, double eps) {
    if (eps <= 0.0) throw std::domain_error("sup_convolve: eps > 0 required");
    const ManifoldPtr& M = phi.manifold();
    const int n = M->complex_dim();
    const double radius = std::sqrt(2.0 * phi.sup_norm() * eps);

    std::vector<double> box_cap;
    if (M->flat()) {
        const auto* T = dynamic_cast<const FlatTorus*>(M.get());
        for (double L : T->periods()) box_cap.push_back(0.5 * L);
    } else if (radius > M->log_bound()) {
        throw std::domain_error(
            "sup_convolve: search radius " + format_double(radius) +
            " exceeds the injectivity bound " + format_double(M->log_bound()) +
            "; use a smaller eps");
    }

    SupConvResult out;
    out.epsilon = eps;
    out.search_radius = radius;
    out.argmax.resize(phi.chart_count());
    out.argmax_norm.resize(phi.chart_count());
    out.interior.resize(phi.chart_count());

    LatticeField result = phi;
    for (int c = 0; c < phi.chart_count(); ++c) {
        const std::int64_t sz = phi.grid(c).size();
        out.argmax[c].assign(static_cast<std::size_t>(sz) * n, Complexd(0, 0));
        out.argmax_norm[c].assign(sz, 0.0);
        out.interior[c].assign(sz, 1);
        auto& vals_arg = out.argmax[c];
        auto& vals_norm = out.argmax_norm[c];
        auto& vals_int = out.interior[c];
        parallel_for(sz, [&, c](std::int64_t i) {
            const ChartPoint z = phi.site_point(c, i);
            if (!phi.active(c, i)) {
                // dead corner of a chart square: nothing reads it, the
                // xi = 0 candidate keeps the invariants intact
                result.value(c, i) = phi.value(c, i) + eps;
                return;
            }
            const auto best = detail::supconv_site(phi, z, phi.value(c, i), eps, radius, box_cap);
            result.value(c, i) = best.value;
            for (int j = 0; j < n; ++j) vals_arg[i * n + j] = best.xi(j);
            vals_norm[i] = best.norm;
            const double smax = std::min(phi.spacing(), 0.25 * eps);
            vals_int[i] = best.norm < radius - 0.5 * smax ? 1 : 0;
        });
    }
    result.finalize();
    out.phi_eps = std::move(result);
    for (int c = 0; c < phi.chart_count(); ++c)
        for (double v : out.argmax_norm[c]) out.max_argmax_norm = std::max(out.max_argmax_norm, v);
    return out;
}

// ---------------------------------------------------------------------------
// Argmax radius bounds
// ---------------------------------------------------------------------------

struct HolderData {
    double gamma = 1.0;
    double seminorm = 0.0;
};

struct ArgmaxRadiusReport {
    double linf_bound = 0.0;
    std::int64_t linf_violations = 0;
    double holder_bound = 0.0;  // 0 when no Holder data supplied
    std::int64_t holder_violations = 0;
    double max_norm = 0.0;
    bool pass = false;
};

/// Every recorded argmax obeys |xi| <= sqrt(2 ||phi|| eps); with Holder data
/// (gamma, [phi]_gamma) also the sharper root of x^2 = eps K (x + kappa h)^gamma,
/// where kappa h accounts for the interpolation cell diameter.
inline ArgmaxRadiusReport argmax_radius_check(const SupConvResult& res, const LatticeField& phi,
                                              std::optional<HolderData> holder = std::nullopt) {
    ArgmaxRadiusReport rep;
    rep.max_norm = res.max_argmax_norm;
    rep.linf_bound = std::sqrt(2.0 * phi.sup_norm() * res.epsilon);

    double hb = 0.0;
    if (holder) {
        const double n2 = 2.0 * phi.manifold()->complex_dim();
        const double cell = 1.02 * phi.spacing() * std::sqrt(n2);  // metric factors <= 1 here
        const double K = holder->seminorm;
        const double gam = holder->gamma;
        // positive root of x^2 - eps K (x + cell)^gamma by bisection
        double lo = 0.0, hi = rep.linf_bound + cell + 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid * mid - res.epsilon * K * std::pow(mid + cell, gam) <= 0.0)
                lo = mid;
            else
                hi = mid;
        }
        hb = hi;
        rep.holder_bound = hb;
    }

    for (std::size_t c = 0; c < res.argmax_norm.size(); ++c) {
        for (double v : res.argmax_norm[c]) {
            if (v > rep.linf_bound + 1e-12) ++rep.linf_violations;
            if (holder && v > hb + 1e-12) ++rep.holder_violations;
        }
    }
    rep.pass = rep.linf_violations == 0 && rep.holder_violations == 0;
    return rep;
}

// ---------------------------------------------------------------------------
// Semi-convexity: the regularized field has a finite lower Hessian bound
// ---------------------------------------------------------------------------

/// Most negative normalized second difference of phi_eps over chart axes and
/// two-axis diagonals; bounded below by roughly -2/eps.
inline double semiconvexity_check(const SupConvResult& res) {
    const LatticeField& f = res.phi_eps;
    const ManifoldPtr& M = f.manifold();
    const double h = f.spacing();
    double worst = 0.0;
    for (int c = 0; c < f.chart_count(); ++c) {
        const ChartGrid& g = f.grid(c);
        const std::int64_t sz = g.size();
        std::vector<double> site_min(sz, 0.0);
        parallel_for(sz, [&](std::int64_t i) {
            if (f.pou(c, i) <= 0.0) return;
            detail::StencilReader st(f, c);
            if (!st.load(i)) return;
            const Eigen::VectorXd gm = M->metric_diag(f.site_point(c, i));
            double mn = 0.0;
            const double center = f.value(c, i);
            for (int a = 0; a < g.raxes; ++a) {
                const double d2 = (st.at_offset(a, 1, -1, 0) - 2 * center + st.at_offset(a, -1, -1, 0)) /
                                  (h * h * gm(a / 2));
                mn = std::min(mn, d2);
                for (int b = a + 1; b < g.raxes; ++b) {
                    const double len2 = h * h * (gm(a / 2) + gm(b / 2));
                    const double dpp = (st.at_offset(a, 1, b, 1) - 2 * center + st.at_offset(a, -1, b, -1)) / len2;
                    const double dpm = (st.at_offset(a, 1, b, -1) - 2 * center + st.at_offset(a, -1, b, 1)) / len2;
                    mn = std::min(mn, std::min(dpp, dpm));
                }
            }
            site_min[i] = mn;
        });
        for (std::int64_t i = 0; i < sz; ++i) worst = std::min(worst, site_min[i]);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Rate studies
// ---------------------------------------------------------------------------

struct FloorStudy {
    std::vector<double> eps;
    std::vector<double> sigma;  // minimal admissibility slack per eps
    RateFit fit;                // log sigma vs log eps over the positive entries
};

namespace detail {

/// Smallest slack sigma >= 0 with lambda + sigma in the cone at every covered
/// valid site; bisection after an exponential bracket.
inline double minimal_slack(const LatticeField& f, const EigenField& E, const ConeSpec& cone) {
    auto passes = [&](double sigma) {
        for (int c = 0; c < f.chart_count(); ++c) {
            const std::int64_t sz = f.grid(c).size();
            for (std::int64_t i = 0; i < sz; ++i) {
                if (!E.valid[c][i] || f.pou(c, i) <= 0.0) continue;
                Eigenvalues l = E.at(c, i);
                for (double& v : l) v += sigma;
                if (!in_cone(l, cone)) return false;
            }
        }
        return true;
    };
    if (passes(0.0)) return 0.0;
    double hi = 1e-4;
    while (!passes(hi)) {
        hi *= 2.0;
        if (hi > 1e6) throw std::runtime_error("minimal_slack: no admissible slack below 1e6");
    }
    double lo = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (passes(mid) ? hi : lo) = mid;
    }
    return hi;
}

}  // namespace detail

/// Minimal admissibility slack sigma(eps) of phi_eps against the cone, fitted
/// against eps.  Zero-curvature models are expected to stay at sigma = 0; on
/// positively curved models the slack decays like a positive power of eps.
/// The precondition check uses pointwise admissibility with a small slack
/// covering the h^2 discretization floor, so near-critical inputs are usable.
inline FloorStudy hessian_floor_study(const LatticeField& phi, const std::vector<double>& eps_list,
                                      const ConeSpec& cone, double pre_slack = -1.0) {
    if (pre_slack < 0) pre_slack = std::max(0.01, 20.0 * phi.spacing() * phi.spacing());
    auto pre = admissibility_pointwise(phi, cone, pre_slack);
    if (!pre.pass)
        throw std::domain_error("hessian_floor_study: input field not admissible for the cone");
    FloorStudy out;
    for (double eps : eps_list) {
        const SupConvResult res = sup_convolve(phi, eps);
        const EigenField E = eigen_field(res.phi_eps);
        out.eps.push_back(eps);
        out.sigma.push_back(detail::minimal_slack(res.phi_eps, E, cone));
    }
    out.fit = fit_loglog(out.eps, out.sigma);
    return out;
}

struct L1Study {
    std::vector<double> eps;
    std::vector<double> l1;
    RateFit fit;
};

/// ||phi_eps - phi||_{L1} against eps.  The input must be admissible for a
/// cone inside Gamma_+ (checked with the same slack policy as above).
inline L1Study l1_rate_study(const LatticeField& phi, const std::vector<double>& eps_list,
                             const ConeSpec& cone, double pre_slack = -1.0) {
    if (pre_slack < 0) pre_slack = std::max(0.01, 20.0 * phi.spacing() * phi.spacing());
    auto pre = admissibility_pointwise(phi, cone, pre_slack);
    if (!pre.pass) throw std::domain_error("l1_rate_study: input field not admissible for the cone");
    L1Study out;
    for (double eps : eps_list) {
        const SupConvResult res = sup_convolve(phi, eps);
        out.eps.push_back(eps);
        out.l1.push_back(res.phi_eps.l1_diff(phi));
    }
    out.fit = fit_loglog(out.eps, out.l1);
    return out;
}

// ---------------------------------------------------------------------------
// Hessian of the transported squared tangent length
// ---------------------------------------------------------------------------

namespace detail {

/// Complex Hessian of a scalar function of normalized coordinates by central
/// differences with step delta.
inline Eigen::MatrixXcd function_complex_hessian(const std::function<double(const Eigen::VectorXcd&)>& F,
                                                 int n, double delta) {
    auto probe = [&](int axis, int s1, int axis2, int s2) {
        Eigen::VectorXcd zeta = Eigen::VectorXcd::Zero(n);
        auto bump = [&](int a, int s) {
            const int j = a / 2;
            zeta(j) += (a % 2 == 0) ? Complexd(s * delta, 0) : Complexd(0, s * delta);
        };
        bump(axis, s1);
        if (axis2 >= 0) bump(axis2, s2);
        return F(zeta);
    };
    const double F0 = F(Eigen::VectorXcd::Zero(n));
    Eigen::MatrixXcd H(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double re, im;
            if (a == b) {
                const double dxx = (probe(2 * a, 1, -1, 0) - 2 * F0 + probe(2 * a, -1, -1, 0)) / (delta * delta);
                const double dyy = (probe(2 * a + 1, 1, -1, 0) - 2 * F0 + probe(2 * a + 1, -1, -1, 0)) / (delta * delta);
                re = dxx + dyy;
                im = 0.0;
            } else {
                auto mixed = [&](int ax, int bx) {
                    return (probe(ax, 1, bx, 1) - probe(ax, 1, bx, -1) - probe(ax, -1, bx, 1) +
                            probe(ax, -1, bx, -1)) /
                           (4.0 * delta * delta);
                };
                re = mixed(2 * a, 2 * b) + mixed(2 * a + 1, 2 * b + 1);
                im = mixed(2 * a, 2 * b + 1) - mixed(2 * a + 1, 2 * b);
            }
            H(a, b) = 0.25 * Complexd(re, im);
        }
    }
    return H;
}

}  // namespace detail

/// Size of dd^c |xi(z)|^2 (0) + sum_ab c_{ab ij} xi0_a conj(xi0_b), where the
/// vector field xi(z) transports the target w0 + N z (N the Hermitian root of
/// the inverse metric at w0 in normalized coordinates).  Decays like |xi0|^3.
inline double xi_field_hessian_bound(const Manifold& M, const ChartPoint& x0,
                                     const Eigen::VectorXcd& xi0) {
    const int n = M.complex_dim();
    const NormalizedChart nc = M.normalized_chart(x0);
    const double r = xi0.norm();  // metric norm at the base: g(0) = I
    if (r == 0.0) return 0.0;

    const Eigen::VectorXcd xi0_chart = nc.dmap_diag(Eigen::VectorXcd::Zero(n)).cwiseProduct(xi0);
    const ChartPoint w0 = M.exp_map(nc.base, xi0_chart);
    const Eigen::VectorXcd w0z = nc.from_point(w0);
    const Eigen::VectorXd Gw = nc.metric_diag(w0z);

    auto F = [&](const Eigen::VectorXcd& zeta) {
        Eigen::VectorXcd target = w0z;
        for (int j = 0; j < n; ++j) target(j) += zeta(j) / std::sqrt(Gw(j));
        const ChartPoint p = nc.to_point(zeta);
        const ChartPoint t = nc.to_point(target);
        // transport solve exp_p(xi) = t: closed-form log seed with a
        // fixed-point polish against exp
        Eigen::VectorXcd xi = M.log_map(p, t);
        for (int it = 0; it < 100; ++it) {
            const Eigen::VectorXcd img = M.exp_raw(p, xi);
            Eigen::VectorXcd tz = t.z;
            if (t.chart != p.chart) {
                // bring the target into p's chart factorwise
                for (int j = 0; j < n; ++j)
                    if (((t.chart >> j) & 1) != ((p.chart >> j) & 1)) tz(j) = 1.0 / tz(j);
            }
            const Eigen::VectorXcd resid = img - tz;
            if (resid.norm() < 1e-10) break;
            xi -= resid;
        }
        const double nrm = M.tangent_norm(p, xi);
        return nrm * nrm;
    };

    const double delta = std::max(0.02 * r, 1e-4);
    const Eigen::MatrixXcd H = detail::function_complex_hessian(F, n, delta);
    const Eigen::MatrixXcd C = M.curvature_at(x0).contract_pair(xi0);
    return (H + C).norm();
}

}  // namespace hesslab

#endif
