#ifndef HESSLAB_MANIFOLD_HPP
#define HESSLAB_MANIFOLD_HPP

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hesslab/common.hpp"

namespace hesslab {

using Complexd = std::complex<double>;

/// A point given by holomorphic coordinates in one chart of the model.
/// Coordinates may be unreduced (outside the canonical region); every
/// geometric query accepts such representations.
struct ChartPoint {
    int chart = 0;
    Eigen::VectorXcd z;
};

/// Curvature coefficients of the normalized-coordinate metric expansion
/// g_{ik} = delta_{ik} - c_{ik,ab} z_a conj(z_b) + O(|z|^3).  The model
/// catalog only produces real tensors.
struct CurvatureTensor {
    int n = 0;
    std::vector<double> c;  // n^4 entries, row-major over (i,k,a,b)

    explicit CurvatureTensor(int dim = 0) : n(dim), c(static_cast<std::size_t>(dim) * dim * dim * dim, 0.0) {}

    double& at(int i, int k, int a, int b) {
        return c[((static_cast<std::size_t>(i) * n + k) * n + a) * n + b];
    }
    double at(int i, int k, int a, int b) const {
        return c[((static_cast<std::size_t>(i) * n + k) * n + a) * n + b];
    }

    /// Bisectional form c_{ik,ab} eta_i conj(eta_k) xi_a conj(xi_b); real by
    /// the Hermitian symmetries.
    double bisectional(const Eigen::VectorXcd& eta, const Eigen::VectorXcd& xi) const {
        Complexd acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < n; ++k)
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        acc += at(i, k, a, b) * eta(i) * std::conj(eta(k)) * xi(a) * std::conj(xi(b));
        return acc.real();
    }

    /// Hermitian matrix (sum_ab c_{ab,ij} v_a conj(v_b))_{ij} contracted over
    /// the first index pair.
    Eigen::MatrixXcd contract_pair(const Eigen::VectorXcd& v) const {
        Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b)
                        out(i, j) += at(a, b, i, j) * v(a) * std::conj(v(b));
        return out;
    }
};

/// Holomorphic coordinates centered at a base point in which the metric is
/// the identity to first order with quadratic coefficients -c_{ik,ab}.
struct NormalizedChart {
    ChartPoint base;
    std::function<ChartPoint(const Eigen::VectorXcd&)> to_point;
    std::function<Eigen::VectorXcd(const ChartPoint&)> from_point;
    std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)> dmap_diag;   // holomorphic Jacobian (diagonal)
    std::function<Eigen::VectorXd(const Eigen::VectorXcd&)> metric_diag;  // pullback metric
};

// ---------------------------------------------------------------------------
// Model catalog.  All three models have diagonal metrics in their charts,
// closed-form exponential and logarithm maps, and constant curvature tensors
// in normalized coordinates.
// ---------------------------------------------------------------------------

class Manifold {
  public:
    virtual ~Manifold() = default;

    virtual std::string kind() const = 0;
    virtual int complex_dim() const = 0;
    virtual int chart_count() const = 0;
    virtual bool flat() const { return false; }

    /// Diagonal of the metric g_{i ibar} at a (possibly unreduced) point.
    virtual Eigen::VectorXd metric_diag(const ChartPoint& p) const = 0;

    /// Curvature coefficients in normalized coordinates at p.
    virtual CurvatureTensor curvature_at(const ChartPoint& p) const = 0;

    /// Geodesic endpoint in the base point's chart, unreduced.  Useful for
    /// finite differencing; exp_map canonicalizes this.
    virtual Eigen::VectorXcd exp_raw(const ChartPoint& p, const Eigen::VectorXcd& xi) const = 0;

    virtual ChartPoint exp_map(const ChartPoint& p, const Eigen::VectorXcd& xi) const = 0;

    /// Inverse of exp_map; requires distance(p, w) <= log_bound().
    virtual Eigen::VectorXcd log_map(const ChartPoint& p, const ChartPoint& w) const = 0;

    virtual double distance(const ChartPoint& p, const ChartPoint& w) const = 0;

    virtual double injectivity_radius() const = 0;

    /// Reduce a point to its canonical chart representation.
    virtual ChartPoint canonical(const ChartPoint& p) const = 0;

    virtual NormalizedChart normalized_chart(const ChartPoint& x0) const = 0;

    // -- conveniences shared by all models --

    Eigen::MatrixXcd metric_at(const ChartPoint& p) const {
        return metric_diag(p).cast<Complexd>().asDiagonal();
    }

    double tangent_norm(const ChartPoint& p, const Eigen::VectorXcd& xi) const {
        const Eigen::VectorXd g = metric_diag(p);
        double s = 0.0;
        for (int j = 0; j < g.size(); ++j) s += g(j) * std::norm(xi(j));
        return std::sqrt(s);
    }

    double volume_density(const ChartPoint& p) const {
        const Eigen::VectorXd g = metric_diag(p);
        double d = 1.0;
        for (int j = 0; j < g.size(); ++j) d *= g(j);
        return d;
    }

    /// Bound below which log_map is kept well-conditioned.
    double log_bound() const { return 0.45 * injectivity_radius(); }
};

using ManifoldPtr = std::shared_ptr<const Manifold>;

// --------------------------------- flat torus ------------------------------

class FlatTorus final : public Manifold {
  public:
    FlatTorus(int n, std::vector<double> periods) : n_(n), periods_(std::move(periods)) {
        if (n_ < 1) throw std::domain_error("FlatTorus: n >= 1");
        if (periods_.empty()) periods_.assign(n_, 1.0);
        if (static_cast<int>(periods_.size()) != n_)
            throw std::domain_error("FlatTorus: one period per complex axis");
        for (double L : periods_)
            if (L <= 0) throw std::domain_error("FlatTorus: periods must be positive");
    }

    std::string kind() const override { return "flat_torus"; }
    int complex_dim() const override { return n_; }
    int chart_count() const override { return 1; }
    bool flat() const override { return true; }
    const std::vector<double>& periods() const { return periods_; }

    Eigen::VectorXd metric_diag(const ChartPoint&) const override {
        return Eigen::VectorXd::Ones(n_);
    }

    CurvatureTensor curvature_at(const ChartPoint&) const override { return CurvatureTensor(n_); }

    Eigen::VectorXcd exp_raw(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        return p.z + xi;
    }

    ChartPoint exp_map(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        return canonical(ChartPoint{0, p.z + xi});
    }

    Eigen::VectorXcd log_map(const ChartPoint& p, const ChartPoint& w) const override {
        Eigen::VectorXcd xi(n_);
        for (int j = 0; j < n_; ++j) {
            const double L = periods_[j];
            xi(j) = Complexd(wrap_diff(w.z(j).real() - p.z(j).real(), L),
                             wrap_diff(w.z(j).imag() - p.z(j).imag(), L));
        }
        return xi;
    }

    double distance(const ChartPoint& p, const ChartPoint& w) const override {
        return log_map(p, w).norm();
    }

    double injectivity_radius() const override {
        double L = periods_[0];
        for (double v : periods_) L = std::min(L, v);
        return 0.5 * L;
    }

    ChartPoint canonical(const ChartPoint& p) const override {
        ChartPoint q{0, p.z};
        for (int j = 0; j < n_; ++j) {
            const double L = periods_[j];
            q.z(j) = Complexd(wrap_coord(p.z(j).real(), L), wrap_coord(p.z(j).imag(), L));
        }
        return q;
    }

    NormalizedChart normalized_chart(const ChartPoint& x0) const override {
        NormalizedChart nc;
        nc.base = canonical(x0);
        const Eigen::VectorXcd z0 = nc.base.z;
        const auto self = this;
        nc.to_point = [z0](const Eigen::VectorXcd& zeta) { return ChartPoint{0, z0 + zeta}; };
        nc.from_point = [z0, self](const ChartPoint& p) {
            return self->log_map(ChartPoint{0, z0}, p);
        };
        const int n = n_;
        nc.dmap_diag = [n](const Eigen::VectorXcd&) { return Eigen::VectorXcd::Ones(n).eval(); };
        nc.metric_diag = [n](const Eigen::VectorXcd&) { return Eigen::VectorXd::Ones(n).eval(); };
        return nc;
    }

  private:
    static double wrap_coord(double x, double L) {
        double r = std::fmod(x, L);
        if (r < 0) r += L;
        return r;
    }
    static double wrap_diff(double d, double L) {
        double r = std::fmod(d, L);
        if (r > 0.5 * L) r -= L;
        if (r < -0.5 * L) r += L;
        return r;
    }

    int n_;
    std::vector<double> periods_;
};

// ------------------------------ Fubini-Study P^1 ---------------------------
//
// Affine-chart metric g(z) = (1 + |z|^2)^{-2}: the round two-sphere of
// Gaussian curvature 4, antipodal distance pi/2.  Geodesics come from the
// one-parameter Moebius family M_z(w) = (w + z) / (1 - conj(z) w).

namespace fs {

inline double metric_scalar(Complexd z) {
    const double t = 1.0 + std::norm(z);
    return 1.0 / (t * t);
}

/// Geodesic endpoint in the base point's affine chart (unreduced).
inline Complexd exp_affine(Complexd z, Complexd xi) {
    const double scale = 1.0 + std::norm(z);
    const Complexd u = xi / scale;
    const double theta = std::abs(u);
    if (theta < 1e-300) return z;
    const Complexd dir = u / theta;
    const Complexd w_local = std::tan(theta) * dir;
    const Complexd num = w_local + z;
    const Complexd den = 1.0 - std::conj(z) * w_local;
    return num / den;
}

/// Same map but reporting whether the chart had to flip (image closer to the
/// antipodal chart), with coordinates valid in the reported chart.
inline std::pair<Complexd, bool> exp_chart_aware(Complexd z, Complexd xi) {
    const double scale = 1.0 + std::norm(z);
    const Complexd u = xi / scale;
    const double theta = std::abs(u);
    if (theta < 1e-300) return {z, false};
    const Complexd dir = u / theta;
    const Complexd w_local = std::tan(theta) * dir;
    const Complexd num = w_local + z;
    const Complexd den = 1.0 - std::conj(z) * w_local;
    if (std::abs(num) <= std::abs(den)) return {num / den, false};
    return {den / num, true};  // reciprocal coordinates, other chart
}

inline double distance_affine(Complexd z, Complexd w) {
    const Complexd num = w - z;
    const Complexd den = 1.0 + std::conj(z) * w;
    return std::atan2(std::abs(num), std::abs(den));
}

/// Distance where the second point carries reciprocal (other-chart)
/// coordinates; algebraically distance_affine(z, 1/what) without the
/// division, so the pole what = 0 is fine.
inline double distance_cross(Complexd z, Complexd what) {
    const Complexd num = 1.0 - z * what;
    const Complexd den = what + std::conj(z);
    return std::atan2(std::abs(num), std::abs(den));
}

/// Tangent at z with exp_affine(z, xi) = w; requires distance below bound.
inline Complexd log_affine(Complexd z, Complexd w) {
    const Complexd zeta = (w - z) / (1.0 + std::conj(z) * w);
    const double a = std::abs(zeta);
    if (a < 1e-300) return Complexd(0.0, 0.0);
    return (1.0 + std::norm(z)) * std::atan(a) * (zeta / a);
}

}  // namespace fs

class FubiniStudyP1 final : public Manifold {
  public:
    std::string kind() const override { return "fubini_study_p1"; }
    int complex_dim() const override { return 1; }
    int chart_count() const override { return 2; }

    Eigen::VectorXd metric_diag(const ChartPoint& p) const override {
        Eigen::VectorXd g(1);
        g(0) = fs::metric_scalar(p.z(0));
        return g;
    }

    CurvatureTensor curvature_at(const ChartPoint&) const override {
        CurvatureTensor t(1);
        t.at(0, 0, 0, 0) = 2.0;  // (1+|z|^2)^{-2} = 1 - 2 z conj(z) + ...
        return t;
    }

    Eigen::VectorXcd exp_raw(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        Eigen::VectorXcd w(1);
        w(0) = fs::exp_affine(p.z(0), xi(0));
        return w;
    }

    ChartPoint exp_map(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        const double len = tangent_norm(p, xi);
        if (len > 0.99 * injectivity_radius())
            throw std::domain_error("exp_map: |xi| beyond the injectivity bound");
        auto [w, flipped] = fs::exp_chart_aware(p.z(0), xi(0));
        ChartPoint q{flipped ? 1 - p.chart : p.chart, Eigen::VectorXcd(1)};
        q.z(0) = w;
        return canonical(q);
    }

    Eigen::VectorXcd log_map(const ChartPoint& p, const ChartPoint& w) const override {
        const Complexd wz = coords_in_chart(w, p.chart);
        if (fs::distance_affine(p.z(0), wz) > log_bound())
            throw std::domain_error("log_map: points beyond the conditioning bound");
        Eigen::VectorXcd xi(1);
        xi(0) = fs::log_affine(p.z(0), wz);
        return xi;
    }

    double distance(const ChartPoint& p, const ChartPoint& w) const override {
        if (w.chart == p.chart) return fs::distance_affine(p.z(0), w.z(0));
        return fs::distance_cross(p.z(0), w.z(0));
    }

    double injectivity_radius() const override { return 0.5 * M_PI; }

    ChartPoint canonical(const ChartPoint& p) const override {
        ChartPoint q = p;
        if (std::abs(q.z(0)) > 1.0) {
            q.chart = 1 - q.chart;
            q.z(0) = 1.0 / q.z(0);
        }
        return q;
    }

    NormalizedChart normalized_chart(const ChartPoint& x0) const override {
        NormalizedChart nc;
        nc.base = x0;
        const int bchart = x0.chart;
        const Complexd z0 = x0.z(0);
        nc.to_point = [bchart, z0](const Eigen::VectorXcd& zeta) {
            ChartPoint p{bchart, Eigen::VectorXcd(1)};
            p.z(0) = (zeta(0) + z0) / (1.0 - std::conj(z0) * zeta(0));
            return p;
        };
        nc.from_point = [bchart, z0](const ChartPoint& p) {
            const Complexd w = (p.chart == bchart) ? p.z(0) : 1.0 / p.z(0);
            Eigen::VectorXcd zeta(1);
            zeta(0) = (w - z0) / (1.0 + std::conj(z0) * w);
            return zeta;
        };
        nc.dmap_diag = [z0](const Eigen::VectorXcd& zeta) {
            Eigen::VectorXcd d(1);
            const Complexd den = 1.0 - std::conj(z0) * zeta(0);
            d(0) = (1.0 + std::norm(z0)) / (den * den);
            return d;
        };
        auto to_point = nc.to_point;
        auto dmap = nc.dmap_diag;
        nc.metric_diag = [to_point, dmap](const Eigen::VectorXcd& zeta) {
            const ChartPoint p = to_point(zeta);
            Eigen::VectorXd g(1);
            g(0) = fs::metric_scalar(p.z(0)) * std::norm(dmap(zeta)(0));
            return g;
        };
        return nc;
    }

  private:
    static Complexd coords_in_chart(const ChartPoint& p, int chart) {
        if (p.chart == chart) return p.z(0);
        const Complexd z = p.z(0);
        if (std::abs(z) < 1e-300)
            throw std::domain_error("FubiniStudyP1: point at the pole of the requested chart");
        return 1.0 / z;
    }
};

// ------------------------------- P^1 products ------------------------------

class ProductOfP1 final : public Manifold {
  public:
    explicit ProductOfP1(int factors) : k_(factors) {
        if (k_ < 1) throw std::domain_error("ProductOfP1: factors >= 1");
        if (k_ > 16) throw std::domain_error("ProductOfP1: chart bookkeeping capped at 16 factors");
    }

    std::string kind() const override { return "product_p1"; }
    int complex_dim() const override { return k_; }
    int chart_count() const override { return 1 << k_; }

    Eigen::VectorXd metric_diag(const ChartPoint& p) const override {
        Eigen::VectorXd g(k_);
        for (int f = 0; f < k_; ++f) g(f) = fs::metric_scalar(p.z(f));
        return g;
    }

    CurvatureTensor curvature_at(const ChartPoint&) const override {
        CurvatureTensor t(k_);
        for (int f = 0; f < k_; ++f) t.at(f, f, f, f) = 2.0;  // mixed components vanish
        return t;
    }

    Eigen::VectorXcd exp_raw(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        Eigen::VectorXcd w(k_);
        for (int f = 0; f < k_; ++f) w(f) = fs::exp_affine(p.z(f), xi(f));
        return w;
    }

    ChartPoint exp_map(const ChartPoint& p, const Eigen::VectorXcd& xi) const override {
        const double len = tangent_norm(p, xi);
        if (len > 0.99 * injectivity_radius())
            throw std::domain_error("exp_map: |xi| beyond the injectivity bound");
        ChartPoint q{p.chart, Eigen::VectorXcd(k_)};
        for (int f = 0; f < k_; ++f) {
            auto [w, flipped] = fs::exp_chart_aware(p.z(f), xi(f));
            q.z(f) = w;
            if (flipped) q.chart ^= (1 << f);
        }
        return canonical(q);
    }

    Eigen::VectorXcd log_map(const ChartPoint& p, const ChartPoint& w) const override {
        if (distance(p, w) > log_bound())
            throw std::domain_error("log_map: points beyond the conditioning bound");
        Eigen::VectorXcd xi(k_);
        for (int f = 0; f < k_; ++f) xi(f) = fs::log_affine(p.z(f), factor_coords(w, f, p.chart));
        return xi;
    }

    double distance(const ChartPoint& p, const ChartPoint& w) const override {
        double s = 0.0;
        for (int f = 0; f < k_; ++f) {
            const bool same = ((w.chart >> f) & 1) == ((p.chart >> f) & 1);
            const double d = same ? fs::distance_affine(p.z(f), w.z(f))
                                  : fs::distance_cross(p.z(f), w.z(f));
            s += d * d;
        }
        return std::sqrt(s);
    }

    double injectivity_radius() const override { return 0.5 * M_PI; }

    ChartPoint canonical(const ChartPoint& p) const override {
        ChartPoint q = p;
        for (int f = 0; f < k_; ++f) {
            if (std::abs(q.z(f)) > 1.0) {
                q.chart ^= (1 << f);
                q.z(f) = 1.0 / q.z(f);
            }
        }
        return q;
    }

    NormalizedChart normalized_chart(const ChartPoint& x0) const override {
        NormalizedChart nc;
        nc.base = x0;
        const int k = k_;
        const int bchart = x0.chart;
        const Eigen::VectorXcd z0 = x0.z;
        nc.to_point = [k, bchart, z0](const Eigen::VectorXcd& zeta) {
            ChartPoint p{bchart, Eigen::VectorXcd(k)};
            for (int f = 0; f < k; ++f)
                p.z(f) = (zeta(f) + z0(f)) / (1.0 - std::conj(z0(f)) * zeta(f));
            return p;
        };
        nc.from_point = [k, bchart, z0](const ChartPoint& p) {
            Eigen::VectorXcd zeta(k);
            for (int f = 0; f < k; ++f) {
                const bool same = ((p.chart >> f) & 1) == ((bchart >> f) & 1);
                const Complexd w = same ? p.z(f) : 1.0 / p.z(f);
                zeta(f) = (w - z0(f)) / (1.0 + std::conj(z0(f)) * w);
            }
            return zeta;
        };
        nc.dmap_diag = [k, z0](const Eigen::VectorXcd& zeta) {
            Eigen::VectorXcd d(k);
            for (int f = 0; f < k; ++f) {
                const Complexd den = 1.0 - std::conj(z0(f)) * zeta(f);
                d(f) = (1.0 + std::norm(z0(f))) / (den * den);
            }
            return d;
        };
        auto to_point = nc.to_point;
        auto dmap = nc.dmap_diag;
        nc.metric_diag = [k, to_point, dmap](const Eigen::VectorXcd& zeta) {
            const ChartPoint p = to_point(zeta);
            const Eigen::VectorXcd d = dmap(zeta);
            Eigen::VectorXd g(k);
            for (int f = 0; f < k; ++f) g(f) = fs::metric_scalar(p.z(f)) * std::norm(d(f));
            return g;
        };
        return nc;
    }

  private:
    Complexd factor_coords(const ChartPoint& p, int f, int chart) const {
        const bool same = ((p.chart >> f) & 1) == ((chart >> f) & 1);
        if (same) return p.z(f);
        if (std::abs(p.z(f)) < 1e-300)
            throw std::domain_error("ProductOfP1: point at the pole of the requested chart");
        return 1.0 / p.z(f);
    }

    int k_;
};

// ------------------------------- construction ------------------------------

inline ManifoldPtr manifold_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "flat_torus") {
        const int n = j.at("n").get<int>();
        std::vector<double> periods;
        if (j.contains("periods")) periods = j["periods"].get<std::vector<double>>();
        return std::make_shared<FlatTorus>(n, periods);
    }
    if (kind == "fubini_study_p1") return std::make_shared<FubiniStudyP1>();
    if (kind == "product_p1") return std::make_shared<ProductOfP1>(j.at("factors").get<int>());
    throw std::invalid_argument("manifold_from_json: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Measure quadratures.  Tensorized midpoint rules in tangent polar
// coordinates; the exp map is finite-differenced for area elements.
// ---------------------------------------------------------------------------

namespace detail {

/// Chart tangent vector of unit metric length along the real direction
/// omega (dimension 2n, |omega| = 1 euclidean).
inline Eigen::VectorXcd unit_tangent(const Eigen::VectorXd& g, const Eigen::VectorXd& omega) {
    const int n = static_cast<int>(g.size());
    Eigen::VectorXcd v(n);
    for (int j = 0; j < n; ++j)
        v(j) = Complexd(omega(2 * j), omega(2 * j + 1)) / std::sqrt(g(j));
    return v;
}

/// Riemannian inner product of chart vectors under the diagonal metric.
inline double metric_dot(const Eigen::VectorXd& g, const Eigen::VectorXcd& u,
                         const Eigen::VectorXcd& w) {
    double s = 0.0;
    for (int j = 0; j < g.size(); ++j) s += g(j) * (u(j) * std::conj(w(j))).real();
    return s;
}

/// Direction on S^{2n-1} from hyperspherical angles (sizes 2n-1); the measure
/// factors are absorbed by the parametrization Jacobian downstream.
inline Eigen::VectorXd sphere_direction(const std::vector<double>& ang, int dim) {
    Eigen::VectorXd w(dim);
    double s = 1.0;
    for (int a = 0; a < dim - 1; ++a) {
        w(a) = s * std::cos(ang[a]);
        s *= std::sin(ang[a]);
    }
    w(dim - 1) = s;
    return w;
}

}  // namespace detail

/// Integral of f over the geodesic sphere of radius r about x, with the
/// induced area measure.  angular is the sample count per angle.
inline double geodesic_sphere_integral(const Manifold& M, const ChartPoint& x, double r,
                                       const std::function<double(const ChartPoint&)>& f,
                                       int angular = 256) {
    const int n = M.complex_dim();
    const int dim = 2 * n;
    const int nang = dim - 1;
    if (r <= 0) throw std::domain_error("geodesic_sphere_integral: r > 0 required");
    if (r > 0.99 * M.injectivity_radius())
        throw std::domain_error("geodesic_sphere_integral: r beyond injectivity bound");
    const Eigen::VectorXd gx = M.metric_diag(x);

    // angle grid: last angle spans [0, 2pi), the rest [0, pi]
    std::vector<int> counts(nang, std::max(8, angular / (nang > 1 ? 2 : 1)));
    counts[nang - 1] = std::max(16, angular);

    auto eval_point = [&](const std::vector<double>& ang) {
        const Eigen::VectorXd omega = detail::sphere_direction(ang, dim);
        return M.exp_raw(x, r * detail::unit_tangent(gx, omega));
    };

    double total = 0.0;
    std::vector<int> idx(nang, 0);
    const double dpsi = 2.0 * M_PI / counts[nang - 1];
    std::vector<double> steps(nang);
    for (int a = 0; a < nang - 1; ++a) steps[a] = M_PI / counts[a];
    steps[nang - 1] = dpsi;

    // iterate the tensor midpoint grid
    std::vector<double> ang(nang);
    const double fd = 1e-4;  // angular finite-difference step
    while (true) {
        for (int a = 0; a < nang; ++a) ang[a] = (idx[a] + 0.5) * steps[a];
        // tangent vectors along each angle by central differences
        Eigen::MatrixXcd tang(n, nang);
        std::vector<double> a2(ang.begin(), ang.end());
        for (int a = 0; a < nang; ++a) {
            a2[a] = ang[a] + fd;
            const Eigen::VectorXcd pp = eval_point(a2);
            a2[a] = ang[a] - fd;
            const Eigen::VectorXcd pm = eval_point(a2);
            a2[a] = ang[a];
            tang.col(a) = (pp - pm) / (2.0 * fd);
        }
        const Eigen::VectorXcd img = eval_point(ang);
        ChartPoint pi_img{x.chart, img};
        const Eigen::VectorXd gimg = M.metric_diag(pi_img);
        Eigen::MatrixXd gram(nang, nang);
        for (int a = 0; a < nang; ++a)
            for (int b = 0; b < nang; ++b)
                gram(a, b) = detail::metric_dot(gimg, tang.col(a), tang.col(b));
        const double det = (nang == 1) ? gram(0, 0) : gram.determinant();
        double cell = std::sqrt(std::max(det, 0.0));
        for (int a = 0; a < nang; ++a) cell *= steps[a];
        total += cell * f(pi_img);

        int a = nang - 1;
        while (a >= 0 && ++idx[a] == counts[a]) idx[a--] = 0;
        if (a < 0) break;
    }
    return total;
}

inline double geodesic_sphere_area(const Manifold& M, const ChartPoint& x, double r,
                                   int angular = 256) {
    return geodesic_sphere_integral(M, x, r, [](const ChartPoint&) { return 1.0; }, angular);
}

/// Integral of f over the geodesic ball of radius r: radial midpoint rule on
/// top of the sphere quadrature, with the full polar Jacobian.
inline double geodesic_ball_integral(const Manifold& M, const ChartPoint& x, double r,
                                     const std::function<double(const ChartPoint&)>& f,
                                     int radial = 48, int angular = 256) {
    if (r <= 0) throw std::domain_error("geodesic_ball_integral: r > 0 required");
    double total = 0.0;
    const double dr = r / radial;
    for (int i = 0; i < radial; ++i) {
        const double rho = (i + 0.5) * dr;
        total += geodesic_sphere_integral(M, x, rho, f, angular) * dr;
    }
    return total;
}

inline double geodesic_ball_volume(const Manifold& M, const ChartPoint& x, double r,
                                   int radial = 48, int angular = 256) {
    return geodesic_ball_integral(M, x, r, [](const ChartPoint&) { return 1.0; }, radial, angular);
}

// ---------------------------------------------------------------------------
// Exponential map Taylor model in normalized coordinates:
//   exp_z(xi)_m = z_m + xi_m + sum c_{jklm} (z_k^bar / 2 + xi_k^bar / 6) xi_j xi_l
// with remainder O(|xi|^2 (|z|^2 + |xi|^2)).
// ---------------------------------------------------------------------------

inline double exp_taylor_residual(const Manifold& M, const ChartPoint& x0,
                                  const Eigen::VectorXcd& zeta, const Eigen::VectorXcd& xi) {
    const int n = M.complex_dim();
    const NormalizedChart nc = M.normalized_chart(x0);
    const CurvatureTensor c = M.curvature_at(x0);

    const ChartPoint p = nc.to_point(zeta);
    const Eigen::VectorXcd xi_chart = nc.dmap_diag(zeta).cwiseProduct(xi);
    const Eigen::VectorXcd actual = nc.from_point(M.exp_map(p, xi_chart));

    Eigen::VectorXcd model = zeta + xi;
    for (int m = 0; m < n; ++m) {
        Complexd corr = 0.0;
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    corr += c.at(j, k, l, m) *
                            (0.5 * std::conj(zeta(k)) + std::conj(xi(k)) / 6.0) * xi(j) * xi(l);
        model(m) += corr;
    }
    return (actual - model).norm();
}

}  // namespace hesslab

#endif
