#ifndef HESSLAB_FIELD_HPP
#define HESSLAB_FIELD_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hesslab/common.hpp"
#include "hesslab/cone.hpp"
#include "hesslab/manifold.hpp"

namespace hesslab {

// ---------------------------------------------------------------------------
// Per-chart uniform grids
// ---------------------------------------------------------------------------

struct ChartGrid {
    int raxes = 0;             // 2n real axes
    std::vector<int> dims;     // samples per axis
    std::vector<double> lo;    // origin per axis
    double h = 0.0;            // common spacing
    bool periodic = false;

    std::int64_t size() const {
        std::int64_t s = 1;
        for (int d : dims) s *= d;
        return s;
    }
    std::int64_t stride(int axis) const {
        std::int64_t s = 1;
        for (int a = axis + 1; a < raxes; ++a) s *= dims[a];
        return s;
    }
    void decode(std::int64_t idx, std::vector<int>& mi) const {
        mi.resize(raxes);
        for (int a = raxes - 1; a >= 0; --a) {
            mi[a] = static_cast<int>(idx % dims[a]);
            idx /= dims[a];
        }
    }
    std::int64_t encode(const std::vector<int>& mi) const {
        std::int64_t idx = 0;
        for (int a = 0; a < raxes; ++a) idx = idx * dims[a] + mi[a];
        return idx;
    }
    double coord(int axis, int i) const { return lo[axis] + h * i; }

    /// Index of the site shifted by `step` cells along `axis`; -1 when the
    /// shift leaves a non-periodic grid.
    std::int64_t neighbor(std::int64_t idx, int axis, int step, std::vector<int>& scratch) const {
        decode(idx, scratch);
        int i = scratch[axis] + step;
        if (periodic) {
            i %= dims[axis];
            if (i < 0) i += dims[axis];
        } else if (i < 0 || i >= dims[axis]) {
            return -1;
        }
        scratch[axis] = i;
        return encode(scratch);
    }
};

// ---------------------------------------------------------------------------
// Scalar samples on the model manifolds.  Multi-chart models carry a smooth
// partition of unity so that global integrals count overlaps once.
// ---------------------------------------------------------------------------

class LatticeField {
  public:
    // chart squares for the P^1 models: [-kChartHalf, kChartHalf]^2 per factor,
    // with the canonical region |z| <= 1 well inside
    static constexpr double kChartHalf = 1.25;
    static constexpr double kPouLogWidth = 0.1;  // partition ramp half-width in log|z|

    LatticeField() = default;

    static LatticeField from_function(const ManifoldPtr& M, int per_axis,
                                      const std::function<double(const ChartPoint&)>& fn,
                                      bool check_overlap = true) {
        LatticeField f;
        f.init_grids(M, per_axis);
        for (int c = 0; c < f.chart_count(); ++c) {
            const std::int64_t sz = f.grids_[c].size();
            auto& vals = f.vals_[c];
            parallel_for(sz, [&](std::int64_t i) { vals[i] = fn(f.site_point(c, i)); });
        }
        f.finalize();
        if (check_overlap && f.chart_count() > 1) f.check_overlap_consistency(fn);
        return f;
    }

    /// Same grids as `like`, values filled per site.
    static LatticeField like(const LatticeField& src, const std::function<double(int, std::int64_t)>& fn) {
        LatticeField f = src;
        for (int c = 0; c < f.chart_count(); ++c) {
            auto& vals = f.vals_[c];
            parallel_for(f.grids_[c].size(), [&](std::int64_t i) { vals[i] = fn(c, i); });
        }
        f.finalize();
        return f;
    }

    const ManifoldPtr& manifold() const { return M_; }
    int chart_count() const { return static_cast<int>(grids_.size()); }
    const ChartGrid& grid(int c) const { return grids_[c]; }
    double spacing() const { return grids_[0].h; }
    double value(int c, std::int64_t i) const { return vals_[c][i]; }
    double& value(int c, std::int64_t i) { return vals_[c][i]; }
    double pou(int c, std::int64_t i) const { return pou_[c][i]; }
    /// Integration weight: pou * volume density * h^{2n}.
    double weight(int c, std::int64_t i) const { return weight_[c][i]; }
    double sup_norm() const { return sup_norm_; }
    /// Sites that interpolation or stencils of covered sites can read; the
    /// far corners of multi-chart squares are dead weight.
    bool active(int c, std::int64_t i) const { return active_[c][i] != 0; }

    ChartPoint site_point(int c, std::int64_t idx) const {
        const ChartGrid& g = grids_[c];
        std::vector<int> mi;
        g.decode(idx, mi);
        const int n = g.raxes / 2;
        ChartPoint p{c, Eigen::VectorXcd(n)};
        for (int j = 0; j < n; ++j)
            p.z(j) = Complexd(g.coord(2 * j, mi[2 * j]), g.coord(2 * j + 1, mi[2 * j + 1]));
        return p;
    }

    /// Multilinear interpolation.  Points are reduced to their canonical
    /// chart; on multi-chart models the overlap band blends the two charts'
    /// interpolants with the partition-of-unity ramp, so the result is one
    /// continuous function of the point (the per-chart interpolants differ
    /// by O(h^2), which second differences would otherwise amplify).
    /// Exact grid nodes of the canonical chart return the stored sample.
    double eval(const ChartPoint& p_in) const {
        const ChartPoint p = M_->canonical(p_in);
        const int n = grids_[p.chart].raxes / 2;
        double x[8];
        for (int j = 0; j < n; ++j) {
            x[2 * j] = p.z(j).real();
            x[2 * j + 1] = p.z(j).imag();
        }
        if (chart_count() == 1) return eval_axes(p.chart, x);

        // factor weights; only band factors (0 < chi < 1) need both charts
        double chi[4];
        int band[4];
        int nband = 0;
        for (int j = 0; j < n; ++j) {
            chi[j] = pou_factor(std::abs(p.z(j)));
            if (chi[j] > 0.0 && chi[j] < 1.0) band[nband++] = j;
        }
        double acc = 0.0;
        for (int combo = 0; combo < (1 << nband); ++combo) {
            double w = 1.0;
            int chart = p.chart;
            double xx[8];
            for (int a = 0; a < 2 * n; ++a) xx[a] = x[a];
            for (int b = 0; b < nband; ++b) {
                const int f = band[b];
                if ((combo >> b) & 1) {
                    w *= 1.0 - chi[f];
                    const Complexd zf(x[2 * f], x[2 * f + 1]);
                    const Complexd rf = 1.0 / zf;
                    xx[2 * f] = rf.real();
                    xx[2 * f + 1] = rf.imag();
                    chart ^= (1 << f);
                } else {
                    w *= chi[f];
                }
            }
            if (w > 0.0) acc += w * eval_axes(chart, xx);
        }
        return acc;
    }

    /// Allocation-free interpolation from raw chart coordinates (the hot path
    /// of the sup-convolution search).  Coordinates must lie inside the chart
    /// grid unless it is periodic.
    double eval_axes(int chart, const double* x) const {
        const ChartGrid& g = grids_[chart];
        int base_i[8];
        double frac[8];
        for (int a = 0; a < g.raxes; ++a) split_axis(g, a, x[a], base_i[a], frac[a]);
        const auto& vals = vals_[chart];
        const int corners = 1 << g.raxes;
        double acc = 0.0;
        for (int cbits = 0; cbits < corners; ++cbits) {
            double w = 1.0;
            std::int64_t idx = 0;
            for (int a = 0; a < g.raxes; ++a) {
                const int up = (cbits >> a) & 1;
                const double fa = frac[a];
                w *= up ? fa : (1.0 - fa);
                if (w == 0.0) break;
                int i = base_i[a] + up;
                if (g.periodic) i %= g.dims[a];
                idx = idx * g.dims[a] + i;
            }
            if (w != 0.0) acc += w * vals[idx];
        }
        return acc;
    }

    // ---- reductions (serial, index-ordered: reports are byte-stable) ----

    double integral() const {
        double s = 0.0;
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i) s += weight_[c][i] * vals_[c][i];
        return s;
    }

    double l1_norm() const {
        double s = 0.0;
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i)
                s += weight_[c][i] * std::abs(vals_[c][i]);
        return s;
    }

    double volume() const {
        double s = 0.0;
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i) s += weight_[c][i];
        return s;
    }

    template <class Fn>
    LatticeField map(const LatticeField& other, Fn&& fn) const {
        require_same_grid(other);
        LatticeField out = *this;
        for (int c = 0; c < chart_count(); ++c) {
            auto& vals = out.vals_[c];
            const auto& a = vals_[c];
            const auto& b = other.vals_[c];
            for (std::int64_t i = 0; i < grids_[c].size(); ++i) vals[i] = fn(a[i], b[i]);
        }
        out.finalize();
        return out;
    }

    double l1_diff(const LatticeField& other) const {
        require_same_grid(other);
        double s = 0.0;
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i)
                s += weight_[c][i] * std::abs(vals_[c][i] - other.vals_[c][i]);
        return s;
    }

    /// max over covered sites of (this - other); covered = positive pou.
    double sup_diff(const LatticeField& other) const {
        require_same_grid(other);
        double s = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i)
                if (pou_[c][i] > 0.0) s = std::max(s, vals_[c][i] - other.vals_[c][i]);
        return s;
    }

    void require_same_grid(const LatticeField& other) const {
        if (M_ != other.M_ || grids_.size() != other.grids_.size())
            throw std::invalid_argument("LatticeField: mismatched grids");
        for (std::size_t c = 0; c < grids_.size(); ++c)
            if (grids_[c].dims != other.grids_[c].dims || grids_[c].h != other.grids_[c].h)
                throw std::invalid_argument("LatticeField: mismatched grids");
    }

    // ---- persistence: CSV of samples plus a JSON header ----

    void save(const std::string& stem, const nlohmann::json& manifold_config) const {
        nlohmann::json hdr;
        hdr["manifold"] = manifold_config;
        hdr["charts"] = chart_count();
        hdr["h"] = grids_[0].h;
        hdr["dims"] = grids_[0].dims;
        hdr["per_axis"] = grids_[0].periodic ? grids_[0].dims[0] : grids_[0].dims[0] - 1;
        std::ofstream jh(stem + ".json");
        jh << hdr.dump(2) << "\n";
        std::ofstream csv(stem + ".csv");
        csv << "chart,index,value\n";
        for (int c = 0; c < chart_count(); ++c)
            for (std::int64_t i = 0; i < grids_[c].size(); ++i)
                csv << c << "," << i << "," << format_double(vals_[c][i]) << "\n";
    }

    static LatticeField load(const std::string& stem) {
        std::ifstream jh(stem + ".json");
        if (!jh) throw std::runtime_error("LatticeField::load: missing header " + stem + ".json");
        nlohmann::json hdr;
        jh >> hdr;
        auto M = manifold_from_json(hdr.at("manifold"));
        const int per_axis = hdr.contains("per_axis") ? hdr["per_axis"].get<int>()
                                                      : hdr.at("dims").get<std::vector<int>>()[0];
        LatticeField f;
        f.init_grids(M, per_axis);
        std::ifstream csv(stem + ".csv");
        std::string line;
        std::getline(csv, line);  // header row
        while (std::getline(csv, line)) {
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            const int c = std::stoi(line.substr(0, c1));
            const std::int64_t i = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
            f.vals_[c][i] = std::stod(line.substr(c2 + 1));
        }
        f.finalize();
        return f;
    }

    // grid construction is shared with builders elsewhere
    void init_grids(const ManifoldPtr& M, int per_axis) {
        if (per_axis < 8) throw std::domain_error("LatticeField: at least 8 samples per axis");
        M_ = M;
        const int n = M->complex_dim();
        grids_.clear();
        if (M->kind() == "flat_torus") {
            const auto* T = dynamic_cast<const FlatTorus*>(M.get());
            const auto& L = T->periods();
            double lmin = L[0];
            for (double v : L) lmin = std::min(lmin, v);
            ChartGrid g;
            g.raxes = 2 * n;
            g.h = lmin / per_axis;
            g.periodic = true;
            for (int j = 0; j < n; ++j) {
                const int nj = static_cast<int>(std::lround(L[j] / g.h));
                if (std::abs(nj * g.h - L[j]) > 1e-9 * L[j])
                    throw std::domain_error("LatticeField: periods must be commensurate with the spacing");
                g.dims.push_back(nj);
                g.dims.push_back(nj);
                g.lo.push_back(0.0);
                g.lo.push_back(0.0);
            }
            grids_.push_back(g);
        } else {
            const int charts = M->chart_count();
            ChartGrid g;
            g.raxes = 2 * n;
            g.h = 2.0 * kChartHalf / per_axis;
            g.periodic = false;
            for (int a = 0; a < 2 * n; ++a) {
                g.dims.push_back(per_axis + 1);  // include both endpoints, node at 0
                g.lo.push_back(-kChartHalf);
            }
            grids_.assign(charts, g);
        }
        vals_.clear();
        for (const auto& g : grids_) vals_.emplace_back(g.size(), 0.0);
    }

    /// Recompute cached weights and the sup norm after values change.
    void finalize() {
        const int n = M_->complex_dim();
        pou_.resize(grids_.size());
        weight_.resize(grids_.size());
        active_.resize(grids_.size());
        sup_norm_ = 0.0;
        for (int c = 0; c < chart_count(); ++c) {
            const ChartGrid& g = grids_[c];
            const std::int64_t sz = g.size();
            pou_[c].assign(sz, 1.0);
            weight_[c].assign(sz, 0.0);
            active_[c].assign(sz, 1);
            const double cellvol = std::pow(g.h, g.raxes);
            const double read_margin = std::exp(kPouLogWidth) + 2.0 * g.h;
            for (std::int64_t i = 0; i < sz; ++i) {
                const ChartPoint p = site_point(c, i);
                double w = 1.0;
                if (chart_count() > 1) {
                    bool readable = true;
                    for (int j = 0; j < n; ++j) {
                        w *= pou_factor(std::abs(p.z(j)));
                        if (std::abs(p.z(j)) > read_margin) readable = false;
                    }
                    active_[c][i] = readable ? 1 : 0;
                }
                pou_[c][i] = w;
                weight_[c][i] = w * M_->volume_density(p) * cellvol;
                if (w > 0.0) sup_norm_ = std::max(sup_norm_, std::abs(vals_[c][i]));
            }
        }
    }

    /// Smooth chart weight: 1 inside |z| < e^{-w}, 0 outside |z| > e^{w},
    /// cubic ramp in log|z| between.  Reciprocal coordinates sum to one.
    static double pou_factor(double absz) {
        if (absz <= 0.0) return 1.0;
        const double u = std::log(absz) / kPouLogWidth;
        if (u <= -1.0) return 1.0;
        if (u >= 1.0) return 0.0;
        const double t = 0.5 * (u + 1.0);
        return 1.0 - (3.0 * t * t - 2.0 * t * t * t);
    }

  private:
    static void split_axis(const ChartGrid& g, int axis, double x, int& i0, double& frac) {
        double t = (x - g.lo[axis]) / g.h;
        if (g.periodic) {
            const int d = g.dims[axis];
            t = std::fmod(t, d);
            if (t < 0) t += d;
            i0 = static_cast<int>(t);
            if (i0 >= d) i0 = d - 1;
            frac = t - i0;
        } else {
            i0 = static_cast<int>(std::floor(t));
            frac = t - i0;
            if (i0 < 0) {
                if (t > -1e-9) { i0 = 0; frac = 0.0; }
                else throw std::domain_error("LatticeField::eval: point outside chart grid");
            }
            if (i0 >= g.dims[axis] - 1) {
                if (t < g.dims[axis] - 1 + 1e-9) { i0 = g.dims[axis] - 2; frac = 1.0; }
                else throw std::domain_error("LatticeField::eval: point outside chart grid");
            }
        }
        if (frac < 1e-12) frac = 0.0;
        if (frac > 1.0 - 1e-12) frac = 1.0;
    }

    void check_overlap_consistency(const std::function<double(const ChartPoint&)>& fn) const {
        for (int c = 0; c < chart_count(); ++c) {
            const std::int64_t sz = grids_[c].size();
            for (std::int64_t i = 0; i < sz; i += 7) {
                if (pou_[c][i] <= 0.0 || pou_[c][i] >= 1.0) continue;
                const ChartPoint p = site_point(c, i);
                ChartPoint q = p;
                // fully reciprocal representation
                const int n = M_->complex_dim();
                for (int j = 0; j < n; ++j) {
                    if (std::abs(q.z(j)) < 1e-12) continue;
                    q.z(j) = 1.0 / q.z(j);
                    q.chart ^= (1 << j);
                }
                if (std::abs(fn(p) - fn(q)) > 1e-8 * (1.0 + std::abs(vals_[c][i])))
                    throw std::domain_error("LatticeField: chart overlap mismatch at construction");
            }
        }
    }

    ManifoldPtr M_;
    std::vector<ChartGrid> grids_;
    std::vector<std::vector<double>> vals_;
    std::vector<std::vector<double>> pou_;
    std::vector<std::vector<double>> weight_;
    std::vector<std::vector<std::uint8_t>> active_;
    double sup_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Discrete complex Hessian and eigenvalue fields
// ---------------------------------------------------------------------------

struct HermitianField {
    ManifoldPtr M;
    int n = 0;
    std::vector<std::vector<Complexd>> entries;     // per chart: size * n * n
    std::vector<std::vector<std::uint8_t>> valid;   // stencil fits

    Eigen::MatrixXcd at(int c, std::int64_t i) const {
        Eigen::MatrixXcd H(n, n);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) H(a, b) = entries[c][(i * n + a) * n + b];
        return H;
    }
};

struct EigenField {
    int n = 0;
    std::vector<std::vector<double>> lambda;        // per chart: size * n, ascending
    std::vector<std::vector<std::uint8_t>> valid;

    Eigenvalues at(int c, std::int64_t i) const {
        Eigenvalues l(n);
        for (int a = 0; a < n; ++a) l[a] = lambda[c][i * n + a];
        return l;
    }
};

namespace detail {

/// Second differences of the samples around one site: same-axis and the
/// 4-point cross stencil.  Returns false when the stencil leaves the grid.
class StencilReader {
  public:
    StencilReader(const LatticeField& f, int chart) : f_(f), c_(chart), g_(f.grid(chart)) {}

    bool load(std::int64_t idx) {
        idx_ = idx;
        g_.decode(idx, mi_);
        if (!g_.periodic) {
            for (int a = 0; a < g_.raxes; ++a)
                if (mi_[a] < 1 || mi_[a] > g_.dims[a] - 2) return false;
        }
        return true;
    }

    double at_offset(int a1, int s1, int a2, int s2) const {
        std::vector<int> mi = mi_;
        shift(mi, a1, s1);
        if (a2 >= 0) shift(mi, a2, s2);
        return f_.value(c_, g_.encode(mi));
    }

    double second_same(int axis) const {
        const double c = f_.value(c_, idx_);
        return (at_offset(axis, 1, -1, 0) - 2.0 * c + at_offset(axis, -1, -1, 0)) / (g_.h * g_.h);
    }

    double second_mixed(int a, int b) const {
        return (at_offset(a, 1, b, 1) - at_offset(a, 1, b, -1) - at_offset(a, -1, b, 1) +
                at_offset(a, -1, b, -1)) /
               (4.0 * g_.h * g_.h);
    }

  private:
    void shift(std::vector<int>& mi, int axis, int step) const {
        int i = mi[axis] + step;
        if (g_.periodic) {
            i %= g_.dims[axis];
            if (i < 0) i += g_.dims[axis];
        }
        mi[axis] = i;
    }

    const LatticeField& f_;
    int c_;
    const ChartGrid& g_;
    std::int64_t idx_ = 0;
    std::vector<int> mi_;
};

}  // namespace detail

/// phi_{j kbar} by second-order central differences,
///   phi_{j kbar} = ((d_{x_j x_k} + d_{y_j y_k}) + i (d_{x_j y_k} - d_{y_j x_k})) / 4.
/// Exact on fields quadratic in (z, zbar) away from non-periodic boundaries.
inline HermitianField complex_hessian(const LatticeField& phi) {
    const ManifoldPtr& M = phi.manifold();
    const int n = M->complex_dim();
    HermitianField H;
    H.M = M;
    H.n = n;
    H.entries.resize(phi.chart_count());
    H.valid.resize(phi.chart_count());
    for (int c = 0; c < phi.chart_count(); ++c) {
        const std::int64_t sz = phi.grid(c).size();
        H.entries[c].assign(sz * n * n, Complexd(0, 0));
        H.valid[c].assign(sz, 0);
        auto& ent = H.entries[c];
        auto& val = H.valid[c];
        parallel_for(sz, [&](std::int64_t i) {
            detail::StencilReader st(phi, c);
            if (!st.load(i)) return;
            val[i] = 1;
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) {
                    double re, im;
                    if (a == b) {
                        re = st.second_same(2 * a) + st.second_same(2 * a + 1);
                        im = 0.0;  // the symmetric cross stencil cancels exactly
                    } else {
                        re = st.second_mixed(2 * a, 2 * b) + st.second_mixed(2 * a + 1, 2 * b + 1);
                        im = st.second_mixed(2 * a, 2 * b + 1) - st.second_mixed(2 * a + 1, 2 * b);
                    }
                    ent[(i * n + a) * n + b] = 0.25 * Complexd(re, im);
                }
            }
        });
    }
    return H;
}

/// Eigenvalues of h_phi = g^{-1}(g + dd^c phi) per site, sorted ascending.
/// The metric-symmetrized form g^{-1/2}(g + H)g^{-1/2} keeps them real.
inline EigenField eigen_field(const LatticeField& phi) {
    const HermitianField H = complex_hessian(phi);
    const ManifoldPtr& M = phi.manifold();
    const int n = M->complex_dim();
    EigenField E;
    E.n = n;
    E.lambda.resize(phi.chart_count());
    E.valid = H.valid;
    for (int c = 0; c < phi.chart_count(); ++c) {
        const std::int64_t sz = phi.grid(c).size();
        E.lambda[c].assign(sz * n, 0.0);
        auto& lam = E.lambda[c];
        parallel_for(sz, [&](std::int64_t i) {
            if (!H.valid[c][i]) return;
            const Eigen::VectorXd g = M->metric_diag(phi.site_point(c, i));
            if (n == 1) {
                lam[i] = 1.0 + (H.entries[c][i].real()) / g(0);
                return;
            }
            Eigen::MatrixXcd A(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    A(a, b) = ((a == b) ? 1.0 : 0.0) +
                              H.entries[c][(i * n + a) * n + b] / std::sqrt(g(a) * g(b));
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
            for (int a = 0; a < n; ++a) lam[i * n + a] = es.eigenvalues()(a);
        });
    }
    return E;
}

/// Laplace-Beltrami by second differences: sum_j (d_{x_j x_j} + d_{y_j y_j}) / g_j.
inline double discrete_laplacian(const LatticeField& phi, int c, std::int64_t i) {
    detail::StencilReader st(phi, c);
    if (!st.load(i)) throw std::domain_error("discrete_laplacian: stencil outside grid");
    const Eigen::VectorXd g = phi.manifold()->metric_diag(phi.site_point(c, i));
    double acc = 0.0;
    for (int j = 0; j < g.size(); ++j)
        acc += (st.second_same(2 * j) + st.second_same(2 * j + 1)) / g(j);
    return acc;
}

// ---------------------------------------------------------------------------
// Admissibility
// ---------------------------------------------------------------------------

struct AdmissibilityReport {
    std::string mode;
    bool pass = false;
    double fraction_admissible = 0.0;
    std::int64_t sites_checked = 0;
    std::int64_t sites_violating = 0;
    int worst_chart = -1;
    std::int64_t worst_index = -1;
    double worst_score = std::numeric_limits<double>::infinity();
    Eigenvalues worst_lambda;
    // The finite probe family is an under-approximation of "all C^2 test
    // functions"; reports carry the flag so consumers do not over-read a pass.
    bool probe_family_exhaustive = false;

    nlohmann::json to_json() const {
        return nlohmann::json{{"mode", mode},
                              {"pass", pass},
                              {"fraction_admissible", fraction_admissible},
                              {"sites_checked", sites_checked},
                              {"sites_violating", sites_violating},
                              {"worst_chart", worst_chart},
                              {"worst_index", worst_index},
                              {"worst_lambda", worst_lambda},
                              {"probe_family_exhaustive", probe_family_exhaustive}};
    }
};

namespace detail {

/// Ranking score: the most binding normalized sigma_i (or min / sum for the
/// orthant and half-space cones).  Positive roughly means inside.
inline double cone_score(const Eigenvalues& l, const ConeSpec& cone) {
    double scale = 0.0;
    for (double v : l) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) return 0.0;
    switch (cone.kind) {
        case ConeKind::GammaM: {
            double worst = std::numeric_limits<double>::infinity();
            for (int i = 1; i <= cone.m; ++i)
                worst = std::min(worst, sigma_k(l, i) / std::pow(scale, i));
            return worst;
        }
        case ConeKind::GammaN: {
            double mn = l[0];
            for (double v : l) mn = std::min(mn, v);
            return mn / scale;
        }
        default: {
            double s = 0.0;
            for (double v : l) s += v;
            return s / scale;
        }
    }
}

}  // namespace detail

/// Pointwise admissibility: lambda(h_phi) + slack in the cone at every
/// covered site with a valid stencil.
inline AdmissibilityReport admissibility_pointwise(const LatticeField& phi, const ConeSpec& cone,
                                                   double slack) {
    if (slack < 0) throw std::domain_error("admissibility: slack >= 0 required");
    const EigenField E = eigen_field(phi);
    AdmissibilityReport rep;
    rep.mode = "pointwise";
    for (int c = 0; c < phi.chart_count(); ++c) {
        for (std::int64_t i = 0; i < phi.grid(c).size(); ++i) {
            if (!E.valid[c][i] || phi.pou(c, i) <= 0.0) continue;
            Eigenvalues l = E.at(c, i);
            for (double& v : l) v += slack;
            ++rep.sites_checked;
            const bool ok = in_cone(l, cone);
            if (!ok) ++rep.sites_violating;
            const double score = detail::cone_score(l, cone);
            if (score < rep.worst_score) {
                rep.worst_score = score;
                rep.worst_chart = c;
                rep.worst_index = i;
                rep.worst_lambda = l;
            }
        }
    }
    rep.fraction_admissible =
        rep.sites_checked ? 1.0 - static_cast<double>(rep.sites_violating) / rep.sites_checked : 0.0;
    rep.pass = rep.sites_violating == 0 && rep.sites_checked > 0;
    return rep;
}

/// Viscosity-probe admissibility: quadratics from a finite family are slid
/// down onto the interpolated field inside a radius-3h ball; each interior
/// touching point must satisfy the cone condition with the given slack.
/// Meant for non-smooth fields where raw second differences are unreliable.
inline AdmissibilityReport admissibility_probe(const LatticeField& phi, const ConeSpec& cone,
                                               double slack) {
    if (slack < 0) throw std::domain_error("admissibility: slack >= 0 required");
    const ManifoldPtr& M = phi.manifold();
    const int n = M->complex_dim();
    const int d = 2 * n;
    const double h = phi.spacing();
    const double rho = 3.0 * h;
    const double sub = 0.5 * h;

    // probe offsets: sub-lattice of spacing h/2 inside the ball
    std::vector<Eigen::VectorXd> offsets;
    {
        const int reach = static_cast<int>(std::floor(rho / sub));
        std::vector<int> mi(d, -reach);
        while (true) {
            Eigen::VectorXd off(d);
            for (int a = 0; a < d; ++a) off(a) = mi[a] * sub;
            if (off.norm() <= rho + 1e-12) offsets.push_back(off);
            int a = d - 1;
            while (a >= 0 && ++mi[a] > reach) mi[a--] = -reach;
            if (a < 0) break;
        }
    }

    const std::vector<double> scales{-8, -4, -2, -1, -0.5, -0.25, -0.125, 0,
                                     0.125, 0.5, 0.25, 1, 2, 4, 8};

    struct SiteResult {
        bool checked = false;
        bool ok = true;
        double score = std::numeric_limits<double>::infinity();
        Eigenvalues lambda;
    };

    AdmissibilityReport rep;
    rep.mode = "viscosity-probe";
    for (int c = 0; c < phi.chart_count(); ++c) {
        const std::int64_t sz = phi.grid(c).size();
        std::vector<SiteResult> results(sz);
        parallel_for(sz, [&](std::int64_t i) {
            if (phi.pou(c, i) <= 0.0) return;
            detail::StencilReader st(phi, c);
            if (!st.load(i)) return;
            SiteResult& out = results[i];
            out.checked = true;

            const ChartPoint x0 = phi.site_point(c, i);
            // local gradient and second-difference matrix
            Eigen::VectorXd grad(d);
            Eigen::MatrixXd D2(d, d);
            for (int a = 0; a < d; ++a) {
                grad(a) = (st.at_offset(a, 1, -1, 0) - st.at_offset(a, -1, -1, 0)) / (2.0 * h);
                D2(a, a) = st.second_same(a);
                for (int b = a + 1; b < d; ++b) D2(a, b) = D2(b, a) = st.second_mixed(a, b);
            }

            // interpolated samples of phi on the probe ball, relative offsets
            std::vector<double> samples(offsets.size());
            for (std::size_t s = 0; s < offsets.size(); ++s) {
                ChartPoint p = x0;
                for (int j = 0; j < n; ++j)
                    p.z(j) += Complexd(offsets[s](2 * j), offsets[s](2 * j + 1));
                samples[s] = phi.eval(p);
            }
            const double base = phi.value(c, i);

            auto test_candidate = [&](const Eigen::MatrixXd& Q) {
                // slide the paraboloid down to touch
                double cshift = -std::numeric_limits<double>::infinity();
                std::size_t arg = 0;
                for (std::size_t s = 0; s < offsets.size(); ++s) {
                    const Eigen::VectorXd& o = offsets[s];
                    const double q = base + grad.dot(o) + 0.5 * o.dot(Q * o);
                    const double gap = samples[s] - q;
                    if (gap > cshift) {
                        cshift = gap;
                        arg = s;
                    }
                }
                if (offsets[arg].norm() > rho - sub - 1e-12) return;  // boundary touch: no constraint
                // complex Hessian of the touching quadratic
                ChartPoint xstar = x0;
                for (int j = 0; j < n; ++j)
                    xstar.z(j) += Complexd(offsets[arg](2 * j), offsets[arg](2 * j + 1));
                const Eigen::VectorXd g = M->metric_diag(xstar);
                Eigen::MatrixXcd A(n, n);
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) {
                        const double re = 0.25 * (Q(2 * a, 2 * b) + Q(2 * a + 1, 2 * b + 1));
                        const double im = 0.25 * (Q(2 * a, 2 * b + 1) - Q(2 * a + 1, 2 * b));
                        A(a, b) = ((a == b) ? 1.0 : 0.0) + Complexd(re, im) / std::sqrt(g(a) * g(b));
                    }
                Eigenvalues l(n);
                if (n == 1) {
                    l[0] = A(0, 0).real();
                } else {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
                    for (int a = 0; a < n; ++a) l[a] = es.eigenvalues()(a);
                }
                for (double& v : l) v += slack;
                const double score = detail::cone_score(l, cone);
                if (score < out.score) {
                    out.score = score;
                    out.lambda = l;
                }
                if (!in_cone(l, cone)) out.ok = false;
            };

            Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(d, d);
            for (double s : scales) {
                Q = s * Eigen::MatrixXd::Identity(d, d);
                test_candidate(Q);
                test_candidate(D2 + s * Eigen::MatrixXd::Identity(d, d));
            }
        });
        for (std::int64_t i = 0; i < sz; ++i) {
            const SiteResult& r = results[i];
            if (!r.checked) continue;
            ++rep.sites_checked;
            if (!r.ok) ++rep.sites_violating;
            if (r.score < rep.worst_score) {
                rep.worst_score = r.score;
                rep.worst_chart = c;
                rep.worst_index = i;
                rep.worst_lambda = r.lambda;
            }
        }
    }
    rep.fraction_admissible =
        rep.sites_checked ? 1.0 - static_cast<double>(rep.sites_violating) / rep.sites_checked : 0.0;
    rep.pass = rep.sites_violating == 0 && rep.sites_checked > 0;
    return rep;
}

inline AdmissibilityReport admissibility(const LatticeField& phi, const ConeSpec& cone, double slack,
                                         const std::string& mode = "pointwise") {
    if (mode == "pointwise") return admissibility_pointwise(phi, cone, slack);
    if (mode == "viscosity-probe") return admissibility_probe(phi, cone, slack);
    throw std::invalid_argument("admissibility: unknown mode " + mode);
}

// ---------------------------------------------------------------------------
// Mean value inequality and sphere-mean monotonicity
// ---------------------------------------------------------------------------

struct MeanValueReport {
    double fitted_C = 0.0;  // min C with u(x) <= avg_r + C r across the radii
    std::vector<double> radii;
    std::vector<double> deficits;  // (u(x) - avg_r) / r per radius
};

/// Subharmonicity is a precondition: the discrete Laplacian must clear
/// -tol_sub on the working region (default noise floor 10 h^2 scale).
inline MeanValueReport mean_value_check(const LatticeField& u, const ChartPoint& x,
                                        const std::vector<double>& radii, double tol_sub = -1.0) {
    const ManifoldPtr& M = u.manifold();
    const int n = M->complex_dim();
    const double h = u.spacing();
    if (tol_sub < 0) tol_sub = 10.0 * h * h;
    double rmax = 0.0;
    for (double r : radii) rmax = std::max(rmax, r);
    if (rmax > 0.99 * M->injectivity_radius())
        throw std::domain_error("mean_value_check: radius beyond injectivity bound");

    // precondition scan restricted to the working region
    for (int c = 0; c < u.chart_count(); ++c) {
        for (std::int64_t i = 0; i < u.grid(c).size(); ++i) {
            if (u.pou(c, i) <= 0.0) continue;
            const ChartPoint p = u.site_point(c, i);
            if (M->distance(x, p) > rmax + 2.5 * h) continue;
            detail::StencilReader st(u, c);
            if (!st.load(i)) continue;
            if (discrete_laplacian(u, c, i) < -tol_sub)
                throw std::domain_error("mean_value_check: field not subharmonic on the region (chart " +
                                        std::to_string(c) + ", site " + std::to_string(i) + ")");
        }
    }

    MeanValueReport rep;
    const double ux = u.eval(x);
    const double alpha = unit_ball_volume(2 * n);
    for (double r : radii) {
        const double avg =
            geodesic_ball_integral(*M, x, r, [&](const ChartPoint& p) { return u.eval(p); }) /
            (alpha * std::pow(r, 2 * n));
        rep.radii.push_back(r);
        rep.deficits.push_back((ux - avg) / r);
    }
    rep.fitted_C = -std::numeric_limits<double>::infinity();
    for (double d : rep.deficits) rep.fitted_C = std::max(rep.fitted_C, d);
    return rep;
}

struct SphereMeanReport {
    double lhs = 0.0;  // r^{1-2n} int_{S_r} u - s^{1-2n} int_{S_s} u
    bool preconditions_ok = true;
    std::string note;
};

/// Normalized sphere means are almost monotone for negative harmonic fields:
/// the report carries the left-hand side, asserted >= -C r by callers.
inline SphereMeanReport sphere_mean_monotonicity(const LatticeField& u, const ChartPoint& x,
                                                 double s, double r, double tol_harm = -1.0) {
    if (!(0 < s && s < r)) throw std::domain_error("sphere_mean_monotonicity: need 0 < s < r");
    const ManifoldPtr& M = u.manifold();
    const int n = M->complex_dim();
    const double h = u.spacing();
    if (tol_harm < 0) tol_harm = 10.0 * h * h;

    SphereMeanReport rep;
    for (int c = 0; c < u.chart_count(); ++c) {
        for (std::int64_t i = 0; i < u.grid(c).size(); ++i) {
            if (u.pou(c, i) <= 0.0) continue;
            const ChartPoint p = u.site_point(c, i);
            const double d = M->distance(x, p);
            if (d > r + 2.5 * h || d < std::max(0.0, s - 2.5 * h)) continue;
            if (u.value(c, i) >= 0.0) {
                rep.preconditions_ok = false;
                rep.note = "field not negative on the annulus";
            }
            detail::StencilReader st(u, c);
            if (st.load(i) && std::abs(discrete_laplacian(u, c, i)) > tol_harm) {
                rep.preconditions_ok = false;
                rep.note = "field not harmonic on the annulus";
            }
        }
    }
    auto mean = [&](double rad) {
        return std::pow(rad, 1.0 - 2 * n) *
               geodesic_sphere_integral(*M, x, rad, [&](const ChartPoint& p) { return u.eval(p); });
    };
    rep.lhs = mean(r) - mean(s);
    return rep;
}

}  // namespace hesslab

#endif
