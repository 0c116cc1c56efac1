#ifndef HESSLAB_COMMON_HPP
#define HESSLAB_COMMON_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hesslab {

/// Volume of the unit ball in R^k.
inline double unit_ball_volume(int k) {
    return std::pow(M_PI, 0.5 * k) / std::tgamma(0.5 * k + 1.0);
}

// ---------------------------------------------------------------------------
// Log-log least squares.  Every empirical O(eps^a) claim in this project is
// reduced to one of these fits, so the r^2 is always kept, even when poor.
// ---------------------------------------------------------------------------

struct RateFit {
    std::vector<double> xs;      // abscissae actually used (positive values only)
    std::vector<double> ys;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int used = 0;
    bool degenerate = false;     // set when fewer than 2 usable points survive
};

/// Least-squares fit of log(y) against log(x).  Points with y <= 0 or x <= 0
/// are dropped (they carry no rate information); the fit is flagged
/// degenerate when fewer than two points survive.
inline RateFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("fit_loglog: size mismatch");
    if (x.size() < 4)
        throw std::invalid_argument("fit_loglog: need at least 4 samples");
    RateFit fit;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && y[i] > 0.0) {
            fit.xs.push_back(x[i]);
            fit.ys.push_back(y[i]);
        }
    }
    fit.used = static_cast<int>(fit.xs.size());
    if (fit.used < 2) {
        fit.degenerate = true;
        return fit;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < fit.used; ++i) {
        const double lx = std::log(fit.xs[i]);
        const double ly = std::log(fit.ys[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly; syy += ly * ly;
    }
    const double n = fit.used;
    const double den = n * sxx - sx * sx;
    if (std::abs(den) < 1e-300) {
        fit.degenerate = true;
        return fit;
    }
    fit.slope = (n * sxy - sx * sy) / den;
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0, ss_tot = 0;
    const double ymean = sy / n;
    for (int i = 0; i < fit.used; ++i) {
        const double lx = std::log(fit.xs[i]);
        const double ly = std::log(fit.ys[i]);
        const double pred = fit.slope * lx + fit.intercept;
        ss_res += (ly - pred) * (ly - pred);
        ss_tot += (ly - ymean) * (ly - ymean);
    }
    fit.r_squared = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Deterministic random numbers.  std::uniform_real_distribution is
// implementation-defined, so reports regenerated on another standard library
// would not be byte-identical; we map the raw 64-bit stream ourselves.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // xorshift* variant; period 2^64-1, plenty for sampling duty.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    /// Uniform in [0,1).
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [a,b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

  private:
    std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Parallel site loops.  Output slots are indexed by the loop variable, so the
// result is independent of the thread count; HESSLAB_THREADS caps parallelism.
// ---------------------------------------------------------------------------

inline int max_threads() {
    const char* env = std::getenv("HESSLAB_THREADS");
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (env) {
        const int cap = std::atoi(env);
        if (cap >= 1 && cap < hw) return cap;
        if (cap >= 1) return cap;
    }
    return hw;
}

template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
    if (n <= 0) return;
    const int nt = std::min<std::int64_t>(max_threads(), n);
    if (nt <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    const std::int64_t chunk = (n + nt - 1) / nt;
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn]() {
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

/// Fixed-format numeric printing shared by every CSV/JSON writer, so reports
/// are byte-stable across runs and thread counts.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

}  // namespace hesslab

#endif
