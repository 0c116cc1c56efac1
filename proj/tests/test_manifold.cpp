#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hesslab/manifold.hpp>

using namespace hesslab;

namespace {

ChartPoint pt1(Complexd z, int chart = 0) {
    ChartPoint p{chart, Eigen::VectorXcd(1)};
    p.z(0) = z;
    return p;
}

Eigen::VectorXcd vec1(Complexd v) {
    Eigen::VectorXcd x(1);
    x(0) = v;
    return x;
}

// Test oracle: integrate the geodesic ODE of the conformal metric
// (1+|z|^2)^{-2} |dz|^2 in the affine chart with RK4.
//   z'' = 2 conj(z) (z')^2 / (1 + |z|^2)
Complexd geodesic_ode_endpoint(Complexd z0, Complexd xi, int steps = 4000) {
    Complexd z = z0;
    Complexd v = xi;  // chart velocity; metric speed is constant along geodesics
    const double h = 1.0 / steps;
    auto acc = [](Complexd z, Complexd v) { return 2.0 * std::conj(z) * v * v / (1.0 + std::norm(z)); };
    for (int i = 0; i < steps; ++i) {
        const Complexd k1z = v, k1v = acc(z, v);
        const Complexd k2z = v + 0.5 * h * k1v, k2v = acc(z + 0.5 * h * k1z, v + 0.5 * h * k1v);
        const Complexd k3z = v + 0.5 * h * k2v, k3v = acc(z + 0.5 * h * k2z, v + 0.5 * h * k2v);
        const Complexd k4z = v + h * k3v, k4v = acc(z + h * k3z, v + h * k3v);
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return z;
}

}  // namespace

TEST_CASE("flat torus basics") {
    FlatTorus T(2, {1.0, 1.0});
    ChartPoint p{0, Eigen::VectorXcd(2)};
    p.z << Complexd(0.2, 0.3), Complexd(0.9, 0.1);
    CHECK(T.metric_diag(p).isApprox(Eigen::VectorXd::Ones(2)));
    CHECK(T.curvature_at(p).bisectional(p.z, p.z) == 0.0);

    Eigen::VectorXcd xi(2);
    xi << Complexd(0.3, 0.0), Complexd(0.2, -0.3);
    const ChartPoint q = T.exp_map(p, xi);
    CHECK(std::abs(q.z(0) - Complexd(0.5, 0.3)) < 1e-15);
    // wrap across the seam
    CHECK(std::abs(q.z(1) - Complexd(0.1, 0.8)) < 1e-15);
    // log recovers the shortest representative
    const Eigen::VectorXcd back = T.log_map(p, q);
    CHECK((back - xi).norm() < 1e-14);
    CHECK(T.distance(p, q) == doctest::Approx(xi.norm()));
    CHECK(T.injectivity_radius() == doctest::Approx(0.5));
}

TEST_CASE("fubini-study metric normalization") {
    FubiniStudyP1 S;
    CHECK(S.metric_diag(pt1(0.0))(0) == doctest::Approx(1.0));
    CHECK(S.metric_diag(pt1(Complexd(1.0, 0.0)))(0) == doctest::Approx(0.25));
    CHECK(S.metric_diag(pt1(Complexd(0.0, 1.0)))(0) == doctest::Approx(0.25));
    CHECK(S.curvature_at(pt1(0.3)).at(0, 0, 0, 0) == doctest::Approx(2.0));
}

TEST_CASE("fubini-study exponential map closed form") {
    FubiniStudyP1 S;
    // distance from 0 to w along a radial geodesic is arctan |w|
    const ChartPoint q = S.exp_map(pt1(0.0), vec1(M_PI / 4.0));
    CHECK(q.z(0).real() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(q.z(0).imag()) < 1e-12);

    CHECK(std::abs(S.exp_map(pt1(Complexd(0.2, 0.1)), vec1(0.0)).z(0) - Complexd(0.2, 0.1)) < 1e-15);

    // against the geodesic ODE oracle
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const Complexd z0(rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8));
        const Complexd xi(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
        const Complexd ode = geodesic_ode_endpoint(z0, xi);
        const Eigen::VectorXcd raw = S.exp_raw(pt1(z0), vec1(xi));
        CHECK(std::abs(raw(0) - ode) < 1e-8);
    }
}

TEST_CASE("exp/log round trip within the conditioning bound") {
    Rng rng(77);
    FubiniStudyP1 S;
    FlatTorus T(1, {1.0});
    for (int rep = 0; rep < 200; ++rep) {
        const Complexd z0(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
        Complexd xi(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        const ChartPoint p = pt1(z0);
        // scale to metric length <= 0.3
        const double len = S.tangent_norm(p, vec1(xi));
        if (len > 1e-12) xi *= rng.uniform(0.01, 0.3) / len;
        const ChartPoint q = S.exp_map(p, vec1(xi));
        const Eigen::VectorXcd back = S.log_map(p, q);
        CHECK(std::abs(back(0) - xi) < 1e-9);
        // |log| is the distance, symmetric in its arguments
        const double dpq = S.tangent_norm(p, back);
        const double dqp = S.tangent_norm(q, S.log_map(q, p));
        CHECK(std::abs(dpq - dqp) < 1e-9);
        CHECK(std::abs(dpq - S.distance(p, q)) < 1e-12);

        // torus round trip, wrap included
        ChartPoint tp = pt1(Complexd(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)));
        Eigen::VectorXcd txi = vec1(Complexd(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)));
        CHECK((T.log_map(tp, T.exp_map(tp, txi)) - txi).norm() < 1e-12);
    }
    CHECK((S.log_map(pt1(0.3), pt1(0.3))).norm() == doctest::Approx(0.0));
}

TEST_CASE("exp crossing the chart boundary canonicalizes") {
    FubiniStudyP1 S;
    const ChartPoint p = pt1(Complexd(0.9, 0.0));
    const ChartPoint q = S.exp_map(p, vec1(0.12));  // image has |z| > 1 in chart 0
    CHECK(q.chart == 1);
    CHECK(std::abs(q.z(0)) <= 1.0);
    // distance still consistent
    CHECK(S.distance(p, q) == doctest::Approx(S.tangent_norm(p, vec1(0.12))).epsilon(1e-10));
}

TEST_CASE("product of P1 acts factorwise") {
    ProductOfP1 P(2);
    ChartPoint p{0, Eigen::VectorXcd(2)};
    p.z << Complexd(0.1, 0.2), Complexd(-0.3, 0.05);
    Eigen::VectorXcd xi(2);
    xi << Complexd(0.07, -0.02), Complexd(0.0, 0.1);
    const ChartPoint q = P.exp_map(p, xi);

    FubiniStudyP1 S;
    const ChartPoint q0 = S.exp_map(pt1(p.z(0)), vec1(xi(0)));
    const ChartPoint q1 = S.exp_map(pt1(p.z(1)), vec1(xi(1)));
    CHECK(std::abs(q.z(0) - q0.z(0)) < 1e-14);
    CHECK(std::abs(q.z(1) - q1.z(0)) < 1e-14);

    const auto c = P.curvature_at(p);
    CHECK(c.at(0, 0, 0, 0) == doctest::Approx(2.0));
    CHECK(c.at(1, 1, 1, 1) == doctest::Approx(2.0));
    CHECK(c.at(0, 0, 1, 1) == 0.0);
    CHECK(c.at(0, 1, 0, 1) == 0.0);

    CHECK((P.log_map(p, q) - xi).norm() < 1e-12);
}

TEST_CASE("bisectional curvature nonnegative on the catalog") {
    Rng rng(123);
    auto mT = std::make_shared<FlatTorus>(2, std::vector<double>{1.0, 1.0});
    auto mS = std::make_shared<FubiniStudyP1>();
    auto mP = std::make_shared<ProductOfP1>(2);
    std::vector<ManifoldPtr> models{mT, mS, mP};
    for (const auto& M : models) {
        const int n = M->complex_dim();
        ChartPoint p{0, Eigen::VectorXcd::Zero(n)};
        for (int j = 0; j < n; ++j) p.z(j) = Complexd(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        const auto c = M->curvature_at(p);
        for (int rep = 0; rep < 10000; ++rep) {
            Eigen::VectorXcd eta(n), xi(n);
            for (int j = 0; j < n; ++j) {
                eta(j) = Complexd(rng.normal(), rng.normal());
                xi(j) = Complexd(rng.normal(), rng.normal());
            }
            CHECK(c.bisectional(eta, xi) >= -1e-12);
        }
    }
}

TEST_CASE("normalized chart: metric expansion at the base point") {
    FubiniStudyP1 S;
    for (Complexd z0 : {Complexd(0.0, 0.0), Complexd(0.4, -0.2), Complexd(-0.7, 0.6)}) {
        const auto nc = S.normalized_chart(pt1(z0));
        Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(1);
        CHECK(nc.metric_diag(zero)(0) == doctest::Approx(1.0).epsilon(1e-12));
        // linear term vanishes
        const double d = 1e-3;
        const double gp = nc.metric_diag(vec1(Complexd(d, 0)))(0);
        const double gm = nc.metric_diag(vec1(Complexd(-d, 0)))(0);
        CHECK(std::abs(gp - gm) / (2 * d) < 1e-9);
        // quadratic coefficient matches the curvature tensor (Richardson fit)
        auto cfit = [&](double dd) {
            const double gpp = nc.metric_diag(vec1(Complexd(dd, 0)))(0);
            return (1.0 - gpp) / (dd * dd);
        };
        const double c_rich = (4.0 * cfit(d / 2) - cfit(d)) / 3.0;
        CHECK(std::abs(c_rich - S.curvature_at(pt1(z0)).at(0, 0, 0, 0)) < 1e-6);
    }
    // flat torus: exact translation, identity metric
    FlatTorus T(1, {1.0});
    const auto nc = T.normalized_chart(pt1(Complexd(0.3, 0.3)));
    CHECK(nc.metric_diag(vec1(Complexd(0.1, 0.1)))(0) == 1.0);
    CHECK(std::abs(nc.from_point(nc.to_point(vec1(Complexd(0.05, -0.08))))(0) - Complexd(0.05, -0.08)) < 1e-14);
}

TEST_CASE("exponential map Taylor model") {
    FlatTorus T(1, {1.0});
    // flat: the expansion is exact (curvature zero)
    CHECK(exp_taylor_residual(T, pt1(Complexd(0.5, 0.5)), vec1(Complexd(0.01, 0.02)),
                              vec1(Complexd(0.03, -0.01))) < 1e-14);

    FubiniStudyP1 S;
    const ChartPoint x0 = pt1(Complexd(0.2, -0.1));
    CHECK(exp_taylor_residual(S, x0, vec1(0.0), vec1(0.0)) == doctest::Approx(0.0));

    // with z = t xi the remainder is O(|xi|^4): halving xi shrinks it ~16x
    const Complexd dir(0.6, 0.8);
    std::vector<double> sizes, residuals;
    for (int j = 0; j < 6; ++j) {
        const double s = 0.2 * std::pow(0.5, j);
        const Complexd xi = s * dir;
        const Complexd z = 0.5 * xi;
        sizes.push_back(s);
        residuals.push_back(exp_taylor_residual(S, x0, vec1(z), vec1(xi)));
    }
    const auto fit = fit_loglog(sizes, residuals);
    CHECK(fit.slope >= 4.0 - 0.3);
    CHECK(residuals[1] * 8.0 <= residuals[0]);
}

TEST_CASE("sphere area and ball volume on the flat torus") {
    FlatTorus T(1, {1.0});
    const ChartPoint x = pt1(Complexd(0.5, 0.5));
    for (double r : {0.05, 0.1, 0.2}) {
        CHECK(geodesic_sphere_area(T, x, r) == doctest::Approx(2 * M_PI * r).epsilon(1e-9));
        CHECK(geodesic_ball_volume(T, x, r) == doctest::Approx(M_PI * r * r).epsilon(1e-4));
    }
}

TEST_CASE("sphere area on P1 matches the round-sphere circumference") {
    FubiniStudyP1 S;
    const ChartPoint x = pt1(Complexd(0.1, 0.3));
    for (double r : {0.05, 0.1, 0.3, 0.6}) {
        const double want = M_PI * std::sin(2.0 * r);
        CHECK(geodesic_sphere_area(S, x, r) == doctest::Approx(want).epsilon(1e-6));
    }
    // leading-order normalization of the ball volume
    const double r = 0.02;
    CHECK(geodesic_ball_volume(S, x, r) / (M_PI * r * r) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("sphere area deviation is O(r^{2n}) with a stable constant") {
    FubiniStudyP1 S;
    const ChartPoint x = pt1(Complexd(0.0, 0.0));
    std::vector<double> rs{0.02, 0.04, 0.08, 0.12, 0.16, 0.2};
    std::vector<double> devs;
    double cfit_max = 0.0;
    for (double r : rs) {
        const double dev = std::abs(geodesic_sphere_area(S, x, r) - 2 * M_PI * r);
        devs.push_back(dev);
        cfit_max = std::max(cfit_max, dev / (r * r));
    }
    const auto fit = fit_loglog(rs, devs);
    CHECK(fit.slope >= 2.0 - 0.3);  // bound requires at least order r^{2n}
    // the fitted constant is quadrature-stable
    double cfit_max_refined = 0.0;
    for (double r : rs) {
        const double dev = std::abs(geodesic_sphere_area(S, x, r, 512) - 2 * M_PI * r);
        cfit_max_refined = std::max(cfit_max_refined, dev / (r * r));
    }
    CHECK(std::abs(cfit_max - cfit_max_refined) <= 0.25 * cfit_max);
}

TEST_CASE("S^3 sphere area on the product model") {
    ProductOfP1 P(2);
    ChartPoint x{0, Eigen::VectorXcd::Zero(2)};
    const double r = 0.1;
    const double flat = 2.0 * M_PI * M_PI * r * r * r;  // 2n alpha(2n) r^{2n-1}, n = 2
    CHECK(geodesic_sphere_area(P, x, r, 64) == doctest::Approx(flat).epsilon(2e-3));
}

TEST_CASE("manifold json factory") {
    auto T = manifold_from_json(nlohmann::json{{"kind", "flat_torus"}, {"n", 2}, {"periods", {1.0, 2.0}}});
    CHECK(T->kind() == "flat_torus");
    CHECK(T->complex_dim() == 2);
    auto S = manifold_from_json(nlohmann::json{{"kind", "fubini_study_p1"}});
    CHECK(S->complex_dim() == 1);
    auto P = manifold_from_json(nlohmann::json{{"kind", "product_p1"}, {"factors", 3}});
    CHECK(P->chart_count() == 8);
    CHECK_THROWS(manifold_from_json(nlohmann::json{{"kind", "nope"}}));
}

TEST_CASE("exp_map domain errors") {
    FubiniStudyP1 S;
    CHECK_THROWS_AS(S.exp_map(pt1(0.0), vec1(2.0)), std::domain_error);
    CHECK_THROWS_AS(S.log_map(pt1(0.0), pt1(Complexd(30.0, 0.0))), std::domain_error);
}
