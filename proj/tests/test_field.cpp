#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <hesslab/field.hpp>

using namespace hesslab;

namespace {

ManifoldPtr torus(int n, double L = 1.0) {
    return std::make_shared<FlatTorus>(n, std::vector<double>(n, L));
}

ManifoldPtr sphere() { return std::make_shared<FubiniStudyP1>(); }

// true at sites whose stencil stays clear of the periodic seam, where
// non-periodic test functions are smooth
bool away_from_seam(const ChartGrid& g, std::int64_t idx) {
    std::vector<int> mi;
    g.decode(idx, mi);
    for (int a = 0; a < g.raxes; ++a)
        if (mi[a] < 2 || mi[a] > g.dims[a] - 3) return false;
    return true;
}

/// First coordinate function of the sphere in chart-aware form.
double sphere_height(const ChartPoint& p) {
    const double r2 = std::norm(p.z(0));
    const double y = (1.0 - r2) / (1.0 + r2);
    return (p.chart == 0) ? y : -y;
}

}  // namespace

TEST_CASE("complex hessian exact on quadratic models") {
    auto M = torus(2);
    auto phi = LatticeField::from_function(M, 16, [](const ChartPoint& p) {
        return std::norm(p.z(0) - Complexd(0.5, 0.5));  // |z1 - c|^2
    });
    auto H = complex_hessian(phi);
    int tested = 0;
    for (std::int64_t i = 0; i < phi.grid(0).size(); ++i) {
        if (!away_from_seam(phi.grid(0), i)) continue;
        auto h = H.at(0, i);
        CHECK(std::abs(h(0, 0) - 1.0) < 1e-10);
        CHECK(std::abs(h(0, 1)) < 1e-10);
        CHECK(std::abs(h(1, 1)) < 1e-10);
        ++tested;
    }
    CHECK(tested > 100);

    // pluriharmonic: Re(z^2) has vanishing complex Hessian
    auto ph = LatticeField::from_function(M, 16, [](const ChartPoint& p) {
        const Complexd w = p.z(0) - Complexd(0.5, 0.5);
        return (w * w).real();
    });
    auto Hp = complex_hessian(ph);
    for (std::int64_t i = 0; i < ph.grid(0).size(); ++i) {
        if (!away_from_seam(ph.grid(0), i)) continue;
        CHECK(Hp.at(0, i).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("complex hessian of a trigonometric field") {
    auto M = torus(1);
    auto phi = LatticeField::from_function(
        M, 64, [](const ChartPoint& p) { return std::cos(2 * M_PI * p.z(0).real()); });
    auto H = complex_hessian(phi);
    const double h = phi.spacing();
    for (std::int64_t i = 0; i < phi.grid(0).size(); i += 13) {
        const double x = phi.site_point(0, i).z(0).real();
        const double want = -M_PI * M_PI * std::cos(2 * M_PI * x);  // (1/4)(-4 pi^2 cos)
        CHECK(std::abs(H.at(0, i)(0, 0).real() - want) < 40.0 * h * h);
        CHECK(std::abs(H.at(0, i)(0, 0).imag()) < 1e-12);
    }
}

TEST_CASE("mixed entries of a cross term") {
    auto M = torus(2);
    auto phi = LatticeField::from_function(M, 16, [](const ChartPoint& p) {
        const Complexd a = p.z(0) - Complexd(0.5, 0.5);
        const Complexd b = p.z(1) - Complexd(0.5, 0.5);
        return (a * std::conj(b)).real();  // d/dz1 dzbar2 -> 1/2
    });
    auto H = complex_hessian(phi);
    for (std::int64_t i = 0; i < phi.grid(0).size(); ++i) {
        if (!away_from_seam(phi.grid(0), i)) continue;
        CHECK(std::abs(H.at(0, i)(0, 1) - Complexd(0.5, 0.0)) < 1e-10);
        CHECK(std::abs(H.at(0, i)(1, 0) - Complexd(0.5, 0.0)) < 1e-10);
    }
}

TEST_CASE("eigen field basics") {
    auto M = torus(2);
    auto cphi = LatticeField::from_function(M, 16, [](const ChartPoint&) { return 0.7; });
    auto E = eigen_field(cphi);
    for (std::int64_t i = 0; i < cphi.grid(0).size(); ++i) {
        auto l = E.at(0, i);
        CHECK(l[0] == doctest::Approx(1.0));
        CHECK(l[1] == doctest::Approx(1.0));
    }

    const double a = 0.4;
    auto phi = LatticeField::from_function(M, 16, [a](const ChartPoint& p) {
        return a * std::norm(p.z(0) - Complexd(0.5, 0.5));
    });
    auto Ea = eigen_field(phi);
    for (std::int64_t i = 0; i < phi.grid(0).size(); ++i) {
        if (!away_from_seam(phi.grid(0), i)) continue;
        auto l = Ea.at(0, i);  // ascending: {1, 1+a}
        CHECK(l[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(l[1] == doctest::Approx(1.0 + a).epsilon(1e-9));
    }
}

TEST_CASE("eigen field matches the closed 2x2 formula on random quadratics") {
    Rng rng(5);
    auto M = torus(2);
    for (int rep = 0; rep < 5; ++rep) {
        const double arr = rng.uniform(-0.5, 0.5), aii = rng.uniform(-0.5, 0.5);
        const double bre = rng.uniform(-0.3, 0.3), bim = rng.uniform(-0.3, 0.3);
        auto phi = LatticeField::from_function(M, 16, [=](const ChartPoint& p) {
            const Complexd w1 = p.z(0) - Complexd(0.5, 0.5);
            const Complexd w2 = p.z(1) - Complexd(0.5, 0.5);
            return arr * std::norm(w1) + aii * std::norm(w2) +
                   2.0 * (Complexd(bre, bim) * w1 * std::conj(w2)).real();
        });
        // h_phi = I + H with H = [[arr, b],[conj(b), aii]]
        Eigen::Matrix2cd Hm;
        Hm << arr, Complexd(bre, bim), Complexd(bre, -bim), aii;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(Hm);
        auto E = eigen_field(phi);
        for (std::int64_t i = 0; i < phi.grid(0).size(); i += 37) {
            if (!away_from_seam(phi.grid(0), i)) continue;
            auto l = E.at(0, i);
            CHECK(l[0] == doctest::Approx(1.0 + es.eigenvalues()(0)).epsilon(1e-8));
            CHECK(l[1] == doctest::Approx(1.0 + es.eigenvalues()(1)).epsilon(1e-8));
        }
    }
}

TEST_CASE("adding a pluriharmonic field leaves h_phi fixed") {
    auto M = torus(1);
    auto phi = LatticeField::from_function(
        M, 32, [](const ChartPoint& p) { return 0.02 * std::cos(2 * M_PI * p.z(0).real()); });
    auto phi2 = LatticeField::from_function(M, 32, [](const ChartPoint& p) {
        const Complexd w = p.z(0) - Complexd(0.5, 0.5);
        return 0.02 * std::cos(2 * M_PI * p.z(0).real()) + 0.3 * (w * w).real();
    });
    auto E1 = eigen_field(phi);
    auto E2 = eigen_field(phi2);
    for (std::int64_t i = 0; i < phi.grid(0).size(); ++i) {
        if (!away_from_seam(phi.grid(0), i)) continue;
        CHECK(std::abs(E1.at(0, i)[0] - E2.at(0, i)[0]) < 1e-8);
    }
}

TEST_CASE("pointwise admissibility") {
    auto M = torus(1);
    // smooth with margin: lambda = 1 - pi^2 A cos(...)/1 stays positive
    auto good = LatticeField::from_function(
        M, 32, [](const ChartPoint& p) { return 0.02 * std::cos(2 * M_PI * p.z(0).real()); });
    auto rep = admissibility(good, ConeSpec::gamma_plus(1), 0.0);
    CHECK(rep.pass);
    CHECK(rep.fraction_admissible == doctest::Approx(1.0));

    // -A |z|^2 with A > 1 violates Gamma_n everywhere it is smooth
    auto M2 = torus(2);
    auto bad = LatticeField::from_function(M2, 16, [](const ChartPoint& p) {
        return -2.0 * std::norm(p.z(0) - Complexd(0.5, 0.5));
    });
    auto rep2 = admissibility(bad, ConeSpec::gamma_n(2), 0.0);
    CHECK_FALSE(rep2.pass);
    CHECK(rep2.fraction_admissible < 0.2);
    // a big enough additive slack restores membership away from the seam
    auto rep3 = admissibility(bad, ConeSpec::gamma_n(2), 3.5);
    CHECK(rep3.fraction_admissible > 0.9);
}

TEST_CASE("gamma_plus admissibility agrees with the discrete laplacian trace") {
    auto M = torus(1);
    auto phi = LatticeField::from_function(
        M, 32, [](const ChartPoint& p) { return 0.1 * std::sin(2 * M_PI * p.z(0).imag()); });
    auto E = eigen_field(phi);
    for (std::int64_t i = 0; i < phi.grid(0).size(); i += 7) {
        const double lam = E.at(0, i)[0];
        const double trace_form = 1.0 + 0.25 * discrete_laplacian(phi, 0, i);
        CHECK(lam == doctest::Approx(trace_form).epsilon(1e-10));
    }
}

TEST_CASE("viscosity probe mode agrees with pointwise on smooth fields") {
    Rng rng(99);
    auto M = torus(1);
    for (int rep = 0; rep < 10; ++rep) {
        const double a = rng.uniform(0.005, 0.02);
        const double b = rng.uniform(0.005, 0.02);
        const double px = rng.uniform(0.0, 1.0), py = rng.uniform(0.0, 1.0);
        auto phi = LatticeField::from_function(M, 24, [=](const ChartPoint& p) {
            return a * std::cos(2 * M_PI * (p.z(0).real() - px)) +
                   b * std::sin(2 * M_PI * (p.z(0).imag() - py));
        });
        auto pw = admissibility(phi, ConeSpec::gamma_plus(1), 0.0, "pointwise");
        auto pr = admissibility(phi, ConeSpec::gamma_plus(1), 0.0, "viscosity-probe");
        CHECK(std::abs(pw.fraction_admissible - pr.fraction_admissible) < 0.01);
        CHECK(pw.pass == pr.pass);
    }
}

TEST_CASE("max of two smooth admissible fields passes the probe at zero slack") {
    auto M = torus(1);
    auto phi = LatticeField::from_function(M, 32, [](const ChartPoint& p) {
        const double f1 = 0.02 * std::cos(2 * M_PI * p.z(0).real());
        const double f2 = 0.02 * std::sin(2 * M_PI * p.z(0).imag());
        return std::max(f1, f2);
    });
    auto rep = admissibility(phi, ConeSpec::gamma_plus(1), 0.0, "viscosity-probe");
    CHECK(rep.pass);
    CHECK_FALSE(rep.probe_family_exhaustive);
}

TEST_CASE("mean value inequality") {
    auto M = torus(1);
    const ChartPoint x = [&] {
        ChartPoint p{0, Eigen::VectorXcd(1)};
        p.z(0) = Complexd(0.5, 0.5);
        return p;
    }();
    std::vector<double> radii{0.06, 0.1, 0.15, 0.2};

    // harmonic patch: mean value equality up to grid noise
    auto harm = LatticeField::from_function(M, 64, [](const ChartPoint& p) {
        const double u = p.z(0).real() - 0.5, v = p.z(0).imag() - 0.5;
        return u * u - v * v;
    });
    auto rep = mean_value_check(harm, x, radii);
    const double floor = harm.spacing() * harm.spacing() / radii.front();
    CHECK(std::abs(rep.fitted_C) <= 10.0 * floor);

    // |z|^2: the ball mean exceeds the center value by r^2 n/(n+1)
    auto sub = LatticeField::from_function(M, 64, [](const ChartPoint& p) {
        return std::norm(p.z(0) - Complexd(0.5, 0.5));
    });
    auto rep2 = mean_value_check(sub, x, radii);
    CHECK(rep2.fitted_C <= 1e-12);
    for (std::size_t k = 0; k < radii.size(); ++k) {
        const double want = -radii[k] * radii[k] * 0.5 / radii[k];  // -(r^2 n/(n+1))/r, n = 1
        CHECK(rep2.deficits[k] == doctest::Approx(want).epsilon(0.02));
    }

    // non-subharmonic input trips the precondition
    auto bad = LatticeField::from_function(M, 64, [](const ChartPoint& p) {
        return -std::norm(p.z(0) - Complexd(0.5, 0.5));
    });
    CHECK_THROWS_AS(mean_value_check(bad, x, radii), std::domain_error);
}

TEST_CASE("sphere mean monotonicity") {
    auto M = torus(1);
    ChartPoint x{0, Eigen::VectorXcd(1)};
    x.z(0) = Complexd(0.5, 0.5);
    auto neg = LatticeField::from_function(M, 32, [](const ChartPoint&) { return -1.0; });
    auto rep = sphere_mean_monotonicity(neg, x, 0.05, 0.2);
    CHECK(rep.preconditions_ok);
    CHECK(std::abs(rep.lhs) < 1e-10);  // flat areas scale exactly

    auto S = sphere();
    ChartPoint origin{0, Eigen::VectorXcd(1)};
    origin.z(0) = Complexd(0.0, 0.0);
    auto negS = LatticeField::from_function(S, 48, [](const ChartPoint&) { return -1.0; });
    const double s = 0.1, r = 0.3;
    auto repS = sphere_mean_monotonicity(negS, origin, s, r);
    CHECK(repS.preconditions_ok);
    const double want = -M_PI * (std::sin(2 * r) / r - std::sin(2 * s) / s);
    CHECK(repS.lhs == doctest::Approx(want).epsilon(1e-4));
    CHECK(repS.lhs >= 0.0);        // positive curvature helps here
    CHECK(repS.lhs <= 4.0 * r * r);  // O(r^2), comfortably >= -C r

    // s -> r limit vanishes linearly in (r - s)
    auto rep0 = sphere_mean_monotonicity(negS, origin, 0.2, 0.200001);
    CHECK(std::abs(rep0.lhs) < 1e-5);
}

TEST_CASE("sphere fields: two charts, partition of unity, volume") {
    auto S = sphere();
    auto f = LatticeField::from_function(S, 48, sphere_height);
    CHECK(f.chart_count() == 2);
    // total volume of the Fubini-Study sphere is pi
    CHECK(f.volume() == doctest::Approx(M_PI).epsilon(1e-3));
    // integral of the odd height function vanishes
    CHECK(std::abs(f.integral()) < 1e-6);
    // evaluation agrees across chart representations
    ChartPoint p{0, Eigen::VectorXcd(1)};
    p.z(0) = Complexd(0.95, 0.1);
    ChartPoint q{1, Eigen::VectorXcd(1)};
    q.z(0) = 1.0 / p.z(0);
    CHECK(f.eval(p) == doctest::Approx(f.eval(q)).epsilon(1e-9));
    CHECK(f.sup_norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("inconsistent chart recipes are rejected at construction") {
    auto S = sphere();
    CHECK_THROWS_AS(LatticeField::from_function(
                        S, 24, [](const ChartPoint& p) { return (p.chart == 0) ? 1.0 : 2.0; }),
                    std::domain_error);
}

TEST_CASE("field save/load round trip") {
    auto M = torus(1);
    auto phi = LatticeField::from_function(
        M, 16, [](const ChartPoint& p) { return std::sin(2 * M_PI * p.z(0).real()); });
    const nlohmann::json cfg{{"kind", "flat_torus"}, {"n", 1}, {"periods", {1.0}}};
    phi.save("/tmp/hesslab_field_test", cfg);
    auto back = LatticeField::load("/tmp/hesslab_field_test");
    CHECK(back.grid(0).dims == phi.grid(0).dims);
    for (std::int64_t i = 0; i < phi.grid(0).size(); ++i)
        CHECK(back.value(0, i) == phi.value(0, i));
}
