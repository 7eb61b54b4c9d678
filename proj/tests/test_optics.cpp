#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "filmgen/optics.hpp"

using namespace filmgen::optics;

namespace {

Stack make_stack(ComplexIndex ambient, std::vector<Layer> layers, ComplexIndex substrate) {
    Stack s;
    s.ambient = ambient;
    s.layers = std::move(layers);
    s.substrate = substrate;
    return s;
}

PowerResponse single(const Stack& stack, double wl, double angle, Polarization pol) {
    SpectrumQuery q{{wl}, {angle}, pol};
    const auto r = evaluate_stack(stack, q);
    return {r.R[0], r.T[0]};
}

}  // namespace

TEST_CASE("air to glass at normal incidence reflects 4 percent") {
    const auto r = single(make_stack({1.0, 0.0}, {}, {1.5, 0.0}), 550.0, 0.0, Polarization::unpolarized);
    CHECK(r.R == doctest::Approx(0.04).epsilon(1e-14));
    CHECK(r.T == doctest::Approx(0.96).epsilon(1e-14));
}

TEST_CASE("single interface follows the Fresnel equations") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> n(1.0, 4.0);
    std::uniform_real_distribution<double> angle(0.0, 1.5);
    for (int i = 0; i < 50; ++i) {
        const double n1 = n(rng);
        const double n2 = n(rng);
        const double a = angle(rng);
        const double sin_t = n1 * std::sin(a) / n2;
        if (sin_t >= 1.0) continue;
        const double ci = std::cos(a);
        const double ct = std::sqrt(1.0 - sin_t * sin_t);
        const double rs = (n1 * ci - n2 * ct) / (n1 * ci + n2 * ct);
        const double rp = (n2 * ci - n1 * ct) / (n2 * ci + n1 * ct);
        const auto stack = make_stack({n1, 0.0}, {}, {n2, 0.0});
        CHECK(single(stack, 700.0, a, Polarization::s).R == doctest::Approx(rs * rs).epsilon(1e-12));
        CHECK(single(stack, 700.0, a, Polarization::p).R == doctest::Approx(rp * rp).epsilon(1e-12));
    }
}

TEST_CASE("total internal reflection beyond the critical angle") {
    const auto stack = make_stack({1.5, 0.0}, {}, {1.0, 0.0});
    const auto r = single(stack, 600.0, 1.0, Polarization::unpolarized);
    CHECK(r.R == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.T == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("quarter-wave stack matches the closed form") {
    const double nh = 2.3;
    const double nl = 1.38;
    const double ns = 1.52;
    const double wl = 600.0;
    for (int pairs = 1; pairs <= 6; ++pairs) {
        std::vector<Layer> layers;
        for (int p = 0; p < pairs; ++p) {
            layers.push_back({{nh, 0.0}, wl / (4.0 * nh)});
            layers.push_back({{nl, 0.0}, wl / (4.0 * nl)});
        }
        layers.push_back({{nh, 0.0}, wl / (4.0 * nh)});
        const double y = std::pow(nh / nl, 2 * pairs) * nh * nh / ns;
        const double expected = std::pow((1.0 - y) / (1.0 + y), 2);
        const auto r = single(make_stack({1.0, 0.0}, layers, {ns, 0.0}), wl, 0.0, Polarization::unpolarized);
        CHECK(r.R == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("absorbing and oblique stacks agree with an independent TMM implementation") {
    // Reference values from the Python `tmm` package (coh_tmm).
    struct Case {
        Polarization pol;
        std::vector<ComplexIndex> n;  // ambient, layers..., substrate
        std::vector<double> d;
        double angle;
        double wl;
        double R;
        double T;
    };
    const std::vector<Case> cases = {
        {Polarization::s, {{1.0, 0}, {2.0, 0.1}, {1.45, 0}, {3.5, 0.8}, {1.5, 0}}, {80, 130, 25}, 0.3, 633.0,
         0.5717917687262357, 0.17630893487892235},
        {Polarization::p, {{1.0, 0}, {2.0, 0.1}, {1.45, 0}, {3.5, 0.8}, {1.5, 0}}, {80, 130, 25}, 0.9, 633.0,
         0.3022061677662234, 0.2985329353963144},
        {Polarization::p, {{1.33, 0}, {1.38, 0}, {2.3, 0}, {1.38, 0}, {2.3, 0}, {1.0, 5.0}}, {100, 60, 100, 60}, 1.2,
         900.0, 0.6473439453721774, 0.3526560546278239},
        {Polarization::s, {{1.0, 0}, {0.2, 3.0}, {1.6, 0}, {4.0, 0.02}}, {30, 210}, 0.7, 1500.0, 0.5445949199864532,
         0.35428296494980305},
        {Polarization::s, {{1.0, 0}, {1.5, 0}}, {}, 1.4, 500.0, 0.5456515534950301, 0.4543484465049706},
    };
    for (const auto& c : cases) {
        std::vector<Layer> layers;
        for (std::size_t i = 0; i < c.d.size(); ++i) layers.push_back({c.n[i + 1], c.d[i]});
        const auto r = single(make_stack(c.n.front(), layers, c.n.back()), c.wl, c.angle, c.pol);
        CHECK(r.R == doctest::Approx(c.R).epsilon(1e-10));
        CHECK(r.T == doctest::Approx(c.T).epsilon(1e-10));
    }
}

TEST_CASE("energy is conserved and lossless stacks do not absorb") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> n(1.0, 4.5);
    std::uniform_real_distribution<double> k(0.0, 5.0);
    std::uniform_real_distribution<double> d(1.0, 400.0);
    std::uniform_real_distribution<double> angle(0.0, 1.5);
    std::uniform_int_distribution<int> count(0, 8);
    for (int trial = 0; trial < 500; ++trial) {
        const bool lossless = trial % 2 == 0;
        Stack s;
        s.ambient = {n(rng), 0.0};
        s.substrate = {n(rng), lossless ? 0.0 : k(rng)};
        const int layers = count(rng);
        for (int l = 0; l < layers; ++l) s.layers.push_back({{n(rng), lossless ? 0.0 : k(rng)}, d(rng)});
        SpectrumQuery q{{400.0, 800.0, 1600.0}, {0.0, angle(rng)}, Polarization::unpolarized};
        const auto r = evaluate_stack(s, q);
        for (std::size_t i = 0; i < r.R.size(); ++i) {
            CHECK(r.R[i] >= 0.0);
            CHECK(r.T[i] >= 0.0);
            CHECK(std::abs(1.0 - (r.R[i] + r.T[i] + r.A[i])) < 1e-9);
            if (lossless) CHECK(std::abs(r.A[i]) < 1e-9);
        }
    }
}

TEST_CASE("s and p coincide at normal incidence") {
    const auto stack = make_stack({1.0, 0.0}, {{{2.1, 0.3}, 55.0}, {{1.4, 0.0}, 90.0}}, {3.0, 1.0});
    const auto s = single(stack, 750.0, 0.0, Polarization::s);
    const auto p = single(stack, 750.0, 0.0, Polarization::p);
    CHECK(std::abs(s.R - p.R) < 1e-12);
    CHECK(std::abs(s.T - p.T) < 1e-12);
}

TEST_CASE("normal-incidence reflectance is reciprocal for lossless stacks") {
    const auto forward = make_stack({1.0, 0.0}, {{{2.3, 0.0}, 70.0}, {{1.38, 0.0}, 120.0}, {{1.9, 0.0}, 33.0}},
                                    {1.52, 0.0});
    const auto reverse = make_stack({1.52, 0.0}, {{{1.9, 0.0}, 33.0}, {{1.38, 0.0}, 120.0}, {{2.3, 0.0}, 70.0}},
                                    {1.0, 0.0});
    for (double wl : {400.0, 550.0, 1310.0}) {
        CHECK(single(forward, wl, 0.0, Polarization::s).R ==
              doctest::Approx(single(reverse, wl, 0.0, Polarization::s).R).epsilon(1e-12));
    }
}

TEST_CASE("splitting a layer in two leaves the response unchanged") {
    const ComplexIndex ti{2.6, 3.4};
    const auto whole = make_stack({1.0, 0.0}, {{{1.38, 0.0}, 100.0}, {ti, 60.0}}, {1.5, 0.0});
    const auto split = make_stack({1.0, 0.0}, {{{1.38, 0.0}, 100.0}, {ti, 21.5}, {ti, 38.5}}, {1.5, 0.0});
    for (double a : {0.0, 0.6, 1.2}) {
        const auto x = single(whole, 900.0, a, Polarization::unpolarized);
        const auto y = single(split, 900.0, a, Polarization::unpolarized);
        CHECK(std::abs(x.R - y.R) < 1e-10);
        CHECK(std::abs(x.T - y.T) < 1e-10);
    }
}

TEST_CASE("refining the wavelength grid barely moves a smooth average") {
    const auto stack = make_stack({1.0, 0.0}, {{{1.45, 0.0}, 90.0}, {{3.0, 2.0}, 20.0}, {{1.45, 0.0}, 90.0}},
                                  {3.0, 2.0});
    auto grid = [](double step) {
        SpectrumQuery q;
        for (double wl = 400.0; wl <= 2000.0 + 1e-9; wl += step) q.wavelengths_nm.push_back(wl);
        return q;
    };
    const double coarse = average_quantity(evaluate_stack(stack, grid(10.0)), Quantity::A);
    const double fine = average_quantity(evaluate_stack(stack, grid(5.0)), Quantity::A);
    CHECK(std::abs(coarse - fine) < 1e-3);
}

TEST_CASE("average_quantity is the plain mean") {
    SpectrumResult r;
    r.n_wavelengths = 2;
    r.n_angles = 1;
    r.R = {0.5, 0.0};
    r.T = {0.0, 0.0};
    r.A = {0.5, 1.0};
    CHECK(average_quantity(r, Quantity::A) == doctest::Approx(0.75));
    r.A = {1.0, 1.0};
    CHECK(average_quantity(r, Quantity::A) == 1.0);
    CHECK_THROWS_AS(average_quantity(SpectrumResult{}, Quantity::A), OpticsError);
}

TEST_CASE("invalid inputs are rejected") {
    Stack s;
    SpectrumQuery q{{500.0}, {0.0}, Polarization::s};
    s.layers = {{{1.5, 0.0}, 0.0}};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    s.layers = {{{1.5, 0.0}, -5.0}};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    s.layers = {{{std::nan(""), 0.0}, 10.0}};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    s.layers = {};
    s.ambient = {1.0, 0.1};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    s.ambient = {1.0, 0.0};
    q.wavelengths_nm = {0.0};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    q.wavelengths_nm = {600.0, 500.0};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
    q.wavelengths_nm = {500.0};
    q.angles_rad = {std::numbers::pi / 2};
    CHECK_THROWS_AS(evaluate_stack(s, q), OpticsError);
}
