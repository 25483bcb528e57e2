#include <doctest.h>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "wgmcav/harminv.hpp"
#include "wgmcav/units.hpp"

using namespace wgmcav;

namespace
{
struct Tone
{
    double nu_thz;
    double q;
    std::complex<double> amplitude = 1.0;
};

std::vector<std::complex<double>> synthesize(const std::vector<Tone> &tones, double dt_ps, std::size_t n)
{
    std::vector<std::complex<double>> s(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) * dt_ps;
        for (const Tone &tone : tones) {
            const double gamma = units::kPi * tone.nu_thz / tone.q;
            s[j] += tone.amplitude * std::exp(std::complex<double>(-gamma * t, 2.0 * units::kPi * tone.nu_thz * t));
        }
    }
    return s;
}

const HarmonicComponent *closest(const std::vector<HarmonicComponent> &found, double nu)
{
    const HarmonicComponent *best = nullptr;
    for (const auto &c : found)
        if (!best || std::abs(c.frequency_thz - nu) < std::abs(best->frequency_thz - nu))
            best = &c;
    return best;
}

} // namespace

TEST_CASE("single damped tone")
{
    const double dt = 1e-4;
    const auto s = synthesize({{470.0, 9000.0, {0.3, 0.4}}}, dt, 60000);
    const auto found = harmonic_inversion(s, dt, {440.0, 500.0});
    REQUIRE(!found.empty());
    const HarmonicComponent &c = found.front();
    CHECK(std::abs(c.frequency_thz - 470.0) / 470.0 < 1e-4);
    CHECK(std::abs(c.q - 9000.0) / 9000.0 < 1e-3);
    CHECK(std::abs(c.amplitude) == doctest::Approx(0.5).epsilon(1e-2));
    CHECK(c.residual < 1e-4);
    CHECK(c.decay_rate == doctest::Approx(units::kPi * 470.0 / 9000.0).epsilon(1e-3));
}

TEST_CASE("two tones seven nanometres apart")
{
    const double dt = 1e-4;
    const double nu1 = units::frequency_thz(0.640);
    const double nu2 = units::frequency_thz(0.647);
    const auto s = synthesize({{nu1, 1e4}, {nu2, 1e4, 0.7}}, dt, 80000);
    const auto found = harmonic_inversion(s, dt, {nu2 - 15.0, nu1 + 15.0});
    REQUIRE(found.size() >= 2);
    for (double nu : {nu1, nu2}) {
        const HarmonicComponent *c = closest(found, nu);
        REQUIRE(c != nullptr);
        CHECK(std::abs(c->frequency_thz - nu) / nu < 5e-3);
        CHECK(c->q == doctest::Approx(1e4).epsilon(1e-2));
    }
}

TEST_CASE("tones outside the band are ignored")
{
    const double dt = 1e-4;
    const auto s = synthesize({{470.0, 9000.0}, {520.0, 9000.0}}, dt, 60000);
    const auto found = harmonic_inversion(s, dt, {450.0, 490.0});
    REQUIRE(!found.empty());
    CHECK(found.front().frequency_thz == doctest::Approx(470.0).epsilon(1e-4));
    for (const auto &c : found)
        if (c.residual < 1e-4)
            CHECK(std::abs(c.frequency_thz - 520.0) > 10.0);
}

TEST_CASE("pure noise gives no trusted component")
{
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> normal;
    std::vector<std::complex<double>> s(40000);
    for (auto &x : s)
        x = {normal(rng), normal(rng)};
    const auto found = harmonic_inversion(s, 1e-4, {440.0, 500.0});
    for (const auto &c : found)
        CHECK(c.residual > 1e-4);
}

TEST_CASE("input errors")
{
    std::vector<std::complex<double>> s(40000, 1.0);
    CHECK_THROWS_AS(harmonic_inversion(s, 1e-4, {440.0, 6000.0}), DomainError);
    std::vector<std::complex<double>> tiny(8, 1.0);
    CHECK_THROWS_AS(harmonic_inversion(tiny, 1e-4, {440.0, 500.0}), NumericalError);
}

TEST_CASE("merging across probes keeps the cleanest pole")
{
    HarmonicComponent a{470.0, 0.1, 9000.0, 1.0, 1e-6};
    HarmonicComponent b{470.01, 0.1, 9000.0, 1.0, 1e-8};
    HarmonicComponent c{471.0, 0.1, 9000.0, 1.0, 1e-7};
    const auto merged = merge_components({{a, c}, {b}}, 0.05);
    REQUIRE(merged.size() == 2);
    bool has_b = false;
    for (const auto &m : merged)
        has_b = has_b || m.frequency_thz == 470.01;
    CHECK(has_b);
}
