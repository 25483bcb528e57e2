#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "wgmcav/errors.hpp"
#include "wgmcav/spectra.hpp"

using namespace wgmcav;
using namespace wgmcav::spectra;

namespace
{
constexpr double kPi = std::numbers::pi;

// Gaussian ⊗ Lorentzian by brute-force Simpson quadrature.
double convolved(double x, double g_fwhm, double l_fwhm)
{
    const double sigma = g_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double gamma = 0.5 * l_fwhm;
    const int n = 40000;
    const double a = -12.0 * sigma, b = 12.0 * sigma, h = (b - a) / n;
    double s = 0.0;
    for (int j = 0; j <= n; ++j) {
        const double t = a + j * h;
        const double f = std::exp(-0.5 * t * t / (sigma * sigma)) / (sigma * std::sqrt(2.0 * kPi)) * gamma /
                         (kPi * ((x - t) * (x - t) + gamma * gamma));
        s += f * (j == 0 || j == n ? 1.0 : (j % 2 ? 4.0 : 2.0));
    }
    return s * h / 3.0;
}

template <typename F>
double full_width_half_max(F f, double guess)
{
    const double half = 0.5 * f(0.0);
    double lo = 0.0, hi = 10.0 * guess;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > half ? lo : hi) = mid;
    }
    return 2.0 * lo;
}

InstrumentResponse window_around(double center, double half_width, double pitch = 0.012, double g = 0.025)
{
    InstrumentResponse r;
    r.gaussian_fwhm_nm = g;
    r.pixel_pitch_nm = pitch;
    r.lambda_start_nm = center - half_width;
    r.pixel_count = static_cast<int>(2.0 * half_width / pitch);
    return r;
}

SynthesisSpec bare(const InstrumentResponse &r)
{
    SynthesisSpec s;
    s.background.enabled = false;
    s.response = r;
    return s;
}

double peak_value(const SpectralLine &line, const InstrumentResponse &r)
{
    const auto v = apply_instrument_response(line, r);
    return *std::max_element(v.begin(), v.end());
}

// Noisy single line at 637 nm with the requested peak signal-to-noise ratio.
Spectrum noisy_line(double q, double snr, std::uint64_t seed, const InstrumentResponse &r)
{
    const SpectralLine line{637.0, 637.0 / q, 1.0, ""};
    SynthesisSpec s = bare(r);
    s.noise.sigma = peak_value(line, r) / snr;
    s.seed = seed;
    return synthesize_spectrum({line}, s);
}

} // namespace

TEST_SUITE("spectra")
{
    TEST_CASE("faddeeva matches the scaled complementary error function on the imaginary axis")
    {
        for (double y : {0.05, 0.3, 1.0, 2.5, 6.0}) {
            const double expected = std::exp(y * y) * std::erfc(y);
            CHECK(faddeeva({0.0, y}).real() == doctest::Approx(expected).epsilon(1e-10));
            CHECK(std::abs(faddeeva({0.0, y}).imag()) < 1e-12);
        }
    }

    TEST_CASE("faddeeva real part on the real axis is a Gaussian")
    {
        for (double x : {0.0, 0.5, 1.3, 2.2, 3.0})
            CHECK(faddeeva({x, 0.0}).real() == doctest::Approx(std::exp(-x * x)).epsilon(1e-9));
    }

    TEST_CASE("voigt agrees with a brute-force convolution")
    {
        const double g = 0.025, l = 0.018;
        for (double x : {0.0, 0.01, 0.03, 0.08, 0.2}) {
            const double ref = convolved(x, g, l);
            CHECK(voigt(x, g, l) == doctest::Approx(ref).epsilon(1e-6));
        }
    }

    TEST_CASE("equal-width voigt FWHM")
    {
        const double w = 0.03;
        const double numeric = full_width_half_max([&](double x) { return convolved(x, w, w); }, w);
        const double ours = full_width_half_max([&](double x) { return voigt(x, w, w); }, w);
        CHECK(ours == doctest::Approx(numeric).epsilon(1e-5));
        CHECK(ours / w == doctest::Approx(1.64).epsilon(0.01));
        CHECK(voigt_fwhm(w, w) == doctest::Approx(numeric).epsilon(2e-3));
    }

    TEST_CASE("delta line gives the erf-difference pixelized Gaussian")
    {
        const InstrumentResponse r = window_around(637.0, 0.3);
        const double center = 637.0031;
        const auto v = apply_instrument_response({center, 0.0, 2.0, ""}, r);
        const double s = r.gaussian_fwhm_nm / (2.0 * std::sqrt(2.0 * std::log(2.0))) * std::sqrt(2.0);
        for (int j = 0; j < r.pixel_count; ++j) {
            const double a = r.lambda_start_nm + j * r.pixel_pitch_nm - center;
            const double b = a + r.pixel_pitch_nm;
            const double expected = 2.0 * 0.5 * (std::erf(b / s) - std::erf(a / s)) / r.pixel_pitch_nm;
            CHECK(v[static_cast<std::size_t>(j)] == doctest::Approx(expected).epsilon(1e-10));
        }
    }

    TEST_CASE("ideal instrument recovers the Lorentzian")
    {
        const InstrumentResponse r = window_around(637.0, 0.5, 1e-4, 1e-7);
        const double l = 0.06;
        const auto v = apply_instrument_response({637.0, l, 1.0, ""}, r);
        for (int j = 0; j < r.pixel_count; j += 97) {
            const double x = r.pixel_center(j) - 637.0;
            const double lorentz = 0.5 * l / (kPi * (x * x + 0.25 * l * l));
            CHECK(v[static_cast<std::size_t>(j)] == doctest::Approx(lorentz).epsilon(1e-3));
        }
    }

    TEST_CASE("pixel integration conserves the line area")
    {
        const InstrumentResponse r = window_around(637.0, 49.0);
        for (double q : {1e4, 1e5}) {
            const auto v = apply_instrument_response({637.0, 637.0 / q, 3.0, ""}, r);
            double sum = 0.0;
            for (double x : v)
                sum += x * r.pixel_pitch_nm;
            CHECK(sum == doctest::Approx(3.0).epsilon(1e-3));
        }
    }

    TEST_CASE("line outside the pixel range is rejected")
    {
        const InstrumentResponse r = window_around(637.0, 1.0);
        CHECK_THROWS_AS(apply_instrument_response({700.0, 0.01, 1.0, ""}, r), DomainError);
    }

    TEST_CASE("diamond Raman line from 532 nm excitation")
    {
        const double expected = 1.0 / (1.0 / 532e-7 - 1332.5) * 1e7;
        CHECK(raman_line_nm() == doctest::Approx(expected).epsilon(1e-12));
        CHECK(raman_line_nm() == doctest::Approx(572.6).epsilon(2e-4));
    }

    TEST_CASE("background-only spectrum peaks at the Raman, ZPL and sideband positions")
    {
        SynthesisSpec s;
        s.response.lambda_start_nm = 560.0;
        s.response.pixel_count = 12000; // 560 - 704 nm
        const Spectrum sp = synthesize_spectrum(std::vector<SpectralLine>{}, s);
        const auto local_max_near = [&](double lam, double half) {
            std::size_t best = 0;
            double v = -1.0;
            for (std::size_t j = 0; j < sp.lambda_nm.size(); ++j)
                if (std::abs(sp.lambda_nm[j] - lam) < half && sp.intensity[j] > v) {
                    v = sp.intensity[j];
                    best = j;
                }
            return sp.lambda_nm[best];
        };
        CHECK(local_max_near(572.6, 3.0) == doctest::Approx(raman_line_nm()).epsilon(5e-5));
        CHECK(local_max_near(637.0, 3.0) == doctest::Approx(637.0).epsilon(1e-4));
        const auto top = std::max_element(sp.intensity.begin(), sp.intensity.end()) - sp.intensity.begin();
        CHECK(sp.lambda_nm[static_cast<std::size_t>(top)] == doctest::Approx(680.0).epsilon(2e-3));
    }

    TEST_CASE("single mode without background is one peak at the mode wavelength")
    {
        ResonantMode m;
        m.wavelength_um = 0.6401;
        m.q_rad = 1e4;
        const InstrumentResponse r = window_around(640.0, 2.0);
        const Spectrum sp = synthesize_spectrum(std::vector<ResonantMode>{m}, bare(r));
        const auto peaks = detect_peaks(sp);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].lambda_nm == doctest::Approx(640.1).epsilon(2e-6));
    }

    TEST_CASE("synthesis is deterministic for a fixed seed")
    {
        const InstrumentResponse r = window_around(637.0, 1.0);
        const Spectrum a = noisy_line(1e4, 20.0, 7, r);
        const Spectrum b = noisy_line(1e4, 20.0, 7, r);
        const Spectrum c = noisy_line(1e4, 20.0, 8, r);
        CHECK(a.intensity == b.intensity);
        CHECK(a.intensity != c.intensity);
    }

    TEST_CASE("eight injected modes at SNR 20 are found with at most one false positive")
    {
        SynthesisSpec s;
        s.response.lambda_start_nm = 630.0;
        s.response.pixel_count = 4000; // 630 - 678 nm
        std::vector<SpectralLine> lines;
        for (int j = 0; j < 8; ++j)
            lines.push_back({633.3 + 5.4 * j, (633.3 + 5.4 * j) / (j % 2 ? 8000.0 : 20000.0), 0.0, ""});
        // Peak heights of 20 σ above a background of about 0.5.
        const double sigma = 0.01;
        for (auto &l : lines) {
            SpectralLine unit = l;
            unit.area = 1.0;
            l.area = 20.0 * sigma / peak_value(unit, s.response);
        }
        s.noise.sigma = sigma;
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            s.seed = seed;
            const auto peaks = detect_peaks(synthesize_spectrum(lines, s));
            int hits = 0, false_pos = 0;
            for (const auto &p : peaks) {
                const bool hit = std::any_of(lines.begin(), lines.end(),
                                             [&](const SpectralLine &l) { return std::abs(l.center_nm - p.lambda_nm) < 0.03; });
                (hit ? hits : false_pos)++;
            }
            CHECK(hits >= 8);
            CHECK(false_pos <= 1);
        }
    }

    TEST_CASE("flat noisy spectrum rarely yields detections")
    {
        int seeds_with_detections = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Spectrum sp;
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> n(0.0, 0.02);
            for (int j = 0; j < 2000; ++j) {
                sp.lambda_nm.push_back(630.0 + 0.012 * j);
                sp.intensity.push_back(1.0 + n(rng));
            }
            if (!detect_peaks(sp).empty())
                ++seeds_with_detections;
        }
        CHECK(seeds_with_detections < 5);
    }

    TEST_CASE("two lines closer than a pixel merge into one unresolved detection")
    {
        const InstrumentResponse r = window_around(637.0, 1.0);
        const std::vector<SpectralLine> lines{{636.996, 637.0 / 1e6, 1.0, ""}, {637.004, 637.0 / 1e6, 1.0, ""}};
        const auto peaks = detect_peaks(synthesize_spectrum(lines, bare(r)));
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].unresolved);

        const auto single = detect_peaks(synthesize_spectrum({lines[0]}, bare(r)));
        REQUIRE(single.size() == 1);
        CHECK_FALSE(single[0].unresolved);
    }

    TEST_CASE("short spectra give no detections")
    {
        Spectrum sp;
        for (int j = 0; j < 10; ++j) {
            sp.lambda_nm.push_back(j);
            sp.intensity.push_back(j == 5 ? 10.0 : 0.0);
        }
        CHECK(detect_peaks(sp).empty());
    }

    TEST_CASE("zero-noise line is recovered exactly")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        SpectralLine line{637.0123, 637.0123 / 2e4, 2.5, ""};
        SynthesisSpec s = bare(r);
        Spectrum sp = synthesize_spectrum({line}, s);
        for (std::size_t j = 0; j < sp.intensity.size(); ++j)
            sp.intensity[j] += 0.3 + 0.02 * (sp.lambda_nm[j] - 637.0);
        const LineFit fit = fit_resonance(sp, 636.6, 637.4, r);
        CHECK(fit.center_nm == doctest::Approx(line.center_nm).epsilon(1e-9));
        CHECK(fit.lorentz_fwhm_nm == doctest::Approx(line.fwhm_nm).epsilon(1e-6));
        CHECK(fit.area == doctest::Approx(line.area).epsilon(1e-6));
        CHECK(fit.slope == doctest::Approx(0.02).epsilon(1e-6));
        CHECK(fit.q == doctest::Approx(2e4).epsilon(1e-6));
    }

    TEST_CASE("Q = 1e4 is recovered within 10% at SNR 50")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const LineFit fit = fit_resonance(noisy_line(1e4, 50.0, seed, r), 636.6, 637.4, r);
            CHECK(fit.q == doctest::Approx(1e4).epsilon(0.10));
            CHECK_FALSE(fit.resolution_limited);
        }
    }

    TEST_CASE("Q = 1e5 is resolution limited with a bound above 2.5e4")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const LineFit fit = fit_resonance(noisy_line(1e5, 50.0, seed, r), 636.6, 637.4, r);
            CHECK(fit.resolution_limited);
            REQUIRE(fit.q_lower_bound.has_value());
            CHECK(*fit.q_lower_bound >= 2.5e4);
            if (std::isfinite(fit.q))
                CHECK(*fit.q_lower_bound <= fit.q);
        }
    }

    TEST_CASE("Q lower bound does not increase with the assumed response uncertainty")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        const Spectrum sp = noisy_line(1e5, 50.0, 3, r);
        double previous = std::numeric_limits<double>::infinity();
        for (double u : {0.005, 0.007, 0.01, 0.015}) {
            FitOptions o;
            o.fwhm_uncertainty_nm = u;
            const LineFit fit = fit_resonance(sp, 636.6, 637.4, r, o);
            REQUIRE(fit.q_lower_bound.has_value());
            CHECK(*fit.q_lower_bound <= previous * (1.0 + 1e-9));
            previous = *fit.q_lower_bound;
        }
    }

    TEST_CASE("linewidth estimate is unbiased over 100 seeds at SNR 20")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        const double truth = 637.0 / 1.5e4;
        double sum = 0.0, se = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const LineFit fit = fit_resonance(noisy_line(1.5e4, 20.0, 1000 + seed, r), 636.6, 637.4, r);
            sum += fit.lorentz_fwhm_nm;
            se += fit.fwhm_se_nm;
        }
        const double mean = sum / 100.0;
        const double ci = 1.96 * se / 100.0;
        CHECK(std::abs(mean - truth) < ci);
    }

    TEST_CASE("fit window with too few samples is rejected")
    {
        const InstrumentResponse r = window_around(637.0, 0.6);
        CHECK_THROWS_AS(fit_resonance(noisy_line(1e4, 50.0, 1, r), 637.0, 637.05, r), ValidationError);
    }

    TEST_CASE("single arithmetic family forms one exact chain")
    {
        const FamilyDispersion fam{"TE0", 0, {{600.0, 7.0}, {700.0, 7.0}}};
        std::vector<double> peaks;
        for (int j = 0; j < 9; ++j)
            peaks.push_back(620.0 + 7.0 * j);
        const auto labels = assign_families(peaks, {fam});
        for (const auto &a : labels) {
            CHECK(a.label == "TE0");
            CHECK(a.chain == 0);
        }
    }

    TEST_CASE("random peak positions are mostly unknown")
    {
        const FamilyDispersion fam{"TE0", 0, {{600.0, 7.0}, {700.0, 7.0}}};
        int unknown = 0, total = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> u(620.0, 680.0);
            std::vector<double> peaks;
            for (int j = 0; j < 6; ++j)
                peaks.push_back(u(rng));
            for (const auto &a : assign_families(peaks, {fam})) {
                ++total;
                unknown += a.label == "unknown";
            }
        }
        CHECK(unknown > total / 2);
    }

    TEST_CASE("spectrum CSV round trip")
    {
        const InstrumentResponse r = window_around(637.0, 0.2);
        const Spectrum a = noisy_line(1e4, 20.0, 5, r);
        const std::string path = "test_spectra_roundtrip.csv";
        write_spectrum_csv(a, path);
        const Spectrum b = read_spectrum_csv(path);
        std::remove(path.c_str());
        REQUIRE(b.lambda_nm.size() == a.lambda_nm.size());
        for (std::size_t j = 0; j < a.lambda_nm.size(); ++j) {
            CHECK(b.lambda_nm[j] == doctest::Approx(a.lambda_nm[j]).epsilon(1e-11));
            CHECK(b.intensity[j] == doctest::Approx(a.intensity[j]).epsilon(1e-11));
        }
    }
}
