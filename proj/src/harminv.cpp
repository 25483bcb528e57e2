#include "wgmcav/harminv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav
{
namespace
{
using cd = std::complex<double>;
using Index = Eigen::Index;
constexpr double kTwoPi = 2.0 * units::kPi;

// Blackman-windowed sinc low-pass; cutoff in cycles per sample.
Eigen::VectorXd lowpass_taps(Index taps, double cutoff)
{
    Eigen::VectorXd h(taps);
    const double mid = 0.5 * static_cast<double>(taps - 1);
    for (Index l = 0; l < taps; ++l) {
        const double x = static_cast<double>(l) - mid;
        const double sinc = x == 0.0 ? 2.0 * cutoff : std::sin(kTwoPi * cutoff * x) / (units::kPi * x);
        const double w = 0.42 - 0.5 * std::cos(kTwoPi * static_cast<double>(l) / static_cast<double>(taps - 1)) +
                         0.08 * std::cos(2.0 * kTwoPi * static_cast<double>(l) / static_cast<double>(taps - 1));
        h(l) = sinc * w;
    }
    return h / h.sum();
}

// Signal poles of a uniformly sampled exponential sum via ESPRIT on a
// Hankel matrix with `cols` columns.
Eigen::VectorXcd esprit_poles(const Eigen::VectorXcd &y, Index cols, int max_order, double tolerance)
{
    const Index n = y.size();
    const Index rows = n - cols + 1;
    Eigen::MatrixXcd hankel(rows, cols);
    for (Index j = 0; j < cols; ++j)
        hankel.col(j) = y.segment(j, rows);
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(hankel, Eigen::ComputeThinU);
    const auto &s = svd.singularValues();
    if (s.size() == 0 || !(s(0) > 0.0))
        return {};
    Index order = 0;
    while (order < s.size() && s(order) > tolerance * s(0))
        ++order;
    order = std::min<Index>({order, max_order, cols - 1, rows - 2});
    if (order <= 0)
        return {};
    const Eigen::MatrixXcd u = svd.matrixU().leftCols(order);
    const Eigen::MatrixXcd phi = u.topRows(rows - 1).colPivHouseholderQr().solve(u.bottomRows(rows - 1));
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(phi, false);
    return eig.eigenvalues();
}

} // namespace

std::vector<HarmonicComponent> harmonic_inversion(std::span<const std::complex<double>> samples, double dt_ps,
                                                  FrequencyBand band, const HarminvOptions &options)
{
    if (!(dt_ps > 0.0))
        throw DomainError("sample interval must be positive");
    if (!(band.hi_thz > band.lo_thz))
        throw DomainError("frequency band must have hi > lo");
    const double nyquist = 0.5 / dt_ps;
    if (band.hi_thz > nyquist || band.lo_thz < -nyquist) {
        std::ostringstream os;
        os << "band [" << band.lo_thz << ", " << band.hi_thz << "] THz exceeds the Nyquist range of " << nyquist
           << " THz";
        throw DomainError(os.str());
    }
    const Index n_raw = static_cast<Index>(samples.size());
    const int max_order = std::max(1, options.max_components);
    if (n_raw < 4 * max_order && n_raw < 16)
        throw NumericalError("series too short for harmonic inversion");

    const double center = 0.5 * (band.lo_thz + band.hi_thz);
    const double width = band.hi_thz - band.lo_thz;
    const double fs = 1.0 / dt_ps;
    const Index decim = std::max<Index>(1, static_cast<Index>(std::floor(fs / (options.oversampling * width))));
    const Index taps = decim > 1 ? 8 * decim + 1 : 1;

    // Baseband shift.
    Eigen::VectorXcd base(n_raw);
    const double w0 = -kTwoPi * center * dt_ps;
    for (Index j = 0; j < n_raw; ++j)
        base(j) = samples[static_cast<std::size_t>(j)] * std::polar(1.0, w0 * static_cast<double>(j));

    // Filter + decimate. Output j sits at raw index j·decim + taps - 1.
    Eigen::VectorXd h = Eigen::VectorXd::Ones(1);
    if (decim > 1)
        h = lowpass_taps(taps, 0.55 * width / fs);
    const Index available = (n_raw - taps) / decim + 1;
    if (available <= 0)
        throw NumericalError("series too short for the decimation filter");
    const Index n = std::min(available, options.max_samples);
    Eigen::VectorXcd y(n);
    for (Index j = 0; j < n; ++j) {
        const Index end = j * decim + taps - 1;
        cd acc = 0.0;
        for (Index l = 0; l < taps; ++l)
            acc += h(l) * base(end - l);
        y(j) = acc;
    }
    if (n < 4 * std::min<Index>(max_order, 4) || n < 12)
        throw NumericalError("series too short for harmonic inversion after decimation");

    const double scale = y.cwiseAbs().maxCoeff();
    if (!(scale > 0.0))
        return {};
    const Index cols = std::max<Index>(2, n / 3);
    const Eigen::VectorXcd poles = esprit_poles(y, cols, max_order, options.singular_value_tolerance);
    const Eigen::VectorXcd check = esprit_poles(y, std::max<Index>(2, n / 2), max_order, options.singular_value_tolerance);
    if (poles.size() == 0)
        return {};

    // Amplitudes by least squares on the decimated series.
    Eigen::MatrixXcd vander(n, poles.size());
    for (Index k = 0; k < poles.size(); ++k) {
        cd p = 1.0;
        for (Index j = 0; j < n; ++j) {
            vander(j, k) = p;
            p *= poles(k);
        }
    }
    const Eigen::VectorXcd amp = vander.colPivHouseholderQr().solve(y);

    const double dt_dec = dt_ps * static_cast<double>(decim);
    std::vector<HarmonicComponent> out;
    for (Index k = 0; k < poles.size(); ++k) {
        const cd p = poles(k);
        if (!(std::abs(p) > 0.0) || !std::isfinite(p.real()) || !std::isfinite(p.imag()))
            continue;
        HarmonicComponent c;
        c.frequency_thz = center + std::arg(p) / (kTwoPi * dt_dec);
        c.decay_rate = -std::log(std::abs(p)) / dt_dec;
        if (c.frequency_thz < band.lo_thz || c.frequency_thz > band.hi_thz)
            continue;
        c.q = c.decay_rate > 0.0 ? units::kPi * c.frequency_thz / c.decay_rate
                                 : std::numeric_limits<double>::infinity();
        // Undo the filter gain and the filter delay.
        const cd r = std::polar(std::exp(-c.decay_rate * dt_ps), kTwoPi * (c.frequency_thz - center) * dt_ps);
        cd gain = 0.0;
        cd rl = 1.0;
        for (Index l = 0; l < taps; ++l) {
            gain += h(l) * rl;
            rl /= r;
        }
        c.amplitude = amp(k) / (gain * std::pow(r, static_cast<double>(taps - 1)));
        double mismatch = std::numeric_limits<double>::infinity();
        for (Index j = 0; j < check.size(); ++j)
            mismatch = std::min(mismatch, std::abs(check(j) - p));
        c.residual = mismatch;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(),
              [](const HarmonicComponent &a, const HarmonicComponent &b) { return std::abs(a.amplitude) > std::abs(b.amplitude); });
    return out;
}

std::vector<HarmonicComponent> harmonic_inversion(const TimeSeries &series, FrequencyBand band,
                                                  const HarminvOptions &options)
{
    return harmonic_inversion(std::span<const std::complex<double>>(series.samples), series.dt_ps, band, options);
}

std::vector<HarmonicComponent> merge_components(const std::vector<std::vector<HarmonicComponent>> &sets,
                                                double tolerance_thz)
{
    std::vector<HarmonicComponent> all;
    for (const auto &s : sets)
        all.insert(all.end(), s.begin(), s.end());
    std::sort(all.begin(), all.end(),
              [](const HarmonicComponent &a, const HarmonicComponent &b) { return a.frequency_thz < b.frequency_thz; });
    std::vector<HarmonicComponent> merged;
    for (const auto &c : all) {
        if (!merged.empty() && std::abs(c.frequency_thz - merged.back().frequency_thz) < tolerance_thz) {
            auto &prev = merged.back();
            if (c.residual < prev.residual || (c.residual == prev.residual && std::abs(c.amplitude) > std::abs(prev.amplitude)))
                prev = c;
            continue;
        }
        merged.push_back(c);
    }
    return merged;
}

} // namespace wgmcav
