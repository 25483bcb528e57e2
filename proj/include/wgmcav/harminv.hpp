#ifndef WGMCAV_HARMINV_HPP
#define WGMCAV_HARMINV_HPP

#include <complex>
#include <span>
#include <vector>

#include "wgmcav/fdtd.hpp"

namespace wgmcav
{
struct FrequencyBand
{
    double lo_thz = 0.0;
    double hi_thz = 0.0;
};

/// One damped complex exponential c·exp((i 2πν − γ) t).
struct HarmonicComponent
{
    double frequency_thz = 0.0;
    double decay_rate = 0.0;           ///< γ in 1/ps (amplitude decay)
    double q = 0.0;                    ///< πν/γ; +inf for undamped tones
    std::complex<double> amplitude;    ///< at the first sample of the series
    /// Pole mismatch between two pencils of different size; large values
    /// mark components that are not stable features of the data.
    double residual = 0.0;
};

struct HarminvOptions
{
    int max_components = 30;
    double singular_value_tolerance = 1e-9; ///< relative to the largest singular value
    double residual_threshold = 1e-4;
    double oversampling = 2.5;              ///< decimated sample rate / band width
    Eigen::Index max_samples = 1200;        ///< cap on decimated samples entering the pencil
};

/// Decomposes uniformly sampled data into damped exponentials inside `band`
/// by shifting the band to baseband, FIR low-pass filtering and decimating
/// (which preserves the signal poles), then solving a shift-invariant
/// (ESPRIT / matrix pencil) eigenproblem on the Hankel matrix. Components are
/// returned sorted by decreasing |amplitude|.
///
/// Throws DomainError when the band exceeds the Nyquist range and
/// NumericalError when the series is too short for the requested order.
std::vector<HarmonicComponent> harmonic_inversion(std::span<const std::complex<double>> samples, double dt_ps,
                                                  FrequencyBand band, const HarminvOptions &options = {});

std::vector<HarmonicComponent> harmonic_inversion(const TimeSeries &series, FrequencyBand band,
                                                  const HarminvOptions &options = {});

/// Components from several series merged: poles closer than `tolerance_thz`
/// are treated as one resonance (the one with the smallest residual is kept).
std::vector<HarmonicComponent> merge_components(const std::vector<std::vector<HarmonicComponent>> &sets,
                                                double tolerance_thz);

} // namespace wgmcav

#endif // WGMCAV_HARMINV_HPP
