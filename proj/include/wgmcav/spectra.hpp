#ifndef WGMCAV_SPECTRA_HPP
#define WGMCAV_SPECTRA_HPP

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wgmcav/modes.hpp"

namespace wgmcav::spectra
{
/// Gaussian system response sampled by a linear detector. Pixel j covers
/// [start + j·pitch, start + (j+1)·pitch].
struct InstrumentResponse
{
    double gaussian_fwhm_nm = 0.025;
    double pixel_pitch_nm = 0.012;
    int pixel_count = 8192;
    double lambda_start_nm = 600.0;

    double pixel_center(int j) const { return lambda_start_nm + (j + 0.5) * pixel_pitch_nm; }
    double lambda_end_nm() const { return lambda_start_nm + pixel_count * pixel_pitch_nm; }
};

void validate(const InstrumentResponse &response);

struct Spectrum
{
    std::vector<double> lambda_nm;
    std::vector<double> intensity;
    std::map<std::string, std::string> metadata;
};

void validate(const Spectrum &spectrum);

/// One Lorentzian line before the instrument.
struct SpectralLine
{
    double center_nm = 0.0;
    double fwhm_nm = 0.0; ///< Lorentzian FWHM, λ/Q
    double area = 1.0;    ///< intensity × nm
    std::string label;
};

/// Faddeeva function w(z) = exp(−z²) erfc(−iz) for Im z ≥ 0 (Weideman's
/// rational expansion with 32 terms).
std::complex<double> faddeeva(std::complex<double> z);

/// Unit-area Voigt profile at offset x from the centre.
double voigt(double x, double gaussian_fwhm, double lorentz_fwhm);

/// Olivero–Longbothum width estimate of a Voigt profile.
double voigt_fwhm(double gaussian_fwhm, double lorentz_fwhm);

/// Voigt line integrated over each pixel and divided by the pitch, so that
/// Σ value·pitch equals the line area. Pure Gaussian and pure Lorentzian
/// lines use exact erf / arctan differences. Throws DomainError when the
/// centre lies outside the pixel range.
std::vector<double> apply_instrument_response(const SpectralLine &line, const InstrumentResponse &response);

/// Adds the pixelized line into `out` (length pixel_count) over the pixels
/// within `reach` Voigt widths of the centre, or all pixels when reach ≤ 0.
void add_line(std::vector<double> &out, const SpectralLine &line, const InstrumentResponse &response,
              double reach = 0.0);

/// Diamond first-order Raman line for a given excitation (nm).
double raman_line_nm(double excitation_nm = 532.0, double shift_cm = 1332.5);

/// Phenomenological photoluminescence background: Gaussian ZPL, log-normal
/// phonon sideband peaked at `sideband_peak_nm`, narrow Gaussian Raman line.
struct BackgroundSpec
{
    bool enabled = true;
    double zpl_center_nm = 637.0;
    double zpl_fwhm_nm = 2.0;
    double zpl_height = 0.4;
    double sideband_peak_nm = 680.0;
    double sideband_log_width = 0.06;
    double sideband_height = 1.0;
    double excitation_nm = 532.0;
    double raman_shift_cm = 1332.5;
    double raman_fwhm_nm = 0.4;
    double raman_height = 0.6;
};

/// Multiplicative fringe 1 + a·cos(2π λ / period + phase) on the background.
struct FringeSpec
{
    double amplitude = 0.0;
    double period_nm = 2.5;
    double phase = 0.0;
};

/// Additive Gaussian read noise plus shot noise with variance intensity/gain.
struct NoiseSpec
{
    double sigma = 0.0;
    double shot_gain = 0.0; ///< counts per unit intensity; 0 disables shot noise
};

struct SynthesisSpec
{
    BackgroundSpec background;
    FringeSpec fringe;
    NoiseSpec noise;
    InstrumentResponse response;
    std::uint64_t seed = 0;
};

/// Background + lines, each smoothed by the response, then noise.
Spectrum synthesize_spectrum(const std::vector<SpectralLine> &lines, const SynthesisSpec &spec);

/// Lines at λ = mode.wavelength, FWHM = λ/Q_total, all with area `area`.
std::vector<SpectralLine> lines_from_modes(const std::vector<ResonantMode> &modes, double area = 1.0);

Spectrum synthesize_spectrum(const std::vector<ResonantMode> &modes, const SynthesisSpec &spec,
                             double line_area = 1.0);

struct PeakDetectSpec
{
    double background_window_nm = 1.5; ///< rolling-minimum window
    double threshold = 5.0;            ///< in units of the local noise σ
    double noise_window_nm = 6.0;
    double expected_fwhm_nm = 0.025;   ///< width of an unresolved single line
    double pixel_pitch_nm = 0.012;
    double unresolved_ratio = 1.08;
};

struct PeakCandidate
{
    std::size_t index = 0;
    double lambda_nm = 0.0;
    double height = 0.0;     ///< above the estimated background
    double prominence = 0.0;
    double width_nm = 0.0;   ///< at half prominence
    double core_width_nm = 0.0; ///< Gaussian FWHM from the curvature of the top three samples
    double noise = 0.0;
    bool unresolved = false; ///< wider than a single instrument-limited line
};

/// Rolling-minimum background (smoothed), robust local noise from the median
/// absolute pixel-to-pixel difference, and maxima whose height and
/// prominence both exceed threshold·σ. Fewer than 16 samples → empty list.
std::vector<PeakCandidate> detect_peaks(const Spectrum &spectrum, const PeakDetectSpec &spec = {});

struct FitOptions
{
    double fwhm_uncertainty_nm = 0.005; ///< assumed error of the response FWHM
    int max_iterations = 400;
    double confidence_z = 1.96;
};

struct LineFit
{
    double center_nm = 0.0;
    double area = 0.0;
    double lorentz_fwhm_nm = 0.0;
    double fwhm_ci_lower_nm = 0.0;
    double fwhm_ci_upper_nm = 0.0;
    double fwhm_se_nm = 0.0;
    double gaussian_fwhm_nm = 0.0;
    double baseline = 0.0;
    double slope = 0.0;
    double q = 0.0;                      ///< λ / FWHM_L, +inf at zero width
    std::optional<double> q_lower_bound; ///< set when resolution limited
    bool resolution_limited = false;
    double reduced_chi2 = 0.0;
    int iterations = 0;
};

/// Least squares over (centre, area, Lorentzian FWHM, linear baseline) with the
/// Gaussian FWHM fixed by the response, on the samples with λ in
/// [lo_nm, hi_nm]. Two more fits with the Gaussian widened and narrowed by
/// `fwhm_uncertainty_nm` carry the response uncertainty into FWHM_L. When the
/// lower confidence bound of the widened fit falls below
/// `fwhm_uncertainty_nm` the line is flagged resolution limited and
/// Q_lower_bound = λ / (upper FWHM_L bound of the narrowed fit). Throws
/// ValidationError for windows with fewer than 8 samples and NumericalError
/// when the fit does not converge.
LineFit fit_resonance(const Spectrum &spectrum, double lo_nm, double hi_nm, const InstrumentResponse &response,
                      const FitOptions &options = {});

/// Simulated FSR dispersion of one family.
struct FamilyDispersion
{
    std::string label;
    int radial_order = 0;
    std::vector<std::pair<double, double>> fsr_nm; ///< (λ_mid nm, FSR nm), any order
};

/// Builds per-family tables from FSR points (λ in μm as produced by
/// fsr_dispersion) with radial orders parsed from the labels.
std::vector<FamilyDispersion> dispersion_tables(const std::vector<FsrPoint> &points);

struct AssignOptions
{
    double tolerance = 0.06; ///< allowed |spacing − FSR| / FSR per link
    int min_chain = 3;
    int max_skips = 1;       ///< missing peaks bridged per link
};

struct FamilyAssignment
{
    double lambda_nm = 0.0;
    std::string label = "unknown";
    int chain = -1;
};

/// Chains peaks into quasi-arithmetic progressions following each family's
/// FSR(λ), then accepts chains greedily (longest first, then smallest RMS
/// mismatch, then lowest radial order). Output is ordered like `peaks_nm`.
std::vector<FamilyAssignment> assign_families(const std::vector<double> &peaks_nm,
                                              const std::vector<FamilyDispersion> &families,
                                              const AssignOptions &options = {});

/// Two-column CSV (lambda_nm,intensity) with a header line.
void write_spectrum_csv(const Spectrum &spectrum, const std::string &path);
Spectrum read_spectrum_csv(const std::string &path);

} // namespace wgmcav::spectra

#endif // WGMCAV_SPECTRA_HPP
