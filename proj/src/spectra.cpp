#include "wgmcav/spectra.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "wgmcav/errors.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav::spectra
{
namespace
{
using cd = std::complex<double>;
constexpr double kPi = units::kPi;
const double kSqrtPi = std::sqrt(kPi);
const double kFwhmToSigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));

constexpr int kFaddeevaTerms = 32;

struct FaddeevaTable
{
    double l = 0.0;
    std::array<double, kFaddeevaTerms> a{}; ///< polynomial coefficients, constant term first
};

const FaddeevaTable &faddeeva_table()
{
    static const FaddeevaTable table = [] {
        FaddeevaTable t;
        const int n = kFaddeevaTerms;
        const int m = 2 * n;
        t.l = std::sqrt(n / std::sqrt(2.0));
        // f(t_k) on the 2M-point grid k = -M..M-1 (f = 0 at k = -M).
        std::vector<double> f(static_cast<std::size_t>(2 * m), 0.0);
        for (int k = -m + 1; k < m; ++k) {
            const double theta = k * kPi / m;
            const double tk = t.l * std::tan(0.5 * theta);
            f[static_cast<std::size_t>(k + m)] = std::exp(-tk * tk) * (t.l * t.l + tk * tk);
        }
        // Real part of the DFT of the even sequence; a_j for j = 1..N.
        for (int j = 1; j <= n; ++j) {
            double s = 0.0;
            for (int k = -m; k < m; ++k)
                s += f[static_cast<std::size_t>(k + m)] * std::cos(kPi * k * j / m);
            t.a[static_cast<std::size_t>(j - 1)] = s / (2.0 * m);
        }
        return t;
    }();
    return table;
}

struct GaussLegendre
{
    std::array<double, 16> x{};
    std::array<double, 16> w{};
};

const GaussLegendre &gauss_legendre()
{
    static const GaussLegendre gl = [] {
        GaussLegendre g;
        const int n = 16;
        for (int i = 0; i < n; ++i) {
            double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16)
                    break;
            }
            g.x[static_cast<std::size_t>(i)] = x;
            g.w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        return g;
    }();
    return gl;
}

// Mean of the unit-area Voigt over [a, b] (offsets from the centre).
double pixel_mean(double a, double b, double gaussian_fwhm, double lorentz_fwhm)
{
    const double width = b - a;
    if (lorentz_fwhm <= 0.0) {
        const double s = gaussian_fwhm * kFwhmToSigma * std::sqrt(2.0);
        return 0.5 * (std::erf(b / s) - std::erf(a / s)) / width;
    }
    if (gaussian_fwhm <= 0.0) {
        const double g = 0.5 * lorentz_fwhm;
        return (std::atan(b / g) - std::atan(a / g)) / (kPi * width);
    }
    const double fv = voigt_fwhm(gaussian_fwhm, lorentz_fwhm);
    const double distance = a < 0.0 && b > 0.0 ? 0.0 : std::min(std::abs(a), std::abs(b));
    int segments = 1;
    if (distance < 20.0 * fv)
        segments = std::clamp(static_cast<int>(std::ceil(2.0 * width / fv)), 1, 256);
    else if (distance > 200.0 * fv)
        return voigt(0.5 * (a + b), gaussian_fwhm, lorentz_fwhm);
    const auto &gl = gauss_legendre();
    const double h = width / segments;
    double sum = 0.0;
    for (int s = 0; s < segments; ++s) {
        const double mid = a + (s + 0.5) * h;
        for (std::size_t q = 0; q < gl.x.size(); ++q)
            sum += gl.w[q] * voigt(mid + 0.5 * h * gl.x[q], gaussian_fwhm, lorentz_fwhm);
    }
    return 0.5 * h * sum / width;
}

double median(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

} // namespace

void validate(const InstrumentResponse &r)
{
    if (!(r.gaussian_fwhm_nm > 0.0))
        throw ValidationError("gaussian_fwhm_nm", "response FWHM must be positive");
    if (!(r.pixel_pitch_nm > 0.0))
        throw ValidationError("pixel_pitch_nm", "pixel pitch must be positive");
    if (r.pixel_count < 1)
        throw ValidationError("pixel_count", "pixel count must be positive");
}

void validate(const Spectrum &s)
{
    if (s.lambda_nm.size() != s.intensity.size())
        throw ValidationError("spectrum", "wavelength and intensity arrays differ in length");
    for (std::size_t j = 1; j < s.lambda_nm.size(); ++j)
        if (!(s.lambda_nm[j] > s.lambda_nm[j - 1]))
            throw ValidationError("spectrum", "wavelengths must be strictly increasing");
}

std::complex<double> faddeeva(std::complex<double> z)
{
    const auto &t = faddeeva_table();
    const cd i(0.0, 1.0);
    const cd denom = t.l - i * z;
    const cd zz = (t.l + i * z) / denom;
    cd p = 0.0;
    for (int j = kFaddeevaTerms - 1; j >= 0; --j)
        p = p * zz + t.a[static_cast<std::size_t>(j)];
    return 2.0 * p / (denom * denom) + (1.0 / kSqrtPi) / denom;
}

double voigt(double x, double gaussian_fwhm, double lorentz_fwhm)
{
    if (gaussian_fwhm <= 0.0 && lorentz_fwhm <= 0.0)
        throw DomainError("Voigt profile needs a positive width");
    if (gaussian_fwhm <= 0.0) {
        const double g = 0.5 * lorentz_fwhm;
        return g / (kPi * (x * x + g * g));
    }
    const double sigma = gaussian_fwhm * kFwhmToSigma;
    if (lorentz_fwhm <= 0.0)
        return std::exp(-0.5 * x * x / (sigma * sigma)) / (sigma * std::sqrt(2.0 * kPi));
    const cd z(x / (sigma * std::sqrt(2.0)), 0.5 * lorentz_fwhm / (sigma * std::sqrt(2.0)));
    return faddeeva(z).real() / (sigma * std::sqrt(2.0 * kPi));
}

double voigt_fwhm(double gaussian_fwhm, double lorentz_fwhm)
{
    return 0.5346 * lorentz_fwhm + std::sqrt(0.2166 * lorentz_fwhm * lorentz_fwhm + gaussian_fwhm * gaussian_fwhm);
}

void add_line(std::vector<double> &out, const SpectralLine &line, const InstrumentResponse &response, double reach)
{
    const double pitch = response.pixel_pitch_nm;
    const double g = response.gaussian_fwhm_nm;
    const double l = std::abs(line.fwhm_nm);
    int first = 0, last = response.pixel_count - 1;
    if (reach > 0.0) {
        const double span = reach * voigt_fwhm(g, l);
        first = std::max(0, static_cast<int>(std::floor((line.center_nm - span - response.lambda_start_nm) / pitch)));
        last = std::min(last, static_cast<int>(std::ceil((line.center_nm + span - response.lambda_start_nm) / pitch)));
    }
    for (int j = first; j <= last; ++j) {
        const double a = response.lambda_start_nm + j * pitch - line.center_nm;
        out[static_cast<std::size_t>(j)] += line.area * pixel_mean(a, a + pitch, g, l);
    }
}

std::vector<double> apply_instrument_response(const SpectralLine &line, const InstrumentResponse &response)
{
    validate(response);
    if (line.center_nm < response.lambda_start_nm || line.center_nm > response.lambda_end_nm())
        throw DomainError("line centre lies outside the pixel range");
    std::vector<double> out(static_cast<std::size_t>(response.pixel_count), 0.0);
    add_line(out, line, response);
    return out;
}

double raman_line_nm(double excitation_nm, double shift_cm)
{
    const double wavenumber = 1e7 / excitation_nm - shift_cm;
    return 1e7 / wavenumber;
}

std::vector<SpectralLine> lines_from_modes(const std::vector<ResonantMode> &modes, double area)
{
    std::vector<SpectralLine> lines;
    for (const auto &m : modes) {
        const double lambda_nm = m.wavelength_um * 1e3;
        const double q = m.q_total();
        lines.push_back({lambda_nm, std::isfinite(q) ? lambda_nm / q : 0.0, area, m.family()});
    }
    return lines;
}

Spectrum synthesize_spectrum(const std::vector<SpectralLine> &lines, const SynthesisSpec &spec)
{
    const InstrumentResponse &r = spec.response;
    validate(r);
    for (const auto &l : lines)
        if (l.center_nm < r.lambda_start_nm || l.center_nm > r.lambda_end_nm())
            throw DomainError("line at " + std::to_string(l.center_nm) + " nm lies outside the spectral window");

    const std::size_t n = static_cast<std::size_t>(r.pixel_count);
    Spectrum s;
    s.lambda_nm.resize(n);
    s.intensity.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        s.lambda_nm[j] = r.pixel_center(static_cast<int>(j));

    if (spec.background.enabled) {
        const BackgroundSpec &b = spec.background;
        const double raman = raman_line_nm(b.excitation_nm, b.raman_shift_cm);
        // Gaussian features broadened by the response, then pixel-averaged.
        const auto gaussian = [&](double center, double fwhm, double height, std::size_t j) {
            const double w = std::hypot(fwhm, r.gaussian_fwhm_nm);
            const double a = r.lambda_start_nm + static_cast<double>(j) * r.pixel_pitch_nm - center;
            const double area = height * fwhm * kFwhmToSigma * std::sqrt(2.0 * kPi);
            return area * pixel_mean(a, a + r.pixel_pitch_nm, w, 0.0);
        };
        for (std::size_t j = 0; j < n; ++j) {
            const double lam = s.lambda_nm[j];
            const double lr = std::log(lam / b.sideband_peak_nm) / b.sideband_log_width;
            double v = b.sideband_height * std::exp(-0.5 * lr * lr);
            v += gaussian(b.zpl_center_nm, b.zpl_fwhm_nm, b.zpl_height, j);
            v += gaussian(raman, b.raman_fwhm_nm, b.raman_height, j);
            if (spec.fringe.amplitude != 0.0)
                v *= 1.0 + spec.fringe.amplitude *
                               std::cos(2.0 * kPi * lam / spec.fringe.period_nm + spec.fringe.phase);
            s.intensity[j] = v;
        }
    }
    for (const auto &l : lines)
        add_line(s.intensity, l, r);

    if (spec.noise.sigma > 0.0 || spec.noise.shot_gain > 0.0) {
        std::mt19937_64 rng(spec.seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto &v : s.intensity) {
            double var = spec.noise.sigma * spec.noise.sigma;
            if (spec.noise.shot_gain > 0.0)
                var += std::max(v, 0.0) / spec.noise.shot_gain;
            v += std::sqrt(var) * normal(rng);
        }
    }
    s.metadata["source"] = "synthetic";
    s.metadata["seed"] = std::to_string(spec.seed);
    s.metadata["lines"] = std::to_string(lines.size());
    return s;
}

Spectrum synthesize_spectrum(const std::vector<ResonantMode> &modes, const SynthesisSpec &spec, double line_area)
{
    return synthesize_spectrum(lines_from_modes(modes, line_area), spec);
}

std::vector<PeakCandidate> detect_peaks(const Spectrum &spectrum, const PeakDetectSpec &spec)
{
    validate(spectrum);
    const std::size_t n = spectrum.intensity.size();
    std::vector<PeakCandidate> out;
    if (n < 16)
        return out;
    const auto &y = spectrum.intensity;
    const double pitch = (spectrum.lambda_nm.back() - spectrum.lambda_nm.front()) / static_cast<double>(n - 1);

    // Rolling minimum, then a moving average of it.
    const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(0.5 * spec.background_window_nm / pitch));
    std::vector<double> low(n), bg(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t a = j > half ? j - half : 0;
        const std::size_t b = std::min(n - 1, j + half);
        low[j] = *std::min_element(y.begin() + static_cast<std::ptrdiff_t>(a), y.begin() + static_cast<std::ptrdiff_t>(b + 1));
    }
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        prefix[j + 1] = prefix[j] + low[j];
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t a = j > half ? j - half : 0;
        const std::size_t b = std::min(n - 1, j + half);
        bg[j] = (prefix[b + 1] - prefix[a]) / static_cast<double>(b - a + 1);
    }

    // Block-wise offset (median residual) and noise (MAD of differences).
    const std::size_t block = std::clamp<std::size_t>(static_cast<std::size_t>(spec.noise_window_nm / pitch), 16, n);
    const std::size_t blocks = std::max<std::size_t>(1, n / block);
    std::vector<double> centre(blocks), offset(blocks), sigma(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t a = b * block;
        const std::size_t e = b + 1 == blocks ? n : a + block;
        std::vector<double> res, diff;
        for (std::size_t j = a; j < e; ++j) {
            res.push_back(y[j] - bg[j]);
            if (j + 1 < n)
                diff.push_back(y[j + 1] - y[j]);
        }
        const double md = median(diff);
        for (auto &d : diff)
            d = std::abs(d - md);
        centre[b] = 0.5 * static_cast<double>(a + e - 1);
        offset[b] = median(res);
        sigma[b] = 1.4826 * median(diff) / std::sqrt(2.0);
    }
    const auto interp = [&](const std::vector<double> &v, double j) {
        if (blocks == 1 || j <= centre.front())
            return v.front();
        if (j >= centre.back())
            return v.back();
        const std::size_t b = std::min(blocks - 2, static_cast<std::size_t>((j - centre.front()) / static_cast<double>(block)));
        const double t = (j - centre[b]) / (centre[b + 1] - centre[b]);
        return (1.0 - t) * v[b] + t * v[b + 1];
    };
    std::vector<double> r(n), noise(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double jj = static_cast<double>(j);
        r[j] = y[j] - bg[j] - interp(offset, jj);
        noise[j] = std::max(interp(sigma, jj), std::numeric_limits<double>::min());
    }

    const double expected = std::sqrt(spec.expected_fwhm_nm * spec.expected_fwhm_nm +
                                      spec.pixel_pitch_nm * spec.pixel_pitch_nm * 8.0 * std::log(2.0) / 12.0);
    for (std::size_t j = 1; j + 1 < n; ++j) {
        if (!(r[j] > r[j - 1] && r[j] >= r[j + 1]))
            continue;
        const double k_sigma = spec.threshold * noise[j];
        if (r[j] < k_sigma)
            continue;
        // Prominence: lowest point on each side before a higher sample.
        double left_min = r[j], right_min = r[j];
        std::size_t l = j;
        while (l > 0 && r[l - 1] <= r[j]) {
            --l;
            left_min = std::min(left_min, r[l]);
        }
        std::size_t rr = j;
        while (rr + 1 < n && r[rr + 1] <= r[j]) {
            ++rr;
            right_min = std::min(right_min, r[rr]);
        }
        const double prominence = r[j] - std::max(left_min, right_min);
        if (prominence < k_sigma)
            continue;

        PeakCandidate c;
        c.index = j;
        c.height = r[j];
        c.prominence = prominence;
        c.noise = noise[j];
        // Vertex of the parabola through the three top samples.
        const double den = r[j - 1] - 2.0 * r[j] + r[j + 1];
        const double shift = den < 0.0 ? 0.5 * (r[j - 1] - r[j + 1]) / den : 0.0;
        c.lambda_nm = spectrum.lambda_nm[j] + std::clamp(shift, -0.5, 0.5) * pitch;
        const double level = r[j] - 0.5 * prominence;
        std::size_t a = j;
        while (a > 0 && r[a - 1] > level)
            --a;
        std::size_t b = j;
        while (b + 1 < n && r[b + 1] > level)
            ++b;
        double lo = spectrum.lambda_nm[a], hi = spectrum.lambda_nm[b];
        if (a > 0)
            lo -= pitch * (r[a] - level) / (r[a] - r[a - 1]);
        if (b + 1 < n)
            hi += pitch * (r[b] - level) / (r[b] - r[b + 1]);
        c.width_nm = hi - lo;
        c.core_width_nm = c.width_nm;
        if (r[j - 1] > 0.0 && r[j + 1] > 0.0) {
            const double curvature = std::log(r[j - 1]) - 2.0 * std::log(r[j]) + std::log(r[j + 1]);
            if (curvature < 0.0)
                c.core_width_nm = 2.0 * std::sqrt(2.0 * std::log(2.0)) * pitch / std::sqrt(-curvature);
        }
        c.unresolved = c.core_width_nm > spec.unresolved_ratio * expected;
        out.push_back(c);
    }
    return out;
}

namespace
{
// Residual functor for the line fit. Parameters: centre offset, area,
// Lorentzian FWHM (sign ignored), baseline, slope.
struct LineFunctor
{
    using Scalar = double;
    using InputType = Eigen::VectorXd;
    using ValueType = Eigen::VectorXd;
    using JacobianType = Eigen::MatrixXd;
    enum
    {
        InputsAtCompileTime = Eigen::Dynamic,
        ValuesAtCompileTime = Eigen::Dynamic
    };

    const std::vector<double> *x = nullptr;
    const std::vector<double> *y = nullptr;
    double c0 = 0.0;
    double xmid = 0.0;
    double pitch = 0.0;
    double gaussian = 0.0;

    int inputs() const { return 5; }
    int values() const { return static_cast<int>(x->size()); }

    double model(const Eigen::VectorXd &p, double xj) const
    {
        const double a = xj - 0.5 * pitch - (c0 + p(0));
        return p(1) * pixel_mean(a, a + pitch, gaussian, std::abs(p(2))) + p(3) + p(4) * (xj - xmid);
    }

    int operator()(const Eigen::VectorXd &p, Eigen::VectorXd &f) const
    {
        for (std::size_t j = 0; j < x->size(); ++j)
            f(static_cast<Eigen::Index>(j)) = model(p, (*x)[j]) - (*y)[j];
        return 0;
    }
};

struct FitOutcome
{
    Eigen::VectorXd p;
    Eigen::MatrixXd cov;
    double chi2 = 0.0;
    int iterations = 0;
};

FitOutcome run_fit(LineFunctor functor, Eigen::VectorXd p, int max_iterations)
{
    Eigen::NumericalDiff<LineFunctor, Eigen::Central> numdiff(functor);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LineFunctor, Eigen::Central>> lm(numdiff);
    lm.parameters.maxfev = max_iterations * 12;
    lm.parameters.xtol = 1e-14;
    lm.parameters.ftol = 1e-15;
    const auto status = lm.minimize(p);
    if (status == Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation ||
        status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters || !p.allFinite())
        throw NumericalError("line fit did not converge");

    FitOutcome out;
    p(2) = std::abs(p(2));
    out.p = p;
    out.iterations = static_cast<int>(lm.iter);
    const Eigen::Index n = functor.values();
    Eigen::VectorXd f(n);
    functor(p, f);
    out.chi2 = f.squaredNorm();

    // Jacobian at the optimum with steps tied to each parameter's scale.
    Eigen::MatrixXd jac(n, 5);
    const double width = voigt_fwhm(functor.gaussian, std::abs(p(2)));
    const std::array<double, 5> step{1e-5 * width, 1e-6 * std::max(std::abs(p(1)), 1e-300), 1e-5 * width,
                                     1e-6 * std::max(std::abs(p(3)), std::abs(p(1)) / width),
                                     1e-6 * std::max(std::abs(p(4)), std::abs(p(1)) / (width * width))};
    Eigen::VectorXd fp(n), fm(n);
    for (int k = 0; k < 5; ++k) {
        Eigen::VectorXd q = p;
        q(k) += step[static_cast<std::size_t>(k)];
        functor(q, fp);
        q(k) -= 2.0 * step[static_cast<std::size_t>(k)];
        // The model depends on |L|; straddling zero would fold the difference.
        if (k == 2 && p(2) >= 0.0 && q(2) < 0.0)
            q(2) = p(2);
        functor(q, fm);
        jac.col(k) = (fp - fm) / (p(k) + step[static_cast<std::size_t>(k)] - q(k));
    }
    const double dof = static_cast<double>(std::max<Eigen::Index>(1, n - 5));
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    out.cov = (out.chi2 / dof) * jtj.completeOrthogonalDecomposition().pseudoInverse();
    return out;
}

} // namespace

LineFit fit_resonance(const Spectrum &spectrum, double lo_nm, double hi_nm, const InstrumentResponse &response,
                      const FitOptions &options)
{
    validate(spectrum);
    validate(response);
    if (!(hi_nm > lo_nm))
        throw ValidationError("window", "fit window must satisfy lo < hi");
    if (!(options.fwhm_uncertainty_nm >= 0.0))
        throw ValidationError("fwhm_uncertainty_nm", "response uncertainty must be non-negative");
    std::vector<double> x, y;
    for (std::size_t j = 0; j < spectrum.lambda_nm.size(); ++j)
        if (spectrum.lambda_nm[j] >= lo_nm && spectrum.lambda_nm[j] <= hi_nm) {
            x.push_back(spectrum.lambda_nm[j]);
            y.push_back(spectrum.intensity[j]);
        }
    if (x.size() < 8)
        throw ValidationError("window", "fit window holds fewer than 8 samples");

    const double g = response.gaussian_fwhm_nm;
    LineFunctor functor;
    functor.x = &x;
    functor.y = &y;
    functor.pitch = response.pixel_pitch_nm;
    functor.gaussian = g;
    functor.xmid = 0.5 * (x.front() + x.back());

    // Starting point from the data.
    const std::size_t top = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    functor.c0 = x[top];
    const std::size_t edge = std::max<std::size_t>(2, x.size() / 10);
    double left = 0.0, right = 0.0;
    for (std::size_t j = 0; j < edge; ++j) {
        left += y[j] / static_cast<double>(edge);
        right += y[x.size() - 1 - j] / static_cast<double>(edge);
    }
    const double base = 0.5 * (left + right);
    const double peak = y[top] - base;
    std::size_t a = top, b = top;
    while (a > 0 && y[a - 1] - base > 0.5 * peak)
        --a;
    while (b + 1 < x.size() && y[b + 1] - base > 0.5 * peak)
        ++b;
    const double observed = std::max(x[b] - x[a] + response.pixel_pitch_nm, g);
    // Invert the Voigt width formula for L at fixed G.
    double l0 = 0.25 * g;
    if (observed > 1.05 * g) {
        const double qa = 0.5346 * 0.5346 - 0.2166;
        const double qb = -2.0 * 0.5346 * observed;
        const double qc = observed * observed - g * g;
        l0 = std::max(0.25 * g, (-qb - std::sqrt(std::max(0.0, qb * qb - 4.0 * qa * qc))) / (2.0 * qa));
    }
    Eigen::VectorXd p(5);
    p << 0.0, peak / voigt(0.0, g, l0), l0, base, (right - left) / (x.back() - x.front());

    FitOutcome fit = run_fit(functor, p, options.max_iterations);
    LineFit out;
    out.center_nm = functor.c0 + fit.p(0);
    out.area = fit.p(1);
    out.lorentz_fwhm_nm = std::abs(fit.p(2));
    out.baseline = fit.p(3) - fit.p(4) * functor.xmid;
    out.slope = fit.p(4);
    out.gaussian_fwhm_nm = g;
    out.fwhm_se_nm = std::sqrt(std::max(0.0, fit.cov(2, 2)));
    out.fwhm_ci_lower_nm = std::max(0.0, out.lorentz_fwhm_nm - options.confidence_z * out.fwhm_se_nm);
    out.fwhm_ci_upper_nm = out.lorentz_fwhm_nm + options.confidence_z * out.fwhm_se_nm;
    out.q = out.lorentz_fwhm_nm > 0.0 ? out.center_nm / out.lorentz_fwhm_nm : std::numeric_limits<double>::infinity();
    out.reduced_chi2 = fit.chi2 / static_cast<double>(x.size() - 5);
    out.iterations = fit.iterations;

    // Refit with the response narrowed and widened by its uncertainty. The
    // widened fit gives the smallest linewidth compatible with the data; if
    // its confidence interval reaches below the response uncertainty the line
    // is not resolved, and the narrowed fit bounds the linewidth from above.
    if (options.fwhm_uncertainty_nm > 0.0) {
        Eigen::VectorXd start = fit.p;
        start(2) = std::max(std::abs(fit.p(2)), 0.25 * g);
        LineFunctor narrow = functor;
        narrow.gaussian = std::max(g - options.fwhm_uncertainty_nm, 1e-6 * g);
        const FitOutcome wide = run_fit(narrow, start, options.max_iterations);
        LineFunctor broad = functor;
        broad.gaussian = g + options.fwhm_uncertainty_nm;
        const FitOutcome slim = run_fit(broad, start, options.max_iterations);
        const double lowest =
            std::abs(slim.p(2)) - options.confidence_z * std::sqrt(std::max(0.0, slim.cov(2, 2)));
        if (std::min(lowest, out.fwhm_ci_lower_nm) < options.fwhm_uncertainty_nm) {
            out.resolution_limited = true;
            const double upper = std::max(
                out.fwhm_ci_upper_nm, std::abs(wide.p(2)) + options.confidence_z * std::sqrt(std::max(0.0, wide.cov(2, 2))));
            out.q_lower_bound = out.center_nm / upper;
        }
    }
    return out;
}

std::vector<FamilyDispersion> dispersion_tables(const std::vector<FsrPoint> &points)
{
    std::map<std::string, FamilyDispersion> by_label;
    for (const auto &p : points) {
        auto &f = by_label[p.family];
        f.label = p.family;
        f.fsr_nm.emplace_back(p.wavelength_mid_um * 1e3, p.fsr_nm);
    }
    std::vector<FamilyDispersion> out;
    for (auto &[label, f] : by_label) {
        // Radial order: the first run of digits ("TM1" -> 1, "TE0v1" -> 0).
        const auto first = std::find_if(label.begin(), label.end(), [](unsigned char c) { return std::isdigit(c); });
        f.radial_order = first != label.end() ? std::stoi(std::string(first, label.end())) : 0;
        std::sort(f.fsr_nm.begin(), f.fsr_nm.end());
        out.push_back(std::move(f));
    }
    return out;
}

namespace
{
double fsr_at(const FamilyDispersion &f, double lambda)
{
    const auto &t = f.fsr_nm;
    if (t.size() == 1)
        return t.front().second;
    std::size_t j = 0;
    while (j + 2 < t.size() && lambda > t[j + 1].first)
        ++j;
    const double s = (lambda - t[j].first) / (t[j + 1].first - t[j].first);
    return t[j].second + s * (t[j + 1].second - t[j].second);
}

struct Chain
{
    std::vector<std::size_t> members; ///< indices into the sorted peak list
    double rms = 0.0;
    std::size_t family = 0;
};

} // namespace

std::vector<FamilyAssignment> assign_families(const std::vector<double> &peaks_nm,
                                              const std::vector<FamilyDispersion> &families,
                                              const AssignOptions &options)
{
    std::vector<FamilyAssignment> out(peaks_nm.size());
    for (std::size_t j = 0; j < peaks_nm.size(); ++j)
        out[j].lambda_nm = peaks_nm[j];
    if (peaks_nm.size() < 3 || families.empty())
        return out;
    for (const auto &f : families)
        if (f.fsr_nm.empty())
            throw ValidationError("families", "family " + f.label + " has an empty FSR table");

    std::vector<std::size_t> order(peaks_nm.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return peaks_nm[a] < peaks_nm[b]; });
    std::vector<double> lam(order.size());
    for (std::size_t j = 0; j < order.size(); ++j)
        lam[j] = peaks_nm[order[j]];
    std::vector<bool> used(lam.size(), false);

    // Nearest unused peak to `target`, or npos.
    const auto nearest = [&](double target) {
        const auto it = std::lower_bound(lam.begin(), lam.end(), target);
        std::size_t best = std::string::npos;
        double dist = std::numeric_limits<double>::infinity();
        const std::size_t pos = static_cast<std::size_t>(it - lam.begin());
        for (std::size_t j = pos > 3 ? pos - 3 : 0; j < std::min(lam.size(), pos + 3); ++j)
            if (!used[j] && std::abs(lam[j] - target) < dist) {
                dist = std::abs(lam[j] - target);
                best = j;
            }
        return best;
    };

    const auto grow = [&](std::size_t start, std::size_t fam) {
        Chain c;
        c.family = fam;
        c.members.push_back(start);
        double sum2 = 0.0;
        std::size_t cur = start;
        while (true) {
            std::size_t pick = std::string::npos;
            double pick_err = std::numeric_limits<double>::infinity();
            for (int k = 1; k <= options.max_skips + 1; ++k) {
                const double fsr = fsr_at(families[fam], lam[cur] + 0.5 * k * fsr_at(families[fam], lam[cur]));
                const std::size_t j = nearest(lam[cur] + k * fsr);
                if (j == std::string::npos || j <= cur)
                    continue;
                const double err = std::abs(lam[j] - lam[cur] - k * fsr) / (k * fsr);
                if (err > options.tolerance)
                    continue;
                // A close direct match wins; otherwise take the best of the skips.
                if (k == 1 && err < options.tolerance / 3.0) {
                    pick = j;
                    pick_err = err;
                    break;
                }
                if (err < pick_err) {
                    pick = j;
                    pick_err = err;
                }
            }
            if (pick == std::string::npos)
                break;
            c.members.push_back(pick);
            sum2 += pick_err * pick_err;
            cur = pick;
        }
        c.rms = c.members.size() > 1 ? std::sqrt(sum2 / static_cast<double>(c.members.size() - 1)) : 0.0;
        return c;
    };

    int chain_id = 0;
    while (true) {
        std::optional<Chain> best;
        for (std::size_t fam = 0; fam < families.size(); ++fam)
            for (std::size_t s = 0; s < lam.size(); ++s) {
                if (used[s])
                    continue;
                Chain c = grow(s, fam);
                if (static_cast<int>(c.members.size()) < options.min_chain)
                    continue;
                const auto better = [&](const Chain &a, const Chain &b) {
                    if (a.members.size() != b.members.size())
                        return a.members.size() > b.members.size();
                    if (a.rms != b.rms)
                        return a.rms < b.rms;
                    return families[a.family].radial_order < families[b.family].radial_order;
                };
                if (!best || better(c, *best))
                    best = std::move(c);
            }
        if (!best)
            break;
        for (std::size_t j : best->members) {
            used[j] = true;
            out[order[j]].label = families[best->family].label;
            out[order[j]].chain = chain_id;
        }
        ++chain_id;
    }
    return out;
}

void write_spectrum_csv(const Spectrum &spectrum, const std::string &path)
{
    validate(spectrum);
    std::ofstream os(path);
    if (!os)
        throw ValidationError("path", "cannot write " + path);
    os << "lambda_nm,intensity\n";
    os.precision(12);
    for (std::size_t j = 0; j < spectrum.lambda_nm.size(); ++j)
        os << spectrum.lambda_nm[j] << ',' << spectrum.intensity[j] << '\n';
}

Spectrum read_spectrum_csv(const std::string &path)
{
    std::ifstream is(path);
    if (!is)
        throw ValidationError("path", "cannot read " + path);
    Spectrum s;
    std::string line;
    std::size_t number = 0;
    while (std::getline(is, line)) {
        ++number;
        if (line.empty() || line[0] == '#')
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        double a, b;
        if (!(ls >> a >> b)) {
            if (s.lambda_nm.empty())
                continue; // header
            throw ValidationError("path", path + ":" + std::to_string(number) + ": expected two numbers");
        }
        s.lambda_nm.push_back(a);
        s.intensity.push_back(b);
    }
    s.metadata["source"] = path;
    validate(s);
    return s;
}

} // namespace wgmcav::spectra
