#ifndef WGMCAV_JOB_HPP
#define WGMCAV_JOB_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wgmcav/cqed.hpp"
#include "wgmcav/device.hpp"
#include "wgmcav/solver.hpp"
#include "wgmcav/spectra.hpp"

namespace wgmcav::app
{
enum class JobKind
{
    simulate,
    sweep,
    fit,
    cqed,
    report
};

const char *to_string(JobKind kind);
JobKind job_kind_from_string(const std::string &name);

/// Raised for malformed or invalid configuration. `where` is either
/// "line L, column C" (syntax) or the dotted path of the offending key.
class ConfigError : public ValidationError
{
public:
    ConfigError(const std::string &where, const std::string &message)
        : ValidationError(where, where + ": " + message)
    {
    }
};

struct MaterialsConfig
{
    double guiding_index = 3.25;
    double diamond_index = 2.42;
    std::optional<std::string> guiding_dispersion; ///< CSV path, resolved against the config directory
    Interpolation interpolation = Interpolation::natural_cubic;
};

struct SimulateSection
{
    int m = 56;
    std::vector<Polarization> polarizations{Polarization::te};
    bool export_profiles = false;
    bool export_series = false;
};

/// Fig. 4(c)-style scan: every (h, polarization, m, λ window) combination
/// is one engine run.
struct SweepSection
{
    int m_lo = 0;
    int m_hi = -1;
    std::vector<double> h_values;            ///< empty: geometry.h only
    std::vector<Polarization> polarizations{Polarization::te};
    std::vector<std::string> families;      ///< keep only these labels; empty keeps all
    double window_nm = 0.0;                  ///< split [λ_lo, λ_hi] into runs of this width; 0 = one run
};

/// Synthetic spectrum built from a mode list before fitting.
struct SynthesisRecipe
{
    std::string modes_path;                 ///< JSON lines of ResonantMode
    spectra::BackgroundSpec background;
    spectra::FringeSpec fringe;
    spectra::NoiseSpec noise;
    double line_area = 1.0;
};

struct FitSection
{
    std::optional<std::string> spectrum_path;
    std::optional<SynthesisRecipe> synthesize;
    spectra::PeakDetectSpec detect;
    spectra::FitOptions options;
    double window_half_width_nm = 0.15;
    std::optional<std::string> dispersion_modes; ///< simulated families for assign_families
    spectra::AssignOptions assign;
};

struct CqedSection
{
    std::optional<std::string> modes_path;
    std::vector<ResonantMode> modes;
    EmitterModel emitter = nv_center();
    double n_emit = 2.42;
    double n_max_loc = 3.25;
};

struct ReportSection
{
    std::vector<std::string> manifests;
    double q_i = 9000.0;
    EmitterModel emitter = nv_center();
};

struct Job
{
    JobKind kind = JobKind::simulate;
    std::string out_dir = "out";
    int workers = 1;
    std::uint64_t seed = 0;
    std::string base_dir = "."; ///< directory of the config file

    DeviceGeometry geometry;
    MaterialsConfig materials;
    SolverOptions solver;
    spectra::InstrumentResponse response;

    SimulateSection simulate;
    SweepSection sweep;
    FitSection fit;
    CqedSection cqed;
    ReportSection report;

    /// The validated input as JSON with defaults filled, used for hashing.
    nlohmann::json canonical;
};

/// Parses a JSON config (comments allowed). Unknown keys, wrong types and
/// invalid values raise ConfigError naming the key; syntax errors give
/// line and column. `kind_hint` fills the job kind when the file has none
/// and must agree with it otherwise.
Job parse_config_text(const std::string &text, std::optional<JobKind> kind_hint = std::nullopt,
                      const std::string &base_dir = ".");
Job parse_config(const std::string &path, std::optional<JobKind> kind_hint = std::nullopt);

MaterialSet build_materials(const MaterialsConfig &config, const std::string &base_dir);

/// Resolves a relative path against `base_dir`.
std::string resolve_path(const std::string &path, const std::string &base_dir);

} // namespace wgmcav::app

#endif // WGMCAV_JOB_HPP
