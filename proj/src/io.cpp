#include "wgmcav/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "wgmcav/errors.hpp"

namespace wgmcav::io
{
namespace
{
constexpr char kProfileMagic[8] = {'W', 'G', 'M', 'P', 'R', 'O', 'F', '1'};

json number_or_text(double x)
{
    if (std::isfinite(x))
        return x;
    return format_number(x);
}

double number_from(const json &j)
{
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf")
            return std::numeric_limits<double>::infinity();
        if (s == "-inf")
            return -std::numeric_limits<double>::infinity();
        if (s == "nan")
            return std::numeric_limits<double>::quiet_NaN();
    }
    throw ValidationError("number", "expected a number, got " + j.dump());
}

std::string optional_text(const std::optional<double> &x) { return x ? format_number(*x) : std::string(); }

} // namespace

std::string format_number(double x)
{
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

json to_json(const ResonantMode &mode)
{
    json j;
    j["m"] = mode.m;
    j["family"] = mode.family();
    j["polarization"] = to_string(mode.polarization);
    j["radial_order"] = mode.radial_order;
    j["vertical_order"] = mode.vertical_order;
    j["wavelength_um"] = mode.wavelength_um;
    j["q_rad"] = number_or_text(mode.q_rad);
    j["q_i"] = mode.q_i ? number_or_text(*mode.q_i) : json(nullptr);
    j["q_total"] = number_or_text(mode.q_total());
    j["mode_volume"] = mode.mode_volume;
    j["standing_mode_volume"] = mode.standing_mode_volume();
    j["eta"] = mode.eta;
    j["r_o"] = mode.r_o;
    j["z_o"] = mode.z_o;
    j["standing_wave"] = mode.standing_wave;
    j["sidewall_fraction"] = mode.sidewall_fraction ? json(*mode.sidewall_fraction) : json(nullptr);
    return j;
}

ResonantMode mode_from_json(const json &j)
{
    ResonantMode mode;
    try {
        mode.m = j.at("m").get<int>();
        mode.polarization = polarization_from_string(j.at("polarization").get<std::string>());
        mode.radial_order = j.value("radial_order", 0);
        mode.vertical_order = j.value("vertical_order", 0);
        mode.wavelength_um = number_from(j.at("wavelength_um"));
        mode.q_rad = number_from(j.at("q_rad"));
        if (j.contains("q_i") && !j.at("q_i").is_null())
            mode.q_i = number_from(j.at("q_i"));
        mode.mode_volume = j.contains("mode_volume") ? number_from(j.at("mode_volume")) : 0.0;
        mode.eta = j.contains("eta") ? number_from(j.at("eta")) : 0.0;
        mode.r_o = j.value("r_o", 0.0);
        mode.z_o = j.value("z_o", 0.0);
        mode.standing_wave = j.value("standing_wave", false);
        if (j.contains("sidewall_fraction") && !j.at("sidewall_fraction").is_null())
            mode.sidewall_fraction = number_from(j.at("sidewall_fraction"));
    } catch (const json::exception &e) {
        throw ValidationError("mode", std::string("malformed mode record: ") + e.what());
    }
    return mode;
}

json to_json(const spectra::LineFit &fit)
{
    json j;
    j["center_nm"] = fit.center_nm;
    j["area"] = fit.area;
    j["lorentz_fwhm_nm"] = fit.lorentz_fwhm_nm;
    j["fwhm_ci_nm"] = {fit.fwhm_ci_lower_nm, fit.fwhm_ci_upper_nm};
    j["fwhm_se_nm"] = fit.fwhm_se_nm;
    j["gaussian_fwhm_nm"] = fit.gaussian_fwhm_nm;
    j["baseline"] = fit.baseline;
    j["slope"] = fit.slope;
    j["q"] = number_or_text(fit.q);
    j["q_lower_bound"] = fit.q_lower_bound ? number_or_text(*fit.q_lower_bound) : json(nullptr);
    j["resolution_limited"] = fit.resolution_limited;
    j["reduced_chi2"] = fit.reduced_chi2;
    j["iterations"] = fit.iterations;
    return j;
}

json to_json(const CqedParams &params)
{
    return json{{"g_ghz", params.g_ghz}, {"kappa_ghz", params.kappa_ghz}, {"purcell", params.purcell},
                {"beta", params.beta}};
}

json to_json(const FsrPoint &point)
{
    return json{{"family", point.family},
                {"lambda_mid_um", point.wavelength_mid_um},
                {"fsr_nm", point.fsr_nm},
                {"m_lower", point.m_lower}};
}

void write_modes_csv(std::ostream &os, const std::vector<ResonantMode> &modes)
{
    os << "m,family,polarization,radial_order,wavelength_um,q_rad,q_i,q_total,mode_volume,standing_mode_volume,eta,"
          "r_o_um,z_o_um,standing_wave,sidewall_fraction\n";
    for (const ResonantMode &m : modes) {
        os << m.m << ',' << m.family() << ',' << to_string(m.polarization) << ',' << m.radial_order << ','
           << format_number(m.wavelength_um) << ',' << format_number(m.q_rad) << ',' << optional_text(m.q_i) << ','
           << format_number(m.q_total()) << ',' << format_number(m.mode_volume) << ','
           << format_number(m.standing_mode_volume()) << ',' << format_number(m.eta) << ',' << format_number(m.r_o)
           << ',' << format_number(m.z_o) << ',' << (m.standing_wave ? 1 : 0) << ','
           << optional_text(m.sidewall_fraction) << '\n';
    }
}

void write_jsonl(std::ostream &os, const std::vector<json> &records)
{
    for (const json &r : records)
        os << r.dump() << '\n';
}

void write_modes_jsonl(std::ostream &os, const std::vector<ResonantMode> &modes)
{
    for (const ResonantMode &m : modes)
        os << to_json(m).dump() << '\n';
}

std::vector<ResonantMode> read_modes_jsonl(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("path", "cannot open " + path);
    std::vector<ResonantMode> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            out.push_back(mode_from_json(json::parse(line)));
        } catch (const json::parse_error &e) {
            throw ValidationError("path", path + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

void write_fsr_csv(std::ostream &os, const std::vector<FsrPoint> &points)
{
    os << "lambda_mid_nm,fsr_nm,family,m_lower\n";
    for (const FsrPoint &p : points)
        os << format_number(p.wavelength_mid_um * 1e3) << ',' << format_number(p.fsr_nm) << ',' << p.family << ','
           << p.m_lower << '\n';
}

void write_time_series_csv(std::ostream &os, const TimeSeries &series)
{
    os << "# probe=" << series.probe_id << " component=" << to_string(series.component) << '\n';
    os << "t_ps,re,im\n";
    for (std::size_t j = 0; j < series.samples.size(); ++j)
        os << format_number(series.t0_ps + static_cast<double>(j) * series.dt_ps) << ','
           << format_number(series.samples[j].real()) << ',' << format_number(series.samples[j].imag()) << '\n';
}

void write_profile_csv(std::ostream &os, const ModeProfile &p)
{
    os << "# wavelength_um=" << format_number(p.wavelength_um) << " m=" << p.m << " normalization=" << p.normalization
       << '\n';
    os << "r_um,z_um,er_re,er_im,ep_re,ep_im,ez_re,ez_im\n";
    for (Eigen::Index k = 0; k < p.nz(); ++k)
        for (Eigen::Index i = 0; i < p.nr(); ++i)
            os << format_number(p.r_center(i)) << ',' << format_number(p.z_center(k)) << ','
               << format_number(p.er(i, k).real()) << ',' << format_number(p.er(i, k).imag()) << ','
               << format_number(p.ep(i, k).real()) << ',' << format_number(p.ep(i, k).imag()) << ','
               << format_number(p.ez(i, k).real()) << ',' << format_number(p.ez(i, k).imag()) << '\n';
}

void write_profile_binary(const std::string &path, const ModeProfile &p)
{
    static_assert(std::endian::native == std::endian::little, "profile files are little-endian");
    const json header = {{"nr", p.nr()},
                         {"nz", p.nz()},
                         {"dr_um", p.dr},
                         {"dz_um", p.dz},
                         {"r_min_um", p.r_min},
                         {"z_min_um", p.z_min},
                         {"wavelength_um", p.wavelength_um},
                         {"m", p.m},
                         {"normalization", p.normalization},
                         {"components", {"er", "ep", "ez"}},
                         {"dtype", "complex128"},
                         {"order", "column-major (r fastest)"}};
    const std::string text = header.dump();
    const std::filesystem::path fs_path(path);
    if (fs_path.has_parent_path())
        std::filesystem::create_directories(fs_path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("path", "cannot write " + path);
    out.write(kProfileMagic, sizeof kProfileMagic);
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char *>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Eigen::ArrayXXcd *a : {&p.er, &p.ep, &p.ez})
        out.write(reinterpret_cast<const char *>(a->data()),
                  static_cast<std::streamsize>(a->size() * sizeof(std::complex<double>)));
}

ModeProfile read_profile_binary(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("path", "cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || !std::equal(magic, magic + 8, kProfileMagic))
        throw ValidationError("path", path + " is not a profile file");
    std::uint64_t length = 0;
    in.read(reinterpret_cast<char *>(&length), sizeof length);
    if (!in || length > (1u << 20))
        throw ValidationError("path", path + " has a corrupt header");
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    const json header = json::parse(text);
    ModeProfile p;
    const Eigen::Index nr = header.at("nr").get<Eigen::Index>();
    const Eigen::Index nz = header.at("nz").get<Eigen::Index>();
    p.dr = header.at("dr_um").get<double>();
    p.dz = header.at("dz_um").get<double>();
    p.r_min = header.at("r_min_um").get<double>();
    p.z_min = header.at("z_min_um").get<double>();
    p.wavelength_um = header.at("wavelength_um").get<double>();
    p.m = header.at("m").get<int>();
    p.normalization = header.at("normalization").get<std::string>();
    for (Eigen::ArrayXXcd *a : {&p.er, &p.ep, &p.ez}) {
        a->resize(nr, nz);
        in.read(reinterpret_cast<char *>(a->data()), static_cast<std::streamsize>(a->size() * sizeof(std::complex<double>)));
    }
    if (!in)
        throw ValidationError("path", path + " is truncated");
    return p;
}

void write_file(const std::string &path, const std::string &content)
{
    const std::filesystem::path fs_path(path);
    if (fs_path.has_parent_path())
        std::filesystem::create_directories(fs_path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ValidationError("path", "cannot write " + path);
    out << content;
}

std::string read_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("path", "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace wgmcav::io
