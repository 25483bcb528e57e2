#include "wgmcav/job.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace wgmcav::app
{
using nlohmann::json;

namespace
{
const char *type_name(const json &j) { return j.type_name(); }

/// Reads keys from one JSON object and remembers which ones were consumed so
/// that leftovers can be rejected.
class Section
{
public:
    Section(const json &node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, std::string("expected an object, got ") + type_name(node_));
    }

    std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    const json *find(const std::string &key)
    {
        used_.insert(key);
        auto it = node_.find(key);
        if (it == node_.end() || it->is_null())
            return nullptr;
        return &*it;
    }

    bool has(const std::string &key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    double number(const std::string &key, double fallback)
    {
        const json *j = find(key);
        if (!j)
            return fallback;
        if (!j->is_number())
            throw ConfigError(key_path(key), std::string("expected a number, got ") + type_name(*j));
        return j->get<double>();
    }

    std::optional<double> optional_number(const std::string &key)
    {
        if (!has(key)) {
            used_.insert(key);
            return std::nullopt;
        }
        return number(key, 0.0);
    }

    long integer(const std::string &key, long fallback)
    {
        const json *j = find(key);
        if (!j)
            return fallback;
        if (!j->is_number_integer())
            throw ConfigError(key_path(key), std::string("expected an integer, got ") + type_name(*j));
        return j->get<long>();
    }

    bool boolean(const std::string &key, bool fallback)
    {
        const json *j = find(key);
        if (!j)
            return fallback;
        if (!j->is_boolean())
            throw ConfigError(key_path(key), std::string("expected true or false, got ") + type_name(*j));
        return j->get<bool>();
    }

    std::optional<std::string> text(const std::string &key)
    {
        const json *j = find(key);
        if (!j)
            return std::nullopt;
        if (!j->is_string())
            throw ConfigError(key_path(key), std::string("expected a string, got ") + type_name(*j));
        return j->get<std::string>();
    }

    std::vector<double> numbers(const std::string &key)
    {
        const json *j = find(key);
        if (!j)
            return {};
        if (!j->is_array())
            throw ConfigError(key_path(key), std::string("expected an array, got ") + type_name(*j));
        std::vector<double> out;
        for (const json &x : *j) {
            if (!x.is_number())
                throw ConfigError(key_path(key), "array entries must be numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    std::vector<std::string> texts(const std::string &key)
    {
        const json *j = find(key);
        if (!j)
            return {};
        if (!j->is_array())
            throw ConfigError(key_path(key), std::string("expected an array, got ") + type_name(*j));
        std::vector<std::string> out;
        for (const json &x : *j) {
            if (!x.is_string())
                throw ConfigError(key_path(key), "array entries must be strings");
            out.push_back(x.get<std::string>());
        }
        return out;
    }

    std::optional<Section> child(const std::string &key)
    {
        const json *j = find(key);
        if (!j)
            return std::nullopt;
        return Section(*j, key_path(key));
    }

    /// Rejects keys that were never read.
    void finish() const
    {
        for (auto it = node_.begin(); it != node_.end(); ++it)
            if (!used_.contains(it.key()))
                throw ConfigError(key_path(it.key()), "unknown key '" + it.key() + "'");
    }

    const json &node() const { return node_; }

private:
    const json &node_;
    std::string path_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string &where, const std::string &message)
{
    if (!ok)
        throw ConfigError(where, message);
}

std::vector<Polarization> polarizations(Section &s, const std::string &key, std::vector<Polarization> fallback)
{
    if (!s.has(key)) {
        s.find(key);
        return fallback;
    }
    std::vector<Polarization> out;
    for (const std::string &name : s.texts(key)) {
        Polarization p;
        try {
            p = polarization_from_string(name);
        } catch (const ValidationError &e) {
            throw ConfigError(s.key_path(key), e.what());
        }
        require(p != Polarization::hybrid, s.key_path(key), "only TE and TM excitations exist");
        out.push_back(p);
    }
    require(!out.empty(), s.key_path(key), "at least one polarization is required");
    return out;
}

std::pair<int, int> line_column(const std::string &text, std::size_t byte)
{
    int line = 1, column = 1;
    for (std::size_t j = 0; j + 1 < byte && j < text.size(); ++j) {
        if (text[j] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

void parse_geometry(Section s, Job &job)
{
    std::map<std::string, double> raw;
    for (const char *key : {"d", "t", "h", "pedestal_undercut", "substrate_extent"})
        if (s.has(key))
            raw[key] = s.number(key, 0.0);
    s.finish();
    try {
        job.geometry = build_geometry(raw);
    } catch (const ValidationError &e) {
        throw ConfigError(s.key_path(e.field()), e.what());
    }
}

void parse_materials(Section s, Job &job)
{
    MaterialsConfig &m = job.materials;
    m.guiding_index = s.number("guiding_index", m.guiding_index);
    m.diamond_index = s.number("diamond_index", m.diamond_index);
    m.guiding_dispersion = s.text("guiding_dispersion");
    if (const auto interp = s.text("interpolation")) {
        if (*interp == "linear")
            m.interpolation = Interpolation::linear;
        else if (*interp == "natural_cubic")
            m.interpolation = Interpolation::natural_cubic;
        else
            throw ConfigError(s.key_path("interpolation"), "expected 'linear' or 'natural_cubic'");
    }
    s.finish();
    require(m.guiding_index >= 1.0, s.key_path("guiding_index"), "index must be at least 1");
    require(m.diamond_index >= 1.0, s.key_path("diamond_index"), "index must be at least 1");
}

void parse_grid(Section s, Job &job)
{
    GridSpec &g = job.solver.grid;
    g.dr = s.number("dr", g.dr);
    g.dz = s.number("dz", g.dz);
    g.r_min = s.optional_number("r_min");
    g.pad_r = s.number("pad_r", g.pad_r);
    g.pad_top = s.number("pad_top", g.pad_top);
    g.pml_cells = static_cast<int>(s.integer("pml_cells", g.pml_cells));
    g.subpixel = s.boolean("subpixel", g.subpixel);
    s.finish();
    require(g.dr > 0.0, s.key_path("dr"), "must be positive");
    require(g.dz > 0.0, s.key_path("dz"), "must be positive");
    require(g.pad_r >= 0.0, s.key_path("pad_r"), "must be non-negative");
    require(g.pad_top >= 0.0, s.key_path("pad_top"), "must be non-negative");
    require(g.pml_cells >= 1, s.key_path("pml_cells"), "must be at least 1");
}

void parse_solver(Section s, Job &job)
{
    SolverOptions &o = job.solver;
    o.lambda_ref_um = s.number("lambda_ref_um", o.lambda_ref_um);
    if (s.has("lambda_um")) {
        const std::vector<double> w = s.numbers("lambda_um");
        require(w.size() == 2 && w[0] > 0.0 && w[1] > w[0], s.key_path("lambda_um"),
                "expected [lo, hi] with 0 < lo < hi");
        o.lambda_lo_um = w[0];
        o.lambda_hi_um = w[1];
    } else {
        s.find("lambda_um");
    }
    o.steps_after_source = s.integer("steps", o.steps_after_source);
    o.courant = s.number("courant", o.courant);
    o.residual_threshold = s.number("residual_threshold", o.residual_threshold);
    o.compute_profiles = s.boolean("profiles", o.compute_profiles);
    o.standing_wave = s.boolean("standing_wave", o.standing_wave);
    o.q_i = s.optional_number("q_i");
    s.finish();
    require(o.lambda_ref_um > 0.0, s.key_path("lambda_ref_um"), "must be positive");
    require(o.steps_after_source >= 256, s.key_path("steps"), "must be at least 256");
    require(o.courant > 0.0 && o.courant < 1.0, s.key_path("courant"), "must lie in (0, 1)");
    require(!o.q_i || *o.q_i > 0.0, s.key_path("q_i"), "must be positive");
}

void parse_response(Section s, Job &job)
{
    spectra::InstrumentResponse &r = job.response;
    r.gaussian_fwhm_nm = s.number("gaussian_fwhm_nm", r.gaussian_fwhm_nm);
    r.pixel_pitch_nm = s.number("pixel_pitch_nm", r.pixel_pitch_nm);
    r.pixel_count = static_cast<int>(s.integer("pixel_count", r.pixel_count));
    r.lambda_start_nm = s.number("lambda_start_nm", r.lambda_start_nm);
    s.finish();
    require(r.gaussian_fwhm_nm > 0.0, s.key_path("gaussian_fwhm_nm"), "must be positive");
    require(r.pixel_pitch_nm > 0.0, s.key_path("pixel_pitch_nm"), "must be positive");
    require(r.pixel_count >= 16, s.key_path("pixel_count"), "must be at least 16");
}

void parse_simulate(Section s, Job &job)
{
    SimulateSection &sim = job.simulate;
    sim.m = static_cast<int>(s.integer("m", sim.m));
    sim.polarizations = polarizations(s, "polarizations", sim.polarizations);
    sim.export_profiles = s.boolean("export_profiles", sim.export_profiles);
    sim.export_series = s.boolean("export_series", sim.export_series);
    s.finish();
    require(sim.m >= 0, s.key_path("m"), "must be non-negative");
}

void parse_sweep(Section s, Job &job)
{
    SweepSection &sw = job.sweep;
    if (s.has("m")) {
        const std::vector<double> m = s.numbers("m");
        require(m.size() == 2 && m[0] >= 0.0 && m[1] >= m[0] && m[0] == static_cast<int>(m[0]) &&
                    m[1] == static_cast<int>(m[1]),
                s.key_path("m"), "expected [m_lo, m_hi] integers with 0 <= m_lo <= m_hi");
        sw.m_lo = static_cast<int>(m[0]);
        sw.m_hi = static_cast<int>(m[1]);
    } else {
        s.find("m");
    }
    sw.h_values = s.numbers("h");
    for (double h : sw.h_values)
        require(h >= 0.0, s.key_path("h"), "etch depths must be non-negative");
    sw.polarizations = polarizations(s, "polarizations", sw.polarizations);
    sw.families = s.texts("families");
    sw.window_nm = s.number("window_nm", sw.window_nm);
    s.finish();
    require(sw.window_nm >= 0.0, s.key_path("window_nm"), "must be non-negative");
}

spectra::BackgroundSpec parse_background(Section s)
{
    spectra::BackgroundSpec b;
    b.enabled = s.boolean("enabled", b.enabled);
    b.zpl_height = s.number("zpl_height", b.zpl_height);
    b.sideband_height = s.number("sideband_height", b.sideband_height);
    b.raman_height = s.number("raman_height", b.raman_height);
    b.excitation_nm = s.number("excitation_nm", b.excitation_nm);
    s.finish();
    return b;
}

void parse_fit(Section s, Job &job)
{
    FitSection &f = job.fit;
    f.spectrum_path = s.text("spectrum");
    if (auto syn = s.child("synthesize")) {
        SynthesisRecipe r;
        const auto modes = syn->text("modes");
        require(modes.has_value(), syn->key_path("modes"), "a mode list is required");
        r.modes_path = *modes;
        if (auto bg = syn->child("background"))
            r.background = parse_background(*bg);
        r.fringe.amplitude = syn->number("fringe_amplitude", r.fringe.amplitude);
        r.fringe.period_nm = syn->number("fringe_period_nm", r.fringe.period_nm);
        r.noise.sigma = syn->number("noise_sigma", r.noise.sigma);
        r.noise.shot_gain = syn->number("shot_gain", r.noise.shot_gain);
        r.line_area = syn->number("line_area", r.line_area);
        syn->finish();
        require(r.noise.sigma >= 0.0, syn->key_path("noise_sigma"), "must be non-negative");
        f.synthesize = r;
    }
    f.detect.threshold = s.number("threshold", f.detect.threshold);
    f.detect.background_window_nm = s.number("background_window_nm", f.detect.background_window_nm);
    f.options.fwhm_uncertainty_nm = s.number("fwhm_uncertainty_nm", f.options.fwhm_uncertainty_nm);
    f.window_half_width_nm = s.number("window_half_width_nm", f.window_half_width_nm);
    f.dispersion_modes = s.text("dispersion_modes");
    f.assign.tolerance = s.number("assign_tolerance", f.assign.tolerance);
    s.finish();
    require(f.spectrum_path.has_value() != f.synthesize.has_value(), "fit",
            "exactly one of 'spectrum' and 'synthesize' is required");
    require(f.window_half_width_nm > 0.0, s.key_path("window_half_width_nm"), "must be positive");
    require(f.options.fwhm_uncertainty_nm >= 0.0, s.key_path("fwhm_uncertainty_nm"), "must be non-negative");
}

ResonantMode parse_inline_mode(Section s)
{
    ResonantMode m;
    m.m = static_cast<int>(s.integer("m", 0));
    if (const auto p = s.text("polarization"))
        m.polarization = polarization_from_string(*p);
    m.radial_order = static_cast<int>(s.integer("radial_order", 0));
    m.vertical_order = static_cast<int>(s.integer("vertical_order", 0));
    m.wavelength_um = s.number("wavelength_um", 0.637);
    m.q_rad = s.number("q", 0.0);
    m.q_i = s.optional_number("q_i");
    m.mode_volume = s.number("mode_volume", 0.0);
    m.eta = s.number("eta", 0.0);
    m.standing_wave = s.boolean("standing_wave", false);
    s.finish();
    require(m.q_rad > 0.0, s.key_path("q"), "must be positive");
    require(m.mode_volume > 0.0, s.key_path("mode_volume"), "must be positive");
    require(m.eta >= 0.0, s.key_path("eta"), "must be non-negative");
    require(m.wavelength_um > 0.0, s.key_path("wavelength_um"), "must be positive");
    return m;
}

EmitterModel parse_emitter(Section s)
{
    EmitterModel e = nv_center();
    e.gamma_ghz = s.number("gamma_ghz", e.gamma_ghz);
    e.gamma_zpl_ghz = s.number("gamma_zpl_ghz", e.gamma_zpl_ghz);
    e.lambda_zpl_um = s.number("lambda_zpl_um", e.lambda_zpl_um);
    e.depth_um = s.number("depth_um", e.depth_um);
    s.finish();
    try {
        validate(e);
    } catch (const ValidationError &err) {
        throw ConfigError(s.key_path(err.field()), err.what());
    }
    return e;
}

void parse_cqed(Section s, Job &job)
{
    CqedSection &c = job.cqed;
    c.modes_path = s.text("modes_file");
    if (const json *list = s.find("modes")) {
        require(list->is_array(), s.key_path("modes"), "expected an array of mode objects");
        for (std::size_t j = 0; j < list->size(); ++j)
            c.modes.push_back(parse_inline_mode(Section((*list)[j], s.key_path("modes") + "[" + std::to_string(j) + "]")));
    }
    if (auto e = s.child("emitter"))
        c.emitter = parse_emitter(*e);
    c.n_emit = s.number("n_emit", c.n_emit);
    c.n_max_loc = s.number("n_max_loc", c.n_max_loc);
    s.finish();
    require(c.n_emit >= 1.0, s.key_path("n_emit"), "must be at least 1");
    require(c.n_max_loc >= 1.0, s.key_path("n_max_loc"), "must be at least 1");
}

void parse_report(Section s, Job &job)
{
    ReportSection &r = job.report;
    r.manifests = s.texts("manifests");
    r.q_i = s.number("q_i", r.q_i);
    if (auto e = s.child("emitter"))
        r.emitter = parse_emitter(*e);
    s.finish();
    require(r.q_i > 0.0, s.key_path("q_i"), "must be positive");
}

json canonical(const Job &job)
{
    const auto pols = [](const std::vector<Polarization> &ps) {
        json a = json::array();
        for (Polarization p : ps)
            a.push_back(to_string(p));
        return a;
    };
    json j;
    j["job"] = to_string(job.kind);
    j["seed"] = job.seed;
    j["geometry"] = {{"d", job.geometry.disk_diameter},
                     {"t", job.geometry.layer_thickness},
                     {"h", job.geometry.etch_depth},
                     {"pedestal_undercut", job.geometry.pedestal_undercut},
                     {"substrate_extent", job.geometry.substrate_extent}};
    j["materials"] = {{"guiding_index", job.materials.guiding_index},
                      {"diamond_index", job.materials.diamond_index},
                      {"guiding_dispersion", job.materials.guiding_dispersion ? json(*job.materials.guiding_dispersion) : json(nullptr)},
                      {"interpolation", job.materials.interpolation == Interpolation::linear ? "linear" : "natural_cubic"}};
    const GridSpec &g = job.solver.grid;
    j["grid"] = {{"dr", g.dr},           {"dz", g.dz},           {"r_min", g.r_min ? json(*g.r_min) : json(nullptr)},
                 {"pad_r", g.pad_r},     {"pad_top", g.pad_top}, {"pml_cells", g.pml_cells},
                 {"subpixel", g.subpixel}};
    const SolverOptions &o = job.solver;
    j["solver"] = {{"lambda_ref_um", o.lambda_ref_um},
                   {"lambda_um", {o.lambda_lo_um, o.lambda_hi_um}},
                   {"steps", o.steps_after_source},
                   {"courant", o.courant},
                   {"residual_threshold", o.residual_threshold},
                   {"profiles", o.compute_profiles},
                   {"standing_wave", o.standing_wave},
                   {"q_i", o.q_i ? json(*o.q_i) : json(nullptr)}};
    const spectra::InstrumentResponse &r = job.response;
    j["response"] = {{"gaussian_fwhm_nm", r.gaussian_fwhm_nm},
                     {"pixel_pitch_nm", r.pixel_pitch_nm},
                     {"pixel_count", r.pixel_count},
                     {"lambda_start_nm", r.lambda_start_nm}};
    switch (job.kind) {
    case JobKind::simulate:
        j["simulate"] = {{"m", job.simulate.m},
                         {"polarizations", pols(job.simulate.polarizations)},
                         {"export_profiles", job.simulate.export_profiles},
                         {"export_series", job.simulate.export_series}};
        break;
    case JobKind::sweep:
        j["sweep"] = {{"m", {job.sweep.m_lo, job.sweep.m_hi}},
                      {"h", job.sweep.h_values},
                      {"polarizations", pols(job.sweep.polarizations)},
                      {"families", job.sweep.families},
                      {"window_nm", job.sweep.window_nm}};
        break;
    case JobKind::fit: {
        const FitSection &f = job.fit;
        json fit = {{"spectrum", f.spectrum_path ? json(*f.spectrum_path) : json(nullptr)},
                    {"threshold", f.detect.threshold},
                    {"background_window_nm", f.detect.background_window_nm},
                    {"fwhm_uncertainty_nm", f.options.fwhm_uncertainty_nm},
                    {"window_half_width_nm", f.window_half_width_nm},
                    {"dispersion_modes", f.dispersion_modes ? json(*f.dispersion_modes) : json(nullptr)},
                    {"assign_tolerance", f.assign.tolerance}};
        if (f.synthesize) {
            const SynthesisRecipe &s = *f.synthesize;
            fit["synthesize"] = {{"modes", s.modes_path},
                                 {"background",
                                  {{"enabled", s.background.enabled},
                                   {"zpl_height", s.background.zpl_height},
                                   {"sideband_height", s.background.sideband_height},
                                   {"raman_height", s.background.raman_height},
                                   {"excitation_nm", s.background.excitation_nm}}},
                                 {"fringe_amplitude", s.fringe.amplitude},
                                 {"fringe_period_nm", s.fringe.period_nm},
                                 {"noise_sigma", s.noise.sigma},
                                 {"shot_gain", s.noise.shot_gain},
                                 {"line_area", s.line_area}};
        }
        j["fit"] = fit;
        break;
    }
    case JobKind::cqed: {
        json modes = json::array();
        for (const ResonantMode &m : job.cqed.modes)
            modes.push_back({{"m", m.m},
                             {"polarization", to_string(m.polarization)},
                             {"wavelength_um", m.wavelength_um},
                             {"q", m.q_rad},
                             {"q_i", m.q_i ? json(*m.q_i) : json(nullptr)},
                             {"mode_volume", m.mode_volume},
                             {"eta", m.eta},
                             {"standing_wave", m.standing_wave}});
        const EmitterModel &e = job.cqed.emitter;
        j["cqed"] = {{"modes_file", job.cqed.modes_path ? json(*job.cqed.modes_path) : json(nullptr)},
                     {"modes", modes},
                     {"emitter",
                      {{"gamma_ghz", e.gamma_ghz},
                       {"gamma_zpl_ghz", e.gamma_zpl_ghz},
                       {"lambda_zpl_um", e.lambda_zpl_um},
                       {"depth_um", e.depth_um}}},
                     {"n_emit", job.cqed.n_emit},
                     {"n_max_loc", job.cqed.n_max_loc}};
        break;
    }
    case JobKind::report:
        j["report"] = {{"manifests", job.report.manifests}, {"q_i", job.report.q_i}};
        break;
    }
    return j;
}

} // namespace

const char *to_string(JobKind kind)
{
    switch (kind) {
    case JobKind::simulate:
        return "simulate";
    case JobKind::sweep:
        return "sweep";
    case JobKind::fit:
        return "fit";
    case JobKind::cqed:
        return "cqed";
    case JobKind::report:
        return "report";
    }
    return "?";
}

JobKind job_kind_from_string(const std::string &name)
{
    for (JobKind k : {JobKind::simulate, JobKind::sweep, JobKind::fit, JobKind::cqed, JobKind::report})
        if (name == to_string(k))
            return k;
    throw ConfigError("job", "unknown job kind '" + name + "' (expected simulate, sweep, fit, cqed or report)");
}

std::string resolve_path(const std::string &path, const std::string &base_dir)
{
    const std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty())
        return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

MaterialSet build_materials(const MaterialsConfig &config, const std::string &base_dir)
{
    MaterialSet set;
    set.guiding = gallium_phosphide(config.guiding_index);
    set.substrate = diamond(config.diamond_index);
    set.cladding = vacuum();
    if (config.guiding_dispersion) {
        set.guiding.dispersion_table = read_dispersion_csv(resolve_path(*config.guiding_dispersion, base_dir));
        set.guiding.interpolation = config.interpolation;
        validate(set.guiding);
    }
    return set;
}

Job parse_config_text(const std::string &text, std::optional<JobKind> kind_hint, const std::string &base_dir)
{
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error &e) {
        const auto [line, column] = line_column(text, e.byte);
        std::ostringstream where;
        where << "line " << line << ", column " << column;
        std::string message = e.what();
        const auto pos = message.find("syntax error");
        throw ConfigError(where.str(), pos == std::string::npos ? message : message.substr(pos));
    }

    Job job;
    job.base_dir = base_dir;
    Section s(root, "");
    if (const auto kind = s.text("job")) {
        job.kind = job_kind_from_string(*kind);
        if (kind_hint && *kind_hint != job.kind)
            throw ConfigError("job", std::string("config is a '") + *kind + "' job but '" + to_string(*kind_hint) +
                                         "' was requested");
    } else if (kind_hint) {
        job.kind = *kind_hint;
    } else {
        throw ConfigError("job", "job kind is required");
    }
    if (const auto out = s.text("out"))
        job.out_dir = *out;
    job.workers = static_cast<int>(s.integer("workers", job.workers));
    require(job.workers >= 1, "workers", "must be at least 1");
    const long seed = s.integer("seed", 0);
    require(seed >= 0, "seed", "must be non-negative");
    job.seed = static_cast<std::uint64_t>(seed);

    const bool needs_device = job.kind == JobKind::simulate || job.kind == JobKind::sweep;
    if (auto g = s.child("geometry"))
        parse_geometry(*g, job);
    else if (needs_device)
        throw ConfigError("geometry", "a geometry section is required");
    if (auto m = s.child("materials"))
        parse_materials(*m, job);
    if (auto g = s.child("grid"))
        parse_grid(*g, job);
    if (auto o = s.child("solver"))
        parse_solver(*o, job);
    if (auto r = s.child("response"))
        parse_response(*r, job);
    if (auto x = s.child("simulate"))
        parse_simulate(*x, job);
    if (auto x = s.child("sweep"))
        parse_sweep(*x, job);
    if (auto x = s.child("fit"))
        parse_fit(*x, job);
    if (auto x = s.child("cqed"))
        parse_cqed(*x, job);
    if (auto x = s.child("report"))
        parse_report(*x, job);
    s.finish();

    switch (job.kind) {
    case JobKind::sweep:
        require(job.sweep.m_hi >= job.sweep.m_lo, "sweep.m", "a sweep needs a non-empty m range");
        if (job.sweep.h_values.empty())
            job.sweep.h_values = {job.geometry.etch_depth};
        break;
    case JobKind::fit:
        require(s.has("fit"), "fit", "a fit section is required");
        break;
    case JobKind::cqed:
        require(job.cqed.modes_path.has_value() || !job.cqed.modes.empty(), "cqed",
                "either 'modes_file' or 'modes' is required");
        break;
    case JobKind::report:
        require(!job.report.manifests.empty(), "report.manifests", "at least one manifest is required");
        break;
    case JobKind::simulate:
        break;
    }
    job.canonical = canonical(job);
    return job;
}

Job parse_config(const std::string &path, std::optional<JobKind> kind_hint)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config", "cannot open " + path);
    std::ostringstream text;
    text << in.rdbuf();
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    return parse_config_text(text.str(), kind_hint, parent.empty() ? "." : parent.string());
}

} // namespace wgmcav::app
