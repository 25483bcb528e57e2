#include "wgmcav/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "wgmcav/io.hpp"
#include "wgmcav/solver.hpp"
#include "wgmcav/units.hpp"

namespace wgmcav::app
{
using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static const char *hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * length);
    for (unsigned int j = 0; j < length; ++j) {
        out.push_back(hex[digest[j] >> 4]);
        out.push_back(hex[digest[j] & 0xf]);
    }
    return out;
}

int resolve_workers(std::optional<int> command_line, int from_config)
{
    if (command_line) {
        if (*command_line < 1)
            throw ConfigError("--workers", "must be at least 1");
        return *command_line;
    }
    if (const char *env = std::getenv("WGMCAV_WORKERS"); env && *env) {
        char *end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (*end != '\0' || n < 1)
            throw ConfigError("WGMCAV_WORKERS", std::string("expected a positive integer, got '") + env + "'");
        return static_cast<int>(n);
    }
    return std::max(1, from_config);
}

std::vector<TaskOutcome> run_tasks(const std::vector<Task> &tasks, const TaskFunction &function, int workers,
                                   const std::function<void(const TaskOutcome &)> &on_done)
{
    std::vector<TaskOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex done_mutex;
    const auto worker = [&] {
        for (std::size_t j = next++; j < tasks.size(); j = next++) {
            TaskOutcome &out = outcomes[j];
            out.key = tasks[j].key;
            try {
                out.result = function(tasks[j]);
                out.ok = true;
            } catch (const std::exception &e) {
                out.ok = false;
                out.error = e.what();
                out.result = nullptr;
            }
            if (on_done) {
                std::lock_guard lock(done_mutex);
                on_done(out);
            }
        }
    };
    const int n = std::max(1, std::min<int>(workers, static_cast<int>(tasks.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int j = 0; j < n; ++j)
            pool.emplace_back(worker);
    }
    std::sort(outcomes.begin(), outcomes.end(), [](const TaskOutcome &a, const TaskOutcome &b) { return a.key < b.key; });
    return outcomes;
}

namespace
{
std::string engine_key(double h, Polarization p, int m, int window)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "h%.3f_%s_m%04d_w%02d", h, to_string(p), m, window);
    return buf;
}

std::string indexed_key(const char *prefix, std::size_t j)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, j);
    return buf;
}

std::vector<std::pair<double, double>> windows(const SolverOptions &o, double width_nm)
{
    if (!(width_nm > 0.0))
        return {{o.lambda_lo_um, o.lambda_hi_um}};
    const double span = o.lambda_hi_um - o.lambda_lo_um;
    const int n = std::max(1, static_cast<int>(std::ceil(span * 1e3 / width_nm - 1e-9)));
    std::vector<std::pair<double, double>> out;
    for (int j = 0; j < n; ++j)
        out.emplace_back(o.lambda_lo_um + span * j / n, o.lambda_lo_um + span * (j + 1) / n);
    return out;
}

/// Mode records carry the etch depth of the run they came from.
json mode_record(const ResonantMode &mode, double h)
{
    json j = io::to_json(mode);
    j["h_um"] = h;
    return j;
}

std::vector<std::string> profile_exports(const SolverResult &r, const std::string &out_dir, const std::string &key)
{
    std::vector<std::string> files;
    for (std::size_t j = 0; j < r.profiles.size() && j < r.modes.size(); ++j) {
        const std::string stem = "profiles/" + key + "_" + std::to_string(j) + "_" + r.modes[j].family();
        io::write_profile_binary((fs::path(out_dir) / (stem + ".wgmprof")).string(), r.profiles[j]);
        std::ostringstream csv;
        io::write_profile_csv(csv, r.profiles[j]);
        io::write_file((fs::path(out_dir) / (stem + ".csv")).string(), csv.str());
        files.push_back(stem + ".wgmprof");
        files.push_back(stem + ".csv");
    }
    return files;
}

std::vector<std::string> series_exports(const SolverResult &r, const std::string &out_dir, const std::string &key)
{
    std::vector<std::string> files;
    for (const TimeSeries &ts : r.series) {
        const std::string name = "series/" + key + "_" + ts.probe_id + "_" + to_string(ts.component) + ".csv";
        std::ostringstream csv;
        io::write_time_series_csv(csv, ts);
        io::write_file((fs::path(out_dir) / name).string(), csv.str());
        files.push_back(name);
    }
    return files;
}

json engine_task(const Job &job, const MaterialSet &materials, const Task &task)
{
    const json &in = task.input;
    DeviceGeometry g = job.geometry;
    g.etch_depth = in.at("h_um").get<double>();
    g = validate(g);
    SolverOptions o = job.solver;
    o.lambda_lo_um = in.at("lambda_um").at(0).get<double>();
    o.lambda_hi_um = in.at("lambda_um").at(1).get<double>();
    // Indices are frozen per run; with a dispersion table each window uses its own centre.
    o.lambda_ref_um = in.at("lambda_ref_um").get<double>();
    const bool export_profiles = job.kind == JobKind::simulate && job.simulate.export_profiles;
    const bool export_series = job.kind == JobKind::simulate && job.simulate.export_series;
    o.keep_profiles = export_profiles;
    const Polarization p = polarization_from_string(in.at("polarization").get<std::string>());
    const SolverResult r = solve_modes(g, materials, in.at("m").get<int>(), p, o);

    json modes = json::array();
    for (const ResonantMode &mode : r.modes) {
        if (job.kind == JobKind::sweep && !job.sweep.families.empty() &&
            std::find(job.sweep.families.begin(), job.sweep.families.end(), mode.family()) == job.sweep.families.end())
            continue;
        modes.push_back(mode_record(mode, g.etch_depth));
    }
    json files = json::array();
    if (export_profiles)
        for (const std::string &f : profile_exports(r, job.out_dir, task.key))
            files.push_back(f);
    if (export_series)
        for (const std::string &f : series_exports(r, job.out_dir, task.key))
            files.push_back(f);
    return json{{"modes", modes}, {"warnings", r.warnings}, {"files", files}};
}

std::vector<Task> engine_tasks(const Job &job)
{
    std::vector<Task> tasks;
    const auto add = [&](double h, Polarization p, int m, int w, double lo, double hi) {
        const double ref = job.materials.guiding_dispersion ? 0.5 * (lo + hi) : job.solver.lambda_ref_um;
        json input = {{"kind", to_string(job.kind)},
                      {"geometry", job.canonical.at("geometry")},
                      {"materials", job.canonical.at("materials")},
                      {"grid", job.canonical.at("grid")},
                      {"solver", job.canonical.at("solver")},
                      {"h_um", h},
                      {"polarization", to_string(p)},
                      {"m", m},
                      {"lambda_um", {lo, hi}},
                      {"lambda_ref_um", ref}};
        if (job.kind == JobKind::sweep)
            input["families"] = job.sweep.families;
        tasks.push_back({engine_key(h, p, m, w), std::move(input)});
    };
    if (job.kind == JobKind::simulate) {
        for (Polarization p : job.simulate.polarizations)
            add(job.geometry.etch_depth, p, job.simulate.m, 0, job.solver.lambda_lo_um, job.solver.lambda_hi_um);
    } else {
        const auto ws = windows(job.solver, job.sweep.window_nm);
        for (double h : job.sweep.h_values)
            for (Polarization p : job.sweep.polarizations)
                for (int m = job.sweep.m_lo; m <= job.sweep.m_hi; ++m)
                    for (std::size_t w = 0; w < ws.size(); ++w)
                        add(h, p, m, static_cast<int>(w), ws[w].first, ws[w].second);
    }
    return tasks;
}

std::vector<ResonantMode> cqed_modes(const Job &job)
{
    std::vector<ResonantMode> modes;
    if (job.cqed.modes_path)
        modes = io::read_modes_jsonl(resolve_path(*job.cqed.modes_path, job.base_dir));
    modes.insert(modes.end(), job.cqed.modes.begin(), job.cqed.modes.end());
    return modes;
}

std::vector<Task> cqed_tasks(const Job &job)
{
    std::vector<Task> tasks;
    const std::vector<ResonantMode> modes = cqed_modes(job);
    for (std::size_t j = 0; j < modes.size(); ++j)
        tasks.push_back({indexed_key("mode", j), json{{"mode", io::to_json(modes[j])}, {"cqed", job.canonical.at("cqed")}}});
    return tasks;
}

/// Output directory bookkeeping: every file is hashed into the manifest.
class OutputSet
{
public:
    explicit OutputSet(std::string root) : root_(std::move(root)) {}

    void write(const std::string &relative, const std::string &content)
    {
        io::write_file((fs::path(root_) / relative).string(), content);
        files_[relative] = sha256_hex(content);
    }

    void adopt(const std::string &relative)
    {
        files_[relative] = sha256_hex(io::read_file((fs::path(root_) / relative).string()));
    }

    json listing() const
    {
        json a = json::array();
        for (const auto &[path, hash] : files_)
            a.push_back({{"path", path}, {"sha256", hash}});
        return a;
    }

    const std::string &root() const { return root_; }
    std::string hash_of(const std::string &relative) const { return files_.at(relative); }

private:
    std::string root_;
    std::map<std::string, std::string> files_;
};

std::string task_file(const std::string &key) { return "tasks/" + key + ".json"; }

json task_entry(const Task &task, const TaskOutcome &o, const OutputSet &out)
{
    json e = {{"key", o.key},
              {"status", o.ok ? "ok" : "failed"},
              {"input_sha256", sha256_hex(task.input.dump())},
              {"artifact", task_file(o.key)},
              {"sha256", out.hash_of(task_file(o.key))}};
    if (!o.ok)
        e["error"] = o.error;
    return e;
}

bool record_less(const std::pair<double, ResonantMode> &a, const std::pair<double, ResonantMode> &b)
{
    const std::string fa = a.second.family(), fb = b.second.family();
    return std::tie(a.first, fa, a.second.m, a.second.wavelength_um) <
           std::tie(b.first, fb, b.second.m, b.second.wavelength_um);
}

std::string modes_csv_with_h(const std::vector<std::pair<double, ResonantMode>> &modes)
{
    std::vector<ResonantMode> plain;
    for (const auto &[h, m] : modes)
        plain.push_back(m);
    std::ostringstream body;
    io::write_modes_csv(body, plain);
    std::istringstream lines(body.str());
    std::ostringstream out;
    std::string line;
    std::size_t j = 0;
    std::getline(lines, line);
    out << "h_um," << line << '\n';
    while (std::getline(lines, line))
        out << io::format_number(modes[j++].first) << ',' << line << '\n';
    return out.str();
}

/// FSR points per etch depth, family order TE0, TM0, TE1, TM1 first.
std::vector<std::pair<double, FsrPoint>> fsr_points(const std::vector<std::pair<double, ResonantMode>> &modes)
{
    std::map<double, std::vector<ResonantMode>> by_h;
    for (const auto &[h, m] : modes)
        by_h[h].push_back(m);
    const auto rank = [](const std::string &f) {
        static const std::vector<std::string> order{"TE0", "TM0", "TE1", "TM1"};
        const auto it = std::find(order.begin(), order.end(), f);
        return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
    };
    std::vector<std::pair<double, FsrPoint>> out;
    for (const auto &[h, ms] : by_h) {
        std::vector<FsrPoint> pts = fsr_dispersion_segments(ms);
        std::stable_sort(pts.begin(), pts.end(), [&](const FsrPoint &a, const FsrPoint &b) {
            return std::make_tuple(rank(a.family), a.family, a.wavelength_mid_um) <
                   std::make_tuple(rank(b.family), b.family, b.wavelength_mid_um);
        });
        for (const FsrPoint &p : pts)
            out.emplace_back(h, p);
    }
    return out;
}

std::string fsr_csv(const std::vector<std::pair<double, FsrPoint>> &points)
{
    std::ostringstream os;
    os << "h_um,family,lambda_mid_nm,fsr_nm,m_lower\n";
    for (const auto &[h, p] : points)
        os << io::format_number(h) << ',' << p.family << ',' << io::format_number(p.wavelength_mid_um * 1e3) << ','
           << io::format_number(p.fsr_nm) << ',' << p.m_lower << '\n';
    return os.str();
}

std::vector<std::pair<double, ResonantMode>> collect_modes(const std::vector<TaskOutcome> &outcomes)
{
    std::vector<std::pair<double, ResonantMode>> modes;
    for (const TaskOutcome &o : outcomes) {
        if (!o.ok)
            continue;
        for (const json &m : o.result.at("modes"))
            modes.emplace_back(m.at("h_um").get<double>(), io::mode_from_json(m));
    }
    std::stable_sort(modes.begin(), modes.end(), record_less);
    return modes;
}

std::string modes_jsonl(const std::vector<std::pair<double, ResonantMode>> &modes)
{
    std::ostringstream os;
    for (const auto &[h, m] : modes)
        os << mode_record(m, h).dump() << '\n';
    return os.str();
}

json manifest_header(const Job &job)
{
    return json{{"format", "wgmcav-manifest/1"},
                {"job", to_string(job.kind)},
                {"seed", job.seed},
                {"config_sha256", sha256_hex(job.canonical.dump())},
                {"config", job.canonical}};
}

RunSummary finish(const Job &job, OutputSet &out, json manifest, const std::vector<Task> &tasks,
                  const std::vector<TaskOutcome> &outcomes)
{
    std::map<std::string, const Task *> by_key;
    for (const Task &t : tasks)
        by_key[t.key] = &t;
    json entries = json::array();
    int failed = 0;
    for (const TaskOutcome &o : outcomes) {
        entries.push_back(task_entry(*by_key.at(o.key), o, out));
        failed += o.ok ? 0 : 1;
    }
    manifest["tasks"] = entries;
    manifest["artifacts"] = out.listing();
    manifest["summary"] = {{"tasks", static_cast<int>(outcomes.size())}, {"failed", failed}};
    const std::string path = (fs::path(job.out_dir) / "manifest.json").string();
    io::write_file(path, manifest.dump(2) + "\n");
    RunSummary s;
    s.manifest_path = path;
    s.tasks = static_cast<int>(outcomes.size());
    s.failed = failed;
    s.exit_code = failed > 0 ? kExitPartial : kExitOk;
    return s;
}

std::vector<TaskOutcome> execute(const std::vector<Task> &tasks, const TaskFunction &fn, int workers, OutputSet &out)
{
    return run_tasks(tasks, fn, workers, [&](const TaskOutcome &o) {
        json j = {{"key", o.key}, {"status", o.ok ? "ok" : "failed"}, {"result", o.result}};
        if (!o.ok)
            j["error"] = o.error;
        out.write(task_file(o.key), j.dump(2) + "\n");
    });
}

RunSummary run_engine_job(const Job &job, int workers)
{
    const MaterialSet materials = build_materials(job.materials, job.base_dir);
    const std::vector<Task> tasks = engine_tasks(job);
    OutputSet out(job.out_dir);
    const auto outcomes = execute(
        tasks, [&](const Task &t) { return engine_task(job, materials, t); }, workers, out);

    const auto modes = collect_modes(outcomes);
    out.write("modes.jsonl", modes_jsonl(modes));
    out.write("modes.csv", modes_csv_with_h(modes));
    if (job.kind == JobKind::sweep)
        out.write("fsr.csv", fsr_csv(fsr_points(modes)));
    for (const TaskOutcome &o : outcomes)
        if (o.ok)
            for (const json &f : o.result.at("files"))
                out.adopt(f.get<std::string>());
    return finish(job, out, manifest_header(job), tasks, outcomes);
}

RunSummary run_cqed_job(const Job &job, int workers)
{
    const std::vector<Task> tasks = cqed_tasks(job);
    if (tasks.empty())
        throw MissingResultsError("cqed job has no modes");
    OutputSet out(job.out_dir);
    const auto outcomes = execute(
        tasks,
        [&](const Task &t) {
            const ResonantMode mode = io::mode_from_json(t.input.at("mode"));
            const CqedParams p = cqed_parameters(mode, job.cqed.emitter, job.cqed.n_emit, job.cqed.n_max_loc);
            return json{{"mode", io::to_json(mode)}, {"cqed", io::to_json(p)}};
        },
        workers, out);
    std::ostringstream jsonl;
    for (const TaskOutcome &o : outcomes)
        if (o.ok)
            jsonl << o.result.dump() << '\n';
    out.write("cqed.jsonl", jsonl.str());
    return finish(job, out, manifest_header(job), tasks, outcomes);
}

spectra::Spectrum fit_input(const Job &job, OutputSet &out)
{
    if (job.fit.spectrum_path)
        return spectra::read_spectrum_csv(resolve_path(*job.fit.spectrum_path, job.base_dir));
    const SynthesisRecipe &r = *job.fit.synthesize;
    spectra::SynthesisSpec spec;
    spec.background = r.background;
    spec.fringe = r.fringe;
    spec.noise = r.noise;
    spec.response = job.response;
    spec.seed = job.seed;
    const std::vector<ResonantMode> modes = io::read_modes_jsonl(resolve_path(r.modes_path, job.base_dir));
    spectra::Spectrum s = spectra::synthesize_spectrum(modes, spec, r.line_area);
    spectra::write_spectrum_csv(s, (fs::path(job.out_dir) / "spectrum.csv").string());
    out.adopt("spectrum.csv");
    return s;
}

RunSummary run_fit_job(const Job &job, int workers)
{
    OutputSet out(job.out_dir);
    const spectra::Spectrum spectrum = fit_input(job, out);
    spectra::PeakDetectSpec detect = job.fit.detect;
    detect.expected_fwhm_nm = job.response.gaussian_fwhm_nm;
    detect.pixel_pitch_nm = job.response.pixel_pitch_nm;
    const std::vector<spectra::PeakCandidate> peaks = spectra::detect_peaks(spectrum, detect);

    std::ostringstream peaks_csv;
    peaks_csv << "index,lambda_nm,height,prominence,width_nm,noise,unresolved\n";
    std::vector<Task> tasks;
    for (std::size_t j = 0; j < peaks.size(); ++j) {
        const auto &p = peaks[j];
        peaks_csv << p.index << ',' << io::format_number(p.lambda_nm) << ',' << io::format_number(p.height) << ','
                  << io::format_number(p.prominence) << ',' << io::format_number(p.width_nm) << ','
                  << io::format_number(p.noise) << ',' << (p.unresolved ? 1 : 0) << '\n';
        const double w = job.fit.window_half_width_nm;
        tasks.push_back({indexed_key("peak", j), json{{"lambda_nm", p.lambda_nm},
                                                      {"window_nm", {p.lambda_nm - w, p.lambda_nm + w}},
                                                      {"fit", job.canonical.at("fit")},
                                                      {"response", job.canonical.at("response")}}});
    }
    out.write("peaks.csv", peaks_csv.str());

    const auto outcomes = execute(
        tasks,
        [&](const Task &t) {
            const auto &w = t.input.at("window_nm");
            const spectra::LineFit fit = spectra::fit_resonance(spectrum, w.at(0).get<double>(), w.at(1).get<double>(),
                                                                job.response, job.fit.options);
            json j = io::to_json(fit);
            j["peak_nm"] = t.input.at("lambda_nm");
            return j;
        },
        workers, out);

    std::ostringstream fits;
    std::vector<double> centres;
    for (const TaskOutcome &o : outcomes) {
        if (!o.ok)
            continue;
        fits << o.result.dump() << '\n';
        centres.push_back(o.result.at("center_nm").get<double>());
    }
    out.write("linefits.jsonl", fits.str());

    if (job.fit.dispersion_modes) {
        const auto modes = io::read_modes_jsonl(resolve_path(*job.fit.dispersion_modes, job.base_dir));
        const auto tables = spectra::dispersion_tables(fsr_dispersion_segments(modes));
        std::sort(centres.begin(), centres.end());
        std::ostringstream csv;
        csv << "lambda_nm,family,chain\n";
        for (const auto &a : spectra::assign_families(centres, tables, job.fit.assign))
            csv << io::format_number(a.lambda_nm) << ',' << a.label << ',' << a.chain << '\n';
        out.write("assignments.csv", csv.str());
    }
    return finish(job, out, manifest_header(job), tasks, outcomes);
}

RunSummary run_report_job(const Job &job)
{
    std::vector<std::pair<double, ResonantMode>> modes;
    for (const std::string &m : job.report.manifests) {
        const std::string path = resolve_path(m, job.base_dir);
        if (!fs::exists(path))
            throw MissingResultsError("manifest not found: " + path);
        const json manifest = json::parse(io::read_file(path));
        const fs::path dir = fs::path(path).parent_path();
        bool listed = false;
        for (const json &a : manifest.value("artifacts", json::array()))
            listed = listed || a.value("path", "") == "modes.jsonl";
        if (!listed)
            continue;
        std::istringstream lines(io::read_file((dir / "modes.jsonl").string()));
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty()) {
                const json j = json::parse(line);
                modes.emplace_back(j.value("h_um", 0.0), io::mode_from_json(j));
            }
    }
    if (modes.empty())
        throw MissingResultsError("no mode records found in the given manifests");
    std::stable_sort(modes.begin(), modes.end(), record_less);

    OutputSet out(job.out_dir);
    out.write("mode_table.csv", modes_csv_with_h(modes));
    out.write("fsr_by_family.csv", fsr_csv(fsr_points(modes)));

    std::ostringstream q;
    q << "h_um,family,m,lambda_nm,q_rad,q_i,q_total\n";
    for (const auto &[h, m] : modes) {
        if (m.polarization == Polarization::hybrid)
            continue;
        q << io::format_number(h) << ',' << m.family() << ',' << m.m << ',' << io::format_number(m.wavelength_um * 1e3)
          << ',' << io::format_number(m.q_rad) << ',' << io::format_number(job.report.q_i) << ','
          << io::format_number(q_budget(m.q_rad, job.report.q_i)) << '\n';
    }
    out.write("q_vs_lambda.csv", q.str());

    std::ostringstream c;
    c << "h_um,family,m,lambda_nm,q_total,mode_volume,eta,kappa_ghz,purcell,g_ghz,beta\n";
    for (auto [h, m] : modes) {
        if (!(m.mode_volume > 0.0) || m.polarization == Polarization::hybrid)
            continue;
        m.q_i = job.report.q_i;
        const CqedParams p = cqed_parameters(m, job.report.emitter);
        c << io::format_number(h) << ',' << m.family() << ',' << m.m << ',' << io::format_number(m.wavelength_um * 1e3)
          << ',' << io::format_number(m.q_total()) << ',' << io::format_number(m.reported_mode_volume()) << ','
          << io::format_number(m.eta) << ',' << io::format_number(p.kappa_ghz) << ',' << io::format_number(p.purcell)
          << ',' << io::format_number(p.g_ghz) << ',' << io::format_number(p.beta) << '\n';
    }
    out.write("cqed_summary.csv", c.str());
    return finish(job, out, manifest_header(job), {}, {});
}

} // namespace

std::vector<Task> plan_tasks(const Job &job)
{
    switch (job.kind) {
    case JobKind::simulate:
    case JobKind::sweep:
        return engine_tasks(job);
    case JobKind::cqed:
        return cqed_tasks(job);
    case JobKind::fit:
    case JobKind::report:
        break;
    }
    throw ValidationError("job", std::string(to_string(job.kind)) + " jobs are planned from their inputs at run time");
}

RunSummary run_job(const Job &job, int workers)
{
    fs::create_directories(job.out_dir);
    switch (job.kind) {
    case JobKind::simulate:
    case JobKind::sweep:
        return run_engine_job(job, workers);
    case JobKind::cqed:
        return run_cqed_job(job, workers);
    case JobKind::fit:
        return run_fit_job(job, workers);
    case JobKind::report:
        return run_report_job(job);
    }
    return {};
}

} // namespace wgmcav::app
