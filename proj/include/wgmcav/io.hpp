#ifndef WGMCAV_IO_HPP
#define WGMCAV_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "wgmcav/cqed.hpp"
#include "wgmcav/fdtd.hpp"
#include "wgmcav/modes.hpp"
#include "wgmcav/spectra.hpp"

/// File formats: CSV tables, JSON lines records and a self-describing binary
/// profile container.
namespace wgmcav::io
{
using json = nlohmann::json;

/// Shortest round-trippable decimal text of a double; "inf"/"-inf"/"nan" for
/// non-finite values.
std::string format_number(double x);

json to_json(const ResonantMode &mode);
ResonantMode mode_from_json(const json &j);

json to_json(const spectra::LineFit &fit);
json to_json(const CqedParams &params);
json to_json(const FsrPoint &point);

void write_modes_csv(std::ostream &os, const std::vector<ResonantMode> &modes);
void write_modes_jsonl(std::ostream &os, const std::vector<ResonantMode> &modes);
std::vector<ResonantMode> read_modes_jsonl(const std::string &path);

/// (lambda_mid_nm, fsr_nm, family) rows.
void write_fsr_csv(std::ostream &os, const std::vector<FsrPoint> &points);

void write_jsonl(std::ostream &os, const std::vector<json> &records);

void write_time_series_csv(std::ostream &os, const TimeSeries &series);

/// Long-format CSV: r_um, z_um and real/imaginary parts of each component.
void write_profile_csv(std::ostream &os, const ModeProfile &profile);

/// Binary container: the 8-byte magic "WGMPROF1", a little-endian uint64
/// header length, a JSON header (dims, spacings, origin, λ, m, normalization,
/// component order) and then E_r, E_φ, E_z as column-major complex128.
void write_profile_binary(const std::string &path, const ModeProfile &profile);
ModeProfile read_profile_binary(const std::string &path);

/// Writes `content` to `path`, creating parent directories.
void write_file(const std::string &path, const std::string &content);
std::string read_file(const std::string &path);

} // namespace wgmcav::io

#endif // WGMCAV_IO_HPP
