#ifndef WGMCAV_ORCHESTRATOR_HPP
#define WGMCAV_ORCHESTRATOR_HPP

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "wgmcav/job.hpp"

namespace wgmcav::app
{
/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitPartial = 2;

/// A report or downstream step found no results to work on.
class MissingResultsError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view data);

/// Worker count: the command-line value wins, then WGMCAV_WORKERS, then the
/// config. Throws ConfigError for a malformed environment value.
int resolve_workers(std::optional<int> command_line, int from_config);

struct Task
{
    std::string key;     ///< unique, sorts in the output order
    nlohmann::json input;
};

struct TaskOutcome
{
    std::string key;
    bool ok = false;
    std::string error;
    nlohmann::json result;
};

using TaskFunction = std::function<nlohmann::json(const Task &)>;

/// Runs every task on a pool of `workers` threads. A throwing task is
/// recorded as failed without affecting the others. `on_done` is called once
/// per task (serialised) as soon as it finishes. Outcomes are sorted by key.
std::vector<TaskOutcome> run_tasks(const std::vector<Task> &tasks, const TaskFunction &function, int workers,
                                   const std::function<void(const TaskOutcome &)> &on_done = {});

/// Sub-tasks of a job, sorted by key.
std::vector<Task> plan_tasks(const Job &job);

struct RunSummary
{
    int exit_code = kExitOk;
    std::string manifest_path;
    int tasks = 0;
    int failed = 0;
};

/// Executes the job into job.out_dir with `workers` threads and writes
/// manifest.json. Task failures give kExitPartial; invalid inputs discovered
/// while running raise ValidationError, and report jobs without upstream
/// results raise MissingResultsError.
RunSummary run_job(const Job &job, int workers);

} // namespace wgmcav::app

#endif // WGMCAV_ORCHESTRATOR_HPP
