#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ropdf {

/// Library version string.
std::string_view version();

/// Task names in execution order.
const std::vector<std::string>& pipeline_task_names();

/// Command-line values that take precedence over the configuration document.
struct PipelineOptions {
    std::filesystem::path out_dir = "run";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<bool> strict;
    /// Replaces the configured task list when non-empty.
    std::vector<std::string> tasks;
};

struct TaskFailure {
    std::string task;
    std::string message;
};

struct PipelineResult {
    std::string manifest_hash;
    std::vector<std::string> completed;
    std::vector<TaskFailure> failures;
    /// Paths relative to the output directory.
    std::vector<std::string> artifacts;

    bool ok() const noexcept { return failures.empty(); }
};

/// Validates a JSON configuration, fills in every default and returns the
/// resolved document (sorted keys, two-space indent). Throws ConfigError.
std::string resolve_config(std::string_view config_json, const PipelineOptions& options = {});

/// Runs the configured tasks in dependency order and writes artifacts plus
/// `manifest.json` into `options.out_dir`. Missing upstream tasks are added
/// unless the run is strict, in which case a ConfigError is thrown. Failures
/// of individual tasks are reported in the result; dependants are skipped.
PipelineResult run_pipeline(std::string_view config_json, const PipelineOptions& options = {});

PipelineResult run_pipeline_file(const std::filesystem::path& config_path, const PipelineOptions& options = {});

}  // namespace ropdf
