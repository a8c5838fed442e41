#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ropdf/error.hpp"
#include "ropdf/log.hpp"
#include "ropdf/models.hpp"
#include "ropdf/pipeline.hpp"

namespace {

struct Flags {
    std::string config;
    std::string out = "run";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool strict = false;
    bool quiet = false;
};

void add_run_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", f.seed, "Override the configured seed");
    cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--strict", f.strict, "Fail instead of adding missing upstream tasks");
    cmd->add_flag("-q,--quiet", f.quiet, "Suppress informational messages");
}

int execute(const Flags& f, const std::vector<std::string>& tasks, bool resolve_only) {
    ropdf::PipelineOptions opts;
    opts.out_dir = f.out;
    opts.seed = f.seed;
    opts.threads = f.threads;
    if (f.strict) opts.strict = true;
    opts.tasks = tasks;
    if (f.quiet) {
        ropdf::set_log_sink([](std::string_view level, std::string_view msg) {
            if (level != "info") std::cerr << level << ": " << msg << '\n';
        });
    }
    try {
        if (resolve_only) {
            std::ifstream in(f.config);
            std::stringstream ss;
            ss << in.rdbuf();
            std::cout << ropdf::resolve_config(ss.str(), opts) << '\n';
            return 0;
        }
        const auto result = ropdf::run_pipeline_file(f.config, opts);
        for (const auto& t : result.completed) std::cout << "ok      " << t << '\n';
        for (const auto& fail : result.failures) std::cerr << "failed  " << fail.task << ": " << fail.message << '\n';
        std::cout << "manifest " << result.manifest_hash << " -> " << (std::filesystem::path(f.out) / "manifest.json").string()
                  << '\n';
        return result.ok() ? 0 : 1;
    } catch (const ropdf::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reduced-order PDF equations closed from sample trajectories"};
    app.set_version_flag("--version", std::string(ropdf::version()));
    app.require_subcommand(1);

    Flags flags;
    auto* run = app.add_subcommand("run", "Run every task listed in the configuration");
    add_run_flags(run, flags);

    auto* resolve = app.add_subcommand("resolve", "Print the configuration with all defaults filled in");
    add_run_flags(resolve, flags);

    std::vector<std::pair<CLI::App*, std::string>> task_cmds;
    for (const auto& name : ropdf::pipeline_task_names()) {
        auto* cmd = app.add_subcommand(name, "Run the '" + name + "' task and anything it needs");
        add_run_flags(cmd, flags);
        task_cmds.emplace_back(cmd, name);
    }

    auto* models = app.add_subcommand("models", "List built-in models");

    CLI11_PARSE(app, argc, argv);

    if (models->parsed()) {
        for (const auto& name : ropdf::builtin_model_names()) {
            const auto m = ropdf::builtin_model(name);
            std::cout << name << "  dim " << m.dim << "  qoi " << m.component_names.at(m.qoi_index);
            for (const auto& [key, value] : m.params) std::cout << "  " << key << "=" << value;
            std::cout << '\n';
        }
        return 0;
    }
    if (run->parsed()) return execute(flags, {}, false);
    if (resolve->parsed()) return execute(flags, {}, true);
    for (const auto& [cmd, name] : task_cmds) {
        if (cmd->parsed()) return execute(flags, {name}, false);
    }
    return 1;
}
