#include "ropdf/log.hpp"

#include <iostream>
#include <mutex>

namespace ropdf {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s = [](std::string_view level, std::string_view message) {
        if (level == "warning") std::cerr << "ropdf: warning: " << message << '\n';
    };
    return s;
}

void emit(std::string_view level, const std::string& message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) sink()(level, message);
}

}  // namespace

void set_log_sink(LogSink s) {
    std::lock_guard lock(sink_mutex());
    sink() = std::move(s);
}

void log_warning(const std::string& message) { emit("warning", message); }
void log_info(const std::string& message) { emit("info", message); }

}  // namespace ropdf
