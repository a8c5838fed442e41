#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace ropdf {

using LogSink = std::function<void(std::string_view level, std::string_view message)>;

/// Replaces the process-wide sink; the default writes warnings to stderr.
void set_log_sink(LogSink sink);
void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace ropdf
