#ifndef RTF_CORE_LOG_HPP
#define RTF_CORE_LOG_HPP

#include <functional>
#include <string>
#include <string_view>

namespace rtf {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, std::string_view)>;

/// Replaces the process-wide sink; an empty function restores stderr output.
/// Returns the previous sink.
LogSink set_log_sink(LogSink sink);

void log_info(std::string_view message);
void log_warning(std::string_view message);

}  // namespace rtf

#endif  // RTF_CORE_LOG_HPP
