#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace rsdf {

enum class log_level { error = 0, warn = 1, info = 2, debug = 3 };

namespace detail {

inline log_level level_from_env() {
    const char* env = std::getenv("RSDF_LOG");
    if (env == nullptr) return log_level::info;
    std::string_view v(env);
    if (v == "error") return log_level::error;
    if (v == "debug") return log_level::debug;
    return log_level::info;
}

inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

} // namespace detail

/// Threshold read once from RSDF_LOG={error|info|debug}; warnings print at info and above.
inline log_level current_log_level() {
    static const log_level level = detail::level_from_env();
    return level;
}

inline void log(log_level level, std::string_view message) {
    if (static_cast<int>(level) > static_cast<int>(current_log_level())) return;
    static constexpr const char* tags[] = {"error", "warning", "info", "debug"};
    std::lock_guard lock(detail::log_mutex());
    std::cerr << "rsdf " << tags[static_cast<int>(level)] << ": " << message << '\n';
}

inline void log_warn(std::string_view message) { log(log_level::warn, message); }
inline void log_info(std::string_view message) { log(log_level::info, message); }
inline void log_debug(std::string_view message) { log(log_level::debug, message); }

} // namespace rsdf
