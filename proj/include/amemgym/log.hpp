#pragma once

#include <cstdio>
#include <mutex>
#include <string>

namespace amemgym {

namespace detail {
inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}
inline bool& log_quiet_flag() {
    static bool quiet = false;
    return quiet;
}
}  // namespace detail

/// Silence warnings (used by tests that provoke them on purpose).
inline void set_log_quiet(bool quiet) { detail::log_quiet_flag() = quiet; }

inline bool log_quiet() { return detail::log_quiet_flag(); }

inline void log_warn(const std::string& msg) {
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    if (!detail::log_quiet_flag()) std::fprintf(stderr, "[amemgym] warning: %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
    std::lock_guard<std::mutex> lock(detail::log_mutex());
    if (!detail::log_quiet_flag()) std::fprintf(stderr, "[amemgym] %s\n", msg.c_str());
}

}  // namespace amemgym
