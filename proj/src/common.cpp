#include "motionmap/common.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>

namespace motionmap {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("MOTIONMAP_LOG");
        if (env == nullptr) return LogLevel::Error;
        if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
        if (std::strcmp(env, "info") == 0) return LogLevel::Info;
        return LogLevel::Error;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::Debug) std::cerr << "[debug] " << msg << "\n";
}

}  // namespace motionmap
