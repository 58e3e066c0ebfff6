#include "ctalvae/log.hpp"

#include <cstdlib>
#include <iostream>

namespace ctalvae {

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CTALVAE_LOG");
        if (!env) return LogLevel::info;
        const std::string v(env);
        if (v == "error") return LogLevel::error;
        if (v == "debug") return LogLevel::debug;
        if (v != "info")
            std::cerr << "[error] unrecognized CTALVAE_LOG value '" << v
                      << "', using info\n";
        return LogLevel::info;
    }();
    return level;
}

void log(LogLevel lvl, const std::string& msg) {
    if (lvl > log_level()) return;
    const char* tag = lvl == LogLevel::error  ? "error"
                      : lvl == LogLevel::info ? "info"
                                              : "debug";
    std::cerr << '[' << tag << "] " << msg << '\n';
}

}  // namespace ctalvae
