#pragma once

#include <string>

namespace ctalvae {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Effective level from CTALVAE_LOG (error | info | debug), read once;
/// unset or unrecognized values fall back to info.
LogLevel log_level();

/// Writes "[level] message" to stderr when `lvl` is enabled.
void log(LogLevel lvl, const std::string& msg);

inline void log_error(const std::string& msg) { log(LogLevel::error, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::debug, msg); }

}  // namespace ctalvae
