#pragma once

#include <string>

namespace storage_market {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Active level, read once from STORAGE_MARKET_LOG (error | info | debug;
/// anything else, including unset, means error).
LogLevel log_level();

/// Diagnostics go to stderr only; stdout stays parseable output.
void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace storage_market
