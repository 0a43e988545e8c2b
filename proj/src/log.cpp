#include "storage_market/log.hpp"

#include <cstdlib>
#include <iostream>

namespace storage_market {

namespace {

LogLevel parse_level() {
  const char* raw = std::getenv("STORAGE_MARKET_LOG");
  if (raw == nullptr) return LogLevel::error;
  const std::string v(raw);
  if (v == "debug") return LogLevel::debug;
  if (v == "info") return LogLevel::info;
  return LogLevel::error;
}

void emit(const char* tag, const std::string& message) {
  std::cerr << "[storage-market] " << tag << ": " << message << '\n';
}

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log_error(const std::string& message) { emit("error", message); }

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::info) emit("info", message);
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::debug) emit("debug", message);
}

}  // namespace storage_market
