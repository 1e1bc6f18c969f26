#include "yieldfield/error.hpp"

#include <iostream>
#include <mutex>

namespace yieldfield {

namespace {
std::mutex warning_mutex;
WarningHandler& handler() {
  static WarningHandler h = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return h;
}
}  // namespace

void set_warning_handler(WarningHandler h) {
  std::lock_guard lock(warning_mutex);
  handler() = std::move(h);
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex);
  if (handler()) handler()(message);
}

}  // namespace yieldfield
