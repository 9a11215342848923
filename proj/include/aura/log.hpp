#pragma once

#include <functional>
#include <string>
#include <vector>

namespace aura::log {

using Sink = std::function<void(const std::string&)>;

/// Emits a warning through the active sink (stderr by default).
void warn(const std::string& message);

/// Replaces the warning sink; returns the previous one. Passing an empty
/// function restores the stderr sink.
Sink set_warning_sink(Sink sink);

/// RAII capture of warnings, mostly for tests.
class ScopedWarningCapture {
 public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture&) = delete;
  ScopedWarningCapture& operator=(const ScopedWarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }

 private:
  std::vector<std::string> messages_;
  Sink previous_;
};

}  // namespace aura::log
