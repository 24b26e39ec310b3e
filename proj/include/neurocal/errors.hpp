#pragma once

#include <stdexcept>
#include <string>

namespace neurocal {

/// Invalid parameters, configuration or call contract.
class ConfigurationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (SWC text, CSV tables, checkpoints).
class FormatError : public std::runtime_error {
public:
  explicit FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace neurocal
