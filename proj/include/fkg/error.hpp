#pragma once

#include <stdexcept>
#include <string>

namespace fkg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Bad user input (configuration, arguments). Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fkg
