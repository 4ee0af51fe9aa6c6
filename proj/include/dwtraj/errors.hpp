#pragma once

#include <stdexcept>
#include <string>

namespace dwtraj {

// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical tolerance could not be met (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double time = 0.0)
      : std::runtime_error(what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

// File system failure (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string path)
      : std::runtime_error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace dwtraj
