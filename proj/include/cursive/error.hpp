#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cursive {

/// Token stream does not follow `((THETA RP) | WORD)* END PAD*`.
class GrammarError : public std::runtime_error {
 public:
  GrammarError(std::size_t index, const std::string& what)
      : std::runtime_error("token " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// JSON document does not match the expected schema. `path` is a JSONPath
/// such as `$[3].points`.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A configuration value is malformed or inconsistent with another one.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A required file or artifact is missing or unreadable.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cursive
