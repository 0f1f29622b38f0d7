#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "understory/pipeline.hpp"
#include "understory/volume_io.hpp"

namespace understory::cli {

/// Bad command line or manifest; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resolved run configuration: every known key with its default, then
/// manifest values, then command-line overrides.
class Settings {
 public:
  static Settings defaults(bool paper_scale);

  void set(const std::string& key, const std::string& value);
  void apply(const Manifest& manifest);
  bool known(const std::string& key) const;

  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  long integer(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> nums(const std::string& key) const;
  std::vector<long> integers(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  /// Path key resolved against `out_dir` when relative; empty stays empty.
  std::string path(const std::string& key) const;
  std::vector<std::string> paths(const std::string& key) const;

  PipelineConfig pipeline() const;
  StackGeometry stack_geometry() const;

  /// All keys in a stable order.
  Manifest resolved() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
};

}  // namespace understory::cli
