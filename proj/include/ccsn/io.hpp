// Output plumbing: 17-significant-digit CSV, atomic file writes, run manifests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccsn {

/// Error raised when an input artifact is absent; the message names the
/// command that produces it.
class MissingArtifact : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// "%.17g" rendering, round-trip exact.
std::string fmt17(double v);

class CsvWriter {
public:
  CsvWriter(std::ostream &out, std::vector<std::string> columns);
  void row(std::span<const double> values);
  void row(std::initializer_list<double> values) { row(std::span<const double>(values.begin(), values.size())); }

private:
  std::ostream &out_;
  std::size_t width_;
};

/// Write through a temporary in the same directory, then rename.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

std::uint64_t fnv1a(const void *data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hex64(std::uint64_t v);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> grid; // name -> rendered value
  std::vector<std::string> outputs;
  std::string tool_version;
  double wall_seconds = 0.0;

  /// JSON rendering. The wall-clock is written last and is the only field
  /// that varies between identical reruns.
  std::string to_json() const;
};

} // namespace ccsn
