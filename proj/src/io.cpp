#include "ccsn/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace ccsn {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::ostream &out, std::vector<std::string> columns)
    : out_(out), width_(columns.size()) {
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void CsvWriter::row(std::span<const double> values) {
  if (values.size() != width_) throw std::invalid_argument("CsvWriter: row width mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << fmt17(values[i]);
  out_ << '\n';
}

void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t fnv1a(const void *data, std::size_t size, std::uint64_t h) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  nlohmann::ordered_json g = nlohmann::ordered_json::object();
  for (const auto &[k, v] : grid) g[k] = v;
  j["grid"] = g;
  j["outputs"] = outputs;
  j["tool_version"] = tool_version;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

} // namespace ccsn
