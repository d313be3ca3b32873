#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "emfd/error.hpp"

namespace emfd::tools {

inline constexpr std::string_view kToolVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericError("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Tool version, config digest and input digests attached to every output.
class Provenance {
 public:
  Provenance(std::string command, const std::string& canonical_config)
      : command_(std::move(command)), config_digest_(sha256_hex(canonical_config)) {}

  void add_input(const std::filesystem::path& p) {
    inputs_.emplace_back(p.filename().string(), sha256_hex(read_file(p)));
  }

  /// `# emfd <version> command=... config=sha256:... inputs=name:sha256:...;...`
  std::string comment_line() const {
    std::string line = "# emfd " + std::string(kToolVersion) + " command=" + command_ + " config=sha256:" + config_digest_;
    line += " inputs=";
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      if (i) line += ';';
      line += inputs_[i].first + ":sha256:" + inputs_[i].second;
    }
    return line;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "emfd";
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["config_sha256"] = config_digest_;
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& [name, digest] : inputs_) j["inputs"].push_back({{"name", name}, {"sha256", digest}});
    return j;
  }

 private:
  std::string command_;
  std::string config_digest_;
  std::vector<std::pair<std::string, std::string>> inputs_;
};

/// Outputs are written to `<name>.tmp` and renamed only by commit(); anything
/// not committed is removed on destruction.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw InputError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    if (committed_) return;
    for (const auto& f : files_) {
      std::error_code ec;
      std::filesystem::remove(temp_path(f.name), ec);
    }
  }

  /// Buffer for one output file; contents are flushed at commit.
  std::ostringstream& open(const std::string& name) {
    files_.push_back({name, std::make_unique<std::ostringstream>()});
    return *files_.back().buffer;
  }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void commit() {
    for (const auto& f : files_) {
      std::ofstream out(temp_path(f.name), std::ios::binary | std::ios::trunc);
      out << f.buffer->str();
      out.close();
      if (!out) throw InputError("cannot write " + temp_path(f.name).string());
    }
    for (const auto& f : files_) {
      std::error_code ec;
      std::filesystem::rename(temp_path(f.name), path(f.name), ec);
      if (ec) throw InputError("cannot rename output " + f.name + ": " + ec.message());
    }
    committed_ = true;
  }

 private:
  struct File {
    std::string name;
    std::unique_ptr<std::ostringstream> buffer;
  };

  std::filesystem::path temp_path(const std::string& name) const { return dir_ / (name + ".tmp"); }

  std::filesystem::path dir_;
  std::vector<File> files_;
  bool committed_ = false;
};

}  // namespace emfd::tools
