#include "timbre/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace timbre {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "valid") return Split::kValid;
  if (s == "test") return Split::kTest;
  throw FormatError("unknown split name: " + s);
}

std::vector<std::string> ManifestDomain::paths_for(Split s) const {
  std::vector<std::string> out;
  for (const auto& f : files)
    if (f.split == s) out.push_back(f.path);
  return out;
}

const ManifestDomain& DatasetManifest::domain(const std::string& name) const {
  for (const auto& d : domains)
    if (d.name == name) return d;
  throw UnknownDomain("no such domain in manifest: " + name);
}

bool DatasetManifest::has_domain(const std::string& name) const {
  for (const auto& d : domains)
    if (d.name == name) return true;
  return false;
}

std::vector<std::string> DatasetManifest::domain_names() const {
  std::vector<std::string> out;
  for (const auto& d : domains) out.push_back(d.name);
  return out;
}

DatasetManifest split_dataset(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& files_per_domain,
    uint64_t seed) {
  DatasetManifest manifest;
  Rng rng(seed);
  for (const auto& [name, paths] : files_per_domain) {
    if (paths.size() < 3)
      throw InsufficientData("domain '" + name +
                             "' has fewer than 3 files; cannot split 80/10/10");
    std::vector<std::string> shuffled = paths;
    // Fisher-Yates with the shared deterministic stream
    for (size_t i = shuffled.size() - 1; i > 0; --i) {
      size_t j = rng.uniform_int(i + 1);
      std::swap(shuffled[i], shuffled[j]);
    }
    const size_t n = shuffled.size();
    size_t n_valid = n / 10;
    size_t n_test = n / 10;
    if (n_valid == 0) n_valid = 1;
    if (n_test == 0) n_test = 1;
    const size_t n_train = n - n_valid - n_test;

    ManifestDomain dom;
    dom.name = name;
    dom.files.reserve(n);
    for (size_t i = 0; i < n; ++i) {
      Split s = i < n_train            ? Split::kTrain
                : i < n_train + n_valid ? Split::kValid
                                        : Split::kTest;
      dom.files.push_back({shuffled[i], s});
    }
    manifest.domains.push_back(std::move(dom));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["domains"] = json::array();
  for (const auto& d : manifest.domains) {
    json files = json::array();
    for (const auto& f : d.files)
      files.push_back({{"path", f.path}, {"split", split_name(f.split)}});
    j["domains"].push_back({{"name", d.name}, {"files", files}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("manifest parse error in " + path + ": " + e.what());
  }
  DatasetManifest manifest;
  for (const auto& dj : j.at("domains")) {
    ManifestDomain dom;
    dom.name = dj.at("name").get<std::string>();
    for (const auto& fj : dj.at("files"))
      dom.files.push_back({fj.at("path").get<std::string>(),
                           split_from_name(fj.at("split").get<std::string>())});
    manifest.domains.push_back(std::move(dom));
  }
  return manifest;
}

}  // namespace timbre
