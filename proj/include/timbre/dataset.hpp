#pragma once

#include <map>
#include <string>
#include <vector>

#include "timbre/common.hpp"

namespace timbre {

enum class Split { kTrain, kValid, kTest };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct ManifestEntry {
  std::string path;
  Split split = Split::kTrain;
};

struct ManifestDomain {
  std::string name;
  std::vector<ManifestEntry> files;

  std::vector<std::string> paths_for(Split s) const;
};

struct DatasetManifest {
  std::vector<ManifestDomain> domains;

  const ManifestDomain& domain(const std::string& name) const;
  bool has_domain(const std::string& name) const;
  std::vector<std::string> domain_names() const;
};

// Deterministic 80/10/10 split: shuffle under `seed`, floor(n/10) each for
// valid and test, remainder to train.
DatasetManifest split_dataset(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& files_per_domain,
    uint64_t seed);

void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace timbre
