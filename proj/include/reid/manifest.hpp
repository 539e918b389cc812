#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace reid {

// Run provenance record, written into the output directory before any other
// artifact. Checksums of produced files are appended once the run completes.
struct RunManifest {
  std::string command;
  std::string config_path;  // empty when no --config file was given
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::string out_dir;

  void write() const;  // out_dir/manifest.txt
  void append_checksums(const std::vector<std::string>& files) const;
};

uint64_t file_checksum(const std::string& path);

}  // namespace reid
