#include "reid/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "reid/errors.hpp"
#include "reid/params.hpp"

namespace fs = std::filesystem;

namespace reid {

uint64_t file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot checksum missing file: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
  }
  return h;
}

void RunManifest::write() const {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "manifest.txt");
  if (!f) throw DataError("cannot write manifest in " + out_dir);
  f << "command " << command << "\n";
  f << "config " << (config_path.empty() ? "-" : config_path) << "\n";
  f << "config_hash " << config_hash << "\n";
  f << "seed " << seed << "\n";
  f << "out_dir " << out_dir << "\n";
}

void RunManifest::append_checksums(const std::vector<std::string>& files) const {
  std::ofstream f(fs::path(out_dir) / "manifest.txt", std::ios::app);
  if (!f) throw DataError("cannot append to manifest in " + out_dir);
  for (const auto& file : files) {
    const fs::path p = fs::path(out_dir) / file;
    f << "checksum " << file << " " << file_checksum(p.string()) << "\n";
  }
}

}  // namespace reid
