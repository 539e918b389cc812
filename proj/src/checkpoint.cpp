#include "reid/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace reid {

namespace {
constexpr const char* kMagic = "REIDTENSORS 1";
}

void save_tensor_archive(const std::string& path, const std::map<std::string, Tensor>& tensors,
                         uint64_t seed) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << kMagic << "\n";
  f << "seed " << seed << "\n";
  f << "count " << tensors.size() << "\n";
  for (const auto& [name, t] : tensors) {
    f << name << " f64 " << t.ndim();
    for (int d : t.shape()) f << " " << d;
    f << "\n";
  }
  f << "DATA\n";
  for (const auto& [name, t] : tensors) {
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double)) * t.size());
  }
  if (!f) throw DataError("write failed: " + path);
}

std::map<std::string, Tensor> load_tensor_archive(const std::string& path, uint64_t* seed_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line) || line != kMagic) throw DataError("bad archive magic in " + path);
  uint64_t seed = 0;
  size_t count = 0;
  {
    std::getline(f, line);
    std::istringstream is(line);
    std::string key;
    if (!(is >> key >> seed) || key != "seed") throw DataError("bad seed line in " + path);
  }
  {
    std::getline(f, line);
    std::istringstream is(line);
    std::string key;
    if (!(is >> key >> count) || key != "count") throw DataError("bad count line in " + path);
  }
  struct Entry {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(f, line)) throw DataError("truncated manifest in " + path);
    std::istringstream is(line);
    Entry e;
    std::string dtype;
    int nd = 0;
    if (!(is >> e.name >> dtype >> nd) || dtype != "f64")
      throw DataError("bad manifest entry in " + path + ": " + line);
    e.shape.resize(static_cast<size_t>(nd));
    for (int& d : e.shape)
      if (!(is >> d)) throw DataError("bad shape in " + path + ": " + line);
    entries.push_back(std::move(e));
  }
  if (!std::getline(f, line) || line != "DATA") throw DataError("missing DATA marker in " + path);
  std::map<std::string, Tensor> out;
  for (auto& e : entries) {
    const int n = shape_size(e.shape);
    std::vector<double> data(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(sizeof(double)) * n);
    if (!f) throw DataError("truncated payload in " + path + " at " + e.name);
    out.emplace(e.name, Tensor(e.shape, std::move(data)));
  }
  if (seed_out) *seed_out = seed;
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::map<std::string, Tensor> m;
  for (const auto& [name, t] : params) m.emplace(name, t);
  save_tensor_archive(path, m, params.seed());
}

ParamStore load_checkpoint(const std::string& path) {
  uint64_t seed = 0;
  auto m = load_tensor_archive(path, &seed);
  ParamStore store(seed);
  for (auto& [name, t] : m) store.insert(name, std::move(t));
  return store;
}

ParamStore load_checkpoint_validated(const std::string& path, const ParamStore& expected_layout) {
  ParamStore loaded = load_checkpoint(path);
  for (const auto& [name, t] : expected_layout) {
    if (!loaded.contains(name)) throw DataError("checkpoint missing parameter: " + name);
    if (loaded.at(name).shape() != t.shape())
      throw DataError("checkpoint shape mismatch for " + name + ": expected " + t.shape_str() +
                      ", got " + loaded.at(name).shape_str());
  }
  if (loaded.size() != expected_layout.size())
    throw DataError("checkpoint has unexpected extra parameters");
  return loaded;
}

}  // namespace reid
