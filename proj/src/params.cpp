#include "reid/params.hpp"

#include <cmath>

namespace reid {

Tensor& ParamStore::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw ContractError("unknown parameter: " + path);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw ContractError("unknown parameter: " + path);
  return it->second;
}

void ParamStore::insert(const std::string& path, Tensor t) {
  if (params_.count(path)) throw ContractError("duplicate parameter: " + path);
  params_.emplace(path, std::move(t));
}

void ParamRegistry::weight(const std::string& path, std::vector<int> shape, int fan_in,
                           int fan_out) {
  specs_.push_back({path, std::move(shape), fan_in, fan_out, ParamKind::weight});
}

void ParamRegistry::bias(const std::string& path, std::vector<int> shape) {
  specs_.push_back({path, std::move(shape), 0, 0, ParamKind::bias});
}

void ParamRegistry::norm(const std::string& path, int d) {
  specs_.push_back({path + ".g", {d}, 0, 0, ParamKind::gain});
  bias(path + ".b", {d});
}

void ParamRegistry::linear(const std::string& path, int din, int dout) {
  weight(path + ".w", {din, dout}, din, dout);
  bias(path + ".b", {dout});
}

void ParamRegistry::conv(const std::string& path, int k, int cin, int cout) {
  weight(path + ".w", {k, k, cin, cout}, k * k * cin, k * k * cout);
  bias(path + ".b", {cout});
}

ParamStore init_params(const ParamRegistry& registry, uint64_t seed) {
  ParamStore store(seed);
  for (const auto& spec : registry.specs()) {
    for (int d : spec.shape)
      if (d <= 0)
        throw ConfigError("invalid shape " + shape_to_string(spec.shape) + " for parameter '" +
                          spec.path + "'");
    Tensor t(spec.shape);
    if (spec.kind == ParamKind::weight) {
      if (spec.fan_in <= 0 || spec.fan_out <= 0)
        throw ConfigError("invalid fan for parameter '" + spec.path + "'");
      const double b = std::sqrt(6.0 / (spec.fan_in + spec.fan_out));
      Rng rng(mix_seed(seed, spec.path));
      for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(-b, b);
    } else if (spec.kind == ParamKind::gain) {
      for (int i = 0; i < t.size(); ++i) t[i] = 1.0;
    }
    store.insert(spec.path, std::move(t));
  }
  return store;
}

uint64_t Rng::next_u64() {
  // splitmix64
  state_ += 0x9e3779b97f4a7c15ull;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * M_PI * u2);
  have_spare_ = true;
  return r * std::cos(2.0 * M_PI * u2);
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

uint64_t mix_seed(uint64_t seed, const std::string& tag) {
  uint64_t h = fnv1a64(tag);
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace reid
