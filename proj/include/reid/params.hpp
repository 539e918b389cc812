#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reid/tensor.hpp"

namespace reid {

// Named parameter tensors. Iteration order is the map's lexicographic order,
// which makes SGD updates and checkpoint layout deterministic.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }

  bool contains(const std::string& path) const { return params_.count(path) > 0; }
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  void insert(const std::string& path, Tensor t);

  size_t size() const { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  bool operator==(const ParamStore& o) const {
    return seed_ == o.seed_ && params_ == o.params_;
  }

 private:
  std::map<std::string, Tensor> params_;
  uint64_t seed_ = 0;
};

enum class ParamKind { weight, bias, gain };

struct ParamSpec {
  std::string path;
  std::vector<int> shape;
  int fan_in = 0;
  int fan_out = 0;
  ParamKind kind = ParamKind::weight;
};

// Declaration list for one architecture; filled by the model builders.
class ParamRegistry {
 public:
  void weight(const std::string& path, std::vector<int> shape, int fan_in, int fan_out);
  void bias(const std::string& path, std::vector<int> shape);
  // Layer-norm pair: path.g (ones) + path.b (zeros), both length d.
  void norm(const std::string& path, int d);
  // Linear layer convenience: path.w [din,dout] + path.b [dout].
  void linear(const std::string& path, int din, int dout);
  // Conv layer convenience: path.w [k,k,cin,cout] + path.b [cout].
  void conv(const std::string& path, int k, int cin, int cout);

  const std::vector<ParamSpec>& specs() const { return specs_; }

 private:
  std::vector<ParamSpec> specs_;
};

// Deterministic initialization: weights uniform in [-b, b] with
// b = sqrt(6 / (fan_in + fan_out)); biases zero. Each parameter draws from
// its own stream keyed by (seed, path), so unrelated config changes do not
// reshuffle other parameters.
ParamStore init_params(const ParamRegistry& registry, uint64_t seed);

// Splitmix-style stream for reproducible uniforms independent of libstdc++.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next_u64();
  double uniform();                      // [0,1)
  double uniform(double lo, double hi);  // [lo,hi)
  int uniform_int(int n);                // [0,n)
  double normal();

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull);
uint64_t fnv1a64(const std::string& s);
uint64_t mix_seed(uint64_t seed, const std::string& tag);

}  // namespace reid
