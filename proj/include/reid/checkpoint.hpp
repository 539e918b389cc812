#pragma once

#include <map>
#include <string>

#include "reid/params.hpp"
#include "reid/tensor.hpp"

namespace reid {

// Single-file tensor archive: a text manifest (names, shapes, dtype, seed)
// followed by raw little-endian row-major float64 payloads in manifest order.
// Used for checkpoints and for dataset pose-target bundles.

void save_tensor_archive(const std::string& path, const std::map<std::string, Tensor>& tensors,
                         uint64_t seed);
std::map<std::string, Tensor> load_tensor_archive(const std::string& path, uint64_t* seed_out);

void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// Loads and validates every tensor against the expected shapes (the
// architecture's registry output); mismatch or missing/extra entries throw.
ParamStore load_checkpoint_validated(const std::string& path, const ParamStore& expected_layout);

}  // namespace reid
