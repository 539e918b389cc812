#pragma once

#include <functional>
#include <map>
#include <string>

#include "reid/autodiff.hpp"
#include "reid/params.hpp"

namespace reid {

// Per-forward-pass context: lifts parameters into graph leaves on demand and
// caches them so repeated use (shared weights) accumulates gradients on one
// node. The trainable predicate controls which leaves require grad; frozen
// parameters become constants.
class GraphCtx {
 public:
  explicit GraphCtx(const ParamStore& params,
                    std::function<bool(const std::string&)> trainable = nullptr)
      : params_(params), trainable_(std::move(trainable)) {}
  // the context only references the store; a temporary would dangle
  explicit GraphCtx(ParamStore&&, std::function<bool(const std::string&)> = nullptr) = delete;

  Var p(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    const bool req = trainable_ ? trainable_(path) : true;
    Var v = Var::leaf(params_.at(path), req);
    cache_.emplace(path, v);
    return v;
  }

  const ParamStore& params() const { return params_; }
  const std::map<std::string, Var>& leaves() const { return cache_; }

  // Gradients accumulated into the lifted leaves after backward().
  std::map<std::string, Tensor> grads() const {
    std::map<std::string, Tensor> out;
    for (const auto& [path, v] : cache_)
      if (v.requires_grad()) out.emplace(path, v.grad());
    return out;
  }

 private:
  const ParamStore& params_;
  std::function<bool(const std::string&)> trainable_;
  std::map<std::string, Var> cache_;
};

}  // namespace reid
