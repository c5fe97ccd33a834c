#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowguide/core/prng.hpp"
#include "flowguide/core/tensor.hpp"

namespace flowguide::nn {

struct Parameter {
  std::string name;
  Tensor<float> value;
  Tensor<float> grad;
  Tensor<float> adam_m;
  Tensor<float> adam_v;
  bool trainable = true;
};

enum class Init { kZero, kHe };

/// Named parameters in registration order. Handles are stable indices.
class ParameterStore {
 public:
  /// Registers `name` with the given shape. He init draws N(0, 2 / fan_in)
  /// where fan_in is the product of all dims but the first.
  std::size_t add(const std::string& name, Dims dims, Init init, Prng& rng, float gain = 1.0f);

  Parameter& operator[](std::size_t handle) { return params_.at(handle); }
  const Parameter& operator[](std::size_t handle) const { return params_.at(handle); }
  std::size_t size() const { return params_.size(); }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }

  std::size_t handle(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Total scalar count.
  std::size_t scalar_count() const;
  void zero_grad();
  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);
  /// FNV-1a 64 over names and raw float bytes of parameters matching `prefix`.
  std::uint64_t checksum(const std::string& prefix = "") const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  float learning_rate = 2e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float grad_clip = 0.0f;  ///< global-norm clip; 0 disables
};

/// Adam with bias correction. Only trainable parameters are updated.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(ParameterStore& store);
  long long iterations() const { return t_; }

 private:
  AdamConfig config_;
  long long t_ = 0;
};

/// Versioned binary container:
///   magic "FGCKPT" (6 bytes), uint32 version, uint32 tensor count,
///   per tensor: uint32 name length, name bytes, uint32 rank, int32 dims[rank],
///   float32 data; then uint64 FNV-1a checksum of every preceding byte.
/// All integers and floats are little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  void put(const std::string& name, const Tensor<float>& t) { tensors.emplace_back(name, t); }
  const Tensor<float>& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

/// Adds every parameter value to `ckpt` under its name.
void export_parameters(const ParameterStore& store, Checkpoint& ckpt);
/// Copies values for every parameter of `store` from `ckpt` (shapes must match).
void import_parameters(ParameterStore& store, const Checkpoint& ckpt);

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace flowguide::nn
