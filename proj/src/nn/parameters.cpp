#include "flowguide/nn/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowguide/core/errors.hpp"

namespace flowguide::nn {

namespace {

constexpr char kMagic[6] = {'F', 'G', 'C', 'K', 'P', 'T'};

void append_bytes(std::string& buf, const void* data, std::size_t n) {
  buf.append(static_cast<const char*>(data), n);
}

template <typename T>
void append_le(std::string& buf, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  append_bytes(buf, &v, sizeof(T));
}

template <typename T>
T take_le(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::size_t ParameterStore::add(const std::string& name, Dims dims, Init init, Prng& rng, float gain) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
  Parameter p;
  p.name = name;
  p.value = Tensor<float>(dims);
  if (init != Init::kZero) {
    Index fan_in = 1;
    for (std::size_t i = 1; i < dims.size(); ++i) fan_in *= dims[i];
    const double stddev = gain * std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] = static_cast<float>(stddev * rng.normal());
  }
  p.grad = Tensor<float>(dims);
  p.adam_m = Tensor<float>(dims);
  p.adam_v = Tensor<float>(dims);
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return params_.size() - 1;
}

std::size_t ParameterStore::handle(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.array().setZero();
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }
}

std::uint64_t ParameterStore::checksum(const std::string& prefix) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(float), h);
  }
  return h;
}

void Adam::step(ParameterStore& store) {
  ++t_;
  float clip_scale = 1.0f;
  if (config_.grad_clip > 0.0f) {
    double sq = 0.0;
    for (const auto& p : store.all()) {
      if (p.trainable) sq += p.grad.array().template cast<double>().square().sum();
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) clip_scale = static_cast<float>(config_.grad_clip / norm);
  }
  const float bc1 = 1.0f - static_cast<float>(std::pow(config_.beta1, static_cast<double>(t_)));
  const float bc2 = 1.0f - static_cast<float>(std::pow(config_.beta2, static_cast<double>(t_)));
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    const auto g = p.grad.array() * clip_scale;
    p.adam_m.array() = config_.beta1 * p.adam_m.array() + (1.0f - config_.beta1) * g;
    p.adam_v.array() = config_.beta2 * p.adam_v.array() + (1.0f - config_.beta2) * g.square();
    p.value.array() -= config_.learning_rate * (p.adam_m.array() / bc1) /
                       ((p.adam_v.array() / bc2).sqrt() + config_.epsilon);
  }
}

const Tensor<float>& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor named " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::string buf;
  append_bytes(buf, kMagic, sizeof(kMagic));
  append_le<std::uint32_t>(buf, kVersion);
  append_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    append_le<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    append_bytes(buf, name.data(), name.size());
    append_le<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.dims()) append_le<std::int32_t>(buf, static_cast<std::int32_t>(d));
    for (Index i = 0; i < t.size(); ++i) append_le<float>(buf, t[i]);
  }
  append_le<std::uint64_t>(buf, fnv1a64(buf.data(), buf.size()));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) + 16 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint: " + path.string());
  }
  std::size_t end = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + end, sizeof(stored));
  if (stored != fnv1a64(buf.data(), end)) throw IoError("checkpoint checksum mismatch: " + path.string());
  std::size_t pos = sizeof(kMagic);
  const auto version = take_le<std::uint32_t>(buf, pos);
  if (version != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  const auto count = take_le<std::uint32_t>(buf, pos);
  Checkpoint ckpt;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = take_le<std::uint32_t>(buf, pos);
    if (pos + len > end) throw IoError("checkpoint truncated");
    std::string name = buf.substr(pos, len);
    pos += len;
    const auto rank = take_le<std::uint32_t>(buf, pos);
    Dims dims;
    for (std::uint32_t r = 0; r < rank; ++r) dims.push_back(take_le<std::int32_t>(buf, pos));
    Tensor<float> t(dims);
    for (Index i = 0; i < t.size(); ++i) t[i] = take_le<float>(buf, pos);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (pos != end) throw IoError("trailing bytes in checkpoint " + path.string());
  return ckpt;
}

void export_parameters(const ParameterStore& store, Checkpoint& ckpt) {
  for (const auto& p : store.all()) ckpt.put(p.name, p.value);
}

void import_parameters(ParameterStore& store, const Checkpoint& ckpt) {
  for (auto& p : store.all()) {
    const Tensor<float>& t = ckpt.get(p.name);
    if (t.dims() != p.value.dims()) throw IoError("checkpoint shape mismatch for " + p.name);
    p.value = t;
  }
}

}  // namespace flowguide::nn
