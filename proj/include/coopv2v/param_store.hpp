#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "coopv2v/tensor.hpp"

namespace coopv2v {

/// One named parameter with its gradient accumulator and Adam moments.
struct Param {
  Tensor value;
  Tensor grad;
  Tensor m;  // first moment
  Tensor v;  // second moment
  bool trainable = true;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, float f) {
  write_u32(os, std::bit_cast<std::uint32_t>(f));
}

inline float read_f32(std::istream& is) {
  return std::bit_cast<float>(read_u32(is));
}

}  // namespace detail

/// Named parameter collection with Adam state and a step counter.
/// The map is name-ordered, so iteration (and serialization) is stable.
class ParamStore {
 public:
  Param& create(const std::string& name, const std::vector<int>& shape,
                bool trainable = true) {
    if (params_.count(name))
      throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    Param p;
    p.value = Tensor(shape);
    p.grad = Tensor(shape);
    p.m = Tensor(shape);
    p.v = Tensor(shape);
    p.trainable = trainable;
    return params_.emplace(name, std::move(p)).first->second;
  }

  Param& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Param& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end())
      throw std::out_of_range("ParamStore: unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name); }
  std::size_t count() const { return params_.size(); }
  std::int64_t step() const { return step_; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
  }

  /// Bias-corrected Adam with decoupled-from-nothing classic L2 decay
  /// (decay added to the gradient). Clears gradients afterwards.
  void adam_step(const AdamConfig& cfg) {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params_) {
      if (!p.trainable) continue;
      for (std::int64_t i = 0; i < p.value.size(); ++i) {
        double g = p.grad[i] + cfg.weight_decay * p.value[i];
        p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
        p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
        double mhat = p.m[i] / bc1;
        double vhat = p.v[i] / bc2;
        p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
    }
    zero_grad();
  }

  // Checkpoint container: magic, count, then per parameter
  // name_len u32 | name | rank u32 | dims u32[] | trainable u8 | f32 data.
  // All integers and floats little-endian. Values are stored as 32-bit
  // floats; load() restores them widened to double with zeroed moments.
  static constexpr char kMagic[9] = "CPV2VCK1";

  void save(std::ostream& os) const {
    os.write(kMagic, 8);
    detail::write_u32(os, static_cast<std::uint32_t>(params_.size()));
    for (const auto& [name, p] : params_) {
      detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::write_u32(os, static_cast<std::uint32_t>(p.value.rank()));
      for (int d : p.value.shape)
        detail::write_u32(os, static_cast<std::uint32_t>(d));
      os.put(p.trainable ? 1 : 0);
      for (double v : p.value.data)
        detail::write_f32(os, static_cast<float>(v));
    }
  }

  void load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8))
      throw std::runtime_error("checkpoint: bad magic");
    std::uint32_t n = detail::read_u32(is);
    std::map<std::string, Param> loaded;
    for (std::uint32_t k = 0; k < n; ++k) {
      std::uint32_t name_len = detail::read_u32(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      std::uint32_t rank = detail::read_u32(is);
      std::vector<int> shape(rank);
      for (auto& d : shape) d = static_cast<int>(detail::read_u32(is));
      int trainable = is.get();
      if (!is) throw std::runtime_error("checkpoint: truncated stream");
      Param p;
      p.value = Tensor(shape);
      p.grad = Tensor(shape);
      p.m = Tensor(shape);
      p.v = Tensor(shape);
      p.trainable = trainable != 0;
      for (auto& v : p.value.data)
        v = static_cast<double>(detail::read_f32(is));
      loaded.emplace(std::move(name), std::move(p));
    }
    params_ = std::move(loaded);
    step_ = 0;
  }

  /// FNV-1a over the serialized checkpoint bytes.
  std::uint64_t checksum() const {
    std::ostringstream ss;
    save(ss);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : ss.str()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::map<std::string, Param> params_;
  std::int64_t step_ = 0;
};

}  // namespace coopv2v
