#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coopv2v {

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

inline std::int64_t shape_size(const std::vector<int>& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

/// Dense real tensor, row-major. Rank 1..4 is what the stack uses:
/// (N) vectors, (M,N) matrices, (C,H,W) feature maps, (O,I,Kh,Kw) kernels.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    for (int d : shape)
      if (d <= 0)
        throw std::invalid_argument("Tensor: nonpositive extent in " +
                                    shape_str(shape));
    data.assign(static_cast<std::size_t>(shape_size(shape)), fill);
  }

  static Tensor scalar(double v) {
    Tensor t(std::vector<int>{1});
    t.data[0] = v;
    return t;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double operator[](std::int64_t i) const {
    return data[static_cast<std::size_t>(i)];
  }
  double& operator[](std::int64_t i) {
    return data[static_cast<std::size_t>(i)];
  }

  // (C,H,W)
  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  // (O,I,Kh,Kw)
  double& at4(int o, int i, int y, int x) {
    return data[((static_cast<std::size_t>(o) * shape[1] + i) * shape[2] + y) *
                    shape[3] +
                x];
  }
  double at4(int o, int i, int y, int x) const {
    return data[((static_cast<std::size_t>(o) * shape[1] + i) * shape[2] + y) *
                    shape[3] +
                x];
  }

  // (M,N)
  double& at2(int r, int c) {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
  }
  double at2(int r, int c) const {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
  }

  void fill(double v) {
    for (double& x : data) x = v;
  }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace coopv2v
