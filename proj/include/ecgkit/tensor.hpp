#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ecgkit/error.hpp"

namespace ecgkit {

// Dense order-3 tensor in planar layout: channel, then row, then column.
// data[(d * h + i) * w + j].
struct Tensor3 {
  int h = 0;
  int w = 0;
  int d = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int h_, int w_, int d_, double fill = 0.0)
      : h(h_), w(w_), d(d_),
        data(static_cast<std::size_t>(h_) * w_ * d_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  double* plane(int dd) { return data.data() + static_cast<std::size_t>(dd) * plane_size(); }
  const double* plane(int dd) const {
    return data.data() + static_cast<std::size_t>(dd) * plane_size();
  }

  double& at(int i, int j, int dd) {
    return data[(static_cast<std::size_t>(dd) * h + i) * w + j];
  }
  double at(int i, int j, int dd) const {
    return data[(static_cast<std::size_t>(dd) * h + i) * w + j];
  }

  void validate() const {
    if (h <= 0 || w <= 0 || d <= 0)
      throw ShapeError("tensor dimensions must be positive");
    if (data.size() != static_cast<std::size_t>(h) * w * d)
      throw ShapeError("tensor buffer size mismatch");
    for (double v : data)
      if (!std::isfinite(v)) throw InvalidInputError("non-finite tensor value");
  }
};

using Batch = std::vector<Tensor3>;

struct Dims {
  int h = 0;
  int w = 0;
  int d = 0;

  bool operator==(const Dims&) const = default;
  std::size_t count() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
           static_cast<std::size_t>(d);
  }
};

}  // namespace ecgkit
