#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ecgkit/error.hpp"

namespace ecgkit {

// Grayscale raster, values in [0,1] with black = 0 and white = 1.
// Row-major storage.
struct GrayImage {
  int rows = 0;
  int cols = 0;
  int dpi = 600;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(int r, int c, double fill = 1.0, int dpi_ = 600)
      : rows(r), cols(c), dpi(dpi_),
        pixels(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }

  void validate() const {
    if (rows < 5 || cols < 5)
      throw InvalidInputError("image must be at least 5x5");
    if (dpi <= 0) throw InvalidInputError("dpi must be positive");
    if (pixels.size() != static_cast<std::size_t>(rows) * cols)
      throw InvalidInputError("pixel buffer size mismatch");
    for (double p : pixels)
      if (!(p >= 0.0 && p <= 1.0))
        throw InvalidInputError("gray value outside [0,1]");
  }
};

// Binary raster, black = 0 and white = 1.
struct BinaryImage {
  int rows = 0;
  int cols = 0;
  int dpi = 600;
  std::vector<std::uint8_t> pixels;

  BinaryImage() = default;
  BinaryImage(int r, int c, std::uint8_t fill = 1, int dpi_ = 600)
      : rows(r), cols(c), dpi(dpi_),
        pixels(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  std::uint8_t& at(int r, int c) {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }
  std::uint8_t at(int r, int c) const {
    return pixels[static_cast<std::size_t>(r) * cols + c];
  }

  bool is_black(int r, int c) const { return at(r, c) == 0; }

  std::size_t count_black() const {
    std::size_t n = 0;
    for (auto p : pixels) n += (p == 0);
    return n;
  }

  // Widening cast for re-thresholding round trips.
  GrayImage to_gray() const {
    GrayImage g(rows, cols, 1.0, dpi);
    for (std::size_t i = 0; i < pixels.size(); ++i)
      g.pixels[i] = static_cast<double>(pixels[i]);
    return g;
  }
};

}  // namespace ecgkit
