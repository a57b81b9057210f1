#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/image.hpp"
#include "ecgkit/model.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/signal.hpp"
#include "ecgkit/spectral.hpp"
#include "ecgkit/stats.hpp"

namespace ecgkit {
namespace io {

// All CSV output uses 9 significant digits.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Signal CSV: header `t_ms,mv`, one row per sample.

inline void write_signal_csv(const Signal& sig, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "t_ms,mv\n";
  for (std::size_t i = 0; i < sig.samples.size(); ++i)
    out << format_g9(sig.time_at(i)) << ',' << format_g9(sig.samples[i]) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline Signal read_signal_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty signal file: " + path);

  std::vector<double> times, values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed signal row: " + line);
    times.push_back(std::stod(line.substr(0, comma)));
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (values.empty()) throw IoError("signal file has no samples: " + path);

  Signal sig;
  sig.samples = std::move(values);
  sig.t0_ms = times.front();
  sig.sample_period_ms =
      times.size() > 1
          ? (times.back() - times.front()) / static_cast<double>(times.size() - 1)
          : 1.0;
  return sig;
}

// ---------------------------------------------------------------------------
// PNG, via libpng. Grayscale or RGB input; RGB collapses through the
// BT.709 luma weights. Output is always 8-bit grayscale.

inline GrayImage read_png_gray(const std::string& path, int dpi = 600) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("failed to decode " + path);
  }

  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const png_byte channels = png_get_channels(png, info);

  std::vector<png_byte> rowbuf(png_get_rowbytes(png, info));
  GrayImage img(static_cast<int>(height), static_cast<int>(width), 1.0, dpi);
  for (png_uint_32 r = 0; r < height; ++r) {
    png_read_row(png, rowbuf.data(), nullptr);
    for (png_uint_32 c = 0; c < width; ++c) {
      double value;
      if (channels >= 3) {
        const double luma = 0.2126 * rowbuf[c * channels] +
                            0.7152 * rowbuf[c * channels + 1] +
                            0.0722 * rowbuf[c * channels + 2];
        value = luma / 255.0;
      } else {
        value = rowbuf[c * channels] / 255.0;
      }
      img.at(static_cast<int>(r), static_cast<int>(c)) = value;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

inline void write_png_gray(const GrayImage& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot open " + path + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("failed to encode " + path);
  }

  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols),
               static_cast<png_uint_32>(img.rows), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> rowbuf(static_cast<std::size_t>(img.cols));
  for (int r = 0; r < img.rows; ++r) {
    for (int c = 0; c < img.cols; ++c) {
      double v = img.at(r, c);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      rowbuf[static_cast<std::size_t>(c)] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline void write_beat_image_png(const BeatImage& img, const std::string& path) {
  GrayImage g(kBeatImageSize, kBeatImageSize);
  g.pixels = img.pixels;
  write_png_gray(g, path);
}

inline BeatImage read_beat_image_png(const std::string& path) {
  const GrayImage g = read_png_gray(path);
  if (g.rows != kBeatImageSize || g.cols != kBeatImageSize)
    throw IoError("beat image must be 138x138: " + path);
  BeatImage img;
  img.pixels = g.pixels;
  return img;
}

// ---------------------------------------------------------------------------
// Spectrum tables.

inline void write_spectrum_table_csv(const SpectrumTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "freq_hz";
  for (const auto& id : table.subject_ids) out << ',' << id;
  out << '\n';
  for (std::size_t b = 0; b < table.frequencies_hz.size(); ++b) {
    out << format_g9(table.frequencies_hz[b]);
    for (const auto& row : table.rows) out << ',' << format_g9(row[b]);
    out << '\n';
  }
}

inline SpectrumTable read_spectrum_table_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty table: " + path);

  SpectrumTable table;
  {
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        if (cell != "freq_hz") throw IoError("bad spectrum table header: " + path);
        first = false;
      } else {
        table.subject_ids.push_back(cell);
      }
    }
  }
  table.rows.assign(table.subject_ids.size(), {});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col == 0)
        table.frequencies_hz.push_back(std::stod(cell));
      else if (col - 1 < table.rows.size())
        table.rows[col - 1].push_back(std::stod(cell));
      ++col;
    }
  }
  return table;
}

inline void write_mean_spectrum_csv(const std::vector<MeanSpectrumPoint>& mean,
                                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "freq_hz,mean,sd\n";
  for (const auto& p : mean) {
    out << format_g9(p.frequency_hz) << ',' << format_g9(p.mean) << ',';
    if (p.sd) out << format_g9(*p.sd);
    out << '\n';
  }
}

// Comparison rows, column order fixed.
inline void write_comparison_csv(const std::vector<ComparisonRow>& rows,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "freq_hz,mean_N,sd_N,mean_A,sd_A,test,statistic,p_value,significant\n";
  for (const auto& r : rows) {
    const char* test = r.chosen_test == TestMethod::MWU ? "MWU"
                       : r.welch                        ? "WELCH"
                                                        : "T";
    out << format_g9(r.frequency_hz) << ',' << format_g9(r.mean_n) << ','
        << format_g9(r.sd_n) << ',' << format_g9(r.mean_a) << ',' << format_g9(r.sd_a)
        << ',' << test << ',' << format_g9(r.statistic) << ',' << format_g9(r.p_value)
        << ',' << (r.significant ? 1 : 0) << '\n';
  }
}

inline void write_curves_csv(const std::vector<EpochStats>& curves, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,train_acc,test_loss,test_acc\n";
  for (const auto& e : curves)
    out << e.epoch << ',' << format_g9(e.train_loss) << ',' << format_g9(e.train_acc)
        << ',' << format_g9(e.test_loss) << ',' << format_g9(e.test_acc) << '\n';
}

}  // namespace io
}  // namespace ecgkit
