#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ecgkit/error.hpp"
#include "ecgkit/gemm.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/tensor.hpp"

namespace ecgkit {

enum class Mode { Train, Infer };
enum class Activation { None, Relu, Sigmoid };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Binary cross-entropy with the prediction clamped away from 0 and 1.
inline double binary_cross_entropy(double pred, int label) {
  constexpr double kClamp = 1e-7;
  const double p = std::min(1.0 - kClamp, std::max(kClamp, pred));
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

// Named parameter block with matching gradient storage.
struct ParamTensor {
  std::string name;
  std::vector<double> values;
  std::vector<double> grads;

  explicit ParamTensor(std::string n, std::size_t size, double fill = 0.0)
      : name(std::move(n)), values(size, fill), grads(size, 0.0) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string type() const = 0;
  virtual Dims output_dims(const Dims& in) const = 0;
  virtual Batch forward(const Batch& x, Mode mode, Rng& rng) = 0;
  virtual Batch backward(const Batch& dy) = 0;
  virtual std::vector<ParamTensor*> params() { return {}; }

  void zero_grads() {
    for (ParamTensor* p : params()) std::fill(p->grads.begin(), p->grads.end(), 0.0);
  }
  void sgd_step(double lr) {
    for (ParamTensor* p : params())
      for (std::size_t i = 0; i < p->values.size(); ++i)
        p->values[i] -= lr * p->grads[i];
  }
};

// ---------------------------------------------------------------------------
// Convolution (valid cross-correlation, stride 1).
//
// Kernels are stored as an S x K matrix with K = d*m*n and the column index
// enumerated as k = (dd*m + di)*n + dj, which makes each im2col row a
// contiguous shifted copy of one input plane row.
class ConvLayer : public Layer {
 public:
  ConvLayer(int m, int n, int d, int s)
      : m_(m), n_(n), d_(d), s_(s),
        weights_("kernels", static_cast<std::size_t>(s) * d * m * n),
        biases_("biases", static_cast<std::size_t>(s)) {
    if (m < 1 || n < 1 || d < 1 || s < 1)
      throw ShapeError("conv kernel dims must be positive");
  }

  void init(Rng& rng) {
    const double fan_in = static_cast<double>(m_) * n_ * d_;
    const double fan_out = static_cast<double>(m_) * n_ * s_;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : weights_.values) v = rng.uniform(-bound, bound);
    std::fill(biases_.values.begin(), biases_.values.end(), 0.0);
  }

  std::string type() const override { return "conv"; }
  int kern_m() const { return m_; }
  int kern_n() const { return n_; }
  int kern_d() const { return d_; }
  int kern_s() const { return s_; }

  double& kernel_at(int s, int di, int dj, int dd) {
    return weights_.values[static_cast<std::size_t>(s) * (d_ * m_ * n_) +
                           (static_cast<std::size_t>(dd) * m_ + di) * n_ + dj];
  }
  double& bias_at(int s) { return biases_.values[static_cast<std::size_t>(s)]; }

  Dims output_dims(const Dims& in) const override {
    if (in.d != d_) throw WiringError("conv input depth mismatch");
    if (in.h < m_ || in.w < n_) throw ShapeError("conv input smaller than kernel");
    return {in.h - m_ + 1, in.w - n_ + 1, s_};
  }

  Tensor3 apply(const Tensor3& x) const {
    const Dims out_dims = output_dims({x.h, x.w, x.d});
    const std::size_t kk = static_cast<std::size_t>(d_) * m_ * n_;
    const gemm::PackedA packed =
        gemm::pack_a(weights_.values.data(), kk, static_cast<std::size_t>(s_), kk);
    Tensor3 y(out_dims.h, out_dims.w, out_dims.d);
    forward_one(x, y, packed);
    return y;
  }

  Batch forward(const Batch& x, Mode, Rng&) override {
    cached_input_ = x;
    const std::size_t kk = static_cast<std::size_t>(d_) * m_ * n_;
    const gemm::PackedA packed =
        gemm::pack_a(weights_.values.data(), kk, static_cast<std::size_t>(s_), kk);
    Batch y(x.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Dims od = output_dims({x[i].h, x[i].w, x[i].d});
      y[i] = Tensor3(od.h, od.w, od.d);
      forward_one(x[i], y[i], packed);
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    const std::size_t kk = static_cast<std::size_t>(d_) * m_ * n_;
    const std::vector<double> wt = gemm::transpose(
        weights_.values.data(), static_cast<std::size_t>(s_), kk);
    const gemm::PackedA wt_packed =
        gemm::pack_a(wt.data(), static_cast<std::size_t>(s_), kk,
                     static_cast<std::size_t>(s_));

    const std::size_t b = dy.size();
    Batch dx(b);
    std::vector<std::vector<double>> dws(b), dbs(b);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < b; ++i) {
      dws[i].assign(weights_.grads.size(), 0.0);
      dbs[i].assign(biases_.grads.size(), 0.0);
      dx[i] = backward_one(cached_input_[i], dy[i], wt_packed, dws[i], dbs[i]);
    }
    // Fixed-order reduction keeps gradients reproducible.
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < weights_.grads.size(); ++j)
        weights_.grads[j] += dws[i][j];
      for (std::size_t j = 0; j < biases_.grads.size(); ++j)
        biases_.grads[j] += dbs[i][j];
    }
    return dx;
  }

  std::vector<ParamTensor*> params() override { return {&weights_, &biases_}; }

 private:
  static constexpr int kStripRows = 8;

  void im2col_strip(const Tensor3& x, int r0, int r1, int ow,
                    std::vector<double>& cols) const {
    const std::size_t ps = static_cast<std::size_t>(r1 - r0) * ow;
    std::size_t k = 0;
    for (int dd = 0; dd < d_; ++dd) {
      const double* plane = x.plane(dd);
      for (int di = 0; di < m_; ++di) {
        for (int dj = 0; dj < n_; ++dj, ++k) {
          double* dst = cols.data() + k * ps;
          for (int i = r0; i < r1; ++i) {
            const double* src = plane + static_cast<std::size_t>(i + di) * x.w + dj;
            std::copy(src, src + ow, dst);
            dst += ow;
          }
        }
      }
    }
  }

  void forward_one(const Tensor3& x, Tensor3& y, const gemm::PackedA& packed) const {
    const int oh = y.h, ow = y.w;
    const std::size_t kk = static_cast<std::size_t>(d_) * m_ * n_;
    std::vector<double> cols;
    for (int s = 0; s < s_; ++s) {
      double* plane = y.plane(s);
      std::fill(plane, plane + y.plane_size(), biases_.values[static_cast<std::size_t>(s)]);
    }
    for (int r0 = 0; r0 < oh; r0 += kStripRows) {
      const int r1 = std::min(oh, r0 + kStripRows);
      const std::size_t ps = static_cast<std::size_t>(r1 - r0) * ow;
      cols.resize(kk * ps);
      im2col_strip(x, r0, r1, ow, cols);
      gemm::accum_packed(y.data.data() + static_cast<std::size_t>(r0) * ow,
                         y.plane_size(), packed, cols.data(), ps, ps);
    }
  }

  Tensor3 backward_one(const Tensor3& x, const Tensor3& dy,
                       const gemm::PackedA& wt_packed, std::vector<double>& dw,
                       std::vector<double>& db) const {
    const int oh = dy.h, ow = dy.w;
    const std::size_t kk = static_cast<std::size_t>(d_) * m_ * n_;
    Tensor3 dx(x.h, x.w, x.d);

    for (int s = 0; s < s_; ++s) {
      const double* plane = dy.plane(s);
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.plane_size(); ++i) acc += plane[i];
      db[static_cast<std::size_t>(s)] += acc;
    }

    std::vector<double> cols, colst, dcols;
    for (int r0 = 0; r0 < oh; r0 += kStripRows) {
      const int r1 = std::min(oh, r0 + kStripRows);
      const std::size_t ps = static_cast<std::size_t>(r1 - r0) * ow;
      cols.resize(kk * ps);
      im2col_strip(x, r0, r1, ow, cols);

      // dW += dY_strip * cols^T, run as a packed gemm against the
      // transposed strip; the dot-product form thrashes the cache.
      colst.resize(ps * kk);
      for (std::size_t k = 0; k < kk; ++k)
        for (std::size_t p = 0; p < ps; ++p) colst[p * kk + k] = cols[k * ps + p];
      const gemm::PackedA dy_packed = gemm::pack_a(
          dy.data.data() + static_cast<std::size_t>(r0) * ow, dy.plane_size(),
          static_cast<std::size_t>(s_), ps);
      gemm::accum_packed(dw.data(), kk, dy_packed, colst.data(), kk, kk);

      // dcols = W^T * dY_strip
      dcols.assign(kk * ps, 0.0);
      gemm::accum_packed(dcols.data(), ps, wt_packed,
                         dy.data.data() + static_cast<std::size_t>(r0) * ow,
                         dy.plane_size(), ps);

      // col2im scatter-add.
      std::size_t k = 0;
      for (int dd = 0; dd < d_; ++dd) {
        double* plane = dx.plane(dd);
        for (int di = 0; di < m_; ++di) {
          for (int dj = 0; dj < n_; ++dj, ++k) {
            const double* src = dcols.data() + k * ps;
            for (int i = r0; i < r1; ++i) {
              double* dst = plane + static_cast<std::size_t>(i + di) * x.w + dj;
              for (int j = 0; j < ow; ++j) dst[j] += src[j];
              src += ow;
            }
          }
        }
      }
    }
    return dx;
  }

  int m_, n_, d_, s_;
  ParamTensor weights_;
  ParamTensor biases_;
  Batch cached_input_;
};

// ---------------------------------------------------------------------------
// Per-channel batch normalization over (batch, H, W).
class BatchNormLayer : public Layer {
 public:
  explicit BatchNormLayer(int channels, double epsilon = 1e-5, double momentum = 0.9)
      : channels_(channels), epsilon_(epsilon), momentum_(momentum),
        gamma_("gamma", static_cast<std::size_t>(channels), 1.0),
        beta_("beta", static_cast<std::size_t>(channels), 0.0),
        running_mean_(static_cast<std::size_t>(channels), 0.0),
        running_var_(static_cast<std::size_t>(channels), 1.0) {}

  std::string type() const override { return "batch_norm"; }
  int channels() const { return channels_; }
  double epsilon() const { return epsilon_; }
  double momentum() const { return momentum_; }
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }

  Dims output_dims(const Dims& in) const override {
    if (in.d != channels_) throw WiringError("batch norm channel mismatch");
    return in;
  }

  Batch forward(const Batch& x, Mode mode, Rng&) override {
    if (mode == Mode::Train && x.empty())
      throw InvalidInputError("batch norm requires a non-empty batch in train mode");
    if (x.empty()) return {};

    const std::size_t plane = x[0].plane_size();
    const double count = static_cast<double>(x.size() * plane);
    Batch y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = Tensor3(x[0].h, x[0].w, channels_);

    if (mode == Mode::Train) {
      cached_xhat_.assign(x.size(), Tensor3(x[0].h, x[0].w, channels_));
      cached_inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
      cached_count_ = count;
    }

#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
      double mean, var;
      if (mode == Mode::Train) {
        double sum = 0.0;
        for (const auto& t : x) {
          const double* p = t.plane(c);
          for (std::size_t i = 0; i < plane; ++i) sum += p[i];
        }
        mean = sum / count;
        double ss = 0.0;
        for (const auto& t : x) {
          const double* p = t.plane(c);
          for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mean) * (p[i] - mean);
        }
        var = ss / count;
        running_mean_[static_cast<std::size_t>(c)] =
            momentum_ * running_mean_[static_cast<std::size_t>(c)] + (1.0 - momentum_) * mean;
        running_var_[static_cast<std::size_t>(c)] =
            momentum_ * running_var_[static_cast<std::size_t>(c)] + (1.0 - momentum_) * var;
      } else {
        mean = running_mean_[static_cast<std::size_t>(c)];
        var = running_var_[static_cast<std::size_t>(c)];
      }

      const double inv_std = 1.0 / std::sqrt(var + epsilon_);
      const double g = gamma_.values[static_cast<std::size_t>(c)];
      const double b = beta_.values[static_cast<std::size_t>(c)];
      if (mode == Mode::Train) cached_inv_std_[static_cast<std::size_t>(c)] = inv_std;

      for (std::size_t s = 0; s < x.size(); ++s) {
        const double* in = x[s].plane(c);
        double* out = y[s].plane(c);
        double* xh = mode == Mode::Train ? cached_xhat_[s].plane(c) : nullptr;
        for (std::size_t i = 0; i < plane; ++i) {
          const double norm = (in[i] - mean) * inv_std;
          if (xh) xh[i] = norm;
          out[i] = g * norm + b;
        }
      }
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    const std::size_t plane = dy[0].plane_size();
    Batch dx(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i)
      dx[i] = Tensor3(dy[0].h, dy[0].w, channels_);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < channels_; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::size_t s = 0; s < dy.size(); ++s) {
        const double* g = dy[s].plane(c);
        const double* xh = cached_xhat_[s].plane(c);
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += g[i] * xh[i];
        }
      }
      gamma_.grads[static_cast<std::size_t>(c)] += sum_dy_xhat;
      beta_.grads[static_cast<std::size_t>(c)] += sum_dy;

      const double g = gamma_.values[static_cast<std::size_t>(c)];
      const double inv_std = cached_inv_std_[static_cast<std::size_t>(c)];
      const double mean_dy = sum_dy / cached_count_;
      const double mean_dy_xhat = sum_dy_xhat / cached_count_;
      for (std::size_t s = 0; s < dy.size(); ++s) {
        const double* gy = dy[s].plane(c);
        const double* xh = cached_xhat_[s].plane(c);
        double* out = dx[s].plane(c);
        for (std::size_t i = 0; i < plane; ++i)
          out[i] = g * inv_std * (gy[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    }
    return dx;
  }

  std::vector<ParamTensor*> params() override { return {&gamma_, &beta_}; }

 private:
  int channels_;
  double epsilon_;
  double momentum_;
  ParamTensor gamma_;
  ParamTensor beta_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
  Batch cached_xhat_;
  std::vector<double> cached_inv_std_;
  double cached_count_ = 0.0;
};

// ---------------------------------------------------------------------------
class ReluLayer : public Layer {
 public:
  std::string type() const override { return "relu"; }
  Dims output_dims(const Dims& in) const override { return in; }

  Batch forward(const Batch& x, Mode, Rng&) override {
    cached_input_ = x;
    Batch y = x;
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < y.size(); ++s)
      for (double& v : y[s].data) v = v > 0.0 ? v : 0.0;
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dx = dy;
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < dy.size(); ++s)
      for (std::size_t i = 0; i < dy[s].data.size(); ++i)
        dx[s].data[i] = cached_input_[s].data[i] > 0.0 ? dy[s].data[i] : 0.0;
    return dx;
  }

 private:
  Batch cached_input_;
};

// ---------------------------------------------------------------------------
// Non-overlapping max pooling; the extent must divide the input.
class MaxPoolLayer : public Layer {
 public:
  MaxPoolLayer(int m, int n) : m_(m), n_(n) {
    if (m < 1 || n < 1) throw ShapeError("pool extent must be positive");
  }

  std::string type() const override { return "max_pool"; }
  int extent_m() const { return m_; }
  int extent_n() const { return n_; }

  Dims output_dims(const Dims& in) const override {
    if (in.h % m_ != 0 || in.w % n_ != 0)
      throw ShapeError("pool extent must divide the input dimensions");
    return {in.h / m_, in.w / n_, in.d};
  }

  Tensor3 apply(const Tensor3& x, std::vector<std::size_t>* argmax = nullptr) const {
    const Dims od = output_dims({x.h, x.w, x.d});
    Tensor3 y(od.h, od.w, od.d);
    if (argmax) argmax->resize(y.size());
    for (int dd = 0; dd < x.d; ++dd) {
      for (int oi = 0; oi < od.h; ++oi) {
        for (int oj = 0; oj < od.w; ++oj) {
          double best = x.at(oi * m_, oj * n_, dd);
          std::size_t best_idx =
              (static_cast<std::size_t>(dd) * x.h + oi * m_) * x.w + oj * n_;
          for (int di = 0; di < m_; ++di) {
            for (int dj = 0; dj < n_; ++dj) {
              const double v = x.at(oi * m_ + di, oj * n_ + dj, dd);
              if (v > best) {
                best = v;
                best_idx = (static_cast<std::size_t>(dd) * x.h + oi * m_ + di) * x.w +
                           oj * n_ + dj;
              }
            }
          }
          y.at(oi, oj, dd) = best;
          if (argmax)
            (*argmax)[(static_cast<std::size_t>(dd) * od.h + oi) * od.w + oj] = best_idx;
        }
      }
    }
    return y;
  }

  Batch forward(const Batch& x, Mode, Rng&) override {
    cached_argmax_.resize(x.size());
    cached_in_dims_.resize(x.size());
    Batch y(x.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < x.size(); ++i) {
      cached_in_dims_[i] = {x[i].h, x[i].w, x[i].d};
      y[i] = apply(x[i], &cached_argmax_[i]);
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dx(dy.size());
    for (std::size_t s = 0; s < dy.size(); ++s) {
      dx[s] = Tensor3(cached_in_dims_[s].h, cached_in_dims_[s].w, cached_in_dims_[s].d);
      for (std::size_t i = 0; i < dy[s].data.size(); ++i)
        dx[s].data[cached_argmax_[s][i]] += dy[s].data[i];
    }
    return dx;
  }

 private:
  int m_, n_;
  std::vector<std::vector<std::size_t>> cached_argmax_;
  std::vector<Dims> cached_in_dims_;
};

// ---------------------------------------------------------------------------
class FlattenLayer : public Layer {
 public:
  std::string type() const override { return "flatten"; }
  Dims output_dims(const Dims& in) const override {
    return {1, 1, static_cast<int>(in.count())};
  }

  Batch forward(const Batch& x, Mode, Rng&) override {
    cached_in_dims_.resize(x.size());
    Batch y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      cached_in_dims_[i] = {x[i].h, x[i].w, x[i].d};
      y[i] = Tensor3(1, 1, static_cast<int>(x[i].size()));
      y[i].data = x[i].data;
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dx(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      dx[i] = Tensor3(cached_in_dims_[i].h, cached_in_dims_[i].w, cached_in_dims_[i].d);
      dx[i].data = dy[i].data;
    }
    return dx;
  }

 private:
  std::vector<Dims> cached_in_dims_;
};

// ---------------------------------------------------------------------------
// Fully connected layer, weights stored (in, out) row-major.
class DenseLayer : public Layer {
 public:
  DenseLayer(int in, int out, Activation act)
      : in_(in), out_(out), act_(act),
        weights_("weights", static_cast<std::size_t>(in) * out),
        biases_("biases", static_cast<std::size_t>(out)) {
    if (in < 1 || out < 1) throw ShapeError("dense dims must be positive");
  }

  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / (static_cast<double>(in_) + out_));
    for (double& v : weights_.values) v = rng.uniform(-bound, bound);
    std::fill(biases_.values.begin(), biases_.values.end(), 0.0);
  }

  std::string type() const override { return "dense"; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Activation activation() const { return act_; }
  double& weight_at(int i, int o) {
    return weights_.values[static_cast<std::size_t>(i) * out_ + o];
  }
  double& bias_at(int o) { return biases_.values[static_cast<std::size_t>(o)]; }

  Dims output_dims(const Dims& in) const override {
    if (static_cast<int>(in.count()) != in_)
      throw WiringError("dense input length mismatch");
    return {1, 1, out_};
  }

  // y = act(W^T x + b) for a flat input vector.
  std::vector<double> apply(const std::vector<double>& x) const {
    return apply_with(x, act_);
  }

  std::vector<double> apply_with(const std::vector<double>& x, Activation act) const {
    if (static_cast<int>(x.size()) != in_)
      throw WiringError("dense input length mismatch");
    std::vector<double> z(biases_.values);
    for (int i = 0; i < in_; ++i) {
      const double xi = x[static_cast<std::size_t>(i)];
      const double* w = weights_.values.data() + static_cast<std::size_t>(i) * out_;
      for (int o = 0; o < out_; ++o) z[static_cast<std::size_t>(o)] += xi * w[o];
    }
    apply_activation(z, act);
    return z;
  }

  Batch forward(const Batch& x, Mode, Rng&) override {
    for (const auto& t : x)
      if (static_cast<int>(t.size()) != in_)
        throw WiringError("dense input length mismatch");
    cached_input_.resize(x.size());
    cached_preact_.resize(x.size());
    Batch y(x.size());
#pragma omp parallel for schedule(static)
    for (std::size_t s = 0; s < x.size(); ++s) {
      cached_input_[s] = x[s].data;
      std::vector<double> z(biases_.values);
      for (int i = 0; i < in_; ++i) {
        const double xi = x[s].data[static_cast<std::size_t>(i)];
        const double* w = weights_.values.data() + static_cast<std::size_t>(i) * out_;
        for (int o = 0; o < out_; ++o) z[static_cast<std::size_t>(o)] += xi * w[o];
      }
      cached_preact_[s] = z;
      apply_activation(z);
      y[s] = Tensor3(1, 1, out_);
      y[s].data = std::move(z);
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    Batch dz(dy.size());
    for (std::size_t s = 0; s < dy.size(); ++s) {
      dz[s] = dy[s];
      switch (act_) {
        case Activation::None:
          break;
        case Activation::Relu:
          for (int o = 0; o < out_; ++o)
            if (cached_preact_[s][static_cast<std::size_t>(o)] <= 0.0)
              dz[s].data[static_cast<std::size_t>(o)] = 0.0;
          break;
        case Activation::Sigmoid:
          for (int o = 0; o < out_; ++o) {
            const double p = sigmoid(cached_preact_[s][static_cast<std::size_t>(o)]);
            dz[s].data[static_cast<std::size_t>(o)] *= p * (1.0 - p);
          }
          break;
      }
    }
    return backward_preact(dz);
  }

  // Backward entry for gradients already taken w.r.t. the pre-activation,
  // used by the sigmoid + cross-entropy shortcut at the output layer.
  Batch backward_preact(const Batch& dz) {
    Batch dx(dz.size());
    for (std::size_t s = 0; s < dz.size(); ++s) {
      const std::vector<double>& x = cached_input_[s];
      const double* g = dz[s].data.data();
      for (int o = 0; o < out_; ++o)
        biases_.grads[static_cast<std::size_t>(o)] += g[o];
      dx[s] = Tensor3(1, 1, in_);
      // Rows of dW are disjoint across i, so the feature loop is safe to
      // split; samples stay in order.
#pragma omp parallel for schedule(static)
      for (int i = 0; i < in_; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        double* wg = weights_.grads.data() + static_cast<std::size_t>(i) * out_;
        const double* w = weights_.values.data() + static_cast<std::size_t>(i) * out_;
        double acc = 0.0;
        for (int o = 0; o < out_; ++o) {
          wg[o] += xi * g[o];
          acc += w[o] * g[o];
        }
        dx[s].data[static_cast<std::size_t>(i)] = acc;
      }
    }
    return dx;
  }

  std::vector<ParamTensor*> params() override { return {&weights_, &biases_}; }

 private:
  void apply_activation(std::vector<double>& z) const { apply_activation(z, act_); }

  static void apply_activation(std::vector<double>& z, Activation act) {
    switch (act) {
      case Activation::None:
        break;
      case Activation::Relu:
        for (double& v : z) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::Sigmoid:
        for (double& v : z) v = sigmoid(v);
        break;
    }
  }

  int in_, out_;
  Activation act_;
  ParamTensor weights_;
  ParamTensor biases_;
  std::vector<std::vector<double>> cached_input_;
  std::vector<std::vector<double>> cached_preact_;
};

// ---------------------------------------------------------------------------
// Inverted dropout: train mode zeroes each element with probability rate
// and scales survivors by 1/(1-rate); inference is the identity.
class DropoutLayer : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidConfigError("dropout rate in [0,1)");
  }

  std::string type() const override { return "dropout"; }
  double rate() const { return rate_; }
  Dims output_dims(const Dims& in) const override { return in; }

  Batch forward(const Batch& x, Mode mode, Rng& rng) override {
    if (mode == Mode::Infer || rate_ == 0.0) {
      identity_ = true;
      return x;
    }
    identity_ = false;
    const double scale = 1.0 / (1.0 - rate_);
    masks_.resize(x.size());
    Batch y = x;
    for (std::size_t s = 0; s < x.size(); ++s) {
      masks_[s].resize(x[s].data.size());
      for (std::size_t i = 0; i < x[s].data.size(); ++i) {
        const bool keep = rng.uniform01() >= rate_;
        masks_[s][i] = keep ? scale : 0.0;
        y[s].data[i] *= masks_[s][i];
      }
    }
    return y;
  }

  Batch backward(const Batch& dy) override {
    if (identity_) return dy;
    Batch dx = dy;
    for (std::size_t s = 0; s < dy.size(); ++s)
      for (std::size_t i = 0; i < dy[s].data.size(); ++i) dx[s].data[i] *= masks_[s][i];
    return dx;
  }

 private:
  double rate_;
  bool identity_ = true;
  std::vector<std::vector<double>> masks_;
};

// ---------------------------------------------------------------------------
// Free-function forms of the individual operations.

inline Tensor3 conv2d(const Tensor3& input, const ConvLayer& layer) {
  return layer.apply(input);
}

inline Batch batch_norm(const Batch& input, BatchNormLayer& layer, Mode mode) {
  Rng unused(0);
  return layer.forward(input, mode, unused);
}

inline Tensor3 max_pool(const Tensor3& input, int m, int n) {
  MaxPoolLayer layer(m, n);
  return layer.apply(input);
}

inline std::vector<double> dense(const std::vector<double>& input,
                                 const DenseLayer& layer, Activation act) {
  return layer.apply_with(input, act);
}

inline std::vector<double> dropout(const std::vector<double>& input, double rate,
                                   Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidConfigError("dropout rate in [0,1)");
  if (mode == Mode::Infer || rate == 0.0) return input;
  Rng rng(seed);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> out = input;
  for (double& v : out) v = (rng.uniform01() >= rate) ? v * scale : 0.0;
  return out;
}

}  // namespace ecgkit
