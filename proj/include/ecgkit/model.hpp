#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecgkit/cnn.hpp"
#include "ecgkit/error.hpp"
#include "ecgkit/preproc.hpp"
#include "ecgkit/random.hpp"
#include "ecgkit/tensor.hpp"

namespace ecgkit {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidConfigError("learning rate must be positive");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
      throw InvalidConfigError("split ratio must lie in (0,1)");
    if (batch_size < 1) throw InvalidConfigError("batch size must be >= 1");
    if (epochs < 1) throw InvalidConfigError("epochs must be >= 1");
  }
};

struct Metrics {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  double mean_loss = 0.0;

  static Metrics from_counts(std::size_t tp, std::size_t tn, std::size_t fp,
                             std::size_t fn, double mean_loss = 0.0) {
    Metrics m;
    m.tp = tp;
    m.tn = tn;
    m.fp = fp;
    m.fn = fn;
    m.mean_loss = mean_loss;
    const std::size_t total = tp + tn + fp + fn;
    m.accuracy = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
    if (tp + fn > 0)
      m.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp > 0)
      m.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return m;
  }
};

struct ModelMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs_trained = 0;
  Dims input_dims{kBeatImageSize, kBeatImageSize, 1};
  std::optional<TrainConfig> config;   // set by train()
  std::optional<Metrics> metrics;      // final test metrics, set by train()
};

// Ordered layer stack. The output head must be a sigmoid dense layer with a
// single unit; loss gradients are taken directly against its
// pre-activation.
class Model {
 public:
  explicit Model(Dims input_dims) : input_dims_(input_dims) {
    meta_.input_dims = input_dims;
  }

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Appends a layer and folds the shape chain; dimension conflicts throw
  // at construction time.
  Model& add(std::unique_ptr<Layer> layer) {
    const Dims in = layers_.empty() ? input_dims_ : out_dims_.back();
    out_dims_.push_back(layer->output_dims(in));
    layers_.push_back(std::move(layer));
    return *this;
  }

  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
  Dims input_dims() const { return input_dims_; }
  const std::vector<Dims>& dim_chain() const { return out_dims_; }
  ModelMetadata& metadata() { return meta_; }
  const ModelMetadata& metadata() const { return meta_; }

  void finalize() const {
    if (layers_.empty()) throw ShapeError("empty model");
    if (out_dims_.back() != Dims{1, 1, 1})
      throw ShapeError("model head must emit a single value");
    const auto* head = dynamic_cast<const DenseLayer*>(layers_.back().get());
    if (head == nullptr || head->activation() != Activation::Sigmoid)
      throw ShapeError("model head must be a sigmoid dense layer");
  }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out;
    for (auto& l : layers_)
      for (ParamTensor* p : l->params()) out.push_back(p);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (ParamTensor* p : params()) n += p->values.size();
    return n;
  }

  Batch forward(const Batch& input, Mode mode, Rng& rng) {
    Batch x = input;
    for (auto& l : layers_) x = l->forward(x, mode, rng);
    return x;
  }

  // Sigmoid probabilities in inference mode.
  std::vector<double> predict(const Batch& input) {
    Rng rng(0);
    const Batch out = forward(input, Mode::Infer, rng);
    std::vector<double> probs(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) probs[i] = out[i].data[0];
    return probs;
  }

  // Mean clamped BCE of a train-mode forward pass; used by the
  // finite-difference harness.
  double batch_loss(const Batch& input, const std::vector<int>& labels, Rng& rng) {
    const Batch out = forward(input, Mode::Train, rng);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      loss += binary_cross_entropy(out[i].data[0], labels[i]);
    return loss / static_cast<double>(out.size());
  }

  // Forward + backward; fills every parameter gradient with the gradient of
  // the mean batch loss. Returns (mean loss, probabilities).
  std::pair<double, std::vector<double>> compute_grads(const Batch& input,
                                                       const std::vector<int>& labels,
                                                       Rng& rng) {
    if (input.empty()) throw InvalidInputError("empty training batch");
    if (input.size() != labels.size())
      throw InvalidInputError("labels do not match batch");
    finalize();

    for (auto& l : layers_) l->zero_grads();
    const Batch out = forward(input, Mode::Train, rng);

    const double inv_b = 1.0 / static_cast<double>(out.size());
    double loss = 0.0;
    std::vector<double> probs(out.size());
    Batch dz(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double p = out[i].data[0];
      probs[i] = p;
      loss += binary_cross_entropy(p, labels[i]);
      constexpr double kClamp = 1e-7;
      const double pc = std::min(1.0 - kClamp, std::max(kClamp, p));
      dz[i] = Tensor3(1, 1, 1);
      dz[i].data[0] = (pc - static_cast<double>(labels[i])) * inv_b;
    }
    loss *= inv_b;

    // The head collapses sigmoid and cross-entropy into dz = (p - y)/B.
    auto* head = static_cast<DenseLayer*>(layers_.back().get());
    Batch grad = head->backward_preact(dz);
    for (std::size_t li = layers_.size() - 1; li-- > 0;)
      grad = layers_[li]->backward(grad);
    return {loss, probs};
  }

  double train_step(const Batch& input, const std::vector<int>& labels, double lr,
                    Rng& rng) {
    const auto [loss, probs] = compute_grads(input, labels, rng);
    for (auto& l : layers_) l->sgd_step(lr);
    return loss;
  }

 private:
  Dims input_dims_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Dims> out_dims_;
  ModelMetadata meta_;
};

// The production architecture: two conv/BN/ReLU stages, one max pool,
// three dense layers with dropout between them.
inline Model standard_model(std::uint64_t seed, Dims input = {kBeatImageSize, kBeatImageSize, 1}) {
  Rng rng(seed);
  Model m(input);

  auto conv1 = std::make_unique<ConvLayer>(7, 7, input.d, 32);
  conv1->init(rng);
  m.add(std::move(conv1));
  m.add(std::make_unique<BatchNormLayer>(32));
  m.add(std::make_unique<ReluLayer>());

  auto conv2 = std::make_unique<ConvLayer>(5, 5, 32, 64);
  conv2->init(rng);
  m.add(std::move(conv2));
  m.add(std::make_unique<BatchNormLayer>(64));
  m.add(std::make_unique<ReluLayer>());

  m.add(std::make_unique<MaxPoolLayer>(16, 16));
  m.add(std::make_unique<FlattenLayer>());

  const Dims flat = m.dim_chain().back();
  auto fc1 = std::make_unique<DenseLayer>(flat.d, 1024, Activation::Relu);
  fc1->init(rng);
  m.add(std::move(fc1));
  m.add(std::make_unique<DropoutLayer>(0.3));

  auto fc2 = std::make_unique<DenseLayer>(1024, 256, Activation::Relu);
  fc2->init(rng);
  m.add(std::move(fc2));
  m.add(std::make_unique<DropoutLayer>(0.2));

  auto fc3 = std::make_unique<DenseLayer>(256, 1, Activation::Sigmoid);
  fc3->init(rng);
  m.add(std::move(fc3));

  m.finalize();
  m.metadata().seed = seed;
  m.metadata().input_dims = input;
  return m;
}

// ---------------------------------------------------------------------------
// Dataset handling and the training loop.

struct LabeledBeat {
  BeatImage image;
  int label = 0;  // 0 normal, 1 abnormal
  std::string patient_id;
};

using Dataset = std::vector<LabeledBeat>;

inline Tensor3 to_tensor(const BeatImage& img) {
  Tensor3 t(kBeatImageSize, kBeatImageSize, 1);
  t.data = img.pixels;
  return t;
}

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> curves;
  Metrics test_metrics;
  std::vector<std::string> train_patients;
  std::vector<std::string> test_patients;
};

inline Metrics evaluate(Model& model, const Dataset& data) {
  if (data.empty()) throw InvalidDatasetError("empty evaluation set");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double loss = 0.0;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    Batch batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(to_tensor(data[i].image));
    const std::vector<double> probs = model.predict(batch);
    for (std::size_t i = start; i < end; ++i) {
      const double p = probs[i - start];
      loss += binary_cross_entropy(p, data[i].label);
      const int pred = p >= 0.5 ? 1 : 0;
      if (pred == 1 && data[i].label == 1) ++tp;
      else if (pred == 0 && data[i].label == 0) ++tn;
      else if (pred == 1 && data[i].label == 0) ++fp;
      else ++fn;
    }
  }
  return Metrics::from_counts(tp, tn, fp, fn, loss / static_cast<double>(data.size()));
}

// Patient-grouped 80:20 split, then plain SGD. Beats of one patient never
// appear on both sides of the split. Deterministic for a fixed seed.
inline TrainResult train(
    const Dataset& dataset, const TrainConfig& cfg,
    const std::function<Model(std::uint64_t)>& factory = [](std::uint64_t s) {
      return standard_model(s);
    }) {
  cfg.validate();
  if (dataset.empty()) throw InvalidDatasetError("empty dataset");

  bool has0 = false, has1 = false;
  for (const auto& b : dataset) {
    if (b.patient_id.empty())
      throw InvalidDatasetError("every beat needs a patient id");
    (b.label == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1)
    throw InvalidDatasetError("training requires both classes");

  // Unique patients in first-appearance order.
  std::vector<std::string> patients;
  std::map<std::string, std::size_t> seen;
  for (const auto& b : dataset)
    if (seen.emplace(b.patient_id, patients.size()).second)
      patients.push_back(b.patient_id);
  if (patients.size() < 2)
    throw InvalidDatasetError("patient-level split needs at least 2 patients");

  Rng split_rng(cfg.seed);
  split_rng.shuffle(patients);
  std::size_t n_train = static_cast<std::size_t>(
      std::lround(cfg.split_ratio * static_cast<double>(patients.size())));
  n_train = std::min(std::max<std::size_t>(1, n_train), patients.size() - 1);

  std::map<std::string, bool> in_train;
  TrainResult result{factory(cfg.seed), {}, {}, {}, {}};
  for (std::size_t i = 0; i < patients.size(); ++i) {
    in_train[patients[i]] = i < n_train;
    (i < n_train ? result.train_patients : result.test_patients).push_back(patients[i]);
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    (in_train[dataset[i].patient_id] ? train_idx : test_idx).push_back(i);
  if (train_idx.empty() || test_idx.empty())
    throw InvalidDatasetError("degenerate patient split");

  Rng rng(cfg.seed + 0x5eed);
  Dataset test_set;
  for (std::size_t i : test_idx) test_set.push_back(dataset[i]);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch_size);
      Batch batch;
      std::vector<int> labels;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(to_tensor(dataset[train_idx[k]].image));
        labels.push_back(dataset[train_idx[k]].label);
      }
      const auto [loss, probs] = result.model.compute_grads(batch, labels, rng);
      for (auto& l : result.model.layers()) l->sgd_step(cfg.learning_rate);
      loss_sum += loss;
      ++loss_batches;
      for (std::size_t k = 0; k < probs.size(); ++k)
        correct += ((probs[k] >= 0.5 ? 1 : 0) == labels[k]);
    }

    const Metrics test = evaluate(result.model, test_set);
    EpochStats row;
    row.epoch = epoch + 1;
    row.train_loss = loss_sum / static_cast<double>(loss_batches);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
    row.test_loss = test.mean_loss;
    row.test_acc = test.accuracy;
    result.curves.push_back(row);
  }

  result.model.metadata().epochs_trained = cfg.epochs;
  result.model.metadata().seed = cfg.seed;
  result.test_metrics = evaluate(result.model, test_set);
  result.model.metadata().config = cfg;
  result.model.metadata().metrics = result.test_metrics;
  return result;
}

}  // namespace ecgkit
