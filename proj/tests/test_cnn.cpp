#include <catch2/catch.hpp>

#include <cmath>
#include <memory>

#include "ecgkit/cnn.hpp"
#include "ecgkit/model.hpp"
#include "ecgkit/random.hpp"

using namespace ecgkit;

namespace {

Tensor3 tensor_from(std::initializer_list<double> values, int h, int w, int d) {
  Tensor3 t(h, w, d);
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

Batch random_batch(Rng& rng, std::size_t count, Dims dims) {
  Batch batch;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor3 t(dims.h, dims.w, dims.d);
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    batch.push_back(std::move(t));
  }
  return batch;
}

// Central-difference check of every parameter gradient against the
// analytic backward pass. Dropout masks are pinned by reseeding the same
// rng for every forward evaluation.
void check_gradients(Model& model, const Batch& batch, const std::vector<int>& labels,
                     double tol = 1e-3) {
  constexpr std::uint64_t kForwardSeed = 777;
  Rng rng(kForwardSeed);
  model.compute_grads(batch, labels, rng);

  // Snapshot analytic gradients before the FD evaluations overwrite state.
  std::vector<std::vector<double>> analytic;
  for (ParamTensor* p : model.params()) analytic.push_back(p->grads);

  auto fd_at = [&](ParamTensor* p, std::size_t i, double h) {
    const double orig = p->values[i];
    p->values[i] = orig + h;
    Rng rp(kForwardSeed);
    const double lp = model.batch_loss(batch, labels, rp);
    p->values[i] = orig - h;
    Rng rm(kForwardSeed);
    const double lm = model.batch_loss(batch, labels, rm);
    p->values[i] = orig;
    return (lp - lm) / (2.0 * h);
  };

  std::size_t pi = 0;
  for (ParamTensor* p : model.params()) {
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      double h = 1e-4 * std::max(1.0, std::abs(p->values[i]));
      double fd = fd_at(p, i, h);
      const double an = analytic[pi][i];
      double err = std::abs(fd - an);
      double scale = std::max(std::abs(fd), std::abs(an));
      if (err > tol * scale + 1e-8) {
        // A relu/argmax kink inside the step makes the central difference
        // one-sided; a smaller step converges unless the gradient is wrong.
        fd = fd_at(p, i, h / 32.0);
        err = std::abs(fd - an);
        scale = std::max(std::abs(fd), std::abs(an));
      }
      INFO(p->name << "[" << i << "]: analytic " << an << " vs fd " << fd);
      REQUIRE(err <= tol * scale + 1e-8);
    }
    ++pi;
  }
}

std::unique_ptr<DenseLayer> dense_with(int in, int out, Activation act, Rng& rng) {
  auto layer = std::make_unique<DenseLayer>(in, out, act);
  layer->init(rng);
  return layer;
}

}  // namespace

TEST_CASE("conv2d hand-evaluated outputs", "[cnn]") {
  SECTION("all-ones 2x2 kernel sums its support") {
    ConvLayer layer(2, 2, 1, 1);
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) layer.kernel_at(0, di, dj, 0) = 1.0;
    const Tensor3 x = tensor_from({1, 1, 1, 1}, 2, 2, 1);
    const Tensor3 y = conv2d(x, layer);
    REQUIRE(y.h == 1);
    REQUIRE(y.w == 1);
    CHECK(y.data[0] == 4.0);
  }
  SECTION("single-one kernel crops the valid region") {
    ConvLayer layer(2, 2, 1, 1);
    layer.kernel_at(0, 0, 0, 0) = 1.0;
    const Tensor3 x = tensor_from({1, 2, 3, 4, 5, 6, 7, 8, 9}, 3, 3, 1);
    const Tensor3 y = conv2d(x, layer);
    CHECK(y.at(0, 0, 0) == 1.0);
    CHECK(y.at(0, 1, 0) == 2.0);
    CHECK(y.at(1, 0, 0) == 4.0);
    CHECK(y.at(1, 1, 0) == 5.0);
  }
  SECTION("diagonal difference kernel") {
    // kernel [[1,0],[0,-1]] on [[1,2,3],[4,5,6],[7,8,9]] -> all -4.
    ConvLayer layer(2, 2, 1, 1);
    layer.kernel_at(0, 0, 0, 0) = 1.0;
    layer.kernel_at(0, 1, 1, 0) = -1.0;
    const Tensor3 x = tensor_from({1, 2, 3, 4, 5, 6, 7, 8, 9}, 3, 3, 1);
    const Tensor3 y = conv2d(x, layer);
    for (double v : y.data) CHECK(v == -4.0);
  }
  SECTION("bias shifts every output") {
    ConvLayer layer(1, 1, 1, 2);
    layer.kernel_at(0, 0, 0, 0) = 1.0;
    layer.kernel_at(1, 0, 0, 0) = 2.0;
    layer.bias_at(1) = 10.0;
    const Tensor3 x = tensor_from({3.0}, 1, 1, 1);
    const Tensor3 y = conv2d(x, layer);
    CHECK(y.at(0, 0, 0) == 3.0);
    CHECK(y.at(0, 0, 1) == 16.0);
  }
  SECTION("depth mismatch is a wiring error") {
    ConvLayer layer(2, 2, 3, 1);
    const Tensor3 x(4, 4, 2);
    CHECK_THROWS_AS(conv2d(x, layer), WiringError);
  }
}

TEST_CASE("conv2d is linear for bias-free layers", "[cnn]") {
  Rng rng(50);
  ConvLayer layer(3, 3, 2, 4);
  layer.init(rng);
  const Batch xs = random_batch(rng, 2, {7, 7, 2});
  const double a = 1.7, b = -0.6;
  Tensor3 combo(7, 7, 2);
  for (std::size_t i = 0; i < combo.data.size(); ++i)
    combo.data[i] = a * xs[0].data[i] + b * xs[1].data[i];
  const Tensor3 y_combo = conv2d(combo, layer);
  const Tensor3 y0 = conv2d(xs[0], layer);
  const Tensor3 y1 = conv2d(xs[1], layer);
  for (std::size_t i = 0; i < y_combo.data.size(); ++i)
    CHECK(y_combo.data[i] == Approx(a * y0.data[i] + b * y1.data[i]).margin(1e-12));
}

TEST_CASE("batch norm hand cases", "[cnn]") {
  SECTION("constant channel maps to zero") {
    BatchNormLayer bn(1);
    Batch x{Tensor3(2, 2, 1, 5.0), Tensor3(2, 2, 1, 5.0)};
    const Batch y = batch_norm(x, bn, Mode::Train);
    for (const auto& t : y)
      for (double v : t.data) CHECK(v == Approx(0.0).margin(1e-12));
  }
  SECTION("gamma zero pins the output at beta") {
    BatchNormLayer bn(1);
    bn.params()[0]->values[0] = 0.0;  // gamma
    bn.params()[1]->values[0] = 4.5;  // beta
    Batch x{Tensor3(2, 2, 1, 1.0), Tensor3(2, 2, 1, 9.0)};
    const Batch y = batch_norm(x, bn, Mode::Train);
    for (const auto& t : y)
      for (double v : t.data) CHECK(v == 4.5);
  }
  SECTION("two one-element samples normalize to +-1/sqrt(1+eps)") {
    BatchNormLayer bn(1);
    Batch x{Tensor3(1, 1, 1, 1.0), Tensor3(1, 1, 1, 3.0)};
    const Batch y = batch_norm(x, bn, Mode::Train);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0].data[0] == Approx(-expect).epsilon(1e-12));
    CHECK(y[1].data[0] == Approx(expect).epsilon(1e-12));
  }
  SECTION("running statistics feed inference") {
    BatchNormLayer bn(1);
    Batch x{Tensor3(1, 1, 1, 1.0), Tensor3(1, 1, 1, 3.0)};
    Rng rng(0);
    bn.forward(x, Mode::Train, rng);
    // momentum 0.9: running_mean = 0.9*0 + 0.1*2 = 0.2
    CHECK(bn.running_mean()[0] == Approx(0.2).epsilon(1e-12));
    CHECK(bn.running_var()[0] == Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));

    const Batch y = bn.forward({Tensor3(1, 1, 1, 0.2)}, Mode::Infer, rng);
    CHECK(y[0].data[0] == Approx(0.0).margin(1e-12));
  }
  SECTION("empty batch in train mode is invalid") {
    BatchNormLayer bn(1);
    CHECK_THROWS_AS(batch_norm({}, bn, Mode::Train), InvalidInputError);
  }
}

TEST_CASE("max pooling", "[cnn]") {
  SECTION("2x2 block takes its maximum") {
    const Tensor3 x = tensor_from({1, 2, 3, 4}, 2, 2, 1);
    const Tensor3 y = max_pool(x, 2, 2);
    REQUIRE(y.size() == 1);
    CHECK(y.data[0] == 4.0);
  }
  SECTION("constant input stays constant") {
    const Tensor3 y = max_pool(Tensor3(8, 8, 3, 2.5), 4, 4);
    for (double v : y.data) CHECK(v == 2.5);
  }
  SECTION("table-2 pooling geometry") {
    const Tensor3 y = max_pool(Tensor3(128, 128, 64), 16, 16);
    CHECK(y.h == 8);
    CHECK(y.w == 8);
    CHECK(y.d == 64);
  }
  SECTION("non-divisible extents are shape errors") {
    CHECK_THROWS_AS(max_pool(Tensor3(9, 8, 1), 2, 2), ShapeError);
  }
}

TEST_CASE("dense layer hand cases", "[cnn]") {
  SECTION("zero input through sigmoid is one half") {
    DenseLayer layer(3, 2, Activation::Sigmoid);
    const auto y = dense({0, 0, 0}, layer, Activation::Sigmoid);
    for (double v : y) CHECK(v == 0.5);
  }
  SECTION("identity weights with relu") {
    DenseLayer layer(2, 2, Activation::Relu);
    layer.weight_at(0, 0) = 1.0;
    layer.weight_at(1, 1) = 1.0;
    const auto y = dense({-1.0, 2.0}, layer, Activation::Relu);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 2.0);
  }
  SECTION("affine with no activation") {
    DenseLayer layer(1, 1, Activation::None);
    layer.weight_at(0, 0) = 2.0;
    layer.bias_at(0) = 1.0;
    const auto y = dense({3.0}, layer, Activation::None);
    CHECK(y[0] == 7.0);
  }
  SECTION("length mismatch is a wiring error") {
    DenseLayer layer(3, 1, Activation::None);
    CHECK_THROWS_AS(dense({1.0}, layer, Activation::None), WiringError);
  }
}

TEST_CASE("sigmoid stays inside the open unit interval", "[cnn]") {
  for (double x = -30.0; x <= 30.0; x += 0.5) {
    const double y = sigmoid(x);
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("dropout behavior", "[cnn]") {
  const std::vector<double> x(1000, 2.0);
  SECTION("rate zero is the identity in both modes") {
    CHECK(dropout(x, 0.0, Mode::Train, 1) == x);
    CHECK(dropout(x, 0.0, Mode::Infer, 1) == x);
  }
  SECTION("inference is the identity at any rate") {
    CHECK(dropout(x, 0.7, Mode::Infer, 1) == x);
  }
  SECTION("train zeroes at the configured rate and rescales survivors") {
    const std::vector<double> big(100000, 1.0);
    const auto y = dropout(big, 0.3, Mode::Train, 99);
    std::size_t zeros = 0;
    for (double v : y) {
      if (v == 0.0) ++zeros;
      else CHECK(v == Approx(1.0 / 0.7).epsilon(1e-12));
    }
    const double fraction = static_cast<double>(zeros) / static_cast<double>(big.size());
    CHECK(fraction == Approx(0.30).margin(0.01));
  }
  SECTION("deterministic for a fixed seed") {
    CHECK(dropout(x, 0.5, Mode::Train, 7) == dropout(x, 0.5, Mode::Train, 7));
  }
}

TEST_CASE("binary cross entropy values", "[cnn]") {
  CHECK(binary_cross_entropy(0.5, 0) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(binary_cross_entropy(0.5, 1) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(binary_cross_entropy(0.9, 0) == Approx(-std::log(0.1)).epsilon(1e-12));
  // Clamp bounds the loss as p -> 1 with y = 1.
  CHECK(binary_cross_entropy(1.0, 1) == Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
  CHECK(binary_cross_entropy(1.0, 1) < 1e-6);
}

TEST_CASE("gradient check: dense stack", "[cnn][grad]") {
  Rng rng(901);
  Model m(Dims{1, 1, 6});
  m.add(dense_with(6, 5, Activation::Relu, rng));
  m.add(dense_with(5, 1, Activation::Sigmoid, rng));
  const Batch x = random_batch(rng, 3, {1, 1, 6});
  check_gradients(m, x, {1, 0, 1});
}

TEST_CASE("gradient check: conv stack", "[cnn][grad]") {
  Rng rng(902);
  Model m(Dims{6, 6, 2});
  auto conv = std::make_unique<ConvLayer>(3, 3, 2, 3);
  conv->init(rng);
  m.add(std::move(conv));
  m.add(std::make_unique<FlattenLayer>());
  m.add(dense_with(48, 1, Activation::Sigmoid, rng));
  const Batch x = random_batch(rng, 3, {6, 6, 2});
  check_gradients(m, x, {0, 1, 0});
}

TEST_CASE("gradient check: batch norm stack", "[cnn][grad]") {
  Rng rng(903);
  Model m(Dims{4, 4, 3});
  m.add(std::make_unique<BatchNormLayer>(3));
  m.add(std::make_unique<FlattenLayer>());
  m.add(dense_with(48, 1, Activation::Sigmoid, rng));
  const Batch x = random_batch(rng, 4, {4, 4, 3});
  check_gradients(m, x, {0, 1, 1, 0});
}

TEST_CASE("gradient check: pooling routes gradients to the argmax", "[cnn][grad]") {
  Rng rng(904);
  Model m(Dims{6, 6, 1});
  auto conv = std::make_unique<ConvLayer>(3, 3, 1, 2);
  conv->init(rng);
  m.add(std::move(conv));
  m.add(std::make_unique<MaxPoolLayer>(2, 2));
  m.add(std::make_unique<FlattenLayer>());
  m.add(dense_with(8, 1, Activation::Sigmoid, rng));
  const Batch x = random_batch(rng, 3, {6, 6, 1});
  check_gradients(m, x, {1, 1, 0});
}

TEST_CASE("gradient check: composed miniature of the full architecture", "[cnn][grad]") {
  Rng rng(905);
  Model m(Dims{12, 12, 1});
  auto conv1 = std::make_unique<ConvLayer>(3, 3, 1, 4);
  conv1->init(rng);
  m.add(std::move(conv1));
  m.add(std::make_unique<BatchNormLayer>(4));
  m.add(std::make_unique<ReluLayer>());
  auto conv2 = std::make_unique<ConvLayer>(3, 3, 4, 6);
  conv2->init(rng);
  m.add(std::move(conv2));
  m.add(std::make_unique<BatchNormLayer>(6));
  m.add(std::make_unique<ReluLayer>());
  m.add(std::make_unique<MaxPoolLayer>(2, 2));
  m.add(std::make_unique<FlattenLayer>());
  m.add(dense_with(96, 16, Activation::Relu, rng));
  m.add(std::make_unique<DropoutLayer>(0.3));
  m.add(dense_with(16, 1, Activation::Sigmoid, rng));

  const Batch x = random_batch(rng, 3, {12, 12, 1});
  check_gradients(m, x, {1, 0, 1});
}

TEST_CASE("saturated correct prediction yields a near-zero head gradient", "[cnn]") {
  Rng rng(906);
  Model m(Dims{1, 1, 2});
  auto head = std::make_unique<DenseLayer>(2, 1, Activation::Sigmoid);
  head->bias_at(0) = 50.0;  // p ~ 1
  DenseLayer* head_ptr = head.get();
  m.add(std::move(head));
  Batch x{Tensor3(1, 1, 2, 0.0)};
  Rng fwd(1);
  m.compute_grads(x, {1}, fwd);
  CHECK(std::abs(head_ptr->params()[1]->grads[0]) < 1e-6);
}

TEST_CASE("duplicating the batch leaves mean-loss gradients unchanged", "[cnn]") {
  Rng rng(907);
  Model m(Dims{5, 5, 1});
  auto conv = std::make_unique<ConvLayer>(2, 2, 1, 2);
  conv->init(rng);
  m.add(std::move(conv));
  m.add(std::make_unique<BatchNormLayer>(2));
  m.add(std::make_unique<FlattenLayer>());
  m.add(dense_with(32, 1, Activation::Sigmoid, rng));

  const Batch once = random_batch(rng, 2, {5, 5, 1});
  Batch twice = once;
  twice.insert(twice.end(), once.begin(), once.end());

  Rng f1(1);
  m.compute_grads(once, {0, 1}, f1);
  std::vector<std::vector<double>> grads_once;
  for (ParamTensor* p : m.params()) grads_once.push_back(p->grads);

  Rng f2(1);
  m.compute_grads(twice, {0, 1, 0, 1}, f2);
  std::size_t pi = 0;
  for (ParamTensor* p : m.params()) {
    for (std::size_t i = 0; i < p->grads.size(); ++i)
      CHECK(p->grads[i] == Approx(grads_once[pi][i]).margin(1e-12));
    ++pi;
  }
}

TEST_CASE("table-2 shape chain holds exactly", "[cnn]") {
  Model m = standard_model(3);
  const auto& chain = m.dim_chain();
  // conv -> bn -> relu -> conv -> bn -> relu -> pool -> flatten ->
  // dense -> dropout -> dense -> dropout -> dense
  REQUIRE(chain.size() == 13);
  CHECK(chain[0] == Dims{132, 132, 32});
  CHECK(chain[3] == Dims{128, 128, 64});
  CHECK(chain[6] == Dims{8, 8, 64});
  CHECK(chain[7] == Dims{1, 1, 4096});
  CHECK(chain[8] == Dims{1, 1, 1024});
  CHECK(chain[10] == Dims{1, 1, 256});
  CHECK(chain[12] == Dims{1, 1, 1});

  // Any deviation breaks at construction: 137 is not pool-divisible.
  CHECK_THROWS_AS(standard_model(3, Dims{137, 137, 1}), ShapeError);
}

TEST_CASE("metrics from counts", "[cnn]") {
  SECTION("perfect split") {
    const Metrics m = Metrics::from_counts(1, 1, 0, 0);
    CHECK(m.accuracy == 1.0);
    CHECK(*m.sensitivity == 1.0);
    CHECK(*m.specificity == 1.0);
  }
  SECTION("one miss") {
    const Metrics m = Metrics::from_counts(0, 1, 0, 1);
    CHECK(m.accuracy == 0.5);
    CHECK(*m.sensitivity == 0.0);
    CHECK(*m.specificity == 1.0);
  }
  SECTION("all-positive predictions on balanced data") {
    const Metrics m = Metrics::from_counts(5, 0, 5, 0);
    CHECK(m.accuracy == 0.5);
    CHECK(*m.sensitivity == 1.0);
    CHECK(*m.specificity == 0.0);
  }
  SECTION("sensitivity is absent without positives") {
    const Metrics m = Metrics::from_counts(0, 4, 1, 0);
    CHECK_FALSE(m.sensitivity.has_value());
    REQUIRE(m.specificity.has_value());
  }
}

namespace {

// Small beat-image dataset with a class-dependent trace row; patient ids
// spread over several beats each.
Dataset toy_dataset(std::size_t patients_per_class, std::size_t beats_per_patient,
                    std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    for (std::size_t p = 0; p < patients_per_class; ++p) {
      const std::string id = (cls ? "B" : "A") + std::to_string(p);
      for (std::size_t k = 0; k < beats_per_patient; ++k) {
        BeatImage img;
        const int base_row = cls == 0 ? 40 : 95;
        const int row = base_row + static_cast<int>(rng.uniform_int(-6, 6));
        for (int c = 0; c < kBeatImageSize; ++c) img.at(row, c) = 0.0;
        data.push_back({img, static_cast<int>(cls), id});
      }
    }
  }
  return data;
}

Model tiny_factory(std::uint64_t seed) {
  Rng rng(seed);
  Model m(Dims{kBeatImageSize, kBeatImageSize, 1});
  auto conv = std::make_unique<ConvLayer>(7, 7, 1, 2);
  conv->init(rng);
  m.add(std::move(conv));
  m.add(std::make_unique<BatchNormLayer>(2));
  m.add(std::make_unique<ReluLayer>());
  m.add(std::make_unique<MaxPoolLayer>(12, 12));  // 132/12 = 11
  m.add(std::make_unique<FlattenLayer>());
  auto fc = std::make_unique<DenseLayer>(11 * 11 * 2, 1, Activation::Sigmoid);
  fc->init(rng);
  m.add(std::move(fc));
  m.finalize();
  return m;
}

}  // namespace

TEST_CASE("training is reproducible and leak-free", "[cnn][train]") {
  const Dataset data = toy_dataset(5, 6, 42);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.seed = 9;

  TrainResult a = train(data, cfg, tiny_factory);
  TrainResult b = train(data, cfg, tiny_factory);

  REQUIRE(a.curves.size() == 3);
  for (std::size_t e = 0; e < a.curves.size(); ++e) {
    CHECK(a.curves[e].train_loss == b.curves[e].train_loss);
    CHECK(a.curves[e].test_acc == b.curves[e].test_acc);
  }
  auto pa = a.model.params();
  auto pb = b.model.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->values == pb[i]->values);

  // Patient-level split is disjoint.
  for (const auto& tp : a.train_patients)
    for (const auto& sp : a.test_patients) CHECK(tp != sp);
  CHECK(a.train_patients.size() == 8);
  CHECK(a.test_patients.size() == 2);

  // The toy classes are separable; a couple of epochs suffice.
  CHECK(a.test_metrics.accuracy >= 0.95);
}

TEST_CASE("training rejects degenerate datasets", "[cnn][train]") {
  TrainConfig cfg;
  cfg.epochs = 1;

  Dataset single_class;
  BeatImage img;
  single_class.push_back({img, 0, "p0"});
  single_class.push_back({img, 0, "p1"});
  CHECK_THROWS_AS(train(single_class, cfg, tiny_factory), InvalidDatasetError);

  Dataset no_id;
  no_id.push_back({img, 0, ""});
  no_id.push_back({img, 1, "p1"});
  CHECK_THROWS_AS(train(no_id, cfg, tiny_factory), InvalidDatasetError);

  CHECK_THROWS_AS(train({}, cfg, tiny_factory), InvalidDatasetError);
}

TEST_CASE("inference is unaffected by dropout rate", "[cnn]") {
  Rng rng(911);
  Model m(Dims{1, 1, 4});
  m.add(dense_with(4, 8, Activation::Relu, rng));
  m.add(std::make_unique<DropoutLayer>(0.6));
  m.add(dense_with(8, 1, Activation::Sigmoid, rng));

  const Batch x = random_batch(rng, 3, {1, 1, 4});
  const auto p1 = m.predict(x);
  const auto p2 = m.predict(x);
  CHECK(p1 == p2);
}
