#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgkit/error.hpp"
#include "ecgkit/model.hpp"

namespace ecgkit {
namespace io {

// Parameter payloads are base64 over little-endian IEEE-754 doubles.
namespace b64 {

inline constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string encode(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    for (int b = 0; b < 8; ++b)
      bytes[i * 8 + static_cast<std::size_t>(b)] =
          static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = static_cast<std::uint32_t>(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= static_cast<std::uint32_t>(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out.push_back(kAlphabet[(chunk >> 18) & 0x3f]);
    out.push_back(kAlphabet[(chunk >> 12) & 0x3f]);
    out.push_back(i + 1 < bytes.size() ? kAlphabet[(chunk >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < bytes.size() ? kAlphabet[chunk & 0x3f] : '=');
  }
  return out;
}

inline std::vector<double> decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  std::uint32_t chunk = 0;
  int have = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw IoError("invalid base64 payload");
    chunk = (chunk << 6) | static_cast<std::uint32_t>(v);
    if (++have == 4) {
      bytes.push_back(static_cast<unsigned char>((chunk >> 16) & 0xff));
      bytes.push_back(static_cast<unsigned char>((chunk >> 8) & 0xff));
      bytes.push_back(static_cast<unsigned char>(chunk & 0xff));
      have = 0;
      chunk = 0;
    }
  }
  if (have == 2) {
    bytes.push_back(static_cast<unsigned char>((chunk >> 4) & 0xff));
  } else if (have == 3) {
    bytes.push_back(static_cast<unsigned char>((chunk >> 10) & 0xff));
    bytes.push_back(static_cast<unsigned char>((chunk >> 2) & 0xff));
  }
  if (bytes.size() % 8 != 0) throw IoError("base64 payload is not a double array");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b)
      bits = (bits << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
    std::memcpy(&values[i], &bits, 8);
  }
  return values;
}

}  // namespace b64

inline nlohmann::json model_to_json(Model& model) {
  nlohmann::json doc;
  doc["format"] = "ecgkit-model";
  doc["input_dims"] = {model.input_dims().h, model.input_dims().w, model.input_dims().d};

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& lp : model.layers()) {
    nlohmann::json j;
    j["type"] = lp->type();
    if (auto* conv = dynamic_cast<ConvLayer*>(lp.get())) {
      j["kernel"] = {conv->kern_m(), conv->kern_n(), conv->kern_d(), conv->kern_s()};
      j["kernels"] = b64::encode(conv->params()[0]->values);
      j["biases"] = b64::encode(conv->params()[1]->values);
    } else if (auto* bn = dynamic_cast<BatchNormLayer*>(lp.get())) {
      j["channels"] = bn->channels();
      j["epsilon"] = bn->epsilon();
      j["momentum"] = bn->momentum();
      j["gamma"] = b64::encode(bn->params()[0]->values);
      j["beta"] = b64::encode(bn->params()[1]->values);
      j["running_mean"] = b64::encode(bn->running_mean());
      j["running_var"] = b64::encode(bn->running_var());
    } else if (auto* pool = dynamic_cast<MaxPoolLayer*>(lp.get())) {
      j["extent"] = {pool->extent_m(), pool->extent_n()};
    } else if (auto* fc = dynamic_cast<DenseLayer*>(lp.get())) {
      j["in"] = fc->in_features();
      j["out"] = fc->out_features();
      j["activation"] = fc->activation() == Activation::Relu      ? "relu"
                        : fc->activation() == Activation::Sigmoid ? "sigmoid"
                                                                  : "none";
      j["weights"] = b64::encode(fc->params()[0]->values);
      j["biases"] = b64::encode(fc->params()[1]->values);
    } else if (auto* drop = dynamic_cast<DropoutLayer*>(lp.get())) {
      j["rate"] = drop->rate();
    }
    layers.push_back(j);
  }
  doc["layers"] = layers;

  nlohmann::json meta{{"seed", model.metadata().seed},
                      {"epochs_trained", model.metadata().epochs_trained}};
  if (model.metadata().config) {
    const TrainConfig& cfg = *model.metadata().config;
    meta["config"] = {{"learning_rate", cfg.learning_rate},
                      {"epochs", cfg.epochs},
                      {"batch_size", cfg.batch_size},
                      {"split_ratio", cfg.split_ratio},
                      {"seed", cfg.seed}};
  }
  if (model.metadata().metrics) {
    const Metrics& m = *model.metadata().metrics;
    nlohmann::json mj{{"tp", m.tp}, {"tn", m.tn}, {"fp", m.fp}, {"fn", m.fn},
                      {"accuracy", m.accuracy}};
    if (m.sensitivity) mj["sensitivity"] = *m.sensitivity;
    if (m.specificity) mj["specificity"] = *m.specificity;
    meta["metrics"] = mj;
  }
  doc["metadata"] = meta;
  return doc;
}

inline Model model_from_json(const nlohmann::json& doc) {
  if (!doc.contains("format") || doc["format"] != "ecgkit-model")
    throw IoError("not an ecgkit model document");
  const auto dims = doc["input_dims"];
  Model model(Dims{dims[0].get<int>(), dims[1].get<int>(), dims[2].get<int>()});

  for (const auto& j : doc["layers"]) {
    const std::string type = j["type"].get<std::string>();
    if (type == "conv") {
      const auto k = j["kernel"];
      auto layer = std::make_unique<ConvLayer>(k[0].get<int>(), k[1].get<int>(),
                                               k[2].get<int>(), k[3].get<int>());
      auto kernels = b64::decode(j["kernels"].get<std::string>());
      auto biases = b64::decode(j["biases"].get<std::string>());
      if (kernels.size() != layer->params()[0]->values.size() ||
          biases.size() != layer->params()[1]->values.size())
        throw IoError("conv parameter payload size mismatch");
      layer->params()[0]->values = std::move(kernels);
      layer->params()[1]->values = std::move(biases);
      model.add(std::move(layer));
    } else if (type == "batch_norm") {
      auto layer = std::make_unique<BatchNormLayer>(
          j["channels"].get<int>(), j["epsilon"].get<double>(), j["momentum"].get<double>());
      layer->params()[0]->values = b64::decode(j["gamma"].get<std::string>());
      layer->params()[1]->values = b64::decode(j["beta"].get<std::string>());
      layer->running_mean() = b64::decode(j["running_mean"].get<std::string>());
      layer->running_var() = b64::decode(j["running_var"].get<std::string>());
      if (layer->params()[0]->values.size() != static_cast<std::size_t>(layer->channels()))
        throw IoError("batch norm payload size mismatch");
      model.add(std::move(layer));
    } else if (type == "relu") {
      model.add(std::make_unique<ReluLayer>());
    } else if (type == "max_pool") {
      const auto e = j["extent"];
      model.add(std::make_unique<MaxPoolLayer>(e[0].get<int>(), e[1].get<int>()));
    } else if (type == "flatten") {
      model.add(std::make_unique<FlattenLayer>());
    } else if (type == "dense") {
      const std::string act_name = j["activation"].get<std::string>();
      const Activation act = act_name == "relu"      ? Activation::Relu
                             : act_name == "sigmoid" ? Activation::Sigmoid
                                                     : Activation::None;
      auto layer = std::make_unique<DenseLayer>(j["in"].get<int>(), j["out"].get<int>(), act);
      auto weights = b64::decode(j["weights"].get<std::string>());
      auto biases = b64::decode(j["biases"].get<std::string>());
      if (weights.size() != layer->params()[0]->values.size() ||
          biases.size() != layer->params()[1]->values.size())
        throw IoError("dense parameter payload size mismatch");
      layer->params()[0]->values = std::move(weights);
      layer->params()[1]->values = std::move(biases);
      model.add(std::move(layer));
    } else if (type == "dropout") {
      model.add(std::make_unique<DropoutLayer>(j["rate"].get<double>()));
    } else {
      throw IoError("unknown layer type: " + type);
    }
  }

  if (doc.contains("metadata")) {
    const auto& meta = doc["metadata"];
    model.metadata().seed = meta.value("seed", std::uint64_t{0});
    model.metadata().epochs_trained = meta.value("epochs_trained", std::size_t{0});
    if (meta.contains("config")) {
      TrainConfig cfg;
      cfg.learning_rate = meta["config"].value("learning_rate", cfg.learning_rate);
      cfg.epochs = meta["config"].value("epochs", cfg.epochs);
      cfg.batch_size = meta["config"].value("batch_size", cfg.batch_size);
      cfg.split_ratio = meta["config"].value("split_ratio", cfg.split_ratio);
      cfg.seed = meta["config"].value("seed", cfg.seed);
      model.metadata().config = cfg;
    }
    if (meta.contains("metrics")) {
      const auto& mj = meta["metrics"];
      Metrics m = Metrics::from_counts(mj.value("tp", std::size_t{0}),
                                       mj.value("tn", std::size_t{0}),
                                       mj.value("fp", std::size_t{0}),
                                       mj.value("fn", std::size_t{0}));
      model.metadata().metrics = m;
    }
  }
  model.finalize();
  return model;
}

inline void save_model(Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << model_to_json(model).dump(2) << '\n';
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json doc;
  in >> doc;
  return model_from_json(doc);
}

}  // namespace io
}  // namespace ecgkit
