#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "topolab/eib/encoder.hpp"
#include "topolab/error.hpp"
#include "topolab/rng.hpp"

namespace topolab::eib {

enum class Ablation { FullModel, DenseOnly, SparseOnly, NoFusion };

inline const char* ablation_label(Ablation a) {
  switch (a) {
    case Ablation::FullModel: return "full";
    case Ablation::DenseOnly: return "dense-only";
    case Ablation::SparseOnly: return "sparse-only";
    case Ablation::NoFusion: return "no-fusion";
  }
  return "full";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s == "full") return Ablation::FullModel;
  if (s == "dense-only") return Ablation::DenseOnly;
  if (s == "sparse-only") return Ablation::SparseOnly;
  if (s == "no-fusion") return Ablation::NoFusion;
  throw InvalidArgument("unknown ablation '" + s + "' (expected full, dense-only, sparse-only, no-fusion)");
}

struct Hyper {
  std::size_t dim = 64;          // D, embedding width
  std::size_t hidden = 32;       // H, GNN width
  std::size_t layers = 3;        // L
  std::size_t gate_hidden = 16;  // H_g

  void validate() const {
    if (dim == 0 || hidden == 0 || layers == 0 || gate_hidden == 0)
      throw InvalidArgument("model dimensions must be positive");
  }
  friend bool operator==(const Hyper&, const Hyper&) = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct GateParams {
  Eigen::MatrixXd w1;  // H_g x D
  Eigen::VectorXd b1;  // H_g
  Eigen::MatrixXd w2;  // 2 x H_g
  Eigen::VectorXd b2;  // 2
};

// All learnable parameters. The same shape doubles as a gradient or
// momentum buffer.
struct EibModel {
  Hyper hyper;
  std::string salt{kDefaultSalt};
  Ablation ablation = Ablation::FullModel;
  std::vector<Layer> dense;
  std::vector<Layer> sparse;
  GateParams gate;

  std::size_t layer_in(std::size_t l) const { return l == 0 ? hyper.dim : hyper.hidden; }
};

// Visits every tensor of `m` (and the matching tensors of `others`) in a
// fixed order: dense layers, sparse layers, gate.
template <typename Model, typename F>
void for_each_tensor(Model& m, F&& f) {
  for (auto* view : {&m.dense, &m.sparse})
    for (auto& layer : *view) {
      f(layer.weight);
      f(layer.bias);
    }
  f(m.gate.w1);
  f(m.gate.b1);
  f(m.gate.w2);
  f(m.gate.b2);
}

template <typename F>
void for_each_tensor_pair(EibModel& a, const EibModel& b, F&& f) {
  std::vector<const Eigen::MatrixXd*> mats;
  std::vector<const Eigen::VectorXd*> vecs;
  auto collect = [&](const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Eigen::MatrixXd>)
      mats.push_back(&t);
    else
      vecs.push_back(&t);
  };
  for_each_tensor(b, collect);
  std::size_t mi = 0, vi = 0;
  for_each_tensor(a, [&](auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, Eigen::MatrixXd>)
      f(t, *mats[mi++]);
    else
      f(t, *vecs[vi++]);
  });
}

inline EibModel zeros_like(const EibModel& m) {
  EibModel z = m;
  for_each_tensor(z, [](auto& t) { t.setZero(); });
  return z;
}

inline std::size_t parameter_count(const EibModel& m) {
  std::size_t n = 0;
  for_each_tensor(m, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
inline EibModel init_model(const Hyper& hyper, std::uint64_t seed, Ablation ablation = Ablation::FullModel,
                           std::string salt = std::string(kDefaultSalt)) {
  hyper.validate();
  EibModel m;
  m.hyper = hyper;
  m.salt = std::move(salt);
  m.ablation = ablation;
  Stream rng(seed, {fnv1a64("eib-init")});
  auto fill = [&](auto& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  };
  for (auto* view : {&m.dense, &m.sparse}) {
    for (std::size_t l = 0; l < hyper.layers; ++l) {
      const std::size_t in = m.layer_in(l);
      Layer layer{Eigen::MatrixXd(hyper.hidden, in), Eigen::VectorXd(hyper.hidden)};
      fill(layer.weight, in);
      fill(layer.bias, in);
      view->push_back(std::move(layer));
    }
  }
  m.gate.w1.resize(hyper.gate_hidden, hyper.dim);
  m.gate.b1.resize(hyper.gate_hidden);
  m.gate.w2.resize(2, hyper.gate_hidden);
  m.gate.b2.resize(2);
  fill(m.gate.w1, hyper.dim);
  fill(m.gate.b1, hyper.dim);
  fill(m.gate.w2, hyper.gate_hidden);
  fill(m.gate.b2, hyper.gate_hidden);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON with hyperparameters, encoder salt and every tensor in
// row-major order.

inline constexpr const char* kCheckpointFormat = "topolab-eib-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json tensor_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

inline nlohmann::json tensor_json(const Eigen::VectorXd& v) {
  return {{"shape", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

inline std::vector<std::string> tensor_names(const EibModel& m) {
  std::vector<std::string> names;
  for (const char* view : {"dense", "sparse"})
    for (std::size_t l = 0; l < m.hyper.layers; ++l) {
      names.push_back(std::string(view) + "." + std::to_string(l) + ".weight");
      names.push_back(std::string(view) + "." + std::to_string(l) + ".bias");
    }
  for (const char* g : {"gate.w1", "gate.b1", "gate.w2", "gate.b2"}) names.emplace_back(g);
  return names;
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const EibModel& m) {
  nlohmann::json tensors = nlohmann::json::object();
  const auto names = detail::tensor_names(m);
  std::size_t i = 0;
  for_each_tensor(m, [&](const auto& t) { tensors[names[i++]] = detail::tensor_json(t); });
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"hyper",
           {{"dim", m.hyper.dim},
            {"hidden", m.hyper.hidden},
            {"layers", m.hyper.layers},
            {"gate_hidden", m.hyper.gate_hidden}}},
          {"encoder", {{"kind", "feature-hashing"}, {"dim", m.hyper.dim}, {"salt", m.salt}}},
          {"ablation", ablation_label(m.ablation)},
          {"tensors", std::move(tensors)}};
}

inline EibModel model_from_checkpoint(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw InvalidArgument("not a topolab EIB checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw InvalidArgument("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    Hyper h;
    h.dim = j.at("hyper").at("dim").get<std::size_t>();
    h.hidden = j.at("hyper").at("hidden").get<std::size_t>();
    h.layers = j.at("hyper").at("layers").get<std::size_t>();
    h.gate_hidden = j.at("hyper").at("gate_hidden").get<std::size_t>();
    EibModel m = init_model(h, 0, parse_ablation(j.at("ablation").get<std::string>()),
                            j.at("encoder").at("salt").get<std::string>());
    const auto names = detail::tensor_names(m);
    const auto& tensors = j.at("tensors");
    std::size_t i = 0;
    for_each_tensor(m, [&](auto& t) {
      const std::string& name = names[i++];
      if (!tensors.contains(name)) throw InvalidArgument("checkpoint is missing tensor '" + name + "'");
      const auto& tj = tensors.at(name);
      const auto shape = tj.at("shape").get<std::vector<Eigen::Index>>();
      const auto data = tj.at("data").get<std::vector<double>>();
      const Eigen::Index rows = t.rows(), cols = t.cols();
      const bool is_vec = std::is_same_v<std::decay_t<decltype(t)>, Eigen::VectorXd>;
      const bool shape_ok = is_vec ? (shape.size() == 1 && shape[0] == rows)
                                   : (shape.size() == 2 && shape[0] == rows && shape[1] == cols);
      if (!shape_ok || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        std::string got;
        for (auto s : shape) got += (got.empty() ? "" : "x") + std::to_string(s);
        throw InvalidArgument("checkpoint tensor '" + name + "' has shape " + got + " but the model expects " +
                              (is_vec ? std::to_string(rows) : std::to_string(rows) + "x" + std::to_string(cols)));
      }
      std::size_t p = 0;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) t(r, c) = data[p++];
    });
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace topolab::eib
