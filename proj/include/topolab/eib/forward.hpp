#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "topolab/agents.hpp"
#include "topolab/eib/encoder.hpp"
#include "topolab/eib/model.hpp"
#include "topolab/error.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"

namespace topolab::eib {

inline constexpr double kProbEpsilon = 1e-6;

// Symmetric N x N edge-probability matrix clamped to [eps, 1 - eps]. Only
// strictly lower-triangular entries (receiver > sender) drive sampling.
struct EdgeProbs {
  Eigen::MatrixXd m;
  std::size_t n() const noexcept { return static_cast<std::size_t>(m.rows()); }
};

inline double clamp_prob(double p) noexcept { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class ViewTemplate { Dense, Sparse };

// Row-normalized (A + I) for the undirected full or chain template.
inline Eigen::MatrixXd propagation_matrix(ViewTemplate view, std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j)
      if (i != j && (view == ViewTemplate::Dense || std::abs(i - j) == 1)) a(i, j) = 1.0;
  for (Eigen::Index i = 0; i < N; ++i) a.row(i) /= a.row(i).sum();
  return a;
}

struct GnnCache {
  std::vector<Eigen::MatrixXd> aggregated;  // per layer: P * m_{l-1}
  std::vector<Eigen::MatrixXd> pre;         // per layer: pre-activation
  Eigen::MatrixXd z;
};

// m_0 = X; m_l = act(mean over self and neighbours of m_{l-1}, times W_l^T, plus b_l);
// ReLU on hidden layers, identity on the last one.
inline GnnCache gnn_forward_cached(const Eigen::MatrixXd& propagation, const Eigen::MatrixXd& features,
                                   std::span<const Layer> layers) {
  if (propagation.rows() != features.rows() || propagation.cols() != features.rows())
    throw InvalidArgument("GNN adjacency and feature matrix disagree on the agent count");
  GnnCache c;
  Eigen::MatrixXd h = features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.cols() != h.cols() || layers[l].bias.size() != layers[l].weight.rows())
      throw InvalidArgument("GNN layer " + std::to_string(l) + " shape does not match its input");
    c.aggregated.push_back(propagation * h);
    Eigen::MatrixXd pre = c.aggregated.back() * layers[l].weight.transpose();
    pre.rowwise() += layers[l].bias.transpose();
    c.pre.push_back(pre);
    h = (l + 1 < layers.size()) ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
  }
  c.z = h;
  return c;
}

inline Eigen::MatrixXd gnn_forward(const Eigen::MatrixXd& propagation, const Eigen::MatrixXd& features,
                                   std::span<const Layer> layers) {
  return gnn_forward_cached(propagation, features, layers).z;
}

// M = sigmoid(Z Z^T), node embeddings as rows.
inline EdgeProbs decode_mask(const Eigen::MatrixXd& z) {
  const Eigen::MatrixXd s = z * z.transpose();
  EdgeProbs out{s.unaryExpr([](double x) { return clamp_prob(sigmoid(x)); })};
  return out;
}

struct GateCache {
  Eigen::VectorXd hidden_pre;
  Eigen::VectorXd hidden;
  std::array<double, 2> alpha{0.5, 0.5};
};

// alpha = softmax(W2 ReLU(W1 q + b1) + b2), returned as (dense, sparse).
inline GateCache gate_cached(const Eigen::VectorXd& query, const GateParams& g) {
  if (g.w1.cols() != query.size()) throw InvalidArgument("gate input width does not match the query embedding");
  GateCache c;
  c.hidden_pre = g.w1 * query + g.b1;
  c.hidden = c.hidden_pre.cwiseMax(0.0);
  const Eigen::VectorXd logits = g.w2 * c.hidden + g.b2;
  const double mx = logits.maxCoeff();
  const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
  c.alpha = {e0 / (e0 + e1), e1 / (e0 + e1)};
  return c;
}

inline std::array<double, 2> gate(const Eigen::VectorXd& query, const GateParams& g) {
  return gate_cached(query, g).alpha;
}

inline EdgeProbs fuse(const EdgeProbs& dense, const EdgeProbs& sparse, std::array<double, 2> alpha) {
  if (dense.m.rows() != sparse.m.rows() || dense.m.cols() != sparse.m.cols())
    throw InvalidArgument("cannot fuse masks of different sizes");
  EdgeProbs out{(alpha[0] * dense.m + alpha[1] * sparse.m).unaryExpr([](double x) { return clamp_prob(x); })};
  return out;
}

// One Bernoulli draw per receiver > sender pair, in lexicographic order.
inline Topology sample_topology(const EdgeProbs& probs, Stream& rng) {
  const std::size_t n = probs.n();
  Topology t(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (rng.bernoulli(probs.m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))) t = t.with_edge({i, j});
  return t;
}

inline double log_prob(const EdgeProbs& probs, const Topology& t) {
  if (probs.n() != t.n()) throw InvalidArgument("topology and edge probabilities disagree on the agent count");
  double lp = 0.0;
  for (std::size_t i = 0; i < t.n(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double m = probs.m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      lp += t.has_edge(i, j) ? std::log(m) : std::log1p(-m);
    }
  return lp;
}

// ---------------------------------------------------------------------------
// Full forward pass with cache, and its reverse-mode derivative.

struct Inputs {
  Eigen::MatrixXd features;  // N x D
  Eigen::VectorXd query;     // D
};

inline Inputs encode_inputs(const EibModel& model, std::span<const AgentSpec> agents, const TaskItem& task) {
  Inputs in;
  in.features.resize(static_cast<Eigen::Index>(agents.size()), static_cast<Eigen::Index>(model.hyper.dim));
  for (std::size_t i = 0; i < agents.size(); ++i)
    in.features.row(static_cast<Eigen::Index>(i)) = encode_node(agents[i], task, model.hyper.dim, model.salt);
  in.query = encode_query(task, model.hyper.dim, model.salt);
  return in;
}

struct ForwardCache {
  Eigen::MatrixXd prop_dense, prop_sparse;
  GnnCache gnn_dense, gnn_sparse;
  Eigen::MatrixXd sig_dense, sig_sparse;  // unclamped sigmoid(ZZ^T)
  EdgeProbs m_dense, m_sparse;
  GateCache gate;
  Eigen::MatrixXd fused_raw;  // before the final clamp
  EdgeProbs m_final;
  bool uses_dense = true, uses_sparse = true;
};

inline ForwardCache forward(const EibModel& model, const Inputs& in) {
  const auto n = static_cast<std::size_t>(in.features.rows());
  ForwardCache c;
  c.uses_dense = model.ablation != Ablation::SparseOnly;
  c.uses_sparse = model.ablation != Ablation::DenseOnly;
  auto run_view = [&](ViewTemplate v, const std::vector<Layer>& layers, Eigen::MatrixXd& prop, GnnCache& g,
                      Eigen::MatrixXd& sig, EdgeProbs& mask) {
    prop = propagation_matrix(v, n);
    g = gnn_forward_cached(prop, in.features, layers);
    sig = (g.z * g.z.transpose()).unaryExpr([](double x) { return sigmoid(x); });
    mask.m = sig.unaryExpr([](double x) { return clamp_prob(x); });
  };
  if (c.uses_dense) run_view(ViewTemplate::Dense, model.dense, c.prop_dense, c.gnn_dense, c.sig_dense, c.m_dense);
  if (c.uses_sparse)
    run_view(ViewTemplate::Sparse, model.sparse, c.prop_sparse, c.gnn_sparse, c.sig_sparse, c.m_sparse);

  switch (model.ablation) {
    case Ablation::FullModel: c.gate = gate_cached(in.query, model.gate); break;
    case Ablation::DenseOnly: c.gate.alpha = {1.0, 0.0}; break;
    case Ablation::SparseOnly: c.gate.alpha = {0.0, 1.0}; break;
    case Ablation::NoFusion: c.gate.alpha = {0.5, 0.5}; break;
  }
  const auto N = static_cast<Eigen::Index>(n);
  c.fused_raw = Eigen::MatrixXd::Zero(N, N);
  if (c.uses_dense) c.fused_raw += c.gate.alpha[0] * c.m_dense.m;
  if (c.uses_sparse) c.fused_raw += c.gate.alpha[1] * c.m_sparse.m;
  c.m_final.m = c.fused_raw.unaryExpr([](double x) { return clamp_prob(x); });
  return c;
}

// d log P(t) / d M_final on receiver > sender entries; zero elsewhere.
inline Eigen::MatrixXd log_prob_grad(const EdgeProbs& probs, const Topology& t) {
  const auto N = static_cast<Eigen::Index>(t.n());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      const double m = probs.m(i, j);
      g(i, j) = t.has_edge(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) ? 1.0 / m : -1.0 / (1.0 - m);
    }
  return g;
}

namespace detail {

inline bool inside_clamp(double x) noexcept { return x > kProbEpsilon && x < 1.0 - kProbEpsilon; }

// Accumulates d/dtheta of one GNN view given dL/dM (clamped mask).
inline void backward_view(const Eigen::MatrixXd& grad_mask, const Eigen::MatrixXd& sig, const GnnCache& g,
                          const Eigen::MatrixXd& prop, std::span<const Layer> layers, std::span<Layer> grads) {
  const Eigen::Index n = sig.rows();
  Eigen::MatrixXd grad_s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = sig(i, j);
      grad_s(i, j) = inside_clamp(s) ? grad_mask(i, j) * s * (1.0 - s) : 0.0;
    }
  // S = Z Z^T
  Eigen::MatrixXd grad_h = (grad_s + grad_s.transpose()) * g.z;
  for (std::size_t l = layers.size(); l-- > 0;) {
    Eigen::MatrixXd grad_pre = grad_h;
    if (l + 1 < layers.size()) grad_pre = grad_pre.cwiseProduct((g.pre[l].array() > 0.0).cast<double>().matrix());
    grads[l].weight += grad_pre.transpose() * g.aggregated[l];
    grads[l].bias += grad_pre.colwise().sum().transpose();
    if (l > 0) grad_h = prop.transpose() * grad_pre * layers[l].weight;
  }
}

}  // namespace detail

// Reverse-mode pass: accumulates dL/dtheta into `grads` given dL/dM_final.
inline void backward(const EibModel& model, const Inputs& in, const ForwardCache& c,
                     const Eigen::MatrixXd& grad_final, EibModel& grads) {
  const Eigen::Index n = grad_final.rows();
  Eigen::MatrixXd g = grad_final;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (!detail::inside_clamp(c.fused_raw(i, j))) g(i, j) = 0.0;

  if (c.uses_dense)
    detail::backward_view(c.gate.alpha[0] * g, c.sig_dense, c.gnn_dense, c.prop_dense, model.dense, grads.dense);
  if (c.uses_sparse)
    detail::backward_view(c.gate.alpha[1] * g, c.sig_sparse, c.gnn_sparse, c.prop_sparse, model.sparse, grads.sparse);

  if (model.ablation == Ablation::FullModel) {
    const double d_alpha0 = g.cwiseProduct(c.m_dense.m).sum();
    const double d_alpha1 = g.cwiseProduct(c.m_sparse.m).sum();
    const auto& a = c.gate.alpha;
    const double dot = a[0] * d_alpha0 + a[1] * d_alpha1;
    Eigen::Vector2d d_logits(a[0] * (d_alpha0 - dot), a[1] * (d_alpha1 - dot));
    grads.gate.w2 += d_logits * c.gate.hidden.transpose();
    grads.gate.b2 += d_logits;
    const Eigen::VectorXd d_hidden = model.gate.w2.transpose() * d_logits;
    const Eigen::VectorXd d_pre = d_hidden.cwiseProduct((c.gate.hidden_pre.array() > 0.0).cast<double>().matrix());
    grads.gate.w1 += d_pre * in.query.transpose();
    grads.gate.b1 += d_pre;
  }
}

}  // namespace topolab::eib
