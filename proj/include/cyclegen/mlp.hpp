#pragma once

// Dense ReLU multilayer perceptron in the row-vector convention
//   H1 = relu(X W0 + b0), ..., O = Hn Wn + bn
// with per-feature affine normalization on inputs and outputs.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cyclegen {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

/// x_normalized = (x - offset) / scale, applied per feature.
struct AffineNorm {
  RowVector offset;
  RowVector scale;

  static AffineNorm identity(Eigen::Index n) {
    return {RowVector::Zero(n), RowVector::Ones(n)};
  }
  /// Min-max normalization onto [0, 1]; constant columns get unit scale.
  static AffineNorm min_max(const Matrix& data) {
    AffineNorm n{data.colwise().minCoeff(), data.colwise().maxCoeff()};
    n.scale -= n.offset;
    for (Eigen::Index j = 0; j < n.scale.size(); ++j)
      if (!(n.scale(j) > 0.0)) n.scale(j) = 1.0;
    return n;
  }
  Matrix apply(const Matrix& x) const {
    return (x.rowwise() - offset).array().rowwise() / scale.array();
  }
  Matrix invert(const Matrix& xn) const {
    return (xn.array().rowwise() * scale.array()).matrix().rowwise() + offset;
  }
  bool operator==(const AffineNorm&) const = default;
};

struct MlpGradients {
  std::vector<Matrix> dW;
  std::vector<RowVector> db;
};

class MlpModel {
 public:
  MlpModel() = default;

  /// Zero-initialized network with identity normalization.
  explicit MlpModel(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
    if (dims_.size() < 2) throw DimensionError("MlpModel needs at least input and output dims");
    for (int d : dims_)
      if (d <= 0) throw DimensionError("MlpModel layer dims must be positive");
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
      W_.push_back(Matrix::Zero(dims_[i], dims_[i + 1]));
      b_.push_back(RowVector::Zero(dims_[i + 1]));
    }
    in_norm_ = AffineNorm::identity(dims_.front());
    out_norm_ = AffineNorm::identity(dims_.back());
  }

  /// He-style scaled uniform init, deterministic for a given engine state.
  template <class Rng>
  void init_random(Rng& rng, double gain = 1.0) {
    for (std::size_t i = 0; i < W_.size(); ++i) {
      const double limit = gain * std::sqrt(6.0 / static_cast<double>(W_[i].rows()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index k = 0; k < W_[i].size(); ++k) W_[i].data()[k] = u(rng);
      b_[i].setZero();
    }
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return W_.size(); }

  std::vector<Matrix>& weights() { return W_; }
  const std::vector<Matrix>& weights() const { return W_; }
  std::vector<RowVector>& biases() { return b_; }
  const std::vector<RowVector>& biases() const { return b_; }
  AffineNorm& input_norm() { return in_norm_; }
  const AffineNorm& input_norm() const { return in_norm_; }
  AffineNorm& output_norm() { return out_norm_; }
  const AffineNorm& output_norm() const { return out_norm_; }

  std::string schema;

  /// Intermediate activations for backprop. acts[0] is the normalized
  /// input; acts[i] for 0 < i < L are post-ReLU hidden outputs; acts[L] is
  /// the normalized output.
  struct Cache {
    std::vector<Matrix> acts;
  };

  /// Forward pass on normalized inputs, returning normalized outputs.
  Matrix forward_normalized(const Matrix& xn, Cache* cache = nullptr) const {
    if (xn.cols() != input_dim())
      throw DimensionError("mlp input has " + std::to_string(xn.cols()) + " features, expected " +
                           std::to_string(input_dim()));
    Matrix a = xn;
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(a);
    }
    for (std::size_t i = 0; i < W_.size(); ++i) {
      Matrix z = a * W_[i];
      z.rowwise() += b_[i];
      if (i + 1 < W_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
      if (cache) cache->acts.push_back(a);
    }
    return a;
  }

  /// Batch forward in physical units (rows are samples).
  Matrix forward(const Matrix& x) const {
    return out_norm_.invert(forward_normalized(in_norm_.apply(x)));
  }

  Vector forward(const Vector& x) const {
    if (x.size() != input_dim())
      throw DimensionError("mlp input has " + std::to_string(x.size()) + " features, expected " +
                           std::to_string(input_dim()));
    return forward(Matrix(x.transpose())).row(0).transpose();
  }

  /// Backprop of an arbitrary loss given dL/d(normalized output).
  MlpGradients backward(const Cache& cache, const Matrix& d_out) const {
    const std::size_t L = W_.size();
    MlpGradients g;
    g.dW.resize(L);
    g.db.resize(L);
    Matrix delta = d_out;
    for (std::size_t k = L; k-- > 0;) {
      g.dW[k].noalias() = cache.acts[k].transpose() * delta;
      g.db[k] = delta.colwise().sum();
      if (k == 0) break;
      Matrix prev = delta * W_[k].transpose();
      prev.array() *= (cache.acts[k].array() > 0.0).cast<double>();
      delta = std::move(prev);
    }
    return g;
  }

  // Flat parameter views for optimizers: [W0, b0, W1, b1, ...].
  Eigen::Index num_parameters() const {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < W_.size(); ++i) n += W_[i].size() + b_[i].size();
    return n;
  }

  Vector parameters() const {
    Vector flat(num_parameters());
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < W_.size(); ++i) {
      flat.segment(o, W_[i].size()) = Eigen::Map<const Vector>(W_[i].data(), W_[i].size());
      o += W_[i].size();
      flat.segment(o, b_[i].size()) = b_[i].transpose();
      o += b_[i].size();
    }
    return flat;
  }

  void set_parameters(const Vector& flat) {
    if (flat.size() != num_parameters()) throw DimensionError("parameter vector size mismatch");
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < W_.size(); ++i) {
      Eigen::Map<Vector>(W_[i].data(), W_[i].size()) = flat.segment(o, W_[i].size());
      o += W_[i].size();
      b_[i] = flat.segment(o, b_[i].size()).transpose();
      o += b_[i].size();
    }
  }

  static Vector flatten(const MlpGradients& g) {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < g.dW.size(); ++i) n += g.dW[i].size() + g.db[i].size();
    Vector flat(n);
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < g.dW.size(); ++i) {
      flat.segment(o, g.dW[i].size()) = Eigen::Map<const Vector>(g.dW[i].data(), g.dW[i].size());
      o += g.dW[i].size();
      flat.segment(o, g.db[i].size()) = g.db[i].transpose();
      o += g.db[i].size();
    }
    return flat;
  }

  bool all_finite() const {
    for (std::size_t i = 0; i < W_.size(); ++i)
      if (!W_[i].allFinite() || !b_[i].allFinite()) return false;
    return true;
  }

  bool operator==(const MlpModel&) const = default;

 private:
  std::vector<int> dims_;
  std::vector<Matrix> W_;
  std::vector<RowVector> b_;
  AffineNorm in_norm_;
  AffineNorm out_norm_;
};

/// Mean-squared-error loss on normalized targets, averaged over every
/// (sample, output) element that the optional 0/1 mask keeps.
struct MseResult {
  double loss = 0.0;
  MlpGradients grads;
};

/// Same as mlp_backward but with inputs and targets already normalized.
inline MseResult mse_backward_normalized(const MlpModel& model, const Matrix& xn, const Matrix& yn,
                                         const Matrix* mask = nullptr) {
  if (xn.rows() != yn.rows()) throw DimensionError("input/target row count mismatch");
  if (xn.cols() != model.input_dim() || yn.cols() != model.output_dim())
    throw DimensionError("batch schema does not match model dims");
  MlpModel::Cache cache;
  Matrix err = model.forward_normalized(xn, &cache) - yn;
  double count = static_cast<double>(err.size());
  if (mask) {
    err.array() *= mask->array();
    count = std::max(1.0, mask->sum());
  }
  MseResult r;
  r.loss = err.squaredNorm() / count;
  r.grads = model.backward(cache, (2.0 / count) * err);
  return r;
}

/// Gradients of the MSE on normalized targets with respect to every W_i, b_i.
inline MseResult mlp_backward(const MlpModel& model, const Matrix& inputs, const Matrix& targets,
                              const Matrix* mask = nullptr) {
  if (inputs.cols() != model.input_dim() || targets.cols() != model.output_dim())
    throw DimensionError("batch schema does not match model dims");
  return mse_backward_normalized(model, model.input_norm().apply(inputs),
                                 model.output_norm().apply(targets), mask);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Vector m;
  Vector v;

  explicit AdamMoments(Eigen::Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One bias-corrected Adam update; `t` is the 1-based step index.
inline void adam_step(Vector& params, const Vector& grads, AdamMoments& mom, long t, double lr,
                      const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != mom.m.size())
    throw DimensionError("adam_step shape mismatch");
  if (t < 1) throw std::invalid_argument("adam_step requires t >= 1");
  mom.m = cfg.beta1 * mom.m + (1.0 - cfg.beta1) * grads;
  mom.v = cfg.beta2 * mom.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  params.array() -= lr * (mom.m.array() / c1) / ((mom.v.array() / c2).sqrt() + cfg.eps);
}

// ---------------------------------------------------------------------------
// mlpv1 serialization

inline nlohmann::json to_json(const MlpModel& m) {
  using nlohmann::json;
  auto row = [](const RowVector& r) { return std::vector<double>(r.data(), r.data() + r.size()); };
  json j;
  j["version"] = "mlpv1";
  j["schema"] = m.schema;
  j["layer_dims"] = m.layer_dims();
  json ws = json::array(), bs = json::array();
  for (std::size_t i = 0; i < m.num_layers(); ++i) {
    const Matrix& W = m.weights()[i];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(W.size()));
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) flat.push_back(W(r, c));
    ws.push_back(flat);
    bs.push_back(row(m.biases()[i]));
  }
  j["weights"] = ws;
  j["biases"] = bs;
  j["norms"] = {{"input", {{"offset", row(m.input_norm().offset)}, {"scale", row(m.input_norm().scale)}}},
                {"output", {{"offset", row(m.output_norm().offset)}, {"scale", row(m.output_norm().scale)}}}};
  return j;
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<std::string>() != "mlpv1")
      throw ModelFormatError("unsupported model version");
    MlpModel m(j.at("layer_dims").get<std::vector<int>>());
    m.schema = j.value("schema", "");
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != m.num_layers() || bs.size() != m.num_layers())
      throw ModelFormatError("layer count does not match layer_dims");
    for (std::size_t i = 0; i < m.num_layers(); ++i) {
      auto flat = ws[i].get<std::vector<double>>();
      Matrix& W = m.weights()[i];
      if (flat.size() != static_cast<std::size_t>(W.size()))
        throw ModelFormatError("weight matrix " + std::to_string(i) + " has wrong size");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[k++];
      auto b = bs[i].get<std::vector<double>>();
      if (b.size() != static_cast<std::size_t>(m.biases()[i].size()))
        throw ModelFormatError("bias vector " + std::to_string(i) + " has wrong size");
      m.biases()[i] = Eigen::Map<RowVector>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    auto read_norm = [](const nlohmann::json& n, Eigen::Index dim) {
      auto off = n.at("offset").get<std::vector<double>>();
      auto sc = n.at("scale").get<std::vector<double>>();
      if (off.size() != static_cast<std::size_t>(dim) || sc.size() != static_cast<std::size_t>(dim))
        throw ModelFormatError("normalization size mismatch");
      return AffineNorm{Eigen::Map<RowVector>(off.data(), dim), Eigen::Map<RowVector>(sc.data(), dim)};
    };
    m.input_norm() = read_norm(j.at("norms").at("input"), m.input_dim());
    m.output_norm() = read_norm(j.at("norms").at("output"), m.output_dim());
    if (!m.all_finite()) throw ModelFormatError("non-finite parameters");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(std::string("malformed mlpv1 model: ") + e.what());
  } catch (const DimensionError& e) {
    throw ModelFormatError(std::string("malformed mlpv1 model: ") + e.what());
  }
}

inline void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_json(m).dump();
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ModelFormatError(path + ": " + e.what());
  }
  return mlp_from_json(j);
}

}  // namespace cyclegen
