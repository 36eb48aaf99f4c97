#pragma once

// Property datasets, surrogate training (Adam + early stopping + plateau
// LR halving), relative-error histograms and the surrogate-backed fluid.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclegen/fluid.hpp"
#include "cyclegen/mlp.hpp"
#include "cyclegen/sampling.hpp"

namespace cyclegen {

enum class Schema { PH2TSQ, PS2H, P2TH_SAT, T2P_SAT };

inline std::string to_string(Schema s) {
  switch (s) {
    case Schema::PH2TSQ: return "PH2TSQ";
    case Schema::PS2H: return "PS2H";
    case Schema::P2TH_SAT: return "P2TH_SAT";
    case Schema::T2P_SAT: return "T2P_SAT";
  }
  return "?";
}

inline Schema parse_schema(const std::string& name) {
  if (name == "PH2TSQ") return Schema::PH2TSQ;
  if (name == "PS2H") return Schema::PS2H;
  if (name == "P2TH_SAT") return Schema::P2TH_SAT;
  if (name == "T2P_SAT") return Schema::T2P_SAT;
  throw std::invalid_argument("unknown schema '" + name + "'");
}

struct SchemaColumns {
  std::vector<std::string> inputs;
  std::vector<std::string> targets;
};

inline SchemaColumns schema_columns(Schema s) {
  switch (s) {
    case Schema::PH2TSQ: return {{"p", "h"}, {"T", "s", "Q"}};
    case Schema::PS2H: return {{"p", "s"}, {"h"}};
    case Schema::P2TH_SAT: return {{"p"}, {"T_sat", "h_l", "h_v"}};
    case Schema::T2P_SAT: return {{"T"}, {"p_sat"}};
  }
  return {};
}

/// Hidden-layer sizes used for each of the four property networks.
inline std::vector<int> default_hidden_layers(Schema s) {
  if (s == Schema::T2P_SAT) return {128, 128, 64};
  return {256, 256, 128};
}

struct PropertyDataset {
  Schema schema = Schema::PH2TSQ;
  Matrix inputs;
  Matrix targets;

  Eigen::Index size() const { return inputs.rows(); }
};

/// Closed-form targets for one input row.
inline std::vector<double> evaluate_targets(const FluidModel& fluid, Schema s,
                                            const std::vector<double>& in) {
  switch (s) {
    case Schema::PH2TSQ: {
      const FluidState st = fluid.ph_to_tsq(in[0], in[1]);
      return {st.T, st.s, st.Q};
    }
    case Schema::PS2H: return {fluid.ps_to_h(in[0], in[1])};
    case Schema::P2TH_SAT: {
      const SaturationState sat = fluid.p_to_sat(in[0]);
      return {sat.T, sat.h_l, sat.h_v};
    }
    case Schema::T2P_SAT: return {fluid.t_to_psat(in[0])};
  }
  return {};
}

/// n quasi-uniform samples over the schema's input box.
inline PropertyDataset generate_dataset(const FluidModel& fluid, Schema schema, long n,
                                        std::uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("generate_dataset: n must be positive");
  const FluidDomain& d = fluid.domain();
  const SchemaColumns cols = schema_columns(schema);
  const int in_dim = static_cast<int>(cols.inputs.size());
  PropertyDataset ds;
  ds.schema = schema;
  ds.inputs.resize(n, in_dim);
  ds.targets.resize(n, static_cast<Eigen::Index>(cols.targets.size()));
  HaltonSequence seq(in_dim, substream_seed(seed, "dataset"));
  for (long i = 0; i < n; ++i) {
    const std::vector<double> u = seq.point(static_cast<std::uint64_t>(i));
    std::vector<double> in(static_cast<std::size_t>(in_dim));
    switch (schema) {
      case Schema::PH2TSQ:
        in = {d.p_min + u[0] * (d.p_max - d.p_min), fluid.h_min() + u[1] * (fluid.h_max() - fluid.h_min())};
        break;
      case Schema::PS2H: {
        // Sample (p, h) and map to entropy so inputs cover the reachable set.
        const double p = d.p_min + u[0] * (d.p_max - d.p_min);
        const double h = fluid.h_min() + u[1] * (fluid.h_max() - fluid.h_min());
        in = {p, fluid.ph_to_tsq(p, h).s};
        break;
      }
      case Schema::P2TH_SAT:
        in = {fluid.p_triple() + u[0] * (fluid.p_critical() - fluid.p_triple())};
        break;
      case Schema::T2P_SAT: {
        const double t_lo = d.T_min;
        const double t_hi = fluid.p_to_sat(fluid.p_critical()).T;
        in = {t_lo + u[0] * (t_hi - t_lo)};
        break;
      }
    }
    const std::vector<double> out = evaluate_targets(fluid, schema, in);
    for (int j = 0; j < in_dim; ++j) ds.inputs(i, j) = in[j];
    for (std::size_t j = 0; j < out.size(); ++j) ds.targets(i, static_cast<Eigen::Index>(j)) = out[j];
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_dataset_csv(const PropertyDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  const SchemaColumns cols = schema_columns(ds.schema);
  std::vector<std::string> names = cols.inputs;
  names.insert(names.end(), cols.targets.begin(), cols.targets.end());
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) out << (j ? "," : "") << ds.inputs(i, j);
    for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) out << ',' << ds.targets(i, j);
    out << '\n';
  }
}

/// Reads a dataset whose header names the schema columns in order; the
/// schema is inferred from the header.
inline PropertyDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  std::optional<Schema> schema;
  for (Schema s : {Schema::PH2TSQ, Schema::PS2H, Schema::P2TH_SAT, Schema::T2P_SAT}) {
    SchemaColumns c = schema_columns(s);
    std::vector<std::string> names = c.inputs;
    names.insert(names.end(), c.targets.begin(), c.targets.end());
    if (names == header) schema = s;
  }
  if (!schema) throw std::runtime_error(path + ": header does not match any schema");
  const SchemaColumns cols = schema_columns(*schema);
  const std::size_t ni = cols.inputs.size();
  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
      if (!std::isfinite(row.back()))
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-finite value");
    }
    if (row.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": wrong column count");
    rows.push_back(std::move(row));
  }
  PropertyDataset ds;
  ds.schema = *schema;
  ds.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ni));
  ds.targets.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(header.size() - ni));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < header.size(); ++j) {
      const auto r = static_cast<Eigen::Index>(i);
      if (j < ni)
        ds.inputs(r, static_cast<Eigen::Index>(j)) = rows[i][j];
      else
        ds.targets(r, static_cast<Eigen::Index>(j - ni)) = rows[i][j];
    }
  return ds;
}

// ---------------------------------------------------------------------------
// Error histogram

/// Relative-error bins in percent: (0,0.01], (0.01,0.05], (0.05,0.1],
/// (0.1,0.5], (0.5,1], (1,inf). Exact predictions fall in the first bin.
struct ErrorHistogram {
  static constexpr std::array<double, 5> kEdges{0.01, 0.05, 0.1, 0.5, 1.0};
  static constexpr std::array<const char*, 6> kLabels{"(0,0.01]", "(0.01,0.05]", "(0.05,0.1]",
                                                      "(0.1,0.5]", "(0.5,1]",    "(1,inf)"};
  std::array<long, 6> counts{};
  long total = 0;

  void add_percent(double rel_percent) {
    std::size_t b = 0;
    while (b < kEdges.size() && rel_percent > kEdges[b]) ++b;
    ++counts[b];
    ++total;
  }
  void add(double predicted, double truth) {
    const double err = std::abs(predicted - truth);
    double rel = 0.0;
    if (err > 0.0) rel = truth != 0.0 ? 100.0 * err / std::abs(truth) : std::numeric_limits<double>::infinity();
    add_percent(rel);
  }
  double proportion(std::size_t bin) const {
    return total ? static_cast<double>(counts[bin]) / static_cast<double>(total) : 0.0;
  }
  /// Fraction of samples with relative error <= 1 %.
  double fraction_within_1pct() const {
    return total ? 1.0 - static_cast<double>(counts[5]) / static_cast<double>(total) : 0.0;
  }
};

struct ErrorReport {
  Schema schema = Schema::PH2TSQ;
  std::vector<std::string> columns;
  std::vector<ErrorHistogram> histograms;
};

/// Held-out errors of `model` on `ds`. For PH2TSQ, quality errors are only
/// counted on two-phase samples.
inline ErrorReport evaluate_errors(const MlpModel& model, const PropertyDataset& ds) {
  ErrorReport rep;
  rep.schema = ds.schema;
  rep.columns = schema_columns(ds.schema).targets;
  rep.histograms.resize(rep.columns.size());
  const Matrix pred = model.forward(ds.inputs);
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) {
      if (ds.schema == Schema::PH2TSQ && j == 2 && ds.targets(i, 2) < 0.0) continue;
      rep.histograms[static_cast<std::size_t>(j)].add(pred(i, j), ds.targets(i, j));
    }
  return rep;
}

inline void write_histogram_csv(const ErrorReport& rep, std::ostream& out) {
  out << "interval";
  for (const auto& c : rep.columns) out << ',' << to_string(rep.schema) << '_' << c;
  out << '\n';
  for (std::size_t b = 0; b < ErrorHistogram::kLabels.size(); ++b) {
    out << ErrorHistogram::kLabels[b];
    for (const auto& h : rep.histograms) out << ',' << h.proportion(b);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int max_epochs = 500;
  int patience = 20;
  double initial_lr = 1e-3;
  int lr_halving_patience = 5;
  int batch_size = 256;
  AdamConfig adam{};
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::vector<int> hidden_layers;  // empty: use default_hidden_layers(schema)
  std::uint64_t seed = 7;
  double max_seconds = 0.0;        // wall-clock cap, 0 = none

  void validate() const {
    if (!(patience > 0 && patience < max_epochs))
      throw std::invalid_argument("TrainConfig: need 0 < patience < max_epochs");
    if (!(initial_lr > 0.0)) throw std::invalid_argument("TrainConfig: initial_lr must be positive");
    if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    const double sum = split_fractions[0] + split_fractions[1] + split_fractions[2];
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("TrainConfig: split fractions must sum to 1");
    for (double f : split_fractions)
      if (f < 0.0) throw std::invalid_argument("TrainConfig: negative split fraction");
  }
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  MlpModel model;  // best-validation parameters
  ErrorReport test_report;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool early_stopped = false;
};

namespace detail {

inline Matrix rows_of(const Matrix& m, const std::vector<Eigen::Index>& idx, std::size_t begin,
                      std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t k = begin; k < end; ++k) out.row(static_cast<Eigen::Index>(k - begin)) = m.row(idx[k]);
  return out;
}

inline Matrix quality_mask(const PropertyDataset& ds, const Matrix& targets) {
  Matrix mask = Matrix::Ones(targets.rows(), targets.cols());
  if (ds.schema == Schema::PH2TSQ)
    for (Eigen::Index i = 0; i < targets.rows(); ++i)
      if (targets(i, 2) < 0.0) mask(i, 2) = 0.0;
  return mask;
}

}  // namespace detail

/// Trains one property network. The returned model holds the parameters of
/// the best validation epoch; the test split feeds the error report.
inline TrainResult train_surrogate(const PropertyDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = ds.size();
  if (ds.inputs.rows() != ds.targets.rows()) throw DimensionError("dataset row counts differ");
  const auto n_train = static_cast<Eigen::Index>(std::floor(cfg.split_fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<Eigen::Index>(std::floor(cfg.split_fractions[1] * static_cast<double>(n)));
  if (n_train < 1 || n_val < 1 || n - n_train - n_val < 1)
    throw std::invalid_argument("train_surrogate: dataset too small for the split");

  Rng rng = make_rng(cfg.seed, "train");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto tr_end = static_cast<std::size_t>(n_train);
  const auto va_end = static_cast<std::size_t>(n_train + n_val);

  const Matrix x_train = detail::rows_of(ds.inputs, perm, 0, tr_end);
  const Matrix y_train = detail::rows_of(ds.targets, perm, 0, tr_end);
  const Matrix x_val = detail::rows_of(ds.inputs, perm, tr_end, va_end);
  const Matrix y_val = detail::rows_of(ds.targets, perm, tr_end, va_end);
  PropertyDataset test{ds.schema, detail::rows_of(ds.inputs, perm, va_end, perm.size()),
                       detail::rows_of(ds.targets, perm, va_end, perm.size())};

  std::vector<int> dims{static_cast<int>(ds.inputs.cols())};
  const std::vector<int> hidden = cfg.hidden_layers.empty() ? default_hidden_layers(ds.schema) : cfg.hidden_layers;
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(static_cast<int>(ds.targets.cols()));
  MlpModel model(dims);
  model.schema = to_string(ds.schema);
  Rng init_rng = make_rng(cfg.seed, "init");
  model.init_random(init_rng);
  model.input_norm() = AffineNorm::min_max(x_train);
  {
    // Off-dome quality sentinels are masked, so normalize Q on dome rows only.
    Matrix y_for_norm = y_train;
    if (ds.schema == Schema::PH2TSQ)
      for (Eigen::Index i = 0; i < y_for_norm.rows(); ++i)
        if (y_for_norm(i, 2) < 0.0) y_for_norm(i, 2) = 0.0;
    model.output_norm() = AffineNorm::min_max(y_for_norm);
  }

  const Matrix xn_train = model.input_norm().apply(x_train);
  const Matrix yn_train = model.output_norm().apply(y_train);
  const Matrix mask_train = detail::quality_mask(ds, y_train);
  const Matrix xn_val = model.input_norm().apply(x_val);
  const Matrix yn_val = model.output_norm().apply(y_val);
  const Matrix mask_val = detail::quality_mask(ds, y_val);

  Vector params = model.parameters();
  AdamMoments moments(params.size());
  Vector best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  double lr = cfg.initial_lr;
  int since_best = 0, since_lr_change = 0;
  long step = 0;

  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    long batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const Matrix xb = detail::rows_of(xn_train, order, b, e);
      const Matrix yb = detail::rows_of(yn_train, order, b, e);
      const Matrix mb = detail::rows_of(mask_train, order, b, e);
      model.set_parameters(params);
      MseResult r = mse_backward_normalized(model, xb, yb, &mb);
      if (!std::isfinite(r.loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (lr=" + std::to_string(lr) + ")");
      adam_step(params, MlpModel::flatten(r.grads), moments, ++step, lr, cfg.adam);
      loss_sum += r.loss;
      ++batches;
    }
    model.set_parameters(params);
    const Matrix val_err = (model.forward_normalized(xn_val) - yn_val).cwiseProduct(mask_val);
    const double val_loss = val_err.squaredNorm() / std::max(1.0, mask_val.sum());
    if (!std::isfinite(val_loss))
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), val_loss, lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      best_params = params;
      result.best_epoch = epoch;
      since_best = 0;
      since_lr_change = 0;
    } else {
      ++since_best;
      if (++since_lr_change >= cfg.lr_halving_patience) {
        lr *= 0.5;
        since_lr_change = 0;
      }
    }
    if (since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
    if (cfg.max_seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count() > cfg.max_seconds)
      break;
  }
  model.set_parameters(best_params);
  result.test_report = evaluate_errors(model, test);
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Surrogate fluid

/// Fluid backed by the four property networks. Phase is decided from the
/// saturation network; quality is the PH2TSQ output clamped to [0,1].
class SurrogateFluid final : public FluidModel {
 public:
  SurrogateFluid(MlpModel ph2tsq, MlpModel ps2h, MlpModel p2th_sat, MlpModel t2p_sat, FluidDomain domain,
                 double h_min, double h_max, double p_triple, double p_critical)
      : ph2tsq_(std::move(ph2tsq)),
        ps2h_(std::move(ps2h)),
        p2th_(std::move(p2th_sat)),
        t2p_(std::move(t2p_sat)),
        domain_(domain),
        h_min_(h_min),
        h_max_(h_max),
        p_triple_(p_triple),
        p_c_(p_critical) {
    check_dims(ph2tsq_, 2, 3, "PH2TSQ");
    check_dims(ps2h_, 2, 1, "PS2H");
    check_dims(p2th_, 1, 3, "P2TH_SAT");
    check_dims(t2p_, 1, 1, "T2P_SAT");
  }

  /// Domain constants are taken from the analytic fluid the nets were fit to.
  static SurrogateFluid from_models(MlpModel ph2tsq, MlpModel ps2h, MlpModel p2th, MlpModel t2p,
                                    const ReferenceFluid& ref) {
    return SurrogateFluid(std::move(ph2tsq), std::move(ps2h), std::move(p2th), std::move(t2p),
                          ref.domain(), ref.h_min(), ref.h_max(), ref.p_triple(), ref.p_critical());
  }

  const FluidDomain& domain() const override { return domain_; }
  double h_min() const override { return h_min_; }
  double h_max() const override { return h_max_; }
  double p_triple() const override { return p_triple_; }
  double p_critical() const override { return p_c_; }

  FluidState ph_to_tsq(double p, double h) const override {
    check_p(p);
    if (!(h >= h_min_ && h <= h_max_)) throw DomainError("surrogate ph_to_tsq: h outside domain");
    const Vector out = ph2tsq_.forward(Vector{{p, h}});
    FluidState st{p, h, out(0), out(1), kSinglePhase};
    if (in_dome_pressure_range(p)) {
      const SaturationState sat = p_to_sat(p);
      if (h >= sat.h_l && h <= sat.h_v) st.Q = std::clamp(out(2), 0.0, 1.0);
    }
    if (!(st.T > 0.0) || !std::isfinite(st.s)) throw DomainError("surrogate ph_to_tsq: invalid output");
    return st;
  }

  double ps_to_h(double p, double s) const override {
    check_p(p);
    return ps2h_.forward(Vector{{p, s}})(0);
  }

  SaturationState p_to_sat(double p) const override {
    if (!(p >= p_triple_ && p <= p_c_)) throw DomainError("surrogate p_to_sat: p outside dome");
    const Vector out = p2th_.forward(Vector{{p}});
    return {out(0), out(1), out(2)};
  }

  double t_to_psat(double T) const override {
    if (!(T >= domain_.T_min && T <= p_to_sat(p_c_).T + 1e-9))
      throw DomainError("surrogate t_to_psat: T outside dome");
    return t2p_.forward(Vector{{T}})(0);
  }

 private:
  static void check_dims(const MlpModel& m, int in, int out, const char* name) {
    if (m.input_dim() != in || m.output_dim() != out)
      throw DimensionError(std::string(name) + " model has wrong input/output dims");
  }
  void check_p(double p) const {
    if (!(p >= domain_.p_min && p <= domain_.p_max)) throw DomainError("surrogate: p outside domain");
  }

  MlpModel ph2tsq_, ps2h_, p2th_, t2p_;
  FluidDomain domain_;
  double h_min_, h_max_, p_triple_, p_c_;
};

}  // namespace cyclegen
