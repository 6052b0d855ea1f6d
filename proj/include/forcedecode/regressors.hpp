#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "forcedecode/error.hpp"
#include "forcedecode/features.hpp"
#include "forcedecode/random.hpp"

namespace forcedecode {

enum class Activation { tanh, relu };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (valid: tanh, relu)");
}

struct FitConfig {
  std::uint64_t seed = 0;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double ridge = 0.0;
  std::vector<int> hidden{8, 16, 32};
  Activation activation = Activation::tanh;
  // Keep the parameters with the lowest validation loss (epoch 0 included)
  // when a validation table is supplied.
  bool restore_best = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("FitConfig: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("FitConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("FitConfig: learning_rate must be positive");
    if (!(ridge >= 0.0)) throw ConfigError("FitConfig: ridge must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0)) {
      throw ConfigError("FitConfig: invalid Adam constants");
    }
    for (int h : hidden)
      if (h < 1) throw ConfigError("FitConfig: hidden layer sizes must be positive");
  }
};

// Column standardisation with statistics from the training rows only.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    s.mean = X.colwise().mean().transpose();
    s.scale = ((X.rowwise() - s.mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale(j) > 1e-12 * (1.0 + std::abs(s.mean(j))))) s.scale(j) = 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return ((X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }
};

// Columns of `t` matching `contract` by name, in order. Extra table columns
// are skipped; a missing or out-of-order name is an error.
inline Eigen::MatrixXd project_to_contract(const FeatureTable& t, const std::vector<std::string>& contract) {
  std::vector<Eigen::Index> idx;
  std::size_t j = 0;
  for (const auto& name : contract) {
    while (j < t.feature_names.size() && t.feature_names[j] != name) ++j;
    if (j == t.feature_names.size()) {
      throw DataError("feature contract mismatch: '" + name + "' missing or out of order (model expects " +
                      std::to_string(contract.size()) + " features, table has " +
                      std::to_string(t.feature_names.size()) + ")");
    }
    idx.push_back(static_cast<Eigen::Index>(j++));
  }
  Eigen::MatrixXd X(t.n_rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = t.values.col(idx[k]);
  return X;
}

// The model's input block out of a wider table: contract columns must appear
// in the same relative order. Used by callers, never by predict.
inline FeatureTable contract_columns(const FeatureTable& t, const std::vector<std::string>& contract) {
  FeatureTable out;
  out.values = project_to_contract(t, contract);
  out.feature_names = contract;
  out.window_times = t.window_times;
  out.target = t.target;
  return out;
}

// predict accepts only a table whose columns are exactly the contract.
inline Eigen::MatrixXd exact_contract(const FeatureTable& t, const std::vector<std::string>& contract) {
  if (t.feature_names != contract) {
    std::string why = t.feature_names.size() != contract.size()
                          ? "count differs (model expects " + std::to_string(contract.size()) + ", table has " +
                                std::to_string(t.feature_names.size()) + ")"
                          : "names or order differ";
    throw DataError("feature contract mismatch: " + why);
  }
  return t.values;
}

// ---------------------------------------------------------------------------
// Linear regression (SFLR / MLR)
// ---------------------------------------------------------------------------

struct LinearModel {
  Eigen::VectorXd weights;  // on the raw feature scale
  double intercept = 0.0;
  std::vector<std::string> feature_contract;
  double ridge = 0.0;
  bool single_set = false;
};

// single_set restricts the fit to the ERP block (columns named erp_*).
inline LinearModel fit_linear(const FeatureTable& table, const FitConfig& cfg, bool single_set) {
  cfg.validate();
  const FeatureTable t = single_set ? table.columns_with_prefix({"erp_"}) : table;
  if (t.n_features() == 0) throw DataError("fit_linear: no feature columns" + std::string(single_set ? " in the ERP block" : ""));
  const Eigen::Index n = t.n_rows();
  const Eigen::Index p = t.n_features();
  if (!(n > p) && cfg.ridge == 0.0) {
    throw DataError("fit_linear: " + std::to_string(n) + " windows for " + std::to_string(p) +
                    " features; need more windows or ridge > 0");
  }
  const auto st = Standardizer::fit(t.values);
  const Eigen::MatrixXd Xs = st.apply(t.values);
  const double ym = t.target.mean();
  const Eigen::VectorXd yc = t.target.array() - ym;
  Eigen::VectorXd beta;
  if (cfg.ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      throw NumericalError("fit_linear: normal equations are singular (rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(p) + "); use ridge > 0");
    }
    beta = qr.solve(yc);
  } else {
    Eigen::MatrixXd A = Xs.transpose() * Xs;
    A.diagonal().array() += cfg.ridge * static_cast<double>(n);
    beta = A.ldlt().solve(Xs.transpose() * yc);
  }
  if (!beta.allFinite()) throw NumericalError("fit_linear: solution is not finite");
  LinearModel m;
  m.weights = beta.array() / st.scale.array();
  m.intercept = ym - m.weights.dot(st.mean);
  m.feature_contract = t.feature_names;
  m.ridge = cfg.ridge;
  m.single_set = single_set;
  return m;
}

// ---------------------------------------------------------------------------
// Partial least squares (PLS1, NIPALS)
// ---------------------------------------------------------------------------

struct PlsModel {
  int n_components = 0;
  Eigen::MatrixXd x_weights;   // p x k
  Eigen::MatrixXd x_loadings;  // p x k
  Eigen::VectorXd y_loadings;  // k
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  Eigen::VectorXd coef;        // p, standardised-X scale
  std::vector<std::string> feature_contract;
  Eigen::VectorXd cv_mse;      // index i -> i+1 components; empty when fixed
};

namespace detail {

struct PlsPath {
  Eigen::MatrixXd W, P;
  Eigen::VectorXd q;
  int k = 0;

  // Regression vector using the first `a` components.
  Eigen::VectorXd coef(int a) const {
    a = std::min(a, k);
    const Eigen::MatrixXd Wa = W.leftCols(a);
    const Eigen::MatrixXd PtW = P.leftCols(a).transpose() * Wa;
    return Wa * PtW.partialPivLu().solve(q.head(a));
  }
};

// Xs centred/scaled, yc centred.
inline PlsPath nipals_pls1(Eigen::MatrixXd X, Eigen::VectorXd y, int max_components) {
  const Eigen::Index p = X.cols();
  PlsPath path;
  path.W.resize(p, max_components);
  path.P.resize(p, max_components);
  path.q.resize(max_components);
  const double x_scale = std::max(1.0, X.squaredNorm());
  for (int a = 0; a < max_components; ++a) {
    Eigen::VectorXd w = X.transpose() * y;
    const double wn = w.norm();
    if (!(wn > 1e-12 * std::sqrt(x_scale))) break;
    w /= wn;
    const Eigen::VectorXd t = X * w;
    const double tt = t.squaredNorm();
    if (!(tt > 1e-14 * x_scale)) break;
    const Eigen::VectorXd pl = X.transpose() * t / tt;
    const double q = y.dot(t) / tt;
    X.noalias() -= t * pl.transpose();
    y -= q * t;
    path.W.col(a) = w;
    path.P.col(a) = pl;
    path.q(a) = q;
    path.k = a + 1;
  }
  return path;
}

}  // namespace detail

// n_components is picked by k-fold cross-validated MSE over
// 1..min(max_components, n_features, n_train-1) unless `fixed_components` is
// given.
inline PlsModel fit_plsr(const FeatureTable& table, const FitConfig& cfg, int max_components = 20, int folds = 5,
                         std::optional<int> fixed_components = std::nullopt) {
  cfg.validate();
  const Eigen::Index n = table.n_rows();
  const Eigen::Index p = table.n_features();
  if (p == 0) throw DataError("fit_plsr: no feature columns");
  if (max_components < 1 || max_components > 20) throw ConfigError("fit_plsr: max_components must be in [1, 20]");
  if (folds < 2) throw ConfigError("fit_plsr: need at least 2 folds");
  if (n < 2 * folds) throw DataError("fit_plsr: need at least " + std::to_string(2 * folds) + " windows for " +
                                     std::to_string(folds) + "-fold cross-validation");
  const double ym = table.target.mean();
  if ((table.target.array() - ym).abs().maxCoeff() <= 1e-12 * (1.0 + std::abs(ym))) {
    throw DataError("fit_plsr: target is constant");
  }
  // search stops at the numerical rank; beyond it CV only ranks round-off
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Standardizer::fit(table.values).apply(table.values));
  qr.setThreshold(1e-10);
  const int cap = static_cast<int>(
      std::max<Eigen::Index>(1, std::min<Eigen::Index>({static_cast<Eigen::Index>(max_components), p, n - 1, qr.rank()})));

  PlsModel m;
  m.feature_contract = table.feature_names;
  int chosen = 0;
  if (fixed_components) {
    if (*fixed_components < 1 || *fixed_components > std::min<Eigen::Index>(p, n - 1)) {
      throw ConfigError("fit_plsr: fixed component count outside [1, min(n_features, n_train-1)]");
    }
    chosen = *fixed_components;
  } else {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(cfg.seed);
    rng.shuffle(perm);
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
    Eigen::VectorXd sse = Eigen::VectorXd::Zero(cap);
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
      const FeatureTable ttr = table.rows(tr);
      const FeatureTable tte = table.rows(te);
      const auto st = Standardizer::fit(ttr.values);
      const double fm = ttr.target.mean();
      const int fcap = std::min<int>(cap, static_cast<int>(tr.size()) - 1);
      const auto path = detail::nipals_pls1(st.apply(ttr.values), ttr.target.array() - fm, std::max(1, fcap));
      const Eigen::MatrixXd Xte = st.apply(tte.values);
      for (int a = 1; a <= cap; ++a) {
        Eigen::VectorXd pred = Eigen::VectorXd::Constant(tte.n_rows(), fm);
        if (path.k > 0) pred += Xte * path.coef(a);
        sse(a - 1) += (tte.target - pred).squaredNorm();
      }
    }
    m.cv_mse = sse / static_cast<double>(n);
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < m.cv_mse.size(); ++a)
      if (m.cv_mse(a) < m.cv_mse(best)) best = a;
    chosen = static_cast<int>(best) + 1;
  }

  const auto st = Standardizer::fit(table.values);
  m.x_mean = st.mean;
  m.x_std = st.scale;
  m.y_mean = ym;
  const auto path = detail::nipals_pls1(st.apply(table.values), table.target.array() - ym, chosen);
  if (path.k == 0) throw NumericalError("fit_plsr: no PLS component could be extracted");
  m.n_components = path.k;
  m.x_weights = path.W.leftCols(path.k);
  m.x_loadings = path.P.leftCols(path.k);
  m.y_loadings = path.q.head(path.k);
  m.coef = path.coef(path.k);
  if (!m.coef.allFinite()) throw NumericalError("fit_plsr: coefficients are not finite");
  return m;
}

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

struct MlpModel {
  std::vector<int> sizes;  // in, hidden..., 1
  std::vector<DenseLayer> layers;
  Activation activation = Activation::tanh;
  Eigen::VectorXd x_mean, x_scale;
  double y_mean = 0.0, y_scale = 1.0;
  std::vector<std::string> feature_contract;
  std::vector<double> loss_log;  // training MSE (N^2) before epoch 1 and after each epoch
  std::vector<double> val_log;   // validation MSE, same indexing; empty without validation
  int best_epoch = -1;
  FitConfig config;

  // Glorot-uniform weights, zero biases. zero_output starts the output layer
  // at zero so the untrained network predicts the training mean.
  static MlpModel initialize(std::vector<int> sizes, Activation act, std::uint64_t seed, bool zero_output = true) {
    if (sizes.size() < 2) throw ConfigError("MlpModel: need at least input and output sizes");
    MlpModel m;
    m.sizes = std::move(sizes);
    m.activation = act;
    Rng rng(seed);
    for (std::size_t l = 1; l < m.sizes.size(); ++l) {
      const int in = m.sizes[l - 1], out = m.sizes[l];
      DenseLayer L{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) L.W(i, j) = rng.uniform(-limit, limit);
      if (zero_output && l + 1 == m.sizes.size()) L.W.setZero();
      m.layers.push_back(std::move(L));
    }
    return m;
  }

  std::size_t n_parameters() const {
    std::size_t n = 0;
    for (const auto& L : layers) n += static_cast<std::size_t>(L.W.size() + L.b.size());
    return n;
  }
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

namespace detail {

inline void activate(Eigen::MatrixXd& Z, Activation a) {
  if (a == Activation::tanh) {
    Z = Z.array().tanh().matrix();
  } else {
    Z = Z.cwiseMax(0.0);
  }
}

// dA/dZ given the activated values.
inline Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& A, Activation a) {
  if (a == Activation::tanh) return (1.0 - A.array().square()).matrix();
  return (A.array() > 0.0).cast<double>().matrix();
}

// Network output for standardised inputs, rows = samples.
inline Eigen::VectorXd mlp_forward(const MlpModel& m, const Eigen::MatrixXd& Xs, std::vector<Eigen::MatrixXd>* acts = nullptr) {
  Eigen::MatrixXd A = Xs.transpose();
  if (acts) {
    acts->clear();
    acts->push_back(A);
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::MatrixXd Z = m.layers[l].W * A;
    Z.colwise() += m.layers[l].b;
    if (l + 1 < m.layers.size()) activate(Z, m.activation);
    A = std::move(Z);
    if (acts) acts->push_back(A);
  }
  return A.row(0).transpose();
}

}  // namespace detail

// MSE on standardised targets, with analytic gradients when `grad` is set.
inline double mlp_loss(const MlpModel& m, const Eigen::MatrixXd& Xs, const Eigen::VectorXd& ys, MlpGradients* grad = nullptr) {
  std::vector<Eigen::MatrixXd> acts;
  const Eigen::VectorXd yhat = detail::mlp_forward(m, Xs, grad ? &acts : nullptr);
  const Eigen::VectorXd r = yhat - ys;
  const double n = static_cast<double>(ys.size());
  const double loss = r.squaredNorm() / n;
  if (grad) {
    const std::size_t L = m.layers.size();
    grad->dW.assign(L, {});
    grad->db.assign(L, {});
    Eigen::MatrixXd delta = (2.0 / n) * r.transpose();  // 1 x n
    for (std::size_t l = L; l-- > 0;) {
      grad->dW[l] = delta * acts[l].transpose();
      grad->db[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = (m.layers[l].W.transpose() * delta).cwiseProduct(detail::activation_grad(acts[l], m.activation));
      }
    }
  }
  return loss;
}

// Mini-batch Adam on the MSE loss. Inputs and target are standardised with
// training statistics. With a validation table and cfg.restore_best the
// returned parameters are those of the epoch with the lowest validation
// loss, epoch 0 (the untrained network) included.
inline MlpModel fit_mlp(const FeatureTable& table, const FitConfig& cfg, const FeatureTable* validation = nullptr) {
  cfg.validate();
  const Eigen::Index n = table.n_rows();
  const Eigen::Index p = table.n_features();
  if (n == 0 || p == 0) throw DataError("fit_mlp: empty training table");
  std::vector<int> sizes{static_cast<int>(p)};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  MlpModel m = MlpModel::initialize(sizes, cfg.activation, Rng::derive(cfg.seed, 1));
  m.feature_contract = table.feature_names;
  m.config = cfg;
  const auto st = Standardizer::fit(table.values);
  m.x_mean = st.mean;
  m.x_scale = st.scale;
  m.y_mean = table.target.mean();
  const double ysd = std::sqrt((table.target.array() - m.y_mean).square().mean());
  m.y_scale = ysd > 1e-12 * (1.0 + std::abs(m.y_mean)) ? ysd : 1.0;
  const Eigen::MatrixXd Xs = st.apply(table.values);
  const Eigen::VectorXd ys = (table.target.array() - m.y_mean) / m.y_scale;

  Eigen::MatrixXd Xv;
  Eigen::VectorXd yv;
  const bool use_val = validation && validation->n_rows() > 0 && cfg.restore_best;
  if (use_val) {
    Xv = st.apply(project_to_contract(*validation, m.feature_contract));
    yv = (validation->target.array() - m.y_mean) / m.y_scale;
  }
  const double s2 = m.y_scale * m.y_scale;

  const std::size_t L = m.layers.size();
  std::vector<Eigen::MatrixXd> mW(L), vW(L);
  std::vector<Eigen::VectorXd> mb(L), vb(L);
  for (std::size_t l = 0; l < L; ++l) {
    mW[l] = Eigen::MatrixXd::Zero(m.layers[l].W.rows(), m.layers[l].W.cols());
    vW[l] = mW[l];
    mb[l] = Eigen::VectorXd::Zero(m.layers[l].b.size());
    vb[l] = mb[l];
  }

  m.loss_log.push_back(mlp_loss(m, Xs, ys) * s2);
  std::vector<DenseLayer> best_layers = m.layers;
  double best_val = std::numeric_limits<double>::infinity();
  if (use_val) {
    best_val = mlp_loss(m, Xv, yv);
    m.val_log.push_back(best_val * s2);
    m.best_epoch = 0;
  }

  Rng rng(Rng::derive(cfg.seed, 2));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<Eigen::Index>(cfg.batch_size);
  long step = 0;
  MlpGradients g;
  Eigen::MatrixXd Xb;
  Eigen::VectorXd yb;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min(bs, n - start);
      Xb.resize(len, p);
      yb.resize(len);
      for (Eigen::Index i = 0; i < len; ++i) {
        Xb.row(i) = Xs.row(order[static_cast<std::size_t>(start + i)]);
        yb(i) = ys(order[static_cast<std::size_t>(start + i)]);
      }
      const double loss = mlp_loss(m, Xb, yb, &g);
      if (!std::isfinite(loss)) {
        throw NumericalError("fit_mlp: loss became non-finite at epoch " + std::to_string(epoch) +
                             "; lower the learning rate");
      }
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < L; ++l) {
        mW[l] = cfg.beta1 * mW[l] + (1.0 - cfg.beta1) * g.dW[l];
        vW[l] = cfg.beta2 * vW[l] + (1.0 - cfg.beta2) * g.dW[l].cwiseAbs2();
        m.layers[l].W.array() -= cfg.learning_rate * (mW[l].array() / c1) / ((vW[l].array() / c2).sqrt() + cfg.epsilon);
        mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * g.db[l];
        vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * g.db[l].cwiseAbs2();
        m.layers[l].b.array() -= cfg.learning_rate * (mb[l].array() / c1) / ((vb[l].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    const double train_loss = mlp_loss(m, Xs, ys);
    if (!std::isfinite(train_loss)) {
      throw NumericalError("fit_mlp: loss became non-finite at epoch " + std::to_string(epoch) + "; lower the learning rate");
    }
    m.loss_log.push_back(train_loss * s2);
    if (use_val) {
      const double vl = mlp_loss(m, Xv, yv);
      m.val_log.push_back(vl * s2);
      if (vl < best_val) {
        best_val = vl;
        best_layers = m.layers;
        m.best_epoch = epoch;
      }
    }
  }
  if (use_val) m.layers = std::move(best_layers);
  for (const auto& Lr : m.layers) {
    if (!Lr.W.allFinite() || !Lr.b.allFinite()) throw NumericalError("fit_mlp: parameters are not finite");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Uniform prediction
// ---------------------------------------------------------------------------

inline Eigen::VectorXd predict(const LinearModel& m, const FeatureTable& t) {
  const Eigen::MatrixXd X = exact_contract(t, m.feature_contract);
  return (X * m.weights).array() + m.intercept;
}

inline Eigen::VectorXd predict(const PlsModel& m, const FeatureTable& t) {
  const Eigen::MatrixXd X = exact_contract(t, m.feature_contract);
  const Eigen::MatrixXd Xs = ((X.rowwise() - m.x_mean.transpose()).array().rowwise() / m.x_std.transpose().array()).matrix();
  return (Xs * m.coef).array() + m.y_mean;
}

inline Eigen::VectorXd predict(const MlpModel& m, const FeatureTable& t) {
  const Eigen::MatrixXd X = exact_contract(t, m.feature_contract);
  const Eigen::MatrixXd Xs = ((X.rowwise() - m.x_mean.transpose()).array().rowwise() / m.x_scale.transpose().array()).matrix();
  return (detail::mlp_forward(m, Xs).array() * m.y_scale + m.y_mean).matrix();
}

enum class ModelKind { sflr, mlr, plsr, nnr };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::sflr: return "sflr";
    case ModelKind::mlr: return "mlr";
    case ModelKind::plsr: return "plsr";
    case ModelKind::nnr: return "nnr";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "sflr") return ModelKind::sflr;
  if (s == "mlr") return ModelKind::mlr;
  if (s == "plsr") return ModelKind::plsr;
  if (s == "nnr") return ModelKind::nnr;
  throw ConfigError("unknown model kind '" + s + "' (valid: sflr, mlr, plsr, nnr)");
}

inline const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds{ModelKind::sflr, ModelKind::mlr, ModelKind::plsr, ModelKind::nnr};
  return kinds;
}

using ModelParams = std::variant<LinearModel, PlsModel, MlpModel>;

struct RegressorModel {
  ModelKind kind = ModelKind::mlr;
  ModelParams params;

  const std::vector<std::string>& feature_contract() const {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_contract; }, params);
  }
};

inline Eigen::VectorXd predict(const RegressorModel& m, const FeatureTable& t) {
  const Eigen::VectorXd y = std::visit([&](const auto& p) { return predict(p, t); }, m.params);
  if (!y.allFinite()) throw NumericalError("predict: non-finite prediction");
  return y;
}

// Default input block per model: SFLR the ERP block, NNR the ERDS block,
// MLR and PLSR everything.
inline FeatureTable default_model_inputs(ModelKind kind, const FeatureTable& t) {
  switch (kind) {
    case ModelKind::sflr: return t.columns_with_prefix({"erp_"});
    case ModelKind::nnr: {
      auto e = t.columns_with_suffix("_erds");
      return e.n_features() > 0 ? e : t;
    }
    default: return t;
  }
}

inline RegressorModel fit_regressor(ModelKind kind, const FeatureTable& train, const FitConfig& cfg,
                                    const FeatureTable* validation = nullptr) {
  switch (kind) {
    case ModelKind::sflr: return {kind, fit_linear(train, cfg, true)};
    case ModelKind::mlr: return {kind, fit_linear(train, cfg, false)};
    case ModelKind::plsr: return {kind, fit_plsr(train, cfg)};
    case ModelKind::nnr: return {kind, fit_mlp(train, cfg, validation)};
  }
  throw ConfigError("fit_regressor: unknown model kind");
}

}  // namespace forcedecode
