#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "forcedecode/error.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/signal.hpp"

namespace forcedecode {

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaModel {
  Eigen::MatrixXd components;               // k x d, orthonormal rows
  Eigen::VectorXd explained_variance;       // k
  Eigen::VectorXd explained_variance_ratio; // k, non-increasing
  Eigen::VectorXd mean;                     // d

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index n_components() const { return components.rows(); }
};

namespace detail {

// Flip so the largest-magnitude coordinate is positive.
inline void canonical_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
}

struct SortedEig {
  Eigen::VectorXd values;  // descending
  Eigen::MatrixXd vectors; // columns
};

inline SortedEig sorted_symmetric_eig(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  SortedEig out{Eigen::VectorXd(d), Eigen::MatrixXd(d, d)};
  for (Eigen::Index i = 0; i < d; ++i) {
    out.values(i) = std::max(0.0, es.eigenvalues()(d - 1 - i));
    out.vectors.col(i) = es.eigenvectors().col(d - 1 - i);
  }
  return out;
}

}  // namespace detail

// Keeps the smallest k whose cumulative explained variance reaches the target.
inline PcaModel pca_fit(const Eigen::MatrixXd& X, double variance_target) {
  if (!(variance_target > 0.0) || variance_target > 1.0) {
    throw ConfigError("pca_fit: variance_target must lie in (0, 1]");
  }
  if (X.rows() < 2 || X.cols() < 1) throw DataError("pca_fit: need at least 2 rows and 1 column");
  if (!X.allFinite()) throw DataError("pca_fit: input is not finite");
  PcaModel m;
  m.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  auto eig = detail::sorted_symmetric_eig(cov);
  const double total = eig.values.sum();
  const double scale = X.squaredNorm() / static_cast<double>(X.rows());
  if (!(total > 1e-24 * (1.0 + scale))) {
    throw DataError("pca_fit: input has zero variance (all rows identical)");
  }
  const Eigen::Index d = X.cols();
  Eigen::Index k = d;
  double cum = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    cum += eig.values(i) / total;
    if (cum >= variance_target - 1e-12) {
      k = i + 1;
      break;
    }
  }
  m.components.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd v = eig.vectors.col(i);
    detail::canonical_sign(v);
    m.components.row(i) = v.transpose();
  }
  m.explained_variance = eig.values.head(k);
  m.explained_variance_ratio = m.explained_variance / total;
  return m;
}

inline Eigen::MatrixXd pca_transform(const PcaModel& m, const Eigen::MatrixXd& X) {
  if (X.cols() != m.dim()) {
    throw DataError("pca_transform: expected " + std::to_string(m.dim()) + " columns, got " +
                    std::to_string(X.cols()));
  }
  return (X.rowwise() - m.mean.transpose()) * m.components.transpose();
}

inline Eigen::MatrixXd pca_inverse_transform(const PcaModel& m, const Eigen::MatrixXd& scores) {
  if (scores.cols() != m.n_components()) throw DataError("pca_inverse_transform: score width mismatch");
  return (scores * m.components).rowwise() + m.mean.transpose();
}

// ---------------------------------------------------------------------------
// Whitening
// ---------------------------------------------------------------------------

// z = whitening * (x - mean) has identity covariance; dewhitening maps back.
struct Whitener {
  Eigen::VectorXd mean;          // d
  Eigen::MatrixXd whitening;     // k x d
  Eigen::MatrixXd dewhitening;   // d x k
};

// Data are variables in rows, observations in columns.
inline Whitener fit_whitener(const Eigen::MatrixXd& data, Eigen::Index n_components) {
  const Eigen::Index d = data.rows();
  const Eigen::Index n = data.cols();
  if (n_components < 1 || n_components > d) throw ConfigError("whitening: invalid component count");
  if (n < 2) throw DataError("whitening: need at least two samples");
  Whitener w;
  w.mean = data.rowwise().mean();
  const Eigen::MatrixXd C = data.colwise() - w.mean;
  const Eigen::MatrixXd cov = (C * C.transpose()) / static_cast<double>(n);
  auto eig = detail::sorted_symmetric_eig(cov);
  const double top = eig.values(0);
  const double smallest = eig.values(n_components - 1);
  if (!(top > 0.0) || smallest <= 1e-12 * top) {
    throw NumericalError("whitening: covariance is singular (eigenvalue ratio " +
                         std::to_string(top > 0.0 ? smallest / top : 0.0) + "); reduce n_components");
  }
  w.whitening.resize(n_components, d);
  w.dewhitening.resize(d, n_components);
  for (Eigen::Index i = 0; i < n_components; ++i) {
    Eigen::VectorXd v = eig.vectors.col(i);
    detail::canonical_sign(v);
    const double s = std::sqrt(eig.values(i));
    w.whitening.row(i) = v.transpose() / s;
    w.dewhitening.col(i) = v * s;
  }
  return w;
}

// ---------------------------------------------------------------------------
// FastICA
// ---------------------------------------------------------------------------

enum class IcaContrast { logcosh, kurtosis, exp };

struct IcaOptions {
  Eigen::Index n_components = 0;  // 0 = one per channel
  std::uint64_t seed = 0;
  int max_iter = 500;
  double tol = 1e-5;
  IcaContrast contrast = IcaContrast::logcosh;
};

// x ~= mixing * sources + mean; sources = unmixing * (x - mean).
struct Decomposition {
  Eigen::MatrixXd mixing;    // channels x components
  Eigen::MatrixXd unmixing;  // components x channels
  Eigen::MatrixXd sources;   // components x samples
  Eigen::VectorXd mean;      // channels
  double fs = 1.0;
  std::vector<std::string> channel_labels;
  double t0 = 0.0;
  bool converged = false;
  int iterations = 0;

  Eigen::Index n_components() const { return unmixing.rows(); }

  // Same spatial model, sources recomputed for another recording.
  Decomposition apply(const SignalMatrix& sig) const {
    if (sig.channel_labels() != channel_labels) throw DataError("Decomposition::apply: channel labels differ");
    Decomposition out = *this;
    out.sources = unmixing * (sig.data().colwise() - mean);
    out.fs = sig.fs();
    out.t0 = sig.t0();
    return out;
  }
};

namespace detail {

// (W W^T)^{-1/2} W
inline Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& W) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W * W.transpose());
  const Eigen::VectorXd inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * W;
}

}  // namespace detail

// Symmetric FastICA on whitened data. Components are ordered by the variance
// of their back-projection and signed so the largest mixing weight is
// positive, which makes the output independent of the random start up to
// convergence.
inline Decomposition fastica(const SignalMatrix& sig, const IcaOptions& opt = {}) {
  const Eigen::Index d = static_cast<Eigen::Index>(sig.n_channels());
  const Eigen::Index k = opt.n_components == 0 ? d : opt.n_components;
  if (k < 1 || k > d) {
    throw ConfigError("fastica: n_components (" + std::to_string(k) + ") must be in [1, " + std::to_string(d) + "]");
  }
  if (opt.max_iter < 1 || !(opt.tol > 0.0)) throw ConfigError("fastica: max_iter >= 1 and tol > 0 required");
  const Eigen::MatrixXd& X = sig.data();
  const Eigen::Index n = X.cols();
  const Whitener wh = fit_whitener(X, k);
  const Eigen::MatrixXd Z = wh.whitening * (X.colwise() - wh.mean);

  Rng rng(opt.seed);
  Eigen::MatrixXd W(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) W(i, j) = rng.normal();
  W = detail::symmetric_decorrelation(W);

  const double inv_n = 1.0 / static_cast<double>(n);
  bool converged = false;
  int it = 0;
  Eigen::MatrixXd G(k, n);
  Eigen::VectorXd gp_mean(k);
  for (it = 1; it <= opt.max_iter; ++it) {
    const Eigen::MatrixXd Y = W * Z;
    switch (opt.contrast) {
      case IcaContrast::logcosh:
        G = Y.array().tanh().matrix();
        gp_mean = (1.0 - G.array().square()).rowwise().mean().matrix();
        break;
      case IcaContrast::kurtosis:
        G = Y.array().cube().matrix();
        gp_mean = 3.0 * Y.array().square().rowwise().mean().matrix();
        break;
      case IcaContrast::exp:
        for (Eigen::Index i = 0; i < k; ++i) {
          double acc = 0.0;
          for (Eigen::Index j = 0; j < n; ++j) {
            const double y = Y(i, j);
            const double e = std::exp(-0.5 * y * y);
            G(i, j) = y * e;
            acc += (1.0 - y * y) * e;
          }
          gp_mean(i) = acc * inv_n;
        }
        break;
    }
    Eigen::MatrixXd W_new = (G * Z.transpose()) * inv_n - gp_mean.asDiagonal() * W;
    W_new = detail::symmetric_decorrelation(W_new);
    const double lim = ((W_new * W.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    W = std::move(W_new);
    if (!W.allFinite()) throw NumericalError("fastica: unmixing matrix diverged");
    if (lim < opt.tol) {
      converged = true;
      break;
    }
  }

  Eigen::MatrixXd unmixing = W * wh.whitening;      // k x d
  Eigen::MatrixXd mixing = wh.dewhitening * W.transpose();  // d x k

  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd power = mixing.colwise().squaredNorm().transpose();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return power(a) > power(b); });

  Decomposition dec;
  dec.mixing.resize(d, k);
  dec.unmixing.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    Eigen::VectorXd col = mixing.col(order[static_cast<std::size_t>(i)]);
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    const double sgn = col(arg) < 0.0 ? -1.0 : 1.0;
    dec.mixing.col(i) = sgn * col;
    dec.unmixing.row(i) = sgn * unmixing.row(order[static_cast<std::size_t>(i)]);
  }
  dec.mean = wh.mean;
  dec.sources = dec.unmixing * (X.colwise() - dec.mean);
  dec.fs = sig.fs();
  dec.channel_labels = sig.channel_labels();
  dec.t0 = sig.t0();
  dec.converged = converged;
  dec.iterations = converged ? it : opt.max_iter;
  return dec;
}

// mixing[:, keep] * sources[keep, :] + mean
inline SignalMatrix reconstruct(const Decomposition& dec, const std::vector<std::size_t>& keep) {
  if (keep.empty()) throw DataError("reconstruct: keep set is empty");
  const std::set<std::size_t> uniq(keep.begin(), keep.end());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dec.mixing.rows(), dec.sources.cols());
  for (auto idx : uniq) {
    if (idx >= static_cast<std::size_t>(dec.n_components())) {
      throw DataError("reconstruct: component " + std::to_string(idx) + " out of range");
    }
    const auto i = static_cast<Eigen::Index>(idx);
    out.noalias() += dec.mixing.col(i) * dec.sources.row(i);
  }
  out.colwise() += dec.mean;
  return SignalMatrix(std::move(out), dec.fs, dec.channel_labels, dec.t0);
}

}  // namespace forcedecode
