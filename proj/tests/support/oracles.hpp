#pragma once

// Independent reference computations the library is checked against. None of
// these call into the code under test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

inline std::vector<double> sine(std::size_t n, double fs, double hz, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / fs + phase);
  return x;
}

// Least-squares amplitude of a tone of known frequency over x[from, to).
inline double tone_amplitude(std::span<const double> x, double fs, double hz, std::size_t from, std::size_t to) {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(to - from), 3);
  Eigen::VectorXd y(A.rows());
  for (std::size_t i = from; i < to; ++i) {
    const double t = static_cast<double>(i) / fs;
    const auto r = static_cast<Eigen::Index>(i - from);
    A(r, 0) = std::sin(2.0 * kPi * hz * t);
    A(r, 1) = std::cos(2.0 * kPi * hz * t);
    A(r, 2) = 1.0;
    y(r) = x[i];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
  return std::hypot(c(0), c(1));
}

// Textbook O(n^2) DFT of the Hann-tapered window, one-sided, scaled like a
// PSD. Returns the sum of power times bin width.
inline double naive_psd_total(std::span<const double> x, double fs, std::size_t nfft) {
  const std::size_t n = x.size();
  std::vector<double> w(n);
  double wss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
    wss += w[i] * w[i];
  }
  double total = 0.0;
  for (std::size_t k = 0; k <= nfft / 2; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      acc += x[j] * w[j] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * j) / static_cast<double>(nfft));
    }
    const double one_sided = (k == 0 || (nfft % 2 == 0 && k == nfft / 2)) ? 1.0 : 2.0;
    total += one_sided * std::norm(acc) / (fs * wss);
  }
  return total * fs / static_cast<double>(nfft);
}

// Mean square of the tapered window corrected by taper power.
inline double tapered_mean_square(std::span<const double> x) {
  const std::size_t n = x.size();
  double num = 0.0, wss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
    num += (x[i] * w) * (x[i] * w);
    wss += w * w;
  }
  return num / wss;
}

// Amari index of P = W_est * A_true, normalised to [0, 1]. Zero means P is a
// scaled permutation.
inline double amari_index(const Eigen::MatrixXd& W_est, const Eigen::MatrixXd& A_true) {
  const Eigen::MatrixXd P = (W_est * A_true).cwiseAbs();
  const auto n = static_cast<double>(P.rows());
  double s = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) s += P.row(i).sum() / P.row(i).maxCoeff() - 1.0;
  for (Eigen::Index j = 0; j < P.cols(); ++j) s += P.col(j).sum() / P.col(j).maxCoeff() - 1.0;
  return s / (2.0 * n * (n - 1.0));
}

// Ordinary least squares with intercept via the normal equations.
struct OlsFit {
  Eigen::VectorXd beta;
  double intercept = 0.0;
};

inline OlsFit normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.leftCols(X.cols()) = X;
  A.col(X.cols()).setOnes();
  const Eigen::MatrixXd AtA = A.transpose() * A;
  const Eigen::VectorXd sol = AtA.llt().solve(A.transpose() * y);
  return {sol.head(X.cols()), sol(X.cols())};
}

inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  const double m = y.mean();
  return 1.0 - (y - yhat).squaredNorm() / (y.array() - m).square().sum();
}

// Relative error in the form used for gradient checks.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Byte-level digest of every regular file under root, keyed by relative path.
inline std::string tree_digest(const std::filesystem::path& root) {
  std::vector<std::string> parts;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), root).generic_string();
    const auto bytes = slurp(e.path());
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ull;
    parts.push_back(rel + ":" + std::to_string(h));
  }
  std::sort(parts.begin(), parts.end());
  std::string out;
  for (const auto& p : parts) out += p + "\n";
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("forcedecode_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
