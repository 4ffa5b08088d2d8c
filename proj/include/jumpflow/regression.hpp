#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/error.hpp"
#include "jumpflow/forward.hpp"
#include "jumpflow/parallel.hpp"

namespace jumpflow {

/**
 * Total-degree polynomial basis in standardized coordinates
 * z_c = (x_c - center_c) / scale_c. Directions with no spread are dropped,
 * so a basis fitted on a point mass reduces to the constant. Extra feature
 * functions (e.g. an obstacle) can be appended after the monomials.
 */
class PolynomialBasis {
public:
  using Feature = std::function<double(std::span<const double> x)>;

  PolynomialBasis() : dim_(1), degree_(0), center_(1, 0.0), scale_(1, 1.0) {
    build({});
  }

  /// Raw monomial basis (center 0, scale 1) in `dim` variables.
  static PolynomialBasis raw(std::size_t dim, int degree) {
    PolynomialBasis b;
    b.dim_ = dim;
    b.degree_ = degree;
    b.center_.assign(dim, 0.0);
    b.scale_.assign(dim, 1.0);
    b.build(std::vector<bool>(dim, true));
    return b;
  }

  /// Standardizes on the sample cloud x(p), p < n (each a span of size dim).
  template <class Sample>
  static PolynomialBasis fitted(std::size_t dim, int degree, std::size_t n, Sample &&x) {
    PolynomialBasis b;
    b.dim_ = dim;
    b.degree_ = degree;
    b.center_.assign(dim, 0.0);
    b.scale_.assign(dim, 1.0);
    std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      auto s = x(p);
      for (std::size_t c = 0; c < dim; ++c)
        sum[c] += s[c];
    }
    for (std::size_t c = 0; c < dim; ++c)
      b.center_[c] = sum[c] / static_cast<double>(n);
    for (std::size_t p = 0; p < n; ++p) {
      auto s = x(p);
      for (std::size_t c = 0; c < dim; ++c)
        sum2[c] += (s[c] - b.center_[c]) * (s[c] - b.center_[c]);
    }
    std::vector<bool> active(dim, false);
    for (std::size_t c = 0; c < dim; ++c) {
      const double sd = std::sqrt(sum2[c] / static_cast<double>(n));
      if (sd > 1e-12 * (1.0 + std::abs(b.center_[c]))) {
        b.scale_[c] = sd;
        active[c] = true;
      }
    }
    b.build(active);
    b.point_mass_ = std::none_of(active.begin(), active.end(), [](bool a) { return a; });
    return b;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return terms_ + extras_.size(); }
  std::size_t monomials() const noexcept { return terms_; }
  std::size_t extra_features() const noexcept { return extras_.size(); }

  /// Copy with `f` appended as a basis function.
  PolynomialBasis with_feature(Feature f) const {
    PolynomialBasis b = *this;
    b.extras_.push_back(std::move(f));
    return b;
  }
  int degree() const noexcept { return degree_; }
  /// True when fitted on a cloud with no spread in any direction.
  bool point_mass() const noexcept { return point_mass_; }
  /// Highest total degree actually present (growth certificate).
  int max_degree() const noexcept { return max_degree_; }
  const std::vector<double> &center() const noexcept { return center_; }
  const std::vector<double> &scale() const noexcept { return scale_; }
  /// Exponents of term n are exponents()[n*dim .. n*dim+dim).
  const std::vector<int> &exponents() const noexcept { return exponents_; }

  void evaluate(std::span<const double> x, std::span<double> out) const {
    fill_monomials(x, out);
    for (std::size_t e = 0; e < extras_.size(); ++e)
      out[terms_ + e] = extras_[e](x);
  }

  double value(std::span<const double> x, std::span<const double> coefficients) const {
    if (dim_ == 1) {
      // Horner in the standardized variable
      const double z = (x[0] - center_[0]) / scale_[0];
      double v = 0.0;
      for (std::size_t n = terms_; n-- > 0;)
        v = v * z + coefficients[n];
      for (std::size_t e = 0; e < extras_.size(); ++e)
        v += extras_[e](x) * coefficients[terms_ + e];
      return v;
    }
    std::array<double, 128> phi{};
    fill_monomials(x, std::span<double>(phi.data(), terms_));
    double v = 0.0;
    for (std::size_t n = 0; n < terms_; ++n)
      v += phi[n] * coefficients[n];
    for (std::size_t e = 0; e < extras_.size(); ++e)
      v += extras_[e](x) * coefficients[terms_ + e];
    return v;
  }

private:
  void fill_monomials(std::span<const double> x, std::span<double> out) const {
    if (dim_ == 1) {
      const double z = (x[0] - center_[0]) / scale_[0];
      double pw = 1.0;
      for (std::size_t n = 0; n < terms_; ++n) {
        out[n] = pw;
        pw *= z;
      }
      return;
    }
    std::array<std::array<double, 16>, kMaxStateDim> powers{};
    for (std::size_t c = 0; c < dim_; ++c) {
      const double z = (x[c] - center_[c]) / scale_[c];
      powers[c][0] = 1.0;
      for (int e = 1; e <= max_degree_; ++e)
        powers[c][e] = powers[c][e - 1] * z;
    }
    for (std::size_t n = 0; n < terms_; ++n) {
      double v = 1.0;
      for (std::size_t c = 0; c < dim_; ++c)
        v *= powers[c][exponents_[n * dim_ + c]];
      out[n] = v;
    }
  }

  void build(const std::vector<bool> &active) {
    if (degree_ < 0 || degree_ > 15)
      throw ConfigError("polynomial basis: degree must be in [0, 15]");
    exponents_.clear();
    terms_ = 0;
    max_degree_ = 0;
    std::vector<int> e(dim_, 0);
    for (int total = 0; total <= degree_; ++total)
      enumerate(active, e, 0, total);
    if (terms_ > 128)
      throw ConfigError("polynomial basis: too many terms (" + std::to_string(terms_) + ")");
    // one-dimensional Horner path assumes graded powers of x_0
    if (dim_ == 1 && !active.empty() && !active[0])
      terms_ = 1;
  }

  void enumerate(const std::vector<bool> &active, std::vector<int> &e, std::size_t c,
                 int remaining) {
    if (c == dim_) {
      if (remaining != 0)
        return;
      exponents_.insert(exponents_.end(), e.begin(), e.end());
      int deg = 0;
      for (int v : e)
        deg += v;
      max_degree_ = std::max(max_degree_, deg);
      ++terms_;
      return;
    }
    const int hi = (active.empty() || active[c]) ? remaining : 0;
    for (int v = hi; v >= 0; --v) {
      e[c] = v;
      enumerate(active, e, c + 1, remaining - v);
    }
    e[c] = 0;
  }

  std::size_t dim_;
  int degree_;
  std::vector<double> center_;
  std::vector<double> scale_;
  std::vector<int> exponents_;
  std::size_t terms_ = 0;
  int max_degree_ = 0;
  std::vector<Feature> extras_;
  bool point_mass_ = false;
};

/// Ridge parameter rho = 1e-8 trace(A^T A) / B.
inline double ridge_parameter(const Eigen::MatrixXd &gram) {
  return 1e-8 * gram.trace() / static_cast<double>(gram.rows());
}

/**
 * Ridge least squares: argmin |A c - y|^2 + rho |c|^2 with
 * rho = 1e-8 trace(A^T A) / B.
 */
inline Eigen::VectorXd regress(const Eigen::MatrixXd &features, const Eigen::VectorXd &targets) {
  if (features.rows() != targets.size())
    throw RegressionError("regress: features and targets disagree in length");
  if (features.rows() < features.cols())
    throw RegressionError("regress: fewer samples than basis functions");
  if (!features.allFinite() || !targets.allFinite())
    throw RegressionError("regress: non-finite input");
  Eigen::MatrixXd gram = features.transpose() * features;
  const Eigen::VectorXd rhs = features.transpose() * targets;
  if (gram.trace() == 0.0)
    return Eigen::VectorXd::Zero(features.cols());
  gram.diagonal().array() += ridge_parameter(gram);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw RegressionError("regress: factorization failed");
  return ldlt.solve(rhs);
}

/**
 * Least-squares projector onto a basis evaluated at a fixed sample cloud.
 * The Gram matrix is reduced over fixed chunks in chunk order, so the
 * coefficients are independent of the worker count.
 */
class Projector {
public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  template <class Sample>
  Projector(PolynomialBasis basis, std::size_t n, Sample &&x) : basis_(std::move(basis)) {
    const std::size_t B = basis_.size();
    if (n < B)
      throw RegressionError("projector: fewer samples (" + std::to_string(n) +
                            ") than basis functions (" + std::to_string(B) + ")");
    features_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(B));
    parallel_for(n, [&](std::size_t p) {
      basis_.evaluate(x(p), std::span<double>(features_.row(static_cast<Eigen::Index>(p)).data(), B));
    });
    if (!features_.allFinite())
      throw RegressionError("projector: non-finite features");
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(B),
                                                       static_cast<Eigen::Index>(B));
    Eigen::MatrixXd gram = chunked_reduce(
        n, zero,
        [&](std::size_t begin, std::size_t end) {
          auto block = features_.middleRows(static_cast<Eigen::Index>(begin),
                                            static_cast<Eigen::Index>(end - begin));
          return Eigen::MatrixXd(block.transpose() * block);
        },
        [](Eigen::MatrixXd acc, const Eigen::MatrixXd &part) {
          acc += part;
          return acc;
        });
    if (gram.trace() > 0.0)
      gram.diagonal().array() += ridge_parameter(gram);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    ldlt_.compute(gram);
    if (ldlt_.info() != Eigen::Success)
      throw RegressionError("projector: factorization failed");
  }

  const PolynomialBasis &basis() const noexcept { return basis_; }
  std::size_t samples() const noexcept { return static_cast<std::size_t>(features_.rows()); }
  double condition() const noexcept { return condition_; }

  /// Coefficients of the projection of targets(p), p < samples().
  template <class Target> std::vector<double> project(Target &&target) const {
    const auto B = features_.cols();
    const std::size_t n = samples();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(B);
    Eigen::VectorXd rhs = chunked_reduce(
        n, zero,
        [&](std::size_t begin, std::size_t end) {
          Eigen::VectorXd acc = Eigen::VectorXd::Zero(B);
          for (std::size_t p = begin; p < end; ++p) {
            const double y = target(p);
            if (!std::isfinite(y))
              throw RegressionError("projector: non-finite target at sample " +
                                    std::to_string(p));
            acc.noalias() += y * features_.row(static_cast<Eigen::Index>(p)).transpose();
          }
          return acc;
        },
        [](Eigen::VectorXd acc, const Eigen::VectorXd &part) {
          acc += part;
          return acc;
        });
    const Eigen::VectorXd c = ldlt_.solve(rhs);
    return std::vector<double>(c.data(), c.data() + c.size());
  }

  /// Fitted value at sample p.
  double fitted(std::size_t p, std::span<const double> coefficients) const {
    const auto row = features_.row(static_cast<Eigen::Index>(p));
    double v = 0.0;
    for (Eigen::Index n = 0; n < row.size(); ++n)
      v += row[n] * coefficients[static_cast<std::size_t>(n)];
    return v;
  }

private:
  PolynomialBasis basis_;
  RowMatrix features_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  double condition_ = 1.0;
};

} // namespace jumpflow
