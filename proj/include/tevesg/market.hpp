#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tevesg/errors.hpp"

namespace tevesg {

/// Investable universe: expected returns mu, ESG scores xi and a symmetric
/// positive definite covariance omega, all over the same n >= 2 assets.
struct MarketUniverse {
  std::vector<std::string> asset_ids;  ///< optional labels; empty or size n
  Eigen::VectorXd mu;
  Eigen::VectorXd xi;
  Eigen::MatrixXd omega;

  Eigen::Index size() const { return mu.size(); }
};

/// Benchmark portfolio x0. Weights must sum to one; short positions are
/// allowed.
struct Benchmark {
  Eigen::VectorXd weights;
};

/// The nine scalars that drive every closed form in the library.
///
/// With O the covariance, mu the mean vector, xi the ESG vector and 1 the
/// ones vector:
///   a_  = 1'  O^-1 mu      b_  = mu' O^-1 mu      c_  = 1' O^-1 1
///   a_e = 1'  O^-1 xi      b_e = xi' O^-1 xi      e_  = xi' O^-1 mu
///   d_  = b_ c_ - a_^2
///   d_e = -2 a_ e_ a_e + a_e^2 b_ + a_^2 b_e + e_^2 c_ - b_ b_e c_
///   z_  = a_e / c_
/// d_ > 0 whenever mu is not proportional to 1, and d_e < 0 whenever
/// {1, xi, mu} are linearly independent: -d_e equals the determinant of the
/// Gram matrix of those three vectors in the O^-1 inner product.
struct FrontierScalars {
  double a_ = 0.0;
  double b_ = 0.0;
  double c_ = 0.0;
  double a_e = 0.0;
  double b_e = 0.0;
  double e_ = 0.0;
  double d_ = 0.0;
  double d_e = 0.0;
  double z_ = 0.0;

  /// Mean of the global minimum variance portfolio.
  double mvp_mean() const { return a_ / c_; }
  /// Variance of the global minimum variance portfolio.
  double mvp_variance() const { return 1.0 / c_; }
  /// ESG score of the global minimum variance portfolio.
  double mvp_esg() const { return z_; }

  /// True when d_ is too small relative to b_ c_ for the frontier formulas
  /// to be meaningful (mu nearly proportional to 1).
  bool degenerate() const { return std::abs(d_) <= 1e-10 * b_ * c_; }
};

/// Mean, variance and ESG score of a fixed-weight portfolio.
struct PortfolioStats {
  double mean = 0.0;
  double variance = 0.0;
  double esg = 0.0;

  double mean_sd_ratio() const { return mean / std::sqrt(variance); }
};

/// Throws unless the benchmark matches the universe and its weights are
/// finite and sum to one within 1e-8.
inline void validate_benchmark(const MarketUniverse& u, const Benchmark& b) {
  if (b.weights.size() != u.size()) {
    throw DimensionMismatch("benchmark has " + std::to_string(b.weights.size()) +
                            " weights for a universe of " +
                            std::to_string(u.size()) + " assets");
  }
  if (!b.weights.allFinite()) {
    throw DataError("benchmark weights must be finite");
  }
  const double sum = b.weights.sum();
  if (std::abs(sum - 1.0) > 1e-8) {
    throw DataError("benchmark weights sum to " + std::to_string(sum) +
                    ", expected 1");
  }
}

/// Factorized view of a universe. Performs a single Cholesky factorization
/// of omega on construction and caches the three solves O^-1 1, O^-1 mu and
/// O^-1 xi that every closed form is built from. The inverse matrix itself
/// is never materialized.
class MarketModel {
 public:
  explicit MarketModel(MarketUniverse universe) : u_(std::move(universe)) {
    validate_universe();
    factorize();
    w_one_ = llt_.solve(Eigen::VectorXd::Ones(u_.size()));
    w_mu_ = llt_.solve(u_.mu);
    w_xi_ = llt_.solve(u_.xi);
    fill_scalars();
  }

  const MarketUniverse& universe() const { return u_; }
  const FrontierScalars& scalars() const { return s_; }

  /// O^-1 rhs via the cached factorization.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() != u_.size()) {
      throw DimensionMismatch("solve: rhs has wrong length");
    }
    return llt_.solve(rhs);
  }

  const Eigen::VectorXd& omega_inv_one() const { return w_one_; }
  const Eigen::VectorXd& omega_inv_mu() const { return w_mu_; }
  const Eigen::VectorXd& omega_inv_xi() const { return w_xi_; }

  /// Global minimum variance portfolio O^-1 1 / c_.
  Eigen::VectorXd mvp_weights() const { return w_one_ / s_.c_; }

 private:
  void validate_universe() {
    const Eigen::Index n = u_.size();
    if (n < 2) {
      throw DimensionMismatch("universe needs at least 2 assets, got " +
                              std::to_string(n));
    }
    if (u_.xi.size() != n) {
      throw DimensionMismatch("mu has " + std::to_string(n) +
                              " entries but xi has " +
                              std::to_string(u_.xi.size()));
    }
    if (u_.omega.rows() != n || u_.omega.cols() != n) {
      throw DimensionMismatch("omega must be " + std::to_string(n) + "x" +
                              std::to_string(n));
    }
    if (!u_.asset_ids.empty() &&
        static_cast<Eigen::Index>(u_.asset_ids.size()) != n) {
      throw DimensionMismatch("asset_ids length does not match universe size");
    }
    if (!u_.mu.allFinite() || !u_.xi.allFinite() || !u_.omega.allFinite()) {
      throw DataError("universe contains non-finite values");
    }
    const double scale = u_.omega.cwiseAbs().maxCoeff();
    const double asym = (u_.omega - u_.omega.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale) {
      throw DataError("omega is not symmetric (max asymmetry " +
                      std::to_string(asym) + ")");
    }
  }

  void factorize() {
    // Work on the symmetrized matrix so solves are exactly consistent with
    // the symmetry the validation just established.
    Eigen::MatrixXd sym = 0.5 * (u_.omega + u_.omega.transpose());
    llt_.compute(sym);
    if (llt_.info() != Eigen::Success) {
      throw NotPositiveDefinite("omega is not positive definite");
    }
    // Eigen's LLT can succeed on barely-indefinite input; reject factors
    // whose smallest pivot is negligible against the largest diagonal entry.
    const Eigen::VectorXd pivots = llt_.matrixLLT().diagonal();
    const double min_pivot2 = pivots.minCoeff() * pivots.minCoeff();
    if (!(min_pivot2 >= 1e-12 * sym.diagonal().maxCoeff())) {
      throw NotPositiveDefinite(
          "omega is numerically singular (smallest Cholesky pivot too small)");
    }
  }

  void fill_scalars() {
    s_.a_ = w_mu_.sum();
    s_.b_ = u_.mu.dot(w_mu_);
    s_.c_ = w_one_.sum();
    s_.a_e = w_xi_.sum();
    s_.b_e = u_.xi.dot(w_xi_);
    s_.e_ = u_.xi.dot(w_mu_);
    s_.d_ = s_.b_ * s_.c_ - s_.a_ * s_.a_;
    s_.d_e = -2.0 * s_.a_ * s_.e_ * s_.a_e + s_.a_e * s_.a_e * s_.b_ +
             s_.a_ * s_.a_ * s_.b_e + s_.e_ * s_.e_ * s_.c_ -
             s_.b_ * s_.b_e * s_.c_;
    s_.z_ = s_.a_e / s_.c_;
  }

  MarketUniverse u_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd w_one_, w_mu_, w_xi_;
  FrontierScalars s_;
};

/// Convenience wrapper: factorize once and return the scalars.
inline FrontierScalars compute_scalars(const MarketUniverse& u) {
  return MarketModel(u).scalars();
}

/// Mean, variance and ESG of the portfolio with the given weights.
inline PortfolioStats portfolio_stats(const MarketUniverse& u,
                                      const Eigen::VectorXd& weights) {
  if (weights.size() != u.size()) {
    throw DimensionMismatch("weights length does not match universe size");
  }
  PortfolioStats st;
  st.mean = weights.dot(u.mu);
  st.variance = weights.dot(u.omega * weights);
  st.esg = weights.dot(u.xi);
  return st;
}

}  // namespace tevesg
