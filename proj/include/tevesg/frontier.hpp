#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tevesg/errors.hpp"
#include "tevesg/market.hpp"

namespace tevesg {

/// Active-management mandate relative to a benchmark x0: outperform the
/// benchmark mean by g while scoring at least h above the benchmark ESG.
struct MandateSpec {
  double g = 0.0;
  double h = 0.0;
};

/// Solution of a tracking-error minimization, with the multipliers of the
/// budget (lambda1), ESG (lambda2) and excess-return (lambda3) constraints
/// under the convention x = x0 - (lambda1 w1 + lambda2 wxi + lambda3 wmu)/2.
struct FrontierPortfolio {
  Eigen::VectorXd weights;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
  bool binding = false;  ///< ESG floor active (ties count as binding)
  double g_target = 0.0;
  double h_target = 0.0;
  double tev = 0.0;       ///< (x - x0)' O (x - x0)
  double variance = 0.0;  ///< x' O x
  double esg_excess = 0.0;  ///< xi' (x - x0)
};

/// Coefficients of the affine map from benchmark statistics to the
/// improvement threshold: target = d1 + d2 * mean + d3 * esg. d2 is exactly
/// -2; d3 is negative whenever the floor binds on the g > 0 side.
struct ImprovementRegion {
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;

  double target(double benchmark_mean, double benchmark_esg) const {
    return d1 + d2 * benchmark_mean + d3 * benchmark_esg;
  }
};

/// One sampled frontier family over a grid of excess-return targets.
struct FrontierCurve {
  Eigen::VectorXd g;             ///< grid of excess-return targets
  Eigen::VectorXd var_front;     ///< unconstrained frontier variance at
                                 ///< mean = benchmark mean + g
  Eigen::VectorXd var_tev;       ///< total variance of the TEV portfolio
  Eigen::VectorXd var_tev_esg;   ///< total variance with the ESG floor
  std::vector<char> binding;     ///< per grid point: ESG floor active
  double h = 0.0;                ///< ESG floor used for the sweep
  std::optional<double> g_boundary;  ///< target where the floor starts binding
  std::optional<double> g_improve;   ///< second crossing of var_tev_esg and
                                     ///< var_tev (g_star when h = 0)
  int mixed_sign_count = 0;      ///< grid points where g and h disagree in sign
};

namespace detail {

inline void require_nondegenerate(const FrontierScalars& s) {
  if (s.degenerate()) {
    throw DegenerateUniverse(
        "frontier is degenerate: b*c - a^2 vanishes (mean vector is "
        "proportional to ones)");
  }
}

/// Scale against which d_e is judged: the sum of magnitudes of its terms.
inline double de_scale(const FrontierScalars& s) {
  return std::abs(2.0 * s.a_ * s.e_ * s.a_e) + s.a_e * s.a_e * s.b_ +
         s.a_ * s.a_ * s.b_e + std::abs(s.e_ * s.e_ * s.c_) +
         std::abs(s.b_ * s.b_e * s.c_);
}

inline void require_esg_direction(const FrontierScalars& s) {
  // c*b_e - a_e^2 is the squared norm of xi's component orthogonal to the
  // ones vector in the O^-1 inner product; -d_e extends this to the
  // component orthogonal to both ones and mu.
  if (s.c_ * s.b_e - s.a_e * s.a_e <= 1e-10 * s.c_ * s.b_e) {
    throw SingularEsgDirection(
        "ESG scores are proportional to ones; the floor cannot bind");
  }
  if (std::abs(s.d_e) <= 1e-12 * de_scale(s)) {
    throw SingularEsgDirection(
        "ESG scores lie in the span of ones and the mean vector");
  }
}

/// kappa = c*e - a*a_e. Its sign decides on which side of the boundary the
/// ESG floor binds.
inline double kappa(const FrontierScalars& s) {
  return s.c_ * s.e_ - s.a_ * s.a_e;
}

inline void require_kappa(const FrontierScalars& s) {
  if (std::abs(kappa(s)) <=
      1e-12 * (std::abs(s.c_ * s.e_) + std::abs(s.a_ * s.a_e))) {
    throw DegenerateUniverse(
        "mean and ESG directions are conjugate through the covariance; the "
        "binding boundary in g is undefined");
  }
}

}  // namespace detail

/// True when the ESG floor is active for this mandate:
/// (c e - a a_e) g <= d h. Ties are labeled binding; the solver still takes
/// the two-constraint path there because the multiplier of the floor is
/// exactly zero on the boundary.
inline bool is_binding(const FrontierScalars& s, const MandateSpec& m) {
  return detail::kappa(s) * m.g <= s.d_ * m.h;
}

/// Excess-return target at which the ESG floor switches between slack and
/// binding: g_b = h d / (c e - a a_e).
inline double binding_boundary(const FrontierScalars& s, double h) {
  detail::require_kappa(s);
  return h * s.d_ / detail::kappa(s);
}

/// Minimum tracking error portfolio for excess-return target g, ignoring
/// ESG: x = x0 + (g/d)(c wmu - a w1).
inline FrontierPortfolio tev_portfolio(const MarketModel& model,
                                       const Benchmark& bench, double g) {
  const FrontierScalars& s = model.scalars();
  detail::require_nondegenerate(s);
  validate_benchmark(model.universe(), bench);

  FrontierPortfolio p;
  p.g_target = g;
  p.weights = bench.weights +
              (g / s.d_) * (s.c_ * model.omega_inv_mu() - s.a_ * model.omega_inv_one());
  p.lambda1 = 2.0 * s.a_ * g / s.d_;
  p.lambda2 = 0.0;
  p.lambda3 = -2.0 * s.c_ * g / s.d_;
  const Eigen::VectorXd dx = p.weights - bench.weights;
  p.tev = dx.dot(model.universe().omega * dx);
  p.variance = p.weights.dot(model.universe().omega * p.weights);
  p.esg_excess = model.universe().xi.dot(dx);
  p.binding = false;
  return p;
}

/// Minimum tracking error portfolio under both the excess-return target and
/// the ESG floor. When the floor is slack this coincides with
/// tev_portfolio; when it binds, the three equality multipliers solve
///   [c    a_e  a ] [lambda1]   [ 0  ]
///   [a_e  b_e  e ] [lambda2] = [-2h ]
///   [a    e    b ] [lambda3]   [-2g ]
/// and x = x0 - (lambda1 w1 + lambda2 wxi + lambda3 wmu) / 2.
inline FrontierPortfolio tev_esg_portfolio(const MarketModel& model,
                                           const Benchmark& bench,
                                           const MandateSpec& m) {
  const FrontierScalars& s = model.scalars();
  detail::require_nondegenerate(s);
  validate_benchmark(model.universe(), bench);

  if (!is_binding(s, m)) {
    FrontierPortfolio p = tev_portfolio(model, bench, m.g);
    p.h_target = m.h;
    return p;
  }
  detail::require_esg_direction(s);

  Eigen::Matrix3d gram;
  gram << s.c_, s.a_e, s.a_, s.a_e, s.b_e, s.e_, s.a_, s.e_, s.b_;
  const Eigen::Vector3d rhs(0.0, -2.0 * m.h, -2.0 * m.g);
  Eigen::FullPivLU<Eigen::Matrix3d> lu(gram);
  if (!lu.isInvertible()) {
    throw SingularEsgDirection(
        "constraint Gram matrix is singular; the binding solution is not "
        "unique");
  }
  const Eigen::Vector3d lambda = lu.solve(rhs);

  FrontierPortfolio p;
  p.g_target = m.g;
  p.h_target = m.h;
  p.lambda1 = lambda(0);
  p.lambda2 = lambda(1);
  p.lambda3 = lambda(2);
  p.weights = bench.weights -
              0.5 * (lambda(0) * model.omega_inv_one() +
                     lambda(1) * model.omega_inv_xi() +
                     lambda(2) * model.omega_inv_mu());
  const Eigen::VectorXd dx = p.weights - bench.weights;
  p.tev = dx.dot(model.universe().omega * dx);
  p.variance = p.weights.dot(model.universe().omega * p.weights);
  p.esg_excess = model.universe().xi.dot(dx);
  p.binding = true;
  return p;
}

/// Variance of the unconstrained mean-variance frontier portfolio whose mean
/// equals the benchmark mean plus g.
inline double variance_front(const MarketModel& model, const Benchmark& bench,
                             double g) {
  const FrontierScalars& s = model.scalars();
  detail::require_nondegenerate(s);
  validate_benchmark(model.universe(), bench);
  const double mean = bench.weights.dot(model.universe().mu) + g;
  const double dev = mean - s.a_ / s.c_;
  return (s.c_ / s.d_) * dev * dev + 1.0 / s.c_;
}

/// Total variance of the TEV portfolio at excess-return target g.
inline double variance_tev(const MarketModel& model, const Benchmark& bench,
                           double g) {
  const FrontierScalars& s = model.scalars();
  detail::require_nondegenerate(s);
  validate_benchmark(model.universe(), bench);
  const double sigma0 = bench.weights.dot(model.universe().omega * bench.weights);
  const double mb = bench.weights.dot(model.universe().mu);
  return sigma0 + (2.0 * g / s.d_) * (s.c_ * mb - s.a_) + s.c_ * g * g / s.d_;
}

namespace detail {

/// Total variance on the binding branch of the TEV-ESG problem, evaluated
/// from the closed form regardless of whether (g, h) actually binds.
inline double variance_binding_branch(const FrontierScalars& s, double sigma0,
                                      double mb, double sb, double g,
                                      double h) {
  const double l1 = (2.0 * (s.e_ * s.a_e - s.a_ * s.b_e) * g +
                     2.0 * (s.a_ * s.e_ - s.a_e * s.b_) * h) /
                    s.d_e;
  const double l2 =
      (2.0 * (s.a_ * s.a_e - s.e_ * s.c_) * g + 2.0 * s.d_ * h) / s.d_e;
  const double l3 = (2.0 * (s.b_e * s.c_ - s.a_e * s.a_e) * g +
                     2.0 * (s.a_e * s.a_ - s.e_ * s.c_) * h) /
                    s.d_e;
  const double quad =
      ((s.a_e * s.a_e - s.b_e * s.c_) * g * g +
       2.0 * (s.e_ * s.c_ - s.a_ * s.a_e) * g * h - s.d_ * h * h) /
      s.d_e;
  return sigma0 - (l1 + l2 * sb + l3 * mb) + quad;
}

}  // namespace detail

/// Total variance of the TEV-ESG portfolio at mandate (g, h).
inline double variance_tev_esg(const MarketModel& model, const Benchmark& bench,
                               const MandateSpec& m) {
  const FrontierScalars& s = model.scalars();
  if (!is_binding(s, m)) return variance_tev(model, bench, m.g);
  detail::require_nondegenerate(s);
  detail::require_esg_direction(s);
  validate_benchmark(model.universe(), bench);
  const double sigma0 = bench.weights.dot(model.universe().omega * bench.weights);
  const double mb = bench.weights.dot(model.universe().mu);
  const double sb = bench.weights.dot(model.universe().xi);
  return detail::variance_binding_branch(s, sigma0, mb, sb, m.g, m.h);
}

/// Affine map from benchmark statistics to the improvement threshold for
/// h = 0 mandates. Requires c e != a a_e.
inline ImprovementRegion improvement_region(const FrontierScalars& s) {
  detail::require_nondegenerate(s);
  detail::require_esg_direction(s);
  detail::require_kappa(s);
  ImprovementRegion r;
  r.d3 = 2.0 * s.d_ / detail::kappa(s);
  r.d2 = -2.0;
  r.d1 = 2.0 * (s.a_ / s.c_) - r.d3 * s.z_;
  return r;
}

/// Excess-return target beyond which the h = 0 ESG floor lowers total
/// variance relative to the plain TEV portfolio. Returned only when the
/// floor strictly binds at the threshold itself; a benchmark whose threshold
/// falls on the slack side (or exactly on the boundary) gains nothing from
/// the floor, and nullopt is returned.
inline std::optional<double> g_star(const MarketModel& model,
                                    const Benchmark& bench) {
  const FrontierScalars& s = model.scalars();
  validate_benchmark(model.universe(), bench);
  const ImprovementRegion r = improvement_region(s);
  const double mb = bench.weights.dot(model.universe().mu);
  const double sb = bench.weights.dot(model.universe().xi);
  const double gs = r.target(mb, sb);
  if (detail::kappa(s) * gs < 0.0) return gs;
  return std::nullopt;
}

/// Second crossing of the binding-branch variance with the TEV variance for
/// a general floor h. The difference of the two variances is a quadratic in
/// g with a known root at the binding boundary g_b (the two portfolios
/// coincide there), so the quadratic factors as q (g - g_b)(g - g_hat) and
/// one extra evaluation pins g_hat. Returns nullopt at a tangency (the two
/// roots coincide within 1e-9 relative) or when g_hat falls on the slack
/// side of the boundary.
inline std::optional<double> g_hat(const MarketModel& model,
                                   const Benchmark& bench, double h) {
  const FrontierScalars& s = model.scalars();
  validate_benchmark(model.universe(), bench);
  detail::require_nondegenerate(s);
  detail::require_esg_direction(s);
  detail::require_kappa(s);

  const double k = detail::kappa(s);
  const double gb = h * s.d_ / k;
  // Leading coefficient of var_tev_esg - var_tev as a quadratic in g:
  // q = (a a_e - c e)^2 / (-d d_e), positive away from the guarded cases.
  const double q = (k * k) / (-(s.d_ * s.d_e));

  const double sigma0 = bench.weights.dot(model.universe().omega * bench.weights);
  const double mb = bench.weights.dot(model.universe().mu);
  const double sb = bench.weights.dot(model.universe().xi);
  const double g1 = gb + std::max(1.0, std::abs(gb));
  const double delta1 =
      detail::variance_binding_branch(s, sigma0, mb, sb, g1, h) -
      (sigma0 + (2.0 * g1 / s.d_) * (s.c_ * mb - s.a_) + s.c_ * g1 * g1 / s.d_);
  const double ghat = g1 - delta1 / (q * (g1 - gb));

  if (std::abs(ghat - gb) <= 1e-9 * std::max(1.0, std::abs(gb))) {
    return std::nullopt;  // tangency: the floor never strictly helps
  }
  if (k * ghat < s.d_ * h) return ghat;
  return std::nullopt;
}

/// Grid for frontier sweeps.
struct GridSpec {
  double g_min = -0.10;
  double g_max = 0.10;
  int steps = 201;
};

/// Sample the three variance curves over a grid of excess-return targets.
inline FrontierCurve frontier_sweep(const MarketModel& model,
                                    const Benchmark& bench,
                                    const GridSpec& grid, double h = 0.0) {
  if (grid.steps < 2) {
    throw ConfigError("frontier sweep needs at least 2 grid points");
  }
  if (!(grid.g_min < grid.g_max)) {
    throw ConfigError("frontier sweep needs g_min < g_max");
  }
  const FrontierScalars& s = model.scalars();
  detail::require_nondegenerate(s);
  validate_benchmark(model.universe(), bench);

  FrontierCurve curve;
  curve.h = h;
  curve.g = Eigen::VectorXd::LinSpaced(grid.steps, grid.g_min, grid.g_max);
  curve.var_front.resize(grid.steps);
  curve.var_tev.resize(grid.steps);
  curve.var_tev_esg.resize(grid.steps);
  curve.binding.resize(grid.steps);
  for (int i = 0; i < grid.steps; ++i) {
    const double g = curve.g(i);
    const MandateSpec m{g, h};
    curve.var_front(i) = variance_front(model, bench, g);
    curve.var_tev(i) = variance_tev(model, bench, g);
    curve.var_tev_esg(i) = variance_tev_esg(model, bench, m);
    curve.binding[i] = is_binding(s, m) ? 1 : 0;
    if (g * h < 0.0) ++curve.mixed_sign_count;
  }
  try {
    curve.g_boundary = binding_boundary(s, h);
    curve.g_improve = (h == 0.0) ? g_star(model, bench) : g_hat(model, bench, h);
  } catch (const NumericError&) {
    // Degenerate ESG direction: curves still sample, crossings stay unset.
  }
  return curve;
}

/// Reference solver for the mandate problem, deliberately independent of the
/// closed forms above. Solves the dense KKT systems of the two active-set
/// hypotheses (ESG floor slack, ESG floor active) with full-pivot LU and
/// returns the feasible candidate with the smaller tracking error.
inline FrontierPortfolio qp_oracle(const MarketUniverse& u,
                                   const Benchmark& bench,
                                   const MandateSpec& m) {
  validate_benchmark(u, bench);
  const Eigen::Index n = u.size();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const double mb = bench.weights.dot(u.mu);
  const double sb = bench.weights.dot(u.xi);

  // Hypothesis 1: floor slack. Equality constraints on budget and mean.
  Eigen::MatrixXd k2(n + 2, n + 2);
  k2.setZero();
  k2.topLeftCorner(n, n) = 2.0 * u.omega;
  k2.block(0, n, n, 1) = ones;
  k2.block(0, n + 1, n, 1) = u.mu;
  k2.block(n, 0, 1, n) = ones.transpose();
  k2.block(n + 1, 0, 1, n) = u.mu.transpose();
  Eigen::VectorXd rhs2(n + 2);
  rhs2.head(n) = 2.0 * (u.omega * bench.weights);
  rhs2(n) = 1.0;
  rhs2(n + 1) = mb + m.g;
  Eigen::FullPivLU<Eigen::MatrixXd> lu2(k2);
  if (!lu2.isInvertible()) {
    throw Infeasible("slack-floor KKT system is singular");
  }
  const Eigen::VectorXd sol2 = lu2.solve(rhs2);
  const Eigen::VectorXd x2 = sol2.head(n);
  const double slack2 = u.xi.dot(x2 - bench.weights) - m.h;

  if (slack2 >= -1e-10 * (1.0 + std::abs(m.h) + std::abs(sb))) {
    FrontierPortfolio p;
    p.weights = x2;
    p.lambda1 = sol2(n);
    p.lambda2 = 0.0;
    p.lambda3 = sol2(n + 1);
    p.g_target = m.g;
    p.h_target = m.h;
    const Eigen::VectorXd dx = x2 - bench.weights;
    p.tev = dx.dot(u.omega * dx);
    p.variance = x2.dot(u.omega * x2);
    p.esg_excess = u.xi.dot(dx);
    p.binding = std::abs(slack2) <= 1e-12 * (1.0 + std::abs(m.h));
    return p;
  }

  // Hypothesis 2: floor active. All three constraints as equalities.
  Eigen::MatrixXd k3(n + 3, n + 3);
  k3.setZero();
  k3.topLeftCorner(n, n) = 2.0 * u.omega;
  k3.block(0, n, n, 1) = ones;
  k3.block(0, n + 1, n, 1) = u.xi;
  k3.block(0, n + 2, n, 1) = u.mu;
  k3.block(n, 0, 1, n) = ones.transpose();
  k3.block(n + 1, 0, 1, n) = u.xi.transpose();
  k3.block(n + 2, 0, 1, n) = u.mu.transpose();
  Eigen::VectorXd rhs3(n + 3);
  rhs3.head(n) = 2.0 * (u.omega * bench.weights);
  rhs3(n) = 1.0;
  rhs3(n + 1) = sb + m.h;
  rhs3(n + 2) = mb + m.g;
  Eigen::FullPivLU<Eigen::MatrixXd> lu3(k3);
  if (!lu3.isInvertible()) {
    throw Infeasible("active-floor KKT system is singular");
  }
  const Eigen::VectorXd sol3 = lu3.solve(rhs3);

  FrontierPortfolio p;
  p.weights = sol3.head(n);
  p.lambda1 = sol3(n);
  p.lambda2 = sol3(n + 1);
  p.lambda3 = sol3(n + 2);
  p.g_target = m.g;
  p.h_target = m.h;
  const Eigen::VectorXd dx = p.weights - bench.weights;
  p.tev = dx.dot(u.omega * dx);
  p.variance = p.weights.dot(u.omega * p.weights);
  p.esg_excess = u.xi.dot(dx);
  p.binding = true;
  return p;
}

}  // namespace tevesg
