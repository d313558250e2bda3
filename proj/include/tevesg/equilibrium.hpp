#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "tevesg/errors.hpp"
#include "tevesg/market.hpp"

namespace tevesg {

/// Benchmarked institution: maximizes x'mu - (a/2)(x - x0)' O (x - x0)
/// subject to full investment and an ESG floor xi'(x - x0) >= h relative to
/// its benchmark.
struct InstitutionalInvestor {
  double wealth = 0.0;
  double risk_aversion = 0.0;
  Benchmark benchmark;
  double h_target = 0.0;
};

/// Unbenchmarked household: maximizes y'(mu - r_f 1) - (a/2) y' O y with the
/// remainder of wealth in the riskless asset.
struct RetailInvestor {
  double wealth = 0.0;
  double risk_aversion = 0.0;
};

struct Economy {
  MarketUniverse universe;
  std::vector<InstitutionalInvestor> institutions;
  std::vector<RetailInvestor> retail;
  double risk_free = 0.0;
};

/// Optimal institutional portfolio and the multipliers of its budget
/// (omega1) and ESG floor (omega2 <= 0, zero when slack) under the
/// convention x = x0 + (1/a) O^-1 (mu - omega1 1 - omega2 xi).
struct InstitutionalDemand {
  Eigen::VectorXd weights;
  double omega1 = 0.0;
  double omega2 = 0.0;
  bool binding = false;
};

/// Asset-pricing coefficients implied by market clearing:
/// mu = r_f_star 1 + theta1 O x_m - theta2 O x_be - gamma xi,
/// where x_m is the market portfolio and x_be the wealth-weighted average
/// institutional benchmark (both unit sum).
struct EquilibriumPricing {
  Eigen::VectorXd market_weights;            ///< x_m, sums to one
  Eigen::VectorXd aggregate_benchmark;       ///< raw sum of W_i x0_i
  Eigen::VectorXd aggregate_benchmark_norm;  ///< x_be; zero if no institutions
  double total_risky_wealth = 0.0;  ///< 1' (sum of risky dollar demands)
  double delta = 0.0;               ///< sum of W/a over all investors
  double r_f_star = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double gamma = 0.0;               ///< ESG premium, positive iff any floor binds
  std::vector<int> binding;         ///< indices of floor-bound institutions
};

struct EquilibriumSolution {
  std::vector<InstitutionalDemand> institutional;
  std::vector<Eigen::VectorXd> retail;
  EquilibriumPricing pricing;
};

/// Pricing restated through betas on the market and on the aggregate
/// benchmark: mu_j = r_f_star + theta1_star beta_m_j - theta2_star beta_b_j
/// - gamma xi_j.
struct BetaPricing {
  Eigen::VectorXd beta_m;
  Eigen::VectorXd beta_b;
  double sigma_m2 = 0.0;
  double sigma_be2 = 0.0;
  double theta1_star = 0.0;
  double theta2_star = 0.0;
  double r_f_star = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd mu_implied;
};

namespace detail {

inline void validate_investor(double wealth, double risk_aversion) {
  if (!(wealth > 0.0) || !std::isfinite(wealth)) {
    throw DataError("investor wealth must be positive and finite");
  }
  if (!(risk_aversion > 0.0) || !std::isfinite(risk_aversion)) {
    throw DataError("investor risk aversion must be positive and finite");
  }
}

}  // namespace detail

/// True when the institution's ESG floor is active: the floor exceeds the
/// ESG drift its unconstrained demand would deliver,
/// (e - (a/c) a_e) / a_i < h_i. Exact ties count as slack since the floor
/// multiplier is zero there.
inline bool floor_binds(const FrontierScalars& s, double risk_aversion,
                        double h_target) {
  return (s.e_ - (s.a_ / s.c_) * s.a_e) / risk_aversion < h_target;
}

/// Optimal demand of one benchmarked institution. When the floor binds the
/// two multipliers solve
///   [c    a_e] [omega1]   [a          ]
///   [a_e  b_e] [omega2] = [e - a_i h_i]
/// and otherwise omega2 = 0, omega1 = a / c.
inline InstitutionalDemand institutional_optimum(
    const MarketModel& model, const InstitutionalInvestor& inv) {
  detail::validate_investor(inv.wealth, inv.risk_aversion);
  validate_benchmark(model.universe(), inv.benchmark);
  const FrontierScalars& s = model.scalars();

  InstitutionalDemand d;
  d.binding = floor_binds(s, inv.risk_aversion, inv.h_target);
  if (d.binding) {
    if (s.c_ * s.b_e - s.a_e * s.a_e <= 1e-10 * s.c_ * s.b_e) {
      throw SingularEsgDirection(
          "ESG scores are proportional to ones; the floor cannot bind");
    }
    Eigen::Matrix2d gram;
    gram << s.c_, s.a_e, s.a_e, s.b_e;
    const Eigen::Vector2d rhs(s.a_, s.e_ - inv.risk_aversion * inv.h_target);
    const Eigen::Vector2d w = gram.fullPivLu().solve(rhs);
    d.omega1 = w(0);
    d.omega2 = w(1);
  } else {
    d.omega1 = s.a_ / s.c_;
    d.omega2 = 0.0;
  }
  d.weights = inv.benchmark.weights +
              (1.0 / inv.risk_aversion) *
                  (model.omega_inv_mu() - d.omega1 * model.omega_inv_one() -
                   d.omega2 * model.omega_inv_xi());
  return d;
}

/// Optimal risky holdings of one retail investor:
/// y = (1/a) O^-1 (mu - r_f 1). Does not sum to one; the rest sits in the
/// riskless asset.
inline Eigen::VectorXd retail_optimum(const MarketModel& model,
                                      const RetailInvestor& inv,
                                      double risk_free) {
  detail::validate_investor(inv.wealth, inv.risk_aversion);
  return (model.omega_inv_mu() - risk_free * model.omega_inv_one()) /
         inv.risk_aversion;
}

/// Aggregate all demands, clear the risky market and back out the pricing
/// coefficients. The identity
///   mu = r_f_star 1 + theta1 O x_m - theta2 O x_be - gamma xi
/// holds exactly (to rounding) by construction.
inline EquilibriumSolution clear_market(const Economy& econ) {
  if (!std::isfinite(econ.risk_free)) {
    throw DataError("risk-free rate must be finite");
  }
  if (econ.institutions.empty() && econ.retail.empty()) {
    throw DataError("economy has no investors");
  }
  const MarketModel model(econ.universe);
  const Eigen::Index n = econ.universe.size();

  EquilibriumSolution sol;
  Eigen::VectorXd risky_dollars = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd bench_dollars = Eigen::VectorXd::Zero(n);
  double delta = 0.0;
  double inst_wealth = 0.0;
  double budget_numerator = 0.0;  // sum of omega1_i W_i / a_i and r_f terms
  double gamma_numerator = 0.0;   // sum of omega2_i W_i / a_i

  for (std::size_t i = 0; i < econ.institutions.size(); ++i) {
    const InstitutionalInvestor& inv = econ.institutions[i];
    InstitutionalDemand d = institutional_optimum(model, inv);
    const double wa = inv.wealth / inv.risk_aversion;
    risky_dollars += inv.wealth * d.weights;
    bench_dollars += inv.wealth * inv.benchmark.weights;
    delta += wa;
    inst_wealth += inv.wealth;
    budget_numerator += d.omega1 * wa;
    gamma_numerator += d.omega2 * wa;
    if (d.binding) sol.pricing.binding.push_back(static_cast<int>(i));
    sol.institutional.push_back(std::move(d));
  }
  for (const RetailInvestor& inv : econ.retail) {
    Eigen::VectorXd y = retail_optimum(model, inv, econ.risk_free);
    risky_dollars += inv.wealth * y;
    delta += inv.wealth / inv.risk_aversion;
    budget_numerator += econ.risk_free * inv.wealth / inv.risk_aversion;
    sol.retail.push_back(std::move(y));
  }

  EquilibriumPricing& pr = sol.pricing;
  pr.delta = delta;
  pr.total_risky_wealth = risky_dollars.sum();
  if (std::abs(pr.total_risky_wealth) <=
      1e-12 * (inst_wealth + risky_dollars.cwiseAbs().sum())) {
    throw NumericError(
        "aggregate risky wealth is zero; the market portfolio is undefined");
  }
  pr.market_weights = risky_dollars / pr.total_risky_wealth;
  pr.aggregate_benchmark = bench_dollars;
  pr.aggregate_benchmark_norm =
      inst_wealth > 0.0 ? Eigen::VectorXd(bench_dollars / inst_wealth)
                        : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  pr.r_f_star = budget_numerator / delta;
  pr.theta1 = pr.total_risky_wealth / delta;
  pr.theta2 = inst_wealth / delta;
  pr.gamma = -gamma_numerator / delta;
  return sol;
}

/// Expected returns implied by the pricing coefficients. Only omega and xi
/// of the universe are read, so the function can price a universe whose mu
/// is not yet known.
inline Eigen::VectorXd equilibrium_mu(const EquilibriumPricing& pr,
                                      const MarketUniverse& u) {
  if (pr.market_weights.size() != u.size() ||
      pr.aggregate_benchmark_norm.size() != u.size()) {
    throw DimensionMismatch("pricing vectors do not match universe size");
  }
  return Eigen::VectorXd::Constant(u.size(), pr.r_f_star) +
         pr.theta1 * (u.omega * pr.market_weights) -
         pr.theta2 * (u.omega * pr.aggregate_benchmark_norm) -
         pr.gamma * u.xi;
}

/// Restate the pricing identity through betas on the market portfolio and on
/// the normalized aggregate benchmark.
inline BetaPricing beta_pricing(const EquilibriumPricing& pr,
                                const MarketUniverse& u) {
  if (pr.market_weights.size() != u.size()) {
    throw DimensionMismatch("pricing vectors do not match universe size");
  }
  BetaPricing b;
  b.r_f_star = pr.r_f_star;
  b.gamma = pr.gamma;
  const Eigen::VectorXd cov_m = u.omega * pr.market_weights;
  b.sigma_m2 = pr.market_weights.dot(cov_m);
  if (!(b.sigma_m2 > 0.0)) {
    throw ZeroVariance("market portfolio has zero variance");
  }
  b.beta_m = cov_m / b.sigma_m2;
  b.theta1_star = pr.theta1 * b.sigma_m2;
  if (pr.theta2 != 0.0) {
    const Eigen::VectorXd cov_b = u.omega * pr.aggregate_benchmark_norm;
    b.sigma_be2 = pr.aggregate_benchmark_norm.dot(cov_b);
    if (!(b.sigma_be2 > 0.0)) {
      throw ZeroVariance("aggregate benchmark has zero variance");
    }
    b.beta_b = cov_b / b.sigma_be2;
    b.theta2_star = pr.theta2 * b.sigma_be2;
  } else {
    b.sigma_be2 = 0.0;
    b.beta_b = Eigen::VectorXd::Zero(u.size());
    b.theta2_star = 0.0;
  }
  b.mu_implied = Eigen::VectorXd::Constant(u.size(), b.r_f_star) +
                 b.theta1_star * b.beta_m - b.theta2_star * b.beta_b -
                 b.gamma * u.xi;
  return b;
}

}  // namespace tevesg
