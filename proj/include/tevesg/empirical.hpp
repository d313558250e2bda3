#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "tevesg/errors.hpp"
#include "tevesg/frontier.hpp"
#include "tevesg/market.hpp"

namespace tevesg {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

/// Monthly panel of returns, ESG scores and market capitalizations over a
/// common date axis. Missing cells are NaN. Dates are "YYYY-MM", strictly
/// increasing and consecutive.
struct ReturnEsgPanel {
  std::vector<std::string> dates;
  std::vector<std::string> assets;
  Eigen::MatrixXd returns;     ///< T x N
  Eigen::MatrixXd esg;         ///< T x N
  Eigen::MatrixXd market_cap;  ///< T x N

  Eigen::Index n_months() const { return returns.rows(); }
  Eigen::Index n_assets() const { return returns.cols(); }
};

/// Monthly factor series aligned to a panel's dates.
struct FactorPanel {
  std::vector<std::string> dates;
  Eigen::VectorXd market_excess;
  Eigen::VectorXd smb;
  Eigen::VectorXd hml;
  Eigen::VectorXd rmw;
  Eigen::VectorXd cma;
  Eigen::VectorXd risk_free;

  Eigen::Index n_months() const { return market_excess.size(); }
};

namespace detail {

inline double nan_mean(const Eigen::VectorXd& v) {
  double sum = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!is_missing(v(i))) {
      sum += v(i);
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : kMissing;
}

inline double mean(const Eigen::VectorXd& v) {
  return v.sum() / static_cast<double>(v.size());
}

/// Sample covariance with the T-1 denominator.
inline double sample_cov(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) {
    throw MismatchedSamples("covariance inputs differ in length");
  }
  if (x.size() < 2) {
    throw DegenerateSeries("need at least 2 observations for a covariance");
  }
  const double mx = mean(x);
  const double my = mean(y);
  return (x.array() - mx).matrix().dot((y.array() - my).matrix()) /
         static_cast<double>(x.size() - 1);
}

inline double sample_var(const Eigen::VectorXd& x) { return sample_cov(x, x); }

}  // namespace detail

/// Clip returns to pooled-panel order-statistic percentiles. The cutoff
/// indices floor((m-1) lo/100) and ceil((m-1) hi/100) make the operation a
/// fixed point: clipping to an order statistic cannot move that order
/// statistic. Interpolated percentiles would not be idempotent.
inline ReturnEsgPanel winsorize(const ReturnEsgPanel& panel, double lower_pct = 2.5,
                                double upper_pct = 97.5) {
  if (!(lower_pct > 0.0 && lower_pct < 50.0)) {
    throw ConfigError("lower winsorization percentile must be in (0, 50)");
  }
  if (!(upper_pct > 50.0 && upper_pct < 100.0)) {
    throw ConfigError("upper winsorization percentile must be in (50, 100)");
  }
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(panel.returns.size()));
  for (Eigen::Index t = 0; t < panel.n_months(); ++t) {
    for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
      if (!is_missing(panel.returns(t, j))) pooled.push_back(panel.returns(t, j));
    }
  }
  if (pooled.empty()) {
    throw EmptyPanel("winsorize: panel has no return observations");
  }
  const auto m = static_cast<double>(pooled.size() - 1);
  const auto k_lo = static_cast<std::size_t>(std::floor(m * lower_pct / 100.0));
  const auto k_hi = static_cast<std::size_t>(std::ceil(m * upper_pct / 100.0));
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(k_lo),
                   pooled.end());
  const double lo = pooled[k_lo];
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(k_hi),
                   pooled.end());
  const double hi = pooled[k_hi];

  ReturnEsgPanel out = panel;
  for (Eigen::Index t = 0; t < out.n_months(); ++t) {
    for (Eigen::Index j = 0; j < out.n_assets(); ++j) {
      double& r = out.returns(t, j);
      if (!is_missing(r)) r = std::clamp(r, lo, hi);
    }
  }
  return out;
}

/// Forward-fill each asset's score from its previous release, then subtract
/// the cross-sectional mean of the non-missing scores month by month.
/// Months before an asset's first release stay missing; months with no
/// score anywhere throw.
inline ReturnEsgPanel normalize_esg(const ReturnEsgPanel& panel) {
  ReturnEsgPanel out = panel;
  for (Eigen::Index j = 0; j < out.n_assets(); ++j) {
    double last = kMissing;
    for (Eigen::Index t = 0; t < out.n_months(); ++t) {
      if (!is_missing(out.esg(t, j))) {
        last = out.esg(t, j);
      } else if (!is_missing(last)) {
        out.esg(t, j) = last;
      }
    }
  }
  for (Eigen::Index t = 0; t < out.n_months(); ++t) {
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index j = 0; j < out.n_assets(); ++j) {
      if (!is_missing(out.esg(t, j))) {
        sum += out.esg(t, j);
        ++n;
      }
    }
    if (n == 0) {
      throw NoScoresInMonth("no ESG score anywhere in month " +
                            (t < static_cast<Eigen::Index>(out.dates.size())
                                 ? out.dates[static_cast<std::size_t>(t)]
                                 : std::to_string(t)));
    }
    const double m = sum / static_cast<double>(n);
    for (Eigen::Index j = 0; j < out.n_assets(); ++j) {
      if (!is_missing(out.esg(t, j))) out.esg(t, j) -= m;
    }
  }
  return out;
}

/// Grouping rule for portfolio formation: either an explicit asset-to-sector
/// map or contiguous quantile groups of the time-average ESG score.
struct PortfolioScheme {
  enum class Kind { Sector, EsgQuantiles };
  Kind kind = Kind::EsgQuantiles;
  std::map<std::string, std::string> sector_map;
  int quantiles = 10;
};

/// Equal-weight portfolio panel plus the membership that produced it.
struct PortfolioSet {
  ReturnEsgPanel panel;                   ///< one "asset" per portfolio
  std::vector<std::vector<int>> members;  ///< indices into the source panel
};

/// Form equal-weighted portfolios from the cleaned stock panel. Assets below
/// the capitalization cutoff (time-average cap, keep the top
/// round(N pct/100)) are dropped first; groups with fewer than min_assets
/// members are excluded.
inline PortfolioSet form_portfolios(const ReturnEsgPanel& panel,
                                    const PortfolioScheme& scheme,
                                    double cap_filter_pct = 100.0,
                                    int min_assets = 6) {
  if (!(cap_filter_pct > 0.0 && cap_filter_pct <= 100.0)) {
    throw ConfigError("cap_filter_pct must lie in (0, 100]");
  }
  if (min_assets < 1) throw ConfigError("min_assets must be at least 1");
  const Eigen::Index n = panel.n_assets();
  if (n == 0 || panel.n_months() == 0) {
    throw EmptyPanel("form_portfolios: empty panel");
  }

  // Capitalization filter on the time-average cap.
  std::vector<int> retained;
  {
    std::vector<std::pair<double, int>> avg_cap;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double c = detail::nan_mean(panel.market_cap.col(j));
      if (!is_missing(c)) avg_cap.emplace_back(c, static_cast<int>(j));
    }
    if (avg_cap.empty()) {
      throw EmptyPanel("form_portfolios: no asset has a market cap");
    }
    auto keep = static_cast<std::size_t>(std::lround(
        static_cast<double>(avg_cap.size()) * cap_filter_pct / 100.0));
    keep = std::clamp<std::size_t>(keep, 1, avg_cap.size());
    std::stable_sort(avg_cap.begin(), avg_cap.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    avg_cap.resize(keep);
    for (const auto& [c, j] : avg_cap) retained.push_back(j);
    std::sort(retained.begin(), retained.end());
  }

  // Group the retained assets.
  std::vector<std::pair<std::string, std::vector<int>>> groups;
  if (scheme.kind == PortfolioScheme::Kind::Sector) {
    std::map<std::string, std::vector<int>> by_sector;
    for (int j : retained) {
      const std::string& id = panel.assets[static_cast<std::size_t>(j)];
      auto it = scheme.sector_map.find(id);
      if (it == scheme.sector_map.end()) {
        throw DataError("asset " + id + " has no sector assignment");
      }
      by_sector[it->second].push_back(j);
    }
    for (auto& [name, idx] : by_sector) {
      groups.emplace_back("sector_" + name, std::move(idx));
    }
  } else {
    if (scheme.quantiles < 1) throw ConfigError("quantiles must be at least 1");
    // Sort by time-average score, ascending; stable on the asset order for
    // deterministic ties. Assets with no score at all cannot be ranked.
    std::vector<std::pair<double, int>> scored;
    for (int j : retained) {
      const double s = detail::nan_mean(panel.esg.col(j));
      if (is_missing(s)) {
        throw DataError("asset " + panel.assets[static_cast<std::size_t>(j)] +
                        " has no ESG score; cannot rank into quantiles");
      }
      scored.emplace_back(s, j);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto total = scored.size();
    const auto k = static_cast<std::size_t>(scheme.quantiles);
    const std::size_t base = total / k;
    const std::size_t extra = total % k;  // first groups get one more
    std::size_t pos = 0;
    for (std::size_t q = 0; q < k; ++q) {
      const std::size_t len = base + (q < extra ? 1 : 0);
      std::vector<int> idx;
      for (std::size_t i = 0; i < len; ++i) idx.push_back(scored[pos + i].second);
      pos += len;
      char name[32];
      std::snprintf(name, sizeof name, "esg_q%02u",
                    static_cast<unsigned>(q + 1));
      groups.emplace_back(name, std::move(idx));
    }
  }

  PortfolioSet out;
  const Eigen::Index t_n = panel.n_months();
  for (auto& [name, idx] : groups) {
    if (static_cast<int>(idx.size()) < min_assets) continue;
    out.panel.assets.push_back(name);
    out.members.push_back(idx);
  }
  if (out.panel.assets.empty()) {
    throw EmptyGroup("every portfolio group fell below the minimum size");
  }
  const auto p_n = static_cast<Eigen::Index>(out.panel.assets.size());
  out.panel.dates = panel.dates;
  out.panel.returns.setConstant(t_n, p_n, kMissing);
  out.panel.esg.setConstant(t_n, p_n, kMissing);
  out.panel.market_cap.setConstant(t_n, p_n, kMissing);
  for (Eigen::Index p = 0; p < p_n; ++p) {
    const auto& idx = out.members[static_cast<std::size_t>(p)];
    for (Eigen::Index t = 0; t < t_n; ++t) {
      double r_sum = 0.0, e_sum = 0.0, c_sum = 0.0;
      int r_n = 0, e_n = 0, c_n = 0;
      for (int j : idx) {
        const double r = panel.returns(t, j);
        const double e = panel.esg(t, j);
        const double c = panel.market_cap(t, j);
        if (!is_missing(r)) {
          r_sum += r;
          ++r_n;
        }
        if (!is_missing(e)) {
          e_sum += e;
          ++e_n;
        }
        if (!is_missing(c)) {
          c_sum += c;
          ++c_n;
        }
      }
      if (r_n > 0) out.panel.returns(t, p) = r_sum / r_n;
      if (e_n > 0) out.panel.esg(t, p) = e_sum / e_n;
      if (c_n > 0) out.panel.market_cap(t, p) = c_sum;
    }
  }
  return out;
}

/// Value-weighted (or equal-weighted) cross-sectional return per month.
/// Value weighting uses the same-month capitalization over cells where both
/// the return and the cap are present.
inline Eigen::VectorXd market_series(const ReturnEsgPanel& panel,
                                     bool value_weighted = true) {
  const Eigen::Index t_n = panel.n_months();
  Eigen::VectorXd out(t_n);
  for (Eigen::Index t = 0; t < t_n; ++t) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
      const double r = panel.returns(t, j);
      if (is_missing(r)) continue;
      double w = 1.0;
      if (value_weighted) {
        w = panel.market_cap(t, j);
        if (is_missing(w) || w <= 0.0) continue;
      }
      num += w * r;
      den += w;
    }
    if (den <= 0.0) {
      throw EmptyPanel("no weightable return in month " +
                       panel.dates[static_cast<std::size_t>(t)]);
    }
    out(t) = num / den;
  }
  return out;
}

/// Stock-level benchmark: value weights over the k largest assets by
/// final-month capitalization; zero elsewhere. Ties break on asset order.
inline Eigen::VectorXd top_k_benchmark_weights(const ReturnEsgPanel& panel,
                                               int k) {
  if (k < 1) throw ConfigError("benchmark needs at least one asset");
  const Eigen::Index t_last = panel.n_months() - 1;
  std::vector<std::pair<double, int>> caps;
  for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
    const double c = panel.market_cap(t_last, j);
    if (!is_missing(c) && c > 0.0) caps.emplace_back(c, static_cast<int>(j));
  }
  if (caps.empty()) {
    throw EmptyPanel("no final-month capitalization to build a benchmark from");
  }
  std::stable_sort(caps.begin(), caps.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (static_cast<int>(caps.size()) > k) caps.resize(static_cast<std::size_t>(k));
  double total = 0.0;
  for (const auto& [c, j] : caps) total += c;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(panel.n_assets());
  for (const auto& [c, j] : caps) w(j) = c / total;
  return w;
}

/// Monthly return of a fixed-weight portfolio, renormalizing each month over
/// the members whose return is present.
inline Eigen::VectorXd weighted_return_series(const ReturnEsgPanel& panel,
                                              const Eigen::VectorXd& weights) {
  if (weights.size() != panel.n_assets()) {
    throw DimensionMismatch("weight vector does not match panel width");
  }
  Eigen::VectorXd out(panel.n_months());
  for (Eigen::Index t = 0; t < panel.n_months(); ++t) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
      if (weights(j) == 0.0 || is_missing(panel.returns(t, j))) continue;
      num += weights(j) * panel.returns(t, j);
      den += weights(j);
    }
    if (den <= 0.0) {
      throw EmptyPanel("benchmark has no live member in month " +
                       panel.dates[static_cast<std::size_t>(t)]);
    }
    out(t) = num / den;
  }
  return out;
}

/// Project stock-level benchmark weights onto portfolios by summing member
/// weights and renormalizing over the mass that landed on retained
/// portfolios.
inline Eigen::VectorXd project_benchmark(const Eigen::VectorXd& stock_weights,
                                         const PortfolioSet& portfolios) {
  const auto p_n = static_cast<Eigen::Index>(portfolios.members.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p_n);
  for (Eigen::Index p = 0; p < p_n; ++p) {
    for (int j : portfolios.members[static_cast<std::size_t>(p)]) {
      w(p) += stock_weights(j);
    }
  }
  const double total = w.sum();
  if (total <= 0.0) {
    throw DataError("benchmark puts no weight on any retained portfolio");
  }
  return w / total;
}

/// Result of the on-data binding diagnosis: the sign of e_minus_ratio says
/// whether an ESG floor binds for outperformance targets, and g_star is the
/// improvement threshold implied by the estimated universe.
struct BindingCheck {
  double e_minus_ratio = 0.0;  ///< e - (a/c) a_e on the estimated universe
  double g_star = 0.0;         ///< d1 + d2 mean_b + d3 esg_b (raw threshold)
  FrontierScalars scalars;
  int n_months_used = 0;
};

/// Estimate mu (sample mean), omega (sample covariance, T-1) and xi
/// (time-average score) on the portfolio panel and evaluate the binding
/// diagnostics against the given benchmark weights over portfolios. Only
/// months where every portfolio has a return enter the moment estimates.
inline BindingCheck binding_check(const ReturnEsgPanel& portfolio_panel,
                                  const Eigen::VectorXd& benchmark_weights) {
  const Eigen::Index n = portfolio_panel.n_assets();
  if (benchmark_weights.size() != n) {
    throw DimensionMismatch("benchmark weights do not match portfolio count");
  }
  std::vector<Eigen::Index> complete;
  for (Eigen::Index t = 0; t < portfolio_panel.n_months(); ++t) {
    bool all = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (is_missing(portfolio_panel.returns(t, j))) {
        all = false;
        break;
      }
    }
    if (all) complete.push_back(t);
  }
  const auto t_n = static_cast<Eigen::Index>(complete.size());
  if (t_n <= n) {
    throw SingularCovariance(
        "need more complete months than portfolios to estimate the "
        "covariance (" +
        std::to_string(t_n) + " complete months, " + std::to_string(n) +
        " portfolios)");
  }
  Eigen::MatrixXd r(t_n, n);
  for (Eigen::Index i = 0; i < t_n; ++i) {
    r.row(i) = portfolio_panel.returns.row(complete[static_cast<std::size_t>(i)]);
  }
  MarketUniverse u;
  u.asset_ids = portfolio_panel.assets;
  u.mu = r.colwise().mean().transpose();
  const Eigen::MatrixXd centered = r.rowwise() - u.mu.transpose();
  u.omega = centered.transpose() * centered / static_cast<double>(t_n - 1);
  u.xi.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = detail::nan_mean(portfolio_panel.esg.col(j));
    if (is_missing(s)) {
      throw DataError("portfolio " +
                      portfolio_panel.assets[static_cast<std::size_t>(j)] +
                      " has no ESG score");
    }
    u.xi(j) = s;
  }

  BindingCheck bc;
  bc.n_months_used = static_cast<int>(t_n);
  try {
    MarketModel model(u);
    const FrontierScalars& s = model.scalars();
    bc.scalars = s;
    bc.e_minus_ratio = s.e_ - (s.a_ / s.c_) * s.a_e;
    Benchmark bench{benchmark_weights};
    validate_benchmark(u, bench);
    const ImprovementRegion region = improvement_region(s);
    bc.g_star = region.target(bench.weights.dot(u.mu), bench.weights.dot(u.xi));
  } catch (const NotPositiveDefinite& e) {
    throw SingularCovariance(std::string("sample covariance is singular: ") +
                             e.what());
  }
  return bc;
}

/// Per-portfolio market and benchmark-residual betas from the two-step
/// procedure: first regress benchmark excess returns on market excess
/// returns (with intercept) to extract the residual series e(t), then
/// compute beta_m = Cov(r_m, r_j)/Var(r_m) and beta_e = Cov(e, r_j)/Var(e)
/// per portfolio.
struct ResidualBetas {
  std::vector<std::string> portfolio_ids;
  Eigen::VectorXd beta_m;
  Eigen::VectorXd beta_e;
  double beta_mb = 0.0;   ///< slope of benchmark excess on market excess
  double alpha_be = 0.0;  ///< intercept of that regression
  Eigen::VectorXd residual;  ///< e(t)
  double var_m = 0.0;
  double var_e = 0.0;
  double var_be = 0.0;
};

inline ResidualBetas benchmark_residual_betas(const ReturnEsgPanel& panel,
                                              const Eigen::VectorXd& market_returns,
                                              const Eigen::VectorXd& benchmark_returns,
                                              const Eigen::VectorXd& r_f_series) {
  const Eigen::Index t_n = panel.n_months();
  if (market_returns.size() != t_n || benchmark_returns.size() != t_n ||
      r_f_series.size() != t_n) {
    throw MismatchedSamples("market, benchmark and risk-free series must align "
                            "with the panel dates");
  }
  if (t_n < 24) {
    throw DataError("need at least 24 months for beta estimation, got " +
                    std::to_string(t_n));
  }
  const Eigen::VectorXd m_ex = market_returns - r_f_series;
  const Eigen::VectorXd b_ex = benchmark_returns - r_f_series;
  const double var_mex = detail::sample_var(m_ex);
  if (var_mex <= 0.0) {
    throw DegenerateSeries("market excess return has zero variance");
  }

  ResidualBetas rb;
  rb.beta_mb = detail::sample_cov(m_ex, b_ex) / var_mex;
  rb.alpha_be = detail::mean(b_ex) - rb.beta_mb * detail::mean(m_ex);
  rb.residual = b_ex - rb.alpha_be * Eigen::VectorXd::Ones(t_n) - rb.beta_mb * m_ex;
  rb.var_m = detail::sample_var(market_returns);
  rb.var_be = detail::sample_var(benchmark_returns);
  rb.var_e = detail::sample_var(rb.residual);
  if (rb.var_e <= 1e-12 * std::max(detail::sample_var(b_ex), 1e-30)) {
    throw DegenerateSeries(
        "benchmark is spanned by the market; residual variance is zero");
  }
  if (rb.var_m <= 0.0) {
    throw DegenerateSeries("market return has zero variance");
  }

  const Eigen::Index p_n = panel.n_assets();
  rb.portfolio_ids = panel.assets;
  rb.beta_m.resize(p_n);
  rb.beta_e.resize(p_n);
  for (Eigen::Index j = 0; j < p_n; ++j) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index t = 0; t < t_n; ++t) {
      if (!is_missing(panel.returns(t, j))) rows.push_back(t);
    }
    if (rows.size() < 3) {
      throw DataError("portfolio " + panel.assets[static_cast<std::size_t>(j)] +
                      " has fewer than 3 return observations");
    }
    const auto rn = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd rj(rn), rm(rn), re(rn);
    for (Eigen::Index i = 0; i < rn; ++i) {
      rj(i) = panel.returns(rows[static_cast<std::size_t>(i)], j);
      rm(i) = market_returns(rows[static_cast<std::size_t>(i)]);
      re(i) = rb.residual(rows[static_cast<std::size_t>(i)]);
    }
    const double vm = detail::sample_var(rm);
    const double ve = detail::sample_var(re);
    if (vm <= 0.0 || ve <= 0.0) {
      throw DegenerateSeries("zero-variance regressor on the subsample of " +
                             panel.assets[static_cast<std::size_t>(j)]);
    }
    rb.beta_m(j) = detail::sample_cov(rm, rj) / vm;
    rb.beta_e(j) = detail::sample_cov(re, rj) / ve;
  }
  return rb;
}

/// Time-series loadings of each portfolio's excess return on the five
/// factors (market excess, smb, hml, rmw, cma), intercept included.
/// Columns of the result follow that factor order.
inline Eigen::MatrixXd five_factor_loadings(const ReturnEsgPanel& panel,
                                            const FactorPanel& factors) {
  const Eigen::Index t_n = panel.n_months();
  if (factors.n_months() != t_n) {
    throw MismatchedSamples("factor panel does not align with the return panel");
  }
  const Eigen::Index p_n = panel.n_assets();
  Eigen::MatrixXd loadings(p_n, 5);
  for (Eigen::Index j = 0; j < p_n; ++j) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index t = 0; t < t_n; ++t) {
      if (!is_missing(panel.returns(t, j))) rows.push_back(t);
    }
    const auto rn = static_cast<Eigen::Index>(rows.size());
    if (rn < 8) {
      throw DataError("portfolio " + panel.assets[static_cast<std::size_t>(j)] +
                      " has too few observations for a five-factor regression");
    }
    Eigen::MatrixXd x(rn, 6);
    Eigen::VectorXd y(rn);
    for (Eigen::Index i = 0; i < rn; ++i) {
      const Eigen::Index t = rows[static_cast<std::size_t>(i)];
      x(i, 0) = 1.0;
      x(i, 1) = factors.market_excess(t);
      x(i, 2) = factors.smb(t);
      x(i, 3) = factors.hml(t);
      x(i, 4) = factors.rmw(t);
      x(i, 5) = factors.cma(t);
      y(i) = panel.returns(t, j) - factors.risk_free(t);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < 6) {
      throw RankDeficientDesign("factor design matrix is rank deficient");
    }
    const Eigen::VectorXd b = qr.solve(y);
    loadings.row(j) = b.tail(5).transpose();
  }
  return loadings;
}

/// One explanatory variable of a cross-sectional regression. When
/// negate_report is set, the reported coefficient is the negated OLS
/// coefficient (used for b2 and gamma, which the pricing model writes with
/// minus signs).
struct Regressor {
  std::string name;
  Eigen::VectorXd values;
  bool negate_report = false;
};

/// OLS fit of a cross-sectional pricing model, intercept always included
/// and reported under the name "a".
struct RegressionFit {
  std::string model_name;
  std::vector<std::string> names;  ///< "a" first, then regressor names
  Eigen::VectorXd coef;            ///< reported coefficients
  Eigen::VectorXd std_error;
  Eigen::VectorXd t_stat;          ///< reported coef / std error
  Eigen::VectorXd p_value;         ///< two-sided, Student t with n-k dof
  double r2_adjusted = 0.0;
  double aic = 0.0;                ///< n ln(RSS/n) + 2k, k counting "a"
  int n_obs = 0;
  int n_coef = 0;
  Eigen::VectorXd residuals;
  Eigen::VectorXd fitted;

  std::optional<double> coefficient(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return coef(static_cast<Eigen::Index>(i));
    }
    return std::nullopt;
  }
  std::optional<double> pvalue_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return p_value(static_cast<Eigen::Index>(i));
    }
    return std::nullopt;
  }
};

inline RegressionFit cross_sectional_regress(const Eigen::VectorXd& y,
                                             const std::vector<Regressor>& regressors,
                                             const std::string& model_name) {
  const Eigen::Index n = y.size();
  const auto k = static_cast<Eigen::Index>(regressors.size()) + 1;
  for (const Regressor& r : regressors) {
    if (r.values.size() != n) {
      throw MismatchedSamples("regressor " + r.name +
                              " does not cover the same cross-section");
    }
  }
  if (n <= k) {
    throw DataError("need more observations than coefficients (" +
                    std::to_string(n) + " obs, " + std::to_string(k) +
                    " coefficients)");
  }

  Eigen::MatrixXd x(n, k);
  x.col(0).setOnes();
  for (Eigen::Index i = 0; i < k - 1; ++i) {
    x.col(i + 1) = regressors[static_cast<std::size_t>(i)].values;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < k) {
    throw RankDeficientDesign("design matrix of model " + model_name +
                              " is rank deficient");
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd fitted = x * beta;
  const Eigen::VectorXd resid = y - fitted;
  const double rss = resid.squaredNorm();
  const double ybar = y.mean();
  const double tss = (y.array() - ybar).matrix().squaredNorm();
  if (tss <= 0.0) {
    throw ZeroVariance("dependent variable is constant across the cross-section");
  }
  const auto dof = static_cast<double>(n - k);
  const double sigma2 = rss / dof;
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();

  RegressionFit fit;
  fit.model_name = model_name;
  fit.n_obs = static_cast<int>(n);
  fit.n_coef = static_cast<int>(k);
  fit.names.push_back("a");
  for (const Regressor& r : regressors) fit.names.push_back(r.name);
  fit.coef.resize(k);
  fit.std_error.resize(k);
  fit.t_stat.resize(k);
  fit.p_value.resize(k);
  const boost::math::students_t dist(dof);
  for (Eigen::Index i = 0; i < k; ++i) {
    const bool neg = i > 0 && regressors[static_cast<std::size_t>(i - 1)].negate_report;
    fit.coef(i) = neg ? -beta(i) : beta(i);
    fit.std_error(i) = std::sqrt(sigma2 * xtx_inv(i, i));
    fit.t_stat(i) = fit.coef(i) / fit.std_error(i);
    fit.p_value(i) =
        2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(fit.t_stat(i))));
  }
  const double r2 = 1.0 - rss / tss;
  fit.r2_adjusted =
      1.0 - (1.0 - r2) * static_cast<double>(n - 1) / dof;
  // Guard rss = 0 (noiseless fixtures) against log(0).
  fit.aic = static_cast<double>(n) * std::log(std::max(rss, 1e-300) /
                                              static_cast<double>(n)) +
            2.0 * static_cast<double>(k);
  fit.residuals = resid;
  fit.fitted = fitted;
  return fit;
}

/// One line of the model comparison report.
struct ComparisonRow {
  std::string model;
  double aic = 0.0;
  double r2_adjusted = 0.0;
  bool has_gamma = false;
  double gamma = 0.0;
  double gamma_p_value = 1.0;
  bool gamma_significant_1pct = false;
};

struct ModelComparison {
  std::vector<ComparisonRow> rows;  ///< sorted by AIC ascending, stable
  bool all_esg_models_gamma_positive_significant = false;
};

/// Order fits by AIC and flag whether every ESG-bearing model carries a
/// positive gamma significant at the 1% level.
inline ModelComparison model_comparison(const std::vector<RegressionFit>& fits) {
  if (fits.empty()) throw DataError("no fits to compare");
  for (const RegressionFit& f : fits) {
    if (f.n_obs != fits.front().n_obs) {
      throw MismatchedSamples("fits cover different cross-sections");
    }
  }
  ModelComparison cmp;
  cmp.all_esg_models_gamma_positive_significant = true;
  for (const RegressionFit& f : fits) {
    ComparisonRow row;
    row.model = f.model_name;
    row.aic = f.aic;
    row.r2_adjusted = f.r2_adjusted;
    if (auto g = f.coefficient("gamma")) {
      row.has_gamma = true;
      row.gamma = *g;
      row.gamma_p_value = *f.pvalue_of("gamma");
      row.gamma_significant_1pct = row.gamma > 0.0 && row.gamma_p_value < 0.01;
      if (!row.gamma_significant_1pct) {
        cmp.all_esg_models_gamma_positive_significant = false;
      }
    }
    cmp.rows.push_back(row);
  }
  std::stable_sort(cmp.rows.begin(), cmp.rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) {
                     return a.aic < b.aic;
                   });
  return cmp;
}

/// Per-portfolio mean return over non-missing months.
inline Eigen::VectorXd mean_returns(const ReturnEsgPanel& panel) {
  Eigen::VectorXd out(panel.n_assets());
  for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
    const double m = detail::nan_mean(panel.returns.col(j));
    if (is_missing(m)) {
      throw EmptyPanel("portfolio " + panel.assets[static_cast<std::size_t>(j)] +
                       " has no returns");
    }
    out(j) = m;
  }
  return out;
}

/// Per-portfolio time-average ESG score over non-missing months.
inline Eigen::VectorXd average_esg(const ReturnEsgPanel& panel) {
  Eigen::VectorXd out(panel.n_assets());
  for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
    const double m = detail::nan_mean(panel.esg.col(j));
    if (is_missing(m)) {
      throw DataError("portfolio " + panel.assets[static_cast<std::size_t>(j)] +
                      " has no ESG scores");
    }
    out(j) = m;
  }
  return out;
}

}  // namespace tevesg
