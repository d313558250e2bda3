#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "tevesg/empirical.hpp"
#include "tevesg/equilibrium.hpp"
#include "tevesg/format.hpp"

namespace tevesg {

/// Parameters of the synthetic stock panel. Returns follow a
/// market + sector + idiosyncratic factor structure whose implied covariance
/// is also the covariance used to price expected returns through the
/// equilibrium identity, so the generated data carry a known ESG premium.
struct PanelSpec {
  int n_assets = 120;
  int n_months = 72;
  int n_sectors = 12;
  int start_year = 2017;        ///< panel starts in January of this year
  int benchmark_top_k = 30;     ///< value-weighted benchmark membership
  double gamma = 3e-4;          ///< ESG premium per score point
  double theta1 = 2.5;          ///< market covariance price
  double theta2 = 1.5;          ///< benchmark covariance discount
  double risk_free = 0.002;     ///< constant monthly risk-free rate
  double alpha_sigma = 6e-4;    ///< cross-sectional mispricing noise
  double market_vol = 0.035;    ///< monthly market factor volatility
  double sector_vol = 0.02;     ///< monthly sector factor volatility
  double idio_vol_min = 0.02;
  double idio_vol_max = 0.05;
  double beta_min = 0.6;
  double beta_max = 1.4;
  double cap_log_sigma = 1.2;   ///< dispersion of initial capitalization
  double cap_drift = 1.002;     ///< multiplicative monthly cap growth
  double score_center = 50.0;
  double score_spread = 18.0;
  double score_cap_corr = 0.5;  ///< correlation of scores with log cap
  double missing_return_rate = 0.01;
  int n_outliers = 4;           ///< extreme return cells (clipped by cleaning)
  int n_no_esg_assets = 3;      ///< never report a score (dropped at load)
  int n_late_esg_assets = 4;    ///< first score release two years in
  double factor_noise_vol = 0.01;  ///< smb/hml/rmw/cma placeholder series
};

/// A generated panel plus the ground truth it was priced with.
struct SimulatedPanel {
  ReturnEsgPanel panel;    ///< sparse ESG rows: January releases only
  FactorPanel factors;
  std::map<std::string, std::string> sectors;
  Eigen::VectorXd true_mu;
  Eigen::VectorXd true_xi;  ///< demeaned scores used for pricing
  double true_gamma = 0.0;
  double true_theta1 = 0.0;
  double true_theta2 = 0.0;
  double true_risk_free = 0.0;
};

namespace detail {

inline std::string month_label(int year, int month_zero_based) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year + month_zero_based / 12,
                month_zero_based % 12 + 1);
  return buf;
}

}  // namespace detail

/// Random well-conditioned universe for solver cross-checks. The covariance
/// is a sample Gram matrix plus a ridge, scaled to equity-like magnitudes.
inline MarketUniverse random_universe(Rng& rng, int n_assets) {
  if (n_assets < 2) throw ConfigError("random universe needs >= 2 assets");
  const Eigen::Index n = n_assets;
  MarketUniverse u;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rng.normal();
  }
  u.omega = 0.04 * (a * a.transpose() / static_cast<double>(n) +
                    0.5 * Eigen::MatrixXd::Identity(n, n));
  u.mu.resize(n);
  u.xi.resize(n);
  u.asset_ids.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    u.mu(i) = rng.normal(0.08, 0.05);
    u.xi(i) = rng.normal(0.3, 0.4);
    char buf[16];
    std::snprintf(buf, sizeof buf, "R%03d", static_cast<int>(i));
    u.asset_ids[static_cast<std::size_t>(i)] = buf;
  }
  return u;
}

/// Random unit-sum benchmark, short positions allowed.
inline Benchmark random_benchmark(Rng& rng, int n_assets) {
  const Eigen::Index n = n_assets;
  Eigen::VectorXd w(n);
  double s = 0.0;
  do {
    for (Eigen::Index i = 0; i < n; ++i) w(i) = 1.0 + 0.8 * rng.normal();
    s = w.sum();
  } while (std::abs(s) < 0.25 * static_cast<double>(n));
  return Benchmark{w / s};
}

/// Generate a panel. The draw order below is fixed; changing it changes
/// every bundled fixture, so treat it as part of the format.
inline SimulatedPanel simulate_panel(const PanelSpec& spec, std::uint64_t seed) {
  if (spec.n_assets < 2 * spec.n_sectors || spec.n_sectors < 1 ||
      spec.n_months < 24) {
    throw ConfigError("panel spec is too small to generate");
  }
  Rng rng(seed);
  const int n = spec.n_assets;
  const int t_n = spec.n_months;

  // Per-asset statics, one asset at a time.
  Eigen::VectorXd beta(n), idio(n), log_cap(n), score(n);
  for (int j = 0; j < n; ++j) {
    beta(j) = rng.uniform(spec.beta_min, spec.beta_max);
    idio(j) = rng.uniform(spec.idio_vol_min, spec.idio_vol_max);
    log_cap(j) = rng.normal();
    const double mix = spec.score_cap_corr * log_cap(j) +
                       std::sqrt(1.0 - spec.score_cap_corr * spec.score_cap_corr) *
                           rng.normal();
    score(j) = std::clamp(spec.score_center + spec.score_spread * mix, 3.0, 97.0);
  }

  // Sector blocks of equal size (remainder spills into the last sector).
  std::vector<int> sector(n);
  const int block = n / spec.n_sectors;
  for (int j = 0; j < n; ++j) sector[j] = std::min(j / block, spec.n_sectors - 1);

  // Covariance implied by the factor structure.
  Eigen::MatrixXd omega =
      spec.market_vol * spec.market_vol * beta * beta.transpose();
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (sector[i] == sector[j]) {
        omega(i, j) += spec.sector_vol * spec.sector_vol;
      }
    }
    omega(j, j) += idio(j) * idio(j);
  }

  // Capitalizations: lognormal start, common multiplicative drift.
  Eigen::VectorXd cap0(n);
  for (int j = 0; j < n; ++j) {
    cap0(j) = 10.0 * std::exp(spec.cap_log_sigma * log_cap(j));
  }

  // Market portfolio and top-k value-weighted benchmark (cap order is
  // preserved by the common drift, so month-0 caps decide membership).
  Eigen::VectorXd x_m = cap0 / cap0.sum();
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) order[static_cast<std::size_t>(j)] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cap0(a) > cap0(b); });
  Eigen::VectorXd x_be = Eigen::VectorXd::Zero(n);
  double bench_total = 0.0;
  for (int r = 0; r < spec.benchmark_top_k && r < n; ++r) {
    bench_total += cap0(order[static_cast<std::size_t>(r)]);
  }
  for (int r = 0; r < spec.benchmark_top_k && r < n; ++r) {
    const int j = order[static_cast<std::size_t>(r)];
    x_be(j) = cap0(j) / bench_total;
  }

  // Price expected returns through the equilibrium identity.
  SimulatedPanel out;
  out.true_xi = score.array() - score.mean();
  MarketUniverse universe;
  universe.mu = Eigen::VectorXd::Zero(n);  // not read by equilibrium_mu
  universe.xi = out.true_xi;
  universe.omega = omega;
  EquilibriumPricing pricing;
  pricing.market_weights = x_m;
  pricing.aggregate_benchmark_norm = x_be;
  pricing.r_f_star = spec.risk_free;
  pricing.theta1 = spec.theta1;
  pricing.theta2 = spec.theta2;
  pricing.gamma = spec.gamma;
  out.true_mu = equilibrium_mu(pricing, universe);
  for (int j = 0; j < n; ++j) {
    out.true_mu(j) += rng.normal(0.0, spec.alpha_sigma);
  }
  out.true_gamma = spec.gamma;
  out.true_theta1 = spec.theta1;
  out.true_theta2 = spec.theta2;
  out.true_risk_free = spec.risk_free;

  // Asset ids and sector labels.
  ReturnEsgPanel& panel = out.panel;
  for (int j = 0; j < n; ++j) {
    char id[16];
    std::snprintf(id, sizeof id, "A%03d", j + 1);
    panel.assets.push_back(id);
    char sec[16];
    std::snprintf(sec, sizeof sec, "sec%02d", sector[j] + 1);
    out.sectors[id] = sec;
  }
  for (int t = 0; t < t_n; ++t) {
    panel.dates.push_back(detail::month_label(spec.start_year, t));
  }

  // Returns: common factor, sector shocks, idiosyncratic noise, month by
  // month in a fixed within-month order.
  panel.returns.resize(t_n, n);
  panel.market_cap.resize(t_n, n);
  Eigen::VectorXd market_return(t_n);
  for (int t = 0; t < t_n; ++t) {
    const double f = rng.normal(0.0, spec.market_vol);
    Eigen::VectorXd sector_shock(spec.n_sectors);
    for (int s = 0; s < spec.n_sectors; ++s) {
      sector_shock(s) = rng.normal(0.0, spec.sector_vol);
    }
    double vw_num = 0.0, vw_den = 0.0;
    for (int j = 0; j < n; ++j) {
      const double r = out.true_mu(j) + beta(j) * f + sector_shock(sector[j]) +
                       rng.normal(0.0, idio(j));
      panel.returns(t, j) = r;
      const double cap = cap0(j) * std::pow(spec.cap_drift, t);
      panel.market_cap(t, j) = cap;
      vw_num += cap * r;
      vw_den += cap;
    }
    market_return(t) = vw_num / vw_den;
  }

  // Knock out a sprinkle of returns, then overwrite a few cells with
  // outliers for the cleaning stage to clip.
  const auto missing_cells = static_cast<int>(spec.missing_return_rate *
                                              static_cast<double>(n) *
                                              static_cast<double>(t_n));
  for (int i = 0; i < missing_cells; ++i) {
    const auto t = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(t_n)));
    const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
    panel.returns(t, j) = kMissing;
  }
  for (int i = 0; i < spec.n_outliers; ++i) {
    const auto t = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(t_n)));
    const auto j = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(n)));
    panel.returns(t, j) = (i % 2 == 0) ? 0.5 : -0.5;
  }

  // ESG releases: the constant score lands every January. The first
  // n_no_esg_assets of the largest ids never report; the next
  // n_late_esg_assets start two years in.
  panel.esg.setConstant(t_n, n, kMissing);
  for (int j = 0; j < n; ++j) {
    const int tail = n - 1 - j;
    if (tail < spec.n_no_esg_assets) continue;
    const bool late = tail < spec.n_no_esg_assets + spec.n_late_esg_assets;
    for (int t = late ? 24 : 0; t < t_n; t += 12) {
      panel.esg(t, j) = score(j);
    }
  }

  // Factor file: realized value-weighted market excess plus placeholder
  // style factors uncorrelated with returns.
  FactorPanel& fac = out.factors;
  fac.dates = panel.dates;
  fac.market_excess = market_return.array() - spec.risk_free;
  fac.smb.resize(t_n);
  fac.hml.resize(t_n);
  fac.rmw.resize(t_n);
  fac.cma.resize(t_n);
  fac.risk_free = Eigen::VectorXd::Constant(t_n, spec.risk_free);
  for (int t = 0; t < t_n; ++t) {
    fac.smb(t) = rng.normal(0.0, spec.factor_noise_vol);
    fac.hml(t) = rng.normal(0.0, spec.factor_noise_vol);
    fac.rmw(t) = rng.normal(0.0, spec.factor_noise_vol);
    fac.cma(t) = rng.normal(0.0, spec.factor_noise_vol);
  }
  return out;
}

}  // namespace tevesg
