// Acceptance suite: one PASS/FAIL line per shipped guarantee, with the
// measured quantity and the tolerance it is held to. Exits nonzero if any
// line fails. Unlike the unit tests this binary exercises whole workflows,
// including the installed command line tool and the bundled fixtures.
#include "helpers.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <ios>
#include <optional>

#include "tevesg/equilibrium.hpp"
#include "tevesg/frontier.hpp"
#include "tevesg/io.hpp"
#include "tevesg/simulate.hpp"

using nlohmann::json;
using namespace testutil;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok,
            const std::string& detail) {
  if (!ok) ++g_failures;
  std::printf("%s %2d %-22s %s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

void run(int idx, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(idx, name, ok, detail);
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

std::string num(double x) {
  std::ostringstream ss;
  ss << std::setprecision(3) << std::scientific << x;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

const std::string kFx = TEVESG_FIXTURES_DIR;

// Shared instance generator for the closed-form-vs-oracle criteria.
struct OracleRun {
  double max_weight_err = 0.0;
  double max_slack = 0.0;
  double max_budget = 0.0;
  double max_return = 0.0;
  double max_lambda2 = -1e300;
  double max_binding_de = -1e300;  // d_e over binding instances, must stay < 0
  int binding_count = 0;
  double elapsed = 0.0;
};

OracleRun run_oracle_instances(std::uint64_t seed, int instances) {
  tevesg::Rng rng(seed);
  OracleRun r;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < instances; ++i) {
    const int n = 3 + static_cast<int>(rng.index(8));
    const tevesg::MarketUniverse u = tevesg::random_universe(rng, n);
    const tevesg::Benchmark bench = tevesg::random_benchmark(rng, n);
    const tevesg::MandateSpec m{rng.uniform(-0.05, 0.08),
                                rng.uniform(-0.3, 0.3)};
    const tevesg::MarketModel model(u);
    const tevesg::FrontierPortfolio closed =
        tevesg::tev_esg_portfolio(model, bench, m);
    const tevesg::FrontierPortfolio oracle = tevesg::qp_oracle(u, bench, m);
    r.max_weight_err = std::max(
        r.max_weight_err,
        (closed.weights - oracle.weights).cwiseAbs().maxCoeff());
    r.max_slack = std::max(
        r.max_slack, std::abs(closed.lambda2 * (closed.esg_excess - m.h)));
    r.max_budget = std::max(r.max_budget, std::abs(closed.weights.sum() - 1.0));
    r.max_return = std::max(
        r.max_return,
        std::abs(u.mu.dot(closed.weights - bench.weights) - m.g));
    r.max_lambda2 = std::max(r.max_lambda2, closed.lambda2);
    if (closed.binding) {
      ++r.binding_count;
      r.max_binding_de = std::max(r.max_binding_de, model.scalars().d_e);
    }
  }
  r.elapsed = seconds_since(t0);
  return r;
}

// Estimation pipeline on the bundled synthetic panel, mirroring the command
// line defaults: sector and decile portfolios, 75% cap filter, top-30
// value-weighted benchmark.
struct FixturePipeline {
  tevesg::ReturnEsgPanel stocks;
  tevesg::PortfolioSet portfolios;
  tevesg::FactorPanel factors;
  Eigen::VectorXd market;
  Eigen::VectorXd bench_ret;
  tevesg::ResidualBetas betas;
  Eigen::VectorXd mean_ret;
  Eigen::VectorXd avg_esg;
};

FixturePipeline fixture_pipeline() {
  FixturePipeline p;
  p.stocks = tevesg::normalize_esg(tevesg::winsorize(
      tevesg::load_panel(kFx + "/panel_returns.csv", kFx + "/panel_esg.csv")));
  tevesg::PortfolioScheme sectors;
  sectors.kind = tevesg::PortfolioScheme::Kind::Sector;
  sectors.sector_map = tevesg::load_sector_map(kFx + "/panel_sectors.csv");
  tevesg::PortfolioScheme deciles;
  deciles.kind = tevesg::PortfolioScheme::Kind::EsgQuantiles;
  deciles.quantiles = 10;
  p.portfolios = tevesg::form_portfolios(p.stocks, sectors, 75.0, 6);
  const tevesg::PortfolioSet quant =
      tevesg::form_portfolios(p.stocks, deciles, 75.0, 6);
  // Union of the two schemes, quantile portfolios appended after sectors.
  const Eigen::Index t_n = p.portfolios.panel.n_months();
  const Eigen::Index n0 = p.portfolios.panel.n_assets();
  const Eigen::Index n1 = quant.panel.n_assets();
  tevesg::ReturnEsgPanel merged = p.portfolios.panel;
  merged.returns.conservativeResize(t_n, n0 + n1);
  merged.esg.conservativeResize(t_n, n0 + n1);
  merged.market_cap.conservativeResize(t_n, n0 + n1);
  merged.returns.rightCols(n1) = quant.panel.returns;
  merged.esg.rightCols(n1) = quant.panel.esg;
  merged.market_cap.rightCols(n1) = quant.panel.market_cap;
  for (Eigen::Index j = 0; j < n1; ++j) {
    merged.assets.push_back(quant.panel.assets[static_cast<std::size_t>(j)]);
  }
  p.portfolios.panel = std::move(merged);
  p.portfolios.members.insert(p.portfolios.members.end(),
                              quant.members.begin(), quant.members.end());

  p.factors = tevesg::align_factors(
      tevesg::load_factors(kFx + "/panel_factors.csv"), p.stocks.dates);
  p.market = tevesg::market_series(p.stocks, true);
  p.bench_ret = tevesg::weighted_return_series(
      p.stocks, tevesg::top_k_benchmark_weights(p.stocks, 30));
  p.betas = tevesg::benchmark_residual_betas(p.portfolios.panel, p.market,
                                             p.bench_ret, p.factors.risk_free);
  p.mean_ret = tevesg::mean_returns(p.portfolios.panel);
  p.avg_esg = tevesg::average_esg(p.portfolios.panel);
  return p;
}

std::vector<tevesg::Regressor> mandate_regressors(const FixturePipeline& p) {
  return {{"b1", p.betas.beta_m, false},
          {"b2", p.betas.beta_e, true},
          {"gamma", p.avg_esg, true}};
}

}  // namespace

int main() {
  // 1. Closed form matches the dense KKT reference solver.
  OracleRun oracles;
  run(1, "oracle-equivalence", [&]() -> std::pair<bool, std::string> {
    oracles = run_oracle_instances(7, 100);
    const bool ok = oracles.max_weight_err < 1e-7 && oracles.elapsed < 5.0;
    return {ok, "max|x-x_ref|=" + num(oracles.max_weight_err) +
                    " (tol 1e-7), elapsed=" + num(oracles.elapsed) +
                    "s (limit 5s), instances=100"};
  });

  // 2. KKT conditions hold on the same instances.
  run(2, "kkt-suite", [&]() -> std::pair<bool, std::string> {
    const bool ok = oracles.max_slack < 1e-9 && oracles.max_lambda2 <= 0.0 &&
                    oracles.max_budget < 1e-10 && oracles.max_return < 1e-10 &&
                    oracles.binding_count > 0 && oracles.max_binding_de < 0.0;
    return {ok,
            "max|l2*slack|=" + num(oracles.max_slack) +
                " (tol 1e-9), max l2=" + num(oracles.max_lambda2) +
                " (<=0), max|1'x-1|=" + num(oracles.max_budget) +
                ", max|mu'dx-g|=" + num(oracles.max_return) +
                " (tol 1e-10), binding d_e max=" + num(oracles.max_binding_de) +
                " (<0), binding " + std::to_string(oracles.binding_count) +
                "/100"};
  });

  // 3. Frontier identities on the bundled four-asset universe.
  run(3, "frontier-identities", [&]() -> std::pair<bool, std::string> {
    const tevesg::MarketUniverse u = tevesg::load_universe(
        kFx + "/universe_demo4.csv", kFx + "/omega_demo4.csv");
    const tevesg::MarketModel model(u);
    const tevesg::Benchmark bench =
        tevesg::load_benchmark(kFx + "/benchmark_m08_s22.csv", u);
    const double v_tev0 = tevesg::variance_tev(model, bench, 0.0);
    const double v_both0 =
        tevesg::variance_tev_esg(model, bench, {0.0, 0.0});
    const bool zero_exact = v_tev0 == v_both0;

    const std::optional<double> gs = tevesg::g_star(model, bench);
    if (!gs) return {false, "g_star unexpectedly empty"};
    const auto gap = [&](double g) {
      return tevesg::variance_tev_esg(model, bench, {g, 0.0}) -
             tevesg::variance_tev(model, bench, g);
    };
    const double rel_at_star =
        std::abs(gap(*gs)) / tevesg::variance_tev(model, bench, *gs);
    bool signs_ok = true;
    for (int i = 1; i <= 50; ++i) {
      if (gap(*gs * i / 51.0) >= 0.0) signs_ok = false;
      if (gap(*gs + 2.0 * *gs * i / 50.0) <= 0.0) signs_ok = false;
    }
    const double root = bisect(gap, *gs / 2.0, 3.0 * *gs);
    const double root_err = std::abs(root - *gs);
    const bool ok =
        zero_exact && rel_at_star < 1e-8 && signs_ok && root_err < 1e-10;
    return {ok, std::string("var_gap(0)=") + (zero_exact ? "0 (exact)" : "NONZERO") +
                    ", relgap(G*)=" + num(rel_at_star) +
                    " (tol 1e-8), signs on (0,G*)/(G*,3G*] " +
                    (signs_ok ? "correct" : "WRONG") +
                    ", |G*-bisect|=" + num(root_err) + " (tol 1e-10)"};
  });

  // 4. Large-target asymptote of the variance penalty.
  run(4, "large-g-asymptote", [&]() -> std::pair<bool, std::string> {
    const tevesg::MarketUniverse u = tevesg::load_universe(
        kFx + "/universe_demo4.csv", kFx + "/omega_demo4.csv");
    const tevesg::MarketModel model(u);
    const tevesg::Benchmark bench =
        tevesg::load_benchmark(kFx + "/benchmark_m08_s22.csv", u);
    const tevesg::FrontierScalars& s = model.scalars();
    const double kap = s.c_ * s.e_ - s.a_ * s.a_e;
    const double target = kap * kap / (-s.d_ * s.d_e);
    const double measured =
        (tevesg::variance_tev_esg(model, bench, {10.0, 0.0}) -
         tevesg::variance_tev(model, bench, 10.0)) /
        100.0;
    const double rel = std::abs(measured / target - 1.0);
    return {rel < 0.01, "gap/G^2 at G=10: " + num(measured) + " vs " +
                            num(target) + ", rel dev=" + num(rel) +
                            " (tol 1e-2)"};
  });

  // 5. Special-case binding predicates agree with the general one.
  run(5, "special-case-predicates", [&]() -> std::pair<bool, std::string> {
    tevesg::Rng rng(23);
    int agree = 0;
    for (int i = 0; i < 50; ++i) {  // diagonal covariance
      const int n = 3 + static_cast<int>(rng.index(6));
      tevesg::MarketUniverse u;
      u.mu.resize(n);
      u.xi.resize(n);
      Eigen::VectorXd var(n);
      for (int j = 0; j < n; ++j) {
        u.mu(j) = rng.normal(0.07, 0.05);
        u.xi(j) = rng.normal(0.2, 0.5);
        var(j) = rng.uniform(0.01, 0.09);
        u.asset_ids.push_back("D" + std::to_string(j));
      }
      u.omega = var.asDiagonal();
      const tevesg::FrontierScalars s = tevesg::compute_scalars(u);
      double crit = 0.0;
      for (int j = 0; j < n; ++j) {
        crit += u.xi(j) * (u.mu(j) - s.a_ / s.c_) / var(j);
      }
      const double g = rng.uniform(0.001, 0.05);
      if ((crit < 0.0) == tevesg::is_binding(s, {g, 0.0})) ++agree;
    }
    for (int i = 0; i < 50; ++i) {  // scores proportional to means
      const int n = 3 + static_cast<int>(rng.index(6));
      tevesg::MarketUniverse u = tevesg::random_universe(rng, n);
      const double gamma =
          (rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
      u.xi = gamma * u.mu;
      const tevesg::FrontierScalars s = tevesg::compute_scalars(u);
      const double g = rng.uniform(0.001, 0.05);
      if ((gamma < 0.0) == tevesg::is_binding(s, {g, 0.0})) ++agree;
    }
    return {agree == 100, "boolean agreement " + std::to_string(agree) +
                              "/100 (need 100, 50 diagonal + 50 proportional)"};
  });

  // 6. Equilibrium pricing reproduces the input means.
  run(6, "equilibrium-roundtrip", [&]() -> std::pair<bool, std::string> {
    tevesg::Rng rng(101);
    double max_resid = 0.0;
    bool gamma_ok = true;
    int binding_econ = 0;
    for (int i = 0; i < 50; ++i) {
      const int n = 3 + static_cast<int>(rng.index(6));
      tevesg::Economy econ;
      econ.universe = tevesg::random_universe(rng, n);
      econ.risk_free = rng.uniform(0.0, 0.03);
      const tevesg::FrontierScalars s = tevesg::compute_scalars(econ.universe);
      const int n_inst = 1 + static_cast<int>(rng.index(3));
      for (int k = 0; k < n_inst; ++k) {
        tevesg::InstitutionalInvestor inv;
        inv.wealth = rng.uniform(0.5, 2.0);
        inv.risk_aversion = rng.uniform(1.0, 4.0);
        inv.benchmark = tevesg::random_benchmark(rng, n);
        const double edge =
            (s.e_ - (s.a_ / s.c_) * s.a_e) / inv.risk_aversion;
        inv.h_target = edge + rng.uniform(-0.5, 0.5);
        econ.institutions.push_back(inv);
      }
      const int n_retail = static_cast<int>(rng.index(3));
      for (int k = 0; k < n_retail; ++k) {
        econ.retail.push_back({rng.uniform(0.5, 2.0), rng.uniform(1.5, 3.5)});
      }
      if (econ.institutions.empty() && econ.retail.empty()) {
        econ.retail.push_back({1.0, 2.0});
      }
      const tevesg::EquilibriumSolution sol = tevesg::clear_market(econ);
      max_resid = std::max(
          max_resid, (tevesg::equilibrium_mu(sol.pricing, econ.universe) -
                      econ.universe.mu)
                         .cwiseAbs()
                         .maxCoeff());
      const bool has_binding = !sol.pricing.binding.empty();
      if (has_binding) ++binding_econ;
      if ((sol.pricing.gamma > 0.0) != has_binding) gamma_ok = false;
    }

    // Homogeneous reduction: one constrained institution, nothing else.
    tevesg::Economy homo;
    homo.universe = demo4();
    homo.risk_free = 0.02;
    homo.institutions.push_back({1.3, 2.0, bench_m08_s22(), 0.1});
    const tevesg::MarketModel model(homo.universe);
    const tevesg::InstitutionalDemand d =
        tevesg::institutional_optimum(model, homo.institutions[0]);
    const tevesg::EquilibriumSolution hs = tevesg::clear_market(homo);
    const double homo_err = std::max(
        {std::abs(hs.pricing.r_f_star - d.omega1),
         std::abs(hs.pricing.theta1 - 2.0), std::abs(hs.pricing.theta2 - 2.0),
         std::abs(hs.pricing.gamma + d.omega2)});

    const bool ok = max_resid < 1e-10 && gamma_ok && binding_econ > 5 &&
                    binding_econ < 45 && homo_err < 1e-12;
    return {ok, "max|mu_implied-mu|=" + num(max_resid) +
                    " (tol 1e-10) over 50 economies, gamma>0 iff binding " +
                    (gamma_ok ? "holds" : "FAILS") + " (binding in " +
                    std::to_string(binding_econ) +
                    "), homogeneous reduction max err=" + num(homo_err) +
                    " (tol 1e-12)"};
  });

  // 7. Cross-sectional regression recovers planted coefficients.
  run(7, "regression-recovery", [&]() -> std::pair<bool, std::string> {
    tevesg::PanelSpec spec;
    spec.n_assets = 100;
    spec.n_months = 60;
    spec.n_sectors = 5;
    spec.benchmark_top_k = 30;
    const tevesg::SimulatedPanel sim = tevesg::simulate_panel(spec, 1234);
    // Round trip through the loader, which drops assets lacking any score.
    TempDir dir;
    spit(dir.file("returns.csv"), tevesg::panel_returns_csv(sim.panel));
    spit(dir.file("esg.csv"), tevesg::panel_esg_csv(sim.panel));
    const tevesg::ReturnEsgPanel stocks =
        tevesg::normalize_esg(tevesg::winsorize(tevesg::load_panel(
            dir.file("returns.csv"), dir.file("esg.csv"))));
    tevesg::PortfolioScheme scheme;
    scheme.kind = tevesg::PortfolioScheme::Kind::EsgQuantiles;
    scheme.quantiles = 20;
    const tevesg::PortfolioSet ports =
        tevesg::form_portfolios(stocks, scheme, 100.0, 3);
    const Eigen::VectorXd market = tevesg::market_series(stocks, false);
    const Eigen::VectorXd bench_ret = tevesg::weighted_return_series(
        stocks, tevesg::top_k_benchmark_weights(stocks, 30));
    const Eigen::VectorXd r_f =
        Eigen::VectorXd::Constant(market.size(), spec.risk_free);
    const tevesg::ResidualBetas betas = tevesg::benchmark_residual_betas(
        ports.panel, market, bench_ret, r_f);
    const Eigen::VectorXd xi = tevesg::average_esg(ports.panel);

    // Planted equal-weighted-market cross-section: the reported convention
    // is y = a + b1 beta_m - b2 beta_e - gamma xi.
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(xi.size(), 0.5) +
                              0.65 * betas.beta_m - 0.05 * betas.beta_e -
                              0.8 * xi;
    const std::vector<tevesg::Regressor> regs = {
        {"b1", betas.beta_m, false},
        {"b2", betas.beta_e, true},
        {"gamma", xi, true}};
    const tevesg::RegressionFit noiseless =
        tevesg::cross_sectional_regress(y, regs, "tev_esg");
    const double rec_err =
        std::max({std::abs(*noiseless.coefficient("a") - 0.5),
                  std::abs(*noiseless.coefficient("b1") - 0.65),
                  std::abs(*noiseless.coefficient("b2") - 0.05),
                  std::abs(*noiseless.coefficient("gamma") - 0.8)});

    int covered = 0;
    for (int s = 1; s <= 100; ++s) {
      tevesg::Rng noise(5000 + static_cast<std::uint64_t>(s));
      Eigen::VectorXd yn = y;
      for (Eigen::Index j = 0; j < yn.size(); ++j) {
        yn(j) += noise.normal(0.0, 0.25);
      }
      const tevesg::RegressionFit fit =
          tevesg::cross_sectional_regress(yn, regs, "tev_esg");
      const Eigen::Index gi =
          static_cast<Eigen::Index>(fit.names.size()) - 1;
      if (std::abs(fit.coef(gi) - 0.8) <= 3.0 * fit.std_error(gi)) ++covered;
    }
    const bool ok = rec_err < 1e-8 && covered >= 95;
    return {ok, "noiseless recovery err=" + num(rec_err) +
                    " (tol 1e-8), gamma within 3 SE on " +
                    std::to_string(covered) + "/100 seeds (need >=95)"};
  });

  // 8. End-to-end pipeline on the bundled synthetic panel via the CLI.
  run(8, "pipeline-end-to-end", [&]() -> std::pair<bool, std::string> {
    TempDir dir;
    const std::string pipe_flags =
        " --returns " + kFx + "/panel_returns.csv --esg " + kFx +
        "/panel_esg.csv --sectors " + kFx + "/panel_sectors.csv --quantiles 10";
    const auto t0 = std::chrono::steady_clock::now();
    const CliResult ingest =
        run_cli("ingest" + pipe_flags + " --out-dir " + dir.path, dir);
    const CliResult regress = run_cli("regress" + pipe_flags + " --factors " +
                                          kFx +
                                          "/panel_factors.csv --model tev_esg",
                                      dir);
    const CliResult compare = run_cli(
        "compare" + pipe_flags + " --factors " + kFx + "/panel_factors.csv",
        dir);
    const double elapsed = seconds_since(t0);
    if (ingest.exit_code != 0 || regress.exit_code != 0 ||
        compare.exit_code != 0) {
      return {false, "CLI exit codes " + std::to_string(ingest.exit_code) +
                         "/" + std::to_string(regress.exit_code) + "/" +
                         std::to_string(compare.exit_code)};
    }
    const json binding = json::parse(slurp(dir.file("binding.json")));
    const double e_minus = binding["e_minus_ratio"].get<double>();
    const double g_star = binding["g_star"].get<double>();
    const json fit = json::parse(regress.out);
    const double gamma = fit["coefficients"]["gamma"].get<double>();
    const double p_gamma = fit["p_values"]["gamma"].get<double>();
    const json cmp = json::parse(compare.out);
    double aic_capm = 0.0, aic_te = 0.0;
    for (const auto& row : cmp["ranking"]) {
      if (row["model"] == "capm") aic_capm = row["aic"].get<double>();
      if (row["model"] == "tev_esg") aic_te = row["aic"].get<double>();
    }
    const bool ok = e_minus < 0.0 && g_star > 0.0 && gamma > 0.0 &&
                    p_gamma < 0.01 && aic_te < aic_capm && elapsed < 10.0;
    return {ok, "e_minus_ratio=" + num(e_minus) + " (<0), g_star=" +
                    num(g_star) + " (>0), gamma=" + num(gamma) + " (>0, p=" +
                    num(p_gamma) + "<0.01), AIC " + num(aic_te) + " vs capm " +
                    num(aic_capm) + ", elapsed=" + num(elapsed) +
                    "s (limit 10s)"};
  });

  // 9. Pipeline unit properties on the bundled panel.
  run(9, "pipeline-properties", [&]() -> std::pair<bool, std::string> {
    const tevesg::ReturnEsgPanel raw =
        tevesg::load_panel(kFx + "/panel_returns.csv", kFx + "/panel_esg.csv");
    const tevesg::ReturnEsgPanel w1 = tevesg::winsorize(raw);
    const tevesg::ReturnEsgPanel w2 = tevesg::winsorize(w1);
    double idem = 0.0;
    for (Eigen::Index t = 0; t < w1.n_months(); ++t) {
      for (Eigen::Index j = 0; j < w1.n_assets(); ++j) {
        if (tevesg::is_missing(w1.returns(t, j))) continue;
        idem = std::max(idem, std::abs(w2.returns(t, j) - w1.returns(t, j)));
      }
    }

    const tevesg::ReturnEsgPanel norm = tevesg::normalize_esg(w1);
    double max_month_mean = 0.0;
    for (Eigen::Index t = 0; t < norm.n_months(); ++t) {
      double sum = 0.0;
      int cnt = 0;
      for (Eigen::Index j = 0; j < norm.n_assets(); ++j) {
        if (tevesg::is_missing(norm.esg(t, j))) continue;
        sum += norm.esg(t, j);
        ++cnt;
      }
      if (cnt > 0) max_month_mean = std::max(max_month_mean, std::abs(sum / cnt));
    }

    const FixturePipeline p = fixture_pipeline();
    double decomp = 0.0;
    const Eigen::Index n = p.portfolios.panel.n_assets();
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd rj = p.portfolios.panel.returns.col(j);
      const double beta_bj =
          tevesg::detail::sample_cov(p.bench_ret, rj) / p.betas.var_be;
      const double rhs =
          p.betas.beta_mb * p.betas.beta_m(j) * p.betas.var_m / p.betas.var_be +
          p.betas.beta_e(j) * p.betas.var_e / p.betas.var_be;
      decomp = std::max(decomp, std::abs(beta_bj - rhs));
    }

    const tevesg::RegressionFit fit = tevesg::cross_sectional_regress(
        p.mean_ret, mandate_regressors(p), "tev_esg");
    double ortho = std::abs(fit.residuals.sum());
    for (const tevesg::Regressor& r : mandate_regressors(p)) {
      ortho = std::max(ortho, std::abs(r.values.dot(fit.residuals)));
    }

    const bool ok = idem == 0.0 && max_month_mean < 1e-12 && decomp < 1e-10 &&
                    ortho < 1e-8;
    return {ok, "winsorize idempotence gap=" + num(idem) +
                    " (exact), max monthly score mean=" + num(max_month_mean) +
                    " (tol 1e-12), beta decomposition err=" + num(decomp) +
                    " (tol 1e-10), residual orthogonality=" + num(ortho) +
                    " (tol 1e-8)"};
  });

  // 10. Every subcommand is byte-identical across repeated runs.
  run(10, "cli-determinism", [&]() -> std::pair<bool, std::string> {
    TempDir dir;
    const std::string uni = " --mu-xi " + kFx + "/universe_demo4.csv --omega " +
                            kFx + "/omega_demo4.csv";
    const std::string pipe = " --returns " + kFx + "/panel_returns.csv --esg " +
                             kFx + "/panel_esg.csv --sectors " + kFx +
                             "/panel_sectors.csv --quantiles 10";
    const std::vector<std::string> cmds = {
        "scalars" + uni,
        "frontier" + uni + " --benchmark " + kFx + "/benchmark_m08_s22.csv",
        "portfolio" + uni + " --benchmark " + kFx +
            "/benchmark_m08_s22.csv --g 0.04 --h 0.05",
        "gstar" + uni + " --benchmark " + kFx + "/benchmark_m10_s16.csv",
        "equilibrium --economy " + kFx + "/economy_demo.json",
        "betas" + pipe + " --factors " + kFx + "/panel_factors.csv",
        "regress" + pipe + " --factors " + kFx +
            "/panel_factors.csv --model tev_esg",
        "compare" + pipe + " --factors " + kFx + "/panel_factors.csv",
        "oracle-check --seed 7 --instances 100",
    };
    int identical = 0;
    int total = 0;
    for (const std::string& cmd : cmds) {
      ++total;
      const CliResult a = run_cli(cmd, dir);
      const CliResult b = run_cli(cmd, dir);
      if (a.exit_code == 0 && b.exit_code == 0 && a.out == b.out) ++identical;
    }
    // ingest compares the written file family instead of stdout.
    ++total;
    TempDir out_a, out_b;
    const CliResult ia = run_cli("ingest" + pipe + " --out-dir " + out_a.path, dir);
    const CliResult ib = run_cli("ingest" + pipe + " --out-dir " + out_b.path, dir);
    if (ia.exit_code == 0 && ib.exit_code == 0) {
      bool same = true;
      for (const char* name :
           {"clean_returns.csv", "clean_esg.csv", "portfolio_returns.csv",
            "portfolio_esg.csv", "portfolio_benchmark.csv", "binding.json"}) {
        if (slurp(out_a.file(name)) != slurp(out_b.file(name))) same = false;
      }
      if (same) ++identical;
    }
    return {identical == total, std::to_string(identical) + "/" +
                                    std::to_string(total) +
                                    " subcommands byte-identical across two "
                                    "runs on the bundled fixtures"};
  });

  return g_failures == 0 ? 0 : 1;
}
