// Command line front end: frontier analytics, equilibrium pricing and the
// empirical pipeline, file in, file out. Exit codes: 0 success, 2 bad
// configuration or unreadable/unwritable files, 3 numerical degeneracy,
// 4 malformed data. Errors go to stderr as a one-object JSON document.

#include <cxxabi.h>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tevesg/empirical.hpp"
#include "tevesg/equilibrium.hpp"
#include "tevesg/errors.hpp"
#include "tevesg/format.hpp"
#include "tevesg/frontier.hpp"
#include "tevesg/io.hpp"
#include "tevesg/market.hpp"
#include "tevesg/simulate.hpp"

namespace {

using nlohmann::json;

std::string demangled_type(const std::exception& e) {
  int status = 0;
  char* raw = abi::__cxa_demangle(typeid(e).name(), nullptr, nullptr, &status);
  std::string name = status == 0 && raw ? raw : typeid(e).name();
  std::free(raw);
  const std::string ns = "tevesg::";
  if (name.rfind(ns, 0) == 0) name = name.substr(ns.size());
  return name;
}

void emit(const std::string& output_path, const std::string& content) {
  if (output_path.empty()) {
    std::cout << content;
  } else {
    tevesg::atomic_write(output_path, content);
  }
}

// ---------------------------------------------------------------------------
// Shared option bundles.
// ---------------------------------------------------------------------------

struct UniverseArgs {
  std::string mu_xi_path;
  std::string omega_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mu-xi", mu_xi_path, "CSV asset,mu,xi")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--omega", omega_path, "covariance CSV")
        ->required()
        ->check(CLI::ExistingFile);
  }
  tevesg::MarketUniverse load() const {
    return tevesg::load_universe(mu_xi_path, omega_path);
  }
};

struct OutputArgs {
  std::string format = "json";
  std::string output_path;

  void attach(CLI::App* cmd, const std::string& default_format) {
    format = default_format;
    cmd->add_option("--format", format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--output", output_path,
                    "output file (atomic); stdout when omitted");
  }
};

struct PipelineArgs {
  std::string returns_path;
  std::string esg_path;
  std::string sectors_path;
  int quantiles = 0;
  double cap_filter = 75.0;
  int min_assets = 6;
  double winsor_lo = 2.5;
  double winsor_hi = 97.5;
  int benchmark_top = 30;

  void attach(CLI::App* cmd) {
    cmd->add_option("--returns", returns_path, "CSV date,asset,return,market_cap")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--esg", esg_path, "CSV date,asset,esg")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--sectors", sectors_path, "CSV asset,sector")
        ->check(CLI::ExistingFile);
    cmd->add_option("--quantiles", quantiles,
                    "number of ESG quantile portfolios (0 = none)")
        ->check(CLI::Range(0, 1000));
    cmd->add_option("--cap-filter", cap_filter,
                    "keep the top percentage of assets by average cap");
    cmd->add_option("--min-assets", min_assets, "minimum portfolio membership");
    cmd->add_option("--winsor-lo", winsor_lo, "lower winsorization percentile");
    cmd->add_option("--winsor-hi", winsor_hi, "upper winsorization percentile");
    cmd->add_option("--benchmark-top", benchmark_top,
                    "benchmark membership: top k assets by final-month cap");
  }

  /// Clean the stock panel and form the requested portfolio sets.
  struct Prepared {
    tevesg::ReturnEsgPanel stocks;       // winsorized + normalized
    tevesg::PortfolioSet portfolios;     // union of the requested schemes
    Eigen::VectorXd stock_benchmark;     // top-k weights over stocks
    Eigen::VectorXd portfolio_benchmark; // projected onto portfolios
  };

  Prepared prepare() const {
    if (sectors_path.empty() && quantiles <= 0) {
      throw tevesg::ConfigError(
          "need --sectors and/or --quantiles to form portfolios");
    }
    Prepared p;
    p.stocks = tevesg::load_panel(returns_path, esg_path);
    p.stocks = tevesg::winsorize(p.stocks, winsor_lo, winsor_hi);
    p.stocks = tevesg::normalize_esg(p.stocks);

    std::vector<tevesg::PortfolioSet> sets;
    if (!sectors_path.empty()) {
      tevesg::PortfolioScheme scheme;
      scheme.kind = tevesg::PortfolioScheme::Kind::Sector;
      scheme.sector_map = tevesg::load_sector_map(sectors_path);
      sets.push_back(
          tevesg::form_portfolios(p.stocks, scheme, cap_filter, min_assets));
    }
    if (quantiles > 0) {
      tevesg::PortfolioScheme scheme;
      scheme.kind = tevesg::PortfolioScheme::Kind::EsgQuantiles;
      scheme.quantiles = quantiles;
      sets.push_back(
          tevesg::form_portfolios(p.stocks, scheme, cap_filter, min_assets));
    }
    p.portfolios = std::move(sets.front());
    for (std::size_t i = 1; i < sets.size(); ++i) {
      tevesg::PortfolioSet& dst = p.portfolios;
      const tevesg::PortfolioSet& src = sets[i];
      const Eigen::Index old_n = dst.panel.n_assets();
      const Eigen::Index add_n = src.panel.n_assets();
      dst.panel.assets.insert(dst.panel.assets.end(), src.panel.assets.begin(),
                              src.panel.assets.end());
      dst.members.insert(dst.members.end(), src.members.begin(),
                         src.members.end());
      auto grow = [&](Eigen::MatrixXd tevesg::ReturnEsgPanel::* field) {
        Eigen::MatrixXd merged(dst.panel.n_months(), old_n + add_n);
        merged.leftCols(old_n) = dst.panel.*field;
        merged.rightCols(add_n) = src.panel.*field;
        dst.panel.*field = std::move(merged);
      };
      grow(&tevesg::ReturnEsgPanel::returns);
      grow(&tevesg::ReturnEsgPanel::esg);
      grow(&tevesg::ReturnEsgPanel::market_cap);
    }
    p.stock_benchmark = tevesg::top_k_benchmark_weights(p.stocks, benchmark_top);
    p.portfolio_benchmark =
        tevesg::project_benchmark(p.stock_benchmark, p.portfolios);
    return p;
  }
};

// ---------------------------------------------------------------------------
// scalars
// ---------------------------------------------------------------------------

json scalars_json(const tevesg::FrontierScalars& s) {
  return json{{"a", tevesg::json_number(s.a_)},
              {"b", tevesg::json_number(s.b_)},
              {"c", tevesg::json_number(s.c_)},
              {"a_e", tevesg::json_number(s.a_e)},
              {"b_e", tevesg::json_number(s.b_e)},
              {"e", tevesg::json_number(s.e_)},
              {"d", tevesg::json_number(s.d_)},
              {"d_e", tevesg::json_number(s.d_e)},
              {"z", tevesg::json_number(s.z_)}};
}

int run_scalars(const UniverseArgs& uni, const OutputArgs& out) {
  const tevesg::MarketModel model(uni.load());
  const tevesg::FrontierScalars& s = model.scalars();
  if (out.format == "json") {
    json j{{"scalars", scalars_json(s)},
           {"degenerate", s.degenerate()},
           {"mvp",
            json{{"mean", tevesg::json_number(s.mvp_mean())},
                 {"variance", tevesg::json_number(s.mvp_variance())},
                 {"esg", tevesg::json_number(s.mvp_esg())}}}};
    emit(out.output_path, tevesg::dump_json(j));
  } else {
    std::string csv = "key,value\n";
    const std::pair<const char*, double> rows[] = {
        {"a", s.a_},         {"b", s.b_},
        {"c", s.c_},         {"a_e", s.a_e},
        {"b_e", s.b_e},      {"e", s.e_},
        {"d", s.d_},         {"d_e", s.d_e},
        {"z", s.z_},         {"mvp_mean", s.mvp_mean()},
        {"mvp_variance", s.mvp_variance()}, {"mvp_esg", s.mvp_esg()}};
    for (const auto& [k, v] : rows) {
      csv += std::string(k) + "," + tevesg::fmt12(v) + "\n";
    }
    csv += std::string("degenerate,") + (s.degenerate() ? "1" : "0") + "\n";
    emit(out.output_path, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// frontier
// ---------------------------------------------------------------------------

int run_frontier(const UniverseArgs& uni, const std::string& benchmark_path,
                 const tevesg::GridSpec& grid, double h, const OutputArgs& out) {
  const tevesg::MarketModel model(uni.load());
  const tevesg::Benchmark bench =
      tevesg::load_benchmark(benchmark_path, model.universe());
  const tevesg::FrontierCurve curve =
      tevesg::frontier_sweep(model, bench, grid, h);

  if (out.format == "csv") {
    std::string csv;
    csv += "# h," + tevesg::fmt12(curve.h) + "\n";
    csv += "# g_boundary," +
           (curve.g_boundary ? tevesg::fmt12(*curve.g_boundary) : "") + "\n";
    csv += "# g_improve," +
           (curve.g_improve ? tevesg::fmt12(*curve.g_improve) : "") + "\n";
    csv += "# mixed_sign_count," + std::to_string(curve.mixed_sign_count) + "\n";
    csv += "g,var_front,var_tev,var_tev_esg,binding\n";
    for (Eigen::Index i = 0; i < curve.g.size(); ++i) {
      csv += tevesg::fmt12(curve.g(i)) + "," + tevesg::fmt12(curve.var_front(i)) +
             "," + tevesg::fmt12(curve.var_tev(i)) + "," +
             tevesg::fmt12(curve.var_tev_esg(i)) + "," +
             (curve.binding[static_cast<std::size_t>(i)] ? "1" : "0") + "\n";
    }
    emit(out.output_path, csv);
  } else {
    json binding = json::array();
    for (char b : curve.binding) binding.push_back(b != 0);
    json j{{"h", tevesg::json_number(curve.h)},
           {"g_boundary", curve.g_boundary
                              ? tevesg::json_number(*curve.g_boundary)
                              : json(nullptr)},
           {"g_improve", curve.g_improve ? tevesg::json_number(*curve.g_improve)
                                         : json(nullptr)},
           {"mixed_sign_count", curve.mixed_sign_count},
           {"g", tevesg::json_vector(curve.g)},
           {"var_front", tevesg::json_vector(curve.var_front)},
           {"var_tev", tevesg::json_vector(curve.var_tev)},
           {"var_tev_esg", tevesg::json_vector(curve.var_tev_esg)},
           {"binding", binding}};
    emit(out.output_path, tevesg::dump_json(j));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// portfolio
// ---------------------------------------------------------------------------

int run_portfolio(const UniverseArgs& uni, const std::string& benchmark_path,
                  double g, double h, const OutputArgs& out) {
  const tevesg::MarketModel model(uni.load());
  const tevesg::Benchmark bench =
      tevesg::load_benchmark(benchmark_path, model.universe());
  const tevesg::FrontierPortfolio p =
      tevesg::tev_esg_portfolio(model, bench, {g, h});
  const tevesg::PortfolioStats stats =
      tevesg::portfolio_stats(model.universe(), p.weights);

  if (out.format == "json") {
    json weights = json::object();
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
      weights[model.universe().asset_ids[static_cast<std::size_t>(i)]] =
          tevesg::json_number(p.weights(i));
    }
    json j{{"g", tevesg::json_number(p.g_target)},
           {"h", tevesg::json_number(p.h_target)},
           {"binding", p.binding},
           {"weights", weights},
           {"lambda1", tevesg::json_number(p.lambda1)},
           {"lambda2", tevesg::json_number(p.lambda2)},
           {"lambda3", tevesg::json_number(p.lambda3)},
           {"tracking_error_variance", tevesg::json_number(p.tev)},
           {"variance", tevesg::json_number(p.variance)},
           {"esg_excess", tevesg::json_number(p.esg_excess)},
           {"mean", tevesg::json_number(stats.mean)},
           {"esg", tevesg::json_number(stats.esg)}};
    emit(out.output_path, tevesg::dump_json(j));
  } else {
    std::string csv = "key,value\n";
    csv += "g," + tevesg::fmt12(p.g_target) + "\n";
    csv += "h," + tevesg::fmt12(p.h_target) + "\n";
    csv += std::string("binding,") + (p.binding ? "1" : "0") + "\n";
    csv += "lambda1," + tevesg::fmt12(p.lambda1) + "\n";
    csv += "lambda2," + tevesg::fmt12(p.lambda2) + "\n";
    csv += "lambda3," + tevesg::fmt12(p.lambda3) + "\n";
    csv += "tracking_error_variance," + tevesg::fmt12(p.tev) + "\n";
    csv += "variance," + tevesg::fmt12(p.variance) + "\n";
    csv += "esg_excess," + tevesg::fmt12(p.esg_excess) + "\n";
    csv += "mean," + tevesg::fmt12(stats.mean) + "\n";
    csv += "esg," + tevesg::fmt12(stats.esg) + "\n";
    csv += "asset,weight\n";
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
      csv += model.universe().asset_ids[static_cast<std::size_t>(i)] + "," +
             tevesg::fmt12(p.weights(i)) + "\n";
    }
    emit(out.output_path, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gstar
// ---------------------------------------------------------------------------

int run_gstar(const UniverseArgs& uni, const std::string& benchmark_path,
              double h, const OutputArgs& out) {
  const tevesg::MarketModel model(uni.load());
  const tevesg::Benchmark bench =
      tevesg::load_benchmark(benchmark_path, model.universe());
  const tevesg::ImprovementRegion region =
      tevesg::improvement_region(model.scalars());
  const tevesg::PortfolioStats stats =
      tevesg::portfolio_stats(model.universe(), bench.weights);
  const std::optional<double> gs = tevesg::g_star(model, bench);
  const std::optional<double> gh = tevesg::g_hat(model, bench, h);
  const double gb = tevesg::binding_boundary(model.scalars(), h);

  if (out.format == "json") {
    json j{{"h", tevesg::json_number(h)},
           {"g_star", gs ? tevesg::json_number(*gs) : json(nullptr)},
           {"g_hat", gh ? tevesg::json_number(*gh) : json(nullptr)},
           {"g_boundary", tevesg::json_number(gb)},
           {"improvement",
            json{{"d1", tevesg::json_number(region.d1)},
                 {"d2", tevesg::json_number(region.d2)},
                 {"d3", tevesg::json_number(region.d3)}}},
           {"benchmark",
            json{{"mean", tevesg::json_number(stats.mean)},
                 {"variance", tevesg::json_number(stats.variance)},
                 {"esg", tevesg::json_number(stats.esg)}}}};
    emit(out.output_path, tevesg::dump_json(j));
  } else {
    std::string csv = "key,value\n";
    csv += "h," + tevesg::fmt12(h) + "\n";
    csv += "g_star," + (gs ? tevesg::fmt12(*gs) : "") + "\n";
    csv += "g_hat," + (gh ? tevesg::fmt12(*gh) : "") + "\n";
    csv += "g_boundary," + tevesg::fmt12(gb) + "\n";
    csv += "d1," + tevesg::fmt12(region.d1) + "\n";
    csv += "d2," + tevesg::fmt12(region.d2) + "\n";
    csv += "d3," + tevesg::fmt12(region.d3) + "\n";
    csv += "benchmark_mean," + tevesg::fmt12(stats.mean) + "\n";
    csv += "benchmark_variance," + tevesg::fmt12(stats.variance) + "\n";
    csv += "benchmark_esg," + tevesg::fmt12(stats.esg) + "\n";
    emit(out.output_path, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// equilibrium
// ---------------------------------------------------------------------------

int run_equilibrium(const std::string& economy_path, const OutputArgs& out) {
  const tevesg::Economy econ = tevesg::load_economy(economy_path);
  const tevesg::EquilibriumSolution sol = tevesg::clear_market(econ);
  const tevesg::EquilibriumPricing& pr = sol.pricing;
  const Eigen::VectorXd mu_implied = tevesg::equilibrium_mu(pr, econ.universe);
  const tevesg::BetaPricing betas = tevesg::beta_pricing(pr, econ.universe);
  const double roundtrip =
      (mu_implied - econ.universe.mu).cwiseAbs().maxCoeff();

  if (out.format == "json") {
    json institutions = json::array();
    for (std::size_t i = 0; i < sol.institutional.size(); ++i) {
      const tevesg::InstitutionalDemand& d = sol.institutional[i];
      institutions.push_back(json{{"omega1", tevesg::json_number(d.omega1)},
                                  {"omega2", tevesg::json_number(d.omega2)},
                                  {"binding", d.binding},
                                  {"weights", tevesg::json_vector(d.weights)}});
    }
    json retail = json::array();
    for (const Eigen::VectorXd& y : sol.retail) {
      retail.push_back(tevesg::json_vector(y));
    }
    json j{
        {"pricing",
         json{{"r_f_star", tevesg::json_number(pr.r_f_star)},
              {"theta1", tevesg::json_number(pr.theta1)},
              {"theta2", tevesg::json_number(pr.theta2)},
              {"gamma", tevesg::json_number(pr.gamma)},
              {"delta", tevesg::json_number(pr.delta)},
              {"total_risky_wealth", tevesg::json_number(pr.total_risky_wealth)},
              {"market_weights", tevesg::json_vector(pr.market_weights)},
              {"aggregate_benchmark", tevesg::json_vector(pr.aggregate_benchmark)},
              {"aggregate_benchmark_norm",
               tevesg::json_vector(pr.aggregate_benchmark_norm)},
              {"binding", pr.binding}}},
        {"institutions", institutions},
        {"retail", retail},
        {"betas",
         json{{"beta_m", tevesg::json_vector(betas.beta_m)},
              {"beta_b", tevesg::json_vector(betas.beta_b)},
              {"sigma_m2", tevesg::json_number(betas.sigma_m2)},
              {"sigma_be2", tevesg::json_number(betas.sigma_be2)},
              {"theta1_star", tevesg::json_number(betas.theta1_star)},
              {"theta2_star", tevesg::json_number(betas.theta2_star)}}},
        {"mu_implied", tevesg::json_vector(mu_implied)},
        {"mu_input", tevesg::json_vector(econ.universe.mu)},
        {"roundtrip_max_abs_error", tevesg::json_number(roundtrip)}};
    emit(out.output_path, tevesg::dump_json(j));
  } else {
    std::string csv = "key,value\n";
    csv += "r_f_star," + tevesg::fmt12(pr.r_f_star) + "\n";
    csv += "theta1," + tevesg::fmt12(pr.theta1) + "\n";
    csv += "theta2," + tevesg::fmt12(pr.theta2) + "\n";
    csv += "gamma," + tevesg::fmt12(pr.gamma) + "\n";
    csv += "delta," + tevesg::fmt12(pr.delta) + "\n";
    csv += "total_risky_wealth," + tevesg::fmt12(pr.total_risky_wealth) + "\n";
    csv += "binding_count," + std::to_string(pr.binding.size()) + "\n";
    csv += "roundtrip_max_abs_error," + tevesg::fmt12(roundtrip) + "\n";
    csv += "asset,market_weight,aggregate_benchmark_norm,beta_m,beta_b,mu_implied\n";
    for (Eigen::Index i = 0; i < pr.market_weights.size(); ++i) {
      const std::string id =
          econ.universe.asset_ids.empty()
              ? std::to_string(i)
              : econ.universe.asset_ids[static_cast<std::size_t>(i)];
      csv += id + "," + tevesg::fmt12(pr.market_weights(i)) + "," +
             tevesg::fmt12(pr.aggregate_benchmark_norm(i)) + "," +
             tevesg::fmt12(betas.beta_m(i)) + "," +
             tevesg::fmt12(betas.beta_b(i)) + "," +
             tevesg::fmt12(mu_implied(i)) + "\n";
    }
    emit(out.output_path, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

int run_ingest(const PipelineArgs& pipe, const std::string& out_dir) {
  const PipelineArgs::Prepared p = pipe.prepare();
  const tevesg::BindingCheck bc =
      tevesg::binding_check(p.portfolios.panel, p.portfolio_benchmark);

  tevesg::atomic_write(out_dir + "/clean_returns.csv",
                       tevesg::panel_returns_csv(p.stocks));
  tevesg::atomic_write(out_dir + "/clean_esg.csv",
                       tevesg::panel_esg_csv(p.stocks));
  tevesg::atomic_write(out_dir + "/portfolio_returns.csv",
                       tevesg::panel_returns_csv(p.portfolios.panel));
  tevesg::atomic_write(out_dir + "/portfolio_esg.csv",
                       tevesg::panel_esg_csv(p.portfolios.panel));
  std::string bench_csv = "asset,weight\n";
  for (Eigen::Index i = 0; i < p.portfolio_benchmark.size(); ++i) {
    bench_csv += p.portfolios.panel.assets[static_cast<std::size_t>(i)] + "," +
                 tevesg::fmt12(p.portfolio_benchmark(i)) + "\n";
  }
  tevesg::atomic_write(out_dir + "/portfolio_benchmark.csv", bench_csv);

  json j{{"e_minus_ratio", tevesg::json_number(bc.e_minus_ratio)},
         {"g_star", tevesg::json_number(bc.g_star)},
         {"n_months_used", bc.n_months_used},
         {"n_portfolios", static_cast<int>(p.portfolios.panel.n_assets())},
         {"scalars", scalars_json(bc.scalars)}};
  tevesg::atomic_write(out_dir + "/binding.json", tevesg::dump_json(j));
  return 0;
}

// ---------------------------------------------------------------------------
// betas / regress / compare share the estimated inputs.
// ---------------------------------------------------------------------------

struct EstimationInputs {
  PipelineArgs::Prepared prepared;
  tevesg::FactorPanel factors;           // aligned to the panel dates
  Eigen::VectorXd market;                // stock-level market series
  Eigen::VectorXd benchmark_returns;     // stock-level top-k series
  tevesg::ResidualBetas betas;
  Eigen::VectorXd mean_ret;              // portfolio mean returns
  Eigen::VectorXd avg_esg;               // portfolio average scores
};

EstimationInputs estimate_inputs(const PipelineArgs& pipe,
                                 const std::string& factors_path,
                                 bool value_weighted_market) {
  EstimationInputs in;
  in.prepared = pipe.prepare();
  in.factors = tevesg::align_factors(tevesg::load_factors(factors_path),
                                     in.prepared.stocks.dates);
  in.market = tevesg::market_series(in.prepared.stocks, value_weighted_market);
  in.benchmark_returns = tevesg::weighted_return_series(
      in.prepared.stocks, in.prepared.stock_benchmark);
  in.betas = tevesg::benchmark_residual_betas(in.prepared.portfolios.panel,
                                              in.market, in.benchmark_returns,
                                              in.factors.risk_free);
  in.mean_ret = tevesg::mean_returns(in.prepared.portfolios.panel);
  in.avg_esg = tevesg::average_esg(in.prepared.portfolios.panel);
  return in;
}

/// Regressor sets of the cross-sectional model family. b2 and gamma are
/// reported with flipped sign, matching mu = a + b1 beta_m - b2 beta_e
/// - gamma xi.
std::vector<tevesg::Regressor> model_regressors(const std::string& model,
                                                const EstimationInputs& in,
                                                const Eigen::MatrixXd* loadings) {
  using tevesg::Regressor;
  std::vector<Regressor> regs;
  auto add_ff = [&]() {
    if (!loadings) {
      throw tevesg::ConfigError("model " + model + " needs factor loadings");
    }
    regs.push_back({"b_SMB", loadings->col(1), false});
    regs.push_back({"b_HML", loadings->col(2), false});
    regs.push_back({"b_RMW", loadings->col(3), false});
    regs.push_back({"b_CMA", loadings->col(4), false});
  };
  if (model == "capm") {
    regs.push_back({"b1", in.betas.beta_m, false});
  } else if (model == "tev") {
    regs.push_back({"b1", in.betas.beta_m, false});
    regs.push_back({"b2", in.betas.beta_e, true});
  } else if (model == "esg") {
    regs.push_back({"gamma", in.avg_esg, true});
  } else if (model == "capm_esg") {
    regs.push_back({"b1", in.betas.beta_m, false});
    regs.push_back({"gamma", in.avg_esg, true});
  } else if (model == "tev_esg") {
    regs.push_back({"b1", in.betas.beta_m, false});
    regs.push_back({"b2", in.betas.beta_e, true});
    regs.push_back({"gamma", in.avg_esg, true});
  } else if (model == "ff5") {
    regs.push_back({"b1", in.betas.beta_m, false});
    add_ff();
  } else if (model == "ff5_tev_esg") {
    regs.push_back({"b1", in.betas.beta_m, false});
    regs.push_back({"b2", in.betas.beta_e, true});
    regs.push_back({"gamma", in.avg_esg, true});
    add_ff();
  } else {
    throw tevesg::ConfigError("unknown model '" + model + "'");
  }
  return regs;
}

bool model_needs_loadings(const std::string& model) {
  return model == "ff5" || model == "ff5_tev_esg";
}

json fit_json(const tevesg::RegressionFit& fit) {
  json coef = json::object(), se = json::object(), t = json::object(),
       p = json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    coef[fit.names[i]] = tevesg::json_number(fit.coef(idx));
    se[fit.names[i]] = tevesg::json_number(fit.std_error(idx));
    t[fit.names[i]] = tevesg::json_number(fit.t_stat(idx));
    p[fit.names[i]] = tevesg::json_number(fit.p_value(idx));
  }
  return json{{"model", fit.model_name},
              {"coefficients", coef},
              {"std_errors", se},
              {"t_stats", t},
              {"p_values", p},
              {"r2_adjusted", tevesg::json_number(fit.r2_adjusted)},
              {"aic", tevesg::json_number(fit.aic)},
              {"n_obs", fit.n_obs}};
}

/// Coefficient table with the standard error parenthesized underneath,
/// one column per model.
std::string fits_table_csv(const std::vector<tevesg::RegressionFit>& fits) {
  std::vector<std::string> terms;
  for (const tevesg::RegressionFit& f : fits) {
    for (const std::string& n : f.names) {
      if (std::find(terms.begin(), terms.end(), n) == terms.end()) {
        terms.push_back(n);
      }
    }
  }
  std::string csv = "term";
  for (const tevesg::RegressionFit& f : fits) csv += "," + f.model_name;
  csv += "\n";
  for (const std::string& term : terms) {
    std::string line1 = term, line2;
    for (const tevesg::RegressionFit& f : fits) {
      bool found = false;
      for (std::size_t i = 0; i < f.names.size(); ++i) {
        if (f.names[i] == term) {
          const auto idx = static_cast<Eigen::Index>(i);
          line1 += "," + tevesg::fmt12(f.coef(idx));
          line2 += ",(" + tevesg::fmt12(f.std_error(idx)) + ")";
          found = true;
          break;
        }
      }
      if (!found) {
        line1 += ",";
        line2 += ",";
      }
    }
    csv += line1 + "\n" + line2 + "\n";
  }
  csv += "r2_adjusted";
  for (const tevesg::RegressionFit& f : fits) {
    csv += "," + tevesg::fmt12(f.r2_adjusted);
  }
  csv += "\naic";
  for (const tevesg::RegressionFit& f : fits) csv += "," + tevesg::fmt12(f.aic);
  csv += "\nn_obs";
  for (const tevesg::RegressionFit& f : fits) {
    csv += "," + std::to_string(f.n_obs);
  }
  csv += "\n";
  return csv;
}

int run_betas(const PipelineArgs& pipe, const std::string& factors_path,
              const std::string& market_weighting, const OutputArgs& out) {
  const EstimationInputs in =
      estimate_inputs(pipe, factors_path, market_weighting == "value");
  if (out.format == "csv") {
    std::string csv = "portfolio,beta_m,beta_e\n";
    for (std::size_t i = 0; i < in.betas.portfolio_ids.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      csv += in.betas.portfolio_ids[i] + "," + tevesg::fmt12(in.betas.beta_m(idx)) +
             "," + tevesg::fmt12(in.betas.beta_e(idx)) + "\n";
    }
    emit(out.output_path, csv);
  } else {
    json rows = json::array();
    for (std::size_t i = 0; i < in.betas.portfolio_ids.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      rows.push_back(json{{"portfolio", in.betas.portfolio_ids[i]},
                          {"beta_m", tevesg::json_number(in.betas.beta_m(idx))},
                          {"beta_e", tevesg::json_number(in.betas.beta_e(idx))}});
    }
    json j{{"portfolios", rows},
           {"beta_mb", tevesg::json_number(in.betas.beta_mb)},
           {"alpha_be", tevesg::json_number(in.betas.alpha_be)},
           {"var_m", tevesg::json_number(in.betas.var_m)},
           {"var_e", tevesg::json_number(in.betas.var_e)},
           {"var_be", tevesg::json_number(in.betas.var_be)}};
    emit(out.output_path, tevesg::dump_json(j));
  }
  return 0;
}

int run_regress(const PipelineArgs& pipe, const std::string& factors_path,
                const std::string& market_weighting, const std::string& model,
                const OutputArgs& out) {
  const EstimationInputs in =
      estimate_inputs(pipe, factors_path, market_weighting == "value");
  Eigen::MatrixXd loadings;
  const Eigen::MatrixXd* loadings_ptr = nullptr;
  if (model_needs_loadings(model)) {
    loadings = tevesg::five_factor_loadings(in.prepared.portfolios.panel,
                                            in.factors);
    loadings_ptr = &loadings;
  }
  const tevesg::RegressionFit fit = tevesg::cross_sectional_regress(
      in.mean_ret, model_regressors(model, in, loadings_ptr), model);
  if (out.format == "json") {
    emit(out.output_path, tevesg::dump_json(fit_json(fit)));
  } else {
    emit(out.output_path, fits_table_csv({fit}));
  }
  return 0;
}

int run_compare(const PipelineArgs& pipe, const std::string& factors_path,
                const std::string& market_weighting, const OutputArgs& out) {
  const EstimationInputs in =
      estimate_inputs(pipe, factors_path, market_weighting == "value");
  const Eigen::MatrixXd loadings =
      tevesg::five_factor_loadings(in.prepared.portfolios.panel, in.factors);
  const std::vector<std::string> models = {"capm",    "tev",        "esg",
                                           "capm_esg", "tev_esg",   "ff5",
                                           "ff5_tev_esg"};
  std::vector<tevesg::RegressionFit> fits;
  for (const std::string& m : models) {
    fits.push_back(tevesg::cross_sectional_regress(
        in.mean_ret, model_regressors(m, in, &loadings), m));
  }
  const tevesg::ModelComparison cmp = tevesg::model_comparison(fits);

  if (out.format == "json") {
    json rows = json::array();
    for (const tevesg::ComparisonRow& r : cmp.rows) {
      rows.push_back(
          json{{"model", r.model},
               {"aic", tevesg::json_number(r.aic)},
               {"r2_adjusted", tevesg::json_number(r.r2_adjusted)},
               {"gamma", r.has_gamma ? tevesg::json_number(r.gamma) : json(nullptr)},
               {"gamma_p_value", r.has_gamma
                                     ? tevesg::json_number(r.gamma_p_value)
                                     : json(nullptr)},
               {"gamma_significant_1pct", r.gamma_significant_1pct}});
    }
    json fits_j = json::array();
    for (const tevesg::RegressionFit& f : fits) fits_j.push_back(fit_json(f));
    json j{{"ranking", rows},
           {"all_esg_models_gamma_positive_significant",
            cmp.all_esg_models_gamma_positive_significant},
           {"fits", fits_j}};
    emit(out.output_path, tevesg::dump_json(j));
  } else {
    std::string csv = fits_table_csv(fits);
    csv += "\nmodel,aic,r2_adjusted,gamma,gamma_p_value,gamma_significant_1pct\n";
    for (const tevesg::ComparisonRow& r : cmp.rows) {
      csv += r.model + "," + tevesg::fmt12(r.aic) + "," +
             tevesg::fmt12(r.r2_adjusted) + ",";
      if (r.has_gamma) {
        csv += tevesg::fmt12(r.gamma) + "," + tevesg::fmt12(r.gamma_p_value);
      } else {
        csv += ",";
      }
      csv += std::string(",") + (r.gamma_significant_1pct ? "1" : "0") + "\n";
    }
    emit(out.output_path, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

int run_oracle_check(std::uint64_t seed, int instances, int n_min, int n_max,
                     const OutputArgs& out) {
  if (n_min < 2 || n_max < n_min) {
    throw tevesg::ConfigError("need 2 <= n-min <= n-max");
  }
  tevesg::Rng rng(seed);
  double max_weight_err = 0.0, max_slack = 0.0, max_budget = 0.0,
         max_return = 0.0, max_lambda2 = -1e300;
  int binding_count = 0;
  for (int i = 0; i < instances; ++i) {
    const int n = n_min + static_cast<int>(rng.index(
                              static_cast<std::uint64_t>(n_max - n_min + 1)));
    const tevesg::MarketUniverse u = tevesg::random_universe(rng, n);
    const tevesg::Benchmark bench = tevesg::random_benchmark(rng, n);
    const tevesg::MandateSpec m{rng.uniform(-0.05, 0.08),
                                rng.uniform(-0.3, 0.3)};
    const tevesg::MarketModel model(u);
    const tevesg::FrontierPortfolio closed =
        tevesg::tev_esg_portfolio(model, bench, m);
    const tevesg::FrontierPortfolio oracle = tevesg::qp_oracle(u, bench, m);
    max_weight_err = std::max(
        max_weight_err, (closed.weights - oracle.weights).cwiseAbs().maxCoeff());
    max_slack = std::max(max_slack,
                         std::abs(closed.lambda2 * (closed.esg_excess - m.h)));
    max_budget = std::max(max_budget, std::abs(closed.weights.sum() - 1.0));
    max_return = std::max(
        max_return, std::abs(u.mu.dot(closed.weights - bench.weights) - m.g));
    max_lambda2 = std::max(max_lambda2, closed.lambda2);
    if (closed.binding) ++binding_count;
  }

  json j{{"seed", seed},
         {"instances", instances},
         {"max_weight_error", tevesg::json_number(max_weight_err)},
         {"max_complementary_slackness", tevesg::json_number(max_slack)},
         {"max_budget_residual", tevesg::json_number(max_budget)},
         {"max_return_residual", tevesg::json_number(max_return)},
         {"max_lambda2", tevesg::json_number(max_lambda2)},
         {"binding_count", binding_count},
         {"within_tolerance", max_weight_err < 1e-7}};
  if (out.format == "csv") {
    std::string csv = "key,value\n";
    csv += "seed," + std::to_string(seed) + "\n";
    csv += "instances," + std::to_string(instances) + "\n";
    csv += "max_weight_error," + tevesg::fmt12(max_weight_err) + "\n";
    csv += "max_complementary_slackness," + tevesg::fmt12(max_slack) + "\n";
    csv += "max_budget_residual," + tevesg::fmt12(max_budget) + "\n";
    csv += "max_return_residual," + tevesg::fmt12(max_return) + "\n";
    csv += "max_lambda2," + tevesg::fmt12(max_lambda2) + "\n";
    csv += "binding_count," + std::to_string(binding_count) + "\n";
    csv += std::string("within_tolerance,") +
           (max_weight_err < 1e-7 ? "1" : "0") + "\n";
    emit(out.output_path, csv);
  } else {
    emit(out.output_path, tevesg::dump_json(j));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark-relative portfolio analytics with ESG mandates"};
  app.require_subcommand(1);

  // scalars
  auto* c_scalars = app.add_subcommand("scalars", "frontier scalars of a universe");
  UniverseArgs scalars_uni;
  scalars_uni.attach(c_scalars);
  OutputArgs scalars_out;
  scalars_out.attach(c_scalars, "json");

  // frontier
  auto* c_frontier = app.add_subcommand("frontier", "sweep the three frontiers");
  // --h is the ESG floor here, so help keeps only its long spelling.
  c_frontier->set_help_flag("--help", "print help and exit");
  UniverseArgs frontier_uni;
  frontier_uni.attach(c_frontier);
  std::string frontier_bench;
  c_frontier->add_option("--benchmark", frontier_bench, "CSV asset,weight")
      ->required()
      ->check(CLI::ExistingFile);
  tevesg::GridSpec grid;
  double frontier_h = 0.0;
  c_frontier->add_option("--g-min", grid.g_min, "grid start");
  c_frontier->add_option("--g-max", grid.g_max, "grid end");
  c_frontier->add_option("--g-steps", grid.steps, "grid points")
      ->check(CLI::Range(2, 1000000));
  c_frontier->add_option("--h", frontier_h, "ESG floor");
  OutputArgs frontier_out;
  frontier_out.attach(c_frontier, "csv");

  // portfolio
  auto* c_portfolio =
      app.add_subcommand("portfolio", "solve one mandate portfolio");
  c_portfolio->set_help_flag("--help", "print help and exit");
  UniverseArgs portfolio_uni;
  portfolio_uni.attach(c_portfolio);
  std::string portfolio_bench;
  c_portfolio->add_option("--benchmark", portfolio_bench, "CSV asset,weight")
      ->required()
      ->check(CLI::ExistingFile);
  double portfolio_g = 0.0, portfolio_h = 0.0;
  c_portfolio->add_option("--g", portfolio_g, "excess return target")->required();
  c_portfolio->add_option("--h", portfolio_h, "ESG floor");
  OutputArgs portfolio_out;
  portfolio_out.attach(c_portfolio, "json");

  // gstar
  auto* c_gstar =
      app.add_subcommand("gstar", "improvement thresholds for a benchmark");
  c_gstar->set_help_flag("--help", "print help and exit");
  UniverseArgs gstar_uni;
  gstar_uni.attach(c_gstar);
  std::string gstar_bench;
  c_gstar->add_option("--benchmark", gstar_bench, "CSV asset,weight")
      ->required()
      ->check(CLI::ExistingFile);
  double gstar_h = 0.0;
  c_gstar->add_option("--h", gstar_h, "ESG floor");
  OutputArgs gstar_out;
  gstar_out.attach(c_gstar, "json");

  // equilibrium
  auto* c_equilibrium =
      app.add_subcommand("equilibrium", "clear a benchmarked economy");
  std::string economy_path;
  c_equilibrium->add_option("--economy", economy_path, "economy JSON")
      ->required()
      ->check(CLI::ExistingFile);
  OutputArgs equilibrium_out;
  equilibrium_out.attach(c_equilibrium, "json");

  // ingest
  auto* c_ingest =
      app.add_subcommand("ingest", "clean a panel, form portfolios, check binding");
  PipelineArgs ingest_pipe;
  ingest_pipe.attach(c_ingest);
  std::string ingest_out_dir;
  c_ingest->add_option("--out-dir", ingest_out_dir, "output directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  // betas
  auto* c_betas = app.add_subcommand("betas", "two-step residual betas");
  PipelineArgs betas_pipe;
  betas_pipe.attach(c_betas);
  std::string betas_factors;
  c_betas->add_option("--factors", betas_factors, "factor CSV")
      ->required()
      ->check(CLI::ExistingFile);
  std::string betas_weighting = "value";
  c_betas->add_option("--market-weighting", betas_weighting,
                      "market proxy weighting")
      ->check(CLI::IsMember({"value", "equal"}));
  OutputArgs betas_out;
  betas_out.attach(c_betas, "csv");

  // regress
  auto* c_regress =
      app.add_subcommand("regress", "cross-sectional pricing regression");
  PipelineArgs regress_pipe;
  regress_pipe.attach(c_regress);
  std::string regress_factors;
  c_regress->add_option("--factors", regress_factors, "factor CSV")
      ->required()
      ->check(CLI::ExistingFile);
  std::string regress_weighting = "value";
  c_regress->add_option("--market-weighting", regress_weighting,
                        "market proxy weighting")
      ->check(CLI::IsMember({"value", "equal"}));
  std::string regress_model;
  c_regress->add_option("--model", regress_model, "pricing model")
      ->required()
      ->check(CLI::IsMember({"capm", "tev", "esg", "capm_esg", "tev_esg", "ff5",
                             "ff5_tev_esg"}));
  OutputArgs regress_out;
  regress_out.attach(c_regress, "json");

  // compare
  auto* c_compare = app.add_subcommand("compare", "run the whole model family");
  PipelineArgs compare_pipe;
  compare_pipe.attach(c_compare);
  std::string compare_factors;
  c_compare->add_option("--factors", compare_factors, "factor CSV")
      ->required()
      ->check(CLI::ExistingFile);
  std::string compare_weighting = "value";
  c_compare->add_option("--market-weighting", compare_weighting,
                        "market proxy weighting")
      ->check(CLI::IsMember({"value", "equal"}));
  OutputArgs compare_out;
  compare_out.attach(c_compare, "json");

  // oracle-check
  auto* c_oracle = app.add_subcommand(
      "oracle-check", "compare closed forms against the dense KKT solver");
  std::uint64_t oracle_seed = 7;
  int oracle_instances = 100, oracle_n_min = 3, oracle_n_max = 10;
  c_oracle->add_option("--seed", oracle_seed, "random seed");
  c_oracle->add_option("--instances", oracle_instances, "instance count")
      ->check(CLI::Range(1, 1000000));
  c_oracle->add_option("--n-min", oracle_n_min, "smallest universe");
  c_oracle->add_option("--n-max", oracle_n_max, "largest universe");
  OutputArgs oracle_out;
  oracle_out.attach(c_oracle, "json");

  try {
    app.parse(argc, argv);

    if (c_scalars->parsed()) return run_scalars(scalars_uni, scalars_out);
    if (c_frontier->parsed()) {
      return run_frontier(frontier_uni, frontier_bench, grid, frontier_h,
                          frontier_out);
    }
    if (c_portfolio->parsed()) {
      return run_portfolio(portfolio_uni, portfolio_bench, portfolio_g,
                           portfolio_h, portfolio_out);
    }
    if (c_gstar->parsed()) {
      return run_gstar(gstar_uni, gstar_bench, gstar_h, gstar_out);
    }
    if (c_equilibrium->parsed()) {
      return run_equilibrium(economy_path, equilibrium_out);
    }
    if (c_ingest->parsed()) return run_ingest(ingest_pipe, ingest_out_dir);
    if (c_betas->parsed()) {
      return run_betas(betas_pipe, betas_factors, betas_weighting, betas_out);
    }
    if (c_regress->parsed()) {
      return run_regress(regress_pipe, regress_factors, regress_weighting,
                         regress_model, regress_out);
    }
    if (c_compare->parsed()) {
      return run_compare(compare_pipe, compare_factors, compare_weighting,
                         compare_out);
    }
    if (c_oracle->parsed()) {
      return run_oracle_check(oracle_seed, oracle_instances, oracle_n_min,
                              oracle_n_max, oracle_out);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << json{{"error", {{"type", "ConfigError"},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 2;
  } catch (const tevesg::ConfigError& e) {
    std::cerr << json{{"error", {{"type", demangled_type(e)},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 2;
  } catch (const tevesg::IoError& e) {
    std::cerr << json{{"error", {{"type", demangled_type(e)},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 2;
  } catch (const tevesg::NumericError& e) {
    std::cerr << json{{"error", {{"type", demangled_type(e)},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 3;
  } catch (const tevesg::DataError& e) {
    std::cerr << json{{"error", {{"type", demangled_type(e)},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", demangled_type(e)},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  }
}
