// Regenerates the bundled synthetic panel fixtures. Run from anywhere:
//
//   tevesg-make-fixtures --seed 17 --out-dir data
//
// Prints the generating ground truth as JSON on stdout so a seed's premium
// and pricing parameters can be inspected without loading the panel.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tevesg/io.hpp"
#include "tevesg/simulate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic panel fixture generator"};
  std::uint64_t seed = 17;
  std::string out_dir = ".";
  tevesg::PanelSpec spec;
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out-dir", out_dir, "output directory")
      ->check(CLI::ExistingDirectory);
  app.add_option("--assets", spec.n_assets, "number of assets");
  app.add_option("--months", spec.n_months, "number of months");
  app.add_option("--sectors", spec.n_sectors, "number of sectors");
  app.add_option("--gamma", spec.gamma, "true ESG premium per score unit");
  CLI11_PARSE(app, argc, argv);

  try {
    const tevesg::SimulatedPanel sim = tevesg::simulate_panel(spec, seed);
    tevesg::atomic_write(out_dir + "/panel_returns.csv",
                         tevesg::panel_returns_csv(sim.panel));
    tevesg::atomic_write(out_dir + "/panel_esg.csv",
                         tevesg::panel_esg_csv(sim.panel));
    tevesg::atomic_write(out_dir + "/panel_factors.csv",
                         tevesg::factors_csv(sim.factors));
    std::string sectors = "asset,sector\n";
    for (const std::string& id : sim.panel.assets) {
      sectors += id + "," + sim.sectors.at(id) + "\n";
    }
    tevesg::atomic_write(out_dir + "/panel_sectors.csv", sectors);

    nlohmann::json truth{
        {"seed", seed},
        {"n_assets", spec.n_assets},
        {"n_months", spec.n_months},
        {"true_gamma", tevesg::json_number(sim.true_gamma)},
        {"true_theta1", tevesg::json_number(sim.true_theta1)},
        {"true_theta2", tevesg::json_number(sim.true_theta2)},
        {"true_risk_free", tevesg::json_number(sim.true_risk_free)}};
    std::cout << tevesg::dump_json(truth);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
