// Shared fixtures and independent cross-check oracles for the test suite.
// Everything here recomputes results through a *different* route than the
// library (explicit inverses, dense KKT systems, bisection) so agreement is
// meaningful.
#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tevesg/empirical.hpp"
#include "tevesg/format.hpp"
#include "tevesg/io.hpp"
#include "tevesg/market.hpp"

namespace testutil {

// ---------------------------------------------------------------------------
// Four-asset demonstration universe and its hand-frozen invariants.
// ---------------------------------------------------------------------------

inline tevesg::MarketUniverse demo4() {
  tevesg::MarketUniverse u;
  u.asset_ids = {"A", "B", "C", "D"};
  u.mu.resize(4);
  u.mu << 0.15, 0.10, 0.05, 0.02;
  u.xi.resize(4);
  u.xi << 0.07, 0.10, 0.17, 0.67;
  u.omega.resize(4, 4);
  u.omega << 0.06, 0.04, 0.02, 0.01,
             0.04, 0.05, 0.03, 0.02,
             0.02, 0.03, 0.08, 0.03,
             0.01, 0.02, 0.03, 0.06;
  return u;
}

// Frozen scalar values of demo4, computed independently in double precision.
constexpr double kA = 2.443037974683544;
constexpr double kB = 0.3755443037974682;
constexpr double kC = 30.379746835443036;
constexpr double kAE = 9.493670886075948;
constexpr double kBE = 8.169772151898735;
constexpr double kE = 0.10994936708860766;
constexpr double kD = 5.44050632911392;
constexpr double kDE = -15.332911392405066;
constexpr double kZ = 0.3125;
constexpr double kMvpMean = 0.08041666666666666;
constexpr double kKappa = -19.853164556962017;    // c e - a a_e
constexpr double kEMinusRatio = -0.6535;          // e - (a/c) a_e
constexpr double kD1 = 0.33210660545779136;
constexpr double kD2 = -2.0;
constexpr double kD3 = -0.5480744707982658;

// Benchmarks on the mean/score line, minimum variance given (mean, esg).
inline tevesg::Benchmark bench_m08_s22() {
  Eigen::VectorXd w(4);
  w << 0.159919095187, 0.392305787171, 0.260868488401, 0.186906629241;
  return tevesg::Benchmark{w};
}
constexpr double kGstarM08S22 = 0.05153022188217285;

inline tevesg::Benchmark bench_m10_s16() {
  Eigen::VectorXd w(4);
  w << 0.369462560885, 0.320317014778, 0.211483530092, 0.098736894245;
  return tevesg::Benchmark{w};
}
constexpr double kGstarM10S16 = 0.04441469013006893;

// ---------------------------------------------------------------------------
// Independent oracles.
// ---------------------------------------------------------------------------

/// Frontier scalars through an explicit matrix inverse.
struct InverseOracle {
  double a, b, c, a_e, b_e, e, d, d_e;
  Eigen::MatrixXd inv;

  explicit InverseOracle(const tevesg::MarketUniverse& u) {
    inv = u.omega.inverse();
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(u.size());
    a = one.dot(inv * u.mu);
    b = u.mu.dot(inv * u.mu);
    c = one.dot(inv * one);
    a_e = one.dot(inv * u.xi);
    b_e = u.xi.dot(inv * u.xi);
    e = u.xi.dot(inv * u.mu);
    d = b * c - a * a;
    d_e = -2.0 * a * e * a_e + a_e * a_e * b + a * a * b_e + e * e * c -
          b * b_e * c;
  }
};

/// Minimum-variance portfolio with prescribed mean and score, solved as a
/// dense 3x3 system in the inverse-basis coordinates.
inline Eigen::VectorXd mandated_benchmark(const tevesg::MarketUniverse& u,
                                          double mean, double esg) {
  const InverseOracle o(u);
  Eigen::Matrix3d m;
  m << o.c, o.a, o.a_e,
       o.a, o.b, o.e,
       o.a_e, o.e, o.b_e;
  Eigen::Vector3d rhs(1.0, mean, esg);
  const Eigen::Vector3d coef = m.fullPivLu().solve(rhs);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(u.size());
  return o.inv * (coef(0) * one + coef(1) * u.mu + coef(2) * u.xi);
}

/// Root of f on [lo, hi] by bisection; requires a sign change.
inline double bisect(const std::function<double(double)>& f, double lo,
                     double hi, double tol = 1e-13) {
  double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw std::runtime_error("bisect: no sign change");
  }
  for (int i = 0; i < 300 && hi - lo > tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Mean-variance optimum with a budget equality and an optional score
/// equality, solved as one dense KKT system: maximize
/// mu'x - (a/2)(x-x0)'Omega(x-x0).
inline Eigen::VectorXd utility_oracle(const tevesg::MarketUniverse& u,
                                      const Eigen::VectorXd& x0,
                                      double risk_aversion, double h_target,
                                      bool* binding_out = nullptr) {
  const Eigen::Index n = u.size();
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(n);
  auto solve = [&](bool with_floor) {
    const Eigen::Index k = with_floor ? 2 : 1;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    kkt.topLeftCorner(n, n) = risk_aversion * u.omega;
    kkt.block(0, n, n, 1) = one;
    kkt.block(n, 0, 1, n) = one.transpose();
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = u.mu + risk_aversion * (u.omega * x0);
    rhs(n) = 1.0;
    if (with_floor) {
      kkt.block(0, n + 1, n, 1) = u.xi;
      kkt.block(n + 1, 0, 1, n) = u.xi.transpose();
      rhs(n + 1) = h_target + u.xi.dot(x0);
    }
    return Eigen::VectorXd(kkt.fullPivLu().solve(rhs).head(n));
  };
  const Eigen::VectorXd unconstrained = solve(false);
  const bool binding = u.xi.dot(unconstrained - x0) < h_target;
  if (binding_out) *binding_out = binding;
  return binding ? solve(true) : unconstrained;
}

// ---------------------------------------------------------------------------
// Panel with exactly prescribed sample moments.
// ---------------------------------------------------------------------------

/// Returns panel whose sample mean is exactly u.mu, whose (T-1)-denominator
/// sample covariance is exactly u.omega, and whose scores are constant at
/// u.xi. Needs t_n >= n+1.
inline tevesg::ReturnEsgPanel inject_panel(const tevesg::MarketUniverse& u,
                                           int t_n, tevesg::Rng& rng) {
  const Eigen::Index n = u.size();
  if (t_n < n + 1) throw std::runtime_error("inject_panel: too few months");
  Eigen::MatrixXd m(t_n, n + 1);
  m.col(0).setOnes();
  for (Eigen::Index j = 1; j <= n; ++j) {
    for (int t = 0; t < t_n; ++t) m(t, j) = rng.normal();
  }
  const Eigen::MatrixXd q =
      Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ() *
      Eigen::MatrixXd::Identity(t_n, n + 1);
  const Eigen::MatrixXd v = q.rightCols(n);  // orthonormal, orthogonal to 1
  const Eigen::MatrixXd l = u.omega.llt().matrixL();

  tevesg::ReturnEsgPanel panel;
  panel.assets = u.asset_ids;
  panel.dates.resize(t_n);
  for (int t = 0; t < t_n; ++t) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", 2015 + t / 12, t % 12 + 1);
    panel.dates[static_cast<std::size_t>(t)] = buf;
  }
  panel.returns = Eigen::VectorXd::Ones(t_n) * u.mu.transpose() +
                  std::sqrt(static_cast<double>(t_n - 1)) * v * l.transpose();
  panel.esg = Eigen::VectorXd::Ones(t_n) * u.xi.transpose();
  panel.market_cap = Eigen::MatrixXd::Ones(t_n, n);
  return panel;
}

// ---------------------------------------------------------------------------
// Process and filesystem helpers for the command line tests.
// ---------------------------------------------------------------------------

struct TempDir {
  std::string path;
  TempDir() {
    std::string tmpl = "/tmp/tevesg_test_XXXXXX";
    char* got = mkdtemp(tmpl.data());
    if (!got) throw std::runtime_error("mkdtemp failed");
    path = got;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string file(const std::string& name) const { return path + "/" + name; }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

/// Run the built command line binary with the given argument string.
inline CliResult run_cli(const std::string& args, const TempDir& dir) {
  const std::string out_path = dir.file("cli_stdout.txt");
  const std::string err_path = dir.file("cli_stderr.txt");
  const std::string cmd = std::string(TEVESG_CLI_PATH) + " " + args + " > " +
                          out_path + " 2> " + err_path;
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

/// Write the demonstration universe and benchmarks as CSV files; returns
/// nothing, file names are fixed: mu_xi.csv, omega.csv, bench_a.csv,
/// bench_b.csv.
inline void write_demo4_files(const TempDir& dir) {
  spit(dir.file("mu_xi.csv"),
       "asset,mu,xi\n"
       "A,0.15,0.07\n"
       "B,0.1,0.1\n"
       "C,0.05,0.17\n"
       "D,0.02,0.67\n");
  spit(dir.file("omega.csv"),
       "asset,A,B,C,D\n"
       "A,0.06,0.04,0.02,0.01\n"
       "B,0.04,0.05,0.03,0.02\n"
       "C,0.02,0.03,0.08,0.03\n"
       "D,0.01,0.02,0.03,0.06\n");
  spit(dir.file("bench_a.csv"),
       "asset,weight\n"
       "A,0.159919095187\n"
       "B,0.392305787171\n"
       "C,0.260868488401\n"
       "D,0.186906629241\n");
  spit(dir.file("bench_b.csv"),
       "asset,weight\n"
       "A,0.369462560885\n"
       "B,0.320317014778\n"
       "C,0.211483530092\n"
       "D,0.098736894245\n");
}

}  // namespace testutil
