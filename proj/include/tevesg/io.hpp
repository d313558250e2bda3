#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "tevesg/empirical.hpp"
#include "tevesg/equilibrium.hpp"
#include "tevesg/errors.hpp"
#include "tevesg/format.hpp"
#include "tevesg/market.hpp"

namespace tevesg {

// ---------------------------------------------------------------------------
// Low-level text file plumbing.
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + path);
  return ss.str();
}

/// Write the content to a temporary file in the target directory, then
/// rename it over the destination, so readers never observe a partial file.
inline void atomic_write(const std::string& path, const std::string& content) {
  std::string tmpl = path + ".tmpXXXXXX";
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  const int fd = ::mkstemp(buf.data());
  if (fd < 0) {
    throw IoError("cannot create temporary file next to " + path + ": " +
                  std::strerror(errno));
  }
  const std::string tmp_path(buf.data());
  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t w = ::write(fd, content.data() + off, content.size() - off);
    if (w < 0) {
      ::close(fd);
      std::remove(tmp_path.c_str());
      throw IoError("cannot write " + tmp_path + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(w);
  }
  ::close(fd);
  if (std::rename(tmp_path.c_str(), path.c_str()) != 0) {
    std::remove(tmp_path.c_str());
    throw IoError("cannot move " + tmp_path + " to " + path + ": " +
                  std::strerror(errno));
  }
}

// ---------------------------------------------------------------------------
// CSV parsing. Simple comma separation; the schemas never need quoting.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string path;  // for error messages
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s.empty()) return kMissing;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw ParseError("bad number '" + s + "' in " + where);
  }
  return v;
}

/// "YYYY-MM" to a month index; strict shape check.
inline int month_index(const std::string& date, const std::string& where) {
  if (date.size() != 7 || date[4] != '-' || !std::isdigit(date[0]) ||
      !std::isdigit(date[1]) || !std::isdigit(date[2]) || !std::isdigit(date[3]) ||
      !std::isdigit(date[5]) || !std::isdigit(date[6])) {
    throw ParseError("bad year-month date '" + date + "' in " + where);
  }
  const int y = std::stoi(date.substr(0, 4));
  const int m = std::stoi(date.substr(5, 2));
  if (m < 1 || m > 12) {
    throw ParseError("bad month in date '" + date + "' in " + where);
  }
  return y * 12 + (m - 1);
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path,
                         const std::vector<std::string>& expected_header) {
  const std::string text = read_text_file(path);
  CsvTable table;
  table.path = path;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (table.header.empty()) {
      table.header = fields;
      if (!expected_header.empty() && fields != expected_header) {
        std::string want;
        for (std::size_t i = 0; i < expected_header.size(); ++i) {
          want += (i ? "," : "") + expected_header[i];
        }
        throw ParseError(path + ": expected header '" + want + "', got '" +
                         line + "'");
      }
    } else {
      if (fields.size() != table.header.size()) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected " + std::to_string(table.header.size()) +
                         " fields, got " + std::to_string(fields.size()));
      }
      table.rows.push_back(std::move(fields));
    }
  }
  if (table.header.empty()) throw ParseError(path + ": empty file");
  return table;
}

// ---------------------------------------------------------------------------
// Universe, benchmark and economy loaders.
// ---------------------------------------------------------------------------

/// Load a universe from `asset,mu,xi` plus a covariance CSV whose header is
/// `asset,<id...>` with one labeled row per asset, in the same asset order.
inline MarketUniverse load_universe(const std::string& mu_xi_path,
                                    const std::string& omega_path) {
  const CsvTable assets = read_csv(mu_xi_path, {"asset", "mu", "xi"});
  MarketUniverse u;
  const auto n = static_cast<Eigen::Index>(assets.rows.size());
  if (n < 2) throw DataError(mu_xi_path + ": need at least 2 assets");
  u.mu.resize(n);
  u.xi.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = assets.rows[static_cast<std::size_t>(i)];
    u.asset_ids.push_back(row[0]);
    u.mu(i) = detail::parse_double(row[1], mu_xi_path);
    u.xi(i) = detail::parse_double(row[2], mu_xi_path);
  }

  const CsvTable cov = read_csv(omega_path, {});
  if (cov.header.size() != static_cast<std::size_t>(n) + 1 ||
      cov.header[0] != "asset") {
    throw ParseError(omega_path + ": header must be 'asset' plus the " +
                     std::to_string(n) + " asset ids");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (cov.header[static_cast<std::size_t>(j) + 1] !=
        u.asset_ids[static_cast<std::size_t>(j)]) {
      throw ParseError(omega_path + ": column order must match " + mu_xi_path);
    }
  }
  if (cov.rows.size() != static_cast<std::size_t>(n)) {
    throw ParseError(omega_path + ": expected " + std::to_string(n) + " rows");
  }
  u.omega.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = cov.rows[static_cast<std::size_t>(i)];
    if (row[0] != u.asset_ids[static_cast<std::size_t>(i)]) {
      throw ParseError(omega_path + ": row order must match " + mu_xi_path);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      u.omega(i, j) =
          detail::parse_double(row[static_cast<std::size_t>(j) + 1], omega_path);
      if (is_missing(u.omega(i, j))) {
        throw ParseError(omega_path + ": covariance cells cannot be empty");
      }
    }
  }
  return u;
}

/// Load benchmark weights from `asset,weight`; asset ids and order must
/// match the universe exactly.
inline Benchmark load_benchmark(const std::string& path,
                                const MarketUniverse& u) {
  const CsvTable t = read_csv(path, {"asset", "weight"});
  if (t.rows.size() != static_cast<std::size_t>(u.size())) {
    throw DimensionMismatch(path + ": expected " + std::to_string(u.size()) +
                            " weights");
  }
  Benchmark b;
  b.weights.resize(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    if (!u.asset_ids.empty() && row[0] != u.asset_ids[static_cast<std::size_t>(i)]) {
      throw ParseError(path + ": asset order must match the universe file");
    }
    b.weights(i) = detail::parse_double(row[1], path);
    if (is_missing(b.weights(i))) {
      throw ParseError(path + ": weights cannot be empty");
    }
  }
  validate_benchmark(u, b);
  return b;
}

namespace detail {

inline std::string dir_of(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

inline std::string join_path(const std::string& dir, const std::string& rel) {
  if (!rel.empty() && rel.front() == '/') return rel;
  return dir + "/" + rel;
}

}  // namespace detail

/// Load an economy description. File paths inside the JSON are resolved
/// relative to the JSON file's own directory.
inline Economy load_economy(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const std::string dir = detail::dir_of(path);
  Economy econ;
  try {
    const auto& uni = j.at("universe");
    econ.universe =
        load_universe(detail::join_path(dir, uni.at("mu_xi").get<std::string>()),
                      detail::join_path(dir, uni.at("omega").get<std::string>()));
    econ.risk_free = j.at("risk_free").get<double>();
    for (const auto& inst : j.value("institutions", nlohmann::json::array())) {
      InstitutionalInvestor inv;
      inv.wealth = inst.at("wealth").get<double>();
      inv.risk_aversion = inst.at("risk_aversion").get<double>();
      inv.h_target = inst.value("h_target", 0.0);
      inv.benchmark = load_benchmark(
          detail::join_path(dir, inst.at("benchmark").get<std::string>()),
          econ.universe);
      econ.institutions.push_back(std::move(inv));
    }
    for (const auto& ret : j.value("retail", nlohmann::json::array())) {
      RetailInvestor inv;
      inv.wealth = ret.at("wealth").get<double>();
      inv.risk_aversion = ret.at("risk_aversion").get<double>();
      econ.retail.push_back(inv);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return econ;
}

// ---------------------------------------------------------------------------
// Panel loaders.
// ---------------------------------------------------------------------------

/// Load a stock panel from the long-format returns file
/// `date,asset,return,market_cap` and the score file `date,asset,esg`.
/// The asset axis comes from the returns file; assets without a single ESG
/// observation are dropped. The date axis is the union of both files and
/// must be consecutive months.
inline ReturnEsgPanel load_panel(const std::string& returns_path,
                                 const std::string& esg_path) {
  const CsvTable rt = read_csv(returns_path,
                               {"date", "asset", "return", "market_cap"});
  const CsvTable et = read_csv(esg_path, {"date", "asset", "esg"});

  std::set<std::string> date_set;
  std::set<std::string> asset_set;
  for (const auto& row : rt.rows) {
    detail::month_index(row[0], returns_path);
    date_set.insert(row[0]);
    asset_set.insert(row[1]);
  }
  for (const auto& row : et.rows) {
    detail::month_index(row[0], esg_path);
    date_set.insert(row[0]);
  }
  if (asset_set.empty()) throw EmptyPanel(returns_path + ": no observations");

  ReturnEsgPanel panel;
  panel.dates.assign(date_set.begin(), date_set.end());
  for (std::size_t i = 1; i < panel.dates.size(); ++i) {
    if (detail::month_index(panel.dates[i], returns_path) !=
        detail::month_index(panel.dates[i - 1], returns_path) + 1) {
      throw DataError("panel months are not consecutive: gap between " +
                      panel.dates[i - 1] + " and " + panel.dates[i]);
    }
  }
  panel.assets.assign(asset_set.begin(), asset_set.end());

  std::map<std::string, Eigen::Index> date_of, asset_of;
  for (std::size_t i = 0; i < panel.dates.size(); ++i) {
    date_of[panel.dates[i]] = static_cast<Eigen::Index>(i);
  }
  for (std::size_t i = 0; i < panel.assets.size(); ++i) {
    asset_of[panel.assets[i]] = static_cast<Eigen::Index>(i);
  }
  const auto t_n = static_cast<Eigen::Index>(panel.dates.size());
  const auto a_n = static_cast<Eigen::Index>(panel.assets.size());
  panel.returns.setConstant(t_n, a_n, kMissing);
  panel.esg.setConstant(t_n, a_n, kMissing);
  panel.market_cap.setConstant(t_n, a_n, kMissing);

  for (const auto& row : rt.rows) {
    const Eigen::Index t = date_of[row[0]];
    const Eigen::Index j = asset_of[row[1]];
    if (!is_missing(panel.returns(t, j)) || !is_missing(panel.market_cap(t, j))) {
      throw ParseError(returns_path + ": duplicate cell " + row[0] + "/" + row[1]);
    }
    panel.returns(t, j) = detail::parse_double(row[2], returns_path);
    panel.market_cap(t, j) = detail::parse_double(row[3], returns_path);
  }
  for (const auto& row : et.rows) {
    auto it = asset_of.find(row[1]);
    if (it == asset_of.end()) {
      throw DataError(esg_path + ": asset " + row[1] +
                      " does not appear in the returns file");
    }
    const Eigen::Index t = date_of[row[0]];
    if (!is_missing(panel.esg(t, it->second))) {
      throw ParseError(esg_path + ": duplicate cell " + row[0] + "/" + row[1]);
    }
    panel.esg(t, it->second) = detail::parse_double(row[2], esg_path);
  }

  // Keep only assets with at least one score observation.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < a_n; ++j) {
    bool any = false;
    for (Eigen::Index t = 0; t < t_n && !any; ++t) {
      any = !is_missing(panel.esg(t, j));
    }
    if (any) keep.push_back(j);
  }
  if (keep.empty()) {
    throw EmptyPanel("no asset has any ESG score");
  }
  if (static_cast<Eigen::Index>(keep.size()) < a_n) {
    ReturnEsgPanel filtered;
    filtered.dates = panel.dates;
    const auto k_n = static_cast<Eigen::Index>(keep.size());
    filtered.returns.resize(t_n, k_n);
    filtered.esg.resize(t_n, k_n);
    filtered.market_cap.resize(t_n, k_n);
    for (Eigen::Index i = 0; i < k_n; ++i) {
      const Eigen::Index j = keep[static_cast<std::size_t>(i)];
      filtered.assets.push_back(panel.assets[static_cast<std::size_t>(j)]);
      filtered.returns.col(i) = panel.returns.col(j);
      filtered.esg.col(i) = panel.esg.col(j);
      filtered.market_cap.col(i) = panel.market_cap.col(j);
    }
    return filtered;
  }
  return panel;
}

/// Load the factor file `date,mkt_rf,smb,hml,rmw,cma,rf`; every cell must be
/// present.
inline FactorPanel load_factors(const std::string& path) {
  const CsvTable t =
      read_csv(path, {"date", "mkt_rf", "smb", "hml", "rmw", "cma", "rf"});
  FactorPanel f;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw EmptyPanel(path + ": no rows");
  f.market_excess.resize(n);
  f.smb.resize(n);
  f.hml.resize(n);
  f.rmw.resize(n);
  f.cma.resize(n);
  f.risk_free.resize(n);
  int prev = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    const int mi = detail::month_index(row[0], path);
    if (prev >= 0 && mi != prev + 1) {
      throw DataError(path + ": factor months are not consecutive at " + row[0]);
    }
    prev = mi;
    f.dates.push_back(row[0]);
    double vals[6];
    for (int c = 0; c < 6; ++c) {
      vals[c] = detail::parse_double(row[static_cast<std::size_t>(c) + 1], path);
      if (is_missing(vals[c])) {
        throw ParseError(path + ": factor cells cannot be empty (" + row[0] + ")");
      }
    }
    f.market_excess(i) = vals[0];
    f.smb(i) = vals[1];
    f.hml(i) = vals[2];
    f.rmw(i) = vals[3];
    f.cma(i) = vals[4];
    f.risk_free(i) = vals[5];
  }
  return f;
}

/// Restrict a factor panel to the given dates, which must all be covered.
inline FactorPanel align_factors(const FactorPanel& f,
                                 const std::vector<std::string>& dates) {
  std::map<std::string, Eigen::Index> idx;
  for (std::size_t i = 0; i < f.dates.size(); ++i) {
    idx[f.dates[i]] = static_cast<Eigen::Index>(i);
  }
  FactorPanel out;
  const auto n = static_cast<Eigen::Index>(dates.size());
  out.market_excess.resize(n);
  out.smb.resize(n);
  out.hml.resize(n);
  out.rmw.resize(n);
  out.cma.resize(n);
  out.risk_free.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = idx.find(dates[static_cast<std::size_t>(i)]);
    if (it == idx.end()) {
      throw MismatchedSamples("factor panel is missing month " +
                              dates[static_cast<std::size_t>(i)]);
    }
    out.dates.push_back(dates[static_cast<std::size_t>(i)]);
    out.market_excess(i) = f.market_excess(it->second);
    out.smb(i) = f.smb(it->second);
    out.hml(i) = f.hml(it->second);
    out.rmw(i) = f.rmw(it->second);
    out.cma(i) = f.cma(it->second);
    out.risk_free(i) = f.risk_free(it->second);
  }
  return out;
}

/// Load `asset,sector` into a map.
inline std::map<std::string, std::string> load_sector_map(const std::string& path) {
  const CsvTable t = read_csv(path, {"asset", "sector"});
  std::map<std::string, std::string> m;
  for (const auto& row : t.rows) {
    if (row[1].empty()) throw ParseError(path + ": empty sector for " + row[0]);
    if (!m.emplace(row[0], row[1]).second) {
      throw ParseError(path + ": duplicate asset " + row[0]);
    }
  }
  if (m.empty()) throw EmptyPanel(path + ": no rows");
  return m;
}

// ---------------------------------------------------------------------------
// Panel writers (long format, round-trips through the loaders).
// ---------------------------------------------------------------------------

inline std::string panel_returns_csv(const ReturnEsgPanel& panel) {
  std::string out = "date,asset,return,market_cap\n";
  for (Eigen::Index t = 0; t < panel.n_months(); ++t) {
    for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
      const double r = panel.returns(t, j);
      const double c = panel.market_cap(t, j);
      if (is_missing(r) && is_missing(c)) continue;
      out += panel.dates[static_cast<std::size_t>(t)];
      out += ',';
      out += panel.assets[static_cast<std::size_t>(j)];
      out += ',';
      if (!is_missing(r)) out += fmt12(r);
      out += ',';
      if (!is_missing(c)) out += fmt12(c);
      out += '\n';
    }
  }
  return out;
}

inline std::string panel_esg_csv(const ReturnEsgPanel& panel) {
  std::string out = "date,asset,esg\n";
  for (Eigen::Index t = 0; t < panel.n_months(); ++t) {
    for (Eigen::Index j = 0; j < panel.n_assets(); ++j) {
      const double e = panel.esg(t, j);
      if (is_missing(e)) continue;
      out += panel.dates[static_cast<std::size_t>(t)];
      out += ',';
      out += panel.assets[static_cast<std::size_t>(j)];
      out += ',';
      out += fmt12(e);
      out += '\n';
    }
  }
  return out;
}

inline std::string factors_csv(const FactorPanel& f) {
  std::string out = "date,mkt_rf,smb,hml,rmw,cma,rf\n";
  for (Eigen::Index i = 0; i < f.n_months(); ++i) {
    out += f.dates[static_cast<std::size_t>(i)];
    out += ',' + fmt12(f.market_excess(i));
    out += ',' + fmt12(f.smb(i));
    out += ',' + fmt12(f.hml(i));
    out += ',' + fmt12(f.rmw(i));
    out += ',' + fmt12(f.cma(i));
    out += ',' + fmt12(f.risk_free(i));
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON helpers.
// ---------------------------------------------------------------------------

inline nlohmann::json json_number(double x) {
  if (std::isnan(x)) return nullptr;
  return round12(x);
}

inline nlohmann::json json_vector(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(json_number(v(i)));
  return arr;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace tevesg
