#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zam/clearing.hpp"
#include "zam/market.hpp"
#include "zam/marl.hpp"
#include "zam/rng.hpp"

namespace zam {

struct ParseError : std::runtime_error {
  int line = 0;
  ParseError(const std::string& msg, int line_number)
      : std::runtime_error(msg + " (line " + std::to_string(line_number) + ")"),
        line(line_number) {}
  explicit ParseError(const std::string& msg)
      : std::runtime_error(msg), line(0) {}
};

// ---- civil date helpers (proleptic Gregorian) ----

inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

inline std::array<int, 3> civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m),
          static_cast<int>(d)};
}

inline bool parse_iso_date(const std::string& s, int& y, int& m, int& d) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != 4 && i != 7 && !std::isdigit(static_cast<unsigned char>(s[i])))
      return false;
  y = std::stoi(s.substr(0, 4));
  m = std::stoi(s.substr(5, 2));
  d = std::stoi(s.substr(8, 2));
  if (m < 1 || m > 12 || d < 1 || d > 31) return false;
  const auto back = civil_from_days(days_from_civil(y, m, d));
  return back[0] == y && back[1] == m && back[2] == d;
}

inline std::string format_iso_date(long day_number) {
  const auto c = civil_from_days(day_number);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", c[0], c[1], c[2]);
  return buf;
}

// ---- demand series ----

struct DemandSeries {
  std::vector<int> zone_ids;
  std::vector<std::string> dates;            // ISO, strictly increasing
  std::vector<std::vector<double>> demand;   // [zone][t]
  std::vector<std::string> gap_dates;        // missing calendar days, if any

  bool has_gaps() const { return !gap_dates.empty(); }

  std::size_t zone_pos(int zone_id) const {
    for (std::size_t i = 0; i < zone_ids.size(); ++i)
      if (zone_ids[i] == zone_id) return i;
    throw std::out_of_range("demand series has no zone " +
                            std::to_string(zone_id));
  }

  double max_demand(int zone_id) const {
    const auto& v = demand[zone_pos(zone_id)];
    return *std::max_element(v.begin(), v.end());
  }
};

// CSV schema: header `date,zone,demand_mw`, ISO dates, integer zone ids.
// Missing calendar days are reported through gap_dates; malformed content
// throws ParseError with the offending line number.
inline DemandSeries load_demand_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,zone,demand_mw")
    throw ParseError("expected header date,zone,demand_mw", line_no);

  struct Row {
    long day;
    std::string date;
    int zone;
    double mw;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string date_s, zone_s, mw_s;
    if (!std::getline(ss, date_s, ',') || !std::getline(ss, zone_s, ',') ||
        !std::getline(ss, mw_s))
      throw ParseError("expected 3 comma-separated fields", line_no);
    int y, m, d;
    if (!parse_iso_date(date_s, y, m, d))
      throw ParseError("bad date '" + date_s + "'", line_no);
    int zone;
    double mw;
    try {
      std::size_t used = 0;
      zone = std::stoi(zone_s, &used);
      if (used != zone_s.size()) throw std::invalid_argument(zone_s);
      mw = std::stod(mw_s, &used);
      if (used != mw_s.size()) throw std::invalid_argument(mw_s);
    } catch (const std::exception&) {
      throw ParseError("bad numeric field", line_no);
    }
    if (!std::isfinite(mw) || mw < 0.0)
      throw ParseError("demand must be finite and non-negative", line_no);
    rows.push_back(Row{days_from_civil(y, m, d), date_s, zone, mw});
  }
  if (rows.empty()) throw ParseError("no data rows", line_no);

  DemandSeries series;
  for (const auto& r : rows)
    if (std::find(series.zone_ids.begin(), series.zone_ids.end(), r.zone) ==
        series.zone_ids.end())
      series.zone_ids.push_back(r.zone);
  std::sort(series.zone_ids.begin(), series.zone_ids.end());

  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.day < b.day; });
  std::vector<long> days;
  for (const auto& r : rows)
    if (days.empty() || days.back() != r.day) days.push_back(r.day);

  series.demand.assign(series.zone_ids.size(),
                       std::vector<double>(days.size(),
                                           std::numeric_limits<double>::quiet_NaN()));
  for (const auto& r : rows) {
    const std::size_t t =
        std::lower_bound(days.begin(), days.end(), r.day) - days.begin();
    const std::size_t z = series.zone_pos(r.zone);
    if (!std::isnan(series.demand[z][t]))
      throw ParseError("duplicate (date, zone) row for " + r.date);
    series.demand[z][t] = r.mw;
  }
  for (std::size_t z = 0; z < series.zone_ids.size(); ++z)
    for (std::size_t t = 0; t < days.size(); ++t)
      if (std::isnan(series.demand[z][t]))
        throw ParseError("zone " + std::to_string(series.zone_ids[z]) +
                         " missing a row for " + format_iso_date(days[t]));
  series.dates.reserve(days.size());
  for (long d : days) series.dates.push_back(format_iso_date(d));
  for (std::size_t t = 0; t + 1 < days.size(); ++t)
    for (long missing = days[t] + 1; missing < days[t + 1]; ++missing)
      series.gap_dates.push_back(format_iso_date(missing));
  return series;
}

inline void write_demand_csv(const DemandSeries& series,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "date,zone,demand_mw\n";
  char buf[64];
  for (std::size_t t = 0; t < series.dates.size(); ++t)
    for (std::size_t z = 0; z < series.zone_ids.size(); ++z) {
      std::snprintf(buf, sizeof buf, "%.10g", series.demand[z][t]);
      out << series.dates[t] << ',' << series.zone_ids[z] << ',' << buf
          << '\n';
    }
}

/// Linear-interpolation empirical quantile (type 7) of unsorted values.
inline double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

struct DemandQuantiles {
  double min = 0.0, q25 = 0.0, q75 = 0.0, max = 0.0;
};

// Seeded synthetic demand for one zone. Spiky profiles (min == q25 == q75 <
// max) become a near-constant series with rare spikes at the maximum; all
// other profiles use a seasonal sinusoid remapped monotonically onto the
// piecewise-linear quantile function.
inline std::vector<double> synth_demand_values(const DemandQuantiles& q,
                                               int days, std::uint64_t seed) {
  if (days < 30) throw std::invalid_argument("synth_demand needs days >= 30");
  if (!(q.min <= q.q25 && q.q25 <= q.q75 && q.q75 <= q.max))
    throw std::invalid_argument("quantile spec not monotone");
  Rng rng(seed);
  std::vector<double> values(days);
  if (q.min == q.q25 && q.q25 == q.q75) {
    std::vector<int> spikes;
    for (int t = 0; t < days; ++t)
      if (rng.uniform() < 0.08) spikes.push_back(t);
    if (spikes.empty() && q.max > q.min)
      spikes.push_back(static_cast<int>(rng.uniform_int(days)));
    if (static_cast<int>(spikes.size()) > days / 5)
      spikes.resize(days / 5);
    std::fill(values.begin(), values.end(), q.q25);
    for (int t : spikes) values[t] = q.max;
    return values;
  }
  std::vector<double> raw(days);
  for (int t = 0; t < days; ++t)
    raw[t] = std::sin(2.0 * M_PI * t / 30.0) +
             0.5 * std::sin(2.0 * M_PI * t / 7.0) + rng.normal(0.0, 0.5);
  std::vector<std::size_t> order(days);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  auto target = [&](double p) {
    if (p <= 0.25)
      return q.min + (q.q25 - q.min) * (p / 0.25);
    if (p <= 0.75)
      return q.q25 + (q.q75 - q.q25) * ((p - 0.25) / 0.5);
    return q.q75 + (q.max - q.q75) * ((p - 0.75) / 0.25);
  };
  for (int r = 0; r < days; ++r)
    values[order[r]] = target(static_cast<double>(r) / (days - 1));
  return values;
}

inline DemandSeries synth_demand(int zone_id, const DemandQuantiles& q,
                                 int days, std::uint64_t seed,
                                 const std::string& start_date = "2024-01-01") {
  int y, m, d;
  if (!parse_iso_date(start_date, y, m, d))
    throw std::invalid_argument("bad start date " + start_date);
  const long day0 = days_from_civil(y, m, d);
  DemandSeries series;
  series.zone_ids = {zone_id};
  series.demand = {synth_demand_values(q, days, seed)};
  series.dates.reserve(days);
  for (int t = 0; t < days; ++t)
    series.dates.push_back(format_iso_date(day0 + t));
  return series;
}

// ---- scenario configuration ----

struct ZoneConfig {
  int id = 0;
  std::string name;
  double export_limit = 0.0;
  double core_portion = 0.0;
  DemandQuantiles quantiles;
};

struct ProducerConfig {
  int id = 0;
  int zone = 0;
  double capacity_max = 0.0;
  double price_min = 0.0;
  std::optional<double> price_max;     // default: scenario price cap
  std::optional<double> capacity_min;  // default: scenario capacity floor
  std::optional<int> max_bids;         // default: scenario max bids
};

struct GaussSeidelSettings {
  double epsilon = 1e-4;
  int max_sweeps = 100;
  double tau0 = 1.0;
  double tau_floor = 1e-3;
  std::string order = "ascending";  // or "randomized"
  std::uint64_t seed = 0;
};

struct PotentialSettings {
  int starts = 4;
  double penalty_start = 10.0;
  double penalty_growth = 10.0;
  double penalty_end = 1e5;
  int iterations = 400;
  std::uint64_t seed = 7;
};

struct ScenarioConfig {
  int version = 1;
  std::string name = "scenario";
  double price_cap = 100.0;
  double capacity_floor = 5.0;
  int max_bids = 5;
  std::vector<ZoneConfig> zones;
  std::vector<ProducerConfig> producers;
  std::string demand_source = "synthetic";  // or "csv"
  std::string demand_csv;
  int demand_days = 60;
  std::uint64_t demand_seed = 42;
  std::string start_date = "2024-01-01";
  std::optional<double> coupling_cg;  // E_big = cg * max demand of small zone
  std::optional<double> coupling_ca;  // E_small = ca * max demand of big zone
  GaussSeidelSettings gauss_seidel;
  PotentialSettings potential;
  MarlConfig marl;
};

/// The two-zone Germany-Austria desk benchmark with its eight producers.
inline ScenarioConfig benchmark_config() {
  ScenarioConfig cfg;
  cfg.name = "germany-austria";
  cfg.zones = {
      ZoneConfig{0, "germany", 80.0, 0.0,
                 DemandQuantiles{1745.0, 1898.0, 1988.0, 2103.0}},
      ZoneConfig{1, "austria", 80.0, 100.0,
                 DemandQuantiles{200.0, 200.0, 200.0, 225.0}},
  };
  const int zp[8] = {0, 0, 1, 1, 0, 0, 0, 1};
  const double cap[8] = {700, 700, 150, 150, 650, 600, 850, 350};
  const double pmin[8] = {7, 7, 3, 3, 6, 5, 8, 4};
  for (int i = 0; i < 8; ++i)
    cfg.producers.push_back(
        ProducerConfig{i, zp[i], cap[i], pmin[i], {}, {}, {}});
  return cfg;
}

namespace detail {

inline void expect_keys(const nlohmann::json& j,
                        std::initializer_list<const char*> allowed,
                        const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok)
      throw std::runtime_error("unknown key '" + it.key() + "' in " + context);
  }
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["version"] = cfg.version;
  j["name"] = cfg.name;
  j["price_cap"] = cfg.price_cap;
  j["capacity_floor"] = cfg.capacity_floor;
  j["max_bids"] = cfg.max_bids;
  for (const auto& z : cfg.zones) {
    nlohmann::json zj;
    zj["id"] = z.id;
    zj["name"] = z.name;
    zj["export_limit"] = z.export_limit;
    zj["core_portion"] = z.core_portion;
    zj["demand_quantiles"] = {{"min", z.quantiles.min},
                              {"q25", z.quantiles.q25},
                              {"q75", z.quantiles.q75},
                              {"max", z.quantiles.max}};
    j["zones"].push_back(zj);
  }
  for (const auto& p : cfg.producers) {
    nlohmann::json pj;
    pj["id"] = p.id;
    pj["zone"] = p.zone;
    pj["capacity_max"] = p.capacity_max;
    pj["price_min"] = p.price_min;
    if (p.price_max) pj["price_max"] = *p.price_max;
    if (p.capacity_min) pj["capacity_min"] = *p.capacity_min;
    if (p.max_bids) pj["max_bids"] = *p.max_bids;
    j["producers"].push_back(pj);
  }
  j["demand"] = {{"source", cfg.demand_source},
                 {"days", cfg.demand_days},
                 {"seed", cfg.demand_seed},
                 {"start_date", cfg.start_date}};
  if (cfg.demand_source == "csv") j["demand"]["path"] = cfg.demand_csv;
  if (cfg.coupling_cg || cfg.coupling_ca) {
    nlohmann::json cj;
    if (cfg.coupling_cg) cj["c_g"] = *cfg.coupling_cg;
    if (cfg.coupling_ca) cj["c_a"] = *cfg.coupling_ca;
    j["coupling"] = cj;
  }
  j["gauss_seidel"] = {{"epsilon", cfg.gauss_seidel.epsilon},
                       {"max_sweeps", cfg.gauss_seidel.max_sweeps},
                       {"tau0", cfg.gauss_seidel.tau0},
                       {"tau_floor", cfg.gauss_seidel.tau_floor},
                       {"order", cfg.gauss_seidel.order},
                       {"seed", cfg.gauss_seidel.seed}};
  j["potential"] = {{"starts", cfg.potential.starts},
                    {"penalty_start", cfg.potential.penalty_start},
                    {"penalty_growth", cfg.potential.penalty_growth},
                    {"penalty_end", cfg.potential.penalty_end},
                    {"iterations", cfg.potential.iterations},
                    {"seed", cfg.potential.seed}};
  nlohmann::json mj;
  mj["hidden"] = cfg.marl.hidden;
  mj["hidden_layers"] = cfg.marl.hidden_layers;
  mj["actor_lr"] = cfg.marl.actor_lr;
  mj["critic_lr"] = cfg.marl.critic_lr;
  mj["gamma"] = cfg.marl.gamma;
  mj["tau_target"] = cfg.marl.tau_target;
  mj["batch"] = cfg.marl.batch;
  mj["buffer"] = cfg.marl.buffer_capacity;
  mj["noise_sigma"] = cfg.marl.noise_sigma;
  mj["perturbation"] = cfg.marl.perturbation;
  mj["reward"] =
      cfg.marl.reward == RewardKind::ShapedProfit ? "shaped" : "profit";
  mj["beta"] = cfg.marl.beta;
  mj["episodes"] = cfg.marl.episodes;
  mj["seed"] = cfg.marl.seed;
  if (cfg.marl.learning_producers.empty())
    mj["learning_producers"] = "all";
  else
    mj["learning_producers"] = cfg.marl.learning_producers;
  j["marl"] = mj;
  return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  using detail::expect_keys;
  expect_keys(j,
              {"version", "name", "price_cap", "capacity_floor", "max_bids",
               "zones", "producers", "demand", "coupling", "gauss_seidel",
               "potential", "marl"},
              "scenario");
  ScenarioConfig cfg;
  cfg.version = j.at("version").get<int>();
  if (cfg.version != 1)
    throw std::runtime_error("unsupported scenario version " +
                             std::to_string(cfg.version));
  cfg.name = j.value("name", std::string("scenario"));
  cfg.price_cap = j.value("price_cap", 100.0);
  cfg.capacity_floor = j.value("capacity_floor", 5.0);
  cfg.max_bids = j.value("max_bids", 5);
  if (!j.contains("zones") || !j.contains("producers"))
    throw std::runtime_error("scenario needs zones and producers");
  cfg.zones.clear();
  for (const auto& zj : j.at("zones")) {
    expect_keys(zj,
                {"id", "name", "export_limit", "core_portion",
                 "demand_quantiles"},
                "zone");
    ZoneConfig z;
    z.id = zj.at("id").get<int>();
    z.name = zj.value("name", "zone" + std::to_string(z.id));
    z.export_limit = zj.at("export_limit").get<double>();
    z.core_portion = zj.at("core_portion").get<double>();
    const auto& qj = zj.at("demand_quantiles");
    expect_keys(qj, {"min", "q25", "q75", "max"}, "demand_quantiles");
    z.quantiles = DemandQuantiles{qj.at("min").get<double>(),
                                  qj.at("q25").get<double>(),
                                  qj.at("q75").get<double>(),
                                  qj.at("max").get<double>()};
    cfg.zones.push_back(z);
  }
  cfg.producers.clear();
  for (const auto& pj : j.at("producers")) {
    expect_keys(pj,
                {"id", "zone", "capacity_max", "price_min", "price_max",
                 "capacity_min", "max_bids"},
                "producer");
    ProducerConfig p;
    p.id = pj.at("id").get<int>();
    p.zone = pj.at("zone").get<int>();
    p.capacity_max = pj.at("capacity_max").get<double>();
    p.price_min = pj.at("price_min").get<double>();
    if (pj.contains("price_max")) p.price_max = pj.at("price_max").get<double>();
    if (pj.contains("capacity_min"))
      p.capacity_min = pj.at("capacity_min").get<double>();
    if (pj.contains("max_bids")) p.max_bids = pj.at("max_bids").get<int>();
    cfg.producers.push_back(p);
  }
  if (j.contains("demand")) {
    const auto& dj = j.at("demand");
    expect_keys(dj, {"source", "days", "seed", "start_date", "path"},
                "demand");
    cfg.demand_source = dj.value("source", std::string("synthetic"));
    if (cfg.demand_source != "synthetic" && cfg.demand_source != "csv")
      throw std::runtime_error("demand source must be synthetic or csv");
    cfg.demand_days = dj.value("days", 60);
    cfg.demand_seed = dj.value("seed", std::uint64_t{42});
    cfg.start_date = dj.value("start_date", std::string("2024-01-01"));
    cfg.demand_csv = dj.value("path", std::string());
    if (cfg.demand_source == "csv" && cfg.demand_csv.empty())
      throw std::runtime_error("csv demand source needs a path");
  }
  if (j.contains("coupling")) {
    const auto& cj = j.at("coupling");
    expect_keys(cj, {"c_g", "c_a"}, "coupling");
    if (cj.contains("c_g")) cfg.coupling_cg = cj.at("c_g").get<double>();
    if (cj.contains("c_a")) cfg.coupling_ca = cj.at("c_a").get<double>();
  }
  if (j.contains("gauss_seidel")) {
    const auto& gj = j.at("gauss_seidel");
    expect_keys(gj, {"epsilon", "max_sweeps", "tau0", "tau_floor", "order",
                     "seed"},
                "gauss_seidel");
    cfg.gauss_seidel.epsilon = gj.value("epsilon", 1e-4);
    cfg.gauss_seidel.max_sweeps = gj.value("max_sweeps", 100);
    cfg.gauss_seidel.tau0 = gj.value("tau0", 1.0);
    cfg.gauss_seidel.tau_floor = gj.value("tau_floor", 1e-3);
    cfg.gauss_seidel.order = gj.value("order", std::string("ascending"));
    cfg.gauss_seidel.seed = gj.value("seed", std::uint64_t{0});
    if (cfg.gauss_seidel.order != "ascending" &&
        cfg.gauss_seidel.order != "randomized")
      throw std::runtime_error("order must be ascending or randomized");
  }
  if (j.contains("potential")) {
    const auto& pj = j.at("potential");
    expect_keys(pj, {"starts", "penalty_start", "penalty_growth",
                     "penalty_end", "iterations", "seed"},
                "potential");
    cfg.potential.starts = pj.value("starts", 4);
    cfg.potential.penalty_start = pj.value("penalty_start", 10.0);
    cfg.potential.penalty_growth = pj.value("penalty_growth", 10.0);
    cfg.potential.penalty_end = pj.value("penalty_end", 1e5);
    cfg.potential.iterations = pj.value("iterations", 400);
    cfg.potential.seed = pj.value("seed", std::uint64_t{7});
  }
  if (j.contains("marl")) {
    const auto& mj = j.at("marl");
    expect_keys(mj,
                {"hidden", "hidden_layers", "actor_lr", "critic_lr", "gamma",
                 "tau_target", "batch", "buffer", "noise_sigma",
                 "perturbation", "reward", "beta", "episodes", "seed",
                 "learning_producers"},
                "marl");
    cfg.marl.hidden = mj.value("hidden", 64);
    cfg.marl.hidden_layers = mj.value("hidden_layers", 2);
    cfg.marl.actor_lr = mj.value("actor_lr", 1e-4);
    cfg.marl.critic_lr = mj.value("critic_lr", 1e-3);
    cfg.marl.gamma = mj.value("gamma", 0.95);
    cfg.marl.tau_target = mj.value("tau_target", 0.01);
    cfg.marl.batch = mj.value("batch", 128);
    cfg.marl.buffer_capacity = mj.value("buffer", std::size_t{100000});
    cfg.marl.noise_sigma = mj.value("noise_sigma", 0.1);
    cfg.marl.perturbation = mj.value("perturbation", 0.05);
    const std::string reward = mj.value("reward", std::string("shaped"));
    if (reward == "shaped")
      cfg.marl.reward = RewardKind::ShapedProfit;
    else if (reward == "profit")
      cfg.marl.reward = RewardKind::PureProfit;
    else
      throw std::runtime_error("reward must be shaped or profit");
    cfg.marl.beta = mj.value("beta", 0.1);
    cfg.marl.episodes = mj.value("episodes", 200);
    cfg.marl.seed = mj.value("seed", std::uint64_t{1});
    if (mj.contains("learning_producers") &&
        mj.at("learning_producers").is_array())
      cfg.marl.learning_producers =
          mj.at("learning_producers").get<std::vector<int>>();
  }
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario parse error: " + std::string(e.what()));
  }
  return scenario_from_json(j);
}

inline void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scenario " + path);
  out << scenario_to_json(cfg).dump(2) << '\n';
}

/// Instance template from a scenario: demand defaults to each zone's
/// quantile maximum (per-day instances override it from the series).
inline MarketInstance build_benchmark(const ScenarioConfig& cfg) {
  MarketInstance inst;
  for (const auto& z : cfg.zones)
    inst.zones.push_back(
        Zone{z.id, z.quantiles.max, z.export_limit, z.core_portion});
  for (const auto& p : cfg.producers) {
    Producer prod;
    prod.id = p.id;
    prod.zone_id = p.zone;
    prod.capacity_max = p.capacity_max;
    prod.capacity_min = p.capacity_min.value_or(cfg.capacity_floor);
    prod.price_min = p.price_min;
    prod.price_max = p.price_max.value_or(cfg.price_cap);
    prod.max_bids = p.max_bids.value_or(cfg.max_bids);
    inst.producers.push_back(prod);
    inst.ladders.push_back(
        BidLadder{prod.id, {Bid{prod.capacity_max, prod.price_min}}});
  }
  if (cfg.coupling_cg || cfg.coupling_ca) {
    if (inst.zones.size() != 2)
      throw std::runtime_error("coupling factors need exactly two zones");
    const bool first_big =
        cfg.zones[0].quantiles.max >= cfg.zones[1].quantiles.max;
    const std::size_t big = first_big ? 0 : 1;
    const std::size_t small = 1 - big;
    if (cfg.coupling_cg)
      inst.zones[big].export_limit =
          *cfg.coupling_cg * cfg.zones[small].quantiles.max;
    if (cfg.coupling_ca)
      inst.zones[small].export_limit =
          *cfg.coupling_ca * cfg.zones[big].quantiles.max;
  }
  ValidationResult v = inst.validate();
  if (!v.ok())
    throw std::runtime_error("scenario invalid: " + v.violations.front());
  for (const auto& p : inst.producers)
    if (p.capacity_min * p.max_bids > p.capacity_max)
      throw std::runtime_error(
          "producer " + std::to_string(p.id) +
          ": max_bids * capacity_min exceeds capacity_max");
  return inst;
}

inline DemandSeries scenario_demand(const ScenarioConfig& cfg) {
  if (cfg.demand_source == "csv") return load_demand_csv(cfg.demand_csv);
  DemandSeries series;
  Rng master(cfg.demand_seed);
  int y, m, d;
  if (!parse_iso_date(cfg.start_date, y, m, d))
    throw std::runtime_error("bad start date " + cfg.start_date);
  const long day0 = days_from_civil(y, m, d);
  for (int t = 0; t < cfg.demand_days; ++t)
    series.dates.push_back(format_iso_date(day0 + t));
  for (std::size_t z = 0; z < cfg.zones.size(); ++z) {
    series.zone_ids.push_back(cfg.zones[z].id);
    series.demand.push_back(synth_demand_values(
        cfg.zones[z].quantiles, cfg.demand_days,
        master.child(z).next()));
  }
  return series;
}

/// Demand matrix aligned with the instance's zone order.
inline std::vector<std::vector<double>> demand_matrix(
    const DemandSeries& series, const MarketInstance& tmpl) {
  std::vector<std::vector<double>> out;
  out.reserve(tmpl.zones.size());
  for (const auto& z : tmpl.zones)
    out.push_back(series.demand[series.zone_pos(z.id)]);
  return out;
}

inline MarketInstance instance_for_day(const MarketInstance& tmpl,
                                       const DemandSeries& series,
                                       const std::string& date) {
  const auto it = std::find(series.dates.begin(), series.dates.end(), date);
  if (it == series.dates.end())
    throw std::runtime_error("date " + date + " not in demand series");
  const std::size_t t = it - series.dates.begin();
  MarketInstance inst = tmpl;
  for (auto& z : inst.zones)
    z.demand = series.demand[series.zone_pos(z.id)][t];
  return inst;
}

struct CouplingPoint {
  double c_big = 0.0;   // factor for the larger zone's export limit
  double c_small = 0.0; // factor for the smaller zone's export limit
  MarketInstance tmpl;
};

// Paired sweep over coupling factors: point i uses
// E_big = c_big_i * max demand(small zone), E_small = c_small_i * max
// demand(big zone); the two ranges are zipped into one series of couples.
inline std::vector<CouplingPoint> coupling_grid(
    double cg_lo, double cg_hi, double ca_lo, double ca_hi, int steps,
    const DemandSeries& series, const MarketInstance& tmpl) {
  if (tmpl.zones.size() != 2)
    throw std::invalid_argument("coupling grid needs exactly two zones");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (cg_lo < 0 || ca_lo < 0)
    throw std::invalid_argument("coupling factors must be non-negative");
  const double max0 = series.max_demand(tmpl.zones[0].id);
  const double max1 = series.max_demand(tmpl.zones[1].id);
  const std::size_t big = max0 >= max1 ? 0 : 1;
  const std::size_t small = 1 - big;
  const double big_max = big == 0 ? max0 : max1;
  const double small_max = big == 0 ? max1 : max0;

  std::vector<CouplingPoint> grid;
  grid.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const double f = steps > 1 ? static_cast<double>(i) / (steps - 1) : 0.0;
    CouplingPoint pt;
    pt.c_big = cg_lo + f * (cg_hi - cg_lo);
    pt.c_small = ca_lo + f * (ca_hi - ca_lo);
    pt.tmpl = tmpl;
    pt.tmpl.zones[big].export_limit = pt.c_big * small_max;
    pt.tmpl.zones[small].export_limit = pt.c_small * big_max;
    grid.push_back(std::move(pt));
  }
  return grid;
}

}  // namespace zam
