#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zam {

// A bidding area with its procurement parameters: total requested demand,
// cap on energy exported by the zone's producers, and the portion of demand
// that must be covered from inside the zone.
struct Zone {
  int id = 0;
  double demand = 0.0;        // D_z, MW
  double export_limit = 0.0;  // E_z, MW
  double core_portion = 0.0;  // C_z, MW
};

struct Producer {
  int id = 0;
  int zone_id = 0;
  double capacity_max = 0.0;  // upper capacity per bid and for the ladder sum
  double capacity_min = 0.0;  // per-bid floor
  double price_min = 0.0;     // marginal price
  double price_max = 0.0;     // regulatory cap
  int max_bids = 1;
};

struct Bid {
  double capacity = 0.0;  // MW
  double price = 0.0;     // price units per MW
};

// A producer's strategy: a finite sequence of (capacity, price) pairs,
// at most Producer::max_bids long.
struct BidLadder {
  int producer_id = 0;
  std::vector<Bid> bids;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

struct MarketInstance {
  std::vector<Zone> zones;
  std::vector<Producer> producers;
  std::vector<BidLadder> ladders;  // one per producer, same order

  std::size_t zone_index(int zone_id) const {
    for (std::size_t i = 0; i < zones.size(); ++i)
      if (zones[i].id == zone_id) return i;
    throw std::out_of_range("unknown zone id " + std::to_string(zone_id));
  }

  std::size_t producer_index(int producer_id) const {
    for (std::size_t i = 0; i < producers.size(); ++i)
      if (producers[i].id == producer_id) return i;
    throw std::out_of_range("unknown producer id " +
                            std::to_string(producer_id));
  }

  /// Offset of producer n's first bid in the global bid numbering.
  std::vector<std::size_t> bid_offsets() const {
    std::vector<std::size_t> off(producers.size() + 1, 0);
    for (std::size_t n = 0; n < producers.size(); ++n)
      off[n + 1] = off[n] + ladders[n].bids.size();
    return off;
  }

  std::size_t total_bids() const {
    std::size_t b = 0;
    for (const auto& l : ladders) b += l.bids.size();
    return b;
  }

  ValidationResult validate() const;
};

// Accepted fractions plus the dual certificate of the clearing LP.
// fractions are indexed bid-major: value for (global bid b, zone index z)
// lives at b * Z + z.
struct ClearingResult {
  std::vector<double> fractions;      // size B * Z
  std::vector<double> lambda;         // per zone, demand duals
  std::vector<double> mu;             // per global bid, capacity-limit duals
  std::vector<double> sigma;          // per zone, export duals
  std::vector<double> delta;          // per zone, core duals
  std::vector<double> eta_lower;      // per variable, x >= 0 multipliers
  std::vector<double> eta_upper;      // per variable, x <= 1 multipliers
  double total_cost = 0.0;
  std::vector<double> revenue;        // per producer

  double fraction(std::size_t global_bid, std::size_t z, std::size_t Z) const {
    return fractions[global_bid * Z + z];
  }
};

inline ValidationResult validate_ladder(const BidLadder& ladder,
                                        const Producer& producer) {
  ValidationResult res;
  if (ladder.producer_id != producer.id) {
    res.violations.push_back("ladder/producer id mismatch");
    return res;
  }
  if (ladder.bids.size() > static_cast<std::size_t>(producer.max_bids))
    res.violations.push_back("ladder has " +
                             std::to_string(ladder.bids.size()) +
                             " bids, max is " +
                             std::to_string(producer.max_bids));
  double total = 0.0;
  for (std::size_t k = 0; k < ladder.bids.size(); ++k) {
    const Bid& bid = ladder.bids[k];
    if (!std::isfinite(bid.capacity) || !std::isfinite(bid.price)) {
      res.violations.push_back("bid " + std::to_string(k) + " not finite");
      continue;
    }
    if (bid.price < producer.price_min || bid.price > producer.price_max)
      res.violations.push_back("bid " + std::to_string(k) + " price " +
                               std::to_string(bid.price) +
                               " outside price bounds");
    if (bid.capacity < producer.capacity_min ||
        bid.capacity > producer.capacity_max)
      res.violations.push_back("bid " + std::to_string(k) + " capacity " +
                               std::to_string(bid.capacity) +
                               " outside capacity bounds");
    total += bid.capacity;
  }
  if (total > producer.capacity_max * (1.0 + 1e-12))
    res.violations.push_back("ladder capacity sum " + std::to_string(total) +
                             " exceeds capacity_max " +
                             std::to_string(producer.capacity_max));
  return res;
}

inline ValidationResult MarketInstance::validate() const {
  ValidationResult res;
  if (ladders.size() != producers.size())
    res.violations.push_back("ladder count != producer count");
  for (const auto& z : zones) {
    if (!(std::isfinite(z.demand) && std::isfinite(z.export_limit) &&
          std::isfinite(z.core_portion)))
      res.violations.push_back("zone " + std::to_string(z.id) + " not finite");
    if (z.demand < 0 || z.export_limit < 0 || z.core_portion < 0)
      res.violations.push_back("zone " + std::to_string(z.id) +
                               " has negative parameter");
    if (z.core_portion > z.demand)
      res.violations.push_back("zone " + std::to_string(z.id) +
                               " core portion exceeds demand");
  }
  for (std::size_t n = 0; n < producers.size(); ++n) {
    const Producer& p = producers[n];
    bool zone_ok = false;
    for (const auto& z : zones) zone_ok = zone_ok || z.id == p.zone_id;
    if (!zone_ok)
      res.violations.push_back("producer " + std::to_string(p.id) +
                               " references unknown zone");
    if (p.capacity_min < 0 || p.capacity_min > p.capacity_max ||
        p.price_min < 0 || p.price_min > p.price_max || p.max_bids < 1)
      res.violations.push_back("producer " + std::to_string(p.id) +
                               " bounds invalid");
    if (n < ladders.size()) {
      auto lr = validate_ladder(ladders[n], p);
      for (auto& v : lr.violations)
        res.violations.push_back("producer " + std::to_string(p.id) + ": " +
                                 v);
    }
  }
  return res;
}

/// Revenue of one producer given the per-(bid, zone) accepted fractions of
/// its own ladder: sum_k pi_k * delta_k * sum_z x_{k,z}.
inline double producer_revenue(const BidLadder& ladder,
                               std::span<const double> fractions,
                               std::size_t num_zones) {
  if (fractions.size() != ladder.bids.size() * num_zones)
    throw std::invalid_argument("fraction block does not match ladder shape");
  double revenue = 0.0;
  for (std::size_t k = 0; k < ladder.bids.size(); ++k) {
    double zone_sum = 0.0;
    for (std::size_t z = 0; z < num_zones; ++z)
      zone_sum += fractions[k * num_zones + z];
    revenue += ladder.bids[k].price * ladder.bids[k].capacity * zone_sum;
  }
  return revenue;
}

/// Total payment of the market operator; identically the sum of producer
/// revenues.
inline double market_cost(const MarketInstance& instance,
                          std::span<const double> fractions) {
  const std::size_t Z = instance.zones.size();
  if (fractions.size() != instance.total_bids() * Z)
    throw std::invalid_argument("fraction tensor does not match instance");
  double cost = 0.0;
  std::size_t offset = 0;
  for (const auto& ladder : instance.ladders) {
    cost += producer_revenue(
        ladder, fractions.subspan(offset, ladder.bids.size() * Z), Z);
    offset += ladder.bids.size() * Z;
  }
  return cost;
}

inline std::vector<double> per_producer_revenue(
    const MarketInstance& instance, std::span<const double> fractions) {
  const std::size_t Z = instance.zones.size();
  std::vector<double> rev(instance.producers.size(), 0.0);
  std::size_t offset = 0;
  for (std::size_t n = 0; n < instance.ladders.size(); ++n) {
    rev[n] = producer_revenue(
        instance.ladders[n],
        fractions.subspan(offset, instance.ladders[n].bids.size() * Z), Z);
    offset += instance.ladders[n].bids.size() * Z;
  }
  return rev;
}

}  // namespace zam
