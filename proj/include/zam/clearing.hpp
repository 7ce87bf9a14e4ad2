#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "zam/lp.hpp"
#include "zam/market.hpp"

namespace zam {

struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Lemma-style feasibility verdict: per zone, (i) the zone can cover its own
// demand with headroom, or (ii) the other zones' surplus covers the deficit
// and the deficit fits through their export limits.
struct FeasibilityVerdict {
  std::vector<bool> condition_i;
  std::vector<bool> condition_ii;
  bool overall = false;
};

inline FeasibilityVerdict check_slater(const MarketInstance& instance) {
  const std::size_t Z = instance.zones.size();
  std::vector<double> zone_capacity(Z, 0.0);
  for (const auto& p : instance.producers)
    zone_capacity[instance.zone_index(p.zone_id)] += p.capacity_max;

  FeasibilityVerdict v;
  v.condition_i.resize(Z);
  v.condition_ii.resize(Z);
  v.overall = true;
  for (std::size_t z = 0; z < Z; ++z) {
    const double deficit = instance.zones[z].demand - zone_capacity[z];
    v.condition_i[z] = zone_capacity[z] > instance.zones[z].demand;
    double surplus_others = 0.0, export_others = 0.0;
    for (std::size_t w = 0; w < Z; ++w) {
      if (w == z) continue;
      surplus_others += zone_capacity[w] - instance.zones[w].demand;
      export_others += instance.zones[w].export_limit;
    }
    v.condition_ii[z] = surplus_others > deficit && deficit <= export_others;
    v.overall = v.overall && (v.condition_i[z] || v.condition_ii[z]);
  }
  return v;
}

enum class ClearingRowKind { Demand, Capacity, Export, Core };

struct ClearingRowLabel {
  ClearingRowKind kind;
  std::size_t index;  // zone index, or global bid index for Capacity
};

// The market operator's LP over accepted fractions x[b, z] with the
// structural rows stacked demand / capacity-limit / export / core
// (3Z + B rows); the [0, 1] box is carried as variable bounds.
struct LpStandardForm {
  LpProblem lp;
  std::vector<ClearingRowLabel> labels;
  std::size_t num_zones = 0;
  std::size_t num_bids = 0;
};

inline LpStandardForm build_lp(const MarketInstance& instance) {
  const std::size_t Z = instance.zones.size();
  const std::size_t B = instance.total_bids();
  const std::size_t nvars = B * Z;
  const auto offsets = instance.bid_offsets();

  LpStandardForm form;
  form.num_zones = Z;
  form.num_bids = B;
  form.lp.cost.assign(nvars, 0.0);
  form.lp.upper.assign(nvars, 1.0);
  for (std::size_t n = 0; n < instance.producers.size(); ++n)
    for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k) {
      const Bid& bid = instance.ladders[n].bids[k];
      for (std::size_t z = 0; z < Z; ++z)
        form.lp.cost[(offsets[n] + k) * Z + z] = bid.capacity * bid.price;
    }

  auto add_row = [&](ClearingRowKind kind, std::size_t index, char sense,
                     double rhs) -> std::vector<double>& {
    form.lp.rows.push_back(LpRow{std::vector<double>(nvars, 0.0), sense, rhs});
    form.labels.push_back(ClearingRowLabel{kind, index});
    return form.lp.rows.back().coeffs;
  };

  for (std::size_t z = 0; z < Z; ++z) {
    auto& row = add_row(ClearingRowKind::Demand, z, '>',
                        instance.zones[z].demand);
    for (std::size_t n = 0; n < instance.producers.size(); ++n)
      for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k)
        row[(offsets[n] + k) * Z + z] = instance.ladders[n].bids[k].capacity;
  }
  for (std::size_t n = 0; n < instance.producers.size(); ++n)
    for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k) {
      auto& row = add_row(ClearingRowKind::Capacity, offsets[n] + k, '<', 1.0);
      for (std::size_t z = 0; z < Z; ++z) row[(offsets[n] + k) * Z + z] = 1.0;
    }
  for (std::size_t z = 0; z < Z; ++z) {
    auto& row = add_row(ClearingRowKind::Export, z, '<',
                        instance.zones[z].export_limit);
    for (std::size_t n = 0; n < instance.producers.size(); ++n) {
      if (instance.zone_index(instance.producers[n].zone_id) != z) continue;
      for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k)
        for (std::size_t w = 0; w < Z; ++w)
          if (w != z)
            row[(offsets[n] + k) * Z + w] =
                instance.ladders[n].bids[k].capacity;
    }
  }
  for (std::size_t z = 0; z < Z; ++z) {
    auto& row =
        add_row(ClearingRowKind::Core, z, '>', instance.zones[z].core_portion);
    for (std::size_t n = 0; n < instance.producers.size(); ++n) {
      if (instance.zone_index(instance.producers[n].zone_id) != z) continue;
      for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k)
        row[(offsets[n] + k) * Z + z] = instance.ladders[n].bids[k].capacity;
    }
  }
  return form;
}

namespace detail {

inline ClearingResult result_from_solution(const MarketInstance& instance,
                                           const LpStandardForm& form,
                                           const std::vector<double>& x,
                                           const LpSolution& dual_source) {
  const std::size_t Z = form.num_zones;
  const std::size_t B = form.num_bids;
  ClearingResult res;
  res.fractions = x;
  res.lambda.assign(Z, 0.0);
  res.mu.assign(B, 0.0);
  res.sigma.assign(Z, 0.0);
  res.delta.assign(Z, 0.0);
  for (std::size_t i = 0; i < form.labels.size(); ++i) {
    const auto& label = form.labels[i];
    const double y = dual_source.row_dual[i];
    switch (label.kind) {
      case ClearingRowKind::Demand:
        res.lambda[label.index] = std::max(0.0, y);
        break;
      case ClearingRowKind::Capacity:
        res.mu[label.index] = std::max(0.0, -y);
        break;
      case ClearingRowKind::Export:
        res.sigma[label.index] = std::max(0.0, -y);
        break;
      case ClearingRowKind::Core:
        res.delta[label.index] = std::max(0.0, y);
        break;
    }
  }
  res.eta_lower.resize(B * Z);
  res.eta_upper.resize(B * Z);
  for (std::size_t v = 0; v < B * Z; ++v) {
    res.eta_lower[v] = std::max(0.0, dual_source.reduced_cost[v]);
    res.eta_upper[v] = std::max(0.0, -dual_source.reduced_cost[v]);
  }
  res.total_cost = 0.0;
  for (std::size_t v = 0; v < B * Z; ++v)
    res.total_cost += form.lp.cost[v] * x[v];
  res.revenue = per_producer_revenue(instance, res.fractions);
  return res;
}

}  // namespace detail

// Solve the clearing LP. With a tiebreak producer, a second lexicographic
// solve picks, among cost-optimal solutions, one minimizing that producer's
// revenue (the pessimistic selection); duals always come from the first
// solve, which certifies cost optimality.
inline ClearingResult clear_market(const MarketInstance& instance,
                                   std::optional<int> tiebreak_producer = {}) {
  LpStandardForm form = build_lp(instance);
  LpSolution first = solve_lp(form.lp);
  if (first.status == LpStatus::Infeasible)
    throw InfeasibleError("market clearing infeasible");
  if (first.status != LpStatus::Optimal)
    throw std::runtime_error("market clearing LP did not reach optimality");

  std::vector<double> x = first.x;
  if (tiebreak_producer && instance.producers.size() > 1) {
    const std::size_t focal =
        instance.producer_index(*tiebreak_producer);
    const std::size_t Z = form.num_zones;
    const auto offsets = instance.bid_offsets();
    LpProblem second = form.lp;
    // pin the cleared cost, then minimize the focal producer's revenue
    second.rows.push_back(LpRow{form.lp.cost, '=', first.objective});
    second.cost.assign(second.cost.size(), 0.0);
    for (std::size_t k = 0; k < instance.ladders[focal].bids.size(); ++k) {
      const Bid& bid = instance.ladders[focal].bids[k];
      for (std::size_t z = 0; z < Z; ++z)
        second.cost[(offsets[focal] + k) * Z + z] = bid.capacity * bid.price;
    }
    LpSolution pess = solve_lp(second);
    if (pess.status == LpStatus::Optimal) x = pess.x;
  }
  return detail::result_from_solution(instance, form, x, first);
}

// One clearing round condensed for reporting: total payment, zonal prices,
// producer revenues, and the per-zone payment split under both readings
// (attributed to the supplying producer's zone, or to the consuming zone).
struct DayOutcome {
  double total_cost = 0.0;
  std::vector<double> lambda;
  std::vector<double> revenue;
  std::vector<double> supplier_zone_cost;
  std::vector<double> consumer_zone_cost;
};

inline DayOutcome day_outcome(const MarketInstance& instance,
                              const ClearingResult& res) {
  const std::size_t Z = instance.zones.size();
  DayOutcome day;
  day.total_cost = res.total_cost;
  day.lambda = res.lambda;
  day.revenue = res.revenue;
  day.supplier_zone_cost.assign(Z, 0.0);
  day.consumer_zone_cost.assign(Z, 0.0);
  const auto offsets = instance.bid_offsets();
  for (std::size_t n = 0; n < instance.producers.size(); ++n) {
    const std::size_t zn = instance.zone_index(instance.producers[n].zone_id);
    day.supplier_zone_cost[zn] += res.revenue[n];
    for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k) {
      const Bid& bid = instance.ladders[n].bids[k];
      for (std::size_t z = 0; z < Z; ++z)
        day.consumer_zone_cost[z] +=
            res.fractions[(offsets[n] + k) * Z + z] * bid.capacity * bid.price;
    }
  }
  return day;
}

struct KktReport {
  double stationarity_max = 0.0;
  double complementarity_max = 0.0;
  double primal_violation_max = 0.0;

  bool passes(double tol = 1e-6) const {
    return stationarity_max <= tol && complementarity_max <= tol &&
           primal_violation_max <= tol;
  }
};

// Residuals of the clearing KKT system at (x, duals): stationarity of the
// Lagrangian in every fraction, all slackness products, and primal/dual
// feasibility violations.
inline KktReport kkt_residual(const MarketInstance& instance,
                              const ClearingResult& result) {
  const std::size_t Z = instance.zones.size();
  const std::size_t B = instance.total_bids();
  if (result.fractions.size() != B * Z)
    throw std::invalid_argument("result shape does not match instance");
  const auto offsets = instance.bid_offsets();

  KktReport rep;
  std::vector<double> supply(Z, 0.0), exported(Z, 0.0), core(Z, 0.0);
  for (std::size_t n = 0; n < instance.producers.size(); ++n) {
    const std::size_t zn = instance.zone_index(instance.producers[n].zone_id);
    for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k) {
      const Bid& bid = instance.ladders[n].bids[k];
      const std::size_t b = offsets[n] + k;
      for (std::size_t z = 0; z < Z; ++z) {
        const double q = result.fractions[b * Z + z] * bid.capacity;
        supply[z] += q;
        if (z == zn)
          core[z] += q;
        else
          exported[zn] += q;
      }
    }
  }

  auto track_primal = [&](double violation) {
    rep.primal_violation_max = std::max(rep.primal_violation_max, violation);
  };
  auto track_comp = [&](double product) {
    rep.complementarity_max =
        std::max(rep.complementarity_max, std::abs(product));
  };

  for (std::size_t z = 0; z < Z; ++z) {
    track_primal(instance.zones[z].demand - supply[z]);
    track_primal(exported[z] - instance.zones[z].export_limit);
    track_primal(instance.zones[z].core_portion - core[z]);
    track_comp(result.lambda[z] * (supply[z] - instance.zones[z].demand));
    track_comp(result.sigma[z] * (exported[z] - instance.zones[z].export_limit));
    track_comp(result.delta[z] * (core[z] - instance.zones[z].core_portion));
    track_primal(-result.lambda[z]);
    track_primal(-result.sigma[z]);
    track_primal(-result.delta[z]);
  }

  for (std::size_t n = 0; n < instance.producers.size(); ++n) {
    const std::size_t zn = instance.zone_index(instance.producers[n].zone_id);
    for (std::size_t k = 0; k < instance.ladders[n].bids.size(); ++k) {
      const Bid& bid = instance.ladders[n].bids[k];
      const std::size_t b = offsets[n] + k;
      double zone_sum = 0.0;
      for (std::size_t z = 0; z < Z; ++z)
        zone_sum += result.fractions[b * Z + z];
      track_primal(zone_sum - 1.0);
      track_comp(result.mu[b] * (zone_sum - 1.0));
      track_primal(-result.mu[b]);
      for (std::size_t z = 0; z < Z; ++z) {
        const double x = result.fractions[b * Z + z];
        track_primal(-x);
        track_primal(x - 1.0);
        track_comp(result.eta_lower[b * Z + z] * x);
        track_comp(result.eta_upper[b * Z + z] * (x - 1.0));
        double grad = bid.capacity * bid.price -
                      result.lambda[z] * bid.capacity + result.mu[b] -
                      result.eta_lower[b * Z + z] +
                      result.eta_upper[b * Z + z];
        if (z == zn)
          grad -= result.delta[zn] * bid.capacity;
        else
          grad += result.sigma[zn] * bid.capacity;
        rep.stationarity_max = std::max(rep.stationarity_max, std::abs(grad));
      }
    }
  }
  return rep;
}

}  // namespace zam
