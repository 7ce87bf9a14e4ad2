#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zam/clearing.hpp"
#include "zam/equilibrium.hpp"
#include "zam/market.hpp"
#include "zam/nn.hpp"
#include "zam/rng.hpp"

namespace zam {

enum class RewardKind { ShapedProfit, PureProfit };

struct MarlConfig {
  int hidden = 64;
  int hidden_layers = 2;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double gamma = 0.95;
  double tau_target = 0.01;
  int batch = 128;
  std::size_t buffer_capacity = 100000;
  double noise_sigma = 0.1;
  double perturbation = 0.05;  // zonal perturbation range, uniform +-
  RewardKind reward = RewardKind::ShapedProfit;
  double beta = 0.1;  // weight of the overbidding penalty in the reward
  int episodes = 200;
  std::uint64_t seed = 1;
  std::vector<int> learning_producers;  // producer ids; empty = all learn
};

struct EnvState {
  std::vector<double> features;  // all scaled to [-1, 1]
};

struct AgentAction {
  std::vector<double> raw;  // [-1,1]^{2K}: per bid, (capacity, price)
};

struct Transition {
  std::vector<double> state;
  std::vector<double> zonal_action;
  double reward = 0.0;
  std::vector<double> next_state;
};

// Ring buffer keeping the most recent `capacity` transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1) : capacity_(capacity) {}

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

/// Affine decode of a raw action onto the producer's bid box, with the
/// capacity-sum repair; the result always validates.
inline BidLadder decode_action(const Producer& producer,
                               std::span<const double> raw) {
  const std::size_t K = static_cast<std::size_t>(producer.max_bids);
  if (raw.size() != 2 * K)
    throw std::invalid_argument("raw action size != 2 * max_bids");
  std::vector<double> caps(K);
  BidLadder ladder{producer.id, std::vector<Bid>(K)};
  for (std::size_t k = 0; k < K; ++k) {
    const double rc = std::clamp(raw[2 * k], -1.0, 1.0);
    const double rp = std::clamp(raw[2 * k + 1], -1.0, 1.0);
    caps[k] = producer.capacity_min +
              0.5 * (rc + 1.0) * (producer.capacity_max - producer.capacity_min);
    ladder.bids[k].price =
        producer.price_min +
        0.5 * (rp + 1.0) * (producer.price_max - producer.price_min);
  }
  repair_capacity_sum(caps, producer.capacity_min, producer.capacity_max);
  for (std::size_t k = 0; k < K; ++k) ladder.bids[k].capacity = caps[k];
  return ladder;
}

/// Constant raw encoding of a marginal-price full-capacity bidder, used to
/// represent static producers inside zonal critic inputs.
inline std::vector<double> static_raw_action(const Producer& producer) {
  std::vector<double> raw(2 * static_cast<std::size_t>(producer.max_bids),
                          -1.0);
  if (!raw.empty()) raw[0] = 1.0;  // slot 0 at full capacity, marginal price
  return raw;
}

struct StateScaler {
  double price_cap = 1.0;
  std::vector<double> demand_min, demand_max;  // per zone, over the series
  int days = 1;
};

inline EnvState make_state(const StateScaler& sc,
                           const std::vector<double>& prev_lambda, int day,
                           const std::vector<double>& demands,
                           const std::vector<double>& perturb) {
  const std::size_t Z = prev_lambda.size();
  EnvState s;
  s.features.reserve(3 * Z + 1);
  for (std::size_t z = 0; z < Z; ++z)
    s.features.push_back(
        std::clamp(2.0 * prev_lambda[z] / sc.price_cap - 1.0, -1.0, 1.0));
  s.features.push_back(sc.days > 1 ? 2.0 * day / (sc.days - 1) - 1.0 : 0.0);
  for (std::size_t z = 0; z < Z; ++z) {
    const double span = sc.demand_max[z] - sc.demand_min[z];
    s.features.push_back(
        span > 0.0
            ? std::clamp(2.0 * (demands[z] - sc.demand_min[z]) / span - 1.0,
                         -1.0, 1.0)
            : 0.0);
  }
  for (std::size_t z = 0; z < Z; ++z) s.features.push_back(perturb[z]);
  return s;
}

struct LearningAgent {
  std::size_t producer = 0;  // index into the instance's producer list
  Mlp actor, critic, target_actor, target_critic;
  Adam actor_opt, critic_opt;
  ReplayBuffer buffer;
  Rng noise_rng{0};
  Rng sample_rng{0};
};

struct PolicyBundle {
  MarlConfig cfg;
  MarketInstance instance;  // template: zones, producers, static ladders
  StateScaler scaler;
  std::vector<std::size_t> zone_of_producer;           // zone array index
  std::vector<std::vector<std::size_t>> zone_members;  // ascending producer idx
  std::vector<bool> learning;                          // per producer
  std::vector<LearningAgent> agents;                   // learning producers
  std::vector<std::size_t> agent_of_producer;          // npos when static
  std::uint64_t config_hash = 0;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t state_dim() const { return 3 * instance.zones.size() + 1; }

  std::size_t zonal_action_dim(std::size_t zone) const {
    std::size_t d = 0;
    for (std::size_t n : zone_members[zone])
      d += 2 * static_cast<std::size_t>(instance.producers[n].max_bids);
    return d;
  }

  std::size_t member_offset(std::size_t zone, std::size_t producer) const {
    std::size_t off = 0;
    for (std::size_t n : zone_members[zone]) {
      if (n == producer) return off;
      off += 2 * static_cast<std::size_t>(instance.producers[n].max_bids);
    }
    throw std::logic_error("producer not in zone member list");
  }
};

inline PolicyBundle make_policy_bundle(const MarketInstance& instance,
                                       const StateScaler& scaler,
                                       const MarlConfig& cfg) {
  PolicyBundle b;
  b.cfg = cfg;
  b.instance = instance;
  b.scaler = scaler;
  const std::size_t Z = instance.zones.size();
  const std::size_t N = instance.producers.size();
  b.zone_of_producer.resize(N);
  b.zone_members.assign(Z, {});
  for (std::size_t n = 0; n < N; ++n) {
    b.zone_of_producer[n] = instance.zone_index(instance.producers[n].zone_id);
    b.zone_members[b.zone_of_producer[n]].push_back(n);
  }
  b.learning.assign(N, cfg.learning_producers.empty());
  for (int id : cfg.learning_producers)
    b.learning[instance.producer_index(id)] = true;
  b.agent_of_producer.assign(N, PolicyBundle::npos);

  Rng master(cfg.seed);
  for (std::size_t n = 0; n < N; ++n) {
    if (!b.learning[n]) continue;
    LearningAgent ag;
    ag.producer = n;
    const std::size_t K =
        static_cast<std::size_t>(instance.producers[n].max_bids);
    std::vector<int> actor_dims{static_cast<int>(b.state_dim())};
    std::vector<int> critic_dims{static_cast<int>(
        b.state_dim() + b.zonal_action_dim(b.zone_of_producer[n]))};
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      actor_dims.push_back(cfg.hidden);
      critic_dims.push_back(cfg.hidden);
    }
    actor_dims.push_back(static_cast<int>(2 * K));
    critic_dims.push_back(1);
    ag.actor = Mlp(actor_dims, /*tanh_output=*/true);
    ag.critic = Mlp(critic_dims, /*tanh_output=*/false);
    Rng init = master.child(300 + n);
    ag.actor.init_xavier(init);
    ag.critic.init_xavier(init);
    ag.target_actor = ag.actor;
    ag.target_critic = ag.critic;
    ag.actor_opt = Adam(ag.actor.num_params(), cfg.actor_lr);
    ag.critic_opt = Adam(ag.critic.num_params(), cfg.critic_lr);
    ag.buffer = ReplayBuffer(cfg.buffer_capacity);
    ag.noise_rng = master.child(100 + n);
    ag.sample_rng = master.child(200 + n);
    b.agent_of_producer[n] = b.agents.size();
    b.agents.push_back(std::move(ag));
  }
  return b;
}

inline AgentAction policy_act(PolicyBundle& bundle, int producer_id,
                              const EnvState& state, bool explore) {
  const std::size_t n = bundle.instance.producer_index(producer_id);
  const std::size_t a = bundle.agent_of_producer[n];
  if (a == PolicyBundle::npos)
    throw std::invalid_argument("producer is not a learning agent");
  LearningAgent& ag = bundle.agents[a];
  AgentAction action;
  action.raw = ag.actor.forward_one(state.features);
  if (explore)
    for (double& r : action.raw)
      r = std::clamp(r + ag.noise_rng.normal(0.0, bundle.cfg.noise_sigma),
                     -1.0, 1.0);
  return action;
}

namespace detail {

inline void append_zonal_action(
    const PolicyBundle& bundle, std::size_t zone,
    const std::vector<std::vector<double>>& raw_by_producer,
    std::vector<double>& out) {
  for (std::size_t m : bundle.zone_members[zone]) {
    const auto& raw = raw_by_producer[m];
    out.insert(out.end(), raw.begin(), raw.end());
  }
}

// Critic Bellman loss over a batch; optionally accumulates parameter
// gradients (targets are held fixed).
inline double critic_loss_impl(const PolicyBundle& bundle,
                               const LearningAgent& ag,
                               std::span<const Transition* const> batch,
                               double gamma, std::vector<double>* grad) {
  const std::size_t S = batch.size();
  if (S == 0) throw std::invalid_argument("empty batch");
  const std::size_t zone = bundle.zone_of_producer[ag.producer];
  const std::size_t sd = bundle.state_dim();
  const std::size_t zad = bundle.zonal_action_dim(zone);

  // X = [s, a(z)]; X2 = [s', a'(z)] with a' from the target policies
  std::vector<double> X(S * (sd + zad)), X2(S * (sd + zad));
  std::vector<double> next_states(S * sd);
  for (std::size_t i = 0; i < S; ++i) {
    const Transition& t = *batch[i];
    if (t.state.size() != sd || t.zonal_action.size() != zad)
      throw std::invalid_argument("transition shape mismatch");
    std::copy(t.state.begin(), t.state.end(), X.begin() + i * (sd + zad));
    std::copy(t.zonal_action.begin(), t.zonal_action.end(),
              X.begin() + i * (sd + zad) + sd);
    std::copy(t.next_state.begin(), t.next_state.end(),
              X2.begin() + i * (sd + zad));
    std::copy(t.next_state.begin(), t.next_state.end(),
              next_states.begin() + i * sd);
  }
  std::size_t col = sd;
  for (std::size_t m : bundle.zone_members[zone]) {
    const std::size_t Km =
        2 * static_cast<std::size_t>(bundle.instance.producers[m].max_bids);
    const std::size_t am = bundle.agent_of_producer[m];
    if (am == PolicyBundle::npos) {
      const auto raw = static_raw_action(bundle.instance.producers[m]);
      for (std::size_t i = 0; i < S; ++i)
        std::copy(raw.begin(), raw.end(), X2.begin() + i * (sd + zad) + col);
    } else {
      Mlp::Cache cache;
      bundle.agents[am].target_actor.forward(next_states,
                                             static_cast<int>(S), cache);
      const std::vector<double>& out = cache.acts.back();
      for (std::size_t i = 0; i < S; ++i)
        std::copy(out.begin() + i * Km, out.begin() + (i + 1) * Km,
                  X2.begin() + i * (sd + zad) + col);
    }
    col += Km;
  }

  Mlp::Cache target_cache;
  ag.target_critic.forward(X2, static_cast<int>(S), target_cache);
  const std::vector<double>& q_next = target_cache.acts.back();

  Mlp::Cache cache;
  ag.critic.forward(X, static_cast<int>(S), cache);
  const std::vector<double>& q = cache.acts.back();

  double loss = 0.0;
  std::vector<double> dq(S);
  for (std::size_t i = 0; i < S; ++i) {
    const double target = batch[i]->reward + gamma * q_next[i];
    const double err = q[i] - target;
    loss += err * err;
    dq[i] = 2.0 * err / static_cast<double>(S);
  }
  loss /= static_cast<double>(S);
  if (grad) ag.critic.backward(cache, dq, *grad);
  return loss;
}

// Actor loss: -E[Q(s, a(z))] with the focal slice of a(z) replaced by the
// current policy output; zone-mates' slices stay as sampled.
inline double actor_loss_impl(const PolicyBundle& bundle,
                              const LearningAgent& ag,
                              std::span<const Transition* const> batch,
                              std::vector<double>* grad) {
  const std::size_t S = batch.size();
  if (S == 0) throw std::invalid_argument("empty batch");
  const std::size_t zone = bundle.zone_of_producer[ag.producer];
  const std::size_t sd = bundle.state_dim();
  const std::size_t zad = bundle.zonal_action_dim(zone);
  const std::size_t off = bundle.member_offset(zone, ag.producer);
  const std::size_t Kd =
      2 * static_cast<std::size_t>(bundle.instance.producers[ag.producer]
                                       .max_bids);

  std::vector<double> states(S * sd), X(S * (sd + zad));
  for (std::size_t i = 0; i < S; ++i) {
    const Transition& t = *batch[i];
    std::copy(t.state.begin(), t.state.end(), states.begin() + i * sd);
    std::copy(t.state.begin(), t.state.end(), X.begin() + i * (sd + zad));
    std::copy(t.zonal_action.begin(), t.zonal_action.end(),
              X.begin() + i * (sd + zad) + sd);
  }
  Mlp::Cache actor_cache;
  ag.actor.forward(states, static_cast<int>(S), actor_cache);
  const std::vector<double>& mu = actor_cache.acts.back();
  for (std::size_t i = 0; i < S; ++i)
    std::copy(mu.begin() + i * Kd, mu.begin() + (i + 1) * Kd,
              X.begin() + i * (sd + zad) + sd + off);

  Mlp::Cache critic_cache;
  ag.critic.forward(X, static_cast<int>(S), critic_cache);
  const std::vector<double>& q = critic_cache.acts.back();
  double loss = 0.0;
  for (std::size_t i = 0; i < S; ++i) loss -= q[i];
  loss /= static_cast<double>(S);

  if (grad) {
    std::vector<double> dq(S, -1.0 / static_cast<double>(S));
    std::vector<double> scratch(ag.critic.num_params(), 0.0);
    std::vector<double> dX;
    ag.critic.backward(critic_cache, dq, scratch, &dX);
    std::vector<double> d_mu(S * Kd);
    for (std::size_t i = 0; i < S; ++i)
      std::copy(dX.begin() + i * (sd + zad) + sd + off,
                dX.begin() + i * (sd + zad) + sd + off + Kd,
                d_mu.begin() + i * Kd);
    ag.actor.backward(actor_cache, d_mu, *grad);
  }
  return loss;
}

}  // namespace detail

/// Critic Bellman loss of one agent on a batch (no parameter update).
inline double critic_loss(const PolicyBundle& bundle, int producer_id,
                          const std::vector<Transition>& batch, double gamma) {
  const std::size_t n = bundle.instance.producer_index(producer_id);
  const std::size_t a = bundle.agent_of_producer[n];
  if (a == PolicyBundle::npos)
    throw std::invalid_argument("producer is not a learning agent");
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  return detail::critic_loss_impl(bundle, bundle.agents[a], ptrs, gamma,
                                  nullptr);
}

/// Actor loss of one agent on a batch (no parameter update).
inline double actor_loss(const PolicyBundle& bundle, int producer_id,
                         const std::vector<Transition>& batch) {
  const std::size_t n = bundle.instance.producer_index(producer_id);
  const std::size_t a = bundle.agent_of_producer[n];
  if (a == PolicyBundle::npos)
    throw std::invalid_argument("producer is not a learning agent");
  std::vector<const Transition*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  return detail::actor_loss_impl(bundle, bundle.agents[a], ptrs, nullptr);
}

inline void soft_update(PolicyBundle& bundle, int producer_id,
                        double tau_target) {
  const std::size_t n = bundle.instance.producer_index(producer_id);
  const std::size_t a = bundle.agent_of_producer[n];
  if (a == PolicyBundle::npos)
    throw std::invalid_argument("producer is not a learning agent");
  LearningAgent& ag = bundle.agents[a];
  soft_update_params(ag.actor.params(), ag.target_actor.params(), tau_target);
  soft_update_params(ag.critic.params(), ag.target_critic.params(),
                     tau_target);
}

struct TraceRow {
  int episode = 0;
  int producer_id = 0;
  int zone_id = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double mean_zone_cost = 0.0;
};

struct TrainResult {
  PolicyBundle bundle;
  std::vector<TraceRow> trace;
};

namespace detail {

inline double agent_reward(const MarlConfig& cfg, const Producer& p,
                           double revenue, double lambda_home,
                           const BidLadder& ladder) {
  const double scale = std::max(1.0, p.capacity_max * p.price_max);
  double r = revenue / scale;
  if (cfg.reward == RewardKind::ShapedProfit && !ladder.bids.empty()) {
    double mean_price = 0.0;
    for (const auto& b : ladder.bids) mean_price += b.price;
    mean_price /= static_cast<double>(ladder.bids.size());
    r -= cfg.beta *
         std::max(0.0, (mean_price - lambda_home) / std::max(1.0, p.price_max));
  }
  return r;
}

inline DayOutcome clear_day(const MarketInstance& tmpl,
                            const std::vector<double>& demands,
                            const std::vector<BidLadder>& ladders) {
  MarketInstance inst = tmpl;
  for (std::size_t z = 0; z < inst.zones.size(); ++z)
    inst.zones[z].demand = demands[z];
  inst.ladders = ladders;
  return day_outcome(inst, clear_market(inst));
}

inline void update_agent(PolicyBundle& bundle, LearningAgent& ag) {
  const int batch = bundle.cfg.batch;
  if (ag.buffer.size() < static_cast<std::size_t>(batch)) return;
  std::vector<const Transition*> ptrs(batch);
  for (int i = 0; i < batch; ++i)
    ptrs[i] = &ag.buffer[ag.sample_rng.uniform_int(ag.buffer.size())];

  std::vector<double> cgrad(ag.critic.num_params(), 0.0);
  critic_loss_impl(bundle, ag, ptrs, bundle.cfg.gamma, &cgrad);
  ag.critic_opt.step(ag.critic.params(), cgrad);

  std::vector<double> agrad(ag.actor.num_params(), 0.0);
  actor_loss_impl(bundle, ag, ptrs, &agrad);
  ag.actor_opt.step(ag.actor.params(), agrad);

  soft_update_params(ag.actor.params(), ag.target_actor.params(),
                     bundle.cfg.tau_target);
  soft_update_params(ag.critic.params(), ag.target_critic.params(),
                     bundle.cfg.tau_target);
}

}  // namespace detail

inline StateScaler make_scaler(const MarketInstance& instance,
                               const std::vector<std::vector<double>>& demand) {
  StateScaler sc;
  sc.price_cap = 1.0;
  for (const auto& p : instance.producers)
    sc.price_cap = std::max(sc.price_cap, p.price_max);
  const std::size_t Z = instance.zones.size();
  sc.demand_min.assign(Z, 0.0);
  sc.demand_max.assign(Z, 0.0);
  for (std::size_t z = 0; z < Z; ++z) {
    if (demand[z].empty()) continue;
    sc.demand_min[z] = *std::min_element(demand[z].begin(), demand[z].end());
    sc.demand_max[z] = *std::max_element(demand[z].begin(), demand[z].end());
  }
  sc.days = demand.empty() ? 1 : static_cast<int>(demand[0].size());
  return sc;
}

// Zonal multi-agent training: each day all producers act, the market clears,
// zonal transitions are stored and every learning agent takes one critic
// and one actor step.
inline TrainResult train_run(const MarketInstance& tmpl,
                             const std::vector<std::vector<double>>& demand,
                             const MarlConfig& cfg) {
  const std::size_t Z = tmpl.zones.size();
  if (demand.size() != Z)
    throw std::invalid_argument("demand series zone count mismatch");
  const int days = demand.empty() ? 0 : static_cast<int>(demand[0].size());
  for (const auto& d : demand)
    if (static_cast<int>(d.size()) != days)
      throw std::invalid_argument("unequal demand series lengths");
  if (days == 0) throw std::invalid_argument("empty demand series");

  TrainResult result{make_policy_bundle(tmpl, make_scaler(tmpl, demand), cfg),
                     {}};
  PolicyBundle& bundle = result.bundle;
  Rng env_rng = Rng(cfg.seed).child(0);
  const std::size_t N = tmpl.producers.size();

  std::vector<BidLadder> static_ladders(N);
  for (std::size_t n = 0; n < N; ++n)
    static_ladders[n] =
        BidLadder{tmpl.producers[n].id,
                  {Bid{tmpl.producers[n].capacity_max,
                       tmpl.producers[n].price_min}}};

  std::vector<double> prev_lambda(Z, 0.0);
  auto draw_perturb = [&]() {
    std::vector<double> p(Z);
    for (std::size_t z = 0; z < Z; ++z)
      p[z] = env_rng.uniform(-cfg.perturbation, cfg.perturbation);
    return p;
  };

  auto day_demands = [&](int t) {
    std::vector<double> d(Z);
    for (std::size_t z = 0; z < Z; ++z) d[z] = demand[z][t];
    return d;
  };

  std::vector<double> perturb = draw_perturb();
  for (int episode = 0; episode < cfg.episodes; ++episode) {
    std::vector<std::vector<double>> rewards(N);
    std::vector<double> zone_cost_sum(Z, 0.0);
    for (int t = 0; t < days; ++t) {
      const std::vector<double> demands = day_demands(t);
      const EnvState state = make_state(bundle.scaler, prev_lambda, t,
                                        demands, perturb);
      std::vector<std::vector<double>> raw_by_producer(N);
      std::vector<BidLadder> ladders(N);
      for (std::size_t n = 0; n < N; ++n) {
        if (bundle.learning[n]) {
          AgentAction a = policy_act(bundle, tmpl.producers[n].id, state,
                                     /*explore=*/true);
          ladders[n] = decode_action(tmpl.producers[n], a.raw);
          raw_by_producer[n] = std::move(a.raw);
        } else {
          ladders[n] = static_ladders[n];
          raw_by_producer[n] = static_raw_action(tmpl.producers[n]);
        }
      }

      const DayOutcome day = detail::clear_day(tmpl, demands, ladders);
      for (std::size_t z = 0; z < Z; ++z) zone_cost_sum[z] += day.supplier_zone_cost[z];

      const int t_next = (t + 1) % days;
      perturb = draw_perturb();
      const EnvState next_state = make_state(
          bundle.scaler, day.lambda, t_next, day_demands(t_next), perturb);

      for (std::size_t n = 0; n < N; ++n) {
        const double r = detail::agent_reward(
            cfg, tmpl.producers[n], day.revenue[n],
            day.lambda[bundle.zone_of_producer[n]], ladders[n]);
        rewards[n].push_back(r);
        const std::size_t a = bundle.agent_of_producer[n];
        if (a == PolicyBundle::npos) continue;
        Transition tr;
        tr.state = state.features;
        detail::append_zonal_action(bundle, bundle.zone_of_producer[n],
                                    raw_by_producer, tr.zonal_action);
        tr.reward = r;
        tr.next_state = next_state.features;
        bundle.agents[a].buffer.push(std::move(tr));
      }

      for (std::size_t z = 0; z < Z; ++z)
        for (std::size_t n : bundle.zone_members[z]) {
          const std::size_t a = bundle.agent_of_producer[n];
          if (a != PolicyBundle::npos)
            detail::update_agent(bundle, bundle.agents[a]);
        }
      prev_lambda = day.lambda;
    }

    for (std::size_t n = 0; n < N; ++n) {
      double mean = 0.0;
      for (double r : rewards[n]) mean += r;
      mean /= static_cast<double>(days);
      double var = 0.0;
      for (double r : rewards[n]) var += (r - mean) * (r - mean);
      var /= static_cast<double>(days);
      const std::size_t z = bundle.zone_of_producer[n];
      result.trace.push_back(TraceRow{episode, tmpl.producers[n].id,
                                      tmpl.zones[z].id, mean, std::sqrt(var),
                                      zone_cost_sum[z] / days});
    }
  }
  return result;
}

struct EvalResult {
  std::vector<DayOutcome> days;
  double mean_cost = 0.0;
  std::vector<double> mean_zone_cost;
  std::vector<double> mean_revenue;  // per producer
};

/// Deterministic pass over a demand series with exploration off. The
/// instance template may differ from the training one (e.g. other coupling
/// limits); producers and zones must match structurally.
inline EvalResult evaluate_policy(const PolicyBundle& bundle,
                                  const MarketInstance& tmpl,
                                  const std::vector<std::vector<double>>& demand) {
  const std::size_t Z = tmpl.zones.size();
  const std::size_t N = tmpl.producers.size();
  EvalResult out;
  out.mean_zone_cost.assign(Z, 0.0);
  out.mean_revenue.assign(N, 0.0);
  if (demand.empty() || demand[0].empty()) return out;
  const int days = static_cast<int>(demand[0].size());

  Rng env_rng = Rng(bundle.cfg.seed).child(1);
  std::vector<double> prev_lambda(Z, 0.0);
  std::vector<double> perturb(Z);
  for (std::size_t z = 0; z < Z; ++z)
    perturb[z] = env_rng.uniform(-bundle.cfg.perturbation,
                                 bundle.cfg.perturbation);

  for (int t = 0; t < days; ++t) {
    std::vector<double> demands(Z);
    for (std::size_t z = 0; z < Z; ++z) demands[z] = demand[z][t];
    const EnvState state =
        make_state(bundle.scaler, prev_lambda, t, demands, perturb);
    std::vector<BidLadder> ladders(N);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t a = bundle.agent_of_producer[n];
      if (a == PolicyBundle::npos) {
        ladders[n] = BidLadder{tmpl.producers[n].id,
                               {Bid{tmpl.producers[n].capacity_max,
                                    tmpl.producers[n].price_min}}};
      } else {
        const std::vector<double> raw =
            bundle.agents[a].actor.forward_one(state.features);
        ladders[n] = decode_action(tmpl.producers[n], raw);
      }
    }
    DayOutcome day = detail::clear_day(tmpl, demands, ladders);
    prev_lambda = day.lambda;
    for (std::size_t z = 0; z < Z; ++z) {
      out.mean_zone_cost[z] += day.supplier_zone_cost[z];
      perturb[z] = env_rng.uniform(-bundle.cfg.perturbation,
                                   bundle.cfg.perturbation);
    }
    for (std::size_t n = 0; n < N; ++n) out.mean_revenue[n] += day.revenue[n];
    out.mean_cost += day.total_cost;
    out.days.push_back(std::move(day));
  }
  out.mean_cost /= days;
  for (double& c : out.mean_zone_cost) c /= days;
  for (double& r : out.mean_revenue) r /= days;
  return out;
}

}  // namespace zam
