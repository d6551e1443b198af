#pragma once
// Adversarial imitation of expert reasoning paths. Each training round:
//
//   1. roll out one batch of policy paths, starting from origins drawn from
//      the expert origin frequencies;
//   2. one comparator SGD step on an expert/generated embedding minibatch;
//   3. score every generated path with q = log f(embedding) under the
//      freshly updated comparator;
//   4. one policy-gradient ascent step on the whole batch, with the batch
//      mean as baseline and an entropy bonus whose weight decays linearly
//      to zero over the run.
//
// The policy surrogate is  (1/N) sum_j A_j sum_t log q_t(a_t)  +  alpha/M
// sum_states H(q), where A_j is the centered score, N the episode count and
// M the state count. Uniform tail-choice terms are constant in the
// parameters and omitted. Gradients are injected at the softmax logits:
// d log q_a / dz = onehot(a) - q and dH/dz = -q (log q + H), both exactly
// zero on masked entries.
//
// When the expert paths live in an enumerable space, the total-variation
// distance between the policy path distribution (mixed over expert origin
// frequencies) and the expert empirical distribution is recorded per round.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semcom/comparator.hpp"
#include "semcom/embedding.hpp"
#include "semcom/knowledge_base.hpp"
#include "semcom/parallel.hpp"
#include "semcom/policy.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct Episode {
  ReasoningPath path;
  double q = 0.0;  // log comparator score of the path embedding
};

struct TrainConfig {
  int rounds = 50;
  int episodes_per_round = 128;
  int batch_size = 32;          // comparator minibatch, drawn with replacement
  double policy_lr = 0.05;
  double comparator_lr = 0.05;
  double entropy_coef = 0.1;    // initial alpha; decays linearly to 0
  std::size_t hop_bound = 2;
  int hidden_width = 64;
  std::uint64_t seed = 0;
  std::size_t tv_walk_cap = 0;  // >0 enables exact TV tracking up to this walk count
  int threads = 1;
};

struct RoundRecord {
  int round = 0;  // 1-based
  double comparator_loss = 0.0;
  double interpreter_loss = 0.0;  // -mean q
  double mean_q = 0.0;
  double entropy = 0.0;           // mean state entropy of the generating policy
  double tv_distance = std::numeric_limits<double>::quiet_NaN();
};

struct MetricTrace {
  std::vector<RoundRecord> rounds;
};

inline void save_metrics_csv(const MetricTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics file: " + path);
  out << "round,comp_loss,interp_loss,mean_q,entropy,tv_distance\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ',' << buf;
  };
  for (const RoundRecord& r : trace.rounds) {
    out << r.round;
    put(r.comparator_loss);
    put(r.interpreter_loss);
    put(r.mean_q);
    put(r.entropy);
    put(r.tv_distance);
    out << '\n';
  }
}

/// Entropy of a masked distribution, skipping exact zeros.
inline double masked_entropy(const Vector& q) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (q(i) > 0.0) h -= q(i) * std::log(q(i));
  return h;
}

/// Surrogate objective whose gradient is the REINFORCE estimator with batch
/// mean baseline plus the entropy bonus. Used for finite-difference checks.
inline double policy_surrogate(const PolicyModel& m, const KnowledgeBase& kb,
                               const EmbeddingTable& tab, std::span<const Episode> episodes,
                               double alpha) {
  if (episodes.empty()) throw std::invalid_argument("policy_surrogate: no episodes");
  const double n = static_cast<double>(episodes.size());
  double qbar = 0.0;
  for (const Episode& e : episodes) qbar += e.q;
  qbar /= n;
  std::size_t states = 0;
  for (const Episode& e : episodes) states += e.path.steps.size();
  if (states == 0) return 0.0;
  const double mstates = static_cast<double>(states);

  double value = 0.0;
  for (const Episode& ep : episodes) {
    const double adv = ep.q - qbar;
    EntityId cur = ep.path.origin;
    for (const PathStep& s : ep.path.steps) {
      const ReasonerState st = make_state(tab, cur, ep.path.origin);
      const Vector q = detail::mask_renormalize(m.net.forward(st.features),
                                                kb.valid_relations(cur));
      if (q(s.relation) <= 0.0)
        throw std::runtime_error("episode step has zero probability under this policy");
      value += adv * std::log(q(s.relation)) / n;
      value += alpha * masked_entropy(q) / mstates;
      cur = s.entity;
    }
  }
  return value;
}

inline Gradients policy_surrogate_gradients(const PolicyModel& m, const KnowledgeBase& kb,
                                            const EmbeddingTable& tab,
                                            std::span<const Episode> episodes, double alpha) {
  if (episodes.empty())
    throw std::invalid_argument("policy_surrogate_gradients: no episodes");
  detail::check_policy_width(m, kb);
  const double n = static_cast<double>(episodes.size());
  double qbar = 0.0;
  for (const Episode& e : episodes) qbar += e.q;
  qbar /= n;
  std::size_t states = 0;
  for (const Episode& e : episodes) states += e.path.steps.size();
  Gradients acc = zeros_like(m.net);
  if (states == 0) return acc;
  const double went = alpha / static_cast<double>(states);

  for (const Episode& ep : episodes) {
    const double adv = ep.q - qbar;
    EntityId cur = ep.path.origin;
    for (const PathStep& s : ep.path.steps) {
      const ReasonerState st = make_state(tab, cur, ep.path.origin);
      const DenseNet::Trace trace = m.net.forward_trace(st.features);
      const Vector q = detail::mask_renormalize(trace.output(), kb.valid_relations(cur));
      if (q(s.relation) <= 0.0)
        throw std::runtime_error("episode step has zero probability under this policy");
      const double h = masked_entropy(q);
      Vector upstream = Vector::Zero(q.size());
      const double wadv = adv / n;
      for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q(i) > 0.0) upstream(i) = -wadv * q(i) - went * q(i) * (std::log(q(i)) + h);
      }
      upstream(s.relation) += wadv;
      add_scaled(acc, m.net.backward_from_logits(trace, upstream), 1.0);
      cur = s.entity;
    }
  }
  return acc;
}

/// One ascent step on the surrogate; returns the updated policy.
inline PolicyModel policy_step(PolicyModel m, const KnowledgeBase& kb,
                               const EmbeddingTable& tab, std::span<const Episode> episodes,
                               double alpha, double lr) {
  const Gradients g = policy_surrogate_gradients(m, kb, tab, episodes, alpha);
  m.net.apply_gradients(g, lr);
  return m;
}

inline double mean_state_entropy(const PolicyModel& m, const KnowledgeBase& kb,
                                 const EmbeddingTable& tab,
                                 std::span<const Episode> episodes) {
  std::size_t states = 0;
  double h = 0.0;
  for (const Episode& ep : episodes) {
    EntityId cur = ep.path.origin;
    for (const PathStep& s : ep.path.steps) {
      const ReasonerState st = make_state(tab, cur, ep.path.origin);
      h += masked_entropy(detail::mask_renormalize(m.net.forward(st.features),
                                                   kb.valid_relations(cur)));
      ++states;
      cur = s.entity;
    }
  }
  return states == 0 ? 0.0 : h / static_cast<double>(states);
}

using PathDistribution = std::map<std::vector<std::uint32_t>, double>;

inline PathDistribution empirical_distribution(const PathSet& ps) {
  PathDistribution d;
  const double w = 1.0 / static_cast<double>(ps.paths.size());
  for (const ReasoningPath& p : ps.paths) d[path_key(p)] += w;
  return d;
}

/// Exact policy distribution over paths, mixed over the expert origin
/// frequencies. nullopt when any origin exceeds the walk cap.
inline std::optional<PathDistribution> policy_path_distribution(
    const PolicyModel& m, const KnowledgeBase& kb, const EmbeddingTable& tab,
    const PathSet& experts, std::size_t walk_cap) {
  if (experts.paths.empty())
    throw std::invalid_argument("policy_path_distribution: no expert paths");
  std::map<EntityId, double> origin_weight;
  const double w = 1.0 / static_cast<double>(experts.paths.size());
  for (const ReasoningPath& p : experts.paths) origin_weight[p.origin] += w;
  PathDistribution dist;
  for (const auto& [origin, weight] : origin_weight) {
    if (count_walks(kb, origin, experts.hop_bound, walk_cap) > walk_cap) return std::nullopt;
    for (const PathProb& pp : enumerate_paths(m, kb, tab, origin, experts.hop_bound, walk_cap))
      dist[path_key(pp.path)] += weight * pp.prob;
  }
  return dist;
}

inline double tv_distance(const PathDistribution& a, const PathDistribution& b) {
  double sum = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      sum += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      sum += std::abs(ib->second);
      ++ib;
    } else {
      sum += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 0.5 * sum;
}

struct RoundInfo {
  int round = 0;
  const std::vector<Episode>& episodes;
  const PolicyModel& policy_after;
  const ComparatorModel& comparator_after;
  const RoundRecord& record;
};

using RoundObserver = std::function<void(const RoundInfo&)>;

struct TrainResult {
  PolicyModel policy;            // best round by TV when tracked, else by interpreter loss
  ComparatorModel comparator;
  PolicyModel final_policy;
  ComparatorModel final_comparator;
  MetricTrace trace;
  int best_round = 0;            // 0 means the untrained initial model
  double initial_tv = std::numeric_limits<double>::quiet_NaN();
};

/// Run the adversarial imitation loop. kb_expert is the base the expert
/// paths were sampled from (used to validate them); kb_dest is the base the
/// policy reasons over. Deterministic for a fixed config, including the
/// thread count.
inline TrainResult train(const KnowledgeBase& kb_expert, const KnowledgeBase& kb_dest,
                         const EmbeddingTable& tab, const PathSet& experts,
                         const TrainConfig& cfg, const RoundObserver& observer = {}) {
  if (experts.paths.empty()) throw std::invalid_argument("train: no expert paths");
  if (cfg.rounds < 0) throw std::invalid_argument("train: negative rounds");
  if (cfg.episodes_per_round < 1) throw std::invalid_argument("train: need episodes");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: need a batch size");
  for (const ReasoningPath& p : experts.paths) {
    if (!path_valid(kb_expert, p))
      throw std::invalid_argument("train: expert path not realizable in its base");
    if (!kb_dest.has_entity(p.origin))
      throw std::invalid_argument("train: expert origin " + kb_expert.entity_name(p.origin) +
                                  " missing from the destination base");
  }

  TrainResult res;
  res.policy = make_policy_model(kb_dest.relation_count(), tab.dim(), cfg.hidden_width,
                                 cfg.hop_bound, mix_seed(cfg.seed, 1));
  res.comparator = make_comparator_model(tab.dim(), cfg.hidden_width, mix_seed(cfg.seed, 2));

  std::vector<Vector> expert_embed;
  expert_embed.reserve(experts.paths.size());
  for (const ReasoningPath& p : experts.paths) expert_embed.push_back(path_embedding(tab, p));
  std::vector<EntityId> expert_origins;
  expert_origins.reserve(experts.paths.size());
  for (const ReasoningPath& p : experts.paths) expert_origins.push_back(p.origin);

  const bool track_tv = cfg.tv_walk_cap > 0 && experts.hop_bound == cfg.hop_bound;
  PathDistribution expert_emp;
  if (track_tv) {
    expert_emp = empirical_distribution(experts);
    const auto d0 = policy_path_distribution(res.policy, kb_dest, tab, experts, cfg.tv_walk_cap);
    if (d0) res.initial_tv = tv_distance(*d0, expert_emp);
  }

  PolicyModel policy = res.policy;
  ComparatorModel comparator = res.comparator;
  double best_score = std::numeric_limits<double>::infinity();
  res.best_round = 0;

  const auto n_ep = static_cast<std::size_t>(cfg.episodes_per_round);
  std::vector<Episode> episodes(n_ep);
  std::vector<Vector> gen_embed(n_ep);

  for (int round = 0; round < cfg.rounds; ++round) {
    const std::uint64_t round_seed = mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(round));

    Rng origin_rng(mix_seed(round_seed, 0));
    for (std::size_t j = 0; j < n_ep; ++j)
      episodes[j].path.origin = expert_origins[origin_rng.below(expert_origins.size())];

    parallel_for(n_ep, cfg.threads, [&](std::size_t j) {
      episodes[j].path =
          rollout(policy, kb_dest, tab, episodes[j].path.origin, mix_seed(round_seed, 1, j));
      gen_embed[j] = path_embedding(tab, episodes[j].path);
    });

    Rng batch_rng(mix_seed(round_seed, 2));
    const auto b = static_cast<std::size_t>(cfg.batch_size);
    std::vector<Vector> ebatch(b), gbatch(b);
    for (std::size_t j = 0; j < b; ++j) ebatch[j] = expert_embed[batch_rng.below(expert_embed.size())];
    for (std::size_t j = 0; j < b; ++j) gbatch[j] = gen_embed[batch_rng.below(gen_embed.size())];
    comparator = comparator_step(comparator, ebatch, gbatch, cfg.comparator_lr);

    RoundRecord rec;
    rec.round = round + 1;
    rec.comparator_loss = comparator_loss(comparator, ebatch, gbatch);
    double qsum = 0.0;
    for (std::size_t j = 0; j < n_ep; ++j) {
      episodes[j].q = log_feature(comparator, gen_embed[j]);
      qsum += episodes[j].q;
    }
    rec.mean_q = qsum / static_cast<double>(n_ep);
    rec.interpreter_loss = -rec.mean_q;
    rec.entropy = mean_state_entropy(policy, kb_dest, tab, episodes);

    const double alpha = cfg.entropy_coef *
                         static_cast<double>(cfg.rounds - round) /
                         static_cast<double>(cfg.rounds);
    policy = policy_step(std::move(policy), kb_dest, tab, episodes, alpha, cfg.policy_lr);

    if (track_tv) {
      const auto d = policy_path_distribution(policy, kb_dest, tab, experts, cfg.tv_walk_cap);
      if (d) rec.tv_distance = tv_distance(*d, expert_emp);
    }

    res.trace.rounds.push_back(rec);
    const double score = track_tv ? rec.tv_distance : rec.interpreter_loss;
    if (!std::isnan(score) && score < best_score) {
      best_score = score;
      res.best_round = round + 1;
      res.policy = policy;
      res.comparator = comparator;
    }
    if (observer) observer(RoundInfo{rec.round, episodes, policy, comparator, rec});
  }

  res.final_policy = std::move(policy);
  res.final_comparator = std::move(comparator);
  return res;
}

/// Fraction of test paths whose terminal the policy reaches within
/// samples_per_origin seeded rollouts from the same origin.
inline double evaluate_accuracy(const PolicyModel& m, const KnowledgeBase& kb,
                                const EmbeddingTable& tab, const PathSet& test,
                                int samples_per_origin, std::uint64_t seed) {
  if (test.paths.empty()) throw std::invalid_argument("evaluate_accuracy: no test paths");
  if (samples_per_origin < 1)
    throw std::invalid_argument("evaluate_accuracy: need at least one sample");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.paths.size(); ++i) {
    const ReasoningPath& target = test.paths[i];
    for (int s = 0; s < samples_per_origin; ++s) {
      const ReasoningPath got =
          rollout(m, kb, tab, target.origin, mix_seed(seed, i, static_cast<std::uint64_t>(s)));
      if (got.terminal() == target.terminal()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(test.paths.size());
}

}  // namespace semcom
