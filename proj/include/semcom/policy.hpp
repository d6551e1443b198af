#pragma once
// Reasoning policy: a softmax network over relation ids, conditioned on the
// concatenation [current entity ; origin entity] in embedding space. Invalid
// relations (no outgoing edge at the current entity) are masked out and the
// remainder renormalized; NO_OP is always valid, so the masked distribution
// is never empty. Tail entities are drawn uniformly among the tails of the
// chosen relation, which makes path probabilities exactly computable:
//
//   P(path) = prod_t  q_t(r_t) / |tails(e_{t-1}, r_t)|
//
// with the NO_OP factor having a single tail. enumerate_paths expands this
// product exhaustively and terminal_mass marginalizes it onto the terminal
// entity, both in deterministic order.

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semcom/embedding.hpp"
#include "semcom/knowledge_base.hpp"
#include "semcom/neural.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct ReasonerState {
  EntityId current = 0;
  EntityId origin = 0;
  Vector features;  // [embed(current) ; embed(origin)]
};

inline ReasonerState make_state(const EmbeddingTable& tab, EntityId current, EntityId origin) {
  ReasonerState s;
  s.current = current;
  s.origin = origin;
  s.features = Vector(2 * tab.dim());
  s.features << tab.entity(current), tab.entity(origin);
  return s;
}

struct PolicyModel {
  DenseNet net;  // 2d -> hidden -> hidden -> relation_count softmax
  std::size_t hop_bound = 2;

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write policy checkpoint: " + path);
    out << "policy 1\nhops " << hop_bound << '\n';
    net.save(out);
  }

  static PolicyModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open policy checkpoint: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "policy" || version != 1)
      throw std::runtime_error("not a policy checkpoint: " + path);
    PolicyModel m;
    std::string tok;
    in >> tok >> m.hop_bound;
    if (tok != "hops") throw std::runtime_error("bad policy checkpoint header: " + path);
    m.net = DenseNet::load(in);
    return m;
  }
};

/// Fresh policy with two ReLU hidden layers and a softmax head over all
/// relation ids (including NO_OP at index 0).
inline PolicyModel make_policy_model(std::size_t relation_count, int embed_dim, int hidden,
                                     std::size_t hop_bound, std::uint64_t seed) {
  if (relation_count < 1) throw std::invalid_argument("make_policy_model: no relations");
  Rng rng(mix_seed(seed, 0x90a1u));
  const int h[2] = {hidden, hidden};
  PolicyModel m;
  m.net = DenseNet::make_mlp(2 * embed_dim, h, static_cast<int>(relation_count),
                             Activation::relu, Activation::softmax, rng);
  m.hop_bound = hop_bound;
  return m;
}

/// Maximum-entropy reasoner: zero logits make every state's distribution
/// uniform over its valid relations, and structurally symmetric walks carry
/// bitwise-identical mass. The natural policy for recovery experiments when
/// nothing has been trained.
inline PolicyModel make_uniform_policy_model(std::size_t relation_count, int embed_dim,
                                             std::size_t hop_bound) {
  if (relation_count < 1) throw std::invalid_argument("make_uniform_policy_model: no relations");
  DenseLayer head;
  head.weights = Matrix::Zero(static_cast<Eigen::Index>(relation_count), 2 * embed_dim);
  head.bias = Vector::Zero(static_cast<Eigen::Index>(relation_count));
  head.act = Activation::softmax;
  PolicyModel m;
  m.net = DenseNet({std::move(head)});
  m.hop_bound = hop_bound;
  return m;
}

namespace detail {
inline void check_policy_width(const PolicyModel& m, const KnowledgeBase& kb) {
  // relation ids are dense in every base built here, so the softmax head
  // indexes them directly
  if (static_cast<std::size_t>(m.net.output_width()) != kb.relation_count())
    throw std::invalid_argument("policy head width does not match relation count");
}

inline Vector mask_renormalize(const Vector& raw, const std::vector<RelationId>& valid) {
  double mass = 0.0;
  for (RelationId r : valid) mass += raw(r);
  if (mass <= 0.0)
    throw std::runtime_error("masked action distribution has no probability mass");
  Vector q = Vector::Zero(raw.size());
  for (RelationId r : valid) q(r) = raw(r) / mass;
  return q;
}
}  // namespace detail

/// Masked, renormalized relation distribution at a state. Entries for
/// relations with no action at the current entity are exactly zero.
inline Vector action_distribution(const PolicyModel& m, const ReasonerState& s,
                                  const KnowledgeBase& kb) {
  detail::check_policy_width(m, kb);
  return detail::mask_renormalize(m.net.forward(s.features), kb.valid_relations(s.current));
}

/// Sample a hop_bound-step path starting at origin.
inline ReasoningPath rollout(const PolicyModel& m, const KnowledgeBase& kb,
                             const EmbeddingTable& tab, EntityId origin, Rng& rng) {
  detail::check_policy_width(m, kb);
  ReasoningPath p;
  p.origin = origin;
  EntityId cur = origin;
  for (std::size_t t = 0; t < m.hop_bound; ++t) {
    const ReasonerState s = make_state(tab, cur, origin);
    const Vector q = detail::mask_renormalize(m.net.forward(s.features),
                                              kb.valid_relations(cur));
    const auto r = static_cast<RelationId>(
        rng.pick_weighted(std::span<const double>(q.data(), static_cast<std::size_t>(q.size()))));
    if (r == kNoOp) {
      p.steps.push_back({kNoOp, cur});
    } else {
      const std::vector<EntityId> ts = kb.tails(cur, r);
      cur = ts[rng.below(ts.size())];
      p.steps.push_back({r, cur});
    }
  }
  return p;
}

inline ReasoningPath rollout(const PolicyModel& m, const KnowledgeBase& kb,
                             const EmbeddingTable& tab, EntityId origin,
                             std::uint64_t seed) {
  Rng rng(seed);
  return rollout(m, kb, tab, origin, rng);
}

/// Exact log-probability of the policy producing this path. Throws if any
/// step is not realizable in the base.
inline double path_log_prob(const PolicyModel& m, const KnowledgeBase& kb,
                            const EmbeddingTable& tab, const ReasoningPath& p) {
  detail::check_policy_width(m, kb);
  if (!path_valid(kb, p)) throw std::invalid_argument("path not realizable in this base");
  double lp = 0.0;
  EntityId cur = p.origin;
  for (const PathStep& s : p.steps) {
    const ReasonerState st = make_state(tab, cur, p.origin);
    const Vector q = detail::mask_renormalize(m.net.forward(st.features),
                                              kb.valid_relations(cur));
    const double pr = q(s.relation);
    if (pr <= 0.0) throw std::runtime_error("path step has zero probability");
    lp += std::log(pr);
    if (s.relation != kNoOp)
      lp -= std::log(static_cast<double>(kb.tails(cur, s.relation).size()));
    cur = s.entity;
  }
  return lp;
}

/// Number of distinct length-L action sequences from origin, saturating at
/// cap + 1 so callers can test for overflow cheaply.
inline std::size_t count_walks(const KnowledgeBase& kb, EntityId origin, std::size_t length,
                               std::size_t cap = 1'000'000) {
  if (!kb.has_entity(origin))
    throw std::runtime_error("unknown entity id " + std::to_string(origin));
  std::map<EntityId, std::size_t> frontier{{origin, 1}};
  for (std::size_t t = 0; t < length; ++t) {
    std::map<EntityId, std::size_t> next;
    for (const auto& [e, cnt] : frontier) {
      next[e] += cnt;  // NO_OP
      for (const Action& a : kb.real_outgoing(e)) {
        auto& slot = next[a.entity];
        slot = std::min(cap + 1, slot + cnt);
      }
    }
    std::size_t total = 0;
    for (auto& [e, cnt] : next) {
      cnt = std::min(cnt, cap + 1);
      total = std::min(cap + 1, total + cnt);
    }
    frontier = std::move(next);
    if (total > cap && t + 1 < length) return cap + 1;
  }
  std::size_t total = 0;
  for (const auto& [e, cnt] : frontier) total = std::min(cap + 1, total + cnt);
  return total;
}

struct PathProb {
  ReasoningPath path;
  double prob = 0.0;
};

/// Exhaustive policy distribution over length-L paths from origin, in
/// depth-first (relation, tail) order. Throws when the walk count exceeds
/// cap; callers should fall back to sampling at that point.
inline std::vector<PathProb> enumerate_paths(const PolicyModel& m, const KnowledgeBase& kb,
                                             const EmbeddingTable& tab, EntityId origin,
                                             std::size_t length, std::size_t cap = 1'000'000) {
  detail::check_policy_width(m, kb);
  if (count_walks(kb, origin, length, cap) > cap)
    throw std::runtime_error("too many paths to enumerate; sample rollouts instead");
  std::vector<PathProb> out;
  ReasoningPath partial;
  partial.origin = origin;
  auto dfs = [&](auto&& self, EntityId cur, std::size_t depth, double prob) -> void {
    if (depth == length) {
      out.push_back({partial, prob});
      return;
    }
    const ReasonerState s = make_state(tab, cur, origin);
    const Vector q = detail::mask_renormalize(m.net.forward(s.features),
                                              kb.valid_relations(cur));
    partial.steps.push_back({kNoOp, cur});
    self(self, cur, depth + 1, prob * q(kNoOp));
    partial.steps.pop_back();
    const auto edges = kb.real_outgoing(cur);
    for (std::size_t i = 0; i < edges.size();) {
      std::size_t j = i;
      while (j < edges.size() && edges[j].relation == edges[i].relation) ++j;
      const double step = q(edges[i].relation) / static_cast<double>(j - i);
      for (std::size_t k = i; k < j; ++k) {
        partial.steps.push_back({edges[k].relation, edges[k].entity});
        self(self, edges[k].entity, depth + 1, prob * step);
        partial.steps.pop_back();
      }
      i = j;
    }
  };
  dfs(dfs, origin, 0, 1.0);
  return out;
}

/// Probability that a length-L rollout from origin terminates at each entity.
/// Exact dynamic program over the frontier; sums to 1 up to rounding.
inline std::map<EntityId, double> terminal_mass(const PolicyModel& m, const KnowledgeBase& kb,
                                                const EmbeddingTable& tab, EntityId origin,
                                                std::size_t length) {
  detail::check_policy_width(m, kb);
  std::map<EntityId, double> frontier{{origin, 1.0}};
  for (std::size_t t = 0; t < length; ++t) {
    std::map<EntityId, double> next;
    for (const auto& [e, mass] : frontier) {
      const ReasonerState s = make_state(tab, e, origin);
      const Vector q = detail::mask_renormalize(m.net.forward(s.features),
                                                kb.valid_relations(e));
      next[e] += mass * q(kNoOp);
      const auto edges = kb.real_outgoing(e);
      for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j].relation == edges[i].relation) ++j;
        const double share = mass * q(edges[i].relation) / static_cast<double>(j - i);
        for (std::size_t k = i; k < j; ++k) next[edges[k].entity] += share;
        i = j;
      }
    }
    frontier = std::move(next);
  }
  return frontier;
}

}  // namespace semcom
