#pragma once
// Translation-based knowledge-graph embeddings. Entities and relations share
// one d-dimensional space; a triple (h, r, t) is scored by ||h + r - t|| and
// trained with a margin ranking loss against corrupted triples. Entity
// vectors are kept on the unit sphere; relation vectors are unconstrained.
// The NO_OP relation is pinned to the zero vector and never updated, so
// NO_OP-padded paths embed the same as their unpadded prefix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "semcom/knowledge_base.hpp"
#include "semcom/neural.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct TransEConfig {
  int dim = 100;
  double margin = 1.0;
  double learning_rate = 0.01;
  int epochs = 100;
  int negatives_per_positive = 1;
  std::uint64_t seed = 0;
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("EmbeddingTable: dim must be positive");
  }

  int dim() const { return dim_; }

  void set_entity(EntityId id, Vector v) {
    check_dim(v);
    if (!entities_.contains(id))
      entity_ids_.insert(std::lower_bound(entity_ids_.begin(), entity_ids_.end(), id), id);
    entities_[id] = std::move(v);
  }

  void set_relation(RelationId id, Vector v) {
    check_dim(v);
    if (!relations_.contains(id))
      relation_ids_.insert(std::lower_bound(relation_ids_.begin(), relation_ids_.end(), id), id);
    relations_[id] = std::move(v);
  }

  bool has_entity(EntityId id) const { return entities_.contains(id); }
  bool has_relation(RelationId id) const { return relations_.contains(id); }

  const Vector& entity(EntityId id) const {
    auto it = entities_.find(id);
    if (it == entities_.end())
      throw std::runtime_error("no embedding for entity id " + std::to_string(id));
    return it->second;
  }

  const Vector& relation(RelationId id) const {
    auto it = relations_.find(id);
    if (it == relations_.end())
      throw std::runtime_error("no embedding for relation id " + std::to_string(id));
    return it->second;
  }

  Vector& entity_ref(EntityId id) { return entities_.at(id); }
  Vector& relation_ref(RelationId id) { return relations_.at(id); }

  const std::vector<EntityId>& entity_ids() const { return entity_ids_; }
  const std::vector<RelationId>& relation_ids() const { return relation_ids_; }

  /// CSV rows id,dim,v0..v{d-1} with ids written as e<n> / r<n>, entities
  /// first, ascending id. %.9g keeps reload error within 1e-6.
  void save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embedding file: " + path);
    out << "id,dim";
    for (int i = 0; i < dim_; ++i) out << ",v" << i;
    out << '\n';
    char buf[32];
    auto row = [&](char kind, std::uint32_t id, const Vector& v) {
      out << kind << id << ',' << dim_;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", v(i));
        out << ',' << buf;
      }
      out << '\n';
    };
    for (EntityId id : entity_ids_) row('e', id, entities_.at(id));
    for (RelationId id : relation_ids_) row('r', id, relations_.at(id));
  }

  static EmbeddingTable load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty embedding file: " + path);
    EmbeddingTable tab;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto bad = [&](const std::string& why) {
        return std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
      };
      std::vector<std::string> f;
      std::size_t start = 0;
      for (;;) {
        const std::size_t c = line.find(',', start);
        f.push_back(line.substr(start, c - start));
        if (c == std::string::npos) break;
        start = c + 1;
      }
      if (f.size() < 3) throw bad("too few fields");
      const char kind = f[0].empty() ? '?' : f[0][0];
      if (kind != 'e' && kind != 'r') throw bad("id must start with e or r");
      const auto id = static_cast<std::uint32_t>(std::stoul(f[0].substr(1)));
      const int d = std::stoi(f[1]);
      if (tab.dim_ == 0) tab.dim_ = d;
      if (d != tab.dim_ || static_cast<int>(f.size()) != 2 + d)
        throw bad("dimension mismatch");
      Vector v(d);
      for (int i = 0; i < d; ++i) v(i) = std::stod(f[2 + i]);
      if (kind == 'e')
        tab.set_entity(id, std::move(v));
      else
        tab.set_relation(id, std::move(v));
    }
    if (tab.entity_ids_.empty() && tab.relation_ids_.empty())
      throw std::runtime_error("no embeddings in file: " + path);
    return tab;
  }

 private:
  void check_dim(const Vector& v) const {
    if (dim_ == 0) throw std::logic_error("EmbeddingTable: dimension not set");
    if (v.size() != dim_) throw std::invalid_argument("EmbeddingTable: wrong vector size");
  }

  int dim_ = 0;
  std::unordered_map<EntityId, Vector> entities_;
  std::unordered_map<RelationId, Vector> relations_;
  std::vector<EntityId> entity_ids_;      // sorted
  std::vector<RelationId> relation_ids_;  // sorted
};

inline double transe_score(const EmbeddingTable& tab, const Triple& t) {
  return (tab.entity(t.head) + tab.relation(t.relation) - tab.entity(t.tail)).norm();
}

/// Margin ranking loss for one positive/corrupted pair.
inline double transe_pair_loss(const Vector& h, const Vector& r, const Vector& t,
                               const Vector& ch, const Vector& ct, double margin) {
  const double pos = (h + r - t).norm();
  const double neg = (ch + r - ct).norm();
  return std::max(0.0, margin + pos - neg);
}

struct TransEPairGradients {
  double loss = 0.0;
  Vector head, rel, tail, neg_head, neg_tail;
};

/// Analytic gradients of transe_pair_loss. At the hinge kink and at zero
/// distance the subgradient 0 is used.
inline TransEPairGradients transe_pair_gradients(const Vector& h, const Vector& r,
                                                 const Vector& t, const Vector& ch,
                                                 const Vector& ct, double margin) {
  TransEPairGradients g;
  const Vector dp = h + r - t;
  const Vector dn = ch + r - ct;
  const double pos = dp.norm();
  const double neg = dn.norm();
  g.loss = std::max(0.0, margin + pos - neg);
  g.head = Vector::Zero(h.size());
  g.rel = Vector::Zero(h.size());
  g.tail = Vector::Zero(h.size());
  g.neg_head = Vector::Zero(h.size());
  g.neg_tail = Vector::Zero(h.size());
  if (g.loss <= 0.0) return g;
  if (pos > 1e-12) {
    const Vector u = dp / pos;
    g.head = u;
    g.rel += u;
    g.tail = -u;
  }
  if (neg > 1e-12) {
    const Vector u = dn / neg;
    g.neg_head = -u;
    g.rel -= u;
    g.neg_tail = u;
  }
  return g;
}

/// Train embeddings by SGD over shuffled triples with uniform head-or-tail
/// corruption. Entity vectors are renormalized after every touched update.
/// Per-epoch mean hinge loss (measured before each update) is appended to
/// epoch_loss when provided.
inline EmbeddingTable train_embeddings(const KnowledgeBase& kb, const TransEConfig& cfg,
                                       std::vector<double>* epoch_loss = nullptr) {
  if (kb.triple_count() == 0)
    throw std::invalid_argument("train_embeddings: knowledge base has no triples");
  if (cfg.dim <= 0) throw std::invalid_argument("train_embeddings: dim must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("train_embeddings: negative epochs");

  EmbeddingTable tab(cfg.dim);
  Rng rng(mix_seed(cfg.seed, 0xe3bu));
  const double init = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
  for (EntityId e : kb.entities()) {
    Vector v(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) v(i) = rng.uniform(-init, init);
    const double n = v.norm();
    if (n > 1e-12) v /= n;
    tab.set_entity(e, std::move(v));
  }
  for (RelationId r : kb.relations()) {
    if (r == kNoOp) {
      tab.set_relation(r, Vector::Zero(cfg.dim));
      continue;
    }
    Vector v(cfg.dim);
    for (int i = 0; i < cfg.dim; ++i) v(i) = rng.uniform(-init, init);
    tab.set_relation(r, std::move(v));
  }

  const std::vector<EntityId>& ents = kb.entities();
  if (ents.size() < 2) return tab;  // corruption impossible, nothing to rank against

  std::vector<std::size_t> order(kb.triple_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t idx : order) {
      const Triple& t = kb.triples()[idx];
      for (int k = 0; k < cfg.negatives_per_positive; ++k) {
        const bool corrupt_head = rng.uniform() < 0.5;
        EntityId corrupted;
        do {
          corrupted = ents[rng.below(ents.size())];
        } while (corrupted == (corrupt_head ? t.head : t.tail));
        const EntityId ch = corrupt_head ? corrupted : t.head;
        const EntityId ct = corrupt_head ? t.tail : corrupted;
        const TransEPairGradients g = transe_pair_gradients(
            tab.entity(t.head), tab.relation(t.relation), tab.entity(t.tail),
            tab.entity(ch), tab.entity(ct), cfg.margin);
        loss_sum += g.loss;
        ++loss_n;
        if (g.loss <= 0.0) continue;
        const double lr = cfg.learning_rate;
        tab.entity_ref(t.head) -= lr * g.head;
        tab.relation_ref(t.relation) -= lr * g.rel;
        tab.entity_ref(t.tail) -= lr * g.tail;
        tab.entity_ref(ch) -= lr * g.neg_head;
        tab.entity_ref(ct) -= lr * g.neg_tail;
        for (EntityId e : {t.head, t.tail, ch, ct}) {
          Vector& v = tab.entity_ref(e);
          const double n = v.norm();
          if (n > 1e-12) v /= n;
        }
      }
    }
    if (epoch_loss) epoch_loss->push_back(loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0);
  }
  return tab;
}

/// Path embedding: the sum of the step relation vectors. Entities contribute
/// nothing, so paths with equal relation multisets coincide.
inline Vector path_embedding(const EmbeddingTable& tab, const ReasoningPath& p) {
  Vector v = Vector::Zero(tab.dim());
  for (const PathStep& s : p.steps) v += tab.relation(s.relation);
  return v;
}

/// k nearest candidates to v by Euclidean distance, ascending, ties broken by
/// ascending id. k is clamped to the candidate count.
inline std::vector<std::pair<EntityId, double>> nearest_entities(
    const EmbeddingTable& tab, const Vector& v, std::size_t k,
    std::span<const EntityId> candidates) {
  if (v.size() != tab.dim())
    throw std::invalid_argument("nearest_entities: query dimension mismatch");
  std::vector<std::pair<EntityId, double>> scored;
  scored.reserve(candidates.size());
  for (EntityId e : candidates) scored.emplace_back(e, (tab.entity(e) - v).norm());
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

inline std::vector<std::pair<EntityId, double>> nearest_entities(const EmbeddingTable& tab,
                                                                 const Vector& v,
                                                                 std::size_t k) {
  return nearest_entities(tab, v, k, tab.entity_ids());
}

}  // namespace semcom
