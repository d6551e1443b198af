#pragma once
// Knowledge base: named entities, named relations, and directed labeled
// triples, plus the reasoning-path machinery built on top (path validity,
// expert sampling, density-ranked partitioning, TSV persistence).
//
// Ids are dense uint32 handles assigned in first-appearance order. Relation
// id 0 is reserved for NO_OP, a self-loop implicitly available at every
// entity; NO_OP never appears in the stored triple list. Sub-graphs produced
// by partition_by_density keep the parent's ids, names and full relation
// table, so embedding tables and policy heads transfer unchanged.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "semcom/rng.hpp"

namespace semcom {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

inline constexpr RelationId kNoOp = 0;
inline constexpr const char* kNoOpName = "NO_OP";

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;
  friend bool operator==(const Triple&, const Triple&) = default;
};

/// One labeled edge endpoint: (relation, entity). Ordered for binary search.
struct Action {
  RelationId relation;
  EntityId entity;
  friend auto operator<=>(const Action&, const Action&) = default;
};

struct PathStep {
  RelationId relation;
  EntityId entity;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};

/// A reasoning path: origin entity plus a fixed number of steps. Early
/// termination is represented by trailing NO_OP self-loops, so every path in
/// a batch has the same length.
struct ReasoningPath {
  EntityId origin = 0;
  std::vector<PathStep> steps;

  EntityId terminal() const { return steps.empty() ? origin : steps.back().entity; }
  friend bool operator==(const ReasoningPath&, const ReasoningPath&) = default;
};

/// Canonical integer key (origin, r1, e1, r2, e2, ...) for maps over paths.
inline std::vector<std::uint32_t> path_key(const ReasoningPath& p) {
  std::vector<std::uint32_t> key;
  key.reserve(1 + 2 * p.steps.size());
  key.push_back(p.origin);
  for (const PathStep& s : p.steps) {
    key.push_back(s.relation);
    key.push_back(s.entity);
  }
  return key;
}

enum class PathSource { expert, generated };

struct PathSet {
  std::vector<ReasoningPath> paths;
  PathSource source = PathSource::expert;
  std::size_t hop_bound = 0;  // shared length of every member
};

class KnowledgeBase {
 public:
  KnowledgeBase() {
    relation_names_.emplace(kNoOp, kNoOpName);
    relation_lookup_.emplace(kNoOpName, kNoOp);
    relation_ids_.push_back(kNoOp);
  }

  /// Low-level builder used by partitioning and tests: explicit ids. Entity
  /// and relation lists must be unique; relation id 0 must be NO_OP if given.
  static KnowledgeBase from_parts(
      const std::vector<std::pair<EntityId, std::string>>& entities,
      const std::vector<std::pair<RelationId, std::string>>& relations,
      const std::vector<Triple>& triples) {
    KnowledgeBase kb;
    for (const auto& [id, name] : entities) kb.insert_entity(id, name);
    for (const auto& [id, name] : relations) {
      if (id == kNoOp) {
        if (name != kNoOpName)
          throw std::runtime_error("relation id 0 is reserved for NO_OP");
        continue;
      }
      kb.insert_relation(id, name);
    }
    for (const Triple& t : triples) kb.add_triple(t);
    return kb;
  }

  EntityId add_entity(const std::string& name) {
    if (entity_lookup_.contains(name))
      throw std::runtime_error("duplicate entity name: " + name);
    const EntityId id = next_entity_id_++;
    insert_entity(id, name);
    return id;
  }

  RelationId add_relation(const std::string& name) {
    if (name == kNoOpName)
      throw std::runtime_error("relation name NO_OP is reserved");
    if (relation_lookup_.contains(name))
      throw std::runtime_error("duplicate relation name: " + name);
    const RelationId id = next_relation_id_++;
    insert_relation(id, name);
    return id;
  }

  EntityId ensure_entity(const std::string& name) {
    auto it = entity_lookup_.find(name);
    return it != entity_lookup_.end() ? it->second : add_entity(name);
  }

  RelationId ensure_relation(const std::string& name) {
    auto it = relation_lookup_.find(name);
    return it != relation_lookup_.end() ? it->second : add_relation(name);
  }

  /// Insert a triple; duplicates are ignored. Returns true if stored.
  bool add_triple(const Triple& t) {
    if (!has_entity(t.head) || !has_entity(t.tail))
      throw std::runtime_error("triple references unknown entity id");
    if (t.relation == kNoOp)
      throw std::runtime_error("NO_OP cannot appear in stored triples");
    if (!relation_names_.contains(t.relation))
      throw std::runtime_error("triple references unknown relation id");
    auto& out = outgoing_[t.head];
    const Action a{t.relation, t.tail};
    auto pos = std::lower_bound(out.begin(), out.end(), a);
    if (pos != out.end() && *pos == a) return false;
    out.insert(pos, a);
    auto& in = incoming_[t.tail];
    const Action b{t.relation, t.head};
    in.insert(std::lower_bound(in.begin(), in.end(), b), b);
    triples_.push_back(t);
    return true;
  }

  std::size_t entity_count() const { return entity_ids_.size(); }
  std::size_t relation_count() const { return relation_ids_.size(); }
  std::size_t triple_count() const { return triples_.size(); }

  const std::vector<EntityId>& entities() const { return entity_ids_; }
  const std::vector<RelationId>& relations() const { return relation_ids_; }
  const std::vector<Triple>& triples() const { return triples_; }

  bool has_entity(EntityId e) const { return entity_names_.contains(e); }

  bool has_triple(const Triple& t) const {
    auto it = outgoing_.find(t.head);
    if (it == outgoing_.end()) return false;
    const Action a{t.relation, t.tail};
    return std::binary_search(it->second.begin(), it->second.end(), a);
  }

  const std::string& entity_name(EntityId e) const {
    auto it = entity_names_.find(e);
    if (it == entity_names_.end())
      throw std::runtime_error("unknown entity id " + std::to_string(e));
    return it->second;
  }

  const std::string& relation_name(RelationId r) const {
    auto it = relation_names_.find(r);
    if (it == relation_names_.end())
      throw std::runtime_error("unknown relation id " + std::to_string(r));
    return it->second;
  }

  std::optional<EntityId> entity_id(const std::string& name) const {
    auto it = entity_lookup_.find(name);
    if (it == entity_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<RelationId> relation_id(const std::string& name) const {
    auto it = relation_lookup_.find(name);
    if (it == relation_lookup_.end()) return std::nullopt;
    return it->second;
  }

  /// All actions available at e: the NO_OP self-loop plus every stored edge,
  /// sorted by (relation, tail).
  std::vector<Action> outgoing(EntityId e) const {
    require_entity(e);
    std::vector<Action> out;
    auto it = outgoing_.find(e);
    out.reserve(1 + (it != outgoing_.end() ? it->second.size() : 0));
    out.push_back({kNoOp, e});  // relation 0 sorts first
    if (it != outgoing_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
  }

  /// Stored edges only (no NO_OP), sorted by (relation, tail).
  std::span<const Action> real_outgoing(EntityId e) const {
    require_entity(e);
    auto it = outgoing_.find(e);
    if (it == outgoing_.end()) return {};
    return it->second;
  }

  /// Stored edges arriving at e as (relation, head), sorted. No NO_OP entry.
  std::span<const Action> incoming(EntityId e) const {
    require_entity(e);
    auto it = incoming_.find(e);
    if (it == incoming_.end()) return {};
    return it->second;
  }

  /// Tails reachable from e via relation r, ascending. NO_OP yields {e}.
  std::vector<EntityId> tails(EntityId e, RelationId r) const {
    if (r == kNoOp) {
      require_entity(e);
      return {e};
    }
    std::vector<EntityId> out;
    for (const Action& a : real_outgoing(e)) {
      if (a.relation < r) continue;
      if (a.relation > r) break;
      out.push_back(a.entity);
    }
    return out;
  }

  /// Relations with at least one action at e, ascending; always includes NO_OP.
  std::vector<RelationId> valid_relations(EntityId e) const {
    std::vector<RelationId> out{kNoOp};
    RelationId prev = kNoOp;
    for (const Action& a : real_outgoing(e)) {
      if (a.relation != prev) {
        out.push_back(a.relation);
        prev = a.relation;
      }
    }
    return out;
  }

  double density() const {
    return entity_count() == 0
               ? 0.0
               : static_cast<double>(triple_count()) / static_cast<double>(entity_count());
  }

  void save_triples(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write triple file: " + path);
    for (const Triple& t : triples_) {
      out << entity_name(t.head) << '\t' << relation_name(t.relation) << '\t'
          << entity_name(t.tail) << '\n';
    }
  }

  /// Parse a TSV triple file: head<TAB>relation<TAB>tail per line, '#' lines
  /// and blank lines skipped, duplicates ignored. Ids follow first appearance.
  static KnowledgeBase load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open triple file: " + path);
    KnowledgeBase kb;
    std::string line;
    std::size_t lineno = 0;
    std::size_t parsed = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto bad = [&](const std::string& why) {
        return std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
      };
      const std::size_t t1 = line.find('\t');
      const std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos ||
          line.find('\t', t2 + 1) != std::string::npos)
        throw bad("expected exactly 3 tab-separated fields");
      const std::string head = line.substr(0, t1);
      const std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
      const std::string tail = line.substr(t2 + 1);
      if (head.empty() || rel.empty() || tail.empty()) throw bad("empty field");
      if (rel == kNoOpName) throw bad("relation name NO_OP is reserved");
      const EntityId h = kb.ensure_entity(head);
      const RelationId r = kb.ensure_relation(rel);
      const EntityId t = kb.ensure_entity(tail);
      kb.add_triple({h, r, t});
      ++parsed;
    }
    if (parsed == 0) throw std::runtime_error("no triples in file: " + path);
    return kb;
  }

 private:
  void require_entity(EntityId e) const {
    if (!has_entity(e))
      throw std::runtime_error("unknown entity id " + std::to_string(e));
  }

  void insert_entity(EntityId id, const std::string& name) {
    if (entity_names_.contains(id))
      throw std::runtime_error("duplicate entity id " + std::to_string(id));
    if (entity_lookup_.contains(name))
      throw std::runtime_error("duplicate entity name: " + name);
    entity_names_.emplace(id, name);
    entity_lookup_.emplace(name, id);
    entity_ids_.insert(std::lower_bound(entity_ids_.begin(), entity_ids_.end(), id), id);
    next_entity_id_ = std::max(next_entity_id_, id + 1);
  }

  void insert_relation(RelationId id, const std::string& name) {
    if (relation_names_.contains(id))
      throw std::runtime_error("duplicate relation id " + std::to_string(id));
    if (relation_lookup_.contains(name))
      throw std::runtime_error("duplicate relation name: " + name);
    relation_names_.emplace(id, name);
    relation_lookup_.emplace(name, id);
    relation_ids_.insert(std::lower_bound(relation_ids_.begin(), relation_ids_.end(), id), id);
    next_relation_id_ = std::max(next_relation_id_, id + 1);
  }

  std::vector<EntityId> entity_ids_;      // sorted
  std::vector<RelationId> relation_ids_;  // sorted, includes NO_OP
  std::vector<Triple> triples_;           // insertion order
  std::unordered_map<EntityId, std::vector<Action>> outgoing_;
  std::unordered_map<EntityId, std::vector<Action>> incoming_;
  std::unordered_map<EntityId, std::string> entity_names_;
  std::unordered_map<RelationId, std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_lookup_;
  std::unordered_map<std::string, RelationId> relation_lookup_;
  EntityId next_entity_id_ = 0;
  RelationId next_relation_id_ = 1;
};

/// True iff origin and every step are consistent with the base: each step is
/// either a stored triple from the previous entity or a NO_OP self-loop.
inline bool path_valid(const KnowledgeBase& kb, const ReasoningPath& p) {
  if (!kb.has_entity(p.origin)) return false;
  EntityId cur = p.origin;
  for (const PathStep& s : p.steps) {
    if (s.relation == kNoOp) {
      if (s.entity != cur) return false;
    } else {
      if (!kb.has_entity(s.entity)) return false;
      if (!kb.has_triple({cur, s.relation, s.entity})) return false;
    }
    cur = s.entity;
  }
  return true;
}

/// Split entities into k disjoint blocks (uniformly at random under seed; the
/// last block absorbs any remainder), induce the sub-graph on each block, and
/// return the blocks ordered by descending triple density. Ties keep the
/// random block order, so the result is deterministic.
inline std::vector<KnowledgeBase> partition_by_density(const KnowledgeBase& kb,
                                                       std::size_t k,
                                                       std::uint64_t seed = 0) {
  if (k == 0) throw std::invalid_argument("partition_by_density: k must be positive");
  if (k > kb.entity_count())
    throw std::invalid_argument("partition_by_density: k exceeds entity count");

  std::vector<EntityId> order = kb.entities();
  Rng rng(mix_seed(seed, 0x7041u));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);

  const std::size_t block = order.size() / k;
  std::unordered_map<EntityId, std::size_t> block_of;
  block_of.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    block_of.emplace(order[i], std::min(i / block, k - 1));

  std::vector<std::pair<RelationId, std::string>> rels;
  for (RelationId r : kb.relations()) rels.emplace_back(r, kb.relation_name(r));

  std::vector<std::vector<std::pair<EntityId, std::string>>> ents(k);
  for (std::size_t i = 0; i < order.size(); ++i)
    ents[std::min(i / block, k - 1)].emplace_back(order[i], kb.entity_name(order[i]));
  for (auto& e : ents) std::sort(e.begin(), e.end());

  std::vector<std::vector<Triple>> tris(k);
  for (const Triple& t : kb.triples()) {
    const std::size_t bh = block_of.at(t.head);
    if (bh == block_of.at(t.tail)) tris[bh].push_back(t);
  }

  std::vector<KnowledgeBase> parts;
  parts.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    parts.push_back(KnowledgeBase::from_parts(ents[i], rels, tris[i]));
  std::stable_sort(parts.begin(), parts.end(),
                   [](const KnowledgeBase& a, const KnowledgeBase& b) {
                     return a.density() > b.density();
                   });
  return parts;
}

/// Sample n expert paths of exactly `hops` real steps (no NO_OP). Start
/// entities are uniform over those admitting a full-length walk; each step is
/// uniform over the actions that keep completion possible. Throws if no
/// entity admits a walk of the requested length.
inline PathSet sample_expert_paths(const KnowledgeBase& kb, std::size_t n,
                                   std::size_t hops, std::uint64_t seed) {
  if (hops == 0) throw std::invalid_argument("sample_expert_paths: hops must be >= 1");

  // reach[t] = entities from which a t-step real walk exists
  std::vector<std::unordered_set<EntityId>> reach(hops + 1);
  for (EntityId e : kb.entities()) reach[0].insert(e);
  for (std::size_t t = 1; t <= hops; ++t) {
    for (EntityId e : kb.entities()) {
      for (const Action& a : kb.real_outgoing(e)) {
        if (reach[t - 1].contains(a.entity)) {
          reach[t].insert(e);
          break;
        }
      }
    }
  }

  std::vector<EntityId> starts;
  for (EntityId e : kb.entities())
    if (reach[hops].contains(e)) starts.push_back(e);
  if (starts.empty())
    throw std::runtime_error("no entity admits a " + std::to_string(hops) + "-hop path");

  Rng rng(seed);
  PathSet out;
  out.source = PathSource::expert;
  out.hop_bound = hops;
  out.paths.reserve(n);
  std::vector<Action> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    ReasoningPath p;
    p.origin = starts[rng.below(starts.size())];
    EntityId cur = p.origin;
    for (std::size_t t = 1; t <= hops; ++t) {
      candidates.clear();
      for (const Action& a : kb.real_outgoing(cur))
        if (reach[hops - t].contains(a.entity)) candidates.push_back(a);
      const Action& pick = candidates[rng.below(candidates.size())];
      p.steps.push_back({pick.relation, pick.entity});
      cur = pick.entity;
    }
    out.paths.push_back(std::move(p));
  }
  return out;
}

/// Write paths as name TSV: origin, then (relation, entity) per step.
inline void save_paths(const PathSet& ps, const KnowledgeBase& kb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write path file: " + path);
  for (const ReasoningPath& p : ps.paths) {
    out << kb.entity_name(p.origin);
    for (const PathStep& s : p.steps)
      out << '\t' << kb.relation_name(s.relation) << '\t' << kb.entity_name(s.entity);
    out << '\n';
  }
}

/// Load a path file against an existing base. Every line must resolve to
/// known names, share one length, and satisfy path validity.
inline PathSet load_paths(const std::string& path, const KnowledgeBase& kb, PathSource source) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open path file: " + path);
  PathSet out;
  out.source = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto bad = [&](const std::string& why) {
      return std::runtime_error(path + ":" + std::to_string(lineno) + ": " + why);
    };
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() % 2 == 0) throw bad("expected an odd number of fields");
    ReasoningPath p;
    const auto eid = kb.entity_id(fields[0]);
    if (!eid) throw bad("unknown entity: " + fields[0]);
    p.origin = *eid;
    for (std::size_t i = 1; i + 1 < fields.size(); i += 2) {
      const auto rid = kb.relation_id(fields[i]);
      if (!rid) throw bad("unknown relation: " + fields[i]);
      const auto tid = kb.entity_id(fields[i + 1]);
      if (!tid) throw bad("unknown entity: " + fields[i + 1]);
      p.steps.push_back({*rid, *tid});
    }
    if (!path_valid(kb, p)) throw bad("path not realizable in this knowledge base");
    if (!out.paths.empty() && p.steps.size() != out.hop_bound)
      throw bad("inconsistent path length");
    out.hop_bound = p.steps.size();
    out.paths.push_back(std::move(p));
  }
  if (out.paths.empty()) throw std::runtime_error("no paths in file: " + path);
  return out;
}

}  // namespace semcom
