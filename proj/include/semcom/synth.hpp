#pragma once
// Synthetic knowledge-base generator: uniform random triples at a requested
// density (triples per entity). Entities are named e0..e{N-1} and relations
// r1..r{K}, so generated bases survive a TSV round trip by name.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "semcom/knowledge_base.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct SynthConfig {
  std::size_t entities = 100;
  std::size_t relations = 4;
  double density = 2.0;  // target triples per entity
  std::uint64_t seed = 0;
  bool allow_self_loops = false;
};

inline KnowledgeBase generate_synthetic(const SynthConfig& cfg) {
  if (cfg.entities == 0) throw std::invalid_argument("synth: need at least one entity");
  if (cfg.relations == 0) throw std::invalid_argument("synth: need at least one relation");
  if (cfg.density < 0.0) throw std::invalid_argument("synth: density must be non-negative");

  const auto target = static_cast<std::size_t>(std::llround(cfg.density * static_cast<double>(cfg.entities)));
  const std::size_t tail_choices = cfg.entities - (cfg.allow_self_loops ? 0 : 1);
  const std::size_t max_triples = cfg.entities * cfg.relations * tail_choices;
  if (target > max_triples)
    throw std::invalid_argument("synth: density " + std::to_string(cfg.density) +
                                " exceeds the distinct-triple capacity");

  KnowledgeBase kb;
  for (std::size_t i = 0; i < cfg.entities; ++i) kb.add_entity("e" + std::to_string(i));
  for (std::size_t i = 1; i <= cfg.relations; ++i) kb.add_relation("r" + std::to_string(i));

  Rng rng(cfg.seed);
  std::size_t placed = 0;
  std::size_t attempts = 0;
  const std::size_t attempt_cap = 1000 + 100 * target;
  while (placed < target) {
    if (++attempts > attempt_cap)
      throw std::runtime_error("synth: rejection sampling stalled; lower the density");
    const auto h = static_cast<EntityId>(rng.below(cfg.entities));
    const auto r = static_cast<RelationId>(1 + rng.below(cfg.relations));
    const auto t = static_cast<EntityId>(rng.below(cfg.entities));
    if (!cfg.allow_self_loops && h == t) continue;
    if (kb.add_triple({h, r, t})) ++placed;
  }
  return kb;
}

}  // namespace semcom
