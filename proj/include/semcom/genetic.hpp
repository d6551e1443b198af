#pragma once
// Genetic-algorithm reasoning baseline. A chromosome is a fixed-length
// vector of relation ids; decoding walks the base from the origin, repairing
// each gene to the nearest valid relation id (cyclically, preferring the
// upward direction) and always taking the smallest tail id, so decoding is
// deterministic. Fitness is the comparator score of the decoded path's
// embedding. Tournament selection, single-point crossover, per-gene
// mutation, with the best individuals carried over unchanged.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "semcom/comparator.hpp"
#include "semcom/embedding.hpp"
#include "semcom/knowledge_base.hpp"
#include "semcom/rng.hpp"

namespace semcom {

struct GAConfig {
  int population = 100;
  int generations = 50;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;  // per gene
  int tournament = 3;
  int elites = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline RelationId repair_gene(const KnowledgeBase& kb, EntityId at, RelationId gene) {
  const std::vector<RelationId> valid = kb.valid_relations(at);
  if (std::binary_search(valid.begin(), valid.end(), gene)) return gene;
  const auto r = static_cast<std::uint64_t>(kb.relation_count());
  for (std::uint64_t d = 1; d < r; ++d) {
    const auto up = static_cast<RelationId>((gene + d) % r);
    if (std::binary_search(valid.begin(), valid.end(), up)) return up;
    const auto down = static_cast<RelationId>((gene + r - d) % r);
    if (std::binary_search(valid.begin(), valid.end(), down)) return down;
  }
  return kNoOp;  // always valid
}

}  // namespace detail

/// Deterministic chromosome decoding: repaired relation, then the smallest
/// tail id at every step.
inline ReasoningPath decode_chromosome(const KnowledgeBase& kb, EntityId origin,
                                       std::span<const RelationId> genes) {
  ReasoningPath p;
  p.origin = origin;
  EntityId cur = origin;
  for (RelationId gene : genes) {
    const RelationId r = detail::repair_gene(kb, cur, gene);
    const EntityId next = r == kNoOp ? cur : kb.tails(cur, r).front();
    p.steps.push_back({r, next});
    cur = next;
  }
  return p;
}

/// Evolve a reasoning path from origin with `length` steps, maximizing the
/// comparator score of the decoded path embedding. Returns the best path
/// ever decoded. best_per_generation, when given, receives the best fitness
/// after the initial evaluation and after each generation.
inline ReasoningPath ga_reason(const KnowledgeBase& kb, const EmbeddingTable& tab,
                               const ComparatorModel& comparator, EntityId origin,
                               std::size_t length, const GAConfig& cfg,
                               std::vector<double>* best_per_generation = nullptr) {
  if (cfg.population < 1 || cfg.generations < 0 || cfg.tournament < 1)
    throw std::invalid_argument("ga_reason: population and tournament must be >= 1");
  if (cfg.crossover_rate < 0.0 || cfg.crossover_rate > 1.0 || cfg.mutation_rate < 0.0 ||
      cfg.mutation_rate > 1.0)
    throw std::invalid_argument("ga_reason: rates must lie in [0, 1]");
  if (cfg.elites < 0 || cfg.elites > cfg.population)
    throw std::invalid_argument("ga_reason: elites out of range");
  if (!kb.has_entity(origin)) throw std::runtime_error("ga_reason: unknown origin entity");

  using Chromosome = std::vector<RelationId>;
  const auto r = static_cast<std::uint64_t>(kb.relation_count());
  Rng rng(mix_seed(cfg.seed, 0x6e9eu));

  const auto pop_n = static_cast<std::size_t>(cfg.population);
  std::vector<Chromosome> pop(pop_n, Chromosome(length));
  for (Chromosome& c : pop)
    for (RelationId& g : c) g = static_cast<RelationId>(rng.below(r));

  std::vector<double> fitness(pop_n);
  std::vector<std::size_t> rank(pop_n);
  const auto evaluate = [&] {
    for (std::size_t i = 0; i < pop_n; ++i) {
      const ReasoningPath p = decode_chromosome(kb, origin, pop[i]);
      fitness[i] = feature(comparator, path_embedding(tab, p));
    }
    for (std::size_t i = 0; i < pop_n; ++i) rank[i] = i;
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
  };

  evaluate();
  Chromosome best = pop[rank[0]];
  double best_fitness = fitness[rank[0]];
  if (best_per_generation) best_per_generation->push_back(best_fitness);

  const auto tournament_pick = [&]() -> std::size_t {
    std::size_t winner = rng.below(pop_n);
    for (int t = 1; t < cfg.tournament; ++t) {
      const std::size_t challenger = rng.below(pop_n);
      if (fitness[challenger] > fitness[winner]) winner = challenger;
    }
    return winner;
  };

  for (int gen = 0; gen < cfg.generations; ++gen) {
    std::vector<Chromosome> next;
    next.reserve(pop_n);
    for (int e = 0; e < cfg.elites && next.size() < pop_n; ++e) next.push_back(pop[rank[e]]);
    while (next.size() < pop_n) {
      Chromosome a = pop[tournament_pick()];
      const Chromosome& b = pop[tournament_pick()];
      if (length > 1 && rng.uniform() < cfg.crossover_rate) {
        const std::size_t cut = 1 + rng.below(length - 1);
        std::copy(b.begin() + static_cast<std::ptrdiff_t>(cut), b.end(),
                  a.begin() + static_cast<std::ptrdiff_t>(cut));
      }
      for (RelationId& g : a)
        if (rng.uniform() < cfg.mutation_rate) g = static_cast<RelationId>(rng.below(r));
      next.push_back(std::move(a));
    }
    pop = std::move(next);
    evaluate();
    if (fitness[rank[0]] > best_fitness) {
      best_fitness = fitness[rank[0]];
      best = pop[rank[0]];
    }
    if (best_per_generation) best_per_generation->push_back(best_fitness);
  }
  return decode_chromosome(kb, origin, best);
}

/// GA counterpart of evaluate_accuracy: a test path counts as recovered if
/// any of `attempts` independently seeded GA runs reaches its terminal.
inline double evaluate_accuracy_ga(const KnowledgeBase& kb, const EmbeddingTable& tab,
                                   const ComparatorModel& comparator, const PathSet& test,
                                   int attempts, const GAConfig& cfg, std::uint64_t seed) {
  if (test.paths.empty()) throw std::invalid_argument("evaluate_accuracy_ga: no test paths");
  if (attempts < 1) throw std::invalid_argument("evaluate_accuracy_ga: need attempts");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.paths.size(); ++i) {
    const ReasoningPath& target = test.paths[i];
    for (int s = 0; s < attempts; ++s) {
      GAConfig run = cfg;
      run.seed = mix_seed(seed, i, static_cast<std::uint64_t>(s));
      const ReasoningPath got =
          ga_reason(kb, tab, comparator, target.origin, test.hop_bound, run);
      if (got.terminal() == target.terminal()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(test.paths.size());
}

}  // namespace semcom
