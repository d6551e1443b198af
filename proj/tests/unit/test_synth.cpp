#include <set>
#include <tuple>

#include "doctest.h"
#include "semcom/synth.hpp"

using namespace semcom;

TEST_SUITE("synth") {

TEST_CASE("hits the requested density exactly") {
  const KnowledgeBase kb = generate_synthetic({100, 4, 3.0, 42});
  CHECK(kb.entity_count() == 100);
  CHECK(kb.relation_count() == 5);  // NO_OP + r1..r4
  CHECK(kb.triple_count() == 300);
  CHECK(kb.density() == doctest::Approx(3.0));

  std::set<std::tuple<EntityId, RelationId, EntityId>> distinct;
  for (const Triple& t : kb.triples()) {
    CHECK(t.head != t.tail);  // self loops off by default
    CHECK(t.relation >= 1);
    distinct.insert({t.head, t.relation, t.tail});
  }
  CHECK(distinct.size() == kb.triple_count());
}

TEST_CASE("same seed reproduces the base, different seed does not") {
  const KnowledgeBase a = generate_synthetic({50, 3, 2.0, 7});
  const KnowledgeBase b = generate_synthetic({50, 3, 2.0, 7});
  const KnowledgeBase c = generate_synthetic({50, 3, 2.0, 8});
  CHECK(a.triples() == b.triples());
  CHECK(a.triples() != c.triples());
}

TEST_CASE("adjacency agrees with the triple list") {
  const KnowledgeBase kb = generate_synthetic({30, 2, 1.5, 3});
  std::size_t via_adjacency = 0;
  for (EntityId e : kb.entities()) via_adjacency += kb.real_outgoing(e).size();
  CHECK(via_adjacency == kb.triple_count());
  for (const Triple& t : kb.triples()) CHECK(kb.has_triple(t));
}

TEST_CASE("self loops appear only when enabled") {
  // 1 entity, 1 relation: the only possible triple is the self loop
  CHECK_THROWS_AS(generate_synthetic({1, 1, 1.0, 0, false}), std::invalid_argument);
  const KnowledgeBase kb = generate_synthetic({1, 1, 1.0, 0, true});
  REQUIRE(kb.triple_count() == 1);
  CHECK(kb.triples()[0].head == kb.triples()[0].tail);
}

TEST_CASE("infeasible or degenerate configs are rejected") {
  CHECK_THROWS_AS(generate_synthetic({10, 1, 100.0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic({0, 1, 1.0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic({10, 0, 1.0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(generate_synthetic({10, 1, -1.0, 0}), std::invalid_argument);
  // zero density is fine: isolated entities only
  const KnowledgeBase kb = generate_synthetic({5, 1, 0.0, 0});
  CHECK(kb.triple_count() == 0);
  CHECK(kb.entity_count() == 5);
}

TEST_CASE("names survive a save/load cycle") {
  const KnowledgeBase kb = generate_synthetic({20, 3, 2.0, 99});
  for (EntityId e : kb.entities())
    CHECK(kb.entity_name(e) == "e" + std::to_string(e));
  for (RelationId r : kb.relations()) {
    if (r == kNoOp) continue;
    CHECK(kb.relation_name(r) == "r" + std::to_string(r));
  }
}

}  // TEST_SUITE
