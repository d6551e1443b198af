#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "semcom/embedding.hpp"
#include "semcom/synth.hpp"
#include "../common/test_util.hpp"

using namespace semcom;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

KnowledgeBase two_cluster_base() {
  // r1 maps cluster {a,b,c} onto {x,y,z} elementwise and r2 maps it back, so
  // a single translation vector per relation can satisfy every triple; cyclic
  // structures would have no consistent translation to converge to.
  KnowledgeBase kb;
  const EntityId a = kb.add_entity("a"), b = kb.add_entity("b"), c = kb.add_entity("c");
  const EntityId x = kb.add_entity("x"), y = kb.add_entity("y"), z = kb.add_entity("z");
  const RelationId r1 = kb.add_relation("r1"), r2 = kb.add_relation("r2");
  kb.add_triple({a, r1, x});
  kb.add_triple({b, r1, y});
  kb.add_triple({c, r1, z});
  kb.add_triple({x, r2, a});
  kb.add_triple({y, r2, b});
  kb.add_triple({z, r2, c});
  return kb;
}

}  // namespace

TEST_SUITE("embedding") {

TEST_CASE("triple score is the translation residual norm") {
  EmbeddingTable tab(3);
  tab.set_entity(0, vec({1, 0, 0}));
  tab.set_entity(1, vec({0, 1, 0}));
  tab.set_relation(1, vec({-1, 1, 0}));
  CHECK(transe_score(tab, {0, 1, 1}) == doctest::Approx(0.0));
  tab.set_relation(2, vec({0, 0, 2}));
  CHECK(transe_score(tab, {0, 2, 1}) == doctest::Approx(std::sqrt(6.0)));
}

TEST_CASE("pair loss is hinged at the margin") {
  const Vector h = vec({1, 0}), r = vec({0, 1}), t = vec({1, 1});
  const Vector ch = vec({0, 0}), ct = vec({5, 5});
  // pos = 0, neg = ||(5,4)|| ≈ 6.4, margin 1 -> clamped to zero
  CHECK(transe_pair_loss(h, r, t, ch, ct, 1.0) == 0.0);
  // swap roles: pos ≈ 6.4, neg = 0 -> 1 + 6.4
  const double active = transe_pair_loss(ch, r, ct, h, t, 1.0);
  CHECK(active == doctest::Approx(1.0 + std::hypot(5.0, 4.0)));
}

TEST_CASE("pair gradients match finite differences when the hinge is active") {
  Rng rng(7);
  int done = 0;
  while (done < 10) {
    const int d = 4;
    auto rand_vec = [&] {
      Vector v(d);
      for (int i = 0; i < d; ++i) v(i) = rng.uniform(-1.0, 1.0);
      return v;
    };
    const Vector h = rand_vec(), r = rand_vec(), t = rand_vec();
    const Vector ch = rand_vec(), ct = rand_vec();
    const double margin = 1.0;
    const double gap = margin + (h + r - t).norm() - (ch + r - ct).norm();
    if (std::abs(gap) < 1e-2) continue;  // hinge kink, FD unreliable
    const TransEPairGradients g = transe_pair_gradients(h, r, t, ch, ct, margin);

    std::vector<double> params;
    for (const Vector* v : {&h, &r, &t, &ch, &ct})
      for (int i = 0; i < d; ++i) params.push_back((*v)(i));
    const auto loss = [&](std::span<const double> p) {
      Vector vh(d), vr(d), vt(d), vch(d), vct(d);
      Vector* vs[] = {&vh, &vr, &vt, &vch, &vct};
      for (int b = 0; b < 5; ++b)
        for (int i = 0; i < d; ++i) (*vs[b])(i) = p[b * d + i];
      return transe_pair_loss(vh, vr, vt, vch, vct, margin);
    };
    const std::vector<double> fd = testutil::fd_gradient(loss, params);
    std::vector<double> analytic;
    for (const Vector* v : {&g.head, &g.rel, &g.tail, &g.neg_head, &g.neg_tail})
      for (int i = 0; i < d; ++i) analytic.push_back((*v)(i));
    double worst = 0.0;
    CHECK_MESSAGE(testutil::max_rel_mismatch(analytic, fd, 1e-5, &worst) == 0,
                  "worst relative error ", worst);
    ++done;
  }
}

TEST_CASE("inactive hinge yields zero gradients") {
  const Vector h = vec({1, 0}), r = vec({0, 1}), t = vec({1, 1});
  const TransEPairGradients g =
      transe_pair_gradients(h, r, t, vec({0, 0}), vec({9, 9}), 1.0);
  CHECK(g.loss == 0.0);
  CHECK(g.head.norm() == 0.0);
  CHECK(g.rel.norm() == 0.0);
  CHECK(g.neg_tail.norm() == 0.0);
}

TEST_CASE("initial entity vectors are unit norm and NO_OP stays zero") {
  const KnowledgeBase kb = two_cluster_base();
  TransEConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 0;
  const EmbeddingTable tab = train_embeddings(kb, cfg);
  CHECK(tab.dim() == 16);
  CHECK(tab.entity_ids().size() == kb.entities().size());
  CHECK(tab.relation_ids().size() == kb.relations().size());
  for (EntityId e : kb.entities())
    CHECK(tab.entity(e).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tab.relation(kNoOp).norm() == 0.0);
}

TEST_CASE("training keeps entities normalized and NO_OP frozen") {
  const KnowledgeBase kb = two_cluster_base();
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 40;
  cfg.seed = 5;
  const EmbeddingTable tab = train_embeddings(kb, cfg);
  for (EntityId e : kb.entities())
    CHECK(tab.entity(e).norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tab.relation(kNoOp).norm() == 0.0);
}

TEST_CASE("epoch loss trends down over training") {
  // sparse graph: few conflicting translation constraints, so the hinge loss
  // has room to fall
  const KnowledgeBase kb = generate_synthetic({.entities = 60,
                                               .relations = 4,
                                               .density = 1.5,
                                               .seed = 9,
                                               .allow_self_loops = false});
  TransEConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 120;
  cfg.seed = 1;
  std::vector<double> losses;
  train_embeddings(kb, cfg, &losses);
  REQUIRE(losses.size() == 120);
  const auto mean = [](std::span<const double> s) {
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  };
  const double first = mean(std::span(losses).subspan(0, 20));
  const double last = mean(std::span(losses).subspan(100, 20));
  CHECK(last < 0.75 * first);
}

TEST_CASE("trained scores rank true triples below corrupted ones") {
  // the hinge is fully satisfiable here and goes quiet around epoch 1000
  const KnowledgeBase kb = two_cluster_base();
  TransEConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 1000;
  cfg.seed = 3;
  const EmbeddingTable tab = train_embeddings(kb, cfg);
  double pos = 0.0, neg = 0.0;
  std::size_t nneg = 0;
  for (const Triple& t : kb.triples()) {
    pos += transe_score(tab, t);
    for (EntityId e : kb.entities()) {
      if (e == t.tail || kb.has_triple({t.head, t.relation, e})) continue;
      neg += transe_score(tab, {t.head, t.relation, e});
      ++nneg;
    }
  }
  pos /= static_cast<double>(kb.triple_count());
  neg /= static_cast<double>(nneg);
  CHECK(pos < 0.5 * neg);
}

TEST_CASE("same seed reproduces training bit for bit") {
  const KnowledgeBase kb = two_cluster_base();
  TransEConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 10;
  cfg.seed = 42;
  const EmbeddingTable a = train_embeddings(kb, cfg);
  const EmbeddingTable b = train_embeddings(kb, cfg);
  for (EntityId e : kb.entities()) CHECK((a.entity(e) - b.entity(e)).norm() == 0.0);
  cfg.seed = 43;
  const EmbeddingTable c = train_embeddings(kb, cfg);
  double diff = 0.0;
  for (EntityId e : kb.entities()) diff += (a.entity(e) - c.entity(e)).norm();
  CHECK(diff > 0.0);
}

TEST_CASE("path embedding sums step relations and ignores entities") {
  EmbeddingTable tab(2);
  tab.set_entity(0, vec({1, 1}));
  tab.set_entity(1, vec({2, 2}));
  tab.set_entity(2, vec({-1, 3}));
  tab.set_relation(kNoOp, vec({0, 0}));
  tab.set_relation(1, vec({1, 0}));
  tab.set_relation(2, vec({0, 2}));

  ReasoningPath p;
  p.origin = 0;
  p.steps = {{1, 1}, {2, 2}};
  CHECK((path_embedding(tab, p) - vec({1, 2})).norm() == 0.0);

  // permuting relation order leaves the embedding unchanged
  ReasoningPath q;
  q.origin = 2;
  q.steps = {{2, 0}, {1, 1}};
  CHECK((path_embedding(tab, p) - path_embedding(tab, q)).norm() == 0.0);

  // NO_OP padding embeds the same as the prefix
  ReasoningPath padded = p;
  padded.steps.push_back({kNoOp, padded.terminal()});
  CHECK((path_embedding(tab, padded) - path_embedding(tab, p)).norm() == 0.0);

  ReasoningPath empty;
  empty.origin = 1;
  CHECK(path_embedding(tab, empty).norm() == 0.0);
}

TEST_CASE("nearest entities agree with a brute-force sort") {
  Rng rng(77);
  EmbeddingTable tab(4);
  for (EntityId e = 0; e < 30; ++e) {
    Vector v(4);
    for (int i = 0; i < 4; ++i) v(i) = rng.uniform(-1.0, 1.0);
    tab.set_entity(e, std::move(v));
  }
  Vector query(4);
  for (int i = 0; i < 4; ++i) query(i) = rng.uniform(-1.0, 1.0);

  std::vector<std::pair<double, EntityId>> brute;
  for (EntityId e : tab.entity_ids()) brute.emplace_back((tab.entity(e) - query).norm(), e);
  std::sort(brute.begin(), brute.end());

  const auto got = nearest_entities(tab, query, 7);
  REQUIRE(got.size() == 7);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].first == brute[i].second);
    CHECK(got[i].second == doctest::Approx(brute[i].first).epsilon(1e-12));
    if (i) CHECK(got[i - 1].second <= got[i].second);
  }

  // k larger than the table clamps
  CHECK(nearest_entities(tab, query, 100).size() == 30);

  // a sub-half-gap perturbation of the winner cannot change the top match
  double min_gap = 1e9;
  for (std::size_t i = 1; i < brute.size(); ++i)
    min_gap = std::min(min_gap, brute[i].first - brute[i - 1].first);
  if (min_gap > 0) {
    Vector nudged = query;
    nudged(0) += min_gap * 0.49;
    CHECK(nearest_entities(tab, nudged, 1)[0].first == brute[0].second);
  }

  // restricted candidate set is honored
  const EntityId pool[] = {brute[5].second, brute[9].second};
  const auto sub = nearest_entities(tab, query, 2, pool);
  CHECK(sub[0].first == brute[5].second);
  CHECK(sub[1].first == brute[9].second);

  CHECK_THROWS_AS(nearest_entities(tab, Vector::Zero(3), 1), std::invalid_argument);
}

TEST_CASE("nearest entities break exact ties by ascending id") {
  EmbeddingTable tab(1);
  tab.set_entity(4, vec({1.0}));
  tab.set_entity(2, vec({1.0}));
  tab.set_entity(9, vec({-1.0}));
  const auto got = nearest_entities(tab, vec({0.0}), 3);
  CHECK(got[0].first == 2);
  CHECK(got[1].first == 4);
  CHECK(got[2].first == 9);
}

TEST_CASE("csv round trip preserves vectors to 1e-6") {
  testutil::TempDir tmp("emb");
  const KnowledgeBase kb = two_cluster_base();
  TransEConfig cfg;
  cfg.dim = 12;
  cfg.epochs = 15;
  cfg.seed = 8;
  const EmbeddingTable tab = train_embeddings(kb, cfg);
  const std::string path = tmp.file("emb.csv");
  tab.save_csv(path);

  const std::string text = testutil::read_file(path);
  CHECK(text.rfind("id,dim,v0,v1,", 0) == 0);
  CHECK(text.find("\ne0,12,") != std::string::npos);
  CHECK(text.find("\nr1,12,") != std::string::npos);

  const EmbeddingTable back = EmbeddingTable::load_csv(path);
  CHECK(back.dim() == tab.dim());
  CHECK(back.entity_ids() == tab.entity_ids());
  CHECK(back.relation_ids() == tab.relation_ids());
  for (EntityId e : tab.entity_ids())
    CHECK((back.entity(e) - tab.entity(e)).lpNorm<Eigen::Infinity>() < 1e-6);
  for (RelationId r : tab.relation_ids())
    CHECK((back.relation(r) - tab.relation(r)).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("csv loader rejects malformed files") {
  testutil::TempDir tmp("embbad");
  CHECK_THROWS_AS(EmbeddingTable::load_csv(tmp.file("missing.csv")), std::runtime_error);

  testutil::write_file(tmp.file("short.csv"), "id,dim,v0,v1\ne0,2,1.0\n");
  CHECK_THROWS_WITH_AS(EmbeddingTable::load_csv(tmp.file("short.csv")),
                       doctest::Contains(":2:"), std::runtime_error);

  testutil::write_file(tmp.file("kind.csv"), "id,dim,v0\nq0,1,1.0\n");
  CHECK_THROWS_AS(EmbeddingTable::load_csv(tmp.file("kind.csv")), std::runtime_error);

  testutil::write_file(tmp.file("mixdim.csv"), "id,dim,v0,v1\ne0,2,1.0,2.0\ne1,3,1,2,3\n");
  CHECK_THROWS_AS(EmbeddingTable::load_csv(tmp.file("mixdim.csv")), std::runtime_error);

  testutil::write_file(tmp.file("empty.csv"), "id,dim,v0\n");
  CHECK_THROWS_AS(EmbeddingTable::load_csv(tmp.file("empty.csv")), std::runtime_error);
}

TEST_CASE("degenerate training inputs are rejected") {
  KnowledgeBase empty;
  TransEConfig cfg;
  cfg.dim = 4;
  CHECK_THROWS_AS(train_embeddings(empty, cfg), std::invalid_argument);
  const KnowledgeBase kb = two_cluster_base();
  cfg.dim = 0;
  CHECK_THROWS_AS(train_embeddings(kb, cfg), std::invalid_argument);
  cfg.dim = 4;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train_embeddings(kb, cfg), std::invalid_argument);
}

}  // TEST_SUITE
