#include <cmath>
#include <vector>

#include "doctest.h"
#include "semcom/imitation.hpp"
#include "../common/test_util.hpp"

using namespace semcom;

namespace {

PolicyModel zero_policy(std::size_t relation_count, int embed_dim, std::size_t hops) {
  DenseLayer l;
  l.weights = Matrix::Zero(static_cast<Eigen::Index>(relation_count), 2 * embed_dim);
  l.bias = Vector::Zero(static_cast<Eigen::Index>(relation_count));
  l.act = Activation::softmax;
  PolicyModel m;
  m.net = DenseNet({l});
  m.hop_bound = hops;
  return m;
}

/// sigmoid hidden layers keep the surrogate smooth for finite differences
PolicyModel smooth_policy(std::size_t relation_count, int embed_dim, std::size_t hops,
                          std::uint64_t seed) {
  Rng rng(seed);
  const int h[1] = {8};
  PolicyModel m;
  m.net = DenseNet::make_mlp(2 * embed_dim, h, static_cast<int>(relation_count),
                             Activation::sigmoid, Activation::softmax, rng);
  m.hop_bound = hops;
  return m;
}

struct Bandit {
  KnowledgeBase kb;
  EmbeddingTable tab;
  EntityId a, x, y;
  RelationId r1, r2;

  Bandit() : tab(2) {
    a = kb.add_entity("a");
    x = kb.add_entity("x");
    y = kb.add_entity("y");
    r1 = kb.add_relation("r1");
    r2 = kb.add_relation("r2");
    kb.add_triple({a, r1, x});
    kb.add_triple({a, r2, y});
    tab.set_entity(a, Vector::Ones(2));
    Vector vx(2), vy(2);
    vx << 0.5, -0.5;
    vy << -0.5, 0.5;
    tab.set_entity(x, vx);
    tab.set_entity(y, vy);
    tab.set_relation(kNoOp, Vector::Zero(2));
    Vector w1(2), w2(2);
    w1 << 1.0, 0.0;
    w2 << 0.0, 1.0;
    tab.set_relation(r1, w1);
    tab.set_relation(r2, w2);
  }

  Episode episode(RelationId r, double q) const {
    Episode ep;
    ep.path.origin = a;
    ep.path.steps = {{r, r == r1 ? x : y}};
    ep.q = q;
    return ep;
  }
};

/// Two-branch tree: origin 0 fans out through r1/r2, then r3/r4. Four 2-hop
/// paths with distinct relation sequences.
struct Tree {
  KnowledgeBase kb;
  EmbeddingTable tab;
  RelationId r1, r2, r3, r4;

  Tree() {
    for (int i = 0; i < 7; ++i) kb.add_entity("e" + std::to_string(i));
    r1 = kb.add_relation("r1");
    r2 = kb.add_relation("r2");
    r3 = kb.add_relation("r3");
    r4 = kb.add_relation("r4");
    kb.add_triple({0, r1, 1});
    kb.add_triple({0, r2, 2});
    kb.add_triple({1, r3, 3});
    kb.add_triple({1, r4, 4});
    kb.add_triple({2, r3, 5});
    kb.add_triple({2, r4, 6});
    TransEConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 120;
    cfg.seed = 2;
    tab = train_embeddings(kb, cfg);
  }

  PathSet experts(std::initializer_list<std::pair<RelationId, RelationId>> kinds,
                  int copies) const {
    PathSet ps;
    ps.source = PathSource::expert;
    ps.hop_bound = 2;
    for (const auto& [first, second] : kinds) {
      ReasoningPath p;
      p.origin = 0;
      const EntityId mid = first == r1 ? 1 : 2;
      EntityId end;
      if (mid == 1)
        end = second == r3 ? 3 : 4;
      else
        end = second == r3 ? 5 : 6;
      p.steps = {{first, mid}, {second, end}};
      for (int i = 0; i < copies; ++i) ps.paths.push_back(p);
    }
    return ps;
  }
};

}  // namespace

TEST_SUITE("imitation") {

TEST_CASE("masked entropy skips exact zeros") {
  Vector q = Vector::Zero(4);
  q(1) = 0.5;
  q(3) = 0.5;
  CHECK(masked_entropy(q) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  Vector point = Vector::Zero(2);
  point(0) = 1.0;
  CHECK(masked_entropy(point) == 0.0);
}

TEST_CASE("surrogate value matches a hand computation") {
  const Bandit b;
  const PolicyModel m = zero_policy(b.kb.relation_count(), 2, 1);
  const std::vector<Episode> eps = {b.episode(b.r1, 1.0), b.episode(b.r2, -1.0)};
  // uniform over three valid relations at a; advantages are +1 and -1
  const double h = std::log(3.0);
  const double expect = (1.0 * std::log(1.0 / 3) + -1.0 * std::log(1.0 / 3)) / 2.0 +
                        0.25 * (h + h) / 2.0;
  CHECK(policy_surrogate(m, b.kb, b.tab, eps, 0.25) ==
        doctest::Approx(expect).epsilon(1e-12));
  CHECK_THROWS_AS(policy_surrogate(m, b.kb, b.tab, {}, 0.0), std::invalid_argument);
}

TEST_CASE("surrogate gradients match finite differences") {
  const Bandit b;
  PolicyModel m = smooth_policy(b.kb.relation_count(), 2, 1, 51);
  const std::vector<Episode> eps = {b.episode(b.r1, 0.8), b.episode(b.r2, -0.4),
                                    b.episode(b.r1, 0.1)};
  const double alpha = 0.3;
  const Gradients g = policy_surrogate_gradients(m, b.kb, b.tab, eps, alpha);

  PolicyModel probe = m;
  const auto value = [&](std::span<const double> params) {
    probe.net.unflatten(params);
    return policy_surrogate(probe, b.kb, b.tab, eps, alpha);
  };
  const std::vector<double> fd = testutil::fd_gradient(value, m.net.flatten());
  std::vector<double> analytic;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < g.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < g.weights[l].cols(); ++c)
        analytic.push_back(g.weights[l](r, c));
    for (Eigen::Index i = 0; i < g.biases[l].size(); ++i) analytic.push_back(g.biases[l](i));
  }
  double worst = 0.0;
  CHECK_MESSAGE(testutil::max_rel_mismatch(analytic, fd, 1e-4, &worst) == 0,
                "worst relative error ", worst);
}

TEST_CASE("ascent raises the probability of the rewarded action") {
  const Bandit b;
  PolicyModel m = smooth_policy(b.kb.relation_count(), 2, 1, 77);
  const std::vector<Episode> eps = {b.episode(b.r1, 1.0), b.episode(b.r2, -1.0)};
  const ReasonerState s = make_state(b.tab, b.a, b.a);
  const double before = action_distribution(m, s, b.kb)(b.r1);
  m = policy_step(std::move(m), b.kb, b.tab, eps, 0.0, 0.2);
  const double after = action_distribution(m, s, b.kb)(b.r1);
  CHECK(after > before);

  // zero learning rate is a bitwise no-op
  const PolicyModel frozen = smooth_policy(b.kb.relation_count(), 2, 1, 77);
  const PolicyModel same = policy_step(frozen, b.kb, b.tab, eps, 0.5, 0.0);
  CHECK(same.net.flatten() == frozen.net.flatten());
}

TEST_CASE("pure entropy bonus drives the policy toward uniform") {
  const Bandit b;
  PolicyModel m = smooth_policy(b.kb.relation_count(), 2, 1, 13);
  // equal rewards kill the advantage term; only the entropy bonus remains
  const std::vector<Episode> eps = {b.episode(b.r1, 0.0), b.episode(b.r2, 0.0)};
  for (int i = 0; i < 3000; ++i) m = policy_step(std::move(m), b.kb, b.tab, eps, 1.0, 0.5);
  const Vector q = action_distribution(m, make_state(b.tab, b.a, b.a), b.kb);
  for (RelationId r : {kNoOp, b.r1, b.r2})
    CHECK(q(r) == doctest::Approx(1.0 / 3).epsilon(1e-3));
}

TEST_CASE("single episode has zero advantage and only the entropy term") {
  const Bandit b;
  const PolicyModel m = smooth_policy(b.kb.relation_count(), 2, 1, 5);
  const std::vector<Episode> eps = {b.episode(b.r1, 42.0)};
  const Vector q = action_distribution(m, make_state(b.tab, b.a, b.a), b.kb);
  CHECK(policy_surrogate(m, b.kb, b.tab, eps, 0.0) == 0.0);
  CHECK(policy_surrogate(m, b.kb, b.tab, eps, 2.0) ==
        doctest::Approx(2.0 * masked_entropy(q)).epsilon(1e-12));
}

TEST_CASE("mean state entropy averages over every step") {
  const Bandit b;
  const PolicyModel m = smooth_policy(b.kb.relation_count(), 2, 1, 29);
  const std::vector<Episode> eps = {b.episode(b.r1, 0.0), b.episode(b.r2, 0.0)};
  const double h = masked_entropy(action_distribution(m, make_state(b.tab, b.a, b.a), b.kb));
  CHECK(mean_state_entropy(m, b.kb, b.tab, eps) == doctest::Approx(h).epsilon(1e-12));
  CHECK(mean_state_entropy(m, b.kb, b.tab, {}) == 0.0);
}

TEST_CASE("empirical distribution weights repeated paths") {
  const Tree t;
  PathSet ps = t.experts({{t.r1, t.r3}, {t.r1, t.r4}}, 1);
  ps.paths.push_back(ps.paths[0]);
  ps.paths.push_back(ps.paths[0]);
  const PathDistribution d = empirical_distribution(ps);
  REQUIRE(d.size() == 2);
  CHECK(d.at(path_key(ps.paths[0])) == doctest::Approx(0.75));
  CHECK(d.at(path_key(ps.paths[1])) == doctest::Approx(0.25));
}

TEST_CASE("tv distance handles overlap and disjoint support") {
  PathDistribution a{{{1}, 0.5}, {{2}, 0.5}};
  PathDistribution b{{{1}, 0.25}, {{2}, 0.25}, {{3}, 0.5}};
  CHECK(tv_distance(a, b) == doctest::Approx(0.5));
  CHECK(tv_distance(a, a) == 0.0);
  PathDistribution c{{{7}, 1.0}};
  CHECK(tv_distance(a, c) == doctest::Approx(1.0));
  CHECK(tv_distance(b, a) == tv_distance(a, b));
}

TEST_CASE("policy path distribution mixes origins by expert frequency") {
  const Tree t;
  const PolicyModel m = make_policy_model(t.kb.relation_count(), t.tab.dim(), 8, 1, 3);
  PathSet ps;
  ps.source = PathSource::expert;
  ps.hop_bound = 1;
  ReasoningPath p1;
  p1.origin = 1;
  p1.steps = {{t.r3, 3}};
  ReasoningPath p2;
  p2.origin = 2;
  p2.steps = {{t.r4, 6}};
  ps.paths = {p1, p1, p1, p2};  // origins weighted 3/4 and 1/4

  const auto dist = policy_path_distribution(m, t.kb, t.tab, ps, 1000);
  REQUIRE(dist.has_value());
  PathDistribution manual;
  for (const PathProb& pp : enumerate_paths(m, t.kb, t.tab, 1, 1))
    manual[path_key(pp.path)] += 0.75 * pp.prob;
  for (const PathProb& pp : enumerate_paths(m, t.kb, t.tab, 2, 1))
    manual[path_key(pp.path)] += 0.25 * pp.prob;
  REQUIRE(dist->size() == manual.size());
  for (const auto& [k, v] : manual) CHECK(dist->at(k) == doctest::Approx(v).epsilon(1e-12));
  double total = 0.0;
  for (const auto& [k, v] : *dist) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_FALSE(policy_path_distribution(m, t.kb, t.tab, ps, 1).has_value());
}

TEST_CASE("zero rounds returns the untouched initial models") {
  const Tree t;
  TrainConfig cfg;
  cfg.rounds = 0;
  cfg.seed = 7;
  cfg.hidden_width = 8;
  const TrainResult res = train(t.kb, t.kb, t.tab, t.experts({{t.r1, t.r3}}, 4), cfg);
  CHECK(res.trace.rounds.empty());
  CHECK(res.best_round == 0);
  CHECK(res.policy.net.flatten() == res.final_policy.net.flatten());
  CHECK(res.comparator.net.flatten() == res.final_comparator.net.flatten());
}

TEST_CASE("training validates its inputs") {
  const Tree t;
  TrainConfig cfg;
  cfg.rounds = 1;
  PathSet empty;
  empty.hop_bound = 2;
  CHECK_THROWS_AS(train(t.kb, t.kb, t.tab, empty, cfg), std::invalid_argument);

  PathSet bogus = t.experts({{t.r1, t.r3}}, 1);
  bogus.paths[0].steps[1].entity = 6;  // not a tail of (1, r3)
  CHECK_THROWS_AS(train(t.kb, t.kb, t.tab, bogus, cfg), std::invalid_argument);

  KnowledgeBase small;
  small.add_entity("e0");
  small.add_entity("e1");
  const RelationId r = small.add_relation("r1");
  small.add_triple({0, r, 1});

  // only origins must transfer to the destination base; interior path
  // entities are never looked up there
  PathSet ok = t.experts({{t.r1, t.r3}}, 1);
  CHECK_NOTHROW(train(t.kb, small, t.tab, ok, cfg));

  PathSet far;
  far.hop_bound = 2;
  far.paths.push_back({2, {{t.r3, 5}, {kNoOp, 5}}});
  REQUIRE(path_valid(t.kb, far.paths[0]));
  CHECK_THROWS_AS(train(t.kb, small, t.tab, far, cfg), std::invalid_argument);
}

TEST_CASE("training is reproducible and thread-count invariant") {
  const Tree t;
  const PathSet experts = t.experts({{t.r1, t.r3}, {t.r2, t.r4}}, 8);
  TrainConfig cfg;
  cfg.rounds = 4;
  cfg.episodes_per_round = 16;
  cfg.batch_size = 8;
  cfg.hidden_width = 8;
  cfg.seed = 99;
  const TrainResult a = train(t.kb, t.kb, t.tab, experts, cfg);
  const TrainResult b = train(t.kb, t.kb, t.tab, experts, cfg);
  CHECK(a.final_policy.net.flatten() == b.final_policy.net.flatten());
  CHECK(a.final_comparator.net.flatten() == b.final_comparator.net.flatten());

  TrainConfig threaded = cfg;
  threaded.threads = 3;
  const TrainResult c = train(t.kb, t.kb, t.tab, experts, threaded);
  CHECK(a.final_policy.net.flatten() == c.final_policy.net.flatten());
  REQUIRE(a.trace.rounds.size() == c.trace.rounds.size());
  for (std::size_t i = 0; i < a.trace.rounds.size(); ++i) {
    CHECK(a.trace.rounds[i].comparator_loss == c.trace.rounds[i].comparator_loss);
    CHECK(a.trace.rounds[i].mean_q == c.trace.rounds[i].mean_q);
  }

  TrainConfig other = cfg;
  other.seed = 100;
  const TrainResult d = train(t.kb, t.kb, t.tab, experts, other);
  CHECK(a.final_policy.net.flatten() != d.final_policy.net.flatten());
}

TEST_CASE("observer sees consistent per-round state") {
  const Tree t;
  const PathSet experts = t.experts({{t.r1, t.r3}, {t.r2, t.r4}}, 8);
  TrainConfig cfg;
  cfg.rounds = 3;
  cfg.episodes_per_round = 12;
  cfg.batch_size = 6;
  cfg.hidden_width = 8;
  cfg.seed = 31;
  int calls = 0;
  const TrainResult res = train(t.kb, t.kb, t.tab, experts, cfg, [&](const RoundInfo& info) {
    ++calls;
    CHECK(info.round == calls);
    CHECK(info.record.round == calls);
    CHECK(info.episodes.size() == 12);
    // q is the log score of the path embedding under the round's comparator
    for (const Episode& ep : info.episodes) {
      CHECK(ep.path.steps.size() == cfg.hop_bound);
      CHECK(path_valid(t.kb, ep.path));
      CHECK(ep.q == log_feature(info.comparator_after, path_embedding(t.tab, ep.path)));
    }
  });
  CHECK(calls == 3);
  CHECK(res.trace.rounds.size() == 3);
  for (const RoundRecord& r : res.trace.rounds) {
    CHECK(r.interpreter_loss == -r.mean_q);
    CHECK(r.entropy >= 0.0);
    CHECK(r.comparator_loss >= 0.0);
  }
}

TEST_CASE("imitation shrinks the gap to the expert path distribution") {
  const Tree t;
  // experts favor the r1 branch 3:1; the uniform policy starts far away
  PathSet experts = t.experts({{t.r1, t.r3}, {t.r1, t.r4}}, 24);
  const PathSet minority = t.experts({{t.r2, t.r3}, {t.r2, t.r4}}, 8);
  experts.paths.insert(experts.paths.end(), minority.paths.begin(), minority.paths.end());

  TrainConfig cfg;
  cfg.rounds = 150;
  cfg.episodes_per_round = 64;
  cfg.batch_size = 16;
  cfg.policy_lr = 0.1;
  cfg.comparator_lr = 0.1;
  cfg.entropy_coef = 0.05;
  cfg.hop_bound = 2;
  cfg.hidden_width = 32;
  cfg.seed = 11;
  cfg.tv_walk_cap = 1000;
  const TrainResult res = train(t.kb, t.kb, t.tab, experts, cfg);

  REQUIRE(res.trace.rounds.size() == 150);
  CHECK(std::isfinite(res.initial_tv));
  double best = 1.0;
  for (const RoundRecord& r : res.trace.rounds)
    if (!std::isnan(r.tv_distance)) best = std::min(best, r.tv_distance);
  CHECK(best < res.initial_tv);
  CHECK(best < 0.3);
  // the reported best round matches the trace
  REQUIRE(res.best_round >= 1);
  CHECK(res.trace.rounds[res.best_round - 1].tv_distance == doctest::Approx(best));
}

TEST_CASE("forced-chain policy scores perfect accuracy") {
  KnowledgeBase kb;
  const EntityId a = kb.add_entity("a"), b = kb.add_entity("b"), c = kb.add_entity("c");
  const RelationId r = kb.add_relation("r");
  kb.add_triple({a, r, b});
  kb.add_triple({b, r, c});
  TransEConfig ecfg;
  ecfg.dim = 4;
  ecfg.epochs = 0;
  const EmbeddingTable tab = train_embeddings(kb, ecfg);
  PolicyModel m = zero_policy(kb.relation_count(), 4, 2);
  Gradients g = zeros_like(m.net);
  g.biases.back()(r) = 50.0;
  m.net.apply_gradients(g, 1.0);

  PathSet test;
  test.hop_bound = 2;
  ReasoningPath p;
  p.origin = a;
  p.steps = {{r, b}, {r, c}};
  test.paths = {p};
  CHECK(evaluate_accuracy(m, kb, tab, test, 1, 0) == 1.0);
  CHECK_THROWS_AS(evaluate_accuracy(m, kb, tab, PathSet{}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_accuracy(m, kb, tab, test, 0, 0), std::invalid_argument);
}

TEST_CASE("uniform policy hits a star spoke at the expected rate") {
  KnowledgeBase kb;
  const EntityId hub = kb.add_entity("hub");
  const EntityId s1 = kb.add_entity("s1");
  kb.add_entity("s2");
  kb.add_entity("s3");
  const RelationId ra = kb.add_relation("ra");
  const RelationId rb = kb.add_relation("rb");
  const RelationId rc = kb.add_relation("rc");
  kb.add_triple({hub, ra, s1});
  kb.add_triple({hub, rb, 2});
  kb.add_triple({hub, rc, 3});
  EmbeddingTable tab(2);
  for (EntityId e : kb.entities()) tab.set_entity(e, Vector::Constant(2, double(e)));
  const PolicyModel m = zero_policy(kb.relation_count(), 2, 1);

  PathSet test;
  test.hop_bound = 1;
  ReasoningPath p;
  p.origin = hub;
  p.steps = {{ra, s1}};
  test.paths.assign(400, p);
  // one uniform draw over {NO_OP, ra, rb, rc} hits s1 with probability 1/4;
  // binomial(400, 1/4) has sigma 8.66, so 3 sigma is 26
  const double acc = evaluate_accuracy(m, kb, tab, test, 1, 5);
  CHECK(std::abs(acc * 400 - 100.0) <= 27.0);
}

TEST_CASE("metrics csv lists one row per round") {
  testutil::TempDir tmp("metrics");
  MetricTrace trace;
  RoundRecord r1;
  r1.round = 1;
  r1.comparator_loss = 1.25;
  r1.interpreter_loss = 0.5;
  r1.mean_q = -0.5;
  r1.entropy = 0.75;
  RoundRecord r2 = r1;
  r2.round = 2;
  r2.tv_distance = 0.125;
  trace.rounds = {r1, r2};
  const std::string path = tmp.file("m.csv");
  save_metrics_csv(trace, path);
  const std::string text = testutil::read_file(path);
  CHECK(text.rfind("round,comp_loss,interp_loss,mean_q,entropy,tv_distance\n", 0) == 0);
  CHECK(text.find("\n1,1.25,0.5,-0.5,0.75,nan\n") != std::string::npos);
  CHECK(text.find("\n2,1.25,0.5,-0.5,0.75,0.125\n") != std::string::npos);
}

}  // TEST_SUITE
