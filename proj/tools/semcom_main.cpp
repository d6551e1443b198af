// Command-line driver for the semantic communication pipeline: synthetic
// base generation, embedding training, expert sampling, adversarial
// imitation training, GA-vs-imitation evaluation, channel sweeps, and
// expert-count sweeps. Every subcommand accepts --config with a flat
// INI-style key=value file; command-line flags override config values.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semcom/channel.hpp"
#include "semcom/comparator.hpp"
#include "semcom/embedding.hpp"
#include "semcom/genetic.hpp"
#include "semcom/imitation.hpp"
#include "semcom/knowledge_base.hpp"
#include "semcom/policy.hpp"
#include "semcom/synth.hpp"

namespace {

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t c = s.find(',', start);
    const std::string tok = s.substr(start, c - start);
    if (!tok.empty()) out.push_back(std::stod(tok));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  if (out.empty()) throw std::runtime_error("empty numeric list: " + s);
  return out;
}

std::vector<std::size_t> parse_count_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(s)) {
    if (v < 1) throw std::runtime_error("counts must be positive: " + s);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// CLI11 only reads config files attached to the root app, so a flat
// per-subcommand file is expanded here into --key=value tokens inserted right
// after the subcommand name; keys the command line already sets are dropped.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  const auto trim = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  std::vector<std::string> inject;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::size_t eq = t.find('=');
    const std::string key = eq == std::string::npos ? std::string() : trim(t.substr(0, eq));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string flag = "--" + key;
    bool overridden = false;
    for (const std::string& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) overridden = true;
    if (!overridden) inject.push_back(flag + "=" + trim(t.substr(eq + 1)));
  }
  auto at = std::find_if(args.begin(), args.end(),
                         [](const std::string& a) { return a.rfind('-', 0) != 0; });
  if (at != args.end()) ++at;
  args.insert(at, inject.begin(), inject.end());
  return args;
}

std::vector<semcom::RecoveryMode> parse_mode_list(const std::string& s) {
  std::vector<semcom::RecoveryMode> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t c = s.find(',', start);
    const std::string tok = s.substr(start, c - start);
    if (!tok.empty()) out.push_back(semcom::recovery_mode_from_string(tok));
    if (c == std::string::npos) break;
    start = c + 1;
  }
  if (out.empty()) throw std::runtime_error("empty mode list: " + s);
  return out;
}

struct TrainFlags {
  int rounds = 50;
  int episodes = 128;
  int batch = 32;
  double policy_lr = 0.05;
  double comparator_lr = 0.05;
  double alpha = 0.1;
  std::size_t hops = 2;
  int hidden = 64;
  std::size_t tv_cap = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--rounds", rounds, "training rounds");
    cmd->add_option("--episodes", episodes, "policy rollouts per round");
    cmd->add_option("--batch", batch, "comparator minibatch size");
    cmd->add_option("--policy-lr", policy_lr, "policy learning rate");
    cmd->add_option("--comparator-lr", comparator_lr, "comparator learning rate");
    cmd->add_option("--alpha", alpha, "initial entropy bonus weight");
    cmd->add_option("--hops", hops, "reasoning path length");
    cmd->add_option("--hidden", hidden, "hidden layer width");
    cmd->add_option("--tv-cap", tv_cap,
                    "enable exact TV tracking up to this many walks (0 = off)");
  }

  semcom::TrainConfig to_config(std::uint64_t seed, int threads) const {
    semcom::TrainConfig cfg;
    cfg.rounds = rounds;
    cfg.episodes_per_round = episodes;
    cfg.batch_size = batch;
    cfg.policy_lr = policy_lr;
    cfg.comparator_lr = comparator_lr;
    cfg.entropy_coef = alpha;
    cfg.hop_bound = hops;
    cfg.hidden_width = hidden;
    cfg.tv_walk_cap = tv_cap;
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"semantic reasoning and channel experiment harness"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic knowledge base");
  auto* embed = app.add_subcommand("embed", "train entity/relation embeddings");
  auto* experts = app.add_subcommand("experts", "sample expert reasoning paths");
  auto* train = app.add_subcommand("train", "adversarial imitation training");
  auto* eval = app.add_subcommand("eval", "imitation vs GA accuracy across partitions");
  auto* channel = app.add_subcommand("channel", "packet error rate sweep");
  auto* sweep = app.add_subcommand("sweep-experts", "train across expert-set sizes");
  static std::string config_path;  // consumed by expand_config before parsing
  for (CLI::App* cmd : {synth, embed, experts, train, eval, channel, sweep})
    cmd->add_option("--config", config_path, "flat INI key=value file; flags override");

  // synth
  struct {
    std::size_t entities = 100;
    std::size_t relations = 4;
    double density = 2.0;
    std::uint64_t seed = 0;
    bool self_loops = false;
    std::string out;
  } sy;
  synth->add_option("--entities", sy.entities, "entity count")->required();
  synth->add_option("--relations", sy.relations, "relation count")->required();
  synth->add_option("--density", sy.density, "triples per entity")->required();
  synth->add_option("--seed", sy.seed, "random seed");
  synth->add_flag("--allow-self-loops", sy.self_loops, "permit h == t triples");
  synth->add_option("--out", sy.out, "output triple TSV")->required();
  synth->callback([&] {
    const semcom::KnowledgeBase kb = semcom::generate_synthetic(
        {sy.entities, sy.relations, sy.density, sy.seed, sy.self_loops});
    kb.save_triples(sy.out);
    std::cout << "wrote " << kb.triple_count() << " triples over " << kb.entity_count()
              << " entities to " << sy.out << "\n";
  });

  // embed
  struct {
    std::string kb, out;
    semcom::TransEConfig cfg;
  } em;
  embed->add_option("--kb", em.kb, "triple TSV")->required();
  embed->add_option("--dim", em.cfg.dim, "embedding dimension");
  embed->add_option("--margin", em.cfg.margin, "ranking margin");
  embed->add_option("--lr", em.cfg.learning_rate, "SGD learning rate");
  embed->add_option("--epochs", em.cfg.epochs, "training epochs");
  embed->add_option("--negatives", em.cfg.negatives_per_positive, "negatives per positive");
  embed->add_option("--seed", em.cfg.seed, "random seed");
  embed->add_option("--out", em.out, "output embedding CSV")->required();
  embed->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(em.kb);
    std::vector<double> losses;
    const semcom::EmbeddingTable tab = semcom::train_embeddings(kb, em.cfg, &losses);
    tab.save_csv(em.out);
    std::cout << "trained " << tab.entity_ids().size() << " entity and "
              << tab.relation_ids().size() << " relation embeddings";
    if (!losses.empty()) std::cout << "; final epoch loss " << losses.back();
    std::cout << "\n";
  });

  // experts
  struct {
    std::string kb, out;
    std::size_t count = 100;
    std::size_t hops = 2;
    std::uint64_t seed = 0;
  } ex;
  experts->add_option("--kb", ex.kb, "triple TSV")->required();
  experts->add_option("--count", ex.count, "paths to sample");
  experts->add_option("--hops", ex.hops, "path length");
  experts->add_option("--seed", ex.seed, "random seed");
  experts->add_option("--out", ex.out, "output path TSV")->required();
  experts->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(ex.kb);
    const semcom::PathSet ps = semcom::sample_expert_paths(kb, ex.count, ex.hops, ex.seed);
    semcom::save_paths(ps, kb, ex.out);
    std::cout << "sampled " << ps.paths.size() << " expert paths to " << ex.out << "\n";
  });

  // train
  struct {
    std::string kb, kb_dest, embeddings, expert_paths, out_dir;
    TrainFlags flags;
    std::uint64_t seed = 0;
    int threads = 1;
    int checkpoint_every = 0;
  } tr;
  train->add_option("--kb", tr.kb, "expert base triple TSV")->required();
  train->add_option("--kb-dest", tr.kb_dest, "destination base (default: --kb)");
  train->add_option("--embeddings", tr.embeddings, "embedding CSV")->required();
  train->add_option("--experts", tr.expert_paths, "expert path TSV")->required();
  tr.flags.add_to(train);
  train->add_option("--seed", tr.seed, "random seed");
  train->add_option("--threads", tr.threads, "rollout threads");
  train->add_option("--checkpoint-every", tr.checkpoint_every,
                    "write periodic checkpoints every N rounds (0 = off)");
  train->add_option("--out-dir", tr.out_dir, "output directory")->required();
  train->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(tr.kb);
    const semcom::KnowledgeBase kb_dest = tr.kb_dest.empty()
                                              ? semcom::KnowledgeBase::load_triples(tr.kb)
                                              : semcom::KnowledgeBase::load_triples(tr.kb_dest);
    const semcom::EmbeddingTable tab = semcom::EmbeddingTable::load_csv(tr.embeddings);
    const semcom::PathSet experts_set =
        semcom::load_paths(tr.expert_paths, kb, semcom::PathSource::expert);
    std::filesystem::create_directories(tr.out_dir);
    const std::filesystem::path dir(tr.out_dir);
    semcom::RoundObserver observer;
    if (tr.checkpoint_every > 0) {
      observer = [&](const semcom::RoundInfo& info) {
        if (info.round % tr.checkpoint_every != 0) return;
        char name[64];
        std::snprintf(name, sizeof name, "policy_round_%04d.txt", info.round);
        info.policy_after.save((dir / name).string());
        std::snprintf(name, sizeof name, "comparator_round_%04d.txt", info.round);
        info.comparator_after.save((dir / name).string());
      };
    }
    const semcom::TrainResult res = semcom::train(
        kb, kb_dest, tab, experts_set, tr.flags.to_config(tr.seed, tr.threads), observer);
    semcom::save_metrics_csv(res.trace, (dir / "metrics.csv").string());
    res.policy.save((dir / "policy_best.txt").string());
    res.comparator.save((dir / "comparator_best.txt").string());
    res.final_policy.save((dir / "policy_final.txt").string());
    res.final_comparator.save((dir / "comparator_final.txt").string());
    std::cout << "trained " << res.trace.rounds.size() << " rounds; best round "
              << res.best_round << "; outputs in " << tr.out_dir << "\n";
  });

  // eval
  struct {
    std::string kb, embeddings, out;
    std::size_t skgs = 5;
    std::size_t train_experts = 200;
    std::size_t test_paths = 100;
    int samples = 5;
    int seeds = 1;
    TrainFlags flags;
    semcom::GAConfig ga;
    std::uint64_t seed = 0;
    int threads = 1;
  } ev;
  eval->add_option("--kb", ev.kb, "triple TSV")->required();
  eval->add_option("--embeddings", ev.embeddings, "embedding CSV")->required();
  eval->add_option("--skgs", ev.skgs, "number of partitions");
  eval->add_option("--train-experts", ev.train_experts, "expert paths per partition");
  eval->add_option("--test-paths", ev.test_paths, "test paths per partition");
  eval->add_option("--samples", ev.samples, "recovery attempts per test path");
  eval->add_option("--seeds", ev.seeds, "independent repetitions to average");
  ev.flags.add_to(eval);
  eval->add_option("--ga-population", ev.ga.population, "GA population size");
  eval->add_option("--ga-generations", ev.ga.generations, "GA generations");
  eval->add_option("--ga-crossover", ev.ga.crossover_rate, "GA crossover rate");
  eval->add_option("--ga-mutation", ev.ga.mutation_rate, "GA per-gene mutation rate");
  eval->add_option("--ga-tournament", ev.ga.tournament, "GA tournament size");
  eval->add_option("--seed", ev.seed, "random seed");
  eval->add_option("--threads", ev.threads, "rollout threads");
  eval->add_option("--out", ev.out, "output accuracy CSV")->required();
  eval->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(ev.kb);
    const semcom::EmbeddingTable tab = semcom::EmbeddingTable::load_csv(ev.embeddings);
    const std::vector<semcom::KnowledgeBase> parts =
        semcom::partition_by_density(kb, ev.skgs, ev.seed);
    std::ofstream out(ev.out);
    if (!out) throw std::runtime_error("cannot write accuracy file: " + ev.out);
    out << "skg,density,method,accuracy\n";
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const semcom::KnowledgeBase& skg = parts[i];
      double acc_imit = 0.0;
      double acc_ga = 0.0;
      for (int s = 0; s < ev.seeds; ++s) {
        const std::uint64_t run_seed = semcom::mix_seed(ev.seed, i, s);
        const semcom::PathSet train_set = semcom::sample_expert_paths(
            skg, ev.train_experts, ev.flags.hops, semcom::mix_seed(run_seed, 1));
        const semcom::PathSet test_set = semcom::sample_expert_paths(
            skg, ev.test_paths, ev.flags.hops, semcom::mix_seed(run_seed, 2));
        const semcom::TrainResult res = semcom::train(
            skg, skg, tab, train_set, ev.flags.to_config(run_seed, ev.threads));
        acc_imit += semcom::evaluate_accuracy(res.policy, skg, tab, test_set, ev.samples,
                                              semcom::mix_seed(run_seed, 3));
        acc_ga += semcom::evaluate_accuracy_ga(skg, tab, res.comparator, test_set, ev.samples,
                                               ev.ga, semcom::mix_seed(run_seed, 4));
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", skg.density());
      out << i << ',' << buf << ",imitation,";
      std::snprintf(buf, sizeof buf, "%.17g", acc_imit / ev.seeds);
      out << buf << '\n';
      std::snprintf(buf, sizeof buf, "%.17g", skg.density());
      out << i << ',' << buf << ",ga,";
      std::snprintf(buf, sizeof buf, "%.17g", acc_ga / ev.seeds);
      out << buf << '\n';
    }
    std::cout << "evaluated " << parts.size() << " partitions to " << ev.out << "\n";
  });

  // channel
  struct {
    std::string kb, embeddings, policy, out;
    std::string snrs = "0,2,4,6,8,10";
    std::string modes = "none,nearest,reasoning";
    int packets = 500;
    std::size_t candidates = 5;
    std::size_t hops = 2;
    std::uint64_t seed = 0;
    int threads = 1;
  } ch;
  channel->add_option("--kb", ch.kb, "triple TSV")->required();
  channel->add_option("--embeddings", ch.embeddings, "embedding CSV")->required();
  channel->add_option("--policy", ch.policy,
                      "policy checkpoint (default: uniform max-entropy reasoner)");
  channel->add_option("--snrs", ch.snrs, "comma-separated SNR dB list (inf allowed)");
  channel->add_option("--modes", ch.modes, "comma-separated recovery modes");
  channel->add_option("--packets", ch.packets, "packets per sweep point");
  channel->add_option("--candidates", ch.candidates, "reasoning shortlist size");
  channel->add_option("--hops", ch.hops, "fresh-policy hop bound");
  channel->add_option("--seed", ch.seed, "random seed");
  channel->add_option("--threads", ch.threads, "trial threads");
  channel->add_option("--out", ch.out, "output sweep CSV")->required();
  channel->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(ch.kb);
    const semcom::EmbeddingTable tab = semcom::EmbeddingTable::load_csv(ch.embeddings);
    const semcom::PolicyModel policy =
        ch.policy.empty()
            ? semcom::make_uniform_policy_model(kb.relation_count(), tab.dim(), ch.hops)
            : semcom::PolicyModel::load(ch.policy);
    semcom::SweepConfig cfg;
    cfg.snr_db = parse_double_list(ch.snrs);
    cfg.modes = parse_mode_list(ch.modes);
    cfg.packets_per_point = ch.packets;
    cfg.shortlist = ch.candidates;
    cfg.seed = ch.seed;
    cfg.threads = ch.threads;
    const std::vector<semcom::SweepRow> rows = semcom::per_sweep(cfg, kb, tab, policy);
    semcom::save_sweep_csv(rows, ch.out);
    std::cout << "swept " << rows.size() << " points to " << ch.out << "\n";
  });

  // sweep-experts
  struct {
    std::string kb, embeddings, out_dir;
    std::string counts = "10,100,1000";
    TrainFlags flags;
    std::uint64_t seed = 0;
    int threads = 1;
  } sw;
  sweep->add_option("--kb", sw.kb, "triple TSV")->required();
  sweep->add_option("--embeddings", sw.embeddings, "embedding CSV")->required();
  sweep->add_option("--counts", sw.counts, "comma-separated expert-set sizes");
  sw.flags.add_to(sweep);
  sweep->add_option("--seed", sw.seed, "random seed");
  sweep->add_option("--threads", sw.threads, "rollout threads");
  sweep->add_option("--out-dir", sw.out_dir, "output directory")->required();
  sweep->callback([&] {
    const semcom::KnowledgeBase kb = semcom::KnowledgeBase::load_triples(sw.kb);
    const semcom::EmbeddingTable tab = semcom::EmbeddingTable::load_csv(sw.embeddings);
    std::filesystem::create_directories(sw.out_dir);
    const std::filesystem::path dir(sw.out_dir);
    for (std::size_t count : parse_count_list(sw.counts)) {
      const semcom::PathSet experts_set = semcom::sample_expert_paths(
          kb, count, sw.flags.hops, semcom::mix_seed(sw.seed, count));
      const semcom::TrainResult res = semcom::train(
          kb, kb, tab, experts_set, sw.flags.to_config(semcom::mix_seed(sw.seed, count, 1),
                                                       sw.threads));
      semcom::save_metrics_csv(
          res.trace, (dir / ("metrics_experts_" + std::to_string(count) + ".csv")).string());
    }
    std::cout << "swept expert counts to " << sw.out_dir << "\n";
  });

  std::vector<std::string> args = expand_config({argv + 1, argv + argc});
  std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed args
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
