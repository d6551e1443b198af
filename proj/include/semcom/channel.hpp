#pragma once
// Embedding transport over a binary-input AWGN channel. Each entity vector
// is fixed-point quantized, one dimension after another, 38 bits per
// dimension: 1 sign bit, 3 integer bits (MSB first), 34 fraction bits (MSB
// first), covering [-4, 4) with error at most 2^-35. Unit-norm entity
// vectors always fit this range. Bits are sent as BPSK symbols (0 -> +1,
// 1 -> -1) with hard-decision decoding; noise variance per symbol is
// 1 / (2 * 10^(snr_db/10)).
//
// Three receivers:
//   none       accept only a bit-exact match against some entity's packet
//   nearest    decode to the entity nearest in embedding space
//   reasoning  shortlist the k nearest; a bit-exact candidate needs no
//              correction and wins outright, otherwise score candidates by
//              the policy's walk mass arriving from the message's context
//              entities, each taken at its upstream depth. Context entities
//              themselves were received correctly and never decode; ties
//              fall back to embedding distance
//
// per_sweep measures packet error rates per SNR and mode with one
// independently seeded trial stream per (SNR, mode, trial) triple, so runs
// reproduce bit-for-bit at any thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semcom/embedding.hpp"
#include "semcom/knowledge_base.hpp"
#include "semcom/parallel.hpp"
#include "semcom/policy.hpp"
#include "semcom/rng.hpp"

namespace semcom {

inline constexpr int kBitsPerDimension = 38;  // 1 sign + 3 integer + 34 fraction
inline constexpr int kFractionBits = 34;
// relative mass band inside which shortlist candidates count as tied during
// reasoning recovery
inline constexpr double kMassTieBand = 0.1;

struct Packet {
  std::vector<std::uint8_t> bits;  // 0/1 per entry, dimension-major
  EntityId entity = 0;
};

namespace detail {

inline void quantize_component(double x, std::uint8_t* out) {
  if (!(x >= -4.0 && x < 4.0))
    throw std::invalid_argument("quantize: component outside [-4, 4)");
  const auto q = static_cast<std::uint64_t>(std::llround(std::abs(x) * 0x1p34));
  *out++ = x < 0.0 ? 1 : 0;
  const std::uint64_t ipart = q >> kFractionBits;
  for (int b = 2; b >= 0; --b) *out++ = static_cast<std::uint8_t>((ipart >> b) & 1);
  for (int b = kFractionBits - 1; b >= 0; --b)
    *out++ = static_cast<std::uint8_t>((q >> b) & 1);
}

/// True when bits equal the quantization of v, one dimension at a time so a
/// mismatch exits without quantizing the rest.
inline bool packet_matches(std::span<const std::uint8_t> bits, const Vector& v) {
  if (bits.size() != static_cast<std::size_t>(v.size()) * kBitsPerDimension) return false;
  std::uint8_t expect[kBitsPerDimension];
  const std::uint8_t* at = bits.data();
  for (Eigen::Index i = 0; i < v.size(); ++i, at += kBitsPerDimension) {
    quantize_component(v(i), expect);
    if (!std::equal(expect, expect + kBitsPerDimension, at)) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<std::uint8_t> quantize_vector(const Vector& v) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(v.size()) * kBitsPerDimension);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    detail::quantize_component(v(i), bits.data() + i * kBitsPerDimension);
  return bits;
}

inline Packet quantize(const EmbeddingTable& tab, EntityId entity) {
  return {quantize_vector(tab.entity(entity)), entity};
}

inline Vector dequantize(std::span<const std::uint8_t> bits, int dim) {
  if (dim <= 0 || bits.size() != static_cast<std::size_t>(dim) * kBitsPerDimension)
    throw std::invalid_argument("dequantize: bit count does not match dimension");
  Vector v(dim);
  std::size_t at = 0;
  for (int i = 0; i < dim; ++i) {
    const bool neg = bits[at++] != 0;
    std::uint64_t q = 0;
    for (int b = 0; b < 3 + kFractionBits; ++b) q = (q << 1) | bits[at++];
    const double mag = static_cast<double>(q) * 0x1p-34;
    v(i) = neg ? -mag : mag;
  }
  return v;
}

/// BPSK over AWGN with hard decisions. Infinite SNR passes bits through.
inline std::vector<std::uint8_t> transmit(std::span<const std::uint8_t> bits, double snr_db,
                                          Rng& rng) {
  std::vector<std::uint8_t> out(bits.begin(), bits.end());
  if (std::isinf(snr_db) && snr_db > 0.0) return out;
  const double snr = std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(1.0 / (2.0 * snr));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double symbol = bits[i] ? -1.0 : 1.0;
    out[i] = (symbol + sigma * rng.gaussian()) < 0.0 ? 1 : 0;
  }
  return out;
}

inline std::vector<std::uint8_t> transmit(const Packet& p, double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  return transmit(p.bits, snr_db, rng);
}

enum class RecoveryMode { none, nearest, reasoning };

inline const char* to_string(RecoveryMode m) {
  switch (m) {
    case RecoveryMode::none: return "none";
    case RecoveryMode::nearest: return "nearest";
    case RecoveryMode::reasoning: return "reasoning";
  }
  throw std::logic_error("unreachable recovery mode");
}

inline RecoveryMode recovery_mode_from_string(const std::string& s) {
  if (s == "none") return RecoveryMode::none;
  if (s == "nearest") return RecoveryMode::nearest;
  if (s == "reasoning") return RecoveryMode::reasoning;
  throw std::runtime_error("unknown recovery mode: " + s);
}

namespace detail {
/// Probability of standing on each entity after walking exactly `steps` real
/// edges from `origin` under the policy; NO_OP branches drop out, so early
/// stops contribute nothing.
inline std::map<EntityId, double> arrival_mass(const PolicyModel& m, const KnowledgeBase& kb,
                                               const EmbeddingTable& tab, EntityId origin,
                                               std::size_t steps) {
  std::map<EntityId, double> cur{{origin, 1.0}};
  for (std::size_t s = 0; s < steps; ++s) {
    std::map<EntityId, double> next;
    for (const auto& [e, p] : cur) {
      const Vector q = action_distribution(m, make_state(tab, e, origin), kb);
      for (RelationId r : kb.valid_relations(e)) {
        if (r == kNoOp) continue;
        const std::vector<EntityId> ts = kb.tails(e, r);
        const double share = p * q(static_cast<Eigen::Index>(r)) /
                             static_cast<double>(ts.size());
        for (EntityId t : ts) next[t] += share;
      }
    }
    cur = std::move(next);
    if (cur.empty()) break;
  }
  return cur;
}
}  // namespace detail

/// Decode a received packet to an entity of kb, or nullopt when mode `none`
/// finds no bit-exact match. Reasoning mode scores the shortlist by summed
/// arrival mass from the context entities: context[i] sits i+1 hops upstream
/// of the lost entity, so it contributes its exact-(i+1)-step walk mass.
inline std::optional<EntityId> recover(std::span<const std::uint8_t> bits,
                                       const KnowledgeBase& kb, const EmbeddingTable& tab,
                                       const PolicyModel& policy, RecoveryMode mode,
                                       std::span<const EntityId> context = {},
                                       std::size_t shortlist = 5) {
  if (bits.size() != static_cast<std::size_t>(tab.dim()) * kBitsPerDimension)
    throw std::invalid_argument("recover: packet width does not match embedding dimension");
  switch (mode) {
    case RecoveryMode::none: {
      for (EntityId e : kb.entities())
        if (detail::packet_matches(bits, tab.entity(e))) return e;
      return std::nullopt;
    }
    case RecoveryMode::nearest: {
      const Vector v = dequantize(bits, tab.dim());
      return nearest_entities(tab, v, 1, kb.entities()).front().first;
    }
    case RecoveryMode::reasoning: {
      const Vector v = dequantize(bits, tab.dim());
      const auto cands = nearest_entities(tab, v, shortlist, kb.entities());
      for (const auto& [e, dist] : cands)
        if (detail::packet_matches(bits, tab.entity(e))) return e;
      std::map<EntityId, double> support;
      for (std::size_t s = 0; s < context.size(); ++s)
        for (const auto& [e, mass] : detail::arrival_mass(policy, kb, tab, context[s], s + 1))
          support[e] += mass;
      const auto is_context = [&](EntityId e) {
        return std::find(context.begin(), context.end(), e) != context.end();
      };
      std::vector<double> masses(cands.size(), -1.0);  // context stays ineligible
      double top = 0.0;
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (is_context(cands[i].first)) continue;
        const auto it = support.find(cands[i].first);
        masses[i] = it == support.end() ? 0.0 : it->second;
        top = std::max(top, masses[i]);
      }
      // near-equal masses count as ties: structurally symmetric candidates
      // agree only up to network jitter, so the band absorbs it and the
      // distance order (candidates come nearest-first) decides
      for (std::size_t i = 0; i < cands.size(); ++i)
        if (masses[i] >= 0.0 && masses[i] >= top * (1.0 - kMassTieBand)) return cands[i].first;
      return cands.front().first;
    }
  }
  throw std::logic_error("unreachable recovery mode");
}

struct SweepConfig {
  std::vector<double> snr_db = {0, 2, 4, 6, 8, 10};
  std::vector<RecoveryMode> modes = {RecoveryMode::none, RecoveryMode::nearest,
                                     RecoveryMode::reasoning};
  int packets_per_point = 500;
  std::size_t shortlist = 5;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct SweepRow {
  double snr_db = 0.0;
  RecoveryMode mode = RecoveryMode::none;
  std::size_t trials = 0;
  std::size_t errors = 0;
  double per = 0.0;
};

/// Packet error rate per (SNR, mode). Each trial picks a uniform target
/// entity, builds a context by walking hop_bound stored edges backwards from
/// it, transmits the target's packet and decodes. A trial errors when the
/// decoded entity is absent or wrong.
inline std::vector<SweepRow> per_sweep(const SweepConfig& cfg, const KnowledgeBase& kb,
                                       const EmbeddingTable& tab, const PolicyModel& policy) {
  if (cfg.packets_per_point < 1) throw std::invalid_argument("per_sweep: need packets");
  if (cfg.snr_db.empty() || cfg.modes.empty())
    throw std::invalid_argument("per_sweep: empty sweep");
  const std::vector<EntityId>& ents = kb.entities();
  if (ents.empty()) throw std::invalid_argument("per_sweep: empty knowledge base");

  std::vector<SweepRow> rows;
  const auto n = static_cast<std::size_t>(cfg.packets_per_point);
  for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
    for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi) {
      const RecoveryMode mode = cfg.modes[mi];
      std::atomic<std::size_t> errors{0};
      parallel_for(n, cfg.threads, [&](std::size_t trial) {
        Rng rng(mix_seed(cfg.seed, si, mi, trial));
        const EntityId target = ents[rng.below(ents.size())];
        std::vector<EntityId> context;
        EntityId cur = target;
        for (std::size_t step = 0; step < policy.hop_bound; ++step) {
          const auto in = kb.incoming(cur);
          if (in.empty()) break;
          cur = in[rng.below(in.size())].entity;
          if (cur != target &&
              std::find(context.begin(), context.end(), cur) == context.end())
            context.push_back(cur);
        }
        const Packet packet = quantize(tab, target);
        const std::vector<std::uint8_t> received = transmit(packet.bits, cfg.snr_db[si], rng);
        const std::optional<EntityId> decoded =
            recover(received, kb, tab, policy, mode, context, cfg.shortlist);
        if (!decoded || *decoded != target) errors.fetch_add(1, std::memory_order_relaxed);
      });
      SweepRow row;
      row.snr_db = cfg.snr_db[si];
      row.mode = mode;
      row.trials = n;
      row.errors = errors.load();
      row.per = static_cast<double>(row.errors) / static_cast<double>(n);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sweep file: " + path);
  out << "snr_db,mode,trials,errors,per\n";
  char buf[40];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%g", r.snr_db);
    out << buf << ',' << to_string(r.mode) << ',' << r.trials << ',' << r.errors;
    std::snprintf(buf, sizeof buf, "%.17g", r.per);
    out << ',' << buf << '\n';
  }
}

struct WilsonInterval {
  double center = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Wilson score interval for a binomial proportion; the center shrinks
/// small-sample estimates toward 1/2, which smooths sampling noise when
/// comparing error rates.
inline WilsonInterval wilson_interval(std::size_t errors, std::size_t trials,
                                      double z = 1.96) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: no trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(errors) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {center, center - half, center + half};
}

}  // namespace semcom
