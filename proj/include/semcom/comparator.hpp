#pragma once
// Comparator: a scalar network sigmoid(W2 relu(W1 p + b1) + b2) scoring how
// expert-like a path embedding p looks. Trained as a discriminator with
// cross-entropy: expert embeddings toward 1, generated toward 0. The
// semantic distance between two embeddings is the difference of their
// scores.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "semcom/neural.hpp"
#include "semcom/rng.hpp"

namespace semcom {

// floor applied inside logs; sigmoid outputs only reach it under extreme
// saturation
inline constexpr double kScoreFloor = 1e-12;

// tighter clamp for reward values so log scores stay in a usable range
inline constexpr double kRewardClamp = 1e-6;

struct ComparatorModel {
  DenseNet net;  // d -> hidden relu -> 1 sigmoid

  void save(const std::string& path) const { net.save(path); }
  static ComparatorModel load(const std::string& path) { return {DenseNet::load(path)}; }
};

inline ComparatorModel make_comparator_model(int embed_dim, int hidden, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc09au));
  const int h[1] = {hidden};
  return {DenseNet::make_mlp(embed_dim, h, 1, Activation::relu, Activation::sigmoid, rng)};
}

/// Score in (0, 1) for a path embedding.
inline double feature(const ComparatorModel& m, const Vector& p) {
  return m.net.forward(p)(0);
}

/// Log score clamped away from 0 and 1; the reward signal for the policy.
inline double log_feature(const ComparatorModel& m, const Vector& p) {
  const double f = std::min(1.0 - kRewardClamp, std::max(kRewardClamp, feature(m, p)));
  return std::log(f);
}

/// Difference of scores; positive means the first embedding looks more
/// expert-like.
inline double semantic_distance(const ComparatorModel& m, const Vector& a, const Vector& b) {
  return feature(m, a) - feature(m, b);
}

/// Discriminator cross-entropy: -(mean log f(expert) + mean log(1 - f(generated))).
inline double comparator_loss(const ComparatorModel& m, std::span<const Vector> expert,
                              std::span<const Vector> generated) {
  if (expert.empty() || generated.empty())
    throw std::invalid_argument("comparator_loss: both batches must be non-empty");
  double le = 0.0;
  for (const Vector& p : expert) le += std::log(std::max(kScoreFloor, feature(m, p)));
  double lg = 0.0;
  for (const Vector& p : generated)
    lg += std::log(std::max(kScoreFloor, 1.0 - feature(m, p)));
  return -(le / static_cast<double>(expert.size()) + lg / static_cast<double>(generated.size()));
}

/// Analytic gradients of comparator_loss with respect to the parameters.
inline Gradients comparator_loss_gradients(const ComparatorModel& m,
                                           std::span<const Vector> expert,
                                           std::span<const Vector> generated) {
  if (expert.empty() || generated.empty())
    throw std::invalid_argument("comparator_loss_gradients: both batches must be non-empty");
  Gradients acc = zeros_like(m.net);
  Vector upstream(1);
  const double ne = static_cast<double>(expert.size());
  const double ng = static_cast<double>(generated.size());
  for (const Vector& p : expert) {
    const DenseNet::Trace t = m.net.forward_trace(p);
    const double f = t.output()(0);
    if (f <= kScoreFloor) continue;  // clamped region is flat
    upstream(0) = -1.0 / (f * ne);
    add_scaled(acc, m.net.backward(t, upstream), 1.0);
  }
  for (const Vector& p : generated) {
    const DenseNet::Trace t = m.net.forward_trace(p);
    const double f = t.output()(0);
    if (1.0 - f <= kScoreFloor) continue;
    upstream(0) = 1.0 / ((1.0 - f) * ng);
    add_scaled(acc, m.net.backward(t, upstream), 1.0);
  }
  return acc;
}

/// One SGD descent step on comparator_loss; returns the updated model.
inline ComparatorModel comparator_step(ComparatorModel m, std::span<const Vector> expert,
                                       std::span<const Vector> generated, double lr) {
  const Gradients g = comparator_loss_gradients(m, expert, generated);
  m.net.apply_gradients(g, -lr);
  return m;
}

}  // namespace semcom
