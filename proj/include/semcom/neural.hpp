#pragma once
// Small dense networks with exact analytic gradients. This is deliberately
// minimal: fully-connected layers, four activations, reverse-mode backward
// passes written out by hand so they can be checked against finite
// differences, flat parameter views for those checks, and a text checkpoint
// format that round-trips bit-exactly via %.17g.
//
// backward() takes the gradient of a scalar loss with respect to the network
// output. backward_from_logits() instead takes the gradient with respect to
// the final pre-activation, which is the natural hand-off point for softmax
// policies where log-prob and entropy gradients are cheapest at the logits.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semcom/rng.hpp"

namespace semcom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { identity, relu, sigmoid, softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  throw std::logic_error("unreachable activation");
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "softmax") return Activation::softmax;
  throw std::runtime_error("unknown activation: " + s);
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation act = Activation::identity;
};

/// Per-parameter gradients plus the gradient with respect to the input.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Vector input;
};

inline Vector apply_activation(const Vector& z, Activation act) {
  switch (act) {
    case Activation::identity:
      return z;
    case Activation::relu:
      return z.cwiseMax(0.0);
    case Activation::sigmoid:
      return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::softmax: {
      const double m = z.maxCoeff();
      Vector e = (z.array() - m).exp();
      return e / e.sum();
    }
  }
  throw std::logic_error("unreachable activation");
}

class DenseNet {
 public:
  DenseNet() = default;

  explicit DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const DenseLayer& d = layers_[l];
      if (d.weights.rows() != d.bias.size())
        throw std::invalid_argument("DenseNet: bias width mismatch");
      if (l > 0 && layers_[l - 1].weights.rows() != d.weights.cols())
        throw std::invalid_argument("DenseNet: layer width mismatch");
      if (d.act == Activation::softmax && l + 1 != layers_.size())
        throw std::invalid_argument("DenseNet: softmax only allowed on the final layer");
    }
  }

  /// Fully-connected stack: input -> hidden... -> output. Weights start
  /// uniform in +-scale/sqrt(fan_in), biases at zero.
  static DenseNet make_mlp(int input, std::span<const int> hidden, int output,
                           Activation hidden_act, Activation output_act, Rng& rng,
                           double scale = 1.0) {
    std::vector<DenseLayer> layers;
    int in = input;
    auto add = [&](int out, Activation act) {
      DenseLayer d;
      d.weights = Matrix(out, in);
      const double s = scale / std::sqrt(static_cast<double>(in));
      for (Eigen::Index r = 0; r < d.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < d.weights.cols(); ++c)
          d.weights(r, c) = rng.uniform(-s, s);
      d.bias = Vector::Zero(out);
      d.act = act;
      layers.push_back(std::move(d));
      in = out;
    };
    for (int h : hidden) add(h, hidden_act);
    add(output, output_act);
    return DenseNet(std::move(layers));
  }

  int input_width() const { return static_cast<int>(layers_.front().weights.cols()); }
  int output_width() const { return static_cast<int>(layers_.back().weights.rows()); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Vector forward(const Vector& x) const {
    Vector a = x;
    for (const DenseLayer& d : layers_) {
      if (a.size() != d.weights.cols())
        throw std::invalid_argument("DenseNet::forward: input width mismatch");
      a = apply_activation(d.weights * a + d.bias, d.act);
    }
    return a;
  }

  struct Trace {
    Vector input;
    std::vector<Vector> pre;   // z per layer
    std::vector<Vector> post;  // activation(z) per layer
    const Vector& output() const { return post.back(); }
  };

  Trace forward_trace(const Vector& x) const {
    Trace t;
    t.input = x;
    t.pre.reserve(layers_.size());
    t.post.reserve(layers_.size());
    const Vector* a = &t.input;
    for (const DenseLayer& d : layers_) {
      if (a->size() != d.weights.cols())
        throw std::invalid_argument("DenseNet::forward_trace: input width mismatch");
      t.pre.push_back(d.weights * (*a) + d.bias);
      t.post.push_back(apply_activation(t.pre.back(), d.act));
      a = &t.post.back();
    }
    return t;
  }

  /// Gradients of u . output with respect to every parameter and the input,
  /// where u is the upstream gradient at the network output.
  Gradients backward(const Trace& t, const Vector& upstream) const {
    Vector delta = activation_jacobian_apply(layers_.back().act, t.pre.back(),
                                             t.post.back(), upstream);
    return backprop_from_delta(t, std::move(delta));
  }

  /// Same, but upstream is already the gradient at the final pre-activation.
  Gradients backward_from_logits(const Trace& t, const Vector& upstream_z) const {
    return backprop_from_delta(t, upstream_z);
  }

  /// params += step * grads (positive step ascends the objective the
  /// gradients were taken from).
  void apply_gradients(const Gradients& g, double step) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weights += step * g.weights[l];
      layers_[l].bias += step * g.biases[l];
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const DenseLayer& d : layers_) n += d.weights.size() + d.bias.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const DenseLayer& d : layers_) {
      for (Eigen::Index r = 0; r < d.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < d.weights.cols(); ++c) out.push_back(d.weights(r, c));
      for (Eigen::Index i = 0; i < d.bias.size(); ++i) out.push_back(d.bias(i));
    }
    return out;
  }

  void unflatten(std::span<const double> p) {
    if (p.size() != parameter_count())
      throw std::invalid_argument("DenseNet::unflatten: size mismatch");
    std::size_t i = 0;
    for (DenseLayer& d : layers_) {
      for (Eigen::Index r = 0; r < d.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < d.weights.cols(); ++c) d.weights(r, c) = p[i++];
      for (Eigen::Index b = 0; b < d.bias.size(); ++b) d.bias(b) = p[i++];
    }
  }

  void save(std::ostream& out) const {
    char buf[40];
    auto put = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
    };
    out << "densenet 1\nlayers " << layers_.size() << '\n';
    for (const DenseLayer& d : layers_) {
      out << "layer " << d.weights.rows() << ' ' << d.weights.cols() << ' '
          << to_string(d.act) << '\n';
      for (Eigen::Index r = 0; r < d.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.weights.cols(); ++c) {
          if (c) out << ' ';
          put(d.weights(r, c));
        }
        out << '\n';
      }
      for (Eigen::Index i = 0; i < d.bias.size(); ++i) {
        if (i) out << ' ';
        put(d.bias(i));
      }
      out << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    save(out);
  }

  static DenseNet load(std::istream& in) {
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "densenet" || version != 1)
      throw std::runtime_error("not a densenet checkpoint");
    std::string tok;
    std::size_t n = 0;
    in >> tok >> n;
    if (tok != "layers" || n == 0) throw std::runtime_error("bad checkpoint layer count");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l < n; ++l) {
      Eigen::Index rows = 0, cols = 0;
      std::string act;
      in >> tok >> rows >> cols >> act;
      if (tok != "layer" || rows <= 0 || cols <= 0)
        throw std::runtime_error("bad checkpoint layer header");
      DenseLayer d;
      d.act = activation_from_string(act);
      d.weights = Matrix(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
          if (!(in >> d.weights(r, c))) throw std::runtime_error("truncated checkpoint");
      d.bias = Vector(rows);
      for (Eigen::Index i = 0; i < rows; ++i)
        if (!(in >> d.bias(i))) throw std::runtime_error("truncated checkpoint");
      layers.push_back(std::move(d));
    }
    return DenseNet(std::move(layers));
  }

  static DenseNet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return load(in);
  }

 private:
  static Vector activation_jacobian_apply(Activation act, const Vector& z,
                                          const Vector& y, const Vector& u) {
    switch (act) {
      case Activation::identity:
        return u;
      case Activation::relu: {
        Vector d(u.size());
        for (Eigen::Index i = 0; i < u.size(); ++i) d(i) = z(i) > 0.0 ? u(i) : 0.0;
        return d;
      }
      case Activation::sigmoid:
        return u.cwiseProduct(y.cwiseProduct(Vector::Ones(y.size()) - y));
      case Activation::softmax: {
        const double dot = u.dot(y);
        return y.cwiseProduct((u.array() - dot).matrix());
      }
    }
    throw std::logic_error("unreachable activation");
  }

  Gradients backprop_from_delta(const Trace& t, Vector delta) const {
    Gradients g;
    g.weights.resize(layers_.size());
    g.biases.resize(layers_.size());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Vector& below = l == 0 ? t.input : t.post[l - 1];
      g.weights[l] = delta * below.transpose();
      g.biases[l] = delta;
      Vector u = layers_[l].weights.transpose() * delta;
      if (l > 0)
        delta = activation_jacobian_apply(layers_[l - 1].act, t.pre[l - 1], t.post[l - 1], u);
      else
        g.input = std::move(u);
    }
    return g;
  }

  std::vector<DenseLayer> layers_;
};

inline Gradients zeros_like(const DenseNet& net) {
  Gradients g;
  for (const DenseLayer& d : net.layers()) {
    g.weights.emplace_back(Matrix::Zero(d.weights.rows(), d.weights.cols()));
    g.biases.emplace_back(Vector::Zero(d.bias.size()));
  }
  g.input = Vector::Zero(net.input_width());
  return g;
}

inline void add_scaled(Gradients& acc, const Gradients& g, double s) {
  for (std::size_t l = 0; l < acc.weights.size(); ++l) {
    acc.weights[l] += s * g.weights[l];
    acc.biases[l] += s * g.biases[l];
  }
  if (acc.input.size() == g.input.size() && g.input.size() > 0) acc.input += s * g.input;
}

}  // namespace semcom
