#pragma once
// Minimal reverse-mode autodiff over Eigen matrices. A Graph owns nodes in
// creation order; backward() replays that order in reverse. Column vectors
// are n-by-1 matrices, scalars are 1-by-1.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace curiosity::autograd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kInvSqrt2 = 0.7071067811865475244;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
inline double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

// Exact GELU, x * Phi(x), with derivative Phi(x) + x * phi(x).
inline double gelu_scalar(double x) { return x * std_normal_cdf(x); }
inline double gelu_grad_scalar(double x) { return std_normal_cdf(x) + x * std_normal_pdf(x); }

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::function<void(Node&)> backprop;  // pulls this node's grad into parents
};

class Graph {
 public:
  Node* leaf(Mat v, bool requires_grad = false) {
    auto node = std::make_unique<Node>();
    node->value = std::move(v);
    node->grad = Mat::Zero(node->value.rows(), node->value.cols());
    node->requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  Node* constant(Mat v) { return leaf(std::move(v), false); }

  Node* zeros(Eigen::Index rows, Eigen::Index cols = 1) { return constant(Mat::Zero(rows, cols)); }

  Node* add(Node* a, Node* b) {
    Node* out = make(a->value + b->value, {a, b});
    out->backprop = [a, b](Node& self) {
      if (a->requires_grad) a->grad += self.grad;
      if (b->requires_grad) b->grad += self.grad;
    };
    return out;
  }

  Node* add_many(const std::vector<Node*>& xs) {
    if (xs.empty()) throw std::logic_error("add_many: empty");
    Mat v = xs[0]->value;
    for (std::size_t i = 1; i < xs.size(); ++i) v += xs[i]->value;
    Node* out = make(std::move(v), xs);
    auto parents = xs;
    out->backprop = [parents](Node& self) {
      for (Node* p : parents)
        if (p->requires_grad) p->grad += self.grad;
    };
    return out;
  }

  Node* scale(Node* a, double s) {
    Node* out = make(a->value * s, {a});
    out->backprop = [a, s](Node& self) {
      if (a->requires_grad) a->grad += self.grad * s;
    };
    return out;
  }

  // Elementwise mean of same-shape vectors; the empty-set convention
  // (zero vector) is handled by callers.
  Node* mean(const std::vector<Node*>& xs) {
    return scale(add_many(xs), 1.0 / static_cast<double>(xs.size()));
  }

  Node* matmul(Node* a, Node* b) {
    Node* out = make(a->value * b->value, {a, b});
    out->backprop = [a, b](Node& self) {
      if (a->requires_grad) a->grad += self.grad * b->value.transpose();
      if (b->requires_grad) b->grad += a->value.transpose() * self.grad;
    };
    return out;
  }

  // Column lookup into an embedding table; gradient scatters back into
  // that column.
  Node* col(Node* table, Eigen::Index j) {
    Node* out = make(table->value.col(j), {table});
    out->backprop = [table, j](Node& self) {
      if (table->requires_grad) table->grad.col(j) += self.grad;
    };
    return out;
  }

  Node* rows(Node* a, Eigen::Index r0, Eigen::Index n) {
    Node* out = make(a->value.middleRows(r0, n), {a});
    out->backprop = [a, r0, n](Node& self) {
      if (a->requires_grad) a->grad.middleRows(r0, n) += self.grad;
    };
    return out;
  }

  Node* vcat(const std::vector<Node*>& xs) {
    Eigen::Index rows = 0;
    for (Node* x : xs) rows += x->value.rows();
    Mat v(rows, 1);
    Eigen::Index at = 0;
    for (Node* x : xs) {
      v.middleRows(at, x->value.rows()) = x->value;
      at += x->value.rows();
    }
    Node* out = make(std::move(v), xs);
    auto parents = xs;
    out->backprop = [parents](Node& self) {
      Eigen::Index at = 0;
      for (Node* p : parents) {
        if (p->requires_grad) p->grad += self.grad.middleRows(at, p->value.rows());
        at += p->value.rows();
      }
    };
    return out;
  }

  Node* hadamard(Node* a, Node* b) {
    Node* out = make(a->value.cwiseProduct(b->value), {a, b});
    out->backprop = [a, b](Node& self) {
      if (a->requires_grad) a->grad += self.grad.cwiseProduct(b->value);
      if (b->requires_grad) b->grad += self.grad.cwiseProduct(a->value);
    };
    return out;
  }

  Node* sigmoid(Node* a) {
    Mat v = a->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    Node* out = make(std::move(v), {a});
    out->backprop = [a](Node& self) {
      if (!a->requires_grad) return;
      a->grad += self.grad.cwiseProduct(
          self.value.unaryExpr([](double s) { return s * (1.0 - s); }));
    };
    return out;
  }

  Node* tanh(Node* a) {
    Mat v = a->value.unaryExpr([](double x) { return std::tanh(x); });
    Node* out = make(std::move(v), {a});
    out->backprop = [a](Node& self) {
      if (!a->requires_grad) return;
      a->grad += self.grad.cwiseProduct(
          self.value.unaryExpr([](double t) { return 1.0 - t * t; }));
    };
    return out;
  }

  Node* gelu(Node* a) {
    Mat v = a->value.unaryExpr([](double x) { return gelu_scalar(x); });
    Node* out = make(std::move(v), {a});
    out->backprop = [a](Node& self) {
      if (!a->requires_grad) return;
      a->grad += self.grad.cwiseProduct(
          a->value.unaryExpr([](double x) { return gelu_grad_scalar(x); }));
    };
    return out;
  }

  // -------------------------------------------------------------------------
  // Loss heads. All return 1x1 nodes. Log arguments are clamped at eps; a
  // clamped coordinate contributes a constant and therefore no gradient.

  // -(sum_j w_j y_j log softmax(s)_j), computed through log-softmax.
  Node* weighted_softmax_cross_entropy(Node* logits, const Vec& weights, const Vec& labels,
                                       double eps) {
    const Vec& s = logits->value.col(0);
    const double m = s.maxCoeff();
    const double lse = m + std::log((s.array() - m).exp().sum());
    const double log_eps = std::log(eps);
    double loss = 0.0;
    double active_weight = 0.0;  // sum of w_j y_j over unclamped coordinates
    Eigen::ArrayXd clamped(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      double lp = s[j] - lse;
      bool clamp = lp < log_eps;
      clamped[j] = clamp ? 1.0 : 0.0;
      loss -= weights[j] * labels[j] * (clamp ? log_eps : lp);
      if (!clamp) active_weight += weights[j] * labels[j];
    }
    Node* out = make(Mat::Constant(1, 1, loss), {logits});
    Vec softmax = (s.array() - lse).exp().matrix();
    Vec wy = weights.cwiseProduct(labels);
    out->backprop = [logits, softmax, wy, active_weight, clamped](Node& self) {
      if (!logits->requires_grad) return;
      const double g = self.grad(0, 0);
      for (Eigen::Index j = 0; j < softmax.size(); ++j) {
        double d = active_weight * softmax[j] - (clamped[j] > 0.5 ? 0.0 : wy[j]);
        logits->grad(j, 0) += g * d;
      }
    };
    return out;
  }

  // -(sum_k y_k log p_k + (1-y_k) log(1-p_k)) with p = sigmoid(s),
  // p clamped to [eps, 1-eps].
  Node* binary_cross_entropy_with_logits(Node* logits, const Vec& labels, double eps) {
    const Vec& s = logits->value.col(0);
    double loss = 0.0;
    Vec dloss_ds = Vec::Zero(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      double p = 1.0 / (1.0 + std::exp(-s[k]));
      double pc = std::min(std::max(p, eps), 1.0 - eps);
      loss -= labels[k] * std::log(pc) + (1.0 - labels[k]) * std::log(1.0 - pc);
      if (p >= eps && p <= 1.0 - eps) dloss_ds[k] = p - labels[k];
    }
    Node* out = make(Mat::Constant(1, 1, loss), {logits});
    out->backprop = [logits, dloss_ds](Node& self) {
      if (!logits->requires_grad) return;
      logits->grad.col(0) += self.grad(0, 0) * dloss_ds;
    };
    return out;
  }

  // -log softmax(s)[gold]; the two-class cross entropy behind like
  // prediction.
  Node* pick_negative_log_softmax(Node* logits, Eigen::Index gold, double eps) {
    Vec one_hot = Vec::Zero(logits->value.rows());
    one_hot[gold] = 1.0;
    return weighted_softmax_cross_entropy(logits, Vec::Ones(logits->value.rows()), one_hot, eps);
  }

  void backward(Node* out) {
    if (out->value.rows() != 1 || out->value.cols() != 1)
      throw std::logic_error("backward: output must be scalar");
    out->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node* n = it->get();
      if (n->requires_grad && n->backprop) n->backprop(*n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Node* make(Mat value, const std::vector<Node*>& parents) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->grad = Mat::Zero(node->value.rows(), node->value.cols());
    for (const Node* p : parents)
      if (p->requires_grad) {
        node->requires_grad = true;
        break;
      }
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
  }

  std::vector<std::unique_ptr<Node>> nodes_;
};

// Softmax of a plain vector, shared by graph-free evaluation paths.
inline Vec softmax_values(const Vec& s) {
  const double m = s.maxCoeff();
  Vec e = (s.array() - m).exp().matrix();
  return e / e.sum();
}

inline double log_sum_exp(const Vec& s) {
  const double m = s.maxCoeff();
  return m + std::log((s.array() - m).exp().sum());
}

}  // namespace curiosity::autograd
