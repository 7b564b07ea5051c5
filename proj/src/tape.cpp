#include "tlla/tape.hpp"

#include <algorithm>
#include <cmath>

namespace tlla {

namespace {
std::atomic<std::uint64_t> g_backward_count{0};
}

std::uint64_t backward_pass_count() { return g_backward_count.load(); }
void reset_backward_pass_count() { g_backward_count.store(0); }

Tape::Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

bool Tape::any_requires(const std::vector<Var>& parents) const {
  for (Var p : parents)
    if (nodes_[p].requires_grad) return true;
  return false;
}

Tape::Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::row(Var m, std::size_t r) {
  Node n;
  n.parents = {m};
  n.requires_grad = any_requires(n.parents);
  n.forward = [m, r](Tape& t, Node& self) {
    const Tensor& mv = t.nodes_[m].value;
    std::size_t c = mv.cols();
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) out[j] = mv.at(r, j);
    self.value = std::move(out);
  };
  n.backward = [m, r](Tape& t, Node& self) {
    Node& pm = t.nodes_[m];
    if (!pm.requires_grad) return;
    std::size_t c = pm.value.cols();
    for (std::size_t j = 0; j < c; ++j) pm.grad.at(r, j) += self.grad[j];
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::sum_rows(Var m) {
  Node n;
  n.parents = {m};
  n.requires_grad = any_requires(n.parents);
  n.forward = [m](Tape& t, Node& self) {
    const Tensor& mv = t.nodes_[m].value;
    Tensor out({mv.cols()});
    for (std::size_t r = 0; r < mv.rows(); ++r)
      for (std::size_t j = 0; j < mv.cols(); ++j) out[j] += mv.at(r, j);
    self.value = std::move(out);
  };
  n.backward = [m](Tape& t, Node& self) {
    Node& pm = t.nodes_[m];
    if (!pm.requires_grad) return;
    for (std::size_t r = 0; r < pm.value.rows(); ++r)
      for (std::size_t j = 0; j < pm.value.cols(); ++j)
        pm.grad.at(r, j) += self.grad[j];
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  if (!nodes_[a].value.same_shape(nodes_[b].value))
    throw InvalidValue("tape add: shape mismatch");
  Node n;
  n.parents = {a, b};
  n.requires_grad = any_requires(n.parents);
  n.forward = [a, b](Tape& t, Node& self) {
    Tensor out = t.nodes_[a].value;
    out += t.nodes_[b].value;
    self.value = std::move(out);
  };
  n.backward = [a, b](Tape& t, Node& self) {
    for (Var p : {a, b}) {
      Node& pn = t.nodes_[p];
      if (pn.requires_grad) pn.grad += self.grad;
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
  Node n;
  n.parents = {a};
  n.requires_grad = any_requires(n.parents);
  n.forward = [a, c](Tape& t, Node& self) {
    Tensor out = t.nodes_[a].value;
    out *= c;
    self.value = std::move(out);
  };
  n.backward = [a, c](Tape& t, Node& self) {
    Node& pa = t.nodes_[a];
    if (pa.requires_grad) pa.grad.axpy(c, self.grad);
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::add_const(Var a, Tensor c) {
  if (!nodes_[a].value.same_shape(c))
    throw InvalidValue("tape add_const: shape mismatch");
  Node n;
  n.parents = {a};
  n.requires_grad = any_requires(n.parents);
  n.forward = [a, c](Tape& t, Node& self) {
    Tensor out = t.nodes_[a].value;
    out += c;
    self.value = std::move(out);
  };
  n.backward = [a](Tape& t, Node& self) {
    Node& pa = t.nodes_[a];
    if (pa.requires_grad) pa.grad += self.grad;
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::affine(Var w, Var b, Var x) {
  Node n;
  n.parents = {w, b, x};
  n.requires_grad = any_requires(n.parents);
  n.forward = [w, b, x](Tape& t, Node& self) {
    const Tensor& wv = t.nodes_[w].value;
    const Tensor& bv = t.nodes_[b].value;
    const Tensor& xv = t.nodes_[x].value;
    std::size_t m = wv.rows(), k = wv.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      double s = bv[i];
      const double* wr = wv.data().data() + i * k;
      for (std::size_t j = 0; j < k; ++j) s += wr[j] * xv[j];
      out[i] = s;
    }
    self.value = std::move(out);
  };
  n.backward = [w, b, x](Tape& t, Node& self) {
    Node& pw = t.nodes_[w];
    Node& pb = t.nodes_[b];
    Node& px = t.nodes_[x];
    std::size_t m = pw.value.rows(), k = pw.value.cols();
    for (std::size_t i = 0; i < m; ++i) {
      double g = self.grad[i];
      if (pb.requires_grad) pb.grad[i] += g;
      if (pw.requires_grad)
        for (std::size_t j = 0; j < k; ++j)
          pw.grad.at(i, j) += g * px.value[j];
      if (px.requires_grad)
        for (std::size_t j = 0; j < k; ++j)
          px.grad[j] += g * pw.value.at(i, j);
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::tanh_(Var x) {
  Node n;
  n.parents = {x};
  n.requires_grad = any_requires(n.parents);
  n.forward = [x](Tape& t, Node& self) {
    Tensor out = t.nodes_[x].value;
    for (auto& v : out.data()) v = std::tanh(v);
    self.value = std::move(out);
  };
  n.backward = [x](Tape& t, Node& self) {
    Node& px = t.nodes_[x];
    if (!px.requires_grad) return;
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      double y = self.value[i];
      px.grad[i] += self.grad[i] * (1.0 - y * y);
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::normalize(Var x) {
  Node n;
  n.parents = {x};
  n.requires_grad = any_requires(n.parents);
  n.forward = [x](Tape& t, Node& self) {
    const Tensor& xv = t.nodes_[x].value;
    double nn = xv.norm2();
    if (nn < 1e-12) throw DegenerateVector("normalize: zero-norm input");
    Tensor out = xv;
    out *= 1.0 / nn;
    self.value = std::move(out);
  };
  n.backward = [x](Tape& t, Node& self) {
    Node& px = t.nodes_[x];
    if (!px.requires_grad) return;
    double nn = px.value.norm2();
    double yg = tlla::dot(self.value.span(), self.grad.span());
    for (std::size_t i = 0; i < self.value.size(); ++i)
      px.grad[i] += (self.grad[i] - self.value[i] * yg) / nn;
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::dot(Var a, Var b) {
  Node n;
  n.parents = {a, b};
  n.requires_grad = any_requires(n.parents);
  n.forward = [a, b](Tape& t, Node& self) {
    self.value = Tensor::scalar(
        tlla::dot(t.nodes_[a].value.span(), t.nodes_[b].value.span()));
  };
  n.backward = [a, b](Tape& t, Node& self) {
    Node& pa = t.nodes_[a];
    Node& pb = t.nodes_[b];
    double g = self.grad[0];
    if (pa.requires_grad) pa.grad.axpy(g, pb.value);
    if (pb.requires_grad) pb.grad.axpy(g, pa.value);
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::cosine(Var a, Var b) {
  Node n;
  n.parents = {a, b};
  n.requires_grad = any_requires(n.parents);
  n.forward = [a, b](Tape& t, Node& self) {
    const Tensor& av = t.nodes_[a].value;
    const Tensor& bv = t.nodes_[b].value;
    double na = av.norm2(), nb = bv.norm2();
    if (na < 1e-12 || nb < 1e-12)
      throw DegenerateVector("tape cosine: zero-norm input");
    double c = tlla::dot(av.span(), bv.span()) / (na * nb);
    self.value = Tensor::scalar(std::clamp(c, -1.0, 1.0));
  };
  n.backward = [a, b](Tape& t, Node& self) {
    Node& pa = t.nodes_[a];
    Node& pb = t.nodes_[b];
    double na = pa.value.norm2(), nb = pb.value.norm2();
    double c = self.value[0];
    double g = self.grad[0];
    for (std::size_t i = 0; i < pa.value.size(); ++i) {
      if (pa.requires_grad)
        pa.grad[i] += g * (pb.value[i] / (na * nb) - c * pa.value[i] / (na * na));
      if (pb.requires_grad)
        pb.grad[i] += g * (pa.value[i] / (na * nb) - c * pb.value[i] / (nb * nb));
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::concat_scalars(const std::vector<Var>& parts) {
  Node n;
  n.parents = parts;
  n.requires_grad = any_requires(n.parents);
  auto ps = parts;
  n.forward = [ps](Tape& t, Node& self) {
    Tensor out({ps.size()});
    for (std::size_t i = 0; i < ps.size(); ++i)
      out[i] = t.nodes_[ps[i]].value[0];
    self.value = std::move(out);
  };
  n.backward = [ps](Tape& t, Node& self) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Node& p = t.nodes_[ps[i]];
      if (p.requires_grad) p.grad[0] += self.grad[i];
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::softmax_t(Var v, double tau) {
  if (!(tau > 0.0)) throw InvalidConfig("tape softmax_t: tau must be positive");
  Node n;
  n.parents = {v};
  n.requires_grad = any_requires(n.parents);
  n.forward = [v, tau](Tape& t, Node& self) {
    const Tensor& xv = t.nodes_[v].value;
    Tensor out(xv.shape());
    double m = tau * xv[0];
    for (std::size_t i = 1; i < xv.size(); ++i) m = std::max(m, tau * xv[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      out[i] = std::exp(tau * xv[i] - m);
      z += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= z;
    self.value = std::move(out);
  };
  n.backward = [v, tau](Tape& t, Node& self) {
    Node& pv = t.nodes_[v];
    if (!pv.requires_grad) return;
    double gy = tlla::dot(self.grad.span(), self.value.span());
    for (std::size_t i = 0; i < self.value.size(); ++i)
      pv.grad[i] += tau * self.value[i] * (self.grad[i] - gy);
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::log_(Var v) {
  Node n;
  n.parents = {v};
  n.requires_grad = any_requires(n.parents);
  n.forward = [v](Tape& t, Node& self) {
    Tensor out = t.nodes_[v].value;
    for (auto& x : out.data()) x = std::log(x);
    self.value = std::move(out);
  };
  n.backward = [v](Tape& t, Node& self) {
    Node& pv = t.nodes_[v];
    if (!pv.requires_grad) return;
    for (std::size_t i = 0; i < self.value.size(); ++i)
      pv.grad[i] += self.grad[i] / pv.value[i];
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::pick(Var v, std::size_t k) {
  Node n;
  n.parents = {v};
  n.requires_grad = any_requires(n.parents);
  n.forward = [v, k](Tape& t, Node& self) {
    self.value = Tensor::scalar(t.nodes_[v].value[k]);
  };
  n.backward = [v, k](Tape& t, Node& self) {
    Node& pv = t.nodes_[v];
    if (pv.requires_grad) pv.grad[k] += self.grad[0];
  };
  n.forward(*this, n);
  return push(std::move(n));
}

Tape::Var Tape::add_n(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidValue("tape add_n: empty argument list");
  Node n;
  n.parents = parts;
  n.requires_grad = any_requires(n.parents);
  auto ps = parts;
  n.forward = [ps](Tape& t, Node& self) {
    Tensor out = t.nodes_[ps[0]].value;
    for (std::size_t i = 1; i < ps.size(); ++i) out += t.nodes_[ps[i]].value;
    self.value = std::move(out);
  };
  n.backward = [ps](Tape& t, Node& self) {
    for (Var v : ps) {
      Node& p = t.nodes_[v];
      if (p.requires_grad) p.grad += self.grad;
    }
  };
  n.forward(*this, n);
  return push(std::move(n));
}

void Tape::backward(Var output) {
  if (nodes_[output].value.size() != 1)
    throw InvalidTape("backward: output is not a scalar");
  g_backward_count.fetch_add(1);
  for (Node& n : nodes_)
    if (n.requires_grad) n.grad = Tensor(n.value.shape());
  if (!nodes_[output].requires_grad) return;  // loss detached from all params
  nodes_[output].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n);
  }
}

const Tensor& Tape::grad(Var leafv) const {
  const Node& n = nodes_[leafv];
  if (!n.requires_grad)
    throw InvalidTape("grad: variable is not gradient-tracked");
  if (n.grad.size() != n.value.size())
    throw InvalidTape("grad: backward has not been run");
  return n.grad;
}

const Tensor& Tape::replay(Var v) {
  for (Node& n : nodes_)
    if (n.forward) n.forward(*this, n);
  return nodes_[v].value;
}

}  // namespace tlla
