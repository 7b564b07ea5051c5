#include "tlla/scalar_ops.hpp"

#include <algorithm>
#include <cmath>

namespace tlla {

Tensor softmax_t(const Tensor& logits, double tau) {
  if (!(tau > 0.0)) throw InvalidConfig("softmax_t: tau must be positive");
  if (logits.size() < 1) throw InvalidValue("softmax_t: empty logits");
  if (!logits.all_finite()) throw InvalidValue("softmax_t: non-finite logit");

  Tensor out(logits.shape());
  double m = tau * logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i)
    m = std::max(m, tau * logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(tau * logits[i] - m);
    z += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= z;
  return out;
}

double entropy(const Tensor& probs) {
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (!(p >= 0.0) || p > 1.0)
      throw InvalidValue("entropy: probability outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidValue("entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = probs[i];
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double cosine_sim(const Tensor& a, const Tensor& b) {
  double na = a.norm2();
  double nb = b.norm2();
  if (na < 1e-12 || nb < 1e-12)
    throw DegenerateVector("cosine_sim: zero-norm input");
  double c = dot(a.span(), b.span()) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace tlla
