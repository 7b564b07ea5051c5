#pragma once

#include "tlla/tensor.hpp"

namespace tlla {

// Temperature softmax: softmax(tau * logits), max-subtracted for
// stability. tau multiplies the logits (a similarity scale), it does
// not divide them.
Tensor softmax_t(const Tensor& logits, double tau);

// Shannon entropy -sum p log p with the 0*log(0)=0 convention. Input
// must be a probability vector (entries in [0,1], sum within 1e-9 of 1).
double entropy(const Tensor& probs);

// a.b / (|a||b|), clamped to [-1, 1]. Inputs must have norm > 1e-12.
double cosine_sim(const Tensor& a, const Tensor& b);

}  // namespace tlla
