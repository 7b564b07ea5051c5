#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tlla/tensor.hpp"

namespace tlla::clipette {

enum class Activation { Tanh, Identity };

struct Sizes {
  std::size_t d_in = 16;
  std::size_t d_tok = 8;
  std::size_t d_emb = 8;
  std::size_t hidden = 32;
  std::size_t k_classes = 10;
  std::size_t n_prompts = 4;
  double tau = 10.0;
  Activation img_activation = Activation::Tanh;
  Activation txt_activation = Activation::Tanh;
};

// Learnable prompt token embeddings, the only trainable quantity after
// pretraining. tokens: [L x d_tok].
struct PromptParams {
  Tensor tokens;

  std::size_t n_tokens() const { return tokens.rows(); }
  std::size_t token_dim() const { return tokens.cols(); }
  std::size_t flat_dim() const { return tokens.size(); }

  // p + coef * offset over the flattened token matrix.
  PromptParams offset_by(std::span<const double> flat, double coef = 1.0) const;

  static PromptParams random(std::size_t n_tokens, std::size_t token_dim,
                             std::uint64_t seed, double sigma = 0.02);
};

struct LabeledBatch {
  Tensor inputs;                    // [n x d_in]
  std::vector<std::size_t> labels;  // values in [0, K)

  std::size_t size() const { return labels.size(); }
};

struct Dense {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
};

struct EncoderCounters {
  std::uint64_t image_encodes = 0;
  std::uint64_t text_encodes = 0;
  void reset() { image_encodes = text_encodes = 0; }
};

// Frozen dual-encoder classifier: a two-layer image encoder, a
// mean-pool + two-layer text encoder over (prompt tokens, class token),
// per-class token embeddings and a softmax temperature. Immutable after
// pretraining; only PromptParams vary afterwards.
struct FrozenModel {
  Sizes sizes;
  Dense img1, img2;
  Dense txt1, txt2;
  Tensor class_tokens;  // [K x d_tok]
  double tau = 10.0;
  std::uint64_t seed = 0;

  mutable EncoderCounters counters;

  std::size_t k_classes() const { return sizes.k_classes; }

  // Unit-norm image embedding of x.
  Tensor encode_image(const Tensor& x) const;

  // Unit-norm text embedding for class k under prompts p.
  Tensor encode_class(const PromptParams& p, std::size_t k) const;

  // Text-encoder output before L2 normalization (exposed for linearity
  // checks on identity-activation configurations).
  Tensor encode_class_prenorm(const PromptParams& p, std::size_t k) const;

  // Probability vector over classes: softmax_t of cosine similarities.
  Tensor class_probs(const PromptParams& p, const Tensor& x) const;

  // Same, reusing a precomputed image embedding (the forward-only
  // adaptation path: one image encode per view, text encodes per probe).
  Tensor class_probs_from_embedding(const PromptParams& p,
                                    const Tensor& img_emb) const;
};

// Summed (not averaged) negative log-likelihood of the true classes.
double ce_loss(const FrozenModel& model, const PromptParams& p,
               const LabeledBatch& batch);

// d ce_loss / d p via the tape, image embeddings detached. [L x d_tok].
Tensor grad_prompt_ce(const FrozenModel& model, const PromptParams& p,
                      const LabeledBatch& batch);

double zero_shot_accuracy(const FrozenModel& model, const PromptParams& p,
                          const LabeledBatch& batch);

struct PretrainResult {
  FrozenModel model;
  PromptParams prompts;
  std::vector<double> epoch_losses;  // mean per-sample CE per epoch
};

// Trains encoders, class tokens and prompts jointly with seeded
// mini-batch SGD, then freezes everything except the prompts.
PretrainResult pretrain(const Sizes& sizes, const LabeledBatch& corpus,
                        std::uint64_t seed, std::size_t epochs, double lr,
                        std::size_t batch_size = 32);

// Checkpoint I/O. Single JSON document, arrays stored with 17
// significant digits so 64-bit values round-trip exactly.
void save_checkpoint(const FrozenModel& model, const PromptParams& prompts,
                     const std::string& path);
std::pair<FrozenModel, PromptParams> load_checkpoint(const std::string& path);

}  // namespace tlla::clipette
