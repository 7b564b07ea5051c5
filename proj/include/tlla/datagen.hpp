#pragma once

#include <cstdint>
#include <string>

#include "tlla/clipette.hpp"

namespace tlla::datagen {

using clipette::LabeledBatch;

// A shifted variant of the synthetic classification task. The class
// geometry is a pure function of (k_classes, d_in, class_sep), so
// datasets with different seeds are independent draws from the same
// distribution; rot_theta/scale/noise_sigma parametrize the shift.
struct DomainSpec {
  std::size_t k_classes = 10;
  std::size_t d_in = 16;
  std::size_t n_per_class = 20;
  double class_sep = 3.0;
  double rot_theta = 0.0;   // rotation in the first two coordinates
  double scale = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct DomainDataset {
  LabeledBatch batch;
  DomainSpec spec;

  std::size_t size() const { return batch.size(); }
};

// Class means: k seeded points on the sphere of radius class_sep with
// pairwise distance >= class_sep (rejection sampled). Each sample is
// scale * R(rot_theta) * (mu_y + N(0, 0.25^2 I)) + N(0, noise_sigma^2 I).
DomainDataset gen_domain(const DomainSpec& spec);

// Discriminator-based proxy A-distance in [0, 1]: a seeded logistic
// regression is trained full-batch to tell a from b (even indices train,
// odd held out); returns clamp(2 * (held-out accuracy - 0.5), 0, 1).
// Exactly symmetric in its arguments.
double domain_distance_proxy(const DomainDataset& a, const DomainDataset& b,
                             std::uint64_t seed);

// CSV with a '#'-prefixed JSON spec comment line, then header
// `label,f0,...`; 17-significant-digit values (round-trip exact).
void save_csv(const DomainDataset& ds, const std::string& path);
DomainDataset load_csv(const std::string& path);

}  // namespace tlla::datagen
