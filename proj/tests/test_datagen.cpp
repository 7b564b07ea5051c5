#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "tlla/datagen.hpp"
#include "tlla/errors.hpp"
#include "tlla/stats.hpp"

using namespace tlla;
using namespace tlla::datagen;

TEST_CASE("gen_domain is deterministic and correctly sized") {
  DomainSpec spec;
  spec.k_classes = 4;
  spec.d_in = 6;
  spec.n_per_class = 5;
  spec.seed = 11;
  DomainDataset a = gen_domain(spec);
  DomainDataset b = gen_domain(spec);
  CHECK(a.batch.inputs == b.batch.inputs);
  CHECK(a.batch.labels == b.batch.labels);
  REQUIRE(a.size() == 20);
  // 5 samples of each class.
  std::vector<std::size_t> counts(4, 0);
  for (auto y : a.batch.labels) ++counts[y];
  for (auto c : counts) CHECK(c == 5);
  spec.seed = 12;
  DomainDataset c = gen_domain(spec);
  CHECK_FALSE(a.batch.inputs == c.batch.inputs);
}

TEST_CASE("same geometry across seeds, shifted geometry across thetas") {
  // Two draws with different seeds share class means: per-class sample
  // means should be close to each other relative to the class separation.
  DomainSpec spec;
  spec.k_classes = 3;
  spec.d_in = 8;
  spec.n_per_class = 200;
  spec.seed = 21;
  DomainDataset a = gen_domain(spec);
  spec.seed = 22;
  DomainDataset b = gen_domain(spec);
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> ma(spec.d_in, 0.0), mb(spec.d_in, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.batch.labels[i] != k) continue;
      for (std::size_t j = 0; j < spec.d_in; ++j) {
        ma[j] += a.batch.inputs.at(i, j) / double(spec.n_per_class);
        mb[j] += b.batch.inputs.at(i, j) / double(spec.n_per_class);
      }
    }
    double gap = 0;
    for (std::size_t j = 0; j < spec.d_in; ++j)
      gap += (ma[j] - mb[j]) * (ma[j] - mb[j]);
    CHECK(std::sqrt(gap) < 0.25);  // sampling noise only
  }
}

TEST_CASE("rotation by a full turn is bit-identical to no rotation") {
  DomainSpec spec;
  spec.k_classes = 3;
  spec.d_in = 5;
  spec.n_per_class = 4;
  spec.seed = 31;
  spec.rot_theta = 0.0;
  DomainDataset plain = gen_domain(spec);
  spec.rot_theta = 2.0 * std::numbers::pi;
  DomainDataset turned = gen_domain(spec);
  CHECK(plain.batch.inputs == turned.batch.inputs);
}

TEST_CASE("rotation actually moves the first two coordinates only") {
  DomainSpec spec;
  spec.k_classes = 2;
  spec.d_in = 5;
  spec.n_per_class = 3;
  spec.seed = 41;
  DomainDataset plain = gen_domain(spec);
  spec.rot_theta = 0.7;
  DomainDataset rot = gen_domain(spec);
  CHECK_FALSE(plain.batch.inputs == rot.batch.inputs);
  for (std::size_t i = 0; i < plain.size(); ++i)
    for (std::size_t j = 2; j < spec.d_in; ++j)
      CHECK(plain.batch.inputs.at(i, j) == rot.batch.inputs.at(i, j));
}

TEST_CASE("gen_domain validates its spec") {
  DomainSpec spec;
  spec.k_classes = 0;
  CHECK_THROWS_AS(gen_domain(spec), InvalidConfig);
  spec = DomainSpec{};
  spec.class_sep = -1.0;
  CHECK_THROWS_AS(gen_domain(spec), InvalidConfig);
  spec = DomainSpec{};
  spec.d_in = 1;
  CHECK_THROWS_AS(gen_domain(spec), InvalidConfig);
}

TEST_CASE("proxy distance is near zero for same-distribution draws") {
  DomainSpec spec;
  spec.k_classes = 4;
  spec.d_in = 8;
  spec.n_per_class = 100;
  spec.seed = 51;
  DomainDataset a = gen_domain(spec);
  spec.seed = 52;
  DomainDataset b = gen_domain(spec);
  CHECK(domain_distance_proxy(a, b, 53) <= 0.15);
}

TEST_CASE("proxy distance saturates for well-separated domains") {
  DomainSpec spec;
  spec.k_classes = 4;
  spec.d_in = 8;
  spec.n_per_class = 100;
  spec.seed = 61;
  DomainDataset a = gen_domain(spec);
  DomainSpec far = spec;
  far.seed = 62;
  far.scale = 4.0;  // gross covariate shift
  DomainDataset b = gen_domain(far);
  CHECK(domain_distance_proxy(a, b, 63) >= 0.9);
}

TEST_CASE("proxy distance is exactly symmetric") {
  DomainSpec spec;
  spec.k_classes = 3;
  spec.d_in = 6;
  spec.n_per_class = 40;
  spec.seed = 71;
  DomainDataset a = gen_domain(spec);
  DomainSpec other = spec;
  other.seed = 72;
  other.rot_theta = 0.8;
  DomainDataset b = gen_domain(other);
  CHECK(domain_distance_proxy(a, b, 73) == domain_distance_proxy(b, a, 73));
}

TEST_CASE("proxy distance grows monotonically with rotation angle") {
  DomainSpec spec;
  spec.k_classes = 5;
  spec.d_in = 10;
  spec.n_per_class = 120;
  spec.seed = 81;
  DomainDataset source = gen_domain(spec);
  std::vector<double> levels = {0.0, 0.3, 0.6, 0.9, 1.2};
  std::vector<double> dist;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    DomainSpec t = spec;
    t.seed = 82 + i;
    t.rot_theta = levels[i];
    dist.push_back(domain_distance_proxy(source, gen_domain(t), 90));
  }
  CHECK(stats::spearman(levels, dist) >= 0.9);
}

TEST_CASE("proxy distance validates its inputs") {
  DomainSpec spec;
  spec.k_classes = 2;
  spec.d_in = 4;
  spec.n_per_class = 10;
  spec.seed = 91;
  DomainDataset a = gen_domain(spec);
  DomainDataset empty;
  empty.batch.inputs = Tensor({0, 4});
  CHECK_THROWS_AS(domain_distance_proxy(a, empty, 92), InvalidDataset);
  DomainSpec other = spec;
  other.d_in = 6;
  DomainDataset b = gen_domain(other);
  CHECK_THROWS_AS(domain_distance_proxy(a, b, 93), InvalidDataset);
}

TEST_CASE("csv round-trips datasets bit for bit") {
  DomainSpec spec;
  spec.k_classes = 3;
  spec.d_in = 6;
  spec.n_per_class = 7;
  spec.seed = 101;
  spec.rot_theta = 0.45;
  spec.noise_sigma = 0.2;
  DomainDataset ds = gen_domain(spec);
  std::string path = "datagen_roundtrip_test.csv";
  save_csv(ds, path);
  DomainDataset back = load_csv(path);
  std::remove(path.c_str());
  CHECK(back.batch.inputs == ds.batch.inputs);
  CHECK(back.batch.labels == ds.batch.labels);
  CHECK(back.spec.k_classes == spec.k_classes);
  CHECK(back.spec.rot_theta == spec.rot_theta);
  CHECK(back.spec.noise_sigma == spec.noise_sigma);
  CHECK(back.spec.seed == spec.seed);
}

TEST_CASE("load_csv reports precise parse failures") {
  std::string path = "datagen_badfile_test.csv";
  {
    std::ofstream f(path);
    f << "# {\"k_classes\":2,\"d_in\":2,\"n_per_class\":1,\"class_sep\":3.0,"
         "\"rot_theta\":0.0,\"scale\":1.0,\"noise_sigma\":0.0,\"seed\":1}\n";
    f << "label,f0,f1\n";
    f << "0,1.5,2.5\n";
    f << "1,oops,2.5\n";
  }
  try {
    load_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  std::remove(path.c_str());

  // Missing header.
  {
    std::ofstream f(path);
    f << "0,1.5,2.5\n";
  }
  CHECK_THROWS_AS(load_csv(path), FormatError);
  std::remove(path.c_str());

  // No data rows.
  {
    std::ofstream f(path);
    f << "# {\"k_classes\":2,\"d_in\":2,\"n_per_class\":1,\"class_sep\":3.0,"
         "\"rot_theta\":0.0,\"scale\":1.0,\"noise_sigma\":0.0,\"seed\":1}\n";
    f << "label,f0,f1\n";
  }
  CHECK_THROWS_AS(load_csv(path), InvalidDataset);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_csv("no_such_dataset.csv"), IoError);
}
