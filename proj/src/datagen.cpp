#include "tlla/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "tlla/rng.hpp"

namespace tlla::datagen {

namespace {

// The class geometry is shared by every dataset with the same
// (k_classes, d_in, class_sep), independent of the draw seed.
std::uint64_t geometry_seed(const DomainSpec& spec) {
  std::uint64_t bits;
  static_assert(sizeof bits == sizeof spec.class_sep);
  std::memcpy(&bits, &spec.class_sep, sizeof bits);
  return mix64(mix64(0x6E0Dull ^ spec.k_classes) ^
               mix64(spec.d_in) ^ mix64(bits));
}

Tensor class_means(const DomainSpec& spec) {
  Rng rng(geometry_seed(spec));
  Tensor means({spec.k_classes, spec.d_in});
  std::size_t placed = 0;
  std::size_t rounds = 0;
  std::vector<double> cand(spec.d_in);
  while (placed < spec.k_classes) {
    if (++rounds > 1000 + spec.k_classes)
      throw InfeasibleSpec("gen_domain: cannot place class means");
    for (auto& v : cand) v = rng.normal();
    double n = norm2(cand);
    if (n < 1e-12) continue;
    for (auto& v : cand) v *= spec.class_sep / n;
    bool ok = true;
    for (std::size_t k = 0; k < placed && ok; ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < spec.d_in; ++j) {
        double d = cand[j] - means.at(k, j);
        d2 += d * d;
      }
      if (d2 < spec.class_sep * spec.class_sep) ok = false;
    }
    if (!ok) continue;
    for (std::size_t j = 0; j < spec.d_in; ++j) means.at(placed, j) = cand[j];
    ++placed;
  }
  return means;
}

}  // namespace

DomainDataset gen_domain(const DomainSpec& spec) {
  if (spec.k_classes < 1 || spec.d_in < 2 || spec.n_per_class < 1 ||
      !(spec.class_sep > 0.0) || !(spec.scale > 0.0) ||
      spec.noise_sigma < 0.0)
    throw InvalidConfig("gen_domain: invalid spec");

  Tensor means = class_means(spec);
  double theta = std::remainder(spec.rot_theta, 2.0 * std::numbers::pi);
  double c = std::cos(theta), s = std::sin(theta);

  std::size_t n = spec.k_classes * spec.n_per_class;
  DomainDataset ds;
  ds.spec = spec;
  ds.batch.inputs = Tensor({n, spec.d_in});
  ds.batch.labels.resize(n);

  Rng rng(split_seed(spec.seed, 0xDA7Aull));
  std::vector<double> x(spec.d_in);
  std::size_t row = 0;
  for (std::size_t k = 0; k < spec.k_classes; ++k) {
    for (std::size_t i = 0; i < spec.n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < spec.d_in; ++j)
        x[j] = means.at(k, j) + 0.25 * rng.normal();
      if (theta != 0.0) {
        double x0 = x[0], x1 = x[1];
        x[0] = c * x0 - s * x1;
        x[1] = s * x0 + c * x1;
      }
      for (std::size_t j = 0; j < spec.d_in; ++j) {
        double v = spec.scale * x[j];
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
        ds.batch.inputs.at(row, j) = v;
      }
      ds.batch.labels[row] = k;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Proxy A-distance

namespace {

struct Split {
  std::vector<std::size_t> train, test;
};

Split even_odd_split(std::size_t n) {
  Split s;
  for (std::size_t i = 0; i < n; ++i)
    (i % 2 == 0 ? s.train : s.test).push_back(i);
  return s;
}

}  // namespace

double domain_distance_proxy(const DomainDataset& a, const DomainDataset& b,
                             std::uint64_t seed) {
  (void)seed;  // the discriminator is deterministic (zero init, full batch)
  if (a.size() == 0 || b.size() == 0)
    throw InvalidDataset("domain_distance_proxy: empty dataset");
  if (a.spec.d_in != b.spec.d_in)
    throw InvalidDataset("domain_distance_proxy: dimension mismatch");
  std::size_t d = a.spec.d_in;

  Split sa = even_odd_split(a.size());
  Split sb = even_odd_split(b.size());
  if (sa.train.empty() || sa.test.empty() || sb.train.empty() ||
      sb.test.empty())
    throw InvalidDataset("domain_distance_proxy: degenerate split");

  // Standardization statistics over the combined training half. Partial
  // sums per dataset are combined with a single commutative addition so
  // the result is exactly invariant under swapping a and b.
  std::vector<double> mean(d, 0.0), var(d, 1.0);
  {
    std::vector<double> suma(d, 0.0), sumb(d, 0.0);
    for (std::size_t i : sa.train)
      for (std::size_t j = 0; j < d; ++j) suma[j] += a.batch.inputs.at(i, j);
    for (std::size_t i : sb.train)
      for (std::size_t j = 0; j < d; ++j) sumb[j] += b.batch.inputs.at(i, j);
    double n = double(sa.train.size() + sb.train.size());
    for (std::size_t j = 0; j < d; ++j) mean[j] = (suma[j] + sumb[j]) / n;
    std::vector<double> sqa(d, 0.0), sqb(d, 0.0);
    for (std::size_t i : sa.train)
      for (std::size_t j = 0; j < d; ++j) {
        double c = a.batch.inputs.at(i, j) - mean[j];
        sqa[j] += c * c;
      }
    for (std::size_t i : sb.train)
      for (std::size_t j = 0; j < d; ++j) {
        double c = b.batch.inputs.at(i, j) - mean[j];
        sqb[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) {
      double v = (sqa[j] + sqb[j]) / n;
      var[j] = v > 1e-12 ? v : 1.0;
    }
  }
  auto feat = [&](const DomainDataset& ds, std::size_t i, std::size_t j) {
    return (ds.batch.inputs.at(i, j) - mean[j]) / std::sqrt(var[j]);
  };

  // Logistic regression, labels -1 (first argument) / +1 (second),
  // zero init, full-batch gradient descent. Swapping the arguments
  // mirrors the whole trajectory exactly (w -> -w), so the proxy is
  // symmetric by construction.
  std::vector<double> w(d, 0.0);
  double bias = 0.0;
  const std::size_t iters = 300;
  const double lr = 2.0;
  double inv_n = 1.0 / double(sa.train.size() + sb.train.size());
  std::vector<double> ga(d), gb(d);
  for (std::size_t it = 0; it < iters; ++it) {
    std::fill(ga.begin(), ga.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    double gba = 0.0, gbb = 0.0;
    auto accumulate = [&](const DomainDataset& ds, const Split& sp, double y,
                          std::vector<double>& g, double& gbias) {
      for (std::size_t i : sp.train) {
        double z = bias;
        for (std::size_t j = 0; j < d; ++j) z += w[j] * feat(ds, i, j);
        double sig = 1.0 / (1.0 + std::exp(y * z));  // sigma(-y z)
        double coef = -y * sig;
        for (std::size_t j = 0; j < d; ++j) g[j] += coef * feat(ds, i, j);
        gbias += coef;
      }
    };
    accumulate(a, sa, -1.0, ga, gba);
    accumulate(b, sb, +1.0, gb, gbb);
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * inv_n * (ga[j] + gb[j]);
    bias -= lr * inv_n * (gba + gbb);
  }

  std::size_t hits_a = 0, hits_b = 0;
  for (std::size_t i : sa.test) {
    double z = bias;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * feat(a, i, j);
    if (z < 0.0) ++hits_a;
  }
  for (std::size_t i : sb.test) {
    double z = bias;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * feat(b, i, j);
    if (z > 0.0) ++hits_b;
  }
  double acc = double(hits_a + hits_b) / double(sa.test.size() + sb.test.size());
  return std::clamp(2.0 * (acc - 0.5), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// CSV persistence

void save_csv(const DomainDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write dataset CSV: " + path);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", ds.spec.class_sep);
  std::string sep = buf;
  std::snprintf(buf, sizeof buf, "%.17g", ds.spec.rot_theta);
  std::string rot = buf;
  std::snprintf(buf, sizeof buf, "%.17g", ds.spec.scale);
  std::string sc = buf;
  std::snprintf(buf, sizeof buf, "%.17g", ds.spec.noise_sigma);
  std::string ns = buf;
  f << "# {\"k_classes\":" << ds.spec.k_classes
    << ",\"d_in\":" << ds.spec.d_in
    << ",\"n_per_class\":" << ds.spec.n_per_class << ",\"class_sep\":" << sep
    << ",\"rot_theta\":" << rot << ",\"scale\":" << sc
    << ",\"noise_sigma\":" << ns << ",\"seed\":" << ds.spec.seed << "}\n";
  f << "label";
  for (std::size_t j = 0; j < ds.spec.d_in; ++j) f << ",f" << j;
  f << "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    f << ds.batch.labels[i];
    for (std::size_t j = 0; j < ds.spec.d_in; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.batch.inputs.at(i, j));
      f << ',' << buf;
    }
    f << "\n";
  }
  if (!f) throw IoError("write failure: " + path);
}

DomainDataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read dataset CSV: " + path);

  DomainDataset ds;
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(f, line)) throw FormatError("empty file: " + path);
  ++lineno;
  if (!line.empty() && line[0] == '#') {
    try {
      nlohmann::json j = nlohmann::json::parse(line.substr(1));
      ds.spec.k_classes = j.value("k_classes", ds.spec.k_classes);
      ds.spec.d_in = j.value("d_in", ds.spec.d_in);
      ds.spec.n_per_class = j.value("n_per_class", ds.spec.n_per_class);
      ds.spec.class_sep = j.value("class_sep", ds.spec.class_sep);
      ds.spec.rot_theta = j.value("rot_theta", ds.spec.rot_theta);
      ds.spec.scale = j.value("scale", ds.spec.scale);
      ds.spec.noise_sigma = j.value("noise_sigma", ds.spec.noise_sigma);
      ds.spec.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("bad spec comment on line 1: " + std::string(e.what()));
    }
    if (!std::getline(f, line)) throw FormatError("missing header: " + path);
    ++lineno;
  }

  if (line.rfind("label", 0) != 0)
    throw FormatError("missing 'label,f0,...' header: " + path);
  std::size_t d_in = 0;
  for (char ch : line)
    if (ch == ',') ++d_in;
  if (d_in == 0) throw FormatError("header declares no features: " + path);

  std::vector<double> values;
  std::vector<std::size_t> labels;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::pair<std::size_t, std::size_t>> fields;  // [begin, end)
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      std::size_t end = comma == std::string::npos ? line.size() : comma;
      fields.emplace_back(pos, end);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != d_in + 1)
      throw ParseError("wrong field count on line " + std::to_string(lineno));
    auto parse_field = [&](std::size_t fi) {
      double out;
      auto [b, e] = fields[fi];
      auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, out);
      if (ec != std::errc() || ptr != line.data() + e)
        throw ParseError("malformed value on line " + std::to_string(lineno));
      return out;
    };
    double label = parse_field(0);
    if (label < 0.0 || label != std::floor(label))
      throw ParseError("bad label on line " + std::to_string(lineno));
    for (std::size_t j = 0; j < d_in; ++j) values.push_back(parse_field(j + 1));
    labels.push_back(static_cast<std::size_t>(label));
  }
  if (labels.empty()) throw InvalidDataset("CSV has no data rows: " + path);

  ds.spec.d_in = d_in;
  ds.batch.inputs = Tensor({labels.size(), d_in}, std::move(values));
  ds.batch.labels = std::move(labels);
  return ds;
}

}  // namespace tlla::datagen
