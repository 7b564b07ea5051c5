#include "tlla/clipette.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tlla/rng.hpp"
#include "tlla/scalar_ops.hpp"
#include "tlla/tape.hpp"

namespace tlla::clipette {

PromptParams PromptParams::offset_by(std::span<const double> flat,
                                     double coef) const {
  PromptParams out{tokens};
  for (std::size_t i = 0; i < out.tokens.size(); ++i)
    out.tokens[i] += coef * flat[i];
  return out;
}

PromptParams PromptParams::random(std::size_t n_tokens, std::size_t token_dim,
                                  std::uint64_t seed, double sigma) {
  Rng rng(seed);
  Tensor t({n_tokens, token_dim});
  for (auto& v : t.data()) v = sigma * rng.normal();
  return PromptParams{std::move(t)};
}

namespace {

void dense_apply(const Dense& d, std::span<const double> x,
                 std::vector<double>& out, Activation act) {
  std::size_t m = d.w.rows(), k = d.w.cols();
  out.resize(m);
  const double* wp = d.w.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = d.b[i];
    const double* wr = wp + i * k;
    for (std::size_t j = 0; j < k; ++j) s += wr[j] * x[j];
    out[i] = act == Activation::Tanh ? std::tanh(s) : s;
  }
}

void dense_apply_linear_out(const Dense& d, std::span<const double> x,
                            std::vector<double>& out) {
  std::size_t m = d.w.rows(), k = d.w.cols();
  out.resize(m);
  const double* wp = d.w.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double s = d.b[i];
    const double* wr = wp + i * k;
    for (std::size_t j = 0; j < k; ++j) s += wr[j] * x[j];
    out[i] = s;
  }
}

Tensor normalized_or_throw(std::vector<double>&& v) {
  double n = norm2(v);
  if (n < 1e-12)
    throw DegenerateEmbedding("encoder output has near-zero norm");
  std::size_t dim = v.size();
  Tensor t({dim}, std::move(v));
  t *= 1.0 / n;
  return t;
}

}  // namespace

Tensor FrozenModel::encode_image(const Tensor& x) const {
  if (!x.all_finite()) throw InvalidValue("encode_image: non-finite input");
  ++counters.image_encodes;
  thread_local std::vector<double> h, e;
  dense_apply(img1, x.span(), h, sizes.img_activation);
  dense_apply_linear_out(img2, h, e);
  return normalized_or_throw(std::move(e));
}

Tensor FrozenModel::encode_class_prenorm(const PromptParams& p,
                                         std::size_t k) const {
  std::size_t L = p.n_tokens(), d = p.token_dim();
  thread_local std::vector<double> pooled, h, e;
  pooled.assign(d, 0.0);
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t c = 0; c < d; ++c) pooled[c] += p.tokens.at(j, c);
  for (std::size_t c = 0; c < d; ++c)
    pooled[c] = (pooled[c] + class_tokens.at(k, c)) / double(L + 1);
  dense_apply(txt1, pooled, h, sizes.txt_activation);
  dense_apply_linear_out(txt2, h, e);
  return Tensor({e.size()}, std::vector<double>(e.begin(), e.end()));
}

Tensor FrozenModel::encode_class(const PromptParams& p, std::size_t k) const {
  ++counters.text_encodes;
  Tensor pre = encode_class_prenorm(p, k);
  std::vector<double> v = std::move(pre.data());
  return normalized_or_throw(std::move(v));
}

Tensor FrozenModel::class_probs_from_embedding(const PromptParams& p,
                                               const Tensor& img_emb) const {
  std::size_t k_cls = k_classes();
  Tensor sims({k_cls});
  for (std::size_t k = 0; k < k_cls; ++k) {
    Tensor et = encode_class(p, k);
    sims[k] = cosine_sim(et, img_emb);
  }
  return softmax_t(sims, tau);
}

Tensor FrozenModel::class_probs(const PromptParams& p, const Tensor& x) const {
  return class_probs_from_embedding(p, encode_image(x));
}

double ce_loss(const FrozenModel& model, const PromptParams& p,
               const LabeledBatch& batch) {
  if (batch.size() == 0) throw InvalidDataset("ce_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor x({model.sizes.d_in},
             std::vector<double>(batch.inputs.row_span(i).begin(),
                                 batch.inputs.row_span(i).end()));
    Tensor probs = model.class_probs(p, x);
    total -= std::log(probs[batch.labels[i]]);
  }
  if (!std::isfinite(total))
    throw TrainingDiverged("ce_loss: non-finite loss");
  return total;
}

double zero_shot_accuracy(const FrozenModel& model, const PromptParams& p,
                          const LabeledBatch& batch) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor x({model.sizes.d_in},
             std::vector<double>(batch.inputs.row_span(i).begin(),
                                 batch.inputs.row_span(i).end()));
    Tensor probs = model.class_probs(p, x);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < probs.size(); ++k)
      if (probs[k] > probs[arg]) arg = k;
    if (arg == batch.labels[i]) ++hits;
  }
  return double(hits) / double(batch.size());
}

namespace {

struct CeTape {
  Tape tape;
  Tape::Var loss = -1;
  Tape::Var prompt = -1;
  // Populated only when all parameters are tracked.
  Tape::Var iw1 = -1, ib1 = -1, iw2 = -1, ib2 = -1;
  Tape::Var tw1 = -1, tb1 = -1, tw2 = -1, tb2 = -1;
  Tape::Var ctok = -1;
};

Tape::Var maybe_tanh(Tape& t, Tape::Var v, Activation act) {
  return act == Activation::Tanh ? t.tanh_(v) : v;
}

// Records the full cross-entropy pipeline. With all_params=false the
// image embeddings enter as detached constants so the tape covers the
// text path only (the prompt-gradient route).
CeTape build_ce_tape(const FrozenModel& model, const PromptParams& p,
                     const LabeledBatch& batch, bool all_params) {
  CeTape g;
  Tape& t = g.tape;
  std::size_t L = p.n_tokens();

  g.prompt = t.leaf(p.tokens, true);
  g.tw1 = t.leaf(model.txt1.w, all_params);
  g.tb1 = t.leaf(model.txt1.b, all_params);
  g.tw2 = t.leaf(model.txt2.w, all_params);
  g.tb2 = t.leaf(model.txt2.b, all_params);
  g.ctok = t.leaf(model.class_tokens, all_params);

  // Class embeddings, shared across the batch.
  std::vector<Tape::Var> class_emb(model.k_classes());
  Tape::Var prompt_sum = t.sum_rows(g.prompt);
  for (std::size_t k = 0; k < model.k_classes(); ++k) {
    Tape::Var pooled = t.scale(t.add(prompt_sum, t.row(g.ctok, k)),
                               1.0 / double(L + 1));
    Tape::Var h = maybe_tanh(t, t.affine(g.tw1, g.tb1, pooled),
                             model.sizes.txt_activation);
    Tape::Var e = t.affine(g.tw2, g.tb2, h);
    class_emb[k] = t.normalize(e);
  }

  if (all_params) {
    g.iw1 = t.leaf(model.img1.w, true);
    g.ib1 = t.leaf(model.img1.b, true);
    g.iw2 = t.leaf(model.img2.w, true);
    g.ib2 = t.leaf(model.img2.b, true);
  }

  std::vector<Tape::Var> nlls;
  nlls.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = batch.inputs.row_span(i);
    Tape::Var img;
    if (all_params) {
      Tape::Var x = t.leaf(
          Tensor({row.size()}, std::vector<double>(row.begin(), row.end())));
      Tape::Var h = maybe_tanh(t, t.affine(g.iw1, g.ib1, x),
                               model.sizes.img_activation);
      img = t.normalize(t.affine(g.iw2, g.ib2, h));
    } else {
      img = t.leaf(model.encode_image(
          Tensor({row.size()}, std::vector<double>(row.begin(), row.end()))));
    }
    std::vector<Tape::Var> sims(model.k_classes());
    for (std::size_t k = 0; k < model.k_classes(); ++k)
      sims[k] = t.cosine(class_emb[k], img);
    Tape::Var probs = t.softmax_t(t.concat_scalars(sims), model.tau);
    nlls.push_back(t.log_(t.pick(probs, batch.labels[i])));
  }
  g.loss = t.scale(t.add_n(nlls), -1.0);
  return g;
}

}  // namespace

Tensor grad_prompt_ce(const FrozenModel& model, const PromptParams& p,
                      const LabeledBatch& batch) {
  if (batch.size() == 0) throw InvalidDataset("grad_prompt_ce: empty batch");
  CeTape g = build_ce_tape(model, p, batch, /*all_params=*/false);
  g.tape.backward(g.loss);
  return g.tape.grad(g.prompt);
}

PretrainResult pretrain(const Sizes& sizes, const LabeledBatch& corpus,
                        std::uint64_t seed, std::size_t epochs, double lr,
                        std::size_t batch_size) {
  if (corpus.size() == 0) throw InvalidDataset("pretrain: empty corpus");
  std::vector<bool> seen(sizes.k_classes, false);
  for (std::size_t y : corpus.labels) {
    if (y >= sizes.k_classes) throw InvalidDataset("pretrain: label out of range");
    seen[y] = true;
  }
  for (bool s : seen)
    if (!s) throw InvalidDataset("pretrain: corpus does not cover all classes");

  Rng rng(split_seed(seed, 0xC11Aull));
  auto init_dense = [&](std::size_t out, std::size_t in) {
    Dense d{Tensor({out, in}), Tensor({out})};
    double s = 1.0 / std::sqrt(double(in));
    for (auto& v : d.w.data()) v = s * rng.normal();
    return d;
  };

  FrozenModel model;
  model.sizes = sizes;
  model.tau = sizes.tau;
  model.seed = seed;
  model.img1 = init_dense(sizes.hidden, sizes.d_in);
  model.img2 = init_dense(sizes.d_emb, sizes.hidden);
  model.txt1 = init_dense(sizes.hidden, sizes.d_tok);
  model.txt2 = init_dense(sizes.d_emb, sizes.hidden);
  model.class_tokens = Tensor({sizes.k_classes, sizes.d_tok});
  for (auto& v : model.class_tokens.data()) v = rng.normal();
  PromptParams prompts =
      PromptParams::random(sizes.n_prompts, sizes.d_tok,
                           split_seed(seed, 0x9047ull), 0.02);

  PretrainResult result;
  Rng order_rng(split_seed(seed, 0x0E0Cull));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::size_t n = std::min(batch_size, order.size() - start);
      LabeledBatch batch;
      batch.inputs = Tensor({n, sizes.d_in});
      batch.labels.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto src = corpus.inputs.row_span(order[start + i]);
        for (std::size_t j = 0; j < sizes.d_in; ++j)
          batch.inputs.at(i, j) = src[j];
        batch.labels[i] = corpus.labels[order[start + i]];
      }
      CeTape g = build_ce_tape(model, prompts, batch, /*all_params=*/true);
      double loss = g.tape.scalar_value(g.loss);
      if (!std::isfinite(loss))
        throw TrainingDiverged("pretrain: non-finite loss");
      epoch_loss += loss;
      g.tape.backward(g.loss);
      double step = lr / double(n);
      model.img1.w.axpy(-step, g.tape.grad(g.iw1));
      model.img1.b.axpy(-step, g.tape.grad(g.ib1));
      model.img2.w.axpy(-step, g.tape.grad(g.iw2));
      model.img2.b.axpy(-step, g.tape.grad(g.ib2));
      model.txt1.w.axpy(-step, g.tape.grad(g.tw1));
      model.txt1.b.axpy(-step, g.tape.grad(g.tb1));
      model.txt2.w.axpy(-step, g.tape.grad(g.tw2));
      model.txt2.b.axpy(-step, g.tape.grad(g.tb2));
      model.class_tokens.axpy(-step, g.tape.grad(g.ctok));
      prompts.tokens.axpy(-step, g.tape.grad(g.prompt));
    }
    result.epoch_losses.push_back(epoch_loss / double(corpus.size()));
  }

  model.counters.reset();
  result.model = std::move(model);
  result.prompts = std::move(prompts);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

void write_array(std::ostream& os, const char* name, const Tensor& t,
                 bool last = false) {
  os << "\"" << name << "\":{\"shape\":[";
  for (std::size_t i = 0; i < t.rank(); ++i)
    os << (i ? "," : "") << t.shape()[i];
  os << "],\"data\":[";
  char buf[40];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", t[i]);
    os << (i ? "," : "") << buf;
  }
  os << "]}" << (last ? "" : ",");
}

Tensor read_array(const nlohmann::json& j) {
  std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor(std::move(shape), std::move(data));
}

const char* act_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "identity";
}

Activation act_from(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw FormatError("checkpoint: unknown activation '" + s + "'");
}

}  // namespace

void save_checkpoint(const FrozenModel& model, const PromptParams& prompts,
                     const std::string& path) {
  std::ostringstream os;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", model.tau);
  os << "{\"schema_version\":1,\"seed\":" << model.seed << ",\"sizes\":{"
     << "\"d_in\":" << model.sizes.d_in << ",\"d_tok\":" << model.sizes.d_tok
     << ",\"d_emb\":" << model.sizes.d_emb
     << ",\"hidden\":" << model.sizes.hidden
     << ",\"k_classes\":" << model.sizes.k_classes
     << ",\"n_prompts\":" << model.sizes.n_prompts << ",\"img_activation\":\""
     << act_name(model.sizes.img_activation) << "\",\"txt_activation\":\""
     << act_name(model.sizes.txt_activation) << "\"},\"tau\":" << buf
     << ",\"arrays\":{";
  write_array(os, "img1_w", model.img1.w);
  write_array(os, "img1_b", model.img1.b);
  write_array(os, "img2_w", model.img2.w);
  write_array(os, "img2_b", model.img2.b);
  write_array(os, "txt1_w", model.txt1.w);
  write_array(os, "txt1_b", model.txt1.b);
  write_array(os, "txt2_w", model.txt2.w);
  write_array(os, "txt2_b", model.txt2.b);
  write_array(os, "class_tokens", model.class_tokens);
  write_array(os, "prompt_tokens", prompts.tokens, /*last=*/true);
  os << "}}";

  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f << os.str();
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

std::pair<FrozenModel, PromptParams> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("checkpoint parse failure: ") + e.what());
  }
  try {
    FrozenModel m;
    const auto& s = j.at("sizes");
    m.sizes.d_in = s.at("d_in");
    m.sizes.d_tok = s.at("d_tok");
    m.sizes.d_emb = s.at("d_emb");
    m.sizes.hidden = s.at("hidden");
    m.sizes.k_classes = s.at("k_classes");
    m.sizes.n_prompts = s.at("n_prompts");
    m.sizes.img_activation = act_from(s.at("img_activation"));
    m.sizes.txt_activation = act_from(s.at("txt_activation"));
    m.tau = j.at("tau");
    m.sizes.tau = m.tau;
    m.seed = j.at("seed");
    const auto& a = j.at("arrays");
    m.img1 = {read_array(a.at("img1_w")), read_array(a.at("img1_b"))};
    m.img2 = {read_array(a.at("img2_w")), read_array(a.at("img2_b"))};
    m.txt1 = {read_array(a.at("txt1_w")), read_array(a.at("txt1_b"))};
    m.txt2 = {read_array(a.at("txt2_w")), read_array(a.at("txt2_b"))};
    m.class_tokens = read_array(a.at("class_tokens"));
    PromptParams p{read_array(a.at("prompt_tokens"))};
    return {std::move(m), std::move(p)};
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint missing field: ") + e.what());
  }
}

}  // namespace tlla::clipette
