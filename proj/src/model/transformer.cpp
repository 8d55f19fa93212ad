#include "cursive/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cursive/rng.hpp"

#include <unsupported/Eigen/SpecialFunctions>

namespace cursive {
namespace {

template <typename T>
using Mat = RowMatrix<T>;
template <typename T>
using Row = RowVector<T>;
template <typename T>
using CMap = Eigen::Map<const Mat<T>>;
template <typename T>
using MMap = Eigen::Map<Mat<T>>;
template <typename T>
using CRowMap = Eigen::Map<const Row<T>>;
template <typename T>
using RowMap = Eigen::Map<Row<T>>;

template <typename T>
struct NormCache {
  Mat<T> xhat;
  std::vector<T> rstd;
};

template <typename T>
struct AttentionCache {
  Mat<T> q;
  Mat<T> k;
  Mat<T> v;
  std::vector<Mat<T>> probs;
  Mat<T> merged;
};

template <typename T>
struct MlpCache {
  Mat<T> pre;
  Mat<T> act;
};

template <typename T>
struct EncoderCache {
  NormCache<T> ln1;
  Mat<T> h1;
  AttentionCache<T> attn;
  NormCache<T> ln2;
  Mat<T> h2;
  MlpCache<T> mlp;
};

template <typename T>
struct BlockCache {
  NormCache<T> ln1;
  Mat<T> h1;
  AttentionCache<T> self;
  NormCache<T> ln2;
  Mat<T> h2;
  AttentionCache<T> cross;
  NormCache<T> ln3;
  Mat<T> h3;
  MlpCache<T> mlp;
};

template <typename T>
Mat<T> norm_forward(const Mat<T>& x, const T* p, const NormSlot& s, T eps, NormCache<T>* cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  const CRowMap<T> w(p + s.w, d);
  const CRowMap<T> b(p + s.b, d);
  Mat<T> y(n, d);
  if (cache != nullptr) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(static_cast<std::size_t>(n));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    const T rstd = T(1) / std::sqrt(var + eps);
    const Row<T> xhat = (x.row(i).array() - mean) * rstd;
    y.row(i) = xhat.cwiseProduct(w) + b;
    if (cache != nullptr) {
      cache->xhat.row(i) = xhat;
      cache->rstd[static_cast<std::size_t>(i)] = rstd;
    }
  }
  return y;
}

template <typename T>
Mat<T> norm_backward(const Mat<T>& dy, const NormCache<T>& cache, const T* p, T* g, const NormSlot& s) {
  const auto n = dy.rows();
  const auto d = dy.cols();
  const CRowMap<T> w(p + s.w, d);
  RowMap<T> dw(g + s.w, d);
  RowMap<T> db(g + s.b, d);
  dw += dy.cwiseProduct(cache.xhat).colwise().sum();
  db += dy.colwise().sum();
  Mat<T> dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Row<T> dxhat = dy.row(i).cwiseProduct(w);
    const T m1 = dxhat.mean();
    const T m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = (dxhat.array() - m1 - cache.xhat.row(i).array() * m2) * cache.rstd[static_cast<std::size_t>(i)];
  }
  return dx;
}

template <typename T>
Mat<T> linear_forward(const Mat<T>& x, const T* p, const LinearSlot& s) {
  const CMap<T> w(p + s.w, s.in, s.out);
  Mat<T> y = x * w;
  y.rowwise() += CRowMap<T>(p + s.b, s.out);
  return y;
}

template <typename T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const T* p, T* g, const LinearSlot& s) {
  MMap<T> dw(g + s.w, s.in, s.out);
  dw.noalias() += x.transpose() * dy;
  RowMap<T>(g + s.b, s.out) += dy.colwise().sum();
  return dy * CMap<T>(p + s.w, s.in, s.out).transpose();
}

/// In-place masked softmax of each row; rows with no admissible key become 0.
template <typename T>
void masked_softmax(Mat<T>& scores, bool causal, const std::vector<char>* key_valid) {
  const auto rows = scores.rows();
  const auto cols = scores.cols();
  Row<T> bias;
  bool any_valid = true;
  if (key_valid != nullptr) {
    bias.resize(cols);
    any_valid = false;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const bool ok = (*key_valid)[static_cast<std::size_t>(j)] != 0;
      bias(j) = ok ? T(0) : -std::numeric_limits<T>::infinity();
      any_valid = any_valid || ok;
    }
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::Index limit = causal ? std::min<Eigen::Index>(i + 1, cols) : cols;
    auto head = scores.row(i).head(limit);
    if (key_valid != nullptr) {
      if (!any_valid || !(bias.head(limit).array() == T(0)).any()) {
        scores.row(i).setZero();
        continue;
      }
      head += bias.head(limit);
    }
    const T max = head.maxCoeff();
    head = (head.array() - max).exp();
    head /= head.sum();
    scores.row(i).tail(cols - limit).setZero();
  }
}

template <typename T>
Mat<T> attend(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, bool causal,
              const std::vector<char>* key_valid, std::vector<Mat<T>>* probs) {
  const auto d = q.cols();
  const auto hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  Mat<T> out(q.rows(), d);
  if (probs != nullptr) probs->resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Mat<T> s = (q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose()) * scale;
    masked_softmax(s, causal, key_valid);
    out.middleCols(h * hd, hd).noalias() = s * v.middleCols(h * hd, hd);
    if (probs != nullptr) (*probs)[static_cast<std::size_t>(h)] = std::move(s);
  }
  return out;
}

template <typename T>
void attend_backward(const Mat<T>& dout, const AttentionCache<T>& c, int heads, Mat<T>& dq, Mat<T>& dk, Mat<T>& dv) {
  const auto d = c.q.cols();
  const auto hd = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  dq.setZero(c.q.rows(), d);
  dk.setZero(c.k.rows(), d);
  dv.setZero(c.v.rows(), d);
  for (int h = 0; h < heads; ++h) {
    const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
    const auto dout_h = dout.middleCols(h * hd, hd);
    dv.middleCols(h * hd, hd).noalias() += p.transpose() * dout_h;
    const Mat<T> dp = dout_h * c.v.middleCols(h * hd, hd).transpose();
    const Eigen::Matrix<T, Eigen::Dynamic, 1> r = p.cwiseProduct(dp).rowwise().sum();
    const Mat<T> ds = (p.array() * (dp.array().colwise() - r.array())).matrix() * scale;
    dq.middleCols(h * hd, hd).noalias() += ds * c.k.middleCols(h * hd, hd);
    dk.middleCols(h * hd, hd).noalias() += ds.transpose() * c.q.middleCols(h * hd, hd);
  }
}

template <typename T>
Mat<T> gelu(const Mat<T>& x) {
  return (T(0.5) * x.array() * (T(1) + (x.array() * T(M_SQRT1_2)).erf())).matrix();
}

template <typename T>
Mat<T> gelu_grad(const Mat<T>& x) {
  const auto cdf = T(0.5) * (T(1) + (x.array() * T(M_SQRT1_2)).erf());
  const auto pdf = (T(-0.5) * x.array().square()).exp() * T(0.3989422804014327);
  return (cdf + x.array() * pdf).matrix();
}

template <typename T>
Mat<T> mlp_forward(const Mat<T>& h, const T* p, const MlpSlots& s, MlpCache<T>* cache) {
  Mat<T> pre = linear_forward(h, p, s.fc);
  Mat<T> act = gelu(pre);
  Mat<T> out = linear_forward(act, p, s.proj);
  if (cache != nullptr) {
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <typename T>
Mat<T> mlp_backward(const Mat<T>& dout, const Mat<T>& h, const MlpCache<T>& c, const T* p, T* g, const MlpSlots& s) {
  const Mat<T> dact = linear_backward(dout, c.act, p, g, s.proj);
  const Mat<T> dpre = dact.cwiseProduct(gelu_grad(c.pre));
  return linear_backward(dpre, h, p, g, s.fc);
}

template <typename T>
Mat<T> self_attention_forward(const Mat<T>& h, const T* p, const SelfAttentionSlots& s, int heads, bool causal,
                              const std::vector<char>* key_valid, AttentionCache<T>* cache) {
  const auto d = h.cols();
  const Mat<T> qkv = linear_forward(h, p, s.qkv);
  AttentionCache<T> local;
  AttentionCache<T>& c = cache != nullptr ? *cache : local;
  c.q = qkv.leftCols(d);
  c.k = qkv.middleCols(d, d);
  c.v = qkv.rightCols(d);
  c.merged = attend(c.q, c.k, c.v, heads, causal, key_valid, cache != nullptr ? &c.probs : nullptr);
  return linear_forward(c.merged, p, s.out);
}

template <typename T>
Mat<T> self_attention_backward(const Mat<T>& dout, const Mat<T>& h, const AttentionCache<T>& c, const T* p, T* g,
                               const SelfAttentionSlots& s, int heads) {
  const auto d = h.cols();
  const Mat<T> dmerged = linear_backward(dout, c.merged, p, g, s.out);
  Mat<T> dq, dk, dv;
  attend_backward(dmerged, c, heads, dq, dk, dv);
  Mat<T> dqkv(h.rows(), 3 * d);
  dqkv << dq, dk, dv;
  return linear_backward(dqkv, h, p, g, s.qkv);
}

void check_range(std::span<const TokenId> ids, int vocab, const char* what) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) {
      throw std::invalid_argument(std::string(what) + " id " + std::to_string(ids[i]) + " at position " +
                                  std::to_string(i) + " is outside [0, " + std::to_string(vocab) + ")");
    }
  }
}

}  // namespace

template <typename T>
double cross_entropy(const RowMatrix<T>& logits, std::span<const TokenId> targets, TokenId pad_id) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) throw std::invalid_argument("cross_entropy: shape mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad_id) continue;
    if (targets[t] < 0 || targets[t] >= logits.cols()) throw std::invalid_argument("cross_entropy: target out of range");
    const auto row = logits.row(static_cast<Eigen::Index>(t)).template cast<double>();
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    total += lse - row(targets[t]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy: every target is padding");
  return total / static_cast<double>(count);
}

template double cross_entropy<float>(const RowMatrix<float>&, std::span<const TokenId>, TokenId);
template double cross_entropy<double>(const RowMatrix<double>&, std::span<const TokenId>, TokenId);

template <typename T>
struct Transformer<T>::Pass {
  std::span<const TokenId> stroke;
  std::span<const int> ascii;
  bool keep = false;
  std::vector<char> key_valid;
  std::vector<EncoderCache<T>> encoder;
  NormCache<T> ln_context;
  Mat<T> context;
  std::vector<BlockCache<T>> blocks;
  NormCache<T> ln_f;
  Mat<T> hf;
  Mat<T> logits;
};

template <typename T>
Transformer<T>::Transformer(const ModelConfig& mc) : mc_(mc), layout_(mc), params_(layout_.total, T(0)) {}

template <typename T>
void Transformer<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& t : layout_.tensors) {
    T* p = params_.data() + t.offset;
    for (std::size_t i = 0; i < t.size(); ++i) {
      p[i] = t.init_std > 0.0 ? static_cast<T>(t.init_std * rng.normal()) : static_cast<T>(t.init_value);
    }
  }
}

template <typename T>
void Transformer<T>::check_inputs(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const {
  if (stroke_ids.empty()) throw std::invalid_argument("forward: empty stroke input");
  if (stroke_ids.size() > static_cast<std::size_t>(mc_.max_stroke_context)) {
    throw std::invalid_argument("forward: " + std::to_string(stroke_ids.size()) + " stroke tokens exceed the context of " +
                                std::to_string(mc_.max_stroke_context));
  }
  if (ascii_ids.size() > static_cast<std::size_t>(mc_.max_ascii_context)) {
    throw std::invalid_argument("forward: " + std::to_string(ascii_ids.size()) + " ASCII tokens exceed the context of " +
                                std::to_string(mc_.max_ascii_context));
  }
  check_range(stroke_ids, mc_.stroke_vocab, "stroke");
  check_range(ascii_ids, mc_.ascii_vocab, "ascii");
}

template <typename T>
RowMatrix<T> Transformer<T>::context(std::span<const int> ascii_ids, Pass* pass) const {
  const T* p = params_.data();
  const int dc = mc_.d_context;
  const auto n = static_cast<Eigen::Index>(ascii_ids.size());
  std::vector<char> valid(ascii_ids.size());
  for (std::size_t s = 0; s < ascii_ids.size(); ++s) valid[s] = ascii_ids[s] != 0;

  Mat<T> x(n, dc);
  for (Eigen::Index s = 0; s < n; ++s) {
    x.row(s) = CRowMap<T>(p + layout_.ascii_wte + static_cast<std::size_t>(ascii_ids[s]) * dc, dc) +
               CRowMap<T>(p + layout_.ascii_wpe + static_cast<std::size_t>(s) * dc, dc);
  }
  const bool keep = pass != nullptr && pass->keep;
  if (keep) pass->encoder.resize(layout_.encoder.size());
  const T eps = static_cast<T>(mc_.ln_eps);
  for (std::size_t l = 0; l < layout_.encoder.size(); ++l) {
    const auto& s = layout_.encoder[l];
    EncoderCache<T>* c = keep ? &pass->encoder[l] : nullptr;
    Mat<T> h1 = norm_forward(x, p, s.ln1, eps, c ? &c->ln1 : nullptr);
    x += self_attention_forward(h1, p, s.attn, mc_.n_heads_cross, false, &valid, c ? &c->attn : nullptr);
    Mat<T> h2 = norm_forward(x, p, s.ln2, eps, c ? &c->ln2 : nullptr);
    x += mlp_forward(h2, p, s.mlp, c ? &c->mlp : nullptr);
    if (c != nullptr) {
      c->h1 = std::move(h1);
      c->h2 = std::move(h2);
    }
  }
  if (!layout_.encoder.empty()) x = norm_forward(x, p, layout_.ln_context, eps, keep ? &pass->ln_context : nullptr);
  if (pass != nullptr) pass->key_valid = std::move(valid);
  return x;
}

template <typename T>
void Transformer<T>::run(Pass& pass) const {
  check_inputs(pass.stroke, pass.ascii);
  const T* p = params_.data();
  const int d = mc_.d_model;
  const T eps = static_cast<T>(mc_.ln_eps);
  pass.context = context(pass.ascii, &pass);

  const auto n = static_cast<Eigen::Index>(pass.stroke.size());
  Mat<T> x(n, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    x.row(t) = CRowMap<T>(p + layout_.wte + static_cast<std::size_t>(pass.stroke[t]) * d, d) +
               CRowMap<T>(p + layout_.wpe + static_cast<std::size_t>(t) * d, d);
  }
  pass.blocks.resize(layout_.blocks.size());
  for (std::size_t l = 0; l < layout_.blocks.size(); ++l) {
    const auto& s = layout_.blocks[l];
    auto& c = pass.blocks[l];
    const bool keep = pass.keep;
    c.h1 = norm_forward(x, p, s.ln1, eps, keep ? &c.ln1 : nullptr);
    x += self_attention_forward(c.h1, p, s.attn, mc_.n_heads_self, true, nullptr, &c.self);
    c.h2 = norm_forward(x, p, s.ln2, eps, keep ? &c.ln2 : nullptr);
    c.cross.q = linear_forward(c.h2, p, s.cross.q);
    const Mat<T> kv = linear_forward(pass.context, p, s.cross.kv);
    c.cross.k = kv.leftCols(d);
    c.cross.v = kv.rightCols(d);
    c.cross.merged = attend(c.cross.q, c.cross.k, c.cross.v, mc_.n_heads_cross, false, &pass.key_valid, &c.cross.probs);
    x += linear_forward(c.cross.merged, p, s.cross.out);
    c.h3 = norm_forward(x, p, s.ln3, eps, keep ? &c.ln3 : nullptr);
    x += mlp_forward(c.h3, p, s.mlp, keep ? &c.mlp : nullptr);
  }
  pass.hf = norm_forward(x, p, layout_.ln_f, eps, pass.keep ? &pass.ln_f : nullptr);
  pass.logits = pass.hf * CMap<T>(p + layout_.wte, mc_.stroke_vocab, d).transpose();
}

template <typename T>
RowMatrix<T> Transformer<T>::forward(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const {
  Pass pass;
  pass.stroke = stroke_ids;
  pass.ascii = ascii_ids;
  run(pass);
  return std::move(pass.logits);
}

template <typename T>
LossSum Transformer<T>::loss_and_grad(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids,
                                      std::span<const TokenId> targets, TokenId ignore_id, T grad_scale, T* grad) const {
  if (targets.size() != stroke_ids.size()) throw std::invalid_argument("loss: targets and inputs differ in length");
  Pass pass;
  pass.stroke = stroke_ids;
  pass.ascii = ascii_ids;
  pass.keep = grad != nullptr;
  run(pass);
  check_range(targets, mc_.stroke_vocab, "target");

  const int d = mc_.d_model;
  const auto n = pass.logits.rows();
  LossSum loss;
  Mat<T> dlogits = Mat<T>::Zero(n, mc_.stroke_vocab);
  for (Eigen::Index t = 0; t < n; ++t) {
    const TokenId target = targets[static_cast<std::size_t>(t)];
    if (target == ignore_id) continue;
    const auto row = pass.logits.row(t);
    const T max = row.maxCoeff();
    const Row<T> e = (row.array() - max).exp();
    const T sum = e.sum();
    loss.total += static_cast<double>(max + std::log(sum) - row(target));
    ++loss.count;
    if (grad != nullptr) {
      dlogits.row(t) = e * (grad_scale / sum);
      dlogits(t, target) -= grad_scale;
    }
  }
  if (grad == nullptr || loss.count == 0) return loss;

  const T* p = params_.data();
  T* g = grad;
  MMap<T> dwte(g + layout_.wte, mc_.stroke_vocab, d);
  dwte.noalias() += dlogits.transpose() * pass.hf;
  const Mat<T> dhf = dlogits * CMap<T>(p + layout_.wte, mc_.stroke_vocab, d);
  Mat<T> dx = norm_backward(dhf, pass.ln_f, p, g, layout_.ln_f);
  Mat<T> dcontext = Mat<T>::Zero(pass.context.rows(), pass.context.cols());

  for (std::size_t l = layout_.blocks.size(); l-- > 0;) {
    const auto& s = layout_.blocks[l];
    const auto& c = pass.blocks[l];
    dx += norm_backward(mlp_backward(dx, c.h3, c.mlp, p, g, s.mlp), c.ln3, p, g, s.ln3);

    const Mat<T> dmerged = linear_backward(dx, c.cross.merged, p, g, s.cross.out);
    Mat<T> dq, dk, dv;
    attend_backward(dmerged, c.cross, mc_.n_heads_cross, dq, dk, dv);
    Mat<T> dkv(dk.rows(), 2 * d);
    dkv << dk, dv;
    dcontext += linear_backward(dkv, pass.context, p, g, s.cross.kv);
    dx += norm_backward(linear_backward(dq, c.h2, p, g, s.cross.q), c.ln2, p, g, s.ln2);

    dx += norm_backward(self_attention_backward(dx, c.h1, c.self, p, g, s.attn, mc_.n_heads_self), c.ln1, p, g, s.ln1);
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    RowMap<T>(g + layout_.wte + static_cast<std::size_t>(stroke_ids[t]) * d, d) += dx.row(t);
    RowMap<T>(g + layout_.wpe + static_cast<std::size_t>(t) * d, d) += dx.row(t);
  }

  if (!layout_.encoder.empty()) {
    dcontext = norm_backward(dcontext, pass.ln_context, p, g, layout_.ln_context);
    for (std::size_t l = layout_.encoder.size(); l-- > 0;) {
      const auto& s = layout_.encoder[l];
      const auto& c = pass.encoder[l];
      dcontext += norm_backward(mlp_backward(dcontext, c.h2, c.mlp, p, g, s.mlp), c.ln2, p, g, s.ln2);
      dcontext += norm_backward(self_attention_backward(dcontext, c.h1, c.attn, p, g, s.attn, mc_.n_heads_cross), c.ln1,
                                p, g, s.ln1);
    }
  }
  const int dc = mc_.d_context;
  for (Eigen::Index s = 0; s < dcontext.rows(); ++s) {
    RowMap<T>(g + layout_.ascii_wte + static_cast<std::size_t>(ascii_ids[s]) * dc, dc) += dcontext.row(s);
    RowMap<T>(g + layout_.ascii_wpe + static_cast<std::size_t>(s) * dc, dc) += dcontext.row(s);
  }
  return loss;
}

template <typename T>
AttentionMaps Transformer<T>::attention(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const {
  Pass pass;
  pass.stroke = stroke_ids;
  pass.ascii = ascii_ids;
  run(pass);
  AttentionMaps maps;
  maps.layers = mc_.n_blocks;
  maps.heads_self = mc_.n_heads_self;
  maps.heads_cross = mc_.n_heads_cross;
  maps.queries = static_cast<int>(stroke_ids.size());
  maps.ascii_length = static_cast<int>(ascii_ids.size());
  const auto tq = static_cast<std::size_t>(maps.queries);
  const auto ts = static_cast<std::size_t>(maps.ascii_length);
  maps.self.reserve(pass.blocks.size() * static_cast<std::size_t>(maps.heads_self) * tq * tq);
  maps.cross.reserve(pass.blocks.size() * static_cast<std::size_t>(maps.heads_cross) * tq * ts);
  for (const auto& block : pass.blocks) {
    for (const auto& prob : block.self.probs) {
      for (Eigen::Index i = 0; i < prob.rows(); ++i)
        for (Eigen::Index j = 0; j < prob.cols(); ++j) maps.self.push_back(static_cast<double>(prob(i, j)));
    }
    for (const auto& prob : block.cross.probs) {
      for (Eigen::Index i = 0; i < prob.rows(); ++i)
        for (Eigen::Index j = 0; j < prob.cols(); ++j) maps.cross.push_back(static_cast<double>(prob(i, j)));
    }
  }
  return maps;
}

template <typename T>
Transformer<T>::Decoder::Decoder(const Transformer& model, std::span<const int> ascii_ids) : model_(&model) {
  const auto& mc = model.mc_;
  if (ascii_ids.size() > static_cast<std::size_t>(mc.max_ascii_context)) {
    throw std::invalid_argument("decoder: ASCII text exceeds the context of " + std::to_string(mc.max_ascii_context));
  }
  check_range(ascii_ids, mc.ascii_vocab, "ascii");
  Pass pass;
  const Mat<T> ctx = model.context(ascii_ids, &pass);
  key_valid_ = std::move(pass.key_valid);
  const int d = mc.d_model;
  for (const auto& s : model.layout_.blocks) {
    const Mat<T> kv = linear_forward(ctx, model.params_.data(), s.cross.kv);
    cross_k_.push_back(kv.leftCols(d));
    cross_v_.push_back(kv.rightCols(d));
    self_k_.emplace_back(mc.max_stroke_context, d);
    self_v_.emplace_back(mc.max_stroke_context, d);
  }
}

template <typename T>
RowVector<T> Transformer<T>::Decoder::step(TokenId token) {
  const auto& mc = model_->mc_;
  const auto& layout = model_->layout_;
  if (pos_ >= mc.max_stroke_context) throw std::out_of_range("decoder: stroke context is full");
  if (token < 0 || token >= mc.stroke_vocab) throw std::invalid_argument("decoder: token out of range");
  const T* p = model_->params_.data();
  const int d = mc.d_model;
  const T eps = static_cast<T>(mc.ln_eps);

  Mat<T> x(1, d);
  x.row(0) = CRowMap<T>(p + layout.wte + static_cast<std::size_t>(token) * d, d) +
             CRowMap<T>(p + layout.wpe + static_cast<std::size_t>(pos_) * d, d);
  auto attend_one = [](const Mat<T>& q, const auto& k, const auto& v, int heads, const std::vector<char>* valid) {
    const auto dim = q.cols();
    const auto hd = dim / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    Mat<T> out(1, dim);
    for (int h = 0; h < heads; ++h) {
      Mat<T> s = (q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose()) * scale;
      masked_softmax(s, false, valid);
      out.middleCols(h * hd, hd).noalias() = s * v.middleCols(h * hd, hd);
    }
    return out;
  };
  for (std::size_t l = 0; l < layout.blocks.size(); ++l) {
    const auto& s = layout.blocks[l];
    const Mat<T> qkv = linear_forward(norm_forward<T>(x, p, s.ln1, eps, nullptr), p, s.attn.qkv);
    self_k_[l].row(pos_) = qkv.middleCols(d, d);
    self_v_[l].row(pos_) = qkv.rightCols(d);
    const Mat<T> q = qkv.leftCols(d);
    const Mat<T> merged = attend_one(q, self_k_[l].topRows(pos_ + 1), self_v_[l].topRows(pos_ + 1), mc.n_heads_self, nullptr);
    x += linear_forward(merged, p, s.attn.out);
    const Mat<T> cq = linear_forward(norm_forward<T>(x, p, s.ln2, eps, nullptr), p, s.cross.q);
    x += linear_forward(attend_one(cq, cross_k_[l], cross_v_[l], mc.n_heads_cross, &key_valid_), p, s.cross.out);
    x += mlp_forward<T>(norm_forward<T>(x, p, s.ln3, eps, nullptr), p, s.mlp, nullptr);
  }
  ++pos_;
  const Mat<T> hf = norm_forward<T>(x, p, layout.ln_f, eps, nullptr);
  return hf * CMap<T>(p + layout.wte, mc.stroke_vocab, d).transpose();
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace cursive
