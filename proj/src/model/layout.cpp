#include "cursive/model/layout.hpp"

#include <cmath>
#include <stdexcept>

namespace cursive {
namespace {

constexpr double kInitStd = 0.02;

class Builder {
 public:
  explicit Builder(ParameterLayout& layout) : layout_(layout) {}

  std::size_t add(std::string name, int rows, int cols, bool decay, double std, double value = 0.0) {
    TensorSpec t{std::move(name), rows, cols, layout_.total, decay, std, value};
    layout_.total += t.size();
    layout_.tensors.push_back(std::move(t));
    return layout_.tensors.back().offset;
  }

  LinearSlot linear(const std::string& name, int in, int out, double std = kInitStd) {
    LinearSlot s;
    s.in = in;
    s.out = out;
    s.w = add(name + ".w", in, out, true, std);
    s.b = add(name + ".b", 1, out, false, 0.0);
    return s;
  }

  NormSlot norm(const std::string& name, int dim) {
    NormSlot s;
    s.dim = dim;
    s.w = add(name + ".w", 1, dim, false, 0.0, 1.0);
    s.b = add(name + ".b", 1, dim, false, 0.0, 0.0);
    return s;
  }

  MlpSlots mlp(const std::string& name, int d, int ratio, double proj_std) {
    return {linear(name + ".fc", d, ratio * d), linear(name + ".proj", ratio * d, d, proj_std)};
  }

 private:
  ParameterLayout& layout_;
};

}  // namespace

ParameterLayout::ParameterLayout(const ModelConfig& mc) {
  mc.validate();
  Builder b(*this);
  const int d = mc.d_model;
  const int dc = mc.d_context;
  const double proj_std = kInitStd / std::sqrt(2.0 * mc.n_blocks);
  wte = b.add("wte", mc.stroke_vocab, d, true, kInitStd);
  wpe = b.add("wpe", mc.max_stroke_context, d, true, kInitStd);
  ascii_wte = b.add("ascii_wte", mc.ascii_vocab, dc, true, kInitStd);
  ascii_wpe = b.add("ascii_wpe", mc.max_ascii_context, dc, true, kInitStd);
  for (int l = 0; l < mc.context_layers; ++l) {
    const std::string p = "context." + std::to_string(l);
    EncoderBlockSlots s;
    s.ln1 = b.norm(p + ".ln1", dc);
    s.attn = {b.linear(p + ".attn.qkv", dc, 3 * dc), b.linear(p + ".attn.out", dc, dc, proj_std)};
    s.ln2 = b.norm(p + ".ln2", dc);
    s.mlp = b.mlp(p + ".mlp", dc, mc.mlp_ratio, proj_std);
    encoder.push_back(s);
  }
  if (mc.context_layers > 0) ln_context = b.norm("context.ln", dc);
  for (int l = 0; l < mc.n_blocks; ++l) {
    const std::string p = "block." + std::to_string(l);
    DecoderBlockSlots s;
    s.ln1 = b.norm(p + ".ln1", d);
    s.attn = {b.linear(p + ".attn.qkv", d, 3 * d), b.linear(p + ".attn.out", d, d, proj_std)};
    s.ln2 = b.norm(p + ".ln2", d);
    s.cross = {b.linear(p + ".cross.q", d, d), b.linear(p + ".cross.kv", dc, 2 * d),
               b.linear(p + ".cross.out", d, d, proj_std)};
    s.ln3 = b.norm(p + ".ln3", d);
    s.mlp = b.mlp(p + ".mlp", d, mc.mlp_ratio, proj_std);
    blocks.push_back(s);
  }
  ln_f = b.norm("ln_f", d);
}

const TensorSpec& ParameterLayout::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("no tensor named " + name);
}

std::size_t param_count(const ModelConfig& mc) { return ParameterLayout(mc).total; }

}  // namespace cursive
