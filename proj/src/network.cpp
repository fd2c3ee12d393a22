#include "textdet/network.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "textdet/errors.hpp"
#include "textdet/kernels.hpp"
#include "textdet/loss.hpp"
#include "textdet/weights_io.hpp"

namespace textdet {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw ShapeMismatch("gradient accumulate shape");
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("tensor add shape");
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

void xavier_init(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < w.numel(); ++i) {
    w[i] = static_cast<float>(rng.uniform(-limit, limit));
  }
}

struct ConvLayer {
  ParamBlock w;  // [N,C,kh,kw]
  ParamBlock b;  // [N]
  int stride = 1, pad = 0, dilation = 1;
  Tensor x_cache;

  void init(const std::string& name, int in_ch, int out_ch, int k, int pad_, int dilation_,
            Rng* rng) {
    w = ParamBlock(name + ".w", {out_ch, in_ch, k, k});
    b = ParamBlock(name + ".b", {out_ch});
    pad = pad_;
    dilation = dilation_;
    if (rng) xavier_init(w.value, in_ch * k * k, out_ch * k * k, *rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    if (training) x_cache = x;
    return conv2d_forward(x, w.value, b.value, stride, pad, dilation);
  }

  Tensor backward(const Tensor& g) {
    Conv2dGrads grads = conv2d_backward(x_cache, w.value, g, stride, pad, dilation);
    accumulate(w.grad, grads.kernel);
    accumulate(b.grad, grads.bias);
    return std::move(grads.input);
  }
};

struct DeconvLayer {
  ParamBlock w;  // [C_in, C_out, k, k]
  ParamBlock b;  // [C_out]
  int stride = 1;
  Tensor x_cache;

  void init(const std::string& name, int in_ch, int out_ch, int k, Rng& rng) {
    w = ParamBlock(name + ".w", {in_ch, out_ch, k, k});
    b = ParamBlock(name + ".b", {out_ch});
    stride = k;
    xavier_init(w.value, in_ch * k * k, out_ch * k * k, rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    if (training) x_cache = x;
    return deconv2d_forward(x, w.value, b.value, stride);
  }

  Tensor backward(const Tensor& g) {
    Deconv2dGrads grads = deconv2d_backward(x_cache, w.value, g, stride);
    accumulate(w.grad, grads.kernel);
    accumulate(b.grad, grads.bias);
    return std::move(grads.input);
  }
};

struct BnLayer {
  ParamBlock gamma, beta;
  Tensor running_mean, running_var;
  float eps = 1e-5f, momentum = 0.99f;
  BnCache cache;

  void init(const std::string& name, int channels, float eps_, float momentum_) {
    gamma = ParamBlock(name + ".gamma", {channels});
    beta = ParamBlock(name + ".beta", {channels});
    gamma.value.fill(1.0f);
    running_mean = Tensor({channels});
    running_var = Tensor::full({channels}, 1.0f);
    eps = eps_;
    momentum = momentum_;
  }

  Tensor forward(const Tensor& x, bool training) {
    return batchnorm_forward(x, gamma.value, beta.value, running_mean, running_var, training, eps,
                             momentum, training ? &cache : nullptr);
  }

  Tensor backward(const Tensor& g) {
    BnGrads grads = batchnorm_backward(g, gamma.value, cache);
    accumulate(gamma.grad, grads.gamma);
    accumulate(beta.grad, grads.beta);
    return std::move(grads.input);
  }
};

// ConvUnit(w,h,n): convolution + batch normalization + ReLU.
struct ConvUnit {
  ConvLayer conv;
  BnLayer bn;
  Tensor relu_y;

  void init(const std::string& name, int in_ch, int out_ch, int k, int dilation, float bn_eps,
            float bn_momentum, Rng& rng) {
    conv.init(name + ".conv", in_ch, out_ch, k, dilation * (k - 1) / 2, dilation, &rng);
    bn.init(name + ".bn", out_ch, bn_eps, bn_momentum);
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor y = relu_forward(bn.forward(conv.forward(x, training), training));
    if (training) relu_y = y;
    return y;
  }

  Tensor backward(const Tensor& g) {
    return conv.backward(bn.backward(relu_backward(g, relu_y)));
  }
};

struct PoolLayer {
  PoolCache cache;
  Tensor forward(const Tensor& x) { return maxpool2d_forward(x, &cache); }
  Tensor backward(const Tensor& g) { return maxpool2d_backward(g, cache); }
};

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  int B = parts[0]->dim(0), H = parts[0]->dim(2), W = parts[0]->dim(3);
  int C = 0;
  for (const Tensor* t : parts) C += t->dim(1);
  Tensor out({B, C, H, W});
  int64_t hw = static_cast<int64_t>(H) * W;
  for (int b = 0; b < B; ++b) {
    int64_t co = 0;
    for (const Tensor* t : parts) {
      int tc = t->dim(1);
      const float* src = t->data() + static_cast<int64_t>(b) * tc * hw;
      float* dst = out.data() + (static_cast<int64_t>(b) * C + co) * hw;
      std::copy(src, src + static_cast<int64_t>(tc) * hw, dst);
      co += tc;
    }
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  int B = x.dim(0), H = x.dim(2), W = x.dim(3);
  int64_t hw = static_cast<int64_t>(H) * W;
  std::vector<Tensor> out;
  int co = 0;
  for (int sc : sizes) {
    Tensor t({B, sc, H, W});
    for (int b = 0; b < B; ++b) {
      const float* src = x.data() + (static_cast<int64_t>(b) * x.dim(1) + co) * hw;
      std::copy(src, src + static_cast<int64_t>(sc) * hw,
                t.data() + static_cast<int64_t>(b) * sc * hw);
    }
    out.push_back(std::move(t));
    co += sc;
  }
  return out;
}

}  // namespace

struct NetworkModel::Impl {
  NetworkConfig cfg;
  ConvUnit s1a, s1b, s2a, s2b, s3a, s3b, s4a, s4b, deep1, deep2, fuse, cls_a, loc_a;
  PoolLayer p1, p2, p3, p4;
  ConvLayer up_a;  // stride-4 stream is already at fusion resolution: 1x1 projection
  DeconvLayer up_b, up_c, up_d;
  ConvLayer cls_b, loc_b;
  Tensor cls_sig_y, loc_sig_y;

  void build_layers(Rng& rng) {
    const auto& c = cfg.stage_channels;
    int k = cfg.kernel_size;
    int f = cfg.fusion_channels;
    s1a.init("s1a", 3, c[0], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s1b.init("s1b", c[0], c[0], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s2a.init("s2a", c[0], c[1], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s2b.init("s2b", c[1], c[1], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s3a.init("s3a", c[1], c[2], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s3b.init("s3b", c[2], c[2], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s4a.init("s4a", c[2], c[3], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    s4b.init("s4b", c[3], c[3], k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    deep1.init("deep1", c[3], c[3], k, cfg.deep_dilation, cfg.bn_eps, cfg.bn_momentum, rng);
    deep2.init("deep2", c[3], c[3], k, cfg.deep_dilation, cfg.bn_eps, cfg.bn_momentum, rng);
    up_a.init("up_a", c[1], f, 1, 0, 1, &rng);
    up_b.init("up_b", c[2], f, 2, rng);
    up_c.init("up_c", c[3], f, 4, rng);
    up_d.init("up_d", c[3], f, 4, rng);
    fuse.init("fuse", 4 * f, f, 1, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    cls_a.init("cls_a", f, cfg.head_channels, k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    cls_b.init("cls_b", cfg.head_channels, 1, 1, 0, 1, &rng);
    loc_a.init("loc_a", f, cfg.head_channels, k, 1, cfg.bn_eps, cfg.bn_momentum, rng);
    // Regression output starts at zero: sigmoid(0) = 0.5, Scale&Shift(0.5) = 0.
    loc_b.init("loc_b", cfg.head_channels, 8, 1, 0, 1, nullptr);
  }

  template <typename Self, typename Fn>
  static void visit_units(Self& self, Fn&& fn) {
    fn(self.s1a);
    fn(self.s1b);
    fn(self.s2a);
    fn(self.s2b);
    fn(self.s3a);
    fn(self.s3b);
    fn(self.s4a);
    fn(self.s4b);
    fn(self.deep1);
    fn(self.deep2);
  }

  std::vector<ParamBlock*> params() {
    std::vector<ParamBlock*> out;
    auto unit = [&](ConvUnit& u) {
      out.push_back(&u.conv.w);
      out.push_back(&u.conv.b);
      out.push_back(&u.bn.gamma);
      out.push_back(&u.bn.beta);
    };
    visit_units(*this, unit);
    out.push_back(&up_a.w);
    out.push_back(&up_a.b);
    out.push_back(&up_b.w);
    out.push_back(&up_b.b);
    out.push_back(&up_c.w);
    out.push_back(&up_c.b);
    out.push_back(&up_d.w);
    out.push_back(&up_d.b);
    unit(fuse);
    unit(cls_a);
    out.push_back(&cls_b.w);
    out.push_back(&cls_b.b);
    unit(loc_a);
    out.push_back(&loc_b.w);
    out.push_back(&loc_b.b);
    return out;
  }

  std::vector<std::pair<std::string, Tensor*>> state_entries() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (ParamBlock* p : params()) out.emplace_back(p->name, &p->value);
    auto stats = [&](ConvUnit& u, const std::string& name) {
      out.emplace_back(name + ".bn.running_mean", &u.bn.running_mean);
      out.emplace_back(name + ".bn.running_var", &u.bn.running_var);
    };
    stats(s1a, "s1a");
    stats(s1b, "s1b");
    stats(s2a, "s2a");
    stats(s2b, "s2b");
    stats(s3a, "s3a");
    stats(s3b, "s3b");
    stats(s4a, "s4a");
    stats(s4b, "s4b");
    stats(deep1, "deep1");
    stats(deep2, "deep2");
    stats(fuse, "fuse");
    stats(cls_a, "cls_a");
    stats(loc_a, "loc_a");
    return out;
  }
};

NetworkModel::NetworkModel() : impl_(std::make_unique<Impl>()) {}
NetworkModel::NetworkModel(NetworkModel&&) noexcept = default;
NetworkModel& NetworkModel::operator=(NetworkModel&&) noexcept = default;
NetworkModel::~NetworkModel() = default;

int NetworkModel::receptive_field(const NetworkConfig& cfg) {
  int rf = 1, jump = 1;
  auto conv = [&](int dilation) { rf += (cfg.kernel_size - 1) * dilation * jump; };
  for (int stage = 0; stage < 4; ++stage) {
    conv(1);
    conv(1);
    rf += jump;  // 2x2 pool
    jump *= 2;
  }
  conv(cfg.deep_dilation);
  conv(cfg.deep_dilation);
  return rf;
}

NetworkModel NetworkModel::build(const NetworkConfig& cfg, Rng& rng) {
  if (cfg.input_size <= 0 || cfg.input_size % 16 != 0) {
    throw ConfigError("input size must be a positive multiple of 16");
  }
  if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) {
    throw ConfigError("kernel size must be odd");
  }
  for (int c : cfg.stage_channels) {
    if (c < 1) throw ConfigError("stage channels must be >= 1");
  }
  if (cfg.fusion_channels < 1 || cfg.head_channels < 1 || cfg.deep_dilation < 1) {
    throw ConfigError("channel counts and dilation must be >= 1");
  }
  int rf = receptive_field(cfg);
  if (rf <= cfg.input_size) {
    throw ConfigError("receptive field " + std::to_string(rf) +
                      " does not exceed input size " + std::to_string(cfg.input_size));
  }
  NetworkModel m;
  m.impl_->cfg = cfg;
  m.impl_->build_layers(rng);
  return m;
}

NetworkOutput NetworkModel::forward(const Tensor& batch, bool training) {
  Impl& im = *impl_;
  int S = im.cfg.input_size;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != S || batch.dim(3) != S) {
    throw ShapeMismatch("network input must be [B,3," + std::to_string(S) + "," +
                        std::to_string(S) + "], got " + batch.shape_str());
  }
  Tensor t = im.s1b.forward(im.s1a.forward(batch, training), training);
  t = im.p1.forward(t);
  t = im.s2b.forward(im.s2a.forward(t, training), training);
  Tensor a = im.p2.forward(t);
  t = im.s3b.forward(im.s3a.forward(a, training), training);
  Tensor b = im.p3.forward(t);
  t = im.s4b.forward(im.s4a.forward(b, training), training);
  Tensor c = im.p4.forward(t);
  Tensor d = im.deep2.forward(im.deep1.forward(c, training), training);

  Tensor ua = im.up_a.forward(a, training);
  Tensor ub = im.up_b.forward(b, training);
  Tensor uc = im.up_c.forward(c, training);
  Tensor ud = im.up_d.forward(d, training);
  Tensor fused = im.fuse.forward(concat_channels({&ua, &ub, &uc, &ud}), training);

  NetworkOutput out;
  out.cls = sigmoid_forward(im.cls_b.forward(im.cls_a.forward(fused, training), training));
  out.loc_raw = sigmoid_forward(im.loc_b.forward(im.loc_a.forward(fused, training), training));
  out.loc = scale_shift_forward(out.loc_raw);
  if (training) {
    im.cls_sig_y = out.cls;
    im.loc_sig_y = out.loc_raw;
  }
  return out;
}

void NetworkModel::backward(const Tensor& grad_cls, const Tensor& grad_loc_raw) {
  Impl& im = *impl_;
  Tensor g_cls = im.cls_a.backward(im.cls_b.backward(sigmoid_backward(grad_cls, im.cls_sig_y)));
  Tensor g_loc = im.loc_a.backward(im.loc_b.backward(sigmoid_backward(grad_loc_raw, im.loc_sig_y)));
  Tensor g_fused = im.fuse.backward(add(g_cls, g_loc));

  int f = im.cfg.fusion_channels;
  std::vector<Tensor> parts = split_channels(g_fused, {f, f, f, f});
  Tensor ga = im.up_a.backward(parts[0]);
  Tensor gb = im.up_b.backward(parts[1]);
  Tensor gc = im.up_c.backward(parts[2]);
  Tensor gd = im.up_d.backward(parts[3]);

  gc = add(gc, im.deep1.backward(im.deep2.backward(gd)));
  Tensor g = im.p4.backward(gc);
  gb = add(gb, im.s4a.backward(im.s4b.backward(g)));
  g = im.p3.backward(gb);
  ga = add(ga, im.s3a.backward(im.s3b.backward(g)));
  g = im.p2.backward(ga);
  g = im.s2a.backward(im.s2b.backward(g));
  g = im.p1.backward(g);
  im.s1a.backward(im.s1b.backward(g));
}

std::vector<ParamBlock*> NetworkModel::params() { return impl_->params(); }

std::vector<std::pair<std::string, Tensor*>> NetworkModel::state_entries() {
  return impl_->state_entries();
}

std::vector<std::pair<std::string, const Tensor*>> NetworkModel::state_entries() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<NetworkModel*>(this)->impl_->state_entries()) {
    out.emplace_back(name, t);
  }
  return out;
}

int64_t NetworkModel::parameter_count() const {
  int64_t n = 0;
  for (ParamBlock* p : const_cast<NetworkModel*>(this)->impl_->params()) n += p->value.numel();
  return n;
}

const NetworkConfig& NetworkModel::config() const { return impl_->cfg; }

namespace {

nlohmann::json config_to_json(const NetworkConfig& c) {
  return nlohmann::json{{"input_size", c.input_size},
                        {"stage_channels", c.stage_channels},
                        {"fusion_channels", c.fusion_channels},
                        {"head_channels", c.head_channels},
                        {"kernel_size", c.kernel_size},
                        {"deep_dilation", c.deep_dilation},
                        {"bn_eps", c.bn_eps},
                        {"bn_momentum", c.bn_momentum}};
}

NetworkConfig config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.input_size = j.at("input_size").get<int>();
  auto ch = j.at("stage_channels").get<std::vector<int>>();
  if (ch.size() != 4) throw ConfigError("stage_channels must have 4 entries");
  std::copy(ch.begin(), ch.end(), c.stage_channels.begin());
  c.fusion_channels = j.at("fusion_channels").get<int>();
  c.head_channels = j.at("head_channels").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.deep_dilation = j.at("deep_dilation").get<int>();
  c.bn_eps = j.at("bn_eps").get<float>();
  c.bn_momentum = j.at("bn_momentum").get<float>();
  return c;
}

}  // namespace

void NetworkModel::save(const std::string& stem) const {
  std::ofstream jf(stem + ".json");
  if (!jf) throw IoError("cannot write " + stem + ".json");
  jf << config_to_json(impl_->cfg).dump(2) << "\n";
  save_weights(state_entries(), stem + ".manifest", stem + ".bin");
}

NetworkModel NetworkModel::load(const std::string& stem) {
  std::ifstream jf(stem + ".json");
  if (!jf) throw IoError("cannot read " + stem + ".json");
  nlohmann::json j;
  jf >> j;
  Rng dummy(0);
  NetworkModel m = build(config_from_json(j), dummy);
  load_weights(m.state_entries(), stem + ".manifest", stem + ".bin");
  return m;
}

}  // namespace textdet
