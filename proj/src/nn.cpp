#include "c3dm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "c3dm/error.hpp"

namespace c3dm {

namespace {

// --- kernels ---------------------------------------------------------------

// 3x3, stride 2, pad 1. Input planar [C][H][W]; col [P][C*9], P = oh*ow.
void im2col_3x3s2(const double* in, int c_in, int h, int w, Tensor& col) {
  const int oh = h / 2, ow = w / 2;
  const int j_stride = c_in * 9;
  double* out = col.ptr();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = out + (static_cast<std::size_t>(oy) * ow + ox) * j_stride;
      for (int ic = 0; ic < c_in; ++ic) {
        const double* plane = in + static_cast<std::size_t>(ic) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          double* dst = row + (ic * 3 + ky) * 3;
          if (iy < 0 || iy >= h) {
            dst[0] = dst[1] = dst[2] = 0.0;
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * w;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            dst[kx] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_3x3s2(const Tensor& dcol, int c_in, int h, int w, double* din) {
  const int oh = h / 2, ow = w / 2;
  const int j_stride = c_in * 9;
  std::fill(din, din + static_cast<std::size_t>(c_in) * h * w, 0.0);
  const double* src = dcol.ptr();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* row = src + (static_cast<std::size_t>(oy) * ow + ox) * j_stride;
      for (int ic = 0; ic < c_in; ++ic) {
        double* plane = din + static_cast<std::size_t>(ic) * h * w;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= h) continue;
          const double* s = row + (ic * 3 + ky) * 3;
          double* d = plane + static_cast<std::size_t>(iy) * w;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (ix >= 0 && ix < w) d[ix] += s[kx];
          }
        }
      }
    }
  }
}

// out[oc][p] = b[oc] + dot(w[oc,:], col[p,:])
void conv_apply(const Tensor& w, const Tensor& b, const Tensor& col, int p_count,
                int j_dim, int c_out, Tensor& out) {
  const double* wp = w.ptr();
  const double* cp = col.ptr();
  double* op = out.ptr();
  for (int p = 0; p < p_count; ++p) {
    const double* crow = cp + static_cast<std::size_t>(p) * j_dim;
    for (int oc = 0; oc < c_out; ++oc) {
      const double* wrow = wp + static_cast<std::size_t>(oc) * j_dim;
      double acc = b[oc];
      for (int j = 0; j < j_dim; ++j) acc += wrow[j] * crow[j];
      op[static_cast<std::size_t>(oc) * p_count + p] = acc;
    }
  }
}

// Backward for one conv layer. d_post is the gradient at the post-ReLU
// output; the ReLU mask comes from `post`. Writes dcol (caller runs col2im).
void conv_backward(const Tensor& w, const Tensor& col, const Tensor& post,
                   const Tensor& d_post, int p_count, int j_dim, int c_out,
                   Tensor& dw, Tensor& db, Tensor* dcol) {
  const double* wp = w.ptr();
  const double* cp = col.ptr();
  if (dcol) dcol->fill(0.0);
  for (int p = 0; p < p_count; ++p) {
    const double* crow = cp + static_cast<std::size_t>(p) * j_dim;
    double* dcrow = dcol ? dcol->ptr() + static_cast<std::size_t>(p) * j_dim : nullptr;
    for (int oc = 0; oc < c_out; ++oc) {
      const std::size_t o = static_cast<std::size_t>(oc) * p_count + p;
      if (post[o] <= 0.0) continue;  // ReLU gate
      const double g = d_post[o];
      if (g == 0.0) continue;
      db[oc] += g;
      double* dwrow = dw.ptr() + static_cast<std::size_t>(oc) * j_dim;
      for (int j = 0; j < j_dim; ++j) dwrow[j] += g * crow[j];
      if (dcrow) {
        const double* wrow = wp + static_cast<std::size_t>(oc) * j_dim;
        for (int j = 0; j < j_dim; ++j) dcrow[j] += g * wrow[j];
      }
    }
  }
}

void linear_forward(const Tensor& w, const Tensor& b, const double* x, int in_dim,
                    int out_dim, double* y) {
  const double* wp = w.ptr();
  for (int i = 0; i < out_dim; ++i) {
    const double* row = wp + static_cast<std::size_t>(i) * in_dim;
    double acc = b[i];
    for (int j = 0; j < in_dim; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

// dx may be null when the input is a leaf.
void linear_backward(const Tensor& w, const double* x, const double* dy,
                     int in_dim, int out_dim, Tensor& dw, Tensor& db, double* dx) {
  const double* wp = w.ptr();
  if (dx) std::fill(dx, dx + in_dim, 0.0);
  for (int i = 0; i < out_dim; ++i) {
    const double g = dy[i];
    if (g == 0.0) continue;
    db[i] += g;
    double* dwrow = dw.ptr() + static_cast<std::size_t>(i) * in_dim;
    for (int j = 0; j < in_dim; ++j) dwrow[j] += g * x[j];
    if (dx) {
      const double* row = wp + static_cast<std::size_t>(i) * in_dim;
      for (int j = 0; j < in_dim; ++j) dx[j] += g * row[j];
    }
  }
}

void relu_inplace(Tensor& t) {
  for (auto& v : t.data) v = v > 0.0 ? v : 0.0;
}

}  // namespace

// --- config / params -------------------------------------------------------

void ModelConfig::validate() const {
  if (conv_channels.empty()) throw ConfigError("ModelConfig: no conv layers");
  const int div = 1 << conv_channels.size();
  if (image_h % div != 0 || image_w % div != 0)
    throw ConfigError("ModelConfig: image dims must divide by 2^n_conv");
  if (conv_out_h() < 1 || conv_out_w() < 1)
    throw ConfigError("ModelConfig: conv stack collapses the image");
  if (time_enc_dim % 2 != 0)
    throw ConfigError("ModelConfig: time_enc_dim must be even");
  if (chains.empty()) throw ConfigError("ModelConfig: no chains");
  for (const auto& c : chains)
    if (c.dim < 1 || c.name.empty())
      throw ConfigError("ModelConfig: bad chain spec");
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ShapeError("ParamSet: missing tensor " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ShapeError("ParamSet: missing tensor " + name);
  return it->second;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  for (const auto& [name, t] : tensors) z.tensors.emplace(name, Tensor(t.dims));
  return z;
}

std::size_t ParamSet::total_params() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.numel();
  return n;
}

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet p;

  auto he_uniform = [&](std::vector<int> dims, int fan_in) {
    Tensor t(std::move(dims));
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : t.data) v = rng.uniform(-limit, limit);
    return t;
  };

  int c_prev = 3;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const int c_out = cfg.conv_channels[i];
    const std::string base = "enc.conv" + std::to_string(i);
    p.tensors.emplace(base + ".w", he_uniform({c_out, c_prev, 3, 3}, c_prev * 9));
    p.tensors.emplace(base + ".b", Tensor({c_out}));
    c_prev = c_out;
  }
  p.tensors.emplace("enc.fc0.w",
                    he_uniform({cfg.enc_hidden, cfg.flatten_dim()}, cfg.flatten_dim()));
  p.tensors.emplace("enc.fc0.b", Tensor({cfg.enc_hidden}));
  p.tensors.emplace("enc.fc1.w", he_uniform({cfg.embed_dim, cfg.enc_hidden}, cfg.enc_hidden));
  p.tensors.emplace("enc.fc1.b", Tensor({cfg.embed_dim}));

  for (std::size_t c = 0; c < cfg.chains.size(); ++c) {
    const std::string base = "den." + cfg.chains[c].name;
    const int in = cfg.denoiser_input_dim(static_cast<int>(c));
    const int hid = cfg.denoiser_hidden;
    const int out = cfg.chains[c].dim;
    p.tensors.emplace(base + ".fc0.w", he_uniform({hid, in}, in));
    p.tensors.emplace(base + ".fc0.b", Tensor({hid}));
    p.tensors.emplace(base + ".fc1.w", he_uniform({hid, hid}, hid));
    p.tensors.emplace(base + ".fc1.b", Tensor({hid}));
    p.tensors.emplace(base + ".fc2.w", he_uniform({hid, hid}, hid));
    p.tensors.emplace(base + ".fc2.b", Tensor({hid}));
    // Output layer starts at zero so the initial prediction is the prior mean.
    p.tensors.emplace(base + ".fc3.w", Tensor({out, hid}));
    p.tensors.emplace(base + ".fc3.b", Tensor({out}));
  }
  return p;
}

std::vector<double> time_features(double t, int dim) {
  std::vector<double> f(dim);
  if (dim == 0) return f;
  // Square-root warp before the frequency ladder: the reverse-process
  // coefficients vary like 1/sqrt(t) near zero, so resolution is
  // concentrated where the regression target actually curves.
  const double u = std::sqrt(std::max(0.0, t));
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq =
        half > 1 ? std::pow(100.0, static_cast<double>(i) / (half - 1)) : 1.0;
    f[2 * i] = std::sin(freq * u);
    f[2 * i + 1] = std::cos(freq * u);
  }
  return f;
}

// --- encoder ----------------------------------------------------------------

std::vector<double> encoder_forward(const ParamSet& params, const ModelConfig& cfg,
                                    const Image& o, EncoderActs* acts) {
  if (o.h != cfg.image_h || o.w != cfg.image_w)
    throw ShapeError("encoder_forward: image " + std::to_string(o.h) + "x" +
                     std::to_string(o.w) + ", expected " +
                     std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w));

  EncoderActs local;
  EncoderActs& a = acts ? *acts : local;
  const bool keep = acts != nullptr;

  // Interleaved HxWx3 -> planar [3][H][W] doubles.
  a.input = Tensor({3, cfg.image_h, cfg.image_w});
  {
    const std::size_t hw = static_cast<std::size_t>(cfg.image_h) * cfg.image_w;
    for (std::size_t px = 0; px < hw; ++px)
      for (int c = 0; c < 3; ++c)
        a.input[c * hw + px] = static_cast<double>(o.data[px * 3 + c]);
  }

  a.cols.clear();
  a.conv_post.clear();
  const Tensor* cur = &a.input;
  int h = cfg.image_h, w = cfg.image_w, c_in = 3;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const int c_out = cfg.conv_channels[i];
    const int oh = h / 2, ow = w / 2, p_count = oh * ow, j_dim = c_in * 9;
    Tensor col({p_count, j_dim});
    im2col_3x3s2(cur->ptr(), c_in, h, w, col);
    Tensor out({c_out, oh, ow});
    const std::string base = "enc.conv" + std::to_string(i);
    conv_apply(params.at(base + ".w"), params.at(base + ".b"), col, p_count, j_dim,
               c_out, out);
    relu_inplace(out);
    a.cols.push_back(keep ? std::move(col) : Tensor());
    a.conv_post.push_back(std::move(out));
    cur = &a.conv_post.back();
    h = oh;
    w = ow;
    c_in = c_out;
  }

  Tensor fc0({cfg.enc_hidden});
  linear_forward(params.at("enc.fc0.w"), params.at("enc.fc0.b"), cur->ptr(),
                 cfg.flatten_dim(), cfg.enc_hidden, fc0.ptr());
  relu_inplace(fc0);
  Tensor emb({cfg.embed_dim});
  linear_forward(params.at("enc.fc1.w"), params.at("enc.fc1.b"), fc0.ptr(),
                 cfg.enc_hidden, cfg.embed_dim, emb.ptr());
  relu_inplace(emb);

  std::vector<double> result(emb.data.begin(), emb.data.end());
  a.fc0_post = std::move(fc0);
  a.embed = std::move(emb);
  return result;
}

void encoder_backward(const ParamSet& params, const ModelConfig& cfg,
                      const EncoderActs& acts, const std::vector<double>& d_embed,
                      ParamSet& grads) {
  if (static_cast<int>(d_embed.size()) != cfg.embed_dim)
    throw ShapeError("encoder_backward: bad d_embed size");

  // fc1 (ReLU gate from embed).
  std::vector<double> d_emb_pre(cfg.embed_dim);
  for (int i = 0; i < cfg.embed_dim; ++i)
    d_emb_pre[i] = acts.embed[i] > 0.0 ? d_embed[i] : 0.0;
  std::vector<double> d_fc0(cfg.enc_hidden);
  linear_backward(params.at("enc.fc1.w"), acts.fc0_post.ptr(), d_emb_pre.data(),
                  cfg.enc_hidden, cfg.embed_dim, grads.at("enc.fc1.w"),
                  grads.at("enc.fc1.b"), d_fc0.data());

  // fc0.
  for (int i = 0; i < cfg.enc_hidden; ++i)
    if (acts.fc0_post[i] <= 0.0) d_fc0[i] = 0.0;
  const Tensor& last_post = acts.conv_post.back();
  std::vector<double> d_flat(cfg.flatten_dim());
  linear_backward(params.at("enc.fc0.w"), last_post.ptr(), d_fc0.data(),
                  cfg.flatten_dim(), cfg.enc_hidden, grads.at("enc.fc0.w"),
                  grads.at("enc.fc0.b"), d_flat.data());

  // Conv stack, last to first. d_flat is the gradient at the last post-ReLU
  // conv output (planar layout matches the flatten order).
  Tensor d_post(last_post.dims, std::move(d_flat));
  for (int i = static_cast<int>(cfg.conv_channels.size()) - 1; i >= 0; --i) {
    const int c_out = cfg.conv_channels[i];
    const int c_in = i == 0 ? 3 : cfg.conv_channels[i - 1];
    const Tensor& post = acts.conv_post[i];
    const int oh = post.dims[1], ow = post.dims[2];
    const int p_count = oh * ow, j_dim = c_in * 9;
    const std::string base = "enc.conv" + std::to_string(i);
    const bool need_dinput = i > 0;  // the image itself is a leaf
    Tensor dcol;
    if (need_dinput) dcol = Tensor({p_count, j_dim});
    conv_backward(params.at(base + ".w"), acts.cols[i], post, d_post, p_count,
                  j_dim, c_out, grads.at(base + ".w"), grads.at(base + ".b"),
                  need_dinput ? &dcol : nullptr);
    if (need_dinput) {
      const Tensor& prev_post = acts.conv_post[i - 1];
      Tensor d_prev(prev_post.dims);
      col2im_3x3s2(dcol, c_in, prev_post.dims[1], prev_post.dims[2], d_prev.ptr());
      d_post = std::move(d_prev);  // ReLU gate applied inside conv_backward
    }
  }
}

// --- denoiser ---------------------------------------------------------------

std::vector<double> denoiser_forward(const ParamSet& params, const ModelConfig& cfg,
                                     int chain, const std::vector<double>& o,
                                     const std::vector<double>& a_noisy, double t,
                                     DenoiserActs* acts) {
  if (chain < 0 || chain >= static_cast<int>(cfg.chains.size()))
    throw ShapeError("denoiser_forward: bad chain index");
  if (static_cast<int>(o.size()) != cfg.embed_dim)
    throw ShapeError("denoiser_forward: embedding size " + std::to_string(o.size()) +
                     ", expected " + std::to_string(cfg.embed_dim));
  if (static_cast<int>(a_noisy.size()) != cfg.chains[chain].dim)
    throw ShapeError("denoiser_forward: action size " + std::to_string(a_noisy.size()) +
                     ", expected " + std::to_string(cfg.chains[chain].dim));

  DenoiserActs local;
  DenoiserActs& ax = acts ? *acts : local;
  ax.input.clear();
  ax.input.reserve(cfg.denoiser_input_dim(chain));
  ax.input.insert(ax.input.end(), o.begin(), o.end());
  ax.input.insert(ax.input.end(), a_noisy.begin(), a_noisy.end());
  const auto tf = time_features(t, cfg.time_enc_dim);
  ax.input.insert(ax.input.end(), tf.begin(), tf.end());

  const std::string base = "den." + cfg.chains[chain].name;
  const int hid = cfg.denoiser_hidden;
  const int in_dim = static_cast<int>(ax.input.size());

  ax.pre1 = Tensor({hid});
  linear_forward(params.at(base + ".fc0.w"), params.at(base + ".fc0.b"),
                 ax.input.data(), in_dim, hid, ax.pre1.ptr());
  ax.h1 = ax.pre1;
  relu_inplace(ax.h1);

  ax.pre2 = Tensor({hid});
  linear_forward(params.at(base + ".fc1.w"), params.at(base + ".fc1.b"),
                 ax.h1.ptr(), hid, hid, ax.pre2.ptr());
  ax.h2 = ax.pre2;
  relu_inplace(ax.h2);
  for (int i = 0; i < hid; ++i) ax.h2[i] += ax.h1[i];  // skip

  ax.pre3 = Tensor({hid});
  linear_forward(params.at(base + ".fc2.w"), params.at(base + ".fc2.b"),
                 ax.h2.ptr(), hid, hid, ax.pre3.ptr());
  ax.h3 = ax.pre3;
  relu_inplace(ax.h3);
  for (int i = 0; i < hid; ++i) ax.h3[i] += ax.h2[i];  // skip

  std::vector<double> y(cfg.chains[chain].dim);
  linear_forward(params.at(base + ".fc3.w"), params.at(base + ".fc3.b"),
                 ax.h3.ptr(), hid, cfg.chains[chain].dim, y.data());
  return y;
}

std::vector<double> denoiser_backward(const ParamSet& params, const ModelConfig& cfg,
                                      int chain, const DenoiserActs& acts,
                                      const std::vector<double>& d_out,
                                      ParamSet& grads) {
  const std::string base = "den." + cfg.chains[chain].name;
  const int hid = cfg.denoiser_hidden;
  const int out_dim = cfg.chains[chain].dim;
  const int in_dim = static_cast<int>(acts.input.size());
  if (static_cast<int>(d_out.size()) != out_dim)
    throw ShapeError("denoiser_backward: bad d_out size");

  std::vector<double> dh3(hid);
  linear_backward(params.at(base + ".fc3.w"), acts.h3.ptr(), d_out.data(), hid,
                  out_dim, grads.at(base + ".fc3.w"), grads.at(base + ".fc3.b"),
                  dh3.data());

  std::vector<double> dpre3(hid);
  for (int i = 0; i < hid; ++i) dpre3[i] = acts.pre3[i] > 0.0 ? dh3[i] : 0.0;
  std::vector<double> dh2(hid);
  linear_backward(params.at(base + ".fc2.w"), acts.h2.ptr(), dpre3.data(), hid,
                  hid, grads.at(base + ".fc2.w"), grads.at(base + ".fc2.b"),
                  dh2.data());
  for (int i = 0; i < hid; ++i) dh2[i] += dh3[i];  // skip branch

  std::vector<double> dpre2(hid);
  for (int i = 0; i < hid; ++i) dpre2[i] = acts.pre2[i] > 0.0 ? dh2[i] : 0.0;
  std::vector<double> dh1(hid);
  linear_backward(params.at(base + ".fc1.w"), acts.h1.ptr(), dpre2.data(), hid,
                  hid, grads.at(base + ".fc1.w"), grads.at(base + ".fc1.b"),
                  dh1.data());
  for (int i = 0; i < hid; ++i) dh1[i] += dh2[i];  // skip branch

  std::vector<double> dpre1(hid);
  for (int i = 0; i < hid; ++i) dpre1[i] = acts.pre1[i] > 0.0 ? dh1[i] : 0.0;
  std::vector<double> dx(in_dim);
  linear_backward(params.at(base + ".fc0.w"), acts.input.data(), dpre1.data(),
                  in_dim, hid, grads.at(base + ".fc0.w"), grads.at(base + ".fc0.b"),
                  dx.data());
  return dx;
}

// --- loss -------------------------------------------------------------------

double loss_and_grads(const ParamSet& params, const ModelConfig& cfg,
                      const std::vector<LossItem>& batch, ParamSet& grads) {
  if (batch.empty()) throw DomainError("loss_and_grads: empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::size_t i = 0;
  while (i < batch.size()) {
    std::size_t j = i;
    while (j < batch.size() && batch[j].image == batch[i].image) ++j;

    EncoderActs eacts;
    const auto o = encoder_forward(params, cfg, *batch[i].image, &eacts);
    std::vector<double> d_embed(cfg.embed_dim, 0.0);
    for (std::size_t k = i; k < j; ++k) {
      const LossItem& item = batch[k];
      DenoiserActs dacts;
      const auto y =
          denoiser_forward(params, cfg, item.chain, o, item.a_noisy, item.t, &dacts);
      if (y.size() != item.eps_target.size())
        throw ShapeError("loss_and_grads: eps target size mismatch");
      std::vector<double> dy(y.size());
      for (std::size_t q = 0; q < y.size(); ++q) {
        const double r = y[q] - item.eps_target[q];
        total += r * r * weight;
        dy[q] = 2.0 * r * weight;
      }
      const auto dx = denoiser_backward(params, cfg, item.chain, dacts, dy, grads);
      for (int q = 0; q < cfg.embed_dim; ++q) d_embed[q] += dx[q];
    }
    encoder_backward(params, cfg, eacts, d_embed, grads);
    i = j;
  }
  return total;
}

double loss_only(const ParamSet& params, const ModelConfig& cfg,
                 const std::vector<LossItem>& batch) {
  if (batch.empty()) throw DomainError("loss_only: empty batch");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  std::size_t i = 0;
  while (i < batch.size()) {
    std::size_t j = i;
    while (j < batch.size() && batch[j].image == batch[i].image) ++j;
    const auto o = encoder_forward(params, cfg, *batch[i].image);
    for (std::size_t k = i; k < j; ++k) {
      const LossItem& item = batch[k];
      const auto y = denoiser_forward(params, cfg, item.chain, o, item.a_noisy, item.t);
      for (std::size_t q = 0; q < y.size(); ++q) {
        const double r = y[q] - item.eps_target[q];
        total += r * r * weight;
      }
    }
    i = j;
  }
  return total;
}

// --- adam -------------------------------------------------------------------

AdamState AdamState::init(const ParamSet& params, AdamConfig cfg) {
  AdamState st;
  st.cfg = cfg;
  for (const auto& [name, t] : params.tensors) {
    st.m.emplace(name, Tensor(t.dims));
    st.v.emplace(name, Tensor(t.dims));
  }
  return st;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state) {
  state.step += 1;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (auto& [name, p] : params.tensors) {
    const Tensor& g = grads.at(name);
    if (!g.same_shape(p))
      throw ShapeError("adam_step: grad shape mismatch for " + name);
    auto mit = state.m.find(name);
    auto vit = state.v.find(name);
    if (mit == state.m.end() || vit == state.v.end())
      throw ShapeError("adam_step: missing moment state for " + name);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= state.cfg.lr * mh / (std::sqrt(vh) + state.cfg.eps_stab);
    }
  }
}

// --- weight file format -----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', '3', 'D', 'M', 'W', 'T', 'S', '1'};

struct Reader {
  std::ifstream in;
  std::size_t offset = 0;

  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw IoError("load_params: cannot open " + path);
  }
  void read_raw(void* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw FormatError(std::string("truncated ") + what, offset);
    offset += n;
  }
  std::uint32_t read_u32(const char* what) {
    std::uint32_t v = 0;
    read_raw(&v, 4, what);
    return v;
  }
  bool at_eof() {
    return in.peek() == std::ifstream::traits_type::eof();
  }
};

}  // namespace

void save_params(const ParamSet& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_params: cannot open " + path);
  out.write(kMagic, 8);
  const std::uint32_t count = static_cast<std::uint32_t>(params.tensors.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& [name, t] : params.tensors) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&name_len), 4);
    out.write(name.data(), name_len);
    const std::uint32_t rank = static_cast<std::uint32_t>(t.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int d : t.dims) {
      const std::uint32_t dv = static_cast<std::uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&dv), 4);
    }
    std::vector<float> f(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) f[i] = static_cast<float>(t[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * 4));
  }
  if (!out) throw IoError("save_params: short write to " + path);
}

ParamSet load_params(const std::string& path) {
  Reader r(path);
  char magic[8];
  r.read_raw(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 7) != 0)
    throw FormatError("bad magic (not a C3DM weight file)", 0);
  if (magic[7] != kMagic[7])
    throw FormatError(std::string("unsupported weight format version '") +
                          magic[7] + "', expected '1'",
                      7);
  const std::uint32_t count = r.read_u32("tensor count");
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t name_off = r.offset;
    const std::uint32_t name_len = r.read_u32("name length");
    if (name_len == 0 || name_len > 4096)
      throw FormatError("implausible name length", name_off);
    std::string name(name_len, '\0');
    r.read_raw(name.data(), name_len, "name");
    const std::uint32_t rank = r.read_u32("rank");
    if (rank == 0 || rank > 8) throw FormatError("implausible rank", r.offset - 4);
    std::vector<int> dims(rank);
    std::size_t numel = 1;
    for (auto& d : dims) {
      const std::size_t dim_off = r.offset;
      const std::uint32_t dv = r.read_u32("dim");
      if (dv == 0 || dv > (1u << 28)) throw FormatError("implausible dim", dim_off);
      d = static_cast<int>(dv);
      numel *= dv;
      if (numel > (1ull << 31)) throw FormatError("tensor too large", dim_off);
    }
    std::vector<float> f(numel);
    r.read_raw(f.data(), numel * 4, "tensor data");
    Tensor t(dims);
    for (std::size_t k = 0; k < numel; ++k) t[k] = static_cast<double>(f[k]);
    if (!params.tensors.emplace(name, std::move(t)).second)
      throw FormatError("duplicate tensor name " + name, name_off);
  }
  if (!r.at_eof()) throw FormatError("trailing bytes after last tensor", r.offset);
  return params;
}

void save_checkpoint(const ParamSet& params, const AdamState& adam,
                     const std::string& path) {
  ParamSet all = params;
  for (const auto& [name, t] : adam.m) all.tensors.emplace("adam.m." + name, t);
  for (const auto& [name, t] : adam.v) all.tensors.emplace("adam.v." + name, t);
  Tensor step({1});
  step[0] = static_cast<double>(adam.step);
  all.tensors.emplace("adam.step", step);
  save_params(all, path);
}

Checkpoint load_checkpoint(const std::string& path, AdamConfig adam_cfg) {
  const ParamSet all = load_params(path);
  Checkpoint ck;
  for (const auto& [name, t] : all.tensors) {
    if (name.rfind("adam.", 0) == 0) continue;
    ck.params.tensors.emplace(name, t);
  }
  ck.adam = AdamState::init(ck.params, adam_cfg);
  if (all.has("adam.step")) {
    ck.has_adam = true;
    ck.adam.step = static_cast<long>(all.at("adam.step")[0]);
    for (auto& [name, t] : ck.adam.m) {
      if (all.has("adam.m." + name)) t = all.at("adam.m." + name);
    }
    for (auto& [name, t] : ck.adam.v) {
      if (all.has("adam.v." + name)) t = all.at("adam.v." + name);
    }
  }
  return ck;
}

}  // namespace c3dm
